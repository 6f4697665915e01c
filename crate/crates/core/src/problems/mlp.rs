use super::Problem;
use crate::error::{ClmError, Result};

/// One-hidden-layer perceptron `y = w^T tanh(V u + beta)` with scalar output.
///
/// Parameters are stored as `theta = [w; V; beta]` with `V` row-major
/// (`V[j][l]` at offset `n_h + j * m + l`), for `n_h * (m + 2)` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden: usize,
}

impl MlpShape {
    pub fn new(input_dim: usize, hidden: usize) -> Self {
        Self { input_dim, hidden }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * (self.input_dim + 2)
    }

    fn v_offset(&self) -> usize {
        self.hidden
    }

    fn beta_offset(&self) -> usize {
        self.hidden * (1 + self.input_dim)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(ClmError::DimensionMismatch {
                expected: self.param_count(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn hidden_activations(&self, theta: &[f64], u: &[f64], out: &mut [f64]) {
        let m = self.input_dim;
        let v = &theta[self.v_offset()..self.beta_offset()];
        let beta = &theta[self.beta_offset()..];
        for (j, h) in out.iter_mut().enumerate() {
            let row = &v[j * m..(j + 1) * m];
            let a: f64 = row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + beta[j];
            *h = a.tanh();
        }
    }

    pub fn forward(&self, theta: &[f64], u: &[f64]) -> Result<f64> {
        self.check(theta)?;
        if u.len() != self.input_dim {
            return Err(ClmError::DimensionMismatch {
                expected: self.input_dim,
                found: u.len(),
            });
        }
        let mut h = vec![0.0; self.hidden];
        self.hidden_activations(theta, u, &mut h);
        Ok(theta[..self.hidden]
            .iter()
            .zip(&h)
            .map(|(w, h)| w * h)
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(ClmError::config(format!(
                "dataset has {} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.is_empty() {
            return Err(ClmError::config("dataset is empty"));
        }
        let m = inputs[0].len();
        if inputs.iter().any(|u| u.len() != m) {
            return Err(ClmError::config("dataset inputs have differing dimensions"));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Mean squared error of the network over this dataset.
    pub fn mse(&self, shape: &MlpShape, theta: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for (u, d) in self.inputs.iter().zip(&self.targets) {
            let e = shape.forward(theta, u)? - d;
            s += e * e;
        }
        Ok(s / self.len() as f64)
    }
}

/// Sum-squared training error `J = 0.5 sum (d_k - y_k)^2`.
#[derive(Debug, Clone)]
pub struct MlpSse {
    pub shape: MlpShape,
    pub data: Dataset,
}

impl MlpSse {
    pub fn new(shape: MlpShape, data: Dataset) -> Result<Self> {
        if data.input_dim() != shape.input_dim {
            return Err(ClmError::DimensionMismatch {
                expected: shape.input_dim,
                found: data.input_dim(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Backpropagation over the whole dataset. `grad` is overwritten.
    fn sse_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let shape = &self.shape;
        let (nh, m) = (shape.hidden, shape.input_dim);
        let (vo, bo) = (shape.v_offset(), shape.beta_offset());
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut h = vec![0.0; nh];
        let mut j_total = 0.0;
        for (u, d) in self.data.inputs.iter().zip(&self.data.targets) {
            shape.hidden_activations(theta, u, &mut h);
            let y: f64 = theta[..nh].iter().zip(&h).map(|(w, h)| w * h).sum();
            let e = y - d;
            j_total += 0.5 * e * e;
            for j in 0..nh {
                grad[j] += e * h[j];
                let delta = e * theta[j] * (1.0 - h[j] * h[j]);
                grad[bo + j] += delta;
                for l in 0..m {
                    grad[vo + j * m + l] += delta * u[l];
                }
            }
        }
        j_total
    }
}

impl Problem for MlpSse {
    fn dim(&self) -> usize {
        self.shape.param_count()
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        let mut h = vec![0.0; self.shape.hidden];
        let nh = self.shape.hidden;
        let mut j_total = 0.0;
        for (u, d) in self.data.inputs.iter().zip(&self.data.targets) {
            self.shape.hidden_activations(theta, u, &mut h);
            let y: f64 = theta[..nh].iter().zip(&h).map(|(w, h)| w * h).sum();
            j_total += 0.5 * (d - y) * (d - y);
        }
        j_total
    }

    fn gradient(&self, theta: &[f64], grad: &mut [f64]) {
        self.sse_and_gradient(theta, grad);
    }

    fn cost_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.sse_and_gradient(theta, grad)
    }

    fn name(&self) -> String {
        format!(
            "mlp_sse(m={},nh={},N={})",
            self.shape.input_dim,
            self.shape.hidden,
            self.data.len()
        )
    }
}

/// `zeta * J(theta) + mu/2 * theta^T theta`, the weight-decay baseline.
#[derive(Debug, Clone)]
pub struct MlpRegularized {
    pub sse: MlpSse,
    pub mu: f64,
    pub zeta: f64,
}

impl MlpRegularized {
    pub fn new(sse: MlpSse, mu: f64, zeta: f64) -> Result<Self> {
        if !(mu >= 0.0 && zeta >= 0.0) {
            return Err(ClmError::config(
                "regularization weights must be non-negative",
            ));
        }
        Ok(Self { sse, mu, zeta })
    }
}

impl Problem for MlpRegularized {
    fn dim(&self) -> usize {
        self.sse.dim()
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        let decay: f64 = theta.iter().map(|t| t * t).sum();
        self.zeta * self.sse.cost(theta) + 0.5 * self.mu * decay
    }

    fn gradient(&self, theta: &[f64], grad: &mut [f64]) {
        self.cost_and_gradient(theta, grad);
    }

    fn cost_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let j = self.sse.sse_and_gradient(theta, grad);
        let mut decay = 0.0;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = self.zeta * *g + self.mu * t;
            decay += t * t;
        }
        self.zeta * j + 0.5 * self.mu * decay
    }

    fn name(&self) -> String {
        format!("mlp_reg(mu={},zeta={})", self.mu, self.zeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_data() -> Dataset {
        Dataset::new(vec![vec![0.5], vec![-1.0], vec![2.0]], vec![0.1, -0.4, 0.9]).unwrap()
    }

    #[test]
    fn param_count_for_ten_hidden_units() {
        assert_eq!(MlpShape::new(1, 10).param_count(), 30);
    }

    #[test]
    fn zero_output_weights_give_zero() {
        let shape = MlpShape::new(2, 3);
        let mut theta = vec![0.7; shape.param_count()];
        theta[..3].iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(shape.forward(&theta, &[1.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_bias_only() {
        // theta = [w, V, beta]
        let shape = MlpShape::new(1, 1);
        let theta = [1.0, 0.0, 0.5f64.atanh()];
        let y = shape.forward(&theta, &[3.0]).unwrap();
        assert!((y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn row_major_layout() {
        // two hidden units, two inputs; only V[1][0] nonzero, output weight on unit 1
        let shape = MlpShape::new(2, 2);
        let mut theta = vec![0.0; shape.param_count()];
        theta[1] = 1.0; // w_1
        theta[2 + 2] = 0.25; // V[1][0]
        let y = shape.forward(&theta, &[2.0, 7.0]).unwrap();
        assert!((y - 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_bad_lengths() {
        let shape = MlpShape::new(1, 2);
        assert!(shape.forward(&[0.0; 5], &[1.0]).is_err());
        assert!(shape.forward(&[0.0; 6], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sse_values() {
        let one = Dataset::new(vec![vec![0.3]], vec![1.0]).unwrap();
        let p = MlpSse::new(MlpShape::new(1, 2), one).unwrap();
        assert_eq!(p.cost(&[0.0; 6]), 0.5);

        // perfect fit: targets generated by the network itself
        let shape = MlpShape::new(1, 2);
        let theta = [0.4, -1.2, 0.9, 0.3, 0.1, -0.2];
        let base = tiny_data();
        let targets = base
            .inputs
            .iter()
            .map(|u| shape.forward(&theta, u).unwrap())
            .collect();
        let fit = MlpSse::new(shape, Dataset::new(base.inputs.clone(), targets).unwrap()).unwrap();
        assert!(fit.cost(&theta).abs() < 1e-30);
    }

    #[test]
    fn regularized_reduces_to_sse() {
        let sse = MlpSse::new(MlpShape::new(1, 2), tiny_data()).unwrap();
        let theta = [0.4, -1.2, 0.9, 0.3, 0.1, -0.2];
        let reg = MlpRegularized::new(sse.clone(), 0.0, 1.0).unwrap();
        assert_eq!(reg.cost(&theta), sse.cost(&theta));
        let reg = MlpRegularized::new(sse.clone(), 2.0, 3.0).unwrap();
        assert_eq!(reg.cost(&[0.0; 6]), 3.0 * sse.cost(&[0.0; 6]));
        assert!(MlpRegularized::new(sse, -1.0, 1.0).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, 2.0]).is_err());
    }
}
