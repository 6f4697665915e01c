use super::Problem;

/// `U(x) = a/(2n) sum x_i^2 + 8n - 4n prod cos(w1 x_i) - 4n prod cos(w2 x_i)`.
///
/// Global minimum `U(0) = 0`. With the default parameters the landscape has a
/// lattice of local minima near points where every coordinate is a multiple
/// of pi.
#[derive(Debug, Clone, Copy)]
pub struct Multimodal {
    pub dim: usize,
    pub a: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl Multimodal {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            a: 0.01,
            omega1: 0.2,
            omega2: 1.0,
        }
    }
}

/// Adds `scale * d/dx_j prod_i cos(omega x_i)` to `grad`, using prefix and
/// suffix products so that zeros of the cosine are handled without division.
fn add_cos_product_gradient(
    x: &[f64],
    omega: f64,
    scale: f64,
    grad: &mut [f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    let n = x.len();
    scratch.clear();
    scratch.extend(x.iter().map(|&v| (omega * v).cos()));
    // suffix[j] = prod_{i > j} cos
    let mut suffix = vec![1.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] * scratch[j];
    }
    let mut prefix = 1.0;
    for j in 0..n {
        let others = prefix * suffix[j + 1];
        grad[j] += scale * (-omega * (omega * x[j]).sin()) * others;
        prefix *= scratch[j];
    }
    suffix[0]
}

impl Problem for Multimodal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cost(&self, x: &[f64]) -> f64 {
        let n = self.dim as f64;
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let p1: f64 = x.iter().map(|v| (self.omega1 * v).cos()).product();
        let p2: f64 = x.iter().map(|v| (self.omega2 * v).cos()).product();
        self.a / (2.0 * n) * sq + 8.0 * n - 4.0 * n * p1 - 4.0 * n * p2
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let n = self.dim as f64;
        for (g, v) in grad.iter_mut().zip(x) {
            *g = self.a / n * v;
        }
        let mut scratch = Vec::with_capacity(x.len());
        add_cos_product_gradient(x, self.omega1, -4.0 * n, grad, &mut scratch);
        add_cos_product_gradient(x, self.omega2, -4.0 * n, grad, &mut scratch);
    }

    fn name(&self) -> String {
        format!("multimodal{}", self.dim)
    }
}
