//! Benchmark cost functions with analytic gradients.

mod double_well;
mod lj;
mod mlp;
mod multimodal;
mod sampling;

pub use double_well::DoubleWell;
pub use lj::{LennardJones, LjCluster};
pub use mlp::{Dataset, MlpRegularized, MlpShape, MlpSse};
pub use multimodal::Multimodal;
pub use sampling::{
    gen_sine_dataset, sample_initial_states, sample_uniform_states, InitialPrior, SineData,
    SineDatasetOptions,
};

/// A twice continuously differentiable cost `U: R^n -> R`.
///
/// Implementations signal points outside their domain (e.g. coincident atoms)
/// by returning a non-finite cost; callers treat that as a numerical failure.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn cost(&self, x: &[f64]) -> f64;

    /// Writes `grad U(x)` into `grad`, which has length `dim()`.
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    fn cost_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(x, grad);
        self.cost(x)
    }

    fn name(&self) -> String;
}

impl<P: Problem + ?Sized> Problem for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn cost(&self, x: &[f64]) -> f64 {
        (**self).cost(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (**self).gradient(x, grad)
    }
    fn cost_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).cost_and_gradient(x, grad)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn cost(&self, x: &[f64]) -> f64 {
        (**self).cost(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (**self).gradient(x, grad)
    }
    fn cost_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).cost_and_gradient(x, grad)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// Adds a constant `delta` to a cost. Gradients are untouched, so minimizers
/// and descent paths are unchanged; only the level of the cost moves, which
/// lets a target value of zero be used with costs that can go negative.
#[derive(Debug, Clone)]
pub struct Offset<P> {
    pub inner: P,
    pub delta: f64,
}

pub fn offset_cost<P: Problem>(inner: P, delta: f64) -> Offset<P> {
    Offset { inner, delta }
}

impl<P: Problem> Problem for Offset<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn cost(&self, x: &[f64]) -> f64 {
        self.inner.cost(x) + self.delta
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.inner.gradient(x, grad)
    }
    fn cost_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.inner.cost_and_gradient(x, grad) + self.delta
    }
    fn name(&self) -> String {
        format!("{}+{}", self.inner.name(), self.delta)
    }
}

/// `0.5 * |x|^2`. Used throughout the tests as the trivially convex case.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub dim: usize,
}

impl Problem for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn cost(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(x);
    }
    fn name(&self) -> String {
        format!("quadratic{}", self.dim)
    }
}

/// The Rosenbrock valley in two dimensions, minimum at (1, 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl Problem for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }
    fn cost(&self, x: &[f64]) -> f64 {
        let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
        a * a + 100.0 * b * b
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let b = x[1] - x[0] * x[0];
        grad[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * b;
        grad[1] = 200.0 * b;
    }
    fn name(&self) -> String {
        "rosenbrock".into()
    }
}
