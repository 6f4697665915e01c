use super::Problem;

/// `U(x) = x^4 - 16 x^2 + 5 x + 100` on the real line.
///
/// Two valleys separated by a local maximum near `x = 0.157`; the deeper one
/// has its minimum at `x = -2.9035`, the shallower one at `x = 2.7468`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

impl DoubleWell {
    pub fn value(x: f64) -> f64 {
        let x2 = x * x;
        x2 * x2 - 16.0 * x2 + 5.0 * x + 100.0
    }

    pub fn slope(x: f64) -> f64 {
        4.0 * x * x * x - 32.0 * x + 5.0
    }
}

impl Problem for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn cost(&self, x: &[f64]) -> f64 {
        Self::value(x[0])
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = Self::slope(x[0]);
    }
    fn name(&self) -> String {
        "double_well".into()
    }
}
