//! Finite-difference verification of the analytic gradients of every
//! registered problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::baselines::finite_diff_grad;
use crate::problems::{
    gen_sine_dataset, offset_cost, DoubleWell, LennardJones, MlpRegularized, MlpShape, MlpSse,
    Multimodal, Problem, SineDatasetOptions,
};

pub const DEFAULT_POINTS: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

type Sampler = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// A problem plus a sampler of points inside its smooth domain.
pub struct GradcheckCase {
    pub problem: Box<dyn Problem>,
    pub sampler: Sampler,
}

impl GradcheckCase {
    pub fn new(problem: Box<dyn Problem>, sampler: Sampler) -> Self {
        Self { problem, sampler }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub points: usize,
    pub worst_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub cases: Vec<CaseReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// `|g - g_fd| / max(|g|, |g_fd|)` in the Euclidean norm.
pub fn relative_gradient_error<P: Problem + ?Sized>(p: &P, x: &[f64]) -> f64 {
    let mut g = vec![0.0; x.len()];
    p.gradient(x, &mut g);
    let fd = finite_diff_grad(p, x);
    let diff = g
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = g
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn check_case(case: &GradcheckCase, points: usize, tolerance: f64, seed: u64) -> CaseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = (case.sampler)(&mut rng);
        let e = relative_gradient_error(&*case.problem, &x);
        // NaN must count as a failure
        worst = if e.is_nan() { f64::NAN } else { worst.max(e) };
        if worst.is_nan() {
            break;
        }
    }
    CaseReport {
        name: case.problem.name(),
        points,
        worst_rel_error: worst,
        passed: worst < tolerance,
    }
}

pub fn run_suite(
    cases: &[GradcheckCase],
    points: usize,
    tolerance: f64,
    seed: u64,
) -> GradcheckReport {
    let cases = cases
        .iter()
        .enumerate()
        .map(|(i, c)| check_case(c, points, tolerance, seed.wrapping_add(i as u64)))
        .collect();
    GradcheckReport { tolerance, cases }
}

fn uniform_box(n: usize, half: f64) -> Sampler {
    Box::new(move |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-half..half)).collect())
}

/// Random cluster in a cube, rejecting configurations with any pair closer
/// than `min_dist`.
pub fn random_cluster(atoms: usize, side: f64, min_dist: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut coords: Vec<f64> = Vec::with_capacity(3 * atoms);
    while coords.len() < 3 * atoms {
        let cand = [
            rng.gen_range(0.0..side),
            rng.gen_range(0.0..side),
            rng.gen_range(0.0..side),
        ];
        let ok = coords.chunks(3).all(|a| {
            let d2: f64 = (0..3).map(|k| (a[k] - cand[k]).powi(2)).sum();
            d2 >= min_dist * min_dist
        });
        if ok {
            coords.extend_from_slice(&cand);
        }
    }
    coords
}

fn cluster_sampler(atoms: usize) -> Sampler {
    Box::new(move |rng: &mut ChaCha8Rng| random_cluster(atoms, 2.5, 0.9, rng))
}

fn gaussian(n: usize) -> Sampler {
    Box::new(move |rng: &mut ChaCha8Rng| (0..n).map(|_| StandardNormal.sample(rng)).collect())
}

/// Every problem shipped with the crate, in the configurations used by the
/// presets.
pub fn registered_cases() -> Vec<GradcheckCase> {
    let shape = MlpShape::new(1, 10);
    let data = gen_sine_dataset(
        &SineDatasetOptions::default(),
        &mut ChaCha8Rng::seed_from_u64(2024),
    )
    .expect("default dataset options are valid")
    .train;
    let sse = MlpSse::new(shape, data).expect("shape matches dataset");
    let atoms = 6;
    vec![
        GradcheckCase::new(Box::new(DoubleWell), uniform_box(1, 5.0)),
        GradcheckCase::new(Box::new(Multimodal::new(10)), uniform_box(10, 20.0)),
        GradcheckCase::new(Box::new(LennardJones::plain(atoms)), cluster_sampler(atoms)),
        GradcheckCase::new(
            Box::new(LennardJones::shifted(atoms, 0.1, 3)),
            cluster_sampler(atoms),
        ),
        GradcheckCase::new(
            Box::new(offset_cost(LennardJones::plain(atoms), 200.0)),
            cluster_sampler(atoms),
        ),
        GradcheckCase::new(Box::new(sse.clone()), gaussian(shape.param_count())),
        GradcheckCase::new(
            Box::new(MlpRegularized::new(sse, 0.1, 1.0).expect("valid weights")),
            gaussian(shape.param_count()),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SignFlipped(LennardJones);

    impl Problem for SignFlipped {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn cost(&self, x: &[f64]) -> f64 {
            self.0.cost(x)
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            self.0.gradient(x, g);
            g.iter_mut().for_each(|v| *v = -*v);
        }
        fn name(&self) -> String {
            "lj_sign_bug".into()
        }
    }

    #[test]
    fn registered_problems_pass() {
        let report = run_suite(&registered_cases(), 20, DEFAULT_TOLERANCE, 1);
        assert_eq!(report.cases.len(), 7);
        for c in &report.cases {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(report.exit_code(), 0);
    }

    #[test]
    fn sign_bug_is_caught() {
        let cases = vec![GradcheckCase::new(
            Box::new(SignFlipped(LennardJones::plain(4))),
            cluster_sampler(4),
        )];
        let report = run_suite(&cases, 5, DEFAULT_TOLERANCE, 0);
        assert!(!report.passed());
        assert_eq!(report.exit_code(), 1);
    }
}
