//! Per-window choice of penalty weights and step size, and random
//! renumbering of ensemble members.
//!
//! For fixed `(x, lambda)` the instantaneous rate of change of the average
//! cost,
//!
//! ```text
//! d<U>/dt = (1/q) sum_i <g(i), -(eta/q) g(i) + h(i)>,
//! h(i)    = gamma_{i-1} (x(i-1) - x(i)) - gamma_i (x(i) - x(i+1)) + lambda(i-1) - lambda(i),
//! ```
//!
//! is affine in `gamma`. Minimizing it over a box is a separable LP whose
//! solution sits on a box corner, so it is solved by a sign test. The step
//! size then follows from requiring `d(<U> - U*)/dt = -alpha (<U> - U*)`.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleState;
use crate::error::{ClmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    /// Pressure coefficient: demanded decay rate of `<U> - U*`.
    pub alpha: f64,
    /// Estimate of the global minimum cost.
    pub u_star: f64,
    /// Renumber every `renumber_period` windows; 0 disables renumbering.
    #[serde(default)]
    pub renumber_period: usize,
    #[serde(default)]
    pub renumber_fraction: f64,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.gamma_lo) && pos(self.gamma_hi) && self.gamma_lo < self.gamma_hi) {
            return Err(ClmError::config(format!(
                "need 0 < gamma_lo < gamma_hi, got [{}, {}]",
                self.gamma_lo, self.gamma_hi
            )));
        }
        if !(pos(self.eta_lo) && pos(self.eta_hi) && self.eta_lo < self.eta_hi) {
            return Err(ClmError::config(format!(
                "need 0 < eta_lo < eta_hi, got [{}, {}]",
                self.eta_lo, self.eta_hi
            )));
        }
        if !pos(self.alpha) {
            return Err(ClmError::config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !self.u_star.is_finite() {
            return Err(ClmError::config("u_star must be finite"));
        }
        if !(0.0..=1.0).contains(&self.renumber_fraction) {
            return Err(ClmError::config(format!(
                "renumber_fraction must lie in [0, 1], got {}",
                self.renumber_fraction
            )));
        }
        Ok(())
    }
}

fn check_grads(ens: &EnsembleState, grads: &[f64]) -> Result<()> {
    let expected = ens.q() * ens.dim();
    if grads.len() != expected {
        return Err(ClmError::DimensionMismatch {
            expected,
            found: grads.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Coefficients `c` with `d<U>/dt = const + sum_i c_i gamma_i`:
/// `c_i = (1/q) <g(i+1) - g(i), x(i) - x(i+1)>`.
///
/// `grads` holds the member gradients back to back, `[g(1); ...; g(q)]`.
pub fn gamma_coefficients(ens: &EnsembleState, grads: &[f64]) -> Result<Vec<f64>> {
    check_grads(ens, grads)?;
    let (q, n) = (ens.q(), ens.dim());
    let g = |i: usize| &grads[(i % q) * n..(i % q + 1) * n];
    Ok((0..q)
        .map(|i| {
            let (xi, xn, gi, gn) = (ens.x(i), ens.x(i + 1), g(i), g(i + 1));
            (0..n)
                .map(|k| (gn[k] - gi[k]) * (xi[k] - xn[k]))
                .sum::<f64>()
                / q as f64
        })
        .collect())
}

/// Minimizes `sum c_i gamma_i` over `[gamma_lo, gamma_hi]^q`: strong coupling
/// where it lowers the average cost, weak coupling elsewhere (including ties).
pub fn schedule_gamma(c: &[f64], cfg: &ScheduleConfig) -> Vec<f64> {
    c.iter()
        .map(|&ci| if ci < 0.0 { cfg.gamma_hi } else { cfg.gamma_lo })
        .collect()
}

/// Step size chosen for a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaChoice {
    /// Clamped into `[eta_lo, eta_hi]`.
    pub eta: f64,
    /// Unclamped value from the target law; NaN when stationary.
    pub raw: f64,
    /// All member gradients vanish, so the law cannot be imposed.
    pub stationary: bool,
}

impl EtaChoice {
    pub fn within_bounds(&self, cfg: &ScheduleConfig) -> bool {
        !self.stationary && self.raw > cfg.eta_lo && self.raw < cfg.eta_hi
    }
}

/// Coupling force on each member, flat `[h(1); ...; h(q)]`.
pub fn coupling_terms(ens: &EnsembleState, gamma: &[f64]) -> Vec<f64> {
    let (q, n) = (ens.q(), ens.dim());
    let mut h = vec![0.0; q * n];
    for i in 0..q {
        let prev = i + q - 1;
        let (xp, xi, xn) = (ens.x(prev), ens.x(i), ens.x(i + 1));
        let (lp, li) = (ens.lambda(prev), ens.lambda(i));
        let (gp, gi) = (gamma[prev % q], gamma[i]);
        for k in 0..n {
            h[i * n + k] = gp * (xp[k] - xi[k]) - gi * (xi[k] - xn[k]) + lp[k] - li[k];
        }
    }
    h
}

/// Step size from the target evolution law
///
/// ```text
/// eta = [ q sum_i <g(i), h(i)> + q alpha (sum_i U(x(i)) - q U*) ] / sum_i |g(i)|^2
/// ```
///
/// clamped to `[eta_lo, eta_hi]`. `costs[i] = U(x(i))`.
pub fn schedule_eta(
    ens: &EnsembleState,
    grads: &[f64],
    costs: &[f64],
    gamma: &[f64],
    cfg: &ScheduleConfig,
) -> Result<EtaChoice> {
    check_grads(ens, grads)?;
    let q = ens.q();
    if costs.len() != q {
        return Err(ClmError::DimensionMismatch {
            expected: q,
            found: costs.len(),
        });
    }
    if gamma.len() != q {
        return Err(ClmError::DimensionMismatch {
            expected: q,
            found: gamma.len(),
        });
    }
    let gg = dot(grads, grads);
    if gg == 0.0 {
        return Ok(EtaChoice {
            eta: cfg.eta_lo,
            raw: f64::NAN,
            stationary: true,
        });
    }
    let h = coupling_terms(ens, gamma);
    let gh = dot(grads, &h);
    let qf = q as f64;
    let total: f64 = costs.iter().sum();
    let raw = (qf * gh + qf * cfg.alpha * (total - qf * cfg.u_star)) / gg;
    let eta = if raw.is_nan() {
        cfg.eta_lo
    } else {
        raw.clamp(cfg.eta_lo, cfg.eta_hi)
    };
    Ok(EtaChoice {
        eta,
        raw,
        stationary: false,
    })
}

/// A renumbering: member at position `from` moved to position `to`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Renumbering {
    pub moves: Vec<(usize, usize)>,
}

impl Renumbering {
    pub fn is_identity(&self) -> bool {
        self.moves.is_empty()
    }
}

/// Picks `round(fraction * q)` distinct positions uniformly at random and
/// applies a uniform random permutation to the (state, multiplier) pairs at
/// those positions. Other members keep their place.
pub fn renumber<R: Rng + ?Sized>(
    ens: &EnsembleState,
    fraction: f64,
    rng: &mut R,
) -> (EnsembleState, Renumbering) {
    let q = ens.q();
    let k = ((fraction * q as f64).round() as usize).min(q);
    if k < 2 {
        return (ens.clone(), Renumbering::default());
    }
    let positions = index::sample(rng, q, k).into_vec();
    let mut sources = positions.clone();
    sources.shuffle(rng);

    let n = ens.dim();
    let old = ens.as_flat();
    let mut data = old.to_vec();
    let mut moves = Vec::new();
    for (&to, &from) in positions.iter().zip(&sources) {
        if to == from {
            continue;
        }
        data[to * n..(to + 1) * n].copy_from_slice(&old[from * n..(from + 1) * n]);
        let (lt, lf) = ((q + to) * n, (q + from) * n);
        data[lt..lt + n].copy_from_slice(&old[lf..lf + n]);
        moves.push((from, to));
    }
    moves.sort_unstable();
    (
        EnsembleState::from_flat(q, n, data).expect("shape preserved"),
        Renumbering { moves },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{clm_rhs, ScheduleParams};
    use crate::problems::{Multimodal, Problem};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ScheduleConfig {
        ScheduleConfig {
            gamma_lo: 1.0,
            gamma_hi: 10.0,
            eta_lo: 1e-2,
            eta_hi: 1e3,
            alpha: 1.0,
            u_star: 0.0,
            renumber_period: 5,
            renumber_fraction: 0.2,
        }
    }

    fn grads_of<P: Problem>(ens: &EnsembleState, p: &P) -> (Vec<f64>, Vec<f64>) {
        let n = ens.dim();
        let mut g = vec![0.0; ens.q() * n];
        let costs = (0..ens.q())
            .map(|i| p.cost_and_gradient(ens.x(i), &mut g[i * n..(i + 1) * n]))
            .collect();
        (g, costs)
    }

    #[test]
    fn validation() {
        assert!(cfg().validate().is_ok());
        assert!(ScheduleConfig {
            gamma_lo: 10.0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(ScheduleConfig {
            eta_hi: 1e-3,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(ScheduleConfig {
            alpha: 0.0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(ScheduleConfig {
            renumber_fraction: 1.5,
            ..cfg()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn coefficients_vanish_when_synchronized() {
        let ens = EnsembleState::from_states(vec![vec![0.4, -2.0]; 3]).unwrap();
        let (g, _) = grads_of(&ens, &Multimodal::new(2));
        assert!(gamma_coefficients(&ens, &g)
            .unwrap()
            .iter()
            .all(|&c| c == 0.0));
    }

    #[test]
    fn coefficients_hand_example() {
        // U = x^2 at x = (1, -1): grads (2, -2)
        let ens = EnsembleState::from_states(vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(
            gamma_coefficients(&ens, &[2.0, -2.0]).unwrap(),
            vec![-4.0, -4.0]
        );
        assert!(gamma_coefficients(&ens, &[2.0]).is_err());
    }

    #[test]
    fn gamma_sign_rule() {
        let box_ = ScheduleConfig {
            gamma_lo: 1.0,
            gamma_hi: 10.0,
            ..cfg()
        };
        assert_eq!(
            schedule_gamma(&[-1.0, 2.0, 0.0], &box_),
            vec![10.0, 1.0, 1.0]
        );
        assert_eq!(schedule_gamma(&[3.0, 0.5], &box_), vec![1.0, 1.0]);
    }

    #[test]
    fn eta_examples() {
        // synchronized at U = U*: both numerator terms vanish
        let ens = EnsembleState::from_states(vec![vec![1.0]; 2]).unwrap();
        let c = ScheduleConfig {
            u_star: 3.0,
            ..cfg()
        };
        let e = schedule_eta(&ens, &[2.0, 2.0], &[3.0, 3.0], &[1.0, 1.0], &c).unwrap();
        assert_eq!(e.raw, 0.0);
        assert_eq!(e.eta, c.eta_lo);

        // h = 0, q = 2, alpha = 1, U = (3, 1), U* = 0, sum |g|^2 = 8
        let e = schedule_eta(&ens, &[2.0, 2.0], &[3.0, 1.0], &[1.0, 1.0], &cfg()).unwrap();
        assert_eq!(e.raw, 1.0);
        assert_eq!(e.eta, 1.0);

        let e = schedule_eta(&ens, &[0.0, 0.0], &[3.0, 1.0], &[1.0, 1.0], &cfg()).unwrap();
        assert!(e.stationary);
        assert_eq!(e.eta, cfg().eta_lo);
    }

    #[test]
    fn scheduled_eta_realizes_target_law() {
        let p = Multimodal::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = ScheduleConfig {
            eta_lo: 1e-9,
            eta_hi: 1e9,
            alpha: 0.3,
            ..cfg()
        };
        let mut checked = 0;
        while checked < 20 {
            let xs = (0..5)
                .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let ls = (0..5)
                .map(|_| (0..4).map(|_| rng.gen_range(-0.1..0.1)).collect())
                .collect();
            let ens = EnsembleState::new(xs, ls).unwrap();
            let (g, costs) = grads_of(&ens, &p);
            let gamma = schedule_gamma(&gamma_coefficients(&ens, &g).unwrap(), &c);
            let eta = schedule_eta(&ens, &g, &costs, &gamma, &c).unwrap();
            if !eta.within_bounds(&c) {
                continue;
            }
            let d = clm_rhs(&ens, &p, &ScheduleParams::new(gamma, eta.eta)).unwrap();
            let rate = dot(&g, d.states_flat()) / 5.0;
            let avg = costs.iter().sum::<f64>() / 5.0;
            let target = -c.alpha * (avg - c.u_star);
            assert!(
                (rate - target).abs() <= 1e-8 * target.abs(),
                "{rate} vs {target}"
            );
            checked += 1;
        }
    }

    #[test]
    fn renumber_fraction_zero_is_identity() {
        let ens = EnsembleState::from_states((0..10).map(|i| vec![i as f64]).collect()).unwrap();
        let (out, r) = renumber(&ens, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out, ens);
        assert!(r.is_identity());
    }

    #[test]
    fn renumber_touches_exactly_k_positions() {
        let ens = EnsembleState::new(
            (0..20).map(|i| vec![i as f64]).collect(),
            (0..20).map(|i| vec![-(i as f64)]).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (out, r) = renumber(&ens, 0.2, &mut rng);
            let changed: Vec<usize> = (0..20).filter(|&i| out.x(i) != ens.x(i)).collect();
            assert!(changed.len() <= 4);
            assert_eq!(changed.len(), r.moves.len());
            for &(from, to) in &r.moves {
                assert_eq!(out.x(to), ens.x(from));
                assert_eq!(out.lambda(to), ens.lambda(from));
            }
        }
    }

    proptest! {
        #[test]
        fn gamma_matches_corner_enumeration(c in prop::collection::vec(-5.0f64..5.0, 2..=8)) {
            let cfg = cfg();
            let gamma = schedule_gamma(&c, &cfg);
            let value = |g: &[f64]| dot(&c, g);
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << c.len()) {
                let corner: Vec<f64> = (0..c.len())
                    .map(|i| if mask >> i & 1 == 1 { cfg.gamma_hi } else { cfg.gamma_lo })
                    .collect();
                best = best.min(value(&corner));
            }
            prop_assert!(value(&gamma) <= best + 1e-12 * best.abs().max(1.0));
            prop_assert!(gamma.iter().all(|&g| g == cfg.gamma_lo || g == cfg.gamma_hi));
        }

        #[test]
        fn renumber_preserves_member_multiset(seed in 0u64..1000, frac in 0.0f64..=1.0) {
            let ens = EnsembleState::new(
                (0..7).map(|i| vec![i as f64, 0.5 * i as f64]).collect(),
                (0..7).map(|i| vec![10.0 + i as f64, -1.0]).collect(),
            ).unwrap();
            let (out, _) = renumber(&ens, frac, &mut ChaCha8Rng::seed_from_u64(seed));
            let key = |e: &EnsembleState| {
                let mut v: Vec<Vec<u64>> = (0..7)
                    .map(|i| e.x(i).iter().chain(e.lambda(i)).map(|f| f.to_bits()).collect())
                    .collect();
                v.sort();
                v
            };
            prop_assert_eq!(key(&out), key(&ens));
        }

        #[test]
        fn eta_always_within_bounds(xs in prop::collection::vec(-3.0f64..3.0, 6), alpha in 1e-3f64..1e3) {
            let ens = EnsembleState::from_states(xs.chunks(2).map(|c| c.to_vec()).collect()).unwrap();
            let p = Multimodal::new(2);
            let (g, costs) = grads_of(&ens, &p);
            let c = ScheduleConfig { alpha, ..cfg() };
            let gamma = schedule_gamma(&gamma_coefficients(&ens, &g).unwrap(), &c);
            let e = schedule_eta(&ens, &g, &costs, &gamma, &c).unwrap();
            prop_assert!(e.eta >= c.eta_lo && e.eta <= c.eta_hi);
        }
    }
}
