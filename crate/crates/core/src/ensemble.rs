//! Ensemble state and the coupled-minimizer vector field.
//!
//! The state of `q` members in `R^n` is stored as one flat vector laid out
//! `[x(1); ...; x(q); lambda(1); ...; lambda(q)]` so the integrator can treat
//! it as a single ODE state. Member indices wrap around the ring: member `q`
//! is followed by member `1` and the same wraparound applies to `gamma` and
//! `lambda`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ClmError, Result};
use crate::problems::Problem;

/// Member states and their Lagrange multipliers on a ring.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    q: usize,
    n: usize,
    data: Vec<f64>,
}

impl EnsembleState {
    pub fn new(xs: Vec<Vec<f64>>, lambdas: Vec<Vec<f64>>) -> Result<Self> {
        let q = xs.len();
        if q < 2 {
            return Err(ClmError::config(format!(
                "ensemble needs at least 2 members, got {q}"
            )));
        }
        if lambdas.len() != q {
            return Err(ClmError::DimensionMismatch {
                expected: q,
                found: lambdas.len(),
            });
        }
        let n = xs[0].len();
        if n == 0 {
            return Err(ClmError::config("member states must have dimension >= 1"));
        }
        let mut data = Vec::with_capacity(2 * q * n);
        for v in xs.iter().chain(&lambdas) {
            if v.len() != n {
                return Err(ClmError::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            data.extend_from_slice(v);
        }
        Ok(Self { q, n, data })
    }

    /// Members at the given states with all multipliers zero.
    pub fn from_states(xs: Vec<Vec<f64>>) -> Result<Self> {
        let q = xs.len();
        let n = xs.first().map_or(0, Vec::len);
        Self::new(xs, vec![vec![0.0; n]; q])
    }

    pub fn from_flat(q: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if q < 2 || n == 0 {
            return Err(ClmError::config(format!(
                "invalid ensemble shape q={q}, n={n}"
            )));
        }
        if data.len() != 2 * q * n {
            return Err(ClmError::DimensionMismatch {
                expected: 2 * q * n,
                found: data.len(),
            });
        }
        Ok(Self { q, n, data })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// State of member `i`, with `i` taken modulo `q`.
    pub fn x(&self, i: usize) -> &[f64] {
        let i = i % self.q;
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Multiplier of member `i`, with `i` taken modulo `q`.
    pub fn lambda(&self, i: usize) -> &[f64] {
        let i = i % self.q + self.q;
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.data[..self.q * self.n]
    }

    pub fn lambdas_flat(&self) -> &[f64] {
        &self.data[self.q * self.n..]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Componentwise sum of all multipliers. Conserved by the exact flow.
    pub fn lambda_sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.q {
            for (a, b) in s.iter_mut().zip(self.lambda(i)) {
                *a += b;
            }
        }
        s
    }

    /// Mean over members of `|x(i) - mean(x)|^2`.
    pub fn state_variance(&self) -> f64 {
        let mut mean = vec![0.0; self.n];
        for i in 0..self.q {
            for (m, v) in mean.iter_mut().zip(self.x(i)) {
                *m += v / self.q as f64;
            }
        }
        (0..self.q)
            .map(|i| {
                self.x(i)
                    .iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / self.q as f64
    }

    pub(crate) fn check_problem<P: Problem + ?Sized>(&self, p: &P) -> Result<()> {
        if p.dim() != self.n {
            return Err(ClmError::DimensionMismatch {
                expected: p.dim(),
                found: self.n,
            });
        }
        Ok(())
    }
}

/// Penalty weights `gamma` (one per ring constraint) and step size `eta`,
/// held fixed over one integration window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gamma: Vec<f64>,
    pub eta: f64,
}

impl ScheduleParams {
    pub fn new(gamma: Vec<f64>, eta: f64) -> Self {
        Self { gamma, eta }
    }

    pub fn uniform(q: usize, gamma: f64, eta: f64) -> Self {
        Self {
            gamma: vec![gamma; q],
            eta,
        }
    }

    fn check(&self, q: usize) -> Result<()> {
        if self.gamma.len() != q {
            return Err(ClmError::DimensionMismatch {
                expected: q,
                found: self.gamma.len(),
            });
        }
        if !self.eta.is_finite() || self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(ClmError::config("schedule parameters must be finite"));
        }
        Ok(())
    }
}

/// `<U> = (1/q) sum_i U(x(i))`.
pub fn average_cost<P: Problem + ?Sized>(ens: &EnsembleState, p: &P) -> Result<f64> {
    ens.check_problem(p)?;
    Ok((0..ens.q()).map(|i| p.cost(ens.x(i))).sum::<f64>() / ens.q() as f64)
}

/// `L = (eta/q) sum U(x(i)) + 1/2 sum gamma_i |x(i) - x(i+1)|^2
///      + sum <lambda(i), x(i) - x(i+1)>`.
pub fn augmented_lagrangian<P: Problem + ?Sized>(
    ens: &EnsembleState,
    p: &P,
    s: &ScheduleParams,
) -> Result<f64> {
    ens.check_problem(p)?;
    s.check(ens.q())?;
    let q = ens.q();
    let mut objective = 0.0;
    let mut soft = 0.0;
    let mut hard = 0.0;
    for i in 0..q {
        objective += p.cost(ens.x(i));
        let (xi, xn, li) = (ens.x(i), ens.x(i + 1), ens.lambda(i));
        for k in 0..ens.dim() {
            let d = xi[k] - xn[k];
            soft += s.gamma[i] * d * d;
            hard += li[k] * d;
        }
    }
    Ok(s.eta / q as f64 * objective + 0.5 * soft + hard)
}

/// `max_i |x(i) - x(i+1)|_2` around the ring.
pub fn sync_residual(ens: &EnsembleState) -> f64 {
    (0..ens.q())
        .map(|i| {
            ens.x(i)
                .iter()
                .zip(ens.x(i + 1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Members whose gradient evaluations are worth farming out to threads.
const PARALLEL_MIN_DIM: usize = 96;

/// Evaluates the coupled vector field on a flat state `y` into `dy`.
///
/// The `x` block of `dy` is first used as scratch for the member gradients,
/// so no allocation happens here.
pub(crate) fn rhs_into<P: Problem + ?Sized>(
    q: usize,
    n: usize,
    y: &[f64],
    p: &P,
    gamma: &[f64],
    eta: f64,
    dy: &mut [f64],
) -> Result<()> {
    let (dx, dl) = dy.split_at_mut(q * n);
    let xs = &y[..q * n];
    let ls = &y[q * n..];

    if n >= PARALLEL_MIN_DIM && q > 1 {
        dx.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, g)| p.gradient(&xs[i * n..(i + 1) * n], g));
    } else {
        for (i, g) in dx.chunks_mut(n).enumerate() {
            p.gradient(&xs[i * n..(i + 1) * n], g);
        }
    }

    let scale = eta / q as f64;
    for i in 0..q {
        let prev = (i + q - 1) % q;
        let next = (i + 1) % q;
        let (gp, gi) = (gamma[prev], gamma[i]);
        for k in 0..n {
            let xi = xs[i * n + k];
            let g = dx[i * n + k];
            if !g.is_finite() {
                return Err(ClmError::NonFiniteGradient { index: i });
            }
            dx[i * n + k] = -scale * g + gp * (xs[prev * n + k] - xi)
                - gi * (xi - xs[next * n + k])
                + ls[prev * n + k]
                - ls[i * n + k];
            dl[i * n + k] = xi - xs[next * n + k];
        }
    }
    Ok(())
}

/// Time derivative of the ensemble under the coupled-minimizer flow:
///
/// ```text
/// dx(i)/dt      = -(eta/q) grad U(x(i)) + gamma_{i-1} (x(i-1) - x(i))
///                 - gamma_i (x(i) - x(i+1)) + lambda(i-1) - lambda(i)
/// dlambda(i)/dt = x(i) - x(i+1)
/// ```
///
/// i.e. descent on the augmented Lagrangian in `x` and ascent in `lambda`.
pub fn clm_rhs<P: Problem + ?Sized>(
    ens: &EnsembleState,
    p: &P,
    s: &ScheduleParams,
) -> Result<EnsembleState> {
    ens.check_problem(p)?;
    s.check(ens.q())?;
    let mut dy = vec![0.0; ens.as_flat().len()];
    rhs_into(
        ens.q(),
        ens.dim(),
        ens.as_flat(),
        p,
        &s.gamma,
        s.eta,
        &mut dy,
    )?;
    EnsembleState::from_flat(ens.q(), ens.dim(), dy)
}
