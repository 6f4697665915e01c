//! Reference optimizers: independent multi-start steepest descent, an L-BFGS
//! local minimizer for polishing, and the central-difference gradient used
//! as a test oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::problems::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinResult {
    pub argmin: Vec<f64>,
    /// `cost == p.cost(&argmin)`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Index of the start this run began from (multi-start only).
    pub start_index: usize,
    /// Set when the run hit a non-finite cost. A run that merely stalls
    /// (line search exhausted, iteration cap) has `converged = false` and no
    /// failure.
    pub failure: Option<String>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Central differences with step `h_i = 1e-5 (1 + |x_i|)`.
pub fn finite_diff_grad<P: Problem + ?Sized>(p: &P, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let fp = p.cost(&xp);
            xp[i] = x[i] - h;
            let fm = p.cost(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo_c: f64,
    pub initial_step: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            initial_step: 1.0,
        }
    }
}

/// Steepest descent with Armijo backtracking (halving). The trial step of
/// each iteration is twice the previously accepted one.
pub fn steepest_descent<P: Problem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &DescentOptions,
) -> LocalMinResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = p.cost_and_gradient(&x, &mut g);
    let result =
        |x: Vec<f64>, f: f64, g: &[f64], it: usize, conv: bool, failure: Option<String>| {
            LocalMinResult {
                argmin: x,
                cost: f,
                iterations: it,
                converged: conv,
                grad_norm: norm(g),
                start_index: 0,
                failure,
            }
        };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return result(
            x,
            f,
            &g,
            0,
            false,
            Some(format!("non-finite cost {f} at start")),
        );
    }
    let mut step = opts.initial_step;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    for it in 0..opts.max_iter {
        let gg = dot(&g, &g);
        if gg.sqrt() < opts.grad_tol {
            return result(x, f, &g, it, true, None);
        }
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..n {
                trial[i] = x[i] - step * g[i];
            }
            let ft = p.cost_and_gradient(&trial, &mut g_trial);
            if ft.is_finite() && ft <= f - opts.armijo_c * step * gg {
                accepted = true;
                f = ft;
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_trial);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable decrease along -g: treat as converged to rounding
            let conv = gg.sqrt() < opts.grad_tol.max(1e-6);
            return result(x, f, &g, it, conv, None);
        }
        step *= 2.0;
    }
    let conv = norm(&g) < opts.grad_tol;
    result(x, f, &g, opts.max_iter, conv, None)
}

/// Independent steepest-descent runs from every start, sorted by final cost
/// (failed runs last). Runs execute in parallel; the output order depends
/// only on the results, not on the order of `starts`.
pub fn multistart_descent<P: Problem + ?Sized>(
    p: &P,
    starts: &[Vec<f64>],
    opts: &DescentOptions,
) -> Vec<LocalMinResult> {
    let mut out: Vec<LocalMinResult> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| LocalMinResult {
            start_index: i,
            ..steepest_descent(p, x0, opts)
        })
        .collect();
    sort_results(&mut out);
    out
}

/// Independent L-BFGS runs from every start, sorted like [`multistart_descent`].
pub fn multistart_quasi_newton<P: Problem + ?Sized>(
    p: &P,
    starts: &[Vec<f64>],
    opts: &QuasiNewtonOptions,
) -> Vec<LocalMinResult> {
    let mut out: Vec<LocalMinResult> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| LocalMinResult {
            start_index: i,
            ..quasi_newton(p, x0, opts)
        })
        .collect();
    sort_results(&mut out);
    out
}

fn sort_results(out: &mut [LocalMinResult]) {
    let key = |r: &LocalMinResult| {
        if r.failure.is_some() || r.cost.is_nan() {
            f64::INFINITY
        } else {
            r.cost
        }
    };
    out.sort_by(|a, b| {
        key(a).total_cmp(&key(b)).then_with(|| {
            a.argmin
                .iter()
                .zip(&b.argmin)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuasiNewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Upper bound on the length of the first trial step of an iteration.
    pub max_step: f64,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 1000,
            memory: 10,
            max_step: 1.0,
        }
    }
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;

struct LineProbe<'a, P: ?Sized> {
    p: &'a P,
    x: &'a [f64],
    d: &'a [f64],
    xt: Vec<f64>,
    gt: Vec<f64>,
    evals: usize,
}

impl<'a, P: Problem + ?Sized> LineProbe<'a, P> {
    /// `phi(a)` and `phi'(a)`; leaves the point and gradient in `xt`, `gt`.
    fn eval(&mut self, a: f64) -> (f64, f64) {
        for i in 0..self.x.len() {
            self.xt[i] = self.x[i] + a * self.d[i];
        }
        self.evals += 1;
        let f = self.p.cost_and_gradient(&self.xt, &mut self.gt);
        (f, dot(&self.gt, self.d))
    }
}

/// Strong-Wolfe line search (bracketing then zoom with safeguarded quadratic
/// interpolation). Returns the accepted step with `xt`/`gt` holding the new
/// point, or `None`.
fn wolfe_search<P: Problem + ?Sized>(
    probe: &mut LineProbe<'_, P>,
    f0: f64,
    df0: f64,
    a_init: f64,
) -> Option<(f64, f64)> {
    let armijo = |a: f64, f: f64| f <= f0 + WOLFE_C1 * a * df0;
    let curvature = |df: f64| df.abs() <= -WOLFE_C2 * df0;

    let zoom = |probe: &mut LineProbe<'_, P>,
                mut lo: (f64, f64, f64),
                mut hi: (f64, f64)|
     -> Option<(f64, f64)> {
        for _ in 0..60 {
            let (a_lo, f_lo, df_lo) = lo;
            let (a_hi, f_hi) = hi;
            let width = a_hi - a_lo;
            let mut a = a_lo + 0.5 * width;
            if f_hi.is_finite() {
                let denom = 2.0 * (f_hi - f_lo - df_lo * width);
                if denom > 0.0 {
                    let cand = a_lo - df_lo * width * width / denom;
                    let (l, u) = (a_lo.min(a_hi), a_lo.max(a_hi));
                    let margin = 0.1 * (u - l);
                    if cand > l + margin && cand < u - margin {
                        a = cand;
                    }
                }
            }
            if width.abs() < 1e-16 * a_lo.abs().max(1e-300) {
                return None;
            }
            let (f, df) = probe.eval(a);
            if !f.is_finite() || !armijo(a, f) || f >= f_lo {
                hi = (a, f);
            } else {
                if curvature(df) {
                    return Some((a, f));
                }
                if df * (a_hi - a_lo) >= 0.0 {
                    hi = (a_lo, f_lo);
                }
                lo = (a, f, df);
            }
        }
        None
    };

    let mut prev = (0.0, f0, df0);
    let mut a = a_init;
    for i in 0..40 {
        let (f, df) = probe.eval(a);
        if !f.is_finite() || !armijo(a, f) || (i > 0 && f >= prev.1) {
            return zoom(probe, prev, (a, f));
        }
        if curvature(df) {
            return Some((a, f));
        }
        if df >= 0.0 {
            return zoom(probe, (a, f, df), (prev.0, prev.1));
        }
        prev = (a, f, df);
        a *= 2.0;
    }
    None
}

/// Limited-memory BFGS from `x0` until `|grad U| < grad_tol` or `max_iter`.
///
/// Every accepted step satisfies the Armijo condition, so the returned cost
/// never exceeds `U(x0)`. A failed line search ends the run with
/// `converged = false` and the best iterate so far; near a minimum this is
/// the usual way to stop once `grad_tol` is below rounding level.
pub fn quasi_newton<P: Problem + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &QuasiNewtonOptions,
) -> LocalMinResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = p.cost_and_gradient(&x, &mut g);
    let finish =
        |x: Vec<f64>, f: f64, g: &[f64], it: usize, converged: bool, failure: Option<String>| {
            LocalMinResult {
                argmin: x,
                cost: f,
                iterations: it,
                converged,
                grad_norm: norm(g),
                start_index: 0,
                failure,
            }
        };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(
            x,
            f,
            &g,
            0,
            false,
            Some(format!("non-finite cost {f} at start")),
        );
    }

    let m = opts.memory.max(1);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(m);
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; m];

    for it in 0..opts.max_iter {
        if norm(&g) < opts.grad_tol {
            return finish(x, f, &g, it, true, None);
        }

        // two-loop recursion: d = -H g
        d.copy_from_slice(&g);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= alpha[k] * y[i];
            }
        }
        if let Some((s, y, _)) = hist.back() {
            let scale = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= scale);
        }
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * dot(y, &d);
            for i in 0..n {
                d[i] += (alpha[k] - beta) * s[i];
            }
        }
        d.iter_mut().for_each(|v| *v = -*v);

        let mut df0 = dot(&g, &d);
        if !(df0 < 0.0) {
            // not a descent direction: restart from steepest descent
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(v, gi)| *v = -gi);
            df0 = -dot(&g, &g);
        }
        let dn = norm(&d);
        let a_init = if hist.is_empty() {
            (opts.max_step / dn).min(1.0)
        } else {
            1.0
        };

        let mut probe = LineProbe {
            p,
            x: &x,
            d: &d,
            xt: vec![0.0; n],
            gt: vec![0.0; n],
            evals: 0,
        };
        let Some((_, f_new)) = wolfe_search(&mut probe, f, df0, a_init) else {
            return finish(x, f, &g, it, norm(&g) < opts.grad_tol, None);
        };
        let (x_new, g_new) = (probe.xt, probe.gt);

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if hist.len() == m {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        g = g_new;
        f = f_new;
    }
    let conv = norm(&g) < opts.grad_tol;
    finish(x, f, &g, opts.max_iter, conv, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{DoubleWell, LennardJones, Quadratic, Rosenbrock};

    struct Linear;
    impl Problem for Linear {
        fn dim(&self) -> usize {
            3
        }
        fn cost(&self, x: &[f64]) -> f64 {
            2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 1.0
        }
        fn gradient(&self, _: &[f64], g: &mut [f64]) {
            g.copy_from_slice(&[2.0, -3.0, 0.5]);
        }
        fn name(&self) -> String {
            "linear".into()
        }
    }

    #[test]
    fn finite_differences() {
        struct Square;
        impl Problem for Square {
            fn dim(&self) -> usize {
                1
            }
            fn cost(&self, x: &[f64]) -> f64 {
                x[0] * x[0]
            }
            fn gradient(&self, x: &[f64], g: &mut [f64]) {
                g[0] = 2.0 * x[0];
            }
            fn name(&self) -> String {
                "square".into()
            }
        }
        assert!((finite_diff_grad(&Square, &[1.0])[0] - 2.0).abs() < 1e-9);
        let g = finite_diff_grad(&Linear, &[0.3, -7.0, 100.0]);
        for (a, b) in g.iter().zip([2.0, -3.0, 0.5]) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn descent_on_quadratic() {
        let p = Quadratic { dim: 3 };
        let starts = vec![
            vec![1.0, 2.0, 3.0],
            vec![-4.0, 0.5, 0.0],
            vec![10.0, -10.0, 2.0],
        ];
        for r in multistart_descent(&p, &starts, &DescentOptions::default()) {
            assert!(r.converged);
            assert!(norm(&r.argmin) < 1e-7);
        }
    }

    #[test]
    fn descent_finds_both_wells() {
        let starts = vec![vec![3.0], vec![-3.0]];
        let res = multistart_descent(&DoubleWell, &starts, &DescentOptions::default());
        assert!((res[0].argmin[0] + 2.90).abs() < 0.01, "{:?}", res[0]);
        assert!(res[1].argmin[0] > 2.0);
        assert_eq!(res[0].start_index, 1);
        assert!(res[0].cost < res[1].cost);
    }

    #[test]
    fn descent_order_independent() {
        let starts = vec![vec![3.0], vec![-3.0], vec![0.5], vec![-0.2]];
        let mut rev = starts.clone();
        rev.reverse();
        let a = multistart_descent(&DoubleWell, &starts, &DescentOptions::default());
        let b = multistart_descent(&DoubleWell, &rev, &DescentOptions::default());
        let strip = |v: Vec<LocalMinResult>| {
            v.into_iter()
                .map(|r| (r.argmin, r.cost))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn descent_failure_is_isolated() {
        let p = LennardJones::plain(2);
        let starts = vec![vec![0.0; 6], vec![0.0, 0.0, 0.0, 1.5, 0.0, 0.0]];
        let res = multistart_descent(&p, &starts, &DescentOptions::default());
        assert!(res[0].failure.is_none());
        assert!((res[0].cost + 1.0).abs() < 1e-8);
        assert!(res[1].failure.is_some());
    }

    #[test]
    fn lbfgs_on_quadratic() {
        let p = Quadratic { dim: 4 };
        let r = quasi_newton(&p, &[0.3, -0.2, 0.1, 0.4], &QuasiNewtonOptions::default());
        assert!(r.converged);
        assert!(r.iterations <= 5, "{}", r.iterations);
        assert!(r.grad_norm < 1e-12);
    }

    #[test]
    fn lbfgs_lj_dimer() {
        let p = LennardJones::plain(2);
        let r = quasi_newton(
            &p,
            &[0.0, 0.0, 0.0, 1.5, 0.0, 0.0],
            &QuasiNewtonOptions::default(),
        );
        assert!((r.cost + 1.0).abs() < 1e-8, "{r:?}");
        let d = (r.argmin[3] - r.argmin[0]).abs();
        assert!((d - 2f64.powf(1.0 / 6.0)).abs() < 1e-6);
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let r = quasi_newton(&Rosenbrock, &[-1.2, 1.0], &QuasiNewtonOptions::default());
        assert!(
            (r.argmin[0] - 1.0).abs() < 1e-6 && (r.argmin[1] - 1.0).abs() < 1e-6,
            "{r:?}"
        );
    }

    #[test]
    fn lbfgs_never_worse_than_start() {
        for x0 in [-3.0, -1.0, 0.157, 0.5, 2.0, 4.0] {
            let r = quasi_newton(&DoubleWell, &[x0], &QuasiNewtonOptions::default());
            assert!(r.cost <= DoubleWell::value(x0));
            assert_eq!(r.cost, DoubleWell.cost(&r.argmin));
        }
    }

    #[test]
    fn lbfgs_stall_is_not_a_failure() {
        let starts = vec![
            vec![0.0, 0.0, 0.0, 1.3, 0.0, 0.0, 0.0, 1.2, 0.1, 0.9, 0.8, 0.0],
            vec![0.0, 0.0, 0.0, 1.1, 0.0, 0.0, 2.2, 0.0, 0.0, 3.3, 0.1, 0.0],
        ];
        let res = multistart_quasi_newton(
            &LennardJones::plain(4),
            &starts,
            &QuasiNewtonOptions::default(),
        );
        assert!(res.iter().all(|r| r.failure.is_none()));
        assert!(res[0].cost <= res[1].cost);
        assert!((res[0].cost + 6.0).abs() < 1e-8, "{:?}", res[0]);
    }
}
