use super::Problem;
use crate::error::{ClmError, Result};

/// Pair potential `4 [ s^(-2 nu) - s^(-nu) ]` with `s = r + mu`, summed over
/// all atom pairs of a cluster in reduced units.
///
/// `mu = 0, nu = 6` is the plain Lennard-Jones potential. The shifted variant
/// (`mu > 0`, smaller `nu`) stays bounded at short range and is used to
/// pre-relax strongly compressed starting geometries.
///
/// Coordinates are a flat `3N` vector `[x1, y1, z1, x2, ...]`.
#[derive(Debug, Clone, Copy)]
pub struct LennardJones {
    pub atoms: usize,
    pub mu: f64,
    pub nu: i32,
}

impl LennardJones {
    pub fn plain(atoms: usize) -> Self {
        Self {
            atoms,
            mu: 0.0,
            nu: 6,
        }
    }

    pub fn shifted(atoms: usize, mu: f64, nu: i32) -> Self {
        Self { atoms, mu, nu }
    }

    /// Distance at which a single pair has its minimum of `-1`.
    pub fn pair_equilibrium(&self) -> f64 {
        2f64.powf(1.0 / self.nu as f64) - self.mu
    }

    fn check_len(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != 3 * self.atoms {
            return Err(ClmError::DimensionMismatch {
                expected: 3 * self.atoms,
                found: coords.len(),
            });
        }
        Ok(())
    }

    fn pair(&self, coords: &[f64], i: usize, j: usize) -> Result<([f64; 3], f64, f64)> {
        let d = [
            coords[3 * i] - coords[3 * j],
            coords[3 * i + 1] - coords[3 * j + 1],
            coords[3 * i + 2] - coords[3 * j + 2],
        ];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let s = r + self.mu;
        if r == 0.0 || s <= 0.0 {
            return Err(ClmError::CoincidentAtoms {
                first: i,
                second: j,
            });
        }
        Ok((d, r, s))
    }

    pub fn energy(&self, coords: &[f64]) -> Result<f64> {
        self.check_len(coords)?;
        let mut e = 0.0;
        for i in 0..self.atoms {
            for j in i + 1..self.atoms {
                let (_, _, s) = self.pair(coords, i, j)?;
                let p = s.recip().powi(self.nu);
                e += p * p - p;
            }
        }
        Ok(4.0 * e)
    }

    /// Energy and gradient in one O(N^2) pass over the pairs.
    pub fn energy_and_gradient(&self, coords: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_len(coords)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let nu = self.nu as f64;
        let mut e = 0.0;
        for i in 0..self.atoms {
            for j in i + 1..self.atoms {
                let (d, r, s) = self.pair(coords, i, j)?;
                let inv = s.recip();
                let p = inv.powi(self.nu);
                e += p * p - p;
                // dU/dr for this pair, projected onto the unit separation
                let du_dr = 4.0 * nu * inv * (p - 2.0 * p * p);
                let f = du_dr / r;
                for k in 0..3 {
                    grad[3 * i + k] += f * d[k];
                    grad[3 * j + k] -= f * d[k];
                }
            }
        }
        Ok(4.0 * e)
    }
}

impl Problem for LennardJones {
    fn dim(&self) -> usize {
        3 * self.atoms
    }

    fn cost(&self, x: &[f64]) -> f64 {
        self.energy(x).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        if self.energy_and_gradient(x, grad).is_err() {
            grad.iter_mut().for_each(|g| *g = f64::NAN);
        }
    }

    fn cost_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self.energy_and_gradient(x, grad) {
            Ok(e) => e,
            Err(_) => {
                grad.iter_mut().for_each(|g| *g = f64::NAN);
                f64::NAN
            }
        }
    }

    fn name(&self) -> String {
        if self.mu == 0.0 && self.nu == 6 {
            format!("lj{}", self.atoms)
        } else {
            format!("lj{}_shift(mu={},nu={})", self.atoms, self.mu, self.nu)
        }
    }
}

/// A cluster geometry: atom positions in reduced units.
#[derive(Debug, Clone, PartialEq)]
pub struct LjCluster {
    pub coords: Vec<f64>,
}

impl LjCluster {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 3 != 0 {
            return Err(ClmError::config(format!(
                "cluster coordinates must be a non-empty multiple of 3, got {}",
                coords.len()
            )));
        }
        Ok(Self { coords })
    }

    pub fn atom_count(&self) -> usize {
        self.coords.len() / 3
    }

    pub fn position(&self, atom: usize) -> [f64; 3] {
        [
            self.coords[3 * atom],
            self.coords[3 * atom + 1],
            self.coords[3 * atom + 2],
        ]
    }

    pub fn energy(&self) -> Result<f64> {
        LennardJones::plain(self.atom_count()).energy(&self.coords)
    }

    pub fn min_distance(&self) -> f64 {
        let n = self.atom_count();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (self.position(i), self.position(j));
                let r =
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                best = best.min(r);
            }
        }
        best
    }
}
