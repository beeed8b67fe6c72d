//! Transverse Dirichlet eigenproblem on the cross-section `(0, d)`.
//!
//! The analytic modes are `nu_j = (j pi / d)^2` with profiles
//! `phi_j(t) = sqrt(2/d) sin(j pi t / d)`. A tridiagonal finite-difference
//! solver is kept alongside as an independent oracle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance of the bisection used by the finite-difference oracle.
pub const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `sqrt(2/d) sin(j pi t / d)`.
    Analytic,
    /// Values at the interior nodes `t_k = k h`, `k = 1..=ny`.
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseMode {
    pub index: usize,
    pub nu: f64,
    pub width: f64,
    pub profile: Profile,
}

impl TransverseMode {
    /// Profile value at `t`. Sampled profiles are looked up at the nearest node.
    pub fn value(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Analytic => analytic_profile(self.index, self.width, t),
            Profile::Sampled(v) => {
                let ny = v.len();
                let h = self.width / (ny + 1) as f64;
                let k = (t / h).round() as isize;
                if k < 1 || k as usize > ny {
                    0.0
                } else {
                    v[k as usize - 1]
                }
            }
        }
    }

    /// Samples at the `ny` interior nodes of a uniform transverse grid.
    pub fn sample(&self, ny: usize) -> Vec<f64> {
        if let Profile::Sampled(v) = &self.profile {
            if v.len() == ny {
                return v.clone();
            }
        }
        let h = self.width / (ny + 1) as f64;
        (1..=ny).map(|k| self.value(k as f64 * h)).collect()
    }
}

pub fn analytic_profile(j: usize, d: f64, t: f64) -> f64 {
    (2.0 / d).sqrt() * (j as f64 * PI * t / d).sin()
}

/// Analytic Dirichlet modes `j = 1..=count` of the interval `(0, d)`.
pub fn transverse_modes(d: f64, count: usize) -> Result<Vec<TransverseMode>> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("width must be positive, got {d}")));
    }
    if count == 0 {
        return Err(Error::invalid("mode count must be at least 1"));
    }
    Ok((1..=count)
        .map(|j| TransverseMode {
            index: j,
            nu: (j as f64 * PI / d).powi(2),
            width: d,
            profile: Profile::Analytic,
        })
        .collect())
}

/// Eigenvalue `j` of the `ny`-point second-difference matrix with Dirichlet ends.
pub fn discrete_nu(j: usize, d: f64, ny: usize) -> f64 {
    let h = d / (ny + 1) as f64;
    let s = (j as f64 * PI * h / (2.0 * d)).sin();
    4.0 * s * s / (h * h)
}

/// Finite-difference modes from the tridiagonal matrix, by Sturm bisection
/// and inverse iteration. Profiles are normalized so that `h * sum phi^2 = 1`.
pub fn transverse_modes_fd(d: f64, ny: usize, count: usize) -> Result<Vec<TransverseMode>> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("width must be positive, got {d}")));
    }
    if count == 0 {
        return Err(Error::invalid("mode count must be at least 1"));
    }
    if count > ny {
        return Err(Error::invalid(format!(
            "requested {count} modes from a {ny}-point grid"
        )));
    }
    let h = d / (ny + 1) as f64;
    let diag = 2.0 / (h * h);
    let off = -1.0 / (h * h);
    let upper = 4.0 / (h * h);

    let mut modes = Vec::with_capacity(count);
    for j in 1..=count {
        // the j-th eigenvalue is the smallest x with sturm_count(x) >= j
        let (mut lo, mut hi) = (0.0, upper);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(diag, off, ny, mid) >= j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let nu = 0.5 * (lo + hi);
        let mut v = tridiagonal_inverse_iteration(diag, off, ny, nu);
        let norm = (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign / norm);
        modes.push(TransverseMode {
            index: j,
            nu,
            width: d,
            profile: Profile::Sampled(v),
        });
    }
    Ok(modes)
}

/// Number of eigenvalues of the constant tridiagonal matrix below `x`.
fn sturm_count(diag: f64, off: f64, n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = diag - x;
    for i in 0..n {
        if i > 0 {
            let denom = if q == 0.0 { f64::EPSILON * off.abs() } else { q };
            q = diag - x - off * off / denom;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiagonal_inverse_iteration(diag: f64, off: f64, n: usize, shift: f64) -> Vec<f64> {
    // perturb the shift slightly so the system is not exactly singular
    let sigma = shift + 1e-10 * (1.0 + shift.abs());
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    for _ in 0..3 {
        v = thomas_solve(diag - sigma, off, &v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn thomas_solve(diag: f64, off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = off / beta;
        beta = diag - off * c[i - 1];
        if beta == 0.0 {
            beta = f64::EPSILON * diag.abs().max(1.0);
        }
        d[i] = (rhs[i] - off * d[i - 1]) / beta;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Decay rate `s_j(lambda) = sqrt(nu_j - lambda)` of a transverse channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRate {
    pub lambda: f64,
    pub rate: f64,
}

pub fn decay_rate(nu: f64, lambda: f64) -> Result<DecayRate> {
    if !(lambda < nu) {
        return Err(Error::ThresholdViolation { nu, lambda });
    }
    Ok(DecayRate {
        lambda,
        rate: (nu - lambda).sqrt(),
    })
}
