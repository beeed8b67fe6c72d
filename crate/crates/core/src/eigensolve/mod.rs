//! Symmetric banded linear algebra on strip operators: profile LDLᵀ with
//! inertia counting, shift-invert Lanczos for the discrete spectrum below the
//! threshold, plain and deflated resolvent solves, and a dense oracle.
//!
//! Grid functions are plain slices; inner products carry the `h^2` weight of
//! the operator's grid.

mod dense;
mod factor;

pub use dense::{jacobi_eigen, tridiagonal_eigen};
pub use factor::{
    banded_factorize, factorize_nudged, inertia, nudge, BandedFactorization, PIVOT_TOL,
    SHIFT_NUDGE,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stripgrid::DiscreteOperator;

/// Relative residual bound `||H u - lambda u|| <= RESIDUAL_RTOL (|lambda| + 1)`.
pub const RESIDUAL_RTOL: f64 = 1e-9;
/// Seed of the Lanczos starting vectors.
pub const LANCZOS_SEED: u64 = 0x5EED;
/// Krylov basis cap per Lanczos run.
pub const LANCZOS_MAX_BASIS: usize = 300;
/// Largest dimension accepted by [`dense_eig_oracle`].
pub const DENSE_ORACLE_CAP: usize = 2500;
/// Target relative residual of resolvent solves.
pub const RESOLVENT_RTOL: f64 = 1e-10;
/// Minimal distance from the spectrum accepted by [`Resolvent::new`].
pub const SPECTRAL_GUARD: f64 = 1e-8;
/// Iteration cap of the deflated saddle-point refinement.
pub const DEFLATION_MAX_ITER: usize = 60;
/// Refinement stops once a step reduces the residual by less than this factor.
const REFINE_STALL: f64 = 0.5;

const LANCZOS_MAX_ROUNDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub shifts: Vec<f64>,
    /// Inertia at the ceiling; equals the number of returned pairs.
    pub certified_count: usize,
}

/// Eigenpairs below a ceiling, ascending, with `h^2`-orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// `||H u - lambda u||` in the weighted norm.
    pub residuals: Vec<f64>,
    pub meta: SolverMeta,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Two passes of classical Gram-Schmidt against unit vectors.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            axpy(-c, b, v);
        }
    }
}

fn weight(op: &DiscreteOperator) -> f64 {
    let h = op.grid().h;
    h * h
}

/// Euclidean-normalized residual ratio `||A x - lambda x|| / ||x||`.
fn residual(op: &DiscreteOperator, x: &[f64], lambda: f64) -> f64 {
    let mut r = op.mul(x);
    axpy(-lambda, x, &mut r);
    norm2(&r) / norm2(x)
}

/// Sign convention for eigenvectors: the entry of largest magnitude is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best * (1.0 + 1e-9) {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

struct RitzPair {
    lambda: f64,
    vector: Vec<f64>,
}

/// One shift-invert Lanczos run at `sigma`, deflating `locked`.
///
/// Returns pairs below `ceiling` whose true residual passes, stopping as soon
/// as `wanted` of them are available.
fn lanczos_run(
    op: &DiscreteOperator,
    fact: &BandedFactorization,
    locked: &[Vec<f64>],
    ceiling: f64,
    wanted: usize,
    seed: u64,
    steps: &mut usize,
) -> Result<Vec<RitzPair>> {
    let n = op.dim();
    let sigma = fact.shift();
    let max_basis = LANCZOS_MAX_BASIS.min(n.saturating_sub(locked.len()));
    if max_basis == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    orthogonalize(&mut q, locked);
    let qn = norm2(&q);
    q.iter_mut().for_each(|x| *x /= qn);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best: Vec<RitzPair> = Vec::new();

    loop {
        let m = basis.len();
        let mut w = fact.solve(&basis[m - 1]);
        *steps += 1;
        let a = dot(&w, &basis[m - 1]);
        alpha.push(a);
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let b = norm2(&w);
        let scale = alpha.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        let breakdown = b <= 1e-13 * scale;
        let full = m >= max_basis;
        let check = breakdown || full || (m >= 2 * wanted.max(1) && m % 5 == 0);
        if check {
            let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
            let mut cands: Vec<usize> = (0..m)
                .filter(|&j| {
                    let t = theta[j];
                    t != 0.0 && sigma + 1.0 / t < ceiling
                })
                .filter(|&j| {
                    let est = (b * s[(m - 1) * m + j]).abs();
                    breakdown || full || est <= 1e-10 * theta[j].abs()
                })
                .collect();
            // nearest the shift first
            cands.sort_by(|&i, &j| theta[j].abs().total_cmp(&theta[i].abs()));
            if cands.len() >= wanted || breakdown || full {
                let mut pairs = Vec::new();
                for &j in &cands {
                    let mut x = vec![0.0; n];
                    for (k, v) in basis.iter().enumerate() {
                        axpy(s[k * m + j], v, &mut x);
                    }
                    orthogonalize(&mut x, locked);
                    let xn = norm2(&x);
                    x.iter_mut().for_each(|v| *v /= xn);
                    let ax = op.mul(&x);
                    let lambda = dot(&ax, &x);
                    if lambda < ceiling
                        && residual(op, &x, lambda) <= RESIDUAL_RTOL * (lambda.abs() + 1.0)
                    {
                        pairs.push(RitzPair { lambda, vector: x });
                    }
                }
                if pairs.len() >= wanted || breakdown || full {
                    return Ok(pairs);
                }
                if pairs.len() > best.len() {
                    best = pairs;
                }
            }
        }
        if breakdown || full {
            return Ok(best);
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
}

/// Rayleigh-Ritz on the span of orthonormal `vectors`.
fn rayleigh_ritz(op: &DiscreteOperator, vectors: &[Vec<f64>]) -> Result<Vec<RitzPair>> {
    let p = vectors.len();
    let av: Vec<Vec<f64>> = vectors.iter().map(|v| op.mul(v)).collect();
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let x = 0.5 * (dot(&vectors[i], &av[j]) + dot(&vectors[j], &av[i]));
            g[i * p + j] = x;
            g[j * p + i] = x;
        }
    }
    let (vals, z) = jacobi_eigen(&g, p)?;
    let n = op.dim();
    Ok((0..p)
        .map(|j| {
            let mut x = vec![0.0; n];
            for (k, v) in vectors.iter().enumerate() {
                axpy(z[k * p + j], v, &mut x);
            }
            let xn = norm2(&x);
            x.iter_mut().for_each(|v| *v /= xn);
            RitzPair {
                lambda: vals[j],
                vector: x,
            }
        })
        .collect())
}

/// All eigenpairs of `op` below `ceiling` (at most `k`), by shift-invert
/// Lanczos with full reorthogonalization and locking. Completeness is
/// certified by the inertia of `op - ceiling`.
pub fn lowest_eigenpairs(op: &DiscreteOperator, k: usize, ceiling: f64) -> Result<SpectralResult> {
    lowest_eigenpairs_seeded(op, k, ceiling, LANCZOS_SEED)
}

/// [`lowest_eigenpairs`] with an explicit seed for the Lanczos start vectors.
pub fn lowest_eigenpairs_seeded(op: &DiscreteOperator, k: usize, ceiling: f64, seed: u64) -> Result<SpectralResult> {
    let fact_top = factorize_nudged(op, ceiling)?;
    let count = fact_top.inertia();
    if count > k {
        return Err(Error::IncompleteBasis {
            requested: k,
            found: count,
        });
    }
    let mut meta = SolverMeta {
        iterations: 0,
        shifts: Vec::new(),
        certified_count: count,
    };
    if count == 0 {
        return Ok(SpectralResult {
            eigenvalues: vec![],
            eigenvectors: vec![],
            residuals: vec![],
            meta,
        });
    }

    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut round = 0;
    while locked.len() < count {
        if round >= LANCZOS_MAX_ROUNDS {
            return Err(Error::IncompleteBasis {
                requested: count,
                found: locked.len(),
            });
        }
        let (fact, wanted) = if round == 0 {
            (fact_top.clone(), count)
        } else {
            let sigma = locate_missing(op, &values, ceiling, count)?;
            (factorize_nudged(op, sigma)?, 1)
        };
        meta.shifts.push(fact.shift());
        let pairs = lanczos_run(
            op,
            &fact,
            &locked,
            ceiling,
            wanted.min(count - locked.len()),
            seed.wrapping_add(round as u64),
            &mut meta.iterations,
        )?;
        for p in pairs {
            if locked.len() == count {
                break;
            }
            let mut v = p.vector;
            orthogonalize(&mut v, &locked);
            let vn = norm2(&v);
            if vn < 0.5 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= vn);
            values.push(p.lambda);
            locked.push(v);
        }
        round += 1;
    }

    let pairs = rayleigh_ritz(op, &locked)?;
    let w = weight(op);
    let mut result = SpectralResult {
        eigenvalues: Vec::with_capacity(count),
        eigenvectors: Vec::with_capacity(count),
        residuals: Vec::with_capacity(count),
        meta,
    };
    for mut p in pairs {
        let res = residual(op, &p.vector, p.lambda);
        if res > RESIDUAL_RTOL * (p.lambda.abs() + 1.0) {
            return Err(Error::Numerical(format!(
                "eigenpair at {} has residual {res:.3e}",
                p.lambda
            )));
        }
        fix_sign(&mut p.vector);
        let s = 1.0 / w.sqrt();
        p.vector.iter_mut().for_each(|x| *x *= s);
        result.eigenvalues.push(p.lambda);
        result.eigenvectors.push(p.vector);
        result.residuals.push(res);
    }
    Ok(result)
}

/// Picks a shift next to eigenvalues not yet found, using inertia counts on
/// the intervals between the known ones.
fn locate_missing(op: &DiscreteOperator, known: &[f64], ceiling: f64, count: usize) -> Result<f64> {
    let mut sorted = known.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lowest = op.gershgorin().0 - 1.0;
    // breakpoints strictly between distinct known values
    let mut cuts = vec![lowest];
    for w in sorted.windows(2) {
        if w[1] - w[0] > 1e-9 * (1.0 + w[0].abs()) {
            cuts.push(0.5 * (w[0] + w[1]));
        }
    }
    cuts.push(ceiling);
    let mut below_prev = 0;
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        let below = if b == ceiling { count } else { inertia(op, b)? };
        let found = sorted.iter().filter(|&&x| x >= a && x < b).count();
        if below - below_prev > found {
            let inside: Vec<f64> = sorted.iter().copied().filter(|&x| x >= a && x < b).collect();
            // a degenerate partner of a known value, or a value elsewhere in (a, b)
            return Ok(match inside.first() {
                Some(&x) => x + 1e-7 * (1.0 + x.abs()),
                None => 0.5 * (a + b),
            });
        }
        below_prev = below;
    }
    Err(Error::Numerical(
        "inertia counts disagree with the computed eigenvalues".into(),
    ))
}

/// Full spectrum of a small operator by cyclic Jacobi; testing only.
pub fn dense_eig_oracle(op: &DiscreteOperator) -> Result<SpectralResult> {
    let n = op.dim();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::invalid(format!(
            "dense oracle refused: dimension {n} exceeds {DENSE_ORACLE_CAP}"
        )));
    }
    let (vals, vecs) = jacobi_eigen(&op.to_dense(), n)?;
    let s = 1.0 / weight(op).sqrt();
    let mut eigenvectors = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<f64> = (0..n).map(|i| vecs[i * n + j]).collect();
        fix_sign(&mut v);
        residuals.push(residual(op, &v, vals[j]));
        v.iter_mut().for_each(|x| *x *= s);
        eigenvectors.push(v);
    }
    Ok(SpectralResult {
        eigenvalues: vals,
        eigenvectors,
        residuals,
        meta: SolverMeta {
            iterations: 0,
            shifts: vec![],
            certified_count: n,
        },
    })
}

/// Cached factorization of `H - lambda` with iterative refinement.
#[derive(Debug, Clone)]
pub struct Resolvent<'a> {
    op: &'a DiscreteOperator,
    lambda: f64,
    fact: BandedFactorization,
}

impl<'a> Resolvent<'a> {
    pub fn new(op: &'a DiscreteOperator, lambda: f64) -> Result<Self> {
        let near = |e: Error| match e {
            Error::ShiftRejected { pivot, .. } => Error::NearSingular {
                lambda,
                detail: format!("zero pivot {pivot:.3e}"),
            },
            e => e,
        };
        let lo = banded_factorize(op, lambda - SPECTRAL_GUARD * (1.0 + lambda.abs())).map_err(near)?;
        let hi = banded_factorize(op, lambda + SPECTRAL_GUARD * (1.0 + lambda.abs())).map_err(near)?;
        if lo.inertia() != hi.inertia() {
            return Err(Error::NearSingular {
                lambda,
                detail: "an eigenvalue lies within the spectral guard".into(),
            });
        }
        let fact = banded_factorize(op, lambda).map_err(near)?;
        Ok(Self { op, lambda, fact })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn operator(&self) -> &DiscreteOperator {
        self.op
    }

    /// `(H - lambda)^{-1} f` with `||(H - lambda) u - f|| <= 1e-10 ||f||`.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let fnorm = norm2(f);
        if fnorm == 0.0 {
            return Ok(vec![0.0; f.len()]);
        }
        let mut u = self.fact.solve(f);
        let mut res = f64::INFINITY;
        for _ in 0..8 {
            let mut r = f.to_vec();
            let hu = self.op.mul(&u);
            for i in 0..r.len() {
                r[i] -= hu[i] - self.lambda * u[i];
            }
            let prev = res;
            res = norm2(&r) / fnorm;
            // stop at the target or once refinement has reached round-off
            if res <= 1e-3 * RESOLVENT_RTOL || (res <= RESOLVENT_RTOL && res > REFINE_STALL * prev) {
                break;
            }
            let du = self.fact.solve(&r);
            axpy(1.0, &du, &mut u);
        }
        if res > RESOLVENT_RTOL {
            // the last correction usually helps; re-measure before failing
            let hu = self.op.mul(&u);
            let r: Vec<f64> = (0..f.len()).map(|i| f[i] - hu[i] + self.lambda * u[i]).collect();
            res = norm2(&r) / fnorm;
        }
        if res > RESOLVENT_RTOL {
            return Err(Error::NearSingular {
                lambda: self.lambda,
                detail: format!("refinement stalled at relative residual {res:.3e}"),
            });
        }
        Ok(u)
    }
}

/// `u = (H - lambda)^{-1} f`.
pub fn resolvent_solve(op: &DiscreteOperator, lambda: f64, f: &[f64]) -> Result<Vec<f64>> {
    Resolvent::new(op, lambda)?.solve(f)
}

/// Reduced resolvent at an eigenvalue: `u = (H - lambda*)^{-1} (f - sum psi <f, psi>)`
/// with `u` orthogonal to every `psi`, via the bordered system
/// `[[H - lambda*, W Psi], [Psi^T W, 0]]`.
#[derive(Debug, Clone)]
pub struct DeflatedResolvent<'a> {
    op: &'a DiscreteOperator,
    lambda: f64,
    psi: Vec<Vec<f64>>,
    w: f64,
    fact: BandedFactorization,
    /// `M^{-1} W psi_j` with `M = H - lambda* + eps`.
    z: Vec<Vec<f64>>,
    /// Inverse of the Schur complement `Psi^T W Z`.
    s_inv: Vec<f64>,
}

impl<'a> DeflatedResolvent<'a> {
    /// `psi` must be `h^2`-orthonormal and span the eigenspace at `lambda`.
    pub fn new(op: &'a DiscreteOperator, lambda: f64, psi: &[Vec<f64>], eps: f64) -> Result<Self> {
        let p = psi.len();
        if p == 0 {
            return Err(Error::invalid("deflation needs at least one eigenvector"));
        }
        let w = weight(op);
        let fact = factorize_nudged(op, lambda - eps)?;
        let z: Vec<Vec<f64>> = psi
            .iter()
            .map(|v| {
                let wv: Vec<f64> = v.iter().map(|x| w * x).collect();
                fact.solve(&wv)
            })
            .collect();
        let mut s = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                s[i * p + j] = w * dot(&psi[i], &z[j]);
            }
        }
        let s_inv = invert_small(&s, p)?;
        Ok(Self {
            op,
            lambda,
            psi: psi.to_vec(),
            w,
            fact,
            z,
            s_inv,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Applies the bordered preconditioner to `(r, t)`.
    fn precondition(&self, r: &[f64], t: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.psi.len();
        let mut y = self.fact.solve(r);
        let g: Vec<f64> = (0..p).map(|i| self.w * dot(&self.psi[i], &y) - t[i]).collect();
        let nu: Vec<f64> = (0..p)
            .map(|i| (0..p).map(|j| self.s_inv[i * p + j] * g[j]).sum())
            .collect();
        for j in 0..p {
            axpy(-nu[j], &self.z[j], &mut y);
        }
        (y, nu)
    }

    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = f.len();
        let p = self.psi.len();
        let fnorm = norm2(f);
        if fnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut u = vec![0.0; n];
        let mut mu = vec![0.0; p];
        let mut prev = f64::INFINITY;
        for it in 0..DEFLATION_MAX_ITER {
            // residual of the bordered system
            let hu = self.op.mul(&u);
            let mut r: Vec<f64> = (0..n).map(|i| f[i] - (hu[i] - self.lambda * u[i])).collect();
            for j in 0..p {
                axpy(-self.w * mu[j], &self.psi[j], &mut r);
            }
            let t: Vec<f64> = (0..p).map(|j| -self.w * dot(&self.psi[j], &u)).collect();
            let res = norm2(&r) / fnorm;
            if it > 0 && (res <= 1e-3 * RESOLVENT_RTOL || (res <= RESOLVENT_RTOL && res > REFINE_STALL * prev)) {
                break;
            }
            prev = res;
            let (du, dmu) = self.precondition(&r, &t);
            axpy(1.0, &du, &mut u);
            axpy(1.0, &dmu, &mut mu);
        }
        // exact final projection onto the complement
        for v in &self.psi {
            let c = self.w * dot(&u, v);
            axpy(-c, v, &mut u);
        }
        let hu = self.op.mul(&u);
        let mut r: Vec<f64> = (0..n).map(|i| f[i] - (hu[i] - self.lambda * u[i])).collect();
        for v in &self.psi {
            let c = self.w * dot(f, v);
            axpy(-c, v, &mut r);
        }
        let res = norm2(&r) / fnorm;
        if res > RESIDUAL_RTOL {
            return Err(Error::DeflationDefect {
                residual: res,
                iterations: DEFLATION_MAX_ITER,
            });
        }
        Ok(u)
    }
}

/// `u = (H - lambda*)^{-1} (I - P) f`, `P` the `h^2`-orthogonal projector onto span(`psi`).
pub fn deflated_solve(
    op: &DiscreteOperator,
    lambda: f64,
    psi: &[Vec<f64>],
    f: &[f64],
) -> Result<Vec<f64>> {
    DeflatedResolvent::new(op, lambda, psi, 1e-3)?.solve(f)
}

/// Inverse of a small dense matrix by Gauss-Jordan with partial pivoting.
pub fn invert_small(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))
            .unwrap();
        if m[piv * n + c].abs() <= 1e-14 * scale {
            return Err(Error::Numerical("singular matrix in small inverse".into()));
        }
        for k in 0..n {
            m.swap(c * n + k, piv * n + k);
            inv.swap(c * n + k, piv * n + k);
        }
        let d = m[c * n + c];
        for k in 0..n {
            m[c * n + k] /= d;
            inv[c * n + k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r * n + c];
                if f != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= f * m[c * n + k];
                        inv[r * n + k] -= f * inv[c * n + k];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests;
