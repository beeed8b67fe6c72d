use crate::error::{Error, Result};
use crate::stripgrid::DiscreteOperator;

/// Relative size below which a pivot counts as zero.
pub const PIVOT_TOL: f64 = 1e-13;

/// Relative shift nudge applied when a factorization hits a zero pivot.
pub const SHIFT_NUDGE: f64 = 1e-10;

/// `A - sigma I = L D L^T` in profile (envelope) storage, without pivoting.
#[derive(Debug, Clone)]
pub struct BandedFactorization {
    n: usize,
    shift: f64,
    start: Vec<usize>,
    offs: Vec<usize>,
    /// Row `i` holds `L[i][start[i]..i]` followed by `D[i]`.
    vals: Vec<f64>,
    negatives: usize,
}

impl BandedFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Number of negative pivots, i.e. eigenvalues below the shift.
    pub fn inertia(&self) -> usize {
        self.negatives
    }

    pub fn pivots(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.vals[self.offs[i + 1] - 1]).collect()
    }

    /// Solves `(A - sigma I) x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let s = self.start[i];
            let row = &self.vals[self.offs[i]..self.offs[i + 1] - 1];
            let acc: f64 = row.iter().zip(&x[s..i]).map(|(l, y)| l * y).sum();
            x[i] -= acc;
        }
        for i in 0..self.n {
            x[i] /= self.vals[self.offs[i + 1] - 1];
        }
        for i in (0..self.n).rev() {
            let s = self.start[i];
            let xi = x[i];
            let row = &self.vals[self.offs[i]..self.offs[i + 1] - 1];
            for (l, y) in row.iter().zip(&mut x[s..i]) {
                *y -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Factorizes `op - sigma I`; a numerically zero pivot rejects the shift.
pub fn banded_factorize(op: &DiscreteOperator, sigma: f64) -> Result<BandedFactorization> {
    let n = op.dim();
    let start = op.row_starts();
    let mut offs = Vec::with_capacity(n + 1);
    offs.push(0);
    for i in 0..n {
        offs.push(offs[i] + (i - start[i]) + 1);
    }
    let mut vals = vec![0.0; offs[n]];
    let bw = op.band_width();
    for i in 0..n {
        let base = offs[i] - start[i];
        for k in 0..=bw.min(i - start[i]) {
            vals[base + i - k] += op.band_entry(i, k);
        }
        vals[offs[i + 1] - 1] -= sigma;
    }
    for b in op.blocks() {
        let m = b.nodes.len();
        for p in 0..m {
            let i = b.nodes[p];
            let base = offs[i] - start[i];
            for q in 0..=p {
                vals[base + b.nodes[q]] += b.values[p * m + q];
            }
        }
    }

    let mut negatives = 0;
    for i in 0..n {
        let si = start[i];
        let (done, rest) = vals.split_at_mut(offs[i]);
        let row = &mut rest[..offs[i + 1] - offs[i]];
        let aii = row[i - si];
        // row[j - si] becomes w_j = L_ij D_j
        for j in si..i {
            let sj = start[j];
            let lo = si.max(sj);
            let rj = &done[offs[j]..offs[j + 1] - 1];
            let mut acc = 0.0;
            for k in lo..j {
                acc += row[k - si] * rj[k - sj];
            }
            row[j - si] -= acc;
        }
        let mut dii = aii;
        for j in si..i {
            let dj = done[offs[j + 1] - 1];
            let w = row[j - si];
            let l = w / dj;
            dii -= w * l;
            row[j - si] = l;
        }
        let scale = (aii + sigma).abs().max(1.0);
        if dii.abs() < PIVOT_TOL * scale || !dii.is_finite() {
            return Err(Error::ShiftRejected {
                shift: sigma,
                row: i,
                pivot: dii,
            });
        }
        if dii < 0.0 {
            negatives += 1;
        }
        row[i - si] = dii;
    }
    Ok(BandedFactorization {
        n,
        shift: sigma,
        start,
        offs,
        vals,
        negatives,
    })
}

/// `sigma` moved by `k` nudges of `1e-10 (1 + |sigma|)`.
pub fn nudge(sigma: f64, k: u32) -> f64 {
    sigma + k as f64 * SHIFT_NUDGE * (1.0 + sigma.abs())
}

/// Factorizes at `sigma`, nudging the shift upward on zero pivots.
pub fn factorize_nudged(op: &DiscreteOperator, sigma: f64) -> Result<BandedFactorization> {
    let mut last = None;
    for k in 0..4 {
        match banded_factorize(op, nudge(sigma, k)) {
            Ok(f) => return Ok(f),
            Err(e @ Error::ShiftRejected { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Number of eigenvalues of `op` below `sigma` (Sylvester's law of inertia).
pub fn inertia(op: &DiscreteOperator, sigma: f64) -> Result<usize> {
    Ok(factorize_nudged(op, sigma)?.inertia())
}
