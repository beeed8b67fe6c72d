//! Finite-difference discretization of the strip `R x (0, d)` and assembly
//! of the Laplacian and of compactly supported perturbations.
//!
//! Nodes sit at `x1 = i h` for integer columns `i` and at `x2 = (k + 1) h`,
//! `k = 0..ny`; Dirichlet walls are at `x2 = 0, d` and at the two columns just
//! outside the grid. Node index is `(i - col_lo) * ny + k`, so all weighted
//! inner products carry the factor `h^2`.

mod operator;
mod spec;

pub use operator::{DenseBlock, DiscreteOperator};
pub use spec::{read_samples_csv, Field, Kernel, Payload, PerturbationSpec};

use serde::{Deserialize, Serialize};

use crate::eigensolve::inertia;
use crate::error::{Error, Result};
use crate::transverse::discrete_nu;

/// Relative tolerance of the form-bound bisection.
pub const FORM_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub width: f64,
    pub h: f64,
    pub ny: usize,
    pub col_lo: i64,
    pub col_hi: i64,
}

impl StripGrid {
    /// Grid on `(-X, X)` with mesh size close to `h_target` and `X >= half_length`.
    pub fn symmetric(width: f64, h_target: f64, half_length: f64) -> Result<Self> {
        let ny = transverse_points(width, h_target)?;
        let h = width / (ny + 1) as f64;
        if !(half_length > h) {
            return Err(Error::geometry(format!(
                "half-length {half_length} does not exceed the mesh size {h}"
            )));
        }
        let m = (half_length / h - 1e-9).ceil() as i64 - 1;
        Self::with_columns(width, ny, -m, m)
    }

    pub fn with_columns(width: f64, ny: usize, col_lo: i64, col_hi: i64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid(format!("width must be positive, got {width}")));
        }
        if ny == 0 {
            return Err(Error::invalid("at least one transverse node is required"));
        }
        if col_hi < col_lo {
            return Err(Error::geometry(format!("empty column range {col_lo}..={col_hi}")));
        }
        Ok(Self {
            width,
            h: width / (ny + 1) as f64,
            ny,
            col_lo,
            col_hi,
        })
    }

    pub fn nx(&self) -> usize {
        (self.col_hi - self.col_lo + 1) as usize
    }

    pub fn dim(&self) -> usize {
        self.nx() * self.ny
    }

    pub fn x1(&self, col: i64) -> f64 {
        col as f64 * self.h
    }

    pub fn x2(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.h
    }

    /// Left and right Dirichlet ends.
    pub fn x_range(&self) -> (f64, f64) {
        (self.x1(self.col_lo - 1), self.x1(self.col_hi + 1))
    }

    /// `X` for a symmetric grid, so that `2X / (nx + 1) = h`.
    pub fn half_length(&self) -> f64 {
        let (lo, hi) = self.x_range();
        0.5 * (hi - lo)
    }

    #[inline]
    pub fn index(&self, col: i64, k: usize) -> usize {
        debug_assert!(col >= self.col_lo && col <= self.col_hi && k < self.ny);
        (col - self.col_lo) as usize * self.ny + k
    }

    pub fn try_index(&self, col: i64, k: usize) -> Option<usize> {
        (col >= self.col_lo && col <= self.col_hi && k < self.ny).then(|| self.index(col, k))
    }

    /// Column and transverse index of a node.
    pub fn node(&self, idx: usize) -> (i64, usize) {
        (self.col_lo + (idx / self.ny) as i64, idx % self.ny)
    }

    pub fn contains_column(&self, col: i64) -> bool {
        col >= self.col_lo && col <= self.col_hi
    }

    /// Nearest column to `x1`.
    pub fn snap(&self, x1: f64) -> i64 {
        (x1 / self.h).round() as i64
    }

    /// Discrete transverse eigenvalue `nu_j(h)`.
    pub fn nu(&self, j: usize) -> f64 {
        discrete_nu(j, self.width, self.ny)
    }

    /// Bottom of the essential spectrum of the discrete Laplacian.
    pub fn threshold(&self) -> f64 {
        self.nu(1)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Same grid with all columns shifted by `cols`.
    pub fn translated(&self, cols: i64) -> Self {
        Self {
            col_lo: self.col_lo + cols,
            col_hi: self.col_hi + cols,
            ..*self
        }
    }

    pub fn same_cross_section(&self, other: &StripGrid) -> bool {
        self.ny == other.ny && self.width == other.width
    }
}

/// Number of interior transverse nodes for a target mesh size.
pub fn transverse_points(width: f64, h_target: f64) -> Result<usize> {
    if !(width > 0.0) || !(h_target > 0.0) || !width.is_finite() || !h_target.is_finite() {
        return Err(Error::invalid(format!(
            "width {width} and mesh size {h_target} must be positive"
        )));
    }
    let ny = (width / h_target).round() as i64 - 1;
    if ny < 1 {
        return Err(Error::invalid(format!(
            "mesh size {h_target} leaves no interior node across width {width}"
        )));
    }
    Ok(ny as usize)
}

/// Half-width of a support measured in columns.
pub fn support_columns(half_width: f64, h: f64) -> i64 {
    (half_width / h + 1e-9).floor() as i64
}

/// Support nodes of a perturbation centered on column `center`, in ascending index order.
pub fn support_nodes(grid: &StripGrid, half_width: f64, center: i64) -> Vec<usize> {
    let a = support_columns(half_width, grid.h);
    let mut out = Vec::with_capacity(((2 * a + 1) as usize) * grid.ny);
    for c in (center - a)..=(center + a) {
        if grid.contains_column(c) {
            out.extend((0..grid.ny).map(|k| grid.index(c, k)));
        }
    }
    out
}

/// Five-point Dirichlet Laplacian `-Delta_h`.
pub fn assemble_laplacian(grid: &StripGrid) -> DiscreteOperator {
    let mut op = DiscreteOperator::zeros(*grid);
    let w = 1.0 / (grid.h * grid.h);
    for c in grid.col_lo..=grid.col_hi {
        for k in 0..grid.ny {
            let i = grid.index(c, k);
            op.add_diagonal(i, 4.0 * w);
            if k > 0 {
                op.add_entry(i, i - 1, -w);
            }
            if c > grid.col_lo {
                op.add_entry(i, grid.index(c - 1, k), -w);
            }
        }
    }
    op
}

/// Discretized perturbation `L` translated to the column nearest `center`.
pub fn assemble_perturbation(
    grid: &StripGrid,
    spec: &PerturbationSpec,
    center: f64,
) -> Result<DiscreteOperator> {
    assemble_at_column(grid, spec, grid.snap(center), true)
}

/// `-Delta + L` with `L` centered at the origin.
pub fn assemble_limiting(grid: &StripGrid, spec: &PerturbationSpec) -> Result<DiscreteOperator> {
    Ok(assemble_laplacian(grid).add(&assemble_at_column(grid, spec, 0, true)?))
}

/// The perturbation restricted to its own support box: a grid of columns
/// `-A..=A` carrying `L` centered at column 0.
pub fn assemble_support_box(spec: &PerturbationSpec, width: f64, ny: usize) -> Result<(StripGrid, DiscreteOperator)> {
    let h = width / (ny + 1) as f64;
    let a = support_columns(spec.half_width, h);
    let grid = StripGrid::with_columns(width, ny, -a, a)?;
    let op = assemble_at_column(&grid, spec, 0, false)?;
    Ok((grid, op))
}

/// Column offset of the two centers, `round(l / h)`.
pub fn snap_distance(l: f64, h: f64) -> i64 {
    (l / h).round() as i64
}

/// `-Delta + L_-(. + l) + L_+(. - l)`, i.e. `L_-` centered at `-l` and `L_+` at `+l`.
pub fn assemble_double(
    grid: &StripGrid,
    minus: &PerturbationSpec,
    plus: &PerturbationSpec,
    l: f64,
) -> Result<DiscreteOperator> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::geometry(format!("distance must be positive, got {l}")));
    }
    let lc = snap_distance(l, grid.h);
    if ((lc as f64 * grid.h) - l).abs() > 1e-9 * l.max(1.0) {
        log::debug!("distance {l} snapped to {}", lc as f64 * grid.h);
    }
    if l + 1e-9 < minus.half_width + plus.half_width {
        return Err(Error::geometry(format!(
            "distance {l} is below a_- + a_+ = {}",
            minus.half_width + plus.half_width
        )));
    }
    let am = support_columns(minus.half_width, grid.h);
    let ap = support_columns(plus.half_width, grid.h);
    if -lc + am >= lc - ap {
        return Err(Error::geometry(format!(
            "shifted supports overlap at distance {l}"
        )));
    }
    let lm = assemble_at_column(grid, minus, -lc, true)?;
    let lp = assemble_at_column(grid, plus, lc, true)?;
    Ok(assemble_laplacian(grid).add(&lm).add(&lp))
}

fn assemble_at_column(
    grid: &StripGrid,
    spec: &PerturbationSpec,
    center: i64,
    check_margin: bool,
) -> Result<DiscreteOperator> {
    spec.validate()?;
    let a = support_columns(spec.half_width, grid.h);
    let (lo, hi) = (center - a, center + a);
    if lo < grid.col_lo || hi > grid.col_hi {
        return Err(Error::geometry(format!(
            "support columns {lo}..={hi} leave the grid {}..={}",
            grid.col_lo, grid.col_hi
        )));
    }
    if check_margin {
        let margin = (lo - grid.col_lo).min(grid.col_hi - hi) as f64 * grid.h;
        if margin < grid.width {
            log::warn!(
                "margin {margin:.3} between support and truncation is below one transverse wavelength"
            );
        }
    }
    let mut op = DiscreteOperator::zeros(*grid);
    if spec.is_zero() {
        return Ok(op);
    }
    let s = spec.scale;
    let h = grid.h;
    let d = grid.width;
    let rel = |c: i64| (c - center) as f64 * h;
    match &spec.payload {
        Payload::Zero => {}
        Payload::Potential { potential } => {
            for c in lo..=hi {
                for k in 0..grid.ny {
                    let v = potential.eval(rel(c), grid.x2(k), d);
                    op.add_diagonal(grid.index(c, k), s * v);
                }
            }
        }
        Payload::DivergenceForm {
            g11,
            g12,
            g22,
            b0,
            ..
        } => {
            let w = s / (h * h);
            for c in lo..=hi {
                let x = rel(c);
                for k in 0..grid.ny {
                    let i = grid.index(c, k);
                    op.add_diagonal(i, s * b0.eval(x, grid.x2(k), d));
                    // longitudinal edge to the next support column
                    if c < hi {
                        let g = w * g11.eval(x + 0.5 * h, grid.x2(k), d);
                        let j = grid.index(c + 1, k);
                        op.add_diagonal(i, g);
                        op.add_diagonal(j, g);
                        op.add_entry(i, j, -g);
                    }
                    // transverse edges, including the ones reaching the walls
                    let below = w * g22.eval(x, (k as f64 + 0.5) * h, d);
                    op.add_diagonal(i, below);
                    if k > 0 {
                        op.add_diagonal(i - 1, below);
                        op.add_entry(i, i - 1, -below);
                    }
                    if k + 1 == grid.ny {
                        op.add_diagonal(i, w * g22.eval(x, (k as f64 + 1.5) * h, d));
                    }
                }
            }
            // mixed term on cells [c, c+1] x [k, k+1]; wall corners carry u = 0
            for c in lo..hi {
                let xm = rel(c) + 0.5 * h;
                for kk in -1..grid.ny as i64 {
                    let g = 0.5 * w * g12.eval(xm, (kk as f64 + 1.5) * h, d);
                    if g == 0.0 {
                        continue;
                    }
                    let node = |cc: i64, k: i64| {
                        (k >= 0 && (k as usize) < grid.ny).then(|| grid.index(cc, k as usize))
                    };
                    let na = node(c, kk);
                    let nb = node(c + 1, kk);
                    let nc = node(c, kk + 1);
                    let nd = node(c + 1, kk + 1);
                    for (n, v) in [(na, g), (nd, g), (nb, -g), (nc, -g)] {
                        if let Some(n) = n {
                            op.add_diagonal(n, v);
                        }
                    }
                    if let (Some(p), Some(q)) = (na, nd) {
                        op.add_entry(p, q, -g);
                    }
                    if let (Some(p), Some(q)) = (nb, nc) {
                        op.add_entry(p, q, g);
                    }
                }
            }
        }
        Payload::DeltaLine { station, strength } => {
            let c = center + (station / h).round() as i64;
            let c = c.clamp(lo, hi);
            for k in 0..grid.ny {
                let b = strength.eval(*station, grid.x2(k), d);
                op.add_diagonal(grid.index(c, k), s * b / h);
            }
        }
        Payload::Integral { kernel } => {
            let nodes = support_nodes(grid, spec.half_width, center);
            let m = nodes.len();
            let pts: Vec<(f64, f64)> = nodes
                .iter()
                .map(|&i| {
                    let (c, k) = grid.node(i);
                    (rel(c), grid.x2(k))
                })
                .collect();
            let mut values = vec![0.0; m * m];
            let mut scale_max: f64 = 0.0;
            let mut asym: f64 = 0.0;
            for p in 0..m {
                for q in p..m {
                    let v = kernel.eval(pts[p], pts[q], d);
                    if q != p {
                        let vt = kernel.eval(pts[q], pts[p], d);
                        asym = asym.max((v - vt).abs());
                    }
                    scale_max = scale_max.max(v.abs());
                    values[p * m + q] = s * h * h * v;
                    values[q * m + p] = s * h * h * v;
                }
            }
            if asym > 1e-12 * scale_max.max(f64::MIN_POSITIVE) {
                return Err(Error::Validation(format!(
                    "integral kernel is not symmetric (defect {asym:.3e})"
                )));
            }
            op.push_block(DenseBlock { nodes, values });
        }
    }
    Ok(op)
}

/// Constants of the relative form bound `|(L u, u)| <= c0 ||grad u||^2 + c1 ||u||^2`
/// on the support box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormBound {
    pub c0: f64,
    pub c1: f64,
    /// Smallest generalized eigenvalue of `L u = mu (-Delta + 1) u` on the box.
    pub mu_min: f64,
}

/// Estimates the form-bound constants by bisection on the inertia of
/// `L - mu (-Delta + 1)` over the Dirichlet support box.
pub fn check_form_bound(spec: &PerturbationSpec, width: f64, h_target: f64) -> Result<FormBound> {
    let ny = transverse_points(width, h_target)?;
    let h = width / (ny + 1) as f64;
    let a = support_columns(spec.half_width, h);
    let grid = StripGrid::with_columns(width, ny, -a, a)?;
    let l = assemble_at_column(&grid, spec, 0, false)?;
    let mut b = assemble_laplacian(&grid);
    b.shift_diagonal(1.0);

    let pencil = |mu: f64| l.add(&b.scaled(-mu));
    let negatives = |mu: f64| -> Result<usize> { inertia(&pencil(mu), 0.0) };

    // a semidefinite L has mu_min = 0 exactly; probe just below zero
    let mu_min = if spec.is_zero() || negatives(-FORM_BOUND_TOL)? == 0 {
        0.0
    } else {
        // every Rayleigh quotient of the pencil is >= min(0, lambda_min(L))
        let mut lo = l.gershgorin().0.min(-1.0);
        let mut hi = -FORM_BOUND_TOL;
        while negatives(lo)? > 0 {
            lo *= 2.0;
        }
        while hi - lo > FORM_BOUND_TOL * lo.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if negatives(mid)? > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let c0 = (-mu_min).max(0.0);
    if c0 >= 1.0 {
        log::warn!("form-bound constant c0 = {c0:.4} is not below 1");
    }
    Ok(FormBound {
        c0,
        c1: c0,
        mu_min,
    })
}
