//! Transverse mode projection and far-field analysis of eigenfunctions and
//! resolvent solutions.
//!
//! Outside the support of the perturbation every transverse coefficient obeys
//! the free three-term recurrence of the discrete Laplacian exactly, so the
//! far field is a sum of discrete exponentials `q_j^{|c|}`. The amplitudes
//! below are defined with respect to those exact discrete rates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eigensolve::{lowest_eigenpairs, Resolvent, SpectralResult};
use crate::error::{Error, Result};
use crate::stripgrid::{assemble_perturbation, support_columns, DiscreteOperator, PerturbationSpec, StripGrid};
use crate::transverse::analytic_profile;

#[cfg(test)]
mod tests;

/// Eigenvalues closer than this fraction of `nu_1` to the threshold are not analysed.
pub const GAP_MIN_FRACTION: f64 = 0.05;
/// Plateau spread above which amplitude extraction is refused.
pub const PLATEAU_LIMIT: f64 = 0.05;
/// Functional values below this are treated as zero during rotation.
pub const ROTATION_FLOOR: f64 = 1e-12;
/// Eigenvalues closer than this (relative) are grouped into one level.
pub const MULTIPLICITY_TOL: f64 = 1e-7;

/// Which limiting operator a quantity belongs to. A `Minus` function sits on
/// the left of the pair and is analysed on its right flank (`x1 > 0`), a
/// `Plus` function the other way round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }

    /// `+1` if the far field of this side points to `+x1`.
    pub fn direction(self) -> i64 {
        match self {
            Side::Minus => 1,
            Side::Plus => -1,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        })
    }
}

/// Sampled `phi_j` at the interior transverse nodes.
pub fn mode_samples(grid: &StripGrid, j: usize) -> Vec<f64> {
    (0..grid.ny).map(|k| analytic_profile(j, grid.width, grid.x2(k))).collect()
}

/// `s_j = sqrt(nu_j(h) - lambda)` with the discrete threshold.
pub fn channel_rate(grid: &StripGrid, j: usize, lambda: f64) -> Result<f64> {
    let nu = grid.nu(j);
    if !(lambda < nu) {
        return Err(Error::ThresholdViolation { nu, lambda });
    }
    Ok((nu - lambda).sqrt())
}

/// Per-column decay factor `q_j < 1` of the free recurrence,
/// `q + 1/q = 2 + h^2 (nu_j - lambda)`.
pub fn channel_factor(grid: &StripGrid, j: usize, lambda: f64) -> Result<f64> {
    let s = channel_rate(grid, j, lambda)?;
    let t = grid.h * grid.h * s * s;
    Ok(1.0 + 0.5 * t - (t + 0.25 * t * t).sqrt())
}

/// Exact discrete decay rate `-ln(q_j) / h`; equals `s_j` up to `O(h^2)`.
pub fn discrete_rate(grid: &StripGrid, j: usize, lambda: f64) -> Result<f64> {
    Ok(-channel_factor(grid, j, lambda)?.ln() / grid.h)
}

fn column_of(grid: &StripGrid, x1: f64) -> Result<i64> {
    let c = grid.snap(x1);
    if (x1 - grid.x1(c)).abs() > 1e-9 * grid.h.max(x1.abs()) {
        log::warn!("station {x1} is off the grid; using column x1 = {}", grid.x1(c));
    }
    if !grid.contains_column(c) {
        return Err(Error::geometry(format!("station {x1} lies outside the grid")));
    }
    Ok(c)
}

fn project_column(u: &[f64], grid: &StripGrid, col: i64, phi: &[f64]) -> f64 {
    let base = grid.index(col, 0);
    grid.h * u[base..base + grid.ny].iter().zip(phi).map(|(a, b)| a * b).sum::<f64>()
}

/// `alpha_j(x1) = (u(x1, .), phi_j)` by the midpoint rule on the transverse nodes.
pub fn mode_project(u: &[f64], grid: &StripGrid, j: usize, x1: f64) -> Result<f64> {
    if u.len() != grid.dim() {
        return Err(Error::invalid("grid function does not match the grid"));
    }
    if j == 0 {
        return Err(Error::invalid("mode indices start at 1"));
    }
    let col = column_of(grid, x1)?;
    Ok(project_column(u, grid, col, &mode_samples(grid, j)))
}

/// All `ny` coefficients at one column; the sampled sines are an exactly
/// orthonormal basis, so `sum alpha_j^2 = h sum_k u^2`.
pub fn mode_coefficients(u: &[f64], grid: &StripGrid, col: i64) -> Vec<f64> {
    (1..=grid.ny)
        .map(|j| project_column(u, grid, col, &mode_samples(grid, j)))
        .collect()
}

/// Far-field continuation of a solution of the free equation beyond a column.
///
/// On the infinite strip a solution that is free for `dir * (c - col) >= 0`
/// and decays there is `sum_j alpha_j q_j^{|c - col|} phi_j`; this evaluates
/// it anywhere on that half-line, independently of the grid's length.
#[derive(Debug, Clone)]
pub struct ModalTail {
    grid: StripGrid,
    col: i64,
    dir: i64,
    alpha: Vec<f64>,
    q: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl ModalTail {
    pub fn new(u: &[f64], grid: &StripGrid, col: i64, dir: i64, lambda: f64) -> Result<Self> {
        if !grid.contains_column(col) {
            return Err(Error::geometry(format!("tail column {col} outside the grid")));
        }
        let q = (1..=grid.ny)
            .map(|j| channel_factor(grid, j, lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: *grid,
            col,
            dir: dir.signum(),
            alpha: mode_coefficients(u, grid, col),
            q,
            basis: (1..=grid.ny).map(|j| mode_samples(grid, j)).collect(),
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.alpha
    }

    /// Transverse values at column `c` (on the far side of the anchor column).
    pub fn column(&self, c: i64) -> Result<Vec<f64>> {
        let n = (c - self.col) * self.dir;
        if n < 0 {
            return Err(Error::geometry(format!(
                "column {c} lies behind the tail anchor {}",
                self.col
            )));
        }
        let mut out = vec![0.0; self.grid.ny];
        for (j, phi) in self.basis.iter().enumerate() {
            let amp = self.alpha[j] * self.q[j].powi(n as i32);
            if amp == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(phi) {
                *o += amp * p;
            }
        }
        Ok(out)
    }
}

/// A grid function that is free outside columns `-a..=a`, evaluated on any
/// column of the infinite strip: grid values next to the support, exact modal
/// tails beyond.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    grid: StripGrid,
    u: Vec<f64>,
    a: i64,
    left: ModalTail,
    right: ModalTail,
}

impl ExtendedField {
    pub fn new(u: &[f64], grid: &StripGrid, a: i64, lambda: f64) -> Result<Self> {
        if u.len() != grid.dim() {
            return Err(Error::invalid("grid function does not match the grid"));
        }
        Ok(Self {
            grid: *grid,
            u: u.to_vec(),
            a,
            left: ModalTail::new(u, grid, -a - 1, -1, lambda)?,
            right: ModalTail::new(u, grid, a + 1, 1, lambda)?,
        })
    }

    pub fn column(&self, c: i64) -> Result<Vec<f64>> {
        if c > self.a + 1 {
            self.right.column(c)
        } else if c < -self.a - 1 {
            self.left.column(c)
        } else {
            let base = self.grid.index(c, 0);
            Ok(self.u[base..base + self.grid.ny].to_vec())
        }
    }
}

/// Far-field record of one transverse mode along a set of stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub mode: usize,
    pub side: Side,
    pub stations: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `alpha_j` with the decay and the wall reflection removed.
    pub weighted: Vec<f64>,
    pub amplitude: f64,
    pub rate: Option<f64>,
    pub deviation: f64,
}

impl DecayProfile {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x1", "alpha_j", "weighted_amplitude"])?;
        for i in 0..self.stations.len() {
            out.serialize((self.stations[i], self.alpha[i], self.weighted[i]))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Station columns in `[a + 2/s_2, X - 4/s_1]` on the far side of `side`.
pub fn station_window(grid: &StripGrid, half_width: f64, lambda: f64, side: Side) -> Result<Vec<i64>> {
    let s1 = channel_rate(grid, 1, lambda)?;
    let s2 = channel_rate(grid, 2, lambda)?;
    let (lo_end, hi_end) = grid.x_range();
    let reach = match side {
        Side::Minus => hi_end,
        Side::Plus => -lo_end,
    };
    let (from, to) = (half_width + 2.0 / s2, reach - 4.0 / s1);
    let cols: Vec<i64> = (0..=grid.col_hi.max(-grid.col_lo))
        .filter(|&m| {
            let x = m as f64 * grid.h;
            x >= from - 1e-12 && x <= to + 1e-12
        })
        .map(|m| m * side.direction())
        .filter(|&c| grid.contains_column(c))
        .collect();
    if cols.len() < 3 {
        return Err(Error::geometry(format!(
            "station window [{from:.3}, {to:.3}] holds {} columns; lengthen the grid",
            cols.len()
        )));
    }
    Ok(cols)
}

/// Decay profile of mode `j` at the given columns, with the amplitude taken as
/// the median of `alpha_j e^{kappa |x1|} / (1 - e^{-2 kappa (X - |x1|)})`, the
/// denominator undoing the reflection from the Dirichlet end of the grid.
pub fn decay_profile(
    u: &[f64],
    grid: &StripGrid,
    j: usize,
    lambda: f64,
    side: Side,
    cols: &[i64],
) -> Result<DecayProfile> {
    if u.len() != grid.dim() {
        return Err(Error::invalid("grid function does not match the grid"));
    }
    let kappa = discrete_rate(grid, j, lambda)?;
    let (lo_end, hi_end) = grid.x_range();
    let reach = match side {
        Side::Minus => hi_end,
        Side::Plus => -lo_end,
    };
    let phi = mode_samples(grid, j);
    let mut stations = Vec::with_capacity(cols.len());
    let mut alpha = Vec::with_capacity(cols.len());
    let mut weighted = Vec::with_capacity(cols.len());
    for &c in cols {
        if !grid.contains_column(c) {
            return Err(Error::geometry(format!("station column {c} outside the grid")));
        }
        let x = grid.x1(c);
        let dist = x * side.direction() as f64;
        let a = project_column(u, grid, c, &phi);
        stations.push(x);
        alpha.push(a);
        weighted.push(a * (kappa * dist).exp() / (1.0 - (-2.0 * kappa * (reach - dist)).exp()));
    }
    let mut sorted = weighted.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let amplitude = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let deviation = if n == 0 {
        0.0
    } else if amplitude != 0.0 {
        (sorted[n - 1] - sorted[0]) / amplitude.abs()
    } else if sorted[n - 1] - sorted[0] == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let mut profile = DecayProfile {
        mode: j,
        side,
        stations,
        alpha,
        weighted,
        amplitude,
        rate: None,
        deviation,
    };
    profile.rate = effective_rate(&profile).ok();
    Ok(profile)
}

fn plateau_checked(profile: DecayProfile) -> Result<DecayProfile> {
    if profile.deviation > PLATEAU_LIMIT {
        return Err(Error::UnstableExtraction {
            deviation: profile.deviation,
            limit: PLATEAU_LIMIT,
        });
    }
    Ok(profile)
}

fn check_gap(grid: &StripGrid, lambda: f64) -> Result<()> {
    let nu = grid.threshold();
    if !(nu - lambda >= GAP_MIN_FRACTION * nu) {
        return Err(Error::ThresholdViolation { nu, lambda });
    }
    Ok(())
}

/// Far-field amplitude `beta` of an eigenfunction `psi ~ beta e^{-+ s_1 x1} phi_1`.
pub fn extract_beta(
    psi: &[f64],
    grid: &StripGrid,
    lambda: f64,
    side: Side,
    half_width: f64,
) -> Result<(f64, DecayProfile)> {
    check_gap(grid, lambda)?;
    let cols = station_window(grid, half_width, lambda, side)?;
    let profile = plateau_checked(decay_profile(psi, grid, 1, lambda, side, &cols)?)?;
    Ok((profile.amplitude, profile))
}

/// Orthogonal rotation of an eigenbasis so that only the first vector carries
/// a `phi_1` far field. Returns the rotated vectors and `beta >= 0`.
pub fn rotate_eigenbasis(
    psi: &[Vec<f64>],
    grid: &StripGrid,
    lambda: f64,
    side: Side,
    station: i64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    if psi.is_empty() {
        return Ok((Vec::new(), 0.0));
    }
    let kappa = discrete_rate(grid, 1, lambda)?;
    let phi = mode_samples(grid, 1);
    let dist = grid.x1(station) * side.direction() as f64;
    if !grid.contains_column(station) {
        return Err(Error::geometry(format!("reference station {station} outside the grid")));
    }
    let raw: Vec<f64> = psi.iter().map(|p| project_column(p, grid, station, &phi)).collect();
    if raw.iter().all(|a| a.abs() < ROTATION_FLOOR) {
        return Ok((psi.to_vec(), 0.0));
    }
    let v: Vec<f64> = raw.iter().map(|a| a * (kappa * dist).exp()).collect();
    let beta = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let p = psi.len();
    // Householder reflector Q = I - 2 w w^T with Q e_1 = v / |v|
    let mut w: Vec<f64> = v.iter().map(|x| x / beta).collect();
    w[0] -= 1.0;
    let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q: Vec<f64> = if wn < 1e-14 {
        (0..p * p).map(|i| if i / p == i % p { 1.0 } else { 0.0 }).collect()
    } else {
        w.iter_mut().for_each(|x| *x /= wn);
        (0..p * p)
            .map(|i| {
                let (r, c) = (i / p, i % p);
                (if r == c { 1.0 } else { 0.0 }) - 2.0 * w[r] * w[c]
            })
            .collect()
    };
    let n = psi[0].len();
    let rotated = (0..p)
        .map(|jcol| {
            let mut out = vec![0.0; n];
            for (i, src) in psi.iter().enumerate() {
                let c = q[i * p + jcol];
                if c != 0.0 {
                    out.iter_mut().zip(src).for_each(|(o, s)| *o += c * s);
                }
            }
            out
        })
        .collect();
    Ok((rotated, beta))
}

/// `beta~` of the side opposite to the eigenvalue: with
/// `U = (H_other - lambda)^{-1} L_other (e^{-+ s_1 x1} phi_1)`, the amplitude of
/// `U ~ beta~ e^{+- s_1 x1} phi_1` on the far flank of `other`. `well_side` is
/// the side that owns `lambda`; the exponent sign follows from it.
pub fn extract_beta_tilde(
    other: &DiscreteOperator,
    other_spec: &PerturbationSpec,
    lambda: f64,
    well_side: Side,
) -> Result<(f64, DecayProfile)> {
    let grid = *other.grid();
    check_gap(&grid, lambda)?;
    let side = well_side.opposite();
    let cols = station_window(&grid, other_spec.half_width, lambda, side)?;
    if other_spec.is_zero() {
        return Ok((0.0, decay_profile(&vec![0.0; grid.dim()], &grid, 1, lambda, side, &cols)?));
    }
    let s = channel_rate(&grid, 1, lambda)?;
    let phi = mode_samples(&grid, 1);
    // e^{-s x1} for a well on the left, e^{+s x1} for one on the right
    let sign = -(well_side.direction() as f64);
    let a = support_columns(other_spec.half_width, grid.h);
    let mut g = vec![0.0; grid.dim()];
    for c in (-a - 1)..=(a + 1) {
        if !grid.contains_column(c) {
            return Err(Error::geometry("support box does not fit the grid"));
        }
        let e = (sign * s * grid.x1(c)).exp();
        for k in 0..grid.ny {
            g[grid.index(c, k)] = e * phi[k];
        }
    }
    let f = assemble_perturbation(&grid, other_spec, 0.0)?.mul(&g);
    let resolvent = Resolvent::new(other, lambda).map_err(|e| match e {
        Error::NearSingular { lambda, .. } => Error::NearSingular {
            lambda,
            detail: "the energy is an eigenvalue of the opposite operator".into(),
        },
        e => e,
    })?;
    let u = resolvent.solve(&f)?;
    let profile = plateau_checked(decay_profile(&u, &grid, 1, lambda, side, &cols)?)?;
    Ok((profile.amplitude, profile))
}

/// Least-squares decay rate of `|alpha_j|` along the stations.
pub fn effective_rate(profile: &DecayProfile) -> Result<f64> {
    let pts: Vec<(f64, f64)> = profile
        .stations
        .iter()
        .zip(&profile.alpha)
        .filter(|(_, a)| a.abs() > 1e-13)
        .map(|(x, a)| (x * match profile.side {
            Side::Minus => 1.0,
            Side::Plus => -1.0,
        }, a.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable stations, at least 3 required",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("stations do not span a distance".into()));
    }
    Ok(-sxy / sxx)
}

/// One eigenvalue of a limiting operator with its rotated eigenspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingLevel {
    pub lambda: f64,
    pub multiplicity: usize,
    pub residual: f64,
    /// `None` when the level is too close to the threshold to be analysed.
    pub beta: Option<f64>,
    pub plateau_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_tilde: Option<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    #[serde(skip)]
    pub profile: Option<DecayProfile>,
}

/// Discrete spectrum of one limiting operator below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingSpectrum {
    pub side: Side,
    pub threshold: f64,
    pub grid: StripGrid,
    pub half_width: f64,
    pub levels: Vec<LimitingLevel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl LimitingSpectrum {
    /// Eigenvalues of `op` below `nu_1(h)`, grouped by multiplicity, rotated,
    /// and with `beta` extracted where the gap to the threshold allows.
    pub fn compute(op: &DiscreteOperator, spec: &PerturbationSpec, side: Side, max_pairs: usize) -> Result<Self> {
        let grid = *op.grid();
        let threshold = grid.threshold();
        let mut notes = Vec::new();
        let res = if spec.is_zero() {
            None
        } else {
            Some(lowest_eigenpairs(op, max_pairs, threshold)?)
        };
        let mut levels = Vec::new();
        if let Some(res) = res {
            for group in group_levels(&res) {
                let lambda = group.iter().map(|&i| res.eigenvalues[i]).sum::<f64>() / group.len() as f64;
                let residual = group.iter().map(|&i| res.residuals[i]).fold(0.0, f64::max);
                let vecs: Vec<Vec<f64>> = group.iter().map(|&i| res.eigenvectors[i].clone()).collect();
                let mut level = LimitingLevel {
                    lambda,
                    multiplicity: group.len(),
                    residual,
                    beta: None,
                    plateau_deviation: None,
                    beta_tilde: None,
                    vectors: vecs,
                    profile: None,
                };
                if threshold - lambda < GAP_MIN_FRACTION * threshold {
                    let msg = format!(
                        "eigenvalue {lambda:.6} lies within {GAP_MIN_FRACTION} nu_1 of the threshold; amplitude not extracted"
                    );
                    log::warn!("{msg}");
                    notes.push(msg);
                } else {
                    let cols = station_window(&grid, spec.half_width, lambda, side)?;
                    let (rot, b) = rotate_eigenbasis(&level.vectors, &grid, lambda, side, cols[cols.len() / 2])?;
                    level.vectors = rot;
                    if b == 0.0 {
                        // no first-channel far field at all, e.g. odd across the strip
                        level.beta = Some(0.0);
                    } else {
                        let (beta, profile) = extract_beta(&level.vectors[0], &grid, lambda, side, spec.half_width)?;
                        level.beta = Some(beta);
                        level.plateau_deviation = Some(profile.deviation);
                        level.profile = Some(profile);
                    }
                }
                levels.push(level);
            }
        }
        if levels.is_empty() {
            notes.push("no discrete spectrum below the threshold".into());
        }
        Ok(Self {
            side,
            threshold,
            grid,
            half_width: spec.half_width,
            levels,
            notes,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.lambda).collect()
    }

    /// Level whose eigenvalue is within `tol` of `lambda`.
    pub fn level_near(&self, lambda: f64, tol: f64) -> Option<&LimitingLevel> {
        self.levels.iter().find(|l| (l.lambda - lambda).abs() <= tol)
    }
}

fn group_levels(res: &SpectralResult) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &lam) in res.eigenvalues.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (lam - res.eigenvalues[g[0]]).abs() <= MULTIPLICITY_TOL * (1.0 + lam.abs()) => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}
