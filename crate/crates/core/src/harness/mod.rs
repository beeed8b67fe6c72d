//! Ladder experiments: direct eigensolves of the two-perturbation operator
//! over a range of distances, clustered around the limiting eigenvalues and
//! compared with the reduced-matrix and closed-form predictions.

mod fit;
mod study;
mod verify;

pub use fit::{fit_exponential, ExpFit};
pub use study::{convergence_study, tune_depth, ConvergenceTable, StudyRow, TunedSpec, TUNE_MAX_ITER, TUNE_TOL};
pub use verify::{verify, Check, Status, Theorem, Tolerances, Verdict};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{
    predict_one_sided, predict_thm14, predict_two_sided, AsymptoticPrediction, CouplingMatrix, LimitingSide, Reduction,
};
use crate::eigensolve::{lowest_eigenpairs_seeded, LANCZOS_SEED};
use crate::error::{Error, Result};
use crate::modes::{channel_rate, extract_beta_tilde, LimitingLevel, LimitingSpectrum, Side};
use crate::stripgrid::{assemble_double, assemble_limiting, snap_distance, DiscreteOperator, PerturbationSpec, StripGrid};

/// Limiting eigenvalues of the two sides closer than this are one `lambda*`.
pub const MATCH_TOL: f64 = 1e-7;
/// Minimum free length beyond the support on the direct grids.
pub const MIN_MARGIN: f64 = 8.0;
/// Free length beyond the support, in decay lengths `1/s_1`.
pub const MARGIN_DECAY_LENGTHS: f64 = 10.0;
/// Same for the limiting grids, which also host the amplitude stations.
pub const LIMITING_MIN_MARGIN: f64 = 16.0;
pub const LIMITING_DECAY_LENGTHS: f64 = 12.0;
/// Fraction of `nu_1 - lambda*` that bounds the cluster radius.
pub const CLUSTER_FRACTION: f64 = 0.2;
/// Multiple of the widest gap that bounds the cluster radius.
pub const CLUSTER_GAP_FACTOR: f64 = 10.0;
/// Absolute eigenvalue agreement below which residuals count as solver noise.
pub const DEFAULT_RESIDUAL_FLOOR: f64 = 1e-10;

fn default_pairs() -> usize {
    24
}

fn default_seed() -> u64 {
    LANCZOS_SEED
}

/// Physics and numerics of one ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    /// Strip width `d`.
    pub width: f64,
    /// Target mesh size; the transverse step is `d / round(d / h)`.
    pub h: f64,
    pub minus: PerturbationSpec,
    pub plus: PerturbationSpec,
    /// Half-distances `l`; the perturbations sit at `-l` and `+l`.
    pub ls: Vec<f64>,
    /// Free length beyond the supports on the direct grids; default by the margin rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limiting_margin: Option<f64>,
    #[serde(default = "default_pairs")]
    pub max_pairs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_floor: Option<f64>,
    /// Worker threads for the per-distance tasks; 0 uses all cores. Not
    /// persisted: results do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
}

impl LadderConfig {
    pub fn new(width: f64, h: f64, minus: PerturbationSpec, plus: PerturbationSpec, ls: Vec<f64>) -> Self {
        Self {
            width,
            h,
            minus,
            plus,
            ls,
            margin: None,
            limiting_margin: None,
            max_pairs: default_pairs(),
            seed: default_seed(),
            residual_floor: None,
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("width", self.width), ("h", self.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        self.minus.validate()?;
        self.plus.validate()?;
        if self.ls.is_empty() {
            return Err(Error::invalid("the ladder needs at least one distance"));
        }
        let min = self.minus.half_width + self.plus.half_width;
        if let Some(&l) = self.ls.iter().find(|&&l| !(l.is_finite() && l >= min)) {
            return Err(Error::geometry(format!("distance {l} is below a_- + a_+ = {min}")));
        }
        if self.ls.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("distances must be strictly ascending"));
        }
        for m in [self.margin, self.limiting_margin].into_iter().flatten() {
            if !(m > 0.0) {
                return Err(Error::invalid(format!("margins must be positive, got {m}")));
            }
        }
        if self.max_pairs == 0 {
            return Err(Error::invalid("max_pairs must be at least 1"));
        }
        Ok(())
    }

    fn spec(&self, side: Side) -> &PerturbationSpec {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub width: f64,
    pub h: f64,
    pub ny: usize,
    /// `nu_1` of the discrete cross-section.
    pub threshold: f64,
}

/// One member `lambda*` of the union of the limiting spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub lambda_star: f64,
    pub p_minus: usize,
    pub p_plus: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_plus: Option<f64>,
    /// Side carrying the level when only one side does.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub well_side: Option<Side>,
    /// Amplitude of the partner's response when only one side carries the level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_tilde: Option<f64>,
    /// `sqrt(nu_1(h) - lambda*)`.
    pub s: f64,
    /// Matching radius.
    pub delta: f64,
}

impl ClusterInfo {
    pub fn p(&self) -> usize {
        self.p_minus + self.p_plus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    Cluster(usize),
    NearThreshold,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectLevel {
    pub lambda: f64,
    pub residual: f64,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPrediction {
    pub cluster: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_a: Option<AsymptoticPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<AsymptoticPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Direct solve at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    /// Requested half-distance.
    pub l: f64,
    /// Half-distance realized on the grid.
    pub l_eff: f64,
    pub half_length: f64,
    pub unknowns: usize,
    /// Inertia count below the threshold.
    pub certified_count: usize,
    pub levels: Vec<DirectLevel>,
    pub predictions: Vec<ClusterPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LadderPoint {
    /// Ascending eigenvalues assigned to cluster `c`.
    pub fn members(&self, c: usize) -> Vec<f64> {
        self.levels
            .iter()
            .filter(|lv| lv.assignment == Assignment::Cluster(c))
            .map(|lv| lv.lambda)
            .collect()
    }
}

/// Measured `l`-dependence of one cluster, as `(l_eff, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSeries {
    pub cluster: usize,
    /// Top two members' distance.
    pub gaps: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_fit: Option<ExpFit>,
    /// `|(lambda_{p-1} + lambda_p)/2 - lambda*|`.
    pub midpoints: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub midpoint_fit: Option<ExpFit>,
    /// `lambda - lambda*` of single-member clusters.
    pub shifts: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_fit: Option<ExpFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub config: LadderConfig,
    pub grid: GridInfo,
    pub minus: LimitingSpectrum,
    pub plus: LimitingSpectrum,
    pub clusters: Vec<ClusterInfo>,
    pub points: Vec<LadderPoint>,
    pub series: Vec<ClusterSeries>,
    pub residual_floor: f64,
    pub verdicts: Vec<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl LadderReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Per-distance eigenvalue table with the header
    /// `l, index, lambda, residual, cluster, pred_matrixA, pred_closed`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["l", "index", "lambda", "residual", "cluster", "pred_matrixA", "pred_closed"])?;
        for pt in &self.points {
            for (i, lv) in pt.levels.iter().enumerate() {
                let (cluster, a, c) = match lv.assignment {
                    Assignment::Cluster(k) => {
                        let rank = pt.members(k).iter().position(|&x| x == lv.lambda).unwrap_or(0);
                        let pred = pt.predictions.iter().find(|p| p.cluster == k);
                        let pick = |p: Option<&AsymptoticPrediction>| {
                            p.and_then(|p| p.eigenvalues.get(rank)).map(|v| v.to_string()).unwrap_or_default()
                        };
                        (
                            k.to_string(),
                            pick(pred.and_then(|p| p.matrix_a.as_ref())),
                            pick(pred.and_then(|p| p.closed.as_ref())),
                        )
                    }
                    Assignment::NearThreshold => ("threshold".into(), String::new(), String::new()),
                    Assignment::Unmatched => ("unmatched".into(), String::new(), String::new()),
                };
                out.write_record([
                    pt.l.to_string(),
                    i.to_string(),
                    lv.lambda.to_string(),
                    lv.residual.to_string(),
                    cluster,
                    a,
                    c,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
        if let Some(p) = json {
            std::fs::write(p, self.to_json()?)?;
        }
        if let Some(p) = csv {
            self.write_csv(std::fs::File::create(p)?)?;
        }
        Ok(())
    }
}

/// Limiting data shared by all ladder points.
pub struct LimitingData {
    pub minus_op: DiscreteOperator,
    pub plus_op: DiscreteOperator,
    pub minus: LimitingSpectrum,
    pub plus: LimitingSpectrum,
}

impl LimitingData {
    fn op(&self, side: Side) -> &DiscreteOperator {
        match side {
            Side::Minus => &self.minus_op,
            Side::Plus => &self.plus_op,
        }
    }

    fn spectrum(&self, side: Side) -> &LimitingSpectrum {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }

    fn level(&self, side: Side, lambda: f64) -> Option<&LimitingLevel> {
        self.spectrum(side).level_near(lambda, MATCH_TOL)
    }
}

fn slowest_rate(grid: &StripGrid, spectra: &[&LimitingSpectrum]) -> Option<f64> {
    spectra
        .iter()
        .flat_map(|s| s.levels.iter())
        .filter_map(|lv| channel_rate(grid, 1, lv.lambda).ok())
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))))
}

fn limiting_side(cfg: &LadderConfig, side: Side) -> Result<(DiscreteOperator, LimitingSpectrum)> {
    let spec = cfg.spec(side);
    let build = |margin: f64| -> Result<(DiscreteOperator, LimitingSpectrum)> {
        let grid = StripGrid::symmetric(cfg.width, cfg.h, spec.half_width + margin)?;
        let op = assemble_limiting(&grid, spec)?;
        let spectrum = LimitingSpectrum::compute(&op, spec, side, cfg.max_pairs)?;
        Ok((op, spectrum))
    };
    if cfg.limiting_margin.is_some() {
        return build(limiting_margin(cfg, None));
    }
    let (op, spectrum) = build(LIMITING_MIN_MARGIN)?;
    let m = limiting_margin(cfg, slowest_rate(op.grid(), &[&spectrum]));
    if m > LIMITING_MIN_MARGIN {
        build(m)
    } else {
        Ok((op, spectrum))
    }
}

fn limiting_margin(cfg: &LadderConfig, s: Option<f64>) -> f64 {
    cfg.limiting_margin.unwrap_or_else(|| match s {
        Some(s) => LIMITING_MIN_MARGIN.max(LIMITING_DECAY_LENGTHS / s),
        None => LIMITING_MIN_MARGIN,
    })
}

/// Rescales the depth of `side` so that its lowest limiting eigenvalue
/// matches the other side's, on the grid the ladder will use for it.
pub fn tune_side(cfg: &mut LadderConfig, side: Side) -> Result<TunedSpec> {
    let (other_op, other) = limiting_side(cfg, side.opposite())?;
    let target = other
        .levels
        .first()
        .map(|l| l.lambda)
        .ok_or_else(|| Error::TuningFailure(format!("the {} side has no eigenvalue to match", side.opposite())))?;
    let s = channel_rate(other_op.grid(), 1, target).ok();
    let spec = cfg.spec(side).clone();
    let grid = StripGrid::symmetric(cfg.width, cfg.h, spec.half_width + limiting_margin(cfg, s))?;
    let tuned = tune_depth(&spec, target, &grid)?;
    match side {
        Side::Minus => cfg.minus = tuned.spec.clone(),
        Side::Plus => cfg.plus = tuned.spec.clone(),
    }
    Ok(tuned)
}

/// Limiting operators and spectra of both sides.
pub fn limiting_data(cfg: &LadderConfig) -> Result<LimitingData> {
    let (minus_op, minus) = limiting_side(cfg, Side::Minus)?;
    let (plus_op, plus) = limiting_side(cfg, Side::Plus)?;
    Ok(LimitingData {
        minus_op,
        plus_op,
        minus,
        plus,
    })
}

/// Union of the limiting spectra with multiplicities and amplitudes.
fn build_clusters(cfg: &LadderConfig, lim: &LimitingData) -> Result<(Vec<ClusterInfo>, Vec<String>)> {
    let grid = *lim.minus_op.grid();
    let nu = grid.threshold();
    let mut stars: Vec<f64> = Vec::new();
    for lam in lim.minus.eigenvalues().into_iter().chain(lim.plus.eigenvalues()) {
        if let Some(s) = stars.iter_mut().find(|s| (**s - lam).abs() <= MATCH_TOL) {
            *s = 0.5 * (*s + lam);
        } else {
            stars.push(lam);
        }
    }
    stars.sort_by(f64::total_cmp);
    let mut notes = Vec::new();
    let mut out = Vec::with_capacity(stars.len());
    for &lam in &stars {
        let lm = lim.level(Side::Minus, lam);
        let lp = lim.level(Side::Plus, lam);
        let mut info = ClusterInfo {
            lambda_star: lam,
            p_minus: lm.map_or(0, |l| l.multiplicity),
            p_plus: lp.map_or(0, |l| l.multiplicity),
            beta_minus: lm.and_then(|l| l.beta),
            beta_plus: lp.and_then(|l| l.beta),
            well_side: None,
            beta_tilde: None,
            s: channel_rate(&grid, 1, lam)?,
            delta: CLUSTER_FRACTION * (nu - lam),
        };
        let single = match (lm, lp) {
            (Some(l), None) if l.multiplicity == 1 => Some(Side::Minus),
            (None, Some(l)) if l.multiplicity == 1 => Some(Side::Plus),
            _ => None,
        };
        if let Some(side) = single {
            info.well_side = Some(side);
            let other = side.opposite();
            match extract_beta_tilde(lim.op(other), cfg.spec(other), lam, side) {
                Ok((bt, _)) => info.beta_tilde = Some(bt),
                Err(e) => notes.push(format!("beta~ at {lam:.9}: {e}")),
            }
        }
        out.push(info);
    }
    // keep neighbouring clusters apart
    for i in 0..out.len() {
        let mut d = out[i].delta;
        if i > 0 {
            d = d.min(0.5 * (out[i].lambda_star - out[i - 1].lambda_star));
        }
        if i + 1 < out.len() {
            d = d.min(0.5 * (out[i + 1].lambda_star - out[i].lambda_star));
        }
        out[i].delta = d;
    }
    Ok((out, notes))
}

/// Assigns each eigenvalue to the nearest `lambda*` within its radius, or
/// flags it.
pub fn assign(lambda: f64, clusters: &[ClusterInfo], threshold: f64) -> Assignment {
    let nearest = clusters
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.lambda_star - lambda).abs().total_cmp(&(b.1.lambda_star - lambda).abs()));
    match nearest {
        Some((i, c)) if (c.lambda_star - lambda).abs() <= c.delta => Assignment::Cluster(i),
        _ => {
            let radius = clusters.iter().map(|c| c.delta).fold(CLUSTER_FRACTION * threshold, f64::min);
            if threshold - lambda <= radius {
                Assignment::NearThreshold
            } else {
                Assignment::Unmatched
            }
        }
    }
}

fn margin(cfg: &LadderConfig, clusters: &[ClusterInfo]) -> f64 {
    cfg.margin.unwrap_or_else(|| {
        let s = clusters.iter().map(|c| c.s).fold(f64::INFINITY, f64::min);
        if s.is_finite() {
            MIN_MARGIN.max(MARGIN_DECAY_LENGTHS / s)
        } else {
            MIN_MARGIN
        }
    })
}

fn predictions(cfg: &LadderConfig, lim: &LimitingData, clusters: &[ClusterInfo], l: f64) -> Vec<ClusterPrediction> {
    let nu = lim.minus_op.grid().threshold();
    clusters
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let lam = c.lambda_star;
            let psi = |side: Side| lim.level(side, lam).map(|lv| lv.vectors.as_slice()).unwrap_or(&[]);
            let minus = LimitingSide {
                spec: &cfg.minus,
                op: &lim.minus_op,
                psi: psi(Side::Minus),
            };
            let plus = LimitingSide {
                spec: &cfg.plus,
                op: &lim.plus_op,
                psi: psi(Side::Plus),
            };
            let mut pred = ClusterPrediction {
                cluster: k,
                matrix_a: None,
                closed: None,
                coupling: None,
                note: None,
            };
            match Reduction::new(minus, plus, lam, l).and_then(|r| r.coupling_matrix()) {
                Ok(cm) => {
                    pred.matrix_a = Some(predict_thm14(lam, &cm));
                    pred.coupling = Some(cm);
                }
                Err(e) => pred.note = Some(e.to_string()),
            }
            let l_eff = snap_distance(l, lim.minus_op.grid().h) as f64 * lim.minus_op.grid().h;
            pred.closed = match (c.p_minus, c.p_plus, c.beta_minus, c.beta_plus) {
                (1, 1, Some(bm), Some(bp)) => predict_two_sided(lam, bm, bp, nu, l_eff).ok(),
                _ => match (c.well_side, c.beta_tilde) {
                    (Some(side), Some(bt)) => {
                        let beta = match side {
                            Side::Minus => c.beta_minus,
                            Side::Plus => c.beta_plus,
                        };
                        beta.and_then(|b| predict_one_sided(lam, b, bt, nu, l_eff, side).ok())
                    }
                    _ => None,
                },
            };
            pred
        })
        .collect()
}

fn solve_point(cfg: &LadderConfig, lim: &LimitingData, clusters: &[ClusterInfo], l: f64) -> LadderPoint {
    let h_grid = lim.minus_op.grid().h;
    let a = cfg.minus.half_width.max(cfg.plus.half_width);
    let half_length = l + a + margin(cfg, clusters);
    let mut pt = LadderPoint {
        l,
        l_eff: snap_distance(l, h_grid) as f64 * h_grid,
        half_length,
        unknowns: 0,
        certified_count: 0,
        levels: Vec::new(),
        predictions: Vec::new(),
        error: None,
    };
    let direct = (|| -> Result<_> {
        let grid = StripGrid::symmetric(cfg.width, cfg.h, half_length)?;
        let op = assemble_double(&grid, &cfg.minus, &cfg.plus, l)?;
        let res = lowest_eigenpairs_seeded(&op, cfg.max_pairs, grid.threshold(), cfg.seed)?;
        Ok((grid, res))
    })();
    match direct {
        Ok((grid, res)) => {
            pt.unknowns = grid.dim();
            pt.certified_count = res.meta.certified_count;
            pt.levels = res
                .eigenvalues
                .iter()
                .zip(&res.residuals)
                .map(|(&lambda, &residual)| DirectLevel {
                    lambda,
                    residual,
                    assignment: assign(lambda, clusters, grid.threshold()),
                })
                .collect();
        }
        Err(e) => {
            log::warn!("direct solve at l = {l} failed: {e}");
            pt.error = Some(e.to_string());
        }
    }
    pt.predictions = predictions(cfg, lim, clusters, l);
    pt
}

/// Narrows each cluster radius to `10 gap(l_min)` once the first point is known.
fn narrow_clusters(clusters: &mut [ClusterInfo], first: &LadderPoint) {
    if first.error.is_some() {
        return;
    }
    for (k, c) in clusters.iter_mut().enumerate() {
        let members = first.members(k);
        let spread = match members.len() {
            0 => continue,
            1 => (members[0] - c.lambda_star).abs(),
            n => members[n - 1] - members[0],
        };
        if spread > 0.0 {
            c.delta = c.delta.min(CLUSTER_GAP_FACTOR * spread);
        }
    }
}

fn series(clusters: &[ClusterInfo], points: &[LadderPoint]) -> Vec<ClusterSeries> {
    clusters
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut s = ClusterSeries {
                cluster: k,
                gaps: Vec::new(),
                gap_fit: None,
                midpoints: Vec::new(),
                midpoint_fit: None,
                shifts: Vec::new(),
                shift_fit: None,
            };
            for pt in points.iter().filter(|p| p.error.is_none()) {
                let m = pt.members(k);
                match m.len() {
                    0 => {}
                    1 if c.p() == 1 => s.shifts.push([pt.l_eff, m[0] - c.lambda_star]),
                    1 => {}
                    n => {
                        s.gaps.push([pt.l_eff, m[n - 1] - m[n - 2]]);
                        s.midpoints.push([pt.l_eff, (0.5 * (m[n - 1] + m[n - 2]) - c.lambda_star).abs()]);
                    }
                }
            }
            let pairs = |v: &[[f64; 2]]| v.iter().map(|p| (p[0], p[1].abs())).collect::<Vec<_>>();
            s.gap_fit = fit_exponential(&pairs(&s.gaps)).ok();
            s.midpoint_fit = fit_exponential(&pairs(&s.midpoints)).ok();
            s.shift_fit = fit_exponential(&pairs(&s.shifts)).ok();
            s
        })
        .collect()
}

/// Runs the direct solves and predictions for every distance of the ladder.
pub fn run_ladder(cfg: &LadderConfig) -> Result<LadderReport> {
    cfg.validate()?;
    let lim = limiting_data(cfg)?;
    run_ladder_with(cfg, &lim)
}

/// [`run_ladder`] with precomputed limiting data.
pub fn run_ladder_with(cfg: &LadderConfig, lim: &LimitingData) -> Result<LadderReport> {
    cfg.validate()?;
    let grid = *lim.minus_op.grid();
    let threshold = grid.threshold();
    let (mut clusters, mut notes) = build_clusters(cfg, lim)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    // the smallest distance fixes the cluster radii before the rest is assigned
    let first = solve_point(cfg, lim, &clusters, cfg.ls[0]);
    narrow_clusters(&mut clusters, &first);
    let rest: Vec<LadderPoint> =
        pool.install(|| cfg.ls[1..].par_iter().map(|&l| solve_point(cfg, lim, &clusters, l)).collect());
    let mut points = Vec::with_capacity(cfg.ls.len());
    let mut first = first;
    for lv in &mut first.levels {
        lv.assignment = assign(lv.lambda, &clusters, threshold);
    }
    points.push(first);
    points.extend(rest);

    if points.iter().all(|p| p.error.is_some()) {
        return Err(Error::Numerical(format!(
            "every direct solve failed; first error: {}",
            points[0].error.as_deref().unwrap_or("")
        )));
    }
    for pt in &points {
        if let Some(e) = &pt.error {
            notes.push(format!("l = {}: {e}", pt.l));
        }
        let stray = pt.levels.iter().filter(|lv| lv.assignment == Assignment::Unmatched).count();
        if stray > 0 {
            notes.push(format!("l = {}: {stray} eigenvalue(s) outside every cluster", pt.l));
        }
    }
    let series = series(&clusters, &points);
    let mut report = LadderReport {
        config: cfg.clone(),
        grid: GridInfo {
            width: grid.width,
            h: grid.h,
            ny: grid.ny,
            threshold,
        },
        minus: lim.minus.clone(),
        plus: lim.plus.clone(),
        clusters,
        points,
        series,
        residual_floor: cfg.residual_floor.unwrap_or(DEFAULT_RESIDUAL_FLOOR),
        verdicts: Vec::new(),
        notes,
    };
    let tol = Tolerances::default();
    report.verdicts = Theorem::ALL
        .iter()
        .filter(|t| verify::applicable(&report, **t))
        .map(|&t| verify(&report, t, &tol))
        .collect();
    Ok(report)
}
