use serde::{Deserialize, Serialize};

use super::{LadderConfig, LIMITING_MIN_MARGIN};
use crate::eigensolve::lowest_eigenpairs;
use crate::error::{Error, Result};
use crate::modes::channel_rate;
use crate::stripgrid::{assemble_limiting, PerturbationSpec, StripGrid};

/// Target accuracy of the tuned eigenvalue.
pub const TUNE_TOL: f64 = 1e-9;
pub const TUNE_MAX_ITER: usize = 60;
const BRACKET_STEPS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedSpec {
    pub spec: PerturbationSpec,
    pub multiplier: f64,
    pub lambda: f64,
    pub iterations: usize,
}

/// Lowest eigenvalue of the limiting operator, or the threshold when there is none.
fn lowest(grid: &StripGrid, spec: &PerturbationSpec) -> Result<f64> {
    let op = assemble_limiting(grid, spec)?;
    let res = lowest_eigenpairs(&op, 8, grid.threshold())?;
    Ok(res.eigenvalues.first().copied().unwrap_or(grid.threshold()))
}

/// Scales the template's depth until its lowest eigenvalue equals `target`.
///
/// The eigenvalue is assumed to decrease with the multiplier (an attractive
/// template). A bracket is found by doubling or halving, then refined by the
/// Illinois variant of regula falsi.
pub fn tune_depth(template: &PerturbationSpec, target: f64, grid: &StripGrid) -> Result<TunedSpec> {
    let nu = grid.threshold();
    if !(target < nu) {
        return Err(Error::TuningFailure(format!(
            "target {target} is not below the threshold {nu}; no bound state to tune"
        )));
    }
    let f = |m: f64| -> Result<f64> { Ok(lowest(grid, &template.scaled(m))? - target) };
    let f1 = f(1.0)?;
    if f1.abs() <= TUNE_TOL {
        return Ok(TunedSpec {
            spec: template.clone(),
            multiplier: 1.0,
            lambda: target + f1,
            iterations: 0,
        });
    }
    let step = if f1 > 0.0 { 2.0 } else { 0.5 };
    let (mut a, mut fa) = (1.0, f1);
    let (mut b, mut fb) = (1.0, f1);
    let mut found = false;
    for _ in 0..BRACKET_STEPS {
        b *= step;
        fb = f(b)?;
        if fb.signum() != fa.signum() {
            found = true;
            break;
        }
        a = b;
        fa = fb;
    }
    if !found {
        return Err(Error::TuningFailure(format!(
            "no bracket for target {target} within multipliers {:e}..{:e}",
            step.powi(-1),
            b
        )));
    }
    let mut side = 0i8;
    for it in 1..=TUNE_MAX_ITER {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc.abs() <= TUNE_TOL {
            return Ok(TunedSpec {
                spec: template.scaled(c),
                multiplier: c,
                lambda: target + fc,
                iterations: it,
            });
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::TuningFailure(format!(
        "no convergence to {TUNE_TOL:e} within {TUNE_MAX_ITER} iterations"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    /// Realized mesh size or half-length.
    pub param: f64,
    pub value: f64,
    /// Change from the previous row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Previous change over this change.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub quantity: String,
    pub h_rows: Vec<StudyRow>,
    pub x_rows: Vec<StudyRow>,
    /// Observed order from the last two mesh ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    /// Richardson estimate of the mesh error on the finest grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_error: Option<f64>,
}

fn fill(rows: &mut [StudyRow]) {
    for i in 1..rows.len() {
        rows[i].delta = Some(rows[i].value - rows[i - 1].value);
        if let (Some(prev), Some(cur)) = (rows[i - 1].delta, rows[i].delta) {
            rows[i].ratio = Some(prev / cur);
        }
    }
}

/// Sweeps the mesh size at fixed half-length and the half-length at fixed mesh
/// for the lowest limiting eigenvalue (of the minus side, else the plus side).
/// With no perturbation at all the quantity is the discrete threshold.
pub fn convergence_study(cfg: &LadderConfig, hs: &[f64], xs: &[f64]) -> Result<ConvergenceTable> {
    let spec = if !cfg.minus.is_zero() { &cfg.minus } else { &cfg.plus };
    let free = spec.is_zero();
    let quantity = if free { "nu_1(h)" } else { "lambda*" };
    let x_fixed = spec.half_width + cfg.limiting_margin.unwrap_or(LIMITING_MIN_MARGIN);
    let value = |grid: &StripGrid| -> Result<f64> {
        if free {
            Ok(grid.threshold())
        } else {
            lowest(grid, spec)
        }
    };

    let mut h_rows = Vec::with_capacity(hs.len());
    for &h in hs {
        let grid = StripGrid::symmetric(cfg.width, h, x_fixed)?;
        h_rows.push(StudyRow {
            param: grid.h,
            value: value(&grid)?,
            delta: None,
            ratio: None,
            predicted_ratio: None,
        });
    }
    fill(&mut h_rows);
    for i in 2..h_rows.len() {
        let (h0, h1, h2) = (h_rows[i - 2].param, h_rows[i - 1].param, h_rows[i].param);
        h_rows[i].predicted_ratio = Some((h0 * h0 - h1 * h1) / (h1 * h1 - h2 * h2));
    }
    let n = h_rows.len();
    let order = (n >= 3)
        .then(|| h_rows[n - 1].ratio.map(|r| r.abs().ln() / (h_rows[n - 2].param / h_rows[n - 1].param).ln()))
        .flatten();
    let h_error = (n >= 2)
        .then(|| {
            let (h1, h2) = (h_rows[n - 2].param, h_rows[n - 1].param);
            h_rows[n - 1].delta.map(|d| (d * h2 * h2 / (h1 * h1 - h2 * h2)).abs())
        })
        .flatten();

    let mut x_rows = Vec::with_capacity(xs.len());
    let mut rate = None;
    for &x in xs {
        let grid = StripGrid::symmetric(cfg.width, cfg.h, x)?;
        let v = value(&grid)?;
        if !free {
            rate = channel_rate(&grid, 1, v).ok();
        }
        x_rows.push(StudyRow {
            param: grid.half_length(),
            value: v,
            delta: None,
            ratio: None,
            predicted_ratio: None,
        });
    }
    fill(&mut x_rows);
    if let Some(s) = rate {
        for i in 2..x_rows.len() {
            let dx = x_rows[i].param - x_rows[i - 1].param;
            x_rows[i].predicted_ratio = Some((2.0 * s * dx).exp());
        }
    }
    Ok(ConvergenceTable {
        quantity: quantity.into(),
        h_rows,
        x_rows,
        order,
        h_error,
    })
}
