use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `value ~ prefactor * exp(-rate * l)` by least squares on the logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub points: usize,
}

impl ExpFit {
    pub fn eval(&self, l: f64) -> f64 {
        self.prefactor * (-self.rate * l).exp()
    }
}

pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ExpFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "an exponential fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::invalid(format!("cannot fit a non-positive value {} at l = {}", p.1, p.0)));
    }
    let n = points.len() as f64;
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all points share one abscissa".into()));
    }
    let sxy: f64 = points.iter().zip(&ys).map(|(p, y)| (p.0 - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = points.iter().zip(&ys).map(|(p, y)| (y - icept - slope * p.0).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(ExpFit {
        rate: -slope,
        prefactor: icept.exp(),
        r2,
        points: points.len(),
    })
}
