use serde::{Deserialize, Serialize};

use super::CouplingMatrix;
use crate::error::{Error, Result};
use crate::modes::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MatrixA,
    TwoSided,
    OneSided,
}

/// Predicted eigenvalues near `lambda*` at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction {
    pub method: Method,
    pub lambda_star: f64,
    pub l: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    pub error_order: String,
}

fn rate(nu1: f64, lambda: f64) -> Result<f64> {
    if !(lambda < nu1) {
        return Err(Error::ThresholdViolation { nu: nu1, lambda });
    }
    Ok((nu1 - lambda).sqrt())
}

/// `lambda_i = lambda* + tau_i` from the roots of the coupling matrix.
pub fn predict_thm14(lambda_star: f64, a: &CouplingMatrix) -> AsymptoticPrediction {
    let mut eigenvalues: Vec<f64> = a.roots.iter().map(|r| lambda_star + r[0]).collect();
    eigenvalues.sort_by(f64::total_cmp);
    let p = a.p();
    AsymptoticPrediction {
        method: Method::MatrixA,
        lambda_star,
        l: a.l,
        gap: (eigenvalues.len() >= 2).then(|| eigenvalues[eigenvalues.len() - 1] - eigenvalues[eigenvalues.len() - 2]),
        eigenvalues,
        side: None,
        error_order: format!("l^(2/{p}) exp(-4 l s1 / {p})"),
    }
}

/// Symmetric splitting `lambda* -+ 2 |beta_- beta_+| s_1 e^{-2 l s_1}` when
/// both limiting operators share `lambda*`.
pub fn predict_two_sided(lambda_star: f64, beta_minus: f64, beta_plus: f64, nu1: f64, l: f64) -> Result<AsymptoticPrediction> {
    let s = rate(nu1, lambda_star)?;
    let half = 2.0 * (beta_minus * beta_plus).abs() * s * (-2.0 * l * s).exp();
    Ok(AsymptoticPrediction {
        method: Method::TwoSided,
        lambda_star,
        l,
        eigenvalues: vec![lambda_star - half, lambda_star + half],
        gap: Some(2.0 * half),
        side: None,
        error_order: "l exp(-4 l s1)".into(),
    })
}

/// Shift of a simple eigenvalue of one side by a perturbation on the other
/// side without spectrum at `lambda*`: `lambda* + 2 s_1 beta^2 beta~ e^{-4 l s_1}`.
///
/// The sign follows from the coupling entry itself (a repulsive partner,
/// `beta~ > 0`, pushes the level up), which is what direct solves show.
pub fn predict_one_sided(
    lambda_star: f64,
    beta: f64,
    beta_tilde: f64,
    nu1: f64,
    l: f64,
    side: Side,
) -> Result<AsymptoticPrediction> {
    let s = rate(nu1, lambda_star)?;
    let shift = 2.0 * s * beta * beta * beta_tilde * (-4.0 * l * s).exp();
    Ok(AsymptoticPrediction {
        method: Method::OneSided,
        lambda_star,
        l,
        eigenvalues: vec![lambda_star + shift],
        gap: None,
        side: Some(side),
        error_order: "exp(-2 l (s1 + s2)) + l^2 exp(-6 l s1)".into(),
    })
}
