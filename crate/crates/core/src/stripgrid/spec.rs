use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar field on the support box, in coordinates relative to the
/// perturbation center (`x1`) and the lower wall (`x2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Field {
    Constant {
        value: f64,
    },
    /// `amplitude * exp(-(x1/width_x1)^2 - ((x2 - center_x2)/width_x2)^2)`;
    /// without `width_x2` the field is constant across the section.
    Gaussian {
        amplitude: f64,
        width_x1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width_x2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center_x2: Option<f64>,
    },
    /// Scattered samples `(x1, x2, value)`, evaluated by nearest sample.
    Table { points: Vec<[f64; 3]> },
    /// CSV file with columns `x1, x2, value`; replaced by a table on load.
    Csv { path: PathBuf },
}

impl Default for Field {
    fn default() -> Self {
        Field::Constant { value: 0.0 }
    }
}

impl Field {
    pub fn zero() -> Self {
        Field::default()
    }

    pub fn constant(value: f64) -> Self {
        Field::Constant { value }
    }

    pub fn eval(&self, x1: f64, x2: f64, width: f64) -> f64 {
        match self {
            Field::Constant { value } => *value,
            Field::Gaussian {
                amplitude,
                width_x1,
                width_x2,
                center_x2,
            } => {
                let mut e = (x1 / width_x1).powi(2);
                if let Some(w2) = width_x2 {
                    let c = center_x2.unwrap_or(0.5 * width);
                    e += ((x2 - c) / w2).powi(2);
                }
                amplitude * (-e).exp()
            }
            Field::Table { points } => {
                let mut best = f64::INFINITY;
                let mut value = 0.0;
                for p in points {
                    let dist = (p[0] - x1).powi(2) + (p[1] - x2).powi(2);
                    if dist < best {
                        best = dist;
                        value = p[2];
                    }
                }
                value
            }
            // unresolved files are rejected before assembly
            Field::Csv { .. } => f64::NAN,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Field::Constant { value } => *value == 0.0,
            Field::Gaussian { amplitude, .. } => *amplitude == 0.0,
            Field::Table { points } => points.iter().all(|p| p[2] == 0.0),
            Field::Csv { .. } => false,
        }
    }

    fn resolve(&mut self, base: &Path) -> Result<()> {
        if let Field::Csv { path } = self {
            let full = if path.is_absolute() { path.clone() } else { base.join(&path) };
            *self = Field::Table {
                points: read_samples_csv(&full)?,
            };
        }
        Ok(())
    }

    fn check_resolved(&self) -> Result<()> {
        match self {
            Field::Csv { path } => Err(Error::Validation(format!(
                "field file {} was not loaded",
                path.display()
            ))),
            _ => Ok(()),
        }
    }
}

/// Reads `x1, x2, value` rows (header mandatory).
pub fn read_samples_csv(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64)>() {
        let (a, b, c) = rec?;
        out.push([a, b, c]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `amplitude * exp(-|x - y|^2 / length^2)`.
    Gaussian { amplitude: f64, length: f64 },
    /// `amplitude * left(x) * right(y)`; symmetric only when `left` and `right` are proportional.
    Product {
        amplitude: f64,
        left: Field,
        right: Field,
    },
}

impl Kernel {
    pub fn eval(&self, x: (f64, f64), y: (f64, f64), width: f64) -> f64 {
        match self {
            Kernel::Gaussian { amplitude, length } => {
                let r2 = (x.0 - y.0).powi(2) + (x.1 - y.1).powi(2);
                amplitude * (-r2 / (length * length)).exp()
            }
            Kernel::Product {
                amplitude,
                left,
                right,
            } => amplitude * left.eval(x.0, x.1, width) * right.eval(y.0, y.1, width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Zero,
    Potential {
        potential: Field,
    },
    /// `-div(G grad u) + b0 u` with `G = [[g11, g12], [g21, g22]]`.
    DivergenceForm {
        g11: Field,
        #[serde(default)]
        g12: Field,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g21: Option<Field>,
        g22: Field,
        #[serde(default)]
        b0: Field,
    },
    /// Strength `b(x2)` on the transverse segment at `x1 = station`.
    DeltaLine { station: f64, strength: Field },
    Integral { kernel: Kernel },
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Half-length `a` of the support box `(-a, a) x (0, d)`.
    pub half_width: f64,
    /// Overall multiplier of the payload.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl PerturbationSpec {
    pub fn zero(half_width: f64) -> Self {
        Self {
            half_width,
            scale: 1.0,
            payload: Payload::Zero,
        }
    }

    pub fn potential(half_width: f64, potential: Field) -> Self {
        Self {
            half_width,
            scale: 1.0,
            payload: Payload::Potential { potential },
        }
    }

    /// Potential constant over `(-a, a) x (0, d)`.
    pub fn square_well(half_width: f64, value: f64) -> Self {
        Self::potential(half_width, Field::constant(value))
    }

    pub fn divergence_form(half_width: f64, g11: Field, g12: Field, g22: Field, b0: Field) -> Self {
        Self {
            half_width,
            scale: 1.0,
            payload: Payload::DivergenceForm {
                g11,
                g12,
                g21: None,
                g22,
                b0,
            },
        }
    }

    pub fn delta_line(half_width: f64, station: f64, strength: Field) -> Self {
        Self {
            half_width,
            scale: 1.0,
            payload: Payload::DeltaLine { station, strength },
        }
    }

    pub fn integral(half_width: f64, kernel: Kernel) -> Self {
        Self {
            half_width,
            scale: 1.0,
            payload: Payload::Integral { kernel },
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.scale *= factor;
        s
    }

    pub fn is_zero(&self) -> bool {
        if self.scale == 0.0 {
            return true;
        }
        match &self.payload {
            Payload::Zero => true,
            Payload::Potential { potential } => potential.is_identically_zero(),
            Payload::DivergenceForm {
                g11,
                g12,
                g21,
                g22,
                b0,
            } => {
                g11.is_identically_zero()
                    && g12.is_identically_zero()
                    && g21.as_ref().map_or(true, Field::is_identically_zero)
                    && g22.is_identically_zero()
                    && b0.is_identically_zero()
            }
            Payload::DeltaLine { strength, .. } => strength.is_identically_zero(),
            Payload::Integral { kernel } => match kernel {
                Kernel::Gaussian { amplitude, .. } => *amplitude == 0.0,
                Kernel::Product { amplitude, .. } => *amplitude == 0.0,
            },
        }
    }

    /// Replaces CSV field references by their loaded samples.
    pub fn resolve_files(&mut self, base: &Path) -> Result<()> {
        for f in self.fields_mut() {
            f.resolve(base)?;
        }
        Ok(())
    }

    fn fields_mut(&mut self) -> Vec<&mut Field> {
        match &mut self.payload {
            Payload::Zero => vec![],
            Payload::Potential { potential } => vec![potential],
            Payload::DivergenceForm {
                g11,
                g12,
                g21,
                g22,
                b0,
            } => {
                let mut v = vec![g11, g12, g22, b0];
                if let Some(g) = g21 {
                    v.push(g);
                }
                v
            }
            Payload::DeltaLine { strength, .. } => vec![strength],
            Payload::Integral { kernel } => match kernel {
                Kernel::Gaussian { .. } => vec![],
                Kernel::Product { left, right, .. } => vec![left, right],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::Validation(format!(
                "support half-width must be positive, got {}",
                self.half_width
            )));
        }
        if !self.scale.is_finite() {
            return Err(Error::Validation("scale must be finite".into()));
        }
        let mut me = self.clone();
        for f in me.fields_mut() {
            f.check_resolved()?;
        }
        match &self.payload {
            Payload::DeltaLine { station, .. } if station.abs() > self.half_width => {
                Err(Error::Validation(format!(
                    "delta-line station {station} lies outside (-{a}, {a})",
                    a = self.half_width
                )))
            }
            Payload::DivergenceForm { g12, g21: Some(g21), .. } if g12 != g21 => Err(
                Error::Validation("coefficient matrix G must be symmetric (g12 != g21)".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_shape() {
        let s = PerturbationSpec::square_well(1.0, -0.7);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(
            j,
            r#"{"half_width":1.0,"kind":"potential","potential":{"type":"constant","value":-0.7}}"#
        );
        let back: PerturbationSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let z: PerturbationSpec = serde_json::from_str(r#"{"half_width":2,"kind":"zero"}"#).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn asymmetric_g_is_rejected() {
        let mut s = PerturbationSpec::divergence_form(
            1.0,
            Field::zero(),
            Field::constant(0.1),
            Field::zero(),
            Field::zero(),
        );
        if let Payload::DivergenceForm { g21, .. } = &mut s.payload {
            *g21 = Some(Field::constant(0.2));
        }
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn csv_fields_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "x1,x2,value\n0.0,1.0,-2.5\n0.5,1.0,-1.0\n").unwrap();
        let mut s = PerturbationSpec::potential(1.0, Field::Csv { path: "v.csv".into() });
        assert!(s.validate().is_err());
        s.resolve_files(dir.path()).unwrap();
        s.validate().unwrap();
        let Payload::Potential { potential } = &s.payload else { panic!() };
        assert_eq!(potential.eval(0.1, 1.0, 3.0), -2.5);
        assert_eq!(potential.eval(0.4, 1.1, 3.0), -1.0);
    }
}
