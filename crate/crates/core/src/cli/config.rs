use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{LadderConfig, Theorem};
use crate::modes::Side;
use crate::stripgrid::PerturbationSpec;

pub const SCHEMA: &str = "wgspec-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub width: f64,
    pub h: f64,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub limiting_margin: Option<f64>,
}

/// A perturbation given inline or as a path to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecSource {
    File { file: PathBuf },
    Inline(PerturbationSpec),
}

fn zero_source() -> SpecSource {
    SpecSource::Inline(PerturbationSpec::zero(1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbations {
    #[serde(default = "zero_source")]
    pub minus: SpecSource,
    #[serde(default = "zero_source")]
    pub plus: SpecSource,
}

impl Default for Perturbations {
    fn default() -> Self {
        Self {
            minus: zero_source(),
            plus: zero_source(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "unit")]
    pub step: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    #[serde(default)]
    pub ls: Option<Vec<f64>>,
    #[serde(default)]
    pub range: Option<Range>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    #[serde(default)]
    pub max_pairs: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub residual_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
    All,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransverseOptions {
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default)]
    pub fd: bool,
}

/// Rescales one side's depth so its lowest level matches the other side's.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tune {
    pub side: Side,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub geometry: Geometry,
    #[serde(default)]
    pub perturbations: Perturbations,
    #[serde(default)]
    pub ladder: Option<Ladder>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub verify: Option<Vec<String>>,
    #[serde(default)]
    pub transverse: TransverseOptions,
    #[serde(default)]
    pub tune: Option<Tune>,
    #[serde(default)]
    pub beta_tilde: bool,
}

/// A parsed configuration with its perturbations loaded.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: RunConfig,
    pub minus: PerturbationSpec,
    pub plus: PerturbationSpec,
    pub base: PathBuf,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.into_inner().to_string())
    })
}

fn load_spec(src: &SpecSource, base: &Path, path: &str) -> Result<PerturbationSpec> {
    let mut spec = match src {
        SpecSource::Inline(s) => s.clone(),
        SpecSource::File { file } => {
            let full = base.join(file);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| config_err(path, format!("cannot read {}: {e}", full.display())))?;
            parse::<PerturbationSpec>(&text).map_err(|e| match e {
                Error::Config { path: inner, message } => config_err(&format!("{path}<{inner}>"), message),
                other => other,
            })?
        }
    };
    spec.resolve_files(base).map_err(|e| config_err(path, e.to_string()))?;
    spec.validate().map_err(|e| config_err(path, e.to_string()))?;
    Ok(spec)
}

impl Loaded {
    pub fn from_str(text: &str, base: &Path) -> Result<Self> {
        let raw: RunConfig = parse(text)?;
        if raw.schema != SCHEMA {
            return Err(config_err("schema", format!("expected \"{SCHEMA}\", got \"{}\"", raw.schema)));
        }
        for (path, v) in [("geometry.width", raw.geometry.width), ("geometry.h", raw.geometry.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(path, format!("must be positive, got {v}")));
            }
        }
        if raw.geometry.h >= raw.geometry.width {
            return Err(config_err("geometry.h", "mesh size must be below the width"));
        }
        for (path, v) in [
            ("geometry.margin", raw.geometry.margin),
            ("geometry.limiting_margin", raw.geometry.limiting_margin),
            ("solver.residual_floor", raw.solver.residual_floor),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(config_err(path, format!("must be positive, got {v}")));
                }
            }
        }
        if raw.solver.max_pairs == Some(0) {
            return Err(config_err("solver.max_pairs", "must be at least 1"));
        }
        if let Some(tags) = &raw.verify {
            for (i, t) in tags.iter().enumerate() {
                t.parse::<Theorem>().map_err(|e| config_err(&format!("verify[{i}]"), e))?;
            }
        }
        let minus = load_spec(&raw.perturbations.minus, base, "perturbations.minus")?;
        let plus = load_spec(&raw.perturbations.plus, base, "perturbations.plus")?;
        let loaded = Self {
            raw,
            minus,
            plus,
            base: base.to_path_buf(),
        };
        if loaded.raw.ladder.is_some() {
            loaded.ls()?;
        }
        Ok(loaded)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base)
    }

    /// The ladder distances, ascending.
    pub fn ls(&self) -> Result<Vec<f64>> {
        let ladder = self.raw.ladder.as_ref().ok_or_else(|| config_err("ladder", "missing"))?;
        let ls = match (&ladder.ls, &ladder.range) {
            (Some(ls), None) => ls.clone(),
            (None, Some(r)) => {
                if !(r.step > 0.0) || !(r.stop >= r.start) {
                    return Err(config_err("ladder.range", "needs step > 0 and stop >= start"));
                }
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize;
                (0..=n).map(|i| r.start + i as f64 * r.step).collect()
            }
            _ => return Err(config_err("ladder", "give exactly one of `ls` and `range`")),
        };
        if ls.is_empty() {
            return Err(config_err("ladder.ls", "empty"));
        }
        let min = self.minus.half_width + self.plus.half_width;
        for (i, &l) in ls.iter().enumerate() {
            if !(l.is_finite() && l >= min) {
                return Err(config_err(&format!("ladder.ls[{i}]"), format!("{l} is below a_- + a_+ = {min}")));
            }
            if i > 0 && l <= ls[i - 1] {
                return Err(config_err(&format!("ladder.ls[{i}]"), "distances must be strictly ascending"));
            }
        }
        Ok(ls)
    }

    pub fn ladder_config(&self, jobs: usize, seed: Option<u64>) -> Result<LadderConfig> {
        let mut cfg = LadderConfig::new(
            self.raw.geometry.width,
            self.raw.geometry.h,
            self.minus.clone(),
            self.plus.clone(),
            self.ls()?,
        );
        cfg.margin = self.raw.geometry.margin;
        cfg.limiting_margin = self.raw.geometry.limiting_margin;
        if let Some(k) = self.raw.solver.max_pairs {
            cfg.max_pairs = k;
        }
        if let Some(s) = seed.or(self.raw.solver.seed) {
            cfg.seed = s;
        }
        cfg.residual_floor = self.raw.solver.residual_floor;
        cfg.jobs = jobs;
        Ok(cfg)
    }

    pub fn theorems(&self) -> Option<Vec<Theorem>> {
        self.raw
            .verify
            .as_ref()
            .map(|tags| tags.iter().filter_map(|t| t.parse().ok()).collect())
    }
}
