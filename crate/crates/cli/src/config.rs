//! JSON experiment configuration. The schema is documented in
//! `docs/config.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sgp_core::bowen::BowenOptions;
use sgp_core::localmeasure::{MeasureKind, MeasureModel};
use sgp_core::pressure::{Schedule, Variant};
use sgp_core::sets::{discretize, RegionSpec, SampleCloud};
use sgp_core::skew::SkewMode;
use sgp_core::{ConformalMap, MetricMode, Potential, SemigroupSystem};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub maps: Vec<ConformalMap>,
    #[serde(default)]
    pub metric: MetricMode,
    #[serde(default)]
    pub potential: Potential,
    /// Per-generator constants added to the potential.
    #[serde(default)]
    pub shifts: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(flatten)]
    pub kind: MeasureKind,
    #[serde(default = "default_samples")]
    pub sample_budget: usize,
}

fn default_samples() -> usize {
    2000
}

/// Command-specific parameters; every field is optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub variant: Option<Variant>,
    pub t_grid: Option<Vec<f64>>,
    pub t_tol: Option<f64>,
    pub p_tol: Option<f64>,
    pub points: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub tau: Option<f64>,
    pub tempered_eps: Option<f64>,
    pub horizons: Option<Vec<usize>>,
    pub radii: Option<Vec<f64>>,
    pub measure: Option<MeasureSpec>,
    pub sandwich_points: Option<usize>,
    pub c: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub skew_mode: Option<SkewMode>,
    pub box_scales: Option<Vec<f64>>,
    pub criteria: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub region: RegionSpec,
    /// Cloud spacing for `interval` and `point_list` regions.
    #[serde(default)]
    pub resolution: Option<f64>,
    pub schedule: Schedule,
    /// Required by every computation that samples.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: Params,
}

/// Configuration failures carry the JSON path that caused them.
#[derive(Debug)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config at `{}`: {}", self.path, self.message)
        }
    }
}

impl SchemaError {
    pub fn at(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        let mut path = e.path().to_string();
        // a missing field is reported at its parent; point at the field
        if let Some(field) = message.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        SchemaError { path, message }
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|e| SchemaError::at("", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

impl ExperimentConfig {
    pub fn system(&self) -> Result<SemigroupSystem, SchemaError> {
        if self.system.maps.is_empty() {
            return Err(SchemaError::at("system.maps", "at least one map is required"));
        }
        let sys = SemigroupSystem::uniform(self.system.maps.clone(), self.system.potential, self.system.metric)
            .map_err(|e| SchemaError::at("system", e.to_string()))?;
        match &self.system.shifts {
            Some(s) => sys.with_constant_shifts(s).map_err(|e| SchemaError::at("system.shifts", e.to_string())),
            None => Ok(sys),
        }
    }

    pub fn cloud(&self) -> Result<SampleCloud, SchemaError> {
        let h = match (&self.region, self.resolution) {
            (RegionSpec::CantorSymbolic { .. }, r) => r.unwrap_or(1.0),
            (_, Some(r)) => r,
            (_, None) => return Err(SchemaError::at("resolution", "required for this region kind")),
        };
        discretize(&self.region, h).map_err(|e| SchemaError::at("region", e.to_string()))
    }

    pub fn schedule(&self) -> Result<Schedule, SchemaError> {
        let mut s = self.schedule.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s.validate().map_err(|e| SchemaError::at("schedule", e.to_string()))?;
        Ok(s)
    }

    pub fn require_seed(&self, why: &str) -> Result<u64, SchemaError> {
        self.seed.ok_or_else(|| SchemaError::at("seed", format!("a seed is required for {why}")))
    }

    pub fn bowen_options(&self) -> BowenOptions {
        let mut o = BowenOptions::default();
        if let Some(t) = self.params.t_tol {
            o.t_tol = t;
        }
        if let Some(p) = self.params.p_tol {
            o.p_tol = p;
        }
        if let Some(v) = self.params.variant {
            o.variant = v;
        }
        o
    }

    pub fn measure(&self) -> Result<MeasureModel, SchemaError> {
        let chosen = self.params.measure.clone().unwrap_or(MeasureSpec {
            kind: MeasureKind::LebesgueCircle,
            sample_budget: default_samples(),
        });
        MeasureModel::new(chosen.kind, chosen.sample_budget).map_err(|e| SchemaError::at("params.measure", e.to_string()))
    }

    pub fn points(&self) -> Result<Vec<f64>, SchemaError> {
        match &self.params.points {
            Some(p) if !p.is_empty() && p.iter().all(|x| (0.0..1.0).contains(x)) => Ok(p.clone()),
            Some(_) => Err(SchemaError::at("params.points", "points must be nonempty and in [0, 1)")),
            None => Err(SchemaError::at("params.points", "required for this command")),
        }
    }
}
