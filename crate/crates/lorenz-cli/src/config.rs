//! Experiment configuration documents.
//!
//! A config is one JSON object naming a pipeline and its parameters.
//! Unknown keys are rejected; every error carries the JSON path it came from.

use std::fmt;
use std::path::{Path, PathBuf};

use lorenz_measures::fixtures;
use lorenz_measures::induced::{DEFAULT_DEPTH, DEFAULT_R_MAX};
use lorenz_measures::recurrence::DEFAULT_DELTA;
use lorenz_measures::{LorenzMap, MapDocument, Side};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "lorenz-measures/1";

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    /// JSON path of the offending value; `.` is the document root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error at {}: {}", self.path, self.message)
    }
}

impl std::error::Error for SchemaError {}

fn root_error(message: impl Into<String>) -> SchemaError {
    SchemaError {
        path: ".".into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "pipeline", rename_all = "kebab-case")]
pub enum Config {
    TheoremBCertify(CertifyConfig),
    TheoremAConstruct(ConstructConfig),
    #[serde(rename = "tune-to-D")]
    TuneToD(TuneConfig),
    Orbit(OrbitConfig),
    Induce(InduceConfig),
    Measure(MeasureConfig),
    SrbDiagnostic(SrbConfig),
}

impl Config {
    pub fn pipeline(&self) -> &'static str {
        match self {
            Config::TheoremBCertify(_) => "theorem-b-certify",
            Config::TheoremAConstruct(_) => "theorem-a-construct",
            Config::TuneToD(_) => "tune-to-D",
            Config::Orbit(_) => "orbit",
            Config::Induce(_) => "induce",
            Config::Measure(_) => "measure",
            Config::SrbDiagnostic(_) => "srb-diagnostic",
        }
    }

    /// Parse a config document. Relative map files resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, SchemaError> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| root_error(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| root_error("config must be a JSON object"))?;
        if obj.is_empty() {
            return Err(root_error("empty config: a `pipeline` key is required"));
        }
        if let Some(schema) = obj.remove("schema") {
            if schema.as_str() != Some(SCHEMA) {
                return Err(SchemaError {
                    path: ".schema".into(),
                    message: format!("expected {SCHEMA:?}, found {schema}"),
                });
            }
        }
        let pipeline = match obj.remove("pipeline") {
            Some(serde_json::Value::String(p)) => p,
            Some(other) => {
                return Err(SchemaError {
                    path: ".pipeline".into(),
                    message: format!("expected a pipeline name, found {other}"),
                })
            }
            None => return Err(root_error("missing field `pipeline`")),
        };
        // the payload is decoded on its own so errors keep their JSON path
        let mut config = match pipeline.as_str() {
            "theorem-b-certify" => Config::TheoremBCertify(payload(value)?),
            "theorem-a-construct" => Config::TheoremAConstruct(payload(value)?),
            "tune-to-D" => Config::TuneToD(payload(value)?),
            "orbit" => Config::Orbit(payload(value)?),
            "induce" => Config::Induce(payload(value)?),
            "measure" => Config::Measure(payload(value)?),
            "srb-diagnostic" => Config::SrbDiagnostic(payload(value)?),
            other => {
                return Err(SchemaError {
                    path: ".pipeline".into(),
                    message: format!("unknown pipeline {other:?}; expected one of {}", PIPELINES.join(", ")),
                })
            }
        };
        config.map_source_mut().resolve(base);
        Ok(config)
    }

    fn map_source_mut(&mut self) -> &mut MapSource {
        match self {
            Config::TheoremBCertify(c) => &mut c.map,
            Config::TheoremAConstruct(c) => &mut c.map,
            Config::TuneToD(c) => &mut c.map,
            Config::Orbit(c) => &mut c.map,
            Config::Induce(c) => &mut c.map,
            Config::Measure(c) => &mut c.map,
            Config::SrbDiagnostic(c) => &mut c.map,
        }
    }
}

pub const PIPELINES: [&str; 7] = [
    "theorem-b-certify",
    "theorem-a-construct",
    "tune-to-D",
    "orbit",
    "induce",
    "measure",
    "srb-diagnostic",
];

fn payload<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, SchemaError> {
    serde_path_to_error::deserialize(value).map_err(|e| SchemaError {
        path: match e.path().to_string() {
            p if p == "." => p,
            p => format!(".{p}"),
        },
        message: e.inner().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fixture {
    K1,
    K2,
}

/// A map given inline, as a named fixture, or as a path to a map document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSource {
    Fixture(Fixture),
    File { file: PathBuf },
    Inline(MapDocument),
}

impl MapSource {
    fn resolve(&mut self, base: &Path) {
        if let MapSource::File { file } = self {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
    }

    pub fn load(&self) -> anyhow::Result<LorenzMap> {
        Ok(match self {
            MapSource::Fixture(Fixture::K1) => fixtures::k1(),
            MapSource::Fixture(Fixture::K2) => fixtures::k2(),
            MapSource::File { file } => {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| anyhow::anyhow!("cannot read map file {}: {e}", file.display()))?;
                let doc: MapDocument = serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("map file {}: {e}", file.display()))?;
                LorenzMap::from_document(&doc)?
            }
            MapSource::Inline(doc) => LorenzMap::from_document(doc)?,
        })
    }
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_const_horizon() -> usize {
    10_000
}
fn default_n_max() -> usize {
    4
}
fn default_samples() -> usize {
    100
}
fn default_starts() -> usize {
    20
}
fn default_steps() -> usize {
    10_000
}
fn default_r_cap() -> f64 {
    0.1
}
fn default_word_len() -> usize {
    12
}
fn default_r_max() -> usize {
    DEFAULT_R_MAX
}
fn default_depth() -> usize {
    DEFAULT_DEPTH
}
fn default_list_through() -> usize {
    16
}
fn default_n_partial() -> usize {
    10_000
}
fn default_segments() -> usize {
    10_000
}
fn default_tune_depth() -> usize {
    60
}
fn default_ctol() -> f64 {
    lorenz_measures::orbit::DEFAULT_C_TOL
}
fn default_srb_steps() -> usize {
    2_000
}
fn default_srb_samples() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub map: MapSource,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Horizon of the singular-orbit averages behind `M`.
    #[serde(default = "default_const_horizon")]
    pub horizon: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Offsets sampled per `n` in the bound-period checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Random starts for the Birkhoff certificate.
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InduceConfig {
    pub map: MapSource,
    #[serde(default = "default_r_cap")]
    pub r_cap: f64,
    #[serde(default = "default_word_len")]
    pub max_word_len: usize,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Branches with `R` up to this value are listed in the report.
    #[serde(default = "default_list_through")]
    pub list_through: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructConfig {
    pub map: MapSource,
    pub ell: usize,
    pub alpha_mass: f64,
    #[serde(default = "default_r_cap")]
    pub r_cap: f64,
    #[serde(default = "default_word_len")]
    pub max_word_len: usize,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Levels summed for the second moment of `R_c`.
    #[serde(default = "default_n_partial")]
    pub n_partial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub map: MapSource,
    pub ell: usize,
    pub alpha_mass: f64,
    pub seed: u64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_r_cap")]
    pub r_cap: f64,
    #[serde(default = "default_word_len")]
    pub max_word_len: usize,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_n_partial")]
    pub n_partial: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneSide {
    Left,
    Right,
    Both,
}

impl TuneSide {
    pub fn single(self) -> Option<Side> {
        match self {
            TuneSide::Left => Some(Side::Left),
            TuneSide::Right => Some(Side::Right),
            TuneSide::Both => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub map: MapSource,
    pub side: TuneSide,
    /// Window for the tuned singular value; for `both`, the left window.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Right window when both sides are tuned; defaults to `eps`.
    #[serde(default)]
    pub eps_right: Option<f64>,
    #[serde(default = "default_tune_depth")]
    pub depth: usize,
    /// Shoot for this hit time inside `bracket` instead of searching chains.
    #[serde(default)]
    pub shoot_t: Option<usize>,
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    /// Run the induced-structure gate on the result at this cap.
    #[serde(default)]
    pub r_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub map: MapSource,
    #[serde(default)]
    pub x0: Option<f64>,
    /// Start at the singular value of this side instead of `x0`.
    #[serde(default)]
    pub side: Option<Side>,
    pub steps: usize,
    #[serde(default = "default_ctol")]
    pub ctol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrbConfig {
    pub map: MapSource,
    pub seed: u64,
    #[serde(default = "default_srb_steps")]
    pub steps: usize,
    #[serde(default = "default_srb_samples")]
    pub samples: usize,
}
