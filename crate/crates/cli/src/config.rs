//! Experiment configuration files. The JSON schema in `docs/config.schema.json`
//! mirrors these types; unknown fields are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use vasiplab::cone::ConeSpec;
use vasiplab::decay::DecayKind;
use vasiplab::gauss::CovarianceModel;
use vasiplab::linalg::Matrix;
use vasiplab::maps::{MapSchedule, ScheduleSpec};
use vasiplab::observable::Observable;
use vasiplab::quenched::DriverSpec;
use vasiplab::stats::{CltOptions, LemmaRequest, LilOptions, ZeroTol};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub observable: Option<Observable>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub ulam: Option<UlamConfig>,
    #[serde(default)]
    pub decay: Option<DecayConfig>,
    #[serde(default)]
    pub cone: Option<ConeConfig>,
    #[serde(default)]
    pub blocks: Option<BlocksConfig>,
    #[serde(default)]
    pub clt: Option<CltConfig>,
    #[serde(default)]
    pub lil: Option<LilConfig>,
    #[serde(default)]
    pub lemmas: Option<LemmaRequest>,
    #[serde(default)]
    pub embed: Option<EmbedConfig>,
    #[serde(default)]
    pub params: Option<ParamsConfig>,
    #[serde(default)]
    pub quenched: Option<QuenchedConfig>,
    #[serde(default)]
    pub split: Option<SplitConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub orbits: usize,
    pub n: usize,
    /// Single deterministic orbit from this point instead of an ensemble.
    #[serde(default)]
    pub x0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlamConfig {
    pub n_bins: usize,
    /// Push `1` forward this many steps; 0 means the fixed point of a
    /// constant schedule.
    #[serde(default)]
    pub steps: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub green_kubo_terms: Option<usize>,
}

fn default_tol() -> f64 {
    1e-13
}

fn default_max_iter() -> usize {
    200_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub kind: DecayKind,
    #[serde(default)]
    pub i: usize,
    #[serde(default)]
    pub j: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub n_bins: usize,
    #[serde(default = "one_f")]
    pub slack: f64,
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    pub a: f64,
    pub alpha: f64,
    /// Defaults to the observable's own bound.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default = "one_f")]
    pub l1_bound: f64,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub invariance: Option<InvarianceConfig>,
}

impl ConeConfig {
    pub fn spec(&self) -> vasiplab::Result<ConeSpec> {
        ConeSpec::new(self.a, self.alpha)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub split: f64,
    pub n_log: usize,
    pub n_uniform: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub n_bins: usize,
    #[serde(default = "default_floor")]
    pub margin_floor: f64,
}

fn default_samples() -> usize {
    40
}

fn default_floor() -> f64 {
    -1e-6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksConfig {
    /// Exponents; when absent they come from the parameter chain at `alpha`.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "one_u")]
    pub d: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub horizon: u64,
    #[serde(default = "default_shown")]
    pub max_subblocks: u64,
}

fn one_u() -> usize {
    1
}

fn default_margin() -> f64 {
    1e-4
}

fn default_shown() -> u64 {
    8
}

/// How Birkhoff sums are centered in time.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Centering {
    Ulam { n_bins: usize },
    /// Sample means over the ensemble itself.
    Ensemble,
    None,
}

impl Default for Centering {
    fn default() -> Self {
        Centering::Ulam { n_bins: 4096 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    pub checkpoints: Vec<usize>,
    pub orbits: usize,
    /// Checkpoint tested; defaults to the last.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub center: Centering,
    #[serde(default)]
    pub options: CltOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilConfig {
    pub n_min: usize,
    pub n_max: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub orbits: usize,
    #[serde(default)]
    pub center: Centering,
    #[serde(default)]
    pub options: LilOptions,
}

fn default_rho() -> f64 {
    1.02
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    pub model: CovarianceModel,
    pub c: f64,
    pub blocks: usize,
    pub replicas: usize,
    #[serde(default)]
    pub series: Option<SeriesConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub kappa: f64,
    pub v: f64,
    #[serde(default = "one_u")]
    pub d: usize,
    pub horizon: usize,
    #[serde(default)]
    pub tail_variance_exponent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub alpha: f64,
    #[serde(default = "one_u")]
    pub d: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchedConfig {
    pub driver: DriverSpec,
    pub alpha_max: f64,
    #[serde(default)]
    pub driver_seed: u64,
    pub omegas: Vec<i64>,
    pub checkpoints: Vec<usize>,
    pub orbits: usize,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
}

fn default_n_iter() -> usize {
    200
}

fn default_bins() -> usize {
    4096
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub matrix: Matrix,
    /// Also split against `t·I` when given.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub zero_tol: Option<ZeroTol>,
}

/// Read and parse a config; errors carry the JSON path of the offending field.
pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let p = e.path().to_string();
        if p == "." {
            format!("{}: {}", path.display(), e.inner())
        } else {
            format!("{}: at `{p}`: {}", path.display(), e.inner())
        }
    })
}

impl ExperimentConfig {
    pub fn schedule(&self) -> Result<MapSchedule, String> {
        let spec = self.schedule.as_ref().ok_or("missing field `schedule`")?;
        MapSchedule::from_spec(spec).map_err(|e| format!("at `schedule`: {e}"))
    }

    /// Deserialization skips the constructor, so checks happen here.
    pub fn observable(&self) -> Result<Observable, String> {
        let o = self.observable.as_ref().ok_or("missing field `observable`")?;
        Observable::new(o.components().to_vec()).map_err(|e| format!("at `observable`: {e}"))
    }
}

pub fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T, String> {
    b.as_ref().ok_or_else(|| format!("missing field `{name}`"))
}
