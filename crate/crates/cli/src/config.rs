//! JSON run configurations, one struct per subcommand.

use std::path::Path;

use dynperc::bits::BitSubset;
use dynperc::query::PlanSpec;
use dynperc::spectral::CoefficientMethod;
use dynperc::{
    BitConfig, FourierExpansion, Lattice, LatticeDescriptor, Observable, ProductMeasure, RootClusterSize, TruthTable,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A problem with the configuration rather than with the numerics.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn load<T: DeserializeOwned>(path: Option<&Path>) -> anyhow::Result<T> {
    let text = match path {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?,
        None => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| config_error(format!("config: {e}")))
}

/// SHA-256 of the effective config's canonical JSON.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn check_p(p: f64, field: &str) -> anyhow::Result<ProductMeasure> {
    if !(p > 0.0 && p < 1.0) {
        return Err(config_error(format!("{field}: must lie in (0,1), got {p}")));
    }
    Ok(ProductMeasure::new(p)?)
}

pub fn require_seed(seed: Option<u64>) -> anyhow::Result<u64> {
    seed.ok_or_else(|| config_error("seed: required for this command (set it in the config or pass --seed)"))
}

pub fn build_lattice(d: &LatticeDescriptor) -> anyhow::Result<Lattice> {
    d.build().map_err(|e| config_error(format!("lattice: {e}")))
}

/// A single value or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeExactConfig {
    pub lattice: LatticeDescriptor,
    pub p: OneOrMany,
    /// Depths to tabulate; `1..=depth` of the lattice when absent.
    #[serde(default)]
    pub depths: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Auto,
    Direct,
    Transform,
}

impl From<Method> for CoefficientMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Auto => CoefficientMethod::Auto,
            Method::Direct => CoefficientMethod::Direct,
            Method::Transform => CoefficientMethod::Transform,
        }
    }
}

/// Observable over the lattice's edge bits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableSpec {
    #[default]
    RootCluster,
    /// Values indexed by open-bit mask.
    Table {
        values: Vec<f64>,
    },
    /// `sum c_A Psi_A` given as `[[bit ids], c]` pairs.
    Expansion {
        terms: Vec<(Vec<usize>, f64)>,
    },
    DictatorParity {
        gamma: f64,
    },
}

#[derive(Debug, Clone)]
pub enum Obs<'a> {
    Cluster(RootClusterSize<'a>),
    Table(TruthTable),
    Expansion(FourierExpansion),
}

impl Observable for Obs<'_> {
    fn eval(&mut self, config: &BitConfig) -> f64 {
        match self {
            Obs::Cluster(f) => f.eval(config),
            Obs::Table(f) => f.eval(config),
            Obs::Expansion(f) => f.eval(config),
        }
    }
}

impl ObservableSpec {
    pub fn build<'a>(&self, lattice: &'a Lattice, measure: ProductMeasure) -> anyhow::Result<Obs<'a>> {
        let n = lattice.num_edges();
        let field = |e: dynperc::Error| config_error(format!("observable: {e}"));
        Ok(match self {
            ObservableSpec::RootCluster => Obs::Cluster(RootClusterSize::new(lattice)),
            ObservableSpec::Table { values } => Obs::Table(TruthTable::new(n, values.clone()).map_err(field)?),
            ObservableSpec::Expansion { terms } => {
                let terms = terms
                    .iter()
                    .map(|(ids, c)| Ok((BitSubset::new(ids.clone(), n)?, *c)))
                    .collect::<dynperc::Result<Vec<_>>>()
                    .map_err(field)?;
                Obs::Expansion(FourierExpansion::new(measure, n, terms).map_err(field)?)
            }
            ObservableSpec::DictatorParity { gamma } => {
                Obs::Expansion(FourierExpansion::dictator_parity(measure, n, *gamma).map_err(field)?)
            }
        })
    }
}

fn default_lags() -> Vec<u64> {
    (1..=10).collect()
}

fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0]
}

fn default_cap() -> usize {
    dynperc::spectral::DEFAULT_ENUMERATION_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub lattice: LatticeDescriptor,
    pub p: f64,
    #[serde(default)]
    pub observable: ObservableSpec,
    /// Discrete lags for `rho(s)`.
    #[serde(default = "default_lags")]
    pub lags: Vec<u64>,
    /// Continuous times for `rho~(t)`.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_true() -> bool {
    true
}

fn default_window() -> f64 {
    dynperc::estimators::DEFAULT_WINDOW_CONSTANT
}

fn default_report_lags() -> usize {
    dynperc::estimators::DEFAULT_REPORT_LAGS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub lattice: LatticeDescriptor,
    pub p: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    pub steps: usize,
    #[serde(default)]
    pub observable: ObservableSpec,
    #[serde(default = "default_window")]
    pub window_c: f64,
    #[serde(default)]
    pub max_lag: Option<usize>,
    #[serde(default = "default_report_lags")]
    pub report_lags: usize,
    /// Write the full series as CSV.
    #[serde(default = "default_true")]
    pub write_series: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    MonteCarlo,
}

fn default_runs() -> usize {
    100_000
}

fn default_batches() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevealmentConfig {
    pub lattice: LatticeDescriptor,
    pub p: f64,
    pub plan: PlanSpec,
    #[serde(default)]
    pub mode: Mode,
    /// Needed for predictability; revealment alone when absent.
    #[serde(default)]
    pub observable: Option<ObservableSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Known variance of the observable for the Monte Carlo denominator.
    #[serde(default)]
    pub variance: Option<f64>,
}
