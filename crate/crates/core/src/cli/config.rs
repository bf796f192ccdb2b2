//! Run configuration: a TOML document with strict key checking.
//!
//! ```toml
//! [model]
//! statistics = "fermion"
//! epsilon = [[0.3]]
//!
//! [[model.reservoirs]]
//! band = { count = 6, low = -1.5, high = 1.5, gamma = 0.2 }
//!
//! [initial_state]
//! kind = "partition_free"
//! beta = 2.0
//!
//! [grid]
//! t_final = 10.0
//! steps = 2000
//!
//! [[outputs]]
//! quantity = "occupations"
//! path = "occupations.csv"
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{c, CMat, C64};
use crate::model::{InitialStateSpec, Mode, ModelSpec, Reservoir, Schedule, Statistics, ThermalBath};
use crate::oracle::Tolerances;

/// A real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexValue {
    pub fn value(self) -> C64 {
        match self {
            ComplexValue::Real(x) => c(x, 0.0),
            ComplexValue::Pair([re, im]) => c(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchConfig<V> {
    pub breaks: Vec<f64>,
    pub values: Vec<V>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedConfig<V> {
    pub start: f64,
    pub step: f64,
    pub samples: Vec<V>,
}

/// A constant, `{ quench = {..} }` or `{ tabulated = {..} }`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ScheduleConfig<V> {
    Constant(V),
    Quench { quench: QuenchConfig<V> },
    Tabulated { tabulated: TabulatedConfig<V> },
}

impl ScheduleConfig<ComplexValue> {
    fn build(&self) -> Schedule<C64> {
        match self {
            ScheduleConfig::Constant(v) => Schedule::Constant(v.value()),
            ScheduleConfig::Quench { quench } => Schedule::Quench {
                breaks: quench.breaks.clone(),
                values: quench.values.iter().map(|v| v.value()).collect(),
            },
            ScheduleConfig::Tabulated { tabulated } => Schedule::Tabulated {
                start: tabulated.start,
                step: tabulated.step,
                samples: tabulated.samples.iter().map(|v| v.value()).collect(),
            },
        }
    }
}

impl ScheduleConfig<f64> {
    fn build(&self) -> Schedule<f64> {
        match self {
            ScheduleConfig::Constant(v) => Schedule::Constant(*v),
            ScheduleConfig::Quench { quench } => {
                Schedule::Quench { breaks: quench.breaks.clone(), values: quench.values.clone() }
            }
            ScheduleConfig::Tabulated { tabulated } => Schedule::Tabulated {
                start: tabulated.start,
                step: tabulated.step,
                samples: tabulated.samples.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub count: usize,
    pub low: f64,
    pub high: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub energy: ScheduleConfig<f64>,
    /// One entry per system level.
    pub coupling: Vec<ScheduleConfig<ComplexValue>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub band: Option<BandConfig>,
    /// Per-level coupling weights of a band (default: all 1).
    pub weights: Option<Vec<ComplexValue>>,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub statistics: Statistics,
    /// `N x N` level matrix, row-major.
    pub epsilon: Vec<Vec<ScheduleConfig<ComplexValue>>>,
    #[serde(default)]
    pub reservoirs: Vec<ReservoirConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub beta: f64,
    #[serde(default)]
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateConfig {
    PartitionFree {
        beta: f64,
        #[serde(default)]
        mu: f64,
    },
    Decoupled {
        reservoirs: Vec<BathConfig>,
        system_occupation: Option<Vec<Vec<ComplexValue>>>,
        system_pairs: Option<Vec<Vec<ComplexValue>>>,
    },
    Custom {
        c0: Vec<Vec<ComplexValue>>,
        p0: Option<Vec<Vec<ComplexValue>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t0: f64,
    pub t_final: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FockConfig {
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Coefficients,
    Occupations,
    Trace,
    Purity,
    LesserGreenDiag,
    UNorm,
    PositivityMinEig,
}

impl Quantity {
    pub fn needs_state(self) -> bool {
        matches!(self, Quantity::Trace | Quantity::Purity | Quantity::PositivityMinEig)
    }

    pub fn default_path(self) -> &'static str {
        match self {
            Quantity::Coefficients => "coefficients.csv",
            Quantity::Occupations => "occupations.csv",
            Quantity::Trace => "trace.csv",
            Quantity::Purity => "purity.csv",
            Quantity::LesserGreenDiag => "lesser_green_diag.csv",
            Quantity::UNorm => "u_norm.csv",
            Quantity::PositivityMinEig => "positivity_min_eig.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub quantity: Quantity,
    pub path: Option<String>,
}

/// The document as written.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelConfig,
    pub initial_state: InitialStateConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub fock: FockConfig,
    #[serde(default)]
    pub outputs: Vec<OutputConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub spec: ModelSpec,
    pub initial_state: InitialStateSpec,
    pub grid: TimeGrid,
    pub n_max: usize,
    pub outputs: Vec<(Quantity, String)>,
    pub tolerances: Tolerances,
    /// SHA-256 of the configuration text, hex encoded.
    pub hash: String,
}

/// First line whose key or table header mentions `needle`, 1-based.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.starts_with(needle) || l.starts_with(&format!("[{needle}")) || l.starts_with(&format!("[[{needle}"))
    })
    .map(|k| k + 1)
}

fn at_line(text: &str, needle: &str, msg: String) -> String {
    match line_of(text, needle) {
        Some(line) => format!("line {line}: {msg}"),
        None => msg,
    }
}

fn matrix(rows: &[Vec<ComplexValue>], n: usize, what: &str, errors: &mut Vec<String>) -> CMat {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        errors.push(format!("{what} must be a {n}x{n} matrix"));
        return CMat::zeros(n, n);
    }
    CMat::from_fn(n, n, |i, j| rows[i][j].value())
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    validate(file, text, hash)
}

/// Builds the run description from an already parsed document; `text` is
/// only used to attach line numbers to messages.
pub fn validate(file: ConfigFile, text: &str, hash: String) -> Result<RunConfig> {
    let mut errors = Vec::new();
    let m = &file.model;
    let n = m.epsilon.len();
    if n == 0 || m.epsilon.iter().any(|r| r.len() != n) {
        errors.push(at_line(text, "epsilon", "model.epsilon must be a non-empty square matrix".to_string()));
    }
    let eps_sys: Vec<Vec<Schedule<C64>>> =
        m.epsilon.iter().map(|row| row.iter().map(|s| s.build()).collect()).collect();
    let mut reservoirs = Vec::new();
    for (r, res) in m.reservoirs.iter().enumerate() {
        let mut modes = Vec::new();
        if let Some(b) = &res.band {
            if b.count == 0 || !(b.high > b.low) || !(b.gamma >= 0.0) {
                errors.push(at_line(
                    text,
                    "band",
                    format!("reservoir {r}: band needs count > 0, high > low and gamma >= 0"),
                ));
            }
            let weights: Vec<C64> = match &res.weights {
                Some(w) => w.iter().map(|x| x.value()).collect(),
                None => vec![c(1.0, 0.0); n],
            };
            if weights.len() != n {
                errors.push(at_line(
                    text,
                    "weights",
                    format!("reservoir {r}: {} weights for {n} levels", weights.len()),
                ));
            }
            modes.extend(Reservoir::uniform_band(b.count, b.low, b.high, b.gamma, &weights).modes);
        } else if res.weights.is_some() {
            errors.push(at_line(text, "weights", format!("reservoir {r}: weights without a band")));
        }
        for (k, mode) in res.modes.iter().enumerate() {
            if mode.coupling.len() != n {
                errors.push(at_line(
                    text,
                    "coupling",
                    format!("reservoir {r} mode {k}: {} couplings for {n} levels", mode.coupling.len()),
                ));
            }
            modes.push(Mode {
                energy: mode.energy.build(),
                coupling: mode.coupling.iter().map(|s| s.build()).collect(),
            });
        }
        reservoirs.push(Reservoir { modes });
    }
    let spec = ModelSpec { statistics: m.statistics, eps_sys, reservoirs };

    let initial_state = match &file.initial_state {
        InitialStateConfig::PartitionFree { beta, mu } => {
            InitialStateSpec::PartitionFreeThermal { beta: *beta, mu: *mu }
        }
        InitialStateConfig::Decoupled { reservoirs, system_occupation, system_pairs } => {
            if reservoirs.len() != spec.reservoirs.len() {
                errors.push(at_line(
                    text,
                    "initial_state",
                    format!(
                        "{} reservoir temperatures given for {} reservoirs",
                        reservoirs.len(),
                        spec.reservoirs.len()
                    ),
                ));
            }
            let occ = system_occupation
                .as_ref()
                .map_or_else(|| CMat::zeros(n, n), |r| matrix(r, n, "system_occupation", &mut errors));
            let pairs = system_pairs
                .as_ref()
                .map_or_else(|| CMat::zeros(n, n), |r| matrix(r, n, "system_pairs", &mut errors));
            InitialStateSpec::DecoupledThermal {
                reservoirs: reservoirs.iter().map(|b| ThermalBath { beta: b.beta, mu: b.mu }).collect(),
                system_occupation: occ,
                system_pairs: pairs,
            }
        }
        InitialStateConfig::Custom { c0, p0 } => {
            let dim = n + spec.mode_count();
            let c0 = matrix(c0, dim, "c0", &mut errors);
            let p0 = p0.as_ref().map_or_else(|| CMat::zeros(dim, dim), |r| matrix(r, dim, "p0", &mut errors));
            InitialStateSpec::CustomGaussian { c0, p0 }
        }
    };

    let g = file.grid;
    let grid = match TimeGrid::new(g.t0, g.t_final, g.steps) {
        Ok(grid) => Some(grid),
        Err(e) => {
            errors.push(at_line(text, "grid", e.to_string()));
            None
        }
    };

    let n_max = match (m.statistics, file.fock.n_max) {
        (Statistics::Fermion, None | Some(1)) => 1,
        (Statistics::Fermion, Some(k)) => {
            errors.push(at_line(text, "fock", format!("fermion levels need fock.n_max = 1, got {k}")));
            1
        }
        (Statistics::Boson, Some(k)) if k >= 1 => k,
        (Statistics::Boson, _) => {
            let msg = "boson models need an explicit Fock cutoff: set fock.n_max >= 1".to_string();
            let anchor = if line_of(text, "fock").is_some() { "fock" } else { "statistics" };
            errors.push(at_line(text, anchor, msg));
            0
        }
    };

    let mut outputs = Vec::new();
    for o in &file.outputs {
        let path = o.path.clone().unwrap_or_else(|| o.quantity.default_path().to_string());
        if outputs.iter().any(|(_, p): &(Quantity, String)| *p == path) {
            errors.push(at_line(text, "outputs", format!("output path {path} used twice")));
        }
        outputs.push((o.quantity, path));
    }

    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    Ok(RunConfig {
        tolerances: file.tolerances,
        spec,
        initial_state,
        grid: grid.expect("grid errors reported above"),
        n_max,
        outputs,
        hash,
        file,
    })
}

/// Replaces the number at a dotted path (`model.reservoirs.0.band.gamma`)
/// of a parsed document.
pub fn set_path(doc: &mut toml::Value, path: &str, value: f64) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Argument(format!("invalid parameter path '{path}'")));
    }
    for (depth, part) in parts.iter().enumerate() {
        let next = match cur {
            toml::Value::Table(t) => t.get_mut(*part),
            toml::Value::Array(a) => part.parse::<usize>().ok().and_then(|k| a.get_mut(k)),
            _ => None,
        };
        cur = next.ok_or_else(|| {
            Error::Argument(format!("parameter path '{path}' has no entry '{}'", parts[..=depth].join(".")))
        })?;
    }
    match cur {
        toml::Value::Float(_) | toml::Value::Integer(_) => {
            *cur = if let (toml::Value::Integer(_), true) = (&*cur, value.fract() == 0.0) {
                toml::Value::Integer(value as i64)
            } else {
                toml::Value::Float(value)
            };
            Ok(())
        }
        other => Err(Error::Argument(format!(
            "parameter path '{path}' names a {} rather than a number",
            other.type_str()
        ))),
    }
}
