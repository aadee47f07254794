//! JSON configuration documents.
//!
//! Complex numbers are `[re, im]` pairs and matrices are lists of rows. Every struct
//! rejects unknown keys; parse errors carry the line and column reported by serde_json,
//! semantic errors carry the dotted path of the offending field.

use nalgebra::DMatrix;
use qnd_core::continuous::{ContinuousError, ContinuousMethod, ContinuousModel};
use qnd_core::discrete::{DiscreteScenario, SimError, Truth};
use qnd_core::linalg::{CMatrix, ProbVector};
use qnd_core::measurement::{MeasurementError, MeasurementMethod, PointerModel, SECTOR_TOL};
use qnd_core::protocol::{ProtocolError, ProtocolPolicy};
use qnd_core::scenarios::{self, Scenario, ScenarioError};
use qnd_core::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

/// `[re, im]`.
pub type Complex = [f64; 2];
/// Row-major complex matrix.
pub type ComplexMatrix = Vec<Vec<Complex>>;

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub scenario: ScenarioDoc,
    #[serde(default)]
    pub run: RunDoc,
    #[serde(default)]
    pub analysis: AnalysisDoc,
}

/// Scenario given by built-in name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioDoc {
    Builtin(BuiltinDoc),
    Discrete(DiscreteDoc),
    Continuous(ContinuousDoc),
}

/// Built-in scenario with optional parameter overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointersDoc {
    /// Defaults to "0", "1", …
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Defaults to zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    pub q0: Vec<f64>,
    /// Defaults to diag(q0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<ComplexMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteDoc {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pointers: PointersDoc,
    #[serde(default = "one")]
    pub dt: f64,
    pub methods: Vec<MethodDoc>,
    /// Defaults to uniform random selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyDoc>,
    #[serde(default = "sector_tol")]
    pub sector_tolerance: f64,
}

fn one() -> f64 {
    1.0
}
fn sector_tol() -> f64 {
    SECTOR_TOL
}

/// A discrete method: exactly one of `probabilities`, `amplitudes` or `probe` + `unitaries`.
/// Tables are indexed `[outcome][pointer]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodDoc {
    pub id: String,
    pub outcomes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<Complex>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitaries: Option<Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<ComplexMatrix>,
}

/// Method-selection policy; methods are referenced by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyDoc {
    Random {
        weights: Vec<f64>,
    },
    /// `kernel[o][i]` is the distribution of the next method after outcome (o, i).
    MarkovFeedback {
        initial: Vec<f64>,
        kernel: Vec<Vec<Vec<f64>>>,
    },
    DeterministicFeedback {
        first: usize,
        map: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousDoc {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pointers: PointersDoc,
    pub methods: Vec<ContinuousMethodDoc>,
    /// c(o); defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_weights: Option<Vec<f64>>,
}

/// A continuous method: `probe` + `hamiltonians` (optional `basis`) or `p0` + `gamma`
/// with `gamma[outcome][pointer]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousMethodDoc {
    pub id: String,
    pub outcomes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<Complex>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonians: Option<Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
}

/// Which law drives the simulated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthDoc {
    #[default]
    Mixture,
    Pinned(usize),
}

impl From<TruthDoc> for Truth {
    fn from(t: TruthDoc) -> Self {
        match t {
            TruthDoc::Mixture => Truth::Mixture,
            TruthDoc::Pinned(a) => Truth::Pinned(a),
        }
    }
}

/// Run parameters; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunDoc {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub trajectories: usize,
    pub steps: usize,
    pub stop_threshold: Option<f64>,
    pub record_every: usize,
    pub log_space: Option<bool>,
    pub truth: TruthDoc,
    pub trial_q0: Option<Vec<f64>>,
    pub level: f64,
    pub paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub deltas: Vec<f64>,
    pub times: Vec<f64>,
    pub samples: usize,
}

impl Default for RunDoc {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            trajectories: 1000,
            steps: 10_000,
            stop_threshold: Some(1e-9),
            record_every: 0,
            log_space: None,
            truth: TruthDoc::Mixture,
            trial_q0: None,
            level: 0.99,
            paths: 100,
            dt: 1e-3,
            t_max: 5.0,
            deltas: vec![1e-1, 1e-2, 1e-3],
            times: vec![0.5, 1.0],
            samples: 10_000,
        }
    }
}

/// Optional outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisDoc {
    /// Collapse statistics over the ensemble.
    pub collapse_statistics: bool,
    /// Track ρ alongside Q in continuous runs.
    pub density: bool,
    /// Track the compensated state Ã.
    pub compensated: bool,
    /// Compare Q_t with its closed form in continuous runs.
    pub closed_form: bool,
}

impl Default for AnalysisDoc {
    fn default() -> Self {
        Self { collapse_statistics: true, density: false, compensated: false, closed_form: false }
    }
}

/// Error with the location of the offending input.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Syntax or schema error at a line and column.
    Parse { line: usize, column: usize, message: String },
    /// Semantic error at a field path such as `scenario.discrete.pointers.q0`.
    Invalid { path: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse { line, column, message } => write!(f, "line {line}, column {column}: {message}"),
            Self::Invalid { path, message } => write!(f, "{path}: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(path: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.to_string() }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration documents serialize")
    }

    /// Document with a scenario and default run parameters.
    pub fn with_scenario(scenario: ScenarioDoc) -> Self {
        Self { scenario, run: RunDoc::default(), analysis: AnalysisDoc::default() }
    }

    /// Checks run parameters that the scenario constructors do not see.
    pub fn validate_run(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(r.dt) {
            return Err(invalid("run.dt", format!("must be positive and finite, got {}", r.dt)));
        }
        if !positive(r.t_max) {
            return Err(invalid("run.t_max", format!("must be positive and finite, got {}", r.t_max)));
        }
        if !(r.level > 0.0 && r.level < 1.0) {
            return Err(invalid("run.level", format!("must lie in (0, 1), got {}", r.level)));
        }
        if let Some(eps) = r.stop_threshold {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(invalid("run.stop_threshold", format!("must lie in (0, 1), got {eps}")));
            }
        }
        if let Some(k) = r.deltas.iter().position(|&d| !positive(d)) {
            return Err(invalid(format!("run.deltas[{k}]"), "must be positive and finite"));
        }
        if let Some(k) = r.times.iter().position(|&t| !positive(t)) {
            return Err(invalid(format!("run.times[{k}]"), "must be positive and finite"));
        }
        if r.times.len() > 3 {
            return Err(invalid("run.times", format!("at most 3 grid times, got {}", r.times.len())));
        }
        if r.samples < 2 {
            return Err(invalid("run.samples", "at least 2 samples are needed"));
        }
        if let Some(q) = &r.trial_q0 {
            ProbVector::new(q.clone()).map_err(|e| invalid("run.trial_q0", e))?;
        }
        Ok(())
    }
}

/// Reads and parses a configuration file.
pub fn read_config(path: &Path) -> Result<ConfigDocument, ReadError> {
    let text = std::fs::read_to_string(path).map_err(ReadError::Io)?;
    ConfigDocument::parse(&text).map_err(ReadError::Config)
}

#[derive(Debug)]
pub enum ReadError {
    Io(std::io::Error),
    Config(ConfigError),
}

fn complex(z: &Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn complex_matrix(rows: &ComplexMatrix, path: &str) -> Result<CMatrix, ConfigError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(k) = rows.iter().position(|r| r.len() != m) {
        return Err(invalid(format!("{path}[{k}]"), format!("row has {} entries, expected {m}", rows[k].len())));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| complex(&rows[i][j])))
}

fn real_matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, ConfigError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(k) = rows.iter().position(|r| r.len() != m) {
        return Err(invalid(format!("{path}[{k}]"), format!("row has {} entries, expected {m}", rows[k].len())));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn pointer_field(e: &MeasurementError, base: &str) -> String {
    let field = match e {
        MeasurementError::InitialDistribution(_) => "q0",
        MeasurementError::InitialDensity(_) | MeasurementError::DiagonalMismatch { .. } => "rho0",
        MeasurementError::InvalidEnergy(_) => "energies",
        MeasurementError::Count { what, .. } => match *what {
            "energies" => "energies",
            "q0" => "q0",
            _ => "rho0",
        },
        _ => return base.to_string(),
    };
    format!("{base}.{field}")
}

fn labels_or_default(doc: &PointersDoc) -> Vec<String> {
    doc.labels.clone().unwrap_or_else(|| (0..doc.q0.len()).map(|k| k.to_string()).collect())
}

fn pointer_model(doc: &PointersDoc, dt: f64, base: &str) -> Result<PointerModel, ConfigError> {
    let labels = labels_or_default(doc);
    let energies = doc.energies.clone().unwrap_or_else(|| vec![0.0; doc.q0.len()]);
    let rho0 = doc.rho0.as_ref().map(|r| complex_matrix(r, &format!("{base}.rho0"))).transpose()?;
    if labels.len() != doc.q0.len() {
        return Err(invalid(format!("{base}.labels"), format!("{} labels for {} pointers", labels.len(), doc.q0.len())));
    }
    PointerModel::new(labels, energies, doc.q0.clone(), rho0, dt).map_err(|e| invalid(pointer_field(&e, base), e))
}

fn method_field(e: &MeasurementError) -> &'static str {
    match e {
        MeasurementError::ProbeNotNormalized { .. } => ".probe",
        MeasurementError::NotUnitary { .. } => ".unitaries",
        MeasurementError::BasisNotUnitary { .. } => ".basis",
        MeasurementError::InvalidPhase { .. } => ".phases",
        MeasurementError::InvalidProbability { .. } => ".probabilities",
        MeasurementError::NoOutcomes(_) => ".outcomes",
        _ => "",
    }
}

fn discrete_method(doc: &MethodDoc, model: &PointerModel, path: &str) -> Result<MeasurementMethod, ConfigError> {
    let err = |e: MeasurementError| invalid(format!("{path}{}", method_field(&e)), e);
    let declared = [doc.probabilities.is_some(), doc.amplitudes.is_some(), doc.probe.is_some() || doc.unitaries.is_some()];
    if declared.iter().filter(|&&b| b).count() != 1 {
        return Err(invalid(path, "declare exactly one of `probabilities`, `amplitudes` or `probe` with `unitaries`"));
    }
    if let Some(p) = &doc.probabilities {
        let probs = real_matrix(p, &format!("{path}.probabilities"))?;
        let phases = doc.phases.as_ref().map(|t| real_matrix(t, &format!("{path}.phases"))).transpose()?;
        return MeasurementMethod::from_probabilities(&doc.id, doc.outcomes.clone(), probs, phases, model).map_err(err);
    }
    if doc.phases.is_some() {
        return Err(invalid(format!("{path}.phases"), "phases accompany `probabilities` only"));
    }
    if let Some(a) = &doc.amplitudes {
        let amps = complex_matrix(a, &format!("{path}.amplitudes"))?;
        return MeasurementMethod::from_amplitudes(&doc.id, doc.outcomes.clone(), amps, model).map_err(err);
    }
    let probe = doc.probe.as_ref().ok_or_else(|| invalid(format!("{path}.probe"), "missing probe state"))?;
    let unitaries = doc.unitaries.as_ref().ok_or_else(|| invalid(format!("{path}.unitaries"), "missing unitaries"))?;
    let us =
        unitaries.iter().enumerate().map(|(k, u)| complex_matrix(u, &format!("{path}.unitaries[{k}]"))).collect::<Result<Vec<_>, _>>()?;
    let basis = doc.basis.as_ref().map(|b| complex_matrix(b, &format!("{path}.basis"))).transpose()?;
    MeasurementMethod::from_unitaries(&doc.id, doc.outcomes.clone(), probe.iter().map(complex).collect(), us, basis, model).map_err(err)
}

fn policy(doc: &PolicyDoc, path: &str) -> Result<ProtocolPolicy, ConfigError> {
    let prob = |v: &Vec<f64>, p: String| ProbVector::new(v.clone()).map_err(|e| invalid(p, e));
    Ok(match doc {
        PolicyDoc::Random { weights } => ProtocolPolicy::Random { weights: prob(weights, format!("{path}.random.weights"))? },
        PolicyDoc::MarkovFeedback { initial, kernel } => ProtocolPolicy::MarkovFeedback {
            initial: prob(initial, format!("{path}.markov_feedback.initial"))?,
            kernel: kernel
                .iter()
                .enumerate()
                .map(|(o, row)| row.iter().enumerate().map(|(i, w)| prob(w, format!("{path}.markov_feedback.kernel[{o}][{i}]"))).collect())
                .collect::<Result<_, _>>()?,
        },
        PolicyDoc::DeterministicFeedback { first, map } => ProtocolPolicy::DeterministicFeedback { first: *first, map: map.clone() },
    })
}

fn sim_error(e: SimError, base: &str) -> ConfigError {
    match &e {
        SimError::Protocol(p) => {
            let field = if matches!(p, ProtocolError::NoMethods) { "methods" } else { "policy" };
            invalid(format!("{base}.{field}"), e)
        }
        SimError::Measurement(MeasurementError::SectorAmbiguity { .. }) => invalid(format!("{base}.sector_tolerance"), e),
        _ => invalid(base, e),
    }
}

/// Builds a discrete scenario from an inline document.
pub fn build_discrete(doc: &DiscreteDoc, base: &str) -> Result<DiscreteScenario, ConfigError> {
    if !(doc.dt > 0.0 && doc.dt.is_finite()) {
        return Err(invalid(format!("{base}.dt"), format!("must be positive and finite, got {}", doc.dt)));
    }
    let model = pointer_model(&doc.pointers, doc.dt, &format!("{base}.pointers"))?;
    let methods = doc
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| discrete_method(m, &model, &format!("{base}.methods[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let policy = match &doc.policy {
        Some(p) => policy(p, &format!("{base}.policy"))?,
        None => ProtocolPolicy::uniform(methods.len().max(1)),
    };
    DiscreteScenario::with_sector_tolerance(&doc.name, &doc.description, model, methods, policy, doc.sector_tolerance)
        .map_err(|e| sim_error(e, base))
}

fn continuous_method(doc: &ContinuousMethodDoc, path: &str) -> Result<ContinuousMethod, ConfigError> {
    let err = |e: ContinuousError| {
        let field = match &e {
            ContinuousError::DiffusiveCondition { .. } | ContinuousError::Pointer(_) => ".probe",
            ContinuousError::NonzeroExpectation { .. } | ContinuousError::NotHermitian { .. } => ".hamiltonians",
            ContinuousError::NotCentered { .. } => ".gamma",
            ContinuousError::ProbeLaw { .. } | ContinuousError::ZeroProbeProbability { .. } => ".p0",
            _ => "",
        };
        invalid(format!("{path}{field}"), e)
    };
    match (&doc.probe, &doc.hamiltonians, &doc.p0, &doc.gamma) {
        (Some(probe), Some(hs), None, None) => {
            let hs = hs
                .iter()
                .enumerate()
                .map(|(k, h)| complex_matrix(h, &format!("{path}.hamiltonians[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let basis = doc.basis.as_ref().map(|b| complex_matrix(b, &format!("{path}.basis"))).transpose()?;
            ContinuousMethod::from_hamiltonians(&doc.id, doc.outcomes.clone(), probe.iter().map(complex).collect(), hs, basis).map_err(err)
        }
        (None, None, Some(p0), Some(gamma)) if doc.basis.is_none() => {
            let g = real_matrix(gamma, &format!("{path}.gamma"))?;
            ContinuousMethod::from_gamma(&doc.id, doc.outcomes.clone(), p0.clone(), g).map_err(err)
        }
        _ => Err(invalid(path, "declare either `probe` with `hamiltonians` (and optional `basis`) or `p0` with `gamma`")),
    }
}

/// Builds a continuous model from an inline document.
pub fn build_continuous(doc: &ContinuousDoc, base: &str) -> Result<ContinuousModel, ConfigError> {
    let methods = doc
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| continuous_method(m, &format!("{base}.methods[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = doc.method_weights.clone().unwrap_or_else(|| vec![1.0 / methods.len().max(1) as f64; methods.len()]);
    let p = &doc.pointers;
    let rho0 = p.rho0.as_ref().map(|r| complex_matrix(r, &format!("{base}.pointers.rho0"))).transpose()?;
    let labels = labels_or_default(p);
    let energies = p.energies.clone().unwrap_or_else(|| vec![0.0; p.q0.len()]);
    ContinuousModel::new(labels, energies, p.q0.clone(), rho0, methods, weights).map_err(|e| {
        let path = match &e {
            ContinuousError::Pointer(m) => pointer_field(m, &format!("{base}.pointers")),
            ContinuousError::MethodWeights(_) => format!("{base}.method_weights"),
            ContinuousError::Count { what: "method weights", .. } => format!("{base}.method_weights"),
            ContinuousError::Count { .. } => format!("{base}.methods"),
            _ => base.to_string(),
        };
        invalid(path, e)
    })
}

fn builtin(doc: &BuiltinDoc) -> Result<Scenario, ConfigError> {
    let base = "scenario.builtin";
    let err = |e: ScenarioError| {
        let field = match &e {
            ScenarioError::Unknown(_) => ".name",
            ScenarioError::ZeroProbabilityAngle { angle, .. } if doc.second_angle == Some(*angle) && doc.angle != Some(*angle) => {
                ".second_angle"
            }
            ScenarioError::ZeroProbabilityAngle { .. } => ".angle",
            ScenarioError::EmptyTruncation => ".n_max",
            ScenarioError::TuningParameters { .. } => ".eps",
            _ => "",
        };
        invalid(format!("{base}{field}"), e)
    };
    let n_max = doc.n_max.unwrap_or(scenarios::TOY_N_MAX);
    let angle = doc.angle.unwrap_or(PI / 3.0);
    let second = doc.second_angle.unwrap_or(PI / 6.0);
    let eps_dt = doc.eps_dt.unwrap_or(scenarios::TOY_EPS_DT);
    let scenario = match doc.name.as_str() {
        "toy-model" => Scenario::Discrete(scenarios::toy_model(n_max, angle, eps_dt).map_err(err)?),
        "toy-model-mixed" => Scenario::Discrete(scenarios::toy_model_mixed(n_max, angle, second, eps_dt).map_err(err)?),
        "toy-model-paired" => Scenario::Discrete(scenarios::toy_model_paired(n_max, angle, second, eps_dt).map_err(err)?),
        "rate-tuning" => Scenario::Discrete(
            scenarios::rate_tuning_example(doc.eps.unwrap_or(scenarios::TUNING_EPS), doc.q.unwrap_or(scenarios::TUNING_Q)).map_err(err)?,
        ),
        "continuous-demo" => {
            let lambdas = doc.lambdas.clone().unwrap_or_else(|| vec![1.0, -1.0]);
            let q0 = vec![1.0 / lambdas.len() as f64; lambdas.len()];
            let model = scenarios::continuous_demo(&lambdas, q0).map_err(err)?;
            Scenario::Continuous { name: doc.name.clone(), description: "Pointers probed by −λσ₂ on |+⟩".into(), model }
        }
        other => scenarios::builtin(other).map_err(err)?,
    };
    let unused = |field: &str, set: bool, allowed: &[&str]| -> Result<(), ConfigError> {
        if set && !allowed.contains(&doc.name.as_str()) {
            return Err(invalid(format!("{base}.{field}"), format!("not a parameter of built-in scenario {:?}", doc.name)));
        }
        Ok(())
    };
    let toys = ["toy-model", "toy-model-mixed", "toy-model-paired"];
    unused("n_max", doc.n_max.is_some(), &toys)?;
    unused("angle", doc.angle.is_some(), &toys)?;
    unused("eps_dt", doc.eps_dt.is_some(), &toys)?;
    unused("second_angle", doc.second_angle.is_some(), &toys[1..])?;
    unused("eps", doc.eps.is_some(), &["rate-tuning"])?;
    unused("q", doc.q.is_some(), &["rate-tuning"])?;
    unused("lambdas", doc.lambdas.is_some(), &["continuous-demo"])?;
    let Some(q0) = &doc.q0 else { return Ok(scenario) };
    let path = format!("{base}.q0");
    Ok(match scenario {
        Scenario::Discrete(s) => Scenario::Discrete(s.with_q0(q0.clone()).map_err(|e| invalid(&path, e))?),
        Scenario::Continuous { name, description, model } => {
            Scenario::Continuous { name, description, model: model.with_q0(q0.clone()).map_err(|e| invalid(&path, e))? }
        }
    })
}

/// Builds the scenario named or declared by a document.
pub fn build_scenario(doc: &ScenarioDoc) -> Result<Scenario, ConfigError> {
    match doc {
        ScenarioDoc::Builtin(b) => builtin(b),
        ScenarioDoc::Discrete(d) => Ok(Scenario::Discrete(build_discrete(d, "scenario.discrete")?)),
        ScenarioDoc::Continuous(c) => Ok(Scenario::Continuous {
            name: c.name.clone(),
            description: c.description.clone(),
            model: build_continuous(c, "scenario.continuous")?,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_line_and_column() {
        let text = "{\n  \"scenario\": {\"builtin\": {\"name\": \"bernoulli\"}},\n  \"run\": {\"seeed\": 3}\n}";
        match ConfigDocument::parse(text) {
            Err(ConfigError::Parse { line, column, message }) => {
                assert_eq!(line, 3);
                assert!(column > 0);
                assert!(message.contains("seeed"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn builtin_with_defaults() {
        let doc = ConfigDocument::parse(r#"{"scenario": {"builtin": {"name": "toy-model"}}}"#).unwrap();
        assert_eq!(doc.run, RunDoc::default());
        let s = build_scenario(&doc.scenario).unwrap();
        assert_eq!(s.name(), "toy-model");
    }

    #[test]
    fn non_normalized_q0_names_the_field() {
        let text = r#"{"scenario": {"discrete": {
            "name": "x",
            "pointers": {"q0": [0.5, 0.6]},
            "methods": [{"id": "m", "outcomes": ["a", "b"], "probabilities": [[0.9, 0.5], [0.1, 0.5]]}]
        }}}"#;
        let doc = ConfigDocument::parse(text).unwrap();
        let err = build_scenario(&doc.scenario).unwrap_err();
        assert!(err.to_string().starts_with("scenario.discrete.pointers.q0:"), "{err}");
    }

    #[test]
    fn vanishing_probe_amplitude_is_a_diffusive_failure() {
        let text = r#"{"scenario": {"continuous": {
            "name": "x",
            "pointers": {"q0": [0.5, 0.5]},
            "methods": [{"id": "m", "outcomes": ["a", "b"], "probe": [[1, 0], [0, 0]],
                         "hamiltonians": [[[[0, 0], [0, 1]], [[0, -1], [0, 0]]], [[[0, 0], [0, -1]], [[0, 1], [0, 0]]]]}]
        }}}"#;
        let doc = ConfigDocument::parse(text).unwrap();
        let err = build_scenario(&doc.scenario).unwrap_err();
        assert!(err.to_string().contains("scenario.continuous.methods[0].probe"), "{err}");
        assert!(err.to_string().contains("diffusive"), "{err}");
    }

    #[test]
    fn method_must_declare_one_form() {
        let text = r#"{"scenario": {"discrete": {
            "name": "x",
            "pointers": {"q0": [0.5, 0.5]},
            "methods": [{"id": "m", "outcomes": ["a", "b"]}]
        }}}"#;
        let err = build_scenario(&ConfigDocument::parse(text).unwrap().scenario).unwrap_err();
        assert!(err.to_string().starts_with("scenario.discrete.methods[0]:"), "{err}");
    }

    #[test]
    fn degenerate_second_angle_names_its_field() {
        let text = r#"{"scenario": {"builtin": {"name": "toy-model-mixed", "second_angle": 0.7853981633974483}}}"#;
        let err = build_scenario(&ConfigDocument::parse(text).unwrap().scenario).unwrap_err();
        assert!(err.to_string().starts_with("scenario.builtin.second_angle"), "{err}");
    }

    #[test]
    fn foreign_builtin_parameter_is_rejected() {
        let doc = ConfigDocument::parse(r#"{"scenario": {"builtin": {"name": "bernoulli", "angle": 1.0}}}"#).unwrap();
        let err = build_scenario(&doc.scenario).unwrap_err();
        assert!(err.to_string().starts_with("scenario.builtin.angle"), "{err}");
    }

    #[test]
    fn run_checks() {
        let mut doc = ConfigDocument::with_scenario(ScenarioDoc::Builtin(BuiltinDoc { name: "bernoulli".into(), ..Default::default() }));
        assert!(doc.validate_run().is_ok());
        doc.run.dt = -1.0;
        assert!(doc.validate_run().unwrap_err().to_string().starts_with("run.dt"));
    }
}
