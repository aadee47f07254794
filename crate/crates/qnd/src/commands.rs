//! Subcommand bodies. Each returns the lines to print and writes its files under the
//! output directory.

use crate::config::{read_config, ConfigDocument, ConfigError, ReadError, ScenarioDoc};
use crate::ensemble::{continuous_ensemble, discrete_ensemble};
use crate::export::scenario_doc;
use crate::output::{Field, IoError, OutDir, Table};
use qnd_core::analysis::{collapse_statistics, ensemble_decay_rate, CollapseStatistics, RateTable};
use qnd_core::continuous::{
    closed_form_q, scaling_limit_check, ContinuousError, ContinuousModel, Law, Moment, PathConfig, ScalingConfig, ScalingModel,
};
use qnd_core::discrete::{DiscreteScenario, RunConfig, SimError, Truth};
use qnd_core::linalg::{argmax, ProbVector};
use qnd_core::scenarios::{self, Scenario};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Failure classes and their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] IoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Numerical(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Underflow { .. } | SimError::ZeroEvidence { .. } | SimError::ImpossibleOutcome { .. } => {
                Self::Numerical(e.to_string())
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<ContinuousError> for CliError {
    fn from(e: ContinuousError) -> Self {
        match e {
            ContinuousError::StepSize { .. } => Self::Numerical(format!("{e}; rerun with a smaller --dt")),
            ContinuousError::Density(_) => Self::Numerical(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

/// Loads a config, applies global overrides and validates the run section.
pub fn load(path: &Path, globals: &Globals) -> Result<ConfigDocument, CliError> {
    let mut doc = read_config(path).map_err(|e| match e {
        ReadError::Io(source) => CliError::Io(IoError { path: path.to_path_buf(), source }),
        ReadError::Config(c) => CliError::Validation(format!("{}: {c}", path.display())),
    })?;
    if let Some(seed) = globals.seed {
        doc.run.seed = seed;
    }
    if let Some(w) = globals.workers {
        doc.run.workers = w;
    }
    doc.validate_run()?;
    Ok(doc)
}

fn discrete(s: Scenario) -> Result<DiscreteScenario, CliError> {
    match s {
        Scenario::Discrete(d) => Ok(d),
        Scenario::Continuous { name, .. } => {
            Err(CliError::Validation(format!("scenario {name:?} is continuous; this command needs a discrete scenario")))
        }
    }
}

fn continuous(s: Scenario) -> Result<(String, ContinuousModel), CliError> {
    match s {
        Scenario::Continuous { name, model, .. } => Ok((name, model)),
        Scenario::Discrete(d) => {
            Err(CliError::Validation(format!("scenario {:?} is discrete; this command needs a continuous scenario", d.name())))
        }
    }
}

/// `validate`: every structural check; returns a short description.
pub fn validate(doc: &ConfigDocument) -> Result<Vec<String>, CliError> {
    let scenario = crate::config::build_scenario(&doc.scenario)?;
    let mut lines = vec![format!("ok: {} ({})", scenario.name(), scenario.description())];
    match &scenario {
        Scenario::Discrete(s) => {
            lines.push(format!(
                "discrete, {} pointers, {} methods, {} outcomes, {} sectors, {}",
                s.dim(),
                s.methods().len(),
                s.outcome_count(),
                s.sectors().len(),
                if s.is_quantum() { "quantum" } else { "classical" }
            ));
            if let Truth::Pinned(a) = doc.run.truth.into() {
                if a >= s.dim() {
                    return Err(CliError::Validation(format!("run.truth: pointer {a} out of range for {} pointers", s.dim())));
                }
            }
            if let Some(q) = &doc.run.trial_q0 {
                if q.len() != s.dim() {
                    return Err(CliError::Validation(format!("run.trial_q0: {} entries for {} pointers", q.len(), s.dim())));
                }
            }
        }
        Scenario::Continuous { model, .. } => {
            let sectors = model.sectors(qnd_core::measurement::SECTOR_TOL)?;
            lines.push(format!("continuous, {} pointers, {} channels, {} sectors", model.dim(), model.num_channels(), sectors.len()));
        }
    }
    Ok(lines)
}

#[derive(Debug, Serialize)]
struct TrajectoryJson {
    index: usize,
    limit_sector: usize,
    converged: bool,
    steps: usize,
    localization_step: Option<usize>,
    final_q: Vec<f64>,
    final_qhat: Vec<f64>,
    sector_masses: Vec<f64>,
    /// Fitted decay rate per pointer (null inside the limit sector).
    decay_rates: Vec<Option<f64>>,
    counts: Vec<Vec<u64>>,
}

#[derive(Debug, Serialize)]
struct SectorRowJson {
    sector: usize,
    members: Vec<usize>,
    count: u64,
    frequency: f64,
    expected: f64,
    low: f64,
    high: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct DiscreteSummary {
    scenario: String,
    seed: u64,
    trajectories: usize,
    converged: usize,
    mean_steps: f64,
    collapse: Option<Vec<SectorRowJson>>,
    collapse_passed: Option<bool>,
}

fn collapse_rows(stats: &CollapseStatistics, s: &DiscreteScenario) -> Vec<SectorRowJson> {
    stats
        .rows
        .iter()
        .map(|r| SectorRowJson {
            sector: r.sector,
            members: s.sectors().members(r.sector).to_vec(),
            count: r.count,
            frequency: r.frequency,
            expected: r.expected,
            low: r.low,
            high: r.high,
            pass: r.pass,
        })
        .collect()
}

/// Per-run overrides of `simulate-discrete`.
#[derive(Debug, Clone, Default)]
pub struct DiscreteOverrides {
    pub trajectories: Option<usize>,
    pub steps: Option<usize>,
    pub record_every: Option<usize>,
}

/// `simulate-discrete`.
pub fn simulate_discrete(doc: &ConfigDocument, overrides: &DiscreteOverrides, out: &OutDir) -> Result<Vec<String>, CliError> {
    validate(doc)?;
    let s = discrete(crate::config::build_scenario(&doc.scenario)?)?;
    let run = &doc.run;
    let trajectories = overrides.trajectories.unwrap_or(run.trajectories);
    let config = RunConfig {
        max_steps: overrides.steps.unwrap_or(run.steps),
        stop_threshold: run.stop_threshold,
        record_every: overrides.record_every.unwrap_or(run.record_every),
        log_space: run.log_space,
        truth: run.truth.into(),
        trial_q0: run.trial_q0.clone().map(|q| ProbVector::new(q).expect("checked by validate_run")),
        localization_level: run.level,
        keep_history: false,
    };
    let results = discrete_ensemble(&s, s.policy(), &config, run.seed, trajectories, run.workers)?;
    let d = s.dim();
    let reports: Vec<TrajectoryJson> = results
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let rep = &r.report;
            TrajectoryJson {
                index,
                limit_sector: rep.limit_sector,
                converged: rep.converged,
                steps: rep.steps,
                localization_step: rep.localization_step,
                final_q: rep.final_q.as_slice().to_vec(),
                final_qhat: rep.final_qhat.as_slice().to_vec(),
                sector_masses: rep.sector_masses.clone(),
                decay_rates: rep.decay_slopes.iter().map(|f| f.map(|f| -f.slope)).collect(),
                counts: rep.counts.clone(),
            }
        })
        .collect();
    let mut files = vec![out.write_json_lines("trajectories.jsonl", &reports)?];
    if config.record_every > 0 {
        for (k, r) in results.iter().enumerate() {
            let mut header = vec!["n".to_string(), "method".into(), "outcome".into()];
            header.extend((0..d).map(|a| format!("q_{a}")));
            header.extend((0..d).map(|a| format!("qhat_{a}")));
            header.extend((0..s.sectors().len()).map(|j| format!("sector_mass_{j}")));
            let mut table = Table::new(header);
            for rec in &r.records {
                let mut row: Vec<Field> = vec![
                    rec.n.into(),
                    rec.outcome.map(|o| s.methods()[o.method].id().to_string()).into(),
                    rec.outcome.map(|o| s.methods()[o.method].outcomes()[o.outcome].clone()).into(),
                ];
                row.extend(rec.q.iter().map(|&v| Field::from(v)));
                row.extend(rec.qhat.iter().map(|&v| Field::from(v)));
                row.extend(rec.sector_masses.iter().map(|&v| Field::from(v)));
                table.push(row);
            }
            files.push(out.write_csv(&format!("steps_{k:06}.csv"), &table)?);
        }
    }
    let mut collapse = None;
    if doc.analysis.collapse_statistics && trajectories > 0 {
        let expected = match config.truth {
            Truth::Mixture => s.sectors().masses(s.model().q0().as_slice()),
            Truth::Pinned(a) => ProbVector::delta(s.sectors().len(), s.sectors().sector_of(a)).into_vec(),
        };
        let limits: Vec<usize> = results.iter().map(|r| r.report.limit_sector).collect();
        let stats = collapse_statistics(&limits, &expected, run.level).map_err(|e| CliError::Numerical(e.to_string()))?;
        let mut table = Table::new(["sector", "members", "count", "frequency", "expected", "low", "high", "pass"]);
        for row in collapse_rows(&stats, &s) {
            let members: Vec<String> = row.members.iter().map(|m| s.model().labels()[*m].clone()).collect();
            table.push(vec![
                row.sector.into(),
                members.join(" ").into(),
                row.count.into(),
                row.frequency.into(),
                row.expected.into(),
                row.low.into(),
                row.high.into(),
                row.pass.into(),
            ]);
        }
        files.push(out.write_csv("collapse.csv", &table)?);
        collapse = Some(stats);
    }
    let converged = results.iter().filter(|r| r.report.converged).count();
    let mean_steps = results.iter().map(|r| r.report.steps as f64).sum::<f64>() / trajectories.max(1) as f64;
    let summary = DiscreteSummary {
        scenario: s.name().into(),
        seed: run.seed,
        trajectories,
        converged,
        mean_steps,
        collapse_passed: collapse.as_ref().map(|c| c.passed),
        collapse: collapse.as_ref().map(|c| collapse_rows(c, &s)),
    };
    files.push(out.write_json("summary.json", &summary)?);
    let mut lines = vec![format!("{}: {trajectories} trajectories, {converged} converged, mean steps {mean_steps:.2}", s.name())];
    if let Some(c) = &collapse {
        for r in &c.rows {
            lines.push(format!(
                "sector {}: frequency {:.4}, expected {:.4}, interval [{:.4}, {:.4}] {}",
                r.sector,
                r.frequency,
                r.expected,
                r.low,
                r.high,
                if r.pass { "ok" } else { "OUTSIDE" }
            ));
        }
    }
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(lines)
}

/// Per-run overrides of `simulate-continuous`.
#[derive(Debug, Clone, Default)]
pub struct ContinuousOverrides {
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Serialize)]
struct DecayJson {
    limit: usize,
    pointer: usize,
    paths: usize,
    fitted_rate: f64,
    stderr: f64,
    predicted_rate: f64,
}

#[derive(Debug, Serialize)]
struct ContinuousSummary {
    scenario: String,
    seed: u64,
    paths: usize,
    dt: f64,
    t_max: f64,
    final_mean_q: Vec<f64>,
    decay: Vec<DecayJson>,
    max_trace_drift: Option<f64>,
    max_diagonal_gap: Option<f64>,
    max_closed_form_error: Option<f64>,
}

/// `simulate-continuous`.
pub fn simulate_continuous(doc: &ConfigDocument, overrides: &ContinuousOverrides, out: &OutDir) -> Result<Vec<String>, CliError> {
    validate(doc)?;
    let (name, model) = continuous(crate::config::build_scenario(&doc.scenario)?)?;
    let run = &doc.run;
    let config = PathConfig {
        dt: overrides.dt.unwrap_or(run.dt),
        t_max: overrides.t_max.unwrap_or(run.t_max),
        record_every: overrides.record_every.unwrap_or(run.record_every),
        track_density: doc.analysis.density,
        track_compensated: doc.analysis.compensated,
    };
    for (v, field) in [(config.dt, "--dt"), (config.t_max, "--t-max")] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Validation(format!("{field} must be positive and finite, got {v}")));
        }
    }
    let paths = overrides.paths.unwrap_or(run.paths);
    let results = continuous_ensemble(&model, &config, run.seed, paths, run.workers)?;
    let d = model.dim();
    let n_ch = model.num_channels();
    let mut files = Vec::new();
    if config.record_every > 0 {
        for (k, r) in results.iter().enumerate() {
            let mut header = vec!["t".to_string()];
            header.extend((0..d).map(|a| format!("q_{a}")));
            header.extend((0..n_ch).map(|e| format!("w_{e}")));
            header.extend((0..n_ch).map(|e| format!("x_{e}")));
            let mut table = Table::new(header);
            for s in &r.samples {
                let mut row = vec![Field::from(s.t)];
                row.extend(s.q.iter().chain(&s.w).chain(&s.x).map(|&v| Field::from(v)));
                table.push(row);
            }
            files.push(out.write_csv(&format!("path_{k:06}.csv"), &table)?);
        }
    }
    let steps = config.steps();
    let stride = (steps / 1000).max(1);
    let mut mean = Table::new(std::iter::once("t".to_string()).chain((0..d).map(|a| format!("mean_q_{a}"))));
    let mut final_mean_q = vec![0.0; d];
    if paths > 0 {
        for n in (0..=steps).step_by(stride) {
            let mut row = vec![Field::from(n as f64 * config.dt)];
            for a in 0..d {
                let m = results.iter().map(|r| r.log_q[n][a].exp()).sum::<f64>() / paths as f64;
                if n == steps {
                    final_mean_q[a] = m;
                }
                row.push(m.into());
            }
            mean.push(row);
        }
        if !steps.is_multiple_of(stride) {
            for (a, v) in final_mean_q.iter_mut().enumerate() {
                *v = results.iter().map(|r| r.log_q[steps][a].exp()).sum::<f64>() / paths as f64;
            }
        }
    }
    files.push(out.write_csv("mean_q.csv", &mean)?);
    let sectors = model.sectors(qnd_core::measurement::SECTOR_TOL)?;
    let mut decay = Vec::new();
    let mut table = Table::new(["limit", "pointer", "paths", "fitted_rate", "stderr", "predicted_rate"]);
    for limit in 0..d {
        let chosen: Vec<&_> = results.iter().filter(|r| argmax(&r.final_state.q) == limit).collect();
        if chosen.is_empty() {
            continue;
        }
        for a in (0..d).filter(|&a| !sectors.same_sector(a, limit)) {
            let histories: Vec<Vec<f64>> = chosen.iter().map(|r| r.log_q.iter().map(|l| l[a]).collect()).collect();
            let Ok(fit) = ensemble_decay_rate(&histories, config.dt) else { continue };
            let predicted = 1.0 / model.characteristic_time(limit, a);
            table.push(vec![limit.into(), a.into(), chosen.len().into(), fit.slope.into(), fit.stderr.into(), predicted.into()]);
            decay.push(DecayJson {
                limit,
                pointer: a,
                paths: chosen.len(),
                fitted_rate: fit.slope,
                stderr: fit.stderr,
                predicted_rate: predicted,
            });
        }
    }
    files.push(out.write_csv("decay.csv", &table)?);
    let fold = |f: &dyn Fn(&qnd_core::continuous::PathResult) -> f64| results.iter().map(f).fold(0.0, f64::max);
    let closed_form = doc.analysis.closed_form.then(|| {
        fold(&|r| {
            let exact = closed_form_q(&model, &r.final_state.w, r.final_state.t);
            r.final_state.q.iter().enumerate().map(|(a, q)| (q - exact[a]).abs()).fold(0.0, f64::max)
        })
    });
    let summary = ContinuousSummary {
        scenario: name.clone(),
        seed: run.seed,
        paths,
        dt: config.dt,
        t_max: config.t_max,
        final_mean_q: final_mean_q.clone(),
        max_trace_drift: config.track_density.then(|| fold(&|r| r.final_state.max_trace_drift)),
        max_diagonal_gap: config.track_density.then(|| fold(&|r| r.final_state.max_diagonal_gap)),
        max_closed_form_error: closed_form,
        decay,
    };
    files.push(out.write_json("summary.json", &summary)?);
    let mut lines = vec![format!("{name}: {paths} paths, dt {}, t_max {}", config.dt, config.t_max)];
    lines.push(format!("final mean Q: {:?}", final_mean_q));
    for dj in &summary.decay {
        lines.push(format!(
            "limit {} pointer {}: fitted rate {:.4} ± {:.4}, 1/τ = {:.4} ({} paths)",
            dj.limit, dj.pointer, dj.fitted_rate, dj.stderr, dj.predicted_rate, dj.paths
        ));
    }
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(lines)
}

/// `rates`.
pub fn rates(doc: &ConfigDocument, out: &OutDir) -> Result<Vec<String>, CliError> {
    validate(doc)?;
    let s = discrete(crate::config::build_scenario(&doc.scenario)?)?;
    let d = s.dim();
    let table = RateTable::compute(s.methods(), s.policy(), d).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut csv = Table::new(["table", "beta", "alpha", "rate"]);
    for (o, m) in s.methods().iter().enumerate() {
        for b in 0..d {
            for a in 0..d {
                csv.push(vec![m.id().into(), b.into(), a.into(), table.per_method[o][(b, a)].into()]);
            }
        }
    }
    for b in 0..d {
        for a in 0..d {
            csv.push(vec!["mean".into(), b.into(), a.into(), table.mean[(b, a)].into()]);
        }
    }
    let mut conf = Table::new(["limit", "min_rate", "level", "confidence_steps"]);
    let mut lines = vec![format!("{}: mean relative entropy S̄(β|α), rows β, columns α", s.name())];
    for b in 0..d {
        let row: Vec<String> = (0..d).map(|a| format!("{:9.5}", table.mean[(b, a)])).collect();
        lines.push(row.join(" "));
    }
    for limit in 0..d {
        let min = table.min_rate(limit, s.sectors());
        let steps = table.confidence_steps(limit, doc.run.level, s.sectors());
        conf.push(vec![limit.into(), min.into(), doc.run.level.into(), steps.into()]);
        lines.push(format!(
            "limit {limit}: min rate {}, confidence steps at {}: {}",
            min.map_or("none".into(), |v| format!("{v:.5}")),
            doc.run.level,
            steps.map_or("none".into(), |v| v.to_string())
        ));
    }
    let files = [out.write_csv("rates.csv", &csv)?, out.write_csv("confidence.csv", &conf)?];
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(lines)
}

/// `scaling-check`.
pub fn scaling_check(
    doc: &ConfigDocument,
    deltas: Option<Vec<f64>>,
    samples: Option<usize>,
    out: &OutDir,
) -> Result<Vec<String>, CliError> {
    validate(doc)?;
    let (name, model) = continuous(crate::config::build_scenario(&doc.scenario)?)?;
    let deltas = deltas.unwrap_or_else(|| doc.run.deltas.clone());
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(CliError::Validation(format!("δ must be positive and finite, got {d}")));
    }
    let mut laws: Vec<Law> = (0..model.dim()).map(Law::Pinned).collect();
    laws.push(Law::Mixture);
    let config = ScalingConfig {
        deltas: deltas.clone(),
        times: doc.run.times.clone(),
        samples: samples.unwrap_or(doc.run.samples),
        laws,
        seed: doc.run.seed,
    };
    let report = scaling_limit_check(&ScalingModel::from_model(&model), &config)?;
    let mut csv = Table::new(["delta", "law", "t", "moment", "channel", "other", "s", "simulated", "predicted", "sigma", "deviation"]);
    let law_name = |l: Law| match l {
        Law::Pinned(a) => format!("pinned_{a}"),
        Law::Mixture => "mixture".into(),
    };
    for r in &report.rows {
        let (moment, channel, other, s) = match r.moment {
            Moment::Mean { channel } => ("mean", channel, None, None),
            Moment::Covariance { channel, other, s } => ("covariance", channel, Some(other), Some(s)),
        };
        csv.push(vec![
            r.delta.into(),
            law_name(r.law).into(),
            r.t.into(),
            moment.into(),
            channel.into(),
            other.into(),
            s.into(),
            r.simulated.into(),
            r.predicted.into(),
            r.sigma.into(),
            r.deviation().into(),
        ]);
    }
    let path = out.write_csv("scaling.csv", &csv)?;
    let mut lines = vec![format!("{name}: {} moment rows", report.rows.len())];
    for &delta in &deltas {
        let worst = report
            .rows
            .iter()
            .filter(|r| r.delta == delta && r.sigma > 0.0 && matches!(r.moment, Moment::Mean { .. }))
            .map(|r| r.deviation() / r.sigma)
            .fold(0.0, f64::max);
        lines.push(format!("δ = {delta}: largest mean deviation {worst:.2}σ"));
    }
    lines.push(format!("wrote {}", path.display()));
    Ok(lines)
}

/// `export-scenario`: a built-in name or a config file, written as an inline config.
pub fn export_scenario(source: &str, globals: &Globals, out: &OutDir) -> Result<Vec<String>, CliError> {
    let scenario = if scenarios::BUILTIN_NAMES.contains(&source) {
        scenarios::builtin(source).map_err(|e| CliError::Validation(e.to_string()))?
    } else if Path::new(source).exists() {
        let doc = load(Path::new(source), globals)?;
        crate::config::build_scenario(&doc.scenario)?
    } else {
        return Err(CliError::Validation(format!(
            "{source:?} is neither a built-in scenario ({}) nor a readable file",
            scenarios::BUILTIN_NAMES.join(", ")
        )));
    };
    let mut doc = ConfigDocument::with_scenario(scenario_doc(&scenario));
    if let Some(seed) = globals.seed {
        doc.run.seed = seed;
    }
    debug_assert!(matches!(doc.scenario, ScenarioDoc::Discrete(_) | ScenarioDoc::Continuous(_)));
    let path = out.write_text(&format!("{}.json", scenario.name()), &(doc.to_json() + "\n"))?;
    Ok(vec![format!("wrote {}", path.display())])
}
