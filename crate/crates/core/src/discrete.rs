//! The discrete measurement chain: outcome sampling, Bayes and density updates,
//! unitary compensation, trajectories and exact enumeration.

use crate::analysis::{fit_line, SlopeFit};
use crate::linalg::{self, log_sum_exp, softmax, CMatrix, LinalgError, ProbVector};
use crate::measurement::{compute_sectors, wrap_phase, MeasurementError, MeasurementMethod, PointerModel, SectorPartition, SECTOR_TOL};
use crate::prelude::*;
use crate::protocol::{sample_index, MethodSelector, Outcome, ProtocolError, ProtocolPolicy};
use crate::C64;
use rand::RngCore;

/// Outcome probabilities at or below this value are treated as underflow.
pub const UNDERFLOW_FLOOR: f64 = f64::MIN_POSITIVE;
/// Largest number of enumeration leaves.
pub const MAX_LEAVES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("method {0} does not exist")]
    UnknownMethod(usize),
    #[error("outcome {outcome} does not exist for method {method}")]
    UnknownOutcome { method: usize, outcome: usize },
    #[error("outcome {outcome} is out of range, the method has {available} outcomes")]
    OutcomeOutOfRange { outcome: usize, available: usize },
    #[error("outcome {outcome} has probability {probability} under the current state")]
    ZeroEvidence { outcome: usize, probability: f64 },
    #[error("outcome {outcome} of method {method} has probability {probability} under the current state")]
    ImpossibleOutcome { method: usize, outcome: usize, probability: f64 },
    #[error("weight of pointer {pointer} underflowed at step {step}; enable log-space weights")]
    Underflow { pointer: usize, step: usize },
    #[error("trial distribution: {0}")]
    Trial(LinalgError),
    #[error("trial distribution vanishes on pointer {0} where q0 is positive")]
    TrialSupport(usize),
    #[error("pinned pointer {0} is out of range")]
    PinnedOutOfRange(usize),
    #[error("stop threshold must lie in (0, 1), got {0}")]
    StopThreshold(f64),
    #[error("enumeration to depth {depth} needs up to {leaves} leaves, limit is {limit}")]
    TreeTooLarge { depth: usize, leaves: f64, limit: usize },
    #[error("policy has {policy} methods, scenario declares {methods}")]
    PolicySize { policy: usize, methods: usize },
}

/// Pointer model, methods, policy and the derived sector partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScenario {
    name: String,
    description: String,
    model: PointerModel,
    methods: Vec<MeasurementMethod>,
    policy: ProtocolPolicy,
    sectors: SectorPartition,
}

impl DiscreteScenario {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        model: PointerModel,
        methods: Vec<MeasurementMethod>,
        policy: ProtocolPolicy,
    ) -> Result<Self, SimError> {
        Self::with_sector_tolerance(name, description, model, methods, policy, SECTOR_TOL)
    }

    pub fn with_sector_tolerance(
        name: impl Into<String>,
        description: impl Into<String>,
        model: PointerModel,
        methods: Vec<MeasurementMethod>,
        policy: ProtocolPolicy,
        tolerance: f64,
    ) -> Result<Self, SimError> {
        policy.validate(&methods)?;
        for m in &methods {
            if m.probabilities().ncols() != model.dim() {
                return Err(
                    MeasurementError::Count { what: "pointer columns", expected: model.dim(), got: m.probabilities().ncols() }.into()
                );
            }
        }
        let sectors = compute_sectors(&methods, model.dim(), tolerance)?;
        Ok(Self { name: name.into(), description: description.into(), model, methods, policy, sectors })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn description(&self) -> &str {
        &self.description
    }
    pub fn model(&self) -> &PointerModel {
        &self.model
    }
    pub fn methods(&self) -> &[MeasurementMethod] {
        &self.methods
    }
    pub fn policy(&self) -> &ProtocolPolicy {
        &self.policy
    }
    pub fn sectors(&self) -> &SectorPartition {
        &self.sectors
    }
    pub fn dim(&self) -> usize {
        self.model.dim()
    }
    /// True when some method carries amplitudes or phases.
    pub fn is_quantum(&self) -> bool {
        self.methods.iter().any(|m| m.is_quantum())
    }
    /// |E| = Σ_o |spec(o)|.
    pub fn outcome_count(&self) -> usize {
        self.methods.iter().map(|m| m.num_outcomes()).sum()
    }

    /// Same scenario with another initial distribution (diagonal initial state).
    pub fn with_q0(&self, q0: Vec<f64>) -> Result<Self, SimError> {
        let model = self.model.with_q0(q0)?;
        Ok(Self { model, ..self.clone() })
    }

    /// Same scenario with another policy.
    pub fn with_policy(&self, policy: ProtocolPolicy) -> Result<Self, SimError> {
        policy.validate(&self.methods)?;
        Ok(Self { policy, ..self.clone() })
    }

    fn method(&self, o: usize) -> Result<&MeasurementMethod, SimError> {
        self.methods.get(o).ok_or(SimError::UnknownMethod(o))
    }
}

/// Draws i with probability π(i) = Σ_β q(β) p^o(i|β).
pub fn sample_outcome<R: RngCore + ?Sized>(q: &[f64], method: &MeasurementMethod, rng: &mut R) -> usize {
    let weights: Vec<f64> = (0..method.num_outcomes()).map(|i| method.outcome_probability(q, i)).collect();
    sample_index(&weights, rng)
}

fn check_outcome(method: &MeasurementMethod, outcome: usize) -> Result<(), SimError> {
    if outcome >= method.num_outcomes() {
        return Err(SimError::OutcomeOutOfRange { outcome, available: method.num_outcomes() });
    }
    Ok(())
}

/// Q'(α) = Q(α) p^o(i|α) / π(i).
pub fn bayes_update(q: &ProbVector, method: &MeasurementMethod, outcome: usize) -> Result<ProbVector, SimError> {
    check_outcome(method, outcome)?;
    let pi = method.outcome_probability(q.as_slice(), outcome);
    if pi <= UNDERFLOW_FLOOR {
        return Err(SimError::ZeroEvidence { outcome, probability: pi });
    }
    let next: Vec<f64> = q.as_slice().iter().enumerate().map(|(a, &w)| w * method.probability(outcome, a) / pi).collect();
    ProbVector::normalize(next).map_err(SimError::Trial)
}

/// Bayes update applied to a trial distribution Q̂.
pub fn trial_update(qhat: &ProbVector, method: &MeasurementMethod, outcome: usize) -> Result<ProbVector, SimError> {
    bayes_update(qhat, method, outcome)
}

/// Checks q̂0(α) > 0 wherever q0(α) > 0.
pub fn check_trial(q0: &ProbVector, qhat0: &ProbVector) -> Result<(), SimError> {
    if q0.len() != qhat0.len() {
        return Err(SimError::Trial(LinalgError::Dimension { expected: q0.len(), got: qhat0.len() }));
    }
    match (0..q0.len()).find(|&a| q0[a] > 0.0 && qhat0[a] <= 0.0) {
        Some(a) => Err(SimError::TrialSupport(a)),
        None => Ok(()),
    }
}

/// A'(α,β) = A(α,β) M(i|α) M(i|β)* / π(i).
pub fn density_update(a: &CMatrix, method: &MeasurementMethod, outcome: usize) -> Result<CMatrix, SimError> {
    check_outcome(method, outcome)?;
    let d = a.nrows();
    let m: Vec<C64> = (0..d).map(|k| method.amplitude(outcome, k)).collect();
    let mut next = CMatrix::from_fn(d, d, |r, c| a[(r, c)] * m[r] * m[c].conj());
    let pi = next.trace().re;
    if pi <= UNDERFLOW_FLOOR {
        return Err(SimError::ZeroEvidence { outcome, probability: pi });
    }
    next /= C64::new(pi, 0.0);
    Ok(next)
}

/// phase(α) += dt·(E_α + θ^o(i|α)), reduced to (−π, π].
pub fn compensator_update(phases: &mut [f64], method: &MeasurementMethod, outcome: usize, energies: &[f64], dt: f64) {
    for (a, ph) in phases.iter_mut().enumerate() {
        *ph = wrap_phase(*ph + dt * (energies[a] + method.phase(outcome, a)));
    }
}

/// Ã(α,β) = e^{i(phase(α) − phase(β))} A(α,β).
pub fn compensated(a: &CMatrix, phases: &[f64]) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * C64::from_polar(1.0, phases[r] - phases[c]))
}

/// Lifted recursion on sector masses: Q̄'(s) = Q̄(s) p(i|s) / π(i).
pub fn sector_mass_update(masses: &[f64], sectors: &SectorPartition, method: &MeasurementMethod, outcome: usize) -> Vec<f64> {
    let p: Vec<f64> = (0..sectors.len()).map(|s| method.probability(outcome, sectors.members(s)[0])).collect();
    let pi: f64 = masses.iter().zip(&p).map(|(m, p)| m * p).sum();
    masses.iter().zip(&p).map(|(m, p)| m * p / pi).collect()
}

/// Which law generates the outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truth {
    /// Outcomes from π(i) = Σ Q(β) p(i|β) (the law P).
    #[default]
    Mixture,
    /// Outcomes from p(·|α) for a fixed pointer α (the law P_α).
    Pinned(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub max_steps: usize,
    /// Halt once some sector mass reaches 1 − ε; `None` runs all `max_steps`.
    pub stop_threshold: Option<f64>,
    /// Record every k-th step (0 disables records).
    pub record_every: usize,
    /// Log-weight storage; `None` enables it for runs above 1000 steps.
    pub log_space: Option<bool>,
    pub truth: Truth,
    /// Trial distribution Q̂0; defaults to q0.
    pub trial_q0: Option<ProbVector>,
    /// Sector mass defining the localization step.
    pub localization_level: f64,
    /// Return the per-step ln Q history.
    pub keep_history: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_steps: 10_000,
            stop_threshold: Some(1e-9),
            record_every: 0,
            log_space: None,
            truth: Truth::Mixture,
            trial_q0: None,
            localization_level: 0.99,
            keep_history: false,
        }
    }
}

impl RunConfig {
    pub fn uses_log_space(&self) -> bool {
        self.log_space.unwrap_or(self.max_steps > 1000)
    }
}

/// Snapshot of a trajectory after `n` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    /// The pair observed at step n (none at n = 0).
    pub outcome: Option<Outcome>,
    pub q: Vec<f64>,
    pub qhat: Vec<f64>,
    pub sector_masses: Vec<f64>,
    pub density: Option<CMatrix>,
    pub compensated: Option<CMatrix>,
}

/// End-of-run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    /// Sector with the largest final mass.
    pub limit_sector: usize,
    /// True when the stop threshold was reached.
    pub converged: bool,
    pub steps: usize,
    pub final_q: ProbVector,
    pub final_qhat: ProbVector,
    pub final_log_q: Vec<f64>,
    pub sector_masses: Vec<f64>,
    pub density: Option<CMatrix>,
    pub compensated: Option<CMatrix>,
    /// Fitted decay rate of Q_n(α) for pointers outside the limit sector.
    pub decay_slopes: Vec<Option<SlopeFit>>,
    /// First step at which the limit sector mass reached the localization level.
    pub localization_step: Option<usize>,
    /// N_n(o, i), indexed `[o][i]`.
    pub counts: Vec<Vec<u64>>,
}

/// Report plus optional step data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub report: CollapseReport,
    pub records: Vec<StepRecord>,
    /// ln Q_n(α) for n = 0..=steps, if requested.
    pub log_q_history: Vec<Vec<f64>>,
    pub outcomes: Vec<Outcome>,
}

/// Mutable state of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub n: usize,
    log_space: bool,
    weights: Vec<f64>,
    trial_weights: Vec<f64>,
    pub q: Vec<f64>,
    pub qhat: Vec<f64>,
    pub density: Option<CMatrix>,
    pub phases: Option<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    pub current_method: usize,
    pub history: Vec<Outcome>,
}

impl TrajectoryState {
    pub fn new(
        scenario: &DiscreteScenario,
        config: &RunConfig,
        selector: &dyn MethodSelector,
        rng: &mut dyn RngCore,
    ) -> Result<Self, SimError> {
        let q0 = scenario.model().q0().clone();
        let qhat0 = config.trial_q0.clone().unwrap_or_else(|| q0.clone());
        check_trial(&q0, &qhat0)?;
        let log_space = config.uses_log_space();
        let to_storage = |v: &[f64]| -> Vec<f64> {
            if log_space {
                v.iter().map(|w| w.ln()).collect()
            } else {
                v.to_vec()
            }
        };
        let quantum = scenario.is_quantum();
        let first = selector.select_first(rng);
        scenario.method(first)?;
        Ok(Self {
            n: 0,
            log_space,
            weights: to_storage(q0.as_slice()),
            trial_weights: to_storage(qhat0.as_slice()),
            q: q0.as_slice().to_vec(),
            qhat: qhat0.as_slice().to_vec(),
            density: quantum.then(|| scenario.model().rho0().matrix().clone()),
            phases: quantum.then(|| vec![0.0; scenario.dim()]),
            counts: scenario.methods().iter().map(|m| vec![0; m.num_outcomes()]).collect(),
            current_method: first,
            history: Vec::new(),
        })
    }

    /// ln Q_n(α).
    pub fn log_q(&self) -> Vec<f64> {
        if self.log_space {
            let lse = log_sum_exp(&self.weights);
            self.weights.iter().map(|w| w - lse).collect()
        } else {
            self.q.iter().map(|w| w.ln()).collect()
        }
    }

    /// Ã_n, when the density matrix is tracked.
    pub fn compensated(&self) -> Option<CMatrix> {
        match (&self.density, &self.phases) {
            (Some(a), Some(ph)) => Some(compensated(a, ph)),
            _ => None,
        }
    }

    /// One measurement with the current method, then the choice of the next method.
    pub fn step(
        &mut self,
        scenario: &DiscreteScenario,
        selector: &dyn MethodSelector,
        truth: Truth,
        rng: &mut dyn RngCore,
    ) -> Result<Outcome, SimError> {
        let o = self.current_method;
        let method = scenario.method(o)?;
        let i = match truth {
            Truth::Mixture => sample_outcome(&self.q, method, rng),
            Truth::Pinned(a) => sample_index(&method.outcome_distribution(a), rng),
        };
        self.apply(scenario, Outcome { method: o, outcome: i })?;
        self.current_method = selector.select_next(&self.history, rng)?;
        scenario.method(self.current_method)?;
        Ok(Outcome { method: o, outcome: i })
    }

    /// Applies an observed pair to every tracked quantity.
    pub fn apply(&mut self, scenario: &DiscreteScenario, observed: Outcome) -> Result<(), SimError> {
        let method = scenario.method(observed.method)?;
        let i = observed.outcome;
        if i >= method.num_outcomes() {
            return Err(SimError::UnknownOutcome { method: observed.method, outcome: i });
        }
        let step = self.n + 1;
        let pi = method.outcome_probability(&self.q, i);
        if !(pi > 0.0) {
            return Err(SimError::ImpossibleOutcome { method: observed.method, outcome: i, probability: pi });
        }
        if self.log_space {
            for (a, w) in self.weights.iter_mut().enumerate() {
                *w += method.log_probability(i, a);
            }
            for (a, w) in self.trial_weights.iter_mut().enumerate() {
                *w += method.log_probability(i, a);
            }
            recentre(&mut self.weights);
            recentre(&mut self.trial_weights);
            self.q = softmax(&self.weights);
            self.qhat = softmax(&self.trial_weights);
        } else {
            self.q = linear_update(&self.q, method, i, step)?;
            self.qhat = linear_update(&self.qhat, method, i, step)?;
        }
        if let Some(a) = &self.density {
            self.density = Some(density_update(a, method, i)?);
        }
        if let Some(ph) = &mut self.phases {
            compensator_update(ph, method, i, scenario.model().energies(), scenario.model().dt());
        }
        self.counts[observed.method][i] += 1;
        self.history.push(observed);
        self.n = step;
        Ok(())
    }

    fn record(&self, scenario: &DiscreteScenario, outcome: Option<Outcome>) -> StepRecord {
        StepRecord {
            n: self.n,
            outcome,
            q: self.q.clone(),
            qhat: self.qhat.clone(),
            sector_masses: scenario.sectors().masses(&self.q),
            density: self.density.clone(),
            compensated: self.compensated(),
        }
    }
}

fn recentre(w: &mut [f64]) {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        for v in w.iter_mut() {
            *v -= max;
        }
    }
}

fn linear_update(q: &[f64], method: &MeasurementMethod, i: usize, step: usize) -> Result<Vec<f64>, SimError> {
    let pi = method.outcome_probability(q, i);
    if pi <= UNDERFLOW_FLOOR {
        return Err(SimError::Underflow { pointer: linalg::argmax(q), step });
    }
    let mut next: Vec<f64> = q.iter().enumerate().map(|(a, &w)| w * method.probability(i, a) / pi).collect();
    for (a, (&before, &after)) in q.iter().zip(&next).enumerate() {
        if before > 0.0 && method.probability(i, a) > 0.0 && after < UNDERFLOW_FLOOR {
            return Err(SimError::Underflow { pointer: a, step });
        }
    }
    let sum: f64 = next.iter().sum();
    for v in &mut next {
        *v /= sum;
    }
    Ok(next)
}

/// Runs one trajectory until the stop threshold or `max_steps`.
pub fn run_trajectory(
    scenario: &DiscreteScenario,
    selector: &dyn MethodSelector,
    config: &RunConfig,
    rng: &mut dyn RngCore,
) -> Result<TrajectoryResult, SimError> {
    if let Some(eps) = config.stop_threshold {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(SimError::StopThreshold(eps));
        }
    }
    if let Truth::Pinned(a) = config.truth {
        if a >= scenario.dim() {
            return Err(SimError::PinnedOutOfRange(a));
        }
    }
    let sectors = scenario.sectors();
    let mut state = TrajectoryState::new(scenario, config, selector, rng)?;
    let mut records = Vec::new();
    if config.record_every > 0 {
        records.push(state.record(scenario, None));
    }
    let mut history = vec![state.log_q()];
    let mut converged = reached(&sectors.masses(&state.q), config.stop_threshold);
    while !converged && state.n < config.max_steps {
        let observed = state.step(scenario, selector, config.truth, rng)?;
        history.push(state.log_q());
        converged = reached(&sectors.masses(&state.q), config.stop_threshold);
        if config.record_every > 0 && (state.n % config.record_every == 0 || converged || state.n == config.max_steps) {
            records.push(state.record(scenario, Some(observed)));
        }
    }
    let masses = sectors.masses(&state.q);
    let limit_sector = linalg::argmax(&masses);
    let decay_slopes = (0..scenario.dim())
        .map(|a| {
            if sectors.sector_of(a) == limit_sector {
                None
            } else {
                let series: Vec<f64> = history.iter().map(|h| h[a]).collect();
                decay_fit(&series).ok()
            }
        })
        .collect();
    let members = sectors.members(limit_sector);
    let localization_step = history.iter().position(|h| members.iter().map(|&a| h[a].exp()).sum::<f64>() >= config.localization_level);
    let report = CollapseReport {
        limit_sector,
        converged,
        steps: state.n,
        final_q: ProbVector::normalize(state.q.clone()).map_err(SimError::Trial)?,
        final_qhat: ProbVector::normalize(state.qhat.clone()).map_err(SimError::Trial)?,
        final_log_q: state.log_q(),
        sector_masses: masses,
        density: state.density.clone(),
        compensated: state.compensated(),
        decay_slopes,
        localization_step,
        counts: state.counts.clone(),
    };
    Ok(TrajectoryResult { report, records, log_q_history: if config.keep_history { history } else { Vec::new() }, outcomes: state.history })
}

fn reached(masses: &[f64], threshold: Option<f64>) -> bool {
    match threshold {
        Some(eps) => masses.iter().any(|&m| m >= 1.0 - eps),
        None => false,
    }
}

/// Least-squares decay rate of ln Q_n over the last half of the series.
///
/// Entries equal to `-inf` (zero weight) are skipped.
pub fn decay_fit(log_q: &[f64]) -> Result<SlopeFit, crate::analysis::AnalysisError> {
    let start = log_q.len() / 2;
    let points: Vec<(f64, f64)> =
        log_q.iter().enumerate().skip(start).filter(|(_, v)| v.is_finite()).map(|(n, &v)| (n as f64, v)).collect();
    let fit = fit_line(&points)?;
    Ok(SlopeFit { slope: -fit.slope, ..fit })
}

/// One leaf of the exact outcome tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLeaf {
    pub path: Vec<Outcome>,
    /// P(path), method choices included.
    pub probability: f64,
    /// P_α(path) for every pointer α.
    pub pointer_likelihood: Vec<f64>,
    /// Q_n along this path.
    pub q: Vec<f64>,
    /// A_n along this path, for quantum scenarios.
    pub density: Option<CMatrix>,
}

impl ChainLeaf {
    /// Bayes posterior of an arbitrary prior along this path (e.g. Q̂_n from q̂0).
    pub fn posterior(&self, prior: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = prior.iter().zip(&self.pointer_likelihood).map(|(p, l)| p * l).collect();
        let sum: f64 = w.iter().sum();
        w.iter().map(|v| v / sum).collect()
    }
}

/// Every positive-probability outcome sequence up to a depth, level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEnumeration {
    /// `levels[n]` holds the leaves after n steps.
    pub levels: Vec<Vec<ChainLeaf>>,
}

impl ChainEnumeration {
    /// E[f(leaf)] at depth n.
    pub fn expectation(&self, n: usize, f: impl Fn(&ChainLeaf) -> f64) -> f64 {
        self.levels[n].iter().map(|l| l.probability * f(l)).sum()
    }

    /// E_α[f(leaf)] at depth n.
    pub fn pointer_expectation(&self, n: usize, pointer: usize, f: impl Fn(&ChainLeaf) -> f64) -> f64 {
        self.levels[n].iter().map(|l| l.pointer_likelihood[pointer] * f(l)).sum()
    }
}

/// Exact enumeration of the chain under a time-independent policy.
///
/// Branches of probability zero are skipped.
pub fn enumerate_chain(scenario: &DiscreteScenario, policy: &ProtocolPolicy, depth: usize) -> Result<ChainEnumeration, SimError> {
    let methods = scenario.methods();
    let n_methods = methods.len();
    if policy.initial_weights(n_methods).len() != n_methods {
        return Err(SimError::PolicySize { policy: policy.initial_weights(n_methods).len(), methods: n_methods });
    }
    let bound = (scenario.outcome_count() as f64).powi(depth as i32);
    if bound > MAX_LEAVES as f64 {
        return Err(SimError::TreeTooLarge { depth, leaves: bound, limit: MAX_LEAVES });
    }
    let d = scenario.dim();
    let q0 = scenario.model().q0().as_slice();
    let root = ChainLeaf {
        path: Vec::new(),
        probability: 1.0,
        pointer_likelihood: vec![1.0; d],
        q: q0.to_vec(),
        density: scenario.is_quantum().then(|| scenario.model().rho0().matrix().clone()),
    };
    let mut levels = vec![vec![root]];
    for _ in 0..depth {
        let mut next = Vec::new();
        for leaf in levels.last().expect("root level") {
            let choice = match leaf.path.last() {
                None => policy.initial_weights(n_methods),
                Some(prev) => policy.transition_weights(*prev, n_methods)?,
            };
            for (o, &c) in choice.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let method = &methods[o];
                for i in 0..method.num_outcomes() {
                    let likelihood: Vec<f64> = (0..d).map(|a| leaf.pointer_likelihood[a] * c * method.probability(i, a)).collect();
                    let probability: f64 = q0.iter().zip(&likelihood).map(|(q, l)| q * l).sum();
                    if probability <= 0.0 {
                        continue;
                    }
                    let q = q0.iter().zip(&likelihood).map(|(q, l)| q * l / probability).collect();
                    let density = match &leaf.density {
                        Some(a) => Some(density_update(a, method, i)?),
                        None => None,
                    };
                    let mut path = leaf.path.clone();
                    path.push(Outcome { method: o, outcome: i });
                    next.push(ChainLeaf { path, probability, pointer_likelihood: likelihood, q, density });
                }
            }
        }
        levels.push(next);
    }
    Ok(ChainEnumeration { levels })
}
