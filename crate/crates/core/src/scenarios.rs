//! Built-in scenarios: the cavity toy model, the three-state rate-tuning example and
//! small 2–3 pointer models.

use crate::continuous::{ContinuousError, ContinuousMethod, ContinuousModel};
use crate::discrete::{DiscreteScenario, SimError};
use crate::linalg::{CMatrix, ProbVector};
use crate::measurement::{MeasurementError, MeasurementMethod, PointerModel};
use crate::prelude::*;
use crate::protocol::ProtocolPolicy;
use crate::C64;
use alloc::format;
use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use nalgebra::DMatrix;

/// Default photon-number truncation of the toy model (two full sector periods).
pub const TOY_N_MAX: usize = 8;
/// Default photon energy × Δt of the toy model.
pub const TOY_EPS_DT: f64 = 0.1;
/// Default ε of the rate-tuning example.
pub const TUNING_EPS: f64 = 1e-3;
/// Default q of the rate-tuning example.
pub const TUNING_Q: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("photon truncation must be at least 1")]
    EmptyTruncation,
    #[error("angle {angle} gives p({outcome}|{pointer}) = 0; relative-entropy rates degenerate")]
    ZeroProbabilityAngle { angle: f64, pointer: usize, outcome: &'static str },
    #[error("rate-tuning parameters need 0 < ε < ½ and q ∉ {{ε, 1−ε}} inside (0, 1), got ε = {eps}, q = {q}")]
    TuningParameters { eps: f64, q: f64 },
    #[error("unknown built-in scenario {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Continuous(#[from] ContinuousError),
}

/// A built-in scenario of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Discrete(DiscreteScenario),
    Continuous { name: String, description: String, model: ContinuousModel },
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Self::Discrete(s) => s.name(),
            Self::Continuous { name, .. } => name,
        }
    }
    pub fn description(&self) -> &str {
        match self {
            Self::Discrete(s) => s.description(),
            Self::Continuous { description, .. } => description,
        }
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &[
    "toy-model",
    "toy-model-mixed",
    "toy-model-paired",
    "rate-tuning",
    "bernoulli",
    "three-state",
    "zero-probability",
    "two-state-quantum",
    "continuous-demo",
    "two-sector-continuous",
];

/// Built-in scenario by name with default parameters.
pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    Ok(match name {
        "toy-model" => Scenario::Discrete(toy_model(TOY_N_MAX, PI / 3.0, TOY_EPS_DT)?),
        "toy-model-mixed" => Scenario::Discrete(toy_model_mixed(TOY_N_MAX, PI / 3.0, PI / 6.0, TOY_EPS_DT)?),
        "toy-model-paired" => Scenario::Discrete(toy_model_paired(TOY_N_MAX, PI / 3.0, PI / 6.0, TOY_EPS_DT)?),
        "rate-tuning" => Scenario::Discrete(rate_tuning_example(TUNING_EPS, TUNING_Q)?),
        "bernoulli" => Scenario::Discrete(bernoulli_pair(vec![0.5, 0.5])?),
        "three-state" => Scenario::Discrete(three_state_scenario(vec![0.2, 0.3, 0.5])?),
        "zero-probability" => Scenario::Discrete(zero_probability_scenario()?),
        "two-state-quantum" => Scenario::Discrete(two_state_quantum()?),
        "continuous-demo" => {
            continuous_scenario("continuous-demo", "Two pointers probed by −λσ₂ on |+⟩", continuous_demo(&[1.0, -1.0], vec![0.5, 0.5])?)
        }
        "two-sector-continuous" => continuous_scenario(
            "two-sector-continuous",
            "Three pointers in two Γ-sectors with distinct phases inside the first",
            two_sector_continuous()?,
        ),
        other => return Err(ScenarioError::Unknown(other.into())),
    })
}

fn continuous_scenario(name: &str, description: &str, model: ContinuousModel) -> Scenario {
    Scenario::Continuous { name: name.into(), description: description.into(), model }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn labels(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("{k}")).collect()
}

fn outcomes(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| String::from(*s)).collect()
}

/// p(±|p) = ½(1 ± sin(2·angle + πp/2)), evaluated on p mod 4 so that p → p+4 is exact.
pub fn toy_probability(angle: f64, photons: usize, plus: bool) -> f64 {
    let s = (2.0 * angle + PI * (photons % 4) as f64 / 2.0).sin();
    0.5 * if plus { 1.0 + s } else { 1.0 - s }
}

fn toy_pointer_model(n_max: usize, eps_dt: f64, q0: Option<Vec<f64>>) -> Result<PointerModel, ScenarioError> {
    if n_max == 0 {
        return Err(ScenarioError::EmptyTruncation);
    }
    let energies = (0..n_max).map(|p| eps_dt * p as f64).collect();
    let q0 = q0.unwrap_or_else(|| ProbVector::uniform(n_max).into_vec());
    Ok(PointerModel::new(labels(n_max), energies, q0, None, 1.0)?)
}

fn check_toy_angle(n_max: usize, angle: f64) -> Result<(), ScenarioError> {
    for p in 0..n_max.min(4) {
        for (plus, outcome) in [(true, "+"), (false, "-")] {
            if toy_probability(angle, p, plus) <= 1e-15 {
                return Err(ScenarioError::ZeroProbabilityAngle { angle, pointer: p, outcome });
            }
        }
    }
    Ok(())
}

/// Amplitudes M_±(p) of the toy model, outcome-major: probe e^{−iθσ₃}|+⟩, interaction
/// exp(−i(εΔt·p + (π/4)p σ₃)) and read-out basis (1, ±i)/√2.
fn toy_amplitudes(n_max: usize, angle: f64, eps_dt: f64) -> Result<DMatrix<C64>, MeasurementError> {
    let s = FRAC_1_SQRT_2;
    let probe = vec![C64::from_polar(s, -angle), C64::from_polar(s, angle)];
    let unitaries: Vec<CMatrix> = (0..n_max)
        .map(|p| {
            let pf = p as f64;
            let mut u = CMatrix::zeros(2, 2);
            u[(0, 0)] = C64::from_polar(1.0, -(eps_dt * pf + FRAC_PI_4 * pf));
            u[(1, 1)] = C64::from_polar(1.0, -(eps_dt * pf - FRAC_PI_4 * pf));
            u
        })
        .collect();
    let basis = CMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(0.0, s), c(0.0, -s)]);
    crate::measurement::kraus_from_unitary(&probe, &unitaries, &basis)
}

fn toy_method(id: &str, n_max: usize, angle: f64, eps_dt: f64, model: &PointerModel) -> Result<MeasurementMethod, ScenarioError> {
    let amps = toy_amplitudes(n_max, angle, eps_dt)?;
    // Exact probabilities keep p → p+4 periodicity at machine precision.
    let probabilities = DMatrix::from_fn(2, n_max, |i, p| toy_probability(angle, p, i == 0));
    let phases = DMatrix::from_fn(2, n_max, |i, p| {
        crate::measurement::phase_norm_decomposition(amps[(i, p)], model.energies()[p], model.dt()).unwrap_or(0.0)
    });
    Ok(MeasurementMethod::from_probabilities(id, outcomes(&["+", "-"]), probabilities, Some(phases), model)?)
}

/// Photon-counting toy model: one two-outcome method at read-out angle θ−θ' = `angle`
/// over photon numbers 0..n_max−1. Sectors are photon number mod 4.
pub fn toy_model(n_max: usize, angle: f64, eps_dt: f64) -> Result<DiscreteScenario, ScenarioError> {
    check_toy_angle(n_max, angle)?;
    let model = toy_pointer_model(n_max, eps_dt, None)?;
    let method = toy_method(&format!("angle={angle:.6}"), n_max, angle, eps_dt, &model)?;
    Ok(DiscreteScenario::new(
        "toy-model",
        format!("Photon-number toy model, N_max = {n_max}, θ−θ' = {angle}, εΔt = {eps_dt}"),
        model,
        vec![method],
        ProtocolPolicy::single(1, 0),
    )?)
}

/// Toy model with two read-out angles chosen independently with probability ½ each step.
pub fn toy_model_mixed(n_max: usize, first: f64, second: f64, eps_dt: f64) -> Result<DiscreteScenario, ScenarioError> {
    check_toy_angle(n_max, first)?;
    check_toy_angle(n_max, second)?;
    let model = toy_pointer_model(n_max, eps_dt, None)?;
    let methods = vec![
        toy_method(&format!("angle={first:.6}"), n_max, first, eps_dt, &model)?,
        toy_method(&format!("angle={second:.6}"), n_max, second, eps_dt, &model)?,
    ];
    Ok(DiscreteScenario::new(
        "toy-model-mixed",
        format!("Toy model, angles {first} and {second} drawn with probability ½ each step"),
        model,
        methods,
        ProtocolPolicy::uniform(2),
    )?)
}

/// Toy model whose single method applies both read-out angles in one step.
///
/// Outcomes are pairs (s₁, s₂) with M = M_{s₁}^{first}·M_{s₂}^{second}; the relative
/// entropy of one step is the sum of the two single-angle entropies.
pub fn toy_model_paired(n_max: usize, first: f64, second: f64, eps_dt: f64) -> Result<DiscreteScenario, ScenarioError> {
    check_toy_angle(n_max, first)?;
    check_toy_angle(n_max, second)?;
    let model = toy_pointer_model(n_max, eps_dt, None)?;
    let a = toy_amplitudes(n_max, first, eps_dt)?;
    let b = toy_amplitudes(n_max, second, eps_dt)?;
    let amps = DMatrix::from_fn(4, n_max, |k, p| a[(k / 2, p)] * b[(k % 2, p)]);
    let probabilities = DMatrix::from_fn(4, n_max, |k, p| toy_probability(first, p, k / 2 == 0) * toy_probability(second, p, k % 2 == 0));
    let phases = DMatrix::from_fn(4, n_max, |k, p| {
        crate::measurement::phase_norm_decomposition(amps[(k, p)], model.energies()[p], model.dt()).unwrap_or(0.0)
    });
    let method = MeasurementMethod::from_probabilities(
        format!("angles={first:.6}+{second:.6}"),
        outcomes(&["++", "+-", "-+", "--"]),
        probabilities,
        Some(phases),
        &model,
    )?;
    Ok(DiscreteScenario::new(
        "toy-model-paired",
        format!("Toy model, angles {first} and {second} applied together every step"),
        model,
        vec![method],
        ProtocolPolicy::single(1, 0),
    )?)
}

/// Three pointers, methods a and b with p^a(T|·) = (ε, q, 1−ε), p^b(T|·) = (q, ε, 1−ε),
/// chosen with probability ½ each.
pub fn rate_tuning_example(eps: f64, q: f64) -> Result<DiscreteScenario, ScenarioError> {
    let valid = eps > 0.0 && eps < 0.5 && q > 0.0 && q < 1.0 && (q - eps).abs() > 1e-12 && (q - (1.0 - eps)).abs() > 1e-12;
    if !valid {
        return Err(ScenarioError::TuningParameters { eps, q });
    }
    let model = PointerModel::simple(vec![1.0 / 3.0; 3])?;
    let table = |t: [f64; 3]| DMatrix::from_fn(2, 3, |i, a| if i == 0 { t[a] } else { 1.0 - t[a] });
    let methods = vec![
        MeasurementMethod::from_probabilities("a", outcomes(&["T", "F"]), table([eps, q, 1.0 - eps]), None, &model)?,
        MeasurementMethod::from_probabilities("b", outcomes(&["T", "F"]), table([q, eps, 1.0 - eps]), None, &model)?,
    ];
    Ok(DiscreteScenario::new(
        "rate-tuning",
        format!("Three pointers, two methods drawn with probability ½, ε = {eps}, q = {q}"),
        model,
        methods,
        ProtocolPolicy::uniform(2),
    )?)
}

/// Two pointers observed through a coin with p(1|0) = 0.9 and p(1|1) = 0.5.
pub fn bernoulli_pair(q0: Vec<f64>) -> Result<DiscreteScenario, ScenarioError> {
    let model = PointerModel::simple(q0)?;
    let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.1, 0.5]);
    let method = MeasurementMethod::from_probabilities("coin", outcomes(&["1", "0"]), p, None, &model)?;
    Ok(DiscreteScenario::new(
        "bernoulli",
        "Two pointers, coin with bias 0.9 versus 0.5",
        model,
        vec![method],
        ProtocolPolicy::single(1, 0),
    )?)
}

/// Three pointers with pairwise distinct three-outcome distributions.
pub fn three_state_scenario(q0: Vec<f64>) -> Result<DiscreteScenario, ScenarioError> {
    let model = PointerModel::simple(q0)?;
    let p = DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.1, 0.3, 0.5, 0.3, 0.1, 0.3, 0.6]);
    let method = MeasurementMethod::from_probabilities("die", outcomes(&["x", "y", "z"]), p, None, &model)?;
    Ok(DiscreteScenario::new(
        "three-state",
        "Three pointers, one non-degenerate three-outcome method",
        model,
        vec![method],
        ProtocolPolicy::single(1, 0),
    )?)
}

/// Three pointers where each outcome is impossible for exactly one pointer.
pub fn zero_probability_scenario() -> Result<DiscreteScenario, ScenarioError> {
    let model = PointerModel::simple(vec![1.0 / 3.0; 3])?;
    let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 0.5, 0.6, 0.0, 0.5, 0.4, 0.7, 0.0]);
    let method = MeasurementMethod::from_probabilities("veto", outcomes(&["x", "y", "z"]), p, None, &model)?;
    Ok(DiscreteScenario::new(
        "zero-probability",
        "Three pointers, outcome k is impossible under pointer k",
        model,
        vec![method],
        ProtocolPolicy::single(1, 0),
    )?)
}

/// Two pointers with a strongly discriminating quantum method and a coherent initial state.
pub fn two_state_quantum() -> Result<DiscreteScenario, ScenarioError> {
    let h = 0.5;
    let rho0 = CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, -h), c(0.0, h), c(h, 0.0)]);
    let model = PointerModel::new(labels(2), vec![0.0, 0.4], vec![h, h], Some(rho0), 1.0)?;
    let p = DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]);
    let phases = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 1.1, 0.7]);
    let method = MeasurementMethod::from_probabilities("read", outcomes(&["u", "d"]), p, Some(phases), &model)?;
    Ok(DiscreteScenario::new(
        "two-state-quantum",
        "Two pointers, coherent initial state, read-out with 0.95 fidelity",
        model,
        vec![method],
        ProtocolPolicy::single(1, 0),
    )?)
}

/// −λσ₂ for the probe qubit.
pub fn sigma2(lambda: f64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, lambda), c(0.0, -lambda), c(0.0, 0.0)])
}

/// b·σ₃ for the probe qubit.
pub fn sigma3(b: f64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(b, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-b, 0.0)])
}

fn plus_probe() -> Vec<C64> {
    vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]
}

/// One qubit probe |+⟩ coupled by H_α = −λ_α σ₂, so Γ(1|α) = 2λ_α and Γ(2|α) = −2λ_α.
pub fn continuous_demo(lambdas: &[f64], q0: Vec<f64>) -> Result<ContinuousModel, ScenarioError> {
    let d = lambdas.len();
    let method = ContinuousMethod::from_hamiltonians(
        "probe",
        outcomes(&["1", "2"]),
        plus_probe(),
        lambdas.iter().map(|&l| sigma2(l)).collect(),
        None,
    )?;
    Ok(ContinuousModel::new(labels(d), vec![0.0; d], q0, None, vec![method], vec![1.0])?)
}

/// Three pointers: 0 and 1 share Γ but differ in energy and in the σ₃ part of the
/// coupling, pointer 2 forms its own sector. The initial state is pure.
pub fn two_sector_continuous() -> Result<ContinuousModel, ScenarioError> {
    let lambdas = [1.0, 1.0, -1.0];
    let b = [0.5, -0.3, 0.0];
    let hs = (0..3).map(|k| sigma2(lambdas[k]) + sigma3(b[k])).collect();
    let method = ContinuousMethod::from_hamiltonians("probe", outcomes(&["1", "2"]), plus_probe(), hs, None)?;
    let third = 1.0 / 3.0;
    let rho0 = CMatrix::from_element(3, 3, c(third, 0.0));
    Ok(ContinuousModel::new(labels(3), vec![0.0, 0.7, 1.3], vec![third; 3], Some(rho0), vec![method], vec![1.0])?)
}
