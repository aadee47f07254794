//! The diffusive limit: Gaussian measurement noise, the pointer-distribution and
//! Belavkin SDEs, their closed-form solutions and an empirical scaling-limit check.
//!
//! Outcomes of all methods are flattened into channels e = (o, i) with weight
//! w_e = c(o)·p0^o(i). The noise increments ΔX_e have covariance C·Δt with
//! C_ef = w_e δ_ef − w_e w_f.
//!
//! The SDE steps use the Euler–Maruyama update plus the commutative-noise
//! Milstein correction. The correction keeps the trace exactly and makes the
//! schemes strongly first order.

use crate::linalg::{hermitize_and_renormalize, log_sum_exp, softmax, CMatrix, DensityMatrix, LinalgError, ProbVector, PROB_TOL};
use crate::measurement::{partition_pointers, MeasurementError, SectorPartition};
use crate::prelude::*;
use crate::protocol::Outcome;
use crate::rng::trajectory_rng;
use crate::C64;
use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, StandardNormal};

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;
/// Probe amplitudes below this modulus violate the diffusive condition.
pub const DIFFUSIVE_TOL: f64 = 1e-12;
/// Tolerance on ⟨Ψ|H_α|Ψ⟩ = 0 and on Γ-centering.
pub const CENTERING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContinuousError {
    #[error("method {method}: probe amplitude of outcome {outcome} vanishes, the diffusive limit needs every ⟨i|Ψ⟩ ≠ 0")]
    DiffusiveCondition { method: String, outcome: usize },
    #[error("method {method}: ⟨Ψ|H|Ψ⟩ = {value} for pointer {pointer}, expected 0")]
    NonzeroExpectation { method: String, pointer: usize, value: C64 },
    #[error("method {method}: Σ_i p0(i)Γ(i|α) = {value} for pointer {pointer}, expected 0")]
    NotCentered { method: String, pointer: usize, value: f64 },
    #[error("method {method}: interaction Hamiltonian for pointer {pointer} is not Hermitian")]
    NotHermitian { method: String, pointer: usize },
    #[error("method {method}: {source}")]
    ProbeLaw { method: String, source: LinalgError },
    #[error("method {method}: probe law p0 has a zero entry at outcome {outcome}")]
    ZeroProbeProbability { method: String, outcome: usize },
    #[error("{what}: expected {expected}, got {got}")]
    Count { what: &'static str, expected: usize, got: usize },
    #[error("method weights: {0}")]
    MethodWeights(LinalgError),
    #[error(transparent)]
    Pointer(#[from] MeasurementError),
    #[error("step produced factor {factor} for pointer {pointer}; reduce the time step")]
    StepSize { pointer: usize, factor: f64 },
    #[error("density matrix: {0}")]
    Density(LinalgError),
    #[error("time step must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("δ = {delta} makes some p(i|α) leave (0, 1); largest admissible δ is {max_admissible}")]
    InadmissibleDelta { delta: f64, max_admissible: f64 },
    #[error("δ = {delta} leaves no step before t = {t}")]
    CoarseDelta { delta: f64, t: f64 },
    #[error("scaling check accepts at most 3 grid times, got {0}")]
    TooManyTimes(usize),
    #[error("scaling check needs at least 2 samples")]
    TooFewSamples,
}

/// Scaling-limit data of one measurement method.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousMethod {
    id: String,
    outcomes: Vec<String>,
    p0: Vec<f64>,
    /// c(i|α), outcome-major.
    c: DMatrix<C64>,
    /// Γ(i|α) = 2 Im c(i|α).
    gamma: DMatrix<f64>,
    source: ContinuousSource,
}

/// How a continuous method was declared.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousSource {
    Hamiltonian { probe: Vec<C64>, hamiltonians: Vec<CMatrix>, basis: CMatrix },
    Gamma,
}

impl ContinuousMethod {
    /// c(i|α) = ⟨i|H_α|Ψ⟩/⟨i|Ψ⟩ and p0(i) = |⟨i|Ψ⟩|² from rescaled interaction Hamiltonians.
    pub fn from_hamiltonians(
        id: impl Into<String>,
        outcomes: Vec<String>,
        probe: Vec<C64>,
        hamiltonians: Vec<CMatrix>,
        basis: Option<CMatrix>,
    ) -> Result<Self, ContinuousError> {
        let id = id.into();
        let k = probe.len();
        if outcomes.len() != k {
            return Err(ContinuousError::Count { what: "outcomes", expected: k, got: outcomes.len() });
        }
        let norm: f64 = probe.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > PROB_TOL {
            return Err(MeasurementError::ProbeNotNormalized { norm }.into());
        }
        let basis = basis.unwrap_or_else(|| CMatrix::identity(k, k));
        if basis.shape() != (k, k) {
            return Err(ContinuousError::Count { what: "probe basis dimension", expected: k, got: basis.nrows() });
        }
        let psi = nalgebra::DVector::from_column_slice(&probe);
        let overlaps: Vec<C64> = (0..k).map(|i| basis.column(i).dotc(&psi)).collect();
        if let Some(i) = overlaps.iter().position(|z| z.norm() <= DIFFUSIVE_TOL) {
            return Err(ContinuousError::DiffusiveCondition { method: id, outcome: i });
        }
        let d = hamiltonians.len();
        let mut c = DMatrix::<C64>::zeros(k, d);
        for (a, h) in hamiltonians.iter().enumerate() {
            if h.shape() != (k, k) {
                return Err(ContinuousError::Count { what: "Hamiltonian dimension", expected: k, got: h.nrows() });
            }
            if crate::linalg::max_abs(&(h - h.adjoint())) > CENTERING_TOL {
                return Err(ContinuousError::NotHermitian { method: id, pointer: a });
            }
            let h_psi = h * &psi;
            let value = psi.dotc(&h_psi);
            if value.norm() > CENTERING_TOL {
                return Err(ContinuousError::NonzeroExpectation { method: id, pointer: a, value });
            }
            for i in 0..k {
                c[(i, a)] = basis.column(i).dotc(&h_psi) / overlaps[i];
            }
        }
        let p0 = overlaps.iter().map(|z| z.norm_sqr()).collect();
        let source = ContinuousSource::Hamiltonian { probe, hamiltonians, basis };
        Self::from_parts(id, outcomes, p0, c, source)
    }

    /// Method declared by p0 and Γ; c defaults to iΓ/2.
    pub fn from_gamma(id: impl Into<String>, outcomes: Vec<String>, p0: Vec<f64>, gamma: DMatrix<f64>) -> Result<Self, ContinuousError> {
        let c = gamma.map(|g| C64::new(0.0, 0.5 * g));
        Self::from_parts(id.into(), outcomes, p0, c, ContinuousSource::Gamma)
    }

    fn from_parts(
        id: String,
        outcomes: Vec<String>,
        p0: Vec<f64>,
        c: DMatrix<C64>,
        source: ContinuousSource,
    ) -> Result<Self, ContinuousError> {
        let k = p0.len();
        if outcomes.len() != k || c.nrows() != k {
            return Err(ContinuousError::Count { what: "outcomes", expected: k, got: outcomes.len().min(c.nrows()) });
        }
        let p0 = ProbVector::new(p0).map_err(|source| ContinuousError::ProbeLaw { method: id.clone(), source })?.into_vec();
        if let Some(i) = p0.iter().position(|&p| p <= 0.0) {
            return Err(ContinuousError::ZeroProbeProbability { method: id, outcome: i });
        }
        let gamma = c.map(|z| 2.0 * z.im);
        for a in 0..c.ncols() {
            let value: f64 = (0..k).map(|i| p0[i] * gamma[(i, a)]).sum();
            if value.abs() > CENTERING_TOL {
                return Err(ContinuousError::NotCentered { method: id, pointer: a, value });
            }
        }
        Ok(Self { id, outcomes, p0, c, gamma, source })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }
    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }
    pub fn p0(&self) -> &[f64] {
        &self.p0
    }
    pub fn c(&self, outcome: usize, pointer: usize) -> C64 {
        self.c[(outcome, pointer)]
    }
    pub fn gamma(&self, outcome: usize, pointer: usize) -> f64 {
        self.gamma[(outcome, pointer)]
    }
    pub fn gamma_table(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    pub fn c_table(&self) -> &DMatrix<C64> {
        &self.c
    }
    pub fn source(&self) -> &ContinuousSource {
        &self.source
    }
    pub fn num_pointers(&self) -> usize {
        self.c.ncols()
    }
}

/// Pointer data plus continuous methods, flattened into channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    labels: Vec<String>,
    energies: Vec<f64>,
    q0: ProbVector,
    rho0: DensityMatrix,
    methods: Vec<ContinuousMethod>,
    method_weights: ProbVector,
    channels: Vec<Outcome>,
    w: Vec<f64>,
    sqrt_w: Vec<f64>,
    /// (channel, pointer).
    c: DMatrix<C64>,
    gamma: DMatrix<f64>,
}

impl ContinuousModel {
    pub fn new(
        labels: Vec<String>,
        energies: Vec<f64>,
        q0: Vec<f64>,
        rho0: Option<CMatrix>,
        methods: Vec<ContinuousMethod>,
        method_weights: Vec<f64>,
    ) -> Result<Self, ContinuousError> {
        let pointer = crate::measurement::PointerModel::new(labels, energies, q0, rho0, 1.0)?;
        let d = pointer.dim();
        if methods.is_empty() || method_weights.len() != methods.len() {
            return Err(ContinuousError::Count { what: "method weights", expected: methods.len(), got: method_weights.len() });
        }
        let method_weights = ProbVector::new(method_weights).map_err(ContinuousError::MethodWeights)?;
        let mut channels = Vec::new();
        let mut w = Vec::new();
        for (o, m) in methods.iter().enumerate() {
            if m.num_pointers() != d {
                return Err(ContinuousError::Count { what: "pointers per method", expected: d, got: m.num_pointers() });
            }
            for i in 0..m.num_outcomes() {
                channels.push(Outcome { method: o, outcome: i });
                w.push(method_weights[o] * m.p0()[i]);
            }
        }
        let c = DMatrix::from_fn(channels.len(), d, |e, a| methods[channels[e].method].c(channels[e].outcome, a));
        let gamma = c.map(|z| 2.0 * z.im);
        let sqrt_w = w.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            labels: pointer.labels().to_vec(),
            energies: pointer.energies().to_vec(),
            q0: pointer.q0().clone(),
            rho0: pointer.rho0().clone(),
            methods,
            method_weights,
            channels,
            w,
            sqrt_w,
            c,
            gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
    pub fn q0(&self) -> &ProbVector {
        &self.q0
    }
    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }
    pub fn methods(&self) -> &[ContinuousMethod] {
        &self.methods
    }
    pub fn method_weights(&self) -> &ProbVector {
        &self.method_weights
    }
    /// Channel e ↦ (o, i).
    pub fn channels(&self) -> &[Outcome] {
        &self.channels
    }
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
    /// w_e = c(o) p0^o(i).
    pub fn channel_weights(&self) -> &[f64] {
        &self.w
    }
    /// Γ_e(α).
    pub fn gamma(&self, channel: usize, pointer: usize) -> f64 {
        self.gamma[(channel, pointer)]
    }
    /// c_e(α).
    pub fn c(&self, channel: usize, pointer: usize) -> C64 {
        self.c[(channel, pointer)]
    }

    /// Same model with another initial distribution and diagonal initial state.
    pub fn with_q0(&self, q0: Vec<f64>) -> Result<Self, ContinuousError> {
        Self::new(self.labels.clone(), self.energies.clone(), q0, None, self.methods.clone(), self.method_weights.as_slice().to_vec())
    }

    /// C_ef = w_e δ_ef − w_e w_f (covariance per unit time).
    pub fn noise_covariance(&self) -> DMatrix<f64> {
        let n = self.num_channels();
        DMatrix::from_fn(n, n, |e, f| if e == f { self.w[e] - self.w[e] * self.w[f] } else { -self.w[e] * self.w[f] })
    }

    /// l(α,β) = −i(E_α−E_β) − ½ Σ_e w_e (|c_α|² + |c_β|² − c_α² − (c_β*)²).
    pub fn l_exponent(&self, alpha: usize, beta: usize) -> C64 {
        let mut l = C64::new(0.0, -(self.energies[alpha] - self.energies[beta]));
        for e in 0..self.num_channels() {
            let (ca, cb) = (self.c[(e, alpha)], self.c[(e, beta)]);
            l -= 0.5 * self.w[e] * (ca.norm_sqr() + cb.norm_sqr() - ca * ca - cb.conj() * cb.conj());
        }
        l
    }

    /// τ with 2/τ = Σ_e w_e (Γ_e(α) − Γ_e(Υ))²; `inf` for indistinguishable pointers.
    pub fn characteristic_time(&self, limit: usize, alpha: usize) -> f64 {
        let rate: f64 = (0..self.num_channels()).map(|e| self.w[e] * (self.gamma[(e, alpha)] - self.gamma[(e, limit)]).powi(2)).sum();
        if rate > 0.0 {
            2.0 / rate
        } else {
            f64::INFINITY
        }
    }

    /// Pointers with equal Γ over every channel.
    pub fn sectors(&self, tol: f64) -> Result<SectorPartition, ContinuousError> {
        Ok(partition_pointers(self.dim(), tol, |a, b| {
            (0..self.num_channels()).map(|e| (self.gamma[(e, a)] - self.gamma[(e, b)]).abs()).fold(0.0, f64::max)
        })?)
    }

    /// ⟨Γ_e⟩ = Σ_γ q(γ) Γ_e(γ).
    fn mean_gamma(&self, q: &[f64]) -> Vec<f64> {
        (0..self.num_channels()).map(|e| (0..self.dim()).map(|g| q[g] * self.gamma[(e, g)]).sum()).collect()
    }

    /// Σ_ef Cov_q(Γ_e, Γ_f)(ΔX_e ΔX_f − C_ef Δt).
    fn second_order_mean_term(&self, q: &[f64], m: &[f64], dx: &[f64], dt: f64) -> f64 {
        // Σ_ef v_ef ΔX_e ΔX_f = Var_q(Σ_e Γ_e ΔX_e) and Σ_ef v_ef C_ef = E_q[Σ w g²] − E_q[(Σ w g)²] with g = Γ − m.
        let mut proj_mean = 0.0;
        let mut proj_sq = 0.0;
        let mut c_term = 0.0;
        for g in 0..self.dim() {
            let (mut proj, mut wg2, mut wg) = (0.0, 0.0, 0.0);
            for e in 0..self.num_channels() {
                let dev = self.gamma[(e, g)] - m[e];
                proj += dev * dx[e];
                wg2 += self.w[e] * dev * dev;
                wg += self.w[e] * dev;
            }
            proj_mean += q[g] * proj;
            proj_sq += q[g] * proj * proj;
            c_term += q[g] * (wg2 - wg * wg);
        }
        proj_sq - proj_mean * proj_mean - c_term * dt
    }

    /// (u, s) for coefficients k_e: u = Σ k_e ΔX_e, s = Σ_ef k_e k_f C_ef Δt.
    fn first_order_terms(&self, k: impl Fn(usize) -> C64, dx: &[f64], dt: f64) -> (C64, C64) {
        let mut u = C64::new(0.0, 0.0);
        let mut wk2 = C64::new(0.0, 0.0);
        let mut wk = C64::new(0.0, 0.0);
        for e in 0..self.num_channels() {
            let ke = k(e);
            u += ke * dx[e];
            wk2 += self.w[e] * ke * ke;
            wk += self.w[e] * ke;
        }
        (u, (wk2 - wk * wk) * dt)
    }
}

/// One noise increment ΔX over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement(pub Vec<f64>);

impl NoiseIncrement {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
    /// Sum of two consecutive increments (coarsening a refined path).
    pub fn combine(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

/// y_e = √w_e (x_e − √w_e Σ_f √w_f x_f) with independent x_e ~ N(0, Δt).
pub fn sample_noise<R: RngCore + ?Sized>(model: &ContinuousModel, dt: f64, rng: &mut R) -> NoiseIncrement {
    let s = &model.sqrt_w;
    let scale = dt.sqrt();
    let x: Vec<f64> = (0..s.len()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    let proj: f64 = s.iter().zip(&x).map(|(a, b)| a * b).sum();
    NoiseIncrement(s.iter().zip(&x).map(|(&se, &xe)| se * (xe - se * proj)).collect())
}

/// One step of dQ(α) = Q(α) Σ_e (Γ_e(α) − ⟨Γ_e⟩) dX_e.
pub fn sde_step_q(q: &[f64], model: &ContinuousModel, dt: f64, dx: &NoiseIncrement) -> Result<Vec<f64>, ContinuousError> {
    let dx = dx.values();
    let m = model.mean_gamma(q);
    let shared = model.second_order_mean_term(q, &m, dx, dt);
    let mut next = Vec::with_capacity(q.len());
    for a in 0..model.dim() {
        let (u, s) = model.first_order_terms(|e| C64::new(model.gamma[(e, a)] - m[e], 0.0), dx, dt);
        let factor = 1.0 + u.re + 0.5 * (u.re * u.re - s.re - shared);
        if factor <= 0.0 && q[a] > 1e-8 {
            return Err(ContinuousError::StepSize { pointer: a, factor });
        }
        next.push(if factor > 0.0 { q[a] * factor } else { q[a] * 1e-300 });
    }
    let sum: f64 = next.iter().sum();
    Ok(next.iter().map(|v| v / sum).collect())
}

/// Q_t(α) = q0(α) M_t(α) / Σ_γ q0(γ) M_t(γ) with
/// ln M_t(α) = Σ_e Γ_e(α) W_e − (t/2) Σ_e w_e Γ_e(α)².
pub fn closed_form_q(model: &ContinuousModel, w: &[f64], t: f64) -> ProbVector {
    ProbVector::normalize(softmax(&closed_form_log_weights(model, w, t))).expect("softmax output is a distribution")
}

fn log_martingale(model: &ContinuousModel, w: &[f64], t: f64, a: usize) -> f64 {
    (0..model.num_channels()).map(|e| model.gamma[(e, a)] * w[e] - 0.5 * t * model.w[e] * model.gamma[(e, a)].powi(2)).sum()
}

fn closed_form_log_weights(model: &ContinuousModel, w: &[f64], t: f64) -> Vec<f64> {
    (0..model.dim()).map(|a| model.q0[a].ln() + log_martingale(model, w, t, a)).collect()
}

/// A_t(α,β) = A0(α,β) exp(l(α,β)t − iΣ_e (c_e(α) − c_e(β)*) W_e) / M_t.
pub fn closed_form_a(model: &ContinuousModel, w: &[f64], t: f64) -> CMatrix {
    let d = model.dim();
    let log_mt = log_sum_exp(&closed_form_log_weights(model, w, t));
    let a0 = model.rho0.matrix();
    CMatrix::from_fn(d, d, |a, b| {
        if a0[(a, b)] == C64::new(0.0, 0.0) {
            return C64::new(0.0, 0.0);
        }
        let mut exponent = model.l_exponent(a, b) * t;
        for e in 0..model.num_channels() {
            exponent -= C64::new(0.0, 1.0) * (model.c[(e, a)] - model.c[(e, b)].conj()) * w[e];
        }
        a0[(a, b)] * (exponent - log_mt).exp()
    })
}

/// Result of one Belavkin step.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoStep {
    pub rho: CMatrix,
    /// |Tr A' − 1| before renormalization.
    pub trace_drift: f64,
}

/// Shared part of the entrywise density steps:
/// A'(α,β) = A(α,β)(1 + drift·Δt + u + ½(u² − s − v)) with u = Σ_e (k_e − m_e) ΔX_e.
fn entrywise_step(
    a: &CMatrix,
    model: &ContinuousModel,
    dt: f64,
    dx: &NoiseIncrement,
    coefficient: impl Fn(usize, usize, usize) -> C64,
    drift: impl Fn(usize, usize) -> C64,
) -> Result<RhoStep, ContinuousError> {
    let d = model.dim();
    let dx = dx.values();
    let q: Vec<f64> = (0..d).map(|k| a[(k, k)].re).collect();
    let m = model.mean_gamma(&q);
    let shared = model.second_order_mean_term(&q, &m, dx, dt);
    let mut next = CMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            if a[(r, c)] == C64::new(0.0, 0.0) {
                continue;
            }
            let (u, s) = model.first_order_terms(|e| coefficient(e, r, c) - m[e], dx, dt);
            let factor = C64::new(1.0, 0.0) + drift(r, c) * dt + u + 0.5 * (u * u - s - shared);
            if r == c && factor.re <= 0.0 && q[r] > 1e-8 {
                return Err(ContinuousError::StepSize { pointer: r, factor: factor.re });
            }
            next[(r, c)] = a[(r, c)] * factor;
        }
    }
    let trace = next.trace().re;
    let rho = hermitize_and_renormalize(&next).map_err(ContinuousError::Density)?;
    Ok(RhoStep { rho, trace_drift: (trace - 1.0).abs() })
}

/// One step of the Belavkin equation
/// dρ = L(ρ)dt − iΣ_e (C_e ρ − ρ C_e† − ρ Tr[(C_e − C_e†)ρ]) dX_e.
pub fn sde_step_rho(a: &CMatrix, model: &ContinuousModel, dt: f64, dx: &NoiseIncrement) -> Result<RhoStep, ContinuousError> {
    let i = C64::new(0.0, 1.0);
    entrywise_step(
        a,
        model,
        dt,
        dx,
        |e, r, c| -i * (model.c[(e, r)] - model.c[(e, c)].conj()),
        |r, c| {
            let mut l = -i * (model.energies[r] - model.energies[c]);
            for e in 0..model.num_channels() {
                let (cr, cc) = (model.c[(e, r)], model.c[(e, c)]);
                l += model.w[e] * (cr * cc.conj() - 0.5 * (cr.norm_sqr() + cc.norm_sqr()));
            }
            l
        },
    )
}

/// One step of the compensated equation
/// dÃ = Σ_e w_e (S_e Ã S_e − ½{S_e², Ã})dt + Σ_e ({S_e, Ã} − 2Tr[S_e Ã]Ã) dX_e, S_e = Γ_e/2.
///
/// The running ⟨S_e⟩ = Tr[S_e Ã] is read off the diagonal of `a`.
pub fn compensated_rho_step(a: &CMatrix, model: &ContinuousModel, dt: f64, dx: &NoiseIncrement) -> Result<RhoStep, ContinuousError> {
    entrywise_step(
        a,
        model,
        dt,
        dx,
        |e, r, c| C64::new(0.5 * (model.gamma[(e, r)] + model.gamma[(e, c)]), 0.0),
        |r, c| {
            let s: f64 = (0..model.num_channels()).map(|e| model.w[e] * (model.gamma[(e, r)] - model.gamma[(e, c)]).powi(2)).sum();
            C64::new(-0.125 * s, 0.0)
        },
    )
}

/// Per-pointer phases ψ_α of the diagonal compensating unitary, with
/// dψ_α = [E_α − Σ_e w_e R_e(α)(S_e(α) − 2⟨S_e⟩)]dt + Σ_e R_e(α) dX_e.
///
/// Ã(α,β) = e^{i(ψ_α − ψ_β)} A(α,β).
pub fn compensator_phase_step(phases: &mut [f64], q: &[f64], model: &ContinuousModel, dt: f64, dx: &NoiseIncrement) {
    let m = model.mean_gamma(q);
    for (a, ph) in phases.iter_mut().enumerate() {
        let mut d = model.energies[a] * dt;
        for e in 0..model.num_channels() {
            let r = model.c[(e, a)].re;
            d += r * dx.0[e] - model.w[e] * r * (0.5 * model.gamma[(e, a)] - m[e]) * dt;
        }
        *ph += d;
    }
}

/// W_e += ΔX_e + w_e ⟨Γ_e⟩ Δt, with ⟨Γ_e⟩ at the start of the step.
pub fn accumulate_w(w: &mut [f64], q: &[f64], model: &ContinuousModel, dt: f64, dx: &NoiseIncrement) {
    let m = model.mean_gamma(q);
    for e in 0..w.len() {
        w[e] += dx.0[e] + model.w[e] * m[e] * dt;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Record every k-th step (0: only the endpoints).
    pub record_every: usize,
    pub track_density: bool,
    pub track_compensated: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, t_max: 5.0, record_every: 0, track_density: false, track_compensated: false }
    }
}

impl PathConfig {
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// State of a continuous path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub step: usize,
    pub t: f64,
    pub q: Vec<f64>,
    /// Accumulated W_t (noise plus compensator).
    pub w: Vec<f64>,
    /// Accumulated X_t.
    pub x: Vec<f64>,
    pub rho: Option<CMatrix>,
    pub rho_tilde: Option<CMatrix>,
    pub max_trace_drift: f64,
    pub max_diagonal_gap: f64,
}

impl PathState {
    pub fn new(model: &ContinuousModel, config: &PathConfig) -> Self {
        let n = model.num_channels();
        let rho0 = model.rho0.matrix().clone();
        Self {
            step: 0,
            t: 0.0,
            q: model.q0.as_slice().to_vec(),
            w: vec![0.0; n],
            x: vec![0.0; n],
            rho: config.track_density.then(|| rho0.clone()),
            rho_tilde: config.track_compensated.then_some(rho0),
            max_trace_drift: 0.0,
            max_diagonal_gap: 0.0,
        }
    }

    /// Advances every tracked quantity with the same increment.
    pub fn advance(&mut self, model: &ContinuousModel, dt: f64, dx: &NoiseIncrement) -> Result<(), ContinuousError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ContinuousError::InvalidDt(dt));
        }
        accumulate_w(&mut self.w, &self.q, model, dt, dx);
        for (x, d) in self.x.iter_mut().zip(dx.values()) {
            *x += d;
        }
        self.q = sde_step_q(&self.q, model, dt, dx)?;
        if let Some(rho) = &self.rho {
            let step = sde_step_rho(rho, model, dt, dx)?;
            self.max_trace_drift = self.max_trace_drift.max(step.trace_drift);
            for (k, q) in self.q.iter().enumerate() {
                self.max_diagonal_gap = self.max_diagonal_gap.max((step.rho[(k, k)].re - q).abs());
            }
            self.rho = Some(step.rho);
        }
        if let Some(rt) = &self.rho_tilde {
            self.rho_tilde = Some(compensated_rho_step(rt, model, dt, dx)?.rho);
        }
        self.step += 1;
        self.t = self.step as f64 * dt;
        Ok(())
    }
}

/// Recorded point of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub rho: Option<CMatrix>,
    pub rho_tilde: Option<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub samples: Vec<PathSample>,
    pub final_state: PathState,
    /// ln Q_t(α) at every step, `log_q[step][α]`.
    pub log_q: Vec<Vec<f64>>,
}

/// Integrates one path of length `config.t_max` with freshly sampled noise.
pub fn simulate_path(model: &ContinuousModel, config: &PathConfig, rng: &mut dyn RngCore) -> Result<PathResult, ContinuousError> {
    if !(config.dt > 0.0) || !config.dt.is_finite() {
        return Err(ContinuousError::InvalidDt(config.dt));
    }
    let steps = config.steps();
    let mut state = PathState::new(model, config);
    let snapshot = |s: &PathState| PathSample {
        t: s.t,
        q: s.q.clone(),
        w: s.w.clone(),
        x: s.x.clone(),
        rho: s.rho.clone(),
        rho_tilde: s.rho_tilde.clone(),
    };
    let mut samples = vec![snapshot(&state)];
    let mut log_q = vec![state.q.iter().map(|v| v.ln()).collect::<Vec<_>>()];
    for k in 1..=steps {
        let dx = sample_noise(model, config.dt, rng);
        state.advance(model, config.dt, &dx)?;
        log_q.push(state.q.iter().map(|v| v.ln()).collect());
        if (config.record_every > 0 && k % config.record_every == 0) || k == steps {
            samples.push(snapshot(&state));
        }
    }
    Ok(PathResult { samples, final_state: state, log_q })
}

/// max_t max_α |Q_t − closed_form_q(W_t, t)| along a path driven by `increments`.
pub fn closed_form_error(model: &ContinuousModel, increments: &[NoiseIncrement], dt: f64) -> Result<f64, ContinuousError> {
    let config = PathConfig { dt, t_max: dt * increments.len() as f64, ..PathConfig::default() };
    let mut state = PathState::new(model, &config);
    let mut err: f64 = 0.0;
    for dx in increments {
        state.advance(model, dt, dx)?;
        let exact = closed_form_q(model, &state.w, state.t);
        for (a, &q) in state.q.iter().enumerate() {
            err = err.max((q - exact[a]).abs());
        }
    }
    Ok(err)
}

/// Discrete probe statistics p^δ(i|α) for a family of step sizes δ.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaFamily {
    /// p^δ(i|α) = p0(i)(1 + √δ Γ(i|α)).
    Linear { p0: Vec<f64>, gamma: DMatrix<f64> },
    /// p^δ(i|α) = |⟨b_i| exp(−i√δ H_α) |Ψ⟩|² from rescaled interaction Hamiltonians.
    Hamiltonian { probe: Vec<C64>, hamiltonians: Vec<CMatrix>, basis: CMatrix },
}

impl DeltaFamily {
    /// The family built from a continuous method (Hamiltonian when available).
    pub fn from_method(method: &ContinuousMethod) -> Self {
        match method.source() {
            ContinuousSource::Hamiltonian { probe, hamiltonians, basis } => {
                Self::Hamiltonian { probe: probe.clone(), hamiltonians: hamiltonians.clone(), basis: basis.clone() }
            }
            ContinuousSource::Gamma => Self::Linear { p0: method.p0().to_vec(), gamma: method.gamma_table().clone() },
        }
    }

    /// p^δ(i|α), outcome-major.
    pub fn probabilities(&self, delta: f64) -> DMatrix<f64> {
        match self {
            Self::Linear { p0, gamma } => {
                DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |i, a| p0[i] * (1.0 + delta.sqrt() * gamma[(i, a)]))
            }
            Self::Hamiltonian { probe, hamiltonians, basis } => {
                let k = probe.len();
                let psi = nalgebra::DVector::from_column_slice(probe);
                let mut p = DMatrix::zeros(k, hamiltonians.len());
                for (a, h) in hamiltonians.iter().enumerate() {
                    let out = hermitian_exp(h, -delta.sqrt()) * &psi;
                    for i in 0..k {
                        p[(i, a)] = basis.column(i).dotc(&out).norm_sqr();
                    }
                }
                p
            }
        }
    }

    fn admissible(&self, delta: f64) -> bool {
        self.probabilities(delta).iter().all(|&p| p > 0.0 && p < 1.0)
    }

    /// Largest δ' ≤ `delta` such that all probabilities stay in (0, 1) on (0, δ'].
    pub fn max_admissible_delta(&self, delta: f64) -> f64 {
        match self {
            Self::Linear { p0, gamma } => {
                let mut root = f64::INFINITY;
                for i in 0..gamma.nrows() {
                    for a in 0..gamma.ncols() {
                        let g = gamma[(i, a)];
                        if g < 0.0 {
                            root = root.min(-1.0 / g);
                        } else if g > 0.0 {
                            root = root.min((1.0 / p0[i] - 1.0) / g);
                        }
                    }
                }
                (root * root).min(delta)
            }
            Self::Hamiltonian { .. } => {
                let grid = 2000;
                let mut last = 0.0;
                for k in 1..=grid {
                    let d = delta * k as f64 / grid as f64;
                    if !self.admissible(d) {
                        return last;
                    }
                    last = d;
                }
                last
            }
        }
    }
}

/// exp(i·s·H) for Hermitian H.
fn hermitian_exp(h: &CMatrix, s: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, s * l)));
    v * phases * v.adjoint()
}

/// Law under which the discrete chain is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    /// P_α: every step sees pointer α.
    Pinned(usize),
    /// P: α drawn from q0 once per sample.
    Mixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub deltas: Vec<f64>,
    /// Up to 3 grid times.
    pub times: Vec<f64>,
    pub samples: usize,
    pub laws: Vec<Law>,
    pub seed: u64,
}

/// Which moment a row reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    /// E[W_t(e)].
    Mean { channel: usize },
    /// Cov(W_t(e), W_s(f)).
    Covariance { channel: usize, other: usize, s: f64 },
}

/// Simulated against predicted moment for one (δ, law, t).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub delta: f64,
    pub law: Law,
    pub t: f64,
    pub moment: Moment,
    pub simulated: f64,
    pub predicted: f64,
    /// Monte-Carlo standard error of `simulated`.
    pub sigma: f64,
}

impl MomentRow {
    pub fn deviation(&self) -> f64 {
        (self.simulated - self.predicted).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<MomentRow>,
}

impl ScalingReport {
    pub fn find(&self, delta: f64, law: Law, t: f64, moment: Moment) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.delta == delta && r.law == law && r.t == t && r.moment == moment)
    }
}

/// Model used by the scaling check: families with method weights and q0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingModel {
    pub families: Vec<DeltaFamily>,
    pub method_weights: Vec<f64>,
    pub q0: Vec<f64>,
    /// Limit data (p0, Γ) used for the predictions.
    pub limit: ContinuousModel,
}

impl ScalingModel {
    /// Families derived from every method of `model`.
    pub fn from_model(model: &ContinuousModel) -> Self {
        Self {
            families: model.methods().iter().map(DeltaFamily::from_method).collect(),
            method_weights: model.method_weights().as_slice().to_vec(),
            q0: model.q0().as_slice().to_vec(),
            limit: model.clone(),
        }
    }

    /// Channel probabilities c(o)p^δ(i|α), (channel, pointer).
    fn channel_probabilities(&self, delta: f64) -> Result<DMatrix<f64>, ContinuousError> {
        let tables: Vec<DMatrix<f64>> = self
            .families
            .iter()
            .map(|f| {
                let max_admissible = f.max_admissible_delta(delta);
                if max_admissible >= delta && f.admissible(delta) {
                    Ok(f.probabilities(delta))
                } else {
                    Err(ContinuousError::InadmissibleDelta { delta, max_admissible })
                }
            })
            .collect::<Result<_, _>>()?;
        let channels = self.limit.channels();
        Ok(DMatrix::from_fn(channels.len(), self.limit.dim(), |e, a| {
            let ch = channels[e];
            self.method_weights[ch.method] * tables[ch.method][(ch.outcome, a)]
        }))
    }
}

fn multinomial<R: RngCore + ?Sized>(n: u64, p: &[f64], rng: &mut R) -> Vec<u64> {
    let mut remaining = n;
    let mut mass = 1.0;
    let mut out = vec![0; p.len()];
    for (k, &pk) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == p.len() {
            out[k] = remaining;
            break;
        }
        let prob = (pk / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, prob).map(|b| b.sample(rng)).unwrap_or(0);
        out[k] = draw;
        remaining -= draw;
        mass -= pk;
    }
    out
}

/// Monte-Carlo first and second moments of W_t^δ = √δ (N_{t/δ} − w t/δ) against the
/// diffusive-limit predictions.
pub fn scaling_limit_check(model: &ScalingModel, config: &ScalingConfig) -> Result<ScalingReport, ContinuousError> {
    if config.times.len() > 3 {
        return Err(ContinuousError::TooManyTimes(config.times.len()));
    }
    if config.samples < 2 {
        return Err(ContinuousError::TooFewSamples);
    }
    let limit = &model.limit;
    let n_ch = limit.num_channels();
    let d = limit.dim();
    let mut times = config.times.clone();
    times.sort_by(f64::total_cmp);
    let cov = limit.noise_covariance();
    let drift = |a: usize, e: usize| limit.w[e] * limit.gamma[(e, a)];
    let mut rows = Vec::new();
    let mut stream = 0u64;
    for &delta in &config.deltas {
        if let Some(&t) = times.first().filter(|&&t| (t / delta).round() < 1.0) {
            return Err(ContinuousError::CoarseDelta { delta, t });
        }
        let probs = model.channel_probabilities(delta)?;
        for &law in &config.laws {
            let mut rng = trajectory_rng(config.seed, stream);
            stream += 1;
            let steps: Vec<u64> = times.iter().map(|t| (t / delta).round() as u64).collect();
            // samples[k][time][channel]
            let mut data = vec![vec![vec![0.0; n_ch]; times.len()]; config.samples];
            for sample in data.iter_mut() {
                let alpha = match law {
                    Law::Pinned(a) => a,
                    Law::Mixture => crate::protocol::sample_index(&model.q0, &mut rng),
                };
                let p: Vec<f64> = (0..n_ch).map(|e| probs[(e, alpha)]).collect();
                let mut counts = vec![0u64; n_ch];
                let mut done = 0;
                for (ti, &n) in steps.iter().enumerate() {
                    let inc = multinomial(n - done, &p, &mut rng);
                    done = n;
                    for e in 0..n_ch {
                        counts[e] += inc[e];
                        let expected = limit.w[e] * n as f64;
                        sample[ti][e] = delta.sqrt() * (counts[e] as f64 - expected);
                    }
                }
            }
            let mixture_mean = |e: usize| -> f64 { (0..d).map(|a| model.q0[a] * drift(a, e)).sum() };
            let mean_rate = |e: usize| match law {
                Law::Pinned(a) => drift(a, e),
                Law::Mixture => mixture_mean(e),
            };
            let ns = config.samples as f64;
            for (ti, &t) in times.iter().enumerate() {
                let means: Vec<f64> = (0..n_ch).map(|e| data.iter().map(|s| s[ti][e]).sum::<f64>() / ns).collect();
                for e in 0..n_ch {
                    let var = data.iter().map(|s| (s[ti][e] - means[e]).powi(2)).sum::<f64>() / (ns - 1.0);
                    rows.push(MomentRow {
                        delta,
                        law,
                        t,
                        moment: Moment::Mean { channel: e },
                        simulated: means[e],
                        predicted: t * mean_rate(e),
                        sigma: (var / ns).sqrt(),
                    });
                }
                for (si, &s) in times.iter().enumerate().take(ti + 1) {
                    let means_s: Vec<f64> = (0..n_ch).map(|e| data.iter().map(|x| x[si][e]).sum::<f64>() / ns).collect();
                    for e in 0..n_ch {
                        for f in 0..n_ch {
                            let prods: Vec<f64> = data.iter().map(|x| (x[ti][e] - means[e]) * (x[si][f] - means_s[f])).collect();
                            let c = prods.iter().sum::<f64>() / (ns - 1.0);
                            let var = prods.iter().map(|v| (v - c).powi(2)).sum::<f64>() / (ns - 1.0);
                            let mut predicted = s.min(t) * cov[(e, f)];
                            if law == Law::Mixture {
                                let spread: f64 =
                                    (0..d).map(|a| model.q0[a] * (drift(a, e) - mixture_mean(e)) * (drift(a, f) - mixture_mean(f))).sum();
                                predicted += s * t * spread;
                            }
                            rows.push(MomentRow {
                                delta,
                                law,
                                t,
                                moment: Moment::Covariance { channel: e, other: f, s },
                                simulated: c,
                                predicted,
                                sigma: (var / ns).sqrt(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(ScalingReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trajectory_rng;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma2(lambda: f64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -lambda), c(0.0, lambda), c(0.0, 0.0)])
    }

    fn sigma3(lambda: f64) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(lambda, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-lambda, 0.0)])
    }

    fn plus() -> Vec<C64> {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        vec![c(s, 0.0), c(s, 0.0)]
    }

    fn two() -> Vec<String> {
        vec!["1".into(), "2".into()]
    }

    #[test]
    fn zero_hamiltonian_carries_no_information() {
        let m = ContinuousMethod::from_hamiltonians("z", two(), plus(), vec![CMatrix::zeros(2, 2)], None).unwrap();
        assert_eq!(m.c(0, 0), c(0.0, 0.0));
        assert_eq!(m.gamma(1, 0), 0.0);
    }

    #[test]
    fn sigma3_gives_pure_phase_backaction() {
        let m = ContinuousMethod::from_hamiltonians("s3", two(), plus(), vec![sigma3(0.7)], None).unwrap();
        assert_abs_diff_eq!(m.c(0, 0).re, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(m.c(1, 0).re, -0.7, epsilon = 1e-15);
        assert_eq!(m.gamma(0, 0), 0.0);
    }

    #[test]
    fn sigma2_gamma_and_centering() {
        let m = ContinuousMethod::from_hamiltonians("s2", two(), plus(), vec![sigma2(0.5)], None).unwrap();
        assert_abs_diff_eq!(m.gamma(0, 0), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.gamma(1, 0), 1.0, epsilon = 1e-15);
        let m = ContinuousMethod::from_hamiltonians("s2", two(), plus(), vec![sigma2(-0.5)], None).unwrap();
        assert_abs_diff_eq!(m.gamma(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.p0()[0] * m.gamma(0, 0) + m.p0()[1] * m.gamma(1, 0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn diffusive_and_expectation_conditions() {
        let err = ContinuousMethod::from_hamiltonians("x", two(), vec![c(1.0, 0.0), c(0.0, 0.0)], vec![sigma2(1.0)], None);
        assert!(matches!(err, Err(ContinuousError::DiffusiveCondition { outcome: 1, .. })));
        let sigma1 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let err = ContinuousMethod::from_hamiltonians("x", two(), plus(), vec![sigma1], None);
        assert!(matches!(err, Err(ContinuousError::NonzeroExpectation { .. })));
    }

    fn demo(lambdas: &[f64]) -> ContinuousModel {
        let d = lambdas.len();
        let m = ContinuousMethod::from_hamiltonians("probe", two(), plus(), lambdas.iter().map(|&l| sigma2(-l)).collect(), None).unwrap();
        ContinuousModel::new(
            (0..d).map(|k| alloc::format!("{k}")).collect(),
            vec![0.0; d],
            vec![1.0 / d as f64; d],
            None,
            vec![m],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn characteristic_time_examples() {
        let m = demo(&[1.0, -1.0]);
        assert_abs_diff_eq!(m.characteristic_time(0, 1), 0.125, epsilon = 1e-15);
        assert_eq!(demo(&[1.0, 1.0]).characteristic_time(0, 1), f64::INFINITY);
        let lam = 0.3;
        assert_abs_diff_eq!(demo(&[lam, -lam]).characteristic_time(0, 1), 1.0 / (8.0 * lam * lam), epsilon = 1e-12);
    }

    #[test]
    fn noise_rows_sum_to_zero() {
        let m = demo(&[1.0, -1.0]);
        let mut rng = trajectory_rng(11, 0);
        for _ in 0..1000 {
            let dx = sample_noise(&m, 1e-3, &mut rng);
            assert!(dx.values().iter().sum::<f64>().abs() <= 1e-12);
        }
    }

    #[test]
    fn pointer_state_is_a_fixed_point() {
        let m = demo(&[1.0, -1.0, 0.3]);
        let mut rng = trajectory_rng(12, 0);
        let q = vec![0.0, 1.0, 0.0];
        let dx = sample_noise(&m, 1e-3, &mut rng);
        assert_eq!(sde_step_q(&q, &m, 1e-3, &dx).unwrap(), q);
    }

    #[test]
    fn diagonal_l_exponent_is_real() {
        let m = demo(&[1.0, -1.0]);
        let l = m.l_exponent(1, 1);
        assert_eq!(l.im, 0.0);
        // −½ Σ w Γ² with Γ = ±2 on both channels.
        assert_abs_diff_eq!(l.re, -2.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_at_zero_is_initial_state() {
        let m = demo(&[1.0, -1.0]);
        let q = closed_form_q(&m, &[0.0, 0.0], 0.0);
        assert_abs_diff_eq!(q[0], 0.5, epsilon = 1e-15);
        let a = closed_form_a(&m, &[0.0, 0.0], 0.0);
        assert!(crate::linalg::max_abs(&(a - m.rho0().matrix())) < 1e-15);
    }

    #[test]
    fn linear_family_admissibility() {
        let fam = DeltaFamily::Linear { p0: vec![0.5, 0.5], gamma: DMatrix::from_row_slice(2, 1, &[4.0, -4.0]) };
        assert_abs_diff_eq!(fam.max_admissible_delta(1.0), 1.0 / 16.0, epsilon = 1e-15);
    }
}
