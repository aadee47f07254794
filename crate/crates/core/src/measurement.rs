//! Pointer models, measurement methods, phases and sectors.

use crate::linalg::{CMatrix, DensityMatrix, LinalgError, ProbVector, DENSITY_TOL, PROB_TOL};
use crate::prelude::*;
use crate::C64;
use core::f64::consts::PI;
use nalgebra::DMatrix;

/// Default tolerance for grouping pointers into sectors.
pub const SECTOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasurementError {
    #[error("{what}: expected {expected} entries, got {got}")]
    Count { what: &'static str, expected: usize, got: usize },
    #[error("initial distribution: {0}")]
    InitialDistribution(LinalgError),
    #[error("initial density matrix: {0}")]
    InitialDensity(LinalgError),
    #[error("initial density diagonal entry {index} is {diagonal}, q0 is {q0}")]
    DiagonalMismatch { index: usize, diagonal: f64, q0: f64 },
    #[error("interaction time must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("energy of pointer {0} is not finite")]
    InvalidEnergy(usize),
    #[error("probe state has norm {norm}, expected 1")]
    ProbeNotNormalized { norm: f64 },
    #[error("unitary for pointer {pointer} has defect {defect}")]
    NotUnitary { pointer: usize, defect: f64 },
    #[error("probe basis has unitarity defect {defect}")]
    BasisNotUnitary { defect: f64 },
    #[error("method {method}: outcome probabilities for pointer {pointer} sum to {sum}")]
    Incomplete { method: String, pointer: usize, sum: f64 },
    #[error("method {method}: probability ({outcome}, {pointer}) is {value}")]
    InvalidProbability { method: String, outcome: usize, pointer: usize, value: f64 },
    #[error("method {method}: phase ({outcome}, {pointer}) is not finite")]
    InvalidPhase { method: String, outcome: usize, pointer: usize },
    #[error("method {0} has no outcomes")]
    NoOutcomes(String),
    #[error("amplitude has zero modulus, its phase is undefined")]
    PhaseUndefined,
    #[error("pointers {a} and {b} are chain-linked into one sector but differ by {distance}")]
    SectorAmbiguity { a: usize, b: usize, distance: f64 },
}

/// Pointer basis, energies and initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerModel {
    labels: Vec<String>,
    energies: Vec<f64>,
    q0: ProbVector,
    rho0: DensityMatrix,
    dt: f64,
}

impl PointerModel {
    /// `rho0 = None` selects the diagonal state diag(q0).
    pub fn new(labels: Vec<String>, energies: Vec<f64>, q0: Vec<f64>, rho0: Option<CMatrix>, dt: f64) -> Result<Self, MeasurementError> {
        let d = labels.len();
        if energies.len() != d {
            return Err(MeasurementError::Count { what: "energies", expected: d, got: energies.len() });
        }
        if q0.len() != d {
            return Err(MeasurementError::Count { what: "q0", expected: d, got: q0.len() });
        }
        if let Some(i) = energies.iter().position(|e| !e.is_finite()) {
            return Err(MeasurementError::InvalidEnergy(i));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(MeasurementError::InvalidDt(dt));
        }
        let q0 = ProbVector::new(q0).map_err(MeasurementError::InitialDistribution)?;
        let rho0 = match rho0 {
            None => DensityMatrix::from_diagonal(&q0),
            Some(m) => {
                if m.nrows() != d {
                    return Err(MeasurementError::Count { what: "rho0 rows", expected: d, got: m.nrows() });
                }
                let rho = DensityMatrix::new(m).map_err(MeasurementError::InitialDensity)?;
                for (index, (&diagonal, &q)) in rho.diagonal().iter().zip(q0.as_slice()).enumerate() {
                    if (diagonal - q).abs() > PROB_TOL {
                        return Err(MeasurementError::DiagonalMismatch { index, diagonal, q0: q });
                    }
                }
                rho
            }
        };
        Ok(Self { labels, energies, q0, rho0, dt })
    }

    /// Labels "0", "1", … with zero energies, diagonal initial state and unit dt.
    pub fn simple(q0: Vec<f64>) -> Result<Self, MeasurementError> {
        let d = q0.len();
        Self::new((0..d).map(|i| alloc::format!("{i}")).collect(), vec![0.0; d], q0, None, 1.0)
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
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Same model with another initial distribution and the matching diagonal state.
    pub fn with_q0(&self, q0: Vec<f64>) -> Result<Self, MeasurementError> {
        Self::new(self.labels.clone(), self.energies.clone(), q0, None, self.dt)
    }
}

/// How a method was declared.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSource {
    /// Probe state, one unitary per pointer, probe measurement basis (columns).
    Unitary { probe: Vec<C64>, unitaries: Vec<CMatrix>, basis: CMatrix },
    /// Amplitudes M(i|α), outcome-major.
    Amplitudes(DMatrix<C64>),
    /// Probabilities p(i|α) with optional phases θ(i|α), outcome-major.
    Probabilities { probabilities: DMatrix<f64>, phases: Option<DMatrix<f64>> },
}

/// One measurement method o with outcome set spec(o).
///
/// All tables are indexed `(outcome, pointer)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMethod {
    id: String,
    outcomes: Vec<String>,
    source: MethodSource,
    amplitudes: DMatrix<C64>,
    probabilities: DMatrix<f64>,
    log_probabilities: DMatrix<f64>,
    phases: DMatrix<f64>,
    phase_used: DMatrix<bool>,
    quantum: bool,
}

/// M(i|α) = ⟨b_i|U(α)|Ψ⟩ with b_i the columns of `basis`.
pub fn kraus_from_unitary(probe: &[C64], unitaries: &[CMatrix], basis: &CMatrix) -> Result<DMatrix<C64>, MeasurementError> {
    let k = probe.len();
    let norm: f64 = probe.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > PROB_TOL {
        return Err(MeasurementError::ProbeNotNormalized { norm });
    }
    if basis.nrows() != k || basis.ncols() != k {
        return Err(MeasurementError::Count { what: "probe basis dimension", expected: k, got: basis.nrows() });
    }
    let defect = unitarity_defect(basis);
    if defect > DENSITY_TOL {
        return Err(MeasurementError::BasisNotUnitary { defect });
    }
    let psi = nalgebra::DVector::from_column_slice(probe);
    let mut m = DMatrix::<C64>::zeros(k, unitaries.len());
    for (alpha, u) in unitaries.iter().enumerate() {
        if u.nrows() != k || u.ncols() != k {
            return Err(MeasurementError::Count { what: "unitary dimension", expected: k, got: u.nrows() });
        }
        let defect = unitarity_defect(u);
        if defect > DENSITY_TOL {
            return Err(MeasurementError::NotUnitary { pointer: alpha, defect });
        }
        let out = u * &psi;
        for i in 0..k {
            m[(i, alpha)] = basis.column(i).dotc(&out);
        }
    }
    Ok(m)
}

fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let prod = u.adjoint() * u;
    let id = CMatrix::identity(n, n);
    crate::linalg::max_abs(&(prod - id))
}

/// θ with e^{−i·dt·(E+θ)}·|M| = M, reduced to (−π/dt, π/dt].
pub fn phase_norm_decomposition(m: C64, energy: f64, dt: f64) -> Result<f64, MeasurementError> {
    if m.norm() == 0.0 {
        return Err(MeasurementError::PhaseUndefined);
    }
    let theta = -m.arg() / dt - energy;
    Ok(wrap_phase(theta * dt) / dt)
}

/// Reduces an angle to (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * (x / two_pi).round();
    if y <= -PI {
        y += two_pi;
    }
    y
}

impl MeasurementMethod {
    /// Method built from a probe state and per-pointer QND unitaries.
    ///
    /// `basis = None` measures the probe in its computational basis.
    pub fn from_unitaries(
        id: impl Into<String>,
        outcomes: Vec<String>,
        probe: Vec<C64>,
        unitaries: Vec<CMatrix>,
        basis: Option<CMatrix>,
        model: &PointerModel,
    ) -> Result<Self, MeasurementError> {
        let id = id.into();
        if unitaries.len() != model.dim() {
            return Err(MeasurementError::Count { what: "unitaries", expected: model.dim(), got: unitaries.len() });
        }
        if outcomes.len() != probe.len() {
            return Err(MeasurementError::Count { what: "outcomes", expected: probe.len(), got: outcomes.len() });
        }
        let basis = basis.unwrap_or_else(|| CMatrix::identity(probe.len(), probe.len()));
        let amps = kraus_from_unitary(&probe, &unitaries, &basis)?;
        let source = MethodSource::Unitary { probe, unitaries, basis };
        Self::from_parts(id, outcomes, source, amps, true, model)
    }

    /// Method declared directly by its amplitudes M(i|α) (outcome-major).
    pub fn from_amplitudes(
        id: impl Into<String>,
        outcomes: Vec<String>,
        amplitudes: DMatrix<C64>,
        model: &PointerModel,
    ) -> Result<Self, MeasurementError> {
        let id = id.into();
        Self::check_shape(&id, &outcomes, amplitudes.nrows(), amplitudes.ncols(), model)?;
        let source = MethodSource::Amplitudes(amplitudes.clone());
        Self::from_parts(id, outcomes, source, amplitudes, true, model)
    }

    /// Method declared by p(i|α) and optional θ(i|α) (outcome-major).
    ///
    /// Without phases the method is classical: θ = 0 and no density matrix is needed.
    pub fn from_probabilities(
        id: impl Into<String>,
        outcomes: Vec<String>,
        probabilities: DMatrix<f64>,
        phases: Option<DMatrix<f64>>,
        model: &PointerModel,
    ) -> Result<Self, MeasurementError> {
        let id = id.into();
        Self::check_shape(&id, &outcomes, probabilities.nrows(), probabilities.ncols(), model)?;
        for ((i, a), &p) in indexed(&probabilities) {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(MeasurementError::InvalidProbability { method: id, outcome: i, pointer: a, value: p });
            }
        }
        if let Some(th) = &phases {
            if th.shape() != probabilities.shape() {
                return Err(MeasurementError::Count { what: "phase rows", expected: probabilities.nrows(), got: th.nrows() });
            }
            for ((i, a), &t) in indexed(th) {
                if !t.is_finite() {
                    return Err(MeasurementError::InvalidPhase { method: id, outcome: i, pointer: a });
                }
            }
        }
        let dt = model.dt();
        let amps = DMatrix::from_fn(probabilities.nrows(), probabilities.ncols(), |i, a| {
            let theta = phases.as_ref().map_or(0.0, |th| th[(i, a)]);
            C64::from_polar(probabilities[(i, a)].sqrt(), -dt * (model.energies()[a] + theta))
        });
        let quantum = phases.is_some();
        let source = MethodSource::Probabilities { probabilities: probabilities.clone(), phases };
        let mut method = Self::from_parts(id, outcomes, source, amps, quantum, model)?;
        // Keep the declared numbers exactly rather than |√p|².
        method.log_probabilities = probabilities.map(|p| p.ln());
        method.probabilities = probabilities;
        Ok(method)
    }

    fn check_shape(id: &str, outcomes: &[String], rows: usize, cols: usize, model: &PointerModel) -> Result<(), MeasurementError> {
        if outcomes.is_empty() {
            return Err(MeasurementError::NoOutcomes(id.into()));
        }
        if rows != outcomes.len() {
            return Err(MeasurementError::Count { what: "outcome rows", expected: outcomes.len(), got: rows });
        }
        if cols != model.dim() {
            return Err(MeasurementError::Count { what: "pointer columns", expected: model.dim(), got: cols });
        }
        Ok(())
    }

    fn from_parts(
        id: String,
        outcomes: Vec<String>,
        source: MethodSource,
        amplitudes: DMatrix<C64>,
        quantum: bool,
        model: &PointerModel,
    ) -> Result<Self, MeasurementError> {
        if outcomes.is_empty() {
            return Err(MeasurementError::NoOutcomes(id));
        }
        let (k, d) = amplitudes.shape();
        let probabilities = amplitudes.map(|z| z.norm_sqr());
        for a in 0..d {
            let sum: f64 = (0..k).map(|i| probabilities[(i, a)]).sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(MeasurementError::Incomplete { method: id, pointer: a, sum });
            }
        }
        let mut phases = DMatrix::zeros(k, d);
        let mut phase_used = DMatrix::from_element(k, d, false);
        for i in 0..k {
            for a in 0..d {
                if let Ok(theta) = phase_norm_decomposition(amplitudes[(i, a)], model.energies()[a], model.dt()) {
                    phases[(i, a)] = theta;
                    phase_used[(i, a)] = true;
                }
            }
        }
        let log_probabilities = probabilities.map(|p| p.ln());
        Ok(Self { id, outcomes, source, amplitudes, probabilities, log_probabilities, phases, phase_used, quantum })
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
    pub fn source(&self) -> &MethodSource {
        &self.source
    }
    /// True when the method carries amplitudes or phases (density-matrix tracking applies).
    pub fn is_quantum(&self) -> bool {
        self.quantum
    }
    /// p(i|α).
    pub fn probability(&self, outcome: usize, pointer: usize) -> f64 {
        self.probabilities[(outcome, pointer)]
    }
    /// ln p(i|α), `-inf` when the probability vanishes.
    pub fn log_probability(&self, outcome: usize, pointer: usize) -> f64 {
        self.log_probabilities[(outcome, pointer)]
    }
    /// M(i|α).
    pub fn amplitude(&self, outcome: usize, pointer: usize) -> C64 {
        self.amplitudes[(outcome, pointer)]
    }
    /// θ(i|α); 0 for unused entries (p(i|α) = 0).
    pub fn phase(&self, outcome: usize, pointer: usize) -> f64 {
        self.phases[(outcome, pointer)]
    }
    pub fn phase_used(&self, outcome: usize, pointer: usize) -> bool {
        self.phase_used[(outcome, pointer)]
    }
    pub fn probabilities(&self) -> &DMatrix<f64> {
        &self.probabilities
    }
    pub fn amplitudes(&self) -> &DMatrix<C64> {
        &self.amplitudes
    }
    /// p(·|α) as a distribution over outcomes.
    pub fn outcome_distribution(&self, pointer: usize) -> Vec<f64> {
        self.probabilities.column(pointer).iter().copied().collect()
    }
    /// π(i) = Σ_β q(β) p(i|β).
    pub fn outcome_probability(&self, q: &[f64], outcome: usize) -> f64 {
        q.iter().enumerate().map(|(b, &w)| w * self.probabilities[(outcome, b)]).sum()
    }
    /// Outcomes that some pointer can never produce.
    pub fn has_zero_probabilities(&self) -> bool {
        self.probabilities.iter().any(|&p| p == 0.0)
    }
}

fn indexed<T>(m: &DMatrix<T>) -> impl Iterator<Item = ((usize, usize), &T)> {
    let rows = m.nrows();
    m.iter().enumerate().map(move |(k, v)| ((k % rows, k / rows), v))
}

/// Partition of pointers into classes the methods cannot distinguish.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPartition {
    sector_of: Vec<usize>,
    sectors: Vec<Vec<usize>>,
    tolerance: f64,
}

impl SectorPartition {
    pub fn sector_of(&self, pointer: usize) -> usize {
        self.sector_of[pointer]
    }
    pub fn sectors(&self) -> &[Vec<usize>] {
        &self.sectors
    }
    pub fn members(&self, sector: usize) -> &[usize] {
        &self.sectors[sector]
    }
    pub fn len(&self) -> usize {
        self.sectors.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
    pub fn assignment(&self) -> &[usize] {
        &self.sector_of
    }
    /// Σ_{α∈sector} q(α) per sector.
    pub fn masses(&self, q: &[f64]) -> Vec<f64> {
        self.sectors.iter().map(|s| s.iter().map(|&a| q[a]).sum()).collect()
    }
    pub fn same_sector(&self, a: usize, b: usize) -> bool {
        self.sector_of[a] == self.sector_of[b]
    }
    /// P ρ P / Tr(P ρ P) for the projector P onto `sector`.
    pub fn projected_state(&self, rho: &CMatrix, sector: usize) -> CMatrix {
        let d = rho.nrows();
        let members = &self.sectors[sector];
        let mass: f64 = members.iter().map(|&a| rho[(a, a)].re).sum();
        CMatrix::from_fn(d, d, |a, b| {
            if mass > 0.0 && self.sector_of[a] == sector && self.sector_of[b] == sector {
                rho[(a, b)] / mass
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

/// Largest |p^o(i|α) − p^o(i|β)| over all methods and outcomes.
pub fn pointer_distance(methods: &[MeasurementMethod], a: usize, b: usize) -> f64 {
    methods.iter().flat_map(|m| (0..m.num_outcomes()).map(move |i| (m.probability(i, a) - m.probability(i, b)).abs())).fold(0.0, f64::max)
}

/// Sectors induced by the outcome statistics of `methods`.
pub fn compute_sectors(methods: &[MeasurementMethod], dim: usize, tol: f64) -> Result<SectorPartition, MeasurementError> {
    partition_pointers(dim, tol, |a, b| pointer_distance(methods, a, b))
}

/// Single-linkage grouping of pointers with `distance ≤ tol`, then a check that every
/// pair inside a group is itself within `tol`.
pub fn partition_pointers(dim: usize, tol: f64, distance: impl Fn(usize, usize) -> f64) -> Result<SectorPartition, MeasurementError> {
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for a in 0..dim {
        for b in (a + 1)..dim {
            if distance(a, b) <= tol {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut sectors: Vec<Vec<usize>> = Vec::new();
    let mut root_to_sector = vec![usize::MAX; dim];
    let mut sector_of = vec![0; dim];
    for a in 0..dim {
        let r = find(&mut parent, a);
        if root_to_sector[r] == usize::MAX {
            root_to_sector[r] = sectors.len();
            sectors.push(Vec::new());
        }
        sector_of[a] = root_to_sector[r];
        sectors[root_to_sector[r]].push(a);
    }
    for s in &sectors {
        for (k, &a) in s.iter().enumerate() {
            for &b in &s[k + 1..] {
                let d = distance(a, b);
                if d > tol {
                    return Err(MeasurementError::SectorAmbiguity { a, b, distance: d });
                }
            }
        }
    }
    Ok(SectorPartition { sector_of, sectors, tolerance: tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("{i}")).collect()
    }

    #[test]
    fn identity_unitaries_give_probe_statistics() {
        let model = PointerModel::simple(vec![0.5, 0.5]).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let probe = vec![c(s, 0.0), c(0.0, (2.0f64).sqrt() * s)];
        let u = CMatrix::identity(2, 2);
        let m = MeasurementMethod::from_unitaries("id", names(2), probe, vec![u.clone(), u], None, &model).unwrap();
        for a in 0..2 {
            assert_abs_diff_eq!(m.probability(0, a), 1.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(m.probability(1, a), 2.0 / 3.0, epsilon = 1e-15);
        }
        let sectors = compute_sectors(&[m], 2, SECTOR_TOL).unwrap();
        assert_eq!(sectors.sectors(), &[vec![0, 1]]);
    }

    #[test]
    fn swap_unitary_discriminates_perfectly() {
        let model = PointerModel::simple(vec![0.5, 0.5]).unwrap();
        let swap = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let probe = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let m = MeasurementMethod::from_unitaries("swap", names(2), probe, vec![CMatrix::identity(2, 2), swap], None, &model).unwrap();
        assert_eq!(m.probability(0, 0), 1.0);
        assert_eq!(m.probability(1, 1), 1.0);
        assert!(!m.phase_used(1, 0));
        assert_eq!(m.phase(1, 0), 0.0);
        let sectors = compute_sectors(&[m], 2, SECTOR_TOL).unwrap();
        assert_eq!(sectors.sectors(), &[vec![0], vec![1]]);
    }

    #[test]
    fn non_unit_probe_is_rejected() {
        let err = kraus_from_unitary(&[c(1.0, 0.0), c(0.1, 0.0)], &[CMatrix::identity(2, 2)], &CMatrix::identity(2, 2));
        assert!(matches!(err, Err(MeasurementError::ProbeNotNormalized { .. })));
        let not_unitary = CMatrix::from_element(2, 2, c(1.0, 0.0));
        let err = kraus_from_unitary(&[c(1.0, 0.0), c(0.0, 0.0)], &[not_unitary], &CMatrix::identity(2, 2));
        assert!(matches!(err, Err(MeasurementError::NotUnitary { pointer: 0, .. })));
    }

    #[test]
    fn phase_examples() {
        assert_abs_diff_eq!(phase_norm_decomposition(c(0.7, 0.0), 0.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(phase_norm_decomposition(c(0.0, 0.5), 0.0, 1.0).unwrap(), -PI / 2.0, epsilon = 1e-15);
        assert_eq!(phase_norm_decomposition(c(0.0, 0.0), 0.0, 1.0), Err(MeasurementError::PhaseUndefined));
        let (e, dt) = (0.3, 0.25);
        let m = C64::from_polar(0.6, 1.234);
        let theta = phase_norm_decomposition(m, e, dt).unwrap();
        let back = C64::from_polar(0.6, -dt * (e + theta));
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn probabilities_must_be_complete() {
        let model = PointerModel::simple(vec![0.5, 0.5]).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.5, 0.2, 0.5]);
        assert!(matches!(
            MeasurementMethod::from_probabilities("a", names(2), p, None, &model),
            Err(MeasurementError::Incomplete { pointer: 0, .. })
        ));
    }

    #[test]
    fn chain_linked_sectors_are_ambiguous() {
        let model = PointerModel::simple(vec![1.0 / 3.0; 3]).unwrap();
        let p = DMatrix::from_row_slice(2, 3, &[0.5, 0.5 + 0.8e-9, 0.5 + 1.6e-9, 0.5, 0.5 - 0.8e-9, 0.5 - 1.6e-9]);
        let m = MeasurementMethod::from_probabilities("a", names(2), p, None, &model).unwrap();
        assert!(matches!(compute_sectors(&[m], 3, 1e-9), Err(MeasurementError::SectorAmbiguity { .. })));
    }

    #[test]
    fn rho0_diagonal_must_match_q0() {
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]);
        let err = PointerModel::new(names(2), vec![0.0; 2], vec![0.4, 0.6], Some(rho), 1.0);
        assert!(matches!(err, Err(MeasurementError::DiagonalMismatch { index: 0, .. })));
    }
}
