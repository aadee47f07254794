//! Small dense linear algebra, probability vectors and density matrices.

use crate::prelude::*;
use crate::C64;
use nalgebra::DMatrix;

/// Dense complex matrix.
pub type CMatrix = DMatrix<C64>;

/// Absolute tolerance for probability normalization.
pub const PROB_TOL: f64 = 1e-12;
/// Structural tolerance for density matrices.
pub const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty probability vector")]
    Empty,
    #[error("weight {index} is {value}, expected finite and nonnegative")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("trace {trace} is too small to renormalize")]
    DegenerateTrace { trace: f64 },
    #[error("trace {trace} is further than 0.5 from 1")]
    TraceOutOfRange { trace: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) is {value}, expected a probability")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("chain has {} closed classes {classes:?}; the stationary distribution is not unique", classes.len())]
    MultipleClasses { classes: Vec<Vec<usize>> },
    #[error("stationary residual {residual} exceeds tolerance")]
    Residual { residual: f64 },
    #[error("not a density matrix: hermiticity defect {}, trace defect {}, min eigenvalue {}", .0.hermiticity_defect, .0.trace_defect, .0.min_eigenvalue)]
    InvalidDensity(DensityDiagnostics),
    #[error("singular linear system")]
    Singular,
}

/// Probability distribution over a finite index set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegativity and normalization within [`PROB_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self, LinalgError> {
        Self::check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(LinalgError::NotNormalized { sum });
        }
        Ok(Self(weights))
    }

    /// Scales nonnegative weights with a positive sum onto the simplex.
    pub fn normalize(mut weights: Vec<f64>) -> Result<Self, LinalgError> {
        Self::check_entries(&weights)?;
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(LinalgError::NotNormalized { sum });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs at least one entry");
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass on `index`.
    pub fn delta(n: usize, index: usize) -> Self {
        assert!(index < n, "delta index out of range");
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Self(w)
    }

    fn check_entries(weights: &[f64]) -> Result<(), LinalgError> {
        if weights.is_empty() {
            return Err(LinalgError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(LinalgError::InvalidWeight { index, value });
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest weight (first one on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Sum of absolute differences.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl core::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Natural log of Σ exp(x), robust to large magnitudes and `-inf` entries.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized probabilities from unnormalized log-weights.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    let mut out: Vec<f64> = log_weights.iter().map(|&l| (l - lse).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Structural checks of a candidate density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDiagnostics {
    /// max |A − A†| entrywise.
    pub hermiticity_defect: f64,
    /// |Tr A − 1|.
    pub trace_defect: f64,
    /// Smallest eigenvalue of the Hermitian part.
    pub min_eigenvalue: f64,
    pub passed: bool,
}

pub fn validate_density(a: &CMatrix) -> Result<DensityDiagnostics, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let adj = a.adjoint();
    let hermiticity_defect = (a - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let trace = a.trace();
    let trace_defect = (trace - C64::new(1.0, 0.0)).norm();
    let min_eigenvalue = hermitian_min_eigenvalue(a);
    let passed = hermiticity_defect <= DENSITY_TOL && trace_defect <= DENSITY_TOL && min_eigenvalue >= -DENSITY_TOL;
    Ok(DensityDiagnostics { hermiticity_defect, trace_defect, min_eigenvalue, passed })
}

/// Smallest eigenvalue of (A + A†)/2.
pub fn hermitian_min_eigenvalue(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// (A + A†)/2 divided by its trace.
pub fn hermitize_and_renormalize(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let trace = a.trace().re;
    if trace.abs() < 1e-6 {
        return Err(LinalgError::DegenerateTrace { trace });
    }
    if (trace - 1.0).abs() > 0.5 {
        return Err(LinalgError::TraceOutOfRange { trace });
    }
    let mut h = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        h[(i, i)] = C64::new(a[(i, i)].re / trace, 0.0);
        for j in (i + 1)..cols {
            let v = (a[(i, j)] + a[(j, i)].conj()) * (0.5 / trace);
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    Ok(h)
}

/// Validated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(a: CMatrix) -> Result<Self, LinalgError> {
        let diag = validate_density(&a)?;
        if !diag.passed {
            return Err(LinalgError::InvalidDensity(diag));
        }
        Ok(Self(a))
    }

    /// Diagonal (classical) state with populations `q`.
    pub fn from_diagonal(q: &ProbVector) -> Self {
        let d = q.len();
        Self(CMatrix::from_fn(d, d, |i, j| if i == j { C64::new(q[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    /// |ψ⟩⟨ψ| for a unit vector ψ.
    pub fn pure(psi: &[C64]) -> Result<Self, LinalgError> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > DENSITY_TOL {
            return Err(LinalgError::NotNormalized { sum: norm });
        }
        let d = psi.len();
        Ok(Self(CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }
}

/// Maximum entrywise modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Checks that every row is a probability vector.
pub fn check_stochastic(k: &DMatrix<f64>) -> Result<(), LinalgError> {
    let (rows, cols) = k.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    for r in 0..rows {
        for c in 0..cols {
            let v = k[(r, c)];
            if !v.is_finite() || v < 0.0 {
                return Err(LinalgError::InvalidEntry { row: r, col: c, value: v });
            }
        }
        let sum: f64 = k.row(r).iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(LinalgError::NotStochastic { row: r, sum });
        }
    }
    Ok(())
}

/// Communicating-class structure of a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStructure {
    /// Closed communicating classes, each sorted, ordered by smallest member.
    pub closed_classes: Vec<Vec<usize>>,
    /// States outside every closed class.
    pub transient: Vec<usize>,
    pub irreducible: bool,
    /// Period of the chain when irreducible.
    pub period: Option<usize>,
}

/// Reachability closure on the support graph plus a BFS period computation.
pub fn chain_structure(k: &DMatrix<f64>) -> ChainStructure {
    let d = k.nrows();
    let mut reach = vec![vec![false; d]; d];
    for i in 0..d {
        reach[i][i] = true;
        for j in 0..d {
            if k[(i, j)] > 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for m in 0..d {
        for i in 0..d {
            if reach[i][m] {
                for j in 0..d {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut assigned = vec![false; d];
    let mut closed_classes = Vec::new();
    let mut transient = Vec::new();
    for i in 0..d {
        if assigned[i] {
            continue;
        }
        let class: Vec<usize> = (0..d).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            assigned[j] = true;
        }
        let closed = class.iter().all(|&a| (0..d).all(|b| !reach[a][b] || class.contains(&b)));
        if closed {
            closed_classes.push(class);
        } else {
            transient.extend(class);
        }
    }
    transient.sort_unstable();
    let irreducible = closed_classes.len() == 1 && transient.is_empty();
    let period = if irreducible { Some(period_of(k)) } else { None };
    ChainStructure { closed_classes, transient, irreducible, period }
}

fn period_of(k: &DMatrix<f64>) -> usize {
    let d = k.nrows();
    let mut level = vec![usize::MAX; d];
    level[0] = 0;
    let mut queue = alloc::collections::VecDeque::new();
    queue.push_back(0);
    while let Some(u) = queue.pop_front() {
        for v in 0..d {
            if k[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for u in 0..d {
        for v in 0..d {
            if k[(u, v)] > 0.0 {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Unique π with πK = π.
///
/// Power iteration first; periodic or slowly mixing chains fall back to a direct solve
/// of (Kᵀ − I)π = 0 with one equation replaced by Σπ = 1. Transient states are allowed
/// and receive zero mass. More than one closed class is an error.
pub fn stationary_distribution(k: &DMatrix<f64>) -> Result<ProbVector, LinalgError> {
    check_stochastic(k)?;
    let d = k.nrows();
    let structure = chain_structure(k);
    if structure.closed_classes.len() > 1 {
        return Err(LinalgError::MultipleClasses { classes: structure.closed_classes });
    }
    let mut pi = vec![1.0 / d as f64; d];
    let mut converged = false;
    if structure.period.unwrap_or(1) == 1 {
        for _ in 0..10_000 {
            let next = left_multiply(&pi, k);
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta <= 1e-15 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        pi = solve_stationary(k)?;
    }
    for v in &mut pi {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let pi = ProbVector::normalize(pi)?;
    let residual: f64 = left_multiply(pi.as_slice(), k).iter().zip(pi.as_slice()).map(|(a, b)| (a - b).abs()).sum();
    if residual > PROB_TOL {
        return Err(LinalgError::Residual { residual });
    }
    Ok(pi)
}

fn left_multiply(pi: &[f64], k: &DMatrix<f64>) -> Vec<f64> {
    let d = k.nrows();
    (0..d).map(|j| (0..d).map(|i| pi[i] * k[(i, j)]).sum()).collect()
}

fn solve_stationary(k: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    let d = k.nrows();
    let mut a = k.transpose() - DMatrix::<f64>::identity(d, d);
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(d);
    b[d - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(LinalgError::Singular)?;
    Ok(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn real_diag(v: &[f64]) -> CMatrix {
        CMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { C64::new(v[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    #[test]
    fn maximally_mixed_state_passes() {
        let d = validate_density(&real_diag(&[1.0 / 3.0; 3])).unwrap();
        assert!(d.passed);
        assert_abs_diff_eq!(d.trace_defect, 0.0, epsilon = 1e-15);
        assert!(validate_density(&real_diag(&[0.5, 0.5])).unwrap().passed);
    }

    #[test]
    fn overweight_diagonal_fails_on_trace() {
        let d = validate_density(&real_diag(&[0.6, 0.6])).unwrap();
        assert!(!d.passed);
        assert_abs_diff_eq!(d.trace_defect, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn non_square_is_rejected() {
        let a = CMatrix::zeros(2, 3);
        assert!(matches!(validate_density(&a), Err(LinalgError::NotSquare { .. })));
    }

    #[test]
    fn negative_eigenvalue_is_detected() {
        let mut a = real_diag(&[0.5, 0.5]);
        a[(0, 1)] = C64::new(0.8, 0.0);
        a[(1, 0)] = C64::new(0.8, 0.0);
        let d = validate_density(&a).unwrap();
        assert_abs_diff_eq!(d.min_eigenvalue, -0.3, epsilon = 1e-12);
        assert!(!d.passed);
    }

    #[test]
    fn renormalize_examples() {
        let out = hermitize_and_renormalize(&real_diag(&[0.6, 0.6])).unwrap();
        assert_abs_diff_eq!(out[(0, 0)].re, 0.5, epsilon = 1e-15);
        let rho = DensityMatrix::pure(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let same = hermitize_and_renormalize(rho.matrix()).unwrap();
        assert!(max_abs(&(same - rho.matrix())) <= 1e-15);
        let mut perturbed = rho.matrix().clone();
        for i in 0..2 {
            perturbed[(i, i)] += C64::new(0.0, 1e-8);
        }
        let h = hermitize_and_renormalize(&perturbed).unwrap();
        assert!(max_abs(&(&h - h.adjoint())) == 0.0);
        assert!(matches!(hermitize_and_renormalize(&real_diag(&[1e-7, 0.0])), Err(LinalgError::DegenerateTrace { .. })));
    }

    #[test]
    fn stationary_examples() {
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let pi = stationary_distribution(&k).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
        let k = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let pi = stationary_distribution(&k).unwrap();
        assert_abs_diff_eq!(pi[0], 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 1.0 / 6.0, epsilon = 1e-12);
        let k = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2]);
        let pi = stationary_distribution(&k).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(pi[i], 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn periodic_chain_uses_direct_solve() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = chain_structure(&k);
        assert_eq!(s.period, Some(2));
        let pi = stationary_distribution(&k).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn transient_states_get_no_mass() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let s = chain_structure(&k);
        assert!(!s.irreducible);
        assert_eq!(s.transient, vec![1]);
        let pi = stationary_distribution(&k).unwrap();
        assert_eq!(pi.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn two_closed_classes_are_rejected() {
        let k = DMatrix::<f64>::identity(2, 2);
        match stationary_distribution(&k) {
            Err(LinalgError::MultipleClasses { classes }) => assert_eq!(classes, vec![vec![0], vec![1]]),
            other => panic!("unexpected {other:?}"),
        }
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(matches!(stationary_distribution(&bad), Err(LinalgError::NotStochastic { row: 0, .. })));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.2, 0.8]).is_ok());
        assert!(matches!(ProbVector::new(vec![0.2, 0.9]), Err(LinalgError::NotNormalized { .. })));
        assert!(matches!(ProbVector::new(vec![-0.1, 1.1]), Err(LinalgError::InvalidWeight { index: 0, .. })));
        let p = ProbVector::normalize(vec![1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn log_space_helpers() {
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
        let q = softmax(&[-1000.0, -1000.0 + 3f64.ln(), f64::NEG_INFINITY]);
        assert_abs_diff_eq!(q[1], 0.75, epsilon = 1e-13);
        assert_eq!(q[2], 0.0);
    }
}
