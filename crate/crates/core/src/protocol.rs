//! Method-selection policies, reduced kernels and invariant measures.

use crate::linalg::{stationary_distribution, LinalgError, ProbVector};
use crate::measurement::MeasurementMethod;
use crate::prelude::*;
use nalgebra::DMatrix;
use rand::{Rng, RngCore};

/// One observed pair (o, i): method index and outcome index within that method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    pub method: usize,
    pub outcome: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("policy refers to method {method}, only {available} declared")]
    UnknownMethod { method: usize, available: usize },
    #[error("policy has no entry for outcome {outcome} of method {method}")]
    OutsideDomain { method: usize, outcome: usize },
    #[error("policy distribution {what}: {source}")]
    Distribution { what: String, source: LinalgError },
    #[error("no methods declared")]
    NoMethods,
    #[error("reduced chain for pointer {pointer}: {source}")]
    Chain { pointer: usize, source: LinalgError },
}

/// Time-independent method-selection rules.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolPolicy {
    /// Every method drawn independently from `weights`.
    Random { weights: ProbVector },
    /// First method from `initial`, then from `kernel[o][i]` after observing (o, i).
    MarkovFeedback { initial: ProbVector, kernel: Vec<Vec<ProbVector>> },
    /// First method `first`, then `map[o][i]` after observing (o, i).
    DeterministicFeedback { first: usize, map: Vec<Vec<usize>> },
}

/// Source of method choices for a trajectory.
///
/// [`ProtocolPolicy`] implements it. Custom implementations may depend on the step
/// index and the full history; analytics that need an invariant measure accept only
/// [`ProtocolPolicy`].
pub trait MethodSelector {
    /// Distribution of the first method.
    fn first_weights(&self) -> Vec<f64>;
    /// Distribution of method n+1 given the first n outcomes.
    fn next_weights(&self, history: &[Outcome]) -> Result<Vec<f64>, ProtocolError>;

    fn select_first(&self, rng: &mut dyn RngCore) -> usize {
        sample_index(&self.first_weights(), rng)
    }

    fn select_next(&self, history: &[Outcome], rng: &mut dyn RngCore) -> Result<usize, ProtocolError> {
        Ok(sample_index(&self.next_weights(history)?, rng))
    }
}

/// Inverse-CDF draw; a point mass consumes no randomness.
pub fn sample_index<R: RngCore + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if let Some(k) = weights.iter().position(|&w| w == 1.0) {
        return k;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

impl ProtocolPolicy {
    /// Random policy with uniform weights over `n` methods.
    pub fn uniform(n: usize) -> Self {
        Self::Random { weights: ProbVector::uniform(n) }
    }

    /// Always the same method.
    pub fn single(n: usize, method: usize) -> Self {
        Self::Random { weights: ProbVector::delta(n, method) }
    }

    /// Checks indices and table shapes against the declared methods.
    pub fn validate(&self, methods: &[MeasurementMethod]) -> Result<(), ProtocolError> {
        let n = methods.len();
        if n == 0 {
            return Err(ProtocolError::NoMethods);
        }
        let check_len = |what: &str, v: &ProbVector| {
            if v.len() == n {
                Ok(())
            } else {
                Err(ProtocolError::Distribution { what: what.into(), source: LinalgError::Dimension { expected: n, got: v.len() } })
            }
        };
        let check_domain = |rows: usize, cols: &dyn Fn(usize) -> usize| -> Result<(), ProtocolError> {
            if rows != n {
                return Err(ProtocolError::OutsideDomain { method: rows.min(n), outcome: 0 });
            }
            for (o, m) in methods.iter().enumerate() {
                if cols(o) != m.num_outcomes() {
                    return Err(ProtocolError::OutsideDomain { method: o, outcome: cols(o).min(m.num_outcomes()) });
                }
            }
            Ok(())
        };
        match self {
            Self::Random { weights } => check_len("weights", weights),
            Self::MarkovFeedback { initial, kernel } => {
                check_len("initial", initial)?;
                check_domain(kernel.len(), &|o| kernel[o].len())?;
                for (o, row) in kernel.iter().enumerate() {
                    for (i, v) in row.iter().enumerate() {
                        check_len(&alloc::format!("kernel[{o}][{i}]"), v)?;
                    }
                }
                Ok(())
            }
            Self::DeterministicFeedback { first, map } => {
                if *first >= n {
                    return Err(ProtocolError::UnknownMethod { method: *first, available: n });
                }
                check_domain(map.len(), &|o| map[o].len())?;
                for row in map {
                    for &target in row {
                        if target >= n {
                            return Err(ProtocolError::UnknownMethod { method: target, available: n });
                        }
                    }
                }
                Ok(())
            }
        }
    }

    pub fn first_method<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Self::Random { weights } => sample_index(weights.as_slice(), rng),
            Self::MarkovFeedback { initial, .. } => sample_index(initial.as_slice(), rng),
            Self::DeterministicFeedback { first, .. } => *first,
        }
    }

    pub fn next_method<R: RngCore + ?Sized>(&self, prev: Outcome, rng: &mut R) -> Result<usize, ProtocolError> {
        match self {
            Self::Random { weights } => Ok(sample_index(weights.as_slice(), rng)),
            Self::MarkovFeedback { kernel, .. } => Ok(sample_index(self.kernel_row(kernel, prev)?.as_slice(), rng)),
            Self::DeterministicFeedback { map, .. } => map
                .get(prev.method)
                .and_then(|row| row.get(prev.outcome))
                .copied()
                .ok_or(ProtocolError::OutsideDomain { method: prev.method, outcome: prev.outcome }),
        }
    }

    fn kernel_row<'a>(&self, kernel: &'a [Vec<ProbVector>], prev: Outcome) -> Result<&'a ProbVector, ProtocolError> {
        kernel
            .get(prev.method)
            .and_then(|row| row.get(prev.outcome))
            .ok_or(ProtocolError::OutsideDomain { method: prev.method, outcome: prev.outcome })
    }

    /// c(·|o,i) as a dense vector over methods.
    pub fn transition_weights(&self, prev: Outcome, n_methods: usize) -> Result<Vec<f64>, ProtocolError> {
        match self {
            Self::Random { weights } => Ok(weights.as_slice().to_vec()),
            Self::MarkovFeedback { kernel, .. } => Ok(self.kernel_row(kernel, prev)?.as_slice().to_vec()),
            Self::DeterministicFeedback { map, .. } => {
                let target = map
                    .get(prev.method)
                    .and_then(|row| row.get(prev.outcome))
                    .copied()
                    .ok_or(ProtocolError::OutsideDomain { method: prev.method, outcome: prev.outcome })?;
                Ok(ProbVector::delta(n_methods, target).into_vec())
            }
        }
    }

    /// Distribution of the first method as a dense vector.
    pub fn initial_weights(&self, n_methods: usize) -> Vec<f64> {
        match self {
            Self::Random { weights } => weights.as_slice().to_vec(),
            Self::MarkovFeedback { initial, .. } => initial.as_slice().to_vec(),
            Self::DeterministicFeedback { first, .. } => ProbVector::delta(n_methods, *first).into_vec(),
        }
    }

    fn n_methods(&self) -> usize {
        match self {
            Self::Random { weights } => weights.len(),
            Self::MarkovFeedback { initial, .. } => initial.len(),
            Self::DeterministicFeedback { map, .. } => map.len(),
        }
    }

    /// Probability d of choosing the recorded methods along `history` and then `next`.
    pub fn method_sequence_weight(&self, history: &[Outcome], next: usize) -> Result<f64, ProtocolError> {
        let n = self.n_methods();
        let mut w = 1.0;
        let mut expected = self.initial_weights(n);
        for step in history {
            w *= expected[step.method];
            expected = self.transition_weights(*step, n)?;
        }
        Ok(w * expected[next])
    }

    /// K_α^red(o; o') = Σ_i p^o(i|α) c(o'|o,i).
    pub fn reduced_kernel(&self, methods: &[MeasurementMethod], pointer: usize) -> Result<ReducedKernel, ProtocolError> {
        let n = methods.len();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for (o, m) in methods.iter().enumerate() {
            for i in 0..m.num_outcomes() {
                let p = m.probability(i, pointer);
                let row = self.transition_weights(Outcome { method: o, outcome: i }, n)?;
                for (target, &c) in row.iter().enumerate() {
                    k[(o, target)] += p * c;
                }
            }
        }
        Ok(ReducedKernel { pointer, matrix: k })
    }
}

impl MethodSelector for ProtocolPolicy {
    fn first_weights(&self) -> Vec<f64> {
        self.initial_weights(self.n_methods())
    }

    fn next_weights(&self, history: &[Outcome]) -> Result<Vec<f64>, ProtocolError> {
        match history.last() {
            Some(prev) => self.transition_weights(*prev, self.n_methods()),
            None => Ok(self.first_weights()),
        }
    }

    fn select_first(&self, rng: &mut dyn RngCore) -> usize {
        self.first_method(rng)
    }

    fn select_next(&self, history: &[Outcome], rng: &mut dyn RngCore) -> Result<usize, ProtocolError> {
        match history.last() {
            Some(prev) => self.next_method(*prev, rng),
            None => Ok(self.first_method(rng)),
        }
    }
}

/// Method-to-method transition matrix of the chain seen from pointer α.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedKernel {
    pub pointer: usize,
    pub matrix: DMatrix<f64>,
}

impl ReducedKernel {
    /// Stationary law μ_α^red of the reduced chain.
    pub fn invariant_measure(&self) -> Result<ProbVector, ProtocolError> {
        stationary_distribution(&self.matrix).map_err(|source| ProtocolError::Chain { pointer: self.pointer, source })
    }
}

/// μ_α(o,i) = p^o(i|α) μ_α^red(o), indexed `[o][i]`.
pub fn full_invariant_measure(methods: &[MeasurementMethod], reduced: &ProbVector, pointer: usize) -> Vec<Vec<f64>> {
    methods.iter().enumerate().map(|(o, m)| (0..m.num_outcomes()).map(|i| m.probability(i, pointer) * reduced[o]).collect()).collect()
}
