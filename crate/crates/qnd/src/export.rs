//! Conversion of built scenarios back into inline configuration documents.

use crate::config::{
    Complex, ComplexMatrix, ContinuousDoc, ContinuousMethodDoc, DiscreteDoc, MethodDoc, PointersDoc, PolicyDoc, ScenarioDoc,
};
use nalgebra::DMatrix;
use qnd_core::continuous::{ContinuousModel, ContinuousSource};
use qnd_core::discrete::DiscreteScenario;
use qnd_core::linalg::{CMatrix, DensityMatrix};
use qnd_core::measurement::MethodSource;
use qnd_core::protocol::ProtocolPolicy;
use qnd_core::scenarios::Scenario;
use qnd_core::C64;

fn complex(z: C64) -> Complex {
    [z.re, z.im]
}

fn complex_rows(m: &CMatrix) -> ComplexMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| complex(m[(i, j)])).collect()).collect()
}

fn real_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn is_diagonal_of(rho: &DensityMatrix, q0: &[f64]) -> bool {
    let m = rho.matrix();
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)] == if i == j { C64::new(q0[i], 0.0) } else { C64::new(0.0, 0.0) }))
}

fn pointers(labels: &[String], energies: &[f64], q0: &[f64], rho0: &DensityMatrix) -> PointersDoc {
    PointersDoc {
        labels: Some(labels.to_vec()),
        energies: Some(energies.to_vec()),
        q0: q0.to_vec(),
        rho0: (!is_diagonal_of(rho0, q0)).then(|| complex_rows(rho0.matrix())),
    }
}

fn policy(p: &ProtocolPolicy) -> PolicyDoc {
    match p {
        ProtocolPolicy::Random { weights } => PolicyDoc::Random { weights: weights.as_slice().to_vec() },
        ProtocolPolicy::MarkovFeedback { initial, kernel } => PolicyDoc::MarkovFeedback {
            initial: initial.as_slice().to_vec(),
            kernel: kernel.iter().map(|row| row.iter().map(|w| w.as_slice().to_vec()).collect()).collect(),
        },
        ProtocolPolicy::DeterministicFeedback { first, map } => PolicyDoc::DeterministicFeedback { first: *first, map: map.clone() },
    }
}

/// Inline document reproducing a discrete scenario.
pub fn discrete_doc(s: &DiscreteScenario) -> DiscreteDoc {
    let model = s.model();
    let methods = s
        .methods()
        .iter()
        .map(|m| {
            let mut doc = MethodDoc { id: m.id().into(), outcomes: m.outcomes().to_vec(), ..Default::default() };
            match m.source() {
                MethodSource::Unitary { probe, unitaries, basis } => {
                    doc.probe = Some(probe.iter().map(|&z| complex(z)).collect());
                    doc.unitaries = Some(unitaries.iter().map(complex_rows).collect());
                    doc.basis = Some(complex_rows(basis));
                }
                MethodSource::Amplitudes(a) => doc.amplitudes = Some(complex_rows(a)),
                MethodSource::Probabilities { probabilities, phases } => {
                    doc.probabilities = Some(real_rows(probabilities));
                    doc.phases = phases.as_ref().map(real_rows);
                }
            }
            doc
        })
        .collect();
    DiscreteDoc {
        name: s.name().into(),
        description: s.description().into(),
        pointers: pointers(model.labels(), model.energies(), model.q0().as_slice(), model.rho0()),
        dt: model.dt(),
        methods,
        policy: Some(policy(s.policy())),
        sector_tolerance: s.sectors().tolerance(),
    }
}

/// Inline document reproducing a continuous model.
pub fn continuous_doc(name: &str, description: &str, m: &ContinuousModel) -> ContinuousDoc {
    let methods = m
        .methods()
        .iter()
        .map(|method| {
            let mut doc = ContinuousMethodDoc { id: method.id().into(), outcomes: method.outcomes().to_vec(), ..Default::default() };
            match method.source() {
                ContinuousSource::Hamiltonian { probe, hamiltonians, basis } => {
                    doc.probe = Some(probe.iter().map(|&z| complex(z)).collect());
                    doc.hamiltonians = Some(hamiltonians.iter().map(complex_rows).collect());
                    doc.basis = Some(complex_rows(basis));
                }
                ContinuousSource::Gamma => {
                    doc.p0 = Some(method.p0().to_vec());
                    doc.gamma = Some(real_rows(method.gamma_table()));
                }
            }
            doc
        })
        .collect();
    ContinuousDoc {
        name: name.into(),
        description: description.into(),
        pointers: pointers(m.labels(), m.energies(), m.q0().as_slice(), m.rho0()),
        methods,
        method_weights: Some(m.method_weights().as_slice().to_vec()),
    }
}

/// Inline document for any scenario.
pub fn scenario_doc(s: &Scenario) -> ScenarioDoc {
    match s {
        Scenario::Discrete(d) => ScenarioDoc::Discrete(discrete_doc(d)),
        Scenario::Continuous { name, description, model } => ScenarioDoc::Continuous(continuous_doc(name, description, model)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build_scenario, ConfigDocument};
    use qnd_core::scenarios::{builtin, BUILTIN_NAMES};

    #[test]
    fn every_builtin_round_trips() {
        for name in BUILTIN_NAMES {
            let original = builtin(name).unwrap();
            let doc = ConfigDocument::with_scenario(scenario_doc(&original));
            let parsed = ConfigDocument::parse(&doc.to_json()).unwrap();
            assert_eq!(parsed, doc, "{name}");
            let rebuilt = build_scenario(&parsed.scenario).unwrap();
            assert_eq!(rebuilt, original, "{name}");
        }
    }
}
