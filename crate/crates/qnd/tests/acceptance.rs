//! Acceptance suite: fourteen criteria, one PASS/FAIL line each.
//!
//! Runs with `cargo test --test acceptance`; exits non-zero when any criterion fails.

use nalgebra::DMatrix;
use qnd::ensemble::{discrete_ensemble, run_indexed};
use qnd_core::analysis::{collapse_statistics, ensemble_decay_rate, median, RateTable};
use qnd_core::continuous::{
    closed_form_error, sample_noise, scaling_limit_check, ContinuousMethod, ContinuousModel, Law, Moment, NoiseIncrement, PathConfig,
    PathState, ScalingConfig, ScalingModel,
};
use qnd_core::discrete::{enumerate_chain, DiscreteScenario, RunConfig, Truth};
use qnd_core::linalg::{argmax, max_abs, CMatrix, ProbVector};
use qnd_core::rng::trajectory_rng;
use qnd_core::scenarios::{
    bernoulli_pair, continuous_demo, rate_tuning_example, three_state_scenario, toy_model, toy_model_mixed, toy_model_paired,
    two_sector_continuous, zero_probability_scenario, TOY_EPS_DT,
};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

const SEED: u64 = 20_240_611;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn toy() -> DiscreteScenario {
    toy_model(8, PI / 3.0, TOY_EPS_DT).unwrap()
}

fn paired() -> DiscreteScenario {
    toy_model_paired(8, PI / 3.0, PI / 6.0, TOY_EPS_DT).unwrap()
}

fn c1_martingale() -> Verdict {
    let scenarios =
        [bernoulli_pair(vec![0.3, 0.7]).unwrap(), rate_tuning_example(1e-3, 0.5).unwrap().with_q0(vec![0.2, 0.3, 0.5]).unwrap()];
    let mut worst: f64 = 0.0;
    for s in &scenarios {
        let tree = enumerate_chain(s, s.policy(), 6).unwrap();
        for n in 0..=6 {
            for a in 0..s.dim() {
                let mean = tree.expectation(n, |leaf| leaf.q[a]);
                worst = worst.max((mean - s.model().q0()[a]).abs());
            }
        }
    }
    verdict(worst <= 1e-12, format!("max |E[Q_n(α)] − q0(α)| = {worst:.3e} over n ≤ 6 (limit 1e-12)"))
}

fn c2_collapse_law() -> Verdict {
    let q0 = vec![0.2, 0.3, 0.5];
    let s = three_state_scenario(q0.clone()).unwrap();
    let results = discrete_ensemble(&s, s.policy(), &RunConfig::default(), SEED, 10_000, 0).unwrap();
    let limits: Vec<usize> = results.iter().map(|r| r.report.limit_sector).collect();
    let stats = collapse_statistics(&limits, &q0, 0.99).unwrap();
    let rows: Vec<String> = stats.rows.iter().map(|r| format!("{:.4} in [{:.4}, {:.4}]", r.frequency, r.low, r.high)).collect();
    let converged = results.iter().all(|r| r.report.converged);
    verdict(stats.passed && converged, format!("frequencies {}; all converged: {converged}", rows.join(", ")))
}

fn c3_degenerate_limit() -> Verdict {
    let s = toy();
    let results = discrete_ensemble(&s, s.policy(), &RunConfig::default(), SEED + 3, 10_000, 0).unwrap();
    let limits: Vec<usize> = results.iter().map(|r| r.report.limit_sector).collect();
    let stats = collapse_statistics(&limits, &[0.25; 4], 0.99).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..4 {
        let hits: Vec<_> = results.iter().filter(|r| r.report.limit_sector == j).collect();
        for &a in s.sectors().members(j) {
            let mean = hits.iter().map(|r| r.report.final_q[a]).sum::<f64>() / hits.len() as f64;
            worst = worst.max((mean - 0.5).abs());
        }
    }
    let freqs: Vec<String> = stats.rows.iter().map(|r| format!("{:.4}", r.frequency)).collect();
    verdict(
        stats.passed && worst <= 0.02,
        format!(
            "sector frequencies {} (99% interval [{:.4}, {:.4}]); max |mean Q(α) − ½| = {worst:.2e}",
            freqs.join(", "),
            stats.rows[0].low,
            stats.rows[0].high
        ),
    )
}

fn c4_rates() -> Verdict {
    let s = toy();
    let single = RateTable::compute(s.methods(), s.policy(), 8).unwrap().mean[(0, 3)];
    let p = paired();
    let table = RateTable::compute(p.methods(), p.policy(), 8).unwrap();
    let (s03, s13) = (table.mean[(0, 3)], table.mean[(1, 3)]);
    let m = toy_model_mixed(8, PI / 3.0, PI / 6.0, TOY_EPS_DT).unwrap();
    let mixed = RateTable::compute(m.methods(), m.policy(), 8).unwrap();
    let pass = (0.115..=0.117).contains(&single) && (1.16..=1.20).contains(&s03) && (1.08..=1.12).contains(&s13);
    verdict(
        pass,
        format!(
            "S(0|3) = {single:.5}; paired angles S̄(0|3) = {s03:.5}, S̄(1|3) = {s13:.5}; per-step ½/½ mixture S̄(0|3) = {:.5}, S̄(1|3) = {:.5}",
            mixed.mean[(0, 3)],
            mixed.mean[(1, 3)]
        ),
    )
}

fn localization_median(s: &DiscreteScenario, seed: u64) -> f64 {
    let cfg = RunConfig { truth: Truth::Pinned(0), localization_level: 0.99, stop_threshold: Some(1e-3), ..RunConfig::default() };
    let results = discrete_ensemble(s, s.policy(), &cfg, seed, 1000, 0).unwrap();
    let steps: Vec<f64> = results.iter().map(|r| r.report.localization_step.expect("localized") as f64).collect();
    median(&steps).unwrap()
}

fn c5_confidence_steps() -> Verdict {
    let s = toy();
    let est_single = RateTable::compute(s.methods(), s.policy(), 8).unwrap().confidence_steps(0, 0.99, s.sectors()).unwrap();
    let p = paired();
    let est_paired = RateTable::compute(p.methods(), p.policy(), 8).unwrap().confidence_steps(0, 0.99, p.sectors()).unwrap();
    let med_single = localization_median(&s, SEED + 5);
    let med_paired = localization_median(&p, SEED + 6);
    let pass = (35..=55).contains(&est_single)
        && (4..=6).contains(&est_paired)
        && (35.0..=55.0).contains(&med_single)
        && (4.0..=6.0).contains(&med_paired);
    verdict(
        pass,
        format!("single angle: estimate {est_single}, empirical median {med_single}; paired angles: estimate {est_paired}, empirical median {med_paired}"),
    )
}

fn c6_decay_slope() -> Verdict {
    let s = bernoulli_pair(vec![0.5, 0.5]).unwrap();
    let rates = RateTable::compute(s.methods(), s.policy(), 2).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for limit in 0..2 {
        let alpha = 1 - limit;
        let cfg = RunConfig {
            max_steps: 500,
            stop_threshold: None,
            log_space: Some(true),
            truth: Truth::Pinned(limit),
            keep_history: true,
            ..RunConfig::default()
        };
        let results = discrete_ensemble(&s, s.policy(), &cfg, SEED + 60 + limit as u64, 200, 0).unwrap();
        let histories: Vec<Vec<f64>> = results.iter().map(|r| r.log_q_history.iter().map(|l| l[alpha]).collect()).collect();
        let fit = ensemble_decay_rate(&histories, 1.0).unwrap();
        let direct = histories.iter().map(|h| -h[500] / 500.0).sum::<f64>() / histories.len() as f64;
        let expected = rates.mean[(limit, alpha)];
        let rel = (fit.slope - expected).abs() / expected;
        pass &= rel <= 0.05;
        parts.push(format!(
            "S̄({limit}|{alpha}) = {expected:.5}, fitted {:.5} ({:.2}%), −ln Q_500/500 = {direct:.5}",
            fit.slope,
            100.0 * rel
        ));
    }
    verdict(pass, parts.join("; "))
}

fn c7_trial_independence() -> Verdict {
    let s = bernoulli_pair(vec![0.2, 0.8]).unwrap();
    let cfg = RunConfig { trial_q0: Some(ProbVector::uniform(2)), ..RunConfig::default() };
    let results = discrete_ensemble(&s, s.policy(), &cfg, SEED + 7, 10_000, 0).unwrap();
    let agree = results.iter().filter(|r| r.report.final_qhat.argmax() == r.report.final_q.argmax()).count();
    let frac = agree as f64 / results.len() as f64;
    verdict(frac >= 0.99, format!("argmax Q̂ = argmax Q in {agree}/10000 = {:.4} (limit 0.99)", frac))
}

fn c8_zero_probability() -> Verdict {
    let s = zero_probability_scenario().unwrap();
    let m = &s.methods()[0];
    let cfg = RunConfig { record_every: 1, log_space: Some(true), keep_history: true, max_steps: 200, ..RunConfig::default() };
    let results = discrete_ensemble(&s, s.policy(), &cfg, SEED + 8, 1000, 0).unwrap();
    let mut violations = 0usize;
    let mut events = 0usize;
    for r in &results {
        for (k, o) in r.outcomes.iter().enumerate() {
            for a in 0..s.dim() {
                if m.probability(o.outcome, a) == 0.0 {
                    events += 1;
                    let later_log = r.log_q_history[k + 1..].iter().any(|l| l[a] != f64::NEG_INFINITY);
                    let later_q = r.records.iter().filter(|rec| rec.n > k).any(|rec| rec.q[a] != 0.0);
                    violations += usize::from(later_log || later_q);
                }
            }
        }
    }
    verdict(
        violations == 0 && events > 0,
        format!("{events} zero-probability observations over 1000 trajectories, {violations} later nonzero weights"),
    )
}

fn c9_noise_covariance() -> Verdict {
    let demo = ContinuousMethod::from_hamiltonians(
        "probe",
        vec!["1".into(), "2".into()],
        vec![qnd_core::C64::new(0.5f64.sqrt(), 0.0); 2],
        vec![qnd_core::scenarios::sigma2(1.0), qnd_core::scenarios::sigma2(-1.0)],
        None,
    )
    .unwrap();
    let gamma = DMatrix::from_row_slice(3, 2, &[0.75, -0.75, -0.5, 0.5, -0.5, 0.5]);
    let three = ContinuousMethod::from_gamma("three", vec!["a".into(), "b".into(), "c".into()], vec![0.4, 0.3, 0.3], gamma).unwrap();
    let model =
        ContinuousModel::new(vec!["0".into(), "1".into()], vec![0.0; 2], vec![0.5; 2], None, vec![demo, three], vec![0.45, 0.55]).unwrap();
    let n_ch = model.num_channels();
    let dt = 1e-3;
    let total = 1_000_000usize;
    let chunks = 100;
    let partial = run_indexed(0, chunks, |k| -> Result<(Vec<f64>, Vec<f64>, f64), ()> {
        let mut rng = trajectory_rng(SEED + 9, k as u64);
        let mut sum = vec![0.0; n_ch];
        let mut prod = vec![0.0; n_ch * n_ch];
        let mut row_sum: f64 = 0.0;
        for _ in 0..total / chunks {
            let dx = sample_noise(&model, dt, &mut rng);
            let v = dx.values();
            row_sum = row_sum.max(v.iter().sum::<f64>().abs());
            for e in 0..n_ch {
                sum[e] += v[e];
                for f in 0..n_ch {
                    prod[e * n_ch + f] += v[e] * v[f];
                }
            }
        }
        Ok((sum, prod, row_sum))
    })
    .unwrap();
    let mut sum = vec![0.0; n_ch];
    let mut prod = vec![0.0; n_ch * n_ch];
    let mut row_sum: f64 = 0.0;
    for (s, p, r) in partial {
        sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        prod.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        row_sum = row_sum.max(r);
    }
    let n = total as f64;
    let expected = model.noise_covariance() * dt;
    let mut worst: f64 = 0.0;
    for e in 0..n_ch {
        for f in 0..n_ch {
            let cov = prod[e * n_ch + f] / n - sum[e] * sum[f] / (n * n);
            worst = worst.max((cov - expected[(e, f)]).abs() / expected[(e, f)].abs());
        }
    }
    verdict(
        worst <= 0.01 && row_sum <= 1e-12,
        format!("{n_ch} channels, 10^6 increments: max relative covariance error {:.3}%, max |row sum| {row_sum:.1e}", 100.0 * worst),
    )
}

fn c10_sde_vs_closed_form() -> Verdict {
    let model = continuous_demo(&[1.0, -1.0], vec![0.5, 0.5]).unwrap();
    let fine_dt = 5e-4;
    let steps = 10_000;
    let errors = run_indexed(0, 20, |k| {
        let mut rng = trajectory_rng(SEED + 10, k as u64);
        let fine: Vec<NoiseIncrement> = (0..steps).map(|_| sample_noise(&model, fine_dt, &mut rng)).collect();
        let coarse: Vec<NoiseIncrement> = fine.chunks(2).map(|p| p[0].combine(&p[1])).collect();
        Ok::<_, qnd_core::continuous::ContinuousError>((
            closed_form_error(&model, &coarse, 2.0 * fine_dt)?,
            closed_form_error(&model, &fine, fine_dt)?,
        ))
    })
    .unwrap();
    let max_err = errors.iter().map(|e| e.0).fold(0.0, f64::max);
    let ratios: Vec<f64> = errors.iter().map(|(c, f)| c / f).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let passing = ratios.iter().filter(|&&r| r >= 1.8).count();
    let mean_ratio = errors.iter().map(|e| e.0).sum::<f64>() / errors.iter().map(|e| e.1).sum::<f64>();
    verdict(
        max_err <= 5e-2 && min_ratio >= 1.8,
        format!(
            "max error at Δt = 1e-3: {max_err:.2e}; per-path contraction min {min_ratio:.2}, median {:.2}, {passing}/20 paths ≥ 1.8; mean-error contraction {mean_ratio:.2}",
            median(&ratios).unwrap()
        ),
    )
}

fn c11_continuous_rate() -> Verdict {
    let model = continuous_demo(&[1.0, -1.0], vec![0.5, 0.5]).unwrap();
    let cfg = PathConfig { dt: 1e-3, t_max: 5.0, ..PathConfig::default() };
    let results = qnd::ensemble::continuous_ensemble(&model, &cfg, SEED + 11, 200, 0).unwrap();
    let histories: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            let loser = 1 - argmax(&r.final_state.q);
            r.log_q.iter().map(|l| l[loser]).collect()
        })
        .collect();
    let fit = ensemble_decay_rate(&histories, cfg.dt).unwrap();
    let expected = 1.0 / model.characteristic_time(0, 1);
    let rel = (fit.slope - expected).abs() / expected;
    verdict(rel <= 0.10, format!("fitted rate {:.4} ± {:.4}, 1/τ = {expected}, deviation {:.2}%", fit.slope, fit.stderr, 100.0 * rel))
}

fn c12_belavkin_consistency() -> Verdict {
    let model = two_sector_continuous().unwrap();
    let cfg = PathConfig { dt: 1e-3, t_max: 5.0, track_density: true, ..PathConfig::default() };
    let results = qnd::ensemble::continuous_ensemble(&model, &cfg, SEED + 12, 20, 0).unwrap();
    let gap = results.iter().map(|r| r.final_state.max_diagonal_gap).fold(0.0, f64::max);
    let drift = results.iter().map(|r| r.final_state.max_trace_drift).fold(0.0, f64::max);
    let steps = cfg.steps() as f64;
    verdict(
        gap <= 1e-8 * steps && drift <= 1e-8,
        format!("max |diag ρ − Q| = {gap:.2e} (limit {:.0e}), max per-step trace drift {drift:.2e} (limit 1e-8)", 1e-8 * steps),
    )
}

fn c13_compensated_limit() -> Verdict {
    let model = two_sector_continuous().unwrap();
    let sectors = model.sectors(1e-9).unwrap();
    let rho0 = model.rho0().matrix().clone();
    let q0 = model.q0().as_slice().to_vec();
    let cfg = PathConfig { dt: 1e-3, t_max: 20.0, track_compensated: true, ..PathConfig::default() };
    let steps = cfg.steps();
    let norms = run_indexed(0, 1000, |k| {
        let mut rng = trajectory_rng(SEED + 13, k as u64);
        let mut state = PathState::new(&model, &cfg);
        for _ in 0..steps {
            let dx = sample_noise(&model, cfg.dt, &mut rng);
            state.advance(&model, cfg.dt, &dx)?;
        }
        let limit = sectors.sector_of(argmax(&state.q));
        let members = sectors.members(limit);
        let mass: f64 = members.iter().map(|&a| q0[a]).sum();
        let target = CMatrix::from_fn(3, 3, |a, b| {
            if members.contains(&a) && members.contains(&b) {
                rho0[(a, b)] / mass
            } else {
                qnd_core::C64::new(0.0, 0.0)
            }
        });
        let diff = state.rho_tilde.unwrap() - target;
        let row_norm = (0..3).map(|a| (0..3).map(|b| diff[(a, b)].norm()).sum::<f64>()).fold(0.0, f64::max);
        Ok::<_, qnd_core::continuous::ContinuousError>((row_norm, max_abs(&diff)))
    })
    .unwrap();
    let within = norms.iter().filter(|n| n.0 <= 0.05).count();
    let worst = norms.iter().map(|n| n.0).fold(0.0, f64::max);
    let worst_entry = norms.iter().map(|n| n.1).fold(0.0, f64::max);
    verdict(
        within >= 990,
        format!("{within}/1000 paths within 0.05 (row-sum norm); worst row-sum norm {worst:.2e}, worst entry {worst_entry:.2e}"),
    )
}

fn c14_scaling_limit() -> Verdict {
    let model = continuous_demo(&[1.0, -1.0], vec![0.5, 0.5]).unwrap();
    let deltas = vec![1e-1, 1e-2, 1e-3];
    let times = vec![0.5, 1.0];
    let config = ScalingConfig {
        deltas: deltas.clone(),
        times: times.clone(),
        samples: 100_000,
        laws: vec![Law::Pinned(0), Law::Pinned(1)],
        seed: SEED + 14,
    };
    let report = scaling_limit_check(&ScalingModel::from_model(&model), &config).unwrap();
    let mut monotone = true;
    let mut within_3sigma = true;
    let mut worst_sigma: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    let mut deviations = Vec::new();
    for law in [Law::Pinned(0), Law::Pinned(1)] {
        for &t in &times {
            for e in 0..model.num_channels() {
                let rows: Vec<_> = deltas.iter().map(|&d| report.find(d, law, t, Moment::Mean { channel: e }).unwrap()).collect();
                monotone &= rows.windows(2).all(|w| w[1].deviation() < w[0].deviation());
                let last = rows[2];
                worst_sigma = worst_sigma.max(last.deviation() / last.sigma);
                within_3sigma &= last.deviation() <= 3.0 * last.sigma;
                if e == 0 && t == 1.0 {
                    let devs: Vec<String> = rows.iter().map(|r| format!("{:.1e}", r.deviation())).collect();
                    deviations.push(format!("{law:?}: {}", devs.join(" > ")));
                }
            }
            for &s in times.iter().filter(|&&s| s <= t) {
                for e in 0..model.num_channels() {
                    for f in 0..model.num_channels() {
                        let r = report.find(1e-3, law, t, Moment::Covariance { channel: e, other: f, s }).unwrap();
                        worst_cov = worst_cov.max(r.deviation() / r.predicted.abs());
                    }
                }
            }
        }
    }
    verdict(
        monotone && within_3sigma && worst_cov <= 0.02,
        format!(
            "mean deviation monotone in δ: {monotone} ({}); at δ = 1e-3 worst {worst_sigma:.2}σ; worst covariance error {:.2}%",
            deviations.join("; "),
            100.0 * worst_cov
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 14] = [
        ("1 martingale exactness", Duration::from_secs(1), c1_martingale),
        ("2 collapse law", Duration::from_secs(30), c2_collapse_law),
        ("3 degenerate limit", Duration::from_secs(60), c3_degenerate_limit),
        ("4 rate values", Duration::from_secs(1), c4_rates),
        ("5 confidence steps", Duration::from_secs(60), c5_confidence_steps),
        ("6 empirical decay slope", Duration::from_secs(30), c6_decay_slope),
        ("7 trial-distribution independence", Duration::from_secs(30), c7_trial_independence),
        ("8 zero-probability invariant", Duration::from_secs(60), c8_zero_probability),
        ("9 noise covariance", Duration::from_secs(30), c9_noise_covariance),
        ("10 SDE vs closed form", Duration::from_secs(60), c10_sde_vs_closed_form),
        ("11 continuous rate", Duration::from_secs(60), c11_continuous_rate),
        ("12 Belavkin consistency", Duration::from_secs(60), c12_belavkin_consistency),
        ("13 compensated limit", Duration::from_secs(120), c13_compensated_limit),
        ("14 scaling limit", Duration::from_secs(120), c14_scaling_limit),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "{} criterion {name}: {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
