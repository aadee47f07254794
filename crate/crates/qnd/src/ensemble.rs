//! Parallel ensembles. Item k always draws from stream k of the master seed and results
//! are returned in index order, so output does not depend on the worker count.

use qnd_core::continuous::{simulate_path, ContinuousError, ContinuousModel, PathConfig, PathResult};
use qnd_core::discrete::{run_trajectory, DiscreteScenario, RunConfig, SimError, TrajectoryResult};
use qnd_core::protocol::MethodSelector;
use qnd_core::rng::trajectory_rng;
use rayon::prelude::*;

/// Runs `f(0..count)` on `workers` threads (0: all cores). The first error by index wins.
pub fn run_indexed<T, E, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
    let results: Vec<Result<T, E>> = pool.install(|| (0..count).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// Discrete trajectories `0..count` under `selector`.
pub fn discrete_ensemble(
    scenario: &DiscreteScenario,
    selector: &(dyn MethodSelector + Sync),
    config: &RunConfig,
    seed: u64,
    count: usize,
    workers: usize,
) -> Result<Vec<TrajectoryResult>, SimError> {
    run_indexed(workers, count, |k| {
        let mut rng = trajectory_rng(seed, k as u64);
        run_trajectory(scenario, selector, config, &mut rng)
    })
}

/// Continuous paths `0..count`.
pub fn continuous_ensemble(
    model: &ContinuousModel,
    config: &PathConfig,
    seed: u64,
    count: usize,
    workers: usize,
) -> Result<Vec<PathResult>, ContinuousError> {
    run_indexed(workers, count, |k| {
        let mut rng = trajectory_rng(seed, k as u64);
        simulate_path(model, config, &mut rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use qnd_core::scenarios::bernoulli_pair;

    #[test]
    fn worker_count_does_not_change_results() {
        let s = bernoulli_pair(vec![0.5, 0.5]).unwrap();
        let cfg = RunConfig { max_steps: 200, ..RunConfig::default() };
        let a = discrete_ensemble(&s, s.policy(), &cfg, 9, 32, 1).unwrap();
        let b = discrete_ensemble(&s, s.policy(), &cfg, 9, 32, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_by_index() {
        let r: Result<Vec<usize>, usize> = run_indexed(3, 10, |k| if k % 4 == 3 { Err(k) } else { Ok(k) });
        assert_eq!(r, Err(3));
    }
}
