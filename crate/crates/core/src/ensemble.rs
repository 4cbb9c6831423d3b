//! Independent runs to equilibrium, sampled into one- and two-particle
//! histograms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::estimators::{Histogram1D, Histogram2D};
use crate::particle::{
    run_to_equilibrium, sample_unordered_pair, DynamicsConfig, EnsembleState, RunDiagnostics,
    SimError, StopReason,
};

/// Random stream for run `run_index`: a ChaCha8 key from the master seed and
/// the run index as stream id.
pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub n_runs: usize,
    pub converged: usize,
    pub hit_max_iterations: usize,
    pub mean_iterations: f64,
    pub max_iterations_seen: u64,
    pub mean_order_parameter: f64,
}

impl EnsembleSummary {
    fn from_runs(runs: &[RunDiagnostics]) -> Self {
        let n = runs.len();
        let hit = runs
            .iter()
            .filter(|r| r.stop_reason == StopReason::MaxIterations)
            .count();
        Self {
            n_runs: n,
            converged: n - hit,
            hit_max_iterations: hit,
            mean_iterations: runs.iter().map(|r| r.iterations as f64).sum::<f64>() / n as f64,
            max_iterations_seen: runs.iter().map(|r| r.iterations).max().unwrap_or(0),
            mean_order_parameter: runs.iter().map(|r| r.final_order_parameter).sum::<f64>()
                / n as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub one_particle: Histogram1D,
    pub two_particle: Histogram2D,
    pub runs: Vec<RunDiagnostics>,
    pub summary: EnsembleSummary,
}

struct RunSample {
    single: crate::torus::Phase,
    pair: (crate::torus::Phase, crate::torus::Phase),
    diag: RunDiagnostics,
}

fn one_run(cfg: &DynamicsConfig, master_seed: u64, run_index: u64) -> Result<RunSample, SimError> {
    let mut rng = run_rng(master_seed, run_index);
    let init = EnsembleState::uniform(cfg.n_particles, &mut rng)?;
    let (state, diag) = run_to_equilibrium(cfg, init, &mut rng)?;
    let k = rand::Rng::random_range(&mut rng, 0..state.len());
    let (i, j) = sample_unordered_pair(state.len(), &mut rng)?;
    let p = state.phases();
    Ok(RunSample {
        single: p[k],
        pair: (p[i], p[j]),
        diag,
    })
}

/// Runs `n_runs` independent simulations from uniform initial phases and
/// records one particle and one symmetrized pair from each final state.
/// Results depend only on `master_seed`, not on the thread count.
pub fn ensemble_marginals(
    cfg: &DynamicsConfig,
    n_runs: usize,
    master_seed: u64,
    n_bins: usize,
) -> Result<EnsembleResult, SimError> {
    cfg.validate()?;
    if n_runs == 0 {
        return Err(SimError::InvalidConfig("n_runs must be at least 1".into()));
    }
    let mut one = Histogram1D::new(n_bins).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut two = Histogram2D::new(n_bins).map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let samples: Vec<RunSample> = (0..n_runs as u64)
        .into_par_iter()
        .map(|r| one_run(cfg, master_seed, r))
        .collect::<Result<_, _>>()?;

    let mut runs = Vec::with_capacity(n_runs);
    for s in samples {
        one.accumulate(s.single);
        two.accumulate_symmetric(s.pair.0, s.pair.1);
        runs.push(s.diag);
    }
    one.finalize().expect("n_runs >= 1");
    two.finalize().expect("n_runs >= 1");
    let summary = EnsembleSummary::from_runs(&runs);
    Ok(EnsembleResult {
        one_particle: one,
        two_particle: two,
        runs,
        summary,
    })
}
