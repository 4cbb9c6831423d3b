//! Discrete-time pair-interaction dynamics and the equilibrium stopping rule.
//!
//! One iteration is one attempted pair interaction, including rejected
//! collisions of the biased dynamics.

use std::f64::consts::TAU;

use rand::Rng;
use thiserror::Error;

use crate::torus::{
    half_angle_offset, pair_midpoint, wrap_finite, BiasModel, Midpoint, NoiseModel, Phase,
    TorusError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("at least two particles are required, got {0}")]
    TooFewParticles(usize),
    #[error("state has {state} particles but the configuration expects {config}")]
    SizeMismatch { state: usize, config: usize },
    #[error("biased dynamics requires a bias model")]
    MissingBias,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DynamicsKind {
    UnbiasedBdg,
    BiasedBdg,
    Cl,
}

impl DynamicsKind {
    pub fn name(self) -> &'static str {
        match self {
            DynamicsKind::UnbiasedBdg => "bdg",
            DynamicsKind::BiasedBdg => "biased_bdg",
            DynamicsKind::Cl => "cl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bdg" | "unbiased_bdg" => Some(DynamicsKind::UnbiasedBdg),
            "biased_bdg" | "bbdg" => Some(DynamicsKind::BiasedBdg),
            "cl" => Some(DynamicsKind::Cl),
            _ => None,
        }
    }
}

/// Phases of all particles plus the number of iterations performed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    phases: Vec<Phase>,
    iteration: u64,
}

impl EnsembleState {
    pub fn new(phases: Vec<Phase>) -> Result<Self, SimError> {
        if phases.len() < 2 {
            return Err(SimError::TooFewParticles(phases.len()));
        }
        Ok(Self {
            phases,
            iteration: 0,
        })
    }

    /// I.i.d. uniform phases.
    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, SimError> {
        Self::new(
            (0..n)
                .map(|_| wrap_finite(rng.random::<f64>() * TAU))
                .collect(),
        )
    }

    pub fn from_radians(values: &[f64]) -> Result<Self, SimError> {
        let phases = values
            .iter()
            .map(|&x| Phase::new(x))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(phases)
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn observables(&self) -> MacroObservables {
        macro_observables(&self.phases)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub kind: DynamicsKind,
    pub n_particles: usize,
    pub noise: NoiseModel,
    pub bias: Option<BiasModel>,
    pub equil_tolerance: f64,
    pub kappa_factor: f64,
    pub lambda_min: f64,
    pub max_iterations: u64,
}

impl DynamicsConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-3;
    pub const DEFAULT_KAPPA_FACTOR: f64 = 1.2;
    pub const DEFAULT_LAMBDA: f64 = 3.0;
    pub const DEFAULT_MAX_ITER_PER_PARTICLE: u64 = 5_000;

    /// Defaults for the stopping rule, with `σ = 2πγ/√N`.
    pub fn new(kind: DynamicsKind, n_particles: usize, gamma: f64) -> Result<Self, SimError> {
        if n_particles < 2 {
            return Err(SimError::TooFewParticles(n_particles));
        }
        Ok(Self {
            kind,
            n_particles,
            noise: NoiseModel::new(gamma, n_particles)?,
            bias: None,
            equil_tolerance: Self::DEFAULT_TOLERANCE,
            kappa_factor: Self::DEFAULT_KAPPA_FACTOR,
            lambda_min: Self::DEFAULT_LAMBDA,
            max_iterations: Self::DEFAULT_MAX_ITER_PER_PARTICLE * n_particles as u64,
        })
    }

    pub fn with_bias(mut self, gamma_prime: f64) -> Result<Self, SimError> {
        self.bias = Some(BiasModel::new(gamma_prime, self.n_particles)?);
        Ok(self)
    }

    /// Lag between the two compared observable values.
    pub fn kappa(&self) -> u64 {
        ((self.kappa_factor * self.n_particles as f64).round() as u64).max(1)
    }

    /// The stopping rule never fires before this many iterations.
    pub fn min_iterations(&self) -> u64 {
        (self.lambda_min * self.n_particles as f64).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_particles < 2 {
            return Err(SimError::TooFewParticles(self.n_particles));
        }
        if self.kind == DynamicsKind::BiasedBdg && self.bias.is_none() {
            return Err(SimError::MissingBias);
        }
        if self.equil_tolerance.is_nan() || self.equil_tolerance <= 0.0 {
            return Err(SimError::InvalidConfig(format!(
                "equil_tolerance must be positive, got {}",
                self.equil_tolerance
            )));
        }
        if !(self.kappa_factor.is_finite() && self.kappa_factor > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "kappa_factor must be positive, got {}",
                self.kappa_factor
            )));
        }
        if !(self.lambda_min.is_finite() && self.lambda_min >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "lambda_min must be non-negative, got {}",
                self.lambda_min
            )));
        }
        Ok(())
    }
}

/// Mean velocity, its direction and the order parameter `α = |v̄|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroObservables {
    pub mean_velocity: (f64, f64),
    /// `None` when `|v̄| < 1e-12`.
    pub mean_direction: Option<Phase>,
    pub order_parameter: f64,
}

pub fn macro_observables(phases: &[Phase]) -> MacroObservables {
    let (c, s) = crate::torus::circular_mean(phases.iter().copied());
    observables_from_mean(c, s)
}

fn observables_from_mean(c: f64, s: f64) -> MacroObservables {
    let norm = c.hypot(s);
    MacroObservables {
        mean_velocity: (c, s),
        mean_direction: (norm >= 1e-12).then(|| wrap_finite(s.atan2(c))),
        order_parameter: c * c + s * s,
    }
}

/// Uniform unordered pair, returned as `(i, j)` with `i < j`.
#[inline]
pub fn sample_unordered_pair<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<(usize, usize), SimError> {
    let (i, j) = sample_ordered_pair(n, rng)?;
    Ok(if i < j { (i, j) } else { (j, i) })
}

/// Uniform ordered pair with `i ≠ j`.
#[inline]
pub fn sample_ordered_pair<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<(usize, usize), SimError> {
    if n < 2 {
        return Err(SimError::TooFewParticles(n));
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    Ok((i, j))
}

/// What one iteration did to the state. Old phases are kept so callers can
/// update running sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// One particle moved (CL).
    Followed { index: usize, old: Phase },
    /// Both particles of the pair moved (BDG).
    Collided {
        pair: (usize, usize),
        old: (Phase, Phase),
    },
    /// Biased collision rejected.
    Rejected,
    /// Antipodal pair, no midpoint: identity update.
    Degenerate,
}

impl StepOutcome {
    pub fn changed(&self) -> usize {
        match self {
            StepOutcome::Followed { .. } => 1,
            StepOutcome::Collided { .. } => 2,
            StepOutcome::Rejected | StepOutcome::Degenerate => 0,
        }
    }
}

/// Moves both members of a pair to their midpoint rotated by independent
/// noise draws.
#[inline]
pub fn bdg_collide(
    state: &mut EnsembleState,
    i: usize,
    j: usize,
    wi: Phase,
    wj: Phase,
) -> StepOutcome {
    let (a, b) = (state.phases[i], state.phases[j]);
    let out = match pair_midpoint(a, b) {
        Midpoint::Direction(mid) => {
            state.phases[i] = mid.rotate(wi.radians());
            state.phases[j] = mid.rotate(wj.radians());
            StepOutcome::Collided {
                pair: (i, j),
                old: (a, b),
            }
        }
        Midpoint::Degenerate => StepOutcome::Degenerate,
    };
    state.iteration += 1;
    out
}

/// Follower `i` takes the leader's phase rotated by `w`; the leader is untouched.
#[inline]
pub fn cl_follow(state: &mut EnsembleState, i: usize, j: usize, w: Phase) -> StepOutcome {
    let old = state.phases[i];
    state.phases[i] = state.phases[j].rotate(w.radians());
    state.iteration += 1;
    StepOutcome::Followed { index: i, old }
}

pub fn bdg_step<R: Rng + ?Sized>(
    state: &mut EnsembleState,
    noise: &NoiseModel,
    rng: &mut R,
) -> StepOutcome {
    let (i, j) = sample_unordered_pair(state.len(), rng).expect("state has at least two particles");
    let wi = noise.sample(rng);
    let wj = noise.sample(rng);
    bdg_collide(state, i, j, wi, wj)
}

/// BDG step preceded by an acceptance test on the half-angle offset.
pub fn biased_bdg_step<R: Rng + ?Sized>(
    state: &mut EnsembleState,
    noise: &NoiseModel,
    bias: &BiasModel,
    rng: &mut R,
) -> StepOutcome {
    let (i, j) = sample_unordered_pair(state.len(), rng).expect("state has at least two particles");
    let u: f64 = rng.random();
    let offset = match half_angle_offset(state.phases[i], state.phases[j]) {
        Ok(off) => off,
        Err(_) => {
            state.iteration += 1;
            return StepOutcome::Degenerate;
        }
    };
    if u >= bias.acceptance(offset) {
        state.iteration += 1;
        return StepOutcome::Rejected;
    }
    let wi = noise.sample(rng);
    let wj = noise.sample(rng);
    bdg_collide(state, i, j, wi, wj)
}

pub fn cl_step<R: Rng + ?Sized>(
    state: &mut EnsembleState,
    noise: &NoiseModel,
    rng: &mut R,
) -> StepOutcome {
    let (i, j) = sample_ordered_pair(state.len(), rng).expect("state has at least two particles");
    let w = noise.sample(rng);
    cl_follow(state, i, j, w)
}

/// One iteration of the configured dynamics.
#[inline]
pub fn step<R: Rng + ?Sized>(
    state: &mut EnsembleState,
    cfg: &DynamicsConfig,
    rng: &mut R,
) -> StepOutcome {
    match cfg.kind {
        DynamicsKind::UnbiasedBdg => bdg_step(state, &cfg.noise, rng),
        DynamicsKind::BiasedBdg => {
            let bias = cfg
                .bias
                .as_ref()
                .expect("validated configuration carries a bias");
            biased_bdg_step(state, &cfg.noise, bias, rng)
        }
        DynamicsKind::Cl => cl_step(state, &cfg.noise, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    pub iterations: u64,
    pub stop_reason: StopReason,
    pub final_order_parameter: f64,
    pub accepted: u64,
}

/// Keeps `Σ cos θ`, `Σ sin θ` up to date in O(1) per step.
struct MeanTracker {
    sum_c: f64,
    sum_s: f64,
    n: f64,
}

impl MeanTracker {
    fn new(phases: &[Phase]) -> Self {
        let mut t = Self {
            sum_c: 0.0,
            sum_s: 0.0,
            n: phases.len() as f64,
        };
        t.resync(phases);
        t
    }

    fn resync(&mut self, phases: &[Phase]) {
        let (mut c, mut s) = (0.0, 0.0);
        for p in phases {
            let (pc, ps) = p.unit();
            c += pc;
            s += ps;
        }
        self.sum_c = c;
        self.sum_s = s;
    }

    #[inline]
    fn replace(&mut self, old: Phase, new: Phase) {
        let (oc, os) = old.unit();
        let (nc, ns) = new.unit();
        self.sum_c += nc - oc;
        self.sum_s += ns - os;
    }

    #[inline]
    fn apply(&mut self, outcome: &StepOutcome, phases: &[Phase]) {
        match *outcome {
            StepOutcome::Followed { index, old } => self.replace(old, phases[index]),
            StepOutcome::Collided {
                pair: (i, j),
                old: (a, b),
            } => {
                self.replace(a, phases[i]);
                self.replace(b, phases[j]);
            }
            StepOutcome::Rejected | StepOutcome::Degenerate => {}
        }
    }

    #[inline]
    fn order_parameter(&self) -> f64 {
        let (c, s) = (self.sum_c / self.n, self.sum_s / self.n);
        c * c + s * s
    }
}

/// `|α_now - α_then| < ε |α_then|`, falling back to an absolute test when
/// `|α_then| < ε`.
#[inline]
pub fn equilibrium_test(then: f64, now: f64, eps: f64) -> bool {
    let diff = (now - then).abs();
    if then.abs() < eps {
        diff < eps
    } else {
        diff < eps * then.abs()
    }
}

/// Iterates until the order parameter is stationary over a lag of κ
/// iterations, and never before `ceil(λN)` iterations.
pub fn run_to_equilibrium<R: Rng + ?Sized>(
    cfg: &DynamicsConfig,
    mut state: EnsembleState,
    rng: &mut R,
) -> Result<(EnsembleState, RunDiagnostics), SimError> {
    cfg.validate()?;
    if state.len() != cfg.n_particles {
        return Err(SimError::SizeMismatch {
            state: state.len(),
            config: cfg.n_particles,
        });
    }
    let kappa = cfg.kappa() as usize;
    let n_min = cfg.min_iterations();
    let resync_every = 64 * cfg.n_particles as u64;

    let mut tracker = MeanTracker::new(&state.phases);
    // history[n % κ] holds α after n iterations of this run
    let mut history = vec![0.0f64; kappa];
    history[0] = tracker.order_parameter();
    let mut accepted = 0u64;
    let mut n = 0u64;
    let stop_reason = loop {
        if n >= cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        let outcome = step(&mut state, cfg, rng);
        if outcome.changed() > 0 {
            accepted += 1;
        }
        tracker.apply(&outcome, &state.phases);
        n += 1;
        if n.is_multiple_of(resync_every) {
            tracker.resync(&state.phases);
        }
        let alpha = tracker.order_parameter();
        let slot = (n % kappa as u64) as usize;
        let then = history[slot];
        history[slot] = alpha;
        if n >= n_min && n >= kappa as u64 && equilibrium_test(then, alpha, cfg.equil_tolerance) {
            break StopReason::Converged;
        }
    };
    tracker.resync(&state.phases);
    let diagnostics = RunDiagnostics {
        iterations: n,
        stop_reason,
        final_order_parameter: tracker.order_parameter(),
        accepted,
    };
    Ok((state, diagnostics))
}
