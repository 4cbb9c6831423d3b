//! Solvers for the large-N kinetic equations: the first two levels of the CL
//! hierarchy, the BDG limit-hierarchy operator and the BDG nonlinear
//! diffusion closure.

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::grid::{fft_nd, frequency, index_of_frequency, GridError, GridField};
use crate::oracle::{pair_source, zero_sum_tuples, CorrelationParams, FourierMarginal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("backwards diffusion: sigma {sigma} < tau {tau}; the closure is ill-posed")]
    BackwardsDiffusion { sigma: f64, tau: f64 },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Cfl { dt: f64, bound: f64 },
    #[error("expected a {expected}-dimensional field, got {got}")]
    Dims { expected: usize, got: usize },
    #[error("level k = {0} unsupported (k + 1 <= 3)")]
    Level(usize),
}

/// Limit noise scale `σ`, limit bias scale `τ` (BDG only), step and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeParams {
    pub sigma: f64,
    pub tau: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl PdeParams {
    pub fn new(sigma: f64, tau: f64, dt: f64, t_end: f64) -> Result<Self, HierarchyError> {
        let p = Self {
            sigma,
            tau,
            dt,
            t_end,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), HierarchyError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(HierarchyError::Param(format!("sigma = {}", self.sigma)));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(HierarchyError::Param(format!("tau = {}", self.tau)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(HierarchyError::Param(format!("dt = {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(HierarchyError::Param(format!("t_end = {}", self.t_end)));
        }
        Ok(())
    }

    fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

fn expect_dims(f: &GridField, d: usize) -> Result<(), HierarchyError> {
    if f.dims() != d {
        return Err(HierarchyError::Dims {
            expected: d,
            got: f.dims(),
        });
    }
    Ok(())
}

/// Heat flow `∂F₁/∂t = (σ²/2) ∂²F₁` propagated exactly, mode by mode.
pub fn cl_f1_solve(f0: &GridField, p: &PdeParams) -> Result<GridField, HierarchyError> {
    expect_dims(f0, 1)?;
    p.validate()?;
    let n = f0.n_points();
    let mut s = f0.spectrum();
    let half_s2 = 0.5 * p.sigma * p.sigma;
    for (k, c) in s.iter_mut().enumerate() {
        let m = frequency(k, n) as f64;
        *c *= (-half_s2 * m * m * p.t_end).exp();
    }
    Ok(GridField::from_spectrum(1, n, s)?)
}

/// Pair level of the CL hierarchy,
/// `∂F₂/∂t = (F₁(θ₁) + F₁(θ₂)) δ(θ₁ - θ₂) - 2F₂ + (σ²/2) ΔF₂`,
/// held in Fourier space. The delta source has coefficient `2F̂₁(n₁+n₂)` at
/// mode `(n₁, n₂)`, and every step is the exact solution of the per-mode
/// linear ODE.
#[derive(Debug, Clone)]
pub struct ClPairSolver {
    n: usize,
    sigma: f64,
    time: f64,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
}

impl ClPairSolver {
    pub fn new(f1: &GridField, f2: &GridField, sigma: f64) -> Result<Self, HierarchyError> {
        expect_dims(f1, 1)?;
        expect_dims(f2, 2)?;
        if f1.n_points() != f2.n_points() {
            return Err(GridError::Mismatch(format!(
                "{} vs {} points",
                f1.n_points(),
                f2.n_points()
            ))
            .into());
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(HierarchyError::Param(format!("sigma = {sigma}")));
        }
        Ok(Self {
            n: f2.n_points(),
            sigma,
            time: 0.0,
            f1: f1.spectrum(),
            f2: f2.spectrum(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn pair_spectrum(&self) -> &[Complex64] {
        &self.f2
    }

    pub fn advance(&mut self, dt: f64) {
        let n = self.n;
        let h = 0.5 * self.sigma * self.sigma;
        let f1_now = self.f1.clone();
        for a in 0..n {
            let n1 = frequency(a, n);
            for b in 0..n {
                let n2 = frequency(b, n);
                let lambda = 2.0 + h * (n1 * n1 + n2 * n2) as f64;
                let c = &mut self.f2[a * n + b];
                let source = match index_of_frequency(n1 + n2, n) {
                    Some(m) => 2.0 * f1_now[m],
                    None => Complex64::new(0.0, 0.0),
                };
                let decay = (-lambda * dt).exp();
                if source == Complex64::new(0.0, 0.0) {
                    *c *= decay;
                    continue;
                }
                let s = (n1 + n2) as f64;
                let mu = h * s * s;
                let d = lambda - mu;
                if d.abs() >= 1.0 {
                    // particular solution 2a(t)/(λ-μ) plus a decaying remainder
                    let cp_now = source / d;
                    let cp_next = cp_now * (-mu * dt).exp();
                    *c = cp_next + (*c - cp_now) * decay;
                } else {
                    let phi = if d == 0.0 {
                        dt
                    } else {
                        -(-d * dt).exp_m1() / d
                    };
                    *c = *c * decay + source * ((-mu * dt).exp() * phi);
                }
            }
        }
        for (k, c) in self.f1.iter_mut().enumerate() {
            let m = frequency(k, n) as f64;
            *c *= (-h * m * m * dt).exp();
        }
        self.time += dt;
    }

    pub fn pair_grid(&self) -> GridField {
        GridField::from_spectrum(2, self.n, self.f2.clone()).expect("square grid")
    }

    pub fn single_grid(&self) -> GridField {
        GridField::from_spectrum(1, self.n, self.f1.clone()).expect("grid")
    }
}

/// Integrates the pair level from `f20` over `[0, t_end]`, with `F₁`
/// started from `f1_0` and evolved by the heat flow.
pub fn cl_f2_solve(
    f1_0: &GridField,
    f20: &GridField,
    p: &PdeParams,
) -> Result<GridField, HierarchyError> {
    p.validate()?;
    let mut solver = ClPairSolver::new(f1_0, f20, p.sigma)?;
    let (steps, dt) = p.steps();
    for _ in 0..steps {
        solver.advance(dt);
    }
    Ok(solver.pair_grid())
}

/// Stationary pair field of the limit hierarchy with `F₁ ≡ 1`, truncated to
/// the modes an `n`-point grid resolves: `Σ_{|m|<n/2} M̂(m) cos(m(θ₁ - θ₂))`.
pub fn stationary_pair_field(p: &CorrelationParams, n: usize) -> Result<GridField, HierarchyError> {
    let mut s = vec![Complex64::new(0.0, 0.0); n * n];
    for a in 0..n {
        let m = frequency(a, n);
        if let Some(b) = index_of_frequency(-m, n) {
            if index_of_frequency(m, n).is_some() {
                s[a * n + b] = Complex64::new(crate::oracle::m_fourier(m, p), 0.0);
            }
        }
    }
    Ok(GridField::from_spectrum(2, n, s)?)
}

/// Result of one nonlinear diffusion step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionStep {
    pub field: GridField,
    /// Set when `σ = τ`: the leading-order evolution vanishes and the step is
    /// the identity.
    pub degenerate: bool,
}

/// `Δθ² / (4 D max F)` with `D = 2(σ² - τ²)`.
pub fn bdg_stable_dt(f: &GridField, p: &PdeParams) -> f64 {
    let d = 2.0 * (p.sigma * p.sigma - p.tau * p.tau);
    let fmax = f.values().iter().copied().fold(0.0, f64::max);
    let h = f.spacing();
    if d <= 0.0 || fmax <= 0.0 {
        return f64::INFINITY;
    }
    h * h / (4.0 * d * fmax)
}

/// One explicit conservative step of `∂F/∂t = 2(σ² - τ²) ∂θ(F ∂θF)`, written
/// as `D ∂θ²(F²/2)` with central differences.
pub fn bdg_nonlinear_diffusion_step(
    f: &GridField,
    p: &PdeParams,
) -> Result<DiffusionStep, HierarchyError> {
    expect_dims(f, 1)?;
    p.validate()?;
    if p.sigma < p.tau {
        return Err(HierarchyError::BackwardsDiffusion {
            sigma: p.sigma,
            tau: p.tau,
        });
    }
    if p.sigma == p.tau {
        return Ok(DiffusionStep {
            field: f.clone(),
            degenerate: true,
        });
    }
    let bound = bdg_stable_dt(f, p);
    if p.dt > bound {
        return Err(HierarchyError::Cfl { dt: p.dt, bound });
    }
    let d = 2.0 * (p.sigma * p.sigma - p.tau * p.tau);
    let h = f.spacing();
    let r = d * p.dt / (h * h);
    let v = f.values();
    let n = v.len();
    let u: Vec<f64> = v.iter().map(|x| 0.5 * x * x).collect();
    // fluxes through the right face of each cell, so the update telescopes
    let flux: Vec<f64> = (0..n).map(|i| u[(i + 1) % n] - u[i]).collect();
    let out: Vec<f64> = (0..n)
        .map(|i| v[i] + r * (flux[i] - flux[(i + n - 1) % n]))
        .collect();
    Ok(DiffusionStep {
        field: GridField::new(1, f.n_points(), out)?,
        degenerate: false,
    })
}

/// `∫ F² dθ` on the grid.
pub fn discrete_energy(f: &GridField) -> f64 {
    f.values().iter().map(|x| x * x).sum::<f64>() * f.spacing()
}

/// Right-hand side of level `k` of the BDG limit hierarchy:
/// `(σ² - τ²) Σ_{i≤k} [(∂ᵢ + ∂_{k+1})² F_{k+1}](θ₁, …, θ_k, θᵢ)`.
pub fn bdg_hierarchy_rhs(
    f_kplus1: &GridField,
    p: &PdeParams,
    k: usize,
) -> Result<GridField, HierarchyError> {
    if k == 0 || k + 1 > 3 {
        return Err(HierarchyError::Level(k));
    }
    expect_dims(f_kplus1, k + 1)?;
    let n = f_kplus1.n_points();
    let d = k + 1;
    let coeffs = f_kplus1.spectrum();
    let mut out = vec![0.0; n.pow(k as u32)];
    let mut idx = vec![0usize; d];
    for i in 0..k {
        let mut work = coeffs.clone();
        for (flat, c) in work.iter_mut().enumerate() {
            unflatten(flat, n, &mut idx);
            let s = (frequency(idx[i], n) + frequency(idx[k], n)) as f64;
            *c *= -s * s;
        }
        fft_nd(&mut work, n, d, true);
        for (flat, o) in out.iter_mut().enumerate() {
            unflatten(flat, n, &mut idx[..k]);
            idx[k] = idx[i];
            *o += work[flatten(&idx, n)].re;
        }
    }
    let scale = p.sigma * p.sigma - p.tau * p.tau;
    for o in &mut out {
        *o *= scale;
    }
    Ok(GridField::new(k, n, out)?)
}

fn unflatten(mut flat: usize, n: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % n;
        flat /= n;
    }
}

fn flatten(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Stationary residual of level `k` of the CL limit hierarchy at tuple `n`:
/// `Σ_{i<j}[F̂_{k-1}(merge at j) + F̂_{k-1}(merge at i) - 2F̂_k(n)] - (σ²/2)Σnᵢ² F̂_k(n)`.
pub fn cl_residual_at(
    fm_k: &FourierMarginal,
    fm_km1: &FourierMarginal,
    p: &CorrelationParams,
    n: &[i32],
) -> f64 {
    let k = n.len();
    let c = fm_k.get(n);
    let src = pair_source(fm_km1, n);
    let sq: f64 = n.iter().map(|&x| (x as i64 * x as i64) as f64).sum();
    src - (k * (k - 1)) as f64 * c - 0.5 * p.sigma() * p.sigma() * sq * c
}

/// Residual at every zero-sum tuple with `max |nᵢ| ≤ n_max - 1`.
pub fn cl_hierarchy_residuals(
    fm_k: &FourierMarginal,
    fm_km1: &FourierMarginal,
    p: &CorrelationParams,
) -> Vec<(Vec<i32>, f64)> {
    let m = fm_k.n_max() - 1;
    zero_sum_tuples(fm_k.k(), m.max(0))
        .into_iter()
        .map(|n| {
            let r = cl_residual_at(fm_k, fm_km1, p, &n);
            (n, r)
        })
        .collect()
}

/// `max |residual|` over the interior of the truncation box.
pub fn cl_hierarchy_residual_fourier(
    fm_k: &FourierMarginal,
    fm_km1: &FourierMarginal,
    p: &CorrelationParams,
) -> f64 {
    cl_hierarchy_residuals(fm_k, fm_km1, p)
        .into_iter()
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max)
}

/// The factorized candidate `F̂_k = δ(n₁)…δ(n_k)`, i.e. `F_k ≡ 1`.
pub fn chaotic_ansatz(k: usize, n_max: i32) -> FourierMarginal {
    FourierMarginal::delta(k, n_max.max(1)).expect("n_max >= 1")
}
