//! Circular arithmetic and the periodized-Gaussian noise and bias laws.
//!
//! Every density in this crate is normalized against the probability measure
//! `dθ/(2π)`, so the uniform law on the circle has density identically 1.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Two unit vectors whose sum is shorter than this are treated as antipodal.
pub const ANTIPODAL_EPS: f64 = 1e-12;

/// Default number of series terms used by the density evaluators.
pub const DEFAULT_TRUNCATION: usize = 8;

const SERIES_REL_TOL: f64 = 1e-15;
const SERIES_MAX_TERMS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("angle is not finite: {0}")]
    NonFinite(f64),
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("noise intensity must be positive and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("at least two particles are required, got {0}")]
    TooFewParticles(usize),
    #[error("series truncation must be at least 1")]
    ZeroTruncation,
    #[error("antipodal phases have no midpoint")]
    Degenerate,
}

/// An angle in the canonical range `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
#[repr(transparent)]
pub struct Phase(f64);

impl Phase {
    pub const ZERO: Phase = Phase(0.0);

    /// Wraps any finite angle onto `[0, 2π)`.
    pub fn new(x: f64) -> Result<Self, TorusError> {
        wrap(x)
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    /// The unit vector `(cos θ, sin θ)`.
    #[inline]
    pub fn unit(self) -> (f64, f64) {
        let (s, c) = self.0.sin_cos();
        (c, s)
    }

    /// Representative of the angle in `[-π, π)`.
    #[inline]
    pub fn signed(self) -> f64 {
        if self.0 >= PI {
            self.0 - TAU
        } else {
            self.0
        }
    }

    /// Rotates by `delta` radians.
    #[inline]
    pub fn rotate(self, delta: f64) -> Phase {
        wrap_finite(self.0 + delta)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<Phase> for f64 {
    fn from(p: Phase) -> f64 {
        p.0
    }
}

/// `x mod 2π` in `[0, 2π)`.
pub fn wrap(x: f64) -> Result<Phase, TorusError> {
    if !x.is_finite() {
        return Err(TorusError::NonFinite(x));
    }
    Ok(wrap_finite(x))
}

#[inline]
pub(crate) fn wrap_finite(x: f64) -> Phase {
    let r = x.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly 2π
    Phase(if r >= TAU { 0.0 } else { r })
}

/// Result of combining two velocities into their normalized sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Midpoint {
    Direction(Phase),
    Degenerate,
}

impl Midpoint {
    pub fn phase(self) -> Option<Phase> {
        match self {
            Midpoint::Direction(p) => Some(p),
            Midpoint::Degenerate => None,
        }
    }
}

/// Phase of `e^{iθᵢ} + e^{iθⱼ}`, computed from the vector sum.
#[inline]
pub fn pair_midpoint(a: Phase, b: Phase) -> Midpoint {
    let (ca, sa) = a.unit();
    let (cb, sb) = b.unit();
    let (x, y) = (ca + cb, sa + sb);
    if x.hypot(y) < ANTIPODAL_EPS {
        Midpoint::Degenerate
    } else {
        Midpoint::Direction(wrap_finite(y.atan2(x)))
    }
}

/// Signed angle from the pair midpoint to `a`, in `(-π/2, π/2]`.
///
/// This is the phase of `v̂* vₐ`; swapping the arguments negates it (up to the
/// boundary value π/2, which is its own mirror image).
pub fn half_angle_offset(a: Phase, b: Phase) -> Result<f64, TorusError> {
    let mid = pair_midpoint(a, b).phase().ok_or(TorusError::Degenerate)?;
    let (cm, sm) = mid.unit();
    let (ca, sa) = a.unit();
    // v̂* vₐ = (cm - i sm)(ca + i sa)
    let re = cm * ca + sm * sa;
    let im = cm * sa - sm * ca;
    let mut off = im.atan2(re);
    if off <= -PI / 2.0 {
        off += PI;
    } else if off > PI / 2.0 {
        off -= PI;
    }
    Ok(off)
}

/// `Σ_k exp(-(x + kP)² / (2 s²))` over all integers `k`.
///
/// Uses the direct sum for narrow laws and the Poisson-dual cosine series for
/// wide ones; both are summed until the last term is below 1e-15 of the total.
pub(crate) fn periodized_gaussian_sum(x: f64, sd: f64, period: f64, min_terms: usize) -> f64 {
    let x = x - period * (x / period).round();
    if sd <= period / 2.0 {
        let two_var = 2.0 * sd * sd;
        let mut sum = (-x * x / two_var).exp();
        for k in 1..SERIES_MAX_TERMS {
            let kp = k as f64 * period;
            let t = (-(x + kp).powi(2) / two_var).exp() + (-(x - kp).powi(2) / two_var).exp();
            sum += t;
            if k >= min_terms && t <= SERIES_REL_TOL * sum {
                break;
            }
        }
        sum
    } else {
        let w = TAU / period;
        let damp = 0.5 * (sd * w).powi(2);
        let mut sum = 1.0;
        for m in 1..SERIES_MAX_TERMS {
            let mf = m as f64;
            let t = 2.0 * (-damp * mf * mf).exp() * (w * mf * x).cos();
            sum += t;
            if m >= min_terms && t.abs() <= SERIES_REL_TOL * sum.abs() {
                break;
            }
        }
        sum * sd * (TAU).sqrt() / period
    }
}

/// Wrapped-Gaussian noise law with width `σ = 2πγ/√N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    gamma: f64,
    n_particles: usize,
    sigma: f64,
    truncation_k: usize,
}

impl NoiseModel {
    pub fn new(gamma: f64, n_particles: usize) -> Result<Self, TorusError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(TorusError::InvalidIntensity(gamma));
        }
        if n_particles < 2 {
            return Err(TorusError::TooFewParticles(n_particles));
        }
        Ok(Self {
            gamma,
            n_particles,
            sigma: TAU * gamma / (n_particles as f64).sqrt(),
            truncation_k: DEFAULT_TRUNCATION,
        })
    }

    /// A law given directly by its width. `sigma = 0` is accepted and gives
    /// the deterministic (noiseless) sampler; its density is undefined.
    pub fn from_sigma(sigma: f64) -> Result<Self, TorusError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(TorusError::NonPositiveWidth(sigma));
        }
        Ok(Self {
            gamma: sigma / TAU,
            n_particles: 1,
            sigma,
            truncation_k: DEFAULT_TRUNCATION,
        })
    }

    pub fn with_truncation(mut self, k: usize) -> Result<Self, TorusError> {
        if k == 0 {
            return Err(TorusError::ZeroTruncation);
        }
        self.truncation_k = k;
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn truncation_k(&self) -> usize {
        self.truncation_k
    }

    /// True when the sampler is the point mass at 0.
    pub fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn density(&self, theta: f64) -> Result<f64, TorusError> {
        wrapped_gaussian_density(theta, self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Phase {
        sample_wrapped_gaussian(self, rng)
    }

    /// Fourier coefficient `∫ g(θ) e^{-inθ} dθ/(2π) = exp(-σ²n²/2)`.
    pub fn fourier(&self, n: i64) -> f64 {
        let nf = n as f64;
        (-0.5 * self.sigma * self.sigma * nf * nf).exp()
    }
}

/// `2π Σ_k φ_σ(θ + 2kπ)`, the periodized Gaussian as a density on `dθ/(2π)`.
pub fn wrapped_gaussian_density(theta: f64, model: &NoiseModel) -> Result<f64, TorusError> {
    if !theta.is_finite() {
        return Err(TorusError::NonFinite(theta));
    }
    let s = model.sigma;
    if s <= 0.0 {
        return Err(TorusError::NonPositiveWidth(s));
    }
    let norm = TAU / (s * TAU.sqrt());
    Ok(norm * periodized_gaussian_sum(theta, s, TAU, model.truncation_k))
}

/// Draws `wrap(z)` with `z ~ Normal(0, σ²)`.
#[inline]
pub fn sample_wrapped_gaussian<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> Phase {
    if model.sigma == 0.0 {
        return Phase::ZERO;
    }
    let z: f64 = rng.sample(StandardNormal);
    wrap_finite(model.sigma * z)
}

/// Acceptance law for the biased collision, `H(θ) = h(θ)/h(0)` where `h` is
/// the period-π periodized Gaussian of width `τ = 2πγ′/√N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasModel {
    gamma_prime: f64,
    n_particles: usize,
    tau: f64,
    peak: f64,
}

impl BiasModel {
    pub fn new(gamma_prime: f64, n_particles: usize) -> Result<Self, TorusError> {
        if !(gamma_prime.is_finite() && gamma_prime > 0.0) {
            return Err(TorusError::InvalidIntensity(gamma_prime));
        }
        if n_particles < 2 {
            return Err(TorusError::TooFewParticles(n_particles));
        }
        let tau = TAU * gamma_prime / (n_particles as f64).sqrt();
        let mut b = Self::from_tau(tau)?;
        b.gamma_prime = gamma_prime;
        b.n_particles = n_particles;
        Ok(b)
    }

    pub fn from_tau(tau: f64) -> Result<Self, TorusError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(TorusError::NonPositiveWidth(tau));
        }
        Ok(Self {
            gamma_prime: tau / TAU,
            n_particles: 1,
            tau,
            peak: periodized_gaussian_sum(0.0, tau, PI, DEFAULT_TRUNCATION),
        })
    }

    pub fn gamma_prime(&self) -> f64 {
        self.gamma_prime
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn acceptance(&self, offset: f64) -> f64 {
        acceptance_probability(offset, self)
    }
}

/// `H(offset)`, with `H(0) = 1` and `H` even.
#[inline]
pub fn acceptance_probability(offset: f64, bias: &BiasModel) -> f64 {
    let h = periodized_gaussian_sum(offset.abs(), bias.tau, PI, DEFAULT_TRUNCATION) / bias.peak;
    h.clamp(0.0, 1.0)
}

/// Mean resultant vector `(1/n) Σ (cos θ, sin θ)`.
pub fn circular_mean(phases: impl IntoIterator<Item = Phase>) -> (f64, f64) {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0usize);
    for p in phases {
        let (pc, ps) = p.unit();
        c += pc;
        s += ps;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (c / n as f64, s / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(0.0).unwrap().radians(), 0.0);
        assert_eq!(wrap(TAU).unwrap().radians(), 0.0);
        assert!(close(wrap(-PI / 2.0).unwrap().radians(), 1.5 * PI, 1e-15));
        assert!(wrap(f64::NAN).is_err());
        assert!(wrap(f64::INFINITY).is_err());
        assert_eq!(wrap(-1e-300).unwrap().radians(), 0.0);
    }

    #[test]
    fn midpoint_examples() {
        let p = |x: f64| wrap(x).unwrap();
        let m = pair_midpoint(p(0.0), p(PI / 2.0)).phase().unwrap();
        assert!(close(m.radians(), PI / 4.0, 1e-15));
        assert_eq!(pair_midpoint(p(0.0), p(PI)), Midpoint::Degenerate);
        // (1,0) + (0,-1) = (1,-1), phase -π/4
        let m = pair_midpoint(p(1.5 * PI), p(0.0)).phase().unwrap();
        assert!(close(m.radians(), 1.75 * PI, 1e-15));
    }

    #[test]
    fn half_angle_examples() {
        let p = |x: f64| wrap(x).unwrap();
        assert_eq!(half_angle_offset(p(PI / 4.0), p(PI / 4.0)).unwrap(), 0.0);
        let a = half_angle_offset(p(PI / 2.0), p(0.0)).unwrap();
        assert!(close(a, PI / 4.0, 1e-15));
        let b = half_angle_offset(p(0.0), p(PI / 2.0)).unwrap();
        assert!(close(b, -PI / 4.0, 1e-15));
        assert_eq!(
            half_angle_offset(p(0.0), p(PI)),
            Err(TorusError::Degenerate)
        );
    }

    #[test]
    fn density_oracle_at_zero() {
        // theta-function series at σ = π/10, summed to |k| = 50 at 40 digits
        let m = NoiseModel::from_sigma(PI / 10.0).unwrap();
        let d = m.density(0.0).unwrap();
        assert!(close(d, 7.978_845_608_028_654, 1e-12), "{d}");
    }

    #[test]
    fn density_normalized_and_even() {
        for &s in &[0.05, PI / 10.0, 1.0, 2.5, PI] {
            let m = NoiseModel::from_sigma(s).unwrap();
            let n = 4096;
            let mean: f64 = (0..n)
                .map(|i| m.density(TAU * i as f64 / n as f64).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!(close(mean, 1.0, 1e-10), "sigma {s}: {mean}");
            for &t in &[0.1, 1.0, 2.0, 3.0] {
                let a = m.density(t).unwrap();
                let b = m.density(TAU - t).unwrap();
                assert!(close(a, b, 1e-12 * a.max(1.0)));
            }
        }
    }

    #[test]
    fn density_rejects_zero_width() {
        let m = NoiseModel::from_sigma(0.0).unwrap();
        assert!(m.density(0.1).is_err());
        assert!(m.is_deterministic());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.sample(&mut rng), Phase::ZERO);
    }

    #[test]
    fn noise_sigma_scaling() {
        let m = NoiseModel::new(0.05, 1000).unwrap();
        assert_eq!(m.sigma(), TAU * 0.05 / 1000f64.sqrt());
        assert!(NoiseModel::new(0.0, 10).is_err());
        assert!(NoiseModel::new(0.1, 1).is_err());
    }

    #[test]
    fn acceptance_examples() {
        let b = BiasModel::from_tau(PI / 20.0).unwrap();
        assert_eq!(b.acceptance(0.0), 1.0);
        assert!(close(b.acceptance(PI / 20.0), (-0.5f64).exp(), 1e-6));
        for &x in &[0.01, 0.3, 1.0, PI / 2.0] {
            assert_eq!(b.acceptance(x), b.acceptance(-x));
        }
        // full periodized series, 40 digits
        let b = BiasModel::from_tau(PI / 16.0).unwrap();
        assert!(close(
            b.acceptance(PI / 8.0),
            0.135_335_283_236_612_7,
            1e-14
        ));
        let wide = BiasModel::from_tau(5.0).unwrap();
        assert!(wide.acceptance(PI / 2.0) > 0.99 && wide.acceptance(PI / 2.0) <= 1.0);
    }

    #[test]
    fn sampler_tail_bound_small_sigma() {
        let m = NoiseModel::from_sigma(1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let far = (0..100_000)
            .filter(|_| m.sample(&mut rng).signed().abs() > 6.0 * 1e-4)
            .count();
        assert_eq!(far, 0);
    }

    #[test]
    fn sampler_second_moment() {
        let s = PI / 10.0;
        let m = NoiseModel::from_sigma(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut c, mut sn, mut m2) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = m.sample(&mut rng).signed();
            c += x.cos();
            sn += x.sin();
            m2 += x * x;
        }
        let mean_dir = sn.atan2(c);
        assert!(mean_dir.abs() < 3.0 * s / (n as f64).sqrt());
        let m2 = m2 / n as f64;
        assert!((m2 / (s * s) - 1.0).abs() < 0.01, "{m2}");
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(x in -1e6f64..1e6) {
            let w = wrap(x).unwrap();
            prop_assert!(w.radians() >= 0.0 && w.radians() < TAU);
            prop_assert_eq!(wrap(w.radians()).unwrap(), w);
        }

        #[test]
        fn midpoint_is_normalized_sum(a in 0.0f64..TAU, b in 0.0f64..TAU) {
            let (pa, pb) = (wrap(a).unwrap(), wrap(b).unwrap());
            let (x, y) = (a.cos() + b.cos(), a.sin() + b.sin());
            let r = x.hypot(y);
            prop_assume!(r > 1e-6);
            let m = pair_midpoint(pa, pb).phase().unwrap();
            let m2 = pair_midpoint(pb, pa).phase().unwrap();
            prop_assert!((m.radians().cos() - x / r).abs() < 1e-12);
            prop_assert!((m.radians().sin() - y / r).abs() < 1e-12);
            prop_assert!((m2.radians().cos() - x / r).abs() < 1e-12);
            prop_assert!((m2.radians().sin() - y / r).abs() < 1e-12);
        }

        #[test]
        fn half_angle_is_in_right_half_plane(a in 0.0f64..TAU, b in 0.0f64..TAU) {
            let (pa, pb) = (wrap(a).unwrap(), wrap(b).unwrap());
            prop_assume!(pair_midpoint(pa, pb) != Midpoint::Degenerate);
            let off = half_angle_offset(pa, pb).unwrap();
            prop_assert!(off > -PI / 2.0 && off <= PI / 2.0);
            prop_assert!(off.cos() >= -1e-12);
            // v̂* vⱼ is the conjugate of v̂* vᵢ
            let other = half_angle_offset(pb, pa).unwrap();
            prop_assert!((off.sin() + other.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn re_of_midpoint_product_nonnegative_many_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1_000_000 {
            let a = wrap_finite(rng.random::<f64>() * TAU);
            let b = wrap_finite(rng.random::<f64>() * TAU);
            if let Ok(off) = half_angle_offset(a, b) {
                assert!(off.cos() >= 0.0);
            }
        }
    }
}
