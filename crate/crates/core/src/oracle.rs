//! Closed-form equilibrium of the noisy-leader (CL) hierarchy in the large-N
//! limit: the pair correlation `M`, its Fourier coefficients and the
//! k-particle Fourier recursion.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use thiserror::Error;

use crate::torus::Phase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("noise scale must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("truncation n_max must be at least 1")]
    Truncation,
    #[error("recursion needs k >= 2, got {0}")]
    Order(usize),
    #[error("tuple {0:?} does not sum to zero")]
    Support(Vec<i32>),
    #[error("tuple length {got} does not match k = {k}")]
    Arity { k: usize, got: usize },
    #[error("grid mismatch: {0}")]
    Grid(String),
}

/// Limit noise scale `σ = 2πγ` and `σ̄ = σ/√2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationParams {
    sigma: f64,
    sigma_bar: f64,
}

impl CorrelationParams {
    pub fn new(sigma: f64) -> Result<Self, OracleError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(OracleError::Sigma(sigma));
        }
        Ok(Self {
            sigma,
            sigma_bar: sigma / 2f64.sqrt(),
        })
    }

    pub fn from_gamma(gamma: f64) -> Result<Self, OracleError> {
        Self::new(TAU * gamma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }

    /// `Σ_{|n|>n_max} M̂(n) ≤ 2/(σ̄² n_max)`.
    pub fn fourier_tail_bound(&self, n_max: u32) -> f64 {
        2.0 / (self.sigma_bar * self.sigma_bar * n_max as f64)
    }
}

/// `M(θ)` together with a flag raised when the exponentials underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MValue {
    pub value: f64,
    pub underflow: bool,
}

/// Pair correlation of mean 1 against `dθ/(2π)`:
/// `(π/σ̄)(e^{(θ-2π)/σ̄} + e^{-θ/σ̄}) / (1 - e^{-2π/σ̄})` for `θ ∈ [0, 2π)`.
pub fn m_density_flagged(theta: Phase, p: &CorrelationParams) -> MValue {
    let sb = p.sigma_bar;
    let t = theta.radians();
    let e = (-(TAU - t) / sb).exp() + (-t / sb).exp();
    let value = PI / sb * e / -(-TAU / sb).exp_m1();
    MValue {
        value,
        underflow: (-PI / sb).exp() == 0.0,
    }
}

pub fn m_density(theta: Phase, p: &CorrelationParams) -> f64 {
    m_density_flagged(theta, p).value
}

/// `M(θ)` for any real `θ`; NaN for non-finite input.
pub fn m_density_at(theta: f64, p: &CorrelationParams) -> f64 {
    match Phase::new(theta) {
        Ok(t) => m_density(t, p),
        Err(_) => f64::NAN,
    }
}

/// `M̂(n) = 1/(1 + σ̄²n²)`.
pub fn m_fourier(n: i64, p: &CorrelationParams) -> f64 {
    let x = p.sigma_bar * n as f64;
    1.0 / (1.0 + x * x)
}

/// `M(0) = (π/σ̄) coth(π/σ̄)`.
pub fn m_at_zero(p: &CorrelationParams) -> f64 {
    let x = PI / p.sigma_bar;
    x / x.tanh()
}

/// Fourier coefficients of a stationary k-particle marginal, on tuples with
/// `Σ nᵢ = 0` and `max |nᵢ| ≤ n_max`. Absent tuples are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMarginal {
    k: usize,
    n_max: i32,
    coefficients: BTreeMap<Vec<i32>, f64>,
}

impl FourierMarginal {
    /// `F̂₁(n) = δ(n)`: the uniform one-particle law.
    pub fn isotropic(n_max: i32) -> Result<Self, OracleError> {
        Self::delta(1, n_max)
    }

    /// Only the zero tuple, set to 1: the uniform k-particle law.
    pub fn delta(k: usize, n_max: i32) -> Result<Self, OracleError> {
        if n_max < 1 {
            return Err(OracleError::Truncation);
        }
        let mut coefficients = BTreeMap::new();
        coefficients.insert(vec![0; k], 1.0);
        Ok(Self {
            k,
            n_max,
            coefficients,
        })
    }

    pub fn from_coefficients(
        k: usize,
        n_max: i32,
        coefficients: BTreeMap<Vec<i32>, f64>,
    ) -> Result<Self, OracleError> {
        if n_max < 1 {
            return Err(OracleError::Truncation);
        }
        for key in coefficients.keys() {
            if key.len() != k {
                return Err(OracleError::Arity { k, got: key.len() });
            }
            if key.iter().map(|&n| n as i64).sum::<i64>() != 0 {
                return Err(OracleError::Support(key.clone()));
            }
        }
        Ok(Self {
            k,
            n_max,
            coefficients,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_max(&self) -> i32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i32], f64)> {
        self.coefficients.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Coefficient at `tuple`; zero off the stored support.
    pub fn get(&self, tuple: &[i32]) -> f64 {
        self.coefficients.get(tuple).copied().unwrap_or(0.0)
    }

    /// Synthesizes `Σ c(n) e^{i n·θ}` (real by the `n ↦ -n` symmetry).
    pub fn eval(&self, thetas: &[f64]) -> Result<f64, OracleError> {
        if thetas.len() != self.k {
            return Err(OracleError::Arity {
                k: self.k,
                got: thetas.len(),
            });
        }
        let mut acc = 0.0;
        for (n, c) in &self.coefficients {
            let phase: f64 = n.iter().zip(thetas).map(|(&ni, &t)| ni as f64 * t).sum();
            acc += c * phase.cos();
        }
        Ok(acc)
    }

    /// CSV rows `n1,…,nk,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.k).map(|i| format!("n{i}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (n, c) in &self.coefficients {
            let idx: Vec<String> = n.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{:.17e}", idx.join(","), c)?;
        }
        Ok(())
    }
}

/// `eval_marginal(fm, θ)`.
pub fn eval_marginal(fm: &FourierMarginal, thetas: &[Phase]) -> Result<f64, OracleError> {
    let t: Vec<f64> = thetas.iter().map(|p| p.radians()).collect();
    fm.eval(&t)
}

/// All tuples of length `k` with entries in `[-m, m]` and zero sum, in
/// lexicographic order.
pub fn zero_sum_tuples(k: usize, m: i32) -> Vec<Vec<i32>> {
    fn rec(k: usize, m: i32, prefix: &mut Vec<i32>, partial: i32, out: &mut Vec<Vec<i32>>) {
        let left = k - prefix.len();
        if left == 1 {
            let last = -partial;
            if last.abs() <= m {
                let mut t = prefix.clone();
                t.push(last);
                out.push(t);
            }
            return;
        }
        for n in -m..=m {
            // remaining entries must be able to cancel the partial sum
            let s = partial + n;
            if s.abs() > (left as i32 - 1) * m {
                continue;
            }
            prefix.push(n);
            rec(k, m, prefix, s, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    rec(k, m, &mut Vec::with_capacity(k), 0, &mut out);
    out
}

/// The tuple `n` with entries `i < j` merged: entry `i` removed and
/// `nᵢ + nⱼ` written at the position of `j` (`keep_j`), or vice versa.
pub(crate) fn merge_pair(n: &[i32], i: usize, j: usize, keep_j: bool) -> Vec<i32> {
    let (drop, keep) = if keep_j { (i, j) } else { (j, i) };
    n.iter()
        .enumerate()
        .filter(|&(a, _)| a != drop)
        .map(|(a, &v)| if a == keep { n[i] + n[j] } else { v })
        .collect()
}

/// The two `F̂_{k-1}` contributions of every pair `i < j`, summed in a fixed
/// value order so the result is invariant under permutations of `n`.
pub(crate) fn pair_source(lower: &FourierMarginal, n: &[i32]) -> f64 {
    let k = n.len();
    let mut terms = Vec::with_capacity(k * (k - 1));
    for i in 0..k {
        for j in i + 1..k {
            terms.push(lower.get(&merge_pair(n, i, j, true)));
            terms.push(lower.get(&merge_pair(n, i, j, false)));
        }
    }
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn sum_squares(n: &[i32]) -> f64 {
    n.iter().map(|&x| (x as i64 * x as i64) as f64).sum()
}

/// Stationary Fourier coefficients of the k-particle marginal, built level by
/// level from `F̂₁ = δ`:
/// `F̂_k(n) = Σ_{i<j}[F̂_{k-1}(merge at j) + F̂_{k-1}(merge at i)] / ((σ²/2)Σnᵢ² + k(k-1))`.
pub fn marginal_recursion(
    k: usize,
    p: &CorrelationParams,
    n_max: i32,
) -> Result<FourierMarginal, OracleError> {
    if k < 2 {
        return Err(OracleError::Order(k));
    }
    let mut level = FourierMarginal::isotropic(n_max)?;
    for kk in 2..=k {
        level = recursion_step(&level, kk, p);
    }
    Ok(level)
}

/// One level of [`marginal_recursion`].
pub fn recursion_step(lower: &FourierMarginal, k: usize, p: &CorrelationParams) -> FourierMarginal {
    let half_s2 = 0.5 * p.sigma * p.sigma;
    let pairs = (k * (k - 1)) as f64;
    let mut coefficients = BTreeMap::new();
    for n in zero_sum_tuples(k, lower.n_max) {
        let src = pair_source(lower, &n);
        if src != 0.0 {
            let v = src / (half_s2 * sum_squares(&n) + pairs);
            coefficients.insert(n, v);
        }
    }
    FourierMarginal {
        k,
        n_max: lower.n_max,
        coefficients,
    }
}

/// Deviation of `f2` from `f1 ⊗ f1` on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deficiency {
    /// Mean of `|f2 - f1⊗f1|` over the grid (measure `dθ₁dθ₂/(2π)²`).
    pub l1: f64,
    pub linf: f64,
}

/// `f2` row-major `n × n`, `f1` of length `n`.
pub fn chaos_deficiency(f2: &[f64], f1: &[f64]) -> Result<Deficiency, OracleError> {
    let n = f1.len();
    if n == 0 || f2.len() != n * n {
        return Err(OracleError::Grid(format!(
            "{} values for a {n}-point axis",
            f2.len()
        )));
    }
    let (mut l1, mut linf) = (0.0, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let d = (f2[i * n + j] - f1[i] * f1[j]).abs();
            l1 += d;
            linf = linf.max(d);
        }
    }
    Ok(Deficiency {
        l1: l1 / (n * n) as f64,
        linf,
    })
}

/// Chaos deficiency of the CL equilibrium `M(θ₁ - θ₂)` against the uniform
/// one-particle law on an `n`-point grid.
pub fn equilibrium_deficiency(p: &CorrelationParams, n: usize) -> Deficiency {
    let f1 = vec![1.0; n];
    let mut f2 = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let d = TAU * (i as f64 - j as f64) / n as f64;
            f2.push(m_density_at(d, p));
        }
    }
    chaos_deficiency(&f2, &f1).expect("square grid")
}
