//! Finite-N master equations of the CL and BDG dynamics on a grid, for
//! N = 2 and 3, with marginals and BBGKY consistency checks.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{GridError, GridField};
use crate::torus::{BiasModel, NoiseModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("unsupported particle number {0}")]
    Particles(usize),
    #[error("unsupported marginal level k = {k} for N = {n}")]
    Level { n: usize, k: usize },
    #[error("invalid marginal selection: {0}")]
    Keep(String),
    #[error("kernel built for {kernel} grid points, field has {field}")]
    KernelGrid { kernel: usize, field: usize },
    #[error("field blew up at t = {time}: max |F| = {max}")]
    BlowUp { time: f64, max: f64 },
    #[error("invalid step: {0}")]
    Step(String),
}

pub const BLOW_UP: f64 = 1e6;

/// N-particle density on `[0, 2π)^N`, mean 1 against `(dθ/2π)^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterField {
    field: GridField,
}

impl MasterField {
    pub fn new(field: GridField) -> Result<Self, MasterError> {
        let n = field.dims();
        if !(2..=3).contains(&n) {
            return Err(MasterError::Particles(n));
        }
        Ok(Self { field })
    }

    pub fn uniform(n_particles: usize, n_points: usize) -> Result<Self, MasterError> {
        if !(2..=3).contains(&n_particles) {
            return Err(MasterError::Particles(n_particles));
        }
        Self::new(GridField::uniform(n_particles, n_points)?)
    }

    /// Averages `f` over all coordinate permutations and rescales to mean 1.
    pub fn symmetrized(field: GridField) -> Result<Self, MasterError> {
        let mut m = Self::new(field)?;
        m.symmetrize();
        m.normalize();
        Ok(m)
    }

    pub fn n_particles(&self) -> usize {
        self.field.dims()
    }

    pub fn n_points(&self) -> usize {
        self.field.n_points()
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn mean(&self) -> f64 {
        self.field.mean()
    }

    fn normalize(&mut self) {
        let m = self.field.mean();
        for v in self.field.values_mut() {
            *v /= m;
        }
    }

    fn symmetrize(&mut self) {
        let g = self.n_points();
        let dims = self.field.dims();
        let v = self.field.values().to_vec();
        let out = self.field.values_mut();
        match dims {
            2 => {
                for a in 0..g {
                    for b in 0..g {
                        out[a * g + b] = 0.5 * (v[a * g + b] + v[b * g + a]);
                    }
                }
            }
            _ => {
                let at = |a: usize, b: usize, c: usize| v[(a * g + b) * g + c];
                for a in 0..g {
                    for b in 0..g {
                        for c in 0..g {
                            out[(a * g + b) * g + c] = (at(a, b, c)
                                + at(a, c, b)
                                + at(b, a, c)
                                + at(b, c, a)
                                + at(c, a, b)
                                + at(c, b, a))
                                / 6.0;
                        }
                    }
                }
            }
        }
    }

    /// Largest deviation from `F(θ_π) = F(θ)` over all coordinate swaps.
    pub fn asymmetry(&self) -> f64 {
        let g = self.n_points();
        let v = self.values();
        let mut worst = 0.0f64;
        match self.n_particles() {
            2 => {
                for a in 0..g {
                    for b in 0..g {
                        worst = worst.max((v[a * g + b] - v[b * g + a]).abs());
                    }
                }
            }
            _ => {
                for a in 0..g {
                    for b in 0..g {
                        for c in 0..g {
                            let x = v[(a * g + b) * g + c];
                            worst = worst
                                .max((x - v[(b * g + a) * g + c]).abs())
                                .max((x - v[(a * g + c) * g + b]).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        self.field.write_csv(w)
    }
}

/// Noise `g` and acceptance `H` tabulated for a `G`-point grid.
///
/// `g` is stored on the half-grid `πm/G`, `m = 0..2G`, with each of the two
/// interleaved sub-grids scaled to discrete mean 1 so that grid quadrature of
/// `∫ g dθ/(2π)` is exactly 1 from either sub-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterKernel {
    n_points: usize,
    g_half: Vec<f64>,
    h_half: Vec<f64>,
}

impl MasterKernel {
    pub fn new(
        n_points: usize,
        g: impl Fn(f64) -> f64,
        h: impl Fn(f64) -> f64,
    ) -> Result<Self, MasterError> {
        if n_points < 4 || n_points % 2 == 1 {
            return Err(GridError::Mismatch(format!(
                "need an even grid of at least 4 points, got {n_points}"
            ))
            .into());
        }
        let m = 2 * n_points;
        let step = PI / n_points as f64;
        let mut g_half: Vec<f64> = (0..m).map(|j| g(step * j as f64)).collect();
        for parity in 0..2 {
            let mean = g_half.iter().skip(parity).step_by(2).sum::<f64>() / n_points as f64;
            for v in g_half.iter_mut().skip(parity).step_by(2) {
                *v /= mean;
            }
        }
        // H at offsets πm/G for signed m in [-G/2, G/2], stored by m + G/2
        let h_half = (0..=n_points)
            .map(|j| h(step * (j as f64 - (n_points / 2) as f64)))
            .collect();
        Ok(Self {
            n_points,
            g_half,
            h_half,
        })
    }

    /// Wrapped-Gaussian noise and, when given, the bias acceptance law.
    pub fn from_models(
        n_points: usize,
        noise: &NoiseModel,
        bias: Option<&BiasModel>,
    ) -> Result<Self, MasterError> {
        let g = |t: f64| noise.density(t).unwrap_or(0.0);
        match bias {
            Some(b) => Self::new(n_points, g, |z| b.acceptance(z)),
            None => Self::new(n_points, g, |_| 1.0),
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `g(2π j/G)` for grid index difference `j`.
    #[inline]
    pub fn g_grid(&self, j: isize) -> f64 {
        let g = self.n_points as isize;
        self.g_half[(2 * j.rem_euclid(g)) as usize]
    }

    /// `g(π m/G)` for half-grid index `m`.
    #[inline]
    fn g_half(&self, m: isize) -> f64 {
        self.g_half[m.rem_euclid(2 * self.n_points as isize) as usize]
    }

    /// `H` at the half-angle offset of grid points `a` and `b`, i.e. at
    /// `π d / G` with `d` the signed index difference in `[-G/2, G/2)`.
    #[inline]
    fn h_pair(&self, a: usize, b: usize) -> f64 {
        let d = signed_diff(a, b, self.n_points);
        self.h_half[(d + (self.n_points / 2) as isize) as usize]
    }

    fn check(&self, f: &MasterField) -> Result<(), MasterError> {
        if f.n_points() != self.n_points {
            return Err(MasterError::KernelGrid {
                kernel: self.n_points,
                field: f.n_points(),
            });
        }
        Ok(())
    }
}

#[inline]
fn signed_diff(a: usize, b: usize, g: usize) -> isize {
    let g = g as isize;
    let d = (a as isize - b as isize).rem_euclid(g);
    if d >= g / 2 {
        d - g
    } else {
        d
    }
}

/// Marginal `[F]_î` of a 2-particle field: `out[i][x] = mean over axis i`.
fn marginals_2d(v: &[f64], g: usize) -> (Vec<f64>, Vec<f64>) {
    let mut over_first = vec![0.0; g];
    let mut over_second = vec![0.0; g];
    for a in 0..g {
        for b in 0..g {
            let x = v[a * g + b];
            over_first[b] += x;
            over_second[a] += x;
        }
    }
    let s = 1.0 / g as f64;
    over_first.iter_mut().for_each(|x| *x *= s);
    over_second.iter_mut().for_each(|x| *x *= s);
    (over_first, over_second)
}

/// Right-hand side of the CL master equation,
/// `(2/(N-1)) Σ_{i<j} { ½ g(θᵢ - θⱼ)([F]_ĵ + [F]_î) - F }`.
pub fn cl_master_rhs(f: &MasterField, kernel: &MasterKernel) -> Result<MasterField, MasterError> {
    kernel.check(f)?;
    let g = f.n_points();
    let v = f.values();
    let n = f.n_particles();
    let pref = 2.0 / (n - 1) as f64;
    let mut out = vec![0.0; v.len()];
    match n {
        2 => {
            // [F]_1̂(θ₂) and [F]_2̂(θ₁)
            let (m1, m2) = marginals_2d(v, g);
            for a in 0..g {
                for b in 0..g {
                    let gij = kernel.g_grid(a as isize - b as isize);
                    out[a * g + b] = pref * (0.5 * gij * (m2[a] + m1[b]) - v[a * g + b]);
                }
            }
        }
        3 => {
            // m_i: F integrated over axis i, indexed by the remaining two
            let mut m = [vec![0.0; g * g], vec![0.0; g * g], vec![0.0; g * g]];
            for a in 0..g {
                for b in 0..g {
                    for c in 0..g {
                        let x = v[(a * g + b) * g + c];
                        m[0][b * g + c] += x;
                        m[1][a * g + c] += x;
                        m[2][a * g + b] += x;
                    }
                }
            }
            let s = 1.0 / g as f64;
            for mi in m.iter_mut() {
                mi.iter_mut().for_each(|x| *x *= s);
            }
            for a in 0..g {
                for b in 0..g {
                    for c in 0..g {
                        let idx = (a * g + b) * g + c;
                        let x = v[idx];
                        let g12 = kernel.g_grid(a as isize - b as isize);
                        let g13 = kernel.g_grid(a as isize - c as isize);
                        let g23 = kernel.g_grid(b as isize - c as isize);
                        let p12 = 0.5 * g12 * (m[1][a * g + c] + m[0][b * g + c]) - x;
                        let p13 = 0.5 * g13 * (m[2][a * g + b] + m[0][b * g + c]) - x;
                        let p23 = 0.5 * g23 * (m[2][a * g + b] + m[1][a * g + c]) - x;
                        out[idx] = pref * (p12 + p13 + p23);
                    }
                }
            }
        }
        _ => return Err(MasterError::Particles(n)),
    }
    MasterField::new(GridField::new(n, g, out)?)
}

/// Mass arriving at each half-grid midpoint from colliding pairs `(a, b)`,
/// weighted by `H`: `A(m) = Σ_{mid(a,b) = m} H F(a, b)`. Antipodal pairs have
/// two midpoints and split their mass evenly.
fn collision_mass(v: &[f64], g: usize, kernel: &MasterKernel) -> Vec<f64> {
    let mut acc = vec![0.0; 2 * g];
    let gi = g as isize;
    for a in 0..g {
        for b in 0..g {
            let w = kernel.h_pair(a, b) * v[a * g + b];
            let d = signed_diff(a, b, g);
            // midpoint b + d/2 in half-grid units
            let m = (2 * b as isize + d).rem_euclid(2 * gi) as usize;
            if d == -gi / 2 {
                acc[m] += 0.5 * w;
                acc[(m + g) % (2 * g)] += 0.5 * w;
            } else {
                acc[m] += w;
            }
        }
    }
    acc
}

/// Right-hand side of the BDG master equation at N = 2,
/// `2 { ∫∫ H g(m - θ₁) g(m - θ₂) F(a, b) da db/(2π)² - H(offset(θ₁, θ₂)) F }`,
/// with `m` the midpoint of `(a, b)`. This is the `(u, z)` form with
/// `a = u + z`, `b = u - z`, `da db = 2 du dz`.
pub fn bdg_master_rhs(f: &MasterField, kernel: &MasterKernel) -> Result<MasterField, MasterError> {
    kernel.check(f)?;
    if f.n_particles() != 2 {
        return Err(MasterError::Particles(f.n_particles()));
    }
    let g = f.n_points();
    let v = f.values();
    let acc = collision_mass(v, g, kernel);
    let scale = 1.0 / (g * g) as f64;
    let mut out = vec![0.0; g * g];
    for a in 0..g {
        for b in 0..g {
            let mut gain = 0.0;
            for (m, &w) in acc.iter().enumerate() {
                if w != 0.0 {
                    let m = m as isize;
                    gain +=
                        w * kernel.g_half(m - 2 * a as isize) * kernel.g_half(m - 2 * b as isize);
                }
            }
            let loss = kernel.h_pair(a, b) * v[a * g + b];
            out[a * g + b] = 2.0 * (gain * scale - loss);
        }
    }
    MasterField::new(GridField::new(2, g, out)?)
}

/// Which master equation a field follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MasterDynamics {
    Cl,
    Bdg,
}

impl MasterDynamics {
    pub fn rhs(self, f: &MasterField, kernel: &MasterKernel) -> Result<MasterField, MasterError> {
        match self {
            MasterDynamics::Cl => cl_master_rhs(f, kernel),
            MasterDynamics::Bdg => bdg_master_rhs(f, kernel),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationReport {
    pub steps: usize,
    pub time: f64,
    /// Largest `|mean - 1|` seen before each renormalization.
    pub max_mass_drift: f64,
}

/// Classical RK4 from `f0` over `[0, t_end]`, renormalizing the mean to 1
/// after every step.
pub fn integrate_master<R>(
    rhs: R,
    f0: &MasterField,
    dt: f64,
    t_end: f64,
) -> Result<(MasterField, IntegrationReport), MasterError>
where
    R: Fn(&MasterField) -> Result<MasterField, MasterError>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(MasterError::Step(format!("dt = {dt}")));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(MasterError::Step(format!("t_end = {t_end}")));
    }
    let steps = if t_end == 0.0 {
        0
    } else {
        (t_end / dt).ceil() as usize
    };
    let h = if steps == 0 {
        0.0
    } else {
        t_end / steps as f64
    };
    let dims = f0.n_particles();
    let n = f0.n_points();
    let mut f = f0.clone();
    let mut drift = 0.0f64;
    let axpy = |base: &MasterField, k: &MasterField, c: f64| -> Result<MasterField, MasterError> {
        let vals = base
            .values()
            .iter()
            .zip(k.values())
            .map(|(x, y)| x + c * y)
            .collect();
        MasterField::new(GridField::new(dims, n, vals)?)
    };
    for s in 0..steps {
        let k1 = rhs(&f)?;
        let k2 = rhs(&axpy(&f, &k1, 0.5 * h)?)?;
        let k3 = rhs(&axpy(&f, &k2, 0.5 * h)?)?;
        let k4 = rhs(&axpy(&f, &k3, h)?)?;
        let vals: Vec<f64> = (0..f.values().len())
            .map(|i| {
                f.values()[i]
                    + h / 6.0
                        * (k1.values()[i]
                            + 2.0 * k2.values()[i]
                            + 2.0 * k3.values()[i]
                            + k4.values()[i])
            })
            .collect();
        f = MasterField::new(GridField::new(dims, n, vals)?)?;
        let max = f.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if max.is_nan() || max > BLOW_UP {
            return Err(MasterError::BlowUp {
                time: h * (s + 1) as f64,
                max,
            });
        }
        drift = drift.max((f.mean() - 1.0).abs());
        f.normalize();
    }
    Ok((
        f,
        IntegrationReport {
            steps,
            time: h * steps as f64,
            max_mass_drift: drift,
        },
    ))
}

/// Averages out every axis not listed in `keep` (0-based, strictly
/// increasing).
pub fn marginalize(f: &MasterField, keep: &[usize]) -> Result<GridField, MasterError> {
    let d = f.n_particles();
    if keep.is_empty() {
        return Err(MasterError::Keep("empty selection".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= d) {
        return Err(MasterError::Keep(format!("{keep:?} for N = {d}")));
    }
    let g = f.n_points();
    let k = keep.len();
    let mut out = vec![0.0; g.pow(k as u32)];
    let mut idx = vec![0usize; d];
    for (flat, &x) in f.values().iter().enumerate() {
        let mut rest = flat;
        for a in (0..d).rev() {
            idx[a] = rest % g;
            rest /= g;
        }
        let o = keep.iter().fold(0, |acc, &a| acc * g + idx[a]);
        out[o] += x;
    }
    let s = 1.0 / g.pow((d - k) as u32) as f64;
    out.iter_mut().for_each(|x| *x *= s);
    Ok(GridField::new(k, g, out)?)
}

/// `(g ⋆ F₁)(θ) = ∫ g(θ' - θ) F₁(θ') dθ'/(2π)` on the grid.
fn convolve(kernel: &MasterKernel, f1: &[f64]) -> Vec<f64> {
    let g = f1.len();
    (0..g)
        .map(|a| {
            (0..g)
                .map(|b| kernel.g_grid(b as isize - a as isize) * f1[b])
                .sum::<f64>()
                / g as f64
        })
        .collect()
}

/// CL hierarchy, level 1: `∂F₁/∂t = g ⋆ F₁ - F₁`.
pub fn cl_hierarchy_level1(f1: &GridField, kernel: &MasterKernel) -> Vec<f64> {
    let c = convolve(kernel, f1.values());
    c.iter().zip(f1.values()).map(|(a, b)| a - b).collect()
}

/// CL hierarchy, level 2 at N particles:
/// `(2/(N-1)) [ ½ g(θ₁-θ₂)(F₁(θ₁) + F₁(θ₂)) - F₂ + (N-2) ½ {g ⋆₁ F₂ + g ⋆₂ F₂ - 2F₂} ]`.
pub fn cl_hierarchy_level2(
    f2: &GridField,
    f1: &GridField,
    n_particles: usize,
    kernel: &MasterKernel,
) -> Vec<f64> {
    let g = f1.n_points();
    let v = f2.values();
    let p = f1.values();
    let pref = 2.0 / (n_particles - 1) as f64;
    let extra = (n_particles - 2) as f64;
    let mut out = vec![0.0; g * g];
    for a in 0..g {
        for b in 0..g {
            let mut c1 = 0.0;
            let mut c2 = 0.0;
            for c in 0..g {
                // θ₁ replaced by θ₃ (following), then θ₂ replaced by θ₃
                c1 += kernel.g_grid(c as isize - a as isize) * v[c * g + b];
                c2 += kernel.g_grid(c as isize - b as isize) * v[a * g + c];
            }
            c1 /= g as f64;
            c2 /= g as f64;
            let x = v[a * g + b];
            let pair = 0.5 * kernel.g_grid(a as isize - b as isize) * (p[a] + p[b]) - x;
            out[a * g + b] = pref * (pair + extra * 0.5 * (c1 - x + c2 - x));
        }
    }
    out
}

/// BDG hierarchy, level 1 at N = 2:
/// `2 { ∫∫ H g(m - θ₁) F₂(a, b) da db/(2π)² - ∫ H(offset(θ₁, θ₂)) F₂ dθ₂/(2π) }`.
pub fn bdg_hierarchy_level1(f2: &GridField, kernel: &MasterKernel) -> Vec<f64> {
    let g = f2.n_points();
    let v = f2.values();
    let acc = collision_mass(v, g, kernel);
    let scale = 1.0 / (g * g) as f64;
    (0..g)
        .map(|a| {
            let gain: f64 = acc
                .iter()
                .enumerate()
                .map(|(m, &w)| w * kernel.g_half(m as isize - 2 * a as isize))
                .sum::<f64>()
                * scale;
            let loss: f64 = (0..g)
                .map(|b| kernel.h_pair(a, b) * v[a * g + b])
                .sum::<f64>()
                / g as f64;
            2.0 * (gain - loss)
        })
        .collect()
}

/// Max difference between the marginal of the master right-hand side and the
/// hierarchy right-hand side evaluated on the marginals of `f`.
pub fn bbgky_consistency(
    f: &MasterField,
    dynamics: MasterDynamics,
    kernel: &MasterKernel,
    k: usize,
) -> Result<f64, MasterError> {
    let n = f.n_particles();
    let supported = matches!(
        (dynamics, n, k),
        (MasterDynamics::Cl, 2, 1)
            | (MasterDynamics::Cl, 3, 1)
            | (MasterDynamics::Cl, 3, 2)
            | (MasterDynamics::Bdg, 2, 1)
    );
    if !supported {
        return Err(MasterError::Level { n, k });
    }
    let rhs = dynamics.rhs(f, kernel)?;
    let keep: Vec<usize> = (0..k).collect();
    let lhs = marginalize(&rhs, &keep)?;
    let fk = marginalize(f, &keep)?;
    let hier = match (dynamics, k) {
        (MasterDynamics::Cl, 1) => cl_hierarchy_level1(&fk, kernel),
        (MasterDynamics::Cl, _) => {
            let f1 = marginalize(f, &[0])?;
            cl_hierarchy_level2(&fk, &f1, n, kernel)
        }
        (MasterDynamics::Bdg, _) => {
            let f2 = marginalize(f, &[0, 1])?;
            bdg_hierarchy_level1(&f2, kernel)
        }
    };
    Ok(lhs
        .values()
        .iter()
        .zip(&hier)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Averages a `g × g` field over `b × b` blocks, giving `(g/b)²` values.
pub fn block_average(f: &GridField, out_points: usize) -> Result<GridField, MasterError> {
    let g = f.n_points();
    if f.dims() != 2 || out_points == 0 || !g.is_multiple_of(out_points) {
        return Err(GridError::Mismatch(format!(
            "cannot block {g}^{} into {out_points}^2",
            f.dims()
        ))
        .into());
    }
    let b = g / out_points;
    let mut out = vec![0.0; out_points * out_points];
    for i in 0..g {
        for j in 0..g {
            out[(i / b) * out_points + j / b] += f.values()[i * g + j];
        }
    }
    let s = 1.0 / (b * b) as f64;
    out.iter_mut().for_each(|x| *x *= s);
    Ok(GridField::new(2, out_points, out)?)
}
