//! Uniform periodic grids on `[0, 2π)^d` and their discrete Fourier
//! coefficients.

use std::f64::consts::TAU;
use std::io::{self, Write};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

pub const MAX_DIMS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("unsupported dimension {0} (1..={MAX_DIMS})")]
    Dims(usize),
    #[error("grid needs at least 2 points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("grid mismatch: {0}")]
    Mismatch(String),
}

/// Values at the points `θ_j = 2πj/n` along each axis, row-major with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dims: usize,
    n_points: usize,
    values: Vec<f64>,
}

fn check_shape(dims: usize, n_points: usize) -> Result<usize, GridError> {
    if dims == 0 || dims > MAX_DIMS {
        return Err(GridError::Dims(dims));
    }
    if n_points < 2 {
        return Err(GridError::TooFewPoints(n_points));
    }
    Ok(n_points.pow(dims as u32))
}

impl GridField {
    pub fn new(dims: usize, n_points: usize, values: Vec<f64>) -> Result<Self, GridError> {
        let expected = check_shape(dims, n_points)?;
        if values.len() != expected {
            return Err(GridError::Length {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            dims,
            n_points,
            values,
        })
    }

    pub fn constant(dims: usize, n_points: usize, value: f64) -> Result<Self, GridError> {
        let len = check_shape(dims, n_points)?;
        Ok(Self {
            dims,
            n_points,
            values: vec![value; len],
        })
    }

    pub fn uniform(dims: usize, n_points: usize) -> Result<Self, GridError> {
        Self::constant(dims, n_points, 1.0)
    }

    /// Samples `f` at the grid points; `f` receives one angle per axis.
    pub fn from_fn(
        dims: usize,
        n_points: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, GridError> {
        let len = check_shape(dims, n_points)?;
        let mut values = Vec::with_capacity(len);
        let mut theta = vec![0.0; dims];
        for flat in 0..len {
            let mut rest = flat;
            for a in (0..dims).rev() {
                theta[a] = grid_point(rest % n_points, n_points);
                rest /= n_points;
            }
            values.push(f(&theta));
        }
        Ok(Self {
            dims,
            n_points,
            values,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n_points as f64
    }

    /// Mean over the grid, the discrete `∫ f dθ/(2π)^d`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64, GridError> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn same_shape(&self, other: &GridField) -> Result<(), GridError> {
        if self.dims != other.dims || self.n_points != other.n_points {
            return Err(GridError::Mismatch(format!(
                "{}^{} vs {}^{}",
                self.n_points, self.dims, other.n_points, other.dims
            )));
        }
        Ok(())
    }

    /// Discrete Fourier coefficients `ĉ(n) = mean_j f_j e^{-i n·θ_j}`.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft_nd(&mut data, self.n_points, self.dims, false);
        let scale = 1.0 / data.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        data
    }

    /// Inverse of [`GridField::spectrum`], keeping the real part.
    pub fn from_spectrum(
        dims: usize,
        n_points: usize,
        mut coeffs: Vec<Complex64>,
    ) -> Result<Self, GridError> {
        let expected = check_shape(dims, n_points)?;
        if coeffs.len() != expected {
            return Err(GridError::Length {
                expected,
                got: coeffs.len(),
            });
        }
        fft_nd(&mut coeffs, n_points, dims, true);
        Ok(Self {
            dims,
            n_points,
            values: coeffs.into_iter().map(|c| c.re).collect(),
        })
    }

    /// CSV dump: a `n_points,dims` header line, the two numbers, then the
    /// values as rows of `n_points` entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n_points,dims")?;
        writeln!(w, "{},{}", self.n_points, self.dims)?;
        for row in self.values.chunks(self.n_points) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |m: &str| GridError::Mismatch(m.to_string());
        if lines.next().map(str::trim) != Some("n_points,dims") {
            return Err(bad("missing n_points,dims header"));
        }
        let shape = lines.next().ok_or_else(|| bad("missing shape line"))?;
        let mut it = shape.split(',').map(|s| s.trim().parse::<usize>());
        let (n, d) = match (it.next(), it.next()) {
            (Some(Ok(n)), Some(Ok(d))) => (n, d),
            _ => return Err(bad("malformed shape line")),
        };
        let mut values = Vec::new();
        for l in lines {
            for v in l.split(',') {
                values.push(v.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
            }
        }
        Self::new(d, n, values)
    }
}

/// `2πj/n`.
#[inline]
pub fn grid_point(j: usize, n: usize) -> f64 {
    TAU * j as f64 / n as f64
}

/// Signed frequency of FFT index `k` on an `n`-point axis, in `(-n/2, n/2]`.
#[inline]
pub fn frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT index of frequency `m`, or `None` outside the resolved band
/// `|m| < n/2`.
#[inline]
pub fn index_of_frequency(m: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    if m.abs() >= half && !(m == half && n % 2 == 1) {
        return None;
    }
    Some(m.rem_euclid(n as i64) as usize)
}

/// Unnormalized in-place FFT along every axis of a row-major `n^dims` array.
/// The inverse transform divides by nothing; callers scale.
pub fn fft_nd(data: &mut [Complex64], n: usize, dims: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dims {
        let stride = n.pow((dims - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n;
        for base in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + off + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + off + k * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_spectrum() {
        let g = GridField::from_fn(1, 16, |t| 1.0 + t[0].cos()).unwrap();
        let s = g.spectrum();
        assert!((s[0].re - 1.0).abs() < 1e-15);
        assert!((s[1].re - 0.5).abs() < 1e-15);
        assert!((s[15].re - 0.5).abs() < 1e-15);
        assert!(s[2].norm() < 1e-15);
    }

    #[test]
    fn roundtrip_3d() {
        let g =
            GridField::from_fn(3, 8, |t| (t[0] - 2.0 * t[1]).sin() + (t[2]).cos().exp()).unwrap();
        let back = GridField::from_spectrum(3, 8, g.spectrum()).unwrap();
        assert!(g.max_abs_diff(&back).unwrap() < 1e-13);
    }

    #[test]
    fn axis_order() {
        // cos(θ₁ + 2θ₂) has its mass at frequencies (1, 2) and (-1, -2)
        let n = 8;
        let g = GridField::from_fn(2, n, |t| (t[0] + 2.0 * t[1]).cos()).unwrap();
        let s = g.spectrum();
        assert!((s[n + 2].re - 0.5).abs() < 1e-15);
        assert!((s[(n - 1) * n + (n - 2)].re - 0.5).abs() < 1e-15);
        assert!(s[2 * n + 1].norm() < 1e-15);
    }

    #[test]
    fn frequencies() {
        assert_eq!(frequency(0, 8), 0);
        assert_eq!(frequency(4, 8), 4);
        assert_eq!(frequency(5, 8), -3);
        assert_eq!(index_of_frequency(-3, 8), Some(5));
        assert_eq!(index_of_frequency(4, 8), None);
        assert_eq!(index_of_frequency(-4, 8), None);
    }

    #[test]
    fn csv_roundtrip() {
        let g = GridField::from_fn(2, 4, |t| t[0] * 0.1 + t[1]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_points,dims\n4,2\n"));
        assert_eq!(GridField::read_csv(&text).unwrap(), g);
    }

    #[test]
    fn shape_errors() {
        assert_eq!(GridField::uniform(4, 8), Err(GridError::Dims(4)));
        assert_eq!(GridField::uniform(1, 1), Err(GridError::TooFewPoints(1)));
        assert!(GridField::new(2, 4, vec![0.0; 15]).is_err());
    }
}
