//! Periodic grids, real and spectral samples, spectral derivatives and
//! discrete Lebesgue norms.
//!
//! The real line is replaced by the periodic box `[-L, L)` sampled at `N`
//! equispaced points. The discrete Fourier transform is unnormalized in the
//! forward direction (`F_k = sum_j f_j exp(-i xi_k x_j')`) and carries `1/N`
//! in the inverse; every physical normalization lives in [`lp_norm`] and in
//! the multiplier definitions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated periodic grid on `[-L, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    n_points: usize,
}

/// Builds a grid, rejecting non-power-of-two sizes and nonpositive widths.
pub fn make_grid(half_width: f64, n_points: usize) -> Result<GridSpec> {
    GridSpec::new(half_width, n_points)
}

impl GridSpec {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Grid(format!(
                "half width must be positive and finite, got {half_width}"
            )));
        }
        if !n_points.is_power_of_two() || n_points < 16 {
            return Err(Error::Grid(format!(
                "number of points must be a power of two >= 16, got {n_points}"
            )));
        }
        Ok(Self {
            half_width,
            n_points,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    /// Position of node `j`.
    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Signed mode number of FFT slot `k`, in `[-N/2, N/2)`.
    pub fn mode(&self, k: usize) -> i64 {
        let n = self.n_points as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Wavenumber `xi = pi m / L` of FFT slot `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        PI * self.mode(k) as f64 / self.half_width
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.wavenumber(k)).collect()
    }

    /// Largest time for which the diffusive scale stays clear of the boundary.
    pub fn validity_horizon(&self) -> f64 {
        (self.half_width / 8.0).powi(2)
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grids differ: (L={}, N={}) vs (L={}, N={})",
                self.half_width, self.n_points, other.half_width, other.n_points
            )));
        }
        Ok(())
    }
}

/// Real samples of a function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Shape(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite sample {} at x = {}",
                values[j],
                grid.x(j)
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_points()).map(|j| f(grid.x(j))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Rectangle-rule integral, exact for trigonometric polynomials.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Field {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Periodic shift by `m` nodes: the result at `x` is the input at `x - m dx`.
    pub fn shifted(&self, m: i64) -> Field {
        let n = self.values.len() as i64;
        let values = (0..n)
            .map(|j| self.values[(j - m).rem_euclid(n) as usize])
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }
}

/// Complex Fourier coefficients in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.n_points() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                grid.n_points(),
                coefficients.len()
            )));
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Multiplies coefficient `k` by `m(xi_k)`.
    pub fn multiplied(&self, m: impl Fn(f64) -> Complex64) -> SpectralField {
        let coefficients = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * m(self.grid.wavenumber(k)))
            .collect();
        SpectralField {
            grid: self.grid,
            coefficients,
        }
    }

    /// Largest deviation from conjugate symmetry, relative to the largest
    /// coefficient. Zero for the transform of a real field.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.coefficients.len();
        let scale = self
            .coefficients
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        (1..n)
            .map(|k| (self.coefficients[k] - self.coefficients[n - k].conj()).norm())
            .fold(self.coefficients[0].im.abs(), f64::max)
            / scale
    }

    /// Squared L2 norm of the represented function (Parseval).
    pub fn energy(&self) -> f64 {
        let norm = self.grid.dx() / self.grid.n_points() as f64;
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() * norm
    }

    /// Fraction of the energy carried by modes with `|m| >= N * fraction`.
    pub fn band_energy_fraction(&self, fraction: f64) -> f64 {
        let cut = (self.grid.n_points() as f64 * fraction).ceil() as i64;
        let total: f64 = self.coefficients.iter().map(|c| c.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let high: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|(k, _)| self.grid.mode(*k).abs() >= cut)
            .map(|(_, c)| c.norm_sqr())
            .sum();
        high / total
    }
}

fn complex_plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let mut cache = CACHE
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    cache
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

pub fn to_spectral(f: &Field) -> SpectralField {
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    complex_plan(buf.len(), false).process(&mut buf);
    SpectralField {
        grid: f.grid,
        coefficients: buf,
    }
}

/// Inverse transform; the imaginary part of the result is discarded.
pub fn from_spectral(s: &SpectralField) -> Field {
    let mut buf = s.coefficients.clone();
    let n = buf.len();
    complex_plan(n, true).process(&mut buf);
    let inv = 1.0 / n as f64;
    Field {
        grid: s.grid,
        values: buf.iter().map(|c| c.re * inv).collect(),
    }
}

/// Applies the Fourier multiplier `m(xi)` to a real field.
pub fn apply_multiplier(f: &Field, m: impl Fn(f64) -> Complex64) -> Field {
    from_spectral(&to_spectral(f).multiplied(m))
}

/// `(i xi)^l`.
pub fn derivative_symbol(xi: f64, order: u32) -> Complex64 {
    Complex64::new(0.0, xi).powu(order)
}

/// Spectral derivative of order `l`. For odd `l` the Nyquist mode carries a
/// purely imaginary symbol and drops out of the real result.
pub fn derivative(f: &Field, order: u32) -> Field {
    if order == 0 {
        return f.clone();
    }
    apply_multiplier(f, |xi| derivative_symbol(xi, order))
}

/// Lebesgue exponent of a discrete norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn label(&self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }

    /// The `p` in `L^p`, with infinity for the sup norm.
    pub fn exponent(&self) -> f64 {
        match self {
            Norm::L1 => 1.0,
            Norm::L2 => 2.0,
            Norm::Linf => f64::INFINITY,
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" => Ok(Norm::Linf),
            other => Err(Error::Config(format!("unknown norm `{other}`"))),
        }
    }
}

/// Discrete norm of samples with spacing `dx`: rectangle rule for `p = 1, 2`,
/// maximum modulus for `p = infinity`.
pub fn discrete_norm(values: &[f64], dx: f64, p: Norm) -> f64 {
    match p {
        Norm::L1 => values.iter().map(|v| v.abs()).sum::<f64>() * dx,
        Norm::L2 => (values.iter().map(|v| v * v).sum::<f64>() * dx).sqrt(),
        Norm::Linf => values.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

pub fn lp_norm(f: &Field, p: Norm) -> f64 {
    discrete_norm(&f.values, f.grid.dx(), p)
}

/// C-infinity step: 0 for `s <= 0`, 1 for `s >= 1`.
pub fn smooth_step(s: f64) -> f64 {
    fn bump(s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            (-1.0 / s).exp()
        }
    }
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = bump(s);
        a / (a + bump(1.0 - s))
    }
}

/// Derivative of [`smooth_step`].
pub fn smooth_step_derivative(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    // step = a / (a + b), a = exp(-1/s), b = exp(-1/(1-s))
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    let da = a / (s * s);
    let db = -b / ((1.0 - s) * (1.0 - s));
    let den = a + b;
    (da * den - a * (da + db)) / (den * den)
}

/// Cutoff equal to 1 on `|x| <= 0.8 L`, decaying smoothly to 0 at `|x| = L`.
pub fn boundary_taper(x: f64, half_width: f64) -> f64 {
    let ramp = 0.2 * half_width;
    smooth_step((half_width - x.abs()) / ramp)
}

/// Derivative of [`boundary_taper`] with respect to `x`.
pub fn boundary_taper_derivative(x: f64, half_width: f64) -> f64 {
    let ramp = 0.2 * half_width;
    -x.signum() * smooth_step_derivative((half_width - x.abs()) / ramp) / ramp
}
