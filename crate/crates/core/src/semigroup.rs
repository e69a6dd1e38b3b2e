//! Exact Fourier-multiplier operators: the linear BBM–Burgers semigroup
//! `T(t)`, the heat semigroup `G(t)`, the Helmholtz inverse `(1 - d_x^2)^{-1}`
//! and the weighted heat operator `U` that solves the linearization around
//! the diffusion wave.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, derivative_symbol, from_spectral, lp_norm, to_spectral, Field, GridSpec, Norm};
use crate::profiles::{eta, eta_derivative, heat_kernel_jet, ModelParams};
use crate::quadrature::cumulative_primitive;

/// Exponents below this real part are clamped before `exp`.
const EXP_FLOOR: f64 = -700.0;

pub(crate) fn clamped_exp(z: Complex64) -> Complex64 {
    Complex64::new(z.re.max(EXP_FLOOR), z.im).exp()
}

/// Symbol of the BBM–Burgers linear operator, `(-xi^2 + i gamma xi^3)/(1 + xi^2)`.
pub fn bbm_symbol(xi: f64, gamma: f64) -> Complex64 {
    let den = 1.0 + xi * xi;
    Complex64::new(-xi * xi / den, gamma * xi * xi * xi / den)
}

/// `exp(t (-xi^2 + i gamma xi^3)/(1 + xi^2))`.
pub fn t_multiplier(xi: f64, t: f64, gamma: f64) -> Complex64 {
    clamped_exp(bbm_symbol(xi, gamma) * t)
}

/// `exp(-t xi^2)`.
pub fn g_multiplier(xi: f64, t: f64) -> f64 {
    (-t * xi * xi).max(EXP_FLOOR).exp()
}

/// `1 / (1 + xi^2)`.
pub fn helmholtz_multiplier(xi: f64) -> f64 {
    1.0 / (1.0 + xi * xi)
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("time must be nonnegative and finite, got {t}")));
    }
    Ok(())
}

pub fn t_apply(f: &Field, t: f64, p: &ModelParams) -> Result<Field> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_multiplier(f, |xi| t_multiplier(xi, t, p.gamma)))
}

pub fn g_apply(f: &Field, t: f64) -> Result<Field> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_multiplier(f, |xi| Complex64::new(g_multiplier(xi, t), 0.0)))
}

/// `|| d_x^l (T(t) - G(t)) f ||_2`.
pub fn tg_gap(f: &Field, t: f64, l: u32, p: &ModelParams) -> Result<f64> {
    check_time(t)?;
    let g = apply_multiplier(f, |xi| {
        (t_multiplier(xi, t, p.gamma) - g_multiplier(xi, t)) * derivative_symbol(xi, l)
    });
    Ok(lp_norm(&g, Norm::L2))
}

/// `(1 - d_x^2)^{-1}` as a Fourier multiplier.
pub fn helmholtz_inv(f: &Field) -> Field {
    apply_multiplier(f, |xi| Complex64::new(helmholtz_multiplier(xi), 0.0))
}

/// `(1 - d_x^2)^{-1}` as a direct convolution with `exp(-|x|)/2`, periodized
/// and truncated at 40 e-foldings.
///
/// The kernel has a kink at the origin, so the plain trapezoid sum is only
/// second order; the Euler–Maclaurin endpoint terms of the two one-sided
/// integrals are added back explicitly. They need `f''` and `f''''`, which are
/// taken from centered finite differences so the route stays independent of
/// the FFT.
pub fn helmholtz_inv_direct(f: &Field) -> Field {
    let g = f.grid();
    let n = g.n_points() as i64;
    let h = g.dx();
    let v = f.values();
    let at = |j: i64| v[j.rem_euclid(n) as usize];
    let reach = (40.0 / h).ceil() as i64;
    let weights: Vec<f64> = (0..=reach).map(|m| 0.5 * (-(m as f64) * h).exp()).collect();

    let (h2, h4, h6) = (h * h, h.powi(4), h.powi(6));
    let values = (0..n)
        .map(|j| {
            let mut trap = weights[0] * at(j);
            for m in 1..=reach {
                trap += weights[m as usize] * (at(j - m) + at(j + m));
            }
            trap *= h;
            // fourth-order centered differences
            let f0 = at(j);
            let d2 = (-at(j - 2) + 16.0 * at(j - 1) - 30.0 * f0 + 16.0 * at(j + 1) - at(j + 2))
                / (12.0 * h2);
            let d4 = (-at(j - 3) + 12.0 * at(j - 2) - 39.0 * at(j - 1) + 56.0 * f0
                - 39.0 * at(j + 1)
                + 12.0 * at(j + 2)
                - at(j + 3))
                / (6.0 * h4);
            trap - h2 / 12.0 * f0 + h4 / 720.0 * (f0 + 3.0 * d2)
                - h6 / 30240.0 * (f0 + 10.0 * d2 + 5.0 * d4)
        })
        .collect();
    Field::new(*g, values).expect("finite input gives finite output")
}

/// Heat-kernel widths kept on each side in the `U` quadrature.
const U_WINDOW_WIDTHS: f64 = 14.0;

/// `U[h](x, t, tau) = d/dx [ eta(x, t) int G(x - y, t - tau) eta(y, tau)^{-1} H(y) dy ]`
/// with `H` the primitive of `h` anchored at the left edge of the grid
/// (end-corrected cumulative trapezoid).
///
/// The `y` integral uses the grid trapezoid rule restricted to a window of
/// `14 sqrt(t - tau)` around each `x`, which is spectrally accurate for the
/// Gaussian integrand.
pub fn u_apply(hf: &Field, t: f64, tau: f64, p: &ModelParams) -> Result<Field> {
    if !(tau >= 0.0) || !(t > tau) {
        return Err(Error::Parameter(format!(
            "U requires t > tau >= 0, got t = {t}, tau = {tau}"
        )));
    }
    let mass = hf.integral();
    if mass.abs() > 1e-6 {
        return Err(Error::MassMismatch(format!(
            "U requires a zero-mass argument, got integral {mass:e}"
        )));
    }
    let g = *hf.grid();
    let dx = g.dx();
    let n = g.n_points();
    let xs = g.points();
    let prim = cumulative_primitive(hf.values(), dx);
    let weighted: Vec<f64> = prim
        .iter()
        .zip(&xs)
        .map(|(&hh, &y)| hh / eta(y, tau, p))
        .collect();
    let s = t - tau;
    let reach = ((U_WINDOW_WIDTHS * s.sqrt()) / dx).ceil() as i64;
    let mut out = Vec::with_capacity(n);
    let mut kern = [0.0; 2];
    for (j, &x) in xs.iter().enumerate() {
        let lo = (j as i64 - reach).max(0) as usize;
        let hi = ((j as i64 + reach) as usize).min(n - 1);
        let (mut w0, mut w1) = (0.0, 0.0);
        for k in lo..=hi {
            heat_kernel_jet(x - xs[k], s, 1, &mut kern);
            w0 += kern[0] * weighted[k];
            w1 += kern[1] * weighted[k];
        }
        w0 *= dx;
        w1 *= dx;
        out.push(eta_derivative(x, t, 1, p) * w0 + eta(x, t, p) * w1);
    }
    Field::new(g, out)
}

/// Multiplier values of `T(t)` on the grid wavenumbers, in ascending order.
pub fn kernel_table(grid: &GridSpec, t: f64, p: &ModelParams) -> Result<Vec<(f64, f64, f64)>> {
    check_time(t)?;
    let mut xi = grid.wavenumbers();
    xi.sort_by(f64::total_cmp);
    Ok(xi
        .into_iter()
        .map(|x| {
            let m = t_multiplier(x, t, p.gamma);
            (x, m.re, m.im)
        })
        .collect())
}

/// Norm of the spectral representation's imaginary residue after applying a
/// multiplier: zero when realness is preserved.
pub fn realness_defect(f: &Field, m: impl Fn(f64) -> Complex64) -> f64 {
    to_spectral(f).multiplied(m).conjugate_asymmetry()
}

/// `from_spectral` re-exported for callers that build multipliers by hand.
pub fn synthesize(coefficients: Vec<Complex64>, grid: GridSpec) -> Result<Field> {
    Ok(from_spectral(&crate::grid::SpectralField::new(grid, coefficients)?))
}
