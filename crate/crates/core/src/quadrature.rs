//! Gauss–Legendre panel rules and an adaptive integrator with error control.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn gauss_legendre(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).expect("nonzero by construction");
        let gl = GaussLegendre::new(n);
        let (nodes, weights) = gl.as_node_weight_pairs().iter().copied().unzip();
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Mapped nodes and weights for `[a, b]`, appended to `out`.
    pub fn push_mapped(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            out.push((mid + half * x, w * half));
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub(crate) fn gl10() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(10))
}

pub(crate) fn gl16() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(16))
}

pub(crate) fn gl20() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(20))
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Adaptive bisection comparing 10- and 20-point Gauss–Legendre on each
/// panel. `tol` is absolute. Fails with the achieved error estimate when the
/// panel budget runs out.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Integral> {
    const MAX_PANELS: usize = 20_000;
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let coarse = gl10();
    let fine = gl20();

    let mut stack = vec![(lo, hi, 0u32)];
    let mut value = 0.0;
    let mut error = 0.0;
    let mut panels = 0usize;
    let width = hi - lo;
    while let Some((x0, x1, depth)) = stack.pop() {
        panels += 1;
        let c = coarse.integrate(x0, x1, &f);
        let g = fine.integrate(x0, x1, &f);
        let est = (g - c).abs();
        // Local budget proportional to the panel width.
        let budget = tol * (x1 - x0) / width;
        if est <= budget.max(f64::EPSILON * g.abs()) || depth >= 50 || panels >= MAX_PANELS {
            value += g;
            error += est;
        } else {
            let m = 0.5 * (x0 + x1);
            stack.push((m, x1, depth + 1));
            stack.push((x0, m, depth + 1));
        }
    }
    if !value.is_finite() || error > tol.max(f64::EPSILON * value.abs()) * 10.0 {
        return Err(Error::Quadrature {
            requested: tol,
            achieved: error,
        });
    }
    Ok(Integral {
        value: sign * value,
        error,
    })
}

/// Adaptive integration over a union of intervals given by breakpoints.
pub fn adaptive_split(f: impl Fn(f64) -> f64, breaks: &[f64], tol: f64) -> Result<Integral> {
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    let mut total = Integral {
        value: 0.0,
        error: 0.0,
    };
    for w in breaks.windows(2) {
        let r = adaptive(&f, w[0], w[1], tol / pieces)?;
        total.value += r.value;
        total.error += r.error;
    }
    Ok(total)
}

/// Integral over the whole line of a function with Gaussian-type decay,
/// truncated at `±cut`.
pub fn gaussian_line(f: impl Fn(f64) -> f64, cut: f64, tol: f64) -> Result<Integral> {
    let breaks: Vec<f64> = (-8..=8).map(|k| cut * k as f64 / 8.0).collect();
    adaptive_split(f, &breaks, tol)
}

/// Cumulative trapezoid primitive starting from zero at the first sample.
pub fn cumulative_trapezoid(values: &[f64], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dx * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Cumulative trapezoid with Euler–Maclaurin end corrections, fourth order
/// in `dx` for smooth samples. Derivatives come from periodic centered
/// differences, so the samples should be negligible or periodic at the ends.
pub fn cumulative_primitive(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len() as i64;
    if n < 7 {
        return cumulative_trapezoid(values, dx);
    }
    let at = |j: i64| values[j.rem_euclid(n) as usize];
    let d1 = |j: i64| (at(j - 2) - 8.0 * at(j - 1) + 8.0 * at(j + 1) - at(j + 2)) / (12.0 * dx);
    let d3 = |j: i64| {
        (-at(j - 2) + 2.0 * at(j - 1) - 2.0 * at(j + 1) + at(j + 2)) / (2.0 * dx * dx * dx)
    };
    let (a1, a3) = (d1(0), d3(0));
    let c2 = dx * dx / 12.0;
    let c4 = dx.powi(4) / 720.0;
    cumulative_trapezoid(values, dx)
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            let j = j as i64;
            v - c2 * (d1(j) - a1) + c4 * (d3(j) - a3)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        let r = Rule::gauss_legendre(16);
        assert_eq!(r.len(), 16);
        // degree 31 is the limit
        let v = r.integrate(-1.0, 2.0, |x| x.powi(30));
        assert_abs_diff_eq!(v, (2f64.powi(31) + 1.0) / 31.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.integrate(0.0, 1.0, |x| 3.0 * x * x), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_gaussian() {
        let r = gaussian_line(|x| (-x * x).exp(), 40.0, 1e-13).unwrap();
        assert_abs_diff_eq!(r.value, PI.sqrt(), epsilon = 1e-12);
        assert!(r.error < 1e-12);
    }

    #[test]
    fn adaptive_reversed_limits() {
        let a = adaptive(|x| x.cos(), 0.0, 1.0, 1e-12).unwrap().value;
        let b = adaptive(|x| x.cos(), 1.0, 0.0, 1e-12).unwrap().value;
        assert_abs_diff_eq!(a, 1f64.sin(), epsilon = 1e-13);
        assert_abs_diff_eq!(a, -b, epsilon = 1e-15);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let r = adaptive(|x: f64| x.abs(), -1.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(r.value, 2.5, epsilon = 1e-11);
    }

    #[test]
    fn adaptive_reports_failure() {
        let e = adaptive(|x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-15);
        assert!(matches!(e, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn corrected_primitive_is_fourth_order() {
        let err = |n: usize| {
            let dx = 20.0 / n as f64;
            let xs: Vec<f64> = (0..n).map(|j| -10.0 + j as f64 * dx).collect();
            let v: Vec<f64> = xs.iter().map(|x| -2.0 * x * (-x * x).exp()).collect();
            cumulative_primitive(&v, dx)
                .iter()
                .zip(&xs)
                .map(|(p, x)| (p - (-x * x).exp()).abs())
                .fold(0.0, f64::max)
        };
        let (a, b) = (err(100), err(200));
        assert!(b < 1e-5 && a / b > 14.0, "{a} {b}");
    }

    #[test]
    fn trapezoid_primitive() {
        let dx = 0.01;
        let xs: Vec<f64> = (0..=100).map(|j| j as f64 * dx).collect();
        let p = cumulative_trapezoid(&xs.iter().map(|x| 2.0 * x).collect::<Vec<_>>(), dx);
        for (x, v) in xs.iter().zip(&p) {
            assert_abs_diff_eq!(*v, x * x, epsilon = 1e-12);
        }
    }
}
