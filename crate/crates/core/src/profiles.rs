//! Closed-form asymptotic profiles: the nonlinear diffusion wave `chi`, the
//! Cole–Hopf weight `eta`, the dispersive correction `V`, the tail-driven
//! correction `Z`, the initial primitive `r0`, and the scalar constants.
//!
//! Derivatives are produced as jets from the first-order ODEs the profiles
//! satisfy, so no finite differences appear anywhere in this module:
//!
//! * `chi*' = (beta/2) chi*^2 - (x/2) chi*`
//! * `eta*' = (beta/2) chi* eta*`
//! * `g' = -(x/2) g` for `g = exp(-x^2/4)`

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::quadrature::{adaptive, cumulative_trapezoid, gaussian_line, gl16};

/// Highest derivative order carried by the jets.
pub const MAX_JET: usize = 10;

/// Physical and asymptotic parameters of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub mass: f64,
}

impl ModelParams {
    /// `beta = 0` is accepted: it is the linear limit, in which the profiles
    /// reduce to their small-mass forms.
    pub fn new(beta: f64, gamma: f64, alpha: f64, mass: f64) -> Result<Self> {
        let p = Self {
            beta,
            gamma,
            alpha,
            mass,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("mass", self.mass),
        ] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.alpha <= 1.0 {
            return Err(Error::Parameter(format!(
                "tail exponent alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `kappa = beta^2 gamma / 8`.
    pub fn kappa(&self) -> f64 {
        self.beta * self.beta * self.gamma / 8.0
    }

    /// `A = exp(beta M / 2) - 1`.
    fn a(&self) -> f64 {
        (0.5 * self.beta * self.mass).exp_m1()
    }

    /// `A / beta`, continuous through `beta = 0`.
    fn a_over_beta(&self) -> f64 {
        let z = 0.5 * self.beta * self.mass;
        if z.abs() < 1e-8 {
            // expm1(z)/beta = (M/2)(1 + z/2 + z^2/6)
            0.5 * self.mass * (1.0 + z / 2.0 + z * z / 6.0)
        } else {
            self.a() / self.beta
        }
    }

    /// `max{1, e^{beta M/2}}` and `min{1, e^{beta M/2}}`: bounds of `eta`.
    pub fn eta_bounds(&self) -> (f64, f64) {
        let e = (0.5 * self.beta * self.mass).exp();
        (e.min(1.0), e.max(1.0))
    }
}

fn gaussian(x: f64) -> f64 {
    (-0.25 * x * x).exp()
}

/// `D(x) = sqrt(pi) + A * int_{x/2}^inf exp(-y^2) dy`; strictly positive.
fn denominator(x: f64, p: &ModelParams) -> f64 {
    let d = PI.sqrt() + p.a() * 0.5 * PI.sqrt() * erfc(0.5 * x);
    debug_assert!(d > 0.0, "denominator must be positive, got {d}");
    d
}

pub fn chi_star(x: f64, p: &ModelParams) -> f64 {
    p.a_over_beta() * gaussian(x) / denominator(x, p)
}

/// `chi(x, t) = (1+t)^{-1/2} chi*(x / sqrt(1+t))`.
pub fn chi(x: f64, t: f64, p: &ModelParams) -> f64 {
    let s = (1.0 + t).sqrt().recip();
    s * chi_star(x * s, p)
}

pub fn eta_star(x: f64, p: &ModelParams) -> f64 {
    PI.sqrt() * (0.5 * p.beta * p.mass).exp() / denominator(x, p)
}

pub fn eta(x: f64, t: f64, p: &ModelParams) -> f64 {
    eta_star(x / (1.0 + t).sqrt(), p)
}

/// Values and derivatives `0..=order` of `chi*`, `eta*` and `exp(-x^2/4)` at
/// one point.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub chi: [f64; MAX_JET + 1],
    pub eta: [f64; MAX_JET + 1],
    pub gauss: [f64; MAX_JET + 1],
    pub order: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

impl Jet {
    pub fn at(x: f64, p: &ModelParams, order: usize) -> Self {
        assert!(order <= MAX_JET, "jet order {order} exceeds {MAX_JET}");
        let mut chi = [0.0; MAX_JET + 1];
        let mut eta = [0.0; MAX_JET + 1];
        let mut gauss = [0.0; MAX_JET + 1];
        let d = denominator(x, p);
        gauss[0] = gaussian(x);
        chi[0] = p.a_over_beta() * gauss[0] / d;
        eta[0] = PI.sqrt() * (0.5 * p.beta * p.mass).exp() / d;
        let hb = 0.5 * p.beta;
        for n in 1..=order {
            let prev2 = |a: &[f64; MAX_JET + 1]| if n >= 2 { a[n - 2] } else { 0.0 };
            let half_n1 = 0.5 * (n as f64 - 1.0);

            gauss[n] = -0.5 * x * gauss[n - 1] - half_n1 * prev2(&gauss);

            let mut quad = 0.0;
            for k in 0..n {
                quad += binomial(n - 1, k) * chi[k] * chi[n - 1 - k];
            }
            chi[n] = hb * quad - 0.5 * x * chi[n - 1] - half_n1 * prev2(&chi);

            let mut prod = 0.0;
            for k in 0..n {
                prod += binomial(n - 1, k) * chi[k] * eta[n - 1 - k];
            }
            eta[n] = hb * prod;
        }
        Self {
            chi,
            eta,
            gauss,
            order,
        }
    }

    /// `(eta* g)^{(n)}` by the Leibniz rule.
    pub fn eta_gauss(&self, n: usize) -> f64 {
        (0..=n)
            .map(|k| binomial(n, k) * self.eta[k] * self.gauss[n - k])
            .sum()
    }
}

/// `l`-th derivative in `x` of `chi(x, t)`.
pub fn chi_derivative(x: f64, t: f64, l: usize, p: &ModelParams) -> f64 {
    let s = (1.0 + t).sqrt().recip();
    s.powi(l as i32 + 1) * Jet::at(x * s, p, l).chi[l]
}

/// `l`-th derivative in `x` of `eta(x, t)`.
pub fn eta_derivative(x: f64, t: f64, l: usize, p: &ModelParams) -> f64 {
    let s = (1.0 + t).sqrt().recip();
    s.powi(l as i32) * Jet::at(x * s, p, l).eta[l]
}

/// `chi_t` from the scaling law: `-(s^3/2)(chi* + y chi*')(y)` with `y = x s`.
pub fn chi_time_derivative(x: f64, t: f64, p: &ModelParams) -> f64 {
    let s = (1.0 + t).sqrt().recip();
    let y = x * s;
    let j = Jet::at(y, p, 1);
    -0.5 * s.powi(3) * (j.chi[0] + y * j.chi[1])
}

/// Largest pointwise residual of `chi_t + beta chi chi_x - chi_xx` for `chi`
/// sampled on `grid` at time `t`, with spectral space derivatives.
pub fn burgers_residual(grid: &crate::grid::GridSpec, t: f64, p: &ModelParams) -> f64 {
    let c = Field::from_fn(*grid, |x| chi(x, t, p));
    let cx = crate::grid::derivative(&c, 1);
    let cxx = crate::grid::derivative(&c, 2);
    grid.points()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            (chi_time_derivative(x, t, p) + p.beta * c.values()[j] * cx.values()[j]
                - cxx.values()[j])
                .abs()
        })
        .fold(0.0, f64::max)
}

/// `V*` from the product form `(beta chi* - x) eta* g / (4 sqrt(pi))`.
pub fn v_star(x: f64, p: &ModelParams) -> f64 {
    (p.beta * chi_star(x, p) - x) * eta_star(x, p) * gaussian(x) / (4.0 * PI.sqrt())
}

/// `V*` from the derivative form `(eta* g)' / sqrt(4 pi)`, expanded with the
/// chain rule on the jets.
pub fn v_star_derivative_form(x: f64, p: &ModelParams) -> f64 {
    Jet::at(x, p, 1).eta_gauss(1) / (4.0 * PI).sqrt()
}

/// `l`-th derivative of `V*`.
pub fn v_star_derivative(x: f64, l: usize, p: &ModelParams) -> f64 {
    Jet::at(x, p, l + 1).eta_gauss(l + 1) / (4.0 * PI).sqrt()
}

/// `-(kappa d) V*(x/sqrt(1+t)) (1+t)^{-1} log(1+t)` and its derivatives.
pub fn v_profile_derivative(x: f64, t: f64, l: usize, ps: &ProfileSet) -> f64 {
    let kd = ps.kappa * ps.d;
    if kd == 0.0 || t == 0.0 {
        return 0.0;
    }
    let s = (1.0 + t).sqrt().recip();
    -kd * s.powi(l as i32 + 2) * (1.0 + t).ln() * v_star_derivative(x * s, l, &ps.params)
}

pub fn v_profile(x: f64, t: f64, ps: &ProfileSet) -> f64 {
    v_profile_derivative(x, t, 0, ps)
}

/// Derivatives `0..=order` of the heat kernel `G(u, t)` in `u`.
pub fn heat_kernel_jet(u: f64, t: f64, order: usize, out: &mut [f64]) {
    let inv2t = 0.5 / t;
    out[0] = (-u * u * inv2t * 0.5).exp() / (4.0 * PI * t).sqrt();
    if order >= 1 {
        out[1] = -u * inv2t * out[0];
    }
    for n in 2..=order {
        out[n] = -u * inv2t * out[n - 1] - (n as f64 - 1.0) * inv2t * out[n - 2];
    }
}

/// Number of heat-kernel widths kept on each side in the `Z` quadrature.
pub const Z_WINDOW_WIDTHS: f64 = 14.0;

/// Upper bound on the discarded part of `int |d^j G(x - y, t)| |R(y)| dy`
/// when the `y` integral is cut at `|x - y| = K sqrt(t)`, for `|R| <= rmax`.
pub fn z_tail_bound(t: f64, order: usize, widths: f64, rmax: f64) -> f64 {
    let w = widths * t.sqrt();
    let f = |u: f64| {
        let mut b = [0.0; MAX_JET + 2];
        heat_kernel_jet(u, t, order, &mut b);
        b[order].abs()
    };
    let tail = adaptive(f, w, w + 40.0 * t.sqrt(), 1e-30)
        .map(|r| r.value)
        .unwrap_or(f64::INFINITY);
    2.0 * rmax * tail
}

fn tail_weight(y: f64, ps: &ProfileSet) -> f64 {
    let c = if y >= 0.0 {
        ps.c_alpha_plus
    } else {
        ps.c_alpha_minus
    };
    c * (1.0 + y.abs()).powf(1.0 - ps.params.alpha)
}

/// Gauss–Legendre 16 nodes and weights on `[-1, 1]`.
fn gl16_nodes() -> &'static [(f64, f64)] {
    use std::sync::OnceLock;
    static N: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    N.get_or_init(|| {
        let mut v = Vec::new();
        gl16().push_mapped(-1.0, 1.0, &mut v);
        v
    })
}

/// Calls `f(y, w)` for graded Gauss–Legendre nodes covering `[a, b]`, where
/// `a` and `b` lie on the same side of zero. Panel width is at most `hmax`
/// and at most `1 + |y|`, which resolves the algebraic tail.
fn graded_nodes(a: f64, b: f64, hmax: f64, mut f: impl FnMut(f64, f64)) {
    if b <= a {
        return;
    }
    let nodes = gl16_nodes();
    let mirrored = b <= 0.0;
    let (lo, hi) = if mirrored { (-b, -a) } else { (a, b) };
    let mut y = lo;
    while y < hi {
        let w = hmax.min(1.0 + y);
        let end = (y + w).min(hi);
        let half = 0.5 * (end - y);
        let mid = 0.5 * (end + y);
        for &(node, weight) in nodes {
            let yy = mid + half * node;
            f(if mirrored { -yy } else { yy }, weight * half);
        }
        y = end;
    }
}

/// `W^{(j)}(x, t) = int d^j G(x - y, t) R(y) dy` for `j = 0..=order`.
fn heat_of_tail(x: f64, t: f64, order: usize, ps: &ProfileSet, out: &mut [f64]) {
    let half = Z_WINDOW_WIDTHS * t.sqrt();
    let (a, b) = (x - half, x + half);
    let hmax = t.sqrt();
    let mut g = [0.0; MAX_JET + 2];
    out[..=order].iter_mut().for_each(|v| *v = 0.0);
    let mut acc = |y: f64, w: f64| {
        heat_kernel_jet(x - y, t, order, &mut g);
        let r = w * tail_weight(y, ps);
        for j in 0..=order {
            out[j] += g[j] * r;
        }
    };
    if a < 0.0 && b > 0.0 {
        graded_nodes(a, 0.0, hmax, &mut acc);
        graded_nodes(0.0, b, hmax, &mut acc);
    } else {
        graded_nodes(a, b, hmax, &mut acc);
    }
}

/// `l`-th derivative in `x` of `Z(x, t) = d/dx [eta(x, t) W(x, t)]`.
pub fn z_derivative(x: f64, t: f64, l: usize, ps: &ProfileSet) -> Result<f64> {
    ps.check_z_domain(t)?;
    if l + 1 > MAX_JET {
        return Err(Error::Parameter(format!("derivative order {l} too high")));
    }
    if ps.c_alpha_plus == 0.0 && ps.c_alpha_minus == 0.0 {
        return Ok(0.0);
    }
    let mut w = [0.0; MAX_JET + 2];
    heat_of_tail(x, t, l + 1, ps, &mut w);
    let s = (1.0 + t).sqrt().recip();
    let jet = Jet::at(x * s, &ps.params, l + 1);
    let mut acc = 0.0;
    let mut sk = 1.0;
    for k in 0..=l + 1 {
        acc += binomial(l + 1, k) * sk * jet.eta[k] * w[l + 1 - k];
        sk *= s;
    }
    Ok(acc)
}

pub fn z_eval(x: f64, t: f64, ps: &ProfileSet) -> Result<f64> {
    z_derivative(x, t, 0, ps)
}

/// `Z` or one of its derivatives at many points, evaluated in parallel
/// (each point is independent, so the result does not depend on scheduling).
pub fn z_derivative_many(xs: &[f64], t: f64, l: usize, ps: &ProfileSet) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    xs.par_iter().map(|&x| z_derivative(x, t, l, ps)).collect()
}

/// The scalar constants that accompany a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub params: ModelParams,
    pub c_alpha_plus: f64,
    pub c_alpha_minus: f64,
    pub d: f64,
    pub kappa: f64,
    /// Defined for `1 < alpha < 2` only.
    pub mu0: Option<f64>,
    pub mu1: f64,
}

impl ProfileSet {
    /// Builds the constants for known tail limits `c_alpha^{+-}`.
    pub fn with_tails(p: ModelParams, c_plus: f64, c_minus: f64) -> Result<Self> {
        Self::with_tolerance(p, c_plus, c_minus, 1e-10)
    }

    pub fn with_tolerance(p: ModelParams, c_plus: f64, c_minus: f64, tol: f64) -> Result<Self> {
        p.validate()?;
        let d = d_constant(&p, tol)?;
        let kappa = p.kappa();
        let mu0 = if p.alpha > 1.0 && p.alpha < 2.0 {
            let a = p.alpha;
            Some(
                (c_plus - c_minus) * gamma((3.0 - a) / 2.0)
                    + (c_plus + c_minus) * p.beta * chi_star(0.0, &p) / (2.0 - a)
                        * gamma(2.0 - a / 2.0),
            )
        } else {
            None
        };
        Ok(Self {
            params: p,
            c_alpha_plus: c_plus,
            c_alpha_minus: c_minus,
            d,
            kappa,
            mu0,
            mu1: 0.5 * (c_plus + c_minus) - kappa * d,
        })
    }

    fn check_z_domain(&self, t: f64) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::Parameter(format!(
                "Z requires t > 0, got {t}"
            )));
        }
        if self.params.alpha > 2.0 {
            return Err(Error::Parameter(format!(
                "Z is defined for 1 < alpha <= 2, got {}",
                self.params.alpha
            )));
        }
        Ok(())
    }

    /// Same constants with both tail limits multiplied by `lambda`.
    pub fn scaled_tails(&self, lambda: f64) -> Result<Self> {
        Self::with_tails(
            self.params,
            lambda * self.c_alpha_plus,
            lambda * self.c_alpha_minus,
        )
    }
}

/// `d = int eta*^{-1} chi*^3` by adaptive quadrature with absolute tolerance `tol`.
pub fn d_constant(p: &ModelParams, tol: f64) -> Result<f64> {
    if p.mass == 0.0 {
        return Ok(0.0);
    }
    let f = |y: f64| chi_star(y, p).powi(3) / eta_star(y, p);
    Ok(gaussian_line(f, 60.0, tol)?.value)
}

/// `eta*` from its defining integral, `exp((beta/2) int_{-inf}^x chi*)`.
pub fn eta_star_by_quadrature(x: f64, p: &ModelParams) -> Result<f64> {
    let lo = -60.0;
    let integral = if x <= lo {
        0.0
    } else {
        adaptive(|y| chi_star(y, p), lo, x, 1e-14)?.value
    };
    Ok((0.5 * p.beta * integral).exp())
}

/// Tail limits recovered from a sampled `r0`, with the spread of the scaled
/// samples inside each averaging window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub c_plus: f64,
    pub c_minus: f64,
    pub spread_plus: f64,
    pub spread_minus: f64,
}

/// `r0 = eta*^{-1} int_{-L}^x (u0 - chi*)`, by cumulative trapezoid.
pub fn r0_eval(u0: &Field, p: &ModelParams) -> Result<Field> {
    let g = *u0.grid();
    let xs = g.points();
    let diff: Vec<f64> = xs
        .iter()
        .zip(u0.values())
        .map(|(&x, &u)| u - chi_star(x, p))
        .collect();
    let prim = cumulative_trapezoid(&diff, g.dx());
    // Close the periodic cell: last sample back to the first.
    let total = prim[prim.len() - 1] + 0.5 * g.dx() * (diff[diff.len() - 1] + diff[0]);
    if total.abs() > 1e-6 {
        return Err(Error::MassMismatch(format!(
            "int (u0 - chi*) = {total:e}, the data mass differs from M = {}",
            p.mass
        )));
    }
    let r0 = prim
        .iter()
        .zip(&xs)
        .map(|(&v, &x)| v / eta_star(x, p))
        .collect();
    Field::new(g, r0)
}

/// Averages `(1+|x|)^{alpha-1} r0(x)` over `x in +-[0.5L, 0.7L]`.
pub fn extract_c_alpha_with_spread(r0: &Field, p: &ModelParams) -> TailEstimate {
    let g = r0.grid();
    let l = g.half_width();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (j, &r) in r0.values().iter().enumerate() {
        let x = g.x(j);
        let scaled = (1.0 + x.abs()).powf(p.alpha - 1.0) * r;
        if x >= 0.5 * l && x <= 0.7 * l {
            plus.push(scaled);
        } else if x <= -0.5 * l && x >= -0.7 * l {
            minus.push(scaled);
        }
    }
    let stats = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mean, hi - lo)
    };
    let (c_plus, spread_plus) = stats(&plus);
    let (c_minus, spread_minus) = stats(&minus);
    TailEstimate {
        c_plus,
        c_minus,
        spread_plus,
        spread_minus,
    }
}

pub fn extract_c_alpha(r0: &Field, p: &ModelParams) -> (f64, f64) {
    let e = extract_c_alpha_with_spread(r0, p);
    (e.c_plus, e.c_minus)
}

/// Constants for sampled initial data, with `c_alpha^{+-}` extracted from `r0`.
pub fn constants(p: &ModelParams, u0: &Field) -> Result<ProfileSet> {
    let r0 = r0_eval(u0, p)?;
    let (cp, cm) = extract_c_alpha(&r0, p);
    ProfileSet::with_tails(*p, cp, cm)
}

/// Deviations of the closed-form self-similar profile of the classical
/// Burgers literature from `chi*` and `-kappa d V*` (both vanish at `beta = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmDeviation {
    pub first: f64,
    pub second: f64,
}

/// `H(x) = cosh(M/4) - sinh(M/4) erf(x/2)`.
fn hopf_h(x: f64, m: f64) -> f64 {
    (0.25 * m).cosh() - (0.25 * m).sinh() * erf(0.5 * x)
}

/// `f_M = -2 (log H)'`.
pub fn f_m(x: f64, m: f64) -> f64 {
    2.0 * (0.25 * m).sinh() * gaussian(x) / (PI.sqrt() * hopf_h(x, m))
}

/// Second-order self-similar profile written through `H`.
pub fn f_m_second(x: f64, m: f64, gamma_disp: f64) -> Result<f64> {
    let moment = gaussian_line(|y| hopf_h(y, m) * f_m(y, m).powi(3), 60.0, 1e-14)?.value;
    Ok(f_m_second_with_moment(x, m, gamma_disp, moment))
}

fn f_m_second_with_moment(x: f64, m: f64, gamma_disp: f64, moment: f64) -> f64 {
    -gamma_disp * (f_m(x, m) - x) * gaussian(x) / (32.0 * PI.sqrt() * hopf_h(x, m)) * moment
}

/// Maximum deviations on `x in [-20, 20]` (step 0.01).
pub fn fm_check(p: &ModelParams) -> Result<FmDeviation> {
    if p.beta != 1.0 {
        return Err(Error::Parameter(format!(
            "the comparison holds at beta = 1, got {}",
            p.beta
        )));
    }
    let ps = ProfileSet::with_tolerance(*p, 0.0, 0.0, 1e-14)?;
    let moment = gaussian_line(|y| hopf_h(y, p.mass) * f_m(y, p.mass).powi(3), 60.0, 1e-15)?.value;
    let mut dev = FmDeviation {
        first: 0.0,
        second: 0.0,
    };
    for k in 0..=4000 {
        let x = -20.0 + 0.01 * k as f64;
        let a = (f_m(x, p.mass) - chi_star(x, p)).abs();
        let b = (f_m_second_with_moment(x, p.mass, p.gamma, moment)
            + ps.kappa * ps.d * v_star(x, p))
        .abs();
        dev.first = dev.first.max(a);
        dev.second = dev.second.max(b);
    }
    Ok(dev)
}

/// One row of a profile table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub x: f64,
    pub chi_star: f64,
    pub eta_star: f64,
    pub v_star: f64,
    pub z: Option<f64>,
}

/// Tabulates the scale-free profiles, and `Z(., t_z)` when it is defined.
pub fn tabulate(xs: &[f64], ps: &ProfileSet, t_z: Option<f64>) -> Result<Vec<ProfileRow>> {
    let p = &ps.params;
    xs.iter()
        .map(|&x| {
            let z = match t_z {
                Some(t) if p.alpha <= 2.0 => Some(z_eval(x, t, ps)?),
                _ => None,
            };
            Ok(ProfileRow {
                x,
                chi_star: chi_star(x, p),
                eta_star: eta_star(x, p),
                v_star: v_star(x, p),
                z,
            })
        })
        .collect()
}
