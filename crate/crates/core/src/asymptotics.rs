//! Profile-subtracted error norms along trajectories, decay-exponent fits,
//! and the band and slope tests behind the optimal-rate checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, discrete_norm, Norm};
use crate::profiles::{chi_derivative, v_profile_derivative, z_derivative_many, ProfileSet};
use crate::solver::Trajectory;

/// Which asymptotic profile is subtracted from the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileCombo {
    #[serde(rename = "chi")]
    Chi,
    #[serde(rename = "chi+Z")]
    ChiZ,
    #[serde(rename = "chi+V")]
    ChiV,
    #[serde(rename = "chi+Z+V")]
    ChiZV,
    /// `V` alone, for comparing the dispersive auxiliary solution with its profile.
    #[serde(rename = "V")]
    V,
}

impl ProfileCombo {
    pub fn label(&self) -> &'static str {
        match self {
            ProfileCombo::Chi => "chi",
            ProfileCombo::ChiZ => "chi+Z",
            ProfileCombo::ChiV => "chi+V",
            ProfileCombo::ChiZV => "chi+Z+V",
            ProfileCombo::V => "V",
        }
    }

    /// File-name friendly label.
    pub fn slug(&self) -> &'static str {
        match self {
            ProfileCombo::Chi => "chi",
            ProfileCombo::ChiZ => "chi_Z",
            ProfileCombo::ChiV => "chi_V",
            ProfileCombo::ChiZV => "chi_Z_V",
            ProfileCombo::V => "V",
        }
    }

    fn has_chi(&self) -> bool {
        !matches!(self, ProfileCombo::V)
    }

    fn has_z(&self) -> bool {
        matches!(self, ProfileCombo::ChiZ | ProfileCombo::ChiZV)
    }

    fn has_v(&self) -> bool {
        matches!(self, ProfileCombo::ChiV | ProfileCombo::ChiZV | ProfileCombo::V)
    }
}

impl std::str::FromStr for ProfileCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi" => Ok(ProfileCombo::Chi),
            "chi+Z" => Ok(ProfileCombo::ChiZ),
            "chi+V" => Ok(ProfileCombo::ChiV),
            "chi+Z+V" => Ok(ProfileCombo::ChiZV),
            "V" => Ok(ProfileCombo::V),
            other => Err(Error::Config(format!("unknown profile combination `{other}`"))),
        }
    }
}

/// Fraction of the half width inside which errors are measured. Keeps the
/// periodic images and the boundary taper out of the norms.
pub const DEFAULT_MEASURE_FRACTION: f64 = 0.4;

/// `||d_x^l (u - Phi)(., t)||_p` along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub combo: ProfileCombo,
    pub norm: Norm,
    pub order: u32,
    /// Errors are measured on `|x| <= measure_half_width`.
    pub measure_half_width: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Subtracts the analytic profile derivatives from the spectral derivative
/// of each snapshot and takes the discrete norm on the measurement window.
/// Samples at `t = 0` are skipped when the combination contains `Z`.
pub fn error_series(
    traj: &Trajectory,
    combo: ProfileCombo,
    l: u32,
    p: Norm,
    ps: &ProfileSet,
) -> Result<ErrorSeries> {
    error_series_within(traj, combo, l, p, ps, DEFAULT_MEASURE_FRACTION)
}

pub fn error_series_within(
    traj: &Trajectory,
    combo: ProfileCombo,
    l: u32,
    p: Norm,
    ps: &ProfileSet,
    fraction: f64,
) -> Result<ErrorSeries> {
    let mut set = error_series_set(traj, &[combo], l, &[p], ps, fraction)?;
    Ok(set.remove(0))
}

/// Error series for several combinations and norms at once; each profile
/// component is evaluated once per sample. Output is ordered combo-major.
pub fn error_series_set(
    traj: &Trajectory,
    combos: &[ProfileCombo],
    l: u32,
    norms: &[Norm],
    ps: &ProfileSet,
    fraction: f64,
) -> Result<Vec<ErrorSeries>> {
    let grid = traj.grid;
    let half = fraction * grid.half_width();
    let idx: Vec<usize> = (0..grid.n_points())
        .filter(|&j| grid.x(j).abs() <= half)
        .collect();
    let xs: Vec<f64> = idx.iter().map(|&j| grid.x(j)).collect();
    let lu = l as usize;
    let needs_z = combos.iter().any(|c| c.has_z());
    let needs_v = combos.iter().any(|c| c.has_v());
    let mut out: Vec<ErrorSeries> = combos
        .iter()
        .flat_map(|&combo| {
            norms.iter().map(move |&norm| ErrorSeries {
                combo,
                norm,
                order: l,
                measure_half_width: half,
                times: Vec::new(),
                values: Vec::new(),
            })
        })
        .collect();
    let mut diff = vec![0.0; idx.len()];
    for (&t, snap) in traj.times.iter().zip(&traj.snapshots) {
        let du = derivative(snap, l);
        let u: Vec<f64> = idx.iter().map(|&j| du.values()[j]).collect();
        let chi: Vec<f64> = xs.iter().map(|&x| chi_derivative(x, t, lu, &ps.params)).collect();
        let v: Vec<f64> = if needs_v {
            xs.iter().map(|&x| v_profile_derivative(x, t, lu, ps)).collect()
        } else {
            Vec::new()
        };
        let z: Option<Vec<f64>> = if needs_z && t > 0.0 {
            Some(z_derivative_many(&xs, t, lu, ps)?)
        } else {
            None
        };
        for series in out.iter_mut() {
            let combo = series.combo;
            if combo.has_z() && z.is_none() {
                continue;
            }
            for (k, d) in diff.iter_mut().enumerate() {
                let mut phi = 0.0;
                if combo.has_chi() {
                    phi += chi[k];
                }
                if combo.has_v() {
                    phi += v[k];
                }
                if let (true, Some(z)) = (combo.has_z(), &z) {
                    phi += z[k];
                }
                *d = u[k] - phi;
            }
            series.times.push(t);
            series.values.push(discrete_norm(&diff, grid.dx(), series.norm));
        }
    }
    Ok(out)
}

/// Fitted `value ~ amplitude (1+t)^exponent log(1+t)^log_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub log_power: u32,
    pub amplitude: f64,
    pub residual_rms: f64,
    pub window: [f64; 2],
    pub samples: usize,
    pub theil_sen_exponent: f64,
    pub theil_sen_amplitude: f64,
}

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 8;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of pairwise slopes and the matching median intercept.
pub fn theil_sen(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut slopes = Vec::with_capacity(x.len() * x.len() / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[j] != x[i] {
                slopes.push((y[j] - y[i]) / (x[j] - x[i]));
            }
        }
    }
    let slope = median(&mut slopes);
    let mut intercepts: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - slope * a).collect();
    (slope, median(&mut intercepts))
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, rms residual)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

fn window_samples(es: &ErrorSeries, window: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
    es.times
        .iter()
        .zip(&es.values)
        .filter(|(t, _)| **t >= window[0] && **t <= window[1])
        .map(|(&t, &v)| (t, v))
        .unzip()
}

/// Fits the decay exponent on `window`, optionally dividing out one power of
/// `log(1+t)` first.
pub fn fit_rate(es: &ErrorSeries, window: [f64; 2], log_power: u32) -> Result<RateFit> {
    if log_power > 1 {
        return Err(Error::Parameter(format!("log power must be 0 or 1, got {log_power}")));
    }
    let (t, v) = window_samples(es, window);
    if t.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateWindow(format!(
            "{} samples in [{}, {}], need at least {MIN_FIT_SAMPLES}",
            t.len(),
            window[0],
            window[1]
        )));
    }
    if let Some(bad) = v.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateWindow(format!(
            "nonpositive or non-finite value {bad} in the fit window"
        )));
    }
    if t[0] <= 0.0 && log_power == 1 {
        return Err(Error::DegenerateWindow("log-corrected fit needs t > 0".into()));
    }
    let x: Vec<f64> = t.iter().map(|t| t.ln_1p()).collect();
    let y: Vec<f64> = t
        .iter()
        .zip(&v)
        .map(|(t, v)| v.ln() - log_power as f64 * t.ln_1p().ln())
        .collect();
    let (slope, intercept, rms) = least_squares(&x, &y);
    let (ts_slope, ts_intercept) = theil_sen(&x, &y);
    Ok(RateFit {
        exponent: slope,
        log_power,
        amplitude: intercept.exp(),
        residual_rms: rms,
        window,
        samples: t.len(),
        theil_sen_exponent: ts_slope,
        theil_sen_amplitude: ts_intercept.exp(),
    })
}

/// Scaling `(1+t)^power / log(1+t)^log_power` applied before a band test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub power: f64,
    pub log_power: u32,
}

impl Scaling {
    pub fn apply(&self, t: f64, v: f64) -> f64 {
        v * (1.0 + t).powf(self.power) / t.ln_1p().powi(self.log_power as i32)
    }
}

/// Boundedness diagnostics for a scaled series on a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub scaling: Scaling,
    pub window: [f64; 2],
    pub ratio: f64,
    /// Theil–Sen slope of the log of the scaled series against `log(1+t)`.
    pub slope: f64,
    pub samples: usize,
}

pub fn band_stats(es: &ErrorSeries, scaling: Scaling, window: [f64; 2]) -> Result<BandStats> {
    let (t, v) = window_samples(es, window);
    if t.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateWindow(format!(
            "{} samples in [{}, {}], need at least {MIN_FIT_SAMPLES}",
            t.len(),
            window[0],
            window[1]
        )));
    }
    let scaled: Vec<f64> = t.iter().zip(&v).map(|(&t, &v)| scaling.apply(t, v)).collect();
    if scaled.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::DegenerateWindow(
            "scaled series has nonpositive or non-finite entries".into(),
        ));
    }
    let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let x: Vec<f64> = t.iter().map(|t| t.ln_1p()).collect();
    let y: Vec<f64> = scaled.iter().map(|s| s.ln()).collect();
    let (slope, _) = theil_sen(&x, &y);
    Ok(BandStats {
        scaling,
        window,
        ratio: hi / lo,
        slope,
        samples: t.len(),
    })
}

/// Exponent change when the window is shrunk by 10% (in `log t`) at both ends.
pub fn window_stability(es: &ErrorSeries, window: [f64; 2], log_power: u32) -> Result<f64> {
    let full = fit_rate(es, window, log_power)?;
    let (a, b) = (window[0].ln(), window[1].ln());
    let shrunk = [(a + 0.1 * (b - a)).exp(), (b - 0.1 * (b - a)).exp()];
    let inner = fit_rate(es, shrunk, log_power)?;
    Ok((full.exponent - inner.exponent).abs())
}

/// Earliest sample time `t0` such that the band test passes on `[t0, t_max]`.
pub fn band_onset(
    es: &ErrorSeries,
    scaling: Scaling,
    t_max: f64,
    max_ratio: f64,
    max_abs_slope: f64,
) -> Option<f64> {
    es.times
        .iter()
        .filter(|&&t| t > 0.0 && t < t_max)
        .find(|&&t0| {
            band_stats(es, scaling, [t0, t_max])
                .map(|b| b.ratio <= max_ratio && b.slope.abs() <= max_abs_slope)
                .unwrap_or(false)
        })
        .copied()
}

/// Outcome of one report check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    Degenerate,
}

/// A numbered claim with the numbers that decided it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub name: String,
    pub status: CheckStatus,
    pub combo: ProfileCombo,
    pub order: u32,
    pub window: [f64; 2],
    pub criterion: String,
    pub band: Option<BandStats>,
    pub note: Option<String>,
}

/// Band and slope tolerances of the optimal-rate checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTolerances {
    pub max_band_ratio: f64,
    pub max_band_slope: f64,
    /// Required decay of a scaled remainder (`slope <= -this`).
    pub strict_decay: f64,
    /// Allowed growth of a scaled remainder that must stay bounded.
    pub bounded_growth: f64,
}

impl Default for RateTolerances {
    fn default() -> Self {
        Self {
            max_band_ratio: 10.0,
            max_band_slope: 0.1,
            strict_decay: 0.05,
            bounded_growth: 0.05,
        }
    }
}

/// Hypotheses of the optimal-rate statement, as evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub mu0: Option<f64>,
    pub mu1: f64,
    pub kappa: f64,
    pub mass: f64,
    pub satisfied: bool,
    pub reason: Option<String>,
}

pub fn hypotheses(ps: &ProfileSet) -> Hypotheses {
    let p = &ps.params;
    let mut reasons = Vec::new();
    if p.mass == 0.0 {
        reasons.push("M = 0".to_string());
    }
    if p.alpha < 2.0 {
        if ps.mu0.is_none_or(|m| m == 0.0) {
            reasons.push("mu0 = 0".to_string());
        }
    } else {
        if ps.mu1 == 0.0 {
            reasons.push("mu1 = 0".to_string());
        }
        if ps.kappa == 0.0 {
            reasons.push("kappa = 0".to_string());
        }
    }
    Hypotheses {
        mu0: ps.mu0,
        mu1: ps.mu1,
        kappa: ps.kappa,
        mass: p.mass,
        satisfied: reasons.is_empty(),
        reason: if reasons.is_empty() {
            None
        } else {
            Some(reasons.join(", "))
        },
    }
}

/// Strict form of [`hypotheses`]: an error when they fail.
pub fn ensure_hypotheses(ps: &ProfileSet) -> Result<()> {
    let h = hypotheses(ps);
    match h.reason {
        Some(r) => Err(Error::Hypothesis(r)),
        None => Ok(()),
    }
}

/// Results of the optimal-rate analysis of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRateReport {
    pub hypotheses: Hypotheses,
    pub tolerances: RateTolerances,
    pub checks: Vec<RateCheck>,
    /// Earliest window start for which the first-order band test passes.
    pub band_onset: Option<f64>,
}

fn band_check(
    name: &str,
    es: &ErrorSeries,
    scaling: Scaling,
    window: [f64; 2],
    criterion: String,
    decide: impl Fn(&BandStats) -> bool,
) -> RateCheck {
    let (status, band, note) = match band_stats(es, scaling, window) {
        Ok(b) => (
            if decide(&b) {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            Some(b),
            None,
        ),
        Err(e) => (CheckStatus::Degenerate, None, Some(e.to_string())),
    };
    RateCheck {
        name: name.to_string(),
        status,
        combo: es.combo,
        order: es.order,
        window,
        criterion,
        band,
        note,
    }
}

/// Optimal-rate and second-profile checks in the sup norm for derivative
/// order `l` on `window`.
pub fn optimal_rate_report(
    traj: &Trajectory,
    ps: &ProfileSet,
    l: u32,
    window: [f64; 2],
    tol: &RateTolerances,
) -> Result<OptimalRateReport> {
    let p = &ps.params;
    let hyp = hypotheses(ps);
    let half_l = 0.5 * l as f64;
    let chi_series = error_series(traj, ProfileCombo::Chi, l, Norm::Linf, ps)?;
    let mut checks = Vec::new();

    let (first_scaling, second_combo, second_scaling, second_decides_decay) = if p.alpha < 2.0 {
        let s = Scaling {
            power: 0.5 * p.alpha + half_l,
            log_power: 0,
        };
        (s, ProfileCombo::ChiZ, s, true)
    } else if p.alpha == 2.0 {
        let s = Scaling {
            power: 1.0 + half_l,
            log_power: 1,
        };
        (s, ProfileCombo::ChiZV, s, true)
    } else {
        (
            Scaling {
                power: 1.0 + half_l,
                log_power: 1,
            },
            ProfileCombo::ChiV,
            Scaling {
                power: 1.0 + half_l,
                log_power: 0,
            },
            false,
        )
    };

    let mut first = band_check(
        "optimal_rate_band",
        &chi_series,
        first_scaling,
        window,
        format!(
            "ratio <= {} and |slope| <= {}",
            tol.max_band_ratio, tol.max_band_slope
        ),
        |b| b.ratio <= tol.max_band_ratio && b.slope.abs() <= tol.max_band_slope,
    );
    if !hyp.satisfied {
        first.status = CheckStatus::NotApplicable;
        first.note = hyp.reason.clone();
    }
    checks.push(first);

    let second_series = error_series(traj, second_combo, l, Norm::Linf, ps)?;
    let second = if second_decides_decay {
        band_check(
            "second_profile_decay",
            &second_series,
            second_scaling,
            window,
            format!("slope <= -{}", tol.strict_decay),
            |b| b.slope <= -tol.strict_decay,
        )
    } else {
        band_check(
            "second_profile_bounded",
            &second_series,
            second_scaling,
            window,
            format!("slope <= {}", tol.bounded_growth),
            |b| b.slope <= tol.bounded_growth,
        )
    };
    checks.push(second);

    let band_onset = if hyp.satisfied {
        band_onset(
            &chi_series,
            first_scaling,
            window[1],
            tol.max_band_ratio,
            tol.max_band_slope,
        )
    } else {
        None
    };
    Ok(OptimalRateReport {
        hypotheses: hyp,
        tolerances: *tol,
        checks,
        band_onset,
    })
}
