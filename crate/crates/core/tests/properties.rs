//! Randomized invariants of the grid, the linear semigroup, the profiles and
//! the rate fits.

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bbmb::asymptotics::{fit_rate, ErrorSeries, ProfileCombo};
use bbmb::grid::{derivative, from_spectral, lp_norm, to_spectral};
use bbmb::profiles::{chi, z_eval};
use bbmb::semigroup::{g_apply, helmholtz_inv, t_apply};
use bbmb::{Field, GridSpec, ModelParams, Norm, ProfileSet};

/// Smooth, well resolved random field: a sum of a few Gaussian bumps.
fn bumps(grid: GridSpec, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.half_width();
    let pieces: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.3 * l..0.3 * l),
                rng.gen_range(1.0..3.0),
            )
        })
        .collect();
    Field::from_fn(grid, |x| {
        pieces
            .iter()
            .map(|(a, c, w)| a * (-((x - c) / w).powi(2)).exp())
            .sum()
    })
}

fn grid() -> GridSpec {
    GridSpec::new(32.0, 256).unwrap()
}

fn params(gamma: f64) -> ModelParams {
    ModelParams::new(0.0, gamma, 1.5, 0.0).unwrap()
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).unwrap().max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_round_trip_and_parseval(seed in any::<u64>()) {
        let f = bumps(grid(), seed);
        let back = from_spectral(&to_spectral(&f));
        prop_assert!(max_diff(&f, &back) < 1e-13 * (1.0 + f.max_abs()));
        let s = to_spectral(&f);
        let n = grid().n_points() as f64;
        let spectral: f64 = s.coefficients().iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
        let physical: f64 = f.values().iter().map(|v| v * v).sum();
        prop_assert!((spectral - physical).abs() <= 1e-11 * (1.0 + physical));
    }

    #[test]
    fn derivatives_compose(seed in any::<u64>(), a in 0u32..3, b in 0u32..3) {
        let f = bumps(grid(), seed);
        let lhs = derivative(&derivative(&f, a), b);
        let rhs = derivative(&f, a + b);
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn norms_interpolate_on_a_finite_box(seed in any::<u64>()) {
        let f = bumps(grid(), seed);
        let (l1, l2, linf) = (lp_norm(&f, Norm::L1), lp_norm(&f, Norm::L2), lp_norm(&f, Norm::Linf));
        let width = 2.0 * grid().half_width();
        prop_assert!(l2 * l2 <= l1 * linf * (1.0 + 1e-12));
        prop_assert!(l1 <= width.sqrt() * l2 * (1.0 + 1e-12));
        prop_assert!(l2 <= width.sqrt() * linf * (1.0 + 1e-12));
    }

    #[test]
    fn linear_semigroup_composes(seed in any::<u64>(), s in 0.1f64..5.0, t in 0.1f64..5.0, gamma in -2.0f64..2.0) {
        let p = params(gamma);
        let f = bumps(grid(), seed);
        let twice = t_apply(&t_apply(&f, s, &p).unwrap(), t, &p).unwrap();
        let once = t_apply(&f, s + t, &p).unwrap();
        prop_assert!(max_diff(&twice, &once) < 1e-12 * (1.0 + f.max_abs()));
        prop_assert!((once.integral() - f.integral()).abs() < 1e-12 * (1.0 + f.max_abs()));
    }

    #[test]
    fn linear_semigroup_commutes(seed in any::<u64>(), t in 0.1f64..5.0, gamma in -2.0f64..2.0) {
        let p = params(gamma);
        let f = bumps(grid(), seed);
        let scale = 1.0 + f.max_abs();
        let a = derivative(&t_apply(&f, t, &p).unwrap(), 1);
        let b = t_apply(&derivative(&f, 1), t, &p).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-11 * scale);
        let a = g_apply(&t_apply(&f, t, &p).unwrap(), t).unwrap();
        let b = t_apply(&g_apply(&f, t).unwrap(), t, &p).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-12 * scale);
        let a = helmholtz_inv(&t_apply(&f, t, &p).unwrap());
        let b = t_apply(&helmholtz_inv(&f), t, &p).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-12 * scale);
    }

    #[test]
    fn power_laws_are_fitted_exactly(
        exponent in -3.0f64..-0.1,
        amplitude in 1e-3f64..1e3,
        log_power in 0u32..2,
    ) {
        let times: Vec<f64> = (0..20).map(|k| 10f64.powf(k as f64 / 19.0 * 3.0)).collect();
        let values = times
            .iter()
            .map(|t| amplitude * (1.0 + t).powf(exponent) * t.ln_1p().powi(log_power as i32))
            .collect();
        let es = ErrorSeries {
            combo: ProfileCombo::Chi,
            norm: Norm::Linf,
            order: 0,
            measure_half_width: 1.0,
            times,
            values,
        };
        let fit = fit_rate(&es, [1.0, 1000.0], log_power).unwrap();
        prop_assert!((fit.exponent - exponent).abs() < 1e-10);
        prop_assert!((fit.theil_sen_exponent - exponent).abs() < 1e-10);
        prop_assert!((fit.amplitude / amplitude - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diffusion_wave_carries_its_mass(
        beta in -2.0f64..2.0,
        mass in -0.8f64..0.8,
        t in 0.5f64..20.0,
    ) {
        let p = ModelParams::new(beta, 1.0, 1.5, mass).unwrap();
        let g = GridSpec::new(200.0, 4096).unwrap();
        let f = Field::from_fn(g, |x| chi(x, t, &p));
        prop_assert!((f.integral() - mass).abs() < 1e-9);
    }

    #[test]
    fn second_profile_is_linear_in_the_tails(
        c_plus in -2.0f64..2.0,
        c_minus in -2.0f64..2.0,
        lambda in -3.0f64..3.0,
        x in -20.0f64..20.0,
        t in 0.5f64..50.0,
    ) {
        let p = ModelParams::new(1.0, 1.0, 1.5, 0.3).unwrap();
        let a = ProfileSet::with_tails(p, c_plus, 0.0).unwrap();
        let b = ProfileSet::with_tails(p, 0.0, c_minus).unwrap();
        let ab = ProfileSet::with_tails(p, c_plus, c_minus).unwrap();
        let sum = z_eval(x, t, &a).unwrap() + z_eval(x, t, &b).unwrap();
        let whole = z_eval(x, t, &ab).unwrap();
        prop_assert!((sum - whole).abs() < 1e-12 * (1.0 + whole.abs()));
        let scaled = z_eval(x, t, &ab.scaled_tails(lambda).unwrap()).unwrap();
        prop_assert!((scaled - lambda * whole).abs() < 1e-12 * (1.0 + scaled.abs()));
    }
}

#[test]
fn helmholtz_inverse_inverts() {
    let g = grid();
    let f = bumps(g, 7);
    let u = helmholtz_inv(&f);
    let back = u.sub(&derivative(&u, 2)).unwrap();
    assert_relative_eq!(max_diff(&back, &f), 0.0, epsilon = 1e-12);
}
