//! Scenario parsing, initial-data construction, bundles and sweeps.

use std::fs;
use std::path::Path;

use bbmb::harness::{
    geometric_times, make_initial_data, run_experiment, second_aux_report, sweep, DataKind,
    Scenario, ScenarioConfig,
};
use bbmb::profiles::{extract_c_alpha_with_spread, r0_eval};
use bbmb::{Error, GridSpec, ModelParams, Norm};

fn config(kind: DataKind) -> ScenarioConfig {
    ScenarioConfig {
        name: "small".into(),
        beta: 1.0,
        gamma: 1.0,
        alpha: 1.5,
        mass: 0.3,
        data_kind: kind,
        amplitude: 0.1,
        c_plus: 1.0,
        c_minus: -1.0,
        half_width: 64.0,
        n_points: 512,
        t_samples: Some(geometric_times(1.0, 64.0, 24)),
        norms: vec![Norm::Linf, Norm::L2],
        derivative_orders: vec![0],
    }
}

#[test]
fn config_keys_are_exact() {
    let text = r#"{
        "name": "x", "beta": 1.0, "gamma": 1.0, "alpha": 1.5, "mass": 0.3,
        "data_kind": "prescribed_r0", "amplitude": 0.0, "c_plus": 1.0, "c_minus": -1.0,
        "L": 400.0, "N": 16384, "t_samples": [1.0, 10.0], "norms": ["linf", "l2"],
        "derivative_orders": [0, 1]
    }"#;
    let cfg = ScenarioConfig::from_json(text).unwrap();
    assert_eq!(cfg.data_kind, DataKind::PrescribedR0);
    assert_eq!(cfg.n_points, 16384);

    let extra = text.replace("\"name\"", "\"seed\": 3, \"name\"");
    let err = ScenarioConfig::from_json(&extra).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(err.exit_code(), 2);

    let table = text.replace("\"prescribed_r0\"", r#"{"custom_table": "u0.csv"}"#);
    let cfg = ScenarioConfig::from_json(&table).unwrap();
    assert_eq!(cfg.data_kind, DataKind::CustomTable("u0.csv".into()));
}

#[test]
fn default_samples_are_geometric_to_the_horizon() {
    let mut cfg = config(DataKind::Gaussian);
    cfg.t_samples = None;
    let s = Scenario::from_config(&cfg).unwrap();
    assert_eq!(s.t_samples.len(), 32);
    assert_eq!(s.t_samples[0], 1.0);
    assert_eq!(*s.t_samples.last().unwrap(), 64.0);
    let ratios: Vec<f64> = s.t_samples.windows(2).map(|w| w[1] / w[0]).collect();
    for r in &ratios {
        assert!((r - ratios[0]).abs() < 1e-12);
    }
}

#[test]
fn samples_past_the_horizon_are_refused() {
    let mut cfg = config(DataKind::Gaussian);
    cfg.t_samples = Some(vec![1.0, 65.0]);
    let err = Scenario::from_config(&cfg).unwrap_err();
    assert!(matches!(err, Error::DomainValidity { limit, .. } if limit == 64.0));
}

#[test]
fn hash_depends_on_content_only() {
    let a = Scenario::from_config(&config(DataKind::Gaussian)).unwrap();
    let b = Scenario::from_config(&config(DataKind::Gaussian)).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 16);
    let mut cfg = config(DataKind::Gaussian);
    cfg.mass = 0.31;
    assert_ne!(Scenario::from_config(&cfg).unwrap().hash(), a.hash());
}

#[test]
fn prescribed_tails_round_trip() {
    let mut cfg = config(DataKind::PrescribedR0);
    cfg.half_width = 400.0;
    cfg.n_points = 8192;
    cfg.c_plus = 1.0;
    cfg.c_minus = 1.0;
    cfg.t_samples = Some(vec![1.0]);
    let s = Scenario::from_config(&cfg).unwrap();
    let data = make_initial_data(&s).unwrap();
    assert!((data.field.integral() - 0.3).abs() < 1e-8);
    let r0 = r0_eval(&data.field, &s.params).unwrap();
    let est = extract_c_alpha_with_spread(&r0, &s.params);
    assert!((est.c_plus - 1.0).abs() < 0.02, "{est:?}");
    assert!((est.c_minus - 1.0).abs() < 0.02, "{est:?}");
}

#[test]
fn prescribed_tails_need_room() {
    let mut cfg = config(DataKind::PrescribedR0);
    cfg.half_width = 16.0;
    cfg.n_points = 256;
    cfg.t_samples = Some(vec![1.0]);
    let s = Scenario::from_config(&cfg).unwrap();
    assert!(matches!(make_initial_data(&s), Err(Error::Parameter(_))));
}

#[test]
fn zero_gaussian_is_degenerate_unless_massless() {
    let mut cfg = config(DataKind::Gaussian);
    cfg.amplitude = 0.0;
    let s = Scenario::from_config(&cfg).unwrap();
    assert!(matches!(make_initial_data(&s), Err(Error::MassMismatch(_))));
    cfg.mass = 0.0;
    let s = Scenario::from_config(&cfg).unwrap();
    let data = make_initial_data(&s).unwrap();
    assert_eq!(data.field.max_abs(), 0.0);
}

#[test]
fn gaussian_data_has_the_requested_mass() {
    let s = Scenario::from_config(&config(DataKind::Gaussian)).unwrap();
    let data = make_initial_data(&s).unwrap();
    assert!((data.field.integral() - 0.3).abs() < 1e-8);
    assert!(data.mass_correction.abs() < 1e-12);
}

#[test]
fn power_tail_respects_its_reported_bound() {
    let mut cfg = config(DataKind::PowerTail);
    cfg.amplitude = 0.2;
    let s = Scenario::from_config(&cfg).unwrap();
    let data = make_initial_data(&s).unwrap();
    assert!((data.field.integral() - 0.3).abs() < 1e-8);
    let g = s.grid;
    for (j, u) in data.field.values().iter().enumerate() {
        let x = g.x(j);
        if x.abs() <= 0.8 * g.half_width() {
            assert!(u.abs() <= data.tail_constant * (1.0 + x.abs()).powf(-1.5) * (1.0 + 1e-12));
        }
    }
    assert!(data.tail_constant > 0.0 && data.tail_constant.is_finite());
}

#[test]
fn custom_table_is_interpolated_and_mass_corrected() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,u\n");
    for k in 0..=200 {
        let x = -20.0 + 0.2 * k as f64;
        csv.push_str(&format!("{x},{}\n", 0.1 * (-x * x / 4.0).exp()));
    }
    fs::write(dir.path().join("u0.csv"), csv).unwrap();
    let mut cfg = config(DataKind::CustomTable("u0.csv".into()));
    cfg.t_samples = Some(vec![1.0]);
    let path = dir.path().join("s.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let s = Scenario::load(&path).unwrap();
    let data = make_initial_data(&s).unwrap();
    assert!((data.field.integral() - 0.3).abs() < 1e-8);
    // the table has mass 0.1 sqrt(4 pi) ~ 0.354, so a correction was needed
    assert!(data.mass_correction < -0.05);

    let missing = DataKind::CustomTable(dir.path().join("nope.csv"));
    let s = Scenario::from_config(&config(missing)).unwrap();
    assert_eq!(make_initial_data(&s).unwrap_err().exit_code(), 2);
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn bundles_are_complete_and_reproducible() {
    let out = tempfile::tempdir().unwrap();
    let s = Scenario::from_config(&config(DataKind::PrescribedR0)).unwrap();
    let b = run_experiment(&s, out.path()).unwrap();
    assert_eq!(b.dir, out.path().join(s.hash()));
    assert!(b.dir.join("series/chi_linf_l0.csv").exists());
    assert!(b.dir.join("series/chi_Z_l2_l0.csv").exists());
    assert!(b.dir.join("snapshots/t000.csv").exists());
    assert!(b.dir.join("snapshots/times.csv").exists());
    for c in &b.report.checks {
        assert!(!c.criterion.is_empty());
    }
    let first = read(&b.dir, "report.json");

    let again = tempfile::tempdir().unwrap();
    let b2 = run_experiment(&s, again.path()).unwrap();
    assert_eq!(first, read(&b2.dir, "report.json"));
    assert_eq!(
        read(&b.dir, "series/chi_Z_linf_l0.csv"),
        read(&b2.dir, "series/chi_Z_linf_l0.csv")
    );
}

#[test]
fn linear_scenario_cross_checks_the_semigroup() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(DataKind::PowerTail);
    cfg.beta = 0.0;
    let s = Scenario::from_config(&cfg).unwrap();
    let b = run_experiment(&s, out.path()).unwrap();
    let c = b
        .report
        .checks
        .iter()
        .find(|c| c.name == "solver_semigroup_cross_check")
        .unwrap();
    assert!(c.passed());
    assert!(c.value.unwrap() < 1e-10);
}

#[test]
fn failing_stage_is_named() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(DataKind::PowerTail);
    cfg.amplitude = 50.0;
    let s = Scenario::from_config(&cfg).unwrap();
    match run_experiment(&s, out.path()) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "solve");
            assert!(matches!(*source, Error::Parameter(_)));
        }
        other => panic!("expected a staged error, got {other:?}"),
    }
}

#[test]
fn sweep_runs_every_matching_config() {
    let dir = tempfile::tempdir().unwrap();
    for (k, mass) in [0.2, 0.3].iter().enumerate() {
        let mut cfg = config(DataKind::Gaussian);
        cfg.mass = *mass;
        cfg.name = format!("g{k}");
        fs::write(
            dir.path().join(format!("g{k}.json")),
            serde_json::to_string(&cfg).unwrap(),
        )
        .unwrap();
    }
    let out = dir.path().join("out");
    let pattern = format!("{}/g*.json", dir.path().display());
    let entries = sweep(&pattern, 2, &out).unwrap();
    assert_eq!(entries.len(), 2);
    for e in &entries {
        let (bundle, _) = e.outcome.as_ref().unwrap();
        assert!(bundle.join("report.json").exists());
    }
    assert!(sweep(&format!("{}/none*.json", dir.path().display()), 1, &out).is_err());
}

#[test]
fn aux_profile_comparison_runs() {
    let p = ModelParams::new(1.0, 1.0, 3.0, 0.5).unwrap();
    let g = GridSpec::new(64.0, 512).unwrap();
    let r = second_aux_report(g, p, &geometric_times(1.0, 64.0, 16), &[0], [2.0, 64.0]).unwrap();
    assert_eq!(r.series.len(), 1);
    assert!(r.series[0].values.iter().all(|v| v.is_finite() && *v >= 0.0));
    let big = ModelParams::new(1.0, 1.0, 3.0, 1.5).unwrap();
    assert!(matches!(
        second_aux_report(g, big, &[1.0], &[0], [1.0, 1.0]),
        Err(Error::Stage { .. })
    ));
}
