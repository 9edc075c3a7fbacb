use blebsheet_core::config::{InitialCondition, ScenarioConfig, ScenarioKind};
use blebsheet_core::dynamics::Scheme;
use blebsheet_core::model::{pressure_pulse, PressureDescriptor};
use blebsheet_core::scenario::sweep_point;
use blebsheet_core::{build_grid, parse_config_str, run_scenario, simulate};
use proptest::prelude::*;

fn short_run(n: usize, steps: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::defaults(ScenarioKind::Disruption);
    c.n = n;
    c.final_time = steps as f64 * c.tau;
    c.snapshot_steps = vec![];
    c
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, .. ProptestConfig::default() })]

    #[test]
    fn mass_is_conserved_for_random_holes(
        cx in 0.2f64..0.8, cy in 0.2f64..0.8, radius in 0.1f64..0.4, rho_hat in 0.5f64..20.0,
        peak in 0.0f64..400.0, implicit in any::<bool>(),
    ) {
        let mut c = short_run(10, 8);
        c.initial = InitialCondition::Disruption { rho_hat, center: [cx, cy], radius };
        c.pressure = PressureDescriptor::Pulse { peak, center: [0.5, 0.5], radius: 0.4 };
        c.params.ripping_scale = 1e-5;
        c.scheme = if implicit { Scheme::FullyImplicit } else { Scheme::ImplicitRipping };
        let out = simulate(&c).unwrap();
        prop_assert!(out.diagnostics.max_mass_drift() <= 1e-10);
        for r in &out.diagnostics.records {
            prop_assert!(r.min_rho_a >= -1e-10 && r.min_rho_i >= -1e-10);
        }
    }

    #[test]
    fn subcritical_height_is_linear_in_peak(peak in 1.0f64..80.0) {
        let mut c = ScenarioConfig::defaults(ScenarioKind::PressureSweep);
        c.n = 10;
        let grid = build_grid(c.n).unwrap();
        let a = sweep_point(&c, &grid, peak).unwrap();
        let b = sweep_point(&c, &grid, 2.0 * peak).unwrap();
        prop_assert!(b < c.params.critical_height);
        prop_assert!((b / a - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn configs_round_trip_through_json(n in 2usize..200, tau in 1e-8f64..1e-4, workers in 1usize..16) {
        let text = format!(r#"{{"scenario":"stationary_state","n":{n},"tau":{tau:e},"final_time":1e-3,"workers":{workers}}}"#);
        let c = parse_config_str(&text).unwrap();
        let again = parse_config_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(c, again);
    }
}

#[test]
fn pulse_peak_sits_at_the_centre() {
    let grid = build_grid(8).unwrap();
    let p = pressure_pulse(&grid, 250.0, (0.5, 0.5), 0.4);
    assert_eq!(p.max(), 250.0);
}

#[test]
fn gamma_and_geometry_scenarios_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&ScenarioConfig::defaults(ScenarioKind::GammaLimit), dir.path()).unwrap();
    assert!(report.summary["el_residual"].as_f64().unwrap() <= 1e-8);
    let text = std::fs::read_to_string(dir.path().join("gamma.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("theta,J_theta,J0,gap,minimizer_distance\n"));

    let mut geo = ScenarioConfig::defaults(ScenarioKind::GeometryVerify);
    geo.geometry.radii = vec![1.0];
    run_scenario(&geo, dir.path()).unwrap();
    assert!(dir.path().join("geometry.csv").exists());
}
