use blebsheet_core::config::{ScenarioConfig, ScenarioKind};
use blebsheet_core::discretization::Discretization;
use blebsheet_core::dynamics::{initial_state, Scheme, Stepper};
use blebsheet_core::geometry::{surface_functional, PerturbedSphere, SurfaceKind};
use blebsheet_core::grid::build_grid;
use blebsheet_core::linalg::{cg_solve, SolveOptions};
use blebsheet_core::model::{ModelParams, PressureField};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn elastic_cg(c: &mut Criterion) {
    let params = ModelParams::default();
    let grid = build_grid(64).unwrap();
    let disc = Discretization::new(&grid, &params);
    let a = disc.elastic.add_diagonal(&vec![params.damping / 1e-6; grid.num_interior()]);
    let b: Vec<f64> = (0..grid.num_interior()).map(|k| ((k % 17) as f64).sin()).collect();
    let opts = SolveOptions::default();
    c.bench_function("cg height system n=64", |bench| {
        bench.iter(|| cg_solve(black_box(&a), black_box(&b), &opts).unwrap())
    });
}

fn single_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("one step n=64");
    group.sample_size(20);
    let mut config = ScenarioConfig::defaults(ScenarioKind::Disruption);
    config.params.ripping_scale = 1e-5;
    let grid = build_grid(config.n).unwrap();
    let pressure = PressureField::from_descriptor(&grid, &ScenarioConfig::defaults(ScenarioKind::PressureSweep).pressure)
        .unwrap();
    for scheme in [Scheme::ExplicitRipping, Scheme::ImplicitRipping, Scheme::FullyImplicit] {
        let stepper = Stepper::new(&grid, &config.params, &pressure, scheme, config.tau, &config.solver).unwrap();
        let state = initial_state(&config, &grid).unwrap();
        group.bench_function(format!("{scheme:?}"), |bench| bench.iter(|| stepper.step(black_box(&state)).unwrap()));
    }
    group.finish();
}

fn geometry_functional(c: &mut Criterion) {
    let surf = PerturbedSphere::new(1.0, 3, 0.01, 64).unwrap();
    c.bench_function("willmore functional 64 nodes", |bench| {
        bench.iter(|| surface_functional(SurfaceKind::WillmoreInt, black_box(&surf)))
    });
}

criterion_group!(benches, elastic_cg, single_step, geometry_functional);
criterion_main!(benches);
