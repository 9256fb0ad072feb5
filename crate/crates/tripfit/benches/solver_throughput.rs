//! Throughput of the two hot paths: value solves (one factorization,
//! many destinations) and sampled mixed likelihoods (data-parallel over
//! observations). Run once with the default features and once with
//! `--no-default-features` to compare the parallel core against the
//! sequential fallback; the measurement names carry the active mode.

use criterion::{criterion_group, criterion_main, Criterion};

use tripfit::choice::ChoiceParams;
use tripfit::data::{simulate_trips, strip_paths, SimulationSpec};
use tripfit::mixture::{mixed_loglik, Model, TimeDensity};
use tripfit::network::{project_turns, synthetic_grid};

const MODE: &str = if cfg!(feature = "parallel") {
    "parallel"
} else {
    "sequential"
};

fn bench_value_solve(c: &mut Criterion) {
    let (net, t_true) = synthetic_grid(10, 10, 600.0).unwrap();
    let graph = project_turns(&net);
    let params = ChoiceParams::new([-2.0, -2.0, 0.0, -2.0, -5.0]);
    let dests: Vec<usize> = (0..net.n_nodes()).step_by(5).collect();
    c.bench_function(&format!("value_solve_20_dests_{MODE}"), |b| {
        b.iter(|| {
            Model::build(
                &graph,
                t_true.clone(),
                params,
                TimeDensity::Point,
                &dests,
            )
            .unwrap()
        })
    });
}

fn bench_mixed_loglik(c: &mut Criterion) {
    let (net, t_true) = synthetic_grid(10, 10, 600.0).unwrap();
    let spec = SimulationSpec {
        total_trips: Some(256),
        seed: 1,
        ..SimulationSpec::default()
    };
    let set = strip_paths(&simulate_trips(&net, &t_true, &spec).unwrap());
    let od = set.od();
    let graph = project_turns(&net);
    let model = Model::build(
        &graph,
        t_true.clone(),
        ChoiceParams::new([-2.0, -2.0, 0.0, -2.0, -5.0]),
        TimeDensity::smsle(5.0).unwrap(),
        &od.all_destinations(),
    )
    .unwrap();
    c.bench_function(&format!("mixed_loglik_256_obs_{MODE}"), |b| {
        b.iter(|| mixed_loglik(&model, &od, &set.observations, 50, 9).unwrap())
    });
}

criterion_group!(benches, bench_value_solve, bench_mixed_loglik);
criterion_main!(benches);
