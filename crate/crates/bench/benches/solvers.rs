use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ilqgame::game::{lq_approximation, random_state, LinearQuadraticGame};
use ilqgame::lq::{solve_feedback_lq, solve_openloop_lq};
use ilqgame::solver::zero_inputs;
use ilqgame::{DynamicGame, RacingScenario, SolverMode};

fn lq_solvers(c: &mut Criterion) {
    let lq = LinearQuadraticGame::random(1, 2, 12, 2, 50).model;
    let dx0 = random_state(1, 12);
    c.bench_function("feedback_lq/N2_n12_K50", |b| {
        b.iter(|| solve_feedback_lq(black_box(&lq)).unwrap())
    });
    c.bench_function("openloop_lq/N2_n12_K50", |b| {
        b.iter(|| solve_openloop_lq(black_box(&lq), black_box(&dx0)).unwrap())
    });
}

fn racing_approximation(c: &mut Criterion) {
    let sc = RacingScenario::fig1();
    let game = sc.game();
    let x0 = sc.initial_state().to_dvector();
    let inputs = zero_inputs(&game.input_dims(), sc.horizon);
    let states = ilqgame::game::rollout(&game, &x0, &inputs).unwrap();
    c.bench_function("lq_approximation/fig1", |b| {
        b.iter(|| lq_approximation(&game, black_box(&states), black_box(&inputs)).unwrap())
    });
}

fn fig1_solves(c: &mut Criterion) {
    let sc = RacingScenario::fig1();
    let mut group = c.benchmark_group("fig1_solve");
    group.sample_size(10);
    for mode in [
        SolverMode::Feedback,
        SolverMode::OpenLoop,
        SolverMode::IlqrBaseline,
    ] {
        group.bench_function(mode.as_str(), |b| {
            b.iter(|| sc.solve_with(&sc.solver.with_mode(mode)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lq_solvers, racing_approximation, fig1_solves);
criterion_main!(benches);
