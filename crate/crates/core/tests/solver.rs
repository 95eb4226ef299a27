mod common;

use common::*;
use ilqgame::game::LinearQuadraticGame;
use ilqgame::lq::{solve_feedback_lq, StrategyMode, StrategySet};
use ilqgame::solver::{best_response_gap, forward_pass, solve, zero_inputs, GapStatus};
use ilqgame::{DynamicGame, Error, GameTrajectory, RacingScenario, SolverMode, SolverSettings};
use nalgebra::{DMatrix, DVector};

fn single_player_fig1() -> RacingScenario {
    let mut sc = RacingScenario::fig1();
    sc.players.truncate(1);
    sc
}

fn zero_strategies(game: &impl DynamicGame, horizon: usize) -> StrategySet {
    let n = game.state_dim();
    StrategySet {
        mode: StrategyMode::Feedback,
        gains: (0..horizon)
            .map(|_| {
                game.input_dims()
                    .iter()
                    .map(|&m| DMatrix::from_element(m, n, 0.7))
                    .collect()
            })
            .collect(),
        feedforward: (0..horizon)
            .map(|_| {
                game.input_dims()
                    .iter()
                    .map(|&m| DVector::zeros(m))
                    .collect()
            })
            .collect(),
    }
}

#[test]
fn forward_pass_without_feedforward_reproduces_nominal() {
    let game = LinearQuadraticGame::random(1, 2, 3, 2, 8);
    let mut rng = rng(1);
    let inputs = (0..2)
        .map(|_| (0..8).map(|_| random_vector(&mut rng, 2, 1.0)).collect())
        .collect();
    let nominal = GameTrajectory::simulate(
        &game,
        &random_vector(&mut rng, 3, 1.0),
        inputs,
        SolverMode::Feedback,
    )
    .unwrap();
    let strategies = zero_strategies(&game, 8);
    let next = forward_pass(&game, &nominal, &strategies, 0.3).unwrap();
    assert_eq!(next.states, nominal.states);
    assert_eq!(next.inputs, nominal.inputs);

    let mut with_ff = strategies;
    with_ff.feedforward[3][1] = DVector::from_element(2, 5.0);
    let frozen = forward_pass(&game, &nominal, &with_ff, 0.0).unwrap();
    assert_eq!(frozen.states, nominal.states);
}

#[test]
fn lq_game_one_full_step_lands_on_exact_equilibrium() {
    let game = LinearQuadraticGame::random(2, 2, 4, 2, 10);
    let x0 = DVector::from_row_slice(&[1.0, -0.5, 0.25, 2.0]);
    let settings = SolverSettings {
        eta: 1.0,
        ..SolverSettings::default()
    };
    let report = solve(&game, &x0, zero_inputs(&game.input_dims(), 10), &settings).unwrap();
    assert!(report.converged);
    assert_eq!(report.iterations, 2);
    let (xs, _) = solve_feedback_lq(&game.model)
        .unwrap()
        .simulate(&game.model, &x0);
    for (a, b) in report.trajectory.states.iter().zip(&xs) {
        assert!((a - b).amax() <= 1e-9);
    }
}

#[test]
fn single_player_feedback_equals_ilqr() {
    let sc = single_player_fig1();
    let (_, fb) = sc
        .solve_with(&sc.solver.with_mode(SolverMode::Feedback))
        .unwrap();
    let (_, ilqr) = sc
        .solve_with(&sc.solver.with_mode(SolverMode::IlqrBaseline))
        .unwrap();
    assert!(fb.converged && ilqr.converged);
    assert_eq!(fb.iterations, ilqr.iterations);
    assert!(fb.trajectory.max_state_change(&ilqr.trajectory) <= 1e-10);
}

#[test]
fn converged_single_player_has_no_profitable_deviation() {
    let sc = single_player_fig1();
    let (game, report) = sc.solve().unwrap();
    let br = best_response_gap(&game, &report.trajectory, 0, &sc.solver).unwrap();
    assert_eq!(br.status, GapStatus::Verified);
    assert!(br.gap >= 0.0);
    assert!(br.relative_gap() <= 1e-4, "{br:?}");
}

#[test]
fn perturbed_inputs_leave_a_positive_gap() {
    let sc = RacingScenario::fig1();
    let (game, report) = sc.solve().unwrap();
    let mut inputs = report.trajectory.inputs.clone();
    inputs[0][10][0] += 0.5;
    let perturbed = GameTrajectory::simulate(
        &game,
        &report.trajectory.states[0],
        inputs,
        SolverMode::Feedback,
    )
    .unwrap();
    let base = best_response_gap(&game, &report.trajectory, 0, &sc.solver).unwrap();
    let bumped = best_response_gap(&game, &perturbed, 0, &sc.solver).unwrap();
    assert!(bumped.gap > 0.0);
    assert!(bumped.gap > base.gap);
}

#[test]
fn openloop_solution_is_an_input_sequence_equilibrium() {
    let sc = RacingScenario::fig1();
    let settings = SolverSettings {
        mode: SolverMode::OpenLoop,
        convergence_tol: 1e-8,
        max_iterations: 2000,
        ..sc.solver
    };
    let (game, report) = sc.solve_with(&settings).unwrap();
    assert!(report.converged);
    for i in 0..2 {
        let br = best_response_gap(&game, &report.trajectory, i, &settings).unwrap();
        assert_eq!(br.status, GapStatus::Verified);
        assert!(br.relative_gap() <= 1e-6, "player {i}: {br:?}");
    }
}

#[test]
fn solving_twice_is_bitwise_identical() {
    let sc = RacingScenario::fig1();
    let (_, a) = sc.solve().unwrap();
    let (_, b) = sc.solve().unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.history, b.history);
}

#[test]
fn history_records_every_iteration() {
    let sc = RacingScenario::fig1();
    let settings = SolverSettings {
        max_iterations: 3,
        ..sc.solver
    };
    let (_, report) = sc.solve_with(&settings).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 3);
    assert_eq!(report.history.len(), 3);
    assert_eq!(report.trajectory.iteration, 3);
}

#[test]
fn ilqr_mode_rejects_games_without_front_end() {
    let game = LinearQuadraticGame::random(3, 2, 2, 1, 4);
    let settings = SolverSettings::default().with_mode(SolverMode::IlqrBaseline);
    let err = solve(
        &game,
        &DVector::zeros(2),
        zero_inputs(&game.input_dims(), 4),
        &settings,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Invalid(_)));
}

#[test]
fn invalid_settings_are_rejected() {
    let game = LinearQuadraticGame::random(3, 1, 2, 1, 4);
    let settings = SolverSettings {
        eta: 0.0,
        convergence_tol: -1.0,
        ..SolverSettings::default()
    };
    match solve(
        &game,
        &DVector::zeros(2),
        zero_inputs(&game.input_dims(), 4),
        &settings,
    ) {
        Err(Error::Validation(errors)) => assert_eq!(errors.len(), 2),
        other => panic!("{other:?}"),
    }
}
