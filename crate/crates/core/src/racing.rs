//! The racing game: stacked point-mass vehicles coupled through their costs.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector, Vector2};

use crate::costs::{self, CostContext, CostParams};
use crate::dynamics::{self, GGDiamond, PlayerState, IDX_N, INPUT_DIM, STATE_DIM};
use crate::error::Result;
use crate::game::{self, DynamicGame};
use crate::linalg::project_psd;
use crate::lq::{QuadraticCost, TerminalCost};
use crate::solver::{
    self, embed_strategies, GameTrajectory, IterationRecord, SolveReport, SolverMode,
    SolverSettings,
};
use crate::track::Track;

#[derive(Debug, Clone, PartialEq)]
pub struct RacingPlayer {
    pub params: CostParams,
    pub gg: GGDiamond,
}

#[derive(Debug)]
pub struct RacingGame {
    pub track: Track,
    pub players: Vec<RacingPlayer>,
    pub dt: f64,
    speed_floor_hits: AtomicUsize,
}

impl Clone for RacingGame {
    fn clone(&self) -> Self {
        Self::new(self.track.clone(), self.players.clone(), self.dt)
    }
}

fn input2(u: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(u[0], u[1])
}

fn zero_input_terms(players: usize) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    (
        vec![DMatrix::zeros(INPUT_DIM, INPUT_DIM); players],
        vec![DVector::zeros(INPUT_DIM); players],
    )
}

impl RacingGame {
    pub fn new(track: Track, players: Vec<RacingPlayer>, dt: f64) -> Self {
        Self {
            track,
            players,
            dt,
            speed_floor_hits: AtomicUsize::new(0),
        }
    }

    /// Number of RK4 stage evaluations that ran into the speed floor.
    pub fn speed_floor_hits(&self) -> usize {
        self.speed_floor_hits.load(Ordering::Relaxed)
    }

    fn context(&self, i: usize) -> CostContext<'_> {
        CostContext {
            params: &self.players[i].params,
            gg: &self.players[i].gg,
            track: &self.track,
        }
    }
}

impl DynamicGame for RacingGame {
    fn state_dim(&self) -> usize {
        STATE_DIM * self.players.len()
    }

    fn input_dims(&self) -> Vec<usize> {
        vec![INPUT_DIM; self.players.len()]
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> Result<DVector<f64>> {
        let (next, floored) = dynamics::step_vector(x, u, &self.track, self.dt)?;
        if floored > 0 {
            self.speed_floor_hits.fetch_add(floored, Ordering::Relaxed);
        }
        Ok(next)
    }

    fn step_jacobians(
        &self,
        _k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        dynamics::step_jacobians(x, u, &self.track, self.dt)
    }

    fn stage_cost(&self, i: usize, _k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        costs::stage_cost(i, x, &input2(&u[i]), &self.context(i))
    }

    fn terminal_cost(&self, i: usize, x: &DVector<f64>) -> f64 {
        costs::terminal_cost(i, x, &self.players[i].params)
    }

    fn quadratize_stage(
        &self,
        i: usize,
        _k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> QuadraticCost {
        let e = costs::expand_stage(i, x, &input2(&u[i]), &self.context(i));
        let (mut input_hessians, mut input_gradients) = zero_input_terms(self.players.len());
        input_hessians[i] =
            DMatrix::from_iterator(INPUT_DIM, INPUT_DIM, e.input_hessian.iter().copied());
        input_gradients[i] = DVector::from_iterator(INPUT_DIM, e.input_gradient.iter().copied());
        QuadraticCost {
            state_hessian: e.projected_state_hessian(),
            state_gradient: e.state_gradient,
            input_hessians,
            input_gradients,
        }
    }

    fn quadratize_terminal(&self, i: usize, x: &DVector<f64>) -> TerminalCost {
        let (h, g) = costs::quadratize_terminal(i, x, &self.players[i].params);
        TerminalCost {
            state_hessian: h,
            state_gradient: g,
        }
    }
}

/// `max_k |n_k - n_0|` of player `i` in a joint racing trajectory.
pub fn lateral_excursion(trajectory: &GameTrajectory, i: usize) -> f64 {
    let idx = i * STATE_DIM + IDX_N;
    let n0 = trajectory.states[0][idx];
    trajectory
        .states
        .iter()
        .map(|x| (x[idx] - n0).abs())
        .fold(0.0, f64::max)
}

/// Constant-speed, constant-lateral-offset extrapolation of a player:
/// `V`, `n` stay at their initial values, heading and accelerations are zero
/// and progress follows `s' = V / (1 - n kappa(s))`.
pub fn constant_velocity_prediction(
    x0: &PlayerState,
    track: &Track,
    dt: f64,
    horizon: usize,
) -> Vec<PlayerState> {
    let (v, n) = (x0.v, x0.n);
    let s_rate = |s: f64| v / (1.0 - n * track.curvature_clamped(s));
    let mut out = Vec::with_capacity(horizon + 1);
    let mut s = x0.s;
    out.push(PlayerState::new(s, v, n, 0.0, 0.0, 0.0));
    for _ in 0..horizon {
        let k1 = s_rate(s);
        let k2 = s_rate(s + 0.5 * dt * k1);
        let k3 = s_rate(s + 0.5 * dt * k2);
        let k4 = s_rate(s + dt * k3);
        s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(PlayerState::new(s, v, n, 0.0, 0.0, 0.0));
    }
    out
}

/// Ego-only optimal-control problem against fixed opponent predictions.
/// The state is the ego's own six-dimensional state.
pub struct SequentialProblem<'a> {
    pub game: &'a RacingGame,
    pub ego: usize,
    /// Joint state per stage `0..=K`; the ego's slot is overwritten on use.
    pub predicted: Vec<DVector<f64>>,
}

impl SequentialProblem<'_> {
    fn joint(&self, k: usize, ego_state: &DVector<f64>) -> DVector<f64> {
        let mut x = self.predicted[k.min(self.predicted.len() - 1)].clone();
        x.rows_mut(self.ego * STATE_DIM, STATE_DIM)
            .copy_from(ego_state);
        x
    }

    fn ego_block(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let off = self.ego * STATE_DIM;
        m.view((off, off), (STATE_DIM, STATE_DIM)).into_owned()
    }

    fn ego_rows(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.ego * STATE_DIM, STATE_DIM).into_owned()
    }
}

impl DynamicGame for SequentialProblem<'_> {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn input_dims(&self) -> Vec<usize> {
        vec![INPUT_DIM]
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> Result<DVector<f64>> {
        let (next, floored) = dynamics::step_vector(x, u, &self.game.track, self.game.dt)?;
        if floored > 0 {
            self.game
                .speed_floor_hits
                .fetch_add(floored, Ordering::Relaxed);
        }
        Ok(next)
    }

    fn step_jacobians(
        &self,
        _k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        dynamics::step_jacobians(x, u, &self.game.track, self.game.dt)
    }

    fn stage_cost(&self, _i: usize, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        costs::stage_cost(
            self.ego,
            &self.joint(k, x),
            &input2(&u[0]),
            &self.game.context(self.ego),
        )
    }

    fn terminal_cost(&self, _i: usize, x: &DVector<f64>) -> f64 {
        let k = self.predicted.len() - 1;
        costs::terminal_cost(
            self.ego,
            &self.joint(k, x),
            &self.game.players[self.ego].params,
        )
    }

    fn quadratize_stage(
        &self,
        _i: usize,
        k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> QuadraticCost {
        let e = costs::expand_stage(
            self.ego,
            &self.joint(k, x),
            &input2(&u[0]),
            &self.game.context(self.ego),
        );
        QuadraticCost {
            state_hessian: project_psd(&self.ego_block(&e.state_hessian)),
            state_gradient: self.ego_rows(&e.state_gradient),
            input_hessians: vec![DMatrix::from_iterator(
                INPUT_DIM,
                INPUT_DIM,
                e.input_hessian.iter().copied(),
            )],
            input_gradients: vec![DVector::from_iterator(
                INPUT_DIM,
                e.input_gradient.iter().copied(),
            )],
        }
    }

    fn quadratize_terminal(&self, _i: usize, x: &DVector<f64>) -> TerminalCost {
        let k = self.predicted.len() - 1;
        let (h, g) = costs::quadratize_terminal(
            self.ego,
            &self.joint(k, x),
            &self.game.players[self.ego].params,
        );
        TerminalCost {
            state_hessian: self.ego_block(&h),
            state_gradient: self.ego_rows(&g),
        }
    }
}

/// Solves the racing game in any mode. In `IlqrBaseline` mode with more
/// than one player, `ego` is optimized against constant-velocity predictions
/// of everyone else; the returned trajectory holds the predictions and zero
/// inputs for the opponents.
pub fn solve_racing(
    game: &RacingGame,
    x0: &DVector<f64>,
    initial_inputs: Vec<Vec<DVector<f64>>>,
    settings: &SolverSettings,
    ego: usize,
) -> Result<SolveReport> {
    if settings.mode != SolverMode::IlqrBaseline || game.players.len() == 1 {
        return solver::solve(game, x0, initial_inputs, settings);
    }
    game::check_inputs(game, &initial_inputs)?;
    let horizon = initial_inputs[0].len();
    let n_players = game.players.len();
    let predictions: Vec<Vec<PlayerState>> = (0..n_players)
        .map(|j| {
            let xj = PlayerState::from_slice(&x0.as_slice()[j * STATE_DIM..(j + 1) * STATE_DIM]);
            constant_velocity_prediction(&xj, &game.track, game.dt, horizon)
        })
        .collect();
    let predicted: Vec<DVector<f64>> = (0..=horizon)
        .map(|k| {
            let mut x = x0.clone();
            for (j, pred) in predictions.iter().enumerate().filter(|&(j, _)| j != ego) {
                x.rows_mut(j * STATE_DIM, STATE_DIM)
                    .copy_from(&pred[k].to_vec6());
            }
            x
        })
        .collect();
    let problem = SequentialProblem {
        game,
        ego,
        predicted,
    };
    let ego_x0 = x0.rows(ego * STATE_DIM, STATE_DIM).into_owned();
    let single = solver::solve(
        &problem,
        &ego_x0,
        vec![initial_inputs[ego].clone()],
        settings,
    )?;

    let states: Vec<DVector<f64>> = single
        .trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, xe)| problem.joint(k, xe))
        .collect();
    let mut inputs = solver::zero_inputs(&game.input_dims(), horizon);
    inputs[ego] = single.trajectory.inputs[0].clone();
    let costs = (0..n_players)
        .map(|i| game::total_cost(game, i, &states, &inputs))
        .collect();
    let history = single
        .history
        .iter()
        .map(|r| {
            let mut c = vec![f64::NAN; n_players];
            c[ego] = r.costs[0];
            IterationRecord {
                state_change: r.state_change,
                costs: c,
            }
        })
        .collect();
    Ok(SolveReport {
        converged: single.converged,
        iterations: single.iterations,
        history,
        trajectory: GameTrajectory {
            states,
            inputs,
            costs,
            iteration: single.trajectory.iteration,
            mode: SolverMode::IlqrBaseline,
        },
        strategies: embed_strategies(
            &single.strategies,
            ego,
            &game.input_dims(),
            game.state_dim(),
            ego * STATE_DIM,
        ),
    })
}
