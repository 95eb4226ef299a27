//! The iLQGame outer loop: linearize and quadratize along the nominal
//! trajectory, solve the local LQ game, then apply the strategies in a
//! damped forward pass through the nonlinear dynamics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{self, DynamicGame, FrozenOpponents};
use crate::lq::{self, StrategySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    #[serde(rename = "feedback")]
    Feedback,
    #[serde(rename = "open-loop")]
    OpenLoop,
    /// Single-player iLQR for the ego against predicted opponents.
    #[serde(rename = "ilqr", alias = "ilqr-baseline")]
    IlqrBaseline,
}

impl SolverMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverMode::Feedback => "feedback",
            SolverMode::OpenLoop => "open-loop",
            SolverMode::IlqrBaseline => "ilqr",
        }
    }
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feedback" => Ok(Self::Feedback),
            "open-loop" | "openloop" => Ok(Self::OpenLoop),
            "ilqr" | "ilqr-baseline" => Ok(Self::IlqrBaseline),
            other => Err(Error::Invalid(format!("unknown solver mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub mode: SolverMode,
    /// Step size applied to the feedforward terms, in `(0, 1]`.
    pub eta: f64,
    pub max_iterations: usize,
    /// Max-norm of the state-trajectory change below which the loop stops.
    #[serde(rename = "tol")]
    pub convergence_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mode: SolverMode::Feedback,
            eta: 0.3,
            max_iterations: 500,
            convergence_tol: 1e-4,
        }
    }
}

impl SolverSettings {
    pub fn with_mode(self, mode: SolverMode) -> Self {
        Self { mode, ..self }
    }

    pub fn check(&self, path: &str) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            errors.push(format!("{path}.eta: must lie in (0, 1], got {}", self.eta));
        }
        if self.max_iterations == 0 {
            errors.push(format!("{path}.max_iterations: must be >= 1"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            errors.push(format!(
                "{path}.tol: must be > 0, got {}",
                self.convergence_tol
            ));
        }
        errors
    }
}

/// Nominal trajectory: `K + 1` joint states and `K` inputs per player.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTrajectory {
    pub states: Vec<DVector<f64>>,
    /// `[i][k]`
    pub inputs: Vec<Vec<DVector<f64>>>,
    pub costs: Vec<f64>,
    /// Iteration that produced this trajectory (0 for the initial rollout).
    pub iteration: usize,
    pub mode: SolverMode,
}

impl GameTrajectory {
    /// Rolls out `inputs` from `x0` and evaluates every player's cost.
    pub fn simulate<G: DynamicGame + ?Sized>(
        game: &G,
        x0: &DVector<f64>,
        inputs: Vec<Vec<DVector<f64>>>,
        mode: SolverMode,
    ) -> Result<Self> {
        let states = game::rollout(game, x0, &inputs)?;
        let costs = (0..game.num_players())
            .map(|i| game::total_cost(game, i, &states, &inputs))
            .collect();
        Ok(Self {
            states,
            inputs,
            costs,
            iteration: 0,
            mode,
        })
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// `max_k |x_k - y_k|_inf`.
    pub fn max_state_change(&self, other: &GameTrajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Max-norm state change produced by this iteration.
    pub state_change: f64,
    /// Per-player costs after this iteration.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub trajectory: GameTrajectory,
    pub strategies: StrategySet,
}

/// Applies `strategies` around `nominal`:
/// `u_new = u_hat - K (x_new - x_hat) - eta k`, rolled out through the game.
pub fn forward_pass<G: DynamicGame + ?Sized>(
    game: &G,
    nominal: &GameTrajectory,
    strategies: &StrategySet,
    eta: f64,
) -> Result<GameTrajectory> {
    let horizon = nominal.horizon();
    if strategies.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "strategies cover {} stages, trajectory has {horizon}",
            strategies.horizon()
        )));
    }
    let players = nominal.inputs.len();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(nominal.states[0].clone());
    let mut inputs: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(horizon); players];
    for k in 0..horizon {
        let dx = &states[k] - &nominal.states[k];
        let u: Vec<DVector<f64>> = (0..players)
            .map(|i| {
                &nominal.inputs[i][k]
                    - &strategies.gains[k][i] * &dx
                    - &strategies.feedforward[k][i] * eta
            })
            .collect();
        let next = game.step(k, &states[k], &u).map_err(|e| e.at_stage(k))?;
        for (seq, ui) in inputs.iter_mut().zip(u) {
            seq.push(ui);
        }
        states.push(next);
    }
    let costs = (0..players)
        .map(|i| game::total_cost(game, i, &states, &inputs))
        .collect();
    Ok(GameTrajectory {
        states,
        inputs,
        costs,
        iteration: nominal.iteration + 1,
        mode: nominal.mode,
    })
}

fn backward_pass(lq: &lq::LqApproximation, mode: SolverMode) -> Result<StrategySet> {
    match mode {
        SolverMode::Feedback => lq::solve_feedback_lq(lq),
        SolverMode::OpenLoop => lq::solve_openloop_lq(lq, &DVector::zeros(lq.state_dim())),
        SolverMode::IlqrBaseline => lq::riccati_lqr(lq),
    }
}

/// Runs iLQGame from `x0` with the given initial input sequences.
///
/// `IlqrBaseline` runs plain iLQR and therefore needs a single-player game;
/// the racing front end reduces multi-player scenarios to that case.
pub fn solve<G: DynamicGame + ?Sized>(
    game: &G,
    x0: &DVector<f64>,
    initial_inputs: Vec<Vec<DVector<f64>>>,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    let errors = settings.check("solver");
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    if settings.mode == SolverMode::IlqrBaseline && game.num_players() != 1 {
        return Err(Error::Invalid(
            "ilqr mode needs a single-player problem; use the racing front end for opponent prediction".into(),
        ));
    }
    let mut nominal = GameTrajectory::simulate(game, x0, initial_inputs, settings.mode)?;
    let mut history = Vec::new();
    let mut strategies = None;
    let mut converged = false;
    for iteration in 1..=settings.max_iterations {
        let step = || -> Result<(StrategySet, GameTrajectory)> {
            let lq = game::lq_approximation(game, &nominal.states, &nominal.inputs)?;
            let strat = backward_pass(&lq, settings.mode)?;
            let next = forward_pass(game, &nominal, &strat, settings.eta)?;
            Ok((strat, next))
        };
        let (strat, next) = step().map_err(|e| e.at_iteration(iteration))?;
        let change = next.max_state_change(&nominal);
        history.push(IterationRecord {
            state_change: change,
            costs: next.costs.clone(),
        });
        nominal = next;
        strategies = Some(strat);
        if change < settings.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        converged,
        iterations: history.len(),
        history,
        trajectory: nominal,
        strategies: strategies.expect("max_iterations >= 1"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GapStatus {
    Verified,
    /// The inner iLQR did not converge; the gap is only a lower bound.
    Unverifiable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub status: GapStatus,
    /// `J^i(trajectory) - J^i(best response found)`.
    pub gap: f64,
    pub equilibrium_cost: f64,
    pub best_response_cost: f64,
}

impl BestResponse {
    pub fn relative_gap(&self) -> f64 {
        self.gap / (1.0 + self.equilibrium_cost.abs())
    }
}

/// Unilateral deviation test over input sequences: freezes every opponent's
/// inputs and runs single-player iLQR for player `i` from the trajectory.
/// Every iLQR iterate is a feasible deviation, so the best one found is used.
pub fn best_response_gap<G: DynamicGame + ?Sized>(
    game: &G,
    trajectory: &GameTrajectory,
    i: usize,
    settings: &SolverSettings,
) -> Result<BestResponse> {
    if i >= trajectory.inputs.len() {
        return Err(Error::Invalid(format!("no player {i}")));
    }
    let frozen = FrozenOpponents {
        game,
        player: i,
        inputs: &trajectory.inputs,
    };
    let own = vec![trajectory.inputs[i].clone()];
    let equilibrium_cost = game::total_cost(&frozen, 0, &trajectory.states, &own);
    let br_settings = settings.with_mode(SolverMode::IlqrBaseline);
    let report = solve(&frozen, &trajectory.states[0], own, &br_settings)?;
    let best_response_cost = report
        .history
        .iter()
        .map(|r| r.costs[0])
        .fold(equilibrium_cost, f64::min);
    Ok(BestResponse {
        status: if report.converged {
            GapStatus::Verified
        } else {
            GapStatus::Unverifiable
        },
        gap: equilibrium_cost - best_response_cost,
        equilibrium_cost,
        best_response_cost,
    })
}

/// Exact feedback certificate of the local LQ game at `trajectory`: player
/// `i` switches to its feedback best response in the LQ approximation while
/// everyone else keeps the local feedback Nash gains with zero feedforward.
/// Zero exactly when the trajectory is a fixed point of feedback iLQGame.
pub fn local_feedback_gap<G: DynamicGame + ?Sized>(
    game: &G,
    trajectory: &GameTrajectory,
    i: usize,
) -> Result<BestResponse> {
    if i >= trajectory.inputs.len() {
        return Err(Error::Invalid(format!("no player {i}")));
    }
    let lq = game::lq_approximation(game, &trajectory.states, &trajectory.inputs)?;
    let mut strategies = lq::solve_feedback_lq(&lq)?;
    strategies
        .feedforward
        .iter_mut()
        .flatten()
        .for_each(|k| k.fill(0.0));
    let report =
        lq::nash::feedback_best_response_gap(&lq, &strategies, &DVector::zeros(lq.state_dim()), i)?;
    let equilibrium_cost = game::total_cost(game, i, &trajectory.states, &trajectory.inputs);
    Ok(BestResponse {
        status: GapStatus::Verified,
        gap: report.gap(),
        equilibrium_cost,
        best_response_cost: equilibrium_cost - report.gap(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapKind {
    /// Deviations over input sequences against frozen opponent inputs.
    InputSequence,
    /// Feedback deviations in the local LQ game.
    LocalFeedback,
}

impl GapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GapKind::InputSequence => "input-sequence",
            GapKind::LocalFeedback => "local-feedback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: GapKind,
    pub gaps: Vec<BestResponse>,
}

/// Per-player best-response gaps matching the equilibrium concept of `mode`.
pub fn certify<G: DynamicGame + ?Sized>(
    game: &G,
    trajectory: &GameTrajectory,
    settings: &SolverSettings,
) -> Result<Certificate> {
    let players = 0..trajectory.inputs.len();
    match trajectory.mode {
        SolverMode::Feedback => Ok(Certificate {
            kind: GapKind::LocalFeedback,
            gaps: players
                .map(|i| local_feedback_gap(game, trajectory, i))
                .collect::<Result<_>>()?,
        }),
        SolverMode::OpenLoop | SolverMode::IlqrBaseline => Ok(Certificate {
            kind: GapKind::InputSequence,
            gaps: players
                .map(|i| best_response_gap(game, trajectory, i, settings))
                .collect::<Result<_>>()?,
        }),
    }
}

/// Zero-input initial guess for every player.
pub fn zero_inputs(input_dims: &[usize], horizon: usize) -> Vec<Vec<DVector<f64>>> {
    input_dims
        .iter()
        .map(|&m| vec![DVector::zeros(m); horizon])
        .collect()
}

/// Embeds a single-player strategy set on a sub-block of a larger state.
pub(crate) fn embed_strategies(
    single: &StrategySet,
    player: usize,
    input_dims: &[usize],
    state_dim: usize,
    state_offset: usize,
) -> StrategySet {
    let horizon = single.horizon();
    let mut gains = Vec::with_capacity(horizon);
    let mut feedforward = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let mut g: Vec<DMatrix<f64>> = input_dims
            .iter()
            .map(|&m| DMatrix::zeros(m, state_dim))
            .collect();
        let mut f: Vec<DVector<f64>> = input_dims.iter().map(|&m| DVector::zeros(m)).collect();
        let src = &single.gains[k][0];
        g[player]
            .view_mut((0, state_offset), (src.nrows(), src.ncols()))
            .copy_from(src);
        f[player] = single.feedforward[k][0].clone();
        gains.push(g);
        feedforward.push(f);
    }
    StrategySet {
        mode: single.mode,
        gains,
        feedforward,
    }
}
