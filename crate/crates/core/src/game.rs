//! Generic N-player discrete-time games and the local LQ approximation
//! built along a nominal trajectory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lq::{LinearStage, LqApproximation, QuadraticCost, TerminalCost};

/// A game `x_{k+1} = f_k(x_k, u^1_k, .., u^N_k)` with per-player stage and
/// terminal costs.
pub trait DynamicGame {
    fn state_dim(&self) -> usize;
    fn input_dims(&self) -> Vec<usize>;

    fn num_players(&self) -> usize {
        self.input_dims().len()
    }

    fn step(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> Result<DVector<f64>>;

    /// `(A_k, [B_k^1 .. B_k^N])` of the step map at `(x, u)`.
    fn step_jacobians(
        &self,
        k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)>;

    fn stage_cost(&self, i: usize, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> f64;

    fn terminal_cost(&self, i: usize, x: &DVector<f64>) -> f64;

    /// Second-order expansion of player `i`'s stage cost at `(x, u)`, in
    /// deviation coordinates. The state Hessian must be PSD.
    fn quadratize_stage(
        &self,
        i: usize,
        k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> QuadraticCost;

    fn quadratize_terminal(&self, i: usize, x: &DVector<f64>) -> TerminalCost;
}

/// Simulates the game; `inputs[i][k]` is player `i`'s input at stage `k`.
pub fn rollout<G: DynamicGame + ?Sized>(
    game: &G,
    x0: &DVector<f64>,
    inputs: &[Vec<DVector<f64>>],
) -> Result<Vec<DVector<f64>>> {
    let horizon = check_inputs(game, inputs)?;
    let mut xs = Vec::with_capacity(horizon + 1);
    xs.push(x0.clone());
    for k in 0..horizon {
        let u = stage_inputs(inputs, k);
        let next = game.step(k, &xs[k], &u).map_err(|e| e.at_stage(k))?;
        xs.push(next);
    }
    Ok(xs)
}

pub(crate) fn check_inputs<G: DynamicGame + ?Sized>(
    game: &G,
    inputs: &[Vec<DVector<f64>>],
) -> Result<usize> {
    let dims = game.input_dims();
    if inputs.len() != dims.len() {
        return Err(Error::Dimension(format!(
            "{} input sequences for {} players",
            inputs.len(),
            dims.len()
        )));
    }
    let horizon = inputs.first().map_or(0, Vec::len);
    for (i, seq) in inputs.iter().enumerate() {
        if seq.len() != horizon {
            return Err(Error::Dimension(format!(
                "player {i} has {} inputs, expected {horizon}",
                seq.len()
            )));
        }
        if seq.iter().any(|u| u.len() != dims[i]) {
            return Err(Error::Dimension(format!(
                "player {i} inputs must have length {}",
                dims[i]
            )));
        }
    }
    Ok(horizon)
}

pub(crate) fn stage_inputs(inputs: &[Vec<DVector<f64>>], k: usize) -> Vec<DVector<f64>> {
    inputs.iter().map(|seq| seq[k].clone()).collect()
}

/// Jacobians of the discrete step map along a nominal trajectory.
pub fn linearize_discrete<G: DynamicGame + ?Sized>(
    game: &G,
    states: &[DVector<f64>],
    inputs: &[Vec<DVector<f64>>],
) -> Result<Vec<LinearStage>> {
    let horizon = check_inputs(game, inputs)?;
    (0..horizon)
        .map(|k| {
            let (a, b) = game
                .step_jacobians(k, &states[k], &stage_inputs(inputs, k))
                .map_err(|e| e.at_stage(k))?;
            Ok(LinearStage { a, b })
        })
        .collect()
}

/// Local LQ game along the nominal `(states, inputs)`.
pub fn lq_approximation<G: DynamicGame + ?Sized>(
    game: &G,
    states: &[DVector<f64>],
    inputs: &[Vec<DVector<f64>>],
) -> Result<LqApproximation> {
    let dynamics = linearize_discrete(game, states, inputs)?;
    let horizon = dynamics.len();
    let players = game.num_players();
    let stage_costs = (0..horizon)
        .map(|k| {
            let u = stage_inputs(inputs, k);
            (0..players)
                .map(|i| game.quadratize_stage(i, k, &states[k], &u))
                .collect()
        })
        .collect();
    let terminal_costs = (0..players)
        .map(|i| game.quadratize_terminal(i, &states[horizon]))
        .collect();
    Ok(LqApproximation {
        dynamics,
        stage_costs,
        terminal_costs,
    })
}

/// Player `i`'s total cost of a trajectory.
pub fn total_cost<G: DynamicGame + ?Sized>(
    game: &G,
    i: usize,
    states: &[DVector<f64>],
    inputs: &[Vec<DVector<f64>>],
) -> f64 {
    let horizon = states.len() - 1;
    (0..horizon)
        .map(|k| game.stage_cost(i, k, &states[k], &stage_inputs(inputs, k)))
        .sum::<f64>()
        + game.terminal_cost(i, &states[horizon])
}

/// A game whose dynamics are linear and whose costs are quadratic, stated
/// in absolute coordinates: `x' = A x + sum_j B^j u^j`, player `i` pays
/// `1/2 x'Qx + q'x + sum_j (1/2 u^j'R^{ij}u^j + r^{ij}'u^j)`.
#[derive(Debug, Clone)]
pub struct LinearQuadraticGame {
    pub model: LqApproximation,
}

impl LinearQuadraticGame {
    pub fn new(model: LqApproximation) -> Result<Self> {
        model.check_dimensions()?;
        Ok(Self { model })
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    /// Random game with `players` players, a `state_dim`-dimensional state
    /// and `input_dim` inputs per player. State costs are PSD, own input
    /// weights PD and cross input weights PSD.
    pub fn random(
        seed: u64,
        players: usize,
        state_dim: usize,
        input_dim: usize,
        horizon: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = state_dim;
        let mat = |rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64| {
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0) * scale)
        };
        let psd = |l: DMatrix<f64>| &l * l.transpose();
        let a_base = DMatrix::identity(n, n) + mat(&mut rng, n, n, 0.3);
        let dynamics = (0..horizon)
            .map(|_| LinearStage {
                a: &a_base + mat(&mut rng, n, n, 0.05),
                b: (0..players)
                    .map(|_| mat(&mut rng, n, input_dim, 1.0))
                    .collect(),
            })
            .collect();
        let cost = |rng: &mut ChaCha8Rng| {
            let input_hessians = (0..players)
                .map(|_| psd(mat(rng, input_dim, input_dim, 0.5)))
                .collect::<Vec<_>>();
            QuadraticCost {
                state_hessian: psd(mat(rng, n, n, 0.7)),
                state_gradient: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                input_hessians,
                input_gradients: (0..players)
                    .map(|_| DVector::from_fn(input_dim, |_, _| rng.random_range(-0.5..0.5)))
                    .collect(),
            }
        };
        let stage_costs = (0..horizon)
            .map(|_| {
                (0..players)
                    .map(|i| {
                        let mut c = cost(&mut rng);
                        c.input_hessians[i] += DMatrix::identity(input_dim, input_dim) * 0.5;
                        c
                    })
                    .collect()
            })
            .collect();
        let terminal_costs = (0..players)
            .map(|_| TerminalCost {
                state_hessian: psd(mat(&mut rng, n, n, 0.7)),
                state_gradient: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            })
            .collect();
        Self {
            model: LqApproximation {
                dynamics,
                stage_costs,
                terminal_costs,
            },
        }
    }
}

/// Reproducible initial state with entries in `[-1, 1)`.
pub fn random_state(seed: u64, state_dim: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(state_dim, |_, _| rng.random_range(-1.0..1.0))
}

impl DynamicGame for LinearQuadraticGame {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn input_dims(&self) -> Vec<usize> {
        self.model.input_dims()
    }

    fn step(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> Result<DVector<f64>> {
        let stage = self.model.dynamics.get(k).ok_or_else(|| {
            Error::Invalid(format!("stage {k} beyond horizon {}", self.horizon()))
        })?;
        Ok(stage
            .b
            .iter()
            .zip(u)
            .fold(&stage.a * x, |acc, (b, u)| acc + b * u))
    }

    fn step_jacobians(
        &self,
        k: usize,
        _x: &DVector<f64>,
        _u: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let stage = self.model.dynamics.get(k).ok_or_else(|| {
            Error::Invalid(format!("stage {k} beyond horizon {}", self.horizon()))
        })?;
        Ok((stage.a.clone(), stage.b.clone()))
    }

    fn stage_cost(&self, i: usize, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        let c = &self.model.stage_costs[k][i];
        let mut total = 0.5 * x.dot(&(&c.state_hessian * x)) + c.state_gradient.dot(x);
        for (j, uj) in u.iter().enumerate() {
            total += 0.5 * uj.dot(&(&c.input_hessians[j] * uj)) + c.input_gradients[j].dot(uj);
        }
        total
    }

    fn terminal_cost(&self, i: usize, x: &DVector<f64>) -> f64 {
        let t = &self.model.terminal_costs[i];
        0.5 * x.dot(&(&t.state_hessian * x)) + t.state_gradient.dot(x)
    }

    fn quadratize_stage(
        &self,
        i: usize,
        k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> QuadraticCost {
        let c = &self.model.stage_costs[k][i];
        QuadraticCost {
            state_hessian: c.state_hessian.clone(),
            state_gradient: &c.state_gradient + &c.state_hessian * x,
            input_hessians: c.input_hessians.clone(),
            input_gradients: c
                .input_gradients
                .iter()
                .zip(&c.input_hessians)
                .zip(u)
                .map(|((r, rh), uj)| r + rh * uj)
                .collect(),
        }
    }

    fn quadratize_terminal(&self, i: usize, x: &DVector<f64>) -> TerminalCost {
        let t = &self.model.terminal_costs[i];
        TerminalCost {
            state_hessian: t.state_hessian.clone(),
            state_gradient: &t.state_gradient + &t.state_hessian * x,
        }
    }
}

/// Player `i`'s single-player problem with every opponent's input sequence
/// frozen.
pub struct FrozenOpponents<'a, G: ?Sized> {
    pub game: &'a G,
    pub player: usize,
    /// Full input profile; the entries of `player` are ignored.
    pub inputs: &'a [Vec<DVector<f64>>],
}

impl<G: DynamicGame + ?Sized> FrozenOpponents<'_, G> {
    fn full_inputs(&self, k: usize, own: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut u = stage_inputs(self.inputs, k);
        u[self.player] = own.clone();
        u
    }
}

impl<G: DynamicGame + ?Sized> DynamicGame for FrozenOpponents<'_, G> {
    fn state_dim(&self) -> usize {
        self.game.state_dim()
    }

    fn input_dims(&self) -> Vec<usize> {
        vec![self.game.input_dims()[self.player]]
    }

    fn step(&self, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> Result<DVector<f64>> {
        self.game.step(k, x, &self.full_inputs(k, &u[0]))
    }

    fn step_jacobians(
        &self,
        k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let (a, mut b) = self
            .game
            .step_jacobians(k, x, &self.full_inputs(k, &u[0]))?;
        Ok((a, vec![b.swap_remove(self.player)]))
    }

    fn stage_cost(&self, _i: usize, k: usize, x: &DVector<f64>, u: &[DVector<f64>]) -> f64 {
        self.game
            .stage_cost(self.player, k, x, &self.full_inputs(k, &u[0]))
    }

    fn terminal_cost(&self, _i: usize, x: &DVector<f64>) -> f64 {
        self.game.terminal_cost(self.player, x)
    }

    fn quadratize_stage(
        &self,
        _i: usize,
        k: usize,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> QuadraticCost {
        let mut c = self
            .game
            .quadratize_stage(self.player, k, x, &self.full_inputs(k, &u[0]));
        QuadraticCost {
            state_hessian: c.state_hessian,
            state_gradient: c.state_gradient,
            input_hessians: vec![c.input_hessians.swap_remove(self.player)],
            input_gradients: vec![c.input_gradients.swap_remove(self.player)],
        }
    }

    fn quadratize_terminal(&self, _i: usize, x: &DVector<f64>) -> TerminalCost {
        self.game.quadratize_terminal(self.player, x)
    }
}
