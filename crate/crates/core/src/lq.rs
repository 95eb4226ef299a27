//! Finite-horizon linear-quadratic games: coupled feedback Nash solver,
//! open-loop Nash solver and the single-player difference Riccati recursion.
//!
//! Everything here works in deviation coordinates around a nominal
//! trajectory. Player `i` uses the affine strategy `u^i = -K^i dx - k^i`.
//! Stage costs have the form
//! `1/2 dx'Q dx + q'dx + sum_j (1/2 du^j' R^{ij} du^j + r^{ij}' du^j)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Factorized};

pub mod nash;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearStage {
    pub a: DMatrix<f64>,
    /// One input matrix per player.
    pub b: Vec<DMatrix<f64>>,
}

/// Player `i`'s quadratic stage cost. `input_hessians[j]` and
/// `input_gradients[j]` weight player `j`'s input.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub state_hessian: DMatrix<f64>,
    pub state_gradient: DVector<f64>,
    pub input_hessians: Vec<DMatrix<f64>>,
    pub input_gradients: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCost {
    pub state_hessian: DMatrix<f64>,
    pub state_gradient: DVector<f64>,
}

/// A local LQ game over `K` stages.
#[derive(Debug, Clone, PartialEq)]
pub struct LqApproximation {
    /// `K` entries.
    pub dynamics: Vec<LinearStage>,
    /// `[k][i]`, `K` stages.
    pub stage_costs: Vec<Vec<QuadraticCost>>,
    /// One per player.
    pub terminal_costs: Vec<TerminalCost>,
}

impl LqApproximation {
    pub fn horizon(&self) -> usize {
        self.dynamics.len()
    }

    pub fn num_players(&self) -> usize {
        self.terminal_costs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.terminal_costs[0].state_gradient.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        match self.dynamics.first() {
            Some(stage) => stage.b.iter().map(|b| b.ncols()).collect(),
            None => Vec::new(),
        }
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n_players = self.num_players();
        if n_players == 0 {
            return Err(Error::Dimension("LQ game without players".into()));
        }
        let n = self.state_dim();
        let dims = self.input_dims();
        if self.stage_costs.len() != self.horizon() {
            return Err(Error::Dimension(format!(
                "{} stage costs for horizon {}",
                self.stage_costs.len(),
                self.horizon()
            )));
        }
        for (k, (dyn_k, costs_k)) in self.dynamics.iter().zip(&self.stage_costs).enumerate() {
            let ok = dyn_k.a.shape() == (n, n)
                && dyn_k.b.len() == n_players
                && dyn_k.b.iter().zip(&dims).all(|(b, &m)| b.shape() == (n, m))
                && costs_k.len() == n_players
                && costs_k.iter().all(|c| {
                    c.state_hessian.shape() == (n, n)
                        && c.state_gradient.len() == n
                        && c.input_hessians.len() == n_players
                        && c.input_gradients.len() == n_players
                        && c.input_hessians
                            .iter()
                            .zip(&dims)
                            .all(|(r, &m)| r.shape() == (m, m))
                        && c.input_gradients
                            .iter()
                            .zip(&dims)
                            .all(|(r, &m)| r.len() == m)
                });
            if !ok {
                return Err(Error::Dimension(format!(
                    "inconsistent matrices at stage {k}"
                )));
            }
        }
        if self
            .terminal_costs
            .iter()
            .any(|t| t.state_hessian.shape() != (n, n) || t.state_gradient.len() != n)
        {
            return Err(Error::Dimension("inconsistent terminal cost".into()));
        }
        Ok(())
    }

    /// Player `i`'s cost of a deviation trajectory (`xs`: K+1 states,
    /// `us[j][k]`: player `j`'s input at stage `k`).
    pub fn cost(&self, i: usize, xs: &[DVector<f64>], us: &[Vec<DVector<f64>>]) -> f64 {
        let mut total = 0.0;
        for (k, costs_k) in self.stage_costs.iter().enumerate() {
            let c = &costs_k[i];
            let x = &xs[k];
            total += 0.5 * x.dot(&(&c.state_hessian * x)) + c.state_gradient.dot(x);
            for (j, u) in us.iter().enumerate() {
                let u = &u[k];
                total += 0.5 * u.dot(&(&c.input_hessians[j] * u)) + c.input_gradients[j].dot(u);
            }
        }
        let t = &self.terminal_costs[i];
        let x = &xs[self.horizon()];
        total + 0.5 * x.dot(&(&t.state_hessian * x)) + t.state_gradient.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyMode {
    Feedback,
    OpenLoop,
}

/// Per-stage, per-player affine strategies `u = -K dx - k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySet {
    pub mode: StrategyMode,
    /// `[k][i]`
    pub gains: Vec<Vec<DMatrix<f64>>>,
    /// `[k][i]`
    pub feedforward: Vec<Vec<DVector<f64>>>,
}

impl StrategySet {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Deviation-coordinate rollout of the linear dynamics under these strategies.
    pub fn simulate(
        &self,
        lq: &LqApproximation,
        dx0: &DVector<f64>,
    ) -> (Vec<DVector<f64>>, Vec<Vec<DVector<f64>>>) {
        simulate_affine(lq, &self.gains, &self.feedforward, dx0)
    }
}

pub(crate) fn simulate_affine(
    lq: &LqApproximation,
    gains: &[Vec<DMatrix<f64>>],
    feedforward: &[Vec<DVector<f64>>],
    dx0: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<Vec<DVector<f64>>>) {
    let n_players = lq.num_players();
    let mut xs = vec![dx0.clone()];
    let mut us = vec![Vec::with_capacity(lq.horizon()); n_players];
    for (k, stage) in lq.dynamics.iter().enumerate() {
        let x = &xs[k];
        let mut next = &stage.a * x;
        for i in 0..n_players {
            let u = -(&gains[k][i] * x) - &feedforward[k][i];
            next += &stage.b[i] * &u;
            us[i].push(u);
        }
        xs.push(next);
    }
    (xs, us)
}

/// Value function `1/2 x'P x + p'x` of one player at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
}

/// Feedback solution plus the value functions `[k][i]` for `k = 0..=K`.
#[derive(Debug, Clone)]
pub struct FeedbackSolution {
    pub strategies: StrategySet,
    pub values: Vec<Vec<Value>>,
    /// Largest asymmetry `max |P - P'|` seen before symmetrization.
    pub max_asymmetry: f64,
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &m| {
            let start = *acc;
            *acc += m;
            Some(start)
        })
        .collect()
}

/// Feedback Nash equilibrium of the LQ game.
pub fn solve_feedback_lq(lq: &LqApproximation) -> Result<StrategySet> {
    solve_feedback_lq_with_values(lq).map(|s| s.strategies)
}

pub fn solve_feedback_lq_with_values(lq: &LqApproximation) -> Result<FeedbackSolution> {
    lq.check_dimensions()?;
    let horizon = lq.horizon();
    let n_players = lq.num_players();
    let n = lq.state_dim();
    let dims = lq.input_dims();
    let offs = offsets(&dims);
    let total_m: usize = dims.iter().sum();

    let mut values: Vec<Vec<Value>> = vec![Vec::new(); horizon + 1];
    values[horizon] = lq
        .terminal_costs
        .iter()
        .map(|t| Value {
            hessian: t.state_hessian.clone(),
            gradient: t.state_gradient.clone(),
        })
        .collect();
    let mut gains = vec![Vec::new(); horizon];
    let mut feedforward = vec![Vec::new(); horizon];
    let mut max_asymmetry = 0.0f64;

    for k in (0..horizon).rev() {
        let stage = &lq.dynamics[k];
        let costs = &lq.stage_costs[k];
        let next = &values[k + 1];

        // Stacked system S [K | k] = [Y_K | Y_k], one block row per player.
        let mut s = DMatrix::zeros(total_m, total_m);
        let mut rhs = DMatrix::zeros(total_m, n + 1);
        for i in 0..n_players {
            let bt_p = stage.b[i].transpose() * &next[i].hessian;
            for j in 0..n_players {
                let mut block = &bt_p * &stage.b[j];
                if i == j {
                    block += &costs[i].input_hessians[i];
                }
                s.view_mut((offs[i], offs[j]), (dims[i], dims[j]))
                    .copy_from(&block);
            }
            rhs.view_mut((offs[i], 0), (dims[i], n))
                .copy_from(&(&bt_p * &stage.a));
            let lin = stage.b[i].transpose() * &next[i].gradient + &costs[i].input_gradients[i];
            rhs.view_mut((offs[i], n), (dims[i], 1)).copy_from(&lin);
        }
        let sol = Factorized::new(&s, k)?.solve(&rhs);

        let gains_k: Vec<DMatrix<f64>> = (0..n_players)
            .map(|i| sol.view((offs[i], 0), (dims[i], n)).into_owned())
            .collect();
        let ff_k: Vec<DVector<f64>> = (0..n_players)
            .map(|i| sol.view((offs[i], n), (dims[i], 1)).column(0).into_owned())
            .collect();

        let mut f = stage.a.clone();
        let mut beta = DVector::zeros(n);
        for j in 0..n_players {
            f -= &stage.b[j] * &gains_k[j];
            beta -= &stage.b[j] * &ff_k[j];
        }

        let mut values_k = Vec::with_capacity(n_players);
        for i in 0..n_players {
            let c = &costs[i];
            let (p_next, pv_next) = (&next[i].hessian, &next[i].gradient);
            let mut p = &c.state_hessian + f.transpose() * p_next * &f;
            let mut pv = &c.state_gradient + f.transpose() * (pv_next + p_next * &beta);
            for j in 0..n_players {
                let kt = gains_k[j].transpose();
                p += &kt * &c.input_hessians[j] * &gains_k[j];
                pv += &kt * (&c.input_hessians[j] * &ff_k[j] - &c.input_gradients[j]);
            }
            max_asymmetry = max_asymmetry.max((&p - p.transpose()).amax());
            symmetrize(&mut p);
            values_k.push(Value {
                hessian: p,
                gradient: pv,
            });
        }
        values[k] = values_k;
        gains[k] = gains_k;
        feedforward[k] = ff_k;
    }

    Ok(FeedbackSolution {
        strategies: StrategySet {
            mode: StrategyMode::Feedback,
            gains,
            feedforward,
        },
        values,
        max_asymmetry,
    })
}

/// Open-loop Nash equilibrium of the LQ game from the initial deviation `dx0`.
/// All gains of the result are zero.
pub fn solve_openloop_lq(lq: &LqApproximation, dx0: &DVector<f64>) -> Result<StrategySet> {
    lq.check_dimensions()?;
    let horizon = lq.horizon();
    let n_players = lq.num_players();
    let n = lq.state_dim();
    let dims = lq.input_dims();
    if dx0.len() != n {
        return Err(Error::Dimension(format!(
            "dx0 has length {}, expected {n}",
            dx0.len()
        )));
    }

    // R^{jj} factorizations are shared by the backward and forward sweeps.
    let mut r_inv: Vec<Vec<Factorized>> = Vec::with_capacity(horizon);
    for (k, costs) in lq.stage_costs.iter().enumerate() {
        r_inv.push(
            (0..n_players)
                .map(|j| Factorized::new(&costs[j].input_hessians[j], k))
                .collect::<Result<_>>()?,
        );
    }

    let mut mats: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); horizon + 1];
    let mut vecs: Vec<Vec<DVector<f64>>> = vec![Vec::new(); horizon + 1];
    mats[horizon] = lq
        .terminal_costs
        .iter()
        .map(|t| t.state_hessian.clone())
        .collect();
    vecs[horizon] = lq
        .terminal_costs
        .iter()
        .map(|t| t.state_gradient.clone())
        .collect();
    // Lambda_k factorization and sum_j B^j R^{jj}^-1 (B^j' m^j + r^jj), per stage.
    let mut lambdas: Vec<Option<Factorized>> = (0..horizon).map(|_| None).collect();
    let mut drifts: Vec<DVector<f64>> = vec![DVector::zeros(n); horizon];

    for k in (0..horizon).rev() {
        let stage = &lq.dynamics[k];
        let costs = &lq.stage_costs[k];
        let mut lambda = DMatrix::<f64>::identity(n, n);
        let mut drift = DVector::zeros(n);
        for j in 0..n_players {
            let bt = stage.b[j].transpose();
            let rinv_bt = r_inv[k][j].solve(&bt);
            lambda += &stage.b[j] * &rinv_bt * &mats[k + 1][j];
            let lin = &bt * &vecs[k + 1][j] + &costs[j].input_gradients[j];
            drift += &stage.b[j] * r_inv[k][j].solve_vec(&lin);
        }
        let lambda_f = Factorized::new(&lambda, k)?;
        let lam_inv_a = lambda_f.solve(&stage.a);
        let lam_inv_drift = lambda_f.solve_vec(&drift);
        let at = stage.a.transpose();
        let mut mats_k = Vec::with_capacity(n_players);
        let mut vecs_k = Vec::with_capacity(n_players);
        for i in 0..n_players {
            let m_next = &mats[k + 1][i];
            // Not symmetric once more than one player acts.
            let m = &costs[i].state_hessian + &at * m_next * &lam_inv_a;
            let v = &at * (&vecs[k + 1][i] - m_next * &lam_inv_drift) + &costs[i].state_gradient;
            mats_k.push(m);
            vecs_k.push(v);
        }
        mats[k] = mats_k;
        vecs[k] = vecs_k;
        lambdas[k] = Some(lambda_f);
        drifts[k] = drift;
    }

    let mut dx = dx0.clone();
    let mut feedforward = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let stage = &lq.dynamics[k];
        let costs = &lq.stage_costs[k];
        let lambda_f = lambdas[k].as_ref().expect("filled by backward sweep");
        let dx_next = lambda_f.solve_vec(&(&stage.a * &dx - &drifts[k]));
        // u^i = -R^ii^-1 [B^i'(M^i dx' + m^i) + r^ii] and u^i = -k^i.
        let ff_k: Vec<DVector<f64>> = (0..n_players)
            .map(|i| {
                let costate = &mats[k + 1][i] * &dx_next + &vecs[k + 1][i];
                r_inv[k][i]
                    .solve_vec(&(stage.b[i].transpose() * costate + &costs[i].input_gradients[i]))
            })
            .collect();
        feedforward.push(ff_k);
        dx = dx_next;
    }

    Ok(StrategySet {
        mode: StrategyMode::OpenLoop,
        gains: (0..horizon)
            .map(|_| dims.iter().map(|&m| DMatrix::zeros(m, n)).collect())
            .collect(),
        feedforward,
    })
}

/// Single-player LQ problem with affine dynamics
/// `x' = A x + B u + c` and cost `1/2 x'Qx + q'x + 1/2 u'Ru + r'u`.
#[derive(Debug, Clone)]
pub struct LqrProblem {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub drift: Vec<DVector<f64>>,
    /// `K + 1` entries, the last one terminal.
    pub state_hessians: Vec<DMatrix<f64>>,
    pub state_gradients: Vec<DVector<f64>>,
    pub input_hessians: Vec<DMatrix<f64>>,
    pub input_gradients: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub gains: Vec<DMatrix<f64>>,
    pub feedforward: Vec<DVector<f64>>,
    /// `K + 1` value functions.
    pub values: Vec<Value>,
}

/// Difference Riccati recursion with linear terms and dynamics drift:
/// `P_k = Q + A'PA - (A'PB)(R + B'PB)^-1 (B'PA)`.
pub fn solve_lqr(problem: &LqrProblem) -> Result<LqrSolution> {
    let horizon = problem.a.len();
    let mut values = vec![
        Value {
            hessian: DMatrix::zeros(0, 0),
            gradient: DVector::zeros(0),
        };
        horizon + 1
    ];
    values[horizon] = Value {
        hessian: problem.state_hessians[horizon].clone(),
        gradient: problem.state_gradients[horizon].clone(),
    };
    let mut gains = vec![DMatrix::zeros(0, 0); horizon];
    let mut feedforward = vec![DVector::zeros(0); horizon];
    for k in (0..horizon).rev() {
        let (a, b, c) = (&problem.a[k], &problem.b[k], &problem.drift[k]);
        let p = &values[k + 1].hessian;
        let pv = &values[k + 1].gradient;
        let bt_p = b.transpose() * p;
        let h_uu = &problem.input_hessians[k] + &bt_p * b;
        let h_ux = &bt_p * a;
        let next_lin = p * c + pv;
        let h_u = b.transpose() * &next_lin + &problem.input_gradients[k];
        let f = Factorized::new(&h_uu, k)?;
        let gain = f.solve(&h_ux);
        let ff = f.solve_vec(&h_u);
        let mut p_new =
            &problem.state_hessians[k] + a.transpose() * p * a - h_ux.transpose() * &gain;
        symmetrize(&mut p_new);
        let pv_new =
            &problem.state_gradients[k] + a.transpose() * &next_lin - h_ux.transpose() * &ff;
        values[k] = Value {
            hessian: p_new,
            gradient: pv_new,
        };
        gains[k] = gain;
        feedforward[k] = ff;
    }
    Ok(LqrSolution {
        gains,
        feedforward,
        values,
    })
}

/// The single-player case of an [`LqApproximation`] solved by the
/// difference Riccati equation.
pub fn riccati_lqr(lq: &LqApproximation) -> Result<StrategySet> {
    lq.check_dimensions()?;
    if lq.num_players() != 1 {
        return Err(Error::Invalid(format!(
            "riccati_lqr needs a single-player game, got {} players",
            lq.num_players()
        )));
    }
    let n = lq.state_dim();
    let horizon = lq.horizon();
    let mut state_hessians: Vec<_> = lq
        .stage_costs
        .iter()
        .map(|c| c[0].state_hessian.clone())
        .collect();
    let mut state_gradients: Vec<_> = lq
        .stage_costs
        .iter()
        .map(|c| c[0].state_gradient.clone())
        .collect();
    state_hessians.push(lq.terminal_costs[0].state_hessian.clone());
    state_gradients.push(lq.terminal_costs[0].state_gradient.clone());
    let problem = LqrProblem {
        a: lq.dynamics.iter().map(|d| d.a.clone()).collect(),
        b: lq.dynamics.iter().map(|d| d.b[0].clone()).collect(),
        drift: vec![DVector::zeros(n); horizon],
        state_hessians,
        state_gradients,
        input_hessians: lq
            .stage_costs
            .iter()
            .map(|c| c[0].input_hessians[0].clone())
            .collect(),
        input_gradients: lq
            .stage_costs
            .iter()
            .map(|c| c[0].input_gradients[0].clone())
            .collect(),
    };
    let sol = solve_lqr(&problem)?;
    Ok(StrategySet {
        mode: StrategyMode::Feedback,
        gains: sol.gains.into_iter().map(|g| vec![g]).collect(),
        feedforward: sol.feedforward.into_iter().map(|f| vec![f]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::LinearQuadraticGame;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_game(
        a: f64,
        bs: &[f64],
        qs: &[f64],
        rs: &[f64],
        horizon: usize,
        q_terminal: &[f64],
    ) -> LqApproximation {
        let n_players = bs.len();
        LqApproximation {
            dynamics: (0..horizon)
                .map(|_| LinearStage {
                    a: m(1, 1, &[a]),
                    b: bs.iter().map(|&b| m(1, 1, &[b])).collect(),
                })
                .collect(),
            stage_costs: (0..horizon)
                .map(|_| {
                    (0..n_players)
                        .map(|i| QuadraticCost {
                            state_hessian: m(1, 1, &[qs[i]]),
                            state_gradient: v(&[0.0]),
                            input_hessians: (0..n_players)
                                .map(|j| m(1, 1, &[if i == j { rs[i] } else { 0.0 }]))
                                .collect(),
                            input_gradients: (0..n_players).map(|_| v(&[0.0])).collect(),
                        })
                        .collect()
                })
                .collect(),
            terminal_costs: q_terminal
                .iter()
                .map(|&qt| TerminalCost {
                    state_hessian: m(1, 1, &[qt]),
                    state_gradient: v(&[0.0]),
                })
                .collect(),
        }
    }

    #[test]
    fn riccati_one_step_by_hand() {
        let lq = scalar_game(1.0, &[1.0], &[1.0], &[1.0], 1, &[1.0]);
        let s = riccati_lqr(&lq).unwrap();
        assert!((s.gains[0][0][(0, 0)] - 0.5).abs() < 1e-15);
        let fb = solve_feedback_lq_with_values(&lq).unwrap();
        assert!((fb.values[0][0].hessian[(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn riccati_zero_value_gives_zero_gains() {
        let lq = scalar_game(1.3, &[0.7], &[0.0], &[2.0], 4, &[0.0]);
        let s = riccati_lqr(&lq).unwrap();
        assert!(s.gains.iter().all(|g| g[0].iter().all(|&x| x == 0.0)));
        assert!(s.feedforward.iter().all(|f| f[0].iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn riccati_rejects_games() {
        let lq = scalar_game(1.0, &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], 2, &[1.0, 1.0]);
        assert!(matches!(riccati_lqr(&lq), Err(Error::Invalid(_))));
    }

    #[test]
    fn feedback_matches_riccati_for_single_player() {
        for seed in 0..10 {
            let mut lq = LinearQuadraticGame::random(seed, 1, 4, 2, 8).model;
            for c in lq.stage_costs.iter_mut().flatten() {
                c.state_gradient.fill(0.0);
                c.input_gradients.iter_mut().for_each(|g| g.fill(0.0));
            }
            lq.terminal_costs[0].state_gradient.fill(0.0);
            let fb = solve_feedback_lq(&lq).unwrap();
            let rc = riccati_lqr(&lq).unwrap();
            for k in 0..lq.horizon() {
                let (a, b) = (&fb.gains[k][0], &rc.gains[k][0]);
                assert!(
                    (a - b).amax() <= 1e-10 * (1.0 + b.amax()),
                    "seed {seed} stage {k}"
                );
            }
        }
    }

    #[test]
    fn uncontrollable_game_reads_off_feedforward() {
        let mut lq = LinearQuadraticGame::random(3, 2, 3, 2, 5).model;
        for stage in &mut lq.dynamics {
            stage.b.iter_mut().for_each(|b| b.fill(0.0));
        }
        let s = solve_feedback_lq(&lq).unwrap();
        for k in 0..lq.horizon() {
            for i in 0..2 {
                assert!(s.gains[k][i].iter().all(|&x| x == 0.0));
                let c = &lq.stage_costs[k][i];
                let expected = c.input_hessians[i]
                    .clone()
                    .lu()
                    .solve(&c.input_gradients[i])
                    .unwrap();
                assert!((&s.feedforward[k][i] - expected).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_two_player_residuals() {
        // Weights drawn once and frozen: q = (0.8, 1.7), r = (0.6, 1.3), terminal (2.1, 0.4).
        let mut lq = scalar_game(0.9, &[1.2, -0.7], &[0.8, 1.7], &[0.6, 1.3], 2, &[2.1, 0.4]);
        lq.stage_costs[0][0].state_gradient = v(&[0.3]);
        lq.stage_costs[1][1].input_gradients[1] = v(&[-0.25]);
        lq.terminal_costs[0].state_gradient = v(&[-0.5]);
        let sol = solve_feedback_lq_with_values(&lq).unwrap();
        let s = &sol.strategies;
        for k in 0..2 {
            let st = &lq.dynamics[k];
            for i in 0..2 {
                let p = &sol.values[k + 1][i];
                let c = &lq.stage_costs[k][i];
                let bt_p = st.b[i].transpose() * &p.hessian;
                let mut r_gain =
                    (&c.input_hessians[i] + &bt_p * &st.b[i]) * &s.gains[k][i] - &bt_p * &st.a;
                let mut r_ff = (&c.input_hessians[i] + &bt_p * &st.b[i]) * &s.feedforward[k][i]
                    - st.b[i].transpose() * &p.gradient
                    - &c.input_gradients[i];
                for j in (0..2).filter(|&j| j != i) {
                    r_gain += &bt_p * &st.b[j] * &s.gains[k][j];
                    r_ff += &bt_p * &st.b[j] * &s.feedforward[k][j];
                }
                assert!(r_gain.amax() <= 1e-12 && r_ff.amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn openloop_homogeneous_game_stays_at_zero() {
        let mut lq = LinearQuadraticGame::random(11, 2, 4, 2, 6).model;
        for c in lq.stage_costs.iter_mut().flatten() {
            c.state_gradient.fill(0.0);
            c.input_gradients.iter_mut().for_each(|g| g.fill(0.0));
        }
        lq.terminal_costs
            .iter_mut()
            .for_each(|t| t.state_gradient.fill(0.0));
        let s = solve_openloop_lq(&lq, &DVector::zeros(4)).unwrap();
        assert_eq!(s.mode, StrategyMode::OpenLoop);
        assert!(s
            .feedforward
            .iter()
            .flatten()
            .all(|f| f.iter().all(|&x| x == 0.0)));
        assert!(s
            .gains
            .iter()
            .flatten()
            .all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn openloop_matches_feedback_rollout_for_single_player() {
        let mut lq = LinearQuadraticGame::random(5, 1, 3, 1, 10).model;
        for c in lq.stage_costs.iter_mut().flatten() {
            c.state_gradient.fill(0.0);
            c.input_gradients.iter_mut().for_each(|g| g.fill(0.0));
        }
        lq.terminal_costs[0].state_gradient.fill(0.0);
        let dx0 = v(&[1.0, -0.5, 2.0]);
        let (xs_ol, _) = solve_openloop_lq(&lq, &dx0).unwrap().simulate(&lq, &dx0);
        let (xs_fb, _) = solve_feedback_lq(&lq).unwrap().simulate(&lq, &dx0);
        for (a, b) in xs_ol.iter().zip(&xs_fb) {
            assert!((a - b).amax() <= 1e-8 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn scalar_two_player_openloop_is_best_response() {
        let mut lq = scalar_game(0.9, &[1.2, -0.7], &[0.8, 1.7], &[0.6, 1.3], 2, &[2.1, 0.4]);
        lq.stage_costs[0][1].state_gradient = v(&[0.4]);
        let dx0 = v(&[1.5]);
        let s = solve_openloop_lq(&lq, &dx0).unwrap();
        for i in 0..2 {
            let g = nash::openloop_best_response_gap(&lq, &s, &dx0, i).unwrap();
            assert!(g.relative_gap().abs() <= 1e-9, "player {i}: {g:?}");
        }
    }

    #[test]
    fn matrix_openloop_is_best_response() {
        for players in [2, 3] {
            let lq = LinearQuadraticGame::random(21, players, 4, 2, 6).model;
            let dx0 = v(&[0.5, -1.0, 0.2, 0.9]);
            let s = solve_openloop_lq(&lq, &dx0).unwrap();
            for i in 0..players {
                let g = nash::openloop_best_response_gap(&lq, &s, &dx0, i).unwrap();
                assert!(g.relative_gap().abs() <= 1e-10, "player {i}: {g:?}");
            }
        }
    }

    #[test]
    fn singular_coupled_system_reports_stage() {
        let mut lq = scalar_game(1.0, &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], 3, &[1.0, 1.0]);
        // Zero own-input weight with no value curvature makes stage 2 singular.
        lq.terminal_costs
            .iter_mut()
            .for_each(|t| t.state_hessian.fill(0.0));
        lq.stage_costs[2][0].input_hessians[0].fill(0.0);
        match solve_feedback_lq(&lq) {
            Err(Error::SingularSystem { stage, .. }) => assert_eq!(stage, 2),
            other => panic!("{other:?}"),
        }
        match solve_openloop_lq(&lq, &v(&[0.0])) {
            Err(Error::SingularSystem { stage, .. }) => assert_eq!(stage, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut lq = scalar_game(1.0, &[1.0], &[1.0], &[1.0], 2, &[1.0]);
        lq.dynamics[1].a = DMatrix::zeros(2, 2);
        assert!(matches!(solve_feedback_lq(&lq), Err(Error::Dimension(_))));
    }
}
