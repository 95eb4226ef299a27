//! Exact best responses in LQ games, used to certify Nash equilibria.
//!
//! Each check freezes every opponent and solves player `i`'s resulting
//! single-player problem with the difference Riccati recursion, which is
//! independent of the coupled game solvers.

use nalgebra::{DMatrix, DVector};

use super::{simulate_affine, solve_lqr, LqApproximation, LqrProblem, LqrSolution, StrategySet};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// Player's cost under the strategies being checked.
    pub equilibrium_cost: f64,
    /// Player's cost after a unilateral best response.
    pub best_response_cost: f64,
}

impl GapReport {
    pub fn gap(&self) -> f64 {
        self.equilibrium_cost - self.best_response_cost
    }

    pub fn relative_gap(&self) -> f64 {
        self.gap() / (1.0 + self.equilibrium_cost.abs())
    }
}

fn lqr_problem_for(
    lq: &LqApproximation,
    i: usize,
    a: Vec<DMatrix<f64>>,
    drift: Vec<DVector<f64>>,
    extra_hessian: Vec<DMatrix<f64>>,
    extra_gradient: Vec<DVector<f64>>,
) -> LqrProblem {
    let mut state_hessians: Vec<_> = lq
        .stage_costs
        .iter()
        .zip(&extra_hessian)
        .map(|(c, e)| &c[i].state_hessian + e)
        .collect();
    let mut state_gradients: Vec<_> = lq
        .stage_costs
        .iter()
        .zip(&extra_gradient)
        .map(|(c, e)| &c[i].state_gradient + e)
        .collect();
    state_hessians.push(lq.terminal_costs[i].state_hessian.clone());
    state_gradients.push(lq.terminal_costs[i].state_gradient.clone());
    LqrProblem {
        a,
        b: lq.dynamics.iter().map(|d| d.b[i].clone()).collect(),
        drift,
        state_hessians,
        state_gradients,
        input_hessians: lq
            .stage_costs
            .iter()
            .map(|c| c[i].input_hessians[i].clone())
            .collect(),
        input_gradients: lq
            .stage_costs
            .iter()
            .map(|c| c[i].input_gradients[i].clone())
            .collect(),
    }
}

/// Best response of player `i` over input sequences, with every opponent's
/// realized input sequence (under `strategies` from `dx0`) held fixed.
pub fn openloop_best_response_gap(
    lq: &LqApproximation,
    strategies: &StrategySet,
    dx0: &DVector<f64>,
    i: usize,
) -> Result<GapReport> {
    let (xs, us) = strategies.simulate(lq, dx0);
    let equilibrium_cost = lq.cost(i, &xs, &us);

    let n = lq.state_dim();
    let drift: Vec<DVector<f64>> = lq
        .dynamics
        .iter()
        .enumerate()
        .map(|(k, stage)| {
            (0..lq.num_players())
                .filter(|&j| j != i)
                .fold(DVector::zeros(n), |acc, j| acc + &stage.b[j] * &us[j][k])
        })
        .collect();
    let horizon = lq.horizon();
    let problem = lqr_problem_for(
        lq,
        i,
        lq.dynamics.iter().map(|d| d.a.clone()).collect(),
        drift.clone(),
        vec![DMatrix::zeros(n, n); horizon],
        vec![DVector::zeros(n); horizon],
    );
    let br = solve_lqr(&problem)?;

    let mut br_xs = vec![dx0.clone()];
    let mut br_us = us.clone();
    for k in 0..horizon {
        let x = &br_xs[k];
        let u = -(&br.gains[k] * x) - &br.feedforward[k];
        let next = &problem.a[k] * x + &problem.b[k] * &u + &drift[k];
        br_us[i][k] = u;
        br_xs.push(next);
    }
    Ok(GapReport {
        equilibrium_cost,
        best_response_cost: lq.cost(i, &br_xs, &br_us),
    })
}

/// Exact best response of player `i` over affine feedback laws against the
/// opponents' frozen laws `u^j = -K^j x - k^j`.
pub fn feedback_best_response(
    lq: &LqApproximation,
    strategies: &StrategySet,
    i: usize,
) -> Result<LqrSolution> {
    let n = lq.state_dim();
    let mut a = Vec::with_capacity(lq.horizon());
    let mut drift = Vec::with_capacity(lq.horizon());
    let mut extra_h = Vec::with_capacity(lq.horizon());
    let mut extra_g = Vec::with_capacity(lq.horizon());
    for (k, stage) in lq.dynamics.iter().enumerate() {
        let cost = &lq.stage_costs[k][i];
        let mut a_k = stage.a.clone();
        let mut c_k = DVector::zeros(n);
        let mut h_k = DMatrix::zeros(n, n);
        let mut g_k = DVector::zeros(n);
        for j in (0..lq.num_players()).filter(|&j| j != i) {
            let (gain, ff) = (&strategies.gains[k][j], &strategies.feedforward[k][j]);
            a_k -= &stage.b[j] * gain;
            c_k -= &stage.b[j] * ff;
            // Opponent inputs enter player i's cost through R^{ij}, r^{ij}.
            h_k += gain.transpose() * &cost.input_hessians[j] * gain;
            g_k += gain.transpose() * (&cost.input_hessians[j] * ff - &cost.input_gradients[j]);
        }
        a.push(a_k);
        drift.push(c_k);
        extra_h.push(h_k);
        extra_g.push(g_k);
    }
    solve_lqr(&lqr_problem_for(lq, i, a, drift, extra_h, extra_g))
}

/// Cost improvement available to player `i` by switching to its exact
/// feedback best response, evaluated from `dx0`.
pub fn feedback_best_response_gap(
    lq: &LqApproximation,
    strategies: &StrategySet,
    dx0: &DVector<f64>,
    i: usize,
) -> Result<GapReport> {
    let (xs, us) = strategies.simulate(lq, dx0);
    let equilibrium_cost = lq.cost(i, &xs, &us);
    let br = feedback_best_response(lq, strategies, i)?;
    let mut gains = strategies.gains.clone();
    let mut ff = strategies.feedforward.clone();
    for k in 0..lq.horizon() {
        gains[k][i] = br.gains[k].clone();
        ff[k][i] = br.feedforward[k].clone();
    }
    let (br_xs, br_us) = simulate_affine(lq, &gains, &ff, dx0);
    Ok(GapReport {
        equilibrium_cost,
        best_response_cost: lq.cost(i, &br_xs, &br_us),
    })
}
