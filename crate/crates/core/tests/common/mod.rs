#![allow(dead_code)]

use ilqgame::costs::CostParams;
use ilqgame::dynamics::{PlayerState, STATE_DIM};
use ilqgame::racing::{RacingGame, RacingPlayer};
use ilqgame::{GGDiamond, Track};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// `|a - b|_max / max(1, |b|_max)`
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * step)));
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let jac = fd_jacobian(|y| DVector::from_element(1, f(y)), x, h);
    jac.row(0).transpose()
}

/// Constant-curvature ring with a two-player racing game on it.
pub fn curved_game(c_g: f64) -> RacingGame {
    let track = Track::new(vec![ilqgame::TrackSegment::new(2000.0, 0.02, 6.0, 6.0)]).unwrap();
    let params = CostParams {
        c_g,
        ..CostParams::default()
    };
    let players = (0..2)
        .map(|_| RacingPlayer {
            params,
            gg: GGDiamond::linear(20.0, 8.0, 12.0),
        })
        .collect();
    RacingGame::new(track, players, 0.1)
}

/// A random joint state of two nearby players inside the corridor.
pub fn random_racing_point(rng: &mut ChaCha8Rng) -> (DVector<f64>, Vec<DVector<f64>>) {
    let s1 = rng.random_range(100.0..1500.0);
    let ego = PlayerState::new(
        s1,
        rng.random_range(5.0..28.0),
        rng.random_range(-7.0..7.0),
        rng.random_range(-0.3..0.3),
        rng.random_range(-9.0..9.0),
        rng.random_range(-9.0..9.0),
    );
    let opp = PlayerState::new(
        s1 + rng.random_range(-8.0..8.0),
        rng.random_range(5.0..28.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-0.3..0.3),
        rng.random_range(-9.0..9.0),
        rng.random_range(-9.0..9.0),
    );
    let mut x = DVector::zeros(2 * STATE_DIM);
    x.rows_mut(0, STATE_DIM).copy_from(&ego.to_vec6());
    x.rows_mut(STATE_DIM, STATE_DIM).copy_from(&opp.to_vec6());
    let u = (0..2).map(|_| random_vector(rng, 2, 6.0)).collect();
    (x, u)
}

/// Max lateral excursion `max_k |n_k - n_0|` of a player.
pub fn excursion(traj: &ilqgame::GameTrajectory, i: usize) -> f64 {
    ilqgame::racing::lateral_excursion(traj, i)
}
