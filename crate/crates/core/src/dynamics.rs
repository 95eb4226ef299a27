//! Curvilinear point-mass vehicle model, RK4 discretization and the exact
//! Jacobians of the discrete step map.
//!
//! Player state layout is `[s, V, n, chi, a_x, a_y]`, input layout `[j_x, j_y]`.
//! The joint state stacks players in a fixed order.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::Track;

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = 2;

/// Speed floor guarding the `1/V` term of the heading rate.
pub const V_MIN: f64 = 0.1;

pub const IDX_S: usize = 0;
pub const IDX_V: usize = 1;
pub const IDX_N: usize = 2;
pub const IDX_CHI: usize = 3;
pub const IDX_AX: usize = 4;
pub const IDX_AY: usize = 5;

pub type Vec6 = SVector<f64, STATE_DIM>;
pub type Mat6 = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Mat62 = SMatrix<f64, STATE_DIM, INPUT_DIM>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerState {
    pub s: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
    pub chi: f64,
    pub ax: f64,
    pub ay: f64,
}

impl PlayerState {
    pub fn new(s: f64, v: f64, n: f64, chi: f64, ax: f64, ay: f64) -> Self {
        Self {
            s,
            v,
            n,
            chi,
            ax,
            ay,
        }
    }

    pub fn to_vec6(self) -> Vec6 {
        Vec6::new(self.s, self.v, self.n, self.chi, self.ax, self.ay)
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4], x[5])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlayerInput {
    pub jx: f64,
    pub jy: f64,
}

impl PlayerInput {
    pub fn new(jx: f64, jy: f64) -> Self {
        Self { jx, jy }
    }

    pub fn to_dvector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.jx, self.jy])
    }
}

/// Joint state of all players, in game order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub players: Vec<PlayerState>,
}

impl JointState {
    pub fn new(players: Vec<PlayerState>) -> Self {
        Self { players }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.players.len() * STATE_DIM,
            self.players
                .iter()
                .flat_map(|p| p.to_vec6().into_iter().copied().collect::<Vec<_>>()),
        )
    }

    pub fn from_dvector(x: &DVector<f64>) -> Self {
        Self {
            players: x
                .as_slice()
                .chunks(STATE_DIM)
                .map(PlayerState::from_slice)
                .collect(),
        }
    }
}

/// Piecewise-linear map `V -> value` given by `(V, value)` knots sorted by
/// speed. Constant beyond the first and last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedTable(pub Vec<(f64, f64)>);

impl SpeedTable {
    pub fn constant(value: f64) -> Self {
        Self(vec![(0.0, value)])
    }

    /// Value and slope at `v`. At a knot the slope of the segment to the right is used.
    pub fn eval(&self, v: f64) -> (f64, f64) {
        let pts = &self.0;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if v < first.0 {
            return (first.1, 0.0);
        }
        if v >= last.0 {
            return (last.1, 0.0);
        }
        let idx = pts.partition_point(|p| p.0 <= v) - 1;
        let (v0, y0) = pts[idx];
        let (v1, y1) = pts[idx + 1];
        let slope = (y1 - y0) / (v1 - v0);
        (y0 + slope * (v - v0), slope)
    }

    fn check(&self, name: &str) -> Vec<String> {
        let mut errors = Vec::new();
        if self.0.is_empty() {
            errors.push(format!("{name}: at least one knot is required"));
            return errors;
        }
        if self
            .0
            .windows(2)
            .any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater))
        {
            errors.push(format!("{name}: knot speeds must be strictly increasing"));
        }
        if self
            .0
            .iter()
            .any(|&(v, y)| !v.is_finite() || !y.is_finite() || y < 0.0)
        {
            errors.push(format!("{name}: values must be finite and non-negative"));
        }
        errors
    }
}

/// Velocity-dependent acceleration limits: `a_x <= a_x_max(V)` and
/// `sqrt(a_x^2 + a_y^2) <= rho(V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GGDiamond {
    #[serde(rename = "a_x_max_table")]
    pub a_x_max: SpeedTable,
    #[serde(rename = "rho_table")]
    pub rho: SpeedTable,
}

impl GGDiamond {
    /// `a_x_max(V) = a0 (1 - V / v_max)` clipped at zero, constant `rho`.
    pub fn linear(v_max: f64, a0: f64, rho: f64) -> Self {
        Self {
            a_x_max: SpeedTable(vec![(0.0, a0), (v_max, 0.0)]),
            rho: SpeedTable::constant(rho),
        }
    }

    pub fn check(&self, path: &str) -> Vec<String> {
        let mut errors = self.a_x_max.check(&format!("{path}.a_x_max_table"));
        if errors.is_empty() {
            let pts = &self.a_x_max.0;
            if pts.windows(2).any(|w| w[1].1 > w[0].1) {
                errors.push(format!("{path}.a_x_max_table: must be non-increasing in V"));
            }
            if pts[pts.len() - 1].1 != 0.0 {
                errors.push(format!("{path}.a_x_max_table: must reach 0 at V_max"));
            }
        }
        errors.extend(self.rho.check(&format!("{path}.rho_table")));
        errors
    }

    /// Speed at which `a_x_max` first reaches zero.
    pub fn v_max(&self) -> f64 {
        self.a_x_max
            .0
            .iter()
            .find(|p| p.1 == 0.0)
            .map_or(f64::INFINITY, |p| p.0)
    }
}

/// Time derivative of one player's state. `speed_floored` is set when the
/// `1/V` term was evaluated at [`V_MIN`] instead of the actual speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub rate: PlayerState,
    pub speed_floored: bool,
}

fn rate_vec(x: &Vec6, u: &[f64; 2], kappa: f64) -> Result<(Vec6, bool)> {
    let (v, n, chi, ay) = (x[IDX_V], x[IDX_N], x[IDX_CHI], x[IDX_AY]);
    let denom = 1.0 - n * kappa;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::Singularity {
            n,
            kappa,
            denominator: denom,
        });
    }
    let floored = v < V_MIN;
    let v_eff = v.max(V_MIN);
    let s_dot = v * chi.cos() / denom;
    Ok((
        Vec6::new(
            s_dot,
            x[IDX_AX],
            v * chi.sin(),
            ay / v_eff - kappa * s_dot,
            u[0],
            u[1],
        ),
        floored,
    ))
}

/// Continuous-time Jacobian of the player dynamics with respect to the state.
/// Curvature is piecewise constant, so its arc-length derivative is zero.
fn rate_jacobian(x: &Vec6, kappa: f64) -> Mat6 {
    let (v, n, chi, ay) = (x[IDX_V], x[IDX_N], x[IDX_CHI], x[IDX_AY]);
    let denom = 1.0 - n * kappa;
    let (sc, cc) = chi.sin_cos();
    let mut j = Mat6::zeros();
    // s_dot = V cos(chi) / D
    let ds_dv = cc / denom;
    let ds_dn = v * cc * kappa / (denom * denom);
    let ds_dchi = -v * sc / denom;
    j[(IDX_S, IDX_V)] = ds_dv;
    j[(IDX_S, IDX_N)] = ds_dn;
    j[(IDX_S, IDX_CHI)] = ds_dchi;
    j[(IDX_V, IDX_AX)] = 1.0;
    j[(IDX_N, IDX_V)] = sc;
    j[(IDX_N, IDX_CHI)] = v * cc;
    // chi_dot = a_y / V - kappa * s_dot
    let (day_dv, day_day) = if v < V_MIN {
        (0.0, 1.0 / V_MIN)
    } else {
        (-ay / (v * v), 1.0 / v)
    };
    j[(IDX_CHI, IDX_V)] = day_dv - kappa * ds_dv;
    j[(IDX_CHI, IDX_N)] = -kappa * ds_dn;
    j[(IDX_CHI, IDX_CHI)] = -kappa * ds_dchi;
    j[(IDX_CHI, IDX_AY)] = day_day;
    j
}

fn input_jacobian() -> Mat62 {
    let mut b = Mat62::zeros();
    b[(IDX_AX, 0)] = 1.0;
    b[(IDX_AY, 1)] = 1.0;
    b
}

/// Time derivative of a player's state on `track`.
pub fn derivative(state: &PlayerState, input: &PlayerInput, track: &Track) -> Result<StateRate> {
    let kappa = track.curvature_clamped(state.s);
    let (r, floored) = rate_vec(&state.to_vec6(), &[input.jx, input.jy], kappa)?;
    Ok(StateRate {
        rate: PlayerState::from_slice(r.as_slice()),
        speed_floored: floored,
    })
}

/// Continuous-time system `x' = f(x, u)` with analytic Jacobians, stepped
/// with a zero-order hold on `u`.
pub trait ContinuousSystem<const N: usize, const M: usize> {
    /// Returns the rate and whether the speed floor was hit.
    fn rate(&self, x: &SVector<f64, N>, u: &SVector<f64, M>) -> Result<(SVector<f64, N>, bool)>;
    fn jacobians(
        &self,
        x: &SVector<f64, N>,
        u: &SVector<f64, M>,
    ) -> (SMatrix<f64, N, N>, SMatrix<f64, N, M>);
}

/// Output of one RK4 step, optionally with the step-map Jacobians.
pub struct Rk4Step<const N: usize, const M: usize> {
    pub next: SVector<f64, N>,
    pub floored: usize,
    pub jacobians: Option<(SMatrix<f64, N, N>, SMatrix<f64, N, M>)>,
}

/// Classic RK4 step, differentiated stage by stage when `with_jac` is set.
pub fn rk4<S, const N: usize, const M: usize>(
    sys: &S,
    x: &SVector<f64, N>,
    u: &SVector<f64, M>,
    dt: f64,
    with_jac: bool,
) -> Result<Rk4Step<N, M>>
where
    S: ContinuousSystem<N, M>,
{
    let mut floored = 0;
    let mut eval = |y: &SVector<f64, N>| -> Result<SVector<f64, N>> {
        let (r, f) = sys.rate(y, u)?;
        floored += f as usize;
        Ok(r)
    };
    let x1 = *x;
    let k1 = eval(&x1)?;
    let x2 = x + k1 * (0.5 * dt);
    let k2 = eval(&x2)?;
    let x3 = x + k2 * (0.5 * dt);
    let k3 = eval(&x3)?;
    let x4 = x + k3 * dt;
    let k4 = eval(&x4)?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let jacobians = with_jac.then(|| {
        let eye = SMatrix::<f64, N, N>::identity();
        let (dk1_dx, dk1_du) = sys.jacobians(&x1, u);
        let (j2, f2) = sys.jacobians(&x2, u);
        let dk2_dx = j2 * (eye + dk1_dx * (0.5 * dt));
        let dk2_du = j2 * dk1_du * (0.5 * dt) + f2;
        let (j3, f3) = sys.jacobians(&x3, u);
        let dk3_dx = j3 * (eye + dk2_dx * (0.5 * dt));
        let dk3_du = j3 * dk2_du * (0.5 * dt) + f3;
        let (j4, f4) = sys.jacobians(&x4, u);
        let dk4_dx = j4 * (eye + dk3_dx * dt);
        let dk4_du = j4 * dk3_du * dt + f4;
        let a = eye + (dk1_dx + dk2_dx * 2.0 + dk3_dx * 2.0 + dk4_dx) * (dt / 6.0);
        let b = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * (dt / 6.0);
        (a, b)
    });
    Ok(Rk4Step {
        next,
        floored,
        jacobians,
    })
}

/// The curvilinear point-mass model of one vehicle on a track.
pub struct PointMass<'a> {
    pub track: &'a Track,
}

impl ContinuousSystem<STATE_DIM, INPUT_DIM> for PointMass<'_> {
    fn rate(&self, x: &Vec6, u: &SVector<f64, INPUT_DIM>) -> Result<(Vec6, bool)> {
        rate_vec(x, &[u[0], u[1]], self.track.curvature_clamped(x[IDX_S]))
    }

    fn jacobians(&self, x: &Vec6, _u: &SVector<f64, INPUT_DIM>) -> (Mat6, Mat62) {
        (
            rate_jacobian(x, self.track.curvature_clamped(x[IDX_S])),
            input_jacobian(),
        )
    }
}

fn rk4_player(
    x: &Vec6,
    u: &[f64; 2],
    track: &Track,
    dt: f64,
    with_jac: bool,
) -> Result<Rk4Step<STATE_DIM, INPUT_DIM>> {
    rk4(
        &PointMass { track },
        x,
        &SVector::<f64, INPUT_DIM>::new(u[0], u[1]),
        dt,
        with_jac,
    )
}

/// One RK4 step of the stacked dynamics. Players evolve independently.
pub fn step(
    joint: &JointState,
    inputs: &[PlayerInput],
    track: &Track,
    dt: f64,
) -> Result<JointState> {
    if inputs.len() != joint.players.len() {
        return Err(Error::Dimension(format!(
            "{} inputs for {} players",
            inputs.len(),
            joint.players.len()
        )));
    }
    let x = joint.to_dvector();
    let u: Vec<DVector<f64>> = inputs.iter().map(|u| u.to_dvector()).collect();
    let (next, _) = step_vector(&x, &u, track, dt)?;
    Ok(JointState::from_dvector(&next))
}

/// [`step`] on the stacked vector form. Returns the number of RK4 stage
/// evaluations that hit the speed floor alongside the next state.
pub fn step_vector(
    x: &DVector<f64>,
    u: &[DVector<f64>],
    track: &Track,
    dt: f64,
) -> Result<(DVector<f64>, usize)> {
    let mut next = DVector::zeros(x.len());
    let mut floored = 0;
    for (i, ui) in u.iter().enumerate() {
        let xi = Vec6::from_column_slice(&x.as_slice()[i * STATE_DIM..(i + 1) * STATE_DIM]);
        let r = rk4_player(&xi, &[ui[0], ui[1]], track, dt, false)?;
        next.rows_mut(i * STATE_DIM, STATE_DIM).copy_from(&r.next);
        floored += r.floored;
    }
    Ok((next, floored))
}

/// Jacobians `(A, [B^1..B^N])` of the RK4 step map at `(x, u)`. `A` is block
/// diagonal and `B^i` is nonzero only in player `i`'s rows.
pub fn step_jacobians(
    x: &DVector<f64>,
    u: &[DVector<f64>],
    track: &Track,
    dt: f64,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let n = x.len();
    let mut a = DMatrix::zeros(n, n);
    let mut bs = Vec::with_capacity(u.len());
    for (i, ui) in u.iter().enumerate() {
        let off = i * STATE_DIM;
        let xi = Vec6::from_column_slice(&x.as_slice()[off..off + STATE_DIM]);
        let r = rk4_player(&xi, &[ui[0], ui[1]], track, dt, true)?;
        let (ai, bi) = r.jacobians.expect("jacobian requested");
        a.view_mut((off, off), (STATE_DIM, STATE_DIM))
            .copy_from(&ai);
        let mut b = DMatrix::zeros(n, INPUT_DIM);
        b.view_mut((off, 0), (STATE_DIM, INPUT_DIM)).copy_from(&bi);
        bs.push(b);
    }
    Ok((a, bs))
}

/// Simulates `K` steps from `x0`; `inputs[i][k]` is player `i`'s input at stage `k`.
/// Returns the `K + 1` joint states.
pub fn rollout(
    x0: &JointState,
    inputs: &[Vec<PlayerInput>],
    track: &Track,
    dt: f64,
) -> Result<Vec<JointState>> {
    if inputs.len() != x0.players.len() {
        return Err(Error::Dimension(format!(
            "{} input sequences for {} players",
            inputs.len(),
            x0.players.len()
        )));
    }
    let horizon = inputs.first().map_or(0, Vec::len);
    if inputs.iter().any(|seq| seq.len() != horizon) {
        return Err(Error::Dimension("input sequences differ in length".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    for k in 0..horizon {
        let u: Vec<PlayerInput> = inputs.iter().map(|seq| seq[k]).collect();
        let next = step(&states[k], &u, track, dt).map_err(|e| e.at_stage(k))?;
        states.push(next);
    }
    Ok(states)
}
