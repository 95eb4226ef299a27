//! Racing stage and terminal costs with their analytic quadratization.
//!
//! Soft constraints are one-sided squared hinges; their Hessians are taken
//! on the currently active side. State Hessians are projected onto the PSD
//! cone before they reach the LQ solver.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{GGDiamond, IDX_AX, IDX_AY, IDX_N, IDX_S, IDX_V, STATE_DIM};
use crate::linalg::project_psd;
use crate::track::Track;

/// Below this acceleration norm the gradient of `|a|` is taken as zero.
const NORM_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Jerk weight, symmetric positive definite.
    #[serde(rename = "R")]
    pub r_input: [[f64; 2]; 2],
    pub c_c: f64,
    pub c_w: f64,
    pub c_ax: f64,
    pub c_a: f64,
    pub c_g: f64,
    pub l_veh: f64,
    pub w_veh: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            r_input: [[0.1, 0.0], [0.0, 0.1]],
            c_c: 10.0,
            c_w: 10.0,
            c_ax: 10.0,
            c_a: 10.0,
            c_g: 0.0,
            l_veh: 5.0,
            w_veh: 2.0,
        }
    }
}

impl CostParams {
    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.r_input[0][0],
            self.r_input[0][1],
            self.r_input[1][0],
            self.r_input[1][1],
        )
    }

    pub fn check(&self, path: &str) -> Vec<String> {
        let mut errors = Vec::new();
        for (name, w) in [
            ("c_c", self.c_c),
            ("c_w", self.c_w),
            ("c_ax", self.c_ax),
            ("c_a", self.c_a),
            ("c_g", self.c_g),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                errors.push(format!("{path}.{name}: must be finite and >= 0, got {w}"));
            }
        }
        for (name, v) in [("l_veh", self.l_veh), ("w_veh", self.w_veh)] {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(format!("{path}.{name}: must be > 0, got {v}"));
            }
        }
        let r = self.r_matrix();
        if r[(0, 1)] != r[(1, 0)] {
            errors.push(format!("{path}.R: must be symmetric"));
        } else if !(r[(0, 0)] > 0.0 && r.determinant() > 0.0) {
            errors.push(format!("{path}.R: must be positive definite"));
        }
        errors
    }
}

/// Per-term decomposition of a stage cost.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageCostTerms {
    pub input: f64,
    pub collision: f64,
    pub wall: f64,
    pub ax_limit: f64,
    pub combined_limit: f64,
}

impl StageCostTerms {
    pub fn total(&self) -> f64 {
        self.input + self.collision + self.wall + self.ax_limit + self.combined_limit
    }
}

/// Everything player `i`'s cost needs to know about the game.
#[derive(Debug, Clone, Copy)]
pub struct CostContext<'a> {
    pub params: &'a CostParams,
    pub gg: &'a GGDiamond,
    pub track: &'a Track,
}

fn slot(player: usize, idx: usize) -> usize {
    player * STATE_DIM + idx
}

fn players_in(x: &DVector<f64>) -> usize {
    x.len() / STATE_DIM
}

/// `exp(1 - (ds/l)^2 - (dn/w)^2)^2`, the squared collision kernel.
fn collision_kernel(ds: f64, dn: f64, l: f64, w: f64) -> f64 {
    let (a, b) = (ds / l, dn / w);
    (2.0 * (1.0 - a * a - b * b)).exp()
}

pub fn stage_cost_terms(
    i: usize,
    x: &DVector<f64>,
    u_i: &Vector2<f64>,
    ctx: &CostContext,
) -> StageCostTerms {
    let p = ctx.params;
    let input = (u_i.transpose() * p.r_matrix() * u_i)[(0, 0)];

    let (si, ni) = (x[slot(i, IDX_S)], x[slot(i, IDX_N)]);
    let collision = (0..players_in(x))
        .filter(|&j| j != i)
        .map(|j| {
            p.c_c
                * collision_kernel(
                    si - x[slot(j, IDX_S)],
                    ni - x[slot(j, IDX_N)],
                    p.l_veh,
                    p.w_veh,
                )
        })
        .sum();

    let (wl, wr) = ctx.track.width_clamped(si);
    let wall = if ni >= wl {
        p.c_w * (ni - wl).powi(2)
    } else if -ni >= wr {
        p.c_w * (ni + wr).powi(2)
    } else {
        0.0
    };

    let (v, ax, ay) = (x[slot(i, IDX_V)], x[slot(i, IDX_AX)], x[slot(i, IDX_AY)]);
    let (ax_max, _) = ctx.gg.a_x_max.eval(v);
    let ax_limit = if ax >= ax_max {
        p.c_ax * (ax - ax_max).powi(2)
    } else {
        0.0
    };

    let (rho, _) = ctx.gg.rho.eval(v);
    let norm = ax.hypot(ay);
    let combined_limit = if norm >= rho {
        p.c_a * (norm - rho).powi(2)
    } else {
        0.0
    };

    StageCostTerms {
        input,
        collision,
        wall,
        ax_limit,
        combined_limit,
    }
}

pub fn stage_cost(i: usize, x: &DVector<f64>, u_i: &Vector2<f64>, ctx: &CostContext) -> f64 {
    stage_cost_terms(i, x, u_i, ctx).total()
}

/// `-s_K^i + c_g * sum_{j != i} s_K^j`.
pub fn terminal_cost(i: usize, x: &DVector<f64>, params: &CostParams) -> f64 {
    (0..players_in(x))
        .map(|j| {
            let s = x[slot(j, IDX_S)];
            if j == i {
                -s
            } else {
                params.c_g * s
            }
        })
        .sum()
}

/// Second-order expansion of a stage cost at a nominal point.
#[derive(Debug, Clone)]
pub struct StageExpansion {
    /// Exact state Hessian, before PSD projection.
    pub state_hessian: DMatrix<f64>,
    pub state_gradient: DVector<f64>,
    pub input_hessian: Matrix2<f64>,
    pub input_gradient: Vector2<f64>,
}

impl StageExpansion {
    pub fn projected_state_hessian(&self) -> DMatrix<f64> {
        project_psd(&self.state_hessian)
    }
}

/// Gradient and Hessian of player `i`'s stage cost. The state/input cross
/// Hessian is identically zero for these costs.
pub fn expand_stage(
    i: usize,
    x: &DVector<f64>,
    u_i: &Vector2<f64>,
    ctx: &CostContext,
) -> StageExpansion {
    let dim = x.len();
    let p = ctx.params;
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);

    let r2 = p.r_matrix() * 2.0;
    let input_gradient = r2 * u_i;

    // Collision, in (ds, dn) = (s_i - s_j, n_i - n_j) coordinates.
    let (si, ni) = (x[slot(i, IDX_S)], x[slot(i, IDX_N)]);
    for j in (0..players_in(x)).filter(|&j| j != i) {
        let ds = si - x[slot(j, IDX_S)];
        let dn = ni - x[slot(j, IDX_N)];
        let (l, w) = (p.l_veh, p.w_veh);
        let e = p.c_c * collision_kernel(ds, dn, l, w);
        if e == 0.0 {
            continue;
        }
        let (a, b) = (ds / l, dn / w);
        let gs = -4.0 * a / l * e;
        let gn = -4.0 * b / w * e;
        let hss = (16.0 * a * a - 4.0) / (l * l) * e;
        let hnn = (16.0 * b * b - 4.0) / (w * w) * e;
        let hsn = 16.0 * a * b / (l * w) * e;
        let slots = [
            (slot(i, IDX_S), slot(i, IDX_N), 1.0),
            (slot(j, IDX_S), slot(j, IDX_N), -1.0),
        ];
        for &(s_a, n_a, sign_a) in &slots {
            g[s_a] += sign_a * gs;
            g[n_a] += sign_a * gn;
            for &(s_b, n_b, sign_b) in &slots {
                let sg = sign_a * sign_b;
                h[(s_a, s_b)] += sg * hss;
                h[(n_a, n_b)] += sg * hnn;
                h[(s_a, n_b)] += sg * hsn;
                h[(n_a, s_b)] += sg * hsn;
            }
        }
    }

    // Track boundaries; widths are piecewise constant in s.
    let n_slot = slot(i, IDX_N);
    let (wl, wr) = ctx.track.width_clamped(si);
    if ni >= wl {
        g[n_slot] += 2.0 * p.c_w * (ni - wl);
        h[(n_slot, n_slot)] += 2.0 * p.c_w;
    } else if -ni >= wr {
        g[n_slot] += 2.0 * p.c_w * (ni + wr);
        h[(n_slot, n_slot)] += 2.0 * p.c_w;
    }

    let (v_slot, ax_slot, ay_slot) = (slot(i, IDX_V), slot(i, IDX_AX), slot(i, IDX_AY));
    let (v, ax, ay) = (x[v_slot], x[ax_slot], x[ay_slot]);

    // Longitudinal limit: c (a_x - a_max(V))^2.
    let (ax_max, dax_max) = ctx.gg.a_x_max.eval(v);
    if ax >= ax_max {
        let viol = ax - ax_max;
        // d viol / d(V, a_x) = (-a_max', 1)
        let dv = [(v_slot, -dax_max), (ax_slot, 1.0)];
        for &(ka, da) in &dv {
            g[ka] += 2.0 * p.c_ax * viol * da;
            for &(kb, db) in &dv {
                h[(ka, kb)] += 2.0 * p.c_ax * da * db;
            }
        }
    }

    // Combined limit: c (|a| - rho(V))^2.
    let (rho, drho) = ctx.gg.rho.eval(v);
    let norm = ax.hypot(ay);
    if norm >= rho {
        let viol = norm - rho;
        let (ux, uy) = if norm < NORM_GUARD {
            (0.0, 0.0)
        } else {
            (ax / norm, ay / norm)
        };
        let dv = [(v_slot, -drho), (ax_slot, ux), (ay_slot, uy)];
        for &(ka, da) in &dv {
            g[ka] += 2.0 * p.c_a * viol * da;
            for &(kb, db) in &dv {
                h[(ka, kb)] += 2.0 * p.c_a * da * db;
            }
        }
        if norm >= NORM_GUARD {
            // Hessian of |a|: (I - a a^T / |a|^2) / |a|
            let c = 2.0 * p.c_a * viol / norm;
            h[(ax_slot, ax_slot)] += c * (1.0 - ux * ux);
            h[(ay_slot, ay_slot)] += c * (1.0 - uy * uy);
            h[(ax_slot, ay_slot)] -= c * ux * uy;
            h[(ay_slot, ax_slot)] -= c * ux * uy;
        }
    }

    StageExpansion {
        state_hessian: h,
        state_gradient: g,
        input_hessian: r2,
        input_gradient,
    }
}

/// `(Q, q, R, r)` for player `i` at a stage, with `Q` projected onto the PSD cone.
pub fn quadratize_stage(
    i: usize,
    x: &DVector<f64>,
    u_i: &Vector2<f64>,
    ctx: &CostContext,
) -> (DMatrix<f64>, DVector<f64>, Matrix2<f64>, Vector2<f64>) {
    let e = expand_stage(i, x, u_i, ctx);
    (
        e.projected_state_hessian(),
        e.state_gradient,
        e.input_hessian,
        e.input_gradient,
    )
}

/// `(Q_K, q_K)` of the linear terminal cost.
pub fn quadratize_terminal(
    i: usize,
    x: &DVector<f64>,
    params: &CostParams,
) -> (DMatrix<f64>, DVector<f64>) {
    let dim = x.len();
    let mut q = DVector::zeros(dim);
    for j in 0..players_in(x) {
        q[slot(j, IDX_S)] = if j == i { -1.0 } else { params.c_g };
    }
    (DMatrix::zeros(dim, dim), q)
}
