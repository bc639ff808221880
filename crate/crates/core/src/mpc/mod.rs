//! Receding-horizon tracking controller.
//!
//! Each solve runs a short SQP loop: roll the nominal inputs through the
//! nonlinear model, linearize along the rollout, condense the dynamics into a
//! QP over input perturbations, solve it with [`qp::qp_solve`] and take a
//! backtracking step on the true nonlinear cost.

pub mod qp;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    self, ControlInput, DynamicsParams, InputVector, State, INPUT_DIM, STATE_DIM,
};
use crate::geometry::Polytope;
use qp::{QpSettings, QpStatus};

/// Weight on constraint violation in the line-search merit function.
const VIOLATION_WEIGHT: f64 = 1e3;
const MIN_STEP: f64 = 1.0 / 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC config: {0}")]
    Config(String),
    #[error("reference window has {got} samples, expected {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("{got} step polytopes for {expected} reference samples")]
    PolytopeCount { expected: usize, got: usize },
    #[error("step polytope {0} is empty")]
    EmptyPolytope(usize),
    #[error(transparent)]
    Qp(#[from] qp::QpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub dt: f64,
    /// Tracking weights on x, y, z and yaw.
    pub q: [f64; 4],
    /// Weights on rate commands and thrust deviation from hover.
    pub r: [f64; 4],
    pub r_delta: [f64; 4],
    pub q_n: [f64; 4],
    pub sqp_max_iters: usize,
    /// SQP stops once the merit decrease falls below `sqp_tol * max(1, merit)`.
    pub sqp_tol: f64,
    pub qp_eps_abs: f64,
    pub qp_eps_rel: f64,
    pub qp_max_iters: usize,
    /// Soften the position rows with penalized slacks instead of failing.
    pub slack_mode: bool,
    pub slack_weight: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let q = [20.0, 20.0, 20.0, 2.0];
        Self {
            horizon: 20,
            dt: 0.05,
            q,
            r: [0.5, 0.5, 0.5, 0.2],
            r_delta: [1.0, 1.0, 1.0, 0.5],
            q_n: q.map(|w| 5.0 * w),
            sqp_max_iters: 5,
            sqp_tol: 1e-4,
            qp_eps_abs: 1e-5,
            qp_eps_rel: 1e-5,
            qp_max_iters: 2000,
            slack_mode: false,
            slack_weight: 1e4,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon < 2 {
            return Err(MpcError::Config(format!("horizon {} < 2", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(MpcError::Config(format!("dt {} must be positive", self.dt)));
        }
        let weights = self
            .q
            .iter()
            .chain(&self.r)
            .chain(&self.r_delta)
            .chain(&self.q_n);
        if weights.clone().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(MpcError::Config(
                "weights must be finite and non-negative".into(),
            ));
        }
        for (name, v) in [
            ("sqp_tol", self.sqp_tol),
            ("qp_eps_abs", self.qp_eps_abs),
            ("qp_eps_rel", self.qp_eps_rel),
            ("slack_weight", self.slack_weight),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MpcError::Config(format!("{name} must be positive")));
            }
        }
        if self.sqp_max_iters == 0 || self.qp_max_iters == 0 {
            return Err(MpcError::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }

    fn qp_settings(&self) -> QpSettings {
        QpSettings {
            eps_abs: self.qp_eps_abs,
            eps_rel: self.qp_eps_rel,
            max_iters: self.qp_max_iters,
            ..QpSettings::default()
        }
    }
}

/// Position and yaw the controller should track at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefPoint {
    pub p: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StateBounds {
    /// Per-axis speed limit.
    pub v_max: [f64; 3],
    /// Roll and pitch magnitude limit.
    pub tilt_max: f64,
}

impl Default for StateBounds {
    fn default() -> Self {
        Self {
            v_max: [3.0, 3.0, 3.0],
            tilt_max: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub x0: State,
    /// N+1 references; entry 0 corresponds to `x0`.
    pub reference: Vec<RefPoint>,
    /// N+1 position polytopes; entry 0 is not enforced.
    pub step_polytopes: Vec<Polytope>,
    pub model: DynamicsParams,
    pub state_bounds: StateBounds,
    /// Input applied on the previous tick, for the first variation term.
    pub u_prev: Option<ControlInput>,
    /// Nominal input sequence to start from (length N).
    pub warm_inputs: Option<Vec<ControlInput>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MpcStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub states: Vec<State>,
    pub inputs: Vec<ControlInput>,
    pub cost: f64,
    pub sqp_iters: usize,
    pub qp_iters: usize,
    /// Primal and dual residuals of the last QP.
    pub qp_residuals: (f64, f64),
    /// Stationarity residual of the last QP at the returned multipliers.
    pub kkt_stationarity: f64,
    /// Merit value of each accepted iterate, starting with the initial guess.
    pub merit_history: Vec<f64>,
    pub status: MpcStatus,
}

/// One bound row `lo <= n . p <= hi` on position.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PosRow {
    n: Vector3<f64>,
    lo: f64,
    hi: f64,
}

/// Pair opposite half-spaces into two-sided rows.
fn merged_rows(poly: &Polytope) -> Vec<PosRow> {
    let a = poly.normals();
    let b = poly.offsets();
    let normal = |i: usize| Vector3::new(a[(i, 0)], a[(i, 1)], a[(i, 2)]);
    let mut used = vec![false; poly.rows()];
    let mut rows = Vec::new();
    for i in 0..poly.rows() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let ni = normal(i);
        let partner = (i + 1..poly.rows()).find(|&j| !used[j] && (normal(j) + ni).amax() <= 1e-12);
        match partner {
            Some(j) => {
                used[j] = true;
                rows.push(PosRow {
                    n: ni,
                    lo: -b[j],
                    hi: b[i],
                });
            }
            None => rows.push(PosRow {
                n: ni,
                lo: f64::NEG_INFINITY,
                hi: b[i],
            }),
        }
    }
    rows
}

fn polytope_is_empty(rows: &[PosRow]) -> bool {
    if rows.iter().any(|r| r.lo > r.hi + 1e-12) {
        return true;
    }
    let axis_aligned = rows
        .iter()
        .all(|r| r.n.iter().filter(|c| **c != 0.0).count() == 1);
    if axis_aligned {
        return false;
    }
    let h = DMatrix::identity(3, 3) * 1e-6;
    let f = DVector::zeros(3);
    let a = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].n[j]);
    let l = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.lo));
    let u = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.hi));
    matches!(
        qp::qp_solve(&h, &f, &a, &l, &u, &QpSettings::default(), None).map(|s| s.status),
        Ok(QpStatus::PrimalInfeasible)
    )
}

fn row_violation(r: &PosRow, p: &Vector3<f64>) -> f64 {
    let v = r.n.dot(p);
    (r.lo - v).max(v - r.hi).max(0.0)
}

struct Rollout {
    states: Vec<State>,
    cost: f64,
    violation: f64,
}

impl Rollout {
    fn merit(&self) -> f64 {
        self.cost + VIOLATION_WEIGHT * self.violation
    }
}

/// Solver context shared by the SQP iterations of one solve.
struct Ctx<'a> {
    problem: &'a MpcProblem,
    cfg: &'a MpcConfig,
    model: DynamicsParams,
    rows: Vec<Vec<PosRow>>,
    hover: InputVector,
    lo: InputVector,
    hi: InputVector,
    u_prev: InputVector,
}

impl Ctx<'_> {
    fn n(&self) -> usize {
        self.cfg.horizon
    }

    fn stage_weights(&self, k: usize) -> &[f64; 4] {
        if k == self.n() {
            &self.cfg.q_n
        } else {
            &self.cfg.q
        }
    }

    fn rollout(&self, inputs: &[InputVector]) -> Rollout {
        let n = self.n();
        let mut states = Vec::with_capacity(n + 1);
        states.push(self.problem.x0);
        let mut cost = 0.0;
        let mut violation = 0.0;
        let sb = &self.problem.state_bounds;
        for (k, u) in inputs.iter().enumerate() {
            let ci = ControlInput::from_vector(u);
            let next = dynamics::step(&states[k], &ci, &self.model, self.cfg.dt);
            let kk = k + 1;
            let e = tracking_error(&next, &self.problem.reference[kk]);
            let w = self.stage_weights(kk);
            cost += (0..4).map(|i| w[i] * e[i] * e[i]).sum::<f64>();
            let du = u - self.hover;
            cost += (0..4).map(|i| self.cfg.r[i] * du[i] * du[i]).sum::<f64>();
            let prev = if k == 0 { self.u_prev } else { inputs[k - 1] };
            let dd = u - prev;
            cost += (0..4)
                .map(|i| self.cfg.r_delta[i] * dd[i] * dd[i])
                .sum::<f64>();
            for r in &self.rows[kk] {
                violation += row_violation(r, &next.p);
            }
            for i in 0..3 {
                violation += (next.v[i].abs() - sb.v_max[i]).max(0.0);
            }
            for i in 0..2 {
                violation += (next.att[i].abs() - sb.tilt_max).max(0.0);
            }
            states.push(next);
        }
        Rollout {
            states,
            cost,
            violation,
        }
    }

    /// Build and solve the condensed QP around the nominal rollout.
    fn solve_qp(&self, inputs: &[InputVector], nominal: &[State]) -> Result<QpOutcome, MpcError> {
        let n = self.n();
        let nu = INPUT_DIM * n;
        let slack = self.cfg.slack_mode;
        let nv = nu + if slack { n } else { 0 };

        // Sensitivities S_k = d x_k / d u, stacked per step.
        let mut sens: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
        sens.push(DMatrix::zeros(STATE_DIM, nu));
        for k in 0..n {
            let ci = ControlInput::from_vector(&inputs[k]);
            let (a, b) = dynamics::linearize(&nominal[k], &ci, &self.model);
            let a_dyn = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, a.as_slice());
            let mut next = &a_dyn * &sens[k];
            for r in 0..STATE_DIM {
                for c in 0..INPUT_DIM {
                    next[(r, INPUT_DIM * k + c)] += b[(r, c)];
                }
            }
            sens.push(next);
        }

        let mut h = DMatrix::zeros(nv, nv);
        let mut f = DVector::zeros(nv);
        // Tracking terms on (p, yaw).
        for k in 1..=n {
            let e = tracking_error(&nominal[k], &self.problem.reference[k]);
            let w = self.stage_weights(k);
            for (i, row) in [0usize, 1, 2, 8].into_iter().enumerate() {
                if w[i] == 0.0 {
                    continue;
                }
                let s_row = sens[k].row(row);
                // Only columns of inputs before step k are nonzero.
                let cols = INPUT_DIM * k;
                for a in 0..cols {
                    let sa = s_row[a];
                    if sa == 0.0 {
                        continue;
                    }
                    f[a] += 2.0 * w[i] * e[i] * sa;
                    for b in 0..cols {
                        h[(a, b)] += 2.0 * w[i] * sa * s_row[b];
                    }
                }
            }
        }
        // Effort and variation terms.
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            for i in 0..INPUT_DIM {
                let idx = INPUT_DIM * k + i;
                let r = self.cfg.r[i];
                h[(idx, idx)] += 2.0 * r;
                f[idx] += 2.0 * r * (inputs[k][i] - self.hover[i]);
                let rd = self.cfg.r_delta[i];
                let prev = if k == 0 {
                    self.u_prev[i]
                } else {
                    inputs[k - 1][i]
                };
                let d = inputs[k][i] - prev;
                h[(idx, idx)] += 2.0 * rd;
                f[idx] += 2.0 * rd * d;
                if k > 0 {
                    let pidx = idx - INPUT_DIM;
                    h[(pidx, pidx)] += 2.0 * rd;
                    h[(idx, pidx)] -= 2.0 * rd;
                    h[(pidx, idx)] -= 2.0 * rd;
                    f[pidx] -= 2.0 * rd * d;
                }
            }
        }
        if slack {
            for k in 0..n {
                let idx = nu + k;
                h[(idx, idx)] += 2.0 * self.cfg.slack_weight;
                f[idx] += self.cfg.slack_weight;
            }
        }

        // Constraint rows.
        let sb = &self.problem.state_bounds;
        let mut a_rows: Vec<Vec<f64>> = Vec::new();
        let mut l: Vec<f64> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let mut push = |row: Vec<f64>, lo: f64, hi: f64| {
            a_rows.push(row);
            l.push(lo);
            u.push(hi);
        };
        for k in 0..n {
            for i in 0..INPUT_DIM {
                let mut row = vec![0.0; nv];
                row[INPUT_DIM * k + i] = 1.0;
                push(row, self.lo[i] - inputs[k][i], self.hi[i] - inputs[k][i]);
            }
        }
        for k in 1..=n {
            let x = nominal[k].to_vector();
            let s = &sens[k];
            let sens_row = |r: usize| -> Vec<f64> {
                let mut row = vec![0.0; nv];
                for c in 0..INPUT_DIM * k {
                    row[c] = s[(r, c)];
                }
                row
            };
            for i in 0..2 {
                let idx = 6 + i;
                push(sens_row(idx), -sb.tilt_max - x[idx], sb.tilt_max - x[idx]);
            }
            for i in 0..3 {
                let idx = 3 + i;
                push(sens_row(idx), -sb.v_max[i] - x[idx], sb.v_max[i] - x[idx]);
            }
            for pr in &self.rows[k] {
                let mut row = vec![0.0; nv];
                for c in 0..INPUT_DIM * k {
                    row[c] = pr.n[0] * s[(0, c)] + pr.n[1] * s[(1, c)] + pr.n[2] * s[(2, c)];
                }
                let base = pr.n.dot(&nominal[k].p);
                if slack {
                    let mut upper = row.clone();
                    upper[nu + k - 1] = -1.0;
                    push(upper, f64::NEG_INFINITY, pr.hi - base);
                    if pr.lo.is_finite() {
                        row[nu + k - 1] = 1.0;
                        push(row, pr.lo - base, f64::INFINITY);
                    }
                } else {
                    push(row, pr.lo - base, pr.hi - base);
                }
            }
        }
        if slack {
            for k in 0..n {
                let mut row = vec![0.0; nv];
                row[nu + k] = 1.0;
                push(row, 0.0, f64::INFINITY);
            }
        }
        let m = a_rows.len();
        let a = DMatrix::from_fn(m, nv, |i, j| a_rows[i][j]);
        let l = DVector::from_vec(l);
        let u = DVector::from_vec(u);
        let sol = qp::qp_solve(&h, &f, &a, &l, &u, &self.cfg.qp_settings(), None)?;
        let kkt = qp::kkt_residuals(&h, &f, &a, &l, &u, &sol.x, &sol.y);
        let du: Vec<InputVector> = (0..n)
            .map(|k| InputVector::from_fn(|i, _| sol.x[INPUT_DIM * k + i]))
            .collect();
        Ok(QpOutcome {
            du,
            status: sol.status,
            iters: sol.iters,
            residuals: (sol.primal_residual, sol.dual_residual),
            stationarity: kkt.stationarity,
        })
    }
}

struct QpOutcome {
    du: Vec<InputVector>,
    status: QpStatus,
    iters: usize,
    residuals: (f64, f64),
    stationarity: f64,
}

/// Tracking error on (x, y, z, yaw) with the yaw component wrapped.
fn tracking_error(s: &State, r: &RefPoint) -> [f64; 4] {
    let d = s.p - r.p;
    [d.x, d.y, d.z, dynamics::wrap_angle(s.att.z - r.yaw)]
}

fn clamp_input(u: &InputVector, lo: &InputVector, hi: &InputVector) -> InputVector {
    InputVector::from_fn(|i, _| u[i].clamp(lo[i], hi[i]))
}

/// Solve one horizon.
pub fn solve(problem: &MpcProblem, cfg: &MpcConfig) -> Result<MpcSolution, MpcError> {
    cfg.validate()?;
    problem.model.validate().map_err(MpcError::Config)?;
    let n = cfg.horizon;
    if problem.reference.len() != n + 1 {
        return Err(MpcError::WindowLength {
            expected: n + 1,
            got: problem.reference.len(),
        });
    }
    if problem.step_polytopes.len() != n + 1 {
        return Err(MpcError::PolytopeCount {
            expected: n + 1,
            got: problem.step_polytopes.len(),
        });
    }
    let rows: Vec<Vec<PosRow>> = problem.step_polytopes.iter().map(merged_rows).collect();
    for (k, r) in rows.iter().enumerate().skip(1) {
        if polytope_is_empty(r) {
            return Err(MpcError::EmptyPolytope(k));
        }
    }
    let model = DynamicsParams {
        dt: cfg.dt,
        ..problem.model
    };
    let hover = ControlInput::hover(&model).to_vector();
    let ctx = Ctx {
        problem,
        cfg,
        model,
        rows,
        hover,
        lo: model.input_lower(),
        hi: model.input_upper(),
        u_prev: problem.u_prev.map(|u| u.to_vector()).unwrap_or(hover),
    };

    let mut inputs: Vec<InputVector> = match &problem.warm_inputs {
        Some(w) if w.len() == n => w
            .iter()
            .map(|u| clamp_input(&u.to_vector(), &ctx.lo, &ctx.hi))
            .collect(),
        _ => vec![hover; n],
    };
    let mut current = ctx.rollout(&inputs);
    let mut merit_history = vec![current.merit()];
    let mut status = MpcStatus::MaxIters;
    let mut sqp_iters = 0;
    let mut qp_iters = 0;
    let mut residuals = (0.0, 0.0);
    let mut stationarity = 0.0;

    for _ in 0..cfg.sqp_max_iters {
        sqp_iters += 1;
        let out = ctx.solve_qp(&inputs, &current.states)?;
        qp_iters += out.iters;
        residuals = out.residuals;
        stationarity = out.stationarity;
        if out.status == QpStatus::PrimalInfeasible {
            status = MpcStatus::Infeasible;
            break;
        }
        let qp_ok = out.status == QpStatus::Solved && stationarity <= 1e-5;
        let step_norm = out.du.iter().map(|d| d.amax()).fold(0.0_f64, f64::max);
        if step_norm < 1e-9 {
            status = if qp_ok {
                MpcStatus::Optimal
            } else {
                MpcStatus::MaxIters
            };
            break;
        }
        // Backtracking on the merit of the nonlinear rollout.
        let base = current.merit();
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= MIN_STEP {
            let trial: Vec<InputVector> = inputs
                .iter()
                .zip(&out.du)
                .map(|(u, d)| clamp_input(&(u + d * alpha), &ctx.lo, &ctx.hi))
                .collect();
            let r = ctx.rollout(&trial);
            if r.merit() <= base {
                accepted = Some((trial, r));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, r)) = accepted else {
            // No descent along the step: the nominal is as good as it gets.
            status = if qp_ok {
                MpcStatus::Optimal
            } else {
                MpcStatus::MaxIters
            };
            break;
        };
        let decrease = base - r.merit();
        inputs = trial;
        current = r;
        merit_history.push(current.merit());
        if decrease < cfg.sqp_tol * base.max(1.0) {
            status = if qp_ok {
                MpcStatus::Optimal
            } else {
                MpcStatus::MaxIters
            };
            break;
        }
    }

    Ok(MpcSolution {
        states: current.states,
        inputs: inputs.iter().map(ControlInput::from_vector).collect(),
        cost: current.cost,
        sqp_iters,
        qp_iters,
        qp_residuals: residuals,
        kkt_stationarity: stationarity,
        merit_history,
        status,
    })
}

/// Extend a reference window to `len` samples by holding its last entry.
pub fn pad_window(window: &[RefPoint], len: usize) -> Vec<RefPoint> {
    let mut out: Vec<RefPoint> = window.iter().take(len).copied().collect();
    if let Some(last) = out.last().copied() {
        out.resize(len, last);
    }
    out
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub u0: ControlInput,
    pub sol: MpcSolution,
    /// Set when the horizon problem was infeasible and upstream should replan.
    pub replan: bool,
}

/// One control tick: warm start from the shifted previous solution, solve,
/// and return the first input.
#[allow(clippy::too_many_arguments)]
pub fn track_step(
    prev: Option<&MpcSolution>,
    x0: &State,
    ref_window: &[RefPoint],
    step_polytopes: &[Polytope],
    model: &DynamicsParams,
    state_bounds: &StateBounds,
    cfg: &MpcConfig,
) -> Result<TrackOutput, MpcError> {
    let n = cfg.horizon;
    if ref_window.is_empty() {
        return Err(MpcError::WindowLength {
            expected: n + 1,
            got: 0,
        });
    }
    let reference = pad_window(ref_window, n + 1);
    let mut polys: Vec<Polytope> = step_polytopes.iter().take(n + 1).cloned().collect();
    if let Some(last) = polys.last().cloned() {
        polys.resize(n + 1, last);
    }
    let (u_prev, warm_inputs) = match prev {
        Some(p) if p.inputs.len() == n => {
            let mut w: Vec<ControlInput> = p.inputs[1..].to_vec();
            w.push(p.inputs[n - 1]);
            (Some(p.inputs[0]), Some(w))
        }
        _ => (None, None),
    };
    let problem = MpcProblem {
        x0: *x0,
        reference,
        step_polytopes: polys,
        model: *model,
        state_bounds: *state_bounds,
        u_prev,
        warm_inputs,
    };
    let sol = solve(&problem, cfg)?;
    if sol.status == MpcStatus::Infeasible {
        return Ok(TrackOutput {
            u0: ControlInput::hover(model),
            sol,
            replan: true,
        });
    }
    Ok(TrackOutput {
        u0: sol.inputs[0].clamped(model),
        sol,
        replan: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_to_polytope, AxisBox};

    fn big_box() -> Polytope {
        box_to_polytope(&AxisBox::new([-50.0; 3], [50.0; 3]).unwrap())
    }

    fn hover_problem(cfg: &MpcConfig) -> MpcProblem {
        let x0 = State::at_rest(Vector3::new(0.0, 0.0, 2.0), 0.0);
        MpcProblem {
            x0,
            reference: vec![RefPoint { p: x0.p, yaw: 0.0 }; cfg.horizon + 1],
            step_polytopes: vec![big_box(); cfg.horizon + 1],
            model: DynamicsParams::default(),
            state_bounds: StateBounds::default(),
            u_prev: None,
            warm_inputs: None,
        }
    }

    #[test]
    fn merges_box_rows() {
        let rows = merged_rows(&big_box());
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.lo == -50.0 && r.hi == 50.0));
    }

    #[test]
    fn hover_reference_gives_hover_inputs() {
        let cfg = MpcConfig::default();
        let sol = solve(&hover_problem(&cfg), &cfg).unwrap();
        assert_eq!(sol.status, MpcStatus::Optimal);
        assert!(sol.cost.abs() < 1e-6);
        for u in &sol.inputs {
            assert!((u.thrust_cmd - 9.81).abs() < 1e-6);
            assert!(u.rate_cmd.amax() < 1e-6);
        }
    }

    #[test]
    fn rejects_short_window() {
        let cfg = MpcConfig::default();
        let mut p = hover_problem(&cfg);
        p.reference.pop();
        assert!(matches!(
            solve(&p, &cfg),
            Err(MpcError::WindowLength { .. })
        ));
    }

    #[test]
    fn rejects_empty_polytope() {
        let cfg = MpcConfig::default();
        let mut p = hover_problem(&cfg);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, -1.0]);
        p.step_polytopes[3] = Polytope::new(a, b).unwrap();
        assert_eq!(solve(&p, &cfg), Err(MpcError::EmptyPolytope(3)));
    }

    #[test]
    fn pads_by_holding_last() {
        let w = vec![
            RefPoint {
                p: Vector3::zeros(),
                yaw: 0.0,
            },
            RefPoint {
                p: Vector3::x(),
                yaw: 0.5,
            },
        ];
        let out = pad_window(&w, 5);
        assert_eq!(out.len(), 5);
        assert!(out[2..].iter().all(|r| *r == w[1]));
    }

    #[test]
    fn yaw_error_is_wrapped() {
        let s = State::at_rest(Vector3::zeros(), 3.1);
        let e = tracking_error(
            &s,
            &RefPoint {
                p: Vector3::zeros(),
                yaw: -3.1,
            },
        );
        assert!((e[3] - (6.2 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }
}
