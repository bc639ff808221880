//! Point-mass quadrotor model with Euler attitude.
//!
//! Rates integrate directly into roll/pitch/yaw and the mass-normalized
//! thrust acts along body z. The same model drives the simulator and the
//! MPC prediction, so there is no model mismatch unless the simulator's
//! actuator lag is switched on.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

pub const STATE_DIM: usize = 9;
pub const INPUT_DIM: usize = 4;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type InputVector = SVector<f64, INPUT_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, INPUT_DIM>;

/// Vehicle state: position, velocity and roll/pitch/yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub att: Vector3<f64>,
}

impl State {
    pub fn at_rest(p: Vector3<f64>, yaw: f64) -> Self {
        Self {
            p,
            v: Vector3::zeros(),
            att: Vector3::new(0.0, 0.0, yaw),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x.fixed_rows_mut::<3>(6).copy_from(&self.att);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            p: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
            att: x.fixed_rows::<3>(6).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    pub fn yaw(&self) -> f64 {
        self.att.z
    }
}

/// Commanded body rates (roll, pitch, yaw) and mass-normalized thrust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub rate_cmd: Vector3<f64>,
    pub thrust_cmd: f64,
}

impl ControlInput {
    pub fn hover(params: &DynamicsParams) -> Self {
        Self {
            rate_cmd: Vector3::zeros(),
            thrust_cmd: params.g,
        }
    }

    pub fn to_vector(&self) -> InputVector {
        InputVector::new(
            self.rate_cmd.x,
            self.rate_cmd.y,
            self.rate_cmd.z,
            self.thrust_cmd,
        )
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self {
            rate_cmd: Vector3::new(u[0], u[1], u[2]),
            thrust_cmd: u[3],
        }
    }

    /// Saturate into the admissible input set.
    pub fn clamped(&self, params: &DynamicsParams) -> Self {
        let r = params.rate_max;
        Self {
            rate_cmd: self.rate_cmd.map(|w| w.clamp(-r, r)),
            thrust_cmd: self.thrust_cmd.clamp(params.thrust_min, params.thrust_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    pub g: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub rate_max: f64,
    pub dt: f64,
    pub att_limit: f64,
    /// First-order actuator lag applied by the simulator only; 0 disables it.
    pub tau_act: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            thrust_min: 2.0,
            thrust_max: 20.0,
            rate_max: 3.0,
            dt: 0.05,
            att_limit: 1.2,
            tau_act: 0.0,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if !(0.0 <= self.thrust_min && self.thrust_min < self.g && self.g < self.thrust_max) {
            return Err(format!(
                "thrust bounds must satisfy 0 <= min < g < max (min {}, g {}, max {})",
                self.thrust_min, self.g, self.thrust_max
            ));
        }
        if !(self.rate_max > 0.0 && self.att_limit > 0.0 && self.tau_act >= 0.0) {
            return Err("rate_max and att_limit must be positive, tau_act non-negative".into());
        }
        Ok(())
    }

    pub fn input_lower(&self) -> InputVector {
        InputVector::new(
            -self.rate_max,
            -self.rate_max,
            -self.rate_max,
            self.thrust_min,
        )
    }

    pub fn input_upper(&self) -> InputVector {
        InputVector::new(self.rate_max, self.rate_max, self.rate_max, self.thrust_max)
    }
}

/// ZYX Euler rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`, body to world.
pub fn rotation_matrix(att: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let (sy, cy) = att.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Body z axis expressed in the world frame, i.e. the third column of R.
fn thrust_axis(att: &Vector3<f64>) -> Vector3<f64> {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let (sy, cy) = att.z.sin_cos();
    Vector3::new(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr)
}

/// d(thrust_axis)/d(att), columns ordered roll, pitch, yaw.
fn thrust_axis_jacobian(att: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let (sy, cy) = att.z.sin_cos();
    Matrix3::new(
        -cy * sp * sr + sy * cr,
        cy * cp * cr,
        -sy * sp * cr + cy * sr,
        -sy * sp * sr - cy * cr,
        sy * cp * cr,
        cy * sp * cr + sy * sr,
        -cp * sr,
        -sp * cr,
        0.0,
    )
}

fn derivative(x: &StateVector, u: &InputVector, g: f64) -> StateVector {
    let att = Vector3::new(x[6], x[7], x[8]);
    let acc = thrust_axis(&att) * u[3] - Vector3::new(0.0, 0.0, g);
    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
    dx.fixed_rows_mut::<3>(3).copy_from(&acc);
    dx.fixed_rows_mut::<3>(6).copy_from(&u.fixed_rows::<3>(0));
    dx
}

fn derivative_jacobians(x: &StateVector, u: &InputVector) -> (StateJacobian, InputJacobian) {
    let att = Vector3::new(x[6], x[7], x[8]);
    let mut fx = StateJacobian::zeros();
    fx.fixed_view_mut::<3, 3>(0, 3).fill_with_identity();
    fx.fixed_view_mut::<3, 3>(3, 6)
        .copy_from(&(thrust_axis_jacobian(&att) * u[3]));
    let mut fu = InputJacobian::zeros();
    fu.fixed_view_mut::<3, 1>(3, 3)
        .copy_from(&thrust_axis(&att));
    fu.fixed_view_mut::<3, 3>(6, 0).fill_with_identity();
    (fx, fu)
}

fn rk4(x: &StateVector, u: &InputVector, g: f64, dt: f64) -> StateVector {
    let k1 = derivative(x, u, g);
    let k2 = derivative(&(x + k1 * (dt / 2.0)), u, g);
    let k3 = derivative(&(x + k2 * (dt / 2.0)), u, g);
    let k4 = derivative(&(x + k3 * dt), u, g);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn clamp_attitude(x: &mut StateVector, limit: f64) -> [bool; 2] {
    let mut hit = [false; 2];
    for (i, idx) in [6usize, 7].into_iter().enumerate() {
        if x[idx] > limit {
            x[idx] = limit;
            hit[i] = true;
        } else if x[idx] < -limit {
            x[idx] = -limit;
            hit[i] = true;
        }
    }
    hit
}

/// One RK4 step of length `dt` with the input held constant.
pub fn step(s: &State, u: &ControlInput, params: &DynamicsParams, dt: f64) -> State {
    let u = u.clamped(params).to_vector();
    let mut x = rk4(&s.to_vector(), &u, params.g, dt);
    clamp_attitude(&mut x, params.att_limit);
    State::from_vector(&x)
}

/// Exact Jacobians of [`step`] over one control period `params.dt`,
/// obtained by differentiating each RK4 stage.
pub fn linearize(
    s: &State,
    u: &ControlInput,
    params: &DynamicsParams,
) -> (StateJacobian, InputJacobian) {
    let dt = params.dt;
    let g = params.g;
    let uc = u.clamped(params);
    let uv = uc.to_vector();
    let x = s.to_vector();
    let id = StateJacobian::identity();

    let k1 = derivative(&x, &uv, g);
    let (fx1, fu1) = derivative_jacobians(&x, &uv);
    let dk1x = fx1;
    let dk1u = fu1;

    let x2 = x + k1 * (dt / 2.0);
    let k2 = derivative(&x2, &uv, g);
    let (fx2, fu2) = derivative_jacobians(&x2, &uv);
    let dk2x = fx2 * (id + dk1x * (dt / 2.0));
    let dk2u = fx2 * dk1u * (dt / 2.0) + fu2;

    let x3 = x + k2 * (dt / 2.0);
    let k3 = derivative(&x3, &uv, g);
    let (fx3, fu3) = derivative_jacobians(&x3, &uv);
    let dk3x = fx3 * (id + dk2x * (dt / 2.0));
    let dk3u = fx3 * dk2u * (dt / 2.0) + fu3;

    let x4 = x + k3 * dt;
    let (fx4, fu4) = derivative_jacobians(&x4, &uv);
    let dk4x = fx4 * (id + dk3x * dt);
    let dk4u = fx4 * dk3u * dt + fu4;

    let mut a = id + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (dt / 6.0);
    let mut b = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (dt / 6.0);

    // Saturated attitude components do not respond to perturbations.
    let mut next = x + (k1 + k2 * 2.0 + k3 * 2.0 + derivative(&x4, &uv, g)) * (dt / 6.0);
    let hit = clamp_attitude(&mut next, params.att_limit);
    for (i, idx) in [6usize, 7].into_iter().enumerate() {
        if hit[i] {
            a.row_mut(idx).fill(0.0);
            b.row_mut(idx).fill(0.0);
        }
    }
    // Likewise for saturated inputs.
    let lo = params.input_lower();
    let hi = params.input_upper();
    let raw = u.to_vector();
    for j in 0..INPUT_DIM {
        if raw[j] < lo[j] || raw[j] > hi[j] {
            b.column_mut(j).fill(0.0);
        }
    }
    (a, b)
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn axis_rot(axis: usize, a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        match axis {
            0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            _ => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        }
    }

    #[test]
    fn rotation_identity_and_yaw_quarter_turn() {
        assert!((rotation_matrix(&Vector3::zeros()) - Matrix3::identity()).norm() < 1e-15);
        let r = rotation_matrix(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let x_mapped = r * Vector3::x();
        assert!((x_mapped - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn rotation_matches_composed_axis_rotations() {
        let angles = [
            Vector3::new(0.3, -0.7, 2.1),
            Vector3::new(-1.1, 0.2, -2.9),
            Vector3::new(0.05, 1.0, 0.4),
        ];
        for att in angles {
            let oracle = axis_rot(2, att.z) * axis_rot(1, att.y) * axis_rot(0, att.x);
            let r = rotation_matrix(&att);
            assert!((r - oracle).norm() < 1e-12);
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            assert!((r.column(2) - thrust_axis(&att)).norm() < 1e-12);
        }
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = DynamicsParams::default();
        let s = State::at_rest(Vector3::new(1.0, -2.0, 3.0), 0.0);
        let next = step(&s, &ControlInput::hover(&p), &p, p.dt);
        assert!((next.to_vector() - s.to_vector()).amax() < 1e-12);
    }

    #[test]
    fn free_fall_velocity_drop() {
        let p = DynamicsParams {
            thrust_min: 0.0,
            ..Default::default()
        };
        let s = State::at_rest(Vector3::new(0.0, 0.0, 10.0), 0.0);
        let u = ControlInput {
            rate_cmd: Vector3::zeros(),
            thrust_cmd: 0.0,
        };
        let next = step(&s, &u, &p, 0.1);
        assert!((next.v.z + 0.981).abs() < 1e-9);
    }

    #[test]
    fn attitude_is_clamped() {
        let p = DynamicsParams::default();
        let mut s = State::at_rest(Vector3::zeros(), 0.0);
        s.att.x = 1.19;
        let u = ControlInput {
            rate_cmd: Vector3::new(3.0, -3.0, 0.0),
            thrust_cmd: p.g,
        };
        let next = step(&s, &u, &p, 0.1);
        assert_eq!(next.att.x, p.att_limit);
    }

    #[test]
    fn hover_linearization_structure() {
        let p = DynamicsParams::default();
        let s = State::at_rest(Vector3::zeros(), 0.0);
        let (a, b) = linearize(&s, &ControlInput::hover(&p), &p);
        let block = a.fixed_view::<3, 3>(0, 3).into_owned();
        assert!((block - Matrix3::identity() * p.dt).norm() < 1e-14);
        let thrust_col = b.column(3);
        for i in 0..STATE_DIM {
            if i != 2 && i != 5 {
                assert_eq!(thrust_col[i], 0.0, "row {i}");
            }
        }
        assert!((thrust_col[5] - p.dt).abs() < 1e-14);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
