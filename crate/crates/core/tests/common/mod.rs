//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct RandomQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle free of the distribution crate.
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Strictly convex QP with a known feasible point.
pub fn random_qp(rng: &mut ChaCha8Rng) -> RandomQp {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(0..=6);
    let mf = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let h = mf.transpose() * &mf + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| 3.0 * normal(rng));
    let a = DMatrix::from_fn(m, n, |_, _| normal(rng));
    let x_feas = DVector::from_fn(n, |_, _| normal(rng));
    let ax = &a * &x_feas;
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    for i in 0..m {
        let kind = rng.random_range(0..10);
        let lo = ax[i] - rng.random_range(0.0..1.0);
        let hi = ax[i] + rng.random_range(0.0..1.0);
        match kind {
            0 => {
                l[i] = ax[i];
                u[i] = ax[i];
            }
            1 | 2 => {
                l[i] = f64::NEG_INFINITY;
                u[i] = hi;
            }
            3 | 4 => {
                l[i] = lo;
                u[i] = f64::INFINITY;
            }
            _ => {
                l[i] = lo;
                u[i] = hi;
            }
        }
    }
    RandomQp { h, f, a, l, u }
}

/// Enumerate every assignment of rows to {free, at lower, at upper}, solve
/// the equality-constrained problem for each, and keep the best feasible one.
pub fn active_set_oracle(qp: &RandomQp) -> Option<DVector<f64>> {
    let n = qp.h.nrows();
    let m = qp.a.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let combos = 3usize.pow(m as u32);
    'outer: for code in 0..combos {
        let mut c = code;
        let mut rows = Vec::new();
        for i in 0..m {
            let s = c % 3;
            c /= 3;
            match s {
                1 if qp.l[i].is_finite() => rows.push((i, qp.l[i])),
                2 if qp.u[i].is_finite() => rows.push((i, qp.u[i])),
                1 | 2 => continue 'outer,
                _ => {}
            }
        }
        let k = rows.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.f));
        for (r, (i, b)) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = qp.a[(*i, j)];
                kkt[(j, n + r)] = qp.a[(*i, j)];
            }
            rhs[n + r] = *b;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let ax = &qp.a * &x;
        let feasible = (0..m).all(|i| ax[i] >= qp.l[i] - 1e-9 && ax[i] <= qp.u[i] + 1e-9);
        if !feasible {
            continue;
        }
        let obj = 0.5 * x.dot(&(&qp.h * &x)) + qp.f.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Closed-loop optimal trajectory of the discrete double integrator
/// `e' = e + dt v + dt^2/2 w`, `v' = v + dt w` with stage cost
/// `q e^2 + r w^2 + rd (w - w_prev)^2`, terminal `q_n e^2`, solved by the
/// backward Riccati recursion with a cross term. Returns the error sequence
/// e_0..e_N.
#[allow(clippy::too_many_arguments)]
pub fn riccati_double_integrator(
    e0: f64,
    v0: f64,
    w_prev: f64,
    n: usize,
    dt: f64,
    q: f64,
    q_n: f64,
    r: f64,
    rd: f64,
) -> Vec<f64> {
    let f = Matrix3::new(1.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
    let g = Vector3::new(0.5 * dt * dt, dt, 1.0);
    let cross = Vector3::new(0.0, 0.0, -rd);
    let r_tot = r + rd;
    let mut p = Matrix3::from_diagonal(&Vector3::new(q_n, 0.0, 0.0));
    let mut gains = vec![Vector3::zeros(); n];
    for k in (0..n).rev() {
        let state_q = if k == 0 { 0.0 } else { q };
        let qs = Matrix3::from_diagonal(&Vector3::new(state_q, 0.0, rd));
        let denom = r_tot + (g.transpose() * p * g)[0];
        let kvec = (f.transpose() * p * g + cross) / denom;
        gains[k] = kvec;
        p = qs + f.transpose() * p * f - kvec * (f.transpose() * p * g + cross).transpose();
    }
    let mut xi = Vector3::new(e0, v0, w_prev);
    let mut out = vec![e0];
    for kvec in gains {
        let w = -kvec.dot(&xi);
        xi = f * xi + g * w;
        out.push(xi[0]);
    }
    out
}
