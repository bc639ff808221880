//! Dense convex QP solver based on operator splitting.
//!
//! Solves `min 1/2 x'Hx + f'x  s.t.  l <= Ax <= u` by alternating a
//! regularized linear solve in `x` with a projection of `z = Ax` onto the
//! bounds, followed by a scaled dual update. The problem is Ruiz-equilibrated
//! first, the step size adapts to the residual balance, and a final
//! polishing step solves the KKT system on the guessed active set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const INF_BOUND: f64 = 1e20;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const HESSIAN_REG: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lower bound exceeds upper bound in row {0}")]
    InvalidBounds(usize),
    #[error("non-finite problem data")]
    NonFinite,
    #[error("KKT matrix factorization failed")]
    Factorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Solved,
    MaxIters,
    PrimalInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_pinf: f64,
    pub max_iters: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adaptive_rho_interval: usize,
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_pinf: 1e-6,
            max_iters: 4000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho_interval: 25,
            check_interval: 5,
            scaling_iters: 10,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Constraint multipliers: negative on active lower bounds, positive on
    /// active upper bounds.
    pub y: DVector<f64>,
    pub status: QpStatus,
    pub iters: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

/// Residuals of a candidate primal/dual pair on the original problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `max(l - Ax, Ax - u, 0)` in the infinity norm.
    pub primal: f64,
    /// `||Hx + f + A'y||_inf`.
    pub stationarity: f64,
    /// Largest multiplier with the wrong sign for its bound.
    pub dual_sign: f64,
}

pub fn kkt_residuals(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> KktResiduals {
    let ax = a * x;
    let mut primal: f64 = 0.0;
    let mut dual_sign: f64 = 0.0;
    for i in 0..ax.len() {
        primal = primal.max(l[i] - ax[i]).max(ax[i] - u[i]);
        // A multiplier pushing against an infinite bound has the wrong sign.
        if y[i] > 0.0 && u[i] >= INF_BOUND {
            dual_sign = dual_sign.max(y[i]);
        }
        if y[i] < 0.0 && l[i] <= -INF_BOUND {
            dual_sign = dual_sign.max(-y[i]);
        }
    }
    let stat = h * x + f + a.transpose() * y;
    KktResiduals {
        primal,
        stationarity: stat.amax(),
        dual_sign,
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn col_inf_norm(m: &DMatrix<f64>, j: usize) -> f64 {
    m.column(j).iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn clamp_scale(s: f64) -> f64 {
    if s < 1e-4 {
        1.0
    } else {
        (1.0 / s.sqrt()).clamp(1e-4, 1e4)
    }
}

/// Compressed sparse row storage for the constraint matrix. The condensed
/// MPC rows are mostly structural zeros.
struct Csr {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut indptr = Vec::with_capacity(a.nrows() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            ncols: a.ncols(),
            indptr,
            indices,
            data,
        }
    }

    fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    /// out = A x
    fn mul(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for i in 0..self.nrows() {
            let (idx, val) = self.row(i);
            out[i] = idx.iter().zip(val).map(|(j, v)| v * x[*j]).sum();
        }
    }

    /// out = A' y
    fn tr_mul(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for i in 0..self.nrows() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            let (idx, val) = self.row(i);
            for (j, v) in idx.iter().zip(val) {
                out[*j] += v * yi;
            }
        }
    }

    fn row_inf_norm(&self, i: usize) -> f64 {
        self.row(i)
            .1
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    fn col_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0_f64; self.ncols];
        for (j, v) in self.indices.iter().zip(&self.data) {
            out[*j] = out[*j].max(v.abs());
        }
        out
    }

    fn scale(&mut self, rows: &DVector<f64>, cols: &DVector<f64>) {
        for i in 0..self.nrows() {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.data[k] *= rows[i] * cols[self.indices[k]];
            }
        }
    }
}

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: Csr,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn equilibrate(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    iters: usize,
) -> Scaled {
    let n = h.nrows();
    let m = a.nrows();
    let mut p = h.clone();
    for i in 0..n {
        p[(i, i)] += HESSIAN_REG;
    }
    let mut q = f.clone();
    let mut am = Csr::from_dense(a);
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut c = 1.0;
    for _ in 0..iters {
        let a_cols = am.col_inf_norms();
        let delta = DVector::from_fn(n, |j, _| clamp_scale(col_inf_norm(&p, j).max(a_cols[j])));
        let eps = DVector::from_fn(m, |i, _| clamp_scale(am.row_inf_norm(i)));
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= delta[i] * delta[j];
            }
            q[j] *= delta[j];
        }
        am.scale(&eps, &delta);
        d.component_mul_assign(&delta);
        e.component_mul_assign(&eps);
        let mean_col = (0..n).map(|j| col_inf_norm(&p, j)).sum::<f64>() / n.max(1) as f64;
        let gamma = 1.0 / mean_col.max(inf_norm(&q)).clamp(1e-4, 1e4);
        p *= gamma;
        q *= gamma;
        c *= gamma;
    }
    let ls = DVector::from_fn(m, |i, _| {
        if l[i] <= -INF_BOUND {
            -INF_BOUND
        } else {
            l[i] * e[i]
        }
    });
    let us = DVector::from_fn(m, |i, _| {
        if u[i] >= INF_BOUND {
            INF_BOUND
        } else {
            u[i] * e[i]
        }
    });
    Scaled {
        p,
        q,
        a: am,
        l: ls,
        u: us,
        d,
        e,
        c,
    }
}

fn rho_vector(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_fn(l.len(), |i, _| {
        if l[i] <= -INF_BOUND && u[i] >= INF_BOUND {
            RHO_MIN
        } else if (u[i] - l[i]).abs() < 1e-12 {
            (RHO_EQ_SCALE * rho).min(RHO_MAX)
        } else {
            rho
        }
    })
}

fn factor(
    p: &DMatrix<f64>,
    a: &Csr,
    rho: &DVector<f64>,
    sigma: f64,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, QpError> {
    let n = p.nrows();
    let mut k = p.clone();
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    for i in 0..a.nrows() {
        let (idx, val) = a.row(i);
        for (ja, va) in idx.iter().zip(val) {
            let w = rho[i] * va;
            for (jb, vb) in idx.iter().zip(val) {
                k[(*ja, *jb)] += w * vb;
            }
        }
    }
    nalgebra::Cholesky::new(k).ok_or(QpError::Factorization)
}

fn validate(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(), QpError> {
    let n = h.nrows();
    if h.ncols() != n || f.len() != n {
        return Err(QpError::Dimension(format!(
            "H {}x{}, f {}",
            h.nrows(),
            h.ncols(),
            f.len()
        )));
    }
    if a.ncols() != n && a.nrows() > 0 {
        return Err(QpError::Dimension(format!(
            "A has {} columns, expected {n}",
            a.ncols()
        )));
    }
    if l.len() != a.nrows() || u.len() != a.nrows() {
        return Err(QpError::Dimension(format!(
            "A has {} rows, l {}, u {}",
            a.nrows(),
            l.len(),
            u.len()
        )));
    }
    if h.iter()
        .chain(f.iter())
        .chain(a.iter())
        .any(|v| !v.is_finite())
    {
        return Err(QpError::NonFinite);
    }
    for i in 0..l.len() {
        if l[i].is_nan() || u[i].is_nan() {
            return Err(QpError::NonFinite);
        }
        if l[i] > u[i] {
            return Err(QpError::InvalidBounds(i));
        }
    }
    Ok(())
}

/// Solve the QP. `warm` seeds the primal and dual iterates.
pub fn qp_solve(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    settings: &QpSettings,
    warm: Option<&WarmStart>,
) -> Result<QpSolution, QpError> {
    validate(h, f, a, l, u)?;
    let n = h.nrows();
    let m = a.nrows();
    let a = if a.ncols() == n {
        a.clone()
    } else {
        DMatrix::zeros(0, n)
    };
    let lc = l.map(|v| v.max(-INF_BOUND));
    let uc = u.map(|v| v.min(INF_BOUND));

    let s = equilibrate(h, f, &a, &lc, &uc, settings.scaling_iters);
    let mut rho = settings.rho;
    let mut rho_vec = rho_vector(&s.l, &s.u, rho);
    let mut chol = factor(&s.p, &s.a, &rho_vec, settings.sigma)?;

    // Scaled iterates.
    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(m);
    if let Some(w) = warm {
        if w.x.len() == n && w.y.len() == m {
            x = w.x.component_div(&s.d);
            y = w.y.component_div(&s.e) * s.c;
        }
    }
    let mut ax = DVector::zeros(m);
    s.a.mul(&x, &mut ax);
    let mut z = DVector::from_fn(m, |i, _| ax[i].clamp(s.l[i], s.u[i]));

    let mut rhs = DVector::zeros(n);
    let mut tmp_m = DVector::zeros(m);
    let mut ax_tilde = DVector::zeros(m);
    let mut aty = DVector::zeros(n);
    let mut px = DVector::zeros(n);

    let unscaled_res = |x: &DVector<f64>,
                        z: &DVector<f64>,
                        y: &DVector<f64>,
                        ax: &DVector<f64>,
                        px: &mut DVector<f64>,
                        aty: &mut DVector<f64>| {
        px.gemv(1.0, &s.p, x, 0.0);
        s.a.tr_mul(y, aty);
        let mut rp: f64 = 0.0;
        let mut ax_n: f64 = 0.0;
        let mut z_n: f64 = 0.0;
        for i in 0..m {
            let inv = 1.0 / s.e[i];
            rp = rp.max(((ax[i] - z[i]) * inv).abs());
            ax_n = ax_n.max((ax[i] * inv).abs());
            z_n = z_n.max((z[i] * inv).abs());
        }
        let mut rd: f64 = 0.0;
        let mut px_n: f64 = 0.0;
        let mut aty_n: f64 = 0.0;
        let mut q_n: f64 = 0.0;
        for j in 0..n {
            let inv = 1.0 / (s.d[j] * s.c);
            rd = rd.max(((px[j] + s.q[j] + aty[j]) * inv).abs());
            px_n = px_n.max((px[j] * inv).abs());
            aty_n = aty_n.max((aty[j] * inv).abs());
            q_n = q_n.max((s.q[j] * inv).abs());
        }
        (rp, rd, ax_n.max(z_n), px_n.max(aty_n).max(q_n))
    };

    let polish_tol = 1e-9_f64.max(settings.eps_abs);
    let mut last_active: Vec<(usize, f64)> = Vec::new();
    let mut stable_checks = 0;
    let mut polish_tried = false;
    let mut early: Option<Polished> = None;

    let alpha = settings.alpha;
    let mut status = QpStatus::MaxIters;
    let mut iters = 0;
    let mut prim_res = f64::INFINITY;
    let mut dual_res = f64::INFINITY;
    for k in 1..=settings.max_iters {
        iters = k;
        // x-update
        for i in 0..m {
            tmp_m[i] = rho_vec[i] * z[i] - y[i];
        }
        s.a.tr_mul(&tmp_m, &mut rhs);
        rhs.axpy(settings.sigma, &x, 1.0);
        rhs -= &s.q;
        chol.solve_mut(&mut rhs);
        let x_tilde = &rhs;
        s.a.mul(x_tilde, &mut ax_tilde);
        x *= 1.0 - alpha;
        x.axpy(alpha, x_tilde, 1.0);
        ax *= 1.0 - alpha;
        ax.axpy(alpha, &ax_tilde, 1.0);

        // z- and y-update
        let mut dy_inf: f64 = 0.0;
        let mut dy_e_inf: f64 = 0.0;
        let mut support = 0.0;
        for i in 0..m {
            let zr = alpha * ax_tilde[i] + (1.0 - alpha) * z[i];
            let zn = (zr + y[i] / rho_vec[i]).clamp(s.l[i], s.u[i]);
            let dy = rho_vec[i] * (zr - zn);
            y[i] += dy;
            z[i] = zn;
            tmp_m[i] = dy;
            dy_inf = dy_inf.max(dy.abs());
            dy_e_inf = dy_e_inf.max((dy * s.e[i]).abs());
            if dy > 0.0 {
                support += if s.u[i] >= INF_BOUND {
                    f64::INFINITY
                } else {
                    s.u[i] * dy
                };
            } else if dy < 0.0 {
                support += if s.l[i] <= -INF_BOUND {
                    f64::INFINITY
                } else {
                    s.l[i] * dy
                };
            }
        }

        if k % settings.check_interval.max(1) != 0 && k != settings.max_iters {
            continue;
        }

        // Primal infeasibility certificate on the dual increment.
        if dy_inf > 1e-12 {
            let mut atdy = DVector::zeros(n);
            s.a.tr_mul(&tmp_m, &mut atdy);
            let lhs = atdy
                .iter()
                .zip(s.d.iter())
                .fold(0.0_f64, |acc, (v, d)| acc.max((v / d).abs()));
            let thresh = settings.eps_pinf * dy_e_inf;
            if lhs <= thresh && support < -thresh {
                status = QpStatus::PrimalInfeasible;
                let (rp, rd, _, _) = unscaled_res(&x, &z, &y, &ax, &mut px, &mut aty);
                prim_res = rp;
                dual_res = rd;
                break;
            }
        }

        let (rp, rd, prim_scale, dual_scale) = unscaled_res(&x, &z, &y, &ax, &mut px, &mut aty);
        prim_res = rp;
        dual_res = rd;
        let eps_p = settings.eps_abs + settings.eps_rel * prim_scale;
        let eps_d = settings.eps_abs + settings.eps_rel * dual_scale;
        if rp <= eps_p && rd <= eps_d {
            status = QpStatus::Solved;
            break;
        }

        // Once the active set stops changing, the KKT system on it usually
        // gives the exact solution long before the residuals get there.
        if settings.polish {
            let z_u = z.component_div(&s.e);
            let y_u = y.component_mul(&s.e) / s.c;
            let active = guess_active(&lc, &uc, &z_u, &y_u);
            if active == last_active {
                stable_checks += 1;
            } else {
                stable_checks = 0;
                last_active = active;
                polish_tried = false;
            }
            if stable_checks >= 3 && !polish_tried {
                polish_tried = true;
                if let Some(p) = polish_on(h, f, &a, &lc, &uc, &last_active, polish_tol) {
                    if p.res.stationarity <= polish_tol {
                        status = QpStatus::Solved;
                        early = Some(p);
                        break;
                    }
                }
            }
        }

        if settings.adaptive_rho_interval > 0 && k % settings.adaptive_rho_interval == 0 && m > 0 {
            // Balance the scaled residuals.
            let mut rps: f64 = 0.0;
            let mut axs: f64 = 0.0;
            for i in 0..m {
                rps = rps.max((ax[i] - z[i]).abs());
                axs = axs.max(ax[i].abs()).max(z[i].abs());
            }
            let mut rds: f64 = 0.0;
            let mut ds: f64 = 0.0;
            for j in 0..n {
                rds = rds.max((px[j] + s.q[j] + aty[j]).abs());
                ds = ds.max(px[j].abs()).max(aty[j].abs()).max(s.q[j].abs());
            }
            let num = rps / axs.max(1e-10);
            let den = rds / ds.max(1e-10);
            let ratio = (num / den.max(1e-20)).sqrt();
            let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if new_rho.is_finite() && (new_rho > 5.0 * rho || new_rho < 0.2 * rho) {
                rho = new_rho;
                rho_vec = rho_vector(&s.l, &s.u, rho);
                chol = factor(&s.p, &s.a, &rho_vec, settings.sigma)?;
            }
        }
    }

    let x_out = x.component_mul(&s.d);
    let y_out = y.component_mul(&s.e) / s.c;
    let mut sol = QpSolution {
        x: x_out,
        y: y_out,
        status,
        iters,
        primal_residual: prim_res,
        dual_residual: dual_res,
        polished: false,
    };
    if let Some(p) = early {
        sol.x = p.x;
        sol.y = p.y;
        sol.primal_residual = p.res.primal;
        sol.dual_residual = p.res.stationarity;
        sol.polished = true;
    } else if settings.polish && status != QpStatus::PrimalInfeasible {
        let z_out = z.component_div(&s.e);
        let active = guess_active(&lc, &uc, &z_out, &sol.y);
        if let Some(p) = polish_on(h, f, &a, &lc, &uc, &active, polish_tol) {
            let before = kkt_residuals(h, f, &a, &lc, &uc, &sol.x, &sol.y);
            if p.res.stationarity <= before.stationarity.max(polish_tol) {
                sol.x = p.x;
                sol.y = p.y;
                sol.primal_residual = p.res.primal;
                sol.dual_residual = p.res.stationarity;
                sol.polished = true;
                if sol.status == QpStatus::MaxIters && p.res.stationarity <= polish_tol {
                    sol.status = QpStatus::Solved;
                }
            }
        }
    }
    Ok(sol)
}

/// Rows guessed active from a primal/dual pair, with the bound each one
/// sits on.
fn guess_active(
    l: &DVector<f64>,
    u: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> Vec<(usize, f64)> {
    let mut active = Vec::new();
    for i in 0..l.len() {
        if (u[i] - l[i]).abs() < 1e-12 || z[i] - l[i] < -y[i] {
            active.push((i, l[i]));
        } else if u[i] - z[i] < y[i] {
            active.push((i, u[i]));
        }
    }
    active
}

struct Polished {
    x: DVector<f64>,
    y: DVector<f64>,
    res: KktResiduals,
}

/// Solve the equality-constrained KKT system on `active` and keep the result
/// only if it is feasible and its multipliers have the right signs.
fn polish_on(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    active: &[(usize, f64)],
    tol: f64,
) -> Option<Polished> {
    let n = h.nrows();
    let m = a.nrows();
    let na = active.len();
    let dim = n + na;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (r, (row, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = a[(*row, j)];
            kkt[(j, n + r)] = a[(*row, j)];
        }
    }
    // Regularize the factorization only; refinement targets the exact system.
    let delta = 1e-7;
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += delta;
    }
    for r in 0..na {
        reg[(n + r, n + r)] -= delta;
    }
    let lu = reg.lu();
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -f[j];
    }
    for (r, (_, b)) in active.iter().enumerate() {
        rhs[n + r] = *b;
    }
    let mut sol_vec = lu.solve(&rhs)?;
    for _ in 0..5 {
        let resid = &rhs - &kkt * &sol_vec;
        sol_vec += lu.solve(&resid)?;
    }
    if sol_vec.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol_vec.rows(0, n).into_owned();
    let mut y = DVector::zeros(m);
    for (r, (row, b)) in active.iter().enumerate() {
        let yi = sol_vec[n + r];
        if (u[*row] - l[*row]).abs() >= 1e-12 {
            // Lower-bound multipliers must be non-positive, upper non-negative.
            if (*b == l[*row] && yi > tol) || (*b == u[*row] && yi < -tol) {
                return None;
            }
        }
        y[*row] = yi;
    }
    let res = kkt_residuals(h, f, a, l, u, &x, &y);
    (res.primal <= tol).then_some(Polished { x, y, res })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_constraints(n: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        (DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    }

    #[test]
    fn unconstrained_identity() {
        let h = DMatrix::identity(3, 3);
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (a, l, u) = no_constraints(3);
        let sol = qp_solve(&h, &(-&c), &a, &l, &u, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x - c).amax() < 1e-6);
    }

    #[test]
    fn active_upper_bound() {
        // (x-2)^2 = x^2 - 4x + 4  ->  H = 2, f = -4
        let h = DMatrix::from_element(1, 1, 2.0);
        let f = DVector::from_element(1, -4.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let l = DVector::from_element(1, f64::NEG_INFINITY);
        let u = DVector::from_element(1, 1.0);
        let sol = qp_solve(&h, &f, &a, &l, &u, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 1.0).abs() < 1e-8);
        assert!((sol.y[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        let h = DMatrix::identity(2, 2);
        let f = DVector::zeros(2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let l = DVector::from_vec(vec![2.0, f64::NEG_INFINITY]);
        let u = DVector::from_vec(vec![f64::INFINITY, 1.0]);
        let sol = qp_solve(&h, &f, &a, &l, &u, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn rejects_crossed_bounds() {
        let h = DMatrix::identity(1, 1);
        let f = DVector::zeros(1);
        let a = DMatrix::identity(1, 1);
        let err = qp_solve(
            &h,
            &f,
            &a,
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 0.0),
            &QpSettings::default(),
            None,
        );
        assert_eq!(err, Err(QpError::InvalidBounds(0)));
    }

    #[test]
    fn equality_row() {
        // min x0^2 + x1^2 s.t. x0 + x1 = 1
        let h = DMatrix::identity(2, 2) * 2.0;
        let f = DVector::zeros(2);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_element(1, 1.0);
        let sol = qp_solve(&h, &f, &a, &b, &b, &QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 0.5).abs() < 1e-8 && (sol.x[1] - 0.5).abs() < 1e-8);
    }
}
