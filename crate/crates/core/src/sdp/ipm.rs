//! Mehrotra predictor-corrector with Nesterov-Todd scaling.
//!
//! Internally the problem is the real standard form
//!
//! ```text
//! minimize   <C, X>
//! subject to <A_0, X>             = b_0
//!            <A_j, X> + x_j       = 0,     j = 1..m
//!            X in S^{2n}_+, x >= 0
//! ```
//!
//! with `C = -emb(Hbar)/2`, `A_0 = emb(Cbar)/2`, `A_j = emb(Dbar_j)/2`, each
//! row and the cost normalized to unit Frobenius norm. The NT scaling `R`
//! satisfies `R^T S R = R^{-1} X R^{-T} = Lambda` (diagonal), computed from
//! the Cholesky factors of `X` and `S` and one SVD.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{kkt_acceptable, kkt_residuals, KktResiduals, SdpProblem, SdpSettings, SdpSolution, SdpStatus};
use crate::linalg::{embed, project_embedded, symmetric_eigenvalues, trace_inner, unembed, CMatrix};

/// One line of the optional iterate dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub rel_gap: f64,
    pub mu: f64,
    pub sigma: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

const STEP_FRACTION: f64 = 0.98;
const MIN_STEP: f64 = 1e-14;
const DIVERGENCE: f64 = 1e12;
/// Dual norm above which the iterate is tested as a Farkas ray.
const RAY_CHECK: f64 = 1e4;
const RAY_TOL: f64 = 1e-7;

struct Data {
    c: DMatrix<f64>,
    /// Row 0 is the equality, rows 1..=m the inequalities.
    rows: Vec<DMatrix<f64>>,
    b0: f64,
    row_scale: Vec<f64>,
    cost_scale: f64,
    m: usize,
}

impl Data {
    fn new(prob: &SdpProblem) -> Self {
        let half = |m: &CMatrix| embed(m).scale(0.5);
        let mut c = half(&prob.objective).scale(-1.0);
        let cost_norm = c.norm();
        let cost_scale = if cost_norm > 1.0 { 1.0 / cost_norm } else { 1.0 };
        c *= cost_scale;

        let mut rows = Vec::with_capacity(prob.ineq.len() + 1);
        let mut row_scale = Vec::with_capacity(prob.ineq.len() + 1);
        for m in std::iter::once(&prob.eq_lhs).chain(prob.ineq.iter()) {
            let a = half(m);
            let norm = a.norm();
            let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            rows.push(a.scale(s));
            row_scale.push(s);
        }
        Self {
            c,
            b0: row_scale[0],
            rows,
            row_scale,
            cost_scale,
            m: prob.ineq.len(),
        }
    }

    fn b(&self, j: usize) -> f64 {
        if j == 0 {
            self.b0
        } else {
            0.0
        }
    }
}

#[derive(Clone)]
struct Iterate {
    x_mat: DMatrix<f64>,
    x_lp: DVector<f64>,
    y: DVector<f64>,
    s_mat: DMatrix<f64>,
    s_lp: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd_mat: DMatrix<f64>,
    rd_lp: DVector<f64>,
    primal_obj: f64,
    dual_obj: f64,
    pinf: f64,
    dinf: f64,
    gap: f64,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn residuals(data: &Data, it: &Iterate) -> Residuals {
    let mut rp = DVector::zeros(data.m + 1);
    for (j, a) in data.rows.iter().enumerate() {
        let lp = if j > 0 { it.x_lp[j - 1] } else { 0.0 };
        rp[j] = data.b(j) - inner(a, &it.x_mat) - lp;
    }
    let mut rd_mat = &data.c - &it.s_mat;
    for (j, a) in data.rows.iter().enumerate() {
        rd_mat -= a.scale(it.y[j]);
    }
    let rd_lp = DVector::from_iterator(data.m, (0..data.m).map(|i| -it.y[i + 1] - it.s_lp[i]));
    let primal_obj = inner(&data.c, &it.x_mat);
    let dual_obj = data.b0 * it.y[0];
    let c_norm = data.c.norm();
    Residuals {
        pinf: rp.norm() / (1.0 + data.b0.abs()),
        dinf: (rd_mat.norm() + rd_lp.norm()) / (1.0 + c_norm),
        gap: (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs() + dual_obj.abs()),
        rp,
        rd_mat,
        rd_lp,
        primal_obj,
        dual_obj,
    }
}

/// Whether the normalized dual iterate certifies primal infeasibility:
/// `b^T y > 0`, `-sum_j y_j A_j` PSD and `-y_j >= 0` on the inequality rows.
fn farkas_ray(data: &Data, y: &DVector<f64>) -> bool {
    let norm = y.norm();
    if norm < RAY_CHECK {
        return false;
    }
    let ray = y.unscale(norm);
    if data.b0 * ray[0] <= RAY_TOL.sqrt() {
        return false;
    }
    if ray.iter().skip(1).any(|&v| v > RAY_TOL) {
        return false;
    }
    let mut s = DMatrix::zeros(data.c.nrows(), data.c.ncols());
    for (j, a) in data.rows.iter().enumerate() {
        s -= a.scale(ray[j]);
    }
    symmetric_eigenvalues(&s).last().copied().unwrap_or(0.0) >= -RAY_TOL
}

/// NT scaling matrix `R` and the common scaled point `Lambda`.
fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let lx = Cholesky::new(x.clone())?.l();
    let ls = Cholesky::new(s.clone())?.l();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(true, true);
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return None;
    }
    let inv_sqrt = lambda.map(|l| 1.0 / l.sqrt());
    let mut r = lx * v;
    for (j, f) in inv_sqrt.iter().enumerate() {
        r.column_mut(j).scale_mut(*f);
    }
    Some((r, lambda))
}

/// Largest `alpha <= 1` with `diag(lambda) + alpha * d` PSD.
fn max_step_psd(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let inv = lambda.map(|l| 1.0 / l.sqrt());
    let scaled = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| inv[i] * d[(i, j)] * inv[j]);
    let sym = (&scaled + scaled.transpose()).scale(0.5);
    let min = symmetric_eigenvalues(&sym).last().copied().unwrap_or(0.0);
    if min >= 0.0 {
        1.0
    } else {
        (-1.0 / min).min(1.0)
    }
}

fn max_step_lp(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

struct Direction {
    dx_t: DMatrix<f64>,
    ds_t: DMatrix<f64>,
    dx_lp: DVector<f64>,
    ds_lp: DVector<f64>,
    dy: DVector<f64>,
}

struct Newton<'a> {
    data: &'a Data,
    r: DMatrix<f64>,
    lambda: DVector<f64>,
    scaled_rows: Vec<DMatrix<f64>>,
    rd_t: DMatrix<f64>,
    w_lp: DVector<f64>,
    schur: Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Newton<'a> {
    fn new(data: &'a Data, it: &Iterate, res: &Residuals) -> Option<Self> {
        let (r, lambda) = nt_scaling(&it.x_mat, &it.s_mat)?;
        let rt = r.transpose();
        let scaled_rows: Vec<DMatrix<f64>> = data.rows.iter().map(|a| &rt * a * &r).collect();
        let rd_t = &rt * &res.rd_mat * &r;
        let w_lp = it.x_lp.zip_map(&it.s_lp, |x, s| (x / s).sqrt());
        let k = data.m + 1;
        let mut schur = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = inner(&scaled_rows[i], &scaled_rows[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        for i in 0..data.m {
            schur[(i + 1, i + 1)] += w_lp[i] * w_lp[i];
        }
        let schur = match Cholesky::new(schur.clone()) {
            Some(ch) => ch,
            None => {
                let reg = 1e-14 * schur.diagonal().max().max(1.0);
                Cholesky::new(schur + DMatrix::identity(k, k) * reg)?
            }
        };
        Some(Self {
            data,
            r,
            lambda,
            scaled_rows,
            rd_t,
            w_lp,
            schur,
        })
    }

    /// Solves the linearized system for centrality targets `t` (SDP, scaled) and `t_lp`.
    fn solve(&self, res: &Residuals, t: &DMatrix<f64>, t_lp: &DVector<f64>) -> Direction {
        let k = self.data.m + 1;
        let diff = t - &self.rd_t;
        let mut rhs = DVector::zeros(k);
        for i in 0..k {
            rhs[i] = res.rp[i] - inner(&self.scaled_rows[i], &diff);
            if i > 0 {
                let w = self.w_lp[i - 1];
                rhs[i] -= w * t_lp[i - 1] - w * w * res.rd_lp[i - 1];
            }
        }
        let dy = self.schur.solve(&rhs);
        let mut ds_t = self.rd_t.clone();
        for (j, a) in self.scaled_rows.iter().enumerate() {
            ds_t -= a.scale(dy[j]);
        }
        let dx_t = t - &ds_t;
        let ds_lp = DVector::from_iterator(self.data.m, (0..self.data.m).map(|i| res.rd_lp[i] - dy[i + 1]));
        let dx_lp = DVector::from_iterator(
            self.data.m,
            (0..self.data.m).map(|i| {
                let w = self.w_lp[i];
                w * t_lp[i] - w * w * ds_lp[i]
            }),
        );
        Direction {
            dx_t,
            ds_t,
            dx_lp,
            ds_lp,
            dy,
        }
    }

    fn steps(&self, it: &Iterate, dir: &Direction) -> (f64, f64) {
        let ap = max_step_psd(&self.lambda, &dir.dx_t).min(max_step_lp(&it.x_lp, &dir.dx_lp));
        let ad = max_step_psd(&self.lambda, &dir.ds_t).min(max_step_lp(&it.s_lp, &dir.ds_lp));
        (ap, ad)
    }
}

/// `T` solving `Lambda o T = Q` for the Jordan product `(UV + VU) / 2`.
fn jordan_solve(lambda: &DVector<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| 2.0 * q[(i, j)] / (lambda[i] + lambda[j]))
}

fn initial_iterate(data: &Data, prob: &SdpProblem, init: Option<&CMatrix>) -> Iterate {
    let n = prob.dim();
    let a0 = match init {
        Some(a) => a.clone(),
        None => {
            let tr: f64 = (0..n).map(|i| prob.eq_lhs[(i, i)].re).sum();
            CMatrix::identity(n, n).scale(1.0 / tr)
        }
    };
    let x_mat = embed(&a0);
    let x_lp = DVector::from_iterator(
        data.m,
        data.rows[1..].iter().map(|a| {
            let slack = -inner(a, &x_mat);
            if slack > 0.0 {
                slack
            } else {
                1.0
            }
        }),
    );
    let xi = 1.0;
    Iterate {
        s_mat: DMatrix::identity(2 * n, 2 * n) * xi,
        s_lp: DVector::from_element(data.m, xi),
        y: DVector::zeros(data.m + 1),
        x_mat,
        x_lp,
    }
}

fn finish(
    prob: &SdpProblem,
    data: &Data,
    it: &Iterate,
    status: SdpStatus,
    iterations: usize,
    trace: Vec<IterateRecord>,
) -> SdpSolution {
    let a_matrix = unembed(&it.x_mat);
    let z = -it.y[0] * data.row_scale[0] / data.cost_scale;
    let duals_y: Vec<f64> = (0..data.m)
        .map(|i| (-it.y[i + 1] * data.row_scale[i + 1] / data.cost_scale).max(0.0))
        .collect();
    let kkt = kkt_residuals(prob, &a_matrix, &duals_y, z);
    SdpSolution {
        objective_value: trace_inner(&a_matrix, &prob.objective),
        dual_value: z,
        a_matrix,
        duals_y,
        dual_z: z,
        status,
        iterations,
        kkt_residuals: kkt,
        trace,
    }
}

fn external_ok(prob: &SdpProblem, data: &Data, it: &Iterate, tol: f64, gap_tol: f64) -> bool {
    let sol = finish(prob, data, it, SdpStatus::Optimal, 0, Vec::new());
    let kkt: KktResiduals = sol.kkt_residuals;
    kkt_acceptable(prob, &kkt, sol.objective_value, tol, gap_tol) && sol.relative_gap() <= gap_tol
}

/// Progress has stalled; the current point certifies at the looser level.
fn stalled_ok(prob: &SdpProblem, data: &Data, it: &Iterate, settings: &SdpSettings) -> bool {
    external_ok(prob, data, it, settings.acceptable_tol, settings.acceptable_gap_tol)
}

pub(super) fn solve(prob: &SdpProblem, init: Option<&CMatrix>, settings: &SdpSettings) -> SdpSolution {
    let data = Data::new(prob);
    let mut it = initial_iterate(&data, prob, init);
    let nu = (it.x_mat.nrows() + data.m) as f64;
    let mut trace = Vec::new();
    // Lowest-merit iterate within the acceptable tolerances; late iterations
    // can lose primal accuracy as X approaches rank one.
    let mut best: Option<(f64, Iterate)> = None;

    for iter in 0..settings.max_iter {
        let res = residuals(&data, &it);
        let mu = (inner(&it.x_mat, &it.s_mat) + it.x_lp.dot(&it.s_lp)) / nu;
        let merit = (res.pinf.max(res.dinf) / settings.acceptable_tol).max(res.gap / settings.acceptable_gap_tol);
        if res.pinf <= settings.acceptable_tol
            && res.dinf <= settings.acceptable_tol
            && res.gap <= settings.acceptable_gap_tol
            && best.as_ref().map_or(true, |(m, _)| merit < *m)
        {
            best = Some((merit, it.clone()));
        }

        if res.pinf <= settings.tol
            && res.dinf <= settings.tol
            && res.gap <= settings.gap_tol
            && external_ok(prob, &data, &it, settings.tol, settings.gap_tol)
        {
            return finish(prob, &data, &it, SdpStatus::Optimal, iter, trace);
        }
        if it.y.amax() > DIVERGENCE || it.x_mat.amax() > DIVERGENCE || farkas_ray(&data, &it.y) {
            return finish(prob, &data, &it, SdpStatus::Infeasible, iter, trace);
        }

        let Some(newton) = Newton::new(&data, &it, &res) else {
            return stall(prob, &data, &it, best, SdpStatus::MaxIterations, iter, trace, settings);
        };
        let lambda = &newton.lambda;
        let lam_mat = DMatrix::from_diagonal(lambda);
        let lam_lp = it.x_lp.zip_map(&it.s_lp, |x, s| (x * s).sqrt());

        // Predictor: drive X S to zero.
        let t_aff = -&lam_mat;
        let t_aff_lp = -&lam_lp;
        let aff = newton.solve(&res, &t_aff, &t_aff_lp);
        let (ap, ad) = newton.steps(&it, &aff);
        let x_aff = &lam_mat + aff.dx_t.scale(ap);
        let s_aff = &lam_mat + aff.ds_t.scale(ad);
        let lp_aff = (&it.x_lp + aff.dx_lp.scale(ap)).dot(&(&it.s_lp + aff.ds_lp.scale(ad)));
        let mu_aff = (inner(&x_aff, &s_aff) + lp_aff) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector with the second-order term of the predictor.
        let cross = &aff.dx_t * &aff.ds_t;
        let q = DMatrix::identity(lambda.len(), lambda.len()) * (sigma * mu)
            - &lam_mat * &lam_mat
            - (&cross + cross.transpose()).scale(0.5);
        let t = jordan_solve(lambda, &q);
        let dx_lp_t = aff.dx_lp.component_div(&newton.w_lp);
        let ds_lp_t = aff.ds_lp.component_mul(&newton.w_lp);
        let q_lp = DVector::from_iterator(
            data.m,
            (0..data.m).map(|i| sigma * mu - lam_lp[i] * lam_lp[i] - dx_lp_t[i] * ds_lp_t[i]),
        );
        let t_lp = q_lp.component_div(&lam_lp);
        let dir = newton.solve(&res, &t, &t_lp);
        let (ap_max, ad_max) = newton.steps(&it, &dir);
        let ap = (STEP_FRACTION * ap_max).min(1.0);
        let ad = (STEP_FRACTION * ad_max).min(1.0);

        if settings.trace {
            trace.push(IterateRecord {
                iter,
                primal_obj: -res.primal_obj / data.cost_scale,
                dual_obj: -res.dual_obj / data.cost_scale,
                primal_infeas: res.pinf,
                dual_infeas: res.dinf,
                rel_gap: res.gap,
                mu,
                sigma,
                step_primal: ap,
                step_dual: ad,
            });
        }
        if ap < MIN_STEP && ad < MIN_STEP {
            return stall(prob, &data, &it, best, SdpStatus::Infeasible, iter + 1, trace, settings);
        }

        let dx_mat = &newton.r * &dir.dx_t * newton.r.transpose();
        let mut ds_mat = res.rd_mat.clone();
        for (j, a) in data.rows.iter().enumerate() {
            ds_mat -= a.scale(dir.dy[j]);
        }
        it.x_mat = project_embedded(&(&it.x_mat + dx_mat.scale(ap)));
        it.x_lp += dir.dx_lp.scale(ap);
        it.s_mat = project_embedded(&(&it.s_mat + ds_mat.scale(ad)));
        it.s_lp += dir.ds_lp.scale(ad);
        it.y += dir.dy.scale(ad);
    }

    stall(prob, &data, &it, best, SdpStatus::MaxIterations, settings.max_iter, trace, settings)
}

/// No further progress: return the best iterate that certifies at the
/// acceptable level, else the current one with status `failure`.
#[allow(clippy::too_many_arguments)]
fn stall(
    prob: &SdpProblem,
    data: &Data,
    current: &Iterate,
    best: Option<(f64, Iterate)>,
    failure: SdpStatus,
    iter: usize,
    trace: Vec<IterateRecord>,
    settings: &SdpSettings,
) -> SdpSolution {
    for candidate in best.as_ref().map(|(_, b)| b).into_iter().chain(std::iter::once(current)) {
        if stalled_ok(prob, data, candidate, settings) {
            return finish(prob, data, candidate, SdpStatus::Optimal, iter, trace);
        }
    }
    finish(prob, data, current, failure, iter, trace)
}
