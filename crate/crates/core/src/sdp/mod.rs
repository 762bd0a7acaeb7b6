//! Dense SDP solver for the lifted beamforming problem.
//!
//! Primal:
//!
//! ```text
//! maximize    tr(A Hbar)
//! subject to  tr(A Cbar)   = 1
//!             tr(A Dbar_i) <= 0,   i = 1..m
//!             A Hermitian PSD
//! ```
//!
//! Dual:
//!
//! ```text
//! minimize    z
//! subject to  G = sum_i y_i Dbar_i + z Cbar - Hbar  PSD,   y >= 0
//! ```
//!
//! Hermitian matrices are handled through their real symmetric embedding
//! (see [`crate::linalg::embed`]) and solved with a primal-dual
//! path-following method; see [`ipm`].

mod ipm;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigh, trace_inner, CMatrix};

pub use ipm::IterateRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub objective: CMatrix,
    pub eq_lhs: CMatrix,
    pub ineq: Vec<CMatrix>,
}

impl SdpProblem {
    pub fn new(objective: CMatrix, eq_lhs: CMatrix, ineq: Vec<CMatrix>) -> Result<Self> {
        let prob = Self {
            objective,
            eq_lhs,
            ineq,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn dim(&self) -> usize {
        self.objective.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("objective", "empty matrix"));
        }
        for m in std::iter::once(&self.objective)
            .chain(std::iter::once(&self.eq_lhs))
            .chain(self.ineq.iter())
        {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows().max(m.ncols()),
                });
            }
            let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if hermitian_defect(m) > 1e-12 * scale {
                return Err(invalid("matrix", "constraint data must be Hermitian"));
            }
        }
        let trace: f64 = (0..n).map(|i| self.eq_lhs[(i, i)].re).sum();
        if !(trace > 0.0) {
            return Err(invalid("eq_lhs", "equality matrix must have positive trace"));
        }
        let (vals, _) = hermitian_eigh(&self.eq_lhs);
        if vals[n - 1] < -1e-12 * vals[0].abs().max(1.0) {
            return Err(invalid("eq_lhs", "equality matrix must be PSD"));
        }
        Ok(())
    }

    /// `G = sum_i y_i Dbar_i + z Cbar - Hbar`.
    pub fn dual_slack(&self, y: &[f64], z: f64) -> CMatrix {
        let mut g = self.eq_lhs.scale(z) - &self.objective;
        for (yi, d) in y.iter().zip(&self.ineq) {
            g += d.scale(*yi);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// Optimality residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Largest violation of the primal constraints (equality absolute,
    /// inequalities relative to `max(1, ||Dbar_i||_F)`).
    pub primal: f64,
    /// Smallest eigenvalue of the dual slack `G`.
    pub dual_min_eig: f64,
    /// `|tr(A G)|`.
    pub complementarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpSettings {
    /// Residual tolerance on primal and dual feasibility.
    pub tol: f64,
    /// Relative duality gap tolerance.
    pub gap_tol: f64,
    /// Looser residual tolerance accepted when progress stalls before `tol`.
    pub acceptable_tol: f64,
    /// Looser gap tolerance accepted when progress stalls before `gap_tol`.
    pub acceptable_gap_tol: f64,
    pub max_iter: usize,
    /// Record one [`IterateRecord`] per iteration.
    pub trace: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            gap_tol: 1e-11,
            acceptable_tol: 1e-8,
            acceptable_gap_tol: 1e-8,
            max_iter: 200,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub a_matrix: CMatrix,
    pub duals_y: Vec<f64>,
    pub dual_z: f64,
    /// `tr(A Hbar)`.
    pub objective_value: f64,
    /// Dual objective `z`.
    pub dual_value: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub kkt_residuals: KktResiduals,
    pub trace: Vec<IterateRecord>,
}

impl SdpSolution {
    pub fn dual_slack(&self, prob: &SdpProblem) -> CMatrix {
        prob.dual_slack(&self.duals_y, self.dual_z)
    }

    pub fn relative_gap(&self) -> f64 {
        (self.objective_value - self.dual_value).abs()
            / (1.0 + self.objective_value.abs() + self.dual_value.abs())
    }

    /// Iterate history as one JSON object per line.
    pub fn trace_dump(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain numeric record"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Residuals for an arbitrary primal matrix and dual pair.
pub fn kkt_residuals(prob: &SdpProblem, a: &CMatrix, y: &[f64], z: f64) -> KktResiduals {
    let mut primal = (trace_inner(a, &prob.eq_lhs) - 1.0).abs();
    for d in &prob.ineq {
        let v = trace_inner(a, d) / d.norm().max(1.0);
        primal = primal.max(v);
    }
    let g = prob.dual_slack(y, z);
    let (vals, _) = hermitian_eigh(&g);
    KktResiduals {
        primal,
        dual_min_eig: vals[vals.len() - 1],
        complementarity: trace_inner(a, &g).abs(),
    }
}

pub fn kkt_check(prob: &SdpProblem, sol: &SdpSolution) -> KktResiduals {
    kkt_residuals(prob, &sol.a_matrix, &sol.duals_y, sol.dual_z)
}

/// Whether residuals meet the acceptance thresholds for `Optimal`.
pub fn kkt_acceptable(prob: &SdpProblem, kkt: &KktResiduals, objective: f64, tol: f64, gap_tol: f64) -> bool {
    let g_scale = 1.0 + prob.objective.norm();
    kkt.primal <= tol
        && kkt.dual_min_eig >= -tol * g_scale
        && kkt.complementarity <= gap_tol * (1.0 + objective.abs())
}

/// Solve from the default interior starting point.
pub fn solve(prob: &SdpProblem, settings: &SdpSettings) -> SdpSolution {
    ipm::solve(prob, None, settings)
}

/// Solve from a supplied positive-definite primal point.
pub fn solve_from(prob: &SdpProblem, init: &CMatrix, settings: &SdpSettings) -> SdpSolution {
    ipm::solve(prob, Some(init), settings)
}

/// Instance data needed to write down the strictly feasible points of the
/// lifted beamforming SDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterContext {
    pub h: DVector<Complex64>,
    /// `|h_i|^2 sigma_v,i^2`.
    pub hvh_diag: DVector<f64>,
    /// `sigma_theta^2 + sigma_v,i^2`.
    pub d_diag: DVector<f64>,
    pub sigma_w2: f64,
    pub p_max_i: DVector<f64>,
}

/// Strictly feasible primal point `diag{a b, ..., a b, b}` with `a` at half
/// of `min_i P_max,i / D_ii` and `b` normalizing `tr(A Cbar) = 1`.
pub fn feasible_init(ctx: &SlaterContext) -> CMatrix {
    let a = 0.5
        * ctx
            .p_max_i
            .iter()
            .zip(ctx.d_diag.iter())
            .map(|(p, d)| p / d)
            .fold(f64::INFINITY, f64::min);
    let b = 1.0 / (a * ctx.hvh_diag.sum() + ctx.sigma_w2);
    let n = ctx.h.len();
    let diag: Vec<f64> = (0..=n).map(|i| if i < n { a * b } else { b }).collect();
    crate::linalg::real_diag(&diag)
}

/// Strictly feasible dual point `(y, z)` with `G` positive definite.
pub fn dual_slater_point(ctx: &SlaterContext) -> (Vec<f64>, f64) {
    let hh = ctx.h.norm_squared();
    let y: Vec<f64> = ctx
        .d_diag
        .iter()
        .map(|d| if hh > 0.0 { 2.0 * hh / d } else { 1.0 })
        .collect();
    let corner = (hh + y.iter().zip(ctx.p_max_i.iter()).map(|(y, p)| y * p).sum::<f64>()) / ctx.sigma_w2;
    let mut z = corner;
    for ((yi, di), q) in y.iter().zip(ctx.d_diag.iter()).zip(ctx.hvh_diag.iter()) {
        if *q > 0.0 {
            z = z.max((hh - yi * di) / q);
        }
    }
    (y, 2.0 * z.max(0.0) + 1.0)
}
