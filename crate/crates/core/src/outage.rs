//! Equal-power transmission and the probability that the posterior MSE
//! exceeds a threshold.
//!
//! With every sensor spending `P_max / N`, the event `P_{n|n} > epsilon` is
//! the quadratic-form event `h_tilde^H B h_tilde < beta sigma_w^2` with
//! `B = Dbar a_e a_e^H Dbar - beta E`. `B` is a rank-one term minus a
//! nonnegative diagonal, so at most one eigenvalue is positive and the
//! tail of the weighted sum of unit exponentials has a product form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kalman::posterior_mse;
use crate::model::{build_d, sample_channel, GainVector, SensorNetwork};
use crate::sumpower::snr;

/// Relative gap below which two eigenvalues in the product are treated as equal.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Trials per independently seeded block in [`empirical_outage`].
const BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct OutageInstance {
    pub network: SensorNetwork,
    pub sigma_theta2: f64,
    pub p_max: f64,
    pub p_pred: f64,
    pub epsilon: f64,
    pub gain: GainVector,
    /// Amplitude path gains `1 / d_i^gamma`.
    pub path_gain: DVector<f64>,
    /// Diagonal of `E`: `P_max sigma_v,i^2 / (N (sigma_theta^2 + sigma_v,i^2) d_i^{2 gamma})`.
    pub e_diag: DVector<f64>,
    /// `e_diag` sorted descending.
    pub e_sorted: Vec<f64>,
    pub beta: f64,
}

impl OutageInstance {
    pub fn new(network: SensorNetwork, sigma_theta2: f64, p_max: f64, p_pred: f64, epsilon: f64) -> Result<Self> {
        network.validate()?;
        if !(sigma_theta2 > 0.0) {
            return Err(invalid("sigma_theta2", "must be positive"));
        }
        if !(p_pred > 0.0) {
            return Err(invalid("p_pred", "must be positive"));
        }
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        let gain = equal_power_gain(&network, sigma_theta2, p_max)?;
        let n = network.n_sensors();
        let path_gain = DVector::from_vec(network.path_gains());
        let e_diag = DVector::from_iterator(
            n,
            network
                .sigma_v2
                .iter()
                .zip(path_gain.iter())
                .map(|(s, g)| p_max * s / (n as f64 * (sigma_theta2 + s)) * g * g),
        );
        let mut e_sorted: Vec<f64> = e_diag.iter().copied().collect();
        e_sorted.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            beta: (p_pred - epsilon) / (epsilon * p_pred),
            network,
            sigma_theta2,
            p_max,
            p_pred,
            epsilon,
            gain,
            path_gain,
            e_diag,
            e_sorted,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.network.n_sensors()
    }

    /// `epsilon >= P_pred`: the posterior MSE can never exceed the threshold.
    pub fn outage_impossible(&self) -> bool {
        self.epsilon >= self.p_pred
    }

    /// Entries of `Dbar a_e` (real, since `a_e` is).
    fn weighted_gain(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_sensors(),
            self.gain.0.iter().zip(self.path_gain.iter()).map(|(a, g)| a.re * g),
        )
    }

    /// `a_e^H Dbar^2 a_e`.
    pub fn signal_energy(&self) -> f64 {
        self.weighted_gain().norm_squared()
    }

    /// Whether one sampled core channel is in outage, computed through the
    /// posterior MSE.
    pub fn in_outage(&self, h: &DVector<Complex64>) -> bool {
        let hvh = self.network.hvh_diag(h);
        let g = snr(&self.gain, h, &hvh, self.network.sigma_w2);
        posterior_mse(self.p_pred, g) > self.epsilon
    }
}

/// `a_e,i = sqrt(P_max / N) / sqrt(sigma_theta^2 + sigma_v,i^2)`.
pub fn equal_power_gain(network: &SensorNetwork, sigma_theta2: f64, p_max: f64) -> Result<GainVector> {
    if !(p_max > 0.0) {
        return Err(invalid("p_max", "must be positive"));
    }
    let per_sensor = p_max / network.n_sensors() as f64;
    let d = build_d(network, sigma_theta2);
    Ok(GainVector(d.map(|di| Complex64::new((per_sensor / di).sqrt(), 0.0))))
}

/// `B` together with its eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageMatrix {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

pub fn outage_matrix(inst: &OutageInstance) -> OutageMatrix {
    let w = inst.weighted_gain();
    let matrix = &w * w.transpose() - DMatrix::from_diagonal(&inst.e_diag.scale(inst.beta));
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    OutageMatrix { matrix, eigenvalues }
}

/// `1 - lambda_1^{N-1} / prod_{l>1} (lambda_1 - lambda_l) exp(-beta sigma_w^2 / lambda_1)`.
///
/// Returns 0 when outage is impossible and 1 when no eigenvalue is positive.
pub fn outage_probability(inst: &OutageInstance) -> Result<f64> {
    if inst.outage_impossible() {
        return Ok(0.0);
    }
    let lambda = outage_matrix(inst).eigenvalues;
    outage_from_eigenvalues(&lambda, inst.beta * inst.network.sigma_w2)
}

/// Closed form for descending `lambda` and threshold `t = beta sigma_w^2`.
pub fn outage_from_eigenvalues(lambda: &[f64], threshold: f64) -> Result<f64> {
    let l1 = lambda[0];
    if !(l1 > 0.0) {
        return Ok(1.0);
    }
    let scale = lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    // Each factor lambda_1 / (lambda_1 - lambda_l) is positive for distinct
    // lambda_l < lambda_1; accumulate its logarithm.
    let mut log_ratio = 0.0;
    for (l, &ll) in lambda.iter().enumerate().skip(1) {
        let gap = l1 - ll;
        if gap.abs() < DEGENERACY_TOL * scale {
            return Err(Error::EigenvalueDegeneracy { i: 0, l, gap });
        }
        if gap < 0.0 {
            return Err(invalid("lambda", "eigenvalues must be sorted descending"));
        }
        log_ratio += l1.ln() - gap.ln();
    }
    let tail = (log_ratio - threshold / l1).exp();
    Ok((1.0 - tail).clamp(0.0, 1.0))
}

/// Closed interval `[lo, hi]` bracketing one eigenvalue of `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }
}

/// Weyl intervals for `lambda_1 >= ... >= lambda_N`.
pub fn weyl_bounds(inst: &OutageInstance) -> Vec<Interval> {
    let n = inst.n_sensors();
    let r = inst.signal_energy();
    let be: Vec<f64> = inst.e_sorted.iter().map(|e| inst.beta * e).collect();
    let mut out = Vec::with_capacity(n);
    out.push(Interval { lo: r - be[0], hi: r - be[n - 1] });
    // 1-based lambda_i lies in [-beta e_{N-i+1}, -beta e_{N-i+2}].
    for i in 2..=n {
        out.push(Interval { lo: -be[n - i], hi: -be[n - i + 1] });
    }
    out
}

/// Fraction of `trials` sampled channels in outage.
///
/// One seed is drawn from `rng`; trials are split into fixed-size blocks,
/// each on its own ChaCha stream, so the result does not depend on the
/// thread count.
pub fn empirical_outage<R: RngCore + ?Sized>(inst: &OutageInstance, trials: usize, rng: &mut R) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if inst.outage_impossible() {
        return Ok(0.0);
    }
    let seed = rng.next_u64();
    let blocks = trials.div_ceil(BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut block_rng = ChaCha8Rng::seed_from_u64(seed);
            block_rng.set_stream(b as u64);
            let count = BLOCK.min(trials - b * BLOCK);
            (0..count)
                .filter(|_| inst.in_outage(&sample_channel(&inst.network, &mut block_rng).h))
                .count()
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_stderr(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).max(0.0).sqrt()
}
