//! MSE-optimal gains under a sum power budget `a^H D a <= P_max`.
//!
//! Minimizing the posterior MSE is maximizing the measurement SNR
//! `a^H h h^H a / (a^H H V H^H a + sigma_w^2)`. The budget is active at the
//! optimum, which turns the SNR into a Rayleigh quotient with denominator
//! matrix `B = H V H^H + (sigma_w^2 / P_max) D`. Its maximizer is `B^{-1} h`
//! and the maximum is `h^H B^{-1} h`. `B` is diagonal here, so everything is
//! entrywise.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::kalman::posterior_mse;
use crate::model::{build_d, ChannelRealization, GainVector, SensorNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct SumPowerInstance {
    pub h: DVector<Complex64>,
    /// Diagonal of `H V H^H`.
    pub hvh: DVector<f64>,
    /// Diagonal of `D`.
    pub d_diag: DVector<f64>,
    pub sigma_w2: f64,
    pub p_max: f64,
}

impl SumPowerInstance {
    pub fn new(
        ch: &ChannelRealization,
        network: &SensorNetwork,
        sigma_theta2: f64,
        p_max: f64,
    ) -> Result<Self> {
        if ch.len() != network.n_sensors() {
            return Err(Error::DimensionMismatch {
                expected: network.n_sensors(),
                found: ch.len(),
            });
        }
        if !(p_max > 0.0) {
            return Err(invalid("p_max", "total power budget must be positive"));
        }
        if !(sigma_theta2 > 0.0) {
            return Err(invalid("sigma_theta2", "must be positive"));
        }
        Ok(Self {
            h: ch.h.clone(),
            hvh: network.hvh_diag(&ch.h),
            d_diag: build_d(network, sigma_theta2),
            sigma_w2: network.sigma_w2,
            p_max,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.h.len()
    }
}

/// Closed-form optimum, flagged when the channel is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SumPowerGain {
    pub gain: GainVector,
    /// `true` when `h = 0` and the zero vector was returned.
    pub degenerate: bool,
}

/// SNR `|a^H h|^2 / (a^H H V H^H a + sigma_w^2)` on explicit diagonals.
pub fn snr(a: &GainVector, h: &DVector<Complex64>, hvh: &DVector<f64>, sigma_w2: f64) -> f64 {
    let noise: f64 = a
        .0
        .iter()
        .zip(hvh.iter())
        .map(|(ai, q)| ai.norm_sqr() * q)
        .sum::<f64>()
        + sigma_w2;
    a.response(h).norm_sqr() / noise
}

pub fn snr_objective(a: &GainVector, inst: &SumPowerInstance) -> f64 {
    snr(a, &inst.h, &inst.hvh, inst.sigma_w2)
}

/// Diagonal of `B = H V H^H + (sigma_w^2 / P_max) D`.
pub fn build_b(inst: &SumPowerInstance) -> DVector<f64> {
    let ratio = inst.sigma_w2 / inst.p_max;
    inst.hvh.zip_map(&inst.d_diag, |q, d| q + ratio * d)
}

pub fn optimal_gain_sum(inst: &SumPowerInstance) -> SumPowerGain {
    let b = build_b(inst);
    let dir = DVector::from_iterator(inst.n_sensors(), inst.h.iter().zip(b.iter()).map(|(h, b)| h / b));
    // a^H D a for a = B^{-1} h is h^H B^{-1} D B^{-1} h.
    let norm2: f64 = dir
        .iter()
        .zip(inst.d_diag.iter())
        .map(|(x, d)| x.norm_sqr() * d)
        .sum();
    if norm2 == 0.0 {
        return SumPowerGain {
            gain: GainVector::zeros(inst.n_sensors()),
            degenerate: true,
        };
    }
    let scale = (inst.p_max / norm2).sqrt();
    SumPowerGain {
        gain: GainVector(dir.map(|x| x * scale)),
        degenerate: false,
    }
}

/// `h^H B^{-1} h`.
pub fn optimal_value(inst: &SumPowerInstance) -> f64 {
    build_b(inst)
        .iter()
        .zip(inst.h.iter())
        .map(|(b, h)| h.norm_sqr() / b)
        .sum()
}

/// `sum_i 1 / sigma_v,i^2`, the SNR limit as the budget grows without bound.
pub fn snr_upper_bound(network: &SensorNetwork) -> Result<f64> {
    let mut acc = 0.0;
    for (i, s) in network.sigma_v2.iter().enumerate() {
        if *s == 0.0 {
            return Err(Error::ZeroMeasurementNoise { sensor: i });
        }
        acc += 1.0 / s;
    }
    Ok(acc)
}

/// `P_pred / (1 + (sum_i 1/sigma_v,i^2) P_pred)`; zero if some sensor is noiseless.
pub fn mse_lower_bound(p_pred: f64, network: &SensorNetwork) -> f64 {
    match snr_upper_bound(network) {
        Ok(g) => posterior_mse(p_pred, g),
        Err(_) => 0.0,
    }
}

/// High-budget gain with `a_i` proportional to `1 / (conj(h_i) sigma_v,i^2)`,
/// rescaled so that `a^H D a = P_max`.
pub fn asymptotic_gain(inst: &SumPowerInstance, network: &SensorNetwork) -> Result<GainVector> {
    if network.n_sensors() != inst.n_sensors() {
        return Err(Error::DimensionMismatch {
            expected: inst.n_sensors(),
            found: network.n_sensors(),
        });
    }
    let mut dir = Vec::with_capacity(inst.n_sensors());
    for (i, (h, s)) in inst.h.iter().zip(&network.sigma_v2).enumerate() {
        if *s == 0.0 {
            return Err(Error::ZeroMeasurementNoise { sensor: i });
        }
        if h.norm_sqr() == 0.0 {
            return Err(Error::ZeroChannel { sensor: i });
        }
        dir.push(Complex64::new(1.0, 0.0) / (h.conj() * *s));
    }
    let dir = GainVector::from_vec(dir);
    let scale = (inst.p_max / dir.total_power(&inst.d_diag)).sqrt();
    Ok(dir.scaled(Complex64::new(scale, 0.0)))
}
