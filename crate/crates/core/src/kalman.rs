//! Scalar complex Kalman filter run at the fusion center.
//!
//! The observation `y = a^H h theta + a^H H v + w` is a scalar measurement
//! with effective coefficient `a^H h` and noise variance
//! `a^H H V H^H a + sigma_w^2`; every quantity below is written in that
//! Hermitian form.

use num_complex::Complex64;

use crate::model::{ChannelRealization, GainVector, ProcessModel, SensorNetwork};

/// Posterior estimate and MSE after a measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub theta_hat: Complex64,
    pub p: f64,
}

impl KalmanState {
    /// Prior used before the first measurement: zero estimate, MSE `p0`.
    pub fn prior(p0: f64) -> Self {
        Self {
            theta_hat: Complex64::new(0.0, 0.0),
            p: p0,
        }
    }
}

/// One-step prediction `(theta_hat_{n|n-1}, P_{n|n-1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub theta_hat: Complex64,
    pub p: f64,
}

impl From<KalmanState> for Prediction {
    fn from(s: KalmanState) -> Self {
        Self {
            theta_hat: s.theta_hat,
            p: s.p,
        }
    }
}

pub fn predict(state: &KalmanState, model: &ProcessModel) -> Prediction {
    Prediction {
        theta_hat: state.theta_hat * model.alpha,
        p: model.alpha * model.alpha * state.p + model.sigma_u2,
    }
}

/// Effective measurement noise `a^H H V H^H a + sigma_w^2`.
pub fn measurement_noise(a: &GainVector, ch: &ChannelRealization, network: &SensorNetwork) -> f64 {
    let sensor: f64 = a
        .0
        .iter()
        .zip(ch.h.iter())
        .zip(&network.sigma_v2)
        .map(|((ai, hi), s)| ai.norm_sqr() * hi.norm_sqr() * s)
        .sum();
    sensor + network.sigma_w2
}

pub fn gain(p_pred: f64, a: &GainVector, ch: &ChannelRealization, network: &SensorNetwork) -> Complex64 {
    let response = a.response(&ch.h);
    let denom = measurement_noise(a, ch, network) + p_pred * response.norm_sqr();
    response.conj() * (p_pred / denom)
}

pub fn update(
    pred: &Prediction,
    y: Complex64,
    a: &GainVector,
    ch: &ChannelRealization,
    k: Complex64,
) -> KalmanState {
    let response = a.response(&ch.h);
    let innovation = y - response * pred.theta_hat;
    let shrink = (Complex64::new(1.0, 0.0) - k * response).re;
    KalmanState {
        theta_hat: pred.theta_hat + k * innovation,
        p: (shrink * pred.p).clamp(0.0, pred.p),
    }
}

/// `P_pred / (1 + g P_pred)` for measurement SNR `g`.
pub fn posterior_mse(p_pred: f64, g: f64) -> f64 {
    p_pred / (1.0 + g * p_pred)
}
