//! Gauss-Markov process, flat-fading channel and coherent-MAC observation model.
//!
//! Complex Gaussians follow the circularly-symmetric convention: `CN(0, s)`
//! has independent real and imaginary parts of variance `s / 2`, so `|z|^2`
//! is exponential with mean `s`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// First-order Gauss-Markov dynamics `theta_n = alpha * theta_{n-1} + u_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub alpha: f64,
    pub sigma_u2: f64,
    pub sigma_theta2: f64,
}

impl ProcessModel {
    pub fn new(alpha: f64, sigma_u2: f64, sigma_theta2: f64) -> Result<Self> {
        let model = Self {
            alpha,
            sigma_u2,
            sigma_theta2,
        };
        model.validate()?;
        Ok(model)
    }

    /// Process whose stationary variance equals `sigma_theta2`:
    /// `sigma_u2 = (1 - alpha^2) * sigma_theta2`.
    pub fn stationary(alpha: f64, sigma_theta2: f64) -> Result<Self> {
        Self::new(alpha, (1.0 - alpha * alpha) * sigma_theta2, sigma_theta2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.abs() < 1.0) {
            return Err(invalid("alpha", format!("|alpha| must be < 1, got {}", self.alpha)));
        }
        if !(self.sigma_u2 >= 0.0) {
            return Err(invalid("sigma_u2", "must be nonnegative"));
        }
        if !(self.sigma_theta2 > 0.0) {
            return Err(invalid("sigma_theta2", "must be positive"));
        }
        Ok(())
    }
}

/// Static description of the sensor field and fusion-center receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNetwork {
    pub distances: Vec<f64>,
    pub gamma: f64,
    pub sigma_v2: Vec<f64>,
    pub sigma_w2: f64,
}

impl SensorNetwork {
    pub fn new(distances: Vec<f64>, gamma: f64, sigma_v2: Vec<f64>, sigma_w2: f64) -> Result<Self> {
        let net = Self {
            distances,
            gamma,
            sigma_v2,
            sigma_w2,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn n_sensors(&self) -> usize {
        self.distances.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() {
            return Err(invalid("distances", "network needs at least one sensor"));
        }
        if self.sigma_v2.len() != self.distances.len() {
            return Err(Error::DimensionMismatch {
                expected: self.distances.len(),
                found: self.sigma_v2.len(),
            });
        }
        if self.distances.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(invalid("distances", "all distances must be positive and finite"));
        }
        if self.sigma_v2.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(invalid("sigma_v2", "measurement-noise variances must be nonnegative"));
        }
        if !(self.sigma_w2 > 0.0) {
            return Err(invalid("sigma_w2", "fusion-center noise variance must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(invalid("gamma", "path-loss exponent must be nonnegative"));
        }
        Ok(())
    }

    /// Amplitude path loss `1 / d_i^gamma` per sensor.
    pub fn path_gains(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d.powf(-self.gamma)).collect()
    }

    /// Diagonal of `H V H^H`, i.e. `|h_i|^2 sigma_v,i^2`.
    pub fn hvh_diag(&self, h: &DVector<Complex64>) -> DVector<f64> {
        DVector::from_iterator(
            h.len(),
            h.iter().zip(&self.sigma_v2).map(|(hi, s)| hi.norm_sqr() * s),
        )
    }
}

/// One draw of the channel vector together with its unit-variance core.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DVector<Complex64>,
    pub h_tilde: DVector<Complex64>,
}

impl ChannelRealization {
    /// Applies the path loss of `network` to a given core `h_tilde`.
    pub fn from_core(h_tilde: DVector<Complex64>, network: &SensorNetwork) -> Result<Self> {
        if h_tilde.len() != network.n_sensors() {
            return Err(Error::DimensionMismatch {
                expected: network.n_sensors(),
                found: h_tilde.len(),
            });
        }
        let h = DVector::from_iterator(
            h_tilde.len(),
            h_tilde
                .iter()
                .zip(&network.distances)
                .map(|(ht, d)| ht / d.powf(network.gamma)),
        );
        Ok(Self { h, h_tilde })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Conjugated per-sensor transmit gain and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector(pub DVector<Complex64>);

impl GainVector {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn from_vec(v: Vec<Complex64>) -> Self {
        Self(DVector::from_vec(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `a^H h`.
    pub fn response(&self, h: &DVector<Complex64>) -> Complex64 {
        self.0.dotc(h)
    }

    /// Per-sensor transmit power `|a_i|^2 D_ii`.
    pub fn transmit_powers(&self, d_diag: &DVector<f64>) -> Vec<f64> {
        self.0
            .iter()
            .zip(d_diag.iter())
            .map(|(a, d)| a.norm_sqr() * d)
            .collect()
    }

    /// Total transmit power `a^H D a`.
    pub fn total_power(&self, d_diag: &DVector<f64>) -> f64 {
        self.transmit_powers(d_diag).iter().sum()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }
}

/// Draws `CN(0, variance)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

pub fn step_process<R: Rng + ?Sized>(theta: Complex64, model: &ProcessModel, rng: &mut R) -> Complex64 {
    let u = if model.sigma_u2 > 0.0 {
        complex_gaussian(rng, model.sigma_u2)
    } else {
        Complex64::new(0.0, 0.0)
    };
    theta * model.alpha + u
}

pub fn sample_channel<R: Rng + ?Sized>(network: &SensorNetwork, rng: &mut R) -> ChannelRealization {
    let n = network.n_sensors();
    let h_tilde = DVector::from_iterator(n, (0..n).map(|_| complex_gaussian(rng, 1.0)));
    ChannelRealization::from_core(h_tilde, network).expect("core length matches network")
}

/// Received sample for explicit noise draws: `a^H h theta + a^H H v + w`.
pub fn observe_with_noise(
    theta: Complex64,
    a: &GainVector,
    ch: &ChannelRealization,
    v: &[Complex64],
    w: Complex64,
) -> Result<Complex64> {
    let n = ch.len();
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.len() });
    }
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: v.len() });
    }
    let sensor_noise: Complex64 = a
        .0
        .iter()
        .zip(ch.h.iter())
        .zip(v)
        .map(|((ai, hi), vi)| ai.conj() * hi * vi)
        .sum();
    Ok(a.response(&ch.h) * theta + sensor_noise + w)
}

/// Received sample with `v ~ CN(0, V)` and `w ~ CN(0, sigma_w2)` drawn from `rng`.
pub fn observe<R: Rng + ?Sized>(
    theta: Complex64,
    a: &GainVector,
    ch: &ChannelRealization,
    network: &SensorNetwork,
    rng: &mut R,
) -> Result<Complex64> {
    if network.n_sensors() != ch.len() {
        return Err(Error::DimensionMismatch {
            expected: network.n_sensors(),
            found: ch.len(),
        });
    }
    let v: Vec<Complex64> = network
        .sigma_v2
        .iter()
        .map(|s| complex_gaussian(rng, *s))
        .collect();
    let w = complex_gaussian(rng, network.sigma_w2);
    observe_with_noise(theta, a, ch, &v, w)
}

/// Diagonal of `D = diag{sigma_theta2 + sigma_v,i^2}`.
pub fn build_d(network: &SensorNetwork, sigma_theta2: f64) -> DVector<f64> {
    DVector::from_iterator(
        network.n_sensors(),
        network.sigma_v2.iter().map(|s| sigma_theta2 + s),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn noiseless_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let identity = ProcessModel { alpha: 1.0, sigma_u2: 0.0, sigma_theta2: 1.0 };
        assert_eq!(step_process(c(1.0, 0.0), &identity, &mut rng), c(1.0, 0.0));
        let decay = ProcessModel::new(0.9, 0.0, 1.0).unwrap();
        assert_eq!(step_process(c(0.0, 0.0), &decay, &mut rng), c(0.0, 0.0));
    }

    #[test]
    fn stationary_variance_moment() {
        let model = ProcessModel::stationary(0.9, 1.0).unwrap();
        assert!((model.sigma_u2 - 0.19).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut theta = complex_gaussian(&mut rng, 1.0);
        let steps = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..steps {
            theta = step_process(theta, &model, &mut rng);
            let p = theta.norm_sqr();
            sum += p;
            sum2 += p * p;
        }
        let mean = sum / steps as f64;
        // AR(1) samples are correlated; inflate the iid standard error by the
        // integrated autocorrelation of |theta|^2, (1 + alpha^2) / (1 - alpha^2).
        let var = sum2 / steps as f64 - mean * mean;
        let a2 = 0.81;
        let se = (var / steps as f64 * (1.0 + a2) / (1.0 - a2)).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ProcessModel::new(1.0, 0.1, 1.0).is_err());
        assert!(ProcessModel::new(0.5, -0.1, 1.0).is_err());
        assert!(ProcessModel::new(0.5, 0.1, 0.0).is_err());
        assert!(SensorNetwork::new(vec![1.0, 0.0], 1.0, vec![0.1, 0.1], 1.0).is_err());
        assert!(SensorNetwork::new(vec![1.0], 1.0, vec![0.1, 0.1], 1.0).is_err());
        assert!(SensorNetwork::new(vec![1.0], 1.0, vec![0.1], 0.0).is_err());
        assert!(SensorNetwork::new(vec![1.0], -1.0, vec![0.1], 1.0).is_err());
        assert!(SensorNetwork::new(vec![1.0], 1.0, vec![0.0], 1.0).is_ok());
    }

    #[test]
    fn channel_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let unit = SensorNetwork::new(vec![1.0], 0.0, vec![0.1], 1.0).unwrap();
        let ch = sample_channel(&unit, &mut rng);
        assert_eq!(ch.h, ch.h_tilde);

        let far = SensorNetwork::new(vec![2.0], 2.0, vec![0.1], 1.0).unwrap();
        let ch = sample_channel(&far, &mut rng);
        assert_eq!(ch.h[0].norm(), ch.h_tilde[0].norm() / 4.0);

        let core = DVector::from_vec(vec![c(0.3, -1.2), c(2.0, 0.5)]);
        let near = SensorNetwork::new(vec![1.5, 3.0], 1.0, vec![0.1, 0.2], 1.0).unwrap();
        let doubled = SensorNetwork::new(vec![3.0, 6.0], 1.0, vec![0.1, 0.2], 1.0).unwrap();
        let a = ChannelRealization::from_core(core.clone(), &near).unwrap();
        let b = ChannelRealization::from_core(core, &doubled).unwrap();
        for i in 0..2 {
            assert!((a.h[i].norm() - 2.0 * b.h[i].norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_power_moment() {
        let net = SensorNetwork::new(vec![2.0], 1.0, vec![0.1], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_channel(&net, &mut rng).h[0].norm_sqr()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn noiseless_observation() {
        let net = SensorNetwork::new(vec![1.0], 0.0, vec![0.0], 1.0).unwrap();
        let ch = ChannelRealization::from_core(DVector::from_vec(vec![c(1.0, 0.0)]), &net).unwrap();
        let a = GainVector::from_vec(vec![c(1.0, 0.0)]);
        let y = observe_with_noise(c(2.0, 0.0), &a, &ch, &[c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert_eq!(y, c(2.0, 0.0));

        let ch = ChannelRealization::from_core(DVector::from_vec(vec![c(0.0, 1.0)]), &net).unwrap();
        let a = GainVector::from_vec(vec![c(0.0, 1.0)]);
        let y = observe_with_noise(c(1.0, 0.0), &a, &ch, &[c(0.0, 0.0)], c(0.0, 0.0)).unwrap();
        assert!((y - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn observation_dimension_mismatch() {
        let net = SensorNetwork::new(vec![1.0, 2.0], 1.0, vec![0.1, 0.1], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = sample_channel(&net, &mut rng);
        let a = GainVector::zeros(3);
        assert!(matches!(
            observe(c(1.0, 0.0), &a, &ch, &net, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn observation_noise_variance() {
        let net = SensorNetwork::new(vec![2.0, 3.0, 5.0], 1.0, vec![0.3, 0.1, 0.45], 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = sample_channel(&net, &mut rng);
        let a = GainVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(3.0, -1.0)]);
        let theta = c(0.7, -0.2);
        let signal = a.response(&ch.h) * theta;
        let n = 100_000;
        let devs: Vec<f64> = (0..n)
            .map(|_| (observe(theta, &a, &ch, &net, &mut rng).unwrap() - signal).norm_sqr())
            .collect();
        let mean = devs.iter().sum::<f64>() / n as f64;
        let var = devs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let hvh = net.hvh_diag(&ch.h);
        let expected: f64 =
            a.0.iter().zip(hvh.iter()).map(|(ai, q)| ai.norm_sqr() * q).sum::<f64>() + net.sigma_w2;
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn d_matrix() {
        let net = SensorNetwork::new(vec![1.0], 1.0, vec![0.0], 1.0).unwrap();
        assert_eq!(build_d(&net, 1.0).as_slice(), &[1.0]);
        let net = SensorNetwork::new(vec![1.0, 1.0], 1.0, vec![0.5, 0.25], 1.0).unwrap();
        assert_eq!(build_d(&net, 1.0).as_slice(), &[1.5, 1.25]);
    }

    #[test]
    fn power_accounting() {
        let d = DVector::from_vec(vec![1.5, 1.25]);
        let a = GainVector::from_vec(vec![c(1.0, 1.0), c(0.0, -2.0)]);
        assert_eq!(a.transmit_powers(&d), vec![3.0, 5.0]);
        assert_eq!(a.total_power(&d), 8.0);
    }
}
