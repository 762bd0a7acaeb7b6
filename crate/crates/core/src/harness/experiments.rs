//! Monte Carlo drivers.
//!
//! Randomness is derived from `(seed, index, stream)`: the ChaCha key is
//! `seed ^ index` for realization or trial `index`, and separate streams
//! carry network, channel and noise draws. Sensors are drawn one at a time
//! from their stream, so the network and channels with `N` sensors are a
//! prefix of those with `N + 1`, and every budget sees the same draws.
//! Work items run in parallel but results are reduced in index order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ConstraintMode, ExperimentConfig, ExperimentKind, MIN_SIGMA_V2};
use super::output::{sort_rows, ResultRow};
use crate::error::{invalid, Error, Result};
use crate::indivpower::{lift, solve_individual};
use crate::kalman::{self, KalmanState, Prediction};
use crate::model::{complex_gaussian, observe, sample_channel, step_process, ChannelRealization, GainVector, ProcessModel, SensorNetwork};
use crate::outage::{binomial_stderr, empirical_outage, equal_power_gain, outage_probability, OutageInstance};
use crate::sdp::SdpSettings;
use crate::sumpower::{mse_lower_bound, optimal_gain_sum, snr, SumPowerInstance};

const NETWORK_STREAM: u64 = 0;
/// Channel draws for step `s` use stream `CHANNEL_STREAM + s`.
const CHANNEL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 1 << 32;
const MONTE_CARLO_STREAM: u64 = 1 << 33;

pub fn stream_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index);
    rng.set_stream(stream);
    rng
}

/// Draws `n` sensors: distance, then noise variance, sensor by sensor.
pub fn draw_network<R: Rng + ?Sized>(cfg: &ExperimentConfig, n: usize, rng: &mut R) -> Result<SensorNetwork> {
    let [dlo, dhi] = cfg.distance_range;
    let [slo, shi] = cfg.sigma_v2_range;
    let mut d = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        d.push(rng.random_range(dlo..=dhi));
        s.push(rng.random_range(slo..=shi).max(MIN_SIGMA_V2));
    }
    SensorNetwork::new(d, cfg.gamma, s, cfg.sigma_w2)
}

/// How the sensors choose their gains for one channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainPolicy {
    Sum,
    Individual,
    EqualPower,
    /// No transmission: `a = 0`.
    Silent,
}

impl GainPolicy {
    pub fn label(self) -> &'static str {
        match self {
            GainPolicy::Sum => "sum",
            GainPolicy::Individual => "individual",
            GainPolicy::EqualPower => "equal",
            GainPolicy::Silent => "silent",
        }
    }

    /// Policies selected by a constraint mode, in label order.
    pub fn for_mode(mode: ConstraintMode) -> Vec<GainPolicy> {
        [GainPolicy::EqualPower, GainPolicy::Individual, GainPolicy::Sum]
            .into_iter()
            .filter(|p| match p {
                GainPolicy::Sum => mode.includes(ConstraintMode::Sum),
                GainPolicy::Individual => mode.includes(ConstraintMode::Individual),
                GainPolicy::EqualPower => mode.includes(ConstraintMode::EqualPower),
                GainPolicy::Silent => false,
            })
            .collect()
    }

    /// Gain for total budget `p_max`; the individual policy splits it evenly.
    pub fn gain(
        self,
        ch: &ChannelRealization,
        network: &SensorNetwork,
        sigma_theta2: f64,
        p_max: f64,
        settings: &SdpSettings,
    ) -> Result<GainVector> {
        let n = network.n_sensors();
        match self {
            GainPolicy::Sum => Ok(optimal_gain_sum(&SumPowerInstance::new(ch, network, sigma_theta2, p_max)?).gain),
            GainPolicy::Individual => {
                let inst = lift(ch, network, sigma_theta2, &vec![p_max / n as f64; n])?;
                Ok(solve_individual(&inst, settings)?.gain)
            }
            GainPolicy::EqualPower => equal_power_gain(network, sigma_theta2, p_max),
            GainPolicy::Silent => Ok(GainVector::zeros(n)),
        }
    }
}

pub fn measurement_snr(a: &GainVector, ch: &ChannelRealization, network: &SensorNetwork) -> f64 {
    snr(a, &ch.h, &network.hvh_diag(&ch.h), network.sigma_w2)
}

/// Sample mean and its standard error.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<u64> {
    cfg.validate()?;
    if cfg.experiment != kind {
        return Err(invalid("experiment", format!("expected {}", kind.label())));
    }
    cfg.require_seed()
}

/// Posterior MSE after `cfg.steps` updates for one realization, one value
/// per policy (`None` on failure), followed by the bound.
fn mse_realization(
    cfg: &ExperimentConfig,
    seed: u64,
    r: u64,
    n: usize,
    p_max: f64,
    policies: &[GainPolicy],
    model: &ProcessModel,
) -> Result<(Vec<Option<f64>>, f64)> {
    let network = draw_network(cfg, n, &mut stream_rng(seed, r, NETWORK_STREAM))?;
    let settings = SdpSettings::default();
    let mut p_pred: Vec<Option<f64>> = vec![Some(cfg.p_init); policies.len()];
    let mut bound_pred = cfg.p_init;
    let mut post = p_pred.clone();
    let mut bound = bound_pred;
    for s in 0..cfg.steps {
        let ch = sample_channel(&network, &mut stream_rng(seed, r, CHANNEL_STREAM + s as u64));
        for (k, policy) in policies.iter().enumerate() {
            post[k] = p_pred[k].and_then(|p| {
                let a = policy.gain(&ch, &network, cfg.sigma_theta2, p_max, &settings).ok()?;
                Some(kalman::posterior_mse(p, measurement_snr(&a, &ch, &network)))
            });
            p_pred[k] = post[k].map(|p| model.alpha * model.alpha * p + model.sigma_u2);
        }
        bound = mse_lower_bound(bound_pred, &network);
        bound_pred = model.alpha * model.alpha * bound + model.sigma_u2;
    }
    Ok((post, bound))
}

/// Mean posterior MSE versus sensor count for every budget and policy,
/// plus the large-budget bound and a failure count for the SDP policy.
pub fn run_mse_vs_sensors(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let seed = expect_kind(cfg, ExperimentKind::MseVsSensors)?;
    let model = cfg.process_model()?;
    let policies = GainPolicy::for_mode(cfg.constraint_mode);
    let counts = cfg.sensor_counts();
    let budgets = cfg.p_max_values();
    let combos: Vec<(f64, usize)> = budgets.iter().flat_map(|&p| counts.iter().map(move |&n| (p, n))).collect();

    let per_realization: Vec<Vec<(Vec<Option<f64>>, f64)>> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| {
            combos
                .iter()
                .map(|&(p, n)| mse_realization(cfg, seed, r, n, p, &policies, &model))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (c, &(p, n)) in combos.iter().enumerate() {
        let experiment = format!("{}:p_max={p}", ExperimentKind::MseVsSensors.label());
        let row = |method: &str, values: &[f64]| {
            let (metric, stderr) = summarize(values);
            ResultRow {
                experiment: experiment.clone(),
                param: n as f64,
                method: method.to_string(),
                metric,
                stderr,
                n_realizations: values.len(),
                seed,
            }
        };
        for (k, policy) in policies.iter().enumerate() {
            let values: Vec<f64> = per_realization.iter().filter_map(|v| v[c].0[k]).collect();
            let failures = cfg.realizations - values.len();
            rows.push(row(policy.label(), &values));
            if *policy == GainPolicy::Individual {
                rows.push(ResultRow {
                    metric: failures as f64,
                    stderr: 0.0,
                    n_realizations: cfg.realizations,
                    ..row("individual_failures", &[])
                });
            }
        }
        let bounds: Vec<f64> = per_realization.iter().map(|v| v[c].1).collect();
        rows.push(row("lower_bound", &bounds));
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Closed-form and simulated outage of equal-power transmission versus
/// budget, on one network draw shared by every budget.
pub fn run_outage_vs_power(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let seed = expect_kind(cfg, ExperimentKind::OutageVsPower)?;
    let mut rows = Vec::new();
    for n in cfg.sensor_counts() {
        let network = draw_network(cfg, n, &mut stream_rng(seed, 0, NETWORK_STREAM))?;
        let experiment = format!("{}:n_sensors={n}", ExperimentKind::OutageVsPower.label());
        let points: Vec<(f64, Result<f64>, f64)> = cfg
            .p_max_values()
            .into_iter()
            .map(|p| {
                let inst = OutageInstance::new(network.clone(), cfg.sigma_theta2, p, cfg.p_init, cfg.epsilon)?;
                let mut mc_rng = stream_rng(seed, 0, MONTE_CARLO_STREAM);
                let empirical = empirical_outage(&inst, cfg.trials, &mut mc_rng)?;
                Ok((p, outage_probability(&inst), empirical))
            })
            .collect::<Result<Vec<_>>>()?;
        for (p, theory, empirical) in points {
            let base = ResultRow {
                experiment: experiment.clone(),
                param: p,
                method: "empirical".into(),
                metric: empirical,
                stderr: binomial_stderr(empirical, cfg.trials),
                n_realizations: cfg.trials,
                seed,
            };
            let theory_row = match theory {
                Ok(v) => ResultRow {
                    method: "theory".into(),
                    metric: v,
                    stderr: 0.0,
                    n_realizations: 1,
                    ..base.clone()
                },
                Err(Error::EigenvalueDegeneracy { .. }) => ResultRow {
                    method: "theory_mc_fallback".into(),
                    ..base.clone()
                },
                Err(e) => return Err(e),
            };
            rows.push(base);
            rows.push(theory_row);
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Per-step gains for one policy on a fixed channel sequence, or the number
/// of steps at which the policy failed.
fn policy_gains(
    policy: GainPolicy,
    channels: &[ChannelRealization],
    network: &SensorNetwork,
    cfg: &ExperimentConfig,
    p_max: f64,
) -> std::result::Result<Vec<GainVector>, usize> {
    let settings = SdpSettings::default();
    let gains: Vec<Option<GainVector>> = channels
        .iter()
        .map(|ch| policy.gain(ch, network, cfg.sigma_theta2, p_max, &settings).ok())
        .collect();
    let failures = gains.iter().filter(|g| g.is_none()).count();
    if failures > 0 {
        Err(failures)
    } else {
        Ok(gains.into_iter().flatten().collect())
    }
}

/// Squared estimation error per step for one simulated trial.
fn tracking_trial(
    seed: u64,
    t: u64,
    cfg: &ExperimentConfig,
    model: &ProcessModel,
    network: &SensorNetwork,
    channels: &[ChannelRealization],
    gains: &[GainVector],
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, t, NOISE_STREAM);
    let mut theta = complex_gaussian(&mut rng, cfg.p_init);
    let mut pred = Prediction {
        theta_hat: Complex64::new(0.0, 0.0),
        p: cfg.p_init,
    };
    let mut errors = Vec::with_capacity(channels.len());
    for (s, (ch, a)) in channels.iter().zip(gains).enumerate() {
        if s > 0 {
            theta = step_process(theta, model, &mut rng);
        }
        let y = observe(theta, a, ch, network, &mut rng)?;
        let k = kalman::gain(pred.p, a, ch, network);
        let state = kalman::update(&pred, y, a, ch, k);
        errors.push((theta - state.theta_hat).norm_sqr());
        pred = kalman::predict(&state, model);
    }
    Ok(errors)
}

/// Filter MSE recursion over a channel sequence.
pub fn mse_recursion(
    p_init: f64,
    model: &ProcessModel,
    network: &SensorNetwork,
    channels: &[ChannelRealization],
    gains: &[GainVector],
) -> Vec<f64> {
    let mut pred = Prediction {
        theta_hat: Complex64::new(0.0, 0.0),
        p: p_init,
    };
    let mut out = Vec::with_capacity(channels.len());
    for (ch, a) in channels.iter().zip(gains) {
        let k = kalman::gain(pred.p, a, ch, network);
        let state: KalmanState = kalman::update(&pred, Complex64::new(0.0, 0.0), a, ch, k);
        out.push(state.p);
        pred = kalman::predict(&state, model);
    }
    out
}

/// Tracking over `cfg.steps` steps on one network and one channel sequence
/// for the given policies: the recursion's posterior MSE and the empirical
/// mean squared error over `cfg.trials` trials, per step.
pub fn run_tracking_with_policies(cfg: &ExperimentConfig, policies: &[GainPolicy]) -> Result<Vec<ResultRow>> {
    let seed = expect_kind(cfg, ExperimentKind::TrackingTrace)?;
    let model = cfg.process_model()?;
    let n = cfg.sensor_counts()[0];
    let network = draw_network(cfg, n, &mut stream_rng(seed, 0, NETWORK_STREAM))?;
    let channels: Vec<ChannelRealization> = (0..cfg.steps)
        .map(|s| sample_channel(&network, &mut stream_rng(seed, 0, CHANNEL_STREAM + s as u64)))
        .collect();

    let mut rows = Vec::new();
    for p_max in cfg.p_max_values() {
        let experiment = format!("{}:p_max={p_max}", ExperimentKind::TrackingTrace.label());
        for &policy in policies {
            let gains = match policy_gains(policy, &channels, &network, cfg, p_max) {
                Ok(g) => g,
                Err(failures) => {
                    rows.push(ResultRow {
                        experiment: experiment.clone(),
                        param: 0.0,
                        method: format!("{}_failures", policy.label()),
                        metric: failures as f64,
                        stderr: 0.0,
                        n_realizations: cfg.steps,
                        seed,
                    });
                    continue;
                }
            };
            let recursion = mse_recursion(cfg.p_init, &model, &network, &channels, &gains);
            let trials: Vec<Vec<f64>> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| tracking_trial(seed, t, cfg, &model, &network, &channels, &gains))
                .collect::<Result<Vec<_>>>()?;
            for s in 0..cfg.steps {
                let values: Vec<f64> = trials.iter().map(|e| e[s]).collect();
                let (metric, stderr) = summarize(&values);
                let base = ResultRow {
                    experiment: experiment.clone(),
                    param: (s + 1) as f64,
                    method: format!("{}_empirical", policy.label()),
                    metric,
                    stderr,
                    n_realizations: cfg.trials,
                    seed,
                };
                rows.push(ResultRow {
                    method: format!("{}_recursion", policy.label()),
                    metric: recursion[s],
                    stderr: 0.0,
                    n_realizations: 1,
                    ..base.clone()
                });
                rows.push(base);
            }
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn run_tracking_trace(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_tracking_with_policies(cfg, &GainPolicy::for_mode(cfg.constraint_mode))
}

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match cfg.experiment {
        ExperimentKind::MseVsSensors => run_mse_vs_sensors(cfg),
        ExperimentKind::OutageVsPower => run_outage_vs_power(cfg),
        ExperimentKind::TrackingTrace => run_tracking_trace(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::output::to_csv;

    fn cfg(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            seed: Some(17),
            ..ExperimentConfig::default()
        }
    }

    fn metric(rows: &[ResultRow], exp_prefix: &str, param: f64, method: &str) -> f64 {
        rows.iter()
            .find(|r| r.experiment.starts_with(exp_prefix) && r.param == param && r.method == method)
            .unwrap_or_else(|| panic!("missing {exp_prefix} {param} {method}"))
            .metric
    }

    #[test]
    fn networks_nest_across_sensor_counts() {
        let c = cfg(ExperimentKind::MseVsSensors);
        let small = draw_network(&c, 3, &mut stream_rng(5, 2, NETWORK_STREAM)).unwrap();
        let big = draw_network(&c, 6, &mut stream_rng(5, 2, NETWORK_STREAM)).unwrap();
        assert_eq!(small.distances[..], big.distances[..3]);
        assert_eq!(small.sigma_v2[..], big.sigma_v2[..3]);
        assert!(big.sigma_v2.iter().all(|s| (MIN_SIGMA_V2..=0.5).contains(s)));
        assert!(big.distances.iter().all(|d| (2.0..=8.0).contains(d)));
    }

    #[test]
    fn single_realization_is_reproducible_and_ordered() {
        let c = ExperimentConfig {
            realizations: 1,
            n_sensors: Some(crate::harness::OneOrMany::Many(vec![2, 5])),
            ..cfg(ExperimentKind::MseVsSensors)
        };
        let a = run_mse_vs_sensors(&c).unwrap();
        let b = run_mse_vs_sensors(&c).unwrap();
        assert_eq!(to_csv(&a), to_csv(&b));
        for p in ["mse_vs_sensors:p_max=300", "mse_vs_sensors:p_max=3000"] {
            for n in [2.0, 5.0] {
                let sum = metric(&a, p, n, "sum");
                let ind = metric(&a, p, n, "individual");
                let eq = metric(&a, p, n, "equal");
                let lb = metric(&a, p, n, "lower_bound");
                assert!(lb < sum && sum <= ind * (1.0 + 1e-9) && ind <= eq * (1.0 + 1e-9), "{p} {n}");
                assert_eq!(metric(&a, p, n, "individual_failures"), 0.0);
            }
        }
    }

    #[test]
    fn mode_filters_methods() {
        let c = ExperimentConfig {
            realizations: 2,
            n_sensors: Some(crate::harness::OneOrMany::One(3)),
            p_max: Some(crate::harness::OneOrMany::One(100.0)),
            constraint_mode: ConstraintMode::Sum,
            ..cfg(ExperimentKind::MseVsSensors)
        };
        let rows = run_mse_vs_sensors(&c).unwrap();
        let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(methods, vec!["lower_bound", "sum"]);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        assert!(run_outage_vs_power(&cfg(ExperimentKind::MseVsSensors)).is_err());
        let no_seed = ExperimentConfig::default();
        assert!(run_mse_vs_sensors(&no_seed).is_err());
    }

    #[test]
    fn outage_rows_pair_up_and_decrease() {
        let c = ExperimentConfig { trials: 2000, ..cfg(ExperimentKind::OutageVsPower) };
        let rows = run_outage_vs_power(&c).unwrap();
        assert_eq!(rows.len(), 20);
        let theory: Vec<f64> = rows.iter().filter(|r| r.method.starts_with("theory")).map(|r| r.metric).collect();
        let emp: Vec<f64> = rows.iter().filter(|r| r.method == "empirical").map(|r| r.metric).collect();
        assert!(theory.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(emp.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn outage_impossible_threshold_gives_zeros() {
        let c = ExperimentConfig { trials: 100, epsilon: 1.5, ..cfg(ExperimentKind::OutageVsPower) };
        assert!(run_outage_vs_power(&c).unwrap().iter().all(|r| r.metric == 0.0));
    }

    #[test]
    fn silent_policy_follows_prediction_only() {
        let c = ExperimentConfig { steps: 6, trials: 10, ..cfg(ExperimentKind::TrackingTrace) };
        let rows = run_tracking_with_policies(&c, &[GainPolicy::Silent]).unwrap();
        let model = c.process_model().unwrap();
        let mut p = c.p_init;
        for s in 1..=6 {
            assert_eq!(metric(&rows, "tracking_trace", s as f64, "silent_recursion"), p);
            p = model.alpha * model.alpha * p + model.sigma_u2;
        }
    }

    #[test]
    fn noiseless_process_information_accumulates() {
        let c = ExperimentConfig {
            steps: 40,
            trials: 10,
            sigma_u2: Some(0.0),
            p_max: Some(crate::harness::OneOrMany::One(1e6)),
            ..cfg(ExperimentKind::TrackingTrace)
        };
        let rows = run_tracking_with_policies(&c, &[GainPolicy::Sum]).unwrap();
        let rec: Vec<f64> = (1..=40).map(|s| metric(&rows, "tracking_trace", s as f64, "sum_recursion")).collect();
        assert!(rec.windows(2).all(|w| w[1] < w[0]));
        assert!(rec[39] < 1e-3 * rec[0], "{rec:?}");
    }

    #[test]
    fn summarize_examples() {
        assert_eq!(summarize(&[2.0]), (2.0, 0.0));
        let (m, se) = summarize(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
