//! MSE-optimal gains under per-sensor budgets `|a_i|^2 D_ii <= P_max,i`.
//!
//! The ratio-of-quadratics problem is homogenized with an auxiliary real `t`
//! (`abar = [t a; t]`), written as a quadratic program in `abar`, lifted to
//! `Abar = abar abar^H` and relaxed by dropping the rank constraint. At the
//! SDP optimum the leading `N x N` block is exactly rank one, so the optimal
//! gain is its dominant factor divided by `sqrt(Abar_{N+1,N+1})`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigh, real_diag, trace_inner, CMatrix};
use crate::model::{build_d, ChannelRealization, GainVector, SensorNetwork};
use crate::sdp::{self, SdpProblem, SdpSettings, SdpSolution, SdpStatus, SlaterContext};
use crate::sumpower::snr;

/// Largest admissible `lambda_2 / lambda_1` of the leading block.
pub const RANK_ONE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedInstance {
    pub h: DVector<Complex64>,
    pub hvh_diag: DVector<f64>,
    pub sigma_w2: f64,
    /// Nonzero entries `sigma_theta^2 + sigma_v,i^2` of the blocks `D_i`.
    pub d_blocks: DVector<f64>,
    pub p_max_i: DVector<f64>,
    pub h_bar: CMatrix,
    pub c_bar: CMatrix,
    pub d_bar: Vec<CMatrix>,
}

impl LiftedInstance {
    pub fn n_sensors(&self) -> usize {
        self.h.len()
    }

    pub fn problem(&self) -> SdpProblem {
        SdpProblem {
            objective: self.h_bar.clone(),
            eq_lhs: self.c_bar.clone(),
            ineq: self.d_bar.clone(),
        }
    }

    pub fn slater_context(&self) -> SlaterContext {
        SlaterContext {
            h: self.h.clone(),
            hvh_diag: self.hvh_diag.clone(),
            d_diag: self.d_blocks.clone(),
            sigma_w2: self.sigma_w2,
            p_max_i: self.p_max_i.clone(),
        }
    }

    pub fn snr(&self, a: &GainVector) -> f64 {
        snr(a, &self.h, &self.hvh_diag, self.sigma_w2)
    }

    /// Homogenized point `[t a; t]` with `t = 1 / sqrt(a^H H V H^H a + sigma_w^2)`.
    pub fn homogenize(&self, a: &GainVector) -> DVector<Complex64> {
        let noise: f64 = a
            .0
            .iter()
            .zip(self.hvh_diag.iter())
            .map(|(ai, q)| ai.norm_sqr() * q)
            .sum::<f64>()
            + self.sigma_w2;
        let t = 1.0 / noise.sqrt();
        let n = self.n_sensors();
        DVector::from_iterator(
            n + 1,
            a.0.iter().map(|ai| ai * t).chain(std::iter::once(Complex64::new(t, 0.0))),
        )
    }
}

pub fn lift(
    ch: &ChannelRealization,
    network: &SensorNetwork,
    sigma_theta2: f64,
    p_max_i: &[f64],
) -> Result<LiftedInstance> {
    let n = network.n_sensors();
    if ch.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: ch.len() });
    }
    if p_max_i.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p_max_i.len() });
    }
    if p_max_i.iter().any(|p| !(*p > 0.0)) {
        return Err(invalid("p_max_i", "every per-sensor budget must be positive"));
    }
    let h = ch.h.clone();
    let hvh_diag = network.hvh_diag(&h);
    let d_blocks = build_d(network, sigma_theta2);

    let mut h_bar = CMatrix::zeros(n + 1, n + 1);
    h_bar.view_mut((0, 0), (n, n)).copy_from(&(&h * h.adjoint()));
    let mut c_diag: Vec<f64> = hvh_diag.iter().copied().collect();
    c_diag.push(network.sigma_w2);
    let c_bar = real_diag(&c_diag);
    let d_bar = (0..n)
        .map(|i| {
            let mut diag = vec![0.0; n + 1];
            diag[i] = d_blocks[i];
            diag[n] = -p_max_i[i];
            real_diag(&diag)
        })
        .collect();

    Ok(LiftedInstance {
        h,
        hvh_diag,
        sigma_w2: network.sigma_w2,
        d_blocks,
        p_max_i: DVector::from_column_slice(p_max_i),
        h_bar,
        c_bar,
        d_bar,
    })
}

/// Gain recovered from a lifted solution together with the spectral evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub gain: GainVector,
    pub lambda1: f64,
    pub lambda2: f64,
    pub corner: f64,
}

/// Rank-one extraction from the leading block of `a_matrix`.
///
/// The global phase is fixed so that `a^H h` is real and nonnegative.
pub fn recover_gain(a_matrix: &CMatrix, h: &DVector<Complex64>) -> Result<Recovery> {
    let n = a_matrix.nrows() - 1;
    if h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: h.len() });
    }
    let corner = a_matrix[(n, n)].re;
    if !(corner > 0.0) {
        return Err(Error::NonPositiveCorner { value: corner });
    }
    let block = a_matrix.view((0, 0), (n, n)).into_owned();
    let (vals, vecs) = hermitian_eigh(&block);
    let lambda1 = vals[0];
    let lambda2 = if n > 1 { vals[1] } else { 0.0 };
    if !(lambda1 > 0.0) || lambda2 > RANK_ONE_THRESHOLD * lambda1 {
        return Err(Error::RankRecoveryFailure { lambda1, lambda2 });
    }
    let scale = (lambda1 / corner).sqrt();
    let mut a: DVector<Complex64> = vecs.column(0).map(|z| z * scale);
    let response = a.dotc(h);
    if response.norm() > 0.0 {
        let phase = response / response.norm();
        a *= phase;
    }
    Ok(Recovery {
        gain: GainVector(a),
        lambda1,
        lambda2,
        corner,
    })
}

/// Result of the full individual-constraint pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualSolution {
    pub gain: GainVector,
    pub sdp: SdpSolution,
    pub recovery: Recovery,
    /// SNR achieved by `gain`.
    pub snr: f64,
}

pub fn solve_individual(inst: &LiftedInstance, settings: &SdpSettings) -> Result<IndividualSolution> {
    let prob = inst.problem();
    let init = sdp::feasible_init(&inst.slater_context());
    let sol = sdp::solve_from(&prob, &init, settings);
    if sol.status != SdpStatus::Optimal {
        return Err(Error::SdpNotOptimal {
            status: sol.status,
            iterations: sol.iterations,
        });
    }
    let mut recovery = recover_gain(&sol.a_matrix, &inst.h)?;
    pull_into_budgets(&mut recovery.gain, inst);
    Ok(IndividualSolution {
        gain: recovery.gain.clone(),
        snr: inst.snr(&recovery.gain),
        sdp: sol,
        recovery,
    })
}

/// Uniform shrink so that no sensor exceeds its budget; solver residuals can
/// leave a constraint violated at the solver tolerance.
fn pull_into_budgets(a: &mut GainVector, inst: &LiftedInstance) {
    let worst = a
        .0
        .iter()
        .zip(inst.d_blocks.iter())
        .zip(inst.p_max_i.iter())
        .map(|((ai, d), p)| ai.norm_sqr() * d / p)
        .fold(0.0f64, f64::max);
    if worst > 1.0 {
        a.0.unscale_mut(worst.sqrt());
    }
}

/// `P_max,i - |a_i|^2 D_ii` per sensor.
pub fn feasibility_report(a: &GainVector, inst: &LiftedInstance) -> Result<Vec<f64>> {
    if a.len() != inst.n_sensors() {
        return Err(Error::DimensionMismatch {
            expected: inst.n_sensors(),
            found: a.len(),
        });
    }
    Ok(a.0
        .iter()
        .zip(inst.d_blocks.iter())
        .zip(inst.p_max_i.iter())
        .map(|((ai, d), p)| p - ai.norm_sqr() * d)
        .collect())
}

/// `tr(Abar Hbar)` for an arbitrary lifted matrix.
pub fn lifted_objective(inst: &LiftedInstance, a_matrix: &CMatrix) -> f64 {
    trace_inner(a_matrix, &inst.h_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_channel;
    use crate::sumpower::{optimal_value, SumPowerInstance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit() -> (ChannelRealization, SensorNetwork) {
        let net = SensorNetwork::new(vec![1.0], 0.0, vec![1.0], 1.0).unwrap();
        let ch = ChannelRealization::from_core(DVector::from_vec(vec![c(1.0, 0.0)]), &net).unwrap();
        (ch, net)
    }

    pub(crate) fn random_instance(seed: u64, n_range: std::ops::RangeInclusive<usize>) -> LiftedInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(n_range);
        let d = (0..n).map(|_| rng.random_range(2.0..8.0)).collect();
        let s = (0..n).map(|_| rng.random_range(1e-6..0.5)).collect();
        let net = SensorNetwork::new(d, 1.0, s, 0.5).unwrap();
        let ch = sample_channel(&net, &mut rng);
        let p_max = if rng.random_bool(0.5) { 300.0 } else { 3000.0 };
        lift(&ch, &net, 1.0, &vec![p_max / n as f64; n]).unwrap()
    }

    #[test]
    fn lift_example() {
        let (ch, net) = unit();
        let inst = lift(&ch, &net, 1.0, &[2.0]).unwrap();
        assert_eq!(inst.h_bar, real_diag(&[1.0, 0.0]));
        assert_eq!(inst.c_bar, real_diag(&[1.0, 1.0]));
        assert_eq!(inst.d_bar, vec![real_diag(&[2.0, -2.0])]);
    }

    #[test]
    fn lift_rejects_bad_budgets() {
        let (ch, net) = unit();
        assert!(lift(&ch, &net, 1.0, &[0.0]).is_err());
        assert!(lift(&ch, &net, 1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn h_bar_trace_is_channel_energy() {
        let inst = random_instance(4, 2..=6);
        let tr: f64 = (0..=inst.n_sensors()).map(|i| inst.h_bar[(i, i)].re).sum();
        assert!((tr - inst.h.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn homogenized_point_is_lifted_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..50 {
            let inst = random_instance(seed, 1..=6);
            let n = inst.n_sensors();
            let a = GainVector::from_vec(
                (0..n)
                    .map(|i| {
                        let cap = (inst.p_max_i[i] / inst.d_blocks[i]).sqrt();
                        Complex64::from_polar(cap * rng.random_range(0.0..1.0), rng.random_range(-3.0..3.0))
                    })
                    .collect(),
            );
            let abar = inst.homogenize(&a);
            let lifted: CMatrix = &abar * abar.adjoint();
            assert!((trace_inner(&lifted, &inst.c_bar) - 1.0).abs() < 1e-12);
            for d in &inst.d_bar {
                assert!(trace_inner(&lifted, d) <= 1e-12);
            }
            let obj = lifted_objective(&inst, &lifted);
            assert!((obj - inst.snr(&a)).abs() <= 1e-10 * obj.max(1.0));
        }
    }

    #[test]
    fn recovers_exact_rank_one() {
        let abar = DVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]);
        let a_matrix: CMatrix = &abar * abar.adjoint();
        let rec = recover_gain(&a_matrix, &DVector::from_vec(vec![c(1.0, 0.0)])).unwrap();
        assert!((rec.gain.0[0] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn recovery_rejects_rank_two_block() {
        let a_matrix = real_diag(&[1.0, 0.5, 1.0]);
        let h = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            recover_gain(&a_matrix, &h),
            Err(Error::RankRecoveryFailure { lambda1, lambda2 }) if lambda1 == 1.0 && lambda2 == 0.5
        ));
        let a_matrix = real_diag(&[1.0, 0.0]);
        assert!(matches!(
            recover_gain(&a_matrix, &DVector::from_vec(vec![c(1.0, 0.0)])),
            Err(Error::NonPositiveCorner { .. })
        ));
    }

    #[test]
    fn slack_examples() {
        let (ch, net) = unit();
        let inst = lift(&ch, &net, 1.0, &[2.0]).unwrap();
        assert_eq!(feasibility_report(&GainVector::zeros(1), &inst).unwrap(), vec![2.0]);
        let saturating = GainVector::from_vec(vec![c(1.0, 0.0)]);
        assert_eq!(feasibility_report(&saturating, &inst).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_sensor_matches_sum_power() {
        for seed in 0..10 {
            let inst = random_instance(seed, 1..=1);
            let sol = solve_individual(&inst, &SdpSettings::default()).unwrap();
            let slack = feasibility_report(&sol.gain, &inst).unwrap();
            assert!(slack[0].abs() < 1e-6 * inst.p_max_i[0], "slack {slack:?}");
            let sum = SumPowerInstance {
                h: inst.h.clone(),
                hvh: inst.hvh_diag.clone(),
                d_diag: inst.d_blocks.clone(),
                sigma_w2: inst.sigma_w2,
                p_max: inst.p_max_i[0],
            };
            let closed = optimal_value(&sum);
            assert!(((sol.snr - closed) / closed).abs() < 1e-6, "{} vs {closed}", sol.snr);
        }
    }

    #[test]
    fn pipeline_is_tight_and_feasible() {
        for seed in 0..30 {
            let inst = random_instance(seed, 2..=6);
            let sol = solve_individual(&inst, &SdpSettings::default())
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let value = sol.sdp.objective_value;
            assert!(((sol.snr - value) / value).abs() < 1e-5, "seed {seed}");
            let slack = feasibility_report(&sol.gain, &inst).unwrap();
            assert!(slack.iter().all(|s| *s >= -1e-8), "seed {seed}: {slack:?}");
            assert!(sol.recovery.corner > 0.0);
            assert!(sol.gain.response(&inst.h).im.abs() < 1e-12 * sol.gain.response(&inst.h).re);
        }
    }
}
