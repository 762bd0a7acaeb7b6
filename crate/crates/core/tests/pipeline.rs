//! End-to-end checks across the model, solver and harness layers.

use beamtrack::harness::{run, to_csv, ExperimentConfig, CSV_HEADER};
use beamtrack::indivpower::{feasibility_report, lift, solve_individual};
use beamtrack::model::{sample_channel, SensorNetwork};
use beamtrack::outage::equal_power_gain;
use beamtrack::sdp::SdpSettings;
use beamtrack::sumpower::{optimal_gain_sum, snr_objective, snr_upper_bound, SumPowerInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network(rng: &mut ChaCha8Rng, n: usize) -> SensorNetwork {
    let d = (0..n).map(|_| rng.random_range(2.0..8.0)).collect();
    let s = (0..n).map(|_| rng.random_range(1e-3..0.5)).collect();
    SensorNetwork::new(d, 1.0, s, 0.5).unwrap()
}

#[test]
fn constraint_sets_are_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..15 {
        let n = rng.random_range(2..=6);
        let net = network(&mut rng, n);
        let ch = sample_channel(&net, &mut rng);
        let p_max = 300.0;

        let sum_inst = SumPowerInstance::new(&ch, &net, 1.0, p_max).unwrap();
        let sum = snr_objective(&optimal_gain_sum(&sum_inst).gain, &sum_inst);

        let lifted = lift(&ch, &net, 1.0, &vec![p_max / n as f64; n]).unwrap();
        let indiv = solve_individual(&lifted, &SdpSettings::default()).unwrap();
        assert!(feasibility_report(&indiv.gain, &lifted).unwrap().iter().all(|s| *s >= -1e-8));
        let indiv_snr = snr_objective(&indiv.gain, &sum_inst);

        let equal = snr_objective(&equal_power_gain(&net, 1.0, p_max).unwrap(), &sum_inst);

        let upper = snr_upper_bound(&net).unwrap();
        assert!(sum <= upper);
        assert!(indiv_snr <= sum * (1.0 + 1e-9), "{indiv_snr} > {sum}");
        assert!(equal <= indiv_snr * (1.0 + 1e-9), "{equal} > {indiv_snr}");
    }
}

#[test]
fn single_sensor_budgets_coincide() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = network(&mut rng, 1);
    let ch = sample_channel(&net, &mut rng);
    let sum_inst = SumPowerInstance::new(&ch, &net, 1.0, 50.0).unwrap();
    let sum = snr_objective(&optimal_gain_sum(&sum_inst).gain, &sum_inst);
    let indiv = solve_individual(&lift(&ch, &net, 1.0, &[50.0]).unwrap(), &SdpSettings::default()).unwrap();
    assert!((indiv.snr - sum).abs() < 1e-7 * sum);
}

#[test]
fn json_config_drives_a_sweep() {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "mse_vs_sensors", "n_sensors": [2, 3], "p_max": 300, "realizations": 4, "seed": 9}"#,
    )
    .unwrap();
    cfg.validate().unwrap();
    let rows = run(&cfg).unwrap();
    let csv = to_csv(&rows);
    assert!(csv.starts_with(CSV_HEADER));
    for method in ["sum", "individual", "equal", "lower_bound"] {
        assert!(rows.iter().any(|r| r.method == method && r.param == 3.0), "missing {method}");
    }
    assert!(rows.iter().all(|r| r.seed == 9));
    assert_eq!(csv, to_csv(&run(&cfg).unwrap()));
}
