//! End-to-end acceptance checks. Each test prints one summary line; the
//! numbered set covers the headline results the library must reproduce,
//! and the `c11_*` properties exercise module invariants on randomized
//! inputs (256 cases each).

use nvscc_core::charge::{
    count_distribution, empirical_count_distribution, simulate_trace, ChargeInit, RateSet,
};
use nvscc_core::discrimination::{
    sigma_r_conventional, sigma_r_scc, ReadoutErrorPair,
};
use nvscc_core::error::Error;
use nvscc_core::estimation::fit_rates;
use nvscc_core::magnetometry::{
    best_postselection_improvement, optimal_tau, sensitivity, single_shot_uncertainty,
    CoherenceModel, TauGrid,
};
use nvscc_core::scc::{
    histogram_of_final_counts, postselection_scan, simulate_spin_pair, RowStatus, SccScenario,
};

fn assert_close(got: f64, want: f64, tol: f64, label: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{label}: got {got:.9e}, want {want:.9e} (tol {tol:.3e})"
    );
}

#[test]
fn c01_scc_noise_formula() {
    let pair = ReadoutErrorPair { eps0: 0.14, eps1: 0.69 };
    let sigma = sigma_r_scc(&pair).unwrap();
    assert_close(sigma, 4.913, 0.001, "sigma_R_scc(0.14, 0.69)");
    println!("criterion 01: sigma_R_scc(0.14, 0.69) = {sigma:.6} (want 4.913 +- 0.001) PASS");
}

#[test]
fn c02_conventional_noise_formula() {
    let sigma = sigma_r_conventional(0.25, 0.022).unwrap();
    assert_close(sigma, 53.94, 0.01, "sigma_R_conventional(0.25, 0.022)");
    println!("criterion 02: sigma_R_conventional(0.25, 0.022) = {sigma:.6} (want 53.94 +- 0.01) PASS");
}

#[test]
fn c03_calibrated_monte_carlo() {
    let scenario = SccScenario::calibrated();
    let shots = 100_000;
    let (ms0, ms1) = simulate_spin_pair(&scenario, shots, 2026);
    let hist0 = histogram_of_final_counts(&ms0);
    let hist1 = histogram_of_final_counts(&ms1);

    let eps0 = hist0.fraction_above(5);
    let eps1 = 1.0 - hist1.fraction_above(5);
    assert_close(eps0, 0.14, 0.03, "empirical eps0");
    assert_close(eps1, 0.69, 0.03, "empirical eps1");

    let sigma = sigma_r_scc(&ReadoutErrorPair { eps0, eps1 }).unwrap();
    assert!((4.4..=5.4).contains(&sigma), "sigma_R = {sigma} outside [4.4, 5.4]");

    let (mean0, mean1) = (hist0.mean(), hist1.mean());
    assert!((mean0 / 2.4 - 1.0).abs() <= 0.15, "ms0 mean {mean0} beyond 15% of 2.4");
    assert!((mean1 / 3.8 - 1.0).abs() <= 0.15, "ms1 mean {mean1} beyond 15% of 3.8");

    println!(
        "criterion 03: 1e5-shot calibrated run: eps = ({eps0:.4}, {eps1:.4}), sigma_R = {sigma:.3}, \
         means = ({mean0:.3}, {mean1:.3}) PASS"
    );
}

#[test]
fn c04_sensitivity_and_readout_comparison() {
    let model = CoherenceModel::hahn_echo_default();
    let tau = 232e-6;
    let eta_scc = sensitivity(5.0, tau, 30e-6, 40e-6, &model);
    let nt = eta_scc * 1e9;
    assert!((6.0..=14.0).contains(&nt), "eta = {nt} nT/rtHz outside [6, 14]");

    let conv_model = model.with_stretch_exponent(1.33);
    let sigma_conv = sigma_r_conventional(0.25, 0.022).unwrap();
    let eta_conv = sensitivity(sigma_conv, tau, 2e-6, 0.35e-6, &conv_model);
    let ratio = eta_conv / eta_scc;
    assert!((4.0..=12.0).contains(&ratio), "eta ratio {ratio} outside [4, 12]");

    println!(
        "criterion 04: eta_scc(232 us) = {nt:.2} nT/rtHz in [6, 14]; conventional/SCC ratio = \
         {ratio:.2} in [4, 12] PASS"
    );
}

#[test]
fn c05_optimal_tau_analytic_limit() {
    // With p = 1 and no overhead, d eta / d tau = 0 solves to tau = T2 / 2.
    let model = CoherenceModel::hahn_echo_default().with_stretch_exponent(1.0);
    let grid = TauGrid { tau_min: 1e-6, tau_max: 500e-6, tau_step: 0.25e-6 };
    let best = optimal_tau(2.4, 0.0, 0.0, &model, false, &grid).unwrap();
    let analytic = model.t2 / 2.0;
    assert_close(best.tau, analytic, grid.tau_step + 1e-12, "optimal tau");
    println!(
        "criterion 05: optimal tau = {:.2} us vs analytic T2/2 = {:.2} us (step {:.2} us) PASS",
        best.tau * 1e6,
        analytic * 1e6,
        grid.tau_step * 1e6
    );
}

#[test]
fn c06_single_shot_uncertainty() {
    let model = CoherenceModel::hahn_echo_default();
    let delta_b = single_shot_uncertainty(2.4, 232e-6, &model);
    let nt = delta_b * 1e9;
    assert_close(nt, 307.0, 29.0, "single-shot delta B (nT)");
    println!("criterion 06: delta B = {nt:.1} nT (want 307 +- 29) PASS");
}

#[test]
fn c07_master_equation_vs_trajectories() {
    let rates = RateSet::shallow_nv_280uw();
    let exact = count_distribution(&rates, 10e-3, ChargeInit::Stationary, None).unwrap();
    let sampled =
        empirical_count_distribution(&rates, 10e-3, ChargeInit::Stationary, 1_000_000, 7171)
            .unwrap();
    let tv = exact.total_variation(&sampled);
    assert!(tv < 0.005, "TV distance {tv} not below 0.005");
    println!("criterion 07: TV(master equation, 1e6 trajectories) = {tv:.5} < 0.005 PASS");
}

#[test]
fn c08_rate_fit_round_trip() {
    let truth = RateSet::shallow_nv_280uw();
    let trace = simulate_trace(&truth, 60.0, 10e-3, ChargeInit::Stationary, 22).unwrap();
    let guess = RateSet::new(1000.0, 300.0, 30.0, 10.0).unwrap();
    let fit = fit_rates(&trace, &guess).unwrap();
    let est = fit.estimate;
    let checks = [
        ("gamma_minus", est.gamma_minus, truth.gamma_minus),
        ("gamma_zero", est.gamma_zero, truth.gamma_zero),
        ("g_ion", est.g_ion, truth.g_ion),
        ("g_rec", est.g_rec, truth.g_rec),
    ];
    for (name, got, want) in checks {
        let rel = (got / want - 1.0).abs();
        assert!(rel <= 0.20, "{name}: fitted {got:.1} vs true {want}, off by {:.1}%", rel * 100.0);
    }
    println!(
        "criterion 08: 60 s round trip -> ({:.0}, {:.0}, {:.1}, {:.1}) Hz vs (1300, 200, 45, 6), \
         all within 20% PASS",
        est.gamma_minus, est.gamma_zero, est.g_ion, est.g_rec
    );
}

#[test]
fn c09_postselection_scan() {
    let scenario = SccScenario::calibrated_with_first_readout();
    let rows = postselection_scan(&scenario, 5, -1..=6, 100_000, 31415).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.status == RowStatus::Ok));

    // Noise factor never rises as the acceptance bar tightens.
    for pair in rows.windows(2) {
        let (a, b) = (pair[0].sigma_r.unwrap(), pair[1].sigma_r.unwrap());
        assert!(
            b <= a + 1e-12,
            "sigma_R rose from {a} to {b} at threshold {}",
            pair[1].threshold_first
        );
    }

    // Post-selection sharpens the class separation.
    let ks_baseline = rows[0].ks.unwrap();
    for row in &rows[1..] {
        assert!(
            row.ks.unwrap() > ks_baseline,
            "KS {} at threshold {} not above baseline {ks_baseline}",
            row.ks.unwrap(),
            row.threshold_first
        );
    }

    // Wall-clock accounting is exact.
    let t_sequence = scenario.sequence_time();
    for row in rows.iter() {
        assert_close(
            row.t_effective * row.acceptance,
            t_sequence,
            1e-12,
            "t_effective * acceptance",
        );
    }

    let (best_threshold, best) = best_postselection_improvement(&rows).unwrap();
    assert!(
        (0.02..=0.10).contains(&best),
        "best improvement {best} at threshold {best_threshold} outside [2%, 10%]"
    );

    println!(
        "criterion 09: sigma_R {:.3} -> {:.3} non-increasing, KS {:.3} -> {:.3} above baseline, \
         best improvement {:.1}% at threshold {best_threshold} PASS",
        rows[0].sigma_r.unwrap(),
        rows[7].sigma_r.unwrap(),
        ks_baseline,
        rows[7].ks.unwrap(),
        best * 100.0
    );
}

#[test]
fn c10_first_readout_degradation() {
    let plain = SccScenario::calibrated();
    let with_first = SccScenario::calibrated_with_first_readout();
    let sigma_plain =
        sigma_r_scc(&nvscc_core::scc::semi_analytic_errors(&plain, 5).unwrap()).unwrap();
    let sigma_first =
        sigma_r_scc(&nvscc_core::scc::semi_analytic_errors(&with_first, 5).unwrap()).unwrap();
    assert!(sigma_first > sigma_plain, "verification window should cost noise");
    assert!(
        (6.0..=10.0).contains(&sigma_first),
        "sigma_R with first readout = {sigma_first} outside [6, 10]"
    );
    println!(
        "criterion 10: sigma_R {sigma_plain:.3} -> {sigma_first:.3} with a 10 ms verification \
         window, inside [6, 10] PASS"
    );
}

mod c11_properties {
    use super::*;
    use nvscc_core::charge::CountDistribution;
    use nvscc_core::discrimination::{optimal_threshold, spin_errors_from_distributions};
    use nvscc_core::magnetometry::echo_signal;
    use nvscc_core::parallel::{tally_shots, tally_shots_serial};
    use nvscc_core::scc::{simulate_scc_ensemble, SpinPrep};
    use nvscc_core::seed::shot_rng;
    use proptest::prelude::*;

    fn rate_set_strategy() -> impl Strategy<Value = RateSet> {
        (10.0..2500.0f64, 0.0..0.8f64, 0.0..300.0f64, 0.0..300.0f64).prop_map(
            |(gamma_minus, zero_frac, g_ion, g_rec)| RateSet {
                gamma_minus,
                gamma_zero: zero_frac * gamma_minus,
                g_ion,
                g_rec,
                power_tag_uw: None,
            },
        )
    }

    fn distribution_strategy() -> impl Strategy<Value = CountDistribution> {
        proptest::collection::vec(0.0..1.0f64, 2..20)
            .prop_filter("needs mass", |w| w.iter().sum::<f64>() > 0.05)
            .prop_map(|weights| {
                let total: f64 = weights.iter().sum();
                let probs = weights.into_iter().map(|w| w / total).collect();
                CountDistribution::from_probs(probs, 1.0).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn c11_count_distributions_are_normalized(
            rates in rate_set_strategy(),
            window in 1e-5..4e-3f64,
        ) {
            let dist = count_distribution(&rates, window, ChargeInit::Fixed(nvscc_core::charge::ChargeLabel::NvMinus), None).unwrap();
            let sum: f64 = dist.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6, "sum = {sum}");
            prop_assert!(dist.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn c11_sigma_r_is_symmetric_and_monotone(
            eps0 in 0.0..0.6f64,
            eps1 in 0.0..0.39f64,
            bump in 1e-6..0.01f64,
        ) {
            let base = ReadoutErrorPair { eps0, eps1 };
            let swapped = ReadoutErrorPair { eps0: eps1, eps1: eps0 };
            prop_assert_eq!(sigma_r_scc(&base).unwrap(), sigma_r_scc(&swapped).unwrap());

            let worse = ReadoutErrorPair { eps0: eps0 + bump, eps1 };
            prop_assert!(sigma_r_scc(&worse).unwrap() >= sigma_r_scc(&base).unwrap());
        }

        #[test]
        fn c11_echo_fringe_is_antisymmetric(
            b in -1e-5..1e-5f64,
            tau in 1e-6..1e-3f64,
        ) {
            let model = CoherenceModel::hahn_echo_default();
            let half_period = std::f64::consts::PI / (model.alpha * tau);
            let sum = echo_signal(b, tau, &model).p0 + echo_signal(b + half_period, tau, &model).p0;
            prop_assert!((sum - 1.0).abs() < 1e-9, "p0 pair sums to {sum}");
        }

        #[test]
        fn c11_ensembles_are_seed_deterministic(
            master_seed in any::<u64>(),
            shots in 1u64..200,
        ) {
            let scenario = SccScenario::calibrated();
            let a = simulate_scc_ensemble(SpinPrep::Superposition(0.5), &scenario, shots, master_seed);
            let b = simulate_scc_ensemble(SpinPrep::Superposition(0.5), &scenario, shots, master_seed);
            prop_assert_eq!(a, b);

            let rates = RateSet::calibrated_readout();
            let window = move |index: u64| {
                let mut rng = shot_rng(master_seed, index);
                nvscc_core::charge::sample_window(&rates, 1e-3, nvscc_core::charge::ChargeLabel::NvMinus, &mut rng).0
            };
            prop_assert_eq!(tally_shots(shots, window), tally_shots_serial(shots, window));
        }

        #[test]
        fn c11_optimal_threshold_matches_exhaustive_scan(
            d0 in distribution_strategy(),
            d1 in distribution_strategy(),
        ) {
            let range = -1..=20i64;
            let fast = optimal_threshold(&d0, &d1, range.clone());

            let mut brute: Option<(i64, f64)> = None;
            for theta in range {
                let pair = spin_errors_from_distributions(&d0, &d1, theta);
                if let Ok(sigma) = sigma_r_scc(&pair) {
                    if brute.map_or(true, |(_, best)| sigma < best) {
                        brute = Some((theta, sigma));
                    }
                }
            }
            match (fast, brute) {
                (Ok(got), Some(want)) => prop_assert_eq!(got, want),
                (Err(Error::AllThresholdsDivergent), None) => {}
                (got, want) => prop_assert!(false, "mismatch: {got:?} vs {want:?}"),
            }
        }
    }
}
