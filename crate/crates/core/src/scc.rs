//! The spin-to-charge-conversion readout sequence, shot by shot.
//!
//! One shot: initialize (spin pumped, charge NV- with probability
//! `p_init_minus`), optionally verify the charge in a first readout window,
//! run the sensing echo of length `tau` in the dark (charge frozen), then
//! fire the conversion pulses. Conversion ionizes NV- with a probability
//! that depends on the spin through the singlet shelf: ms = 1 shelves with
//! probability `p_shelf` and the shelf protects against ionization, so
//! ms = 1 survives as NV- far more often than ms = 0. A final readout
//! window counts photons; thresholding the count reads the spin.
//!
//! Spin-dependent survival of NV- at the conversion step:
//!
//! * ms = 0: 1 - p_ion_triplet
//! * ms = 1: p_shelf (1 - p_ion_singlet) + (1 - p_shelf)(1 - p_ion_triplet)
//!
//! Monte Carlo shots and the semi-analytic ladder pipeline share every
//! parameter, so each can check the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::charge::{
    count_distribution, evolve_populations, sample_window, ChargeInit, ChargeLabel,
    CountDistribution, RateSet,
};
use crate::discrimination::{
    ks_statistic, sigma_r_scc, spin_errors_from_distributions, PhotonHistogram, ReadoutErrorPair,
};
use crate::error::{Error, Result};
use crate::parallel;
use crate::seed::shot_seed;

/// Conversion-step parameters. Probabilities are per conversion attempt;
/// `t_shelf` and `t_ion` are the (short, dark) pulse durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccParams {
    pub p_init_minus: f64,
    pub p_shelf: f64,
    pub p_ion_triplet: f64,
    pub p_ion_singlet: f64,
    pub t_shelf: f64,
    pub t_ion: f64,
}

impl SccParams {
    /// Parameters reproducing the measured single-shot error pair of the
    /// calibrated readout (see [`RateSet::calibrated_readout`]).
    pub fn calibrated() -> Self {
        SccParams {
            p_init_minus: 0.70,
            p_shelf: 0.45,
            p_ion_triplet: 0.85,
            p_ion_singlet: 0.0,
            t_shelf: 50e-9,
            t_ion: 10e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_init_minus", self.p_init_minus),
            ("p_shelf", self.p_shelf),
            ("p_ion_triplet", self.p_ion_triplet),
            ("p_ion_singlet", self.p_ion_singlet),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {value}")));
            }
        }
        for (name, value) in [("t_shelf", self.t_shelf), ("t_ion", self.t_ion)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Wall-clock segments of one shot. `t_ro_first = 0` means no verification
/// window. `t_overhead` covers pulse bookkeeping not modeled elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolTimings {
    pub t_init: f64,
    pub tau: f64,
    pub t_ro: f64,
    pub t_ro_first: f64,
    pub t_overhead: f64,
}

impl ProtocolTimings {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("t_init", self.t_init),
            ("tau", self.tau),
            ("t_ro_first", self.t_ro_first),
            ("t_overhead", self.t_overhead),
        ];
        for (name, value) in named {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        if !(self.t_ro > 0.0) {
            return Err(Error::invalid("t_ro", format!("must be > 0, got {}", self.t_ro)));
        }
        Ok(())
    }
}

/// Full scenario: one rate set, one conversion parameter set, one timing set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccScenario {
    pub rates: RateSet,
    pub params: SccParams,
    pub timings: ProtocolTimings,
}

impl SccScenario {
    pub fn new(rates: RateSet, params: SccParams, timings: ProtocolTimings) -> Result<Self> {
        params.validate()?;
        timings.validate()?;
        Ok(SccScenario { rates, params, timings })
    }

    /// Reference configuration: calibrated rates and conversion tree,
    /// 10 ms readout, 232 us echo, no verification window.
    pub fn calibrated() -> Self {
        SccScenario {
            rates: RateSet::calibrated_readout(),
            params: SccParams::calibrated(),
            timings: ProtocolTimings {
                t_init: 30e-6,
                tau: 232e-6,
                t_ro: 10e-3,
                t_ro_first: 0.0,
                t_overhead: 0.0,
            },
        }
    }

    /// Same, with a 10 ms charge verification window before the echo.
    pub fn calibrated_with_first_readout() -> Self {
        let mut scenario = Self::calibrated();
        scenario.timings.t_ro_first = 10e-3;
        scenario
    }

    /// Wall-clock duration of one shot, verification window included.
    pub fn sequence_time(&self) -> f64 {
        self.timings.t_init
            + self.timings.t_ro_first
            + self.timings.tau
            + self.params.t_shelf
            + self.params.t_ion
            + self.timings.t_ro
            + self.timings.t_overhead
    }
}

/// Spin state entering the conversion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinPrep {
    Ms0,
    Ms1,
    /// Projects to ms = 0 with the contained probability.
    Superposition(f64),
}

impl SpinPrep {
    pub fn validate(&self) -> Result<()> {
        if let SpinPrep::Superposition(p0) = self {
            if !(0.0..=1.0).contains(p0) || !p0.is_finite() {
                return Err(Error::invalid("p0", format!("must lie in [0, 1], got {p0}")));
            }
        }
        Ok(())
    }
}

/// Everything one shot produced. `accepted` stays `None` until a
/// post-selection rule has been applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub spin_prepared: SpinPrep,
    pub n_first: Option<u32>,
    pub n_final: u32,
    /// Charge state entering the final readout window, i.e. the conversion
    /// outcome. Classification of `n_final` is a separate step.
    pub charge_converted: ChargeLabel,
    pub accepted: Option<bool>,
}

/// NV- survival probability of the conversion step, given the charge was
/// NV- beforehand, as (ms = 0, ms = 1).
fn survival_given_minus(params: &SccParams) -> (f64, f64) {
    let s0 = 1.0 - params.p_ion_triplet;
    let s1 = params.p_shelf * (1.0 - params.p_ion_singlet)
        + (1.0 - params.p_shelf) * (1.0 - params.p_ion_triplet);
    (s0, s1)
}

/// P(NV- at final readout) per spin class, init and conversion combined:
/// (ms = 0, ms = 1). Ignores any verification window.
pub fn conversion_probabilities(params: &SccParams) -> (f64, f64) {
    let (s0, s1) = survival_given_minus(params);
    (params.p_init_minus * s0, params.p_init_minus * s1)
}

/// Simulate one complete shot. Draw order is fixed: charge init, first
/// window (if any), spin projection (superpositions only), conversion
/// branch (only when the charge is NV-), final window.
pub fn simulate_scc_shot(
    spin: SpinPrep,
    params: &SccParams,
    timings: &ProtocolTimings,
    rates: &RateSet,
    seed: u64,
) -> ShotRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut charge = if rng.gen_bool(params.p_init_minus) {
        ChargeLabel::NvMinus
    } else {
        ChargeLabel::NvZero
    };

    let n_first = if timings.t_ro_first > 0.0 {
        let (n, end_state) = sample_window(rates, timings.t_ro_first, charge, &mut rng);
        charge = end_state;
        Some(n)
    } else {
        None
    };

    // Echo runs in the dark: charge frozen until the conversion pulses.
    let ms1 = match spin {
        SpinPrep::Ms0 => false,
        SpinPrep::Ms1 => true,
        SpinPrep::Superposition(p0) => !rng.gen_bool(p0),
    };

    if charge == ChargeLabel::NvMinus {
        let (s0, s1) = survival_given_minus(params);
        let survive = if ms1 { s1 } else { s0 };
        if !rng.gen_bool(survive) {
            charge = ChargeLabel::NvZero;
        }
    }

    let (n_final, _) = sample_window(rates, timings.t_ro, charge, &mut rng);

    ShotRecord {
        spin_prepared: spin,
        n_first,
        n_final,
        charge_converted: charge,
        accepted: None,
    }
}

/// Independent shots with per-index derived seeds; reproducible for a fixed
/// `(master_seed, shots)` at any thread count.
pub fn simulate_scc_ensemble(
    spin: SpinPrep,
    scenario: &SccScenario,
    shots: u64,
    master_seed: u64,
) -> Vec<ShotRecord> {
    let scenario = *scenario;
    parallel::run_shots(shots, move |index| {
        simulate_scc_shot(
            spin,
            &scenario.params,
            &scenario.timings,
            &scenario.rates,
            shot_seed(master_seed, index),
        )
    })
}

/// Paired ms = 0 / ms = 1 ensembles from one master seed (interleaved shot
/// indices, so the two classes never share a stream).
pub fn simulate_spin_pair(
    scenario: &SccScenario,
    shots_per_class: u64,
    master_seed: u64,
) -> (Vec<ShotRecord>, Vec<ShotRecord>) {
    let scenario = *scenario;
    let ms0 = parallel::run_shots(shots_per_class, |index| {
        simulate_scc_shot(
            SpinPrep::Ms0,
            &scenario.params,
            &scenario.timings,
            &scenario.rates,
            shot_seed(master_seed, 2 * index),
        )
    });
    let ms1 = parallel::run_shots(shots_per_class, |index| {
        simulate_scc_shot(
            SpinPrep::Ms1,
            &scenario.params,
            &scenario.timings,
            &scenario.rates,
            shot_seed(master_seed, 2 * index + 1),
        )
    });
    (ms0, ms1)
}

pub fn histogram_of_final_counts(records: &[ShotRecord]) -> PhotonHistogram {
    let mut hist = PhotonHistogram::new();
    for record in records {
        hist.record(record.n_final);
    }
    hist
}

/// Exact per-spin-class count laws for the final window, by mixing the two
/// pure-state ladder solutions with the conversion probabilities. The
/// verification window only enters through charge relaxation of the init
/// population (its counts are marginalized out).
pub fn spin_class_distributions(
    scenario: &SccScenario,
) -> Result<(CountDistribution, CountDistribution)> {
    let p_minus_at_scc = evolve_populations(
        &scenario.rates,
        scenario.timings.t_ro_first,
        scenario.params.p_init_minus,
    );
    let (s0, s1) = survival_given_minus(&scenario.params);
    let dist_minus = count_distribution(
        &scenario.rates,
        scenario.timings.t_ro,
        ChargeInit::Fixed(ChargeLabel::NvMinus),
        None,
    )?;
    let dist_zero = count_distribution(
        &scenario.rates,
        scenario.timings.t_ro,
        ChargeInit::Fixed(ChargeLabel::NvZero),
        None,
    )?;
    let mix = |p_minus: f64| -> Result<CountDistribution> {
        let len = dist_minus.probs().len().max(dist_zero.probs().len());
        let probs = (0..len)
            .map(|n| p_minus * dist_minus.prob(n) + (1.0 - p_minus) * dist_zero.prob(n))
            .collect();
        CountDistribution::from_probs(probs, scenario.timings.t_ro)
    };
    Ok((mix(p_minus_at_scc * s0)?, mix(p_minus_at_scc * s1)?))
}

/// Threshold error pair implied by the exact spin-class laws.
pub fn semi_analytic_errors(scenario: &SccScenario, threshold: i64) -> Result<ReadoutErrorPair> {
    let (dist0, dist1) = spin_class_distributions(scenario)?;
    Ok(spin_errors_from_distributions(&dist0, &dist1, threshold))
}

/// Error pair when a verification window of `t_ro_first` precedes the echo.
/// The window costs init fidelity (the charge relaxes toward its stationary
/// mix under illumination) but enables post-selection on its count.
pub fn first_readout_degradation(
    timings: &ProtocolTimings,
    rates: &RateSet,
    params: &SccParams,
    threshold: i64,
) -> Result<ReadoutErrorPair> {
    let scenario = SccScenario::new(*rates, *params, *timings)?;
    semi_analytic_errors(&scenario, threshold)
}

/// Conventional fluorescence readout: visibility `v`, `n_bar` photons per
/// shot from ms = 0, Poisson statistics. ms = 1 emits `n_bar (1 - v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionalReadoutModel {
    pub v: f64,
    pub n_bar: f64,
    pub window: f64,
}

impl ConventionalReadoutModel {
    pub fn new(v: f64, n_bar: f64, window: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::invalid("v", format!("must lie in [0, 1], got {v}")));
        }
        if !(n_bar > 0.0) {
            return Err(Error::invalid("n_bar", format!("must be > 0, got {n_bar}")));
        }
        if !(window > 0.0) {
            return Err(Error::invalid("window", format!("must be > 0, got {window}")));
        }
        Ok(ConventionalReadoutModel { v, n_bar, window })
    }

    /// Single-NV confocal numbers: 25% visibility, 0.022 photons per shot
    /// in a 350 ns window.
    pub fn calibrated() -> Self {
        ConventionalReadoutModel {
            v: 0.25,
            n_bar: 0.022,
            window: 0.35e-6,
        }
    }

    fn mean_for(&self, ms1: bool) -> f64 {
        if ms1 {
            self.n_bar * (1.0 - self.v)
        } else {
            self.n_bar
        }
    }
}

pub fn simulate_conventional_shot(spin: SpinPrep, model: &ConventionalReadoutModel, seed: u64) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms1 = match spin {
        SpinPrep::Ms0 => false,
        SpinPrep::Ms1 => true,
        SpinPrep::Superposition(p0) => !rng.gen_bool(p0),
    };
    let mean = model.mean_for(ms1);
    if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(&mut rng) as u32
    } else {
        0
    }
}

pub fn simulate_conventional_ensemble(
    spin: SpinPrep,
    model: &ConventionalReadoutModel,
    shots: u64,
    master_seed: u64,
) -> PhotonHistogram {
    let model = *model;
    let tally = parallel::tally_shots(shots, move |index| {
        simulate_conventional_shot(spin, &model, shot_seed(master_seed, index))
    });
    PhotonHistogram::from_tally(&tally)
}

/// Empirical noise factor of a conventional readout from its two class
/// histograms: twice the ms = 0 shot noise over the mean separation. For
/// Poisson classes this estimates 2 / (v sqrt(n_bar)).
pub fn empirical_sigma_r_conventional(
    hist_ms0: &PhotonHistogram,
    hist_ms1: &PhotonHistogram,
) -> f64 {
    let separation = (hist_ms0.mean() - hist_ms1.mean()).abs();
    2.0 * hist_ms0.variance().sqrt() / separation
}

/// Keep shots whose first-window count exceeds `threshold_first`. Returns
/// the kept records (flagged accepted) and the acceptance fraction.
pub fn postselect(records: &[ShotRecord], threshold_first: i64) -> Result<(Vec<ShotRecord>, f64)> {
    if records.is_empty() {
        return Err(Error::invalid("records", "must be nonempty"));
    }
    let mut kept = Vec::new();
    for record in records {
        let n_first = record.n_first.ok_or_else(|| {
            Error::invalid("records", "shot lacks a first-window count; was t_ro_first zero?")
        })?;
        if n_first as i64 > threshold_first {
            let mut accepted = *record;
            accepted.accepted = Some(true);
            kept.push(accepted);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptySelection { threshold: threshold_first });
    }
    let acceptance = kept.len() as f64 / records.len() as f64;
    Ok((kept, acceptance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// Error rates summed to one or more: no finite noise factor.
    Divergent,
    /// A spin class lost every shot at this threshold.
    EmptySelection,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Divergent => "divergent",
            RowStatus::EmptySelection => "empty_selection",
        }
    }
}

/// One row of a post-selection threshold scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostselectRow {
    pub threshold_first: i64,
    pub errors: Option<ReadoutErrorPair>,
    pub sigma_r: Option<f64>,
    /// Pooled over both spin classes; the first window is spin-independent.
    pub acceptance: f64,
    /// Wall-clock time per accepted shot: sequence time / acceptance.
    pub t_effective: f64,
    pub ks: Option<f64>,
    pub status: RowStatus,
}

/// Scan first-window thresholds over one simulated shot ensemble pair.
/// `threshold_final` stays fixed; each row reports the error pair, noise
/// factor, acceptance, and effective shot time after discarding shots at or
/// below the first-window threshold.
pub fn postselection_scan(
    scenario: &SccScenario,
    threshold_final: i64,
    thresholds_first: std::ops::RangeInclusive<i64>,
    shots_per_class: u64,
    master_seed: u64,
) -> Result<Vec<PostselectRow>> {
    if !(scenario.timings.t_ro_first > 0.0) {
        return Err(Error::invalid(
            "t_ro_first",
            "post-selection needs a first readout window (t_ro_first > 0)",
        ));
    }
    if shots_per_class == 0 {
        return Err(Error::invalid("shots_per_class", "must be > 0"));
    }
    let (ms0, ms1) = simulate_spin_pair(scenario, shots_per_class, master_seed);
    let t_sequence = scenario.sequence_time();
    let total_shots = 2 * shots_per_class;

    let mut rows = Vec::new();
    for threshold_first in thresholds_first {
        let keep = |records: &[ShotRecord]| -> PhotonHistogram {
            let mut hist = PhotonHistogram::new();
            for record in records {
                let n_first = record.n_first.expect("t_ro_first > 0 guarantees a count");
                if n_first as i64 > threshold_first {
                    hist.record(record.n_final);
                }
            }
            hist
        };
        let hist0 = keep(&ms0);
        let hist1 = keep(&ms1);
        let kept = hist0.total_shots() + hist1.total_shots();
        let acceptance = kept as f64 / total_shots as f64;
        let t_effective = if acceptance > 0.0 {
            t_sequence / acceptance
        } else {
            f64::INFINITY
        };

        if hist0.total_shots() == 0 || hist1.total_shots() == 0 {
            rows.push(PostselectRow {
                threshold_first,
                errors: None,
                sigma_r: None,
                acceptance,
                t_effective,
                ks: None,
                status: RowStatus::EmptySelection,
            });
            continue;
        }

        let dist0 = hist0.to_distribution(scenario.timings.t_ro)?;
        let dist1 = hist1.to_distribution(scenario.timings.t_ro)?;
        let errors = spin_errors_from_distributions(&dist0, &dist1, threshold_final);
        let ks = ks_statistic(&dist0, &dist1);
        let (sigma_r, status) = match sigma_r_scc(&errors) {
            Ok(sigma) => (Some(sigma), RowStatus::Ok),
            Err(Error::Divergent { .. }) => (None, RowStatus::Divergent),
            Err(other) => return Err(other),
        };
        rows.push(PostselectRow {
            threshold_first,
            errors: Some(errors),
            sigma_r,
            acceptance,
            t_effective,
            ks: Some(ks),
            status,
        });
    }
    Ok(rows)
}

/// Sensitivity improvement of each row over the unselected baseline
/// (the row at threshold -1): 1 - eta(row) / eta(baseline). Coherence and
/// prefactors cancel in the ratio, leaving sigma_R and acceptance.
pub fn postselection_improvements(rows: &[PostselectRow]) -> Result<Vec<(i64, f64)>> {
    let baseline = rows
        .iter()
        .find(|row| row.threshold_first == -1)
        .and_then(|row| row.sigma_r.map(|sigma| (sigma, row.acceptance)))
        .ok_or_else(|| {
            Error::invalid("rows", "need a finite baseline row at threshold_first = -1")
        })?;
    let (sigma_base, acc_base) = baseline;
    Ok(rows
        .iter()
        .filter(|row| row.threshold_first != -1)
        .filter_map(|row| {
            row.sigma_r.map(|sigma| {
                let ratio = (sigma / sigma_base) * (acc_base / row.acceptance).sqrt();
                (row.threshold_first, 1.0 - ratio)
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrimination::optimal_threshold;

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!(
            (got - want).abs() <= tol,
            "got {got:.12e}, want {want:.12e} (tol {tol:.1e})"
        );
    }

    #[test]
    fn conversion_probabilities_match_the_tree() {
        let ideal = SccParams {
            p_init_minus: 1.0,
            p_shelf: 1.0,
            p_ion_triplet: 1.0,
            p_ion_singlet: 0.0,
            t_shelf: 0.0,
            t_ion: 0.0,
        };
        assert_eq!(conversion_probabilities(&ideal), (0.0, 1.0));

        let no_shelf = SccParams { p_shelf: 0.0, ..SccParams::calibrated() };
        let (p0, p1) = conversion_probabilities(&no_shelf);
        assert_close(p0, p1, 1e-15);

        let (p0, p1) = conversion_probabilities(&SccParams::calibrated());
        assert_close(p0, 0.105, 1e-12);
        assert_close(p1, 0.37275, 1e-12);
    }

    #[test]
    fn shot_is_reproducible() {
        let scenario = SccScenario::calibrated_with_first_readout();
        let a = simulate_scc_shot(
            SpinPrep::Superposition(0.5),
            &scenario.params,
            &scenario.timings,
            &scenario.rates,
            77,
        );
        let b = simulate_scc_shot(
            SpinPrep::Superposition(0.5),
            &scenario.params,
            &scenario.timings,
            &scenario.rates,
            77,
        );
        assert_eq!(a, b);
        assert!(a.n_first.is_some());
    }

    #[test]
    fn no_ionization_means_no_spin_contrast() {
        let mut scenario = SccScenario::calibrated();
        scenario.params.p_init_minus = 1.0;
        scenario.params.p_ion_triplet = 0.0;
        scenario.params.p_ion_singlet = 0.0;
        let (ms0, ms1) = simulate_spin_pair(&scenario, 100_000, 31);
        for record in ms0.iter().chain(&ms1) {
            assert_eq!(record.charge_converted, ChargeLabel::NvMinus);
        }
        let d0 = histogram_of_final_counts(&ms0)
            .to_distribution(scenario.timings.t_ro)
            .unwrap();
        let d1 = histogram_of_final_counts(&ms1)
            .to_distribution(scenario.timings.t_ro)
            .unwrap();
        assert!(d0.total_variation(&d1) < 0.01);
    }

    #[test]
    fn class_laws_match_reference_solution() {
        let scenario = SccScenario::calibrated();
        let (dist0, dist1) = spin_class_distributions(&scenario).unwrap();
        assert_close(dist0.mean(), 2.626788089, 1e-6);
        assert_close(dist1.mean(), 4.064654161, 1e-6);

        let errors = semi_analytic_errors(&scenario, 5).unwrap();
        assert_close(errors.eps0, 0.138770110, 1e-7);
        assert_close(errors.eps1, 0.695479810, 1e-7);
        assert_close(sigma_r_scc(&errors).unwrap(), 5.011805214, 1e-6);

        let (theta, sigma) = optimal_threshold(&dist0, &dist1, 0..=9).unwrap();
        assert_eq!(theta, 4);
        assert!(sigma <= 5.011805214 + 1e-9);
    }

    #[test]
    fn monte_carlo_errors_track_the_class_laws() {
        let scenario = SccScenario::calibrated();
        let exact = semi_analytic_errors(&scenario, 5).unwrap();
        let (ms0, ms1) = simulate_spin_pair(&scenario, 20_000, 4242);
        let eps0 = histogram_of_final_counts(&ms0).fraction_above(5);
        let eps1 = 1.0 - histogram_of_final_counts(&ms1).fraction_above(5);
        // 4 binomial standard errors at 2e4 shots.
        assert_close(eps0, exact.eps0, 0.010);
        assert_close(eps1, exact.eps1, 0.013);
    }

    #[test]
    fn verification_window_costs_init_fidelity() {
        let scenario = SccScenario::calibrated();
        let baseline = first_readout_degradation(
            &scenario.timings,
            &scenario.rates,
            &scenario.params,
            5,
        )
        .unwrap();
        let plain = semi_analytic_errors(&scenario, 5).unwrap();
        assert_eq!(baseline, plain);

        let with_first = SccScenario::calibrated_with_first_readout();
        let degraded = first_readout_degradation(
            &with_first.timings,
            &with_first.rates,
            &with_first.params,
            5,
        )
        .unwrap();
        assert_close(sigma_r_scc(&degraded).unwrap(), 6.589079585, 1e-6);

        // Fully thermalized init is strictly worse again.
        let mut thermal = with_first;
        thermal.timings.t_ro_first = 1000.0 / (thermal.rates.g_ion + thermal.rates.g_rec);
        let worst = semi_analytic_errors(&thermal, 5).unwrap();
        assert_close(sigma_r_scc(&worst).unwrap(), 9.756187143, 1e-6);
    }

    #[test]
    fn sequence_time_adds_every_segment() {
        let scenario = SccScenario::calibrated_with_first_readout();
        assert_close(scenario.sequence_time(), 0.02026206, 1e-12);
    }

    #[test]
    fn conventional_readout_matches_its_model() {
        let model = ConventionalReadoutModel::calibrated();
        let shots = 10_000_000;
        let h0 = simulate_conventional_ensemble(SpinPrep::Ms0, &model, shots, 900);
        let h1 = simulate_conventional_ensemble(SpinPrep::Ms1, &model, shots, 901);
        let se = (model.n_bar / shots as f64).sqrt();
        assert_close(h0.mean(), 0.022, 3.0 * se);
        assert_close(h1.mean(), 0.0165, 3.0 * se);
        // Empirical noise factor should land on 2 / (v sqrt(n_bar)).
        let sigma = empirical_sigma_r_conventional(&h0, &h1);
        assert_close(sigma, 53.935988997, 2.0);
    }

    #[test]
    fn zero_visibility_erases_the_classes() {
        let model = ConventionalReadoutModel::new(0.0, 0.5, 1e-6).unwrap();
        let h0 = simulate_conventional_ensemble(SpinPrep::Ms0, &model, 100_000, 1);
        let h1 = simulate_conventional_ensemble(SpinPrep::Ms1, &model, 100_000, 2);
        let d0 = h0.to_distribution(model.window).unwrap();
        let d1 = h1.to_distribution(model.window).unwrap();
        assert!(d0.total_variation(&d1) < 0.01);
    }

    #[test]
    fn postselect_keeps_everything_below_any_count() {
        let scenario = SccScenario::calibrated_with_first_readout();
        let records = simulate_scc_ensemble(SpinPrep::Ms0, &scenario, 2_000, 9);
        let (kept, acceptance) = postselect(&records, -1).unwrap();
        assert_eq!(kept.len(), records.len());
        assert_eq!(acceptance, 1.0);
        assert!(kept.iter().all(|r| r.accepted == Some(true)));
    }

    #[test]
    fn postselect_rejects_records_without_first_window() {
        let scenario = SccScenario::calibrated();
        let records = simulate_scc_ensemble(SpinPrep::Ms0, &scenario, 100, 9);
        assert!(matches!(
            postselect(&records, 0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn postselect_can_empty_the_ensemble() {
        let scenario = SccScenario::calibrated_with_first_readout();
        let records = simulate_scc_ensemble(SpinPrep::Ms0, &scenario, 200, 9);
        let too_high = 10_000;
        assert_eq!(
            postselect(&records, too_high),
            Err(Error::EmptySelection { threshold: too_high })
        );
    }

    #[test]
    fn scan_baseline_row_is_the_unselected_ensemble() {
        let scenario = SccScenario::calibrated_with_first_readout();
        let rows = postselection_scan(&scenario, 5, -1..=2, 20_000, 88).unwrap();
        let baseline = &rows[0];
        assert_eq!(baseline.threshold_first, -1);
        assert_eq!(baseline.acceptance, 1.0);
        assert_eq!(baseline.status, RowStatus::Ok);
        assert_close(baseline.t_effective, scenario.sequence_time(), 1e-15);

        // Recompute the baseline pair directly from an identical ensemble.
        let (ms0, ms1) = simulate_spin_pair(&scenario, 20_000, 88);
        let eps0 = histogram_of_final_counts(&ms0).fraction_above(5);
        let eps1 = 1.0 - histogram_of_final_counts(&ms1).fraction_above(5);
        let pair = baseline.errors.unwrap();
        assert_eq!(pair.eps0, eps0);
        assert_eq!(pair.eps1, eps1);

        for row in &rows {
            assert_close(
                row.t_effective * row.acceptance,
                scenario.sequence_time(),
                1e-12,
            );
        }
    }

    #[test]
    fn scan_requires_a_first_window() {
        let scenario = SccScenario::calibrated();
        assert!(matches!(
            postselection_scan(&scenario, 5, -1..=3, 100, 1),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn improvements_compare_against_the_baseline() {
        let rows = [
            PostselectRow {
                threshold_first: -1,
                errors: None,
                sigma_r: Some(6.0),
                acceptance: 1.0,
                t_effective: 0.02,
                ks: None,
                status: RowStatus::Ok,
            },
            PostselectRow {
                threshold_first: 2,
                errors: None,
                sigma_r: Some(4.8),
                acceptance: 0.81,
                t_effective: 0.02 / 0.81,
                ks: None,
                status: RowStatus::Ok,
            },
        ];
        let improvements = postselection_improvements(&rows).unwrap();
        assert_eq!(improvements.len(), 1);
        assert_eq!(improvements[0].0, 2);
        // sigma ratio 0.8, acceptance 0.81: eta ratio 0.8 / 0.9.
        assert_close(improvements[0].1, 1.0 - 0.8 / 0.9, 1e-12);
    }
}
