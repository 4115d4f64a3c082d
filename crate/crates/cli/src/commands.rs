//! One function per subcommand. Each builds its inputs from the validated
//! config, runs the library, and writes the declared outputs through the
//! atomic writer. Randomized commands take the effective master seed
//! (config value unless overridden on the command line).

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use serde_json::json;

use nvscc_core::charge::{simulate_trace, BinnedTrace, ChargeLabel};
use nvscc_core::discrimination::{optimal_threshold, sigma_r_scc, spin_errors_from_distributions};
use nvscc_core::error::Error;
use nvscc_core::estimation::{fit_decoherence, fit_rates};
use nvscc_core::magnetometry::{
    echo_signal, gain_curve, sensitivity, sensitivity_scan, single_shot_uncertainty, ScanScenario,
};
use nvscc_core::scc::{
    histogram_of_final_counts, postselection_scan, semi_analytic_errors, simulate_scc_ensemble,
    simulate_spin_pair, spin_class_distributions, ProtocolTimings, SccParams, SccScenario,
    ShotRecord, SpinPrep,
};

use crate::config::*;
use crate::error::{runtime, validation, CliResult};
use crate::output::{check_label, num, opt_num, OutDir};

pub struct CommandReport {
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

fn effective_seed(config_seed: u64, override_seed: Option<u64>) -> u64 {
    override_seed.unwrap_or(config_seed)
}

pub fn simulate_trace_cmd(
    config: &SimulateTraceConfig,
    seed_override: Option<u64>,
    out: &OutDir,
) -> CliResult<CommandReport> {
    let rates = config.rates.build()?;
    let seed = effective_seed(config.master_seed, seed_override);
    let trace = simulate_trace(
        &rates,
        config.duration_s,
        config.bin_duration_s,
        config.initial_charge.build(),
        seed,
    )
    .map_err(validation)?;

    let mut csv = String::new();
    let _ = writeln!(csv, "# bin_duration_s={}", num(trace.bin_duration));
    let _ = writeln!(csv, "bin_index,count");
    for (index, count) in trace.counts.iter().enumerate() {
        let _ = writeln!(csv, "{index},{count}");
    }
    let path = out.write(&config.output_csv, &csv)?;
    Ok(CommandReport { seed: Some(seed), outputs: vec![path] })
}

/// Read a trace table as written by `simulate-trace`: a `# bin_duration_s=`
/// comment, a header row, then one `bin_index,count` row per bin.
fn read_trace_csv(path: &str) -> CliResult<BinnedTrace> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trace {path}"))
        .map_err(runtime)?;
    let mut lines = text.lines();
    let bin_duration = lines
        .next()
        .and_then(|line| line.strip_prefix("# bin_duration_s="))
        .and_then(|value| value.trim().parse::<f64>().ok())
        .ok_or_else(|| runtime(anyhow::anyhow!("trace {path}: missing # bin_duration_s= header")))?;
    match lines.next() {
        Some("bin_index,count") => {}
        other => {
            return Err(runtime(anyhow::anyhow!(
                "trace {path}: expected bin_index,count header, found {other:?}"
            )))
        }
    }
    let mut counts = Vec::new();
    for (row, line) in lines.enumerate() {
        let count = line
            .split_once(',')
            .and_then(|(_, c)| c.trim().parse::<u32>().ok())
            .ok_or_else(|| runtime(anyhow::anyhow!("trace {path}: bad row {}: {line:?}", row + 3)))?;
        counts.push(count);
    }
    Ok(BinnedTrace { bin_duration, counts, seed: 0, rates_used: None })
}

pub fn fit_rates_cmd(config: &FitRatesConfig, out: &OutDir) -> CliResult<CommandReport> {
    let guess = config.guess.build()?;
    let trace = read_trace_csv(&config.trace_csv)?;
    let fit = fit_rates(&trace, &guess)
        .with_context(|| format!("fitting {}", config.trace_csv))
        .map_err(runtime)?;

    let report = json!({
        "gamma_minus_hz": fit.estimate.gamma_minus,
        "gamma_zero_hz": fit.estimate.gamma_zero,
        "g_ion_hz": fit.estimate.g_ion,
        "g_rec_hz": fit.estimate.g_rec,
        "log_likelihood": fit.log_likelihood,
        "converged": fit.converged,
        "iterations": fit.iterations,
    });
    let path = out.write(&config.output_json, &pretty(&report))?;
    Ok(CommandReport { seed: None, outputs: vec![path] })
}

fn spin_cell(prep: SpinPrep) -> &'static str {
    match prep {
        SpinPrep::Ms0 => "ms0",
        SpinPrep::Ms1 => "ms1",
        SpinPrep::Superposition(_) => "superposition",
    }
}

fn charge_cell(label: ChargeLabel) -> &'static str {
    match label {
        ChargeLabel::NvMinus => "nv_minus",
        ChargeLabel::NvZero => "nv_zero",
    }
}

fn shot_rows(csv: &mut String, records: &[ShotRecord], index_offset: usize) {
    for (i, shot) in records.iter().enumerate() {
        let n_first = shot.n_first.map(|n| n.to_string()).unwrap_or_default();
        let accepted = shot.accepted.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            index_offset + i,
            spin_cell(shot.spin_prepared),
            n_first,
            shot.n_final,
            charge_cell(shot.charge_converted),
            accepted,
        );
    }
}

pub fn simulate_scc_cmd(
    config: &SimulateSccConfig,
    seed_override: Option<u64>,
    out: &OutDir,
) -> CliResult<CommandReport> {
    let scenario = config.scenario.build()?;
    let prep = config.spin.build()?;
    let seed = effective_seed(config.master_seed, seed_override);
    let records = simulate_scc_ensemble(prep, &scenario, config.shots, seed);

    let mut csv = String::from("shot_index,spin,n_first,n_final,charge,accepted\n");
    shot_rows(&mut csv, &records, 0);
    let path = out.write(&config.output_csv, &csv)?;
    Ok(CommandReport { seed: Some(seed), outputs: vec![path] })
}

pub fn readout_errors_cmd(
    config: &ReadoutErrorsConfig,
    seed_override: Option<u64>,
    out: &OutDir,
) -> CliResult<CommandReport> {
    let scenario = config.scenario.build()?;
    if config.threshold_scan_max < config.threshold_scan_min {
        return Err(validation("threshold_scan_max: below threshold_scan_min"));
    }
    let seed = effective_seed(config.master_seed, seed_override);
    let (ms0, ms1) = simulate_spin_pair(&scenario, config.shots_per_class, seed);
    let hist0 = histogram_of_final_counts(&ms0);
    let hist1 = histogram_of_final_counts(&ms1);

    let eps0 = hist0.fraction_above(config.threshold_final);
    let eps1 = 1.0 - hist1.fraction_above(config.threshold_final);
    let pair = nvscc_core::discrimination::ReadoutErrorPair { eps0, eps1 };
    let comparison = nvscc_core::discrimination::compare_histograms(&hist0, &hist1);

    let window = scenario.timings.t_ro;
    let d0 = hist0.to_distribution(window).map_err(runtime)?;
    let d1 = hist1.to_distribution(window).map_err(runtime)?;
    let scan = config.threshold_scan_min..=config.threshold_scan_max;
    let optimal = match optimal_threshold(&d0, &d1, scan) {
        Ok((threshold, sigma)) => json!({ "threshold": threshold, "sigma_r": sigma }),
        Err(Error::AllThresholdsDivergent) => serde_json::Value::Null,
        Err(other) => return Err(runtime(other)),
    };

    let exact = spin_class_distributions(&scenario).map_err(runtime)?;
    let exact_pair = spin_errors_from_distributions(&exact.0, &exact.1, config.threshold_final);

    let report = json!({
        "threshold_final": config.threshold_final,
        "shots_per_class": config.shots_per_class,
        "empirical": {
            "eps0": eps0,
            "eps1": eps1,
            "sigma_r": sigma_r_scc(&pair).ok(),
            "mean_ms0": comparison.mean0,
            "mean_ms1": comparison.mean1,
            "contrast": comparison.contrast,
            "ks": comparison.ks_statistic,
        },
        "semi_analytic": {
            "eps0": exact_pair.eps0,
            "eps1": exact_pair.eps1,
            "sigma_r": sigma_r_scc(&exact_pair).ok(),
        },
        "optimal": optimal,
    });
    let path = out.write(&config.output_json, &pretty(&report))?;
    Ok(CommandReport { seed: Some(seed), outputs: vec![path] })
}

pub fn sensitivity_scan_cmd(config: &SensitivityScanConfig, out: &OutDir) -> CliResult<CommandReport> {
    if config.scenarios.is_empty() {
        return Err(validation("scenarios: need at least one entry"));
    }
    let mut scenarios = Vec::new();
    for entry in &config.scenarios {
        check_label(&entry.label)?;
        scenarios.push(ScanScenario {
            label: entry.label.clone(),
            sigma_r: entry.sigma_r,
            t_init: entry.t_init_s,
            t_ro: entry.t_ro_s,
            model: entry.coherence.build()?,
        });
    }
    let taus = config.grid()?.points();
    let table = sensitivity_scan(&scenarios, &taus);

    let mut csv = String::from("tau_s,sigma_R,eta_T_per_sqrtHz,scenario\n");
    for (scenario, rows) in scenarios.iter().zip(&table) {
        for row in rows {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                num(row.tau),
                num(row.sigma_r),
                num(row.eta),
                scenario.label
            );
        }
    }
    let path = out.write(&config.output_csv, &csv)?;
    let mut outputs = vec![path];

    // With exactly two scenarios the scan is a comparison; emit the gain of
    // the second over the first as a companion table.
    if let [reference, improved] = table.as_slice() {
        let gain = gain_curve(reference, improved).map_err(runtime)?;
        let mut gain_csv = String::from("tau_s,gain\n");
        for (tau, value) in gain {
            let _ = writeln!(gain_csv, "{},{}", num(tau), num(value));
        }
        let gain_name = match config.output_csv.strip_suffix(".csv") {
            Some(stem) => format!("{stem}_gain.csv"),
            None => format!("{}_gain.csv", config.output_csv),
        };
        outputs.push(out.write(&gain_name, &gain_csv)?);
    }
    Ok(CommandReport { seed: None, outputs })
}

pub fn readout_time_scan_cmd(config: &ReadoutTimeScanConfig, out: &OutDir) -> CliResult<CommandReport> {
    check_label(&config.label)?;
    if !(config.t_ro_min_s > 0.0 && config.t_ro_step_s > 0.0 && config.t_ro_max_s >= config.t_ro_min_s)
    {
        return Err(validation("t_ro_min_s/t_ro_max_s/t_ro_step_s: need 0 < min <= max and step > 0"));
    }
    let rates = config.rates.build()?;
    let params = SccParams {
        p_init_minus: config.scc_params.p_init_minus,
        p_shelf: config.scc_params.p_shelf,
        p_ion_triplet: config.scc_params.p_ion_triplet,
        p_ion_singlet: config.scc_params.p_ion_singlet,
        t_shelf: config.scc_params.t_shelf_s,
        t_ion: config.scc_params.t_ion_s,
    };
    let model = config.coherence.build()?;

    let steps = ((config.t_ro_max_s - config.t_ro_min_s) / config.t_ro_step_s + 0.5).floor() as usize;
    let mut csv = String::from("t_ro_s,sigma_R,eta_T_per_sqrtHz,scenario,status\n");
    for i in 0..=steps {
        let t_ro = config.t_ro_min_s + i as f64 * config.t_ro_step_s;
        if t_ro > config.t_ro_max_s * (1.0 + 1e-12) {
            break;
        }
        let timings = ProtocolTimings {
            t_init: config.t_init_s,
            tau: config.tau_s,
            t_ro,
            t_ro_first: 0.0,
            t_overhead: 0.0,
        };
        let scenario = SccScenario::new(rates, params, timings).map_err(validation)?;
        let pair = semi_analytic_errors(&scenario, config.threshold_final).map_err(runtime)?;
        let (sigma, eta, status) = match sigma_r_scc(&pair) {
            Ok(sigma) => {
                let eta = sensitivity(sigma, config.tau_s, config.t_init_s, t_ro, &model);
                (Some(sigma), Some(eta), "ok")
            }
            Err(Error::Divergent { .. }) => (None, None, "divergent"),
            Err(other) => return Err(runtime(other)),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{status}",
            num(t_ro),
            opt_num(sigma),
            opt_num(eta),
            config.label
        );
    }
    let path = out.write(&config.output_csv, &csv)?;
    Ok(CommandReport { seed: None, outputs: vec![path] })
}

pub fn postselect_scan_cmd(
    config: &PostselectScanConfig,
    seed_override: Option<u64>,
    out: &OutDir,
) -> CliResult<CommandReport> {
    let scenario = config.scenario.build()?;
    if config.threshold_first_max < config.threshold_first_min {
        return Err(validation("threshold_first_max: below threshold_first_min"));
    }
    let seed = effective_seed(config.master_seed, seed_override);
    let rows = postselection_scan(
        &scenario,
        config.threshold_final,
        config.threshold_first_min..=config.threshold_first_max,
        config.shots_per_class,
        seed,
    )
    .map_err(validation)?;

    let mut csv = String::from("theta_first,sigma_R,acceptance,t_effective_s,status\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.threshold_first,
            opt_num(row.sigma_r),
            num(row.acceptance),
            num(row.t_effective),
            row.status.as_str(),
        );
    }
    let path = out.write(&config.output_csv, &csv)?;
    Ok(CommandReport { seed: Some(seed), outputs: vec![path] })
}

pub fn single_shot_cmd(config: &SingleShotConfig, out: &OutDir) -> CliResult<CommandReport> {
    let model = config.coherence.build()?;
    if !(config.sigma_r.is_finite() && config.sigma_r > 0.0) {
        return Err(validation("sigma_r: must be positive and finite"));
    }
    if !(config.tau_s.is_finite() && config.tau_s > 0.0) {
        return Err(validation("tau_s: must be positive and finite"));
    }
    let delta_b = single_shot_uncertainty(config.sigma_r, config.tau_s, &model);
    let point = echo_signal(0.0, config.tau_s, &model);

    let report = json!({
        "sigma_r": config.sigma_r,
        "tau_s": config.tau_s,
        "delta_b_t": delta_b,
        "contrast_at_tau": model.coherence_envelope(config.tau_s),
        "spin_projection_noise_t": point.sigma_spn,
    });
    let path = out.write(&config.output_json, &pretty(&report))?;
    Ok(CommandReport { seed: None, outputs: vec![path] })
}

/// Read coherence samples: a `tau_s,contrast` header then one pair per row.
fn read_decay_csv(path: &str) -> CliResult<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading samples {path}"))
        .map_err(runtime)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("tau_s,contrast") => {}
        other => {
            return Err(runtime(anyhow::anyhow!(
                "samples {path}: expected tau_s,contrast header, found {other:?}"
            )))
        }
    }
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let parsed = line.split_once(',').and_then(|(tau, c)| {
            Some((tau.trim().parse::<f64>().ok()?, c.trim().parse::<f64>().ok()?))
        });
        match parsed {
            Some(pair) => samples.push(pair),
            None => {
                return Err(runtime(anyhow::anyhow!(
                    "samples {path}: bad row {}: {line:?}",
                    row + 2
                )))
            }
        }
    }
    Ok(samples)
}

pub fn fit_decoherence_cmd(config: &FitDecoherenceConfig, out: &OutDir) -> CliResult<CommandReport> {
    let samples = read_decay_csv(&config.data_csv)?;
    let fit = fit_decoherence(&samples, config.guess_t2_s, config.guess_p)
        .with_context(|| format!("fitting {}", config.data_csv))
        .map_err(runtime)?;

    let report = json!({
        "t2_s": fit.t2,
        "p": fit.p,
        "residual": fit.residual,
        "converged": fit.converged,
        "iterations": fit.iterations,
    });
    let path = out.write(&config.output_json, &pretty(&report))?;
    Ok(CommandReport { seed: None, outputs: vec![path] })
}

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON report serializes");
    text.push('\n');
    text
}
