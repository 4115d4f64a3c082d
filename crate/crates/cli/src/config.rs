//! JSON config schemas, one per subcommand. All time-like keys carry an
//! `_s` suffix and rates carry `_hz`; unknown keys are rejected so typos
//! fail loudly instead of silently falling back to defaults.

use serde::Deserialize;

use nvscc_core::charge::{ChargeInit, ChargeLabel, RateSet};
use nvscc_core::magnetometry::{CoherenceModel, TauGrid};
use nvscc_core::scc::{ProtocolTimings, SccParams, SccScenario, SpinPrep};

use crate::error::{validation, CliResult};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub gamma_minus_hz: f64,
    pub gamma_zero_hz: f64,
    pub g_ion_hz: f64,
    pub g_rec_hz: f64,
    #[serde(default)]
    pub power_tag_uw: Option<f64>,
}

impl RatesConfig {
    pub fn build(&self) -> CliResult<RateSet> {
        let rates = RateSet::new(self.gamma_minus_hz, self.gamma_zero_hz, self.g_ion_hz, self.g_rec_hz)
            .map_err(validation)?;
        Ok(match self.power_tag_uw {
            Some(power) => rates.with_power_tag(power),
            None => rates,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeInitConfig {
    Stationary,
    NvMinus,
    NvZero,
}

impl ChargeInitConfig {
    pub fn build(&self) -> ChargeInit {
        match self {
            ChargeInitConfig::Stationary => ChargeInit::Stationary,
            ChargeInitConfig::NvMinus => ChargeInit::Fixed(ChargeLabel::NvMinus),
            ChargeInitConfig::NvZero => ChargeInit::Fixed(ChargeLabel::NvZero),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SccParamsConfig {
    pub p_init_minus: f64,
    pub p_shelf: f64,
    pub p_ion_triplet: f64,
    pub p_ion_singlet: f64,
    pub t_shelf_s: f64,
    pub t_ion_s: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingsConfig {
    pub t_init_s: f64,
    pub tau_s: f64,
    pub t_ro_s: f64,
    #[serde(default)]
    pub t_ro_first_s: f64,
    #[serde(default)]
    pub t_overhead_s: f64,
}

/// Either a named preset or a fully spelled-out scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioConfig {
    Named(String),
    Explicit {
        rates: RatesConfig,
        scc_params: SccParamsConfig,
        timings: TimingsConfig,
    },
}

impl ScenarioConfig {
    pub fn build(&self) -> CliResult<SccScenario> {
        match self {
            ScenarioConfig::Named(name) => match name.as_str() {
                "calibrated" => Ok(SccScenario::calibrated()),
                "calibrated_first_readout" => Ok(SccScenario::calibrated_with_first_readout()),
                other => Err(validation(format!(
                    "scenario: unknown preset {other:?} (expected \"calibrated\" or \"calibrated_first_readout\")"
                ))),
            },
            ScenarioConfig::Explicit { rates, scc_params, timings } => {
                let params = SccParams {
                    p_init_minus: scc_params.p_init_minus,
                    p_shelf: scc_params.p_shelf,
                    p_ion_triplet: scc_params.p_ion_triplet,
                    p_ion_singlet: scc_params.p_ion_singlet,
                    t_shelf: scc_params.t_shelf_s,
                    t_ion: scc_params.t_ion_s,
                };
                let timings = ProtocolTimings {
                    t_init: timings.t_init_s,
                    tau: timings.tau_s,
                    t_ro: timings.t_ro_s,
                    t_ro_first: timings.t_ro_first_s,
                    t_overhead: timings.t_overhead_s,
                };
                SccScenario::new(rates.build()?, params, timings).map_err(validation)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpinConfig {
    Named(SpinName),
    Superposition { superposition: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinName {
    Ms0,
    Ms1,
}

impl SpinConfig {
    pub fn build(&self) -> CliResult<SpinPrep> {
        let prep = match self {
            SpinConfig::Named(SpinName::Ms0) => SpinPrep::Ms0,
            SpinConfig::Named(SpinName::Ms1) => SpinPrep::Ms1,
            SpinConfig::Superposition { superposition } => SpinPrep::Superposition(*superposition),
        };
        prep.validate().map_err(validation)?;
        Ok(prep)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceConfig {
    pub t2_s: f64,
    pub p: f64,
    pub t_rev_s: f64,
    pub w_rev_s: f64,
    #[serde(default)]
    pub alpha_rad_per_s_per_t: Option<f64>,
}

impl CoherenceConfig {
    pub fn build(&self) -> CliResult<CoherenceModel> {
        let model = CoherenceModel {
            t2: self.t2_s,
            p: self.p,
            t_rev: self.t_rev_s,
            w_rev: self.w_rev_s,
            alpha: self.alpha_rad_per_s_per_t.unwrap_or(nvscc_core::magnetometry::ALPHA),
        };
        model.validate().map_err(validation)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTraceConfig {
    pub rates: RatesConfig,
    pub duration_s: f64,
    pub bin_duration_s: f64,
    pub initial_charge: ChargeInitConfig,
    pub master_seed: u64,
    pub output_csv: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRatesConfig {
    pub trace_csv: String,
    pub guess: RatesConfig,
    pub output_json: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSccConfig {
    pub scenario: ScenarioConfig,
    pub spin: SpinConfig,
    pub shots: u64,
    pub master_seed: u64,
    pub output_csv: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutErrorsConfig {
    pub scenario: ScenarioConfig,
    pub threshold_final: i64,
    #[serde(default = "default_scan_min")]
    pub threshold_scan_min: i64,
    #[serde(default = "default_scan_max")]
    pub threshold_scan_max: i64,
    pub shots_per_class: u64,
    pub master_seed: u64,
    pub output_json: String,
}

fn default_scan_min() -> i64 {
    -1
}

fn default_scan_max() -> i64 {
    30
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanScenarioConfig {
    pub label: String,
    pub sigma_r: f64,
    pub t_init_s: f64,
    pub t_ro_s: f64,
    pub coherence: CoherenceConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityScanConfig {
    pub scenarios: Vec<ScanScenarioConfig>,
    pub tau_min_s: f64,
    pub tau_max_s: f64,
    pub tau_step_s: f64,
    pub output_csv: String,
}

impl SensitivityScanConfig {
    pub fn grid(&self) -> CliResult<TauGrid> {
        let grid = TauGrid {
            tau_min: self.tau_min_s,
            tau_max: self.tau_max_s,
            tau_step: self.tau_step_s,
        };
        grid.validate().map_err(validation)?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutTimeScanConfig {
    pub label: String,
    pub rates: RatesConfig,
    pub scc_params: SccParamsConfig,
    pub t_init_s: f64,
    pub tau_s: f64,
    pub t_ro_min_s: f64,
    pub t_ro_max_s: f64,
    pub t_ro_step_s: f64,
    pub threshold_final: i64,
    pub coherence: CoherenceConfig,
    pub output_csv: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostselectScanConfig {
    pub scenario: ScenarioConfig,
    pub threshold_final: i64,
    pub threshold_first_min: i64,
    pub threshold_first_max: i64,
    pub shots_per_class: u64,
    pub master_seed: u64,
    pub output_csv: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleShotConfig {
    pub sigma_r: f64,
    pub tau_s: f64,
    pub coherence: CoherenceConfig,
    pub output_json: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDecoherenceConfig {
    pub data_csv: String,
    pub guess_t2_s: f64,
    pub guess_p: f64,
    pub output_json: String,
}

/// Parse a JSON config file into `T`, mapping parse failures to validation
/// errors so the offending key shows up in the message.
pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| validation(format!("config {}: {e}", path.display())))
}
