//! AC magnetometry figures of merit for an echo-based sensing sequence.
//!
//! A synchronized AC field of amplitude B accumulates phase phi = alpha B tau
//! over an echo of total length tau, with alpha = 2 g mu_B / (pi hbar) for a
//! square-wave-matched echo. The ms = 0 return probability traces a fringe
//! p0 = (1 + C(tau) cos(alpha B tau)) / 2, where the coherence C combines a
//! stretched-exponential decay with Gaussian revivals at multiples of the
//! Larmor period of the surrounding nuclear bath.
//!
//! Sensitivity per unit bandwidth of a readout with noise factor sigma_R:
//!
//! eta(tau) = sigma_R exp((tau/T2)^p) / (alpha sqrt(tau))
//!            * sqrt((t_init + tau + t_ro) / tau)
//!
//! The decay factor alone enters eta; revivals gate which tau are usable,
//! which is what the `restrict_to_revivals` search mode is for.

use crate::error::{Error, Result};
use crate::scc::PostselectRow;

/// 2 mu_B / (pi hbar) in rad s^-1 T^-1: phase per (tesla second) of AC
/// amplitude for an echo locked to a square-wave field.
pub const ALPHA: f64 = 2.0 * 9.274e-24 / (std::f64::consts::PI * 1.0546e-34);

/// Decoherence envelope and revival structure of the echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceModel {
    pub t2: f64,
    /// Stretch exponent of the decay.
    pub p: f64,
    /// Revival period (twice the bath Larmor period).
    pub t_rev: f64,
    /// Gaussian 1/e half-width of each revival.
    pub w_rev: f64,
    pub alpha: f64,
}

impl CoherenceModel {
    /// Hahn-echo numbers for the reference center: T2 = 461.5 us with a
    /// mild stretch, revivals every 26.28 us.
    pub fn hahn_echo_default() -> Self {
        let t_rev = 26.28e-6;
        CoherenceModel {
            t2: 461.5e-6,
            p: 1.01,
            t_rev,
            w_rev: t_rev / 8.0,
            alpha: ALPHA,
        }
    }

    pub fn with_stretch_exponent(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("t2", self.t2),
            ("p", self.p),
            ("t_rev", self.t_rev),
            ("w_rev", self.w_rev),
            ("alpha", self.alpha),
        ];
        for (name, value) in named {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Stretched-exponential decay exp(-(tau/T2)^p).
    pub fn decay_envelope(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        (-(tau / self.t2).powf(self.p)).exp()
    }

    /// Gaussian revival comb sum_k exp(-((tau - k t_rev) / w_rev)^2) over
    /// k >= 0, clamped to 1 where neighboring revivals overlap.
    pub fn revival_comb(&self, tau: f64) -> f64 {
        let center = (tau / self.t_rev).round() as i64;
        // Terms beyond 8 widths are below 1e-27; neighbors within that
        // radius cover any w_rev.
        let reach = (8.0 * self.w_rev / self.t_rev).ceil() as i64 + 1;
        let mut sum = 0.0;
        for k in (center - reach).max(0)..=(center + reach) {
            let detuning = (tau - k as f64 * self.t_rev) / self.w_rev;
            sum += (-detuning * detuning).exp();
        }
        sum.min(1.0)
    }

    /// Full coherence C(tau) = decay * comb.
    pub fn coherence_envelope(&self, tau: f64) -> f64 {
        self.decay_envelope(tau) * self.revival_comb(tau)
    }
}

/// One point of the echo fringe at fixed tau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoSignalPoint {
    pub b: f64,
    pub tau: f64,
    /// ms = 0 return probability.
    pub p0: f64,
    /// Single-shot projection noise sqrt(p0 (1 - p0)) at this point.
    pub sigma_spn: f64,
}

pub fn echo_signal(b: f64, tau: f64, model: &CoherenceModel) -> EchoSignalPoint {
    let c = model.coherence_envelope(tau);
    let p0 = 0.5 * (1.0 + c * (model.alpha * b * tau).cos());
    EchoSignalPoint {
        b,
        tau,
        p0,
        sigma_spn: (p0 * (1.0 - p0)).max(0.0).sqrt(),
    }
}

/// Sensitivity record for one (readout, tau) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityResult {
    pub eta: f64,
    pub tau: f64,
    pub sigma_r: f64,
    pub t_init: f64,
    pub t_ro: f64,
    pub p_used: f64,
}

/// AC sensitivity per unit bandwidth, decay envelope only (operate at a
/// revival center). Units: tesla per sqrt(hertz).
pub fn sensitivity(sigma_r: f64, tau: f64, t_init: f64, t_ro: f64, model: &CoherenceModel) -> f64 {
    let duty = ((t_init + tau + t_ro) / tau).sqrt();
    sigma_r / (model.decay_envelope(tau) * model.alpha * tau.sqrt()) * duty
}

pub fn sensitivity_point(
    sigma_r: f64,
    tau: f64,
    t_init: f64,
    t_ro: f64,
    model: &CoherenceModel,
) -> SensitivityResult {
    SensitivityResult {
        eta: sensitivity(sigma_r, tau, t_init, t_ro, model),
        tau,
        sigma_r,
        t_init,
        t_ro,
        p_used: model.p,
    }
}

/// Search grid for [`optimal_tau`]: either an arithmetic grid or the
/// revival centers k t_rev falling inside the same interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_step: f64,
}

impl TauGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0) {
            return Err(Error::invalid("tau_min", format!("must be > 0, got {}", self.tau_min)));
        }
        if self.tau_max < self.tau_min {
            return Err(Error::invalid("tau_max", "must be >= tau_min".to_string()));
        }
        if !(self.tau_step > 0.0) {
            return Err(Error::invalid("tau_step", format!("must be > 0, got {}", self.tau_step)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let mut taus = Vec::new();
        let n = ((self.tau_max - self.tau_min) / self.tau_step + 0.5).floor() as usize;
        for i in 0..=n {
            let tau = self.tau_min + i as f64 * self.tau_step;
            if tau <= self.tau_max * (1.0 + 1e-12) {
                taus.push(tau);
            }
        }
        taus
    }
}

/// Minimize eta over tau. With `restrict_to_revivals` the candidates are
/// the revival centers inside the grid interval; otherwise the arithmetic
/// grid itself. Ties go to the smaller tau.
pub fn optimal_tau(
    sigma_r: f64,
    t_init: f64,
    t_ro: f64,
    model: &CoherenceModel,
    restrict_to_revivals: bool,
    grid: &TauGrid,
) -> Result<SensitivityResult> {
    grid.validate()?;
    let candidates: Vec<f64> = if restrict_to_revivals {
        let k_min = ((grid.tau_min / model.t_rev).ceil() as i64).max(1);
        let k_max = (grid.tau_max / model.t_rev).floor() as i64;
        (k_min..=k_max).map(|k| k as f64 * model.t_rev).collect()
    } else {
        grid.points()
    };
    if candidates.is_empty() {
        return Err(Error::invalid("tau_max", "grid contains no candidate tau".to_string()));
    }
    let mut best: Option<SensitivityResult> = None;
    for tau in candidates {
        let point = sensitivity_point(sigma_r, tau, t_init, t_ro, model);
        if best.as_ref().map_or(true, |b| point.eta < b.eta) {
            best = Some(point);
        }
    }
    Ok(best.expect("nonempty candidates"))
}

/// A labeled readout whose sensitivity curve a scan should trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanScenario {
    pub label: String,
    pub sigma_r: f64,
    pub t_init: f64,
    pub t_ro: f64,
    pub model: CoherenceModel,
}

/// Evaluate each scenario over the same tau grid. Output is one row vector
/// per scenario, aligned with `taus`.
pub fn sensitivity_scan(scenarios: &[ScanScenario], taus: &[f64]) -> Vec<Vec<SensitivityResult>> {
    scenarios
        .iter()
        .map(|s| {
            taus.iter()
                .map(|&tau| sensitivity_point(s.sigma_r, tau, s.t_init, s.t_ro, &s.model))
                .collect()
        })
        .collect()
}

/// Pointwise eta ratio reference / improved: above 1 where the improved
/// readout wins. Rows must come from the same tau grid.
pub fn gain_curve(
    reference: &[SensitivityResult],
    improved: &[SensitivityResult],
) -> Result<Vec<(f64, f64)>> {
    if reference.len() != improved.len() {
        return Err(Error::invalid("improved", "length mismatch with reference".to_string()));
    }
    reference
        .iter()
        .zip(improved)
        .map(|(r, i)| {
            if (r.tau - i.tau).abs() > 1e-12 * r.tau.max(i.tau) {
                return Err(Error::invalid("improved", "tau grids differ".to_string()));
            }
            Ok((r.tau, r.eta / i.eta))
        })
        .collect()
}

/// Smallest field amplitude resolvable in a single shot at a revival
/// center: delta B = sigma_R / (C(tau) alpha tau), decay envelope only.
pub fn single_shot_uncertainty(sigma_r: f64, tau: f64, model: &CoherenceModel) -> f64 {
    sigma_r / (model.decay_envelope(tau) * model.alpha * tau)
}

/// Sensitivity when each accepted shot costs `t_effective` of wall-clock
/// time (post-selection included): eta = sigma_R exp((tau/T2)^p)
/// / (alpha sqrt(tau)) * sqrt(t_effective / tau).
pub fn postselected_sensitivity(
    sigma_r: f64,
    t_effective: f64,
    tau: f64,
    model: &CoherenceModel,
) -> f64 {
    sigma_r / (model.decay_envelope(tau) * model.alpha * tau.sqrt()) * (t_effective / tau).sqrt()
}

/// Best sensitivity improvement over the unselected baseline in a
/// post-selection scan, as (threshold, fractional improvement).
pub fn best_postselection_improvement(rows: &[PostselectRow]) -> Result<(i64, f64)> {
    let improvements = crate::scc::postselection_improvements(rows)?;
    improvements
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::invalid("rows", "no finite rows beyond the baseline".to_string()))
}
