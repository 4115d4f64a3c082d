//! Parameter estimation from binned fluorescence traces and echo decays.
//!
//! A binned trace is a hidden Markov chain: the charge state is latent, the
//! per-bin photon count is Poisson at the state's rate, and the state hops
//! with the switching rates. [`hmm_log_likelihood`] runs the exact forward
//! recursion in log space with the analytic per-bin transition matrix, so
//! the likelihood stays finite for any rate set; [`fit_rates`] climbs it
//! with Nelder-Mead over log-rates. The bin width is the resolution floor:
//! switches inside one bin blur, which biases rate estimates once dwell
//! times approach the bin.
//!
//! [`fit_decoherence`] least-squares fits a stretched exponential to
//! revival-top coherence samples in log-parameter space.

use crate::charge::{BinnedTrace, ChargeInit, ChargeLabel, RateSet};
use crate::error::{Error, Result};

/// Rate estimate with the likelihood it achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub estimate: RateSet,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Stretched-exponential fit of coherence samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceFit {
    pub t2: f64,
    pub p: f64,
    /// Sum of squared residuals at the optimum.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn ln_factorial_table(max: u32) -> Vec<f64> {
    let mut table = vec![0.0; max as usize + 1];
    for k in 1..=max as usize {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact log-likelihood of a binned trace under a rate set.
///
/// Per-bin transition probabilities come from the closed-form exponential of
/// the two-state generator; emissions are Poisson at rate * bin. `initial`
/// sets the state prior for the first bin.
pub fn hmm_log_likelihood(trace: &BinnedTrace, rates: &RateSet, initial: ChargeInit) -> Result<f64> {
    if trace.counts.is_empty() {
        return Err(Error::invalid("counts", "trace has no bins"));
    }
    if !(trace.bin_duration > 0.0) {
        return Err(Error::invalid(
            "bin_duration",
            format!("must be > 0, got {}", trace.bin_duration),
        ));
    }
    let dt = trace.bin_duration;
    let lam_minus = rates.gamma_minus * dt;
    let lam_zero = rates.gamma_zero * dt;
    let max_count = trace.counts.iter().copied().max().unwrap_or(0);
    let ln_fact = ln_factorial_table(max_count);

    let log_emit = |lam: f64, k: u32| -> f64 {
        if lam > 0.0 {
            k as f64 * lam.ln() - lam - ln_fact[k as usize]
        } else if k == 0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    };

    let g_total = rates.g_ion + rates.g_rec;
    // Rows are (from minus, from zero), columns (to minus, to zero).
    let (t_mm, t_zm) = if g_total > 0.0 {
        let pi_minus = rates.g_rec / g_total;
        let decay = (-g_total * dt).exp();
        (pi_minus + (1.0 - pi_minus) * decay, pi_minus * (1.0 - decay))
    } else {
        (1.0, 0.0)
    };
    let t_mz = 1.0 - t_mm;
    let t_zz = 1.0 - t_zm;
    let (ln_mm, ln_mz, ln_zm, ln_zz) = (t_mm.ln(), t_mz.ln(), t_zm.ln(), t_zz.ln());

    let (mut a_minus, mut a_zero) = match initial {
        ChargeInit::Fixed(ChargeLabel::NvMinus) => (0.0, f64::NEG_INFINITY),
        ChargeInit::Fixed(ChargeLabel::NvZero) => (f64::NEG_INFINITY, 0.0),
        ChargeInit::Stationary => {
            if g_total <= 0.0 {
                return Err(Error::DegenerateChain);
            }
            let pi_minus = rates.g_rec / g_total;
            (pi_minus.ln(), (1.0 - pi_minus).ln())
        }
    };

    a_minus += log_emit(lam_minus, trace.counts[0]);
    a_zero += log_emit(lam_zero, trace.counts[0]);

    for &count in &trace.counts[1..] {
        let next_minus = lse2(a_minus + ln_mm, a_zero + ln_zm) + log_emit(lam_minus, count);
        let next_zero = lse2(a_minus + ln_mz, a_zero + ln_zz) + log_emit(lam_zero, count);
        a_minus = next_minus;
        a_zero = next_zero;
    }
    Ok(lse2(a_minus, a_zero))
}

struct NmOutcome {
    x: Vec<f64>,
    fx: f64,
    iterations: usize,
    converged: bool,
}

/// Plain Nelder-Mead. Stops when the simplex f-spread falls below
/// 1e-12 + rel_tol * |f_best| or after `max_iter` iterations.
fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_iter: usize, rel_tol: f64) -> NmOutcome
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[dim].1;
        if f_worst - f_best <= 1e-12 + rel_tol * f_best.abs() {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let worst = simplex[dim].0.clone();
        let blend = |a: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + a * (c - w))
                .collect()
        };

        let reflected = blend(1.0);
        let f_reflected = f(&reflected);
        if f_reflected < simplex[0].1 {
            let expanded = blend(2.0);
            let f_expanded = f(&expanded);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
            continue;
        }
        let contracted = if f_reflected < simplex[dim].1 {
            blend(0.5)
        } else {
            blend(-0.5)
        };
        let f_contracted = f(&contracted);
        if f_contracted < simplex[dim].1.min(f_reflected) {
            simplex[dim] = (contracted, f_contracted);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (xi, bi) in vertex.0.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            vertex.1 = f(&vertex.0);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmOutcome {
        x: simplex[0].0.clone(),
        fx: simplex[0].1,
        iterations,
        converged,
    }
}

/// Maximum-likelihood rate fit over log-rates, stationary initial prior.
///
/// Needs at least 100 bins and a fully positive `guess`. The returned
/// estimate is label-oriented (gamma_minus > gamma_zero), swapping the
/// switching rates along with the photon rates when needed; the likelihood
/// is invariant under that relabeling.
pub fn fit_rates(trace: &BinnedTrace, guess: &RateSet) -> Result<RateFit> {
    if trace.counts.len() < 100 {
        return Err(Error::TooFewSamples { need: 100, got: trace.counts.len() });
    }
    let guess_rates = [guess.gamma_minus, guess.gamma_zero, guess.g_ion, guess.g_rec];
    if guess_rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::invalid(
            "guess",
            "all four rates must be > 0 for a log-space fit".to_string(),
        ));
    }

    let objective = |x: &[f64]| -> f64 {
        let rates = RateSet {
            gamma_minus: x[0].exp(),
            gamma_zero: x[1].exp(),
            g_ion: x[2].exp(),
            g_rec: x[3].exp(),
            power_tag_uw: None,
        };
        if rates.max_rate() > 1e12 {
            return f64::INFINITY;
        }
        match hmm_log_likelihood(trace, &rates, ChargeInit::Stationary) {
            Ok(ll) => -ll,
            Err(_) => f64::INFINITY,
        }
    };

    let x0: Vec<f64> = guess_rates.iter().map(|r| r.ln()).collect();
    let outcome = nelder_mead(objective, &x0, 0.2, 2000, 1e-6);

    let mut fitted = [0.0; 4];
    for (slot, xi) in fitted.iter_mut().zip(&outcome.x) {
        *slot = xi.exp();
    }
    let [mut gamma_minus, mut gamma_zero, mut g_ion, mut g_rec] = fitted;
    if gamma_minus < gamma_zero {
        std::mem::swap(&mut gamma_minus, &mut gamma_zero);
        std::mem::swap(&mut g_ion, &mut g_rec);
    }
    Ok(RateFit {
        estimate: RateSet {
            gamma_minus,
            gamma_zero,
            g_ion,
            g_rec,
            power_tag_uw: None,
        },
        log_likelihood: -outcome.fx,
        converged: outcome.converged,
        iterations: outcome.iterations,
    })
}

/// Least-squares stretched-exponential fit of (tau, C) samples.
///
/// Samples with C <= 0 or tau <= 0 are dropped (noise can push a revival
/// top below zero); at least 5 must survive.
pub fn fit_decoherence(samples: &[(f64, f64)], guess_t2: f64, guess_p: f64) -> Result<DecoherenceFit> {
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(tau, c)| tau > 0.0 && c > 0.0)
        .collect();
    if usable.len() < 5 {
        return Err(Error::TooFewSamples { need: 5, got: usable.len() });
    }
    if !(guess_t2 > 0.0) {
        return Err(Error::invalid("guess_t2", format!("must be > 0, got {guess_t2}")));
    }
    if !(guess_p > 0.0) {
        return Err(Error::invalid("guess_p", format!("must be > 0, got {guess_p}")));
    }

    let objective = |x: &[f64]| -> f64 {
        let t2 = x[0].exp();
        let p = x[1].exp();
        if p > 20.0 || !t2.is_finite() {
            return f64::INFINITY;
        }
        usable
            .iter()
            .map(|&(tau, c)| {
                let model = (-(tau / t2).powf(p)).exp();
                (c - model) * (c - model)
            })
            .sum()
    };

    let x0 = [guess_t2.ln(), guess_p.ln()];
    let outcome = nelder_mead(objective, &x0, 0.2, 2000, 1e-6);
    Ok(DecoherenceFit {
        t2: outcome.x[0].exp(),
        p: outcome.x[1].exp(),
        residual: outcome.fx,
        converged: outcome.converged,
        iterations: outcome.iterations,
    })
}

/// Closed-form T2 from a single coherence sample at known stretch exponent:
/// t2 = tau (-ln C)^(-1/p). Needs C strictly inside (0, 1).
pub fn stretched_t2_from_point(tau: f64, c: f64, p: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid("c", format!("must lie in (0, 1), got {c}")));
    }
    if !(p > 0.0) {
        return Err(Error::invalid("p", format!("must be > 0, got {p}")));
    }
    Ok(tau * (-c.ln()).powf(-1.0 / p))
}
