//! Temperature scaling fitted by validation negative log-likelihood.
//!
//! Ensembles are calibrated jointly: the ensemble is treated as one model
//! with a single temperature, so the fitted value minimizes the NLL of the
//! member-averaged tempered softmax.

use alloc::vec::Vec;

use crate::dist::{log_sum_exp, CategoricalDist};
use crate::error::{invalid, Error, Result};

/// A strictly positive, finite softmax temperature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid!("temperature {value} must be positive and finite"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self::ONE
    }
}

/// `softmax(logits / temp)`.
pub fn apply_temperature(logits: &[f64], temp: Temperature) -> Result<CategoricalDist> {
    if temp.0 == 1.0 {
        return crate::dist::softmax(logits);
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temp.0).collect();
    crate::dist::softmax(&scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NllMode {
    /// Exactly one logit vector per sample.
    Single,
    /// Average the members' tempered softmaxes, then score.
    JointEnsemble,
}

/// Validation logits: `samples x members x classes`.
pub type LogitSets = [Vec<Vec<f64>>];

fn check_inputs(logit_sets: &LogitSets, labels: &[usize], mode: NllMode) -> Result<()> {
    if logit_sets.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if labels.len() != logit_sets.len() {
        return Err(Error::DimensionMismatch {
            expected: logit_sets.len(),
            found: labels.len(),
        });
    }
    for (members, &y) in logit_sets.iter().zip(labels) {
        if members.is_empty() {
            return Err(Error::Empty("member logits"));
        }
        if mode == NllMode::Single && members.len() != 1 {
            return Err(invalid!(
                "single mode expects one logit vector per sample, got {}",
                members.len()
            ));
        }
        for z in members {
            if y >= z.len() {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: z.len(),
                });
            }
        }
    }
    Ok(())
}

/// `ln softmax(z / t)[label]`, accurate when the label dominates.
fn log_prob(z: &[f64], label: usize, t: f64) -> f64 {
    let zy = z[label];
    let gaps = z
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label)
        .map(|(_, &v)| (v - zy) / t);
    let top = gaps.clone().fold(f64::NEG_INFINITY, f64::max);
    if top > 0.0 {
        let rest: f64 = gaps.map(|g| libm::exp(g - top)).sum();
        -(top + libm::log(libm::exp(-top) + rest))
    } else {
        -libm::log1p(gaps.map(libm::exp).sum())
    }
}

fn sample_nll(members: &[Vec<f64>], label: usize, t: f64) -> f64 {
    // joint p[y] = mean_m p_m[y]
    let log_p: Vec<f64> = members.iter().map(|z| log_prob(z, label, t)).collect();
    -(log_sum_exp(&log_p) - libm::log(members.len() as f64))
}

/// Mean negative log-likelihood of `labels` under temperature `temp`.
pub fn validation_nll(
    logit_sets: &LogitSets,
    labels: &[usize],
    temp: Temperature,
    mode: NllMode,
) -> Result<f64> {
    check_inputs(logit_sets, labels, mode)?;
    let total: f64 = logit_sets
        .iter()
        .zip(labels)
        .map(|(m, &y)| sample_nll(m, y, temp.0))
        .sum();
    let nll = total / logit_sets.len() as f64;
    if !nll.is_finite() {
        return Err(Error::NonFinite("validation NLL"));
    }
    Ok(nll)
}

/// Outcome of [`fit_temperature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureFit {
    pub temperature: Temperature,
    pub nll: f64,
    pub nll_at_one: f64,
    /// The optimum sits on a search bound.
    pub clamped: bool,
}

pub const SEARCH_MIN: f64 = 0.05;
pub const SEARCH_MAX: f64 = 20.0;
/// Absolute tolerance of the golden-section search in `ln T`.
pub const LOG_TOLERANCE: f64 = 1e-4;

/// Minimize validation NLL over `T` in `[0.05, 20]` by golden-section search
/// on `ln T`. The bounds and `T = 1` are also scored and the best of all
/// candidates is returned, so the result is never worse than `T = 1`.
pub fn fit_temperature(
    logit_sets: &LogitSets,
    labels: &[usize],
    mode: NllMode,
) -> Result<TemperatureFit> {
    check_inputs(logit_sets, labels, mode)?;
    let nll = |log_t: f64| validation_nll(logit_sets, labels, Temperature(libm::exp(log_t)), mode);

    let (lo, hi) = (libm::log(SEARCH_MIN), libm::log(SEARCH_MAX));
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (nll(c)?, nll(d)?);
    while b - a > LOG_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let nll_at_one = nll(0.0)?;
    let mut best = (mid, nll(mid)?);
    for cand in [(lo, nll(lo)?), (hi, nll(hi)?), (0.0, nll_at_one)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let temperature = if best.0 == 0.0 {
        Temperature::ONE
    } else {
        Temperature(libm::exp(best.0))
    };
    let clamped = best.0 - lo <= LOG_TOLERANCE || hi - best.0 <= LOG_TOLERANCE;
    if clamped {
        log::warn!(
            "fitted temperature {} sits on the search bound",
            temperature.0
        );
    }
    Ok(TemperatureFit {
        temperature,
        nll: best.1,
        nll_at_one,
        clamped,
    })
}
