//! Fried-parameter estimation from measured transmittance traces.
//!
//! Under first-order (tilt-dominated) turbulence the fundamental-mode
//! transmittance follows `p(T) = gamma T^(gamma-1)`, so a trace of fades
//! pins down `gamma` by maximum likelihood:
//!
//! ```text
//! gamma_hat = n / (-sum ln T_i),    SE(gamma_hat) = gamma_hat / sqrt(n)
//! ```
//!
//! From there the chain is deterministic: `C_a = 2 / (w^2 gamma)` and, given
//! the turbulence scales and the mode filter, the r0-independent variance
//! kernel inverts `C_a = r0^(-5/3) k_a` for the Fried parameter. Confidence
//! intervals propagate the (asymptotically normal) uncertainty of
//! `ln gamma_hat` through the `r0 ~ gamma^(3/5)` power law.

use crate::error::{Error, Result};
use crate::montecarlo::{Binning, EmpiricalPdf};
use crate::spectrum::{BeamParams, ModeFilter, VarianceKernel};

/// Exact-zero readings are treated as dropouts (blocked beam, lost lock) and
/// excluded from the fit, but counted so the caller can judge data quality.
#[derive(Debug, Clone)]
pub struct TransmittanceSeries {
    samples: Vec<f64>,
    rejected_zeros: usize,
}

/// Measured values may poke above 1 by instrument noise; accept up to this
/// much overshoot and clamp it to exactly 1.
const OVERSHOOT_TOL: f64 = 1e-9;

impl TransmittanceSeries {
    /// Validate raw transmittance readings.
    ///
    /// Rules: `NaN`, negative values and values above `1 + 1e-9` are data
    /// errors; exact zeros are dropped as dropouts; slight overshoot is
    /// clamped to 1. Retained samples all lie in (0, 1].
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut samples = Vec::new();
        let mut rejected_zeros = 0usize;
        for (i, t) in values.into_iter().enumerate() {
            if !(0.0..=1.0 + OVERSHOOT_TOL).contains(&t) {
                return Err(Error::Data(format!(
                    "sample {} is not a transmittance: {t}",
                    i + 1
                )));
            }
            if t == 0.0 {
                rejected_zeros += 1;
            } else {
                samples.push(t.min(1.0));
            }
        }
        Ok(Self {
            samples,
            rejected_zeros,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Number of exact-zero readings dropped as dropouts.
    pub fn rejected_count(&self) -> usize {
        self.rejected_zeros
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Maximum-likelihood power-law fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub gamma: f64,
    /// Asymptotic standard error `gamma / sqrt(n)`.
    pub std_error: f64,
    pub samples_used: usize,
}

/// Minimum number of retained samples for a meaningful fit.
const MIN_SAMPLES: usize = 100;

/// Fit `p(T) = gamma T^(gamma-1)` by maximum likelihood.
pub fn fit_power_law(series: &TransmittanceSeries) -> Result<PowerLawFit> {
    let n = series.len();
    if n < MIN_SAMPLES {
        return Err(Error::Data(format!(
            "power-law fit needs at least {MIN_SAMPLES} retained samples, got {n}"
        )));
    }
    let neg_log_sum: f64 = series.samples.iter().map(|t| -t.ln()).sum();
    if neg_log_sum == 0.0 {
        return Err(Error::NoMeasurableTurbulence);
    }
    let gamma = n as f64 / neg_log_sum;
    Ok(PowerLawFit {
        gamma,
        std_error: gamma / (n as f64).sqrt(),
        samples_used: n,
    })
}

/// Alternative exponent estimate: least squares of `ln density` against
/// `ln T` over a histogram (slope + 1). Coarser than the likelihood fit;
/// useful as a cross-check that the trace really is power-law shaped.
pub fn fit_power_law_histogram(series: &TransmittanceSeries, bins: usize) -> Result<f64> {
    if series.len() < MIN_SAMPLES {
        return Err(Error::Data(format!(
            "histogram fit needs at least {MIN_SAMPLES} retained samples, got {}",
            series.len()
        )));
    }
    let hist = EmpiricalPdf::from_samples(series.samples(), &Binning::Uniform { bins })?;
    let mut points = Vec::new();
    for (d, e) in hist.density().iter().zip(hist.edges().windows(2)) {
        if *d > 0.0 {
            let centre = 0.5 * (e[0] + e[1]);
            points.push((centre.ln(), d.ln()));
        }
    }
    if points.len() < 3 {
        return Err(Error::Data(
            "histogram fit needs at least three occupied bins".into(),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in &points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let gamma = slope + 1.0;
    if gamma.is_finite() {
        Ok(gamma)
    } else {
        Err(Error::Numeric("histogram slope fit degenerated".into()))
    }
}

/// Invert `gamma = 2 / (w^2 C_a)` for the tilt variance.
pub fn c_a_from_gamma(gamma: f64, beam: &BeamParams) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power-law exponent must be positive and finite, got {gamma}"
        )));
    }
    Ok(2.0 / (beam.waist() * beam.waist() * gamma))
}

/// Invert the filtered variance integral for the Fried parameter.
pub fn r0_from_c_a(
    c_a: f64,
    inner_scale: f64,
    outer_scale: f64,
    filter: &ModeFilter,
) -> Result<f64> {
    VarianceKernel::compute(inner_scale, outer_scale, filter)?.r0_from_c_a(c_a)
}

/// Full estimation result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedEstimate {
    pub fit: PowerLawFit,
    pub c_a: f64,
    pub r0: f64,
    /// 95% confidence interval on r0.
    pub r0_interval: (f64, f64),
    /// Dropout count carried over from the input series.
    pub rejected_count: usize,
}

/// Estimate the Fried parameter from a transmittance trace.
pub fn estimate_r0(
    series: &TransmittanceSeries,
    beam: &BeamParams,
    inner_scale: f64,
    outer_scale: f64,
    filter: &ModeFilter,
) -> Result<FriedEstimate> {
    let fit = fit_power_law(series)?;
    let c_a = c_a_from_gamma(fit.gamma, beam)?;
    let kernel = VarianceKernel::compute(inner_scale, outer_scale, filter)?;
    let r0 = kernel.r0_from_c_a(c_a)?;

    // ln gamma_hat is asymptotically normal with standard deviation
    // 1/sqrt(n); r0 scales as gamma^(3/5).
    let half_width = 0.6 * 1.96 / (fit.samples_used as f64).sqrt();
    let r0_interval = (r0 * (-half_width).exp(), r0 * half_width.exp());

    Ok(FriedEstimate {
        fit,
        c_a,
        r0,
        r0_interval,
        rejected_count: series.rejected_count(),
    })
}

// ---------------------------------------------------------------------------
