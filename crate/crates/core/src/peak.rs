//! Peak demand threshold and the logistic peak indicator.
//!
//! A slot counts as peak when system demand reaches the threshold. The
//! indicator softens that cut-off: `mu = 1 / (1 + exp(-(s - threshold) / k))`
//! with strictness `k` in kW. Small `k` approaches a crisp step; `k = 0` is
//! admitted as the exact step limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{SystemSeries, TimeGrid};

/// How the peak threshold is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakThreshold {
    /// Top `fraction` of slots are peak: threshold at the `1 - fraction`
    /// empirical percentile of system demand.
    Percentile { fraction: f64 },
    /// Fixed threshold, e.g. feeder capacity.
    AbsoluteKw(f64),
}

/// Strictness `k`, either in kW or relative to the resolved threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    Kw(f64),
    /// `k = ratio * |threshold|`; scale-free across feeders.
    RelativeToThreshold(f64),
}

impl Default for Strictness {
    fn default() -> Self {
        Strictness::RelativeToThreshold(0.01)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub threshold: PeakThreshold,
    #[serde(default)]
    pub strictness: Strictness,
}

impl PeakConfig {
    /// Percentile mode with the default relative strictness.
    pub fn percentile(fraction: f64) -> Self {
        Self {
            threshold: PeakThreshold::Percentile { fraction },
            strictness: Strictness::default(),
        }
    }

    pub fn absolute(threshold_kw: f64) -> Self {
        Self {
            threshold: PeakThreshold::AbsoluteKw(threshold_kw),
            strictness: Strictness::default(),
        }
    }

    pub fn with_k_kw(mut self, k: f64) -> Self {
        self.strictness = Strictness::Kw(k);
        self
    }

    fn validate(&self) -> Result<()> {
        if let PeakThreshold::Percentile { fraction } = self.threshold {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "peak fraction must lie in (0, 1), got {fraction}"
                )));
            }
        }
        let k = match self.strictness {
            Strictness::Kw(k) => k,
            Strictness::RelativeToThreshold(r) => r,
        };
        if !k.is_finite() || k < 0.0 {
            return Err(Error::NegativeK(k));
        }
        Ok(())
    }
}

/// Resolved threshold plus the indicator value per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub grid: TimeGrid,
    pub mu: Vec<f64>,
    pub threshold_kw: f64,
    pub k_kw: f64,
}

/// Empirical percentile of system demand at rank `1 - peak_fraction`, with
/// linear interpolation between closest order statistics.
pub fn percentile_threshold(system: &SystemSeries, peak_fraction: f64) -> Result<f64> {
    if !(peak_fraction > 0.0 && peak_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "peak fraction must lie in (0, 1), got {peak_fraction}"
        )));
    }
    percentile(&system.demand, 1.0 - peak_fraction)
}

/// Linear-interpolated percentile of `values` at quantile `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Logistic peak indicator. `k = 0` returns the step limit (0 below the
/// threshold, 1 above, 0.5 at it).
pub fn mu(s_t: f64, threshold: f64, k: f64) -> Result<f64> {
    if k.is_nan() || k < 0.0 {
        return Err(Error::NegativeK(k));
    }
    Ok(mu_unchecked(s_t, threshold, k))
}

#[inline]
pub(crate) fn mu_unchecked(s_t: f64, threshold: f64, k: f64) -> f64 {
    if k == 0.0 {
        return match s_t.partial_cmp(&threshold) {
            Some(std::cmp::Ordering::Less) => 0.0,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 1.0,
        };
    }
    1.0 / (1.0 + (-(s_t - threshold) / k).exp())
}

/// Resolves the threshold for this system and applies the indicator per slot.
pub fn indicator_series(system: &SystemSeries, config: &PeakConfig) -> Result<IndicatorSeries> {
    config.validate()?;
    if system.demand.is_empty() {
        return Err(Error::EmptySeries);
    }
    let threshold_kw = match config.threshold {
        PeakThreshold::Percentile { fraction } => percentile_threshold(system, fraction)?,
        PeakThreshold::AbsoluteKw(kw) => kw,
    };
    let k_kw = match config.strictness {
        Strictness::Kw(k) => k,
        Strictness::RelativeToThreshold(r) => r * threshold_kw.abs(),
    };
    let mu = system
        .demand
        .iter()
        .map(|&s| mu_unchecked(s, threshold_kw, k_kw))
        .collect();
    Ok(IndicatorSeries {
        grid: system.grid,
        mu,
        threshold_kw,
        k_kw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{aggregate_system, MeterSeries, TimeGrid};

    fn system_of(demand: &[f64]) -> SystemSeries {
        let grid = TimeGrid::new(0, 60, demand.len()).unwrap();
        let s = MeterSeries::new("only", grid, demand.to_vec()).unwrap();
        aggregate_system(&[s]).unwrap()
    }

    #[test]
    fn median_of_two_points() {
        let sys = system_of(&[0.0, 10.0]);
        assert_eq!(percentile_threshold(&sys, 0.5).unwrap(), 5.0);
    }

    #[test]
    fn constant_demand_any_fraction() {
        let sys = system_of(&[4.2; 17]);
        for f in [0.1, 0.25, 0.5, 0.9] {
            assert_eq!(percentile_threshold(&sys, f).unwrap(), 4.2);
        }
    }

    #[test]
    fn permutation_of_1_to_100() {
        // 85th percentile with linear interpolation: 85 + 0.15
        let mut vals: Vec<f64> = (1..=100).map(f64::from).collect();
        vals.reverse();
        vals.swap(3, 77);
        let sys = system_of(&vals);
        let th = percentile_threshold(&sys, 0.15).unwrap();
        assert!((th - 85.15).abs() < 1e-12, "{th}");
    }

    #[test]
    fn fraction_bounds_rejected() {
        let sys = system_of(&[1.0, 2.0]);
        assert!(percentile_threshold(&sys, 0.0).is_err());
        assert!(percentile_threshold(&sys, 1.0).is_err());
    }

    #[test]
    fn mu_at_threshold_is_half() {
        for k in [0.001, 1.0, 250.0] {
            assert_eq!(mu(100.0, 100.0, k).unwrap(), 0.5);
        }
        assert_eq!(mu(100.0, 100.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn mu_scalar_case() {
        // 1 / (1 + e^-1)
        let v = mu(110.0, 100.0, 10.0).unwrap();
        assert!((v - 0.7310585786300049).abs() < 1e-15, "{v}");
    }

    #[test]
    fn mu_step_limit_below() {
        assert_eq!(mu(99.999, 100.0, 0.0).unwrap(), 0.0);
        assert_eq!(mu(100.001, 100.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn mu_rejects_negative_k() {
        assert!(matches!(mu(1.0, 1.0, -0.1), Err(Error::NegativeK(_))));
    }

    #[test]
    fn mu_saturates_without_nan() {
        assert_eq!(mu(1e6, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(mu(-1e6, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn absolute_mode_above_max_is_never_peak() {
        let sys = system_of(&[1.0, 2.0, 3.0]);
        let cfg = PeakConfig::absolute(10.0).with_k_kw(0.5);
        let ind = indicator_series(&sys, &cfg).unwrap();
        assert!(ind.mu.iter().all(|&m| m < 0.01), "{:?}", ind.mu);
    }

    #[test]
    fn percentile_mode_top_quarter() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let sys = system_of(&vals);
        let cfg = PeakConfig::percentile(0.25).with_k_kw(1e-9);
        let ind = indicator_series(&sys, &cfg).unwrap();
        // threshold 75.25: slots 76..=100 sit above it
        let above: usize = ind.mu.iter().filter(|&&m| m >= 0.5).count();
        assert_eq!(above, 25);
        assert!((ind.threshold_kw - 75.25).abs() < 1e-12);
    }

    #[test]
    fn constant_system_is_all_half() {
        let sys = system_of(&[7.0; 50]);
        let ind = indicator_series(&sys, &PeakConfig::percentile(0.25)).unwrap();
        assert!(ind.mu.iter().all(|&m| m == 0.5));
    }

    #[test]
    fn relative_strictness_resolves_against_threshold() {
        let vals: Vec<f64> = (1..=100).map(f64::from).collect();
        let sys = system_of(&vals);
        let cfg = PeakConfig::percentile(0.25); // default 1% of threshold
        let ind = indicator_series(&sys, &cfg).unwrap();
        assert!((ind.k_kw - 0.7525).abs() < 1e-12);
    }
}
