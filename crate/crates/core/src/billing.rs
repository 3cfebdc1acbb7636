//! Legacy volumetric bills, the target revenue pool, and proposed
//! grid-access bills.
//!
//! The legacy bill charges each interval's energy at the volumetric rate and
//! compensates (or, in `verbatim` mode, charges) exports at the export rate.
//! The proposed bill splits a fixed revenue pool across customers by their
//! impact shares: `b_i = w_share_i * pi_w * R + v_share_i * pi_v * R`, which
//! conserves the pool by construction since shares sum to one.
//!
//! Bill arithmetic stays in f64 dollars; interval sums accumulate energy
//! first and convert to money once per customer, so 210M-interval periods
//! pick up no per-interval rounding. Statement emission rounds to cents,
//! half-even, via [`Money`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::ImpactReport;
use crate::timeseries::MeterSeries;

/// How exports (negative demand) enter the legacy bill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportSignMode {
    /// Exports earn a credit at the export rate (net metering pays the
    /// exporter).
    Credit,
    /// The literal formula `-rate_export * x` for `x < 0`, which yields a
    /// positive charge; kept for reproduction studies.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffConfig {
    /// $/kWh for imported energy.
    pub volumetric_rate: f64,
    /// $/kWh applied to exported energy.
    pub export_rate: f64,
    pub export_sign_mode: ExportSignMode,
    /// Fraction of target revenue allocated to the magnitude factor.
    pub pi_w_fraction: f64,
    /// Fraction allocated to the variability factor.
    pub pi_v_fraction: f64,
    /// Optional assessment window `[start, end)` in epoch seconds; `None`
    /// bills the whole grid.
    pub assessment: Option<(i64, i64)>,
}

impl Default for TariffConfig {
    fn default() -> Self {
        Self {
            volumetric_rate: 0.05,
            export_rate: 0.02,
            export_sign_mode: ExportSignMode::Credit,
            pi_w_fraction: 0.75,
            pi_v_fraction: 0.25,
            assessment: None,
        }
    }
}

impl TariffConfig {
    pub fn validate(&self) -> Result<()> {
        if self.volumetric_rate < 0.0 || self.export_rate < 0.0 {
            return Err(Error::InvalidConfig("rates must be >= 0".into()));
        }
        if ((self.pi_w_fraction + self.pi_v_fraction) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "pi_w + pi_v must equal 1, got {} + {}",
                self.pi_w_fraction, self.pi_v_fraction
            )));
        }
        if self.pi_w_fraction < 0.0 || self.pi_v_fraction < 0.0 {
            return Err(Error::InvalidConfig("pi fractions must be >= 0".into()));
        }
        Ok(())
    }
}

/// Integer micro-dollars, used at statement emission. Conversion from f64
/// dollars rounds half-even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Money(pub i64);

impl Money {
    pub fn from_usd(usd: f64) -> Self {
        Money((usd * 1e6).round_ties_even() as i64)
    }

    pub fn usd(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Renders in dollars at cent precision, half-even.
    pub fn to_cents_string(self) -> String {
        let cents = (self.0 as f64 / 10_000.0).round_ties_even() as i64;
        let sign = if cents < 0 { "-" } else { "" };
        let abs = cents.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.to_cents_string())
    }
}

/// Slot range of the assessment window on this series' grid.
fn assessment_slots(series: &MeterSeries, tariff: &TariffConfig) -> (usize, usize) {
    match tariff.assessment {
        None => (0, series.values.len()),
        Some((start, end)) => {
            let g = &series.grid;
            let step = i64::from(g.interval_s);
            let lo = ((start - g.start_utc).max(0) + step - 1) / step;
            let hi = ((end - g.start_utc).max(0) + step - 1) / step;
            let lo = (lo.max(0) as usize).min(series.values.len());
            let hi = (hi.max(0) as usize).min(series.values.len());
            (lo, hi.max(lo))
        }
    }
}

/// Legacy volumetric bill for one customer over the assessment period, in
/// dollars. Import and export energy accumulate separately and meet the
/// rates once at the end.
pub fn bill_volumetric(series: &MeterSeries, tariff: &TariffConfig) -> f64 {
    let (lo, hi) = assessment_slots(series, tariff);
    let dt_h = series.grid.interval_hours();
    let mut import_kw = 0.0; // sum of x where x >= 0
    let mut export_kw = 0.0; // sum of x where x < 0 (negative)
    for &x in &series.values[lo..hi] {
        if x >= 0.0 {
            import_kw += x;
        } else {
            export_kw += x;
        }
    }
    let import_usd = tariff.volumetric_rate * import_kw * dt_h;
    let export_usd = match tariff.export_sign_mode {
        // export_kw is negative: a credit
        ExportSignMode::Credit => tariff.export_rate * export_kw * dt_h,
        // literal sign: a positive charge
        ExportSignMode::Verbatim => -tariff.export_rate * export_kw * dt_h,
    };
    import_usd + export_usd
}

/// Sums per-customer legacy bills into the revenue pool for the proposed
/// model.
pub fn target_revenue(old_bills: &[f64]) -> Result<f64> {
    if old_bills.is_empty() {
        return Err(Error::EmptyFleet);
    }
    Ok(old_bills.iter().sum())
}

/// Proposed grid-access bills: each customer's share of the two allocation
/// pools. Bills may be negative (a net reward).
pub fn bill_grid_access(
    report: &ImpactReport,
    revenue: f64,
    tariff: &TariffConfig,
) -> Result<Vec<f64>> {
    tariff.validate()?;
    let w_sum: f64 = report.customers.iter().map(|c| c.w_share).sum();
    let v_sum: f64 = report.customers.iter().map(|c| c.v_share).sum();
    if (w_sum - 1.0).abs() > 1e-6 || (v_sum - 1.0).abs() > 1e-6 {
        return Err(Error::DegenerateShares(format!(
            "share sums {w_sum} / {v_sum} are not 1"
        )));
    }
    let pool_w = tariff.pi_w_fraction * revenue;
    let pool_v = tariff.pi_v_fraction * revenue;
    Ok(report
        .customers
        .iter()
        .map(|c| c.w_share * pool_w + c.v_share * pool_v)
        .collect())
}

/// One customer's line in a bill comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillRow {
    pub customer_id: String,
    pub bill_old: f64,
    pub bill_new: f64,
    /// `100 * (new - old) / |old|`; `None` when the old bill is zero (the
    /// absolute delta still lives in `bill_new - bill_old`).
    pub pct_change: Option<f64>,
}

/// Per-customer old and new bills plus fleet totals, ascending customer id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillStatement {
    pub rows: Vec<BillRow>,
    pub total_old: f64,
    pub total_new: f64,
    /// The revenue pool the new bills were drawn from.
    pub total_target_revenue: f64,
}

pub fn pct_change(old: f64, new: f64) -> Option<f64> {
    if old == 0.0 {
        None
    } else {
        Some(100.0 * (new - old) / old.abs())
    }
}

/// Pairs old and new bills by customer id.
pub fn compare_bills(
    old: &[(String, f64)],
    new: &[(String, f64)],
    revenue: f64,
) -> Result<BillStatement> {
    let old_map: BTreeMap<&str, f64> = old.iter().map(|(id, b)| (id.as_str(), *b)).collect();
    let new_map: BTreeMap<&str, f64> = new.iter().map(|(id, b)| (id.as_str(), *b)).collect();
    if old_map.len() != old.len() || new_map.len() != new.len() {
        return Err(Error::CustomerSetMismatch("duplicate customer id".into()));
    }
    if old_map.len() != new_map.len() {
        return Err(Error::CustomerSetMismatch(format!(
            "{} old vs {} new customers",
            old_map.len(),
            new_map.len()
        )));
    }
    let mut rows = Vec::with_capacity(old_map.len());
    for (id, &bill_old) in &old_map {
        let bill_new = *new_map
            .get(id)
            .ok_or_else(|| Error::CustomerSetMismatch(format!("`{id}` missing from new bills")))?;
        rows.push(BillRow {
            customer_id: id.to_string(),
            bill_old,
            bill_new,
            pct_change: pct_change(bill_old, bill_new),
        });
    }
    let total_old = rows.iter().map(|r| r.bill_old).sum();
    let total_new = rows.iter().map(|r| r.bill_new).sum();
    Ok(BillStatement {
        rows,
        total_old,
        total_new,
        total_target_revenue: revenue,
    })
}

/// One histogram bin `[lo, hi)` with its count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Fixed-width histogram over `values`, bins aligned to multiples of
/// `bin_width`. Empty bins inside the range are kept so tables plot cleanly.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<HistBin> {
    if values.is_empty() || bin_width.is_nan() || bin_width <= 0.0 {
        return Vec::new();
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (min / bin_width).floor() as i64;
    let last = (max / bin_width).floor() as i64;
    let mut bins: Vec<HistBin> = (first..=last)
        .map(|i| HistBin {
            lo: i as f64 * bin_width,
            hi: (i + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    let last_idx = bins.len() - 1;
    for &v in values {
        let idx = ((v / bin_width).floor() as i64 - first) as usize;
        bins[idx.min(last_idx)].count += 1;
    }
    bins
}
