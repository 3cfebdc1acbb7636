//! Regular-grid demand time series and fleet-level aggregation.
//!
//! All series in a fleet live on one shared [`TimeGrid`]. Demand is signed kW:
//! negative values mean net export (generation exceeding consumption). Fleet
//! sums always accumulate in ascending `customer_id` order so results are
//! reproducible regardless of input order or parallel schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Seconds per hour; grid intervals must divide this evenly so kW samples
/// convert to kWh per interval without remainder.
pub const SECONDS_PER_HOUR: u32 = 3600;

/// A regular sampling grid: UTC start, fixed interval, sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Unix epoch seconds (UTC) of the first sample.
    pub start_utc: i64,
    /// Sample spacing in seconds; must divide one hour evenly.
    pub interval_s: u32,
    /// Number of samples, >= 1.
    pub count: usize,
}

impl TimeGrid {
    pub fn new(start_utc: i64, interval_s: u32, count: usize) -> Result<Self> {
        if interval_s == 0 || !SECONDS_PER_HOUR.is_multiple_of(interval_s) {
            return Err(Error::InvalidConfig(format!(
                "interval {interval_s}s must divide one hour evenly"
            )));
        }
        if count == 0 {
            return Err(Error::InvalidConfig("grid count must be >= 1".into()));
        }
        Ok(Self {
            start_utc,
            interval_s,
            count,
        })
    }

    /// Epoch seconds of slot `t`.
    pub fn timestamp(&self, t: usize) -> i64 {
        self.start_utc + (t as i64) * i64::from(self.interval_s)
    }

    /// Interval length in hours (exact: interval divides 3600).
    pub fn interval_hours(&self) -> f64 {
        f64::from(self.interval_s) / f64::from(SECONDS_PER_HOUR)
    }

    /// Seconds since local midnight for slot `t`, under a fixed UTC offset.
    pub fn local_seconds_of_day(&self, t: usize, tz_offset_s: i32) -> u32 {
        let local = self.timestamp(t) + i64::from(tz_offset_s);
        local.rem_euclid(86_400) as u32
    }
}

/// One customer's signed demand series in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterSeries {
    pub customer_id: String,
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl MeterSeries {
    /// Builds a series, checking length and finiteness.
    pub fn new(customer_id: impl Into<String>, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let customer_id = customer_id.into();
        if values.len() != grid.count {
            return Err(Error::GridMismatch(format!(
                "customer `{customer_id}`: {} values on a grid of {} slots",
                values.len(),
                grid.count
            )));
        }
        if let Some(slot) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                customer: customer_id,
                slot,
            });
        }
        Ok(Self {
            customer_id,
            grid,
            values,
        })
    }
}

/// First differences of one customer's demand; `deltas[0] = 0` by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    pub customer_id: String,
    pub grid: TimeGrid,
    pub deltas: Vec<f64>,
}

/// Total system demand and its first differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSeries {
    pub grid: TimeGrid,
    /// Fleet-wide demand sum per slot, kW.
    pub demand: Vec<f64>,
    /// `demand[t] - demand[t-1]`, with `variability[0] = 0`.
    pub variability: Vec<f64>,
}

fn check_shared_grid<'a, I>(mut grids: I) -> Result<TimeGrid>
where
    I: Iterator<Item = (&'a str, TimeGrid)>,
{
    let (first_id, grid) = grids.next().ok_or(Error::EmptyFleet)?;
    for (id, g) in grids {
        if g != grid {
            return Err(Error::GridMismatch(format!(
                "customer `{id}` is on a different grid than `{first_id}`"
            )));
        }
    }
    Ok(grid)
}

/// Indices of `fleet` in ascending `customer_id` order.
fn id_order(fleet: &[MeterSeries]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| fleet[a].customer_id.cmp(&fleet[b].customer_id));
    order
}

fn diff_in_place(values: &[f64], deltas: &mut [f64]) {
    deltas[0] = 0.0;
    for t in 1..values.len() {
        deltas[t] = values[t] - values[t - 1];
    }
}

/// First differences with `deltas[0] = 0`.
pub fn diff(series: &MeterSeries) -> DiffSeries {
    let mut deltas = vec![0.0; series.values.len()];
    diff_in_place(&series.values, &mut deltas);
    DiffSeries {
        customer_id: series.customer_id.clone(),
        grid: series.grid,
        deltas,
    }
}

/// Downsamples by averaging whole windows; a trailing partial window is
/// dropped. The mean keeps kW semantics (resampling preserves energy over
/// covered windows).
pub fn resample(series: &MeterSeries, target_interval_s: u32) -> Result<MeterSeries> {
    let source_s = series.grid.interval_s;
    if target_interval_s == 0 || !target_interval_s.is_multiple_of(source_s) {
        return Err(Error::NonMultipleInterval {
            source_s,
            target_s: target_interval_s,
        });
    }
    let factor = (target_interval_s / source_s) as usize;
    if factor == 1 {
        return Ok(series.clone());
    }
    let out_count = series.values.len() / factor;
    if out_count == 0 {
        return Err(Error::GridMismatch(format!(
            "customer `{}`: no whole {target_interval_s}s window in {} samples",
            series.customer_id,
            series.values.len()
        )));
    }
    let grid = TimeGrid::new(series.grid.start_utc, target_interval_s, out_count)?;
    let values: Vec<f64> = series.values[..out_count * factor]
        .chunks_exact(factor)
        .map(|w| w.iter().sum::<f64>() / factor as f64)
        .collect();
    MeterSeries::new(series.customer_id.clone(), grid, values)
}

/// Sums a fleet into total system demand and its variability.
///
/// Accumulation runs per time slot over customers in ascending id order, so
/// the result is identical whatever the slice order or thread count.
pub fn aggregate_system(fleet: &[MeterSeries]) -> Result<SystemSeries> {
    let grid = check_shared_grid(fleet.iter().map(|s| (s.customer_id.as_str(), s.grid)))?;
    let order = id_order(fleet);
    let mut demand = vec![0.0; grid.count];
    par::for_each_time_chunk(&mut demand, |offset, chunk| {
        for &i in &order {
            let vals = &fleet[i].values[offset..offset + chunk.len()];
            for (acc, v) in chunk.iter_mut().zip(vals) {
                *acc += *v;
            }
        }
    });
    let mut variability = vec![0.0; grid.count];
    diff_in_place(&demand, &mut variability);
    Ok(SystemSeries {
        grid,
        demand,
        variability,
    })
}

/// Pointwise sum of a customer group under a new id (ascending-id order, same
/// accumulation as [`aggregate_system`]).
pub fn sum_series(group: &[MeterSeries], new_id: impl Into<String>) -> Result<MeterSeries> {
    if group.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let grid = check_shared_grid(group.iter().map(|s| (s.customer_id.as_str(), s.grid)))?;
    let order = id_order(group);
    let mut values = vec![0.0; grid.count];
    par::for_each_time_chunk(&mut values, |offset, chunk| {
        for &i in &order {
            let vals = &group[i].values[offset..offset + chunk.len()];
            for (acc, v) in chunk.iter_mut().zip(vals) {
                *acc += *v;
            }
        }
    });
    MeterSeries::new(new_id, grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(count: usize) -> TimeGrid {
        TimeGrid::new(0, 60, count).unwrap()
    }

    fn series(id: &str, values: &[f64]) -> MeterSeries {
        MeterSeries::new(id, grid(values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn grid_rejects_non_divisor_interval() {
        assert!(TimeGrid::new(0, 7, 10).is_err());
        assert!(TimeGrid::new(0, 0, 10).is_err());
        assert!(TimeGrid::new(0, 900, 0).is_err());
        assert!(TimeGrid::new(0, 900, 4).is_ok());
    }

    #[test]
    fn meter_series_rejects_nan() {
        let err = MeterSeries::new("a", grid(2), vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { slot: 1, .. }));
    }

    #[test]
    fn diff_constant_is_zero() {
        let d = diff(&series("a", &[5.0, 5.0, 5.0]));
        assert_eq!(d.deltas, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn diff_hand_case() {
        let d = diff(&series("a", &[0.0, 1.0, 3.0, 2.0]));
        assert_eq!(d.deltas, vec![0.0, 1.0, 2.0, -1.0]);
    }

    #[test]
    fn diff_single_element() {
        let d = diff(&series("a", &[7.0]));
        assert_eq!(d.deltas, vec![0.0]);
    }

    #[test]
    fn resample_constant() {
        let out = resample(&series("a", &[1.0, 1.0, 1.0, 1.0]), 120).unwrap();
        assert_eq!(out.values, vec![1.0, 1.0]);
        assert_eq!(out.grid.interval_s, 120);
    }

    #[test]
    fn resample_pair_means() {
        // hand mean of pairs: [0,2]->1, [4,6]->5
        let out = resample(&series("a", &[0.0, 2.0, 4.0, 6.0]), 120).unwrap();
        assert_eq!(out.values, vec![1.0, 5.0]);
    }

    #[test]
    fn resample_identity() {
        let s = series("a", &[0.5, 1.5, 2.5]);
        let out = resample(&s, 60).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn resample_drops_trailing_partial() {
        let out = resample(&series("a", &[1.0, 3.0, 9.0]), 120).unwrap();
        assert_eq!(out.values, vec![2.0]);
    }

    #[test]
    fn resample_rejects_non_multiple() {
        let s = MeterSeries::new("a", TimeGrid::new(0, 120, 4).unwrap(), vec![0.0; 4]).unwrap();
        let err = resample(&s, 180).unwrap_err();
        assert!(matches!(err, Error::NonMultipleInterval { .. }));
    }

    #[test]
    fn aggregate_single_customer_is_identity() {
        let s = series("a", &[1.0, 2.0, 4.0]);
        let sys = aggregate_system(std::slice::from_ref(&s)).unwrap();
        assert_eq!(sys.demand, s.values);
        assert_eq!(sys.variability, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn aggregate_two_customers() {
        let fleet = vec![series("a", &[1.0, 2.0]), series("b", &[3.0, 4.0])];
        let sys = aggregate_system(&fleet).unwrap();
        assert_eq!(sys.demand, vec![4.0, 6.0]);
        assert_eq!(sys.variability, vec![0.0, 2.0]);
    }

    #[test]
    fn aggregate_rejects_empty_and_mismatched() {
        assert!(matches!(aggregate_system(&[]), Err(Error::EmptyFleet)));
        let fleet = vec![series("a", &[1.0]), series("b", &[1.0, 2.0])];
        assert!(matches!(
            aggregate_system(&fleet),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn aggregate_order_independent() {
        let a = series("a", &[0.1, 0.2, 0.7]);
        let b = series("b", &[1.3, 0.4, 0.9]);
        let c = series("c", &[2.2, 5.5, 0.01]);
        let fwd = aggregate_system(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let rev = aggregate_system(&[c, b, a]).unwrap();
        assert_eq!(fwd.demand, rev.demand);
    }

    #[test]
    fn sum_series_of_one_renames() {
        let s = series("a", &[1.0, 2.0]);
        let out = sum_series(std::slice::from_ref(&s), "g").unwrap();
        assert_eq!(out.values, s.values);
        assert_eq!(out.customer_id, "g");
    }

    #[test]
    fn sum_series_partial_cancellation() {
        // EV spike plus PV dip over a 5-step toy pair
        let ev = series("ev", &[0.0, 6.6, 6.6, 0.0, 0.0]);
        let pv = series("pv", &[0.0, -3.0, -5.0, -2.0, 0.0]);
        let net = sum_series(&[ev, pv], "pair").unwrap();
        let expect = [0.0, 6.6 - 3.0, 6.6 - 5.0, -2.0, 0.0];
        assert_eq!(net.values, expect);
    }

    #[test]
    fn sum_of_all_equals_aggregate_demand() {
        let fleet = vec![
            series("a", &[0.31, 1.7, 2.9]),
            series("b", &[0.11, 0.13, 0.17]),
            series("c", &[5.0, -1.25, 0.5]),
        ];
        let total = sum_series(&fleet, "all").unwrap();
        let sys = aggregate_system(&fleet).unwrap();
        assert_eq!(total.values, sys.demand);
    }

    #[test]
    fn system_variability_is_sum_of_member_diffs() {
        let fleet = vec![
            series("a", &[0.4, 1.9, 0.2, 0.2]),
            series("b", &[2.0, 0.1, 0.1, 3.3]),
        ];
        let sys = aggregate_system(&fleet).unwrap();
        let da = diff(&fleet[0]);
        let db = diff(&fleet[1]);
        for t in 0..4 {
            let direct = da.deltas[t] + db.deltas[t];
            assert!((sys.variability[t] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn local_seconds_respects_offset() {
        // start at 2016-01-01T00:00:00Z
        let g = TimeGrid::new(1_451_606_400, 60, 1_440).unwrap();
        assert_eq!(g.local_seconds_of_day(0, 0), 0);
        assert_eq!(g.local_seconds_of_day(60, 0), 3600);
        // UTC-6: midnight UTC is 18:00 local the previous day
        assert_eq!(g.local_seconds_of_day(0, -6 * 3600), 18 * 3600);
    }
}
