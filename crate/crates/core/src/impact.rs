//! Grid impact factors: demand magnitude W, demand variability V, and their
//! normalized shares.
//!
//! `W_i` is the peak-weighted demand sum `sum_t x_i^t * mu^t`, computed both
//! element-wise and as a blocked matrix-vector product; the two routes must
//! agree. `V_i` is the Pearson correlation between a customer's demand
//! changes and total system variability; flat series correlate to 0 by
//! convention. Shares divide each factor by the fleet total and may be
//! negative (exports during peak, counter-cyclical variability).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::peak::IndicatorSeries;
use crate::timeseries::{DiffSeries, MeterSeries, SystemSeries};

/// Relative tolerance for the element-wise vs matrix W cross-check.
const W_ROUTE_TOL: f64 = 1e-9;
/// Share totals within this relative band of zero are degenerate.
const DEGENERATE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactOptions {
    /// Clamp negative per-customer W to zero (policy overlay; default off,
    /// keeping the factor linear in demand).
    #[serde(default)]
    pub clamp_negative_w: bool,
    /// Correlate each customer against system variability with the
    /// customer's own contribution removed (default off: literal reading).
    #[serde(default)]
    pub leave_one_out: bool,
}

/// One customer's factors and shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerImpact {
    pub customer_id: String,
    pub w: f64,
    pub v: f64,
    pub w_share: f64,
    pub v_share: f64,
}

/// Per-customer factors plus fleet totals, in ascending customer-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub customers: Vec<CustomerImpact>,
    pub sum_w: f64,
    pub sum_v: f64,
}

fn check_grid(fleet: &[MeterSeries], indicator: &IndicatorSeries) -> Result<()> {
    for s in fleet {
        if s.grid != indicator.grid {
            return Err(Error::GridMismatch(format!(
                "customer `{}` is not on the indicator grid",
                s.customer_id
            )));
        }
    }
    Ok(())
}

fn dot(xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| x * y).sum()
}

/// W via the element-wise route: one left-to-right fold per customer.
fn w_elementwise(values: &[f64], mu: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, m) in values.iter().zip(mu) {
        acc += x * m;
    }
    acc
}

/// W via the matrix route: the fleet-by-slots matrix times the indicator
/// vector, evaluated as block dot products summed per customer. The blocked
/// association differs from the element-wise fold, making this an
/// independent arithmetic path.
fn w_matrix(values: &[f64], mu: &[f64]) -> f64 {
    values
        .chunks(par::TIME_CHUNK)
        .zip(mu.chunks(par::TIME_CHUNK))
        .map(|(xs, ms)| dot(xs, ms))
        .sum()
}

/// Per-customer W over the fleet, in ascending customer-id order.
///
/// Both routes are evaluated and cross-checked; a disagreement beyond
/// 1e-9 relative indicates a kernel bug and panics.
pub fn demand_magnitude(fleet: &[MeterSeries], indicator: &IndicatorSeries) -> Result<Vec<f64>> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    check_grid(fleet, indicator)?;
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| fleet[a].customer_id.cmp(&fleet[b].customer_id));
    let sorted: Vec<&MeterSeries> = order.iter().map(|&i| &fleet[i]).collect();
    Ok(demand_magnitude_sorted(&sorted, indicator))
}

/// Pearson correlation between one customer's demand changes and system
/// variability. Returns 0 when either sequence has zero variance.
pub fn demand_variability(dx: &DiffSeries, system: &SystemSeries) -> Result<f64> {
    pearson(&dx.deltas, &system.variability)
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        num += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(0.0);
    }
    Ok(num / (var_x.sqrt() * var_y.sqrt()))
}

/// Divides each value by the total. Negative shares are allowed; a total
/// near zero (relative to the values' scale) has no meaningful split and is
/// rejected so billing can refuse rather than divide.
pub fn shares(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let total: f64 = values.iter().sum();
    let scale: f64 = values.iter().map(|v| v.abs()).sum();
    if scale == 0.0 || total.abs() < DEGENERATE_REL * scale {
        return Err(Error::DegenerateTotal { sum: total, scale });
    }
    Ok(values.iter().map(|v| v / total).collect())
}

/// Assembles W, V, and both share vectors for a fleet.
pub fn impact_report(
    fleet: &[MeterSeries],
    indicator: &IndicatorSeries,
    system: &SystemSeries,
    options: &ImpactOptions,
) -> Result<ImpactReport> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    check_grid(fleet, indicator)?;
    if system.grid != indicator.grid {
        return Err(Error::GridMismatch(
            "system and indicator grids differ".into(),
        ));
    }
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| fleet[a].customer_id.cmp(&fleet[b].customer_id));
    let sorted: Vec<&MeterSeries> = order.iter().map(|&i| &fleet[i]).collect();

    let mut w = demand_magnitude_sorted(&sorted, indicator);
    if options.clamp_negative_w {
        for wi in &mut w {
            if *wi < 0.0 {
                *wi = 0.0;
            }
        }
    }

    let leave_one_out = options.leave_one_out;
    let v = par::map_indexed(sorted.len(), |i| {
        let s = sorted[i];
        let mut deltas = vec![0.0; s.values.len()];
        for (d, w) in deltas[1..].iter_mut().zip(s.values.windows(2)) {
            *d = w[1] - w[0];
        }
        if leave_one_out {
            let beta: Vec<f64> = system
                .variability
                .iter()
                .zip(&deltas)
                .map(|(b, d)| b - d)
                .collect();
            pearson(&deltas, &beta).expect("lengths match by construction")
        } else {
            pearson(&deltas, &system.variability).expect("lengths match by construction")
        }
    });

    let w_share = shares(&w)?;
    let v_share = shares(&v)?;
    let sum_w = w.iter().sum();
    let sum_v = v.iter().sum();
    let customers = sorted
        .iter()
        .enumerate()
        .map(|(i, s)| CustomerImpact {
            customer_id: s.customer_id.clone(),
            w: w[i],
            v: v[i],
            w_share: w_share[i],
            v_share: v_share[i],
        })
        .collect();
    Ok(ImpactReport {
        customers,
        sum_w,
        sum_v,
    })
}

/// Same as [`demand_magnitude`] on a pre-sorted fleet view.
fn demand_magnitude_sorted(sorted: &[&MeterSeries], indicator: &IndicatorSeries) -> Vec<f64> {
    par::map_indexed(sorted.len(), |i| {
        let s = sorted[i];
        let elementwise = w_elementwise(&s.values, &indicator.mu);
        let matrix = w_matrix(&s.values, &indicator.mu);
        let scale = elementwise.abs().max(matrix.abs()).max(1.0);
        assert!(
            (elementwise - matrix).abs() <= W_ROUTE_TOL * scale,
            "W routes disagree for `{}`: {elementwise} vs {matrix}",
            s.customer_id
        );
        elementwise
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peak::{indicator_series, PeakConfig};
    use crate::timeseries::{aggregate_system, diff, MeterSeries, TimeGrid};

    fn grid(count: usize) -> TimeGrid {
        TimeGrid::new(0, 60, count).unwrap()
    }

    fn series(id: &str, values: &[f64]) -> MeterSeries {
        MeterSeries::new(id, grid(values.len()), values.to_vec()).unwrap()
    }

    fn indicator_of(mu: &[f64]) -> IndicatorSeries {
        IndicatorSeries {
            grid: grid(mu.len()),
            mu: mu.to_vec(),
            threshold_kw: 0.0,
            k_kw: 1.0,
        }
    }

    #[test]
    fn w_with_saturated_indicator_is_total_demand() {
        let fleet = vec![series("a", &[1.0, 2.0, 3.0])];
        let w = demand_magnitude(&fleet, &indicator_of(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(w, vec![6.0]);
    }

    #[test]
    fn w_is_linear_in_mu() {
        let fleet = vec![series("a", &[1.0, 2.0, 3.0])];
        let w = demand_magnitude(&fleet, &indicator_of(&[0.5, 0.5, 0.5])).unwrap();
        assert_eq!(w, vec![3.0]);
    }

    #[test]
    fn w_hand_matrix_product() {
        // X = [[1,2],[3,4]], mu = [1,0] -> W = [1,3]
        let fleet = vec![series("a", &[1.0, 2.0]), series("b", &[3.0, 4.0])];
        let w = demand_magnitude(&fleet, &indicator_of(&[1.0, 0.0])).unwrap();
        assert_eq!(w, vec![1.0, 3.0]);
    }

    #[test]
    fn w_rejects_grid_mismatch() {
        let fleet = vec![series("a", &[1.0, 2.0])];
        let err = demand_magnitude(&fleet, &indicator_of(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn v_self_correlation_is_one() {
        let s = series("a", &[0.0, 1.0, 0.5, 2.0, 1.5]);
        let sys = aggregate_system(std::slice::from_ref(&s)).unwrap();
        let v = demand_variability(&diff(&s), &sys).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn v_anti_correlation_is_minus_one() {
        let s = series("a", &[0.0, 1.0, 0.5, 2.0, 1.5]);
        let sys = aggregate_system(std::slice::from_ref(&s)).unwrap();
        let neg = series("n", &[0.0, -1.0, -0.5, -2.0, -1.5]);
        let v = demand_variability(&diff(&neg), &sys).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn v_flat_customer_is_zero() {
        let flat = series("f", &[3.0; 5]);
        let sys = aggregate_system(&[series("a", &[0.0, 1.0, 0.5, 2.0, 1.5])]).unwrap();
        assert_eq!(demand_variability(&diff(&flat), &sys).unwrap(), 0.0);
    }

    #[test]
    fn v_hand_pearson_case() {
        // dx = [0,1,-1,0], beta = [0,2,-2,4]
        // means 0 and 1; num = 4; var_x = 2; var_y = 20; r = 4/sqrt(40)
        let r = pearson(&[0.0, 1.0, -1.0, 0.0], &[0.0, 2.0, -2.0, 4.0]).unwrap();
        assert!((r - 4.0 / 40f64.sqrt()).abs() < 1e-15, "{r}");
        assert!((r - 0.6324555320336759).abs() < 1e-12);
    }

    #[test]
    fn v_length_mismatch() {
        assert!(matches!(
            pearson(&[0.0, 1.0], &[0.0, 1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn shares_symmetry() {
        assert_eq!(shares(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn shares_direct_ratio() {
        assert_eq!(shares(&[3.0, 1.0]).unwrap(), vec![0.75, 0.25]);
    }

    #[test]
    fn shares_allow_negative() {
        assert_eq!(shares(&[2.0, -1.0, 1.0]).unwrap(), vec![1.0, -0.5, 0.5]);
    }

    #[test]
    fn shares_degenerate_total() {
        let err = shares(&[1.0, -1.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTotal { .. }));
        assert!(matches!(
            shares(&[0.0, 0.0]),
            Err(Error::DegenerateTotal { .. })
        ));
    }

    #[test]
    fn report_single_customer_has_unit_shares() {
        let fleet = vec![series("a", &[1.0, 2.0, 5.0, 1.0])];
        let sys = aggregate_system(&fleet).unwrap();
        let ind = indicator_series(&sys, &PeakConfig::percentile(0.25)).unwrap();
        let rep = impact_report(&fleet, &ind, &sys, &ImpactOptions::default()).unwrap();
        assert_eq!(rep.customers[0].w_share, 1.0);
        assert_eq!(rep.customers[0].v_share, 1.0);
    }

    #[test]
    fn report_identical_customers_split_evenly() {
        let fleet = vec![
            series("a", &[1.0, 2.0, 5.0, 1.0]),
            series("b", &[1.0, 2.0, 5.0, 1.0]),
        ];
        let sys = aggregate_system(&fleet).unwrap();
        let ind = indicator_series(&sys, &PeakConfig::percentile(0.25)).unwrap();
        let rep = impact_report(&fleet, &ind, &sys, &ImpactOptions::default()).unwrap();
        for c in &rep.customers {
            assert!((c.w_share - 0.5).abs() < 1e-12);
            assert!((c.v_share - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn report_orders_by_customer_id() {
        let fleet = vec![
            series("b", &[1.0, 2.0, 5.0, 1.0]),
            series("a", &[2.0, 1.0, 4.0, 2.0]),
        ];
        let sys = aggregate_system(&fleet).unwrap();
        let ind = indicator_series(&sys, &PeakConfig::percentile(0.25)).unwrap();
        let rep = impact_report(&fleet, &ind, &sys, &ImpactOptions::default()).unwrap();
        assert_eq!(rep.customers[0].customer_id, "a");
        assert_eq!(rep.customers[1].customer_id, "b");
    }

    #[test]
    fn clamp_zeroes_negative_w() {
        // exporter during the only peak slot
        let fleet = vec![
            series("a", &[5.0, 0.0]),
            series("b", &[-2.0, 0.1]),
            series("c", &[1.0, 1.2]),
        ];
        let ind = indicator_of(&[1.0, 0.0]);
        let sys = aggregate_system(&fleet).unwrap();
        let rep = impact_report(
            &fleet,
            &ind,
            &sys,
            &ImpactOptions {
                clamp_negative_w: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rep.customers[1].w, 0.0);
        let plain = impact_report(&fleet, &ind, &sys, &ImpactOptions::default()).unwrap();
        assert_eq!(plain.customers[1].w, -2.0);
    }

    #[test]
    fn leave_one_out_removes_own_contribution() {
        let a = series("a", &[0.0, 2.0, 1.0, 3.0]);
        let b = series("b", &[1.0, 1.5, 0.5, 2.5]);
        let fleet = vec![a.clone(), b];
        let sys = aggregate_system(&fleet).unwrap();
        let ind = indicator_of(&[0.5; 4]);
        let loo = impact_report(
            &fleet,
            &ind,
            &sys,
            &ImpactOptions {
                leave_one_out: true,
                ..Default::default()
            },
        )
        .unwrap();
        // with a's own deltas removed, beta' equals b's deltas
        let db = diff(&fleet[1]);
        let expect = pearson(&diff(&a).deltas, &db.deltas).unwrap();
        assert!((loo.customers[0].v - expect).abs() < 1e-12);
    }
}
