//! Home composition and the case-study machinery: scenario runs,
//! penetration deltas, and customer aggregation.
//!
//! A home is a base profile plus optional EV and PV overlays and an optional
//! time-triggered battery. Scenarios compose homes, re-resolve the peak
//! threshold for their own system series (freezable via config), and bill
//! the composed fleet end to end. Scenario runs are pure functions of their
//! inputs, so equal configs and seeds reproduce results bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::billing::{
    bill_grid_access, bill_volumetric, compare_bills, histogram, pct_change, target_revenue,
    BillStatement, HistBin, TariffConfig,
};
use crate::error::{Error, Result};
use crate::impact::{impact_report, ImpactOptions, ImpactReport};
use crate::par;
use crate::peak::{indicator_series, IndicatorSeries, PeakConfig, PeakThreshold};
use crate::timeseries::{aggregate_system, sum_series, MeterSeries, SystemSeries, TimeGrid};

/// Daily wall-clock window `[start, end)` in seconds since local midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyWindow {
    pub start_s: u32,
    pub end_s: u32,
}

impl DailyWindow {
    pub fn from_hours(start_h: u32, end_h: u32) -> Self {
        Self {
            start_s: start_h * 3600,
            end_s: end_h * 3600,
        }
    }

    fn contains(&self, local_seconds: u32) -> bool {
        local_seconds >= self.start_s && local_seconds < self.end_s
    }

    fn overlaps(&self, other: &DailyWindow) -> bool {
        self.start_s < other.end_s && other.start_s < self.end_s
    }

    fn hours(&self) -> f64 {
        f64::from(self.end_s - self.start_s) / 3600.0
    }
}

/// Time-triggered battery schedule: charge in one daily window, discharge in
/// another, at a fixed rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub power_kw: f64,
    pub charge_window: DailyWindow,
    pub discharge_window: DailyWindow,
    pub round_trip_efficiency: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            power_kw: 2.0,
            charge_window: DailyWindow::from_hours(1, 3),
            discharge_window: DailyWindow::from_hours(17, 19),
            round_trip_efficiency: 1.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if self.charge_window.overlaps(&self.discharge_window) {
            return Err(Error::WindowOverlap);
        }
        for w in [&self.charge_window, &self.discharge_window] {
            if w.start_s >= w.end_s || w.end_s > 86_400 {
                return Err(Error::InvalidConfig(format!(
                    "battery window {}..{} is not a valid daily range",
                    w.start_s, w.end_s
                )));
            }
        }
        if self.power_kw.is_nan() || self.power_kw < 0.0 {
            return Err(Error::InvalidConfig("battery power must be >= 0".into()));
        }
        let eff = self.round_trip_efficiency;
        if eff.is_nan() || eff <= 0.0 || eff > 1.0 {
            return Err(Error::InvalidConfig(
                "round-trip efficiency must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Demand added by the battery per slot: `+power` while charging, a
/// discharge rate sized so daily discharge energy equals charge energy times
/// the round-trip efficiency, zero elsewhere. Slots belong to a window by
/// their start time under the fleet's fixed UTC offset.
pub fn battery_dispatch(
    params: &BatteryParams,
    grid: &TimeGrid,
    tz_offset_s: i32,
) -> Result<MeterSeries> {
    params.validate()?;
    let discharge_kw =
        params.power_kw * params.charge_window.hours() * params.round_trip_efficiency
            / params.discharge_window.hours();
    let values: Vec<f64> = (0..grid.count)
        .map(|t| {
            let s = grid.local_seconds_of_day(t, tz_offset_s);
            if params.charge_window.contains(s) {
                params.power_kw
            } else if params.discharge_window.contains(s) {
                -discharge_kw
            } else {
                0.0
            }
        })
        .collect();
    MeterSeries::new("battery", *grid, values)
}

/// Home category by DER equipment (battery is tracked separately).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NonDer,
    Ev,
    Pv,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::NonDer => "non_der",
            Category::Ev => "ev",
            Category::Pv => "pv",
        }
    }
}

/// One home's components: base demand plus optional overlays and battery.
#[derive(Debug, Clone)]
pub struct HomeSpec {
    pub home_id: String,
    pub base: MeterSeries,
    pub ev_overlay: Option<MeterSeries>,
    pub pv_overlay: Option<MeterSeries>,
    pub battery: Option<BatteryParams>,
}

impl HomeSpec {
    pub fn base_only(home_id: impl Into<String>, base: MeterSeries) -> Self {
        Self {
            home_id: home_id.into(),
            base,
            ev_overlay: None,
            pv_overlay: None,
            battery: None,
        }
    }

    pub fn category(&self) -> Category {
        if self.ev_overlay.is_some() {
            Category::Ev
        } else if self.pv_overlay.is_some() {
            Category::Pv
        } else {
            Category::NonDer
        }
    }
}

/// Net metered demand: base + EV + PV + battery dispatch, pointwise.
pub fn compose_home(spec: &HomeSpec, tz_offset_s: i32) -> Result<MeterSeries> {
    let grid = spec.base.grid;
    let mut values = spec.base.values.clone();
    if let Some(ev) = &spec.ev_overlay {
        if ev.grid != grid {
            return Err(Error::GridMismatch(format!(
                "home `{}`: ev overlay grid",
                spec.home_id
            )));
        }
        if let Some(t) = ev.values.iter().position(|&v| v < 0.0) {
            return Err(Error::OverlaySignViolation {
                home: spec.home_id.clone(),
                detail: format!("ev overlay negative at slot {t}"),
            });
        }
        for (acc, v) in values.iter_mut().zip(&ev.values) {
            *acc += *v;
        }
    }
    if let Some(pv) = &spec.pv_overlay {
        if pv.grid != grid {
            return Err(Error::GridMismatch(format!(
                "home `{}`: pv overlay grid",
                spec.home_id
            )));
        }
        if let Some(t) = pv.values.iter().position(|&v| v > 0.0) {
            return Err(Error::OverlaySignViolation {
                home: spec.home_id.clone(),
                detail: format!("pv overlay positive at slot {t}"),
            });
        }
        for (acc, v) in values.iter_mut().zip(&pv.values) {
            *acc += *v;
        }
    }
    if let Some(params) = &spec.battery {
        let dispatch = battery_dispatch(params, &grid, tz_offset_s)?;
        for (acc, v) in values.iter_mut().zip(&dispatch.values) {
            *acc += *v;
        }
    }
    MeterSeries::new(spec.home_id.clone(), grid, values)
}

/// How the revenue pool is set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevenueMode {
    /// Pool equals the legacy total (the direct-comparison setup).
    #[default]
    MatchLegacy,
    /// Exogenous pool in dollars.
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub peak: PeakConfig,
    #[serde(default)]
    pub tariff: TariffConfig,
    #[serde(default)]
    pub impact: ImpactOptions,
    #[serde(default)]
    pub revenue: RevenueMode,
    /// Fixed UTC offset for wall-clock windows (battery schedules).
    #[serde(default)]
    pub tz_offset_s: i32,
    /// Bill against this threshold instead of re-resolving it, for
    /// controlled comparisons.
    #[serde(default)]
    pub frozen_threshold_kw: Option<f64>,
}

impl ScenarioConfig {
    pub fn new(scenario_id: impl Into<String>, peak: PeakConfig, tariff: TariffConfig) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            peak,
            tariff,
            impact: ImpactOptions::default(),
            revenue: RevenueMode::MatchLegacy,
            tz_offset_s: 0,
            frozen_threshold_kw: None,
        }
    }
}

/// Everything one scenario produced, internally consistent: bills derive
/// from this scenario's own system series and threshold.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario_id: String,
    /// Composed net series, ascending home id.
    pub fleet: Vec<MeterSeries>,
    pub categories: BTreeMap<String, Category>,
    pub system: SystemSeries,
    pub indicator: IndicatorSeries,
    pub report: ImpactReport,
    pub statement: BillStatement,
    pub revenue: f64,
}

/// Composes the fleet and runs the whole pipeline: system aggregation,
/// indicator, impact report, legacy and grid-access bills.
pub fn run_scenario(specs: &[HomeSpec], config: &ScenarioConfig) -> Result<ScenarioResult> {
    if specs.is_empty() {
        return Err(Error::EmptyFleet);
    }
    config.tariff.validate()?;
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by(|&a, &b| specs[a].home_id.cmp(&specs[b].home_id));
    let tz = config.tz_offset_s;
    let fleet: Vec<MeterSeries> =
        par::map_indexed(order.len(), |rank| compose_home(&specs[order[rank]], tz))
            .into_iter()
            .collect::<Result<_>>()?;
    let categories: BTreeMap<String, Category> = order
        .iter()
        .map(|&i| (specs[i].home_id.clone(), specs[i].category()))
        .collect();
    pipeline(config.scenario_id.clone(), fleet, categories, config)
}

/// The billing pipeline on an already-composed fleet.
pub fn pipeline(
    scenario_id: String,
    mut fleet: Vec<MeterSeries>,
    categories: BTreeMap<String, Category>,
    config: &ScenarioConfig,
) -> Result<ScenarioResult> {
    // keep every per-customer vector aligned on one ordering
    fleet.sort_by(|a, b| a.customer_id.cmp(&b.customer_id));
    let system = aggregate_system(&fleet)?;
    let peak = match config.frozen_threshold_kw {
        Some(kw) => PeakConfig {
            threshold: PeakThreshold::AbsoluteKw(kw),
            strictness: config.peak.strictness,
        },
        None => config.peak,
    };
    let indicator = indicator_series(&system, &peak)?;
    let report = impact_report(&fleet, &indicator, &system, &config.impact)?;
    let tariff = &config.tariff;
    let old: Vec<f64> = par::map_indexed(fleet.len(), |i| bill_volumetric(&fleet[i], tariff));
    let revenue = match config.revenue {
        RevenueMode::MatchLegacy => target_revenue(&old)?,
        RevenueMode::Explicit(v) => v,
    };
    let new = bill_grid_access(&report, revenue, tariff)?;
    let ids: Vec<String> = fleet.iter().map(|s| s.customer_id.clone()).collect();
    let old_pairs: Vec<(String, f64)> = ids.iter().cloned().zip(old.iter().copied()).collect();
    let new_pairs: Vec<(String, f64)> = ids.iter().cloned().zip(new.iter().copied()).collect();
    let statement = compare_bills(&old_pairs, &new_pairs, revenue)?;
    Ok(ScenarioResult {
        scenario_id,
        fleet,
        categories,
        system,
        indicator,
        report,
        statement,
        revenue,
    })
}

/// Per-category rollup of a scenario's bill statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: Category,
    pub count: usize,
    pub total_old: f64,
    pub total_new: f64,
    pub mean_pct_change: Option<f64>,
}

impl ScenarioResult {
    pub fn category_summaries(&self) -> Vec<CategorySummary> {
        let mut out = Vec::new();
        for cat in [Category::NonDer, Category::Ev, Category::Pv] {
            let rows: Vec<_> = self
                .statement
                .rows
                .iter()
                .filter(|r| self.categories.get(&r.customer_id) == Some(&cat))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let changes: Vec<f64> = rows.iter().filter_map(|r| r.pct_change).collect();
            out.push(CategorySummary {
                category: cat,
                count: rows.len(),
                total_old: rows.iter().map(|r| r.bill_old).sum(),
                total_new: rows.iter().map(|r| r.bill_new).sum(),
                mean_pct_change: if changes.is_empty() {
                    None
                } else {
                    Some(changes.iter().sum::<f64>() / changes.len() as f64)
                },
            });
        }
        out
    }

    fn new_bills_by_id(&self) -> BTreeMap<&str, f64> {
        self.statement
            .rows
            .iter()
            .map(|r| (r.customer_id.as_str(), r.bill_new))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub home_id: String,
    pub bill_with: f64,
    pub bill_without: f64,
    /// `100 * (with - without) / |without|`.
    pub pct_change: Option<f64>,
}

/// Per-home proposed-bill changes between two scenarios over the same homes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub rows: Vec<DeltaRow>,
    pub bins: Vec<HistBin>,
}

/// Compares `bill_new` between two scenario runs, optionally restricted to
/// one home category (categories read from the `with` scenario).
pub fn penetration_delta(
    with: &ScenarioResult,
    without: &ScenarioResult,
    category: Option<Category>,
    bin_width: f64,
) -> Result<DeltaReport> {
    let with_bills = with.new_bills_by_id();
    let without_bills = without.new_bills_by_id();
    if with_bills.len() != without_bills.len()
        || with_bills.keys().any(|id| !without_bills.contains_key(id))
    {
        return Err(Error::CustomerSetMismatch(
            "scenarios cover different home sets".into(),
        ));
    }
    let mut rows = Vec::new();
    for (id, &bill_with) in &with_bills {
        if let Some(cat) = category {
            if with.categories.get(*id) != Some(&cat) {
                continue;
            }
        }
        let bill_without = without_bills[id];
        rows.push(DeltaRow {
            home_id: id.to_string(),
            bill_with,
            bill_without,
            pct_change: pct_change(bill_without, bill_with),
        });
    }
    let changes: Vec<f64> = rows.iter().filter_map(|r| r.pct_change).collect();
    let bins = histogram(&changes, bin_width);
    Ok(DeltaReport { rows, bins })
}

/// Table-style outcome for one aggregated group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_id: String,
    pub member_ids: Vec<String>,
    pub member_w_shares: Vec<f64>,
    pub member_v_shares: Vec<f64>,
    pub member_bills_new: Vec<f64>,
    pub group_w_share: f64,
    pub group_v_share: f64,
    pub group_bill_new: f64,
    /// Sum of member bills minus the group bill; positive means the group
    /// pays less than its members did individually.
    pub savings_usd: f64,
    pub savings_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    pub merged: ScenarioResult,
    pub groups: Vec<GroupReport>,
}

/// Rebills a scenario with each group treated as a single customer. The
/// system series and threshold are unchanged (total demand is identical);
/// shares and bills are recomputed over the merged fleet against the
/// original revenue pool.
pub fn aggregate_customers(
    result: &ScenarioResult,
    groups: &[Vec<String>],
    config: &ScenarioConfig,
) -> Result<AggregationOutcome> {
    let by_id: BTreeMap<&str, &MeterSeries> = result
        .fleet
        .iter()
        .map(|s| (s.customer_id.as_str(), s))
        .collect();
    let mut claimed: BTreeMap<&str, usize> = BTreeMap::new();
    for (gi, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::EmptyGroup);
        }
        for id in group {
            if !by_id.contains_key(id.as_str()) {
                return Err(Error::UnknownHome(id.clone()));
            }
            if claimed.insert(id.as_str(), gi).is_some() {
                return Err(Error::OverlappingGroups(id.clone()));
            }
        }
    }

    let mut merged: Vec<MeterSeries> = Vec::new();
    let mut group_ids = Vec::new();
    for group in groups {
        let members: Vec<MeterSeries> = group.iter().map(|id| by_id[id.as_str()].clone()).collect();
        let mut sorted = group.clone();
        sorted.sort();
        let group_id = format!("agg({})", sorted.join("+"));
        merged.push(sum_series(&members, group_id.clone())?);
        group_ids.push(group_id);
    }
    for s in &result.fleet {
        if !claimed.contains_key(s.customer_id.as_str()) {
            merged.push(s.clone());
        }
    }
    merged.sort_by(|a, b| a.customer_id.cmp(&b.customer_id));

    let report = impact_report(&merged, &result.indicator, &result.system, &config.impact)?;
    let tariff = &config.tariff;
    let old: Vec<f64> = par::map_indexed(merged.len(), |i| bill_volumetric(&merged[i], tariff));
    let new = bill_grid_access(&report, result.revenue, tariff)?;
    let ids: Vec<String> = report
        .customers
        .iter()
        .map(|c| c.customer_id.clone())
        .collect();
    let old_pairs: Vec<(String, f64)> = ids.iter().cloned().zip(old.iter().copied()).collect();
    let new_pairs: Vec<(String, f64)> = ids.iter().cloned().zip(new.iter().copied()).collect();
    let statement = compare_bills(&old_pairs, &new_pairs, result.revenue)?;

    let merged_impacts: BTreeMap<&str, (f64, f64)> = report
        .customers
        .iter()
        .map(|c| (c.customer_id.as_str(), (c.w_share, c.v_share)))
        .collect();
    let merged_bills: BTreeMap<&str, f64> = ids
        .iter()
        .map(String::as_str)
        .zip(new.iter().copied())
        .collect();
    let orig_impacts: BTreeMap<&str, (f64, f64)> = result
        .report
        .customers
        .iter()
        .map(|c| (c.customer_id.as_str(), (c.w_share, c.v_share)))
        .collect();
    let orig_bills = result.new_bills_by_id();

    let mut group_reports = Vec::new();
    for (group, group_id) in groups.iter().zip(&group_ids) {
        let member_w_shares: Vec<f64> =
            group.iter().map(|id| orig_impacts[id.as_str()].0).collect();
        let member_v_shares: Vec<f64> =
            group.iter().map(|id| orig_impacts[id.as_str()].1).collect();
        let member_bills_new: Vec<f64> = group.iter().map(|id| orig_bills[id.as_str()]).collect();
        let (group_w_share, group_v_share) = merged_impacts[group_id.as_str()];
        let group_bill_new = merged_bills[group_id.as_str()];
        let member_total: f64 = member_bills_new.iter().sum();
        let savings_usd = member_total - group_bill_new;
        let savings_pct = if member_total != 0.0 {
            Some(100.0 * savings_usd / member_total.abs())
        } else {
            None
        };
        group_reports.push(GroupReport {
            group_id: group_id.clone(),
            member_ids: group.clone(),
            member_w_shares,
            member_v_shares,
            member_bills_new,
            group_w_share,
            group_v_share,
            group_bill_new,
            savings_usd,
            savings_pct,
        });
    }

    let mut categories = BTreeMap::new();
    for s in &merged {
        let cat = result
            .categories
            .get(&s.customer_id)
            .copied()
            .unwrap_or(Category::NonDer);
        categories.insert(s.customer_id.clone(), cat);
    }
    let merged_result = ScenarioResult {
        scenario_id: format!("{}:aggregated", result.scenario_id),
        fleet: merged,
        categories,
        system: result.system.clone(),
        indicator: result.indicator.clone(),
        report,
        statement,
        revenue: result.revenue,
    };
    Ok(AggregationOutcome {
        merged: merged_result,
        groups: group_reports,
    })
}
