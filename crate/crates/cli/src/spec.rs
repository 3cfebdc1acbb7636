//! Scenario spec files: fleet source, case modifications, comparisons, and
//! aggregation groups, all in one JSON document.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use gridfee_core::billing::TariffConfig;
use gridfee_core::impact::ImpactOptions;
use gridfee_core::peak::{PeakConfig, PeakThreshold, Strictness};
use gridfee_core::scenario::{BatteryParams, Category, DailyWindow, HomeSpec, RevenueMode};
use gridfee_core::synth::FleetSpec;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpecFile {
    #[serde(default = "default_scenario_id")]
    pub scenario_id: String,
    pub fleet: FleetSource,
    /// Optional mean-resample applied to every component before composing.
    #[serde(default)]
    pub resample_interval_s: Option<u32>,
    #[serde(default)]
    pub tz_offset_s: Option<i32>,
    pub peak: PeakSpec,
    #[serde(default)]
    pub tariff: TariffSpec,
    #[serde(default)]
    pub impacts: ImpactOptions,
    #[serde(default)]
    pub revenue: RevenueSpec,
    /// Resolve the threshold on the first case and freeze it into the rest.
    #[serde(default)]
    pub freeze_baseline_threshold: bool,
    #[serde(default)]
    pub cases: Vec<CaseSpec>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonSpec>,
    #[serde(default)]
    pub groups: Vec<Vec<String>>,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
}

fn default_scenario_id() -> String {
    "scenario".into()
}

fn default_bin_width() -> f64 {
    10.0
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetSource {
    /// Generate from a seeded spec (components stay separable).
    Synth(FleetSpec),
    /// Load composed net series from a fleet CSV (no overlay decomposition,
    /// so cases may not drop overlays).
    Csv(PathBuf),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakSpec {
    pub mode: String,
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub absolute_kw: Option<f64>,
    #[serde(default)]
    pub k_kw: Option<f64>,
    #[serde(default)]
    pub k_relative: Option<f64>,
}

impl PeakSpec {
    pub fn to_config(&self) -> Result<PeakConfig> {
        let threshold = match self.mode.as_str() {
            "percentile" => PeakThreshold::Percentile {
                fraction: self
                    .fraction
                    .ok_or_else(|| anyhow!("percentile mode needs `fraction`"))?,
            },
            "absolute" => PeakThreshold::AbsoluteKw(
                self.absolute_kw
                    .ok_or_else(|| anyhow!("absolute mode needs `absolute_kw`"))?,
            ),
            other => bail!("unknown peak mode `{other}`"),
        };
        let strictness = match (self.k_kw, self.k_relative) {
            (Some(_), Some(_)) => bail!("set only one of k_kw / k_relative"),
            (Some(k), None) => Strictness::Kw(k),
            (None, Some(r)) => Strictness::RelativeToThreshold(r),
            (None, None) => Strictness::default(),
        };
        Ok(PeakConfig {
            threshold,
            strictness,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSpec {
    #[serde(default)]
    pub volumetric_rate: Option<f64>,
    #[serde(default)]
    pub export_rate: Option<f64>,
    #[serde(default)]
    pub export_mode: Option<String>,
    #[serde(default)]
    pub pi_w: Option<f64>,
    #[serde(default)]
    pub pi_v: Option<f64>,
}

impl TariffSpec {
    pub fn to_config(&self) -> Result<TariffConfig> {
        let mut tariff = TariffConfig::default();
        if let Some(v) = self.volumetric_rate {
            tariff.volumetric_rate = v;
        }
        if let Some(v) = self.export_rate {
            tariff.export_rate = v;
        }
        if let Some(mode) = &self.export_mode {
            tariff.export_sign_mode = match mode.as_str() {
                "credit" => gridfee_core::billing::ExportSignMode::Credit,
                "verbatim" => gridfee_core::billing::ExportSignMode::Verbatim,
                other => bail!("unknown export mode `{other}`"),
            };
        }
        if let Some(v) = self.pi_w {
            tariff.pi_w_fraction = v;
        }
        if let Some(v) = self.pi_v {
            tariff.pi_v_fraction = v;
        }
        tariff.validate()?;
        Ok(tariff)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RevenueSpec {
    #[default]
    MatchLegacy,
    Explicit {
        usd: f64,
    },
}

impl RevenueSpec {
    pub fn to_mode(&self) -> RevenueMode {
        match self {
            RevenueSpec::MatchLegacy => RevenueMode::MatchLegacy,
            RevenueSpec::Explicit { usd } => RevenueMode::Explicit(*usd),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub case_id: String,
    /// Remove EV overlays (counterfactual without EV penetration).
    #[serde(default)]
    pub drop_ev: bool,
    /// Remove PV overlays.
    #[serde(default)]
    pub drop_pv: bool,
    #[serde(default)]
    pub battery: Option<BatterySpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    /// Explicit equipped homes...
    #[serde(default)]
    pub home_ids: Vec<String>,
    /// ...or the first N PV homes.
    #[serde(default)]
    pub pv_homes: Option<usize>,
    #[serde(default = "default_battery_power")]
    pub power_kw: f64,
    #[serde(default = "default_charge_window")]
    pub charge_window: String,
    #[serde(default = "default_discharge_window")]
    pub discharge_window: String,
    #[serde(default = "default_efficiency")]
    pub round_trip_efficiency: f64,
}

fn default_battery_power() -> f64 {
    2.0
}

fn default_charge_window() -> String {
    "01:00-03:00".into()
}

fn default_discharge_window() -> String {
    "17:00-19:00".into()
}

fn default_efficiency() -> f64 {
    1.0
}

/// Parses `HH:MM-HH:MM` into a daily window.
pub fn parse_window(text: &str) -> Result<DailyWindow> {
    let (start, end) = text
        .split_once('-')
        .ok_or_else(|| anyhow!("window `{text}`: expected HH:MM-HH:MM"))?;
    let parse_hm = |part: &str| -> Result<u32> {
        let (h, m) = part
            .split_once(':')
            .ok_or_else(|| anyhow!("window time `{part}`: expected HH:MM"))?;
        let h: u32 = h.parse().context("hours")?;
        let m: u32 = m.parse().context("minutes")?;
        if h > 24 || m > 59 {
            bail!("window time `{part}` out of range");
        }
        Ok(h * 3600 + m * 60)
    };
    Ok(DailyWindow {
        start_s: parse_hm(start.trim())?,
        end_s: parse_hm(end.trim())?,
    })
}

impl BatterySpec {
    pub fn to_params(&self) -> Result<BatteryParams> {
        let params = BatteryParams {
            power_kw: self.power_kw,
            charge_window: parse_window(&self.charge_window)?,
            discharge_window: parse_window(&self.discharge_window)?,
            round_trip_efficiency: self.round_trip_efficiency,
        };
        params.validate()?;
        Ok(params)
    }

    /// Equipped home ids for this fleet.
    pub fn equipped(&self, fleet: &[HomeSpec]) -> Result<Vec<String>> {
        if !self.home_ids.is_empty() && self.pv_homes.is_some() {
            bail!("battery: set only one of home_ids / pv_homes");
        }
        if let Some(n) = self.pv_homes {
            let pv: Vec<String> = fleet
                .iter()
                .filter(|h| h.category() == Category::Pv)
                .take(n)
                .map(|h| h.home_id.clone())
                .collect();
            if pv.len() < n {
                bail!("battery: asked for {n} PV homes, fleet has {}", pv.len());
            }
            return Ok(pv);
        }
        if self.home_ids.is_empty() {
            bail!("battery: needs home_ids or pv_homes");
        }
        for id in &self.home_ids {
            if !fleet.iter().any(|h| &h.home_id == id) {
                bail!("battery: unknown home `{id}`");
            }
        }
        Ok(self.home_ids.clone())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub with: String,
    pub without: String,
    #[serde(default)]
    pub category: Option<String>,
}

pub fn parse_category(text: &str) -> Result<Category> {
    match text {
        "non_der" => Ok(Category::NonDer),
        "ev" => Ok(Category::Ev),
        "pv" => Ok(Category::Pv),
        other => bail!("unknown category `{other}` (expected non_der/ev/pv)"),
    }
}

impl ScenarioSpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading scenario spec {}", path.display()))?;
        let spec: ScenarioSpecFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.cases.is_empty() && !self.comparisons.is_empty() {
            bail!("comparisons need cases");
        }
        let mut seen = std::collections::BTreeSet::new();
        for case in &self.cases {
            if !seen.insert(&case.case_id) {
                bail!("duplicate case_id `{}`", case.case_id);
            }
        }
        for cmp in &self.comparisons {
            for id in [&cmp.with, &cmp.without] {
                if !seen.contains(id) {
                    bail!("comparison references unknown case `{id}`");
                }
            }
            if let Some(cat) = &cmp.category {
                parse_category(cat)?;
            }
        }
        if matches!(self.fleet, FleetSource::Csv(_)) {
            for case in &self.cases {
                if case.drop_ev || case.drop_pv {
                    bail!(
                        "case `{}`: a CSV fleet has no overlay decomposition to drop",
                        case.case_id
                    );
                }
            }
        }
        Ok(())
    }
}
