//! Layered configuration: config file (key=value lines or JSON), overridden
//! by command-line flags. The fully resolved map is echoed into every output
//! manifest.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gridfee_core::billing::{ExportSignMode, TariffConfig};
use gridfee_core::impact::ImpactOptions;
use gridfee_core::peak::{PeakConfig, PeakThreshold, Strictness};
use gridfee_core::scenario::RevenueMode;
use gridfee_core::synth::FleetSpec;

/// Flat dotted-key configuration with file < flag precedence.
#[derive(Debug, Clone, Default)]
pub struct ConfigBag {
    values: BTreeMap<String, String>,
}

impl ConfigBag {
    /// Loads the file if given, else the `GRIDFEE_CONFIG` env var if set.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut bag = ConfigBag::default();
        let env_path = std::env::var_os("GRIDFEE_CONFIG").map(std::path::PathBuf::from);
        let chosen = path.map(Path::to_path_buf).or(env_path);
        if let Some(p) = chosen {
            let text = std::fs::read_to_string(&p)
                .with_context(|| format!("reading config {}", p.display()))?;
            bag.ingest(&text)
                .with_context(|| format!("parsing config {}", p.display()))?;
        }
        Ok(bag)
    }

    fn ingest(&mut self, text: &str) -> Result<()> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(text)?;
            flatten_json("", &value, &mut self.values)?;
            return Ok(());
        }
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got `{line}`", n + 1))?;
            self.values
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    /// Flag override; `None` leaves the file value in place.
    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .with_context(|| format!("config `{key}`: bad number `{v}`"))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .with_context(|| format!("config `{key}`: bad integer `{v}`"))
            })
            .transpose()
    }

    pub fn get_i64(&self, key: &str) -> Result<Option<i64>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .with_context(|| format!("config `{key}`: bad integer `{v}`"))
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .with_context(|| format!("config `{key}`: bad bool `{v}`"))
            })
            .transpose()
    }

    /// The resolved map, for manifest echo.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Builds the peak config from `peak.*` keys. Without an explicit
    /// `peak.mode`, a lone `peak.absolute_kw` implies absolute mode.
    pub fn peak_config(&self) -> Result<PeakConfig> {
        let inferred =
            if self.get("peak.absolute_kw").is_some() && self.get("peak.fraction").is_none() {
                "absolute"
            } else {
                "percentile"
            };
        let mode = self.get("peak.mode").unwrap_or(inferred);
        let threshold = match mode {
            "percentile" => PeakThreshold::Percentile {
                fraction: self.get_f64("peak.fraction")?.unwrap_or(0.25),
            },
            "absolute" => PeakThreshold::AbsoluteKw(
                self.get_f64("peak.absolute_kw")?
                    .ok_or_else(|| anyhow!("peak.mode=absolute requires peak.absolute_kw"))?,
            ),
            other => bail!("unknown peak.mode `{other}`"),
        };
        let strictness = match (self.get_f64("peak.k_kw")?, self.get_f64("peak.k_relative")?) {
            (Some(_), Some(_)) => bail!("set only one of peak.k_kw / peak.k_relative"),
            (Some(k), None) => Strictness::Kw(k),
            (None, Some(r)) => Strictness::RelativeToThreshold(r),
            (None, None) => Strictness::default(),
        };
        Ok(PeakConfig {
            threshold,
            strictness,
        })
    }

    /// Builds the tariff from `tariff.*` keys.
    pub fn tariff_config(&self) -> Result<TariffConfig> {
        let mut tariff = TariffConfig::default();
        if let Some(v) = self.get_f64("tariff.volumetric_rate")? {
            tariff.volumetric_rate = v;
        }
        if let Some(v) = self.get_f64("tariff.export_rate")? {
            tariff.export_rate = v;
        }
        if let Some(mode) = self.get("tariff.export_mode") {
            tariff.export_sign_mode = match mode {
                "credit" => ExportSignMode::Credit,
                "verbatim" => ExportSignMode::Verbatim,
                other => bail!("unknown tariff.export_mode `{other}`"),
            };
        }
        if let Some(v) = self.get_f64("tariff.pi_w")? {
            tariff.pi_w_fraction = v;
        }
        if let Some(v) = self.get_f64("tariff.pi_v")? {
            tariff.pi_v_fraction = v;
        }
        tariff.validate()?;
        Ok(tariff)
    }

    pub fn impact_options(&self) -> Result<ImpactOptions> {
        Ok(ImpactOptions {
            clamp_negative_w: self.get_bool("impacts.clamp_negative_w")?.unwrap_or(false),
            leave_one_out: self.get_bool("impacts.leave_one_out")?.unwrap_or(false),
        })
    }

    pub fn revenue_mode(&self) -> Result<RevenueMode> {
        match self.get("revenue.mode").unwrap_or("match_legacy") {
            "match_legacy" => Ok(RevenueMode::MatchLegacy),
            "explicit" => {
                let usd = self.get_f64("revenue.explicit_usd")?.ok_or_else(|| {
                    anyhow!("revenue.mode=explicit requires revenue.explicit_usd")
                })?;
                Ok(RevenueMode::Explicit(usd))
            }
            other => bail!("unknown revenue.mode `{other}`"),
        }
    }

    /// Builds the fleet spec from `fleet.*` keys.
    pub fn fleet_spec(&self) -> Result<FleetSpec> {
        let mut spec = FleetSpec::default();
        if let Some(v) = self.get_u64("fleet.seed")? {
            spec.seed = v;
        }
        if let Some(v) = self.get_u64("fleet.homes")? {
            spec.n_homes = v as usize;
        }
        if let Some(v) = self.get_f64("fleet.ev")? {
            spec.ev_fraction = v;
        }
        if let Some(v) = self.get_f64("fleet.pv")? {
            spec.pv_fraction = v;
        }
        if let Some(v) = self.get_u64("fleet.days")? {
            spec.days = v as u32;
        }
        if let Some(v) = self.get_u64("fleet.interval_s")? {
            spec.interval_s = v as u32;
        }
        if let Some(v) = self.get_i64("fleet.start_utc")? {
            spec.start_utc = v;
        }
        if let Some(v) = self.get_i64("fleet.tz_offset_s")? {
            spec.tz_offset_s = v as i32;
        }
        if let Some(v) = self.get_bool("fleet.ev_offpeak")? {
            spec.profile.ev_offpeak = v;
        }
        if let Some(v) = self.get_bool("fleet.pv_cloudless")? {
            spec.profile.pv_cloudless = v;
        }
        if let Some(v) = self.get_f64("fleet.ev_power_kw")? {
            spec.profile.ev_power_kw = v;
        }
        Ok(spec)
    }
}

fn flatten_json(
    prefix: &str,
    value: &serde_json::Value,
    out: &mut BTreeMap<String, String>,
) -> Result<()> {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_json(&key, v, out)?;
            }
        }
        serde_json::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        serde_json::Value::Number(n) => {
            out.insert(prefix.to_string(), n.to_string());
        }
        serde_json::Value::Bool(b) => {
            out.insert(prefix.to_string(), b.to_string());
        }
        serde_json::Value::Null => {}
        serde_json::Value::Array(_) => bail!("config key `{prefix}`: arrays are not supported"),
    }
    Ok(())
}
