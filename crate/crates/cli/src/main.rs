//! `gridfee`: synthetic fleets, impact reports, bills, and DER scenarios
//! from the command line.
//!
//! Exit codes: 0 success, 2 config/input error, 3 degenerate computation
//! (no meaningful shares), 4 scenario-spec error.

mod config;
mod emit;
mod manifest;
mod spec;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gridfee_core::billing::histogram;
use gridfee_core::io::{load_meter_csv, write_meter_csv, CsvSchema};
use gridfee_core::scenario::{
    aggregate_customers, penetration_delta, pipeline, run_scenario, Category, HomeSpec,
    ScenarioConfig, ScenarioResult,
};
use gridfee_core::synth::{gen_fleet, pv_capacity};
use gridfee_core::timeseries::resample;
use gridfee_core::Error as CoreError;

use config::ConfigBag;
use manifest::Manifest;
use spec::{parse_category, FleetSource, ScenarioSpecFile};

const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_SPEC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "gridfee",
    version,
    about = "Grid-access charges from smart-meter demand series"
)]
struct Cli {
    /// Config file (key=value lines or JSON); defaults to $GRIDFEE_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic fleet and write it as CSV.
    Synth(SynthArgs),
    /// Validate a fleet CSV and write the normalized canonical form.
    Ingest(IngestArgs),
    /// Compute grid impact factors W and V with their shares.
    Impacts(ImpactsArgs),
    /// Compute legacy and grid-access bills for a fleet.
    Bill(BillArgs),
    /// Run the cases of a scenario spec and their comparisons.
    Scenario(SpecArgs),
    /// Rebill a scenario with customer groups treated as single entities.
    Aggregate(SpecArgs),
    /// Summarize a bill statement into histograms and summary stats.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    homes: Option<usize>,
    /// EV penetration fraction.
    #[arg(long)]
    ev: Option<f64>,
    /// PV penetration fraction.
    #[arg(long)]
    pv: Option<f64>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    interval_s: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid start, epoch seconds UTC.
    #[arg(long)]
    start_utc: Option<i64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Column names, comma separated: timestamp,customer_id,kw.
    #[arg(long)]
    columns: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PeakFlags {
    /// percentile | absolute.
    #[arg(long)]
    peak_mode: Option<String>,
    #[arg(long)]
    peak_fraction: Option<f64>,
    #[arg(long)]
    peak_absolute_kw: Option<f64>,
    #[arg(long)]
    k_kw: Option<f64>,
    #[arg(long)]
    k_relative: Option<f64>,
}

impl PeakFlags {
    fn apply(&self, bag: &mut ConfigBag) {
        bag.set_opt("peak.mode", self.peak_mode.clone());
        bag.set_opt("peak.fraction", self.peak_fraction);
        bag.set_opt("peak.absolute_kw", self.peak_absolute_kw);
        bag.set_opt("peak.k_kw", self.k_kw);
        bag.set_opt("peak.k_relative", self.k_relative);
    }
}

#[derive(Args)]
struct TariffFlags {
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    export_rate: Option<f64>,
    /// credit | verbatim.
    #[arg(long)]
    export_mode: Option<String>,
    #[arg(long)]
    pi_w: Option<f64>,
    #[arg(long)]
    pi_v: Option<f64>,
}

impl TariffFlags {
    fn apply(&self, bag: &mut ConfigBag) {
        bag.set_opt("tariff.volumetric_rate", self.rate);
        bag.set_opt("tariff.export_rate", self.export_rate);
        bag.set_opt("tariff.export_mode", self.export_mode.clone());
        bag.set_opt("tariff.pi_w", self.pi_w);
        bag.set_opt("tariff.pi_v", self.pi_v);
    }
}

#[derive(Args)]
struct ImpactsArgs {
    #[arg(long)]
    fleet: PathBuf,
    #[command(flatten)]
    peak: PeakFlags,
    #[arg(long)]
    clamp_negative_w: Option<bool>,
    #[arg(long)]
    leave_one_out: Option<bool>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BillArgs {
    #[arg(long)]
    fleet: PathBuf,
    #[command(flatten)]
    peak: PeakFlags,
    #[command(flatten)]
    tariff: TariffFlags,
    /// Optional `home_id,category,...` CSV labeling homes.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpecArgs {
    /// Scenario spec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A bills.csv produced by `bill` or `scenario`.
    #[arg(long)]
    bills: PathBuf,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying the process exit code.
struct Fail {
    code: u8,
    err: anyhow::Error,
}

type Flow<T> = std::result::Result<T, Fail>;

trait WithCode<T> {
    fn code(self, code: u8) -> Flow<T>;
    /// Degenerate computations exit 3, everything else takes `fallback`.
    fn compute(self, fallback: u8) -> Flow<T>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for std::result::Result<T, E> {
    fn code(self, code: u8) -> Flow<T> {
        self.map_err(|e| Fail {
            code,
            err: e.into(),
        })
    }

    fn compute(self, fallback: u8) -> Flow<T> {
        self.map_err(|e| {
            let err: anyhow::Error = e.into();
            let code = match err.downcast_ref::<CoreError>() {
                Some(CoreError::DegenerateTotal { .. } | CoreError::DegenerateShares(_)) => {
                    EXIT_DEGENERATE
                }
                _ => fallback,
            };
            Fail { code, err }
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(&cli, args),
        Command::Ingest(args) => cmd_ingest(&cli, args),
        Command::Impacts(args) => cmd_impacts(&cli, args),
        Command::Bill(args) => cmd_bill(&cli, args),
        Command::Scenario(args) => cmd_scenario(&cli, args),
        Command::Aggregate(args) => cmd_aggregate(&cli, args),
        Command::Report(args) => cmd_report(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(fail) => {
            eprintln!("gridfee: error: {:#}", fail.err);
            ExitCode::from(fail.code)
        }
    }
}

fn out_dir(path: &Path) -> Flow<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
        .code(EXIT_CONFIG)
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Flow<()> {
    let mut bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    bag.set_opt("fleet.homes", args.homes);
    bag.set_opt("fleet.ev", args.ev);
    bag.set_opt("fleet.pv", args.pv);
    bag.set_opt("fleet.days", args.days);
    bag.set_opt("fleet.interval_s", args.interval_s);
    bag.set_opt("fleet.seed", args.seed);
    bag.set_opt("fleet.start_utc", args.start_utc);
    let spec = bag.fleet_spec().code(EXIT_CONFIG)?;
    spec.validate().code(EXIT_CONFIG)?;
    out_dir(&args.out)?;

    let homes = gen_fleet(&spec).code(EXIT_CONFIG)?;
    let tz = spec.tz_offset_s;
    let composed: Vec<_> = homes
        .iter()
        .map(|h| gridfee_core::scenario::compose_home(h, tz))
        .collect::<gridfee_core::Result<_>>()
        .code(EXIT_CONFIG)?;
    write_meter_csv(&args.out.join("fleet.csv"), &composed).code(EXIT_CONFIG)?;
    let categories: BTreeMap<String, Category> = homes
        .iter()
        .map(|h| (h.home_id.clone(), h.category()))
        .collect();
    emit::categories_csv(&args.out.join("categories.csv"), &categories, &[]).code(EXIT_CONFIG)?;

    let pv_caps: BTreeMap<String, f64> = homes
        .iter()
        .enumerate()
        .filter(|(_, h)| h.category() == Category::Pv)
        .map(|(i, h)| (h.home_id.clone(), pv_capacity(&spec, i)))
        .collect();
    let mut manifest = Manifest::new("synth", bag.echo().clone(), Some(spec.seed));
    manifest.fact("n_homes", spec.n_homes);
    manifest.fact("days", spec.days);
    manifest.fact("interval_s", spec.interval_s);
    manifest.fact("start_utc", spec.start_utc);
    manifest.fact("pv_capacities_kw", pv_caps);
    manifest.record(&args.out, "fleet.csv").code(EXIT_CONFIG)?;
    manifest
        .record(&args.out, "categories.csv")
        .code(EXIT_CONFIG)?;
    manifest.write(&args.out).code(EXIT_CONFIG)?;
    println!(
        "synth: {} homes x {} days at {}s -> {}",
        spec.n_homes,
        spec.days,
        spec.interval_s,
        args.out.display()
    );
    Ok(())
}

fn csv_schema(columns: &Option<String>) -> Result<CsvSchema> {
    match columns {
        None => Ok(CsvSchema::default()),
        Some(text) => {
            let parts: Vec<&str> = text.split(',').collect();
            if parts.len() != 3 {
                bail!("--columns expects `timestamp,customer_id,kw` names");
            }
            Ok(CsvSchema {
                timestamp: parts[0].trim().to_string(),
                customer_id: parts[1].trim().to_string(),
                kw: parts[2].trim().to_string(),
            })
        }
    }
}

fn cmd_ingest(cli: &Cli, args: &IngestArgs) -> Flow<()> {
    let bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    let schema = csv_schema(&args.columns).code(EXIT_CONFIG)?;
    out_dir(&args.out)?;
    let fleet = load_meter_csv(&args.input, &schema).code(EXIT_CONFIG)?;
    write_meter_csv(&args.out.join("fleet.csv"), &fleet).code(EXIT_CONFIG)?;
    let grid = fleet[0].grid;
    let mut manifest = Manifest::new("ingest", bag.echo().clone(), None);
    manifest.fact("customers", fleet.len());
    manifest.fact("interval_s", grid.interval_s);
    manifest.fact("count", grid.count);
    manifest.fact("start_utc", grid.start_utc);
    manifest.record(&args.out, "fleet.csv").code(EXIT_CONFIG)?;
    manifest.write(&args.out).code(EXIT_CONFIG)?;
    println!(
        "ingest: {} customers x {} slots -> {}",
        fleet.len(),
        grid.count,
        args.out.display()
    );
    Ok(())
}

fn cmd_impacts(cli: &Cli, args: &ImpactsArgs) -> Flow<()> {
    let mut bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    args.peak.apply(&mut bag);
    bag.set_opt("impacts.clamp_negative_w", args.clamp_negative_w);
    bag.set_opt("impacts.leave_one_out", args.leave_one_out);
    let peak = bag.peak_config().code(EXIT_CONFIG)?;
    let options = bag.impact_options().code(EXIT_CONFIG)?;
    out_dir(&args.out)?;

    let fleet = load_meter_csv(&args.fleet, &CsvSchema::default()).code(EXIT_CONFIG)?;
    let system = gridfee_core::timeseries::aggregate_system(&fleet).compute(1)?;
    let indicator = gridfee_core::peak::indicator_series(&system, &peak).compute(1)?;
    let report =
        gridfee_core::impact::impact_report(&fleet, &indicator, &system, &options).compute(1)?;

    emit::impacts_csv(&args.out.join("impacts.csv"), &report).code(1)?;
    emit::impacts_json(
        &args.out.join("impacts.json"),
        &report,
        indicator.threshold_kw,
        indicator.k_kw,
    )
    .code(1)?;
    let mut manifest = Manifest::new("impacts", bag.echo().clone(), None);
    manifest.fact("threshold_kw", indicator.threshold_kw);
    manifest.fact("k_kw", indicator.k_kw);
    manifest.fact("sum_w", report.sum_w);
    manifest.fact("sum_v", report.sum_v);
    manifest.record(&args.out, "impacts.csv").code(1)?;
    manifest.record(&args.out, "impacts.json").code(1)?;
    manifest.write(&args.out).code(1)?;
    println!(
        "impacts: {} customers, threshold {} kW -> {}",
        report.customers.len(),
        indicator.threshold_kw,
        args.out.display()
    );
    Ok(())
}

fn load_categories(path: &Path) -> Result<BTreeMap<String, Category>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading categories {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| anyhow!("categories line {}: empty", i + 1))?;
        let cat = parts
            .next()
            .ok_or_else(|| anyhow!("categories line {}: missing category", i + 1))?;
        out.insert(id.trim().to_string(), parse_category(cat.trim())?);
    }
    Ok(out)
}

fn cmd_bill(cli: &Cli, args: &BillArgs) -> Flow<()> {
    let mut bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    args.peak.apply(&mut bag);
    args.tariff.apply(&mut bag);
    bag.set_opt("report.bin_width", args.bin_width);
    let peak = bag.peak_config().code(EXIT_CONFIG)?;
    let tariff = bag.tariff_config().code(EXIT_CONFIG)?;
    let options = bag.impact_options().code(EXIT_CONFIG)?;
    let revenue = bag.revenue_mode().code(EXIT_CONFIG)?;
    let bin_width = bag
        .get_f64("report.bin_width")
        .code(EXIT_CONFIG)?
        .unwrap_or(10.0);
    out_dir(&args.out)?;

    let fleet = load_meter_csv(&args.fleet, &CsvSchema::default()).code(EXIT_CONFIG)?;
    let categories = match &args.categories {
        Some(p) => load_categories(p).code(EXIT_CONFIG)?,
        None => fleet
            .iter()
            .map(|s| (s.customer_id.clone(), Category::NonDer))
            .collect(),
    };
    let mut config = ScenarioConfig::new("bill", peak, tariff);
    config.impact = options;
    config.revenue = revenue;
    let result = pipeline("bill".into(), fleet, categories, &config).compute(1)?;

    write_bill_artifacts(&args.out, &result, bin_width).code(1)?;
    let mut manifest = Manifest::new("bill", bag.echo().clone(), None);
    manifest.fact("threshold_kw", result.indicator.threshold_kw);
    manifest.fact("revenue_usd", result.revenue);
    manifest.fact("total_old_usd", result.statement.total_old);
    manifest.fact("total_new_usd", result.statement.total_new);
    for name in ["bills.csv", "summary.json", "bills_hist.csv"] {
        manifest.record(&args.out, name).code(1)?;
    }
    manifest.write(&args.out).code(1)?;
    println!(
        "bill: {} customers, revenue {} -> {}",
        result.statement.rows.len(),
        gridfee_core::billing::Money::from_usd(result.revenue),
        args.out.display()
    );
    Ok(())
}

fn write_bill_artifacts(dir: &Path, result: &ScenarioResult, bin_width: f64) -> Result<()> {
    emit::bills_csv(&dir.join("bills.csv"), &result.statement)?;
    emit::summary_json(&dir.join("summary.json"), result, bin_width)?;
    let sections = emit::category_hist_sections(result, bin_width);
    emit::hist_csv(&dir.join("bills_hist.csv"), &sections)?;
    Ok(())
}

/// A loaded scenario spec with its (possibly resampled) fleet.
struct SpecRun {
    file: ScenarioSpecFile,
    homes: Vec<HomeSpec>,
    tz_offset_s: i32,
}

fn prepare_spec(path: &Path) -> Flow<SpecRun> {
    let file = ScenarioSpecFile::load(path).code(EXIT_SPEC)?;
    let (homes, fleet_tz) = match &file.fleet {
        FleetSource::Synth(spec) => {
            spec.validate().code(EXIT_SPEC)?;
            (gen_fleet(spec).code(EXIT_SPEC)?, spec.tz_offset_s)
        }
        FleetSource::Csv(p) => {
            let fleet = load_meter_csv(p, &CsvSchema::default()).code(EXIT_SPEC)?;
            let homes = fleet
                .into_iter()
                .map(|s| HomeSpec::base_only(s.customer_id.clone(), s))
                .collect();
            (homes, 0)
        }
    };
    let tz_offset_s = file.tz_offset_s.unwrap_or(fleet_tz);
    let homes = match file.resample_interval_s {
        None => homes,
        Some(target) => homes
            .into_iter()
            .map(|mut h| -> gridfee_core::Result<HomeSpec> {
                h.base = resample(&h.base, target)?;
                if let Some(ev) = &h.ev_overlay {
                    h.ev_overlay = Some(resample(ev, target)?);
                }
                if let Some(pv) = &h.pv_overlay {
                    h.pv_overlay = Some(resample(pv, target)?);
                }
                Ok(h)
            })
            .collect::<gridfee_core::Result<_>>()
            .code(EXIT_SPEC)?,
    };
    Ok(SpecRun {
        file,
        homes,
        tz_offset_s,
    })
}

fn apply_case(homes: &[HomeSpec], case: &spec::CaseSpec) -> Flow<Vec<HomeSpec>> {
    let mut out: Vec<HomeSpec> = homes.to_vec();
    if case.drop_ev {
        for h in &mut out {
            h.ev_overlay = None;
        }
    }
    if case.drop_pv {
        for h in &mut out {
            h.pv_overlay = None;
        }
    }
    if let Some(battery) = &case.battery {
        let params = battery.to_params().code(EXIT_SPEC)?;
        // equipped homes are picked off the unmodified fleet
        let equipped = battery.equipped(homes).code(EXIT_SPEC)?;
        for h in &mut out {
            if equipped.contains(&h.home_id) {
                h.battery = Some(params);
            }
        }
    }
    Ok(out)
}

fn cmd_scenario(cli: &Cli, args: &SpecArgs) -> Flow<()> {
    let bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    let run = prepare_spec(&args.spec)?;
    let file = &run.file;
    out_dir(&args.out)?;
    let peak = file.peak.to_config().code(EXIT_SPEC)?;
    let tariff = file.tariff.to_config().code(EXIT_SPEC)?;

    let default_case = spec::CaseSpec {
        case_id: "default".into(),
        drop_ev: false,
        drop_pv: false,
        battery: None,
    };
    let case_list: Vec<&spec::CaseSpec> = if file.cases.is_empty() {
        vec![&default_case]
    } else {
        file.cases.iter().collect()
    };

    let mut manifest = Manifest::new("scenario", bag.echo().clone(), seed_of(file));
    manifest.fact("scenario_id", &file.scenario_id);
    let mut results: BTreeMap<String, ScenarioResult> = BTreeMap::new();
    let mut frozen: Option<f64> = None;
    for case in &case_list {
        let homes = apply_case(&run.homes, case)?;
        let mut config = ScenarioConfig::new(
            format!("{}:{}", file.scenario_id, case.case_id),
            peak,
            tariff,
        );
        config.impact = file.impacts;
        config.revenue = file.revenue.to_mode();
        config.tz_offset_s = run.tz_offset_s;
        config.frozen_threshold_kw = frozen;
        let result = run_scenario(&homes, &config).compute(EXIT_SPEC)?;
        if file.freeze_baseline_threshold && frozen.is_none() {
            frozen = Some(result.indicator.threshold_kw);
        }
        let case_dir = args.out.join(&case.case_id);
        std::fs::create_dir_all(&case_dir).code(1)?;
        emit::impacts_csv(&case_dir.join("impacts.csv"), &result.report).code(1)?;
        write_bill_artifacts(&case_dir, &result, file.bin_width).code(1)?;
        let battery_ids = match &case.battery {
            Some(b) => b.equipped(&run.homes).code(EXIT_SPEC)?,
            None => Vec::new(),
        };
        emit::categories_csv(
            &case_dir.join("categories.csv"),
            &result.categories,
            &battery_ids,
        )
        .code(1)?;
        manifest.fact(
            &format!("case.{}.threshold_kw", case.case_id),
            result.indicator.threshold_kw,
        );
        manifest.fact(
            &format!("case.{}.revenue_usd", case.case_id),
            result.revenue,
        );
        for name in [
            "impacts.csv",
            "bills.csv",
            "summary.json",
            "bills_hist.csv",
            "categories.csv",
        ] {
            let rel = format!("{}/{}", case.case_id, name);
            manifest.record(&args.out, &rel).code(1)?;
        }
        results.insert(case.case_id.clone(), result);
    }

    for cmp in &file.comparisons {
        let with = &results[cmp.with.as_str()];
        let without = &results[cmp.without.as_str()];
        let category = cmp
            .category
            .as_deref()
            .map(parse_category)
            .transpose()
            .code(EXIT_SPEC)?;
        let delta = penetration_delta(with, without, category, file.bin_width).compute(1)?;
        let label = match &cmp.category {
            Some(c) => format!("delta_{}_{}_vs_{}", c, cmp.with, cmp.without),
            None => format!("delta_{}_vs_{}", cmp.with, cmp.without),
        };
        emit::delta_csv(&args.out.join(format!("{label}.csv")), &delta).code(1)?;
        emit::hist_csv(
            &args.out.join(format!("{label}_hist.csv")),
            &[(label.clone(), delta.bins.clone())],
        )
        .code(1)?;
        manifest
            .record(&args.out, &format!("{label}.csv"))
            .code(1)?;
        manifest
            .record(&args.out, &format!("{label}_hist.csv"))
            .code(1)?;
    }
    manifest.write(&args.out).code(1)?;
    println!(
        "scenario: {} case(s), {} comparison(s) -> {}",
        case_list.len(),
        file.comparisons.len(),
        args.out.display()
    );
    Ok(())
}

fn seed_of(file: &ScenarioSpecFile) -> Option<u64> {
    match &file.fleet {
        FleetSource::Synth(spec) => Some(spec.seed),
        FleetSource::Csv(_) => None,
    }
}

fn cmd_aggregate(cli: &Cli, args: &SpecArgs) -> Flow<()> {
    let bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    let run = prepare_spec(&args.spec)?;
    let file = &run.file;
    if file.groups.is_empty() {
        return Err(Fail {
            code: EXIT_SPEC,
            err: anyhow!("aggregate: scenario spec has no groups"),
        });
    }
    out_dir(&args.out)?;
    let peak = file.peak.to_config().code(EXIT_SPEC)?;
    let tariff = file.tariff.to_config().code(EXIT_SPEC)?;
    let mut config = ScenarioConfig::new(file.scenario_id.clone(), peak, tariff);
    config.impact = file.impacts;
    config.revenue = file.revenue.to_mode();
    config.tz_offset_s = run.tz_offset_s;

    let base = run_scenario(&run.homes, &config).compute(EXIT_SPEC)?;
    let outcome = aggregate_customers(&base, &file.groups, &config).compute(EXIT_SPEC)?;

    emit::aggregation_csv(&args.out.join("aggregation.csv"), &outcome.groups).code(1)?;
    emit::aggregation_json(&args.out.join("aggregation.json"), &outcome.groups).code(1)?;
    emit::bills_csv(&args.out.join("bills.csv"), &outcome.merged.statement).code(1)?;
    let mut manifest = Manifest::new("aggregate", bag.echo().clone(), seed_of(file));
    manifest.fact("groups", file.groups.len());
    manifest.fact("revenue_usd", outcome.merged.revenue);
    for name in ["aggregation.csv", "aggregation.json", "bills.csv"] {
        manifest.record(&args.out, name).code(1)?;
    }
    manifest.write(&args.out).code(1)?;
    println!(
        "aggregate: {} group(s), revenue {} -> {}",
        outcome.groups.len(),
        gridfee_core::billing::Money::from_usd(outcome.merged.revenue),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Flow<()> {
    let bag = ConfigBag::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    let bin_width = args
        .bin_width
        .or(bag.get_f64("report.bin_width").code(EXIT_CONFIG)?)
        .unwrap_or(10.0);
    out_dir(&args.out)?;
    let text = std::fs::read_to_string(&args.bills)
        .with_context(|| format!("reading bills {}", args.bills.display()))
        .code(EXIT_CONFIG)?;
    let categories = match &args.categories {
        Some(p) => Some(load_categories(p).code(EXIT_CONFIG)?),
        None => None,
    };

    let mut rows: Vec<(String, f64, f64, Option<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 4 {
            return Err(Fail {
                code: EXIT_CONFIG,
                err: anyhow!("bills line {}: expected 4 columns", i + 1),
            });
        }
        let old: f64 = parts[1].parse().context("bill_old_usd").code(EXIT_CONFIG)?;
        let new: f64 = parts[2].parse().context("bill_new_usd").code(EXIT_CONFIG)?;
        let pct = if parts[3] == "n/a" {
            None
        } else {
            parts[3].parse().ok()
        };
        rows.push((parts[0].to_string(), old, new, pct));
    }
    let mut sections: Vec<(String, Vec<gridfee_core::billing::HistBin>)> = Vec::new();
    let all: Vec<f64> = rows.iter().filter_map(|r| r.3).collect();
    sections.push(("all".into(), histogram(&all, bin_width)));
    if let Some(cats) = &categories {
        for cat in [Category::NonDer, Category::Ev, Category::Pv] {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| cats.get(&r.0) == Some(&cat))
                .filter_map(|r| r.3)
                .collect();
            if !vals.is_empty() {
                sections.push((cat.as_str().into(), histogram(&vals, bin_width)));
            }
        }
    }
    emit::hist_csv(&args.out.join("hist.csv"), &sections).code(1)?;

    let total_old: f64 = rows.iter().map(|r| r.1).sum();
    let total_new: f64 = rows.iter().map(|r| r.2).sum();
    let summary = serde_json::json!({
        "customers": rows.len(),
        "total_old_usd": total_old,
        "total_new_usd": total_new,
        "mean_pct_change": if all.is_empty() { None } else { Some(all.iter().sum::<f64>() / all.len() as f64) },
        "bin_width": bin_width,
    });
    std::fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap() + "\n",
    )
    .code(1)?;
    let mut manifest = Manifest::new("report", bag.echo().clone(), None);
    manifest.record(&args.out, "hist.csv").code(1)?;
    manifest.record(&args.out, "summary.json").code(1)?;
    manifest.write(&args.out).code(1)?;
    println!("report: {} rows -> {}", rows.len(), args.out.display());
    Ok(())
}
