//! Report writers: plot-ready CSV tables and JSON summaries. All floats use
//! shortest-roundtrip formatting and all maps are ordered, so outputs are
//! byte-stable across runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use gridfee_core::billing::{BillStatement, HistBin};
use gridfee_core::impact::ImpactReport;
use gridfee_core::scenario::{Category, DeltaReport, GroupReport, ScenarioResult};

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| x.to_string())
}

pub fn impacts_csv(path: &Path, report: &ImpactReport) -> Result<()> {
    let mut out = String::from("customer_id,w,w_share,v,v_share\n");
    for c in &report.customers {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.customer_id, c.w, c.w_share, c.v, c.v_share
        ));
    }
    write_file(path, &out)
}

#[derive(Serialize)]
struct ImpactsJson<'a> {
    threshold_kw: f64,
    k_kw: f64,
    sum_w: f64,
    sum_v: f64,
    customers: &'a [gridfee_core::impact::CustomerImpact],
}

pub fn impacts_json(
    path: &Path,
    report: &ImpactReport,
    threshold_kw: f64,
    k_kw: f64,
) -> Result<()> {
    let doc = ImpactsJson {
        threshold_kw,
        k_kw,
        sum_w: report.sum_w,
        sum_v: report.sum_v,
        customers: &report.customers,
    };
    write_file(path, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

pub fn bills_csv(path: &Path, statement: &BillStatement) -> Result<()> {
    let mut out = String::from("customer_id,bill_old_usd,bill_new_usd,pct_change\n");
    for r in &statement.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.customer_id,
            r.bill_old,
            r.bill_new,
            fmt_opt(r.pct_change)
        ));
    }
    write_file(path, &out)
}

pub fn hist_csv(path: &Path, sections: &[(String, Vec<HistBin>)]) -> Result<()> {
    let mut out = String::from("category,bin_lo,bin_hi,count\n");
    for (label, bins) in sections {
        for b in bins {
            out.push_str(&format!("{},{},{},{}\n", label, b.lo, b.hi, b.count));
        }
    }
    write_file(path, &out)
}

#[derive(Serialize)]
struct SummaryJson {
    revenue_usd: f64,
    total_old_usd: f64,
    total_new_usd: f64,
    conservation_residual_rel: f64,
    bin_width_pct: f64,
    categories: Vec<CategoryJson>,
}

#[derive(Serialize)]
struct CategoryJson {
    category: String,
    count: usize,
    total_old_usd: f64,
    total_new_usd: f64,
    mean_pct_change: Option<f64>,
    pct_change_bins: Vec<HistBin>,
}

pub fn summary_json(path: &Path, result: &ScenarioResult, bin_width: f64) -> Result<()> {
    let st = &result.statement;
    let residual = if result.revenue != 0.0 {
        ((st.total_new - result.revenue) / result.revenue).abs()
    } else {
        (st.total_new - result.revenue).abs()
    };
    let categories = result
        .category_summaries()
        .into_iter()
        .map(|s| {
            let changes: Vec<f64> = result
                .statement
                .rows
                .iter()
                .filter(|r| result.categories.get(&r.customer_id) == Some(&s.category))
                .filter_map(|r| r.pct_change)
                .collect();
            CategoryJson {
                category: s.category.as_str().to_string(),
                count: s.count,
                total_old_usd: s.total_old,
                total_new_usd: s.total_new,
                mean_pct_change: s.mean_pct_change,
                pct_change_bins: gridfee_core::billing::histogram(&changes, bin_width),
            }
        })
        .collect();
    let doc = SummaryJson {
        revenue_usd: result.revenue,
        total_old_usd: st.total_old,
        total_new_usd: st.total_new,
        conservation_residual_rel: residual,
        bin_width_pct: bin_width,
        categories,
    };
    write_file(path, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// Per-category percentage-change histograms of a statement.
pub fn category_hist_sections(
    result: &ScenarioResult,
    bin_width: f64,
) -> Vec<(String, Vec<HistBin>)> {
    let mut sections = Vec::new();
    let all: Vec<f64> = result
        .statement
        .rows
        .iter()
        .filter_map(|r| r.pct_change)
        .collect();
    sections.push((
        "all".to_string(),
        gridfee_core::billing::histogram(&all, bin_width),
    ));
    for cat in [Category::NonDer, Category::Ev, Category::Pv] {
        let vals: Vec<f64> = result
            .statement
            .rows
            .iter()
            .filter(|r| result.categories.get(&r.customer_id) == Some(&cat))
            .filter_map(|r| r.pct_change)
            .collect();
        if !vals.is_empty() {
            sections.push((
                cat.as_str().to_string(),
                gridfee_core::billing::histogram(&vals, bin_width),
            ));
        }
    }
    sections
}

pub fn delta_csv(path: &Path, delta: &DeltaReport) -> Result<()> {
    let mut out = String::from("home_id,bill_with_usd,bill_without_usd,pct_change\n");
    for r in &delta.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.home_id,
            r.bill_with,
            r.bill_without,
            fmt_opt(r.pct_change)
        ));
    }
    write_file(path, &out)
}

pub fn aggregation_csv(path: &Path, groups: &[GroupReport]) -> Result<()> {
    let mut out = String::from(
        "group_id,member_id,member_w_share,member_v_share,member_bill_new_usd,\
         group_w_share,group_v_share,group_bill_new_usd,savings_usd,savings_pct\n",
    );
    for g in groups {
        for (i, id) in g.member_ids.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                g.group_id,
                id,
                g.member_w_shares[i],
                g.member_v_shares[i],
                g.member_bills_new[i],
                g.group_w_share,
                g.group_v_share,
                g.group_bill_new,
                g.savings_usd,
                fmt_opt(g.savings_pct)
            ));
        }
    }
    write_file(path, &out)
}

pub fn aggregation_json(path: &Path, groups: &[GroupReport]) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(groups)? + "\n"))
}

/// `home_id,category,has_battery` rows for downstream tools.
pub fn categories_csv(
    path: &Path,
    categories: &BTreeMap<String, Category>,
    battery_ids: &[String],
) -> Result<()> {
    let mut out = String::from("home_id,category,has_battery\n");
    for (id, cat) in categories {
        let has_battery = battery_ids.iter().any(|b| b == id);
        out.push_str(&format!("{},{},{}\n", id, cat.as_str(), has_battery));
    }
    write_file(path, &out)
}
