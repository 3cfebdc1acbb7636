//! Fleet CSV ingestion and emission.
//!
//! Interchange schema (header required): `timestamp,customer_id,kw` with
//! ISO-8601 UTC timestamps and `.` decimal points. One file holds a whole
//! fleet; every customer must form a regular grid and all customers must
//! share it. Gaps and duplicate timestamps are rejected, never imputed:
//! the downstream factors are bill-bearing, so silent repair is off limits.
//!
//! Values are written with Rust's shortest-roundtrip float formatting, so a
//! load → write → load cycle reproduces finite values bit for bit.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

use crate::error::{Error, Result};
use crate::timeseries::{MeterSeries, TimeGrid};

/// Column-name mapping for [`load_meter_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub timestamp: String,
    pub customer_id: String,
    pub kw: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            customer_id: "customer_id".into(),
            kw: "kw".into(),
        }
    }
}

fn parse_timestamp(raw: &str, line: u64) -> Result<i64> {
    DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.timestamp())
        .map_err(|e| Error::InvalidConfig(format!("line {line}: bad timestamp `{raw}`: {e}")))
}

/// Epoch seconds rendered as `2016-01-01T00:00:00Z`.
pub fn format_timestamp(epoch_s: i64) -> String {
    Utc.timestamp_opt(epoch_s, 0)
        .single()
        .expect("valid epoch seconds")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Loads a fleet from CSV. Returns one series per customer, sorted by id,
/// all on a common grid.
pub fn load_meter_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<MeterSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let ts_col = col(&schema.timestamp)?;
    let id_col = col(&schema.customer_id)?;
    let kw_col = col(&schema.kw)?;

    // Per customer: (timestamps, values) in file order.
    let mut rows: BTreeMap<String, (Vec<i64>, Vec<f64>)> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx as u64 + 2; // 1-based, after header
        let ts = parse_timestamp(&record[ts_col], line)?;
        let id = record[id_col].to_string();
        let kw: f64 = record[kw_col].parse().map_err(|e| {
            Error::InvalidConfig(format!("line {line}: bad kw `{}`: {e}", &record[kw_col]))
        })?;
        let entry = rows.entry(id).or_default();
        entry.0.push(ts);
        entry.1.push(kw);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFleet);
    }

    let mut fleet = Vec::with_capacity(rows.len());
    let mut shared_grid: Option<TimeGrid> = None;
    for (id, (mut ts, mut values)) in rows {
        // Sort rows per customer by timestamp, keeping values aligned.
        let mut order: Vec<usize> = (0..ts.len()).collect();
        order.sort_by_key(|&i| ts[i]);
        if order.iter().enumerate().any(|(pos, &i)| pos != i) {
            let ts2: Vec<i64> = order.iter().map(|&i| ts[i]).collect();
            let vals2: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            ts = ts2;
            values = vals2;
        }
        let grid = infer_grid(&id, &ts, shared_grid)?;
        if let Some(g) = shared_grid {
            if g != grid {
                return Err(Error::GridMismatch(format!(
                    "customer `{id}` is on a different grid than the rest of the fleet"
                )));
            }
        } else {
            shared_grid = Some(grid);
        }
        fleet.push(MeterSeries::new(id, grid, values)?);
    }
    Ok(fleet)
}

/// Infers the regular grid for one customer, rejecting gaps and duplicates.
fn infer_grid(id: &str, ts: &[i64], shared: Option<TimeGrid>) -> Result<TimeGrid> {
    let first = ts[0];
    if ts.len() == 1 {
        // A single row carries no spacing; only valid if the fleet grid is
        // already known (and then count must match, which it cannot unless
        // the fleet is single-slot).
        let interval = shared.map(|g| g.interval_s).unwrap_or(60);
        return TimeGrid::new(first, interval, 1);
    }
    let step = ts[1] - first;
    if step <= 0 {
        return Err(Error::IrregularGrid {
            customer: id.to_string(),
            detail: format!("duplicate timestamp at {}", format_timestamp(ts[1])),
        });
    }
    for (i, pair) in ts.windows(2).enumerate() {
        let d = pair[1] - pair[0];
        if d == 0 {
            return Err(Error::IrregularGrid {
                customer: id.to_string(),
                detail: format!("duplicate timestamp at {}", format_timestamp(pair[1])),
            });
        }
        if d != step {
            return Err(Error::IrregularGrid {
                customer: id.to_string(),
                detail: format!(
                    "expected {}s spacing, found {}s after {}",
                    step,
                    d,
                    format_timestamp(ts[i])
                ),
            });
        }
    }
    let interval = u32::try_from(step).map_err(|_| Error::IrregularGrid {
        customer: id.to_string(),
        detail: format!("interval {step}s out of range"),
    })?;
    TimeGrid::new(first, interval, ts.len())
}

/// Writes a fleet in the interchange schema, customer-major, slots in time
/// order. Floats use shortest-roundtrip formatting.
pub fn write_meter_csv(path: &Path, fleet: &[MeterSeries]) -> Result<()> {
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| fleet[a].customer_id.cmp(&fleet[b].customer_id));
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "timestamp,customer_id,kw")?;
    for &i in &order {
        let s = &fleet[i];
        for (t, v) in s.values.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                format_timestamp(s.grid.timestamp(t)),
                s.customer_id,
                v
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_aligned_customers() {
        let f = write_tmp(
            "timestamp,customer_id,kw\n\
             2016-01-01T00:00:00Z,a,1.5\n\
             2016-01-01T00:01:00Z,a,2.5\n\
             2016-01-01T00:02:00Z,a,3.5\n\
             2016-01-01T00:00:00Z,b,0.5\n\
             2016-01-01T00:01:00Z,b,-0.5\n\
             2016-01-01T00:02:00Z,b,0.0\n",
        );
        let fleet = load_meter_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(fleet.len(), 2);
        assert_eq!(fleet[0].customer_id, "a");
        assert_eq!(fleet[0].grid.count, 3);
        assert_eq!(fleet[1].values, vec![0.5, -0.5, 0.0]);
    }

    #[test]
    fn missing_minute_is_irregular() {
        let f = write_tmp(
            "timestamp,customer_id,kw\n\
             2016-01-01T00:00:00Z,a,1.0\n\
             2016-01-01T00:01:00Z,a,1.0\n\
             2016-01-01T00:03:00Z,a,1.0\n",
        );
        let err = load_meter_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::IrregularGrid { .. }), "{err}");
    }

    #[test]
    fn duplicate_timestamp_is_irregular() {
        let f = write_tmp(
            "timestamp,customer_id,kw\n\
             2016-01-01T00:00:00Z,a,1.0\n\
             2016-01-01T00:01:00Z,a,1.0\n\
             2016-01-01T00:01:00Z,a,2.0\n",
        );
        let err = load_meter_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::IrregularGrid { .. }));
    }

    #[test]
    fn missing_column_named() {
        let f = write_tmp("timestamp,customer_id,power\n2016-01-01T00:00:00Z,a,1.0\n");
        let err = load_meter_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "kw"));
    }

    #[test]
    fn nan_values_rejected() {
        let f = write_tmp(
            "timestamp,customer_id,kw\n\
             2016-01-01T00:00:00Z,a,1.0\n\
             2016-01-01T00:01:00Z,a,NaN\n",
        );
        let err = load_meter_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(
            matches!(err, Error::NonFiniteValue { slot: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn grid_mismatch_across_customers() {
        let f = write_tmp(
            "timestamp,customer_id,kw\n\
             2016-01-01T00:00:00Z,a,1.0\n\
             2016-01-01T00:01:00Z,a,1.0\n\
             2016-01-01T00:00:00Z,b,1.0\n\
             2016-01-01T00:02:00Z,b,1.0\n",
        );
        let err = load_meter_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let f = write_tmp(
            "timestamp,customer_id,kw\n\
             2016-01-01T00:01:00Z,a,2.0\n\
             2016-01-01T00:00:00Z,a,1.0\n",
        );
        let fleet = load_meter_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(fleet[0].values, vec![1.0, 2.0]);
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let grid = TimeGrid::new(1_451_606_400, 60, 4).unwrap();
        let fleet = vec![
            MeterSeries::new("a", grid, vec![0.1, -2.7e-13, 3.0, 6.6]).unwrap(),
            MeterSeries::new("b", grid, vec![1.0 / 3.0, f64::MIN_POSITIVE, -0.0, 9.9]).unwrap(),
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_meter_csv(f.path(), &fleet).unwrap();
        let loaded = load_meter_csv(f.path(), &CsvSchema::default()).unwrap();
        for (orig, back) in fleet.iter().zip(&loaded) {
            assert_eq!(orig.grid, back.grid);
            for (x, y) in orig.values.iter().zip(&back.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
