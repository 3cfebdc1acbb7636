//! Grid-access charges from smart-meter demand series.
//!
//! The library turns per-customer kW time series into two grid impact
//! factors — peak-weighted demand magnitude (W) and the correlation of a
//! customer's demand changes with total system variability (V) — and
//! allocates a fixed revenue pool across the fleet by those factors. It also
//! computes legacy volumetric/net-metering bills for comparison, simulates
//! DER scenarios (EV, PV, battery, customer aggregation), and generates
//! seeded synthetic fleets.
//!
//! Data-parallel stages run on rayon when the default `parallel` feature is
//! enabled; disabling it yields a sequential build with bit-identical
//! results.

pub mod billing;
pub mod error;
pub mod impact;
pub mod io;
mod par;
pub mod peak;
pub mod scenario;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
