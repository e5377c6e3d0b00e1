#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod bma;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod linalg;
pub mod panel;
pub mod pricing;
pub mod prior;
pub mod report;
pub mod sim;
pub mod stats;
pub mod trader;
pub mod ts_layer;

pub use error::{Error, ErrorKind, Result};
pub use panel::{AssetClass, DurationInputs, FactorMeta, ReturnPanel, Scaling};
