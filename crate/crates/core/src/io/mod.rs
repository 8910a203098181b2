//! Configuration, CSV tables, artifact formats, manifests and charts.

pub mod config;
pub mod formats;
pub mod manifest;
pub mod svg;
pub mod table;

pub use config::{Command, GraphKind, RunConfig, KEYS};
pub use formats::*;
pub use manifest::{config_hash, manifest_text, write_manifest};
pub use svg::{Chart, Series};
pub use table::{read_csv, write_csv, Table, Value};
