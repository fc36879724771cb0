//! Configuration files, binary snapshots and CSV time series.

mod config;
mod snapshot;
mod timeseries;

use std::path::Path;

use sha2::{Digest, Sha256};

pub use config::{
    parse_config, serialize_config, ChecksConfig, Config, GridConfig, InitialData, OutputConfig,
};
pub use snapshot::{
    decode_header, decode_snapshot, encode_snapshot, read_snapshot, write_snapshot, SnapshotHeader,
    HEADER_LEN, MAGIC, VERSION,
};
pub(crate) use config::{line_of, parse_document};
pub use timeseries::{header, read_rows, read_timeseries, write_rows, write_timeseries};

use crate::error::{Error, Result};

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&bytes))
}
