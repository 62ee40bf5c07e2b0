//! Scenario, topology, trace and subscriber files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use imsbed_core::endpoint::Topology;
use imsbed_core::harness::{Scenario, Trace};
use imsbed_core::hss::{HssError, HssStore};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Hss {
        path: PathBuf,
        #[source]
        source: HssError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| FileError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Replaces `path` with `bytes` in one step: a crash leaves either the old
/// file or the new one, never a torn write.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| FileError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario, FileError> {
    read_json(path)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<(), FileError> {
    write_atomic(path, scenario.to_json().as_bytes())
}

pub fn load_topology(path: &Path) -> Result<Topology, FileError> {
    read_json(path)
}

pub fn load_trace(path: &Path) -> Result<Trace, FileError> {
    read_json(path)
}

/// Writes the canonical serialization, so identical runs give identical
/// files.
pub fn save_trace(path: &Path, trace: &Trace) -> Result<(), FileError> {
    write_atomic(path, trace.to_canonical_json().as_bytes())
}

pub fn load_hss(path: &Path) -> Result<HssStore, FileError> {
    let text = read_text(path)?;
    HssStore::from_json(&text).map_err(|source| FileError::Hss {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_hss(path: &Path, store: &HssStore) -> Result<(), FileError> {
    write_atomic(path, store.to_json().as_bytes())
}
