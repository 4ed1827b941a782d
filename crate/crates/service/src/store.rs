//! On-disk layout under the data directory:
//!
//! ```text
//! index.json          datasets and fit jobs
//! blobs/<sha256>.csv  dataset contents, content-addressed
//! fits/<id>.json      full result of each finished fit
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ncsde::engine::FitResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::ServiceError;
use crate::types::{DatasetInfo, FitView};

const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Index {
    pub version: u32,
    pub datasets: Vec<DatasetInfo>,
    pub fits: Vec<FitView>,
}

impl Default for Index {
    fn default() -> Self {
        Self {
            version: INDEX_VERSION,
            datasets: Vec::new(),
            fits: Vec::new(),
        }
    }
}

impl Index {
    pub fn decode(bytes: &[u8]) -> Result<Self, ServiceError> {
        let index: Index = serde_json::from_slice(bytes)?;
        if index.version != INDEX_VERSION {
            return Err(ServiceError::Storage(format!(
                "index version {} is not supported (expected {INDEX_VERSION})",
                index.version
            )));
        }
        Ok(index)
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Store {
    pub fn open(root: &Path) -> Result<Self, ServiceError> {
        fs::create_dir_all(root.join("blobs"))?;
        fs::create_dir_all(root.join("fits"))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn blob_path(&self, hash: &str) -> Result<PathBuf, ServiceError> {
        if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ServiceError::Storage(format!("malformed content hash `{hash}`")));
        }
        Ok(self.root.join("blobs").join(format!("{hash}.csv")))
    }

    fn fit_path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') {
            return Err(ServiceError::Storage(format!("malformed fit id `{id}`")));
        }
        Ok(self.root.join("fits").join(format!("{id}.json")))
    }

    /// Stores `bytes` unless an identical blob exists; returns its hash.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, ServiceError> {
        let hash = content_hash(bytes);
        let path = self.blob_path(&hash)?;
        if !path.exists() {
            atomic_write(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> Result<Vec<u8>, ServiceError> {
        let bytes = fs::read(self.blob_path(hash)?)?;
        if content_hash(&bytes) != hash {
            return Err(ServiceError::Storage(format!("blob {hash} does not match its hash")));
        }
        Ok(bytes)
    }

    pub fn load_index(&self) -> Result<Index, ServiceError> {
        let path = self.root.join("index.json");
        if !path.exists() {
            return Ok(Index::default());
        }
        Index::decode(&fs::read(&path)?)
    }

    pub fn save_index(&self, index: &Index) -> Result<(), ServiceError> {
        atomic_write(&self.root.join("index.json"), &serde_json::to_vec_pretty(index)?)
    }

    pub fn save_fit(&self, id: &str, result: &FitResult) -> Result<(), ServiceError> {
        atomic_write(&self.fit_path(id)?, &serde_json::to_vec(result)?)
    }

    pub fn load_fit(&self, id: &str) -> Result<FitResult, ServiceError> {
        Ok(serde_json::from_slice(&fs::read(self.fit_path(id)?)?)?)
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let dir = path
        .parent()
        .ok_or_else(|| ServiceError::Storage(format!("{} has no parent directory", path.display())))?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| ServiceError::from(e.error))?;
    Ok(())
}
