//! File-backed profile store.
//!
//! Layout under the root directory:
//!
//! ```text
//! observations/<key>.json   one MetricObservation per (workload, level, metric, config)
//! reports/<name>.json       free-form JSON reports
//! index.json                every observation file, rebuilt from the directory on write
//! ```
//!
//! Files are written to a temporary name and renamed into place, so a
//! reader never sees a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricKind, MetricObservation};
use crate::trace::Level;

const OBS_DIR: &str = "observations";
const REPORT_DIR: &str = "reports";
const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed store file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("no observation for {0}")]
    Missing(StoreKey),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StoreKey {
    pub workload: String,
    pub level: Level,
    pub metric: MetricKind,
    pub config: String,
}

impl StoreKey {
    pub fn new(workload: &str, level: Level, metric: MetricKind, config: &str) -> Self {
        Self {
            workload: workload.to_string(),
            level,
            metric,
            config: config.to_string(),
        }
    }

    pub fn of(obs: &MetricObservation) -> Self {
        Self::new(&obs.workload_name, obs.level, obs.metric, &obs.config_label)
    }

    /// Injective file stem: the free-text parts are percent-encoded.
    pub fn file_stem(&self) -> String {
        format!(
            "{}.{}.{}.{}",
            encode(&self.workload),
            self.level,
            self.metric.short_name(),
            encode(&self.config)
        )
    }
}

impl std::fmt::Display for StoreKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(workload={}, level={}, metric={}, config={})",
            self.workload, self.level, self.metric, self.config
        )
    }
}

fn encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    #[serde(flatten)]
    pub key: StoreKey,
    pub file: String,
}

#[derive(Debug, Clone)]
pub struct ProfileStore {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` via a uniquely named sibling and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("store values serialize");
    v.push(b'\n');
    v
}

impl ProfileStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for d in [OBS_DIR, REPORT_DIR] {
            let p = root.join(d);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let store = Self { root };
        if !store.index_path().exists() {
            store.rebuild_index()?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join(INDEX_FILE)
    }

    fn obs_path(&self, key: &StoreKey) -> PathBuf {
        self.root.join(OBS_DIR).join(format!("{}.json", key.file_stem()))
    }

    /// Stores an observation, replacing any with the same key.
    pub fn put(&self, obs: &MetricObservation) -> Result<StoreKey, StoreError> {
        let key = StoreKey::of(obs);
        write_atomic(&self.obs_path(&key), &to_json_bytes(obs))?;
        self.rebuild_index()?;
        Ok(key)
    }

    pub fn put_all<'a>(
        &self,
        obs: impl IntoIterator<Item = &'a MetricObservation>,
    ) -> Result<Vec<StoreKey>, StoreError> {
        let mut keys = Vec::new();
        for o in obs {
            let key = StoreKey::of(o);
            write_atomic(&self.obs_path(&key), &to_json_bytes(o))?;
            keys.push(key);
        }
        self.rebuild_index()?;
        Ok(keys)
    }

    pub fn get(&self, key: &StoreKey) -> Result<MetricObservation, StoreError> {
        let path = self.obs_path(key);
        if !path.exists() {
            return Err(StoreError::Missing(key.clone()));
        }
        read_json(&path)
    }

    /// Entries as recorded in the index, sorted by key.
    pub fn list(&self) -> Result<Vec<IndexEntry>, StoreError> {
        read_json(&self.index_path())
    }

    /// Rescans the observation directory and rewrites the index.
    pub fn rebuild_index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let entries = self.scan()?;
        write_atomic(&self.index_path(), &to_json_bytes(&entries))?;
        Ok(entries)
    }

    fn scan(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let dir = self.root.join(OBS_DIR);
        let mut entries = Vec::new();
        for item in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let item = item.map_err(io_err(&dir))?;
            let name = item.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || !name.ends_with(".json") {
                continue;
            }
            let obs: MetricObservation = read_json(&item.path())?;
            entries.push(IndexEntry {
                key: StoreKey::of(&obs),
                file: format!("{OBS_DIR}/{name}"),
            });
        }
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(entries)
    }

    /// True when the index lists exactly the observation files on disk.
    pub fn index_is_consistent(&self) -> Result<bool, StoreError> {
        Ok(self.list()? == self.scan()?)
    }

    /// Writes a named JSON report and returns its path.
    pub fn put_report<T: Serialize>(&self, name: &str, report: &T) -> Result<PathBuf, StoreError> {
        let path = self.root.join(REPORT_DIR).join(format!("{}.json", encode(name)));
        write_atomic(&path, &to_json_bytes(report))?;
        Ok(path)
    }

    pub fn get_report<T: DeserializeOwned>(&self, name: &str) -> Result<T, StoreError> {
        read_json(&self.root.join(REPORT_DIR).join(format!("{}.json", encode(name))))
    }
}
