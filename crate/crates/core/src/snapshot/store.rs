//! Content-addressed snapshot corpus on disk.
//!
//! Layout per snapshot: `<corpus>/<snapshot_id>/meta.json`, `page.html` and
//! `scripts/<n>.js`. A snapshot directory is assembled under a temporary
//! name and renamed into place, so a reader never sees a partial entry and
//! concurrent stores of the same id are harmless.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FetchStatus, ScriptEntry, SiteSnapshot};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("snapshot {0} not found in corpus")]
    NotFound(String),
    #[error("snapshot {id} is corrupt: {reason}")]
    Corrupt { id: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    snapshot_id: String,
    url: String,
    final_url: String,
    fetched_at: DateTime<Utc>,
    status: FetchStatus,
    truncated: bool,
    /// Hex string so the full 64 bits survive JSON readers that use doubles.
    content_fingerprint: String,
    scripts: Vec<ScriptMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptMeta {
    url: String,
    file: String,
}

fn is_valid_id(id: &str) -> bool {
    id.len() == 64
        && id
            .bytes()
            .all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

/// Writes `snapshot` under `corpus` and returns its id. Storing content that
/// is already present leaves the existing entry untouched.
pub fn store_snapshot(corpus: &Path, snapshot: &SiteSnapshot) -> Result<String, StoreError> {
    let id = snapshot.snapshot_id.clone();
    let target = corpus.join(&id);
    if target.join("meta.json").is_file() {
        return Ok(id);
    }
    fs::create_dir_all(corpus).map_err(io_err(corpus))?;
    let staging = tempfile::Builder::new()
        .prefix(&format!(".tmp-{}-", &id[..12.min(id.len())]))
        .tempdir_in(corpus)
        .map_err(io_err(corpus))?;
    let dir = staging.path();

    let page = dir.join("page.html");
    fs::write(&page, &snapshot.html).map_err(io_err(&page))?;
    let mut scripts = Vec::with_capacity(snapshot.scripts.len());
    if !snapshot.scripts.is_empty() {
        let sdir = dir.join("scripts");
        fs::create_dir(&sdir).map_err(io_err(&sdir))?;
        for (n, s) in snapshot.scripts.iter().enumerate() {
            let file = format!("scripts/{n}.js");
            let path = dir.join(&file);
            fs::write(&path, &s.body).map_err(io_err(&path))?;
            scripts.push(ScriptMeta {
                url: s.url.clone(),
                file,
            });
        }
    }
    let meta = Meta {
        snapshot_id: id.clone(),
        url: snapshot.url.clone(),
        final_url: snapshot.final_url.clone(),
        fetched_at: snapshot.fetched_at,
        status: snapshot.status.clone(),
        truncated: snapshot.truncated,
        content_fingerprint: format!("{:016x}", snapshot.content_fingerprint),
        scripts,
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json).map_err(io_err(&meta_path))?;

    let staged = staging.keep();
    match fs::rename(&staged, &target) {
        Ok(()) => Ok(id),
        // another writer won the race with identical content
        Err(_) if target.join("meta.json").is_file() => {
            let _ = fs::remove_dir_all(&staged);
            Ok(id)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staged);
            Err(StoreError::Io {
                path: target,
                source: e,
            })
        }
    }
}

/// Reads a snapshot back and checks that its content still hashes to `id`.
pub fn load_snapshot(corpus: &Path, id: &str) -> Result<SiteSnapshot, StoreError> {
    if !is_valid_id(id) {
        return Err(StoreError::NotFound(id.to_string()));
    }
    let dir = corpus.join(id);
    let meta_path = dir.join("meta.json");
    let raw = match fs::read(&meta_path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(StoreError::NotFound(id.to_string()))
        }
        Err(e) => {
            return Err(StoreError::Io {
                path: meta_path,
                source: e,
            })
        }
    };
    let corrupt = |reason: String| StoreError::Corrupt {
        id: id.to_string(),
        reason,
    };
    let meta: Meta = serde_json::from_slice(&raw).map_err(|e| corrupt(e.to_string()))?;
    let page = dir.join("page.html");
    let html = fs::read(&page).map_err(io_err(&page))?;
    let mut scripts = Vec::with_capacity(meta.scripts.len());
    for s in &meta.scripts {
        if s.file.contains("..") {
            return Err(corrupt(format!("script path {:?}", s.file)));
        }
        let path = dir.join(&s.file);
        let body = fs::read(&path).map_err(io_err(&path))?;
        scripts.push(ScriptEntry {
            url: s.url.clone(),
            body,
        });
    }
    let snap = SiteSnapshot::new(
        meta.url,
        meta.final_url,
        meta.fetched_at,
        meta.status,
        html,
        meta.truncated,
        scripts,
    );
    if snap.snapshot_id != id {
        return Err(corrupt("content does not hash to its id".into()));
    }
    Ok(snap)
}

/// Ids of all complete snapshots in the corpus, sorted.
pub fn list_snapshots(corpus: &Path) -> Result<Vec<String>, StoreError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(corpus).map_err(io_err(corpus))? {
        let entry = entry.map_err(io_err(corpus))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if is_valid_id(&name) && entry.path().join("meta.json").is_file() {
            ids.push(name);
        }
    }
    ids.sort();
    Ok(ids)
}
