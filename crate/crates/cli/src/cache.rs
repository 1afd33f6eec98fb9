//! Content-addressed on-disk cache.
//!
//! Entries live at `<root>/<kind>/<key>.json`; the first line carries a
//! sha256 of the payload so truncated or edited files are detected and
//! recomputed. Writers take `<key>.lock` with `create_new` and publish by
//! atomic rename, so readers never see partial files.

use crate::spec::sha256_hex;
use log::{debug, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

pub const ENV_DIR: &str = "ORBIZETA_CACHE_DIR";
const HEADER: &str = "orbizeta-cache v1 sha256=";
const STALE_LOCK: Duration = Duration::from_secs(600);
pub const KINDS: [&str; 2] = ["power", "residues"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookup {
    Hit,
    Miss,
    /// Entry existed but failed its checksum or did not parse.
    Corrupt,
    Disabled,
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: Option<PathBuf>,
}

/// Default location: $ORBIZETA_CACHE_DIR, else the user cache directory.
pub fn default_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(ENV_DIR).filter(|v| !v.is_empty()) {
        return PathBuf::from(d);
    }
    if let Some(d) = std::env::var_os("XDG_CACHE_HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(d).join("orbizeta");
    }
    if let Some(h) = std::env::var_os("HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(h).join(".cache").join("orbizeta");
    }
    PathBuf::from(".orbizeta-cache")
}

fn probe(root: &Path) -> std::io::Result<()> {
    for kind in KINDS {
        fs::create_dir_all(root.join(kind))?;
    }
    let mut f = tempfile::NamedTempFile::new_in(root)?;
    f.write_all(b"probe")?;
    Ok(())
}

impl Cache {
    /// Opens the cache at `root`; an unusable directory degrades to a
    /// disabled cache with a warning.
    pub fn open(root: PathBuf) -> Self {
        match probe(&root) {
            Ok(()) => Cache { root: Some(root) },
            Err(e) => {
                warn!("cache directory {} is not writable ({e}); continuing without cache", root.display());
                Cache { root: None }
            }
        }
    }

    pub fn disabled() -> Self {
        Cache { root: None }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn enabled(&self) -> bool {
        self.root.is_some()
    }

    fn entry(&self, kind: &str, key: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(kind).join(format!("{key}.json")))
    }

    pub fn load<T: DeserializeOwned>(&self, kind: &str, key: &str) -> (Lookup, Option<T>) {
        let Some(path) = self.entry(kind, key) else {
            return (Lookup::Disabled, None);
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return (Lookup::Miss, None),
            Err(e) => {
                warn!("cannot read cache entry {} ({e}); recomputing", path.display());
                return (Lookup::Corrupt, None);
            }
        };
        match decode(&text) {
            Some(v) => {
                debug!("cache hit {kind}/{key}");
                (Lookup::Hit, Some(v))
            }
            None => {
                warn!("cache entry {} is corrupt; discarding and recomputing", path.display());
                let _ = fs::remove_file(&path);
                (Lookup::Corrupt, None)
            }
        }
    }

    /// Stores `value`; returns false when the entry was not written (cache
    /// disabled, another writer holds the lock, or an I/O error).
    pub fn store<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> bool {
        let Some(path) = self.entry(kind, key) else {
            return false;
        };
        let dir = path.parent().expect("entry has a parent").to_path_buf();
        let Some(_lock) = KeyLock::acquire(&dir, key) else {
            debug!("cache entry {kind}/{key} is being written by another process; skipping");
            return false;
        };
        let payload = serde_json::to_string(value).expect("cache payloads serialize");
        let res = (|| -> std::io::Result<()> {
            let mut f = tempfile::NamedTempFile::new_in(&dir)?;
            f.write_all(encode(&payload).as_bytes())?;
            f.as_file().sync_all()?;
            f.persist(&path).map_err(|e| e.error)?;
            Ok(())
        })();
        if let Err(e) = res {
            warn!("cannot write cache entry {} ({e})", path.display());
            return false;
        }
        true
    }

    /// Removes every entry; returns how many files were deleted.
    pub fn clear(&self) -> std::io::Result<usize> {
        let Some(root) = &self.root else {
            return Ok(0);
        };
        let mut n = 0;
        for kind in KINDS {
            let dir = root.join(kind);
            let Ok(rd) = fs::read_dir(&dir) else { continue };
            for ent in rd {
                let p = ent?.path();
                if p.is_file() {
                    fs::remove_file(&p)?;
                    n += 1;
                }
            }
        }
        Ok(n)
    }
}

fn encode(payload: &str) -> String {
    format!("{HEADER}{}\n{payload}", sha256_hex(payload.as_bytes()))
}

fn decode<T: DeserializeOwned>(text: &str) -> Option<T> {
    let (head, payload) = text.split_once('\n')?;
    let sum = head.strip_prefix(HEADER)?;
    if sum != sha256_hex(payload.as_bytes()) {
        return None;
    }
    serde_json::from_str(payload).ok()
}

struct KeyLock {
    path: PathBuf,
}

impl KeyLock {
    fn acquire(dir: &Path, key: &str) -> Option<KeyLock> {
        let path = dir.join(format!("{key}.lock"));
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Some(KeyLock { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    // a crashed writer leaves its lock behind
                    let stale = fs::metadata(&path)
                        .and_then(|m| m.modified())
                        .ok()
                        .and_then(|t| SystemTime::now().duration_since(t).ok())
                        .is_some_and(|age| age > STALE_LOCK);
                    if !stale {
                        return None;
                    }
                    let _ = fs::remove_file(&path);
                }
                Err(_) => return None,
            }
        }
        None
    }
}

impl Drop for KeyLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::open(dir.path().to_path_buf());
        assert!(c.enabled());
        assert_eq!(c.load::<Vec<f64>>("power", "k").0, Lookup::Miss);
        assert!(c.store("power", "k", &vec![1.5, -2.0]));
        let (l, v) = c.load::<Vec<f64>>("power", "k");
        assert_eq!(l, Lookup::Hit);
        assert_eq!(v.unwrap(), vec![1.5, -2.0]);

        let p = dir.path().join("power").join("k.json");
        let text = fs::read_to_string(&p).unwrap().replace("1.5", "1.6");
        fs::write(&p, text).unwrap();
        assert_eq!(c.load::<Vec<f64>>("power", "k").0, Lookup::Corrupt);
        assert!(!p.exists());
    }

    #[test]
    fn held_lock_blocks_writer() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::open(dir.path().to_path_buf());
        let held = KeyLock::acquire(&dir.path().join("power"), "k").unwrap();
        assert!(!c.store("power", "k", &1));
        drop(held);
        assert!(c.store("power", "k", &1));
        assert!(!dir.path().join("power").join("k.lock").exists());
    }

    #[test]
    fn unusable_root_disables() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let c = Cache::open(f.path().join("sub"));
        assert!(!c.enabled());
        assert!(!c.store("power", "k", &1));
        assert_eq!(c.load::<i32>("power", "k").0, Lookup::Disabled);
    }

    #[test]
    fn clear_removes_entries() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache::open(dir.path().to_path_buf());
        c.store("power", "a", &1);
        c.store("residues", "b", &2);
        assert_eq!(c.clear().unwrap(), 2);
        assert_eq!(c.load::<i32>("power", "a").0, Lookup::Miss);
    }
}
