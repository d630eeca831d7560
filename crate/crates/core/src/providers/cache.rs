//! Content-addressed cache of provider responses.
//!
//! Keys hash the endpoint and the canonical request body; values are the
//! response bodies exactly as received. Responses are always decoded from
//! their stored wire form, so cold and warm runs see identical values.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{input_hash, Endpoint, ProviderError, Transport};
use crate::runlog::RunLog;

pub fn cache_key(endpoint: Endpoint, body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.path().as_bytes());
    h.update(b"\n");
    h.update(body.to_string().as_bytes());
    hex::encode(h.finalize())
}

pub struct ResponseCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, Arc<String>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            mem: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn on_disk(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            ..Self::in_memory()
        })
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<Arc<String>> {
        if let Some(v) = self.mem.lock().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let text = fs::read_to_string(self.path_for(key)?).ok()?;
        Some(self.remember(key, text))
    }

    fn remember(&self, key: &str, value: String) -> Arc<String> {
        self.mem
            .lock()
            .expect("cache lock")
            .entry(key.to_string())
            .or_insert_with(|| Arc::new(value))
            .clone()
    }

    /// Stores a value unless one is already present; returns the value that
    /// won.
    pub fn put(&self, key: &str, value: String) -> io::Result<Arc<String>> {
        if let Some(path) = self.path_for(key) {
            if let Ok(existing) = fs::read_to_string(&path) {
                return Ok(self.remember(key, existing));
            }
            let parent = path.parent().expect("sharded path");
            fs::create_dir_all(parent)?;
            let tmp = parent.join(format!(
                ".{key}.{}.{}.tmp",
                std::process::id(),
                TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
            ));
            let mut f = fs::File::create(&tmp)?;
            f.write_all(value.as_bytes())?;
            f.sync_all()?;
            drop(f);
            let linked = fs::hard_link(&tmp, &path);
            let _ = fs::remove_file(&tmp);
            match linked {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    return Ok(self.remember(key, fs::read_to_string(&path)?));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(self.remember(key, value))
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

/// Wraps a transport with the cache and logs every call.
pub struct CachedTransport {
    inner: Arc<dyn Transport>,
    cache: Arc<ResponseCache>,
    log: Arc<RunLog>,
}

impl CachedTransport {
    pub fn new(inner: Arc<dyn Transport>, cache: Arc<ResponseCache>, log: Arc<RunLog>) -> Self {
        Self { inner, cache, log }
    }

    pub fn cache(&self) -> &Arc<ResponseCache> {
        &self.cache
    }
}

impl Transport for CachedTransport {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, ProviderError> {
        let start = Instant::now();
        let key = cache_key(endpoint, body);
        let hash = input_hash(endpoint, body);
        let (stored, cached) = match self.cache.get(&key) {
            Some(v) => {
                self.cache.hits.fetch_add(1, Ordering::Relaxed);
                (v, true)
            }
            None => {
                self.cache.misses.fetch_add(1, Ordering::Relaxed);
                let fresh = match self.inner.call(endpoint, body) {
                    Ok(v) => v,
                    Err(e) => {
                        self.log.event(
                            "provider_call",
                            json!({"op": endpoint.name(), "input_hash": hash, "cached": false,
                                   "ok": false, "error": e.to_string(),
                                   "latency_ms": start.elapsed().as_secs_f64() * 1e3}),
                        );
                        return Err(e);
                    }
                };
                let v = self.cache.put(&key, fresh.to_string()).map_err(|e| ProviderError::Protocol {
                    op: endpoint.name().into(),
                    message: format!("cache write failed: {e}"),
                })?;
                (v, false)
            }
        };
        self.log.event(
            "provider_call",
            json!({"op": endpoint.name(), "input_hash": hash, "cached": cached, "ok": true,
                   "latency_ms": start.elapsed().as_secs_f64() * 1e3}),
        );
        serde_json::from_str(&stored).map_err(|e| ProviderError::protocol(endpoint, e))
    }

    fn describe_backend(&self) -> String {
        self.inner.describe_backend()
    }

    fn backends(&self) -> std::collections::BTreeMap<String, String> {
        self.inner.backends()
    }
}
