//! Response cache.
//!
//! Wraps any backend with a directory of `{cache_key}.json` files, each
//! holding the raw response body of one completed request. A hit skips the
//! inner backend entirely; a miss forwards the request and then persists
//! the body. Writes go through a temp file plus rename, so concurrent
//! writers of the same key settle on last-write-wins without locking.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::backend::{cache_key, parse_chat_body, ChatBackend, Completion, CompletionRequest};
use crate::error::{Error, Result};

pub struct CachedBackend {
    inner: Arc<dyn ChatBackend>,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachedBackend {
    /// Creates the cache directory if needed and wraps `inner` with it.
    pub fn new(inner: Arc<dyn ChatBackend>, dir: PathBuf) -> Result<CachedBackend> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(CachedBackend {
            inner,
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }
}

impl ChatBackend for CachedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let key = cache_key(request);
        let path = self.path_for(&key);

        if let Ok(raw_body) = std::fs::read_to_string(&path) {
            // An unreadable or corrupt file falls through to a refetch.
            if let Ok(content) = parse_chat_body(&raw_body) {
                self.hits.fetch_add(1, Ordering::SeqCst);
                return Ok(Completion {
                    content,
                    raw_body,
                    latency_ms: 0,
                    cached: true,
                });
            }
        }

        self.misses.fetch_add(1, Ordering::SeqCst);
        let completion = self.inner.complete(request)?;

        let tmp = self
            .dir
            .join(format!(".{key}.tmp-{:x}", std::process::id()));
        std::fs::write(&tmp, &completion.raw_body).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(path, e))?;

        Ok(completion)
    }

    fn name(&self) -> &'static str {
        "cache"
    }
}
