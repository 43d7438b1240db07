//! Per (dialog, user, language) cache of everything read from the
//! configuration store to open a dialog.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use webdialog_core::conf::{DialogView, Invalidation};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub dialog: String,
    pub user_id: String,
    pub language: String,
}

impl CacheKey {
    pub fn new(dialog: &str, user_id: &str, language: &str) -> Self {
        CacheKey {
            dialog: dialog.to_string(),
            user_id: user_id.to_string(),
            language: language.to_string(),
        }
    }
}

/// Ticket returned by [`ResolvedCache::begin_fill`]; a fill is accepted only
/// if no invalidation arrived since the ticket was issued.
#[derive(Debug, Clone, Copy)]
pub struct FillTicket(u64);

#[derive(Debug, Default)]
pub struct ResolvedCache {
    entries: DashMap<CacheKey, Arc<DialogView>>,
    default_language: String,
    epoch: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    invalidated: AtomicU64,
}

impl ResolvedCache {
    pub fn new(default_language: impl Into<String>) -> Self {
        ResolvedCache {
            default_language: default_language.into(),
            ..Default::default()
        }
    }

    /// Returns the cached view when it was resolved against `fingerprint`.
    pub fn lookup(&self, key: &CacheKey, fingerprint: &str) -> Option<Arc<DialogView>> {
        let hit = self
            .entries
            .get(key)
            .filter(|v| v.resolved.fingerprint == fingerprint)
            .map(|v| Arc::clone(&v));
        match hit {
            Some(view) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(view)
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn begin_fill(&self) -> FillTicket {
        FillTicket(self.epoch.load(Ordering::SeqCst))
    }

    /// Stores a freshly read view unless an invalidation raced with the read.
    ///
    /// The epoch is compared while the shard lock for `key` is held, and
    /// [`invalidate`](Self::invalidate) bumps the epoch before it takes any
    /// shard lock, so a view read before an invalidation is never kept.
    pub fn fill(&self, key: CacheKey, view: Arc<DialogView>, ticket: FillTicket) -> bool {
        let entry = self.entries.entry(key);
        if self.epoch.load(Ordering::SeqCst) != ticket.0 {
            return false;
        }
        entry.insert(view);
        true
    }

    pub fn invalidate(&self, event: &Invalidation) {
        self.epoch.fetch_add(1, Ordering::SeqCst);
        let before = self.entries.len();
        match event {
            Invalidation::Dialog(name) => self.entries.retain(|k, _| k.dialog != *name),
            Invalidation::User(user) => self.entries.retain(|k, _| k.user_id != *user),
            Invalidation::Override {
                dialog,
                role_id,
                language,
            } => self.entries.retain(|k, v| {
                let affected = k.dialog == *dialog
                    && v.roles.iter().any(|r| r == role_id)
                    && language.as_deref().is_none_or(|l| {
                        l == k.language || l == self.default_language
                    });
                !affected
            }),
        }
        let dropped = before.saturating_sub(self.entries.len());
        self.invalidated.fetch_add(dropped as u64, Ordering::Relaxed);
    }

    pub fn clear(&self) {
        self.epoch.fetch_add(1, Ordering::SeqCst);
        self.entries.clear();
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of entries dropped by invalidations so far.
    pub fn invalidated(&self) -> u64 {
        self.invalidated.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.entries.contains_key(key)
    }
}
