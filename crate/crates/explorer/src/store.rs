//! Bounded replay store with least-recently-used eviction.

use crate::frames::ReplayFrame;
use cari_core::env::Replay;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug)]
pub struct StoredReplay {
    pub replay: Replay,
    pub frames: Vec<ReplayFrame>,
}

#[derive(Debug)]
pub struct ReplayStore {
    capacity: usize,
    tick: u64,
    entries: HashMap<String, (u64, Arc<StoredReplay>)>,
}

impl ReplayStore {
    pub fn new(capacity: usize) -> ReplayStore {
        ReplayStore {
            capacity: capacity.max(1),
            tick: 0,
            entries: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Looks up a replay and marks it as most recently used.
    pub fn get(&mut self, id: &str) -> Option<Arc<StoredReplay>> {
        self.tick += 1;
        let tick = self.tick;
        self.entries.get_mut(id).map(|(t, r)| {
            *t = tick;
            r.clone()
        })
    }

    /// Inserts (or refreshes) a replay; returns the evicted id, if any.
    pub fn insert(&mut self, id: String, replay: Arc<StoredReplay>) -> Option<String> {
        self.tick += 1;
        self.entries.insert(id, (self.tick, replay));
        if self.entries.len() <= self.capacity {
            return None;
        }
        let oldest = self
            .entries
            .iter()
            .min_by_key(|(_, (t, _))| *t)
            .map(|(k, _)| k.clone())
            .expect("store is non-empty");
        self.entries.remove(&oldest);
        Some(oldest)
    }
}
