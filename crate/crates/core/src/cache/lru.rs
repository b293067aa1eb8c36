//! Plain LRU keyed on the exact `(h, id, sim)` triple.

use std::collections::VecDeque;

use crate::crypto::AssetId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LruKey {
    pub h: [u8; 32],
    pub id: AssetId,
    pub sim: f64,
}

impl LruKey {
    fn same(&self, other: &LruKey) -> bool {
        self.h == other.h && self.id == other.id && self.sim.to_bits() == other.sim.to_bits()
    }
}

/// Front of the deque is the most recently used entry.
#[derive(Clone, Debug)]
pub struct LruCache {
    capacity: usize,
    entries: VecDeque<(LruKey, bool)>,
}

impl LruCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "capacity must be at least 1");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&mut self, key: &LruKey) -> Option<bool> {
        let idx = self.entries.iter().position(|(k, _)| k.same(key))?;
        let e = self.entries.remove(idx).expect("index in range");
        self.entries.push_front(e);
        Some(e.1)
    }

    /// Inserts or refreshes `key`; returns the evicted entry, if any.
    pub fn put(&mut self, key: LruKey, res: bool) -> Option<(LruKey, bool)> {
        if let Some(idx) = self.entries.iter().position(|(k, _)| k.same(&key)) {
            self.entries.remove(idx);
            self.entries.push_front((key, res));
            return None;
        }
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_back()
        } else {
            None
        };
        self.entries.push_front((key, res));
        evicted
    }
}
