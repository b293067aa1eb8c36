//! Similarity-proportional cache placement.
//!
//! Entries live in a vector ordered from head (index 0, evicted last) to tail
//! (evicted first). A new or served entry is placed at `position(res, sim, c)`:
//! positive results move toward the head as similarity drops, negative results
//! move toward the head as similarity rises.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::AssetId;

pub const DEFAULT_THRESHOLD: f64 = 70.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CacheEntry {
    pub h: [u8; 32],
    pub id: AssetId,
    pub res: bool,
    pub sim: f64,
}

/// Which `(res_r, sim_r)` versus `sim'` combinations a stored entry may answer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServeRule {
    /// Positive if `sim_r >= sim'`, negative if `sim_r <= sim'`.
    #[default]
    Literal,
    /// Positive if `sim_r <= sim'`, negative if `sim_r >= sim'`.
    Intuitive,
}

impl ServeRule {
    pub fn serves(self, res_r: bool, sim_r: f64, sim_q: f64) -> bool {
        match (self, res_r) {
            (ServeRule::Literal, true) | (ServeRule::Intuitive, false) => sim_r >= sim_q,
            (ServeRule::Literal, false) | (ServeRule::Intuitive, true) => sim_r <= sim_q,
        }
    }
}

/// `floor(f_res(sim))` clamped to `[0, c-1]`, where
/// `f_1(sim) = (c-1)·sim/100` and `f_0(sim) = c - (c-1)·sim/100`.
pub fn position(res: bool, sim: f64, c: usize) -> usize {
    assert!(c >= 1, "capacity must be at least 1");
    let scaled = (c - 1) as f64 * sim.clamp(0.0, 100.0) / 100.0;
    let f = if res { scaled } else { c as f64 - scaled };
    (f.floor().max(0.0) as usize).min(c - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub enum PutOutcome {
    /// Similarity below the caching threshold.
    Discarded,
    Inserted { evicted: Option<CacheEntry> },
    /// An entry for the same `(h, id)` was replaced.
    Replaced,
    /// An entry for the same `(h, id)` was kept in preference to the new one.
    Kept,
}

#[derive(Clone, Debug)]
pub struct ProportionalCache {
    capacity: usize,
    threshold: f64,
    rule: ServeRule,
    entries: Vec<CacheEntry>,
}

impl ProportionalCache {
    pub fn new(capacity: usize, threshold: f64, rule: ServeRule) -> Self {
        assert!(capacity >= 1, "capacity must be at least 1");
        Self {
            capacity,
            threshold,
            rule,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    fn find(&self, h: &[u8; 32], id: &AssetId) -> Option<usize> {
        self.entries.iter().position(|e| &e.h == h && &e.id == id)
    }

    fn place(&mut self, entry: CacheEntry) {
        let p = position(entry.res, entry.sim, self.capacity);
        let at = p.min(self.entries.len());
        self.entries.insert(at, entry);
    }

    /// Looks up `(h, id)` and answers if the serving rule allows it. A served
    /// entry is moved to its computed position.
    pub fn get(&mut self, h: &[u8; 32], id: &AssetId, sim_q: f64) -> Option<bool> {
        let idx = self.find(h, id)?;
        let e = self.entries[idx];
        if !self.rule.serves(e.res, e.sim, sim_q) {
            return None;
        }
        self.entries.remove(idx);
        self.place(e);
        Some(e.res)
    }

    pub fn put(&mut self, entry: CacheEntry) -> PutOutcome {
        if !(entry.sim >= self.threshold) {
            return PutOutcome::Discarded;
        }
        if let Some(idx) = self.find(&entry.h, &entry.id) {
            let old = self.entries[idx];
            let replace = if old.res != entry.res {
                true
            } else if entry.res {
                entry.sim < old.sim
            } else {
                entry.sim > old.sim
            };
            if !replace {
                return PutOutcome::Kept;
            }
            self.entries.remove(idx);
            self.place(entry);
            return PutOutcome::Replaced;
        }
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop()
        } else {
            None
        };
        self.place(entry);
        PutOutcome::Inserted { evicted }
    }

    /// CSV `h_hex,id_hex,res,sim,position`.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("h_hex,id_hex,res,sim,position\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                hex::encode(e.h),
                e.id.to_hex(),
                e.res as u8,
                e.sim,
                i
            );
        }
        out
    }
}
