//! Hit-ratio study of plain LRU against the similarity-proportional cache.
//!
//! Each trial draws `pairs` cached results `(h, id, res, sim)` and a request
//! stream of uniformly chosen keys. Every cache is warmed with all pairs,
//! then replays the stream; a miss is followed by inserting what a full
//! verification would have returned.

use std::fmt::Write as _;

use puppy_core::cache::{CacheEntry, LruCache, LruKey, ProportionalCache, ServeRule};
use puppy_core::crypto::AssetId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// LRU keyed by `(h, id, sim)`, requests repeat the cached similarity.
    LruBase,
    /// The same LRU under requests with fresh similarities.
    LruBaseR,
    /// Proportional placement, fresh similarities.
    LruProp,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::LruBase, Policy::LruBaseR, Policy::LruProp];

    pub fn name(self) -> &'static str {
        match self {
            Policy::LruBase => "LRU-Base",
            Policy::LruBaseR => "LRU-Base-R",
            Policy::LruProp => "LRU-Prop",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CacheStudy {
    pub capacities: Vec<usize>,
    pub pairs: usize,
    pub trials: usize,
    pub requests: usize,
    pub seed: u64,
    /// Caching threshold; cached similarities are drawn from `[threshold, 100]`.
    pub threshold: f64,
    pub rule: ServeRule,
}

impl Default for CacheStudy {
    fn default() -> Self {
        Self {
            capacities: vec![10, 20, 50, 100, 250],
            pairs: 250,
            trials: 100,
            requests: 1_000,
            seed: 7,
            threshold: puppy_core::cache::proportional::DEFAULT_THRESHOLD,
            rule: ServeRule::Literal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub policy: Policy,
    pub capacity: usize,
    pub mean_hr: f64,
    pub min_hr: f64,
    pub max_hr: f64,
}

struct Pair {
    h: [u8; 32],
    id: AssetId,
    res: bool,
    sim: f64,
}

struct Trial {
    pairs: Vec<Pair>,
    /// `(pair index, fresh similarity)`.
    requests: Vec<(usize, f64)>,
}

/// Similarities are whole percentages, as the holder reports them.
fn draw_sim<R: Rng>(lo: f64, rng: &mut R) -> f64 {
    rng.gen_range(lo.ceil() as u32..=100) as f64
}

fn trial(study: &CacheStudy, t: usize) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(study.seed);
    rng.set_stream(t as u64);
    let pairs = (0..study.pairs)
        .map(|_| {
            let mut h = [0u8; 32];
            let mut id = [0u8; 32];
            rng.fill(&mut h);
            rng.fill(&mut id);
            Pair {
                h,
                id: AssetId(id),
                res: rng.gen_bool(0.5),
                sim: draw_sim(study.threshold, &mut rng),
            }
        })
        .collect();
    let requests = (0..study.requests)
        .map(|_| (rng.gen_range(0..study.pairs), draw_sim(0.0, &mut rng)))
        .collect();
    Trial { pairs, requests }
}

fn lru_hits(tr: &Trial, capacity: usize, fixed_sim: bool) -> usize {
    let mut c = LruCache::new(capacity);
    for p in &tr.pairs {
        c.put(LruKey { h: p.h, id: p.id, sim: p.sim }, p.res);
    }
    let mut hits = 0;
    for &(i, fresh) in &tr.requests {
        let p = &tr.pairs[i];
        let key = LruKey {
            h: p.h,
            id: p.id,
            sim: if fixed_sim { p.sim } else { fresh },
        };
        if c.get(&key).is_some() {
            hits += 1;
        } else {
            c.put(key, p.res);
        }
    }
    hits
}

fn prop_hits(tr: &Trial, capacity: usize, study: &CacheStudy) -> usize {
    let mut c = ProportionalCache::new(capacity, study.threshold, study.rule);
    let entry = |p: &Pair, sim| CacheEntry {
        h: p.h,
        id: p.id,
        res: p.res,
        sim,
    };
    for p in &tr.pairs {
        c.put(entry(p, p.sim));
    }
    let mut hits = 0;
    for &(i, fresh) in &tr.requests {
        let p = &tr.pairs[i];
        if c.get(&p.h, &p.id, fresh).is_some() {
            hits += 1;
        } else {
            c.put(entry(p, fresh));
        }
    }
    hits
}

/// Hit ratio of one policy on one trial.
fn hit_ratio(tr: &Trial, policy: Policy, capacity: usize, study: &CacheStudy) -> f64 {
    let hits = match policy {
        Policy::LruBase => lru_hits(tr, capacity, true),
        Policy::LruBaseR => lru_hits(tr, capacity, false),
        Policy::LruProp => prop_hits(tr, capacity, study),
    };
    hits as f64 / tr.requests.len() as f64
}

pub fn run(study: &CacheStudy) -> Vec<Cell> {
    assert!(study.pairs > 0 && study.trials > 0 && study.requests > 0);
    let trials: Vec<Trial> = (0..study.trials).map(|t| trial(study, t)).collect();
    let mut cells = Vec::new();
    for policy in Policy::ALL {
        for &capacity in &study.capacities {
            let hrs: Vec<f64> = trials.iter().map(|tr| hit_ratio(tr, policy, capacity, study)).collect();
            cells.push(Cell {
                policy,
                capacity,
                mean_hr: hrs.iter().sum::<f64>() / hrs.len() as f64,
                min_hr: hrs.iter().cloned().fold(f64::INFINITY, f64::min),
                max_hr: hrs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    cells
}

/// Mean hit ratio of a policy across all capacities.
pub fn policy_mean(cells: &[Cell], policy: Policy) -> f64 {
    let v: Vec<f64> = cells.iter().filter(|c| c.policy == policy).map(|c| c.mean_hr).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn cell(cells: &[Cell], policy: Policy, capacity: usize) -> Option<&Cell> {
    cells.iter().find(|c| c.policy == policy && c.capacity == capacity)
}

pub fn to_csv(cells: &[Cell]) -> String {
    let mut out = String::from("policy,capacity,mean_hr,min_hr,max_hr\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            c.policy.name(),
            c.capacity,
            c.mean_hr,
            c.min_hr,
            c.max_hr
        );
    }
    out
}
