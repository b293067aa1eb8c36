//! Keyed-partition watermarking for numeric tables.
//!
//! Rows are assigned to partitions by a keyed hash of their primary key. Each
//! partition carries one watermark bit, embedded by shifting every value in the
//! partition by `+delta` (bit 1) or `-delta` (bit 0). Detection recovers each
//! bit from the sign of the partition mean against a reference mean of zero,
//! so tables are expected to be roughly zero-centred.

use std::collections::HashSet;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crypto::{be_bytes_mod, frame_into};

pub const DEFAULT_NUM_PARTITIONS: usize = 32;
pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_VOTE_THRESHOLD: f64 = 0.8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObtError {
    #[error("partition {0} has no rows")]
    EmptyPartition(usize),
    #[error("num_partitions must be at least 1")]
    NoPartitions,
    #[error("watermark has {bits} bits but there are {partitions} partitions")]
    BitLength { bits: usize, partitions: usize },
    #[error("duplicate primary key {0:?}")]
    DuplicateKey(String),
    #[error("table parse error: {0}")]
    Parse(String),
    #[error("malformed secret: {0}")]
    Secret(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NumericTable {
    pub rows: Vec<(Vec<u8>, f64)>,
}

impl NumericTable {
    pub fn new(rows: Vec<(Vec<u8>, f64)>) -> Result<Self, ObtError> {
        let mut seen = HashSet::with_capacity(rows.len());
        for (pk, _) in &rows {
            if !seen.insert(pk.as_slice()) {
                return Err(ObtError::DuplicateKey(String::from_utf8_lossy(pk).into_owned()));
            }
        }
        Ok(Self { rows })
    }

    /// `rows` Gaussian values with primary keys `r0, r1, ...`.
    pub fn gaussian<R: RngCore>(rows: usize, mean: f64, stdev: f64, rng: &mut R) -> Self {
        let normal = Normal::new(mean, stdev).expect("finite stdev");
        Self {
            rows: (0..rows)
                .map(|i| (format!("r{i}").into_bytes(), normal.sample(rng)))
                .collect(),
        }
    }

    /// CSV with header `pk,value`.
    pub fn parse_csv(bytes: &[u8]) -> Result<Self, ObtError> {
        let mut reader = csv::Reader::from_reader(bytes);
        let headers = reader
            .headers()
            .map_err(|e| ObtError::Parse(e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "pk" || &headers[1] != "value" {
            return Err(ObtError::Parse("expected header pk,value".into()));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| ObtError::Parse(e.to_string()))?;
            let value: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| ObtError::Parse(format!("bad value {:?}", &record[1])))?;
            rows.push((record[0].as_bytes().to_vec(), value));
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["pk", "value"]).expect("in-memory write");
        for (pk, v) in &self.rows {
            // `{:?}` prints the shortest representation that parses back exactly.
            writer
                .write_record([String::from_utf8_lossy(pk).as_ref(), &format!("{v:?}")])
                .expect("in-memory write");
        }
        writer.into_inner().expect("in-memory flush")
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, PartialEq)]
pub struct ObtSecret {
    pub key: [u8; 32],
    pub num_partitions: usize,
    pub wm: Vec<bool>,
    pub delta: f64,
}

impl Drop for ObtSecret {
    fn drop(&mut self) {
        use zeroize::Zeroize;
        self.key.zeroize();
        self.wm.iter_mut().for_each(|b| *b = false);
    }
}

impl std::fmt::Debug for ObtSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObtSecret")
            .field("num_partitions", &self.num_partitions)
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct SecretFile {
    version: u32,
    #[serde(rename = "K")]
    key: String,
    num_partitions: usize,
    wm: String,
    delta: f64,
}

impl ObtSecret {
    pub fn generate<R: RngCore>(num_partitions: usize, delta: f64, rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self {
            key,
            num_partitions,
            wm: (0..num_partitions).map(|_| rng.gen()).collect(),
            delta,
        }
    }

    fn validate(&self) -> Result<(), ObtError> {
        if self.num_partitions == 0 {
            return Err(ObtError::NoPartitions);
        }
        if self.wm.len() != self.num_partitions {
            return Err(ObtError::BitLength {
                bits: self.wm.len(),
                partitions: self.num_partitions,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let file = SecretFile {
            version: 1,
            key: B64.encode(self.key),
            num_partitions: self.num_partitions,
            wm: self.wm.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            delta: self.delta,
        };
        serde_json::to_vec(&file).expect("secret serialization")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ObtError> {
        let file: SecretFile =
            serde_json::from_slice(bytes).map_err(|e| ObtError::Secret(e.to_string()))?;
        if file.version != 1 {
            return Err(ObtError::Secret(format!("unsupported version {}", file.version)));
        }
        let key: [u8; 32] = B64
            .decode(&file.key)
            .ok()
            .and_then(|k| k.try_into().ok())
            .ok_or_else(|| ObtError::Secret("K must be 32 bytes".into()))?;
        let wm = file
            .wm
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ObtError::Secret(format!("bad watermark bit {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let secret = Self {
            key,
            num_partitions: file.num_partitions,
            wm,
            delta: file.delta,
        };
        secret.validate()?;
        Ok(secret)
    }
}

/// `SHA-256(frame(pk) || K) mod num_partitions`.
pub fn partition(pk: &[u8], key: &[u8; 32], num_partitions: usize) -> usize {
    assert!(num_partitions >= 1, "num_partitions must be at least 1");
    let mut buf = Vec::with_capacity(8 + pk.len() + 32);
    frame_into(&mut buf, pk);
    buf.extend_from_slice(key);
    be_bytes_mod(&Sha256::digest(&buf), num_partitions as u64) as usize
}

fn partition_stats(table: &NumericTable, secret: &ObtSecret) -> Vec<(f64, usize)> {
    let mut stats = vec![(0.0, 0usize); secret.num_partitions];
    for (pk, v) in &table.rows {
        let p = partition(pk, &secret.key, secret.num_partitions);
        stats[p].0 += v;
        stats[p].1 += 1;
    }
    stats
}

pub fn insert(table: &NumericTable, secret: &ObtSecret) -> Result<NumericTable, ObtError> {
    secret.validate()?;
    if let Some(p) = partition_stats(table, secret).iter().position(|&(_, n)| n == 0) {
        return Err(ObtError::EmptyPartition(p));
    }
    let rows = table
        .rows
        .iter()
        .map(|(pk, v)| {
            let bit = secret.wm[partition(pk, &secret.key, secret.num_partitions)];
            let shift = if bit { secret.delta } else { -secret.delta };
            (pk.clone(), v + shift)
        })
        .collect();
    Ok(NumericTable { rows })
}

/// Number of partitions whose recovered bit matches the watermark. Empty
/// partitions never match.
pub fn matched_bits(table: &NumericTable, secret: &ObtSecret) -> usize {
    if secret.validate().is_err() {
        return 0;
    }
    partition_stats(table, secret)
        .iter()
        .zip(&secret.wm)
        .filter(|(&(sum, n), &bit)| n > 0 && (sum / n as f64 > 0.0) == bit)
        .count()
}

pub fn detect(table: &NumericTable, secret: &ObtSecret, vote_threshold: f64) -> bool {
    matched_bits(table, secret) as f64 >= vote_threshold * secret.num_partitions as f64
}
