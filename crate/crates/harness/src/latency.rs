//! Five-task latency breakdown of a single verification.

use std::fmt::Write as _;

use anyhow::{bail, Context};
use puppy_client::{TaskTimings, Verdict, VerifyOptions};
use puppy_core::asset::{self, derive_tokens, Asset, InsertOptions, Mode, Scheme, SecretEnvelope, TokenRecord, VerifierParams};
use puppy_core::crypto::AssetId;
use puppy_prover::config::EnclaveHostConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{datasets, local::LocalProver, plain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum RunMode {
    /// Attested session with the enclave in its own process.
    Tee,
    /// Same tasks in an ordinary server process, no attestation.
    Plain,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Tee => "tee",
            RunMode::Plain => "plain",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LatencyOptions {
    pub scheme: Scheme,
    pub mode: RunMode,
    pub runs: usize,
    pub seed: u64,
    pub enclave: EnclaveHostConfig,
}

impl LatencyOptions {
    pub fn new(scheme: Scheme, mode: RunMode) -> Self {
        Self {
            scheme,
            mode,
            runs: 10,
            seed: 1,
            enclave: EnclaveHostConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LatencyTable {
    pub scheme: Scheme,
    pub mode: RunMode,
    pub runs: usize,
    /// Per-task means in nanoseconds, in [`TaskTimings::NAMES`] order.
    pub means_ns: [f64; 5],
    /// Mean of per-run totals.
    pub total_ns: f64,
}

impl LatencyTable {
    fn from_runs(scheme: Scheme, mode: RunMode, runs: &[TaskTimings]) -> Self {
        let n = runs.len() as f64;
        let mut means_ns = [0f64; 5];
        for r in runs {
            for (m, v) in means_ns.iter_mut().zip(r.values()) {
                *m += v as f64 / n;
            }
        }
        Self {
            scheme,
            mode,
            runs: runs.len(),
            means_ns,
            total_ns: runs.iter().map(|r| r.total_ns() as f64).sum::<f64>() / n,
        }
    }
}

fn asset_for(scheme: Scheme, rng: &mut ChaCha8Rng) -> Vec<u8> {
    match scheme {
        Scheme::FreqyWm => datasets::token_file(rng),
        Scheme::Obt => datasets::table_file(1_000, rng),
    }
}

fn run_tee(opts: &LatencyOptions, rng: &mut ChaCha8Rng) -> anyhow::Result<Vec<TaskTimings>> {
    let enclave = opts.enclave.clone();
    let prover = LocalProver::start_with(Mode::Tee, |c| {
        c.enclave = enclave;
        c.cache.enabled = false;
    })?;
    let (_, bundle) = prover.generate(&asset_for(opts.scheme, rng), opts.scheme, rng)?;
    let mut vo = VerifyOptions::new(prover.addr());
    vo.use_cache = false;
    let mut out = Vec::with_capacity(opts.runs);
    // The first run pays for page faults and lazy initialisation.
    for i in 0..=opts.runs {
        let r = puppy_client::verify(&bundle, &bundle.watermarked, &vo)?;
        if r.verdict != Verdict::Valid {
            bail!("watermarked asset did not verify");
        }
        if i > 0 {
            out.push(r.timings.context("no timings from an enclave session")?);
        }
    }
    Ok(out)
}

fn run_plain(opts: &LatencyOptions, rng: &mut ChaCha8Rng) -> anyhow::Result<Vec<TaskTimings>> {
    let a = Asset::parse(opts.scheme, &asset_for(opts.scheme, rng))?;
    let (w, secret) = asset::watermark(&a, &InsertOptions::default(), rng)?;
    let env = SecretEnvelope { secret, binding: None }.to_bytes();
    let tokens = derive_tokens(Mode::Tee, &env)?;
    let id = AssetId::random();
    let record = TokenRecord::new(id, opts.scheme, &tokens);
    let params = VerifierParams::default();
    let w = w.to_bytes();
    let mut out = Vec::with_capacity(opts.runs);
    for i in 0..=opts.runs {
        let (ok, t) = plain::verify_once(&record, &params, id, &w, tokens.holder.as_bytes())?;
        if !ok {
            bail!("watermarked asset did not verify");
        }
        if i > 0 {
            out.push(t);
        }
    }
    Ok(out)
}

pub fn run(opts: &LatencyOptions) -> anyhow::Result<LatencyTable> {
    if opts.runs == 0 {
        bail!("runs must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let runs = match opts.mode {
        RunMode::Tee => run_tee(opts, &mut rng)?,
        RunMode::Plain => run_plain(opts, &mut rng)?,
    };
    Ok(LatencyTable::from_runs(opts.scheme, opts.mode, &runs))
}

/// `scheme,mode,task,mean_ms`, one row per task and a `total` row.
pub fn to_csv(tables: &[LatencyTable]) -> String {
    let mut out = String::from("scheme,mode,task,mean_ms\n");
    for t in tables {
        for (name, v) in TaskTimings::NAMES.iter().zip(t.means_ns) {
            let _ = writeln!(out, "{},{},{},{:.6}", t.scheme, t.mode.name(), name, v / 1e6);
        }
        let _ = writeln!(out, "{},{},total,{:.6}", t.scheme, t.mode.name(), t.total_ns / 1e6);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_table_accounts_for_every_task() {
        for scheme in [Scheme::FreqyWm, Scheme::Obt] {
            let mut o = LatencyOptions::new(scheme, RunMode::Plain);
            o.runs = 3;
            let t = run(&o).unwrap();
            assert_eq!(t.runs, 3);
            assert!(t.means_ns.iter().all(|&m| m > 0.0));
            let sum: f64 = t.means_ns.iter().sum();
            assert!((sum - t.total_ns).abs() <= 1e-6 * t.total_ns);
            let csv = to_csv(&[t]);
            assert_eq!(csv.lines().count(), 7);
            for name in TaskTimings::NAMES {
                assert!(csv.contains(name));
            }
        }
    }
}
