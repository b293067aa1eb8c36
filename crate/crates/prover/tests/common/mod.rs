#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use puppy_core::asset::{
    self, derive_tokens, Asset, InsertOptions, Mode, Scheme, SecretEnvelope, TokenRecord, WatermarkSecret,
};
use puppy_core::crypto::{hmac_sha256, AssetId, VerifyingKey};
use puppy_core::freqywm::{FreqySecret, TokenDataset};
use puppy_core::gc::verify::{MAX_MODULUS, MAX_PAIRS};
use puppy_core::gc::compile_secret;
use puppy_core::tee::keys::{unarmor_32, MANUFACTURER_PUBLIC_LABEL, OWNER_PSK_LABEL};
use puppy_core::tee::{AttestationReport, HolderHandshake};
use puppy_core::wire::{read_message, write_message, Message, SessionStats, VerifyRequest, VerifyResponse};
use puppy_prover::config::EnclaveKind;
use puppy_prover::keys::KeyFiles;
use puppy_prover::{Config, Server};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub keys: KeyFiles,
    pub cfg: Config,
}

impl Fixture {
    pub fn new(mode: Mode) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let keys = puppy_prover::keys::generate(&dir.path().join("keys"), false).unwrap();
        let mut cfg = Config::local(dir.path(), mode, &keys);
        cfg.enclave.kind = EnclaveKind::Subprocess;
        cfg.enclave.command = Some(env!("CARGO_BIN_EXE_puppy-enclave").into());
        Self { dir, keys, cfg }
    }

    pub fn psk(&self) -> [u8; 32] {
        *unarmor_32(OWNER_PSK_LABEL, &std::fs::read_to_string(&self.keys.owner_key).unwrap()).unwrap()
    }

    pub fn manufacturer(&self) -> VerifyingKey {
        let pk = unarmor_32(MANUFACTURER_PUBLIC_LABEL, &std::fs::read_to_string(&self.keys.manufacturer_pub).unwrap())
            .unwrap();
        puppy_core::crypto::verifying_key_from_bytes(&*pk).unwrap()
    }

    pub fn measurement(&self) -> [u8; 32] {
        self.cfg.enclave_program().measurement()
    }

    pub fn start(&self) -> Running {
        Running::start(self.cfg.clone())
    }
}

/// A server on its own runtime, so tests can drive it with blocking sockets.
pub struct Running {
    pub rt: tokio::runtime::Runtime,
    pub server: Option<Server>,
}

impl Running {
    pub fn start(cfg: Config) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let server = rt.block_on(Server::start(cfg)).unwrap();
        Self { rt, server: Some(server) }
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.as_ref().unwrap().addr
    }

    pub fn http(&self) -> String {
        format!("http://{}", self.server.as_ref().unwrap().http_addr.unwrap())
    }

    pub fn stats(&self) -> puppy_prover::StatsSnapshot {
        self.server.as_ref().unwrap().state.snapshot()
    }

    pub fn stop(mut self) {
        let server = self.server.take().unwrap();
        self.rt.block_on(server.stop());
    }
}

pub fn connect(addr: SocketAddr) -> TcpStream {
    let s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(std::time::Duration::from_secs(60))).unwrap();
    s
}

pub fn call(s: &mut TcpStream, m: &Message) -> Message {
    write_message(s, m).unwrap();
    read_message(s).unwrap()
}

pub fn register_msg(psk: &[u8; 32], record: &TokenRecord) -> Message {
    let mut msg = Message::Register {
        id: record.id,
        scheme: record.scheme.code(),
        share: record.share.clone(),
        c_sec: record.c_sec.clone().unwrap_or_default(),
        mac: [0; 32],
    };
    let tag = hmac_sha256(psk, &msg.register_signed_part().unwrap());
    if let Message::Register { mac, .. } = &mut msg {
        *mac = tag;
    }
    msg
}

/// A watermarked token dataset, its holder share and the prover record.
pub struct Registered {
    pub id: AssetId,
    pub dw: Vec<u8>,
    pub tkh: Vec<u8>,
    pub record: TokenRecord,
    pub secret: FreqySecret,
}

pub fn tokens_bytes(seed: u64, n: usize, vocab: u32) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..n)
        .map(|_| {
            // Skewed ranks give a long-tailed frequency profile.
            let u = rng.next_u32() as f64 / u32::MAX as f64;
            format!("w{}", (u * u * u * vocab as f64) as u32)
        })
        .collect();
    TokenDataset::from_strs(&words).to_bytes()
}

pub fn make_asset(mode: Mode, seed: u64) -> Registered {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let asset = Asset::parse(Scheme::FreqyWm, &tokens_bytes(seed, 6_000, 400)).unwrap();
    let mut opts = InsertOptions::default();
    if mode == Mode::TwoPc {
        opts.freqy.modulus = MAX_MODULUS;
        opts.freqy.num_pairs = MAX_PAIRS;
    }
    let (dw, secret) = asset::watermark(&asset, &opts, &mut rng).unwrap();
    let dw = dw.to_bytes();
    let WatermarkSecret::FreqyWm(fs) = &secret else { unreachable!() };
    let fs = fs.clone();
    let shared = if mode == Mode::TwoPc {
        compile_secret(&fs).unwrap().to_vec()
    } else {
        SecretEnvelope { secret, binding: None }.to_bytes().to_vec()
    };
    let tokens = derive_tokens(mode, &shared).unwrap();
    let id = AssetId(puppy_core::crypto::sha256(&dw));
    Registered {
        id,
        tkh: tokens.holder.as_bytes().to_vec(),
        record: TokenRecord::new(id, Scheme::FreqyWm, &tokens),
        dw,
        secret: fs,
    }
}

pub enum Outcome {
    Res(bool, SessionStats),
    Abort(puppy_core::wire::AbortCode),
}

/// Attested verification over a fresh connection.
pub fn tee_verify(fx: &Fixture, addr: SocketAddr, id: AssetId, dw: &[u8], tkh: &[u8]) -> Outcome {
    let mut s = connect(addr);
    tee_verify_on(&mut s, fx, id, dw, tkh)
}

pub fn tee_verify_on(s: &mut TcpStream, fx: &Fixture, id: AssetId, dw: &[u8], tkh: &[u8]) -> Outcome {
    let hs = HolderHandshake::new();
    let report = match call(s, &Message::RaHello { nonce: hs.nonce() }) {
        Message::RaReport { measurement, epk, sig } => AttestationReport { measurement, epk, sig },
        Message::Abort(c) => return Outcome::Abort(c),
        other => panic!("unexpected {other:?}"),
    };
    let est = hs.complete(&report, &fx.manufacturer(), &fx.measurement()).unwrap();
    let mut ch = est.channel;
    match call(
        s,
        &Message::RaFinish {
            client_epk: est.client_epk,
            mac: est.mac,
        },
    ) {
        Message::Ack => {}
        Message::Abort(c) => return Outcome::Abort(c),
        other => panic!("unexpected {other:?}"),
    }
    let req = VerifyRequest {
        id,
        dw: dw.to_vec(),
        tkh: tkh.to_vec(),
    };
    let sealed = ch.seal(&req.encode());
    match call(s, &Message::VerifyReq(sealed)) {
        Message::VerifyRes(sealed) => {
            let res = VerifyResponse::decode(&ch.open(&sealed).unwrap()).unwrap().res;
            let Message::SessionStats(stats) = read_message(s).unwrap() else {
                panic!("missing session stats")
            };
            Outcome::Res(res, stats)
        }
        Message::Abort(c) => Outcome::Abort(c),
        other => panic!("unexpected {other:?}"),
    }
}

pub fn res(o: Outcome) -> bool {
    match o {
        Outcome::Res(r, _) => r,
        Outcome::Abort(c) => panic!("aborted: {c}"),
    }
}

/// Reads until the peer closes; true if it did.
pub fn closed(s: &mut TcpStream) -> bool {
    let mut buf = [0u8; 64];
    matches!(s.read(&mut buf), Ok(0))
}

pub fn write_raw(s: &mut TcpStream, bytes: &[u8]) {
    s.write_all(bytes).unwrap();
}

/// Runs the holder side of the garbled-circuit exchange; returns the decoded count.
pub fn tpc_verify(addr: SocketAddr, id: AssetId, dw: &[u8], tkh: &[u8], tolerance: u32) -> Result<usize, puppy_core::wire::AbortCode> {
    let mut s = connect(addr);
    tpc_verify_on(&mut s, id, dw, tkh, tolerance)
}

pub fn tpc_verify_on(
    s: &mut TcpStream,
    id: AssetId,
    dw: &[u8],
    tkh: &[u8],
    tolerance: u32,
) -> Result<usize, puppy_core::wire::AbortCode> {
    let hist = puppy_core::freqywm::preprocess(&TokenDataset::parse(dw).unwrap());
    let (mut session, hello) = puppy_core::gc::HolderSession::start(id, tkh, &hist, tolerance).unwrap();
    match call(s, &hello) {
        Message::Abort(c) => return Err(c),
        garbled => session.on_garbled(garbled).unwrap(),
    }
    let init = read_message(s).unwrap();
    let choice = session.on_sender_init(init, &mut rand::rngs::OsRng).unwrap();
    match call(s, &choice) {
        Message::Abort(c) => Err(c),
        payload => Ok(session.on_payload(payload).unwrap()),
    }
}
