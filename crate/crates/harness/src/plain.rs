//! Baseline verifier without an enclave.
//!
//! The same five tasks as an attested session, run by an ordinary loopback
//! server that holds the prover share: unauthenticated X25519 key agreement,
//! a sealed transfer of the suspect and holder share, reconstruction and
//! detection in the server process, then teardown. Only for timing.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Instant;

use hkdf::Hkdf;
use puppy_client::TaskTimings;
use puppy_core::asset::{self, Asset, SecretEnvelope, TokenRecord, VerifierParams};
use puppy_core::crypto::{AssetId, AuthCiphertext, SymmetricKey};
use puppy_core::tee::SecureChannel;
use puppy_core::wire::{VerifyRequest, VerifyResponse};
use rand::rngs::OsRng;
use rand::RngCore;
use sha2::Sha256;
use x25519_dalek::{EphemeralSecret, PublicKey};
use zeroize::Zeroizing;

const INFO: &[u8] = b"puppy/plain/v1";

fn write_frame(s: &mut TcpStream, bytes: &[u8]) -> io::Result<()> {
    s.write_all(&(bytes.len() as u32).to_be_bytes())?;
    s.write_all(bytes)?;
    s.flush()
}

fn read_frame(s: &mut TcpStream) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    s.read_exact(&mut len)?;
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    s.read_exact(&mut buf)?;
    Ok(buf)
}

fn session_key(shared: &[u8; 32], nonce: &[u8], server_pk: &[u8; 32], client_pk: &[u8; 32]) -> SymmetricKey {
    let hk = Hkdf::<Sha256>::new(Some(nonce), shared);
    let mut info = INFO.to_vec();
    info.extend_from_slice(server_pk);
    info.extend_from_slice(client_pk);
    let mut okm = Zeroizing::new([0u8; 32]);
    hk.expand(&info, okm.as_mut()).expect("32 bytes is a valid HKDF length");
    SymmetricKey::from_bytes(&*okm).expect("32-byte key")
}

fn invalid(e: impl ToString) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

/// Server-side task times.
#[derive(Clone, Copy, Debug, Default)]
struct ServerTimes {
    receive_ns: u64,
    reconstruct_ns: u64,
    detect_ns: u64,
    terminate_ns: u64,
}

fn ns(t: Instant) -> u64 {
    t.elapsed().as_nanos() as u64
}

fn serve_one(mut s: TcpStream, record: &TokenRecord, params: &VerifierParams) -> io::Result<()> {
    let hello = read_frame(&mut s)?;
    if hello.len() != 64 {
        return Err(invalid("bad hello"));
    }
    let client_pk: [u8; 32] = hello[32..].try_into().unwrap();
    let secret = EphemeralSecret::random_from_rng(OsRng);
    let server_pk = PublicKey::from(&secret).to_bytes();
    let shared = secret.diffie_hellman(&PublicKey::from(client_pk));
    write_frame(&mut s, &server_pk)?;
    let mut ch = SecureChannel::enclave(session_key(shared.as_bytes(), &hello[..32], &server_pk, &client_pk));

    let mut t = ServerTimes::default();
    let start = Instant::now();
    let sealed = read_frame(&mut s)?;
    let plain = ch.open(&sealed).map_err(invalid)?;
    let req = VerifyRequest::decode(&plain).map_err(invalid)?;
    drop(plain);
    t.receive_ns = ns(start);

    let start = Instant::now();
    let c_sec = record
        .c_sec
        .as_ref()
        .map(|c| AuthCiphertext::from_bytes(c))
        .transpose()
        .map_err(invalid)?;
    let env_bytes = asset::recover_secret(&req.tkh, &record.share, c_sec.as_ref()).map_err(invalid)?;
    let envelope = SecretEnvelope::from_bytes(&env_bytes).map_err(invalid)?;
    drop(env_bytes);
    t.reconstruct_ns = ns(start);

    let start = Instant::now();
    let res = Asset::parse(envelope.secret.scheme(), &req.dw)
        .ok()
        .and_then(|a| asset::detect(&a, &envelope.secret, params).ok())
        .unwrap_or(false);
    t.detect_ns = ns(start);

    let start = Instant::now();
    let reply = ch.seal(&VerifyResponse { res }.encode());
    write_frame(&mut s, &reply)?;
    drop(envelope);
    drop(req);
    t.terminate_ns = ns(start);

    let mut stats = Vec::with_capacity(32);
    for v in [t.receive_ns, t.reconstruct_ns, t.detect_ns, t.terminate_ns] {
        stats.extend_from_slice(&v.to_be_bytes());
    }
    write_frame(&mut s, &stats)
}

/// One verification against a fresh plain server thread.
pub fn verify_once(
    record: &TokenRecord,
    params: &VerifierParams,
    id: AssetId,
    suspect: &[u8],
    tkh: &[u8],
) -> io::Result<(bool, TaskTimings)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let record = record.clone();
    let params = *params;
    let server = std::thread::spawn(move || -> io::Result<()> {
        let (s, _) = listener.accept()?;
        s.set_nodelay(true)?;
        serve_one(s, &record, &params)
    });

    let start = Instant::now();
    let mut s = TcpStream::connect(addr)?;
    s.set_nodelay(true)?;
    let mut nonce = [0u8; 32];
    OsRng.fill_bytes(&mut nonce);
    let secret = EphemeralSecret::random_from_rng(OsRng);
    let client_pk = PublicKey::from(&secret).to_bytes();
    let mut hello = nonce.to_vec();
    hello.extend_from_slice(&client_pk);
    write_frame(&mut s, &hello)?;
    let server_pk: [u8; 32] = read_frame(&mut s)?.try_into().map_err(|_| invalid("bad server key"))?;
    let shared = secret.diffie_hellman(&PublicKey::from(server_pk));
    let mut ch = SecureChannel::holder(session_key(shared.as_bytes(), &nonce, &server_pk, &client_pk));
    let establish_ns = ns(start);

    let req = VerifyRequest {
        id,
        dw: suspect.to_vec(),
        tkh: tkh.to_vec(),
    };
    let plain = Zeroizing::new(req.encode());
    write_frame(&mut s, &ch.seal(&plain))?;
    let reply = read_frame(&mut s)?;
    let res = VerifyResponse::decode(&ch.open(&reply).map_err(invalid)?).map_err(invalid)?.res;
    let stats = read_frame(&mut s)?;
    server.join().map_err(|_| invalid("server thread panicked"))??;
    if stats.len() != 32 {
        return Err(invalid("bad stats"));
    }
    let v = |i: usize| u64::from_be_bytes(stats[i * 8..i * 8 + 8].try_into().unwrap());
    Ok((
        res,
        TaskTimings {
            establish_ns,
            receive_ns: v(0),
            reconstruct_ns: v(1),
            detect_ns: v(2),
            terminate_ns: v(3),
        },
    ))
}
