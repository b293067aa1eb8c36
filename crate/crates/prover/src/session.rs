//! One framed-protocol connection.
//!
//! The handler only ever sees a byte stream; the peer address is dropped by
//! the listener before a session starts, so nothing here can log or key on
//! where a holder connects from.

use std::sync::Arc;
use std::time::{Duration, Instant};

use puppy_core::asset::Mode;
use puppy_core::cache::CacheEntry;
use puppy_core::crypto::AssetId;
use puppy_core::gc::ProverSession;
use puppy_core::tee::AttestationReport;
use puppy_core::wire::{check_length, AbortCode, ErrCode, Message, SessionStats};
use puppy_core::asset::{Scheme, TokenRecord};
use rand::rngs::OsRng;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::state::{bump, AppState};
use crate::tap::{INBOUND, OUTBOUND};

/// A decoded frame and how long its body took to arrive.
struct Inbound {
    msg: Message,
    body_ns: u64,
}

enum ReadOutcome {
    Frame(Inbound),
    Closed,
    /// Length or decoding error; the connection gets an abort and is closed.
    Bad,
}

/// Per-connection protocol state.
#[derive(Default)]
struct Conn {
    enclave_session: Option<u64>,
    attested: bool,
    /// Last cache query that missed; a verification of the same id caches its result.
    cache_miss: Option<(AssetId, [u8; 32], f64)>,
    tpc: Option<(AssetId, ProverSession)>,
    tpc_done: Option<AssetId>,
}

pub async fn handle<S>(state: Arc<AppState>, mut stream: S)
where
    S: AsyncRead + AsyncWrite + Unpin + Send,
{
    bump(&state.stats.connections);
    let mut conn = Conn::default();
    let idle = Duration::from_secs(state.cfg.idle_timeout_secs.max(1));
    loop {
        let outcome = match tokio::time::timeout(idle, read_frame(&state, &mut stream)).await {
            Ok(Ok(o)) => o,
            Ok(Err(_)) | Err(_) => break,
        };
        let inbound = match outcome {
            ReadOutcome::Frame(f) => f,
            ReadOutcome::Closed => break,
            ReadOutcome::Bad => {
                bump(&state.stats.rejected_frames);
                let _ = send(&state, &mut stream, &Message::Abort(AbortCode::BadFrame)).await;
                break;
            }
        };
        let replies = dispatch(&state, &mut conn, inbound).await;
        let mut close = false;
        for r in &replies {
            if let Message::Abort(code) = r {
                bump(&state.stats.aborts);
                tracing::info!(code = %code, "session aborted");
                close = *code == AbortCode::BadFrame;
            }
            if send(&state, &mut stream, r).await.is_err() {
                close = true;
                break;
            }
        }
        if close {
            break;
        }
    }
    if let (Some(sid), Some(enclave)) = (conn.enclave_session.take(), &state.enclave) {
        enclave.erase(sid).await;
    }
    let _ = stream.shutdown().await;
}

async fn read_frame<S: AsyncRead + Unpin>(state: &AppState, stream: &mut S) -> std::io::Result<ReadOutcome> {
    let mut len = [0u8; 4];
    match stream.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(ReadOutcome::Closed),
        Err(e) => return Err(e),
    }
    let Ok(n) = check_length(u32::from_be_bytes(len)) else {
        return Ok(ReadOutcome::Bad);
    };
    let start = Instant::now();
    let mut body = Vec::new();
    (&mut *stream).take(n as u64).read_to_end(&mut body).await?;
    if body.len() != n {
        return Ok(ReadOutcome::Bad);
    }
    let body_ns = start.elapsed().as_nanos() as u64;
    if let Some(tap) = &state.tap {
        let mut frame = len.to_vec();
        frame.extend_from_slice(&body);
        tap.record(INBOUND, &frame);
    }
    Ok(match Message::decode_payload(body[0], &body[1..]) {
        Ok(msg) => ReadOutcome::Frame(Inbound { msg, body_ns }),
        Err(_) => ReadOutcome::Bad,
    })
}

async fn send<S: AsyncWrite + Unpin>(state: &AppState, stream: &mut S, m: &Message) -> std::io::Result<()> {
    let frame = m.encode();
    if let Some(tap) = &state.tap {
        tap.record(OUTBOUND, &frame);
    }
    stream.write_all(&frame).await?;
    stream.flush().await
}

fn abort(code: AbortCode) -> Vec<Message> {
    vec![Message::Abort(code)]
}

async fn dispatch(state: &Arc<AppState>, conn: &mut Conn, inbound: Inbound) -> Vec<Message> {
    let mode = state.mode();
    match inbound.msg {
        m @ Message::Register { .. } => vec![register(state, m)],
        Message::CacheQry { id, h, sim } => {
            let hit = if sim.is_finite() { state.cache_get(&id, &h, sim) } else { None };
            match hit {
                Some(res) => vec![Message::CacheRes { present: true, res }],
                None => {
                    conn.cache_miss = sim.is_finite().then_some((id, h, sim));
                    vec![Message::CacheRes {
                        present: false,
                        res: false,
                    }]
                }
            }
        }
        Message::RaHello { nonce } => {
            let Some(enclave) = state.enclave.as_ref() else {
                return abort(AbortCode::Unsupported);
            };
            if conn.enclave_session.is_some() {
                return abort(AbortCode::BadFrame);
            }
            let sid = enclave.new_session();
            conn.enclave_session = Some(sid);
            conn.attested = false;
            match enclave.init(sid, nonce).await {
                Ok(bytes) => match AttestationReport::decode(&bytes) {
                    Some(r) => vec![Message::RaReport {
                        measurement: r.measurement,
                        epk: r.epk,
                        sig: r.sig,
                    }],
                    None => {
                        conn.enclave_session = None;
                        enclave.erase(sid).await;
                        abort(AbortCode::Internal)
                    }
                },
                Err(code) => {
                    conn.enclave_session = None;
                    abort(code)
                }
            }
        }
        Message::RaFinish { client_epk, mac } => {
            let (Some(enclave), Some(sid)) = (state.enclave.as_ref(), conn.enclave_session) else {
                return abort(AbortCode::BadFrame);
            };
            if conn.attested {
                return abort(AbortCode::BadFrame);
            }
            match enclave.finish(sid, client_epk, mac).await {
                Ok(()) => {
                    conn.attested = true;
                    vec![Message::Ack]
                }
                Err(_) => {
                    conn.enclave_session = None;
                    abort(AbortCode::Attestation)
                }
            }
        }
        Message::VerifyReq(sealed) => verify(state, conn, sealed, inbound.body_ns).await,
        hello @ Message::TpcHello { .. } => {
            if mode != Mode::TwoPc {
                return abort(AbortCode::Unsupported);
            }
            if conn.tpc.is_some() {
                return abort(AbortCode::BadFrame);
            }
            let Message::TpcHello { id, .. } = &hello else { unreachable!() };
            let id = *id;
            let Some(record) = state.store.get(&id) else {
                tracing::info!(id = %id, "2pc for unknown id");
                return abort(AbortCode::UnknownId);
            };
            if !state.rate_ok(&id) {
                return abort(AbortCode::RateLimited);
            }
            bump(&state.stats.tpc_sessions);
            let started =
                tokio::task::spawn_blocking(move || ProverSession::start(&hello, &record.share, &mut OsRng)).await;
            match started {
                Ok(Ok((session, [garbled, init]))) => {
                    conn.tpc = Some((id, session));
                    vec![garbled, init]
                }
                Ok(Err(code)) => abort(code),
                Err(_) => abort(AbortCode::Internal),
            }
        }
        choice @ Message::OtReceiverChoice { .. } => {
            let Some((id, session)) = conn.tpc.take() else {
                return abort(AbortCode::BadFrame);
            };
            let answered = tokio::task::spawn_blocking(move || session.on_choice(&choice)).await;
            match answered {
                Ok(Ok(payload)) => {
                    conn.tpc_done = Some(id);
                    tracing::info!(id = %id, "2pc session complete");
                    vec![payload]
                }
                Ok(Err(code)) => abort(code),
                Err(_) => abort(AbortCode::Internal),
            }
        }
        Message::CacheReport { id, h, sim, res } => {
            // Only a holder that just finished a garbled verification for this
            // id, after a cache miss on the same key, may report its result.
            let allowed = mode == Mode::TwoPc
                && conn.tpc_done == Some(id)
                && conn.cache_miss.is_some_and(|(mid, mh, _)| mid == id && mh == h);
            if !allowed || !sim.is_finite() {
                return vec![Message::Err(ErrCode::Unauthorized)];
            }
            conn.tpc_done = None;
            conn.cache_miss = None;
            state.cache_put(CacheEntry { h, id, res, sim });
            vec![Message::Ack]
        }
        _ => abort(AbortCode::BadFrame),
    }
}

fn register(state: &AppState, m: Message) -> Message {
    let signed = m.register_signed_part().expect("register message");
    let Message::Register {
        id,
        scheme,
        share,
        c_sec,
        mac,
    } = m
    else {
        unreachable!()
    };
    let Some(scheme) = Scheme::from_code(scheme) else {
        return Message::Err(ErrCode::Malformed);
    };
    if share.is_empty() {
        return Message::Err(ErrCode::Malformed);
    }
    let record = TokenRecord {
        id,
        scheme,
        share,
        c_sec: (!c_sec.is_empty()).then_some(c_sec),
    };
    match state.register(record, &signed, &mac) {
        Ok(()) => Message::Ack,
        Err(code) => Message::Err(code),
    }
}

async fn verify(state: &Arc<AppState>, conn: &mut Conn, sealed: Vec<u8>, body_ns: u64) -> Vec<Message> {
    let (Some(enclave), Some(sid)) = (state.enclave.as_ref(), conn.enclave_session) else {
        return abort(AbortCode::BadFrame);
    };
    if !conn.attested {
        return abort(AbortCode::BadFrame);
    }
    // The session is consumed whatever happens next.
    conn.enclave_session = None;
    conn.attested = false;
    bump(&state.stats.verify_sessions);

    let t_open = Instant::now();
    let id = match enclave.open(sid, sealed).await {
        Ok(id) => AssetId(id),
        Err(code) => return abort(code),
    };
    let receive_ns = body_ns + t_open.elapsed().as_nanos() as u64;

    let Some(record) = state.store.get(&id) else {
        enclave.erase(sid).await;
        tracing::info!(id = %id, "verification for unknown id");
        return abort(AbortCode::UnknownId);
    };
    if !state.rate_ok(&id) {
        enclave.erase(sid).await;
        return abort(AbortCode::RateLimited);
    }
    let opt_in = state.cache.is_some() && conn.cache_miss.is_some_and(|(mid, _, _)| mid == id);
    bump(&state.stats.enclave_verify_calls);
    let outcome = match enclave.verify(sid, opt_in, record.encode()).await {
        Ok(o) => o,
        Err(code) => return abort(code),
    };
    if let (Some(res), Some((_, h, sim))) = (outcome.res_clear, conn.cache_miss.take()) {
        state.cache_put(CacheEntry { h, id, res, sim });
    }
    tracing::info!(id = %id, sealed_bytes = outcome.sealed.len(), "verification complete");
    vec![
        Message::VerifyRes(outcome.sealed),
        Message::SessionStats(SessionStats {
            receive_ns,
            reconstruct_ns: outcome.reconstruct_ns,
            detect_ns: outcome.detect_ns,
            terminate_ns: outcome.terminate_ns,
        }),
    ]
}
