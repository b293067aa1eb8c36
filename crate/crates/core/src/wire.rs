//! Binary framing shared by prover, holder and owner.
//!
//! A frame is `[u32 length][u8 msg_type][payload]`, all integers big-endian.
//! `length` counts the type byte plus the payload, so an empty payload has
//! length 1.

use std::fmt;
use std::io::{self, Read, Write};

use crate::crypto::AssetId;

/// Largest accepted `length` field.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

pub mod msg {
    pub const REGISTER: u8 = 0x01;
    pub const ACK: u8 = 0x02;
    pub const ERR: u8 = 0x03;
    pub const RA_HELLO: u8 = 0x10;
    pub const RA_REPORT: u8 = 0x11;
    pub const RA_FINISH: u8 = 0x12;
    pub const VERIFY_REQ: u8 = 0x13;
    pub const VERIFY_RES: u8 = 0x14;
    pub const ABORT: u8 = 0x15;
    pub const SESSION_STATS: u8 = 0x16;
    pub const CACHE_QRY: u8 = 0x18;
    pub const CACHE_RES: u8 = 0x19;
    pub const CACHE_REPORT: u8 = 0x1A;
    pub const TPC_HELLO: u8 = 0x20;
    pub const TPC_GARBLED: u8 = 0x21;
    pub const OT_SENDER_INIT: u8 = 0x22;
    pub const OT_RECEIVER_CHOICE: u8 = 0x23;
    pub const OT_SENDER_PAYLOAD: u8 = 0x24;
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("frame length {0} out of range")]
    Length(u32),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("malformed {0} payload")]
    Malformed(&'static str),
}

/// Registration rejection reasons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrCode {
    Duplicate = 1,
    Storage = 2,
    Unauthorized = 3,
    Malformed = 4,
}

impl ErrCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::Duplicate,
            2 => Self::Storage,
            3 => Self::Unauthorized,
            4 => Self::Malformed,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Duplicate => "DUPLICATE",
            Self::Storage => "STORAGE",
            Self::Unauthorized => "UNAUTHORIZED",
            Self::Malformed => "MALFORMED",
        })
    }
}

/// Verification session abort reasons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum AbortCode {
    UnknownId = 1,
    DecryptFailed = 2,
    IdgenMismatch = 3,
    Attestation = 4,
    BadFrame = 5,
    Replay = 6,
    Unsupported = 7,
    CircuitMismatch = 8,
    Internal = 9,
    RateLimited = 10,
}

impl AbortCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::UnknownId,
            2 => Self::DecryptFailed,
            3 => Self::IdgenMismatch,
            4 => Self::Attestation,
            5 => Self::BadFrame,
            6 => Self::Replay,
            7 => Self::Unsupported,
            8 => Self::CircuitMismatch,
            9 => Self::Internal,
            10 => Self::RateLimited,
            _ => return None,
        })
    }
}

impl fmt::Display for AbortCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UnknownId => "UNKNOWN_ID",
            Self::DecryptFailed => "DECRYPT_FAILED",
            Self::IdgenMismatch => "IDGEN_MISMATCH",
            Self::Attestation => "ATTESTATION",
            Self::BadFrame => "BAD_FRAME",
            Self::Replay => "REPLAY",
            Self::Unsupported => "UNSUPPORTED",
            Self::CircuitMismatch => "CIRCUIT_MISMATCH",
            Self::Internal => "INTERNAL",
            Self::RateLimited => "RATE_LIMITED",
        })
    }
}

pub type Label = [u8; 16];

#[derive(Clone, PartialEq)]
pub enum Message {
    /// Owner registration. `mac` is HMAC-SHA-256 under the owner key over the
    /// preceding payload bytes.
    Register {
        id: AssetId,
        scheme: u8,
        share: Vec<u8>,
        c_sec: Vec<u8>,
        mac: [u8; 32],
    },
    Ack,
    Err(ErrCode),
    RaHello {
        nonce: [u8; 32],
    },
    RaReport {
        measurement: [u8; 32],
        epk: [u8; 32],
        sig: [u8; 64],
    },
    RaFinish {
        client_epk: [u8; 32],
        mac: [u8; 16],
    },
    /// Sealed [`VerifyRequest`]; see [`crate::tee::channel`].
    VerifyReq(Vec<u8>),
    /// Sealed [`VerifyResponse`].
    VerifyRes(Vec<u8>),
    Abort(AbortCode),
    SessionStats(SessionStats),
    CacheQry {
        id: AssetId,
        h: [u8; 32],
        sim: f64,
    },
    CacheRes {
        present: bool,
        res: bool,
    },
    /// Holder-reported outcome of a garbled-circuit verification, for caching.
    CacheReport {
        id: AssetId,
        h: [u8; 32],
        sim: f64,
        res: bool,
    },
    TpcHello {
        id: AssetId,
        pairs: u16,
        slots: u32,
        t: u32,
        circuit_hash: [u8; 32],
    },
    TpcGarbled {
        /// Two ciphertexts per AND gate.
        tables: Vec<[Label; 2]>,
        decode: Vec<bool>,
        garbler_labels: Vec<Label>,
    },
    OtSenderInit {
        a: [u8; 32],
    },
    OtReceiverChoice {
        points: Vec<[u8; 32]>,
    },
    OtSenderPayload {
        /// `(c0, c1)`, each a 16-byte masked label followed by a 16-byte tag.
        pairs: Vec<([u8; 32], [u8; 32])>,
    },
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Register { id, scheme, share, c_sec, .. } => f
                .debug_struct("Register")
                .field("id", id)
                .field("scheme", scheme)
                .field("share_len", &share.len())
                .field("c_sec_len", &c_sec.len())
                .finish(),
            Message::VerifyReq(b) => write!(f, "VerifyReq({} bytes)", b.len()),
            Message::VerifyRes(b) => write!(f, "VerifyRes({} bytes)", b.len()),
            Message::TpcGarbled { tables, decode, garbler_labels } => f
                .debug_struct("TpcGarbled")
                .field("tables", &tables.len())
                .field("decode", &decode.len())
                .field("garbler_labels", &garbler_labels.len())
                .finish(),
            Message::OtReceiverChoice { points } => write!(f, "OtReceiverChoice({})", points.len()),
            Message::OtSenderPayload { pairs } => write!(f, "OtSenderPayload({})", pairs.len()),
            Message::Ack => f.write_str("Ack"),
            Message::Err(c) => write!(f, "Err({c})"),
            Message::Abort(c) => write!(f, "Abort({c})"),
            Message::RaHello { .. } => f.write_str("RaHello"),
            Message::RaReport { .. } => f.write_str("RaReport"),
            Message::RaFinish { .. } => f.write_str("RaFinish"),
            Message::SessionStats(s) => write!(f, "{s:?}"),
            Message::CacheQry { id, sim, .. } => write!(f, "CacheQry({id}, sim={sim})"),
            Message::CacheRes { present, res } => write!(f, "CacheRes(present={present}, res={res})"),
            Message::CacheReport { id, sim, res, .. } => write!(f, "CacheReport({id}, sim={sim}, res={res})"),
            Message::TpcHello { id, pairs, slots, t, .. } => {
                write!(f, "TpcHello({id}, pairs={pairs}, slots={slots}, t={t})")
            }
            Message::OtSenderInit { .. } => f.write_str("OtSenderInit"),
        }
    }
}

/// Enclave-side timings in nanoseconds, reported to the holder after a verification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub receive_ns: u64,
    pub reconstruct_ns: u64,
    pub detect_ns: u64,
    pub terminate_ns: u64,
}

impl SessionStats {
    pub fn encode(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, v) in [self.receive_ns, self.reconstruct_ns, self.detect_ns, self.terminate_ns]
            .iter()
            .enumerate()
        {
            out[i * 8..i * 8 + 8].copy_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor::new(bytes);
        let s = Self {
            receive_ns: c.u64()?,
            reconstruct_ns: c.u64()?,
            detect_ns: c.u64()?,
            terminate_ns: c.u64()?,
        };
        c.finish("SESSION_STATS")?;
        Ok(s)
    }
}

/// Plaintext of `VERIFY_REQ`.
#[derive(Clone, PartialEq, Eq)]
pub struct VerifyRequest {
    pub id: AssetId,
    pub dw: Vec<u8>,
    pub tkh: Vec<u8>,
}

impl fmt::Debug for VerifyRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VerifyRequest")
            .field("id", &self.id)
            .field("dw_len", &self.dw.len())
            .field("tkh_len", &self.tkh.len())
            .finish()
    }
}

impl VerifyRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.dw.len() + self.tkh.len());
        out.extend_from_slice(&self.id.0);
        put_vec_u32(&mut out, &self.dw);
        put_vec_u32(&mut out, &self.tkh);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor::new(bytes);
        let r = Self {
            id: AssetId(c.array()?),
            dw: c.vec_u32()?.to_vec(),
            tkh: c.vec_u32()?.to_vec(),
        };
        c.finish("VERIFY_REQ")?;
        Ok(r)
    }
}

impl Drop for VerifyRequest {
    fn drop(&mut self) {
        use zeroize::Zeroize;
        self.dw.zeroize();
        self.tkh.zeroize();
    }
}

/// Plaintext of `VERIFY_RES`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyResponse {
    pub res: bool,
}

impl VerifyResponse {
    pub fn encode(&self) -> Vec<u8> {
        vec![self.res as u8]
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        match bytes {
            [0] => Ok(Self { res: false }),
            [1] => Ok(Self { res: true }),
            _ => Err(WireError::Malformed("VERIFY_RES")),
        }
    }
}

fn put_vec_u32(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn put_bool(out: &mut Vec<u8>, b: bool) {
    out.push(b as u8);
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg::*;
        match self {
            Message::Register { .. } => REGISTER,
            Message::Ack => ACK,
            Message::Err(_) => ERR,
            Message::RaHello { .. } => RA_HELLO,
            Message::RaReport { .. } => RA_REPORT,
            Message::RaFinish { .. } => RA_FINISH,
            Message::VerifyReq(_) => VERIFY_REQ,
            Message::VerifyRes(_) => VERIFY_RES,
            Message::Abort(_) => ABORT,
            Message::SessionStats(_) => SESSION_STATS,
            Message::CacheQry { .. } => CACHE_QRY,
            Message::CacheRes { .. } => CACHE_RES,
            Message::CacheReport { .. } => CACHE_REPORT,
            Message::TpcHello { .. } => TPC_HELLO,
            Message::TpcGarbled { .. } => TPC_GARBLED,
            Message::OtSenderInit { .. } => OT_SENDER_INIT,
            Message::OtReceiverChoice { .. } => OT_RECEIVER_CHOICE,
            Message::OtSenderPayload { .. } => OT_SENDER_PAYLOAD,
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Register { .. } => {
                out = self.register_signed_part().expect("register");
                if let Message::Register { mac, .. } = self {
                    out.extend_from_slice(mac);
                }
            }
            Message::Ack => {}
            Message::Err(c) => out.push(*c as u8),
            Message::RaHello { nonce } => out.extend_from_slice(nonce),
            Message::RaReport { measurement, epk, sig } => {
                out.extend_from_slice(measurement);
                out.extend_from_slice(epk);
                out.extend_from_slice(sig);
            }
            Message::RaFinish { client_epk, mac } => {
                out.extend_from_slice(client_epk);
                out.extend_from_slice(mac);
            }
            Message::VerifyReq(b) | Message::VerifyRes(b) => out.extend_from_slice(b),
            Message::Abort(c) => out.push(*c as u8),
            Message::SessionStats(s) => out.extend_from_slice(&s.encode()),
            Message::CacheQry { id, h, sim } => {
                out.extend_from_slice(&id.0);
                out.extend_from_slice(h);
                out.extend_from_slice(&sim.to_be_bytes());
            }
            Message::CacheRes { present, res } => {
                put_bool(&mut out, *present);
                put_bool(&mut out, *res);
            }
            Message::CacheReport { id, h, sim, res } => {
                out.extend_from_slice(&id.0);
                out.extend_from_slice(h);
                out.extend_from_slice(&sim.to_be_bytes());
                put_bool(&mut out, *res);
            }
            Message::TpcHello { id, pairs, slots, t, circuit_hash } => {
                out.extend_from_slice(&id.0);
                out.extend_from_slice(&pairs.to_be_bytes());
                out.extend_from_slice(&slots.to_be_bytes());
                out.extend_from_slice(&t.to_be_bytes());
                out.extend_from_slice(circuit_hash);
            }
            Message::TpcGarbled { tables, decode, garbler_labels } => {
                out.reserve(12 + tables.len() * 32 + decode.len() + garbler_labels.len() * 16);
                out.extend_from_slice(&(tables.len() as u32).to_be_bytes());
                for [a, b] in tables {
                    out.extend_from_slice(a);
                    out.extend_from_slice(b);
                }
                out.extend_from_slice(&(decode.len() as u32).to_be_bytes());
                out.extend(decode.iter().map(|&b| b as u8));
                out.extend_from_slice(&(garbler_labels.len() as u32).to_be_bytes());
                for l in garbler_labels {
                    out.extend_from_slice(l);
                }
            }
            Message::OtSenderInit { a } => out.extend_from_slice(a),
            Message::OtReceiverChoice { points } => {
                out.extend_from_slice(&(points.len() as u32).to_be_bytes());
                for p in points {
                    out.extend_from_slice(p);
                }
            }
            Message::OtSenderPayload { pairs } => {
                out.extend_from_slice(&(pairs.len() as u32).to_be_bytes());
                for (c0, c1) in pairs {
                    out.extend_from_slice(c0);
                    out.extend_from_slice(c1);
                }
            }
        }
        out
    }

    /// REGISTER payload without the trailing MAC; this is what the MAC covers.
    pub fn register_signed_part(&self) -> Option<Vec<u8>> {
        let Message::Register { id, scheme, share, c_sec, .. } = self else {
            return None;
        };
        let mut out = Vec::with_capacity(41 + share.len() + c_sec.len());
        out.extend_from_slice(&id.0);
        out.push(*scheme);
        put_vec_u32(&mut out, share);
        put_vec_u32(&mut out, c_sec);
        Some(out)
    }

    /// Full frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(payload.len() as u32 + 1).to_be_bytes());
        out.push(self.msg_type());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor::new(payload);
        let m = match msg_type {
            msg::REGISTER => {
                let id = AssetId(c.array()?);
                let scheme = c.u8()?;
                let share = c.vec_u32()?.to_vec();
                let c_sec = c.vec_u32()?.to_vec();
                let mac = c.array()?;
                Message::Register { id, scheme, share, c_sec, mac }
            }
            msg::ACK => Message::Ack,
            msg::ERR => Message::Err(ErrCode::from_u8(c.u8()?).ok_or(WireError::Malformed("ERR"))?),
            msg::RA_HELLO => Message::RaHello { nonce: c.array()? },
            msg::RA_REPORT => Message::RaReport {
                measurement: c.array()?,
                epk: c.array()?,
                sig: c.array()?,
            },
            msg::RA_FINISH => Message::RaFinish {
                client_epk: c.array()?,
                mac: c.array()?,
            },
            msg::VERIFY_REQ => Message::VerifyReq(c.rest().to_vec()),
            msg::VERIFY_RES => Message::VerifyRes(c.rest().to_vec()),
            msg::ABORT => Message::Abort(AbortCode::from_u8(c.u8()?).ok_or(WireError::Malformed("ABORT"))?),
            msg::SESSION_STATS => Message::SessionStats(SessionStats::decode(c.rest())?),
            msg::CACHE_QRY => Message::CacheQry {
                id: AssetId(c.array()?),
                h: c.array()?,
                sim: c.f64()?,
            },
            msg::CACHE_RES => Message::CacheRes {
                present: c.bool()?,
                res: c.bool()?,
            },
            msg::CACHE_REPORT => Message::CacheReport {
                id: AssetId(c.array()?),
                h: c.array()?,
                sim: c.f64()?,
                res: c.bool()?,
            },
            msg::TPC_HELLO => Message::TpcHello {
                id: AssetId(c.array()?),
                pairs: c.u16()?,
                slots: c.u32()?,
                t: c.u32()?,
                circuit_hash: c.array()?,
            },
            msg::TPC_GARBLED => {
                let n = c.count(32)?;
                let tables = (0..n)
                    .map(|_| Ok([c.array()?, c.array()?]))
                    .collect::<Result<_, WireError>>()?;
                let n = c.count(1)?;
                let decode = (0..n).map(|_| c.bool()).collect::<Result<_, _>>()?;
                let n = c.count(16)?;
                let garbler_labels = (0..n).map(|_| c.array()).collect::<Result<_, _>>()?;
                Message::TpcGarbled { tables, decode, garbler_labels }
            }
            msg::OT_SENDER_INIT => Message::OtSenderInit { a: c.array()? },
            msg::OT_RECEIVER_CHOICE => {
                let n = c.count(32)?;
                Message::OtReceiverChoice {
                    points: (0..n).map(|_| c.array()).collect::<Result<_, _>>()?,
                }
            }
            msg::OT_SENDER_PAYLOAD => {
                let n = c.count(64)?;
                Message::OtSenderPayload {
                    pairs: (0..n)
                        .map(|_| Ok((c.array()?, c.array()?)))
                        .collect::<Result<_, WireError>>()?,
                }
            }
            other => return Err(WireError::UnknownType(other)),
        };
        c.finish(type_name(msg_type))?;
        Ok(m)
    }

    /// Decodes exactly one complete frame.
    pub fn decode(frame: &[u8]) -> Result<Self, WireError> {
        let (msg_type, payload) = split_frame(frame)?;
        Self::decode_payload(msg_type, payload)
    }
}

pub fn type_name(msg_type: u8) -> &'static str {
    match msg_type {
        msg::REGISTER => "REGISTER",
        msg::ACK => "ACK",
        msg::ERR => "ERR",
        msg::RA_HELLO => "RA_HELLO",
        msg::RA_REPORT => "RA_REPORT",
        msg::RA_FINISH => "RA_FINISH",
        msg::VERIFY_REQ => "VERIFY_REQ",
        msg::VERIFY_RES => "VERIFY_RES",
        msg::ABORT => "ABORT",
        msg::SESSION_STATS => "SESSION_STATS",
        msg::CACHE_QRY => "CACHE_QRY",
        msg::CACHE_RES => "CACHE_RES",
        msg::CACHE_REPORT => "CACHE_REPORT",
        msg::TPC_HELLO => "TPC_HELLO",
        msg::TPC_GARBLED => "TPC_GARBLED",
        msg::OT_SENDER_INIT => "OT_SENDER_INIT",
        msg::OT_RECEIVER_CHOICE => "OT_RECEIVER_CHOICE",
        msg::OT_SENDER_PAYLOAD => "OT_SENDER_PAYLOAD",
        _ => "unknown",
    }
}

/// Validates a length field read off the wire.
pub fn check_length(len: u32) -> Result<usize, WireError> {
    if len == 0 || len > MAX_FRAME_LEN {
        Err(WireError::Length(len))
    } else {
        Ok(len as usize)
    }
}

/// Splits a complete frame into `(msg_type, payload)`.
pub fn split_frame(frame: &[u8]) -> Result<(u8, &[u8]), WireError> {
    if frame.len() < 5 {
        return Err(WireError::Truncated);
    }
    let len = check_length(u32::from_be_bytes(frame[..4].try_into().unwrap()))?;
    if frame.len() != 4 + len {
        return Err(WireError::Truncated);
    }
    Ok((frame[4], &frame[5..]))
}

/// Reads one frame body (`msg_type || payload`) from a blocking stream.
/// Returns `None` on a clean end of stream before the length field.
pub fn read_body<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = check_length(u32::from_be_bytes(len)).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let mut body = Vec::new();
    r.take(len as u64).read_to_end(&mut body)?;
    if body.len() != len {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    Ok(Some(body))
}

/// Reads and decodes one message; end of stream is an error here.
pub fn read_message<R: Read>(r: &mut R) -> io::Result<Message> {
    let body = read_body(r)?.ok_or(io::ErrorKind::UnexpectedEof)?;
    Message::decode_payload(body[0], &body[1..]).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn write_message<W: Write>(w: &mut W, m: &Message) -> io::Result<()> {
    w.write_all(&m.encode())?;
    w.flush()
}

/// Bounds-checked big-endian reader.
pub struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.bytes(N)?.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.bytes(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::Malformed("bool")),
        }
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_be_bytes(self.array()?))
    }

    pub fn vec_u32(&mut self) -> Result<&'a [u8], WireError> {
        let n = self.u32()? as usize;
        self.bytes(n)
    }

    /// Reads a u32 element count and checks `count * elem` bytes remain.
    pub fn count(&mut self, elem: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.checked_mul(elem).is_none_or(|need| need > self.remaining()) {
            return Err(WireError::Truncated);
        }
        Ok(n)
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    pub fn finish(&self, what: &'static str) -> Result<(), WireError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(WireError::Malformed(what))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_payload_has_length_one() {
        assert_eq!(Message::Ack.encode(), vec![0, 0, 0, 1, 0x02]);
    }

    #[test]
    fn length_bounds() {
        assert_eq!(check_length(0), Err(WireError::Length(0)));
        assert_eq!(check_length(MAX_FRAME_LEN + 1), Err(WireError::Length(MAX_FRAME_LEN + 1)));
        assert_eq!(check_length(1), Ok(1));
        assert_eq!(split_frame(&[0, 0, 0, 2, 0x02]), Err(WireError::Truncated));
    }

    #[test]
    fn trailing_bytes_rejected() {
        assert_eq!(
            Message::decode(&[0, 0, 0, 2, 0x02, 0]),
            Err(WireError::Malformed("ACK"))
        );
    }

    #[test]
    fn unknown_codes_rejected() {
        assert!(Message::decode(&[0, 0, 0, 2, 0x03, 0]).is_err());
        assert!(Message::decode(&[0, 0, 0, 2, 0x15, 99]).is_err());
        assert_eq!(Message::decode(&[0, 0, 0, 1, 0x7f]), Err(WireError::UnknownType(0x7f)));
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        let mut frame = vec![0, 0, 0, 5, msg::OT_RECEIVER_CHOICE];
        frame.extend_from_slice(&u32::MAX.to_be_bytes());
        assert_eq!(Message::decode(&frame), Err(WireError::Truncated));
    }

    #[test]
    fn verify_request_roundtrip() {
        let r = VerifyRequest {
            id: AssetId([3; 32]),
            dw: b"a\nb\n".to_vec(),
            tkh: vec![9; 32],
        };
        assert_eq!(VerifyRequest::decode(&r.encode()).unwrap(), r);
        assert!(VerifyRequest::decode(&r.encode()[..40]).is_err());
        assert!(VerifyResponse::decode(&[2]).is_err());
    }

    #[test]
    fn blocking_stream_helpers() {
        let mut buf = Vec::new();
        write_message(&mut buf, &Message::Ack).unwrap();
        write_message(&mut buf, &Message::Abort(AbortCode::Replay)).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_message(&mut r).unwrap(), Message::Ack);
        assert_eq!(read_message(&mut r).unwrap(), Message::Abort(AbortCode::Replay));
        assert!(read_body(&mut r).unwrap().is_none());
        let mut short: &[u8] = &[0, 0, 0, 9, 0x13, 1];
        assert!(read_body(&mut short).is_err());
        let mut zero: &[u8] = &[0, 0, 0, 0];
        assert!(read_body(&mut zero).is_err());
    }
}
