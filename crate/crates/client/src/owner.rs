//! Ownership generation: watermark, derive tokens, register, write the bundle.
//!
//! Output layout:
//!
//! ```text
//! out-dir/
//!   bundle.json            holder bundle (tk_H, id, scheme, mode, trust anchor)
//!   watermarked.txt|csv    the watermarked asset
//!   owner/keystore.json    the secret envelope; stays with the owner
//! ```
//!
//! Nothing is written unless registration succeeds. Files go to a temporary
//! sibling directory that is renamed into place at the end.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use puppy_core::asset::{
    self, derive_tokens, Asset, IdBinding, InsertOptions, Mode, OwnershipBundle, Scheme, SecretEnvelope,
    TokenRecord, TrustAnchor, WatermarkSecret,
};
use puppy_core::crypto::{hmac_sha256, AssetId};
use puppy_core::gc::verify::{MAX_MODULUS, MAX_PAIRS};
use puppy_core::gc::compile_secret;
use puppy_core::tee::keys::{unarmor_32, MANUFACTURER_PUBLIC_LABEL, OWNER_PSK_LABEL};
use puppy_core::wire::Message;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::conn::{unexpected, Conn};
use crate::error::ClientError;

pub const BUNDLE_FILE: &str = "bundle.json";
pub const KEYSTORE_FILE: &str = "owner/keystore.json";

#[derive(Clone, Debug)]
pub enum IdChoice {
    /// `IDGen(owner, digest(D_w), date)`; the binding travels in the envelope.
    Derived { owner: String, date: String },
    Random,
}

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub scheme: Scheme,
    pub mode: Mode,
    pub id: IdChoice,
    pub insert: InsertOptions,
    pub trust: Option<TrustAnchor>,
    pub policy: Option<String>,
}

impl PrepareOptions {
    pub fn new(scheme: Scheme, mode: Mode) -> Self {
        Self {
            scheme,
            mode,
            id: IdChoice::Derived {
                owner: "owner".into(),
                date: today(),
            },
            insert: insert_options_for(mode),
            trust: None,
            policy: None,
        }
    }
}

/// Insertion defaults, narrowed to what the garbled circuit accepts in 2PC mode.
pub fn insert_options_for(mode: Mode) -> InsertOptions {
    let mut o = InsertOptions::default();
    if mode == Mode::TwoPc {
        o.freqy.modulus = MAX_MODULUS;
        o.freqy.num_pairs = MAX_PAIRS;
    }
    o
}

/// ISO-8601 UTC day.
pub fn today() -> String {
    time::OffsetDateTime::now_utc().date().to_string()
}

/// Owner-only record of the secret.
#[derive(Serialize, Deserialize)]
pub struct Keystore {
    pub version: u32,
    pub id: AssetId,
    pub scheme: Scheme,
    pub mode: Mode,
    /// Base64 of the secret envelope.
    pub envelope: String,
}

/// Everything produced before anything leaves the owner's machine.
pub struct Prepared {
    pub id: AssetId,
    pub watermarked: Vec<u8>,
    pub record: TokenRecord,
    pub bundle: OwnershipBundle,
    pub envelope: Zeroizing<Vec<u8>>,
}

impl std::fmt::Debug for Prepared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prepared").field("id", &self.id).finish_non_exhaustive()
    }
}

pub fn asset_file_name(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::FreqyWm => "watermarked.txt",
        Scheme::Obt => "watermarked.csv",
    }
}

/// Watermarks `asset_bytes` and derives the tokens.
pub fn prepare<R: RngCore>(asset_bytes: &[u8], opts: &PrepareOptions, rng: &mut R) -> Result<Prepared, ClientError> {
    let aerr = |e: asset::AssetError| ClientError::Asset(e.to_string());
    if opts.mode == Mode::TwoPc && opts.scheme != Scheme::FreqyWm {
        return Err(ClientError::Usage("2pc mode supports the freqywm scheme only".into()));
    }
    if opts.mode.uses_enclave() && opts.trust.is_none() {
        return Err(ClientError::Usage(format!(
            "mode {} needs the manufacturer public key and enclave measurement",
            opts.mode
        )));
    }
    let asset = Asset::parse(opts.scheme, asset_bytes).map_err(aerr)?;
    let (dw, secret) = asset::watermark(&asset, &opts.insert, rng).map_err(aerr)?;
    let watermarked = dw.to_bytes();
    let (id, binding) = match &opts.id {
        IdChoice::Derived { owner, date } => {
            let b = IdBinding {
                owner: owner.clone(),
                date: date.clone(),
            };
            (b.id_for(&watermarked), Some(b))
        }
        IdChoice::Random => (AssetId::random(), None),
    };
    let envelope = SecretEnvelope { secret, binding }.to_bytes();
    let shared: Zeroizing<Vec<u8>> = match opts.mode {
        Mode::Tee | Mode::TeeDirect => envelope.clone(),
        Mode::TwoPc => {
            let env = SecretEnvelope::from_bytes(&envelope).map_err(aerr)?;
            let WatermarkSecret::FreqyWm(s) = &env.secret else {
                unreachable!("scheme checked above")
            };
            compile_secret(s).map_err(|e| ClientError::Usage(e.to_string()))?
        }
    };
    let tokens = derive_tokens(opts.mode, &shared).map_err(aerr)?;
    let record = TokenRecord::new(id, opts.scheme, &tokens);
    let bundle = OwnershipBundle {
        version: 1,
        id,
        tk_h: B64.encode(tokens.holder.as_bytes()),
        scheme: opts.scheme,
        asset_path: asset_file_name(opts.scheme).into(),
        mode: opts.mode,
        prover: None,
        policy: opts.policy.clone(),
        trust: opts.trust.clone(),
    };
    Ok(Prepared {
        id,
        watermarked,
        record,
        bundle,
        envelope,
    })
}

/// Sends REGISTER and waits for the acknowledgement.
pub fn register(prover: &str, owner_psk: &[u8; 32], record: &TokenRecord) -> Result<(), ClientError> {
    let mut msg = Message::Register {
        id: record.id,
        scheme: record.scheme.code(),
        share: record.share.clone(),
        c_sec: record.c_sec.clone().unwrap_or_default(),
        mac: [0; 32],
    };
    let signed = msg.register_signed_part().expect("register message");
    if let Message::Register { mac, .. } = &mut msg {
        *mac = hmac_sha256(owner_psk, &signed);
    }
    let mut conn = Conn::connect(prover)?;
    match conn.call(&msg)? {
        Message::Ack => Ok(()),
        Message::Err(code) => Err(ClientError::Rejected(code)),
        other => Err(unexpected("ACK", &other)),
    }
}

/// Writes the bundle directory atomically. Fails if `out_dir` exists.
pub fn write_outputs(p: &Prepared, out_dir: &Path) -> Result<(), ClientError> {
    if out_dir.exists() {
        return Err(ClientError::Usage(format!("{} already exists", out_dir.display())));
    }
    let parent = match out_dir.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let name = out_dir
        .file_name()
        .ok_or_else(|| ClientError::Usage(format!("bad output directory {}", out_dir.display())))?;
    let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> Result<(), ClientError> {
        std::fs::create_dir_all(tmp.join("owner"))?;
        std::fs::write(tmp.join(&p.bundle.asset_path), &p.watermarked)?;
        let bundle = serde_json::to_vec_pretty(&p.bundle).expect("bundle serialization");
        std::fs::write(tmp.join(BUNDLE_FILE), bundle)?;
        let ks = Keystore {
            version: 1,
            id: p.id,
            scheme: p.bundle.scheme,
            mode: p.bundle.mode,
            envelope: B64.encode(&*p.envelope),
        };
        let ks = Zeroizing::new(serde_json::to_vec_pretty(&ks).expect("keystore serialization"));
        let ks_path = tmp.join(KEYSTORE_FILE);
        std::fs::write(&ks_path, &*ks)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&ks_path, std::fs::Permissions::from_mode(0o600))?;
        }
        std::fs::rename(&tmp, out_dir)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&tmp);
    }
    result
}

pub fn read_owner_psk(path: &Path) -> Result<Zeroizing<[u8; 32]>, ClientError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ClientError::Usage(format!("{}: {e}", path.display())))?;
    unarmor_32(OWNER_PSK_LABEL, &text).map_err(|e| ClientError::Usage(format!("{}: {e}", path.display())))
}

/// Builds the trust anchor from an armored manufacturer key and a hex measurement.
pub fn trust_anchor(manufacturer_pub: &Path, measurement_hex: &str) -> Result<TrustAnchor, ClientError> {
    let text = std::fs::read_to_string(manufacturer_pub)
        .map_err(|e| ClientError::Usage(format!("{}: {e}", manufacturer_pub.display())))?;
    let pvk = unarmor_32(MANUFACTURER_PUBLIC_LABEL, &text)
        .map_err(|e| ClientError::Usage(format!("{}: {e}", manufacturer_pub.display())))?;
    let m = hex::decode(measurement_hex.trim()).map_err(|_| ClientError::Usage("measurement is not hex".into()))?;
    if m.len() != 32 {
        return Err(ClientError::Usage("measurement must be 32 bytes".into()));
    }
    Ok(TrustAnchor {
        manufacturer_pvk: B64.encode(*pvk),
        measurement: hex::encode(m),
    })
}

/// The whole owner flow: prepare, register, write.
pub fn generate<R: RngCore>(
    asset_bytes: &[u8],
    opts: &PrepareOptions,
    prover: &str,
    owner_psk: &[u8; 32],
    out_dir: &Path,
    rng: &mut R,
) -> Result<Prepared, ClientError> {
    if out_dir.exists() {
        return Err(ClientError::Usage(format!("{} already exists", out_dir.display())));
    }
    let mut p = prepare(asset_bytes, opts, rng)?;
    p.bundle.prover = Some(prover.to_string());
    register(prover, owner_psk, &p.record)?;
    write_outputs(&p, out_dir)?;
    Ok(p)
}
