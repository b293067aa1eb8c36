//! Scheme-agnostic assets and secrets, the secret envelope, token derivation
//! and the on-disk formats exchanged between owner, holder and prover.

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::crypto::{self, AssetId, AuthCiphertext, CryptoError, KeyShare, ShareRole};
use crate::freqywm::{self, FreqyError, FreqySecret, TokenDataset};
use crate::obt::{self, NumericTable, ObtError, ObtSecret};

#[derive(Debug, thiserror::Error)]
pub enum AssetError {
    #[error(transparent)]
    Freqy(#[from] FreqyError),
    #[error(transparent)]
    Obt(#[from] ObtError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("secret is for {secret} but asset is {asset}")]
    SchemeMismatch { secret: Scheme, asset: Scheme },
    #[error("malformed envelope: {0}")]
    Envelope(String),
    #[error("malformed record: {0}")]
    Record(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[serde(rename = "freqywm")]
    FreqyWm,
    Obt,
}

impl Scheme {
    pub fn code(self) -> u8 {
        match self {
            Scheme::FreqyWm => 1,
            Scheme::Obt => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Scheme::FreqyWm),
            2 => Some(Scheme::Obt),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FreqyWm => "freqywm",
            Scheme::Obt => "obt",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "freqywm" => Ok(Scheme::FreqyWm),
            "obt" => Ok(Scheme::Obt),
            other => Err(format!("unknown scheme {other:?} (expected freqywm or obt)")),
        }
    }
}

/// How verification is carried out, which also fixes what the tokens share.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Tokens share an encryption key; the prover also stores the encrypted secret.
    #[serde(rename = "tee")]
    Tee,
    /// Tokens share the secret envelope itself.
    #[serde(rename = "tee-direct")]
    TeeDirect,
    /// Tokens share a compiled FreqyWM secret evaluated under garbled circuits.
    #[serde(rename = "2pc")]
    TwoPc,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tee => "tee",
            Mode::TeeDirect => "tee-direct",
            Mode::TwoPc => "2pc",
        }
    }

    pub fn uses_enclave(self) -> bool {
        !matches!(self, Mode::TwoPc)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tee" => Ok(Mode::Tee),
            "tee-direct" => Ok(Mode::TeeDirect),
            "2pc" => Ok(Mode::TwoPc),
            other => Err(format!("unknown mode {other:?} (expected tee, tee-direct or 2pc)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Asset {
    Tokens(TokenDataset),
    Table(NumericTable),
}

impl Asset {
    pub fn parse(scheme: Scheme, bytes: &[u8]) -> Result<Self, AssetError> {
        Ok(match scheme {
            Scheme::FreqyWm => Asset::Tokens(TokenDataset::parse(bytes)?),
            Scheme::Obt => Asset::Table(NumericTable::parse_csv(bytes)?),
        })
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            Asset::Tokens(_) => Scheme::FreqyWm,
            Asset::Table(_) => Scheme::Obt,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Asset::Tokens(d) => d.to_bytes(),
            Asset::Table(t) => t.to_csv(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WatermarkSecret {
    FreqyWm(FreqySecret),
    Obt(ObtSecret),
}

impl WatermarkSecret {
    pub fn scheme(&self) -> Scheme {
        match self {
            WatermarkSecret::FreqyWm(_) => Scheme::FreqyWm,
            WatermarkSecret::Obt(_) => Scheme::Obt,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        match self {
            WatermarkSecret::FreqyWm(s) => s.to_json(),
            WatermarkSecret::Obt(s) => s.to_json(),
        }
    }

    pub fn from_json(scheme: Scheme, bytes: &[u8]) -> Result<Self, AssetError> {
        Ok(match scheme {
            Scheme::FreqyWm => WatermarkSecret::FreqyWm(FreqySecret::from_json(bytes)?),
            Scheme::Obt => WatermarkSecret::Obt(ObtSecret::from_json(bytes)?),
        })
    }
}

/// Detection thresholds applied by whoever runs detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierParams {
    pub freqy_tolerance: u64,
    pub freqy_min_fraction: f64,
    pub obt_vote_threshold: f64,
}

impl Default for VerifierParams {
    fn default() -> Self {
        Self {
            freqy_tolerance: freqywm::DEFAULT_TOLERANCE,
            freqy_min_fraction: freqywm::DEFAULT_MIN_FRACTION,
            obt_vote_threshold: obt::DEFAULT_VOTE_THRESHOLD,
        }
    }
}

pub fn detect(asset: &Asset, secret: &WatermarkSecret, params: &VerifierParams) -> Result<bool, AssetError> {
    match (asset, secret) {
        (Asset::Tokens(d), WatermarkSecret::FreqyWm(s)) => {
            let p = freqywm::DetectParams::for_pairs(s.pairs.len(), params.freqy_tolerance, params.freqy_min_fraction);
            Ok(freqywm::detect(d, s, p))
        }
        (Asset::Table(t), WatermarkSecret::Obt(s)) => Ok(obt::detect(t, s, params.obt_vote_threshold)),
        (a, s) => Err(AssetError::SchemeMismatch {
            secret: s.scheme(),
            asset: a.scheme(),
        }),
    }
}

/// Options for owner-side insertion.
#[derive(Clone, Copy, Debug)]
pub struct InsertOptions {
    pub freqy: freqywm::InsertParams,
    pub obt_partitions: usize,
    pub obt_delta: f64,
}

impl Default for InsertOptions {
    fn default() -> Self {
        Self {
            freqy: freqywm::InsertParams::default(),
            obt_partitions: obt::DEFAULT_NUM_PARTITIONS,
            obt_delta: obt::DEFAULT_DELTA,
        }
    }
}

pub fn watermark<R: RngCore>(
    asset: &Asset,
    options: &InsertOptions,
    rng: &mut R,
) -> Result<(Asset, WatermarkSecret), AssetError> {
    match asset {
        Asset::Tokens(d) => {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let (dw, sec) = freqywm::insert(d, key, options.freqy, rng)?;
            Ok((Asset::Tokens(dw), WatermarkSecret::FreqyWm(sec)))
        }
        Asset::Table(t) => {
            let sec = ObtSecret::generate(options.obt_partitions, options.obt_delta, rng);
            let tw = obt::insert(t, &sec)?;
            Ok((Asset::Table(tw), WatermarkSecret::Obt(sec)))
        }
    }
}

/// Digest of an asset's file bytes, used as the metadata field of `idgen`.
pub fn content_digest(asset_bytes: &[u8]) -> [u8; 32] {
    crypto::sha256(asset_bytes)
}

/// Ties an envelope to the inputs of a hash-derived id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdBinding {
    pub owner: String,
    pub date: String,
}

impl IdBinding {
    pub fn id_for(&self, asset_bytes: &[u8]) -> AssetId {
        crypto::idgen(self.owner.as_bytes(), &content_digest(asset_bytes), self.date.as_bytes())
    }
}

/// What the enclave recovers: the scheme secret plus optional id binding.
#[derive(Clone, Debug, PartialEq)]
pub struct SecretEnvelope {
    pub secret: WatermarkSecret,
    pub binding: Option<IdBinding>,
}

#[derive(Serialize, Deserialize)]
struct EnvelopeFile {
    version: u32,
    scheme: Scheme,
    secret: String,
    binding: Option<IdBinding>,
}

impl SecretEnvelope {
    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let inner = Zeroizing::new(self.secret.to_json());
        let file = EnvelopeFile {
            version: 1,
            scheme: self.secret.scheme(),
            secret: B64.encode(&*inner),
            binding: self.binding.clone(),
        };
        Zeroizing::new(serde_json::to_vec(&file).expect("envelope serialization"))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AssetError> {
        let file: EnvelopeFile =
            serde_json::from_slice(bytes).map_err(|e| AssetError::Envelope(e.to_string()))?;
        if file.version != 1 {
            return Err(AssetError::Envelope(format!("unsupported version {}", file.version)));
        }
        let inner = Zeroizing::new(
            B64.decode(&file.secret)
                .map_err(|e| AssetError::Envelope(e.to_string()))?,
        );
        Ok(Self {
            secret: WatermarkSecret::from_json(file.scheme, &inner)?,
            binding: file.binding,
        })
    }
}

/// Holder token `tk_H` and prover token `tk_P = (s_P, c_sec)`.
#[derive(Debug)]
pub struct TokenPair {
    pub holder: KeyShare,
    pub prover: KeyShare,
    pub c_sec: Option<AuthCiphertext>,
}

/// Splits `secret_bytes` into tokens as `mode` requires.
pub fn derive_tokens(mode: Mode, secret_bytes: &[u8]) -> Result<TokenPair, AssetError> {
    match mode {
        Mode::Tee => {
            let k = crypto::gen_key();
            let c_sec = crypto::encrypt(&k, secret_bytes);
            let (holder, prover) = crypto::share(k.as_bytes())?;
            Ok(TokenPair {
                holder,
                prover,
                c_sec: Some(c_sec),
            })
        }
        Mode::TeeDirect | Mode::TwoPc => {
            let (holder, prover) = crypto::share(secret_bytes)?;
            Ok(TokenPair {
                holder,
                prover,
                c_sec: None,
            })
        }
    }
}

/// Recovers the secret bytes from both tokens, inverting [`derive_tokens`].
pub fn recover_secret(
    holder_share: &[u8],
    prover_share: &[u8],
    c_sec: Option<&AuthCiphertext>,
) -> Result<Zeroizing<Vec<u8>>, CryptoError> {
    let joined = crypto::xor_bytes(holder_share, prover_share)?;
    match c_sec {
        Some(ct) => {
            let k = crypto::SymmetricKey::from_bytes(&joined)?;
            crypto::decrypt(&k, ct).map(Zeroizing::new)
        }
        None => Ok(joined),
    }
}

/// What the prover stores per registered asset.
#[derive(Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub id: AssetId,
    pub scheme: Scheme,
    pub share: Vec<u8>,
    pub c_sec: Option<Vec<u8>>,
}

impl fmt::Debug for TokenRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TokenRecord")
            .field("id", &self.id)
            .field("scheme", &self.scheme)
            .field("share_len", &self.share.len())
            .field("c_sec_len", &self.c_sec.as_ref().map(Vec::len))
            .finish()
    }
}

impl TokenRecord {
    pub fn new(id: AssetId, scheme: Scheme, tokens: &TokenPair) -> Self {
        debug_assert_eq!(tokens.prover.role(), ShareRole::Prover);
        Self {
            id,
            scheme,
            share: tokens.prover.as_bytes().to_vec(),
            c_sec: tokens.c_sec.as_ref().map(AuthCiphertext::to_bytes),
        }
    }

    /// `id || scheme u8 || share_len u32 || share || csec_len u32 || csec`,
    /// with a zero `csec_len` when there is no encrypted secret.
    pub fn encode(&self) -> Vec<u8> {
        let c_sec = self.c_sec.as_deref().unwrap_or(&[]);
        let mut out = Vec::with_capacity(41 + self.share.len() + c_sec.len());
        out.extend_from_slice(&self.id.0);
        out.push(self.scheme.code());
        out.extend_from_slice(&(self.share.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.share);
        out.extend_from_slice(&(c_sec.len() as u32).to_be_bytes());
        out.extend_from_slice(c_sec);
        out
    }

    /// Parses a record and returns the number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), AssetError> {
        let err = |m: &str| AssetError::Record(m.to_string());
        let mut cur = crate::wire::Cursor::new(bytes);
        let id = AssetId(cur.array().map_err(|_| err("truncated id"))?);
        let scheme = Scheme::from_code(cur.u8().map_err(|_| err("truncated scheme"))?)
            .ok_or_else(|| err("unknown scheme"))?;
        let share = cur.vec_u32().map_err(|_| err("truncated share"))?.to_vec();
        let c_sec = cur.vec_u32().map_err(|_| err("truncated c_sec"))?;
        let c_sec = (!c_sec.is_empty()).then(|| c_sec.to_vec());
        if share.is_empty() {
            return Err(err("empty share"));
        }
        Ok((
            Self {
                id,
                scheme,
                share,
                c_sec,
            },
            cur.position(),
        ))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, AssetError> {
        let (rec, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(AssetError::Record("trailing bytes".into()));
        }
        Ok(rec)
    }
}

/// JSON form of [`TokenRecord`]: `{id, share, c_sec}` (`c_sec` absent in direct-share modes).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecordJson {
    pub id: AssetId,
    pub scheme: Scheme,
    pub share: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_sec: Option<String>,
}

impl From<&TokenRecord> for TokenRecordJson {
    fn from(r: &TokenRecord) -> Self {
        Self {
            id: r.id,
            scheme: r.scheme,
            share: B64.encode(&r.share),
            c_sec: r.c_sec.as_ref().map(|c| B64.encode(c)),
        }
    }
}

impl TryFrom<&TokenRecordJson> for TokenRecord {
    type Error = AssetError;
    fn try_from(j: &TokenRecordJson) -> Result<Self, Self::Error> {
        let dec = |s: &str| B64.decode(s).map_err(|e| AssetError::Record(e.to_string()));
        Ok(Self {
            id: j.id,
            scheme: j.scheme,
            share: dec(&j.share)?,
            c_sec: j.c_sec.as_deref().map(dec).transpose()?,
        })
    }
}

/// Pinned enclave identity a holder checks during attestation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustAnchor {
    /// Base64 Ed25519 verification key of the simulated manufacturer.
    pub manufacturer_pvk: String,
    /// Hex SHA-256 measurement of the expected enclave program.
    pub measurement: String,
}

/// Holder-side bundle: everything needed to verify without contacting the owner.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipBundle {
    pub version: u32,
    pub id: AssetId,
    pub tk_h: String,
    pub scheme: Scheme,
    pub asset_path: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prover: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust: Option<TrustAnchor>,
}

fn default_mode() -> Mode {
    Mode::Tee
}

impl fmt::Debug for OwnershipBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OwnershipBundle")
            .field("id", &self.id)
            .field("scheme", &self.scheme)
            .field("mode", &self.mode)
            .field("asset_path", &self.asset_path)
            .finish_non_exhaustive()
    }
}

impl OwnershipBundle {
    pub fn holder_share(&self) -> Result<Zeroizing<Vec<u8>>, AssetError> {
        B64.decode(&self.tk_h)
            .map(Zeroizing::new)
            .map_err(|e| AssetError::Record(format!("tk_h: {e}")))
    }
}
