//! Armored base64 key files.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use zeroize::Zeroizing;

pub const MANUFACTURER_SECRET_LABEL: &str = "PUPPY MANUFACTURER KEY";
pub const MANUFACTURER_PUBLIC_LABEL: &str = "PUPPY MANUFACTURER PUBLIC KEY";
pub const OWNER_PSK_LABEL: &str = "PUPPY OWNER KEY";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ArmorError {
    #[error("missing or mismatched armor lines for {0}")]
    Armor(String),
    #[error("invalid base64 body")]
    Base64,
    #[error("expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
}

pub fn armor(label: &str, bytes: &[u8]) -> String {
    format!("-----BEGIN {label}-----\n{}\n-----END {label}-----\n", B64.encode(bytes))
}

pub fn unarmor(label: &str, text: &str) -> Result<Zeroizing<Vec<u8>>, ArmorError> {
    let begin = format!("-----BEGIN {label}-----");
    let end = format!("-----END {label}-----");
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(begin.as_str()) {
        return Err(ArmorError::Armor(label.to_string()));
    }
    let mut body = String::new();
    let mut closed = false;
    for line in lines {
        if line == end {
            closed = true;
            break;
        }
        body.push_str(line);
    }
    if !closed {
        return Err(ArmorError::Armor(label.to_string()));
    }
    B64.decode(body.as_bytes())
        .map(Zeroizing::new)
        .map_err(|_| ArmorError::Base64)
}

pub fn unarmor_32(label: &str, text: &str) -> Result<Zeroizing<[u8; 32]>, ArmorError> {
    let bytes = unarmor(label, text)?;
    let arr: [u8; 32] = bytes.as_slice().try_into().map_err(|_| ArmorError::Length {
        expected: 32,
        found: bytes.len(),
    })?;
    Ok(Zeroizing::new(arr))
}
