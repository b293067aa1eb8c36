//! Optional capture of every frame crossing the host, for transport audits.
//!
//! Each record is `[u8 direction][frame]`, direction 0 for inbound and 1 for
//! outbound; frames carry their own length prefix.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

pub const INBOUND: u8 = 0;
pub const OUTBOUND: u8 = 1;

pub struct Tap {
    file: Mutex<File>,
}

impl Tap {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn record(&self, direction: u8, frame: &[u8]) {
        let mut f = self.file.lock().unwrap();
        let r = f.write_all(&[direction]).and_then(|_| f.write_all(frame)).and_then(|_| f.flush());
        if let Err(e) = r {
            tracing::warn!(error = %e, "tap write failed");
        }
    }
}

/// Splits a tap file back into `(direction, frame)` records.
pub fn parse(bytes: &[u8]) -> Option<Vec<(u8, &[u8])>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let dir = bytes[pos];
        let len_bytes = bytes.get(pos + 1..pos + 5)?;
        let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
        let frame = bytes.get(pos + 1..pos + 5 + len)?;
        out.push((dir, frame));
        pos += 5 + len;
    }
    Some(out)
}
