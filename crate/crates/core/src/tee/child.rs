//! Running the enclave in a separate process.
//!
//! The host talks to the child over its stdin and stdout:
//!
//! * request: `[u32 len][u64 session][u8 entry_len][entry][params]`
//! * response: `[u32 len][u8 status][body]`, where status 0 carries the entry
//!   output and status 1 carries a one-byte abort code.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use super::enclave::{Enclave, EnclaveLink};
use super::keys::{unarmor_32, MANUFACTURER_SECRET_LABEL};
use super::program::EnclaveProgram;
use crate::crypto::SigningKeypair;
use crate::wire::{AbortCode, MAX_FRAME_LEN};

fn read_msg<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN + 64 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "oversized enclave message"));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

fn write_msg<W: Write>(w: &mut W, parts: &[&[u8]]) -> io::Result<()> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    w.write_all(&(len as u32).to_be_bytes())?;
    for p in parts {
        w.write_all(p)?;
    }
    w.flush()
}

/// Serves requests until the input closes.
pub fn serve<R: Read, W: Write>(enclave: &mut Enclave, input: R, output: W) -> io::Result<()> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    while let Some(msg) = read_msg(&mut input)? {
        let reply = if msg.len() < 9 || msg.len() < 9 + msg[8] as usize {
            Err(AbortCode::BadFrame)
        } else {
            let session = u64::from_be_bytes(msg[..8].try_into().unwrap());
            let entry_len = msg[8] as usize;
            match std::str::from_utf8(&msg[9..9 + entry_len]) {
                Ok(entry) => enclave.resume(session, entry, &msg[9 + entry_len..]),
                Err(_) => Err(AbortCode::BadFrame),
            }
        };
        match reply {
            Ok(body) => write_msg(&mut output, &[&[0], &body])?,
            Err(code) => write_msg(&mut output, &[&[1], &[code as u8]])?,
        }
    }
    Ok(())
}

/// Options understood by the enclave child process.
#[derive(Clone, Debug)]
pub struct ChildOptions {
    pub manufacturer_key: PathBuf,
    pub program: EnclaveProgram,
}

impl ChildOptions {
    pub fn to_args(&self) -> Vec<String> {
        vec![
            "--manufacturer-key".into(),
            self.manufacturer_key.display().to_string(),
            "--program".into(),
            self.program.to_json(),
        ]
    }

    pub fn from_args<I: IntoIterator<Item = String>>(args: I) -> Result<Self, String> {
        let mut key = None;
        let mut program = None;
        let mut it = args.into_iter();
        while let Some(flag) = it.next() {
            let value = it.next().ok_or_else(|| format!("{flag} needs a value"))?;
            match flag.as_str() {
                "--manufacturer-key" => key = Some(PathBuf::from(value)),
                "--program" => {
                    program = Some(EnclaveProgram::from_json(&value).map_err(|e| format!("--program: {e}"))?)
                }
                other => return Err(format!("unknown flag {other}")),
            }
        }
        Ok(Self {
            manufacturer_key: key.ok_or("--manufacturer-key is required")?,
            program: program.ok_or("--program is required")?,
        })
    }

    pub fn load_enclave(&self) -> Result<Enclave, String> {
        let text = std::fs::read_to_string(&self.manufacturer_key)
            .map_err(|e| format!("{}: {e}", self.manufacturer_key.display()))?;
        let secret = unarmor_32(MANUFACTURER_SECRET_LABEL, &text).map_err(|e| e.to_string())?;
        let keypair = SigningKeypair::from_secret_bytes(&*secret).map_err(|e| e.to_string())?;
        Ok(Enclave::new(self.program.clone(), keypair))
    }
}

/// Entry point for an enclave child binary: serve stdin/stdout until EOF.
pub fn child_main<I: IntoIterator<Item = String>>(args: I) -> Result<(), String> {
    let opts = ChildOptions::from_args(args)?;
    let mut enclave = opts.load_enclave()?;
    serve(&mut enclave, io::stdin().lock(), io::stdout().lock()).map_err(|e| e.to_string())
}

/// Host-side handle to an enclave child process.
pub struct ChildLink {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ChildLink {
    /// Spawns `program` with the child options appended to `prefix_args`.
    pub fn spawn(
        program: &std::path::Path,
        prefix_args: &[String],
        envs: &[(String, String)],
        opts: &ChildOptions,
    ) -> io::Result<Self> {
        let mut cmd = Command::new(program);
        cmd.args(prefix_args)
            .args(opts.to_args())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    fn call(&mut self, session: u64, entry: &str, params: &[u8]) -> io::Result<Result<Vec<u8>, AbortCode>> {
        write_msg(
            &mut self.stdin,
            &[&session.to_be_bytes(), &[entry.len() as u8], entry.as_bytes(), params],
        )?;
        let reply = read_msg(&mut self.stdout)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "enclave exited"))?;
        match reply.split_first() {
            Some((0, body)) => Ok(Ok(body.to_vec())),
            Some((1, [code])) => Ok(Err(AbortCode::from_u8(*code).unwrap_or(AbortCode::Internal))),
            _ => Err(io::Error::new(io::ErrorKind::InvalidData, "malformed enclave reply")),
        }
    }
}

impl EnclaveLink for ChildLink {
    fn resume(&mut self, session: u64, entry: &str, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        self.call(session, entry, params).unwrap_or(Err(AbortCode::Internal))
    }
}

impl Drop for ChildLink {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
