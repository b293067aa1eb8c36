//! Blocking framed-protocol connection to a prover.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use puppy_core::wire::{read_message, write_message, Message};

use crate::error::ClientError;

pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
/// Generous because garbling a large circuit happens between two reads.
pub const READ_TIMEOUT: Duration = Duration::from_secs(300);

pub struct Conn {
    stream: TcpStream,
}

impl Conn {
    pub fn connect(addr: &str) -> Result<Self, ClientError> {
        let mut last = None;
        for a in addr
            .to_socket_addrs()
            .map_err(|e| ClientError::Connect(format!("{addr}: {e}")))?
        {
            match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(READ_TIMEOUT))?;
                    stream.set_nodelay(true)?;
                    return Ok(Self { stream });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(ClientError::Connect(match last {
            Some(e) => format!("{addr}: {e}"),
            None => format!("{addr}: no addresses"),
        }))
    }

    pub fn send(&mut self, m: &Message) -> Result<(), ClientError> {
        write_message(&mut self.stream, m)?;
        Ok(())
    }

    /// Reads one message, turning `ABORT` into an error.
    pub fn recv(&mut self) -> Result<Message, ClientError> {
        match read_message(&mut self.stream)? {
            Message::Abort(code) => Err(ClientError::Aborted(code)),
            m => Ok(m),
        }
    }

    pub fn call(&mut self, m: &Message) -> Result<Message, ClientError> {
        self.send(m)?;
        self.recv()
    }
}

pub(crate) fn unexpected(expected: &str, got: &Message) -> ClientError {
    ClientError::Protocol(format!("expected {expected}, got {}", puppy_core::wire::type_name(got.msg_type())))
}
