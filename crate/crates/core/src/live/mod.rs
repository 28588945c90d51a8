//! Socket-backed runtime: a minimal directory server, honeypots serving
//! real TCP peers, and the control agents a manager drives remotely.
//!
//! This path exists for integration testing; measurements run through the
//! simulator.

pub mod agent;
pub mod server;

use std::io::{self, Read, Write};
use std::net::{SocketAddr, SocketAddrV4, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use crate::protocol::{encode_message, frame_length, Message};

pub use self::agent::{AgentLauncher, ControlAgent, LiveHoneypot};
pub use self::server::{MiniServer, TcpServerLink};

/// How often blocking loops wake up to check their stop flag.
pub(crate) const TICK: Duration = Duration::from_millis(50);

/// Incremental frame reader over a stream with a read timeout.
#[derive(Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    /// Returns the next complete frame, `None` on orderly close or when
    /// `stop` is raised. Read timeouts are retried while a stop flag is
    /// given and returned as errors otherwise. Malformed framing is an
    /// `InvalidData` error.
    pub fn next<R: Read>(
        &mut self,
        stream: &mut R,
        stop: Option<&AtomicBool>,
    ) -> io::Result<Option<Vec<u8>>> {
        let mut chunk = [0u8; 8192];
        loop {
            match frame_length(&self.buf) {
                Ok(Some(n)) => {
                    let rest = self.buf.split_off(n);
                    return Ok(Some(std::mem::replace(&mut self.buf, rest)));
                }
                Ok(None) => {}
                Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            }
            if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                return Ok(None);
            }
            match stream.read(&mut chunk) {
                Ok(0) => return Ok(None),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e)
                    if stop.is_some()
                        && matches!(
                            e.kind(),
                            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                        ) => {}
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    let frame = encode_message(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    w.write_all(&frame)?;
    w.flush()
}

pub(crate) fn v4(addr: SocketAddr) -> io::Result<SocketAddrV4> {
    match addr {
        SocketAddr::V4(a) => Ok(a),
        SocketAddr::V6(_) => Err(io::Error::new(
            io::ErrorKind::Unsupported,
            "IPv6 is not supported",
        )),
    }
}

pub(crate) fn connect(addr: SocketAddrV4, timeout: Duration) -> io::Result<TcpStream> {
    let s = TcpStream::connect_timeout(&SocketAddr::V4(addr), timeout)?;
    s.set_nodelay(true)?;
    Ok(s)
}
