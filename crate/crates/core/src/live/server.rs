//! Minimal directory server and the honeypot's link to it.

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddrV4, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{connect, v4, write_message, FrameReader, TICK};
use crate::honeypot::{ConnectError, ServerConnector, ServerLogin};
use crate::protocol::{decode_message, FileMeta, Hello, Message, PeerId, UserId};

#[derive(Default)]
struct Registry {
    logins: usize,
    offers: BTreeMap<UserId, Vec<FileMeta>>,
}

/// Accepts logins (Hello, answered with an assigned client id) and records
/// each client's latest OFFER-FILES.
pub struct MiniServer {
    addr: SocketAddrV4,
    stop: Arc<AtomicBool>,
    registry: Arc<Mutex<Registry>>,
    accept: Option<JoinHandle<()>>,
}

impl MiniServer {
    /// `fixed_client_id` overrides the usual assignment (the client's
    /// address as an integer).
    pub fn start(
        bind: SocketAddrV4,
        name: &str,
        fixed_client_id: Option<u32>,
    ) -> io::Result<MiniServer> {
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = v4(listener.local_addr()?)?;
        let stop = Arc::new(AtomicBool::new(false));
        let registry = Arc::new(Mutex::new(Registry::default()));
        let name = name.to_string();
        let accept = {
            let stop = stop.clone();
            let registry = registry.clone();
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let (stop, registry, name) =
                                (stop.clone(), registry.clone(), name.clone());
                            let ip = v4(peer).map(|a| u32::from(*a.ip())).unwrap_or(0);
                            let client_id = fixed_client_id.unwrap_or(ip);
                            thread::spawn(move || {
                                if let Err(e) =
                                    serve_client(stream, client_id, &name, &stop, &registry)
                                {
                                    log::debug!("server client: {e}");
                                }
                            });
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(TICK),
                        Err(e) => {
                            log::warn!("server accept: {e}");
                            thread::sleep(TICK);
                        }
                    }
                }
            })
        };
        Ok(MiniServer {
            addr,
            stop,
            registry,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddrV4 {
        self.addr
    }

    pub fn logins(&self) -> usize {
        self.registry.lock().unwrap().logins
    }

    /// Latest offered list per client user id.
    pub fn offers(&self) -> BTreeMap<UserId, Vec<FileMeta>> {
        self.registry.lock().unwrap().offers.clone()
    }

    pub fn shutdown(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MiniServer {
    fn drop(&mut self) {
        self.halt();
    }
}

fn serve_client(
    mut stream: TcpStream,
    client_id: u32,
    name: &str,
    stop: &AtomicBool,
    registry: &Mutex<Registry>,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(TICK))?;
    let mut reader = FrameReader::default();
    let mut user = None;
    while let Some(frame) = reader.next(&mut stream, Some(stop))? {
        let msg =
            decode_message(&frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        match msg {
            Message::Hello(h) if user.is_none() => {
                user = Some(h.peer.user_id);
                registry.lock().unwrap().logins += 1;
                let answer = Hello {
                    peer: PeerId::new(UserId::default(), client_id),
                    port: 0,
                    client_name: name.to_string(),
                    client_version: 0,
                };
                write_message(&mut stream, &Message::HelloAnswer(answer))?;
            }
            Message::OfferFiles(files) => {
                if let Some(u) = user {
                    registry.lock().unwrap().offers.insert(u, files);
                }
            }
            other => log::debug!("server ignores {:?}", other.kind()),
        }
    }
    Ok(())
}

/// [`ServerConnector`] over TCP. Keeps the session stream open for later
/// OFFER-FILES messages.
pub struct TcpServerLink {
    timeout: Duration,
    stream: Option<TcpStream>,
}

impl TcpServerLink {
    pub fn new(timeout: Duration) -> TcpServerLink {
        TcpServerLink {
            timeout,
            stream: None,
        }
    }

    pub fn is_open(&self) -> bool {
        self.stream.is_some()
    }

    /// Sends to the server; a failed write closes the link.
    pub fn send(&mut self, msg: &Message) -> io::Result<()> {
        let Some(s) = self.stream.as_mut() else {
            return Err(io::Error::new(
                io::ErrorKind::NotConnected,
                "no server session",
            ));
        };
        let r = write_message(s, msg);
        if r.is_err() {
            self.stream = None;
        }
        r
    }

    pub fn close(&mut self) {
        self.stream = None;
    }
}

impl ServerConnector for TcpServerLink {
    fn login(&mut self, server: SocketAddrV4, hello: &Hello) -> Result<ServerLogin, ConnectError> {
        let mut stream = connect(server, self.timeout).map_err(|e| match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => ConnectError::Timeout(server),
            _ => ConnectError::Refused(server),
        })?;
        let proto = |e: io::Error| ConnectError::Protocol(server, e.to_string());
        write_message(&mut stream, &Message::Hello(hello.clone())).map_err(proto)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(proto)?;
        let frame = match FrameReader::default().next(&mut stream, None) {
            Ok(Some(f)) => f,
            Ok(None) => return Err(ConnectError::Protocol(server, "closed during login".into())),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                return Err(ConnectError::Timeout(server))
            }
            Err(e) => return Err(proto(e)),
        };
        match decode_message(&frame) {
            Ok(Message::HelloAnswer(a)) => {
                self.stream = Some(stream);
                Ok(ServerLogin {
                    client_id: a.peer.client_id(),
                    server_name: a.client_name,
                })
            }
            Ok(m) => Err(ConnectError::Protocol(
                server,
                format!("unexpected {}", m.kind().name()),
            )),
            Err(e) => Err(ConnectError::Protocol(server, e.to_string())),
        }
    }
}
