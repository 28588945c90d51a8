//! Threaded honeypot, its control agent, and the launcher a manager uses to
//! drive agents over the control channel.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter};
use std::net::{Ipv4Addr, SocketAddrV4, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{connect, v4, write_message, FrameReader, TcpServerLink, TICK};
use crate::anonymize::IpHasher;
use crate::honeypot::log::{append_log, log_header, shares_header, LogSink, WriterSink};
use crate::honeypot::{Connection, Honeypot, HoneypotConfig, Outbox, StatusReport};
use crate::manager::control::{
    decode_control, encode_control, ControlMessage, ShippedLogs, StartOrder,
};
use crate::manager::{HoneypotLauncher, LaunchError};
use crate::protocol::{decode_message, FileMeta};
use crate::time::Timestamp;

const LOGIN_TIMEOUT: Duration = Duration::from_secs(2);
const CONTROL_TIMEOUT: Duration = Duration::from_secs(10);

/// Per-honeypot serialization point: protocol state, server link and log
/// output all live behind one lock, so records keep a total order.
struct Core {
    honeypot: Honeypot,
    link: TcpServerLink,
    ship_log: String,
    ship_shares: String,
    log_file: Option<WriterSink<BufWriter<File>>>,
    shares_file: Option<WriterSink<BufWriter<File>>>,
}

impl Core {
    fn deliver(&mut self, out: Outbox) {
        for m in &out.to_server {
            if let Err(e) = self.link.send(m) {
                log::warn!("{}: server send failed: {e}", self.honeypot.id());
            }
        }
        for r in &out.records {
            let line = r.to_line();
            self.ship_log.push_str(&line);
            self.ship_log.push('\n');
            if let Some(f) = self.log_file.as_mut() {
                if let Err(e) = append_log(r, f) {
                    log::warn!("log write failed: {e}");
                }
            }
        }
        for s in &out.shares {
            let line = s.to_line();
            self.ship_shares.push_str(&line);
            self.ship_shares.push('\n');
            if let Some(f) = self.shares_file.as_mut() {
                let _ = f.write_line(&line);
            }
        }
    }
}

/// A honeypot serving real TCP peers.
pub struct LiveHoneypot {
    core: Arc<Mutex<Core>>,
    listen: SocketAddrV4,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl LiveHoneypot {
    /// Binds the peer listener, logs into the server and offers the files.
    /// A failed login leaves the honeypot running but disconnected.
    pub fn start(order: &StartOrder, log_dir: Option<&Path>) -> io::Result<LiveHoneypot> {
        let bind = order
            .listen
            .unwrap_or(SocketAddrV4::new(Ipv4Addr::LOCALHOST, 0));
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let listen = v4(listener.local_addr()?)?;

        let mut config = HoneypotConfig::new(order.honeypot_id.clone(), order.strategy);
        config.greedy = order.greedy;
        config.listen_port = listen.port();
        config.content_seed = u64::from_le_bytes(order.salt.0[..8].try_into().unwrap());
        let now = Timestamp::now();
        let mut honeypot = Honeypot::new(config, IpHasher::new(order.salt), now);

        let (log_file, shares_file) = match log_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let open = |ext: &str, header: String| -> io::Result<_> {
                    let f = File::create(dir.join(format!("{}.{ext}", order.honeypot_id)))?;
                    WriterSink::with_header(BufWriter::new(f), &header)
                };
                (
                    Some(open("log", log_header(&order.honeypot_id))?),
                    Some(open("shares", shares_header(&order.honeypot_id))?),
                )
            }
            None => (None, None),
        };

        let mut link = TcpServerLink::new(LOGIN_TIMEOUT);
        let mut out = honeypot.offer_files(&order.files, now);
        let (status, login_out) = honeypot.connect_to_server(&mut link, order.server, now);
        out.extend(login_out);
        log::info!(
            "{} listening on {listen}, connected={}",
            order.honeypot_id,
            status.connected
        );
        let mut core = Core {
            honeypot,
            link,
            ship_log: String::new(),
            ship_shares: String::new(),
            log_file,
            shares_file,
        };
        core.deliver(out);

        let core = Arc::new(Mutex::new(core));
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let (core, stop) = (core.clone(), stop.clone());
            thread::spawn(move || accept_loop(listener, core, stop))
        };
        let keepalive = {
            let (core, stop) = (core.clone(), stop.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    thread::sleep(TICK);
                    let mut c = core.lock().unwrap();
                    let out = c.honeypot.keepalive(Timestamp::now());
                    c.deliver(out);
                }
            })
        };
        Ok(LiveHoneypot {
            core,
            listen,
            stop,
            threads: vec![accept, keepalive],
        })
    }

    /// Address peers connect to.
    pub fn listen_addr(&self) -> SocketAddrV4 {
        self.listen
    }

    pub fn status(&self) -> StatusReport {
        self.core.lock().unwrap().honeypot.status()
    }

    pub fn advertise(&self, files: &[FileMeta]) {
        let mut c = self.core.lock().unwrap();
        let out = c.honeypot.offer_files(files, Timestamp::now());
        c.deliver(out);
    }

    /// Drains the lines logged since the previous call.
    pub fn ship(&self) -> ShippedLogs {
        let mut c = self.core.lock().unwrap();
        ShippedLogs {
            log: std::mem::take(&mut c.ship_log),
            shares: std::mem::take(&mut c.ship_shares),
        }
    }

    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let mut c = self.core.lock().unwrap();
        c.link.close();
        c.honeypot.disconnect();
    }
}

impl Drop for LiveHoneypot {
    fn drop(&mut self) {
        self.halt();
    }
}

fn accept_loop(listener: TcpListener, core: Arc<Mutex<Core>>, stop: Arc<AtomicBool>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let Ok(peer) = v4(peer) else { continue };
                let (core, stop) = (core.clone(), stop.clone());
                workers.push(thread::spawn(move || {
                    if let Err(e) = serve_peer(stream, peer, &core, &stop) {
                        log::debug!("peer {peer}: {e}");
                    }
                }));
                workers.retain(|w| !w.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(TICK),
            Err(e) => {
                log::warn!("accept: {e}");
                thread::sleep(TICK);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn serve_peer(
    mut stream: TcpStream,
    peer: SocketAddrV4,
    core: &Mutex<Core>,
    stop: &AtomicBool,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(TICK))?;
    let mut conn = Connection::new(*peer.ip(), peer.port());
    let mut reader = FrameReader::default();
    let result = (|| {
        while let Some(frame) = reader.next(&mut stream, Some(stop))? {
            let msg = decode_message(&frame)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let replies = {
                let mut c = core.lock().unwrap();
                let mut out = c
                    .honeypot
                    .handle_peer_message(&mut conn, msg, Timestamp::now());
                let replies = std::mem::take(&mut out.to_peer);
                c.deliver(out);
                replies
            };
            for m in &replies {
                write_message(&mut stream, m)?;
            }
        }
        Ok(())
    })();
    core.lock().unwrap().honeypot.peer_disconnected(&conn);
    result
}

/// Control endpoint hosting at most one honeypot at a time. Serves manager
/// connections one after another until shut down.
pub struct ControlAgent {
    addr: SocketAddrV4,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ControlAgent {
    pub fn spawn(bind: SocketAddrV4, log_dir: Option<PathBuf>) -> io::Result<ControlAgent> {
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = v4(listener.local_addr()?)?;
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let stop = stop.clone();
            thread::spawn(move || serve_agent(listener, log_dir, &stop))
        };
        Ok(ControlAgent {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddrV4 {
        self.addr
    }

    /// Blocks until the agent stops (for a standalone process).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ControlAgent {
    fn drop(&mut self) {
        self.halt();
    }
}

fn serve_agent(listener: TcpListener, log_dir: Option<PathBuf>, stop: &AtomicBool) {
    let mut running: Option<LiveHoneypot> = None;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                if let Err(e) = serve_manager(stream, &mut running, log_dir.as_deref(), stop) {
                    log::warn!("control session: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(TICK),
            Err(e) => {
                log::warn!("control accept: {e}");
                thread::sleep(TICK);
            }
        }
    }
}

fn reply(stream: &mut TcpStream, msg: &ControlMessage) -> io::Result<()> {
    let frame = encode_control(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    io::Write::write_all(stream, &frame)
}

fn serve_manager(
    mut stream: TcpStream,
    running: &mut Option<LiveHoneypot>,
    log_dir: Option<&Path>,
    stop: &AtomicBool,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(TICK))?;
    let mut reader = FrameReader::default();
    while let Some(frame) = reader.next(&mut stream, Some(stop))? {
        let msg =
            decode_control(&frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let answer = match msg {
            ControlMessage::Start(order) => {
                if let Some(old) = running.take() {
                    old.stop();
                }
                let hp = LiveHoneypot::start(&order, log_dir)?;
                let status = hp.status();
                *running = Some(hp);
                ControlMessage::Status(Some(status))
            }
            ControlMessage::Status(_) => {
                ControlMessage::Status(running.as_ref().map(|h| h.status()))
            }
            ControlMessage::Advertise(files) => {
                if let Some(h) = running.as_ref() {
                    h.advertise(&files);
                }
                ControlMessage::Status(running.as_ref().map(|h| h.status()))
            }
            ControlMessage::ShipLogs(_) => ControlMessage::ShipLogs(Some(
                running.as_ref().map(|h| h.ship()).unwrap_or_default(),
            )),
            ControlMessage::Stop => {
                if let Some(h) = running.take() {
                    h.stop();
                }
                ControlMessage::Stop
            }
        };
        reply(&mut stream, &answer)?;
    }
    Ok(())
}

struct AgentHandle {
    stream: TcpStream,
    reader: FrameReader,
    _local: Option<ControlAgent>,
}

/// Drives honeypots through control agents: remote ones at known
/// addresses, or local ones it spawns on loopback.
pub struct AgentLauncher {
    remote: BTreeMap<String, SocketAddrV4>,
    log_dir: Option<PathBuf>,
    agents: BTreeMap<String, AgentHandle>,
}

impl AgentLauncher {
    pub fn new(remote: BTreeMap<String, SocketAddrV4>, log_dir: Option<PathBuf>) -> AgentLauncher {
        AgentLauncher {
            remote,
            log_dir,
            agents: BTreeMap::new(),
        }
    }

    fn handle(&mut self, id: &str) -> Result<&mut AgentHandle, LaunchError> {
        if !self.agents.contains_key(id) {
            let chan = |e: io::Error| LaunchError::Channel(e.to_string());
            let (addr, local) = match self.remote.get(id) {
                Some(a) => (*a, None),
                None => {
                    let agent = ControlAgent::spawn(
                        SocketAddrV4::new(Ipv4Addr::LOCALHOST, 0),
                        self.log_dir.clone(),
                    )
                    .map_err(chan)?;
                    (agent.addr(), Some(agent))
                }
            };
            let stream = connect(addr, CONTROL_TIMEOUT).map_err(chan)?;
            stream
                .set_read_timeout(Some(CONTROL_TIMEOUT))
                .map_err(chan)?;
            self.agents.insert(
                id.to_string(),
                AgentHandle {
                    stream,
                    reader: FrameReader::default(),
                    _local: local,
                },
            );
        }
        Ok(self.agents.get_mut(id).unwrap())
    }

    fn call(&mut self, id: &str, msg: &ControlMessage) -> Result<ControlMessage, LaunchError> {
        let result = (|| {
            let h = self.handle(id)?;
            let chan = |e: io::Error| LaunchError::Channel(e.to_string());
            let frame = encode_control(msg).map_err(|e| LaunchError::Channel(e.to_string()))?;
            io::Write::write_all(&mut h.stream, &frame).map_err(chan)?;
            let answer = h
                .reader
                .next(&mut h.stream, None)
                .map_err(chan)?
                .ok_or_else(|| LaunchError::Channel("agent closed the channel".into()))?;
            decode_control(&answer).map_err(|e| LaunchError::Channel(e.to_string()))
        })();
        if result.is_err() {
            // reconnect on next use
            self.agents.remove(id);
        }
        result
    }
}

impl HoneypotLauncher for AgentLauncher {
    fn start(&mut self, order: &StartOrder) -> Result<StatusReport, LaunchError> {
        match self.call(&order.honeypot_id, &ControlMessage::Start(order.clone()))? {
            ControlMessage::Status(Some(s)) => Ok(s),
            _ => Err(LaunchError::StartFailed {
                id: order.honeypot_id.clone(),
                reason: "agent gave no status".into(),
            }),
        }
    }

    fn poll(&mut self, id: &str) -> Result<StatusReport, LaunchError> {
        match self.call(id, &ControlMessage::Status(None))? {
            ControlMessage::Status(Some(s)) => Ok(s),
            _ => Err(LaunchError::NotRunning(id.into())),
        }
    }

    fn advertise(&mut self, id: &str, files: &[FileMeta]) -> Result<(), LaunchError> {
        self.call(id, &ControlMessage::Advertise(files.to_vec()))
            .map(|_| ())
    }

    fn ship_logs(&mut self, id: &str) -> Result<ShippedLogs, LaunchError> {
        match self.call(id, &ControlMessage::ShipLogs(None))? {
            ControlMessage::ShipLogs(Some(l)) => Ok(l),
            _ => Err(LaunchError::Channel("unexpected reply to ship-logs".into())),
        }
    }

    fn stop(&mut self, id: &str) -> Result<(), LaunchError> {
        if !self.agents.contains_key(id) && !self.remote.contains_key(id) {
            return Err(LaunchError::NotRunning(id.into()));
        }
        self.call(id, &ControlMessage::Stop).map(|_| ())
    }
}
