//! Fake provider peer: advertises files, walks the download handshake up to
//! the content stage, collects shared lists, and logs every query.

pub mod log;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::anonymize::{IpHasher, IpToken};
use crate::protocol::{ByteRange, FileId, FileMeta, Hello, IdStatus, Message, PeerId, UserId};
use crate::time::{Timestamp, DAY_MS, SECOND_MS};

pub use self::log::{LogRecord, LoggedKind, ShareOwner, ShareRecord};

pub const DEFAULT_KEEPALIVE_MS: u64 = 240 * SECOND_MS;
pub const DEFAULT_ACCRETION_WINDOW_MS: u64 = DAY_MS;
pub const DEFAULT_MAX_CHUNK: u32 = 180 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Never answers part requests.
    NoContent,
    /// Answers part requests with pseudorandom bytes.
    RandomContent,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::NoContent => "no-content",
            Strategy::RandomContent => "random-content",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "no-content" | "none" | "NoContent" => Ok(Strategy::NoContent),
            "random-content" | "random" | "RandomContent" => Ok(Strategy::RandomContent),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HoneypotConfig {
    pub id: String,
    pub strategy: Strategy,
    pub greedy: bool,
    pub accretion_window_ms: u64,
    pub keepalive_ms: u64,
    pub max_chunk: u32,
    /// Seeds the random-content generator.
    pub content_seed: u64,
    pub user_id: UserId,
    pub listen_port: u16,
    pub client_name: String,
    pub client_version: u32,
}

impl HoneypotConfig {
    pub fn new(id: impl Into<String>, strategy: Strategy) -> HoneypotConfig {
        let id = id.into();
        let user_id = {
            let digest = <sha2::Sha256 as sha2::Digest>::digest(id.as_bytes());
            let mut u = [0u8; 16];
            u.copy_from_slice(&digest[..16]);
            UserId(u)
        };
        HoneypotConfig {
            id,
            strategy,
            greedy: false,
            accretion_window_ms: DEFAULT_ACCRETION_WINDOW_MS,
            keepalive_ms: DEFAULT_KEEPALIVE_MS,
            max_chunk: DEFAULT_MAX_CHUNK,
            content_seed: 0,
            user_id,
            listen_port: 4662,
            client_name: "aMule".into(),
            client_version: 0x3C,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerInfo {
    pub addr: SocketAddrV4,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Session {
    Disconnected,
    Connected { client_id: u32, id_status: IdStatus },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerPhase {
    None,
    Greeted,
    UploadAccepted(FileId),
}

/// One peer connection as seen by the honeypot.
#[derive(Debug, Clone)]
pub struct Connection {
    pub ip: Ipv4Addr,
    pub port: u16,
    pub hello: Option<Hello>,
}

impl Connection {
    pub fn new(ip: Ipv4Addr, port: u16) -> Connection {
        Connection {
            ip,
            port,
            hello: None,
        }
    }

    pub fn user_id(&self) -> Option<UserId> {
        self.hello.as_ref().map(|h| h.peer.user_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusReport {
    pub honeypot_id: String,
    pub connected: bool,
    pub client_id: Option<u32>,
    pub id_status: Option<IdStatus>,
    pub shared_files: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerLogin {
    pub client_id: u32,
    pub server_name: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConnectError {
    #[error("server {0} refused the connection")]
    Refused(SocketAddrV4),
    #[error("timed out connecting to {0}")]
    Timeout(SocketAddrV4),
    #[error("login to {0} failed: {1}")]
    Protocol(SocketAddrV4, String),
}

/// Logs a honeypot into a directory server.
pub trait ServerConnector {
    fn login(&mut self, server: SocketAddrV4, hello: &Hello) -> Result<ServerLogin, ConnectError>;
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Diagnostics {
    pub unknown_file_uploads: u64,
    pub out_of_order: u64,
    pub ignored: u64,
    pub rejected_ranges: u64,
    pub unsolicited_lists: u64,
    pub keepalives: u64,
    pub connect_failures: u64,
    pub queued_offers: u64,
}

/// Everything a call produced: messages for the server and for the current
/// peer, plus records to persist.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outbox {
    pub to_server: Vec<Message>,
    pub to_peer: Vec<Message>,
    pub records: Vec<LogRecord<IpToken>>,
    pub shares: Vec<ShareRecord<IpToken>>,
}

impl Outbox {
    pub fn is_empty(&self) -> bool {
        self.to_server.is_empty()
            && self.to_peer.is_empty()
            && self.records.is_empty()
            && self.shares.is_empty()
    }

    pub fn extend(&mut self, other: Outbox) {
        self.to_server.extend(other.to_server);
        self.to_peer.extend(other.to_peer);
        self.records.extend(other.records);
        self.shares.extend(other.shares);
    }
}

/// Answers a part request according to `strategy`.
///
/// No-content yields nothing. Random-content yields one `SendPart` per range,
/// or several when a range is longer than `max_chunk`, filled from a ChaCha
/// stream seeded with `seed`.
pub fn answer_part_request(
    strategy: Strategy,
    file_id: FileId,
    ranges: &[ByteRange],
    max_chunk: u32,
    seed: u64,
) -> Vec<Message> {
    if strategy == Strategy::NoContent {
        return Vec::new();
    }
    let max_chunk = max_chunk.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    for r in ranges {
        let mut offset = r.offset;
        let mut left = r.length;
        while left > 0 {
            let n = left.min(max_chunk);
            let mut data = vec![0u8; n as usize];
            rng.fill_bytes(&mut data);
            parts.push(Message::SendPart {
                file_id,
                offset,
                data,
            });
            offset += u64::from(n);
            left -= n;
        }
    }
    parts
}

fn mix_seed(seed: u64, counter: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Honeypot {
    config: HoneypotConfig,
    hasher: IpHasher,
    started_at: Timestamp,
    server: Option<ServerInfo>,
    session: Session,
    shared: Vec<FileMeta>,
    shared_ids: HashSet<FileId>,
    offer_pending: bool,
    last_offer: Option<Timestamp>,
    per_peer: HashMap<UserId, PeerPhase>,
    asked: HashSet<UserId>,
    part_requests: u64,
    records_logged: u64,
    diagnostics: Diagnostics,
}

impl Honeypot {
    pub fn new(config: HoneypotConfig, hasher: IpHasher, started_at: Timestamp) -> Honeypot {
        Honeypot {
            config,
            hasher,
            started_at,
            server: None,
            session: Session::Disconnected,
            shared: Vec::new(),
            shared_ids: HashSet::new(),
            offer_pending: false,
            last_offer: None,
            per_peer: HashMap::new(),
            asked: HashSet::new(),
            part_requests: 0,
            records_logged: 0,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn config(&self) -> &HoneypotConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.config.strategy
    }

    pub fn session(&self) -> Session {
        self.session
    }

    pub fn server(&self) -> Option<&ServerInfo> {
        self.server.as_ref()
    }

    pub fn shared_files(&self) -> &[FileMeta] {
        &self.shared
    }

    pub fn is_sharing(&self, file_id: &FileId) -> bool {
        self.shared_ids.contains(file_id)
    }

    pub fn phase(&self, user_id: &UserId) -> PeerPhase {
        self.per_peer
            .get(user_id)
            .copied()
            .unwrap_or(PeerPhase::None)
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn accretion_deadline(&self) -> Timestamp {
        self.started_at.plus_ms(self.config.accretion_window_ms)
    }

    pub fn status(&self) -> StatusReport {
        let (connected, client_id, id_status) = match self.session {
            Session::Connected {
                client_id,
                id_status,
            } => (true, Some(client_id), Some(id_status)),
            Session::Disconnected => (false, None, None),
        };
        StatusReport {
            honeypot_id: self.config.id.clone(),
            connected,
            client_id,
            id_status,
            shared_files: self.shared.len(),
        }
    }

    fn own_hello(&self) -> Hello {
        let client_id = match self.session {
            Session::Connected { client_id, .. } => client_id,
            Session::Disconnected => 0,
        };
        Hello {
            peer: PeerId::new(self.config.user_id, client_id),
            port: self.config.listen_port,
            client_name: self.config.client_name.clone(),
            client_version: self.config.client_version,
        }
    }

    fn offer_message(&mut self, now: Timestamp) -> Message {
        self.last_offer = Some(now);
        self.offer_pending = false;
        Message::OfferFiles(self.shared.clone())
    }

    /// Logs into `server`. On success the shared list (if any) is offered
    /// immediately.
    pub fn connect_to_server(
        &mut self,
        connector: &mut dyn ServerConnector,
        server: SocketAddrV4,
        now: Timestamp,
    ) -> (StatusReport, Outbox) {
        let mut out = Outbox::default();
        if matches!(self.session, Session::Connected { .. }) {
            return (self.status(), out);
        }
        match connector.login(server, &self.own_hello()) {
            Ok(login) => {
                self.session = Session::Connected {
                    client_id: login.client_id,
                    id_status: IdStatus::from_client_id(login.client_id),
                };
                self.server = Some(ServerInfo {
                    addr: server,
                    name: login.server_name,
                });
                self.asked.clear();
                if !self.shared.is_empty() || self.offer_pending {
                    let offer = self.offer_message(now);
                    out.to_server.push(offer);
                }
            }
            Err(e) => {
                ::log::warn!("{}: {e}", self.config.id);
                self.diagnostics.connect_failures += 1;
                self.session = Session::Disconnected;
            }
        }
        (self.status(), out)
    }

    pub fn disconnect(&mut self) {
        self.session = Session::Disconnected;
        self.per_peer.clear();
    }

    fn add_files(&mut self, files: &[FileMeta], now: Timestamp, out: &mut Outbox) -> bool {
        let mut changed = false;
        for f in files {
            if f.size == 0 || !self.shared_ids.insert(f.file_id) {
                continue;
            }
            self.shared.push(f.clone());
            out.shares.push(ShareRecord {
                timestamp: now,
                honeypot_id: self.config.id.clone(),
                owner: ShareOwner::Honeypot,
                file: f.clone(),
            });
            changed = true;
        }
        changed
    }

    /// Adds `files` to the shared list and re-offers it when it changed.
    /// While disconnected the offer is queued until the next login.
    pub fn offer_files(&mut self, files: &[FileMeta], now: Timestamp) -> Outbox {
        let mut out = Outbox::default();
        if !self.add_files(files, now, &mut out) {
            return out;
        }
        match self.session {
            Session::Connected { .. } => {
                let offer = self.offer_message(now);
                out.to_server.push(offer);
            }
            Session::Disconnected => {
                self.offer_pending = true;
                self.diagnostics.queued_offers += 1;
            }
        }
        out
    }

    /// Periodic OFFER-FILES keep-alive.
    pub fn keepalive(&mut self, now: Timestamp) -> Outbox {
        let mut out = Outbox::default();
        if !matches!(self.session, Session::Connected { .. }) {
            return out;
        }
        let due = self
            .last_offer
            .is_none_or(|t| now.since(t) >= self.config.keepalive_ms);
        if due {
            self.diagnostics.keepalives += 1;
            let offer = self.offer_message(now);
            out.to_server.push(offer);
        }
        out
    }

    /// Grows the shared list from a peer's list while the accretion window
    /// is open. After the deadline the list is frozen.
    pub fn greedy_accrete(&mut self, peer_list: &[FileMeta], now: Timestamp) -> Outbox {
        let mut out = Outbox::default();
        if !self.config.greedy || now >= self.accretion_deadline() {
            return out;
        }
        if self.add_files(peer_list, now, &mut out) {
            match self.session {
                Session::Connected { .. } => {
                    let offer = self.offer_message(now);
                    out.to_server.push(offer);
                }
                Session::Disconnected => self.offer_pending = true,
            }
        }
        out
    }

    fn record(
        &mut self,
        kind: LoggedKind,
        conn: &Connection,
        file_id: Option<FileId>,
        ranges: Option<Vec<ByteRange>>,
        now: Timestamp,
    ) -> LogRecord<IpToken> {
        self.records_logged += 1;
        let hello = conn.hello.as_ref();
        let (server_name, server_ip, server_port) = match &self.server {
            Some(s) => (s.name.clone(), s.addr.ip().to_string(), s.addr.port()),
            None => (String::new(), String::new(), 0),
        };
        LogRecord {
            timestamp: now,
            honeypot_id: self.config.id.clone(),
            kind,
            peer: self.hasher.hash_ip(conn.ip),
            peer_port: hello.map_or(conn.port, |h| h.port),
            peer_name: hello.map(|h| h.client_name.clone()),
            peer_user_id: hello.map(|h| h.peer.user_id),
            client_version: hello.map(|h| h.client_version),
            id_status: hello.map(|h| h.peer.id_status()),
            server_name,
            server_ip,
            server_port,
            file_id,
            ranges,
        }
    }

    /// Reacts to one message from a peer connection.
    pub fn handle_peer_message(
        &mut self,
        conn: &mut Connection,
        msg: Message,
        now: Timestamp,
    ) -> Outbox {
        let mut out = Outbox::default();
        let phase = conn.user_id().map_or(PeerPhase::None, |u| self.phase(&u));
        match msg {
            Message::Hello(hello) => {
                if conn.hello.is_some() {
                    self.diagnostics.out_of_order += 1;
                    let rec = self.record(LoggedKind::Hello, conn, None, None, now);
                    out.records.push(rec);
                    return out;
                }
                let user = hello.peer.user_id;
                conn.hello = Some(hello);
                let rec = self.record(LoggedKind::Hello, conn, None, None, now);
                out.records.push(rec);
                self.per_peer.insert(user, PeerPhase::Greeted);
                out.to_peer.push(Message::HelloAnswer(self.own_hello()));
                if self.asked.insert(user) {
                    out.to_peer.push(Message::AskSharedList);
                }
            }
            Message::StartUpload(file_id) => {
                let rec = self.record(LoggedKind::StartUpload, conn, Some(file_id), None, now);
                out.records.push(rec);
                if phase != PeerPhase::Greeted {
                    self.diagnostics.out_of_order += 1;
                } else if !self.shared_ids.contains(&file_id) {
                    self.diagnostics.unknown_file_uploads += 1;
                } else if let Some(user) = conn.user_id() {
                    self.per_peer
                        .insert(user, PeerPhase::UploadAccepted(file_id));
                    out.to_peer.push(Message::AcceptUpload(file_id));
                }
            }
            Message::RequestPart { file_id, ranges } => {
                let rec = self.record(
                    LoggedKind::RequestPart,
                    conn,
                    Some(file_id),
                    Some(ranges.clone()),
                    now,
                );
                out.records.push(rec);
                if phase != PeerPhase::UploadAccepted(file_id) {
                    self.diagnostics.out_of_order += 1;
                    return out;
                }
                let size = self
                    .shared
                    .iter()
                    .find(|f| f.file_id == file_id)
                    .map_or(0, |f| f.size);
                let valid: Vec<ByteRange> =
                    ranges.iter().copied().filter(|r| r.fits(size)).collect();
                self.diagnostics.rejected_ranges += (ranges.len() - valid.len()) as u64;
                let seed = mix_seed(self.config.content_seed, self.part_requests);
                self.part_requests += 1;
                out.to_peer.extend(answer_part_request(
                    self.config.strategy,
                    file_id,
                    &valid,
                    self.config.max_chunk,
                    seed,
                ));
            }
            Message::SharedListAnswer(files) => {
                let Some(user) = conn.user_id() else {
                    self.diagnostics.unsolicited_lists += 1;
                    return out;
                };
                if !self.asked.contains(&user) {
                    self.diagnostics.unsolicited_lists += 1;
                    return out;
                }
                let token = self.hasher.hash_ip(conn.ip);
                for f in &files {
                    out.shares.push(ShareRecord {
                        timestamp: now,
                        honeypot_id: self.config.id.clone(),
                        owner: ShareOwner::Peer(token),
                        file: f.clone(),
                    });
                }
                if self.config.greedy {
                    out.extend(self.greedy_accrete(&files, now));
                }
            }
            Message::HelloAnswer(_)
            | Message::OfferFiles(_)
            | Message::AcceptUpload(_)
            | Message::SendPart { .. }
            | Message::AskSharedList => {
                self.diagnostics.ignored += 1;
            }
        }
        out
    }

    /// Forgets the protocol phase of a closed connection.
    pub fn peer_disconnected(&mut self, conn: &Connection) {
        if let Some(user) = conn.user_id() {
            self.per_peer.remove(&user);
        }
    }

    pub fn records_logged(&self) -> u64 {
        self.records_logged
    }
}
