//! Deterministic discrete-event simulation of a directory-server network,
//! a downloader population, and a honeypot deployment.
//!
//! Everything random flows from `SimConfig::seed`; the event queue is
//! ordered by (time, insertion sequence), so a given config and plan always
//! produce the same bytes.

pub mod catalog;
pub mod config;
pub mod peer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use thiserror::Error;

use crate::anonymize::{CampaignSalt, IpHasher};
use crate::honeypot::{
    ConnectError, Connection, Honeypot, HoneypotConfig, Outbox, ServerConnector, ServerLogin,
    StatusReport, Strategy,
};
use crate::manager::control::{ShippedLogs, StartOrder};
use crate::manager::{
    DeploymentPlan, HoneypotLauncher, HoneypotStatus, LaunchError, LogSource, Manager, MergeError,
    PlanError, UnifiedOutput,
};
use crate::protocol::{ByteRange, FileMeta, Hello, Message, PeerId, UserId, LOW_ID_LIMIT};
use crate::time::{Timestamp, DAY_MS, HOUR_MS};

pub use self::catalog::{build_catalog, zipf_weights};
pub use self::config::{ConfigError, SimConfig};
pub use self::peer::{
    blacklist_update, detection_threshold, peer_step, Evidence, PeerAction, SimPeer, Suspicion,
};

/// Simulated time zero: 2008-10-01T00:00:00Z.
pub const SIM_EPOCH_MS: u64 = 1_222_819_200_000;

pub const TRACE_HEADER: &str = "time,event,peer,honeypot,file,detail";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("plan references catalog rank {rank}, but the catalog has {size} files")]
    CatalogRank { rank: usize, size: usize },
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Directory servers of the simulated network. A login to an address
/// outside the list is refused.
pub struct SimServers {
    addrs: Vec<SocketAddrV4>,
    fixed_client_id: Option<u32>,
    issued: u32,
}

impl SimServers {
    pub fn new(addrs: Vec<SocketAddrV4>, fixed_client_id: Option<u32>) -> SimServers {
        SimServers {
            addrs,
            fixed_client_id,
            issued: 0,
        }
    }

    pub fn addrs(&self) -> &[SocketAddrV4] {
        &self.addrs
    }

    pub fn index_of(&self, addr: SocketAddrV4) -> Option<usize> {
        self.addrs.iter().position(|a| *a == addr)
    }
}

impl ServerConnector for SimServers {
    fn login(&mut self, server: SocketAddrV4, _hello: &Hello) -> Result<ServerLogin, ConnectError> {
        let idx = self.index_of(server).ok_or(ConnectError::Refused(server))?;
        let client_id = self.fixed_client_id.unwrap_or_else(|| {
            self.issued += 1;
            0x0A00_0000 + self.issued
        });
        Ok(ServerLogin {
            client_id,
            server_name: format!("sim-server-{idx}"),
        })
    }
}

struct SimHoneypot {
    honeypot: Honeypot,
    server: Option<usize>,
    discoverable_at: Timestamp,
    /// Downloads currently using this honeypot.
    active: u32,
    ship_log: String,
    ship_shares: String,
}

impl SimHoneypot {
    fn deliver(&mut self, out: &Outbox) {
        for r in &out.records {
            self.ship_log.push_str(&r.to_line());
            self.ship_log.push('\n');
        }
        for s in &out.shares {
            self.ship_shares.push_str(&s.to_line());
            self.ship_shares.push('\n');
        }
        // OFFER-FILES updates the server index, which is the honeypot's own
        // shared list here.
    }
}

/// In-process launcher: the manager drives simulated honeypots through
/// plain calls instead of the control channel.
pub struct SimLauncher {
    servers: SimServers,
    slots: BTreeMap<String, SimHoneypot>,
    order: Vec<String>,
    rng: ChaCha8Rng,
    discovery_mean_ms: u64,
    now: Timestamp,
}

impl SimLauncher {
    fn new(servers: SimServers, seed: u64, discovery_mean_ms: u64) -> SimLauncher {
        SimLauncher {
            servers,
            slots: BTreeMap::new(),
            order: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x1a0c_4e55),
            discovery_mean_ms,
            now: Timestamp(SIM_EPOCH_MS),
        }
    }

    fn get_mut(&mut self, index: usize) -> Option<&mut SimHoneypot> {
        let id = self.order.get(index)?;
        self.slots.get_mut(id)
    }
}

impl HoneypotLauncher for SimLauncher {
    fn start(&mut self, order: &StartOrder) -> Result<StatusReport, LaunchError> {
        let now = self.now;
        let mut config = HoneypotConfig::new(order.honeypot_id.clone(), order.strategy);
        config.greedy = order.greedy;
        config.content_seed = self.rng.next_u64();
        let mut honeypot = Honeypot::new(config, IpHasher::new(order.salt), now);
        let mut out = honeypot.offer_files(&order.files, now);
        let (status, login) = honeypot.connect_to_server(&mut self.servers, order.server, now);
        out.extend(login);
        let delay = peer::exp_ms(self.discovery_mean_ms, &mut self.rng);
        let mut slot = SimHoneypot {
            honeypot,
            server: self
                .servers
                .index_of(order.server)
                .filter(|_| status.connected),
            discoverable_at: now.plus_ms(delay),
            active: 0,
            ship_log: String::new(),
            ship_shares: String::new(),
        };
        slot.deliver(&out);
        if let Some(old) = self.slots.insert(order.honeypot_id.clone(), slot) {
            // carry unshipped lines over a restart
            let s = self.slots.get_mut(&order.honeypot_id).unwrap();
            s.ship_log.insert_str(0, &old.ship_log);
            s.ship_shares.insert_str(0, &old.ship_shares);
        } else {
            self.order.push(order.honeypot_id.clone());
        }
        Ok(status)
    }

    fn poll(&mut self, id: &str) -> Result<StatusReport, LaunchError> {
        self.slots
            .get(id)
            .map(|s| s.honeypot.status())
            .ok_or_else(|| LaunchError::NotRunning(id.into()))
    }

    fn advertise(&mut self, id: &str, files: &[FileMeta]) -> Result<(), LaunchError> {
        let now = self.now;
        let s = self
            .slots
            .get_mut(id)
            .ok_or_else(|| LaunchError::NotRunning(id.into()))?;
        let out = s.honeypot.offer_files(files, now);
        s.deliver(&out);
        Ok(())
    }

    fn ship_logs(&mut self, id: &str) -> Result<ShippedLogs, LaunchError> {
        let s = self
            .slots
            .get_mut(id)
            .ok_or_else(|| LaunchError::NotRunning(id.into()))?;
        Ok(ShippedLogs {
            log: std::mem::take(&mut s.ship_log),
            shares: std::mem::take(&mut s.ship_shares),
        })
    }

    fn stop(&mut self, id: &str) -> Result<(), LaunchError> {
        let s = self
            .slots
            .get_mut(id)
            .ok_or_else(|| LaunchError::NotRunning(id.into()))?;
        s.honeypot.disconnect();
        s.server = None;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival,
    Hello(u64),
    ListAnswer(u64),
    StartUpload(u64),
    Request(u64),
    End(u64),
    Poll,
    Gather,
}

struct Download {
    peer: usize,
    honeypot: usize,
    file: usize,
    conn: Connection,
    session_end: Timestamp,
    requests: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimStats {
    pub sessions: u64,
    pub idle_sessions: u64,
    pub downloads: u64,
    pub hellos: u64,
    pub start_uploads: u64,
    pub request_parts: u64,
    pub shared_lists: u64,
    pub blacklisted: u64,
    pub manager_actions: u64,
}

pub struct SimOutput {
    pub sources: Vec<LogSource>,
    pub unified: UnifiedOutput,
    pub trace: String,
    pub stats: SimStats,
    pub statuses: Vec<HoneypotStatus>,
    pub plan: DeploymentPlan,
    pub config: SimConfig,
    pub catalog: Vec<FileMeta>,
}

impl SimOutput {
    /// Writes `logs/<id>.log`, `logs/<id>.shares`, `unified.log`,
    /// `unified.shares`, `trace.csv`, `plan.txt` and `sim.conf`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        let logs = dir.join("logs");
        std::fs::create_dir_all(&logs)?;
        for s in &self.sources {
            std::fs::write(logs.join(format!("{}.log", s.name)), &s.log)?;
            if let Some(sh) = &s.shares {
                std::fs::write(logs.join(format!("{}.shares", s.name)), sh)?;
            }
        }
        self.unified.write_to(dir)?;
        std::fs::write(dir.join("trace.csv"), &self.trace)?;
        std::fs::write(dir.join("plan.txt"), self.plan.to_text())?;
        std::fs::write(dir.join("sim.conf"), self.config.to_text())?;
        Ok(())
    }
}

struct World<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    peers: Vec<SimPeer>,
    peer_pick: Option<WeightedIndex<f64>>,
    total_rate_per_ms: f64,
    catalog: &'a [FileMeta],
    launcher: SimLauncher,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    downloads: BTreeMap<u64, Download>,
    next_download: u64,
    busy: BTreeSet<(usize, usize)>,
    trace: String,
    stats: SimStats,
    end: Timestamp,
}

impl World<'_> {
    fn schedule(&mut self, at: Timestamp, ev: Event) {
        if at > self.end {
            return;
        }
        self.seq += 1;
        self.queue.insert((at.0, self.seq), ev);
    }

    fn trace(
        &mut self,
        t: Timestamp,
        event: &str,
        peer: usize,
        honeypot: Option<usize>,
        file: Option<usize>,
        detail: &str,
    ) {
        let hp = honeypot
            .and_then(|h| self.launcher.order.get(h))
            .map_or("-", |s| s.as_str());
        let file = file.map(|f| self.catalog[f].file_id.to_string());
        let _ = writeln!(
            self.trace,
            "{},{event},{peer},{hp},{},{detail}",
            t.0,
            file.as_deref().unwrap_or("-")
        );
    }

    fn diurnal_factor(&self, t: Timestamp) -> f64 {
        let hour = (t.0 % DAY_MS) as f64 / HOUR_MS as f64;
        let phase = 2.0 * std::f64::consts::PI * (hour - self.cfg.diurnal_peak_hour) / 24.0;
        1.0 + self.cfg.diurnal_amplitude * phase.cos()
    }

    /// Next session start by thinning a Poisson process at the peak rate.
    fn schedule_arrival(&mut self, from: Timestamp) {
        if self.peer_pick.is_none() || self.total_rate_per_ms <= 0.0 {
            return;
        }
        let peak = self.total_rate_per_ms * (1.0 + self.cfg.diurnal_amplitude);
        let mut t = from.0 as f64;
        loop {
            let u: f64 = self.rng.random();
            t += -(1.0 - u).ln() / peak;
            if t > self.end.0 as f64 {
                return;
            }
            let ts = Timestamp(t as u64);
            if self.rng.random::<f64>() * (1.0 + self.cfg.diurnal_amplitude)
                <= self.diurnal_factor(ts)
            {
                self.schedule(ts, Event::Arrival);
                return;
            }
        }
    }

    fn arrival(&mut self, t: Timestamp) {
        self.schedule_arrival(t);
        let p = self
            .peer_pick
            .as_ref()
            .expect("arrivals need peers")
            .sample(&mut self.rng);
        self.stats.sessions += 1;
        if self.peers[p].interests.is_empty() {
            self.stats.idle_sessions += 1;
            self.trace(t, "idle", p, None, None, "");
            return;
        }
        let file = {
            let interests = &self.peers[p].interests;
            interests[self.rng.random_range(0..interests.len())]
        };
        let session_end = t.plus_ms(peer::exp_ms(self.cfg.session_mean_ms, &mut self.rng).max(1));
        let file_id = self.catalog[file].file_id;
        let mut sources = 0;
        for h in 0..self.launcher.order.len() {
            let (server, discoverable_at, active, sharing) = {
                let Some(s) = self.launcher.get_mut(h) else {
                    continue;
                };
                (
                    s.server,
                    s.discoverable_at,
                    s.active,
                    s.honeypot.is_sharing(&file_id),
                )
            };
            if !sharing || server.is_none() || t < discoverable_at {
                continue;
            }
            if self.peers[p].has_blacklisted(h) || self.busy.contains(&(p, h)) {
                continue;
            }
            let via_server = server == Some(self.peers[p].server)
                && self.rng.random_bool(self.cfg.server_source_prob);
            let via_exchange = !via_server
                && active > 0
                && self
                    .rng
                    .random_bool(1.0 - (1.0 - self.cfg.peer_exchange_prob).powi(active as i32));
            if !(via_server || via_exchange) {
                continue;
            }
            let jitter = if self.cfg.contact_jitter_ms > 0 {
                self.rng.random_range(0..self.cfg.contact_jitter_ms)
            } else {
                0
            };
            let at = t.plus_ms(self.cfg.latency_ms + jitter);
            if at >= session_end || at > self.end {
                continue;
            }
            let id = self.next_download;
            self.next_download += 1;
            let peer = &self.peers[p];
            self.downloads.insert(
                id,
                Download {
                    peer: p,
                    honeypot: h,
                    file,
                    conn: Connection::new(peer.ip, peer.hello.port),
                    session_end,
                    requests: 0,
                },
            );
            self.busy.insert((p, h));
            self.launcher.get_mut(h).unwrap().active += 1;
            self.stats.downloads += 1;
            sources += 1;
            self.schedule(at, Event::Hello(id));
        }
        self.trace(
            t,
            "session",
            p,
            None,
            Some(file),
            &format!("sources={sources}"),
        );
    }

    /// Hands `msg` to the download's honeypot at time `t`.
    fn deliver(&mut self, id: u64, msg: Message, t: Timestamp) -> Vec<Message> {
        let d = self.downloads.get_mut(&id).expect("live download");
        let slot = self
            .launcher
            .get_mut(d.honeypot)
            .expect("launched honeypot");
        let out = slot.honeypot.handle_peer_message(&mut d.conn, msg, t);
        slot.deliver(&out);
        out.to_peer
    }

    fn hello(&mut self, id: u64, t: Timestamp) {
        let (p, h) = {
            let d = &self.downloads[&id];
            (d.peer, d.honeypot)
        };
        let msg = Message::Hello(self.peers[p].hello.clone());
        let replies = self.deliver(id, msg, t);
        self.stats.hellos += 1;
        self.trace(t, "hello", p, Some(h), None, &format!("loop={id}"));
        let asked = replies.iter().any(|m| matches!(m, Message::AskSharedList));
        let next = t.plus_ms(self.cfg.latency_ms);
        if asked && self.peers[p].shares_list {
            self.schedule(next, Event::ListAnswer(id));
        } else {
            self.schedule(next, Event::StartUpload(id));
        }
    }

    fn list_answer(&mut self, id: u64, t: Timestamp) {
        let (p, h) = {
            let d = &self.downloads[&id];
            (d.peer, d.honeypot)
        };
        let files = self.peers[p].shares.clone();
        let n = files.len();
        self.deliver(id, Message::SharedListAnswer(files), t);
        self.stats.shared_lists += 1;
        self.trace(
            t,
            "shared-list",
            p,
            Some(h),
            None,
            &format!("loop={id};files={n}"),
        );
        self.schedule(t.plus_ms(self.cfg.latency_ms), Event::StartUpload(id));
    }

    fn start_upload(&mut self, id: u64, t: Timestamp) {
        let (p, h, f) = {
            let d = &self.downloads[&id];
            (d.peer, d.honeypot, d.file)
        };
        let file_id = self.catalog[f].file_id;
        let replies = self.deliver(id, Message::StartUpload(file_id), t);
        self.stats.start_uploads += 1;
        self.trace(
            t,
            "start-upload",
            p,
            Some(h),
            Some(f),
            &format!("loop={id}"),
        );
        if replies
            .iter()
            .any(|m| matches!(m, Message::AcceptUpload(x) if *x == file_id))
        {
            self.schedule(t.plus_ms(self.cfg.latency_ms), Event::Request(id));
        } else {
            self.end_download(id, t, "refused");
        }
    }

    fn request(&mut self, id: u64, t: Timestamp) {
        let (p, h, f, seq, session_end) = {
            let d = &self.downloads[&id];
            (d.peer, d.honeypot, d.file, d.requests, d.session_end)
        };
        if t >= session_end {
            self.end_download(id, t, "session-end");
            return;
        }
        let meta = &self.catalog[f];
        let req = self.cfg.request_bytes as u64;
        let offset = (seq as u64 * req) % meta.size;
        let range = ByteRange::new(offset, (meta.size - offset).min(req) as u32);
        let msg = Message::RequestPart {
            file_id: meta.file_id,
            ranges: vec![range],
        };
        let replies = self.deliver(id, msg, t);
        self.downloads.get_mut(&id).unwrap().requests += 1;
        self.stats.request_parts += 1;
        self.trace(
            t,
            "request-part",
            p,
            Some(h),
            Some(f),
            &format!("loop={id};seq={seq}"),
        );
        match peer_step(&mut self.peers[p], h, &replies, t, self.cfg, &mut self.rng) {
            PeerAction::Request(next) if next < session_end => {
                self.schedule(next, Event::Request(id))
            }
            PeerAction::Request(_) => self.schedule(session_end, Event::End(id)),
            PeerAction::Blacklist => {
                self.stats.blacklisted += 1;
                self.trace(t, "blacklist", p, Some(h), Some(f), &format!("loop={id}"));
                self.end_download(id, t, "blacklisted");
            }
            PeerAction::Idle => self.end_download(id, t, "idle"),
        }
    }

    fn end_download(&mut self, id: u64, t: Timestamp, why: &str) {
        let Some(d) = self.downloads.remove(&id) else {
            return;
        };
        if let Some(slot) = self.launcher.get_mut(d.honeypot) {
            slot.honeypot.peer_disconnected(&d.conn);
            slot.active = slot.active.saturating_sub(1);
        }
        self.busy.remove(&(d.peer, d.honeypot));
        self.trace(
            t,
            "end",
            d.peer,
            Some(d.honeypot),
            Some(d.file),
            &format!("loop={id};reason={why}"),
        );
    }
}

fn generate_peers(
    cfg: &SimConfig,
    catalog_len: usize,
    catalog: &[FileMeta],
    rng: &mut ChaCha8Rng,
) -> Vec<SimPeer> {
    let pick = (catalog_len > 0)
        .then(|| WeightedIndex::new(zipf_weights(catalog_len, cfg.zipf_s)).expect("weights"));
    let draw_count = |mean: f64, rng: &mut ChaCha8Rng| -> usize {
        if mean <= 0.0 {
            0
        } else {
            Poisson::new(mean)
                .map(|d| d.sample(rng) as usize)
                .unwrap_or(0)
        }
    };
    let mut used_ips = BTreeSet::new();
    let mut peers = Vec::with_capacity(cfg.n_peers);
    for i in 0..cfg.n_peers {
        let ip = loop {
            let a: u32 = rng.random();
            let first = (a >> 24) as u8;
            if (1..=223).contains(&first) && first != 127 && first != 10 && used_ips.insert(a) {
                break Ipv4Addr::from(a);
            }
        };
        let mut user = [0u8; 16];
        rng.fill_bytes(&mut user);
        let client_id = if rng.random_bool(cfg.low_id_prob) {
            rng.random_range(1..LOW_ID_LIMIT)
        } else {
            u32::from(ip)
        };
        let server = rng.random_range(0..cfg.n_servers);
        let mut p = SimPeer::new(i, ip, PeerId::new(UserId(user), client_id), server);
        p.activity_rate = if cfg.sessions_per_day > 0.0 {
            peer::exp_ms(1_000_000, rng) as f64 / 1_000_000.0 * cfg.sessions_per_day
        } else {
            0.0
        };
        if let Some(pick) = &pick {
            let mut interests = BTreeSet::new();
            for _ in 0..draw_count(cfg.interests_mean, rng) {
                interests.insert(pick.sample(rng));
            }
            p.interests = interests.into_iter().collect();
            let mut shares = BTreeSet::new();
            for _ in 0..draw_count(cfg.shares_mean, rng) {
                shares.insert(pick.sample(rng));
            }
            p.shares = shares.into_iter().map(|f| catalog[f].clone()).collect();
        }
        p.shares_list = rng.random_bool(cfg.share_list_prob);
        peers.push(p);
    }
    peers
}

/// Runs one simulated campaign: honeypots are launched, supervised and
/// gathered by a [`Manager`], downloaders run the handshake against them,
/// and the manager's merge produces the unified log.
pub fn run_simulation(cfg: &SimConfig, plan: &DeploymentPlan) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    plan.validate()?;
    let mut plan = plan.clone();
    if plan.salt.is_none() {
        plan.salt = Some(CampaignSalt::from_seed(cfg.seed));
    }
    let mut server_addrs: Vec<SocketAddrV4> =
        plan.servers.iter().copied().take(cfg.n_servers).collect();
    while server_addrs.len() < cfg.n_servers {
        server_addrs.push(SocketAddrV4::new(
            Ipv4Addr::new(10, 255, 0, server_addrs.len() as u8 + 1),
            4661,
        ));
    }
    if plan.servers.is_empty() {
        plan.servers.push(server_addrs[0]);
    }

    let catalog = build_catalog(cfg.seed, cfg.catalog_size, &plan);
    if let Some(&rank) = plan.catalog_ranks().iter().find(|&&r| r >= catalog.len()) {
        return Err(SimError::CatalogRank {
            rank,
            size: catalog.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let peers = generate_peers(cfg, catalog.len(), &catalog, &mut rng);
    let rates: Vec<f64> = peers.iter().map(|p| p.activity_rate).collect();
    let total_rate: f64 = rates.iter().sum();
    let peer_pick = if total_rate > 0.0 {
        WeightedIndex::new(&rates).ok()
    } else {
        None
    };

    let start = Timestamp(SIM_EPOCH_MS);
    let end = start.plus_ms(cfg.duration_ms);
    let mut manager = Manager::new(plan.clone(), catalog.clone());
    let mut launcher = SimLauncher::new(
        SimServers::new(server_addrs, cfg.server_client_id),
        cfg.seed,
        cfg.startup_discovery_delay_ms,
    );
    let statuses = manager.launch(&mut launcher, start).to_vec();
    for s in &statuses {
        log::debug!(
            "{}: connected={} error={:?}",
            s.honeypot_id,
            s.connected,
            s.last_error
        );
    }

    let mut world = World {
        cfg,
        rng,
        peers,
        peer_pick,
        total_rate_per_ms: total_rate / DAY_MS as f64,
        catalog: &catalog,
        launcher,
        queue: BTreeMap::new(),
        seq: 0,
        downloads: BTreeMap::new(),
        next_download: 0,
        busy: BTreeSet::new(),
        trace: format!("{TRACE_HEADER}\n"),
        stats: SimStats::default(),
        end,
    };
    if cfg.duration_ms > 0 {
        world.schedule_arrival(start);
        world.schedule(start.plus_ms(plan.poll_interval_ms), Event::Poll);
        world.schedule(start.plus_ms(plan.gather_interval_ms), Event::Gather);
    }

    while let Some(((t, _), ev)) = world.queue.pop_first() {
        let t = Timestamp(t);
        world.launcher.now = t;
        match ev {
            Event::Arrival => world.arrival(t),
            Event::Hello(id) => world.hello(id, t),
            Event::ListAnswer(id) => world.list_answer(id, t),
            Event::StartUpload(id) => world.start_upload(id, t),
            Event::Request(id) => world.request(id, t),
            Event::End(id) => world.end_download(id, t, "session-end"),
            Event::Poll => {
                manager.poll_all(&mut world.launcher, t);
                let actions = manager.supervise(t);
                world.stats.manager_actions += actions.len() as u64;
                manager.apply(&actions, &mut world.launcher, t);
                world.schedule(t.plus_ms(plan.poll_interval_ms), Event::Poll);
            }
            Event::Gather => {
                manager.gather(&mut world.launcher);
                world.schedule(t.plus_ms(plan.gather_interval_ms), Event::Gather);
            }
        }
    }
    // downloads still open at the horizon simply stop
    let open: Vec<u64> = world.downloads.keys().copied().collect();
    for id in open {
        world.end_download(id, end, "horizon");
    }
    manager.gather(&mut world.launcher);

    let unified = manager.merge()?;
    Ok(SimOutput {
        sources: manager.sources(),
        unified,
        trace: world.trace,
        stats: world.stats,
        statuses: manager.statuses().to_vec(),
        plan,
        config: cfg.clone(),
        catalog,
    })
}

/// The distributed scenario: `n_no` no-content and `n_random`
/// random-content honeypots on the first server, each advertising the
/// catalog files of ranks `0..n_files`.
pub fn distributed_plan(n_no: usize, n_random: usize, n_files: usize) -> DeploymentPlan {
    let server = SocketAddrV4::new(Ipv4Addr::new(10, 255, 0, 1), 4661);
    let files = (0..n_files).map(crate::manager::FileRef::Catalog).collect();
    DeploymentPlan::distributed(n_no, n_random, server, files)
}

/// Strategy groups as recorded in a plan.
pub fn strategy_groups(plan: &DeploymentPlan) -> BTreeMap<String, Strategy> {
    plan.honeypots
        .iter()
        .map(|h| (h.id.clone(), h.strategy))
        .collect()
}
