//! Deployment plan file.
//!
//! ```text
//! poll_interval = 300
//! servers = 10.0.0.1:4661, 10.0.0.2:4661
//! assignment = spread
//!
//! [honeypot hp01]
//! strategy = no-content
//!
//! [advertise *]
//! file = 00112233445566778899aabbccddeeff:734003200:some movie.avi
//! catalog = 0,1
//! ```
//!
//! Keys before the first section apply to the whole campaign.
//! `[advertise *]` targets every declared honeypot.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::net::SocketAddrV4;

use thiserror::Error;

use crate::anonymize::CampaignSalt;
use crate::honeypot::Strategy;
use crate::protocol::{FileId, FileMeta};
use crate::time::{parse_duration_ms, HOUR_MS, MINUTE_MS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate honeypot id {0:?}")]
    DuplicateId(String),
    #[error("advertisement targets undeclared honeypot {0:?}")]
    UnknownTarget(String),
    #[error("honeypot {0:?} has no server and the plan lists none")]
    NoServer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Assignment {
    /// Every honeypot uses the first listed server.
    #[default]
    SameServer,
    /// Round-robin over the listed servers in declaration order.
    Spread,
}

/// A file to advertise: explicit metadata, or a rank in the simulated
/// catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileRef {
    Meta(FileMeta),
    Catalog(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoneypotSpec {
    pub id: String,
    pub server: Option<SocketAddrV4>,
    pub strategy: Strategy,
    pub greedy: bool,
    pub listen: Option<SocketAddrV4>,
    /// Control address of an already running agent; when absent the
    /// launcher starts one itself.
    pub control: Option<SocketAddrV4>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advertisement {
    /// `*` for every honeypot.
    pub target: String,
    pub files: Vec<FileRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub honeypots: Vec<HoneypotSpec>,
    pub advertisements: Vec<Advertisement>,
    pub poll_interval_ms: u64,
    pub gather_interval_ms: u64,
    pub servers: Vec<SocketAddrV4>,
    pub assignment: Assignment,
    pub redirect: bool,
    /// Wall-clock run length for live deployments.
    pub run_for_ms: u64,
    pub salt: Option<CampaignSalt>,
    pub filename_threshold: usize,
}

impl Default for DeploymentPlan {
    fn default() -> Self {
        DeploymentPlan {
            honeypots: Vec::new(),
            advertisements: Vec::new(),
            poll_interval_ms: 5 * MINUTE_MS,
            gather_interval_ms: HOUR_MS,
            servers: Vec::new(),
            assignment: Assignment::SameServer,
            redirect: false,
            run_for_ms: 10 * MINUTE_MS,
            salt: None,
            filename_threshold: 5,
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> PlanError {
    PlanError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_bool(line: usize, v: &str) -> Result<bool, PlanError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(syntax(line, format!("expected a boolean, got {v:?}"))),
    }
}

fn parse_addr(line: usize, v: &str) -> Result<SocketAddrV4, PlanError> {
    v.trim()
        .parse()
        .map_err(|_| syntax(line, format!("expected ip:port, got {v:?}")))
}

/// `<32 hex>:<size>:<name>`; the name may itself contain colons.
pub fn parse_file_spec(v: &str) -> Result<FileMeta, String> {
    let mut parts = v.splitn(3, ':');
    let (Some(id), Some(size), Some(name)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("expected <fileid>:<size>:<name>, got {v:?}"));
    };
    let file_id: FileId = id
        .trim()
        .parse()
        .map_err(|_| format!("bad file id {id:?}"))?;
    let size: u64 = size
        .trim()
        .parse()
        .map_err(|_| format!("bad size {size:?}"))?;
    if size == 0 {
        return Err("file size must be positive".into());
    }
    Ok(FileMeta::new(file_id, name.trim(), size))
}

enum Section {
    Campaign,
    Honeypot(usize),
    Advertise(usize),
}

impl DeploymentPlan {
    pub fn parse(text: &str) -> Result<DeploymentPlan, PlanError> {
        let mut plan = DeploymentPlan::default();
        let mut section = Section::Campaign;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let mut words = header.split_whitespace();
                let kind = words.next().unwrap_or_default();
                let name = words
                    .next()
                    .ok_or_else(|| syntax(n, "section needs a name"))?;
                if words.next().is_some() {
                    return Err(syntax(n, "section header has extra words"));
                }
                section = match kind {
                    "honeypot" => {
                        plan.honeypots.push(HoneypotSpec {
                            id: name.to_string(),
                            server: None,
                            strategy: Strategy::NoContent,
                            greedy: false,
                            listen: None,
                            control: None,
                        });
                        Section::Honeypot(plan.honeypots.len() - 1)
                    }
                    "advertise" => {
                        plan.advertisements.push(Advertisement {
                            target: name.to_string(),
                            files: Vec::new(),
                        });
                        Section::Advertise(plan.advertisements.len() - 1)
                    }
                    other => return Err(syntax(n, format!("unknown section {other:?}"))),
                };
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| syntax(n, "expected key = value"))?;
            let dur = |v: &str| parse_duration_ms(v).map_err(|e| syntax(n, e.to_string()));
            match &section {
                Section::Campaign => {
                    match key {
                        "poll_interval" => plan.poll_interval_ms = dur(value)?.max(1),
                        "gather_interval" => plan.gather_interval_ms = dur(value)?.max(1),
                        "run_for" => plan.run_for_ms = dur(value)?,
                        "servers" => {
                            plan.servers = value
                                .split(',')
                                .filter(|s| !s.trim().is_empty())
                                .map(|s| parse_addr(n, s))
                                .collect::<Result<_, _>>()?
                        }
                        "assignment" => {
                            plan.assignment = match value {
                                "same-server" => Assignment::SameServer,
                                "spread" => Assignment::Spread,
                                v => return Err(syntax(n, format!("unknown assignment {v:?}"))),
                            }
                        }
                        "redirect" => plan.redirect = parse_bool(n, value)?,
                        "salt" => {
                            let mut salt = [0u8; 32];
                            hex::decode_to_slice(value, &mut salt)
                                .map_err(|_| syntax(n, "salt must be 64 hex characters"))?;
                            plan.salt = Some(CampaignSalt(salt));
                        }
                        "filename_threshold" => {
                            plan.filename_threshold =
                                value.parse::<usize>().ok().filter(|&t| t >= 1).ok_or_else(
                                    || syntax(n, "filename_threshold must be a positive integer"),
                                )?
                        }
                        k => return Err(syntax(n, format!("unknown campaign key {k:?}"))),
                    }
                }
                Section::Honeypot(idx) => {
                    let hp = &mut plan.honeypots[*idx];
                    match key {
                        "server" => hp.server = Some(parse_addr(n, value)?),
                        "strategy" => {
                            hp.strategy = value.parse().map_err(|e: String| syntax(n, e))?
                        }
                        "greedy" => hp.greedy = parse_bool(n, value)?,
                        "listen" => hp.listen = Some(parse_addr(n, value)?),
                        "control" => hp.control = Some(parse_addr(n, value)?),
                        k => return Err(syntax(n, format!("unknown honeypot key {k:?}"))),
                    }
                }
                Section::Advertise(idx) => {
                    let ad = &mut plan.advertisements[*idx];
                    match key {
                        "file" => ad.files.push(FileRef::Meta(
                            parse_file_spec(value).map_err(|e| syntax(n, e))?,
                        )),
                        "catalog" => {
                            for rank in value.split(',').filter(|s| !s.trim().is_empty()) {
                                let rank = rank
                                    .trim()
                                    .parse()
                                    .map_err(|_| syntax(n, format!("bad catalog rank {rank:?}")))?;
                                ad.files.push(FileRef::Catalog(rank));
                            }
                        }
                        k => return Err(syntax(n, format!("unknown advertise key {k:?}"))),
                    }
                }
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let mut ids = HashSet::new();
        for hp in &self.honeypots {
            if !ids.insert(hp.id.as_str()) {
                return Err(PlanError::DuplicateId(hp.id.clone()));
            }
            if hp.server.is_none() && self.servers.is_empty() {
                return Err(PlanError::NoServer(hp.id.clone()));
            }
        }
        for ad in &self.advertisements {
            if ad.target != "*" && !ids.contains(ad.target.as_str()) {
                return Err(PlanError::UnknownTarget(ad.target.clone()));
            }
        }
        Ok(())
    }

    /// Server for the honeypot at `index`: its own, else by assignment.
    pub fn server_for(&self, index: usize) -> Option<SocketAddrV4> {
        let hp = self.honeypots.get(index)?;
        if hp.server.is_some() {
            return hp.server;
        }
        match self.assignment {
            Assignment::SameServer => self.servers.first().copied(),
            Assignment::Spread => {
                let implicit = self.honeypots[..index]
                    .iter()
                    .filter(|h| h.server.is_none())
                    .count();
                self.servers
                    .get(implicit % self.servers.len().max(1))
                    .copied()
            }
        }
    }

    /// All file references advertised by `honeypot_id`, in plan order,
    /// without duplicates.
    pub fn files_for(&self, honeypot_id: &str) -> Vec<FileRef> {
        let mut out: Vec<FileRef> = Vec::new();
        for ad in &self.advertisements {
            if ad.target == "*" || ad.target == honeypot_id {
                for f in &ad.files {
                    if !out.contains(f) {
                        out.push(f.clone());
                    }
                }
            }
        }
        out
    }

    pub fn strategy_of(&self, honeypot_id: &str) -> Option<Strategy> {
        self.honeypots
            .iter()
            .find(|h| h.id == honeypot_id)
            .map(|h| h.strategy)
    }

    /// Every catalog rank mentioned by any advertisement, ascending.
    pub fn catalog_ranks(&self) -> Vec<usize> {
        let mut ranks: Vec<usize> = self
            .advertisements
            .iter()
            .flat_map(|a| a.files.iter())
            .filter_map(|f| match f {
                FileRef::Catalog(r) => Some(*r),
                FileRef::Meta(_) => None,
            })
            .collect();
        ranks.sort_unstable();
        ranks.dedup();
        ranks
    }

    /// `n_no` no-content and `n_random` random-content honeypots on one
    /// server, all advertising `files`.
    pub fn distributed(
        n_no: usize,
        n_random: usize,
        server: SocketAddrV4,
        files: Vec<FileRef>,
    ) -> DeploymentPlan {
        let mut plan = DeploymentPlan {
            servers: vec![server],
            ..DeploymentPlan::default()
        };
        for i in 0..n_no + n_random {
            plan.honeypots.push(HoneypotSpec {
                id: format!("hp{:02}", i + 1),
                server: None,
                strategy: if i < n_no {
                    Strategy::NoContent
                } else {
                    Strategy::RandomContent
                },
                greedy: false,
                listen: None,
                control: None,
            });
        }
        plan.advertisements.push(Advertisement {
            target: "*".into(),
            files,
        });
        plan
    }

    /// Serializes back to the plan file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "poll_interval = {}ms", self.poll_interval_ms);
        let _ = writeln!(s, "gather_interval = {}ms", self.gather_interval_ms);
        let _ = writeln!(s, "run_for = {}ms", self.run_for_ms);
        if !self.servers.is_empty() {
            let list: Vec<String> = self.servers.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(s, "servers = {}", list.join(", "));
        }
        let _ = writeln!(
            s,
            "assignment = {}",
            match self.assignment {
                Assignment::SameServer => "same-server",
                Assignment::Spread => "spread",
            }
        );
        let _ = writeln!(s, "redirect = {}", self.redirect);
        let _ = writeln!(s, "filename_threshold = {}", self.filename_threshold);
        if let Some(salt) = &self.salt {
            let _ = writeln!(s, "salt = {}", hex::encode(salt.0));
        }
        for hp in &self.honeypots {
            let _ = writeln!(s, "\n[honeypot {}]", hp.id);
            if let Some(server) = hp.server {
                let _ = writeln!(s, "server = {server}");
            }
            let _ = writeln!(s, "strategy = {}", hp.strategy);
            let _ = writeln!(s, "greedy = {}", hp.greedy);
            if let Some(listen) = hp.listen {
                let _ = writeln!(s, "listen = {listen}");
            }
            if let Some(control) = hp.control {
                let _ = writeln!(s, "control = {control}");
            }
        }
        for ad in &self.advertisements {
            let _ = writeln!(s, "\n[advertise {}]", ad.target);
            for f in &ad.files {
                match f {
                    FileRef::Meta(m) => {
                        let _ = writeln!(s, "file = {}:{}:{}", m.file_id, m.size, m.name);
                    }
                    FileRef::Catalog(r) => {
                        let _ = writeln!(s, "catalog = {r}");
                    }
                }
            }
        }
        s
    }
}
