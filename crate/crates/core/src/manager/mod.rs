//! Campaign orchestration: launching honeypots, watching their status,
//! relaunching dead ones, and collecting their logs.

pub mod control;
pub mod merge;
pub mod plan;

use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use thiserror::Error;

use crate::anonymize::CampaignSalt;
use crate::honeypot::log::{log_header, shares_header};
use crate::honeypot::StatusReport;
use crate::protocol::{FileMeta, IdStatus};
use crate::time::{Timestamp, HOUR_MS};

pub use self::control::{ControlMessage, ShippedLogs, StartOrder};
pub use self::merge::{gather_and_merge, LogSource, MergeError, MergeReport, UnifiedOutput};
pub use self::plan::{Advertisement, Assignment, DeploymentPlan, FileRef, HoneypotSpec, PlanError};

/// Relaunches allowed per honeypot within one hour before quarantine.
pub const MAX_RESTARTS_PER_HOUR: usize = 5;
/// A honeypot is stale once unseen for this many poll intervals.
pub const STALE_POLLS: u64 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LaunchError {
    #[error("honeypot {0:?} is not running")]
    NotRunning(String),
    #[error("honeypot {id:?} failed to start: {reason}")]
    StartFailed { id: String, reason: String },
    #[error("control channel: {0}")]
    Channel(String),
    #[error("advertisement references catalog rank {0}, but the catalog has fewer files")]
    CatalogRank(usize),
}

/// Whatever actually runs honeypots: threads with sockets, or the
/// in-process simulator.
pub trait HoneypotLauncher {
    fn start(&mut self, order: &StartOrder) -> Result<StatusReport, LaunchError>;
    fn poll(&mut self, honeypot_id: &str) -> Result<StatusReport, LaunchError>;
    fn advertise(&mut self, honeypot_id: &str, files: &[FileMeta]) -> Result<(), LaunchError>;
    /// Log and shares lines written since the previous call, without headers.
    fn ship_logs(&mut self, honeypot_id: &str) -> Result<ShippedLogs, LaunchError>;
    fn stop(&mut self, honeypot_id: &str) -> Result<(), LaunchError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoneypotStatus {
    pub honeypot_id: String,
    pub connected: bool,
    pub client_id: Option<u32>,
    pub id_status: Option<IdStatus>,
    /// Last time the honeypot reported itself connected (launch time until then).
    pub last_seen: Timestamp,
    pub restarts: u32,
    pub server: Option<SocketAddrV4>,
    pub quarantined: bool,
    pub last_error: Option<String>,
    restart_times: Vec<Timestamp>,
}

impl HoneypotStatus {
    fn new(id: &str, server: Option<SocketAddrV4>, now: Timestamp) -> HoneypotStatus {
        HoneypotStatus {
            honeypot_id: id.to_string(),
            connected: false,
            client_id: None,
            id_status: None,
            last_seen: now,
            restarts: 0,
            server,
            quarantined: false,
            last_error: None,
            restart_times: Vec::new(),
        }
    }

    fn restarts_within_hour(&self, now: Timestamp) -> usize {
        self.restart_times
            .iter()
            .filter(|t| now.since(**t) < HOUR_MS)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SupervisorAction {
    Restart {
        honeypot_id: String,
        server: Option<SocketAddrV4>,
    },
    Quarantine {
        honeypot_id: String,
    },
}

pub struct Manager {
    plan: DeploymentPlan,
    salt: CampaignSalt,
    catalog: Vec<FileMeta>,
    statuses: Vec<HoneypotStatus>,
    logs: BTreeMap<String, (String, String)>,
    alerts: Vec<String>,
}

impl Manager {
    /// `catalog` resolves `FileRef::Catalog` ranks; it may be empty when the
    /// plan only lists explicit files.
    pub fn new(plan: DeploymentPlan, catalog: Vec<FileMeta>) -> Manager {
        let salt = plan.salt.unwrap_or_else(CampaignSalt::random);
        Manager {
            plan,
            salt,
            catalog,
            statuses: Vec::new(),
            logs: BTreeMap::new(),
            alerts: Vec::new(),
        }
    }

    pub fn plan(&self) -> &DeploymentPlan {
        &self.plan
    }

    pub fn statuses(&self) -> &[HoneypotStatus] {
        &self.statuses
    }

    pub fn status(&self, honeypot_id: &str) -> Option<&HoneypotStatus> {
        self.statuses.iter().find(|s| s.honeypot_id == honeypot_id)
    }

    pub fn alerts(&self) -> &[String] {
        &self.alerts
    }

    /// Files a honeypot advertises, with catalog ranks resolved.
    pub fn resolve_files(&self, honeypot_id: &str) -> Result<Vec<FileMeta>, LaunchError> {
        self.plan
            .files_for(honeypot_id)
            .into_iter()
            .map(|f| match f {
                FileRef::Meta(m) => Ok(m),
                FileRef::Catalog(r) => self
                    .catalog
                    .get(r)
                    .cloned()
                    .ok_or(LaunchError::CatalogRank(r)),
            })
            .collect()
    }

    fn order(&self, index: usize, server: Option<SocketAddrV4>) -> Result<StartOrder, LaunchError> {
        let spec = &self.plan.honeypots[index];
        let server = server.ok_or_else(|| LaunchError::StartFailed {
            id: spec.id.clone(),
            reason: "no server assigned".into(),
        })?;
        Ok(StartOrder {
            honeypot_id: spec.id.clone(),
            server,
            strategy: spec.strategy,
            greedy: spec.greedy,
            salt: self.salt,
            listen: spec.listen,
            files: self.resolve_files(&spec.id)?,
        })
    }

    /// Starts every honeypot of the plan. A failure is recorded on that
    /// honeypot's status and does not stop the others.
    pub fn launch(
        &mut self,
        launcher: &mut dyn HoneypotLauncher,
        now: Timestamp,
    ) -> &[HoneypotStatus] {
        self.statuses.clear();
        for i in 0..self.plan.honeypots.len() {
            let server = self.plan.server_for(i);
            let mut status = HoneypotStatus::new(&self.plan.honeypots[i].id, server, now);
            match self.order(i, server).and_then(|o| launcher.start(&o)) {
                Ok(report) => apply_report(&mut status, &report, now),
                Err(e) => {
                    log::warn!("{e}");
                    status.last_error = Some(e.to_string());
                }
            }
            self.statuses.push(status);
        }
        &self.statuses
    }

    /// Folds a status report into the table.
    pub fn record_status(&mut self, report: &StatusReport, now: Timestamp) {
        if let Some(s) = self
            .statuses
            .iter_mut()
            .find(|s| s.honeypot_id == report.honeypot_id)
        {
            apply_report(s, report, now);
        }
    }

    /// Asks every live honeypot for its status.
    pub fn poll_all(&mut self, launcher: &mut dyn HoneypotLauncher, now: Timestamp) {
        for s in self.statuses.iter_mut().filter(|s| !s.quarantined) {
            match launcher.poll(&s.honeypot_id) {
                Ok(report) => apply_report(s, &report, now),
                Err(e) => {
                    s.connected = false;
                    s.last_error = Some(e.to_string());
                }
            }
        }
    }

    /// Decides which honeypots to relaunch. Pure with respect to the
    /// launcher; see [`Manager::apply`].
    pub fn supervise(&self, now: Timestamp) -> Vec<SupervisorAction> {
        let stale_after = STALE_POLLS * self.plan.poll_interval_ms;
        let mut actions = Vec::new();
        for s in self.statuses.iter().filter(|s| !s.quarantined) {
            let reference = s
                .restart_times
                .last()
                .map_or(s.last_seen, |t| (*t).max(s.last_seen));
            if now.since(reference) <= stale_after {
                continue;
            }
            if s.restarts_within_hour(now) >= MAX_RESTARTS_PER_HOUR {
                actions.push(SupervisorAction::Quarantine {
                    honeypot_id: s.honeypot_id.clone(),
                });
            } else {
                actions.push(SupervisorAction::Restart {
                    honeypot_id: s.honeypot_id.clone(),
                    server: self.next_server(s),
                });
            }
        }
        actions
    }

    fn next_server(&self, s: &HoneypotStatus) -> Option<SocketAddrV4> {
        if !self.plan.redirect || self.plan.servers.len() < 2 {
            return s.server;
        }
        let pos = s
            .server
            .and_then(|cur| self.plan.servers.iter().position(|a| *a == cur));
        let next = pos.map_or(0, |p| (p + 1) % self.plan.servers.len());
        Some(self.plan.servers[next])
    }

    pub fn apply(
        &mut self,
        actions: &[SupervisorAction],
        launcher: &mut dyn HoneypotLauncher,
        now: Timestamp,
    ) {
        for action in actions {
            match action {
                SupervisorAction::Restart {
                    honeypot_id,
                    server,
                } => {
                    let Some(index) = self
                        .plan
                        .honeypots
                        .iter()
                        .position(|h| &h.id == honeypot_id)
                    else {
                        continue;
                    };
                    let _ = launcher.stop(honeypot_id);
                    let result = self.order(index, *server).and_then(|o| launcher.start(&o));
                    let Some(s) = self
                        .statuses
                        .iter_mut()
                        .find(|s| &s.honeypot_id == honeypot_id)
                    else {
                        continue;
                    };
                    s.restarts += 1;
                    s.restart_times.push(now);
                    s.server = *server;
                    log::info!("restarted {honeypot_id} (restart #{})", s.restarts);
                    match result {
                        Ok(report) => apply_report(s, &report, now),
                        Err(e) => {
                            s.connected = false;
                            s.last_error = Some(e.to_string());
                        }
                    }
                }
                SupervisorAction::Quarantine { honeypot_id } => {
                    if let Some(s) = self
                        .statuses
                        .iter_mut()
                        .find(|s| &s.honeypot_id == honeypot_id)
                    {
                        s.quarantined = true;
                        s.connected = false;
                    }
                    let _ = launcher.stop(honeypot_id);
                    let alert = format!(
                        "honeypot {honeypot_id} quarantined after {MAX_RESTARTS_PER_HOUR} restarts within an hour"
                    );
                    log::error!("{alert}");
                    self.alerts.push(alert);
                }
            }
        }
    }

    /// Pulls new log lines from every honeypot and appends them to the
    /// manager's copy.
    pub fn gather(&mut self, launcher: &mut dyn HoneypotLauncher) -> usize {
        let mut lines = 0;
        for s in &self.statuses {
            match launcher.ship_logs(&s.honeypot_id) {
                Ok(shipped) => {
                    lines += shipped.log.lines().count();
                    let entry = self.logs.entry(s.honeypot_id.clone()).or_default();
                    entry.0.push_str(&shipped.log);
                    entry.1.push_str(&shipped.shares);
                }
                Err(e) => log::debug!("gather from {}: {e}", s.honeypot_id),
            }
        }
        lines
    }

    /// The gathered logs as complete per-honeypot files.
    pub fn sources(&self) -> Vec<LogSource> {
        self.plan
            .honeypots
            .iter()
            .map(|h| {
                let (log, shares) = self.logs.get(&h.id).cloned().unwrap_or_default();
                LogSource {
                    name: h.id.clone(),
                    log: format!("{}\n{log}", log_header(&h.id)),
                    shares: Some(format!("{}\n{shares}", shares_header(&h.id))),
                }
            })
            .collect()
    }

    pub fn merge(&self) -> Result<UnifiedOutput, MergeError> {
        gather_and_merge(&self.sources(), self.plan.filename_threshold)
    }

    pub fn stop_all(&mut self, launcher: &mut dyn HoneypotLauncher) {
        for s in &mut self.statuses {
            let _ = launcher.stop(&s.honeypot_id);
            s.connected = false;
        }
    }
}

fn apply_report(s: &mut HoneypotStatus, report: &StatusReport, now: Timestamp) {
    s.connected = report.connected;
    s.client_id = report.client_id;
    s.id_status = report.id_status;
    if report.connected {
        s.last_seen = s.last_seen.max(now);
        s.last_error = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::honeypot::Strategy;
    use crate::time::MINUTE_MS;

    #[derive(Default)]
    struct FakeLauncher {
        bad_server: Option<SocketAddrV4>,
        dead: Vec<String>,
        started: Vec<(String, SocketAddrV4)>,
    }

    impl HoneypotLauncher for FakeLauncher {
        fn start(&mut self, order: &StartOrder) -> Result<StatusReport, LaunchError> {
            self.started.push((order.honeypot_id.clone(), order.server));
            let ok = Some(order.server) != self.bad_server;
            Ok(StatusReport {
                honeypot_id: order.honeypot_id.clone(),
                connected: ok,
                client_id: ok.then_some(1 << 30),
                id_status: ok.then_some(IdStatus::High),
                shared_files: order.files.len(),
            })
        }
        fn poll(&mut self, id: &str) -> Result<StatusReport, LaunchError> {
            if self.dead.iter().any(|d| d == id) {
                return Err(LaunchError::NotRunning(id.into()));
            }
            Ok(StatusReport {
                honeypot_id: id.into(),
                connected: true,
                client_id: Some(1 << 30),
                id_status: Some(IdStatus::High),
                shared_files: 4,
            })
        }
        fn advertise(&mut self, _: &str, _: &[FileMeta]) -> Result<(), LaunchError> {
            Ok(())
        }
        fn ship_logs(&mut self, _: &str) -> Result<ShippedLogs, LaunchError> {
            Ok(ShippedLogs::default())
        }
        fn stop(&mut self, _: &str) -> Result<(), LaunchError> {
            Ok(())
        }
    }

    fn server() -> SocketAddrV4 {
        "10.0.0.1:4661".parse().unwrap()
    }

    #[test]
    fn launch_counts() {
        let plan = DeploymentPlan::distributed(12, 12, server(), vec![]);
        let mut m = Manager::new(plan, vec![]);
        let mut l = FakeLauncher::default();
        let st = m.launch(&mut l, Timestamp(0));
        assert_eq!(st.len(), 24);
        assert_eq!(st.iter().filter(|s| s.connected).count(), 24);
        let groups = m
            .plan()
            .honeypots
            .iter()
            .filter(|h| h.strategy == Strategy::NoContent)
            .count();
        assert_eq!(groups, 12);

        let mut empty = Manager::new(DeploymentPlan::default(), vec![]);
        assert!(empty.launch(&mut l, Timestamp(0)).is_empty());
    }

    #[test]
    fn bad_server_fails_one() {
        let mut plan = DeploymentPlan::distributed(12, 12, server(), vec![]);
        let bad: SocketAddrV4 = "10.9.9.9:1".parse().unwrap();
        plan.honeypots[5].server = Some(bad);
        let mut m = Manager::new(plan, vec![]);
        let mut l = FakeLauncher {
            bad_server: Some(bad),
            ..Default::default()
        };
        let st = m.launch(&mut l, Timestamp(0));
        assert_eq!(st.iter().filter(|s| s.connected).count(), 23);
        assert!(!st[5].connected);
    }

    #[test]
    fn supervise_fresh_and_stale() {
        let plan = DeploymentPlan::distributed(2, 1, server(), vec![]);
        let poll = plan.poll_interval_ms;
        let mut m = Manager::new(plan, vec![]);
        let mut l = FakeLauncher::default();
        m.launch(&mut l, Timestamp(0));
        assert!(m.supervise(Timestamp(poll)).is_empty());

        l.dead.push("hp02".into());
        let now = Timestamp(3 * poll + 1);
        m.poll_all(&mut l, now);
        let actions = m.supervise(now);
        assert_eq!(
            actions,
            vec![SupervisorAction::Restart {
                honeypot_id: "hp02".into(),
                server: Some(server())
            }]
        );
        m.apply(&actions, &mut l, now);
        assert_eq!(m.status("hp02").unwrap().restarts, 1);
    }

    #[test]
    fn restart_storm_quarantines() {
        let mut plan = DeploymentPlan::distributed(1, 0, server(), vec![]);
        plan.poll_interval_ms = MINUTE_MS;
        let mut m = Manager::new(plan, vec![]);
        let mut l = FakeLauncher {
            bad_server: Some(server()),
            ..Default::default()
        };
        m.launch(&mut l, Timestamp(0));
        let mut now = Timestamp(0);
        let mut restarts = 0;
        let mut quarantined = false;
        for _ in 0..6 {
            now = now.plus_ms(3 * MINUTE_MS + 1);
            let actions = m.supervise(now);
            assert_eq!(actions.len(), 1);
            if matches!(actions[0], SupervisorAction::Quarantine { .. }) {
                quarantined = true;
            } else {
                restarts += 1;
            }
            m.apply(&actions, &mut l, now);
        }
        assert_eq!(restarts, 5);
        assert!(quarantined);
        assert!(m.status("hp01").unwrap().quarantined);
        assert_eq!(m.alerts().len(), 1);
        assert!(m.supervise(now.plus_ms(HOUR_MS)).is_empty());
    }

    #[test]
    fn redirect_rotates_servers() {
        let mut plan = DeploymentPlan::distributed(1, 0, server(), vec![]);
        let other: SocketAddrV4 = "10.0.0.2:4661".parse().unwrap();
        plan.servers.push(other);
        plan.redirect = true;
        let mut m = Manager::new(plan, vec![]);
        let mut l = FakeLauncher {
            bad_server: Some(server()),
            ..Default::default()
        };
        m.launch(&mut l, Timestamp(0));
        let now = Timestamp(20 * MINUTE_MS);
        let actions = m.supervise(now);
        m.apply(&actions, &mut l, now);
        assert_eq!(l.started.last().unwrap().1, other);
        assert!(m.status("hp01").unwrap().connected);
    }

    #[test]
    fn catalog_refs_resolve() {
        let files = vec![FileMeta::new(crate::protocol::FileId([3; 16]), "x", 9)];
        let plan = DeploymentPlan::distributed(1, 0, server(), vec![FileRef::Catalog(0)]);
        let m = Manager::new(plan.clone(), files.clone());
        assert_eq!(m.resolve_files("hp01").unwrap(), files);
        let m = Manager::new(plan, vec![]);
        assert_eq!(m.resolve_files("hp01"), Err(LaunchError::CatalogRank(0)));
    }
}
