//! Merging honeypot logs into the unified, fully anonymized dataset.

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::anonymize::{anonymize_filenames, scrub_dotted_quads, IpToken, RenumberTable};
use crate::honeypot::log::{parse_log, parse_shares, UNIFIED_HEADER, UNIFIED_SHARES_HEADER};
use crate::honeypot::{LogRecord, ShareRecord};

/// One honeypot's collected output.
#[derive(Debug, Clone, Default)]
pub struct LogSource {
    pub name: String,
    pub log: String,
    pub shares: Option<String>,
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("source {0:?} is already a unified log; renumbering applies once")]
    AlreadyUnified(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub sources: usize,
    pub records: usize,
    pub shares: usize,
    pub malformed: usize,
    pub distinct_peers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct UnifiedOutput {
    pub records: Vec<LogRecord<u32>>,
    pub shares: Vec<ShareRecord<u32>>,
    pub report: MergeReport,
}

impl UnifiedOutput {
    pub fn log_text(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 160);
        s.push_str(UNIFIED_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    pub fn shares_text(&self) -> String {
        let mut s = String::with_capacity(self.shares.len() * 100);
        s.push_str(UNIFIED_SHARES_HEADER);
        s.push('\n');
        for r in &self.shares {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        s
    }

    /// Writes `unified.log` and `unified.shares` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("unified.log"), self.log_text())?;
        std::fs::write(dir.join("unified.shares"), self.shares_text())?;
        Ok(())
    }
}

/// Merges honeypot logs: records are ordered by (timestamp, honeypot id,
/// input order), peer tokens are renumbered coherently across all sources,
/// server addresses become `s0`, `s1`, ..., addresses inside peer names are
/// scrubbed, and rare filename words are masked.
pub fn gather_and_merge(
    sources: &[LogSource],
    filename_threshold: usize,
) -> Result<UnifiedOutput, MergeError> {
    let mut report = MergeReport {
        sources: sources.len(),
        ..MergeReport::default()
    };
    let mut records: Vec<LogRecord<IpToken>> = Vec::new();
    let mut shares: Vec<ShareRecord<IpToken>> = Vec::new();
    for src in sources {
        let parsed = parse_log::<IpToken>(&src.log);
        if parsed.unified {
            return Err(MergeError::AlreadyUnified(src.name.clone()));
        }
        report.malformed += parsed.malformed;
        records.extend(parsed.records);
        if let Some(text) = &src.shares {
            let parsed = parse_shares::<IpToken>(text);
            if parsed.unified {
                return Err(MergeError::AlreadyUnified(src.name.clone()));
            }
            report.malformed += parsed.malformed;
            shares.extend(parsed.records);
        }
    }
    if report.malformed > 0 {
        ::log::warn!("skipped {} malformed lines while merging", report.malformed);
    }

    // stable sorts keep input order among ties
    records.sort_by(|a, b| (a.timestamp, &a.honeypot_id).cmp(&(b.timestamp, &b.honeypot_id)));
    shares.sort_by(|a, b| (a.timestamp, &a.honeypot_id).cmp(&(b.timestamp, &b.honeypot_id)));

    let mut peers = RenumberTable::new();
    let mut servers = RenumberTable::new();
    let records: Vec<LogRecord<u32>> = records
        .into_iter()
        .map(|r| {
            let mut r = r.map_peer(|t| peers.assign(t));
            if !r.server_ip.is_empty() {
                r.server_ip = format!("s{}", servers.assign(std::mem::take(&mut r.server_ip)));
            }
            r.peer_name = r.peer_name.map(|n| scrub_dotted_quads(&n));
            r.server_name = scrub_dotted_quads(&r.server_name);
            r
        })
        .collect();
    // addresses would otherwise survive masking octet by octet
    let names: Vec<String> = shares
        .iter()
        .map(|s| scrub_dotted_quads(&s.file.name))
        .collect();
    let masked = anonymize_filenames(&names, filename_threshold);
    let shares: Vec<ShareRecord<u32>> = shares
        .into_iter()
        .zip(masked)
        .map(|(s, name)| {
            let mut s = s.map_peer(|t| peers.assign(t));
            s.file.name = name;
            s
        })
        .collect();

    report.records = records.len();
    report.shares = shares.len();
    report.distinct_peers = peers.len();
    Ok(UnifiedOutput {
        records,
        shares,
        report,
    })
}
