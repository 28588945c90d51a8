//! Metrics over a unified log: dataset summary, peer growth curves, hourly
//! activity, strategy comparison, single-peer timelines and subset
//! resampling.

pub mod resample;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::honeypot::log::{parse_log, parse_shares};
use crate::honeypot::{LogRecord, LoggedKind, ShareOwner, ShareRecord, Strategy};
use crate::protocol::FileId;
use crate::time::{Timestamp, DAY_MS, HOUR_MS};

pub use self::resample::{
    binomial, file_subset_curve, honeypot_subset_curve, random_file_set, resample_file_subsets,
    resample_honeypot_subsets, SubsetPoint,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("input is not a unified log (missing unified header)")]
    NotUnified,
    #[error("subset size {n} exceeds the {total} available")]
    SubsetTooLarge { n: usize, total: usize },
    #[error("bucket width must be positive")]
    ZeroBucket,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Time-sorted records with dense integer peer ids, plus the shared-list
/// side records.
#[derive(Debug, Clone, Default)]
pub struct UnifiedLog {
    pub records: Vec<LogRecord<u32>>,
    pub shares: Vec<ShareRecord<u32>>,
    pub malformed: usize,
}

impl UnifiedLog {
    /// Sorts both streams by timestamp (stable).
    pub fn new(mut records: Vec<LogRecord<u32>>, mut shares: Vec<ShareRecord<u32>>) -> UnifiedLog {
        records.sort_by_key(|r| r.timestamp);
        shares.sort_by_key(|s| s.timestamp);
        UnifiedLog {
            records,
            shares,
            malformed: 0,
        }
    }

    pub fn from_text(log: &str, shares: Option<&str>) -> Result<UnifiedLog, AnalysisError> {
        let parsed = parse_log::<u32>(log);
        if !parsed.unified {
            return Err(AnalysisError::NotUnified);
        }
        let mut malformed = parsed.malformed;
        let share_records = match shares {
            Some(text) => {
                let s = parse_shares::<u32>(text);
                if !s.unified {
                    return Err(AnalysisError::NotUnified);
                }
                malformed += s.malformed;
                s.records
            }
            None => Vec::new(),
        };
        let mut out = UnifiedLog::new(parsed.records, share_records);
        out.malformed = malformed;
        Ok(out)
    }

    /// Reads `path` and, when present, the `.shares` file next to it.
    pub fn load(path: &Path) -> Result<UnifiedLog, AnalysisError> {
        let log = std::fs::read_to_string(path)?;
        let shares_path = path.with_extension("shares");
        let shares = if shares_path.is_file() {
            Some(std::fs::read_to_string(shares_path)?)
        } else {
            None
        };
        UnifiedLog::from_text(&log, shares.as_deref())
    }

    /// Honeypot ids seen in either stream, sorted.
    pub fn honeypots(&self) -> Vec<String> {
        let mut ids: BTreeSet<&str> = self
            .records
            .iter()
            .map(|r| r.honeypot_id.as_str())
            .collect();
        ids.extend(self.shares.iter().map(|s| s.honeypot_id.as_str()));
        ids.into_iter().map(str::to_string).collect()
    }

    /// One more than the largest peer id.
    pub fn peer_space(&self) -> usize {
        let r = self
            .records
            .iter()
            .map(|r| r.peer as usize + 1)
            .max()
            .unwrap_or(0);
        let s = self
            .shares
            .iter()
            .filter_map(|s| match s.owner {
                ShareOwner::Peer(p) => Some(p as usize + 1),
                ShareOwner::Honeypot => None,
            })
            .max()
            .unwrap_or(0);
        r.max(s)
    }

    fn first_last(&self) -> Option<(Timestamp, Timestamp)> {
        Some((
            self.records.first()?.timestamp,
            self.records.last()?.timestamp,
        ))
    }
}

/// A numeric series; `min`/`max` bands exist only for resampled series.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub avg: Vec<f64>,
    pub min: Option<Vec<f64>>,
    pub max: Option<Vec<f64>>,
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

impl AnalysisSeries {
    pub fn plain(label: impl Into<String>, x: Vec<f64>, avg: Vec<f64>) -> AnalysisSeries {
        AnalysisSeries {
            label: label.into(),
            x,
            avg,
            min: None,
            max: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `x,avg` or `x,avg,min,max`.
    pub fn to_csv(&self) -> String {
        let bands = self.min.as_ref().zip(self.max.as_ref());
        let mut s = String::from(if bands.is_some() {
            "x,avg,min,max\n"
        } else {
            "x,avg\n"
        });
        for i in 0..self.x.len() {
            let _ = write!(s, "{},{}", fmt_num(self.x[i]), fmt_num(self.avg[i]));
            if let Some((lo, hi)) = bands {
                let _ = write!(s, ",{},{}", fmt_num(lo[i]), fmt_num(hi[i]));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Summary {
    pub n_honeypots: usize,
    pub duration_days: u64,
    pub n_shared_files: usize,
    pub n_distinct_peers: usize,
    pub n_distinct_files: usize,
    pub total_distinct_file_bytes: u64,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nn_honeypots,{}\nduration_days,{}\nn_shared_files,{}\nn_distinct_peers,{}\nn_distinct_files,{}\ntotal_distinct_file_bytes,{}\n",
            self.n_honeypots,
            self.duration_days,
            self.n_shared_files,
            self.n_distinct_peers,
            self.n_distinct_files,
            self.total_distinct_file_bytes
        )
    }
}

/// Dataset statistics. Files count once per file id whether they were
/// queried or only listed by a peer; sizes come from shared-list records.
pub fn summary_table(log: &UnifiedLog) -> Summary {
    let Some((first, last)) = log.first_last() else {
        return Summary::default();
    };
    let mut peers: BTreeSet<u32> = log.records.iter().map(|r| r.peer).collect();
    let mut shared = BTreeSet::new();
    let mut files: BTreeSet<FileId> = log.records.iter().filter_map(|r| r.file_id).collect();
    let mut sizes: BTreeMap<FileId, u64> = BTreeMap::new();
    for s in &log.shares {
        sizes.entry(s.file.file_id).or_insert(s.file.size);
        match s.owner {
            ShareOwner::Honeypot => {
                shared.insert(s.file.file_id);
            }
            ShareOwner::Peer(p) => {
                peers.insert(p);
                files.insert(s.file.file_id);
            }
        }
    }
    Summary {
        n_honeypots: log.honeypots().len(),
        duration_days: last.day_index() - first.day_index() + 1,
        n_shared_files: shared.len(),
        n_distinct_peers: peers.len(),
        n_distinct_files: files.len(),
        total_distinct_file_bytes: files.iter().filter_map(|f| sizes.get(f)).sum(),
    }
}

/// Bucket grid: bucket `k` covers `[origin + k*w, origin + (k+1)*w)` with
/// the origin floored to a multiple of `w` (UTC midnight for day buckets).
fn grid(log: &UnifiedLog, bucket_ms: u64) -> Result<Option<(u64, usize)>, AnalysisError> {
    if bucket_ms == 0 {
        return Err(AnalysisError::ZeroBucket);
    }
    Ok(log.first_last().map(|(first, last)| {
        let origin = first.0 - first.0 % bucket_ms;
        (origin, ((last.0 - origin) / bucket_ms) as usize + 1)
    }))
}

fn xs(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

/// Cumulative distinct peers at the end of each bucket.
pub fn distinct_peers_over_time(
    log: &UnifiedLog,
    bucket_ms: u64,
) -> Result<AnalysisSeries, AnalysisError> {
    let Some((origin, n)) = grid(log, bucket_ms)? else {
        return Ok(AnalysisSeries::plain("distinct-peers", vec![], vec![]));
    };
    let mut seen = BTreeSet::new();
    let mut avg = vec![0.0; n];
    let mut k = 0;
    for r in &log.records {
        let b = ((r.timestamp.0 - origin) / bucket_ms) as usize;
        while k < b {
            avg[k] = seen.len() as f64;
            k += 1;
        }
        seen.insert(r.peer);
    }
    while k < n {
        avg[k] = seen.len() as f64;
        k += 1;
    }
    Ok(AnalysisSeries::plain("distinct-peers", xs(n), avg))
}

/// Peers seen for the first time on each UTC day.
pub fn new_peers_per_day(log: &UnifiedLog) -> AnalysisSeries {
    let cumulative = distinct_peers_over_time(log, DAY_MS).expect("day bucket is positive");
    let mut prev = 0.0;
    let avg = cumulative
        .avg
        .iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect();
    AnalysisSeries::plain("new-peers-per-day", cumulative.x, avg)
}

/// Messages of `kind` per hour (counts, not distinct peers).
pub fn hourly_message_counts(log: &UnifiedLog, kind: LoggedKind) -> AnalysisSeries {
    let label = format!("hourly-{kind}");
    let Some((origin, n)) = grid(log, HOUR_MS).expect("hour bucket is positive") else {
        return AnalysisSeries::plain(label, vec![], vec![]);
    };
    let mut avg = vec![0.0; n];
    for r in log.records.iter().filter(|r| r.kind == kind) {
        avg[((r.timestamp.0 - origin) / HOUR_MS) as usize] += 1.0;
    }
    AnalysisSeries::plain(label, xs(n), avg)
}

/// Mean count of `kind` messages per UTC hour of day (24 points), over
/// the days the log spans.
pub fn hour_of_day_profile(log: &UnifiedLog, kind: LoggedKind) -> AnalysisSeries {
    let mut sums = vec![0.0; 24];
    let days = log
        .first_last()
        .map_or(0, |(a, b)| b.day_index() - a.day_index() + 1)
        .max(1) as f64;
    for r in log.records.iter().filter(|r| r.kind == kind) {
        sums[((r.timestamp.0 % DAY_MS) / HOUR_MS) as usize] += 1.0;
    }
    AnalysisSeries::plain(
        format!("hour-of-day-{kind}"),
        xs(24),
        sums.into_iter().map(|s| s / days).collect(),
    )
}

/// Circular mean of the record times of day, in hours `[0, 24)`; `None`
/// when undefined.
pub fn circular_mean_hour(log: &UnifiedLog, kind: Option<LoggedKind>) -> Option<f64> {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for r in log
        .records
        .iter()
        .filter(|r| kind.is_none_or(|k| r.kind == k))
    {
        let angle = 2.0 * std::f64::consts::PI * (r.timestamp.0 % DAY_MS) as f64 / DAY_MS as f64;
        s += angle.sin();
        c += angle.cos();
    }
    if s.hypot(c) < 1e-9 {
        return None;
    }
    let h = s.atan2(c).rem_euclid(2.0 * std::f64::consts::PI) * 24.0 / (2.0 * std::f64::consts::PI);
    Some(h % 24.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    DistinctPeers,
    MessageCount,
}

fn group_index(s: Strategy) -> usize {
    match s {
        Strategy::NoContent => 0,
        Strategy::RandomContent => 1,
    }
}

fn group_label(i: usize) -> &'static str {
    if i == 0 {
        Strategy::NoContent.as_str()
    } else {
        Strategy::RandomContent.as_str()
    }
}

/// Cumulative series for the no-content and random-content groups (in that
/// order). Honeypots missing from `groups` are ignored. A peer counts once
/// per group in distinct mode.
pub fn per_strategy_series(
    log: &UnifiedLog,
    groups: &BTreeMap<String, Strategy>,
    kind: LoggedKind,
    mode: CountMode,
    bucket_ms: u64,
) -> Result<[AnalysisSeries; 2], AnalysisError> {
    let labels = |i: usize| format!("{}-{}", group_label(i), kind);
    let Some((origin, n)) = grid(log, bucket_ms)? else {
        return Ok([0, 1].map(|i| AnalysisSeries::plain(labels(i), vec![], vec![])));
    };
    let mut increments = [vec![0.0; n], vec![0.0; n]];
    let mut seen: [BTreeSet<u32>; 2] = Default::default();
    for r in log.records.iter().filter(|r| r.kind == kind) {
        let Some(&s) = groups.get(&r.honeypot_id) else {
            continue;
        };
        let g = group_index(s);
        let b = ((r.timestamp.0 - origin) / bucket_ms) as usize;
        let counts = match mode {
            CountMode::DistinctPeers => seen[g].insert(r.peer),
            CountMode::MessageCount => true,
        };
        if counts {
            increments[g][b] += 1.0;
        }
    }
    Ok([0, 1].map(|g| {
        let mut acc = 0.0;
        let avg = increments[g]
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        AnalysisSeries::plain(labels(g), xs(n), avg)
    }))
}

/// Per-honeypot count of distinct peers sending `kind`.
pub fn distinct_peers_per_honeypot(log: &UnifiedLog, kind: LoggedKind) -> BTreeMap<String, usize> {
    let mut sets: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for r in log.records.iter().filter(|r| r.kind == kind) {
        sets.entry(r.honeypot_id.as_str())
            .or_default()
            .insert(r.peer);
    }
    sets.into_iter()
        .map(|(k, v)| (k.to_string(), v.len()))
        .collect()
}

/// Per-honeypot message count of `kind`.
pub fn messages_per_honeypot(log: &UnifiedLog, kind: LoggedKind) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in log.records.iter().filter(|r| r.kind == kind) {
        *counts.entry(r.honeypot_id.clone()).or_insert(0) += 1;
    }
    counts
}

/// The peer that sent the most logged messages; ties go to the lower id.
pub fn top_peer(log: &UnifiedLog) -> Option<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &log.records {
        *counts.entry(r.peer).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(p, _)| p)
}

/// Cumulative messages of `kind` from `peer` to each strategy group.
pub fn single_peer_timeline(
    log: &UnifiedLog,
    groups: &BTreeMap<String, Strategy>,
    peer: u32,
    kind: LoggedKind,
    bucket_ms: u64,
) -> Result<[AnalysisSeries; 2], AnalysisError> {
    let Some((origin, n)) = grid(log, bucket_ms)? else {
        return Ok([0, 1].map(|i| {
            AnalysisSeries::plain(format!("peer{peer}-{}", group_label(i)), vec![], vec![])
        }));
    };
    let mut inc = [vec![0.0; n], vec![0.0; n]];
    for r in log
        .records
        .iter()
        .filter(|r| r.peer == peer && r.kind == kind)
    {
        let Some(&s) = groups.get(&r.honeypot_id) else {
            continue;
        };
        inc[group_index(s)][((r.timestamp.0 - origin) / bucket_ms) as usize] += 1.0;
    }
    Ok([0, 1].map(|g| {
        let mut acc = 0.0;
        let avg = inc[g]
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        AnalysisSeries::plain(format!("peer{peer}-{}", group_label(g)), xs(n), avg)
    }))
}

/// Maximal runs of buckets over which a cumulative series does not grow,
/// as `(first_x, last_x)` pairs of the flat stretch.
pub fn plateaus(series: &AnalysisSeries) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 1..series.avg.len() {
        let flat = series.avg[i] == series.avg[i - 1];
        match (flat, start) {
            (true, None) => start = Some(i - 1),
            (false, Some(s)) => {
                out.push((series.x[s], series.x[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((series.x[s], series.x[series.avg.len() - 1]));
    }
    out
}

/// Distinct querying peers per file (StartUpload and RequestPart).
pub fn peers_per_file(log: &UnifiedLog) -> BTreeMap<FileId, BTreeSet<u32>> {
    let mut map: BTreeMap<FileId, BTreeSet<u32>> = BTreeMap::new();
    for r in &log.records {
        if let Some(f) = r.file_id {
            map.entry(f).or_default().insert(r.peer);
        }
    }
    map
}

/// The `k` files queried by the most distinct peers; ties by file id.
pub fn top_files_by_peers(log: &UnifiedLog, k: usize) -> Vec<FileId> {
    let mut ranked: Vec<(usize, FileId)> = peers_per_file(log)
        .into_iter()
        .map(|(f, p)| (p.len(), f))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, f)| f).collect()
}

/// `top_files_by_peers` with counts, as CSV `rank,file_id,peers`.
pub fn top_files_csv(log: &UnifiedLog, k: usize) -> String {
    let per = peers_per_file(log);
    let mut s = String::from("rank,file_id,peers\n");
    for (i, f) in top_files_by_peers(log, k).iter().enumerate() {
        let _ = writeln!(s, "{i},{f},{}", per[f].len());
    }
    s
}
