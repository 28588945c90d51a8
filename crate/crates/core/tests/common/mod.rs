//! Generators, oracles and experiment drivers shared by the integration
//! tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hnl_core::analysis::{self, CountMode, UnifiedLog};
use hnl_core::anonymize::{CampaignSalt, IpHasher, IpToken};
use hnl_core::honeypot::log::{log_header, shares_header};
use hnl_core::honeypot::{LogRecord, LoggedKind, ShareOwner, ShareRecord, Strategy};
use hnl_core::manager::{gather_and_merge, LogSource};
use hnl_core::protocol::{
    decode_message, encode_message, ByteRange, FileId, FileMeta, Hello, IdStatus, Message, PeerId,
    UserId,
};
use hnl_core::simnet::{distributed_plan, run_simulation, strategy_groups, SimConfig, SimOutput};
use hnl_core::time::Timestamp;

// ---------------------------------------------------------------- codec

fn random_string(rng: &mut impl Rng) -> String {
    let len = rng.random_range(0..40);
    (0..len)
        .map(|_| match rng.random_range(0..10) {
            0 => char::from_u32(rng.random_range(0x80..0x2000)).unwrap_or('?'),
            1 => '\t',
            _ => rng.random_range(b' '..=b'~') as char,
        })
        .collect()
}

fn random_file(rng: &mut impl Rng) -> FileMeta {
    FileMeta::new(
        FileId(rng.random()),
        random_string(rng),
        rng.random_range(1..u64::MAX),
    )
}

fn random_hello(rng: &mut impl Rng) -> Hello {
    Hello {
        peer: PeerId::new(UserId(rng.random()), rng.random()),
        port: rng.random(),
        client_name: random_string(rng),
        client_version: rng.random(),
    }
}

/// A valid message of a uniformly chosen kind.
pub fn random_message(rng: &mut impl Rng) -> Message {
    match rng.random_range(0..9) {
        0 => Message::Hello(random_hello(rng)),
        1 => Message::HelloAnswer(random_hello(rng)),
        2 => Message::OfferFiles(
            (0..rng.random_range(0..8))
                .map(|_| random_file(rng))
                .collect(),
        ),
        3 => Message::StartUpload(FileId(rng.random())),
        4 => Message::AcceptUpload(FileId(rng.random())),
        5 => Message::RequestPart {
            file_id: FileId(rng.random()),
            ranges: (0..rng.random_range(1..6))
                .map(|_| ByteRange::new(rng.random(), rng.random_range(1..=u32::MAX)))
                .collect(),
        },
        6 => {
            let mut data = vec![0u8; rng.random_range(0..2048)];
            rng.fill_bytes(&mut data);
            Message::SendPart {
                file_id: FileId(rng.random()),
                offset: rng.random(),
                data,
            }
        }
        7 => Message::AskSharedList,
        _ => Message::SharedListAnswer(
            (0..rng.random_range(0..8))
                .map(|_| random_file(rng))
                .collect(),
        ),
    }
}

/// Number of generated messages whose encode/decode round trip is not the
/// identity (or whose frame length disagrees with its header).
pub fn codec_round_trip_failures(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..n {
        let msg = random_message(&mut rng);
        let ok = encode_message(&msg).ok().is_some_and(|frame| {
            let declared = u32::from_le_bytes(frame[1..5].try_into().unwrap()) as usize;
            frame[0] == 0xE3
                && declared == frame.len() - 5
                && decode_message(&frame).as_ref() == Ok(&msg)
        });
        if !ok {
            failures += 1;
        }
    }
    failures
}

/// An arbitrary byte string of at most 1 MiB: pure noise, plausible frames
/// with random payloads, or mutated valid frames.
pub fn fuzz_input(rng: &mut impl Rng) -> Vec<u8> {
    let max = 1usize << 20;
    // log-uniform length so both tiny and huge inputs show up
    let len = ((2f64).powf(rng.random_range(0.0..20.0)) as usize).min(max);
    match rng.random_range(0..4) {
        0 => {
            let mut v = vec![0u8; len];
            rng.fill_bytes(&mut v);
            v
        }
        1 => {
            let mut v = vec![0u8; len.max(6)];
            rng.fill_bytes(&mut v);
            v[0] = 0xE3;
            let n = (v.len() - 5) as u32;
            v[1..5].copy_from_slice(&n.to_le_bytes());
            v[5] = [0x01, 0x4C, 0x15, 0x54, 0x55, 0x47, 0x46, 0x4A, 0x4B][rng.random_range(0..9)];
            v
        }
        2 => {
            let mut v = encode_message(&random_message(rng)).unwrap();
            for _ in 0..rng.random_range(1..8) {
                let i = rng.random_range(0..v.len());
                v[i] ^= 1 << rng.random_range(0..8);
            }
            v
        }
        _ => {
            let mut v = encode_message(&random_message(rng)).unwrap();
            let cut = rng.random_range(0..=v.len());
            if rng.random_bool(0.5) {
                v.truncate(cut);
            } else {
                v.extend(std::iter::repeat_n(0xAB, cut % 64 + 1));
            }
            v
        }
    }
}

/// Decodes `n` fuzz inputs; returns how many panicked.
pub fn fuzz_decode_panics(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut panics = 0;
    for _ in 0..n {
        let input = fuzz_input(&mut rng);
        if std::panic::catch_unwind(|| {
            let _ = decode_message(&input);
            let _ = hnl_core::protocol::frame_length(&input);
        })
        .is_err()
        {
            panics += 1;
        }
    }
    panics
}

// ---------------------------------------------------------------- anonymization

pub struct AnonCorpus {
    pub sources: Vec<LogSource>,
    /// IP behind every record, keyed by its (unique) timestamp.
    pub ip_at: HashMap<u64, Ipv4Addr>,
    pub distinct_ips: usize,
}

/// `n_records` records over `n_ips` addresses spread across `n_logs`
/// honeypot logs. Timestamps are unique so merged records can be traced
/// back to their source. Peer names and shares embed raw addresses.
pub fn anon_corpus(n_records: usize, n_ips: usize, n_logs: usize, seed: u64) -> AnonCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hasher = IpHasher::new(CampaignSalt::from_seed(seed));
    let mut ips = BTreeSet::new();
    while ips.len() < n_ips {
        ips.insert(Ipv4Addr::from(rng.random::<u32>()));
    }
    let ips: Vec<Ipv4Addr> = ips.into_iter().collect();
    let mut times: BTreeSet<u64> = BTreeSet::new();
    while times.len() < n_records {
        times.insert(1_222_819_200_000 + rng.random_range(0..7 * 86_400_000));
    }
    let mut times: Vec<u64> = times.into_iter().collect();
    // shuffle so every log is internally unsorted too
    for i in (1..times.len()).rev() {
        times.swap(i, rng.random_range(0..=i));
    }
    let mut logs: Vec<(String, String)> = (0..n_logs)
        .map(|i| {
            let id = format!("hp{:02}", i + 1);
            (
                format!("{}\n", log_header(&id)),
                format!("{}\n", shares_header(&id)),
            )
        })
        .collect();
    let mut ip_at = HashMap::new();
    for (k, &ts) in times.iter().enumerate() {
        // every address is used at least once
        let ip = if k < n_ips {
            ips[k]
        } else {
            ips[rng.random_range(0..n_ips)]
        };
        ip_at.insert(ts, ip);
        let h = rng.random_range(0..n_logs);
        let id = format!("hp{:02}", h + 1);
        let kind = LoggedKind::ALL[rng.random_range(0..3)];
        let rec = LogRecord {
            timestamp: Timestamp(ts),
            honeypot_id: id.clone(),
            kind,
            peer: hasher.hash_ip(ip),
            peer_port: 4662,
            peer_name: Some(format!("eMule user@{ip}")),
            peer_user_id: Some(UserId(rng.random())),
            client_version: Some(60),
            id_status: Some(IdStatus::High),
            server_name: "big server".into(),
            server_ip: format!("192.168.{}.1", h % 3),
            server_port: 4661,
            file_id: (kind != LoggedKind::Hello).then_some(FileId([h as u8; 16])),
            ranges: (kind == LoggedKind::RequestPart).then(|| vec![ByteRange::new(0, 10240)]),
        };
        logs[h].0.push_str(&rec.to_line());
        logs[h].0.push('\n');
        if k % 50 == 0 {
            let share = ShareRecord {
                timestamp: Timestamp(ts),
                honeypot_id: id,
                owner: ShareOwner::Peer(hasher.hash_ip(ip)),
                file: FileMeta::new(
                    FileId(rng.random()),
                    format!("copy from {ip} common words.avi"),
                    1000,
                ),
            };
            logs[h].1.push_str(&share.to_line());
            logs[h].1.push('\n');
        }
    }
    AnonCorpus {
        sources: logs
            .into_iter()
            .enumerate()
            .map(|(i, (log, shares))| LogSource {
                name: format!("hp{:02}", i + 1),
                log,
                shares: Some(shares),
            })
            .collect(),
        ip_at,
        distinct_ips: n_ips,
    }
}

/// Every property the merged corpus must have; returns the violations.
pub fn anonymization_violations(c: &AnonCorpus) -> Vec<String> {
    let mut bad = Vec::new();
    let out = match gather_and_merge(&c.sources, 5) {
        Ok(o) => o,
        Err(e) => return vec![format!("merge failed: {e}")],
    };
    let n_in: usize = c.sources.iter().map(|s| s.log.lines().count() - 1).sum();
    if out.records.len() != n_in {
        bad.push(format!("{} records in, {} out", n_in, out.records.len()));
    }
    // dense and first-occurrence ordered
    let mut next = 0u32;
    for r in &out.records {
        if r.peer > next {
            bad.push(format!("id {} appears before id {next}", r.peer));
            break;
        }
        if r.peer == next {
            next += 1;
        }
    }
    if next as usize != c.distinct_ips {
        bad.push(format!("{next} ids for {} addresses", c.distinct_ips));
    }
    // partitions by address and by id must coincide
    let mut by_ip: BTreeMap<Ipv4Addr, BTreeSet<u64>> = BTreeMap::new();
    let mut by_id: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    for r in &out.records {
        let ts = r.timestamp.0;
        by_ip.entry(c.ip_at[&ts]).or_default().insert(ts);
        by_id.entry(r.peer).or_default().insert(ts);
    }
    let a: BTreeSet<&BTreeSet<u64>> = by_ip.values().collect();
    let b: BTreeSet<&BTreeSet<u64>> = by_id.values().collect();
    if a != b {
        bad.push("equal address and equal id do not coincide".into());
    }
    let text = format!("{}{}", out.log_text(), out.shares_text());
    let quad = regex::Regex::new(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}").unwrap();
    if let Some(m) = quad.find(&text) {
        bad.push(format!("dotted quad {:?} left in output", m.as_str()));
    }
    bad
}

/// The `[a, b, a, c] -> [0, 1, 0, 2]` fixture through the full merge.
pub fn renumber_fixture() -> Vec<u32> {
    let hasher = IpHasher::new(CampaignSalt([9; 32]));
    let ips = ["10.0.0.1", "10.0.0.2", "10.0.0.1", "10.0.0.3"];
    let mut log = format!("{}\n", log_header("hp01"));
    for (i, ip) in ips.iter().enumerate() {
        let rec = LogRecord {
            timestamp: Timestamp(1000 + i as u64),
            honeypot_id: "hp01".into(),
            kind: LoggedKind::Hello,
            peer: hasher.hash_ip(ip.parse().unwrap()),
            peer_port: 1,
            peer_name: None,
            peer_user_id: None,
            client_version: None,
            id_status: None,
            server_name: "s".into(),
            server_ip: "10.9.9.9".into(),
            server_port: 1,
            file_id: None,
            ranges: None,
        };
        log.push_str(&rec.to_line());
        log.push('\n');
    }
    let out = gather_and_merge(
        &[LogSource {
            name: "hp01".into(),
            log,
            shares: None,
        }],
        5,
    )
    .unwrap();
    out.records.iter().map(|r| r.peer).collect()
}

pub fn token_of(ip: &str) -> IpToken {
    IpHasher::new(CampaignSalt([9; 32])).hash_ip(ip.parse().unwrap())
}

// ---------------------------------------------------------------- golden log

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden")
}

pub fn golden_log() -> UnifiedLog {
    UnifiedLog::load(&golden_dir().join("golden.log")).expect("golden log loads")
}

pub fn golden_groups() -> BTreeMap<String, Strategy> {
    let text = std::fs::read_to_string(golden_dir().join("plan.txt")).unwrap();
    strategy_groups(&hnl_core::manager::DeploymentPlan::parse(&text).unwrap())
}

/// `(expected file, computed CSV)` for every golden output.
pub fn golden_outputs() -> Vec<(String, String)> {
    let log = golden_log();
    let groups = golden_groups();
    let hour = 3_600_000;
    let mut out = vec![
        (
            "summary.csv".to_string(),
            analysis::summary_table(&log).to_csv(),
        ),
        (
            "distinct-peers.csv".into(),
            analysis::distinct_peers_over_time(&log, hour)
                .unwrap()
                .to_csv(),
        ),
        (
            "new-peers-per-day.csv".into(),
            analysis::new_peers_per_day(&log).to_csv(),
        ),
        ("top-files.csv".into(), analysis::top_files_csv(&log, 20)),
    ];
    for kind in [LoggedKind::Hello, LoggedKind::RequestPart] {
        out.push((
            format!("hourly-{kind}.csv"),
            analysis::hourly_message_counts(&log, kind).to_csv(),
        ));
    }
    for (mode, tag, kind) in [
        (CountMode::DistinctPeers, "distinct", LoggedKind::Hello),
        (CountMode::MessageCount, "messages", LoggedKind::RequestPart),
    ] {
        for s in analysis::per_strategy_series(&log, &groups, kind, mode, hour).unwrap() {
            out.push((format!("strategy-{tag}-{}.csv", s.label), s.to_csv()));
        }
    }
    out
}

/// Names of golden outputs that differ from the oracle's files.
pub fn golden_mismatches() -> Vec<String> {
    let dir = golden_dir().join("expected");
    golden_outputs()
        .into_iter()
        .filter(|(name, got)| std::fs::read_to_string(dir.join(name)).ok().as_ref() != Some(got))
        .map(|(name, _)| name)
        .collect()
}

// ---------------------------------------------------------------- resampling

fn toy_record(ts: u64, hp: &str, peer: u32, file: Option<u8>) -> LogRecord<u32> {
    LogRecord {
        timestamp: Timestamp(ts),
        honeypot_id: hp.into(),
        kind: if file.is_some() {
            LoggedKind::StartUpload
        } else {
            LoggedKind::Hello
        },
        peer,
        peer_port: 1,
        peer_name: None,
        peer_user_id: None,
        client_version: None,
        id_status: None,
        server_name: "s".into(),
        server_ip: "s0".into(),
        server_port: 1,
        file_id: file.map(|f| FileId([f; 16])),
        ranges: None,
    }
}

/// Four honeypots, six files, twelve peers with overlapping interests.
pub fn toy_log() -> UnifiedLog {
    let hp_peers: [&[u32]; 4] = [&[0, 1, 2, 3], &[2, 3, 4], &[5, 6, 0], &[7, 8, 9, 10, 11, 1]];
    let file_peers: [&[u32]; 6] = [
        &[0, 1],
        &[1, 2, 3, 4],
        &[5],
        &[6, 7, 8],
        &[0, 9],
        &[10, 11, 2, 5],
    ];
    let mut recs = Vec::new();
    let mut ts = 0;
    for (h, peers) in hp_peers.iter().enumerate() {
        for &p in *peers {
            ts += 1;
            recs.push(toy_record(ts, &format!("h{h}"), p, None));
        }
    }
    for (f, peers) in file_peers.iter().enumerate() {
        for (i, &p) in peers.iter().enumerate() {
            ts += 1;
            // file queries go to a honeypot that already saw the peer
            let h = hp_peers.iter().position(|s| s.contains(&p)).unwrap();
            recs.push(toy_record(
                ts + i as u64,
                &format!("h{h}"),
                p,
                Some(f as u8),
            ));
        }
    }
    UnifiedLog::new(recs, vec![])
}

/// Exact avg/min/max of union sizes over all `n`-subsets, by bitmask.
pub fn brute_subsets(sets: &[BTreeSet<u32>], n: usize) -> (f64, f64, f64) {
    let mut sizes = Vec::new();
    for mask in 0u32..(1 << sets.len()) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let mut u = BTreeSet::new();
        for (i, s) in sets.iter().enumerate() {
            if mask & (1 << i) != 0 {
                u.extend(s.iter().copied());
            }
        }
        sizes.push(u.len() as f64);
    }
    let avg = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let min = sizes.iter().cloned().fold(f64::MAX, f64::min);
    let max = sizes.iter().cloned().fold(0.0, f64::max);
    (avg, min, max)
}

/// Mismatches between exhaustive resampling and the bitmask oracle on
/// the toy log, for honeypot and file subsets.
pub fn toy_resampling_mismatches() -> Vec<String> {
    let log = toy_log();
    let mut bad = Vec::new();
    let mut hp_sets: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    let mut file_sets: BTreeMap<FileId, BTreeSet<u32>> = BTreeMap::new();
    for r in &log.records {
        hp_sets.entry(&r.honeypot_id).or_default().insert(r.peer);
        if let Some(f) = r.file_id {
            file_sets.entry(f).or_default().insert(r.peer);
        }
    }
    let hp: Vec<BTreeSet<u32>> = hp_sets.into_values().collect();
    let files: Vec<FileId> = file_sets.keys().copied().collect();
    let fs: Vec<BTreeSet<u32>> = file_sets.into_values().collect();
    if hp.len() != 4 || fs.len() != 6 {
        bad.push(format!(
            "toy log has {} honeypots and {} files",
            hp.len(),
            fs.len()
        ));
    }
    for n in 0..=hp.len() {
        let p = analysis::resample_honeypot_subsets(&log, n, 1000, 3).unwrap();
        let want = if n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            brute_subsets(&hp, n)
        };
        if !p.exhaustive || (p.avg, p.min, p.max) != want {
            bad.push(format!("honeypots n={n}: got {p:?}, want {want:?}"));
        }
    }
    for n in 0..=fs.len() {
        let p = analysis::resample_file_subsets(&log, &files, n, 1000, 3).unwrap();
        let want = if n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            brute_subsets(&fs, n)
        };
        if !p.exhaustive || (p.avg, p.min, p.max) != want {
            bad.push(format!("files n={n}: got {p:?}, want {want:?}"));
        }
    }
    bad
}

/// `avg(0) = 0` and `avg(N) = ` all peers seen by the honeypots.
pub fn endpoint_violations(log: &UnifiedLog, trials: usize, seed: u64) -> Vec<String> {
    let curve = analysis::honeypot_subset_curve(log, trials, seed);
    let total = log
        .records
        .iter()
        .map(|r| r.peer)
        .collect::<BTreeSet<_>>()
        .len() as f64;
    let mut bad = Vec::new();
    if curve.avg.first() != Some(&0.0) {
        bad.push(format!("avg(0) = {:?}", curve.avg.first()));
    }
    if curve.avg.last() != Some(&total) {
        bad.push(format!("avg(N) = {:?}, total {total}", curve.avg.last()));
    }
    bad
}

// ---------------------------------------------------------------- simulation

pub const HOUR_MS: u64 = 3_600_000;

/// The 12 + 12 honeypot deployment with default downloader settings.
pub fn strategy_run(seed: u64, amplitude: Option<f64>) -> SimOutput {
    let mut cfg = SimConfig {
        seed,
        ..SimConfig::default()
    };
    if let Some(a) = amplitude {
        cfg.diurnal_amplitude = a;
    }
    run_simulation(&cfg, &distributed_plan(12, 12, 4)).expect("simulation runs")
}

/// Runs `f` for each seed on its own thread (simulations are independent).
pub fn par_map<T: Send>(seeds: &[u64], f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let f = &f;
                s.spawn(move || f(seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker"))
            .collect()
    })
}

pub fn unified(out: &SimOutput) -> UnifiedLog {
    UnifiedLog::new(out.unified.records.clone(), out.unified.shares.clone())
}

#[derive(Debug, Clone, Copy)]
pub struct StrategyOutcome {
    /// Mean distinct Hello peers per honeypot, no-content then random.
    pub distinct: [f64; 2],
    /// Total RequestPart messages per group.
    pub requests: [usize; 2],
}

pub fn strategy_outcome(out: &SimOutput) -> StrategyOutcome {
    let log = unified(out);
    let groups = strategy_groups(&out.plan);
    let dp = analysis::distinct_peers_per_honeypot(&log, LoggedKind::Hello);
    let rp = analysis::messages_per_honeypot(&log, LoggedKind::RequestPart);
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    let mut requests = [0usize; 2];
    for (id, s) in &groups {
        let g = usize::from(*s == Strategy::RandomContent);
        sums[g] += *dp.get(id).unwrap_or(&0) as f64;
        counts[g] += 1;
        requests[g] += *rp.get(id).unwrap_or(&0);
    }
    StrategyOutcome {
        distinct: [
            sums[0] / counts[0].max(1) as f64,
            sums[1] / counts[1].max(1) as f64,
        ],
        requests,
    }
}

/// Peak/trough ratio of the hour-of-day Hello profile and the circular
/// mean hour of Hello records.
pub fn diurnal_shape(out: &SimOutput) -> (f64, Option<f64>) {
    let log = unified(out);
    let prof = analysis::hour_of_day_profile(&log, LoggedKind::Hello);
    let max = prof.avg.iter().cloned().fold(0.0, f64::max);
    let min = prof.avg.iter().cloned().fold(f64::MAX, f64::min);
    let ratio = if min > 0.0 { max / min } else { f64::INFINITY };
    (
        ratio,
        analysis::circular_mean_hour(&log, Some(LoggedKind::Hello)),
    )
}

pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(24.0);
    d.min(24.0 - d)
}

#[derive(Debug, Default)]
pub struct GapReport {
    /// Peers with at least two within-loop gaps toward each group.
    pub peers: [usize; 2],
    /// Of those, peers whose gaps vary.
    pub varying: [usize; 2],
    pub gaps: [usize; 2],
}

/// Inter-RequestPart gaps from the simulation trace, measured inside each
/// download loop and pooled per peer and strategy group.
pub fn request_gaps(out: &SimOutput) -> GapReport {
    let groups = strategy_groups(&out.plan);
    let mut last: HashMap<(String, String), u64> = HashMap::new();
    let mut per_peer: BTreeMap<(String, usize), Vec<u64>> = BTreeMap::new();
    for line in out.trace.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[1] != "request-part" {
            continue;
        }
        let t: u64 = f[0].parse().unwrap();
        let lp = f[5].split(';').next().unwrap().to_string();
        let g = usize::from(groups[f[3]] == Strategy::RandomContent);
        if let Some(prev) = last.insert((f[2].to_string(), lp), t) {
            per_peer
                .entry((f[2].to_string(), g))
                .or_default()
                .push(t - prev);
        }
    }
    let mut rep = GapReport::default();
    for ((_, g), gaps) in per_peer {
        rep.gaps[g] += gaps.len();
        if gaps.len() < 2 {
            continue;
        }
        rep.peers[g] += 1;
        if gaps.iter().any(|&x| x != gaps[0]) {
            rep.varying[g] += 1;
        }
    }
    rep
}

/// RequestPart sends in the trace versus RequestPart records in the log.
pub fn request_conservation(out: &SimOutput) -> (usize, usize) {
    let traced = out
        .trace
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("request-part"))
        .count();
    let logged = out
        .unified
        .records
        .iter()
        .filter(|r| r.kind == LoggedKind::RequestPart)
        .count();
    (traced, logged)
}

/// Interior points with non-positive second difference, points checked,
/// and whether the curve never decreases.
pub fn concavity(log: &UnifiedLog, trials: usize, seed: u64) -> (usize, usize, bool) {
    let a = analysis::honeypot_subset_curve(log, trials, seed).avg;
    let monotone = a.windows(2).all(|w| w[1] >= w[0]);
    let interior = a.len().saturating_sub(2);
    let ok = (1..a.len().saturating_sub(1))
        .filter(|&i| a[i + 1] - 2.0 * a[i] + a[i - 1] <= 1e-9)
        .count();
    (ok, interior, monotone)
}

// ---------------------------------------------------------------- cli

pub fn hnl() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_hnl"))
}

/// All files under `dir` with their bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub const SMALL_SIM: &str = "seed = 5\nduration = 2d\nn_peers = 800\ncatalog_size = 300\n";

pub const SMALL_PLAN: &str = "servers = 10.255.0.1:4661

[honeypot nc1]
strategy = no-content
[honeypot nc2]
strategy = no-content
[honeypot rc1]
strategy = random-content
[honeypot rc2]
strategy = random-content

[advertise *]
catalog = 0,1,2,3
";

/// `run-sim` then every analysis report into `dir`; returns the failing
/// command, if any.
pub fn cli_pipeline(dir: &Path, inputs: &Path) -> Result<(), String> {
    let run = |args: &[&str]| -> Result<(), String> {
        let st = hnl().args(args).output().map_err(|e| e.to_string())?;
        if st.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&st.stderr)))
        }
    };
    let d = dir.to_str().unwrap();
    let cfg = inputs.join("sim.conf");
    let plan = inputs.join("plan.txt");
    run(&[
        "run-sim",
        "--config",
        cfg.to_str().unwrap(),
        "--plan",
        plan.to_str().unwrap(),
        "--out",
        d,
    ])?;
    let log = dir.join("unified.log");
    for report in [
        "summary",
        "distinct-peers",
        "new-peers-per-day",
        "hourly",
        "hour-of-day",
        "strategy",
        "single-peer",
        "honeypot-subsets",
        "file-subsets",
        "top-files",
    ] {
        run(&[
            "analyze",
            log.to_str().unwrap(),
            "--report",
            report,
            "--files",
            "10",
            "--trials",
            "50",
        ])?;
    }
    Ok(())
}

pub fn write_small_inputs(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("sim.conf"), SMALL_SIM).unwrap();
    std::fs::write(dir.join("plan.txt"), SMALL_PLAN).unwrap();
}

pub fn ip(s: &str) -> Ipv4Addr {
    s.parse().unwrap()
}

// ---------------------------------------------------------------- state machine

pub use hnl_core::honeypot::{Connection, Honeypot, HoneypotConfig, PeerPhase};
pub use hnl_core::protocol::MessageKind;

pub const SHARED: FileId = FileId([0x5A; 16]);
pub const UNSHARED: FileId = FileId([0x7E; 16]);

pub fn test_peer_hello(user: u8) -> Hello {
    Hello {
        peer: PeerId::new(UserId([user; 16]), 1 << 25),
        port: 4662,
        client_name: "tester".into(),
        client_version: 1,
    }
}

/// A message of `kind` about `file`.
pub fn sample_message(kind: MessageKind, file: FileId) -> Message {
    match kind {
        MessageKind::Hello => Message::Hello(test_peer_hello(1)),
        MessageKind::HelloAnswer => Message::HelloAnswer(test_peer_hello(1)),
        MessageKind::OfferFiles => Message::OfferFiles(vec![FileMeta::new(file, "x", 10)]),
        MessageKind::StartUpload => Message::StartUpload(file),
        MessageKind::AcceptUpload => Message::AcceptUpload(file),
        MessageKind::RequestPart => Message::RequestPart {
            file_id: file,
            ranges: vec![ByteRange::new(0, 1000)],
        },
        MessageKind::SendPart => Message::SendPart {
            file_id: file,
            offset: 0,
            data: vec![1, 2, 3],
        },
        MessageKind::AskSharedList => Message::AskSharedList,
        MessageKind::SharedListAnswer => {
            Message::SharedListAnswer(vec![FileMeta::new(file, "y", 10)])
        }
    }
}

pub fn test_honeypot(strategy: Strategy) -> Honeypot {
    let mut hp = Honeypot::new(
        HoneypotConfig::new("hp-test", strategy),
        IpHasher::new(CampaignSalt([1; 32])),
        Timestamp(0),
    );
    hp.offer_files(
        &[FileMeta::new(SHARED, "shared.avi", 1 << 20)],
        Timestamp(0),
    );
    hp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    None,
    Greeted,
    UploadAccepted,
}

pub const PHASES: [Phase; 3] = [Phase::None, Phase::Greeted, Phase::UploadAccepted];

/// A honeypot and a connection brought into `phase`.
pub fn in_phase(strategy: Strategy, phase: Phase) -> (Honeypot, Connection) {
    let mut hp = test_honeypot(strategy);
    let mut conn = Connection::new(ip("10.1.2.3"), 5000);
    if phase != Phase::None {
        hp.handle_peer_message(&mut conn, Message::Hello(test_peer_hello(1)), Timestamp(1));
    }
    if phase == Phase::UploadAccepted {
        hp.handle_peer_message(&mut conn, Message::StartUpload(SHARED), Timestamp(2));
    }
    (hp, conn)
}

fn kinds(out: &[Message]) -> Vec<MessageKind> {
    out.iter().map(Message::kind).collect()
}

/// Every (strategy, phase, message kind) cell checked against the
/// transition table; returns the violations.
pub fn conformance_violations() -> Vec<String> {
    let mut bad = Vec::new();
    for strategy in [Strategy::NoContent, Strategy::RandomContent] {
        for phase in PHASES {
            for kind in MessageKind::ALL {
                let (mut hp, mut conn) = in_phase(strategy, phase);
                let before = conn.user_id().map(|u| hp.phase(&u));
                let out =
                    hp.handle_peer_message(&mut conn, sample_message(kind, SHARED), Timestamp(10));
                let sent = kinds(&out.to_peer);
                let cell = format!("{strategy} {phase:?} {kind:?}");
                let accept = sent.contains(&MessageKind::AcceptUpload);
                let parts = sent.iter().filter(|k| **k == MessageKind::SendPart).count();
                if accept != (kind == MessageKind::StartUpload && phase == Phase::Greeted) {
                    bad.push(format!("{cell}: AcceptUpload sent = {accept}"));
                }
                let want_parts = kind == MessageKind::RequestPart
                    && phase == Phase::UploadAccepted
                    && strategy == Strategy::RandomContent;
                if (parts > 0) != want_parts {
                    bad.push(format!("{cell}: {parts} SendPart"));
                }
                let answered = sent.contains(&MessageKind::HelloAnswer);
                if answered != (kind == MessageKind::Hello && phase == Phase::None) {
                    bad.push(format!("{cell}: HelloAnswer sent = {answered}"));
                }
                let logged = matches!(
                    kind,
                    MessageKind::Hello | MessageKind::StartUpload | MessageKind::RequestPart
                );
                if (out.records.len() == 1) != logged || out.records.len() > 1 {
                    bad.push(format!("{cell}: {} records", out.records.len()));
                }
                let after = conn.user_id().map(|u| hp.phase(&u));
                let want_after = match (phase, kind) {
                    (Phase::None, MessageKind::Hello) => Some(PeerPhase::Greeted),
                    (Phase::Greeted, MessageKind::StartUpload) => {
                        Some(PeerPhase::UploadAccepted(SHARED))
                    }
                    _ => before,
                };
                if after != want_after {
                    bad.push(format!("{cell}: phase {before:?} -> {after:?}"));
                }
            }
        }
    }
    // an upload request for a file the honeypot does not share is never accepted
    for strategy in [Strategy::NoContent, Strategy::RandomContent] {
        let (mut hp, mut conn) = in_phase(strategy, Phase::Greeted);
        let out = hp.handle_peer_message(&mut conn, Message::StartUpload(UNSHARED), Timestamp(10));
        if !out.to_peer.is_empty() {
            bad.push(format!("{strategy}: accepted an unshared file"));
        }
    }
    bad
}

/// Replays `n` random message traces over several connections; returns
/// SendPart counts (no-content, random-content) and the number of
/// SendParts emitted outside UploadAccepted.
pub fn random_traces(n: usize, seed: u64) -> ([usize; 2], usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = [0usize; 2];
    let mut illegal = 0;
    for t in 0..n {
        let strategy = if t % 2 == 0 {
            Strategy::NoContent
        } else {
            Strategy::RandomContent
        };
        let mut hp = test_honeypot(strategy);
        let mut conns: Vec<Connection> = (0..3)
            .map(|i| Connection::new(Ipv4Addr::new(10, 0, 0, i + 1), 4000 + u16::from(i)))
            .collect();
        for step in 0..rng.random_range(1..60) {
            let c = rng.random_range(0..conns.len());
            if rng.random_bool(0.05) {
                hp.peer_disconnected(&conns[c]);
                conns[c] = Connection::new(conns[c].ip, conns[c].port);
                continue;
            }
            let kind = MessageKind::ALL[rng.random_range(0..9)];
            let file = if rng.random_bool(0.8) {
                SHARED
            } else {
                UNSHARED
            };
            let mut msg = sample_message(kind, file);
            if let Message::Hello(h) = &mut msg {
                h.peer.user_id = UserId([c as u8 + 1; 16]);
            }
            let before = conns[c].user_id().map(|u| hp.phase(&u));
            let out = hp.handle_peer_message(&mut conns[c], msg, Timestamp(step));
            let parts = out
                .to_peer
                .iter()
                .filter(|m| m.kind() == MessageKind::SendPart)
                .count();
            totals[usize::from(strategy == Strategy::RandomContent)] += parts;
            if parts > 0 && !matches!(before, Some(PeerPhase::UploadAccepted(_))) {
                illegal += 1;
            }
        }
    }
    (totals, illegal)
}
