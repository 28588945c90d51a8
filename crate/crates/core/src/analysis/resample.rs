//! Union-of-subsets resampling: how many distinct peers would `n`
//! honeypots (or `n` files) have seen?

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{peers_per_file, AnalysisError, AnalysisSeries, UnifiedLog};
use crate::protocol::FileId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetPoint {
    pub n: usize,
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    /// True when every subset was enumerated instead of sampled.
    pub exhaustive: bool,
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn union_size(sets: &[FixedBitSet], pick: &[usize], scratch: &mut FixedBitSet) -> usize {
    scratch.clear();
    for &i in pick {
        scratch.union_with(&sets[i]);
    }
    scratch.count_ones(..)
}

/// Next k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Avg/min/max union size over subsets of `n` of the given sets.
/// Enumerates all subsets when there are at most `trials` of them;
/// otherwise trial `t` shuffles the indices with a generator seeded by
/// `seed ^ t` and keeps the first `n`.
pub fn resample_sets(
    sets: &[FixedBitSet],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SubsetPoint, AnalysisError> {
    let total = sets.len();
    if n > total {
        return Err(AnalysisError::SubsetTooLarge { n, total });
    }
    let width = sets.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut scratch = FixedBitSet::with_capacity(width);
    if n == 0 {
        return Ok(SubsetPoint {
            n,
            avg: 0.0,
            min: 0.0,
            max: 0.0,
            exhaustive: true,
        });
    }
    let mut sizes = Vec::new();
    let exhaustive = binomial(total, n) <= trials.max(1) as u128;
    if exhaustive {
        let mut c: Vec<usize> = (0..n).collect();
        loop {
            sizes.push(union_size(sets, &c, &mut scratch));
            if !next_combination(&mut c, total) {
                break;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..total).collect();
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t as u64);
            idx.sort_unstable();
            idx.shuffle(&mut rng);
            sizes.push(union_size(sets, &idx[..n], &mut scratch));
        }
    }
    let sum: usize = sizes.iter().sum();
    Ok(SubsetPoint {
        n,
        avg: sum as f64 / sizes.len() as f64,
        min: *sizes.iter().min().unwrap() as f64,
        max: *sizes.iter().max().unwrap() as f64,
        exhaustive,
    })
}

/// Peer sets per honeypot, in sorted honeypot order.
pub fn honeypot_peer_sets(log: &UnifiedLog) -> (Vec<String>, Vec<FixedBitSet>) {
    let ids = log.honeypots();
    let width = log.peer_space();
    let index: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut sets = vec![FixedBitSet::with_capacity(width); ids.len()];
    for r in &log.records {
        sets[index[r.honeypot_id.as_str()]].insert(r.peer as usize);
    }
    (ids, sets)
}

pub fn resample_honeypot_subsets(
    log: &UnifiedLog,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SubsetPoint, AnalysisError> {
    let (_, sets) = honeypot_peer_sets(log);
    resample_sets(&sets, n, trials, seed)
}

fn curve(label: &str, sets: &[FixedBitSet], trials: usize, seed: u64) -> AnalysisSeries {
    let points: Vec<SubsetPoint> = (0..=sets.len())
        .map(|n| resample_sets(sets, n, trials, seed).expect("n within range"))
        .collect();
    AnalysisSeries {
        label: label.to_string(),
        x: points.iter().map(|p| p.n as f64).collect(),
        avg: points.iter().map(|p| p.avg).collect(),
        min: Some(points.iter().map(|p| p.min).collect()),
        max: Some(points.iter().map(|p| p.max).collect()),
    }
}

/// Resampled distinct peers for every `n` from 0 to the number of honeypots.
pub fn honeypot_subset_curve(log: &UnifiedLog, trials: usize, seed: u64) -> AnalysisSeries {
    let (_, sets) = honeypot_peer_sets(log);
    curve("honeypot-subsets", &sets, trials, seed)
}

fn file_sets(log: &UnifiedLog, files: &[FileId]) -> Vec<FixedBitSet> {
    let width = log.peer_space();
    let per = peers_per_file(log);
    files
        .iter()
        .map(|f| {
            let mut s = FixedBitSet::with_capacity(width);
            if let Some(peers) = per.get(f) {
                for &p in peers {
                    s.insert(p as usize);
                }
            }
            s
        })
        .collect()
}

/// Like [`resample_honeypot_subsets`], over the peers querying `n` files of
/// `file_set`.
pub fn resample_file_subsets(
    log: &UnifiedLog,
    file_set: &[FileId],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<SubsetPoint, AnalysisError> {
    resample_sets(&file_sets(log, file_set), n, trials, seed)
}

pub fn file_subset_curve(
    log: &UnifiedLog,
    file_set: &[FileId],
    label: &str,
    trials: usize,
    seed: u64,
) -> AnalysisSeries {
    curve(label, &file_sets(log, file_set), trials, seed)
}

/// `k` distinct queried files chosen uniformly (by sorted file id order,
/// shuffled with `seed`).
pub fn random_file_set(log: &UnifiedLog, k: usize, seed: u64) -> Vec<FileId> {
    let mut files: Vec<FileId> = peers_per_file(log).into_keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    files.shuffle(&mut rng);
    files.truncate(k);
    files
}
