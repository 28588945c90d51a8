//! Synthetic file catalog with Zipf popularity.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manager::{DeploymentPlan, FileRef};
use crate::protocol::{FileId, FileMeta};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "to", "ne", "su", "vi", "do", "re", "ba", "zu", "pe", "li", "mo", "ta",
    "ge", "no", "fi", "sa", "ku", "ro", "de", "ja",
];
const EXTENSIONS: [&str; 6] = ["avi", "mp3", "iso", "zip", "mkv", "pdf"];
const SEPARATORS: [char; 4] = [' ', '.', '_', '-'];

/// Zipf weights `1 / (rank + 1)^s`.
pub fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(s)).collect()
}

fn vocabulary(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut words = Vec::with_capacity(n);
    let mut seen = std::collections::BTreeSet::new();
    while words.len() < n {
        let len = rng.random_range(2..=3);
        let w: String = (0..len)
            .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
            .collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// `size` synthetic files (rank = index) followed by the plan's explicit
/// files. Deterministic in `seed`.
pub fn build_catalog(seed: u64, size: usize, plan: &DeploymentPlan) -> Vec<FileMeta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00ca_7a10_9000_0000);
    let vocab = vocabulary(&mut rng, 400);
    // Word usage is itself skewed, so some words end up rare.
    let word_pick =
        WeightedIndex::new(zipf_weights(vocab.len(), 1.1)).expect("non-empty vocabulary");
    let mut files = Vec::with_capacity(size);
    for rank in 0..size {
        let n_words = rng.random_range(2..=4);
        let sep = SEPARATORS[rng.random_range(0..SEPARATORS.len())];
        let mut name = (0..n_words)
            .map(|_| vocab[word_pick.sample(&mut rng)].as_str())
            .collect::<Vec<_>>()
            .join(&sep.to_string());
        name.push('.');
        name.push_str(EXTENSIONS[rng.random_range(0..EXTENSIONS.len())]);
        // log-uniform between 1 MiB and 1.5 GiB
        let exp = rng.random_range(20.0..30.58f64);
        let size = 2f64.powf(exp) as u64;
        let content = format!("synthetic content {seed} {rank}");
        files.push(FileMeta::new(
            FileId::from_content(content.as_bytes()),
            name,
            size,
        ));
    }
    for ad in &plan.advertisements {
        for f in &ad.files {
            if let FileRef::Meta(m) = f {
                if !files.iter().any(|x| x.file_id == m.file_id) {
                    files.push(m.clone());
                }
            }
        }
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let plan = DeploymentPlan::default();
        let a = build_catalog(4, 300, &plan);
        assert_eq!(a, build_catalog(4, 300, &plan));
        assert_ne!(a, build_catalog(5, 300, &plan));
        let mut ids: Vec<_> = a.iter().map(|f| f.file_id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 300);
        assert!(a.iter().all(|f| f.size >= 1 << 20));
    }

    #[test]
    fn zipf_shape() {
        let w = zipf_weights(4, 1.0);
        assert_eq!(w, vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
    }
}
