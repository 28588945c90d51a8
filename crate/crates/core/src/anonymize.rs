//! Two-step peer address anonymization and filename word masking.
//!
//! Step one runs inside each honeypot: addresses are replaced by a salted
//! SHA-256 token before anything is written. Step two runs in the manager
//! after merging: every token is replaced by a dense integer in
//! first-occurrence order, and the mapping is dropped afterwards.

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::RngCore;
use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::honeypot::LogRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("raw IPv4 address {0:?} where an anonymization token is required")]
    RawAddress(String),
    #[error("token must be 64 hex characters, got {0:?}")]
    BadFormat(String),
}

/// Salted one-way digest of a peer IPv4 address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpToken([u8; 32]);

impl IpToken {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for IpToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for IpToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IpToken({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for IpToken {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, TokenError> {
        if s.parse::<Ipv4Addr>().is_ok() || contains_dotted_quad(s) {
            return Err(TokenError::RawAddress(s.to_string()));
        }
        let mut out = [0u8; 32];
        if s.len() != 64 || hex::decode_to_slice(s, &mut out).is_err() {
            return Err(TokenError::BadFormat(s.to_string()));
        }
        Ok(IpToken(out))
    }
}

/// Per-campaign salt shared by all honeypots of one deployment.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct CampaignSalt(pub [u8; 32]);

impl CampaignSalt {
    pub fn random() -> CampaignSalt {
        let mut salt = [0u8; 32];
        rand::rng().fill_bytes(&mut salt);
        CampaignSalt(salt)
    }

    /// Deterministic salt for simulated campaigns.
    pub fn from_seed(seed: u64) -> CampaignSalt {
        let digest = Sha256::new()
            .chain_update(b"hnl-campaign-salt")
            .chain_update(seed.to_le_bytes())
            .finalize();
        CampaignSalt(digest.into())
    }
}

impl fmt::Debug for CampaignSalt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CampaignSalt(..)")
    }
}

#[derive(Debug, Clone)]
pub struct IpHasher {
    salt: CampaignSalt,
}

impl IpHasher {
    pub fn new(salt: CampaignSalt) -> IpHasher {
        IpHasher { salt }
    }

    pub fn hash_ip(&self, ip: Ipv4Addr) -> IpToken {
        let digest = Sha256::new()
            .chain_update(self.salt.0)
            .chain_update(ip.octets())
            .finalize();
        IpToken(digest.into())
    }
}

/// Token to dense integer mapping. Never persisted.
#[derive(Debug, Default)]
pub struct RenumberTable<K> {
    ids: HashMap<K, u32>,
}

impl<K: std::hash::Hash + Eq> RenumberTable<K> {
    pub fn new() -> Self {
        RenumberTable {
            ids: HashMap::new(),
        }
    }

    pub fn assign(&mut self, key: K) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(key).or_insert(next)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Replaces each record's token by its first-occurrence integer.
/// Returns the rewritten records and the number of distinct tokens.
pub fn coherent_renumber<I>(records: I) -> (Vec<LogRecord<u32>>, usize)
where
    I: IntoIterator<Item = LogRecord<IpToken>>,
{
    let mut table = RenumberTable::new();
    let out = records
        .into_iter()
        .map(|r| r.map_peer(|t| table.assign(t)))
        .collect();
    (out, table.len())
}

static DOTTED_QUAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:^|[^0-9.])(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})(?:$|[^0-9.])").unwrap()
});

/// True if `s` contains something shaped like an IPv4 dotted quad.
pub fn contains_dotted_quad(s: &str) -> bool {
    DOTTED_QUAD
        .captures_iter(s)
        .any(|c| c[1].parse::<Ipv4Addr>().is_ok())
}

/// Replaces every dotted quad in free text with `[ip]`.
pub fn scrub_dotted_quads(s: &str) -> String {
    if !contains_dotted_quad(s) {
        return s.to_string();
    }
    static ANY_QUAD: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}").unwrap());
    ANY_QUAD
        .replace_all(s, |c: &regex::Captures<'_>| {
            if c[0].parse::<Ipv4Addr>().is_ok() {
                "[ip]".to_string()
            } else {
                c[0].to_string()
            }
        })
        .into_owned()
}

/// Word spans of `name`: maximal runs of alphanumeric characters.
fn word_spans(name: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut chars = name.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, c)) = chars.peek() {
            if c.is_alphanumeric() {
                break;
            }
            chars.next();
        }
        let (start, _) = *chars.peek()?;
        let mut end = name.len();
        while let Some(&(i, c)) = chars.peek() {
            if !c.is_alphanumeric() {
                end = i;
                break;
            }
            chars.next();
        }
        Some((start, end))
    })
}

/// Masks filename words seen fewer than `threshold` times across the corpus.
///
/// Words are compared lowercased. Rare words become `w0`, `w1`, ... in order
/// of first appearance; frequent words and separators are kept verbatim.
pub fn anonymize_filenames(names: &[String], threshold: usize) -> Vec<String> {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for name in names {
        for (s, e) in word_spans(name) {
            *freq.entry(name[s..e].to_lowercase()).or_default() += 1;
        }
    }
    let mut rare = RenumberTable::new();
    names
        .iter()
        .map(|name| {
            let mut out = String::with_capacity(name.len());
            let mut last = 0;
            for (s, e) in word_spans(name) {
                out.push_str(&name[last..s]);
                let word = name[s..e].to_lowercase();
                if freq[&word] < threshold {
                    out.push('w');
                    out.push_str(&rare.assign(word).to_string());
                } else {
                    out.push_str(&name[s..e]);
                }
                last = e;
            }
            out.push_str(&name[last..]);
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hasher() -> IpHasher {
        IpHasher::new(CampaignSalt([3; 32]))
    }

    #[test]
    fn hashing_is_deterministic_and_hex() {
        let ip = Ipv4Addr::new(81, 56, 7, 200);
        let a = hasher().hash_ip(ip);
        assert_eq!(a, hasher().hash_ip(ip));
        let s = a.to_string();
        assert_eq!(s.len(), 64);
        assert!(s.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(s.parse::<IpToken>().unwrap(), a);
    }

    #[test]
    fn salt_changes_tokens() {
        let ip = Ipv4Addr::new(10, 1, 2, 3);
        let other = IpHasher::new(CampaignSalt([4; 32]));
        assert_ne!(hasher().hash_ip(ip), other.hash_ip(ip));
    }

    #[test]
    fn raw_address_is_not_a_token() {
        assert_eq!(
            "192.168.1.1".parse::<IpToken>(),
            Err(TokenError::RawAddress("192.168.1.1".into()))
        );
        assert!(matches!(
            "abc".parse::<IpToken>(),
            Err(TokenError::BadFormat(_))
        ));
    }

    #[test]
    fn renumber_first_occurrence() {
        let mut t = RenumberTable::new();
        let ids: Vec<u32> = ["a", "b", "a", "c"]
            .into_iter()
            .map(|k| t.assign(k))
            .collect();
        assert_eq!(ids, vec![0, 1, 0, 2]);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn renumber_empty() {
        let (out, n) = coherent_renumber(Vec::new());
        assert!(out.is_empty());
        assert_eq!(n, 0);
    }

    #[test]
    fn filename_threshold_one_is_identity() {
        let names: Vec<String> = ["John Holiday.avi", "summer_video (2008)", "x"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(anonymize_filenames(&names, 1), names);
    }

    #[test]
    fn filename_rare_words() {
        let names = vec!["john holiday video".to_string(), "summer video".to_string()];
        assert_eq!(
            anonymize_filenames(&names, 2),
            vec!["w0 w1 video".to_string(), "w2 video".to_string()]
        );
    }

    #[test]
    fn filename_case_folding_and_separators() {
        let names = vec!["Video-ONE.avi".to_string(), "video_two.AVI".to_string()];
        assert_eq!(
            anonymize_filenames(&names, 2),
            vec!["Video-w0.avi".to_string(), "video_w1.AVI".to_string()]
        );
    }

    #[test]
    fn filename_empty_corpus() {
        assert!(anonymize_filenames(&[], 5).is_empty());
    }

    #[test]
    fn dotted_quads() {
        assert!(contains_dotted_quad("peer 10.0.0.1 here"));
        assert!(contains_dotted_quad("1.2.3.4"));
        assert!(!contains_dotted_quad("version 1.2.3"));
        assert!(!contains_dotted_quad("999.1.1.1"));
        assert_eq!(scrub_dotted_quads("from 10.0.0.1!"), "from [ip]!");
    }
}
