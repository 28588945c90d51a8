//! Simulated downloader behaviour.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};

use super::SimConfig;
use crate::protocol::{FileMeta, Hello, Message, PeerId};
use crate::time::Timestamp;

/// What a downloader concluded from one answered (or unanswered) request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    /// Data arrived but failed verification.
    BadPart,
    /// Nothing arrived before the timeout.
    Silence,
}

impl Evidence {
    pub fn from_answers(answers: &[Message]) -> Evidence {
        if answers
            .iter()
            .any(|m| matches!(m, Message::SendPart { .. }))
        {
            Evidence::BadPart
        } else {
            Evidence::Silence
        }
    }
}

/// Evidence gathered against one provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Suspicion {
    pub count: u32,
    /// Drawn at the first piece of evidence.
    pub threshold: u32,
}

#[derive(Debug, Clone)]
pub struct SimPeer {
    pub index: usize,
    pub hello: Hello,
    pub ip: Ipv4Addr,
    pub server: usize,
    /// Catalog indices.
    pub interests: Vec<usize>,
    /// Sessions per day.
    pub activity_rate: f64,
    pub shares: Vec<FileMeta>,
    pub shares_list: bool,
    pub blacklist: BTreeSet<usize>,
    pub suspicion: BTreeMap<usize, Suspicion>,
}

impl SimPeer {
    pub fn new(index: usize, ip: Ipv4Addr, peer: PeerId, server: usize) -> SimPeer {
        SimPeer {
            index,
            hello: Hello {
                peer,
                port: 4662,
                client_name: format!("peer{index}"),
                client_version: 0x3C,
            },
            ip,
            server,
            interests: Vec::new(),
            activity_rate: 1.0,
            shares: Vec::new(),
            shares_list: false,
            blacklist: BTreeSet::new(),
            suspicion: BTreeMap::new(),
        }
    }

    pub fn has_blacklisted(&self, honeypot: usize) -> bool {
        self.blacklist.contains(&honeypot)
    }
}

/// `1 + Geometric(1/mean)`: at least one piece of evidence, expected
/// value `mean`.
pub fn detection_threshold<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    let p = (1.0 / mean).clamp(f64::MIN_POSITIVE, 1.0);
    let extra = Geometric::new(p).map(|g| g.sample(rng)).unwrap_or(0);
    1 + extra.min(u32::MAX as u64 - 1) as u32
}

/// Adds one piece of evidence against `honeypot`. Returns true when the
/// honeypot was blacklisted by this call.
pub fn blacklist_update<R: Rng + ?Sized>(
    peer: &mut SimPeer,
    honeypot: usize,
    evidence: Evidence,
    cfg: &SimConfig,
    rng: &mut R,
) -> bool {
    if peer.blacklist.contains(&honeypot) {
        return false;
    }
    let s = peer.suspicion.entry(honeypot).or_insert_with(|| {
        let mean = match evidence {
            Evidence::BadPart => cfg.detect_random_content,
            Evidence::Silence => cfg.detect_no_content,
        };
        Suspicion {
            count: 0,
            threshold: detection_threshold(mean, rng),
        }
    });
    s.count += 1;
    if s.count >= s.threshold {
        peer.blacklist.insert(honeypot);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerAction {
    /// Send the next RequestPart at this time.
    Request(Timestamp),
    /// Stop using this provider for good.
    Blacklist,
    /// Nothing to download.
    Idle,
}

/// Decides what a downloader does after a request sent at `now` got
/// `answers`. Requests are never pipelined: silence costs exactly the
/// timeout, served data a variable service delay.
pub fn peer_step<R: Rng + ?Sized>(
    peer: &mut SimPeer,
    honeypot: usize,
    answers: &[Message],
    now: Timestamp,
    cfg: &SimConfig,
    rng: &mut R,
) -> PeerAction {
    if peer.interests.is_empty() {
        return PeerAction::Idle;
    }
    if peer.has_blacklisted(honeypot) {
        return PeerAction::Blacklist;
    }
    let evidence = Evidence::from_answers(answers);
    if blacklist_update(peer, honeypot, evidence, cfg, rng) {
        return PeerAction::Blacklist;
    }
    let gap = match evidence {
        Evidence::Silence => cfg.timeout_no_answer_ms,
        Evidence::BadPart => cfg.latency_ms + exp_ms(cfg.service_delay_mean_ms, rng),
    };
    PeerAction::Request(now.plus_ms(gap.max(1)))
}

pub(crate) fn exp_ms<R: Rng + ?Sized>(mean_ms: u64, rng: &mut R) -> u64 {
    if mean_ms == 0 {
        return 0;
    }
    let d = Exp::new(1.0 / mean_ms as f64).expect("positive rate");
    d.sample(rng).round() as u64
}
