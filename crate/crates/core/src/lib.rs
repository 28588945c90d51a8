//! Honeypot-based activity measurement for eDonkey-style file-sharing
//! networks: wire codec, honeypot peers, a supervising manager, log
//! anonymization, a discrete-event network simulator, and the analyses run
//! on the merged logs.

pub mod analysis;
pub mod anonymize;
pub mod honeypot;
pub mod live;
pub mod manager;
pub mod manifest;
pub mod protocol;
pub mod simnet;
pub mod time;
