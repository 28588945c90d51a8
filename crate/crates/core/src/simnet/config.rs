//! Simulation parameters and their text format (`key = value`, `#`
//! comments, durations like `40s`, `10m`, `7d`).

use std::fmt::Write as _;

use thiserror::Error;

use crate::time::{parse_duration_ms, DAY_MS, HOUR_MS, MINUTE_MS, SECOND_MS};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub duration_ms: u64,
    pub n_peers: usize,
    pub n_servers: usize,
    /// Synthetic files; plan-listed files are appended after them.
    pub catalog_size: usize,
    pub zipf_s: f64,
    pub diurnal_amplitude: f64,
    pub diurnal_peak_hour: f64,
    /// Per active downloader of a honeypot: chance it tells a newcomer
    /// about that honeypot.
    pub peer_exchange_prob: f64,
    /// Chance the server includes a given honeypot in a source answer.
    pub server_source_prob: f64,
    pub timeout_no_answer_ms: u64,
    pub detect_random_content: f64,
    pub detect_no_content: f64,
    /// Mean of the exponential delay before a new honeypot is findable.
    pub startup_discovery_delay_ms: u64,
    /// Mean download sessions per peer per day.
    pub sessions_per_day: f64,
    pub session_mean_ms: u64,
    /// Mean gap between a served (random) part and the next request.
    pub service_delay_mean_ms: u64,
    /// Spread of first contacts after a source is learned.
    pub contact_jitter_ms: u64,
    pub latency_ms: u64,
    pub interests_mean: f64,
    pub shares_mean: f64,
    pub share_list_prob: f64,
    pub low_id_prob: f64,
    pub request_bytes: u32,
    /// Forces the client id every server hands out.
    pub server_client_id: Option<u32>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            duration_ms: 7 * DAY_MS,
            n_peers: 5_000,
            n_servers: 4,
            catalog_size: 2_000,
            zipf_s: 1.0,
            diurnal_amplitude: 0.3,
            diurnal_peak_hour: 20.0,
            peer_exchange_prob: 0.2,
            server_source_prob: 0.5,
            timeout_no_answer_ms: 40 * SECOND_MS,
            detect_random_content: 10.0,
            detect_no_content: 3.0,
            startup_discovery_delay_ms: 10 * MINUTE_MS,
            sessions_per_day: 1.0,
            session_mean_ms: HOUR_MS,
            service_delay_mean_ms: 30 * SECOND_MS,
            contact_jitter_ms: MINUTE_MS,
            latency_ms: 200,
            interests_mean: 3.0,
            shares_mean: 20.0,
            share_list_prob: 0.7,
            low_id_prob: 0.3,
            request_bytes: 10 * 1024,
            server_client_id: None,
        }
    }
}

fn prob(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let mut c = SimConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let (key, value) = l
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "expected key = value".into(),
                })?;
            let err = |m: String| ConfigError::Syntax { line, message: m };
            let f = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("{key}: expected a number, got {value:?}")))
            };
            let u = || {
                value
                    .parse::<u64>()
                    .map_err(|_| err(format!("{key}: expected an integer, got {value:?}")))
            };
            let d = || parse_duration_ms(value).map_err(|e| err(format!("{key}: {e}")));
            match key {
                "seed" => c.seed = u()?,
                "duration" => c.duration_ms = d()?,
                "n_peers" => c.n_peers = u()? as usize,
                "n_servers" => c.n_servers = u()? as usize,
                "catalog_size" => c.catalog_size = u()? as usize,
                "zipf_s" => c.zipf_s = f()?,
                "diurnal_amplitude" => c.diurnal_amplitude = f()?,
                "diurnal_peak_hour" => c.diurnal_peak_hour = f()?,
                "peer_exchange_prob" => c.peer_exchange_prob = f()?,
                "server_source_prob" => c.server_source_prob = f()?,
                "timeout_no_answer" => c.timeout_no_answer_ms = d()?,
                "detect_random_content" => c.detect_random_content = f()?,
                "detect_no_content" => c.detect_no_content = f()?,
                "startup_discovery_delay" => c.startup_discovery_delay_ms = d()?,
                "sessions_per_day" => c.sessions_per_day = f()?,
                "session_mean" => c.session_mean_ms = d()?,
                "service_delay_mean" => c.service_delay_mean_ms = d()?,
                "contact_jitter" => c.contact_jitter_ms = d()?,
                "latency" => c.latency_ms = d()?,
                "interests_mean" => c.interests_mean = f()?,
                "shares_mean" => c.shares_mean = f()?,
                "share_list_prob" => c.share_list_prob = f()?,
                "low_id_prob" => c.low_id_prob = f()?,
                "request_bytes" => c.request_bytes = u()?.clamp(1, u32::MAX as u64) as u32,
                "server_client_id" => c.server_client_id = Some(u()?.min(u32::MAX as u64) as u32),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        prob("peer_exchange_prob", self.peer_exchange_prob)?;
        prob("server_source_prob", self.server_source_prob)?;
        prob("share_list_prob", self.share_list_prob)?;
        prob("low_id_prob", self.low_id_prob)?;
        if !(0.0..1.0).contains(&self.diurnal_amplitude) {
            return Err(ConfigError::Invalid(
                "diurnal_amplitude must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..24.0).contains(&self.diurnal_peak_hour) {
            return Err(ConfigError::Invalid(
                "diurnal_peak_hour must lie in [0, 24)".into(),
            ));
        }
        if self.detect_no_content < 1.0 || self.detect_random_content < 1.0 {
            return Err(ConfigError::Invalid(
                "detection means must be at least 1".into(),
            ));
        }
        if self.detect_no_content > self.detect_random_content {
            return Err(ConfigError::Invalid(
                "detect_no_content must not exceed detect_random_content".into(),
            ));
        }
        if self.n_servers == 0 {
            return Err(ConfigError::Invalid("n_servers must be at least 1".into()));
        }
        if self.zipf_s < 0.0 || !self.zipf_s.is_finite() {
            return Err(ConfigError::Invalid(
                "zipf_s must be a finite non-negative number".into(),
            ));
        }
        for (name, v) in [
            ("sessions_per_day", self.sessions_per_day),
            ("interests_mean", self.interests_mean),
            ("shares_mean", self.shares_mean),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        if self.timeout_no_answer_ms == 0 || self.session_mean_ms == 0 {
            return Err(ConfigError::Invalid(
                "timeout_no_answer and session_mean must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("duration", format!("{}ms", self.duration_ms));
        kv("n_peers", self.n_peers.to_string());
        kv("n_servers", self.n_servers.to_string());
        kv("catalog_size", self.catalog_size.to_string());
        kv("zipf_s", self.zipf_s.to_string());
        kv("diurnal_amplitude", self.diurnal_amplitude.to_string());
        kv("diurnal_peak_hour", self.diurnal_peak_hour.to_string());
        kv("peer_exchange_prob", self.peer_exchange_prob.to_string());
        kv("server_source_prob", self.server_source_prob.to_string());
        kv(
            "timeout_no_answer",
            format!("{}ms", self.timeout_no_answer_ms),
        );
        kv(
            "detect_random_content",
            self.detect_random_content.to_string(),
        );
        kv("detect_no_content", self.detect_no_content.to_string());
        kv(
            "startup_discovery_delay",
            format!("{}ms", self.startup_discovery_delay_ms),
        );
        kv("sessions_per_day", self.sessions_per_day.to_string());
        kv("session_mean", format!("{}ms", self.session_mean_ms));
        kv(
            "service_delay_mean",
            format!("{}ms", self.service_delay_mean_ms),
        );
        kv("contact_jitter", format!("{}ms", self.contact_jitter_ms));
        kv("latency", format!("{}ms", self.latency_ms));
        kv("interests_mean", self.interests_mean.to_string());
        kv("shares_mean", self.shares_mean.to_string());
        kv("share_list_prob", self.share_list_prob.to_string());
        kv("low_id_prob", self.low_id_prob.to_string());
        kv("request_bytes", self.request_bytes.to_string());
        if let Some(id) = self.server_client_id {
            kv("server_client_id", id.to_string());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let c = SimConfig {
            seed: 9,
            server_client_id: Some((1 << 24) - 1),
            ..SimConfig::default()
        };
        assert_eq!(SimConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_keys() {
        let c = SimConfig::parse("duration = 2d # two days\nn_peers=10\ndetect_no_content = 2\n")
            .unwrap();
        assert_eq!(c.duration_ms, 2 * DAY_MS);
        assert_eq!(c.n_peers, 10);
        assert_eq!(c.detect_no_content, 2.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SimConfig::parse("detect_no_content = 20\n").is_err());
        assert!(SimConfig::parse("peer_exchange_prob = 1.5\n").is_err());
        assert!(SimConfig::parse("diurnal_amplitude = 1\n").is_err());
        assert!(SimConfig::parse("bogus = 1\n").is_err());
        assert!(matches!(
            SimConfig::parse("nonsense"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }
}
