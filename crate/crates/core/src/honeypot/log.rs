//! Query log records, shared-list records, their line format, and sinks.
//!
//! A honeypot log starts with `#hnl1<TAB><honeypot_id>` followed by one
//! record per line with 14 tab-separated fields. Absent optional fields are
//! written as `-`. Free-text fields escape `\`, tab, CR and LF, and a literal
//! `-` is written as `\-`.

use std::collections::VecDeque;
use std::fmt::{self, Display, Write as _};
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::{ByteRange, FileId, FileMeta, IdStatus, UserId};
use crate::time::Timestamp;

pub const LOG_HEADER: &str = "#hnl1";
pub const UNIFIED_HEADER: &str = "#hnl1-unified";
pub const SHARES_HEADER: &str = "#hnl1-shares";
pub const UNIFIED_SHARES_HEADER: &str = "#hnl1-unified-shares";

const FIELDS: usize = 14;
const SHARE_FIELDS: usize = 6;

/// The three message kinds that are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoggedKind {
    Hello,
    StartUpload,
    RequestPart,
}

impl LoggedKind {
    pub const ALL: [LoggedKind; 3] = [
        LoggedKind::Hello,
        LoggedKind::StartUpload,
        LoggedKind::RequestPart,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LoggedKind::Hello => "Hello",
            LoggedKind::StartUpload => "StartUpload",
            LoggedKind::RequestPart => "RequestPart",
        }
    }
}

impl Display for LoggedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoggedKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Hello" | "hello" => Ok(LoggedKind::Hello),
            "StartUpload" | "start-upload" => Ok(LoggedKind::StartUpload),
            "RequestPart" | "request-part" => Ok(LoggedKind::RequestPart),
            other => Err(format!("unknown message kind {other:?}")),
        }
    }
}

/// One received query. `P` is the peer reference: an [`IpToken`] in
/// honeypot logs, a dense integer in the unified log.
///
/// [`IpToken`]: crate::anonymize::IpToken
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord<P> {
    pub timestamp: Timestamp,
    pub honeypot_id: String,
    pub kind: LoggedKind,
    pub peer: P,
    pub peer_port: u16,
    pub peer_name: Option<String>,
    pub peer_user_id: Option<UserId>,
    pub client_version: Option<u32>,
    pub id_status: Option<IdStatus>,
    pub server_name: String,
    pub server_ip: String,
    pub server_port: u16,
    pub file_id: Option<FileId>,
    pub ranges: Option<Vec<ByteRange>>,
}

impl<P> LogRecord<P> {
    pub fn map_peer<Q>(self, f: impl FnOnce(P) -> Q) -> LogRecord<Q> {
        LogRecord {
            timestamp: self.timestamp,
            honeypot_id: self.honeypot_id,
            kind: self.kind,
            peer: f(self.peer),
            peer_port: self.peer_port,
            peer_name: self.peer_name,
            peer_user_id: self.peer_user_id,
            client_version: self.client_version,
            id_status: self.id_status,
            server_name: self.server_name,
            server_ip: self.server_ip,
            server_port: self.server_port,
            file_id: self.file_id,
            ranges: self.ranges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShareOwner<P> {
    /// The honeypot itself added the file to its shared list.
    Honeypot,
    Peer(P),
}

/// One file seen in a shared list, either the honeypot's own or a peer's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareRecord<P> {
    pub timestamp: Timestamp,
    pub honeypot_id: String,
    pub owner: ShareOwner<P>,
    pub file: FileMeta,
}

impl<P> ShareRecord<P> {
    pub fn map_peer<Q>(self, f: impl FnOnce(P) -> Q) -> ShareRecord<Q> {
        ShareRecord {
            timestamp: self.timestamp,
            honeypot_id: self.honeypot_id,
            owner: match self.owner {
                ShareOwner::Honeypot => ShareOwner::Honeypot,
                ShareOwner::Peer(p) => ShareOwner::Peer(f(p)),
            },
            file: self.file,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LineError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("bad {field} field: {value:?}")]
    Field { field: &'static str, value: String },
    #[error("bad escape sequence in {0:?}")]
    Escape(String),
}

fn bad(field: &'static str, value: &str) -> LineError {
    LineError::Field {
        field,
        value: value.to_string(),
    }
}

pub fn escape_text(s: &str) -> String {
    if s == "-" {
        return "\\-".to_string();
    }
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_text(s: &str) -> Result<String, LineError> {
    if s == "\\-" {
        return Ok("-".to_string());
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            _ => return Err(LineError::Escape(s.to_string())),
        }
    }
    Ok(out)
}

fn opt<T: Display>(v: &Option<T>) -> String {
    match v {
        Some(v) => v.to_string(),
        None => "-".to_string(),
    }
}

fn parse_opt<T: FromStr>(field: &'static str, s: &str) -> Result<Option<T>, LineError> {
    if s == "-" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| bad(field, s))
    }
}

fn format_ranges(ranges: &[ByteRange]) -> String {
    let mut out = String::new();
    for (i, r) in ranges.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}:{}", r.offset, r.length);
    }
    out
}

fn parse_ranges(s: &str) -> Result<Option<Vec<ByteRange>>, LineError> {
    if s == "-" {
        return Ok(None);
    }
    s.split(',')
        .map(|pair| {
            let (off, len) = pair.split_once(':').ok_or_else(|| bad("ranges", s))?;
            Ok(ByteRange {
                offset: off.parse().map_err(|_| bad("ranges", s))?,
                length: len.parse().map_err(|_| bad("ranges", s))?,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

impl<P: Display> LogRecord<P> {
    pub fn to_line(&self) -> String {
        let fields: [String; FIELDS] = [
            self.timestamp.to_string(),
            escape_text(&self.honeypot_id),
            self.kind.to_string(),
            self.peer.to_string(),
            self.peer_port.to_string(),
            self.peer_name
                .as_deref()
                .map_or_else(|| "-".to_string(), escape_text),
            opt(&self.peer_user_id),
            opt(&self.client_version),
            self.id_status
                .map_or_else(|| "-".to_string(), |s| s.as_str().to_string()),
            escape_text(&self.server_name),
            escape_text(&self.server_ip),
            self.server_port.to_string(),
            opt(&self.file_id),
            self.ranges
                .as_deref()
                .map_or_else(|| "-".to_string(), format_ranges),
        ];
        fields.join("\t")
    }
}

impl<P: FromStr> LogRecord<P> {
    pub fn parse_line(line: &str) -> Result<LogRecord<P>, LineError> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != FIELDS {
            return Err(LineError::FieldCount {
                expected: FIELDS,
                found: f.len(),
            });
        }
        Ok(LogRecord {
            timestamp: f[0].parse().map_err(|_| bad("timestamp", f[0]))?,
            honeypot_id: unescape_text(f[1])?,
            kind: f[2].parse().map_err(|_| bad("message_kind", f[2]))?,
            peer: f[3].parse().map_err(|_| bad("peer", f[3]))?,
            peer_port: f[4].parse().map_err(|_| bad("peer_port", f[4]))?,
            peer_name: if f[5] == "-" {
                None
            } else {
                Some(unescape_text(f[5])?)
            },
            peer_user_id: parse_opt("peer_user_id", f[6])?,
            client_version: parse_opt("client_version", f[7])?,
            id_status: parse_opt("id_status", f[8])?,
            server_name: unescape_text(f[9])?,
            server_ip: unescape_text(f[10])?,
            server_port: f[11].parse().map_err(|_| bad("server_port", f[11]))?,
            file_id: parse_opt("file_id", f[12])?,
            ranges: parse_ranges(f[13])?,
        })
    }
}

impl<P: Display> ShareRecord<P> {
    pub fn to_line(&self) -> String {
        let owner = match &self.owner {
            ShareOwner::Honeypot => "self".to_string(),
            ShareOwner::Peer(p) => p.to_string(),
        };
        [
            self.timestamp.to_string(),
            escape_text(&self.honeypot_id),
            owner,
            self.file.file_id.to_string(),
            self.file.size.to_string(),
            escape_text(&self.file.name),
        ]
        .join("\t")
    }
}

impl<P: FromStr> ShareRecord<P> {
    pub fn parse_line(line: &str) -> Result<ShareRecord<P>, LineError> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != SHARE_FIELDS {
            return Err(LineError::FieldCount {
                expected: SHARE_FIELDS,
                found: f.len(),
            });
        }
        let owner = if f[2] == "self" {
            ShareOwner::Honeypot
        } else {
            ShareOwner::Peer(f[2].parse().map_err(|_| bad("owner", f[2]))?)
        };
        let size: u64 = f[4].parse().map_err(|_| bad("size", f[4]))?;
        if size == 0 {
            return Err(bad("size", f[4]));
        }
        Ok(ShareRecord {
            timestamp: f[0].parse().map_err(|_| bad("timestamp", f[0]))?,
            honeypot_id: unescape_text(f[1])?,
            owner,
            file: FileMeta {
                file_id: f[3].parse().map_err(|_| bad("file_id", f[3]))?,
                size,
                name: unescape_text(f[5])?,
            },
        })
    }
}

pub fn log_header(honeypot_id: &str) -> String {
    format!("{LOG_HEADER}\t{}", escape_text(honeypot_id))
}

pub fn shares_header(honeypot_id: &str) -> String {
    format!("{SHARES_HEADER}\t{}", escape_text(honeypot_id))
}

/// Destination for formatted log lines.
pub trait LogSink {
    fn write_line(&mut self, line: &str) -> io::Result<()>;
}

/// Appends `record` to `sink`. The peer field is an [`IpToken`] by type, so
/// raw addresses cannot reach a sink through this path.
///
/// [`IpToken`]: crate::anonymize::IpToken
pub fn append_log<S: LogSink + ?Sized>(
    record: &LogRecord<crate::anonymize::IpToken>,
    sink: &mut S,
) -> io::Result<()> {
    sink.write_line(&record.to_line())
}

/// Sink over any writer (a file, or a stream to the manager). Each line is
/// flushed before `write_line` returns.
pub struct WriterSink<W: Write> {
    writer: W,
}

impl<W: Write> WriterSink<W> {
    /// Writes `header` as the first line.
    pub fn with_header(mut writer: W, header: &str) -> io::Result<Self> {
        writeln!(writer, "{header}")?;
        writer.flush()?;
        Ok(WriterSink { writer })
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> LogSink for WriterSink<W> {
    fn write_line(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub lines: Vec<String>,
}

impl LogSink for MemorySink {
    fn write_line(&mut self, line: &str) -> io::Result<()> {
        self.lines.push(line.to_string());
        Ok(())
    }
}

/// Holds lines in a bounded queue while the inner sink is failing. When the
/// queue is full the oldest line is dropped and counted.
pub struct BufferedSink<S> {
    inner: S,
    pending: VecDeque<String>,
    bound: usize,
    dropped: u64,
}

impl<S: LogSink> BufferedSink<S> {
    pub fn new(inner: S, bound: usize) -> Self {
        BufferedSink {
            inner,
            pending: VecDeque::new(),
            bound: bound.max(1),
            dropped: 0,
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.inner
    }

    /// Retries buffered lines in order. Stops at the first failure.
    pub fn flush_pending(&mut self) -> io::Result<()> {
        while let Some(line) = self.pending.front() {
            self.inner.write_line(line)?;
            self.pending.pop_front();
        }
        Ok(())
    }

    fn enqueue(&mut self, line: &str) {
        if self.pending.len() == self.bound {
            self.pending.pop_front();
            self.dropped += 1;
        }
        self.pending.push_back(line.to_string());
    }
}

impl<S: LogSink> LogSink for BufferedSink<S> {
    /// Never fails: lines that cannot be delivered are buffered.
    fn write_line(&mut self, line: &str) -> io::Result<()> {
        if self.flush_pending().is_err() {
            self.enqueue(line);
            return Ok(());
        }
        if self.inner.write_line(line).is_err() {
            self.enqueue(line);
        }
        Ok(())
    }
}

/// Parses a honeypot log (header + records). Malformed record lines are
/// skipped and counted.
pub struct ParsedLog<P> {
    pub honeypot_id: Option<String>,
    pub unified: bool,
    pub records: Vec<LogRecord<P>>,
    pub malformed: usize,
}

pub fn parse_log<P: FromStr>(text: &str) -> ParsedLog<P> {
    let mut out = ParsedLog {
        honeypot_id: None,
        unified: false,
        records: Vec::new(),
        malformed: 0,
    };
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if rest == &UNIFIED_HEADER[1..] {
                out.unified = true;
            } else if let Some(id) = line
                .strip_prefix(LOG_HEADER)
                .and_then(|r| r.strip_prefix('\t'))
            {
                out.honeypot_id = unescape_text(id).ok();
            }
            continue;
        }
        match LogRecord::parse_line(line) {
            Ok(r) => out.records.push(r),
            Err(_) => out.malformed += 1,
        }
    }
    out
}

pub struct ParsedShares<P> {
    pub unified: bool,
    pub records: Vec<ShareRecord<P>>,
    pub malformed: usize,
}

pub fn parse_shares<P: FromStr>(text: &str) -> ParsedShares<P> {
    let mut out = ParsedShares {
        unified: false,
        records: Vec::new(),
        malformed: 0,
    };
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if line == UNIFIED_SHARES_HEADER {
                out.unified = true;
            }
            continue;
        }
        match ShareRecord::parse_line(line) {
            Ok(r) => out.records.push(r),
            Err(_) => out.malformed += 1,
        }
    }
    out
}
