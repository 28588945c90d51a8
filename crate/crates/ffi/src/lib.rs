//! C ABI over `hnl-core`.
//!
//! Every function returns an [`HnlStatus`]; on failure a message is kept in
//! thread-local storage and can be fetched with [`hnl_last_error`]. Objects
//! are opaque handles created by `hnl_*_new`/`hnl_*_load` and released by
//! the matching `hnl_*_free`. Variable-length outputs are copied into
//! caller buffers: when a buffer is too small the call returns
//! `HNL_STATUS_BUFFER_TOO_SMALL`, stores the needed size and consumes
//! nothing, so it can be retried.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hnl_core::analysis::{self, UnifiedLog};
use hnl_core::anonymize::{CampaignSalt, IpHasher};
use hnl_core::honeypot::log::{log_header, shares_header};
use hnl_core::honeypot::{Connection, Honeypot, HoneypotConfig, Strategy};
use hnl_core::manager::DeploymentPlan;
use hnl_core::protocol::{self, ByteRange, FileId, FileMeta, Message};
use hnl_core::simnet::{self, SimConfig};
use hnl_core::time::Timestamp;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HnlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Decode = 3,
    Encode = 4,
    Io = 5,
    Parse = 6,
    Analysis = 7,
    BufferTooSmall = 8,
    Incomplete = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HnlStrategy {
    NoContent = 0,
    RandomContent = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HnlSummary {
    pub n_honeypots: u64,
    pub duration_days: u64,
    pub n_shared_files: u64,
    pub n_distinct_peers: u64,
    pub n_distinct_files: u64,
    pub total_distinct_file_bytes: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HnlSubsetPoint {
    pub n: u64,
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    /// Non-zero when every subset was enumerated.
    pub exhaustive: u8,
}

/// A decoded wire message.
pub struct HnlMessage(Message);

/// Salted IP hasher.
pub struct HnlHasher(IpHasher);

/// A honeypot driven frame by frame; the caller owns the sockets.
pub struct HnlHoneypot {
    core: Honeypot,
    conns: BTreeMap<u64, Connection>,
    replies: Vec<u8>,
    log: String,
    shares: String,
}

/// A loaded unified log.
pub struct HnlLog(UnifiedLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HnlStatus, String);

impl Failure {
    fn new(status: HnlStatus, msg: impl ToString) -> Failure {
        Failure(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HnlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HnlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HnlStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(
            HnlStatus::NullPointer,
            format!("{what} is null"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(HnlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn array<const N: usize>(p: *const u8, what: &str) -> Result<[u8; N], Failure> {
    non_null(p, what)?;
    let mut a = [0u8; N];
    a.copy_from_slice(std::slice::from_raw_parts(p, N));
    Ok(a)
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    non_null(p, what)?;
    Ok(&mut *p)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    non_null(out, "output handle")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `src` into `out` when it fits; always stores the size in `written`.
unsafe fn copy_out(
    src: &[u8],
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> Result<(), Failure> {
    non_null(written, "written")?;
    *written = src.len();
    if src.len() > cap {
        return Err(Failure::new(
            HnlStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        non_null(out, "output buffer")?;
        std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hnl_status_str(status: HnlStatus) -> *const c_char {
    let s: &'static CStr = match status {
        HnlStatus::Ok => c"ok",
        HnlStatus::NullPointer => c"null pointer",
        HnlStatus::InvalidArgument => c"invalid argument",
        HnlStatus::Decode => c"decode error",
        HnlStatus::Encode => c"encode error",
        HnlStatus::Io => c"i/o error",
        HnlStatus::Parse => c"parse error",
        HnlStatus::Analysis => c"analysis error",
        HnlStatus::BufferTooSmall => c"buffer too small",
        HnlStatus::Incomplete => c"incomplete frame",
        HnlStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `cap`) and returns its full length without the NUL.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn hnl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let msg = e.as_ref().map(|c| c.as_bytes()).unwrap_or(b"");
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// ---- codec ----

/// Size of the complete frame at the start of `buf`; `HNL_STATUS_INCOMPLETE`
/// when more bytes are needed.
///
/// # Safety
/// `buf` must be valid for `len` bytes; `frame_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_frame_length(
    buf: *const u8,
    len: usize,
    frame_len: *mut usize,
) -> HnlStatus {
    guard(|| {
        let b = bytes(buf, len, "buf")?;
        non_null(frame_len, "frame_len")?;
        match protocol::frame_length(b) {
            Ok(Some(n)) => {
                *frame_len = n;
                Ok(())
            }
            Ok(None) => Err(Failure::new(HnlStatus::Incomplete, "more bytes needed")),
            Err(e) => Err(Failure::new(HnlStatus::Decode, e)),
        }
    })
}

/// Decodes exactly one frame.
///
/// # Safety
/// `buf` must be valid for `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_message_decode(
    buf: *const u8,
    len: usize,
    out: *mut *mut HnlMessage,
) -> HnlStatus {
    guard(|| {
        let msg = protocol::decode_message(bytes(buf, len, "buf")?)
            .map_err(|e| Failure::new(HnlStatus::Decode, e))?;
        put(out, HnlMessage(msg))
    })
}

/// A StartUpload message for a 16-byte file id.
///
/// # Safety
/// `file_id` must point at 16 bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_message_start_upload(
    file_id: *const u8,
    out: *mut *mut HnlMessage,
) -> HnlStatus {
    guard(|| {
        let file_id = FileId(array(file_id, "file_id")?);
        put(out, HnlMessage(Message::StartUpload(file_id)))
    })
}

/// A RequestPart message for one byte range.
///
/// # Safety
/// `file_id` must point at 16 bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_message_request_part(
    file_id: *const u8,
    offset: u64,
    length: u32,
    out: *mut *mut HnlMessage,
) -> HnlStatus {
    guard(|| {
        let file_id = FileId(array(file_id, "file_id")?);
        put(
            out,
            HnlMessage(Message::RequestPart {
                file_id,
                ranges: vec![ByteRange::new(offset, length)],
            }),
        )
    })
}

/// The message's opcode byte.
///
/// # Safety
/// `msg` must be a live message handle; `opcode` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_message_opcode(msg: *const HnlMessage, opcode: *mut u8) -> HnlStatus {
    guard(|| {
        non_null(msg, "msg")?;
        non_null(opcode, "opcode")?;
        *opcode = (*msg).0.kind().opcode();
        Ok(())
    })
}

/// Encodes `msg` into `out`.
///
/// # Safety
/// `msg` must be a live handle; `out` valid for `cap` bytes; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_message_encode(
    msg: *const HnlMessage,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HnlStatus {
    guard(|| {
        non_null(msg, "msg")?;
        let frame =
            protocol::encode_message(&(*msg).0).map_err(|e| Failure::new(HnlStatus::Encode, e))?;
        copy_out(&frame, out, cap, written)
    })
}

/// # Safety
/// `msg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hnl_message_free(msg: *mut HnlMessage) {
    free(msg)
}

// ---- anonymization ----

/// A hasher keyed by a 32-byte campaign salt.
///
/// # Safety
/// `salt` must point at 32 bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_hasher_new(salt: *const u8, out: *mut *mut HnlHasher) -> HnlStatus {
    guard(|| {
        put(
            out,
            HnlHasher(IpHasher::new(CampaignSalt(array(salt, "salt")?))),
        )
    })
}

/// Hashes an IPv4 address given as a host-order integer (`a.b.c.d` is
/// `a << 24 | b << 16 | c << 8 | d`) into 32 bytes.
///
/// # Safety
/// `hasher` must be live; `digest` must be writable for 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn hnl_hasher_hash_ip(
    hasher: *const HnlHasher,
    ip: u32,
    digest: *mut u8,
) -> HnlStatus {
    guard(|| {
        non_null(hasher, "hasher")?;
        non_null(digest, "digest")?;
        let token = (*hasher).0.hash_ip(Ipv4Addr::from(ip));
        std::ptr::copy_nonoverlapping(token.as_bytes().as_ptr(), digest, 32);
        Ok(())
    })
}

/// # Safety
/// `hasher` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hnl_hasher_free(hasher: *mut HnlHasher) {
    free(hasher)
}

// ---- honeypot ----

/// A disconnected honeypot. `salt` may be null for an all-zero salt.
///
/// # Safety
/// `id` must be a NUL-terminated string; `salt` null or 32 bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_new(
    id: *const c_char,
    strategy: HnlStrategy,
    salt: *const u8,
    started_ms: u64,
    out: *mut *mut HnlHoneypot,
) -> HnlStatus {
    guard(|| {
        let id = text(id, "id")?;
        let salt = if salt.is_null() {
            [0u8; 32]
        } else {
            array(salt, "salt")?
        };
        let strategy = match strategy {
            HnlStrategy::NoContent => Strategy::NoContent,
            HnlStrategy::RandomContent => Strategy::RandomContent,
        };
        let core = Honeypot::new(
            HoneypotConfig::new(id, strategy),
            IpHasher::new(CampaignSalt(salt)),
            Timestamp(started_ms),
        );
        put(
            out,
            HnlHoneypot {
                core,
                conns: BTreeMap::new(),
                replies: Vec::new(),
                log: format!("{}\n", log_header(id)),
                shares: format!("{}\n", shares_header(id)),
            },
        )
    })
}

/// Adds a file to the shared list.
///
/// # Safety
/// `hp` must be live; `file_id` 16 bytes; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_share(
    hp: *mut HnlHoneypot,
    file_id: *const u8,
    name: *const c_char,
    size: u64,
    now_ms: u64,
) -> HnlStatus {
    guard(|| {
        let hp = handle(hp, "hp")?;
        let meta = FileMeta::new(
            FileId(array(file_id, "file_id")?),
            text(name, "name")?,
            size,
        );
        hp.core.offer_files(&[meta], Timestamp(now_ms));
        Ok(())
    })
}

/// Handles one frame received on connection `conn` from `ip:port` (`ip` as
/// in [`hnl_hasher_hash_ip`]). Replies are queued for
/// [`hnl_honeypot_take_replies`]; log lines for [`hnl_honeypot_take_log`].
///
/// # Safety
/// `hp` must be live; `frame` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_feed(
    hp: *mut HnlHoneypot,
    conn: u64,
    ip: u32,
    port: u16,
    frame: *const u8,
    len: usize,
    now_ms: u64,
) -> HnlStatus {
    guard(|| {
        let hp = handle(hp, "hp")?;
        let msg = protocol::decode_message(bytes(frame, len, "frame")?)
            .map_err(|e| Failure::new(HnlStatus::Decode, e))?;
        let c = hp
            .conns
            .entry(conn)
            .or_insert_with(|| Connection::new(Ipv4Addr::from(ip), port));
        let out = hp.core.handle_peer_message(c, msg, Timestamp(now_ms));
        for m in &out.to_peer {
            let f = protocol::encode_message(m).map_err(|e| Failure::new(HnlStatus::Encode, e))?;
            hp.replies.extend_from_slice(&f);
        }
        for r in &out.records {
            hp.log.push_str(&r.to_line());
            hp.log.push('\n');
        }
        for s in &out.shares {
            hp.shares.push_str(&s.to_line());
            hp.shares.push('\n');
        }
        Ok(())
    })
}

/// Forgets connection `conn`.
///
/// # Safety
/// `hp` must be live.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_close(hp: *mut HnlHoneypot, conn: u64) -> HnlStatus {
    guard(|| {
        let hp = handle(hp, "hp")?;
        if let Some(c) = hp.conns.remove(&conn) {
            hp.core.peer_disconnected(&c);
        }
        Ok(())
    })
}

/// Moves the queued reply frames (concatenated) into `out`.
///
/// # Safety
/// `hp` must be live; `out` valid for `cap` bytes; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_take_replies(
    hp: *mut HnlHoneypot,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HnlStatus {
    guard(|| {
        let hp = handle(hp, "hp")?;
        copy_out(&hp.replies, out, cap, written)?;
        hp.replies.clear();
        Ok(())
    })
}

/// Moves the log text written so far (header included on first call) into
/// `out`. Not NUL-terminated.
///
/// # Safety
/// `hp` must be live; `out` valid for `cap` bytes; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_take_log(
    hp: *mut HnlHoneypot,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HnlStatus {
    guard(|| {
        let hp = handle(hp, "hp")?;
        copy_out(hp.log.as_bytes(), out, cap, written)?;
        hp.log.clear();
        Ok(())
    })
}

/// Like [`hnl_honeypot_take_log`] for retrieved shared-list records.
///
/// # Safety
/// As for [`hnl_honeypot_take_log`].
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_take_shares(
    hp: *mut HnlHoneypot,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HnlStatus {
    guard(|| {
        let hp = handle(hp, "hp")?;
        copy_out(hp.shares.as_bytes(), out, cap, written)?;
        hp.shares.clear();
        Ok(())
    })
}

/// # Safety
/// `hp` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hnl_honeypot_free(hp: *mut HnlHoneypot) {
    free(hp)
}

// ---- analysis ----

/// Loads a unified log file (and its sibling `.shares`, if any).
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_log_load(path: *const c_char, out: *mut *mut HnlLog) -> HnlStatus {
    guard(|| {
        let path = text(path, "path")?;
        let log = UnifiedLog::load(Path::new(path)).map_err(|e| match e {
            analysis::AnalysisError::Io(_) => Failure::new(HnlStatus::Io, e),
            _ => Failure::new(HnlStatus::Parse, e),
        })?;
        put(out, HnlLog(log))
    })
}

/// Parses unified log text; `shares` may be null.
///
/// # Safety
/// `log` NUL-terminated; `shares` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_log_from_text(
    log: *const c_char,
    shares: *const c_char,
    out: *mut *mut HnlLog,
) -> HnlStatus {
    guard(|| {
        let log = text(log, "log")?;
        let shares = if shares.is_null() {
            None
        } else {
            Some(text(shares, "shares")?)
        };
        let parsed =
            UnifiedLog::from_text(log, shares).map_err(|e| Failure::new(HnlStatus::Parse, e))?;
        put(out, HnlLog(parsed))
    })
}

/// Number of records.
///
/// # Safety
/// `log` must be live; `n` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_log_len(log: *const HnlLog, n: *mut u64) -> HnlStatus {
    guard(|| {
        non_null(log, "log")?;
        non_null(n, "n")?;
        *n = (*log).0.records.len() as u64;
        Ok(())
    })
}

/// # Safety
/// `log` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_log_summary(log: *const HnlLog, out: *mut HnlSummary) -> HnlStatus {
    guard(|| {
        non_null(log, "log")?;
        non_null(out, "out")?;
        let s = analysis::summary_table(&(*log).0);
        *out = HnlSummary {
            n_honeypots: s.n_honeypots as u64,
            duration_days: s.duration_days,
            n_shared_files: s.n_shared_files as u64,
            n_distinct_peers: s.n_distinct_peers as u64,
            n_distinct_files: s.n_distinct_files as u64,
            total_distinct_file_bytes: s.total_distinct_file_bytes,
        };
        Ok(())
    })
}

/// Distinct peers seen by subsets of `n` honeypots.
///
/// # Safety
/// `log` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hnl_log_honeypot_subsets(
    log: *const HnlLog,
    n: u64,
    trials: u64,
    seed: u64,
    out: *mut HnlSubsetPoint,
) -> HnlStatus {
    guard(|| {
        non_null(log, "log")?;
        non_null(out, "out")?;
        let p = analysis::resample_honeypot_subsets(&(*log).0, n as usize, trials as usize, seed)
            .map_err(|e| Failure::new(HnlStatus::Analysis, e))?;
        *out = HnlSubsetPoint {
            n: p.n as u64,
            avg: p.avg,
            min: p.min,
            max: p.max,
            exhaustive: p.exhaustive as u8,
        };
        Ok(())
    })
}

/// # Safety
/// `log` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hnl_log_free(log: *mut HnlLog) {
    free(log)
}

// ---- simulation ----

/// Runs a simulation and writes its outputs under `out_dir`. `config` may
/// be null for defaults; both texts use the file formats of the CLI.
///
/// # Safety
/// Strings must be NUL-terminated (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn hnl_run_sim(
    config: *const c_char,
    plan: *const c_char,
    out_dir: *const c_char,
) -> HnlStatus {
    guard(|| {
        let cfg = if config.is_null() {
            SimConfig::default()
        } else {
            SimConfig::parse(text(config, "config")?)
                .map_err(|e| Failure::new(HnlStatus::Parse, e))?
        };
        let plan = DeploymentPlan::parse(text(plan, "plan")?)
            .map_err(|e| Failure::new(HnlStatus::Parse, e))?;
        let out_dir = text(out_dir, "out_dir")?;
        let output = simnet::run_simulation(&cfg, &plan)
            .map_err(|e| Failure::new(HnlStatus::InvalidArgument, e))?;
        output
            .write_to(Path::new(out_dir))
            .map_err(|e| Failure::new(HnlStatus::Io, e))
    })
}
