//! Peer and server message set with a framed binary wire codec.
//!
//! Frame layout: `0xE3`, u32 LE length `N` (opcode + payload), opcode byte,
//! payload. Strings carry a u16 LE length prefix and lists a u32 LE count
//! prefix. All integers are little-endian.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: u8 = 0xE3;
pub const HEADER_LEN: usize = 5;
/// Largest payload (excluding the opcode byte) accepted on either side.
pub const MAX_PAYLOAD: usize = 1 << 24;

/// Client IDs below this value are low IDs.
pub const LOW_ID_LIMIT: u32 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("length field says {declared} bytes but frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("invalid message: {0}")]
    Invalid(&'static str),
}

macro_rules! hex_id {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self)
            }
        }

        impl FromStr for $name {
            type Err = hex::FromHexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let mut out = [0u8; $len];
                hex::decode_to_slice(s, &mut out)?;
                Ok($name(out))
            }
        }
    };
}

hex_id!(UserId, 16);
hex_id!(FileId, 16);

impl FileId {
    /// Content-derived identifier: the first 16 bytes of SHA-256 over the
    /// content. The name never enters the hash.
    pub fn from_content(content: &[u8]) -> FileId {
        let digest = Sha256::digest(content);
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        FileId(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdStatus {
    High,
    Low,
}

impl IdStatus {
    pub fn from_client_id(client_id: u32) -> IdStatus {
        if client_id >= LOW_ID_LIMIT {
            IdStatus::High
        } else {
            IdStatus::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IdStatus::High => "High",
            IdStatus::Low => "Low",
        }
    }
}

impl FromStr for IdStatus {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "High" => Ok(IdStatus::High),
            "Low" => Ok(IdStatus::Low),
            _ => Err(()),
        }
    }
}

/// Identity a peer presents in its HELLO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeerId {
    pub user_id: UserId,
    client_id: u32,
}

impl PeerId {
    pub fn new(user_id: UserId, client_id: u32) -> PeerId {
        PeerId { user_id, client_id }
    }

    pub fn client_id(&self) -> u32 {
        self.client_id
    }

    /// Always derived from the client ID so the two can never disagree.
    pub fn id_status(&self) -> IdStatus {
        IdStatus::from_client_id(self.client_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FileMeta {
    pub file_id: FileId,
    pub name: String,
    pub size: u64,
}

impl FileMeta {
    pub fn new(file_id: FileId, name: impl Into<String>, size: u64) -> FileMeta {
        FileMeta {
            file_id,
            name: name.into(),
            size,
        }
    }
}

/// Payload shared by HELLO and HELLO-ANSWER.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub peer: PeerId,
    pub port: u16,
    pub client_name: String,
    pub client_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ByteRange {
    pub offset: u64,
    pub length: u32,
}

impl ByteRange {
    pub fn new(offset: u64, length: u32) -> ByteRange {
        ByteRange { offset, length }
    }

    /// True if the range is non-empty and ends within a file of `size` bytes.
    pub fn fits(&self, size: u64) -> bool {
        self.length > 0
            && self
                .offset
                .checked_add(u64::from(self.length))
                .is_some_and(|end| end <= size)
    }
}

impl fmt::Display for ByteRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.offset, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Hello,
    HelloAnswer,
    OfferFiles,
    StartUpload,
    AcceptUpload,
    RequestPart,
    SendPart,
    AskSharedList,
    SharedListAnswer,
}

impl MessageKind {
    pub const ALL: [MessageKind; 9] = [
        MessageKind::Hello,
        MessageKind::HelloAnswer,
        MessageKind::OfferFiles,
        MessageKind::StartUpload,
        MessageKind::AcceptUpload,
        MessageKind::RequestPart,
        MessageKind::SendPart,
        MessageKind::AskSharedList,
        MessageKind::SharedListAnswer,
    ];

    pub fn opcode(self) -> u8 {
        match self {
            MessageKind::Hello => 0x01,
            MessageKind::HelloAnswer => 0x4C,
            MessageKind::OfferFiles => 0x15,
            MessageKind::StartUpload => 0x54,
            MessageKind::AcceptUpload => 0x55,
            MessageKind::RequestPart => 0x47,
            MessageKind::SendPart => 0x46,
            MessageKind::AskSharedList => 0x4A,
            MessageKind::SharedListAnswer => 0x4B,
        }
    }

    pub fn from_opcode(op: u8) -> Option<MessageKind> {
        MessageKind::ALL.into_iter().find(|k| k.opcode() == op)
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Hello => "Hello",
            MessageKind::HelloAnswer => "HelloAnswer",
            MessageKind::OfferFiles => "OfferFiles",
            MessageKind::StartUpload => "StartUpload",
            MessageKind::AcceptUpload => "AcceptUpload",
            MessageKind::RequestPart => "RequestPart",
            MessageKind::SendPart => "SendPart",
            MessageKind::AskSharedList => "AskSharedList",
            MessageKind::SharedListAnswer => "SharedListAnswer",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello(Hello),
    HelloAnswer(Hello),
    OfferFiles(Vec<FileMeta>),
    StartUpload(FileId),
    AcceptUpload(FileId),
    RequestPart {
        file_id: FileId,
        ranges: Vec<ByteRange>,
    },
    SendPart {
        file_id: FileId,
        offset: u64,
        data: Vec<u8>,
    },
    AskSharedList,
    SharedListAnswer(Vec<FileMeta>),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Hello(_) => MessageKind::Hello,
            Message::HelloAnswer(_) => MessageKind::HelloAnswer,
            Message::OfferFiles(_) => MessageKind::OfferFiles,
            Message::StartUpload(_) => MessageKind::StartUpload,
            Message::AcceptUpload(_) => MessageKind::AcceptUpload,
            Message::RequestPart { .. } => MessageKind::RequestPart,
            Message::SendPart { .. } => MessageKind::SendPart,
            Message::AskSharedList => MessageKind::AskSharedList,
            Message::SharedListAnswer(_) => MessageKind::SharedListAnswer,
        }
    }
}

/// Little-endian payload writer shared with the control-channel codec.
#[derive(Default)]
pub(crate) struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub(crate) fn string(&mut self, s: &str) -> Result<(), EncodeError> {
        let len = u16::try_from(s.len())
            .map_err(|_| EncodeError::Invalid("string longer than 65535 bytes"))?;
        self.u16(len);
        self.bytes(s.as_bytes());
        Ok(())
    }

    pub(crate) fn count(&mut self, n: usize) -> Result<(), EncodeError> {
        let n = u32::try_from(n).map_err(|_| EncodeError::Oversize(n))?;
        self.u32(n);
        Ok(())
    }

    pub(crate) fn into_frame(self, opcode: u8) -> Result<Vec<u8>, EncodeError> {
        if self.buf.len() > MAX_PAYLOAD {
            return Err(EncodeError::Oversize(self.buf.len()));
        }
        let n = self.buf.len() + 1;
        let mut frame = Vec::with_capacity(HEADER_LEN + n);
        frame.push(MAGIC);
        frame.extend_from_slice(&(n as u32).to_le_bytes());
        frame.push(opcode);
        frame.extend_from_slice(&self.buf);
        Ok(frame)
    }
}

/// Bounds-checked little-endian payload reader.
pub(crate) struct PayloadReader<'a> {
    buf: &'a [u8],
}

impl<'a> PayloadReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        PayloadReader { buf }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Malformed("payload ends early"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn array<const L: usize>(&mut self) -> Result<[u8; L], DecodeError> {
        Ok(self.take(L)?.try_into().unwrap())
    }

    pub(crate) fn string(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::Malformed("string is not UTF-8"))
    }

    /// Reads a count prefix, rejecting counts that cannot fit in the
    /// remaining bytes given the minimum encoded size of one element.
    pub(crate) fn count(&mut self, min_elem: usize) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem) > self.buf.len() {
            return Err(DecodeError::Malformed("list count exceeds payload"));
        }
        Ok(n)
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    pub(crate) fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Malformed("trailing bytes after payload"))
        }
    }
}

fn write_hello(w: &mut PayloadWriter, h: &Hello) -> Result<(), EncodeError> {
    w.bytes(h.peer.user_id.as_bytes());
    w.u32(h.peer.client_id());
    w.u16(h.port);
    w.string(&h.client_name)?;
    w.u32(h.client_version);
    Ok(())
}

fn read_hello(r: &mut PayloadReader<'_>) -> Result<Hello, DecodeError> {
    let user_id = UserId(r.array()?);
    let client_id = r.u32()?;
    let port = r.u16()?;
    let client_name = r.string()?;
    let client_version = r.u32()?;
    Ok(Hello {
        peer: PeerId::new(user_id, client_id),
        port,
        client_name,
        client_version,
    })
}

pub(crate) fn write_files(w: &mut PayloadWriter, files: &[FileMeta]) -> Result<(), EncodeError> {
    w.count(files.len())?;
    for f in files {
        if f.size == 0 {
            return Err(EncodeError::Invalid("file size must be positive"));
        }
        w.bytes(f.file_id.as_bytes());
        w.string(&f.name)?;
        w.u64(f.size);
    }
    Ok(())
}

// file_id + name length prefix + size
const FILE_META_MIN: usize = 16 + 2 + 8;

pub(crate) fn read_files(r: &mut PayloadReader<'_>) -> Result<Vec<FileMeta>, DecodeError> {
    let n = r.count(FILE_META_MIN)?;
    let mut files = Vec::with_capacity(n);
    for _ in 0..n {
        let file_id = FileId(r.array()?);
        let name = r.string()?;
        let size = r.u64()?;
        if size == 0 {
            return Err(DecodeError::Malformed("file size is zero"));
        }
        files.push(FileMeta {
            file_id,
            name,
            size,
        });
    }
    Ok(files)
}

/// Checks the [`Message`] invariants that the codec can see.
pub fn validate(msg: &Message) -> Result<(), EncodeError> {
    match msg {
        Message::RequestPart { ranges, .. } => {
            if ranges.is_empty() {
                return Err(EncodeError::Invalid("RequestPart needs at least one range"));
            }
            if ranges.iter().any(|r| r.length == 0) {
                return Err(EncodeError::Invalid("RequestPart range has zero length"));
            }
            Ok(())
        }
        Message::OfferFiles(files) | Message::SharedListAnswer(files) => {
            if files.iter().any(|f| f.size == 0) {
                return Err(EncodeError::Invalid("file size must be positive"));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    validate(msg)?;
    let mut w = PayloadWriter::default();
    match msg {
        Message::Hello(h) | Message::HelloAnswer(h) => write_hello(&mut w, h)?,
        Message::OfferFiles(files) | Message::SharedListAnswer(files) => {
            write_files(&mut w, files)?
        }
        Message::StartUpload(id) | Message::AcceptUpload(id) => w.bytes(id.as_bytes()),
        Message::RequestPart { file_id, ranges } => {
            w.bytes(file_id.as_bytes());
            w.count(ranges.len())?;
            for r in ranges {
                w.u64(r.offset);
                w.u32(r.length);
            }
        }
        Message::SendPart {
            file_id,
            offset,
            data,
        } => {
            if data.len() > MAX_PAYLOAD {
                return Err(EncodeError::Oversize(data.len()));
            }
            w.bytes(file_id.as_bytes());
            w.u64(*offset);
            w.bytes(data);
        }
        Message::AskSharedList => {}
    }
    w.into_frame(msg.kind().opcode())
}

/// Splits the header of a frame. Returns the opcode and payload slice.
///
/// The input must hold exactly one frame.
pub(crate) fn split_frame(frame: &[u8]) -> Result<(u8, &[u8]), DecodeError> {
    if frame.len() < HEADER_LEN + 1 {
        if let Some(&b) = frame.first() {
            if b != MAGIC {
                return Err(DecodeError::BadMagic(b));
            }
        }
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN + 1,
            available: frame.len(),
        });
    }
    if frame[0] != MAGIC {
        return Err(DecodeError::BadMagic(frame[0]));
    }
    let declared = u32::from_le_bytes(frame[1..5].try_into().unwrap()) as usize;
    let actual = frame.len() - HEADER_LEN;
    if declared == 0 || declared > MAX_PAYLOAD + 1 {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }
    if actual < declared {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN + declared,
            available: frame.len(),
        });
    }
    if actual > declared {
        return Err(DecodeError::LengthMismatch { declared, actual });
    }
    Ok((frame[5], &frame[6..]))
}

/// Reports how many bytes the next frame in `buf` occupies, or `None` if
/// more bytes are needed. Used by stream readers.
pub fn frame_length(buf: &[u8]) -> Result<Option<usize>, DecodeError> {
    match buf.first() {
        None => return Ok(None),
        Some(&b) if b != MAGIC => return Err(DecodeError::BadMagic(b)),
        _ => {}
    }
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let declared = u32::from_le_bytes(buf[1..5].try_into().unwrap()) as usize;
    if declared == 0 || declared > MAX_PAYLOAD + 1 {
        return Err(DecodeError::LengthMismatch {
            declared,
            actual: buf.len() - HEADER_LEN,
        });
    }
    let total = HEADER_LEN + declared;
    Ok((buf.len() >= total).then_some(total))
}

pub fn decode_message(frame: &[u8]) -> Result<Message, DecodeError> {
    let (opcode, payload) = split_frame(frame)?;
    let kind = MessageKind::from_opcode(opcode).ok_or(DecodeError::UnknownOpcode(opcode))?;
    let mut r = PayloadReader::new(payload);
    let msg = match kind {
        MessageKind::Hello => Message::Hello(read_hello(&mut r)?),
        MessageKind::HelloAnswer => Message::HelloAnswer(read_hello(&mut r)?),
        MessageKind::OfferFiles => Message::OfferFiles(read_files(&mut r)?),
        MessageKind::SharedListAnswer => Message::SharedListAnswer(read_files(&mut r)?),
        MessageKind::StartUpload => Message::StartUpload(FileId(r.array()?)),
        MessageKind::AcceptUpload => Message::AcceptUpload(FileId(r.array()?)),
        MessageKind::RequestPart => {
            let file_id = FileId(r.array()?);
            let n = r.count(12)?;
            if n == 0 {
                return Err(DecodeError::Malformed("RequestPart without ranges"));
            }
            let mut ranges = Vec::with_capacity(n);
            for _ in 0..n {
                let offset = r.u64()?;
                let length = r.u32()?;
                if length == 0 {
                    return Err(DecodeError::Malformed("RequestPart range has zero length"));
                }
                ranges.push(ByteRange { offset, length });
            }
            Message::RequestPart { file_id, ranges }
        }
        MessageKind::SendPart => {
            let file_id = FileId(r.array()?);
            let offset = r.u64()?;
            let data = r.rest().to_vec();
            Message::SendPart {
                file_id,
                offset,
                data,
            }
        }
        MessageKind::AskSharedList => Message::AskSharedList,
    };
    r.finish()?;
    Ok(msg)
}
