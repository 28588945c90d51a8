//! Manager to honeypot control channel. Uses the peer-protocol framing with
//! opcodes 0xF0..=0xF4.

use std::net::{Ipv4Addr, SocketAddrV4};

use crate::anonymize::CampaignSalt;
use crate::honeypot::{StatusReport, Strategy};
use crate::protocol::{
    read_files, split_frame, write_files, DecodeError, EncodeError, FileMeta, IdStatus,
    PayloadReader, PayloadWriter,
};

pub const OP_START: u8 = 0xF0;
pub const OP_STATUS: u8 = 0xF1;
pub const OP_ADVERTISE: u8 = 0xF2;
pub const OP_SHIP_LOGS: u8 = 0xF3;
pub const OP_STOP: u8 = 0xF4;

#[derive(Debug, Clone, PartialEq)]
pub struct StartOrder {
    pub honeypot_id: String,
    pub server: SocketAddrV4,
    pub strategy: Strategy,
    pub greedy: bool,
    pub salt: CampaignSalt,
    pub listen: Option<SocketAddrV4>,
    pub files: Vec<FileMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ShippedLogs {
    pub log: String,
    pub shares: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMessage {
    Start(StartOrder),
    /// `None` asks for a report; `Some` carries one.
    Status(Option<StatusReport>),
    Advertise(Vec<FileMeta>),
    /// `None` asks for logs; `Some` carries the lines written since the
    /// previous shipment.
    ShipLogs(Option<ShippedLogs>),
    Stop,
}

fn write_addr(w: &mut PayloadWriter, a: SocketAddrV4) {
    w.bytes(&a.ip().octets());
    w.u16(a.port());
}

fn read_addr(r: &mut PayloadReader<'_>) -> Result<SocketAddrV4, DecodeError> {
    let ip = Ipv4Addr::from(r.array::<4>()?);
    Ok(SocketAddrV4::new(ip, r.u16()?))
}

fn write_blob(w: &mut PayloadWriter, s: &str) -> Result<(), EncodeError> {
    w.count(s.len())?;
    w.bytes(s.as_bytes());
    Ok(())
}

fn read_blob(r: &mut PayloadReader<'_>) -> Result<String, DecodeError> {
    let n = r.count(1)?;
    String::from_utf8(r.take(n)?.to_vec())
        .map_err(|_| DecodeError::Malformed("log blob is not UTF-8"))
}

fn read_bool(r: &mut PayloadReader<'_>) -> Result<bool, DecodeError> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(DecodeError::Malformed("boolean byte out of range")),
    }
}

pub fn encode_control(msg: &ControlMessage) -> Result<Vec<u8>, EncodeError> {
    let mut w = PayloadWriter::default();
    let op = match msg {
        ControlMessage::Start(o) => {
            w.string(&o.honeypot_id)?;
            write_addr(&mut w, o.server);
            w.u8(match o.strategy {
                Strategy::NoContent => 0,
                Strategy::RandomContent => 1,
            });
            w.u8(o.greedy as u8);
            w.bytes(&o.salt.0);
            match o.listen {
                Some(a) => {
                    w.u8(1);
                    write_addr(&mut w, a);
                }
                None => w.u8(0),
            }
            write_files(&mut w, &o.files)?;
            OP_START
        }
        ControlMessage::Status(report) => {
            if let Some(s) = report {
                w.string(&s.honeypot_id)?;
                w.u8(s.connected as u8);
                match s.client_id {
                    Some(id) => {
                        w.u8(1);
                        w.u32(id);
                    }
                    None => w.u8(0),
                }
                w.count(s.shared_files)?;
            }
            OP_STATUS
        }
        ControlMessage::Advertise(files) => {
            write_files(&mut w, files)?;
            OP_ADVERTISE
        }
        ControlMessage::ShipLogs(logs) => {
            if let Some(l) = logs {
                write_blob(&mut w, &l.log)?;
                write_blob(&mut w, &l.shares)?;
            }
            OP_SHIP_LOGS
        }
        ControlMessage::Stop => OP_STOP,
    };
    w.into_frame(op)
}

pub fn decode_control(frame: &[u8]) -> Result<ControlMessage, DecodeError> {
    let (op, payload) = split_frame(frame)?;
    let mut r = PayloadReader::new(payload);
    let msg = match op {
        OP_START => {
            let honeypot_id = r.string()?;
            let server = read_addr(&mut r)?;
            let strategy = match r.u8()? {
                0 => Strategy::NoContent,
                1 => Strategy::RandomContent,
                _ => return Err(DecodeError::Malformed("unknown strategy")),
            };
            let greedy = read_bool(&mut r)?;
            let salt = CampaignSalt(r.array()?);
            let listen = if read_bool(&mut r)? {
                Some(read_addr(&mut r)?)
            } else {
                None
            };
            let files = read_files(&mut r)?;
            ControlMessage::Start(StartOrder {
                honeypot_id,
                server,
                strategy,
                greedy,
                salt,
                listen,
                files,
            })
        }
        OP_STATUS if payload.is_empty() => ControlMessage::Status(None),
        OP_STATUS => {
            let honeypot_id = r.string()?;
            let connected = read_bool(&mut r)?;
            let client_id = if read_bool(&mut r)? {
                Some(r.u32()?)
            } else {
                None
            };
            let shared_files = r.u32()? as usize;
            ControlMessage::Status(Some(StatusReport {
                honeypot_id,
                connected,
                client_id,
                id_status: client_id.map(IdStatus::from_client_id),
                shared_files,
            }))
        }
        OP_ADVERTISE => ControlMessage::Advertise(read_files(&mut r)?),
        OP_SHIP_LOGS if payload.is_empty() => ControlMessage::ShipLogs(None),
        OP_SHIP_LOGS => {
            let log = read_blob(&mut r)?;
            let shares = read_blob(&mut r)?;
            ControlMessage::ShipLogs(Some(ShippedLogs { log, shares }))
        }
        OP_STOP => ControlMessage::Stop,
        other => return Err(DecodeError::UnknownOpcode(other)),
    };
    r.finish()?;
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::FileId;

    #[test]
    fn control_round_trip() {
        let msgs = vec![
            ControlMessage::Start(StartOrder {
                honeypot_id: "hp01".into(),
                server: "10.0.0.1:4661".parse().unwrap(),
                strategy: Strategy::RandomContent,
                greedy: true,
                salt: CampaignSalt([5; 32]),
                listen: Some("127.0.0.1:0".parse().unwrap()),
                files: vec![FileMeta::new(FileId([1; 16]), "a", 1)],
            }),
            ControlMessage::Status(None),
            ControlMessage::Status(Some(StatusReport {
                honeypot_id: "hp01".into(),
                connected: true,
                client_id: Some(1 << 30),
                id_status: Some(IdStatus::High),
                shared_files: 4,
            })),
            ControlMessage::Advertise(vec![]),
            ControlMessage::ShipLogs(None),
            ControlMessage::ShipLogs(Some(ShippedLogs {
                log: "#hnl1\thp01\n".into(),
                shares: String::new(),
            })),
            ControlMessage::Stop,
        ];
        for m in msgs {
            let frame = encode_control(&m).unwrap();
            assert!((0xF0..=0xF4).contains(&frame[5]));
            assert_eq!(decode_control(&frame).unwrap(), m);
        }
    }

    #[test]
    fn peer_opcodes_are_not_control() {
        let frame =
            crate::protocol::encode_message(&crate::protocol::Message::AskSharedList).unwrap();
        assert_eq!(
            decode_control(&frame),
            Err(DecodeError::UnknownOpcode(0x4A))
        );
    }
}
