use std::ffi::{CStr, CString};
use std::ptr;

use hnl_core::anonymize::{CampaignSalt, IpHasher};
use hnl_core::protocol::{encode_message, Hello, Message, PeerId, UserId};
use hnl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe { hnl_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn message_round_trip() {
    unsafe {
        let id = [7u8; 16];
        let mut msg = ptr::null_mut();
        assert_eq!(
            hnl_message_start_upload(id.as_ptr(), &mut msg),
            HnlStatus::Ok
        );
        let mut op = 0u8;
        assert_eq!(hnl_message_opcode(msg, &mut op), HnlStatus::Ok);
        assert_eq!(op, 0x54);

        let mut written = 0usize;
        assert_eq!(
            hnl_message_encode(msg, ptr::null_mut(), 0, &mut written),
            HnlStatus::BufferTooSmall
        );
        assert_eq!(written, 22);
        let mut buf = vec![0u8; written];
        assert_eq!(
            hnl_message_encode(msg, buf.as_mut_ptr(), buf.len(), &mut written),
            HnlStatus::Ok
        );
        assert_eq!(&buf[..6], &[0xE3, 17, 0, 0, 0, 0x54]);

        let mut frame_len = 0usize;
        assert_eq!(
            hnl_frame_length(buf.as_ptr(), 3, &mut frame_len),
            HnlStatus::Incomplete
        );
        assert_eq!(
            hnl_frame_length(buf.as_ptr(), buf.len(), &mut frame_len),
            HnlStatus::Ok
        );
        assert_eq!(frame_len, 22);

        let mut decoded = ptr::null_mut();
        assert_eq!(
            hnl_message_decode(buf.as_ptr(), buf.len(), &mut decoded),
            HnlStatus::Ok
        );
        let mut again = vec![0u8; 22];
        assert_eq!(
            hnl_message_encode(decoded, again.as_mut_ptr(), 22, &mut written),
            HnlStatus::Ok
        );
        assert_eq!(again, buf);
        hnl_message_free(msg);
        hnl_message_free(decoded);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let garbage = [0x00u8, 1, 2];
        let mut m = ptr::null_mut();
        assert_eq!(
            hnl_message_decode(garbage.as_ptr(), 3, &mut m),
            HnlStatus::Decode
        );
        assert!(m.is_null());
        assert!(last_error().contains("magic"), "{}", last_error());
        assert_eq!(
            hnl_message_decode(garbage.as_ptr(), 3, ptr::null_mut()),
            HnlStatus::Decode
        );
        let bad = [0xE3u8, 1, 0, 0, 0, 0x99];
        assert_eq!(
            hnl_message_decode(bad.as_ptr(), bad.len(), &mut m),
            HnlStatus::Decode
        );
        assert_eq!(
            hnl_hasher_new(ptr::null(), &mut ptr::null_mut()),
            HnlStatus::NullPointer
        );
        let s = CStr::from_ptr(hnl_status_str(HnlStatus::BufferTooSmall));
        assert_eq!(s.to_str().unwrap(), "buffer too small");
        // freeing null is a no-op
        hnl_message_free(ptr::null_mut());
        hnl_log_free(ptr::null_mut());
    }
}

#[test]
fn hasher_matches_core() {
    unsafe {
        let salt = [3u8; 32];
        let mut h = ptr::null_mut();
        assert_eq!(hnl_hasher_new(salt.as_ptr(), &mut h), HnlStatus::Ok);
        let mut digest = [0u8; 32];
        assert_eq!(
            hnl_hasher_hash_ip(h, 0x0A00_0001, digest.as_mut_ptr()),
            HnlStatus::Ok
        );
        let expected = IpHasher::new(CampaignSalt(salt)).hash_ip("10.0.0.1".parse().unwrap());
        assert_eq!(&digest, expected.as_bytes());
        hnl_hasher_free(h);
    }
}

#[test]
fn honeypot_logs_hello() {
    unsafe {
        let id = CString::new("hpx").unwrap();
        let mut hp = ptr::null_mut();
        assert_eq!(
            hnl_honeypot_new(
                id.as_ptr(),
                HnlStrategy::NoContent,
                ptr::null(),
                1_000,
                &mut hp
            ),
            HnlStatus::Ok
        );
        let name = CString::new("film.avi").unwrap();
        assert_eq!(
            hnl_honeypot_share(hp, [9u8; 16].as_ptr(), name.as_ptr(), 1 << 20, 1_000),
            HnlStatus::Ok
        );

        let hello = Message::Hello(Hello {
            peer: PeerId::new(UserId([5; 16]), 1 << 25),
            port: 4662,
            client_name: "peer at 1.2.3.4".into(),
            client_version: 1,
        });
        let frame = encode_message(&hello).unwrap();
        assert_eq!(
            hnl_honeypot_feed(hp, 1, 0x0102_0304, 5000, frame.as_ptr(), frame.len(), 2_000),
            HnlStatus::Ok
        );

        let mut n = 0usize;
        assert_eq!(
            hnl_honeypot_take_replies(hp, ptr::null_mut(), 0, &mut n),
            HnlStatus::BufferTooSmall
        );
        let mut replies = vec![0u8; n];
        assert_eq!(
            hnl_honeypot_take_replies(hp, replies.as_mut_ptr(), n, &mut n),
            HnlStatus::Ok
        );
        assert_eq!(replies[5], 0x4C, "HelloAnswer expected");
        assert_eq!(
            hnl_honeypot_take_replies(hp, ptr::null_mut(), 0, &mut n),
            HnlStatus::Ok
        );
        assert_eq!(n, 0);

        let mut buf = vec![0u8; 4096];
        assert_eq!(
            hnl_honeypot_take_log(hp, buf.as_mut_ptr(), buf.len(), &mut n),
            HnlStatus::Ok
        );
        let log = String::from_utf8(buf[..n].to_vec()).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines[0], "#hnl1\thpx");
        assert_eq!(lines.len(), 2);
        let peer = lines[1].split('\t').nth(3).unwrap();
        assert_eq!(peer.len(), 64, "peer field is a salted token: {peer}");
        assert_eq!(hnl_honeypot_close(hp, 1), HnlStatus::Ok);
        hnl_honeypot_free(hp);
    }
}

const UNIFIED: &str = "#hnl1-unified
1000\thp1\tHello\t0\t4662\tp\t00000000000000000000000000000000\t1\tHigh\tsrv\ts0\t4661\t-\t-
2000\thp2\tHello\t1\t4662\tp\t00000000000000000000000000000001\t1\tHigh\tsrv\ts0\t4661\t-\t-
3000\thp2\tHello\t0\t4662\tp\t00000000000000000000000000000000\t1\tHigh\tsrv\ts0\t4661\t-\t-
";

#[test]
fn log_analysis() {
    unsafe {
        let text = CString::new(UNIFIED).unwrap();
        let mut log = ptr::null_mut();
        let st = hnl_log_from_text(text.as_ptr(), ptr::null(), &mut log);
        assert_eq!(st, HnlStatus::Ok, "{}", last_error());
        let mut n = 0u64;
        assert_eq!(hnl_log_len(log, &mut n), HnlStatus::Ok);
        assert_eq!(n, 3);
        let mut s = HnlSummary::default();
        assert_eq!(hnl_log_summary(log, &mut s), HnlStatus::Ok);
        assert_eq!(
            (s.n_honeypots, s.n_distinct_peers, s.duration_days),
            (2, 2, 1)
        );
        let mut p = HnlSubsetPoint::default();
        assert_eq!(
            hnl_log_honeypot_subsets(log, 1, 10, 1, &mut p),
            HnlStatus::Ok
        );
        assert_eq!((p.avg, p.min, p.max, p.exhaustive), (1.5, 1.0, 2.0, 1));
        assert_eq!(
            hnl_log_honeypot_subsets(log, 3, 10, 1, &mut p),
            HnlStatus::Analysis
        );
        hnl_log_free(log);

        let missing = CString::new("/nonexistent/unified.log").unwrap();
        assert_eq!(hnl_log_load(missing.as_ptr(), &mut log), HnlStatus::Io);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hnl.h")).unwrap();
    for f in [
        "hnl_last_error",
        "hnl_message_decode",
        "hnl_message_encode",
        "hnl_hasher_hash_ip",
        "hnl_honeypot_feed",
        "hnl_log_summary",
        "hnl_log_honeypot_subsets",
        "hnl_run_sim",
        "HNL_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(f), "{f} missing from hnl.h");
    }
    // compile the header as C when a compiler is around
    if let Ok(status) = std::process::Command::new("cc")
        .args([
            "-fsyntax-only",
            "-Wall",
            "-Werror",
            "-x",
            "c",
            concat!(env!("CARGO_MANIFEST_DIR"), "/include/hnl.h"),
        ])
        .status()
    {
        assert!(status.success(), "hnl.h does not compile");
    }
}
