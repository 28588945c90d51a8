mod common;

use common::*;

#[test]
fn usage_and_exit_codes() {
    let help = hnl().arg("--help").output().unwrap();
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("run-sim"));
    assert_eq!(
        hnl().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    let missing = hnl()
        .args(["analyze", "/nonexistent/unified.log", "--report", "summary"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn pipeline_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    write_small_inputs(&inputs);
    let out = tmp.path().join("out");
    cli_pipeline(&out, &inputs).unwrap();
    let files = snapshot(&out);
    for f in [
        "unified.log",
        "unified.shares",
        "trace.csv",
        "plan.txt",
        "manifest.txt",
        "summary.csv",
        "top-files.csv",
    ] {
        assert!(
            files.keys().any(|p| p.ends_with(f)),
            "{f} missing: {:?}",
            files.keys()
        );
    }
    let summary = String::from_utf8(files[std::path::Path::new("summary.csv")].clone()).unwrap();
    assert!(
        summary.starts_with("metric,value\nn_honeypots,4\n"),
        "{summary}"
    );
    assert!(
        !String::from_utf8_lossy(&files[std::path::Path::new("unified.log")]).contains("10.255.")
    );
}

#[test]
fn anonymize_subcommand_merges_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let c = anon_corpus(300, 40, 3, 8);
    let mut args = vec!["anonymize".to_string()];
    for s in &c.sources {
        let p = tmp.path().join(format!("{}.log", s.name));
        std::fs::write(&p, &s.log).unwrap();
        if let Some(sh) = &s.shares {
            std::fs::write(tmp.path().join(format!("{}.shares", s.name)), sh).unwrap();
        }
        args.push(p.to_str().unwrap().into());
    }
    let out = tmp.path().join("merged");
    args.extend(["--out".into(), out.to_str().unwrap().into()]);
    let st = hnl().args(&args).output().unwrap();
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    let log = std::fs::read_to_string(out.join("unified.log")).unwrap();
    assert_eq!(log.lines().count(), 301);
}
