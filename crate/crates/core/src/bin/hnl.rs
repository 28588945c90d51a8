use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::net::SocketAddrV4;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use hnl_core::analysis::{self, AnalysisSeries, CountMode, UnifiedLog};
use hnl_core::honeypot::LoggedKind;
use hnl_core::live::{AgentLauncher, ControlAgent};
use hnl_core::manager::{gather_and_merge, DeploymentPlan, LogSource, Manager};
use hnl_core::manifest::RunManifest;
use hnl_core::simnet::{self, build_catalog, SimConfig};
use hnl_core::time::{parse_duration_ms, Timestamp};

/// Honeypot measurement platform for eDonkey-style networks.
#[derive(Parser, Debug)]
#[command(name = "hnl", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulated campaign and write logs, the unified log and a trace.
    RunSim {
        /// Simulation config (`key = value` lines); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Deployment plan.
        #[arg(long)]
        plan: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Deploy a plan on live honeypots, supervise them, and merge their logs.
    RunManager {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the synthetic catalog behind `catalog:<rank>` entries.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Serve a control agent that runs honeypots on behalf of a manager.
    RunHoneypot {
        /// Control address to listen on.
        #[arg(long, default_value = "127.0.0.1:4670")]
        control: SocketAddrV4,
        /// Directory for the honeypots' local log files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit after this long (e.g. `90s`, `2h`); runs until killed otherwise.
        #[arg(long, value_parser = duration)]
        run_for: Option<u64>,
    },
    /// Merge per-honeypot logs into one anonymized unified log.
    Anonymize {
        /// Honeypot log files; a sibling `.shares` file is picked up.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Filename words occurring fewer times than this are masked.
        #[arg(long, default_value_t = 5)]
        threshold: usize,
    },
    /// Compute a report from a unified log and write it as CSV.
    Analyze {
        /// Unified log; a sibling `.shares` file is picked up.
        log: PathBuf,
        #[arg(long, value_enum)]
        report: Report,
        /// Output directory; defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Time bucket width for time series.
        #[arg(long, default_value = "1h", value_parser = duration)]
        bucket: u64,
        /// Resampling trials per subset size.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Seed for resampling and random file sets.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Plan giving honeypot strategies; defaults to a sibling `plan.txt`.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Message kind counted by kind-specific reports.
        #[arg(long, default_value = "hello", value_parser = kind)]
        kind: LoggedKind,
        /// Count distinct peers or raw messages (strategy report).
        #[arg(long, value_enum, default_value_t = Mode::Distinct)]
        mode: Mode,
        /// Peer id for `single-peer`; the most active peer when omitted.
        #[arg(long)]
        peer: Option<u32>,
        /// Number of files for `top-files` and `file-subsets`.
        #[arg(long, default_value_t = 100)]
        files: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Report {
    Summary,
    DistinctPeers,
    NewPeersPerDay,
    Hourly,
    HourOfDay,
    Strategy,
    SinglePeer,
    HoneypotSubsets,
    FileSubsets,
    TopFiles,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Distinct,
    Messages,
}

fn duration(s: &str) -> Result<u64, String> {
    parse_duration_ms(s).map_err(|e| e.to_string())
}

fn kind(s: &str) -> Result<LoggedKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HNL_LOG_LEVEL", "warn")).init();
    ExitCode::from(dispatch(std::env::args_os()))
}

/// 0 on success, 1 on usage errors, 2 on runtime errors.
fn dispatch(argv: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::RunSim {
            config,
            plan,
            out,
            seed,
        } => run_sim(config.as_deref(), &plan, &out, seed),
        Command::RunManager { plan, out, seed } => run_manager(&plan, &out, seed),
        Command::RunHoneypot {
            control,
            out,
            run_for,
        } => run_honeypot(control, out, run_for),
        Command::Anonymize {
            logs,
            out,
            threshold,
        } => anonymize(&logs, &out, threshold),
        Command::Analyze {
            log,
            report,
            out,
            bucket,
            trials,
            seed,
            plan,
            kind,
            mode,
            peer,
            files,
        } => {
            let out =
                out.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_default());
            let args = AnalyzeArgs {
                report,
                bucket,
                trials,
                seed,
                kind,
                mode,
                peer,
                files,
            };
            analyze(&log, plan, &out, &args)
        }
    }
}

fn load_plan(path: &Path) -> Result<DeploymentPlan> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading plan {}", path.display()))?;
    let plan =
        DeploymentPlan::parse(&text).with_context(|| format!("parsing plan {}", path.display()))?;
    plan.validate()?;
    Ok(plan)
}

fn run_sim(config: Option<&Path>, plan_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            SimConfig::parse(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let plan = load_plan(plan_path)?;
    let output = simnet::run_simulation(&cfg, &plan)?;
    output
        .write_to(out)
        .with_context(|| format!("writing {}", out.display()))?;
    let mut manifest = RunManifest::new("run-sim", out)
        .seed(cfg.seed)
        .input("plan", plan_path);
    if let Some(p) = config {
        manifest = manifest.input("config", p);
    }
    manifest.write(out, "manifest.txt")?;
    println!(
        "{} records from {} peers written to {}",
        output.unified.records.len(),
        output.unified.report.distinct_peers,
        out.display()
    );
    Ok(())
}

fn run_manager(plan_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let plan = load_plan(plan_path)?;
    let catalog_len = plan.catalog_ranks().iter().max().map_or(0, |r| r + 1);
    let catalog = build_catalog(seed, catalog_len, &plan);
    let remote: BTreeMap<String, SocketAddrV4> = plan
        .honeypots
        .iter()
        .filter_map(|h| h.control.map(|c| (h.id.clone(), c)))
        .collect();
    let mut launcher = AgentLauncher::new(remote, Some(out.join("honeypots")));
    let poll = Duration::from_millis(plan.poll_interval_ms);
    let gather = Duration::from_millis(plan.gather_interval_ms);
    let run_for = Duration::from_millis(plan.run_for_ms);
    let mut manager = Manager::new(plan, catalog);

    let started = Instant::now();
    let connected = manager
        .launch(&mut launcher, Timestamp::now())
        .iter()
        .filter(|s| s.connected)
        .count();
    log::info!(
        "{connected}/{} honeypots connected",
        manager.statuses().len()
    );
    let (mut next_poll, mut next_gather) = (poll, gather);
    while started.elapsed() < run_for {
        let wake = next_poll.min(next_gather).min(run_for);
        std::thread::sleep(
            wake.saturating_sub(started.elapsed())
                .min(Duration::from_millis(200)),
        );
        let elapsed = started.elapsed();
        if elapsed >= next_poll {
            let now = Timestamp::now();
            manager.poll_all(&mut launcher, now);
            let actions = manager.supervise(now);
            manager.apply(&actions, &mut launcher, now);
            next_poll += poll;
        }
        if elapsed >= next_gather {
            manager.gather(&mut launcher);
            next_gather += gather;
        }
    }
    manager.gather(&mut launcher);
    manager.stop_all(&mut launcher);

    let logs = out.join("logs");
    std::fs::create_dir_all(&logs)?;
    for s in manager.sources() {
        std::fs::write(logs.join(format!("{}.log", s.name)), &s.log)?;
        if let Some(sh) = &s.shares {
            std::fs::write(logs.join(format!("{}.shares", s.name)), sh)?;
        }
    }
    let unified = manager.merge()?;
    unified.write_to(out)?;
    std::fs::write(out.join("plan.txt"), manager.plan().to_text())?;
    let mut status = String::from("honeypot\tconnected\tid_status\trestarts\tquarantined\n");
    for s in manager.statuses() {
        status.push_str(&format!(
            "{}\t{}\t{:?}\t{}\t{}\n",
            s.honeypot_id, s.connected, s.id_status, s.restarts, s.quarantined
        ));
    }
    std::fs::write(out.join("status.tsv"), status)?;
    for alert in manager.alerts() {
        eprintln!("alert: {alert}");
    }
    RunManifest::new("run-manager", out)
        .seed(seed)
        .input("plan", plan_path)
        .write(out, "manifest.txt")?;
    println!(
        "{} records from {} peers",
        unified.records.len(),
        unified.report.distinct_peers
    );
    Ok(())
}

fn run_honeypot(control: SocketAddrV4, out: Option<PathBuf>, run_for: Option<u64>) -> Result<()> {
    let agent =
        ControlAgent::spawn(control, out.clone()).with_context(|| format!("binding {control}"))?;
    if let Some(dir) = &out {
        RunManifest::new("run-honeypot", dir)
            .param("control", control)
            .write(dir, "manifest.txt")?;
    }
    println!("control agent listening on {}", agent.addr());
    std::io::stdout().flush()?;
    match run_for {
        Some(ms) => {
            std::thread::sleep(Duration::from_millis(ms));
            agent.shutdown();
        }
        None => agent.wait(),
    }
    Ok(())
}

fn anonymize(logs: &[PathBuf], out: &Path, threshold: usize) -> Result<()> {
    let mut sources = Vec::new();
    for path in logs {
        let log =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let shares_path = path.with_extension("shares");
        let shares = if shares_path.is_file() {
            Some(std::fs::read_to_string(&shares_path)?)
        } else {
            None
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        sources.push(LogSource { name, log, shares });
    }
    let unified = gather_and_merge(&sources, threshold)?;
    unified.write_to(out)?;
    let mut manifest = RunManifest::new("anonymize", out).param("threshold", threshold);
    for (i, p) in logs.iter().enumerate() {
        manifest = manifest.input(&format!("log{i}"), p);
    }
    manifest.write(out, "manifest.txt")?;
    let r = &unified.report;
    if r.malformed > 0 {
        log::warn!("{} malformed lines skipped", r.malformed);
    }
    println!(
        "{} records from {} sources, {} distinct peers",
        r.records, r.sources, r.distinct_peers
    );
    Ok(())
}

struct AnalyzeArgs {
    report: Report,
    bucket: u64,
    trials: usize,
    seed: u64,
    kind: LoggedKind,
    mode: Mode,
    peer: Option<u32>,
    files: usize,
}

fn report_name(r: Report) -> String {
    r.to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default()
}

fn analyze(log_path: &Path, plan_path: Option<PathBuf>, out: &Path, a: &AnalyzeArgs) -> Result<()> {
    let log =
        UnifiedLog::load(log_path).with_context(|| format!("loading {}", log_path.display()))?;
    let name = report_name(a.report);
    std::fs::create_dir_all(out)?;
    let plan_path = plan_path.or_else(|| {
        let sibling = log_path.parent().unwrap_or(Path::new(".")).join("plan.txt");
        sibling.is_file().then_some(sibling)
    });
    let groups = || -> Result<_> {
        let Some(p) = &plan_path else {
            bail!("the {name} report needs honeypot strategies: pass --plan");
        };
        Ok(simnet::strategy_groups(&load_plan(p)?))
    };

    let mut written: Vec<PathBuf> = Vec::new();
    let mut write = |file: String, text: String| -> Result<()> {
        let path = out.join(file);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    let write_series = |write: &mut dyn FnMut(String, String) -> Result<()>,
                        series: &[AnalysisSeries]|
     -> Result<()> {
        for s in series {
            write(format!("{name}-{}.csv", s.label), s.to_csv())?;
        }
        Ok(())
    };

    match a.report {
        Report::Summary => {
            let csv = analysis::summary_table(&log).to_csv();
            print!("{csv}");
            write(format!("{name}.csv"), csv)?;
        }
        Report::DistinctPeers => write(
            format!("{name}.csv"),
            analysis::distinct_peers_over_time(&log, a.bucket)?.to_csv(),
        )?,
        Report::NewPeersPerDay => write(
            format!("{name}.csv"),
            analysis::new_peers_per_day(&log).to_csv(),
        )?,
        Report::Hourly => write(
            format!("{name}.csv"),
            analysis::hourly_message_counts(&log, a.kind).to_csv(),
        )?,
        Report::HourOfDay => {
            write(
                format!("{name}.csv"),
                analysis::hour_of_day_profile(&log, a.kind).to_csv(),
            )?;
            if let Some(h) = analysis::circular_mean_hour(&log, Some(a.kind)) {
                println!("circular mean hour: {h:.2}");
            }
        }
        Report::Strategy => {
            let mode = match a.mode {
                Mode::Distinct => CountMode::DistinctPeers,
                Mode::Messages => CountMode::MessageCount,
            };
            let series = analysis::per_strategy_series(&log, &groups()?, a.kind, mode, a.bucket)?;
            write_series(&mut write, &series)?;
        }
        Report::SinglePeer => {
            let Some(peer) = a.peer.or_else(|| analysis::top_peer(&log)) else {
                bail!("the log has no records");
            };
            let series = analysis::single_peer_timeline(&log, &groups()?, peer, a.kind, a.bucket)?;
            for s in &series {
                println!("{}: {} plateaus", s.label, analysis::plateaus(s).len());
            }
            write_series(&mut write, &series)?;
        }
        Report::HoneypotSubsets => write(
            format!("{name}.csv"),
            analysis::honeypot_subset_curve(&log, a.trials, a.seed).to_csv(),
        )?,
        Report::FileSubsets => {
            let top = analysis::top_files_by_peers(&log, a.files);
            let random = analysis::random_file_set(&log, a.files, a.seed);
            let series = [
                analysis::file_subset_curve(&log, &top, "top", a.trials, a.seed),
                analysis::file_subset_curve(&log, &random, "random", a.trials, a.seed),
            ];
            write_series(&mut write, &series)?;
        }
        Report::TopFiles => write(
            format!("{name}.csv"),
            analysis::top_files_csv(&log, a.files),
        )?,
    }

    let mut manifest = RunManifest::new("analyze", out)
        .seed(a.seed)
        .input("log", log_path)
        .param("report", &name)
        .param("bucket", format!("{}ms", a.bucket))
        .param("trials", a.trials)
        .param("kind", a.kind)
        .param("mode", format!("{:?}", a.mode).to_lowercase())
        .param("files", a.files);
    if let Some(p) = a.peer {
        manifest = manifest.param("peer", p);
    }
    if let Some(p) = &plan_path {
        manifest = manifest.input("plan", p);
    }
    manifest.write(out, &format!("manifest-{name}.txt"))?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(args: &[&str]) -> Vec<OsString> {
        std::iter::once("hnl")
            .chain(args.iter().copied())
            .map(OsString::from)
            .collect()
    }

    #[test]
    fn usage_exit_codes() {
        assert_eq!(dispatch(argv(&["--help"])), 0);
        assert_eq!(dispatch(argv(&["run-sim", "--help"])), 0);
        assert_eq!(dispatch(argv(&["run-simm"])), 1);
        assert_eq!(dispatch(argv(&[])), 1);
        assert_eq!(dispatch(argv(&["analyze", "x.log", "--report", "nope"])), 1);
    }

    #[test]
    fn runtime_errors_exit_two() {
        assert_eq!(
            dispatch(argv(&[
                "analyze",
                "/nonexistent/unified.log",
                "--report",
                "summary"
            ])),
            2
        );
    }
}
