//! The `netdist` command: run the signal server, replay its logs, export
//! chart frames and run simulation experiments.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 environment
//! error (bind, filesystem), 4 runtime error.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use netdist_core::chart::frames_csv;
use netdist_core::time::{parse_duration, parse_iso8601, to_iso8601, DAY, HOUR, MINUTE};
use netdist_core::{Config, DeviceId, Timestamp};
use netdist_server::store::Logs;
use netdist_server::{ManualClock, MatcherService, ServerError, SignalServer, StoreError, SystemClock};
use netdist_sim::{ScenarioConfig, SimError};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPLAY_CHARTS_FILE: &str = "charts.csv";

#[derive(Debug, Parser)]
#[command(name = "netdist", version, about = "Network-distance contact tracing: server, replay and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the signal server (and the Wi-Fi matcher when it has a bind
    /// address) until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// State directory; overrides `server.state_dir`. Without either the
        /// server keeps no durable state.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Run the experiments a scenario enables and write their tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export one device's chart frames from a state directory.
    Chart {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long)]
        device: String,
        /// First frame, ISO-8601 UTC.
        #[arg(long)]
        from: String,
        /// Last frame (inclusive), ISO-8601 UTC.
        #[arg(long)]
        to: String,
        /// Frame spacing: `P1D`, `PT6H`, `1d`, `30m` or plain seconds.
        #[arg(long, default_value = "1d")]
        step: String,
        /// Directory for the frames file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild state from a state directory and report what it holds.
    Replay {
        #[command(flatten)]
        state: StateArgs,
        /// Time at which to render every device's chart; defaults to the
        /// latest logged event or report.
        #[arg(long)]
        to: Option<String>,
        /// Directory for the charts table; summary only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct StateArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Server config; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Environment(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Environment(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Config(e.to_string()),
            SimError::Output(..) => CliError::Environment(e.to_string()),
            SimError::Server(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Store(StoreError::Io { .. }) => CliError::Environment(e.to_string()),
            ServerError::Store(StoreError::MalformedLine { .. }) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Reads a file that must exist; a missing or unreadable file is a
/// configuration error naming the path.
fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_server_config(path: Option<&Path>) -> Result<Config, CliError> {
    let Some(path) = path else { return Ok(Config::default()) };
    let bytes = read_input(path)?;
    let text = String::from_utf8_lossy(&bytes);
    Config::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_time(flag: &str, s: &str) -> Result<Timestamp, CliError> {
    parse_iso8601(s).ok_or_else(|| CliError::Config(format!("--{flag}: not an ISO-8601 UTC time: {s}")))
}

fn write_output(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Environment(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Environment(format!("cannot create {}: {e}", dir.display())))
}

/// Reproducibility record written next to simulation outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    /// SHA-256 of the config file's bytes.
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub summaries: Vec<(String, String)>,
}

fn now_iso() -> String {
    to_iso8601(chrono::Utc::now().timestamp())
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<RunManifest, CliError> {
    let started_at = now_iso();
    let bytes = read_input(config)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut scenario =
        ScenarioConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate().map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    create_dir(out)?;
    tracing::info!(seed = scenario.seed, out = %out.display(), "running experiments");
    let outputs = netdist_sim::run_experiments(&scenario, out)?;
    for (name, s) in &outputs.summaries {
        tracing::info!(experiment = %name, "{s}");
    }
    let mut manifest = RunManifest {
        command: "simulate".into(),
        config_path: config.display().to_string(),
        config_sha256: hex::encode(Sha256::digest(&bytes)),
        seeds: vec![scenario.seed],
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: String::new(),
        outputs: outputs
            .files
            .iter()
            .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        summaries: outputs.summaries,
    };
    manifest.finished_at = now_iso();
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_output(&out.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

fn load_state(args: &StateArgs) -> Result<(Config, Logs), CliError> {
    let config = load_server_config(args.config.as_deref())?;
    if !args.state.is_dir() {
        return Err(CliError::Config(format!("state directory {} does not exist", args.state.display())));
    }
    let logs = Logs::load(&args.state).map_err(|e| CliError::from(ServerError::Store(e)))?;
    Ok((config, logs))
}

fn latest_time(logs: &Logs) -> Option<Timestamp> {
    let events = logs.events.iter().map(|e| e.timestamp);
    let reports = logs.reports.iter().map(|r| r.report.reported_at);
    events.chain(reports).max()
}

/// ISO-8601 durations, plain seconds, or a count with one of the suffixes
/// `d`, `h`, `m`, `s`.
fn parse_step(s: &str) -> Option<i64> {
    parse_duration(s).or_else(|| {
        let unit = match s.chars().last()? {
            'd' => DAY,
            'h' => HOUR,
            'm' => MINUTE,
            's' => 1,
            _ => return None,
        };
        s[..s.len() - 1].parse::<i64>().ok()?.checked_mul(unit)
    })
}

/// Frames CSV for one device between `from` and `to` inclusive.
pub fn chart(args: &StateArgs, device: &str, from: &str, to: &str, step: &str) -> Result<String, CliError> {
    let (t0, t1) = (parse_time("from", from)?, parse_time("to", to)?);
    let step = parse_step(step)
        .filter(|&s| s > 0)
        .ok_or_else(|| CliError::Config(format!("--step: not a positive duration: {step}")))?;
    if t1 < t0 {
        return Err(CliError::Config("--to is before --from".into()));
    }
    let device: DeviceId =
        device.parse().map_err(|e| CliError::Config(format!("--device: not a device id: {device}: {e}")))?;
    let (config, logs) = load_state(args)?;
    let server = SignalServer::replay(config, &logs, Arc::new(ManualClock::new(t1)), None);
    let frames = server.export_frames(&device, t0, t1, step)?;
    Ok(frames_csv(&frames))
}

#[derive(Debug, Serialize)]
pub struct ReplaySummary {
    pub devices: usize,
    pub events: usize,
    pub reports: usize,
    pub tokens: usize,
    pub as_of: Option<String>,
    pub contact_edges: usize,
    pub devices_with_signals: usize,
}

pub fn replay(args: &StateArgs, to: Option<&str>, out: Option<&Path>) -> Result<ReplaySummary, CliError> {
    let (config, logs) = load_state(args)?;
    let as_of = match to {
        Some(s) => Some(parse_time("to", s)?),
        None => latest_time(&logs),
    };
    let server = SignalServer::replay(config, &logs, Arc::new(ManualClock::new(as_of.unwrap_or(0))), None);
    let mut summary = ReplaySummary {
        devices: logs.devices.len(),
        events: logs.events.len(),
        reports: logs.reports.len(),
        tokens: logs.tokens.len(),
        as_of: as_of.map(to_iso8601),
        contact_edges: 0,
        devices_with_signals: 0,
    };
    let mut table = String::from("device,t,d,positive,contact\n");
    if let Some(t) = as_of {
        summary.contact_edges = server.snapshot(t).edges().len();
        for d in server.devices() {
            let c = server.chart_at(&d, t)?;
            if !c.is_empty() {
                summary.devices_with_signals += 1;
            }
            for (i, (p, k)) in c.positive.iter().zip(&c.contact).enumerate() {
                table.push_str(&format!("{d},{},{},{p},{k}\n", to_iso8601(t), i + 1));
            }
        }
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_output(&dir.join(REPLAY_CHARTS_FILE), table.as_bytes())?;
    }
    Ok(summary)
}

async fn bind(addr: &str) -> Result<tokio::net::TcpListener, CliError> {
    let parsed: SocketAddr = addr.parse().map_err(|e| CliError::Config(format!("bad bind address {addr}: {e}")))?;
    tokio::net::TcpListener::bind(parsed).await.map_err(|e| CliError::Environment(format!("cannot bind {addr}: {e}")))
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

pub async fn serve(config: &Path, state: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_server_config(Some(config))?;
    let state_dir = state.map(Path::to_path_buf).or_else(|| cfg.server.state_dir.as_ref().map(PathBuf::from));
    let listener = bind(&cfg.server.bind).await?;
    let matcher_listener = match &cfg.wifi_matcher.bind {
        Some(addr) => Some(bind(addr).await?),
        None => None,
    };
    let clock = Arc::new(SystemClock);
    let server = match &state_dir {
        Some(dir) => {
            create_dir(dir)?;
            SignalServer::open(cfg.clone(), dir, clock.clone())?
        }
        None => SignalServer::in_memory(cfg.clone(), clock.clone(), None),
    };
    let addr = listener.local_addr().map_err(|e| CliError::Environment(e.to_string()))?;
    // Scripts and tests read the bound address from the first stdout line.
    println!("listening on {addr}");
    tracing::info!(%addr, devices = server.device_count(), "signal server up");

    let app = netdist_server::http::router(Arc::new(server));
    let main = axum::serve(listener, app).with_graceful_shutdown(shutdown_signal());
    match matcher_listener {
        Some(ml) => {
            let maddr = ml.local_addr().map_err(|e| CliError::Environment(e.to_string()))?;
            println!("matcher listening on {maddr}");
            let matcher = MatcherService::new(cfg.wifi_matcher.clone(), clock, None);
            let mapp = netdist_server::http::matcher_router(Arc::new(matcher));
            let side = axum::serve(ml, mapp).with_graceful_shutdown(shutdown_signal());
            let (a, b) = tokio::join!(main, side);
            a.and(b).map_err(|e| CliError::Runtime(e.to_string()))
        }
        None => main.await.map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("NETDIST_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { config, state } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Environment(e.to_string()))?;
            rt.block_on(serve(&config, state.as_deref()))
        }
        Command::Simulate { config, out, seed } => {
            let m = simulate(&config, &out, seed)?;
            println!("{}", serde_json::to_string_pretty(&m).expect("manifest serializes"));
            Ok(())
        }
        Command::Chart { state, device, from, to, step, out } => {
            let csv = chart(&state, &device, &from, &to, &step)?;
            match out {
                Some(dir) => {
                    create_dir(&dir)?;
                    write_output(&dir.join(format!("chart_{device}.csv")), csv.as_bytes())
                }
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        Command::Replay { state, to, out } => {
            let s = replay(&state, to.as_deref(), out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
            Ok(())
        }
    }
}

/// Parses nothing; runs an already-parsed command line and maps the outcome
/// to the exit-code convention.
pub fn run(cli: Cli) -> ExitCode {
    init_logging();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netdist: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
