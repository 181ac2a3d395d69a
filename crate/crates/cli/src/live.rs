//! Subcommands that talk to a running session: serve, bot, ensemble, diag,
//! plus offline replay of a session log.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::ValueEnum;
use copresence_core::config::SessionConfig;
use copresence_core::netdiag::{stability_gate, FaultProfile};
use copresence_core::protocol::{Role, DEFAULT_PORT};
use copresence_core::states::{parse_sequence, ParamRegistry};
use copresence_session::bot::shipped_script_names;
use copresence_session::log::read_log;
use copresence_session::{probe, run_bot, run_ensemble, shipped_script, BotOptions, BotScript, ProbeOptions, ServerOptions};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::print_json;

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    /// Client port.
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Interface for both listeners.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// State sequence files, played in order; they replace any in the config.
    #[arg(long, num_args = 1..)]
    states: Vec<PathBuf>,
    /// Session config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Append session events as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Port for the control API; disabled when absent.
    #[arg(long)]
    console_port: Option<u16>,
    /// Bearer token for POST /command; random when absent.
    #[arg(long)]
    token: Option<String>,
    /// Overrides the config's time scale.
    #[arg(long)]
    time_scale: Option<f64>,
    /// Stop this many ticks after the last state ends instead of running until interrupted.
    #[arg(long)]
    exit_after_finish: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoleArg {
    Participant,
    Facilitator,
    Observer,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Participant => Role::Participant,
            RoleArg::Facilitator => Role::Facilitator,
            RoleArg::Observer => Role::Observer,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct BotArgs {
    /// Server address, `host:port`.
    #[arg(long)]
    server: String,
    /// Script file, or the name of a shipped script.
    #[arg(long)]
    script: String,
    #[arg(long, default_value = "bot")]
    name: String,
    #[arg(long, value_enum, default_value = "participant")]
    role: RoleArg,
    /// Fault profile JSON applied to outgoing poses and pings.
    #[arg(long)]
    fault: Option<PathBuf>,
    /// Keep running after the script until the session's last state ends.
    #[arg(long)]
    until_finished: bool,
    /// Give up after this many seconds.
    #[arg(long)]
    max_wall: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    server: String,
    /// Number of bots.
    #[arg(long)]
    n: usize,
    /// Script file or shipped script name used by every bot.
    #[arg(long, default_value = "coalesce")]
    script: String,
    /// Fault profile JSON; bot i uses seed + i.
    #[arg(long)]
    fault: Option<PathBuf>,
    #[arg(long)]
    until_finished: bool,
    #[arg(long)]
    max_wall: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct DiagArgs {
    #[arg(long)]
    server: String,
    #[arg(long, default_value_t = 20)]
    pings: usize,
    /// Milliseconds between pings.
    #[arg(long, default_value_t = 20)]
    interval_ms: u64,
    /// Milliseconds to wait for replies after the last ping.
    #[arg(long, default_value_t = 1000)]
    timeout_ms: u64,
    /// Fault profile JSON, to rehearse a bad link.
    #[arg(long)]
    fault: Option<PathBuf>,
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = read_file(path)?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| anyhow!("{}: at {}: {}", path.display(), e.path(), e.inner()))
}

fn load_fault(path: Option<&Path>) -> anyhow::Result<Option<FaultProfile>> {
    let Some(path) = path else { return Ok(None) };
    let profile: FaultProfile = read_json(path)?;
    profile.validate().with_context(|| format!("{}", path.display()))?;
    Ok(Some(profile))
}

fn load_script(spec: &str) -> anyhow::Result<BotScript> {
    if let Some(s) = shipped_script(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if !path.exists() {
        let names: Vec<_> = shipped_script_names().collect();
        bail!("no script file {spec} and no shipped script of that name (shipped: {})", names.join(", "));
    }
    BotScript::from_json(&read_file(path)?).with_context(|| path.display().to_string())
}

async fn resolve(server: &str) -> anyhow::Result<SocketAddr> {
    tokio::net::lookup_host(server)
        .await
        .with_context(|| format!("cannot resolve {server}"))?
        .next()
        .ok_or_else(|| anyhow!("{server} resolved to no address"))
}

fn session_config(args: &ServeArgs, registry: &ParamRegistry) -> anyhow::Result<SessionConfig> {
    let mut config: SessionConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SessionConfig::default(),
    };
    if !args.states.is_empty() {
        config.sequences = args
            .states
            .iter()
            .map(|p| parse_sequence(&read_file(p)?, registry).with_context(|| p.display().to_string()))
            .collect::<anyhow::Result<_>>()?;
    }
    if let Some(s) = args.time_scale {
        config.time_scale = s;
    }
    config.validate(registry).context("invalid session config")?;
    Ok(config)
}

pub async fn serve(args: ServeArgs, json: bool) -> anyhow::Result<()> {
    let registry = Arc::new(ParamRegistry::canonical());
    let config = session_config(&args, &registry)?;
    let host: std::net::IpAddr = args.host.parse().with_context(|| format!("invalid host {}", args.host))?;
    let mut opts = ServerOptions::new(config);
    opts.registry = registry;
    opts.bind = SocketAddr::new(host, args.port);
    opts.control_bind = args.console_port.map(|p| SocketAddr::new(host, p));
    opts.log_path = args.log.clone();
    opts.token = args.token.clone();
    opts.stop_after_finish = args.exit_after_finish;

    let handle = copresence_session::start(opts).await?;
    if json {
        print_json(&json!({
            "addr": handle.addr,
            "control": handle.control_addr,
            "token": handle.token,
        }))?;
    } else {
        println!("session listening on {}", handle.addr);
        if let Some(c) = handle.control_addr {
            println!("control API on http://{c}");
            println!("token {}", handle.token);
        }
    }
    let summary = handle
        .run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if json {
        print_json(&summary)?;
    } else {
        println!("stopped after {} ticks, {} events", summary.ticks, summary.events);
    }
    if let Some(e) = summary.log_error {
        bail!("session log: {e}");
    }
    Ok(())
}

fn max_wall(secs: Option<f64>) -> anyhow::Result<Option<Duration>> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|_| anyhow!("invalid --max-wall {s}"))).transpose()
}

pub async fn bot(args: BotArgs, json: bool) -> anyhow::Result<()> {
    let script = load_script(&args.script)?;
    let fault = load_fault(args.fault.as_deref())?;
    let addr = resolve(&args.server).await?;
    let opts = BotOptions {
        name: args.name.clone(),
        role: args.role.into(),
        until_finished: args.until_finished,
        max_wall: max_wall(args.max_wall)?,
        fault,
    };
    let report = run_bot(addr, script, opts).await?;
    if json {
        print_json(&report)?;
    } else {
        println!(
            "{}: {} frames, {} states, finished {}, max pose staleness {:.0} ms",
            report.name,
            report.frames_received,
            report.states_observed.len(),
            report.finished,
            report.max_pose_staleness
        );
    }
    if !report.errors.is_empty() {
        bail!("{}: {}", report.name, report.errors.join("; "));
    }
    Ok(())
}

pub async fn ensemble(args: EnsembleArgs, json: bool) -> anyhow::Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let script = load_script(&args.script)?;
    let fault = load_fault(args.fault.as_deref())?;
    let addr = resolve(&args.server).await?;
    let bots = (1..=args.n).map(|i| (format!("bot{i}"), script.clone())).collect();
    let reports = run_ensemble(addr, bots, fault, args.until_finished, max_wall(args.max_wall)?).await?;

    let digests: Vec<_> = reports.iter().filter_map(|r| r.final_frame_digest.as_deref()).collect();
    let agree = !digests.is_empty() && digests.iter().all(|d| *d == digests[0]);
    if json {
        print_json(&json!({ "reports": reports, "final_states_agree": agree }))?;
    } else {
        for r in &reports {
            let status = if r.errors.is_empty() { "ok".to_string() } else { r.errors.join("; ") };
            println!("{}: {} frames, {} states, finished {}: {status}", r.name, r.frames_received, r.states_observed.len(), r.finished);
        }
        if args.until_finished {
            println!("final states agree: {agree}");
        }
    }
    Ok(())
}

/// Prints the report as one JSON line whatever the output mode.
pub async fn diag(args: DiagArgs) -> anyhow::Result<()> {
    let fault = load_fault(args.fault.as_deref())?;
    let addr = resolve(&args.server).await?;
    let opts = ProbeOptions {
        pings: args.pings,
        interval: Duration::from_millis(args.interval_ms),
        timeout: Duration::from_millis(args.timeout_ms),
        fault,
    };
    let report = probe(addr, &opts).await?;
    let gate = stability_gate(&report);
    let mut out = serde_json::to_value(&report)?;
    out["gate"] = serde_json::to_value(gate)?;
    print_json(&out)?;
    if !gate.passed() {
        bail!("stability gate failed for {addr}");
    }
    Ok(())
}

pub fn replay(log: &Path, json: bool) -> anyhow::Result<()> {
    let events = read_log(log)?;
    let summary = copresence_session::replay(&events, Arc::new(ParamRegistry::canonical()))
        .with_context(|| format!("{} does not replay", log.display()))?;
    if json {
        print_json(&summary)?;
    } else {
        println!(
            "replayed {} events over {} ticks; final frame {}",
            summary.events,
            summary.ticks,
            summary.final_digest.as_deref().unwrap_or("none")
        );
    }
    Ok(())
}
