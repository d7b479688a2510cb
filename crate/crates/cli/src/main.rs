//! Command-line front end for the simulator.
//!
//! Subcommands: `simulate` runs one episode, `compare` pits policies
//! against each other over a seed set, `sweep` varies one world axis,
//! and `train-attention` refines the context-pruning parameters offline.
//! Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 I/O
//! error. All file output is atomic; an aborted run leaves no partial
//! files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use uavsim_core::config::{build_sim_config, parse_config, parse_override, ConfigError};
use uavsim_core::sim::report::{atomic_write, episode_csv, summary_csv, trace_jsonl, training_csv};
use uavsim_core::sim::{
    run_episode, run_experiment, train_attention, EpisodeResult, ExperimentPoint, ExperimentRow,
    PerSensor, PolicyKind, SimConfig, SimError,
};

// ===== Errors and exit codes =====

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime: {msg}"),
            CliError::Io(msg) => write!(f, "io: {msg}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

// ===== Arguments =====

#[derive(Parser)]
#[command(
    name = "uavsim",
    version,
    about = "Deterministic multi-UAV data-collection simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one episode and print its summary.
    Simulate(SimulateArgs),
    /// Run several policies over a seed set and compare their losses.
    Compare(CompareArgs),
    /// Vary one axis of the world and measure each policy along it.
    Sweep(SweepArgs),
    /// Train the attention scorer offline and save a checkpoint.
    TrainAttention(TrainArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration value (repeatable), e.g. --set sim.steps=50
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Episode seed (default: the configured seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduling policy: icl, max_gain, greedy, or random (default: configured).
    #[arg(long)]
    policy: Option<String>,
    /// Write the per-contact episode log as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write the full step-by-step record as JSON lines.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Seeds: half-open range "A..B" or comma-separated list.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Comma-separated policies; the first is the reduction baseline.
    #[arg(long, default_value = "max_gain,random,greedy,icl")]
    policies: String,
    /// Worker threads for running episodes (results do not depend on this).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the aggregated comparison as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Axis to vary: sensors, uavs, queue_cap, top_k, or arrival_rate.
    #[arg(long)]
    axis: String,
    /// Strictly increasing comma-separated axis values.
    #[arg(long)]
    values: String,
    /// Seeds: half-open range "A..B" or comma-separated list.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Comma-separated policies (default: the configured policy).
    #[arg(long)]
    policies: Option<String>,
    /// Worker threads for running episodes (results do not depend on this).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the aggregated sweep as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Base seed for parameter init and episode derivation (default: configured).
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes to run.
    #[arg(long, default_value_t = 20)]
    episodes: u32,
    /// Write the per-episode training log as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write the trained parameters as a reloadable checkpoint.
    #[arg(long, value_name = "PATH")]
    params_out: Option<PathBuf>,
}

// ===== Entry =====

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Simulate(args) => simulate(args),
        Cmd::Compare(args) => compare(args),
        Cmd::Sweep(args) => sweep(args),
        Cmd::TrainAttention(args) => train(args),
    }
}

fn load_config(common: &ConfigArgs) -> Result<SimConfig, CliError> {
    let mut entries = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => Vec::new(),
    };
    for spec in &common.set {
        entries.push(parse_override(spec)?);
    }
    Ok(build_sim_config(&entries)?)
}

fn write_file(path: &Path, content: &str, what: &str) -> Result<(), CliError> {
    atomic_write(path, content)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    println!("wrote {what} to {}", path.display());
    Ok(())
}

// ===== simulate =====

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let policy = match &args.policy {
        Some(s) => s.parse::<PolicyKind>().map_err(CliError::Config)?,
        None => cfg.policy,
    };
    let result = run_episode(&cfg, seed, policy)?;
    print_episode(&cfg, &result);
    if let Some(path) = &args.out {
        write_file(path, &episode_csv(&result), "episode log")?;
    }
    if let Some(path) = &args.trace {
        write_file(path, &trace_jsonl(&result), "step trace")?;
    }
    Ok(())
}

fn print_episode(cfg: &SimConfig, r: &EpisodeResult) {
    println!(
        "policy={} seed={} steps={} gamma_th={}",
        r.policy.name(),
        r.seed,
        r.steps.len(),
        r.gamma_th_db
    );
    println!(
        "sensors={} uavs={} area={}x{} altitude={}",
        cfg.sensors, cfg.uavs, cfg.area_side_m, cfg.area_side_m, cfg.altitude_m
    );
    println!(
        "generated={} delivered={} lost_overflow={} lost_comm={} residual={}",
        r.ledger.generated, r.ledger.delivered, r.ledger.lost_overflow, r.ledger.lost_comm, r.residual_queue
    );
    println!(
        "packet_loss={} event_loss={} (failed_contacts={} unattended_overflows={})",
        r.packet_loss, r.event_loss, r.f_total, r.g_total
    );
    println!(
        "contacts={} acks={} timeouts={} conflicts={} fallbacks={} alive_sensors={}",
        r.contacts_completed, r.acks_sent, r.timeouts, r.conflicts, r.fallbacks, r.final_alive_sensors
    );
}

// ===== compare =====

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let seeds = parse_seeds(&args.seeds)?;
    let policies = parse_policies(&args.policies)?;
    let label = format!("J{}-I{}", cfg.sensors, cfg.uavs);
    let points: Vec<ExperimentPoint> = policies
        .iter()
        .map(|&policy| ExperimentPoint { label: label.clone(), cfg: cfg.clone(), policy })
        .collect();
    let rows = run_experiment(&points, &seeds, args.jobs)?;
    print_summary(&rows);
    if let Some(path) = &args.out {
        write_file(path, &summary_csv(&rows), "comparison")?;
    }
    Ok(())
}

// ===== sweep =====

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let base = load_config(&args.common)?;
    let seeds = parse_seeds(&args.seeds)?;
    let policies = match &args.policies {
        Some(s) => parse_policies(s)?,
        None => vec![base.policy],
    };
    let mut points = Vec::new();
    for value in parse_axis_values(&args.axis, &args.values)? {
        let mut cfg = base.clone();
        apply_axis(&mut cfg, &args.axis, &value)?;
        for &policy in &policies {
            points.push(ExperimentPoint {
                label: format!("{}={}", args.axis, value),
                cfg: cfg.clone(),
                policy,
            });
        }
    }
    let rows = run_experiment(&points, &seeds, args.jobs)?;
    print_summary(&rows);
    if let Some(path) = &args.out {
        write_file(path, &summary_csv(&rows), "sweep")?;
    }
    Ok(())
}

/// One parsed sweep value; counts and rates print back exactly as given.
#[derive(Clone, Copy)]
enum AxisValue {
    Count(u64),
    Rate(f64),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Count(v) => write!(f, "{v}"),
            AxisValue::Rate(v) => write!(f, "{v}"),
        }
    }
}

fn parse_axis_values(axis: &str, values: &str) -> Result<Vec<AxisValue>, CliError> {
    let parsed: Result<Vec<AxisValue>, CliError> = values
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            match axis {
                "sensors" | "uavs" | "queue_cap" | "top_k" => tok
                    .parse::<u64>()
                    .map(AxisValue::Count)
                    .map_err(|e| CliError::Config(format!("axis value {tok:?}: {e}"))),
                "arrival_rate" => tok
                    .parse::<f64>()
                    .map(AxisValue::Rate)
                    .map_err(|e| CliError::Config(format!("axis value {tok:?}: {e}"))),
                other => Err(CliError::Config(format!(
                    "unknown axis {other:?}; expected sensors, uavs, queue_cap, top_k, or arrival_rate"
                ))),
            }
        })
        .collect();
    let parsed = parsed?;
    if parsed.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".to_string()));
    }
    let as_f64 = |v: &AxisValue| match v {
        AxisValue::Count(c) => *c as f64,
        AxisValue::Rate(r) => *r,
    };
    if parsed.windows(2).any(|w| as_f64(&w[0]) >= as_f64(&w[1])) {
        return Err(CliError::Config(format!(
            "sweep values must be strictly increasing, got {values:?}"
        )));
    }
    Ok(parsed)
}

fn apply_axis(cfg: &mut SimConfig, axis: &str, value: &AxisValue) -> Result<(), CliError> {
    match (axis, value) {
        ("sensors", AxisValue::Count(v)) => {
            cfg.sensors = *v as usize;
            // Keep the pruned context no wider than the sensor field.
            cfg.top_k = cfg.top_k.min(cfg.sensors.max(1));
        }
        ("uavs", AxisValue::Count(v)) => cfg.uavs = *v as usize,
        ("queue_cap", AxisValue::Count(v)) => cfg.queue_cap = *v as u32,
        ("top_k", AxisValue::Count(v)) => cfg.top_k = *v as usize,
        ("arrival_rate", AxisValue::Rate(v)) => cfg.arrival_rates = PerSensor::Uniform(*v),
        _ => unreachable!("axis and value kind were validated together"),
    }
    Ok(())
}

// ===== train-attention =====

fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let base_seed = args.seed.unwrap_or(cfg.seed);
    let (params, rows) = train_attention(&cfg, base_seed, args.episodes)?;
    println!("trained {} episodes from base seed {base_seed}", rows.len());
    for row in &rows {
        println!(
            "episode {}: seed={} surrogate_loss={:.6} used_steps={} skipped_steps={} packet_loss={}{}",
            row.episode,
            row.seed,
            row.surrogate_loss,
            row.used_steps,
            row.skipped_steps,
            row.packet_loss,
            if row.degenerate { " degenerate" } else { "" },
        );
    }
    if let Some(path) = &args.out {
        write_file(path, &training_csv(base_seed, &rows), "training log")?;
    }
    if let Some(path) = &args.params_out {
        write_file(path, &params.to_checkpoint_string(), "parameter checkpoint")?;
    }
    Ok(())
}

// ===== Shared parsing and printing =====

fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let spec = spec.trim();
    let bad = |reason: String| CliError::Config(format!("seeds {spec:?}: {reason}"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| bad(format!("{e}")))?;
        let b: u64 = b.trim().parse().map_err(|e| bad(format!("{e}")))?;
        if a >= b {
            return Err(bad("range is empty (half-open A..B needs A < B)".to_string()));
        }
        return Ok((a..b).collect());
    }
    let seeds: Result<Vec<u64>, CliError> = spec
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| bad(format!("{e}"))))
        .collect();
    let seeds = seeds?;
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(bad("duplicate seeds".to_string()));
    }
    Ok(seeds)
}

fn parse_policies(spec: &str) -> Result<Vec<PolicyKind>, CliError> {
    let policies: Result<Vec<PolicyKind>, CliError> = spec
        .split(',')
        .map(|t| t.trim().parse::<PolicyKind>().map_err(CliError::Config))
        .collect();
    let policies = policies?;
    for (i, p) in policies.iter().enumerate() {
        if policies[..i].contains(p) {
            return Err(CliError::Config(format!("policy {} listed twice", p.name())));
        }
    }
    Ok(policies)
}

fn print_summary(rows: &[ExperimentRow]) {
    println!(
        "{:<16} {:<9} {:>4} {:>12} {:>10} {:>8} {:>8} {:>12} {:>14} {:>11}",
        "label", "policy", "n", "mean_loss", "std", "min", "max", "mean_events", "delivered", "reduction%"
    );
    for row in rows {
        let base = rows
            .iter()
            .find(|r| r.label == row.label)
            .map(|r| r.packet_loss.mean)
            .unwrap_or(row.packet_loss.mean);
        let reduction = if base == 0.0 {
            "-".to_string()
        } else {
            format!("{:.1}", 100.0 * (base - row.packet_loss.mean) / base)
        };
        println!(
            "{:<16} {:<9} {:>4} {:>12.2} {:>10.2} {:>8.0} {:>8.0} {:>12.2} {:>14.2} {:>11}",
            row.label,
            row.policy.name(),
            row.packet_loss.n,
            row.packet_loss.mean,
            row.packet_loss.std,
            row.packet_loss.min,
            row.packet_loss.max,
            row.mean_event_loss,
            row.mean_delivered,
            reduction,
        );
    }
}
