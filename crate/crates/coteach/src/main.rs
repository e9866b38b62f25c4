use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coteach::bench::{self, DEFAULT_SIZES};
use coteach::formats::{self, Format};
use coteach::pipeline::{self, seed_offset, DemoOptions, SegmentOptions};
use coteach::server::{Server, ServerConfig, TickMode};
use coteach_core::bnirl::BnirlConfig;
use coteach_core::engine::{
    compute_metrics, instruction_agreement, replay_axes, replay_demo, SessionConfig,
};
use coteach_core::kinematics::Machine;
use coteach_core::segmentation::{VelocityClusterModel, DEFAULT_MIN_LEN};
use coteach_core::DEFAULT_RATE_HZ;
use serde_json::json;

/// Learn instruction policies from excavator demonstrations and serve them
/// to live operators.
#[derive(Parser)]
#[command(name = "coteach", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted expert demonstrations and their ground truth.
    GenDemo(GenDemoArgs),
    /// Cluster joint velocities and cut demonstrations into primitive segments.
    Segment(SegmentArgs),
    /// Infer subgoals and the instruction policy from segments.
    Learn(LearnArgs),
    /// Replay a session log or a demonstration through the engine and score it.
    Eval(EvalArgs),
    /// Run the instruction service.
    Serve(ServeArgs),
    /// Time segmentation at several sizes and compare DPMIRL with BNIRL.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenDemoArgs {
    /// Output directory for demo_<i>.<ext> and oracle_<i>.json.
    #[arg(long, default_value = "demos")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 6)]
    demos: usize,
    #[arg(long, default_value_t = 5)]
    cycles: usize,
    /// Gaussian noise on every joint velocity, rad/s.
    #[arg(long, default_value_t = 0.02)]
    noise_std: f64,
    /// Demo i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Expert script JSON. Defaults to the bundled truck-loading script.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Task layout JSON. Defaults to the bundled truck-loading layout.
    #[arg(long)]
    task: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Demonstration files.
    #[arg(required = true)]
    demos: Vec<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value = "segments.jsonl")]
    out: PathBuf,
    /// Velocity cluster output. Defaults to clusters.json next to --out.
    #[arg(long)]
    clusters_out: Option<PathBuf>,
    /// Shortest run kept as its own segment, frames. Shorter runs merge into
    /// a neighbouring segment.
    #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
    min_len: usize,
    /// Stationary density threshold for every joint. Default: the
    /// stationary cluster's density two standard deviations from its mean.
    #[arg(long)]
    eta: Option<f64>,
    /// Clustering uses seed + 1000.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fit velocity clusters per demo instead of pooling all demos. The
    /// pooled fit is still written for the live engine.
    #[arg(long)]
    per_demo: bool,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long, default_value = "segments.jsonl")]
    segments: PathBuf,
    /// Velocity clusters from `segment`. Defaults to clusters.json next to
    /// --segments.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    task: Option<PathBuf>,
    /// DP-means squared-distance penalty. Default: (0.25 x distance between
    /// the two nearest object centers)^2, or the object radius squared with
    /// a single object.
    #[arg(long)]
    lambda: Option<f64>,
    /// Debounce window the live engine applies, frames.
    #[arg(long, default_value_t = DEFAULT_MIN_LEN)]
    min_len: usize,
    /// Writes subgoals.json and policy.json here.
    #[arg(long, default_value = "model")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Session log to replay (JSONL from `serve --log-dir`).
    #[arg(long, conflicts_with = "demo", required_unless_present = "demo")]
    replay: Option<PathBuf>,
    /// Demonstration to replay as operator input.
    #[arg(long)]
    demo: Option<PathBuf>,
    #[arg(long, default_value = "model/policy.json")]
    model: PathBuf,
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
    /// Also write the replayed session log.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Session seed for --demo replays (seed + 3000).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    #[arg(long, default_value = "model/policy.json")]
    model: PathBuf,
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TickMode::Realtime)]
    tick: TickMode,
    /// Session n uses seed + 3000 + n unless its hello names a seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write one session-<n>.jsonl log per session here.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct BenchArgs {
    #[command(subcommand)]
    command: Option<BenchCommand>,
    /// Trajectory lengths to time, frames.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
    sizes: Vec<usize>,
    /// Repetitions per size; the fastest counts.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    #[arg(long, default_value = "agreement.json")]
    report: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run the BNIRL sampler on the two-target toy and compare with DPMIRL.
    Bnirl(BnirlArgs),
}

#[derive(Args)]
struct BnirlArgs {
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    /// Gibbs sweeps including burn-in.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Toy and chain use seed + 2000.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Uniform perturbation of the toy states.
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    #[arg(long, default_value = "partition.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, result) = match cli.command {
        Command::GenDemo(a) => ("gen-demo", gen_demo(a)),
        Command::Segment(a) => ("segment", segment(a)),
        Command::Learn(a) => ("learn", learn(a)),
        Command::Eval(a) => ("eval", eval(a)),
        Command::Serve(a) => ("serve", serve(a)),
        Command::Bench(a) => ("bench", run_bench(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: stage {stage}: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

fn gen_demo(a: GenDemoArgs) -> Result<()> {
    let script = formats::read_script(a.script.as_deref())?;
    let task = formats::read_task(a.task.as_deref())?;
    let opts = DemoOptions {
        demos: a.demos,
        cycles: a.cycles,
        noise_std: a.noise_std,
        seed: a.seed,
    };
    let demos = pipeline::gen_demos(&script, &task, &Machine::default(), &opts)?;
    for (i, (traj, oracle)) in demos.iter().enumerate() {
        formats::write_trajectory(
            &a.out_dir.join(format!("demo_{i}.{}", a.format.extension())),
            traj,
            a.format,
        )?;
        formats::write_json(&a.out_dir.join(format!("oracle_{i}.json")), oracle)?;
    }
    println!(
        "wrote {} demos of {} frames to {}",
        demos.len(),
        demos[0].0.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    let trajs = a
        .demos
        .iter()
        .map(|p| formats::read_trajectory(p, a.format))
        .collect::<Result<Vec<_>>>()?;
    let opts = SegmentOptions {
        min_len: a.min_len,
        eta: a.eta,
        seed: a.seed,
        per_demo: a.per_demo,
    };
    let seg = pipeline::segment_demos(&trajs, &opts)?;
    let mut buf = Vec::new();
    formats::save_segments(&seg.segments, &mut buf)?;
    formats::write_bytes(&a.out, &buf)?;
    let clusters_out = a
        .clusters_out
        .unwrap_or_else(|| sibling(&a.out, "clusters.json"));
    formats::write_json(&clusters_out, &seg.clusters)?;
    let total: usize = seg.segments.iter().map(Vec::len).sum();
    println!(
        "wrote {total} segments from {} demos to {}",
        trajs.len(),
        a.out.display()
    );
    Ok(())
}

fn learn(a: LearnArgs) -> Result<()> {
    let task = formats::read_task(a.task.as_deref())?;
    let file =
        fs::File::open(&a.segments).with_context(|| format!("open {}", a.segments.display()))?;
    let segments = formats::load_segments(file)?;
    let clusters_path = a
        .clusters
        .unwrap_or_else(|| sibling(&a.segments, "clusters.json"));
    let clusters: VelocityClusterModel = formats::read_json(&clusters_path)?;
    let model = pipeline::learn(&segments, clusters, &task, a.lambda, a.min_len)?;
    let policy = a.out_dir.join("policy.json");
    formats::write_model(&policy, &a.out_dir.join("subgoals.json"), &model)?;
    println!(
        "learned {} subgoals (lambda {}) from {} segments; wrote {}",
        model.subgoals().len(),
        model.subgoals().lambda,
        segments.iter().map(Vec::len).sum::<usize>(),
        policy.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let task = formats::read_task(a.task.as_deref())?;
    let model = formats::read_model(&a.model, &task)?;
    let machine = Machine::default();
    let log = if let Some(path) = &a.replay {
        let file = fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
        let recorded = formats::load_session_log(file)?;
        let dt = recorded
            .records
            .first()
            .map_or(1.0 / DEFAULT_RATE_HZ, |r| r.t - recorded.initial.t);
        let config = SessionConfig {
            seed: recorded.seed,
            style: recorded.style,
            home: recorded.initial.q,
            dt,
        };
        replay_axes(model.clone(), &task, &machine, config, &recorded.axes())
            .map_err(|e| anyhow!("{e}"))?
    } else if let Some(path) = &a.demo {
        let traj = formats::read_trajectory(path, None)?;
        replay_demo(
            model.clone(),
            &task,
            &machine,
            &traj,
            a.seed.wrapping_add(seed_offset::SESSION),
        )
        .map_err(|e| anyhow!("{e}"))?
    } else {
        bail!("one of --replay or --demo is required");
    };
    let metrics = compute_metrics(&log, model.subgoals()).map_err(|e| anyhow!("{e}"))?;
    let report = json!({
        "cycle_times": metrics.cycle_times,
        "actions_per_cycle": metrics.actions_per_cycle,
        "erroneous_actions_per_cycle": metrics.erroneous_actions_per_cycle,
        "dump_heights": metrics.dump_heights,
        "frames": log.records.len(),
        "instruction_agreement": instruction_agreement(&log),
    });
    formats::write_json(&a.out, &report)?;
    if let Some(p) = &a.log_out {
        let mut buf = Vec::new();
        formats::save_session_log(&log, &mut buf)?;
        formats::write_bytes(p, &buf)?;
    }
    println!(
        "{} completed cycles, agreement {:.4}; wrote {}",
        metrics.completed_cycles(),
        instruction_agreement(&log),
        a.out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let task = formats::read_task(a.task.as_deref())?;
    let model = formats::read_model(&a.model, &task)?;
    let config = ServerConfig {
        tick: a.tick,
        seed: a.seed.wrapping_add(seed_offset::SESSION),
        log_dir: a.log_dir,
        ..ServerConfig::default()
    };
    let server = Arc::new(Server::new(model, task, Machine::default(), config)?);
    let listener =
        std::net::TcpListener::bind(&a.bind).with_context(|| format!("bind {}", a.bind))?;
    eprintln!("listening on {}", listener.local_addr()?);
    server.serve(listener)
}

fn run_bench(a: BenchArgs) -> Result<()> {
    if let Some(BenchCommand::Bnirl(b)) = a.command {
        let config = BnirlConfig {
            alpha: b.alpha,
            concentration: b.concentration,
            iterations: b.iters,
            burn_in: b.burn_in,
            seed: b.seed.wrapping_add(seed_offset::BNIRL),
        };
        let report = bench::bnirl_agreement(&config, b.jitter)?;
        formats::write_json(&b.out, &report)?;
        println!(
            "bnirl mode {:?}, ARI vs DPMIRL {:.3}; wrote {}",
            report.bnirl_mode,
            report.ari_bnirl_dpmirl,
            b.out.display()
        );
        return Ok(());
    }
    let rows = bench::segmentation_timing(&a.sizes, a.seed, DEFAULT_MIN_LEN, a.reps)?;
    let mut buf = Vec::new();
    bench::write_timing_csv(&rows, &mut buf)?;
    formats::write_bytes(&a.out, &buf)?;
    for r in &rows {
        println!("{:>8} frames  {:.4} s", r.frames, r.seconds);
    }
    for (t, ratio) in bench::doubling_ratios(&rows) {
        println!("time({})/time({t}) = {ratio:.3}", 2 * t);
    }
    let config = BnirlConfig {
        seed: a.seed.wrapping_add(seed_offset::BNIRL),
        ..BnirlConfig::default()
    };
    let report = bench::bnirl_agreement(&config, 0.1)?;
    formats::write_json(&a.report, &report)?;
    println!(
        "DPMIRL/BNIRL ARI {:.3}; wrote {} and {}",
        report.ari_bnirl_dpmirl,
        a.out.display(),
        a.report.display()
    );
    Ok(())
}
