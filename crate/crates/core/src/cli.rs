//! Command-line front end. `cli_main` returns the process exit code:
//! 0 on success, 1 for usage errors, 2 for data errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::warn;

use crate::align::{new_follower, CostMetric, FollowerConfig, FollowerKind};
use crate::error::{Error, Result};
use crate::eval::{aggregate_reports, evaluate, ErrorMode, ErrorRecord, EvalReport};
use crate::features::{FeatureConfig, FeatureKind, Processor};
use crate::io;
use crate::runtime::{prepare_reference, run_simulation, synthesis_tempo, RunConfig};
use crate::score::{beat_grid, render_reference, synthetic, RenderConfig};
use crate::types::FrameClock;

#[derive(Debug, Parser)]
#[command(name = "scorefollow", version, about = "Real-time audio-to-score alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Follow a performance recording against a MIDI score and report accuracy.
    Run(RunArgs),
    /// Synthesize a MIDI score to WAV and write its beat grid.
    Render(RenderArgs),
    /// Recompute metrics from a dumped path, or aggregate piece reports.
    Eval(EvalArgs),
    /// Time every feature and follower combination on a synthetic piece.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ClockArgs {
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
}

impl ClockArgs {
    fn clock(&self) -> Result<FrameClock> {
        FrameClock::new(self.sample_rate, self.fps)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    score: PathBuf,
    /// Performance audio (WAV).
    #[arg(long)]
    perf: PathBuf,
    /// Beat annotations, `beat_index<TAB>time_sec` per line.
    #[arg(long)]
    ann: Option<PathBuf>,
    #[arg(long, default_value = "chroma")]
    feature: FeatureKind,
    #[arg(long, default_value = "arzt")]
    follower: FollowerKind,
    /// Synthesis tempo in BPM, or `auto` to derive it from the annotations.
    #[arg(long, default_value = "auto")]
    bpm: String,
    #[arg(long)]
    metric: Option<CostMetric>,
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    max_run: Option<usize>,
    #[arg(long)]
    backtrack: Option<usize>,
    #[arg(long)]
    p_stay: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_jump: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Millisecond error mode: detection or transfer-ms.
    #[arg(long, default_value = "detection")]
    error_mode: ErrorMode,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    clock: ClockArgs,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    score: PathBuf,
    /// Synthesis tempo; defaults to the score's first tempo (or 120).
    #[arg(long)]
    bpm: Option<f64>,
    #[arg(long)]
    out_wav: PathBuf,
    #[arg(long)]
    out_grid: Option<PathBuf>,
    #[command(flatten)]
    clock: ClockArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "aggregate")]
    path: Option<PathBuf>,
    #[arg(long, requires = "path")]
    ann: Option<PathBuf>,
    #[arg(long, requires = "path")]
    ref_grid: Option<PathBuf>,
    #[arg(long, default_value = "detection")]
    error_mode: ErrorMode,
    /// Per-piece report files to aggregate instead.
    #[arg(long, num_args = 1.., conflicts_with = "path")]
    aggregate: Vec<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the error records as TSV.
    #[arg(long)]
    errors: Option<PathBuf>,
    #[command(flatten)]
    clock: ClockArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Length of the synthetic piece in seconds at 120 BPM.
    #[arg(long, default_value_t = 60.0)]
    seconds: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the table here as well as to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn parse_bpm(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::config(format!("--bpm expects a number or 'auto', got '{s}'")))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut fc = FollowerConfig::with_metric(a.metric.unwrap_or(CostMetric::default_for(a.feature)));
    fc.window_size = a.window.unwrap_or(fc.window_size);
    fc.max_run_count = a.max_run.unwrap_or(fc.max_run_count);
    fc.backtrack = a.backtrack.unwrap_or(fc.backtrack);
    fc.p_stay = a.p_stay.unwrap_or(fc.p_stay);
    fc.lambda = a.lambda.unwrap_or(fc.lambda);
    fc.max_jump = a.max_jump.unwrap_or(fc.max_jump);
    fc.tau = a.tau.unwrap_or(fc.tau);
    if a.error_mode == ErrorMode::Transfer {
        return Err(Error::config("--error-mode must be detection or transfer-ms"));
    }
    let cfg = RunConfig {
        annotations: a.ann,
        feature: a.feature,
        follower: a.follower,
        bpm: parse_bpm(&a.bpm)?,
        clock: a.clock.clock()?,
        fft_size: a.fft_size,
        follower_config: Some(fc),
        ms_mode: a.error_mode,
        out_dir: Some(a.out.clone()),
        ..RunConfig::new(a.score, a.perf)
    };
    let out = run_simulation(&cfg)?;
    let r = &out.simulation.report;
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.1}"));
    println!(
        "{} frames at {} BPM; AR@100ms {}%, AAE {} ms, total AR {}%; report in {}",
        out.simulation.events.len(),
        out.bpm,
        fmt(r.ar_ms(100.0)),
        fmt(r.AAE_ms),
        fmt(r.total_AR),
        a.out.join("report.json").display()
    );
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let clock = a.clock.clock()?;
    let score = io::read_midi(&a.score)?;
    let bpm = synthesis_tempo(&score, None, a.bpm)?;
    let audio = render_reference(&score, &RenderConfig::new(bpm, clock)?)?;
    io::write_wav(&a.out_wav, &audio, clock.sample_rate())?;
    if let Some(g) = &a.out_grid {
        io::write_beats_tsv(g, &beat_grid(&score, bpm)?)?;
    }
    println!(
        "rendered {:.2} s at {bpm} BPM to {}",
        audio.len() as f64 / clock.sample_rate() as f64,
        a.out_wav.display()
    );
    Ok(())
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if !a.aggregate.is_empty() {
        let reports = a
            .aggregate
            .iter()
            .map(|p| io::read_json::<EvalReport>(p))
            .collect::<Result<Vec<_>>>()?;
        return emit_json(&aggregate_reports(&reports)?, a.out.as_deref());
    }
    if a.error_mode == ErrorMode::Transfer {
        return Err(Error::config("--error-mode must be detection or transfer-ms"));
    }
    let (Some(path), Some(ann), Some(grid)) = (&a.path, &a.ann, &a.ref_grid) else {
        return Err(Error::config("eval needs --path, --ann and --ref-grid"));
    };
    let clock = a.clock.clock()?;
    let wp = io::read_path_tsv(path)?;
    let ann = io::read_beats_tsv(ann)?;
    let grid = io::read_beats_tsv(grid)?;
    if ann.is_empty() {
        warn!("no beat annotations; the report has no alignment metrics");
    }
    let errors = evaluate(&wp, &ann, &grid, &clock, a.error_mode)?;
    let report = EvalReport::from_records(&errors.ms, &errors.beats, None)?;
    if let Some(p) = &a.errors {
        let all: Vec<ErrorRecord> = errors.ms.iter().chain(&errors.beats).copied().collect();
        io::write_errors_tsv(p, &all)?;
    }
    emit_json(&report, a.out.as_deref())
}

/// Mean per-frame feature and alignment cost (ms) for each combination.
pub struct BenchRow {
    pub feature: FeatureKind,
    pub follower: FollowerKind,
    pub feature_ms: f64,
    pub align_ms: f64,
}

/// Times feature extraction and following on a seeded synthetic piece,
/// single-threaded, one combination after another.
pub fn bench(seconds: f64, seed: u64) -> Result<Vec<BenchRow>> {
    let clock = FrameClock::default();
    let measures = ((seconds / 2.0).ceil() as usize).max(1);
    let score = synthetic::generate_piece(seed, measures);
    let curve = synthetic::fluctuating_curve(seed, 120.0, measures * 4, 0.2);
    let perf = synthetic::perform(&score, &curve, &RenderConfig::new(120.0, clock)?)?;
    let mut rows = Vec::new();
    for feature in FeatureKind::ALL {
        let fc = FeatureConfig::new(feature, clock);
        let reference = prepare_reference(&score, 120.0, &fc)?;
        let mut proc = Processor::new(fc.clone())?;
        let mut framer = proc.new_source();
        let mut windows = Vec::new();
        framer.push_with(&perf.audio, |w| windows.push(w.to_vec()));
        let started = std::time::Instant::now();
        let frames = windows
            .iter()
            .map(|w| proc.process_window(w))
            .collect::<Result<Vec<_>>>()?;
        let feature_ms = started.elapsed().as_secs_f64() * 1000.0 / frames.len().max(1) as f64;
        for follower in FollowerKind::ALL {
            let cfg = FollowerConfig::with_metric(CostMetric::default_for(feature));
            let mut f = new_follower(follower, Arc::clone(&reference.features), &cfg)?;
            let started = std::time::Instant::now();
            for frame in &frames {
                f.step(frame)?;
            }
            let align_ms = started.elapsed().as_secs_f64() * 1000.0 / frames.len().max(1) as f64;
            rows.push(BenchRow {
                feature,
                follower,
                feature_ms,
                align_ms,
            });
        }
    }
    Ok(rows)
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    if !(a.seconds.is_finite() && a.seconds > 0.0) {
        return Err(Error::config("--seconds must be positive"));
    }
    let rows = bench(a.seconds, a.seed)?;
    let mut table = String::from("feature\tfollower\tfeature_ms\talign_ms\ttotal_ms\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}",
            r.feature,
            r.follower,
            r.feature_ms,
            r.align_ms,
            r.feature_ms + r.align_ms
        );
    }
    print!("{table}");
    if let Some(p) = &a.out {
        std::fs::write(p, &table).map_err(|e| Error::from(e).in_file(p))?;
    }
    Ok(())
}
