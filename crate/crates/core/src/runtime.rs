//! Single-threaded simulation: reference preparation, frame-by-frame
//! following of a performance, and evaluation of the emitted path.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::align::{new_follower, CostMetric, FollowerConfig, FollowerKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate, latency_stats, ErrorMode, ErrorRecord, EvalReport};
use crate::features::{FeatureConfig, FeatureKind, Processor};
use crate::io;
use crate::score::{beat_grid, beat_positions, render_reference, round_tempo, RenderConfig, ScoreDocument};
use crate::stream::{AudioSource, FileSource};
use crate::types::{BeatAnnotations, BeatGrid, FeatureMatrix, FrameClock, WarpingPath};

/// Samples handed to the feature processor per simulated buffer.
pub const DEFAULT_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub score: PathBuf,
    pub performance: PathBuf,
    pub annotations: Option<PathBuf>,
    pub feature: FeatureKind,
    pub follower: FollowerKind,
    /// Synthesis tempo; `None` derives it from the annotations.
    pub bpm: Option<f64>,
    pub clock: FrameClock,
    pub fft_size: Option<usize>,
    /// `None` uses the defaults with the feature's usual metric.
    pub follower_config: Option<FollowerConfig>,
    pub ms_mode: ErrorMode,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(score: impl Into<PathBuf>, performance: impl Into<PathBuf>) -> Self {
        RunConfig {
            score: score.into(),
            performance: performance.into(),
            annotations: None,
            feature: FeatureKind::Chroma,
            follower: FollowerKind::Arzt,
            bpm: None,
            clock: FrameClock::default(),
            fft_size: None,
            follower_config: None,
            ms_mode: ErrorMode::Detection,
            out_dir: None,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        let mut cfg = FeatureConfig::new(self.feature, self.clock);
        if let Some(n) = self.fft_size {
            cfg.fft_size = n;
        }
        cfg
    }

    pub fn resolved_follower_config(&self) -> FollowerConfig {
        self.follower_config
            .clone()
            .unwrap_or_else(|| FollowerConfig::with_metric(CostMetric::default_for(self.feature)))
    }

    pub fn validate(&self) -> Result<()> {
        for (what, p) in [("score", Some(&self.score)), ("performance", Some(&self.performance)), ("annotations", self.annotations.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::input(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        self.feature_config().validate()?;
        self.resolved_follower_config().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionEvent {
    pub perf_time: f64,
    pub est_ref_frame: usize,
    /// Fractional beat position on the reference grid.
    pub est_beat: f64,
    pub feature_ms: f64,
    pub align_ms: f64,
}

/// Rendered and analysed reference for one score.
pub struct Reference {
    pub bpm: f64,
    pub audio: Vec<f32>,
    pub features: Arc<FeatureMatrix>,
    pub grid: BeatGrid,
}

pub fn prepare_reference(score: &ScoreDocument, bpm: f64, features: &FeatureConfig) -> Result<Reference> {
    let audio = render_reference(score, &RenderConfig::new(bpm, features.clock)?)?;
    if audio.is_empty() {
        return Err(Error::input("score renders to no audio"));
    }
    let matrix = Processor::new(features.clone())?.process(&audio)?;
    if matrix.is_empty() {
        return Err(Error::input("reference audio is shorter than one frame"));
    }
    Ok(Reference {
        bpm,
        audio,
        features: Arc::new(matrix),
        grid: beat_grid(score, bpm)?,
    })
}

/// Quarter-note tempo implied by the annotated beats, or the score's own
/// tempo (120 if none) without usable annotations.
pub fn average_tempo(score: &ScoreDocument, annotations: Option<&BeatAnnotations>) -> f64 {
    let positions = beat_positions(score);
    if let Some(a) = annotations {
        let e = a.entries();
        if let (Some(&(b0, t0)), Some(&(b1, t1))) = (e.first(), e.last()) {
            if b1 > b0 && b1 < positions.len() {
                return (positions[b1] - positions[b0]) / (t1 - t0) * 60.0;
            }
        }
    }
    score.tempos.first().map_or(120.0, |t| t.bpm)
}

/// Explicit tempo (rounded if needed) or the rounded average tempo.
pub fn synthesis_tempo(score: &ScoreDocument, annotations: Option<&BeatAnnotations>, bpm: Option<f64>) -> Result<f64> {
    match bpm {
        Some(b) => {
            let r = round_tempo(b)?;
            if r != b {
                warn!("synthesis tempo {b} rounded to {r}");
            }
            Ok(r)
        }
        None => round_tempo(average_tempo(score, annotations)),
    }
}

pub struct Simulation {
    pub events: Vec<PositionEvent>,
    pub path: WarpingPath,
    pub ms_errors: Vec<ErrorRecord>,
    pub beat_errors: Vec<ErrorRecord>,
    pub report: EvalReport,
}

/// Follow `performance` against `reference` one frame at a time.
pub fn simulate(
    reference: &Reference,
    performance: &[f32],
    annotations: Option<&BeatAnnotations>,
    features: &FeatureConfig,
    kind: FollowerKind,
    follower_cfg: &FollowerConfig,
    ms_mode: ErrorMode,
) -> Result<Simulation> {
    let clock = features.clock;
    let mut processor = Processor::new(features.clone())?;
    let mut framer = processor.new_source();
    let mut follower = new_follower(kind, Arc::clone(&reference.features), follower_cfg)?;
    let mut source = FileSource::new(performance.to_vec(), DEFAULT_CHUNK);
    let quarter_frames = reference.bpm / 60.0 / clock.frame_rate();

    let mut events = Vec::new();
    let mut on_window = |window: &[f32]| -> Result<()> {
        let started = Instant::now();
        let frame = processor.process_window(window)?;
        let featured = Instant::now();
        let est = follower.step(&frame)?;
        let done = Instant::now();
        let est_beat = reference
            .grid
            .interp_beat(clock.frame_to_time(est))
            .unwrap_or(est as f64 * quarter_frames);
        events.push(PositionEvent {
            perf_time: clock.frame_to_time(events.len()),
            est_ref_frame: est,
            est_beat,
            feature_ms: (featured - started).as_secs_f64() * 1000.0,
            align_ms: (done - featured).as_secs_f64() * 1000.0,
        });
        Ok(())
    };
    let mut failure = None;
    while let Some(chunk) = source.next_chunk() {
        framer.push_with(&chunk, |window| {
            if failure.is_none() {
                failure = on_window(window).err();
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
    }
    let path = follower.finalize();
    if events.is_empty() {
        return Err(Error::input("performance is shorter than one frame"));
    }
    let path = path?;
    let timings: Vec<(f64, f64)> = events.iter().map(|e| (e.feature_ms, e.align_ms)).collect();
    let latency = latency_stats(&timings)?;

    let empty = BeatGrid::default();
    let annotations = annotations.unwrap_or(&empty);
    if annotations.is_empty() {
        warn!("no beat annotations; the report has no alignment metrics");
    }
    let errors = evaluate(&path, annotations, &reference.grid, &clock, ms_mode)?;
    let report = EvalReport::from_records(&errors.ms, &errors.beats, Some(latency))?;
    Ok(Simulation {
        events,
        path,
        ms_errors: errors.ms,
        beat_errors: errors.beats,
        report,
    })
}

pub struct RunOutput {
    pub bpm: f64,
    pub simulation: Simulation,
    pub ref_grid: BeatGrid,
}

/// Load the inputs named by `cfg`, simulate, and write outputs if an output
/// directory is set.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let features = cfg.feature_config();
    let score = io::read_midi(&cfg.score)?;
    let annotations = cfg.annotations.as_deref().map(io::read_beats_tsv).transpose()?;
    let performance = io::read_wav_at(&cfg.performance, cfg.clock.sample_rate())?;
    let bpm = synthesis_tempo(&score, annotations.as_ref(), cfg.bpm)?;
    info!("synthesizing reference at {bpm} BPM");
    let reference = prepare_reference(&score, bpm, &features)?;
    let simulation = simulate(
        &reference,
        &performance,
        annotations.as_ref(),
        &features,
        cfg.follower,
        &cfg.resolved_follower_config(),
        cfg.ms_mode,
    )?;
    let out = RunOutput {
        bpm,
        simulation,
        ref_grid: reference.grid,
    };
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let sim = &out.simulation;
    io::write_events_tsv(&dir.join("events.tsv"), &sim.events)?;
    io::write_path_tsv(&dir.join("path.tsv"), &sim.path)?;
    io::write_beats_tsv(&dir.join("ref_grid.tsv"), &out.ref_grid)?;
    let errors: Vec<ErrorRecord> = sim.ms_errors.iter().chain(&sim.beat_errors).copied().collect();
    io::write_errors_tsv(&dir.join("errors.tsv"), &errors)?;
    io::write_json(&dir.join("report.json"), &sim.report)
}
