//! Causal position mapping, beat-level errors and the metric suite.

mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use metrics::{
    aggregate, latency_stats, metrics, shape, Metrics, PieceCounts, RateEntry, BEAT_THRESHOLDS,
    MS_THRESHOLDS,
};

use crate::error::{Error, Result};
use crate::types::{BeatAnnotations, BeatGrid, FrameClock, WarpingPath};

/// Reference frame reported at performance frame `k`: among the pairs with
/// the latest performance index not after `k`, the smallest reference index.
pub fn map_position(path: &WarpingPath, k: usize) -> Result<usize> {
    let pairs = path.pairs();
    let end = pairs.partition_point(|p| p.1 <= k);
    if end == 0 {
        return Err(Error::input(format!(
            "no path entry at or before performance frame {k}"
        )));
    }
    let v = pairs[end - 1].1;
    let start = pairs[..end].partition_point(|p| p.1 < v);
    Ok(pairs[start..end].iter().map(|p| p.0).min().expect("non-empty run"))
}

/// `map_position` for every frame `0..frames`; `None` before the path starts.
pub fn mapped_positions(path: &WarpingPath, frames: usize) -> Vec<Option<usize>> {
    let pairs = path.pairs();
    let mut out = Vec::with_capacity(frames);
    let mut i = 0;
    let mut current = None;
    for k in 0..frames {
        while i < pairs.len() && pairs[i].1 <= k {
            let v = pairs[i].1;
            let mut u = pairs[i].0;
            while i < pairs.len() && pairs[i].1 == v {
                u = u.min(pairs[i].0);
                i += 1;
            }
            current = Some(u);
        }
        out.push(current);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Ms,
    Beats,
}

impl Domain {
    /// Errors beyond this magnitude are excluded.
    pub fn exclusion_limit(self) -> f64 {
        match self {
            Domain::Ms => 2000.0,
            Domain::Beats => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub beat_index: usize,
    /// Signed; positive means the follower was late.
    pub error: f64,
    pub domain: Domain,
    pub excluded: bool,
}

impl ErrorRecord {
    pub fn new(beat_index: usize, error: f64, domain: Domain) -> Self {
        ErrorRecord {
            beat_index,
            error,
            domain,
            excluded: error.is_nan() || error.abs() > domain.exclusion_limit(),
        }
    }
}

/// How an annotated beat is compared with the follower output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// Score position reported at the beat's performance time, in beats.
    Transfer,
    /// The transferred position mapped back to performance time, in ms.
    TransferMs,
    /// First time the reported position reaches the beat, in ms.
    Detection,
}

impl ErrorMode {
    pub fn domain(self) -> Domain {
        match self {
            ErrorMode::Transfer => Domain::Beats,
            _ => Domain::Ms,
        }
    }
}

impl fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorMode::Transfer => "transfer",
            ErrorMode::TransferMs => "transfer-ms",
            ErrorMode::Detection => "detection",
        })
    }
}

impl FromStr for ErrorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transfer" => Ok(ErrorMode::Transfer),
            "transfer-ms" => Ok(ErrorMode::TransferMs),
            "detection" => Ok(ErrorMode::Detection),
            _ => Err(Error::config(format!(
                "unknown error mode '{s}' (expected transfer, transfer-ms or detection)"
            ))),
        }
    }
}

pub fn compute_errors(
    path: &WarpingPath,
    annotations: &BeatAnnotations,
    ref_grid: &BeatGrid,
    clock: &FrameClock,
    mode: ErrorMode,
) -> Result<Vec<ErrorRecord>> {
    let Some((_, last_v)) = path.last() else {
        return Err(Error::input("warping path is empty"));
    };
    let fps = clock.frame_rate();
    let beats = annotations.entries();
    let mut out = Vec::with_capacity(beats.len());
    match mode {
        ErrorMode::Transfer | ErrorMode::TransferMs => {
            for &(b, t) in beats {
                let k = clock.time_to_frame(t)?;
                let error = match map_position(path, k) {
                    Ok(u) => {
                        let est = ref_grid.interp_beat(u as f64 / fps)?;
                        if mode == ErrorMode::Transfer {
                            est - b as f64
                        } else {
                            (annotations.time_of_beat(est)? - t) * 1000.0
                        }
                    }
                    Err(_) => f64::INFINITY,
                };
                out.push(ErrorRecord::new(b, error, mode.domain()));
            }
        }
        ErrorMode::Detection => {
            // running maximum so the first frame reaching a target is a binary search
            let mut reach = Vec::with_capacity(last_v + 1);
            let mut hi: Option<usize> = None;
            for u in mapped_positions(path, last_v + 1) {
                hi = hi.max(u);
                reach.push(hi);
            }
            for &(b, t) in beats {
                let target = clock.time_to_frame(ref_grid.time_of_beat(b as f64)?.max(0.0))?;
                let d = reach.partition_point(|r| *r < Some(target));
                let error = if d < reach.len() {
                    (clock.frame_to_time(d) - t) * 1000.0
                } else {
                    f64::INFINITY
                };
                out.push(ErrorRecord::new(b, error, Domain::Ms));
            }
        }
    }
    Ok(out)
}

/// Per-piece (or aggregate) report. Absent values serialize as `null`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub AAE_ms: Option<f64>,
    pub MAE_ms: Option<f64>,
    pub sigma_ms: Option<f64>,
    pub skew: Option<f64>,
    pub kurtosis: Option<f64>,
    pub AR_ms: Vec<RateEntry>,
    pub AAE_beats: Option<f64>,
    pub MAE_beats: Option<f64>,
    pub AR_beats: Vec<RateEntry>,
    pub piece_wise_AR: Option<f64>,
    pub total_AR: Option<f64>,
    pub mean_feature_latency_ms: Option<f64>,
    pub mean_align_latency_ms: Option<f64>,
    pub excluded_count: usize,
    pub beat_count: usize,
    pub aligned_count: usize,
}

impl EvalReport {
    pub fn from_records(
        ms: &[ErrorRecord],
        beats: &[ErrorRecord],
        latency: Option<(f64, f64)>,
    ) -> Result<Self> {
        let m = metrics(ms, &MS_THRESHOLDS)?;
        let b = metrics(beats, &BEAT_THRESHOLDS)?;
        let counts = PieceCounts::from_records(ms);
        let (piece_wise, total) = aggregate(&[counts])?;
        Ok(EvalReport {
            AAE_ms: m.aae,
            MAE_ms: m.mae,
            sigma_ms: m.sigma,
            skew: m.skew,
            kurtosis: m.kurtosis,
            AR_ms: m.rates,
            AAE_beats: b.aae,
            MAE_beats: b.mae,
            AR_beats: b.rates,
            piece_wise_AR: piece_wise,
            total_AR: total,
            mean_feature_latency_ms: latency.map(|l| l.0),
            mean_align_latency_ms: latency.map(|l| l.1),
            excluded_count: m.excluded,
            beat_count: counts.beats,
            aligned_count: counts.aligned,
        })
    }

    pub fn counts(&self) -> PieceCounts {
        PieceCounts {
            beats: self.beat_count,
            aligned: self.aligned_count,
        }
    }

    pub fn ar_ms(&self, theta: f64) -> Option<f64> {
        self.AR_ms.iter().find(|r| r.theta == theta).map(|r| r.ar)
    }
}

/// Errors of both domains for one piece.
pub struct PieceErrors {
    pub ms: Vec<ErrorRecord>,
    pub beats: Vec<ErrorRecord>,
}

/// Beat-domain errors by transfer plus ms-domain errors in `ms_mode`.
pub fn evaluate(
    path: &WarpingPath,
    annotations: &BeatAnnotations,
    ref_grid: &BeatGrid,
    clock: &FrameClock,
    ms_mode: ErrorMode,
) -> Result<PieceErrors> {
    if ms_mode.domain() != Domain::Ms {
        return Err(Error::config(format!("{ms_mode} does not yield millisecond errors")));
    }
    if annotations.is_empty() {
        return Ok(PieceErrors {
            ms: Vec::new(),
            beats: Vec::new(),
        });
    }
    Ok(PieceErrors {
        ms: compute_errors(path, annotations, ref_grid, clock, ms_mode)?,
        beats: compute_errors(path, annotations, ref_grid, clock, ErrorMode::Transfer)?,
    })
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub pieces: usize,
    pub piece_wise_AR: Option<f64>,
    pub total_AR: Option<f64>,
    pub beat_count: usize,
    pub aligned_count: usize,
}

pub fn aggregate_reports(reports: &[EvalReport]) -> Result<AggregateReport> {
    let counts: Vec<PieceCounts> = reports.iter().map(EvalReport::counts).collect();
    let (piece_wise, total) = aggregate(&counts)?;
    Ok(AggregateReport {
        pieces: reports.len(),
        piece_wise_AR: piece_wise,
        total_AR: total,
        beat_count: counts.iter().map(|c| c.beats).sum(),
        aligned_count: counts.iter().map(|c| c.aligned).sum(),
    })
}
