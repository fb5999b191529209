//! Shared domain types: the frame clock, feature matrices, warping paths and
//! beat grids, together with the time/frame/beat conversions every other
//! module relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when flooring `t * frame_rate`, so that a time produced by
/// [`FrameClock::frame_to_time`] maps back to the same frame.
const FLOOR_EPS: f64 = 1e-9;

/// Sample rate / frame rate pair. The hop size is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameClock {
    sample_rate: u32,
    frame_rate: f64,
}

impl Default for FrameClock {
    fn default() -> Self {
        FrameClock {
            sample_rate: 44_100,
            frame_rate: 30.0,
        }
    }
}

impl FrameClock {
    /// The frame rate must divide the sample rate into a whole number of
    /// samples per hop.
    pub fn new(sample_rate: u32, frame_rate: f64) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::config(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        let hop = sample_rate as f64 / frame_rate;
        if (hop - hop.round()).abs() > 1e-9 || hop.round() < 1.0 {
            return Err(Error::config(format!(
                "frame rate {frame_rate} does not give an integral hop at {sample_rate} Hz"
            )));
        }
        Ok(FrameClock {
            sample_rate,
            frame_rate,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Samples per frame.
    pub fn hop(&self) -> usize {
        (self.sample_rate as f64 / self.frame_rate).round() as usize
    }

    /// Frame period in milliseconds.
    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.frame_rate
    }

    pub fn frame_to_time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    /// `floor(t * frame_rate)`.
    pub fn time_to_frame(&self, t: f64) -> Result<usize> {
        time_to_frame(t, self)
    }
}

/// `floor(t * frame_rate)`; negative or non-finite times are rejected.
pub fn time_to_frame(t: f64, clock: &FrameClock) -> Result<usize> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::input(format!(
            "time must be finite and non-negative, got {t}"
        )));
    }
    Ok((t * clock.frame_rate + FLOOR_EPS).floor() as usize)
}

/// Time-major sequence of equal-length feature vectors, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
    clock: FrameClock,
}

impl FeatureMatrix {
    pub fn new(dim: usize, clock: FrameClock) -> Self {
        FeatureMatrix {
            data: Vec::new(),
            dim,
            clock,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize, clock: FrameClock) -> Result<Self> {
        let mut m = FeatureMatrix::new(dim, clock);
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.dim {
            return Err(Error::input(format!(
                "feature vector has length {}, expected {}",
                frame.len(),
                self.dim
            )));
        }
        if let Some(bad) = frame.iter().find(|x| !x.is_finite()) {
            return Err(Error::input(format!("non-finite feature value {bad}")));
        }
        self.data.extend_from_slice(frame);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clock(&self) -> FrameClock {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Keep only the first `n` frames.
    pub fn truncate(&mut self, n: usize) {
        self.data.truncate(n * self.dim);
    }
}

/// Ordered `(reference frame, performance frame)` pairs in emission order.
///
/// Performance indices never decrease. Reference indices may repeat, skip,
/// or (for followers that revise their estimate) go backwards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpingPath {
    pairs: Vec<(usize, usize)>,
}

impl WarpingPath {
    pub fn new() -> Self {
        WarpingPath { pairs: Vec::new() }
    }

    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(w) = pairs.windows(2).find(|w| w[1].1 < w[0].1) {
            return Err(Error::input(format!(
                "performance index decreases from {} to {}",
                w[0].1, w[1].1
            )));
        }
        Ok(WarpingPath { pairs })
    }

    pub fn push(&mut self, u: usize, v: usize) -> Result<()> {
        if let Some(&(_, last_v)) = self.pairs.last() {
            if v < last_v {
                return Err(Error::input(format!(
                    "performance index {v} after {last_v}"
                )));
            }
        }
        self.pairs.push((u, v));
        Ok(())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn last(&self) -> Option<(usize, usize)> {
        self.pairs.last().copied()
    }

    pub fn is_reference_monotone(&self) -> bool {
        self.pairs.windows(2).all(|w| w[0].0 <= w[1].0)
    }
}

/// Beat index to time mapping on one time axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    entries: Vec<(usize, f64)>,
}

/// Ground-truth beat times on the performance axis. Same shape as a grid.
pub type BeatAnnotations = BeatGrid;

impl BeatGrid {
    /// Beat indices and times must both be strictly increasing.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if let Some((_, t)) = entries.iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::input(format!("non-finite beat time {t}")));
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::input(format!(
                    "beat entries not strictly increasing: ({}, {}) then ({}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(BeatGrid { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fractional beat position at time `t`.
    pub fn interp_beat(&self, t: f64) -> Result<f64> {
        interp_beat(self, t)
    }

    /// Inverse of [`interp_beat`]: time at a fractional beat position.
    pub fn time_of_beat(&self, beat: f64) -> Result<f64> {
        self.require_segment()?;
        let e = &self.entries;
        let i = segment_index(e.len(), |i| e[i].0 as f64 <= beat);
        let (b0, t0) = (e[i].0 as f64, e[i].1);
        let (b1, t1) = (e[i + 1].0 as f64, e[i + 1].1);
        Ok(t0 + (beat - b0) * (t1 - t0) / (b1 - b0))
    }

    fn require_segment(&self) -> Result<()> {
        if self.entries.len() < 2 {
            return Err(Error::input(format!(
                "beat grid needs at least 2 entries, has {}",
                self.entries.len()
            )));
        }
        Ok(())
    }
}

/// Index of the segment `[i, i+1]` to interpolate on: the last knot for which
/// `at_or_before` holds, clamped so outside points use the nearest segment.
fn segment_index(n: usize, at_or_before: impl Fn(usize) -> bool) -> usize {
    let mut lo = 0;
    let mut hi = n;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if at_or_before(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo.saturating_sub(1).min(n - 2)
}

/// Piecewise-linear beat position at time `t`, extrapolated linearly with the
/// slope of the nearest segment outside the grid range.
pub fn interp_beat(grid: &BeatGrid, t: f64) -> Result<f64> {
    grid.require_segment()?;
    if !t.is_finite() {
        return Err(Error::input(format!("non-finite time {t}")));
    }
    let e = &grid.entries;
    let i = segment_index(e.len(), |i| e[i].1 <= t);
    let (b0, t0) = (e[i].0 as f64, e[i].1);
    let (b1, t1) = (e[i + 1].0 as f64, e[i + 1].1);
    Ok(b0 + (t - t0) * (b1 - b0) / (t1 - t0))
}
