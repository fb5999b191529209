//! Online followers: each consumes one performance feature vector per step
//! and reports its current reference-frame estimate.

mod arzt;
mod cost;
mod dixon;
mod hmm;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use arzt::OltwArzt;
pub use cost::{local_cost, CostMetric};
pub use dixon::OltwDixon;
pub use hmm::HmmFollower;

use crate::error::{Error, Result};
use crate::types::{FeatureMatrix, WarpingPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FollowerKind {
    Dixon,
    Arzt,
    Hmm,
}

impl FollowerKind {
    pub const ALL: [FollowerKind; 3] = [FollowerKind::Dixon, FollowerKind::Arzt, FollowerKind::Hmm];

    pub fn name(self) -> &'static str {
        match self {
            FollowerKind::Dixon => "dixon",
            FollowerKind::Arzt => "arzt",
            FollowerKind::Hmm => "hmm",
        }
    }
}

impl fmt::Display for FollowerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FollowerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dixon" | "oltw-dixon" => Ok(FollowerKind::Dixon),
            "arzt" | "oltw-arzt" => Ok(FollowerKind::Arzt),
            "hmm" => Ok(FollowerKind::Hmm),
            _ => Err(Error::config(format!(
                "unknown follower '{s}' (expected dixon, arzt or hmm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerConfig {
    pub metric: CostMetric,
    /// OLTW band width in frames.
    pub window_size: usize,
    pub max_run_count: usize,
    /// How far behind its pointer the Arzt variant re-examines, in frames.
    pub backtrack: usize,
    pub p_stay: f64,
    /// Decay of forward-jump weights.
    pub lambda: f64,
    pub max_jump: usize,
    /// Likelihood temperature.
    pub tau: f64,
}

impl Default for FollowerConfig {
    fn default() -> Self {
        FollowerConfig {
            metric: CostMetric::Cosine,
            window_size: 300,
            max_run_count: 3,
            backtrack: 100,
            p_stay: 0.5,
            lambda: 1.0,
            max_jump: 10,
            tau: 0.1,
        }
    }
}

impl FollowerConfig {
    pub fn with_metric(metric: CostMetric) -> Self {
        FollowerConfig {
            metric,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(Error::config("window_size must be at least 2"));
        }
        if self.max_run_count == 0 {
            return Err(Error::config("max_run_count must be positive"));
        }
        if self.backtrack >= self.window_size {
            return Err(Error::config("backtrack must be smaller than window_size"));
        }
        if !(0.0..1.0).contains(&self.p_stay) {
            return Err(Error::config("p_stay must lie in [0, 1)"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda must be non-negative"));
        }
        if self.max_jump == 0 {
            return Err(Error::config("max_jump must be positive"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config("tau must be positive"));
        }
        Ok(())
    }
}

pub trait Follower: Send {
    /// Consume the next performance frame and return the current reference
    /// frame estimate.
    fn step(&mut self, frame: &[f64]) -> Result<usize>;

    /// Every pair emitted so far, in emission order.
    fn path(&self) -> &WarpingPath;

    /// True once the estimate has reached the last reference frame.
    fn is_finished(&self) -> bool;

    fn steps(&self) -> usize;

    fn finalize(&self) -> Result<WarpingPath> {
        if self.steps() == 0 {
            return Err(Error::input("follower has not consumed any frame"));
        }
        Ok(self.path().clone())
    }
}

pub fn new_follower(
    kind: FollowerKind,
    reference: Arc<FeatureMatrix>,
    cfg: &FollowerConfig,
) -> Result<Box<dyn Follower>> {
    Ok(match kind {
        FollowerKind::Dixon => Box::new(OltwDixon::new(reference, cfg)?),
        FollowerKind::Arzt => Box::new(OltwArzt::new(reference, cfg)?),
        FollowerKind::Hmm => Box::new(HmmFollower::new(reference, cfg)?),
    })
}

fn check_reference(reference: &FeatureMatrix) -> Result<()> {
    if reference.is_empty() {
        return Err(Error::input("reference feature matrix is empty"));
    }
    Ok(())
}

fn check_frame(reference: &FeatureMatrix, frame: &[f64]) -> Result<()> {
    if frame.len() != reference.dim() {
        return Err(Error::input(format!(
            "performance frame has length {}, reference has {}",
            frame.len(),
            reference.dim()
        )));
    }
    Ok(())
}

/// Under the cosine metric an all-zero frame matches nothing; the OLTW
/// followers hold their position on such frames.
fn is_uninformative(metric: CostMetric, frame_norm: f64) -> bool {
    metric == CostMetric::Cosine && frame_norm == 0.0
}


#[cfg(test)]
pub(crate) mod fixtures {
    use crate::types::{FeatureMatrix, FrameClock};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Smoothly varying random 12-dimensional frames, distinct enough for
    /// cosine matching.
    pub fn random_walk(seed: u64, n: usize) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut m = FeatureMatrix::new(12, FrameClock::default());
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = (*v + rng.gen_range(-0.25..0.25)).clamp(0.0, 1.0);
            }
            m.push(&x).unwrap();
        }
        m
    }

    /// Resample `m` to play `rate(t)` times faster, nearest-frame.
    pub fn warp(m: &FeatureMatrix, rate: impl Fn(f64) -> f64) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(m.dim(), m.clock());
        let mut pos = 0.0;
        while (pos as usize) < m.len() {
            out.push(m.row(pos as usize)).unwrap();
            pos += rate(pos);
        }
        out
    }
}
