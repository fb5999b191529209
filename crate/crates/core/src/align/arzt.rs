//! Windowed on-line time warping with backward revision.
//!
//! Each performance frame adds one accumulated-cost column over a reference
//! window that starts `backtrack` frames behind the current pointer. The new
//! pointer is the cheapest cell of that column, so it can move back when
//! recent frames contradict an earlier forward decision.

use std::sync::Arc;

use super::cost::{distance, norm, CostMetric, RefCost};
use super::{check_frame, check_reference, is_uninformative, Follower, FollowerConfig};
use crate::error::Result;
use crate::types::{FeatureMatrix, WarpingPath};

pub struct OltwArzt {
    reference: Arc<FeatureMatrix>,
    cost: RefCost,
    window: usize,
    backtrack: usize,
    prev: Vec<f64>,
    prev_lo: usize,
    cur: Vec<f64>,
    /// informative frames consumed
    rows: usize,
    pos: usize,
    finished: bool,
    steps: usize,
    path: WarpingPath,
}

impl OltwArzt {
    pub fn new(reference: Arc<FeatureMatrix>, cfg: &FollowerConfig) -> Result<Self> {
        cfg.validate()?;
        check_reference(&reference)?;
        Ok(OltwArzt {
            cost: RefCost::new(&reference, cfg.metric),
            reference,
            window: cfg.window_size,
            backtrack: cfg.backtrack,
            prev: Vec::with_capacity(cfg.window_size),
            prev_lo: 0,
            cur: Vec::with_capacity(cfg.window_size),
            rows: 0,
            pos: 0,
            finished: false,
            steps: 0,
            path: WarpingPath::new(),
        })
    }

    fn prev_at(&self, u: usize) -> f64 {
        u.checked_sub(self.prev_lo)
            .and_then(|i| self.prev.get(i))
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    fn add_column(&mut self, frame: &[f64], frame_norm: f64) {
        let n = self.reference.len();
        let lo = if self.rows == 0 {
            0
        } else {
            self.pos.saturating_sub(self.backtrack)
        };
        let hi = (lo + self.window).min(n);
        self.cur.clear();
        for u in lo..hi {
            let d = distance(
                frame,
                frame_norm,
                self.reference.row(u),
                self.cost.ref_norm(u),
                self.cost.metric(),
            );
            let left = self.cur.last().copied().unwrap_or(f64::INFINITY);
            let acc = if self.rows == 0 {
                if u == 0 {
                    d
                } else {
                    left + d
                }
            } else {
                let diag = if u > 0 { self.prev_at(u - 1) } else { f64::INFINITY };
                (diag + 2.0 * d).min(self.prev_at(u) + d).min(left + d)
            };
            self.cur.push(acc);
        }

        // Cosine costs vanish on a match, so raw accumulated cost ranks cells
        // without favouring longer paths; L1/L2 need length normalization.
        let m = self.rows;
        let normalize = self.cost.metric() != CostMetric::Cosine;
        let target = self.pos + 1;
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (i, &acc) in self.cur.iter().enumerate() {
            let u = lo + i;
            let score = if normalize { acc / (u + m + 1) as f64 } else { acc };
            let key = (score, u.abs_diff(target), u);
            if key.0 < best.0 || (key.0 == best.0 && (key.1, key.2) < (best.1, best.2)) {
                best = key;
            }
        }
        if best.2 != usize::MAX {
            self.pos = best.2;
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
        self.prev_lo = lo;
        self.rows += 1;
        self.finished = self.pos + 1 >= n;
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

impl Follower for OltwArzt {
    fn step(&mut self, frame: &[f64]) -> Result<usize> {
        check_frame(&self.reference, frame)?;
        let v = self.steps;
        self.steps += 1;
        let frame_norm = norm(frame);
        if !is_uninformative(self.cost.metric(), frame_norm) {
            self.add_column(frame, frame_norm);
        }
        self.path.push(self.pos, v)?;
        Ok(self.pos)
    }

    fn path(&self) -> &WarpingPath {
        &self.path
    }

    fn is_finished(&self) -> bool {
        self.finished
    }

    fn steps(&self) -> usize {
        self.steps
    }
}
