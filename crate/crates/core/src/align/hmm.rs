//! Left-to-right HMM with one state per reference frame.

use std::sync::Arc;

use log::debug;

use super::cost::{distance, norm, RefCost};
use super::{check_frame, check_reference, Follower, FollowerConfig};
use crate::error::Result;
use crate::types::{FeatureMatrix, WarpingPath};

pub struct HmmFollower {
    reference: Arc<FeatureMatrix>,
    cost: RefCost,
    p_stay: f64,
    /// cumulative jump weights: `cum[k]` = sum of weights for jumps 1..=k
    cum: Vec<f64>,
    tau: f64,
    belief: Vec<f64>,
    pred: Vec<f64>,
    costs: Vec<f64>,
    map: usize,
    degenerate: usize,
    steps: usize,
    path: WarpingPath,
}

impl HmmFollower {
    pub fn new(reference: Arc<FeatureMatrix>, cfg: &FollowerConfig) -> Result<Self> {
        cfg.validate()?;
        check_reference(&reference)?;
        let n = reference.len();
        let mut cum = vec![0.0];
        for d in 1..=cfg.max_jump {
            cum.push(cum[d - 1] + (-cfg.lambda * (d - 1) as f64).exp());
        }
        let mut belief = vec![0.0; n];
        belief[0] = 1.0;
        Ok(HmmFollower {
            cost: RefCost::new(&reference, cfg.metric),
            reference,
            p_stay: cfg.p_stay,
            cum,
            tau: cfg.tau,
            belief,
            pred: vec![0.0; n],
            costs: vec![0.0; n],
            map: 0,
            degenerate: 0,
            steps: 0,
            path: WarpingPath::new(),
        })
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    /// Frames whose likelihood vanished on every reachable state.
    pub fn degenerate_frames(&self) -> usize {
        self.degenerate
    }

    /// `pred = T · belief`.
    fn predict(&mut self) {
        let n = self.belief.len();
        let max_jump = self.cum.len() - 1;
        self.pred.iter_mut().for_each(|p| *p = 0.0);
        for s in 0..n {
            let b = self.belief[s];
            if b == 0.0 {
                continue;
            }
            let reach = max_jump.min(n - 1 - s);
            if reach == 0 {
                self.pred[s] += b;
                continue;
            }
            self.pred[s] += self.p_stay * b;
            let scale = (1.0 - self.p_stay) * b / self.cum[reach];
            for d in 1..=reach {
                self.pred[s + d] += scale * (self.cum[d] - self.cum[d - 1]);
            }
        }
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let sum: f64 = x.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        x.iter_mut().for_each(|v| *v /= sum);
    }
    sum
}

impl Follower for HmmFollower {
    fn step(&mut self, frame: &[f64]) -> Result<usize> {
        check_frame(&self.reference, frame)?;
        let v = self.steps;
        self.steps += 1;
        self.predict();

        let frame_norm = norm(frame);
        let mut floor = f64::INFINITY;
        for (s, c) in self.costs.iter_mut().enumerate() {
            *c = distance(
                frame,
                frame_norm,
                self.reference.row(s),
                self.cost.ref_norm(s),
                self.cost.metric(),
            );
            if self.pred[s] > 0.0 {
                floor = floor.min(*c);
            }
        }
        // likelihoods scaled by exp(floor / tau) for range; cancels on normalization
        for s in 0..self.belief.len() {
            self.belief[s] = self.pred[s] * (-(self.costs[s] - floor) / self.tau).exp();
        }
        let sum = normalize(&mut self.belief);
        if !(sum > 0.0 && sum.is_finite()) {
            debug!("frame {v}: likelihood vanished, using prediction only");
            self.degenerate += 1;
            self.belief.copy_from_slice(&self.pred);
            normalize(&mut self.belief);
        }

        let mut best = 0;
        for (s, b) in self.belief.iter().enumerate() {
            if *b > self.belief[best] {
                best = s;
            }
        }
        self.map = best;
        self.path.push(best, v)?;
        Ok(best)
    }

    fn path(&self) -> &WarpingPath {
        &self.path
    }

    fn is_finished(&self) -> bool {
        self.map + 1 >= self.belief.len()
    }

    fn steps(&self) -> usize {
        self.steps
    }
}
