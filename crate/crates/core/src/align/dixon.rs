//! On-line time warping with a bounded square band.
//!
//! The accumulated-cost matrix is indexed by performance row `t` and
//! reference column `j`. Rows and columns are only computed over the last
//! `window_size` entries of the other axis, so storage is a fixed
//! `window_size`² ring regardless of input length.
//!
//! The reported position is the cheapest normalized cell of the newest row,
//! held non-decreasing; the frontier column itself runs slightly ahead.

use std::sync::Arc;

use super::cost::{distance, norm, RefCost};
use super::{check_frame, check_reference, is_uninformative, Follower, FollowerConfig};
use crate::error::Result;
use crate::types::{FeatureMatrix, WarpingPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Inc {
    /// next performance frame
    Row,
    /// next reference frame
    Column,
    Both,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    t: u32,
    j: u32,
    acc: f64,
}

const EMPTY: Cell = Cell {
    t: u32::MAX,
    j: u32::MAX,
    acc: f64::INFINITY,
};

pub struct OltwDixon {
    reference: Arc<FeatureMatrix>,
    cost: RefCost,
    c: usize,
    max_run: usize,
    cells: Vec<Cell>,
    perf: Vec<f64>,
    perf_norm: Vec<f64>,
    /// rows consumed so far (informative performance frames)
    rows: usize,
    t: usize,
    j: usize,
    pending: Inc,
    /// reported reference position
    est: usize,
    previous: Option<Inc>,
    run_count: usize,
    finished: bool,
    steps: usize,
    path: WarpingPath,
}

impl OltwDixon {
    pub fn new(reference: Arc<FeatureMatrix>, cfg: &FollowerConfig) -> Result<Self> {
        cfg.validate()?;
        check_reference(&reference)?;
        let c = cfg.window_size;
        let dim = reference.dim();
        Ok(OltwDixon {
            cost: RefCost::new(&reference, cfg.metric),
            reference,
            c,
            max_run: cfg.max_run_count,
            cells: vec![EMPTY; c * c],
            perf: vec![0.0; c * dim],
            perf_norm: vec![0.0; c],
            rows: 0,
            t: 0,
            j: 0,
            pending: Inc::Both,
            est: 0,
            previous: None,
            run_count: 0,
            finished: false,
            steps: 0,
            path: WarpingPath::new(),
        })
    }

    fn slot(&self, t: usize, j: usize) -> usize {
        (t % self.c) * self.c + j % self.c
    }

    fn get(&self, t: usize, j: usize) -> f64 {
        let cell = &self.cells[self.slot(t, j)];
        if cell.t as usize == t && cell.j as usize == j {
            cell.acc
        } else {
            f64::INFINITY
        }
    }

    fn compute(&mut self, t: usize, j: usize) {
        let dim = self.reference.dim();
        let r = (t % self.c) * dim;
        let d = distance(
            &self.perf[r..r + dim],
            self.perf_norm[t % self.c],
            self.reference.row(j),
            self.cost.ref_norm(j),
            self.cost.metric(),
        );
        let acc = if t == 0 && j == 0 {
            d
        } else {
            let mut best = f64::INFINITY;
            if t > 0 && j > 0 {
                best = best.min(self.get(t - 1, j - 1) + 2.0 * d);
            }
            if j > 0 {
                best = best.min(self.get(t, j - 1) + d);
            }
            if t > 0 {
                best = best.min(self.get(t - 1, j) + d);
            }
            best
        };
        let slot = self.slot(t, j);
        self.cells[slot] = Cell {
            t: t as u32,
            j: j as u32,
            acc,
        };
    }

    fn lo(&self, x: usize) -> usize {
        (x + 1).saturating_sub(self.c)
    }

    fn add_column(&mut self) {
        self.j += 1;
        for t in self.lo(self.t)..=self.t {
            self.compute(t, self.j);
        }
    }

    fn add_row(&mut self, frame: &[f64], frame_norm: f64) {
        if self.rows > 0 {
            self.t += 1;
        }
        self.rows += 1;
        let dim = self.reference.dim();
        let r = (self.t % self.c) * dim;
        self.perf[r..r + dim].copy_from_slice(frame);
        self.perf_norm[self.t % self.c] = frame_norm;
        for j in self.lo(self.j)..=self.j {
            self.compute(self.t, j);
        }
    }

    fn get_inc(&self) -> Inc {
        if self.run_count >= self.max_run {
            match self.previous {
                Some(Inc::Row) => return Inc::Column,
                Some(Inc::Column) => return Inc::Row,
                _ => {}
            }
        }
        let (t, j) = (self.t, self.j);
        let norm = |x: usize, y: usize| self.get(x, y) / (x + y + 1) as f64;
        let mut best = norm(t, j);
        let mut inc = Inc::Both;
        for x in self.lo(t)..t {
            let v = norm(x, j);
            if v < best {
                best = v;
                inc = Inc::Column;
            }
        }
        for y in self.lo(j)..j {
            let v = norm(t, y);
            if v < best {
                best = v;
                inc = Inc::Row;
            }
        }
        inc
    }

    /// Advance the reference until the next decision needs a new row.
    fn advance(&mut self) {
        loop {
            let mut inc = self.get_inc();
            if inc != Inc::Row && self.j + 1 >= self.reference.len() {
                self.finished = true;
                inc = Inc::Row;
            }
            if Some(inc) == self.previous {
                self.run_count += 1;
            } else {
                self.run_count = 1;
            }
            if inc != Inc::Both {
                self.previous = Some(inc);
            }
            if inc == Inc::Column {
                self.add_column();
            } else {
                self.pending = inc;
                return;
            }
        }
    }

    /// Cheapest normalized cell of the newest row, never behind the
    /// previous estimate.
    fn best_in_row(&self) -> usize {
        let t = self.t;
        let mut best = (f64::INFINITY, self.est);
        for y in self.lo(self.j)..=self.j {
            let v = self.get(t, y) / (t + y + 1) as f64;
            if v < best.0 {
                best = (v, y);
            }
        }
        best.1.max(self.est)
    }

    /// Frontier column of the cost band.
    pub fn frontier(&self) -> usize {
        self.j
    }

    pub fn position(&self) -> usize {
        self.est
    }
}

impl Follower for OltwDixon {
    fn step(&mut self, frame: &[f64]) -> Result<usize> {
        check_frame(&self.reference, frame)?;
        let v = self.steps;
        self.steps += 1;
        let frame_norm = norm(frame);
        if !self.finished && !is_uninformative(self.cost.metric(), frame_norm) {
            if self.rows > 0 && self.pending == Inc::Both {
                self.add_column();
            }
            self.add_row(frame, frame_norm);
            self.advance();
            self.est = self.best_in_row();
        }
        self.path.push(self.est, v)?;
        Ok(self.est)
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
