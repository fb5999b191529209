use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMetric {
    #[default]
    Cosine,
    L1,
    L2,
}

impl CostMetric {
    /// Cosine for dense spectral features, L1 for sparse onset features.
    pub fn default_for(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::Lse => CostMetric::L1,
            _ => CostMetric::Cosine,
        }
    }
}

impl fmt::Display for CostMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMetric::Cosine => "cosine",
            CostMetric::L1 => "l1",
            CostMetric::L2 => "l2",
        })
    }
}

impl FromStr for CostMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(CostMetric::Cosine),
            "l1" => Ok(CostMetric::L1),
            "l2" => Ok(CostMetric::L2),
            _ => Err(Error::config(format!("unknown cost metric '{s}'"))),
        }
    }
}

pub fn local_cost(x: &[f64], y: &[f64], metric: CostMetric) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "cannot compare vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(match metric {
        CostMetric::Cosine => cosine(x, norm(x), y, norm(y)),
        _ => distance(x, 0.0, y, 0.0, metric),
    })
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn cosine(x: &[f64], nx: f64, y: &[f64], ny: f64) -> f64 {
    if nx == 0.0 || ny == 0.0 {
        return 1.0;
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (1.0 - dot / (nx * ny)).max(0.0)
}

/// Unchecked distance; norms are only read by the cosine metric.
#[inline]
pub(crate) fn distance(x: &[f64], nx: f64, y: &[f64], ny: f64, metric: CostMetric) -> f64 {
    match metric {
        CostMetric::Cosine => cosine(x, nx, y, ny),
        CostMetric::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
        CostMetric::L2 => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
    }
}

/// Reference frames with cached norms.
#[derive(Debug)]
pub(crate) struct RefCost {
    metric: CostMetric,
    norms: Vec<f64>,
}

impl RefCost {
    pub fn new(reference: &crate::types::FeatureMatrix, metric: CostMetric) -> Self {
        RefCost {
            metric,
            norms: reference.rows().map(norm).collect(),
        }
    }

    pub fn metric(&self) -> CostMetric {
        self.metric
    }

    pub fn ref_norm(&self, u: usize) -> f64 {
        self.norms[u]
    }
}
