use serde::{Deserialize, Serialize};

use super::ErrorRecord;
use crate::error::{Error, Result};

pub const MS_THRESHOLDS: [f64; 6] = [50.0, 100.0, 300.0, 500.0, 1000.0, 2000.0];
pub const BEAT_THRESHOLDS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub theta: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
}

/// Error statistics of one domain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub aae: Option<f64>,
    pub mae: Option<f64>,
    pub sigma: Option<f64>,
    pub skew: Option<f64>,
    pub kurtosis: Option<f64>,
    pub rates: Vec<RateEntry>,
    pub total: usize,
    pub excluded: usize,
}

impl Metrics {
    pub fn rate_at(&self, theta: f64) -> Option<f64> {
        self.rates.iter().find(|r| r.theta == theta).map(|r| r.ar)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Population skewness and excess kurtosis; `None` for zero variance.
pub fn shape(signed: &[f64]) -> (Option<f64>, Option<f64>) {
    if signed.is_empty() {
        return (None, None);
    }
    let m = mean(signed);
    let moment = |p: i32| signed.iter().map(|x| (x - m).powi(p)).sum::<f64>() / signed.len() as f64;
    let m2 = moment(2);
    if m2 <= 0.0 {
        return (None, None);
    }
    (Some(moment(3) / m2.powf(1.5)), Some(moment(4) / (m2 * m2) - 3.0))
}

/// Statistics over the records of one domain. Magnitude statistics ignore
/// excluded records; alignment rates count them in the denominator.
pub fn metrics(records: &[ErrorRecord], thresholds: &[f64]) -> Result<Metrics> {
    if let Some(w) = records.windows(2).find(|w| w[0].domain != w[1].domain) {
        return Err(Error::input(format!(
            "records mix {:?} and {:?} errors",
            w[0].domain, w[1].domain
        )));
    }
    let kept: Vec<f64> = records.iter().filter(|r| !r.excluded).map(|r| r.error).collect();
    let mut abs: Vec<f64> = kept.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mut out = Metrics {
        total: records.len(),
        excluded: records.len() - kept.len(),
        ..Default::default()
    };
    if !abs.is_empty() {
        let aae = mean(&abs);
        out.aae = Some(aae);
        out.mae = Some(median(&abs));
        out.sigma = Some((abs.iter().map(|a| (a - aae).powi(2)).sum::<f64>() / abs.len() as f64).sqrt());
        (out.skew, out.kurtosis) = shape(&kept);
    }
    if !records.is_empty() {
        out.rates = thresholds
            .iter()
            .map(|&theta| RateEntry {
                theta,
                ar: abs.iter().filter(|a| **a <= theta).count() as f64 / records.len() as f64 * 100.0,
            })
            .collect();
    }
    Ok(out)
}

/// Beat count and number of beats aligned within the widest tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceCounts {
    pub beats: usize,
    pub aligned: usize,
}

impl PieceCounts {
    pub fn from_records(records: &[ErrorRecord]) -> Self {
        PieceCounts {
            beats: records.len(),
            aligned: records
                .iter()
                .filter(|r| !r.excluded && r.error.abs() <= r.domain.exclusion_limit())
                .count(),
        }
    }
}

/// Unweighted mean of per-piece rates and the pooled rate, both in percent.
/// Pieces without beats are left out of the piece-wise mean.
pub fn aggregate(pieces: &[PieceCounts]) -> Result<(Option<f64>, Option<f64>)> {
    if pieces.is_empty() {
        return Err(Error::input("aggregate needs at least one piece"));
    }
    let rates: Vec<f64> = pieces
        .iter()
        .filter(|p| p.beats > 0)
        .map(|p| p.aligned as f64 / p.beats as f64 * 100.0)
        .collect();
    let beats: usize = pieces.iter().map(|p| p.beats).sum();
    let aligned: usize = pieces.iter().map(|p| p.aligned).sum();
    let piece_wise = (!rates.is_empty()).then(|| mean(&rates));
    let total = (beats > 0).then(|| aligned as f64 / beats as f64 * 100.0);
    Ok((piece_wise, total))
}

/// Mean feature and alignment time per frame.
pub fn latency_stats(timings: &[(f64, f64)]) -> Result<(f64, f64)> {
    if timings.is_empty() {
        return Err(Error::input("no timed frames"));
    }
    let n = timings.len() as f64;
    Ok((
        timings.iter().map(|t| t.0).sum::<f64>() / n,
        timings.iter().map(|t| t.1).sum::<f64>() / n,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Domain;
    use proptest::prelude::*;

    fn ms(errors: &[f64]) -> Vec<ErrorRecord> {
        errors
            .iter()
            .enumerate()
            .map(|(i, &e)| ErrorRecord::new(i, e, Domain::Ms))
            .collect()
    }

    #[test]
    fn symmetric_errors() {
        let m = metrics(&ms(&[100.0, -100.0]), &MS_THRESHOLDS).unwrap();
        assert_eq!(m.aae, Some(100.0));
        assert_eq!(m.mae, Some(100.0));
        assert_eq!(m.sigma, Some(0.0));
        assert_eq!(m.skew, Some(0.0));
    }

    #[test]
    fn rate_counts_within_tolerance() {
        let m = metrics(&ms(&[30.0, 120.0, 600.0]), &MS_THRESHOLDS).unwrap();
        assert!((m.rate_at(100.0).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.rate_at(1000.0), Some(100.0));
    }

    #[test]
    fn exclusion_then_mean() {
        let m = metrics(&ms(&[100.0, 2500.0, 300.0]), &MS_THRESHOLDS).unwrap();
        assert_eq!(m.aae, Some(200.0));
        assert_eq!(m.excluded, 1);
        assert!((m.rate_at(2000.0).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_excluded() {
        let m = metrics(&ms(&[f64::INFINITY, -3000.0]), &MS_THRESHOLDS).unwrap();
        assert_eq!(m.aae, None);
        assert_eq!(m.mae, None);
        assert!(m.rates.iter().all(|r| r.ar == 0.0));
    }

    #[test]
    fn no_records_no_rates() {
        let m = metrics(&[], &MS_THRESHOLDS).unwrap();
        assert!(m.rates.is_empty());
        assert_eq!(m.total, 0);
    }

    #[test]
    fn beat_domain_exclusion() {
        let r = vec![
            ErrorRecord::new(0, 0.5, Domain::Beats),
            ErrorRecord::new(1, -2.5, Domain::Beats),
        ];
        let m = metrics(&r, &BEAT_THRESHOLDS).unwrap();
        assert_eq!(m.excluded, 1);
        assert_eq!(m.rate_at(0.5), Some(50.0));
        assert!(metrics(&[r[0], ErrorRecord::new(2, 1.0, Domain::Ms)], &[]).is_err());
    }

    #[test]
    fn aggregate_weighting() {
        let (pw, total) = aggregate(&[
            PieceCounts { beats: 1, aligned: 1 },
            PieceCounts { beats: 3, aligned: 1 },
        ])
        .unwrap();
        assert!((pw.unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(total, Some(50.0));
        let one = [PieceCounts { beats: 4, aligned: 3 }];
        let (pw, total) = aggregate(&one).unwrap();
        assert_eq!(pw, total);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn latency_means() {
        assert_eq!(latency_stats(&[(1.0, 2.0); 5]).unwrap(), (1.0, 2.0));
        assert_eq!(latency_stats(&[(0.4, 0.7)]).unwrap(), (0.4, 0.7));
        assert_eq!(latency_stats(&[(1.0, 1.0), (3.0, 3.0)]).unwrap(), (2.0, 2.0));
        assert!(latency_stats(&[]).is_err());
    }

    proptest! {
        #[test]
        fn rate_is_monotone_in_theta(
            errors in prop::collection::vec(-3000.0f64..3000.0, 1..50),
            a in 0.0f64..2500.0,
            b in 0.0f64..2500.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m = metrics(&ms(&errors), &[lo, hi]).unwrap();
            prop_assert!(m.rates[0].ar <= m.rates[1].ar);
            prop_assert!(m.rates.iter().all(|r| (0.0..=100.0).contains(&r.ar)));
        }

        #[test]
        fn pooled_rate_matches_concatenation(
            a in prop::collection::vec(-3000.0f64..3000.0, 1..30),
            b in prop::collection::vec(-3000.0f64..3000.0, 1..30),
        ) {
            let (ra, rb) = (ms(&a), ms(&b));
            let (_, total) = aggregate(&[PieceCounts::from_records(&ra), PieceCounts::from_records(&rb)]).unwrap();
            let both: Vec<ErrorRecord> = ra.into_iter().chain(rb).collect();
            let m = metrics(&both, &[2000.0]).unwrap();
            prop_assert!((total.unwrap() - m.rates[0].ar).abs() < 1e-9);
        }
    }
}
