use log::warn;

use super::{ScoreDocument, TimeSignature};
use crate::error::{Error, Result};
use crate::types::BeatGrid;

/// Beats per measure and beat length in quarter notes for a signature.
///
/// 6/8, 9/8 and 12/8 count dotted quarters (2, 3 and 4 beats); simple
/// meters count denominator units. Anything else falls back to denominator
/// units with a warning.
pub fn beats_per_measure(ts: &TimeSignature) -> (usize, f64) {
    let unit = 4.0 / ts.denominator as f64;
    match (ts.numerator, ts.denominator) {
        (6 | 9 | 12, 8) => (ts.numerator as usize / 3, 1.5),
        (1..=4, _) => (ts.numerator as usize, unit),
        (n, d) => {
            warn!("unsupported time signature {n}/{d}; counting one beat per 1/{d}");
            (n as usize, unit)
        }
    }
}

/// Quarter-note positions of every annotated beat, whole measures from beat
/// 0 until the measure containing the end of the last note.
pub fn beat_positions(score: &ScoreDocument) -> Vec<f64> {
    let end = score.end();
    let sigs = &score.time_signatures;
    let mut out = Vec::new();
    for (i, ts) in sigs.iter().enumerate() {
        let region_end = sigs.get(i + 1).map_or(f64::INFINITY, |n| n.start);
        let measure = ts.numerator as f64 * 4.0 / ts.denominator as f64;
        let (count, len) = beats_per_measure(ts);
        let mut m = 0usize;
        loop {
            let start = ts.start + m as f64 * measure;
            if start >= region_end || start >= end {
                break;
            }
            for b in 0..count {
                let q = start + b as f64 * len;
                if q < region_end {
                    out.push(q);
                }
            }
            m += 1;
        }
    }
    out
}

/// Reference-axis beat grid at a constant quarter-note tempo.
pub fn beat_grid(score: &ScoreDocument, bpm: f64) -> Result<BeatGrid> {
    if !(bpm.is_finite() && bpm > 0.0) {
        return Err(Error::input(format!("tempo {bpm} must be positive")));
    }
    score.validate()?;
    let spb = 60.0 / bpm;
    BeatGrid::new(
        beat_positions(score)
            .into_iter()
            .enumerate()
            .map(|(i, q)| (i, q * spb))
            .collect(),
    )
}
