//! Symbolic scores: MIDI parsing, reference rendering and beat grids.

mod grid;
mod midi;
mod render;
pub mod synthetic;

pub use grid::{beat_grid, beat_positions, beats_per_measure};
pub use midi::{parse_midi, write_midi};
pub use render::{
    render_reference, render_with_curve, synthesize, RenderConfig, SoundingNote, TempoCurve,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Onsets and durations are in quarter-note beats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub onset: f64,
    pub duration: f64,
    pub pitch: u8,
    pub velocity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSignature {
    /// Start position in quarter-note beats.
    pub start: f64,
    pub numerator: u8,
    pub denominator: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub start: f64,
    /// Quarter notes per minute.
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDocument {
    pub notes: Vec<Note>,
    pub time_signatures: Vec<TimeSignature>,
    pub tempos: Vec<TempoEvent>,
}

impl ScoreDocument {
    /// Sorts notes by onset and time signatures by start, then validates.
    pub fn new(
        mut notes: Vec<Note>,
        mut time_signatures: Vec<TimeSignature>,
        tempos: Vec<TempoEvent>,
    ) -> Result<Self> {
        notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
        time_signatures.sort_by(|a, b| a.start.total_cmp(&b.start));
        let doc = ScoreDocument {
            notes,
            time_signatures,
            tempos,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        for n in &self.notes {
            if !(n.onset.is_finite() && n.onset >= 0.0) {
                return Err(Error::input(format!("note onset {} is negative", n.onset)));
            }
            if !(n.duration.is_finite() && n.duration > 0.0) {
                return Err(Error::input(format!(
                    "note duration {} is not positive",
                    n.duration
                )));
            }
            if n.pitch > 127 || n.velocity == 0 || n.velocity > 127 {
                return Err(Error::input(format!(
                    "note pitch {} / velocity {} out of range",
                    n.pitch, n.velocity
                )));
            }
        }
        match self.time_signatures.first() {
            Some(ts) if ts.start == 0.0 => {}
            _ => return Err(Error::input("score needs a time signature at beat 0")),
        }
        for ts in &self.time_signatures {
            if ts.numerator == 0 || !ts.denominator.is_power_of_two() {
                return Err(Error::input(format!(
                    "invalid time signature {}/{}",
                    ts.numerator, ts.denominator
                )));
            }
        }
        Ok(())
    }

    /// Position (quarter beats) where the last note ends.
    pub fn end(&self) -> f64 {
        self.notes
            .iter()
            .map(|n| n.onset + n.duration)
            .fold(0.0, f64::max)
    }
}

/// Nearest multiple of 20 BPM; exact midpoints round up.
pub fn round_tempo(avg_bpm: f64) -> Result<f64> {
    if !(avg_bpm.is_finite() && avg_bpm > 0.0) {
        return Err(Error::input(format!("average tempo {avg_bpm} must be positive")));
    }
    let r = (avg_bpm / 20.0 + 0.5).floor() * 20.0;
    Ok(r.max(20.0))
}
