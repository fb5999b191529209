//! Deterministic additive synthesis of scores.
//!
//! Each note is a sum of harmonic partials with amplitudes halving per
//! partial. The envelope is a linear attack, a per-partial exponential decay
//! lasting the note's duration, then a linear release.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use super::ScoreDocument;
use crate::error::{Error, Result};
use crate::types::FrameClock;

pub const ATTACK_SECS: f64 = 0.010;
pub const RELEASE_SECS: f64 = 0.050;
const PEAK: f32 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Quarter notes per minute; a multiple of 20.
    pub bpm: f64,
    pub clock: FrameClock,
    pub partials: usize,
    /// Decay rate (1/s) of each partial, lowest first.
    pub decay: Vec<f64>,
}

impl RenderConfig {
    pub fn new(bpm: f64, clock: FrameClock) -> Result<Self> {
        let partials = 8;
        let cfg = RenderConfig {
            bpm,
            clock,
            partials,
            decay: (0..partials).map(|p| 0.8 + 0.6 * p as f64).collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bpm.is_finite() && self.bpm > 0.0) || self.bpm % 20.0 != 0.0 {
            return Err(Error::config(format!(
                "synthesis tempo {} must be a positive multiple of 20",
                self.bpm
            )));
        }
        if self.partials == 0 || self.decay.len() != self.partials {
            return Err(Error::config("need one decay rate per partial"));
        }
        if self.decay.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::config("decay rates must be non-negative"));
        }
        Ok(())
    }
}

/// A note placed in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoundingNote {
    pub start: f64,
    pub duration: f64,
    pub pitch: u8,
    pub velocity: u8,
}

/// Maps score positions (quarter beats) to seconds with a piecewise-constant
/// tempo: quarter `i` lasts `60 / (bpm * factors[i])` seconds. Positions past
/// the last factor keep the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct TempoCurve {
    bpm: f64,
    factors: Vec<f64>,
    /// cumulative seconds at the start of each quarter in `factors`
    starts: Vec<f64>,
}

impl TempoCurve {
    pub fn constant(bpm: f64) -> Self {
        TempoCurve::with_factors(bpm, Vec::new())
    }

    pub fn with_factors(bpm: f64, factors: Vec<f64>) -> Self {
        assert!(bpm > 0.0 && factors.iter().all(|f| *f > 0.0));
        let mut starts = Vec::with_capacity(factors.len() + 1);
        let mut t = 0.0;
        for f in &factors {
            starts.push(t);
            t += 60.0 / (bpm * f);
        }
        starts.push(t);
        TempoCurve {
            bpm,
            factors,
            starts,
        }
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    fn factor(&self, i: usize) -> f64 {
        self.factors
            .get(i)
            .or(self.factors.last())
            .copied()
            .unwrap_or(1.0)
    }

    /// Seconds at score position `q`.
    pub fn time_at(&self, q: f64) -> f64 {
        let q = q.max(0.0);
        let n = self.factors.len();
        let i = q.floor() as usize;
        if i < n {
            self.starts[i] + (q - i as f64) * 60.0 / (self.bpm * self.factors[i])
        } else {
            self.starts[n] + (q - n as f64) * 60.0 / (self.bpm * self.factor(n))
        }
    }
}

fn pitch_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

/// Unnormalised mix of `notes`. Pitches outside the piano range are skipped.
pub fn synthesize(notes: &[SoundingNote], cfg: &RenderConfig) -> Vec<f32> {
    let sr = cfg.clock.sample_rate() as f64;
    let mut notes: Vec<&SoundingNote> = notes
        .iter()
        .filter(|n| {
            let ok = (21..=108).contains(&n.pitch);
            if !ok {
                warn!("skipping note with pitch {} outside 21..=108", n.pitch);
            }
            ok
        })
        .collect();
    notes.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.pitch.cmp(&b.pitch)));

    let span = |n: &SoundingNote| -> (usize, usize) {
        let first = (n.start * sr).round() as usize;
        let len = ((ATTACK_SECS + n.duration + RELEASE_SECS) * sr).round() as usize;
        (first, len)
    };
    let total = notes
        .iter()
        .map(|n| {
            let (a, l) = span(n);
            a + l
        })
        .max()
        .unwrap_or(0);
    let mut out = vec![0.0f64; total];
    let mut voice = Vec::new();
    for n in notes {
        let (first, len) = span(n);
        render_note(n, cfg, len, &mut voice);
        for (o, v) in out[first..first + len].iter_mut().zip(&voice) {
            *o += *v;
        }
    }
    out.into_iter().map(|x| x as f32).collect()
}

/// Samples of one note into `buf` (resized to `len`).
fn render_note(n: &SoundingNote, cfg: &RenderConfig, len: usize, buf: &mut Vec<f64>) {
    let sr = cfg.clock.sample_rate() as f64;
    let f0 = pitch_hz(n.pitch);
    let gain = n.velocity as f64 / 127.0;
    let attack = (ATTACK_SECS * sr).round() as usize;
    let sustain_end = attack + (n.duration * sr).round() as usize;
    let release = (RELEASE_SECS * sr).round() as usize;

    buf.clear();
    buf.resize(len, 0.0);
    for p in 1..=cfg.partials {
        let freq = f0 * p as f64;
        if freq >= sr / 2.0 {
            break;
        }
        let amp = gain * 0.5f64.powi(p as i32 - 1);
        let decay = (-cfg.decay[p - 1] / sr).exp();
        let level_at_off = decay.powi((sustain_end - attack) as i32);
        let w = 2.0 * PI * freq / sr;
        // rotating phasor: (c, s) = (cos, sin) of w * i
        let (dc, ds) = (w.cos(), w.sin());
        let (mut c, mut s) = (1.0f64, 0.0f64);
        let mut level = 1.0;
        for (i, o) in buf.iter_mut().enumerate() {
            let env = if i < attack {
                i as f64 / attack as f64
            } else if i < sustain_end {
                let e = level;
                level *= decay;
                e
            } else {
                let r = (i - sustain_end) as f64 / release as f64;
                level_at_off * (1.0 - r).max(0.0)
            };
            *o += amp * env * s;
            let nc = c * dc - s * ds;
            s = s * dc + c * ds;
            c = nc;
        }
    }
}

pub(crate) fn peak_normalize(mut x: Vec<f32>) -> Vec<f32> {
    let peak = x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}

/// Render `score` with a tempo curve; the output is peak-normalised to 0.9.
pub fn render_with_curve(score: &ScoreDocument, curve: &TempoCurve, cfg: &RenderConfig) -> Vec<f32> {
    let notes: Vec<SoundingNote> = score
        .notes
        .iter()
        .map(|n| {
            let start = curve.time_at(n.onset);
            SoundingNote {
                start,
                duration: curve.time_at(n.onset + n.duration) - start,
                pitch: n.pitch,
                velocity: n.velocity,
            }
        })
        .collect();
    peak_normalize(synthesize(&notes, cfg))
}

/// Reference audio at the configured constant tempo.
pub fn render_reference(score: &ScoreDocument, cfg: &RenderConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    score.validate()?;
    Ok(render_with_curve(score, &TempoCurve::constant(cfg.bpm), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::stft_magnitude;
    use crate::score::{Note, TimeSignature};

    fn one_note(pitch: u8, beats: f64) -> ScoreDocument {
        ScoreDocument::new(
            vec![Note {
                onset: 0.0,
                duration: beats,
                pitch,
                velocity: 100,
            }],
            vec![TimeSignature {
                start: 0.0,
                numerator: 4,
                denominator: 4,
            }],
            vec![],
        )
        .unwrap()
    }

    fn cfg(bpm: f64) -> RenderConfig {
        RenderConfig::new(bpm, FrameClock::default()).unwrap()
    }

    #[test]
    fn empty_score_renders_nothing() {
        let mut s = one_note(60, 1.0);
        s.notes.clear();
        assert!(render_reference(&s, &cfg(120.0)).unwrap().is_empty());
    }

    #[test]
    fn a440_one_beat_at_60() {
        let x = render_reference(&one_note(69, 1.0), &cfg(60.0)).unwrap();
        // 10 ms attack + 1 s + 50 ms release
        assert_eq!(x.len(), (1.06f64 * 44_100.0).round() as usize);
        let peak = x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-6);
        let mag = stft_magnitude(&x[11_025..11_025 + 8192]).unwrap();
        let k = mag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let hz = k as f64 * 44_100.0 / 8192.0;
        assert!((hz - 440.0).abs() <= 44_100.0 / 8192.0, "peak at {hz} Hz");
    }

    #[test]
    fn synthesis_is_additive() {
        let c = cfg(120.0);
        let a = SoundingNote {
            start: 0.0,
            duration: 0.4,
            pitch: 60,
            velocity: 90,
        };
        let b = SoundingNote {
            pitch: 67,
            velocity: 70,
            ..a
        };
        let both = synthesize(&[a, b], &c);
        let sa = synthesize(&[a], &c);
        let sb = synthesize(&[b], &c);
        assert_eq!(both.len(), sa.len());
        for i in 0..both.len() {
            let sum = (sa[i] as f64 + sb[i] as f64) as f32;
            assert!((both[i] - sum).abs() <= 1e-6, "sample {i}");
        }
    }

    #[test]
    fn out_of_range_pitch_skipped() {
        let x = synthesize(
            &[SoundingNote {
                start: 0.0,
                duration: 0.1,
                pitch: 110,
                velocity: 90,
            }],
            &cfg(120.0),
        );
        assert!(x.is_empty());
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = one_note(64, 2.0);
        assert_eq!(
            render_reference(&s, &cfg(100.0)).unwrap(),
            render_reference(&s, &cfg(100.0)).unwrap()
        );
    }

    #[test]
    fn bpm_must_be_rounded() {
        assert!(RenderConfig::new(96.0, FrameClock::default()).is_err());
        assert!(RenderConfig::new(0.0, FrameClock::default()).is_err());
    }

    #[test]
    fn tempo_curve_integrates_factors() {
        let c = TempoCurve::with_factors(60.0, vec![1.0, 2.0, 0.5]);
        assert_eq!(c.time_at(0.0), 0.0);
        assert_eq!(c.time_at(1.0), 1.0);
        assert_eq!(c.time_at(2.0), 1.5);
        assert_eq!(c.time_at(2.5), 2.5);
        assert_eq!(c.time_at(3.0), 3.5);
        // past the end: last factor continues
        assert_eq!(c.time_at(4.0), 5.5);
        assert_eq!(TempoCurve::constant(120.0).time_at(3.0), 1.5);
    }
}
