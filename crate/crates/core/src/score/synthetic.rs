//! Seeded synthetic pieces and expressive performances for testing and
//! benchmarking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::peak_normalize;
use super::{beat_positions, render_with_curve, synthesize, Note, RenderConfig, ScoreDocument, SoundingNote, TempoCurve, TimeSignature};
use crate::error::Result;
use crate::types::BeatGrid;

const SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const CHORDS: [[u8; 3]; 6] = [
    [48, 52, 55], // C
    [53, 57, 60], // F
    [55, 59, 62], // G
    [57, 60, 64], // Am
    [50, 53, 57], // Dm
    [52, 55, 59], // Em
];

fn in_scale(p: u8) -> bool {
    SCALE.contains(&(p % 12))
}

/// A 4/4 piece of `measures` bars: a stepwise melody in quarters and eighths
/// over one sustained triad per bar.
pub fn generate_piece(seed: u64, measures: usize) -> ScoreDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Vec::new();
    let mut pitch: u8 = 72;
    for m in 0..measures {
        let bar = m as f64 * 4.0;
        let chord = CHORDS[if m == 0 { 0 } else { rng.gen_range(0..CHORDS.len()) }];
        for &p in &chord {
            notes.push(Note {
                onset: bar,
                duration: 4.0,
                pitch: p,
                velocity: 56,
            });
        }
        let mut q = 0.0;
        while q < 4.0 {
            let dur: f64 = if q <= 3.0 && rng.gen_bool(0.3) { 0.5 } else { 1.0 };
            let dur = dur.min(4.0 - q);
            // step or leap within the scale, staying in 65..=88
            let mut steps: i32 = rng.gen_range(-3..=3);
            if steps == 0 {
                steps = 1;
            }
            let walk = |steps: i32| {
                let mut next = pitch as i32;
                for _ in 0..steps.abs() {
                    next += steps.signum();
                    while !in_scale(next as u8) {
                        next += steps.signum();
                    }
                }
                next
            };
            let mut next = walk(steps);
            if !(65..=88).contains(&next) {
                next = walk(-steps);
            }
            pitch = next as u8;
            notes.push(Note {
                onset: bar + q,
                duration: dur,
                pitch,
                velocity: rng.gen_range(80..=110),
            });
            q += dur;
        }
    }
    ScoreDocument::new(
        notes,
        vec![TimeSignature {
            start: 0.0,
            numerator: 4,
            denominator: 4,
        }],
        vec![],
    )
    .expect("generated score is valid")
}

/// Per-quarter tempo factors following a bounded random walk in
/// `[1 - depth, 1 + depth]`.
pub fn fluctuating_curve(seed: u64, bpm: f64, quarters: usize, depth: f64) -> TempoCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let mut f: f64 = 1.0;
    let factors = (0..quarters)
        .map(|_| {
            f = (f + rng.gen_range(-0.06..=0.06)).clamp(1.0 - depth, 1.0 + depth);
            f
        })
        .collect();
    TempoCurve::with_factors(bpm, factors)
}

/// Audio and ground-truth beat times of `score` played along `curve`.
pub struct Performance {
    pub audio: Vec<f32>,
    pub annotations: BeatGrid,
}

fn annotate(score: &ScoreDocument, curve: &TempoCurve) -> Result<BeatGrid> {
    BeatGrid::new(
        beat_positions(score)
            .into_iter()
            .enumerate()
            .map(|(i, q)| (i, curve.time_at(q)))
            .collect(),
    )
}

/// Rendered with the reference instrument: only the timing differs.
pub fn perform(score: &ScoreDocument, curve: &TempoCurve, cfg: &RenderConfig) -> Result<Performance> {
    Ok(Performance {
        annotations: annotate(score, curve)?,
        audio: render_with_curve(score, curve, cfg),
    })
}

/// Deviations of a performance from the reference rendering beyond timing.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub seed: u64,
    /// Maximum change of each note's velocity, either way.
    pub velocity_jitter: u8,
    /// Maximum onset displacement of each note in seconds, either way.
    pub asynchrony: f64,
    /// Factor applied to every partial's decay rate.
    pub decay_scale: f64,
    /// Amplitude of uniform background noise relative to the signal peak.
    pub noise: f32,
}

impl Expression {
    /// A plausible human rendition on a different instrument.
    pub fn natural(seed: u64) -> Self {
        Expression {
            seed,
            velocity_jitter: 25,
            asynchrony: 0.02,
            decay_scale: 1.8,
            noise: 0.01,
        }
    }
}

pub fn perform_expressive(
    score: &ScoreDocument,
    curve: &TempoCurve,
    cfg: &RenderConfig,
    expr: &Expression,
) -> Result<Performance> {
    let mut rng = ChaCha8Rng::seed_from_u64(expr.seed);
    let j = expr.velocity_jitter as i16;
    let notes: Vec<SoundingNote> = score
        .notes
        .iter()
        .map(|n| {
            let shift = if expr.asynchrony > 0.0 {
                rng.gen_range(-expr.asynchrony..=expr.asynchrony)
            } else {
                0.0
            };
            let start = (curve.time_at(n.onset) + shift).max(0.0);
            let end = curve.time_at(n.onset + n.duration);
            SoundingNote {
                start,
                duration: (end - start).max(0.0),
                pitch: n.pitch,
                velocity: (n.velocity as i16 + rng.gen_range(-j..=j)).clamp(1, 127) as u8,
            }
        })
        .collect();
    let mut instrument = cfg.clone();
    instrument.decay.iter_mut().for_each(|d| *d *= expr.decay_scale);
    let mut audio = synthesize(&notes, &instrument);
    if expr.noise > 0.0 {
        let peak = audio.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let level = expr.noise * peak;
        audio.iter_mut().for_each(|v| *v += rng.gen_range(-level..=level));
    }
    Ok(Performance {
        annotations: annotate(score, curve)?,
        audio: peak_normalize(audio),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_seeded() {
        assert_eq!(generate_piece(7, 4), generate_piece(7, 4));
        assert_ne!(generate_piece(7, 4), generate_piece(8, 4));
    }

    #[test]
    fn generated_piece_shape() {
        let s = generate_piece(3, 5);
        assert_eq!(s.end(), 20.0);
        for n in &s.notes {
            assert!((21..=108).contains(&n.pitch));
            assert!(n.onset + n.duration <= 20.0 + 1e-12);
        }
        // melody covers every bar without gaps
        let melody: Vec<&Note> = s.notes.iter().filter(|n| n.pitch >= 65).collect();
        let total: f64 = melody.iter().map(|n| n.duration).sum();
        assert!((total - 20.0).abs() < 1e-12);
    }

    #[test]
    fn curve_stays_within_depth() {
        let c = fluctuating_curve(1, 120.0, 64, 0.2);
        for q in 0..64 {
            let d = c.time_at(q as f64 + 1.0) - c.time_at(q as f64);
            assert!((0.5 / 1.2 - 1e-12..=0.5 / 0.8 + 1e-12).contains(&d));
        }
    }

    #[test]
    fn expressive_rendition_is_seeded_and_annotated() {
        let score = generate_piece(5, 2);
        let curve = fluctuating_curve(5, 120.0, 8, 0.2);
        let cfg = RenderConfig::new(120.0, crate::types::FrameClock::default()).unwrap();
        let plain = perform(&score, &curve, &cfg).unwrap();
        let a = perform_expressive(&score, &curve, &cfg, &Expression::natural(1)).unwrap();
        let b = perform_expressive(&score, &curve, &cfg, &Expression::natural(1)).unwrap();
        let c = perform_expressive(&score, &curve, &cfg, &Expression::natural(2)).unwrap();
        assert_eq!(a.audio, b.audio);
        assert_ne!(a.audio, c.audio);
        assert_ne!(a.audio, plain.audio);
        assert_eq!(a.annotations, plain.annotations);
        let peak = a.audio.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-6);
    }

    #[test]
    fn neutral_expression_matches_plain_rendition() {
        let score = generate_piece(6, 2);
        let curve = fluctuating_curve(6, 120.0, 8, 0.2);
        let cfg = RenderConfig::new(120.0, crate::types::FrameClock::default()).unwrap();
        let neutral = Expression {
            seed: 0,
            velocity_jitter: 0,
            asynchrony: 0.0,
            decay_scale: 1.0,
            noise: 0.0,
        };
        let plain = perform(&score, &curve, &cfg).unwrap();
        assert_eq!(perform_expressive(&score, &curve, &cfg, &neutral).unwrap().audio, plain.audio);
    }
}
