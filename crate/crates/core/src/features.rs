//! Frame-synchronous audio features: chroma, mel, MFCC and log-spectral
//! energy (LSE).
//!
//! Every feature starts from the magnitude spectrum of a Hann-windowed
//! frame. Framing is causal: frame `k` is the `fft_size` samples ending at
//! sample `(k + 1) * hop`, with zeros before the start of the signal, so one
//! vector is produced per hop and nothing depends on future audio.
//!
//! The same [`Processor`] serves the offline reference pass and the online
//! performance pass; feeding identical samples in any chunking yields
//! bitwise-identical features.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::StreamSource;
use crate::types::{FeatureMatrix, FrameClock};

/// Lowest analysed frequency (A0).
pub const F_MIN: f64 = 27.5;
/// Highest analysed frequency.
pub const F_MAX: f64 = 8000.0;
/// Total-energy threshold below which a frame counts as silence.
pub const SILENCE_EPS: f64 = 1e-8;
/// Floor added before taking the log of mel energies.
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Chroma,
    Mel,
    Mfcc,
    Lse,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Chroma,
        FeatureKind::Mel,
        FeatureKind::Mfcc,
        FeatureKind::Lse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Chroma => "chroma",
            FeatureKind::Mel => "mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Lse => "lse",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chroma" => Ok(FeatureKind::Chroma),
            "mel" => Ok(FeatureKind::Mel),
            "mfcc" => Ok(FeatureKind::Mfcc),
            "lse" => Ok(FeatureKind::Lse),
            "cqt" => Err(Error::config("CQT features are not supported")),
            other => Err(Error::config(format!("unknown feature kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub fft_size: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub lse_bins: usize,
    /// Gain `g` in the LSE compression `ln(1 + g * E)`.
    pub lse_gain: f64,
    pub clock: FrameClock,
}

impl FeatureConfig {
    /// Defaults for `kind`. LSE uses a 2048-sample window (about 46 ms at
    /// 44.1 kHz); the pitch-oriented features use 4096.
    pub fn new(kind: FeatureKind, clock: FrameClock) -> Self {
        FeatureConfig {
            kind,
            fft_size: if kind == FeatureKind::Lse { 2048 } else { 4096 },
            n_mels: 64,
            n_mfcc: 13,
            lse_bins: 84,
            lse_gain: 1000.0,
            clock,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            FeatureKind::Chroma => 12,
            FeatureKind::Mel => self.n_mels,
            FeatureKind::Mfcc => self.n_mfcc,
            FeatureKind::Lse => self.lse_bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.fft_size < self.clock.hop() {
            return Err(Error::config(format!(
                "fft_size {} is shorter than the hop {}",
                self.fft_size,
                self.clock.hop()
            )));
        }
        if F_MAX >= self.clock.sample_rate() as f64 / 2.0 {
            return Err(Error::config(format!(
                "sample rate {} too low for an {F_MAX} Hz band limit",
                self.clock.sample_rate()
            )));
        }
        if self.n_mels == 0 || self.lse_bins == 0 || self.n_mfcc == 0 {
            return Err(Error::config("feature dimensions must be positive"));
        }
        if self.kind == FeatureKind::Mfcc && self.n_mfcc >= self.n_mels {
            return Err(Error::config(format!(
                "n_mfcc {} must be below n_mels {}",
                self.n_mfcc, self.n_mels
            )));
        }
        if !(self.lse_gain > 0.0 && self.lse_gain.is_finite()) {
            return Err(Error::config("lse_gain must be positive"));
        }
        Ok(())
    }
}

/// Hann-windowed magnitude spectrum with reusable FFT buffers.
///
/// Magnitudes are divided by the window sum, so a DC level `c` shows up as
/// `c` in bin 0 and a bin-centred sinusoid of amplitude `a` as `a / 2`.
pub struct Stft {
    fft_size: usize,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    scale: f64,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    mag: Vec<f64>,
}

impl Stft {
    pub fn new(fft_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        // periodic Hann
        let window: Vec<f64> = (0..fft_size)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / fft_size as f64).cos())
            .collect();
        let scale = 1.0 / window.iter().sum::<f64>();
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Stft {
            fft_size,
            fft,
            window,
            scale,
            buf: vec![Complex::default(); fft_size],
            scratch,
            mag: vec![0.0; fft_size / 2 + 1],
        }
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Magnitudes of bins `0..=fft_size/2`.
    pub fn magnitude(&mut self, samples: &[f32]) -> Result<&[f64]> {
        if samples.len() != self.fft_size {
            return Err(Error::input(format!(
                "expected {} samples, got {}",
                self.fft_size,
                samples.len()
            )));
        }
        for ((b, &s), &w) in self.buf.iter_mut().zip(samples).zip(&self.window) {
            *b = Complex::new(s as f64 * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (m, b) in self.mag.iter_mut().zip(&self.buf) {
            *m = b.norm() * self.scale;
        }
        Ok(&self.mag)
    }
}

/// One-shot convenience around [`Stft::magnitude`].
pub fn stft_magnitude(samples: &[f32]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::input("empty analysis window"));
    }
    Ok(Stft::new(samples.len()).magnitude(samples)?.to_vec())
}

fn bin_freq(bin: usize, fft_size: usize, sample_rate: f64) -> f64 {
    bin as f64 * sample_rate / fft_size as f64
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// A triangular filter stored as its first bin and weights.
#[derive(Debug, Clone)]
struct Filter {
    start: usize,
    weights: Vec<f64>,
}

/// Precomputed per-kind lookup tables. Pure: no state between frames.
#[derive(Debug, Clone)]
pub struct Extractor {
    config: FeatureConfig,
    /// Pitch class of each spectrum bin inside the analysed band.
    chroma_class: Vec<Option<u8>>,
    mel: Vec<Filter>,
    /// Row-major `n_mfcc x n_mels` DCT-II basis for coefficients 1..=n_mfcc.
    dct: Vec<f64>,
    /// LSE band of each spectrum bin inside the analysed band.
    lse_band: Vec<Option<u16>>,
}

impl Extractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        config.validate()?;
        let n_bins = config.fft_size / 2 + 1;
        let sr = config.clock.sample_rate() as f64;
        let in_band = |k: usize| {
            let f = bin_freq(k, config.fft_size, sr);
            (F_MIN..=F_MAX).contains(&f).then_some(f)
        };

        let chroma_class = (0..n_bins)
            .map(|k| {
                in_band(k).map(|f| {
                    let midi = (69.0 + 12.0 * (f / 440.0).log2()).round() as i64;
                    midi.rem_euclid(12) as u8
                })
            })
            .collect();

        let lse_span = (F_MAX / F_MIN).ln();
        let lse_band = (0..n_bins)
            .map(|k| {
                in_band(k).map(|f| {
                    let b = (config.lse_bins as f64 * (f / F_MIN).ln() / lse_span).floor() as usize;
                    b.min(config.lse_bins - 1) as u16
                })
            })
            .collect();

        let mel = mel_triangles(config.n_mels, config.fft_size, sr)
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let area: f64 = f.weights.iter().sum();
                if area <= 0.0 {
                    return Err(Error::config(format!(
                        "mel filter {i} covers no FFT bins at fft_size {}",
                        config.fft_size
                    )));
                }
                Ok(Filter {
                    start: f.start,
                    weights: f.weights.iter().map(|w| w / area).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let m = config.n_mels as f64;
        let mut dct = Vec::with_capacity(config.n_mfcc * config.n_mels);
        for k in 1..=config.n_mfcc {
            for j in 0..config.n_mels {
                dct.push((2.0 / m).sqrt() * (PI * k as f64 * (j as f64 + 0.5) / m).cos());
            }
        }

        Ok(Extractor {
            config,
            chroma_class,
            mel,
            dct,
            lse_band,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    fn check(&self, mag: &[f64]) -> Result<()> {
        let want = self.config.fft_size / 2 + 1;
        if mag.len() != want {
            return Err(Error::input(format!(
                "spectrum has {} bins, expected {want}",
                mag.len()
            )));
        }
        Ok(())
    }

    /// Per pitch class spectral energy (no normalisation).
    pub fn chroma_energy(&self, mag: &[f64]) -> Result<[f64; 12]> {
        self.check(mag)?;
        let mut out = [0.0; 12];
        for (m, c) in mag.iter().zip(&self.chroma_class) {
            if let Some(c) = c {
                out[*c as usize] += m * m;
            }
        }
        Ok(out)
    }

    /// L2-normalised chroma, index 0 = C. Zero vector on silence.
    pub fn chroma_frame(&self, mag: &[f64]) -> Result<Vec<f64>> {
        let e = self.chroma_energy(mag)?;
        let total: f64 = e.iter().sum();
        if total < SILENCE_EPS {
            return Ok(vec![0.0; 12]);
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(e.iter().map(|x| x / norm).collect())
    }

    /// Mel filterbank energies (each filter has unit weight sum).
    pub fn mel_frame(&self, mag: &[f64]) -> Result<Vec<f64>> {
        self.check(mag)?;
        let out: Vec<f64> = self
            .mel
            .iter()
            .map(|f| {
                f.weights
                    .iter()
                    .zip(&mag[f.start..])
                    .map(|(w, m)| w * m * m)
                    .sum()
            })
            .collect();
        if out.iter().sum::<f64>() < SILENCE_EPS {
            return Ok(vec![0.0; out.len()]);
        }
        Ok(out)
    }

    pub fn mfcc_frame(&self, mag: &[f64]) -> Result<Vec<f64>> {
        let mel = self.mel_frame(mag)?;
        if mel.iter().all(|&x| x == 0.0) {
            return Ok(vec![0.0; self.config.n_mfcc]);
        }
        let log_mel: Vec<f64> = mel.iter().map(|x| (x + LOG_FLOOR).ln()).collect();
        Ok(self.mfcc_from_log_mel(&log_mel))
    }

    /// DCT-II (orthonormal) of a log-mel vector, coefficients 1..=n_mfcc.
    pub fn mfcc_from_log_mel(&self, log_mel: &[f64]) -> Vec<f64> {
        self.dct
            .chunks_exact(self.config.n_mels)
            .map(|row| row.iter().zip(log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `ln(1 + g * E)` of each log-spaced band; zero on silence.
    pub fn lse_compressed(&self, mag: &[f64]) -> Result<Vec<f64>> {
        self.check(mag)?;
        let mut bands = vec![0.0; self.config.lse_bins];
        for (m, b) in mag.iter().zip(&self.lse_band) {
            if let Some(b) = b {
                bands[*b as usize] += m * m;
            }
        }
        if bands.iter().sum::<f64>() < SILENCE_EPS {
            bands.iter_mut().for_each(|b| *b = 0.0);
            return Ok(bands);
        }
        let g = self.config.lse_gain;
        Ok(bands.iter().map(|e| (g * e).ln_1p()).collect())
    }

    /// Half-wave rectified difference of compressed band energies.
    pub fn lse_frame(&self, mag: &[f64], prev_mag: &[f64]) -> Result<Vec<f64>> {
        let cur = self.lse_compressed(mag)?;
        let prev = self.lse_compressed(prev_mag)?;
        Ok(rectified_diff(&cur, &prev))
    }

    /// Band index of each bin (None outside the analysed band).
    pub fn lse_band_map(&self) -> &[Option<u16>] {
        &self.lse_band
    }
}

fn rectified_diff(cur: &[f64], prev: &[f64]) -> Vec<f64> {
    cur.iter().zip(prev).map(|(c, p)| (c - p).max(0.0)).collect()
}

/// Raw (peak 1) triangular mel filters between [`F_MIN`] and [`F_MAX`].
fn mel_triangles(n_mels: usize, fft_size: usize, sample_rate: f64) -> Vec<Filter> {
    let (lo, hi) = (hz_to_mel(F_MIN), hz_to_mel(F_MAX));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = fft_size / 2 + 1;
    (0..n_mels)
        .map(|i| {
            let (l, c, r) = (edges[i], edges[i + 1], edges[i + 2]);
            let mut start = None;
            let mut weights = Vec::new();
            for k in 0..n_bins {
                let f = bin_freq(k, fft_size, sample_rate);
                let w = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                if w > 0.0 {
                    start.get_or_insert(k);
                }
                if start.is_some() {
                    if f >= r {
                        break;
                    }
                    weights.push(w);
                }
            }
            Filter {
                start: start.unwrap_or(0),
                weights,
            }
        })
        .collect()
}

/// Stateful frame-by-frame feature extraction.
pub struct Processor {
    extractor: Extractor,
    stft: Stft,
    source: StreamSource,
    prev_lse: Vec<f64>,
}

impl Processor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let extractor = Extractor::new(config)?;
        let cfg = extractor.config();
        let stft = Stft::new(cfg.fft_size);
        let source = StreamSource::primed(cfg.fft_size, cfg.clock.hop());
        let prev_lse = vec![0.0; cfg.lse_bins];
        Ok(Processor {
            extractor,
            stft,
            source,
            prev_lse,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        self.extractor.config()
    }

    pub fn extractor(&self) -> &Extractor {
        &self.extractor
    }

    pub fn dim(&self) -> usize {
        self.config().dim()
    }

    /// Forget all carried state (buffered samples and the previous LSE frame).
    pub fn reset(&mut self) {
        let cfg = self.extractor.config();
        self.source = StreamSource::primed(cfg.fft_size, cfg.clock.hop());
        self.prev_lse.iter_mut().for_each(|x| *x = 0.0);
    }

    /// A re-blocker matching this processor's framing, for callers that want
    /// to time window extraction separately.
    pub fn new_source(&self) -> StreamSource {
        let cfg = self.extractor.config();
        StreamSource::primed(cfg.fft_size, cfg.clock.hop())
    }

    /// Feature vector of one full analysis window (`fft_size` samples).
    pub fn process_window(&mut self, window: &[f32]) -> Result<Vec<f64>> {
        let Processor {
            extractor,
            stft,
            prev_lse,
            ..
        } = self;
        let mag = stft.magnitude(window)?;
        match extractor.config().kind {
            FeatureKind::Chroma => extractor.chroma_frame(mag),
            FeatureKind::Mel => extractor.mel_frame(mag),
            FeatureKind::Mfcc => extractor.mfcc_frame(mag),
            FeatureKind::Lse => {
                let cur = extractor.lse_compressed(mag)?;
                let out = rectified_diff(&cur, prev_lse);
                *prev_lse = cur;
                Ok(out)
            }
        }
    }

    /// Online path: append samples, return the features of completed frames.
    pub fn push(&mut self, chunk: &[f32]) -> Result<Vec<Vec<f64>>> {
        let mut windows = Vec::new();
        self.source.push_with(chunk, |w| windows.push(w.to_vec()));
        windows.iter().map(|w| self.process_window(w)).collect()
    }

    /// Offline path over a whole signal. Starts from a fresh state.
    pub fn process(&mut self, samples: &[f32]) -> Result<FeatureMatrix> {
        self.reset();
        let mut m = FeatureMatrix::new(self.dim(), self.config().clock);
        for f in self.push(samples)? {
            m.push(&f)?;
        }
        Ok(m)
    }
}

/// Offline extraction of `samples` recorded at `sample_rate`.
pub fn extract(samples: &[f32], sample_rate: u32, config: &FeatureConfig) -> Result<FeatureMatrix> {
    if sample_rate != config.clock.sample_rate() {
        return Err(Error::config(format!(
            "audio is at {sample_rate} Hz but features expect {} Hz",
            config.clock.sample_rate()
        )));
    }
    Processor::new(config.clone())?.process(samples)
}
