//! File formats: WAV audio, MIDI scores, and the tab-separated path, beat,
//! event and error tables.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{Domain, ErrorRecord};
use crate::runtime::PositionEvent;
use crate::score::{parse_midi, ScoreDocument};
use crate::types::{BeatGrid, WarpingPath};

/// Mono samples (channels averaged) and the file's sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let inner = || -> Result<(Vec<f32>, u32)> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader.samples::<f32>().collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let mono = interleaved
            .chunks(channels)
            .map(|c| c.iter().sum::<f32>() / channels as f32)
            .collect();
        Ok((mono, spec.sample_rate))
    };
    inner().map_err(|e| e.in_file(path))
}

/// Read a WAV file and bring it to `rate` by linear interpolation if needed.
pub fn read_wav_at(path: &Path, rate: u32) -> Result<Vec<f32>> {
    let (samples, sr) = read_wav(path)?;
    if sr == rate {
        return Ok(samples);
    }
    info!("{}: resampling {sr} Hz to {rate} Hz", path.display());
    Ok(resample_linear(&samples, sr, rate))
}

pub fn resample_linear(x: &[f32], from: u32, to: u32) -> Vec<f32> {
    if x.is_empty() || from == to {
        return x.to_vec();
    }
    let ratio = from as f64 / to as f64;
    let n = ((x.len() as f64) / ratio).floor() as usize;
    (0..n)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos as usize;
            let frac = (pos - j as f64) as f32;
            let a = x[j];
            let b = x.get(j + 1).copied().unwrap_or(a);
            a + (b - a) * frac
        })
        .collect()
}

/// 32-bit float mono WAV.
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let inner = || -> Result<()> {
        let mut w = hound::WavWriter::create(path, spec)?;
        for &s in samples {
            w.write_sample(s)?;
        }
        w.finalize()?;
        Ok(())
    };
    inner().map_err(|e| e.in_file(path))
}

pub fn read_midi(path: &Path) -> Result<ScoreDocument> {
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_midi(&bytes).map_err(|e| e.in_file(path))
}

/// Non-empty lines split on tabs, with 1-based line numbers.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').map(str::trim).collect()))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize, what: &str) -> Result<T> {
    let raw = cols
        .get(i)
        .ok_or_else(|| Error::parse(line, format!("missing {what} column")))?;
    raw.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{raw}'")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}

pub fn parse_path_tsv(text: &str) -> Result<WarpingPath> {
    let mut path = WarpingPath::new();
    for (line, cols) in tsv_rows(text) {
        let u = field(&cols, 0, line, "reference frame")?;
        let v = field(&cols, 1, line, "performance frame")?;
        path.push(u, v).map_err(|e| Error::parse(line, e.to_string()))?;
    }
    Ok(path)
}

pub fn read_path_tsv(path: &Path) -> Result<WarpingPath> {
    parse_path_tsv(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn parse_beats_tsv(text: &str) -> Result<BeatGrid> {
    let mut entries = Vec::new();
    for (line, cols) in tsv_rows(text) {
        let b: usize = field(&cols, 0, line, "beat index")?;
        let t: f64 = field(&cols, 1, line, "time")?;
        if !t.is_finite() {
            return Err(Error::parse(line, format!("invalid time '{t}'")));
        }
        if let Some(&(pb, pt)) = entries.last() {
            if b <= pb || t <= pt {
                return Err(Error::parse(line, "beats must be strictly increasing"));
            }
        }
        entries.push((b, t));
    }
    BeatGrid::new(entries)
}

/// Beat annotations or a beat grid: `beat_index<TAB>time_sec` per line.
pub fn read_beats_tsv(path: &Path) -> Result<BeatGrid> {
    parse_beats_tsv(&read_text(path)?).map_err(|e| e.in_file(path))
}

fn write_with(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let inner = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        body(&mut w)?;
        w.flush()
    };
    inner().map_err(|e| Error::from(e).in_file(path))
}

pub fn write_path_tsv(path: &Path, wp: &WarpingPath) -> Result<()> {
    write_with(path, |w| {
        for (u, v) in wp.pairs() {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    })
}

pub fn write_beats_tsv(path: &Path, grid: &BeatGrid) -> Result<()> {
    write_with(path, |w| {
        for (b, t) in grid.entries() {
            writeln!(w, "{b}\t{t}")?;
        }
        Ok(())
    })
}

pub const EVENTS_HEADER: &str = "perf_time\test_ref_frame\test_beat\tfeature_ms\talign_ms";

pub fn write_events_tsv(path: &Path, events: &[PositionEvent]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "{EVENTS_HEADER}")?;
        for e in events {
            writeln!(
                w,
                "{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}",
                e.perf_time, e.est_ref_frame, e.est_beat, e.feature_ms, e.align_ms
            )?;
        }
        Ok(())
    })
}

pub fn write_errors_tsv(path: &Path, records: &[ErrorRecord]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "beat_index\tdomain\terror\texcluded")?;
        for r in records {
            let domain = match r.domain {
                Domain::Ms => "ms",
                Domain::Beats => "beats",
            };
            writeln!(w, "{}\t{domain}\t{}\t{}", r.beat_index, r.error, r.excluded)?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let inner = || -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    };
    inner().map_err(|e| e.in_file(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))
}
