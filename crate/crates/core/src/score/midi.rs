//! Standard MIDI File (types 0 and 1) reading and a minimal type-0 writer.

use std::collections::{HashMap, VecDeque};

use log::warn;

use super::{Note, ScoreDocument, TempoEvent, TimeSignature};
use crate::error::{Error, Result};

/// Ticks per quarter used by [`write_midi`].
const WRITE_DIVISION: u16 = 480;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(
                self.pos,
                format!("unexpected end of data (need {n} bytes)"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut v: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::parse(start, "variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Default)]
struct Collected {
    notes: Vec<(u64, u64, u8, u8)>,
    signatures: Vec<(u64, u8, u8)>,
    tempos: Vec<(u64, u32)>,
}

/// Parse an SMF into a score. Tick positions are converted to quarter beats
/// through the header division.
pub fn parse_midi(bytes: &[u8]) -> Result<ScoreDocument> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != b"MThd" {
        return Err(Error::parse(0, "missing MThd header"));
    }
    let len = r.u32()? as usize;
    if len < 6 {
        return Err(Error::parse(4, format!("header length {len} is shorter than 6")));
    }
    let format = r.u16()?;
    let n_tracks = r.u16()?;
    let division_at = r.pos;
    let division = r.u16()?;
    r.take(len - 6)?;
    if format > 1 {
        return Err(Error::parse(8, format!("unsupported SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(Error::parse(division_at, "SMPTE time division is not supported"));
    }
    if division == 0 {
        return Err(Error::parse(division_at, "time division is zero"));
    }

    let mut out = Collected::default();
    let mut found = 0;
    while found < n_tracks {
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if r.remaining() < len {
            return Err(Error::parse(
                chunk_at,
                format!("chunk length {len} runs past end of file"),
            ));
        }
        let body_at = r.pos;
        let body = r.take(len)?;
        if id != b"MTrk" {
            continue;
        }
        parse_track(body, body_at, &mut out)?;
        found += 1;
    }

    let q = division as f64;
    let notes = out
        .notes
        .into_iter()
        .filter_map(|(on, off, pitch, velocity)| {
            if off <= on {
                warn!("dropping zero-length note {pitch} at tick {on}");
                return None;
            }
            Some(Note {
                onset: on as f64 / q,
                duration: (off - on) as f64 / q,
                pitch,
                velocity,
            })
        })
        .collect();

    let mut sigs = out.signatures;
    sigs.sort_by_key(|s| s.0);
    let mut time_signatures: Vec<TimeSignature> = Vec::new();
    for (tick, numerator, denominator) in sigs {
        let ts = TimeSignature {
            start: tick as f64 / q,
            numerator,
            denominator,
        };
        match time_signatures.last_mut() {
            Some(last) if last.start == ts.start => *last = ts,
            _ => time_signatures.push(ts),
        }
    }
    if time_signatures.first().is_none_or(|ts| ts.start > 0.0) {
        time_signatures.insert(
            0,
            TimeSignature {
                start: 0.0,
                numerator: 4,
                denominator: 4,
            },
        );
    }

    let mut tempos = out.tempos;
    tempos.sort_by_key(|t| t.0);
    let tempos = tempos
        .into_iter()
        .map(|(tick, us)| TempoEvent {
            start: tick as f64 / q,
            bpm: 60_000_000.0 / us as f64,
        })
        .collect();

    ScoreDocument::new(notes, time_signatures, tempos)
}

fn parse_track(body: &[u8], base: usize, out: &mut Collected) -> Result<()> {
    let mut r = Reader::new(body);
    let at = |r: &Reader| base + r.pos;
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();

    while r.remaining() > 0 {
        tick += r.vlq().map_err(|e| shift(e, base))? as u64;
        let status_at = at(&r);
        let first = r.u8().map_err(|e| shift(e, base))?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => {
                    return Err(Error::parse(status_at, "data byte without running status"))
                }
            }
        };
        match status {
            0x80..=0xef => {
                running = Some(status);
                let d1 = match first_data {
                    Some(d) => d,
                    None => r.u8().map_err(|e| shift(e, base))?,
                };
                let kind = status & 0xf0;
                let channel = status & 0x0f;
                if matches!(kind, 0xc0 | 0xd0) {
                    continue;
                }
                let d2 = r.u8().map_err(|e| shift(e, base))?;
                if d1 > 0x7f || d2 > 0x7f {
                    return Err(Error::parse(status_at, "data byte has its high bit set"));
                }
                match (kind, d2) {
                    (0x90, v) if v > 0 => {
                        open.entry((channel, d1)).or_default().push_back((tick, v));
                    }
                    (0x80, _) | (0x90, _) => {
                        if let Some((on, vel)) =
                            open.get_mut(&(channel, d1)).and_then(|q| q.pop_front())
                        {
                            out.notes.push((on, tick, d1, vel));
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq().map_err(|e| shift(e, base))? as usize;
                r.take(len).map_err(|e| shift(e, base))?;
            }
            0xff => {
                running = None;
                let kind = r.u8().map_err(|e| shift(e, base))?;
                let len = r.vlq().map_err(|e| shift(e, base))? as usize;
                let payload = r.take(len).map_err(|e| shift(e, base))?;
                match kind {
                    0x2f => break,
                    0x51 => {
                        if len != 3 {
                            return Err(Error::parse(status_at, "tempo event must have 3 bytes"));
                        }
                        let us = u32::from_be_bytes([0, payload[0], payload[1], payload[2]]);
                        if us == 0 {
                            return Err(Error::parse(status_at, "tempo of zero microseconds"));
                        }
                        out.tempos.push((tick, us));
                    }
                    0x58 => {
                        if len < 2 {
                            return Err(Error::parse(status_at, "time signature too short"));
                        }
                        if payload[0] == 0 || payload[1] > 7 {
                            return Err(Error::parse(status_at, "invalid time signature"));
                        }
                        out.signatures.push((tick, payload[0], 1u8 << payload[1]));
                    }
                    _ => {}
                }
            }
            other => {
                return Err(Error::parse(
                    status_at,
                    format!("unexpected status byte {other:#04x}"),
                ))
            }
        }
    }

    let mut dangling: Vec<_> = open
        .into_iter()
        .flat_map(|((_, pitch), q)| q.into_iter().map(move |(on, vel)| (on, pitch, vel)))
        .collect();
    dangling.sort();
    for (on, pitch, vel) in dangling {
        warn!("note {pitch} at tick {on} never released; closing at track end (tick {tick})");
        out.notes.push((on, tick, pitch, vel));
    }
    Ok(())
}

fn shift(e: Error, base: usize) -> Error {
    match e {
        Error::Parse { offset, msg } => Error::Parse {
            offset: offset + base,
            msg,
        },
        e => e,
    }
}

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { stack[i] | 0x80 } else { stack[i] });
    }
}

/// Encode a score as a type-0 SMF at 480 ticks per quarter.
pub fn write_midi(score: &ScoreDocument) -> Vec<u8> {
    let ticks = |beats: f64| (beats * WRITE_DIVISION as f64).round() as u64;
    // (tick, order, bytes); order puts meta first and note-offs before note-ons
    let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::new();
    for t in &score.tempos {
        let us = (60_000_000.0 / t.bpm).round() as u32;
        let b = us.to_be_bytes();
        events.push((ticks(t.start), 0, vec![0xff, 0x51, 3, b[1], b[2], b[3]]));
    }
    for ts in &score.time_signatures {
        let dd = ts.denominator.trailing_zeros() as u8;
        events.push((
            ticks(ts.start),
            0,
            vec![0xff, 0x58, 4, ts.numerator, dd, 24, 8],
        ));
    }
    for n in &score.notes {
        events.push((ticks(n.onset), 2, vec![0x90, n.pitch, n.velocity]));
        events.push((ticks(n.onset + n.duration), 1, vec![0x80, n.pitch, 0]));
    }
    events.sort_by_key(|e| (e.0, e.1));

    let mut track = Vec::new();
    let mut last = 0;
    for (tick, _, bytes) in events {
        push_vlq(&mut track, (tick - last) as u32);
        track.extend_from_slice(&bytes);
        last = tick;
    }
    track.extend_from_slice(&[0, 0xff, 0x2f, 0]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_DIVISION.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
