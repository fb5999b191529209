//! Re-blocking of an arbitrarily chunked sample stream into overlapping
//! analysis windows, plus the producer/consumer contract for live sources.

use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::{self, JoinHandle};

/// Turns chunks of any size into windows of `window` samples spaced `hop`
/// samples apart. The emitted window sequence depends only on the
/// concatenated samples, never on how they were split.
#[derive(Debug, Clone)]
pub struct StreamSource {
    window: usize,
    hop: usize,
    buf: Vec<f32>,
    start: usize,
}

impl StreamSource {
    pub fn new(window: usize, hop: usize) -> Self {
        assert!(window > 0 && hop > 0, "window and hop must be positive");
        StreamSource {
            window,
            hop,
            buf: Vec::with_capacity(window * 2),
            start: 0,
        }
    }

    /// A source whose buffer starts with `window - hop` zeros, so that window
    /// `k` ends at sample `(k + 1) * hop` of the real signal and one window is
    /// emitted per completed hop.
    pub fn primed(window: usize, hop: usize) -> Self {
        let mut s = StreamSource::new(window, hop);
        s.buf.resize(window.saturating_sub(hop), 0.0);
        s
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Samples buffered but not yet part of an emitted window's hop.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.start
    }

    /// Append `chunk`, calling `emit` once per completed window.
    pub fn push_with(&mut self, chunk: &[f32], mut emit: impl FnMut(&[f32])) {
        self.buf.extend_from_slice(chunk);
        while self.buf.len() - self.start >= self.window {
            emit(&self.buf[self.start..self.start + self.window]);
            self.start += self.hop;
        }
        // compact once the consumed prefix dominates the buffer
        if self.start > self.window.max(4096) {
            let consumed = self.start.min(self.buf.len());
            self.buf.drain(..consumed);
            self.start -= consumed;
        }
    }

    /// Append `chunk` and collect the completed windows.
    pub fn push(&mut self, chunk: &[f32]) -> Vec<Vec<f32>> {
        let mut out = Vec::new();
        self.push_with(chunk, |w| out.push(w.to_vec()));
        out
    }
}

/// Anything that yields successive chunks of mono samples.
pub trait AudioSource: Send {
    fn next_chunk(&mut self) -> Option<Vec<f32>>;
}

/// Serves an in-memory (typically file-loaded) signal in fixed-size chunks.
#[derive(Debug, Clone)]
pub struct FileSource {
    samples: Vec<f32>,
    chunk: usize,
    pos: usize,
}

impl FileSource {
    pub fn new(samples: Vec<f32>, chunk: usize) -> Self {
        FileSource {
            samples,
            chunk: chunk.max(1),
            pos: 0,
        }
    }
}

impl AudioSource for FileSource {
    fn next_chunk(&mut self) -> Option<Vec<f32>> {
        if self.pos >= self.samples.len() {
            return None;
        }
        let end = (self.pos + self.chunk).min(self.samples.len());
        let out = self.samples[self.pos..end].to_vec();
        self.pos = end;
        Some(out)
    }
}

/// Runs `source` on its own thread, pushing chunks into an unbounded FIFO.
///
/// The producer never waits on the consumer; the consumer sees every chunk
/// in order and the channel closes when the source is exhausted.
pub fn spawn_producer<S: AudioSource + 'static>(mut source: S) -> (Receiver<Vec<f32>>, JoinHandle<usize>) {
    let (tx, rx): (Sender<Vec<f32>>, Receiver<Vec<f32>>) = mpsc::channel();
    let handle = thread::spawn(move || {
        let mut sent = 0;
        while let Some(chunk) = source.next_chunk() {
            if tx.send(chunk).is_err() {
                break;
            }
            sent += 1;
        }
        sent
    });
    (rx, handle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<f32> {
        (0..n).map(|i| i as f32).collect()
    }

    #[test]
    fn chunking_invariance_single_samples() {
        let x = ramp(4410);
        let mut whole = StreamSource::primed(4096, 1470);
        let a = whole.push(&x);
        let mut tiny = StreamSource::primed(4096, 1470);
        let mut b = Vec::new();
        for s in &x {
            b.extend(tiny.push(std::slice::from_ref(s)));
        }
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        // window k ends at (k + 1) * hop
        assert_eq!(*a[0].last().unwrap(), 1469.0);
        assert_eq!(*a[2].last().unwrap(), 4409.0);
    }

    #[test]
    fn short_input_buffers_residue() {
        let mut s = StreamSource::new(4096, 1470);
        assert!(s.push(&ramp(4000)).is_empty());
        assert_eq!(s.pending(), 4000);
    }

    #[test]
    fn exactly_one_window() {
        let mut s = StreamSource::new(4096, 1470);
        let w = s.push(&ramp(4096));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0], ramp(4096));
    }

    #[test]
    fn compaction_preserves_stream() {
        let x = ramp(100_000);
        let mut s = StreamSource::new(1000, 300);
        let mut got = Vec::new();
        for c in x.chunks(777) {
            got.extend(s.push(c));
        }
        assert_eq!(got.len(), (100_000 - 1000) / 300 + 1);
        for (k, w) in got.iter().enumerate() {
            assert_eq!(w[0], (k * 300) as f32);
        }
    }

    #[test]
    fn producer_delivers_fifo_without_loss() {
        let x = ramp(50_000);
        let (rx, handle) = spawn_producer(FileSource::new(x.clone(), 513));
        let received: Vec<f32> = rx.iter().flatten().collect();
        assert_eq!(handle.join().unwrap(), 50_000usize.div_ceil(513));
        assert_eq!(received, x);
    }
}
