//! Overlapped framing of a signal, and the padded "chunk" view the comb
//! filters read from.

use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Frame geometry shared by framing, chunking and the short-time transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameConfig {
    frame_size: usize,
    hop_size: usize,
    pad: usize,
}

impl FrameConfig {
    /// 32 ms at 48 kHz.
    pub const DEFAULT_FRAME_SIZE: usize = 1536;
    /// 8 ms at 48 kHz.
    pub const DEFAULT_HOP_SIZE: usize = 384;
    /// One filter order times the longest candidate period (16 ms).
    pub const DEFAULT_PAD: usize = 768;

    pub fn new(frame_size: usize, hop_size: usize, pad: usize) -> Result<Self> {
        if frame_size == 0 || !frame_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "frame size must be positive and even, got {frame_size}"
            )));
        }
        if hop_size == 0 || !frame_size.is_multiple_of(hop_size) {
            return Err(Error::Config(format!(
                "hop size {hop_size} must divide frame size {frame_size}"
            )));
        }
        Ok(Self {
            frame_size,
            hop_size,
            pad,
        })
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn hop_size(&self) -> usize {
        self.hop_size
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn fft_size(&self) -> usize {
        self.frame_size
    }

    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn chunk_len(&self) -> usize {
        self.frame_size + 2 * self.pad
    }

    /// `ceil(len / hop)`, the trailing partial frame included.
    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop_size)
    }

    /// Algorithmic latency: one frame plus the filters' look-ahead.
    pub fn latency_samples(&self) -> usize {
        self.frame_size + self.pad
    }

    pub fn with_pad(self, pad: usize) -> Self {
        Self { pad, ..self }
    }
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_size: Self::DEFAULT_FRAME_SIZE,
            hop_size: Self::DEFAULT_HOP_SIZE,
            pad: Self::DEFAULT_PAD,
        }
    }
}

/// `frame_size × frame_count` real matrix, stored frame by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramedSignal<T> {
    frame_size: usize,
    data: Vec<T>,
}

impl<T: Real> FramedSignal<T> {
    pub fn zeros(frame_size: usize, frame_count: usize) -> Self {
        Self {
            frame_size,
            data: vec![T::zero(); frame_size * frame_count],
        }
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn frame_count(&self) -> usize {
        self.data.len().checked_div(self.frame_size).unwrap_or(0)
    }

    pub fn frame(&self, t: usize) -> &[T] {
        &self.data[t * self.frame_size..(t + 1) * self.frame_size]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [T] {
        &mut self.data[t * self.frame_size..(t + 1) * self.frame_size]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.data.chunks_exact(self.frame_size)
    }

    pub(crate) fn frames_mut(&mut self) -> std::slice::ChunksExactMut<'_, T> {
        self.data.chunks_exact_mut(self.frame_size)
    }

    pub fn get(&self, s: usize, t: usize) -> T {
        self.data[t * self.frame_size + s]
    }
}

/// `(frame_size + 2·pad) × frame_count` matrix of zero-padded source slices.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedSignal<T> {
    chunk_len: usize,
    pad: usize,
    data: Vec<T>,
}

impl<T: Real> ChunkedSignal<T> {
    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn frame_size(&self) -> usize {
        self.chunk_len - 2 * self.pad
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.chunk_len
    }

    pub fn chunk(&self, t: usize) -> &[T] {
        &self.data[t * self.chunk_len..(t + 1) * self.chunk_len]
    }

    /// The slice that coincides with frame `t` of the framed signal.
    pub fn center(&self, t: usize) -> &[T] {
        &self.chunk(t)[self.pad..self.pad + self.frame_size()]
    }
}

fn slice_frames<T: Real>(
    samples: &[T],
    lead: usize,
    len: usize,
    hop: usize,
    count: usize,
) -> Vec<T> {
    let mut data = vec![T::zero(); len * count];
    for (t, dst) in data.chunks_exact_mut(len).enumerate() {
        // Column t covers padded positions [t·hop, t·hop + len); source sample
        // n sits at padded position n + lead.
        let start = (t * hop) as isize - lead as isize;
        for (j, d) in dst.iter_mut().enumerate() {
            let n = start + j as isize;
            if n >= 0 && (n as usize) < samples.len() {
                *d = samples[n as usize];
            }
        }
    }
    data
}

/// Splits a buffer into `ceil(len / hop)` overlapped frames, zero-padding the tail.
pub fn frame_signal<T: Real>(
    buffer: &AudioBuffer<T>,
    cfg: &FrameConfig,
) -> Result<FramedSignal<T>> {
    if buffer.is_empty() {
        return Err(Error::Domain("cannot frame an empty buffer".into()));
    }
    let count = cfg.frame_count(buffer.len());
    Ok(FramedSignal {
        frame_size: cfg.frame_size,
        data: slice_frames(buffer.samples(), 0, cfg.frame_size, cfg.hop_size, count),
    })
}

/// Pads `pad` zeros on both sides of the buffer and slices chunks of
/// `frame_size + 2·pad` at the same hop, yielding the same frame count as
/// [`frame_signal`].
pub fn chunk_signal<T: Real>(
    buffer: &AudioBuffer<T>,
    cfg: &FrameConfig,
) -> Result<ChunkedSignal<T>> {
    if buffer.is_empty() {
        return Err(Error::Domain("cannot chunk an empty buffer".into()));
    }
    let count = cfg.frame_count(buffer.len());
    Ok(ChunkedSignal {
        chunk_len: cfg.chunk_len(),
        pad: cfg.pad,
        data: slice_frames(
            buffer.samples(),
            cfg.pad,
            cfg.chunk_len(),
            cfg.hop_size,
            count,
        ),
    })
}
