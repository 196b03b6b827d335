//! Audio buffers, WAV I/O, framing, short-time transforms and the mel filterbank.

mod frame;
mod mel;
mod stft;
mod wav;
mod window;

pub use frame::{chunk_signal, frame_signal, ChunkedSignal, FrameConfig, FramedSignal};
pub use mel::{hz_to_mel, mel_energies, mel_to_hz, MelFilterbank, DEFAULT_MEL_BANDS};
pub use stft::{istft_overlap_add, stft, Spectrogram, Stft, OVERLAP_FLOOR};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, BitDepth, WavWriteReport};
pub use window::Window;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Every pipeline entry point runs at this rate.
pub const PIPELINE_SAMPLE_RATE: u32 = 48_000;

/// Mono audio with finite samples.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// A 48 kHz buffer.
    pub fn at_pipeline_rate(samples: Vec<T>) -> Result<Self> {
        Self::new(samples, PIPELINE_SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn require_pipeline_rate(&self) -> Result<()> {
        if self.sample_rate != PIPELINE_SAMPLE_RATE {
            return Err(Error::SampleRate {
                found: self.sample_rate,
                required: PIPELINE_SAMPLE_RATE,
            });
        }
        Ok(())
    }
}
