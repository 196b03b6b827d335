//! Real short-time Fourier transform and weighted overlap-add resynthesis.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::{AudioBuffer, FrameConfig, FramedSignal, Window, PIPELINE_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower bound on the per-sample window overlap sum used for normalization.
pub const OVERLAP_FLOOR: f64 = 1e-8;

/// Complex `(fft_size/2 + 1) × frame_count` matrix, stored frame by frame.
/// Bin `b` corresponds to angular frequency `2πb / fft_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<T> {
    fft_size: usize,
    bins: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> Spectrogram<T> {
    pub fn zeros(fft_size: usize, frame_count: usize) -> Self {
        let bins = fft_size / 2 + 1;
        Self {
            fft_size,
            bins,
            data: vec![Complex::new(T::zero(), T::zero()); bins * frame_count],
        }
    }

    pub fn from_frames(fft_size: usize, frames: Vec<Vec<Complex<T>>>) -> Result<Self> {
        let bins = fft_size / 2 + 1;
        if let Some(t) = frames.iter().position(|f| f.len() != bins) {
            return Err(Error::Shape(format!(
                "frame {t} has {} bins, expected {bins}",
                frames[t].len()
            )));
        }
        Ok(Self {
            fft_size,
            bins,
            data: frames.concat(),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frame_count())
    }

    pub fn frame(&self, t: usize) -> &[Complex<T>] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex<T>] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[Complex<T>]> {
        self.data.chunks_exact(self.bins)
    }

    pub fn get(&self, bin: usize, t: usize) -> Complex<T> {
        self.data[t * self.bins + bin]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub(crate) fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Planned forward/inverse transforms of one size.
pub struct Stft<T: Real> {
    fft_size: usize,
    forward: Arc<dyn RealToComplex<T>>,
    inverse: Arc<dyn ComplexToReal<T>>,
}

impl<T: Real> Stft<T> {
    pub fn new(fft_size: usize) -> Self {
        let mut planner = RealFftPlanner::<T>::new();
        Self {
            fft_size,
            forward: planner.plan_fft_forward(fft_size),
            inverse: planner.plan_fft_inverse(fft_size),
        }
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Spectrum of `window ∘ frame`.
    pub fn forward_frame(&self, frame: &[T], window: &[T]) -> Vec<Complex<T>> {
        let mut input: Vec<T> = frame.iter().zip(window).map(|(&x, &w)| x * w).collect();
        let mut out = self.forward.make_output_vec();
        self.forward
            .process(&mut input, &mut out)
            .expect("buffer sizes match the plan");
        out
    }

    /// Normalized inverse of one half-spectrum; imaginary parts at DC and
    /// Nyquist are discarded.
    pub fn inverse_frame(&self, spectrum: &[Complex<T>]) -> Vec<T> {
        let mut input = spectrum.to_vec();
        input[0].im = T::zero();
        if self.fft_size.is_multiple_of(2) {
            let last = input.len() - 1;
            input[last].im = T::zero();
        }
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut input, &mut out)
            .expect("buffer sizes match the plan");
        let scale = T::one() / T::from_usize_lossy(self.fft_size);
        out.iter_mut().for_each(|x| *x *= scale);
        out
    }

    pub fn analyze(&self, frames: &FramedSignal<T>, window: Window) -> Spectrogram<T> {
        assert_eq!(
            frames.frame_size(),
            self.fft_size,
            "frame size must equal FFT size"
        );
        let w = window.coefficients::<T>(self.fft_size);
        let data = frames
            .frames()
            .flat_map(|f| self.forward_frame(f, &w))
            .collect();
        Spectrogram {
            fft_size: self.fft_size,
            bins: self.fft_size / 2 + 1,
            data,
        }
    }

    /// Inverse transform, synthesis window, overlap-add at the hop, then
    /// division by the per-sample overlap sum of analysis×synthesis windows.
    pub fn synthesize(
        &self,
        spec: &Spectrogram<T>,
        cfg: &FrameConfig,
        window: Window,
        length: Option<usize>,
    ) -> Result<AudioBuffer<T>> {
        if spec.bins() != cfg.bins() || spec.fft_size() != self.fft_size {
            return Err(Error::Shape(format!(
                "spectrogram has {} bins, frame config expects {}",
                spec.bins(),
                cfg.bins()
            )));
        }
        let n = self.fft_size;
        let hop = cfg.hop_size();
        let frames = spec.frame_count();
        let full_len = if frames == 0 {
            0
        } else {
            (frames - 1) * hop + n
        };
        let w = window.coefficients::<T>(n);
        let mut acc = vec![T::zero(); full_len];
        let mut norm = vec![T::zero(); full_len];
        for (t, column) in spec.frames().enumerate() {
            let time = self.inverse_frame(column);
            let start = t * hop;
            for i in 0..n {
                acc[start + i] += time[i] * w[i];
                norm[start + i] += w[i] * w[i];
            }
        }
        let floor = T::lit(OVERLAP_FLOOR);
        let mut out: Vec<T> = acc
            .iter()
            .zip(&norm)
            .map(|(&a, &d)| a / d.max(floor))
            .collect();
        if let Some(len) = length {
            out.resize(len, T::zero());
        }
        AudioBuffer::new(out, PIPELINE_SAMPLE_RATE)
    }
}

/// Windowed forward transform of every frame; bins `0..=N_f/2` are kept.
pub fn stft<T: Real>(frames: &FramedSignal<T>, window: Window) -> Spectrogram<T> {
    Stft::new(frames.frame_size()).analyze(frames, window)
}

pub fn istft_overlap_add<T: Real>(
    spec: &Spectrogram<T>,
    cfg: &FrameConfig,
    window: Window,
    length: Option<usize>,
) -> Result<AudioBuffer<T>> {
    Stft::new(cfg.fft_size()).synthesize(spec, cfg, window, length)
}
