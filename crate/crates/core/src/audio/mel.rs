//! Triangular mel filterbank (HTK mel scale).
//!
//! Band centers are equally spaced in mel from `f_lo` to `f_hi` inclusive and
//! each triangle falls to zero at its neighbours' centers, so the bank is a
//! partition of unity on `[f_lo, f_hi]`. The first and last bands hold their
//! peak value outside that range, which keeps every FFT bin covered.

use super::{FrameConfig, Spectrogram, PIPELINE_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const DEFAULT_MEL_BANDS: usize = 80;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank<T> {
    weights: Matrix<T>,
    centers_hz: Vec<f64>,
}

impl<T: Real> MelFilterbank<T> {
    pub fn new(
        bands: usize,
        fft_size: usize,
        sample_rate: u32,
        f_lo: f64,
        f_hi: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if bands < 2 {
            return Err(Error::Config(format!(
                "need at least 2 mel bands, got {bands}"
            )));
        }
        if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= nyquist) {
            return Err(Error::Config(format!(
                "mel range [{f_lo}, {f_hi}] must satisfy 0 <= lo < hi <= {nyquist}"
            )));
        }
        let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
        let step = (m_hi - m_lo) / (bands - 1) as f64;
        let mut centers_hz: Vec<f64> = (0..bands)
            .map(|b| mel_to_hz(m_lo + step * b as f64))
            .collect();
        centers_hz[0] = f_lo;
        centers_hz[bands - 1] = f_hi;

        let bins = fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = Matrix::filled(bands, bins, T::zero());
        for bin in 0..bins {
            let f = bin as f64 * bin_hz;
            if f <= f_lo {
                weights.set(0, bin, T::one());
                continue;
            }
            if f >= f_hi {
                weights.set(bands - 1, bin, T::one());
                continue;
            }
            // f lies in [centers[b], centers[b+1]): split between the two bands.
            let b = centers_hz.partition_point(|&c| c <= f) - 1;
            let frac = (f - centers_hz[b]) / (centers_hz[b + 1] - centers_hz[b]);
            weights.set(b, bin, T::lit(1.0 - frac));
            weights.set(b + 1, bin, T::lit(frac));
        }
        Ok(Self {
            weights,
            centers_hz,
        })
    }

    pub fn bands(&self) -> usize {
        self.weights.rows()
    }

    pub fn bins(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Sum of weights over bands at each bin.
    pub fn column_sums(&self) -> Vec<T> {
        (0..self.bins())
            .map(|f| (0..self.bands()).map(|b| self.weights.get(b, f)).sum())
            .collect()
    }

    /// Spreads one value per band back onto FFT bins as the weight-normalized
    /// average of the bands covering each bin.
    pub fn interpolate(&self, per_band: &[T]) -> Vec<T> {
        let sums = self.column_sums();
        (0..self.bins())
            .map(|f| {
                let num: T = (0..self.bands())
                    .map(|b| self.weights.get(b, f) * per_band[b])
                    .sum();
                num / sums[f]
            })
            .collect()
    }

    /// Weighted energy per band of one power spectrum.
    pub fn band_energies(&self, power: &[T]) -> Vec<T> {
        (0..self.bands())
            .map(|b| {
                self.weights
                    .row(b)
                    .iter()
                    .zip(power)
                    .map(|(&w, &p)| w * p)
                    .sum()
            })
            .collect()
    }

    /// Same as [`band_energies`](Self::band_energies) then divided by each band's weight sum.
    pub fn band_average(&self, values: &[T]) -> Vec<T> {
        (0..self.bands())
            .map(|b| {
                let row = self.weights.row(b);
                let total: T = row.iter().copied().sum();
                row.iter().zip(values).map(|(&w, &v)| w * v).sum::<T>() / total
            })
            .collect()
    }
}

impl<T: Real> MelFilterbank<T> {
    /// 80 bands over `[f_lo, f_hi]` for the 48 kHz pipeline rate.
    pub fn for_frames(cfg: &FrameConfig, bands: usize, f_lo: f64, f_hi: f64) -> Result<Self> {
        Self::new(bands, cfg.fft_size(), PIPELINE_SAMPLE_RATE, f_lo, f_hi)
    }

    pub fn default_for(cfg: &FrameConfig) -> Self {
        Self::for_frames(
            cfg,
            DEFAULT_MEL_BANDS,
            0.0,
            PIPELINE_SAMPLE_RATE as f64 / 2.0,
        )
        .expect("default mel parameters are valid")
    }
}

/// `bands × frames` matrix of `Σ_f fb[b, f]·|spec[f, t]|²`.
pub fn mel_energies<T: Real>(spec: &Spectrogram<T>, fb: &MelFilterbank<T>) -> Result<Matrix<T>> {
    if spec.bins() != fb.bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, filterbank {}",
            spec.bins(),
            fb.bins()
        )));
    }
    let frames = spec.frame_count();
    let mut out = Matrix::filled(fb.bands(), frames, T::zero());
    for (t, column) in spec.frames().enumerate() {
        let power: Vec<T> = column.iter().map(|c| c.norm_sqr()).collect();
        for (b, e) in fb.band_energies(&power).into_iter().enumerate() {
            out.set(b, t, e);
        }
    }
    Ok(out)
}
