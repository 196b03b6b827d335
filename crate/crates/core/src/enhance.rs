//! Strength/gain providers, spectral blending and the end-to-end pipeline.

use std::path::Path;

use num_complex::Complex;

use crate::audio::{
    chunk_signal, frame_signal, AudioBuffer, FrameConfig, MelFilterbank, Spectrogram, Stft, Window,
};
use crate::comb::{filter_inference, CombFilterBank};
use crate::error::{Error, Result};
use crate::estimator::{estimate_track, EstimatorConfig};
use crate::grid::{F0Grid, F0Track};
use crate::matrix::{read_matrix, Matrix};
use crate::scalar::Real;

/// Energy floor of the oracle gain's noise estimate.
pub const IRM_EPSILON: f64 = 1e-12;
/// Below this `|Y_cf - Y|²` the oracle strength is 0.
pub const STRENGTH_FLOOR: f64 = 1e-12;

/// Real `bins × frames` map, stored frame by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BinMap<T> {
    bins: usize,
    data: Vec<T>,
}

impl<T: Real> BinMap<T> {
    pub fn filled(bins: usize, frames: usize, value: T) -> Self {
        Self {
            bins,
            data: vec![value; bins * frames],
        }
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

    pub fn frame(&self, t: usize) -> &[T] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [T] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, bin: usize, t: usize) -> T {
        self.data[t * self.bins + bin]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `bins × frames` matrix, the orientation used in matrix files.
    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::new(self.frame_count(), self.bins, self.data.clone())
            .expect("consistent shape")
            .transpose()
    }

    pub fn from_matrix(m: &Matrix<T>) -> Self {
        Self {
            bins: m.rows(),
            data: m.transpose().into_vec(),
        }
    }

    fn require_shape(&self, shape: (usize, usize), what: &str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Shape(format!(
                "{what} is {}x{}, expected {}x{} (bins x frames)",
                self.bins,
                self.frame_count(),
                shape.0,
                shape.1
            )));
        }
        Ok(())
    }
}

/// Filter strength `R` in `[0, 1]`; zero on unvoiced frames.
#[derive(Clone, Debug, PartialEq)]
pub struct StrengthMap<T>(BinMap<T>);

impl<T: Real> StrengthMap<T> {
    pub fn new(mut map: BinMap<T>, track: &F0Track<T>, grid: &F0Grid<T>) -> Result<Self> {
        track.require_frames(map.frame_count())?;
        for (t, f) in track.frames().iter().enumerate() {
            let voiced = grid.is_voiced(f.grid_index);
            for r in map.frame_mut(t) {
                *r = if voiced && !r.is_nan() {
                    r.max(T::zero()).min(T::one())
                } else {
                    T::zero()
                };
            }
        }
        Ok(Self(map))
    }

    pub fn map(&self) -> &BinMap<T> {
        &self.0
    }
}

/// Gain `G` in `[0, g_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainMap<T>(BinMap<T>);

impl<T: Real> GainMap<T> {
    pub fn new(mut map: BinMap<T>, g_max: T) -> Result<Self> {
        if let Some(i) = map.data.iter().position(|g| !g.is_finite()) {
            return Err(Error::Validation(format!("gain entry {i} is not finite")));
        }
        for g in &mut map.data {
            *g = g.max(T::zero()).min(g_max);
        }
        Ok(Self(map))
    }

    pub fn map(&self) -> &BinMap<T> {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendConfig<T> {
    /// Exponent applied to `R`; 1 gives the plain blend.
    pub gamma: T,
}

impl<T: Real> BlendConfig<T> {
    pub const RESCALE_GAMMA: f64 = 0.5;

    pub fn new(gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::Config(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    /// The rescaling mode, `γ = 0.5`.
    pub fn rescaled() -> Self {
        Self {
            gamma: T::lit(Self::RESCALE_GAMMA),
        }
    }
}

impl<T: Real> Default for BlendConfig<T> {
    fn default() -> Self {
        Self { gamma: T::one() }
    }
}

/// `Y_out = (R^γ ∘ Y_cf + (1 - R^γ) ∘ Y) ∘ G`.
pub fn blend<T: Real>(
    noisy: &Spectrogram<T>,
    filtered: &Spectrogram<T>,
    strength: &StrengthMap<T>,
    gain: &GainMap<T>,
    cfg: &BlendConfig<T>,
) -> Result<Spectrogram<T>> {
    noisy.ensure_same_shape(filtered, "filtered spectrogram")?;
    strength.0.require_shape(noisy.shape(), "strength map")?;
    gain.0.require_shape(noisy.shape(), "gain map")?;
    let mut out = noisy.clone();
    for (((y_out, y_cf), r), g) in out
        .as_mut_slice()
        .iter_mut()
        .zip(filtered.as_slice())
        .zip(&strength.0.data)
        .zip(&gain.0.data)
    {
        let w = if cfg.gamma == T::one() {
            *r
        } else {
            r.powf(cfg.gamma)
        };
        *y_out = (*y_cf * w + *y_out * (T::one() - w)) * *g;
    }
    Ok(out)
}

/// Ideal ratio mask on mel bands, interpolated back to bins:
/// `g_b = sqrt(E_s / (E_s + E_n))` with `E_n = max(E_y - E_s, 0) + ε`.
pub fn oracle_gain<T: Real>(
    noisy: &Spectrogram<T>,
    clean: &Spectrogram<T>,
    fb: &MelFilterbank<T>,
) -> Result<BinMap<T>> {
    noisy.ensure_same_shape(clean, "clean spectrogram")?;
    if fb.bins() != noisy.bins() {
        return Err(Error::Shape(format!(
            "mel filterbank has {} bins, spectrogram {}",
            fb.bins(),
            noisy.bins()
        )));
    }
    let eps = T::lit(IRM_EPSILON);
    let mut out = BinMap::filled(noisy.bins(), noisy.frame_count(), T::zero());
    for t in 0..noisy.frame_count() {
        let power = |c: &[Complex<T>]| c.iter().map(|v| v.norm_sqr()).collect::<Vec<T>>();
        let e_clean = fb.band_energies(&power(clean.frame(t)));
        let e_noisy = fb.band_energies(&power(noisy.frame(t)));
        let per_band: Vec<T> = e_clean
            .iter()
            .zip(&e_noisy)
            .map(|(&s, &y)| {
                let n = (y - s).max(T::zero()) + eps;
                (s / (s + n)).sqrt()
            })
            .collect();
        for (dst, g) in out.frame_mut(t).iter_mut().zip(fb.interpolate(&per_band)) {
            *dst = g.max(T::zero()).min(T::one());
        }
    }
    Ok(out)
}

/// Granularity of the oracle strength.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StrengthPooling {
    #[default]
    PerBin,
    /// Mel-band average of the per-bin values, interpolated back to bins.
    MelBands,
}

/// Per-bin least-squares blend weight:
/// `argmin_r |r·Y_cf + (1-r)·Y - S|² = Re⟨S - Y, Y_cf - Y⟩ / |Y_cf - Y|²`, clamped to `[0, 1]`.
pub fn oracle_strength<T: Real>(
    noisy: &Spectrogram<T>,
    filtered: &Spectrogram<T>,
    clean: &Spectrogram<T>,
) -> Result<BinMap<T>> {
    noisy.ensure_same_shape(filtered, "filtered spectrogram")?;
    noisy.ensure_same_shape(clean, "clean spectrogram")?;
    let floor = T::lit(STRENGTH_FLOOR);
    let data = noisy
        .as_slice()
        .iter()
        .zip(filtered.as_slice())
        .zip(clean.as_slice())
        .map(|((&y, &y_cf), &s)| {
            let dir = y_cf - y;
            let denom = dir.norm_sqr();
            if denom < floor {
                T::zero()
            } else {
                ((s - y) * dir.conj()).re / denom
            }
            .max(T::zero())
            .min(T::one())
        })
        .collect();
    Ok(BinMap {
        bins: noisy.bins(),
        data,
    })
}

fn pool_bands<T: Real>(map: &BinMap<T>, fb: &MelFilterbank<T>) -> BinMap<T> {
    let mut out = map.clone();
    for t in 0..map.frame_count() {
        let bands = fb.band_average(map.frame(t));
        out.frame_mut(t).copy_from_slice(&fb.interpolate(&bands));
    }
    out
}

/// What a provider sees when asked for `R` or `G`.
pub struct ProviderInput<'a, T> {
    pub noisy: &'a Spectrogram<T>,
    pub filtered: &'a Spectrogram<T>,
    pub clean: Option<&'a Spectrogram<T>>,
    pub mel: &'a MelFilterbank<T>,
    pub track: &'a F0Track<T>,
}

impl<T: Real> ProviderInput<'_, T> {
    fn require_clean(&self, who: &str) -> Result<&Spectrogram<T>> {
        self.clean
            .ok_or_else(|| Error::Config(format!("{who} needs a clean reference")))
    }
}

/// Source of the sub-band gain `G`; the integration point for a trained model.
pub trait GainProvider<T: Real> {
    fn gain(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>>;
}

/// Source of the filter strength `R`.
pub trait StrengthProvider<T: Real> {
    fn strength(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OracleGain;

impl<T: Real> GainProvider<T> for OracleGain {
    fn gain(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        oracle_gain(input.noisy, input.require_clean("oracle gain")?, input.mel)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OracleStrength {
    pub pooling: StrengthPooling,
}

impl<T: Real> StrengthProvider<T> for OracleStrength {
    fn strength(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        let r = oracle_strength(
            input.noisy,
            input.filtered,
            input.require_clean("oracle strength")?,
        )?;
        Ok(match self.pooling {
            StrengthPooling::PerBin => r,
            StrengthPooling::MelBands => pool_bands(&r, input.mel),
        })
    }
}

/// The same value in every bin and frame.
#[derive(Clone, Copy, Debug)]
pub struct Constant<T>(pub T);

impl<T: Real> GainProvider<T> for Constant<T> {
    fn gain(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        Ok(BinMap::filled(
            input.noisy.bins(),
            input.noisy.frame_count(),
            self.0,
        ))
    }
}

impl<T: Real> StrengthProvider<T> for Constant<T> {
    fn strength(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        Ok(BinMap::filled(
            input.noisy.bins(),
            input.noisy.frame_count(),
            self.0,
        ))
    }
}

/// Precomputed `bins × frames` map, usually read from a matrix file.
#[derive(Clone, Debug)]
pub struct Precomputed<T> {
    map: BinMap<T>,
    label: String,
}

impl<T: Real> Precomputed<T> {
    pub fn new(matrix: &Matrix<T>, label: impl Into<String>) -> Self {
        Self {
            map: BinMap::from_matrix(matrix),
            label: label.into(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(Self::new(&read_matrix(path)?, path.display().to_string()))
    }

    fn checked(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        self.map.require_shape(input.noisy.shape(), &self.label)?;
        Ok(self.map.clone())
    }
}

impl<T: Real> GainProvider<T> for Precomputed<T> {
    fn gain(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        self.checked(input)
    }
}

impl<T: Real> StrengthProvider<T> for Precomputed<T> {
    fn strength(&self, input: &ProviderInput<'_, T>) -> Result<BinMap<T>> {
        self.checked(input)
    }
}

/// Where the per-frame F0 decisions come from.
#[derive(Clone, Debug)]
pub enum TrackSource<T> {
    /// Run the built-in estimator on the noisy input.
    Estimate,
    Given(F0Track<T>),
}

#[derive(Clone, Debug)]
pub struct EnhanceConfig<T> {
    pub frame_size: usize,
    pub hop_size: usize,
    /// Comb filter order `M`.
    pub order: usize,
    pub taps: Option<Vec<T>>,
    pub blend: BlendConfig<T>,
    pub estimator: EstimatorConfig<T>,
    pub window: Window,
    /// Upper clamp on `G`.
    pub g_max: T,
}

impl<T: Real> Default for EnhanceConfig<T> {
    fn default() -> Self {
        Self {
            frame_size: FrameConfig::DEFAULT_FRAME_SIZE,
            hop_size: FrameConfig::DEFAULT_HOP_SIZE,
            order: 1,
            taps: None,
            blend: BlendConfig::default(),
            estimator: EstimatorConfig::default(),
            window: Window::SqrtHann,
            g_max: T::one(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Diagnostics<T> {
    pub track: F0Track<T>,
    /// Only when the track was estimated.
    pub posteriors: Option<Vec<Vec<T>>>,
    pub strength: StrengthMap<T>,
    pub gain: GainMap<T>,
    /// `N_f + M·T_max` samples.
    pub latency_samples: usize,
    pub filter_macs: u64,
}

#[derive(Clone, Debug)]
pub struct Enhanced<T> {
    pub output: AudioBuffer<T>,
    /// Resynthesis of `Y ∘ G`, the gain-only branch.
    pub gain_only: AudioBuffer<T>,
    pub output_spectrum: Spectrogram<T>,
    pub gain_only_spectrum: Spectrogram<T>,
    pub diagnostics: Diagnostics<T>,
}

/// Batch enhancer. Holds the filter bank, mel filterbank and FFT plans.
pub struct Enhancer<T: Real> {
    cfg: EnhanceConfig<T>,
    frames: FrameConfig,
    grid: F0Grid<T>,
    bank: CombFilterBank<T>,
    mel: MelFilterbank<T>,
    stft: Stft<T>,
}

impl<T: Real> Enhancer<T> {
    pub fn new(grid: &F0Grid<T>, cfg: EnhanceConfig<T>) -> Result<Self> {
        if grid.sample_rate() != T::lit(crate::audio::PIPELINE_SAMPLE_RATE as f64) {
            return Err(Error::Config(format!(
                "grid sample rate {} is not 48000",
                grid.sample_rate()
            )));
        }
        BlendConfig::new(cfg.blend.gamma)?;
        cfg.estimator.validate(grid)?;
        let bank = CombFilterBank::new(grid, cfg.order, cfg.taps.clone())?;
        let frames = FrameConfig::new(cfg.frame_size, cfg.hop_size, bank.pad())?;
        let mel = MelFilterbank::default_for(&frames);
        let stft = Stft::new(frames.fft_size());
        Ok(Self {
            cfg,
            frames,
            grid: grid.clone(),
            bank,
            mel,
            stft,
        })
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.frames
    }

    pub fn bank(&self) -> &CombFilterBank<T> {
        &self.bank
    }

    pub fn grid(&self) -> &F0Grid<T> {
        &self.grid
    }

    pub fn mel(&self) -> &MelFilterbank<T> {
        &self.mel
    }

    /// Windowed spectrogram with the pipeline's framing.
    pub fn analyze(&self, audio: &AudioBuffer<T>) -> Result<Spectrogram<T>> {
        audio.require_pipeline_rate()?;
        Ok(self
            .stft
            .analyze(&frame_signal(audio, &self.frames)?, self.cfg.window))
    }

    pub fn synthesize(&self, spec: &Spectrogram<T>, len: usize) -> Result<AudioBuffer<T>> {
        self.stft
            .synthesize(spec, &self.frames, self.cfg.window, Some(len))
    }

    pub fn enhance(
        &self,
        noisy: &AudioBuffer<T>,
        track: TrackSource<T>,
        gain: &dyn GainProvider<T>,
        strength: &dyn StrengthProvider<T>,
        clean: Option<&AudioBuffer<T>>,
    ) -> Result<Enhanced<T>> {
        noisy.require_pipeline_rate()?;
        if let Some(c) = clean {
            c.require_pipeline_rate()?;
            if c.len() != noisy.len() {
                return Err(Error::Shape(format!(
                    "clean reference has {} samples, noisy input {}",
                    c.len(),
                    noisy.len()
                )));
            }
        }
        let frames = frame_signal(noisy, &self.frames)?;
        let chunks = chunk_signal(noisy, &self.frames)?;
        let (track, posteriors) = match track {
            TrackSource::Given(t) => {
                t.require_frames(frames.frame_count())?;
                (t, None)
            }
            TrackSource::Estimate => {
                let (t, p) = estimate_track(noisy, &self.grid, &self.frames, &self.cfg.estimator)?;
                (t, Some(p))
            }
        };
        let filtered = filter_inference(&self.bank, &chunks, &track)?;

        let y = self.stft.analyze(&frames, self.cfg.window);
        let y_cf = self.stft.analyze(&filtered.frames, self.cfg.window);
        let s = clean.map(|c| self.analyze(c)).transpose()?;
        let input = ProviderInput {
            noisy: &y,
            filtered: &y_cf,
            clean: s.as_ref(),
            mel: &self.mel,
            track: &track,
        };
        let gain = GainMap::new(gain.gain(&input)?, self.cfg.g_max)?;
        let strength = StrengthMap::new(strength.strength(&input)?, &track, &self.grid)?;

        let y_out = blend(&y, &y_cf, &strength, &gain, &self.cfg.blend)?;
        let mut y_gain = y.clone();
        for (v, g) in y_gain.as_mut_slice().iter_mut().zip(gain.map().as_slice()) {
            *v *= *g;
        }
        let output = self.synthesize(&y_out, noisy.len())?;
        let gain_only = self.synthesize(&y_gain, noisy.len())?;
        Ok(Enhanced {
            output,
            gain_only,
            output_spectrum: y_out,
            gain_only_spectrum: y_gain,
            diagnostics: Diagnostics {
                track,
                posteriors,
                strength,
                gain,
                latency_samples: self.frames.latency_samples(),
                filter_macs: filtered.macs,
            },
        })
    }
}
