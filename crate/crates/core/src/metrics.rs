//! Training losses as measurable quantities, plus SDR/SNR.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex;

use crate::audio::{AudioBuffer, Spectrogram};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Magnitudes below this compress to exactly zero.
pub const COMPRESS_FLOOR: f64 = 1e-12;
/// Upper cap on SDR/SNR, reached by exact estimates.
pub const DB_CAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig<T> {
    /// Magnitude compression exponent `c`.
    pub compression: T,
    /// Weight `λ` of the complex term.
    pub magnitude_weight: T,
    /// Weight `α` of the pitch loss.
    pub pitch_weight: T,
}

impl<T: Real> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            compression: T::lit(0.3),
            magnitude_weight: T::lit(0.3),
            pitch_weight: T::lit(0.1),
        }
    }
}

impl<T: Real> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.compression > T::zero() && self.compression <= T::one()) {
            return Err(Error::Config(format!(
                "compression {} outside (0, 1]",
                self.compression
            )));
        }
        if !(self.magnitude_weight >= T::zero() && self.magnitude_weight <= T::one()) {
            return Err(Error::Config(format!(
                "λ = {} outside [0, 1]",
                self.magnitude_weight
            )));
        }
        if !(self.pitch_weight >= T::zero()) || !self.pitch_weight.is_finite() {
            return Err(Error::Config(format!(
                "α = {} must be nonnegative",
                self.pitch_weight
            )));
        }
        Ok(())
    }
}

/// `|S|^c · e^{j·arg S}` per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedSpectrum<T>(Spectrogram<T>);

impl<T: Real> CompressedSpectrum<T> {
    pub fn data(&self) -> &Spectrogram<T> {
        &self.0
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.0.as_slice().iter().map(|v| v.norm()).collect()
    }
}

pub fn compress<T: Real>(spec: &Spectrogram<T>, c: T) -> Result<CompressedSpectrum<T>> {
    if !(c > T::zero() && c <= T::one()) {
        return Err(Error::Config(format!("compression {c} outside (0, 1]")));
    }
    let mut out = spec.clone();
    for v in out.as_mut_slice() {
        let mag = v.norm();
        *v = if mag < T::lit(COMPRESS_FLOOR) {
            Complex::new(T::zero(), T::zero())
        } else {
            *v * (mag.powf(c) / mag)
        };
    }
    Ok(CompressedSpectrum(out))
}

/// Mean of `ReLU(target - estimate)²`: penalizes under-estimation only.
pub fn asym_mse<T: Real>(target: &[T], estimate: &[T]) -> Result<T> {
    if target.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "target has {} entries, estimate {}",
            target.len(),
            estimate.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::Shape("empty input".into()));
    }
    let sum: T = target
        .iter()
        .zip(estimate)
        .map(|(&t, &e)| {
            let d = (t - e).max(T::zero());
            d * d
        })
        .sum();
    Ok(sum / T::from_usize_lossy(target.len()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeLoss<T> {
    pub total: T,
    /// Asymmetric magnitude term of the gain-only estimate.
    pub gain_only_magnitude: T,
    /// Asymmetric magnitude term of the final estimate.
    pub magnitude: T,
    /// Mean `|S^c - Ŝ^c|²`.
    pub complex: T,
}

/// `((1-λ)/2)·(asym(|S|^c, |Ŝ₀|^c) + asym(|S|^c, |Ŝ|^c)) + λ·mean|S^c - Ŝ^c|²`.
pub fn se_loss<T: Real>(
    clean: &Spectrogram<T>,
    out: &Spectrogram<T>,
    gains_only: &Spectrogram<T>,
    cfg: &LossConfig<T>,
) -> Result<SeLoss<T>> {
    cfg.validate()?;
    clean.ensure_same_shape(out, "enhanced spectrogram")?;
    clean.ensure_same_shape(gains_only, "gain-only spectrogram")?;
    let s = compress(clean, cfg.compression)?;
    let s_hat = compress(out, cfg.compression)?;
    let s0 = compress(gains_only, cfg.compression)?;
    let target = s.magnitudes();
    let gain_only_magnitude = asym_mse(&target, &s0.magnitudes())?;
    let magnitude = asym_mse(&target, &s_hat.magnitudes())?;
    let n = T::from_usize_lossy(target.len());
    let complex =
        s.0.as_slice()
            .iter()
            .zip(s_hat.0.as_slice())
            .map(|(a, b)| (*a - *b).norm_sqr())
            .sum::<T>()
            / n;
    let lambda = cfg.magnitude_weight;
    let total =
        (T::one() - lambda) / T::lit(2.0) * (gain_only_magnitude + magnitude) + lambda * complex;
    Ok(SeLoss {
        total,
        gain_only_magnitude,
        magnitude,
        complex,
    })
}

/// `L_se + α·L_pitch`.
pub fn total_loss<T: Real>(se: T, pitch: T, cfg: &LossConfig<T>) -> T {
    se + cfg.pitch_weight * pitch
}

fn require_pair<T: Real>(reference: &AudioBuffer<T>, estimate: &AudioBuffer<T>) -> Result<T> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let energy: T = reference.samples().iter().map(|&v| v * v).sum();
    if !(energy > T::zero()) {
        return Err(Error::Domain("reference signal is all zeros".into()));
    }
    Ok(energy)
}

fn capped_db<T: Real>(signal: T, error: T) -> T {
    let cap = T::lit(DB_CAP);
    if error <= T::zero() {
        return cap;
    }
    (T::lit(10.0) * (signal / error).log10()).min(cap)
}

/// Scale-invariant SDR: `10·log10(|β·s|² / |β·s - ŝ|²)` with `β = ⟨ŝ, s⟩ / |s|²`.
pub fn sdr<T: Real>(reference: &AudioBuffer<T>, estimate: &AudioBuffer<T>) -> Result<T> {
    let energy = require_pair(reference, estimate)?;
    let (s, e) = (reference.samples(), estimate.samples());
    let beta = s.iter().zip(e).map(|(&a, &b)| a * b).sum::<T>() / energy;
    let target = beta * beta * energy;
    let error: T = s
        .iter()
        .zip(e)
        .map(|(&a, &b)| {
            let d = beta * a - b;
            d * d
        })
        .sum();
    Ok(capped_db(target, error))
}

/// Plain SNR `10·log10(|s|² / |s - ŝ|²)`.
pub fn snr<T: Real>(reference: &AudioBuffer<T>, estimate: &AudioBuffer<T>) -> Result<T> {
    let energy = require_pair(reference, estimate)?;
    let error: T = reference
        .samples()
        .iter()
        .zip(estimate.samples())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(capped_db(energy, error))
}

/// Ordered named values, printed as `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.entries.push((key.into(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            writeln!(s, "{k}={v:.6}").expect("write to string");
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
        w.write_record(["metric", "value"])
            .map_err(|e| Error::Csv(e.to_string()))?;
        for (k, v) in &self.entries {
            w.write_record([k.as_str(), &v.to_string()])
                .map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
