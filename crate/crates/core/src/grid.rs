//! Discrete F0 candidate lattice, label vectors and per-frame F0 tracks.
//!
//! Candidates are equally spaced in *period*: index 0 is the longest period
//! (lowest frequency) and index `bins - 1` the shortest. Index `bins` is the
//! unvoiced slot, so every label or posterior vector has `bins + 1` entries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Clamp applied to estimates inside [`bce_loss`].
pub const BCE_EPSILON: f64 = 1e-7;

/// Width of the Gaussian label: `exp(-(i - n)² / 50)`.
pub const LABEL_SPREAD: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct F0Grid<T> {
    sample_rate: T,
    f_min: T,
    f_max: T,
    periods: Vec<T>,
}

impl<T: Real> F0Grid<T> {
    pub const DEFAULT_F_MIN: f64 = 62.5;
    pub const DEFAULT_F_MAX: f64 = 500.0;
    pub const DEFAULT_BINS: usize = 225;

    pub fn new(sample_rate: T, f_min: T, f_max: T, bins: usize) -> Result<Self> {
        if !(f_min > T::zero() && f_min < f_max && f_max <= sample_rate / T::lit(2.0)) {
            return Err(Error::Config(format!(
                "F0 range [{f_min}, {f_max}] must satisfy 0 < min < max <= fs/2"
            )));
        }
        if bins < 2 {
            return Err(Error::Config(format!(
                "need at least 2 F0 bins, got {bins}"
            )));
        }
        let t_max = sample_rate / f_min;
        let t_min = sample_rate / f_max;
        let step = (t_max - t_min) / T::from_usize_lossy(bins - 1);
        let mut periods: Vec<T> = (0..bins)
            .map(|i| t_max - T::from_usize_lossy(i) * step)
            .collect();
        periods[bins - 1] = t_min;
        Ok(Self {
            sample_rate,
            f_min,
            f_max,
            periods,
        })
    }

    pub fn sample_rate(&self) -> T {
        self.sample_rate
    }

    pub fn f_min(&self) -> T {
        self.f_min
    }

    pub fn f_max(&self) -> T {
        self.f_max
    }

    /// Number of voiced candidates.
    pub fn bins(&self) -> usize {
        self.periods.len()
    }

    pub fn unvoiced_index(&self) -> usize {
        self.periods.len()
    }

    /// Length of label, one-hot and posterior vectors.
    pub fn label_dim(&self) -> usize {
        self.periods.len() + 1
    }

    pub fn periods(&self) -> &[T] {
        &self.periods
    }

    pub fn period(&self, index: usize) -> T {
        self.periods[index]
    }

    pub fn t_max(&self) -> T {
        self.periods[0]
    }

    pub fn t_min(&self) -> T {
        self.periods[self.bins() - 1]
    }

    pub fn period_step(&self) -> T {
        (self.t_max() - self.t_min()) / T::from_usize_lossy(self.bins() - 1)
    }

    pub fn frequency(&self, index: usize) -> T {
        self.sample_rate / self.periods[index]
    }

    pub fn is_voiced(&self, index: usize) -> bool {
        index < self.bins()
    }

    /// Grid index whose period is nearest to `fs / f0`. Ties go to the longer
    /// period; frequencies outside the range clamp to the end bins.
    pub fn nearest_index(&self, f0: T) -> Result<usize> {
        if !(f0 > T::zero()) || !f0.is_finite() {
            return Err(Error::Domain(format!(
                "F0 must be positive and finite, got {f0}"
            )));
        }
        self.nearest_period_index(self.sample_rate / f0)
    }

    pub fn nearest_period_index(&self, period: T) -> Result<usize> {
        if !(period > T::zero()) || !period.is_finite() {
            return Err(Error::Domain(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        let last = self.bins() - 1;
        if period >= self.t_max() {
            return Ok(0);
        }
        if period <= self.t_min() {
            return Ok(last);
        }
        let pos = ((self.t_max() - period) / self.period_step()).floor();
        let lo = pos.to_usize().unwrap_or(0).min(last);
        let mut best = lo;
        for i in lo.saturating_sub(1)..=(lo + 2).min(last) {
            if (self.periods[i] - period).abs() < (self.periods[best] - period).abs() {
                best = i;
            } else if (self.periods[i] - period).abs() == (self.periods[best] - period).abs() {
                best = best.min(i);
            }
        }
        Ok(best)
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index > self.unvoiced_index() {
            return Err(Error::Domain(format!(
                "grid index {index} outside [0, {}]",
                self.unvoiced_index()
            )));
        }
        Ok(())
    }

    /// Gaussian-smoothed target for a voiced index, or a one-hot unvoiced
    /// target for `index == bins()`. Voiced labels leave the unvoiced slot at 0.
    pub fn gaussian_label(&self, index: usize) -> Result<F0Label<T>> {
        self.check_index(index)?;
        let mut values = vec![T::zero(); self.label_dim()];
        if index == self.unvoiced_index() {
            values[index] = T::one();
        } else {
            let spread = T::lit(LABEL_SPREAD);
            for (i, v) in values.iter_mut().take(self.bins()).enumerate() {
                let d = T::from_usize_lossy(i.abs_diff(index));
                *v = (-(d * d) / spread).exp();
            }
        }
        Ok(F0Label(values))
    }

    pub fn one_hot(&self, index: usize) -> Result<Vec<T>> {
        self.check_index(index)?;
        let mut v = vec![T::zero(); self.label_dim()];
        v[index] = T::one();
        Ok(v)
    }
}

impl<T: Real> Default for F0Grid<T> {
    fn default() -> Self {
        Self::new(
            T::lit(48_000.0),
            T::lit(Self::DEFAULT_F_MIN),
            T::lit(Self::DEFAULT_F_MAX),
            Self::DEFAULT_BINS,
        )
        .expect("default grid is valid")
    }
}

/// Target vector over the candidates plus the unvoiced slot.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Label<T>(pub Vec<T>);

impl<T> F0Label<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }
}

/// Binary cross-entropy summed over the label dimension. Estimates are
/// clamped to `[ε, 1 - ε]`.
pub fn bce_loss<T: Real>(label: &[T], estimate: &[T]) -> Result<T> {
    if label.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "label has {} entries, estimate {}",
            label.len(),
            estimate.len()
        )));
    }
    let eps = T::lit(BCE_EPSILON);
    let one = T::one();
    Ok(-label
        .iter()
        .zip(estimate)
        .map(|(&f, &e)| {
            let e = e.max(eps).min(one - eps);
            f * e.ln() + (one - f) * (one - e).ln()
        })
        .sum::<T>())
}

/// Mean of [`bce_loss`] over frames.
pub fn bce_loss_mean<T: Real>(labels: &[Vec<T>], estimates: &[Vec<T>]) -> Result<T> {
    if labels.len() != estimates.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} label frames vs {} estimate frames",
            labels.len(),
            estimates.len()
        )));
    }
    let mut total = T::zero();
    for (l, e) in labels.iter().zip(estimates) {
        total += bce_loss(l, e)?;
    }
    Ok(total / T::from_usize_lossy(labels.len()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackFrame<T> {
    pub grid_index: usize,
    /// Hertz; zero for unvoiced frames.
    pub f0: T,
    pub voicing: T,
}

/// One grid decision per pipeline frame.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Track<T> {
    frames: Vec<TrackFrame<T>>,
}

impl<T: Real> F0Track<T> {
    pub fn new(frames: Vec<TrackFrame<T>>, grid: &F0Grid<T>) -> Result<Self> {
        for (t, f) in frames.iter().enumerate() {
            grid.check_index(f.grid_index)?;
            let unvoiced = f.grid_index == grid.unvoiced_index();
            if unvoiced != (f.f0 == T::zero()) {
                return Err(Error::Validation(format!(
                    "frame {t}: grid index {} inconsistent with f0 {}",
                    f.grid_index, f.f0
                )));
            }
        }
        Ok(Self { frames })
    }

    /// Track from bare indices; voiced frames get voicing 1 and the grid frequency.
    pub fn from_indices(indices: &[usize], grid: &F0Grid<T>) -> Result<Self> {
        let frames = indices
            .iter()
            .map(|&i| {
                grid.check_index(i)?;
                Ok(if grid.is_voiced(i) {
                    TrackFrame {
                        grid_index: i,
                        f0: grid.frequency(i),
                        voicing: T::one(),
                    }
                } else {
                    TrackFrame {
                        grid_index: i,
                        f0: T::zero(),
                        voicing: T::zero(),
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { frames })
    }

    pub fn unvoiced(frame_count: usize, grid: &F0Grid<T>) -> Self {
        Self::from_indices(&vec![grid.unvoiced_index(); frame_count], grid)
            .expect("unvoiced index is valid")
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[TrackFrame<T>] {
        &self.frames
    }

    pub fn indices(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.grid_index).collect()
    }

    pub fn require_frames(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::Shape(format!(
                "F0 track has {} frames, expected N_t = {expected}",
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    frame: usize,
    grid_index: usize,
    f0_hz: f64,
    voicing: f64,
}

/// Writes `frame,grid_index,f0_hz,voicing` rows.
pub fn write_track_csv<T: Real>(track: &F0Track<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    for (frame, f) in track.frames().iter().enumerate() {
        w.serialize(TrackRow {
            frame,
            grid_index: f.grid_index,
            f0_hz: f.f0.as_f64(),
            voicing: f.voicing.as_f64(),
        })
        .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_track_csv<T: Real>(path: impl AsRef<Path>, grid: &F0Grid<T>) -> Result<F0Track<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e.to_string()),
    })?;
    let header = r.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if header != vec!["frame", "grid_index", "f0_hz", "voicing"] {
        return Err(Error::Csv(format!(
            "expected header frame,grid_index,f0_hz,voicing, found {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut frames = Vec::new();
    for (i, row) in r.deserialize::<TrackRow>().enumerate() {
        let row = row.map_err(|e| Error::Csv(e.to_string()))?;
        if row.frame != i {
            return Err(Error::Csv(format!(
                "row {i} has frame number {}",
                row.frame
            )));
        }
        frames.push(TrackFrame {
            grid_index: row.grid_index,
            f0: T::lit(row.f0_hz),
            voicing: T::lit(row.voicing),
        });
    }
    F0Track::new(frames, grid)
}
