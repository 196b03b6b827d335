//! Comb filter bank over the F0 grid.
//!
//! Each voiced candidate `i` with period `T_i` owns the symmetric non-causal
//! FIR `Σ_{k=-M..M} w_k z^{-k·T_i}`. The bank stores these as one weight row
//! per candidate, `K = 2·M·T_max + 1` taps long, with tap `w_{±k}` at column
//! `M·T_max ± k·T_i`. The unvoiced row is an identity (1 at the center).
//!
//! Two filtering paths are provided:
//!
//! * [`filter_all_candidates`] / [`reference_filter`] correlate every chunk with
//!   every weight row and then pick one candidate per frame through a one-hot
//!   contraction. This is the expensive reference.
//! * [`filter_inference`] evaluates only the selected candidate, reading the
//!   `2M+1` shifted slices `X_in[M·T_max - k·T .. M·T_max - k·T + N_f]`.
//!
//! Both report the multiply-adds they actually executed.

use num_complex::Complex;
use rayon::prelude::*;

use crate::audio::{ChunkedSignal, FramedSignal, Spectrogram, Stft, Window};
use crate::error::{Error, Result};
use crate::grid::{F0Grid, F0Track};
use crate::matrix::Matrix;
use crate::scalar::Real;

const TAP_TOLERANCE: f64 = 1e-9;
/// Tolerance on the tap sum of a bank read back from an `f32` weight file.
const LOADED_TAP_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CombFilterBank<T> {
    order: usize,
    taps: Vec<T>,
    grid: F0Grid<T>,
    periods: Vec<usize>,
    t_max: usize,
    weights: Matrix<T>,
    /// Nonzero `(column, weight)` entries of each weight row.
    support: Vec<Vec<(usize, T)>>,
}

/// Normalized Hann taps for order `m`: the `2m+1` interior points of a
/// `2m+3`-point Hann window, scaled to unit sum.
pub fn hann_taps<T: Real>(order: usize) -> Vec<T> {
    let m = order as f64;
    let raw: Vec<f64> = (-(order as isize)..=order as isize)
        .map(|k| 0.5 + 0.5 * (std::f64::consts::PI * k as f64 / (m + 1.0)).cos())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| T::lit(w / total)).collect()
}

fn validate_taps<T: Real>(taps: &[T], order: usize, tolerance: f64) -> Result<()> {
    if taps.len() != 2 * order + 1 {
        return Err(Error::Validation(format!(
            "order {order} needs {} taps, got {}",
            2 * order + 1,
            taps.len()
        )));
    }
    let tol = T::lit(tolerance);
    for k in 0..order {
        let (a, b) = (taps[k], taps[taps.len() - 1 - k]);
        if (a - b).abs() > tol {
            return Err(Error::Validation(format!(
                "taps are not symmetric: w[-{}] = {a}, w[{}] = {b}",
                order - k,
                order - k
            )));
        }
    }
    let sum: T = taps.iter().copied().sum();
    if (sum - T::one()).abs() > tol || taps.iter().any(|t| !t.is_finite()) {
        return Err(Error::Validation(format!(
            "taps must sum to 1, sum is {sum}"
        )));
    }
    Ok(())
}

impl<T: Real> CombFilterBank<T> {
    /// Builds the bank for `grid` with filter order `order` (`M`). Without
    /// explicit taps the normalized Hann taps are used.
    pub fn new(grid: &F0Grid<T>, order: usize, taps: Option<Vec<T>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation("filter order must be at least 1".into()));
        }
        let taps = match taps {
            Some(t) => {
                validate_taps(&t, order, TAP_TOLERANCE)?;
                t
            }
            None => hann_taps(order),
        };
        let to_samples = |p: T| p.round().to_usize().expect("period fits in usize");
        let periods: Vec<usize> = grid.periods().iter().map(|&p| to_samples(p)).collect();
        let t_max = to_samples(grid.t_max());
        let k_len = 2 * order * t_max + 1;
        let center = order * t_max;

        let mut weights = Matrix::filled(grid.label_dim(), k_len, T::zero());
        for (i, &period) in periods.iter().enumerate() {
            for (k, &w) in taps.iter().enumerate() {
                // taps[k] is w_{k-M}; its column is center + (k - M)·T
                let column = center + k * period - order * period;
                let row = weights.row_mut(i);
                row[column] += w;
            }
        }
        weights.set(grid.unvoiced_index(), center, T::one());

        let support = (0..weights.rows())
            .map(|i| {
                weights
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != T::zero())
                    .map(|(j, &w)| (j, w))
                    .collect()
            })
            .collect();

        Ok(Self {
            order,
            taps,
            grid: grid.clone(),
            periods,
            t_max,
            weights,
            support,
        })
    }

    /// Rebuilds a bank from a `(N+1) × K` weight dump (for example one holding
    /// externally trained taps). The rows must follow the comb layout with a
    /// single shared tap set; taps are renormalized to unit sum after the
    /// `f32` round trip.
    pub fn from_weight_matrix(grid: &F0Grid<T>, order: usize, weights: &Matrix<T>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation("filter order must be at least 1".into()));
        }
        let t_max = grid
            .t_max()
            .round()
            .to_usize()
            .expect("period fits in usize");
        let expected = (grid.label_dim(), 2 * order * t_max + 1);
        if weights.shape() != expected {
            return Err(Error::Shape(format!(
                "weight matrix is {:?}, expected {expected:?}",
                weights.shape()
            )));
        }
        let center = order * t_max;
        let p0 = grid
            .period(0)
            .round()
            .to_usize()
            .expect("period fits in usize");
        let taps: Vec<T> = (0..=2 * order)
            .map(|k| weights.get(0, center + k * p0 - order * p0))
            .collect();
        validate_taps(&taps, order, LOADED_TAP_TOLERANCE)?;
        let sum: T = taps.iter().copied().sum();
        let mut taps: Vec<T> = taps.into_iter().map(|w| w / sum).collect();
        // force exact symmetry after renormalization
        for k in 0..order {
            let mean = (taps[k] + taps[2 * order - k]) / T::lit(2.0);
            taps[k] = mean;
            taps[2 * order - k] = mean;
        }
        let bank = Self::new(grid, order, Some(taps))?;
        let tol = T::lit(LOADED_TAP_TOLERANCE);
        for i in 0..expected.0 {
            for j in 0..expected.1 {
                let (a, b) = (weights.get(i, j), bank.weights.get(i, j));
                if (a - b).abs() > tol {
                    return Err(Error::Validation(format!(
                        "weight ({i}, {j}) = {a} does not follow the comb layout (expected {b})"
                    )));
                }
            }
        }
        Ok(bank)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `w_{-M} .. w_M`.
    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn grid(&self) -> &F0Grid<T> {
        &self.grid
    }

    /// Candidate periods rounded to whole samples.
    pub fn rounded_periods(&self) -> &[usize] {
        &self.periods
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Kernel length `K = 2·M·T_max + 1`.
    pub fn kernel_len(&self) -> usize {
        self.weights.cols()
    }

    /// Zero padding each chunk needs on both sides, `M·T_max`.
    pub fn pad(&self) -> usize {
        self.order * self.t_max
    }

    pub fn candidates(&self) -> usize {
        self.weights.rows()
    }

    /// The `(N+1) × K` slice `W[:, 0, :, 0]` of the weight tensor.
    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    /// `|Σ_k w_k e^{-jωkT}|` at `n_points` frequencies evenly covering `[0, fs/2]`.
    pub fn frequency_response(&self, candidate: usize, n_points: usize) -> Result<Vec<(T, T)>> {
        if candidate >= self.grid.bins() {
            return Err(Error::Domain(format!(
                "candidate {candidate} is not a voiced grid index (< {})",
                self.grid.bins()
            )));
        }
        let fs = self.grid.sample_rate();
        let period = T::from_usize_lossy(self.periods[candidate]);
        let denom = T::from_usize_lossy(n_points.saturating_sub(1).max(1));
        Ok((0..n_points)
            .map(|n| {
                let hz = fs / T::lit(2.0) * T::from_usize_lossy(n) / denom;
                (hz, self.response_magnitude(period, T::TAU() * hz / fs))
            })
            .collect())
    }

    fn response_magnitude(&self, period: T, omega: T) -> T {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (k, &w) in self.taps.iter().enumerate() {
            let shift =
                T::from_isize(k as isize - self.order as isize).expect("small integer") * period;
            acc += Complex::from_polar(w, -omega * shift);
        }
        acc.norm()
    }

    fn check_chunks(&self, chunks: &ChunkedSignal<T>) -> Result<()> {
        if chunks.pad() != self.pad() {
            return Err(Error::Shape(format!(
                "chunks padded by {}, bank needs M·T_max = {}",
                chunks.pad(),
                self.pad()
            )));
        }
        Ok(())
    }

    fn check_track(&self, chunks: &ChunkedSignal<T>, track: &F0Track<T>) -> Result<()> {
        track.require_frames(chunks.frame_count())?;
        if let Some(f) = track
            .frames()
            .iter()
            .find(|f| f.grid_index >= self.candidates())
        {
            return Err(Error::Domain(format!(
                "grid index {} outside bank",
                f.grid_index
            )));
        }
        Ok(())
    }

    /// Correlates one chunk with every weight row; `out` is candidate-major,
    /// `candidates × frame_size`. Returns executed multiply-adds.
    fn correlate_chunk(&self, chunk: &[T], frame_size: usize, out: &mut [T]) -> u64 {
        let mut macs = 0u64;
        for (row, dst) in self.support.iter().zip(out.chunks_exact_mut(frame_size)) {
            dst.iter_mut().for_each(|v| *v = T::zero());
            for &(j, w) in row {
                for (d, &x) in dst.iter_mut().zip(&chunk[j..j + frame_size]) {
                    *d += w * x;
                }
                macs += frame_size as u64;
            }
        }
        macs
    }

    /// Selected-candidate output for one chunk. Returns executed multiply-adds.
    fn filter_chunk(&self, chunk: &[T], frame_size: usize, index: usize, out: &mut [T]) -> u64 {
        let pad = self.pad();
        if index == self.grid.unvoiced_index() {
            out.copy_from_slice(&chunk[pad..pad + frame_size]);
            return 0;
        }
        let period = self.periods[index];
        out.iter_mut().for_each(|v| *v = T::zero());
        for (k, &w) in self.taps.iter().enumerate() {
            // w_{k-M} applied to the slice delayed by (k - M)·T
            let start = pad + self.order * period - k * period;
            for (d, &x) in out.iter_mut().zip(&chunk[start..start + frame_size]) {
                *d += w * x;
            }
        }
        (self.taps.len() * frame_size) as u64
    }
}

/// Output of every candidate filter for every frame, `(N+1) × N_f × N_t`.
#[derive(Clone, Debug)]
pub struct CandidateTensor<T> {
    candidates: usize,
    frame_size: usize,
    frame_count: usize,
    /// frame-major: `[t][i][s]`
    data: Vec<T>,
    pub macs: u64,
}

impl<T: Real> CandidateTensor<T> {
    pub fn candidates(&self) -> usize {
        self.candidates
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn get(&self, candidate: usize, s: usize, t: usize) -> T {
        self.data[(t * self.candidates + candidate) * self.frame_size + s]
    }

    /// Output of `candidate` for frame `t`.
    pub fn slice(&self, candidate: usize, t: usize) -> &[T] {
        let start = (t * self.candidates + candidate) * self.frame_size;
        &self.data[start..start + self.frame_size]
    }
}

/// Selected-candidate time-domain frames, `N_f × N_t`.
#[derive(Clone, Debug)]
pub struct FilteredFrames<T> {
    pub frames: FramedSignal<T>,
    pub macs: u64,
}

/// Valid-extent cross-correlation of every chunk with every weight row.
///
/// Holds the full tensor in memory; use [`reference_filter`] for long inputs.
pub fn filter_all_candidates<T: Real>(
    bank: &CombFilterBank<T>,
    chunks: &ChunkedSignal<T>,
) -> Result<CandidateTensor<T>> {
    bank.check_chunks(chunks)?;
    let (n_f, n_c) = (chunks.frame_size(), bank.candidates());
    let mut data = vec![T::zero(); chunks.frame_count() * n_c * n_f];
    let macs = data
        .par_chunks_mut(n_c * n_f)
        .enumerate()
        .map(|(t, out)| bank.correlate_chunk(chunks.chunk(t), n_f, out))
        .sum();
    Ok(CandidateTensor {
        candidates: n_c,
        frame_size: n_f,
        frame_count: chunks.frame_count(),
        data,
        macs,
    })
}

/// Contracts the candidate axis with each frame's one-hot vector.
fn contract_one_hot<T: Real>(candidates: &[T], frame_size: usize, one_hot: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for (slice, &h) in candidates.chunks_exact(frame_size).zip(one_hot) {
        for (d, &x) in out.iter_mut().zip(slice) {
            *d += x * h;
        }
    }
}

/// `Σ_i all[i, :, t] · one_hot(track[t])[i]` for every frame.
pub fn select_candidate<T: Real>(
    all: &CandidateTensor<T>,
    track: &F0Track<T>,
    grid: &F0Grid<T>,
) -> Result<FramedSignal<T>> {
    track.require_frames(all.frame_count)?;
    if grid.label_dim() != all.candidates {
        return Err(Error::Shape(format!(
            "grid has {} slots, tensor {} candidates",
            grid.label_dim(),
            all.candidates
        )));
    }
    let mut out = FramedSignal::zeros(all.frame_size, all.frame_count);
    let block = all.candidates * all.frame_size;
    for (t, dst) in out.frames_mut().enumerate() {
        let h = grid.one_hot(track.frames()[t].grid_index)?;
        contract_one_hot(
            &all.data[t * block..(t + 1) * block],
            all.frame_size,
            &h,
            dst,
        );
    }
    Ok(out)
}

/// [`filter_all_candidates`] followed by [`select_candidate`], computed one
/// frame at a time so memory stays at one `(N+1) × N_f` block per worker.
pub fn reference_filter<T: Real>(
    bank: &CombFilterBank<T>,
    chunks: &ChunkedSignal<T>,
    track: &F0Track<T>,
) -> Result<FilteredFrames<T>> {
    bank.check_chunks(chunks)?;
    bank.check_track(chunks, track)?;
    let n_f = chunks.frame_size();
    let n_c = bank.candidates();
    let mut frames = FramedSignal::zeros(n_f, chunks.frame_count());
    let macs = frames
        .frames_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map_init(
            || vec![T::zero(); n_c * n_f],
            |scratch, (t, dst)| {
                let macs = bank.correlate_chunk(chunks.chunk(t), n_f, scratch);
                let h = bank
                    .grid
                    .one_hot(track.frames()[t].grid_index)
                    .expect("index checked");
                contract_one_hot(scratch, n_f, &h, dst);
                macs
            },
        )
        .sum();
    Ok(FilteredFrames { frames, macs })
}

/// Filters each frame with its selected candidate only:
/// `Σ_k w_k · X_in[M·T_max - k·T .. M·T_max - k·T + N_f]`. Unvoiced frames pass
/// through unchanged at zero cost.
pub fn filter_inference<T: Real>(
    bank: &CombFilterBank<T>,
    chunks: &ChunkedSignal<T>,
    track: &F0Track<T>,
) -> Result<FilteredFrames<T>> {
    bank.check_chunks(chunks)?;
    bank.check_track(chunks, track)?;
    let n_f = chunks.frame_size();
    let mut frames = FramedSignal::zeros(n_f, chunks.frame_count());
    let mut macs = 0;
    for (t, dst) in frames.frames_mut().enumerate() {
        macs += bank.filter_chunk(chunks.chunk(t), n_f, track.frames()[t].grid_index, dst);
    }
    Ok(FilteredFrames { frames, macs })
}

/// Inference path evaluated in the frequency domain: one windowed FFT per
/// shifted slice, weighted and summed. Equal to the windowed spectrum of
/// [`filter_inference`] by linearity.
pub fn filter_inference_spectral<T: Real>(
    bank: &CombFilterBank<T>,
    chunks: &ChunkedSignal<T>,
    track: &F0Track<T>,
    window: Window,
) -> Result<Spectrogram<T>> {
    bank.check_chunks(chunks)?;
    bank.check_track(chunks, track)?;
    let n_f = chunks.frame_size();
    let stft = Stft::<T>::new(n_f);
    let w = window.coefficients::<T>(n_f);
    let pad = bank.pad();
    let mut spec = Spectrogram::zeros(n_f, chunks.frame_count());
    for t in 0..chunks.frame_count() {
        let chunk = chunks.chunk(t);
        let index = track.frames()[t].grid_index;
        let dst = spec.frame_mut(t);
        if index == bank.grid.unvoiced_index() {
            dst.copy_from_slice(&stft.forward_frame(&chunk[pad..pad + n_f], &w));
            continue;
        }
        let period = bank.periods[index];
        for (k, &tap) in bank.taps.iter().enumerate() {
            let start = pad + bank.order * period - k * period;
            let shifted = stft.forward_frame(&chunk[start..start + n_f], &w);
            for (d, s) in dst.iter_mut().zip(shifted) {
                *d += s * tap;
            }
        }
    }
    Ok(spec)
}

/// Multiply-adds of the reference path for `frames` frames:
/// every nonzero weight touches `N_f` outputs.
pub fn reference_cost<T: Real>(bank: &CombFilterBank<T>, frame_size: usize, frames: usize) -> u64 {
    let nonzeros: usize = bank.support.iter().map(Vec::len).sum();
    (nonzeros * frame_size * frames) as u64
}

/// Multiply-adds of the inference path: `(2M+1)·N_f` per voiced frame.
pub fn inference_cost<T: Real>(
    bank: &CombFilterBank<T>,
    frame_size: usize,
    voiced_frames: usize,
) -> u64 {
    (bank.taps.len() * frame_size * voiced_frames) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{chunk_signal, frame_signal, AudioBuffer, FrameConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank() -> CombFilterBank<f64> {
        CombFilterBank::new(&F0Grid::default(), 1, None).unwrap()
    }

    /// Small grid so the full candidate tensor stays tiny: periods 40..16 step 2.
    fn small() -> (F0Grid<f64>, CombFilterBank<f64>, FrameConfig) {
        let grid = F0Grid::new(48_000.0, 1200.0, 3000.0, 13).unwrap();
        let bank = CombFilterBank::new(&grid, 1, None).unwrap();
        let cfg = FrameConfig::new(64, 16, bank.pad()).unwrap();
        (grid, bank, cfg)
    }

    fn noise(n: usize, seed: u64) -> AudioBuffer<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::at_pipeline_rate((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn default_taps_and_geometry() {
        let b = bank();
        assert_eq!(b.taps(), &[0.25, 0.5, 0.25]);
        assert_eq!(b.kernel_len(), 1537);
        assert_eq!(b.weights().shape(), (226, 1537));
        let row = b.grid().nearest_period_index(96.0).unwrap();
        let nz: Vec<usize> = (0..1537)
            .filter(|&j| b.weights().get(row, j) != 0.0)
            .collect();
        assert_eq!(nz, vec![672, 768, 864]);
        for i in 0..226 {
            let s: f64 = b.weights().row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(b.weights().get(225, 768), 1.0);
    }

    #[test]
    fn higher_order_hann_taps() {
        let taps: Vec<f64> = hann_taps(2);
        // interior of 7-point Hann: 0.25, 0.75, 1, 0.75, 0.25 over a sum of 3
        let expected = [0.25 / 3.0, 0.75 / 3.0, 1.0 / 3.0, 0.75 / 3.0, 0.25 / 3.0];
        for (a, b) in taps.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn custom_tap_validation() {
        let g = F0Grid::default();
        assert!(CombFilterBank::new(&g, 1, Some(vec![0.2, 0.5, 0.3])).is_err());
        assert!(CombFilterBank::new(&g, 1, Some(vec![0.3, 0.5, 0.3])).is_err());
        assert!(CombFilterBank::new(&g, 1, Some(vec![0.5, 0.5])).is_err());
        assert!(CombFilterBank::new(&g, 0, None).is_err());
        let b = CombFilterBank::new(&g, 1, Some(vec![0.1, 0.8, 0.1])).unwrap();
        assert_eq!(b.weights().get(0, 0), 0.1);
    }

    #[test]
    fn weight_matrix_reload() {
        let g = F0Grid::default();
        let b = CombFilterBank::new(&g, 1, Some(vec![0.3, 0.4, 0.3])).unwrap();
        let narrowed = b.weights().map(|w| w as f32 as f64);
        let back = CombFilterBank::from_weight_matrix(&g, 1, &narrowed).unwrap();
        for (a, e) in back.taps().iter().zip([0.3, 0.4, 0.3]) {
            assert!((a - e).abs() < 1e-7);
        }
        let mut broken = narrowed.clone();
        broken.set(5, 3, 0.5);
        assert!(CombFilterBank::from_weight_matrix(&g, 1, &broken).is_err());
    }

    #[test]
    fn frequency_response_nulls_and_peaks() {
        let b = bank();
        let i = b.grid().nearest_index(100.0).unwrap();
        let resp = b.frequency_response(i, 48_001).unwrap();
        // 0.5 Hz resolution: index n ↔ n/2 Hz
        assert!((resp[0].1 - 1.0).abs() < 1e-12);
        for m in 1..5 {
            assert!((resp[200 * m].1 - 1.0).abs() < 1e-9, "harmonic {m}");
            assert!(resp[200 * m + 100].1 < 1e-9, "null {m}");
        }
        for (hz, mag) in resp.iter().step_by(997) {
            let expected = 0.5 + 0.5 * (std::f64::consts::TAU * hz * 480.0 / 48_000.0).cos();
            assert!((mag - expected.abs()).abs() < 1e-9);
        }
        assert!(b.frequency_response(225, 8).is_err());
    }

    #[test]
    fn constant_input_interior_is_constant() {
        let cfg = FrameConfig::default();
        let x = AudioBuffer::at_pipeline_rate(vec![1.0; 48_000]).unwrap();
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let b = bank();
        let all_track = F0Track::from_indices(&vec![0; chunks.frame_count()], b.grid()).unwrap();
        let out = filter_inference(&b, &chunks, &all_track).unwrap();
        for t in 4..chunks.frame_count() - 8 {
            assert!(out.frames.frame(t).iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn unvoiced_is_identity_in_both_paths() {
        let (grid, bank, cfg) = small();
        let x = noise(500, 1);
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let frames = frame_signal(&x, &cfg).unwrap();
        let track = F0Track::unvoiced(chunks.frame_count(), &grid);
        let inf = filter_inference(&bank, &chunks, &track).unwrap();
        assert_eq!(inf.frames, frames);
        assert_eq!(inf.macs, 0);
        let all = filter_all_candidates(&bank, &chunks).unwrap();
        assert_eq!(select_candidate(&all, &track, &grid).unwrap(), frames);
        for t in 0..chunks.frame_count() {
            assert_eq!(all.slice(grid.unvoiced_index(), t), frames.frame(t));
        }
    }

    #[test]
    fn one_hot_contraction_equals_indexing() {
        let (grid, bank, cfg) = small();
        let x = noise(700, 2);
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let all = filter_all_candidates(&bank, &chunks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let idx: Vec<usize> = (0..chunks.frame_count())
            .map(|_| rng.random_range(0..grid.label_dim()))
            .collect();
        let track = F0Track::from_indices(&idx, &grid).unwrap();
        let picked = select_candidate(&all, &track, &grid).unwrap();
        for (t, &i) in idx.iter().enumerate() {
            assert_eq!(picked.frame(t), all.slice(i, t));
        }
        let streamed = reference_filter(&bank, &chunks, &track).unwrap();
        assert_eq!(streamed.frames, picked);
        assert_eq!(streamed.macs, all.macs);
    }

    #[test]
    fn reference_entries_follow_correlation_definition() {
        let (_, bank, cfg) = small();
        let x = noise(200, 4);
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let all = filter_all_candidates(&bank, &chunks).unwrap();
        // dense Σ_j W[i, j]·X_in[j + s, t] over the whole kernel
        for &(i, s, t) in &[(0, 0, 0), (5, 17, 3), (12, 63, 7), (13, 30, 10)] {
            let dense: f64 = (0..bank.kernel_len())
                .map(|j| bank.weights().get(i, j) * chunks.chunk(t)[j + s])
                .sum();
            assert!((dense - all.get(i, s, t)).abs() < 1e-14);
        }
    }

    #[test]
    fn paths_agree_on_small_grid_all_candidates() {
        let (grid, bank, cfg) = small();
        let x = noise(1500, 3);
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let n_t = chunks.frame_count();
        let idx: Vec<usize> = (0..n_t).map(|t| t % grid.label_dim()).collect();
        let track = F0Track::from_indices(&idx, &grid).unwrap();
        let r = reference_filter(&bank, &chunks, &track).unwrap();
        let i = filter_inference(&bank, &chunks, &track).unwrap();
        for t in 0..n_t {
            for (a, b) in r.frames.frame(t).iter().zip(i.frames.frame(t)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let voiced = idx.iter().filter(|&&k| k < grid.bins()).count();
        assert_eq!(i.macs, inference_cost(&bank, 64, voiced));
        assert_eq!(r.macs, reference_cost(&bank, 64, n_t));
        assert_eq!(r.macs, (13 * 3 + 1) * 64 * n_t as u64);
    }

    #[test]
    fn spectral_form_matches_time_form() {
        let (grid, bank, cfg) = small();
        let x = noise(900, 6);
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let idx: Vec<usize> = (0..chunks.frame_count())
            .map(|t| (3 * t) % grid.label_dim())
            .collect();
        let track = F0Track::from_indices(&idx, &grid).unwrap();
        let time = filter_inference(&bank, &chunks, &track).unwrap();
        let expected = crate::audio::stft(&time.frames, Window::SqrtHann);
        let spectral = filter_inference_spectral(&bank, &chunks, &track, Window::SqrtHann).unwrap();
        for (a, b) in expected.as_slice().iter().zip(spectral.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn periodic_input_is_eigenfunction() {
        let b = bank();
        let cfg = FrameConfig::default();
        let i = b.grid().nearest_period_index(384.0).unwrap();
        let x = AudioBuffer::at_pipeline_rate(
            (0..24_000)
                .map(|n| {
                    (std::f64::consts::TAU * n as f64 / 384.0).sin()
                        + 0.3 * (std::f64::consts::TAU * 3.0 * n as f64 / 384.0).cos()
                })
                .collect(),
        )
        .unwrap();
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let frames = frame_signal(&x, &cfg).unwrap();
        let track = F0Track::from_indices(&vec![i; chunks.frame_count()], b.grid()).unwrap();
        let out = filter_inference(&b, &chunks, &track).unwrap();
        // frames whose reach [start - T, start + N_f + T] stays inside the signal
        for t in 1..chunks.frame_count() - 5 {
            for (a, e) in out.frames.frame(t).iter().zip(frames.frame(t)) {
                assert!((a - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mismatched_pad_and_track_are_shape_errors() {
        let (grid, bank, cfg) = small();
        let x = noise(300, 8);
        let chunks = chunk_signal(&x, &cfg.with_pad(3)).unwrap();
        let track = F0Track::unvoiced(chunks.frame_count(), &grid);
        assert!(matches!(
            filter_inference(&bank, &chunks, &track),
            Err(Error::Shape(_))
        ));
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let short = F0Track::unvoiced(2, &grid);
        assert!(matches!(
            reference_filter(&bank, &chunks, &short),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn f32_paths_agree_relatively() {
        let grid = F0Grid::<f32>::new(48_000.0, 1200.0, 3000.0, 13).unwrap();
        let bank = CombFilterBank::new(&grid, 1, None).unwrap();
        let cfg = FrameConfig::new(64, 16, bank.pad()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = AudioBuffer::at_pipeline_rate(
            (0..800).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        )
        .unwrap();
        let chunks = chunk_signal(&x, &cfg).unwrap();
        let idx: Vec<usize> = (0..chunks.frame_count()).map(|t| (5 * t) % 14).collect();
        let track = F0Track::from_indices(&idx, &grid).unwrap();
        let r = reference_filter(&bank, &chunks, &track).unwrap();
        let i = filter_inference(&bank, &chunks, &track).unwrap();
        let scale = r
            .frames
            .frames()
            .flatten()
            .fold(0f32, |m, v| m.max(v.abs()));
        for (a, b) in r.frames.frames().flatten().zip(i.frames.frames().flatten()) {
            assert!((a - b).abs() <= 1e-5 * scale);
        }
    }
}
