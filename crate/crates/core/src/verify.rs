//! Seeded fixtures and the reference-vs-inference self-test.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::{chunk_signal, AudioBuffer, FrameConfig, PIPELINE_SAMPLE_RATE};
use crate::comb::{filter_inference, reference_filter, CombFilterBank};
use crate::error::{Error, Result};
use crate::grid::{F0Grid, F0Track};
use crate::scalar::Real;

/// Tolerance of the float64 equivalence check.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;

/// Gaussian white noise with standard deviation `std`, at 48 kHz.
pub fn seeded_noise<T: Real>(seed: u64, len: usize, std: f64) -> AudioBuffer<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| T::lit(std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    AudioBuffer::at_pipeline_rate(samples).expect("finite samples")
}

/// `amplitude · Σ_{k=1..harmonics} sin(2π·k·f0·n / fs)` at 48 kHz.
pub fn harmonic_complex<T: Real>(
    f0: f64,
    harmonics: usize,
    len: usize,
    amplitude: f64,
) -> AudioBuffer<T> {
    let w = 2.0 * std::f64::consts::PI * f0 / PIPELINE_SAMPLE_RATE as f64;
    let samples = (0..len)
        .map(|n| {
            let s: f64 = (1..=harmonics).map(|k| (w * (k * n) as f64).sin()).sum();
            T::lit(amplitude * s)
        })
        .collect();
    AudioBuffer::at_pipeline_rate(samples).expect("finite samples")
}

/// Random track of `frames` entries in which every grid slot, unvoiced
/// included, appears at least once. Needs `frames ≥ N + 1`.
pub fn covering_track<T: Real>(
    rng: &mut impl Rng,
    frames: usize,
    grid: &F0Grid<T>,
) -> Result<F0Track<T>> {
    let slots = grid.label_dim();
    if frames < slots {
        return Err(Error::Domain(format!(
            "{frames} frames cannot cover {slots} grid slots"
        )));
    }
    let mut indices: Vec<usize> = (0..slots)
        .chain((slots..frames).map(|_| rng.random_range(0..slots)))
        .collect();
    indices.shuffle(rng);
    F0Track::from_indices(&indices, grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport<T> {
    pub tracks: usize,
    pub frames: usize,
    pub max_dev: T,
    pub reference_macs: u64,
    pub inference_macs: u64,
}

impl<T: Real> EquivalenceReport<T> {
    pub fn passed(&self) -> bool {
        self.max_dev <= T::lit(EQUIVALENCE_TOLERANCE)
    }
}

/// Runs the reference and inference paths on `buffer` for `tracks` random
/// covering tracks and records the largest absolute sample deviation.
pub fn equivalence_sweep<T: Real>(
    bank: &CombFilterBank<T>,
    buffer: &AudioBuffer<T>,
    frames: &FrameConfig,
    tracks: usize,
    seed: u64,
) -> Result<EquivalenceReport<T>> {
    let frames = frames.with_pad(bank.pad());
    let chunks = chunk_signal(buffer, &frames)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport {
        tracks,
        frames: chunks.frame_count(),
        max_dev: T::zero(),
        reference_macs: 0,
        inference_macs: 0,
    };
    for _ in 0..tracks {
        let track = covering_track(&mut rng, chunks.frame_count(), bank.grid())?;
        let reference = reference_filter(bank, &chunks, &track)?;
        let inference = filter_inference(bank, &chunks, &track)?;
        for (a, b) in reference.frames.frames().zip(inference.frames.frames()) {
            for (x, y) in a.iter().zip(b) {
                report.max_dev = report.max_dev.max((*x - *y).abs());
            }
        }
        report.reference_macs += reference.macs;
        report.inference_macs += inference.macs;
    }
    Ok(report)
}
