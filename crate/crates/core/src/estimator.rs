//! Classical F0 estimation onto the candidate grid.
//!
//! Each frame gets a YIN cumulative-mean-normalized difference function
//! (CMNDF). Candidate saliences `1 - d'(T_i)` form the voiced part of a
//! posterior over the `N + 1` grid slots and the depth of the best dip sets
//! the unvoiced slot. A Viterbi pass over those posteriors yields the track.

use rayon::prelude::*;

use crate::audio::{AudioBuffer, FrameConfig};
use crate::error::{Error, Result};
use crate::grid::{F0Grid, F0Track, TrackFrame};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Floor applied to posteriors before taking logs.
pub const EMISSION_FLOOR: f64 = 1e-8;

/// Salience multiplier for candidates longer than the selected dip, so that
/// sub-harmonic dips at `2T, 3T, ...` never outrank the first dip.
const SUBHARMONIC_DISCOUNT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig<T> {
    /// CMNDF level below which a dip counts as periodic.
    pub yin_threshold: T,
    /// Analysis window length in samples; at least `2·T_max`.
    pub analysis_window: usize,
    /// Std-dev, in grid bins, of the voiced-to-voiced transition penalty.
    pub transition_width: T,
    /// Prior probability that the first frame is voiced.
    pub voicing_prior: T,
    /// Cost (negative log) of a voiced/unvoiced switch.
    pub switch_cost: T,
}

impl<T: Real> EstimatorConfig<T> {
    /// Defaults with the analysis window sized for `grid`.
    pub fn for_grid(grid: &F0Grid<T>) -> Self {
        Self {
            analysis_window: 2 * grid
                .t_max()
                .ceil()
                .to_usize()
                .expect("period fits in usize"),
            ..Self::default()
        }
    }

    pub fn validate(&self, grid: &F0Grid<T>) -> Result<()> {
        if !(self.yin_threshold > T::zero() && self.yin_threshold < T::one()) {
            return Err(Error::Config(format!(
                "YIN threshold {} outside (0, 1)",
                self.yin_threshold
            )));
        }
        let needed = 2 * grid
            .t_max()
            .ceil()
            .to_usize()
            .expect("period fits in usize");
        if self.analysis_window < needed {
            return Err(Error::Config(format!(
                "analysis window {} shorter than 2·T_max = {needed}",
                self.analysis_window
            )));
        }
        if !(self.transition_width > T::zero()) {
            return Err(Error::Config("transition width must be positive".into()));
        }
        if !(self.voicing_prior >= T::zero() && self.voicing_prior <= T::one()) {
            return Err(Error::Config("voicing prior must lie in [0, 1]".into()));
        }
        if !(self.switch_cost >= T::zero()) {
            return Err(Error::Config("switch cost must be nonnegative".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            yin_threshold: T::lit(0.15),
            analysis_window: 1536,
            transition_width: T::lit(8.0),
            voicing_prior: T::lit(0.5),
            switch_cost: T::lit(2.0),
        }
    }
}

/// Difference function `d(τ) = Σ_s (x(s) - x(s+τ))²` for `τ = 0..=max_lag`
/// over an integration length of `len - max_lag`.
pub fn difference<T: Real>(x: &[T], max_lag: usize) -> Vec<T> {
    let span = x.len() - max_lag;
    (0..=max_lag)
        .map(|tau| {
            x[..span]
                .iter()
                .zip(&x[tau..tau + span])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum()
        })
        .collect()
}

/// Cumulative-mean normalization `d'(τ) = d(τ)·τ / Σ_{j≤τ} d(j)`, `d'(0) = 1`.
pub fn normalize_difference<T: Real>(d: &[T]) -> Vec<T> {
    let mut running = T::zero();
    d.iter()
        .enumerate()
        .map(|(tau, &v)| {
            running += v;
            if tau == 0 || running <= T::zero() {
                T::one()
            } else {
                v * T::from_usize_lossy(tau) / running
            }
        })
        .collect()
}

/// `d'(τ)` for `τ = 0..=max_lag`.
pub fn cmndf<T: Real>(x: &[T], max_lag: usize) -> Vec<T> {
    normalize_difference(&difference(x, max_lag))
}

fn sample_at<T: Real>(curve: &[T], pos: T) -> T {
    let lo = pos.floor().to_usize().unwrap_or(0).min(curve.len() - 1);
    let hi = (lo + 1).min(curve.len() - 1);
    let frac = pos - T::from_usize_lossy(lo);
    curve[lo] + (curve[hi] - curve[lo]) * frac
}

/// YIN dip: the lowest `d'` in the first run of lags in `[lo, hi]` below
/// `threshold`, else the global minimum of `d'`.
fn pick_dip<T: Real>(d: &[T], lo: usize, hi: usize, threshold: T) -> usize {
    let lowest = |range: std::ops::RangeInclusive<usize>| {
        range
            .min_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite CMNDF"))
            .expect("non-empty lag range")
    };
    match (lo..=hi).find(|&t| d[t] < threshold) {
        Some(start) => {
            let end = (start..=hi)
                .take_while(|&t| d[t] < threshold)
                .last()
                .unwrap_or(start);
            lowest(start..=end)
        }
        None => lowest(lo..=hi),
    }
}

/// Sub-sample position of the raw difference minimum within `reach` of
/// `tau`. The raw function has no `τ`-proportional tilt, so its minimum is
/// not pulled toward short lags when the dip sits on a noise floor.
fn refine_lag<T: Real>(raw: &[T], tau: usize, reach: usize, lo: usize, hi: usize) -> T {
    let (a, b) = (tau.saturating_sub(reach).max(lo), (tau + reach).min(hi));
    let best = (a..=b)
        .min_by(|&x, &y| raw[x].partial_cmp(&raw[y]).expect("finite difference"))
        .expect("non-empty lag range");
    let at = T::from_usize_lossy(best);
    if best == 0 || best + 1 >= raw.len() {
        return at;
    }
    let (l, m, r) = (raw[best - 1], raw[best], raw[best + 1]);
    let curvature = l - T::lit(2.0) * m + r;
    if curvature <= T::zero() {
        return at;
    }
    at + ((l - r) / (T::lit(2.0) * curvature))
        .max(-T::one())
        .min(T::one())
}

/// Posterior over the `N + 1` grid slots for one analysis window.
pub fn yin_frame<T: Real>(
    window: &[T],
    grid: &F0Grid<T>,
    cfg: &EstimatorConfig<T>,
) -> Result<Vec<T>> {
    let max_lag = grid
        .t_max()
        .ceil()
        .to_usize()
        .expect("period fits in usize");
    if window.len() < 2 * max_lag {
        return Err(Error::Shape(format!(
            "analysis window has {} samples, need 2·T_max = {}",
            window.len(),
            2 * max_lag
        )));
    }
    let mut posterior = vec![T::zero(); grid.label_dim()];
    if window.iter().all(|&x| x == T::zero()) {
        posterior[grid.unvoiced_index()] = T::one();
        return Ok(posterior);
    }

    let raw = difference(window, max_lag);
    let d = normalize_difference(&raw);
    let lo = grid
        .t_min()
        .floor()
        .to_usize()
        .expect("period fits in usize")
        .max(1);
    let dip = pick_dip(&d, lo, max_lag, cfg.yin_threshold);
    let step = grid
        .period_step()
        .ceil()
        .to_usize()
        .expect("period step fits in usize");
    let dip_lag = refine_lag(&raw, dip, step, lo, max_lag);
    let dip_value = d[dip];
    let floor_value = (lo..=max_lag)
        .map(|t| d[t])
        .fold(T::infinity(), T::min)
        .min(dip_value);
    // voiced and unvoiced scores cross at the threshold
    let unvoiced = (floor_value / (T::lit(2.0) * cfg.yin_threshold)).min(T::one());

    let reach = dip_lag + grid.period_step();
    let mut saliences: Vec<T> = grid
        .periods()
        .iter()
        .map(|&p| {
            let s = (T::one() - sample_at(&d, p)).max(T::zero());
            if p > reach {
                s * T::lit(SUBHARMONIC_DISCOUNT)
            } else {
                s
            }
        })
        .collect();
    let picked = grid.nearest_period_index(dip_lag)?;
    saliences[picked] = saliences[picked].max((T::one() - dip_value).min(T::one()));

    let peak = saliences.iter().copied().fold(T::zero(), T::max);
    if peak > T::zero() {
        let scale = (T::one() - unvoiced) / peak;
        for (p, s) in posterior.iter_mut().zip(saliences) {
            *p = s * scale;
        }
    }
    posterior[grid.unvoiced_index()] = unvoiced;
    Ok(posterior)
}

/// Minimum-cost state path. Costs are negative log-probabilities; ties keep
/// the lower state index. Returns the path and its total cost.
pub fn viterbi_path<T: Real>(
    emission_cost: &[Vec<T>],
    initial_cost: impl Fn(usize) -> T,
    transition_cost: impl Fn(usize, usize) -> T,
) -> (Vec<usize>, T) {
    let Some(first) = emission_cost.first() else {
        return (Vec::new(), T::zero());
    };
    let states = first.len();
    let mut cost: Vec<T> = (0..states).map(|j| initial_cost(j) + first[j]).collect();
    let mut back = vec![vec![0usize; states]; emission_cost.len()];
    for (t, emit) in emission_cost.iter().enumerate().skip(1) {
        let mut next = vec![T::infinity(); states];
        for j in 0..states {
            let mut best = 0;
            let mut best_cost = T::infinity();
            for (i, &c) in cost.iter().enumerate() {
                let candidate = c + transition_cost(i, j);
                if candidate < best_cost {
                    best_cost = candidate;
                    best = i;
                }
            }
            next[j] = best_cost + emit[j];
            back[t][j] = best;
        }
        cost = next;
    }
    let (mut state, total) = cost.iter().enumerate().fold(
        (0, T::infinity()),
        |(bi, bc), (i, &c)| if c < bc { (i, c) } else { (bi, bc) },
    );
    let mut path = vec![0; emission_cost.len()];
    for t in (0..emission_cost.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    (path, total)
}

/// Transition cost between grid slots under `cfg`.
pub fn transition_cost<T: Real>(
    grid: &F0Grid<T>,
    cfg: &EstimatorConfig<T>,
    from: usize,
    to: usize,
) -> T {
    let u = grid.unvoiced_index();
    match (from == u, to == u) {
        (true, true) => T::zero(),
        (false, false) => {
            let d = T::from_usize_lossy(from.abs_diff(to));
            d * d / (T::lit(2.0) * cfg.transition_width * cfg.transition_width)
        }
        _ => cfg.switch_cost,
    }
}

pub fn initial_cost<T: Real>(grid: &F0Grid<T>, cfg: &EstimatorConfig<T>, state: usize) -> T {
    let floor = T::lit(EMISSION_FLOOR);
    if state == grid.unvoiced_index() {
        -(T::one() - cfg.voicing_prior).max(floor).ln()
    } else {
        -cfg.voicing_prior.max(floor).ln()
    }
}

pub fn emission_costs<T: Real>(posteriors: &[Vec<T>]) -> Vec<Vec<T>> {
    let floor = T::lit(EMISSION_FLOOR);
    posteriors
        .iter()
        .map(|p| p.iter().map(|&v| -v.max(floor).ln()).collect())
        .collect()
}

/// Smooths per-frame posteriors into a track.
pub fn viterbi_track<T: Real>(
    posteriors: &[Vec<T>],
    grid: &F0Grid<T>,
    cfg: &EstimatorConfig<T>,
) -> Result<F0Track<T>> {
    if posteriors.is_empty() {
        return Err(Error::Domain(
            "Viterbi decoding needs at least one frame".into(),
        ));
    }
    if let Some(t) = posteriors.iter().position(|p| p.len() != grid.label_dim()) {
        return Err(Error::Shape(format!(
            "posterior {t} has {} entries, expected {}",
            posteriors[t].len(),
            grid.label_dim()
        )));
    }
    let (path, _) = viterbi_path(
        &emission_costs(posteriors),
        |s| initial_cost(grid, cfg, s),
        |a, b| transition_cost(grid, cfg, a, b),
    );
    let frames = path
        .iter()
        .zip(posteriors)
        .map(|(&i, p)| TrackFrame {
            grid_index: i,
            f0: if grid.is_voiced(i) {
                grid.frequency(i)
            } else {
                T::zero()
            },
            voicing: T::one() - p[grid.unvoiced_index()],
        })
        .collect();
    F0Track::new(frames, grid)
}

/// Runs [`yin_frame`] on windows centered on every pipeline frame (shifted
/// inward at the clip edges; zero-padded only if the clip is shorter than
/// the window), then
/// [`viterbi_track`]. Entry `t` of the result aligns with frame `t` of
/// [`frame_signal`](crate::audio::frame_signal).
pub fn estimate_track<T: Real>(
    buffer: &AudioBuffer<T>,
    grid: &F0Grid<T>,
    frames: &FrameConfig,
    cfg: &EstimatorConfig<T>,
) -> Result<(F0Track<T>, Vec<Vec<T>>)> {
    buffer.require_pipeline_rate()?;
    cfg.validate(grid)?;
    if buffer.is_empty() {
        return Err(Error::Domain(
            "cannot estimate F0 of an empty buffer".into(),
        ));
    }
    let samples = buffer.samples();
    let w = cfg.analysis_window;
    let count = frames.frame_count(samples.len());
    let posteriors = (0..count)
        .into_par_iter()
        .map(|t| {
            // centered on the frame, shifted to stay inside the buffer
            let center = t * frames.hop_size() + frames.frame_size() / 2;
            let start = center
                .saturating_sub(w / 2)
                .min(samples.len().saturating_sub(w)) as isize;
            let window: Vec<T> = (0..w as isize)
                .map(|j| {
                    let n = start + j;
                    if n >= 0 && (n as usize) < samples.len() {
                        samples[n as usize]
                    } else {
                        T::zero()
                    }
                })
                .collect();
            yin_frame(&window, grid, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let track = viterbi_track(&posteriors, grid, cfg)?;
    Ok((track, posteriors))
}

/// `frames × (N + 1)` matrix of posteriors, for dumping.
pub fn posteriors_to_matrix<T: Real>(posteriors: &[Vec<T>]) -> Result<Matrix<T>> {
    Matrix::from_rows(posteriors)
}
