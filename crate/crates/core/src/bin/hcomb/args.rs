use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hcomb::audio::{BitDepth, FrameConfig};
use hcomb::enhance::StrengthPooling;
use hcomb::estimator::EstimatorConfig;
use hcomb::grid::F0Grid;
use hcomb::metrics::LossConfig;
use hcomb::Result;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 I/O error, 2 usage error, \
3 data or shape error, 4 numerical verification failure.";

#[derive(Debug, Parser)]
#[command(name = "hcomb", version, about = "Pitch-driven comb-filter enhancement for 48 kHz speech", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a noisy recording.
    #[command(after_help = EXIT_CODES)]
    Enhance(EnhanceArgs),
    /// Estimate a per-frame F0 track and write it as CSV.
    #[command(name = "f0", after_help = EXIT_CODES)]
    F0(F0Args),
    /// Turn an F0 track CSV into a frames x (N+1) Gaussian label matrix.
    #[command(after_help = EXIT_CODES)]
    Labels(LabelsArgs),
    /// Dump the (N+1) x (2·M·T_max+1) comb filter weight matrix.
    #[command(after_help = EXIT_CODES)]
    Filterbank(FilterbankArgs),
    /// Check that the all-candidate and selected-filter paths agree.
    #[command(after_help = EXIT_CODES)]
    Verify(VerifyArgs),
    /// Compare an enhanced recording against its clean reference.
    #[command(after_help = EXIT_CODES)]
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Frame length N_f in samples
    #[arg(long, default_value_t = FrameConfig::DEFAULT_FRAME_SIZE)]
    pub frame_size: usize,
    /// Hop size N_h in samples
    #[arg(long, default_value_t = FrameConfig::DEFAULT_HOP_SIZE)]
    pub hop_size: usize,
    /// Lowest grid frequency in Hz
    #[arg(long, default_value_t = F0Grid::<f64>::DEFAULT_F_MIN)]
    pub f_min: f64,
    /// Highest grid frequency in Hz
    #[arg(long, default_value_t = F0Grid::<f64>::DEFAULT_F_MAX)]
    pub f_max: f64,
    /// Number of voiced grid bins N
    #[arg(long, default_value_t = F0Grid::<f64>::DEFAULT_BINS)]
    pub bins: usize,
    /// Comb filter order M
    #[arg(long, default_value_t = 1)]
    pub order: usize,
}

impl GridArgs {
    pub fn grid(&self) -> Result<F0Grid<f64>> {
        F0Grid::new(
            f64::from(hcomb::audio::PIPELINE_SAMPLE_RATE),
            self.f_min,
            self.f_max,
            self.bins,
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// CMNDF threshold of the YIN detector
    #[arg(long, default_value_t = 0.15)]
    pub yin_threshold: f64,
    /// Spread, in grid bins, of voiced-to-voiced transitions
    #[arg(long, default_value_t = 8.0)]
    pub transition_width: f64,
    /// Cost of a voiced/unvoiced switch (negative log)
    #[arg(long, default_value_t = 2.0)]
    pub switch_cost: f64,
    /// Prior probability that the first frame is voiced
    #[arg(long, default_value_t = 0.5)]
    pub voicing_prior: f64,
}

impl EstimatorArgs {
    pub fn config(&self, grid: &F0Grid<f64>) -> EstimatorConfig<f64> {
        EstimatorConfig {
            yin_threshold: self.yin_threshold,
            transition_width: self.transition_width,
            switch_cost: self.switch_cost,
            voicing_prior: self.voicing_prior,
            ..EstimatorConfig::for_grid(grid)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    /// Magnitude compression exponent c
    #[arg(long, default_value_t = 0.3)]
    pub compression: f64,
    /// Weight λ of the complex spectral term
    #[arg(long, default_value_t = 0.3)]
    pub lambda: f64,
    /// Weight α of the pitch loss
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
}

impl LossArgs {
    pub fn config(&self) -> LossConfig<f64> {
        LossConfig {
            compression: self.compression,
            magnitude_weight: self.lambda,
            pitch_weight: self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Depth {
    Pcm16,
    Pcm24,
    Float32,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Pcm16 => BitDepth::Pcm16,
            Depth::Pcm24 => BitDepth::Pcm24,
            Depth::Float32 => BitDepth::Float32,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum Pooling {
    #[default]
    PerBin,
    MelBands,
}

impl From<Pooling> for StrengthPooling {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::PerBin => StrengthPooling::PerBin,
            Pooling::MelBands => StrengthPooling::MelBands,
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["clean", "gain"]))]
pub struct EnhanceArgs {
    /// Noisy 48 kHz WAV input
    pub noisy: PathBuf,
    /// Enhanced WAV output
    pub out: PathBuf,
    /// Clean reference; selects the oracle gain and strength
    #[arg(long, conflicts_with_all = ["gain", "strength"])]
    pub clean: Option<PathBuf>,
    /// Gain matrix file, bins x frames
    #[arg(long, requires = "strength")]
    pub gain: Option<PathBuf>,
    /// Strength matrix file, bins x frames
    #[arg(long, requires = "gain")]
    pub strength: Option<PathBuf>,
    /// F0 track CSV; estimated from the input when absent
    #[arg(long)]
    pub f0: Option<PathBuf>,
    /// Use the rescaled blend, γ = 0.5
    #[arg(long, conflicts_with = "gamma")]
    pub rescale: bool,
    /// Strength exponent γ
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Upper clamp on the gain
    #[arg(long, default_value_t = 1.0)]
    pub g_max: f64,
    /// Granularity of the oracle strength
    #[arg(long, value_enum, default_value_t = Pooling::PerBin)]
    pub pooling: Pooling,
    /// Directory for the track, R, G and a metrics report
    #[arg(long)]
    pub diag: Option<PathBuf>,
    /// Output sample format
    #[arg(long, value_enum, default_value_t = Depth::Float32)]
    pub bit_depth: Depth,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Debug, Args)]
pub struct F0Args {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Also write the frames x (N+1) posterior matrix
    #[arg(long)]
    pub posteriors: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Debug, Args)]
pub struct LabelsArgs {
    pub track: PathBuf,
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct FilterbankArgs {
    pub out: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Input WAV; seeded Gaussian noise when absent
    pub input: Option<PathBuf>,
    /// Seed of the noise and the random tracks
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random tracks to sweep
    #[arg(long, default_value_t = 4)]
    pub tracks: usize,
    /// Length of the generated noise in seconds
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub clean: PathBuf,
    /// Enhanced estimate
    pub estimate: PathBuf,
    /// Gain-only estimate; defaults to the enhanced estimate
    pub gain_only: Option<PathBuf>,
    /// Also write the report as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub loss: LossArgs,
}
