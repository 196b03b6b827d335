mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{
    Cli, Command, EnhanceArgs, F0Args, FilterbankArgs, GridArgs, LabelsArgs, MetricsArgs,
    VerifyArgs,
};
use hcomb::audio::{frame_signal, read_wav, stft, write_wav, AudioBuffer, FrameConfig, Window};
use hcomb::comb::CombFilterBank;
use hcomb::enhance::{
    BlendConfig, EnhanceConfig, Enhancer, GainProvider, OracleGain, OracleStrength, Precomputed,
    StrengthProvider, TrackSource,
};
use hcomb::estimator::{estimate_track, posteriors_to_matrix};
use hcomb::grid::{bce_loss_mean, read_track_csv, write_track_csv, F0Grid, F0Track};
use hcomb::matrix::{write_matrix, Matrix};
use hcomb::metrics::{sdr, se_loss, snr, total_loss, LossConfig, MetricsReport};
use hcomb::verify::{equivalence_sweep, seeded_noise, EQUIVALENCE_TOLERANCE};
use hcomb::Error;

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_VERIFY: u8 = 4;

enum Failure {
    Lib(Error),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_) => EXIT_USAGE,
        Error::Parse { .. }
        | Error::SampleRate { .. }
        | Error::Shape(_)
        | Error::Domain(_)
        | Error::Validation(_)
        | Error::Csv(_) => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enhance(a) => enhance(a),
        Command::F0(a) => f0(a),
        Command::Labels(a) => labels(a),
        Command::Filterbank(a) => filterbank(a),
        Command::Verify(a) => verify(a),
        Command::Metrics(a) => metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn frame_config(g: &GridArgs, grid: &F0Grid<f64>) -> hcomb::Result<FrameConfig> {
    let pad = g.order * grid.t_max().ceil() as usize;
    FrameConfig::new(g.frame_size, g.hop_size, pad)
}

fn create_dir(dir: &Path) -> hcomb::Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_audio(buffer: &AudioBuffer<f64>, path: &Path, depth: args::Depth) -> hcomb::Result<()> {
    let report = write_wav(buffer, path, depth.into())?;
    if report.clipped > 0 {
        eprintln!(
            "warning: {} samples clipped to [-1, 1] in {}",
            report.clipped,
            path.display()
        );
    }
    Ok(())
}

fn enhance(a: EnhanceArgs) -> Outcome {
    let grid = a.grid.grid()?;
    let blend = if a.rescale {
        BlendConfig::rescaled()
    } else {
        BlendConfig::new(a.gamma)?
    };
    let enhancer = Enhancer::new(
        &grid,
        EnhanceConfig {
            frame_size: a.grid.frame_size,
            hop_size: a.grid.hop_size,
            order: a.grid.order,
            blend,
            estimator: a.estimator.config(&grid),
            g_max: a.g_max,
            ..EnhanceConfig::default()
        },
    )?;
    let noisy = read_wav::<f64>(&a.noisy)?;
    let clean = a.clean.as_ref().map(read_wav::<f64>).transpose()?;
    let track = match &a.f0 {
        Some(p) => TrackSource::Given(read_track_csv(p, &grid)?),
        None => TrackSource::Estimate,
    };

    let oracle_strength = OracleStrength {
        pooling: a.pooling.into(),
    };
    let (gain, strength): (Box<dyn GainProvider<f64>>, Box<dyn StrengthProvider<f64>>) =
        match (&a.gain, &a.strength) {
            (Some(g), Some(r)) => (
                Box::new(Precomputed::from_file(g)?),
                Box::new(Precomputed::from_file(r)?),
            ),
            _ => (Box::new(OracleGain), Box::new(oracle_strength)),
        };
    let out = enhancer.enhance(
        &noisy,
        track,
        gain.as_ref(),
        strength.as_ref(),
        clean.as_ref(),
    )?;
    write_audio(&out.output, &a.out, a.bit_depth)?;

    let d = &out.diagnostics;
    let mut report = MetricsReport::new();
    let voiced = d
        .track
        .indices()
        .iter()
        .filter(|&&i| grid.is_voiced(i))
        .count();
    report
        .push("frames", d.track.len() as f64)
        .push("voiced_frames", voiced as f64)
        .push("latency_ms", d.latency_samples as f64 * 1000.0 / 48_000.0)
        .push("gamma", blend.gamma);
    if let Some(clean) = &clean {
        let snr_in = snr(clean, &noisy)?;
        let snr_out = snr(clean, &out.output)?;
        report
            .push("snr_in_db", snr_in)
            .push("snr_out_db", snr_out)
            .push("snr_improvement_db", snr_out - snr_in)
            .push("sdr_in_db", sdr(clean, &noisy)?)
            .push("sdr_out_db", sdr(clean, &out.output)?)
            .push("sdr_gain_only_db", sdr(clean, &out.gain_only)?);
        let s = enhancer.analyze(clean)?;
        let loss = se_loss(
            &s,
            &out.output_spectrum,
            &out.gain_only_spectrum,
            &a.loss.config(),
        )?;
        report.push("se_loss", loss.total);
        println!("snr_improvement_db={:.3}", snr_out - snr_in);
    }
    if let Some(dir) = &a.diag {
        create_dir(dir)?;
        write_track_csv(&d.track, dir.join("track.csv"))?;
        write_matrix(&d.strength.map().to_matrix(), dir.join("strength.hcf"))?;
        write_matrix(&d.gain.map().to_matrix(), dir.join("gain.hcf"))?;
        if let Some(p) = &d.posteriors {
            write_matrix(&posteriors_to_matrix(p)?, dir.join("posteriors.hcf"))?;
        }
        let path = dir.join("report.txt");
        fs::write(&path, report.to_key_value()).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn f0(a: F0Args) -> Outcome {
    let grid = a.grid.grid()?;
    let frames = frame_config(&a.grid, &grid)?;
    let input = read_wav::<f64>(&a.input)?;
    let (track, posteriors) = estimate_track(&input, &grid, &frames, &a.estimator.config(&grid))?;
    write_track_csv(&track, &a.out)?;
    if let Some(p) = &a.posteriors {
        write_matrix(&posteriors_to_matrix(&posteriors)?, p)?;
    }
    Ok(())
}

fn label_matrix(track: &F0Track<f64>, grid: &F0Grid<f64>) -> hcomb::Result<Vec<Vec<f64>>> {
    track
        .indices()
        .into_iter()
        .map(|i| Ok(grid.gaussian_label(i)?.0))
        .collect()
}

fn labels(a: LabelsArgs) -> Outcome {
    let grid = a.grid.grid()?;
    let track = read_track_csv(&a.track, &grid)?;
    write_matrix(&Matrix::from_rows(&label_matrix(&track, &grid)?)?, &a.out)?;
    Ok(())
}

fn filterbank(a: FilterbankArgs) -> Outcome {
    let grid = a.grid.grid()?;
    let bank = CombFilterBank::new(&grid, a.grid.order, None)?;
    write_matrix(bank.weights(), &a.out)?;
    Ok(())
}

fn verify(a: VerifyArgs) -> Outcome {
    let grid = a.grid.grid()?;
    let frames = frame_config(&a.grid, &grid)?;
    let bank = CombFilterBank::new(&grid, a.grid.order, None)?;
    let input = match &a.input {
        Some(p) => read_wav::<f64>(p)?,
        None => {
            if a.duration.is_nan() || a.duration <= 0.0 {
                return Err(Error::Config(format!(
                    "duration must be positive, got {}",
                    a.duration
                ))
                .into());
            }
            seeded_noise(a.seed, (a.duration * 48_000.0).round() as usize, 0.1)
        }
    };
    let r = equivalence_sweep(&bank, &input, &frames, a.tracks, a.seed)?;
    println!("max_dev={:e}", r.max_dev);
    println!("tracks={}", r.tracks);
    println!("frames={}", r.frames);
    println!("reference_macs={}", r.reference_macs);
    println!("inference_macs={}", r.inference_macs);
    if r.inference_macs > 0 {
        println!(
            "mac_ratio={:.1}",
            r.reference_macs as f64 / r.inference_macs as f64
        );
    }
    if !r.passed() {
        return Err(Failure::Verify(format!(
            "max deviation {:e} exceeds {EQUIVALENCE_TOLERANCE:e}",
            r.max_dev
        )));
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Outcome {
    let grid = a.grid.grid()?;
    let frames = frame_config(&a.grid, &grid)?;
    let cfg: LossConfig<f64> = a.loss.config();
    let clean = read_wav::<f64>(&a.clean)?;
    let est = read_wav::<f64>(&a.estimate)?;
    let est0 = match &a.gain_only {
        Some(p) => read_wav::<f64>(p)?,
        None => est.clone(),
    };
    for (name, b) in [("estimate", &est), ("gain-only estimate", &est0)] {
        if b.len() != clean.len() {
            return Err(Error::Shape(format!(
                "{name} has {} samples, clean {}",
                b.len(),
                clean.len()
            ))
            .into());
        }
    }
    let spec = |b: &AudioBuffer<f64>| -> hcomb::Result<_> {
        Ok(stft(&frame_signal(b, &frames)?, Window::SqrtHann))
    };
    let se = se_loss(&spec(&clean)?, &spec(&est)?, &spec(&est0)?, &cfg)?;

    let estimator = a.estimator.config(&grid);
    let (target, _) = estimate_track(&clean, &grid, &frames, &estimator)?;
    let (_, posteriors) = estimate_track(&est, &grid, &frames, &estimator)?;
    let pitch = bce_loss_mean(&label_matrix(&target, &grid)?, &posteriors)?;

    let mut report = MetricsReport::new();
    report
        .push("sdr_db", sdr(&clean, &est)?)
        .push("snr_db", snr(&clean, &est)?)
        .push("sdr_gain_only_db", sdr(&clean, &est0)?)
        .push("se_loss", se.total)
        .push("se_gain_only_magnitude", se.gain_only_magnitude)
        .push("se_magnitude", se.magnitude)
        .push("se_complex", se.complex)
        .push("pitch_loss", pitch)
        .push("total_loss", total_loss(se.total, pitch, &cfg));
    print!("{}", report.to_key_value());
    if let Some(p) = &a.csv {
        report.write_csv(p)?;
    }
    Ok(())
}
