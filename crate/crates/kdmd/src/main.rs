//! Command-line front end: simulate test systems, fit companion DMD, score
//! DFT equivalence and KMD-Quality, and run ensemble sweeps.
//!
//! Exit codes: 0 on success, 2 on configuration/usage errors, 3 on numerical
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use serde_json::json;

use kdmd::dft::{equivalence_via_projection, fit_mean_subtracted, sufficiency_scan};
use kdmd::dmd::{fit_companion, DmdModel, SpectrumSet, TimeSeries};
use kdmd::denoise::{add_noise, noise_resistant_companion, tls_companion, NoiseSpec};
use kdmd::error::KdmdError;
use kdmd::linalg::{CMat, SvdThreshold};
use kdmd::preprocess::{delay_embed, delay_then_ms, ms_then_delay};
use kdmd::pruning::{kmd_quality, sigma_nontriv, DEFAULT_NORM_THRESHOLD_REL, MATCH_TOL};
use kdmd::sweep::{
    export, run_sweep, ExportFormat, Indicator, Pipeline as SweepPipeline, QualityTarget,
    SweepConfig, SweepSystem,
};
use kdmd::systems::{
    export_csv, ingest_csv, lti_trajectory, make_lti, vdp_trajectory, CsvComplexFormat, LtiPreset,
    VdpConfig,
};

#[derive(Parser)]
#[command(name = "kdmd", version, about = "Companion-matrix DMD toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Lti1a,
    Lti1b,
    Lti3,
    Vdp,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    /// Delay embedding only.
    Raw,
    /// Mean subtraction, then delay embedding.
    MsDelay,
    /// Delay embedding, then mean subtraction.
    DelayMs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    /// The system spectrum σ(Λ).
    Sigma,
    /// σ(Λ) without eigenvalue 1.
    SigmaMinusOne,
    /// σ(Λ) plus eigenvalue 1.
    SigmaPlusOne,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenoiseMethod {
    /// Low-rank (TLS-style) truncation before the fit.
    Tls,
    /// Premultiplication by a disjoint filter window.
    NoiseResistant,
}

/// Where the data comes from: a built-in system or a CSV file.
#[derive(Args)]
struct SourceArgs {
    /// Built-in test system.
    #[arg(long, value_enum)]
    system: Option<SystemArg>,
    /// CSV file (rows = observables, columns = snapshots).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Use paired re,im columns instead of "a+bi" cells for CSV data.
    #[arg(long, default_value_t = false)]
    paired: bool,
    /// Seed for system generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of observables for LTI systems.
    #[arg(long, default_value_t = 1)]
    observables: usize,
    /// Regenerate the dictionary until it has full column rank.
    #[arg(long, default_value_t = false)]
    full_rank: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory of a built-in system and write it as CSV.
    Simulate {
        #[command(flatten)]
        source: SourceArgs,
        /// Trajectory length (number of snapshots).
        #[arg(long, default_value_t = 36)]
        snapshots: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit companion DMD once and report coefficients and spectrum.
    Fit {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 10)]
        theta: usize,
        #[arg(long, default_value_t = 0)]
        delays: usize,
        #[arg(long, value_enum, default_value_t = PipelineArg::Raw)]
        pipeline: PipelineArg,
        /// Relative SVD truncation threshold.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative distance of the mean-subtracted fit to the temporal DFT.
    DftDistance {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 10)]
        theta: usize,
        #[arg(long, default_value_t = 6)]
        delays: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mode-norm pruning of a fitted spectrum.
    Prune {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 10)]
        theta: usize,
        #[arg(long, default_value_t = 0)]
        delays: usize,
        #[arg(long, value_enum, default_value_t = PipelineArg::Raw)]
        pipeline: PipelineArg,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// KMD-Quality of a fit against the system spectrum.
    KmdQuality {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 10)]
        theta: usize,
        #[arg(long, default_value_t = 6)]
        delays: usize,
        #[arg(long, value_enum, default_value_t = PipelineArg::Raw)]
        pipeline: PipelineArg,
        #[arg(long, value_enum, default_value_t = TargetArg::Sigma)]
        target: TargetArg,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ensemble sweep of an indicator over (theta, delays).
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        /// Comma-separated theta values, e.g. 2,3,4 or a range 2..12.
        #[arg(long, default_value = "2..12")]
        theta: String,
        /// Comma-separated delay values.
        #[arg(long, default_value = "0,3,6,13")]
        delays: String,
        #[arg(long, default_value_t = 10)]
        ensemble: usize,
        #[arg(long, value_enum, default_value_t = PipelineArg::DelayMs)]
        pipeline: PipelineArg,
        /// dft-distance | kmd-quality | pruned-count
        #[arg(long, default_value = "dft-distance")]
        indicator: String,
        #[arg(long, value_enum, default_value_t = TargetArg::Sigma)]
        target: TargetArg,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a noise-robust companion DMD variant on a noisy trajectory.
    Denoise {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 10)]
        theta: usize,
        #[arg(long, default_value_t = 20)]
        delays: usize,
        #[arg(long, value_enum, default_value_t = DenoiseMethod::Tls)]
        method: DenoiseMethod,
        #[arg(long, default_value_t = 7)]
        rank: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        /// Filter window width for the noise-resistant method.
        #[arg(long, default_value_t = 14)]
        filter_width: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan the DFT distance over theta for a lower bound on the
    /// invariant-subspace dimension.
    Sufficiency {
        #[command(flatten)]
        source: SourceArgs,
        /// Assumed upper bound r_max; the scan uses d = r_max - 1 delays.
        #[arg(long, default_value_t = 12)]
        rmax: usize,
        /// Theta values to scan (list or range; default 2..r_max+2).
        #[arg(long)]
        theta: Option<String>,
        /// Trajectory length when simulating (default: long enough).
        #[arg(long)]
        snapshots: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_counts(spec: &str) -> Result<Vec<usize>, KdmdError> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let lo: usize = a
            .trim()
            .parse()
            .map_err(|_| KdmdError::InvalidInput(format!("bad range start '{a}'")))?;
        let hi: usize = b
            .trim()
            .parse()
            .map_err(|_| KdmdError::InvalidInput(format!("bad range end '{b}'")))?;
        if hi < lo {
            return Err(KdmdError::InvalidInput(format!("empty range '{spec}'")));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| KdmdError::InvalidInput(format!("bad count '{s}'")))
        })
        .collect()
}

fn csv_format(paired: bool) -> CsvComplexFormat {
    if paired {
        CsvComplexFormat::PairedColumns
    } else {
        CsvComplexFormat::Combined
    }
}

/// Materialize the data source as a trajectory of at least `min_snapshots`.
fn load_series(source: &SourceArgs, min_snapshots: usize) -> Result<TimeSeries, KdmdError> {
    match (&source.input, source.system) {
        (Some(path), None) => {
            let z = ingest_csv(path, csv_format(source.paired))?;
            if z.num_snapshots() < min_snapshots {
                return Err(KdmdError::InvalidInput(format!(
                    "input has {} snapshots but {min_snapshots} are needed",
                    z.num_snapshots()
                )));
            }
            Ok(z)
        }
        (None, Some(sys)) => synth_series(sys, source, min_snapshots),
        (Some(_), Some(_)) => Err(KdmdError::InvalidInput(
            "--system and --input are mutually exclusive".into(),
        )),
        (None, None) => Err(KdmdError::InvalidInput(
            "provide a data source: --system or --input".into(),
        )),
    }
}

fn synth_series(
    sys: SystemArg,
    source: &SourceArgs,
    snapshots: usize,
) -> Result<TimeSeries, KdmdError> {
    match sys {
        SystemArg::Vdp => {
            let cfg = VdpConfig { num_samples: snapshots, ..VdpConfig::default() };
            let dict = CMat::from_shape_fn((1, 2), |(_, j)| {
                C64::new(if j == 0 { 1.0 } else { 0.4 }, 0.0)
            });
            vdp_trajectory(&cfg, &dict)
        }
        _ => {
            let preset = lti_preset(sys).expect("non-vdp arm");
            let system = make_lti(preset, source.observables, source.full_rank, source.seed)?;
            lti_trajectory(&system, snapshots)
        }
    }
}

fn lti_preset(sys: SystemArg) -> Option<LtiPreset> {
    match sys {
        SystemArg::Lti1a => Some(LtiPreset::Lti1a),
        SystemArg::Lti1b => Some(LtiPreset::Lti1b),
        SystemArg::Lti3 => Some(LtiPreset::Lti3),
        SystemArg::Vdp => None,
    }
}

fn reference_spectrum(source: &SourceArgs) -> Result<Option<SpectrumSet>, KdmdError> {
    match source.system.and_then(lti_preset) {
        Some(preset) => {
            let system = make_lti(preset, source.observables, source.full_rank, source.seed)?;
            Ok(Some(system.eigenvalues))
        }
        None => Ok(None),
    }
}

fn apply_pipeline(
    z: &TimeSeries,
    pipeline: PipelineArg,
    d: usize,
) -> Result<TimeSeries, KdmdError> {
    match pipeline {
        PipelineArg::Raw => delay_embed(z, d),
        PipelineArg::MsDelay => ms_then_delay(z, d),
        PipelineArg::DelayMs => delay_then_ms(z, d),
    }
}

fn complex_json(z: &C64) -> serde_json::Value {
    json!({ "re": z.re, "im": z.im })
}

fn model_json(model: &DmdModel) -> serde_json::Value {
    json!({
        "companion_order": model.companion_order,
        "degenerate": model.degenerate,
        "c_star": model.c_star.iter().map(complex_json).collect::<Vec<_>>(),
        "eigenvalues": model.eigenvalues.iter().map(complex_json).collect::<Vec<_>>(),
        "residual_norm": kdmd::linalg::vec_norm(&model.residual),
        "pipeline": model.pipeline,
    })
}

fn emit(value: &serde_json::Value, out: &Option<PathBuf>) -> Result<(), KdmdError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| KdmdError::InvalidInput(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn make_tol(tol: f64) -> Result<SvdThreshold, KdmdError> {
    SvdThreshold::new(tol)
}

fn run(cli: Cli) -> Result<(), KdmdError> {
    match cli.command {
        Command::Simulate { source, snapshots, out } => {
            if source.input.is_some() {
                return Err(KdmdError::InvalidInput("simulate generates data; --input is not accepted".into()));
            }
            let z = load_series(&source, snapshots.max(2))?;
            export_csv(&z, Path::new(&out), csv_format(source.paired))?;
            Ok(())
        }
        Command::Fit { source, theta, delays, pipeline, tol, out } => {
            let tol = make_tol(tol)?;
            let z = load_series(&source, theta + delays + 1)?;
            let z = z.truncate_snapshots(theta + delays + 1)?;
            let prepared = apply_pipeline(&z, pipeline, delays)?;
            let model = fit_companion(&prepared, tol)?;
            emit(&model_json(&model), &out)
        }
        Command::DftDistance { source, theta, delays, tol, out } => {
            let tol = make_tol(tol)?;
            let z = load_series(&source, theta + delays + 1)?;
            let z = z.truncate_snapshots(theta + delays + 1)?;
            let (model, report) = fit_mean_subtracted(&z, delays, tol)?;
            let centered = delay_then_ms(&z, delays)?;
            let via_projection = equivalence_via_projection(&centered, tol)?;
            emit(
                &json!({
                    "theta": report.theta,
                    "delays": report.d,
                    "distance": report.distance,
                    "equivalent": report.equivalent,
                    "equivalent_via_projection": via_projection,
                    "decision_tol": report.decision_tol,
                    "degenerate": model.degenerate,
                }),
                &out,
            )
        }
        Command::Prune { source, theta, delays, pipeline, tol, out } => {
            let tol = make_tol(tol)?;
            let z = load_series(&source, theta + delays + 1)?;
            let z = z.truncate_snapshots(theta + delays + 1)?;
            let prepared = apply_pipeline(&z, pipeline, delays)?;
            let model = fit_companion(&prepared, tol)?;
            let pruned = sigma_nontriv(&model, DEFAULT_NORM_THRESHOLD_REL)?;
            emit(
                &json!({
                    "kept": pruned.kept.values().iter().map(complex_json).collect::<Vec<_>>(),
                    "discarded": pruned.discarded.values().iter().map(complex_json).collect::<Vec<_>>(),
                    "mode_norms": pruned.mode_norms,
                    "norm_threshold": pruned.norm_threshold,
                }),
                &out,
            )
        }
        Command::KmdQuality { source, theta, delays, pipeline, target, tol, out } => {
            let tol = make_tol(tol)?;
            let sigma = reference_spectrum(&source)?.ok_or_else(|| {
                KdmdError::InvalidInput(
                    "kmd-quality needs a built-in LTI system for its reference spectrum".into(),
                )
            })?;
            let one = SpectrumSet::new([C64::new(1.0, 0.0)], MATCH_TOL);
            let b = match target {
                TargetArg::Sigma => sigma,
                TargetArg::SigmaMinusOne => sigma.difference(&one),
                TargetArg::SigmaPlusOne => sigma.union(&one),
            };
            let z = load_series(&source, theta + delays + 1)?;
            let z = z.truncate_snapshots(theta + delays + 1)?;
            let prepared = apply_pipeline(&z, pipeline, delays)?;
            let model = fit_companion(&prepared, tol)?;
            let report = kmd_quality(&prepared, &b, &model.c_star)?;
            emit(
                &json!({
                    "quality": report.quality,
                    "rho_subset": report.rho_subset,
                    "delta_trivial": report.delta_trivial,
                    "theta": theta,
                    "delays": delays,
                }),
                &out,
            )
        }
        Command::Sweep {
            source,
            theta,
            delays,
            ensemble,
            pipeline,
            indicator,
            target,
            tol,
            format,
            out,
        } => {
            let tol = make_tol(tol)?;
            let system = match source.system {
                Some(SystemArg::Vdp) => SweepSystem::VanDerPol,
                Some(sys) => SweepSystem::Lti {
                    preset: lti_preset(sys).expect("lti arm"),
                    m: source.observables,
                    full_rank_dictionary: source.full_rank,
                },
                None => {
                    return Err(KdmdError::InvalidInput(
                        "sweep needs a built-in system (--system)".into(),
                    ))
                }
            };
            let indicator = match indicator.as_str() {
                "dft-distance" => Indicator::DftDistance,
                "kmd-quality" => Indicator::KmdQuality(match target {
                    TargetArg::Sigma => QualityTarget::Sigma,
                    TargetArg::SigmaMinusOne => QualityTarget::SigmaMinusOne,
                    TargetArg::SigmaPlusOne => QualityTarget::SigmaPlusOne,
                }),
                "pruned-count" => Indicator::PrunedSpectrum,
                other => {
                    return Err(KdmdError::InvalidInput(format!(
                        "unknown indicator '{other}' (dft-distance | kmd-quality | pruned-count)"
                    )))
                }
            };
            let cfg = SweepConfig {
                system,
                master_seed: source.seed,
                theta_values: parse_counts(&theta)?,
                delay_values: parse_counts(&delays)?,
                ensemble_size: ensemble,
                indicator,
                pipeline: match pipeline {
                    PipelineArg::Raw => SweepPipeline::Raw,
                    PipelineArg::MsDelay => SweepPipeline::MsThenDelay,
                    PipelineArg::DelayMs => SweepPipeline::DelayThenMs,
                },
                tol,
            };
            let result = run_sweep(&cfg)?;
            let format = match format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
                FormatArg::Svg => ExportFormat::Svg,
            };
            export(&result, format, Path::new(&out))?;
            Ok(())
        }
        Command::Denoise {
            source,
            theta,
            delays,
            method,
            rank,
            noise_std,
            filter_width,
            tol,
            out,
        } => {
            let tol = make_tol(tol)?;
            let needed = match method {
                DenoiseMethod::Tls => theta + delays + 1,
                // Training window + 1-snapshot gap + filter window.
                DenoiseMethod::NoiseResistant => theta + delays + 2 + filter_width + delays,
            };
            let clean = load_series(&source, needed)?;
            let noisy = add_noise(&clean, &NoiseSpec::new(noise_std, source.seed ^ 0xD15EA5E)?);
            let model = match method {
                DenoiseMethod::Tls => {
                    let window = noisy.truncate_snapshots(theta + delays + 1)?;
                    let delayed = delay_embed(&window, delays)?;
                    tls_companion(&delayed, rank.min(delayed.data.nrows()).min(delayed.data.ncols()), tol)?
                }
                DenoiseMethod::NoiseResistant => {
                    let train_len = theta + delays + 1;
                    let train = noisy.truncate_snapshots(train_len)?;
                    let filter_len = filter_width + delays;
                    let filter_data = noisy
                        .data
                        .slice(ndarray::s![.., train_len + 1..train_len + 1 + filter_len])
                        .to_owned();
                    let filter = TimeSeries::new(filter_data, "filter")?;
                    noise_resistant_companion(&train, &filter, delays, tol)?
                }
            };
            let pruned = sigma_nontriv(&model, DEFAULT_NORM_THRESHOLD_REL);
            let kept = match &pruned {
                Ok(p) => p.kept.values().iter().map(complex_json).collect::<Vec<_>>(),
                Err(_) => Vec::new(),
            };
            emit(
                &json!({
                    "model": model_json(&model),
                    "pruned_spectrum": kept,
                    "noise_std": noise_std,
                }),
                &out,
            )
        }
        Command::Sufficiency { source, rmax, theta, snapshots, tol, out } => {
            let tol = make_tol(tol)?;
            let theta_values = match theta {
                Some(spec) => parse_counts(&spec)?,
                None => (2..=rmax + 2).collect(),
            };
            let theta_max = *theta_values.iter().max().ok_or_else(|| {
                KdmdError::InvalidInput("sufficiency: empty theta list".into())
            })?;
            let needed = theta_max + rmax; // theta_max + (rmax - 1) + 1
            let z = load_series(&source, snapshots.unwrap_or(needed).max(needed))?;
            let report = sufficiency_scan(&z, rmax, &theta_values, tol)?;
            emit(
                &serde_json::to_value(&report)
                    .map_err(|e| KdmdError::InvalidInput(e.to_string()))?,
                &out,
            )
        }
    }
}

fn exit_code_for(err: &KdmdError) -> u8 {
    match err {
        KdmdError::InvalidInput(_)
        | KdmdError::DimensionMismatch(_)
        | KdmdError::CsvParse(_)
        | KdmdError::Io(_) => 2,
        KdmdError::NonFinite(_)
        | KdmdError::DegenerateSpectrum
        | KdmdError::NotCentered(_)
        | KdmdError::MatchingFailure(_)
        | KdmdError::Backend(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
