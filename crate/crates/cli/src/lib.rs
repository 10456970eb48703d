//! Command line surface for the compression pipeline: compress a PGM into a
//! container, decompress one back, report quality metrics, and sweep the
//! retained rank to emit a CSV of every metric per rank.
//!
//! Exit codes: 0 on success, 2 for usage, I/O and format problems, 3 when
//! the factorization itself fails to converge.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use svdc_core::{
    choose_rank, classify_zone, compression_ratio, decode, encode_factors, energy_ratio,
    energy_ratio_truncated, image_to_matrix, matrix_to_image, mse, psnr, psnr_with_peak,
    read_container, read_pgm, reconstruct, ssim, svd, truncate, write_container, write_pgm,
    CodecError, ImageError, LinalgError, Matrix, MetricsError, Precision, SsimMode, SsimParams,
    SvdFactors, SvdOptions, Zone,
};
use thiserror::Error;

/// Top-level parser.
#[derive(Debug, Parser)]
#[command(
    name = "svdc",
    about = "Grayscale image compression by truncated singular value decomposition",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a binary PGM into an SVDC container.
    #[command(group(ArgGroup::new("selector").required(true).multiple(false)))]
    Compress {
        /// Input image, binary PGM (P5).
        input: PathBuf,
        /// Output container path.
        output: PathBuf,
        /// Number of singular triplets to keep.
        #[arg(long, group = "selector", value_name = "K")]
        rank: Option<usize>,
        /// Smallest retained energy fraction to reach, in (0, 1].
        #[arg(long, group = "selector", value_name = "E")]
        target_e: Option<f64>,
        /// Scalar width of the stored factors.
        #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
        precision: PrecisionArg,
    },
    /// Reconstruct a PGM from an SVDC container.
    Decompress {
        /// Input container.
        input: PathBuf,
        /// Output image path.
        output: PathBuf,
    },
    /// Compare an original PGM against another PGM or a container.
    Metrics {
        /// Reference image, binary PGM (P5).
        original: PathBuf,
        /// Image or container to score against the reference.
        other: PathBuf,
        /// SSIM flavor.
        #[arg(long, value_enum, default_value_t = SsimModeArg::Windowed)]
        ssim_mode: SsimModeArg,
        /// Use 255 as the PSNR peak instead of the reference's maximum.
        #[arg(long)]
        peak_255: bool,
    },
    /// Score a range of ranks in one pass and emit a CSV.
    Sweep {
        /// Input image, binary PGM (P5).
        input: PathBuf,
        /// CSV destination; standard output when omitted.
        output: Option<PathBuf>,
        /// Ranks to evaluate: comma-separated values and/or inclusive
        /// `A..B` or `A..B:STEP` ranges. Defaults to 8,16,...,448 clipped
        /// to the image.
        #[arg(long, value_name = "LIST")]
        ks: Option<String>,
        /// SSIM flavor.
        #[arg(long, value_enum, default_value_t = SsimModeArg::Windowed)]
        ssim_mode: SsimModeArg,
    },
}

/// Scalar width choice on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(arg: PrecisionArg) -> Precision {
        match arg {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

/// SSIM flavor choice on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SsimModeArg {
    Global,
    Windowed,
}

impl From<SsimModeArg> for SsimMode {
    fn from(arg: SsimModeArg) -> SsimMode {
        match arg {
            SsimModeArg::Global => SsimMode::Global,
            SsimModeArg::Windowed => SsimMode::Windowed,
        }
    }
}

/// Failures surfaced to the shell.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: ImageError },
    #[error("{}: {source}", path.display())]
    Container { path: PathBuf, source: CodecError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("factorization failed: {0}")]
    Numeric(LinalgError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Shell exit code for this failure: 3 for numeric breakdowns, 2 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compress {
            input,
            output,
            rank,
            target_e,
            precision,
        } => cmd_compress(&input, &output, rank, target_e, precision.into()),
        Command::Decompress { input, output } => cmd_decompress(&input, &output),
        Command::Metrics {
            original,
            other,
            ssim_mode,
            peak_255,
        } => cmd_metrics(&original, &other, ssim_mode.into(), peak_255),
        Command::Sweep {
            input,
            output,
            ks,
            ssim_mode,
        } => cmd_sweep(&input, output.as_deref(), ks.as_deref(), ssim_mode.into()),
    }
}

fn cmd_compress(
    input: &Path,
    output: &Path,
    rank: Option<usize>,
    target_e: Option<f64>,
    precision: Precision,
) -> Result<(), CliError> {
    let image = load_image_matrix(input)?;
    let factors = factorize(&image)?;
    let k = match (rank, target_e) {
        (Some(k), None) => k,
        (None, Some(target)) => {
            choose_rank(&factors, target)
                .map_err(|source| container_error(input, source))?
                .k
        }
        _ => unreachable!("the argument group admits exactly one selector"),
    };
    let e = energy_ratio(&factors, k).map_err(|source| match source {
        MetricsError::RankOutOfRange { k, max } => {
            container_error(input, CodecError::RankOutOfRange { k, max })
        }
        other => CliError::Metrics(other),
    })?;
    let zone = classify_zone(e)?;
    let ratio = compression_ratio(factors.rows(), factors.cols(), k)
        .map_err(|source| container_error(input, source))?;

    let peak = image.as_slice().iter().fold(0.0_f64, |acc, &x| acc.max(x));
    let compressed = encode_factors(&factors, peak, k, precision)
        .map_err(|source| container_error(input, source))?;
    let bytes =
        write_container(&compressed).map_err(|source| container_error(output, source))?;
    fs::write(output, bytes).map_err(|source| CliError::Write {
        path: output.to_path_buf(),
        source,
    })?;

    println!("k={k} e={e} zone={zone} ratio={ratio}");
    Ok(())
}

fn cmd_decompress(input: &Path, output: &Path) -> Result<(), CliError> {
    let bytes = read_file(input)?;
    let compressed =
        read_container(&bytes).map_err(|source| container_error(input, source))?;
    let pixels = decode(&compressed).map_err(|source| container_error(input, source))?;
    let image = matrix_to_image(&pixels)
        .expect("decoded pixels are finite integers in the 8-bit range");
    fs::write(output, write_pgm(&image)).map_err(|source| CliError::Write {
        path: output.to_path_buf(),
        source,
    })
}

fn cmd_metrics(
    original_path: &Path,
    other_path: &Path,
    mode: SsimMode,
    peak_255: bool,
) -> Result<(), CliError> {
    let original = load_image_matrix(original_path)?;
    let other_bytes = read_file(other_path)?;

    // A container is recognized by its magic bytes, not by file name.
    let container = if other_bytes.starts_with(&svdc_core::CONTAINER_MAGIC) {
        Some(
            read_container(&other_bytes)
                .map_err(|source| container_error(other_path, source))?,
        )
    } else {
        None
    };
    let other = match &container {
        Some(c) => decode(c).map_err(|source| container_error(other_path, source))?,
        None => {
            let image = read_pgm(&other_bytes).map_err(|source| CliError::Image {
                path: other_path.to_path_buf(),
                source,
            })?;
            image_to_matrix(&image)
        }
    };

    let mse_value = mse(&original, &other)?;
    let psnr_value = if peak_255 {
        psnr_with_peak(&original, &other, 255.0)?
    } else {
        psnr(&original, &other)?
    };
    let params = SsimParams {
        mode,
        ..SsimParams::default()
    };
    let ssim_value = ssim(&original, &other, &params)?;

    println!("mse={mse_value}");
    println!("psnr_db={psnr_value}");
    println!("ssim={ssim_value}");
    if let Some(c) = container {
        let t = c
            .truncated()
            .map_err(|source| container_error(other_path, source))?;
        let e = energy_ratio_truncated(&t)?;
        let zone = classify_zone(e)?;
        println!("e={e}");
        println!("zone={zone}");
    }
    Ok(())
}

fn cmd_sweep(
    input: &Path,
    output: Option<&Path>,
    ks: Option<&str>,
    mode: SsimMode,
) -> Result<(), CliError> {
    let image = load_image_matrix(input)?;
    let max_rank = image.rows().min(image.cols());
    let ks = match ks {
        Some(spec) => parse_ks(spec)?,
        None => default_ks(max_rank),
    };
    let params = SsimParams {
        mode,
        ..SsimParams::default()
    };
    let rows = sweep(&image, &ks, &params)?;

    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    match output {
        Some(path) => fs::write(path, csv).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// Header of the sweep CSV, fixed.
pub const SWEEP_CSV_HEADER: &str = "k,mse,psnr_db,ssim,energy_ratio,zone,compression_ratio";

/// One CSV row of a rank sweep. The pixel metrics (`mse`, `psnr_db`,
/// `ssim`) score the clamped-and-rounded reconstruction, exactly what
/// decompression would write; `energy_ratio` is spectrum-side.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub energy_ratio: f64,
    pub zone: Zone,
    pub compression_ratio: f64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.k,
            self.mse,
            self.psnr_db,
            self.ssim,
            self.energy_ratio,
            self.zone.label(),
            self.compression_ratio
        )
    }
}

/// Scores every rank in `ks` against `image`, factoring the image exactly
/// once. `ks` must be positive, ascending and within the image's rank
/// bound.
pub fn sweep(
    image: &Matrix,
    ks: &[usize],
    params: &SsimParams,
) -> Result<Vec<SweepRow>, CliError> {
    let max_rank = image.rows().min(image.cols());
    if ks.is_empty() {
        return Err(CliError::Usage("the k list is empty".to_string()));
    }
    for (&k, next) in ks.iter().zip(ks.iter().skip(1).map(Some).chain([None])) {
        if k == 0 || k > max_rank {
            return Err(CliError::Usage(format!(
                "k={k} is outside the valid range 1..={max_rank} for this image"
            )));
        }
        if let Some(&n) = next {
            if n <= k {
                return Err(CliError::Usage(
                    "the k list must be strictly increasing".to_string(),
                ));
            }
        }
    }
    let factors = factorize(image)?;
    ks.iter().map(|&k| score_rank(image, &factors, k, params)).collect()
}

fn score_rank(
    image: &Matrix,
    factors: &SvdFactors,
    k: usize,
    params: &SsimParams,
) -> Result<SweepRow, CliError> {
    let truncated = truncate(factors, k).map_err(CliError::Numeric)?;
    let pixels = quantize_pixels(&reconstruct(&truncated));
    let e = energy_ratio(factors, k)?;
    Ok(SweepRow {
        k,
        mse: mse(image, &pixels)?,
        psnr_db: psnr(image, &pixels)?,
        ssim: ssim(image, &pixels, params)?,
        energy_ratio: e,
        zone: classify_zone(e)?,
        compression_ratio: compression_ratio(image.rows(), image.cols(), k)
            .map_err(|source| CliError::Usage(source.to_string()))?,
    })
}

/// Snaps a real-valued reconstruction to the 8-bit pixel grid, the same
/// way decompression does before writing a PGM.
fn quantize_pixels(reconstruction: &Matrix) -> Matrix {
    let image = matrix_to_image(reconstruction)
        .expect("reconstructions of finite factors are finite");
    image_to_matrix(&image)
}

/// Parses a k list: comma-separated entries, each either a number or an
/// inclusive `A..B` / `A..B:STEP` range. The result is sorted and deduped.
fn parse_ks(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = |msg: String| CliError::Usage(format!("invalid k list {spec:?}: {msg}"));
    let parse_num = |text: &str| -> Result<usize, CliError> {
        text.trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("{text:?} is not a number")))
    };
    let mut ks = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if let Some((from, rest)) = part.split_once("..") {
            let (to, step) = match rest.split_once(':') {
                Some((to, step)) => (to, parse_num(step)?),
                None => (rest, 1),
            };
            let (from, to) = (parse_num(from)?, parse_num(to)?);
            if step == 0 {
                return Err(bad("range step must be positive".to_string()));
            }
            if from > to {
                return Err(bad(format!("range {from}..{to} is reversed")));
            }
            ks.extend((from..=to).step_by(step));
        } else {
            ks.push(parse_num(part)?);
        }
    }
    ks.sort_unstable();
    ks.dedup();
    if ks.first() == Some(&0) {
        return Err(bad("k must be at least 1".to_string()));
    }
    Ok(ks)
}

/// The standard sweep grid, 8 to 448 in steps of 8, clipped to the image's
/// rank bound. Images too small for the grid get their full rank as the
/// single point.
fn default_ks(max_rank: usize) -> Vec<usize> {
    let ks: Vec<usize> = (8..=448).step_by(8).take_while(|&k| k <= max_rank).collect();
    if ks.is_empty() {
        vec![max_rank]
    } else {
        ks
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn load_image_matrix(path: &Path) -> Result<Matrix, CliError> {
    let bytes = read_file(path)?;
    let image = read_pgm(&bytes).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(image_to_matrix(&image))
}

fn factorize(image: &Matrix) -> Result<SvdFactors, CliError> {
    svd(image, &SvdOptions::default()).map_err(CliError::Numeric)
}

/// Routes a codec failure to the right exit class: convergence failures
/// inside the factorization are numeric (exit 3), everything else is a
/// format or usage problem (exit 2).
fn container_error(path: &Path, source: CodecError) -> CliError {
    match source {
        CodecError::Linalg(inner @ LinalgError::NoConvergence { .. }) => {
            CliError::Numeric(inner)
        }
        other => CliError::Container {
            path: path.to_path_buf(),
            source: other,
        },
    }
}
