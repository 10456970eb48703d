//! Grayscale image compression built on a truncated singular value
//! decomposition.
//!
//! The pipeline: parse a binary PGM into a pixel matrix, factor it with a
//! deterministic one-sided Jacobi SVD, keep the leading `k` singular
//! triplets, and serialize them into a compact binary container. The quality
//! of a given `k` is scored with MSE, PSNR and SSIM plus an energy-ratio
//! metric that drives a three-zone quality classification.

pub mod codec;
pub mod imageio;
pub mod linalg;
pub mod metrics;

pub use codec::{
    choose_rank, compression_ratio, compression_ratio_bytes, decode, encode, encode_factors,
    payload_scalar_count, read_container, write_container, CodecError, CompressedImage, Precision,
    RankSelection, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use imageio::{
    clamp_round_u8, image_to_matrix, matrix_to_image, read_pgm, to_gray, write_pgm, ImageError,
    ImageGray,
};
pub use linalg::{
    frobenius_sq, reconstruct, svd, svd_call_count, truncate, LinalgError, Matrix, SvdFactors,
    SvdOptions, TruncatedSvd,
};
pub use metrics::{
    classify_zone, cumulative_energy, energy_ratio, energy_ratio_truncated, mse, psnr,
    psnr_with_peak, quality_report, ssim, MetricsError, QualityReport, SsimMode, SsimParams, Zone,
};
