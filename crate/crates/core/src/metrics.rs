//! Quality metrics between an image and its reconstruction: MSE, PSNR and
//! SSIM, plus a spectral energy-ratio measure with a three-zone quality
//! classification.

use std::fmt;

use thiserror::Error;

use crate::linalg::{
    self, frobenius_sq, sum_squares_small_first, LinalgError, Matrix, SvdFactors, TruncatedSvd,
};

/// Errors produced by the metric computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("reference image peak is zero, PSNR is undefined")]
    ZeroPeak,
    #[error("image {rows}x{cols} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        window: usize,
    },
    #[error("rank {k} out of range, valid range is 1..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("spectrum carries no energy")]
    ZeroEnergy,
    #[error("energy ratio {value} is outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("bad ssim parameters: {0}")]
    BadParams(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Mean squared error between two equally shaped matrices.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<f64, MetricsError> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / (a.rows() * a.cols()) as f64)
}

/// Peak signal-to-noise ratio in decibels, with the peak taken from the
/// largest entry of `original`. Identical inputs give `f64::INFINITY`.
pub fn psnr(original: &Matrix, other: &Matrix) -> Result<f64, MetricsError> {
    let peak = original
        .as_slice()
        .iter()
        .fold(f64::NEG_INFINITY, |a, &x| a.max(x));
    psnr_with_peak(original, other, peak)
}

/// PSNR with an explicitly supplied peak, e.g. the nominal 255 of 8-bit
/// images regardless of the actual brightest pixel.
pub fn psnr_with_peak(original: &Matrix, other: &Matrix, peak: f64) -> Result<f64, MetricsError> {
    if peak * peak == 0.0 || !peak.is_finite() {
        return Err(MetricsError::ZeroPeak);
    }
    let err = mse(original, other)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// Whole-image statistics versus an 11x11 Gaussian sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsimMode {
    Global,
    Windowed,
}

/// SSIM stabilization constants and window geometry.
#[derive(Debug, Clone)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L` of the pixel values.
    pub dynamic_range: f64,
    pub mode: SsimMode,
    /// Side length of the Gaussian window; odd, at least 3.
    pub window_size: usize,
    pub window_sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            mode: SsimMode::Windowed,
            window_size: 11,
            window_sigma: 1.5,
        }
    }
}

impl SsimParams {
    fn validate(&self) -> Result<(), MetricsError> {
        if !(self.k1 > 0.0 && self.k1.is_finite() && self.k2 > 0.0 && self.k2.is_finite()) {
            return Err(MetricsError::BadParams("k1 and k2 must be positive"));
        }
        if !(self.dynamic_range > 0.0 && self.dynamic_range.is_finite()) {
            return Err(MetricsError::BadParams("dynamic range must be positive"));
        }
        if self.window_size < 3 || self.window_size.is_multiple_of(2) {
            return Err(MetricsError::BadParams("window size must be odd and >= 3"));
        }
        if !(self.window_sigma > 0.0 && self.window_sigma.is_finite()) {
            return Err(MetricsError::BadParams("window sigma must be positive"));
        }
        Ok(())
    }
}

/// Structural similarity between two equally shaped matrices.
///
/// Both modes evaluate the product of the luminance term and the combined
/// contrast-structure term `(2 cov + C2) / (var_a + var_b + C2)`; with the
/// customary `C3 = C2 / 2` the three-component form collapses to exactly
/// this product. Windowed mode averages over every position where the full
/// window fits, without any padding.
pub fn ssim(a: &Matrix, b: &Matrix, params: &SsimParams) -> Result<f64, MetricsError> {
    check_same_shape(a, b)?;
    params.validate()?;
    let c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
    let c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
    match params.mode {
        SsimMode::Global => Ok(ssim_global(a, b, c1, c2)),
        SsimMode::Windowed => ssim_windowed(a, b, params, c1, c2),
    }
}

fn ssim_point(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    let luminance = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
    let contrast_structure = (2.0 * cov + c2) / (var_a + var_b + c2);
    luminance * contrast_structure
}

fn ssim_global(a: &Matrix, b: &Matrix, c1: f64, c2: f64) -> f64 {
    let n = (a.rows() * a.cols()) as f64;
    let mu_a = a.as_slice().iter().sum::<f64>() / n;
    let mu_b = b.as_slice().iter().sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let dx = x - mu_a;
        let dy = y - mu_b;
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    ssim_point(mu_a, mu_b, var_a / n, var_b / n, cov / n, c1, c2)
}

fn ssim_windowed(
    a: &Matrix,
    b: &Matrix,
    params: &SsimParams,
    c1: f64,
    c2: f64,
) -> Result<f64, MetricsError> {
    let (rows, cols) = (a.rows(), a.cols());
    let w = params.window_size;
    if rows < w || cols < w {
        return Err(MetricsError::ImageTooSmall {
            rows,
            cols,
            window: w,
        });
    }
    let g = gaussian_window(w, params.window_sigma);

    let pa = a.as_slice();
    let pb = b.as_slice();
    let mut prod_aa = vec![0.0; pa.len()];
    let mut prod_bb = vec![0.0; pa.len()];
    let mut prod_ab = vec![0.0; pa.len()];
    for i in 0..pa.len() {
        prod_aa[i] = pa[i] * pa[i];
        prod_bb[i] = pb[i] * pb[i];
        prod_ab[i] = pa[i] * pb[i];
    }
    // Gaussian-weighted window moments for each valid center, via one
    // separable pass per field.
    let mu_a = filter_valid(pa, rows, cols, &g);
    let mu_b = filter_valid(pb, rows, cols, &g);
    let raw_aa = filter_valid(&prod_aa, rows, cols, &g);
    let raw_bb = filter_valid(&prod_bb, rows, cols, &g);
    let raw_ab = filter_valid(&prod_ab, rows, cols, &g);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        // Weighted second moments can dip a hair below zero on constant
        // windows; clamp before use.
        let var_a = (raw_aa[i] - mu_a[i] * mu_a[i]).max(0.0);
        let var_b = (raw_bb[i] - mu_b[i] * mu_b[i]).max(0.0);
        let cov = raw_ab[i] - mu_a[i] * mu_b[i];
        total += ssim_point(mu_a[i], mu_b[i], var_a, var_b, cov, c1, c2);
    }
    Ok(total / mu_a.len() as f64)
}

/// Normalized 1-D Gaussian taps; the separable product sums to one.
fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut g: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = g.iter().sum();
    for x in &mut g {
        *x /= sum;
    }
    g
}

/// Separable valid-region correlation with the taps `g` applied along both
/// axes. Output is `(rows - len + 1) x (cols - len + 1)`.
fn filter_valid(src: &[f64], rows: usize, cols: usize, g: &[f64]) -> Vec<f64> {
    let w = g.len();
    let out_cols = cols - w + 1;
    let out_rows = rows - w + 1;
    let mut tmp = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        let dst = &mut tmp[r * out_cols..(r + 1) * out_cols];
        for (j, slot) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &gi) in g.iter().enumerate() {
                acc += gi * row[j + i];
            }
            *slot = acc;
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for t in 0..out_rows {
        let dst = &mut out[t * out_cols..(t + 1) * out_cols];
        for (i, &gi) in g.iter().enumerate() {
            let srow = &tmp[(t + i) * out_cols..(t + i + 1) * out_cols];
            for (d, &x) in dst.iter_mut().zip(srow) {
                *d += gi * x;
            }
        }
    }
    out
}

/// Running prefix sums of the squared singular values.
pub fn cumulative_energy(factors: &SvdFactors) -> Vec<f64> {
    let mut acc = 0.0;
    factors
        .sigma()
        .iter()
        .map(|s| {
            acc += s * s;
            acc
        })
        .collect()
}

/// Fraction of spectral energy kept by the leading `k` singular values,
/// clamped to `[0, 1]`. Exactly 1 once `k` reaches the rank.
pub fn energy_ratio(factors: &SvdFactors, k: usize) -> Result<f64, MetricsError> {
    let p = factors.sigma().len();
    if k < 1 || k > p {
        return Err(MetricsError::RankOutOfRange { k, max: p });
    }
    // Both sums accumulate small values first; for k >= rank they see the
    // same nonzero terms in the same order, so the quotient is exactly 1.
    let total = sum_squares_small_first(factors.sigma());
    if total == 0.0 {
        return Err(MetricsError::ZeroEnergy);
    }
    let kept = sum_squares_small_first(&factors.sigma()[..k]);
    Ok((kept / total).clamp(0.0, 1.0))
}

/// Energy ratio recovered from a truncation alone, using its stored total.
pub fn energy_ratio_truncated(t: &TruncatedSvd) -> Result<f64, MetricsError> {
    let total = t.total_energy();
    if total == 0.0 {
        return Err(MetricsError::ZeroEnergy);
    }
    Ok((sum_squares_small_first(t.sigma_k()) / total).clamp(0.0, 1.0))
}

/// Quality zones over the energy ratio, ordered worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Zone {
    /// E below 0.99; the reconstruction is not worth ranking.
    BelowThreshold,
    /// E in [0.99, 0.999).
    Poor99,
    /// E in [0.999, 0.9999).
    Good999,
    /// E in [0.9999, 1].
    VeryGood9999,
}

impl Zone {
    /// Short machine-readable tag.
    pub fn label(self) -> &'static str {
        match self {
            Zone::BelowThreshold => "below",
            Zone::Poor99 => "99",
            Zone::Good999 => "999",
            Zone::VeryGood9999 => "9999",
        }
    }

    /// Human wording attached to the zone.
    pub fn appreciation(self) -> &'static str {
        match self {
            Zone::BelowThreshold => "",
            Zone::Poor99 => "Poor quality",
            Zone::Good999 => "Good quality",
            Zone::VeryGood9999 => "Very good quality",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Places an energy ratio into its quality zone. The value must lie in
/// `[0, 1]`.
pub fn classify_zone(e: f64) -> Result<Zone, MetricsError> {
    if !(0.0..=1.0).contains(&e) {
        return Err(MetricsError::OutOfRange { value: e });
    }
    Ok(if e < 0.99 {
        Zone::BelowThreshold
    } else if e < 0.999 {
        Zone::Poor99
    } else if e < 0.9999 {
        Zone::Good999
    } else {
        Zone::VeryGood9999
    })
}

/// Every metric for one retained rank, in one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub k: usize,
    pub mse: f64,
    /// Decibels; `f64::INFINITY` when the reconstruction is exact.
    pub psnr_db: f64,
    pub ssim: f64,
    pub energy_ratio: f64,
    pub zone: Zone,
}

/// Reconstructs rank `k` from existing factors and scores it against the
/// original.
pub fn quality_report(
    original: &Matrix,
    factors: &SvdFactors,
    k: usize,
    params: &SsimParams,
) -> Result<QualityReport, MetricsError> {
    let t = linalg::truncate(factors, k).map_err(|e| match e {
        LinalgError::RankOutOfRange { k, max } => MetricsError::RankOutOfRange { k, max },
        other => MetricsError::Linalg(other),
    })?;
    let approx = linalg::reconstruct(&t);
    let e = energy_ratio(factors, k)?;
    Ok(QualityReport {
        k,
        mse: mse(original, &approx)?,
        psnr_db: psnr(original, &approx)?,
        ssim: ssim(original, &approx, params)?,
        energy_ratio: e,
        zone: classify_zone(e)?,
    })
}

/// Connects the pixel-domain error to the spectrum: `m n MSE` equals the
/// discarded share of the squared Frobenius norm.
///
/// Exposed for tests and diagnostics; returns the pair
/// `(m n MSE, |A|_F^2 (1 - E))`.
pub fn metric_link_sides(
    original: &Matrix,
    factors: &SvdFactors,
    k: usize,
    params_mse: f64,
) -> Result<(f64, f64), MetricsError> {
    let lhs = (original.rows() * original.cols()) as f64 * params_mse;
    let rhs = frobenius_sq(original) * (1.0 - energy_ratio(factors, k)?);
    Ok((lhs, rhs))
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<(), MetricsError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(MetricsError::DimensionMismatch {
            left_rows: a.rows(),
            left_cols: a.cols(),
            right_rows: b.rows(),
            right_cols: b.cols(),
        });
    }
    Ok(())
}
