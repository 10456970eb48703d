//! Compressed representation of a factored image and its binary container.
//!
//! The container layout is little-endian and bit-exact: a 36-byte header
//! (magic `SVDC`, format version, precision tag, two reserved zero bytes,
//! `u32` row/column/rank counts, `f64` total energy and pixel peak) followed
//! by the retained singular values, then the left and right factor columns,
//! column-major, at the declared precision. Writing and re-reading a
//! container reproduces the in-memory value exactly, because `f32` payloads
//! are narrowed once at encode time rather than at serialization time.

use thiserror::Error;

use crate::imageio::clamp_round_u8;
use crate::linalg::{
    self, sum_squares_small_first, LinalgError, Matrix, SvdFactors, SvdOptions, TruncatedSvd,
};
use crate::metrics;

/// First four bytes of every container.
pub const CONTAINER_MAGIC: [u8; 4] = *b"SVDC";

/// The only format version this build reads or writes.
pub const CONTAINER_VERSION: u8 = 1;

const HEADER_LEN: usize = 36;

/// Errors from rank selection, encoding, decoding, and (de)serialization.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("rank {k} out of range, valid range is 1..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("spectrum carries no energy, no rank can reach a positive target")]
    ZeroEnergy,
    #[error("target energy ratio {target} outside (0, 1]")]
    TargetOutOfRange { target: f64 },
    #[error("bad container magic")]
    BadMagic,
    #[error("unsupported container version {version}")]
    UnsupportedVersion { version: u8 },
    #[error("corrupt container: {0}")]
    CorruptContainer(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Scalar width of the stored factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn scalar_bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F64 => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Precision::F32),
            1 => Some(Precision::F64),
            _ => None,
        }
    }

    /// Rounds `x` to the nearest value representable at this precision.
    fn narrow(self, x: f64) -> f64 {
        match self {
            Precision::F32 => f64::from(x as f32),
            Precision::F64 => x,
        }
    }
}

/// Outcome of [`choose_rank`]: the smallest rank whose retained energy
/// fraction reaches the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSelection {
    pub k: usize,
    pub achieved_e: f64,
    pub target_e: f64,
}

/// Picks the smallest `k` with retained energy fraction at least `target_e`.
///
/// The fractions are computed by the same routine the quality metrics use,
/// so the achieved value here matches a later metrics query bit for bit.
pub fn choose_rank(factors: &SvdFactors, target_e: f64) -> Result<RankSelection, CodecError> {
    if !(target_e > 0.0 && target_e <= 1.0) {
        return Err(CodecError::TargetOutOfRange { target: target_e });
    }
    if sum_squares_small_first(factors.sigma()) == 0.0 {
        return Err(CodecError::ZeroEnergy);
    }
    for k in 1..=factors.sigma().len() {
        let achieved_e = metrics::energy_ratio(factors, k)
            .expect("k is in range and the spectrum has energy");
        if achieved_e >= target_e {
            return Ok(RankSelection {
                k,
                achieved_e,
                target_e,
            });
        }
    }
    unreachable!("the retained fraction is exactly 1 once every value is kept")
}

/// A rank-`k` image approximation ready for serialization.
///
/// Factor payloads live as `f64` but are already narrowed to the declared
/// precision, so the in-memory value and the write/read roundtrip of it are
/// indistinguishable.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedImage {
    precision: Precision,
    rows: usize,
    cols: usize,
    k: usize,
    total_energy: f64,
    pixel_peak: f64,
    sigma: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl CompressedImage {
    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Sum of all squared singular values of the source image.
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    /// Largest pixel value of the source image.
    pub fn pixel_peak(&self) -> f64 {
        self.pixel_peak
    }

    /// Retained singular values, non-increasing.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Left factor, `rows x k`, column-major.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Right factor, `cols x k`, column-major.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Number of stored scalars: `k + rows*k + cols*k`.
    pub fn payload_scalar_count(&self) -> usize {
        payload_scalar_count(self.rows, self.cols, self.k)
    }

    /// Rebuilds the truncated factorization carried by this container.
    pub fn truncated(&self) -> Result<TruncatedSvd, CodecError> {
        self.validate()?;
        let u_k = Matrix::from_col_major(self.rows, self.k, &self.u)?;
        let v_k = Matrix::from_col_major(self.cols, self.k, &self.v)?;
        Ok(TruncatedSvd::from_parts(
            u_k,
            self.sigma.clone(),
            v_k,
            self.total_energy,
        )?)
    }

    fn validate(&self) -> Result<(), CodecError> {
        let corrupt = |reason: &str| Err(CodecError::CorruptContainer(reason.to_string()));
        if self.rows == 0 || self.cols == 0 {
            return corrupt("image dimensions must be positive");
        }
        if self.k == 0 {
            return corrupt("rank must be at least 1");
        }
        if self.k > self.rows.min(self.cols) {
            return corrupt("rank exceeds the smaller image dimension");
        }
        if self.sigma.len() != self.k
            || self.u.len() != self.rows * self.k
            || self.v.len() != self.cols * self.k
        {
            return corrupt("payload length disagrees with the header");
        }
        let payload = self.sigma.iter().chain(&self.u).chain(&self.v);
        if !payload.clone().all(|x| x.is_finite()) {
            return corrupt("payload contains a non-finite value");
        }
        if !self.total_energy.is_finite() || self.total_energy < 0.0 {
            return corrupt("total energy must be finite and nonnegative");
        }
        if !self.pixel_peak.is_finite() || self.pixel_peak < 0.0 {
            return corrupt("pixel peak must be finite and nonnegative");
        }
        if self.sigma.windows(2).any(|w| w[0] < w[1]) || self.sigma.iter().any(|&s| s < 0.0) {
            return corrupt("singular values must be non-increasing and nonnegative");
        }
        // Narrowing to f32 can push individual values up a little, so the
        // retained energy may exceed the recorded total by a sliver.
        let kept = sum_squares_small_first(&self.sigma);
        if self.total_energy < kept * (1.0 - 1e-6) {
            return corrupt("total energy is below the retained energy");
        }
        Ok(())
    }
}

/// Number of scalars a rank-`k` approximation of a `rows x cols` image
/// stores: the singular values plus both factor blocks.
pub fn payload_scalar_count(rows: usize, cols: usize, k: usize) -> usize {
    k + rows * k + cols * k
}

/// Factors `image` and keeps the leading `k` triplets at the chosen
/// precision. The image is expected to hold 8-bit pixel data widened to
/// `f64`; its largest entry is recorded as the pixel peak.
pub fn encode(image: &Matrix, k: usize, precision: Precision) -> Result<CompressedImage, CodecError> {
    let factors = linalg::svd(image, &SvdOptions::default())?;
    let pixel_peak = image.as_slice().iter().fold(0.0_f64, |acc, &x| acc.max(x));
    encode_factors(&factors, pixel_peak, k, precision)
}

/// Like [`encode`], but reuses an existing factorization instead of running
/// a fresh one. `pixel_peak` should be the largest pixel of the source
/// image.
pub fn encode_factors(
    factors: &SvdFactors,
    pixel_peak: f64,
    k: usize,
    precision: Precision,
) -> Result<CompressedImage, CodecError> {
    debug_assert!(pixel_peak.is_finite() && pixel_peak >= 0.0);
    let t = match linalg::truncate(factors, k) {
        Ok(t) => t,
        Err(LinalgError::RankOutOfRange { k, max }) => {
            return Err(CodecError::RankOutOfRange { k, max })
        }
        Err(other) => return Err(CodecError::Linalg(other)),
    };
    let sigma = t.sigma_k().iter().map(|&s| precision.narrow(s)).collect();
    Ok(CompressedImage {
        precision,
        rows: t.rows(),
        cols: t.cols(),
        k,
        total_energy: t.total_energy(),
        pixel_peak,
        sigma,
        u: columns_narrowed(t.u_k(), precision),
        v: columns_narrowed(t.v_k(), precision),
    })
}

fn columns_narrowed(m: &Matrix, precision: Precision) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for c in 0..m.cols() {
        out.extend(m.column(c).iter().map(|&x| precision.narrow(x)));
    }
    out
}

/// Reconstructs the rank-`k` approximation and re-quantizes it to the 8-bit
/// pixel domain. Entries of the result are integers in `[0, 255]`.
pub fn decode(compressed: &CompressedImage) -> Result<Matrix, CodecError> {
    let t = compressed.truncated()?;
    let real = linalg::reconstruct(&t);
    let pixels = real
        .as_slice()
        .iter()
        .map(|&x| f64::from(clamp_round_u8(x)))
        .collect();
    Ok(Matrix::from_vec(real.rows(), real.cols(), pixels)?)
}

/// Serializes to the container byte layout.
pub fn write_container(compressed: &CompressedImage) -> Result<Vec<u8>, CodecError> {
    compressed.validate()?;
    let (m, n, k) = (
        dim_to_u32(compressed.rows)?,
        dim_to_u32(compressed.cols)?,
        dim_to_u32(compressed.k)?,
    );
    let precision = compressed.precision;
    let mut out = Vec::with_capacity(
        HEADER_LEN + compressed.payload_scalar_count() * precision.scalar_bytes(),
    );
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.push(CONTAINER_VERSION);
    out.push(precision.tag());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&compressed.total_energy.to_le_bytes());
    out.extend_from_slice(&compressed.pixel_peak.to_le_bytes());
    for &x in compressed
        .sigma
        .iter()
        .chain(&compressed.u)
        .chain(&compressed.v)
    {
        match precision {
            // Payloads are narrowed at encode time, so this cast is lossless.
            Precision::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            Precision::F64 => out.extend_from_slice(&x.to_le_bytes()),
        }
    }
    Ok(out)
}

fn dim_to_u32(value: usize) -> Result<u32, CodecError> {
    u32::try_from(value).map_err(|_| {
        CodecError::CorruptContainer("dimension too large for the container format".to_string())
    })
}

/// Parses a container byte stream, validating the header and payload.
/// Trailing bytes past the declared payload are an error.
pub fn read_container(bytes: &[u8]) -> Result<CompressedImage, CodecError> {
    if bytes.len() < 4 || bytes[..4] != CONTAINER_MAGIC {
        return Err(CodecError::BadMagic);
    }
    let mut cursor = Cursor {
        bytes,
        pos: 4,
    };
    let version = cursor.take(1)?[0];
    if version != CONTAINER_VERSION {
        return Err(CodecError::UnsupportedVersion { version });
    }
    let precision = Precision::from_tag(cursor.take(1)?[0]).ok_or_else(|| {
        CodecError::CorruptContainer("unknown precision tag".to_string())
    })?;
    if cursor.take(2)? != [0, 0] {
        return Err(CodecError::CorruptContainer(
            "reserved header bytes must be zero".to_string(),
        ));
    }
    let rows = cursor.u32_le()? as usize;
    let cols = cursor.u32_le()? as usize;
    let k = cursor.u32_le()? as usize;
    let total_energy = cursor.f64_le()?;
    let pixel_peak = cursor.f64_le()?;

    let scalars = (k as u64)
        .checked_mul(1 + rows as u64 + cols as u64)
        .and_then(|s| usize::try_from(s).ok())
        .ok_or_else(|| CodecError::CorruptContainer("payload size overflows".to_string()))?;
    let sigma = cursor.scalars(k, precision)?;
    let u = cursor.scalars(rows.saturating_mul(k), precision)?;
    let v = cursor.scalars(cols.saturating_mul(k), precision)?;
    debug_assert_eq!(sigma.len() + u.len() + v.len(), scalars);
    if cursor.pos != bytes.len() {
        return Err(CodecError::CorruptContainer(format!(
            "{} trailing bytes past the payload",
            bytes.len() - cursor.pos
        )));
    }

    let compressed = CompressedImage {
        precision,
        rows,
        cols,
        k,
        total_energy,
        pixel_peak,
        sigma,
        u,
        v,
    };
    compressed.validate()?;
    Ok(compressed)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.bytes.len() - self.pos < n {
            return Err(CodecError::CorruptContainer(format!(
                "byte stream truncated at offset {}",
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32_le(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64_le(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn scalars(&mut self, count: usize, precision: Precision) -> Result<Vec<f64>, CodecError> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let x = match precision {
                Precision::F32 => {
                    f64::from(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
                }
                Precision::F64 => self.f64_le()?,
            };
            out.push(x);
        }
        Ok(out)
    }
}

/// Scalar-count compression ratio `rows*cols / (k * (rows + cols + 1))`.
///
/// Above 1 the truncated form stores fewer numbers than the image has
/// pixels; the break-even rank is `rows*cols / (rows + cols + 1)`.
pub fn compression_ratio(rows: usize, cols: usize, k: usize) -> Result<f64, CodecError> {
    let max = rows.min(cols);
    if k == 0 || k > max {
        return Err(CodecError::RankOutOfRange { k, max });
    }
    Ok((rows as f64 * cols as f64) / (k as f64 * (rows as f64 + cols as f64 + 1.0)))
}

/// Byte-level variant of [`compression_ratio`]: one byte per source pixel
/// against `scalar_bytes` per stored factor entry.
pub fn compression_ratio_bytes(
    rows: usize,
    cols: usize,
    k: usize,
    precision: Precision,
) -> Result<f64, CodecError> {
    Ok(compression_ratio(rows, cols, k)? / precision.scalar_bytes() as f64)
}
