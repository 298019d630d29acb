//! Undecimated (stationary) wavelet transform realized with the à-trous scheme.
//!
//! Every subband keeps the input length `N`. Level `j` filters the previous
//! approximation with taps dilated by `2^(j-1)` under periodic extension, so
//! the transform is exactly shift-equivariant and the inverse is exact for
//! any `N` and any `J` with `2^J <= N`.

use std::f64::consts::SQRT_2;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("dilation exceeds signal length")]
    DilationTooLarge,
    #[error("dilation must be a positive power of two, got {0}")]
    BadDilation(usize),
    #[error("insufficient length for {0} levels")]
    TooManyLevels(usize),
    #[error("malformed decomposition: {0}")]
    Malformed(String),
    #[error("unknown wavelet filter '{0}'")]
    UnknownFilter(String),
}

/// A finite, nonempty 1-D sample sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(samples: Vec<f64>) -> Result<Self, WaveletError> {
        if samples.is_empty() {
            return Err(WaveletError::EmptySignal);
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(WaveletError::NonFinite(i));
        }
        Ok(Signal(samples))
    }

    pub fn zeros(len: usize) -> Result<Self, WaveletError> {
        Signal::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Circular rotation: `out[(n + shift) mod N] = x[n]`.
    pub fn rotate(&self, shift: usize) -> Signal {
        let mut v = self.0.clone();
        let n = v.len();
        v.rotate_right(shift % n);
        Signal(v)
    }
}

impl AsRef<[f64]> for Signal {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Orthogonal analysis/synthesis filter quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub name: String,
    pub dec_low: Vec<f64>,
    pub dec_high: Vec<f64>,
    pub rec_low: Vec<f64>,
    pub rec_high: Vec<f64>,
}

impl WaveletFilter {
    /// Builds the quadruple from an orthonormal lowpass filter.
    /// `dec_high[k] = (-1)^k dec_low[L-1-k]`; synthesis filters are the
    /// time-reversed analysis filters.
    fn from_lowpass(name: &str, dec_low: Vec<f64>) -> Self {
        let len = dec_low.len();
        let dec_high: Vec<f64> = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * dec_low[len - 1 - k]
            })
            .collect();
        let rec_low = dec_low.iter().rev().copied().collect();
        let rec_high = dec_high.iter().rev().copied().collect();
        WaveletFilter {
            name: name.to_string(),
            dec_low,
            dec_high,
            rec_low,
            rec_high,
        }
    }

    pub fn haar() -> Self {
        let c = 1.0 / SQRT_2;
        Self::from_lowpass("haar", vec![c, c])
    }

    /// 4-tap Daubechies filter.
    pub fn db2() -> Self {
        let s3 = 3f64.sqrt();
        let norm = 4.0 * SQRT_2;
        Self::from_lowpass(
            "db2",
            vec![
                (1.0 + s3) / norm,
                (3.0 + s3) / norm,
                (3.0 - s3) / norm,
                (1.0 - s3) / norm,
            ],
        )
    }

    pub fn by_name(name: &str) -> Result<Self, WaveletError> {
        match name {
            "haar" => Ok(Self::haar()),
            "db2" => Ok(Self::db2()),
            other => Err(WaveletError::UnknownFilter(other.to_string())),
        }
    }

    pub fn len(&self) -> usize {
        self.dec_low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_low.is_empty()
    }
}

/// Redundant multiscale decomposition; every band has the input length.
#[derive(Debug, Clone, PartialEq)]
pub struct UwtDecomposition {
    /// `details[j - 1]` is the level-`j` detail band.
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
    pub filter_name: String,
}

impl UwtDecomposition {
    pub const BOUNDARY: &'static str = "periodic";

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn signal_len(&self) -> usize {
        self.approx.len()
    }

    /// Number of stored coefficients, `(J + 1) * N`.
    pub fn coefficient_count(&self) -> usize {
        self.details.iter().map(Vec::len).sum::<usize>() + self.approx.len()
    }

    pub fn validate(&self) -> Result<(), WaveletError> {
        let n = self.approx.len();
        let levels = self.details.len();
        if n == 0 {
            return Err(WaveletError::Malformed("empty approximation band".into()));
        }
        if levels == 0 {
            return Err(WaveletError::Malformed("no detail levels".into()));
        }
        if let Some(j) = self.details.iter().position(|d| d.len() != n) {
            return Err(WaveletError::Malformed(format!(
                "detail level {} has length {}, expected {n}",
                j + 1,
                self.details[j].len()
            )));
        }
        if !fits_levels(n, levels) {
            return Err(WaveletError::Malformed(format!(
                "{levels} levels exceed signal length {n}"
            )));
        }
        Ok(())
    }
}

/// `2^levels <= n`, without overflow.
pub fn fits_levels(n: usize, levels: usize) -> bool {
    levels < usize::BITS as usize && (1usize << levels) <= n
}

/// Largest `J` with `2^J <= n` (0 when `n < 2`).
pub fn max_levels(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (usize::BITS - 1 - n.leading_zeros()) as usize
    }
}

/// `y[n] = sum_k taps[k] * x[(n - dilation*k) mod N]`.
pub fn dilated_circular_convolve(
    x: &Signal,
    taps: &[f64],
    dilation: usize,
) -> Result<Signal, WaveletError> {
    if dilation == 0 || !dilation.is_power_of_two() {
        return Err(WaveletError::BadDilation(dilation));
    }
    let reach = dilation.saturating_mul(taps.len().saturating_sub(1));
    if reach >= x.len() {
        return Err(WaveletError::DilationTooLarge);
    }
    let mut out = vec![0.0; x.len()];
    convolve_into(x.as_slice(), taps, dilation, 0, &mut out);
    Ok(Signal(out))
}

/// Periodic dilated convolution with an output advance:
/// `out[n] = sum_k taps[k] * x[(n + advance - dilation*k) mod N]`.
///
/// Taps whose reach exceeds `N` wrap around; the transform relies on this at
/// coarse levels of long filters.
fn convolve_into(x: &[f64], taps: &[f64], dilation: usize, advance: usize, out: &mut [f64]) {
    let n = x.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, &tap) in taps.iter().enumerate() {
        if tap == 0.0 {
            continue;
        }
        // offset such that the source index is (i + offset) mod n
        let back = (dilation * k) % n;
        let offset = (advance % n + n - back) % n;
        let (head, tail) = x.split_at(offset);
        let split = n - offset;
        for (o, &v) in out[..split].iter_mut().zip(tail) {
            *o += tap * v;
        }
        for (o, &v) in out[split..].iter_mut().zip(head) {
            *o += tap * v;
        }
    }
}

pub fn uwt_forward(
    x: &Signal,
    filter: &WaveletFilter,
    levels: usize,
) -> Result<UwtDecomposition, WaveletError> {
    let n = x.len();
    if levels == 0 || !fits_levels(n, levels) {
        return Err(WaveletError::TooManyLevels(levels));
    }
    let mut approx = x.as_slice().to_vec();
    let mut next = vec![0.0; n];
    let mut details = Vec::with_capacity(levels);
    for j in 0..levels {
        let dilation = 1usize << j;
        let mut detail = vec![0.0; n];
        convolve_into(&approx, &filter.dec_high, dilation, 0, &mut detail);
        convolve_into(&approx, &filter.dec_low, dilation, 0, &mut next);
        std::mem::swap(&mut approx, &mut next);
        details.push(detail);
    }
    Ok(UwtDecomposition {
        details,
        approx,
        filter_name: filter.name.clone(),
    })
}

/// Level-wise averaged synthesis. The synthesis filters are the reversed
/// analysis filters; the output is advanced by `dilation * (L - 1)` so each
/// level applies the exact adjoint of its analysis step, and the half-sum of
/// the two branches recovers the previous approximation.
pub fn uwt_inverse(dec: &UwtDecomposition, filter: &WaveletFilter) -> Result<Signal, WaveletError> {
    dec.validate()?;
    if dec.filter_name != filter.name {
        return Err(WaveletError::Malformed(format!(
            "decomposition uses filter '{}', got '{}'",
            dec.filter_name, filter.name
        )));
    }
    let n = dec.signal_len();
    let taps = filter.len();
    let mut approx = dec.approx.clone();
    let mut low = vec![0.0; n];
    let mut high = vec![0.0; n];
    for j in (0..dec.levels()).rev() {
        let dilation = 1usize << j;
        let advance = dilation * (taps - 1);
        convolve_into(&approx, &filter.rec_low, dilation, advance, &mut low);
        convolve_into(&dec.details[j], &filter.rec_high, dilation, advance, &mut high);
        for ((a, l), h) in approx.iter_mut().zip(&low).zip(&high) {
            *a = 0.5 * (l + h);
        }
    }
    Signal::new(approx)
}
