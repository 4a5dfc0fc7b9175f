//! Signal-processing primitives shared by feature extraction, clustering and
//! analytics: zero crossings, DFT magnitude spectrum, autocorrelation, peak
//! classification, Hann smoothing and least-squares polynomial fits.
//!
//! Windows are short (150 samples at the canonical 30 fps), so the transforms
//! are direct O(n^2) evaluations; correctness is defined against brute-force
//! oracles rather than any particular fast algorithm.

use thiserror::Error;

/// A real-valued, uniformly sampled 1-D signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D {
    pub fps: f64,
    pub samples: Vec<f64>,
}

impl Signal1D {
    pub fn new(fps: f64, samples: Vec<f64>) -> Self {
        debug_assert!(fps > 0.0);
        Signal1D { fps, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Samples with the mean removed.
    pub fn mean_removed(&self) -> Vec<f64> {
        let m = self.mean();
        self.samples.iter().map(|v| v - m).collect()
    }
}

/// Magnitudes of the non-negative-frequency DFT bins; bin 0 is DC.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_width_hz: f64,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn frequency_of_bin(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width_hz
    }
}

/// Local maxima of a signal: positions and the values there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakSet {
    pub indices: Vec<usize>,
    pub heights: Vec<f64>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_height(&self) -> Option<f64> {
        self.heights.iter().copied().fold(None, |acc, h| {
            Some(match acc {
                None => h,
                Some(a) if h > a => h,
                Some(a) => a,
            })
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("signal too short: {len} samples, need at least {min}")]
    InsufficientData { len: usize, min: usize },
    #[error("degenerate fit: design matrix is rank-deficient")]
    DegenerateFit,
    #[error("need {needed} samples for a degree-{degree} fit, got {got}")]
    UnderdeterminedFit { needed: usize, degree: usize, got: usize },
}

// ---------------------------------------------------------------------------
// Zero crossings
// ---------------------------------------------------------------------------

/// Result of a zero-crossing scan over the mean-removed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCrossings {
    pub count: usize,
    /// Index of the sample at which each sign change is observed.
    pub crossing_indices: Vec<usize>,
}

/// Counts sign changes between consecutive samples of the mean-removed
/// signal. A sample equal to zero adopts the sign of the previous sample, so
/// touching zero without crossing it does not count.
pub fn zero_crossings(s: &Signal1D) -> ZeroCrossings {
    let centered = s.mean_removed();
    let mut prev_sign = 0i8;
    let mut crossing_indices = Vec::new();
    for (i, &v) in centered.iter().enumerate() {
        let sign = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            prev_sign
        };
        if prev_sign != 0 && sign != 0 && sign != prev_sign {
            crossing_indices.push(i);
        }
        if sign != 0 {
            prev_sign = sign;
        }
    }
    ZeroCrossings {
        count: crossing_indices.len(),
        crossing_indices,
    }
}

// ---------------------------------------------------------------------------
// Spectrum and dominant frequency
// ---------------------------------------------------------------------------

/// Direct DFT magnitude spectrum of the mean-removed signal over the
/// non-negative frequency bins (0..=n/2).
pub fn spectrum(s: &Signal1D) -> Spectrum {
    let x = s.mean_removed();
    let n = x.len();
    let bins = n / 2 + 1;
    let mut magnitudes = Vec::with_capacity(bins);
    for k in 0..bins {
        let omega = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &v) in x.iter().enumerate() {
            let (sin, cos) = (omega * i as f64).sin_cos();
            re += v * cos;
            im += v * sin;
        }
        magnitudes.push((re * re + im * im).sqrt());
    }
    Spectrum {
        bin_width_hz: s.fps / n as f64,
        magnitudes,
    }
}

/// Frequency of the strongest non-DC spectral bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantFrequency {
    pub hz: f64,
    /// False when the signal carries no spectral energy (constant input);
    /// `hz` is 0 in that case.
    pub periodic: bool,
}

/// Returns the frequency of the max-magnitude non-DC bin of the mean-removed
/// signal's spectrum. Resolution is `fps / len`.
pub fn dominant_frequency(s: &Signal1D) -> Result<DominantFrequency, DspError> {
    if s.len() < 8 {
        return Err(DspError::InsufficientData { len: s.len(), min: 8 });
    }
    if is_degenerate(s) {
        return Ok(DominantFrequency { hz: 0.0, periodic: false });
    }
    let spec = spectrum(s);
    let mut best_bin = 1;
    let mut best_mag = f64::NEG_INFINITY;
    for (k, &m) in spec.magnitudes.iter().enumerate().skip(1) {
        if m > best_mag {
            best_mag = m;
            best_bin = k;
        }
    }
    Ok(DominantFrequency {
        hz: best_bin as f64 * s.fps / s.len() as f64,
        periodic: true,
    })
}

/// A signal is degenerate when its residuals after mean removal are zero to
/// within rounding of the mean itself.
fn is_degenerate(s: &Signal1D) -> bool {
    let m = s.mean();
    let peak = s
        .samples
        .iter()
        .map(|v| (v - m).abs())
        .fold(0.0f64, f64::max);
    peak <= m.abs() * 1e-12
}

// ---------------------------------------------------------------------------
// Autocorrelation
// ---------------------------------------------------------------------------

/// Biased normalized autocorrelation of the mean-removed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    /// r(tau) for tau = 0..len-1; r(0) = 1 for non-degenerate input.
    pub r: Signal1D,
    /// True for zero-variance input, where r is the conventional
    /// [1, 0, 0, ...].
    pub degenerate: bool,
}

/// Computes r(tau) = sum(x_i * x_{i+tau}) / sum(x_i^2) over the mean-removed
/// signal, for every lag. The biased estimator keeps r within [-1, 1].
pub fn autocorrelation(s: &Signal1D) -> Result<Autocorrelation, DspError> {
    let n = s.len();
    if n < 2 {
        return Err(DspError::InsufficientData { len: n, min: 2 });
    }
    if is_degenerate(s) {
        let mut r = vec![0.0; n];
        r[0] = 1.0;
        return Ok(Autocorrelation {
            r: Signal1D::new(s.fps, r),
            degenerate: true,
        });
    }
    let x = s.mean_removed();
    let denom: f64 = x.iter().map(|v| v * v).sum();
    let mut r = Vec::with_capacity(n);
    for tau in 0..n {
        let mut acc = 0.0;
        for i in 0..n - tau {
            acc += x[i] * x[i + tau];
        }
        r.push(acc / denom);
    }
    Ok(Autocorrelation {
        r: Signal1D::new(s.fps, r),
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Peak finding
// ---------------------------------------------------------------------------

/// All strict local maxima plus the prominent/weak classification used by the
/// periodicity features.
#[derive(Debug, Clone, PartialEq)]
pub struct Peaks {
    pub all: PeakSet,
    pub prominent: PeakSet,
    pub weak: PeakSet,
}

/// Finds strict local maxima and classifies each against its neighboring
/// peaks: `prominent` peaks exceed both neighbors by at least
/// `prominence_ratio` of their own height, `weak` peaks sit below both
/// neighbors by the same margin. The first and last peaks compare only
/// against their single neighbor; a lone peak is neither.
pub fn find_peaks(s: &Signal1D, prominence_ratio: f64) -> Peaks {
    assert!(
        prominence_ratio > 0.0 && prominence_ratio < 1.0,
        "prominence_ratio must be in (0, 1)"
    );
    let x = &s.samples;
    let mut all = PeakSet::default();
    for i in 1..x.len().saturating_sub(1) {
        if x[i] > x[i - 1] && x[i] > x[i + 1] {
            all.indices.push(i);
            all.heights.push(x[i]);
        }
    }

    let mut prominent = PeakSet::default();
    let mut weak = PeakSet::default();
    let n = all.len();
    for j in 0..n {
        let h = all.heights[j];
        let margin = prominence_ratio * h;
        let neighbors: Vec<f64> = [j.checked_sub(1), (j + 1 < n).then_some(j + 1)]
            .into_iter()
            .flatten()
            .map(|k| all.heights[k])
            .collect();
        if neighbors.is_empty() {
            continue;
        }
        if neighbors.iter().all(|&nh| h - nh >= margin) {
            prominent.indices.push(all.indices[j]);
            prominent.heights.push(h);
        } else if neighbors.iter().all(|&nh| nh - h >= margin) {
            weak.indices.push(all.indices[j]);
            weak.heights.push(h);
        }
    }
    Peaks { all, prominent, weak }
}

// ---------------------------------------------------------------------------
// Hann smoothing
// ---------------------------------------------------------------------------

/// Strictly positive Hann taps: the interior of a Hann window evaluated on
/// `len + 2` points with the zero endpoints dropped. For `len` 1 this is the
/// identity kernel.
fn hann_kernel(len: usize) -> Vec<f64> {
    assert!(len >= 1);
    (0..len)
        .map(|j| {
            let phase = std::f64::consts::PI * (j + 1) as f64 / (len + 1) as f64;
            0.5 * (1.0 - (2.0 * phase).cos())
        })
        .collect()
}

/// Convolves with a unit-sum Hann kernel of `round(window_s * fps)` taps.
/// Edges renormalize over the valid overlap, so constants pass through
/// unchanged and the output has the input's length.
pub fn hann_smooth(s: &Signal1D, window_s: f64) -> Signal1D {
    assert!(window_s > 0.0, "window must be positive");
    let len = ((window_s * s.fps).round() as usize).max(1);
    let kernel = hann_kernel(len);
    let n = s.samples.len();
    let half = (len / 2) as isize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        let mut acc = 0.0;
        let mut weight = 0.0;
        for (j, &w) in kernel.iter().enumerate() {
            let src = i + j as isize - half;
            if src >= 0 && (src as usize) < n {
                acc += w * s.samples[src as usize];
                weight += w;
            }
        }
        out.push(acc / weight);
    }
    Signal1D::new(s.fps, out)
}

// ---------------------------------------------------------------------------
// Polynomial fitting
// ---------------------------------------------------------------------------

/// Least-squares polynomial fit, coefficients lowest order first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    /// Sum of squared residuals.
    pub residual: f64,
}

impl PolyFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * t + c)
    }
}

/// Fits `vals ~ poly(ts)` of the given degree by solving the normal
/// equations. All-equal abscissae make the system rank-deficient.
pub fn polyfit(ts: &[f64], vals: &[f64], degree: usize) -> Result<PolyFit, DspError> {
    assert_eq!(ts.len(), vals.len(), "ts and vals must have equal length");
    let m = degree + 1;
    if ts.len() < m {
        return Err(DspError::UnderdeterminedFit {
            needed: m,
            degree,
            got: ts.len(),
        });
    }
    // Normal equations A^T A c = A^T y with A the Vandermonde matrix.
    let mut ata = vec![0.0; m * m];
    let mut aty = vec![0.0; m];
    for (&t, &y) in ts.iter().zip(vals) {
        let mut powers = Vec::with_capacity(m);
        let mut p = 1.0;
        for _ in 0..m {
            powers.push(p);
            p *= t;
        }
        for r in 0..m {
            for c in 0..m {
                ata[r * m + c] += powers[r] * powers[c];
            }
            aty[r] += powers[r] * y;
        }
    }
    let coefficients = solve_symmetric(&mut ata, &mut aty, m)?;
    let residual = ts
        .iter()
        .zip(vals)
        .map(|(&t, &y)| {
            let fit: f64 = coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c);
            (y - fit).powi(2)
        })
        .sum();
    Ok(PolyFit {
        coefficients,
        residual,
    })
}

/// Gaussian elimination with partial pivoting; `a` is m x m row-major.
fn solve_symmetric(a: &mut [f64], b: &mut [f64], m: usize) -> Result<Vec<f64>, DspError> {
    let scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let tiny = scale * 1e-12 + f64::MIN_POSITIVE;
    for col in 0..m {
        let mut pivot = col;
        for row in col + 1..m {
            if a[row * m + col].abs() > a[pivot * m + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * m + col].abs() <= tiny {
            return Err(DspError::DegenerateFit);
        }
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..m {
            let factor = a[row * m + col] / a[col * m + col];
            for k in col..m {
                a[row * m + k] -= factor * a[col * m + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for col in (0..m).rev() {
        let mut acc = b[col];
        for k in col + 1..m {
            acc -= a[col * m + k] * x[k];
        }
        x[col] = acc / a[col * m + col];
    }
    Ok(x)
}
