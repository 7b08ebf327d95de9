//! Lensless capture forward model.
//!
//! A measurement is the circular 2-D convolution of the scene with the
//! aperture kernel: the mask is zero-padded to the image size with its
//! top-left cell at lag (0, 0), so examples are bit-reproducible. The
//! convolution runs in the frequency domain; `correlate_support` is its
//! adjoint restricted to the kernel support, which is what mask gradients
//! need.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{Image, PixelGrid};
use crate::mask::{CodedMask, RelaxedMask};

/// Options for the capture operator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaptureConfig {
    /// Divide the kernel by its open-cell count (or by the value sum for a
    /// relaxed mask). Keeps measurement energy at or below signal energy.
    pub normalize_mask: bool,
    /// Standard deviation of optional additive Gaussian noise. Zero disables it.
    pub noise_std: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            normalize_mask: true,
            noise_std: 0.0,
        }
    }
}

impl CaptureConfig {
    /// Raw (unnormalized) kernel, no noise.
    pub fn raw() -> Self {
        Self {
            normalize_mask: false,
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// The captured observation `y = H * x (+ noise)`, same side length as the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    n: usize,
    pixels: Vec<f64>,
    /// Fingerprint of the mask that produced this measurement.
    pub mask_id: String,
    /// Whether the kernel was normalized by its open-cell count.
    pub normalized: bool,
}

impl Measurement {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn energy(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }
}

impl PixelGrid for Measurement {
    fn side(&self) -> usize {
        self.n
    }
    fn data(&self) -> &[f64] {
        &self.pixels
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>> =
        RefCell::new(HashMap::new());
}

fn plans_for(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANS.with(|cell| {
        let mut map = cell.borrow_mut();
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (
                    planner.plan_fft(n, FftDirection::Forward),
                    planner.plan_fft(n, FftDirection::Inverse),
                )
            })
            .clone()
    })
}

fn transpose_square(data: &mut [Complex<f64>], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

fn fft2(data: &mut [Complex<f64>], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    let (fwd, inv) = plans_for(n);
    let fft = if inverse { inv } else { fwd };
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose_square(data, n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose_square(data, n);
    if inverse {
        let scale = 1.0 / (n * n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn spectrum(n: usize, real: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = real.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(&mut buf, n, false);
    buf
}

fn padded_kernel_spectrum(n: usize, m: usize, kernel: &[f64]) -> Vec<Complex<f64>> {
    debug_assert!(m <= n);
    debug_assert_eq!(kernel.len(), m * m);
    let mut buf = vec![Complex::new(0.0, 0.0); n * n];
    for u in 0..m {
        for v in 0..m {
            buf[u * n + v] = Complex::new(kernel[u * m + v], 0.0);
        }
    }
    fft2(&mut buf, n, false);
    buf
}

/// Circular convolution of an `n x n` signal with an `m x m` kernel whose
/// cell (0, 0) sits at lag (0, 0).
pub fn circular_convolve(n: usize, x: &[f64], m: usize, kernel: &[f64]) -> Vec<f64> {
    assert!(m <= n, "kernel side {m} exceeds signal side {n}");
    assert_eq!(x.len(), n * n);
    let kf = padded_kernel_spectrum(n, m, kernel);
    let mut xf = spectrum(n, x);
    for (a, b) in xf.iter_mut().zip(&kf) {
        *a *= b;
    }
    fft2(&mut xf, n, true);
    xf.into_iter().map(|c| c.re).collect()
}

/// Adjoint of [`circular_convolve`] with respect to the kernel, restricted to
/// the `m x m` support: entry (u, v) is `sum_pq g[p, q] * x[p - u, q - v]`
/// with circular indexing. This is the cross-correlation `g` with `x`.
pub fn correlate_support(n: usize, g: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    assert!(m <= n);
    assert_eq!(g.len(), n * n);
    assert_eq!(x.len(), n * n);
    let mut gf = spectrum(n, g);
    let xf = spectrum(n, x);
    for (a, b) in gf.iter_mut().zip(&xf) {
        *a *= b.conj();
    }
    fft2(&mut gf, n, true);
    let mut out = Vec::with_capacity(m * m);
    for u in 0..m {
        for v in 0..m {
            out.push(gf[u * n + v].re);
        }
    }
    out
}

/// Kernel values for a binary mask under the given normalization.
pub fn binary_kernel(h: &CodedMask, normalize: bool) -> Vec<f64> {
    let count = h.open_count();
    let scale = if normalize && count > 0 {
        1.0 / count as f64
    } else {
        1.0
    };
    h.cells().iter().map(|&c| c as f64 * scale).collect()
}

/// Kernel values for a relaxed mask: `h / sum(h)` when normalizing (the
/// continuous analogue of dividing by the open-cell count), else `h` as is.
pub fn relaxed_kernel(h: &RelaxedMask, normalize: bool) -> Vec<f64> {
    let s = h.sum();
    if normalize && s.abs() > 1e-12 {
        h.values().iter().map(|&v| v / s).collect()
    } else {
        h.values().to_vec()
    }
}

/// Pulls a gradient with respect to the kernel back to the relaxed mask.
/// With normalization on, `k = h / sum(h)` contributes the quotient-rule
/// term `(g - <k, g>) / sum(h)`; without it the gradient passes through.
pub fn relaxed_kernel_backward(h: &RelaxedMask, normalize: bool, grad_kernel: &[f64]) -> Vec<f64> {
    assert_eq!(grad_kernel.len(), h.values().len());
    let s = h.sum();
    if normalize && s.abs() > 1e-12 {
        let inner: f64 = grad_kernel
            .iter()
            .zip(h.values())
            .map(|(&g, &v)| g * (v / s))
            .sum();
        grad_kernel.iter().map(|&g| (g - inner) / s).collect()
    } else {
        grad_kernel.to_vec()
    }
}

/// A mask fixed as a frequency-domain operator, for applying one kernel to
/// many images without replanning.
pub struct ConvOperator {
    n: usize,
    m: usize,
    freq: Vec<Complex<f64>>,
}

impl ConvOperator {
    pub fn from_kernel(n: usize, m: usize, kernel: &[f64]) -> Result<Self> {
        if m > n {
            return Err(Error::Dimension(format!(
                "mask side {m} exceeds image side {n}"
            )));
        }
        if kernel.len() != m * m {
            return Err(Error::Dimension(format!(
                "kernel has {} values, expected {}",
                kernel.len(),
                m * m
            )));
        }
        Ok(Self {
            n,
            m,
            freq: padded_kernel_spectrum(n, m, kernel),
        })
    }

    pub fn from_mask(h: &CodedMask, n: usize, normalize: bool) -> Result<Self> {
        Self::from_kernel(n, h.m(), &binary_kernel(h, normalize))
    }

    pub fn from_relaxed(h: &RelaxedMask, n: usize, normalize: bool) -> Result<Self> {
        Self::from_kernel(n, h.m(), &relaxed_kernel(h, normalize))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `kernel * x` by pointwise spectral multiplication.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n * self.n);
        let mut xf = spectrum(self.n, x);
        for (a, b) in xf.iter_mut().zip(&self.freq) {
            *a *= b;
        }
        fft2(&mut xf, self.n, true);
        xf.into_iter().map(|c| c.re).collect()
    }
}

/// Simulates a lensless capture of `x` through mask `h` (Eq. `y = H * x + eta`
/// with circular boundary handling). Noise is only drawn when
/// `cfg.noise_std > 0`, seeded by `rng_seed`.
pub fn capture(x: &Image, h: &CodedMask, cfg: &CaptureConfig, rng_seed: u64) -> Result<Measurement> {
    cfg.validate()?;
    let op = ConvOperator::from_mask(h, x.n(), cfg.normalize_mask)?;
    let mut pixels = op.apply(x.pixels());
    if cfg.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let normal = Normal::new(0.0, cfg.noise_std)
            .map_err(|e| Error::InvalidArgument(format!("bad noise_std: {e}")))?;
        for v in pixels.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(Measurement {
        n: x.n(),
        pixels,
        mask_id: h.fingerprint(),
        normalized: cfg.normalize_mask,
    })
}

/// `||H * x||^2 / (||x||^2 + epsilon)`, the reduced isometry check. Noise is
/// never applied here regardless of `cfg.noise_std`.
pub fn energy_ratio(x: &Image, h: &CodedMask, cfg: &CaptureConfig, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let op = ConvOperator::from_mask(h, x.n(), cfg.normalize_mask)?;
    let y = op.apply(x.pixels());
    let num: f64 = y.iter().map(|v| v * v).sum();
    Ok(num / (x.energy() + epsilon))
}

/// Division-by-zero guard used throughout the isometry computations.
pub const DEFAULT_EPSILON: f64 = 1e-10;
