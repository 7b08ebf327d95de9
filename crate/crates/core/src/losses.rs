//! Human-imperceptibility losses over the relaxed mask, and the combined
//! training objective `L = L_rec + alpha * L_hi`.
//!
//! All losses take the real-valued relaxed mask (the binary mask is only
//! used at evaluation time) and return both the value and the analytic
//! gradient with respect to the mask. With kernel normalization enabled the
//! gradients include the quotient-rule term of `k = h / sum(h)`, so they
//! remain exact derivatives of the computed value; in raw mode they reduce
//! to the plain adjoint forms. Subgradients use the convention sign(0) = 0.

use crate::capture::{correlate_support, relaxed_kernel_backward, CaptureConfig, ConvOperator};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::RelaxedMask;

/// Which human-imperceptible penalty trains the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiKind {
    /// No privacy constraint (the unconstrained learned configuration).
    None,
    /// Match measurements captured with a fully open aperture.
    Sim,
    /// Maximize the total variation of the pattern.
    Tv,
    /// Maximize the pattern's L1 norm (large aperture opening).
    Inv,
    /// Minimize the measurement/signal energy ratio.
    Rip,
}

impl HiKind {
    pub fn label(&self) -> &'static str {
        match self {
            HiKind::None => "none",
            HiKind::Sim => "sim",
            HiKind::Tv => "tv",
            HiKind::Inv => "inv",
            HiKind::Rip => "rip",
        }
    }
}

/// Weighting of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub hi_kind: HiKind,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// A scalar loss plus its gradient with respect to the relaxed mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// `d value / d mask`, row-major `m x m`.
    pub grad_mask: Vec<f64>,
}

impl LossValue {
    pub fn zero(m: usize) -> Self {
        Self {
            value: 0.0,
            grad_mask: vec![0.0; m * m],
        }
    }
}

/// Forward differences of a mask along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGradients {
    m: usize,
    /// Horizontal differences `h[r, c+1] - h[r, c]`, row-major `m x (m-1)`.
    pub dx: Vec<f64>,
    /// Vertical differences `h[r+1, c] - h[r, c]`, row-major `(m-1) x m`.
    pub dy: Vec<f64>,
}

impl MaskGradients {
    pub fn of(h: &RelaxedMask) -> Result<Self> {
        let m = h.m();
        if m < 2 {
            return Err(Error::InvalidArgument(
                "mask gradients need side >= 2".to_string(),
            ));
        }
        let vals = h.values();
        let mut dx = Vec::with_capacity(m * (m - 1));
        let mut dy = Vec::with_capacity((m - 1) * m);
        for r in 0..m {
            for c in 0..m - 1 {
                dx.push(vals[r * m + c + 1] - vals[r * m + c]);
            }
        }
        for r in 0..m - 1 {
            for c in 0..m {
                dy.push(vals[(r + 1) * m + c] - vals[r * m + c]);
            }
        }
        Ok(Self { m, dx, dy })
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_batch(h: &RelaxedMask, batch: &[Image]) -> Result<usize> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let n = first.n();
    if batch.iter().any(|img| img.n() != n) {
        return Err(Error::Dimension("batch images differ in size".to_string()));
    }
    if h.m() > n {
        return Err(Error::Dimension(format!(
            "mask side {} exceeds image side {n}",
            h.m()
        )));
    }
    Ok(n)
}

/// Similarity loss: `sum_i ||H * x_i - 1_m * x_i||^2`, pulling measurements
/// toward those of a fully open aperture. The all-ones kernel follows the
/// same normalization setting as `H`.
pub fn sim_loss(h: &RelaxedMask, batch: &[Image], cfg: &CaptureConfig) -> Result<LossValue> {
    let n = check_batch(h, batch)?;
    let m = h.m();

    let op_h = ConvOperator::from_relaxed(h, n, cfg.normalize_mask)?;
    let ones_kernel = if cfg.normalize_mask {
        vec![1.0 / (m * m) as f64; m * m]
    } else {
        vec![1.0; m * m]
    };
    let op_ones = ConvOperator::from_kernel(n, m, &ones_kernel)?;

    let mut value = 0.0;
    let mut grad_kernel = vec![0.0; m * m];
    for img in batch {
        let y = op_h.apply(img.pixels());
        let y_open = op_ones.apply(img.pixels());
        let residual: Vec<f64> = y.iter().zip(&y_open).map(|(a, b)| a - b).collect();
        value += residual.iter().map(|v| v * v).sum::<f64>();
        let corr = correlate_support(n, &residual, img.pixels(), m);
        for (g, c) in grad_kernel.iter_mut().zip(&corr) {
            *g += 2.0 * c;
        }
    }
    let grad_mask = relaxed_kernel_backward(h, cfg.normalize_mask, &grad_kernel);
    Ok(LossValue { value, grad_mask })
}

/// Total-variation loss: `-(||dx H||_1 + ||dy H||_1)`. Maximizing TV spreads
/// the pattern; the loss is the negated TV so minimization does the spreading.
pub fn tv_loss(h: &RelaxedMask) -> Result<LossValue> {
    let grads = MaskGradients::of(h)?;
    let m = h.m();
    let value = -(grads.dx.iter().map(|v| v.abs()).sum::<f64>()
        + grads.dy.iter().map(|v| v.abs()).sum::<f64>());

    let mut grad_mask = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m - 1 {
            let s = sign(grads.dx[r * (m - 1) + c]);
            grad_mask[r * m + c + 1] -= s;
            grad_mask[r * m + c] += s;
        }
    }
    for r in 0..m - 1 {
        for c in 0..m {
            let s = sign(grads.dy[r * m + c]);
            grad_mask[(r + 1) * m + c] -= s;
            grad_mask[r * m + c] += s;
        }
    }
    Ok(LossValue { value, grad_mask })
}

/// Invertibility loss: `-||H||_1`. Minimizing it opens the aperture wide.
pub fn inv_loss(h: &RelaxedMask) -> LossValue {
    let value = -h.values().iter().map(|v| v.abs()).sum::<f64>();
    let grad_mask = h.values().iter().map(|&v| -sign(v)).collect();
    LossValue { value, grad_mask }
}

/// Isometry loss: `-sum_i ||H * x_i||^2 / (||x_i||^2 + epsilon)`, the batch
/// approximation of pushing the pattern away from the isometry condition.
pub fn rip_loss(
    h: &RelaxedMask,
    batch: &[Image],
    cfg: &CaptureConfig,
    epsilon: f64,
) -> Result<LossValue> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let n = check_batch(h, batch)?;
    let m = h.m();
    let op = ConvOperator::from_relaxed(h, n, cfg.normalize_mask)?;

    let mut value = 0.0;
    let mut grad_kernel = vec![0.0; m * m];
    for img in batch {
        let denom = img.energy() + epsilon;
        let y = op.apply(img.pixels());
        value -= y.iter().map(|v| v * v).sum::<f64>() / denom;
        let corr = correlate_support(n, &y, img.pixels(), m);
        for (g, c) in grad_kernel.iter_mut().zip(&corr) {
            *g -= 2.0 * c / denom;
        }
    }
    let grad_mask = relaxed_kernel_backward(h, cfg.normalize_mask, &grad_kernel);
    Ok(LossValue { value, grad_mask })
}

/// Combined objective `L = L_rec + alpha * L_hi`. With `hi_kind = None` the
/// privacy term contributes nothing, gradient included.
pub fn total_loss(rec: &LossValue, hi: &LossValue, w: &LossWeights) -> Result<LossValue> {
    w.validate()?;
    if w.hi_kind == HiKind::None {
        return Ok(rec.clone());
    }
    if rec.grad_mask.len() != hi.grad_mask.len() {
        return Err(Error::Dimension(format!(
            "gradient shapes differ: {} vs {}",
            rec.grad_mask.len(),
            hi.grad_mask.len()
        )));
    }
    let value = rec.value + w.alpha * hi.value;
    let grad_mask = rec
        .grad_mask
        .iter()
        .zip(&hi.grad_mask)
        .map(|(r, h)| r + w.alpha * h)
        .collect();
    Ok(LossValue { value, grad_mask })
}
