//! Objective privacy metrics: a no-reference blurriness score and the
//! isometry-satisfaction curve with its area-under-curve summary.
//!
//! Blurriness compares each image against re-blurred copies of itself: the
//! smaller the extra blur a 9-tap average introduces, the blurrier the
//! input already was. Scores live in `[0, 1]`, higher meaning blurrier. The
//! isometry curve reports, per slack value `delta`, the fraction of images
//! whose measurement/signal energy ratio stays at or above `1 - delta`;
//! a smaller area under that curve means reconstruction is less assured.

use std::fs;
use std::path::Path;

use crate::capture::{energy_ratio, CaptureConfig};
use crate::error::{Error, Result};
use crate::image::{Image, PixelGrid};
use crate::mask::CodedMask;

const BLUR_TAPS: usize = 9;

fn averaged_along<const HORIZONTAL: bool>(n: usize, data: &[f64]) -> Vec<f64> {
    let radius = (BLUR_TAPS / 2) as isize;
    let clamp = |v: isize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for k in -radius..=radius {
                let (rr, cc) = if HORIZONTAL {
                    (r, clamp(c as isize + k))
                } else {
                    (clamp(r as isize + k), c)
                };
                acc += data[rr * n + cc];
            }
            out.push(acc / BLUR_TAPS as f64);
        }
    }
    out
}

fn axis_blurriness<const HORIZONTAL: bool>(n: usize, data: &[f64]) -> f64 {
    let blurred = averaged_along::<HORIZONTAL>(n, data);
    let mut sum_f = 0.0;
    let mut sum_v = 0.0;
    for r in 0..n {
        for c in 0..n {
            if (HORIZONTAL && c == 0) || (!HORIZONTAL && r == 0) {
                continue;
            }
            let prev = if HORIZONTAL {
                r * n + c - 1
            } else {
                (r - 1) * n + c
            };
            let idx = r * n + c;
            let d_f = (data[idx] - data[prev]).abs();
            let d_b = (blurred[idx] - blurred[prev]).abs();
            sum_f += d_f;
            sum_v += (d_f - d_b).max(0.0);
        }
    }
    if sum_f == 0.0 {
        // No structure along this axis: maximally blurry by convention.
        return 1.0;
    }
    (sum_f - sum_v) / sum_f
}

/// No-reference blurriness in `[0, 1]`; higher means blurrier. Constant
/// inputs score 1 by convention. Requires at least 10 pixels per side for
/// the 9-tap averaging filter.
pub fn blurriness<T: PixelGrid>(img: &T) -> Result<f64> {
    let n = img.side();
    if n < 10 {
        return Err(Error::InvalidImage(format!(
            "blurriness needs side >= 10 for the {BLUR_TAPS}-tap filter, got {n}"
        )));
    }
    let data = img.data();
    let b_hor = axis_blurriness::<true>(n, data);
    let b_ver = axis_blurriness::<false>(n, data);
    Ok(b_hor.max(b_ver).clamp(0.0, 1.0))
}

/// 3x3 box blur with replicate borders; used as the reference "more blurred"
/// transform in the metric's ordering checks.
pub fn box_blur3(img: &Image) -> Image {
    let n = img.n();
    let clamp = |v: isize| v.clamp(0, n as isize - 1) as usize;
    Image::from_fn(n, |r, c| {
        let mut acc = 0.0;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                acc += img.get(clamp(r as isize + dr), clamp(c as isize + dc));
            }
        }
        acc / 9.0
    })
    .expect("averaging preserves range")
}

/// Per-image blurriness scores for one mask's measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurReport {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub mask_id: String,
}

impl BlurReport {
    pub fn new<T: PixelGrid>(items: &[T], mask_id: &str) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let scores: Vec<f64> = items.iter().map(blurriness).collect::<Result<_>>()?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        Ok(Self {
            scores,
            mean,
            mask_id: mask_id.to_string(),
        })
    }

    /// CSV rows `image_id,score`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("image_id,score\n");
        for (i, s) in self.scores.iter().enumerate() {
            out.push_str(&format!("{i},{s}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Satisfaction fraction of the reduced isometry condition over a slack grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RipCurve {
    pub delta_grid: Vec<f64>,
    pub satisfaction: Vec<f64>,
    pub auc: f64,
    /// Whether the energy ratios came from the normalized operator.
    pub normalized: bool,
}

/// 101 uniform points on `[0, 1]`.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

fn validate_grid(delta_grid: &[f64]) -> Result<()> {
    if delta_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "delta grid needs at least 2 points".to_string(),
        ));
    }
    if delta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "delta grid must be strictly increasing".to_string(),
        ));
    }
    if delta_grid[0] != 0.0 || *delta_grid.last().unwrap() != 1.0 {
        return Err(Error::InvalidArgument(
            "delta grid must cover [0, 1] endpoints".to_string(),
        ));
    }
    Ok(())
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| (g[1] - g[0]) * (v[0] + v[1]) / 2.0)
        .sum()
}

/// Absorbs the epsilon guard and FFT rounding at the satisfaction threshold,
/// so an exact isometry (ratio mathematically 1) counts as satisfied at
/// delta = 0.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Builds the satisfaction curve from precomputed energy ratios: at slack
/// `delta`, the fraction of ratios at or above `1 - delta`.
pub fn rip_curve_from_ratios(
    ratios: &[f64],
    delta_grid: &[f64],
    normalized: bool,
) -> Result<RipCurve> {
    if ratios.is_empty() {
        return Err(Error::EmptyBatch);
    }
    validate_grid(delta_grid)?;
    let total = ratios.len() as f64;
    let satisfaction: Vec<f64> = delta_grid
        .iter()
        .map(|&delta| {
            ratios.iter().filter(|&&r| r >= 1.0 - delta - THRESHOLD_SLACK).count() as f64 / total
        })
        .collect();
    let auc = trapezoid(delta_grid, &satisfaction);
    Ok(RipCurve {
        delta_grid: delta_grid.to_vec(),
        satisfaction,
        auc,
        normalized,
    })
}

/// Evaluates the mask's energy ratios over an image set and builds the curve.
pub fn rip_curve(
    h: &CodedMask,
    images: &[Image],
    delta_grid: &[f64],
    cfg: &CaptureConfig,
    epsilon: f64,
) -> Result<RipCurve> {
    if images.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let ratios: Vec<f64> = images
        .iter()
        .map(|img| energy_ratio(img, h, cfg, epsilon))
        .collect::<Result<_>>()?;
    rip_curve_from_ratios(&ratios, delta_grid, cfg.normalize_mask)
}

/// Recomputes the trapezoidal area under the curve, stores it, and returns it.
pub fn auc_rip(curve: &mut RipCurve) -> Result<f64> {
    validate_grid(&curve.delta_grid)?;
    if curve.satisfaction.len() != curve.delta_grid.len() {
        return Err(Error::Dimension(
            "satisfaction and grid lengths differ".to_string(),
        ));
    }
    curve.auc = trapezoid(&curve.delta_grid, &curve.satisfaction);
    Ok(curve.auc)
}

impl RipCurve {
    /// CSV rows `delta,satisfaction`; values re-parse to the exact floats.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("delta,satisfaction\n");
        for (d, s) in self.delta_grid.iter().zip(&self.satisfaction) {
            out.push_str(&format!("{d},{s}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
        let text = fs::read_to_string(path)?;
        let mut deltas = Vec::new();
        let mut sats = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    detail: format!("bad CSV row {i}"),
                })
            };
            deltas.push(parse(parts.next())?);
            sats.push(parse(parts.next())?);
        }
        Ok((deltas, sats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{capture, DEFAULT_EPSILON};
    use crate::mask::{make_full_open, make_pinhole};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(n, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn constant_image_is_maximally_blurry() {
        let img = Image::constant(16, 0.5).unwrap();
        assert_eq!(blurriness(&img).unwrap(), 1.0);
    }

    #[test]
    fn rejects_images_too_small_for_filter() {
        let img = Image::constant(9, 0.5).unwrap();
        assert!(blurriness(&img).is_err());
    }

    #[test]
    fn box_blur_raises_the_score() {
        for seed in 0..20u64 {
            let img = random_image(24, seed);
            let sharp = blurriness(&img).unwrap();
            let soft = blurriness(&box_blur3(&img)).unwrap();
            assert!(soft > sharp, "seed {seed}: {sharp} vs {soft}");
        }
    }

    #[test]
    fn blurriness_scores_in_unit_interval() {
        for seed in 0..10u64 {
            let s = blurriness(&random_image(20, seed)).unwrap();
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn blurriness_invariant_to_affine_rescale() {
        let img = random_image(20, 3);
        let rescaled = Image::from_fn(20, |r, c| 0.4 * img.get(r, c) + 0.3).unwrap();
        let a = blurriness(&img).unwrap();
        let b = blurriness(&rescaled).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn full_open_measures_blurrier_than_pinhole() {
        let cfg = CaptureConfig::default();
        let pin = make_pinhole(8).unwrap();
        let open = make_full_open(8).unwrap();
        let scenes = crate::dataset::gen_synthetic(10, 2, 24, 5).unwrap();
        let mut wins = 0;
        for img in &scenes.images {
            let y_pin = capture(img, &pin, &cfg, 0).unwrap();
            let y_open = capture(img, &open, &cfg, 0).unwrap();
            if blurriness(&y_open).unwrap() > blurriness(&y_pin).unwrap() {
                wins += 1;
            }
        }
        assert_eq!(wins, scenes.images.len());
    }

    #[test]
    fn pinhole_curve_saturates_at_one() {
        let images: Vec<Image> = (0..6).map(|s| random_image(16, s)).collect();
        let h = make_pinhole(5).unwrap();
        let curve = rip_curve(
            &h,
            &images,
            &default_delta_grid(),
            &CaptureConfig::default(),
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert!(curve.satisfaction.iter().all(|&s| s == 1.0));
        assert!((curve.auc - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_ratio_half_gives_step_curve() {
        let curve = rip_curve_from_ratios(&[0.5; 7], &default_delta_grid(), true).unwrap();
        assert_eq!(curve.satisfaction[49], 0.0);
        assert_eq!(curve.satisfaction[50], 1.0);
        // Step integral is 0.5 up to one half grid cell of trapezoid smoothing.
        assert!((curve.auc - 0.5).abs() <= 0.0051, "auc {}", curve.auc);
        assert!((curve.auc - 0.505).abs() < 1e-12);
    }

    #[test]
    fn auc_identities() {
        let grid = default_delta_grid();
        let mut ones = RipCurve {
            delta_grid: grid.clone(),
            satisfaction: vec![1.0; grid.len()],
            auc: 0.0,
            normalized: true,
        };
        assert!((auc_rip(&mut ones).unwrap() - 1.0).abs() < 1e-12);

        let mut zeros = RipCurve {
            delta_grid: grid.clone(),
            satisfaction: vec![0.0; grid.len()],
            auc: 0.0,
            normalized: true,
        };
        assert_eq!(auc_rip(&mut zeros).unwrap(), 0.0);

        let mut ramp = RipCurve {
            delta_grid: grid.clone(),
            satisfaction: grid.clone(),
            auc: 0.0,
            normalized: true,
        };
        assert!((auc_rip(&mut ramp).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn satisfaction_is_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ratios: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let curve = rip_curve_from_ratios(&ratios, &default_delta_grid(), true).unwrap();
        assert!(curve.satisfaction.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pointwise_max_of_curves_dominates_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let grid = default_delta_grid();
        let ra: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let rb: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let a = rip_curve_from_ratios(&ra, &grid, true).unwrap();
        let b = rip_curve_from_ratios(&rb, &grid, true).unwrap();
        let sat_max: Vec<f64> = a
            .satisfaction
            .iter()
            .zip(&b.satisfaction)
            .map(|(x, y)| x.max(*y))
            .collect();
        let mut max_curve = RipCurve {
            delta_grid: grid,
            satisfaction: sat_max,
            auc: 0.0,
            normalized: true,
        };
        let max_auc = auc_rip(&mut max_curve).unwrap();
        assert!(max_auc >= a.auc.max(b.auc) - 1e-12);
    }

    #[test]
    fn grid_must_cover_endpoints() {
        let bad: Vec<f64> = (0..=10).map(|i| 0.1 + i as f64 * 0.05).collect();
        assert!(rip_curve_from_ratios(&[0.5], &bad, true).is_err());
    }

    #[test]
    fn curve_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let ratios: Vec<f64> = (0..11).map(|_| rng.random::<f64>()).collect();
        let curve = rip_curve_from_ratios(&ratios, &default_delta_grid(), true).unwrap();
        curve.write_csv(&path).unwrap();
        let (deltas, sats) = RipCurve::read_csv(&path).unwrap();
        assert_eq!(deltas, curve.delta_grid);
        assert_eq!(sats, curve.satisfaction);
    }
}
