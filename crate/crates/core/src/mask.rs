//! Coded aperture patterns: fixed benchmark masks and the learnable
//! sigmoid-relaxed binary mask.
//!
//! The learnable path keeps unconstrained logits `w`; the forward pass
//! thresholds `sigmoid(w)` at 0.5 to obtain the binary pattern, and the
//! backward pass scales incoming gradients by `sigmoid'(w)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{parse_f64_payload, read_json_framed};

/// An `m x m` binary aperture pattern. Cell value 1 transmits light, 0 blocks it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedMask {
    m: usize,
    cells: Vec<u8>,
}

impl CodedMask {
    /// Validates that every cell is exactly 0 or 1.
    pub fn new(m: usize, cells: Vec<u8>) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidMask("side must be >= 1".to_string()));
        }
        if cells.len() != m * m {
            return Err(Error::InvalidMask(format!(
                "expected {} cells for side {m}, got {}",
                m * m,
                cells.len()
            )));
        }
        if let Some(i) = cells.iter().position(|&c| c > 1) {
            return Err(Error::InvalidMask(format!(
                "cell {i} = {} is not binary",
                cells[i]
            )));
        }
        Ok(Self { m, cells })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.m + col]
    }

    pub fn open_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 1).count()
    }

    /// Fraction of open (value-1) cells.
    pub fn aperture_ratio(&self) -> f64 {
        self.open_count() as f64 / (self.m * self.m) as f64
    }

    /// Short content hash identifying this pattern in measurement provenance.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.m.to_le_bytes());
        hasher.update(&self.cells);
        let digest = hasher.finalize();
        digest[..4].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The mask cells as a real-valued array, for use in the relaxed loss path.
    pub fn to_relaxed(&self) -> RelaxedMask {
        RelaxedMask {
            m: self.m,
            values: self.cells.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Writes plain-text PBM (`P1`) plus a `<path>.json` sidecar carrying
    /// `{"m": ..., "aperture_ratio": ...}`. Cell value 1 denotes an open cell.
    pub fn write_pbm(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.m * self.m * 2 + 16);
        out.push_str(&format!("P1\n{} {}\n", self.m, self.m));
        for row in self.cells.chunks(self.m) {
            let line: Vec<&str> = row.iter().map(|&c| if c == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        fs::write(path, out)?;

        let sidecar = serde_json::json!({
            "m": self.m,
            "aperture_ratio": self.aperture_ratio(),
        });
        let mut f = fs::File::create(sidecar_path(path))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Reads a plain-text PBM (`P1`) mask.
    pub fn read_pbm(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parse_err = |detail: &str| Error::Parse {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_ascii_whitespace());
        if tokens.next() != Some("P1") {
            return Err(parse_err("not a P1 PBM"));
        }
        let w: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err("bad width"))?;
        let h: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err("bad height"))?;
        if w != h {
            return Err(parse_err("mask is not square"));
        }
        let mut cells = Vec::with_capacity(w * h);
        for tok in tokens {
            for ch in tok.chars() {
                match ch {
                    '0' => cells.push(0),
                    '1' => cells.push(1),
                    _ => return Err(parse_err("cell is not 0/1")),
                }
            }
        }
        if cells.len() != w * h {
            return Err(parse_err("wrong number of cells"));
        }
        Self::new(w, cells)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Real-valued `m x m` mask, the continuous surrogate the losses operate on.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedMask {
    m: usize,
    values: Vec<f64>,
}

impl RelaxedMask {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidMask("side must be >= 1".to_string()));
        }
        if values.len() != m * m {
            return Err(Error::InvalidMask(format!(
                "expected {} values for side {m}, got {}",
                m * m,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMask("non-finite mask value".to_string()));
        }
        Ok(Self { m, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Writes `{"m": ...}\n` plus little-endian `f64` values.
    pub fn write_f64(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.values.len() * 8 + 16);
        out.extend_from_slice(format!("{{\"m\":{}}}\n", self.m).as_bytes());
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_f64(path: &Path) -> Result<Self> {
        let (header, data) = read_json_framed(path)?;
        let m = header["m"].as_u64().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: "header missing \"m\"".to_string(),
        })? as usize;
        let values = parse_f64_payload(path, &data, m * m)?;
        Self::new(m, values)
    }
}

/// Continuous relaxation of a binary mask, trained by gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLogits {
    m: usize,
    logits: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MaskLogits {
    pub fn new(m: usize, logits: Vec<f64>) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidMask("side must be >= 1".to_string()));
        }
        if logits.len() != m * m {
            return Err(Error::InvalidMask(format!(
                "expected {} logits for side {m}, got {}",
                m * m,
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMask("non-finite logit".to_string()));
        }
        Ok(Self { m, logits })
    }

    /// Seeded i.i.d. uniform init in `[-0.1, 0.1]`, an unbiased start at
    /// roughly 50% aperture ratio.
    pub fn init_uniform(m: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = (0..m * m).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self::new(m, logits)
    }

    /// Logits pinned at `+/-magnitude` so that binarization reproduces `mask`.
    pub fn from_mask(mask: &CodedMask, magnitude: f64) -> Result<Self> {
        if !(magnitude > 0.0) || !magnitude.is_finite() {
            return Err(Error::InvalidArgument(
                "logit magnitude must be positive and finite".to_string(),
            ));
        }
        let logits = mask
            .cells()
            .iter()
            .map(|&c| if c == 1 { magnitude } else { -magnitude })
            .collect();
        Self::new(mask.m(), logits)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// Elementwise `sigmoid(w)`, the relaxed mask used in the training path.
    pub fn relaxed(&self) -> RelaxedMask {
        RelaxedMask {
            m: self.m,
            values: self.logits.iter().map(|&w| sigmoid(w)).collect(),
        }
    }

    /// Hard threshold: cell = 1 iff `sigmoid(w) > 0.5`, i.e. iff `w > 0`.
    /// A logit of exactly 0 maps to a closed cell.
    pub fn binarize(&self) -> CodedMask {
        let cells = self
            .logits
            .iter()
            .map(|&w| if w > 0.0 { 1 } else { 0 })
            .collect();
        CodedMask {
            m: self.m,
            cells,
        }
    }

    /// Straight-through backward: `grad_wrt_mask * sigmoid'(w)` elementwise,
    /// with `sigmoid'(w) = sigmoid(w) * (1 - sigmoid(w))`.
    pub fn ste_backward(&self, grad_wrt_mask: &[f64]) -> Result<Vec<f64>> {
        if grad_wrt_mask.len() != self.logits.len() {
            return Err(Error::Dimension(format!(
                "gradient has {} entries, logits have {}",
                grad_wrt_mask.len(),
                self.logits.len()
            )));
        }
        Ok(self
            .logits
            .iter()
            .zip(grad_wrt_mask)
            .map(|(&w, &g)| {
                let s = sigmoid(w);
                g * s * (1.0 - s)
            })
            .collect())
    }

    /// Writes `{"m": ...}\n` plus little-endian `f64` logits.
    pub fn write_f64(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.logits.len() * 8 + 16);
        out.extend_from_slice(format!("{{\"m\":{}}}\n", self.m).as_bytes());
        for &v in &self.logits {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_f64(path: &Path) -> Result<Self> {
        let (header, data) = read_json_framed(path)?;
        let m = header["m"].as_u64().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: "header missing \"m\"".to_string(),
        })? as usize;
        let logits = parse_f64_payload(path, &data, m * m)?;
        Self::new(m, logits)
    }
}

/// The four pattern families under study.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskKind {
    Pinhole,
    FullOpen,
    Random { ratio: f64, seed: u64 },
    Learned,
}

impl MaskKind {
    /// Builds the fixed pattern for this kind, or `None` for `Learned`
    /// (which only exists as logits during training).
    pub fn build(&self, m: usize) -> Result<Option<CodedMask>> {
        Ok(match *self {
            MaskKind::Pinhole => Some(make_pinhole(m)?),
            MaskKind::FullOpen => Some(make_full_open(m)?),
            MaskKind::Random { ratio, seed } => Some(make_random(m, ratio, seed)?),
            MaskKind::Learned => None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            MaskKind::Pinhole => "pinhole",
            MaskKind::FullOpen => "full-open",
            MaskKind::Random { .. } => "random",
            MaskKind::Learned => "learned",
        }
    }
}

/// Single open cell at `(m/2, m/2)`.
pub fn make_pinhole(m: usize) -> Result<CodedMask> {
    if m < 1 {
        return Err(Error::InvalidMask("side must be >= 1".to_string()));
    }
    let mut cells = vec![0u8; m * m];
    cells[(m / 2) * m + m / 2] = 1;
    CodedMask::new(m, cells)
}

/// All-ones pattern, aperture ratio 1.
pub fn make_full_open(m: usize) -> Result<CodedMask> {
    if m < 1 {
        return Err(Error::InvalidMask("side must be >= 1".to_string()));
    }
    CodedMask::new(m, vec![1u8; m * m])
}

/// Cells drawn i.i.d. Bernoulli(`ratio`) from a seeded generator.
pub fn make_random(m: usize, ratio: f64, seed: u64) -> Result<CodedMask> {
    if m < 1 {
        return Err(Error::InvalidMask("side must be >= 1".to_string()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "aperture ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (0..m * m)
        .map(|_| if rng.random::<f64>() < ratio { 1u8 } else { 0u8 })
        .collect();
    CodedMask::new(m, cells)
}

/// Fraction of open cells; free-function form of [`CodedMask::aperture_ratio`].
pub fn aperture_ratio(h: &CodedMask) -> f64 {
    h.aperture_ratio()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pinhole_placement_and_ratio() {
        let h = make_pinhole(1).unwrap();
        assert_eq!(h.cells(), &[1]);

        let h = make_pinhole(3).unwrap();
        assert_eq!(h.open_count(), 1);
        assert_eq!(h.cell(1, 1), 1);
        assert!((h.aperture_ratio() - 1.0 / 9.0).abs() < 1e-15);

        let h = make_pinhole(32).unwrap();
        assert!((h.aperture_ratio() - 1.0 / 1024.0).abs() < 1e-15);
        assert_eq!(h.cell(16, 16), 1);
    }

    #[test]
    fn full_open_is_all_ones() {
        let h = make_full_open(2).unwrap();
        assert_eq!(h.cells(), &[1, 1, 1, 1]);
        for m in [1, 3, 8, 17] {
            assert_eq!(make_full_open(m).unwrap().aperture_ratio(), 1.0);
        }
    }

    #[test]
    fn random_mask_is_deterministic_per_seed() {
        let a = make_random(16, 0.5, 42).unwrap();
        let b = make_random(16, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = make_random(16, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_mask_open_count_within_3_sigma() {
        // m=32, ratio=0.5: mean 512, sigma 16.
        let h = make_random(32, 0.5, 7).unwrap();
        let count = h.open_count() as f64;
        assert!((count - 512.0).abs() <= 48.0, "open count {count}");
    }

    #[test]
    fn random_mask_rejects_bad_ratio() {
        assert!(make_random(8, 0.0, 1).is_err());
        assert!(make_random(8, 1.0, 1).is_err());
        assert!(make_random(8, -0.5, 1).is_err());
    }

    #[test]
    fn binarize_threshold_convention() {
        let w = MaskLogits::new(2, vec![0.2, -0.2, 0.0, -5.0]).unwrap();
        assert_eq!(w.binarize().cells(), &[1, 0, 0, 0]);

        let all_open = MaskLogits::new(2, vec![3.0; 4]).unwrap();
        assert_eq!(all_open.binarize().cells(), &[1, 1, 1, 1]);

        let all_closed = MaskLogits::new(2, vec![-1.0; 4]).unwrap();
        assert_eq!(all_closed.binarize().cells(), &[0, 0, 0, 0]);
    }

    #[test]
    fn binarize_round_trips_existing_masks() {
        let h = make_random(9, 0.4, 3).unwrap();
        let w = MaskLogits::from_mask(&h, 6.0).unwrap();
        assert_eq!(w.binarize(), h);
    }

    #[test]
    fn ste_backward_values() {
        let w = MaskLogits::new(2, vec![0.0; 4]).unwrap();
        let grads = w.ste_backward(&[1.0, 2.0, -4.0, 0.0]).unwrap();
        assert_eq!(grads, vec![0.25, 0.5, -1.0, 0.0]);

        let w = MaskLogits::new(1, vec![10.0]).unwrap();
        let g = w.ste_backward(&[1.0]).unwrap()[0];
        let s = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((g - s * (1.0 - s)).abs() < 1e-15);
        assert!((g - 4.5395807735951673e-5).abs() < 1e-12);
    }

    #[test]
    fn ste_backward_rejects_shape_mismatch() {
        let w = MaskLogits::new(2, vec![0.0; 4]).unwrap();
        assert!(w.ste_backward(&[1.0; 3]).is_err());
    }

    #[test]
    fn logits_reject_non_finite() {
        assert!(MaskLogits::new(1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn pbm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pbm");
        let h = make_random(11, 0.35, 99).unwrap();
        h.write_pbm(&path).unwrap();
        let back = CodedMask::read_pbm(&path).unwrap();
        assert_eq!(h, back);

        let sidecar = fs::read_to_string(dir.path().join("mask.pbm.json")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
        assert_eq!(json["m"], 11);
    }

    #[test]
    fn logits_f64_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logits.f64");
        let w = MaskLogits::init_uniform(6, 5).unwrap();
        w.write_f64(&path).unwrap();
        let back = MaskLogits::read_f64(&path).unwrap();
        assert_eq!(w, back);
    }

    proptest! {
        #[test]
        fn ste_is_a_quarter_contraction(
            logits in proptest::collection::vec(-20.0f64..20.0, 16),
            grads in proptest::collection::vec(-5.0f64..5.0, 16),
        ) {
            let w = MaskLogits::new(4, logits).unwrap();
            let out = w.ste_backward(&grads).unwrap();
            for (o, g) in out.iter().zip(&grads) {
                prop_assert!(o.abs() <= 0.25 * g.abs() + 1e-15);
            }
        }

        #[test]
        fn aperture_ratio_in_unit_interval(m in 1usize..12, ratio in 0.05f64..0.95, seed in 0u64..50) {
            let h = make_random(m, ratio, seed).unwrap();
            let r = h.aperture_ratio();
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn binarize_idempotent_through_logits(m in 1usize..10, ratio in 0.1f64..0.9, seed in 0u64..50) {
            let h = make_random(m, ratio, seed).unwrap();
            let w = MaskLogits::from_mask(&h, 12.0).unwrap();
            prop_assert_eq!(w.binarize(), h);
        }
    }
}
