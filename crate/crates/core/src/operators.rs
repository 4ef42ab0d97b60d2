//! Measurement operators: column-normalized Gaussian ensembles and the
//! simulated-MRI composite `F_u · W⁻¹` (selected 2D-DFT rows applied to the
//! inverse of a two-level periodized Daubechies-4 wavelet transform).
//!
//! Complex DFT measurements are stored as stacked real rows: the real parts
//! of all selected frequencies first, then the imaginary parts.

use crate::linalg::DenseMatrix;
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("operator dimensions must be positive, got {rows}x{cols}")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("dimension not dyadic for 2 levels: {height}x{width}")]
    NotDyadic { height: usize, width: usize },
    #[error("coefficient vector has length {len}, expected {expected}")]
    LengthMismatch { len: usize, expected: usize },
    #[error("sample budget {budget} exceeds {size} distinct frequencies")]
    BudgetTooLarge { budget: usize, size: usize },
    #[error("invalid sampling mask: {0}")]
    InvalidMask(String),
}

/// Decay exponent of the variable-density sampling law `(1 + r)^(-p)`.
pub const DENSITY_EXPONENT: f64 = 3.0;

/// Share of the budget taken deterministically from the lowest frequencies
/// (fully sampled center); the rest follows the random density.
pub const CENTER_FRACTION: f64 = 0.75;

const DWT_LEVELS: usize = 2;

/// Orthonormal 4-tap Daubechies lowpass filter.
pub fn daub4_lowpass() -> [f64; 4] {
    let s3 = 3f64.sqrt();
    let d = 4.0 * 2f64.sqrt();
    [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
}

/// Quadrature-mirror highpass `g[n] = (-1)^n h[L-1-n]`.
pub fn daub4_highpass() -> [f64; 4] {
    let h = daub4_lowpass();
    [h[3], -h[2], h[1], -h[0]]
}

fn analyze_1d(signal: &[f64], out: &mut [f64]) {
    let n = signal.len();
    let half = n / 2;
    let (h, g) = (daub4_lowpass(), daub4_highpass());
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for t in 0..4 {
            let v = signal[(2 * k + t) % n];
            a += h[t] * v;
            d += g[t] * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

fn synthesize_1d(coeffs: &[f64], out: &mut [f64]) {
    let n = coeffs.len();
    let half = n / 2;
    let (h, g) = (daub4_lowpass(), daub4_highpass());
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (coeffs[k], coeffs[half + k]);
        for t in 0..4 {
            out[(2 * k + t) % n] += h[t] * a + g[t] * d;
        }
    }
}

/// One separable analysis or synthesis level on the top-left `rows x cols`
/// block of a row-major `width`-wide buffer.
fn level_2d(buf: &mut [f64], width: usize, rows: usize, cols: usize, forward: bool) {
    let step = if forward { analyze_1d } else { synthesize_1d };
    let mut line = vec![0.0; rows.max(cols)];
    let mut tmp = vec![0.0; rows.max(cols)];
    let pass_rows = |buf: &mut [f64], line: &mut [f64], tmp: &mut [f64]| {
        for r in 0..rows {
            line[..cols].copy_from_slice(&buf[r * width..r * width + cols]);
            step(&line[..cols], &mut tmp[..cols]);
            buf[r * width..r * width + cols].copy_from_slice(&tmp[..cols]);
        }
    };
    let pass_cols = |buf: &mut [f64], line: &mut [f64], tmp: &mut [f64]| {
        for c in 0..cols {
            for r in 0..rows {
                line[r] = buf[r * width + c];
            }
            step(&line[..rows], &mut tmp[..rows]);
            for r in 0..rows {
                buf[r * width + c] = tmp[r];
            }
        }
    };
    // Synthesis undoes the column pass first.
    if forward {
        pass_rows(buf, &mut line, &mut tmp);
        pass_cols(buf, &mut line, &mut tmp);
    } else {
        pass_cols(buf, &mut line, &mut tmp);
        pass_rows(buf, &mut line, &mut tmp);
    }
}

fn check_dyadic(height: usize, width: usize) -> Result<(), OperatorError> {
    let q = 1 << DWT_LEVELS;
    if height == 0 || width == 0 || height % q != 0 || width % q != 0 {
        return Err(OperatorError::NotDyadic { height, width });
    }
    Ok(())
}

/// Two-level periodized Daubechies-4 analysis of a row-major `height x width`
/// image. Coefficients use the usual nested layout with the coarsest
/// approximation band in the top-left `height/4 x width/4` block.
pub fn dwt2_daub4(image: &[f64], height: usize, width: usize) -> Result<Vec<f64>, OperatorError> {
    check_dyadic(height, width)?;
    if image.len() != height * width {
        return Err(OperatorError::LengthMismatch {
            len: image.len(),
            expected: height * width,
        });
    }
    let mut buf = image.to_vec();
    for level in 0..DWT_LEVELS {
        level_2d(&mut buf, width, height >> level, width >> level, true);
    }
    Ok(buf)
}

/// Exact inverse of [`dwt2_daub4`].
pub fn idwt2_daub4(coeffs: &[f64], height: usize, width: usize) -> Result<Vec<f64>, OperatorError> {
    check_dyadic(height, width)?;
    if coeffs.len() != height * width {
        return Err(OperatorError::LengthMismatch {
            len: coeffs.len(),
            expected: height * width,
        });
    }
    let mut buf = coeffs.to_vec();
    for level in (0..DWT_LEVELS).rev() {
        level_2d(&mut buf, width, height >> level, width >> level, false);
    }
    Ok(buf)
}

/// Flat indices of the coarsest approximation band.
pub fn approximation_indices(height: usize, width: usize) -> Vec<usize> {
    let (ah, aw) = (height >> DWT_LEVELS, width >> DWT_LEVELS);
    (0..ah).flat_map(|r| (0..aw).map(move |c| r * width + c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub grid: (usize, usize),
    pub selected: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SamplingMask {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let (h, w) = self.grid;
        let mut seen = BTreeSet::new();
        for &(u, v) in &self.selected {
            if u >= h || v >= w {
                return Err(OperatorError::InvalidMask(format!("frequency ({u},{v}) outside {h}x{w}")));
            }
            if !seen.insert((u, v)) {
                return Err(OperatorError::InvalidMask(format!("duplicate frequency ({u},{v})")));
            }
        }
        if !seen.contains(&(0, 0)) {
            return Err(OperatorError::InvalidMask("DC frequency missing".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mask serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, OperatorError> {
        let mask: Self = serde_json::from_str(s).map_err(|e| OperatorError::InvalidMask(e.to_string()))?;
        mask.validate()?;
        Ok(mask)
    }
}

/// Normalized radial frequency in `[0, 1]` for DFT index `(u, v)` on an
/// `h x w` grid (aliased to signed frequencies).
pub fn radial_frequency(u: usize, v: usize, h: usize, w: usize) -> f64 {
    let fu = u.min(h - u) as f64 / (h as f64 / 2.0).max(1.0);
    let fv = v.min(w - v) as f64 / (w as f64 / 2.0).max(1.0);
    ((fu * fu + fv * fv) / 2.0).sqrt()
}

/// `(u, v)` is the representative of its conjugate pair `{(u, v), (−u, −v)}`.
/// For a real image the two carry the same information.
pub fn is_canonical_frequency(u: usize, v: usize, h: usize, w: usize) -> bool {
    (u, v) <= ((h - u) % h, (w - v) % w)
}

/// Number of distinct conjugate classes on an `h x w` grid.
pub fn canonical_frequency_count(h: usize, w: usize) -> usize {
    (0..h).flat_map(|u| (0..w).map(move |v| (u, v))).filter(|&(u, v)| is_canonical_frequency(u, v, h, w)).count()
}

/// Variable-density random mask over one representative per conjugate pair:
/// the `⌈CENTER_FRACTION · budget⌉` lowest frequencies (DC first), then the
/// remainder drawn without replacement with probability `∝ (1 + r)^(-3)`.
pub fn variable_density_mask(h: usize, w: usize, budget: usize, seed: u64) -> Result<SamplingMask, OperatorError> {
    if h == 0 || w == 0 {
        return Err(OperatorError::ZeroDimension { rows: h, cols: w });
    }
    let classes = canonical_frequency_count(h, w);
    if budget > classes {
        return Err(OperatorError::BudgetTooLarge { budget, size: classes });
    }
    if budget == 0 {
        return Err(OperatorError::InvalidMask("budget must include the DC frequency".into()));
    }
    let mut by_radius: Vec<(usize, usize)> =
        (0..h).flat_map(|u| (0..w).map(move |v| (u, v))).filter(|&(u, v)| is_canonical_frequency(u, v, h, w)).collect();
    by_radius.sort_by(|a, b| radial_frequency(a.0, a.1, h, w).total_cmp(&radial_frequency(b.0, b.1, h, w)).then(a.cmp(b)));
    let center = ((CENTER_FRACTION * budget as f64).ceil() as usize).clamp(1, budget);
    let mut selected: Vec<(usize, usize)> = by_radius[..center].to_vec();
    let core: BTreeSet<(usize, usize)> = selected.iter().copied().collect();
    let mut rng = rng::stream(seed, rng::Stream::Mask);
    // Efraimidis–Spirakis weighted sampling: keep the largest ln(u)/weight.
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(h * w - 1);
    for u in 0..h {
        for v in 0..w {
            if !is_canonical_frequency(u, v, h, w) {
                continue;
            }
            let weight = (1.0 + radial_frequency(u, v, h, w)).powf(-DENSITY_EXPONENT);
            let r: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            if core.contains(&(u, v)) {
                continue;
            }
            keyed.push((r.ln() / weight, u, v));
        }
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    selected.extend(keyed.into_iter().take(budget - center).map(|(_, u, v)| (u, v)));
    selected.sort_unstable();
    Ok(SamplingMask {
        grid: (h, w),
        selected,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Gaussian,
    MriComposite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatorMeta {
    Seed(u64),
    Mask(SamplingMask),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOperator {
    pub kind: OperatorKind,
    pub matrix: DenseMatrix,
    pub meta: OperatorMeta,
}

impl MeasurementOperator {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    /// Wraps an explicit matrix (used by tests and hand-built instances).
    pub fn from_matrix(matrix: DenseMatrix) -> Self {
        Self {
            kind: OperatorKind::Gaussian,
            matrix,
            meta: OperatorMeta::Seed(0),
        }
    }
}

/// `n x m` iid standard normal matrix with every column scaled to unit norm.
pub fn gaussian_operator(n: usize, m: usize, seed: u64) -> Result<MeasurementOperator, OperatorError> {
    if n == 0 || m == 0 {
        return Err(OperatorError::ZeroDimension { rows: n, cols: m });
    }
    let mut rng = rng::stream(seed, rng::Stream::Operator);
    // Draw column by column so a column's content does not depend on m.
    let mut columns = Vec::with_capacity(m);
    for _ in 0..m {
        let mut col: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = crate::linalg::norm2(&col);
        col.iter_mut().for_each(|v| *v /= norm);
        columns.push(col);
    }
    let matrix = DenseMatrix::from_columns(n, &columns).expect("consistent column lengths");
    Ok(MeasurementOperator {
        kind: OperatorKind::Gaussian,
        matrix,
        meta: OperatorMeta::Seed(seed),
    })
}

/// Unnormalized 2D DFT basis row `e^{-2πi(up/h + vq/w)}` as (real, imag) images.
fn dft_row_images(u: usize, v: usize, h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for p in 0..h {
        for q in 0..w {
            let phase = -2.0 * PI * (((u * p) % h) as f64 / h as f64 + ((v * q) % w) as f64 / w as f64);
            re[p * w + q] = phase.cos();
            im[p * w + q] = phase.sin();
        }
    }
    (re, im)
}

/// Materialized `F_u · W⁻¹`. Row `k` (and `k + |selected|`) is the real
/// (imaginary) part of selected frequency `k`; since `W` is orthogonal the
/// row equals the forward DWT of the DFT basis image.
pub fn mri_operator(mask: &SamplingMask) -> Result<MeasurementOperator, OperatorError> {
    mask.validate()?;
    let (h, w) = mask.grid;
    check_dyadic(h, w)?;
    let k = mask.selected.len();
    let mut matrix = DenseMatrix::zeros(2 * k, h * w);
    for (i, &(u, v)) in mask.selected.iter().enumerate() {
        let (re, im) = dft_row_images(u, v, h, w);
        let re_row = dwt2_daub4(&re, h, w)?;
        let im_row = dwt2_daub4(&im, h, w)?;
        for (c, (&a, &b)) in re_row.iter().zip(&im_row).enumerate() {
            matrix.set(i, c, a);
            matrix.set(k + i, c, b);
        }
    }
    Ok(MeasurementOperator {
        kind: OperatorKind::MriComposite,
        matrix,
        meta: OperatorMeta::Mask(mask.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..h * w).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Direct circular convolution + downsampling oracle for one 2D level.
    fn oracle_level(img: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (lo, hi) = (daub4_lowpass(), daub4_highpass());
        let mut out = vec![0.0; h * w];
        for a in 0..h / 2 {
            for b in 0..w / 2 {
                for (band, (fr, fc)) in [(&lo, &lo), (&lo, &hi), (&hi, &lo), (&hi, &hi)].iter().enumerate() {
                    let mut s = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            s += fr[i] * fc[j] * img[((2 * a + i) % h) * w + (2 * b + j) % w];
                        }
                    }
                    let (ro, co) = match band {
                        0 => (0, 0),
                        1 => (0, w / 2),
                        2 => (h / 2, 0),
                        _ => (h / 2, w / 2),
                    };
                    out[(ro + a) * w + co + b] = s;
                }
            }
        }
        out
    }

    #[test]
    fn dwt_matches_convolution_oracle() {
        let (h, w) = (16, 8);
        let img = random_image(h, w, 3);
        let lvl1 = oracle_level(&img, h, w);
        let approx: Vec<f64> = (0..h / 2)
            .flat_map(|r| (0..w / 2).map(move |c| (r, c)))
            .map(|(r, c)| lvl1[r * w + c])
            .collect();
        let lvl2 = oracle_level(&approx, h / 2, w / 2);
        let mut expected = lvl1.clone();
        for r in 0..h / 2 {
            for c in 0..w / 2 {
                expected[r * w + c] = lvl2[r * (w / 2) + c];
            }
        }
        let got = dwt2_daub4(&img, h, w).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dwt_perfect_reconstruction_and_energy() {
        let img = random_image(32, 32, 1);
        let c = dwt2_daub4(&img, 32, 32).unwrap();
        let back = idwt2_daub4(&c, 32, 32).unwrap();
        let err = img.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!((norm2(&c) - norm2(&img)).abs() < 1e-10);
    }

    #[test]
    fn constant_image_has_no_detail() {
        let (h, w) = (16, 16);
        let c = dwt2_daub4(&vec![3.0; h * w], h, w).unwrap();
        let approx: BTreeSet<usize> = approximation_indices(h, w).into_iter().collect();
        for (i, v) in c.iter().enumerate() {
            if approx.contains(&i) {
                assert!((v - 12.0).abs() < 1e-10);
            } else {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dwt_rejects_non_dyadic() {
        assert!(matches!(dwt2_daub4(&[0.0; 36], 6, 6), Err(OperatorError::NotDyadic { .. })));
    }

    #[test]
    fn gaussian_columns_unit_and_deterministic() {
        let a = gaussian_operator(4, 8, 7).unwrap();
        for c in 0..8 {
            assert!((norm2(&a.matrix.column(c)) - 1.0).abs() < 1e-12);
        }
        let b = gaussian_operator(33, 256, 42).unwrap();
        let b2 = gaussian_operator(33, 256, 42).unwrap();
        assert_eq!(b, b2);
        assert!(gaussian_operator(0, 3, 1).is_err());
    }

    #[test]
    fn gram_off_diagonal_mean_near_zero() {
        let mut worst = 0.0f64;
        for seed in 0..100 {
            let a = gaussian_operator(256, 256, seed).unwrap();
            // Only the first 32 columns to keep the check fast.
            let g = a.matrix.select_columns(&(0..32).collect::<Vec<_>>()).gram();
            let mut s = 0.0;
            let mut cnt = 0.0;
            for i in 0..32 {
                for j in 0..32 {
                    if i != j {
                        s += g.get(i, j);
                        cnt += 1.0;
                    }
                }
            }
            worst = worst.max((s / cnt).abs());
        }
        assert!(worst < 0.02, "worst mean {worst}");
    }

    #[test]
    fn mask_examples() {
        // 4x4: (16 + 4 self-conjugate) / 2 classes.
        assert_eq!(canonical_frequency_count(4, 4), 10);
        let full = variable_density_mask(4, 4, 10, 1).unwrap();
        assert_eq!(full.selected.len(), 10);
        assert!(full.selected.iter().all(|&(u, v)| is_canonical_frequency(u, v, 4, 4)));
        let one = variable_density_mask(8, 8, 1, 5).unwrap();
        assert_eq!(one.selected, vec![(0, 0)]);
        assert!(variable_density_mask(4, 4, 11, 1).is_err());
        // The center share is deterministic: the lowest frequencies appear for every seed.
        let a = variable_density_mask(32, 32, 61, 1).unwrap();
        let b = variable_density_mask(32, 32, 61, 2).unwrap();
        for f in [(0, 0), (0, 1), (1, 0), (1, 1), (1, 31), (0, 2), (2, 0)] {
            assert!(a.selected.contains(&f) && b.selected.contains(&f), "{f:?}");
        }
        assert_ne!(a.selected, b.selected);
        let m = variable_density_mask(32, 32, 184, 9).unwrap();
        m.validate().unwrap();
        assert_eq!(m.selected.len(), 184);
        let back = SamplingMask::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().starts_with("{\"grid\":[32,32],\"selected\":[[0,0]"));
    }

    #[test]
    fn mask_prefers_low_frequencies() {
        let (h, w) = (32, 32);
        let uniform: f64 = (0..h)
            .flat_map(|u| (0..w).map(move |v| radial_frequency(u, v, h, w)))
            .sum::<f64>()
            / (h * w) as f64;
        let mut total = 0.0;
        for seed in 0..100 {
            let m = variable_density_mask(h, w, 184, seed).unwrap();
            total += m.selected.iter().map(|&(u, v)| radial_frequency(u, v, h, w)).sum::<f64>() / 184.0;
        }
        assert!(total / 100.0 < uniform);
    }

    #[test]
    fn mri_dc_only_constant_image() {
        let (h, w) = (8, 8);
        let mask = SamplingMask { grid: (h, w), selected: vec![(0, 0)], seed: 0 };
        let op = mri_operator(&mask).unwrap();
        let coeffs = dwt2_daub4(&vec![2.5; h * w], h, w).unwrap();
        let y = op.apply(&coeffs);
        assert_eq!(y.len(), 2);
        assert!((y[0] - 2.5 * 64.0).abs() < 1e-10);
        assert!(y[1].abs() < 1e-10);
    }
}
