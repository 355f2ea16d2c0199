//! Deterministic SVD gauge, square spectral embedding, tail energies, and
//! rank truncation. Everything downstream consumes these objects.

use nalgebra::DMatrix;

use crate::error::{GsaError, Result};

/// Default relative cutoff defining the spectral length `d_sp`.
pub const DEFAULT_RANK_CUTOFF: f64 = 1e-12;

/// Relative gap below which singular values are treated as one cluster for
/// the in-cluster ordering rule.
const CLUSTER_GAP_REL: f64 = 1e-12;

/// Rounding quantum for the lexicographic in-cluster column ordering.
const LEX_ROUND: f64 = 1e-9;

/// A real layer matrix with a text label. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrix {
    label: String,
    data: DMatrix<f64>,
}

impl LayerMatrix {
    /// Build from row-major entries.
    pub fn from_rows(
        rows: usize,
        cols: usize,
        entries: &[f64],
        label: impl Into<String>,
    ) -> Result<Self> {
        let label = label.into();
        if rows == 0 || cols == 0 {
            return Err(GsaError::EmptyMatrix { label });
        }
        if entries.len() != rows * cols {
            return Err(GsaError::ShapeMismatch {
                label,
                rows,
                cols,
                len: entries.len(),
            });
        }
        let data = DMatrix::from_row_slice(rows, cols, entries);
        Self::from_matrix(data, label)
    }

    pub fn from_matrix(data: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(GsaError::EmptyMatrix { label });
        }
        for col in 0..data.ncols() {
            for row in 0..data.nrows() {
                if !data[(row, col)].is_finite() {
                    return Err(GsaError::NonFiniteEntry { label, row, col });
                }
            }
        }
        Ok(Self { label, data })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Row-major copy of the entries, the container wire order.
    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.data[(r, c)]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        top_singular_value(&self.data)
    }

    /// Min(rows, cols): the spectral fitting length before any numerical
    /// cutoff is applied.
    pub fn min_dim(&self) -> usize {
        self.rows().min(self.cols())
    }

    /// Rescale so that `||W||_F^2` equals `target`, returning the factor used.
    /// A zero matrix is returned unchanged with factor 1.
    pub fn normalized_to_energy(&self, target: f64) -> (Self, f64) {
        let f2 = self.data.norm_squared();
        if f2 == 0.0 {
            return (self.clone(), 1.0);
        }
        let t = (target / f2).sqrt();
        (
            Self {
                label: self.label.clone(),
                data: &self.data * t,
            },
            t,
        )
    }
}

/// Zero-pad `W` to a square max(m,n) x max(m,n) matrix. Preserves the
/// original block, the singular values (plus `|m-n|` zeros), and both the
/// operator and Frobenius norms.
pub fn square_embed(w: &LayerMatrix) -> LayerMatrix {
    let d = w.rows().max(w.cols());
    embed_to(w, d)
}

/// Zero-pad `W` into the top-left of a `d x d` matrix, `d >= max(m,n)`.
pub fn embed_to(w: &LayerMatrix, d: usize) -> LayerMatrix {
    assert!(d >= w.rows().max(w.cols()));
    if w.rows() == d && w.cols() == d {
        return w.clone();
    }
    let mut out = DMatrix::zeros(d, d);
    out.view_mut((0, 0), (w.rows(), w.cols())).copy_from(w.data());
    LayerMatrix {
        label: w.label().to_string(),
        data: out,
    }
}

/// Gauge-fixed thin SVD of one layer.
///
/// Singular values are nonincreasing; within clusters of equal values
/// (relative gap below 1e-12) columns are ordered descending-lexicographically
/// by their entries rounded to 1e-9, and each left singular vector has its
/// largest-magnitude entry positive (first maximal index on ties) with the
/// right vector's sign slaved so that `U S V^T` reconstructs the input.
/// Two calls on bit-identical input produce bit-identical factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugedSvd {
    left: DMatrix<f64>,
    singular_values: Vec<f64>,
    right: DMatrix<f64>,
    spectral_len: usize,
    rank_cutoff: f64,
}

impl GaugedSvd {
    /// Left frame `U` (m x r, orthonormal columns).
    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// Right frame `V` (n x r, orthonormal columns).
    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Spectral length `d_sp`: values below `rank_cutoff * sigma_1` are
    /// excluded from the declared spectrum but retained in the factorization.
    pub fn spectral_len(&self) -> usize {
        self.spectral_len
    }

    pub fn rank_cutoff(&self) -> f64 {
        self.rank_cutoff
    }

    /// Declared spectral fitting list: the first `d_sp` singular values.
    pub fn spectral_values(&self) -> &[f64] {
        &self.singular_values[..self.spectral_len]
    }

    pub fn operator_norm(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.singular_values
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }

    /// Top-`r` truncated left frame.
    pub fn left_trunc(&self, r: usize) -> DMatrix<f64> {
        self.left.columns(0, r).into_owned()
    }

    pub fn right_trunc(&self, r: usize) -> DMatrix<f64> {
        self.right.columns(0, r).into_owned()
    }

    pub fn sigma_trunc(&self, r: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            &self.singular_values[..r],
        ))
    }

    /// `max_{ij} |U^T U - I|` and the same for `V`, for orthogonality checks.
    pub fn orthogonality_defect(&self) -> f64 {
        let du = gram_defect(&self.left);
        let dv = gram_defect(&self.right);
        du.max(dv)
    }

    /// `||U S V^T - W||_F` against a reference matrix.
    pub fn reconstruction_error(&self, w: &LayerMatrix) -> f64 {
        (self.reconstruct() - w.data()).norm()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let r = self.singular_values.len();
        let mut scaled = self.left.clone();
        for j in 0..r {
            scaled.column_mut(j).scale_mut(self.singular_values[j]);
        }
        scaled * self.right.transpose()
    }
}

fn gram_defect(frame: &DMatrix<f64>) -> f64 {
    let g = frame.transpose() * frame;
    let r = g.nrows();
    let mut worst = 0.0_f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

fn top_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
}

/// Gauge-fixed SVD with the default relative rank cutoff.
pub fn gauged_svd_default(w: &LayerMatrix) -> Result<GaugedSvd> {
    gauged_svd(w, DEFAULT_RANK_CUTOFF)
}

/// Gauge-fixed SVD of `W` with relative numerical-rank cutoff `tau_rank`.
pub fn gauged_svd(w: &LayerMatrix, tau_rank: f64) -> Result<GaugedSvd> {
    if !(0.0..1.0).contains(&tau_rank) {
        return Err(GsaError::ParamOutOfRange {
            name: "tau_rank",
            value: tau_rank,
            range: "[0, 1)",
        });
    }
    let svd = w
        .data()
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| GsaError::DimensionMismatch {
            context: format!("SVD of `{}` did not converge", w.label()),
        })?;
    let u = svd.u.expect("U requested");
    let vt = svd.v_t.expect("V^T requested");
    let sig: Vec<f64> = svd.singular_values.iter().copied().collect();
    let r = sig.len();

    // Sort triples by sigma descending (stable on the solver's order).
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap());

    let mut left = DMatrix::zeros(u.nrows(), r);
    let mut right = DMatrix::zeros(vt.ncols(), r);
    let mut values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        left.column_mut(dst).copy_from(&u.column(src));
        right.column_mut(dst).copy_from(&vt.row(src).transpose());
        values.push(sig[src]);
    }

    // Sign fix: largest-|entry| of each left column positive, V slaved.
    for j in 0..r {
        let col = left.column(j);
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }

    // In-cluster lexicographic ordering on rounded entries.
    let sigma1 = values.first().copied().unwrap_or(0.0);
    let gap = CLUSTER_GAP_REL * sigma1;
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && values[end - 1] - values[end] <= gap {
            end += 1;
        }
        if end - start > 1 {
            let mut idx: Vec<usize> = (start..end).collect();
            idx.sort_by(|&a, &b| lex_cmp(&left, &right, b, a)); // descending
            apply_column_order(&mut left, &mut right, &mut values, start, &idx);
        }
        start = end;
    }

    let spectral_len = if sigma1 == 0.0 {
        0
    } else {
        values.iter().filter(|&&s| s >= tau_rank * sigma1).count()
    };

    Ok(GaugedSvd {
        left,
        singular_values: values,
        right,
        spectral_len,
        rank_cutoff: tau_rank,
    })
}

fn round_key(x: f64) -> i64 {
    (x / LEX_ROUND).round() as i64
}

fn lex_cmp(
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
    a: usize,
    b: usize,
) -> std::cmp::Ordering {
    for i in 0..left.nrows() {
        let ka = round_key(left[(i, a)]);
        let kb = round_key(left[(i, b)]);
        if ka != kb {
            return ka.cmp(&kb);
        }
    }
    for i in 0..right.nrows() {
        let ka = round_key(right[(i, a)]);
        let kb = round_key(right[(i, b)]);
        if ka != kb {
            return ka.cmp(&kb);
        }
    }
    std::cmp::Ordering::Equal
}

fn apply_column_order(
    left: &mut DMatrix<f64>,
    right: &mut DMatrix<f64>,
    values: &mut [f64],
    start: usize,
    order: &[usize],
) {
    let l_old = left.clone();
    let r_old = right.clone();
    let v_old = values.to_vec();
    for (off, &src) in order.iter().enumerate() {
        let dst = start + off;
        left.column_mut(dst).copy_from(&l_old.column(src));
        right.column_mut(dst).copy_from(&r_old.column(src));
        values[dst] = v_old[src];
    }
}

/// An effective-rank window on one side of an interface.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankWindow {
    pub rank: usize,
    pub energy_threshold: f64,
    pub side: WindowSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSide {
    Source,
    Target,
}

/// Discarded spectral energy `E_{>R}(W) = sum_{i>R} sigma_i^2`.
pub fn tail_energy(svd: &GaugedSvd, r: usize) -> Result<f64> {
    if r > svd.spectral_len() {
        return Err(GsaError::RankOutOfRange {
            r,
            d: svd.spectral_len(),
        });
    }
    Ok(svd.singular_values[r..].iter().map(|s| s * s).sum())
}

/// Best rank-`R` approximant `W^[R] = U^(R) S^(R) (V^(R))^T`.
pub fn truncate(svd: &GaugedSvd, r: usize, label: impl Into<String>) -> Result<LayerMatrix> {
    if r > svd.spectral_len() {
        return Err(GsaError::RankOutOfRange {
            r,
            d: svd.spectral_len(),
        });
    }
    let m = svd.left.nrows();
    let n = svd.right.nrows();
    let mut scaled = svd.left.columns(0, r).into_owned();
    for j in 0..r {
        scaled.column_mut(j).scale_mut(svd.singular_values[j]);
    }
    let data = if r == 0 {
        DMatrix::zeros(m, n)
    } else {
        scaled * svd.right.columns(0, r).transpose()
    };
    LayerMatrix::from_matrix(data, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn lm(rows: usize, cols: usize, entries: &[f64]) -> LayerMatrix {
        LayerMatrix::from_rows(rows, cols, entries, "t").unwrap()
    }

    #[test]
    fn square_embed_pads_with_zeros() {
        let w = lm(1, 2, &[3.0, 0.0]);
        let e = square_embed(&w);
        assert_eq!((e.rows(), e.cols()), (2, 2));
        assert_eq!(e.data()[(0, 0)], 3.0);
        assert_eq!(e.data()[(1, 0)], 0.0);
        assert_eq!(e.data()[(1, 1)], 0.0);
        assert_eq!(e.frobenius_norm(), 3.0);
        let svd = gauged_svd_default(&e).unwrap();
        assert!((svd.singular_values()[0] - 3.0).abs() < 1e-12);
        assert!(svd.singular_values()[1].abs() < 1e-12);
    }

    #[test]
    fn square_embed_identity_on_square_input() {
        let w = lm(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let e = square_embed(&w);
        assert_eq!(e.data(), w.data());
    }

    #[test]
    fn square_embed_singular_values_match_eigen_oracle() {
        // 3x5 fixed entries; oracle = eigenvalues of W^T W.
        let mut entries = Vec::new();
        let mut state = 1u64;
        for _ in 0..15 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            entries.push(((state >> 33) as f64) / (u32::MAX as f64) - 0.5);
        }
        let w = lm(3, 5, &entries);
        let e = square_embed(&w);
        assert_eq!((e.rows(), e.cols()), (5, 5));

        let gram = w.data().transpose() * w.data();
        let mut eig: Vec<f64> = gram
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());

        let mut got: Vec<f64> = gauged_svd_default(&e)
            .unwrap()
            .singular_values()
            .to_vec();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(got.len(), 5);
        // sqrt() of eigen noise ~1e-17 lands near 1e-8; compare accordingly.
        for (g, o) in got.iter().zip(eig.iter()) {
            assert!((g - o).abs() < 1e-7, "{g} vs {o}");
        }
        // Padded zeros: last two vanish.
        assert!(got[3].abs() < 1e-7 && got[4].abs() < 1e-7);
    }

    #[test]
    fn gauged_svd_identity_is_identity() {
        let w = lm(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let svd = gauged_svd_default(&w).unwrap();
        assert_eq!(svd.singular_values(), &[1.0, 1.0, 1.0]);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((svd.left() - &id).norm() < 1e-12, "U = {}", svd.left());
        assert!((svd.right() - &id).norm() < 1e-12);
    }

    #[test]
    fn gauged_svd_orders_and_reconstructs() {
        let w = lm(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let svd = gauged_svd_default(&w).unwrap();
        assert_eq!(svd.singular_values(), &[2.0, 1.0]);
        assert!(svd.reconstruction_error(&w) < 1e-12);
        assert!(svd.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn gauged_svd_is_deterministic() {
        let entries: Vec<f64> = (0..36).map(|i| ((i * 7919 % 97) as f64) / 9.7 - 5.0).collect();
        let w = lm(6, 6, &entries);
        let a = gauged_svd_default(&w).unwrap();
        let b = gauged_svd_default(&w).unwrap();
        assert_eq!(a.left(), b.left());
        assert_eq!(a.right(), b.right());
        assert_eq!(a.singular_values(), b.singular_values());
    }

    #[test]
    fn gauged_svd_rejects_non_finite() {
        let err = LayerMatrix::from_rows(1, 2, &[1.0, f64::NAN], "bad");
        assert!(err.is_err());
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let w = lm(2, 2, &[-3.0, 0.0, 0.0, -1.0]);
        let svd = gauged_svd_default(&w).unwrap();
        for j in 0..2 {
            let col = svd.left().column(j);
            let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(m > 0.0);
        }
        assert!(svd.reconstruction_error(&w) < 1e-12);
    }

    #[test]
    fn tail_energy_examples() {
        let w = lm(2, 2, &[1.0, 0.0, 0.0, 0.1]);
        let svd = gauged_svd_default(&w).unwrap();
        assert!((tail_energy(&svd, 1).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(tail_energy(&svd, 2).unwrap(), 0.0);
        assert!(tail_energy(&svd, 3).is_err());
    }

    #[test]
    fn tail_energy_matches_residual_frobenius() {
        let entries: Vec<f64> = (0..36)
            .map(|i| (((i * 2654435761u64 as usize) % 1000) as f64) / 500.0 - 1.0)
            .collect();
        let w = lm(6, 6, &entries);
        let svd = gauged_svd_default(&w).unwrap();
        let t3 = truncate(&svd, 3, "t3").unwrap();
        let resid = (w.data() - t3.data()).norm_squared();
        assert!((tail_energy(&svd, 3).unwrap() - resid).abs() < 1e-10);
    }

    #[test]
    fn truncate_examples() {
        let w = lm(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let svd = gauged_svd_default(&w).unwrap();
        let t1 = truncate(&svd, 1, "t").unwrap();
        assert!((t1.data()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(t1.data()[(1, 1)].abs() < 1e-12);
        let t2 = truncate(&svd, 2, "t").unwrap();
        assert!((t2.data() - w.data()).norm() < 1e-12);
    }

    #[test]
    fn truncate_is_best_rank_r_approximant() {
        let entries: Vec<f64> = (0..25)
            .map(|i| (((i * 48271) % 31) as f64) / 3.1 - 5.0)
            .collect();
        let w = lm(5, 5, &entries);
        let svd = gauged_svd_default(&w).unwrap();
        let t2 = truncate(&svd, 2, "t").unwrap();
        let err2 = (w.data() - t2.data()).norm_squared();
        assert!((err2 - tail_energy(&svd, 2).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn energy_partition_identity() {
        let entries: Vec<f64> = (0..20)
            .map(|i| ((i * 31 % 17) as f64) / 1.7 - 5.0)
            .collect();
        let w = lm(4, 5, &entries);
        let svd = gauged_svd_default(&w).unwrap();
        for r in 0..=svd.spectral_len() {
            let head: f64 = svd.singular_values()[..r].iter().map(|s| s * s).sum();
            let total = w.frobenius_norm().powi(2);
            let tail = tail_energy(&svd, r).unwrap();
            assert!((head + tail - total).abs() <= 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn zero_matrix_has_zero_spectral_len() {
        let w = lm(3, 3, &[0.0; 9]);
        let svd = gauged_svd_default(&w).unwrap();
        assert_eq!(svd.spectral_len(), 0);
    }
}
