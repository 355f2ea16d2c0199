//! Low-disruption adaptation coordinates for a base/post layer pair:
//! layer-scale ratio disruption and SVD-frame rotation costs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::matrix::{gauged_svd_default, GaugedSvd, LayerMatrix};

const FRAME_ORTHO_TOL: f64 = 1e-10;
const FRAME_RECOVERY_TOL: f64 = 1e-6;

/// Complete-graph log-ratio disruption of a post/base scale vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDisruption {
    /// `sum_{i<j} (log s_i - log s_j)^2`.
    pub d_log: f64,
    /// `sum_{i<j} (s_i/s_j - 1)^2 (C_i/C_j)^2`.
    pub d_ratio: f64,
    /// `N * sum_i (log s_i - mean)^2`; equals `d_log` exactly.
    pub n_times_variance: f64,
    pub max_log_ratio: f64,
    /// `sqrt(2 d_log / N)`, the pairwise log-ratio envelope.
    pub envelope: f64,
}

pub fn scale_disruption(scales: &[f64], base_scales: &[f64]) -> Result<ScaleDisruption> {
    let n = scales.len();
    if n < 2 || base_scales.len() != n {
        return Err(GsaError::DimensionMismatch {
            context: format!("{} scales with {} base scales", n, base_scales.len()),
        });
    }
    for (i, &s) in scales.iter().chain(base_scales.iter()).enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(GsaError::NonPositiveScale { index: i, value: s });
        }
    }
    let logs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let mut d_log = 0.0;
    let mut d_ratio = 0.0;
    let mut max_log_ratio = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dl = logs[i] - logs[j];
            d_log += dl * dl;
            max_log_ratio = max_log_ratio.max(dl.abs());
            let rel = scales[i] / scales[j] - 1.0;
            let base = base_scales[i] / base_scales[j];
            d_ratio += rel * rel * base * base;
        }
    }
    let n_times_variance =
        n as f64 * logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>();
    Ok(ScaleDisruption {
        d_log,
        d_ratio,
        n_times_variance,
        max_log_ratio,
        envelope: (2.0 * d_log / n as f64).sqrt(),
    })
}

/// Frobenius cost of a frame-rotation representation of a post layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRotationCost {
    /// `||Q_U S_post Q_V^T - S||_F`, the frame-reduced displacement.
    pub delta_w: f64,
    /// Common-rotation double sum `sum q_ab^2 (s sigma_b - sigma_a)^2`,
    /// available when `Q_U = Q_V` and `S_post = s S`.
    pub coherent_cost: Option<f64>,
    /// `||Q_U^T Q_V - I||_F`.
    pub relative_rotation_norm: f64,
    /// `(delta_w + ||Q_U (s S) Q_U^T - S||_F) / (s sigma_min)` when the
    /// post spectrum is a uniform scaling and `sigma_min > 0`.
    pub relative_rotation_bound: Option<f64>,
    /// Detected uniform scale factor, if `S_post = s S`.
    pub uniform_scale: Option<f64>,
}

fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - want).abs());
        }
    }
    worst
}

/// Evaluate the rotation-cost identities for an explicit frame pair.
///
/// `base` supplies the reference spectrum; `sigma_post` is the nonnegative
/// post-adaptation spectrum in the same order.
pub fn frame_rotation_cost(
    base: &GaugedSvd,
    q_u: &DMatrix<f64>,
    q_v: &DMatrix<f64>,
    sigma_post: &[f64],
) -> Result<FrameRotationCost> {
    let d = base.singular_values().len();
    if q_u.nrows() != d || q_u.ncols() != d || q_v.nrows() != d || q_v.ncols() != d {
        return Err(GsaError::DimensionMismatch {
            context: format!("frames must be {d}x{d}"),
        });
    }
    if sigma_post.len() != d {
        return Err(GsaError::DimensionMismatch {
            context: format!("{} post singular values for dimension {d}", sigma_post.len()),
        });
    }
    if sigma_post.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
        return Err(GsaError::ParamOutOfRange {
            name: "sigma_post",
            value: f64::NAN,
            range: "nonnegative finite",
        });
    }
    for q in [q_u, q_v] {
        let defect = orthogonality_defect(q);
        if defect > FRAME_ORTHO_TOL {
            return Err(GsaError::NonOrthogonalFrame {
                defect,
                tol: FRAME_ORTHO_TOL,
            });
        }
    }

    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
        base.singular_values(),
    ));
    let sigma_p = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(sigma_post));
    let delta_w = (q_u * &sigma_p * q_v.transpose() - &sigma).norm();

    let rel = q_u.transpose() * q_v;
    let relative_rotation_norm = (&rel - DMatrix::<f64>::identity(d, d)).norm();

    // Detect a uniform post spectrum S_post = s S.
    let base_max = base.operator_norm();
    let uniform_scale = if base_max > 0.0 {
        let lead = base
            .singular_values()
            .iter()
            .position(|&s| s == base_max)
            .unwrap();
        let s = sigma_post[lead] / base_max;
        let uniform = base
            .singular_values()
            .iter()
            .zip(sigma_post.iter())
            .all(|(&b, &p)| (p - s * b).abs() <= 1e-10 * base_max.max(1.0));
        if uniform {
            Some(s)
        } else {
            None
        }
    } else {
        None
    };

    let coherent = uniform_scale.filter(|_| (q_u - q_v).norm() <= 1e-12);
    let coherent_cost = coherent.map(|s| {
        let mut total = 0.0;
        for a in 0..d {
            for b in 0..d {
                let q = q_u[(a, b)];
                let diff = s * base.singular_values()[b] - base.singular_values()[a];
                total += q * q * diff * diff;
            }
        }
        total.sqrt()
    });

    let sigma_min = base
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let relative_rotation_bound = uniform_scale.and_then(|s| {
        if sigma_min > 0.0 && s > 0.0 {
            let coherent_term = (q_u * (s * &sigma) * q_u.transpose() - &sigma).norm();
            Some((delta_w + coherent_term) / (s * sigma_min))
        } else {
            None
        }
    });

    Ok(FrameRotationCost {
        delta_w,
        coherent_cost,
        relative_rotation_norm,
        relative_rotation_bound,
        uniform_scale,
    })
}

/// Recover post-adaptation frames relative to the base gauge by projecting
/// the post layer's gauge-fixed frames onto the base frames and polar-
/// projecting the result back to the orthogonal group. Errors when the
/// projection is further than 1e-6 from orthogonal.
pub fn project_post_frames(
    base: &GaugedSvd,
    w_post: &LayerMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    let post = gauged_svd_default(w_post)?;
    let d = base.singular_values().len();
    if post.singular_values().len() != d {
        return Err(GsaError::DimensionMismatch {
            context: format!(
                "post layer has {} singular values, base has {d}",
                post.singular_values().len()
            ),
        });
    }
    let q_u_raw = base.left().transpose() * post.left();
    let q_v_raw = base.right().transpose() * post.right();
    let q_u = polar_orthogonal(&q_u_raw)?;
    let q_v = polar_orthogonal(&q_v_raw)?;
    Ok((q_u, q_v, post.singular_values().to_vec()))
}

fn polar_orthogonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let defect = orthogonality_defect(m);
    if defect > FRAME_RECOVERY_TOL {
        return Err(GsaError::NonOrthogonalFrame {
            defect,
            tol: FRAME_RECOVERY_TOL,
        });
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("U requested");
    let vt = svd.v_t.expect("V^T requested");
    Ok(u * vt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svd_of(entries: &[f64], n: usize) -> GaugedSvd {
        let w = LayerMatrix::from_rows(n, n, entries, "base").unwrap();
        gauged_svd_default(&w).unwrap()
    }

    fn seeded_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.max(1);
        let g = DMatrix::from_fn(n, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64) * 2.0 - 1.0
        });
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        q
    }

    #[test]
    fn uniform_scales_have_zero_disruption() {
        let d = scale_disruption(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.d_log, 0.0);
        assert_eq!(d.d_ratio, 0.0);
        assert_eq!(d.max_log_ratio, 0.0);
    }

    #[test]
    fn variance_identity_example() {
        // s = (1, e): D_log = 1 and N * variance = 2 * 0.5 = 1.
        let d = scale_disruption(&[1.0, std::f64::consts::E], &[1.0, 1.0]).unwrap();
        assert!((d.d_log - 1.0).abs() < 1e-12);
        assert!((d.n_times_variance - 1.0).abs() < 1e-12);
        assert!((d.max_log_ratio - 1.0).abs() < 1e-12);
        assert!((d.envelope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_identity_and_envelope_fuzz() {
        let mut state = 8u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            0.2 + ((state >> 33) as f64) / (u32::MAX as f64) * 3.0
        };
        for _ in 0..100 {
            let n = 2 + (next() * 3.0) as usize;
            let s: Vec<f64> = (0..n).map(|_| next()).collect();
            let c: Vec<f64> = (0..n).map(|_| next()).collect();
            let d = scale_disruption(&s, &c).unwrap();
            assert!(
                (d.d_log - d.n_times_variance).abs() <= 1e-10 * d.d_log.max(1.0),
                "identity broke: {} vs {}",
                d.d_log,
                d.n_times_variance
            );
            assert!(d.max_log_ratio <= d.envelope + 1e-12);
            // D_ratio vanishes exactly when the scales are uniform.
            let uniform = s.iter().all(|&x| (x - s[0]).abs() < 1e-15);
            assert_eq!(d.d_ratio == 0.0, uniform);
        }
    }

    #[test]
    fn rejects_nonpositive_scales() {
        assert!(scale_disruption(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(scale_disruption(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn swap_frame_cost_is_sqrt_two() {
        let base = svd_of(&[2.0, 0.0, 0.0, 1.0], 2);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let cost =
            frame_rotation_cost(&base, &swap, &swap, base.singular_values()).unwrap();
        assert!((cost.delta_w - 2.0f64.sqrt()).abs() < 1e-12);
        let ds = cost.coherent_cost.unwrap();
        assert!((ds - cost.delta_w).abs() < 1e-12);
        assert_eq!(cost.relative_rotation_norm, 0.0);
        assert_eq!(cost.uniform_scale, Some(1.0));
    }

    #[test]
    fn equal_singular_values_make_common_rotations_free() {
        let base = svd_of(&[1.5, 0.0, 0.0, 1.5], 2);
        let q = seeded_orthogonal(2, 7);
        let cost = frame_rotation_cost(&base, &q, &q, base.singular_values()).unwrap();
        assert!(cost.delta_w < 1e-12, "cost = {}", cost.delta_w);
    }

    #[test]
    fn coherent_frames_have_zero_relative_rotation() {
        let base = svd_of(&[3.0, 0.0, 0.0, 1.0], 2);
        let q = seeded_orthogonal(2, 3);
        let cost = frame_rotation_cost(&base, &q, &q, base.singular_values()).unwrap();
        assert!(cost.relative_rotation_norm < 1e-12);
    }

    #[test]
    fn double_sum_matches_direct_norm_fuzz() {
        for seed in 1..30u64 {
            let n = 2 + (seed % 3) as usize;
            let entries: Vec<f64> = (0..n * n)
                .map(|i| ((i as u64 * seed * 2654435761 % 1000) as f64) / 250.0 - 2.0)
                .collect();
            let base = svd_of(&entries, n);
            if base.operator_norm() == 0.0 {
                continue;
            }
            let q = seeded_orthogonal(n, seed);
            let s = 0.5 + (seed as f64) / 20.0;
            let sigma_post: Vec<f64> =
                base.singular_values().iter().map(|&v| s * v).collect();
            let cost = frame_rotation_cost(&base, &q, &q, &sigma_post).unwrap();
            let ds = cost.coherent_cost.expect("coherent case");
            assert!(
                (ds * ds - cost.delta_w * cost.delta_w).abs()
                    <= 1e-9 * (ds * ds).max(1e-12),
                "double sum {} vs direct {}",
                ds * ds,
                cost.delta_w * cost.delta_w
            );
        }
    }

    #[test]
    fn relative_rotation_bound_never_violated() {
        for seed in 1..40u64 {
            let n = 3;
            let entries = [2.0, 0.1, 0.0, 0.0, 1.0, 0.2, 0.1, 0.0, 0.7];
            let base = svd_of(&entries, n);
            let q_u = seeded_orthogonal(n, seed);
            let q_v = seeded_orthogonal(n, seed + 1000);
            let s = 0.8 + (seed as f64) / 40.0;
            let sigma_post: Vec<f64> =
                base.singular_values().iter().map(|&v| s * v).collect();
            let cost = frame_rotation_cost(&base, &q_u, &q_v, &sigma_post).unwrap();
            let bound = cost.relative_rotation_bound.expect("sigma_min > 0");
            assert!(
                cost.relative_rotation_norm <= bound + 1e-9,
                "norm {} > bound {}",
                cost.relative_rotation_norm,
                bound
            );
        }
    }

    #[test]
    fn rejects_non_orthogonal_frames() {
        let base = svd_of(&[1.0, 0.0, 0.0, 1.0], 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            frame_rotation_cost(&base, &bad, &bad, base.singular_values()),
            Err(GsaError::NonOrthogonalFrame { .. })
        ));
    }

    #[test]
    fn frame_recovery_roundtrip() {
        // Build a post layer with known rotations and recover them.
        let entries = [2.0, 0.0, 0.0, 0.0, 1.3, 0.0, 0.0, 0.0, 0.6];
        let base = svd_of(&entries, 3);
        let q = seeded_orthogonal(3, 21);
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            base.singular_values(),
        ));
        // W_post = U (Q 1.1 S Q^T) V^T realized directly.
        let w_post_data =
            base.left() * &q * (1.1 * &sigma) * q.transpose() * base.right().transpose();
        let w_post = LayerMatrix::from_matrix(w_post_data, "post").unwrap();
        let (q_u, q_v, sigma_post) = project_post_frames(&base, &w_post).unwrap();
        // Recovered frames are orthogonal and reproduce the displacement.
        assert!(orthogonality_defect(&q_u) < 1e-10);
        assert!(orthogonality_defect(&q_v) < 1e-10);
        let cost = frame_rotation_cost(&base, &q_u, &q_v, &sigma_post).unwrap();
        let direct = (w_post.data()
            - base.left()
                * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
                    base.singular_values(),
                ))
                * base.right().transpose())
        .norm();
        assert!(
            (cost.delta_w - direct).abs() < 1e-8 * direct.max(1.0),
            "frame-reduced {} vs direct {}",
            cost.delta_w,
            direct
        );
    }
}
