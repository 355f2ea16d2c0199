//! Brute-force reference implementations, independent of the main paths
//! they check: exhaustive subset search for active columns, a fresh-sum
//! effective-rank scan, closed-form 2x2 singular values, and direct
//! recomputation of coarse block energies.

use nalgebra::DMatrix;

use crate::block_energy::{block_energy, BlockEnergyMatrix};
use crate::error::{GsaError, Result};

/// Hard cap for subset enumeration.
pub const ENUMERATION_LIMIT: usize = 12;

/// Best size-`s` column subset by total segment energy, found by full
/// enumeration with smallest-subset tie-breaking. Only for `n <= 12`.
pub fn exhaustive_active_columns(
    m: &DMatrix<f64>,
    rows: &[usize],
    s: usize,
) -> Result<Vec<usize>> {
    let n = m.ncols();
    if n > ENUMERATION_LIMIT {
        return Err(GsaError::EnumerationTooLarge {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    if s > n {
        return Err(GsaError::SupportTooLarge { s, n });
    }
    let scores: Vec<f64> = (0..n)
        .map(|c| rows.iter().map(|&r| m[(r, c)] * m[(r, c)]).sum())
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != s {
            continue;
        }
        let subset: Vec<usize> = (0..n).filter(|&c| mask >> c & 1 == 1).collect();
        let total: f64 = subset.iter().map(|&c| scores[c]).sum();
        match &best {
            None => best = Some((total, subset)),
            Some((bt, bs)) => {
                if total > *bt || (total == *bt && subset < *bs) {
                    best = Some((total, subset));
                }
            }
        }
    }
    Ok(best.expect("nonempty enumeration").1)
}

/// Effective rank by a fresh cumulative sum at every candidate rank.
pub fn exhaustive_effective_rank(sigma: &[f64], eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(GsaError::ParamOutOfRange {
            name: "epsilon",
            value: eps,
            range: "(0, 1)",
        });
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    for r in 1..=sigma.len() {
        let head: f64 = sigma[..r].iter().map(|s| s * s).sum();
        if head >= (1.0 - eps) * total {
            return Ok(r);
        }
    }
    Ok(sigma.len())
}

/// Closed-form singular values of a 2x2 matrix, descending.
pub fn singular_values_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let t = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((t + disc) / 2.0).max(0.0).sqrt();
    let s2 = ((t - disc) / 2.0).max(0.0).sqrt();
    (s1, s2)
}

/// Smallest positive singular value of a 2x2 block by the quadratic
/// formula, with the same relative positivity cutoff as the main path.
pub fn sigma_min_pos_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let (s1, s2) = singular_values_2x2(a, b, c, d);
    if s1 == 0.0 {
        return 0.0;
    }
    if s2 > 1e-12 * s1 {
        s2
    } else {
        s1
    }
}

/// Coarse block energies recomputed directly from the matrix with merged
/// groups and bins (no aggregation formula involved).
pub fn direct_coarse_block_energy(
    a: &DMatrix<f64>,
    fine_groups: &[Vec<usize>],
    fine_bins: &[Vec<usize>],
    pi_r: &[usize],
    pi_c: &[usize],
    k_bar: usize,
) -> BlockEnergyMatrix {
    let mut coarse_groups = vec![Vec::new(); k_bar];
    let mut coarse_bins = vec![Vec::new(); k_bar];
    for (i, g) in fine_groups.iter().enumerate() {
        coarse_groups[pi_r[i]].extend(g.iter().copied());
    }
    for (j, b) in fine_bins.iter().enumerate() {
        coarse_bins[pi_c[j]].extend(b.iter().copied());
    }
    for g in &mut coarse_groups {
        g.sort_unstable();
    }
    for b in &mut coarse_bins {
        b.sort_unstable();
    }
    block_energy(a, &coarse_groups, &coarse_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{active_columns, SupportSpec};
    use crate::block_energy::coarsen;
    use crate::block_energy::AcceptedOverlap;
    use crate::orbit::effective_rank_empirical;

    fn dm(rows: usize, cols: usize, entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, entries)
    }

    #[test]
    fn enumeration_agrees_with_top_s_rule() {
        let mut state = 31u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64) * 2.0 - 1.0
        };
        for _ in 0..50 {
            let m = DMatrix::from_fn(3, 6, |_, _| next());
            let rows = vec![0, 1, 2];
            for s in 1..=4usize {
                let oracle = exhaustive_active_columns(&m, &rows, s).unwrap();
                let (sets, _, _) =
                    active_columns(&m, std::slice::from_ref(&rows), &SupportSpec::Sizes(vec![s]))
                        .unwrap();
                assert_eq!(oracle, sets[0]);
            }
        }
    }

    #[test]
    fn enumeration_tie_break_matches() {
        let m = dm(1, 3, &[1.0, 1.0, 1.0]);
        let oracle = exhaustive_active_columns(&m, &[0], 2).unwrap();
        assert_eq!(oracle, vec![0, 1]);
    }

    #[test]
    fn enumeration_size_limit() {
        let m = DMatrix::<f64>::zeros(1, 13);
        assert!(matches!(
            exhaustive_active_columns(&m, &[0], 2),
            Err(GsaError::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn rank_scan_agrees_with_main_path() {
        let mut state = 15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for _ in 0..50 {
            let d = 2 + (next() * 30.0) as usize;
            let mut sigma: Vec<f64> = (0..d).map(|_| next() + 1e-3).collect();
            sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for &eps in &[0.5, 0.25, 0.1] {
                assert_eq!(
                    exhaustive_effective_rank(&sigma, eps).unwrap(),
                    effective_rank_empirical(&sigma, eps).unwrap()
                );
            }
        }
    }

    #[test]
    fn closed_form_2x2_matches_svd() {
        let mut state = 63u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64) * 4.0 - 2.0
        };
        for _ in 0..200 {
            let (a, b, c, d) = (next(), next(), next(), next());
            let (s1, s2) = singular_values_2x2(a, b, c, d);
            let m = dm(2, 2, &[a, b, c, d]);
            let sv = m.singular_values();
            let (t1, t2) = (sv[0].max(sv[1]), sv[0].min(sv[1]));
            assert!((s1 - t1).abs() < 1e-9 * t1.max(1.0));
            assert!((s2 - t2).abs() < 1e-9 * t1.max(1.0));
        }
    }

    #[test]
    fn coarse_recomputation_matches_formula() {
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64) * 2.0 - 1.0
        };
        for _ in 0..50 {
            let a = DMatrix::from_fn(6, 6, |_, _| next() + 0.1);
            let groups = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
            let bins = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
            let e = block_energy(&a, &groups, &bins);
            let pi_r = [0usize, 0, 1];
            let pi_c = [0usize, 1, 1];
            let res = coarsen(&e, &pi_r, &pi_c, 2, &bins, &AcceptedOverlap::diagonal_only(3))
                .unwrap();
            let direct = direct_coarse_block_energy(&a, &groups, &bins, &pi_r, &pi_c, 2);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (res.coarse_entries[i][j] - direct.entries[i][j]).abs() < 1e-12,
                        "({i},{j}): {} vs {}",
                        res.coarse_entries[i][j],
                        direct.entries[i][j]
                    );
                }
            }
        }
    }
}
