//! Block-overlap energy matrices, bad-mass accounting, heatmap margin
//! screens, perturbation and rank-window robustness bounds, diagonal
//! scale transfer, row-leakage transfer, and compatible coarsening.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alignment::{submatrix, PairwiseMargins};
use crate::error::{GsaError, Result};
use crate::transport::{truncation_bound, Interface, TruncationMode};

/// Row-normalized block-overlap energies `E_ij = ||A[R_i, C_j]||_F^2 / e_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEnergyMatrix {
    /// K x K row-normalized energies, row-major.
    pub entries: Vec<Vec<f64>>,
    /// Row energies `e_i = ||A[R_i, :]||_F^2`.
    pub row_energies: Vec<f64>,
    /// Mean off-diagonal mass `(1/K) sum_{i != j} E_ij`.
    pub off_mass: f64,
    /// Mean diagonal mass `(1/K) sum_i E_ii`.
    pub diag_mass: f64,
    /// Groups whose whole row strip is zero; their rows are all-zero.
    pub zero_rows: Vec<usize>,
}

impl BlockEnergyMatrix {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }
}

/// Build the block-energy matrix of `a` for disjoint row groups and
/// (possibly overlapping) column sets.
pub fn block_energy(
    a: &DMatrix<f64>,
    row_groups: &[Vec<usize>],
    col_sets: &[Vec<usize>],
) -> BlockEnergyMatrix {
    let k = row_groups.len();
    debug_assert_eq!(col_sets.len(), k);
    let row_energies: Vec<f64> = row_groups
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|&r| (0..a.ncols()).map(|c| a[(r, c)] * a[(r, c)]).sum::<f64>())
                .sum()
        })
        .collect();
    let mut entries = vec![vec![0.0; k]; k];
    let mut zero_rows = Vec::new();
    for i in 0..k {
        if row_energies[i] == 0.0 {
            zero_rows.push(i);
            continue;
        }
        for j in 0..k {
            let block: f64 = row_groups[i]
                .iter()
                .map(|&r| {
                    col_sets[j]
                        .iter()
                        .map(|&c| a[(r, c)] * a[(r, c)])
                        .sum::<f64>()
                })
                .sum();
            entries[i][j] = block / row_energies[i];
        }
    }
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                diag += entries[i][j];
            } else {
                off += entries[i][j];
            }
        }
    }
    BlockEnergyMatrix {
        entries,
        row_energies,
        off_mass: off / k as f64,
        diag_mass: diag / k as f64,
        zero_rows,
    }
}

/// Declares which off-diagonal blocks count as structured overlap per group.
/// The default accepts none (diagonal-only acceptance).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedOverlap {
    pub neighbors: Vec<Vec<usize>>,
}

impl AcceptedOverlap {
    pub fn diagonal_only(k: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); k],
        }
    }

    pub fn is_bad(&self, i: usize, j: usize) -> bool {
        i != j && !self.neighbors[i].contains(&j)
    }
}

/// Bad-mass accounting in both normalized and Frobenius-energy forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadMassReport {
    /// `(1/K) sum over bad blocks of E_ij`.
    pub normalized: f64,
    /// `sum over bad blocks of ||A[R_i, C_j]||_F^2`.
    pub unnormalized: f64,
    /// Frobenius energy of the visible bad restriction of `A`.
    pub visible_bad_energy: f64,
    /// `K e_max * normalized`, the noise bound numerator.
    pub k_emax_bound: f64,
    /// `visible <= unnormalized <= K e_max normalized` verified.
    pub chain_holds: bool,
}

/// Measured bad block energy outside the accepted-overlap graph.
///
/// The visible bad matrix restricts `A` to the union of bad coordinate
/// blocks; because column sets may overlap, its energy can be strictly
/// smaller than the block-sum.
pub fn bad_mass(
    a: &DMatrix<f64>,
    e: &BlockEnergyMatrix,
    row_groups: &[Vec<usize>],
    col_sets: &[Vec<usize>],
    accepted: &AcceptedOverlap,
) -> BadMassReport {
    let k = row_groups.len();
    let mut normalized = 0.0;
    let mut unnormalized = 0.0;
    let mut visible_mask = vec![vec![false; a.ncols()]; a.nrows()];
    for i in 0..k {
        for j in 0..k {
            if !accepted.is_bad(i, j) {
                continue;
            }
            normalized += e.entries[i][j];
            let mut block = 0.0;
            for &r in &row_groups[i] {
                for &c in &col_sets[j] {
                    block += a[(r, c)] * a[(r, c)];
                    visible_mask[r][c] = true;
                }
            }
            unnormalized += block;
        }
    }
    normalized /= k as f64;
    let mut visible = 0.0;
    for (r, row) in visible_mask.iter().enumerate() {
        for (c, &on) in row.iter().enumerate() {
            if on {
                visible += a[(r, c)] * a[(r, c)];
            }
        }
    }
    let e_max = e.row_energies.iter().copied().fold(0.0f64, f64::max);
    let k_emax_bound = k as f64 * e_max * normalized;
    let tol = 1e-9 * (1.0 + unnormalized.abs());
    BadMassReport {
        normalized,
        unnormalized,
        visible_bad_energy: visible,
        k_emax_bound,
        chain_holds: visible <= unnormalized + tol && unnormalized <= k_emax_bound + tol,
    }
}

/// One pair's heatmap margin score `H_ij = 3 sqrt(e_i E_ij + e_j E_ji) / m_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapScore {
    pub i: usize,
    pub j: usize,
    pub numerator: f64,
    pub score: f64,
    /// Largest numerator perturbation preserving the screen, `m^2/9 - a`.
    pub perturbation_slack: f64,
}

/// Heatmap screen verdict over a pair family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginScreen {
    pub scores: Vec<HeatmapScore>,
    pub h_max: f64,
    /// `1 - H_max`.
    pub slack: f64,
    /// All submitted pairs score below one.
    pub certified: bool,
}

/// Screen the submitted pairs through the block-energy data. Every submitted
/// pair must be nondegenerate; a certified screen implies the one-third
/// threshold for each of them.
pub fn margin_screen(
    e: &BlockEnergyMatrix,
    margins: &PairwiseMargins,
    pairs: &[(usize, usize)],
) -> Result<MarginScreen> {
    let mut scores = Vec::with_capacity(pairs.len());
    let mut h_max = 0.0f64;
    for &(i, j) in pairs {
        let pm = margins
            .pair(i, j)
            .ok_or(GsaError::DegeneratePair { i, j })?;
        if !pm.nondegenerate {
            return Err(GsaError::DegeneratePair { i, j });
        }
        let numerator =
            e.row_energies[i] * e.entries[i][j] + e.row_energies[j] * e.entries[j][i];
        let score = 3.0 * numerator.sqrt() / pm.m;
        h_max = h_max.max(score);
        scores.push(HeatmapScore {
            i,
            j,
            numerator,
            score,
            perturbation_slack: pm.m * pm.m / 9.0 - numerator,
        });
    }
    Ok(MarginScreen {
        scores,
        h_max,
        slack: 1.0 - h_max,
        certified: h_max < 1.0,
    })
}

/// Entrywise perturbation check for two block-energy matrices measured with
/// the same groups and sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbBoundReport {
    pub delta: f64,
    pub scale: f64,
    pub e_min: f64,
    pub bound: f64,
    pub max_entry_diff: f64,
    pub holds: bool,
}

/// Verify `|E(A)_ij - E(B)_ij| <= (2S+D)D/e_min + S^2(2S+D)D/e_min^2`
/// entrywise, where `D = ||A - B||_F` and `S` bounds both Frobenius norms.
pub fn perturb_bound(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    row_groups: &[Vec<usize>],
    col_sets: &[Vec<usize>],
    e_min: f64,
) -> Result<PerturbBoundReport> {
    let ea = block_energy(a, row_groups, col_sets);
    let eb = block_energy(b, row_groups, col_sets);
    for (i, (&xa, &xb)) in ea
        .row_energies
        .iter()
        .zip(eb.row_energies.iter())
        .enumerate()
    {
        let low = xa.min(xb);
        if low < e_min {
            return Err(GsaError::RowEnergyBelowFloor {
                group: i,
                energy: low,
                floor: e_min,
            });
        }
    }
    let delta = (a - b).norm();
    let scale = a.norm().max(b.norm());
    let bound = (2.0 * scale + delta) * delta / e_min
        + scale * scale * (2.0 * scale + delta) * delta / (e_min * e_min);
    let k = row_groups.len();
    let mut max_entry_diff = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            max_entry_diff = max_entry_diff.max((ea.entries[i][j] - eb.entries[i][j]).abs());
        }
    }
    Ok(PerturbBoundReport {
        delta,
        scale,
        e_min,
        bound,
        max_entry_diff,
        holds: max_entry_diff <= bound + 1e-12,
    })
}

/// Rank-window robustness: two truncated physical transports and their
/// heatmap difference, with the truncation-error budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRobustnessReport {
    pub r_first: usize,
    pub r_second: usize,
    /// `E_tr(R,R) + E_tr(R',R')`.
    pub delta_budget: f64,
    pub measured_difference: f64,
    pub difference_holds: bool,
    /// Entrywise block-energy comparison using the budget as `Delta`.
    pub heatmap: Option<PerturbBoundReport>,
}

/// Compare the same interface truncated at two rank windows, both embedded
/// in the ambient source-coordinate grid.
pub fn window_robustness(
    ifc: &Interface,
    r_first: usize,
    r_second: usize,
    row_groups: &[Vec<usize>],
    col_sets: &[Vec<usize>],
    e_min: f64,
) -> Result<WindowRobustnessReport> {
    let a_first = truncated_transport_embedded(ifc, r_first)?;
    let a_second = truncated_transport_embedded(ifc, r_second)?;
    let budget = truncation_bound(ifc, r_first, r_first)?
        + truncation_bound(ifc, r_second, r_second)?;
    let measured = (&a_first - &a_second).norm();
    let heatmap = match perturb_bound(&a_first, &a_second, row_groups, col_sets, e_min) {
        Ok(rep) => Some(rep),
        Err(GsaError::RowEnergyBelowFloor { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(WindowRobustnessReport {
        r_first,
        r_second,
        delta_budget: budget,
        measured_difference: measured,
        difference_holds: measured <= budget + 1e-9 * budget.max(1.0),
        heatmap,
    })
}

/// Zero-padded truncated source-mode transport `T^(R,R)` in ambient d x d
/// coordinates.
pub fn truncated_transport_embedded(ifc: &Interface, r: usize) -> Result<DMatrix<f64>> {
    // Reuse the truncation-error plumbing for window validation.
    let _ = crate::transport::truncation_error(ifc, r, r, TruncationMode::SourceMode)?;
    let d = ifc.dim();
    let u = ifc.source_svd().left_trunc(r);
    let s = ifc.source_svd().sigma_trunc(r);
    let mut wt = ifc.target_svd().left_trunc(r);
    for j in 0..r {
        wt.column_mut(j)
            .scale_mut(ifc.target_svd().singular_values()[j]);
    }
    let w_trunc = wt * ifc.target_svd().right_trunc(r).transpose();
    let small = w_trunc * u * s;
    let mut out = DMatrix::zeros(d, d);
    out.view_mut((0, 0), (d, r)).copy_from(&small);
    Ok(out)
}

/// Diagonal scale-transfer report: `Theta`-sandwich and bad-mass transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTransferReport {
    pub theta: f64,
    pub sandwich_holds: bool,
    pub bad_mass_transfer_holds: bool,
    pub zero_support_preserved: bool,
    pub bad_a: f64,
    pub bad_b: f64,
}

/// Check the positive-diagonal reweighting transfer `B = D_r A D_c`:
/// `Theta^{-1} E(A) <= E(B) <= Theta E(A)` entrywise with
/// `Theta = ((a+ b+) / (a- b-))^2`, bad-mass transfer, and zero-block
/// support preservation.
pub fn scale_transfer(
    a: &DMatrix<f64>,
    d_r: &[f64],
    d_c: &[f64],
    row_groups: &[Vec<usize>],
    col_sets: &[Vec<usize>],
    accepted: &AcceptedOverlap,
) -> Result<ScaleTransferReport> {
    if d_r.len() != a.nrows() || d_c.len() != a.ncols() {
        return Err(GsaError::DimensionMismatch {
            context: format!(
                "weights {}x{} for a {}x{} matrix",
                d_r.len(),
                d_c.len(),
                a.nrows(),
                a.ncols()
            ),
        });
    }
    for (idx, &w) in d_r.iter().chain(d_c.iter()).enumerate() {
        if w <= 0.0 {
            return Err(GsaError::NonPositiveWeight {
                index: idx,
                value: w,
            });
        }
    }
    let mut b = a.clone();
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            b[(r, c)] = d_r[r] * a[(r, c)] * d_c[c];
        }
    }
    let a_plus = d_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a_minus = d_r.iter().copied().fold(f64::INFINITY, f64::min);
    let b_plus = d_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b_minus = d_c.iter().copied().fold(f64::INFINITY, f64::min);
    let theta = ((a_plus * b_plus) / (a_minus * b_minus)).powi(2);

    let ea = block_energy(a, row_groups, col_sets);
    let eb = block_energy(&b, row_groups, col_sets);
    let k = row_groups.len();
    let tol = 1e-9;
    let mut sandwich = true;
    let mut zero_support = true;
    for i in 0..k {
        for j in 0..k {
            let xa = ea.entries[i][j];
            let xb = eb.entries[i][j];
            sandwich &= xb <= theta * xa + tol && xb + tol >= xa / theta;
            zero_support &= (xa == 0.0) == (xb == 0.0);
        }
    }
    let bad_a = bad_mass(a, &ea, row_groups, col_sets, accepted).normalized;
    let bad_b = bad_mass(&b, &eb, row_groups, col_sets, accepted).normalized;
    Ok(ScaleTransferReport {
        theta,
        sandwich_holds: sandwich,
        bad_mass_transfer_holds: bad_b <= theta * bad_a + tol,
        zero_support_preserved: zero_support,
        bad_a,
        bad_b,
    })
}

/// Row-leakage transfer report for `B = L A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLeakageReport {
    /// Per signal group: (sqrt bad of B, leakage bound, holds).
    pub per_group: Vec<(f64, f64, bool)>,
    pub all_hold: bool,
}

/// Bound the energy-realized bad mass after a row-side map `L`:
/// `Bad_i(B)^{1/2} <= l_ii Bad_i(A)^{1/2} + sqrt(mu_i) l_i^off ||A||_F`.
/// `row_partition` must cover every row of `A` (residual group included).
pub fn row_leakage(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    row_partition: &[Vec<usize>],
    signal_groups: &[usize],
    col_bins: &[Vec<usize>],
    accepted: &AcceptedOverlap,
) -> Result<RowLeakageReport> {
    let m = a.nrows();
    if l.nrows() != m || l.ncols() != m {
        return Err(GsaError::DimensionMismatch {
            context: format!("leakage map {}x{} for {m} rows", l.nrows(), l.ncols()),
        });
    }
    let covered: usize = row_partition.iter().map(|g| g.len()).sum();
    if covered != m {
        return Err(GsaError::DimensionMismatch {
            context: format!("row partition covers {covered} of {m} rows"),
        });
    }
    let b = l * a;
    let k = col_bins.len();
    let a_fro = a.norm();
    let mut per_group = Vec::new();
    for (gi, &i) in signal_groups.iter().enumerate() {
        let bad_bins: Vec<usize> = (0..k).filter(|&j| accepted.is_bad(gi, j)).collect();
        // Bad-column multiplicity over the bad bins.
        let mut mu = 0usize;
        for c in 0..a.ncols() {
            let count = bad_bins
                .iter()
                .filter(|&&j| col_bins[j].contains(&c))
                .count();
            mu = mu.max(count);
        }
        let bad_energy = |mat: &DMatrix<f64>, rows: &[usize]| -> f64 {
            bad_bins
                .iter()
                .map(|&j| {
                    rows.iter()
                        .map(|&r| {
                            col_bins[j]
                                .iter()
                                .map(|&c| mat[(r, c)] * mat[(r, c)])
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                })
                .sum()
        };
        let rows_i = &row_partition[i];
        let bad_b = bad_energy(&b, rows_i).sqrt();
        let bad_a = bad_energy(a, rows_i).sqrt();
        // l_ii and the off-block leakage sum.
        let block_ii = submatrix(l, rows_i, rows_i);
        let l_ii = op_norm(&block_ii);
        let mut l_off = 0.0;
        for (ai, rows_a) in row_partition.iter().enumerate() {
            if ai == i || rows_a.is_empty() {
                continue;
            }
            let block = submatrix(l, rows_i, rows_a);
            l_off += op_norm(&block);
        }
        let bound = l_ii * bad_a + (mu as f64).sqrt() * l_off * a_fro;
        per_group.push((bad_b, bound, bad_b <= bound + 1e-9 * bound.max(1.0)));
    }
    let all_hold = per_group.iter().all(|&(_, _, h)| h);
    Ok(RowLeakageReport {
        per_group,
        all_hold,
    })
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 || m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Coarse block-energy matrix with its aggregation-consistency checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseningResult {
    pub coarse_entries: Vec<Vec<f64>>,
    pub coarse_row_energies: Vec<f64>,
    /// (K1) zero fine bad mass implies zero coarse bad mass.
    pub k1_holds: bool,
    /// (K2) unnormalized coarse bad <= unnormalized fine bad.
    pub k2_holds: bool,
    /// (K3) unnormalized fine bad <= K e_max * normalized fine bad.
    pub k3_holds: bool,
    pub fine_bad_unnormalized: f64,
    pub coarse_bad_unnormalized: f64,
}

/// Row-energy weighted aggregation of a fine block-energy matrix under
/// surjective row/column maps with disjoint fine column bins.
///
/// `pi_r[i]` and `pi_c[j]` give the coarse indices of fine bins; fine bad
/// blocks are those outside the accepted graph, and the coarse bad set is
/// their image.
pub fn coarsen(
    e: &BlockEnergyMatrix,
    pi_r: &[usize],
    pi_c: &[usize],
    k_bar: usize,
    col_sets: &[Vec<usize>],
    accepted: &AcceptedOverlap,
) -> Result<CoarseningResult> {
    let k = e.k();
    if pi_r.len() != k || pi_c.len() != k {
        return Err(GsaError::DimensionMismatch {
            context: format!("coarsening maps for {} fine bins", k),
        });
    }
    for target in 0..k_bar {
        if !pi_r.contains(&target) || !pi_c.contains(&target) {
            return Err(GsaError::NonSurjectiveMap { target: k_bar });
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for set in col_sets {
        for &c in set {
            if !seen.insert(c) {
                return Err(GsaError::OverlappingBins { col: c });
            }
        }
    }
    for (i, &ei) in e.row_energies.iter().enumerate() {
        if ei <= 0.0 {
            return Err(GsaError::RowEnergyBelowFloor {
                group: i,
                energy: ei,
                floor: f64::MIN_POSITIVE,
            });
        }
    }

    let mut coarse = vec![vec![0.0; k_bar]; k_bar];
    let mut coarse_rows = vec![0.0; k_bar];
    for i in 0..k {
        coarse_rows[pi_r[i]] += e.row_energies[i];
    }
    for i in 0..k {
        for j in 0..k {
            coarse[pi_r[i]][pi_c[j]] += e.row_energies[i] * e.entries[i][j];
        }
    }
    for a in 0..k_bar {
        for bx in 0..k_bar {
            coarse[a][bx] /= coarse_rows[a];
        }
    }

    // Induced coarse bad set: images of fine bad pairs.
    let mut coarse_bad_pairs = std::collections::BTreeSet::new();
    let mut fine_bad_un = 0.0;
    for i in 0..k {
        for j in 0..k {
            if accepted.is_bad(i, j) {
                fine_bad_un += e.row_energies[i] * e.entries[i][j];
                coarse_bad_pairs.insert((pi_r[i], pi_c[j]));
            }
        }
    }
    // Coarse bad energy restricted to fine bad blocks mapping into each
    // coarse bad pair (the image decomposition is a sub-sum of fine bad).
    let mut coarse_bad_un = 0.0;
    for &(a, bx) in &coarse_bad_pairs {
        for i in 0..k {
            for j in 0..k {
                if pi_r[i] == a && pi_c[j] == bx && accepted.is_bad(i, j) {
                    coarse_bad_un += e.row_energies[i] * e.entries[i][j];
                }
            }
        }
    }
    let e_max = e.row_energies.iter().copied().fold(0.0f64, f64::max);
    let normalized_fine_bad: f64 = {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                if accepted.is_bad(i, j) {
                    s += e.entries[i][j];
                }
            }
        }
        s / k as f64
    };
    let tol = 1e-12 * (1.0 + fine_bad_un);
    Ok(CoarseningResult {
        coarse_entries: coarse,
        coarse_row_energies: coarse_rows,
        k1_holds: fine_bad_un > tol || coarse_bad_un <= tol,
        k2_holds: coarse_bad_un <= fine_bad_un + tol,
        k3_holds: fine_bad_un <= k as f64 * e_max * normalized_fine_bad + tol,
        fine_bad_unnormalized: fine_bad_un,
        coarse_bad_unnormalized: coarse_bad_un,
    })
}
