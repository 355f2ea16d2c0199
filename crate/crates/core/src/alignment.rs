//! Physical alignment structures: mode-profile row grouping, active-column
//! extraction with order gaps, pairwise exclusive/overlap margins, the
//! core + overlap + noise mask decomposition, the shared-support incidence
//! graph, static certificate radii, and the channel-anatomy (ICM) labels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::transport::ColCoords;

/// Relative positivity threshold for the smallest positive singular value.
const SIGMA_MIN_POS_REL: f64 = 1e-12;

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            out[(a, b)] = m[(r, c)];
        }
    }
    out
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 || m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Smallest singular value above `1e-12 * sigma_max`; zero for zero/empty
/// blocks.
fn sigma_min_pos(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 || m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    let sv = m.clone().singular_values();
    let top = sv.max();
    sv.iter()
        .copied()
        .filter(|&s| s > SIGMA_MIN_POS_REL * top)
        .fold(f64::INFINITY, f64::min)
}

/// Result of the mode-profile row assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPartition {
    /// `groups[0]` is the residual group; `groups[a]` for `a >= 1` collects
    /// the rows won by mode `a-1`. Indices sorted.
    pub groups: Vec<Vec<usize>>,
    /// Per-row winning score margins `(score - theta, score - runner_up)`.
    pub margins: Vec<(f64, f64)>,
    pub theta_row: f64,
    pub mu_row: f64,
}

/// Assign each row of the output-mode profile `Y` to the group of its
/// maximal modal score `Y[r,a]^2`, requiring the score to reach `theta_row`
/// and to lead the runner-up by `mu_row`; rows failing either go to the
/// residual group. Smallest-index maximizer on ties.
pub fn mode_profile_partition(
    y: &DMatrix<f64>,
    theta_row: f64,
    mu_row: f64,
) -> Result<RowPartition> {
    let (m, k) = (y.nrows(), y.ncols());
    if m == 0 || k == 0 {
        return Err(GsaError::EmptyMatrix {
            label: "mode profile".to_string(),
        });
    }
    let mut groups = vec![Vec::new(); k + 1];
    let mut margins = Vec::with_capacity(m);
    for r in 0..m {
        let mut best_a = 0usize;
        let mut best = f64::NEG_INFINITY;
        for a in 0..k {
            let score = y[(r, a)] * y[(r, a)];
            if score > best {
                best = score;
                best_a = a;
            }
        }
        let mut runner_up = 0.0f64;
        if k > 1 {
            runner_up = f64::NEG_INFINITY;
            for a in 0..k {
                if a != best_a {
                    runner_up = runner_up.max(y[(r, a)] * y[(r, a)]);
                }
            }
        }
        margins.push((best - theta_row, best - runner_up));
        if best >= theta_row && best - runner_up >= mu_row {
            groups[best_a + 1].push(r);
        } else {
            groups[0].push(r);
        }
    }
    Ok(RowPartition {
        groups,
        margins,
        theta_row,
        mu_row,
    })
}

/// How active supports are sized per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportSpec {
    /// Fixed top-`s_i` columns per group.
    Sizes(Vec<usize>),
    /// Minimal lexicographically tie-broken set reaching an energy fraction.
    EnergyFractions(Vec<f64>),
}

/// Row groups, support sizes, active column sets, order gaps, and the
/// display permutations for one permuted transport matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStructure {
    /// `row_groups[0]` is the residual group; `1..=K` are signal groups.
    pub row_groups: Vec<Vec<usize>>,
    pub support_sizes: Vec<usize>,
    /// Active column sets per signal group, sorted ascending.
    pub active_sets: Vec<Vec<usize>>,
    /// Active-column order gaps; `+inf` when a group owns every column.
    pub gaps: Vec<f64>,
    /// Display permutations: position -> original index. Identity unless a
    /// reordering was applied upstream.
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
    pub theta_row: f64,
    pub mu_row: f64,
}

impl AlignmentStructure {
    /// Number of signal groups.
    pub fn num_groups(&self) -> usize {
        self.row_groups.len() - 1
    }

    /// Rows of signal group `g` (0-based signal index).
    pub fn signal_rows(&self, g: usize) -> &[usize] {
        &self.row_groups[g + 1]
    }

    /// Extract active sets for fixed row groups on `m`.
    pub fn extract(
        m: &DMatrix<f64>,
        row_groups: Vec<Vec<usize>>,
        support: &SupportSpec,
        theta_row: f64,
        mu_row: f64,
    ) -> Result<Self> {
        let k = row_groups.len() - 1;
        let (sets, gaps, sizes) = active_columns(m, &row_groups[1..], support)?;
        debug_assert_eq!(sets.len(), k);
        Ok(Self {
            row_groups,
            support_sizes: sizes,
            active_sets: sets,
            gaps,
            row_perm: (0..m.nrows()).collect(),
            col_perm: (0..m.ncols()).collect(),
            theta_row,
            mu_row,
        })
    }

    /// Re-extract active sets from a perturbed matrix, keeping the row
    /// groups and support sizes fixed.
    pub fn reextract(&self, m: &DMatrix<f64>) -> Result<Self> {
        Self::extract(
            m,
            self.row_groups.clone(),
            &SupportSpec::Sizes(self.support_sizes.clone()),
            self.theta_row,
            self.mu_row,
        )
    }
}

/// Active sets, order gaps, and realized sizes per signal group.
pub type ActiveColumns = (Vec<Vec<usize>>, Vec<f64>, Vec<usize>);

/// Top-energy active columns per group with their order gaps.
///
/// Scores are `q_i(c) = ||M[R_i, {c}]||_2^2`; ties break lexicographically
/// (lower column index wins). Returns `(sets, gaps, sizes)`.
pub fn active_columns(
    m: &DMatrix<f64>,
    signal_groups: &[Vec<usize>],
    support: &SupportSpec,
) -> Result<ActiveColumns> {
    let n = m.ncols();
    let k = signal_groups.len();
    match support {
        SupportSpec::Sizes(sizes) if sizes.len() != k => {
            return Err(GsaError::DimensionMismatch {
                context: format!("{} sizes for {} groups", sizes.len(), k),
            })
        }
        SupportSpec::EnergyFractions(f) if f.len() != k => {
            return Err(GsaError::DimensionMismatch {
                context: format!("{} fractions for {} groups", f.len(), k),
            })
        }
        _ => {}
    }

    let mut sets = Vec::with_capacity(k);
    let mut gaps = Vec::with_capacity(k);
    let mut sizes_out = Vec::with_capacity(k);
    for (g, rows) in signal_groups.iter().enumerate() {
        let scores: Vec<f64> = (0..n)
            .map(|c| rows.iter().map(|&r| m[(r, c)] * m[(r, c)]).sum())
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let s = match support {
            SupportSpec::Sizes(sizes) => {
                let s = sizes[g];
                if s > n {
                    return Err(GsaError::SupportTooLarge { s, n });
                }
                s
            }
            SupportSpec::EnergyFractions(fracs) => {
                let tau = fracs[g];
                if !(0.0..=1.0).contains(&tau) {
                    return Err(GsaError::ParamOutOfRange {
                        name: "energy_fraction",
                        value: tau,
                        range: "(0, 1]",
                    });
                }
                let total: f64 = scores.iter().sum();
                if total == 0.0 {
                    0
                } else {
                    let mut cum = 0.0;
                    let mut s = 0;
                    for &c in &order {
                        cum += scores[c];
                        s += 1;
                        if cum >= tau * total {
                            break;
                        }
                    }
                    s
                }
            }
        };
        let mut set: Vec<usize> = order[..s].to_vec();
        set.sort_unstable();
        let gap = if s == n {
            f64::INFINITY
        } else if s == 0 {
            0.0
        } else {
            let min_in = set.iter().map(|&c| scores[c]).fold(f64::INFINITY, f64::min);
            let max_out = (0..n)
                .filter(|c| !set.contains(c))
                .map(|c| scores[c])
                .fold(f64::NEG_INFINITY, f64::max);
            min_in - max_out
        };
        sets.push(set);
        gaps.push(gap);
        sizes_out.push(s);
    }
    Ok((sets, gaps, sizes_out))
}

/// Pairwise relational margins for one signal pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    /// 0-based signal group indices, `i < j`.
    pub i: usize,
    pub j: usize,
    /// `min` of the smallest positive singular values of the two exclusive
    /// core blocks.
    pub m: f64,
    /// Operator norm of the shared-support overlap block.
    pub o: f64,
    pub delta_sigma: f64,
    /// `||overlap||_2 / ||overlap||_F`, undefined for empty/zero overlap.
    pub gamma: Option<f64>,
    pub overlap_frobenius: f64,
    pub nondegenerate: bool,
    /// `o < m/3` (only meaningful on nondegenerate pairs).
    pub one_third_holds: bool,
    /// `o < delta_sigma / 2`, the equivalent gap form.
    pub half_gap_holds: bool,
    /// `||overlap||_F < m / (3 gamma)` when gamma is defined.
    pub frobenius_form_holds: Option<bool>,
    /// `m - 3o`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMargins {
    pub pairs: Vec<PairMargin>,
}

impl PairwiseMargins {
    pub fn nondegenerate(&self) -> impl Iterator<Item = &PairMargin> {
        self.pairs.iter().filter(|p| p.nondegenerate)
    }

    /// Smallest exclusive margin over nondegenerate pairs, `+inf` if none.
    pub fn m_star(&self) -> f64 {
        self.nondegenerate()
            .map(|p| p.m)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_one_third(&self) -> bool {
        self.nondegenerate().all(|p| p.one_third_holds)
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&PairMargin> {
        self.pairs.iter().find(|p| p.i == i && p.j == j)
    }
}

/// Exclusive-core / overlap margins for every signal pair.
pub fn pairwise_margins(
    m: &DMatrix<f64>,
    structure: &AlignmentStructure,
) -> PairwiseMargins {
    let k = structure.num_groups();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let ci = &structure.active_sets[i];
            let cj = &structure.active_sets[j];
            let ci_only: Vec<usize> = ci.iter().copied().filter(|c| !cj.contains(c)).collect();
            let cj_only: Vec<usize> = cj.iter().copied().filter(|c| !ci.contains(c)).collect();
            let shared: Vec<usize> = ci.iter().copied().filter(|c| cj.contains(c)).collect();

            let core_ij = submatrix(m, structure.signal_rows(i), &ci_only);
            let core_ji = submatrix(m, structure.signal_rows(j), &cj_only);
            let mut union_rows: Vec<usize> = structure
                .signal_rows(i)
                .iter()
                .chain(structure.signal_rows(j))
                .copied()
                .collect();
            union_rows.sort_unstable();
            let overlap = submatrix(m, &union_rows, &shared);

            let m_ij = sigma_min_pos(&core_ij).min(sigma_min_pos(&core_ji));
            let m_ij = if m_ij.is_finite() { m_ij } else { 0.0 };
            let o_ij = operator_norm(&overlap);
            let fro = overlap.norm();
            let gamma = if fro > 0.0 { Some(o_ij / fro) } else { None };
            let nondeg = m_ij > 0.0;
            let one_third = nondeg && o_ij < m_ij / 3.0;
            let half_gap = nondeg && o_ij < (m_ij - o_ij) / 2.0;
            let frob_form = gamma.map(|g| fro < m_ij / (3.0 * g));
            pairs.push(PairMargin {
                i,
                j,
                m: m_ij,
                o: o_ij,
                delta_sigma: m_ij - o_ij,
                gamma,
                overlap_frobenius: fro,
                nondegenerate: nondeg,
                one_third_holds: one_third,
                half_gap_holds: half_gap,
                frobenius_form_holds: frob_form,
                slack: m_ij - 3.0 * o_ij,
            });
        }
    }
    PairwiseMargins { pairs }
}

/// Exact coordinate-mask split `M = core + overlap + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreOverlapNoise {
    pub core: DMatrix<f64>,
    pub overlap: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    /// Dedicated columns per signal group (active for that group only).
    pub dedicated: Vec<Vec<usize>>,
    /// Shared columns per signal group (active for it and some other group).
    pub shared: Vec<Vec<usize>>,
    pub core_norm: f64,
    pub overlap_norm: f64,
    pub noise_norm: f64,
}

/// Build the core/overlap/noise decomposition from dedicated and shared
/// column relations. The three masks have disjoint support and their sum
/// reproduces the input exactly.
pub fn decompose(m: &DMatrix<f64>, structure: &AlignmentStructure) -> CoreOverlapNoise {
    let k = structure.num_groups();
    let mut dedicated = Vec::with_capacity(k);
    let mut shared = Vec::with_capacity(k);
    for i in 0..k {
        let ci = &structure.active_sets[i];
        let mut ded = Vec::new();
        let mut sh = Vec::new();
        for &c in ci {
            let elsewhere = (0..k).any(|j| j != i && structure.active_sets[j].contains(&c));
            if elsewhere {
                sh.push(c);
            } else {
                ded.push(c);
            }
        }
        dedicated.push(ded);
        shared.push(sh);
    }

    let mut core = DMatrix::zeros(m.nrows(), m.ncols());
    let mut overlap = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..k {
        for &r in structure.signal_rows(i) {
            for &c in &dedicated[i] {
                core[(r, c)] = m[(r, c)];
            }
            for &c in &shared[i] {
                overlap[(r, c)] = m[(r, c)];
            }
        }
    }
    let noise = m - &core - &overlap;
    CoreOverlapNoise {
        core_norm: core.norm(),
        overlap_norm: overlap.norm(),
        noise_norm: noise.norm(),
        core,
        overlap,
        noise,
        dedicated,
        shared,
    }
}

/// Per-hub energy-degree bound record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubEnergyBound {
    pub col: usize,
    pub degree: usize,
    /// Total group-wise column energy `E_c`.
    pub energy: f64,
    /// Smallest incident segment norm.
    pub min_segment: f64,
    /// `sqrt(E_c / q)`.
    pub bound: f64,
    pub holds: bool,
}

/// Bipartite group-column incidence with hub accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceGraph {
    /// Sorted `(signal group, column)` edges.
    pub edges: Vec<(usize, usize)>,
    /// Sorted `(column, degree)` for every active column.
    pub degrees: Vec<(usize, usize)>,
    /// Columns active for two or more groups, sorted.
    pub hubs: Vec<usize>,
    pub hub_bounds: Vec<HubEnergyBound>,
}

pub fn incidence(m: &DMatrix<f64>, structure: &AlignmentStructure) -> IncidenceGraph {
    let k = structure.num_groups();
    let mut edges = Vec::new();
    let mut degree: std::collections::BTreeMap<usize, usize> = Default::default();
    for i in 0..k {
        for &c in &structure.active_sets[i] {
            edges.push((i, c));
            *degree.entry(c).or_insert(0) += 1;
        }
    }
    edges.sort_unstable();
    let hubs: Vec<usize> = degree
        .iter()
        .filter(|&(_, &d)| d >= 2)
        .map(|(&c, _)| c)
        .collect();
    let hub_bounds = hubs
        .iter()
        .map(|&c| {
            let incident: Vec<usize> = (0..k)
                .filter(|&i| structure.active_sets[i].contains(&c))
                .collect();
            let seg_norms: Vec<f64> = incident
                .iter()
                .map(|&i| {
                    structure
                        .signal_rows(i)
                        .iter()
                        .map(|&r| m[(r, c)] * m[(r, c)])
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let energy: f64 = seg_norms.iter().map(|s| s * s).sum();
            let q = incident.len();
            let min_segment = seg_norms.iter().copied().fold(f64::INFINITY, f64::min);
            let bound = (energy / q as f64).sqrt();
            HubEnergyBound {
                col: c,
                degree: q,
                energy,
                min_segment,
                bound,
                holds: min_segment <= bound + 1e-12,
            }
        })
        .collect();
    IncidenceGraph {
        edges,
        degrees: degree.into_iter().collect(),
        hubs,
        hub_bounds,
    }
}

/// Set-level snapshot of everything the single-radius theorem preserves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticIncidence {
    pub active_sets: Vec<Vec<usize>>,
    pub dedicated: Vec<Vec<usize>>,
    pub shared: Vec<Vec<usize>>,
    pub hubs: Vec<usize>,
    pub degrees: Vec<(usize, usize)>,
    pub edges: Vec<(usize, usize)>,
}

pub fn static_incidence(m: &DMatrix<f64>, structure: &AlignmentStructure) -> StaticIncidence {
    let con = decompose(m, structure);
    let graph = incidence(m, structure);
    StaticIncidence {
        active_sets: structure.active_sets.clone(),
        dedicated: con.dedicated,
        shared: con.shared,
        hubs: graph.hubs,
        degrees: graph.degrees,
        edges: graph.edges,
    }
}

/// Static certificate radius and its two constituent families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticCertificateRadius {
    pub r_cert: f64,
    /// Per-group active-gap radii `-||M||_F + sqrt(||M||_F^2 + Gamma/2)`.
    pub group_radii: Vec<f64>,
    /// Per-pair radii `(m - 3o)/4` over nondegenerate pairs.
    pub pair_radii: Vec<(usize, usize, f64)>,
    /// False when some gap is nonpositive or some nondegenerate pair fails
    /// `m > 3o`; the radius is zero in that case.
    pub preconditions_met: bool,
}

pub fn certificate_radius(
    m: &DMatrix<f64>,
    structure: &AlignmentStructure,
    margins: &PairwiseMargins,
) -> StaticCertificateRadius {
    let fro = m.norm();
    let group_radii: Vec<f64> = structure
        .gaps
        .iter()
        .map(|&g| {
            if g.is_infinite() {
                f64::INFINITY
            } else {
                -fro + (fro * fro + g / 2.0).sqrt()
            }
        })
        .collect();
    let pair_radii: Vec<(usize, usize, f64)> = margins
        .nondegenerate()
        .map(|p| (p.i, p.j, (p.m - 3.0 * p.o) / 4.0))
        .collect();
    let preconditions_met = structure.gaps.iter().all(|&g| g > 0.0)
        && margins.nondegenerate().all(|p| p.m > 3.0 * p.o);
    let r_cert = if !preconditions_met {
        0.0
    } else {
        let g_min = group_radii.iter().copied().fold(f64::INFINITY, f64::min);
        let p_min = pair_radii
            .iter()
            .map(|&(_, _, r)| r)
            .fold(f64::INFINITY, f64::min);
        g_min.min(p_min)
    };
    StaticCertificateRadius {
        r_cert,
        group_radii,
        pair_radii,
        preconditions_met,
    }
}

/// Stability verdict for a perturbation budget `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub eta: f64,
    /// `omega = 2 ||M||_F eta + eta^2`, the score perturbation bound.
    pub omega: f64,
    pub group_conditions: Vec<bool>,
    pub pair_conditions: Vec<(usize, usize, bool)>,
    pub certified: bool,
}

/// Evaluate the active-gap condition `Gamma_i > 2 omega` and the pairwise
/// condition `3o + 4 eta < m` for a Frobenius perturbation budget `eta`.
pub fn stability_check(
    m: &DMatrix<f64>,
    structure: &AlignmentStructure,
    margins: &PairwiseMargins,
    eta: f64,
) -> StabilityVerdict {
    let omega = 2.0 * m.norm() * eta + eta * eta;
    let group_conditions: Vec<bool> = structure.gaps.iter().map(|&g| g > 2.0 * omega).collect();
    let pair_conditions: Vec<(usize, usize, bool)> = margins
        .nondegenerate()
        .map(|p| (p.i, p.j, 3.0 * p.o + 4.0 * eta < p.m))
        .collect();
    let certified =
        group_conditions.iter().all(|&b| b) && pair_conditions.iter().all(|&(_, _, b)| b);
    StabilityVerdict {
        eta,
        omega,
        group_conditions,
        pair_conditions,
        certified,
    }
}

/// Residual-mass descriptor for the channel anatomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDescriptor {
    /// Rows of the residual group.
    pub residual_rows: Vec<usize>,
    pub noise_norm: f64,
    /// Entries of the noise component at or above a user threshold, if one
    /// was declared.
    pub thresholded_support: Option<Vec<(usize, usize)>>,
}

/// Per-group channel-anatomy labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAnatomy {
    pub group: usize,
    /// Salient core rows: top `q_i` by core row energy.
    pub sc: Vec<usize>,
    /// Threshold rows: remaining rows with core energy at least `tau_st`.
    pub st: Vec<usize>,
    /// Auxiliary rows: profile-correlated with the leading core profile.
    pub sa: Vec<usize>,
    /// The group's support set (its active columns).
    pub srs: Vec<usize>,
    pub gamma_sc: f64,
    pub gamma_st: f64,
    pub gamma_sa: f64,
    /// Leading-profile spectral gap `sigma_1 - sigma_2` of the core block.
    pub profile_gap: f64,
}

/// The extracted channel anatomy for every signal group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmAnatomy {
    pub groups: Vec<GroupAnatomy>,
    pub hubs: Vec<usize>,
    /// Coordinate meaning of support columns: source modes or physical
    /// input channels, inherited from the transport variant.
    pub col_coords: ColCoords,
    pub noise: NoiseDescriptor,
}

/// Extract SC/ST/SA/SRS/Hub/Noise labels from a decomposition.
///
/// `q` holds the per-group salient-core sizes, `tau_st` the threshold-row
/// energy floor, `tau_sa` the profile-correlation threshold. Rows with zero
/// core energy are excluded from the SA test. `supp_tau` optionally declares
/// an entrywise threshold for reporting the noise support.
pub fn icm_extract(
    con: &CoreOverlapNoise,
    structure: &AlignmentStructure,
    q: &[usize],
    tau_st: f64,
    tau_sa: f64,
    col_coords: ColCoords,
    supp_tau: Option<f64>,
) -> Result<IcmAnatomy> {
    let k = structure.num_groups();
    if q.len() != k {
        return Err(GsaError::DimensionMismatch {
            context: format!("{} core sizes for {} groups", q.len(), k),
        });
    }
    let n = con.core.ncols();
    let mut groups = Vec::with_capacity(k);
    for i in 0..k {
        let rows = structure.signal_rows(i);
        if q[i] > rows.len() {
            return Err(GsaError::GroupTooSmall {
                group: i,
                q: q[i],
                len: rows.len(),
            });
        }
        let energies: Vec<f64> = rows
            .iter()
            .map(|&r| (0..n).map(|c| con.core[(r, c)] * con.core[(r, c)]).sum())
            .collect();

        // SC: top-q rows by core energy, lexicographic ties.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            energies[b]
                .partial_cmp(&energies[a])
                .unwrap()
                .then(rows[a].cmp(&rows[b]))
        });
        let mut sc: Vec<usize> = order[..q[i]].iter().map(|&p| rows[p]).collect();
        sc.sort_unstable();

        let mut st: Vec<usize> = order[q[i]..]
            .iter()
            .filter(|&&p| energies[p] >= tau_st)
            .map(|&p| rows[p])
            .collect();
        st.sort_unstable();

        // Leading right profile of the core row block, sign-fixed.
        let block = submatrix(&con.core, rows, &(0..n).collect::<Vec<_>>());
        let (u_i, sigma1, sigma2) = leading_right_profile(&block);

        let mut sa = Vec::new();
        let mut gamma_sa = f64::INFINITY;
        for (p, &r) in rows.iter().enumerate() {
            if energies[p] <= 0.0 {
                continue;
            }
            let norm = energies[p].sqrt();
            let mut dot = 0.0;
            for c in 0..n {
                dot += (con.core[(r, c)] / norm) * u_i[c];
            }
            let corr = dot.abs();
            gamma_sa = gamma_sa.min((corr - tau_sa).abs());
            if corr >= tau_sa {
                sa.push(r);
            }
        }
        sa.sort_unstable();

        let gamma_sc = if order.len() == q[i] {
            f64::INFINITY
        } else {
            let min_in = order[..q[i]]
                .iter()
                .map(|&p| energies[p])
                .fold(f64::INFINITY, f64::min);
            let max_out = order[q[i]..]
                .iter()
                .map(|&p| energies[p])
                .fold(f64::NEG_INFINITY, f64::max);
            min_in - max_out
        };
        let gamma_st = order[q[i]..]
            .iter()
            .map(|&p| (energies[p] - tau_st).abs())
            .fold(f64::INFINITY, f64::min);

        groups.push(GroupAnatomy {
            group: i,
            sc,
            st,
            sa,
            srs: structure.active_sets[i].clone(),
            gamma_sc,
            gamma_st,
            gamma_sa,
            profile_gap: sigma1 - sigma2,
        });
    }

    let graph_m = &con.core + &con.overlap + &con.noise;
    let graph = incidence(&graph_m, structure);
    let thresholded_support = supp_tau.map(|tau| {
        let mut support = Vec::new();
        for r in 0..con.noise.nrows() {
            for c in 0..con.noise.ncols() {
                if con.noise[(r, c)].abs() >= tau {
                    support.push((r, c));
                }
            }
        }
        support
    });
    Ok(IcmAnatomy {
        groups,
        hubs: graph.hubs,
        col_coords,
        noise: NoiseDescriptor {
            residual_rows: structure.row_groups[0].clone(),
            noise_norm: con.noise_norm,
            thresholded_support,
        },
    })
}

/// Core row energies `e_i(r) = ||core row||^2` of one signal group, in
/// group row order.
pub fn core_row_energies(
    con: &CoreOverlapNoise,
    structure: &AlignmentStructure,
    g: usize,
) -> Vec<f64> {
    let n = con.core.ncols();
    structure
        .signal_rows(g)
        .iter()
        .map(|&r| (0..n).map(|c| con.core[(r, c)] * con.core[(r, c)]).sum())
        .collect()
}

/// `|<p_r, u_g>|` per group row (`None` for zero core rows), with `u_g` the
/// sign-fixed leading right profile of the group's core block.
pub fn core_profile_correlations(
    con: &CoreOverlapNoise,
    structure: &AlignmentStructure,
    g: usize,
) -> Vec<Option<f64>> {
    let rows = structure.signal_rows(g);
    let n = con.core.ncols();
    let block = submatrix(&con.core, rows, &(0..n).collect::<Vec<_>>());
    let (u, _, _) = leading_right_profile(&block);
    rows.iter()
        .map(|&r| {
            let norm: f64 = (0..n)
                .map(|c| con.core[(r, c)] * con.core[(r, c)])
                .sum::<f64>()
                .sqrt();
            if norm <= 0.0 {
                return None;
            }
            let mut dot = 0.0;
            for c in 0..n {
                dot += (con.core[(r, c)] / norm) * u[c];
            }
            Some(dot.abs())
        })
        .collect()
}

/// Leading right singular vector (sign: largest-|entry| positive) together
/// with the top two singular values.
fn leading_right_profile(block: &DMatrix<f64>) -> (Vec<f64>, f64, f64) {
    let n = block.ncols();
    if block.nrows() == 0 || n == 0 || block.iter().all(|x| *x == 0.0) {
        return (vec![0.0; n], 0.0, 0.0);
    }
    let svd = block.clone().svd(false, true);
    let vt = svd.v_t.expect("V^T requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let lead = idx[0];
    let sigma1 = svd.singular_values[lead];
    let sigma2 = if idx.len() > 1 {
        svd.singular_values[idx[1]]
    } else {
        0.0
    };
    let mut u: Vec<f64> = (0..n).map(|c| vt[(lead, c)]).collect();
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (c, &v) in u.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = c;
        }
    }
    if u[best] < 0.0 {
        for v in &mut u {
            *v = -*v;
        }
    }
    (u, sigma1, sigma2)
}

/// Label-stability verdict under row-energy and correlation perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmStabilityVerdict {
    pub per_group: Vec<IcmGroupStability>,
    pub all_stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcmGroupStability {
    pub group: usize,
    pub sc_stable: bool,
    pub st_stable: bool,
    pub sa_stable: bool,
}

/// Check `2 d_row < Gamma_SC`, `d_row < Gamma_ST`, `d_corr < Gamma_SA`.
pub fn icm_stability(anatomy: &IcmAnatomy, delta_row: f64, delta_corr: f64) -> IcmStabilityVerdict {
    let per_group: Vec<IcmGroupStability> = anatomy
        .groups
        .iter()
        .map(|g| IcmGroupStability {
            group: g.group,
            sc_stable: 2.0 * delta_row < g.gamma_sc,
            st_stable: delta_row < g.gamma_st,
            sa_stable: delta_corr < g.gamma_sa,
        })
        .collect();
    let all_stable = per_group
        .iter()
        .all(|g| g.sc_stable && g.st_stable && g.sa_stable);
    IcmStabilityVerdict {
        per_group,
        all_stable,
    }
}
