//! Chain-level certificate assembly: per-interface analyses, the
//! certificate residual and its bound, domain membership verdicts, the
//! dynamic-to-static bridge check, family-wise persistence, and the report
//! record.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{
    certificate_radius, decompose, icm_extract, mode_profile_partition, pairwise_margins,
    stability_check, static_incidence, AlignmentStructure, IcmAnatomy, PairwiseMargins,
    StabilityVerdict, StaticCertificateRadius, SupportSpec,
};
use crate::block_energy::{
    bad_mass, block_energy, coarsen, margin_screen, perturb_bound, AcceptedOverlap,
    BadMassReport, BlockEnergyMatrix, MarginScreen,
};
use crate::error::{GsaError, Result};
use crate::matrix::{gauged_svd, LayerMatrix, RankWindow, WindowSide};
use crate::orbit::{
    cartan_tv_bound, effective_rank_empirical, fit_power_law, interface_budget,
    rank_margins, rank_transfer_check, slope_min, CartanFit, ExponentInterval, FitRange,
    InterfaceBudget, RankTransferVerdict, TvBoundReport,
};
use crate::synth::seeded_orthogonal;
use crate::transport::{
    build_transport, truncation_error, ColCoords, Interface, RowCoords, TargetMode,
    TransportVariant, TruncationError, TruncationMode,
};

/// Report schema version.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How the per-side rank windows are selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// Smallest rank keeping a `1 - eps` energy fraction.
    Energy(f64),
    /// Fixed rank, clamped to the spectral length.
    Fixed(usize),
}

/// How per-group support sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportRule {
    EnergyFraction(f64),
    UniformSize(usize),
}

/// Null-control kinds for baseline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Gaussian,
    SpectrumPreserving,
    Permuted,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Gaussian => "gaussian",
            BaselineKind::SpectrumPreserving => "spectrum-preserving",
            BaselineKind::Permuted => "permuted",
        }
    }
}

/// The declared extraction protocol: every rule and threshold fixed before
/// margins are measured, recorded verbatim in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub transport_variant: TransportVariant,
    pub target_mode: TargetMode,
    pub rank_rule: RankRule,
    pub theta_row: f64,
    pub mu_row: f64,
    pub support_rule: SupportRule,
    /// Salient-core size per group.
    pub q_core: usize,
    pub tau_st: f64,
    pub tau_sa: f64,
    /// Pairwise slack parameter of the alignment residual.
    pub zeta: f64,
    /// Active-gap target of the alignment residual.
    pub gamma0: f64,
    /// Accepted-overlap neighbor lists; empty means diagonal-only.
    pub accepted_overlap: Vec<Vec<usize>>,
    /// Compressibility fraction: require `R <= ceil(rho d_sp)`.
    pub rho: f64,
    /// Noise tolerance of the physical domain.
    pub eps_noise: f64,
    /// Pairwise overlap constant, strictly below 1/3.
    pub c_overlap: f64,
    /// Spectral-step tolerances; measured rigidity bounds when absent.
    pub eps_alpha: Option<f64>,
    pub eps_c: Option<f64>,
    /// Declared exponent interval; derived from the fits when absent.
    pub interval: Option<(f64, f64)>,
    /// Externally supplied global operator budget, if any.
    pub global_budget: Option<f64>,
    pub tau_rank: f64,
    pub seed: u64,
    pub baselines: Vec<BaselineKind>,
    /// When false, alignment-dependent entries are reported "not measured"
    /// and membership is not claimed.
    pub measure_alignment: bool,
    /// Externally declared row partition (group 0 = residual), applied to
    /// every interface in place of the mode-profile rule.
    pub external_partition: Option<Vec<Vec<usize>>>,
    /// Optional noise-support report threshold.
    pub noise_support_tau: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            transport_variant: TransportVariant::Out,
            target_mode: TargetMode::Truncated,
            rank_rule: RankRule::Energy(0.5),
            theta_row: 0.0,
            mu_row: 0.0,
            support_rule: SupportRule::EnergyFraction(0.5),
            q_core: 1,
            tau_st: 1e-9,
            tau_sa: 0.9,
            zeta: 0.5,
            gamma0: 0.0,
            accepted_overlap: Vec::new(),
            rho: 0.5,
            eps_noise: 0.1,
            c_overlap: 0.33,
            eps_alpha: None,
            eps_c: None,
            interval: None,
            global_budget: None,
            tau_rank: crate::matrix::DEFAULT_RANK_CUTOFF,
            seed: 0,
            baselines: Vec::new(),
            measure_alignment: true,
            external_partition: None,
            noise_support_tau: None,
        }
    }
}

/// Per-layer spectral analysis on the normalized spectral list.
#[derive(Debug, Clone)]
pub struct LayerAnalysis {
    pub label: String,
    pub d_sp: usize,
    /// Factor applied to reach `||W||_F^2 = d_sp`.
    pub normalization: f64,
    pub sigma: Vec<f64>,
    pub fit: CartanFit,
    pub rank: usize,
}

/// Dynamic-to-static bridge verdict for one interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeVerdict {
    pub rank_margin_lhs: f64,
    pub rank_margin: f64,
    pub rank_margin_ok: bool,
    /// `||Pi T Pi^T - (core + overlap)||_F`.
    pub projection_error: f64,
    /// `E_tr + ||noise||_F`.
    pub projection_bound: f64,
    pub projection_ok: bool,
    /// `E_tr < r_cert`.
    pub radius_condition: bool,
    /// Incidence equality of full-vs-truncated extraction, when the radius
    /// condition held.
    pub incidence_equal: Option<bool>,
    /// `sqrt(eps d)(||W_{k+1}||_2 + ||W_k||_2) + eps_noise` when an energy
    /// rank rule is in force.
    pub eps_window_bound: Option<f64>,
}

/// Everything measured at one interface.
#[derive(Debug, Clone)]
pub struct InterfaceAnalysis {
    pub index: usize,
    pub d: usize,
    pub budget: InterfaceBudget,
    /// Theorem displacement bound `B_k`.
    pub displacement_bound: f64,
    pub transfer: RankTransferVerdict,
    pub windows: (RankWindow, RankWindow),
    pub trunc: TruncationError,
    pub variant: TransportVariant,
    pub target_mode: TargetMode,
    pub row_coords: RowCoords,
    pub col_coords: ColCoords,
    /// The permuted alignment matrix and its structure, when measured.
    pub aligned: Option<AlignedInterface>,
    pub bridge: BridgeVerdict,
}

/// Alignment-dependent measurements for one interface.
#[derive(Debug, Clone)]
pub struct AlignedInterface {
    pub matrix: DMatrix<f64>,
    pub scale_free: DMatrix<f64>,
    pub structure: AlignmentStructure,
    pub margins: PairwiseMargins,
    pub core_norm: f64,
    pub overlap_norm: f64,
    pub noise_norm: f64,
    pub radius: StaticCertificateRadius,
    pub stability: StabilityVerdict,
    pub icm: IcmAnatomy,
    pub block_energy: BlockEnergyMatrix,
    pub block_energy_scale_free: BlockEnergyMatrix,
    pub bad: BadMassReport,
    pub screen: Option<MarginScreen>,
    pub alignment_residual: AlignmentResidual,
}

/// Quantitative alignment residual `J` and the membership it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResidual {
    pub zeta: f64,
    pub gamma0: f64,
    pub noise_term: f64,
    pub pair_term: f64,
    pub gap_term: f64,
    pub j_value: f64,
    pub eps_phys: f64,
    /// Implied `c_overlap = (1 - zeta + eps_phys/m_*)/3` when
    /// `eps_phys < zeta m_*`.
    pub implied_c_overlap: Option<f64>,
}

/// `J = ||noise||^2 + sum (3o - (1-z)m)_+^2 + sum (G0 - G_i)_+^2`.
pub fn alignment_residual(
    structure: &AlignmentStructure,
    margins: &PairwiseMargins,
    noise_norm: f64,
    zeta: f64,
    gamma0: f64,
) -> AlignmentResidual {
    let noise_term = noise_norm * noise_norm;
    let pair_term: f64 = margins
        .pairs
        .iter()
        .map(|p| {
            let v = (3.0 * p.o - (1.0 - zeta) * p.m).max(0.0);
            v * v
        })
        .sum();
    let gap_term: f64 = structure
        .gaps
        .iter()
        .map(|&g| {
            let v = (gamma0 - g).max(0.0);
            v * v
        })
        .sum();
    let j_value = noise_term + pair_term + gap_term;
    let eps_phys = j_value.sqrt();
    let m_star = margins.m_star();
    let implied_c_overlap = if m_star.is_finite() && m_star > 0.0 && eps_phys < zeta * m_star
    {
        Some((1.0 - zeta + eps_phys / m_star) / 3.0)
    } else {
        None
    };
    AlignmentResidual {
        zeta,
        gamma0,
        noise_term,
        pair_term,
        gap_term,
        j_value,
        eps_phys,
        implied_c_overlap,
    }
}

/// The three-part certificate residual with its theoretical bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsaResidual {
    pub d_spec: f64,
    pub d_noise: f64,
    pub d_pair: f64,
    pub total: f64,
    /// `(2/m_d) sum log lambda + 2(L-1) e_chart_max / m_d + (L-1) eps_noise`.
    pub bound: f64,
    pub bound_holds: bool,
    /// Per interface: (alpha step, noise norm, pairwise violation sum).
    pub per_interface: Vec<(f64, f64, f64)>,
}

pub fn gsa_residual(
    fits: &[CartanFit],
    budgets: &[InterfaceBudget],
    noise_norms: &[f64],
    interface_margins: &[&PairwiseMargins],
    d: usize,
    interval: ExponentInterval,
    eps_noise: f64,
) -> Result<GsaResidual> {
    let l = fits.len();
    if l < 2 || budgets.len() != l - 1 || noise_norms.len() != l - 1
        || interface_margins.len() != l - 1
    {
        return Err(GsaError::DimensionMismatch {
            context: "chain residual needs L fits and L-1 interface records".to_string(),
        });
    }
    let m_d = slope_min(d, interval);
    let e_chart_max = fits
        .iter()
        .map(|f| f.chart_error)
        .fold(0.0f64, f64::max);
    let mut d_spec = 0.0;
    let mut d_noise = 0.0;
    let mut d_pair = 0.0;
    let mut bound = 0.0;
    let mut per_interface = Vec::with_capacity(l - 1);
    for k in 0..l - 1 {
        let step = (fits[k + 1].alpha - fits[k].alpha).abs();
        let pairv: f64 = interface_margins[k]
            .nondegenerate()
            .map(|p| (3.0 * p.o - p.m).max(0.0))
            .sum();
        d_spec += step;
        d_noise += noise_norms[k];
        d_pair += pairv;
        bound += 2.0 * budgets[k].log_budget / m_d;
        per_interface.push((step, noise_norms[k], pairv));
    }
    bound += 2.0 * (l - 1) as f64 * e_chart_max / m_d + (l - 1) as f64 * eps_noise;
    let total = d_spec + d_noise + d_pair;
    Ok(GsaResidual {
        d_spec,
        d_noise,
        d_pair,
        total,
        bound,
        bound_holds: total <= bound,
        per_interface,
    })
}

/// Membership verdicts for the three domains and the complete margin
/// criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainVerdict {
    pub spectral_holds: bool,
    pub compressibility_holds: bool,
    pub physical_holds: bool,
    /// Conjunction of the three; false when anything was not measured.
    pub full_holds: bool,
    pub eps_alpha: f64,
    pub eps_c: f64,
    pub max_alpha_step: f64,
    pub max_log_c_step: f64,
    pub rho: f64,
    pub max_rank_fraction: f64,
    pub eps_noise: f64,
    pub max_noise_norm: Option<f64>,
    pub c_overlap: f64,
    pub max_overlap_ratio: Option<f64>,
    /// Externally supplied operator budget, recorded only.
    pub global_budget: Option<f64>,
    /// V1-V4 complete-margin components.
    pub rank_transfer_all_certified: bool,
    pub active_gaps_all_certified: bool,
    pub screens_all_certified: bool,
    pub residual_bound_holds: bool,
    pub complete_margin_holds: bool,
    /// Entries that could not be evaluated (empty when fully measured).
    pub not_measured: Vec<String>,
}

/// The whole chain analysis.
#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    pub protocol: ProtocolConfig,
    pub layers: Vec<LayerAnalysis>,
    pub interfaces: Vec<InterfaceAnalysis>,
    pub interval: ExponentInterval,
    /// Common spectral length used for chain-level bounds (minimum d_sp).
    pub d_common: usize,
    pub tv: TvBoundReport,
    pub residual: Option<GsaResidual>,
    pub domain: DomainVerdict,
}

/// Run the full measurement pipeline over a chain of layers.
pub fn analyze_chain(layers: &[LayerMatrix], protocol: &ProtocolConfig) -> Result<ChainAnalysis> {
    if layers.len() < 2 {
        return Err(GsaError::DimensionMismatch {
            context: format!("chain needs at least 2 layers, got {}", layers.len()),
        });
    }

    // Per-layer: normalize to ||W||_F^2 = d_sp, fit, rank window.
    let mut normalized = Vec::with_capacity(layers.len());
    let mut layer_analyses = Vec::with_capacity(layers.len());
    for w in layers {
        let svd0 = gauged_svd(w, protocol.tau_rank)?;
        let d_sp = svd0.spectral_len();
        if d_sp == 0 {
            return Err(GsaError::ZeroMatrix {
                label: w.label().to_string(),
            });
        }
        let (wn, factor) = w.normalized_to_energy(d_sp as f64);
        let sigma: Vec<f64> = svd0.spectral_values().iter().map(|s| s * factor).collect();
        let fit = fit_power_law(&sigma, FitRange::full(d_sp))?;
        let rank = match protocol.rank_rule {
            RankRule::Energy(eps) => effective_rank_empirical(&sigma, eps)?,
            RankRule::Fixed(r) => r.clamp(1, d_sp),
        };
        layer_analyses.push(LayerAnalysis {
            label: w.label().to_string(),
            d_sp,
            normalization: factor,
            sigma,
            fit,
            rank,
        });
        normalized.push(wn);
    }

    let d_common = layer_analyses.iter().map(|l| l.d_sp).min().unwrap();
    let interval = match protocol.interval {
        Some((lo, hi)) => ExponentInterval::new(lo, hi)?,
        None => {
            let amin = layer_analyses
                .iter()
                .map(|l| l.fit.alpha)
                .fold(f64::INFINITY, f64::min);
            let amax = layer_analyses
                .iter()
                .map(|l| l.fit.alpha)
                .fold(f64::NEG_INFINITY, f64::max);
            ExponentInterval::new((amin - 1e-6).max(1e-3), amax + 1e-6)?
        }
    };
    let m_d = slope_min(d_common, interval);

    // Per-interface analyses, independent across interfaces.
    use rayon::prelude::*;
    let interfaces: Vec<InterfaceAnalysis> = (0..normalized.len() - 1)
        .into_par_iter()
        .map(|k| {
            analyze_interface(k, &normalized, &layer_analyses, protocol, m_d)
        })
        .collect::<Result<Vec<_>>>()?;

    // Chain-level reports.
    let fits: Vec<CartanFit> = layer_analyses.iter().map(|l| l.fit.clone()).collect();
    let budgets: Vec<InterfaceBudget> = interfaces.iter().map(|i| i.budget).collect();
    let tv = cartan_tv_bound(&fits, &budgets, d_common, interval)?;

    let residual = if protocol.measure_alignment {
        let noise: Vec<f64> = interfaces
            .iter()
            .map(|i| i.aligned.as_ref().unwrap().noise_norm)
            .collect();
        let margin_refs: Vec<&PairwiseMargins> = interfaces
            .iter()
            .map(|i| &i.aligned.as_ref().unwrap().margins)
            .collect();
        Some(gsa_residual(
            &fits,
            &budgets,
            &noise,
            &margin_refs,
            d_common,
            interval,
            protocol.eps_noise,
        )?)
    } else {
        None
    };

    let domain = domain_membership(protocol, &layer_analyses, &interfaces, &tv, residual.as_ref());

    Ok(ChainAnalysis {
        protocol: protocol.clone(),
        layers: layer_analyses,
        interfaces,
        interval,
        d_common,
        tv,
        residual,
        domain,
    })
}

fn analyze_interface(
    k: usize,
    normalized: &[LayerMatrix],
    layer_analyses: &[LayerAnalysis],
    protocol: &ProtocolConfig,
    m_d: f64,
) -> Result<InterfaceAnalysis> {
    let la = &layer_analyses[k];
    let lb = &layer_analyses[k + 1];
    let budget = interface_budget(&normalized[k], &normalized[k + 1])?;
    let displacement_bound =
        (2.0 * budget.log_budget + la.fit.chart_error + lb.fit.chart_error) / m_d;
    let eps_for_transfer = match protocol.rank_rule {
        RankRule::Energy(e) => e,
        RankRule::Fixed(_) => 0.5,
    };
    let d_pair = la.d_sp.min(lb.d_sp);
    // Empirical rank-window route: the measured exponent displacement plus
    // both fitted-tail errors against the separation margin.
    let measured_displacement = (lb.fit.alpha - la.fit.alpha).abs();
    let transfer = rank_transfer_check(
        &la.fit,
        &lb.fit,
        &la.sigma,
        &lb.sigma,
        d_pair,
        eps_for_transfer,
        measured_displacement,
    )?;

    let ifc = Interface::with_cutoff(&normalized[k], &normalized[k + 1], k, protocol.tau_rank)?;
    let r_s = la.rank.min(ifc.source_svd().spectral_len());
    let r_t = lb.rank.min(ifc.target_svd().spectral_len());
    let w_s = ifc.window_from_rank(r_s, WindowSide::Source)?;
    let w_t = ifc.window_from_rank(r_t, WindowSide::Target)?;
    let trunc = truncation_error(&ifc, r_s, r_t, TruncationMode::SourceMode)?;

    let aligned = if protocol.measure_alignment {
        Some(analyze_alignment(&ifc, protocol, w_s, w_t, &trunc)?)
    } else {
        None
    };

    let bridge = bridge_check(
        &ifc,
        protocol,
        r_s,
        r_t,
        displacement_bound,
        &la.fit,
        &lb.fit,
        d_pair,
        eps_for_transfer,
        aligned.as_ref(),
    )?;

    let (row_coords, col_coords) = coord_types(protocol.transport_variant);
    Ok(InterfaceAnalysis {
        index: k,
        d: d_pair,
        budget,
        displacement_bound,
        transfer,
        windows: (w_s, w_t),
        trunc,
        variant: protocol.transport_variant,
        target_mode: protocol.target_mode,
        row_coords,
        col_coords,
        aligned,
        bridge,
    })
}

fn coord_types(variant: TransportVariant) -> (RowCoords, ColCoords) {
    match variant {
        TransportVariant::Ang
        | TransportVariant::Src
        | TransportVariant::Tgt
        | TransportVariant::Total => (RowCoords::LatentTargetModes, ColCoords::SourceModes),
        TransportVariant::OutAng | TransportVariant::Out | TransportVariant::OutTotal => {
            (RowCoords::PhysicalOutput, ColCoords::SourceModes)
        }
        TransportVariant::Phys => (RowCoords::PhysicalOutput, ColCoords::PhysicalInput),
    }
}

/// Row groups for the alignment step: the canonical mode-profile partition
/// for physical-row variants; one group per latent target mode otherwise.
/// Empty signal groups are dropped and the remainder re-indexed.
fn row_groups_for(
    ifc: &Interface,
    protocol: &ProtocolConfig,
    rows: usize,
    r_t: usize,
) -> Result<Vec<Vec<usize>>> {
    if let Some(declared) = &protocol.external_partition {
        return external_groups(declared, rows);
    }
    let physical_rows = matches!(
        coord_types(protocol.transport_variant).0,
        RowCoords::PhysicalOutput
    );
    let groups = if physical_rows {
        let mut y = ifc.target_svd().left_trunc(r_t);
        for j in 0..r_t {
            y.column_mut(j)
                .scale_mut(ifc.target_svd().singular_values()[j]);
        }
        mode_profile_partition(&y, protocol.theta_row, protocol.mu_row)?.groups
    } else {
        // Latent rows: mode r belongs to its own group.
        let mut g = vec![Vec::new()];
        for r in 0..rows {
            g.push(vec![r]);
        }
        g
    };
    let mut compact = vec![groups[0].clone()];
    for g in groups.into_iter().skip(1) {
        if !g.is_empty() {
            compact.push(g);
        }
    }
    Ok(compact)
}

/// Validate a declared partition against the row count: indices must be in
/// range and unassigned rows fall into the residual group.
fn external_groups(declared: &[Vec<usize>], rows: usize) -> Result<Vec<Vec<usize>>> {
    let mut seen = vec![false; rows];
    for group in declared {
        for &r in group {
            if r >= rows {
                return Err(GsaError::DimensionMismatch {
                    context: format!("partition assigns row {r} but the matrix has {rows} rows"),
                });
            }
            if seen[r] {
                return Err(GsaError::DimensionMismatch {
                    context: format!("partition assigns row {r} twice"),
                });
            }
            seen[r] = true;
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(declared.len());
    let mut residual: Vec<usize> = declared.first().cloned().unwrap_or_default();
    residual.extend((0..rows).filter(|&r| !seen[r]));
    residual.sort_unstable();
    out.push(residual);
    for group in declared.iter().skip(1) {
        if !group.is_empty() {
            let mut g = group.clone();
            g.sort_unstable();
            out.push(g);
        }
    }
    Ok(out)
}

fn support_spec_for(rule: SupportRule, k: usize) -> SupportSpec {
    match rule {
        SupportRule::EnergyFraction(f) => SupportSpec::EnergyFractions(vec![f; k]),
        SupportRule::UniformSize(s) => SupportSpec::Sizes(vec![s; k]),
    }
}

fn accepted_for(protocol: &ProtocolConfig, k: usize) -> AcceptedOverlap {
    if protocol.accepted_overlap.len() == k {
        AcceptedOverlap {
            neighbors: protocol.accepted_overlap.clone(),
        }
    } else {
        AcceptedOverlap::diagonal_only(k)
    }
}

/// Display permutations: signal groups first (residual rows last), columns
/// ordered by their strongest owning group, inactive columns last.
fn display_perms(
    a: &DMatrix<f64>,
    groups: &[Vec<usize>],
    sets: &[Vec<usize>],
) -> (Vec<usize>, Vec<usize>) {
    let k = groups.len() - 1;
    let mut row_perm = Vec::with_capacity(a.nrows());
    for g in 1..=k {
        row_perm.extend(groups[g].iter().copied());
    }
    row_perm.extend(groups[0].iter().copied());

    let score = |g: usize, c: usize| -> f64 {
        groups[g + 1].iter().map(|&r| a[(r, c)] * a[(r, c)]).sum()
    };
    let mut col_key: Vec<(usize, usize)> = Vec::with_capacity(a.ncols());
    for c in 0..a.ncols() {
        let owners: Vec<usize> = (0..k).filter(|&g| sets[g].contains(&c)).collect();
        let owner = owners
            .iter()
            .copied()
            .max_by(|&x, &y| {
                score(x, c)
                    .partial_cmp(&score(y, c))
                    .unwrap()
                    .then(y.cmp(&x))
            })
            .unwrap_or(k);
        col_key.push((owner, c));
    }
    col_key.sort_unstable();
    let col_perm: Vec<usize> = col_key.into_iter().map(|(_, c)| c).collect();
    (row_perm, col_perm)
}

fn permute(a: &DMatrix<f64>, row_perm: &[usize], col_perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(row_perm[r], col_perm[c])])
}

fn remap_structure(
    structure: &AlignmentStructure,
    row_perm: &[usize],
    col_perm: &[usize],
) -> AlignmentStructure {
    let mut row_inv = vec![0usize; row_perm.len()];
    for (new, &old) in row_perm.iter().enumerate() {
        row_inv[old] = new;
    }
    let mut col_inv = vec![0usize; col_perm.len()];
    for (new, &old) in col_perm.iter().enumerate() {
        col_inv[old] = new;
    }
    let map_rows = |v: &[usize]| {
        let mut out: Vec<usize> = v.iter().map(|&r| row_inv[r]).collect();
        out.sort_unstable();
        out
    };
    let map_cols = |v: &[usize]| {
        let mut out: Vec<usize> = v.iter().map(|&c| col_inv[c]).collect();
        out.sort_unstable();
        out
    };
    AlignmentStructure {
        row_groups: structure.row_groups.iter().map(|g| map_rows(g)).collect(),
        support_sizes: structure.support_sizes.clone(),
        active_sets: structure.active_sets.iter().map(|s| map_cols(s)).collect(),
        gaps: structure.gaps.clone(),
        row_perm: row_perm.to_vec(),
        col_perm: col_perm.to_vec(),
        theta_row: structure.theta_row,
        mu_row: structure.mu_row,
    }
}

fn analyze_alignment(
    ifc: &Interface,
    protocol: &ProtocolConfig,
    w_s: RankWindow,
    w_t: RankWindow,
    trunc: &TruncationError,
) -> Result<AlignedInterface> {
    let transport = build_transport(
        ifc,
        protocol.transport_variant,
        w_s,
        w_t,
        protocol.target_mode,
    )?;
    let scale_free_variant = match coord_types(protocol.transport_variant).0 {
        RowCoords::PhysicalOutput => TransportVariant::OutAng,
        RowCoords::LatentTargetModes => TransportVariant::Ang,
    };
    let scale_free =
        build_transport(ifc, scale_free_variant, w_s, w_t, protocol.target_mode)?;

    let a = transport.entries;
    let groups = row_groups_for(ifc, protocol, a.nrows(), w_t.rank)?;
    let k = groups.len() - 1;
    let support = support_spec_for(protocol.support_rule, k);
    let pre = AlignmentStructure::extract(
        &a,
        groups,
        &support,
        protocol.theta_row,
        protocol.mu_row,
    )?;
    let (row_perm, col_perm) = display_perms(&a, &pre.row_groups, &pre.active_sets);
    let matrix = permute(&a, &row_perm, &col_perm);
    let scale_free_m = permute(&scale_free.entries, &row_perm, &col_perm);
    let structure = remap_structure(&pre, &row_perm, &col_perm);

    let margins = pairwise_margins(&matrix, &structure);
    let con = decompose(&matrix, &structure);
    let radius = certificate_radius(&matrix, &structure, &margins);
    let stability = stability_check(&matrix, &structure, &margins, trunc.bound);
    let q = vec![
        protocol
            .q_core
            .min(structure.row_groups[1..].iter().map(|g| g.len()).min().unwrap_or(1));
        k
    ];
    let icm = icm_extract(
        &con,
        &structure,
        &q,
        protocol.tau_st,
        protocol.tau_sa,
        coord_types(protocol.transport_variant).1,
        protocol.noise_support_tau,
    )?;
    let accepted = accepted_for(protocol, k);
    let be = block_energy(&matrix, &structure.row_groups[1..], &structure.active_sets);
    let be_sf = block_energy(
        &scale_free_m,
        &structure.row_groups[1..],
        &structure.active_sets,
    );
    let bad = bad_mass(
        &matrix,
        &be,
        &structure.row_groups[1..],
        &structure.active_sets,
        &accepted,
    );
    let screenable: Vec<(usize, usize)> = margins
        .nondegenerate()
        .map(|p| (p.i, p.j))
        .collect();
    let screen = if screenable.is_empty() {
        None
    } else {
        Some(margin_screen(&be, &margins, &screenable)?)
    };
    let ares = alignment_residual(
        &structure,
        &margins,
        con.noise_norm,
        protocol.zeta,
        protocol.gamma0,
    );

    Ok(AlignedInterface {
        matrix,
        scale_free: scale_free_m,
        structure,
        margins,
        core_norm: con.core_norm,
        overlap_norm: con.overlap_norm,
        noise_norm: con.noise_norm,
        radius,
        stability,
        icm,
        block_energy: be,
        block_energy_scale_free: be_sf,
        bad,
        screen,
        alignment_residual: ares,
    })
}

/// Bridge check: the fitted-tail rank condition, the full-transport
/// realization inequality, and full-vs-truncated incidence equality under
/// the certificate radius.
#[allow(clippy::too_many_arguments)]
fn bridge_check(
    ifc: &Interface,
    protocol: &ProtocolConfig,
    r_s: usize,
    r_t: usize,
    displacement_bound: f64,
    fit_k: &CartanFit,
    fit_k1: &CartanFit,
    d: usize,
    eps: f64,
    aligned: Option<&AlignedInterface>,
) -> Result<BridgeVerdict> {
    let margins_at_alpha = rank_margins(d, fit_k.alpha, eps)?;
    let lhs = 2.0 * (d as f64).ln() * displacement_bound
        + fit_k.tail_error
        + fit_k1.tail_error;
    let rank_margin_ok = lhs < margins_at_alpha.margin;

    let (projection_error, projection_bound, projection_ok, radius_condition, incidence_equal) =
        if aligned.is_some() {
            // Full out-total transport in the same displayed coordinates.
            let mut us = ifc.source_svd().left().clone();
            for j in 0..ifc.source_svd().singular_values().len() {
                us.column_mut(j)
                    .scale_mut(ifc.source_svd().singular_values()[j]);
            }
            let t_full = ifc.target().data() * &us;
            let t_trunc = crate::block_energy::truncated_transport_embedded(ifc, r_s.max(r_t))?;
            // Structure was extracted on the protocol variant; the bridge
            // realization inequality is evaluated on the out-total pair with
            // a common window.
            let r = r_s.max(r_t);
            let tr_common = truncation_error(ifc, r, r, TruncationMode::SourceMode)?;
            let groups = row_groups_for(ifc, protocol, t_trunc.nrows(), r)?;
            let k = groups.len() - 1;
            let support = support_spec_for(protocol.support_rule, k);
            let pre = AlignmentStructure::extract(
                &t_trunc,
                groups,
                &support,
                protocol.theta_row,
                protocol.mu_row,
            )?;
            let (rp, cp) = display_perms(&t_trunc, &pre.row_groups, &pre.active_sets);
            let m_hat = permute(&t_trunc, &rp, &cp);
            let st = remap_structure(&pre, &rp, &cp);
            let con = decompose(&m_hat, &st);
            let full_perm = permute(&t_full, &rp, &cp);
            let proj_err = (&full_perm - (&con.core + &con.overlap)).norm();
            let proj_bound = tr_common.bound + con.noise_norm;
            let mar = pairwise_margins(&m_hat, &st);
            let rad = certificate_radius(&m_hat, &st, &mar);
            let radius_cond = tr_common.bound < rad.r_cert;
            let equal = if radius_cond {
                let st_full = st.reextract(&full_perm)?;
                Some(
                    static_incidence(&full_perm, &st_full)
                        == static_incidence(&m_hat, &st),
                )
            } else {
                None
            };
            (
                proj_err,
                proj_bound,
                proj_err <= proj_bound + 1e-9 * proj_bound.max(1.0),
                radius_cond,
                equal,
            )
        } else {
            (0.0, 0.0, true, false, None)
        };

    // E_{>R}(W) <= eps ||W||_F^2 = eps d_sp(W), so the larger of the two
    // spectral lengths gives a valid common budget.
    let eps_window_bound = match protocol.rank_rule {
        RankRule::Energy(e) => {
            let noise = aligned.map(|a| a.noise_norm).unwrap_or(0.0);
            let d_max = ifc
                .source_svd()
                .spectral_len()
                .max(ifc.target_svd().spectral_len());
            Some(
                (e * d_max as f64).sqrt()
                    * (ifc.target_svd().operator_norm() + ifc.source_svd().operator_norm())
                    + noise,
            )
        }
        RankRule::Fixed(_) => None,
    };

    Ok(BridgeVerdict {
        rank_margin_lhs: lhs,
        rank_margin: margins_at_alpha.margin,
        rank_margin_ok,
        projection_error,
        projection_bound,
        projection_ok,
        radius_condition,
        incidence_equal,
        eps_window_bound,
    })
}

fn domain_membership(
    protocol: &ProtocolConfig,
    layers: &[LayerAnalysis],
    interfaces: &[InterfaceAnalysis],
    tv: &TvBoundReport,
    residual: Option<&GsaResidual>,
) -> DomainVerdict {
    let mut not_measured = Vec::new();

    let max_alpha_step = interfaces
        .iter()
        .enumerate()
        .map(|(k, _)| (layers[k + 1].fit.alpha - layers[k].fit.alpha).abs())
        .fold(0.0f64, f64::max);
    let max_log_c_step = interfaces
        .iter()
        .enumerate()
        .map(|(k, _)| (layers[k + 1].fit.scale_c / layers[k].fit.scale_c).ln().abs())
        .fold(0.0f64, f64::max);
    // Tolerances default to the measured per-interface rigidity bounds.
    let eps_alpha = protocol.eps_alpha.unwrap_or_else(|| {
        interfaces
            .iter()
            .map(|i| i.displacement_bound)
            .fold(0.0f64, f64::max)
            .max(1e-12)
    });
    let eps_c = protocol.eps_c.unwrap_or(max_log_c_step.max(1e-12));
    let spectral_holds = max_alpha_step <= eps_alpha && max_log_c_step <= eps_c;

    let max_rank_fraction = layers
        .iter()
        .map(|l| l.rank as f64 / (protocol.rho * l.d_sp as f64).ceil().max(1.0))
        .fold(0.0f64, f64::max);
    let compressibility_holds = layers
        .iter()
        .all(|l| l.rank <= (protocol.rho * l.d_sp as f64).ceil() as usize);

    let measured = interfaces.iter().all(|i| i.aligned.is_some());
    let (physical_holds, max_noise_norm, max_overlap_ratio) = if measured {
        let max_noise = interfaces
            .iter()
            .map(|i| i.aligned.as_ref().unwrap().noise_norm)
            .fold(0.0f64, f64::max);
        let max_ratio = interfaces
            .iter()
            .flat_map(|i| i.aligned.as_ref().unwrap().margins.nondegenerate())
            .map(|p| p.o / p.m)
            .fold(0.0f64, f64::max);
        let rank_ok = interfaces.iter().all(|i| {
            let rd = i.windows.0.rank.max(i.windows.1.rank);
            rd <= (protocol.rho * i.d as f64).ceil() as usize
        });
        let holds = rank_ok
            && max_noise <= protocol.eps_noise
            && protocol.c_overlap < 1.0 / 3.0
            && interfaces.iter().all(|i| {
                i.aligned
                    .as_ref()
                    .unwrap()
                    .margins
                    .nondegenerate()
                    .all(|p| p.o <= protocol.c_overlap * p.m)
            });
        (holds, Some(max_noise), Some(max_ratio))
    } else {
        not_measured.push("alignment".to_string());
        (false, None, None)
    };

    let rank_transfer_all = interfaces.iter().all(|i| i.transfer.certified);
    let active_gaps_all = measured
        && interfaces.iter().all(|i| {
            i.aligned
                .as_ref()
                .unwrap()
                .stability
                .group_conditions
                .iter()
                .all(|&b| b)
        });
    let screens_all = measured
        && interfaces.iter().all(|i| {
            i.aligned
                .as_ref()
                .unwrap()
                .screen
                .as_ref()
                .map(|s| s.certified)
                .unwrap_or(true)
        });
    let residual_bound_holds = residual.map(|r| r.bound_holds).unwrap_or(false);
    if residual.is_none() {
        not_measured.push("certificate residual".to_string());
    }

    let full_holds = spectral_holds && compressibility_holds && physical_holds && measured;
    let complete_margin_holds = full_holds
        && tv.holds_robust
        && rank_transfer_all
        && active_gaps_all
        && screens_all
        && residual_bound_holds;

    DomainVerdict {
        spectral_holds,
        compressibility_holds,
        physical_holds,
        full_holds,
        eps_alpha,
        eps_c,
        max_alpha_step,
        max_log_c_step,
        rho: protocol.rho,
        max_rank_fraction,
        eps_noise: protocol.eps_noise,
        max_noise_norm,
        c_overlap: protocol.c_overlap,
        max_overlap_ratio,
        global_budget: protocol.global_budget,
        rank_transfer_all_certified: rank_transfer_all,
        active_gaps_all_certified: active_gaps_all,
        screens_all_certified: screens_all,
        residual_bound_holds,
        complete_margin_holds,
        not_measured,
    }
}

/// One same-grid view's persistence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCheck {
    pub eta: f64,
    pub active_gap_ok: bool,
    pub pairwise_ok: bool,
    pub certified: bool,
    /// Set-identity of re-extracted incidence, evaluated for every view.
    pub incidence_equal: bool,
    /// Entrywise block-energy bound from the perturbation lemma, when row
    /// energies admit it.
    pub block_energy_bound: Option<f64>,
}

/// Family-wise persistence verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyVerdict {
    pub views: Vec<ViewCheck>,
    /// All certified views re-extract identically.
    pub persistent: bool,
    /// Unnormalized coarse-vs-fine bad-mass checks for declared coarse views.
    pub coarse_monotone: Vec<bool>,
}

/// A coarse view: a compatible coarsening of one same-grid view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseViewSpec {
    pub view_index: usize,
    pub pi_r: Vec<usize>,
    pub pi_c: Vec<usize>,
    pub k_bar: usize,
}

/// Check family-wise persistence of the static structure across same-grid
/// views of the reference matrix, plus coarsening monotonicity for the
/// declared coarse views.
pub fn family_check(
    reference: &DMatrix<f64>,
    structure: &AlignmentStructure,
    views: &[DMatrix<f64>],
    coarse_views: &[CoarseViewSpec],
    e_min: f64,
) -> Result<FamilyVerdict> {
    let margins = pairwise_margins(reference, structure);
    let base_incidence = static_incidence(reference, structure);
    let fro = reference.norm();
    let mut checks = Vec::with_capacity(views.len());
    for (idx, v) in views.iter().enumerate() {
        if v.nrows() != reference.nrows() || v.ncols() != reference.ncols() {
            return Err(GsaError::GridMismatch {
                index: idx,
                got_rows: v.nrows(),
                got_cols: v.ncols(),
                want_rows: reference.nrows(),
                want_cols: reference.ncols(),
            });
        }
        let eta = (v - reference).norm();
        let omega = 2.0 * fro * eta + eta * eta;
        let active_gap_ok = structure.gaps.iter().all(|&g| g > 2.0 * omega);
        let pairwise_ok = margins
            .nondegenerate()
            .all(|p| 3.0 * p.o + 4.0 * eta < p.m);
        let s2 = structure.reextract(v)?;
        let incidence_equal = static_incidence(v, &s2) == base_incidence;
        let block_energy_bound = perturb_bound(
            reference,
            v,
            &structure.row_groups[1..],
            &structure.active_sets,
            e_min,
        )
        .ok()
        .map(|r| r.bound);
        checks.push(ViewCheck {
            eta,
            active_gap_ok,
            pairwise_ok,
            certified: active_gap_ok && pairwise_ok,
            incidence_equal,
            block_energy_bound,
        });
    }
    let persistent = checks
        .iter()
        .filter(|c| c.certified)
        .all(|c| c.incidence_equal);

    let mut coarse_monotone = Vec::new();
    for cv in coarse_views {
        let v = views
            .get(cv.view_index)
            .ok_or(GsaError::DimensionMismatch {
                context: format!("coarse view references view {}", cv.view_index),
            })?;
        let k = structure.num_groups();
        // Coarsening requires disjoint measurement bins: use the dedicated
        // parts of the active sets.
        let con = decompose(v, structure);
        let e = block_energy(v, &structure.row_groups[1..], &con.dedicated);
        let accepted = AcceptedOverlap::diagonal_only(k);
        let res = coarsen(&e, &cv.pi_r, &cv.pi_c, cv.k_bar, &con.dedicated, &accepted)?;
        coarse_monotone.push(res.k2_holds);
    }

    Ok(FamilyVerdict {
        views: checks,
        persistent,
        coarse_monotone,
    })
}

/// Generate a null-control chain matched to the input layers.
pub fn baseline_chain(
    layers: &[LayerMatrix],
    kind: BaselineKind,
    seed: u64,
) -> Result<Vec<LayerMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let mut out = Vec::with_capacity(layers.len());
    for w in layers {
        let label = format!("{}::{}", w.label(), kind.name());
        let data = match kind {
            BaselineKind::Gaussian => {
                use rand_distr::StandardNormal;
                use rand::Rng;
                DMatrix::from_fn(w.rows(), w.cols(), |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                })
            }
            BaselineKind::SpectrumPreserving => {
                let svd = crate::matrix::gauged_svd_default(w)?;
                let d = w.rows().max(w.cols());
                let q = seeded_orthogonal(d, &mut rng);
                let p = seeded_orthogonal(d, &mut rng);
                let r = svd.singular_values().len();
                let mut qs = q.columns(0, r).into_owned();
                for j in 0..r {
                    qs.column_mut(j).scale_mut(svd.singular_values()[j]);
                }
                let full = qs * p.columns(0, r).transpose();
                full.view((0, 0), (w.rows(), w.cols())).into_owned()
            }
            BaselineKind::Permuted => {
                let mut rows: Vec<usize> = (0..w.rows()).collect();
                let mut cols: Vec<usize> = (0..w.cols()).collect();
                rows.shuffle(&mut rng);
                cols.shuffle(&mut rng);
                DMatrix::from_fn(w.rows(), w.cols(), |r, c| w.data()[(rows[r], cols[c])])
            }
        };
        out.push(LayerMatrix::from_matrix(data, label)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Report records (serialization-friendly scalars only).
// ---------------------------------------------------------------------------

fn finite_or_none(x: f64) -> Option<f64> {
    if x.is_finite() {
        Some(x)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub label: String,
    pub d_sp: usize,
    pub normalization_factor: f64,
    pub alpha: f64,
    pub scale_c: f64,
    pub delta_pl: f64,
    pub chart_error: f64,
    pub tail_error: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceReport {
    pub index: usize,
    pub d: usize,
    pub lambda: f64,
    pub log_budget: f64,
    pub non_backtracking: bool,
    pub rank_source: usize,
    pub rank_target: usize,
    pub ranks_agree: bool,
    pub transfer_certified: bool,
    pub transfer_lhs: f64,
    pub transfer_margin: f64,
    pub trunc_bound: f64,
    pub trunc_measured: f64,
    pub variant: TransportVariant,
    pub target_mode: TargetMode,
    pub row_coords: RowCoords,
    pub col_coords: ColCoords,
    pub groups: Option<usize>,
    pub min_gap: Option<f64>,
    pub max_overlap_ratio: Option<f64>,
    pub h_max: Option<f64>,
    pub noise_norm: Option<f64>,
    pub noise_fraction: Option<f64>,
    pub r_cert: Option<f64>,
    pub stability_certified: Option<bool>,
    pub alignment_residual_j: Option<f64>,
    pub bad_mass_normalized: Option<f64>,
    pub hub_count: Option<usize>,
    pub bridge_rank_margin_ok: bool,
    pub bridge_projection_ok: bool,
    pub bridge_radius_condition: bool,
    pub bridge_incidence_equal: Option<bool>,
    pub not_measured: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub kind: BaselineKind,
    pub full_holds: bool,
    pub physical_holds: bool,
    pub spectral_holds: bool,
    pub compressibility_holds: bool,
    pub min_pair_slack: Option<f64>,
    pub max_overlap_ratio: Option<f64>,
    pub max_noise_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub schema_version: u32,
    pub protocol: ProtocolConfig,
    pub normalization: String,
    pub layers: Vec<LayerReport>,
    pub interfaces: Vec<InterfaceReport>,
    pub tv_measured: f64,
    pub tv_exact_bound: f64,
    pub tv_robust_bound: f64,
    pub tv_applicable: bool,
    pub tv_holds_robust: bool,
    pub residual: Option<GsaResidual>,
    pub domain: DomainVerdict,
    pub baselines: Vec<BaselineReport>,
}

/// Assemble the report record from a chain analysis and baseline runs.
pub fn emit_report(
    analysis: &ChainAnalysis,
    baselines: &[(BaselineKind, ChainAnalysis)],
) -> CertificateReport {
    let layers = analysis
        .layers
        .iter()
        .map(|l| LayerReport {
            label: l.label.clone(),
            d_sp: l.d_sp,
            normalization_factor: l.normalization,
            alpha: l.fit.alpha,
            scale_c: l.fit.scale_c,
            delta_pl: l.fit.delta_pl,
            chart_error: l.fit.chart_error,
            tail_error: l.fit.tail_error,
            rank: l.rank,
        })
        .collect();
    let interfaces = analysis
        .interfaces
        .iter()
        .map(|i| {
            let al = i.aligned.as_ref();
            let mut not_measured = Vec::new();
            if al.is_none() {
                not_measured.push("alignment".to_string());
            }
            InterfaceReport {
                index: i.index,
                d: i.d,
                lambda: i.budget.lambda,
                log_budget: i.budget.log_budget,
                non_backtracking: i.budget.non_backtracking,
                rank_source: i.windows.0.rank,
                rank_target: i.windows.1.rank,
                ranks_agree: i.transfer.ranks_agree,
                transfer_certified: i.transfer.certified,
                transfer_lhs: i.transfer.lhs,
                transfer_margin: i.transfer.margin,
                trunc_bound: i.trunc.bound,
                trunc_measured: i.trunc.measured,
                variant: i.variant,
                target_mode: i.target_mode,
                row_coords: i.row_coords,
                col_coords: i.col_coords,
                groups: al.map(|a| a.structure.num_groups()),
                min_gap: al.and_then(|a| {
                    finite_or_none(a.structure.gaps.iter().copied().fold(f64::INFINITY, f64::min))
                }),
                max_overlap_ratio: al.and_then(|a| {
                    let v = a
                        .margins
                        .nondegenerate()
                        .map(|p| p.o / p.m)
                        .fold(f64::NEG_INFINITY, f64::max);
                    finite_or_none(v)
                }),
                h_max: al.and_then(|a| a.screen.as_ref().map(|s| s.h_max)),
                noise_norm: al.map(|a| a.noise_norm),
                noise_fraction: al.map(|a| {
                    let total = a.matrix.norm();
                    if total > 0.0 {
                        a.noise_norm / total
                    } else {
                        0.0
                    }
                }),
                r_cert: al.and_then(|a| finite_or_none(a.radius.r_cert)),
                stability_certified: al.map(|a| a.stability.certified),
                alignment_residual_j: al.map(|a| a.alignment_residual.j_value),
                bad_mass_normalized: al.map(|a| a.bad.normalized),
                hub_count: al.map(|a| a.icm.hubs.len()),
                bridge_rank_margin_ok: i.bridge.rank_margin_ok,
                bridge_projection_ok: i.bridge.projection_ok,
                bridge_radius_condition: i.bridge.radius_condition,
                bridge_incidence_equal: i.bridge.incidence_equal,
                not_measured,
            }
        })
        .collect();
    let baselines = baselines
        .iter()
        .map(|(kind, b)| {
            let min_slack = b
                .interfaces
                .iter()
                .filter_map(|i| i.aligned.as_ref())
                .flat_map(|a| a.margins.nondegenerate())
                .map(|p| p.slack)
                .fold(f64::INFINITY, f64::min);
            BaselineReport {
                kind: *kind,
                full_holds: b.domain.full_holds,
                physical_holds: b.domain.physical_holds,
                spectral_holds: b.domain.spectral_holds,
                compressibility_holds: b.domain.compressibility_holds,
                min_pair_slack: finite_or_none(min_slack),
                max_overlap_ratio: b.domain.max_overlap_ratio,
                max_noise_fraction: b.domain.max_noise_norm,
            }
        })
        .collect();
    CertificateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        protocol: analysis.protocol.clone(),
        normalization: "per-layer Frobenius energy = d_sp".to_string(),
        layers,
        interfaces,
        tv_measured: analysis.tv.measured_tv,
        tv_exact_bound: analysis.tv.exact_bound,
        tv_robust_bound: analysis.tv.robust_bound,
        tv_applicable: analysis.tv.applicable,
        tv_holds_robust: analysis.tv.holds_robust,
        residual: analysis.residual.clone(),
        domain: analysis.domain.clone(),
        baselines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_power_law_chain, SynthChainSpec};

    fn synth_protocol() -> ProtocolConfig {
        ProtocolConfig {
            rank_rule: RankRule::Energy(0.25),
            support_rule: SupportRule::EnergyFraction(0.8),
            theta_row: 1e-6,
            eps_noise: 10.0,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn analyze_constant_alpha_chain() {
        let spec = SynthChainSpec::new(24, vec![1.1, 1.1, 1.1], 3);
        let chain = gen_power_law_chain(&spec).unwrap();
        let analysis = analyze_chain(&chain, &synth_protocol()).unwrap();
        assert_eq!(analysis.layers.len(), 3);
        assert_eq!(analysis.interfaces.len(), 2);
        // D_spec ~ 0 on a constant-exponent chain; pair violations absent.
        let res = analysis.residual.as_ref().unwrap();
        assert!(res.d_spec < 1e-9, "d_spec = {}", res.d_spec);
        assert_eq!(res.d_pair, 0.0);
        // Spectral windows transfer on identical spectra.
        for i in &analysis.interfaces {
            assert!(i.transfer.ranks_agree);
            assert!(i.trunc.measured <= i.trunc.bound + 1e-9);
        }
    }

    #[test]
    fn constructed_pair_violation_contributes() {
        // Direct check of the residual accounting: m = 1, o = 0.4.
        let m = DMatrix::from_row_slice(
            2,
            3,
            &[
                1.0, 0.0, 0.4, //
                0.0, 1.0, 0.4,
            ],
        );
        let s = AlignmentStructure {
            row_groups: vec![vec![], vec![0], vec![1]],
            support_sizes: vec![2, 2],
            active_sets: vec![vec![0, 2], vec![1, 2]],
            gaps: vec![0.5, 0.5],
            row_perm: vec![0, 1],
            col_perm: vec![0, 1, 2],
            theta_row: 0.0,
            mu_row: 0.0,
        };
        let pw = pairwise_margins(&m, &s);
        let p = pw.pair(0, 1).unwrap();
        assert!((p.m - 1.0).abs() < 1e-12);
        assert!((p.o - 0.4 * 2.0f64.sqrt()).abs() < 1e-12); // col [0.4, 0.4]
        let violation: f64 = pw
            .nondegenerate()
            .map(|p| (3.0 * p.o - p.m).max(0.0))
            .sum();
        assert!((violation - (3.0 * p.o - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn alignment_residual_components() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = AlignmentStructure {
            row_groups: vec![vec![], vec![0], vec![1]],
            support_sizes: vec![1, 1],
            active_sets: vec![vec![0], vec![1]],
            gaps: vec![1.0, 1.0],
            row_perm: vec![0, 1],
            col_perm: vec![0, 1],
            theta_row: 0.0,
            mu_row: 0.0,
        };
        let pw = pairwise_margins(&m, &s);
        // Fully satisfied structure with slack: J = 0.
        let r0 = alignment_residual(&s, &pw, 0.0, 0.5, 0.5);
        assert_eq!(r0.j_value, 0.0);
        assert!(r0.implied_c_overlap.is_some());
        assert!(r0.implied_c_overlap.unwrap() < 1.0 / 3.0);
        // Gap shortfall of 0.1 contributes 0.01.
        let mut s2 = s.clone();
        s2.gaps = vec![1.0, 0.9];
        let r1 = alignment_residual(&s2, &pw, 0.0, 0.5, 1.0);
        assert!((r1.gap_term - 0.01).abs() < 1e-12);
        // eps_phys = 0.5 zeta m_* implies c_overlap = (1 - zeta/2)/3 < 1/3.
        let zeta = 0.5;
        let eps_phys = 0.5 * zeta * 1.0;
        let c = (1.0 - zeta + eps_phys / 1.0) / 3.0;
        assert!(c < 1.0 / 3.0);
    }

    #[test]
    fn report_emission_and_not_measured() {
        let spec = SynthChainSpec::new(16, vec![1.0, 1.05], 9);
        let chain = gen_power_law_chain(&spec).unwrap();
        let mut protocol = synth_protocol();
        let analysis = analyze_chain(&chain, &protocol).unwrap();
        let report = emit_report(&analysis, &[]);
        assert_eq!(report.layers.len(), 2);
        assert!(report.interfaces[0].noise_norm.is_some());
        assert!(report.interfaces[0].not_measured.is_empty());

        protocol.measure_alignment = false;
        let partial = analyze_chain(&chain, &protocol).unwrap();
        let report2 = emit_report(&partial, &[]);
        assert!(report2.interfaces[0].noise_norm.is_none());
        assert_eq!(report2.interfaces[0].not_measured, vec!["alignment"]);
        assert!(!partial.domain.full_holds);
        assert!(!partial.domain.not_measured.is_empty());
    }

    #[test]
    fn baselines_generate_and_analyze() {
        let spec = SynthChainSpec::new(16, vec![1.0, 1.1], 4);
        let chain = gen_power_law_chain(&spec).unwrap();
        for kind in [
            BaselineKind::Gaussian,
            BaselineKind::SpectrumPreserving,
            BaselineKind::Permuted,
        ] {
            let base = baseline_chain(&chain, kind, 7).unwrap();
            assert_eq!(base.len(), 2);
            // Deterministic for a fixed seed.
            let again = baseline_chain(&chain, kind, 7).unwrap();
            assert_eq!(base[0].data(), again[0].data());
            // Spectrum-preserving baselines keep the singular values.
            if kind == BaselineKind::SpectrumPreserving {
                let s0 = crate::matrix::gauged_svd_default(&chain[0]).unwrap();
                let s1 = crate::matrix::gauged_svd_default(&base[0]).unwrap();
                for (a, b) in s0
                    .singular_values()
                    .iter()
                    .zip(s1.singular_values().iter())
                {
                    assert!((a - b).abs() < 1e-8 * a.max(1.0));
                }
            }
            let analysis = analyze_chain(&base, &synth_protocol()).unwrap();
            let _ = emit_report(&analysis, &[]);
        }
    }

    #[test]
    fn family_check_trivial_and_perturbed() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.0, 0.0, 0.0, //
                0.0, 2.0, 0.0, 0.0, //
                0.0, 0.0, 3.0, 0.0, //
                0.0, 0.0, 0.0, 3.0,
            ],
        );
        let s = AlignmentStructure::extract(
            &m,
            vec![vec![], vec![0, 1], vec![2, 3]],
            &SupportSpec::Sizes(vec![2, 2]),
            0.0,
            0.0,
        )
        .unwrap();
        // Family of one: trivially persistent.
        let v = family_check(&m, &s, std::slice::from_ref(&m), &[], 1e-6).unwrap();
        assert!(v.persistent);
        assert!(v.views[0].certified && v.views[0].incidence_equal);

        // A small perturbation below the margins stays persistent.
        let mut m2 = m.clone();
        m2[(0, 2)] = 0.01;
        let v2 = family_check(&m, &s, &[m2], &[], 1e-6).unwrap();
        assert!(v2.views[0].certified);
        assert!(v2.persistent);

        // A large perturbation is flagged, excluded from persistence.
        let mut m3 = m.clone();
        m3[(0, 2)] = 10.0;
        let v3 = family_check(&m, &s, &[m3], &[], 1e-6).unwrap();
        assert!(!v3.views[0].certified);
        assert!(v3.persistent); // no certified view contradicts

        // Grid mismatch without a map errors.
        let bad = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(
            family_check(&m, &s, &[bad], &[], 1e-6),
            Err(GsaError::GridMismatch { .. })
        ));
    }

    use crate::alignment::pairwise_margins;
}
