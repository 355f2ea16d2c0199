//! Interface transport matrices: angular, energy-weighted, output-realized,
//! and fully physical variants, together with the dominant-window truncation
//! error bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::matrix::{
    embed_to, gauged_svd, GaugedSvd, LayerMatrix, RankWindow, WindowSide,
    DEFAULT_RANK_CUTOFF,
};
use crate::orbit::effective_rank_empirical;

/// The eight transport variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportVariant {
    /// `(V_{k+1}^{(Rt)})^T U_k^{(Rs)}` — latent angular overlap.
    Ang,
    /// `(V_{k+1}^{(Rt)})^T U_k^{(Rs)} S_k^{(Rs)}` — source-weighted.
    Src,
    /// `S_{k+1}^{(Rt)} (V_{k+1}^{(Rt)})^T U_k^{(Rs)}` — target-weighted.
    Tgt,
    /// `S_{k+1}^{(Rt)} (V_{k+1}^{(Rt)})^T U_k^{(Rs)} S_k^{(Rs)}`.
    Total,
    /// `U_{k+1}^{(Rt)} (V_{k+1}^{(Rt)})^T U_k^{(Rs)}` — scale-free, output rows.
    OutAng,
    /// `W_{k+1} U_k^{(Rs)}` (full-row) or `W_{k+1}^{[Rt]} U_k^{(Rs)}`.
    Out,
    /// `Out` right-multiplied by `S_k^{(Rs)}`.
    OutTotal,
    /// `W_{k+1}^{[Rt]} U_k^{(Rs)} S_k^{(Rs)} (V_k^{(Rs)})^T` — physical rows
    /// and physical input columns.
    Phys,
}

impl TransportVariant {
    pub fn all() -> [TransportVariant; 8] {
        use TransportVariant::*;
        [Ang, Src, Tgt, Total, OutAng, Out, OutTotal, Phys]
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransportVariant::Ang => "ang",
            TransportVariant::Src => "src",
            TransportVariant::Tgt => "tgt",
            TransportVariant::Total => "total",
            TransportVariant::OutAng => "out_ang",
            TransportVariant::Out => "out",
            TransportVariant::OutTotal => "out_total",
            TransportVariant::Phys => "phys",
        }
    }
}

/// Whether the target side keeps all rows of `W_{k+1}` or its rank-`Rt`
/// truncation. Only `Out`, `OutTotal`, and `Phys` distinguish the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    FullRow,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowCoords {
    LatentTargetModes,
    PhysicalOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColCoords {
    SourceModes,
    PhysicalInput,
}

/// A constructed transport matrix plus its coordinate-type metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    pub entries: DMatrix<f64>,
    pub variant: TransportVariant,
    pub target_mode: TargetMode,
    pub row_coords: RowCoords,
    pub col_coords: ColCoords,
    pub window_source: RankWindow,
    pub window_target: RankWindow,
    pub interface_index: usize,
    /// `E_{>Rt}(W_{k+1})^{1/2}`, logged when the full-row form is used.
    pub target_tail_residual: Option<f64>,
}

/// One interface: both layers square-embedded to a common dimension with
/// gauge-fixed SVDs.
#[derive(Debug, Clone)]
pub struct Interface {
    source: LayerMatrix,
    target: LayerMatrix,
    source_svd: GaugedSvd,
    target_svd: GaugedSvd,
    dim: usize,
    index: usize,
}

impl Interface {
    pub fn new(w_k: &LayerMatrix, w_k1: &LayerMatrix, index: usize) -> Result<Self> {
        Self::with_cutoff(w_k, w_k1, index, DEFAULT_RANK_CUTOFF)
    }

    pub fn with_cutoff(
        w_k: &LayerMatrix,
        w_k1: &LayerMatrix,
        index: usize,
        tau_rank: f64,
    ) -> Result<Self> {
        let dim = w_k
            .rows()
            .max(w_k.cols())
            .max(w_k1.rows())
            .max(w_k1.cols());
        let source = embed_to(w_k, dim);
        let target = embed_to(w_k1, dim);
        let source_svd = gauged_svd(&source, tau_rank)?;
        let target_svd = gauged_svd(&target, tau_rank)?;
        Ok(Self {
            source,
            target,
            source_svd,
            target_svd,
            dim,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn source(&self) -> &LayerMatrix {
        &self.source
    }

    pub fn target(&self) -> &LayerMatrix {
        &self.target
    }

    pub fn source_svd(&self) -> &GaugedSvd {
        &self.source_svd
    }

    pub fn target_svd(&self) -> &GaugedSvd {
        &self.target_svd
    }

    /// Energy window on one side: smallest rank keeping a `1 - eps` fraction.
    pub fn window_from_energy(&self, eps: f64, side: WindowSide) -> Result<RankWindow> {
        let svd = match side {
            WindowSide::Source => &self.source_svd,
            WindowSide::Target => &self.target_svd,
        };
        if svd.spectral_len() == 0 {
            return Err(GsaError::ZeroMatrix {
                label: "window side".to_string(),
            });
        }
        let rank = effective_rank_empirical(svd.spectral_values(), eps)?;
        Ok(RankWindow {
            rank,
            energy_threshold: eps,
            side,
        })
    }

    pub fn window_from_rank(&self, rank: usize, side: WindowSide) -> Result<RankWindow> {
        let svd = match side {
            WindowSide::Source => &self.source_svd,
            WindowSide::Target => &self.target_svd,
        };
        if rank == 0 || rank > svd.spectral_len() {
            return Err(GsaError::RankOutOfRange {
                r: rank,
                d: svd.spectral_len(),
            });
        }
        let total: f64 = svd.singular_values().iter().map(|s| s * s).sum();
        let tail: f64 = svd.singular_values()[rank..].iter().map(|s| s * s).sum();
        Ok(RankWindow {
            rank,
            energy_threshold: if total > 0.0 { tail / total } else { 0.0 },
            side,
        })
    }

    fn check_windows(&self, r_s: usize, r_t: usize) -> Result<()> {
        if r_s == 0 || r_s > self.source_svd.spectral_len() {
            return Err(GsaError::RankOutOfRange {
                r: r_s,
                d: self.source_svd.spectral_len(),
            });
        }
        if r_t == 0 || r_t > self.target_svd.spectral_len() {
            return Err(GsaError::RankOutOfRange {
                r: r_t,
                d: self.target_svd.spectral_len(),
            });
        }
        Ok(())
    }

    /// Rank-`r` truncation of the target layer, `W_{k+1}^{[Rt]}`.
    fn target_truncated(&self, r_t: usize) -> DMatrix<f64> {
        let mut scaled = self.target_svd.left_trunc(r_t);
        for j in 0..r_t {
            scaled
                .column_mut(j)
                .scale_mut(self.target_svd.singular_values()[j]);
        }
        scaled * self.target_svd.right_trunc(r_t).transpose()
    }
}

/// Construct one transport variant on the given windows.
pub fn build_transport(
    ifc: &Interface,
    variant: TransportVariant,
    window_source: RankWindow,
    window_target: RankWindow,
    target_mode: TargetMode,
) -> Result<TransportMatrix> {
    let r_s = window_source.rank;
    let r_t = window_target.rank;
    ifc.check_windows(r_s, r_t)?;

    let u_k = ifc.source_svd.left_trunc(r_s);
    let v_k = ifc.source_svd.right_trunc(r_s);
    let s_k = ifc.source_svd.sigma_trunc(r_s);
    let u_k1 = ifc.target_svd.left_trunc(r_t);
    let v_k1 = ifc.target_svd.right_trunc(r_t);
    let s_k1 = ifc.target_svd.sigma_trunc(r_t);

    let ang = v_k1.transpose() * &u_k;

    let (entries, row_coords, col_coords) = match variant {
        TransportVariant::Ang => (ang, RowCoords::LatentTargetModes, ColCoords::SourceModes),
        TransportVariant::Src => (
            &ang * &s_k,
            RowCoords::LatentTargetModes,
            ColCoords::SourceModes,
        ),
        TransportVariant::Tgt => (
            &s_k1 * &ang,
            RowCoords::LatentTargetModes,
            ColCoords::SourceModes,
        ),
        TransportVariant::Total => (
            &s_k1 * &ang * &s_k,
            RowCoords::LatentTargetModes,
            ColCoords::SourceModes,
        ),
        TransportVariant::OutAng => (
            &u_k1 * &ang,
            RowCoords::PhysicalOutput,
            ColCoords::SourceModes,
        ),
        TransportVariant::Out => {
            let m = match target_mode {
                TargetMode::FullRow => ifc.target.data() * &u_k,
                TargetMode::Truncated => ifc.target_truncated(r_t) * &u_k,
            };
            (m, RowCoords::PhysicalOutput, ColCoords::SourceModes)
        }
        TransportVariant::OutTotal => {
            let m = match target_mode {
                TargetMode::FullRow => ifc.target.data() * &u_k * &s_k,
                TargetMode::Truncated => ifc.target_truncated(r_t) * &u_k * &s_k,
            };
            (m, RowCoords::PhysicalOutput, ColCoords::SourceModes)
        }
        TransportVariant::Phys => {
            let core = &u_k * &s_k * v_k.transpose();
            let m = match target_mode {
                TargetMode::FullRow => ifc.target.data() * core,
                TargetMode::Truncated => ifc.target_truncated(r_t) * core,
            };
            (m, RowCoords::PhysicalOutput, ColCoords::PhysicalInput)
        }
    };

    let target_tail_residual = match (variant, target_mode) {
        (
            TransportVariant::Out | TransportVariant::OutTotal | TransportVariant::Phys,
            TargetMode::FullRow,
        ) => Some(crate::matrix::tail_energy(&ifc.target_svd, r_t)?.sqrt()),
        _ => None,
    };

    Ok(TransportMatrix {
        entries,
        variant,
        target_mode,
        row_coords,
        col_coords,
        window_source,
        window_target,
        interface_index: ifc.index,
        target_tail_residual,
    })
}

/// Which full transport the truncation is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// `T = W_{k+1} U_k S_k` with source singular-coordinate columns.
    SourceMode,
    /// `T_phys = W_{k+1} W_k` with physical input columns.
    Physical,
}

/// Measured truncation error against its theoretical bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationError {
    pub bound: f64,
    pub measured: f64,
    pub r_s: usize,
    pub r_t: usize,
    pub mode: TruncationMode,
}

/// `E_tr(Rs, Rt) = ||W_{k+1}||_2 E_{>Rs}(W_k)^{1/2} + ||W_k||_2 E_{>Rt}(W_{k+1})^{1/2}`.
pub fn truncation_bound(ifc: &Interface, r_s: usize, r_t: usize) -> Result<f64> {
    ifc.check_windows(r_s, r_t)?;
    let tail_s = crate::matrix::tail_energy(&ifc.source_svd, r_s)?;
    let tail_t = crate::matrix::tail_energy(&ifc.target_svd, r_t)?;
    Ok(ifc.target_svd.operator_norm() * tail_s.sqrt()
        + ifc.source_svd.operator_norm() * tail_t.sqrt())
}

/// Full-vs-truncated transport distance. In physical mode the measured value
/// equals the source-mode value by orthogonal invariance of the right factor;
/// the identity is asserted.
pub fn truncation_error(
    ifc: &Interface,
    r_s: usize,
    r_t: usize,
    mode: TruncationMode,
) -> Result<TruncationError> {
    let bound = truncation_bound(ifc, r_s, r_t)?;
    let d = ifc.dim;

    let u_k = ifc.source_svd.left();
    let mut us = u_k.clone();
    for j in 0..ifc.source_svd.singular_values().len() {
        us.column_mut(j)
            .scale_mut(ifc.source_svd.singular_values()[j]);
    }
    let t_full = ifc.target.data() * &us;

    let u_k_rs = ifc.source_svd.left_trunc(r_s);
    let s_k_rs = ifc.source_svd.sigma_trunc(r_s);
    let w_t_trunc = ifc.target_truncated(r_t);
    let t_trunc_small = &w_t_trunc * &u_k_rs * &s_k_rs;
    let mut t_trunc = DMatrix::zeros(d, d);
    t_trunc.view_mut((0, 0), (d, r_s)).copy_from(&t_trunc_small);

    let measured_source = (&t_full - &t_trunc).norm();

    let measured = match mode {
        TruncationMode::SourceMode => measured_source,
        TruncationMode::Physical => {
            let t_phys = ifc.target.data() * ifc.source.data();
            let v_k_rs = ifc.source_svd.right_trunc(r_s);
            let t_phys_trunc = &w_t_trunc * &u_k_rs * &s_k_rs * v_k_rs.transpose();
            let measured_phys = (&t_phys - &t_phys_trunc).norm();
            let scale = measured_phys.abs().max(1.0);
            assert!(
                (measured_phys - measured_source).abs() <= 1e-10 * scale,
                "orthogonal invariance violated: {measured_phys} vs {measured_source}"
            );
            measured_phys
        }
    };

    Ok(TruncationError {
        bound,
        measured,
        r_s,
        r_t,
        mode,
    })
}
