//! Power-law orbit fitting and the spectral-tail machinery: harmonic sums,
//! radial coordinates, interface amplification budgets, total-variation
//! rigidity bounds, tail measures, effective ranks, and rank-window transfer
//! checks.

use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::matrix::LayerMatrix;

/// Compensated (Kahan) sum.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in iter {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Harmonic sum `H_{d,s} = sum_{i=1}^d i^{-s}`, with `H_{0,s} = 0`.
pub fn harmonic_sum(d: usize, s: f64) -> f64 {
    kahan_sum((1..=d).map(|i| (i as f64).powf(-s)))
}

/// Harmonic sum that errors on `d = 0`, matching the operation contract.
pub fn harmonic_sum_checked(d: usize, s: f64) -> Result<f64> {
    if d == 0 {
        return Err(GsaError::ParamOutOfRange {
            name: "d",
            value: 0.0,
            range: "d >= 1",
        });
    }
    Ok(harmonic_sum(d, s))
}

/// Radial coordinate `g_d(alpha) = log sqrt(d / H_{d,2a})`.
pub fn radial_coordinate(d: usize, alpha: f64) -> f64 {
    0.5 * ((d as f64) / harmonic_sum(d, 2.0 * alpha)).ln()
}

/// Derivative `g_d'(alpha) = sum (log i) i^{-2a} / H_{d,2a}`: the Gibbs mean
/// of `log i`, positive for `d >= 2`.
pub fn slope(d: usize, alpha: f64) -> f64 {
    let h = harmonic_sum(d, 2.0 * alpha);
    kahan_sum((1..=d).map(|i| (i as f64).ln() * (i as f64).powf(-2.0 * alpha))) / h
}

/// A compact exponent interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ExponentInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(GsaError::DegenerateInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, alpha: f64) -> bool {
        alpha >= self.lo && alpha <= self.hi
    }
}

/// `m_d(I) = min_{alpha in I} g_d'(alpha)`. The Gibbs mean of `log i` is
/// decreasing in `alpha`, so the minimum sits at the right endpoint; a
/// 64-point grid scan backs this up.
pub fn slope_min(d: usize, interval: ExponentInterval) -> f64 {
    let mut min = slope(d, interval.hi);
    for k in 0..=64 {
        let a = interval.lo + (interval.hi - interval.lo) * (k as f64) / 64.0;
        min = min.min(slope(d, a));
    }
    min
}

/// Index interval for power-law fitting, 1-based inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitRange {
    pub lo: usize,
    pub hi: usize,
}

impl FitRange {
    pub fn full(d: usize) -> Self {
        Self { lo: 1, hi: d }
    }
}

/// One layer's fitted power-law coordinates and the derived error measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartanFit {
    /// Fitted exponent (negated log-log slope). Zero for flat spectra.
    pub alpha: f64,
    /// Fitted scale `C` (exponentiated intercept), on the raw input list.
    pub scale_c: f64,
    /// Max relative deviation `|sigma_i / (C i^-a) - 1|` over the fit range.
    pub delta_pl: f64,
    /// `|log sigma_1 - g_d(alpha)|` on the Frobenius-normalized list.
    pub chart_error: f64,
    /// `sup_r |empirical tail(r) - tau_alpha(r)|` over the whole list.
    pub tail_error: f64,
    pub fit_range: FitRange,
    /// Root-mean-square log-log regression residual.
    pub regression_residual: f64,
    /// Length of the spectral list the fit was computed on.
    pub spectral_len: usize,
}

/// Ordinary least squares on `(log i, log sigma_i)` over `fit_range`.
///
/// The chart error is evaluated after rescaling the list to Frobenius
/// energy `d` (the layerwise normalization convention), so the invariant
/// `chart_error <= log((1+delta_pl)/(1-delta_pl))` of the approximate-orbit
/// projection lemma holds whenever `delta_pl < 1`.
pub fn fit_power_law(sigma: &[f64], fit_range: FitRange) -> Result<CartanFit> {
    let d = sigma.len();
    if d == 0 || fit_range.lo < 1 || fit_range.hi > d || fit_range.lo > fit_range.hi {
        return Err(GsaError::ParamOutOfRange {
            name: "fit_range",
            value: fit_range.lo as f64,
            range: "1 <= lo <= hi <= d",
        });
    }
    for (pos, &s) in sigma[fit_range.lo - 1..fit_range.hi].iter().enumerate() {
        if s <= 0.0 {
            return Err(GsaError::FitDomain {
                index: fit_range.lo - 1 + pos,
                value: s,
            });
        }
    }

    let n = (fit_range.hi - fit_range.lo + 1) as f64;
    let xs: Vec<f64> = (fit_range.lo..=fit_range.hi)
        .map(|i| (i as f64).ln())
        .collect();
    let ys: Vec<f64> = sigma[fit_range.lo - 1..fit_range.hi]
        .iter()
        .map(|s| s.ln())
        .collect();
    let mx = kahan_sum(xs.iter().copied()) / n;
    let my = kahan_sum(ys.iter().copied()) / n;
    let sxx = kahan_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = kahan_sum(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)));
    // A single fitted point (or a constant abscissa) pins the slope at zero.
    let slope_fit = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope_fit * mx;
    let alpha = -slope_fit;
    let scale_c = intercept.exp();

    let residual_sq = kahan_sum(
        xs.iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope_fit * x);
                r * r
            }),
    );
    let regression_residual = (residual_sq / n).sqrt();

    let mut delta_pl = 0.0_f64;
    for i in fit_range.lo..=fit_range.hi {
        let model = scale_c * (i as f64).powf(-alpha);
        delta_pl = delta_pl.max((sigma[i - 1] / model - 1.0).abs());
    }

    // Chart error on the Frobenius-normalized list.
    let energy = kahan_sum(sigma.iter().map(|s| s * s));
    let t = ((d as f64) / energy).sqrt();
    let chart_error = ((t * sigma[0]).ln() - radial_coordinate(d, alpha)).abs();

    let tail_error = fitted_tail_error(sigma, alpha);

    Ok(CartanFit {
        alpha,
        scale_c,
        delta_pl,
        chart_error,
        tail_error,
        fit_range,
        regression_residual,
        spectral_len: d,
    })
}

/// `sup_{0<=r<=d} |mu_W({r+1..d}) - tau_alpha(r)|`, a single O(d) pass.
pub fn fitted_tail_error(sigma: &[f64], alpha: f64) -> f64 {
    let d = sigma.len();
    let energy: f64 = kahan_sum(sigma.iter().map(|s| s * s));
    let h_d = harmonic_sum(d, 2.0 * alpha);
    let mut emp_head = 0.0;
    let mut model_head = 0.0;
    let mut sup = 0.0_f64;
    for r in 0..=d {
        if r > 0 {
            emp_head += sigma[r - 1] * sigma[r - 1];
            model_head += (r as f64).powf(-2.0 * alpha);
        }
        let emp_tail = 1.0 - emp_head / energy;
        let model_tail = 1.0 - model_head / h_d;
        sup = sup.max((emp_tail - model_tail).abs());
    }
    sup
}

/// Interface amplification `Lambda = ||AB||_2 / sqrt(||A||_2 ||B||_2)` with
/// `A = W_{k+1}`, `B = W_k`, plus the non-backtracking flag
/// `||AB||_2 >= max(||A||_2, ||B||_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceBudget {
    pub lambda: f64,
    pub log_budget: f64,
    pub non_backtracking: bool,
}

pub fn interface_budget(w_k: &LayerMatrix, w_k1: &LayerMatrix) -> Result<InterfaceBudget> {
    let a2 = w_k1.operator_norm();
    let b2 = w_k.operator_norm();
    if a2 == 0.0 {
        return Err(GsaError::ZeroMatrix {
            label: w_k1.label().to_string(),
        });
    }
    if b2 == 0.0 {
        return Err(GsaError::ZeroMatrix {
            label: w_k.label().to_string(),
        });
    }
    let product = if w_k1.cols() == w_k.rows() {
        w_k1.data() * w_k.data()
    } else {
        let d = w_k.rows().max(w_k.cols()).max(w_k1.rows()).max(w_k1.cols());
        let ek = crate::matrix::embed_to(w_k, d);
        let ek1 = crate::matrix::embed_to(w_k1, d);
        ek1.data() * ek.data()
    };
    let p = LayerMatrix::from_matrix(product, "product")?.operator_norm();
    let lambda = p / (a2 * b2).sqrt();
    Ok(InterfaceBudget {
        lambda,
        log_budget: lambda.ln(),
        non_backtracking: p >= a2.max(b2),
    })
}

/// Per-interface entry of a total-variation rigidity report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvInterfaceEntry {
    pub displacement: f64,
    pub log_budget: f64,
    pub non_backtracking: bool,
    pub chart_errors: (f64, f64),
}

/// Measured Cartan total variation against the exact and robust rigidity
/// bounds. A backtracking interface does not invalidate the measurement; it
/// makes the bounds inapplicable, which is reported rather than thrown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvBoundReport {
    pub measured_tv: f64,
    pub exact_bound: f64,
    pub robust_bound: f64,
    pub slope_min: f64,
    pub applicable: bool,
    pub holds_exact: bool,
    pub holds_robust: bool,
    pub interfaces: Vec<TvInterfaceEntry>,
}

pub fn cartan_tv_bound(
    fits: &[CartanFit],
    budgets: &[InterfaceBudget],
    d: usize,
    interval: ExponentInterval,
) -> Result<TvBoundReport> {
    if fits.len() < 2 || budgets.len() != fits.len() - 1 {
        return Err(GsaError::DimensionMismatch {
            context: format!(
                "{} fits with {} budgets; need L fits and L-1 budgets",
                fits.len(),
                budgets.len()
            ),
        });
    }
    for f in fits {
        if !interval.contains(f.alpha) {
            return Err(GsaError::ParamOutOfRange {
                name: "alpha",
                value: f.alpha,
                range: "inside the declared exponent interval",
            });
        }
    }
    let m_d = slope_min(d, interval);
    let mut interfaces = Vec::with_capacity(budgets.len());
    let mut measured = 0.0;
    let mut exact = 0.0;
    let mut robust = 0.0;
    let mut applicable = true;
    for (k, b) in budgets.iter().enumerate() {
        let disp = (fits[k + 1].alpha - fits[k].alpha).abs();
        measured += disp;
        exact += 2.0 * b.log_budget / m_d;
        robust +=
            (2.0 * b.log_budget + fits[k].chart_error + fits[k + 1].chart_error) / m_d;
        applicable &= b.non_backtracking && b.lambda >= 1.0;
        interfaces.push(TvInterfaceEntry {
            displacement: disp,
            log_budget: b.log_budget,
            non_backtracking: b.non_backtracking,
            chart_errors: (fits[k].chart_error, fits[k + 1].chart_error),
        });
    }
    Ok(TvBoundReport {
        measured_tv: measured,
        exact_bound: exact,
        robust_bound: robust,
        slope_min: m_d,
        applicable,
        holds_exact: measured <= exact,
        holds_robust: measured <= robust,
        interfaces,
    })
}

/// Gibbs tail mass `tau_alpha(r) = (H_{d,2a} - H_{r,2a}) / H_{d,2a}`, with
/// `tau(0) = 1` and `tau(d) = 0`.
pub fn tail_mass(d: usize, alpha: f64, r: usize) -> f64 {
    debug_assert!(r <= d);
    if r == 0 {
        return 1.0;
    }
    if r >= d {
        return 0.0;
    }
    let h_d = harmonic_sum(d, 2.0 * alpha);
    let tail = kahan_sum((r + 1..=d).map(|i| (i as f64).powf(-2.0 * alpha)));
    tail / h_d
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(GsaError::ParamOutOfRange {
            name: "epsilon",
            value: eps,
            range: "(0, 1)",
        });
    }
    Ok(())
}

/// Minimal `r` with cumulative spectral energy at least `1 - eps`.
pub fn effective_rank_empirical(sigma: &[f64], eps: f64) -> Result<usize> {
    check_eps(eps)?;
    let d = sigma.len();
    if d == 0 {
        return Err(GsaError::ParamOutOfRange {
            name: "d",
            value: 0.0,
            range: "d >= 1",
        });
    }
    let total = kahan_sum(sigma.iter().map(|s| s * s));
    let mut head = 0.0;
    for r in 1..=d {
        head += sigma[r - 1] * sigma[r - 1];
        if head >= (1.0 - eps) * total {
            return Ok(r);
        }
    }
    Ok(d)
}

/// Minimal `r` with Gibbs cumulative mass at least `1 - eps`.
pub fn effective_rank_gibbs(d: usize, alpha: f64, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    let h_d = harmonic_sum(d, 2.0 * alpha);
    let mut head = 0.0;
    for r in 1..=d {
        head += (r as f64).powf(-2.0 * alpha);
        if head >= (1.0 - eps) * h_d {
            return Ok(r);
        }
    }
    Ok(d)
}

/// Rank-separation data at `(d, alpha, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMargins {
    /// Rank selected by the cumulative scan of the Gibbs tail.
    pub rank: usize,
    /// Model rank bounds when `alpha > 1/2`.
    pub model_lower: Option<usize>,
    pub model_upper: Option<usize>,
    /// `min(eps - tau(R), tau(R-1) - eps)`; positive iff strictly separated.
    pub margin: f64,
    pub tau_at_rank: f64,
    pub tau_before_rank: f64,
}

pub fn rank_margins(d: usize, alpha: f64, eps: f64) -> Result<RankMargins> {
    check_eps(eps)?;
    let rank = effective_rank_gibbs(d, alpha, eps)?;
    let tau_at_rank = tail_mass(d, alpha, rank);
    let tau_before_rank = tail_mass(d, alpha, rank - 1);
    let margin = (eps - tau_at_rank).min(tau_before_rank - eps);
    let (model_lower, model_upper) = if alpha > 0.5 {
        let (lo, hi) = model_rank_bounds(d, alpha, eps)?;
        (Some(lo), Some(hi))
    } else {
        (None, None)
    };
    Ok(RankMargins {
        rank,
        model_lower,
        model_upper,
        margin,
        tau_at_rank,
        tau_before_rank,
    })
}

/// Integral-test rank bounds for `alpha > 1/2`: the ceiling upper bound and
/// the contrapositive lower bound.
pub fn model_rank_bounds(d: usize, alpha: f64, eps: f64) -> Result<(usize, usize)> {
    check_eps(eps)?;
    if alpha <= 0.5 {
        return Err(GsaError::ParamOutOfRange {
            name: "alpha",
            value: alpha,
            range: "alpha > 1/2",
        });
    }
    let s = 2.0 * alpha;
    let h_d = harmonic_sum(d, s);
    let raw = (1.0 / ((s - 1.0) * eps * h_d)).powf(1.0 / (s - 1.0));
    let upper = (raw.ceil() as usize).clamp(1, d);

    let mut lower = 1usize;
    for r in 1..d {
        let lhs = ((r as f64 + 1.0).powf(1.0 - s) - (d as f64 + 1.0).powf(1.0 - s)) / (s - 1.0);
        if lhs >= eps * h_d {
            lower = r + 1;
        } else {
            break;
        }
    }
    Ok((lower, upper))
}

/// Outcome of the effective-rank transfer test across one interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTransferVerdict {
    /// `2 (log d) B + tail errors`, the left side of the transfer condition.
    pub lhs: f64,
    /// Rank-separation margin at the source exponent.
    pub margin: f64,
    pub certified: bool,
    pub rank_source: usize,
    pub rank_target: usize,
    pub ranks_agree: bool,
    pub model_rank: usize,
}

/// Check the fitted-tail rank-window transfer inequality
/// `2 (log d) B + Delta_k + Delta_{k+1} < margin_eps(alpha_k)` and compare
/// the empirical ranks directly. Certification and empirical agreement are
/// reported independently: the inequality is sufficient, not necessary.
pub fn rank_transfer_check(
    fit_k: &CartanFit,
    fit_k1: &CartanFit,
    sigma_k: &[f64],
    sigma_k1: &[f64],
    d: usize,
    eps: f64,
    displacement_bound: f64,
) -> Result<RankTransferVerdict> {
    let margins = rank_margins(d, fit_k.alpha, eps)?;
    let lhs =
        2.0 * (d as f64).ln() * displacement_bound + fit_k.tail_error + fit_k1.tail_error;
    let rank_source = effective_rank_empirical(sigma_k, eps)?;
    let rank_target = effective_rank_empirical(sigma_k1, eps)?;
    Ok(RankTransferVerdict {
        lhs,
        margin: margins.margin,
        certified: lhs < margins.margin,
        rank_source,
        rank_target,
        ranks_agree: rank_source == rank_target,
        model_rank: margins.rank,
    })
}
