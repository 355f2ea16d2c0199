//! Activation permeability and capacity moments under a standard normal
//! input, plus the conditional residual-scale and width bounds they imply.
//! Advisory only: these verdicts never gate domain membership.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};

/// Activation derivative descriptor. Built-ins evaluate `phi'` directly;
/// `Tabulated` interpolates sampled derivative values piecewise-linearly
/// and clamps outside the table range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Gelu,
    Tanh,
    Swish,
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
            Activation::Swish => "swish",
            Activation::Tabulated { .. } => "tabulated",
        }
    }

    /// Derivative `phi'(z)`.
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                // phi(z) = z Phi(z); phi'(z) = Phi(z) + z pdf(z).
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                normal_cdf(z) + z * pdf
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Swish => {
                let s = 1.0 / (1.0 + (-z).exp());
                s + z * s * (1.0 - s)
            }
            Activation::Tabulated { xs, ys } => {
                if xs.is_empty() {
                    return 0.0;
                }
                if z <= xs[0] {
                    return ys[0];
                }
                if z >= xs[xs.len() - 1] {
                    return ys[ys.len() - 1];
                }
                let pos = xs.partition_point(|&x| x <= z);
                let (x0, x1) = (xs[pos - 1], xs[pos]);
                let (y0, y1) = (ys[pos - 1], ys[pos]);
                y0 + (y1 - y0) * (z - x0) / (x1 - x0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Activation::Tabulated { xs, ys } = self {
            if xs.is_empty() || xs.len() != ys.len() {
                return Err(GsaError::DimensionMismatch {
                    context: format!("tabulated activation: {} xs, {} ys", xs.len(), ys.len()),
                });
            }
            if xs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GsaError::DimensionMismatch {
                    context: "tabulated activation abscissae must increase".to_string(),
                });
            }
            if ys.iter().any(|y| !y.is_finite()) {
                return Err(GsaError::DimensionMismatch {
                    context: "tabulated activation values must be finite".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Standard normal CDF via `erf`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Error function: Maclaurin series for |x| <= 3, continued-fraction erfc
/// beyond, saturating to +-1 once erfc underflows.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        for n in 1..200 {
            term *= -x2 / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else if ax >= 9.0 {
        x.signum()
    } else {
        let v = 1.0 - erfc_cf(ax);
        v * x.signum()
    }
}

/// Continued fraction for erfc(x), x >= 3 (modified Lentz).
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f: f64 = tiny;
    let mut c = f;
    let mut d = 0.0f64;
    // erfc(x) = exp(-x^2)/sqrt(pi) * cf, cf = 1/(x+ (1/2)/(x+ 1/(x+ (3/2)/(x+ ...))))
    for i in 0..200 {
        let (a, b) = if i == 0 {
            (1.0, x)
        } else {
            (i as f64 / 2.0, x)
        };
        d = b + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() * f
}

/// Gauss-Hermite nodes and weights for weight `exp(-x^2)`, via the
/// symmetric Jacobi matrix eigen-decomposition.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let beta = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = beta;
        jacobi[(k, k - 1)] = beta;
    }
    let eig = jacobi.symmetric_eigen();
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (node, mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gradient permeability `kappa = E[phi'(Z)]` and criticality capacity
/// `chi = E[phi'(Z)^2]` under `Z ~ N(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMoments {
    pub kappa: f64,
    pub chi: f64,
    pub quadrature_order: usize,
    pub activation: Activation,
}

/// Compute the moments by Gauss-Hermite quadrature of order `order`
/// (at least 16).
pub fn activation_moments(activation: &Activation, order: usize) -> Result<ActivationMoments> {
    if order < 16 {
        return Err(GsaError::ParamOutOfRange {
            name: "quadrature_order",
            value: order as f64,
            range: ">= 16",
        });
    }
    activation.validate()?;
    let (nodes, weights) = gauss_hermite(order);
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let mut kappa = 0.0;
    let mut chi = 0.0;
    for (&x, &w) in nodes.iter().zip(weights.iter()) {
        let z = std::f64::consts::SQRT_2 * x;
        let d = activation.derivative(z);
        kappa += w * d;
        chi += w * d * d;
    }
    Ok(ActivationMoments {
        kappa: kappa * inv_sqrt_pi,
        chi: chi * inv_sqrt_pi,
        quadrature_order: order,
        activation: activation.clone(),
    })
}

/// Residual-scale sufficient bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    /// Typical incoherent bound `(1/(eta kappa)) sqrt((M^2-1)/L * e0/s)`.
    pub c_typical: f64,
    /// Worst-case coherent bound `(M^{1/L} - 1) / chi`.
    pub c_coherent: f64,
    /// First-order form `log M / (L chi)` for comparison.
    pub c_coherent_asymptotic: f64,
}

pub fn scale_bounds(
    e0: f64,
    s: f64,
    depth: usize,
    m_budget: f64,
    eta: f64,
    moments: &ActivationMoments,
) -> Result<ScaleBounds> {
    if depth == 0 {
        return Err(GsaError::ParamOutOfRange {
            name: "L",
            value: 0.0,
            range: ">= 1",
        });
    }
    if m_budget <= 1.0 {
        return Err(GsaError::ParamOutOfRange {
            name: "M",
            value: m_budget,
            range: "> 1",
        });
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(GsaError::ParamOutOfRange {
            name: "eta",
            value: eta,
            range: "(0, 1]",
        });
    }
    if e0 <= 0.0 || s <= 0.0 {
        return Err(GsaError::ParamOutOfRange {
            name: "e0/s",
            value: e0.min(s),
            range: "> 0",
        });
    }
    let l = depth as f64;
    let c_typical =
        1.0 / (eta * moments.kappa) * ((m_budget * m_budget - 1.0) / l * e0 / s).sqrt();
    let c_coherent = (m_budget.powf(1.0 / l) - 1.0) / moments.chi;
    let c_coherent_asymptotic = m_budget.ln() / (l * moments.chi);
    Ok(ScaleBounds {
        c_typical,
        c_coherent,
        c_coherent_asymptotic,
    })
}

/// Capacity-accounting width floors, conditional on the supply axioms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthBounds {
    /// `ceil(r_out / chi)` for the critical coherent regime.
    pub w_min_coherent: usize,
    /// `ceil(r_out / kappa^2)` for the typical robust regime.
    pub w_min_typical: usize,
}

pub fn width_bounds(r_out: f64, moments: &ActivationMoments) -> Result<WidthBounds> {
    if r_out <= 0.0 {
        return Err(GsaError::ParamOutOfRange {
            name: "r_out",
            value: r_out,
            range: "> 0",
        });
    }
    if moments.chi <= 0.0 || moments.kappa == 0.0 {
        return Err(GsaError::ParamOutOfRange {
            name: "moments",
            value: moments.chi,
            range: "chi > 0 and kappa != 0",
        });
    }
    Ok(WidthBounds {
        w_min_coherent: (r_out / moments.chi).ceil() as usize,
        w_min_typical: (r_out / (moments.kappa * moments.kappa)).ceil() as usize,
    })
}
