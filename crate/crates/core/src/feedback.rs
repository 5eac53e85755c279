//! Non-invasive feedback laws and the gain-admissibility checks for a
//! branch with a single slow direction.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gains and state of a washout-filter controller.
///
/// `u = k_st (y - y_ref) + k_wo (y_wo - y_wo_ref)` with `d/dt y_wo = u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WashoutGains {
    pub k_st: f64,
    pub k_wo: f64,
    pub y_wo: f64,
    pub y_ref: f64,
    pub y_wo_ref: f64,
}

impl WashoutGains {
    pub fn new(k_st: f64, k_wo: f64) -> Self {
        Self {
            k_st,
            k_wo,
            y_wo: 0.0,
            y_ref: 0.0,
            y_wo_ref: 0.0,
        }
    }

    /// Places the washout state so that `u` vanishes when `y == y_pred`.
    pub fn reset_for_prediction(&mut self, y_pred: f64) -> Result<()> {
        if self.k_wo == 0.0 {
            return Err(Error::InvalidInput("K_wo must be non-zero".into()));
        }
        self.y_ref = 0.0;
        self.y_wo_ref = 0.0;
        self.y_wo = -y_pred * self.k_st / self.k_wo;
        Ok(())
    }
}

/// Gains of the zero-in-equilibrium law (parameter control when `a == 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZieGains {
    pub a: f64,
    pub k_st_y: f64,
    pub k_st_mu: f64,
    pub y_ref: f64,
    pub mu_ref: f64,
}

impl ZieGains {
    pub fn new(a: f64, k_st_y: f64, k_st_mu: f64) -> Self {
        Self {
            a,
            k_st_y,
            k_st_mu,
            y_ref: 0.0,
            mu_ref: 0.0,
        }
    }

    pub fn with_reference(mut self, mu_ref: f64, y_ref: f64) -> Self {
        self.mu_ref = mu_ref;
        self.y_ref = y_ref;
        self
    }
}

/// Linear data of the slow direction at an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowDirectionInfo {
    pub lambda_c: f64,
    /// `w_c^T f_u`
    pub wfu: f64,
    /// `w_c^T f_mu`
    pub wfmu: f64,
    /// Input orientation, `-1` or `+1`.
    pub sigma: i8,
    /// Unit branch tangent `(v_mu, v_y)`.
    pub secant: (f64, f64),
}

impl SlowDirectionInfo {
    pub fn new(lambda_c: f64, wfu: f64, wfmu: f64) -> Self {
        Self {
            lambda_c,
            wfu,
            wfmu,
            sigma: -1,
            secant: (0.0, 1.0),
        }
    }
}

pub fn washout_u(y: f64, g: &WashoutGains) -> f64 {
    g.k_st * (y - g.y_ref) + g.k_wo * (g.y_wo - g.y_wo_ref)
}

pub fn zie_u(y: f64, mu: f64, g: &ZieGains) -> f64 {
    g.k_st_y * (y - g.y_ref) + g.k_st_mu * (mu - g.mu_ref)
}

/// Jacobian of the slow `(y, y_wo)` dynamics under washout control.
pub fn washout_slow_jacobian(info: &SlowDirectionInfo, g: &WashoutGains) -> [[f64; 2]; 2] {
    [
        [info.lambda_c + info.wfu * g.k_st, info.wfu * g.k_wo],
        [g.k_st, g.k_wo],
    ]
}

/// Jacobian of the slow `(y, mu)` dynamics under zero-in-equilibrium control.
pub fn zie_slow_jacobian(info: &SlowDirectionInfo, g: &ZieGains) -> [[f64; 2]; 2] {
    [
        [
            info.lambda_c + g.a * info.wfu * g.k_st_y,
            info.wfmu + g.a * info.wfu * g.k_st_mu,
        ],
        [g.k_st_y, g.k_st_mu],
    ]
}

/// Both eigenvalues of a real 2x2 matrix have negative real part.
pub fn is_hurwitz_2x2(m: &[[f64; 2]; 2]) -> bool {
    let trace = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    trace < 0.0 && det > 0.0
}

pub fn washout_gains_admissible(info: &SlowDirectionInfo, g: &WashoutGains) -> bool {
    if info.lambda_c == 0.0 {
        return false;
    }
    let first = info.lambda_c + g.k_wo < -info.wfu * g.k_st;
    let same_sign = g.k_wo != 0.0 && g.k_wo.signum() == info.lambda_c.signum();
    first && same_sign
}

pub fn zie_gains_admissible(info: &SlowDirectionInfo, g: &ZieGains) -> bool {
    // Without feedback mu is frozen and a stable branch stays stable.
    if g.k_st_y == 0.0 && g.k_st_mu == 0.0 {
        return info.lambda_c < 0.0;
    }
    let first = g.k_st_mu + g.a * info.wfu * g.k_st_y < -info.lambda_c;
    let second = info.lambda_c * g.k_st_mu - info.wfmu * g.k_st_y > 0.0;
    first && second
}

/// Sign applied to the perpendicular choice of `K_st_mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GainSign {
    #[default]
    Perpendicular,
    Flipped,
}

impl GainSign {
    pub fn flip(&mut self) {
        *self = match self {
            GainSign::Perpendicular => GainSign::Flipped,
            GainSign::Flipped => GainSign::Perpendicular,
        }
    }
}

/// Rule for deriving the stabilizing gains from the branch secant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecantGainRule {
    /// Modulus of `K_st_y`; its sign is the input orientation.
    pub k_y_magnitude: f64,
    /// Upper bound on `|K_st_mu|`.
    pub k_mu_cap: f64,
}

impl Default for SecantGainRule {
    fn default() -> Self {
        Self {
            k_y_magnitude: 0.2,
            k_mu_cap: 10.0,
        }
    }
}

/// Gains derived from a secant, with a flag set when the cap was hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecantGains {
    pub k_st_y: f64,
    pub k_st_mu: f64,
    pub capped: bool,
}

/// Gains for one continuation step: `K_st_y = sigma * |k_y|` and
/// `K_st_mu = K_st_y * v_mu / v_y`, which puts the line `u = 0` perpendicular
/// to the secant. [`GainSign::Flipped`] negates `K_st_mu`.
pub fn zie_gains_from_secant(
    secant: (f64, f64),
    sigma: i8,
    sign: GainSign,
    rule: &SecantGainRule,
) -> Result<SecantGains> {
    let (v_mu, v_y) = secant;
    let k_st_y = f64::from(sigma.signum()) * rule.k_y_magnitude;
    if v_y == 0.0 {
        return Err(Error::SecantParallelToMu);
    }
    // Perpendicular: the normal (K_mu, K_y) of the line u = 0 is parallel to the secant.
    let mut k_st_mu = k_st_y * v_mu / v_y;
    if sign == GainSign::Flipped {
        k_st_mu = -k_st_mu;
    }
    let capped = k_st_mu.abs() > rule.k_mu_cap;
    if capped {
        warn!(
            "K_st_mu = {k_st_mu:.4} exceeds cap {}; secant ({v_mu:.4}, {v_y:.4})",
            rule.k_mu_cap
        );
        k_st_mu = rule.k_mu_cap.copysign(k_st_mu);
    }
    Ok(SecantGains {
        k_st_y,
        k_st_mu,
        capped,
    })
}

/// Same as [`zie_gains_from_secant`], but a secant parallel to the
/// mu-axis yields the capped gain instead of an error.
pub fn zie_gains_from_secant_capped(
    secant: (f64, f64),
    sigma: i8,
    sign: GainSign,
    rule: &SecantGainRule,
) -> SecantGains {
    match zie_gains_from_secant(secant, sigma, sign, rule) {
        Ok(g) => g,
        Err(_) => {
            let k_st_y = f64::from(sigma.signum()) * rule.k_y_magnitude;
            let mut k_st_mu = rule.k_mu_cap.copysign(k_st_y * secant.0);
            if sign == GainSign::Flipped {
                k_st_mu = -k_st_mu;
            }
            warn!("secant parallel to mu-axis; K_st_mu capped at {k_st_mu}");
            SecantGains {
                k_st_y,
                k_st_mu,
                capped: true,
            }
        }
    }
}
