//! Closed-form evaluation of the pruned-error law.
//!
//! A single network's error as a function of density `d` is
//!
//! ```text
//! eps(d) = eps_np * |(d - j a) / (d - j b)|^gamma,   a = p (eps_high / eps_np)^(1/gamma),  b = p
//! ```
//!
//! which has a low-error plateau at `eps_np` (d >> a), a power-law region of slope `-gamma`
//! on log-log axes (b << d << a) and a high-error plateau at `eps_high` (d << b).
//!
//! The family-wide form replaces `d` by the invariant `m* = l^phi w^psi d` and `p` by `p'`.
//! The complex modulus is always evaluated through its real closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One family member together with its training-set size and pruned density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: u32,
    pub width_scale: f64,
    pub subsample_size: u64,
    pub density: f64,
}

impl NetworkConfig {
    pub fn new(depth: u32, width_scale: f64, subsample_size: u64, density: f64) -> Result<Self> {
        let cfg = NetworkConfig {
            depth,
            width_scale,
            subsample_size,
            density,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::invalid("depth", "must be at least 1"));
        }
        if !(self.width_scale.is_finite() && self.width_scale > 0.0) {
            return Err(Error::invalid(
                "width_scale",
                format!("must be positive, got {}", self.width_scale),
            ));
        }
        if self.subsample_size < 1 {
            return Err(Error::invalid("subsample_size", "must be at least 1"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::invalid(
                "density",
                format!("must lie in (0, 1], got {}", self.density),
            ));
        }
        Ok(())
    }

    pub fn with_density(&self, density: f64) -> Self {
        NetworkConfig { density, ..*self }
    }
}

/// Parameters of the per-configuration law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleLawParams {
    pub eps_np: f64,
    pub eps_high: f64,
    pub gamma: f64,
    pub p: f64,
}

impl SingleLawParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_np > 0.0 && self.eps_np < 1.0) {
            return Err(Error::invalid("eps_np", format!("must lie in (0, 1), got {}", self.eps_np)));
        }
        if !(self.eps_high > 0.0 && self.eps_high <= 1.0) {
            return Err(Error::invalid(
                "eps_high",
                format!("must lie in (0, 1], got {}", self.eps_high),
            ));
        }
        if self.eps_high < self.eps_np {
            return Err(Error::invalid(
                "eps_high",
                format!("{} is below eps_np {}", self.eps_high, self.eps_np),
            ));
        }
        check_positive("gamma", self.gamma)?;
        check_positive("p", self.p)
    }

    /// Numerator scale `a`: density where the low-error plateau bends into the power law.
    pub fn upper_knee(&self) -> f64 {
        self.p * (self.eps_high / self.eps_np).powf(1.0 / self.gamma)
    }
}

/// The five constants shared by every member of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLawParams {
    pub eps_high: f64,
    pub gamma: f64,
    pub p_prime: f64,
    pub phi: f64,
    pub psi: f64,
}

impl JointLawParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_high > 0.0 && self.eps_high <= 1.0) {
            return Err(Error::invalid(
                "eps_high",
                format!("must lie in (0, 1], got {}", self.eps_high),
            ));
        }
        check_positive("gamma", self.gamma)?;
        check_positive("p_prime", self.p_prime)?;
        if !(self.phi.is_finite() && self.psi.is_finite()) {
            return Err(Error::invalid("phi/psi", "exponents must be finite"));
        }
        Ok(())
    }

    /// Per-configuration transition density `p = p' / (l^phi w^psi)`.
    pub fn transition_density(&self, depth: u32, width_scale: f64) -> f64 {
        self.p_prime / scale_factor(self.phi, self.psi, depth, width_scale)
    }

    /// The single-network law this family law induces on one `(l, w)` member.
    pub fn restrict(&self, eps_np: f64, depth: u32, width_scale: f64) -> SingleLawParams {
        SingleLawParams {
            eps_np,
            eps_high: self.eps_high,
            gamma: self.gamma,
            p: self.transition_density(depth, width_scale),
        }
    }

    /// Prediction as a function of the invariant alone.
    pub fn eval_at_invariant(&self, m_star: f64, eps_np: f64) -> Result<f64> {
        self.validate()?;
        check_eps_np(eps_np, self.eps_high)?;
        if !(m_star > 0.0) {
            return Err(Error::Domain(format!("invariant must be positive, got {m_star}")));
        }
        Ok(joint_unchecked(self.eps_high, self.gamma, self.p_prime, m_star, eps_np))
    }
}

/// Error-preserving invariant `m* = l^phi w^psi d`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Invariant(pub f64);

/// Relative parameter count `m = d l w^2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ParamCount(pub f64);

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive, got {v}")))
    }
}

fn check_eps_np(eps_np: f64, eps_high: f64) -> Result<()> {
    if !(eps_np > 0.0 && eps_np < 1.0) {
        return Err(Error::invalid("eps_np", format!("must lie in (0, 1), got {eps_np}")));
    }
    if eps_np > eps_high {
        return Err(Error::Domain(format!(
            "eps_np {eps_np} exceeds the high-error plateau {eps_high}"
        )));
    }
    Ok(())
}

/// `((x^2 + a^2) / (x^2 + b^2))^(gamma / 2)`, i.e. `|x - ja|^gamma / |x - jb|^gamma`.
pub fn rational_modulus(x: f64, a: f64, b: f64, gamma: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if a < 0.0 || b < 0.0 {
        return Err(Error::Domain("a and b must be non-negative".into()));
    }
    Ok(modulus_unchecked(x, a, b, gamma))
}

#[inline]
pub(crate) fn modulus_unchecked(x: f64, a: f64, b: f64, gamma: f64) -> f64 {
    let x2 = x * x;
    ((x2 + a * a) / (x2 + b * b)).powf(0.5 * gamma)
}

#[inline]
pub(crate) fn joint_unchecked(eps_high: f64, gamma: f64, p_prime: f64, m_star: f64, eps_np: f64) -> f64 {
    let a = p_prime * (eps_high / eps_np).powf(1.0 / gamma);
    eps_np * modulus_unchecked(m_star, a, p_prime, gamma)
}

#[inline]
pub(crate) fn scale_factor(phi: f64, psi: f64, depth: u32, width_scale: f64) -> f64 {
    f64::from(depth).powf(phi) * width_scale.powf(psi)
}

pub fn eval_single(params: &SingleLawParams, density: f64) -> Result<f64> {
    params.validate()?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid("density", format!("must lie in (0, 1], got {density}")));
    }
    let a = params.upper_knee();
    Ok(params.eps_np * modulus_unchecked(density, a, params.p, params.gamma))
}

pub fn invariant(phi: f64, psi: f64, cfg: &NetworkConfig) -> Invariant {
    Invariant(scale_factor(phi, psi, cfg.depth, cfg.width_scale) * cfg.density)
}

pub fn eval_joint(params: &JointLawParams, eps_np: f64, cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    let m = invariant(params.phi, params.psi, cfg);
    params.eval_at_invariant(m.0, eps_np)
}

/// Invariant value at which the family law reaches `target`.
///
/// Requires `eps_np < target < eps_high`; no restriction on the resulting density.
pub fn invert_to_invariant(params: &JointLawParams, eps_np: f64, target: f64) -> Result<Invariant> {
    params.validate()?;
    check_eps_np(eps_np, params.eps_high)?;
    if !(target > eps_np && target < params.eps_high) {
        return Err(Error::OutOfRange {
            target,
            low: eps_np,
            high: params.eps_high,
        });
    }
    let gamma = params.gamma;
    let r = (target / eps_np).powf(2.0 / gamma);
    let k2 = (params.eps_high / eps_np).powf(2.0 / gamma);
    // (a^2 - r b^2) / (r - 1) with a = p' k, b = p'
    let m2 = params.p_prime * params.p_prime * (k2 - r) / (r - 1.0);
    if !(m2 > 0.0) || !m2.is_finite() {
        return Err(Error::OutOfRange {
            target,
            low: eps_np,
            high: params.eps_high,
        });
    }
    Ok(Invariant(m2.sqrt()))
}

/// Density at which member `(l, w)` reaches `target`; fails when that needs `d > 1`.
pub fn invert_joint(
    params: &JointLawParams,
    eps_np: f64,
    depth: u32,
    width_scale: f64,
    target: f64,
) -> Result<f64> {
    if depth < 1 {
        return Err(Error::invalid("depth", "must be at least 1"));
    }
    check_positive("width_scale", width_scale)?;
    let m = invert_to_invariant(params, eps_np, target)?;
    let d = m.0 / scale_factor(params.phi, params.psi, depth, width_scale);
    if d > 1.0 {
        let dense = joint_unchecked(
            params.eps_high,
            params.gamma,
            params.p_prime,
            scale_factor(params.phi, params.psi, depth, width_scale),
            eps_np,
        );
        return Err(Error::OutOfRange {
            target,
            low: dense,
            high: params.eps_high,
        });
    }
    Ok(d)
}

pub fn param_count(cfg: &NetworkConfig) -> ParamCount {
    ParamCount(cfg.density * f64::from(cfg.depth) * cfg.width_scale * cfg.width_scale)
}
