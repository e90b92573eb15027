//! The frequency-side existence machinery: the resolvent-type integral
//! Upsilon(beta) = (1/2 pi) int dxi / (beta + 2 psi(xi)), the moment-order
//! dependent existence gate built on it, and the critical beta search.

use crate::error::{Result, SpdeError};
use crate::levy::LevyModel;
use crate::quad::adaptive_gk;
use serde::Serialize;
use std::f64::consts::PI;

/// Absolute tolerance on Upsilon values from quadrature.
pub const UPSILON_ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upsilon {
    Finite(f64),
    /// The integral diverges (stable exponent alpha <= 1). Detected from the
    /// tail exponent, never inferred from quadrature behavior.
    Divergent,
}

impl Upsilon {
    pub fn value(self) -> Option<f64> {
        match self {
            Upsilon::Finite(v) => Some(v),
            Upsilon::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Upsilon::Finite(_))
    }
}

/// Moment constant z_k for the k-th moment bound: z_2 = 1 and z_k = 2 sqrt(k)
/// for k > 2. Orders below 2 are rejected.
pub fn burkholder_constant(k: f64) -> Result<f64> {
    if !(k >= 2.0 && k.is_finite()) {
        return Err(SpdeError::parameter("moment order k must satisfy k >= 2"));
    }
    if k == 2.0 {
        Ok(1.0)
    } else {
        Ok(2.0 * k.sqrt())
    }
}

/// Upsilon(beta) = (1/pi) int_0^inf dxi / (beta + 2 psi(xi)), using evenness.
///
/// The integrand tail is 1/(2c xi^alpha): divergent iff alpha <= 1, which is
/// decided analytically. Finite cases are split at XI = max(1, (beta/c)^{1/alpha})
/// into a quadrature head and a tail summed exactly as a geometric series in
/// q = beta/(2 c XI^alpha) <= 1/2:
///   int_XI^inf = (XI^{1-alpha}/(2c)) sum_{j>=0} (-q)^j / (alpha (j+1) - 1).
pub fn upsilon(model: &LevyModel, beta: f64) -> Result<Upsilon> {
    model.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SpdeError::parameter("upsilon needs beta > 0"));
    }
    let (alpha, c) = match *model {
        LevyModel::Gaussian { kappa } => (2.0, kappa),
        LevyModel::Stable { alpha, c } => (alpha, c),
    };
    if alpha <= 1.0 {
        return Ok(Upsilon::Divergent);
    }

    let xi_split = (beta / c).powf(1.0 / alpha).max(1.0);
    let head = adaptive_gk(
        |xi| 1.0 / (beta + 2.0 * model.psi(xi)),
        0.0,
        xi_split,
        UPSILON_ABS_TOL * PI * 0.5,
        20_000,
    )?;
    let tail = resolvent_tail(alpha, c, beta, xi_split);

    Ok(Upsilon::Finite((head.value + tail) / PI))
}

/// int_XI^inf dxi / (beta + 2 c xi^alpha) as an exact alternating series in
/// q = beta / (2 c XI^alpha), valid for q < 1:
///   (XI^{1-alpha} / 2c) sum_{j>=0} (-q)^j / (alpha (j+1) - 1).
pub(crate) fn resolvent_tail(alpha: f64, c: f64, beta: f64, xi: f64) -> f64 {
    let q = beta / (2.0 * c * xi.powf(alpha));
    debug_assert!(q < 1.0, "resolvent tail series needs beta/(2 c xi^alpha) < 1");
    let mut sum = 0.0;
    let mut term_q = 1.0;
    for j in 0..400 {
        let term = term_q / (alpha * (j as f64 + 1.0) - 1.0);
        sum += term;
        term_q *= -q;
        if term.abs() < 1e-16 * sum.abs().max(1.0) {
            break;
        }
    }
    xi.powf(1.0 - alpha) / (2.0 * c) * sum
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GateReport {
    pub pass: bool,
    /// None when the frequency integral diverges.
    pub upsilon: Option<f64>,
    /// 1/(z_k lip_sigma)^2; None means unbounded (lip_sigma = 0).
    pub threshold: Option<f64>,
    pub z_k: f64,
    pub beta: f64,
    pub k: f64,
    pub lip_sigma: f64,
}

/// Existence gate: pass iff Upsilon(beta) < 1/(z_k lip)^2, strict, with the
/// convention 1/0 := +infinity. A divergent Upsilon always fails.
pub fn existence_gate(model: &LevyModel, k: f64, lip_sigma: f64, beta: f64) -> Result<GateReport> {
    if !(lip_sigma >= 0.0 && lip_sigma.is_finite()) {
        return Err(SpdeError::parameter("lip_sigma must be finite and >= 0"));
    }
    let z_k = burkholder_constant(k)?;
    let ups = upsilon(model, beta)?;
    let threshold = if lip_sigma == 0.0 {
        None
    } else {
        Some(1.0 / (z_k * lip_sigma).powi(2))
    };
    let pass = match (ups, threshold) {
        (Upsilon::Finite(v), Some(th)) => v < th,
        (Upsilon::Finite(_), None) => true,
        (Upsilon::Divergent, _) => false,
    };
    Ok(GateReport {
        pass,
        upsilon: ups.value(),
        threshold,
        z_k,
        beta,
        k,
        lip_sigma,
    })
}

/// Smallest beta making the existence gate pass, located by bisection on the
/// strictly decreasing beta -> Upsilon(beta). Returns 0 when lip_sigma = 0
/// (every positive beta passes). Models whose integral diverges never pass.
pub fn min_beta(model: &LevyModel, k: f64, lip_sigma: f64) -> Result<f64> {
    if !(lip_sigma >= 0.0 && lip_sigma.is_finite()) {
        return Err(SpdeError::parameter("lip_sigma must be finite and >= 0"));
    }
    let z_k = burkholder_constant(k)?;
    if !upsilon(model, 1.0)?.is_finite() {
        return Err(SpdeError::domain(
            "existence gate never passes: frequency integral diverges for every beta",
        ));
    }
    if lip_sigma == 0.0 {
        return Ok(0.0);
    }
    let target = 1.0 / (z_k * lip_sigma).powi(2);
    let ups_at = |beta: f64| -> Result<f64> {
        match upsilon(model, beta)? {
            Upsilon::Finite(v) => Ok(v),
            Upsilon::Divergent => unreachable!("divergence is beta independent"),
        }
    };

    let mut lo = 1.0;
    let mut hi = 1.0;
    while ups_at(lo)? < target {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(SpdeError::tolerance("min_beta bracket underflow"));
        }
    }
    while ups_at(hi)? >= target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(SpdeError::tolerance("min_beta bracket overflow"));
        }
    }
    // Invariant: Upsilon(lo) >= target > Upsilon(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ups_at(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-9 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SharpnessReport {
    pub pass: bool,
    pub upsilon: Option<f64>,
    /// 1/l_sigma^2; None means unbounded (l_sigma = 0).
    pub bound: Option<f64>,
}

/// Second-moment blow-up side: with a lower linear-growth rate l_sigma,
/// moments stay finite only under Upsilon(beta) < 1/l_sigma^2 (strict).
pub fn sharpness_bound(model: &LevyModel, beta: f64, l_sigma: f64) -> Result<SharpnessReport> {
    if !(l_sigma >= 0.0 && l_sigma.is_finite()) {
        return Err(SpdeError::parameter("l_sigma must be finite and >= 0"));
    }
    let ups = upsilon(model, beta)?;
    let bound = if l_sigma == 0.0 {
        None
    } else {
        Some(1.0 / (l_sigma * l_sigma))
    };
    let pass = match (ups, bound) {
        (Upsilon::Finite(v), Some(b)) => v < b,
        (Upsilon::Finite(_), None) => true,
        (Upsilon::Divergent, _) => false,
    };
    Ok(SharpnessReport {
        pass,
        upsilon: ups.value(),
        bound,
    })
}
