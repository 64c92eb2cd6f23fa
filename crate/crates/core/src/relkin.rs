//! Lorentz kinematics between the classical velocity `v` (|v| < c) and the
//! relativistic velocity `w = F(|v|) v`, where
//!
//! ```text
//! Γ(v) = c / sqrt(c² − |v|²),    F(v) = Γ (1 + Γ / c²),
//! g(r) = c r / sqrt(c² − r²) + r / (c² − r²)   (so |w| = g(|v|)).
//! ```
//!
//! All quantities that involve `c² − |v|²` go through [`speed_gap`], which
//! factors the difference as `(c − r)(c + r)` so that speeds close to `c` do
//! not lose digits to cancellation.
//!
//! The inverse map is solved in the proper-velocity variable
//! `p = Γ|v| / c`, in which `|w| = p (c + sqrt(1 + p²) / c)` is smooth,
//! convex and strictly increasing on `[0, ∞)`.

use crate::error::{Error, Result};
use crate::Vec3;

const INVERSE_TOL: f64 = 1e-13;
const INVERSE_MAX_ITER: usize = 200;

/// Speed of light in simulation units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LightSpeed(f64);

impl LightSpeed {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::InvalidLightSpeed(c))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Scalar Lorentz data of a classical velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzData {
    pub gamma: f64,
    /// `F(v)`, the ratio |w| / |v|; also the transverse Jacobian eigenvalue.
    pub f_factor: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// `c² − r²` evaluated without cancellation near `r = c`.
#[inline]
pub fn speed_gap(r: f64, c: f64) -> f64 {
    (c - r) * (c + r)
}

#[inline]
fn check_speed(r: f64, c: f64) -> Result<()> {
    if r < c {
        Ok(())
    } else {
        Err(Error::Superluminal { speed: r, c })
    }
}

/// Γ as a function of the speed `r < c`.
pub fn gamma_of_speed(r: f64, c: LightSpeed) -> Result<f64> {
    let c = c.get();
    check_speed(r, c)?;
    Ok(c / speed_gap(r, c).sqrt())
}

pub fn lorentz_gamma(v: &Vec3, c: LightSpeed) -> Result<f64> {
    gamma_of_speed(v.norm(), c)
}

/// `F(r) = Γ + Γ²/c² = c/sqrt(s) + 1/s` with `s = c² − r²`.
pub fn f_factor(r: f64, c: LightSpeed) -> Result<f64> {
    let c = c.get();
    check_speed(r, c)?;
    let s = speed_gap(r, c);
    Ok(c / s.sqrt() + 1.0 / s)
}

/// Radial profile `g(r) = |ŵ(v)|` for `|v| = r`.
pub fn g_radial(r: f64, c: LightSpeed) -> Result<f64> {
    Ok(r * f_factor(r, c)?)
}

/// Derivative of the radial profile; equals the longitudinal eigenvalue λ2.
pub fn g_radial_prime(r: f64, c: LightSpeed) -> Result<f64> {
    let cv = c.get();
    check_speed(r, cv)?;
    let s = speed_gap(r, cv);
    let sq = s.sqrt();
    let r2 = r * r;
    Ok(cv * r2 / (s * sq) + 2.0 * r2 / (s * s) + cv / sq + 1.0 / s)
}

/// Classical to relativistic velocity, `ŵ(v) = F(v) v`.
pub fn w_of_v(v: &Vec3, c: LightSpeed) -> Result<Vec3> {
    let f = f_factor(v.norm(), c)?;
    Ok(v * f)
}

/// Solves `p (c + sqrt(1 + p²)/c) = a` for the proper velocity `p ≥ 0`.
fn proper_velocity(a: f64, c: f64) -> Result<f64> {
    if a == 0.0 {
        return Ok(0.0);
    }
    let h = |p: f64| p * (c + (1.0 + p * p).sqrt() / c) - a;
    let dh = |p: f64| {
        let q = (1.0 + p * p).sqrt();
        c + (1.0 + 2.0 * p * p) / (c * q)
    };
    // h(p) ≥ c p and h(p) ≥ p²/c give an upper bracket; h(p) ≤ (c + 1/c) p + p²/c
    // gives a lower one.
    let mut hi = (a / c).min((a * c).sqrt());
    let b = c + 1.0 / c;
    let mut lo = 0.5 * c * (-b + (b * b + 4.0 * a / c).sqrt());
    if !(lo <= hi) {
        lo = 0.0;
    }
    // Newton from the right of the root of a convex increasing function
    // decreases monotonically onto the root.
    let mut p = hi;
    for _ in 0..INVERSE_MAX_ITER {
        let value = h(p);
        if value == 0.0 {
            return Ok(p);
        }
        if value > 0.0 {
            hi = hi.min(p);
        } else {
            lo = lo.max(p);
        }
        let mut next = p - value / dh(p);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - p).abs() <= INVERSE_TOL * next.abs() || hi - lo <= INVERSE_TOL * hi {
            return Ok(next);
        }
        p = next;
    }
    Err(Error::InverseNotConverged(a))
}

/// Relativistic to classical velocity `v̂(w)`; the result is strictly inside
/// the light-speed ball.
pub fn v_of_w(w: &Vec3, c: LightSpeed) -> Result<Vec3> {
    let a = w.norm();
    if a == 0.0 {
        return Ok(Vec3::zeros());
    }
    if !a.is_finite() {
        return Err(Error::InverseNotConverged(a));
    }
    let cv = c.get();
    let p = proper_velocity(a, cv)?;
    let gamma = (1.0 + p * p).sqrt();
    let mut r = cv * (p / gamma);
    let r_max = cv * (1.0 - 1e-15);
    if r > r_max {
        r = r_max;
    }
    Ok(w * (r / a))
}

/// Particle energy `E(v) = c²(Γ − 1) + (Γ² − log Γ)`; note `E(0) = 1`.
pub fn energy(v: &Vec3, c: LightSpeed) -> Result<f64> {
    let cv = c.get();
    let r = v.norm();
    check_speed(r, cv)?;
    let sq = speed_gap(r, cv).sqrt();
    let gamma = cv / sq;
    // Γ − 1 = r² / (sqrt(s) (c + sqrt(s))) avoids cancellation at small speed.
    let gamma_minus_one = r * r / (sq * (cv + sq));
    Ok(cv * cv * gamma_minus_one + gamma * gamma - gamma.ln())
}

/// Eigenvalues of ∇_v ŵ: λ1 (transverse, multiplicity d − 1) and λ2
/// (longitudinal, multiplicity 1).
pub fn jacobian_eigs(v: &Vec3, c: LightSpeed) -> Result<(f64, f64)> {
    let r = v.norm();
    Ok((f_factor(r, c)?, g_radial_prime(r, c)?))
}

pub fn lorentz_data(v: &Vec3, c: LightSpeed) -> Result<LorentzData> {
    let r = v.norm();
    let gamma = gamma_of_speed(r, c)?;
    let (lambda1, lambda2) = jacobian_eigs(v, c)?;
    Ok(LorentzData {
        gamma,
        f_factor: lambda1,
        lambda1,
        lambda2,
    })
}

/// `∇_w · v̂(w) = (d − 1)/λ1 + 1/λ2` evaluated at `v = v̂(w)`.
pub fn div_w_vhat(w: &Vec3, c: LightSpeed, d: usize) -> Result<f64> {
    let v = v_of_w(w, c)?;
    let (l1, l2) = jacobian_eigs(&v, c)?;
    Ok((d as f64 - 1.0) / l1 + 1.0 / l2)
}

/// Derivative of λ1 = F with respect to the speed.
pub fn lambda1_prime(r: f64, c: LightSpeed) -> Result<f64> {
    let cv = c.get();
    check_speed(r, cv)?;
    let s = speed_gap(r, cv);
    Ok(cv * r / (s * s.sqrt()) + 2.0 * r / (s * s))
}

/// Derivative of λ2 with respect to the speed.
pub fn lambda2_prime(r: f64, c: LightSpeed) -> Result<f64> {
    let cv = c.get();
    check_speed(r, cv)?;
    let s = speed_gap(r, cv);
    let sq = s.sqrt();
    let r3 = r * r * r;
    Ok(3.0 * cv * r / (s * sq) + 3.0 * cv * r3 / (s * s * sq) + 6.0 * r / (s * s) + 8.0 * r3 / (s * s * s))
}

/// Lipschitz constant `C(V)` of `w ↦ ∇_w · v̂(w)` measured against
/// `|v1 − v2|`, for classical speeds bounded by `V < c`.
///
/// Both eigenvalue profiles are increasing and convex on `[0, V]`, so their
/// common Lipschitz constant is the larger endpoint slope, and both are
/// bounded below by their value `1 + 1/c²` at the origin.
pub fn div_lipschitz_bound(speed_bound: f64, c: LightSpeed, d: usize) -> Result<f64> {
    let lip = lambda1_prime(speed_bound, c)?.max(lambda2_prime(speed_bound, c)?);
    let cv = c.get();
    let g0 = 1.0 + 1.0 / (cv * cv);
    Ok((d as f64 - 1.0) * lip / (g0 * g0) + lip / (g0 * g0))
}
