//! Communication weight, spatial mollifier and velocity cutoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Transform};
use crate::Vec3;

/// Largest separation on `[0, 1]³` that enters the flocking estimate.
pub const FLOCKING_DIAMETER: f64 = 1.732_050_807_568_877_2;

/// Pairwise communication weight `φ(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommKernel {
    Constant {
        amplitude: f64,
    },
    /// `amplitude · (1 + r²)^(−β/2)`.
    Algebraic {
        amplitude: f64,
        beta: f64,
    },
    /// Piecewise linear through `(r[i], phi[i])`, constant beyond the ends.
    Tabulated {
        r: Vec<f64>,
        phi: Vec<f64>,
    },
}

impl CommKernel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("kernel: {m}")));
        match self {
            CommKernel::Constant { amplitude } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return bad("amplitude must be finite and nonnegative");
                }
            }
            CommKernel::Algebraic { amplitude, beta } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return bad("amplitude must be finite and nonnegative");
                }
                if !(beta.is_finite() && *beta >= 0.0) {
                    return bad("beta must be finite and nonnegative");
                }
            }
            CommKernel::Tabulated { r, phi } => {
                if r.len() != phi.len() || r.len() < 2 {
                    return bad("table needs at least two (r, phi) pairs of equal length");
                }
                if r[0] != 0.0 {
                    return bad("table must start at r = 0");
                }
                if r.windows(2).any(|p| !(p[1] > p[0])) {
                    return bad("table radii must be strictly increasing");
                }
                if phi.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("table values must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            CommKernel::Constant { amplitude } => *amplitude,
            CommKernel::Algebraic { amplitude, beta } => {
                if *beta == 0.0 {
                    *amplitude
                } else {
                    amplitude * (1.0 + r * r).powf(-0.5 * beta)
                }
            }
            CommKernel::Tabulated { r: rs, phi } => {
                let last = rs.len() - 1;
                if r <= rs[0] {
                    return phi[0];
                }
                if r >= rs[last] {
                    return phi[last];
                }
                let i = rs.partition_point(|&x| x <= r) - 1;
                let t = (r - rs[i]) / (rs[i + 1] - rs[i]);
                phi[i] + t * (phi[i + 1] - phi[i])
            }
        }
    }

    /// `sup_r φ(r)`.
    pub fn sup(&self) -> f64 {
        match self {
            CommKernel::Constant { amplitude } => *amplitude,
            CommKernel::Algebraic { amplitude, .. } => *amplitude,
            CommKernel::Tabulated { phi, .. } => phi.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `sup_r |φ'(r)|`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            CommKernel::Constant { .. } => 0.0,
            CommKernel::Algebraic { amplitude, beta } => {
                if *beta == 0.0 {
                    return 0.0;
                }
                // Maximum of A β r (1 + r²)^(−β/2 − 1) sits at r² = 1 / (β + 1).
                let r2 = 1.0 / (beta + 1.0);
                amplitude * beta * r2.sqrt() * (1.0 + r2).powf(-0.5 * beta - 1.0)
            }
            CommKernel::Tabulated { r, phi } => r
                .windows(2)
                .zip(phi.windows(2))
                .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Radius beyond which φ vanishes identically, if any.
    pub fn compact_support(&self) -> Option<f64> {
        match self {
            CommKernel::Tabulated { r, phi } => {
                if *phi.last()? != 0.0 {
                    return None;
                }
                let mut i = phi.len() - 1;
                while i > 0 && phi[i - 1] == 0.0 {
                    i -= 1;
                }
                Some(r[i])
            }
            CommKernel::Algebraic { amplitude, .. } | CommKernel::Constant { amplitude }
                if *amplitude == 0.0 =>
            {
                Some(0.0)
            }
            _ => None,
        }
    }

    /// `min φ` over `[0, r_max]`.
    pub fn min_over(&self, r_max: f64) -> f64 {
        match self {
            CommKernel::Constant { amplitude } => *amplitude,
            // Nonincreasing in r.
            CommKernel::Algebraic { .. } => self.eval(r_max),
            // A piecewise linear function attains its minimum at a node or at
            // the end of the interval.
            CommKernel::Tabulated { r, phi } => r
                .iter()
                .zip(phi)
                .take_while(|(x, _)| **x <= r_max)
                .map(|(_, v)| *v)
                .fold(self.eval(r_max), f64::min),
        }
    }

    /// Lower bound of φ over the pairwise distances used by the flocking
    /// estimate, `min φ` on `[0, √3]`.
    pub fn min_over_torus(&self) -> f64 {
        self.min_over(FLOCKING_DIAMETER)
    }

    /// `min φ` over the true periodic diameter `√d / 2` of the torus.
    pub fn min_over_periodic_diameter(&self, d: usize) -> f64 {
        self.min_over(0.5 * (d as f64).sqrt())
    }
}

pub fn phi_eval(k: &CommKernel, r: f64) -> f64 {
    k.eval(r)
}

pub fn phi_min_over_torus(k: &CommKernel) -> f64 {
    k.min_over_torus()
}

/// Mollifier family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierFamily {
    /// `exp(1 / (|x|² − 1))` on the unit ball, scaled to radius ε.
    Bump,
    /// Gaussian with standard deviation ε / 3.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub family: MollifierFamily,
}

/// Smallest bump radius, in grid spacings, accepted by [`mollifier_symbol`].
pub const MIN_BUMP_RADIUS_CELLS: f64 = 1.5;

impl MollifierSpec {
    pub fn new(epsilon: f64, family: MollifierFamily) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mollifier epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon, family })
    }

    /// Unnormalized profile at distance `r` from the origin.
    fn profile(&self, r: f64) -> f64 {
        match self.family {
            MollifierFamily::Bump => {
                let s = r / self.epsilon;
                if s >= 1.0 {
                    0.0
                } else {
                    (1.0 / (s * s - 1.0)).exp()
                }
            }
            MollifierFamily::Gaussian => {
                let sigma = self.epsilon / 3.0;
                (-0.5 * (r / sigma).powi(2)).exp()
            }
        }
    }
}

/// Minimum-image displacement of a coordinate difference on the unit circle.
#[inline]
pub fn min_image(dx: f64) -> f64 {
    dx - dx.round()
}

/// Minimum-image distance between two points of the unit torus.
#[inline]
pub fn torus_distance(a: &Vec3, b: &Vec3) -> f64 {
    let dx = min_image(a.x - b.x);
    let dy = min_image(a.y - b.y);
    let dz = min_image(a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Discrete Fourier symbol of the mollifier sampled on the grid nodes and
/// normalized to unit grid mass; convolution with `m_ε` is multiplication by
/// this array in the layout of [`Transform`].
pub fn mollifier_symbol(m: &MollifierSpec, transform: &Transform) -> Result<Vec<f64>> {
    let grid = transform.grid();
    if m.family == MollifierFamily::Bump {
        let min = MIN_BUMP_RADIUS_CELLS * grid.h();
        if m.epsilon < min {
            return Err(Error::Unresolvable {
                epsilon: m.epsilon,
                min,
            });
        }
    }
    let samples = sample_periodic(m, grid);
    let total: f64 = samples.iter().sum();
    let normalized: Vec<f64> = samples.iter().map(|s| s / total).collect();
    let spectrum = transform.forward_real(&normalized);
    // The forward transform carries a 1/n^d factor; the symbol of a
    // convolution with unit grid mass is n^d times that.
    let scale = grid.len() as f64;
    let mut symbol: Vec<f64> = spectrum.iter().map(|z| z.re * scale).collect();
    symbol[0] = 1.0;
    Ok(symbol)
}

/// Mollifier profile sampled at every node with the minimum-image distance
/// to the origin.
pub fn sample_periodic(m: &MollifierSpec, grid: &GridSpec) -> Vec<f64> {
    (0..grid.len())
        .map(|idx| {
            let x = grid.node_position(idx);
            let r = torus_distance(&x, &Vec3::zeros());
            m.profile(r)
        })
        .collect()
}

/// Smooth velocity cutoff: 1 on `|w| ≤ 1/(2ε)`, 0 on `|w| ≥ 1/ε`, cubic
/// smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub epsilon: f64,
}

impl CutoffSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn inner_radius(&self) -> f64 {
        0.5 / self.epsilon
    }

    pub fn outer_radius(&self) -> f64 {
        1.0 / self.epsilon
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        let (r0, r1) = (self.inner_radius(), self.outer_radius());
        if r <= r0 {
            1.0
        } else if r >= r1 {
            0.0
        } else {
            let t = (r - r0) / (r1 - r0);
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    /// Radial derivative of the cutoff.
    pub fn derivative(&self, r: f64) -> f64 {
        let (r0, r1) = (self.inner_radius(), self.outer_radius());
        if r <= r0 || r >= r1 {
            0.0
        } else {
            let t = (r - r0) / (r1 - r0);
            -6.0 * t * (1.0 - t) / (r1 - r0)
        }
    }
}

pub fn cutoff_eval(g: &CutoffSpec, w: &Vec3) -> f64 {
    g.eval_radius(w.norm())
}
