//! Particle-grid exchange with matched cloud-in-cell kernels.
//!
//! Nodes sit at `i h`. Scatter and gather share [`cic_stencil`], so
//! `Σ_p m_p g(x_p) = ∫ g ρ` holds for every grid field `g` up to summation
//! order; this is what makes the drag exchange conserve momentum.

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::fluid::SpectralField;
use crate::grid::{GridSpec, Transform};
use crate::kernels::CutoffSpec;
use crate::Vec3;

/// Up to eight `(node, weight)` pairs; unused slots have zero weight.
pub type Stencil = [(usize, f64); 8];

/// Multilinear interpolation weights of a point of the torus.
pub fn cic_stencil(grid: &GridSpec, x: &Vec3) -> Stencil {
    let n = grid.n();
    let nf = n as f64;
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..grid.d() {
        let s = x[a] * nf;
        let i = s.floor();
        frac[a] = s - i;
        base[a] = (i as i64).rem_euclid(n as i64) as usize;
    }
    let mut out = [(0usize, 0.0f64); 8];
    let corners = 1usize << grid.d();
    for (corner, slot) in out.iter_mut().enumerate().take(corners) {
        let mut c = [0usize; 3];
        let mut w = 1.0;
        for a in 0..grid.d() {
            let bit = (corner >> a) & 1;
            c[a] = (base[a] + bit) % n;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        *slot = (grid.index(c), w);
    }
    out
}

/// Deposited mass density and `w`-momentum density at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Deposit {
    pub rho: Vec<f64>,
    pub j: Vec<Vec<f64>>,
}

impl Deposit {
    /// `∫ρ` by nodal quadrature.
    pub fn mass(&self, grid: &GridSpec) -> f64 {
        self.rho.iter().sum::<f64>() * grid.cell_volume()
    }

    pub fn max_density(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }
}

/// Cloud-in-cell deposition of `ρ_f` and `j = ∫ w f`; with a cutoff each
/// particle is weighted by `γ_ε(w_p)`.
pub fn scatter(e: &Ensemble, grid: &GridSpec, cutoff: Option<&CutoffSpec>) -> Deposit {
    let d = grid.d();
    let mut rho = vec![0.0; grid.len()];
    let mut j = vec![vec![0.0; grid.len()]; d];
    let inv_vol = 1.0 / grid.cell_volume();
    for p in e.particles() {
        let gamma = cutoff.map_or(1.0, |g| g.eval_radius(p.w.norm()));
        if gamma == 0.0 {
            continue;
        }
        let m = p.mass * gamma * inv_vol;
        for (node, wgt) in cic_stencil(grid, &p.x) {
            if wgt == 0.0 {
                continue;
            }
            let q = m * wgt;
            rho[node] += q;
            for a in 0..d {
                j[a][node] += q * p.w[a];
            }
        }
    }
    Deposit { rho, j }
}

/// Multilinear interpolation of nodal vector values at the given points.
pub fn interpolate(values: &[Vec<f64>], grid: &GridSpec, points: &[Vec3]) -> Vec<Vec3> {
    points
        .iter()
        .map(|x| {
            let mut out = Vec3::zeros();
            for (node, wgt) in cic_stencil(grid, x) {
                if wgt == 0.0 {
                    continue;
                }
                for (a, comp) in values.iter().enumerate() {
                    out[a] += wgt * comp[node];
                }
            }
            out
        })
        .collect()
}

/// Fluid velocity at particle positions, mollified first when a symbol is
/// given.
pub fn gather(u: &SpectralField, tr: &Transform, positions: &[Vec3], moll: Option<&[f64]>) -> Vec<Vec3> {
    let nodes = match moll {
        Some(sym) => u.filtered(sym).to_physical(tr),
        None => u.to_physical(tr),
    };
    interpolate(&nodes, tr.grid(), positions)
}

/// `|Σ_p m_p (u(x_p) − w_p) + ∫(−ρ u + j)|` with `u(x_p)` interpolated from
/// the same nodal values used for the grid-side reaction.
pub fn momentum_audit(e: &Ensemble, u_nodes: &[Vec<f64>], dep: &Deposit, grid: &GridSpec) -> Result<f64> {
    if u_nodes.len() != grid.d() || dep.rho.len() != grid.len() {
        return Err(Error::GridMismatch("audit inputs do not match the grid".into()));
    }
    let u_at = interpolate(u_nodes, grid, &e.positions());
    let mut particle = Vec3::zeros();
    for (p, u) in e.particles().iter().zip(&u_at) {
        particle += (u - p.w) * p.mass;
    }
    let mut fluid = Vec3::zeros();
    for a in 0..grid.d() {
        let s: f64 = (0..grid.len()).map(|n| -dep.rho[n] * u_nodes[a][n] + dep.j[a][n]).sum();
        fluid[a] = s * grid.cell_volume();
    }
    Ok((particle + fluid).norm())
}
