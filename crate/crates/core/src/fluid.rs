//! Pseudo-spectral incompressible Navier-Stokes on the periodic unit box.
//!
//! Pressure is eliminated by Leray projection, the viscous term is
//! integrated exactly with an integrating factor, and the projected
//! convection and forcing are advanced with RK4. Products are dealiased
//! with the two-thirds rule.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Transform};
use crate::kernels::{mollifier_symbol, MollifierSpec};
use crate::Vec3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const CHECKPOINT_MAGIC: &[u8; 8] = b"RCSNSFLD";
pub const MAX_CFL: f64 = 0.5;

/// Velocity field stored as Fourier coefficients, one array per component.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            comps: vec![vec![ZERO; grid.len()]; grid.d()],
        }
    }

    pub fn from_components(grid: GridSpec, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.len() != grid.d() {
            return Err(Error::GridMismatch(format!(
                "expected {} components, got {}",
                grid.d(),
                comps.len()
            )));
        }
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
        }
        Ok(Self { grid, comps })
    }

    /// Transforms nodal values; no projection or dealiasing is applied.
    pub fn from_physical(tr: &Transform, values: &[Vec<f64>]) -> Result<Self> {
        let refs: Vec<&[f64]> = values.iter().map(|v| v.as_slice()).collect();
        for v in &refs {
            if v.len() != tr.grid().len() {
                return Err(Error::LengthMismatch {
                    expected: tr.grid().len(),
                    got: v.len(),
                });
            }
        }
        Self::from_components(*tr.grid(), tr.forward_many(&refs))
    }

    pub fn to_physical(&self, tr: &Transform) -> Vec<Vec<f64>> {
        let refs: Vec<&[Complex64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        tr.inverse_many(&refs)
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn component(&self, a: usize) -> &[Complex64] {
        &self.comps[a]
    }

    #[inline]
    pub fn component_mut(&mut self, a: usize) -> &mut [Complex64] {
        &mut self.comps[a]
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    /// Spatial mean, i.e. the zero mode.
    pub fn mean(&self) -> Vec3 {
        let mut m = Vec3::zeros();
        for (a, c) in self.comps.iter().enumerate() {
            m[a] = c[0].re;
        }
        m
    }

    /// `∫|u|²` by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.comps.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// `∫|u − ū|²`, the energy of the nonzero modes.
    pub fn fluctuation_norm_sq(&self) -> f64 {
        self.l2_norm_sq() - self.comps.iter().map(|c| c[0].norm_sqr()).sum::<f64>()
    }

    /// `max_k |k · û(k)|`.
    pub fn max_divergence(&self, tr: &Transform) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.grid.len() {
            let mut div = ZERO;
            for (a, c) in self.comps.iter().enumerate() {
                div += c[idx] * tr.k(a)[idx];
            }
            worst = worst.max(div.norm());
        }
        worst
    }

    pub fn dealias(&mut self, tr: &Transform) {
        let mask = tr.dealias_mask();
        for c in &mut self.comps {
            for (z, keep) in c.iter_mut().zip(mask) {
                if !keep {
                    *z = ZERO;
                }
            }
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * s;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for z in self.comps.iter_mut().flatten() {
            *z *= s;
        }
    }

    /// Largest coefficient difference to another field.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.comps
            .iter()
            .flatten()
            .zip(other.comps.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Multiplies every component by a real spectral symbol.
    pub fn filtered(&self, symbol: &[f64]) -> SpectralField {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(symbol).map(|(z, s)| z * s).collect())
            .collect();
        SpectralField {
            grid: self.grid,
            comps,
        }
    }
}

/// Orthogonal projection onto divergence-free fields; the zero mode is left
/// untouched.
pub fn leray_project(field: &SpectralField, tr: &Transform) -> SpectralField {
    let mut out = field.clone();
    leray_project_in_place(&mut out, tr);
    out
}

pub fn leray_project_in_place(field: &mut SpectralField, tr: &Transform) {
    let d = field.grid.d();
    let k2 = tr.k2();
    for idx in 1..field.grid.len() {
        let mut kdotu = ZERO;
        for a in 0..d {
            kdotu += field.comps[a][idx] * tr.k(a)[idx];
        }
        let s = kdotu / k2[idx];
        for a in 0..d {
            field.comps[a][idx] -= s * tr.k(a)[idx];
        }
    }
}

/// Physical-space data produced while evaluating the convection term.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Dealiased spectrum of `(a · ∇) u` with zero mean.
    pub nonlinear: SpectralField,
    /// Nodal values of `u`.
    pub u: Vec<Vec<f64>>,
    /// Nodal values of the convecting velocity (`u`, or `m_ε ∗ u`).
    pub convecting: Vec<Vec<f64>>,
}

/// Pseudo-spectral `(a · ∇) u` where `a = u` or `a = m_ε ∗ u` when a
/// mollifier symbol is supplied. Also returns the nodal fields it computed.
pub fn evaluate_convection(u: &SpectralField, tr: &Transform, moll: Option<&[f64]>) -> Evaluation {
    let d = u.grid.d();
    let len = u.grid.len();
    let i = Complex64::new(0.0, 1.0);
    let mut spectra: Vec<Vec<Complex64>> = u.comps.clone();
    if let Some(sym) = moll {
        for c in &u.comps {
            spectra.push(c.iter().zip(sym).map(|(z, s)| z * s).collect());
        }
    }
    for comp in &u.comps {
        for j in 0..d {
            let kj = tr.k(j);
            spectra.push(comp.iter().zip(kj).map(|(z, k)| i * z * k).collect());
        }
    }
    let refs: Vec<&[Complex64]> = spectra.iter().map(|s| s.as_slice()).collect();
    let mut phys = tr.inverse_many(&refs);
    let grads = phys.split_off(if moll.is_some() { 2 * d } else { d });
    let convecting = if moll.is_some() { phys.split_off(d) } else { phys.clone() };
    let u_phys = phys;

    let mut products = vec![vec![0.0; len]; d];
    for (comp, prod) in products.iter_mut().enumerate() {
        for j in 0..d {
            let g = &grads[comp * d + j];
            let a = &convecting[j];
            for p in 0..len {
                prod[p] += a[p] * g[p];
            }
        }
    }
    let prefs: Vec<&[f64]> = products.iter().map(|v| v.as_slice()).collect();
    let mut nonlinear = SpectralField {
        grid: u.grid,
        comps: tr.forward_many(&prefs),
    };
    nonlinear.dealias(tr);
    for c in &mut nonlinear.comps {
        c[0] = ZERO;
    }
    Evaluation {
        nonlinear,
        u: u_phys,
        convecting,
    }
}

pub fn nonlinear_term(u: &SpectralField, tr: &Transform, moll: Option<&[f64]>) -> SpectralField {
    evaluate_convection(u, tr, moll).nonlinear
}

/// Spectrum of the drag reaction on the fluid, `−ρ u + j`, formed at the
/// nodes and dealiased.
pub fn drag_source(rho: &[f64], j: &[Vec<f64>], u_nodes: &[Vec<f64>], tr: &Transform) -> Result<SpectralField> {
    let grid = *tr.grid();
    if rho.len() != grid.len() || j.len() != grid.d() || u_nodes.len() != grid.d() {
        return Err(Error::GridMismatch("drag source inputs do not match the grid".into()));
    }
    let vals: Vec<Vec<f64>> = (0..grid.d())
        .map(|a| {
            if j[a].len() != grid.len() || u_nodes[a].len() != grid.len() {
                return Err(Error::GridMismatch("drag source component length".into()));
            }
            Ok((0..grid.len()).map(|p| -rho[p] * u_nodes[a][p] + j[a][p]).collect())
        })
        .collect::<Result<_>>()?;
    let mut s = SpectralField::from_physical(tr, &vals)?;
    s.dealias(tr);
    Ok(s)
}

/// `∫|∇u|² = Σ |k|² |û(k)|²`.
pub fn gradient_norm_sq(u: &SpectralField, tr: &Transform) -> f64 {
    let k2 = tr.k2();
    u.comps
        .iter()
        .map(|c| c.iter().zip(k2).map(|(z, k)| k * z.norm_sqr()).sum::<f64>())
        .sum()
}

/// Largest nodal speed.
pub fn max_speed(u_nodes: &[Vec<f64>]) -> f64 {
    let len = u_nodes.first().map_or(0, |c| c.len());
    (0..len)
        .map(|p| u_nodes.iter().map(|c| c[p] * c[p]).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

pub fn check_cfl(u_nodes: &[Vec<f64>], dt: f64, h: f64) -> Result<()> {
    let umax = max_speed(u_nodes);
    let cfl = umax * dt / h;
    if cfl > MAX_CFL {
        Err(Error::Cfl { cfl, umax, dt })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub mu: f64,
    /// Include the convection term.
    pub convection: bool,
    /// Mollified convecting velocity (regularized mode).
    pub mollifier: Option<MollifierSpec>,
}

impl FluidParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity must be positive, got {mu}")));
        }
        Ok(Self {
            mu,
            convection: true,
            mollifier: None,
        })
    }
}

/// Exact viscous propagators over a full and a half step.
#[derive(Debug, Clone)]
pub struct IntegratingFactor {
    pub dt: f64,
    pub full: Vec<f64>,
    pub half: Vec<f64>,
}

impl IntegratingFactor {
    pub fn new(tr: &Transform, mu: f64, dt: f64) -> Self {
        let full = tr.k2().iter().map(|k2| (-mu * k2 * dt).exp()).collect();
        let half = tr.k2().iter().map(|k2| (-mu * k2 * 0.5 * dt).exp()).collect();
        Self { dt, full, half }
    }
}

/// `diag(e) · u + s · diag(ev) · v`, component by component.
pub fn propagate_add(e: &[f64], u: &SpectralField, s: f64, ev: &[f64], v: &SpectralField) -> SpectralField {
    let mut out = u.filtered(e);
    for (oc, vc) in out.comps.iter_mut().zip(&v.comps) {
        for ((o, z), f) in oc.iter_mut().zip(vc).zip(ev) {
            *o += z * (s * f);
        }
    }
    out
}

/// Combines the four RK4 stage derivatives with the integrating factor:
/// `E u + dt/6 (E a + 2 E½ (b + c) + d)`.
pub fn if_rk4_combine(
    ifac: &IntegratingFactor,
    u: &SpectralField,
    a: &SpectralField,
    b: &SpectralField,
    c: &SpectralField,
    d: &SpectralField,
) -> SpectralField {
    let dt6 = ifac.dt / 6.0;
    let mut out = u.filtered(&ifac.full);
    for comp in 0..out.comps.len() {
        let o = &mut out.comps[comp];
        for idx in 0..o.len() {
            let e = ifac.full[idx];
            let eh = ifac.half[idx];
            o[idx] += (a.comps[comp][idx] * e
                + (b.comps[comp][idx] + c.comps[comp][idx]) * (2.0 * eh)
                + d.comps[comp][idx])
                * dt6;
        }
    }
    out
}

/// Standalone fluid solver with a prescribed source.
#[derive(Debug, Clone)]
pub struct FluidSolver {
    tr: Transform,
    params: FluidParams,
    symbol: Option<Vec<f64>>,
}

impl FluidSolver {
    pub fn new(tr: Transform, params: FluidParams) -> Result<Self> {
        let symbol = match &params.mollifier {
            Some(m) => Some(mollifier_symbol(m, &tr)?),
            None => None,
        };
        Ok(Self { tr, params, symbol })
    }

    pub fn transform(&self) -> &Transform {
        &self.tr
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn symbol(&self) -> Option<&[f64]> {
        self.symbol.as_deref()
    }

    /// Projected right-hand side `P(−(a·∇)u + s)` and the nodal data used.
    pub fn rhs(&self, u: &SpectralField, source: Option<&SpectralField>) -> (SpectralField, Option<Evaluation>) {
        let (mut f, eval) = if self.params.convection {
            let ev = evaluate_convection(u, &self.tr, self.symbol());
            let mut f = ev.nonlinear.clone();
            f.scale(-1.0);
            (f, Some(ev))
        } else {
            (SpectralField::zeros(u.grid), None)
        };
        if let Some(s) = source {
            f.axpy(1.0, s);
        }
        leray_project_in_place(&mut f, &self.tr);
        (f, eval)
    }

    /// One integrating-factor RK4 step with a source held fixed over the
    /// step.
    pub fn step(&self, u: &SpectralField, source: &SpectralField, dt: f64) -> Result<SpectralField> {
        self.step_with(u, dt, |_| Ok(source.clone()))
    }

    /// One integrating-factor RK4 step; `source(s)` gives the source at
    /// offset `s ∈ {0, dt/2, dt}` into the step.
    pub fn step_with<F>(&self, u: &SpectralField, dt: f64, mut source: F) -> Result<SpectralField>
    where
        F: FnMut(f64) -> Result<SpectralField>,
    {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::TimeStep(dt));
        }
        let grid = *self.tr.grid();
        if u.grid != grid {
            return Err(Error::GridMismatch("field and solver grids differ".into()));
        }
        let mut src = |s: f64| -> Result<SpectralField> {
            let f = source(s)?;
            if f.grid != grid {
                return Err(Error::GridMismatch("source and solver grids differ".into()));
            }
            Ok(f)
        };
        let (s0, sh, s1) = (src(0.0)?, src(0.5 * dt)?, src(dt)?);
        let ifac = IntegratingFactor::new(&self.tr, self.params.mu, dt);
        let (a, ev) = self.rhs(u, Some(&s0));
        let nodes = match ev {
            Some(ev) => ev.u,
            None => u.to_physical(&self.tr),
        };
        check_cfl(&nodes, dt, grid.h())?;
        let mut u2 = u.clone();
        u2.axpy(0.5 * dt, &a);
        let u2 = u2.filtered(&ifac.half);
        let (b, _) = self.rhs(&u2, Some(&sh));
        let mut u3 = u.filtered(&ifac.half);
        u3.axpy(0.5 * dt, &b);
        let (c, _) = self.rhs(&u3, Some(&sh));
        let u4 = propagate_add(&ifac.full, u, dt, &ifac.half, &c);
        let (d, _) = self.rhs(&u4, Some(&s1));
        Ok(if_rk4_combine(&ifac, u, &a, &b, &c, &d))
    }
}

/// Taylor-Green initial field of unit amplitude: in two dimensions
/// `(sin 2πx cos 2πy, −cos 2πx sin 2πy)`, in three the same times
/// `cos 2πz` with zero third component.
pub fn taylor_green(tr: &Transform, amplitude: f64) -> SpectralField {
    let grid = *tr.grid();
    let tp = crate::grid::TWO_PI;
    let mut ux = vec![0.0; grid.len()];
    let mut uy = vec![0.0; grid.len()];
    for idx in 0..grid.len() {
        let x = grid.node_position(idx);
        let cz = if grid.d() == 3 { (tp * x.z).cos() } else { 1.0 };
        ux[idx] = amplitude * (tp * x.x).sin() * (tp * x.y).cos() * cz;
        uy[idx] = -amplitude * (tp * x.x).cos() * (tp * x.y).sin() * cz;
    }
    let mut comps = vec![ux, uy];
    if grid.d() == 3 {
        comps.push(vec![0.0; grid.len()]);
    }
    let mut f = SpectralField::from_physical(tr, &comps).expect("grid-sized components");
    f.dealias(tr);
    f
}

/// Binary checkpoint: magic `RCSNSFLD`, then little-endian
/// `u32 d, u32 n, u32 components, f64 time`, then for each component the
/// coefficients in grid order as `(re, im)` f64 pairs.
pub fn write_checkpoint<W: Write>(mut w: W, u: &SpectralField, time: f64) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(u.grid.d() as u32)?;
    w.write_u32::<LittleEndian>(u.grid.n() as u32)?;
    w.write_u32::<LittleEndian>(u.comps.len() as u32)?;
    w.write_f64::<LittleEndian>(time)?;
    for c in &u.comps {
        for z in c {
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(SpectralField, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse("not a fluid checkpoint".into()));
    }
    let d = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let ncomp = r.read_u32::<LittleEndian>()? as usize;
    let time = r.read_f64::<LittleEndian>()?;
    let grid = GridSpec::new(d, n)?;
    let mut comps = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let mut c = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            c.push(Complex64::new(re, im));
        }
        comps.push(c);
    }
    Ok((SpectralField::from_components(grid, comps)?, time))
}

/// CSV of nodal velocities on the plane `i_last = plane` (three dimensions)
/// or the whole grid (two dimensions): columns `x,y,u1,u2[,u3]`.
pub fn write_slice_csv<W: Write>(mut w: W, u: &SpectralField, tr: &Transform, plane: usize) -> Result<()> {
    let grid = *tr.grid();
    let nodes = u.to_physical(tr);
    let d = grid.d();
    let header: Vec<String> = (1..=d).map(|a| format!("u{a}")).collect();
    writeln!(w, "x,y,{}", header.join(","))?;
    let n = grid.n();
    for i in 0..n {
        for j in 0..n {
            let idx = grid.index([i, j, plane.min(n - 1)]);
            let x = grid.node_position(idx);
            let vals: Vec<String> = nodes.iter().map(|c| c[idx].to_string()).collect();
            writeln!(w, "{},{},{}", x.x, x.y, vals.join(","))?;
        }
    }
    Ok(())
}
