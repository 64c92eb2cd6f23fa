//! Conservation ledger, Lyapunov functional and dissipation, decay
//! constants, moments, support bounds and decay-rate fits.
//!
//! Fluid integrals are evaluated spectrally (Parseval), particle integrals as
//! mass-weighted sums. Grid-particle cross terms use the same cloud-in-cell
//! stencil as the coupling, so the discrete identities close exactly.

use std::f64::consts::PI;
use std::io::Write;

use crate::coupling::{cic_stencil, interpolate, scatter};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::fluid::{gradient_norm_sq, max_speed, SpectralField};
use crate::grid::Transform;
use crate::kernels::{min_image, CommKernel};
use crate::relkin::{energy, g_radial_prime, v_of_w, LightSpeed};
use crate::Vec3;

/// Poincaré constant of mean-free fields on the unit torus, `1/(2π)²`.
pub const POINCARE: f64 = 1.0 / (4.0 * PI * PI);

/// Particle and fluid centers `(w_c, u_c)`.
pub fn centers(e: &Ensemble, u: &SpectralField) -> (Vec3, Vec3) {
    let mass = e.total_mass();
    let wc = if mass > 0.0 { e.momentum() / mass } else { Vec3::zeros() };
    (wc, u.mean())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lyapunov {
    pub ew: f64,
    pub eu: f64,
    pub er: f64,
    pub l: f64,
}

/// `E^w = Σ m|w − w_c|²`, `E^u = ∫|u − u_c|²`, `E^r = ½|u_c − w_c|²`.
/// Without particles there is no relative mean motion and `E^r = 0`.
pub fn lyapunov(e: &Ensemble, u: &SpectralField) -> Lyapunov {
    let (wc, uc) = centers(e, u);
    let ew: f64 = e.particles().iter().map(|p| p.mass * (p.w - wc).norm_squared()).sum();
    let eu = u.fluctuation_norm_sq().max(0.0);
    let er = if e.is_empty() { 0.0 } else { 0.5 * (uc - wc).norm_squared() };
    Lyapunov {
        ew,
        eu,
        er,
        l: ew + eu + er,
    }
}

/// `C(c, W0) = (c² + 1) / (c² C0²)` with `C0 = λ2` at the classical speed
/// `g⁻¹(W0)`.
pub fn alignment_constant(c: LightSpeed, w0: f64) -> Result<f64> {
    let v = v_of_w(&Vec3::new(w0, 0.0, 0.0), c)?;
    let c0 = g_radial_prime(v.x, c)?;
    let c2 = c.get() * c.get();
    Ok((c2 + 1.0) / (c2 * c0 * c0))
}

/// `1 / max{1, C_P (½ + ρ_∞) / μ}`.
pub fn theoretical_rate(rho_inf: f64, mu: f64) -> f64 {
    let c_rho = POINCARE * (0.5 + rho_inf.max(0.0));
    1.0 / (c_rho / mu).max(1.0)
}

/// `C(ρ_f, μ) = max{1, C_P (½ + ρ_∞) / μ}`.
pub fn decay_constant(rho_inf: f64, mu: f64) -> f64 {
    1.0 / theoretical_rate(rho_inf, mu)
}

/// `Σ m_p |u(x_p) − w_p|²` with `u` interpolated at the particles.
pub fn drag_dissipation(e: &Ensemble, u_at: &[Vec3]) -> f64 {
    e.particles().iter().zip(u_at).map(|(p, u)| p.mass * (u - p.w).norm_squared()).sum()
}

/// `C(c, W0) φ_min E^w + μ ∫|∇u|² + ∫|u − w|² f`.
pub fn dissipation(
    e: &Ensemble,
    u: &SpectralField,
    tr: &Transform,
    k: &CommKernel,
    mu: f64,
    w0: f64,
) -> Result<f64> {
    let u_at = interpolate(&u.to_physical(tr), tr.grid(), &e.positions());
    let ly = lyapunov(e, u);
    Ok(alignment_constant(e.c(), w0)? * k.min_over_torus() * ly.ew
        + mu * gradient_norm_sq(u, tr)
        + drag_dissipation(e, &u_at))
}

/// `−½ Σ_{p,q} m_p m_q φ(d_T) |v_p − v_q|²`.
pub fn alignment_energy_rate(e: &Ensemble, v: &[Vec3], k: &CommKernel) -> f64 {
    let ps = e.particles();
    if let CommKernel::Constant { amplitude } = k {
        let mut mass = 0.0;
        let mut vbar = Vec3::zeros();
        let mut v2 = 0.0;
        for (p, vp) in ps.iter().zip(v) {
            mass += p.mass;
            vbar += vp * p.mass;
            v2 += p.mass * vp.norm_squared();
        }
        return -amplitude * (mass * v2 - vbar.norm_squared()).max(0.0);
    }
    let mut acc = 0.0;
    for p in 0..ps.len() {
        let mut row = 0.0;
        for q in (p + 1)..ps.len() {
            let dx = min_image(ps[p].x.x - ps[q].x.x);
            let dy = min_image(ps[p].x.y - ps[q].x.y);
            let dz = min_image(ps[p].x.z - ps[q].x.z);
            let phi = k.eval((dx * dx + dy * dy + dz * dz).sqrt());
            row += ps[q].mass * phi * (v[p] - v[q]).norm_squared();
        }
        acc += ps[p].mass * row;
    }
    -acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger {
    /// `Σ m E(v_p) + ½∫|u|²`.
    pub energy_total: f64,
    pub grad_u_sq: f64,
    /// `Σ_p m_p Σ_n W_pn (u_n − v_p)·(u_n − w_p)`.
    pub cross_term: f64,
    /// `−½ Σ m m φ |v_p − v_q|²`.
    pub energy_rhs: f64,
}

impl EnergyLedger {
    /// `d/dt energy_total + μ grad_u_sq + cross_term − energy_rhs` with the
    /// time derivative supplied.
    pub fn residual(&self, d_energy_dt: f64, mu: f64) -> f64 {
        d_energy_dt + mu * self.grad_u_sq + self.cross_term - self.energy_rhs
    }
}

/// Terms of the total-energy balance. The cross term is taken node by node
/// with the coupling stencil, which makes the semi-discrete balance exact.
pub fn energy_ledger(e: &Ensemble, u: &SpectralField, tr: &Transform, k: &CommKernel) -> Result<EnergyLedger> {
    let grid = tr.grid();
    let nodes = u.to_physical(tr);
    let v = e.velocities()?;
    let mut particle_energy = 0.0;
    let mut cross = 0.0;
    for (p, vp) in e.particles().iter().zip(&v) {
        particle_energy += p.mass * energy(vp, e.c())?;
        let mut acc = 0.0;
        for (node, wgt) in cic_stencil(grid, &p.x) {
            if wgt == 0.0 {
                continue;
            }
            let mut un = Vec3::zeros();
            for (a, comp) in nodes.iter().enumerate() {
                un[a] = comp[node];
            }
            acc += wgt * (un - vp).dot(&(un - p.w));
        }
        cross += p.mass * acc;
    }
    Ok(EnergyLedger {
        energy_total: particle_energy + 0.5 * u.l2_norm_sq(),
        grad_u_sq: gradient_norm_sq(u, tr),
        cross_term: cross,
        energy_rhs: alignment_energy_rate(e, &v, k),
    })
}

/// `M_α = Σ m_p |w_p|^α` for each requested α.
pub fn moments(e: &Ensemble, alphas: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .map(|&a| {
            e.particles()
                .iter()
                .map(|p| if a == 0.0 { p.mass } else { p.mass * p.w.norm().powf(a) })
                .sum()
        })
        .collect()
}

/// Mass fraction with `|w_p − w_c| > σ`.
pub fn flocking_probability(e: &Ensemble, sigma: f64) -> f64 {
    let mass = e.total_mass();
    if mass == 0.0 {
        return 0.0;
    }
    let wc = e.momentum() / mass;
    e.particles().iter().filter(|p| (p.w - wc).norm() > sigma).map(|p| p.mass).sum::<f64>() / mass
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Ensemble binned into cubic position cells and radial velocity shells;
/// inside a bin the density is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    d: usize,
    nx: usize,
    edges: Vec<f64>,
    /// Mass per position cell and shell.
    mass: Vec<Vec<f64>>,
}

impl PhaseHistogram {
    pub fn build(e: &Ensemble, nx: usize, shells: usize) -> Result<Self> {
        if e.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        Self::build_with_radius(e, nx, shells, e.support_radius().max(1e-12) * (1.0 + 1e-9))
    }

    /// Shells cover `[0, rmax)`; particles beyond land in the outer shell.
    pub fn build_with_radius(e: &Ensemble, nx: usize, shells: usize, rmax: f64) -> Result<Self> {
        if e.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        if nx == 0 || shells == 0 || !(rmax > 0.0) {
            return Err(Error::InvalidParameter("histogram needs at least one bin per axis".into()));
        }
        let d = e.d();
        let edges: Vec<f64> = (0..=shells).map(|k| rmax * k as f64 / shells as f64).collect();
        let ncells = nx.pow(d as u32);
        let mut mass = vec![vec![0.0; shells]; ncells];
        for p in e.particles() {
            let mut cell = 0;
            for a in 0..d {
                let i = ((p.x[a] * nx as f64) as usize).min(nx - 1);
                cell = cell * nx + i;
            }
            let k = ((p.w.norm() / rmax * shells as f64) as usize).min(shells - 1);
            mass[cell][k] += p.mass;
        }
        Ok(Self { d, nx, edges, mass })
    }

    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    fn cell_volume(&self) -> f64 {
        (1.0 / self.nx as f64).powi(self.d as i32)
    }

    fn density(&self, cell: usize, k: usize) -> f64 {
        let d = self.d as i32;
        let shell = unit_ball_volume(self.d) * (self.edges[k + 1].powi(d) - self.edges[k].powi(d));
        self.mass[cell][k] / (self.cell_volume() * shell)
    }

    /// `m_α g(x) = ∫|w|^α g dw`, exact for the binned density.
    pub fn local_moment(&self, cell: usize, alpha: f64) -> f64 {
        let d = self.d as f64;
        let surface = unit_ball_volume(self.d) * d;
        (0..self.edges.len() - 1)
            .map(|k| {
                let (a, b) = (self.edges[k], self.edges[k + 1]);
                self.density(cell, k) * surface * (b.powf(alpha + d) - a.powf(alpha + d)) / (alpha + d)
            })
            .sum()
    }

    /// Largest bin-density difference; both histograms must share their bins.
    pub fn linf_distance(&self, other: &PhaseHistogram) -> Result<f64> {
        if self.d != other.d || self.nx != other.nx || self.edges != other.edges {
            return Err(Error::InvalidParameter("histograms have different bins".into()));
        }
        let mut worst: f64 = 0.0;
        for cell in 0..self.cells() {
            for k in 0..self.edges.len() - 1 {
                worst = worst.max((self.density(cell, k) - other.density(cell, k)).abs());
            }
        }
        Ok(worst)
    }

    /// `‖g(x, ·)‖_∞`.
    pub fn local_sup(&self, cell: usize) -> f64 {
        (0..self.edges.len() - 1).map(|k| self.density(cell, k)).fold(0.0, f64::max)
    }
}

/// Largest violation over position cells of
/// `m_α ≤ (ω_d ‖g‖_∞ + 1) m_β^{(α+d)/(β+d)}`; nonpositive when the
/// interpolation inequality holds.
pub fn moment_interpolation_check(h: &PhaseHistogram, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha < beta) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= alpha < beta, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let d = h.d as f64;
    let mut worst = f64::NEG_INFINITY;
    for cell in 0..h.cells() {
        let lhs = h.local_moment(cell, alpha);
        let mb = h.local_moment(cell, beta);
        let bound = (unit_ball_volume(h.d) * h.local_sup(cell) + 1.0) * mb.powf((alpha + d) / (beta + d));
        worst = worst.max(lhs - bound);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least-squares line through `(t, ln L)` for samples inside the window.
pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::InvalidParameter(format!("empty fit window [{t0}, {t1}]")));
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t0 && *t <= t1).collect();
    if pts.len() < 10 {
        return Err(Error::TooFewSamples(pts.len()));
    }
    if let Some(&(t, value)) = pts.iter().find(|(_, l)| !(*l > 0.0)) {
        return Err(Error::NonPositiveSample { t, value });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for &(t, l) in &pts {
        let (dt, dy) = (t - mt, l.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts.iter().map(|&(t, l)| (l.ln() - intercept - slope * t).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(DecayFit {
        rate: -slope,
        intercept,
        r_squared,
        window,
        samples: pts.len(),
    })
}

/// One sampled time point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub t: f64,
    pub mass: f64,
    pub particle_momentum: Vec3,
    pub fluid_momentum: Vec3,
    pub w_c: Vec3,
    pub u_c: Vec3,
    pub ew: f64,
    pub eu: f64,
    pub er: f64,
    pub l: f64,
    pub d: f64,
    pub grad_u_sq: f64,
    pub drag_dissipation: f64,
    pub m2: f64,
    pub support_w: f64,
    pub rho_inf: f64,
    pub energy_total: f64,
    pub energy_rhs: f64,
    pub cross_term: f64,
    /// Running maximum of `support_w`.
    pub w0: f64,
    /// `D` with φ bounded below over the periodic diameter instead.
    pub d_periodic: f64,
    /// `½ Σ m m φ (v_p − v_q)·(w_p − w_q)`, the unestimated alignment term.
    pub align_raw: f64,
    pub u_l2: f64,
    pub u_sup: f64,
    /// `max_{p,i} |w_p^i|`.
    pub w_inf: f64,
    pub m2_ceiling: f64,
    pub support_ceiling: f64,
    /// `max_k |k · û(k)|`.
    pub divergence: f64,
}

impl DiagRecord {
    pub fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["t".to_string(), "mass".to_string()];
        for name in ["pm", "fm", "wc", "uc"] {
            h.extend((1..=dim).map(|a| format!("{name}_{a}")));
        }
        for name in [
            "Ew",
            "Eu",
            "Er",
            "L",
            "D",
            "grad_u_sq",
            "drag_dissipation",
            "M2",
            "support_W",
            "rho_inf",
            "energy_total",
            "energy_rhs",
            "cross_term",
            "W0",
            "D_periodic",
            "align_raw",
            "u_l2",
            "u_sup",
            "w_inf",
            "M2_ceiling",
            "support_ceiling",
            "divergence",
        ] {
            h.push(name.to_string());
        }
        h
    }

    pub fn values(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![self.t, self.mass];
        for vec in [self.particle_momentum, self.fluid_momentum, self.w_c, self.u_c] {
            v.extend((0..dim).map(|a| vec[a]));
        }
        v.extend([
            self.ew,
            self.eu,
            self.er,
            self.l,
            self.d,
            self.grad_u_sq,
            self.drag_dissipation,
            self.m2,
            self.support_w,
            self.rho_inf,
            self.energy_total,
            self.energy_rhs,
            self.cross_term,
            self.w0,
            self.d_periodic,
            self.align_raw,
            self.u_l2,
            self.u_sup,
            self.w_inf,
            self.m2_ceiling,
            self.support_ceiling,
            self.divergence,
        ]);
        v
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.particle_momentum + self.fluid_momentum
    }
}

pub fn write_csv_header<W: Write>(mut w: W, dim: usize) -> Result<()> {
    writeln!(w, "{}", DiagRecord::header(dim).join(","))?;
    Ok(())
}

pub fn write_csv_row<W: Write>(mut w: W, r: &DiagRecord, dim: usize) -> Result<()> {
    let vals: Vec<String> = r.values(dim).iter().map(|x| x.to_string()).collect();
    writeln!(w, "{}", vals.join(","))?;
    Ok(())
}

/// Sampler that carries the running quantities (support maximum, fluid
/// norms, initial moments) needed for the bound ceilings.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    kernel: CommKernel,
    mu: f64,
    w0: f64,
    u_l2_sup: f64,
    u_inf_sup: f64,
    initial: Option<(f64, f64)>,
}

impl Diagnostics {
    pub fn new(kernel: CommKernel, mu: f64) -> Self {
        Self {
            kernel,
            mu,
            w0: 0.0,
            u_l2_sup: 0.0,
            u_inf_sup: 0.0,
            initial: None,
        }
    }

    pub fn kernel(&self) -> &CommKernel {
        &self.kernel
    }

    pub fn record(&mut self, t: f64, e: &Ensemble, u: &SpectralField, tr: &Transform) -> Result<DiagRecord> {
        let grid = tr.grid();
        let dim = grid.d();
        let nodes = u.to_physical(tr);
        let u_at = interpolate(&nodes, grid, &e.positions());
        let dep = scatter(e, grid, None);
        let (w_c, u_c) = centers(e, u);
        let ly = lyapunov(e, u);
        let ledger = energy_ledger(e, u, tr, &self.kernel)?;
        let m = moments(e, &[0.0, 2.0]);
        let support_w = e.support_radius();
        let w_inf = e
            .particles()
            .iter()
            .map(|p| (0..dim).map(|a| p.w[a].abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let u_l2 = u.l2_norm_sq().sqrt();
        let u_sup = max_speed(&nodes);
        if self.initial.is_none() {
            self.initial = Some((m[1], w_inf));
        }
        let (m2_0, w_inf_0) = self.initial.unwrap_or_default();
        self.w0 = self.w0.max(support_w);
        self.u_l2_sup = self.u_l2_sup.max(u_l2);
        self.u_inf_sup = self.u_inf_sup.max(u_sup);

        let c_align = alignment_constant(e.c(), self.w0)?;
        let drag = drag_dissipation(e, &u_at);
        let viscous = self.mu * ledger.grad_u_sq;
        let v = e.velocities()?;
        let forces = e.alignment_from_velocities(&self.kernel, &v, crate::ensemble::ForceMethod::Auto);
        let align_raw: f64 = -e.particles().iter().zip(&forces).map(|(p, l)| p.mass * p.w.dot(l)).sum::<f64>();
        let m2_ceiling = (m2_0.sqrt() + self.u_l2_sup).powi(2);
        let support_ceiling = w_inf_0 + self.kernel.sup() * (m2_0.sqrt() + self.u_l2_sup) + self.u_inf_sup;

        Ok(DiagRecord {
            t,
            mass: m[0],
            particle_momentum: e.momentum(),
            fluid_momentum: u_c,
            w_c,
            u_c,
            ew: ly.ew,
            eu: ly.eu,
            er: ly.er,
            l: ly.l,
            d: c_align * self.kernel.min_over_torus() * ly.ew + viscous + drag,
            grad_u_sq: ledger.grad_u_sq,
            drag_dissipation: drag,
            m2: m[1],
            support_w,
            rho_inf: dep.max_density(),
            energy_total: ledger.energy_total,
            energy_rhs: ledger.energy_rhs,
            cross_term: ledger.cross_term,
            w0: self.w0,
            d_periodic: c_align * self.kernel.min_over_periodic_diameter(dim) * ly.ew + viscous + drag,
            align_raw,
            u_l2,
            u_sup,
            w_inf,
            m2_ceiling,
            support_ceiling,
            divergence: u.max_divergence(tr),
        })
    }
}

/// Residuals of the two dissipation inequalities at one interior sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPoint {
    pub t: f64,
    /// Centered difference of `L` plus `2D`; at most zero in exact arithmetic.
    pub dissipation_excess: f64,
    /// `½L − C(ρ_f, μ) D`; at most zero in exact arithmetic.
    pub coercivity_excess: f64,
}

/// Evaluates both inequalities at every interior sample, using centered
/// differences of the sampled `L` and the sample's own `ρ_∞`.
pub fn chain_residuals(records: &[DiagRecord], mu: f64) -> Vec<ChainPoint> {
    records
        .windows(3)
        .map(|w| {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let dldt = (c.l - a.l) / (c.t - a.t);
            ChainPoint {
                t: b.t,
                dissipation_excess: dldt + 2.0 * b.d,
                coercivity_excess: 0.5 * b.l - decay_constant(b.rho_inf, mu) * b.d,
            }
        })
        .collect()
}

/// Forward-difference residuals of the energy balance between consecutive
/// samples.
pub fn energy_residuals(records: &[DiagRecord], mu: f64) -> Vec<(f64, f64)> {
    records
        .windows(2)
        .map(|w| {
            let rate = (w[1].energy_total - w[0].energy_total) / (w[1].t - w[0].t);
            (w[0].t, rate + mu * w[0].grad_u_sq + w[0].cross_term - w[0].energy_rhs)
        })
        .collect()
}
