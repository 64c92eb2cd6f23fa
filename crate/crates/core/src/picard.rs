//! Successive approximations for the regularized system: alternate a
//! Navier-Stokes solve driven by the previous iterate's drag with a kinetic
//! solve driven by the new fluid, and measure the distance between
//! consecutive iterates.

use serde::Serialize;

use crate::coupled::CoupledParams;
use crate::coupling::{interpolate, scatter};
use crate::diagnostics::PhaseHistogram;
use crate::ensemble::{step_rk4, Ensemble, MAX_DT};
use crate::error::{Error, Result};
use crate::fluid::{drag_source, max_speed, FluidParams, FluidSolver, SpectralField};
use crate::grid::Transform;
use crate::kernels::{min_image, mollifier_symbol};
use crate::Vec3;

/// Both distances below this end the iteration.
pub const CONVERGED: f64 = 1e-12;
/// Consecutive joint increases that count as divergence.
pub const DIVERGENCE_RUN: usize = 3;
const HIST_CELLS: usize = 4;
const HIST_SHELLS: usize = 8;

#[derive(Debug, Clone)]
pub struct IterationConfig {
    pub tr: Transform,
    /// Must carry both a mollifier and a cutoff.
    pub params: CoupledParams,
    pub initial: Ensemble,
    pub u_in: SpectralField,
    pub dt: f64,
    pub t_final: f64,
    /// Fluid histories are stored every this many steps.
    pub sample_every: usize,
    pub max_iter: usize,
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.t_final)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::TimeStep(self.dt));
        }
        if self.max_iter < 2 {
            return Err(Error::InvalidParameter("need at least two iterates".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("history cadence must be at least one step".into()));
        }
        if self.params.mollifier.is_none() || self.params.cutoff.is_none() {
            return Err(Error::InvalidParameter("iteration needs a mollifier and a cutoff".into()));
        }
        if *self.u_in.grid() != *self.tr.grid() || self.initial.d() != self.tr.grid().d() {
            return Err(Error::GridMismatch("initial data and grid disagree".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }

    pub fn step_time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    fn sample_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut s: Vec<usize> = (0..=n).step_by(self.sample_every).collect();
        if s.last() != Some(&n) {
            s.push(n);
        }
        s
    }
}

/// Fluid iterate stored at the sample times.
#[derive(Debug, Clone)]
pub struct FluidHistory {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    /// Nodal `u`.
    pub nodes: Vec<Vec<Vec<f64>>>,
    /// Nodal `m_ε ∗ u`.
    pub felt: Vec<Vec<Vec<f64>>>,
}

fn lerp_nodes(a: &[Vec<f64>], b: &[Vec<f64>], theta: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + theta * (q - p)).collect())
        .collect()
}

impl FluidHistory {
    fn build(times: Vec<f64>, fields: Vec<SpectralField>, tr: &Transform, symbol: &[f64]) -> Self {
        let nodes = fields.iter().map(|f| f.to_physical(tr)).collect();
        let felt = fields.iter().map(|f| f.filtered(symbol).to_physical(tr)).collect();
        Self {
            times,
            fields,
            nodes,
            felt,
        }
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let last = self.times.len() - 1;
        if last == 0 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[last] {
            return (last - 1, 1.0);
        }
        let i = self.times.partition_point(|s| *s <= t) - 1;
        (i, (t - self.times[i]) / (self.times[i + 1] - self.times[i]))
    }

    fn at(data: &[Vec<Vec<f64>>], (i, theta): (usize, f64)) -> Vec<Vec<f64>> {
        if theta == 0.0 || data.len() == 1 {
            data[i].clone()
        } else if theta == 1.0 {
            data[i + 1].clone()
        } else {
            lerp_nodes(&data[i], &data[i + 1], theta)
        }
    }

    /// Linear interpolation of nodal `u` in time.
    pub fn nodes_at(&self, t: f64) -> Vec<Vec<f64>> {
        Self::at(&self.nodes, self.bracket(t))
    }

    /// Linear interpolation of nodal `m_ε ∗ u` in time.
    pub fn felt_at(&self, t: f64) -> Vec<Vec<f64>> {
        Self::at(&self.felt, self.bracket(t))
    }

    pub fn sup_l2(&self) -> f64 {
        self.fields.iter().map(|f| f.l2_norm_sq().sqrt()).fold(0.0, f64::max)
    }

    pub fn sup_felt_speed(&self) -> f64 {
        self.felt.iter().map(|f| max_speed(f)).fold(0.0, f64::max)
    }
}

/// Particle states at every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Ensemble>,
}

impl Trajectory {
    fn constant(e: &Ensemble, times: Vec<f64>) -> Self {
        let states = vec![e.clone(); times.len()];
        Self { times, states }
    }

    pub fn last(&self) -> &Ensemble {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// `sup_t max_p |z_p(t) − z'_p(t)|` with positions compared by minimum image.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.states.len() != b.states.len() {
        return Err(Error::LengthMismatch {
            expected: a.states.len(),
            got: b.states.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for (ea, eb) in a.states.iter().zip(&b.states) {
        if ea.len() != eb.len() {
            return Err(Error::LengthMismatch {
                expected: ea.len(),
                got: eb.len(),
            });
        }
        for (p, q) in ea.particles().iter().zip(eb.particles()) {
            let dx = Vec3::new(min_image(p.x.x - q.x.x), min_image(p.x.y - q.x.y), min_image(p.x.z - q.x.z));
            worst = worst.max((dx.norm_squared() + (p.w - q.w).norm_squared()).sqrt());
        }
    }
    Ok(worst)
}

fn field_distance(a: &SpectralField, b: &SpectralField) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// `sup_t ‖u(t) − u'(t)‖_{L²}` over the shared sample times.
pub fn history_distance(a: &FluidHistory, b: &FluidHistory) -> Result<f64> {
    if a.fields.len() != b.fields.len() {
        return Err(Error::LengthMismatch {
            expected: a.fields.len(),
            got: b.fields.len(),
        });
    }
    Ok(a.fields.iter().zip(&b.fields).map(|(x, y)| field_distance(x, y)).fold(0.0, f64::max))
}

fn symbol(cfg: &IterationConfig) -> Result<Vec<f64>> {
    let m = cfg.params.mollifier.as_ref().ok_or_else(|| Error::InvalidParameter("missing mollifier".into()))?;
    mollifier_symbol(m, &cfg.tr)
}

/// Kinetic solve with self-consistent alignment and drag from the stored
/// mollified fluid, interpolated linearly in time.
pub fn kinetic_iterate(hist: &FluidHistory, cfg: &IterationConfig) -> Result<Trajectory> {
    let grid = *cfg.tr.grid();
    let steps = cfg.steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut e = cfg.initial.clone();
    times.push(0.0);
    states.push(e.clone());
    for k in 0..steps {
        let t = cfg.step_time(k);
        e = step_rk4(&e, cfg.dt, |s, off| {
            let felt = hist.felt_at(t + off);
            let u_at = interpolate(&felt, &grid, &s.positions());
            s.rhs_with(&cfg.params.kernel, &u_at, cfg.params.force_method)
        })?;
        times.push(cfg.step_time(k + 1));
        states.push(e.clone());
    }
    Ok(Trajectory { times, states })
}

/// Fluid solve with self-convection by the mollified current iterate and
/// the drag source `−∫ fⁿ (uⁿ − w) γ_ε dw` frozen from the previous pair.
pub fn ns_iterate(traj: &Trajectory, hist: &FluidHistory, cfg: &IterationConfig) -> Result<FluidHistory> {
    let steps = cfg.steps();
    if traj.states.len() != steps + 1 {
        return Err(Error::LengthMismatch {
            expected: steps + 1,
            got: traj.states.len(),
        });
    }
    let grid = *cfg.tr.grid();
    let mut fp = FluidParams::new(cfg.params.mu)?;
    fp.convection = cfg.params.convection;
    fp.mollifier = cfg.params.mollifier.clone();
    let solver = FluidSolver::new(cfg.tr.clone(), fp)?;
    let sources: Vec<SpectralField> = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let dep = scatter(e, &grid, cfg.params.cutoff.as_ref());
            drag_source(&dep.rho, &dep.j, &hist.nodes_at(cfg.step_time(k)), &cfg.tr)
        })
        .collect::<Result<_>>()?;

    let samples = cfg.sample_steps();
    let mut times = vec![0.0];
    let mut fields = vec![cfg.u_in.clone()];
    let mut u = cfg.u_in.clone();
    let mut next = 1;
    for k in 0..steps {
        let (s0, s1) = (&sources[k], &sources[k + 1]);
        u = solver.step_with(&u, cfg.dt, |off| {
            let theta = off / cfg.dt;
            let mut s = s0.clone();
            if theta != 0.0 {
                s.scale(1.0 - theta);
                s.axpy(theta, s1);
            }
            Ok(s)
        })?;
        if next < samples.len() && samples[next] == k + 1 {
            times.push(cfg.step_time(k + 1));
            fields.push(u.clone());
            next += 1;
        }
    }
    Ok(FluidHistory::build(times, fields, &cfg.tr, &symbol(cfg)?))
}

/// `u¹ ≡ u_in` on all sample times and `f¹` driven by it.
pub fn initial_iterate(cfg: &IterationConfig) -> Result<(Trajectory, FluidHistory)> {
    cfg.validate()?;
    let times: Vec<f64> = cfg.sample_steps().into_iter().map(|k| cfg.step_time(k)).collect();
    let fields = vec![cfg.u_in.clone(); times.len()];
    let hist = FluidHistory::build(times, fields, &cfg.tr, &symbol(cfg)?);
    let traj = kinetic_iterate(&hist, cfg)?;
    Ok((traj, hist))
}

/// One line of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    /// `sup_t max_p |zⁿ − zⁿ⁻¹|`.
    pub delta: f64,
    /// `sup_t ‖uⁿ − uⁿ⁻¹‖_{L²}`.
    pub omega: f64,
    /// Binned phase-density distance at the final time.
    pub histogram_linf: f64,
    pub u_l2_sup: f64,
    /// `‖u_in‖ + ∫‖Sⁿ⁻¹‖ dt`, the energy bound of the fluid solve.
    pub u_l2_ceiling: f64,
    pub support_w: f64,
    /// `max_{t,p,i} |w_p^i|`.
    pub w_inf: f64,
    /// Componentwise support ceiling from the running iterate-uniform
    /// fluid bounds.
    pub support_ceiling: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    #[serde(skip)]
    pub histories: Vec<FluidHistory>,
    #[serde(skip)]
    pub last_trajectory: Option<Trajectory>,
}

impl IterationTrace {
    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.omega).collect()
    }
}

fn source_integral(traj: &Trajectory, hist: &FluidHistory, cfg: &IterationConfig) -> Result<f64> {
    let grid = *cfg.tr.grid();
    let mut norms = Vec::with_capacity(traj.states.len());
    for (k, e) in traj.states.iter().enumerate() {
        let dep = scatter(e, &grid, cfg.params.cutoff.as_ref());
        let s = drag_source(&dep.rho, &dep.j, &hist.nodes_at(cfg.step_time(k)), &cfg.tr)?;
        norms.push(s.l2_norm_sq().sqrt());
    }
    Ok(norms.windows(2).map(|w| 0.5 * cfg.dt * (w[0] + w[1])).sum())
}

fn support_stats(traj: &Trajectory) -> (f64, f64) {
    let d = traj.states[0].d();
    let mut radius: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for e in &traj.states {
        radius = radius.max(e.support_radius());
        for p in e.particles() {
            for a in 0..d {
                comp = comp.max(p.w[a].abs());
            }
        }
    }
    (radius, comp)
}

fn histogram_distance(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let r = a.support_radius().max(b.support_radius()).max(1e-12) * (1.0 + 1e-9);
    PhaseHistogram::build_with_radius(a, HIST_CELLS, HIST_SHELLS, r)?
        .linf_distance(&PhaseHistogram::build_with_radius(b, HIST_CELLS, HIST_SHELLS, r)?)
}

/// Runs the iteration until both distances fall below [`CONVERGED`] or
/// `max_iter` iterates exist. Three consecutive joint increases of the
/// distances abort with the trace so far.
pub fn run_picard(cfg: &IterationConfig) -> Result<IterationTrace> {
    cfg.validate()?;
    let e0 = &cfg.initial;
    let m2_0: f64 = e0.particles().iter().map(|p| p.mass * p.w.norm_squared()).sum();
    let w_inf_0 = support_stats(&Trajectory::constant(e0, vec![0.0])).1;
    let phi_sup = cfg.params.kernel.sup();
    let u_in_norm = cfg.u_in.l2_norm_sq().sqrt();

    let (mut traj, mut hist) = initial_iterate(cfg)?;
    let mut u_l2_run = hist.sup_l2();
    let mut felt_run = hist.sup_felt_speed();
    let (support_w, w_inf) = support_stats(&traj);
    let fixed = Trajectory::constant(e0, traj.times.clone());
    let mut trace = IterationTrace {
        records: vec![IterationRecord {
            n: 1,
            delta: trajectory_distance(&traj, &fixed)?,
            omega: u_in_norm,
            histogram_linf: histogram_distance(traj.last(), e0)?,
            u_l2_sup: u_l2_run,
            u_l2_ceiling: u_in_norm,
            support_w,
            w_inf,
            support_ceiling: w_inf_0 + phi_sup * (m2_0.sqrt() + u_l2_run) + felt_run,
        }],
        converged: false,
        histories: vec![hist.clone()],
        last_trajectory: None,
    };
    let mut rising = 0;
    for n in 2..=cfg.max_iter {
        let ceiling = u_in_norm + source_integral(&traj, &hist, cfg)?;
        let next_hist = ns_iterate(&traj, &hist, cfg)?;
        let next_traj = kinetic_iterate(&next_hist, cfg)?;
        u_l2_run = u_l2_run.max(next_hist.sup_l2());
        felt_run = felt_run.max(next_hist.sup_felt_speed());
        let (support_w, w_inf) = support_stats(&next_traj);
        let rec = IterationRecord {
            n,
            delta: trajectory_distance(&next_traj, &traj)?,
            omega: history_distance(&next_hist, &hist)?,
            histogram_linf: histogram_distance(next_traj.last(), traj.last())?,
            u_l2_sup: next_hist.sup_l2(),
            u_l2_ceiling: ceiling,
            support_w,
            w_inf,
            support_ceiling: w_inf_0 + phi_sup * (m2_0.sqrt() + u_l2_run) + felt_run,
        };
        let prev = trace.records.last().expect("first record present");
        rising = if rec.delta > prev.delta && rec.omega > prev.omega { rising + 1 } else { 0 };
        let done = rec.delta < CONVERGED && rec.omega < CONVERGED;
        trace.records.push(rec);
        trace.histories.push(next_hist.clone());
        traj = next_traj;
        hist = next_hist;
        if rising >= DIVERGENCE_RUN {
            trace.last_trajectory = Some(traj);
            return Err(Error::Divergence {
                iterate: n,
                trace: Box::new(trace),
            });
        }
        if done {
            trace.converged = true;
            break;
        }
    }
    trace.last_trajectory = Some(traj);
    Ok(trace)
}
