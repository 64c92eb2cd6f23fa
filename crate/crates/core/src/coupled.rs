//! Monolithic RK4 for particles and fluid together.
//!
//! Each stage gathers the fluid at the particles, deposits the particles on
//! the grid and evaluates both right-hand sides from the same stage state.
//! Particles use classical RK4, the fluid the integrating-factor variant with
//! the same stage times. The zero mode has unit integrating factor, so total
//! momentum changes only by roundoff.

use crate::coupling::{interpolate, scatter};
use crate::diagnostics::{DiagRecord, Diagnostics};
use crate::ensemble::{Ensemble, EnsembleDeriv, ForceMethod, MAX_DT};
use crate::error::{Error, Result};
use crate::fluid::{
    check_cfl, drag_source, evaluate_convection, if_rk4_combine, leray_project_in_place, propagate_add,
    IntegratingFactor, SpectralField,
};
use crate::grid::Transform;
use crate::kernels::{mollifier_symbol, CommKernel, CutoffSpec, MollifierSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledParams {
    pub kernel: CommKernel,
    pub mu: f64,
    pub convection: bool,
    /// Regularized mode: particles feel, and the fluid is convected by,
    /// `m_ε ∗ u`.
    pub mollifier: Option<MollifierSpec>,
    /// Regularized mode: deposits are weighted by `γ_ε(w)`.
    pub cutoff: Option<CutoffSpec>,
    pub force_method: ForceMethod,
}

impl CoupledParams {
    pub fn new(kernel: CommKernel, mu: f64) -> Result<Self> {
        kernel.validate()?;
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity must be positive, got {mu}")));
        }
        Ok(Self {
            kernel,
            mu,
            convection: true,
            mollifier: None,
            cutoff: None,
            force_method: ForceMethod::Auto,
        })
    }
}

/// Time derivatives of the whole state at one stage.
#[derive(Debug, Clone)]
pub struct StageDeriv {
    pub particles: EnsembleDeriv,
    pub fluid: SpectralField,
    /// Nodal `u` of the stage state.
    pub u_nodes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CoupledSystem {
    tr: Transform,
    params: CoupledParams,
    symbol: Option<Vec<f64>>,
}

impl CoupledSystem {
    pub fn new(tr: Transform, params: CoupledParams) -> Result<Self> {
        let symbol = match &params.mollifier {
            Some(m) => Some(mollifier_symbol(m, &tr)?),
            None => None,
        };
        Ok(Self { tr, params, symbol })
    }

    pub fn transform(&self) -> &Transform {
        &self.tr
    }

    pub fn params(&self) -> &CoupledParams {
        &self.params
    }

    pub fn symbol(&self) -> Option<&[f64]> {
        self.symbol.as_deref()
    }

    pub fn stage(&self, e: &Ensemble, u: &SpectralField) -> Result<StageDeriv> {
        let grid = *self.tr.grid();
        if *u.grid() != grid || e.d() != grid.d() {
            return Err(Error::GridMismatch("ensemble, field and system disagree".into()));
        }
        let (mut f, u_nodes, felt) = if self.params.convection {
            let ev = evaluate_convection(u, &self.tr, self.symbol());
            let mut f = ev.nonlinear;
            f.scale(-1.0);
            (f, ev.u, ev.convecting)
        } else {
            let nodes = u.to_physical(&self.tr);
            let felt = match self.symbol() {
                Some(s) => u.filtered(s).to_physical(&self.tr),
                None => nodes.clone(),
            };
            (SpectralField::zeros(grid), nodes, felt)
        };

        let u_at = interpolate(&felt, &grid, &e.positions());
        let particles = e.rhs_with(&self.params.kernel, &u_at, self.params.force_method)?;

        let dep = scatter(e, &grid, self.params.cutoff.as_ref());
        let source = drag_source(&dep.rho, &dep.j, &u_nodes, &self.tr)?;
        f.axpy(1.0, &source);
        leray_project_in_place(&mut f, &self.tr);
        Ok(StageDeriv {
            particles,
            fluid: f,
            u_nodes,
        })
    }

    /// One step of size `dt`; rejects steps violating the fluid CFL bound.
    pub fn step(&self, e: &Ensemble, u: &SpectralField, dt: f64) -> Result<(Ensemble, SpectralField)> {
        if !(dt.is_finite() && dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::TimeStep(dt));
        }
        let ifac = IntegratingFactor::new(&self.tr, self.params.mu, dt);
        let k1 = self.stage(e, u)?;
        check_cfl(&k1.u_nodes, dt, self.tr.grid().h())?;

        let e2 = e.advanced(&k1.particles, 0.5 * dt);
        let mut u2 = u.clone();
        u2.axpy(0.5 * dt, &k1.fluid);
        let u2 = u2.filtered(&ifac.half);
        let k2 = self.stage(&e2, &u2)?;

        let e3 = e.advanced(&k2.particles, 0.5 * dt);
        let mut u3 = u.filtered(&ifac.half);
        u3.axpy(0.5 * dt, &k2.fluid);
        let k3 = self.stage(&e3, &u3)?;

        let e4 = e.advanced(&k3.particles, dt);
        let u4 = propagate_add(&ifac.full, u, dt, &ifac.half, &k3.fluid);
        let k4 = self.stage(&e4, &u4)?;

        let e_next = e.rk4_combine([&k1.particles, &k2.particles, &k3.particles, &k4.particles], dt);
        let u_next = if_rk4_combine(&ifac, u, &k1.fluid, &k2.fluid, &k3.fluid, &k4.fluid);
        Ok((e_next, u_next))
    }
}

#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub ensemble: Ensemble,
    pub u: SpectralField,
}

/// Sampling cadence of [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
}

impl Schedule {
    /// `round(t_final / dt)` steps.
    pub fn new(dt: f64, t_final: f64, sample_every: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::TimeStep(dt));
        }
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!("final time must be nonnegative, got {t_final}")));
        }
        if sample_every == 0 {
            return Err(Error::InvalidParameter("sampling cadence must be at least one step".into()));
        }
        Ok(Self {
            dt,
            steps: (t_final / dt).round() as usize,
            sample_every,
        })
    }

    pub fn is_sampled(&self, step: usize) -> bool {
        step % self.sample_every == 0 || step == self.steps
    }
}

/// Advances `state` through the schedule, recording diagnostics at step 0,
/// every `sample_every` steps and at the last step. `hook` sees every
/// sampled state together with its record.
pub fn integrate<F>(
    sys: &CoupledSystem,
    state: &mut State,
    schedule: Schedule,
    diag: &mut Diagnostics,
    mut hook: F,
) -> Result<Vec<DiagRecord>>
where
    F: FnMut(usize, &State, &DiagRecord) -> Result<()>,
{
    let tr = sys.transform();
    let t0 = state.t;
    let mut records = Vec::new();
    let mut sample = |step: usize, state: &State, records: &mut Vec<DiagRecord>| -> Result<()> {
        let r = diag.record(state.t, &state.ensemble, &state.u, tr)?;
        hook(step, state, &r)?;
        records.push(r);
        Ok(())
    };
    sample(0, state, &mut records)?;
    for step in 1..=schedule.steps {
        let (e, u) = sys.step(&state.ensemble, &state.u, schedule.dt)?;
        state.ensemble = e;
        state.u = u;
        state.t = t0 + step as f64 * schedule.dt;
        if schedule.is_sampled(step) {
            sample(step, state, &mut records)?;
        }
    }
    Ok(records)
}
