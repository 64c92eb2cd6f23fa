//! `rcsns simulate`: one coupled run with streamed diagnostics.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rcsns::config::RunConfig;
use rcsns::coupled::{integrate, CoupledSystem, State};
use rcsns::diagnostics::{
    chain_residuals, fit_decay, moment_interpolation_check, theoretical_rate, write_csv_header, write_csv_row,
    DiagRecord, Diagnostics, PhaseHistogram,
};
use rcsns::fluid::write_checkpoint;
use rcsns::{Error, Result};

use crate::exit;
use crate::manifest::{exit_code, load_config, write_atomic, Check, Clock};

/// Hard bound on `max |k·û|` at every sample.
pub const DIVERGENCE_TOL: f64 = 1e-10;
pub const MOMENTUM_TOL: f64 = 1e-10;
/// Chain residual tolerance as a fraction of `L(0)`.
pub const CHAIN_TOL: f64 = 1e-3;
pub const INTERPOLATION_TOL: f64 = 1e-12;
pub const FIT_WINDOW: (f64, f64) = (1.0, 5.0);
const HIST_CELLS: usize = 4;
const HIST_SHELLS: usize = 8;
/// `(α, β)` pairs for the moment interpolation check.
const MOMENT_PAIRS: [(f64, f64); 2] = [(0.0, 2.0), (1.0, 2.0)];

pub fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> u8 {
    let cfg = match load_config(config, out, seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = fs::create_dir_all(cfg.output.join("checkpoints")) {
        eprintln!("error: cannot create {}: {e}", cfg.output.display());
        return exit::BAD_INPUT;
    }
    let clock = Clock::start();
    let (status, checks, error, code) = match simulate(&cfg) {
        Ok(outcome) => {
            let failed_hard = outcome.checks.iter().any(|c| c.hard && !c.passed);
            report(&outcome.checks);
            if failed_hard {
                ("hard_check_failed", outcome.checks, None, exit::CHECK_FAILED)
            } else {
                ("completed", outcome.checks, None, exit::OK)
            }
        }
        Err(Failure { error, last_good }) => {
            let code = exit_code(&error);
            if let Some(state) = last_good {
                if let Err(e) = write_state(&cfg.output.join("checkpoints"), "last_good", &state) {
                    eprintln!("warning: last-good checkpoint not written: {e}");
                }
            }
            eprintln!("error: {error}");
            let status = if code == exit::NUMERICAL { "numerical_failure" } else { "failed" };
            (status, Vec::new(), Some(error.to_string()), code)
        }
    };
    let manifest = clock.finish("simulate", status, cfg.clone(), checks, error);
    if let Err(e) = write_atomic(&cfg.output, &manifest) {
        eprintln!("error: manifest not written: {e}");
        return exit::BAD_INPUT.max(code);
    }
    code
}

fn report(checks: &[Check]) {
    for c in checks {
        let kind = if c.hard { "hard" } else { "soft" };
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} [{kind}] {}: {:.6e} (tolerance {:.3e})", c.name, c.value, c.tolerance);
    }
}

struct Outcome {
    checks: Vec<Check>,
}

struct Failure {
    error: Error,
    last_good: Option<State>,
}

fn write_state(dir: &Path, tag: &str, state: &State) -> Result<()> {
    let mut f = BufWriter::new(File::create(dir.join(format!("fluid_{tag}.bin")))?);
    write_checkpoint(&mut f, &state.u, state.t)?;
    f.flush()?;
    let mut e = BufWriter::new(File::create(dir.join(format!("ensemble_{tag}.csv")))?);
    state.ensemble.write_csv(&mut e)?;
    e.flush()?;
    Ok(())
}

fn all_finite(r: &DiagRecord, dim: usize) -> bool {
    r.values(dim).iter().all(|v| v.is_finite())
}

/// Runs the configured simulation; the returned checks are evaluated on the
/// full record set.
fn simulate(cfg: &RunConfig) -> std::result::Result<Outcome, Failure> {
    let fail = |error: Error| Failure { error, last_good: None };
    let (tr, params, mut state) = cfg.build().map_err(fail)?;
    let schedule = cfg.schedule().map_err(fail)?;
    let dim = cfg.dimension;
    let c = cfg.light_speed;
    let sys = CoupledSystem::new(tr, params.clone()).map_err(fail)?;
    let mut diag = Diagnostics::new(params.kernel.clone(), params.mu);

    let csv_path = cfg.output.join("diagnostics.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).map_err(|e| fail(e.into()))?);
    write_csv_header(&mut csv, dim).map_err(fail)?;

    let ckpt_dir = cfg.output.join("checkpoints");
    let mut last_good: Option<State> = None;
    let mut sample_count = 0usize;
    let mut max_speed_ratio: f64 = 0.0;
    let mut interpolation: f64 = f64::NEG_INFINITY;

    let result = integrate(&sys, &mut state, schedule, &mut diag, |step, st, rec| {
        if !all_finite(rec, dim) {
            return Err(Error::NonFinite { t: rec.t });
        }
        write_csv_row(&mut csv, rec, dim)?;
        for v in st.ensemble.velocities()? {
            max_speed_ratio = max_speed_ratio.max(v.norm() / c);
        }
        if cfg.snapshot_every > 0 && sample_count % cfg.snapshot_every == 0 {
            write_state(&ckpt_dir, &format!("{step:06}"), st)?;
            if !st.ensemble.is_empty() {
                let h = PhaseHistogram::build(&st.ensemble, HIST_CELLS, HIST_SHELLS)?;
                for (a, b) in MOMENT_PAIRS {
                    interpolation = interpolation.max(moment_interpolation_check(&h, a, b)?);
                }
            }
        }
        sample_count += 1;
        last_good = Some(st.clone());
        Ok(())
    });
    let flushed = csv.flush();
    let records = match result {
        Ok(r) => r,
        Err(error) => return Err(Failure { error, last_good }),
    };
    flushed.map_err(|e| fail(e.into()))?;

    Ok(Outcome {
        checks: evaluate(cfg, &records, max_speed_ratio, interpolation),
    })
}

fn evaluate(cfg: &RunConfig, records: &[DiagRecord], max_speed_ratio: f64, interpolation: f64) -> Vec<Check> {
    let mu = cfg.viscosity;
    let first = &records[0];
    let mut checks = Vec::new();

    let mass_constant = records.iter().all(|r| r.mass.to_bits() == first.mass.to_bits());
    checks.push(Check::flag("mass_constant", true, mass_constant));
    let div = records.iter().map(|r| r.divergence).fold(0.0, f64::max);
    checks.push(Check::at_most("divergence", true, div, DIVERGENCE_TOL));
    checks.push(Check::at_most("speed_below_light", true, max_speed_ratio, 1.0 - f64::EPSILON));
    checks.push(Check::flag("finite", true, true));

    let p0 = first.total_momentum();
    let scale = if p0.norm() > 0.0 { p0.norm() } else { 1.0 };
    let drift = records
        .iter()
        .map(|r| (r.total_momentum() - p0).norm() / scale)
        .fold(0.0, f64::max);
    checks.push(Check::at_most("momentum_drift", false, drift, MOMENTUM_TOL));

    let chain = chain_residuals(records, mu);
    let tol = CHAIN_TOL * first.l;
    let a = chain.iter().map(|p| p.dissipation_excess).fold(f64::NEG_INFINITY, f64::max);
    let b = chain.iter().map(|p| p.coercivity_excess).fold(f64::NEG_INFINITY, f64::max);
    if !chain.is_empty() {
        checks.push(Check::at_most("chain_dissipation", false, a, tol));
        checks.push(Check::at_most("chain_coercivity", false, b, tol));
    }

    let m2 = records.iter().map(|r| r.m2 - r.m2_ceiling).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("m2_ceiling", false, m2, 0.0));
    let sup = records
        .iter()
        .map(|r| r.support_w - r.support_ceiling)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("support_ceiling", false, sup, 0.0));
    if interpolation.is_finite() {
        checks.push(Check::at_most("moment_interpolation", false, interpolation, INTERPOLATION_TOL));
    }

    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.l)).collect();
    if let Ok(fit) = fit_decay(&series, FIT_WINDOW) {
        let rho = records
            .iter()
            .filter(|r| r.t >= FIT_WINDOW.0 && r.t <= FIT_WINDOW.1)
            .map(|r| r.rho_inf)
            .fold(0.0, f64::max);
        checks.push(Check::at_least("decay_rate", false, fit.rate, 0.95 * theoretical_rate(rho, mu)));
        checks.push(Check::at_least("decay_r_squared", false, fit.r_squared, 0.99));
    }
    checks
}
