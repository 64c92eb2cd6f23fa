//! `rcsns iterate`: successive-approximation study.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rcsns::picard::{run_picard, IterationRecord, IterationTrace};
use rcsns::{Error, Result};

use crate::exit;
use crate::manifest::{exit_code, load_config, write_atomic, Check, Clock};

/// Required contraction `Δ^last / Δ^1`.
pub const CONTRACTION_TOL: f64 = 1e-6;

pub fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> u8 {
    let cfg = match load_config(config, out, seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let icfg = match cfg.iteration_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = fs::create_dir_all(&cfg.output) {
        eprintln!("error: cannot create {}: {e}", cfg.output.display());
        return exit::BAD_INPUT;
    }
    let clock = Clock::start();
    let (status, checks, error, code) = match run_picard(&icfg) {
        Ok(trace) => match write_trace(&cfg.output, &trace) {
            Ok(()) => {
                let checks = evaluate(&trace.records);
                for c in &checks {
                    let verdict = if c.passed { "PASS" } else { "FAIL" };
                    println!("{verdict} {}: {:.6e} (tolerance {:.3e})", c.name, c.value, c.tolerance);
                }
                let status = if trace.converged { "converged" } else { "completed" };
                (status, checks, None, exit::OK)
            }
            Err(e) => ("failed", Vec::new(), Some(e.to_string()), exit_code(&e)),
        },
        Err(Error::Divergence { iterate, trace }) => {
            if let Err(e) = write_trace(&cfg.output, &trace) {
                eprintln!("warning: trace not written: {e}");
            }
            let msg = format!("iteration diverged at iterate {iterate}");
            eprintln!("error: {msg}");
            ("diverged", evaluate(&trace.records), Some(msg), exit::DIVERGED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ("failed", Vec::new(), Some(e.to_string()), exit_code(&e))
        }
    };
    let manifest = clock.finish("iterate", status, cfg.clone(), checks, error);
    if let Err(e) = write_atomic(&cfg.output, &manifest) {
        eprintln!("error: manifest not written: {e}");
        return exit::BAD_INPUT.max(code);
    }
    code
}

/// One JSON object per iterate.
fn write_trace(dir: &Path, trace: &IterationTrace) -> Result<()> {
    let mut f = BufWriter::new(File::create(dir.join("trace.jsonl"))?);
    for r in &trace.records {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

fn evaluate(records: &[IterationRecord]) -> Vec<Check> {
    let delta: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let omega: Vec<f64> = records.iter().map(|r| r.omega).collect();
    let decreasing = |s: &[f64]| s.len() < 3 || s[1..].windows(2).all(|w| w[1] < w[0]);
    let mut checks = vec![
        Check::flag("delta_decreasing", false, decreasing(&delta)),
        Check::flag("omega_decreasing", false, decreasing(&omega)),
    ];
    if let (Some(first), Some(last)) = (delta.first(), delta.last()) {
        if *first > 0.0 {
            checks.push(Check::at_most("delta_contraction", false, last / first, CONTRACTION_TOL));
        }
    }
    // Second differences of ln ω over iterates n >= 3.
    let logs: Vec<f64> = omega.iter().skip(2).map(|w| w.ln()).collect();
    let curvature = logs
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    if curvature.is_finite() {
        checks.push(Check::at_most("log_omega_concave", false, curvature, 0.0));
    }
    let l2 = records
        .iter()
        .map(|r| r.u_l2_sup - r.u_l2_ceiling)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("u_l2_ceiling", false, l2, 0.0));
    let sup = records
        .iter()
        .map(|r| r.w_inf - r.support_ceiling)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("support_ceiling", false, sup, 0.0));
    checks
}
