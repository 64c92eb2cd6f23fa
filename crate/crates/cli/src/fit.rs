//! `rcsns fit`: exponential decay fit of a diagnostics CSV.

use std::path::Path;

use rcsns::diagnostics::{fit_decay, theoretical_rate};

use crate::exit;

/// Fraction of the theoretical rate the fit must reach under `--assert`.
pub const RATE_FRACTION: f64 = 0.95;

fn parse_window(s: &str) -> Option<(f64, f64)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

struct Series {
    points: Vec<(f64, f64)>,
    rho_inf: Vec<f64>,
}

fn read_series(path: &Path) -> anyhow::Result<Series> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let t_col = col("t").ok_or_else(|| anyhow::anyhow!("no 't' column"))?;
    let l_col = col("L").ok_or_else(|| anyhow::anyhow!("no 'L' column"))?;
    let rho_col = col("rho_inf");
    let mut points = Vec::new();
    let mut rho_inf = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let get = |c: usize| -> anyhow::Result<f64> {
            let field = row.get(c).ok_or_else(|| anyhow::anyhow!("row {}: missing column", i + 1))?;
            field
                .trim()
                .parse::<f64>()
                .map_err(|e| anyhow::anyhow!("row {}: '{field}': {e}", i + 1))
        };
        points.push((get(t_col)?, get(l_col)?));
        rho_inf.push(match rho_col {
            Some(c) => get(c)?,
            None => 0.0,
        });
    }
    Ok(Series { points, rho_inf })
}

pub fn run(csv: &Path, window: &str, viscosity: f64, assert_rate: bool) -> u8 {
    let Some(window) = parse_window(window) else {
        eprintln!("error: window must be 't0,t1', got '{window}'");
        return exit::BAD_INPUT;
    };
    if !(viscosity.is_finite() && viscosity > 0.0) {
        eprintln!("error: viscosity must be positive");
        return exit::BAD_INPUT;
    }
    let series = match read_series(csv) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", csv.display());
            return exit::BAD_INPUT;
        }
    };
    let fit = match fit_decay(&series.points, window) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::BAD_INPUT;
        }
    };
    // Largest density in the window gives the smallest guaranteed rate.
    let rho = series
        .points
        .iter()
        .zip(&series.rho_inf)
        .filter(|((t, _), _)| *t >= window.0 && *t <= window.1)
        .map(|(_, r)| *r)
        .fold(0.0, f64::max);
    let theory = theoretical_rate(rho, viscosity);
    println!("window      [{}, {}]", fit.window.0, fit.window.1);
    println!("samples     {}", fit.samples);
    println!("rate        {:.10e}", fit.rate);
    println!("intercept   {:.10e}", fit.intercept);
    println!("r_squared   {:.10}", fit.r_squared);
    println!("rho_inf     {:.6e}", rho);
    println!("theoretical {:.10e}", theory);
    println!("ratio       {:.6}", fit.rate / theory);
    if assert_rate {
        let ok = fit.rate >= RATE_FRACTION * theory;
        println!("assert      {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            return exit::CHECK_FAILED;
        }
    }
    exit::OK
}
