//! `rcsns validate`: analytic oracle suite.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcsns::coupled::{CoupledParams, CoupledSystem};
use rcsns::coupling::{interpolate, scatter};
use rcsns::ensemble::{sample_initial, InitialEnsemble};
use rcsns::fluid::{leray_project, taylor_green, FluidParams, FluidSolver, SpectralField};
use rcsns::grid::{GridSpec, Transform};
use rcsns::kernels::{mollifier_symbol, CommKernel, MollifierFamily, MollifierSpec};
use rcsns::relkin::{energy, jacobian_eigs, v_of_w, w_of_v, LightSpeed};
use rcsns::{Result, Vec3};

use crate::exit;

const SEED: u64 = 0x5eed_0a11;

struct Outcome {
    passed: bool,
    value: f64,
    tolerance: f64,
}

impl Outcome {
    fn at_most(value: f64, tolerance: f64) -> Self {
        Self {
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

type CheckFn = fn(bool) -> Result<Outcome>;

const CHECKS: [(&str, CheckFn); 10] = [
    ("round_trip", round_trip),
    ("energy_gradient", energy_gradient),
    ("jacobian_eigenvalues", jacobian_eigenvalues),
    ("monotone_inequality", monotone_inequality),
    ("nonrelativistic_limit", nonrelativistic_limit),
    ("taylor_green", taylor_green_decay),
    ("mollifier_mass", mollifier_mass),
    ("scatter_gather_adjoint", scatter_gather_adjoint),
    ("leray_projection", leray_projection),
    ("coupled_momentum", coupled_momentum),
];

pub fn run(fault: Option<&str>) -> u8 {
    if let Some(name) = fault {
        if !CHECKS.iter().any(|(n, _)| *n == name) {
            eprintln!("error: unknown check '{name}'");
            return exit::BAD_INPUT;
        }
    }
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        match check(fault == Some(name)) {
            Ok(o) => {
                let verdict = if o.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {name}: {:.3e} (tolerance {:.1e})", o.value, o.tolerance);
                if !o.passed {
                    failed.push(name);
                }
            }
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("all {} checks passed", CHECKS.len());
        exit::OK
    } else {
        println!("failed: {}", failed.join(", "));
        exit::CHECK_FAILED
    }
}

fn sign(fault: bool) -> f64 {
    if fault {
        -1.0
    } else {
        1.0
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random classical velocity with speed in `[lo, hi)·c`.
fn random_velocity(rng: &mut ChaCha8Rng, c: f64, lo: f64, hi: f64) -> Vec3 {
    random_unit(rng) * (c * rng.gen_range(lo..hi))
}

fn round_trip(fault: bool) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let c = rng.gen_range(0.1..10.0);
        let lc = LightSpeed::new(c)?;
        let v = random_velocity(&mut rng, c, 0.0, 0.99);
        let back = v_of_w(&(w_of_v(&v, lc)? * sign(fault)), lc)?;
        worst = worst.max((back - v).norm() / (1.0 + v.norm()));
    }
    Ok(Outcome::at_most(worst, 1e-10))
}

fn energy_gradient(fault: bool) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let c = rng.gen_range(0.5..4.0);
        let lc = LightSpeed::new(c)?;
        let v = random_velocity(&mut rng, c, 0.05, 0.9);
        let w = w_of_v(&v, lc)?;
        let h = 1e-5 * (1.0 + w.norm());
        let mut grad = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            let up = energy(&v_of_w(&(w + e), lc)?, lc)?;
            let dn = energy(&v_of_w(&(w - e), lc)?, lc)?;
            grad[a] = (up - dn) / (2.0 * h);
        }
        worst = worst.max((grad * sign(fault) - v).norm() / v.norm());
    }
    Ok(Outcome::at_most(worst, 1e-6))
}

/// Central-difference Jacobian of `w_of_v`.
fn jacobian_fd(v: &Vec3, c: LightSpeed, h: f64) -> Result<Matrix3<f64>> {
    let mut j = Matrix3::zeros();
    for b in 0..3 {
        let mut e = Vec3::zeros();
        e[b] = h;
        let col = (w_of_v(&(v + e), c)? - w_of_v(&(v - e), c)?) / (2.0 * h);
        j.set_column(b, &col);
    }
    Ok(j)
}

fn jacobian_eigenvalues(fault: bool) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let c = rng.gen_range(0.5..4.0);
        let lc = LightSpeed::new(c)?;
        let v = random_velocity(&mut rng, c, 0.0, 0.9);
        let j = jacobian_fd(&v, lc, 1e-5 * c)?;
        let sym = (j + j.transpose()) * 0.5;
        let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.total_cmp(b));
        let (l1, l2) = jacobian_eigs(&v, lc)?;
        let expect = [l1, l1, l2 * sign(fault)];
        for (got, want) in eig.iter().zip(expect) {
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    Ok(Outcome::at_most(worst, 1e-6))
}

/// Largest violation of `((c²+1)/c²)|Δv|² ≤ Δv·Δw ≤ (c²/(c²+1))|Δw|²`,
/// scaled by `1 + |Δw|²`.
fn monotone_inequality(fault: bool) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        let c = rng.gen_range(0.2..10.0);
        let lc = LightSpeed::new(c)?;
        let v1 = random_velocity(&mut rng, c, 0.0, 0.999);
        let v2 = random_velocity(&mut rng, c, 0.0, 0.999);
        let dv = v1 - v2;
        let dw = w_of_v(&v1, lc)? - w_of_v(&v2, lc)?;
        let k = (c * c + 1.0) / (c * c);
        let mid = dv.dot(&dw) * sign(fault);
        let scale = 1.0 + dw.norm_squared();
        worst = worst
            .max((k * dv.norm_squared() - mid) / scale)
            .max((mid - dw.norm_squared() / k) / scale);
    }
    Ok(Outcome::at_most(worst, 1e-12))
}

/// `|ŵ(v) − v|` at light speed `c` divided by the same at `2c`.
fn nonrelativistic_ratio(v: &Vec3, c: f64) -> Result<f64> {
    let e1 = (w_of_v(v, LightSpeed::new(c)?)? - v).norm();
    let e2 = (w_of_v(v, LightSpeed::new(2.0 * c)?)? - v).norm();
    Ok(e1 / e2)
}

fn nonrelativistic_limit(fault: bool) -> Result<Outcome> {
    let v = Vec3::new(0.3, -0.2, 0.1);
    let ratio = nonrelativistic_ratio(&v, 10.0)?.powf(sign(fault));
    Ok(Outcome {
        passed: (3.6..=4.4).contains(&ratio),
        value: ratio,
        tolerance: 0.4,
    })
}

/// Largest nodal error of the 2D Taylor-Green vortex at `t_final` against
/// `reference_sign · exp(−8π²μt)` times the initial field.
fn taylor_green_error(n: usize, mu: f64, t_final: f64, dt: f64, reference_sign: f64) -> Result<f64> {
    let tr = Transform::new(GridSpec::new(2, n)?);
    let solver = FluidSolver::new(tr.clone(), FluidParams::new(mu)?)?;
    let zero = SpectralField::zeros(*tr.grid());
    let mut u = taylor_green(&tr, 1.0);
    let steps = (t_final / dt).round() as usize;
    for _ in 0..steps {
        u = solver.step(&u, &zero, dt)?;
    }
    let exact = taylor_green(&tr, reference_sign * (-8.0 * PI * PI * mu * t_final).exp());
    let (a, b) = (u.to_physical(&tr), exact.to_physical(&tr));
    Ok(a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

fn taylor_green_decay(fault: bool) -> Result<Outcome> {
    Ok(Outcome::at_most(taylor_green_error(64, 0.01, 1.0, 0.005, sign(fault))?, 1e-8))
}

fn random_field(tr: &Transform, rng: &mut ChaCha8Rng) -> Result<SpectralField> {
    let grid = tr.grid();
    let comps: Vec<Vec<f64>> = (0..grid.d())
        .map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    SpectralField::from_physical(tr, &comps)
}

/// Mollifying keeps the mean and turns a unit nodal mass into a unit mass.
fn mollifier_mass(fault: bool) -> Result<Outcome> {
    let tr = Transform::new(GridSpec::new(3, 16)?);
    let grid = *tr.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst: f64 = 0.0;
    for family in [MollifierFamily::Bump, MollifierFamily::Gaussian] {
        let sym = mollifier_symbol(&MollifierSpec::new(0.2, family)?, &tr)?;
        let u = random_field(&tr, &mut rng)?;
        let mut filtered = u.filtered(&sym);
        filtered.scale(sign(fault));
        worst = worst.max((filtered.mean() - u.mean()).norm());
        let mut delta = vec![0.0; grid.len()];
        delta[grid.index([3, 5, 7])] = 1.0 / grid.cell_volume();
        let spike = SpectralField::from_physical(&tr, &[delta.clone(), delta.clone(), delta])?;
        let spread = spike.filtered(&sym).to_physical(&tr);
        let mass: f64 = spread[0].iter().sum::<f64>() * grid.cell_volume();
        worst = worst.max((mass - 1.0).abs());
    }
    Ok(Outcome::at_most(worst, 1e-12))
}

/// `∫ j·u = Σ_p m_p w_p·u(x_p)` for the matched deposit and interpolation.
fn scatter_gather_adjoint(fault: bool) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        let grid = GridSpec::new(d, 16)?;
        let tr = Transform::new(grid);
        let c = LightSpeed::new(2.0)?;
        let spec = InitialEnsemble::Gaussian {
            drift: [0.3, -0.2, 0.0],
            sigma: 0.5,
            w_max: 3.0,
        };
        let e = sample_initial(&spec, 500, SEED, d, c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
        let nodes = random_field(&tr, &mut rng)?.to_physical(&tr);
        let dep = scatter(&e, &grid, None);
        let grid_side: f64 = (0..d)
            .map(|a| dep.j[a].iter().zip(&nodes[a]).map(|(j, u)| j * u).sum::<f64>())
            .sum::<f64>()
            * grid.cell_volume();
        let at = interpolate(&nodes, &grid, &e.positions());
        let particle_side: f64 = e.particles().iter().zip(&at).map(|(p, u)| p.mass * p.w.dot(u)).sum();
        worst = worst.max((grid_side - sign(fault) * particle_side).abs() / particle_side.abs().max(1.0));
    }
    Ok(Outcome::at_most(worst, 1e-12))
}

fn leray_projection(fault: bool) -> Result<Outcome> {
    let tr = Transform::new(GridSpec::new(3, 16)?);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut u = random_field(&tr, &mut rng)?;
    u.dealias(&tr);
    let p = leray_project(&u, &tr);
    let pp = leray_project(&p, &tr);
    let mut worst = p.max_divergence(&tr).max(pp.max_abs_diff(&p));
    worst = worst.max((p.mean() - u.mean()).norm());
    if fault {
        worst = worst.max(u.max_divergence(&tr));
    }
    Ok(Outcome::at_most(worst, 1e-12))
}

fn coupled_momentum(fault: bool) -> Result<Outcome> {
    let grid = GridSpec::new(3, 16)?;
    let tr = Transform::new(grid);
    let c = LightSpeed::new(2.0)?;
    let spec = InitialEnsemble::Gaussian {
        drift: [0.5, 0.0, 0.2],
        sigma: 0.3,
        w_max: 3.0,
    };
    let mut e = sample_initial(&spec, 1000, SEED, 3, c)?;
    let mut u = taylor_green(&tr, 0.5);
    let sys = CoupledSystem::new(tr, CoupledParams::new(CommKernel::Constant { amplitude: 1.0 }, 0.5)?)?;
    let p0 = e.momentum() + u.mean();
    for _ in 0..20 {
        (e, u) = sys.step(&e, &u, 0.01)?;
    }
    let p1 = e.momentum() * sign(fault) + u.mean();
    Ok(Outcome::at_most((p1 - p0).norm() / p0.norm(), 1e-12))
}
