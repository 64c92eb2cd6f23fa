use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcsns::fluid::{gradient_norm_sq, leray_project, taylor_green, FluidParams, FluidSolver, SpectralField};
use rcsns::grid::{GridSpec, Transform};

fn max_nodal_diff(a: &SpectralField, b: &SpectralField, tr: &Transform) -> f64 {
    let (x, y) = (a.to_physical(tr), b.to_physical(tr));
    x.iter()
        .flatten()
        .zip(y.iter().flatten())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Random divergence-free, dealiased field with a nonzero mean.
fn random_field(tr: &Transform, seed: u64, amplitude: f64) -> SpectralField {
    let grid = tr.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<Vec<f64>> = (0..grid.d())
        .map(|_| (0..grid.len()).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut u = SpectralField::from_physical(tr, &comps).unwrap();
    u.dealias(tr);
    let mut u = leray_project(&u, tr);
    u.component_mut(0)[0] += 0.3 * amplitude;
    u
}

fn inner(a: &SpectralField, b: &SpectralField) -> f64 {
    a.components()
        .iter()
        .flatten()
        .zip(b.components().iter().flatten())
        .map(|(x, y)| (x.conj() * y).re)
        .sum()
}

#[test]
fn taylor_green_2d_matches_the_exact_decay() {
    let tr = Transform::new(GridSpec::new(2, 64).unwrap());
    let mu = 0.01;
    let solver = FluidSolver::new(tr.clone(), FluidParams::new(mu).unwrap()).unwrap();
    let zero = SpectralField::zeros(*tr.grid());
    let mut u = taylor_green(&tr, 1.0);
    for _ in 0..200 {
        u = solver.step(&u, &zero, 0.005).unwrap();
    }
    let exact = taylor_green(&tr, (-8.0 * PI * PI * mu).exp());
    assert!(max_nodal_diff(&u, &exact, &tr) <= 1e-8);
}

#[test]
fn taylor_green_3d_stokes_decay_is_exact() {
    let tr = Transform::new(GridSpec::new(3, 16).unwrap());
    let mu = 0.05;
    let mut params = FluidParams::new(mu).unwrap();
    params.convection = false;
    let solver = FluidSolver::new(tr.clone(), params).unwrap();
    let zero = SpectralField::zeros(*tr.grid());
    let mut u = taylor_green(&tr, 1.0);
    for _ in 0..50 {
        u = solver.step(&u, &zero, 0.01).unwrap();
    }
    let exact = taylor_green(&tr, (-12.0 * PI * PI * mu * 0.5).exp());
    assert!(max_nodal_diff(&u, &exact, &tr) <= 1e-12);
}

#[test]
fn spectral_energy_rate_is_viscous_dissipation() {
    for d in [2, 3] {
        let tr = Transform::new(GridSpec::new(d, 16).unwrap());
        let mu = 0.3;
        let solver = FluidSolver::new(tr.clone(), FluidParams::new(mu).unwrap()).unwrap();
        let u = random_field(&tr, 11, 1.0);
        let (n, _) = solver.rhs(&u, None);
        // The viscous part of the right-hand side is −μk²û.
        let mut visc = u.clone();
        for a in 0..d {
            for (z, k2) in visc.component_mut(a).iter_mut().zip(tr.k2()) {
                *z *= -mu * k2;
            }
        }
        let g = gradient_norm_sq(&u, &tr);
        assert!(inner(&u, &n).abs() <= 1e-12 * g);
        assert!((inner(&u, &visc) + mu * g).abs() <= 1e-8 * mu * g);
    }
}

#[test]
fn stepped_energy_follows_the_dissipation_rate() {
    let tr = Transform::new(GridSpec::new(3, 16).unwrap());
    let mu = 0.05;
    let solver = FluidSolver::new(tr.clone(), FluidParams::new(mu).unwrap()).unwrap();
    let zero = SpectralField::zeros(*tr.grid());
    let dt = 2e-4;
    // Low modes only, so the centered difference resolves every decay rate.
    let band: Vec<f64> = tr.k2().iter().map(|k2| if *k2 <= 12.0 * PI * PI { 1.0 } else { 0.0 }).collect();
    let mut u = random_field(&tr, 5, 0.5).filtered(&band);
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..20 {
        let next = solver.step(&u, &zero, dt).unwrap();
        let e0 = 0.5 * u.l2_norm_sq();
        if let Some((e_prev, _)) = prev {
            let rate = (0.5 * next.l2_norm_sq() - e_prev) / (2.0 * dt);
            let expect = -mu * gradient_norm_sq(&u, &tr);
            assert!((rate - expect).abs() <= 1e-5 * expect.abs(), "rate {rate} vs {expect}");
        }
        assert!(0.5 * next.l2_norm_sq() <= e0);
        prev = Some((e0, 0.0));
        u = next;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_stay_divergence_free_and_keep_the_mean(seed in any::<u64>(), d in 2usize..=3, mu in 0.01f64..1.0) {
        let tr = Transform::new(GridSpec::new(d, 16).unwrap());
        let solver = FluidSolver::new(tr.clone(), FluidParams::new(mu).unwrap()).unwrap();
        let zero = SpectralField::zeros(*tr.grid());
        let mut u = random_field(&tr, seed, 0.5);
        let mean = u.mean();
        for _ in 0..10 {
            u = solver.step(&u, &zero, 0.005).unwrap();
            prop_assert!(u.max_divergence(&tr) <= 1e-12);
            prop_assert_eq!(u.mean(), mean);
        }
    }

    #[test]
    fn round_trips_are_real(seed in any::<u64>(), d in 2usize..=3) {
        let tr = Transform::new(GridSpec::new(d, 16).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..tr.grid().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut spectrum = tr.forward_real(&values);
        tr.inverse(&mut spectrum);
        let residue = spectrum.iter().map(|z: &Complex64| z.im.abs()).fold(0.0, f64::max);
        let err = spectrum.iter().zip(&values).map(|(z, v)| (z.re - v).abs()).fold(0.0, f64::max);
        prop_assert!(residue <= 1e-13);
        prop_assert!(err <= 1e-13);
    }
}
