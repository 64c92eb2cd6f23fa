use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcsns::coupling::{interpolate, momentum_audit, scatter};
use rcsns::ensemble::{sample_initial, Ensemble, InitialEnsemble};
use rcsns::grid::GridSpec;
use rcsns::kernels::CutoffSpec;
use rcsns::relkin::LightSpeed;

prop_compose! {
    fn setup()(seed in any::<u64>(), d in 2usize..=3, n in 1usize..300, sigma in 0.1f64..3.0, log_n in 3u32..=5)
        -> (Ensemble, GridSpec, u64) {
        let spec = InitialEnsemble::Gaussian { drift: [0.2, 0.1, 0.0], sigma, w_max: 10.0 };
        let e = sample_initial(&spec, n, seed, d, LightSpeed::new(2.0).unwrap()).unwrap();
        (e, GridSpec::new(d, 1 << log_n).unwrap(), seed)
    }
}

fn random_nodes(grid: &GridSpec, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    (0..grid.d())
        .map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scatter_and_gather_are_adjoint((e, grid, seed) in setup()) {
        let g = random_nodes(&grid, seed);
        let dep = scatter(&e, &grid, None);
        let at = interpolate(&g, &grid, &e.positions());
        let particle: f64 = e.particles().iter().zip(&at).map(|(p, u)| p.mass * u[0]).sum();
        let field: f64 = dep.rho.iter().zip(&g[0]).map(|(r, u)| r * u).sum::<f64>() * grid.cell_volume();
        prop_assert!((particle - field).abs() <= 1e-12 * (1.0 + particle.abs()));
        prop_assert!((dep.mass(&grid) - e.total_mass()).abs() <= 1e-12);
        prop_assert!(momentum_audit(&e, &g, &dep, &grid).unwrap() <= 1e-12);
    }

    #[test]
    fn cutoff_deposits_are_dominated((e, grid, _seed) in setup(), eps in 0.05f64..1.0) {
        let full = scatter(&e, &grid, None);
        let cut = scatter(&e, &grid, Some(&CutoffSpec::new(eps).unwrap()));
        for (a, b) in cut.rho.iter().zip(&full.rho) {
            prop_assert!(*a <= *b + 1e-15 * b.abs());
        }
    }
}
