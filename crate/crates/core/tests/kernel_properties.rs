use proptest::prelude::*;
use rcsns::fluid::SpectralField;
use rcsns::grid::{GridSpec, Transform};
use rcsns::kernels::{
    mollifier_symbol, phi_eval, phi_min_over_torus, CommKernel, CutoffSpec, MollifierFamily, MollifierSpec,
    FLOCKING_DIAMETER,
};

fn kernel() -> impl Strategy<Value = CommKernel> {
    prop_oneof![
        (0.0f64..5.0).prop_map(|amplitude| CommKernel::Constant { amplitude }),
        (0.01f64..5.0, 0.0f64..4.0).prop_map(|(amplitude, beta)| CommKernel::Algebraic { amplitude, beta }),
        prop::collection::vec(0.0f64..3.0, 2..8).prop_map(|phi| {
            let r = (0..phi.len()).map(|i| 0.4 * i as f64).collect();
            CommKernel::Tabulated { r, phi }
        }),
    ]
}

proptest! {
    #[test]
    fn torus_minimum_bounds_the_kernel(k in kernel()) {
        let lo = phi_min_over_torus(&k);
        for i in 0..=10_000 {
            let r = FLOCKING_DIAMETER * i as f64 / 10_000.0;
            prop_assert!(lo <= phi_eval(&k, r) + 1e-15);
        }
    }

    #[test]
    fn cutoff_is_monotone_and_c1(eps in 0.01f64..2.0) {
        let g = CutoffSpec::new(eps).unwrap();
        let (r0, r1) = (g.inner_radius(), g.outer_radius());
        let mut prev = f64::INFINITY;
        for i in 0..=2000 {
            let r = 1.2 * r1 * i as f64 / 2000.0;
            let v = g.eval_radius(r);
            prop_assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        // One-sided derivatives at both radii.
        for r in [r0, r1] {
            let h = 1e-7 * (r1 - r0);
            let left = (g.eval_radius(r) - g.eval_radius(r - h)) / h;
            let right = (g.eval_radius(r + h) - g.eval_radius(r)) / h;
            prop_assert!((left - right).abs() * (r1 - r0) <= 1e-5);
            prop_assert!(g.derivative(r).abs() <= 1e-12);
        }
    }
}

#[test]
fn mollifier_has_unit_grid_mass() {
    for (d, n) in [(2, 32), (3, 16), (3, 32)] {
        let tr = Transform::new(GridSpec::new(d, n).unwrap());
        let grid = *tr.grid();
        for family in [MollifierFamily::Bump, MollifierFamily::Gaussian] {
            let sym = mollifier_symbol(&MollifierSpec::new(0.2, family).unwrap(), &tr).unwrap();
            let mut delta = vec![0.0; grid.len()];
            delta[1] = 1.0 / grid.cell_volume();
            let comps = vec![delta; d];
            let spread = SpectralField::from_physical(&tr, &comps).unwrap().filtered(&sym).to_physical(&tr);
            let mass: f64 = spread[0].iter().sum::<f64>() * grid.cell_volume();
            assert!((mass - 1.0).abs() <= 1e-10, "d = {d}, n = {n}: mass {mass}");
        }
    }
}
