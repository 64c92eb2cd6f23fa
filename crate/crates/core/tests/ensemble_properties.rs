use proptest::prelude::*;
use rcsns::ensemble::{sample_initial, step_rk4, Ensemble, ForceMethod, InitialEnsemble};
use rcsns::kernels::CommKernel;
use rcsns::relkin::LightSpeed;
use rcsns::Vec3;

fn kernel() -> impl Strategy<Value = CommKernel> {
    prop_oneof![
        (0.1f64..3.0).prop_map(|amplitude| CommKernel::Constant { amplitude }),
        (0.1f64..3.0, 0.0f64..4.0).prop_map(|(amplitude, beta)| CommKernel::Algebraic { amplitude, beta }),
        (0.5f64..2.0, 0.05f64..0.3).prop_map(|(a, s)| CommKernel::Tabulated {
            r: vec![0.0, s, 2.0 * s],
            phi: vec![a, 0.5 * a, 0.0],
        }),
    ]
}

prop_compose! {
    fn ensemble()(seed in any::<u64>(), d in 2usize..=3, n in 2usize..120, c in 0.5f64..4.0,
                   sigma in 0.05f64..2.0, drift in -1.0f64..1.0) -> Ensemble {
        let spec = InitialEnsemble::Gaussian { drift: [drift, -0.5 * drift, 0.0], sigma, w_max: 4.0 };
        sample_initial(&spec, n, seed, d, LightSpeed::new(c).unwrap()).unwrap()
    }
}

/// Shear flow used as the fluid velocity felt by the particles.
fn shear(x: &Vec3) -> Vec3 {
    Vec3::new((6.283 * x.y).sin(), 0.3, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alignment_is_antisymmetric_and_dissipative(e in ensemble(), k in kernel()) {
        let l = e.alignment_forces(&k).unwrap();
        let mut total = Vec3::zeros();
        let mut power = 0.0;
        let mut scale = 0.0;
        for (p, lp) in e.particles().iter().zip(&l) {
            total += lp * p.mass;
            power += p.mass * p.w.dot(lp);
            scale += p.mass * lp.norm();
        }
        prop_assert!(total.norm() <= 1e-14 * (1.0 + scale));
        prop_assert!(power <= 1e-14 * (1.0 + scale));
    }

    #[test]
    fn force_methods_agree(e in ensemble(), k in kernel()) {
        let v = e.velocities().unwrap();
        let a = e.alignment_from_velocities(&k, &v, ForceMethod::Direct);
        let b = e.alignment_from_velocities(&k, &v, ForceMethod::CellList);
        let c = e.alignment_from_velocities(&k, &v, ForceMethod::Auto);
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
            prop_assert!((x - z).norm() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn steps_keep_mass_speed_and_torus(e0 in ensemble(), k in kernel(), dt in 0.001f64..0.05) {
        let mass = e0.total_mass();
        let c = e0.c().get();
        let mut e = e0;
        for _ in 0..20 {
            e = step_rk4(&e, dt, |s, _| {
                let u: Vec<Vec3> = s.positions().iter().map(shear).collect();
                s.rhs(&k, &u)
            })
            .unwrap();
            prop_assert_eq!(e.total_mass().to_bits(), mass.to_bits());
            for (p, v) in e.particles().iter().zip(e.velocities().unwrap()) {
                prop_assert!(v.norm() < c);
                for a in 0..e.d() {
                    prop_assert!((0.0..1.0).contains(&p.x[a]));
                }
            }
        }
    }
}
