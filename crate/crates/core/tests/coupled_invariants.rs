use proptest::prelude::*;
use rcsns::coupled::{integrate, CoupledParams, CoupledSystem, Schedule, State};
use rcsns::diagnostics::{energy_residuals, Diagnostics};
use rcsns::ensemble::{sample_initial, InitialEnsemble};
use rcsns::fluid::taylor_green;
use rcsns::grid::{GridSpec, Transform};
use rcsns::kernels::CommKernel;
use rcsns::relkin::LightSpeed;

fn state(tr: &Transform, d: usize, np: usize, seed: u64, amplitude: f64) -> State {
    let drift = if d == 3 { [0.5, 0.0, 0.2] } else { [0.5, -0.3, 0.0] };
    let spec = InitialEnsemble::Gaussian { drift, sigma: 0.3, w_max: 3.0 };
    State {
        t: 0.0,
        ensemble: sample_initial(&spec, np, seed, d, LightSpeed::new(2.0).unwrap()).unwrap(),
        u: taylor_green(tr, amplitude),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn total_momentum_is_conserved(seed in any::<u64>(), d in 2usize..=3, beta in 0.0f64..2.0) {
        let tr = Transform::new(GridSpec::new(d, 16).unwrap());
        let params = CoupledParams::new(CommKernel::Algebraic { amplitude: 1.0, beta }, 0.5).unwrap();
        let sys = CoupledSystem::new(tr.clone(), params).unwrap();
        let mut s = state(&tr, d, 200, seed, 0.5);
        let p0 = s.ensemble.momentum() + s.u.mean();
        for _ in 0..10 {
            (s.ensemble, s.u) = sys.step(&s.ensemble, &s.u, 0.01).unwrap();
            let p = s.ensemble.momentum() + s.u.mean();
            prop_assert!((p - p0).norm() <= 1e-10 * (1.0 + p0.norm()));
            prop_assert!(s.u.max_divergence(&tr) <= 1e-12);
        }
    }
}

/// Largest energy-balance residual over `[0, 0.2]` at step `dt`.
fn energy_residual(dt: f64) -> f64 {
    let tr = Transform::new(GridSpec::new(3, 16).unwrap());
    let params = CoupledParams::new(CommKernel::Constant { amplitude: 1.0 }, 0.1).unwrap();
    let sys = CoupledSystem::new(tr.clone(), params.clone()).unwrap();
    let mut s = state(&tr, 3, 1000, 9, 0.5);
    let mut diag = Diagnostics::new(params.kernel.clone(), params.mu);
    let schedule = Schedule::new(dt, 0.2, 1).unwrap();
    let records = integrate(&sys, &mut s, schedule, &mut diag, |_, _, _| Ok(())).unwrap();
    energy_residuals(&records, params.mu)
        .iter()
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max)
}

#[test]
fn energy_residual_is_first_order_in_dt() {
    let coarse = energy_residual(0.01);
    let fine = energy_residual(0.005);
    let ratio = coarse / fine;
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio} ({coarse} / {fine})");
}
