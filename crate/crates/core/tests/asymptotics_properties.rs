use evoshift_core::asymptotics::{
    corrector, explicit_psi, psi_second_derivative, solve_xbar, taylor_coefficients, XM_WINDOW,
};
use evoshift_core::model::{averaged_rate, quadratic_model, PeriodicSignal, QuadraticRateParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_limit_objects(r in 1.0f64..3.0, g in 0.5f64..2.0, amp in 0.0f64..1.2, shift in -0.5f64..0.5, c in 0.0f64..1.5) {
        let theta = format!("{shift} + {amp} * sin(2*pi*t)");
        let p = QuadraticRateParams::new(r, PeriodicSignal::Constant(g), PeriodicSignal::expression(&theta).unwrap(), 1.0).unwrap();
        let model = quadratic_model(p).unwrap();
        let avg = averaged_rate(&model, 512, (-6.0, 6.0)).unwrap();
        let x_bar = solve_xbar(&avg, c).unwrap();
        prop_assert!((x_bar - (shift - c / (2.0 * g.sqrt()))).abs() < 1e-9);

        let prof = explicit_psi(&avg, x_bar, c).unwrap();
        prop_assert!(prof.psi(x_bar).abs() < 1e-12);
        let xs: Vec<f64> = (0..=400).map(|i| x_bar - 2.0 + 0.01 * i as f64).collect();
        let psi = prof.psi_on(&xs);
        let best = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(best <= 1e-12);
        for &x in &xs {
            if (x - avg.x_m).abs() > XM_WINDOW {
                prop_assert!(prof.hj_residual(x).abs() < 1e-8);
            }
        }

        let corr = corrector(&model, &avg, &prof).unwrap();
        prop_assert!((corr.lambda2 + psi_second_derivative(&avg, avg.x_m)).abs() < 1e-10);
        prop_assert!((corr.lambda2 - g.sqrt()).abs() < 1e-10);
        let tc = taylor_coefficients(&prof).unwrap();
        prop_assert!((tc.a - g.sqrt()).abs() < 1e-8);
        // D has zero period average.
        let mean: f64 = (0..64).map(|k| corr.d(k as f64 / 64.0)).sum::<f64>() / 64.0;
        prop_assert!(mean.abs() < 1e-8);
    }
}
