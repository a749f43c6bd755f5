use evoshift_core::discretization::build_grid;
use evoshift_core::model::{averaged_rate, quadratic_model, GrowthRateModel, PeriodicSignal, QuadraticRateParams};
use evoshift_core::pde_engine::{DriftForm, LinearPropagator};
use proptest::prelude::*;
use std::f64::consts::PI;

fn generic_quadratic(r: f64, g: f64, amp: f64, phase: f64) -> GrowthRateModel {
    GrowthRateModel::from_fn(1.0, move |t, x| {
        let theta = amp * (2.0 * PI * t + phase).sin();
        r - g * (1.0 + 0.3 * (2.0 * PI * t).cos()) * (x - theta).powi(2)
    })
    .unwrap()
}

// Parameter ranges keep the averaged rate positive somewhere, as the averaging requires.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rates_are_periodic(r in 0.5f64..3.0, g in 0.2f64..2.0, amp in 0.0f64..1.5, t in 0.0f64..1.0, x in -5.0f64..5.0) {
        let expr = format!("{amp} * sin(2*pi*t)");
        let p = QuadraticRateParams::new(r, PeriodicSignal::Constant(g), PeriodicSignal::expression(&expr).unwrap(), 1.0).unwrap();
        let m = quadratic_model(p).unwrap();
        prop_assert!((m.rate(t, x) - m.rate(t + 1.0, x)).abs() <= 1e-12 * (1.0 + m.rate(t, x).abs()));
        let generic = generic_quadratic(r, g, amp, 0.4);
        prop_assert!((generic.rate(t, x) - generic.rate(t + 1.0, x)).abs() <= 1e-12 * (1.0 + generic.rate(t, x).abs()));
    }

    #[test]
    fn averaging_is_linear(r1 in 1.5f64..3.0, g1 in 0.3f64..2.0, a1 in 0.0f64..1.0,
                           r2 in 1.5f64..3.0, g2 in 0.3f64..2.0, a2 in 0.0f64..1.0, x in -3.0f64..3.0) {
        let m1 = generic_quadratic(r1, g1, a1, 0.0);
        let m2 = generic_quadratic(r2, g2, a2, 1.3);
        let sum = m1.sum(&m2).unwrap();
        let bracket = (-6.0, 6.0);
        let (s1, s2, s) = (
            averaged_rate(&m1, 256, bracket).unwrap(),
            averaged_rate(&m2, 256, bracket).unwrap(),
            averaged_rate(&sum, 256, bracket).unwrap(),
        );
        let expect = s1.abar(x) + s2.abar(x);
        prop_assert!((s.abar(x) - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn closed_forms_match_quadrature(r in 2.0f64..4.0, g0 in 0.5f64..2.0, gamp in 0.0f64..0.4, amp in 0.0f64..1.0, x in -4.0f64..4.0) {
        let g = format!("{g0} * (1 + {gamp} * cos(2*pi*t))");
        let theta = format!("{amp} * sin(2*pi*t) + 0.2");
        let p = QuadraticRateParams::new(r, PeriodicSignal::expression(&g).unwrap(), PeriodicSignal::expression(&theta).unwrap(), 1.0).unwrap();
        let closed = quadratic_model(p.clone()).unwrap();
        let generic = GrowthRateModel::from_fn(1.0, move |t, y| closed.rate(t, y)).unwrap();
        let q = p.averages();
        let avg = averaged_rate(&generic, 256, (-6.0, 6.0)).unwrap();
        prop_assert!((avg.abar(x) - q.abar(x)).abs() <= 1e-8 * q.abar(x).abs().max(1.0));
        prop_assert!((avg.x_m - q.x_m()).abs() <= 1e-6);
    }

    #[test]
    fn linear_evolution_preserves_order(c0 in 0.1f64..2.0, w in 0.2f64..1.5, x0 in -1.0f64..1.0, bump in 0.0f64..1.0, xb in -2.0f64..2.0) {
        let grid = build_grid(4.0, 129).unwrap();
        let model = generic_quadratic(1.5, 1.0, 0.8, 0.0);
        for form in [DriftForm::Direct, DriftForm::Liouville] {
            let prop = LinearPropagator::new(&model, 0.05, 0.2, &grid, 64, form).unwrap();
            let mut lo: Vec<f64> = grid.nodes().iter().map(|x| c0 * (-(x - x0).powi(2) / w).exp()).collect();
            let mut hi: Vec<f64> = lo.iter().zip(grid.nodes()).map(|(v, x)| v + bump * (-(x - xb).powi(2)).exp()).collect();
            let n = lo.len();
            lo[0] = 0.0; lo[n - 1] = 0.0; hi[0] = 0.0; hi[n - 1] = 0.0;
            let mut scratch = vec![0.0; n];
            for v in [&mut lo, &mut hi] {
                prop.to_frame(v);
                prop.period(v, &mut scratch);
                prop.from_frame(v);
            }
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(*a <= *b + 1e-10);
            }
        }
    }
}
