use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use surfspin::fitting::{lm_fit, LmOptions, ParamSpec, SweepRow, SweepTrace};
use surfspin::geometry::{coupling_from_density, spin_density, StripGeometry};
use surfspin::io::{read_sweep, write_sweep};
use surfspin::lineshape::{ensemble_response, faddeeva, Peak};
use surfspin::spin_levels::{eigensystem, SpinSystem};
use surfspin::synth::{synthesize, Scenario, ScenarioKind};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn faddeeva_reflection(x in -30.0f64..30.0, y in 0.0f64..30.0) {
        let z = Complex64::new(x, y);
        let a = faddeeva(-z.conj());
        let b = faddeeva(z).conj();
        prop_assert!((a - b).norm() <= 1e-14 * b.norm());
    }

    #[test]
    fn voigt_is_absorptive(ratio in 0.01f64..100.0, detuning in -10.0f64..10.0) {
        let delta = 2.0 * PI * 90e6;
        let p = Peak::voigt("v", 0.0, 1.0, 1e7, ratio * delta, delta);
        let w = ensemble_response(&p, detuning * delta, 0.0);
        prop_assert!(w.re < 0.0);
        // dispersion is odd in the detuning
        let m = ensemble_response(&p, -detuning * delta, 0.0);
        prop_assert!((w.im + m.im).abs() <= 1e-12 * w.norm());
    }

    #[test]
    fn density_round_trip(omega_mhz in 0.01f64..20.0, t in 0.01f64..2.0) {
        let g = StripGeometry::reference();
        let omega0 = 2.0 * PI * 5e9;
        let coupling = 2.0 * PI * omega_mhz * 1e6;
        let n = spin_density(coupling, t, &g, omega0).unwrap();
        let back = coupling_from_density(n, t, &g, omega0).unwrap();
        prop_assert!((back / coupling - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hyperfine_levels_are_traceless(b in 0.0f64..1.0, a_mhz in 0.0f64..3000.0) {
        let spin = SpinSystem::hyperfine_doublet(2.0, a_mhz * 1e6);
        let l = eigensystem(&spin, b).unwrap();
        let sum: f64 = l.energies.iter().sum();
        let scale = l.energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        prop_assert!(sum.abs() <= 1e-10 * scale);
        prop_assert!(l.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn straight_lines_are_fitted_exactly(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a + b * x).collect();
        let res = |p: &[f64]| xs.iter().zip(&ys).map(|(x, y)| p[0] + p[1] * x - y).collect::<Vec<_>>();
        let fit = lm_fit("line", res, &[ParamSpec::new("a", 1.0), ParamSpec::new("b", 1.0)], &LmOptions::default()).unwrap();
        prop_assert!((fit.value("a").unwrap() - a).abs() < 1e-8);
        prop_assert!((fit.value("b").unwrap() - b).abs() < 1e-8);
    }

    #[test]
    fn sweep_csv_round_trip(steps in prop::collection::vec((1e-6f64..1e-2, 4e9f64..6e9, -1e-3f64..1e-3), 2..50)) {
        let mut b = 0.0;
        let rows = steps
            .iter()
            .map(|&(db, f0, q_inv)| {
                b += db;
                SweepRow { b, f0, q_inv }
            })
            .collect();
        let t = SweepTrace { rows };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &t).unwrap();
        prop_assert_eq!(read_sweep(&buf[..]).unwrap(), t);
    }

    #[test]
    fn synthesis_is_reproducible(seed in any::<u64>()) {
        let sc = Scenario {
            seed,
            kind: ScenarioKind::S21Trace {
                f0_hz: 5e9,
                q: 1e4,
                qc_abs: 2e4,
                qc_phase: 0.0,
                span_linewidths: 10.0,
                points: 64,
                snr_db: Some(30.0),
            },
        };
        let a = serde_json::to_string(&synthesize(&sc).unwrap().dataset).unwrap();
        let b = serde_json::to_string(&synthesize(&sc).unwrap().dataset).unwrap();
        prop_assert_eq!(a, b);
    }
}
