//! Fits on seeded synthetic data: recovery of the generating parameters,
//! interval coverage and noise statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use surfspin::fitting::{
    fit_angle, fit_resonance, fit_saturation, fit_sweep, LmOptions, SweepFit, SweepFitOptions,
};
use surfspin::lineshape::{Background, SpectrumModel};
use surfspin::synth::{hydrogen_surface_model, synthesize, Dataset, Scenario, ScenarioKind};

fn s21_scenario(seed: u64, snr_db: Option<f64>) -> Scenario {
    Scenario {
        seed,
        kind: ScenarioKind::S21Trace {
            f0_hz: 5.1e9,
            q: 4e4,
            qc_abs: 6e4,
            qc_phase: 0.15,
            span_linewidths: 20.0,
            points: 801,
            snr_db,
        },
    }
}

fn sweep_scenario(seed: u64, noise_rel: f64) -> Scenario {
    Scenario {
        seed,
        kind: ScenarioKind::Sweep {
            model: hydrogen_surface_model().unwrap(),
            q0_inv: 1e-5,
            b_min: 0.0,
            b_max: 0.3,
            points: 1501,
            noise_rel,
            flux_jumps: None,
        },
    }
}

/// Template with the true line positions and slopes but no prior knowledge
/// of amplitudes, widths or background.
fn blind_template() -> SpectrumModel {
    let mut m = hydrogen_surface_model().unwrap();
    for p in &mut m.peaks {
        p.coupling = 0.0;
        p.gamma2 *= 1.3;
        p.delta *= 0.7;
    }
    m.background = Background { c: 2e-6, b_on: 0.07, sigma_on: 0.03 };
    m
}

fn sweep_fit(seed: u64) -> SweepFit {
    let Dataset::Sweep(trace) = synthesize(&sweep_scenario(seed, 0.02)).unwrap().dataset else {
        unreachable!()
    };
    fit_sweep(&trace, &blind_template(), &SweepFitOptions::default()).unwrap()
}

#[test]
fn resonance_recovered() {
    let truth = [("f0", 5.1e9), ("Q", 4e4), ("Qc_abs", 6e4), ("Qc_phase", 0.15)];
    let Dataset::S21Trace(t) = synthesize(&s21_scenario(0, None)).unwrap().dataset else { unreachable!() };
    let fit = fit_resonance(&t, &LmOptions::default()).unwrap();
    for (name, want) in truth {
        assert!((fit.value(name).unwrap() / want - 1.0).abs() < 1e-9, "{name}");
    }
    for seed in 0..5 {
        let Dataset::S21Trace(t) = synthesize(&s21_scenario(seed, Some(40.0))).unwrap().dataset else {
            unreachable!()
        };
        let fit = fit_resonance(&t, &LmOptions::default()).unwrap();
        assert!(fit.converged);
        for (name, want) in truth {
            let p = fit.param(name).unwrap();
            let s = p.stderr.unwrap();
            assert!((p.value - want).abs() < 4.0 * s, "{name}: {} vs {want} (σ = {s})", p.value);
        }
    }
}

#[test]
fn saturation_recovered() {
    for (seed, eps, noise) in [(1u64, 0.6, 0.0), (2, 1.0, 0.05), (3, 1.4, 0.05)] {
        let sc = Scenario {
            seed,
            kind: ScenarioKind::Saturation {
                qs0_inv: 2e-6,
                p_sat: 14e-9,
                epsilon: eps,
                q: 2e4,
                q_ext: 4e4,
                p0_min_rel: 0.01,
                p0_max_rel: 1000.0,
                points: 40,
                noise_rel: noise,
            },
        };
        let Dataset::Saturation(c) = synthesize(&sc).unwrap().dataset else { unreachable!() };
        let fit = fit_saturation(&c, &LmOptions::default()).unwrap();
        for (name, want) in [("qs0_inv", 2e-6), ("p_sat", 14e-9), ("epsilon", eps)] {
            let p = fit.param(name).unwrap();
            if noise == 0.0 {
                assert!((p.value / want - 1.0).abs() < 1e-8, "{name}");
            } else {
                assert!((p.value - want).abs() < 4.0 * p.stderr.unwrap(), "{name}: {}", p.value);
            }
        }
        assert!((fit.value("epsilon").unwrap() - eps).abs() < 0.1);
    }
}

#[test]
fn angle_interval_coverage() {
    let trials = 400;
    let mut hits = 0;
    for seed in 0..trials {
        let sc = Scenario {
            seed,
            kind: ScenarioKind::AngleSeries {
                g_true: 2.0021,
                a: -0.004,
                b: -0.002,
                angles_deg: (0..10).map(|i| 10.0 * i as f64).collect(),
                noise_abs: 5e-4,
            },
        };
        let Dataset::AngleSeries(s) = synthesize(&sc).unwrap().dataset else { unreachable!() };
        let ci = fit_angle(&s, &LmOptions::default()).unwrap().param("g_true").unwrap().ci95.unwrap();
        if ci[0] <= 2.0021 && 2.0021 <= ci[1] {
            hits += 1;
        }
    }
    // normal-quantile intervals with 7 degrees of freedom undercover slightly
    let coverage = hits as f64 / trials as f64;
    assert!((0.88..=0.98).contains(&coverage), "coverage {coverage}");
}

#[test]
fn s21_noise_statistics() {
    let clean = match synthesize(&s21_scenario(0, None)).unwrap().dataset {
        Dataset::S21Trace(t) => t,
        _ => unreachable!(),
    };
    let sigma = 10f64.powf(-40.0 / 20.0) / 2f64.sqrt();
    let mut chi2 = 0.0;
    let mut z = Vec::new();
    for seed in 0..100 {
        let Dataset::S21Trace(t) = synthesize(&s21_scenario(seed, Some(40.0))).unwrap().dataset else {
            unreachable!()
        };
        for (n, c) in t.rows.iter().zip(&clean.rows) {
            for d in [(n.re - c.re) / sigma, (n.im - c.im) / sigma] {
                chi2 += d * d;
                z.push(d);
            }
        }
    }
    let dof = z.len() as f64;
    let cdf = ChiSquared::new(dof).unwrap().cdf(chi2);
    let p = 2.0 * cdf.min(1.0 - cdf);
    assert!(p > 0.01, "variance test p = {p}");

    // shape: 20 equiprobable bins of the standard normal
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut counts = [0usize; 20];
    for v in &z {
        let k = ((normal.cdf(*v) * 20.0) as usize).min(19);
        counts[k] += 1;
    }
    let expected = dof / 20.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_shape = 1.0 - ChiSquared::new(19.0).unwrap().cdf(stat);
    assert!(p_shape > 0.01, "shape test p = {p_shape}");
}

#[test]
fn sweep_noise_is_multiplicative() {
    let Dataset::Sweep(clean) = synthesize(&sweep_scenario(0, 0.0)).unwrap().dataset else {
        unreachable!()
    };
    let mut chi2 = 0.0;
    let mut n = 0.0;
    for seed in 0..100 {
        let Dataset::Sweep(t) = synthesize(&sweep_scenario(seed, 0.02)).unwrap().dataset else {
            unreachable!()
        };
        for (a, c) in t.rows.iter().zip(&clean.rows) {
            let qb_clean = c.q_inv - 1e-5;
            if qb_clean.abs() > 1e-9 {
                let d = ((a.q_inv - 1e-5) / qb_clean - 1.0) / 0.02;
                chi2 += d * d;
                n += 1.0;
            }
        }
    }
    let cdf = ChiSquared::new(n).unwrap().cdf(chi2);
    let p = 2.0 * cdf.min(1.0 - cdf);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn sweep_round_trip_within_intervals() {
    let truth = hydrogen_surface_model().unwrap();
    let fit = sweep_fit(7);
    assert!(fit.fit.converged, "{}", fit.fit.termination);
    for want in &truth.peaks {
        let l = &want.label;
        let checks = [
            ("b_peak", want.center_field),
            ("omega_sq", want.coupling * want.coupling),
            ("gamma2", want.gamma2),
        ];
        for (p, v) in checks {
            let name = format!("{l}.{p}");
            let par = fit.fit.param(&name).unwrap();
            let s = par.stderr.unwrap();
            assert!((par.value - v).abs() < 4.0 * s, "{name}: {} vs {v} (σ = {s})", par.value);
        }
    }
}

#[test]
fn different_seeds_agree_within_three_sigma() {
    let a = sweep_fit(11);
    let b = sweep_fit(12);
    assert_ne!(a.fit.residual_norm, b.fit.residual_norm);
    for pa in &a.fit.params {
        let pb = b.fit.param(&pa.name).unwrap();
        let (Some(sa), Some(sb)) = (pa.stderr, pb.stderr) else { continue };
        let z = (pa.value - pb.value) / (sa * sa + sb * sb).sqrt();
        assert!(z.abs() < 3.0, "{}: z = {z}", pa.name);
    }
}

#[test]
fn robust_fit_ignores_flux_jumps() {
    let sc = surfspin::synth::hydrogen_surface_scenario(8).unwrap();
    let syn = synthesize(&sc).unwrap();
    assert_eq!(syn.manifest.flux_jumps.len(), 5);
    let Dataset::Sweep(trace) = syn.dataset else { unreachable!() };
    let opts = SweepFitOptions { robust: true, use_frequency: true, ..SweepFitOptions::default() };
    let fit = fit_sweep(&trace, &blind_template(), &opts).unwrap();
    assert!(fit.fit.converged, "{}", fit.fit.termination);
    let truth = hydrogen_surface_model().unwrap();
    for want in &truth.peaks {
        for (p, v) in [("b_peak", want.center_field), ("omega_sq", want.coupling.powi(2)), ("gamma2", want.gamma2)] {
            let name = format!("{}.{p}", want.label);
            let par = fit.fit.param(&name).unwrap();
            let s = par.stderr.unwrap();
            assert!((par.value - v).abs() < 4.0 * s, "{name}: {} vs {v} (σ = {s})", par.value);
        }
    }
}
