//! Independent oracles: tabulated high-precision values, brute-force
//! numerics and closed forms that share no code with the library paths
//! they check.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use surfspin::constants::{H, MU_B, MU_N};
use surfspin::geometry::{field_integral, strip_field, StripGeometry};
use surfspin::lineshape::faddeeva;
use surfspin::lineshape::{ensemble_response, Peak};
use surfspin::quad::{integrate, QuadOptions};
use surfspin::spin_levels::{resonance_fields, SpinSystem, TransitionLabel};

#[test]
fn faddeeva_against_mpmath_grid() {
    let text = include_str!("data/faddeeva_mpmath.csv");
    let mut worst = (0.0f64, Complex64::new(0.0, 0.0));
    let mut n = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let z = Complex64::new(v[0], v[1]);
        let want = Complex64::new(v[2], v[3]);
        let got = faddeeva(z);
        let rel = (got - want).norm() / want.norm();
        if rel > worst.0 {
            worst = (rel, z);
        }
        n += 1;
    }
    assert_eq!(n, 10_000);
    assert!(worst.0 <= 1e-6, "max relative error {:e} at z = {}", worst.0, worst.1);
}

/// `W` of a Voigt line as the explicit Gaussian average of Lorentzians.
fn voigt_by_convolution(coupling: f64, gamma2: f64, delta: f64, detuning: f64) -> Complex64 {
    let sigma = delta / (2.0 * LN_2).sqrt();
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_subdivisions: 20_000 };
    let lorentz = |d: f64| {
        let g = norm * (-0.5 * (d / sigma).powi(2)).exp();
        g * coupling * coupling / Complex64::new(-0.5 * gamma2, detuning - d)
    };
    // break the range at the Lorentzian pole so narrow lines are resolved
    let mut cuts = vec![-14.0 * sigma, 14.0 * sigma];
    if detuning.abs() < 14.0 * sigma {
        cuts.insert(1, detuning);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for w in cuts.windows(2) {
        let re = integrate(|d| lorentz(d).re, w[0], w[1], &opts).unwrap().value;
        let im = integrate(|d| lorentz(d).im, w[0], w[1], &opts).unwrap().value;
        acc += Complex64::new(re, im);
    }
    acc
}

#[test]
fn voigt_closed_form_matches_convolution() {
    let delta = 2.0 * PI * 90e6;
    let coupling = 2.0 * PI * 1.5e6;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let ratio = 10f64.powf(-2.0 + 4.0 * i as f64 / 9.0);
        for j in 0..10 {
            let detuning = delta * 5.0 * j as f64 / 9.0;
            let p = Peak::voigt("v", 0.0, 1.0, coupling, ratio * delta, delta);
            let got = ensemble_response(&p, detuning, 0.0);
            let want = voigt_by_convolution(coupling, ratio * delta, delta, detuning);
            worst = worst.max((got - want).norm() / want.norm());
        }
    }
    assert!(worst <= 1e-6, "max relative error {worst:e}");
}

/// Composite Simpson in `u` for `x = edge + dir · e^u`, which resolves the
/// `1/|x − edge|` growth of the squared field near a strip edge.
fn log_simpson(f: &dyn Fn(f64) -> f64, edge: f64, dir: f64, near: f64, far: f64, n: usize) -> f64 {
    let (u0, u1) = (near.ln(), far.ln());
    let h = (u1 - u0) / n as f64;
    let g = |u: f64| {
        let e = u.exp();
        f(edge + dir * e) * e
    };
    let mut s = g(u0) + g(u1);
    for k in 1..n {
        s += g(u0 + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn field_integral_against_brute_force() {
    let g = StripGeometry::reference();
    let omega = 2.0 * PI * 5e9;
    let b = g.half_gap;
    let s = g.outer();
    let d = g.cutoff;
    let f = |x: f64| strip_field(&g, omega, x, 0.0).unwrap().powi(2);
    let n = 200_000;
    let mid = 0.5 * (b + s);
    let half = log_simpson(&f, b, -1.0, d, b, n)
        + log_simpson(&f, b, 1.0, d, mid - b, n)
        + log_simpson(&f, s, -1.0, d, s - mid, n)
        + log_simpson(&f, s, 1.0, d, 1e5 * s, n);
    let brute = 2.0 * half;
    let lib = field_integral(&g, omega).unwrap().value;
    assert!(((lib - brute) / brute).abs() < 1e-6, "library {lib:e}, brute force {brute:e}");
}

/// Electron-flip line frequencies from the Breit–Rabi formula, Hz; the
/// first is the higher-frequency (low-field) satellite.
fn breit_rabi_lines(g_e: f64, a: f64, g_n: f64, b: f64) -> (f64, f64) {
    let ge = g_e * MU_B * b / H;
    let gn = g_n * MU_N * b / H;
    let r = (a * a + (ge + gn).powi(2)).sqrt();
    (0.5 * (a + (ge - gn) + r), 0.5 * (-a + (ge - gn) + r))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f(hi) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn satellite_fields_match_breit_rabi() {
    let spin = SpinSystem::hyperfine_doublet(2.0, 1423e6);
    for f_res in [2e9, 3.3e9, 5e9, 7.5e9, 12e9] {
        for (label, which) in [(TransitionLabel::SatLow, 0), (TransitionLabel::SatHigh, 1)] {
            let got = resonance_fields(&spin, f_res, 2.0, Some(label)).unwrap();
            assert_eq!(got.len(), 1, "{label:?} at {f_res}");
            let want = bisect(
                |b| {
                    let l = breit_rabi_lines(2.0, 1423e6, spin.g_n, b);
                    (if which == 0 { l.0 } else { l.1 }) - f_res
                },
                1e-6,
                2.0,
            );
            assert!((got[0] - want).abs() < 1e-9, "{label:?} at {f_res}: {} vs {want}", got[0]);
        }
    }
}
