//! Faddeeva function `w(z) = exp(−z²) erfc(−iz)`.
//!
//! Upper half plane: Weideman's rational expansion in
//! `Z = (L + iz)/(L − iz)` with `N` Fourier–Chebyshev coefficients.
//! Lower half plane: `w(z) = 2 exp(−z²) − w(−z)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

const N_TERMS: usize = 48;

struct Expansion {
    l: f64,
    coeffs: [f64; N_TERMS],
}

fn expansion() -> &'static Expansion {
    static TABLE: OnceLock<Expansion> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = N_TERMS;
        let m = 2 * n;
        let l = (n as f64 / std::f64::consts::SQRT_2).sqrt();
        // f(t) = exp(−t²)(L² + t²) sampled at t = L tan(θ/2); the node
        // θ = −π carries t = −∞ where f vanishes.
        let samples: Vec<(f64, f64)> = (1 - m as i64..m as i64)
            .map(|k| {
                let theta = k as f64 * PI / m as f64;
                let t = l * (theta / 2.0).tan();
                (theta, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        let mut coeffs = [0.0; N_TERMS];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let order = (j + 1) as f64;
            let s: f64 = samples.iter().map(|(th, f)| f * (order * th).cos()).sum();
            *c = s / (2 * m) as f64;
        }
        Expansion { l, coeffs }
    })
}

fn w_upper(z: Complex64) -> Complex64 {
    let e = expansion();
    let iz = Complex64::i() * z;
    let denom = e.l - iz;
    let zz = (e.l + iz) / denom;
    // Horner on Σ a_{n} Z^{n−1}
    let mut p = Complex64::new(0.0, 0.0);
    for &a in e.coeffs.iter().rev() {
        p = p * zz + a;
    }
    2.0 * p / (denom * denom) + (1.0 / PI.sqrt()) / denom
}

/// Faddeeva function, total on finite inputs.
pub fn faddeeva(z: Complex64) -> Complex64 {
    if z.im >= 0.0 {
        if z.re == 0.0 {
            // purely imaginary argument: w is real (erfcx)
            return Complex64::new(w_upper(z).re, 0.0);
        }
        w_upper(z)
    } else {
        let minus = w_upper(-z);
        2.0 * (-z * z).exp() - minus
    }
}

/// Complementary error function for real arguments.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        // w(ix) = exp(x²) erfc(x)
        (-x * x).exp() * w_upper(Complex64::new(0.0, x)).re
    } else {
        2.0 - erfc(-x)
    }
}

/// Standard normal cumulative distribution.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn value_at_origin() {
        assert!(rel(faddeeva(Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0)) < 1e-12);
    }

    #[test]
    fn real_axis_real_part_is_gaussian() {
        let w = faddeeva(Complex64::new(1.0, 0.0));
        assert!((w.re - 0.367_879_4).abs() < 1e-7);
        for x in [0.1, 0.7, 1.5, 2.5] {
            let w = faddeeva(Complex64::new(x, 0.0));
            assert!((w.re - (-x * x).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn imaginary_unit() {
        let w = faddeeva(Complex64::new(0.0, 1.0));
        assert!((w.re - 0.427_583_6).abs() < 1e-7);
        assert_eq!(w.im, 0.0);
    }

    #[test]
    fn conjugate_symmetry_on_real_axis() {
        for x in [0.3, 1.0, 4.0, 12.0, 29.0] {
            let a = faddeeva(Complex64::new(-x, 0.0));
            let b = faddeeva(Complex64::new(x, 0.0)).conj();
            assert!(rel(a, b) < 1e-12);
        }
    }

    #[test]
    fn lower_half_plane_reflection() {
        let z = Complex64::new(0.7, -0.4);
        let direct = faddeeva(z);
        let via = 2.0 * (-z * z).exp() - faddeeva(-z);
        assert!(rel(direct, via) < 1e-12);
    }

    #[test]
    fn erfc_and_cdf() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-14);
        assert!((erfc(1.0) - 0.157_299_207_050_285_1).abs() < 1e-12);
        assert!((erfc(-1.0) - 1.842_700_792_949_715).abs() < 1e-12);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-14);
        assert!(normal_cdf(-40.0) < 1e-300);
        assert!((normal_cdf(40.0) - 1.0).abs() < 1e-15);
    }
}
