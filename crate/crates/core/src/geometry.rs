//! Two-strip coplanar geometry: single-photon field profile, power-to-field
//! conversion and spin-density extraction.
//!
//! Two parallel strips occupy `b < |x| < S` (with `S = b + w`) and carry
//! opposite currents. The complex field in the surface plane is
//!
//! `H(x, y) = −I0 / (2 S K(√(1 − b²/S²))) · S² / √((ζ² − b²)(ζ² − S²))`,
//! `ζ = x + iy`,
//!
//! with `I0 = √(2ħω²/Z)` the single-photon current. Everything here returns
//! flux density (μ0 H, tesla).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B, MU_0, MU_B};
use crate::error::{ensure_finite, Error, Result};
use crate::quad::{self, QuadOptions};

/// Film thickness used as the default integration cutoff, m.
pub const DEFAULT_CUTOFF: f64 = 140e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripGeometry {
    /// Half of the gap between the strips, b (m).
    pub half_gap: f64,
    /// Strip width w (m).
    pub width: f64,
    /// Total current-carrying strip length L_res (m).
    pub length: f64,
    /// Exclusion radius δ around each strip edge (m).
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Resonator impedance Z (Ω).
    pub impedance: f64,
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF
}

impl StripGeometry {
    /// b = 5 µm, w = 2 µm, L_res = 12 mm (half wavelength at 5 GHz on
    /// sapphire), δ = 140 nm, Z = 50 Ω.
    pub fn reference() -> Self {
        StripGeometry {
            half_gap: 5e-6,
            width: 2e-6,
            length: 12e-3,
            cutoff: DEFAULT_CUTOFF,
            impedance: 50.0,
        }
    }

    /// S = b + w.
    pub fn outer(&self) -> f64 {
        self.half_gap + self.width
    }

    pub fn with_cutoff(self, cutoff: f64) -> Self {
        StripGeometry { cutoff, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("half_gap", self.half_gap),
            ("width", self.width),
            ("length", self.length),
            ("cutoff", self.cutoff),
            ("impedance", self.impedance),
        ] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cutoff >= self.width || self.cutoff >= self.half_gap {
            return Err(Error::Domain(format!(
                "cutoff {} must be smaller than the strip width and the half gap",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Modulus-convention K(√(1 − b²/S²)).
    fn shape_integral(&self) -> f64 {
        let ratio = self.half_gap / self.outer();
        elliptic_k((1.0 - ratio * ratio).sqrt()).expect("0 < b < S")
    }
}

/// Complete elliptic integral of the first kind,
/// `K(k) = ∫_0^{π/2} dθ / √(1 − k² sin²θ)`, by the arithmetic–geometric mean.
pub fn elliptic_k(k: f64) -> Result<f64> {
    ensure_finite("k", k)?;
    if !(0.0..1.0).contains(&k) {
        return Err(Error::Domain(format!("elliptic modulus must lie in [0, 1), got {k}")));
    }
    let mut a = 1.0;
    let mut g = (1.0 - k * k).sqrt();
    for _ in 0..64 {
        if (a - g).abs() <= 1e-16 * a {
            break;
        }
        let next = 0.5 * (a + g);
        g = (a * g).sqrt();
        a = next;
    }
    Ok(PI / (2.0 * a))
}

/// RMS current of one photon in a resonator of impedance `z`, √(2ħω²/Z).
pub fn single_photon_current(omega: f64, z: f64) -> f64 {
    (2.0 * HBAR * omega * omega / z).sqrt()
}

/// μ0 I0 / (2 S K): the field scale in front of the geometric factor.
fn field_scale(g: &StripGeometry, omega: f64) -> f64 {
    MU_0 * single_photon_current(omega, g.impedance) / (2.0 * g.outer() * g.shape_integral())
}

/// `|S² / √((x² − b²)(x² − S²))|` on the real axis.
fn profile_sq(g: &StripGeometry, x: f64) -> f64 {
    let b = g.half_gap;
    let s = g.outer();
    s.powi(4) / ((x * x - b * b) * (x * x - s * s)).abs()
}

/// Magnitude of the single-photon flux density at (x, y), tesla.
pub fn strip_field(g: &StripGeometry, omega: f64, x: f64, y: f64) -> Result<f64> {
    g.validate()?;
    ensure_finite("x", x)?;
    ensure_finite("y", y)?;
    let b = g.half_gap;
    let s = g.outer();
    // (ζ² − b²)(ζ² − S²) with ζ = x + iy
    let z2 = (x * x - y * y, 2.0 * x * y);
    let p = (z2.0 - b * b, z2.1);
    let q = (z2.0 - s * s, z2.1);
    let prod_abs = (p.0 * p.0 + p.1 * p.1).sqrt() * (q.0 * q.0 + q.1 * q.1).sqrt();
    if prod_abs == 0.0 {
        return Err(Error::Singularity(format!(
            "strip field is singular at the strip edge x = {x}, y = {y}"
        )));
    }
    Ok(field_scale(g, omega) * s * s / prod_abs.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldIntegral {
    /// ∫ |μ0 H(x, 0)|² dx, T² m.
    pub value: f64,
    pub error_estimate: f64,
}

fn integral_options() -> QuadOptions {
    QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-11,
        max_subdivisions: 5000,
    }
}

/// ∫ |μ0 H(x, 0)|² dx over the whole line with a δ-neighbourhood of each
/// strip edge removed.
pub fn field_integral(g: &StripGeometry, omega: f64) -> Result<FieldIntegral> {
    g.validate()?;
    ensure_finite("omega", omega)?;
    let b = g.half_gap;
    let s = g.outer();
    let d = g.cutoff;
    let opts = integral_options();
    let f = |x: f64| profile_sq(g, x);

    let mut segments = vec![quad::integrate(f, 0.0, b - d, &opts)?];
    if b + d < s - d {
        segments.push(quad::integrate(f, b + d, s - d, &opts)?);
    }
    segments.push(quad::integrate_to_infinity(f, s + d, &opts)?);
    let value: f64 = segments.iter().map(|r| r.value).sum();
    let error: f64 = segments.iter().map(|r| r.error_estimate).sum();
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Numeric(format!("field integral evaluated to {value}")));
    }
    // symmetric in x; the scale is applied once at the end
    let scale = field_scale(g, omega).powi(2) * 2.0;
    Ok(FieldIntegral {
        value: value * scale,
        error_estimate: error * scale,
    })
}

/// Microwave field per square-root circulating power, T/√W. Literal
/// two-strip approximation: the profile is averaged over `x ∈ [S, S + w]`.
pub fn alpha(g: &StripGeometry) -> Result<f64> {
    g.validate()?;
    let b = g.half_gap;
    let s = g.outer();
    let w = g.width;
    let prefactor = MU_0 / (2.0 * (2.0 * g.impedance).sqrt() * s * g.shape_integral() * w);
    // x = S + u² removes the inverse-square-root edge singularity
    let integrand = |u: f64| {
        let x = s + u * u;
        2.0 * s * s / ((x * x - b * b) * (x + s)).sqrt()
    };
    let r = quad::integrate(integrand, 0.0, w.sqrt(), &integral_options())?;
    Ok(prefactor * r.value)
}

/// |β(T)| = tanh(ħω / 2 k_B T).
pub fn thermal_polarization(omega: f64, t: f64) -> Result<f64> {
    ensure_finite("T", t)?;
    if t <= 0.0 {
        return Err(Error::Domain(format!("temperature must be positive, got {t}")));
    }
    Ok((HBAR * omega / (2.0 * K_B * t)).tanh())
}

/// Surface spin density (m⁻²) of an ensemble with collective coupling
/// `coupling` (Ω, rad/s) measured at temperature `t` on a resonator at `omega0`.
pub fn spin_density(coupling: f64, t: f64, g: &StripGeometry, omega0: f64) -> Result<f64> {
    ensure_finite("Omega", coupling)?;
    let beta = thermal_polarization(omega0, t)?;
    let integral = field_integral(g, omega0)?.value;
    Ok(density_prefactor(coupling) / (beta * MU_B * MU_B * g.length * integral))
}

fn density_prefactor(coupling: f64) -> f64 {
    8.0 * coupling * coupling * PI * PI * HBAR * HBAR
}

/// Inverse of [`spin_density`]: the coupling that a density `n` produces.
pub fn coupling_from_density(n: f64, t: f64, g: &StripGeometry, omega0: f64) -> Result<f64> {
    ensure_finite("n", n)?;
    if n < 0.0 {
        return Err(Error::Domain("density must be non-negative".into()));
    }
    let beta = thermal_polarization(omega0, t)?;
    let integral = field_integral(g, omega0)?.value;
    let o2 = n * beta * MU_B * MU_B * g.length * integral / (8.0 * PI * PI * HBAR * HBAR);
    Ok(o2.sqrt())
}

/// Density and its sensitivity to the edge cutoff, `dn/dδ` (m⁻³), from a
/// central difference with a 5 % step in δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub n: f64,
    pub dn_dcutoff: f64,
}

pub fn spin_density_with_sensitivity(
    coupling: f64,
    t: f64,
    g: &StripGeometry,
    omega0: f64,
) -> Result<DensityEstimate> {
    let n = spin_density(coupling, t, g, omega0)?;
    let h = 0.05 * g.cutoff;
    let up = spin_density(coupling, t, &g.with_cutoff(g.cutoff + h), omega0)?;
    let down = spin_density(coupling, t, &g.with_cutoff(g.cutoff - h), omega0)?;
    Ok(DensityEstimate {
        n,
        dn_dcutoff: (up - down) / (2.0 * h),
    })
}

/// Per-community breakdown for the three-line spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub n: f64,
    pub n_central: f64,
    pub n_sat_low: f64,
    pub n_sat_high: f64,
    /// Hydrogen over free-electron abundance, `(n_sat_low + n_sat_high) / n_central`.
    pub ratio_h_e: f64,
}

/// Densities of the central line and the two hydrogen satellites from their
/// fitted couplings.
pub fn density_breakdown(
    central: f64,
    sat_low: f64,
    sat_high: f64,
    t: f64,
    g: &StripGeometry,
    omega0: f64,
) -> Result<DensityResult> {
    let n_central = spin_density(central, t, g, omega0)?;
    let n_sat_low = spin_density(sat_low, t, g, omega0)?;
    let n_sat_high = spin_density(sat_high, t, g, omega0)?;
    Ok(DensityResult {
        n: n_central + n_sat_low + n_sat_high,
        n_central,
        n_sat_low,
        n_sat_high,
        ratio_h_e: if n_central > 0.0 {
            (n_sat_low + n_sat_high) / n_central
        } else {
            f64::INFINITY
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA: f64 = 2.0 * PI * 5e9;

    #[test]
    fn elliptic_values() {
        assert!((elliptic_k(0.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((elliptic_k(0.5).unwrap() - 1.685_750_354_812_596).abs() < 1e-12);
        assert!(elliptic_k(1.0).is_err());
        assert!(elliptic_k(-0.1).is_err());
        let mut prev = 0.0;
        for i in 0..100 {
            let k = elliptic_k(i as f64 / 100.0).unwrap();
            assert!(k > prev);
            prev = k;
        }
    }

    #[test]
    fn photon_current() {
        let i0 = single_photon_current(OMEGA, 50.0);
        assert!((i0 - 6.45e-8).abs() < 0.01e-8, "{i0}");
        let ratio = single_photon_current(2.0 * OMEGA, 50.0) / i0;
        assert!((ratio - 2.0).abs() < 1e-12);
        let ratio = single_photon_current(OMEGA, 200.0) / i0;
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn field_is_even_and_decays() {
        let g = StripGeometry::reference();
        for x in [0.0, 1e-6, 6e-6, 3e-5] {
            let a = strip_field(&g, OMEGA, x, 0.0).unwrap();
            let b = strip_field(&g, OMEGA, -x, 0.0).unwrap();
            assert!((a - b).abs() <= 1e-15 * a);
        }
        let s = g.outer();
        let far = |x: f64| strip_field(&g, OMEGA, x, 0.0).unwrap();
        let scale = field_scale(&g, OMEGA);
        let x = 1e4 * s;
        assert!((far(x) / (scale * s * s / (x * x)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn field_is_singular_at_edges() {
        let g = StripGeometry::reference();
        for x in [g.half_gap, -g.half_gap, g.outer(), -g.outer()] {
            assert!(matches!(strip_field(&g, OMEGA, x, 0.0), Err(Error::Singularity(_))));
        }
        assert!(strip_field(&g, OMEGA, g.half_gap, 1e-9).is_ok());
    }

    #[test]
    fn field_integral_scales_with_omega_squared() {
        let g = StripGeometry::reference();
        let a = field_integral(&g, OMEGA).unwrap().value;
        let b = field_integral(&g, 3.0 * OMEGA).unwrap().value;
        assert!((b / a - 9.0).abs() < 1e-9);
    }

    #[test]
    fn alpha_scaling_laws() {
        let g = StripGeometry::reference();
        let a = alpha(&g).unwrap();
        let a4 = alpha(&StripGeometry { impedance: 200.0, ..g }).unwrap();
        assert!((a4 / a - 0.5).abs() < 1e-10);
        let shrunk = StripGeometry {
            half_gap: g.half_gap / 4.0,
            width: g.width / 4.0,
            cutoff: g.cutoff / 4.0,
            ..g
        };
        assert!((alpha(&shrunk).unwrap() / a - 4.0).abs() < 1e-8);
    }

    #[test]
    fn density_round_trip_and_temperature() {
        let g = StripGeometry::reference();
        let omega = 2.0 * PI * 1.3e6;
        let n = spin_density(omega, 0.3, &g, OMEGA).unwrap();
        let back = coupling_from_density(n, 0.3, &g, OMEGA).unwrap();
        assert!((back / omega - 1.0).abs() < 1e-12);
        let ratio = n / spin_density(omega, 0.01, &g, OMEGA).unwrap();
        assert!((ratio - 2.63).abs() < 0.01, "{ratio}");
        assert!(spin_density(omega, 0.0, &g, OMEGA).is_err());
    }

    #[test]
    fn geometry_validation() {
        let g = StripGeometry::reference();
        assert!(StripGeometry { cutoff: 3e-6, ..g }.validate().is_err());
        assert!(StripGeometry { width: -1.0, ..g }.validate().is_err());
        assert!(StripGeometry { impedance: f64::NAN, ..g }.validate().is_err());
    }
}
