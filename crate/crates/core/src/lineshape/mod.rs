//! Spin-ensemble responses and the resonator transmission model.
//!
//! An ensemble with collective coupling Ω, homogeneous width γ₂ and
//! Gaussian inhomogeneous spread Δ (HWHM) shifts the resonator pole by
//! `W(ω)`. The Lorentzian response is `Ω² / (i(ω − ω_s) − γ₂/2)`; the Voigt
//! response is its average over a unit-mass Gaussian distribution of ω_s,
//! which evaluates to
//!
//! `W = −Ω² √π √ln2 / Δ · w((ω − ω_s + iγ₂/2) √ln2 / Δ)`
//!
//! and reduces to the Lorentzian as Δ → 0. `Re W ≤ 0` always.

mod faddeeva;

pub use faddeeva::{erfc, faddeeva, normal_cdf};

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    Lorentzian,
    Voigt,
}

/// One absorption line in a field sweep.
///
/// The transition frequency is linearised around the centre field:
/// `ω_s(B) = ω0 + slope · (B − center_field)`, so the line is resonant
/// with the cavity exactly at `center_field`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub label: String,
    /// Tesla.
    pub center_field: f64,
    /// dω_s/dB, rad/s per tesla.
    pub slope: f64,
    /// Collective coupling Ω, rad/s.
    pub coupling: f64,
    /// Homogeneous width γ₂, rad/s.
    pub gamma2: f64,
    /// Gaussian HWHM Δ, rad/s. Zero for a Lorentzian.
    pub delta: f64,
    pub shape: LineShape,
}

impl Peak {
    pub fn lorentzian(label: &str, center_field: f64, slope: f64, coupling: f64, gamma2: f64) -> Self {
        Peak {
            label: label.to_string(),
            center_field,
            slope,
            coupling,
            gamma2,
            delta: 0.0,
            shape: LineShape::Lorentzian,
        }
    }

    pub fn voigt(
        label: &str,
        center_field: f64,
        slope: f64,
        coupling: f64,
        gamma2: f64,
        delta: f64,
    ) -> Self {
        Peak {
            delta,
            shape: LineShape::Voigt,
            ..Self::lorentzian(label, center_field, slope, coupling, gamma2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.center_field, self.slope, self.coupling, self.gamma2, self.delta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("peak '{}' has non-finite parameters", self.label)));
        }
        if self.coupling < 0.0 || self.gamma2 < 0.0 || self.delta < 0.0 {
            return Err(Error::Domain(format!(
                "peak '{}': coupling and widths must be non-negative",
                self.label
            )));
        }
        match (self.shape, self.delta == 0.0) {
            (LineShape::Lorentzian, false) => Err(Error::Domain(format!(
                "peak '{}': a Lorentzian has no Gaussian width",
                self.label
            ))),
            (LineShape::Voigt, true) => Err(Error::Domain(format!(
                "peak '{}': a Voigt line needs Δ > 0",
                self.label
            ))),
            _ => Ok(()),
        }
    }

    /// Transition angular frequency at field `b` for a cavity at `omega0`.
    pub fn omega_s(&self, omega0: f64, b: f64) -> f64 {
        omega0 + self.slope * (b - self.center_field)
    }

    /// Integrated `−Re W` over ω, equal to `π Ω²` for either shape.
    pub fn area(&self) -> f64 {
        PI * self.coupling * self.coupling
    }
}

/// Pole shift `W(ω)` of one ensemble centred at `omega_s`.
pub fn ensemble_response(p: &Peak, omega: f64, omega_s: f64) -> Complex64 {
    let o2 = p.coupling * p.coupling;
    match p.shape {
        LineShape::Lorentzian => o2 / Complex64::new(-0.5 * p.gamma2, omega - omega_s),
        LineShape::Voigt => {
            let scale = LN_2.sqrt() / p.delta;
            let z = Complex64::new(omega - omega_s, 0.5 * p.gamma2) * scale;
            -o2 * PI.sqrt() * scale * faddeeva(z)
        }
    }
}

/// Field-dependent background dissipation: a normal-CDF onset to a plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    /// Plateau amplitude, added 1/Q.
    pub c: f64,
    /// Onset centre, tesla.
    pub b_on: f64,
    /// Onset width, tesla.
    pub sigma_on: f64,
}

impl Background {
    pub const NONE: Background = Background {
        c: 0.0,
        b_on: 0.0,
        sigma_on: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.b_on.is_finite() && self.sigma_on.is_finite()) {
            return Err(Error::Domain("background parameters must be finite".into()));
        }
        if self.c < 0.0 || self.sigma_on <= 0.0 {
            return Err(Error::Domain("background needs c ≥ 0 and sigma_on > 0".into()));
        }
        Ok(())
    }
}

pub fn background_loss(bg: &Background, b: f64) -> f64 {
    bg.c * normal_cdf((b - bg.b_on) / bg.sigma_on)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Bare angular resonance frequency, rad/s.
    pub omega0: f64,
    /// Total quality factor.
    pub q: f64,
    /// Complex coupling quality factor.
    pub qc: Complex64,
}

impl ResonatorParams {
    pub fn from_hz(f0: f64, q: f64, qc: Complex64) -> Self {
        ResonatorParams {
            omega0: 2.0 * PI * f0,
            q,
            qc,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.omega0 / self.q
    }

    pub fn kappa_c(&self) -> Complex64 {
        self.omega0 / self.qc
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.q > 0.0 && self.omega0.is_finite() && self.q.is_finite()) {
            return Err(Error::Domain("resonator needs ω0 > 0 and Q > 0".into()));
        }
        let qc_re = self.qc.re;
        if !(qc_re > 0.0 && self.qc.im.is_finite()) {
            return Err(Error::Domain("coupling Q must have a positive real part".into()));
        }
        Ok(())
    }
}

/// Resonator plus spin lines plus background: the forward model of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub resonator: ResonatorParams,
    pub peaks: Vec<Peak>,
    pub background: Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Field-induced loss `Q⁻¹(B) − Q⁻¹(0)` before any reference subtraction.
    pub qb_inv: f64,
    /// Resonance frequency shift, Hz.
    pub df: f64,
}

impl SpectrumModel {
    pub fn validate(&self) -> Result<()> {
        self.resonator.validate()?;
        self.background.validate()?;
        for (i, p) in self.peaks.iter().enumerate() {
            p.validate()?;
            if self.peaks[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::Domain(format!("duplicate peak label '{}'", p.label)));
            }
        }
        Ok(())
    }

    /// Summed pole shift of every line at probe frequency `omega`, field `b`.
    pub fn total_response(&self, omega: f64, b: f64) -> Complex64 {
        let w0 = self.resonator.omega0;
        self.peaks
            .iter()
            .map(|p| ensemble_response(p, omega, p.omega_s(w0, b)))
            .sum()
    }

    pub fn sweep_point(&self, b: f64) -> SweepPoint {
        let w0 = self.resonator.omega0;
        let w = self.total_response(w0, b);
        SweepPoint {
            qb_inv: -w.re / w0 + background_loss(&self.background, b),
            df: w.im / (2.0 * PI),
        }
    }

    /// `sweep_point` over many fields; parallel when the feature is on.
    pub fn evaluate_sweep(&self, fields: &[f64]) -> Vec<SweepPoint> {
        fields.par_iter().map(|&b| self.sweep_point(b)).collect()
    }

    /// Contribution of a single line (by index) to `sweep_point`.
    pub fn peak_component(&self, index: usize, b: f64) -> SweepPoint {
        let w0 = self.resonator.omega0;
        let p = &self.peaks[index];
        let w = ensemble_response(p, w0, p.omega_s(w0, b));
        SweepPoint {
            qb_inv: -w.re / w0,
            df: w.im / (2.0 * PI),
        }
    }

    /// Transmission at probe frequency `omega` and field `b`. The background
    /// loss enters as an additional real damping `ω0 · bg(B)` so that the
    /// loaded Q seen by a resonance fit matches `sweep_point`.
    pub fn s21(&self, omega: f64, b: f64) -> Complex64 {
        let r = &self.resonator;
        let damping = r.kappa() + r.omega0 * background_loss(&self.background, b);
        let denom = Complex64::new(-damping, omega - r.omega0) + self.total_response(omega, b);
        1.0 + r.kappa_c() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_PI: f64 = 2.0 * PI;

    fn lorentz() -> Peak {
        Peak::lorentzian("c", 0.18, TWO_PI * 28e9, TWO_PI * 1e6, TWO_PI * 87e6)
    }

    #[test]
    fn lorentzian_on_resonance_is_real() {
        let p = lorentz();
        let w = ensemble_response(&p, 1e10, 1e10);
        assert!(w.im.abs() < 1e-20);
        let want = -2.0 * p.coupling.powi(2) / p.gamma2;
        assert!((w.re - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn voigt_reduces_to_lorentzian() {
        let l = lorentz();
        let v = Peak::voigt("v", l.center_field, l.slope, l.coupling, l.gamma2, l.gamma2 * 1e-7);
        let mut seed = 12345u64;
        for _ in 0..50 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (seed >> 11) as f64 / (1u64 << 53) as f64;
            let det = (u - 0.5) * 20.0 * l.gamma2;
            let a = ensemble_response(&l, det, 0.0);
            let b = ensemble_response(&v, det, 0.0);
            assert!((a - b).norm() / a.norm() < 1e-6, "det {det}");
        }
    }

    #[test]
    fn background_limits() {
        let bg = Background {
            c: 3e-6,
            b_on: 0.05,
            sigma_on: 0.01,
        };
        assert!(background_loss(&bg, -1.0) < 1e-20);
        assert!((background_loss(&bg, 0.05) - 1.5e-6).abs() < 1e-18);
        assert!((background_loss(&bg, 2.0) - 3e-6).abs() < 1e-18);
    }

    fn model(peaks: Vec<Peak>, bg: Background) -> SpectrumModel {
        SpectrumModel {
            resonator: ResonatorParams::from_hz(5e9, 1e5, Complex64::new(2e5, 0.0)),
            peaks,
            background: bg,
        }
    }

    #[test]
    fn sweep_point_without_spins() {
        let m = model(vec![Peak { coupling: 0.0, ..lorentz() }], Background::NONE);
        let p = m.sweep_point(0.18);
        assert_eq!(p.qb_inv, 0.0);
        assert_eq!(p.df, 0.0);
    }

    #[test]
    fn sweep_point_on_resonance_loss() {
        let m = model(vec![lorentz()], Background::NONE);
        let p = m.sweep_point(0.18);
        assert!((p.qb_inv - 4.60e-6).abs() < 0.01e-6, "{}", p.qb_inv);
        let o = lorentz().coupling;
        let exact = 2.0 * o * o / (lorentz().gamma2 * TWO_PI * 5e9);
        assert!((p.qb_inv - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn frequency_shift_is_odd_about_centre() {
        let m = model(vec![lorentz()], Background::NONE);
        for db in [1e-4, 1e-3, 5e-3] {
            let a = m.sweep_point(0.18 + db).df;
            let b = m.sweep_point(0.18 - db).df;
            assert!((a + b).abs() < 1e-9 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn s21_limits() {
        let m = model(vec![], Background::NONE);
        let w0 = m.resonator.omega0;
        let far = m.s21(w0 + 1e6 * m.resonator.kappa(), 0.0);
        assert!((far - Complex64::new(1.0, 0.0)).norm() < 1e-5);
        let on = m.s21(w0, 0.0);
        assert!((on - Complex64::new(1.0 - 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(Peak { delta: 1.0, ..lorentz() }.validate().is_err());
        assert!(Peak::voigt("v", 0.1, 1.0, 1.0, 1.0, 0.0).validate().is_err());
        assert!(Peak { coupling: -1.0, ..lorentz() }.validate().is_err());
        let m = model(vec![lorentz(), lorentz()], Background::NONE);
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn response_is_passive(
            det in -50.0f64..50.0,
            g_over_d in 0.01f64..10.0,
            voigt in any::<bool>(),
        ) {
            let d = TWO_PI * 90e6;
            let p = if voigt {
                Peak::voigt("v", 0.0, 1.0, TWO_PI * 1e6, g_over_d * d, d)
            } else {
                Peak::lorentzian("l", 0.0, 1.0, TWO_PI * 1e6, g_over_d * d)
            };
            let w = ensemble_response(&p, det * d, 0.0);
            prop_assert!(w.re < 0.0);
        }

        #[test]
        fn background_is_monotone(b1 in -0.5f64..0.5, b2 in -0.5f64..0.5) {
            let bg = Background { c: 1e-6, b_on: 0.05, sigma_on: 0.02 };
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(background_loss(&bg, lo) <= background_loss(&bg, hi));
        }
    }
}
