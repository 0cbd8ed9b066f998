//! Power saturation of the spin loss and the relaxation time behind it.

use std::f64::consts::PI;

use super::{lm_fit, FitResult, LmOptions, ParamSpec, SaturationCurve};
use crate::constants::gamma_e_hz_per_tesla;
use crate::error::{ensure_finite, Error, Result};

/// `1/Q_s(P0) = (1/Q_s(0)) (1 + P0/P_sat)^(−ε)`.
pub fn saturation_model(p0: f64, qs0_inv: f64, p_sat: f64, epsilon: f64) -> f64 {
    qs0_inv * (1.0 + p0 / p_sat).powf(-epsilon)
}

/// Fits `qs0_inv`, `p_sat` (circulating power, W) and `epsilon` in log
/// space. When every measured power lies below the fitted `p_sat` the
/// result carries a lower-bound warning.
pub fn fit_saturation(curve: &SaturationCurve, opts: &LmOptions) -> Result<FitResult> {
    curve.validate()?;
    if curve.rows.len() < 4 {
        return Err(Error::Input("saturation fit needs at least 4 powers".into()));
    }
    let p0: Vec<f64> = curve.rows.iter().map(|r| curve.circulating_power(r.p_drive)).collect();
    let ln_q: Vec<f64> = curve.rows.iter().map(|r| r.qs_inv.ln()).collect();

    let q0 = curve.rows[0].qs_inv;
    // first power where the loss has dropped to half, else the top power
    let half = curve
        .rows
        .iter()
        .zip(&p0)
        .find(|(r, _)| r.qs_inv < 0.5 * q0)
        .map_or(p0[p0.len() - 1], |(_, &p)| p);
    let p_sat_init = half.max(p0[0]);

    let residuals = |p: &[f64]| -> Vec<f64> {
        p0.iter()
            .zip(&ln_q)
            .map(|(&x, &y)| saturation_model(x, p[0], p[1], p[2]).ln() - y)
            .collect()
    };
    let params = [
        ParamSpec::new("qs0_inv", q0).lower(0.0).scale(q0),
        ParamSpec::new("p_sat", p_sat_init).lower(0.0).scale(p_sat_init),
        ParamSpec::new("epsilon", 1.0).lower(0.0).scale(1.0),
    ];
    let mut fit = lm_fit("saturation", residuals, &params, opts)?;
    let p_sat = fit.value("p_sat").unwrap_or(f64::NAN);
    let p_max = p0.iter().copied().fold(0.0, f64::max);
    if p_max < p_sat {
        fit.warnings.push(format!(
            "p_sat lower bound: every circulating power (max {p_max:.3e} W) is below the fitted P_sat"
        ));
    }
    Ok(fit)
}

/// Phase memory time from a homogeneous width `γ₂` (rad/s): `T2 = 2π / γ₂`.
pub fn t2e_from_gamma2(gamma2: f64) -> f64 {
    2.0 * PI / gamma2
}

/// `T1 = 1 / (P_sat T2 γ_e² α²)` with `γ_e = g μ_B / h` in Hz/T.
pub fn derive_t1(p_sat: f64, t2e: f64, alpha: f64, g_e: f64) -> Result<f64> {
    for (name, v) in [("P_sat", p_sat), ("T2e", t2e), ("alpha", alpha), ("g_e", g_e)] {
        ensure_finite(name, v)?;
        if v <= 0.0 {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let gamma = gamma_e_hz_per_tesla(g_e);
    Ok(1.0 / (p_sat * t2e * gamma * gamma * alpha * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::SaturationRow;

    fn curve(p_sat: f64, eps: f64) -> SaturationCurve {
        let (q, q_ext) = (1e4, 2e4);
        let rows = (0..25)
            .map(|i| {
                let p0 = p_sat * 10f64.powf(-2.0 + 4.0 * i as f64 / 24.0);
                let p_drive = p0 * q_ext / (2.0 * q * q);
                SaturationRow { p_drive, qs_inv: saturation_model(p0, 2e-5, p_sat, eps) }
            })
            .collect();
        SaturationCurve { rows, q, q_ext }
    }

    #[test]
    fn exact_recovery() {
        let fit = fit_saturation(&curve(14e-9, 1.0), &LmOptions::default()).unwrap();
        assert!((fit.value("p_sat").unwrap() / 14e-9 - 1.0).abs() < 1e-6);
        assert!((fit.value("epsilon").unwrap() - 1.0).abs() < 1e-6);
        assert!((fit.value("qs0_inv").unwrap() / 2e-5 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn below_saturation_is_flagged() {
        let mut c = curve(14e-9, 1.0);
        c.rows.truncate(6);
        let fit = fit_saturation(&c, &LmOptions::default()).unwrap();
        assert!(fit.warnings.iter().any(|w| w.contains("lower bound")), "{:?}", fit.warnings);
    }

    #[test]
    fn t1_arithmetic() {
        let t1 = derive_t1(14e-9, 1.0 / 87e6, 0.21, 2.0).unwrap();
        assert!((1.5e-4..2.2e-4).contains(&t1), "{t1}");
        let half = derive_t1(28e-9, 1.0 / 87e6, 0.21, 2.0).unwrap();
        assert!((t1 / half - 2.0).abs() < 1e-12);
        let quarter = derive_t1(14e-9, 1.0 / 87e6, 0.42, 2.0).unwrap();
        assert!((t1 / quarter - 4.0).abs() < 1e-12);
        assert!(derive_t1(0.0, 1.0, 1.0, 2.0).is_err());
    }
}
