//! Apparent g-factor versus in-plane field angle.

use super::{lm_fit, AngleSeries, FitResult, LmOptions, ParamSpec};
use crate::error::{Error, Result};

/// Fits `g(θ) = g_true + a sin θ + b sin 2θ`.
pub fn fit_angle(series: &AngleSeries, opts: &LmOptions) -> Result<FitResult> {
    series.validate()?;
    if series.rows.len() < 3 {
        return Err(Error::Input("angle fit needs at least 3 angles".into()));
    }
    let rows: Vec<(f64, f64, f64)> = series
        .rows
        .iter()
        .map(|r| {
            let t = r.theta_deg.to_radians();
            (t.sin(), (2.0 * t).sin(), r.g)
        })
        .collect();
    let g0 = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    let residuals = |p: &[f64]| -> Vec<f64> {
        rows.iter()
            .map(|&(s1, s2, g)| p[0] + p[1] * s1 + p[2] * s2 - g)
            .collect()
    };
    let params = [
        ParamSpec::new("g_true", g0).scale(1e-3),
        ParamSpec::new("a", 0.0).scale(1e-3),
        ParamSpec::new("b", 0.0).scale(1e-3),
    ];
    lm_fit("angle", residuals, &params, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::AngleRow;

    fn series(g: f64, a: f64, b: f64, thetas: &[f64]) -> AngleSeries {
        AngleSeries {
            rows: thetas
                .iter()
                .map(|&t| {
                    let r = t.to_radians();
                    AngleRow { theta_deg: t, g: g + a * r.sin() + b * (2.0 * r).sin() }
                })
                .collect(),
        }
    }

    #[test]
    fn exact_recovery() {
        let s = series(2.0021, -0.004, -0.002, &[0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0]);
        let fit = fit_angle(&s, &LmOptions::default()).unwrap();
        assert!((fit.value("g_true").unwrap() - 2.0021).abs() < 1e-12);
        assert!((fit.value("a").unwrap() + 0.004).abs() < 1e-12);
        assert!((fit.value("b").unwrap() + 0.002).abs() < 1e-12);
    }

    #[test]
    fn zero_angle_only() {
        let s = AngleSeries {
            rows: [2.001, 2.003, 2.002]
                .iter()
                .map(|&g| AngleRow { theta_deg: 0.0, g })
                .collect(),
        };
        let fit = fit_angle(&s, &LmOptions::default()).unwrap();
        assert!((fit.value("g_true").unwrap() - 2.002).abs() < 1e-12);
        assert!(fit.param("a").unwrap().unconstrained);
        assert!(fit.param("b").unwrap().unconstrained);
    }
}
