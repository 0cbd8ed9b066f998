//! Complex transmission fit of a notch-coupled resonator.
//!
//! Model: `S21(f) = 1 − (Q/Qc) / (1 − iQ(f − f0)/f0)`, the no-spin limit of
//! the sweep transmission model. The trace traces a circle through 1 with
//! diameter `Q/Qc`; an algebraic circle fit and a phase fit seed a full
//! complex least-squares refinement.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{lm_fit, FitResult, LmOptions, ParamSpec, S21Trace};
use crate::error::{Error, Result};

pub fn resonance_model(f: f64, f0: f64, q: f64, qc: Complex64) -> Complex64 {
    let denom = Complex64::new(1.0, -q * (f - f0) / f0);
    1.0 - (q / qc) / denom
}

struct Circle {
    center: Complex64,
    radius: f64,
    radial_rms: f64,
}

fn fit_circle(z: &[Complex64]) -> Result<Circle> {
    let n = z.len() as f64;
    let mean = z.iter().sum::<Complex64>() / n;
    let spread = z.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    if !(spread > 1e-12) {
        return Err(Error::Fit("no resonance dip: S21 is constant across the trace".into()));
    }
    // x² + y² + D x + E y + F = 0 in centred, rescaled coordinates
    let rows: Vec<Complex64> = z.iter().map(|v| (v - mean) / spread).collect();
    let a = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => rows[i].re,
        1 => rows[i].im,
        _ => 1.0,
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|v| -v.norm_sqr()));
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Fit(format!("circle fit failed: {e}")))?;
    let c = Complex64::new(-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = c.norm_sqr() - sol[2];
    if !(r2 > 0.0) {
        return Err(Error::Fit("no resonance dip: points do not lie on a circle".into()));
    }
    let radius = r2.sqrt();
    let radial_rms = (rows.iter().map(|v| ((v - c).norm() - radius).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Circle {
        center: mean + c * spread,
        radius: radius * spread,
        radial_rms: radial_rms * spread,
    })
}

/// Fits `f0`, `Q` and the complex coupling `Qc = |Qc| e^{iφ}`. Internal Q
/// is reported as a derived quantity, `1/Qi = 1/Q − Re(1/Qc)`.
pub fn fit_resonance(trace: &S21Trace, opts: &LmOptions) -> Result<FitResult> {
    trace.validate()?;
    let fs: Vec<f64> = trace.rows.iter().map(|r| r.f).collect();
    let z: Vec<Complex64> = trace.rows.iter().map(|r| Complex64::new(r.re, r.im)).collect();

    let circle = fit_circle(&z)?;
    if circle.radius < 3.0 * circle.radial_rms || circle.radius < 1e-6 {
        return Err(Error::Fit(format!(
            "no resonance dip: circle radius {:.3e} is not resolved above scatter {:.3e}",
            circle.radius, circle.radial_rms
        )));
    }
    // the off-resonance point 1 sits on the circle opposite the resonance
    let ratio = 2.0 * (1.0 - circle.center);

    // arg((1 − S21)/(Q/Qc)) = atan(Q (f − f0) / f0), linear in f after tan
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let f_ref = fs[fs.len() / 2];
    let mut used = 0;
    for (f, v) in fs.iter().zip(&z) {
        let zp = (1.0 - v) / ratio;
        let phi = zp.arg();
        if phi.abs() < 1.3 && zp.norm() > 0.2 {
            let w = phi.cos().powi(4);
            let x = f - f_ref;
            let y = phi.tan();
            sw += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            sxy += w * x * y;
            used += 1;
        }
    }
    let det = sw * sxx - sx * sx;
    if used < 3 || det <= 0.0 {
        return Err(Error::Fit("no resonance dip: too few points near the resonance".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let f0_init = f_ref - intercept / slope;
    let q_init = slope * f0_init;
    let (f_lo, f_hi) = (fs[0].min(fs[fs.len() - 1]), fs[0].max(fs[fs.len() - 1]));
    if !(q_init > 0.0 && (f_lo..=f_hi).contains(&f0_init)) {
        return Err(Error::Fit(format!(
            "no resonance dip inside [{f_lo}, {f_hi}] Hz (phase fit gave f0 = {f0_init:.6e}, Q = {q_init:.3e})"
        )));
    }
    let qc_init = q_init / ratio;

    let residuals = |p: &[f64]| -> Vec<f64> {
        let qc = Complex64::from_polar(p[2], p[3]);
        let mut out = Vec::with_capacity(2 * fs.len());
        for (f, v) in fs.iter().zip(&z) {
            let d = resonance_model(*f, p[0], p[1], qc) - v;
            out.push(d.re);
            out.push(d.im);
        }
        out
    };
    let params = [
        ParamSpec::new("f0", f0_init).scale(f0_init / q_init),
        ParamSpec::new("Q", q_init).lower(0.0).scale(q_init),
        ParamSpec::new("Qc_abs", qc_init.norm()).lower(0.0).scale(qc_init.norm()),
        ParamSpec::new("Qc_phase", qc_init.arg()).scale(0.1),
    ];
    let mut fit = lm_fit("resonance_notch", residuals, &params, opts)?;

    let q = fit.value("Q").unwrap_or(f64::NAN);
    let qc_abs = fit.value("Qc_abs").unwrap_or(f64::NAN);
    let phase = fit.value("Qc_phase").unwrap_or(f64::NAN);
    let phase = (phase + PI).rem_euclid(2.0 * PI) - PI;
    if let Some(p) = fit.params.iter_mut().find(|p| p.name == "Qc_phase") {
        let shift = phase - p.value;
        p.value = phase;
        if let Some(ci) = p.ci95.as_mut() {
            ci[0] += shift;
            ci[1] += shift;
        }
    }
    let inv_qi = 1.0 / q - phase.cos() / qc_abs;
    let qi = 1.0 / inv_qi;
    // ∂(1/Qi)/∂p, then d Qi = −Qi² d(1/Qi)
    let grad = [
        ("Q", -qi * qi * (-1.0 / (q * q))),
        ("Qc_abs", -qi * qi * (phase.cos() / (qc_abs * qc_abs))),
        ("Qc_phase", -qi * qi * (phase.sin() / qc_abs)),
    ];
    let se = fit.propagate(&grad);
    fit.push_derived("Qi", qi, se);
    let qc = Complex64::from_polar(qc_abs, phase);
    fit.push_derived("Qc_re", qc.re, None);
    fit.push_derived("Qc_im", qc.im, None);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::S21Row;

    fn trace(f0: f64, q: f64, qc: Complex64) -> S21Trace {
        let n = 801;
        let span = 20.0 * f0 / q;
        let rows = (0..n)
            .map(|i| {
                let f = f0 - 0.5 * span + span * i as f64 / (n - 1) as f64;
                let s = resonance_model(f, f0, q, qc);
                S21Row { f, re: s.re, im: s.im }
            })
            .collect();
        S21Trace { rows }
    }

    #[test]
    fn noiseless_recovery() {
        let qc = Complex64::from_polar(2e5, 0.1);
        let fit = fit_resonance(&trace(5e9, 1e5, qc), &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.value("f0").unwrap() / 5e9 - 1.0).abs() < 1e-12);
        assert!((fit.value("Q").unwrap() / 1e5 - 1.0).abs() < 1e-8);
        assert!((fit.value("Qc_abs").unwrap() / 2e5 - 1.0).abs() < 1e-8);
        assert!((fit.value("Qc_phase").unwrap() - 0.1).abs() < 1e-8);
        let qi = fit.derived("Qi").unwrap().value;
        let want = 1.0 / (1.0 / 1e5 - 0.1f64.cos() / 2e5);
        assert!((qi / want - 1.0).abs() < 1e-8);
    }

    #[test]
    fn flat_trace_is_rejected() {
        let rows = (0..100)
            .map(|i| S21Row { f: 5e9 + i as f64 * 1e3, re: 1.0, im: 0.0 })
            .collect();
        let err = fit_resonance(&S21Trace { rows }, &LmOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Fit(_)), "{err}");
    }
}
