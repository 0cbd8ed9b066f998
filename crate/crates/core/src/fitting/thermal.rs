//! Temperature dependence of peak areas: spin-model comparison and the
//! hydrogen-to-free-electron abundance.
//!
//! A line's area is proportional to the number of spins times the thermal
//! population difference across it, so `area(T) = scale · factor(T)` with
//! `factor` from [`peak_area_factor`].

use serde::{Deserialize, Serialize};

use super::{lm_fit, FitResult, LmOptions, ParamSpec, TemperatureRow, TemperatureSeries};
use crate::error::{Error, Result};
use crate::spin_levels::{find_transition, peak_area_factor, SpinKind, SpinSystem, TransitionLabel};

/// Fields at which the lines were observed, tesla.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakFields {
    pub central: f64,
    #[serde(default)]
    pub sat_low: Option<f64>,
    #[serde(default)]
    pub sat_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureFitOptions {
    /// Resonator frequency, Hz.
    pub f0_hz: f64,
    pub fields: PeakFields,
    /// Spin model of the satellite pair.
    #[serde(default = "SpinSystem::hydrogen")]
    pub hydrogen: SpinSystem,
    #[serde(default)]
    pub lm: LmOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScore {
    pub name: String,
    pub spin: SpinSystem,
    pub fit: FitResult,
    pub residual_norm: f64,
    /// Small-sample corrected Akaike criterion of the weighted fit.
    pub aicc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    /// Central-line hypotheses, best (smallest residual) first.
    pub ranking: Vec<HypothesisScore>,
    /// Residual norm of the runner-up over the best; absent when the best
    /// fit is exact or there is only one hypothesis.
    pub residual_ratio: Option<f64>,
    /// Shared-scale fit of both satellites.
    pub satellites: Option<FitResult>,
    /// `n_H / n_e` from the satellite and best central scales.
    pub abundance: Option<f64>,
    pub abundance_stderr: Option<f64>,
    pub warnings: Vec<String>,
}

fn hypothesis_name(spin: &SpinSystem) -> &'static str {
    match spin.kind {
        SpinKind::FreeDoublet => "doublet",
        SpinKind::Triplet => "triplet",
        SpinKind::HyperfineDoublet => "hyperfine_doublet",
    }
}

/// Thermal factor of the labelled line of `spin` at field `b`, temperature `t`.
fn line_factor(spin: &SpinSystem, label: TransitionLabel, b: f64, t: f64) -> Result<f64> {
    let tr = find_transition(spin, b, label)?;
    peak_area_factor(spin, &tr, b, t)
}

fn aicc(rss: f64, n: usize, k: usize) -> f64 {
    let n_f = n as f64;
    let k_f = k as f64;
    let base = n_f * (rss / n_f).max(f64::MIN_POSITIVE).ln() + 2.0 * k_f;
    if n > k + 1 {
        base + 2.0 * k_f * (k_f + 1.0) / (n_f - k_f - 1.0)
    } else {
        f64::INFINITY
    }
}

/// One-parameter scale fit of `(area, err, factor)` triples.
fn scale_fit(id: &str, points: &[(f64, f64, f64)], opts: &LmOptions) -> Result<FitResult> {
    let num: f64 = points.iter().map(|(a, e, f)| a * f / (e * e)).sum();
    let den: f64 = points.iter().map(|(_, e, f)| f * f / (e * e)).sum();
    if !(den > 0.0) {
        return Err(Error::Fit(format!("{id}: thermal factors vanish at every temperature")));
    }
    let init = num / den;
    let residuals = |p: &[f64]| -> Vec<f64> {
        points.iter().map(|(a, e, f)| (p[0] * f - a) / e).collect()
    };
    lm_fit(
        id,
        residuals,
        &[ParamSpec::new("scale", init).scale(init.abs().max(1e-300))],
        opts,
    )
}

/// Abundance at a single temperature:
/// `(Σ area_sat / Σ Δp_sat) / (area_central / Δp_central)`.
pub fn abundance_ratio(
    row: &TemperatureRow,
    central: &SpinSystem,
    hydrogen: &SpinSystem,
    fields: &PeakFields,
) -> Result<f64> {
    let (Some(a_lo), Some(a_hi)) = (row.area_sat_low, row.area_sat_high) else {
        return Err(Error::Input("abundance needs both satellite areas".into()));
    };
    let (Some(b_lo), Some(b_hi)) = (fields.sat_low, fields.sat_high) else {
        return Err(Error::Input("abundance needs both satellite fields".into()));
    };
    let f_c = line_factor(central, TransitionLabel::Central, fields.central, row.t)?;
    let f_lo = line_factor(hydrogen, TransitionLabel::SatLow, b_lo, row.t)?;
    let f_hi = line_factor(hydrogen, TransitionLabel::SatHigh, b_hi, row.t)?;
    if !(row.area_central > 0.0 && f_c > 0.0 && f_lo + f_hi > 0.0) {
        return Err(Error::Fit("central area and thermal factors must be positive".into()));
    }
    Ok(((a_lo + a_hi) / (f_lo + f_hi)) / (row.area_central / f_c))
}

/// Fits every central-line hypothesis to the central areas, ranks them,
/// and (when satellite areas and fields are given) fits a shared
/// satellite scale and the abundance ratio.
pub fn fit_temperature(
    ts: &TemperatureSeries,
    hypotheses: &[SpinSystem],
    opts: &TemperatureFitOptions,
) -> Result<TemperatureFit> {
    ts.validate()?;
    if ts.rows.len() < 3 {
        return Err(Error::Input("temperature fit needs at least 3 temperatures".into()));
    }
    if hypotheses.is_empty() {
        return Err(Error::Input("at least one spin hypothesis is required".into()));
    }
    let fields = &opts.fields;
    let mut warnings = Vec::new();
    let err = |e: Option<f64>| e.unwrap_or(1.0);

    let mut ranking = Vec::with_capacity(hypotheses.len());
    for (i, spin) in hypotheses.iter().enumerate() {
        spin.validate()?;
        let base = hypothesis_name(spin);
        let name = if hypotheses[..i].iter().any(|s| hypothesis_name(s) == base) {
            format!("{base}_{i}")
        } else {
            base.to_string()
        };
        let tr = find_transition(spin, fields.central, TransitionLabel::Central)?;
        if opts.f0_hz > 0.0 && (tr.frequency / opts.f0_hz - 1.0).abs() > 0.05 {
            warnings.push(format!(
                "{name}: line at {:.4} T sits at {:.4e} Hz, not near f0",
                fields.central, tr.frequency
            ));
        }
        let points: Vec<(f64, f64, f64)> = ts
            .rows
            .iter()
            .map(|r| Ok((r.area_central, err(r.area_central_err), peak_area_factor(spin, &tr, fields.central, r.t)?)))
            .collect::<Result<_>>()?;
        let fit = scale_fit(&format!("area_{name}"), &points, &opts.lm)?;
        let rss = fit.residual_norm.powi(2);
        ranking.push(HypothesisScore {
            name,
            spin: spin.clone(),
            residual_norm: fit.residual_norm,
            aicc: aicc(rss, points.len(), 1),
            fit,
        });
    }
    ranking.sort_by(|a, b| a.residual_norm.total_cmp(&b.residual_norm));
    let residual_ratio = (ranking.len() > 1 && ranking[0].residual_norm > 0.0)
        .then(|| ranking[1].residual_norm / ranking[0].residual_norm);

    let mut satellites = None;
    let mut abundance = None;
    let mut abundance_stderr = None;
    if let (true, Some(b_lo), Some(b_hi)) = (ts.has_satellites(), fields.sat_low, fields.sat_high) {
        let h = &opts.hydrogen;
        let lo = find_transition(h, b_lo, TransitionLabel::SatLow)?;
        let hi = find_transition(h, b_hi, TransitionLabel::SatHigh)?;
        let mut points = Vec::with_capacity(2 * ts.rows.len());
        for r in &ts.rows {
            let a_lo = r.area_sat_low.expect("checked by has_satellites");
            let a_hi = r.area_sat_high.expect("checked by has_satellites");
            points.push((a_lo, err(r.area_sat_low_err), peak_area_factor(h, &lo, b_lo, r.t)?));
            points.push((a_hi, err(r.area_sat_high_err), peak_area_factor(h, &hi, b_hi, r.t)?));
        }
        let fit = scale_fit("area_satellites", &points, &opts.lm)?;
        let best = &ranking[0].fit;
        let s_h = fit.value("scale").unwrap_or(f64::NAN);
        let s_c = best.value("scale").unwrap_or(f64::NAN);
        if s_c > 0.0 {
            let ratio = s_h / s_c;
            abundance = Some(ratio);
            abundance_stderr = match (fit.stderr("scale"), best.stderr("scale")) {
                (Some(eh), Some(ec)) => Some(ratio * ((eh / s_h).powi(2) + (ec / s_c).powi(2)).sqrt()),
                _ => None,
            }
            .filter(|v| v.is_finite());
        } else {
            warnings.push("central scale is not positive; abundance undefined".into());
        }
        satellites = Some(fit);
    }

    Ok(TemperatureFit {
        ranking,
        residual_ratio,
        satellites,
        abundance,
        abundance_stderr,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{H, MU_B};

    fn opts() -> TemperatureFitOptions {
        TemperatureFitOptions {
            f0_hz: 5e9,
            fields: PeakFields {
                central: H * 5e9 / (2.0 * MU_B),
                sat_low: None,
                sat_high: None,
            },
            hydrogen: SpinSystem::hyperfine_doublet(2.0, 1423e6),
            lm: LmOptions::default(),
        }
    }

    #[test]
    fn doublet_area_ratio() {
        let d = SpinSystem::free_doublet(2.0);
        let b = opts().fields.central;
        let r = line_factor(&d, TransitionLabel::Central, b, 0.05).unwrap()
            / line_factor(&d, TransitionLabel::Central, b, 0.3).unwrap();
        assert!((r - 2.59).abs() < 0.01, "{r}");
    }

    #[test]
    fn doublet_data_prefer_doublet() {
        let d = SpinSystem::free_doublet(2.0);
        let t3 = SpinSystem::triplet(2.0, 0.0);
        let o = opts();
        let rows = [0.01, 0.03, 0.06, 0.1, 0.2, 0.3, 0.5]
            .iter()
            .map(|&t| {
                let f = line_factor(&d, TransitionLabel::Central, o.fields.central, t).unwrap();
                TemperatureRow::central(t, 3.0 * f)
            })
            .collect();
        let fit = fit_temperature(&TemperatureSeries { rows }, &[t3, d], &o).unwrap();
        assert_eq!(fit.ranking[0].name, "doublet");
        assert!((fit.ranking[0].fit.value("scale").unwrap() - 3.0).abs() < 1e-9);
        assert!(fit.ranking[0].aicc < fit.ranking[1].aicc);
    }

    #[test]
    fn area_vanishes_at_high_temperature() {
        let o = opts();
        for spin in [SpinSystem::free_doublet(2.0), SpinSystem::triplet(2.0, 0.0)] {
            let f = line_factor(&spin, TransitionLabel::Central, o.fields.central, 1e4).unwrap();
            assert!(f.abs() < 1e-4, "{f}");
        }
    }
}
