//! Joint fit of line positions measured on several resonators.

use serde::{Deserialize, Serialize};

use super::{lm_fit, FitResult, LmOptions, ParamSpec, PeakPosition};
use crate::constants::{H, MU_B};
use crate::error::{Error, Result};
use crate::spin_levels::{resonance_field_near, resonance_fields, SpinSystem, TransitionLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositionFitOptions {
    pub g_e_init: f64,
    pub hyperfine_init_hz: f64,
    pub g_central_init: f64,
    pub include_nuclear_zeeman: bool,
    /// Half-width of the field window searched around each observed line, T.
    pub window: f64,
    pub lm: LmOptions,
}

impl Default for PositionFitOptions {
    fn default() -> Self {
        PositionFitOptions {
            g_e_init: 2.0,
            hyperfine_init_hz: 1420e6,
            g_central_init: 2.0,
            include_nuclear_zeeman: true,
            window: 0.05,
            lm: LmOptions::default(),
        }
    }
}

fn predicted(spin: &SpinSystem, row: &PeakPosition, g_central: f64, window: f64) -> f64 {
    match row.label {
        TransitionLabel::Central => H * row.f_res / (g_central * MU_B),
        label => {
            let (lo, hi) = (row.b_peak - window, row.b_peak + window);
            if let Some(b) = resonance_field_near(spin, row.f_res, label, lo, hi) {
                return b;
            }
            // parameters far from the data: search the whole range instead
            let b_max = (4.0 * row.b_peak).max(1.0);
            resonance_fields(spin, row.f_res, b_max, Some(label))
                .ok()
                .and_then(|v| {
                    v.into_iter()
                        .min_by(|a, b| (a - row.b_peak).abs().total_cmp(&(b - row.b_peak).abs()))
                })
                .unwrap_or(f64::NAN)
        }
    }
}

/// Fits the hydrogen-like g-factor `g_e`, hyperfine constant `A_hz` and the
/// free-spin g-factor `g_central` to observed line positions.
pub fn fit_peak_positions(data: &[PeakPosition], opts: &PositionFitOptions) -> Result<FitResult> {
    for (i, row) in data.iter().enumerate() {
        if !(row.f_res.is_finite() && row.f_res > 0.0 && row.b_peak.is_finite() && row.b_peak > 0.0) {
            return Err(Error::InvalidRow {
                row: i + 1,
                message: "peak position needs positive finite frequency and field".into(),
            });
        }
        if row.label == TransitionLabel::Other {
            return Err(Error::InvalidRow {
                row: i + 1,
                message: "peak label must be central, sat_low or sat_high".into(),
            });
        }
    }
    let has_sat = data.iter().any(|r| r.label != TransitionLabel::Central);
    let has_central = data.iter().any(|r| r.label == TransitionLabel::Central);
    let nuclear = opts.include_nuclear_zeeman;
    let window = opts.window;
    let residuals = |p: &[f64]| -> Vec<f64> {
        let spin = SpinSystem::hyperfine_doublet(p[0], p[1]).with_nuclear_zeeman(nuclear);
        let ok = spin.validate().is_ok();
        data.iter()
            .map(|row| {
                if row.label != TransitionLabel::Central && !ok {
                    return f64::NAN;
                }
                predicted(&spin, row, p[2], window) - row.b_peak
            })
            .collect()
    };
    let params = [
        ParamSpec::new("g_e", opts.g_e_init).lower(0.0).scale(1e-3).fixed(!has_sat),
        ParamSpec::new("A_hz", opts.hyperfine_init_hz).lower(0.0).scale(1e6).fixed(!has_sat),
        ParamSpec::new("g_central", opts.g_central_init).lower(0.0).scale(1e-3).fixed(!has_central),
    ];
    let mut fit = lm_fit("peak_positions", residuals, &params, &opts.lm)?;

    // parameters with no data behind them are reported as unconstrained
    for (p, missing) in fit
        .params
        .iter_mut()
        .zip([!has_sat, !has_sat, !has_central])
    {
        if missing {
            p.fixed = false;
            p.unconstrained = true;
        }
    }
    let missing: Vec<String> = fit.unconstrained().iter().map(|s| s.to_string()).collect();
    if !missing.is_empty() && !fit.warnings.iter().any(|w| w.contains("unconstrained")) {
        fit.warnings.push(format!("no data constrain: {}", missing.join(", ")));
    }
    let mut freqs: Vec<f64> = data.iter().map(|r| r.f_res).collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    if freqs.len() < 3 {
        fit.warnings.push(format!(
            "rank-deficient design: only {} distinct resonator frequencies (need 3)",
            freqs.len()
        ));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(g: f64, a: f64, gc: f64, freqs: &[f64]) -> Vec<PeakPosition> {
        let spin = SpinSystem::hyperfine_doublet(g, a);
        let mut out = Vec::new();
        for &f in freqs {
            for label in [TransitionLabel::SatLow, TransitionLabel::SatHigh] {
                let b = resonance_fields(&spin, f, 1.0, Some(label)).unwrap()[0];
                out.push(PeakPosition { f_res: f, b_peak: b, label });
            }
            out.push(PeakPosition {
                f_res: f,
                b_peak: H * f / (gc * MU_B),
                label: TransitionLabel::Central,
            });
        }
        out
    }

    #[test]
    fn noiseless_recovery() {
        let data = synthetic(2.0, 1423e6, 2.0005, &[3e9, 4.5e9, 6e9]);
        let fit = fit_peak_positions(&data, &PositionFitOptions::default()).unwrap();
        assert!(fit.converged, "{}", fit.termination);
        assert!((fit.value("A_hz").unwrap() - 1423e6).abs() < 1.0);
        assert!((fit.value("g_e").unwrap() - 2.0).abs() < 1e-9);
        assert!((fit.value("g_central").unwrap() - 2.0005).abs() < 1e-9);
    }

    #[test]
    fn free_spin_only_flags_hyperfine() {
        let data: Vec<PeakPosition> = synthetic(2.0, 1423e6, 2.001, &[3e9, 5e9, 7e9])
            .into_iter()
            .filter(|r| r.label == TransitionLabel::Central)
            .collect();
        let fit = fit_peak_positions(&data, &PositionFitOptions::default()).unwrap();
        assert!((fit.value("g_central").unwrap() - 2.001).abs() < 1e-9);
        assert!(fit.param("A_hz").unwrap().unconstrained);
        assert!(fit.param("A_hz").unwrap().stderr.is_none());
    }

    #[test]
    fn single_frequency_warns() {
        let data = synthetic(2.0, 1423e6, 2.0, &[5e9]);
        let fit = fit_peak_positions(&data, &PositionFitOptions::default()).unwrap();
        assert!(fit.warnings.iter().any(|w| w.contains("rank-deficient")));
    }
}
