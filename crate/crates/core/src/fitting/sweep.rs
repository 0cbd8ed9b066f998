//! Field-sweep spectral fit: Lorentzian and Voigt lines plus background.
//!
//! Each line is parameterised by its centre field, Ω² (unbounded, so a
//! missing line can fit to zero or below), γ₂ and, for Voigt lines, Δ.
//! Constant offsets absorb the reference-row subtraction of both channels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{lm_fit, t2e_from_gamma2, Covariance, FitResult, LmOptions, Loss, ParamSpec, SweepTrace};
use crate::error::{Error, Result};
use crate::lineshape::{background_loss, ensemble_response, Background, LineShape, Peak, SpectrumModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFitOptions {
    /// Soft-L1 refit after a plain fit, with per-channel scales from the
    /// median absolute deviation of the plain-fit residuals.
    pub robust: bool,
    /// Also fit the frequency shift channel.
    pub use_frequency: bool,
    /// Seed line centres and amplitudes from a local-maxima scan.
    pub auto_init: bool,
    pub fit_background: bool,
    /// Parameter names held at their template values, e.g. `central.gamma2`.
    pub fixed: Vec<String>,
    pub lm: LmOptions,
}

impl Default for SweepFitOptions {
    fn default() -> Self {
        SweepFitOptions {
            robust: false,
            use_frequency: false,
            auto_init: true,
            fit_background: true,
            fixed: Vec::new(),
            // the noise on a sweep grows with the signal
            lm: LmOptions {
                covariance: Covariance::Sandwich,
                ..LmOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub fit: FitResult,
    /// Fitted forward model (negative Ω² clipped to zero coupling).
    pub model: SpectrumModel,
    /// Offsets added to the model to match the reference-subtracted data.
    pub offset_qb: f64,
    pub offset_df_hz: f64,
}

/// Local maxima of a smoothed copy of `y`, ranked by topographic
/// prominence. Returns up to `count` `(x, prominence)` pairs sorted by `x`.
pub fn find_peaks(x: &[f64], y: &[f64], count: usize) -> Vec<(f64, f64)> {
    let n = y.len();
    if n < 5 || count == 0 {
        return Vec::new();
    }
    let half = (n / 300).max(1);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut found = Vec::new();
    for i in 1..n - 1 {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let is_max = (lo..hi).all(|j| j == i || smooth[j] < smooth[i] || (smooth[j] == smooth[i] && j > i));
        if !is_max {
            continue;
        }
        let mut left_min = smooth[i];
        let mut j = i;
        while j > 0 && smooth[j - 1] <= smooth[i] {
            j -= 1;
            left_min = left_min.min(smooth[j]);
        }
        let mut right_min = smooth[i];
        let mut j = i;
        while j + 1 < n && smooth[j + 1] <= smooth[i] {
            j += 1;
            right_min = right_min.min(smooth[j]);
        }
        let prominence = smooth[i] - left_min.max(right_min);
        if prominence > 0.0 {
            found.push((i, prominence));
        }
    }
    let max_prom = found.iter().map(|f| f.1).fold(0.0, f64::max);
    found.retain(|f| f.1 >= 0.05 * max_prom);
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    found.truncate(count);
    found.sort_by_key(|f| f.0);
    found.into_iter().map(|(i, p)| (x[i], p)).collect()
}

struct Layout {
    peaks: Vec<Peak>,
    index: Vec<PeakIndex>,
    bg: [usize; 3],
    offset_qb: usize,
    offset_df: Option<usize>,
}

struct PeakIndex {
    b_peak: usize,
    omega_sq: usize,
    gamma2: usize,
    delta: Option<usize>,
}

fn unit_peak(p: &Peak) -> Peak {
    Peak { coupling: 1.0, ..p.clone() }
}

/// Qb and fractional frequency shift of the model at every field.
fn evaluate(
    layout: &Layout,
    omega0: f64,
    fields: &[f64],
    p: &[f64],
    with_df: bool,
) -> (Vec<f64>, Vec<f64>) {
    let peaks: Vec<(Peak, f64)> = layout
        .peaks
        .iter()
        .zip(&layout.index)
        .map(|(base, ix)| {
            let mut q = unit_peak(base);
            q.center_field = p[ix.b_peak];
            q.gamma2 = p[ix.gamma2];
            if let Some(d) = ix.delta {
                q.delta = p[d];
            }
            (q, p[ix.omega_sq])
        })
        .collect();
    let bg = Background {
        c: p[layout.bg[0]],
        b_on: p[layout.bg[1]],
        sigma_on: p[layout.bg[2]],
    };
    let mut qb = Vec::with_capacity(fields.len());
    let mut df = Vec::with_capacity(if with_df { fields.len() } else { 0 });
    for &b in fields {
        let mut w = num_complex::Complex64::new(0.0, 0.0);
        for (q, o2) in &peaks {
            w += ensemble_response(q, omega0, q.omega_s(omega0, b)) * *o2;
        }
        qb.push(-w.re / omega0 + background_loss(&bg, b) + p[layout.offset_qb]);
        if with_df {
            df.push(w.im / omega0 + layout.offset_df.map_or(0.0, |i| p[i]));
        }
    }
    (qb, df)
}

fn mad_scale(r: &[f64]) -> f64 {
    let mut v: Vec<f64> = r.to_vec();
    v.sort_by(f64::total_cmp);
    let med = v[v.len() / 2];
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    1.4826 * dev[dev.len() / 2]
}

/// Fits a measured sweep with the lines and background declared in
/// `template`. The template's resonator ω0 and line slopes are held fixed.
pub fn fit_sweep(trace: &SweepTrace, template: &SpectrumModel, opts: &SweepFitOptions) -> Result<SweepFit> {
    trace.validate()?;
    template.validate()?;
    if template.peaks.iter().any(|p| p.slope == 0.0) {
        return Err(Error::Input("every template line needs a non-zero slope".into()));
    }
    let omega0 = template.resonator.omega0;
    let f0_hz = omega0 / (2.0 * PI);
    let fields = trace.fields();
    let qb_data = trace.qb_inv();
    let df_data: Vec<f64> = trace.df().iter().map(|d| d / f0_hz).collect();
    let n = fields.len();

    // initial guesses
    let bg0 = template.background;
    let mut centers: Vec<f64> = template.peaks.iter().map(|p| p.center_field).collect();
    let mut heights: Vec<Option<f64>> = vec![None; centers.len()];
    if opts.auto_init && !template.peaks.is_empty() {
        let baseline: Vec<f64> = fields
            .iter()
            .zip(&qb_data)
            .map(|(&b, &q)| q - background_loss(&bg0, b))
            .collect();
        let found = find_peaks(&fields, &baseline, template.peaks.len());
        let mut order: Vec<usize> = (0..centers.len()).collect();
        order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
        if found.len() == centers.len() {
            for (&k, &(b, h)) in order.iter().zip(&found) {
                centers[k] = b;
                heights[k] = Some(h);
            }
        } else {
            for (k, c) in centers.iter().enumerate() {
                let i = fields
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - c).abs().total_cmp(&(b.1 - c).abs()))
                    .map_or(0, |(i, _)| i);
                heights[k] = Some(baseline[i].max(0.0));
            }
        }
    }
    let q_scale = qb_data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-9);

    let fixed = |name: &str| opts.fixed.iter().any(|f| f == name);
    let mut specs = Vec::new();
    let mut index = Vec::new();
    for (k, p) in template.peaks.iter().enumerate() {
        let unit_height = -ensemble_response(&unit_peak(p), omega0, omega0).re / omega0;
        let o2 = match heights[k] {
            Some(h) => h / unit_height,
            None => p.coupling * p.coupling,
        };
        let o2_scale = o2.abs().max(q_scale / unit_height);
        let width_field = (p.gamma2 + p.delta).max(1e-3 * omega0 * 1e-6) / p.slope.abs();
        let name = |s: &str| format!("{}.{s}", p.label);
        let b_peak = specs.len();
        specs.push(
            ParamSpec::new(name("b_peak"), centers[k])
                .scale(width_field.max(1e-6))
                .fixed(fixed(&name("b_peak"))),
        );
        let omega_sq = specs.len();
        specs.push(ParamSpec::new(name("omega_sq"), o2).scale(o2_scale).fixed(fixed(&name("omega_sq"))));
        let gamma2 = specs.len();
        specs.push(
            ParamSpec::new(name("gamma2"), p.gamma2)
                .lower(0.0)
                .scale(p.gamma2.max(1e-3 * omega0 * 1e-3))
                .fixed(fixed(&name("gamma2"))),
        );
        let delta = (p.shape == LineShape::Voigt).then(|| {
            specs.push(
                ParamSpec::new(name("delta"), p.delta)
                    .lower(0.0)
                    .scale(p.delta)
                    .fixed(fixed(&name("delta"))),
            );
            specs.len() - 1
        });
        index.push(PeakIndex { b_peak, omega_sq, gamma2, delta });
    }
    let bg_fixed = |s: &str| !opts.fit_background || fixed(s);
    // a zero plateau leaves the onset parameters without gradient, so start
    // from the rise between the two ends of the sweep
    let c_init = if bg0.c > 0.0 || bg_fixed("bg.c") {
        bg0.c
    } else {
        let k = (n / 20).max(1);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        (mean(&qb_data[n - k..]) - mean(&qb_data[..k])).max(0.05 * q_scale)
    };
    let bg = [specs.len(), specs.len() + 1, specs.len() + 2];
    specs.push(
        ParamSpec::new("bg.c", c_init)
            .lower(0.0)
            .scale(c_init.max(q_scale))
            .fixed(bg_fixed("bg.c")),
    );
    specs.push(ParamSpec::new("bg.b_on", bg0.b_on).scale(bg0.sigma_on).fixed(bg_fixed("bg.b_on")));
    specs.push(
        ParamSpec::new("bg.sigma_on", bg0.sigma_on)
            .lower(0.0)
            .scale(bg0.sigma_on)
            .fixed(bg_fixed("bg.sigma_on")),
    );
    let offset_qb = specs.len();
    specs.push(ParamSpec::new("offset.qb", 0.0).scale(q_scale).fixed(fixed("offset.qb")));
    let offset_df = opts.use_frequency.then(|| {
        let d_scale = df_data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        specs.push(ParamSpec::new("offset.df", 0.0).scale(d_scale).fixed(fixed("offset.df")));
        specs.len() - 1
    });
    for f in &opts.fixed {
        if !specs.iter().any(|s| &s.name == f) {
            return Err(Error::Input(format!("unknown sweep parameter '{f}'")));
        }
    }
    let layout = Layout {
        peaks: template.peaks.clone(),
        index,
        bg,
        offset_qb,
        offset_df,
    };

    // start the offsets where the low-field data sit
    let init: Vec<f64> = specs.iter().map(|s| s.init).collect();
    let (qb0, df0) = evaluate(&layout, omega0, &fields, &init, opts.use_frequency);
    let head = n.min(5);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if !specs[offset_qb].fixed {
        specs[offset_qb].init = mean(&qb_data[..head]) - mean(&qb0[..head]);
    }
    if let Some(i) = offset_df {
        if !specs[i].fixed {
            specs[i].init = mean(&df_data[..head]) - mean(&df0[..head]);
        }
    }

    let residuals_with = |scale_qb: f64, scale_df: f64| {
        let layout = &layout;
        let fields = &fields;
        let qb_data = &qb_data;
        let df_data = &df_data;
        move |p: &[f64]| -> Vec<f64> {
            let (qb, df) = evaluate(layout, omega0, fields, p, opts.use_frequency);
            let mut r: Vec<f64> = qb.iter().zip(qb_data).map(|(m, d)| (m - d) / scale_qb).collect();
            r.extend(df.iter().zip(df_data).map(|(m, d)| (m - d) / scale_df));
            r
        }
    };

    // Spikes in the frequency channel (flux jumps) would steer a plain fit,
    // so before a robust refit only the loss channel is weighted.
    let plain_df = if opts.robust { f64::INFINITY } else { 1.0 };
    let plain_opts = LmOptions {
        loss: Loss::Linear,
        ..opts.lm
    };
    // Widths held at the template first: with amplitudes and background
    // still far off, free Voigt widths can run into the Lorentzian or
    // Gaussian limit and stall there.
    let width_ix: Vec<usize> = layout
        .index
        .iter()
        .flat_map(|ix| std::iter::once(ix.gamma2).chain(ix.delta))
        .filter(|&i| !specs[i].fixed)
        .collect();
    if !width_ix.is_empty() {
        let mut staged = specs.clone();
        for &i in &width_ix {
            staged[i].fixed = true;
        }
        let pre = lm_fit("sweep_stage", residuals_with(1.0, plain_df), &staged, &plain_opts)?;
        for (spec, p) in specs.iter_mut().zip(&pre.params) {
            spec.init = p.value;
        }
    }
    let mut fit = lm_fit("sweep", residuals_with(1.0, plain_df), &specs, &plain_opts)?;
    if opts.robust {
        let r = residuals_with(1.0, 1.0)(&fit.params.iter().map(|p| p.value).collect::<Vec<_>>());
        let floor = |data: &[f64]| 1e-9 * data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-30);
        let s_qb = mad_scale(&r[..n]).max(floor(&qb_data));
        let s_df = if opts.use_frequency {
            mad_scale(&r[n..]).max(floor(&df_data))
        } else {
            1.0
        };
        for (spec, p) in specs.iter_mut().zip(&fit.params) {
            spec.init = p.value;
        }
        let robust_opts = LmOptions {
            loss: Loss::SoftL1 { f_scale: 1.0 },
            ..opts.lm
        };
        fit = lm_fit("sweep_robust", residuals_with(s_qb, s_df), &specs, &robust_opts)?;
        fit.warnings.push(format!(
            "robust loss scales: qb {s_qb:.3e}, df/f0 {s_df:.3e}"
        ));
    }

    // fitted model and derived quantities
    let values: Vec<f64> = fit.params.iter().map(|p| p.value).collect();
    let value = |i: usize| values[i];
    let mut model = template.clone();
    let mut derived = Vec::new();
    for (p, ix) in model.peaks.iter_mut().zip(&layout.index) {
        let o2 = value(ix.omega_sq);
        p.center_field = value(ix.b_peak);
        p.coupling = o2.max(0.0).sqrt();
        p.gamma2 = value(ix.gamma2);
        if let Some(d) = ix.delta {
            p.delta = value(d);
        }
        let s_o2 = fit.params[ix.omega_sq].stderr;
        let omega = p.coupling;
        let s_omega = s_o2.map(|s| s / (2.0 * omega)).filter(|s| s.is_finite());
        derived.push((format!("{}.omega", p.label), omega, s_omega));
        derived.push((format!("{}.area", p.label), PI * o2, s_o2.map(|s| PI * s)));
        let area_field = PI * o2 / (omega0 * p.slope.abs());
        derived.push((
            format!("{}.area_field", p.label),
            area_field,
            s_o2.map(|s| PI * s / (omega0 * p.slope.abs())),
        ));
        if p.shape == LineShape::Lorentzian {
            let g = p.gamma2;
            let t2 = t2e_from_gamma2(g);
            let s_t2 = fit.params[ix.gamma2].stderr.map(|s| 2.0 * PI * s / (g * g));
            derived.push((format!("{}.T2e", p.label), t2, s_t2));
        }
    }
    for (name, v, s) in derived {
        fit.push_derived(name, v, s);
    }
    model.background = Background {
        c: value(layout.bg[0]),
        b_on: value(layout.bg[1]),
        sigma_on: value(layout.bg[2]),
    };
    Ok(SweepFit {
        offset_qb: value(layout.offset_qb),
        offset_df_hz: layout.offset_df.map_or(0.0, |i| value(i) * f0_hz),
        fit,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::SweepRow;
    use crate::lineshape::ResonatorParams;

    const TWO_PI: f64 = 2.0 * PI;

    fn model() -> SpectrumModel {
        let slope = TWO_PI * 28e9;
        SpectrumModel {
            resonator: ResonatorParams::from_hz(5e9, 1e5, num_complex::Complex64::new(2e5, 0.0)),
            peaks: vec![
                Peak::voigt("sat_low", 0.153, slope, TWO_PI * 1.3e6, TWO_PI * 87e6, TWO_PI * 90e6),
                Peak::lorentzian("central", 0.1786, slope, TWO_PI * 1.5e6, TWO_PI * 87e6),
                Peak::voigt("sat_high", 0.204, slope, TWO_PI * 1.0e6, TWO_PI * 87e6, TWO_PI * 90e6),
            ],
            background: Background { c: 5e-6, b_on: 0.05, sigma_on: 0.015 },
        }
    }

    fn trace(m: &SpectrumModel) -> SweepTrace {
        let fields: Vec<f64> = (0..1500).map(|i| 0.3 * i as f64 / 1499.0).collect();
        let pts = m.evaluate_sweep(&fields);
        SweepTrace {
            rows: fields
                .iter()
                .zip(pts)
                .map(|(&b, p)| SweepRow { b, f0: 5e9 + p.df, q_inv: 1e-5 + p.qb_inv })
                .collect(),
        }
    }

    #[test]
    fn peaks_are_found_in_field_order() {
        let m = model();
        let t = trace(&m);
        let qb = t.qb_inv();
        let peaks = find_peaks(&t.fields(), &qb, 3);
        assert_eq!(peaks.len(), 3);
        for (found, p) in peaks.iter().zip(&m.peaks) {
            assert!((found.0 - p.center_field).abs() < 2e-3, "{found:?}");
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let truth = model();
        let t = trace(&truth);
        let mut template = truth.clone();
        for p in &mut template.peaks {
            p.gamma2 *= 1.2;
            p.delta *= 0.8;
            p.coupling = 0.0;
        }
        template.background = Background { c: 3e-6, b_on: 0.06, sigma_on: 0.02 };
        let opts = SweepFitOptions { use_frequency: true, ..Default::default() };
        let fit = fit_sweep(&t, &template, &opts).unwrap();
        assert!(fit.fit.converged, "{}", fit.fit.termination);
        for (got, want) in fit.model.peaks.iter().zip(&truth.peaks) {
            assert!((got.center_field - want.center_field).abs() < 1e-9);
            assert!((got.coupling / want.coupling - 1.0).abs() < 1e-6, "{}", got.label);
            assert!((got.gamma2 / want.gamma2 - 1.0).abs() < 1e-6, "{}", got.label);
            if want.delta > 0.0 {
                assert!((got.delta / want.delta - 1.0).abs() < 1e-6);
            }
        }
        assert!((fit.model.background.c / 5e-6 - 1.0).abs() < 1e-6);
        let t2 = fit.fit.derived("central.T2e").unwrap().value;
        assert!((t2 - 1.0 / 87e6).abs() < 1e-15);
    }

    #[test]
    fn unknown_fixed_name_is_rejected() {
        let truth = model();
        let opts = SweepFitOptions {
            fixed: vec!["nope.gamma2".into()],
            ..Default::default()
        };
        assert!(matches!(fit_sweep(&trace(&truth), &truth, &opts), Err(Error::Input(_))));
    }
}
