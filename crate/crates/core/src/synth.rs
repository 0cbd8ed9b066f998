//! Seeded synthetic data from the forward models, with a manifest of every
//! generating parameter.
//!
//! Noise: complex Gaussian on S21 at a given SNR relative to the unit
//! off-resonance transmission; multiplicative Gaussian on field-induced loss
//! and frequency shift, saturation loss and peak areas; additive on g and
//! field positions. Flux jumps are short spikes in the resonance frequency
//! only.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::{H, MU_B};
use crate::error::{Error, Result};
use crate::fitting::{
    resonance_model, saturation_model, AngleRow, AngleSeries, PeakFields, PeakPosition, S21Row, S21Trace,
    SaturationCurve, SaturationRow, SweepRow, SweepTrace, TemperatureRow, TemperatureSeries,
};
use crate::lineshape::{Background, Peak, ResonatorParams, SpectrumModel};
use crate::spin_levels::{
    find_transition, peak_area_factor, resonance_fields, transition_slope, SpinSystem, TransitionLabel,
};

/// Name of the generator behind every stream, recorded in manifests.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub kind: ScenarioKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    S21Trace {
        f0_hz: f64,
        q: f64,
        qc_abs: f64,
        qc_phase: f64,
        /// Span in units of the half-width `f0/Q`.
        #[serde(default = "default_span")]
        span_linewidths: f64,
        #[serde(default = "default_s21_points")]
        points: usize,
        /// Signal-to-noise ratio against |S21| = 1; `None` is noiseless.
        #[serde(default)]
        snr_db: Option<f64>,
    },
    Sweep {
        model: SpectrumModel,
        /// Zero-field inverse Q of the bare resonator.
        q0_inv: f64,
        b_min: f64,
        b_max: f64,
        points: usize,
        #[serde(default)]
        noise_rel: f64,
        #[serde(default)]
        flux_jumps: Option<FluxJumpSpec>,
    },
    Saturation {
        qs0_inv: f64,
        p_sat: f64,
        epsilon: f64,
        q: f64,
        q_ext: f64,
        /// Circulating-power range relative to `p_sat`, log spaced.
        p0_min_rel: f64,
        p0_max_rel: f64,
        points: usize,
        #[serde(default)]
        noise_rel: f64,
    },
    TemperatureSeries {
        central: SpinSystem,
        hydrogen: Option<SpinSystem>,
        fields: PeakFields,
        scale_central: f64,
        #[serde(default)]
        scale_hydrogen: f64,
        temperatures: Vec<f64>,
        #[serde(default)]
        noise_rel: f64,
    },
    AngleSeries {
        g_true: f64,
        a: f64,
        b: f64,
        angles_deg: Vec<f64>,
        #[serde(default)]
        noise_abs: f64,
    },
    PeakPositions {
        g_e: f64,
        hyperfine_hz: f64,
        g_central: f64,
        frequencies_hz: Vec<f64>,
        #[serde(default)]
        noise_tesla: f64,
        #[serde(default = "default_true")]
        include_nuclear_zeeman: bool,
    },
}

fn default_span() -> f64 {
    20.0
}

fn default_s21_points() -> usize {
    801
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxJumpSpec {
    pub count: usize,
    pub min_hz: f64,
    pub max_hz: f64,
    /// Longest spike, in rows.
    #[serde(default = "default_jump_width")]
    pub max_width: usize,
}

fn default_jump_width() -> usize {
    3
}

/// One injected frequency spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxJump {
    /// First affected row (0-based).
    pub row: usize,
    pub width: usize,
    pub amplitude_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Dataset {
    S21Trace(S21Trace),
    Sweep(SweepTrace),
    Saturation(SaturationCurve),
    TemperatureSeries(TemperatureSeries),
    AngleSeries(AngleSeries),
    PeakPositions(Vec<PeakPosition>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub scenario: Scenario,
    #[serde(default)]
    pub flux_jumps: Vec<FluxJump>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub dataset: Dataset,
    pub manifest: Manifest,
}

/// Parses a scenario, reporting unknown kinds and fields as input errors.
pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("invalid scenario: {e}")))
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be a finite non-negative number, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be positive, got {v}")))
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn place_jumps(rng: &mut ChaCha8Rng, spec: &FluxJumpSpec, n: usize) -> Result<Vec<FluxJump>> {
    non_negative("flux jump min_hz", spec.min_hz)?;
    if !(spec.max_hz >= spec.min_hz && spec.max_hz.is_finite()) {
        return Err(Error::Input("flux jump max_hz must be at least min_hz".into()));
    }
    let width = spec.max_width.max(1);
    // keep clear of the reference rows at the start and of the far end
    let lo = (n / 20).max(1);
    let hi = n.saturating_sub(n / 20 + width);
    if spec.count > 0 && (hi <= lo || spec.count * (width + 1) > hi - lo) {
        return Err(Error::Input("too many flux jumps for the sweep length".into()));
    }
    let mut jumps: Vec<FluxJump> = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while jumps.len() < spec.count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Input("could not place non-overlapping flux jumps".into()));
        }
        let row = rng.random_range(lo..hi);
        let w = rng.random_range(1..=width);
        if jumps.iter().any(|j| row < j.row + j.width + 1 && j.row < row + w + 1) {
            continue;
        }
        let mag = spec.min_hz + (spec.max_hz - spec.min_hz) * rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        jumps.push(FluxJump { row, width: w, amplitude_hz: sign * mag });
    }
    jumps.sort_by_key(|j| j.row);
    Ok(jumps)
}

/// Generates the data set described by `sc`. The same scenario always
/// produces the same values.
pub fn synthesize(sc: &Scenario) -> Result<Synthesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut flux_jumps = Vec::new();
    let dataset = match &sc.kind {
        ScenarioKind::S21Trace { f0_hz, q, qc_abs, qc_phase, span_linewidths, points, snr_db } => {
            positive("f0_hz", *f0_hz)?;
            positive("q", *q)?;
            positive("qc_abs", *qc_abs)?;
            positive("span_linewidths", *span_linewidths)?;
            if *points < 8 {
                return Err(Error::Input("S21 trace needs at least 8 points".into()));
            }
            let sigma = match snr_db {
                Some(db) if db.is_finite() => 10f64.powf(-db / 20.0) / 2f64.sqrt(),
                Some(db) => return Err(Error::Input(format!("snr_db must be finite, got {db}"))),
                None => 0.0,
            };
            let qc = Complex64::from_polar(*qc_abs, *qc_phase);
            let span = span_linewidths * f0_hz / q;
            let rows = (0..*points)
                .map(|i| {
                    let f = f0_hz - 0.5 * span + span * i as f64 / (*points - 1) as f64;
                    let mut s = resonance_model(f, *f0_hz, *q, qc);
                    if sigma > 0.0 {
                        s += Complex64::new(sigma * gauss(&mut rng), sigma * gauss(&mut rng));
                    }
                    S21Row { f, re: s.re, im: s.im }
                })
                .collect();
            Dataset::S21Trace(S21Trace { rows })
        }
        ScenarioKind::Sweep { model, q0_inv, b_min, b_max, points, noise_rel, flux_jumps: jumps } => {
            model.validate()?;
            non_negative("q0_inv", *q0_inv)?;
            non_negative("noise_rel", *noise_rel)?;
            if !(b_max > b_min && b_min.is_finite() && b_max.is_finite()) || *points < 2 {
                return Err(Error::Input("sweep needs b_min < b_max and at least 2 points".into()));
            }
            let n = *points;
            let fields: Vec<f64> = (0..n)
                .map(|i| b_min + (b_max - b_min) * i as f64 / (n - 1) as f64)
                .collect();
            let f0 = model.resonator.omega0 / (2.0 * PI);
            let clean = model.evaluate_sweep(&fields);
            let mut rows: Vec<SweepRow> = fields
                .iter()
                .zip(&clean)
                .map(|(&b, p)| {
                    let (mut qb, mut df) = (p.qb_inv, p.df);
                    if *noise_rel > 0.0 {
                        qb *= 1.0 + noise_rel * gauss(&mut rng);
                        df *= 1.0 + noise_rel * gauss(&mut rng);
                    }
                    SweepRow { b, f0: f0 + df, q_inv: q0_inv + qb }
                })
                .collect();
            if let Some(spec) = jumps {
                flux_jumps = place_jumps(&mut rng, spec, n)?;
                for j in &flux_jumps {
                    for r in &mut rows[j.row..j.row + j.width] {
                        r.f0 += j.amplitude_hz;
                    }
                }
            }
            Dataset::Sweep(SweepTrace { rows })
        }
        ScenarioKind::Saturation { qs0_inv, p_sat, epsilon, q, q_ext, p0_min_rel, p0_max_rel, points, noise_rel } => {
            positive("qs0_inv", *qs0_inv)?;
            positive("p_sat", *p_sat)?;
            non_negative("epsilon", *epsilon)?;
            positive("q", *q)?;
            positive("q_ext", *q_ext)?;
            positive("p0_min_rel", *p0_min_rel)?;
            non_negative("noise_rel", *noise_rel)?;
            if !(p0_max_rel > p0_min_rel) || *points < 2 {
                return Err(Error::Input("saturation needs p0_max_rel > p0_min_rel and 2+ points".into()));
            }
            let (l0, l1) = (p0_min_rel.ln(), p0_max_rel.ln());
            let rows = (0..*points)
                .map(|i| {
                    let p0 = p_sat * (l0 + (l1 - l0) * i as f64 / (*points - 1) as f64).exp();
                    let p_drive = p0 * q_ext / (2.0 * q * q);
                    let mut v = saturation_model(p0, *qs0_inv, *p_sat, *epsilon);
                    if *noise_rel > 0.0 {
                        v *= 1.0 + noise_rel * gauss(&mut rng);
                    }
                    SaturationRow { p_drive, qs_inv: v }
                })
                .collect();
            Dataset::Saturation(SaturationCurve { rows, q: *q, q_ext: *q_ext })
        }
        ScenarioKind::TemperatureSeries {
            central,
            hydrogen,
            fields,
            scale_central,
            scale_hydrogen,
            temperatures,
            noise_rel,
        } => {
            non_negative("noise_rel", *noise_rel)?;
            let tc = find_transition(central, fields.central, TransitionLabel::Central)?;
            let sats = match (hydrogen, fields.sat_low, fields.sat_high) {
                (Some(h), Some(bl), Some(bh)) => Some((
                    h,
                    (find_transition(h, bl, TransitionLabel::SatLow)?, bl),
                    (find_transition(h, bh, TransitionLabel::SatHigh)?, bh),
                )),
                (None, _, _) => None,
                _ => return Err(Error::Input("hydrogen satellites need both satellite fields".into())),
            };
            let noisy = |v: f64, rng: &mut ChaCha8Rng| {
                if *noise_rel > 0.0 {
                    (v * (1.0 + noise_rel * gauss(rng))).max(0.0)
                } else {
                    v
                }
            };
            let mut rows = Vec::with_capacity(temperatures.len());
            for &t in temperatures {
                let area = scale_central * peak_area_factor(central, &tc, fields.central, t)?;
                let mut row = TemperatureRow::central(t, noisy(area, &mut rng));
                if let Some((h, (tl, bl), (th, bh))) = &sats {
                    let al = scale_hydrogen * peak_area_factor(h, tl, *bl, t)?;
                    let ah = scale_hydrogen * peak_area_factor(h, th, *bh, t)?;
                    row.area_sat_low = Some(noisy(al, &mut rng));
                    row.area_sat_high = Some(noisy(ah, &mut rng));
                }
                rows.push(row);
            }
            Dataset::TemperatureSeries(TemperatureSeries { rows })
        }
        ScenarioKind::AngleSeries { g_true, a, b, angles_deg, noise_abs } => {
            non_negative("noise_abs", *noise_abs)?;
            let rows = angles_deg
                .iter()
                .map(|&deg| {
                    let t = deg.to_radians();
                    let mut g = g_true + a * t.sin() + b * (2.0 * t).sin();
                    if *noise_abs > 0.0 {
                        g += noise_abs * gauss(&mut rng);
                    }
                    AngleRow { theta_deg: deg, g }
                })
                .collect();
            Dataset::AngleSeries(AngleSeries { rows })
        }
        ScenarioKind::PeakPositions {
            g_e,
            hyperfine_hz,
            g_central,
            frequencies_hz,
            noise_tesla,
            include_nuclear_zeeman,
        } => {
            non_negative("noise_tesla", *noise_tesla)?;
            positive("g_central", *g_central)?;
            let spin = SpinSystem::hyperfine_doublet(*g_e, *hyperfine_hz).with_nuclear_zeeman(*include_nuclear_zeeman);
            let mut rows = Vec::with_capacity(3 * frequencies_hz.len());
            for &f in frequencies_hz {
                positive("resonator frequency", f)?;
                let b_max = 2.0 * H * f / (g_e * MU_B) + 1.0;
                for label in [TransitionLabel::SatLow, TransitionLabel::Central, TransitionLabel::SatHigh] {
                    let b = if label == TransitionLabel::Central {
                        H * f / (g_central * MU_B)
                    } else {
                        *resonance_fields(&spin, f, b_max, Some(label))?.first().ok_or_else(|| {
                            Error::Input(format!("no {} line at {f} Hz", label.as_str()))
                        })?
                    };
                    let noise = if *noise_tesla > 0.0 { noise_tesla * gauss(&mut rng) } else { 0.0 };
                    rows.push(PeakPosition { f_res: f, b_peak: b + noise, label });
                }
            }
            Dataset::PeakPositions(rows)
        }
    };
    Ok(Synthesis {
        dataset,
        manifest: Manifest {
            generator: "surfspin synth".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_ALGORITHM.into(),
            seed: sc.seed,
            scenario: sc.clone(),
            flux_jumps,
        },
    })
}

/// The three-line spectrum of a hydrogen-bearing surface measured on a
/// 5 GHz resonator: a Lorentzian free-electron line between two Voigt
/// hydrogen satellites, γ₂/2π = 87 MHz, Δ/2π = 90 MHz, satellite couplings
/// set so that their areas are 22.5 % and 57.6 % below the central line,
/// and a background that switches on around 50 mT.
pub fn hydrogen_surface_model() -> Result<SpectrumModel> {
    let f0 = 5e9;
    let two_pi = 2.0 * PI;
    let free = SpinSystem::free_doublet(2.0);
    let h = SpinSystem::hyperfine_doublet(2.0, 1423e6);
    let b_c = H * f0 / (2.0 * MU_B);
    let b_lo = resonance_fields(&h, f0, 1.0, Some(TransitionLabel::SatLow))?[0];
    let b_hi = resonance_fields(&h, f0, 1.0, Some(TransitionLabel::SatHigh))?[0];
    let omega_c = two_pi * 1.5e6;
    let gamma2 = two_pi * 87e6;
    let delta = two_pi * 90e6;
    Ok(SpectrumModel {
        resonator: ResonatorParams::from_hz(f0, 1e5, Complex64::new(2e5, 0.0)),
        peaks: vec![
            Peak::voigt(
                "sat_low",
                b_lo,
                transition_slope(&h, TransitionLabel::SatLow, b_lo)?,
                omega_c * (1.0f64 - 0.225).sqrt(),
                gamma2,
                delta,
            ),
            Peak::lorentzian(
                "central",
                b_c,
                transition_slope(&free, TransitionLabel::Central, b_c)?,
                omega_c,
                gamma2,
            ),
            Peak::voigt(
                "sat_high",
                b_hi,
                transition_slope(&h, TransitionLabel::SatHigh, b_hi)?,
                omega_c * (1.0f64 - 0.576).sqrt(),
                gamma2,
                delta,
            ),
        ],
        background: Background { c: 4e-6, b_on: 0.05, sigma_on: 0.015 },
    })
}

/// Sweep of [`hydrogen_surface_model`] over 0–0.3 T with 2 % noise and five
/// flux jumps of 50–200 kHz.
pub fn hydrogen_surface_scenario(seed: u64) -> Result<Scenario> {
    Ok(Scenario {
        seed,
        kind: ScenarioKind::Sweep {
            model: hydrogen_surface_model()?,
            q0_inv: 1e-5,
            b_min: 0.0,
            b_max: 0.3,
            points: 1501,
            noise_rel: 0.02,
            flux_jumps: Some(FluxJumpSpec { count: 5, min_hz: 50e3, max_hz: 200e3, max_width: 3 }),
        },
    })
}
