//! TOML configuration. Every table rejects unknown keys, and the whole file
//! is validated before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use surfspin::constants::{H, MU_B};
use surfspin::fitting::{BootstrapOptions, Covariance, LmOptions, Loss, PeakFields};
use surfspin::geometry::StripGeometry;
use surfspin::lineshape::{Background, Peak, ResonatorParams, SpectrumModel};
use surfspin::spin_levels::{resonance_fields, transition_slope, SpinSystem, TransitionLabel};

use crate::CliError;

/// Environment variable holding directories searched for `surfspin.toml`.
pub const CONFIG_PATH_ENV: &str = "SURFSPIN_CONFIG_PATH";
pub const CONFIG_FILE_NAME: &str = "surfspin.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub constants: ConstantsConfig,
    pub geometry: StripGeometry,
    pub fit: FitConfig,
    pub spin: SpinPriors,
    pub sweep: SweepConfig,
    pub temperature: TemperatureConfig,
    pub saturation: SaturationConfig,
    pub density: DensityConfig,
    pub paths: PathsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            constants: ConstantsConfig::default(),
            geometry: StripGeometry::reference(),
            fit: FitConfig::default(),
            spin: SpinPriors::default(),
            sweep: SweepConfig::default(),
            temperature: TemperatureConfig::default(),
            saturation: SaturationConfig::default(),
            density: DensityConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Physical constants are compiled in; the only accepted set is CODATA 2018.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub set: String,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig { set: "codata2018".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub robust: bool,
    /// Fit the frequency-shift channel of a sweep as well as the loss.
    pub use_frequency: bool,
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
    pub fd_step: f64,
    /// Residual-bootstrap resamples; 0 disables.
    pub bootstrap_samples: usize,
    pub plots: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        let lm = LmOptions::default();
        FitConfig {
            robust: false,
            use_frequency: false,
            max_iter: lm.max_iter,
            ftol: lm.ftol,
            xtol: lm.xtol,
            gtol: lm.gtol,
            fd_step: lm.fd_step,
            bootstrap_samples: 0,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinPriors {
    pub g_e: f64,
    pub hyperfine_hz: f64,
    pub g_central: f64,
    pub include_nuclear_zeeman: bool,
}

impl Default for SpinPriors {
    fn default() -> Self {
        SpinPriors {
            g_e: 2.0,
            hyperfine_hz: 1420.405751768e6,
            g_central: 2.0,
            include_nuclear_zeeman: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Lines to fit, any of `sat_low`, `central`, `sat_high`.
    pub lines: Vec<String>,
    /// Resonator frequency; the first data row is used when absent.
    pub f0_hz: Option<f64>,
    /// Initial γ₂/2π and Δ/2π, Hz.
    pub gamma2_hz: f64,
    pub delta_hz: f64,
    pub background_onset_t: f64,
    pub background_width_t: f64,
    /// Parameters held at their initial values, e.g. `central.gamma2`.
    pub fixed: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lines: vec!["sat_low".into(), "central".into(), "sat_high".into()],
            f0_hz: None,
            gamma2_hz: 80e6,
            delta_hz: 80e6,
            background_onset_t: 0.05,
            background_width_t: 0.02,
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureConfig {
    pub f0_hz: f64,
    /// Line fields in tesla; computed from the spin priors when absent.
    pub b_central: Option<f64>,
    pub b_sat_low: Option<f64>,
    pub b_sat_high: Option<f64>,
    /// Central-line hypotheses: `doublet`, `triplet`.
    pub hypotheses: Vec<String>,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        TemperatureConfig {
            f0_hz: 5e9,
            b_central: None,
            b_sat_low: None,
            b_sat_high: None,
            hypotheses: vec!["doublet".into(), "triplet".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationConfig {
    pub q: Option<f64>,
    pub q_ext: Option<f64>,
    /// Phase memory time used to derive T1, s.
    pub t2e_s: Option<f64>,
    pub g_e: f64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        SaturationConfig { q: None, q_ext: None, t2e_s: None, g_e: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub temperature_k: f64,
    pub f0_hz: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { temperature_k: 0.05, f0_hz: 5e9 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

const LINES: [&str; 3] = ["sat_low", "central", "sat_high"];

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// An explicit path wins; otherwise the first `surfspin.toml` found in the
    /// directories of `SURFSPIN_CONFIG_PATH`; otherwise the defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Config, Option<PathBuf>), CliError> {
        if let Some(p) = explicit {
            return Ok((Config::load(p)?, Some(p.to_path_buf())));
        }
        if let Some(dirs) = std::env::var_os(CONFIG_PATH_ENV) {
            for dir in std::env::split_paths(&dirs) {
                let candidate = dir.join(CONFIG_FILE_NAME);
                if candidate.is_file() {
                    return Ok((Config::load(&candidate)?, Some(candidate)));
                }
            }
        }
        Ok((Config::default(), None))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.constants.set != "codata2018" {
            return Err(CliError::Config(format!(
                "constants.set: only `codata2018` is available, got `{}`",
                self.constants.set
            )));
        }
        self.geometry
            .validate()
            .map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        let f = &self.fit;
        if f.max_iter == 0 {
            return Err(CliError::Config("fit.max_iter must be at least 1".into()));
        }
        for (n, v) in [("fit.ftol", f.ftol), ("fit.xtol", f.xtol), ("fit.gtol", f.gtol)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Config(format!("{n} must be non-negative, got {v}")));
            }
        }
        positive("fit.fd_step", f.fd_step)?;
        if f.bootstrap_samples != 0 && f.bootstrap_samples < 20 {
            return Err(CliError::Config("fit.bootstrap_samples must be 0 or at least 20".into()));
        }
        positive("spin.g_e", self.spin.g_e)?;
        positive("spin.g_central", self.spin.g_central)?;
        if !(self.spin.hyperfine_hz.is_finite() && self.spin.hyperfine_hz >= 0.0) {
            return Err(CliError::Config("spin.hyperfine_hz must be non-negative".into()));
        }
        let s = &self.sweep;
        if s.lines.is_empty() {
            return Err(CliError::Config("sweep.lines must name at least one line".into()));
        }
        for (i, l) in s.lines.iter().enumerate() {
            if !LINES.contains(&l.as_str()) {
                return Err(CliError::Config(format!(
                    "sweep.lines: unknown line `{l}` (expected sat_low, central or sat_high)"
                )));
            }
            if s.lines[..i].contains(l) {
                return Err(CliError::Config(format!("sweep.lines: `{l}` listed twice")));
            }
        }
        if let Some(f0) = s.f0_hz {
            positive("sweep.f0_hz", f0)?;
        }
        positive("sweep.gamma2_hz", s.gamma2_hz)?;
        positive("sweep.delta_hz", s.delta_hz)?;
        positive("sweep.background_width_t", s.background_width_t)?;
        if !s.background_onset_t.is_finite() {
            return Err(CliError::Config("sweep.background_onset_t must be finite".into()));
        }
        let t = &self.temperature;
        positive("temperature.f0_hz", t.f0_hz)?;
        for (n, v) in [("b_central", t.b_central), ("b_sat_low", t.b_sat_low), ("b_sat_high", t.b_sat_high)] {
            if let Some(v) = v {
                positive(&format!("temperature.{n}"), v)?;
            }
        }
        if t.hypotheses.is_empty() {
            return Err(CliError::Config("temperature.hypotheses must not be empty".into()));
        }
        for h in &t.hypotheses {
            if !["doublet", "triplet"].contains(&h.as_str()) {
                return Err(CliError::Config(format!(
                    "temperature.hypotheses: unknown `{h}` (expected doublet or triplet)"
                )));
            }
        }
        let sat = &self.saturation;
        for (n, v) in [("q", sat.q), ("q_ext", sat.q_ext), ("t2e_s", sat.t2e_s)] {
            if let Some(v) = v {
                positive(&format!("saturation.{n}"), v)?;
            }
        }
        positive("saturation.g_e", sat.g_e)?;
        positive("density.temperature_k", self.density.temperature_k)?;
        positive("density.f0_hz", self.density.f0_hz)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so equivalent files hash alike.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn lm_options(&self) -> LmOptions {
        let f = &self.fit;
        LmOptions {
            max_iter: f.max_iter,
            ftol: f.ftol,
            xtol: f.xtol,
            gtol: f.gtol,
            fd_step: f.fd_step,
            loss: Loss::Linear,
            covariance: Covariance::Standard,
            bootstrap: (f.bootstrap_samples > 0).then_some(BootstrapOptions {
                samples: f.bootstrap_samples,
                seed: self.seed,
            }),
        }
    }

    pub fn hydrogen_spin(&self) -> SpinSystem {
        SpinSystem::hyperfine_doublet(self.spin.g_e, self.spin.hyperfine_hz)
            .with_nuclear_zeeman(self.spin.include_nuclear_zeeman)
    }

    pub fn central_spin(&self) -> SpinSystem {
        SpinSystem::free_doublet(self.spin.g_central).with_nuclear_zeeman(self.spin.include_nuclear_zeeman)
    }

    fn satellite_field(&self, f0: f64, label: TransitionLabel) -> Result<f64, CliError> {
        let b_max = 2.0 * H * f0 / (self.spin.g_e * MU_B) + 1.0;
        resonance_fields(&self.hydrogen_spin(), f0, b_max, Some(label))
            .map_err(CliError::from)?
            .first()
            .copied()
            .ok_or_else(|| CliError::Config(format!("no {} line at {f0} Hz for the spin priors", label.as_str())))
    }

    /// Line fields for the temperature analysis.
    pub fn peak_fields(&self) -> Result<PeakFields, CliError> {
        let t = &self.temperature;
        let central = t.b_central.unwrap_or(H * t.f0_hz / (self.spin.g_central * MU_B));
        let sat_low = match t.b_sat_low {
            Some(b) => b,
            None => self.satellite_field(t.f0_hz, TransitionLabel::SatLow)?,
        };
        let sat_high = match t.b_sat_high {
            Some(b) => b,
            None => self.satellite_field(t.f0_hz, TransitionLabel::SatHigh)?,
        };
        Ok(PeakFields { central, sat_low: Some(sat_low), sat_high: Some(sat_high) })
    }

    pub fn hypotheses(&self) -> Vec<SpinSystem> {
        self.temperature
            .hypotheses
            .iter()
            .map(|h| match h.as_str() {
                "triplet" => SpinSystem::triplet(self.spin.g_central, 0.0),
                _ => self.central_spin(),
            })
            .collect()
    }

    /// Starting model for a sweep fit at resonator frequency `f0`: the
    /// configured lines at the fields predicted by the spin priors, zero
    /// coupling, and the configured widths and background onset.
    pub fn sweep_template(&self, f0: f64) -> Result<SpectrumModel, CliError> {
        let s = &self.sweep;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut peaks = Vec::new();
        for name in &s.lines {
            let peak = match name.as_str() {
                "central" => {
                    let spin = self.central_spin();
                    let b = H * f0 / (self.spin.g_central * MU_B);
                    let slope = transition_slope(&spin, TransitionLabel::Central, b)?;
                    Peak::lorentzian("central", b, slope, 0.0, two_pi * s.gamma2_hz)
                }
                other => {
                    let label = if other == "sat_low" { TransitionLabel::SatLow } else { TransitionLabel::SatHigh };
                    let b = self.satellite_field(f0, label)?;
                    let slope = transition_slope(&self.hydrogen_spin(), label, b)?;
                    Peak::voigt(other, b, slope, 0.0, two_pi * s.gamma2_hz, two_pi * s.delta_hz)
                }
            };
            peaks.push(peak);
        }
        peaks.sort_by(|a, b| a.center_field.total_cmp(&b.center_field));
        Ok(SpectrumModel {
            resonator: ResonatorParams::from_hz(f0, 1e4, num_complex::Complex64::new(2e4, 0.0)),
            peaks,
            background: Background {
                c: 0.0,
                b_on: s.background_onset_t,
                sigma_on: s.background_width_t,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("[fit]\nrobustness = true\n").unwrap_err();
        assert!(err.to_string().contains("robustness"), "{err}");
        assert!(Config::parse("colour = 1\n").is_err());
        assert!(Config::parse("[geometry]\nhalf_gap = 5e-6\nwidth = 2e-6\nlength = 1e-2\nimpedance = 50\nheight = 1\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::parse("[sweep]\nlines = [\"middle\"]\n").is_err());
        assert!(Config::parse("[fit]\nmax_iter = 0\n").is_err());
        assert!(Config::parse("[constants]\nset = \"codata2014\"\n").is_err());
        // cutoff larger than the strip width
        let g = "[geometry]\nhalf_gap = 5e-6\nwidth = 2e-6\nlength = 1e-2\nimpedance = 50\ncutoff = 3e-6\n";
        assert!(Config::parse(g).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::default();
        let b = Config::parse("seed = 0\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Config::parse("seed = 1\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn template_orders_lines_by_field() {
        let m = Config::default().sweep_template(5e9).unwrap();
        let labels: Vec<&str> = m.peaks.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["sat_low", "central", "sat_high"]);
    }
}
