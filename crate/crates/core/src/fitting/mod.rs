//! Least-squares engine and the estimators built on it.

mod angle;
mod data;
mod levels;
mod lm;
mod resonance;
mod saturation;
mod sweep;
mod thermal;

pub use angle::fit_angle;
pub use data::{
    AngleRow, AngleSeries, PeakPosition, S21Row, S21Trace, SaturationCurve, SaturationRow, SweepRow,
    SweepTrace, TemperatureRow, TemperatureSeries,
};
pub use levels::{fit_peak_positions, PositionFitOptions};
pub use lm::{lm_fit, BootstrapOptions, Covariance, LmOptions, Loss, ParamSpec};
pub use resonance::{fit_resonance, resonance_model};
pub use saturation::{derive_t1, fit_saturation, saturation_model, t2e_from_gamma2};
pub use sweep::{find_peaks, fit_sweep, SweepFit, SweepFitOptions};
pub use thermal::{
    abundance_ratio, fit_temperature, HypothesisScore, PeakFields, TemperatureFit,
    TemperatureFitOptions,
};

use serde::{Deserialize, Serialize};

/// A fitted parameter. `stderr` and `ci95` are absent for fixed parameters
/// and for directions the data do not constrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub ci95: Option<[f64; 2]>,
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub unconstrained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_ci95: Option<[f64; 2]>,
}

/// A quantity computed from fitted parameters, with a delta-method error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub ci95: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_id: String,
    pub params: Vec<Param>,
    /// Covariance of all parameters in declaration order (zero rows for
    /// fixed parameters).
    pub covariance: Vec<Vec<f64>>,
    /// Euclidean norm of the (loss-transformed) residual vector.
    pub residual_norm: f64,
    pub n_points: usize,
    pub n_iter: usize,
    pub converged: bool,
    pub termination: String,
    pub warnings: Vec<String>,
    pub derived: Vec<Derived>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.param(name).and_then(|p| p.stderr)
    }

    pub fn derived(&self, name: &str) -> Option<&Derived> {
        self.derived.iter().find(|d| d.name == name)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn push_derived(&mut self, name: impl Into<String>, value: f64, stderr: Option<f64>) {
        let stderr = stderr.filter(|s| s.is_finite());
        self.derived.push(Derived {
            name: name.into(),
            value,
            stderr,
            ci95: stderr.map(|s| [value - 1.96 * s, value + 1.96 * s]),
        });
    }

    /// Delta-method standard error of a function with the given partial
    /// derivatives. `None` if any involved parameter lacks an error.
    pub fn propagate(&self, grad: &[(&str, f64)]) -> Option<f64> {
        let mut idx = Vec::with_capacity(grad.len());
        for &(name, d) in grad {
            let i = self.index(name)?;
            let p = &self.params[i];
            if d != 0.0 && !p.fixed && p.stderr.is_none() {
                return None;
            }
            idx.push((i, d));
        }
        let mut var = 0.0;
        for &(a, da) in &idx {
            for &(b, db) in &idx {
                var += da * db * self.covariance[a][b];
            }
        }
        (var.is_finite() && var >= 0.0).then(|| var.sqrt())
    }

    /// Names of parameters flagged as not constrained by the data.
    pub fn unconstrained(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| p.unconstrained)
            .map(|p| p.name.as_str())
            .collect()
    }
}
