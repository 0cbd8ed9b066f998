//! Measured data sets accepted by the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin_levels::TransitionLabel;

fn row_error(row: usize, message: impl Into<String>) -> Error {
    Error::InvalidRow {
        row,
        message: message.into(),
    }
}

fn check_finite(what: &str, row: usize, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(row_error(row, format!("{what}: non-finite value")))
    }
}

/// Index of the first row that breaks strict monotonicity, if any.
fn first_non_monotone(xs: &[f64]) -> Option<usize> {
    if xs.len() < 2 {
        return None;
    }
    let increasing = xs[1] > xs[0];
    (1..xs.len()).find(|&i| {
        let d = xs[i] - xs[i - 1];
        if increasing {
            d <= 0.0
        } else {
            d >= 0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Tesla.
    pub b: f64,
    /// Resonance frequency, Hz.
    pub f0: f64,
    /// Total inverse quality factor.
    pub q_inv: f64,
}

/// Resonator frequency and loss versus applied field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTrace {
    pub rows: Vec<SweepRow>,
}

impl SweepTrace {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::Input("sweep needs at least two rows".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            check_finite("sweep", i + 1, &[r.b, r.f0, r.q_inv])?;
        }
        let bs: Vec<f64> = self.fields();
        if let Some(i) = first_non_monotone(&bs) {
            return Err(row_error(
                i + 1,
                format!("sweep field is not strictly monotone (B = {})", bs[i]),
            ));
        }
        Ok(())
    }

    pub fn fields(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.b).collect()
    }

    /// `Q⁻¹(B) − Q⁻¹(B_ref)` with the first row as reference.
    pub fn qb_inv(&self) -> Vec<f64> {
        let q0 = self.rows.first().map_or(0.0, |r| r.q_inv);
        self.rows.iter().map(|r| r.q_inv - q0).collect()
    }

    /// Frequency shift relative to the first row, Hz.
    pub fn df(&self) -> Vec<f64> {
        let f0 = self.rows.first().map_or(0.0, |r| r.f0);
        self.rows.iter().map(|r| r.f0 - f0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S21Row {
    /// Probe frequency, Hz.
    pub f: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct S21Trace {
    pub rows: Vec<S21Row>,
}

impl S21Trace {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 8 {
            return Err(Error::Input("S21 trace needs at least 8 points".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            check_finite("S21 trace", i + 1, &[r.f, r.re, r.im])?;
            if r.re.hypot(r.im) > 10.0 {
                return Err(row_error(i + 1, "S21 trace: |S21| > 10"));
            }
        }
        let fs: Vec<f64> = self.rows.iter().map(|r| r.f).collect();
        if let Some(i) = first_non_monotone(&fs) {
            return Err(row_error(i + 1, "S21 frequency axis is not strictly monotone"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    /// Drive power at the resonator input, W.
    pub p_drive: f64,
    /// Spin contribution to the inverse quality factor.
    pub qs_inv: f64,
}

/// Spin loss versus drive power, plus the resonator Q values that convert
/// drive power into circulating power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationCurve {
    pub rows: Vec<SaturationRow>,
    pub q: f64,
    pub q_ext: f64,
}

impl SaturationCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q_ext > 0.0 && self.q.is_finite() && self.q_ext.is_finite()) {
            return Err(Error::Input("saturation curve needs Q > 0 and Q_ext > 0".into()));
        }
        let mut prev = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            check_finite("saturation", i + 1, &[r.p_drive, r.qs_inv])?;
            if r.p_drive <= prev {
                return Err(row_error(i + 1, "saturation drive power must be positive and ascending"));
            }
            if r.qs_inv <= 0.0 {
                return Err(row_error(i + 1, "saturation loss must be positive"));
            }
            prev = r.p_drive;
        }
        Ok(())
    }

    /// Circulating power `2Q² P_drive / Q_ext`, W.
    pub fn circulating_power(&self, p_drive: f64) -> f64 {
        2.0 * self.q * self.q * p_drive / self.q_ext
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    /// Kelvin.
    pub t: f64,
    pub area_central: f64,
    #[serde(default)]
    pub area_central_err: Option<f64>,
    #[serde(default)]
    pub area_sat_low: Option<f64>,
    #[serde(default)]
    pub area_sat_low_err: Option<f64>,
    #[serde(default)]
    pub area_sat_high: Option<f64>,
    #[serde(default)]
    pub area_sat_high_err: Option<f64>,
}

impl TemperatureRow {
    pub fn central(t: f64, area: f64) -> Self {
        TemperatureRow {
            t,
            area_central: area,
            area_central_err: None,
            area_sat_low: None,
            area_sat_low_err: None,
            area_sat_high: None,
            area_sat_high_err: None,
        }
    }
}

/// Peak areas versus temperature.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TemperatureSeries {
    pub rows: Vec<TemperatureRow>,
}

impl TemperatureSeries {
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            let row = i + 1;
            if !(r.t.is_finite() && r.t > 0.0) {
                return Err(row_error(row, "temperature must be positive"));
            }
            if r.t <= prev {
                return Err(row_error(row, "temperatures must be ascending"));
            }
            prev = r.t;
            let areas = [Some(r.area_central), r.area_sat_low, r.area_sat_high];
            for a in areas.into_iter().flatten() {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(row_error(row, "peak areas must be finite and non-negative"));
                }
            }
            let errs = [r.area_central_err, r.area_sat_low_err, r.area_sat_high_err];
            for e in errs.into_iter().flatten() {
                if !(e.is_finite() && e > 0.0) {
                    return Err(row_error(row, "area uncertainties must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn has_satellites(&self) -> bool {
        !self.rows.is_empty()
            && self
                .rows
                .iter()
                .all(|r| r.area_sat_low.is_some() && r.area_sat_high.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    /// In-plane field angle, degrees.
    pub theta_deg: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AngleSeries {
    pub rows: Vec<AngleRow>,
}

impl AngleSeries {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            check_finite("angle series", i + 1, &[r.theta_deg, r.g])?;
            if !(0.0..=90.0).contains(&r.theta_deg) {
                return Err(row_error(i + 1, "angle must lie in [0, 90] degrees"));
            }
        }
        Ok(())
    }
}

/// An observed line position on one resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPosition {
    /// Resonator frequency, Hz.
    pub f_res: f64,
    /// Tesla.
    pub b_peak: f64,
    pub label: TransitionLabel,
}
