//! Levenberg–Marquardt least squares.
//!
//! Steps are solved through the SVD of the column-normalised Jacobian, which
//! is Marquardt's diagonal scaling and keeps rank-deficient problems stable.
//! Bounds are handled by smooth reparametrisation; the covariance is always
//! reported for the external (user) parameters.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FitResult, Param};
use crate::error::{Error, Result};
use crate::par::*;

/// One fit parameter: initial value, optional bounds, typical magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub init: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Typical size of variations. When given, finite-difference steps are
    /// `fd_step · scale`; otherwise `fd_step · max(|value|, 1)`.
    pub scale: Option<f64>,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, init: f64) -> Self {
        ParamSpec {
            name: name.into(),
            init,
            lower: None,
            upper: None,
            scale: None,
            fixed: false,
        }
    }

    pub fn lower(mut self, l: f64) -> Self {
        self.lower = Some(l);
        self
    }

    pub fn upper(mut self, u: f64) -> Self {
        self.upper = Some(u);
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.scale = Some(s);
        self
    }

    pub fn fixed(mut self, fixed: bool) -> Self {
        self.fixed = fixed;
        self
    }

    fn typical(&self) -> f64 {
        self.scale.unwrap_or_else(|| self.init.abs().max(1.0))
    }
}

/// Residual loss. `SoftL1` minimises `Σ f²(√(1 + (r/f)²) − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Linear,
    SoftL1 { f_scale: f64 },
}

/// How parameter uncertainties are estimated at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// `s² (JᵀJ)⁻¹`, exact for equal-variance noise.
    #[default]
    Standard,
    /// Heteroscedasticity-consistent `(JᵀJ)⁻¹ Jᵀ diag(r²) J (JᵀJ)⁻¹`, scaled
    /// by `m/(m − n)`. Use when the noise level varies along the data.
    Sandwich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative cost reduction below which the fit stops.
    pub ftol: f64,
    /// Relative step size below which the fit stops.
    pub xtol: f64,
    /// Scaled-gradient cosine below which the fit stops.
    pub gtol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    pub loss: Loss,
    pub covariance: Covariance,
    pub bootstrap: Option<BootstrapOptions>,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            ftol: 1e-15,
            xtol: 1e-12,
            gtol: 1e-12,
            fd_step: 1e-6,
            loss: Loss::Linear,
            covariance: Covariance::Standard,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Fixed(f64),
    Free,
    Lower { l: f64, s: f64 },
    Upper { u: f64, s: f64 },
    Range { l: f64, u: f64 },
}

impl Map {
    fn to_ext(self, x: f64) -> f64 {
        match self {
            Map::Fixed(v) => v,
            Map::Free => x,
            Map::Lower { l, s } => l + s * ((1.0 + (x / s).powi(2)).sqrt() - 1.0),
            Map::Upper { u, s } => u - s * ((1.0 + (x / s).powi(2)).sqrt() - 1.0),
            Map::Range { l, u } => l + 0.5 * (u - l) * (1.0 + x.sin()),
        }
    }

    fn to_int(self, p: f64) -> f64 {
        match self {
            Map::Fixed(_) => 0.0,
            Map::Free => p,
            Map::Lower { l, s } => s * ((1.0 + (p - l) / s).powi(2) - 1.0).sqrt(),
            Map::Upper { u, s } => s * ((1.0 + (u - p) / s).powi(2) - 1.0).sqrt(),
            Map::Range { l, u } => (2.0 * (p - l) / (u - l) - 1.0).clamp(-1.0, 1.0).asin(),
        }
    }

    fn internal_scale(self, typical: f64) -> f64 {
        match self {
            Map::Range { .. } => 1.0,
            _ => typical,
        }
    }
}

struct Problem<'a, F> {
    residuals: &'a F,
    names: Vec<String>,
    maps: Vec<Map>,
    free: Vec<usize>,
    typical: Vec<f64>,
    explicit: Vec<bool>,
    loss: Loss,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn external(&self, x: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.maps.iter().map(|m| m.to_ext(0.0)).collect();
        for (k, &i) in self.free.iter().enumerate() {
            p[i] = self.maps[i].to_ext(x[k]);
        }
        p
    }

    /// Finite-difference step for free slot `j` at internal value `x`.
    fn step(&self, j: usize, x: f64, fd: f64) -> f64 {
        let i = self.free[j];
        let s = self.maps[i].internal_scale(self.typical[i]);
        if self.explicit[i] {
            fd * s
        } else {
            fd * x.abs().max(s)
        }
    }

    fn raw(&self, p: &[f64]) -> Vec<f64> {
        (self.residuals)(p)
    }

    fn transformed(&self, r: Vec<f64>) -> Vec<f64> {
        match self.loss {
            Loss::Linear => r,
            Loss::SoftL1 { f_scale } => r.into_iter().map(|v| soft_l1(v, f_scale)).collect(),
        }
    }

    fn eval_int(&self, x: &[f64]) -> Option<DVector<f64>> {
        let r = self.transformed(self.raw(&self.external(x)));
        r.iter().all(|v| v.is_finite()).then(|| DVector::from_vec(r))
    }
}

/// Residual whose square is twice the soft-L1 loss of `r`.
fn soft_l1(r: f64, f: f64) -> f64 {
    let z = r / f;
    // 2(√(1+z²) − 1) = 2z² / (√(1+z²) + 1), stable for small z
    f * r.signum() * (2.0 * z * z / ((1.0 + z * z).sqrt() + 1.0)).sqrt()
}

fn first_non_finite(r: &[f64]) -> Option<usize> {
    r.iter().position(|v| !v.is_finite())
}

struct Minimum {
    x: Vec<f64>,
    r: DVector<f64>,
    n_iter: usize,
    converged: bool,
    reason: &'static str,
}

fn jacobian<F>(prob: &Problem<'_, F>, x: &[f64], fd_step: f64, m: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = x.len();
    let columns: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = prob.step(j, x[j], fd_step);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let rp = prob.eval_int(&xp)?;
            let rm = prob.eval_int(&xm)?;
            Some(
                rp.iter()
                    .zip(rm.iter())
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect(),
            )
        })
        .collect();
    let mut jac = DMatrix::zeros(m, n);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.ok_or_else(|| {
            Error::Numeric(format!(
                "non-finite residuals while differentiating parameter '{}'",
                prob.names[prob.free[j]]
            ))
        })?;
        jac.set_column(j, &DVector::from_vec(col));
    }
    Ok(jac)
}

/// Column-normalised Jacobian and its norms; dead columns get norm 1.
fn normalise(jac: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let norms: Vec<f64> = jac
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 && n.is_finite() {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut js = jac.clone();
    for (j, &c) in norms.iter().enumerate() {
        js.column_mut(j).scale_mut(1.0 / c);
    }
    (js, norms)
}

fn minimize<F>(prob: &Problem<'_, F>, x0: Vec<f64>, opts: &LmOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let mut x = x0;
    let mut r = prob.eval_int(&x).ok_or_else(|| {
        let raw = prob.raw(&prob.external(&x));
        Error::Numeric(format!(
            "residual {} is not finite at the starting point",
            first_non_finite(&raw).unwrap_or(0)
        ))
    })?;
    let m = r.len();
    let n = x.len();
    if n == 0 {
        return Ok(Minimum {
            x,
            r,
            n_iter: 0,
            converged: true,
            reason: "no free parameters",
        });
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = -1.0;
    let mut nu = 2.0;
    for iter in 0..opts.max_iter {
        if cost == 0.0 {
            return Ok(Minimum { x, r, n_iter: iter, converged: true, reason: "zero residual" });
        }
        let jac = jacobian(prob, &x, opts.fd_step, m)?;
        let (js, norms) = normalise(&jac);
        let g = js.transpose() * &r;
        let rnorm = r.norm();
        if g.amax() <= opts.gtol * rnorm {
            return Ok(Minimum { x, r, n_iter: iter, converged: true, reason: "gradient tolerance" });
        }
        let svd = js.clone().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let s = &svd.singular_values;
        let s_max = s.max();
        if lambda < 0.0 {
            lambda = 1e-3 * s_max * s_max;
        }
        let ur = u.transpose() * &r;
        let mut accepted = false;
        for _ in 0..60 {
            let coeff = DVector::from_iterator(
                s.len(),
                s.iter().zip(ur.iter()).map(|(&si, &ui)| -si * ui / (si * si + lambda)),
            );
            let hs = v_t.transpose() * coeff;
            let h: Vec<f64> = hs.iter().zip(&norms).map(|(v, c)| v / c).collect();
            let small_step = h
                .iter()
                .enumerate()
                .all(|(j, hj)| hj.abs() <= prob.step(j, x[j], opts.xtol));
            if small_step {
                return Ok(Minimum { x, r, n_iter: iter + 1, converged: true, reason: "step tolerance" });
            }
            let lin = &r + &js * &hs;
            let predicted = 0.5 * (r.norm_squared() - lin.norm_squared());
            let x_new: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
            let trial = prob.eval_int(&x_new);
            let (actual, r_new) = match trial {
                Some(rn) => (cost - 0.5 * rn.norm_squared(), Some(rn)),
                None => (f64::NEG_INFINITY, None),
            };
            let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };
            if rho > 0.0 {
                let r_new = r_new.expect("finite when rho > 0");
                let old_cost = cost;
                x = x_new;
                r = r_new;
                cost = 0.5 * r.norm_squared();
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                accepted = true;
                if actual <= opts.ftol * old_cost && predicted <= opts.ftol * old_cost {
                    return Ok(Minimum { x, r, n_iter: iter + 1, converged: true, reason: "cost tolerance" });
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 * s_max * s_max {
                break;
            }
        }
        if !accepted {
            // no descent direction left at working precision
            return Ok(Minimum { x, r, n_iter: iter + 1, converged: true, reason: "no further reduction" });
        }
    }
    Ok(Minimum {
        x,
        r,
        n_iter: opts.max_iter,
        converged: false,
        reason: "maximum iterations reached",
    })
}

fn build_maps(params: &[ParamSpec]) -> Result<(Vec<Map>, Vec<f64>)> {
    let mut maps = Vec::with_capacity(params.len());
    let mut inits = Vec::with_capacity(params.len());
    for p in params {
        if !p.init.is_finite() {
            return Err(Error::Fit(format!("initial value of '{}' is not finite", p.name)));
        }
        let typical = p.typical();
        if !(typical > 0.0 && typical.is_finite()) {
            return Err(Error::Fit(format!("scale of '{}' must be positive", p.name)));
        }
        let (map, init) = if p.fixed {
            (Map::Fixed(p.init), p.init)
        } else {
            match (p.lower, p.upper) {
                (None, None) => (Map::Free, p.init),
                (Some(l), None) => {
                    // starting exactly on a bound has zero slope in the mapped coordinate
                    let init = p.init.max(l + 1e-3 * typical);
                    (Map::Lower { l, s: typical }, init)
                }
                (None, Some(u)) => (Map::Upper { u, s: typical }, p.init.min(u - 1e-3 * typical)),
                (Some(l), Some(u)) => {
                    if !(u > l) {
                        return Err(Error::Fit(format!(
                            "inconsistent bounds for '{}': [{l}, {u}]",
                            p.name
                        )));
                    }
                    let margin = 1e-4 * (u - l);
                    (Map::Range { l, u }, p.init.clamp(l + margin, u - margin))
                }
            }
        };
        if let (Some(l), Some(u)) = (p.lower, p.upper) {
            if u <= l {
                return Err(Error::Fit(format!("inconsistent bounds for '{}'", p.name)));
            }
        }
        maps.push(map);
        inits.push(init);
    }
    Ok((maps, inits))
}

/// Minimises `½ Σ ρ(r_i(p))²` over the parameters in `params` and reports
/// values, linearised covariance and 95 % intervals. Failing to converge
/// within `max_iter` is reported through `converged = false`, not an error.
pub fn lm_fit<F>(model_id: &str, residuals: F, params: &[ParamSpec], opts: &LmOptions) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if let Loss::SoftL1 { f_scale } = opts.loss {
        if !(f_scale > 0.0 && f_scale.is_finite()) {
            return Err(Error::Fit(format!("soft-L1 scale must be positive, got {f_scale}")));
        }
    }
    let (maps, inits) = build_maps(params)?;
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].fixed).collect();
    let typical: Vec<f64> = params.iter().map(ParamSpec::typical).collect();
    let prob = Problem {
        residuals: &residuals,
        names: params.iter().map(|p| p.name.clone()).collect(),
        maps: maps.clone(),
        free: free.clone(),
        typical: typical.clone(),
        explicit: params.iter().map(|p| p.scale.is_some()).collect(),
        loss: opts.loss,
    };
    let raw0 = residuals(&inits);
    if let Some(i) = first_non_finite(&raw0) {
        return Err(Error::Numeric(format!("residual {i} is not finite at the starting point")));
    }
    let m = raw0.len();
    if m < free.len() {
        return Err(Error::Input(format!(
            "{m} residuals cannot determine {} free parameters",
            free.len()
        )));
    }
    let x0: Vec<f64> = free.iter().map(|&i| maps[i].to_int(inits[i])).collect();
    let min = minimize(&prob, x0, opts)?;
    let p_hat = prob.external(&min.x);

    let mut result = covariance_report(&prob, params, &p_hat, &min.r, opts)?;
    result.model_id = model_id.to_string();
    result.n_iter = min.n_iter;
    result.converged = min.converged;
    result.termination = min.reason.to_string();
    if !min.converged {
        result.warnings.push(format!("not converged: {}", min.reason));
    }

    if let Some(boot) = opts.bootstrap {
        let intervals = bootstrap(&residuals, params, &p_hat, opts, boot)?;
        for (param, ci) in result.params.iter_mut().zip(intervals) {
            param.bootstrap_ci95 = ci;
        }
    }
    Ok(result)
}

fn covariance_report<F>(
    prob: &Problem<'_, F>,
    params: &[ParamSpec],
    p_hat: &[f64],
    r_hat: &DVector<f64>,
    opts: &LmOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let m = r_hat.len();
    let free = &prob.free;
    let n = free.len();
    // Covariance is built from the raw residuals: with a robust loss the
    // Gauss-Newton curvature of the transformed residuals overstates the
    // loss curvature ψ' and would shrink the intervals.
    let raw_hat = prob.raw(p_hat);
    // Jacobian in external coordinates, one-sided next to a bound
    let columns: Vec<Option<Vec<f64>>> = free
        .par_iter()
        .map(|&i| {
            let h = if prob.explicit[i] {
                opts.fd_step * prob.typical[i]
            } else {
                opts.fd_step * p_hat[i].abs().max(prob.typical[i])
            };
            let lo_ok = params[i].lower.is_none_or(|l| p_hat[i] - h >= l);
            let hi_ok = params[i].upper.is_none_or(|u| p_hat[i] + h <= u);
            let at = |v: f64| {
                let mut p = p_hat.to_vec();
                p[i] = v;
                let r = prob.raw(&p);
                r.iter().all(|x| x.is_finite()).then_some(r)
            };
            let (a, b, span) = match (lo_ok, hi_ok) {
                (true, true) => (at(p_hat[i] + h)?, at(p_hat[i] - h)?, 2.0 * h),
                (false, true) => (at(p_hat[i] + h)?, raw_hat.clone(), h),
                (true, false) => (raw_hat.clone(), at(p_hat[i] - h)?, h),
                (false, false) => return Some(vec![0.0; m]),
            };
            Some(a.iter().zip(&b).map(|(x, y)| (x - y) / span).collect())
        })
        .collect();
    let mut jac = DMatrix::zeros(m, n);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.ok_or_else(|| {
            Error::Numeric(format!(
                "non-finite residuals near the optimum of '{}'",
                params[free[j]].name
            ))
        })?;
        jac.set_column(j, &DVector::from_vec(col));
    }

    // ψ = ρ'(r) and ψ' = ρ''(r) of the loss ρ
    let (psi, dpsi): (Vec<f64>, Vec<f64>) = match opts.loss {
        Loss::Linear => (raw_hat.clone(), vec![1.0; m]),
        Loss::SoftL1 { f_scale } => raw_hat
            .iter()
            .map(|&r| {
                let q = 1.0 + (r / f_scale).powi(2);
                (r / q.sqrt(), q.powf(-1.5))
            })
            .unzip(),
    };

    let mut warnings = Vec::new();
    let dof = m.saturating_sub(n);
    let rss = r_hat.norm_squared();
    let s2 = if dof > 0 {
        Some(psi.iter().map(|v| v * v).sum::<f64>() / dof as f64)
    } else {
        warnings.push("no residual degrees of freedom; uncertainties unavailable".to_string());
        None
    };

    let (js, norms) = normalise(&jac);
    let mut cov_free: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut unconstrained = vec![false; n];
    if n > 0 {
        // bread (Jᵀ diag(ψ') J)⁺ from the SVD of the ψ'-weighted Jacobian
        let jw = DMatrix::from_fn(m, n, |i, j| js[(i, j)] * dpsi[i].sqrt());
        let svd = jw.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let s = &svd.singular_values;
        let s_max = s.max();
        let cutoff = s_max * 1e-8;
        let mut null_weight = vec![0.0; n];
        for (k, &sk) in s.iter().enumerate() {
            let row = v_t.row(k);
            if sk > cutoff && s_max > 0.0 {
                for a in 0..n {
                    for b in 0..n {
                        cov_free[(a, b)] += row[a] * row[b] / (sk * sk);
                    }
                }
            } else {
                for a in 0..n {
                    null_weight[a] += row[a] * row[a];
                }
            }
        }
        // a column that contributes nothing is unconstrained outright
        for (j, c) in jac.column_iter().enumerate() {
            if c.norm() == 0.0 || null_weight[j] > 1e-2 {
                unconstrained[j] = true;
            }
        }
        let s2 = s2.unwrap_or(f64::NAN);
        let meat = match opts.covariance {
            Covariance::Sandwich => {
                let weighted = DMatrix::from_fn(m, n, |i, j| js[(i, j)] * psi[i]);
                Some(weighted.transpose() * &weighted * (m as f64 / (m - n).max(1) as f64))
            }
            Covariance::Standard if opts.loss != Loss::Linear => Some(js.transpose() * &js * s2),
            Covariance::Standard => None,
        };
        match meat {
            Some(meat) => cov_free = &cov_free * meat * &cov_free,
            None => cov_free *= s2,
        }
        if !s2.is_finite() {
            cov_free.fill(f64::NAN);
        }
        for a in 0..n {
            for b in 0..n {
                cov_free[(a, b)] /= norms[a] * norms[b];
            }
        }
    }

    let total = params.len();
    let mut covariance = vec![vec![0.0; total]; total];
    for (a, &ia) in free.iter().enumerate() {
        for (b, &ib) in free.iter().enumerate() {
            let v = cov_free[(a, b)];
            covariance[ia][ib] = if v.is_finite() { v } else { 0.0 };
        }
    }
    let mut out_params = Vec::with_capacity(total);
    let mut flagged = Vec::new();
    for (i, spec) in params.iter().enumerate() {
        let slot = free.iter().position(|&f| f == i);
        let (stderr, unc) = match slot {
            None => (None, false),
            Some(j) if unconstrained[j] => (None, true),
            Some(j) => {
                let var = cov_free[(j, j)];
                (var.is_finite().then(|| var.max(0.0).sqrt()), false)
            }
        };
        if unc {
            flagged.push(spec.name.clone());
        }
        out_params.push(Param {
            name: spec.name.clone(),
            value: p_hat[i],
            stderr,
            ci95: stderr.map(|s| [p_hat[i] - 1.96 * s, p_hat[i] + 1.96 * s]),
            fixed: spec.fixed,
            unconstrained: unc,
            bootstrap_ci95: None,
        });
    }
    if !flagged.is_empty() {
        warnings.push(format!(
            "rank-deficient Jacobian; unconstrained: {}",
            flagged.join(", ")
        ));
    }
    Ok(FitResult {
        model_id: String::new(),
        params: out_params,
        covariance,
        residual_norm: rss.sqrt(),
        n_points: m,
        n_iter: 0,
        converged: false,
        termination: String::new(),
        warnings,
        derived: Vec::new(),
    })
}

fn bootstrap<F>(
    residuals: &F,
    params: &[ParamSpec],
    p_hat: &[f64],
    opts: &LmOptions,
    boot: BootstrapOptions,
) -> Result<Vec<Option<[f64; 2]>>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if boot.samples < 20 {
        return Err(Error::Fit("bootstrap needs at least 20 samples".into()));
    }
    let r_hat = residuals(p_hat);
    let m = r_hat.len();
    let (maps, _) = build_maps(params)?;
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].fixed).collect();
    let typical: Vec<f64> = params.iter().map(ParamSpec::typical).collect();
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let inner = LmOptions {
        bootstrap: None,
        ..*opts
    };
    let draws: Vec<Option<Vec<f64>>> = (0..boot.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(boot.seed);
            rng.set_stream(k as u64);
            let resampled: Vec<f64> = (0..m).map(|_| r_hat[rng.random_range(0..m)]).collect();
            let shifted = |p: &[f64]| -> Vec<f64> {
                residuals(p)
                    .iter()
                    .zip(r_hat.iter().zip(&resampled))
                    .map(|(r, (rh, rs))| r - rh + rs)
                    .collect()
            };
            let prob = Problem {
                residuals: &shifted,
                names: names.clone(),
                maps: maps.clone(),
                free: free.clone(),
                typical: typical.clone(),
                explicit: params.iter().map(|p| p.scale.is_some()).collect(),
                loss: inner.loss,
            };
            let x0: Vec<f64> = free.iter().map(|&i| maps[i].to_int(p_hat[i])).collect();
            let min = minimize(&prob, x0, &inner).ok()?;
            Some(prob.external(&min.x))
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    if ok.len() < boot.samples / 2 {
        return Err(Error::Fit("most bootstrap refits failed".into()));
    }
    Ok((0..params.len())
        .map(|i| {
            if params[i].fixed {
                return None;
            }
            let mut v: Vec<f64> = ok.iter().map(|p| p[i]).collect();
            v.sort_by(f64::total_cmp);
            let q = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
            Some([q(0.025), q(0.975)])
        })
        .collect())
}
