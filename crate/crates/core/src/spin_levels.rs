//! Energy levels and ESR transitions of the surface spin communities.
//!
//! Three Hamiltonians are supported, all written in frequency units (Hz):
//!
//! * free doublet, `S = 1/2`: `g_e μ_B B S_z / h`
//! * hyperfine doublet, `S = 1/2 ⊗ I = 1/2`:
//!   `A I·S + g_e μ_B B S_z / h − g_n μ_N B I_z / h`
//! * triplet, `S = 1`: `D (S_z² − 2/3) + g_e μ_B B S_z / h`
//!
//! Each is diagonalised exactly in its (at most 4-dimensional) product basis.
//! The static field is along z and the microwave field along x, so line
//! strengths are `|⟨upper|S_x|lower⟩|²`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::{self, H, K_B, MU_B, MU_N};
use crate::error::{ensure_finite, Error, Result};
use crate::par::*;

/// Default cut for [`transitions`]: keeps the allowed electron-flip lines
/// and drops the nearly forbidden ones.
pub const DEFAULT_MIN_STRENGTH: f64 = 0.01;

/// Grid used by [`resonance_fields`] to bracket crossings.
pub const DEFAULT_GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinKind {
    FreeDoublet,
    HyperfineDoublet,
    Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystem {
    pub kind: SpinKind,
    /// Electron g-factor.
    pub g_e: f64,
    /// Hyperfine constant A, Hz. Only used by the hyperfine doublet.
    #[serde(default)]
    pub hyperfine_hz: f64,
    /// Nuclear g-factor (free proton by default).
    #[serde(default = "default_g_n")]
    pub g_n: f64,
    #[serde(default = "default_true")]
    pub include_nuclear_zeeman: bool,
    /// Zero-field splitting D, Hz. Only used by the triplet.
    #[serde(default)]
    pub zero_field_splitting_hz: f64,
}

fn default_g_n() -> f64 {
    constants::G_PROTON
}

fn default_true() -> bool {
    true
}

impl SpinSystem {
    pub fn free_doublet(g_e: f64) -> Self {
        SpinSystem {
            kind: SpinKind::FreeDoublet,
            g_e,
            hyperfine_hz: 0.0,
            g_n: constants::G_PROTON,
            include_nuclear_zeeman: true,
            zero_field_splitting_hz: 0.0,
        }
    }

    /// Electron coupled to a spin-1/2 nucleus with the proton g-factor.
    pub fn hyperfine_doublet(g_e: f64, hyperfine_hz: f64) -> Self {
        SpinSystem {
            kind: SpinKind::HyperfineDoublet,
            hyperfine_hz,
            ..Self::free_doublet(g_e)
        }
    }

    /// Free atomic hydrogen.
    pub fn hydrogen() -> Self {
        Self::hyperfine_doublet(constants::G_FREE_ELECTRON, constants::A_HYDROGEN)
    }

    pub fn triplet(g_e: f64, zero_field_splitting_hz: f64) -> Self {
        SpinSystem {
            kind: SpinKind::Triplet,
            zero_field_splitting_hz,
            ..Self::free_doublet(g_e)
        }
    }

    pub fn with_nuclear_zeeman(mut self, include: bool) -> Self {
        self.include_nuclear_zeeman = include;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("g_e", self.g_e)?;
        ensure_finite("hyperfine_hz", self.hyperfine_hz)?;
        ensure_finite("g_n", self.g_n)?;
        ensure_finite("zero_field_splitting_hz", self.zero_field_splitting_hz)?;
        if self.g_e <= 0.0 {
            return Err(Error::domain(format!("g_e must be positive, got {}", self.g_e)));
        }
        if self.hyperfine_hz < 0.0 {
            return Err(Error::domain("hyperfine constant must be non-negative"));
        }
        if self.kind == SpinKind::FreeDoublet && self.hyperfine_hz != 0.0 {
            return Err(Error::domain("a free doublet has no hyperfine constant"));
        }
        Ok(())
    }

    /// Dimension of the product basis.
    pub fn dim(&self) -> usize {
        match self.kind {
            SpinKind::FreeDoublet => 2,
            SpinKind::HyperfineDoublet => 4,
            SpinKind::Triplet => 3,
        }
    }

    /// `(m_S, m_I)` for each basis index. `m_I` is 0 when there is no nucleus.
    pub fn basis(&self) -> Vec<(f64, f64)> {
        match self.kind {
            SpinKind::FreeDoublet => vec![(0.5, 0.0), (-0.5, 0.0)],
            SpinKind::HyperfineDoublet => vec![(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)],
            SpinKind::Triplet => vec![(1.0, 0.0), (0.0, 0.0), (-1.0, 0.0)],
        }
    }

    /// Hamiltonian / h in Hz at field `b` (tesla).
    pub fn hamiltonian(&self, b: f64) -> DMatrix<f64> {
        let nu_e = self.g_e * MU_B * b / H;
        let nu_n = if self.include_nuclear_zeeman {
            self.g_n * MU_N * b / H
        } else {
            0.0
        };
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        match self.kind {
            SpinKind::FreeDoublet => {
                h[(0, 0)] = 0.5 * nu_e;
                h[(1, 1)] = -0.5 * nu_e;
            }
            SpinKind::HyperfineDoublet => {
                let a = self.hyperfine_hz;
                for (k, (ms, mi)) in self.basis().into_iter().enumerate() {
                    h[(k, k)] = a * ms * mi + nu_e * ms - nu_n * mi;
                }
                // (A/2)(S+I- + S-I+) couples |+,-> and |-,+>
                h[(1, 2)] = 0.5 * a;
                h[(2, 1)] = 0.5 * a;
            }
            SpinKind::Triplet => {
                let d = self.zero_field_splitting_hz;
                for (k, (ms, _)) in self.basis().into_iter().enumerate() {
                    h[(k, k)] = d * (ms * ms - 2.0 / 3.0) + nu_e * ms;
                }
            }
        }
        h
    }

    /// Electron `S_x` in the product basis.
    pub fn s_x(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut sx = DMatrix::zeros(n, n);
        match self.kind {
            SpinKind::FreeDoublet => {
                sx[(0, 1)] = 0.5;
                sx[(1, 0)] = 0.5;
            }
            SpinKind::HyperfineDoublet => {
                // flips m_S, leaves m_I
                for (a, b) in [(0, 2), (1, 3)] {
                    sx[(a, b)] = 0.5;
                    sx[(b, a)] = 0.5;
                }
            }
            SpinKind::Triplet => {
                let e = std::f64::consts::FRAC_1_SQRT_2;
                for (a, b) in [(0, 1), (1, 2)] {
                    sx[(a, b)] = e;
                    sx[(b, a)] = e;
                }
            }
        }
        sx
    }

    fn s_z_diag(&self) -> Vec<f64> {
        self.basis().into_iter().map(|(ms, _)| ms).collect()
    }
}

/// Eigen-decomposition at one field value.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub field: f64,
    /// Level energies in Hz, ascending.
    pub energies: Vec<f64>,
    /// Column `k` is the eigenvector of `energies[k]` in the product basis.
    pub states: DMatrix<f64>,
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Boltzmann populations at temperature `t` (kelvin).
    pub fn populations(&self, t: f64) -> Vec<f64> {
        let e0 = self.energies[0];
        let w: Vec<f64> = self
            .energies
            .iter()
            .map(|e| (-(e - e0) * H / (K_B * t)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionLabel {
    Central,
    SatLow,
    SatHigh,
    Other,
}

impl TransitionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionLabel::Central => "central",
            TransitionLabel::SatLow => "sat_low",
            TransitionLabel::SatHigh => "sat_high",
            TransitionLabel::Other => "other",
        }
    }
}

impl std::str::FromStr for TransitionLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central" => Ok(TransitionLabel::Central),
            "sat_low" | "satlow" => Ok(TransitionLabel::SatLow),
            "sat_high" | "sathigh" => Ok(TransitionLabel::SatHigh),
            "other" => Ok(TransitionLabel::Other),
            other => Err(Error::Input(format!("unknown transition label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub lower: usize,
    pub upper: usize,
    /// Hz
    pub frequency: f64,
    /// `|⟨upper|S_x|lower⟩|²`
    pub strength: f64,
    pub label: TransitionLabel,
}

/// Full diagonalisation of the spin Hamiltonian at field `b`.
pub fn eigensystem(spin: &SpinSystem, b: f64) -> Result<LevelSet> {
    spin.validate()?;
    ensure_finite("B", b)?;
    if b < 0.0 {
        return Err(Error::domain(format!("field must be non-negative, got {b}")));
    }
    Ok(diagonalize(spin, b))
}

fn diagonalize(spin: &SpinSystem, b: f64) -> LevelSet {
    let h = spin.hamiltonian(b);
    let n = h.nrows();
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut states = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        // deterministic phase: largest component positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        states.set_column(k, &v);
    }
    LevelSet {
        field: b,
        energies,
        states,
    }
}

fn all_transitions(spin: &SpinSystem, levels: &LevelSet) -> Vec<Transition> {
    let sx = spin.s_x();
    let sz = spin.s_z_diag();
    let n = levels.len();
    let sz_expect: Vec<f64> = (0..n)
        .map(|k| {
            let v = levels.states.column(k);
            (0..n).map(|i| v[i] * v[i] * sz[i]).sum()
        })
        .collect();

    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for l in 0..n {
        for u in (l + 1)..n {
            let vl = levels.states.column(l);
            let vu = levels.states.column(u);
            let m = vu.dot(&(&sx * vl));
            out.push(Transition {
                lower: l,
                upper: u,
                frequency: levels.energies[u] - levels.energies[l],
                strength: m * m,
                label: TransitionLabel::Other,
            });
        }
    }

    match spin.kind {
        SpinKind::FreeDoublet => {
            for t in &mut out {
                t.label = TransitionLabel::Central;
            }
        }
        SpinKind::Triplet => {
            // S_x only connects Δm = ±1, which are the allowed lines
            for t in &mut out {
                if t.strength > 1e-12 {
                    t.label = TransitionLabel::Central;
                }
            }
        }
        SpinKind::HyperfineDoublet => {
            let flips: Vec<usize> = out
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    t.strength > 1e-6 && (sz_expect[t.upper] - sz_expect[t.lower]).abs() > 0.5
                })
                .map(|(i, _)| i)
                .collect();
            if flips.len() == 2 {
                let (a, b) = (flips[0], flips[1]);
                // the higher-frequency line reaches a fixed resonator frequency at lower field
                let (hi, lo) = if out[a].frequency >= out[b].frequency {
                    (a, b)
                } else {
                    (b, a)
                };
                out[hi].label = TransitionLabel::SatLow;
                out[lo].label = TransitionLabel::SatHigh;
            }
        }
    }
    out
}

/// ESR transitions at field `b` with strength at least `min_strength`,
/// ordered by (lower, upper) level index.
pub fn transitions(spin: &SpinSystem, b: f64, min_strength: f64) -> Result<Vec<Transition>> {
    if !(0.0..=0.5).contains(&min_strength) {
        return Err(Error::domain(format!(
            "min_strength must lie in [0, 0.5], got {min_strength}"
        )));
    }
    let levels = eigensystem(spin, b)?;
    Ok(all_transitions(spin, &levels)
        .into_iter()
        .filter(|t| t.strength >= min_strength && t.frequency >= 0.0)
        .collect())
}

/// A transition frequency crossing a fixed resonator frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub field: f64,
    pub label: TransitionLabel,
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub grid_points: usize,
    /// Bisection stops when the bracket is narrower than this (tesla).
    pub tolerance: f64,
    pub min_strength: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            grid_points: DEFAULT_GRID_POINTS,
            tolerance: 1e-12,
            min_strength: DEFAULT_MIN_STRENGTH,
        }
    }
}

fn pair_frequency(spin: &SpinSystem, b: f64, lower: usize, upper: usize) -> f64 {
    let eig = SymmetricEigen::new(spin.hamiltonian(b));
    let mut e: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e[upper] - e[lower]
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All fields in `(0, b_max]` where a transition (optionally restricted to
/// one label) is resonant with `f_res`, sorted ascending.
pub fn resonance_fields(
    spin: &SpinSystem,
    f_res: f64,
    b_max: f64,
    label: Option<TransitionLabel>,
) -> Result<Vec<f64>> {
    Ok(resonance_crossings(spin, f_res, b_max, label, &RootOptions::default())?
        .into_iter()
        .map(|c| c.field)
        .collect())
}

/// Grid bracketing followed by bisection on each level pair.
pub fn resonance_crossings(
    spin: &SpinSystem,
    f_res: f64,
    b_max: f64,
    label: Option<TransitionLabel>,
    opts: &RootOptions,
) -> Result<Vec<Crossing>> {
    spin.validate()?;
    ensure_finite("f_res", f_res)?;
    ensure_finite("B_max", b_max)?;
    if f_res <= 0.0 {
        return Ok(Vec::new());
    }
    if b_max <= 0.0 {
        return Err(Error::domain("B_max must be positive"));
    }
    let n = opts.grid_points.max(2);
    // the first node sits just above zero so that zero-field degeneracies
    // do not scramble the level ordering
    let b0 = b_max * 1e-6;
    let grid: Vec<f64> = (0..n)
        .map(|k| b0 + (b_max - b0) * k as f64 / (n - 1) as f64)
        .collect();
    let lines: Vec<Vec<Transition>> = grid
        .par_iter()
        .map(|&b| all_transitions(spin, &diagonalize(spin, b)))
        .collect();

    let accept = |t: &Transition| {
        t.strength >= opts.min_strength
            && t.label != TransitionLabel::Other
            && label.is_none_or(|l| l == t.label)
    };

    let mut out: Vec<Crossing> = Vec::new();
    for k in 0..n - 1 {
        for (ta, tb) in lines[k].iter().zip(&lines[k + 1]) {
            debug_assert_eq!((ta.lower, ta.upper), (tb.lower, tb.upper));
            if !accept(ta) || !accept(tb) {
                continue;
            }
            let ga = ta.frequency - f_res;
            let gb = tb.frequency - f_res;
            if ga == 0.0 && k > 0 {
                // already counted as the right end of the previous cell
                continue;
            }
            if (ga < 0.0) == (gb < 0.0) && ga != 0.0 && gb != 0.0 {
                continue;
            }
            let (l, u) = (ta.lower, ta.upper);
            let field = if ga == 0.0 {
                grid[k]
            } else if gb == 0.0 {
                grid[k + 1]
            } else {
                bisect(grid[k], grid[k + 1], opts.tolerance, |b| {
                    pair_frequency(spin, b, l, u) - f_res
                })
            };
            out.push(Crossing {
                field,
                label: ta.label,
                lower: l,
                upper: u,
            });
        }
    }
    out.sort_by(|a, b| a.field.total_cmp(&b.field));
    out.dedup_by(|a, b| (a.field - b.field).abs() <= 2.0 * opts.tolerance && a.label == b.label);
    Ok(out)
}

fn labeled_frequency(spin: &SpinSystem, b: f64, label: TransitionLabel) -> Option<f64> {
    all_transitions(spin, &diagonalize(spin, b))
        .into_iter()
        .find(|t| t.label == label)
        .map(|t| t.frequency)
}

/// Resonance field of the line carrying `label` inside `[lo, hi]`, or `None`
/// if that line does not cross `f_res` there. Used by the position fits,
/// where a full-range scan per residual would be wasteful.
pub fn resonance_field_near(
    spin: &SpinSystem,
    f_res: f64,
    label: TransitionLabel,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    const SUBDIVISIONS: usize = 8;
    let lo = lo.max(1e-9);
    if !(hi > lo) {
        return None;
    }
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=SUBDIVISIONS {
        let b = lo + (hi - lo) * k as f64 / SUBDIVISIONS as f64;
        let g = labeled_frequency(spin, b, label).map(|f| f - f_res);
        if let (Some((bp, gp)), Some(g)) = (prev, g) {
            if gp == 0.0 {
                return Some(bp);
            }
            if (gp < 0.0) != (g < 0.0) || g == 0.0 {
                return Some(bisect(bp, b, 1e-13, |x| {
                    labeled_frequency(spin, x, label).map_or(f64::NAN, |f| f - f_res)
                }));
            }
        }
        prev = g.map(|g| (b, g));
    }
    None
}

/// `d(2π f)/dB` of the labelled line at field `b`, rad/s per tesla.
pub fn transition_slope(spin: &SpinSystem, label: TransitionLabel, b: f64) -> Result<f64> {
    spin.validate()?;
    let step = 1e-6_f64.max(b * 1e-6);
    let lo = (b - step).max(0.0);
    let hi = b + step;
    match (labeled_frequency(spin, lo, label), labeled_frequency(spin, hi, label)) {
        (Some(a), Some(c)) => Ok(2.0 * std::f64::consts::PI * (c - a) / (hi - lo)),
        _ => Err(Error::domain(format!(
            "no {} transition near B = {b} T",
            label.as_str()
        ))),
    }
}

/// Thermal polarisation magnitude `tanh(h f / 2 k_B T)` of a two-level
/// system split by `freq_hz`.
pub fn polarization(freq_hz: f64, t: f64) -> Result<f64> {
    ensure_finite("T", t)?;
    if t <= 0.0 {
        return Err(Error::domain(format!("temperature must be positive, got {t}")));
    }
    Ok((H * freq_hz / (2.0 * K_B * t)).tanh().abs())
}

/// Thermal weight of a line: the Boltzmann population difference
/// `p_lower − p_upper` summed over all allowed transitions degenerate with
/// `t` (for a zero-field-splitting-free triplet both Δm = ±1 lines coincide
/// and the sum telescopes to `p_{-1} − p_{+1}`).
pub fn peak_area_factor(spin: &SpinSystem, t: &Transition, b: f64, temp: f64) -> Result<f64> {
    ensure_finite("T", temp)?;
    if temp <= 0.0 {
        return Err(Error::domain(format!("temperature must be positive, got {temp}")));
    }
    let levels = eigensystem(spin, b)?;
    if t.upper >= levels.len() || t.lower >= t.upper {
        return Err(Error::domain("transition does not belong to this spin system"));
    }
    let p = levels.populations(temp);
    let f_t = levels.energies[t.upper] - levels.energies[t.lower];
    let tol = 1e-9 * f_t.abs().max(1.0);
    let mut sum = p[t.lower] - p[t.upper];
    for other in all_transitions(spin, &levels) {
        if (other.lower, other.upper) == (t.lower, t.upper) {
            continue;
        }
        if other.strength >= DEFAULT_MIN_STRENGTH && (other.frequency - f_t).abs() <= tol {
            sum += p[other.lower] - p[other.upper];
        }
    }
    Ok(sum)
}

/// The labelled line at `b`, if present.
pub fn find_transition(spin: &SpinSystem, b: f64, label: TransitionLabel) -> Result<Transition> {
    let levels = eigensystem(spin, b)?;
    all_transitions(spin, &levels)
        .into_iter()
        .filter(|t| t.label == label)
        .max_by(|a, b| a.strength.total_cmp(&b.strength))
        .ok_or_else(|| Error::domain(format!("no {} transition at B = {b} T", label.as_str())))
}

/// g-factor that a free spin would need to resonate at `f_res` in field `b_peak`.
pub fn apparent_g(b_peak: f64, f_res: f64) -> Result<f64> {
    ensure_finite("B_peak", b_peak)?;
    ensure_finite("f_res", f_res)?;
    if b_peak <= 0.0 {
        return Err(Error::domain(format!("B_peak must be positive, got {b_peak}")));
    }
    Ok(H * f_res / (MU_B * b_peak))
}
