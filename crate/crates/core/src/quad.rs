//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs_tol, rel_tol · |I|)`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// ∫_a^b f(x) dx.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("integration limits must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            subdivisions: 0,
            evaluations: 0,
        });
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut evaluations = 15;
    let mut subdivisions = 0;
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite integrand on [{a}, {b}] after {subdivisions} subdivisions"
            )));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            break;
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::Numeric(format!(
                "quadrature on [{a}, {b}] did not converge: value {total:e}, error estimate {err:e} \
                 after {subdivisions} subdivisions"
            )));
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            return Err(Error::Numeric(format!(
                "quadrature on [{a}, {b}] hit floating-point resolution near x = {mid:e} \
                 (error estimate {err:e})"
            )));
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evaluations += 30;
        subdivisions += 1;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // re-sum to shed accumulated rounding from the running updates
    let value = heap.iter().map(|s| s.value).sum();
    let error_estimate = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error_estimate,
        subdivisions,
        evaluations,
    })
}

/// ∫_a^∞ f(x) dx via `x = a + t / (1 − t)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, opts: &QuadOptions) -> Result<QuadResult> {
    integrate(
        |t| {
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        },
        0.0,
        1.0,
        opts,
    )
}
