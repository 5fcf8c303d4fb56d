//! Numerical integration used throughout the crate.
//!
//! Integrands here are almost always sharply peaked and strictly positive, so
//! the workhorse is [`integrate_log_peak`]: the caller hands over the log of
//! the integrand, the routine locates the peak, brackets the region where the
//! integrand is within `e^-80` of it, and runs adaptive Gauss-Kronrod on a
//! geometric partition around the peak.

use crate::error::{Error, Result};
use crate::special::{expm1_minus_linear, stirling_correction};
use statrs::function::gamma::ln_gamma;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_067_316_190,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = 0.0;
    let mut abs_k = fc.abs() * WGK[10];
    let mut fv = [0.0f64; 21];
    fv[10] = fc;
    for i in 0..10 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[i] = f1;
        fv[20 - i] = f2;
        k += WGK[i] * (f1 + f2);
        abs_k += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * k;
    let mut asc = WGK[10] * (fc - mean).abs();
    for i in 0..10 {
        asc += WGK[i] * ((fv[i] - mean).abs() + (fv[20 - i] - mean).abs());
    }
    let value = k * h;
    let asc = asc * h.abs();
    let mut error = ((k - g) * h).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (1.0f64).min((200.0 * error / asc).powf(1.5));
    }
    let round = 50.0 * f64::EPSILON * abs_k * h.abs();
    if round > error {
        error = round;
    }
    Panel { a, b, value, error }
}

/// Adaptive Gauss-Kronrod (21 point) over the partition given by `breaks`.
pub fn gauss_kronrod_partition<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod21(&mut f, w[0], w[1]));
        }
    }
    let limit = 4000;
    let mut iterations = 0;
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), p: &Panel| (v + p.value, e + p.error));
        if error <= abs_tol.max(rel_tol * value.abs()) {
            // Sum small panels first for a reproducible, accurate total.
            let mut parts: Vec<f64> = heap.iter().map(|p| p.value).collect();
            parts.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
            return Ok(Estimate { value: parts.iter().sum(), error });
        }
        iterations += 1;
        let worst = heap.pop().expect("non-empty partition");
        let mid = 0.5 * (worst.a + worst.b);
        if iterations > limit || !(mid > worst.a && mid < worst.b) {
            return Err(Error::Quadrature {
                a: breaks[0],
                b: *breaks.last().unwrap(),
                value,
                error,
            });
        }
        heap.push(kronrod21(&mut f, worst.a, mid));
        heap.push(kronrod21(&mut f, mid, worst.b));
    }
}

/// Adaptive Gauss-Kronrod on a single interval.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Estimate> {
    gauss_kronrod_partition(f, &[a, b], rel_tol, abs_tol)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const LN_WINDOW: f64 = 80.0;

/// Integrates `exp(ln_f(x))` over the region where it is not negligible.
///
/// `start` should lie near the peak and `scale` should be the rough peak
/// width; `lower` clips the domain from the left.
pub fn integrate_log_peak<F: Fn(f64) -> f64>(
    ln_f: F,
    start: f64,
    scale: f64,
    lower: Option<f64>,
    rel_tol: f64,
) -> Result<Estimate> {
    let lo = lower.unwrap_or(f64::NEG_INFINITY);
    let eval = |x: f64| {
        let v = ln_f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    // Walk uphill from the start point.
    let mut peak = start.max(lo);
    let mut peak_val = eval(peak);
    for dir in [1.0, -1.0] {
        let mut step = scale;
        loop {
            let x = peak + dir * step;
            if x < lo {
                break;
            }
            let v = eval(x);
            if v > peak_val {
                peak = x;
                peak_val = v;
                step *= 1.6;
            } else if step > scale / 64.0 {
                step *= 0.5;
            } else {
                break;
            }
        }
    }
    if !peak_val.is_finite() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }

    let cutoff = peak_val - LN_WINDOW;
    let mut right = vec![peak];
    let mut h = scale;
    loop {
        let x = peak + h;
        right.push(x);
        if eval(x) < cutoff || h > 1e6 * scale.max(1.0) {
            break;
        }
        h *= 2.0;
    }
    let mut left = Vec::new();
    let mut h = scale;
    while peak > lo {
        let x = (peak - h).max(lo);
        left.push(x);
        if x == lo || eval(x) < cutoff || h > 1e6 * scale.max(1.0) {
            break;
        }
        h *= 2.0;
    }
    left.reverse();
    left.extend(right);

    let scaled = |x: f64| (eval(x) - peak_val).exp();
    let width_guess = scale * (2.0 * PI).sqrt();
    let est = gauss_kronrod_partition(scaled, &left, rel_tol, rel_tol * 1e-3 * width_guess)?;
    let factor = peak_val.exp();
    Ok(Estimate { value: est.value * factor, error: est.error * factor })
}

/// `∫ t^m e^{-t} / Γ(m+1) · g(t) dt` over `t > lower`, where `ln_g` maps
/// `ln t` to `ln g(t)`.
///
/// For `m >= 10` the integral is taken in `v = ln(t/m)` with the Poisson
/// weight written through Stirling's formula, so arbitrarily large (real) `m`
/// keeps full relative accuracy.
pub fn poisson_transform<G: Fn(f64) -> f64>(
    m: f64,
    ln_g: G,
    lower: Option<f64>,
    rel_tol: f64,
) -> Result<Estimate> {
    if m >= 10.0 {
        let ln_m = m.ln();
        let c0 = 0.5 * (m / (2.0 * PI)).ln() - stirling_correction(m);
        let f = |v: f64| -m * expm1_minus_linear(v) + c0 + v + ln_g(ln_m + v);
        let lo = lower.map(|t| (t / m).ln());
        integrate_log_peak(f, 0.0, 1.0 / m.sqrt(), lo, rel_tol)
    } else {
        let lg = ln_gamma(m + 1.0);
        let f = |s: f64| (m + 1.0) * s - s.exp() - lg + ln_g(s);
        let lo = lower.map(f64::ln);
        integrate_log_peak(f, m.max(0.5).ln(), 1.0, lo, rel_tol)
    }
}

/// Abscissae and weights for summing a smooth sequence over an arithmetic
/// progression `m0, m0+h, m0+2h, ...` via Euler-Maclaurin.
///
/// The integral part runs on Gauss-Legendre panels in `ln m` out to
/// `m0·e^60`; a power-law remainder estimated from the last two abscissae
/// closes it.
#[derive(Debug, Clone)]
pub struct TailGrid {
    pub start: f64,
    pub stride: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
    n_integral: usize,
    delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TailSum {
    pub value: f64,
    pub error: f64,
}

const TAIL_SPAN: f64 = 60.0;
const TAIL_PANEL: f64 = 1.0;
const TAIL_ORDER: usize = 20;

impl TailGrid {
    pub fn new(start: f64, stride: f64) -> Self {
        let (gx, gw) = gauss_legendre(TAIL_ORDER);
        let w0 = start.ln();
        let panels = (TAIL_SPAN / TAIL_PANEL).round() as usize;
        let mut points = Vec::with_capacity(panels * TAIL_ORDER + 7);
        let mut weights = Vec::with_capacity(panels * TAIL_ORDER);
        for p in 0..panels {
            let a = w0 + p as f64 * TAIL_PANEL;
            let half = 0.5 * TAIL_PANEL;
            for (x, w) in gx.iter().zip(&gw) {
                let m = (a + half * (1.0 + x)).exp();
                points.push(m);
                weights.push(w * half * m / stride);
            }
        }
        let n_integral = points.len();
        let delta = 0.01 * start;
        for k in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            points.push(start + k * delta);
        }
        let end = (w0 + TAIL_SPAN).exp();
        points.push(end * (-1.0f64).exp());
        points.push(end);
        Self { start, stride, points, weights, n_integral, delta }
    }

    /// Abscissae at which the summand must be supplied, in order.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn sum(&self, values: &[f64]) -> TailSum {
        assert_eq!(values.len(), self.points.len());
        let n = self.n_integral;
        let integral: f64 = values[..n].iter().zip(&self.weights).map(|(f, w)| f * w).sum();
        let s = &values[n..n + 5];
        let d = self.delta;
        let f0 = s[2];
        let d1 = (s[0] - 8.0 * s[1] + 8.0 * s[3] - s[4]) / (12.0 * d);
        let d3 = (-s[0] + 2.0 * s[1] - 2.0 * s[3] + s[4]) / (2.0 * d * d * d);
        let h = self.stride;
        let first = -h / 12.0 * d1;
        let third = h * h * h / 720.0 * d3;

        let end = self.end();
        let (fa, fb) = (values[n + 5], values[n + 6]);
        let remainder = if fb > 0.0 && fa > 0.0 {
            // F(m) = f(m) m decays like m^-kappa past the end.
            let kappa = (fa * end * (-1.0f64).exp() / (fb * end)).ln();
            if kappa > 0.0 {
                fb * end / kappa / h
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        let value = integral + 0.5 * f0 + first + third + remainder;
        let error = third.abs() + 0.05 * remainder.abs() + 1e-14 * value.abs();
        TailSum { value, error }
    }
}
