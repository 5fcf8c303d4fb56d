//! Simple symmetric random walk kernels on `Z^d`, `d ≤ 3`.
//!
//! Two routes to `p(m, x) = P(Z_m = x)`:
//! * [`KernelSlab`]: iterated one-step convolution on a finite window,
//! * [`SrwKernel`]: closed forms through binomial coefficients.

use crate::error::{Error, Result};
use crate::special::{ln_half_binomial, LnFactorial};
use std::f64::consts::{LN_2, PI};

/// Lattice point; coordinates past the dimension are zero.
pub type Site = [i64; 3];

pub const MAX_DIM: usize = 3;

pub fn check_dim(d: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("dimension must be 1, 2 or 3, got {d}")))
    }
}

#[inline]
pub fn norm_sq(x: &Site) -> i64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

#[inline]
pub fn norm(x: &Site) -> f64 {
    (norm_sq(x) as f64).sqrt()
}

#[inline]
pub fn l1(x: &Site) -> i64 {
    x[0].abs() + x[1].abs() + x[2].abs()
}

#[inline]
pub fn sub(a: &Site, b: &Site) -> Site {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Site, b: &Site) -> Site {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Canonical representative under sign flips and coordinate permutations:
/// absolute values sorted in decreasing order.
pub fn canonical(x: &Site) -> Site {
    let mut a = [x[0].abs(), x[1].abs(), x[2].abs()];
    a.sort_unstable_by(|p, q| q.cmp(p));
    a
}

/// Characteristic function of one step, `(1/d) Σ cos θ_i`.
pub fn char_function(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t.cos()).sum::<f64>() / theta.len() as f64
}

/// Exact SRW probabilities on the window `[-L, L]^d`, built by convolution.
///
/// Only the non-negative orthant is stored. Mass stepping outside the window
/// is dropped and tallied in `lost_mass`, so entries are those of the walk
/// killed on leaving the window; they equal the free kernel whenever
/// `m < 2(L+1) - |x|_∞`.
#[derive(Debug, Clone)]
pub struct KernelSlab {
    d: usize,
    m_max: usize,
    radius: usize,
    table: Vec<f64>,
    lost_mass: Vec<f64>,
}

pub const DEFAULT_SLAB_CAP_BYTES: usize = 1 << 30;

impl KernelSlab {
    pub fn build(d: usize, m_max: usize, window_radius: usize) -> Result<Self> {
        Self::build_with_cap(d, m_max, window_radius, DEFAULT_SLAB_CAP_BYTES)
    }

    pub fn build_with_cap(d: usize, m_max: usize, window_radius: usize, cap_bytes: usize) -> Result<Self> {
        check_dim(d)?;
        if m_max < 1 || window_radius < 1 {
            return Err(Error::Parameter("kernel slab needs m_max >= 1 and window_radius >= 1".into()));
        }
        let side = window_radius + 1;
        let row = side.pow(d as u32);
        let bytes = (m_max + 1)
            .checked_mul(row)
            .and_then(|n| n.checked_mul(8))
            .unwrap_or(usize::MAX);
        if bytes > cap_bytes {
            return Err(Error::Sizing(format!(
                "kernel slab d={d} m_max={m_max} L={window_radius} needs {bytes} bytes, cap is {cap_bytes}"
            )));
        }
        let mut table = vec![0.0; (m_max + 1) * row];
        let mut lost = vec![0.0; m_max + 1];
        table[0] = 1.0;
        let strides: Vec<usize> = (0..d).map(|i| side.pow(i as u32)).collect();
        let weight = 1.0 / (2 * d) as f64;
        let mut coords = vec![0usize; d];
        for m in 0..m_max {
            let (head, tail) = table.split_at_mut((m + 1) * row);
            let old = &head[m * row..];
            let new = &mut tail[..row];
            let mut leak = 0.0;
            for (idx, slot) in new.iter_mut().enumerate() {
                let mut rem = idx;
                let mut mult = 1.0;
                for c in coords.iter_mut() {
                    *c = rem % side;
                    rem /= side;
                }
                let mut acc = 0.0;
                for i in 0..d {
                    let s = strides[i];
                    let xi = coords[i];
                    if xi < window_radius {
                        acc += old[idx + s];
                    }
                    acc += if xi > 0 { old[idx - s] } else { old[idx + s] };
                }
                *slot = acc * weight;
                // outward flow from the full-window images of this point
                let p = old[idx];
                if p != 0.0 {
                    let mut faces = 0;
                    for &xi in coords.iter() {
                        if xi > 0 {
                            mult *= 2.0;
                        }
                        if xi == window_radius {
                            faces += 1;
                        }
                    }
                    leak += mult * p * faces as f64 * weight;
                }
            }
            lost[m + 1] = lost[m] + leak;
        }
        Ok(Self { d, m_max, radius: window_radius, table, lost_mass: lost })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn window_radius(&self) -> usize {
        self.radius
    }

    pub fn lost_mass(&self, m: usize) -> f64 {
        self.lost_mass[m]
    }

    fn row_len(&self) -> usize {
        (self.radius + 1).pow(self.d as u32)
    }

    /// `p(m, x)` for the killed walk; zero outside the window.
    pub fn get(&self, m: usize, x: &Site) -> f64 {
        let side = self.radius + 1;
        let mut idx = 0;
        let mut stride = 1;
        for &c in x.iter().take(self.d) {
            let a = c.unsigned_abs() as usize;
            if a > self.radius {
                return 0.0;
            }
            idx += a * stride;
            stride *= side;
        }
        if x.iter().skip(self.d).any(|&c| c != 0) {
            return 0.0;
        }
        self.table[m * self.row_len() + idx]
    }

    /// Total mass inside the window at step `m`.
    pub fn window_mass(&self, m: usize) -> f64 {
        let side = self.radius + 1;
        let row = &self.table[m * self.row_len()..(m + 1) * self.row_len()];
        row.iter()
            .enumerate()
            .map(|(idx, p)| {
                let mut rem = idx;
                let mut mult = 1.0;
                for _ in 0..self.d {
                    if rem % side > 0 {
                        mult *= 2.0;
                    }
                    rem /= side;
                }
                mult * p
            })
            .sum()
    }

    /// Whether `get(m, x)` is the free-walk probability.
    pub fn is_exact(&self, m: usize, x: &Site) -> bool {
        let inf = x.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0);
        m + inf < 2 * (self.radius + 1)
    }

    /// All stored sites of the full window, one per call, for `|x_i| ≤ L`.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let l = self.radius as i64;
        let d = self.d;
        let n = (2 * self.radius + 1).pow(d as u32);
        (0..n).map(move |mut k| {
            let mut s = [0i64; 3];
            for c in s.iter_mut().take(d) {
                *c = (k % (2 * l as usize + 1)) as i64 - l;
                k /= 2 * l as usize + 1;
            }
            s
        })
    }
}

/// Closed-form SRW kernel.
///
/// `d = 1`: a ±1 walk. `d = 2`: the rotated coordinates `x+y`, `x-y` are
/// independent ±1 walks. `d = 3`: condition on the number of steps taken
/// along the first axis.
#[derive(Debug, Clone)]
pub struct SrwKernel {
    d: usize,
    lf: LnFactorial,
}

impl SrwKernel {
    pub fn new(d: usize, m_max: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self { d, lf: LnFactorial::new(m_max.max(1)) })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn m_max(&self) -> usize {
        self.lf.max()
    }

    /// `C(m, (m+j)/2) 2^{-m}`, the law of a one-dimensional ±1 walk.
    #[inline]
    pub fn line_prob(&self, m: usize, j: i64) -> f64 {
        self.lf.ln_half_binomial(m, j).map_or(0.0, f64::exp)
    }

    #[inline]
    fn ln_planar(&self, m: usize, x: i64, y: i64) -> Option<f64> {
        Some(self.lf.ln_half_binomial(m, x + y)? + self.lf.ln_half_binomial(m, x - y)?)
    }

    /// Exact `P(Z_m = x)` for integer `m ≤ m_max`.
    pub fn prob(&self, m: usize, x: &Site) -> f64 {
        match self.d {
            1 => self.lf.ln_half_binomial(m, x[0]).map_or(0.0, f64::exp),
            2 => self.ln_planar(m, x[0], x[1]).map_or(0.0, f64::exp),
            _ => self.prob3(m, x),
        }
    }

    fn prob3(&self, m: usize, x: &Site) -> f64 {
        let a = x[0].unsigned_abs() as usize;
        let rest = (x[1].abs() + x[2].abs()) as usize;
        if a + rest > m || (m + a + rest) % 2 == 1 {
            return 0.0;
        }
        let mf = m as f64;
        let sigma = (2.0 * mf).sqrt() / 3.0;
        let lo = ((mf / 3.0 - 10.0 * sigma - 2.0).floor().max(0.0) as usize).max(a);
        let hi = ((mf / 3.0 + 10.0 * sigma + 2.0).ceil() as usize).min(m - rest);
        let base = -(mf) * 3f64.ln();
        let term = |k: usize| match (self.lf.ln_half_binomial(k, x[0]), self.ln_planar(m - k, x[1], x[2])) {
            (Some(p1), Some(p2)) => (self.lf.ln_choose(m, k) + base + (m - k) as f64 * LN_2 + p1 + p2).exp(),
            _ => 0.0,
        };
        let lo = if (lo + a) % 2 == 0 { lo } else { lo + 1 };
        let mut sum = 0.0;
        let mut k = lo;
        while k <= hi {
            sum += term(k);
            k += 2;
        }
        // widen while the edge terms still matter; far from the origin the
        // mass in k drifts away from m/3
        let mut up = k;
        while up <= m - rest {
            let t = term(up);
            sum += t;
            if sum > 0.0 && t <= 1e-18 * sum {
                break;
            }
            up += 2;
        }
        let mut down = lo;
        while down >= a + 2 {
            down -= 2;
            let t = term(down);
            sum += t;
            if sum > 0.0 && t <= 1e-18 * sum {
                break;
            }
        }
        sum
    }

    /// Smooth continuation in real `m` along the parity class of `x`.
    ///
    /// Exact at integers for `d ≤ 2`; the local limit approximation for `d = 3`.
    pub fn prob_real(&self, m: f64, x: &Site) -> f64 {
        match self.d {
            1 => ln_half_binomial(m, x[0] as f64).exp(),
            2 => (ln_half_binomial(m, (x[0] + x[1]) as f64) + ln_half_binomial(m, (x[0] - x[1]) as f64)).exp(),
            _ => local_limit(3, m, x),
        }
    }

    pub fn has_exact_continuation(&self) -> bool {
        self.d <= 2
    }
}

/// Local limit approximation `2 (d/(2πm))^{d/2} e^{-d|x|²/(2m)}` on the
/// correct parity class.
pub fn local_limit(d: usize, m: f64, x: &Site) -> f64 {
    let df = d as f64;
    2.0 * (df / (2.0 * PI * m)).powf(df / 2.0) * (-df * norm_sq(x) as f64 / (2.0 * m)).exp()
}

/// `sup_m max_y p(m, y) m^{d/2}` over `m ≤ m_max`, attained at the origin or a
/// neighbour of it.
pub fn kernel_peak_constant(kernel: &SrwKernel, m_max: usize) -> f64 {
    let d = kernel.dim() as i32;
    (1..=m_max)
        .map(|m| {
            let y = if m % 2 == 0 { [0, 0, 0] } else { [1, 0, 0] };
            kernel.prob(m, &y) * (m as f64).powf(d as f64 / 2.0)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBoundReport {
    /// `C'` in `p(m,z) ≤ C' m^{-d/2} e^{-|z|²/(C m)}`.
    pub upper_prefactor: f64,
    /// `C` in the same bound.
    pub upper_scale: f64,
    pub upper_violations: usize,
    /// Lower constant on even points with `|z| ≤ m^0.6`.
    pub lower_even: f64,
    /// The same at the wider range `|z| ≤ m^0.65`.
    pub lower_even_wide: f64,
    /// Lower constant on odd points with `|z| ≤ m^0.5`.
    pub lower_odd: f64,
    pub lower_violations: usize,
    pub parity_violations: usize,
    pub entries_checked: usize,
}

/// Fits and checks the Gaussian upper and lower bounds on every exact entry.
pub fn gaussian_bound_check(slab: &KernelSlab) -> GaussianBoundReport {
    let d = slab.dim();
    let half_d = d as f64 / 2.0;
    let df = d as f64;
    let sites: Vec<Site> = slab.sites().collect();
    let mut sup = 0.0f64;
    let mut parity_violations = 0;
    let mut checked = 0;
    for m in 1..=slab.m_max() {
        for x in &sites {
            if !slab.is_exact(m, x) {
                continue;
            }
            let p = slab.get(m, x);
            checked += 1;
            if (m as i64 + l1(x)) % 2 == 1 && p != 0.0 {
                parity_violations += 1;
            }
            sup = sup.max(p * (m as f64).powf(half_d));
        }
    }
    let prefactor = 2.0 * sup;
    let mut scale = 0.0f64;
    for m in 1..=slab.m_max() {
        for x in &sites {
            let p = slab.get(m, x);
            if !slab.is_exact(m, x) || p == 0.0 || norm_sq(x) == 0 {
                continue;
            }
            let r = prefactor / (p * (m as f64).powf(half_d));
            scale = scale.max(norm_sq(x) as f64 / (m as f64 * r.ln()));
        }
    }
    let mut upper_violations = 0;
    let mut lower_even = f64::INFINITY;
    let mut lower_even_wide = f64::INFINITY;
    let mut lower_odd = f64::INFINITY;
    let mut lower_violations = 0;
    for m in 1..=slab.m_max() {
        let mf = m as f64;
        for x in &sites {
            if !slab.is_exact(m, x) {
                continue;
            }
            let p = slab.get(m, x);
            let r2 = norm_sq(x) as f64;
            let bound = prefactor * mf.powf(-half_d) * (-r2 / (scale * mf)).exp();
            if p > bound * (1.0 + 1e-12) {
                upper_violations += 1;
            }
            let r = r2.sqrt();
            let z_parity = l1(x) % 2;
            if z_parity != (m % 2) as i64 {
                continue;
            }
            if z_parity == 0 {
                let scaled = p * mf.powf(half_d) * (df * r2 / (2.0 * mf)).exp();
                if r <= mf.powf(0.6) {
                    if p == 0.0 {
                        lower_violations += 1;
                    }
                    lower_even = lower_even.min(scaled);
                }
                if r <= mf.powf(0.65) {
                    lower_even_wide = lower_even_wide.min(scaled);
                }
            } else if r <= mf.sqrt() {
                if p == 0.0 {
                    lower_violations += 1;
                }
                lower_odd = lower_odd.min(p * mf.powf(half_d) * (r2 / mf).exp());
            }
        }
    }
    GaussianBoundReport {
        upper_prefactor: prefactor,
        upper_scale: scale,
        upper_violations,
        lower_even,
        lower_even_wide,
        lower_odd,
        lower_violations,
        parity_violations,
        entries_checked: checked,
    }
}
