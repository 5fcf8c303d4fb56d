//! Subordination weights `c_m`, renewal weights `c(m)` and the one-step law
//! `P(X_1 = z) = Σ_m c_m p(m, z)`.

use crate::band::Band;
use crate::bernstein::{BernsteinSpec, Family};
use crate::error::{Error, Result};
use crate::lattice::{canonical, local_limit, norm, norm_sq, Site, SrwKernel};
use crate::quadrature::{poisson_transform, TailGrid, TailSum};
use crate::special::ln_gamma_ratio;
use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};
use std::collections::HashMap;

pub const DEFAULT_TRUNCATION: usize = 4000;
pub const DEFAULT_TAIL_TARGET: f64 = 1e-6;
const CM_REL_TOL: f64 = 1e-12;

/// `c_m = (1/m!) ∫ t^m e^{-t} μ(t) dt`, continued to real `m ≥ 1`.
pub fn cm_at(spec: &BernsteinSpec, m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("c_m needs m >= 1, got {m}")));
    }
    Ok(poisson_transform(m, |s| spec.ln_levy_density(s), None, CM_REL_TOL)?.value)
}

/// `c_1, ..., c_M`; index 0 holds 0.
pub fn compute_cm(spec: &BernsteinSpec, m_max: usize) -> Result<Vec<f64>> {
    if m_max < 1 {
        return Err(Error::Parameter("truncation M must be at least 1".into()));
    }
    let mut cm = vec![0.0];
    cm.extend(
        (1..=m_max)
            .into_par_iter()
            .map(|m| cm_at(spec, m as f64))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(cm)
}

/// Renewal weights `c(0) = 1`, `c(m) = Σ_{k=1}^m c_k c(m-k)`.
pub fn compute_c_renewal(cm: &[f64], m_max: usize) -> Vec<f64> {
    let mut c = vec![0.0; m_max + 1];
    c[0] = 1.0;
    for m in 1..=m_max {
        c[m] = (1..=m).map(|k| cm[k] * c[m - k]).sum();
    }
    c
}

/// `c(m) = (1/m!) ∫ t^m e^{-t} u(t) dt`; needs a closed-form potential density.
pub fn compute_c_integral(spec: &BernsteinSpec, m_max: usize) -> Result<Vec<f64>> {
    let ln_u = spec
        .ln_potential_density_fn()
        .ok_or_else(|| Error::Unavailable(format!("no closed-form potential density for {}", spec.family())))?;
    (0..=m_max)
        .into_par_iter()
        .map(|m| Ok(poisson_transform(m as f64, &ln_u, None, CM_REL_TOL)?.value))
        .collect()
}

/// `Σ_{m ≥ start, m ≡ start (mod stride)} c_m` by Euler-Maclaurin over the
/// continued `c_m`.
pub fn cm_tail(spec: &BernsteinSpec, start: usize, stride: usize) -> Result<TailSum> {
    let grid = TailGrid::new(start as f64, stride as f64);
    let vals = grid
        .points()
        .par_iter()
        .map(|&m| cm_at(spec, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(grid.sum(&vals))
}

#[derive(Debug, Clone)]
pub struct SubordinationWeights {
    pub spec: BernsteinSpec,
    /// `c_m` for `m = 0..=M`, with `cm[0] = 0`.
    pub cm: Vec<f64>,
    pub c_renewal: Vec<f64>,
    pub c_integral: Option<Vec<f64>>,
    pub truncation_m: usize,
    /// `1 - Σ_{m ≤ M} c_m`.
    pub tail_mass: f64,
    /// `Σ_{m > M} c_m` summed over the continued weights.
    pub continued_tail: TailSum,
    /// Mass carried by neither the table nor the continuation.
    pub unaccounted_mass: f64,
}

impl SubordinationWeights {
    pub fn compute(spec: &BernsteinSpec, m_max: usize, tail_target: f64) -> Result<Self> {
        let cm = compute_cm(spec, m_max)?;
        let c_renewal = compute_c_renewal(&cm, m_max);
        let c_integral = match compute_c_integral(spec, m_max) {
            Ok(v) => Some(v),
            Err(Error::Unavailable(_)) => None,
            Err(e) => return Err(e),
        };
        let tail_mass = 1.0 - cm.iter().sum::<f64>();
        let continued_tail = cm_tail(spec, m_max + 1, 1)?;
        let unaccounted_mass = (tail_mass - continued_tail.value).abs() + continued_tail.error;
        if !(unaccounted_mass < tail_target) {
            return Err(Error::Truncation(format!(
                "{}: weight mass unaccounted after M = {m_max} is {unaccounted_mass:.3e} (target {tail_target:.1e}); \
                 raise M",
                spec.family()
            )));
        }
        Ok(Self { spec: spec.clone(), cm, c_renewal, c_integral, truncation_m: m_max, tail_mass, continued_tail, unaccounted_mass })
    }

    /// Largest relative gap between the renewal and integral routes.
    pub fn integral_deviation(&self) -> Option<f64> {
        self.c_integral.as_ref().map(|ci| {
            ci.iter()
                .zip(&self.c_renewal)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max)
        })
    }
}

/// Band of `c_m m / φ(1/m)` over `m_lo ≤ m ≤ m_hi`.
pub fn cm_asymptotic_report(w: &SubordinationWeights, m_lo: usize, m_hi: usize) -> Band {
    let hi = m_hi.min(w.truncation_m);
    Band::from_values((m_lo..=hi).map(|m| {
        let mf = m as f64;
        w.cm[m] * mf / w.spec.phi_unchecked(1.0 / mf)
    }))
}

/// Band of `c(m) m φ(1/m)` over `m_lo ≤ m ≤ m_hi`.
pub fn renewal_asymptotic_report(w: &SubordinationWeights, m_lo: usize, m_hi: usize) -> Band {
    let hi = m_hi.min(w.truncation_m);
    Band::from_values((m_lo..=hi).map(|m| {
        let mf = m as f64;
        w.c_renewal[m] * mf * w.spec.phi_unchecked(1.0 / mf)
    }))
}

/// Large-`m` form of the renewal weights, read off the singularity of
/// `Σ c(m) s^m = 1/φ(1-s)` at `s = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum RenewalContinuation {
    /// `Γ(m+α) / (Γ(α) Γ(m+1))`, exact.
    Stable { alpha: f64 },
    /// `Σ_k a_k Γ(m+σ_k) / Γ(m+1)`.
    Expansion { terms: Vec<(f64, f64)> },
    /// `1/φ'(0)`, up to geometrically small corrections.
    Constant { value: f64 },
}

impl RenewalContinuation {
    pub fn for_spec(spec: &BernsteinSpec) -> Self {
        match spec.family() {
            Family::Stable { alpha } => Self::Stable { alpha },
            Family::StableMixture { w1, alpha1, w2, alpha2 } => {
                let (wa, a, wb, b) = if alpha1 <= alpha2 { (w1, alpha1, w2, alpha2) } else { (w2, alpha2, w1, alpha1) };
                let mut terms = Vec::new();
                let mut coef = spec.norm() / wa;
                for k in 0..40 {
                    let sigma = a - k as f64 * (b - a);
                    if sigma < -40.0 {
                        break;
                    }
                    let on_pole = sigma <= 0.0 && (sigma - sigma.round()).abs() < 1e-12;
                    if !on_pole {
                        terms.push((coef / gamma(sigma), sigma));
                    }
                    coef *= -wb / wa;
                }
                Self::Expansion { terms }
            }
            Family::Relativistic { .. } => Self::Constant { value: 1.0 / spec.phi_slope_at_zero() },
        }
    }

    pub fn eval(&self, m: f64) -> f64 {
        match self {
            Self::Stable { alpha } => (ln_gamma_ratio(m, *alpha, 1.0) - ln_gamma(*alpha)).exp(),
            Self::Expansion { terms } => terms.iter().map(|(a, s)| a * ln_gamma_ratio(m, *s, 1.0).exp()).sum(),
            Self::Constant { value } => *value,
        }
    }

    /// Largest relative gap to the renewal table over `[M/2, M]`.
    pub fn max_deviation(&self, c: &[f64]) -> f64 {
        let m_max = c.len() - 1;
        (m_max / 2..=m_max)
            .map(|m| (self.eval(m as f64) / c[m] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// One-step law on the cube `[-L, L]^d`.
#[derive(Debug, Clone)]
pub struct StepLaw {
    d: usize,
    support_radius: usize,
    probs: Vec<f64>,
    pub stay_prob: f64,
    pub unassigned_mass: f64,
    /// Accumulated error of the continued tails over the window.
    pub tail_error: f64,
    pub truncation_m: usize,
}

fn canonical_sites(d: usize, l: i64) -> Vec<Site> {
    let mut out = Vec::new();
    for a in 0..=l {
        for b in 0..=if d >= 2 { a } else { 0 } {
            for c in 0..=if d >= 3 { b } else { 0 } {
                out.push([a, b, c]);
            }
        }
    }
    out
}

impl StepLaw {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn support_radius(&self) -> usize {
        self.support_radius
    }

    fn side(&self) -> usize {
        2 * self.support_radius + 1
    }

    pub fn index(&self, z: &Site) -> Option<usize> {
        let l = self.support_radius as i64;
        let mut idx = 0;
        let mut stride = 1;
        for (i, &c) in z.iter().enumerate() {
            if i >= self.d {
                if c != 0 {
                    return None;
                }
                continue;
            }
            if c.abs() > l {
                return None;
            }
            idx += (c + l) as usize * stride;
            stride *= self.side();
        }
        Some(idx)
    }

    /// `P(X_1 = z)` including `z = 0`; zero off the window.
    pub fn prob(&self, z: &Site) -> f64 {
        self.index(z).map_or(0.0, |i| self.probs[i])
    }

    /// Dense cube of probabilities, first coordinate fastest.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Non-zero displacements with their probabilities.
    pub fn jumps(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        let l = self.support_radius as i64;
        let side = self.side();
        let d = self.d;
        self.probs.iter().enumerate().filter_map(move |(mut k, &p)| {
            let mut z = [0i64; 3];
            for c in z.iter_mut().take(d) {
                *c = (k % side) as i64 - l;
                k /= side;
            }
            (norm_sq(&z) != 0 && p > 0.0).then_some((z, p))
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.unassigned_mass
    }

    /// `Σ_{|z|_∞ ≤ r} |z|² P(X_1 = z)`.
    pub fn second_moment(&self, r: usize) -> f64 {
        self.jumps()
            .filter(|(z, _)| z.iter().all(|c| c.unsigned_abs() as usize <= r))
            .map(|(z, p)| norm_sq(&z) as f64 * p)
            .sum()
    }

    /// Band of `P(X_1 = z) / j(|z|)` over `r_lo ≤ |z| ≤ r_hi`.
    pub fn jump_band(&self, spec: &BernsteinSpec, r_lo: f64, r_hi: f64) -> Band {
        Band::from_values(self.jumps().filter_map(|(z, p)| {
            let r = norm(&z);
            (r >= r_lo && r <= r_hi).then(|| p / spec.jump_profile(r, self.d).unwrap_or(f64::NAN))
        }))
    }
}

/// `P(Z_m ∉ [-L, L]^d)` for `d ≤ 2`, without cancellation.
fn escape_probability(kernel: &SrwKernel, m: usize, l: usize) -> f64 {
    let mi = m as i64;
    let pmf = |j: i64| kernel.line_prob(m, j);
    // P(|W| > r) for the ±1 walk W
    let beyond = |r: i64| ((r + 1)..=mi).map(|j| 2.0 * pmf(j)).sum::<f64>();
    if kernel.dim() == 1 {
        return beyond(l as i64);
    }
    // inside the square iff |u| + |v| ≤ 2L for the rotated walks u, v
    let r = 2 * l as i64;
    let mut tail_gt = vec![0.0; (r + 1) as usize];
    tail_gt[r as usize] = beyond(r);
    for k in (0..r).rev() {
        tail_gt[k as usize] = tail_gt[k as usize + 1] + 2.0 * pmf(k + 1);
    }
    let inner: f64 = (-r..=r).map(|u| pmf(u) * tail_gt[(r - u.abs()) as usize]).sum();
    beyond(r) + inner
}

/// Largest `|p(m,x) - local_limit(m,x)| m^{5/2}` over sampled `m ∈ [m_lo, m_hi]`
/// and `x` in `sites` (`d = 3`).
pub fn lclt_error_constant(kernel: &SrwKernel, sites: &[Site], m_lo: usize, m_hi: usize) -> f64 {
    let step = ((m_hi - m_lo) / 16).max(1);
    let ms: Vec<usize> = (m_lo..=m_hi).step_by(step).flat_map(|m| [m, m + 1]).filter(|&m| m <= m_hi).collect();
    ms.par_iter()
        .map(|&m| {
            sites
                .iter()
                .filter(|x| (m as i64 + x.iter().sum::<i64>()) % 2 == 0)
                .map(|x| {
                    let e = (kernel.prob(m, x) - local_limit(3, m as f64, x)).abs();
                    e * (m as f64).powf(2.5)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Builds the one-step law on `[-lx, lx]^d`.
///
/// The sum over `m ≤ M` uses exact kernel values. The remainder `m > M` is
/// summed by Euler-Maclaurin over the continued `c_m` and the real-`m`
/// kernel (the local limit form in `d = 3`, with a measured error constant).
/// For `d ≤ 2` the mass leaving the window is computed on its own, so the
/// total-mass identity is a genuine check; for `d = 3` it is the remainder.
pub fn build_step_law(w: &SubordinationWeights, kernel: &SrwKernel, lx: usize) -> Result<StepLaw> {
    let m_max = w.truncation_m;
    if kernel.m_max() < m_max {
        return Err(Error::Sizing(format!(
            "kernel tables reach m = {}, truncation needs M = {m_max}",
            kernel.m_max()
        )));
    }
    if lx < 1 {
        return Err(Error::Parameter("step law support radius must be at least 1".into()));
    }
    let d = kernel.dim();
    let l = lx as i64;
    let sites = canonical_sites(d, l);

    let grids: Vec<(TailGrid, Vec<f64>)> = [m_max + 2 - (m_max % 2), m_max + 1 + (m_max % 2)]
        .iter()
        .map(|&start| {
            let g = TailGrid::new(start as f64, 2.0);
            let c = g.points().par_iter().map(|&m| cm_at(&w.spec, m)).collect::<Result<Vec<_>>>()?;
            Ok((g, c))
        })
        .collect::<Result<_>>()?;
    // grids[0] covers even m, grids[1] odd m
    let lclt_constant = if d == 3 { lclt_error_constant(kernel, &sites, m_max / 2, m_max) } else { 0.0 };
    let lclt_bound = lclt_constant * (m_max as f64).powf(-2.5) * w.continued_tail.value;

    let values: Vec<(f64, TailSum)> = sites
        .par_iter()
        .map(|z| {
            let parity = (z.iter().sum::<i64>() % 2) as usize;
            let first = (z.iter().sum::<i64>() as usize).max(1);
            let first = if (first + parity) % 2 == 1 { first + 1 } else { first };
            let head: f64 = (first..=m_max).step_by(2).map(|m| w.cm[m] * kernel.prob(m, z)).sum();
            let (grid, c) = &grids[parity];
            let f: Vec<f64> = grid.points().iter().zip(c).map(|(&m, &cv)| cv * kernel.prob_real(m, z)).collect();
            let mut tail = grid.sum(&f);
            tail.error += lclt_bound;
            (head + tail.value, tail)
        })
        .collect();

    let lookup: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let side = 2 * lx + 1;
    let n = side.pow(d as u32);
    let mut probs = vec![0.0; n];
    let mut tail_total = 0.0;
    let mut tail_error = 0.0;
    for (k, slot) in probs.iter_mut().enumerate() {
        let mut z = [0i64; 3];
        let mut r = k;
        for c in z.iter_mut().take(d) {
            *c = (r % side) as i64 - l;
            r /= side;
        }
        let (p, t) = &values[lookup[&canonical(&z)]];
        *slot = *p;
        tail_total += t.value;
        tail_error += t.error;
    }
    let origin = [0i64; 3];
    let mut law = StepLaw { d, support_radius: lx, probs, stay_prob: 0.0, unassigned_mass: 0.0, tail_error, truncation_m: m_max };
    law.stay_prob = law.prob(&origin);

    law.unassigned_mass = if d <= 2 {
        let head_out: f64 = (1..=m_max)
            .into_par_iter()
            .map(|m| w.cm[m] * escape_probability(kernel, m, lx))
            .collect::<Vec<_>>()
            .iter()
            .sum();
        head_out + w.continued_tail.value - tail_total
    } else {
        1.0 - law.probs.iter().sum::<f64>()
    };
    Ok(law)
}
