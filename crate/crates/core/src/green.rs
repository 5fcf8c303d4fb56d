//! Whole-space Green function `G(x) = Σ_m c(m) p(m, x)` and the transience
//! criterion.

use crate::band::Band;
use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::lattice::{canonical, check_dim, norm, Site, SrwKernel};
use crate::quadrature::{gauss_legendre, TailGrid};
use crate::subordination::{lclt_error_constant, RenewalContinuation, StepLaw, SubordinationWeights};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

pub const DEFAULT_SCALING_GRID: usize = 64;
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-4;
pub const TRANSIENCE_DELTA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceReport {
    pub d: usize,
    pub gamma2: f64,
    pub transient: bool,
    /// `∫_{(-δ,δ)^d} dθ / φ(1 - φ_Y(θ))`; infinite when the shells do not contract.
    pub integral: f64,
    /// Ratio of successive dyadic shell contributions near the origin.
    pub shell_ratio: f64,
    pub shells: usize,
}

impl TransienceReport {
    pub fn require(&self) -> Result<()> {
        if self.transient {
            Ok(())
        } else {
            Err(Error::Recurrent(format!("gamma2 = {:.4} >= d/2 = {} in d = {}", self.gamma2, self.d as f64 / 2.0, self.d)))
        }
    }
}

/// Verdict from the upper scaling exponent alone.
pub fn transience_verdict(spec: &BernsteinSpec, d: usize) -> Result<(f64, bool)> {
    check_dim(d)?;
    let g2 = spec.estimate_scaling(DEFAULT_SCALING_GRID)?.gamma2;
    Ok((g2, g2 < d as f64 / 2.0))
}

pub fn transience_check(spec: &BernsteinSpec, d: usize) -> Result<TransienceReport> {
    let (gamma2, transient) = transience_verdict(spec, d)?;
    let (integral, shell_ratio, shells) = transience_integral(spec, d, TRANSIENCE_DELTA);
    Ok(TransienceReport { d, gamma2, transient, integral, shell_ratio, shells })
}

/// Integrates over the L∞ shells `δ 2^{-k-1} ≤ |θ|_∞ ≤ δ 2^{-k}` and
/// extrapolates the geometric remainder. Returns (value, shell ratio, shells).
pub fn transience_integral(spec: &BernsteinSpec, d: usize, delta: f64) -> (f64, f64, usize) {
    let (gx, gw) = gauss_legendre(8);
    let df = d as f64;
    let integrand = |theta: &[f64]| {
        let gap = 2.0 / df * theta.iter().map(|t| (0.5 * t).sin().powi(2)).sum::<f64>();
        1.0 / spec.phi_unchecked(gap)
    };
    // subcubes of side s/2 tiling [-s, s]^d minus the central [-s/2, s/2]^d
    let shell = |s: f64| {
        let h = 0.5 * s;
        let mut total = 0.0;
        let n_cells = 4usize.pow(d as u32);
        let mut theta = vec![0.0; d];
        for cell in 0..n_cells {
            let mut c = cell;
            let mut lows = [0.0; 3];
            let mut central = true;
            for low in lows.iter_mut().take(d) {
                let k = c % 4;
                c /= 4;
                central &= k == 1 || k == 2;
                *low = -s + k as f64 * h;
            }
            if central {
                continue;
            }
            let n_nodes = gx.len().pow(d as u32);
            for node in 0..n_nodes {
                let mut r = node;
                let mut w = 1.0;
                for (i, th) in theta.iter_mut().enumerate() {
                    let j = r % gx.len();
                    r /= gx.len();
                    *th = lows[i] + 0.5 * h * (1.0 + gx[j]);
                    w *= 0.5 * h * gw[j];
                }
                total += w * integrand(&theta);
            }
        }
        total
    };
    let mut sum = 0.0;
    let mut prev = f64::NAN;
    let mut ratio = f64::NAN;
    for k in 0..200 {
        let ik = shell(delta * 0.5f64.powi(k));
        sum += ik;
        if k > 0 {
            ratio = ik / prev;
        }
        prev = ik;
        if k >= 12 {
            if ratio >= 0.95 {
                return (f64::INFINITY, ratio, k as usize + 1);
            }
            let rest = ik * ratio / (1.0 - ratio);
            if rest < 1e-13 * sum {
                return (sum + rest, ratio, k as usize + 1);
            }
        }
    }
    let rest = prev * ratio / (1.0 - ratio);
    (sum + rest, ratio, 200)
}

/// Series evaluation of `G` at single points.
pub struct GreenEvaluator<'a> {
    w: &'a SubordinationWeights,
    kernel: &'a SrwKernel,
    continuation: RenewalContinuation,
    continuation_deviation: f64,
    // even and odd parity tail grids with c(m) at the abscissae
    grids: Vec<(TailGrid, Vec<f64>)>,
    lclt_constant: f64,
}

impl<'a> GreenEvaluator<'a> {
    pub fn new(w: &'a SubordinationWeights, kernel: &'a SrwKernel, lclt_sites: &[Site]) -> Result<Self> {
        let m_max = w.truncation_m;
        if kernel.m_max() < m_max {
            return Err(Error::Sizing(format!(
                "kernel tables reach m = {}, truncation needs M = {m_max}",
                kernel.m_max()
            )));
        }
        let d = kernel.dim();
        let (gamma2, transient) = transience_verdict(&w.spec, d)?;
        if !transient {
            return Err(Error::Recurrent(format!("gamma2 = {gamma2:.4} >= d/2 = {} in d = {d}", d as f64 / 2.0)));
        }
        let continuation = RenewalContinuation::for_spec(&w.spec);
        let continuation_deviation = continuation.max_deviation(&w.c_renewal);
        let grids = [m_max + 2 - (m_max % 2), m_max + 1 + (m_max % 2)]
            .iter()
            .map(|&start| {
                let g = TailGrid::new(start as f64, 2.0);
                let c = g.points().iter().map(|&m| continuation.eval(m)).collect();
                (g, c)
            })
            .collect();
        let lclt_constant = if kernel.dim() == 3 {
            lclt_error_constant(kernel, lclt_sites, m_max / 2, m_max)
        } else {
            0.0
        };
        Ok(Self { w, kernel, continuation, continuation_deviation, grids, lclt_constant })
    }

    pub fn continuation(&self) -> &RenewalContinuation {
        &self.continuation
    }

    pub fn continuation_deviation(&self) -> f64 {
        self.continuation_deviation
    }

    /// `(G(x), tail bound)`.
    pub fn eval(&self, x: &Site) -> (f64, f64) {
        let m_max = self.w.truncation_m;
        let l1: i64 = x.iter().map(|c| c.abs()).sum();
        let parity = (l1 % 2) as usize;
        let head: f64 = (l1 as usize..=m_max)
            .step_by(2)
            .map(|m| self.w.c_renewal[m] * self.kernel.prob(m, x))
            .sum();
        let (grid, c) = &self.grids[parity];
        let f: Vec<f64> = grid.points().iter().zip(c).map(|(&m, &cv)| cv * self.kernel.prob_real(m, x)).collect();
        let tail = grid.sum(&f);
        let mut bound = tail.error + self.continuation_deviation * tail.value;
        if self.lclt_constant > 0.0 {
            let g: Vec<f64> = grid.points().iter().zip(c).map(|(&m, &cv)| cv * m.powf(-2.5)).collect();
            bound += self.lclt_constant * grid.sum(&g).value;
        }
        (head + tail.value, bound)
    }
}

#[derive(Debug, Clone)]
pub struct GreenTable {
    d: usize,
    radius: usize,
    values: HashMap<Site, (f64, f64)>,
    pub truncation_m: usize,
    pub continuation_deviation: f64,
}

fn canonical_cube(d: usize, r: i64) -> Vec<Site> {
    let mut out = Vec::new();
    for a in 0..=r {
        for b in 0..=if d >= 2 { a } else { 0 } {
            for c in 0..=if d >= 3 { b } else { 0 } {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// `G` on the cube `[-radius, radius]^d`; refuses when a tail bound exceeds
/// `tail_tolerance · G`.
pub fn green_series(w: &SubordinationWeights, kernel: &SrwKernel, radius: usize, tail_tolerance: f64) -> Result<GreenTable> {
    let d = kernel.dim();
    let sites = canonical_cube(d, radius as i64);
    let ev = GreenEvaluator::new(w, kernel, &sites)?;
    let vals: Vec<(f64, f64)> = sites.par_iter().map(|x| ev.eval(x)).collect();
    let worst = sites
        .iter()
        .zip(&vals)
        .map(|(x, (g, t))| (t / g, *x))
        .fold((0.0, [0i64; 3]), |a, b| if b.0 > a.0 { b } else { a });
    if !(worst.0 < tail_tolerance) {
        return Err(Error::Truncation(format!(
            "green tail bound at {:?} is {:.2e} of G (tolerance {tail_tolerance:.0e}); raise M",
            worst.1, worst.0
        )));
    }
    Ok(GreenTable {
        d,
        radius,
        values: sites.into_iter().zip(vals).collect(),
        truncation_m: w.truncation_m,
        continuation_deviation: ev.continuation_deviation(),
    })
}

impl GreenTable {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn get(&self, x: &Site) -> Option<f64> {
        self.values.get(&canonical(x)).map(|v| v.0)
    }

    pub fn tail_bound(&self, x: &Site) -> Option<f64> {
        self.values.get(&canonical(x)).map(|v| v.1)
    }

    /// Canonical representatives `(x, G(x), tail bound)`, sorted.
    pub fn entries(&self) -> Vec<(Site, f64, f64)> {
        let mut v: Vec<_> = self.values.iter().map(|(x, (g, t))| (*x, *g, *t)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn max_relative_tail(&self) -> f64 {
        self.values.values().map(|(g, t)| t / g).fold(0.0, f64::max)
    }

    /// Band of `G(x) / g(|x|)` over `r_lo ≤ |x| ≤ r_hi`.
    pub fn band(&self, spec: &BernsteinSpec, r_lo: f64, r_hi: f64) -> Band {
        Band::from_values(self.values.iter().filter_map(|(x, (g, _))| {
            let r = norm(x);
            (r >= r_lo && r <= r_hi).then(|| g / spec.green_profile(r, self.d).unwrap_or(f64::NAN))
        }))
    }

    /// Largest `G` over table points with `|y|_∞ ≥ r`.
    pub fn sup_beyond(&self, r: i64) -> f64 {
        self.values
            .iter()
            .filter(|(x, _)| x[0] >= r)
            .map(|(_, v)| v.0)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicityReport {
    pub points: usize,
    /// Distance of the target value (−1 at 0, else 0) from the certified bracket.
    pub max_miss: f64,
    pub max_width: f64,
    /// `(AG)(0)` from the known part of the step law.
    pub origin_value: f64,
}

/// Checks `(AG)(x) = -δ_0(x)` for `|x|_∞ ≤ reach`.
///
/// The unassigned step mass lands outside the step-law window, where `G` lies
/// between 0 and its sup there; that brackets the full generator.
pub fn harmonicity_check(table: &GreenTable, law: &StepLaw, reach: usize) -> Result<HarmonicityReport> {
    let d = table.dim();
    let l = law.support_radius();
    if reach + l > table.radius() {
        return Err(Error::Sizing(format!(
            "harmonicity at reach {reach} with step support {l} needs a green table of radius {}",
            reach + l
        )));
    }
    let jumps: Vec<(Site, f64)> = law.jumps().collect();
    let g_max = table.get(&[0, 0, 0]).unwrap_or(0.0);
    let r = reach as i64;
    let mut xs = Vec::new();
    for a in -r..=r {
        for b in if d >= 2 { -r..=r } else { 0..=0 } {
            for c in if d >= 3 { -r..=r } else { 0..=0 } {
                xs.push([a, b, c]);
            }
        }
    }
    let rows: Vec<(f64, f64, f64)> = xs
        .par_iter()
        .map(|x| {
            let gx = table.get(x).unwrap();
            let tx = table.tail_bound(x).unwrap();
            let mut known = -law.unassigned_mass * gx;
            let mut err = law.tail_error * g_max;
            for (z, p) in &jumps {
                let y = [x[0] + z[0], x[1] + z[1], x[2] + z[2]];
                known += p * (table.get(&y).unwrap() - gx);
                err += p * (table.tail_bound(&y).unwrap() + tx);
            }
            let inf_norm = x.iter().map(|c| c.abs()).max().unwrap();
            let sup_out = table.sup_beyond(l as i64 + 1 - inf_norm);
            let lo = known - err;
            let hi = known + law.unassigned_mass * sup_out + err;
            let target = if x.iter().all(|&c| c == 0) { -1.0 } else { 0.0 };
            let miss = if target < lo { lo - target } else if target > hi { target - hi } else { 0.0 };
            (miss, hi - lo, known)
        })
        .collect();
    let origin = xs.iter().position(|x| x.iter().all(|&c| c == 0)).unwrap();
    Ok(HarmonicityReport {
        points: xs.len(),
        max_miss: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_width: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        origin_value: rows[origin].2,
    })
}
