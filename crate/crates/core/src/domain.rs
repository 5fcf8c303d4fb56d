//! Potential theory on finite sets: the killed transition matrix, ball Green
//! function, exit times, Poisson kernel, harmonic extension and Harnack ratios.

use crate::band::Band;
use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::lattice::{check_dim, norm, sub, Site};
use crate::subordination::StepLaw;
use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

pub const DEFAULT_BALL_CAP: usize = 10_000;
pub const DEFAULT_A: f64 = 0.3;
pub const DEFAULT_B1: f64 = 1.0 / 12.0;
pub const DEFAULT_B2: f64 = 1.0 / 6.0;

#[derive(Debug, Clone)]
pub struct FiniteDomain {
    d: usize,
    center: Site,
    n: f64,
    points: Vec<Site>,
    index: HashMap<Site, usize>,
}

impl FiniteDomain {
    /// `B(center, n) = {y : |y - center| < n}`.
    pub fn ball(d: usize, center: Site, n: f64) -> Result<Self> {
        Self::ball_with_cap(d, center, n, DEFAULT_BALL_CAP)
    }

    pub fn ball_with_cap(d: usize, center: Site, n: f64, cap: usize) -> Result<Self> {
        check_dim(d)?;
        if !(n >= 1.0) {
            return Err(Error::Parameter(format!("ball radius must be at least 1, got {n}")));
        }
        let r = n.ceil() as i64;
        let span = |i: usize| if i < d { -r..=r } else { 0..=0 };
        let mut points = Vec::new();
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    if ((a * a + b * b + c * c) as f64) < n * n {
                        points.push([center[0] + a, center[1] + b, center[2] + c]);
                    }
                }
            }
        }
        if points.len() > cap {
            return Err(Error::Sizing(format!("ball of radius {n} in d = {d} has {} points, cap is {cap}", points.len())));
        }
        let index = points.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        Ok(Self { d, center, n, points, index })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn center(&self) -> Site {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Site] {
        &self.points
    }

    pub fn index_of(&self, y: &Site) -> Option<usize> {
        self.index.get(y).copied()
    }

    pub fn contains(&self, y: &Site) -> bool {
        self.index.contains_key(y)
    }

    fn dist(&self, i: usize) -> f64 {
        norm(&sub(&self.points[i], &self.center))
    }

    /// Indices of `B(center, r)`.
    pub fn within(&self, r: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.dist(i) < r).collect()
    }

    /// Indices of the annulus `A(r, s) = {r ≤ |y - center| < s}`.
    pub fn annulus(&self, r: f64, s: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| (r..s).contains(&self.dist(i))).collect()
    }

    /// Exterior points `z ∉ B` with `|z - center| ≤ r`.
    pub fn exterior_within(&self, r: f64) -> Vec<Site> {
        let k = r.floor() as i64;
        let span = |i: usize| if i < self.d { -k..=k } else { 0..=0 };
        let mut out = Vec::new();
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let rr = ((a * a + b * b + c * c) as f64).sqrt();
                    if rr >= self.n && rr <= r {
                        out.push([self.center[0] + a, self.center[1] + b, self.center[2] + c]);
                    }
                }
            }
        }
        out
    }
}

pub struct DomainSolution {
    pub domain: FiniteDomain,
    p_b: Mat<f64>,
    llt: Llt<f64>,
    pub eta: Vec<f64>,
    /// `1 - Σ_y P_B(x, y)` per row.
    pub defect: Vec<f64>,
}

impl std::fmt::Debug for DomainSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainSolution").field("size", &self.domain.len()).finish()
    }
}

fn max_coordinate_spread(points: &[Site]) -> i64 {
    (0..3)
        .map(|i| {
            let lo = points.iter().map(|p| p[i]).min().unwrap_or(0);
            let hi = points.iter().map(|p| p[i]).max().unwrap_or(0);
            hi - lo
        })
        .max()
        .unwrap_or(0)
}

/// Factorizes `I - P_B` and solves for the exit times.
pub fn solve_green_ball(domain: FiniteDomain, law: &StepLaw) -> Result<DomainSolution> {
    if law.dim() != domain.dim() {
        return Err(Error::Parameter("step law and domain dimensions differ".into()));
    }
    let spread = max_coordinate_spread(domain.points());
    if spread > law.support_radius() as i64 {
        return Err(Error::Sizing(format!(
            "step law support {} does not cover displacements of {spread} inside the domain",
            law.support_radius()
        )));
    }
    let pts = domain.points();
    let n = pts.len();
    let p_b = Mat::from_fn(n, n, |i, j| law.prob(&sub(&pts[j], &pts[i])));
    let defect: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| p_b[(i, j)]).sum::<f64>()).collect();
    let a = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - p_b[(i, j)]);
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Singular(format!("I - P_B is not positive definite on {n} points: {e:?}")))?;
    let mut rhs = Mat::from_fn(n, 1, |_, _| 1.0);
    llt.solve_in_place(rhs.as_mut());
    let eta = (0..n).map(|i| rhs[(i, 0)]).collect();
    Ok(DomainSolution { domain, p_b, llt, eta, defect })
}

impl DomainSolution {
    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.p_b[(i, j)]
    }

    /// `(I - P_B)^{-1}` applied to each right-hand side.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        self.llt.solve_in_place(m.as_mut());
        (0..rhs.len()).map(|j| (0..n).map(|i| m[(i, j)]).collect()).collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve_many(&[rhs.to_vec()]).pop().unwrap()
    }

    /// Columns `G_B(·, y)`, which by symmetry are also the rows `G_B(y, ·)`.
    pub fn green_columns(&self, ys: &[usize]) -> Vec<Vec<f64>> {
        let n = self.len();
        let rhs: Vec<Vec<f64>> = ys
            .iter()
            .map(|&y| {
                let mut e = vec![0.0; n];
                e[y] = 1.0;
                e
            })
            .collect();
        self.solve_many(&rhs)
    }

    /// `max |(I - P_B) v - rhs|`.
    pub fn residual(&self, v: &[f64], rhs: &[f64]) -> f64 {
        let n = self.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let pv: f64 = (0..n).map(|j| self.p_b[(i, j)] * v[j]).sum();
                (v[i] - pv - rhs[i]).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `max |(I - P_B) G_B e_y - e_y|` over the given columns.
    pub fn identity_residual(&self, ys: &[usize]) -> f64 {
        let cols = self.green_columns(ys);
        ys.iter()
            .zip(&cols)
            .map(|(&y, c)| {
                let mut e = vec![0.0; self.len()];
                e[y] = 1.0;
                self.residual(c, &e)
            })
            .fold(0.0, f64::max)
    }

    pub fn eta_residual(&self) -> f64 {
        self.residual(&self.eta, &vec![1.0; self.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorValue {
    /// Sum over the step-law window, with the unassigned mass leaving `f(x)`.
    pub value: f64,
    /// Bound on the unknown remainder.
    pub bound: f64,
}

/// `(Af)(x) = Σ_z P(X_1 = z)(f(x+z) - f(x))`.
///
/// the bound covers that mass plus tail error and summation round-off.
/// the bound adds that, the step-law tail error and summation round-off.
pub fn generator_apply(law: &StepLaw, f: &dyn Fn(&Site) -> f64, x: &Site, sup_outside: f64) -> GeneratorValue {
    let fx = f(x);
    let mut value = -law.unassigned_mass * fx;
    let mut abs = value.abs();
    let mut terms = 1.0;
    let mut sup_inside = fx.abs();
    for (z, p) in law.jumps() {
        let v = f(&[x[0] + z[0], x[1] + z[1], x[2] + z[2]]);
        sup_inside = sup_inside.max(v.abs());
        value += p * (v - fx);
        abs += (p * (v - fx)).abs();
        terms += 1.0;
    }
    // recursive summation error is at most (terms) ε Σ|t|
    let rounding = terms * f64::EPSILON * abs;
    GeneratorValue {
        value,
        bound: law.unassigned_mass * sup_outside + 2.0 * law.tail_error * sup_inside.max(sup_outside) + rounding,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximumPrincipleReport {
    pub trials: usize,
    /// Trials where `(Af)(x)` was certainly negative.
    pub negative_cases: usize,
    pub violations: usize,
}

/// Random compactly supported `f` on a box of half-width 3 about 0; whenever
/// `(Af)(x) < 0` is certain, `f(x) > inf f` must hold.
pub fn maximum_principle_probe(law: &StepLaw, trials: usize, seed: u64) -> MaximumPrincipleReport {
    let d = law.dim();
    let half = 3i64.min(law.support_radius() as i64 / 2).max(1);
    let side = (2 * half + 1) as usize;
    let cells = side.pow(d as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negative_cases = 0;
    let mut violations = 0;
    for t in 0..trials {
        let mut vals: Vec<f64> = (0..cells).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x_idx = rng.random_range(0..cells);
        if t % 2 == 0 {
            // spikes make the negative branch common
            vals[x_idx] = 2.0 + rng.random::<f64>();
        }
        let to_site = |mut k: usize| {
            let mut s = [0i64; 3];
            for c in s.iter_mut().take(d) {
                *c = (k % side) as i64 - half;
                k /= side;
            }
            s
        };
        let f = |y: &Site| {
            if y.iter().take(d).any(|c| c.abs() > half) || y.iter().skip(d).any(|&c| c != 0) {
                return 0.0;
            }
            let mut k = 0;
            let mut stride = 1;
            for c in y.iter().take(d) {
                k += (c + half) as usize * stride;
                stride *= side;
            }
            vals[k]
        };
        let x = to_site(x_idx);
        let a = generator_apply(law, &f, &x, 0.0);
        if a.value + a.bound < 0.0 {
            negative_cases += 1;
            let inf = vals.iter().copied().fold(0.0, f64::min);
            if !(f(&x) > inf) {
                violations += 1;
            }
        }
    }
    MaximumPrincipleReport { trials, negative_cases, violations }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonKernelRow {
    pub x: Site,
    pub entries: Vec<(Site, f64)>,
    pub captured_mass: f64,
    pub truncation_note: String,
}

fn check_exterior(sol: &DomainSolution, law: &StepLaw, radius: f64) -> Result<()> {
    let reach = (radius + sol.domain.radius()).ceil() as usize;
    if reach > law.support_radius() {
        return Err(Error::Sizing(format!(
            "exterior radius {radius} needs step support {reach}, have {}",
            law.support_radius()
        )));
    }
    Ok(())
}

/// `K_B(x, z) = Σ_y G_B(x, y) P(X_1 = z - y)` for `x` in `xs` and exterior `z`
/// with `|z - center| ≤ exterior_radius`.
pub fn poisson_rows(sol: &DomainSolution, law: &StepLaw, xs: &[usize], exterior_radius: f64) -> Result<Vec<PoissonKernelRow>> {
    check_exterior(sol, law, exterior_radius)?;
    let cols = sol.green_columns(xs);
    let pts = sol.domain.points();
    let zs = sol.domain.exterior_within(exterior_radius);
    let per_z: Vec<Vec<f64>> = zs
        .par_iter()
        .map(|z| {
            let pz: Vec<f64> = pts.iter().map(|y| law.prob(&sub(z, y))).collect();
            cols.iter().map(|c| c.iter().zip(&pz).map(|(g, p)| g * p).sum()).collect()
        })
        .collect();
    Ok(xs
        .iter()
        .enumerate()
        .map(|(k, &xi)| {
            let entries: Vec<(Site, f64)> = zs.iter().zip(&per_z).map(|(z, v)| (*z, v[k])).collect();
            let captured_mass = entries.iter().map(|e| e.1).sum();
            PoissonKernelRow {
                x: pts[xi],
                entries,
                captured_mass,
                truncation_note: format!(
                    "exterior |z - center| <= {exterior_radius}; step law window {} with unassigned mass {:.3e}",
                    law.support_radius(),
                    law.unassigned_mass
                ),
            }
        })
        .collect())
}

pub fn poisson_kernel(sol: &DomainSolution, law: &StepLaw, x: usize, exterior_radius: f64) -> Result<PoissonKernelRow> {
    Ok(poisson_rows(sol, law, &[x], exterior_radius)?.pop().unwrap())
}

/// `l(z) = j(|z|)/φ(n^{-2}) + n^{-d} Σ_{y ∈ A(b2 n, n)} η(y) j(|z - y|)`.
pub fn l_function(spec: &BernsteinSpec, sol: &DomainSolution, z: &Site, b2: f64) -> f64 {
    let dom = &sol.domain;
    let n = dom.radius();
    let d = dom.dim();
    let c = dom.center();
    let zr = sub(z, &c);
    let j = |r: f64| spec.jump_profile(r, d).unwrap_or(f64::NAN);
    let first = j(norm(&zr)) / spec.phi_unchecked(n.powi(-2));
    let second: f64 = dom
        .annulus(b2 * n, n)
        .iter()
        .map(|&i| sol.eta[i] * j(norm(&sub(z, &dom.points()[i]))))
        .sum();
    first + n.powi(-(d as i32)) * second
}

/// Harmonic extension `f = G_B b`, `b(y) = Σ_z P(z - y) g(z)`, of boundary
/// data `g` supported outside `B` within `exterior_radius`.
pub fn harmonic_extend(sol: &DomainSolution, law: &StepLaw, boundary: &[(Site, f64)], exterior_radius: f64) -> Result<Vec<f64>> {
    check_exterior(sol, law, exterior_radius)?;
    let c = sol.domain.center();
    for (z, v) in boundary {
        if sol.domain.contains(z) {
            return Err(Error::Boundary(format!("boundary point {z:?} lies inside the domain")));
        }
        if norm(&sub(z, &c)) > exterior_radius {
            return Err(Error::Boundary(format!("boundary point {z:?} lies outside the exterior window {exterior_radius}")));
        }
        if !(*v >= 0.0) {
            return Err(Error::Boundary(format!("boundary value {v} at {z:?} is negative")));
        }
    }
    let b: Vec<f64> = sol
        .domain
        .points()
        .par_iter()
        .map(|y| boundary.iter().map(|(z, g)| law.prob(&sub(z, y)) * g).sum())
        .collect();
    Ok(sol.solve(&b))
}

/// `f` on `B` and `g` outside, as one function on the lattice.
pub fn extended_function<'a>(sol: &'a DomainSolution, f: &'a [f64], boundary: &'a [(Site, f64)]) -> impl Fn(&Site) -> f64 + 'a {
    let outside: HashMap<Site, f64> = boundary.iter().copied().collect();
    move |y: &Site| match sol.domain.index_of(y) {
        Some(i) => f[i],
        None => outside.get(y).copied().unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackEntry {
    pub z0: Site,
    pub sup: f64,
    pub inf: f64,
    pub ratio: f64,
}

/// `sup/inf` over `B(center, a n)` of the harmonic extension of each point mass.
pub fn harnack_ratio(sol: &DomainSolution, law: &StepLaw, a: f64, z0s: &[Site], exterior_radius: f64) -> Result<Vec<HarnackEntry>> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Parameter(format!("harnack fraction must lie in (0,1), got {a}")));
    }
    let inner = sol.domain.within(a * sol.domain.radius());
    z0s.iter()
        .map(|z0| {
            let f = harmonic_extend(sol, law, &[(*z0, 1.0)], exterior_radius)?;
            let band = Band::from_values(inner.iter().map(|&i| f[i]));
            if !(band.lo > 0.0) {
                return Err(Error::Boundary(format!("harmonic extension vanishes inside for point mass at {z0:?}")));
            }
            Ok(HarnackEntry { z0: *z0, sup: band.hi, inf: band.lo, ratio: band.ratio() })
        })
        .collect()
}

/// Band of `η(x) φ(n^{-2})` over `B(center, r)`.
pub fn exit_time_band(spec: &BernsteinSpec, sol: &DomainSolution, r: f64) -> Band {
    let s = spec.phi_unchecked(sol.domain.radius().powi(-2));
    Band::from_values(sol.domain.within(r).iter().map(|&i| sol.eta[i] * s))
}

/// Band of `G_B(x, y) n^d / η(y)` over `x ∈ B(b1 n)`, `y ∈ A(b2 n, n)`.
pub fn ball_green_band(sol: &DomainSolution, b1: f64, b2: f64) -> Band {
    let dom = &sol.domain;
    let n = dom.radius();
    let xs = dom.within(b1 * n);
    let ys = dom.annulus(b2 * n, n);
    let scale = n.powi(dom.dim() as i32);
    let cols = sol.green_columns(&xs);
    let mut band = Band::new();
    for c in &cols {
        for &y in &ys {
            band.include(c[y] * scale / sol.eta[y]);
        }
    }
    band
}

/// Band of `G_B(x, y) / G(y - x)` over `x, y ∈ B(a n)`, and the largest excess
/// `G_B - G` seen (domain monotonicity).
pub fn whole_space_comparison(sol: &DomainSolution, green: &GreenTable, a: f64) -> Result<(Band, f64)> {
    let dom = &sol.domain;
    let idx = dom.within(a * dom.radius());
    let cols = sol.green_columns(&idx);
    let mut band = Band::new();
    let mut excess = f64::NEG_INFINITY;
    for (k, &x) in idx.iter().enumerate() {
        for &y in &idx {
            let disp = sub(&dom.points()[y], &dom.points()[x]);
            let g = green
                .get(&disp)
                .ok_or_else(|| Error::Sizing(format!("green table radius {} misses displacement {disp:?}", green.radius())))?;
            band.include(cols[k][y] / g);
            excess = excess.max(cols[k][y] - g);
        }
    }
    Ok((band, excess))
}

/// Band of `K_B(x, z) / l(z)` over the rows given and `z` with
/// `n ≤ |z - center| ≤ r_out`.
pub fn poisson_band(spec: &BernsteinSpec, sol: &DomainSolution, rows: &[PoissonKernelRow], r_out: f64, b2: f64) -> Band {
    let c = sol.domain.center();
    let zs: Vec<Site> = rows
        .first()
        .map(|r| r.entries.iter().map(|e| e.0).filter(|z| norm(&sub(z, &c)) <= r_out).collect())
        .unwrap_or_default();
    let l: HashMap<Site, f64> = zs.par_iter().map(|z| (*z, l_function(spec, sol, z, b2))).collect();
    let mut band = Band::new();
    for row in rows {
        for (z, k) in &row.entries {
            if let Some(lz) = l.get(z) {
                band.include(k / lz);
            }
        }
    }
    band
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SrwKernel;
    use crate::subordination::{build_step_law, SubordinationWeights};

    fn law(d: usize, lx: usize) -> (BernsteinSpec, StepLaw) {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let w = SubordinationWeights::compute(&spec, 400, 1e-6).unwrap();
        let k = SrwKernel::new(d, 400).unwrap();
        let l = build_step_law(&w, &k, lx).unwrap();
        (spec, l)
    }

    #[test]
    fn ball_counts() {
        // strict inequality: (±1, ±1) has norm √2 < 1.5
        assert_eq!(FiniteDomain::ball(2, [0, 0, 0], 1.5).unwrap().len(), 9);
        let b = FiniteDomain::ball(1, [0, 0, 0], 3.0).unwrap();
        assert_eq!(b.points(), &[[-2, 0, 0], [-1, 0, 0], [0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        // 317 lattice points have |y| ≤ 10, twelve of them on the circle
        assert_eq!(FiniteDomain::ball(2, [0, 0, 0], 10.0).unwrap().len(), 305);
        assert_eq!(FiniteDomain::ball(2, [0, 0, 0], 10.0 + 1e-9).unwrap().len(), 317);
        assert!(matches!(FiniteDomain::ball_with_cap(3, [0, 0, 0], 30.0, 1000), Err(Error::Sizing(_))));
    }

    #[test]
    fn singleton_domain() {
        let (_, l) = law(1, 8);
        let sol = solve_green_ball(FiniteDomain::ball(1, [0, 0, 0], 1.0).unwrap(), &l).unwrap();
        let g = sol.green_columns(&[0])[0][0];
        assert!((g - 1.0 / (1.0 - l.stay_prob)).abs() < 1e-14);
        assert!((sol.eta[0] - g).abs() < 1e-14);
        let row = poisson_kernel(&sol, &l, 0, 7.0).unwrap();
        for (z, k) in &row.entries {
            assert!((k - l.prob(z) / (1.0 - l.stay_prob)).abs() < 1e-15);
        }
    }

    #[test]
    fn ball_identities() {
        let (_, l) = law(2, 24);
        let sol = solve_green_ball(FiniteDomain::ball(2, [0, 0, 0], 6.0).unwrap(), &l).unwrap();
        assert!(sol.eta_residual() < 1e-12);
        let all: Vec<usize> = (0..sol.len()).collect();
        assert!(sol.identity_residual(&all) < 1e-12);
        let cols = sol.green_columns(&all);
        for i in 0..sol.len() {
            let row_sum: f64 = cols.iter().map(|c| c[i]).sum();
            assert!((row_sum - sol.eta[i]).abs() < 1e-10 * sol.eta[i]);
            for j in 0..sol.len() {
                assert!(cols[i][j] >= 0.0);
                assert!((cols[i][j] - cols[j][i]).abs() < 1e-12);
            }
            assert!(sol.defect[i] >= l.unassigned_mass);
        }
        // Aη = -1 inside
        let f = extended_function(&sol, &sol.eta, &[]);
        for x in sol.domain.points() {
            let a = generator_apply(&l, &f, x, 0.0);
            assert!((a.value + 1.0).abs() <= a.bound + 1e-10);
        }
    }

    #[test]
    fn extension_is_harmonic() {
        let (_, l) = law(2, 24);
        let sol = solve_green_ball(FiniteDomain::ball(2, [0, 0, 0], 6.0).unwrap(), &l).unwrap();
        let g = [([9, 0, 0], 1.0), ([-7, 3, 0], 0.5)];
        let f = harmonic_extend(&sol, &l, &g, 12.0).unwrap();
        let rows = poisson_rows(&sol, &l, &[0, 7], 12.0).unwrap();
        for row in &rows {
            let i = sol.domain.index_of(&row.x).unwrap();
            let via_rows: f64 = row.entries.iter().map(|(z, k)| k * g.iter().find(|e| e.0 == *z).map_or(0.0, |e| e.1)).sum();
            assert!((via_rows - f[i]).abs() < 1e-13);
        }
        let ext = extended_function(&sol, &f, &g);
        for x in sol.domain.points() {
            let a = generator_apply(&l, &ext, x, 0.0);
            assert!(a.value.abs() <= a.bound + 1e-12);
        }
        assert!(matches!(harmonic_extend(&sol, &l, &[([1, 0, 0], 1.0)], 12.0), Err(Error::Boundary(_))));
        assert!(matches!(harmonic_extend(&sol, &l, &[([15, 0, 0], 1.0)], 12.0), Err(Error::Boundary(_))));
    }

    #[test]
    fn positive_spike_and_probe() {
        let (_, l) = law(2, 12);
        let spike = |y: &Site| if *y == [0, 0, 0] { 1.0 } else { 0.0 };
        let a = generator_apply(&l, &spike, &[0, 0, 0], 0.0);
        assert!((a.value + (1.0 - l.stay_prob)).abs() < 1e-12);
        let r = maximum_principle_probe(&l, 1000, 7);
        assert_eq!(r.violations, 0);
        assert!(r.negative_cases > 100);
    }
}
