//! Monte Carlo oracles built from the subordinator and the base walk, without
//! the quadrature-built step law.

use crate::bernstein::BernsteinSpec;
use crate::domain::{DomainSolution, FiniteDomain, PoissonKernelRow};
use crate::error::{Error, Result};
use crate::lattice::{add, local_limit, norm, sub, Site};
use crate::quadrature::integrate_log_peak;
use crate::subordination::{StepLaw, SubordinationWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;

pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub max_steps: u64,
    pub worker_count: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { seed: 20240611, n_paths: 100_000, max_steps: 1_000_000, worker_count: 8 }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths < 1 || self.worker_count < 1 {
            return Err(Error::Parameter("monte carlo needs n_paths >= 1 and worker_count >= 1".into()));
        }
        Ok(())
    }

    /// One generator per worker: the master seed with the worker index as stream.
    pub fn worker_rng(&self, worker: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(worker as u64);
        rng
    }

    fn paths_for(&self, worker: usize) -> usize {
        self.n_paths / self.worker_count + usize::from(worker < self.n_paths % self.worker_count)
    }

    /// Runs `job(rng, paths)` on every worker and returns results in worker order.
    pub fn run<T: Send>(&self, job: impl Fn(&mut ChaCha8Rng, usize) -> T + Sync) -> Result<Vec<T>> {
        self.validate()?;
        Ok((0..self.worker_count)
            .into_par_iter()
            .map(|w| job(&mut self.worker_rng(w), self.paths_for(w)))
            .collect())
    }
}

/// Draws of `R` with `P(R = m) = c_m`.
pub trait RSampler: Sync {
    /// An integer-valued draw, returned as `f64` since it may exceed `u64`.
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64;
}

#[derive(Debug, Clone, Copy)]
struct Envelope {
    coef: f64,
    alpha: f64,
    theta: f64,
    below_one: bool,
}

/// Exact sampler: `τ` with density `μ(t)(1 - e^{-t})`, then `R` Poisson(`τ`)
/// conditioned to be positive.
#[derive(Debug, Clone)]
pub struct ExactRSampler {
    pieces: Vec<Envelope>,
    cumulative: Vec<f64>,
}

impl ExactRSampler {
    pub fn new(spec: &BernsteinSpec) -> Self {
        let mut pieces = Vec::new();
        for c in spec.components() {
            pieces.push(Envelope { coef: c.coef, alpha: c.alpha, theta: c.theta, below_one: true });
            pieces.push(Envelope { coef: c.coef, alpha: c.alpha, theta: c.theta, below_one: false });
        }
        let mut acc = 0.0;
        let cumulative = pieces
            .iter()
            .map(|p| {
                acc += if p.below_one { p.coef / (1.0 - p.alpha) } else { p.coef / p.alpha };
                acc
            })
            .collect();
        Self { pieces, cumulative }
    }

    pub fn sample_tau(&self, rng: &mut ChaCha8Rng) -> f64 {
        let total = *self.cumulative.last().unwrap();
        loop {
            let u = rng.random::<f64>() * total;
            let p = self.pieces[self.cumulative.iter().position(|&c| u < c).unwrap_or(self.pieces.len() - 1)];
            let v: f64 = 1.0 - rng.random::<f64>();
            let (t, accept) = if p.below_one {
                let t = v.powf(1.0 / (1.0 - p.alpha));
                (t, -(-t).exp_m1() / t * (-p.theta * t).exp())
            } else {
                let t = v.powf(-1.0 / p.alpha);
                (t, -(-t).exp_m1() * (-p.theta * t).exp())
            };
            if rng.random::<f64>() < accept {
                return t;
            }
        }
    }
}

/// Poisson(`tau`) conditioned on being at least one.
pub fn positive_poisson(tau: f64, rng: &mut ChaCha8Rng) -> f64 {
    if tau < 10.0 {
        let u = rng.random::<f64>();
        let mut p = tau * (-tau).exp() / -(-tau).exp_m1();
        let mut cdf = p;
        let mut k = 1.0;
        while u > cdf && p > 0.0 {
            k += 1.0;
            p *= tau / k;
            cdf += p;
        }
        k
    } else if tau < 1e15 {
        let pois = Poisson::new(tau).unwrap();
        loop {
            let k: f64 = pois.sample(rng);
            if k >= 1.0 {
                return k;
            }
        }
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (tau + tau.sqrt() * z).round().max(1.0)
    }
}

impl RSampler for ExactRSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        positive_poisson(self.sample_tau(rng), rng)
    }
}

/// Inverse-CDF over the table `c_1..c_M`; the tail is drawn from the exact
/// sampler conditioned on exceeding `M`.
#[derive(Debug, Clone)]
pub struct TableRSampler {
    cdf: Vec<f64>,
    exact: ExactRSampler,
}

impl TableRSampler {
    pub fn new(w: &SubordinationWeights) -> Self {
        let mut acc = 0.0;
        let cdf = w.cm[1..]
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect();
        Self { cdf, exact: ExactRSampler::new(&w.spec) }
    }
}

impl RSampler for TableRSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u = rng.random::<f64>();
        if u < *self.cdf.last().unwrap() {
            return (self.cdf.partition_point(|&c| c <= u) + 1) as f64;
        }
        let m_max = self.cdf.len() as f64;
        loop {
            let r = self.exact.sample(rng);
            if r > m_max {
                return r;
            }
        }
    }
}

const EXACT_BLOCK_LIMIT: f64 = 9007199254740992.0; // 2^53

fn pm_walk(m: u64, rng: &mut ChaCha8Rng) -> i64 {
    if m == 0 {
        return 0;
    }
    2 * Binomial::new(m, 0.5).unwrap().sample(rng) as i64 - m as i64
}

/// Endpoint of `m` simple-random-walk steps from the origin.
///
/// Exact through binomial counts; past `2^53` steps each coordinate is drawn
/// from its normal limit.
pub fn srw_block(d: usize, m: f64, rng: &mut ChaCha8Rng) -> Site {
    if m > EXACT_BLOCK_LIMIT {
        let sd = (m / d as f64).sqrt();
        let mut s = [0i64; 3];
        for c in s.iter_mut().take(d) {
            let z: f64 = rng.sample(StandardNormal);
            *c = (sd * z).round() as i64;
        }
        return s;
    }
    let m = m as u64;
    let planar = |m: u64, rng: &mut ChaCha8Rng| {
        let u = pm_walk(m, rng);
        let v = pm_walk(m, rng);
        ((u + v) / 2, (u - v) / 2)
    };
    match d {
        1 => [pm_walk(m, rng), 0, 0],
        2 => {
            let (x, y) = planar(m, rng);
            [x, y, 0]
        }
        _ => {
            let k = Binomial::new(m, 1.0 / 3.0).unwrap().sample(rng);
            let (y, z) = planar(m - k, rng);
            [pm_walk(k, rng), y, z]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitRecord {
    pub exit_point: Site,
    pub pre_exit_point: Site,
    pub steps: u64,
    pub censored: bool,
}

pub fn simulate_exit(domain: &FiniteDomain, sampler: &dyn RSampler, start: &Site, max_steps: u64, rng: &mut ChaCha8Rng) -> ExitRecord {
    let d = domain.dim();
    let mut pos = *start;
    for step in 1..=max_steps {
        let next = add(&pos, &srw_block(d, sampler.sample(rng), rng));
        if !domain.contains(&next) {
            return ExitRecord { exit_point: next, pre_exit_point: pos, steps: step, censored: false };
        }
        pos = next;
    }
    ExitRecord { exit_point: pos, pre_exit_point: pos, steps: max_steps, censored: true }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitSample {
    pub records: Vec<ExitRecord>,
    pub censored: usize,
}

/// Exit records in worker order; refuses when too many paths hit the cap.
pub fn exit_sample(domain: &FiniteDomain, sampler: &dyn RSampler, start: &Site, cfg: &McConfig) -> Result<ExitSample> {
    if !domain.contains(start) {
        return Err(Error::Parameter(format!("start {start:?} lies outside the domain")));
    }
    let parts = cfg.run(|rng, paths| (0..paths).map(|_| simulate_exit(domain, sampler, start, cfg.max_steps, rng)).collect::<Vec<_>>())?;
    let records: Vec<ExitRecord> = parts.into_iter().flatten().collect();
    let censored = records.iter().filter(|r| r.censored).count();
    if censored as f64 > MAX_CENSORED_FRACTION * records.len() as f64 {
        return Err(Error::Censored(format!("{censored} of {} paths reached the step cap {}", records.len(), cfg.max_steps)));
    }
    Ok(ExitSample { records, censored })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = if n > 1 { (s2 - n as f64 * mean * mean).max(0.0) / (n - 1) as f64 } else { f64::INFINITY };
        Self { value: mean, std_error: (var / n as f64).sqrt(), samples: n }
    }
}

pub fn mean_exit_time(sample: &ExitSample) -> McEstimate {
    McEstimate::from_values(sample.records.iter().filter(|r| !r.censored).map(|r| r.steps as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLawComparison {
    pub window: f64,
    pub total_variation: f64,
    /// Expected distance from sampling noise alone.
    pub noise_level: f64,
    pub cells: usize,
}

/// Total variation between the sampled exit positions and a Poisson-kernel row
/// on `n ≤ |z - center| ≤ window`, all farther points lumped into one cell.
pub fn exit_law_tv(sample: &ExitSample, row: &PoissonKernelRow, center: &Site, window: f64) -> ExitLawComparison {
    let n_ok = sample.records.iter().filter(|r| !r.censored).count() as f64;
    let mut hist: HashMap<Site, f64> = HashMap::new();
    for r in sample.records.iter().filter(|r| !r.censored) {
        *hist.entry(r.exit_point).or_default() += 1.0 / n_ok;
    }
    let mut tv = 0.0;
    let mut noise = 0.0;
    let mut k_in = 0.0;
    let mut e_in = 0.0;
    let mut cells = 0;
    let noise_of = |p: f64| (2.0 * p * (1.0 - p).max(0.0) / (std::f64::consts::PI * n_ok)).sqrt();
    for (z, k) in row.entries.iter().filter(|(z, _)| norm(&sub(z, center)) <= window) {
        let e = hist.get(z).copied().unwrap_or(0.0);
        tv += (e - k).abs();
        noise += noise_of(*k);
        k_in += k;
        e_in += e;
        cells += 1;
    }
    tv += ((1.0 - e_in) - (1.0 - k_in)).abs();
    noise += noise_of(1.0 - k_in);
    ExitLawComparison { window, total_variation: 0.5 * tv, noise_level: 0.5 * noise, cells: cells + 1 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub name: String,
    pub estimate: McEstimate,
    pub exact: f64,
    pub bias_bound: f64,
    pub pass: bool,
}

impl OracleComparison {
    /// Passes when `|estimate - exact| ≤ 3σ + bias_bound`.
    pub fn new(name: &str, estimate: McEstimate, exact: f64, bias_bound: f64) -> Self {
        let pass = (estimate.value - exact).abs() <= 3.0 * estimate.std_error + bias_bound;
        Self { name: name.into(), estimate, exact, bias_bound, pass }
    }

    pub fn z_score(&self) -> f64 {
        (self.estimate.value - self.exact) / self.estimate.std_error
    }
}

/// Simulated mean exit time against `η(start)`. The exact side moves by at
/// most `η(x) · tail_error · max η` under the step law's tail error.
pub fn exit_time_check(sol: &DomainSolution, law: &StepLaw, start: usize, sample: &ExitSample) -> OracleComparison {
    let eta_max = sol.eta.iter().cloned().fold(0.0, f64::max);
    let bias = sol.eta[start] * (law.tail_error * eta_max + sol.eta_residual());
    OracleComparison::new("mean exit time", mean_exit_time(sample), sol.eta[start], bias)
}

/// A test functional `f(X_{τ-1}, X_τ)` with its range on jumps beyond the
/// step-law window.
pub struct ExitFunctional<'a> {
    pub name: String,
    pub f: Box<dyn Fn(&Site, &Site) -> f64 + Sync + 'a>,
    pub far_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IkedaWatanabeCheck {
    pub name: String,
    pub lhs: McEstimate,
    pub rhs: f64,
    /// Uncertainty of the exact side from jumps past the window plus
    /// round-off.
    pub rhs_bound: f64,
    pub pass: bool,
}

/// Compares `E_x f(X_{τ-1}, X_τ)` by simulation against
/// `Σ_y G_B(x, y) E[f(y, y + X_1); y + X_1 ∉ B]`.
pub fn ikeda_watanabe_check(sol: &DomainSolution, law: &StepLaw, functional: &ExitFunctional, start: usize, sample: &ExitSample) -> IkedaWatanabeCheck {
    let lhs = McEstimate::from_values(
        sample.records.iter().filter(|r| !r.censored).map(|r| (functional.f)(&r.pre_exit_point, &r.exit_point)),
    );
    let jumps: Vec<(Site, f64)> = law.jumps().collect();
    let (lo, hi) = functional.far_range;
    let mid = 0.5 * (lo + hi);
    // h(y) with a worst-case bound on its summation round-off
    let (h, h_err): (Vec<f64>, Vec<f64>) = sol
        .domain
        .points()
        .par_iter()
        .map(|y| {
            let mut s = law.unassigned_mass * mid;
            let mut abs = s.abs();
            for (z, p) in &jumps {
                let to = add(y, z);
                if !sol.domain.contains(&to) {
                    let t = p * (functional.f)(y, &to);
                    s += t;
                    abs += t.abs();
                }
            }
            (s, jumps.len() as f64 * f64::EPSILON * abs)
        })
        .unzip();
    let u = sol.solve(&h);
    let rhs = u[start];
    // G_B ≥ 0, so a defect r in (I - P_B)u = h moves u(x) by at most |r|_∞ η(x).
    let defect = sol.residual(&u, &h) + h_err.iter().cloned().fold(0.0, f64::max);
    let far = law.unassigned_mass * 0.5 * (hi - lo) + law.tail_error * lo.abs().max(hi.abs());
    let rhs_bound = (far + defect) * sol.eta[start];
    let pass = (lhs.value - rhs).abs() <= 3.0 * lhs.std_error + rhs_bound;
    IkedaWatanabeCheck { name: functional.name.clone(), lhs, rhs, rhs_bound, pass }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenMc {
    pub x: Site,
    pub estimate: McEstimate,
    pub steps: usize,
    /// Bound on the visits after the step horizon, which the estimate omits.
    pub bias_bound: f64,
}

/// `C' = sup_m max_y p(m, y) m^{d/2}`: the table maximum joined with the
/// local-limit value it increases towards.
pub fn kernel_constant(kernel_peak: f64, d: usize) -> f64 {
    kernel_peak.max(local_limit(d, 1.0, &[0, 0, 0]))
}

/// `Σ_{n > N} sup_y P(X_n = y) ≤ C'/Γ(d/2) ∫ λ^{d/2-1} ψ(λ)^{N+1} / φ(1 - e^{-λ}) dλ`
/// with `ψ(λ) = 1 - φ(1 - e^{-λ})`.
pub fn green_truncation_bias(spec: &BernsteinSpec, d: usize, steps: usize, c_prime: f64) -> Result<f64> {
    let half = d as f64 / 2.0;
    let f = |s: f64| {
        let lambda = s.exp();
        let ph = spec.phi_unchecked(-(-lambda).exp_m1());
        half * s + (steps as f64 + 1.0) * (-ph).ln_1p() - ph.ln()
    };
    let start = -(steps as f64).ln() / spec.min_alpha();
    let est = integrate_log_peak(f, start, 1.0, None, 1e-8)?;
    Ok(c_prime * (est.value * (-ln_gamma(half)).exp()))
}

/// Visit counts to `x` over `N` steps from the origin.
pub fn estimate_green(sampler: &dyn RSampler, d: usize, x: &Site, steps: usize, bias_bound: f64, cfg: &McConfig) -> Result<GreenMc> {
    let parts = cfg.run(|rng, paths| {
        let mut v = Vec::with_capacity(paths);
        for _ in 0..paths {
            let mut pos = [0i64; 3];
            let mut visits = f64::from(pos == *x);
            for _ in 0..steps {
                pos = add(&pos, &srw_block(d, sampler.sample(rng), rng));
                if pos == *x {
                    visits += 1.0;
                }
            }
            v.push(visits);
        }
        v
    })?;
    Ok(GreenMc { x: *x, estimate: McEstimate::from_values(parts.into_iter().flatten()), steps, bias_bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(sampler: &dyn RSampler, n: usize, seed: u64) -> (f64, f64) {
        let cfg = McConfig { seed, n_paths: n, max_steps: 1, worker_count: 4 };
        let parts = cfg
            .run(|rng, paths| (0..paths).map(|_| sampler.sample(rng)).collect::<Vec<_>>())
            .unwrap();
        let all: Vec<f64> = parts.into_iter().flatten().collect();
        let p1 = all.iter().filter(|&&r| r == 1.0).count() as f64 / n as f64;
        let p2 = all.iter().filter(|&&r| r == 2.0).count() as f64 / n as f64;
        (p1, p2)
    }

    #[test]
    fn r_samplers_hit_first_weights() {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let w = SubordinationWeights::compute(&spec, 400, 1e-6).unwrap();
        let n = 100_000;
        let sd1 = (0.5f64 * 0.5 / n as f64).sqrt();
        let sd2 = (0.125f64 * 0.875 / n as f64).sqrt();
        for s in [&ExactRSampler::new(&spec) as &dyn RSampler, &TableRSampler::new(&w)] {
            let (p1, p2) = counts(s, n, 11);
            assert!((p1 - 0.5).abs() < 3.0 * sd1, "{p1}");
            assert!((p2 - 0.125).abs() < 3.0 * sd2, "{p2}");
        }
    }

    #[test]
    fn determinism() {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let s = ExactRSampler::new(&spec);
        let cfg = McConfig { seed: 5, n_paths: 1000, max_steps: 1, worker_count: 3 };
        let run = || cfg.run(|rng, paths| (0..paths).map(|_| s.sample(rng)).collect::<Vec<_>>()).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn blocks_have_the_right_parity_and_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            let mut m2 = 0.0;
            for _ in 0..20_000 {
                let z = srw_block(d, 101.0, &mut rng);
                assert_eq!((z[0] + z[1] + z[2]).rem_euclid(2), 1);
                m2 += (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) as f64;
            }
            // E|Z_m|² = m
            assert!((m2 / 20_000.0 / 101.0 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn singleton_exits_from_its_point() {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let dom = FiniteDomain::ball(2, [0, 0, 0], 1.0).unwrap();
        let s = ExactRSampler::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let r = simulate_exit(&dom, &s, &[0, 0, 0], 1000, &mut rng);
            assert!(!r.censored);
            assert_eq!(r.pre_exit_point, [0, 0, 0]);
            assert_ne!(r.exit_point, [0, 0, 0]);
        }
    }

    #[test]
    fn positive_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for tau in [0.01, 2.0, 50.0] {
            let n = 50_000;
            let mean: f64 = (0..n).map(|_| positive_poisson(tau, &mut rng)).sum::<f64>() / n as f64;
            let exact = tau / -(-tau as f64).exp_m1();
            assert!((mean / exact - 1.0).abs() < 0.02, "{tau} {mean} {exact}");
        }
    }
}
