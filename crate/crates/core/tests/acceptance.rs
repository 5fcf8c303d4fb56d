//! Acceptance gates. One PASS/FAIL line per criterion; exits nonzero when any
//! gate fails.

use statrs::function::gamma::{gamma_ur, ln_gamma};
use std::process::ExitCode;
use std::time::{Duration, Instant};
use subwalk::band::{variation, Band};
use subwalk::bernstein::{builtin_specs, BernsteinSpec};
use subwalk::domain::*;
use subwalk::green::{green_series, harmonicity_check, transience_check, GreenTable};
use subwalk::lattice::{kernel_peak_constant, norm, sub, Site, SrwKernel};
use subwalk::mc::*;
use subwalk::quadrature::poisson_transform;
use subwalk::subordination::*;
use subwalk::Error;

const M: usize = 4000;
const TAIL_TARGET: f64 = 1e-6;
const NS: [f64; 3] = [8.0, 16.0, 32.0];
const LAW_RADIUS_2D: usize = 160;

struct Gate {
    id: usize,
    name: &'static str,
    pass: bool,
    lines: Vec<String>,
    elapsed: Duration,
}

struct Recorder {
    id: usize,
    name: &'static str,
    pass: bool,
    lines: Vec<String>,
    start: Instant,
}

impl Recorder {
    fn new(id: usize, name: &'static str) -> Self {
        Self { id, name, pass: true, lines: Vec::new(), start: Instant::now() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, what: String) {
        self.lines.push(format!("     {what}"));
    }

    fn runtime(&mut self, limit: Duration) {
        let t = self.start.elapsed();
        self.check(t < limit, format!("runtime {:.1}s < {}s", t.as_secs_f64(), limit.as_secs()));
    }

    fn finish(self) -> Gate {
        Gate { id: self.id, name: self.name, pass: self.pass, lines: self.lines, elapsed: self.start.elapsed() }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn stable_cm(alpha: f64, m: usize) -> f64 {
    let m = m as f64;
    (alpha.ln() + ln_gamma(m - alpha) - ln_gamma(1.0 - alpha) - ln_gamma(m + 1.0)).exp()
}

fn stable_c(alpha: f64, m: usize) -> f64 {
    let m = m as f64;
    (ln_gamma(m + alpha) - ln_gamma(alpha) - ln_gamma(m + 1.0)).exp()
}

struct Ball {
    n: f64,
    sol: DomainSolution,
}

struct Shared {
    spec: BernsteinSpec,
    w: SubordinationWeights,
    k2: SrwKernel,
    law2: StepLaw,
    balls: Vec<Ball>,
}

impl Shared {
    fn ball(&self, n: f64) -> &DomainSolution {
        &self.balls.iter().find(|b| b.n == n).unwrap().sol
    }
}

fn weights_correctness() -> Gate {
    let mut r = Recorder::new(1, "weights against stable closed forms");
    for alpha in [0.25, 0.5, 0.75] {
        let spec = BernsteinSpec::stable(alpha).unwrap();
        let cm = compute_cm(&spec, 200).unwrap();
        let c = compute_c_renewal(&cm, 200);
        let ci = compute_c_integral(&spec, 200).unwrap();
        let e1 = (1..=200).map(|m| rel(cm[m], stable_cm(alpha, m))).fold(0.0, f64::max);
        let e2 = (0..=200).map(|m| rel(c[m], stable_c(alpha, m))).fold(0.0, f64::max);
        let e3 = (0..=200).map(|m| rel(ci[m], c[m])).fold(0.0, f64::max);
        r.check(e1 <= 1e-8, format!("alpha={alpha}: c_m max rel error {e1:.2e} <= 1e-8"));
        r.check(e2 <= 1e-6, format!("alpha={alpha}: c(m) renewal max rel error {e2:.2e} <= 1e-6"));
        r.check(e3 <= 1e-6, format!("alpha={alpha}: c(m) integral vs renewal {e3:.2e} <= 1e-6"));
    }
    r.runtime(Duration::from_secs(10));
    r.finish()
}

fn mass_accounting(sh: &Shared, w_all: &[SubordinationWeights], laws: &[(usize, &StepLaw)]) -> Gate {
    let mut r = Recorder::new(2, "mass accounting");
    for w in w_all {
        r.check(
            w.unaccounted_mass < TAIL_TARGET,
            format!("{}: unaccounted mass past M={} is {:.2e} < 1e-6 (raw 1 - sum c_m = {:.3e})", w.spec.family(), w.truncation_m, w.unaccounted_mass, w.tail_mass),
        );
    }
    for (d, law) in laws {
        let dev = (law.total_mass() - 1.0).abs();
        r.check(dev <= 1e-10, format!("d={d}: |step law total - 1| = {dev:.2e} <= 1e-10 (unassigned {:.3e})", law.unassigned_mass));
    }
    let sol = sh.ball(16.0);
    let x = sol.domain.index_of(&[0, 0, 0]).unwrap();
    let row = poisson_kernel(sol, &sh.law2, x, 8.0 * 16.0).unwrap();
    r.check(row.captured_mass >= 0.9, format!("n=16: captured exit mass at 8n = {:.4} >= 0.9", row.captured_mass));
    let near = poisson_kernel(sol, &sh.law2, x, 4.0 * 16.0).unwrap();
    r.check(near.captured_mass <= row.captured_mass, format!("captured mass grows with the window: {:.4} at 4n", near.captured_mass));
    r.finish()
}

fn asymptotic_bands(w_all: &[SubordinationWeights]) -> Gate {
    let mut r = Recorder::new(3, "c_m and c(m) asymptotic bands");
    for w in w_all {
        let a = cm_asymptotic_report(w, 10, 2000);
        let b = renewal_asymptotic_report(w, 10, 2000);
        r.check(a.ratio() <= 3.0, format!("{}: c_m m/phi(1/m) in [{:.4}, {:.4}], ratio {:.3} <= 3", w.spec.family(), a.lo, a.hi, a.ratio()));
        r.check(b.ratio() <= 3.0, format!("{}: c(m) m phi(1/m) in [{:.4}, {:.4}], ratio {:.3} <= 3", w.spec.family(), b.lo, b.hi, b.ratio()));
    }
    r.finish()
}

fn jump_bands(laws: &[(usize, &BernsteinSpec, &StepLaw)]) -> Gate {
    let mut r = Recorder::new(4, "one-step law against j");
    for (d, spec, law) in laws {
        let b = law.jump_band(spec, 1.0, 16.0);
        r.check(b.ratio() <= 10.0, format!("d={d} {}: P(X_1=z)/j(|z|) in [{:.4}, {:.4}], ratio {:.3} <= 10", spec.family(), b.lo, b.hi, b.ratio()));
    }
    r.finish()
}

fn green_bands(sh: &Shared, g2: &GreenTable) -> Gate {
    let mut r = Recorder::new(5, "whole-space Green function against g");
    let k3 = SrwKernel::new(3, M).unwrap();
    let g3 = green_series(&sh.w, &k3, 16, 1e-4).unwrap();
    for (d, g) in [(2, g2), (3, &g3)] {
        let b = g.band(&sh.spec, 1.0, 16.0);
        r.check(b.ratio() <= 10.0, format!("d={d}: G(x)/g(|x|) in [{:.4}, {:.4}], ratio {:.3} <= 10", b.lo, b.hi, b.ratio()));
        let t = g.max_relative_tail();
        r.check(t < 1e-4, format!("d={d}: max tail bound / G = {t:.2e} < 1e-4"));
    }
    r.runtime(Duration::from_secs(120));
    r.finish()
}

fn exit_time_bands(sh: &Shared) -> Gate {
    let mut r = Recorder::new(6, "exit time scaling");
    let mut all = Band::new();
    for b in &sh.balls {
        let lower = exit_time_band(&sh.spec, &b.sol, DEFAULT_A * b.n / 2.0);
        let upper = exit_time_band(&sh.spec, &b.sol, b.n);
        r.note(format!("n={}: eta phi(n^-2) on B(an/2) in [{:.4}, {:.4}]; sup over B_n {:.4}", b.n, lower.lo, lower.hi, upper.hi));
        all.merge(&lower);
    }
    r.check(all.ratio() <= 3.0, format!("joint band across n: ratio {:.4} <= 3", all.ratio()));
    r.finish()
}

fn ball_green_bands(sh: &Shared) -> Gate {
    let mut r = Recorder::new(7, "ball Green function against n^-d eta");
    let mut los = Vec::new();
    let mut his = Vec::new();
    for b in &sh.balls {
        let band = ball_green_band(&b.sol, DEFAULT_B1, DEFAULT_B2);
        r.check(band.ratio() <= 20.0, format!("n={}: G_B n^d/eta in [{:.4}, {:.4}], ratio {:.3} <= 20", b.n, band.lo, band.hi, band.ratio()));
        los.push(band.lo);
        his.push(band.hi);
    }
    r.check(variation(&los) <= 2.0, format!("lower edge variation across n {:.3} <= 2", variation(&los)));
    r.check(variation(&his) <= 2.0, format!("upper edge variation across n {:.3} <= 2", variation(&his)));
    r.finish()
}

fn poisson_bands(sh: &Shared) -> Gate {
    let mut r = Recorder::new(8, "Poisson kernel against l");
    let mut los = Vec::new();
    let mut his = Vec::new();
    for b in &sh.balls {
        let xs = b.sol.domain.within(DEFAULT_B1 * b.n);
        let rows = poisson_rows(&b.sol, &sh.law2, &xs, 4.0 * b.n).unwrap();
        let band = poisson_band(&sh.spec, &b.sol, &rows, 4.0 * b.n, DEFAULT_B2);
        r.check(band.ratio() <= 20.0, format!("n={}: K_B/l in [{:.4}, {:.4}], ratio {:.3} <= 20", b.n, band.lo, band.hi, band.ratio()));
        los.push(band.lo);
        his.push(band.hi);
    }
    r.check(variation(&los) <= 2.0, format!("lower edge variation across n {:.3} <= 2", variation(&los)));
    r.check(variation(&his) <= 2.0, format!("upper edge variation across n {:.3} <= 2", variation(&his)));
    r.finish()
}

fn harnack(sh: &Shared) -> Gate {
    let mut r = Recorder::new(9, "Harnack ratios across scales");
    let factors = [1.5, 2.0, 4.0];
    let mut ratios = vec![Vec::new(); factors.len()];
    for b in &sh.balls {
        let z0s: Vec<Site> = factors.iter().map(|f| [(f * b.n).round() as i64, 0, 0]).collect();
        let at_b1 = harnack_ratio(&b.sol, &sh.law2, DEFAULT_B1, &z0s, 4.0 * b.n).unwrap();
        let at_half = harnack_ratio(&b.sol, &sh.law2, 0.5, &z0s, 4.0 * b.n).unwrap();
        for (k, e) in at_b1.iter().enumerate() {
            ratios[k].push(e.ratio);
        }
        r.note(format!(
            "n={}: sup/inf at a=b1 {:?}, at a=0.5 {:?}",
            b.n,
            at_b1.iter().map(|e| format!("{:.4}", e.ratio)).collect::<Vec<_>>(),
            at_half.iter().map(|e| format!("{:.4}", e.ratio)).collect::<Vec<_>>()
        ));
    }
    for (f, rs) in factors.iter().zip(&ratios) {
        let finite = rs.iter().all(|x| x.is_finite());
        r.check(finite && variation(rs) <= 2.0, format!("|z0| = {f}n: finite, variation across n {:.4} <= 2", variation(rs)));
    }
    r.finish()
}

fn identities(sh: &Shared, g2: &GreenTable) -> Gate {
    let mut r = Recorder::new(10, "exact identities");
    for n in [8.0, 16.0] {
        let sol = sh.ball(n);
        let eta_fn = extended_function(sol, &sol.eta, &[]);
        let res = sol.eta_residual();
        let mut worst = 0.0f64;
        let mut ok = true;
        for x in sol.domain.points() {
            let g = generator_apply(&sh.law2, &eta_fn, x, 0.0);
            let miss = (g.value + 1.0).abs();
            ok &= miss <= g.bound + res;
            worst = worst.max(miss);
        }
        r.check(ok, format!("n={n}: max |(A eta) + 1| = {worst:.2e} within tail bound + solve residual {res:.1e}"));

        let z0: Site = [(2.0 * n) as i64, 0, 0];
        let boundary = [(z0, 1.0)];
        let f = harmonic_extend(sol, &sh.law2, &boundary, 4.0 * n).unwrap();
        let h: Vec<f64> = sol.domain.points().iter().map(|y| sh.law2.prob(&sub(&z0, y))).collect();
        let fres = sol.residual(&f, &h);
        let ext = extended_function(sol, &f, &boundary);
        let mut worst = 0.0f64;
        let mut ok = true;
        for x in sol.domain.points() {
            let g = generator_apply(&sh.law2, &ext, x, 0.0);
            ok &= g.value.abs() <= g.bound + fres;
            worst = worst.max(g.value.abs());
        }
        r.check(ok, format!("n={n}: kernel-built harmonic f, max |Af| = {worst:.2e} on B"));

        let ids: Vec<usize> = (0..sol.len()).step_by((sol.len() / 25).max(1)).collect();
        let idr = sol.identity_residual(&ids);
        r.check(idr <= 1e-10, format!("n={n}: |(I - P_B)G_B - I| = {idr:.2e} <= 1e-10 on {} columns", ids.len()));
    }
    let probe = maximum_principle_probe(&sh.law2, 1000, 7);
    r.check(probe.violations == 0, format!("maximum principle: {} violations in {} trials", probe.violations, probe.trials));
    let law24 = build_step_law(&sh.w, &sh.k2, 24).unwrap();
    let harm = harmonicity_check(g2, &law24, 4).unwrap();
    r.check(
        harm.max_miss <= harm.max_width,
        format!("whole-space G harmonic off 0 and (AG)(0) = -1: miss {:.2e} within {:.2e}", harm.max_miss, harm.max_width),
    );
    r.finish()
}

fn monte_carlo(sh: &Shared, g2: &GreenTable) -> Gate {
    let mut r = Recorder::new(11, "Monte Carlo oracles");
    let sampler = TableRSampler::new(&sh.w);

    let steps = 400;
    let cp = kernel_constant(kernel_peak_constant(&sh.k2, M), 2);
    let bias = green_truncation_bias(&sh.spec, 2, steps, cp).unwrap();
    let cfg = McConfig { seed: 20240611, n_paths: 100_000, max_steps: steps as u64, worker_count: 8 };
    let x: Site = [1, 0, 0];
    let gm = estimate_green(&sampler, 2, &x, steps, bias, &cfg).unwrap();
    let exact = g2.get(&x).unwrap();
    let c = OracleComparison::new("green", gm.estimate, exact, bias);
    r.check(
        c.pass,
        format!("G(1,0): mc {:.5} +- {:.5} ({} paths, {steps} steps), series {exact:.5}, bias bound {bias:.2e}, z {:.2}", c.estimate.value, c.estimate.std_error, c.estimate.samples, c.z_score()),
    );

    let n = 8.0;
    let sol = sh.ball(n);
    let start = sol.domain.index_of(&[0, 0, 0]).unwrap();
    let cfg = McConfig { seed: 20240612, n_paths: 1_000_000, max_steps: 100_000, worker_count: 8 };
    let sample = exit_sample(&sol.domain, &sampler, &[0, 0, 0], &cfg).unwrap();
    r.check(
        sample.censored as f64 <= MAX_CENSORED_FRACTION * sample.records.len() as f64,
        format!("censored {} of {} paths", sample.censored, sample.records.len()),
    );
    let et = exit_time_check(sol, &sh.law2, start, &sample);
    r.check(et.pass, format!("mean exit time at center, n=8: mc {:.4} +- {:.4}, eta {:.4}, z {:.2}", et.estimate.value, et.estimate.std_error, et.exact, et.z_score()));

    let row = poisson_kernel(sol, &sh.law2, start, 8.0 * n).unwrap();
    let tv = exit_law_tv(&sample, &row, &[0, 0, 0], 2.0 * n);
    r.check(tv.total_variation <= 0.02, format!("exit law TV on n <= |z| <= 2n plus remainder: {:.4} <= 0.02 (noise level {:.4})", tv.total_variation, tv.noise_level));
    let wide = exit_law_tv(&sample, &row, &[0, 0, 0], 4.0 * n);
    r.note(format!("TV on n <= |z| <= 4n: {:.4} (noise level {:.4}, {} cells)", wide.total_variation, wide.noise_level, wide.cells));

    let far_cut = 2.0 * n;
    let cap = 4.0 * n;
    let fs = [
        ExitFunctional { name: "f = 1".into(), f: Box::new(|_, _| 1.0), far_range: (1.0, 1.0) },
        ExitFunctional { name: "f = 1{|z| >= 2n}".into(), f: Box::new(move |_, z: &Site| f64::from(norm(z) >= far_cut)), far_range: (1.0, 1.0) },
        ExitFunctional { name: "f = min(|z - y|, 4n)".into(), f: Box::new(move |y: &Site, z: &Site| norm(&sub(z, y)).min(cap)), far_range: (cap, cap) },
    ];
    for f in &fs {
        let c = ikeda_watanabe_check(sol, &sh.law2, f, start, &sample);
        r.check(c.pass, format!("exit formula, {}: mc {:.5} +- {:.5}, exact sum {:.5} (+- {:.1e})", c.name, c.lhs.value, c.lhs.std_error, c.rhs, c.rhs_bound));
    }
    r.runtime(Duration::from_secs(300));
    r.finish()
}

fn incomplete_gamma() -> Gate {
    let mut r = Recorder::new(12, "incomplete gamma ratio");
    let x = 1e4;
    let q = poisson_transform(x, |_| 0.0, Some(x), 1e-12).unwrap();
    let reference = gamma_ur(x + 1.0, x);
    r.check((q.value - 0.5).abs() <= 5e-3, format!("Gamma(x+1,x)/Gamma(x+1) at x=1e4: {:.8} within 5e-3 of 1/2", q.value));
    r.check((q.value - reference).abs() <= 1e-10, format!("quadrature vs continued-fraction reference {reference:.10}: diff {:.1e}", (q.value - reference).abs()));
    r.finish()
}

fn transience() -> Gate {
    let mut r = Recorder::new(13, "transience gate");
    let s75 = BernsteinSpec::stable(0.75).unwrap();
    let rep = transience_check(&s75, 1).unwrap();
    let refused = match rep.require() {
        Err(Error::Recurrent(msg)) => msg.contains(">= d/2"),
        _ => false,
    };
    r.check(!rep.transient && refused, format!("d=1 stable(0.75) refused: gamma2 = {:.4}", rep.gamma2));
    let w = SubordinationWeights::compute(&s75, M, TAIL_TARGET).unwrap();
    let k1 = SrwKernel::new(1, M).unwrap();
    let downstream = matches!(green_series(&w, &k1, 8, 1e-4), Err(Error::Recurrent(_)));
    r.check(downstream, "Green series refuses the recurrent case".into());
    let mut cases = vec![(2, BernsteinSpec::stable(0.5).unwrap())];
    cases.extend(builtin_specs().into_iter().map(|s| (3, s)));
    for (d, spec) in cases {
        let rep = transience_check(&spec, d).unwrap();
        r.check(
            rep.transient && rep.integral.is_finite(),
            format!("d={d} {}: gamma2 = {:.4}, integral {:.4} (shell ratio {:.3})", spec.family(), rep.gamma2, rep.integral, rep.shell_ratio),
        );
    }
    r.finish()
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut gates = vec![weights_correctness()];

    let specs = builtin_specs();
    let w_all: Vec<SubordinationWeights> = specs.iter().map(|s| SubordinationWeights::compute(s, M, TAIL_TARGET).unwrap()).collect();
    let spec = BernsteinSpec::stable(0.5).unwrap();
    let w = w_all.iter().find(|w| w.spec == spec).unwrap().clone();
    let w25 = w_all.iter().find(|w| w.spec == specs[0]).unwrap();
    let k1 = SrwKernel::new(1, M).unwrap();
    let k2 = SrwKernel::new(2, M).unwrap();
    let k3 = SrwKernel::new(3, M).unwrap();
    let law1 = build_step_law(w25, &k1, 32).unwrap();
    let law2 = build_step_law(&w, &k2, LAW_RADIUS_2D).unwrap();
    let law3 = build_step_law(&w, &k3, 16).unwrap();
    let balls = NS
        .iter()
        .map(|&n| Ball { n, sol: solve_green_ball(FiniteDomain::ball(2, [0, 0, 0], n).unwrap(), &law2).unwrap() })
        .collect();
    let sh = Shared { spec: spec.clone(), w, k2, law2, balls };
    let g2 = green_series(&sh.w, &sh.k2, 32, 1e-4).unwrap();

    gates.push(mass_accounting(&sh, &w_all, &[(1, &law1), (2, &sh.law2), (3, &law3)]));
    gates.push(asymptotic_bands(&w_all));
    gates.push(jump_bands(&[(1, &specs[0], &law1), (2, &spec, &sh.law2), (3, &spec, &law3)]));
    gates.push(green_bands(&sh, &g2));
    gates.push(exit_time_bands(&sh));
    gates.push(ball_green_bands(&sh));
    gates.push(poisson_bands(&sh));
    gates.push(harnack(&sh));
    gates.push(identities(&sh, &g2));
    gates.push(monte_carlo(&sh, &g2));
    gates.push(incomplete_gamma());
    gates.push(transience());

    gates.sort_by_key(|g| g.id);
    for g in &gates {
        println!("{} criterion {:2}: {} ({:.1}s)", if g.pass { "PASS" } else { "FAIL" }, g.id, g.name, g.elapsed.as_secs_f64());
        for l in &g.lines {
            println!("        {l}");
        }
    }
    let failed: Vec<usize> = gates.iter().filter(|g| !g.pass).map(|g| g.id).collect();
    println!("{} of {} criteria pass; total {:.1}s", gates.len() - failed.len(), gates.len(), t0.elapsed().as_secs_f64());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
