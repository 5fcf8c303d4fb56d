use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{coord_header, coords, float, write_json, Gate, Table};
use serde::Serialize;
use serde_json::{json, Value};
use std::cell::OnceCell;
use subwalk::band::{variation, Band};
use subwalk::bernstein::BernsteinSpec;
use subwalk::domain::*;
use subwalk::green::{green_series, transience_check, GreenTable, TransienceReport};
use subwalk::lattice::{kernel_peak_constant, norm, sub, Site, SrwKernel};
use subwalk::mc::*;
use subwalk::subordination::*;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<subwalk::Error> for Failure {
    fn from(e: subwalk::Error) -> Self {
        use subwalk::Error::*;
        match e {
            Quadrature { .. } | Singular(_) | Censored(_) => Failure::Run(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

pub type Outcome = Result<Vec<Gate>, Failure>;

const BAND_LIMIT_WEIGHTS: f64 = 3.0;
const BAND_LIMIT_LAW: f64 = 10.0;
const BAND_LIMIT_GREEN: f64 = 10.0;
const BAND_LIMIT_EXIT: f64 = 3.0;
const BAND_LIMIT_BALL: f64 = 20.0;
const CROSS_N_LIMIT: f64 = 2.0;
const CAPTURED_MIN: f64 = 0.9;
const MASS_TOL: f64 = 1e-10;

/// Lazily built objects shared by the subcommands of one run.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub spec: BernsteinSpec,
    weights: OnceCell<SubordinationWeights>,
    kernel: OnceCell<SrwKernel>,
    law: OnceCell<StepLaw>,
    green: OnceCell<GreenTable>,
    balls: OnceCell<Vec<(f64, DomainSolution)>>,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, Failure> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.out)?;
        let spec = cfg.spec()?;
        Ok(Self {
            cfg,
            spec,
            weights: OnceCell::new(),
            kernel: OnceCell::new(),
            law: OnceCell::new(),
            green: OnceCell::new(),
            balls: OnceCell::new(),
        })
    }

    fn d(&self) -> usize {
        self.cfg.d
    }

    fn weights(&self) -> Result<&SubordinationWeights, Failure> {
        if self.weights.get().is_none() {
            let w = SubordinationWeights::compute(&self.spec, self.cfg.m, self.cfg.tail_target)?;
            let _ = self.weights.set(w);
        }
        Ok(self.weights.get().unwrap())
    }

    fn kernel(&self) -> Result<&SrwKernel, Failure> {
        if self.kernel.get().is_none() {
            let _ = self.kernel.set(SrwKernel::new(self.d(), self.cfg.m)?);
        }
        Ok(self.kernel.get().unwrap())
    }

    fn law(&self) -> Result<&StepLaw, Failure> {
        if self.law.get().is_none() {
            let law = build_step_law(self.weights()?, self.kernel()?, self.cfg.law_radius())?;
            let _ = self.law.set(law);
        }
        Ok(self.law.get().unwrap())
    }

    fn green(&self) -> Result<&GreenTable, Failure> {
        if self.green.get().is_none() {
            let t = green_series(self.weights()?, self.kernel()?, self.cfg.green_radius(), subwalk::green::DEFAULT_TAIL_TOLERANCE)?;
            let _ = self.green.set(t);
        }
        Ok(self.green.get().unwrap())
    }

    fn balls(&self) -> Result<&[(f64, DomainSolution)], Failure> {
        if self.balls.get().is_none() {
            let law = self.law()?;
            let mut v = Vec::new();
            for &n in &self.cfg.ns {
                v.push((n, solve_green_ball(FiniteDomain::ball(self.d(), [0, 0, 0], n)?, law)?));
            }
            let _ = self.balls.set(v);
        }
        Ok(self.balls.get().unwrap())
    }

    fn emit(&self, name: &str, gates: &[Gate], data: Value) -> Result<(), Failure> {
        let report = json!({ "command": name, "config": self.cfg, "gates": gates, "data": data });
        write_json(&self.cfg.out.join(format!("{name}.json")), &report)?;
        Ok(())
    }
}

fn cross_n(claim: &str, bands: &[Band]) -> Vec<Gate> {
    if bands.len() < 2 {
        return Vec::new();
    }
    let lo: Vec<f64> = bands.iter().map(|b| b.lo).collect();
    let hi: Vec<f64> = bands.iter().map(|b| b.hi).collect();
    vec![
        Gate::at_most(&format!("{claim}-lower-variation"), None, variation(&lo), CROSS_N_LIMIT),
        Gate::at_most(&format!("{claim}-upper-variation"), None, variation(&hi), CROSS_N_LIMIT),
    ]
}

pub fn weights(ctx: &Context) -> Outcome {
    let w = ctx.weights()?;
    let integral = w.c_integral.as_ref();
    let mut header = vec!["m".to_string(), "c_m".into(), "c_renewal".into()];
    if integral.is_some() {
        header.push("c_integral".into());
    }
    let mut t = Table::create(&ctx.cfg.out.join("weights.csv"), &header)?;
    for m in 0..=w.truncation_m {
        let mut row = vec![m.to_string(), float(w.cm[m]), float(w.c_renewal[m])];
        if let Some(ci) = integral {
            row.push(float(ci[m]));
        }
        t.row(row)?;
    }
    t.finish()?;
    let hi = w.truncation_m.min(2000);
    let a = cm_asymptotic_report(w, 10.min(hi), hi);
    let b = renewal_asymptotic_report(w, 10.min(hi), hi);
    let gates = vec![
        Gate::band("cm-asymptotic-band", None, &a, BAND_LIMIT_WEIGHTS),
        Gate::band("renewal-asymptotic-band", None, &b, BAND_LIMIT_WEIGHTS),
        Gate::at_most("unaccounted-weight-mass", None, w.unaccounted_mass, ctx.cfg.tail_target),
    ];
    let data = json!({
        "truncation_m": w.truncation_m,
        "raw_tail_mass": w.tail_mass,
        "continued_tail": w.continued_tail,
        "unaccounted_mass": w.unaccounted_mass,
        "integral_route_deviation": w.integral_deviation(),
    });
    ctx.emit("weights", &gates, data)?;
    Ok(gates)
}

pub fn steplaw(ctx: &Context) -> Outcome {
    let law = ctx.law()?;
    let d = ctx.d();
    let mut header = coord_header("z", d);
    header.push("prob".into());
    let mut t = Table::create(&ctx.cfg.out.join("steplaw.csv"), &header)?;
    for (z, p) in law.jumps() {
        let mut row = coords(&z, d);
        row.push(float(p));
        t.row(row)?;
    }
    t.finish()?;
    let r = ctx.cfg.band_radius.min(law.support_radius() as f64);
    let band = law.jump_band(&ctx.spec, 1.0, r);
    let gates = vec![
        Gate::band("jump-band", None, &band, BAND_LIMIT_LAW),
        Gate::at_most("step-law-total-mass", None, (law.total_mass() - 1.0).abs(), MASS_TOL),
    ];
    let data = json!({
        "support_radius": law.support_radius(),
        "stay_prob": law.stay_prob,
        "unassigned_mass": law.unassigned_mass,
        "tail_error": law.tail_error,
        "band_radius": r,
    });
    ctx.emit("steplaw", &gates, data)?;
    Ok(gates)
}

fn transience(ctx: &Context) -> Result<TransienceReport, Failure> {
    let rep = transience_check(&ctx.spec, ctx.d())?;
    rep.require()?;
    Ok(rep)
}

pub fn green(ctx: &Context) -> Outcome {
    let rep = transience(ctx)?;
    let g = ctx.green()?;
    let d = ctx.d();
    let mut header = coord_header("x", d);
    header.extend(["green".to_string(), "tail_bound".into()]);
    let mut t = Table::create(&ctx.cfg.out.join("green.csv"), &header)?;
    let mut entries = g.entries();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    for (x, v, tb) in entries {
        let mut row = coords(&x, d);
        row.extend([float(v), float(tb)]);
        t.row(row)?;
    }
    t.finish()?;
    let r = ctx.cfg.band_radius.min(g.radius() as f64);
    let band = g.band(&ctx.spec, 1.0, r);
    let gates = vec![
        Gate::band("green-band", None, &band, BAND_LIMIT_GREEN),
        Gate::at_most("green-relative-tail", None, g.max_relative_tail(), subwalk::green::DEFAULT_TAIL_TOLERANCE),
    ];
    ctx.emit("green", &gates, json!({ "transience": rep, "band_radius": r }))?;
    Ok(gates)
}

pub fn ball(ctx: &Context) -> Outcome {
    let d = ctx.d();
    let (a, b1, b2) = (ctx.cfg.a, ctx.cfg.b1, ctx.cfg.b2);
    let mut gates = Vec::new();
    let mut lower_all = Band::new();
    let mut ball_bands = Vec::new();
    let mut per_n = Vec::new();
    let green = transience(ctx).and_then(|_| ctx.green()).ok();
    for (n, sol) in ctx.balls()? {
        let n = *n;
        let mut t = Table::create(&ctx.cfg.out.join(format!("eta_n{n}.csv")), &[coord_header("y", d), vec!["eta".into()]].concat())?;
        for (y, e) in sol.domain.points().iter().zip(&sol.eta) {
            t.row([coords(y, d), vec![float(*e)]].concat())?;
        }
        t.finish()?;
        let xs = sol.domain.within(b1 * n);
        let cols = sol.green_columns(&xs);
        let mut t = Table::create(
            &ctx.cfg.out.join(format!("green_ball_n{n}.csv")),
            &[coord_header("x", d), coord_header("y", d), vec!["green_ball".into()]].concat(),
        )?;
        for (&x, c) in xs.iter().zip(&cols) {
            for (y, v) in sol.domain.points().iter().zip(c) {
                t.row([coords(&sol.domain.points()[x], d), coords(y, d), vec![float(*v)]].concat())?;
            }
        }
        t.finish()?;

        let lower = exit_time_band(&ctx.spec, sol, a * n / 2.0);
        let upper = exit_time_band(&ctx.spec, sol, n);
        lower_all.merge(&lower);
        let gb = ball_green_band(sol, b1, b2);
        gates.push(Gate::band("ball-green-band", Some(n), &gb, BAND_LIMIT_BALL));
        ball_bands.push(gb);
        let comparison = match green {
            Some(g) => whole_space_comparison(sol, g, a).ok().map(|(b, excess)| json!({ "band": b, "max_excess": excess })),
            None => None,
        };
        per_n.push(json!({
            "n": n,
            "points": sol.len(),
            "exit_time_inner": lower,
            "exit_time_ball": upper,
            "ball_green": gb,
            "whole_space_comparison": comparison,
            "eta_residual": sol.eta_residual(),
        }));
    }
    gates.insert(0, Gate::band("exit-time-band", None, &lower_all, BAND_LIMIT_EXIT));
    gates.extend(cross_n("ball-green", &ball_bands));
    ctx.emit("ball", &gates, json!({ "per_n": per_n }))?;
    Ok(gates)
}

pub fn poisson(ctx: &Context) -> Outcome {
    let d = ctx.d();
    let law = ctx.law()?;
    let mut gates = Vec::new();
    let mut bands = Vec::new();
    let mut per_n = Vec::new();
    for (n, sol) in ctx.balls()? {
        let n = *n;
        let xs = sol.domain.within(ctx.cfg.b1 * n);
        let rows = poisson_rows(sol, law, &xs, 4.0 * n)?;
        let band = poisson_band(&ctx.spec, sol, &rows, 4.0 * n, ctx.cfg.b2);
        gates.push(Gate::band("poisson-band", Some(n), &band, BAND_LIMIT_BALL));
        bands.push(band);
        let center = sol.domain.index_of(&sol.domain.center()).unwrap_or(0);
        let row = rows.iter().find(|r| r.x == sol.domain.points()[center]).unwrap_or(&rows[0]);
        let mut t = Table::create(&ctx.cfg.out.join(format!("poisson_n{n}.csv")), &[coord_header("z", d), vec!["kernel".into()]].concat())?;
        for (z, k) in &row.entries {
            t.row([coords(z, d), vec![float(*k)]].concat())?;
        }
        t.finish()?;
        let wide = if 8.0 * n <= law.support_radius() as f64 { Some(poisson_kernel(sol, law, center, 8.0 * n)?.captured_mass) } else { None };
        if let Some(c) = wide {
            gates.push(Gate::at_least("captured-exit-mass-8n", Some(n), c, CAPTURED_MIN));
        }
        per_n.push(json!({ "n": n, "band": band, "captured_mass_4n": row.captured_mass, "captured_mass_8n": wide }));
    }
    gates.extend(cross_n("poisson", &bands));
    ctx.emit("poisson", &gates, json!({ "per_n": per_n }))?;
    Ok(gates)
}

#[derive(Serialize)]
struct HarnackRow {
    a: f64,
    factor: f64,
    ratios: Vec<f64>,
    variation: f64,
}

pub fn harnack(ctx: &Context) -> Outcome {
    let law = ctx.law()?;
    let factors = [1.5, 2.0, 4.0];
    let mut rows = Vec::new();
    let mut gates = Vec::new();
    for &a in &ctx.cfg.harnack_a {
        let mut ratios = vec![Vec::new(); factors.len()];
        for (n, sol) in ctx.balls()? {
            let z0s: Vec<Site> = factors.iter().map(|f| [(f * n).round() as i64, 0, 0]).collect();
            for (k, e) in harnack_ratio(sol, law, a, &z0s, 4.0 * n)?.iter().enumerate() {
                ratios[k].push(e.ratio);
            }
        }
        for (f, r) in factors.iter().zip(ratios) {
            let v = variation(&r);
            if a == ctx.cfg.b1 {
                gates.push(Gate::at_most(&format!("harnack-variation-{f}n"), None, v, CROSS_N_LIMIT));
            }
            rows.push(HarnackRow { a, factor: *f, ratios: r, variation: v });
        }
    }
    ctx.emit("harnack", &gates, json!({ "ns": ctx.cfg.ns, "rows": rows }))?;
    Ok(gates)
}

fn comparison_gate(claim: &str, c: &OracleComparison) -> Gate {
    let dev = (c.estimate.value - c.exact).abs();
    Gate { claim_id: claim.into(), n: None, band_lo: None, band_hi: None, value: dev, limit: 3.0 * c.estimate.std_error + c.bias_bound, pass: c.pass }
}

pub fn mc(ctx: &Context) -> Outcome {
    let d = ctx.d();
    let w = ctx.weights()?;
    let law = ctx.law()?;
    let sampler = TableRSampler::new(w);
    let cfg = &ctx.cfg;
    let mut gates = Vec::new();
    let mut data = serde_json::Map::new();

    if transience(ctx).is_ok() {
        let g = ctx.green()?;
        let x: Site = [1, 0, 0];
        let cp = kernel_constant(kernel_peak_constant(ctx.kernel()?, cfg.m), d);
        let bias = green_truncation_bias(&ctx.spec, d, cfg.green_steps, cp)?;
        let run = McConfig { seed: cfg.seed, n_paths: cfg.green_paths, max_steps: cfg.green_steps as u64, worker_count: cfg.workers };
        let est = estimate_green(&sampler, d, &x, cfg.green_steps, bias, &run)?;
        let c = OracleComparison::new("green", est.estimate, g.get(&x).unwrap_or(f64::NAN), bias);
        gates.push(comparison_gate("mc-green", &c));
        data.insert("green".into(), json!(c));
    }

    let n = cfg.ns[0];
    let sol = &ctx.balls()?[0].1;
    let start = sol.domain.index_of(&sol.domain.center()).unwrap();
    let run = McConfig { seed: cfg.seed.wrapping_add(1), n_paths: cfg.paths, max_steps: cfg.max_steps, worker_count: cfg.workers };
    let sample = exit_sample(&sol.domain, &sampler, &sol.domain.center(), &run)?;
    let et = exit_time_check(sol, law, start, &sample);
    gates.push(comparison_gate("mc-exit-time", &et));
    data.insert("exit_time".into(), json!(et));
    data.insert("censored".into(), json!(sample.censored));

    let window = (8.0 * n).min(law.support_radius() as f64);
    let row = poisson_kernel(sol, law, start, window)?;
    let tv = exit_law_tv(&sample, &row, &sol.domain.center(), 2.0 * n);
    gates.push(Gate::at_most("mc-exit-law-tv", Some(n), tv.total_variation, 0.02));
    let wide = exit_law_tv(&sample, &row, &sol.domain.center(), 4.0 * n);
    data.insert("exit_law".into(), json!([tv, wide]));

    let c = sol.domain.center();
    let (far_cut, cap) = (2.0 * n, 4.0 * n);
    let fs = [
        ExitFunctional { name: "one".into(), f: Box::new(|_, _| 1.0), far_range: (1.0, 1.0) },
        ExitFunctional { name: "beyond-2n".into(), f: Box::new(move |_, z: &Site| f64::from(norm(&sub(z, &c)) >= far_cut)), far_range: (1.0, 1.0) },
        ExitFunctional { name: "capped-jump".into(), f: Box::new(move |y: &Site, z: &Site| norm(&sub(z, y)).min(cap)), far_range: (cap, cap) },
    ];
    let mut iw = Vec::new();
    for f in &fs {
        let r = ikeda_watanabe_check(sol, law, f, start, &sample);
        gates.push(Gate {
            claim_id: format!("mc-exit-formula-{}", r.name),
            n: Some(n),
            band_lo: None,
            band_hi: None,
            value: (r.lhs.value - r.rhs).abs(),
            limit: 3.0 * r.lhs.std_error + r.rhs_bound,
            pass: r.pass,
        });
        iw.push(r);
    }
    data.insert("exit_formula".into(), json!(iw));
    ctx.emit("mc", &gates, Value::Object(data))?;
    Ok(gates)
}
