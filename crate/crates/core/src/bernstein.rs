//! Complete Bernstein functions built from stable-like Lévy densities.
//!
//! Every supported family has a Lévy density of the form
//! `μ(t) = Σ_i c_i t^{-1-α_i} e^{-θ_i t}`, normalized so that `φ(1) = 1`.

use crate::error::{Error, Result};
use crate::quadrature::{integrate_log_peak, Estimate};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Stable { alpha: f64 },
    StableMixture { w1: f64, alpha1: f64, w2: f64, alpha2: f64 },
    Relativistic { alpha: f64, theta: f64 },
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Family::Stable { alpha } => write!(f, "stable(alpha={alpha})"),
            Family::StableMixture { w1, alpha1, w2, alpha2 } => {
                write!(f, "mixture(w1={w1}, alpha1={alpha1}, w2={w2}, alpha2={alpha2})")
            }
            Family::Relativistic { alpha, theta } => {
                write!(f, "relativistic(alpha={alpha}, theta={theta})")
            }
        }
    }
}

/// One term `coef · t^{-1-alpha} · e^{-theta t}` of the normalized Lévy density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyComponent {
    pub coef: f64,
    pub alpha: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinSpec {
    family: Family,
    norm: f64,
    components: Vec<LevyComponent>,
}

fn check_exponent(name: &str, a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must lie in (0,1), got {a}")))
    }
}

fn stable_coef(alpha: f64) -> f64 {
    alpha / gamma(1.0 - alpha)
}

impl BernsteinSpec {
    pub fn new(family: Family) -> Result<Self> {
        let (norm, raw) = match family {
            Family::Stable { alpha } => {
                check_exponent("alpha", alpha)?;
                (1.0, vec![(stable_coef(alpha), alpha, 0.0)])
            }
            Family::StableMixture { w1, alpha1, w2, alpha2 } => {
                check_exponent("alpha1", alpha1)?;
                check_exponent("alpha2", alpha2)?;
                for (name, w) in [("w1", w1), ("w2", w2)] {
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(Error::Parameter(format!("{name} must be positive, got {w}")));
                    }
                }
                (
                    w1 + w2,
                    vec![
                        (w1 * stable_coef(alpha1), alpha1, 0.0),
                        (w2 * stable_coef(alpha2), alpha2, 0.0),
                    ],
                )
            }
            Family::Relativistic { alpha, theta } => {
                check_exponent("alpha", alpha)?;
                if !(theta > 0.0 && theta.is_finite()) {
                    return Err(Error::Parameter(format!("theta must be positive, got {theta}")));
                }
                ((1.0 + theta).powf(alpha) - theta.powf(alpha), vec![(stable_coef(alpha), alpha, theta)])
            }
        };
        let components = raw
            .into_iter()
            .map(|(c, alpha, theta)| LevyComponent { coef: c / norm, alpha, theta })
            .collect();
        Ok(Self { family, norm, components })
    }

    pub fn stable(alpha: f64) -> Result<Self> {
        Self::new(Family::Stable { alpha })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn components(&self) -> &[LevyComponent] {
        &self.components
    }

    pub fn alpha_params(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.alpha).collect()
    }

    pub fn min_alpha(&self) -> f64 {
        self.components.iter().map(|c| c.alpha).fold(f64::INFINITY, f64::min)
    }

    /// Normalized Laplace exponent `φ(λ)`.
    pub fn phi(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("phi needs lambda > 0, got {lambda}")));
        }
        Ok(self.phi_unchecked(lambda))
    }

    pub(crate) fn phi_unchecked(&self, lambda: f64) -> f64 {
        match self.family {
            Family::Stable { alpha } => lambda.powf(alpha),
            Family::StableMixture { w1, alpha1, w2, alpha2 } => {
                (w1 * lambda.powf(alpha1) + w2 * lambda.powf(alpha2)) / self.norm
            }
            Family::Relativistic { alpha, theta } => {
                theta.powf(alpha) * (alpha * (lambda / theta).ln_1p()).exp_m1() / self.norm
            }
        }
    }

    /// `φ'(0)`, infinite for families without a first moment.
    pub fn phi_slope_at_zero(&self) -> f64 {
        match self.family {
            Family::Relativistic { alpha, theta } => alpha * theta.powf(alpha - 1.0) / self.norm,
            _ => f64::INFINITY,
        }
    }

    pub fn levy_density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("levy density needs t > 0, got {t}")));
        }
        Ok(self.ln_levy_density(t.ln()).exp())
    }

    /// `ln μ(e^s)`.
    pub fn ln_levy_density(&self, s: f64) -> f64 {
        let t = s.exp();
        log_sum_exp(
            self.components
                .iter()
                .map(|c| c.coef.ln() - (1.0 + c.alpha) * s - c.theta * t),
        )
    }

    /// Potential density `u(t)` with Laplace transform `1/φ`; closed form only
    /// for the pure stable family.
    pub fn potential_density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("potential density needs t > 0, got {t}")));
        }
        match self.ln_potential_density_fn() {
            Some(f) => Ok(f(t.ln()).exp()),
            None => Err(Error::Unavailable(format!(
                "no closed-form potential density for {}",
                self.family
            ))),
        }
    }

    /// `s ↦ ln u(e^s)` when the potential density is known in closed form.
    pub fn ln_potential_density_fn(&self) -> Option<impl Fn(f64) -> f64> {
        match self.family {
            Family::Stable { alpha } => {
                let c = self.norm.ln() - statrs::function::gamma::ln_gamma(alpha);
                Some(move |s: f64| c + (alpha - 1.0) * s)
            }
            _ => None,
        }
    }

    /// `∫ (1 - e^{-λt}) μ(t) dt` by quadrature in `s = ln t`.
    pub fn phi_by_quadrature(&self, lambda: f64) -> Result<Estimate> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("phi needs lambda > 0, got {lambda}")));
        }
        let f = |s: f64| {
            let t = s.exp();
            (-(-lambda * t).exp_m1()).ln() + self.ln_levy_density(s) + s
        };
        integrate_log_peak(f, -lambda.ln(), 1.0, None, 1e-12)
    }

    /// Green profile `1 / (r^d φ(r^-2))`.
    pub fn green_profile(&self, r: f64, d: usize) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("green profile needs r > 0, got {r}")));
        }
        Ok(1.0 / (r.powi(d as i32) * self.phi_unchecked(r.powi(-2))))
    }

    /// Jump profile `r^-d φ(r^-2)`.
    pub fn jump_profile(&self, r: f64, d: usize) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("jump profile needs r > 0, got {r}")));
        }
        Ok(r.powi(-(d as i32)) * self.phi_unchecked(r.powi(-2)))
    }

    /// Fits power-law scaling of `φ` on a log grid in `(0, 1]`.
    pub fn estimate_scaling(&self, grid_size: usize) -> Result<ScalingEstimate> {
        if grid_size < 16 {
            return Err(Error::Parameter(format!("scaling grid needs at least 16 points, got {grid_size}")));
        }
        let grid = scaling_grid(grid_size);
        let vals: Vec<f64> = grid.iter().map(|&r| self.phi_unchecked(r)).collect();
        let mut g1 = f64::INFINITY;
        let mut g2 = f64::NEG_INFINITY;
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let slope = (vals[j] / vals[i]).ln() / (grid[j] / grid[i]).ln();
                g1 = g1.min(slope);
                g2 = g2.max(slope);
            }
        }
        let mut a1 = f64::INFINITY;
        let mut a2 = f64::NEG_INFINITY;
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let ratio = vals[j] / vals[i];
                let x = grid[j] / grid[i];
                a1 = a1.min(ratio / x.powf(g1));
                a2 = a2.max(ratio / x.powf(g2));
            }
        }
        Ok(ScalingEstimate {
            a1,
            gamma1: g1,
            a2,
            gamma2: g2,
            grid_size,
            degenerate: g1 >= 1.0,
            upper_scaling_fails: g2 >= 1.0 - 1e-3,
        })
    }
}

/// The specs every band scan runs over: stable at three exponents and an
/// equal-weight mixture of the outer two.
pub fn builtin_specs() -> Vec<BernsteinSpec> {
    let mut v: Vec<BernsteinSpec> = [0.25, 0.5, 0.75].iter().map(|&a| BernsteinSpec::stable(a).unwrap()).collect();
    v.push(BernsteinSpec::new(Family::StableMixture { w1: 1.0, alpha1: 0.25, w2: 1.0, alpha2: 0.75 }).unwrap());
    v
}

pub(crate) fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub const SCALING_GRID_MIN: f64 = 1e-8;

/// Log-spaced points in `[SCALING_GRID_MIN, 1]`.
pub fn scaling_grid(size: usize) -> Vec<f64> {
    let lo = SCALING_GRID_MIN.ln();
    (0..size)
        .map(|i| (lo * (1.0 - i as f64 / (size - 1) as f64)).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingEstimate {
    pub a1: f64,
    pub gamma1: f64,
    pub a2: f64,
    pub gamma2: f64,
    pub grid_size: usize,
    /// Lower exponent reached 1.
    pub degenerate: bool,
    /// Upper exponent is 1 to grid resolution.
    pub upper_scaling_fails: bool,
}

impl ScalingEstimate {
    /// Number of grid pairs violating either fitted power-law bound.
    pub fn violations(&self, spec: &BernsteinSpec) -> usize {
        let grid = scaling_grid(self.grid_size);
        let mut bad = 0;
        for (i, &r) in grid.iter().enumerate() {
            for &big_r in &grid[i..] {
                let ratio = spec.phi_unchecked(big_r) / spec.phi_unchecked(r);
                let x = big_r / r;
                let tol = 1e-12 * ratio;
                if ratio < self.a1 * x.powf(self.gamma1) - tol || ratio > self.a2 * x.powf(self.gamma2) + tol {
                    bad += 1;
                }
            }
        }
        bad
    }

    pub fn is_valid(&self) -> bool {
        !self.degenerate && self.gamma1 <= self.gamma2
    }
}

/// Counts pairs where `min(1,λ) ≤ φ(λt)/φ(t) ≤ max(1,λ)` fails.
pub fn ratio_bound_violations(spec: &BernsteinSpec, lambdas: &[f64], ts: &[f64]) -> usize {
    let mut bad = 0;
    for &l in lambdas {
        for &t in ts {
            let q = spec.phi_unchecked(l * t) / spec.phi_unchecked(t);
            let tol = 1e-12 * q;
            if q < l.min(1.0) - tol || q > l.max(1.0) + tol {
                bad += 1;
            }
        }
    }
    bad
}
