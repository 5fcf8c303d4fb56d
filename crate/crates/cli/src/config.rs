use ini::Ini;
use serde::Serialize;
use std::path::{Path, PathBuf};
use subwalk::bernstein::{BernsteinSpec, Family};
use subwalk::domain::{DEFAULT_A, DEFAULT_B1, DEFAULT_B2};
use subwalk::subordination::{DEFAULT_TAIL_TARGET, DEFAULT_TRUNCATION};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every setting an experiment reads. Defaults reproduce the reference runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub family: String,
    pub alpha: f64,
    pub w1: f64,
    pub alpha1: f64,
    pub w2: f64,
    pub alpha2: f64,
    pub theta: f64,
    pub d: usize,
    pub m: usize,
    pub tail_target: f64,
    /// Half-width of the step-law window; 0 picks a per-dimension default.
    pub law_radius: usize,
    /// Half-width of the Green table; 0 picks a per-dimension default.
    pub green_radius: usize,
    pub band_radius: f64,
    pub ns: Vec<f64>,
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub harnack_a: Vec<f64>,
    pub seed: u64,
    pub paths: usize,
    pub green_paths: usize,
    pub green_steps: usize,
    pub workers: usize,
    pub max_steps: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: "stable".into(),
            alpha: 0.5,
            w1: 1.0,
            alpha1: 0.25,
            w2: 1.0,
            alpha2: 0.75,
            theta: 1.0,
            d: 2,
            m: DEFAULT_TRUNCATION,
            tail_target: DEFAULT_TAIL_TARGET,
            law_radius: 0,
            green_radius: 0,
            band_radius: 16.0,
            ns: vec![8.0, 16.0, 32.0],
            a: DEFAULT_A,
            b1: DEFAULT_B1,
            b2: DEFAULT_B2,
            harnack_a: vec![DEFAULT_B1, 0.5],
            seed: 20240611,
            paths: 1_000_000,
            green_paths: 100_000,
            green_steps: 400,
            workers: 8,
            max_steps: 100_000,
            out: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[(&str, &[&str])] = &[
    ("spec", &["family", "alpha", "w1", "alpha1", "w2", "alpha2", "theta"]),
    ("walk", &["d", "m", "tail_target", "law_radius", "green_radius", "band_radius"]),
    ("ball", &["n", "a", "b1", "b2", "harnack_a"]),
    ("mc", &["seed", "paths", "green_paths", "green_steps", "workers", "max_steps"]),
    ("output", &["out"]),
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim().parse().map_err(|_| ConfigError(format!("{key}: cannot parse {v:?}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| num(key, s)).collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_file(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        for (section, props) in &ini {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError(format!("key {k:?} must sit under a [section]")));
                }
                continue;
            };
            for (k, v) in props.iter() {
                cfg.set(section, k, v)?;
            }
        }
        Ok(cfg)
    }

    /// Sets `[section] key = value`, rejecting anything unknown.
    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), ConfigError> {
        let known = KEYS
            .iter()
            .find(|(s, _)| *s == section)
            .ok_or_else(|| ConfigError(format!("unknown section [{section}]")))?;
        if !known.1.contains(&key) {
            return Err(ConfigError(format!("unknown key {key:?} in [{section}]; expected one of {}", known.1.join(", "))));
        }
        let v = v.trim();
        match key {
            "family" => self.family = v.to_lowercase(),
            "alpha" => self.alpha = num(key, v)?,
            "w1" => self.w1 = num(key, v)?,
            "alpha1" => self.alpha1 = num(key, v)?,
            "w2" => self.w2 = num(key, v)?,
            "alpha2" => self.alpha2 = num(key, v)?,
            "theta" => self.theta = num(key, v)?,
            "d" => self.d = num(key, v)?,
            "m" => self.m = num(key, v)?,
            "tail_target" => self.tail_target = num(key, v)?,
            "law_radius" => self.law_radius = num(key, v)?,
            "green_radius" => self.green_radius = num(key, v)?,
            "band_radius" => self.band_radius = num(key, v)?,
            "n" => self.ns = list(key, v)?,
            "a" => self.a = num(key, v)?,
            "b1" => self.b1 = num(key, v)?,
            "b2" => self.b2 = num(key, v)?,
            "harnack_a" => self.harnack_a = list(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "paths" => self.paths = num(key, v)?,
            "green_paths" => self.green_paths = num(key, v)?,
            "green_steps" => self.green_steps = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "max_steps" => self.max_steps = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => unreachable!(),
        }
        Ok(())
    }

    /// `section.key=value`.
    pub fn set_dotted(&mut self, s: &str) -> Result<(), ConfigError> {
        let (lhs, v) = s.split_once('=').ok_or_else(|| ConfigError(format!("override {s:?} is not section.key=value")))?;
        let (section, key) = lhs.split_once('.').ok_or_else(|| ConfigError(format!("override {s:?} is not section.key=value")))?;
        self.set(section.trim(), key.trim(), v)
    }

    pub fn family(&self) -> Result<Family, ConfigError> {
        Ok(match self.family.as_str() {
            "stable" => Family::Stable { alpha: self.alpha },
            "mixture" => Family::StableMixture { w1: self.w1, alpha1: self.alpha1, w2: self.w2, alpha2: self.alpha2 },
            "relativistic" => Family::Relativistic { alpha: self.alpha, theta: self.theta },
            f => return Err(ConfigError(format!("unknown family {f:?}; expected stable, mixture or relativistic"))),
        })
    }

    pub fn spec(&self) -> Result<BernsteinSpec, ConfigError> {
        BernsteinSpec::new(self.family()?).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn law_radius(&self) -> usize {
        match (self.law_radius, self.d) {
            (0, 1) => 32,
            (0, 2) => 160,
            (0, _) => 16,
            (r, _) => r,
        }
    }

    pub fn green_radius(&self) -> usize {
        match (self.green_radius, self.d) {
            (0, 3) => 16,
            (0, _) => 32,
            (r, _) => r,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spec()?;
        if !(1..=3).contains(&self.d) {
            return Err(ConfigError(format!("d must be 1, 2 or 3, got {}", self.d)));
        }
        if self.m < 2 {
            return Err(ConfigError(format!("m must be at least 2, got {}", self.m)));
        }
        if !(self.tail_target > 0.0) {
            return Err(ConfigError(format!("tail_target must be positive, got {}", self.tail_target)));
        }
        if self.ns.is_empty() || self.ns.iter().any(|&n| !(n >= 1.0)) {
            return Err(ConfigError(format!("ball radii must be at least 1, got {:?}", self.ns)));
        }
        for (name, v) in [("a", self.a), ("b1", self.b1), ("b2", self.b2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.harnack_a.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(ConfigError(format!("harnack_a entries must lie in (0,1), got {:?}", self.harnack_a)));
        }
        if self.paths == 0 || self.green_paths == 0 || self.workers == 0 || self.max_steps == 0 {
            return Err(ConfigError("mc paths, workers and max_steps must be positive".into()));
        }
        Ok(())
    }
}
