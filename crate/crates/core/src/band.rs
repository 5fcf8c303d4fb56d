//! Two-sided comparability bands `lo ≤ value ≤ hi` recorded over a scan.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for Band {
    fn default() -> Self {
        Self { lo: f64::INFINITY, hi: f64::NEG_INFINITY, count: 0 }
    }
}

impl Band {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn include(&mut self, v: f64) {
        self.lo = self.lo.min(v);
        self.hi = self.hi.max(v);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Band) {
        self.lo = self.lo.min(other.lo);
        self.hi = self.hi.max(other.hi);
        self.count += other.count;
    }

    /// `hi / lo`; infinite when the band is empty or touches zero.
    pub fn ratio(&self) -> f64 {
        if self.count == 0 || !(self.lo > 0.0) {
            f64::INFINITY
        } else {
            self.hi / self.lo
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut b = Self::new();
        for v in values {
            b.include(v);
        }
        b
    }
}

/// Largest over smallest of a family of positive numbers, e.g. a per-n
/// statistic across scales.
pub fn variation(values: &[f64]) -> f64 {
    Band::from_values(values.iter().copied()).ratio()
}
