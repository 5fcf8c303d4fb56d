//! Log-gamma helpers that stay accurate for arguments far beyond the range
//! where plain `ln_gamma` differences are usable.

use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Remainder of Stirling's formula: `ln Γ(x+1) - (x ln x - x + ln(2πx)/2)`.
pub fn stirling_correction(x: f64) -> f64 {
    if x >= 10.0 {
        let r = 1.0 / x;
        let r2 = r * r;
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0
                        - r2 * (1.0 / 1188.0
                            - r2 * (691.0 / 360_360.0 - r2 * (1.0 / 156.0 - r2 * 3617.0 / 122_400.0)))))))
    } else {
        ln_gamma(x + 1.0) - (x * x.ln() - x + 0.5 * (LN_2PI + x.ln()))
    }
}

/// `ln Γ(x+a) - ln Γ(x+b)` without cancellation for large `x`.
pub fn ln_gamma_ratio(x: f64, a: f64, b: f64) -> f64 {
    // ln Γ(y) = (y - 1/2) ln y - y + ln(2π)/2 + stirling_correction(y)
    if x > 0.0 && x + a.min(b) >= 10.0 {
        (a - b) * (x.ln() - 1.0) + (x + a - 0.5) * (a / x).ln_1p()
            - (x + b - 0.5) * (b / x).ln_1p()
            + stirling_correction(x + a)
            - stirling_correction(x + b)
    } else {
        ln_gamma(x + a) - ln_gamma(x + b)
    }
}

/// `ln[ C(m, (m+j)/2) 2^-m ]` for real `m >= |j|`, the probability that a
/// ±1 walk of `m` steps sits at `j`.
pub fn ln_half_binomial(m: f64, j: f64) -> f64 {
    let k1 = 0.5 * (m + j);
    let k2 = 0.5 * (m - j);
    if k1 < 0.0 || k2 < 0.0 {
        return f64::NEG_INFINITY;
    }
    if k1.min(k2) >= 10.0 {
        let u = j / m;
        -k1 * u.ln_1p() - k2 * (-u).ln_1p() - 0.5 * (PI * m / 2.0).ln() - 0.5 * (-u * u).ln_1p()
            + stirling_correction(m)
            - stirling_correction(k1)
            - stirling_correction(k2)
    } else {
        ln_gamma(m + 1.0) - ln_gamma(k1 + 1.0) - ln_gamma(k2 + 1.0) - m * std::f64::consts::LN_2
    }
}

/// `e^v - 1 - v`, accurate for tiny `|v|`.
pub fn expm1_minus_linear(v: f64) -> f64 {
    if v.abs() < 0.05 {
        let mut term = v * v / 2.0;
        let mut sum = term;
        for k in 3..14 {
            term *= v / k as f64;
            sum += term;
        }
        sum
    } else {
        v.exp_m1() - v
    }
}

/// Table of `ln k!` for integer `k`.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new(max: usize) -> Self {
        let table = (0..=max).map(|k| ln_gamma(k as f64 + 1.0)).collect();
        Self { table }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln C(n, k)`.
    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.table[n] - self.table[k] - self.table[n - k]
    }

    /// Integer counterpart of [`ln_half_binomial`]; `None` when the parity or
    /// range rules out the position.
    #[inline]
    pub fn ln_half_binomial(&self, m: usize, j: i64) -> Option<f64> {
        let ja = j.unsigned_abs() as usize;
        if ja > m || (m + ja) % 2 == 1 {
            return None;
        }
        let k = (m + ja) / 2;
        Some(self.ln_choose(m, k) - m as f64 * std::f64::consts::LN_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 30-digit arithmetic.
    #[test]
    fn correction_reference_values() {
        for (x, r) in [(9.99, 0.008_338_896_797_734_330), (10.0, 0.008_330_563_433_362_871), (55.5, 0.001_501_485_254_310_950)] {
            assert!((stirling_correction(x) - r).abs() < 2e-14, "{x}");
        }
    }

    #[test]
    fn gamma_ratio_reference_values() {
        let cases = [
            (10.5, 0.5, 1.0, -1.187_587_903_491_726_0),
            (37.0, 0.25, 1.0, -2.710_727_866_509_325_8),
            (250.0, -0.75, 1.0, -9.659_927_222_050_820_9),
            (4000.0, 1.0, 0.75, 2.073_535_847_037_179_9),
            (1e6, 0.5, 1.0, -6.907_755_403_982_137_1),
        ];
        for (x, a, b, r) in cases {
            assert!((ln_gamma_ratio(x, a, b) - r).abs() < 1e-14, "{x} {a} {b}");
        }
    }

    #[test]
    fn gamma_ratio_huge_argument_power_law() {
        let x = 1e24;
        let r = ln_gamma_ratio(x, 0.5, 1.0);
        assert!((r - (-0.5 * x.ln())).abs() < 1e-12);
    }

    #[test]
    fn half_binomial_agrees_with_table() {
        let t = LnFactorial::new(500);
        for m in [20usize, 21, 100, 499] {
            for j in (-(m as i64)..=m as i64).step_by(1) {
                match t.ln_half_binomial(m, j) {
                    Some(v) => {
                        let s = ln_half_binomial(m as f64, j as f64);
                        assert!((v - s).abs() < 1e-11 * v.abs().max(1.0), "{m} {j}");
                    }
                    None => assert!((m as i64 + j) % 2 != 0),
                }
            }
        }
    }

    #[test]
    fn expm1_series_branch() {
        for &v in &[-3e-2f64, 0.01, -0.049] {
            let direct = v.exp_m1() - v;
            assert!((expm1_minus_linear(v) - direct).abs() <= 1e-13 * direct.abs());
        }
        let v = 1e-12;
        let leading = v * v / 2.0 * (1.0 + v / 3.0);
        assert!((expm1_minus_linear(v) - leading).abs() <= 1e-15 * leading);
    }
}
