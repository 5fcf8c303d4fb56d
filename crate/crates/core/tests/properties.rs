use proptest::prelude::*;
use std::sync::OnceLock;
use subwalk::bernstein::{ratio_bound_violations, BernsteinSpec, Family, ScalingEstimate};
use subwalk::lattice::{KernelSlab, Site, SrwKernel};
use subwalk::subordination::{build_step_law, compute_c_renewal, compute_cm, StepLaw, SubordinationWeights};

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|alpha| Family::Stable { alpha }),
        (0.1f64..3.0, 0.05f64..0.5, 0.1f64..3.0, 0.5f64..0.95)
            .prop_map(|(w1, alpha1, w2, alpha2)| Family::StableMixture { w1, alpha1, w2, alpha2 }),
        (0.1f64..0.95, 0.01f64..2.0).prop_map(|(alpha, theta)| Family::Relativistic { alpha, theta }),
    ]
}

struct Fitted {
    spec: BernsteinSpec,
    fit: ScalingEstimate,
}

fn fitted(f: Family) -> Fitted {
    let spec = BernsteinSpec::new(f).unwrap();
    let fit = spec.estimate_scaling(256).unwrap();
    Fitted { spec, fit }
}

fn g(s: &BernsteinSpec, r: f64, d: usize) -> f64 {
    s.green_profile(r, d).unwrap()
}

fn j(s: &BernsteinSpec, r: f64, d: usize) -> f64 {
    s.jump_profile(r, d).unwrap()
}

// relative slack for rounding in φ
const EPS: f64 = 1e-10;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn g_almost_decreasing(f in family(), d in 1usize..=3, r in 1.0f64..1e3, t in 0.0f64..1.0) {
        let Fitted { spec, fit } = fitted(f);
        prop_assume!(fit.gamma2 < d as f64 / 2.0);
        let q = r + t * (1e3 - r);
        prop_assert!(g(&spec, r, d) >= g(&spec, q, d) / fit.a2 * (1.0 - EPS));
    }

    #[test]
    fn j_almost_decreasing(f in family(), d in 1usize..=3, r in 1.0f64..1e3, t in 0.0f64..1.0) {
        let Fitted { spec, fit } = fitted(f);
        let q = r + t * (1e3 - r);
        prop_assert!(j(&spec, r, d) >= fit.a1 * j(&spec, q, d) * (1.0 - EPS));
    }

    #[test]
    fn shrinking_without_scaling(f in family(), d in 1usize..=3, r in 1.0f64..1e3, a in 0.001f64..=1.0) {
        let spec = BernsteinSpec::new(f).unwrap();
        prop_assert!(j(&spec, a * r, d) <= a.powi(-(d as i32) - 2) * j(&spec, r, d) * (1.0 + EPS));
        prop_assert!(g(&spec, a * r, d) >= a.powi(2 - d as i32) * g(&spec, r, d) * (1.0 - EPS));
    }

    #[test]
    fn stretching_without_scaling(f in family(), d in 1usize..=3, r in 1.0f64..1e3, a in 1.0f64..1e3) {
        let spec = BernsteinSpec::new(f).unwrap();
        prop_assert!(j(&spec, a * r, d) >= a.powi(-(d as i32) - 2) * j(&spec, r, d) * (1.0 - EPS));
    }

    #[test]
    fn shrinking_with_lower_scaling(f in family(), d in 1usize..=3, r in 1.0f64..1e3, t in 0.0f64..1.0) {
        let Fitted { spec, fit } = fitted(f);
        let a = r.powf(-t);
        let bound = g(&spec, r, d) / (fit.a1 * a.powf(d as f64 - 2.0 * fit.gamma1));
        prop_assert!(g(&spec, a * r, d) <= bound * (1.0 + EPS));
    }

    #[test]
    fn shrinking_with_upper_scaling(f in family(), d in 1usize..=3, r in 1.0f64..1e3, t in 0.0f64..1.0) {
        let Fitted { spec, fit } = fitted(f);
        let a = r.powf(-t);
        let bound = g(&spec, r, d) / (fit.a2 * a.powf(d as f64 - 2.0 * fit.gamma2));
        prop_assert!(g(&spec, a * r, d) >= bound * (1.0 - EPS));
    }

    #[test]
    fn stretching_with_upper_scaling(f in family(), d in 1usize..=3, r in 1.0f64..1e3, t in 0.0f64..1.0) {
        let Fitted { spec, fit } = fitted(f);
        // keeps (ar)^{-2} inside the fitted range
        let a = (1e4 / r).powf(t);
        let bound = fit.a2 / a.powf(d as f64 - 2.0 * fit.gamma2) * g(&spec, r, d);
        prop_assert!(g(&spec, a * r, d) <= bound * (1.0 + EPS));
    }

    #[test]
    fn phi_is_concave_and_increasing(f in family(), lo in -12.0f64..2.0, h in 0.01f64..1.0) {
        let spec = BernsteinSpec::new(f).unwrap();
        let xs: Vec<f64> = (0..8).map(|k| (lo + h * k as f64).exp()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| spec.phi(x).unwrap()).collect();
        for k in 0..6 {
            prop_assert!(ys[k + 1] > ys[k]);
            let s1 = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
            let s2 = (ys[k + 2] - ys[k + 1]) / (xs[k + 2] - xs[k + 1]);
            prop_assert!(s2 <= s1 * (1.0 + 1e-9), "{} {}", s1, s2);
        }
    }

    #[test]
    fn phi_ratio_bound(f in family(), l in 1e-4f64..1e4, t in 1e-6f64..1e2) {
        let spec = BernsteinSpec::new(f).unwrap();
        prop_assert_eq!(ratio_bound_violations(&spec, &[l], &[t]), 0);
    }
}

fn kernel(d: usize) -> &'static SrwKernel {
    static K: OnceLock<Vec<SrwKernel>> = OnceLock::new();
    &K.get_or_init(|| (1..=3).map(|d| SrwKernel::new(d, 200).unwrap()).collect())[d - 1]
}

fn site(d: usize) -> impl Strategy<Value = Site> {
    prop::array::uniform3(-12i64..=12).prop_map(move |mut x| {
        for c in x.iter_mut().skip(d) {
            *c = 0;
        }
        x
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_symmetry(d in 1usize..=3, m in 0usize..=200, x in site(3), perm in 0usize..6, signs in 0u8..8) {
        let k = kernel(d);
        let mut x = x;
        for c in x.iter_mut().skip(d) {
            *c = 0;
        }
        let p = k.prob(m, &x);
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut y = [0i64; 3];
        for (i, &o) in orders[perm].iter().enumerate() {
            y[i] = x[o];
        }
        if y.iter().skip(d).all(|&c| c == 0) {
            for (i, c) in y.iter_mut().enumerate() {
                if signs >> i & 1 == 1 {
                    *c = -*c;
                }
            }
            let q = k.prob(m, &y);
            prop_assert!((p - q).abs() <= 1e-12 * p.max(q) + 1e-300, "{} {} {:?}", p, q, y);
        }
    }

    #[test]
    fn kernel_semigroup(d in 1usize..=3, m in 0usize..=20, n in 0usize..=20, x in site(3)) {
        let k = kernel(d);
        let mut x = x;
        for c in x.iter_mut().skip(d) {
            *c = 0;
        }
        let r = m as i64;
        let span = |i: usize| if i < d { -r..=r } else { 0..=0 };
        let mut s = 0.0;
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let y = [a, b, c];
                    let pm = k.prob(m, &y);
                    if pm > 0.0 {
                        s += pm * k.prob(n, &[x[0] - a, x[1] - b, x[2] - c]);
                    }
                }
            }
        }
        let direct = k.prob(m + n, &x);
        prop_assert!((s - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300, "{} {}", s, direct);
    }

    #[test]
    fn slab_matches_kernel(d in 1usize..=2, m in 0usize..=40, x in site(2)) {
        static S: OnceLock<Vec<KernelSlab>> = OnceLock::new();
        let slab = &S.get_or_init(|| (1..=2).map(|d| KernelSlab::build(d, 40, 20).unwrap()).collect())[d - 1];
        let mut x = x;
        for c in x.iter_mut().skip(d) {
            *c = 0;
        }
        prop_assume!(slab.is_exact(m, &x));
        let p = kernel(d).prob(m, &x);
        prop_assert!((slab.get(m, &x) - p).abs() <= 1e-12 * p + 1e-300);
    }
}

fn weights(f: Family) -> (BernsteinSpec, Vec<f64>, Vec<f64>) {
    let spec = BernsteinSpec::new(f).unwrap();
    let cm = compute_cm(&spec, 600).unwrap();
    let c = compute_c_renewal(&cm, 600);
    (spec, cm, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Σ c_m s^m = 1 - φ(1-s) and Σ c(m) s^m = 1/φ(1-s)
    #[test]
    fn generating_functions(f in family(), s in 0.0f64..0.9) {
        let (spec, cm, c) = weights(f);
        let ph = spec.phi(1.0 - s).unwrap();
        let gf = |w: &[f64]| w.iter().rev().fold(0.0, |acc, v| acc * s + v);
        prop_assert!((gf(&cm) - (1.0 - ph)).abs() <= 1e-10);
        prop_assert!((gf(&c) * ph - 1.0).abs() <= 1e-9);
    }
}

fn law() -> &'static StepLaw {
    static L: OnceLock<StepLaw> = OnceLock::new();
    L.get_or_init(|| {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let w = SubordinationWeights::compute(&spec, 4000, 1e-6).unwrap();
        build_step_law(&w, &SrwKernel::new(2, 4000).unwrap(), 24).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_law_symmetry(a in -24i64..=24, b in -24i64..=24) {
        let l = law();
        let p = l.prob(&[a, b, 0]);
        for q in [[-a, b, 0], [a, -b, 0], [b, a, 0], [-b, -a, 0]] {
            prop_assert!((l.prob(&q) - p).abs() <= 1e-14 * p);
        }
        prop_assert!(p > 0.0);
    }
}
