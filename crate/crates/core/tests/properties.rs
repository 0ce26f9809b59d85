//! Property tests of the numerical core against independent oracles.

use proptest::prelude::*;

use canard_lab::equilibria::{
    analyze_psi1_shape, classify_sequence, find_equilibria, Fold, Trichotomy, ADMISSIBLE_SEQUENCES,
};
use canard_lab::flow::{find_limit_cycle, CycleOptions, CycleSearch, TimeDirection};
use canard_lab::gspt::{classify_fold, hopf_value_exact};
use canard_lab::integrate::{integrate, Planar, Tolerances};
use canard_lab::model::{d1_psi1, psi, psi1, psi2, DimensionlessParams};

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

prop_compose! {
    fn params()(
        a in log_uniform(1e-3, 1.0),
        b1 in log_uniform(1.0, 1e2),
        b2 in log_uniform(1e-2, 10.0),
        c in log_uniform(1e-1, 1e2),
        delta in log_uniform(1e-3, 1.0),
        v in log_uniform(1e-1, 1e3),
    ) -> DimensionlessParams {
        DimensionlessParams { a, b1, b2, c, delta, v }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_sign_change_of_psi_brackets_a_reported_root(p in params()) {
        let xs: Vec<f64> = find_equilibria(&p).unwrap().iter().map(|e| e.x).collect();
        prop_assert!(!xs.is_empty(), "psi(0) < 0 < psi(large x) forces a root");
        prop_assert!(xs.windows(2).all(|w| w[0] < w[1]));
        let hi = p.v / p.c + 10.0;
        let n = 4000;
        let mut prev = (0.0, psi(0.0, &p).unwrap());
        for k in 1..=n {
            let x = hi * k as f64 / n as f64;
            let f = psi(x, &p).unwrap();
            if (f < 0.0) != (prev.1 < 0.0) {
                prop_assert!(xs.iter().any(|&r| r >= prev.0 && r <= x), "no root in [{}, {}]", prev.0, x);
            }
            prev = (x, f);
        }
        for &x in &xs {
            let scale = psi1(x, &p).unwrap().abs().max(psi2(x, &p).unwrap().abs()).max(1e-300);
            prop_assert!(psi(x, &p).unwrap().abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn s_shaped_sequences_are_admissible(p in params()) {
        let geom = analyze_psi1_shape(&p).unwrap();
        if geom.trichotomy == Trichotomy::SShaped {
            let tag = classify_sequence(&p).unwrap().to_string();
            prop_assert!(ADMISSIBLE_SEQUENCES.contains(&tag.as_str()), "{tag}");
            let f = geom.folds.unwrap();
            prop_assert!(f.x_left_landing < f.x_left_fold);
            prop_assert!(f.x_left_fold < geom.x_plus && geom.x_plus < f.x_right_fold);
            prop_assert!(f.x_right_fold < f.x_right_landing);
            prop_assert!(f.y_left_fold > f.y_right_fold);
        }
    }

    #[test]
    fn fold_slopes_vanish(p in params()) {
        let geom = analyze_psi1_shape(&p).unwrap();
        if let Some(f) = geom.folds {
            for x in [f.x_left_fold, f.x_right_fold] {
                let scale = psi1(x, &p).unwrap() / x.max(1e-3);
                prop_assert!(d1_psi1(x, &p).unwrap().abs() <= 1e-7 * scale.max(1.0));
            }
            prop_assert!(d1_psi1(geom.x_plus, &p).unwrap() <= 0.0);
        }
    }

    #[test]
    fn planar_flow_preserves_nonnegativity(p in params(), sx in 0.0..1.0f64, sy in 0.0..1.0f64) {
        let b = p.box_size();
        let tr = integrate(Planar(p), 0.0, &[sx * b, sy * b], 50.0, Tolerances::new(1e-7, 1e-10)).unwrap();
        prop_assert!(tr.is_complete());
        for s in &tr.states {
            prop_assert!(s[0] >= -1e-8 * b.max(1.0) && s[1] >= -1e-8 * b.max(1.0));
            prop_assert!(s[0] <= b * (1.0 + 1e-6) + sx * b && s[1] <= b * (1.0 + 1e-6) + sy * b);
        }
    }
}

/// Third-order central differences of `psi1` and second-order of `psi2`.
fn fd3(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h)
}

fn fd2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

#[test]
fn fold_constants_match_finite_differences() {
    let p = DimensionlessParams::example_canard(55.0);
    let geom = analyze_psi1_shape(&p).unwrap();
    for which in [Fold::Left, Fold::Right] {
        let f = classify_fold(&geom, &p, which).unwrap();
        let at = p.with_v(f.v0);
        let h = 1e-3 * f.x;
        let d2 = fd2(|x| psi1(x, &p).unwrap(), f.x, h);
        let d3 = fd3(|x| psi1(x, &p).unwrap(), f.x, h);
        let s = (psi2(f.x + h, &at).unwrap() - psi2(f.x - h, &at).unwrap()) / (2.0 * h);
        let s2 = fd2(|x| psi2(x, &at).unwrap(), f.x, h);
        let kappa1 = -2.0 * d3 / (3.0 * d2 * d2);
        let kappa2 = -s2 / (d2 * s);
        assert!(
            (kappa1 - f.kappa1).abs() <= 1e-4 * f.kappa1.abs(),
            "{which}: {kappa1} vs {}",
            f.kappa1
        );
        assert!(
            (kappa2 - f.kappa2).abs() <= 1e-4 * f.kappa2.abs(),
            "{which}: {kappa2} vs {}",
            f.kappa2
        );
        assert!((1.0 / s - f.kappa3).abs() <= 1e-4 * f.kappa3.abs());
        // the fold is an equilibrium exactly at v0
        assert!((psi1(f.x, &at).unwrap() - psi2(f.x, &at).unwrap()).abs() <= 1e-9 * f.y);
    }
}

#[test]
fn hopf_slope_is_the_derivative_of_the_exact_hopf_value() {
    let p = DimensionlessParams::example_canard(55.0);
    let geom = analyze_psi1_shape(&p).unwrap();
    let f = classify_fold(&geom, &p, Fold::Left).unwrap();
    let d = 1e-4;
    let slope = (hopf_value_exact(&geom, &p, Fold::Left, d).unwrap() - f.v0) / d;
    assert!(
        (slope - f.hopf_slope).abs() <= 1e-2 * f.hopf_slope.abs(),
        "{slope} vs {}",
        f.hopf_slope
    );
}

#[test]
fn relaxation_cycle_closes_after_one_period() {
    let p = DimensionlessParams::example_canard(55.0);
    let CycleSearch::Found(c) =
        find_limit_cycle(&p, [1.0, 1.0], TimeDirection::Forward, &CycleOptions::default()).unwrap()
    else {
        panic!("no cycle at v = 55")
    };
    let start = [c.section_x, c.section_value];
    let tr = integrate(Planar(p), 0.0, &start, c.period, Tolerances::new(1e-10, 1e-12)).unwrap();
    let end = tr.last_state();
    let gap = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt();
    assert!(gap <= 1e-4 * start[1], "gap {gap}");
    let first = c.points.first().unwrap();
    let last = c.points.last().unwrap();
    assert!((first[0] - last[0]).abs() + (first[1] - last[1]).abs() <= 1e-6 * start[1]);
}
