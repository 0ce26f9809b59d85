//! Acceptance criteria. Each check runs in turn, prints one `PASS`/`FAIL`
//! line, and the process exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use canard_lab::cli::{cmd_simulate, cmd_sweep, cmd_taxonomy, GridSpec, Payload, RunConfig};
use canard_lab::equilibria::{
    analyze_psi1_shape, classify_sequence, find_equilibria, fit_psi2_tangent, Fold, Region, SequenceTag,
};
use canard_lab::flow::{random_seed_cycle_census, verify_trapping_region, CycleClass, CycleOptions};
use canard_lab::gspt::{classify_fold, hopf_curve, hopf_value_exact, saddle_node_analysis, UnfoldingDirection};
use canard_lab::integrate::{OdeSystem, Planar};
use canard_lab::model::{
    d1_psi, d1_psi1, d1_psi2, d2_psi, d2_psi1, d2_psi2, d3_psi1, psi, psi1, psi2, DimensionlessParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Log-uniform parameter draw over the ranges used by the equilibrium oracle.
fn random_params(rng: &mut ChaCha8Rng) -> DimensionlessParams {
    let mut lu = |lo: f64, hi: f64| (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
    DimensionlessParams {
        a: lu(1e-3, 1.0),
        b1: lu(1.0, 1e2),
        b2: lu(1e-2, 10.0),
        c: lu(1e-1, 1e2),
        delta: lu(1e-3, 1.0),
        v: lu(1e-1, 1e3),
    }
}

fn criterion_01_canard_family_classes() -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    for (v, want) in [
        (95.0, CycleClass::CanardNoHead),
        (76.0, CycleClass::CanardWithHead),
        (55.0, CycleClass::Relaxation),
    ] {
        let cfg = RunConfig {
            params: Some(DimensionlessParams::example_canard(v)),
            ..RunConfig::default()
        };
        let out = cmd_simulate(&cfg).expect("simulate runs");
        let Payload::Simulate(rep) = out.record.payload else {
            unreachable!()
        };
        let classes: Vec<Option<CycleClass>> = rep.cycles.iter().map(|c| c.class).collect();
        let hit = classes.contains(&Some(want));
        all &= hit;
        lines.push(format!("v = {v}: want {want:?}, got {classes:?}"));
    }
    outcome(all, lines.join("; "))
}

fn criterion_02_nested_cycles() -> Outcome {
    let cfg = RunConfig {
        params: Some(DimensionlessParams::example_coexistence()),
        ..RunConfig::default()
    };
    let out = cmd_simulate(&cfg).expect("simulate runs");
    let Payload::Simulate(rep) = out.record.payload else {
        unreachable!()
    };
    let ranges: Vec<[f64; 2]> = rep.cycles.iter().map(|c| c.cycle.x_range).collect();
    let nested = ranges.iter().any(|outer| {
        ranges
            .iter()
            .any(|inner| outer[0] < inner[0] - 1e-3 && outer[1] > inner[1] + 1e-3)
    });
    outcome(nested, format!("{} cycles with x ranges {ranges:?}", ranges.len()))
}

fn criterion_03_fast_case_has_no_cycles() -> Outcome {
    let base = DimensionlessParams::example_canard(55.0);
    let geom = analyze_psi1_shape(&base).unwrap();
    let p = base.with_delta(2.0 * geom.min_slope.abs());
    let rep = random_seed_cycle_census(&p, 20, 2024, &CycleOptions::default()).unwrap();
    outcome(
        rep.to_equilibrium == 20 && rep.cycles == 0,
        format!("delta = {:.6}: {rep:?}", p.delta),
    )
}

/// Roots of `psi` by a dense sign scan refined with bisection.
fn scan_oracle(p: &DimensionlessParams, n: usize) -> Vec<f64> {
    let hi = p.v / p.c + 10.0;
    let f = |x: f64| psi(x, p).unwrap();
    let mut roots = Vec::new();
    let mut x0 = 0.0;
    let mut f0 = f(x0);
    for k in 1..=n {
        let x1 = hi * k as f64 / n as f64;
        let f1 = f(x1);
        if f1 == 0.0 {
            roots.push(x1);
        } else if f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            let (mut lo, mut up, mut flo) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + up);
                if mid <= lo || mid >= up {
                    break;
                }
                let fm = f(mid);
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    up = mid;
                }
            }
            roots.push(0.5 * (lo + up));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

fn criterion_04_equilibria_match_sign_scan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let draws = 1000;
    let (mut count_ok, mut worst) = (0, 0.0f64);
    let mut first_bad = None;
    for k in 0..draws {
        let p = random_params(&mut rng);
        let found: Vec<f64> = find_equilibria(&p).unwrap().iter().map(|e| e.x).collect();
        let oracle = scan_oracle(&p, 1_000_000);
        if found.len() == oracle.len() {
            count_ok += 1;
            for (a, b) in found.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
        } else if first_bad.is_none() {
            first_bad = Some(format!("draw {k} {p:?}: roots {found:?} vs scan {oracle:?}"));
        }
    }
    let pass = count_ok == draws && worst <= 1e-6;
    outcome(
        pass,
        format!(
            "count agreement {count_ok}/{draws}, worst |dx| = {worst:.2e}{}",
            first_bad.map(|s| format!(", first mismatch {s}")).unwrap_or_default()
        ),
    )
}

fn criterion_05_hopf_gap_order() -> Outcome {
    let base = DimensionlessParams::example_canard(55.0);
    let geom = analyze_psi1_shape(&base).unwrap();
    let fold = classify_fold(&geom, &base, Fold::Left).unwrap();
    let gap = |d: f64| (hopf_value_exact(&geom, &base, Fold::Left, d).unwrap() - hopf_curve(&fold, d)).abs();
    let (g1, g2) = (gap(1e-2), gap(5e-3));
    let ratio = g1 / g2;
    outcome(
        (2.4..=3.3).contains(&ratio),
        format!("gap(1e-2) = {g1:.4e}, gap(5e-3) = {g2:.4e}, ratio {ratio:.3}"),
    )
}

fn criterion_06_explosion_near_canard_curve() -> Outcome {
    let cfg = RunConfig {
        params: Some(DimensionlessParams::example_canard(47.57)),
        v_grid: Some(GridSpec::Range {
            start: 47.555,
            stop: 47.585,
            step: 0.001,
        }),
        ..RunConfig::default()
    };
    let out = cmd_sweep(&cfg).expect("sweep runs");
    let Payload::Sweep(rep) = out.record.payload else {
        unreachable!()
    };
    let p = cfg.params.unwrap();
    let geom = analyze_psi1_shape(&p).unwrap();
    let fold = classify_fold(&geom, &p, Fold::Left).unwrap();
    let tol = 25.0 * fold.canard_coefficient.abs() * p.delta.powf(1.5);
    let (pass, detail) = match (rep.explosion_v, rep.v_canard) {
        (Some(vs), Some(vc)) => (
            (vs - vc).abs() <= tol,
            format!(
                "v* = {vs:.6}, canard curve {vc:.6}, |diff| = {:.2e} vs tolerance {tol:.2e}",
                (vs - vc).abs()
            ),
        ),
        other => (false, format!("no explosion detected: {other:?}")),
    };
    outcome(pass, detail)
}

fn criterion_07_trapping_region() -> Outcome {
    let p = DimensionlessParams::example_canard(55.0);
    let rep = verify_trapping_region(&p, 10_000, 10_000, 1e3, 7).unwrap();
    outcome(
        rep.passed() && rep.boundary_samples >= 10_000 && rep.trajectories == 10_000,
        format!(
            "{} boundary samples, {} trajectories, {} violations",
            rep.boundary_samples,
            rep.trajectories,
            rep.violations.len()
        ),
    )
}

fn criterion_08_derivatives_match_finite_differences() -> Outcome {
    type F = fn(f64, &DimensionlessParams) -> canard_lab::error::Result<f64>;
    // (name, derivative, antiderivative)
    let pairs: [(&str, F, F); 7] = [
        ("psi1'", d1_psi1, psi1),
        ("psi1''", d2_psi1, d1_psi1),
        ("psi1'''", d3_psi1, d2_psi1),
        ("psi2'", d1_psi2, psi2),
        ("psi2''", d2_psi2, d1_psi2),
        ("psi'", d1_psi, psi),
        ("psi''", d2_psi, d1_psi),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = (0.0f64, "");
    let check = |exact: f64, fd: f64| (fd - exact).abs() / exact.abs().max(1.0);
    for (name, d, f) in pairs {
        for _ in 0..1000 {
            let p = random_params(&mut rng);
            let x: f64 = rng.gen_range(1e-3..100.0);
            let h = 1e-6 * x.max(1.0);
            let fd = (f(x + h, &p).unwrap() - f(x - h, &p).unwrap()) / (2.0 * h);
            let e = check(d(x, &p).unwrap(), fd);
            if e > worst.0 {
                worst = (e, name);
            }
        }
    }
    // closed-form Jacobian of the planar field
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let y: [f64; 2] = [rng.gen_range(1e-3..100.0), rng.gen_range(0.0..100.0)];
        let sys = Planar(p);
        let mut jac = DMatrix::zeros(2, 2);
        sys.jacobian(0.0, &y, &mut jac);
        for j in 0..2 {
            let h = 1e-6 * y[j].abs().max(1.0);
            let (mut yp, mut ym) = (y, y);
            yp[j] += h;
            ym[j] -= h;
            let (mut fp, mut fm) = ([0.0; 2], [0.0; 2]);
            sys.rhs(0.0, &yp, &mut fp);
            sys.rhs(0.0, &ym, &mut fm);
            for i in 0..2 {
                let e = check(jac[(i, j)], (fp[i] - fm[i]) / (2.0 * h));
                if e > worst.0 {
                    worst = (e, "planar Jacobian");
                }
            }
        }
    }
    outcome(
        worst.0 <= 1e-6,
        format!("worst relative error {:.2e} ({})", worst.0, worst.1),
    )
}

fn criterion_09_saddle_node_unfolding() -> Outcome {
    let base = DimensionlessParams::example_canard(55.0);
    let geom = analyze_psi1_shape(&base).unwrap();
    let folds = *geom.fold_pair().unwrap();
    let xt = geom.x_plus;
    let (c, v0) = fit_psi2_tangent(xt, psi1(xt, &base).unwrap(), d1_psi1(xt, &base).unwrap()).unwrap();
    let p = base.with_cv(c, v0);
    let rep = saddle_node_analysis(&p, &geom, xt).unwrap();
    // the unfolded pair sits within sqrt(2 dv dpsi2/dv / |psi''|) of x0
    let curvature = (d2_psi1(xt, &p).unwrap() - d2_psi2(xt, &p).unwrap()).abs();
    let dpsi2_dv = psi2(xt, &p).unwrap() / v0;
    let radius =
        (10.0 * (2.0 * 1e-4 * dpsi2_dv / curvature).sqrt()).min(0.25 * (folds.x_right_fold - folds.x_left_fold));
    let near = |v: f64| {
        find_equilibria(&p.with_v(v))
            .unwrap()
            .iter()
            .filter(|e| (e.x - xt).abs() < radius)
            .count()
    };
    let (below, above) = (near(v0 - 1e-4), near(v0 + 1e-4));
    let predicted = match rep.direction {
        UnfoldingDirection::EquilibriaAbove => (0, 2),
        UnfoldingDirection::EquilibriaBelow => (2, 0),
    };
    // psi1 <= psi2 near the tangency means no equilibria once v rises
    let consistent = rep.psi1_above || rep.direction == UnfoldingDirection::EquilibriaBelow;
    outcome((below, above) == predicted && consistent, format!("x0 = {xt:.6}, v0 = {v0:.6}, {:?}; counts within {radius:.2e} of x0 at (v0 - 1e-4, v0 + 1e-4) = ({below}, {above})", rep.direction))
}

fn criterion_10_taxonomy_witnesses() -> Outcome {
    let tags = ["L0", "L1", "M", "R0", "R1", "L0MR0", "L0MM", "L0MR1", "L0M", "MR0"];
    let cfg = RunConfig {
        params: Some(DimensionlessParams::example_canard(55.0)),
        tags: Some(tags.iter().map(|s| s.to_string()).collect()),
        ..RunConfig::default()
    };
    let out = cmd_taxonomy(&cfg).expect("taxonomy runs");
    let Payload::Taxonomy(rep) = out.record.payload else {
        unreachable!()
    };
    let mut missing = Vec::new();
    for tag in tags {
        let want: SequenceTag = tag.parse().unwrap();
        let ok = rep.entries.iter().any(|e| {
            e.tag == want
                && e.witness
                    .as_ref()
                    .is_some_and(|w| classify_sequence(&w.params).is_ok_and(|t| t == want))
        });
        if !ok {
            missing.push(tag);
        }
    }
    assert!(rep.entries.iter().all(|e| e
        .tag
        .symbols()
        .iter()
        .all(|r| matches!(r, Region::L0 | Region::L1 | Region::M | Region::R0 | Region::R1))));
    outcome(
        missing.is_empty(),
        format!(
            "{} of {} tags verified; missing {missing:?}",
            tags.len() - missing.len(),
            tags.len()
        ),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(u32, &str, u64, Check); 10] = [
        (
            1,
            "canard cycle classes at v = 95, 76, 55",
            360,
            criterion_01_canard_family_classes,
        ),
        (
            2,
            "two nested cycles at the coexistence example",
            300,
            criterion_02_nested_cycles,
        ),
        (
            3,
            "fast case converges to equilibria",
            60,
            criterion_03_fast_case_has_no_cycles,
        ),
        (
            4,
            "polynomial roots agree with a sign scan",
            120,
            criterion_04_equilibria_match_sign_scan,
        ),
        (
            5,
            "Hopf gap shrinks by 2^(3/2) when delta halves",
            60,
            criterion_05_hopf_gap_order,
        ),
        (
            6,
            "explosion value vs canard curve",
            600,
            criterion_06_explosion_near_canard_curve,
        ),
        (
            7,
            "trapping box is positively invariant",
            120,
            criterion_07_trapping_region,
        ),
        (
            8,
            "closed-form derivatives vs central differences",
            10,
            criterion_08_derivatives_match_finite_differences,
        ),
        (
            9,
            "saddle-node unfolding direction",
            30,
            criterion_09_saddle_node_unfolding,
        ),
        (
            10,
            "taxonomy witnesses re-classify",
            300,
            criterion_10_taxonomy_witnesses,
        ),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, budget, check) in criteria {
        let key = format!("criterion_{id:02}");
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| key.contains(f.as_str()) || name.contains(f.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let limit = Duration::from_secs(budget);
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let ok = pass && elapsed <= limit;
        println!(
            "{} criterion {id} ({name}): {detail}; runtime {:.1} s of {budget} s allowed",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
