//! Numerical dynamics of the planar system: limit cycles via a Poincaré
//! return map, cycle classification, canard-explosion sweeps, trapping-box
//! checks, saddle-manifold shooting and the comparison with the original
//! three-species model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{analyze_psi1_shape, find_equilibria_with, Equilibrium, LinearType, ManifoldGeometry};
use crate::error::{Error, Result};
use crate::integrate::{integrate, DenseSegment, OdeSystem, Planar, Radau, Reversed, Status, ThreeSpecies, Tolerances};
use crate::model::{field_2d_raw, psi1_jet, psi2_jet, state3_to_state2, BiologicalParams, DimensionlessParams, State3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub tol: Tolerances,
    pub max_returns: usize,
    pub max_time: f64,
    /// Relative agreement of successive section values.
    pub return_tol: f64,
    /// Successive agreeing returns required.
    pub consecutive: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            max_returns: 600,
            max_time: 2e5,
            return_tol: 1e-8,
            consecutive: 3,
        }
    }
}

/// Band around `|P'(s*)| = 1` inside which the slope does not decide
/// stability.
pub const STABILITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleClass {
    HopfSmall,
    CanardNoHead,
    CanardWithHead,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    /// Closed polyline, first point on the section.
    pub points: Vec<[f64; 2]>,
    pub period: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub section_x: f64,
    /// Fixed point of the return map (a `y` value on the section).
    pub section_value: f64,
    /// Forward-time derivative of the return map at the fixed point, when
    /// both perturbed returns succeeded.
    pub return_map_slope: Option<f64>,
    pub stability: Stability,
    pub found_in: TimeDirection,
}

impl LimitCycle {
    pub fn x_amplitude(&self) -> f64 {
        self.x_range[1] - self.x_range[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CycleSearch {
    Found(LimitCycle),
    Equilibrium { x: f64, y: f64 },
    NotFound { reason: String },
}

impl CycleSearch {
    pub fn cycle(&self) -> Option<&LimitCycle> {
        match self {
            CycleSearch::Found(c) => Some(c),
            _ => None,
        }
    }
}

/// Abscissa of the Poincaré section: the vertical line through an
/// equilibrium that is repelling in forward time (any cycle must enclose
/// one), or the inflection abscissa when there is none.
pub fn section_abscissa(eqs: &[Equilibrium], geom: &ManifoldGeometry) -> f64 {
    eqs.iter()
        .find(|e| matches!(e.linear_type, LinearType::UnstableFocus | LinearType::UnstableNode))
        .map(|e| e.x)
        .unwrap_or(geom.x_plus)
}

/// Sub-sampled sign changes of `g` over one dense segment.
fn crossings_in<G: Fn(&[f64]) -> f64>(seg: &DenseSegment, g: G) -> Vec<(f64, Vec<f64>)> {
    const SUB: usize = 6;
    let mut out = Vec::new();
    let mut t_prev = seg.t0;
    let mut g_prev = g(&seg.eval(t_prev));
    for k in 1..=SUB {
        let t = seg.t0 + seg.h * k as f64 / SUB as f64;
        let gv = g(&seg.eval(t));
        if (g_prev < 0.0 && gv >= 0.0) || (g_prev > 0.0 && gv <= 0.0) {
            out.push(crate::integrate::locate_event(seg, &g, t_prev, t));
        }
        t_prev = t;
        g_prev = gv;
    }
    out
}

fn sample_segment(seg: &DenseSegment, out: &mut Vec<[f64; 2]>) {
    for k in 1..=4 {
        let y = seg.eval(seg.t0 + seg.h * k as f64 / 4.0);
        out.push([y[0], y[1]]);
    }
}

struct SectionSetup {
    x: f64,
    /// `psi1(x)`: the section is the half-line above it.
    floor: f64,
    /// Equilibria attracting in the chosen time direction.
    attracting: Vec<[f64; 2]>,
    domain: f64,
}

fn domain_exit(y: &[f64], bound: f64) -> bool {
    !(y[0] > -0.5 && y[1] > -0.5 * bound && y[0] < bound && y[1] < bound)
}

fn near_equilibrium(y: &[f64], eqs: &[[f64; 2]]) -> Option<[f64; 2]> {
    eqs.iter()
        .copied()
        .find(|e| ((y[0] - e[0]).powi(2) + (y[1] - e[1]).powi(2)).sqrt() <= 1e-7 * e[1].abs().max(1.0))
}

/// One pass of the return map from a point on the section. Returns the next
/// section value, the elapsed time and the sampled orbit.
fn return_once<S: OdeSystem>(
    sys: S,
    setup: &SectionSetup,
    s: f64,
    opts: &CycleOptions,
    max_time: f64,
) -> Option<(f64, f64, Vec<[f64; 2]>)> {
    let mut r = Radau::new(sys, 0.0, &[setup.x, s], opts.tol).ok()?;
    let mut pts = vec![[setup.x, s]];
    loop {
        let st = r.step(max_time);
        if !matches!(st, Status::Running | Status::Completed) || r.last_segment().is_none() {
            return None;
        }
        let seg = r.last_segment()?.clone();
        for (t, y) in crossings_in(&seg, |y| y[0] - setup.x) {
            // ignore the launch point itself
            if y[1] > setup.floor && t > 1e-9 * max_time.max(1.0) {
                // samples up to the crossing only, so the polyline closes
                for k in 1..4 {
                    let z = seg.eval(seg.t0 + (t - seg.t0) * k as f64 / 4.0);
                    pts.push([z[0], z[1]]);
                }
                pts.push([y[0], y[1]]);
                return Some((y[1], t, pts));
            }
        }
        sample_segment(&seg, &mut pts);
        if domain_exit(r.y(), setup.domain) || st == Status::Completed {
            return None;
        }
    }
}

fn build_cycle<S: OdeSystem + Copy>(
    sys: S,
    setup: &SectionSetup,
    s_star: f64,
    opts: &CycleOptions,
    direction: TimeDirection,
    period_hint: f64,
) -> Option<LimitCycle> {
    let horizon = (4.0 * period_hint).max(10.0).min(opts.max_time);
    let (_, period, points) = return_once(sys, setup, s_star, opts, horizon)?;
    let (mut xr, mut yr) = ([f64::INFINITY, f64::NEG_INFINITY], [f64::INFINITY, f64::NEG_INFINITY]);
    for p in &points {
        xr = [xr[0].min(p[0]), xr[1].max(p[0])];
        yr = [yr[0].min(p[1]), yr[1].max(p[1])];
    }
    let eps = 1e-5 * (s_star - setup.floor).abs().max(1e-3);
    let slope_in_dir = |sys: S| -> Option<f64> {
        let plus = return_once(sys, setup, s_star + eps, opts, horizon).map(|r| r.0);
        let minus = return_once(sys, setup, (s_star - eps).max(setup.floor + 0.5 * eps), opts, horizon).map(|r| r.0);
        match (plus, minus) {
            (Some(a), Some(b)) => Some((a - b) / (s_star + eps - (s_star - eps).max(setup.floor + 0.5 * eps))),
            _ => None,
        }
    };
    let slope_dir = slope_in_dir(sys);
    let return_map_slope = match direction {
        TimeDirection::Forward => slope_dir,
        TimeDirection::Backward => slope_dir.map(|s| 1.0 / s),
    };
    let stability = match return_map_slope {
        Some(m) if m.abs() < 1.0 - STABILITY_MARGIN => Stability::Stable,
        Some(m) if m.abs() > 1.0 + STABILITY_MARGIN => Stability::Unstable,
        // indeterminate slope: a cycle reached by convergence attracts in
        // the search direction
        _ => match direction {
            TimeDirection::Forward => Stability::Stable,
            TimeDirection::Backward => Stability::Unstable,
        },
    };
    Some(LimitCycle {
        points,
        period,
        x_range: xr,
        y_range: yr,
        section_x: setup.x,
        section_value: s_star,
        return_map_slope,
        stability,
        found_in: direction,
    })
}

fn search<S: OdeSystem + Copy>(
    sys: S,
    setup: &SectionSetup,
    seed: [f64; 2],
    opts: &CycleOptions,
    direction: TimeDirection,
) -> Result<CycleSearch> {
    let mut start = seed;
    let mut t_offset = 0.0;
    let mut values: Vec<(f64, f64)> = Vec::new();
    let mut agree = 0;
    let mut jumps = 0;
    'restart: loop {
        let mut r = Radau::new(sys, 0.0, &start, opts.tol)?;
        loop {
            let st = r.step(opts.max_time - t_offset);
            match st {
                Status::Running | Status::Completed => {}
                other => {
                    return Ok(CycleSearch::NotFound {
                        reason: format!("integration stopped: {other:?}"),
                    })
                }
            }
            let Some(seg) = r.last_segment().cloned() else {
                return Ok(CycleSearch::NotFound {
                    reason: "no step taken".into(),
                });
            };
            if domain_exit(r.y(), setup.domain) {
                return Ok(CycleSearch::NotFound {
                    reason: "trajectory left the phase domain".into(),
                });
            }
            if let Some(e) = near_equilibrium(r.y(), &setup.attracting) {
                return Ok(CycleSearch::Equilibrium { x: e[0], y: e[1] });
            }
            for (t, y) in crossings_in(&seg, |y| y[0] - setup.x) {
                if y[1] <= setup.floor {
                    continue;
                }
                let s = y[1];
                let t_abs = t_offset + t;
                if let Some(&(_, prev)) = values.last() {
                    if (s - prev).abs() <= opts.return_tol * prev.abs().max(1.0) {
                        agree += 1;
                    } else {
                        agree = 0;
                    }
                }
                values.push((t_abs, s));
                let amplitude = s - setup.floor;
                if amplitude <= 1e-7 * setup.floor.abs().max(1.0) {
                    if let Some(e) = setup
                        .attracting
                        .iter()
                        .find(|e| (e[0] - setup.x).abs() < 1e-9 * e[0].max(1.0))
                    {
                        return Ok(CycleSearch::Equilibrium { x: e[0], y: e[1] });
                    }
                }
                if agree >= opts.consecutive {
                    let n = values.len();
                    let period = values[n - 1].0 - values[n - 2].0;
                    return Ok(match build_cycle(sys, setup, s, opts, direction, period) {
                        Some(c) => CycleSearch::Found(c),
                        None => CycleSearch::NotFound {
                            reason: "cycle did not close on rebuild".into(),
                        },
                    });
                }
                if values.len() >= opts.max_returns {
                    return Ok(CycleSearch::NotFound {
                        reason: format!("no convergence after {} returns", values.len()),
                    });
                }
                // Aitken extrapolation for slowly contracting sequences
                let n = values.len();
                if n >= 5 && jumps < 40 && agree == 0 {
                    let d: Vec<f64> = (n - 4..n).map(|k| values[k].1 - values[k - 1].1).collect();
                    let rho: Vec<f64> = (1..4).map(|k| d[k] / d[k - 1]).collect();
                    let consistent = rho.iter().all(|r| *r > 0.2 && *r < 0.9999)
                        && (rho[2] - rho[1]).abs() < 0.02 * rho[2]
                        && (rho[1] - rho[0]).abs() < 0.02 * rho[2];
                    if consistent {
                        let target = s + d[3] * rho[2] / (1.0 - rho[2]);
                        jumps += 1;
                        if target <= setup.floor + 1e-7 * setup.floor.abs().max(1.0) {
                            if let Some(e) = setup
                                .attracting
                                .iter()
                                .find(|e| (e[0] - setup.x).abs() < 1e-9 * e[0].max(1.0))
                            {
                                return Ok(CycleSearch::Equilibrium { x: e[0], y: e[1] });
                            }
                        } else if target < setup.domain {
                            start = [setup.x, target];
                            t_offset = t_abs;
                            values.clear();
                            agree = 0;
                            continue 'restart;
                        }
                    }
                }
            }
            if st == Status::Completed || r.t() + t_offset >= opts.max_time {
                return Ok(CycleSearch::NotFound {
                    reason: format!("no convergence within t = {}", opts.max_time),
                });
            }
        }
    }
}

/// Search for a limit cycle starting from `seed`. Backward-time search
/// locates cycles that are repelling in forward time.
pub fn find_limit_cycle(
    p: &DimensionlessParams,
    seed: [f64; 2],
    direction: TimeDirection,
    opts: &CycleOptions,
) -> Result<CycleSearch> {
    p.validate()?;
    let geom = analyze_psi1_shape(p)?;
    let eqs = find_equilibria_with(p, &geom)?;
    find_limit_cycle_with(p, &geom, &eqs, seed, direction, opts)
}

/// As [`find_limit_cycle`] with precomputed geometry and equilibria.
pub fn find_limit_cycle_with(
    p: &DimensionlessParams,
    geom: &ManifoldGeometry,
    eqs: &[Equilibrium],
    seed: [f64; 2],
    direction: TimeDirection,
    opts: &CycleOptions,
) -> Result<CycleSearch> {
    if !(seed[0] >= 0.0 && seed[1] >= 0.0 && seed[0].is_finite() && seed[1].is_finite()) {
        return Err(Error::param(
            "seed",
            format!("{seed:?} must be a finite nonnegative state"),
        ));
    }
    let x = section_abscissa(eqs, geom);
    let attracting: Vec<[f64; 2]> = eqs
        .iter()
        .filter(|e| match direction {
            TimeDirection::Forward => e.linear_type.is_stable(),
            TimeDirection::Backward => {
                matches!(e.linear_type, LinearType::UnstableFocus | LinearType::UnstableNode)
            }
        })
        .map(|e| [e.x, e.y])
        .collect();
    let setup = SectionSetup {
        x,
        floor: psi1_jet(x, p)[0],
        attracting,
        domain: 10.0 * p.box_size().max(seed[0]).max(seed[1]) + 10.0,
    };
    match direction {
        TimeDirection::Forward => search(Planar(*p), &setup, seed, opts, direction),
        TimeDirection::Backward => search(Reversed(Planar(*p)), &setup, seed, opts, direction),
    }
}

/// Classification margins.
/// Fraction of the fold-to-landing distance a relaxation cycle must cover
/// on each outer branch.
pub const RELAXATION_REACH: f64 = 0.5;
pub const TRACKING_SPAN: f64 = 0.2;
pub const TRACKING_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDiagnostics {
    pub x_range: [f64; 2],
    /// Longest x-extent over which the cycle stays near the middle branch.
    pub tracking_span: f64,
    pub relaxation_window: [f64; 2],
    pub small_band: f64,
}

/// Longest contiguous run of cycle points within `band` of the middle
/// branch, measured as an x-extent.
fn middle_tracking_span(points: &[[f64; 2]], p: &DimensionlessParams, lo: f64, hi: f64, band: f64) -> f64 {
    let mut best = 0.0f64;
    let mut run: Option<(f64, f64)> = None;
    let n = points.len();
    // walk twice around so runs through the closing point are joined
    for k in 0..2 * n {
        let pt = points[k % n];
        let on = pt[0] > lo && pt[0] < hi && (pt[1] - psi1_jet(pt[0], p)[0]).abs() <= band;
        run = match (on, run) {
            (true, None) => Some((pt[0], pt[0])),
            (true, Some((a, b))) => Some((a.min(pt[0]), b.max(pt[0]))),
            (false, Some((a, b))) => {
                best = best.max(b - a);
                None
            }
            (false, None) => None,
        };
    }
    if let Some((a, b)) = run {
        best = best.max(b - a);
    }
    best
}

pub fn cycle_diagnostics(
    cycle: &LimitCycle,
    geom: &ManifoldGeometry,
    p: &DimensionlessParams,
) -> Result<CycleDiagnostics> {
    let f = geom.fold_pair()?;
    let band = TRACKING_BAND * f.fold_gap();
    Ok(CycleDiagnostics {
        x_range: cycle.x_range,
        tracking_span: middle_tracking_span(&cycle.points, p, f.x_left_fold, f.x_right_fold, band),
        relaxation_window: [
            f.x_left_fold - RELAXATION_REACH * (f.x_left_fold - f.x_left_landing),
            f.x_right_fold + RELAXATION_REACH * (f.x_right_landing - f.x_right_fold),
        ],
        small_band: p.delta.sqrt() * (f.x_right_fold - f.x_left_fold),
    })
}

/// Classify a cycle against the singular geometry.
///
/// Canard: follows the middle branch over a sizeable x-extent; with head
/// when it also reaches past the opposite fold. Relaxation: reaches well
/// into both outer branches without tracking the middle one. Hopf-small: amplitude within a
/// `sqrt(delta)` band next to a fold.
pub fn classify_cycle(cycle: &LimitCycle, geom: &ManifoldGeometry, p: &DimensionlessParams) -> Result<CycleClass> {
    let f = geom.fold_pair()?;
    let d = cycle_diagnostics(cycle, geom, p)?;
    let [x_min, x_max] = cycle.x_range;
    if d.tracking_span >= TRACKING_SPAN * (f.x_right_fold - f.x_left_fold) {
        let no_head = x_max < f.x_right_fold || x_min > f.x_left_fold;
        return Ok(if no_head {
            CycleClass::CanardNoHead
        } else {
            CycleClass::CanardWithHead
        });
    }
    if x_min <= d.relaxation_window[0] && x_max >= d.relaxation_window[1] {
        return Ok(CycleClass::Relaxation);
    }
    let near_fold = [f.x_left_fold, f.x_right_fold]
        .iter()
        .any(|&xf| x_min - d.small_band <= xf && xf <= x_max + d.small_band);
    if x_max - x_min <= d.small_band && near_fold {
        return Ok(CycleClass::HopfSmall);
    }
    Err(Error::Classification(format!(
        "cycle with x-range [{x_min}, {x_max}] matches no class (tracking span {}, small band {})",
        d.tracking_span, d.small_band
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Cycle,
    /// Converged to an equilibrium: the no-cycle regime.
    Equilibrium,
    /// Search failed without a verdict.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v: f64,
    pub found: bool,
    pub status: RowStatus,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub period: Option<f64>,
    pub class: Option<CycleClass>,
    pub note: Option<String>,
}

impl SweepRow {
    pub fn amplitude(&self) -> f64 {
        match (self.x_min, self.x_max) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub cycle: CycleOptions,
    /// Seed each `v` from the previous cycle (serial).
    pub continuation: bool,
    /// Bisection passes on the steepest amplitude jump.
    pub refine_steps: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            cycle: CycleOptions::default(),
            continuation: true,
            refine_steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Midpoint of the steepest amplitude jump after refinement.
    pub explosion_v: Option<f64>,
    /// Bracket of the steepest jump after refinement.
    pub explosion_bracket: Option<[f64; 2]>,
}

/// Seed just off the forward-repelling equilibrium on the section, or the
/// inflection point of the manifold.
fn default_seed(p: &DimensionlessParams, geom: &ManifoldGeometry, eqs: &[Equilibrium]) -> [f64; 2] {
    let x = section_abscissa(eqs, geom);
    let y = psi1_jet(x, p)[0];
    [x, y + 1e-3 * y.max(1.0)]
}

fn sweep_point(p: &DimensionlessParams, seed: Option<[f64; 2]>, opts: &CycleOptions) -> (SweepRow, Option<[f64; 2]>) {
    let fail = |status: RowStatus, note: String| SweepRow {
        v: p.v,
        found: false,
        status,
        x_min: None,
        x_max: None,
        period: None,
        class: None,
        note: Some(note),
    };
    let geom = match analyze_psi1_shape(p) {
        Ok(g) => g,
        Err(e) => return (fail(RowStatus::Failed, e.to_string()), None),
    };
    let eqs = match find_equilibria_with(p, &geom) {
        Ok(e) => e,
        Err(e) => return (fail(RowStatus::Failed, e.to_string()), None),
    };
    let seed = seed.unwrap_or_else(|| default_seed(p, &geom, &eqs));
    match find_limit_cycle_with(p, &geom, &eqs, seed, TimeDirection::Forward, opts) {
        Ok(CycleSearch::Found(c)) => {
            let class = classify_cycle(&c, &geom, p);
            let row = SweepRow {
                v: p.v,
                found: true,
                status: RowStatus::Cycle,
                x_min: Some(c.x_range[0]),
                x_max: Some(c.x_range[1]),
                period: Some(c.period),
                class: class.as_ref().ok().copied(),
                note: class.err().map(|e| e.to_string()),
            };
            (row, Some([c.section_x, c.section_value]))
        }
        Ok(CycleSearch::Equilibrium { x, y }) => (
            fail(RowStatus::Equilibrium, format!("converged to equilibrium ({x}, {y})")),
            None,
        ),
        Ok(CycleSearch::NotFound { reason }) => (fail(RowStatus::Failed, reason), None),
        Err(e) => (fail(RowStatus::Failed, e.to_string()), None),
    }
}

/// Amplitude sweep over `v`; the explosion value is the midpoint of the
/// steepest amplitude jump between neighbouring rows, refined by bisection.
pub fn canard_explosion_sweep(
    p_base: &DimensionlessParams,
    v_grid: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    p_base.validate()?;
    if v_grid.is_empty() {
        return Err(Error::param("v_grid", "must be nonempty"));
    }
    let inc = v_grid.windows(2).all(|w| w[1] > w[0]);
    let dec = v_grid.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(Error::param("v_grid", "must be strictly monotone"));
    }
    if let Some(bad) = v_grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::param("v_grid", format!("value {bad} is not a positive number")));
    }
    analyze_psi1_shape(p_base)?.fold_pair()?;

    let rows: Vec<SweepRow> = if opts.continuation {
        let mut seed = None;
        let mut rows = Vec::with_capacity(v_grid.len());
        for &v in v_grid {
            let (row, next) = sweep_point(&p_base.with_v(v), seed, &opts.cycle);
            seed = next;
            rows.push(row);
        }
        rows
    } else {
        v_grid
            .par_iter()
            .map(|&v| sweep_point(&p_base.with_v(v), None, &opts.cycle).0)
            .collect()
    };

    let mut bracket = None;
    let mut best = 0.0;
    for w in rows.windows(2) {
        let jump = (w[1].amplitude() - w[0].amplitude()).abs();
        if jump > best {
            best = jump;
            bracket = Some([(w[0].v, w[0].amplitude()), (w[1].v, w[1].amplitude())]);
        }
    }
    if let Some(mut br) = bracket {
        for _ in 0..opts.refine_steps {
            let vm = 0.5 * (br[0].0 + br[1].0);
            let (row, _) = sweep_point(&p_base.with_v(vm), None, &opts.cycle);
            let am = row.amplitude();
            if (am - br[0].1).abs() >= (br[1].1 - am).abs() {
                br[1] = (vm, am);
            } else {
                br[0] = (vm, am);
            }
        }
        let lo = br[0].0.min(br[1].0);
        let hi = br[0].0.max(br[1].0);
        return Ok(SweepResult {
            rows,
            explosion_v: Some(0.5 * (lo + hi)),
            explosion_bracket: Some([lo, hi]),
        });
    }
    Ok(SweepResult {
        rows,
        explosion_v: None,
        explosion_bracket: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappingReport {
    pub box_size: f64,
    pub boundary_samples: usize,
    pub trajectories: usize,
    pub violations: Vec<Violation>,
}

impl TrappingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Inward-normal sign of the field on the edges of `[0, v/c]^2` and the
/// positive axes, plus Gronwall envelopes along random trajectories.
pub fn verify_trapping_region(
    p: &DimensionlessParams,
    n_boundary_samples: usize,
    n_trajectories: usize,
    t_end: f64,
    seed: u64,
) -> Result<TrappingReport> {
    p.validate()?;
    let b = p.box_size();
    let mut violations = Vec::new();
    let per_edge = (n_boundary_samples / 6).max(1);
    let mut count = 0;
    let mut check = |x: f64, y: f64, normal: [f64; 2], what: &str, v: &mut Vec<Violation>| {
        let f = field_2d_raw(x, y, p);
        let inward = f[0] * normal[0] + f[1] * normal[1];
        count += 1;
        if inward < -1e-12 {
            v.push(Violation {
                x,
                y,
                value: inward,
                what: what.into(),
            });
        }
    };
    for k in 0..=per_edge {
        let s = k as f64 / per_edge as f64;
        check(0.0, s * b, [1.0, 0.0], "edge x = 0", &mut violations);
        check(s * b, 0.0, [0.0, 1.0], "edge y = 0", &mut violations);
        check(b, s * b, [-1.0, 0.0], "edge x = v/c", &mut violations);
        check(s * b, b, [0.0, -1.0], "edge y = v/c", &mut violations);
        // positive axes beyond the box
        check(0.0, b * (1.0 + 9.0 * s), [1.0, 0.0], "axis x = 0", &mut violations);
        check(b * (1.0 + 9.0 * s), 0.0, [0.0, 1.0], "axis y = 0", &mut violations);
    }
    let boundary_samples = count;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<[f64; 2]> = (0..n_trajectories)
        .map(|_| [rng.gen::<f64>() * b, rng.gen::<f64>() * b])
        .collect();
    // envelopes carry a 1e-6 slack, so moderate accuracy suffices
    let tol = Tolerances::new(1e-6, 1e-8);
    let traj_violations: Vec<Violation> = starts
        .par_iter()
        .flat_map_iter(|&s0| trajectory_violations(p, s0, t_end, tol))
        .collect();
    violations.extend(traj_violations);
    Ok(TrappingReport {
        box_size: b,
        boundary_samples,
        trajectories: n_trajectories,
        violations,
    })
}

fn trajectory_violations(p: &DimensionlessParams, s0: [f64; 2], t_end: f64, tol: Tolerances) -> Vec<Violation> {
    let b = p.box_size();
    let slack = 1e-6 * b.max(1.0);
    let mut out = Vec::new();
    let Ok(mut r) = Radau::new(Planar(*p), 0.0, &s0, tol) else {
        return vec![Violation {
            x: s0[0],
            y: s0[1],
            value: f64::NAN,
            what: "integrator setup".into(),
        }];
    };
    loop {
        let st = r.step(t_end);
        let t = r.t();
        let y = r.y();
        let env_y = s0[1] * (-p.delta * t).exp() + b;
        let env_x = s0[0] * (-t).exp() + b;
        if y[1] > env_y + slack {
            out.push(Violation {
                x: y[0],
                y: y[1],
                value: y[1] - env_y,
                what: "y envelope".into(),
            });
        }
        if y[0] > env_x + slack {
            out.push(Violation {
                x: y[0],
                y: y[1],
                value: y[0] - env_x,
                what: "x envelope".into(),
            });
        }
        if y[0] < -slack || y[1] < -slack {
            out.push(Violation {
                x: y[0],
                y: y[1],
                value: y[0].min(y[1]),
                what: "negative state".into(),
            });
        }
        match st {
            Status::Running => {}
            Status::Completed => break,
            other => {
                out.push(Violation {
                    x: y[0],
                    y: y[1],
                    value: f64::NAN,
                    what: status_name(other).into(),
                });
                break;
            }
        }
        if !out.is_empty() {
            break;
        }
    }
    let y = r.y();
    if out.is_empty() && (y[0] > b + slack || y[1] > b + slack) {
        out.push(Violation {
            x: y[0],
            y: y[1],
            value: y[0].max(y[1]) - b,
            what: "final state outside box".into(),
        });
    }
    out
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Running => "running",
        Status::Completed => "completed",
        Status::StepUnderflow => "step-size underflow",
        Status::MaxStepsExceeded => "max steps exceeded",
        Status::NonFinite => "non-finite state",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastCaseReport {
    pub seeds: usize,
    pub to_equilibrium: usize,
    pub cycles: usize,
    pub inconclusive: usize,
}

/// Forward cycle searches from random seeds in the trapping box.
pub fn random_seed_cycle_census(
    p: &DimensionlessParams,
    n_seeds: usize,
    seed: u64,
    opts: &CycleOptions,
) -> Result<FastCaseReport> {
    let geom = analyze_psi1_shape(p)?;
    let eqs = find_equilibria_with(p, &geom)?;
    let b = p.box_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<[f64; 2]> = (0..n_seeds)
        .map(|_| [rng.gen::<f64>() * b, rng.gen::<f64>() * b])
        .collect();
    let outcomes: Vec<CycleSearch> = seeds
        .par_iter()
        .map(|&s| {
            find_limit_cycle_with(p, &geom, &eqs, s, TimeDirection::Forward, opts)
                .unwrap_or_else(|e| CycleSearch::NotFound { reason: e.to_string() })
        })
        .collect();
    let mut rep = FastCaseReport {
        seeds: n_seeds,
        to_equilibrium: 0,
        cycles: 0,
        inconclusive: 0,
    };
    for o in outcomes {
        match o {
            CycleSearch::Found(_) => rep.cycles += 1,
            CycleSearch::Equilibrium { .. } => rep.to_equilibrium += 1,
            CycleSearch::NotFound { .. } => rep.inconclusive += 1,
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldBranch {
    UnstablePlus,
    UnstableMinus,
    StablePlus,
    StableMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "limit", rename_all = "snake_case")]
pub enum BranchLimit {
    Equilibrium { x: f64, y: f64 },
    Cycle { section_value: f64 },
    BoundaryExit,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub branch: ManifoldBranch,
    pub limit: BranchLimit,
    /// Sampled orbit of the branch.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingReport {
    pub saddle: [f64; 2],
    pub unstable_eigenvalue: f64,
    pub unstable_vector: [f64; 2],
    pub stable_eigenvalue: f64,
    pub stable_vector: [f64; 2],
    /// Relative residual of the eigen-equations.
    pub eigen_residual: f64,
    pub branches: Vec<BranchOutcome>,
    /// Smallest distance between an unstable and a stable branch away from
    /// the saddle; zero for an exact homoclinic loop.
    pub homoclinic_gap: f64,
}

fn eigen_pair(j: [[f64; 2]; 2], lambda: f64) -> [f64; 2] {
    // (J - lambda I) v = 0 using the row with the larger entries
    let r0 = [j[0][0] - lambda, j[0][1]];
    let r1 = [j[1][0], j[1][1] - lambda];
    let row = if r0[0].abs() + r0[1].abs() >= r1[0].abs() + r1[1].abs() {
        r0
    } else {
        r1
    };
    let v = [row[1], -row[0]];
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

/// Launch orbits along the saddle's eigendirections: unstable ones forward,
/// stable ones backward, and classify where each ends up.
pub fn saddle_manifold_shooting(p: &DimensionlessParams, saddle: &Equilibrium, t_max: f64) -> Result<ShootingReport> {
    p.validate()?;
    if saddle.linear_type != LinearType::Saddle {
        return Err(Error::param(
            "saddle",
            format!("equilibrium at x = {} is {:?}", saddle.x, saddle.linear_type),
        ));
    }
    let geom = analyze_psi1_shape(p)?;
    let eqs = find_equilibria_with(p, &geom)?;
    let d1 = psi1_jet(saddle.x, p)[1];
    let e1 = psi2_jet(saddle.x, p)[1];
    let j = [[-d1, 1.0], [p.delta * e1, -p.delta]];
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let lu = 0.5 * (tr + disc);
    let ls = 0.5 * (tr - disc);
    let vu = eigen_pair(j, lu);
    let vs = eigen_pair(j, ls);
    let residual = |l: f64, v: [f64; 2]| {
        let r0 = j[0][0] * v[0] + j[0][1] * v[1] - l * v[0];
        let r1 = j[1][0] * v[0] + j[1][1] * v[1] - l * v[1];
        (r0 * r0 + r1 * r1).sqrt() / l.abs()
    };
    let eigen_residual = residual(lu, vu).max(residual(ls, vs));

    let eps = 1e-6 * saddle.y.abs().max(1.0);
    let domain = 10.0 * p.box_size() + 10.0;
    let forward_attr: Vec<[f64; 2]> = eqs
        .iter()
        .filter(|e| e.linear_type.is_stable())
        .map(|e| [e.x, e.y])
        .collect();
    let backward_attr: Vec<[f64; 2]> = eqs
        .iter()
        .filter(|e| matches!(e.linear_type, LinearType::UnstableFocus | LinearType::UnstableNode))
        .map(|e| [e.x, e.y])
        .collect();
    let tol = Tolerances::new(1e-10, 1e-12);

    let mut branches = Vec::new();
    for (branch, vec, sign) in [
        (ManifoldBranch::UnstablePlus, vu, 1.0),
        (ManifoldBranch::UnstableMinus, vu, -1.0),
        (ManifoldBranch::StablePlus, vs, 1.0),
        (ManifoldBranch::StableMinus, vs, -1.0),
    ] {
        let start = [saddle.x + sign * eps * vec[0], saddle.y + sign * eps * vec[1]];
        let forward = matches!(branch, ManifoldBranch::UnstablePlus | ManifoldBranch::UnstableMinus);
        let attr = if forward { &forward_attr } else { &backward_attr };
        let (limit, points) = if forward {
            follow_branch(Planar(*p), start, attr, domain, t_max, tol)
        } else {
            follow_branch(Reversed(Planar(*p)), start, attr, domain, t_max, tol)
        };
        branches.push(BranchOutcome { branch, limit, points });
    }

    let exclude = 0.05 * (saddle.y.abs().max(1.0));
    let mut gap = f64::INFINITY;
    for u in branches
        .iter()
        .filter(|b| matches!(b.branch, ManifoldBranch::UnstablePlus | ManifoldBranch::UnstableMinus))
    {
        for s in branches
            .iter()
            .filter(|b| matches!(b.branch, ManifoldBranch::StablePlus | ManifoldBranch::StableMinus))
        {
            for a in u.points.iter().filter(|a| dist(**a, [saddle.x, saddle.y]) > exclude) {
                for b in s.points.iter().filter(|b| dist(**b, [saddle.x, saddle.y]) > exclude) {
                    gap = gap.min(dist(*a, *b));
                }
            }
        }
    }
    Ok(ShootingReport {
        saddle: [saddle.x, saddle.y],
        unstable_eigenvalue: lu,
        unstable_vector: vu,
        stable_eigenvalue: ls,
        stable_vector: vs,
        eigen_residual,
        branches,
        homoclinic_gap: gap,
    })
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn follow_branch<S: OdeSystem>(
    sys: S,
    start: [f64; 2],
    attracting: &[[f64; 2]],
    domain: f64,
    t_max: f64,
    tol: Tolerances,
) -> (BranchLimit, Vec<[f64; 2]>) {
    let mut pts = vec![start];
    let Ok(mut r) = Radau::new(sys, 0.0, &start, tol) else {
        return (BranchLimit::Inconclusive, pts);
    };
    let near = |y: &[f64]| {
        attracting
            .iter()
            .copied()
            .find(|e| dist([y[0], y[1]], *e) <= 1e-5 * e[1].abs().max(1.0))
    };
    let mut section_hits: Vec<f64> = Vec::new();
    loop {
        let st = r.step(t_max);
        let y = r.y().to_vec();
        if r.last_segment().is_some() {
            pts.push([y[0], y[1]]);
        }
        if let Some(e) = near(&y) {
            return (BranchLimit::Equilibrium { x: e[0], y: e[1] }, pts);
        }
        if domain_exit(&y, domain) || y[0] < -1e-6 {
            return (BranchLimit::BoundaryExit, pts);
        }
        if let Some(seg) = r.last_segment() {
            // revisits of the vertical line through the start reveal a cycle
            for (_, c) in crossings_in(seg, |z| z[0] - start[0]) {
                if c[1] > start[1] {
                    section_hits.push(c[1]);
                }
            }
            let n = section_hits.len();
            if n >= 4 && (section_hits[n - 1] - section_hits[n - 2]).abs() <= 1e-7 * section_hits[n - 1].abs().max(1.0)
            {
                return (
                    BranchLimit::Cycle {
                        section_value: section_hits[n - 1],
                    },
                    pts,
                );
            }
        }
        if st != Status::Running {
            return (BranchLimit::Inconclusive, pts);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub params: DimensionlessParams,
    /// Dimensionless time units.
    pub period_2d: Option<f64>,
    pub period_3d: Option<f64>,
    pub period_gap: Option<f64>,
    /// Largest `|x_3d - x_2d|` and `|y_3d - y_2d|` over the common horizon.
    pub max_discrepancy: [f64; 2],
    pub final_2d: [f64; 2],
    pub final_3d: [f64; 2],
    pub note: Option<String>,
}

/// Mean spacing of upward mean-crossings of `x` over the second half of the
/// record, if at least three are found with non-negligible amplitude.
fn estimate_period(times: &[f64], xs: &[f64]) -> Option<f64> {
    let n = times.len();
    if n < 10 {
        return None;
    }
    let half = n / 2;
    let tail = &xs[half..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    if hi - lo <= 1e-3 * mean.abs().max(1e-9) {
        return None;
    }
    let mut ups = Vec::new();
    for k in half + 1..n {
        if xs[k - 1] < mean && xs[k] >= mean {
            let f = (mean - xs[k - 1]) / (xs[k] - xs[k - 1]);
            ups.push(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    if ups.len() < 3 {
        return None;
    }
    Some((ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64)
}

/// Integrate the three-species model and its planar reduction from
/// corresponding initial data and compare periods and observables.
pub fn simulate_compare_3d_2d(
    bp: &BiologicalParams,
    initial: State3,
    t_end: f64,
    tol: Tolerances,
) -> Result<ComparisonReport> {
    bp.validate()?;
    initial.check()?;
    let p = crate::model::reduce_to_dimensionless(bp)?;
    let s2 = state3_to_state2(&initial, bp);
    let tau_end = bp.k3 * t_end;
    let tr3 = integrate(ThreeSpecies(*bp), 0.0, &[initial.m, initial.p1, initial.p2], t_end, tol)?;
    let tr2 = integrate(Planar(p), 0.0, &[s2.x, s2.y], tau_end, tol)?;
    let to2 = |s: &[f64]| {
        let st = state3_to_state2(
            &State3 {
                m: s[0],
                p1: s[1],
                p2: s[2],
            },
            bp,
        );
        [st.x, st.y]
    };
    let mut max_disc = [0.0f64, 0.0f64];
    for (t, s) in tr3.times.iter().zip(&tr3.states) {
        if let Some(y2) = tr2.eval(bp.k3 * t) {
            let y3 = to2(s);
            max_disc[0] = max_disc[0].max((y3[0] - y2[0]).abs());
            max_disc[1] = max_disc[1].max((y3[1] - y2[1]).abs());
        }
    }
    let x3: Vec<f64> = tr3.states.iter().map(|s| to2(s)[0]).collect();
    let t3: Vec<f64> = tr3.times.iter().map(|t| bp.k3 * t).collect();
    let x2: Vec<f64> = tr2.states.iter().map(|s| s[0]).collect();
    let period_3d = estimate_period(&t3, &x3);
    let period_2d = estimate_period(&tr2.times, &x2);
    let note = match (period_2d, period_3d) {
        (Some(_), None) => Some("only the planar reduction oscillates".to_string()),
        (None, Some(_)) => Some("only the three-species model oscillates".to_string()),
        _ if !(tr2.is_complete() && tr3.is_complete()) => Some(format!(
            "integration incomplete: planar {:?}, three-species {:?}",
            tr2.status, tr3.status
        )),
        _ => None,
    };
    let f3 = to2(tr3.last_state());
    let f2 = tr2.last_state();
    Ok(ComparisonReport {
        params: p,
        period_2d,
        period_3d,
        period_gap: period_2d.zip(period_3d).map(|(a, b)| (a - b).abs()),
        max_discrepancy: max_disc,
        final_2d: [f2[0], f2[1]],
        final_3d: f3,
        note,
    })
}

/// Symmetric Hausdorff distance between two point clouds.
pub fn hausdorff_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let one_way = |a: &[[f64; 2]], b: &[[f64; 2]]| {
        a.iter()
            .map(|p| b.iter().map(|q| dist(*p, *q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Resample a closed polyline so that consecutive points are at most `h`
/// apart.
pub fn densify(points: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let d = dist(w[0], w[1]);
        let k = ((d / h).ceil() as usize).max(1);
        for i in 0..k {
            let s = i as f64 / k as f64;
            out.push([w[0][0] + s * (w[1][0] - w[0][0]), w[0][1] + s * (w[1][1] - w[0][1])]);
        }
    }
    if let Some(last) = points.last() {
        out.push(*last);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gspt::singular_cycle_common;

    #[test]
    fn relaxation_cycle_at_v55() {
        let p = DimensionlessParams::example_canard(55.0);
        let geom = analyze_psi1_shape(&p).unwrap();
        let eqs = find_equilibria_with(&p, &geom).unwrap();
        let seed = default_seed(&p, &geom, &eqs);
        let res = find_limit_cycle(&p, seed, TimeDirection::Forward, &CycleOptions::default()).unwrap();
        let c = res.cycle().expect("cycle");
        assert_eq!(c.stability, Stability::Stable);
        assert!(c.return_map_slope.unwrap().abs() < 1.0);
        assert_eq!(classify_cycle(c, &geom, &p).unwrap(), CycleClass::Relaxation);
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert!(dist(first, last) < 1e-6 * first[1].max(1.0));
        // close to the singular skeleton
        let f = geom.folds.unwrap();
        let sk = singular_cycle_common(&geom, &p).unwrap();
        let sk_pts = densify(&sk.points().collect::<Vec<_>>(), 0.05);
        let hd = hausdorff_distance(&densify(&c.points, 0.05), &sk_pts);
        assert!(hd < 0.15 * (f.x_right_landing - f.x_left_landing), "{hd}");
    }

    #[test]
    fn fast_case_has_no_cycles() {
        let base = DimensionlessParams::example_canard(55.0);
        let geom = analyze_psi1_shape(&base).unwrap();
        let p = base.with_delta(2.0 * geom.min_slope.abs());
        let rep = random_seed_cycle_census(&p, 5, 7, &CycleOptions::default()).unwrap();
        assert_eq!(rep.to_equilibrium, 5, "{rep:?}");
    }

    #[test]
    fn trapping_region_small_sample() {
        let p = DimensionlessParams::example_canard(55.0);
        let rep = verify_trapping_region(&p, 600, 5, 200.0, 3).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        assert!(rep.boundary_samples >= 600);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let p = DimensionlessParams::example_canard(55.0);
        assert!(canard_explosion_sweep(&p, &[], &SweepOptions::default()).is_err());
        assert!(canard_explosion_sweep(&p, &[50.0, 49.0, 51.0], &SweepOptions::default()).is_err());
    }

    #[test]
    fn equilibrium_start_is_stationary() {
        let p = DimensionlessParams::example_canard(30.0);
        let e = crate::equilibria::find_equilibria(&p).unwrap()[0];
        let tol = Tolerances::default();
        let tr = integrate(Planar(p), 0.0, &[e.x, e.y], 100.0, tol).unwrap();
        let y = tr.last_state();
        assert!(((y[0] - e.x).powi(2) + (y[1] - e.y).powi(2)).sqrt() <= 10.0 * tol.atol * e.y.max(1.0) * 1e3);
    }

    #[test]
    fn layer_limit_keeps_y_constant() {
        let p = DimensionlessParams::example_canard(55.0).with_delta(f64::MIN_POSITIVE);
        let tr = integrate(Planar(p), 0.0, &[3.0, 20.0], 50.0, Tolerances::default()).unwrap();
        assert!((tr.last_state()[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn saddle_shooting_eigenvectors() {
        let base = DimensionlessParams::example_canard(55.0);
        let f = analyze_psi1_shape(&base).unwrap().folds.unwrap();
        let (c, v) = crate::equilibria::fit_psi2_through_points(
            f.x_left_fold,
            f.y_left_fold * 0.999,
            f.x_right_fold,
            f.y_right_fold * 1.05,
        )
        .unwrap();
        let p = base.with_cv(c, v);
        let eqs = crate::equilibria::find_equilibria(&p).unwrap();
        assert_eq!(crate::equilibria::sequence_of(&eqs).unwrap().to_string(), "L1MR1");
        let saddle = eqs[1];
        let rep = saddle_manifold_shooting(&p, &saddle, 5e4).unwrap();
        assert!(rep.eigen_residual < 1e-8);
        for b in rep.branches.iter().take(2) {
            assert!(matches!(b.limit, BranchLimit::Equilibrium { .. }), "{:?}", b.limit);
        }
        let ends: Vec<f64> = rep.branches[..2]
            .iter()
            .map(|b| match b.limit {
                BranchLimit::Equilibrium { x, .. } => x,
                _ => f64::NAN,
            })
            .collect();
        assert!((ends[0] - ends[1]).abs() > 1.0, "branches should reach different nodes");
    }
}
