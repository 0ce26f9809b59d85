//! Fold-point analysis of the slow-fast system `x' = y - psi1(x)`,
//! `y' = delta (psi2(x) - y)` with `delta` small.
//!
//! All constants are evaluated at the fold abscissa `x_i` and at the value
//! `v0 = psi1(x_i) (c + q(x_i)^2)` for which the fold is an equilibrium,
//! where `q(x) = x - phi(x)`. With `d2 = psi1''(x_i)` and `s = psi2'(x_i)`:
//!
//! ```text
//! k1 = -2 psi1'''/(3 d2^2),  k2 = -psi2''/(d2 s),  k3 = 1/s,
//! A  = 3 k1 - 2 k2 - 2 k3,
//! v_H(delta) = v0 + k3 s^2 (c + q^2)/d2 * delta,
//! v_c(delta) = v0 + (k3 + A/4) s^2 (c + q^2)/d2 * delta.
//! ```

use serde::{Deserialize, Serialize};

use crate::equilibria::{is_tangent_at, Fold, FoldPair, ManifoldGeometry, Region};
use crate::error::{Error, Result};
use crate::model::{psi1_jet, psi2_jet, q_squared, DimensionlessParams};
use crate::poly::bisect;

/// Relative band on `|A|` under which the criticality is undecided.
pub const CRITICALITY_TOL: f64 = 1e-6;
/// Relative band on `|psi(x_i)|` for a fold to count as an equilibrium.
pub const FOLD_EQUILIBRIUM_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldKind {
    /// The fold is not an equilibrium; trajectories leave along a fast fiber.
    Jump,
    /// The fold is an equilibrium of the full system.
    Canard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Supercritical,
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldAnalysis {
    pub which: Fold,
    pub x: f64,
    pub y: f64,
    /// Classification at the parameters' own `v`.
    pub kind: FoldKind,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    /// `3 kappa1 - 2 kappa2 - 2 kappa3`.
    pub criticality_constant: f64,
    /// First-order coefficient of the canard curve.
    pub canard_coefficient: f64,
    /// First-order coefficient of the Hopf curve.
    pub hopf_slope: f64,
    /// `v` at which the fold is an equilibrium.
    pub v0: f64,
    /// `psi1''(x)`.
    pub curvature: f64,
    /// `psi2'(x)` at `v0`.
    pub psi2_slope: f64,
}

impl FoldAnalysis {
    /// Condition under which a homoclinic orbit exists on the canard curve:
    /// `kappa3 + A/4 < 0`.
    pub fn homoclinic_possible(&self) -> bool {
        self.kappa3 + self.criticality_constant / 4.0 < 0.0
    }

    fn criticality_band(&self) -> f64 {
        CRITICALITY_TOL * ((3.0 * self.kappa1).abs() + (2.0 * self.kappa2).abs() + (2.0 * self.kappa3).abs())
    }
}

/// Normal-form constants at one fold.
pub fn classify_fold(geom: &ManifoldGeometry, p: &DimensionlessParams, which: Fold) -> Result<FoldAnalysis> {
    p.validate()?;
    let folds = geom.fold_pair()?;
    let (x, y) = folds.fold(which);
    let j1 = psi1_jet(x, p);
    let q2 = q_squared(x);
    let v0 = j1[0] * (p.c + q2);
    let at_v0 = p.with_v(v0);
    let j2 = psi2_jet(x, &at_v0);

    let d2 = j1[2];
    if d2.abs() <= 1e-12 * (1.0 + (p.b1 + p.b2) / p.a) {
        return Err(Error::Degenerate(format!(
            "psi1''({x}) = {d2} vanishes at the {which} fold"
        )));
    }
    let s = j2[1];
    if !(s < 0.0) {
        return Err(Error::Degenerate(format!("psi2'({x}) = {s} is not negative")));
    }
    let kappa1 = -2.0 * j1[3] / (3.0 * d2 * d2);
    let kappa2 = -j2[2] / (d2 * s);
    let kappa3 = 1.0 / s;
    let a_const = 3.0 * kappa1 - 2.0 * kappa2 - 2.0 * kappa3;
    let factor = s * s * (p.c + q2) / d2;
    let residual = j1[0] - psi2_jet(x, p)[0];
    let kind = if residual.abs() <= FOLD_EQUILIBRIUM_TOL * y.abs().max(1.0) {
        FoldKind::Canard
    } else {
        FoldKind::Jump
    };
    let f = FoldAnalysis {
        which,
        x,
        y,
        kind,
        kappa1,
        kappa2,
        kappa3,
        criticality_constant: a_const,
        canard_coefficient: (kappa3 + a_const / 4.0) * factor,
        hopf_slope: kappa3 * factor,
        v0,
        curvature: d2,
        psi2_slope: s,
    };
    if a_const.abs() <= f.criticality_band() {
        return Err(Error::Degenerate(format!("A = {a_const} vanishes at the {which} fold")));
    }
    Ok(f)
}

/// Both folds, left first.
pub fn classify_folds(geom: &ManifoldGeometry, p: &DimensionlessParams) -> Result<[FoldAnalysis; 2]> {
    Ok([
        classify_fold(geom, p, Fold::Left)?,
        classify_fold(geom, p, Fold::Right)?,
    ])
}

/// First-order Hopf curve `v0 + hopf_slope * delta`.
pub fn hopf_curve(f: &FoldAnalysis, delta: f64) -> f64 {
    f.v0 + f.hopf_slope * delta
}

/// First-order canard curve `v0 + canard_coefficient * delta`.
pub fn canard_curve(f: &FoldAnalysis, delta: f64) -> f64 {
    f.v0 + f.canard_coefficient * delta
}

/// Exact Hopf value: the `v` at which the equilibrium on the middle branch
/// next to the fold has zero trace, i.e. `psi1'(x0) = -delta`.
pub fn hopf_value_exact(geom: &ManifoldGeometry, p: &DimensionlessParams, which: Fold, delta: f64) -> Result<f64> {
    let folds = geom.fold_pair()?;
    if !(delta > 0.0 && delta < -geom.min_slope) {
        return Err(Error::param(
            "delta",
            format!("trace-zero point needs 0 < delta < {}", -geom.min_slope),
        ));
    }
    let g = |x: f64| psi1_jet(x, p)[1] + delta;
    let x0 = match which {
        Fold::Left => bisect(g, folds.x_left_fold, geom.x_plus)?,
        Fold::Right => bisect(g, geom.x_plus, folds.x_right_fold)?,
    };
    Ok(psi1_jet(x0, p)[0] * (p.c + q_squared(x0)))
}

pub fn hopf_criticality(f: &FoldAnalysis) -> Result<Criticality> {
    let a = f.criticality_constant;
    if a.abs() <= f.criticality_band() {
        return Err(Error::Degenerate(format!("A = {a} is within the degeneracy band")));
    }
    let supercritical = match f.which {
        Fold::Left => a < 0.0,
        Fold::Right => a > 0.0,
    };
    Ok(if supercritical {
        Criticality::Supercritical
    } else {
        Criticality::Subcritical
    })
}

/// Whether the reduced flow on the adjacent attracting branch moves toward
/// the fold at the parameters' own `v`.
pub fn reduced_flow_points_to_fold(folds: &FoldPair, p: &DimensionlessParams, which: Fold) -> bool {
    let (x, _) = folds.fold(which);
    let h = 1e-6 * x.max(1.0);
    match which {
        // left branch: x increases where psi2 > psi1
        Fold::Left => {
            let xs = x - h;
            psi2_jet(xs, p)[0] > psi1_jet(xs, p)[0]
        }
        // right branch: x decreases where psi2 < psi1
        Fold::Right => {
            let xs = x + h;
            psi2_jet(xs, p)[0] < psi1_jet(xs, p)[0]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnfoldingDirection {
    /// Two equilibria for `v < v0`, none for `v > v0`.
    EquilibriaBelow,
    /// Two equilibria for `v > v0`, none for `v < v0`.
    EquilibriaAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleNodeReport {
    pub x0: f64,
    pub v0: f64,
    /// Quadratic center-manifold coefficient.
    pub k2: f64,
    /// `psi1 >= psi2` near `x0`.
    pub psi1_above: bool,
    pub direction: UnfoldingDirection,
}

/// Saddle-node coefficient at a tangency of the nullclines on the middle
/// branch; `p.v` is the tangency value `v0`.
pub fn saddle_node_analysis(p: &DimensionlessParams, geom: &ManifoldGeometry, x0: f64) -> Result<SaddleNodeReport> {
    p.validate()?;
    if geom.region_of(x0) != Some(Region::M) {
        return Err(Error::param("x0", format!("{x0} is not on the middle branch")));
    }
    if !is_tangent_at(x0, p) {
        return Err(Error::param("x0", format!("nullclines are not tangent at {x0}")));
    }
    let j1 = psi1_jet(x0, p);
    let j2 = psi2_jet(x0, p);
    let curvature = j1[2] - j2[2];
    if curvature.abs() <= 1e-9 * 1f64.max(j1[2].abs()).max(j2[2].abs()) {
        return Err(Error::Degenerate(format!("psi1'' = psi2'' at x0 = {x0}")));
    }
    let k2 = p.delta * (j2[2] - j1[2]) / (j1[1] + p.delta);
    let psi1_above = curvature > 0.0;
    Ok(SaddleNodeReport {
        x0,
        v0: p.v,
        k2,
        psi1_above,
        // raising v lifts psi2, so the pair exists on the side where psi2 is
        // pushed through psi1
        direction: if psi1_above {
            UnfoldingDirection::EquilibriaAbove
        } else {
            UnfoldingDirection::EquilibriaBelow
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    Common,
    CanardNoHead,
    Transitory,
    CanardWithHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Arc of the critical manifold `y = psi1(x)`.
    Slow,
    /// Horizontal fiber of the layer problem.
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub points: Vec<[f64; 2]>,
}

impl Segment {
    pub fn start(&self) -> [f64; 2] {
        self.points[0]
    }

    pub fn end(&self) -> [f64; 2] {
        *self.points.last().expect("segment has points")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularCycle {
    pub kind: SingularKind,
    pub fold: Option<Fold>,
    pub theta: Option<f64>,
    pub segments: Vec<Segment>,
}

impl SingularCycle {
    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.segments.iter().flat_map(|s| s.points.iter().copied())
    }

    pub fn x_range(&self) -> [f64; 2] {
        self.points().fold([f64::INFINITY, f64::NEG_INFINITY], |r, p| {
            [r[0].min(p[0]), r[1].max(p[0])]
        })
    }

    /// Largest gap between the end of one segment and the start of the next.
    pub fn closure_gap(&self) -> f64 {
        let n = self.segments.len();
        (0..n)
            .map(|k| {
                let a = self.segments[k].end();
                let b = self.segments[(k + 1) % n].start();
                (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Points sampled per slow arc.
const ARC_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Left,
    Middle,
    Right,
}

/// Abscissa on the given branch where `psi1 = h`.
fn branch_abscissa(p: &DimensionlessParams, f: &FoldPair, branch: Branch, h: f64) -> Result<f64> {
    let y = |x: f64| psi1_jet(x, p)[0] - h;
    let clamp = |x: f64, lo: f64, hi: f64| x.clamp(lo, hi);
    match branch {
        Branch::Left => {
            if h >= f.y_left_fold {
                return Ok(f.x_left_fold);
            }
            Ok(clamp(bisect(y, 0.0, f.x_left_fold)?, 0.0, f.x_left_fold))
        }
        Branch::Middle => {
            if h >= f.y_left_fold {
                return Ok(f.x_left_fold);
            }
            if h <= f.y_right_fold {
                return Ok(f.x_right_fold);
            }
            Ok(bisect(y, f.x_left_fold, f.x_right_fold)?)
        }
        Branch::Right => {
            if h <= f.y_right_fold {
                return Ok(f.x_right_fold);
            }
            let mut hi = 2.0 * f.x_right_fold + 1.0;
            while y(hi) <= 0.0 {
                hi *= 2.0;
            }
            Ok(bisect(y, f.x_right_fold, hi)?)
        }
    }
}

fn slow_arc(p: &DimensionlessParams, x_start: f64, x_end: f64) -> Segment {
    let points = (0..ARC_SAMPLES)
        .map(|k| {
            let x = x_start + (x_end - x_start) * k as f64 / (ARC_SAMPLES - 1) as f64;
            [x, psi1_jet(x, p)[0]]
        })
        .collect();
    Segment {
        kind: SegmentKind::Slow,
        points,
    }
}

fn fast_fiber_at(h: f64, x_start: f64, x_end: f64) -> Segment {
    Segment {
        kind: SegmentKind::Fast,
        points: vec![[x_start, h], [x_end, h]],
    }
}

fn pin_heights(seg: &mut Segment, start_y: f64, end_y: f64) {
    seg.points[0][1] = start_y;
    let n = seg.points.len();
    seg.points[n - 1][1] = end_y;
}

/// The common relaxation skeleton: both outer branches joined by fast
/// fibers at the two fold heights.
pub fn singular_cycle_common(geom: &ManifoldGeometry, p: &DimensionlessParams) -> Result<SingularCycle> {
    let f = geom.fold_pair()?;
    let mut left = slow_arc(p, f.x_left_landing, f.x_left_fold);
    pin_heights(&mut left, f.y_right_fold, f.y_left_fold);
    let mut right = slow_arc(p, f.x_right_landing, f.x_right_fold);
    pin_heights(&mut right, f.y_left_fold, f.y_right_fold);
    Ok(SingularCycle {
        kind: SingularKind::Common,
        fold: None,
        theta: None,
        segments: vec![
            left,
            fast_fiber_at(f.y_left_fold, f.x_left_fold, f.x_right_landing),
            right,
            fast_fiber_at(f.y_right_fold, f.x_right_fold, f.x_left_landing),
        ],
    })
}

/// Canard skeleton through `which` fold with height parameter
/// `theta` in `[0, 2 (y_left_fold - y_right_fold)]`.
pub fn singular_cycle_canard(
    geom: &ManifoldGeometry,
    p: &DimensionlessParams,
    which: Fold,
    theta: f64,
) -> Result<SingularCycle> {
    let f = *geom.fold_pair()?;
    let gap = f.fold_gap();
    if !(0.0..=2.0 * gap).contains(&theta) {
        return Err(Error::param("theta", format!("{theta} outside [0, {}]", 2.0 * gap)));
    }
    let transitory_band = 1e-12 * gap.max(1.0);
    let kind = if (theta - gap).abs() <= transitory_band {
        SingularKind::Transitory
    } else if theta < gap {
        SingularKind::CanardNoHead
    } else {
        SingularKind::CanardWithHead
    };
    let with_head = theta > gap;
    // the with-head family is parametrised by the reflected height
    let t = if with_head { 2.0 * gap - theta } else { theta.min(gap) };

    let segments = match which {
        Fold::Left => {
            let h = f.y_left_fold - t;
            let x_mid = branch_abscissa(p, &f, Branch::Middle, h)?;
            if !with_head {
                let x_in = branch_abscissa(p, &f, Branch::Left, h)?;
                let mut up = slow_arc(p, x_in, f.x_left_fold);
                pin_heights(&mut up, h, f.y_left_fold);
                let mut down = slow_arc(p, f.x_left_fold, x_mid);
                pin_heights(&mut down, f.y_left_fold, h);
                vec![up, down, fast_fiber_at(h, x_mid, x_in)]
            } else {
                let x_out = branch_abscissa(p, &f, Branch::Right, h)?;
                let mut up = slow_arc(p, f.x_left_landing, f.x_left_fold);
                pin_heights(&mut up, f.y_right_fold, f.y_left_fold);
                let mut down = slow_arc(p, f.x_left_fold, x_mid);
                pin_heights(&mut down, f.y_left_fold, h);
                let mut right = slow_arc(p, x_out, f.x_right_fold);
                pin_heights(&mut right, h, f.y_right_fold);
                vec![
                    up,
                    down,
                    fast_fiber_at(h, x_mid, x_out),
                    right,
                    fast_fiber_at(f.y_right_fold, f.x_right_fold, f.x_left_landing),
                ]
            }
        }
        Fold::Right => {
            let h = f.y_right_fold + t;
            let x_mid = branch_abscissa(p, &f, Branch::Middle, h)?;
            if !with_head {
                let x_in = branch_abscissa(p, &f, Branch::Right, h)?;
                let mut down = slow_arc(p, x_in, f.x_right_fold);
                pin_heights(&mut down, h, f.y_right_fold);
                let mut up = slow_arc(p, f.x_right_fold, x_mid);
                pin_heights(&mut up, f.y_right_fold, h);
                vec![down, up, fast_fiber_at(h, x_mid, x_in)]
            } else {
                let x_out = branch_abscissa(p, &f, Branch::Left, h)?;
                let mut down = slow_arc(p, f.x_right_landing, f.x_right_fold);
                pin_heights(&mut down, f.y_left_fold, f.y_right_fold);
                let mut up = slow_arc(p, f.x_right_fold, x_mid);
                pin_heights(&mut up, f.y_right_fold, h);
                let mut left = slow_arc(p, x_out, f.x_left_fold);
                pin_heights(&mut left, h, f.y_left_fold);
                vec![
                    down,
                    up,
                    fast_fiber_at(h, x_mid, x_out),
                    left,
                    fast_fiber_at(f.y_left_fold, f.x_left_fold, f.x_right_landing),
                ]
            }
        }
    };
    Ok(SingularCycle {
        kind,
        fold: Some(which),
        theta: Some(theta),
        segments,
    })
}
