//! Equilibria of the dimensionless system and the shape of its critical
//! manifold `y = psi1(x)`.
//!
//! Equilibria are the positive zeros of `psi = psi1 - psi2`. Under
//! `x = u^2 + 2u` they become the positive roots of the degree-8 polynomial
//!
//! ```text
//! (u^4 + 4u^3 + (a+b2+4)u^2 + 2(a+b1+b2)u)(u^4 + c) - v(u^2 + 2u + a)
//! ```
//!
//! which is isolated exactly (see [`crate::poly`]). Likewise the inflection
//! of `psi1` is the unique positive root of the quartic
//!
//! ```text
//! 3b1 w^4 - (8b1 + 4a b2) w^3 + 6b1(1-a) w^2 - b1(a-1)^2,   w = u + 1.
//! ```

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{psi1_jet, psi2_jet, q_squared, DimensionlessParams};
use crate::poly::{bisect, positive_roots, ExactPoly};

/// Relative band for `|psi'| ~ 0` (tangency of the two nullclines).
pub const TANGENCY_TOL: f64 = 1e-7;
/// Relative band for an equilibrium sitting on a fold abscissa.
pub const FOLD_REGION_TOL: f64 = 1e-7;
/// Relative band on `|psi|` at a critical point of `psi` under which a
/// near-double root is merged into one tangency.
pub const MERGE_TOL: f64 = 1e-10;
/// Relative band on `|psi''|` under which a tangency is flagged degenerate.
pub const DEGENERATE_CURVATURE_TOL: f64 = 1e-6;
/// Bracket width used when isolating polynomial roots.
pub const ROOT_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trichotomy {
    /// `psi1' > 0` everywhere.
    Monotone,
    /// `psi1'(x+) = 0` within tolerance.
    Degenerate,
    /// Two folds: a local maximum and a local minimum of `psi1`.
    SShaped,
}

/// The two folds of an S-shaped critical manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fold {
    /// Local maximum of `psi1` (the lower abscissa).
    Left,
    /// Local minimum of `psi1` (the upper abscissa).
    Right,
}

impl fmt::Display for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fold::Left => "left",
            Fold::Right => "right",
        })
    }
}

/// Fold points and their horizontal projections onto the outer branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPair {
    pub x_left_fold: f64,
    pub y_left_fold: f64,
    pub x_right_fold: f64,
    pub y_right_fold: f64,
    /// Left-branch abscissa at height `y_right_fold`.
    pub x_left_landing: f64,
    /// Right-branch abscissa at height `y_left_fold`.
    pub x_right_landing: f64,
}

impl FoldPair {
    pub fn fold(&self, which: Fold) -> (f64, f64) {
        match which {
            Fold::Left => (self.x_left_fold, self.y_left_fold),
            Fold::Right => (self.x_right_fold, self.y_right_fold),
        }
    }

    /// `y_left_fold - y_right_fold > 0`.
    pub fn fold_gap(&self) -> f64 {
        self.y_left_fold - self.y_right_fold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldGeometry {
    pub u_plus: f64,
    /// Inflection abscissa of `psi1`.
    pub x_plus: f64,
    /// `psi1'(x_plus)`, the minimum slope of the critical manifold.
    pub min_slope: f64,
    pub trichotomy: Trichotomy,
    pub folds: Option<FoldPair>,
}

impl ManifoldGeometry {
    pub fn fold_pair(&self) -> Result<&FoldPair> {
        self.folds.as_ref().ok_or_else(|| {
            Error::Degenerate(format!(
                "critical manifold is not S-shaped ({:?}, psi1'(x+) = {})",
                self.trichotomy, self.min_slope
            ))
        })
    }

    pub fn region_of(&self, x: f64) -> Option<Region> {
        let f = self.folds.as_ref()?;
        let near = |xf: f64| (x - xf).abs() <= FOLD_REGION_TOL * xf.max(1.0);
        Some(if near(f.x_left_fold) {
            Region::L0
        } else if near(f.x_right_fold) {
            Region::R0
        } else if x < f.x_left_fold {
            Region::L1
        } else if x < f.x_right_fold {
            Region::M
        } else {
            Region::R1
        })
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite parameter")
}

fn exact(coeffs: &[BigRational]) -> ExactPoly {
    ExactPoly::new(coeffs.to_vec())
}

/// The quartic whose unique positive root locates the inflection of `psi1`.
pub fn inflection_quartic(p: &DimensionlessParams) -> ExactPoly {
    let (a, b1, b2) = (rat(p.a), rat(p.b1), rat(p.b2));
    let one = rat(1.0);
    let am1 = &a - &one;
    let in_w = exact(&[
        -(&b1 * &am1 * &am1),
        rat(0.0),
        rat(6.0) * &b1 * (&one - &a),
        -(rat(8.0) * &b1 + rat(4.0) * &a * &b2),
        rat(3.0) * &b1,
    ]);
    in_w.shift(&one)
}

/// The degree-8 polynomial whose positive roots `u` give the equilibria.
pub fn equilibrium_polynomial(p: &DimensionlessParams) -> ExactPoly {
    let (a, b1, b2, c, v) = (rat(p.a), rat(p.b1), rat(p.b2), rat(p.c), rat(p.v));
    let zero = rat(0.0);
    let one = rat(1.0);
    let left = exact(&[
        zero.clone(),
        rat(2.0) * (&a + &b1 + &b2),
        &a + &b2 + rat(4.0),
        rat(4.0),
        one.clone(),
    ]);
    let quartic = exact(&[c, zero.clone(), zero.clone(), zero, one.clone()]);
    let right = exact(&[&v * &a, &v * rat(2.0), v]);
    left.mul(&quartic).sub(&right)
}

fn u_to_x(u: f64) -> f64 {
    u * u + 2.0 * u
}

/// Shape of `psi1`: inflection, trichotomy and, when S-shaped, the folds.
pub fn analyze_psi1_shape(p: &DimensionlessParams) -> Result<ManifoldGeometry> {
    p.validate()?;
    let quartic = inflection_quartic(p);
    let roots = positive_roots(&quartic, ROOT_WIDTH)?;
    if roots.len() != 1 {
        return Err(Error::NoConvergence(format!(
            "inflection quartic has {} positive roots, expected exactly one",
            roots.len()
        )));
    }
    let u_plus = roots[0].root;
    let x_plus = u_to_x(u_plus);
    let d1 = |x: f64| psi1_jet(x, p)[1];
    let min_slope = d1(x_plus);
    let band = 1e-10 * (1.0 + (p.b1 + p.b2) / p.a);

    let trichotomy = if min_slope.abs() <= band {
        Trichotomy::Degenerate
    } else if min_slope > 0.0 {
        Trichotomy::Monotone
    } else {
        Trichotomy::SShaped
    };
    if trichotomy != Trichotomy::SShaped {
        return Ok(ManifoldGeometry {
            u_plus,
            x_plus,
            min_slope,
            trichotomy,
            folds: None,
        });
    }

    // psi1' decreases on (0, x+) from psi1'(0) > 0 and increases to 1 beyond x+
    let x_left_fold = bisect(d1, 0.0, x_plus)?;
    let mut hi = 2.0 * x_plus + 1.0;
    while d1(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::NoConvergence("right fold not bracketed".into()));
        }
    }
    let x_right_fold = bisect(d1, x_plus, hi)?;
    let y = |x: f64| psi1_jet(x, p)[0];
    let y_left_fold = y(x_left_fold);
    let y_right_fold = y(x_right_fold);

    let x_left_landing = bisect(|x| y(x) - y_right_fold, 0.0, x_left_fold)?;
    let mut hi = 2.0 * x_right_fold + 1.0;
    while y(hi) <= y_left_fold {
        hi *= 2.0;
    }
    let x_right_landing = bisect(|x| y(x) - y_left_fold, x_right_fold, hi)?;

    Ok(ManifoldGeometry {
        u_plus,
        x_plus,
        min_slope,
        trichotomy,
        folds: Some(FoldPair {
            x_left_fold,
            y_left_fold,
            x_right_fold,
            y_right_fold,
            x_left_landing,
            x_right_landing,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearType {
    StableFocus,
    StableNode,
    UnstableFocus,
    UnstableNode,
    Saddle,
    SaddleNode,
}

impl LinearType {
    pub fn is_stable(self) -> bool {
        matches!(self, LinearType::StableFocus | LinearType::StableNode)
    }
}

/// Where an equilibrium sits relative to the folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    L0,
    L1,
    M,
    R0,
    R1,
}

impl Region {
    fn rank(self) -> u8 {
        match self {
            Region::L0 | Region::L1 => 0,
            Region::M => 1,
            Region::R0 | Region::R1 => 2,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::L0 => "L0",
            Region::L1 => "L1",
            Region::M => "M",
            Region::R0 => "R0",
            Region::R1 => "R1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: f64,
    pub y: f64,
    /// `delta (psi1' - psi2')`, the Jacobian determinant.
    pub det: f64,
    /// `-delta - psi1'`, the Jacobian trace.
    pub trace: f64,
    /// `trace^2 - 4 det`.
    pub discriminant: f64,
    pub linear_type: LinearType,
    pub region: Option<Region>,
    pub tangency: bool,
    /// Tangency with vanishing `psi''` (a collapsing triple root).
    pub degenerate: bool,
}

fn tangency_band(x: f64, p: &DimensionlessParams) -> f64 {
    let d1 = psi1_jet(x, p)[1];
    let d2 = psi2_jet(x, p)[1];
    TANGENCY_TOL * 1f64.max(d1.abs()).max(d2.abs())
}

/// `|psi'(x)|` within the tangency band.
pub fn is_tangent_at(x: f64, p: &DimensionlessParams) -> bool {
    let d = psi1_jet(x, p)[1] - psi2_jet(x, p)[1];
    d.abs() <= tangency_band(x, p)
}

fn classify_at(
    x: f64,
    p: &DimensionlessParams,
    geom: Option<&ManifoldGeometry>,
    force_tangency: bool,
) -> Result<Equilibrium> {
    let j1 = psi1_jet(x, p);
    let j2 = psi2_jet(x, p);
    let det = p.delta * (j1[1] - j2[1]);
    let trace = -p.delta - j1[1];
    let discriminant = trace * trace - 4.0 * det;
    let tangency = force_tangency || is_tangent_at(x, p);
    let det_band = p.delta * tangency_band(x, p);
    let small_det = det.abs() <= det_band;
    if small_det && !tangency {
        return Err(Error::Classification(format!(
            "|D| = {} within tolerance at x = {x} but the nullclines are not tangent",
            det.abs()
        )));
    }
    let linear_type = if tangency {
        LinearType::SaddleNode
    } else if det < 0.0 {
        LinearType::Saddle
    } else if trace < 0.0 {
        if discriminant < 0.0 {
            LinearType::StableFocus
        } else {
            LinearType::StableNode
        }
    } else if discriminant < 0.0 {
        LinearType::UnstableFocus
    } else {
        LinearType::UnstableNode
    };
    let curvature = j1[2] - j2[2];
    let degenerate = tangency && curvature.abs() <= DEGENERATE_CURVATURE_TOL * 1f64.max(j1[2].abs()).max(j2[2].abs());
    Ok(Equilibrium {
        x,
        y: j1[0],
        det,
        trace,
        discriminant,
        linear_type,
        region: geom.and_then(|g| g.region_of(x)),
        tangency,
        degenerate,
    })
}

/// Classify the equilibrium at abscissa `x0`, which must be a zero of `psi`.
pub fn classify_equilibrium(x0: f64, p: &DimensionlessParams) -> Result<Equilibrium> {
    p.validate()?;
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("x0 = {x0} is outside x >= 0")));
    }
    let j1 = psi1_jet(x0, p);
    let j2 = psi2_jet(x0, p);
    let residual = (j1[0] - j2[0]).abs();
    let allowed = 1e-8 * j1[0].abs().max(1.0) + 1e-10 * (j1[1] - j2[1]).abs() * x0.max(1.0);
    if residual > allowed {
        return Err(Error::Domain(format!(
            "x0 = {x0} is not an equilibrium: |psi(x0)| = {residual}"
        )));
    }
    let geom = analyze_psi1_shape(p)?;
    classify_at(x0, p, Some(&geom), false)
}

/// All equilibria in ascending `x`, with region tags when S-shaped.
pub fn find_equilibria(p: &DimensionlessParams) -> Result<Vec<Equilibrium>> {
    let geom = analyze_psi1_shape(p)?;
    find_equilibria_with(p, &geom)
}

/// As [`find_equilibria`], reusing a previously computed geometry for the
/// same `(a, b1, b2)`.
pub fn find_equilibria_with(p: &DimensionlessParams, geom: &ManifoldGeometry) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    let poly = equilibrium_polynomial(p);
    let mut xs: Vec<(f64, bool)> = positive_roots(&poly, ROOT_WIDTH)?
        .into_iter()
        .map(|r| (u_to_x(r.root), r.multiple))
        .collect();

    // near-double roots: merge split pairs and recover vanished ones
    let crit = positive_roots(&poly.derivative(), ROOT_WIDTH)?;
    for r in crit {
        let xc = u_to_x(r.root);
        let j1 = psi1_jet(xc, p);
        let j2 = psi2_jet(xc, p);
        let val = j1[0] - j2[0];
        if val.abs() > MERGE_TOL * j1[0].abs().max(1.0) {
            continue;
        }
        let curv = (j1[2] - j2[2]).abs().max(f64::MIN_POSITIVE);
        let reach = 2.0 * (2.0 * val.abs() / curv).sqrt() + 1e-9 * xc.max(1.0);
        xs.retain(|&(x, _)| (x - xc).abs() > reach);
        xs.push((xc, true));
    }
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let geom = (geom.trichotomy == Trichotomy::SShaped).then_some(geom);
    xs.into_iter()
        .map(|(x, forced)| classify_at(x, p, geom, forced))
        .collect()
}

/// Ordered list of region symbols, one per equilibrium.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequenceTag {
    symbols: Vec<Region>,
}

/// The nineteen sequences that can occur for an S-shaped manifold.
pub const ADMISSIBLE_SEQUENCES: [&str; 19] = [
    "L0", "L1", "M", "R0", "R1", "L0M", "L1M", "MM", "MR0", "MR1", "L0MR0", "L0MR1", "L0MM", "L1MR0", "L1MR1", "L1MM",
    "MMR0", "MMR1", "MMM",
];

impl SequenceTag {
    pub fn new(symbols: Vec<Region>) -> Result<Self> {
        let tag = Self { symbols };
        if !(1..=3).contains(&tag.symbols.len()) {
            return Err(Error::Classification(format!(
                "sequence {tag} has {} symbols, expected 1 to 3",
                tag.symbols.len()
            )));
        }
        if !ADMISSIBLE_SEQUENCES.contains(&tag.to_string().as_str()) {
            return Err(Error::Classification(format!("sequence {tag} is not admissible")));
        }
        Ok(tag)
    }

    pub fn symbols(&self) -> &[Region] {
        &self.symbols
    }

    pub fn all_admissible() -> Vec<SequenceTag> {
        ADMISSIBLE_SEQUENCES
            .iter()
            .map(|s| s.parse().expect("admissible"))
            .collect()
    }
}

impl fmt::Display for SequenceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for SequenceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut chars = s.trim().chars().peekable();
        while let Some(ch) = chars.next() {
            let region = match ch {
                'M' => Region::M,
                'L' | 'R' => {
                    let idx = chars.next();
                    match (ch, idx) {
                        ('L', Some('0')) => Region::L0,
                        ('L', Some('1')) => Region::L1,
                        ('R', Some('0')) => Region::R0,
                        ('R', Some('1')) => Region::R1,
                        _ => return Err(Error::param("sequence", format!("bad symbol in `{s}`"))),
                    }
                }
                _ => return Err(Error::param("sequence", format!("bad symbol `{ch}` in `{s}`"))),
            };
            symbols.push(region);
        }
        if symbols.len() > 3 {
            return Err(Error::param(
                "sequence",
                format!("`{s}` has {} symbols; at most three equilibria exist", symbols.len()),
            ));
        }
        SequenceTag::new(symbols)
    }
}

impl Serialize for SequenceTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SequenceTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Region sequence of the equilibria; requires an S-shaped manifold.
pub fn classify_sequence(p: &DimensionlessParams) -> Result<SequenceTag> {
    let geom = analyze_psi1_shape(p)?;
    geom.fold_pair()?;
    let eqs = find_equilibria_with(p, &geom)?;
    sequence_of(&eqs)
}

/// Region sequence of an already computed, region-tagged equilibrium list.
pub fn sequence_of(eqs: &[Equilibrium]) -> Result<SequenceTag> {
    let symbols: Vec<Region> = eqs
        .iter()
        .map(|e| {
            e.region
                .ok_or_else(|| Error::Classification("equilibrium without region".into()))
        })
        .collect::<Result<_>>()?;
    if symbols.windows(2).any(|w| w[0].rank() > w[1].rank()) {
        return Err(Error::Classification("regions not ordered along x".into()));
    }
    SequenceTag::new(symbols)
}

/// Inflection abscissa of `psi2`: the unique positive root `u` of
/// `6u^5 + 5u^4 - 2c(u+1) - c`, mapped to `x = u^2 + 2u`.
pub fn psi2_inflection(p: &DimensionlessParams) -> Result<f64> {
    p.validate()?;
    let c = p.c;
    let g = |u: f64| u.powi(4) * (6.0 * u + 5.0) - 2.0 * c * (u + 1.0) - c;
    let mut hi = 1.0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence("psi2 inflection not bracketed".into()));
        }
    }
    Ok(u_to_x(bisect(g, 0.0, hi)?))
}

/// `(c, v)` such that `psi2` passes through `(w1, y1)` and `(w2, y2)`.
///
/// Feasible exactly when `q(w1)^2 / q(w2)^2 < y2 / y1 < 1` with
/// `q(w) = w - phi(w)`.
pub fn fit_psi2_through_points(w1: f64, y1: f64, w2: f64, y2: f64) -> Result<(f64, f64)> {
    for (name, val) in [("w1", w1), ("y1", y1), ("w2", w2), ("y2", y2)] {
        if !val.is_finite() {
            return Err(Error::param(name, "must be finite"));
        }
    }
    if !(0.0 <= w1 && w1 < w2) {
        return Err(Error::param("w1", format!("need 0 <= w1 < w2, got {w1}, {w2}")));
    }
    if !(y1 > 0.0 && y2 > 0.0) {
        return Err(Error::param("y1", "ordinates must be positive"));
    }
    let q1 = q_squared(w1);
    let q2 = q_squared(w2);
    let ratio = y2 / y1;
    if ratio >= 1.0 {
        return Err(Error::Infeasible(format!(
            "y2/y1 = {ratio} must be < 1 since psi2 is decreasing"
        )));
    }
    if q1 / q2 >= ratio {
        return Err(Error::Infeasible(format!(
            "q(w1)^2/q(w2)^2 = {} must be < y2/y1 = {ratio}",
            q1 / q2
        )));
    }
    let c = (y2 * q2 - y1 * q1) / (y1 - y2);
    let v = y1 * y2 * (q2 - q1) / (y1 - y2);
    Ok((c, v))
}

/// `(c, v)` such that `psi2(x_t) = y_t` and `psi2'(x_t) = slope`.
pub fn fit_psi2_tangent(x_t: f64, y_t: f64, slope: f64) -> Result<(f64, f64)> {
    if !(x_t > 0.0 && x_t.is_finite()) {
        return Err(Error::param("x_t", format!("must be positive, got {x_t}")));
    }
    if !(y_t > 0.0 && y_t.is_finite()) {
        return Err(Error::param("y_t", format!("must be positive, got {y_t}")));
    }
    if !(slope < 0.0 && slope.is_finite()) {
        return Err(Error::Infeasible(format!(
            "psi2 is decreasing; slope {slope} must be < 0"
        )));
    }
    let s = (1.0 + x_t).sqrt();
    let u = x_t / (s + 1.0);
    let q = u * u;
    let dq = u / s;
    let c = -2.0 * y_t * q * dq / slope - q * q;
    if !(c > 0.0) {
        return Err(Error::Infeasible(format!(
            "slope {slope} is too steep at x = {x_t}: would need c = {c} <= 0"
        )));
    }
    Ok((c, y_t * (c + q * q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{d1_psi1, d2_psi1, d2_psi2, psi, psi1, psi2};

    fn scan_roots(p: &DimensionlessParams, hi: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let h = hi / n as f64;
        let mut prev = psi(0.0, p).unwrap();
        for i in 1..=n {
            let x = i as f64 * h;
            let cur = psi(x, p).unwrap();
            if prev.signum() != cur.signum() {
                out.push(x - 0.5 * h);
            }
            prev = cur;
        }
        out
    }

    #[test]
    fn canard_example_is_s_shaped() {
        let p = DimensionlessParams::example_canard(55.0);
        let g = analyze_psi1_shape(&p).unwrap();
        assert_eq!(g.trichotomy, Trichotomy::SShaped);
        let f = g.folds.unwrap();
        assert!(0.0 < f.x_left_fold && f.x_left_fold < g.x_plus && g.x_plus < f.x_right_fold);
        assert!(d1_psi1(f.x_left_fold, &p).unwrap().abs() < 1e-8);
        assert!(d1_psi1(f.x_right_fold, &p).unwrap().abs() < 1e-8);
        assert!(d2_psi1(f.x_left_fold, &p).unwrap() < 0.0);
        assert!(d2_psi1(f.x_right_fold, &p).unwrap() > 0.0);
        assert!(f.y_left_fold > f.y_right_fold);
        assert!(f.x_left_landing < f.x_left_fold && f.x_right_landing > f.x_right_fold);
        // sign scan of psi1' on a grid brackets both folds
        let n = 100_000;
        let mut changes = Vec::new();
        let mut prev = d1_psi1(0.0, &p).unwrap();
        for i in 1..=n {
            let x = 30.0 * i as f64 / n as f64;
            let cur = d1_psi1(x, &p).unwrap();
            if prev.signum() != cur.signum() {
                changes.push(x);
            }
            prev = cur;
        }
        assert_eq!(changes.len(), 2);
        assert!((changes[0] - f.x_left_fold).abs() < 1e-3);
        assert!((changes[1] - f.x_right_fold).abs() < 1e-3);
    }

    #[test]
    fn inflection_is_sign_change_of_curvature() {
        let p = DimensionlessParams::example_canard(55.0);
        let g = analyze_psi1_shape(&p).unwrap();
        let h = 1e-6 * g.x_plus;
        assert!(d2_psi1(g.x_plus - h, &p).unwrap() < 0.0);
        assert!(d2_psi1(g.x_plus + h, &p).unwrap() > 0.0);
        let val = inflection_quartic(&p).to_f64_coeffs();
        let u = g.u_plus;
        let q: f64 = val.iter().rev().fold(0.0, |acc, c| acc * u + c);
        assert!(q.abs() < 1e-8 * p.b1 * (1.0 + u).powi(4));
    }

    #[test]
    fn small_b1_is_monotone() {
        let p = DimensionlessParams::new(0.1, 1e-3, 1e-3, 1.0, 0.01, 1.0).unwrap();
        let g = analyze_psi1_shape(&p).unwrap();
        assert_eq!(g.trichotomy, Trichotomy::Monotone);
        assert!(g.min_slope > 0.0);
        assert!(g.folds.is_none());
    }

    #[test]
    fn relaxation_example_single_unstable_middle_equilibrium() {
        let p = DimensionlessParams::example_canard(55.0);
        let eqs = find_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        let e = eqs[0];
        assert_eq!(e.region, Some(Region::M));
        assert!(matches!(
            e.linear_type,
            LinearType::UnstableNode | LinearType::UnstableFocus
        ));
        assert!((e.y - psi2(e.x, &p).unwrap()).abs() < 1e-9 * e.y);
        assert_eq!(classify_sequence(&p).unwrap().to_string(), "M");
    }

    #[test]
    fn coexistence_example_matches_scan() {
        let p = DimensionlessParams::example_coexistence();
        let eqs = find_equilibria(&p).unwrap();
        let scan = scan_roots(&p, p.box_size() + 10.0, 200_000);
        assert_eq!(eqs.len(), scan.len());
        for (e, s) in eqs.iter().zip(&scan) {
            assert!((e.x - s).abs() < 1e-3);
        }
    }

    #[test]
    fn tiny_v_gives_one_equilibrium_near_origin() {
        let p = DimensionlessParams::example_canard(1e-8);
        let eqs = find_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!(eqs[0].x > 0.0 && eqs[0].x < 1e-8);
        assert!(eqs[0].linear_type.is_stable());
    }

    #[test]
    fn monotone_case_is_stable() {
        let p = DimensionlessParams::new(0.1, 1e-3, 1e-3, 1.0, 0.01, 5.0).unwrap();
        let eqs = find_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!(eqs[0].linear_type.is_stable());
        assert!(eqs[0].region.is_none());
        assert!(classify_sequence(&p).is_err());
    }

    #[test]
    fn fold_fit_gives_three_crossings() {
        let base = DimensionlessParams::example_canard(55.0);
        let f = analyze_psi1_shape(&base).unwrap().folds.unwrap();
        let (c, v) = fit_psi2_through_points(f.x_left_fold, f.y_left_fold, f.x_right_fold, f.y_right_fold).unwrap();
        let p = base.with_cv(c, v);
        assert!((psi2(f.x_left_fold, &p).unwrap() - f.y_left_fold).abs() < 1e-10 * f.y_left_fold);
        assert!((psi2(f.x_right_fold, &p).unwrap() - f.y_right_fold).abs() < 1e-10 * f.y_right_fold);
        assert_eq!(classify_sequence(&p).unwrap().to_string(), "L0MR0");
        let eqs = find_equilibria(&p).unwrap();
        assert_eq!(eqs[1].linear_type, LinearType::Saddle);
    }

    #[test]
    fn fit_rejects_increasing_targets() {
        assert!(matches!(
            fit_psi2_through_points(1.0, 2.0, 3.0, 2.5),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            fit_psi2_through_points(1.0, 2.0, 1.1, 1.0),
            Err(Error::Infeasible(_))
        ));
        assert!(fit_psi2_through_points(2.0, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn tangent_fit_is_a_saddle_node() {
        let p0 = DimensionlessParams::example_canard(55.0);
        let g = analyze_psi1_shape(&p0).unwrap();
        let xt = g.x_plus;
        let (c, v) = fit_psi2_tangent(xt, psi1(xt, &p0).unwrap(), d1_psi1(xt, &p0).unwrap()).unwrap();
        let p = p0.with_cv(c, v);
        let eqs = find_equilibria(&p).unwrap();
        let t: Vec<_> = eqs.iter().filter(|e| e.tangency).collect();
        assert_eq!(t.len(), 1, "{eqs:?}");
        assert_eq!(t[0].linear_type, LinearType::SaddleNode);
        assert!((t[0].x - xt).abs() < 1e-4 * xt);
        assert!(t[0].trace > 0.0);
    }

    #[test]
    fn psi2_inflection_flips_curvature() {
        for c in [0.1, 1.0, 10.0] {
            let p = DimensionlessParams::example_canard(50.0).with_cv(c, 50.0);
            let x1 = psi2_inflection(&p).unwrap();
            assert!(x1 > 0.0);
            assert!(d2_psi2(x1 * (1.0 - 1e-6), &p).unwrap() < 0.0);
            assert!(d2_psi2(x1 * (1.0 + 1e-6), &p).unwrap() > 0.0);
        }
    }

    #[test]
    fn sequence_tag_parsing() {
        assert_eq!(SequenceTag::all_admissible().len(), 19);
        assert!("L0MR0".parse::<SequenceTag>().is_ok());
        assert!("MR0L0".parse::<SequenceTag>().is_err());
        assert!("MMMM".parse::<SequenceTag>().is_err());
        assert!("L1R1".parse::<SequenceTag>().is_err());
        let t: SequenceTag = "MMR1".parse().unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, "\"MMR1\"");
        assert_eq!(serde_json::from_str::<SequenceTag>(&json).unwrap(), t);
    }

    #[test]
    fn classify_rejects_non_equilibrium() {
        let p = DimensionlessParams::example_canard(55.0);
        assert!(classify_equilibrium(1.0, &p).is_err());
        let e = find_equilibria(&p).unwrap()[0];
        let again = classify_equilibrium(e.x, &p).unwrap();
        assert_eq!(again.linear_type, e.linear_type);
    }
}
