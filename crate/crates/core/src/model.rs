//! Parameter spaces, nullcline functions and vector fields.
//!
//! The dimensionless system is
//!
//! ```text
//! x' = y - psi1(x)
//! y' = delta * (psi2(x) - y)
//! ```
//!
//! with `phi(x) = 2(sqrt(1+x) - 1)`,
//! `psi1(x) = (b1 phi(x) + b2 x)/(a + x) + x` and
//! `psi2(x) = v / (c + (x - phi(x))^2)`.
//!
//! All derivatives are closed-form. Every formula is smooth on `x > -1`, so
//! the third derivative of `psi1` at `x = 0` is the ordinary (and right-sided)
//! value; the public functions still reject `x < 0`, which is outside the
//! biological domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the original three-variable mRNA / monomer / dimer model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiologicalParams {
    /// Maximum rate of mRNA synthesis.
    pub v_m: f64,
    /// First-order mRNA degradation rate.
    pub k_m: f64,
    /// Dimer level at half-maximum transcription.
    pub p_c: f64,
    /// Translation rate of mRNA into monomer.
    pub v_p: f64,
    /// Maximum monomer phosphorylation rate.
    pub k1: f64,
    /// Maximum dimer phosphorylation rate.
    pub k2: f64,
    /// First-order protein degradation rate.
    pub k3: f64,
    /// Michaelis constant of the kinase.
    pub j_p: f64,
    /// Dimerization rate.
    pub k_a: f64,
    /// Dimer dissociation rate.
    pub k_d: f64,
    /// Ratio of enzyme-substrate dissociation constants; the reduction needs `r = 2`.
    pub r: f64,
}

impl Default for BiologicalParams {
    /// Classic circadian parameter set (hours, arbitrary concentration units)
    /// with a fast dimerization equilibrium `K = k_a / k_d = 200`.
    fn default() -> Self {
        Self {
            v_m: 1.0,
            k_m: 0.1,
            p_c: 0.1,
            v_p: 0.5,
            k1: 10.0,
            k2: 0.03,
            k3: 0.1,
            j_p: 0.05,
            k_a: 2000.0,
            k_d: 10.0,
            r: 2.0,
        }
    }
}

impl BiologicalParams {
    /// Dimerization equilibrium constant `K = k_a / k_d`.
    pub fn equilibrium_constant(&self) -> f64 {
        self.k_a / self.k_d
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_m", self.v_m),
            ("k_m", self.k_m),
            ("p_c", self.p_c),
            ("v_p", self.v_p),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("j_p", self.j_p),
            ("k_a", self.k_a),
            ("k_d", self.k_d),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.k1 <= self.k2 {
            return Err(Error::param(
                "k1",
                format!("k1 = {} must exceed k2 = {}", self.k1, self.k2),
            ));
        }
        if self.r != 2.0 {
            return Err(Error::param(
                "r",
                format!("the reduction requires r = 2, got {}", self.r),
            ));
        }
        Ok(())
    }
}

/// The six positive parameters of the dimensionless two-dimensional system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
    pub delta: f64,
    pub v: f64,
}

impl DimensionlessParams {
    pub fn new(a: f64, b1: f64, b2: f64, c: f64, delta: f64, v: f64) -> Result<Self> {
        let p = Self { a, b1, b2, c, delta, v };
        p.validate()?;
        Ok(p)
    }

    /// Canard-explosion example: `a = 0.1, b1 = 60, b2 = 0.6, c = 1, delta = 0.01`.
    pub fn example_canard(v: f64) -> Self {
        Self {
            a: 0.1,
            b1: 60.0,
            b2: 0.6,
            c: 1.0,
            delta: 0.01,
            v,
        }
    }

    /// Coexisting-cycles example: `a = 0.01, b1 = 40, b2 = 0.1, c = 1, delta = 0.01, v = 37.9`.
    pub fn example_coexistence() -> Self {
        Self {
            a: 0.01,
            b1: 40.0,
            b2: 0.1,
            c: 1.0,
            delta: 0.01,
            v: 37.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("a", self.a),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c", self.c),
            ("delta", self.delta),
            ("v", self.v),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    pub fn with_v(self, v: f64) -> Self {
        Self { v, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    pub fn with_cv(self, c: f64, v: f64) -> Self {
        Self { c, v, ..self }
    }

    /// Side length `v / c` of the trapping box.
    pub fn box_size(&self) -> f64 {
        self.v / self.c
    }
}

/// State of the dimensionless system: scaled total protein `x`, scaled mRNA `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State2 {
    pub x: f64,
    pub y: f64,
}

impl State2 {
    /// Initial condition in the nonnegative quadrant.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Domain(format!("non-finite state ({x}, {y})")));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::Domain(format!(
                "state ({x}, {y}) leaves the nonnegative quadrant"
            )));
        }
        Ok(Self { x, y })
    }
}

/// State of the original model: mRNA `m`, monomer `p1`, dimer `p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State3 {
    pub m: f64,
    pub p1: f64,
    pub p2: f64,
}

impl State3 {
    pub fn new(m: f64, p1: f64, p2: f64) -> Result<Self> {
        let s = Self { m, p1, p2 };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        for (name, value) in [("M", self.m), ("P1", self.p1), ("P2", self.p2)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Domain(format!("{name} = {value} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Total protein `P = P1 + 2 P2`.
    pub fn total_protein(&self) -> f64 {
        self.p1 + 2.0 * self.p2
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("x = {x} is outside x >= 0")));
    }
    Ok(())
}

/// `phi` and its first three derivatives, valid for `x > -1`.
#[inline]
pub(crate) fn phi_jet(x: f64) -> [f64; 4] {
    let s = (1.0 + x).sqrt();
    let s3 = s * s * s;
    [2.0 * x / (s + 1.0), 1.0 / s, -0.5 / s3, 0.75 / (s3 * s * s)]
}

/// `psi1` and its first three derivatives, valid for `x > -1`, `x != -a`.
#[inline]
pub(crate) fn psi1_jet(x: f64, p: &DimensionlessParams) -> [f64; 4] {
    let [f0, f1, f2, f3] = phi_jet(x);
    // numerator n = b1 phi + b2 x, w = 1/(a + x)
    let n0 = p.b1 * f0 + p.b2 * x;
    let n1 = p.b1 * f1 + p.b2;
    let n2 = p.b1 * f2;
    let n3 = p.b1 * f3;
    let w0 = 1.0 / (p.a + x);
    let w1 = -w0 * w0;
    let w2 = 2.0 * w0 * w0 * w0;
    let w3 = -6.0 * w0 * w0 * w0 * w0;
    [
        n0 * w0 + x,
        n1 * w0 + n0 * w1 + 1.0,
        n2 * w0 + 2.0 * n1 * w1 + n0 * w2,
        n3 * w0 + 3.0 * n2 * w1 + 3.0 * n1 * w2 + n0 * w3,
    ]
}

/// `psi2` and its first two derivatives, valid for `x > -1`.
#[inline]
pub(crate) fn psi2_jet(x: f64, p: &DimensionlessParams) -> [f64; 3] {
    // q = x - phi(x) = u^2 with u = sqrt(1+x) - 1; e = c + q^2, psi2 = v / e
    let s = (1.0 + x).sqrt();
    let u = x / (s + 1.0);
    let q0 = u * u;
    let q1 = u / s;
    let q2 = 0.5 / (s * s * s);
    let e0 = p.c + q0 * q0;
    let e1 = 2.0 * q0 * q1;
    let e2 = 2.0 * (q1 * q1 + q0 * q2);
    let inv = 1.0 / e0;
    [
        p.v * inv,
        -p.v * e1 * inv * inv,
        p.v * (2.0 * e1 * e1 * inv * inv * inv - e2 * inv * inv),
    ]
}

/// `(x - phi(x))^2`, equal to `u^4` with `u = sqrt(1+x) - 1`.
#[inline]
pub(crate) fn q_squared(x: f64) -> f64 {
    let u = x / ((1.0 + x).sqrt() + 1.0);
    let u2 = u * u;
    u2 * u2
}

/// `phi(x) = 2 (sqrt(1+x) - 1)`.
pub fn phi(x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(phi_jet(x)[0])
}

pub fn psi1(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[0])
}

pub fn d1_psi1(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[1])
}

pub fn d2_psi1(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[2])
}

/// Third derivative of `psi1`; at `x = 0` this is the right-sided limit.
pub fn d3_psi1(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[3])
}

pub fn psi2(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi2_jet(x, p)[0])
}

pub fn d1_psi2(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi2_jet(x, p)[1])
}

pub fn d2_psi2(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi2_jet(x, p)[2])
}

/// `psi = psi1 - psi2`; its positive zeros are the equilibrium abscissas.
pub fn psi(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[0] - psi2_jet(x, p)[0])
}

pub fn d1_psi(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[1] - psi2_jet(x, p)[1])
}

pub fn d2_psi(x: f64, p: &DimensionlessParams) -> Result<f64> {
    check_x(x)?;
    Ok(psi1_jet(x, p)[2] - psi2_jet(x, p)[2])
}

/// Reduce the original parameters to the dimensionless six.
pub fn reduce_to_dimensionless(bp: &BiologicalParams) -> Result<DimensionlessParams> {
    bp.validate()?;
    let k = bp.equilibrium_constant();
    let p = DimensionlessParams {
        a: 8.0 * bp.j_p * k,
        b1: 8.0 * (bp.k1 - bp.k2) * k / bp.k3,
        b2: 8.0 * bp.k2 * k / bp.k3,
        c: 256.0 * k * k * bp.p_c * bp.p_c,
        delta: bp.k_m / bp.k3,
        v: 2048.0 * bp.v_m * bp.v_p * bp.p_c * bp.p_c * k * k * k / (bp.k3 * bp.k_m),
    };
    p.validate()?;
    Ok(p)
}

/// Map an original-model state to the dimensionless `(x, y)` through the
/// total protein `P = P1 + 2 P2`.
pub fn state3_to_state2(s: &State3, bp: &BiologicalParams) -> State2 {
    let k = bp.equilibrium_constant();
    State2 {
        x: 8.0 * k * s.total_protein(),
        y: 8.0 * k * bp.v_p * s.m / bp.k3,
    }
}

/// Lift a dimensionless state to the original model assuming the dimerization
/// reaction is at equilibrium (`P2 = K P1^2`).
pub fn state2_to_state3(s: &State2, bp: &BiologicalParams) -> State3 {
    let k = bp.equilibrium_constant();
    let total = s.x / (8.0 * k);
    let p1 = ((1.0 + 8.0 * k * total).sqrt() - 1.0) / (4.0 * k);
    State3 {
        m: bp.k3 * s.y / (8.0 * k * bp.v_p),
        p1,
        p2: (total - p1) / 2.0,
    }
}

#[inline]
pub(crate) fn field_2d_raw(x: f64, y: f64, p: &DimensionlessParams) -> [f64; 2] {
    [y - psi1_jet(x, p)[0], p.delta * (psi2_jet(x, p)[0] - y)]
}

pub fn vector_field_2d(s: &State2, p: &DimensionlessParams) -> Result<[f64; 2]> {
    check_x(s.x)?;
    Ok(field_2d_raw(s.x, s.y, p))
}

#[inline]
pub(crate) fn field_3d_raw(m: f64, p1: f64, p2: f64, bp: &BiologicalParams) -> [f64; 3] {
    let ratio = p2 / bp.p_c;
    let enzyme = bp.j_p + p1 + bp.r * p2;
    [
        bp.v_m / (1.0 + ratio * ratio) - bp.k_m * m,
        bp.v_p * m - bp.k1 * p1 / enzyme - bp.k3 * p1 - 2.0 * bp.k_a * p1 * p1 + 2.0 * bp.k_d * p2,
        bp.k_a * p1 * p1 - bp.k_d * p2 - bp.k2 * p2 / enzyme - bp.k3 * p2,
    ]
}

pub fn vector_field_3d(s: &State3, bp: &BiologicalParams) -> Result<[f64; 3]> {
    s.check()?;
    Ok(field_3d_raw(s.m, s.p1, s.p2, bp))
}

#[inline]
pub(crate) fn field_lienard_raw(u: f64, y: f64, p: &DimensionlessParams) -> [f64; 2] {
    let x = u * u + 2.0 * u;
    let g = (p.b2 * u * u + 2.0 * (p.b1 + p.b2) * u) / (x + p.a);
    let u2 = u * u;
    [
        y - ((p.delta + 1.0) * x + g),
        2.0 * p.delta * (u + 1.0) * (p.v / (u2 * u2 + p.c) - g - x),
    ]
}

/// Liénard-like form in the coordinates `(u, y)` with `x = u^2 + 2u`.
pub fn vector_field_lienard(state: [f64; 2], p: &DimensionlessParams) -> Result<[f64; 2]> {
    if state[0].is_nan() || state[0] < 0.0 {
        return Err(Error::Domain(format!("u = {} is outside u >= 0", state[0])));
    }
    Ok(field_lienard_raw(state[0], state[1], p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex() -> DimensionlessParams {
        DimensionlessParams::example_canard(55.0)
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0.0).unwrap(), 0.0);
        assert_eq!(phi(3.0).unwrap(), 2.0);
        assert_eq!(phi(8.0).unwrap(), 4.0);
        assert!(matches!(phi(-1e-3), Err(Error::Domain(_))));
    }

    #[test]
    fn psi1_basics() {
        let p = ex();
        assert_eq!(psi1(0.0, &p).unwrap(), 0.0);
        let big = 1e8;
        assert!((psi1(big, &p).unwrap() / big - 1.0).abs() < 1e-2);
        let slope0 = d1_psi1(0.0, &p).unwrap();
        assert!((slope0 - 607.0).abs() < 1e-9, "{slope0}");
        assert!(psi1(-1.0, &p).is_err());
        assert!(d3_psi1(0.0, &p).unwrap().is_finite());
    }

    #[test]
    fn psi2_basics() {
        let p = ex();
        assert_eq!(psi2(0.0, &p).unwrap(), 55.0);
        assert_eq!(d1_psi2(0.0, &p).unwrap(), 0.0);
        assert!(psi2(1e6, &p).unwrap() < 1e-6 * p.v);
        assert_eq!(psi(0.0, &p).unwrap(), -55.0);
        let bound = -p.v / (p.c * p.c.sqrt());
        for i in 1..2000 {
            let x = i as f64 * 0.05;
            assert!(d1_psi2(x, &p).unwrap() >= bound);
        }
    }

    #[test]
    fn reduction_formulas() {
        let mut bp = BiologicalParams {
            k_a: 10.0,
            k_d: 10.0,
            ..Default::default()
        };
        bp.j_p = 0.05;
        let p = reduce_to_dimensionless(&bp).unwrap();
        assert!((p.a - 0.4).abs() < 1e-15);

        let base = reduce_to_dimensionless(&BiologicalParams::default()).unwrap();
        let doubled = reduce_to_dimensionless(&BiologicalParams {
            k_m: 0.2,
            ..Default::default()
        })
        .unwrap();
        assert!((doubled.v - base.v / 2.0).abs() <= 1e-12 * base.v);
        assert!((doubled.delta - 2.0 * base.delta).abs() < 1e-15);
        assert!((doubled.v * doubled.delta - base.v * base.delta).abs() <= 1e-12 * base.v);

        let equal = BiologicalParams {
            k1: 0.03,
            k2: 0.03,
            ..Default::default()
        };
        assert!(matches!(
            reduce_to_dimensionless(&equal),
            Err(Error::InvalidParameter { .. })
        ));
        let bad_r = BiologicalParams {
            r: 3.0,
            ..Default::default()
        };
        assert!(reduce_to_dimensionless(&bad_r).is_err());
    }

    #[test]
    fn field_2d_values() {
        let p = ex();
        let f = vector_field_2d(&State2 { x: 0.0, y: p.v / p.c }, &p).unwrap();
        assert_eq!(f, [p.v / p.c, 0.0]);
        // on the x-nullcline only the slow component survives
        let x = 3.0;
        let y = psi1(x, &p).unwrap();
        let f = vector_field_2d(&State2 { x, y }, &p).unwrap();
        assert_eq!(f[0], 0.0);
        assert!((f[1] + p.delta * psi(x, &p).unwrap()).abs() < 1e-12);
        assert!(vector_field_2d(&State2 { x: -0.5, y: 1.0 }, &p).is_err());
    }

    #[test]
    fn field_3d_values() {
        let bp = BiologicalParams::default();
        let s = State3 {
            m: bp.v_m / (2.0 * bp.k_m),
            p1: 0.3,
            p2: bp.p_c,
        };
        let f = vector_field_3d(&s, &bp).unwrap();
        assert!(f[0].abs() < 1e-15);
        let f = vector_field_3d(
            &State3 {
                m: 1.0,
                p1: 0.0,
                p2: 0.0,
            },
            &bp,
        )
        .unwrap();
        assert_eq!(f[2], 0.0);
        let origin = vector_field_3d(
            &State3 {
                m: 0.0,
                p1: 0.0,
                p2: 0.0,
            },
            &bp,
        )
        .unwrap();
        assert_eq!(origin, [bp.v_m, 0.0, 0.0]);
        assert!(State3::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn lienard_at_origin() {
        let p = ex();
        let f = vector_field_lienard([0.0, 0.0], &p).unwrap();
        assert_eq!(f[1], 2.0 * p.delta * p.v / p.c);
        assert!(vector_field_lienard([-0.1, 0.0], &p).is_err());
    }

    #[test]
    fn state_maps_invert() {
        let bp = BiologicalParams::default();
        let s2 = State2 { x: 3.5, y: 12.0 };
        let back = state3_to_state2(&state2_to_state3(&s2, &bp), &bp);
        assert!((back.x - s2.x).abs() < 1e-12 && (back.y - s2.y).abs() < 1e-12);
    }
}
