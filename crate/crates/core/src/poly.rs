//! Real-root isolation for univariate polynomials.
//!
//! Coefficients are lifted exactly from `f64` into big rationals, so the
//! Sturm sequence, root counts and bracket signs are exact for the polynomial
//! that the floating-point inputs define. Only the final polishing of an
//! isolated root runs in `f64`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Polynomial with exact rational coefficients, stored lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPoly {
    coeffs: Vec<BigRational>,
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coefficient")
}

fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl ExactPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(BigRational::zero());
        }
        Self { coeffs }
    }

    /// Exact lift of `f64` coefficients (lowest degree first).
    pub fn from_f64(coeffs: &[f64]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite polynomial coefficient".into()));
        }
        Ok(Self::new(coeffs.iter().map(|&c| rat(c)).collect()))
    }

    pub fn constant(c: BigRational) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Self::new(vec![BigRational::zero(), BigRational::one()])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn to_f64_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect()
    }

    fn leading(&self) -> &BigRational {
        self.coeffs.last().expect("nonempty")
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = BigRational::zero();
        Self::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&zero) + other.coeffs.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn scale(&self, k: &BigRational) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&rat_int(-1)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::constant(BigRational::zero());
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * rat_int(i as i64))
                .collect(),
        )
    }

    /// `p(x + shift)`.
    pub fn shift(&self, shift: &BigRational) -> Self {
        let lin = Self::new(vec![shift.clone(), BigRational::one()]);
        let mut out = Self::constant(BigRational::zero());
        for c in self.coeffs.iter().rev() {
            out = out.mul(&lin).add(&Self::constant(c.clone()));
        }
        out
    }

    /// Euclidean division: `self = q * d + r` with `deg r < deg d`.
    pub fn div_rem(&self, d: &Self) -> (Self, Self) {
        assert!(!d.is_zero(), "division by the zero polynomial");
        let mut rem = self.coeffs.clone();
        let dn = d.degree();
        let lead = d.leading().clone();
        if self.degree() < dn {
            return (Self::constant(BigRational::zero()), self.clone());
        }
        let mut quot = vec![BigRational::zero(); self.degree() - dn + 1];
        for k in (0..quot.len()).rev() {
            let coef = &rem[k + dn] / &lead;
            if !coef.is_zero() {
                for (j, dc) in d.coeffs.iter().enumerate() {
                    rem[k + j] -= &coef * dc;
                }
            }
            quot[k] = coef;
        }
        rem.truncate(dn.max(1));
        (Self::new(quot), Self::new(rem))
    }

    /// Rescale so that the leading coefficient has absolute value one.
    /// Signs of values are preserved.
    fn normalized(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let inv = self.leading().abs().recip();
        self.scale(&inv)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn sign_at(&self, x: &BigRational) -> Ordering {
        let v = self.eval(x);
        v.cmp(&BigRational::zero())
    }

    /// Floating-point evaluation with a running bound on the rounding error.
    fn eval_f64(&self, coeffs: &[f64], x: f64) -> (f64, f64) {
        let _ = self;
        let mut acc = 0.0;
        let mut mag = 0.0;
        for &c in coeffs.iter().rev() {
            acc = acc * x + c;
            mag = mag * x.abs() + c.abs();
        }
        (acc, mag * 8.0 * f64::EPSILON * coeffs.len() as f64)
    }

    /// Cauchy bound: every real root satisfies `|x| < bound`.
    pub fn cauchy_bound(&self) -> BigRational {
        let lead = self.leading().abs();
        let max_ratio = self.coeffs[..self.coeffs.len() - 1]
            .iter()
            .map(|c| c.abs() / &lead)
            .max()
            .unwrap_or_else(BigRational::zero);
        max_ratio + BigRational::one()
    }
}

/// Sturm chain `p0 = p, p1 = p', p_{k+1} = -rem(p_{k-1}, p_k)`.
#[derive(Debug, Clone)]
pub struct SturmSequence {
    chain: Vec<ExactPoly>,
}

impl SturmSequence {
    pub fn new(p: &ExactPoly) -> Self {
        let mut chain = vec![p.normalized()];
        if p.degree() > 0 {
            chain.push(p.derivative().normalized());
            loop {
                let n = chain.len();
                let (_, r) = chain[n - 2].div_rem(&chain[n - 1]);
                if r.is_zero() {
                    break;
                }
                chain.push(r.scale(&rat_int(-1)).normalized());
            }
        }
        Self { chain }
    }

    /// Greatest common divisor of `p` and `p'` (last chain element, up to scale).
    pub fn gcd(&self) -> &ExactPoly {
        self.chain.last().expect("nonempty chain")
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn sign_changes(&self, x: &BigRational) -> usize {
        let mut changes = 0;
        let mut last = Ordering::Equal;
        for p in &self.chain {
            let s = p.sign_at(x);
            if s == Ordering::Equal {
                continue;
            }
            if last != Ordering::Equal && s != last {
                changes += 1;
            }
            last = s;
        }
        changes
    }

    /// Number of distinct real roots in the half-open interval `(lo, hi]`.
    pub fn count_roots(&self, lo: &BigRational, hi: &BigRational) -> usize {
        self.sign_changes(lo).saturating_sub(self.sign_changes(hi))
    }
}

/// An isolated real root: the exact bracket and the polished value.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolatedRoot {
    pub lo: f64,
    pub hi: f64,
    pub root: f64,
    /// True when the root is also a root of `gcd(p, p')`.
    pub multiple: bool,
}

/// Isolate and polish all distinct real roots of `p` in the open interval
/// `(lo, hi)`.
///
/// Brackets are refined to width `width_tol * max(1, |x|)` (exact signs are
/// used wherever `f64` evaluation cannot resolve them), then a single Newton
/// step is applied when it stays inside the bracket.
pub fn isolate_roots_in(p: &ExactPoly, lo: f64, hi: f64, width_tol: f64) -> Result<Vec<IsolatedRoot>> {
    if p.is_zero() {
        return Err(Error::Degenerate("zero polynomial has no isolated roots".into()));
    }
    if p.degree() == 0 {
        return Ok(Vec::new());
    }
    let sturm = SturmSequence::new(p);
    let gcd = sturm.gcd().clone();
    let square_free = if gcd.degree() > 0 { p.div_rem(&gcd).0 } else { p.clone() };

    let lo_r = rat(lo);
    let mut roots_exact: Vec<(BigRational, BigRational)> = Vec::new();
    let mut exact_hits: Vec<BigRational> = Vec::new();
    if square_free.sign_at(&lo_r) == Ordering::Equal {
        // `lo` is excluded from the open interval; nudge it away from the root
        return isolate_roots_in(p, lo + f64::EPSILON * lo.abs().max(1.0), hi, width_tol);
    }
    let mut hi_r = rat(hi);
    let bound = p.cauchy_bound();
    if hi_r > bound {
        hi_r = bound;
    }
    if hi_r <= lo_r {
        return Ok(Vec::new());
    }
    if square_free.sign_at(&hi_r) == Ordering::Equal {
        exact_hits.push(hi_r.clone());
    }

    let two = rat_int(2);
    let mut stack = vec![(lo_r, hi_r)];
    while let Some((a, b)) = stack.pop() {
        let n = sturm.count_roots(&a, &b);
        let b_is_root = exact_hits.contains(&b);
        let interior = n - usize::from(b_is_root);
        if interior == 0 {
            continue;
        }
        if interior == 1 && square_free.sign_at(&a) != square_free.sign_at(&b) && !b_is_root {
            roots_exact.push((a, b));
            continue;
        }
        let mut mid = (&a + &b) / &two;
        let mut tweak = 1;
        while square_free.sign_at(&mid) == Ordering::Equal {
            // split beside an exact root; the root itself stays in (a, mid]
            let frac = rat_int(1) / rat_int(2) + rat_int(1) / rat_int(1 << (10 + tweak));
            mid = &a + (&b - &a) * frac;
            tweak += 1;
            if tweak > 20 {
                exact_hits.push((&a + &b) / &two);
                break;
            }
        }
        stack.push((mid.clone(), b));
        stack.push((a, mid));
    }

    let f_coeffs = square_free.to_f64_coeffs();
    let df_coeffs = square_free.derivative().to_f64_coeffs();
    let mut out = Vec::new();
    for hit in exact_hits {
        let x = hit.to_f64().unwrap_or(f64::NAN);
        if x > lo && x < hi {
            out.push(IsolatedRoot {
                lo: x,
                hi: x,
                root: x,
                multiple: gcd.degree() > 0 && gcd.sign_at(&hit) == Ordering::Equal,
            });
        }
    }
    for (a, b) in roots_exact {
        let s_lo = square_free.sign_at(&a);
        let (lo_f, hi_f) = refine(&square_free, &f_coeffs, a, b, s_lo, width_tol);
        let mid = 0.5 * (lo_f + hi_f);
        let (fv, _) = square_free.eval_f64(&f_coeffs, mid);
        let (dv, _) = square_free.eval_f64(&df_coeffs, mid);
        let mut root = mid;
        if dv != 0.0 && dv.is_finite() {
            let newton = mid - fv / dv;
            if newton >= lo_f && newton <= hi_f {
                root = newton;
            }
        }
        let multiple = gcd.degree() > 0 && {
            let g = gcd.to_f64_coeffs();
            let (gv, gerr) = gcd.eval_f64(&g, root);
            gv.abs() <= gerr.max(1e-12)
        };
        out.push(IsolatedRoot {
            lo: lo_f,
            hi: hi_f,
            root,
            multiple,
        });
    }
    out.sort_by(|a, b| a.root.total_cmp(&b.root));
    Ok(out)
}

fn refine(
    p: &ExactPoly,
    f_coeffs: &[f64],
    mut a: BigRational,
    mut b: BigRational,
    s_lo: Ordering,
    width_tol: f64,
) -> (f64, f64) {
    let two = rat_int(2);
    // Exact bisection to a coarse width, so that the bracket endpoints are
    // representable and far from any other root.
    loop {
        let af = a.to_f64().unwrap_or(f64::NAN);
        let bf = b.to_f64().unwrap_or(f64::NAN);
        if bf - af <= 1e-6 * af.abs().max(1.0) {
            break;
        }
        let mid = (&a + &b) / &two;
        if p.sign_at(&mid) == s_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut lo = a.to_f64().unwrap_or(f64::NAN);
    let mut hi = b.to_f64().unwrap_or(f64::NAN);
    for _ in 0..200 {
        if hi - lo <= width_tol * lo.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v, err) = p.eval_f64(f_coeffs, mid);
        let s = if v.abs() > err {
            if v > 0.0 {
                Ordering::Greater
            } else {
                Ordering::Less
            }
        } else {
            p.sign_at(&rat(mid))
        };
        match s {
            Ordering::Equal => return (mid, mid),
            s if s == s_lo => lo = mid,
            _ => hi = mid,
        }
    }
    (lo, hi)
}

/// All distinct positive real roots of `p`.
pub fn positive_roots(p: &ExactPoly, width_tol: f64) -> Result<Vec<IsolatedRoot>> {
    if p.is_zero() {
        return Err(Error::Degenerate("zero polynomial".into()));
    }
    let hi = p.cauchy_bound().to_f64().unwrap_or(f64::MAX) * 2.0;
    // strip a root at the origin so that 0 can serve as the left endpoint
    let mut q = p.clone();
    while q.degree() > 0 && q.coeffs()[0].is_zero() {
        q = ExactPoly::new(q.coeffs()[1..].to_vec());
    }
    isolate_roots_in(&q, 0.0, hi, width_tol)
}

/// Bisection for a continuous `f` with `f(lo)` and `f(hi)` of opposite sign.
/// Runs until the bracket cannot shrink any further in `f64`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoConvergence(format!(
            "bracket [{lo}, {hi}] does not straddle a root (f = {f_lo}, {f_hi})"
        )));
    }
    for _ in 0..2100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[f64]) -> ExactPoly {
        ExactPoly::from_f64(c).unwrap()
    }

    #[test]
    fn division_identity() {
        let p = poly(&[1.0, -3.0, 0.0, 2.0, 5.0]);
        let d = poly(&[-1.0, 1.0, 1.0]);
        let (q, r) = p.div_rem(&d);
        assert_eq!(q.mul(&d).add(&r), p);
        assert!(r.degree() < d.degree());
    }

    #[test]
    fn shift_matches_evaluation() {
        let p = poly(&[2.0, -1.0, 0.5, 3.0]);
        let s = p.shift(&rat(1.0));
        for x in [-2.0, 0.0, 0.25, 3.0] {
            assert_eq!(s.eval(&rat(x)), p.eval(&rat(x + 1.0)));
        }
    }

    #[test]
    fn sturm_counts_known_roots() {
        // (x-1)(x-2)(x-3)(x+4)
        let p = poly(&[1.0, -1.0])
            .mul(&poly(&[-2.0, 1.0]))
            .mul(&poly(&[-3.0, 1.0]))
            .mul(&poly(&[4.0, 1.0]));
        let s = SturmSequence::new(&p);
        assert_eq!(s.count_roots(&rat(-10.0), &rat(10.0)), 4);
        assert_eq!(s.count_roots(&rat(0.0), &rat(2.5)), 2);
        let roots = positive_roots(&p, 1e-13).unwrap();
        let xs: Vec<f64> = roots.iter().map(|r| r.root).collect();
        assert_eq!(xs.len(), 3);
        for (x, want) in xs.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - want).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn close_roots_are_separated() {
        let eps = 1e-9;
        let p = poly(&[-1.0, 1.0]).mul(&poly(&[-(1.0 + eps), 1.0]));
        let roots = positive_roots(&p, 1e-14).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots[0].root < roots[1].root);
    }

    #[test]
    fn double_root_reported_once() {
        let p = poly(&[-2.0, 1.0]).mul(&poly(&[-2.0, 1.0])).mul(&poly(&[1.0, 1.0]));
        let roots = positive_roots(&p, 1e-13).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].root - 2.0).abs() < 1e-10);
        assert!(roots[0].multiple);
    }

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn no_positive_roots() {
        let p = poly(&[1.0, 0.0, 1.0]);
        assert!(positive_roots(&p, 1e-12).unwrap().is_empty());
    }
}
