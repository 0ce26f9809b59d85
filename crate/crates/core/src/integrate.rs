//! Adaptive three-stage Radau IIA integrator (order 5, L-stable).
//!
//! Stages are solved by simplified Newton iteration on the full `3n` system
//! with one LU factorisation per step. The local error uses the embedded
//! order-3 estimate filtered through `(gamma0/h - J)^-1`, and dense output is
//! the collocation polynomial through the step start and the three stages.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    field_2d_raw, field_3d_raw, field_lienard_raw, psi1_jet, psi2_jet, BiologicalParams, DimensionlessParams,
};

/// Right-hand side of an autonomous or non-autonomous ODE `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Jacobian `df/dy`; defaults to forward differences.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.dim();
        let mut f0 = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        self.rhs(t, y, &mut f0);
        let mut yp = y.to_vec();
        for j in 0..n {
            let h = f64::EPSILON.sqrt() * y[j].abs().max(1e-5);
            yp[j] = y[j] + h;
            self.rhs(t, &yp, &mut f1);
            for i in 0..n {
                jac[(i, j)] = (f1[i] - f0[i]) / h;
            }
            yp[j] = y[j];
        }
    }
}

/// The dimensionless planar field in `(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct Planar(pub DimensionlessParams);

impl OdeSystem for Planar {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let f = field_2d_raw(y[0], y[1], &self.0);
        dy[0] = f[0];
        dy[1] = f[1];
    }

    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        let p = &self.0;
        jac[(0, 0)] = -psi1_jet(y[0], p)[1];
        jac[(0, 1)] = 1.0;
        jac[(1, 0)] = p.delta * psi2_jet(y[0], p)[1];
        jac[(1, 1)] = -p.delta;
    }
}

/// The Liénard-type planar field in `(u, y)`.
#[derive(Debug, Clone, Copy)]
pub struct Lienard(pub DimensionlessParams);

impl OdeSystem for Lienard {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let f = field_lienard_raw(y[0], y[1], &self.0);
        dy[0] = f[0];
        dy[1] = f[1];
    }
}

/// The original mRNA / monomer / dimer system.
#[derive(Debug, Clone, Copy)]
pub struct ThreeSpecies(pub BiologicalParams);

impl OdeSystem for ThreeSpecies {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let f = field_3d_raw(y[0], y[1], y[2], &self.0);
        dy.copy_from_slice(&f);
    }
}

/// Time reversal of an autonomous system.
#[derive(Debug, Clone, Copy)]
pub struct Reversed<S>(pub S);

impl<S: OdeSystem> OdeSystem for Reversed<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.0.rhs(t, y, dy);
        for d in dy.iter_mut() {
            *d = -*d;
        }
    }

    fn jacobian(&self, t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        self.0.jacobian(t, y, jac);
        jac.neg_mut();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(Error::param("rtol", "must be positive"));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(Error::param("atol", "must be positive"));
        }
        if !(self.h_max > 0.0) {
            return Err(Error::param("h_max", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
}

const SQ6: f64 = 2.449_489_742_783_178;
const C1: f64 = (4.0 - SQ6) / 10.0;
const C2: f64 = (4.0 + SQ6) / 10.0;
const NODES: [f64; 4] = [0.0, C1, C2, 1.0];
const A: [[f64; 3]; 3] = [
    [
        (88.0 - 7.0 * SQ6) / 360.0,
        (296.0 - 169.0 * SQ6) / 1800.0,
        (-2.0 + 3.0 * SQ6) / 225.0,
    ],
    [
        (296.0 + 169.0 * SQ6) / 1800.0,
        (88.0 + 7.0 * SQ6) / 360.0,
        (-2.0 - 3.0 * SQ6) / 225.0,
    ],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];
/// Real eigenvalue of `A^-1`.
const GAMMA0: f64 = 3.637_834_252_744_496;
const ERR_WEIGHTS: [f64; 3] = [-(13.0 + 7.0 * SQ6) / 3.0, (-13.0 + 7.0 * SQ6) / 3.0, -1.0 / 3.0];
const MAX_NEWTON: usize = 7;

/// Cubic collocation polynomial over one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    /// States at `t0 + NODES[k] h`, `k = 0..4`, concatenated.
    nodes: Vec<f64>,
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let s = (t - self.t0) / self.h;
        let mut w = [0.0; 4];
        for (k, wk) in w.iter_mut().enumerate() {
            let mut l = 1.0;
            for (j, &cj) in NODES.iter().enumerate() {
                if j != k {
                    l *= (s - cj) / (NODES[k] - cj);
                }
            }
            *wk = l;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|k| w[k] * self.nodes[k * n + i]).sum();
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len() / 4];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Completed,
    StepUnderflow,
    MaxStepsExceeded,
    NonFinite,
}

/// Single-step driver; callers inspect [`Radau::last_segment`] between steps.
pub struct Radau<S: OdeSystem> {
    sys: S,
    tol: Tolerances,
    n: usize,
    t: f64,
    y: Vec<f64>,
    f0: Vec<f64>,
    h: f64,
    jac: DMatrix<f64>,
    faccon: f64,
    last: Option<DenseSegment>,
    stats: Stats,
    status: Status,
}

fn scaled_rms(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(a, s)| (a / s) * (a / s)).sum();
    (s / v.len() as f64).sqrt()
}

impl<S: OdeSystem> Radau<S> {
    pub fn new(sys: S, t0: f64, y0: &[f64], tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::param("y0", format!("expected {n} components, got {}", y0.len())));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("y0", "must be finite"));
        }
        let mut f0 = vec![0.0; n];
        sys.rhs(t0, y0, &mut f0);
        let mut r = Self {
            sys,
            tol,
            n,
            t: t0,
            y: y0.to_vec(),
            f0,
            h: 0.0,
            jac: DMatrix::zeros(n, n),
            faccon: 1.0,
            last: None,
            stats: Stats {
                rhs_evals: 1,
                ..Stats::default()
            },
            status: Status::Running,
        };
        r.h = tol.h_init.unwrap_or_else(|| r.initial_step());
        Ok(r)
    }

    fn initial_step(&self) -> f64 {
        let scale: Vec<f64> = self.y.iter().map(|v| self.tol.atol + self.tol.rtol * v.abs()).collect();
        let d0 = scaled_rms(&self.y, &scale);
        let d1 = scaled_rms(&self.f0, &scale);
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(self.tol.h_max).max(1e-12)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn last_segment(&self) -> Option<&DenseSegment> {
        self.last.as_ref()
    }

    fn scale(&self) -> Vec<f64> {
        self.y.iter().map(|v| self.tol.atol + self.tol.rtol * v.abs()).collect()
    }

    /// Take one accepted step, not going past `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Status {
        if self.status != Status::Running {
            return self.status;
        }
        let n = self.n;
        let uround = f64::EPSILON;
        let fnewt = (10.0 * uround / self.tol.rtol).max(0.03f64.min(self.tol.rtol.sqrt()));
        let scale = self.scale();
        let mut z = vec![0.0; 3 * n];
        let mut fz = vec![0.0; 3 * n];
        let mut tmp = vec![0.0; n];
        let mut rejected_once = false;

        self.sys.jacobian(self.t, &self.y, &mut self.jac);
        loop {
            if self.stats.accepted + self.stats.rejected >= self.tol.max_steps {
                self.status = Status::MaxStepsExceeded;
                return self.status;
            }
            let remaining = t_limit - self.t;
            if remaining <= 0.0 {
                self.status = Status::Completed;
                return self.status;
            }
            let mut h = self.h.min(self.tol.h_max).min(remaining);
            if remaining - h < 1e-10 * h {
                h = remaining;
            }
            if h < 1e-14 * self.t.abs().max(1.0) {
                self.status = Status::StepUnderflow;
                return self.status;
            }

            // Newton matrix I - h (A kron J)
            let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
            for bi in 0..3 {
                for bj in 0..3 {
                    let k = h * A[bi][bj];
                    for i in 0..n {
                        for j in 0..n {
                            m[(bi * n + i, bj * n + j)] -= k * self.jac[(i, j)];
                        }
                    }
                }
            }
            let lu = m.lu();

            // starting guess from the previous collocation polynomial
            match &self.last {
                Some(seg) if !rejected_once => {
                    for s in 0..3 {
                        seg.eval_into(self.t + NODES[s + 1] * h, &mut tmp);
                        for i in 0..n {
                            z[s * n + i] = tmp[i] - self.y[i];
                        }
                    }
                }
                _ => z.iter_mut().for_each(|v| *v = 0.0),
            }

            self.faccon = self.faccon.max(uround).powf(0.8);
            let mut converged = false;
            let mut shrink = 0.5;
            let mut dynold = 0.0;
            let mut thqold = 0.0;
            for it in 0..MAX_NEWTON {
                for s in 0..3 {
                    for i in 0..n {
                        tmp[i] = self.y[i] + z[s * n + i];
                    }
                    self.sys
                        .rhs(self.t + NODES[s + 1] * h, &tmp, &mut fz[s * n..(s + 1) * n]);
                }
                self.stats.rhs_evals += 3;
                if fz.iter().any(|v| !v.is_finite()) {
                    break;
                }
                let mut g = DVector::<f64>::zeros(3 * n);
                for bi in 0..3 {
                    for i in 0..n {
                        let mut acc = z[bi * n + i];
                        for bj in 0..3 {
                            acc -= h * A[bi][bj] * fz[bj * n + i];
                        }
                        g[bi * n + i] = -acc;
                    }
                }
                let Some(dz) = lu.solve(&g) else { break };
                let mut big_scale = Vec::with_capacity(3 * n);
                for _ in 0..3 {
                    big_scale.extend_from_slice(&scale);
                }
                let dyno = scaled_rms(dz.as_slice(), &big_scale);
                if it > 0 {
                    let thq = dyno / dynold;
                    let theta = if it == 1 { thq } else { (thq * thqold).sqrt() };
                    thqold = thq;
                    if theta < 0.99 {
                        self.faccon = theta / (1.0 - theta);
                        let dyth = self.faccon * dyno * theta.powi((MAX_NEWTON - 1 - it) as i32) / fnewt;
                        if dyth >= 1.0 {
                            let qnewt = dyth.clamp(1e-4, 20.0);
                            shrink = 0.8 * qnewt.powf(-1.0 / (4.0 + (MAX_NEWTON - 1 - it) as f64));
                            break;
                        }
                    } else {
                        break;
                    }
                }
                dynold = dyno.max(uround);
                for (zi, d) in z.iter_mut().zip(dz.iter()) {
                    *zi += d;
                }
                if self.faccon * dyno <= fnewt {
                    converged = true;
                    break;
                }
            }
            if !converged {
                self.stats.newton_failures += 1;
                self.h = h * shrink.clamp(0.1, 0.9);
                rejected_once = true;
                self.sys.jacobian(self.t, &self.y, &mut self.jac);
                continue;
            }

            // embedded error estimate
            let mut e_mat = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    e_mat[(i, j)] = -self.jac[(i, j)];
                }
                e_mat[(i, i)] += GAMMA0 / h;
            }
            let e_lu = e_mat.lu();
            let lincomb =
                |z: &[f64], i: usize| -> f64 { (0..3).map(|s| ERR_WEIGHTS[s] * z[s * n + i]).sum::<f64>() / h };
            let rhs_vec = DVector::from_iterator(n, (0..n).map(|i| self.f0[i] + lincomb(&z, i)));
            let mut err_vec = e_lu
                .solve(&rhs_vec)
                .unwrap_or_else(|| DVector::from_element(n, f64::INFINITY));
            let mut err = scaled_rms(err_vec.as_slice(), &scale).max(1e-10);
            if err >= 1.0 && (self.stats.accepted == 0 || rejected_once) {
                let y_alt: Vec<f64> = (0..n).map(|i| self.y[i] + err_vec[i]).collect();
                let mut f_alt = vec![0.0; n];
                self.sys.rhs(self.t, &y_alt, &mut f_alt);
                self.stats.rhs_evals += 1;
                let rhs_vec = DVector::from_iterator(n, (0..n).map(|i| f_alt[i] + lincomb(&z, i)));
                err_vec = e_lu
                    .solve(&rhs_vec)
                    .unwrap_or_else(|| DVector::from_element(n, f64::INFINITY));
                err = scaled_rms(err_vec.as_slice(), &scale).max(1e-10);
            }
            if !err.is_finite() {
                self.status = Status::NonFinite;
                return self.status;
            }

            let fac = (0.9 * err.powf(-0.25)).clamp(0.2, 5.0);
            if err < 1.0 {
                let y_new: Vec<f64> = (0..n).map(|i| self.y[i] + z[2 * n + i]).collect();
                if y_new.iter().any(|v| !v.is_finite()) {
                    self.status = Status::NonFinite;
                    return self.status;
                }
                let mut nodes = Vec::with_capacity(4 * n);
                nodes.extend_from_slice(&self.y);
                for s in 0..3 {
                    nodes.extend((0..n).map(|i| self.y[i] + z[s * n + i]));
                }
                self.last = Some(DenseSegment { t0: self.t, h, nodes });
                self.t = if h == remaining { t_limit } else { self.t + h };
                self.y = y_new;
                self.f0.copy_from_slice(&fz[2 * n..3 * n]);
                self.stats.accepted += 1;
                self.h = h * if rejected_once { fac.min(1.0) } else { fac };
                if self.t >= t_limit {
                    self.status = Status::Completed;
                }
                return Status::Running;
            }
            self.stats.rejected += 1;
            rejected_once = true;
            self.h = h * fac.min(0.9);
        }
    }

    /// Reset the terminal state so stepping may continue past a previous
    /// `t_limit`.
    pub fn resume(&mut self) {
        if self.status == Status::Completed {
            self.status = Status::Running;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
    pub stats: Stats,
    pub status: Status,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.status == Status::Completed
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has its initial state")
    }

    /// Dense evaluation at any `t` inside the integrated span.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        if self.segments.is_empty() {
            return (t == self.times[0]).then(|| self.states[0].clone());
        }
        let forward = self.segments[0].h > 0.0;
        let idx = self
            .segments
            .partition_point(|s| if forward { s.t1() < t } else { s.t1() > t });
        let seg = self.segments.get(idx)?;
        let inside = if forward {
            t >= seg.t0 && t <= seg.t1()
        } else {
            t <= seg.t0 && t >= seg.t1()
        };
        inside.then(|| seg.eval(t))
    }
}

/// Integrate from `(t0, y0)` to `t_end` keeping every accepted step.
/// Failures are reported through [`Trajectory::status`] with the partial
/// trajectory attached.
pub fn integrate<S: OdeSystem>(sys: S, t0: f64, y0: &[f64], t_end: f64, tol: Tolerances) -> Result<Trajectory> {
    if !(t_end > t0) {
        return Err(Error::param("t_end", format!("must exceed t0 = {t0}")));
    }
    let mut r = Radau::new(sys, t0, y0, tol)?;
    let mut times = vec![t0];
    let mut states = vec![y0.to_vec()];
    let mut segments = Vec::new();
    loop {
        let st = r.step(t_end);
        if st == Status::Running || (st == Status::Completed && r.t() > *times.last().unwrap()) {
            if let Some(seg) = r.last_segment() {
                if r.t() > *times.last().unwrap() {
                    segments.push(seg.clone());
                    times.push(r.t());
                    states.push(r.y().to_vec());
                }
            }
        }
        if st != Status::Running {
            break;
        }
        if r.status() == Status::Completed {
            break;
        }
    }
    Ok(Trajectory {
        times,
        states,
        segments,
        stats: r.stats(),
        status: r.status(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    Increasing,
    Decreasing,
    Either,
}

impl CrossingDirection {
    fn admits(self, g0: f64, g1: f64) -> bool {
        match self {
            CrossingDirection::Increasing => g0 < 0.0 && g1 >= 0.0,
            CrossingDirection::Decreasing => g0 > 0.0 && g1 <= 0.0,
            CrossingDirection::Either => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
        }
    }
}

/// Locate a zero of `g` along a dense segment between `t0` and `t1`
/// (where `g` changes sign) to `|g| <= 1e-10` or the resolution of `t`.
pub fn locate_event<G: Fn(&[f64]) -> f64>(seg: &DenseSegment, g: G, mut t0: f64, mut t1: f64) -> (f64, Vec<f64>) {
    let mut y = seg.eval(t0);
    let mut g0 = g(&y);
    for _ in 0..200 {
        let y1 = seg.eval(t1);
        let g1 = g(&y1);
        if g1.abs() <= 1e-10 {
            return (t1, y1);
        }
        let tm = 0.5 * (t0 + t1);
        if tm == t0 || tm == t1 {
            return (t1, y1);
        }
        y = seg.eval(tm);
        let gm = g(&y);
        if gm.abs() <= 1e-10 {
            return (tm, y);
        }
        if gm.signum() == g0.signum() {
            t0 = tm;
            g0 = gm;
        } else {
            t1 = tm;
        }
    }
    (t1, seg.eval(t1))
}

/// Scan a segment for a sign change of `g` in the given direction, using a
/// few interior samples to catch grazing double crossings.
pub fn find_event<G: Fn(&[f64]) -> f64>(
    seg: &DenseSegment,
    g: G,
    direction: CrossingDirection,
) -> Option<(f64, Vec<f64>)> {
    const SUB: usize = 4;
    let mut t_prev = seg.t0;
    let mut g_prev = g(&seg.eval(t_prev));
    for k in 1..=SUB {
        let t = seg.t0 + seg.h * k as f64 / SUB as f64;
        let gv = g(&seg.eval(t));
        if direction.admits(g_prev, gv) {
            return Some(locate_event(seg, &g, t_prev, t));
        }
        t_prev = t;
        g_prev = gv;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(f64);
    impl OdeSystem for Linear {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = self.0 * y[0];
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    /// Van der Pol with stiffness parameter `mu`.
    struct VanDerPol(f64);
    impl OdeSystem for VanDerPol {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = self.0 * ((1.0 - y[0] * y[0]) * y[1]) - y[0];
        }
    }

    #[test]
    fn exponential_decay_to_tolerance() {
        let tr = integrate(Linear(-1.0), 0.0, &[1.0], 10.0, Tolerances::new(1e-10, 1e-14)).unwrap();
        assert!(tr.is_complete());
        let exact = (-10.0f64).exp();
        assert!((tr.last_state()[0] - exact).abs() < 1e-9 * exact.max(1e-3));
    }

    #[test]
    fn harmonic_oscillator_and_dense_output() {
        let tr = integrate(Oscillator, 0.0, &[1.0, 0.0], 20.0, Tolerances::new(1e-10, 1e-12)).unwrap();
        let y = tr.last_state();
        assert!((y[0] - 20f64.cos()).abs() < 1e-8);
        assert!((y[1] + 20f64.sin()).abs() < 1e-8);
        for t in [0.3, 5.5, 13.1, 19.99] {
            let d = tr.eval(t).unwrap();
            assert!((d[0] - t.cos()).abs() < 1e-7, "t = {t}");
        }
        assert!(tr.eval(25.0).is_none());
    }

    #[test]
    fn stiff_decay_takes_few_steps() {
        let tr = integrate(Linear(-1e6), 0.0, &[1.0], 1.0, Tolerances::new(1e-8, 1e-12)).unwrap();
        assert!(tr.is_complete());
        assert!(tr.last_state()[0].abs() < 1e-10);
        assert!(tr.stats.accepted < 500, "{:?}", tr.stats);
    }

    #[test]
    fn stiff_van_der_pol_completes() {
        let tr = integrate(VanDerPol(1000.0), 0.0, &[2.0, 0.0], 3000.0, Tolerances::new(1e-7, 1e-9)).unwrap();
        assert!(tr.is_complete(), "{:?}", tr.status);
        assert!(tr.stats.accepted < 20_000, "{:?}", tr.stats);
        let y = tr.last_state();
        assert!(y[0].abs() < 2.1);
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let fwd = integrate(Oscillator, 0.0, &[1.0, 0.5], 3.0, Tolerances::new(1e-11, 1e-13)).unwrap();
        let back = integrate(
            Reversed(Oscillator),
            0.0,
            fwd.last_state(),
            3.0,
            Tolerances::new(1e-11, 1e-13),
        )
        .unwrap();
        let y = back.last_state();
        assert!((y[0] - 1.0).abs() < 1e-8 && (y[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn event_location_on_oscillator() {
        let mut r = Radau::new(Oscillator, 0.0, &[1.0, 0.0], Tolerances::new(1e-10, 1e-12)).unwrap();
        let mut hits = Vec::new();
        while r.step(10.0) == Status::Running {
            if let Some((t, y)) = find_event(r.last_segment().unwrap(), |y| y[0], CrossingDirection::Decreasing) {
                assert!(y[0].abs() <= 1e-10);
                hits.push(t);
            }
        }
        let want = [std::f64::consts::FRAC_PI_2, 2.5 * std::f64::consts::PI];
        assert_eq!(hits.len(), 2, "{hits:?}");
        for (h, w) in hits.iter().zip(want) {
            assert!((h - w).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(integrate(Linear(1.0), 0.0, &[1.0, 2.0], 1.0, Tolerances::default()).is_err());
        assert!(integrate(Linear(1.0), 0.0, &[1.0], -1.0, Tolerances::default()).is_err());
        assert!(integrate(Linear(1.0), 0.0, &[1.0], 1.0, Tolerances::new(0.0, 1e-9)).is_err());
    }

    #[test]
    fn max_steps_reports_partial_trajectory() {
        let tol = Tolerances {
            max_steps: 5,
            ..Tolerances::new(1e-10, 1e-12)
        };
        let tr = integrate(Oscillator, 0.0, &[1.0, 0.0], 100.0, tol).unwrap();
        assert_eq!(tr.status, Status::MaxStepsExceeded);
        assert!(tr.times.len() > 1 && *tr.times.last().unwrap() < 100.0);
    }
}
