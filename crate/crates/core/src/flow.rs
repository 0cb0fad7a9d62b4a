//! The pre-action `T(t, x) = x + tφ(x)`, near-associativity, the flow of
//! `u' = φ(u)`, the time measure `τ_x = ∫_1^x du/φ(u)` and the embedding
//! cocycle `f_x(t) = Φ(t, x) - x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::RealFunc;
use crate::quadrature::adaptive_simpson;

/// Give up once the step falls below this fraction of `max(1, t)`.
const MIN_STEP: f64 = 1e-13;
const MAX_STEPS: usize = 10_000_000;

pub fn preaction(phi: &RealFunc, t: f64, x: f64) -> Result<f64> {
    let y = x + t * phi.eval(x)?;
    let d = phi.domain();
    if !d.contains(y) {
        return Err(Error::Domain { label: phi.label().to_string(), x: y, lo: d.lo, hi: d.hi });
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearAssocDecomposition {
    pub x: f64,
    pub s: f64,
    pub t: f64,
    pub y_s: f64,
    pub gamma: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// The point used for the concatenation check.
    pub z: f64,
    /// `|γ_x(z) - γ_x(y_s) γ_{y_s}(z)|` with `γ_a(b) = φ(a)/φ(b)`.
    pub concat_residual: f64,
}

/// `T(t + s, x) = T(γt, T(s, x))` with `γ = φ(x)/φ(T(s, x))`.
pub fn near_assoc(phi: &RealFunc, x: f64, s: f64, t: f64, z: Option<f64>) -> Result<NearAssocDecomposition> {
    let px = phi.eval(x)?;
    let y_s = preaction(phi, s, x)?;
    let py = phi.eval(y_s)?;
    if py == 0.0 {
        return Err(Error::NotPositive { label: phi.label().to_string(), x: y_s, value: py });
    }
    let gamma = px / py;
    let lhs = x + (t + s) * px;
    let rhs = y_s + gamma * t * py;
    let z = match z {
        Some(z) => z,
        None => lhs,
    };
    let pz = phi.eval(z)?;
    let concat_residual = (px / pz - gamma * (py / pz)).abs();
    Ok(NearAssocDecomposition { x, s, t, y_s, gamma, lhs, rhs, z, concat_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub x0: f64,
    /// `(t, u(t))`, starting at `(0, x0)`.
    pub samples: Vec<(f64, f64)>,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest accepted local error estimate.
    pub max_local_error: f64,
    pub tolerance: f64,
}

impl FlowTrajectory {
    pub fn end(&self) -> (f64, f64) {
        *self.samples.last().expect("trajectory has its initial sample")
    }

    /// `f_x(t) = u(t) - x0` at every sample.
    pub fn embedding(&self) -> EmbeddingMap {
        EmbeddingMap { x: self.x0, samples: self.samples.iter().map(|&(t, u)| (t, u - self.x0)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap {
    pub x: f64,
    pub samples: Vec<(f64, f64)>,
}

fn rk4(phi: &RealFunc, u: f64, h: f64) -> Result<f64> {
    let k1 = phi.eval(u)?;
    let k2 = phi.eval(u + 0.5 * h * k1)?;
    let k3 = phi.eval(u + 0.5 * h * k2)?;
    let k4 = phi.eval(u + h * k3)?;
    Ok(u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// One step of size `h` checked against two steps of size `h/2`. Returns the
/// extrapolated value and the error estimate.
fn double_step(phi: &RealFunc, u: f64, h: f64) -> Result<(f64, f64)> {
    let full = rk4(phi, u, h)?;
    let half = rk4(phi, rk4(phi, u, 0.5 * h)?, 0.5 * h)?;
    let err = (half - full).abs() / 15.0;
    Ok((half + (half - full) / 15.0, err))
}

struct Stepper<'a> {
    phi: &'a RealFunc,
    tol: f64,
    span: f64,
    h: f64,
    accepted: usize,
    rejected: usize,
    max_err: f64,
}

impl<'a> Stepper<'a> {
    fn new(phi: &'a RealFunc, tol: f64, span: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("flow tolerance must be positive, got {tol}")));
        }
        let span = span.max(1.0);
        Ok(Stepper { phi, tol, span, h: span / 16.0, accepted: 0, rejected: 0, max_err: 0.0 })
    }

    /// Advance from `(t, u)` by at most `limit`; returns the new point.
    fn advance(&mut self, t: f64, u: f64, limit: f64) -> Result<(f64, f64)> {
        loop {
            let h = self.h.min(limit);
            if h < MIN_STEP * t.abs().max(1.0) || self.accepted + self.rejected > MAX_STEPS {
                return Err(Error::StepUnderflow { t, h });
            }
            // error budget per unit time, relative to the size of u
            let budget = self.tol * u.abs().max(1.0) * h / self.span;
            // a step that leaves the domain is treated like a rejected one
            let step = double_step(self.phi, u, h).ok().filter(|(v, e)| v.is_finite() && e.is_finite());
            match step {
                Some((v, err)) if err <= budget => {
                    self.accepted += 1;
                    self.max_err = self.max_err.max(err);
                    if err < budget / 64.0 && h == self.h {
                        self.h *= 2.0;
                    }
                    return Ok((t + h, v));
                }
                _ => {
                    self.rejected += 1;
                    self.h = 0.5 * h;
                }
            }
        }
    }
}

/// RK4 with step halving on `u' = φ(u)`, `u(0) = x0`, up to `t_end`.
pub fn integrate_flow(phi: &RealFunc, x0: f64, t_end: f64, tol: f64) -> Result<FlowTrajectory> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("flow end time must be finite and >= 0, got {t_end}")));
    }
    phi.eval(x0)?;
    let mut stepper = Stepper::new(phi, tol, t_end)?;
    let mut samples = vec![(0.0, x0)];
    let (mut t, mut u) = (0.0, x0);
    while t < t_end {
        let remaining = t_end - t;
        let (nt, nu) = stepper.advance(t, u, remaining)?;
        // land exactly on t_end
        t = if t_end - nt <= 1e-14 * t_end.max(1.0) { t_end } else { nt };
        u = nu;
        samples.push((t, u));
    }
    Ok(FlowTrajectory {
        x0,
        samples,
        accepted: stepper.accepted,
        rejected: stepper.rejected,
        max_local_error: stepper.max_err,
        tolerance: tol,
    })
}

/// `Φ(t, x)`.
pub fn flow_map(phi: &RealFunc, t: f64, x: f64, tol: f64) -> Result<f64> {
    Ok(integrate_flow(phi, x, t, tol)?.end().1)
}

/// `τ_x = ∫_1^x du/φ(u)`, signed for `x < 1`.
pub fn time_measure(phi: &RealFunc, x: f64, tol: f64) -> Result<f64> {
    adaptive_simpson(|u| phi.reciprocal(u), 1.0, x, tol)
}

/// Time for the flow to carry `from` to `to`, located by bisecting the
/// length of the step that crosses `to`.
pub fn reach_time(phi: &RealFunc, from: f64, to: f64, tol: f64) -> Result<f64> {
    if !(from < to) {
        return Err(Error::InvalidParameter(format!("reach_time needs from < to, got {from} -> {to}")));
    }
    phi.eval(from)?;
    // scale for the per-step error budget: the naive crossing time
    let guess = (to - from) / phi.eval(from)?.min(phi.eval(to)?);
    let mut stepper = Stepper::new(phi, tol, guess.min(1e6))?;
    let (mut t, mut u) = (0.0, from);
    loop {
        let (nt, nu) = stepper.advance(t, u, f64::INFINITY)?;
        if nu >= to {
            let (mut lo, mut hi) = (0.0, nt - t);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let (v, _) = double_step(phi, u, mid)?;
                if v < to {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(t + 0.5 * (lo + hi));
        }
        t = nt;
        u = nu;
    }
}

/// `|f_x(s + t) - f_x(s) - f_y(t)|` with `y = x + f_x(s)`.
pub fn embedding_residual(phi: &RealFunc, x: f64, s: f64, t: f64, tol: f64) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::InvalidParameter(format!("embedding times must be >= 0, got s = {s}, t = {t}")));
    }
    let fs = flow_map(phi, s, x, tol)? - x;
    let fst = flow_map(phi, s + t, x, tol)? - x;
    let y = x + fs;
    let ft = flow_map(phi, t, y, tol)? - y;
    Ok((fst - fs - ft).abs())
}

/// `τ_x` beside the crossing time `x/φ(x)` of the pre-action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    pub x: f64,
    pub tau: f64,
    pub preaction_time: f64,
    pub ratio: f64,
}

pub fn time_scales(phi: &RealFunc, x: f64, tol: f64) -> Result<TimeScales> {
    let tau = time_measure(phi, x, tol)?;
    let preaction_time = x / phi.eval(x)?;
    Ok(TimeScales { x, tau, preaction_time, ratio: tau / preaction_time })
}
