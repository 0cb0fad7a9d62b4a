//! Limit-extrapolation engine shared by every verifier.
//!
//! "As x → ∞" is realized by a geometric [`XSchedule`], "locally uniformly in
//! t" by a sup over a finite [`TGrid`]. A [`ConvergenceReport`] holds the
//! measured sup-deviation per schedule point together with a verdict. Pass
//! verdicts are numerical evidence on the tested ranges, never a proof.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Deviations at or below this level count as converged when checking the
/// final stretch of a profile for monotone decrease.
pub const NOISE_FLOOR: f64 = 1e-12;

/// Deviations below `tol * RELATIVE_NOISE` are rounding noise for the
/// monotonicity test (log-domain ratios at large x carry about `x * eps`).
pub const RELATIVE_NOISE: f64 = 1e-4;

/// Maximum fraction of skipped evaluations before a profile is inconclusive.
pub const MAX_SKIP_FRACTION: f64 = 0.05;

/// Points `x0 * ratio^j`, `j = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XSchedule {
    pub x0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl Default for XSchedule {
    fn default() -> Self {
        XSchedule { x0: 1e2, ratio: 2.0, count: 20 }
    }
}

impl XSchedule {
    pub fn new(x0: f64, ratio: f64, count: usize) -> Result<Self> {
        let s = XSchedule { x0, ratio, count };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::InvalidParameter(format!("schedule x0 must be positive, got {}", self.x0)));
        }
        if !(self.ratio > 1.0) {
            return Err(Error::InvalidParameter(format!("schedule ratio must exceed 1, got {}", self.ratio)));
        }
        if self.count < 5 {
            return Err(Error::InvalidParameter(format!("schedule needs at least 5 points, got {}", self.count)));
        }
        if !self.last().is_finite() {
            return Err(Error::InvalidParameter("schedule overflows f64".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.x0 * self.ratio.powi(j as i32)).collect()
    }

    pub fn last(&self) -> f64 {
        self.x0 * self.ratio.powi(self.count as i32 - 1)
    }
}

/// Points `k * step` for every integer `k` with `lo <= k * step <= hi`.
///
/// Points are integer multiples of the step, so `0` is always on the grid and
/// halving the step yields a superset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for TGrid {
    fn default() -> Self {
        TGrid { lo: -2.0, hi: 2.0, step: 0.1 }
    }
}

impl TGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = TGrid { lo, hi, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!("grid needs lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if !(self.lo <= 0.0 && 0.0 <= self.hi) {
            return Err(Error::InvalidParameter("grid must contain 0".into()));
        }
        if !(self.step > 0.0) || (self.hi - self.lo) / self.step > 1e6 {
            return Err(Error::InvalidParameter(format!("bad grid step {}", self.step)));
        }
        Ok(())
    }

    /// Integer index range `k_lo..=k_hi`.
    pub fn index_range(&self) -> (i64, i64) {
        let eps = 1e-9;
        ((self.lo / self.step - eps).ceil() as i64, (self.hi / self.step + eps).floor() as i64)
    }

    pub fn point(&self, k: i64) -> f64 {
        k as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        let (a, b) = self.index_range();
        (a..=b).map(|k| self.point(k)).collect()
    }

    pub fn len(&self) -> usize {
        let (a, b) = self.index_range();
        (b - a + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn refined(&self) -> TGrid {
        TGrid { step: 0.5 * self.step, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

fn nan_if_null<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    /// NaN (JSON `null`) when every evaluation at this x was skipped.
    #[serde(deserialize_with = "nan_if_null")]
    pub sup_deviation: f64,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub per_x: Vec<ProfilePoint>,
    #[serde(deserialize_with = "nan_if_null")]
    pub extrapolated_limit: f64,
    pub decay_exponent: Option<f64>,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub evaluations: usize,
    pub skipped: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn last_deviation(&self) -> f64 {
        self.per_x.last().map_or(f64::NAN, |p| p.sup_deviation)
    }

    pub fn deviation_at(&self, x: f64) -> Option<f64> {
        self.per_x.iter().find(|p| p.x == x).map(|p| p.sup_deviation)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Assemble a report from per-x rows and derive limit, slope and verdict.
    pub fn from_rows(per_x: Vec<ProfilePoint>, evaluations: usize, tolerance: f64) -> Self {
        let skipped: usize = per_x.iter().map(|p| p.n_skipped).sum();
        let finite: Vec<(f64, f64)> =
            per_x.iter().filter(|p| p.sup_deviation.is_finite()).map(|p| (p.x, p.sup_deviation)).collect();
        let extrapolated_limit = match finite.len() {
            0 => f64::NAN,
            1 | 2 => finite[finite.len() - 1].1,
            _ => extrapolate_limit(&finite).unwrap_or(finite[finite.len() - 1].1),
        };
        let decay_exponent = fit_decay_exponent(&finite);
        let mut notes = Vec::new();
        // A sup over the evaluated subset never exceeds the full sup, so an
        // exceeded tolerance is a failure however many points were skipped.
        let exceeded = per_x.last().is_some_and(|p| p.sup_deviation > tolerance);
        let verdict = if exceeded {
            Verdict::Fail
        } else if evaluations > 0 && skipped as f64 > MAX_SKIP_FRACTION * evaluations as f64 {
            notes.push(format!("{skipped} of {evaluations} evaluations skipped (more than 5%)"));
            Verdict::Inconclusive
        } else {
            judge(&per_x, tolerance, &mut notes)
        };
        if skipped > 0 && verdict != Verdict::Inconclusive {
            notes.push(format!("{skipped} of {evaluations} evaluations skipped"));
        }
        ConvergenceReport { per_x, extrapolated_limit, decay_exponent, verdict, tolerance, evaluations, skipped, notes }
    }
}

fn judge(per_x: &[ProfilePoint], tol: f64, notes: &mut Vec<String>) -> Verdict {
    let Some(last) = per_x.last() else {
        notes.push("empty profile".into());
        return Verdict::Inconclusive;
    };
    if !last.sup_deviation.is_finite() {
        notes.push("final schedule point could not be evaluated".into());
        return Verdict::Inconclusive;
    }
    if last.sup_deviation > tol {
        return Verdict::Fail;
    }
    let tail = &per_x[per_x.len().saturating_sub(5)..];
    let floor = NOISE_FLOOR.max(RELATIVE_NOISE * tol);
    let monotone = tail.windows(2).all(|w| {
        let (a, b) = (w[0].sup_deviation, w[1].sup_deviation);
        a.is_finite() && b.is_finite() && (b <= a || b <= floor)
    });
    if monotone {
        Verdict::Pass
    } else {
        notes.push("deviation not non-increasing over the final 5 schedule points".into());
        Verdict::Inconclusive
    }
}

/// Least-squares slope of `ln(deviation)` against `ln(x)` over the strictly
/// positive deviations; `None` with fewer than two such points.
pub fn fit_decay_exponent(rows: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|(_, d)| *d > 0.0).map(|&(x, d)| (x.ln(), d.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// One Richardson step on the final three samples, assuming
/// `v(x) = L + C x^p` with `p < 0`. Falls back to the last value when the
/// samples do not look like monotone power-law convergence.
pub fn extrapolate_limit(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: samples.len() });
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidParameter("sample abscissae must be strictly increasing".into()));
    }
    let n = samples.len();
    let [(x1, v1), (x2, v2), (x3, v3)] = [samples[n - 3], samples[n - 2], samples[n - 1]];
    let (d1, d2) = (v2 - v1, v3 - v2);
    if d1 == 0.0 || d2 == 0.0 || !d1.is_finite() || !d2.is_finite() {
        return Ok(v3);
    }
    let r = d2 / d1;
    if !(r > 0.0 && r < 1.0) || x1 <= 0.0 {
        return Ok(v3);
    }
    // ratio of successive differences as a function of p; equals r at the fit
    let q = |p: f64| (x3.powf(p) - x2.powf(p)) / (x2.powf(p) - x1.powf(p));
    let (mut lo, mut hi) = (-60.0_f64, -1e-9_f64);
    let (qlo, qhi) = (q(lo) - r, q(hi) - r);
    if !(qlo.is_finite() && qhi.is_finite()) || qlo.signum() == qhi.signum() {
        return Ok(v3);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (q(mid) - r).signum() == qlo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let c = d2 / (x3.powf(p) - x2.powf(p));
    let limit = v3 - c * x3.powf(p);
    Ok(if limit.is_finite() { limit } else { v3 })
}

/// Polynomial (Neville) extrapolation to `h = 0` through the given
/// `(h, value)` pairs. Exact when the value is a polynomial in `h` of degree
/// below the number of samples.
pub fn richardson_limit(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let first = samples[0].1;
    if samples.iter().all(|s| s.1 == first) {
        return Ok(first);
    }
    let h: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut p: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            let denom = h[i] - h[i + m];
            if denom == 0.0 {
                return Err(Error::InvalidParameter("repeated Richardson abscissa".into()));
            }
            p[i] = (h[i] * p[i + 1] - h[i + m] * p[i]) / denom;
        }
    }
    Ok(p[0])
}

/// Measure `sup_p |deviation(p, x)|` over a parameter set at every schedule
/// point. Evaluation errors count as skipped points.
pub fn scan_profile<P, F>(params: &[P], sched: &XSchedule, tol: f64, deviation: F) -> ConvergenceReport
where
    P: Sync,
    F: Fn(&P, f64) -> Result<f64> + Sync,
{
    let xs = sched.points();
    let per_x: Vec<ProfilePoint> = xs
        .par_iter()
        .map(|&x| {
            let mut sup = f64::NAN;
            let mut n_skipped = 0;
            for p in params {
                match deviation(p, x) {
                    Ok(d) if d.is_finite() => sup = if sup.is_nan() { d.abs() } else { sup.max(d.abs()) },
                    _ => n_skipped += 1,
                }
            }
            ProfilePoint { x, sup_deviation: sup, n_skipped }
        })
        .collect();
    ConvergenceReport::from_rows(per_x, params.len() * xs.len(), tol)
}

/// `sup_{t ∈ K} |field(t, x) - target(t)|` along the schedule.
pub fn sup_deviation_profile<F, T>(field: F, target: T, grid: &TGrid, sched: &XSchedule, tol: f64) -> ConvergenceReport
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
    T: Fn(f64) -> f64 + Sync,
{
    scan_profile(&grid.points(), sched, tol, |&t, x| Ok(field(t, x)? - target(t)))
}
