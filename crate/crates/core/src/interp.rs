//! Bloom partitions `x_{n+1} = x_n + φ(x_n)` and the C¹ smoothstep
//! interpolant through `ψ(x_n)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{scan_profile, ConvergenceReport, TGrid, XSchedule};
use crate::error::{Error, Result};
use crate::funcspace::{Domain, Evaluator, RealFunc};

/// Gaps below this fraction of the knot count as stagnation.
const STAGNATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomPartition {
    /// `x_1 < x_2 < ...`; the origin `x_0 = 0` is implicit.
    pub knots: Vec<f64>,
    pub phi: String,
    pub horizon: f64,
    /// Set when the knots reached the horizon.
    pub diverged: bool,
    pub stagnated: bool,
}

impl BloomPartition {
    /// Knots with the origin prepended.
    pub fn with_origin(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.knots.iter().copied()).collect()
    }

    pub fn last(&self) -> f64 {
        *self.knots.last().expect("partition has at least one knot")
    }
}

pub fn bloom_partition(phi: &RealFunc, x1: f64, horizon: f64, max_knots: usize) -> Result<BloomPartition> {
    if !(x1 > 0.0) || max_knots < 1 {
        return Err(Error::InvalidParameter(format!("bloom partition needs x1 > 0 and max_knots >= 1, got {x1}, {max_knots}")));
    }
    let mut knots = vec![x1];
    let mut x = x1;
    let mut stagnated = false;
    while x < horizon && knots.len() < max_knots {
        let gap = phi.eval(x)?;
        if !(gap > 0.0) {
            return Err(Error::NotPositive { label: phi.label().to_string(), x, value: gap });
        }
        if gap < STAGNATION * x {
            stagnated = true;
            break;
        }
        x += gap;
        knots.push(x);
    }
    Ok(BloomPartition { knots, phi: phi.label().to_string(), horizon, diverged: x >= horizon, stagnated })
}

fn smoothstep(th: f64) -> f64 {
    th * th * (3.0 - 2.0 * th)
}

fn smoothstep_slope(th: f64) -> f64 {
    6.0 * th * (1.0 - th)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolantC1 {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// `(3/2)|Δψ| / gap` on each interval, the supremum of `|φ̂'|` there.
    pub slope_bounds: Vec<f64>,
}

impl InterpolantC1 {
    pub fn from_knot_values(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::PartitionTooShort { needed: 2, got: knots.len().min(values.len()) });
        }
        if let Some((x, v)) = knots.iter().zip(&values).find(|p| !(*p.1 > 0.0)) {
            return Err(Error::NotPositive { label: "interpolant knot".into(), x: *x, value: *v });
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("knots must be strictly increasing".into()));
        }
        let slope_bounds = knots
            .windows(2)
            .zip(values.windows(2))
            .map(|(k, v)| 1.5 * (v[1] - v[0]).abs() / (k[1] - k[0]))
            .collect();
        Ok(InterpolantC1 { knots, values, slope_bounds })
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Interval index and `θ ∈ [0, 1]`; `None` below the first knot.
    fn locate(&self, x: f64) -> Result<Option<(usize, f64)>> {
        if !(x > 0.0) || x > self.last() {
            return Err(Error::Domain { label: "interpolant".into(), x, lo: 0.0, hi: self.last() });
        }
        if x <= self.knots[0] {
            return Ok(None);
        }
        let i = (self.knots.partition_point(|&k| k <= x) - 1).min(self.knots.len() - 2);
        let th = ((x - self.knots[i]) / (self.knots[i + 1] - self.knots[i])).clamp(0.0, 1.0);
        Ok(Some((i, th)))
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        Ok(match self.locate(x)? {
            None => self.values[0],
            Some((i, th)) => self.values[i] + (self.values[i + 1] - self.values[i]) * smoothstep(th),
        })
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(match self.locate(x)? {
            None => 0.0,
            Some((i, th)) => {
                (self.values[i + 1] - self.values[i]) * smoothstep_slope(th) / (self.knots[i + 1] - self.knots[i])
            }
        })
    }

    /// One-sided derivatives at knot `n` (both 0 for the smoothstep).
    pub fn knot_derivatives(&self, n: usize) -> (f64, f64) {
        let left = if n == 0 {
            0.0
        } else {
            (self.values[n] - self.values[n - 1]) * smoothstep_slope(1.0) / (self.knots[n] - self.knots[n - 1])
        };
        let right = if n + 1 >= self.knots.len() {
            0.0
        } else {
            (self.values[n + 1] - self.values[n]) * smoothstep_slope(0.0) / (self.knots[n + 1] - self.knots[n])
        };
        (left, right)
    }

    /// Largest `|φ̂'(x)| gap / |Δψ|` over `per_interval` evenly spaced interior
    /// points of every interval with `Δψ ≠ 0`.
    pub fn measured_slope_constant(&self, per_interval: usize) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.knots.len() - 1 {
            let dv = self.values[i + 1] - self.values[i];
            if dv == 0.0 {
                continue;
            }
            let gap = self.knots[i + 1] - self.knots[i];
            for j in 1..=per_interval {
                let th = j as f64 / (per_interval + 1) as f64;
                let d = dv * smoothstep_slope(th) / gap;
                worst = worst.max(d.abs() * gap / dv.abs());
            }
        }
        worst
    }

    /// Whether `φ̂(x)` lies weakly between the neighbouring knot values.
    pub fn between_neighbours(&self, x: f64) -> Result<bool> {
        let v = self.value(x)?;
        Ok(match self.locate(x)? {
            None => v == self.values[0],
            Some((i, _)) => {
                let (a, b) = (self.values[i], self.values[i + 1]);
                a.min(b) <= v && v <= a.max(b)
            }
        })
    }

    pub fn to_real_func(&self, label: impl Into<String>) -> RealFunc {
        let last = self.last();
        RealFunc::derived(Interp(Arc::new(self.clone())), label)
            .with_domain(Domain { lo: 0.0, hi: last })
            .positive()
    }
}

struct Interp(Arc<InterpolantC1>);

impl Evaluator for Interp {
    fn value(&self, x: f64) -> Result<f64> {
        self.0.value(x)
    }

    fn derivative(&self, x: f64) -> Option<Result<f64>> {
        Some(self.0.derivative(x))
    }
}

pub fn interpolate_c1(psi: &RealFunc, partition: &BloomPartition) -> Result<InterpolantC1> {
    let values = partition.knots.iter().map(|&x| psi.eval(x)).collect::<Result<Vec<_>>>()?;
    InterpolantC1::from_knot_values(partition.knots.clone(), values)
}

/// Reports for `ψ/φ̂ → 1` and `φ φ̂'/φ̂ → 0`, each a sup over the points
/// `x + tφ(x)`, `t ∈ K`.
pub fn smooth_rep_check(
    psi: &RealFunc,
    interp: &InterpolantC1,
    phi: &RealFunc,
    grid: &TGrid,
    sched: &XSchedule,
    tol: f64,
) -> Result<(ConvergenceReport, ConvergenceReport)> {
    let ts = grid.points();
    let ratio = scan_profile(&ts, sched, tol, |&t, x| {
        let y = x + t * phi.eval(x)?;
        Ok(psi.eval(y)? / interp.value(y)? - 1.0)
    });
    let log_slope = scan_profile(&ts, sched, tol, |&t, x| {
        let y = x + t * phi.eval(x)?;
        Ok(phi.eval(y)? * interp.derivative(y)? / interp.value(y)?)
    });
    Ok((ratio, log_slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::Verdict;
    use crate::funcspace::{builtin_family, FamilySpec};

    fn one() -> RealFunc {
        builtin_family(FamilySpec::ConstC { c: 1.0 }).unwrap()
    }
    fn root() -> RealFunc {
        builtin_family(FamilySpec::PowerAlpha { alpha: 0.5 }).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = bloom_partition(&one(), 1.0, 4.0, 100).unwrap();
        assert_eq!(p.knots, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(p.diverged);
        assert_eq!(p.with_origin()[0], 0.0);
        let id = builtin_family(FamilySpec::IdentityX).unwrap();
        let p = bloom_partition(&id, 1.0, 8.0, 100).unwrap();
        assert_eq!(p.knots, vec![1.0, 2.0, 4.0, 8.0]);
        let p = bloom_partition(&root(), 1.0, 1e9, 4).unwrap();
        assert_eq!(p.knots[1], 2.0);
        assert!((p.knots[2] - 3.414214).abs() < 1e-6);
        assert!((p.knots[3] - 5.261972).abs() < 1e-6);
        assert!(!p.diverged);
    }

    #[test]
    fn stagnation_is_reported() {
        let tiny = crate::funcspace::parse_expr("1e-20").unwrap();
        let p = bloom_partition(&tiny, 1.0, 10.0, 1000).unwrap();
        assert!(p.stagnated && !p.diverged);
        let neg = crate::funcspace::parse_expr("0-1").unwrap();
        assert!(bloom_partition(&neg, 1.0, 10.0, 10).is_err());
    }

    #[test]
    fn interpolant_examples() {
        let part = bloom_partition(&one(), 1.0, 50.0, 100).unwrap();
        let two = builtin_family(FamilySpec::ConstC { c: 2.0 }).unwrap();
        let c = interpolate_c1(&two, &part).unwrap();
        for x in [0.5, 1.0, 7.3, 49.99] {
            assert_eq!(c.value(x).unwrap(), 2.0);
            assert_eq!(c.derivative(x).unwrap(), 0.0);
        }
        let r = interpolate_c1(&root(), &part).unwrap();
        let v = r.value(1.5).unwrap();
        assert!((v - (1.0 + (2f64.sqrt() - 1.0) * 0.5)).abs() < 1e-15);
        assert!((v - 1.207107).abs() < 1e-6);
        assert!(r.between_neighbours(1.5).unwrap());
        assert!(r.value(51.0).is_err());
        assert_eq!(r.knot_derivatives(3), (0.0, 0.0));
        assert!((r.measured_slope_constant(9) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn knots_match_on_long_partition() {
        let part = bloom_partition(&root(), 1.0, f64::INFINITY, 1000).unwrap();
        assert_eq!(part.knots.len(), 1000);
        let r = interpolate_c1(&root(), &part).unwrap();
        for &k in &part.knots {
            let want = k.sqrt();
            assert!((r.value(k).unwrap() - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn smooth_rep_examples() {
        let sched = XSchedule::new(1e4, 2.0, 12).unwrap();
        let part = bloom_partition(&root(), 1.0, 1e8, 100_000).unwrap();
        let r = interpolate_c1(&root(), &part).unwrap();
        let (c, e) = smooth_rep_check(&root(), &r, &root(), &TGrid::default(), &sched, 1e-2).unwrap();
        assert_eq!(c.verdict, Verdict::Pass);
        assert_eq!(e.verdict, Verdict::Pass);
        for &k in &part.knots[..50] {
            assert_eq!(root().eval(k).unwrap() / r.value(k).unwrap(), 1.0);
        }

        // alternate the knot values of a constant: neither ratio nor slope settles
        let vals: Vec<f64> = (0..part.knots.len()).map(|i| if i % 2 == 0 { 2.5 } else { 1.5 }).collect();
        let bad = InterpolantC1::from_knot_values(part.knots.clone(), vals).unwrap();
        let two = builtin_family(FamilySpec::ConstC { c: 2.0 }).unwrap();
        let (c, e) = smooth_rep_check(&two, &bad, &root(), &TGrid::default(), &sched, 1e-2).unwrap();
        assert_eq!(c.verdict, Verdict::Fail);
        assert_eq!(e.verdict, Verdict::Fail);
    }
}
