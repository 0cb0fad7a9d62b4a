//! Beurling regular variation: the ratio field `σ(t, x) = f(x + tφ(x)) / f(x)`,
//! index estimation through the Cauchy functional equation, uniformity
//! profiles, the asymptotic-cocycle defect and the shift diagnostic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{extrapolate_limit, richardson_limit, scan_profile, ConvergenceReport, TGrid, XSchedule};
use crate::error::{Error, Result};
use crate::funcspace::RealFunc;
use crate::sn_check::shifted_ratio;

/// Extrapolated limits at or below this are treated as zero.
pub const MIN_LIMIT: f64 = 1e-12;

/// Samples used by the Richardson step of [`limit_g`].
const RICHARDSON_POINTS: usize = 4;

pub const UCT_NOTE: &str =
    "local uniformity is measured on the tested compact set and schedule; a pass is evidence, not proof";

#[derive(Debug, Clone)]
pub struct RatioField {
    pub f: RealFunc,
    pub phi: RealFunc,
}

impl RatioField {
    pub fn new(f: RealFunc, phi: RealFunc) -> Self {
        RatioField { f, phi }
    }

    /// `σ^φ`, the ratio field of the auxiliary function itself.
    pub fn of_phi(phi: RealFunc) -> Self {
        RatioField { f: phi.clone(), phi }
    }

    pub fn sigma(&self, t: f64, x: f64) -> Result<f64> {
        shifted_ratio(&self.f, &self.phi, t, x)
    }

    /// The pre-action `x + tφ(x)`.
    pub fn shift(&self, t: f64, x: f64) -> Result<f64> {
        Ok(x + t * self.phi.eval(x)?)
    }
}

/// Shape of the limit function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexModel {
    /// `g(t) = e^{ρt}`, with `k(s + t) = k(s) + k(t)`.
    #[default]
    Beurling,
    /// `φ(x) = x`: `g(t) = (1 + t)^ρ`, with `k((1+s)(1+t) - 1) = k(s) + k(t)`.
    Karamata,
}

impl IndexModel {
    fn basis(self, t: f64) -> f64 {
        match self {
            IndexModel::Beurling => t,
            IndexModel::Karamata => t.ln_1p(),
        }
    }

    fn compose(self, s: f64, t: f64) -> f64 {
        match self {
            IndexModel::Beurling => s + t,
            IndexModel::Karamata => s + t + s * t,
        }
    }

    pub fn target(self, rho: f64, t: f64) -> f64 {
        (rho * self.basis(t)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub rho: f64,
    pub fit_residual: f64,
    /// `(t, k̂(t))` with `k̂ = log g`.
    pub k_samples: Vec<(f64, f64)>,
    pub cfe_max_residual: f64,
    pub model: IndexModel,
}

impl IndexEstimate {
    /// `(t, g(t))` pairs.
    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.k_samples.iter().map(|&(t, k)| (t, k.exp())).collect()
    }
}

/// Extrapolate `σ(t, x)` along the schedule.
///
/// When `φ(x)/x` decreases along the schedule the samples are extrapolated
/// polynomially in `δ = φ(x)/x`, the natural small parameter of the ratio
/// field; otherwise (e.g. `φ(x) = x`) a power-law step in `x` is used.
pub fn limit_g(f: &RealFunc, phi: &RealFunc, t: f64, sched: &XSchedule) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let field = RatioField::new(f.clone(), phi.clone());
    let mut samples = Vec::new();
    for x in sched.points() {
        let (Ok(s), Ok(p)) = (field.sigma(t, x), phi.eval(x)) else {
            continue;
        };
        if s.is_finite() {
            samples.push((x, p / x, s));
        }
    }
    let Some(&(_, _, last)) = samples.last() else {
        return Err(Error::LimitNotNonZero { t, value: f64::NAN });
    };
    if samples.len() < 3 {
        return Ok(last);
    }
    let tail = &samples[samples.len().saturating_sub(RICHARDSON_POINTS)..];
    let shrinking = tail.len() >= 3
        && tail.windows(2).all(|w| w[1].1 < w[0].1)
        && tail[tail.len() - 1].1 < 0.9 * tail[0].1;
    let value = if shrinking {
        let pts: Vec<(f64, f64)> = tail.iter().map(|&(_, d, s)| (d, s)).collect();
        richardson_limit(&pts)?
    } else {
        let pts: Vec<(f64, f64)> = samples.iter().map(|&(x, _, s)| (x, s)).collect();
        extrapolate_limit(&pts)?
    };
    Ok(value)
}

pub fn estimate_index(f: &RealFunc, phi: &RealFunc, grid: &TGrid, sched: &XSchedule) -> Result<IndexEstimate> {
    estimate_index_with(f, phi, grid, sched, IndexModel::Beurling)
}

pub fn estimate_index_with(
    f: &RealFunc,
    phi: &RealFunc,
    grid: &TGrid,
    sched: &XSchedule,
    model: IndexModel,
) -> Result<IndexEstimate> {
    let ts = grid.points();
    if ts.len() < 10 {
        return Err(Error::InvalidParameter(format!("index fit needs at least 10 grid points, got {}", ts.len())));
    }
    let k_samples: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| {
            let g = limit_g(f, phi, t, sched)?;
            if !(g > MIN_LIMIT) || !g.is_finite() {
                return Err(Error::LimitNotNonZero { t, value: g });
            }
            Ok((t, g.ln()))
        })
        .collect::<Result<_>>()?;

    // least squares through the origin: k(0) = 0 is part of the model
    let (num, den) = k_samples.iter().fold((0.0, 0.0), |(n, d), &(t, k)| {
        let b = model.basis(t);
        (n + b * k, d + b * b)
    });
    let rho = num / den;
    let fit_residual = k_samples.iter().map(|&(t, k)| (k - rho * model.basis(t)).abs()).fold(0.0, f64::max);

    let mut cfe_max_residual = 0.0_f64;
    for (i, &(s, _)) in k_samples.iter().enumerate() {
        for &(t, _) in &k_samples[i..] {
            if let Ok(r) = cfe_residual_with(&k_samples, s, t, model) {
                cfe_max_residual = cfe_max_residual.max(r);
            }
        }
    }
    Ok(IndexEstimate { rho, fit_residual, k_samples, cfe_max_residual, model })
}

fn lookup(samples: &[(f64, f64)], p: f64) -> Result<f64> {
    let spacing = samples.windows(2).map(|w| (w[1].0 - w[0].0).abs()).fold(f64::INFINITY, f64::min);
    let (t, k) = samples
        .iter()
        .min_by(|a, b| (a.0 - p).abs().total_cmp(&(b.0 - p).abs()))
        .copied()
        .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let limit = if spacing.is_finite() { 0.5 * spacing } else { 0.0 };
    // exact grid points only; the half-spacing rule catches gross misses
    if (t - p).abs() > limit.min(1e-9 * (1.0 + p.abs())) {
        return Err(Error::OffGrid { point: p, spacing });
    }
    Ok(k)
}

/// `|k(s + t) - k(s) - k(t)|` from tabulated `(t, k(t))` samples.
pub fn cfe_residual(k_samples: &[(f64, f64)], s: f64, t: f64) -> Result<f64> {
    cfe_residual_with(k_samples, s, t, IndexModel::Beurling)
}

fn cfe_residual_with(k_samples: &[(f64, f64)], s: f64, t: f64, model: IndexModel) -> Result<f64> {
    let ks = lookup(k_samples, s)?;
    let kt = lookup(k_samples, t)?;
    let kst = lookup(k_samples, model.compose(s, t))?;
    Ok((kst - ks - kt).abs())
}

/// Relative deviation `|σ(t, x) e^{-ρt} - 1|` over the grid along the schedule.
pub fn uct_profile(f: &RealFunc, phi: &RealFunc, rho: f64, grid: &TGrid, sched: &XSchedule, tol: f64) -> ConvergenceReport {
    uct_profile_over(f, phi, rho, &grid.points(), sched, tol, IndexModel::Beurling)
}

pub(crate) fn uct_profile_over(
    f: &RealFunc,
    phi: &RealFunc,
    rho: f64,
    ts: &[f64],
    sched: &XSchedule,
    tol: f64,
    model: IndexModel,
) -> ConvergenceReport {
    let field = RatioField::new(f.clone(), phi.clone());
    scan_profile(ts, sched, tol, |&t, x| Ok(field.sigma(t, x)? / model.target(rho, t) - 1.0)).with_note(UCT_NOTE)
}

/// `|σ(s + t, x) - σ(s, T_t x) σ(t, x)|` with `T_t x = x + tφ(x)`.
pub fn cocycle_defect(sigma: &RatioField, s: f64, t: f64, x: f64) -> Result<f64> {
    let y = sigma.shift(t, x)?;
    let whole = sigma.sigma(s + t, x)?;
    Ok((whole - sigma.sigma(s, y)? * sigma.sigma(t, x)?).abs())
}

/// Sup of the cocycle defect over `(s, t) ∈ K × K` along the schedule.
pub fn cocycle_profile(sigma: &RatioField, grid: &TGrid, sched: &XSchedule, tol: f64) -> ConvergenceReport {
    let ts = grid.points();
    let pairs: Vec<(f64, f64)> = ts.iter().flat_map(|&s| ts.iter().map(move |&t| (s, t))).collect();
    scan_profile(&pairs, sched, tol, |&(s, t), x| cocycle_defect(sigma, s, t, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDiagnostic {
    pub centered: ConvergenceReport,
    pub shifted: ConvergenceReport,
    /// Set when the two verdicts differ.
    pub flagged: bool,
}

/// Compare uniformity near `t = 0` with uniformity near `t = u`, using an
/// index `rho` from a prior [`IndexEstimate`].
pub fn shift_uniformity(
    f: &RealFunc,
    phi: &RealFunc,
    rho: f64,
    u: f64,
    window: f64,
    sched: &XSchedule,
    tol: f64,
) -> Result<ShiftDiagnostic> {
    if !(window > 0.0) || !u.is_finite() {
        return Err(Error::InvalidParameter(format!("bad shift window {window} around {u}")));
    }
    let steps = 10;
    let around = |c: f64| -> Vec<f64> { (-steps..=steps).map(|i| c + window * i as f64 / steps as f64).collect() };
    let centered = uct_profile_over(f, phi, rho, &around(0.0), sched, tol, IndexModel::Beurling);
    let shifted = uct_profile_over(f, phi, rho, &around(u), sched, tol, IndexModel::Beurling);
    let flagged = centered.verdict != shifted.verdict;
    Ok(ShiftDiagnostic { centered, shifted, flagged })
}
