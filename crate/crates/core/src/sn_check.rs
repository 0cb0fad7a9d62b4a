//! Verifiers for self-neglect, φ-slow variation, additive Karamata slow
//! variation and the `φ(x) = o(x)` side condition.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{scan_profile, ConvergenceReport, ProfilePoint, TGrid, XSchedule};
use crate::error::{Error, Result};
use crate::funcspace::RealFunc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationKind {
    /// `φ(x + tφ(x)) / φ(x) → 1`
    Sn,
    /// `ψ(x + tφ(x)) / ψ(x) → 1`
    PhiSlow,
    /// `φ(x + v) / φ(x) → 1`
    KaramataAdditive,
    /// `φ(x) / x → 0`
    LittleO,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationVerdict {
    pub kind: VariationKind,
    pub report: ConvergenceReport,
    pub subject: String,
    pub auxiliary: Option<String>,
    /// Minimum of the subject over the schedule, for checks whose hypothesis
    /// asks for the function to be bounded away from zero.
    pub lower_bound: Option<f64>,
}

impl VariationVerdict {
    pub fn passed(&self) -> bool {
        self.report.verdict.passed()
    }
}

/// Evaluate `f` on the schedule, failing on the first non-positive value.
fn require_positive(f: &RealFunc, sched: &XSchedule) -> Result<f64> {
    let mut min = f64::INFINITY;
    for x in sched.points() {
        let v = f.eval(x)?;
        if v <= 0.0 {
            return Err(Error::NotPositive { label: f.label().to_string(), x, value: v });
        }
        min = min.min(v);
    }
    Ok(min)
}

/// `f(x + t·aux(x)) / f(x)`; through logs when either value leaves the f64
/// range.
pub(crate) fn shifted_ratio(f: &RealFunc, aux: &RealFunc, t: f64, x: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let y = x + t * aux.eval(x)?;
    if let (Ok(a), Ok(b)) = (f.eval(y), f.eval(x)) {
        let r = a / b;
        if a > 0.0 && b > 0.0 && r.is_finite() && r > 0.0 && a.is_normal() && b.is_normal() {
            return Ok(r);
        }
    }
    Ok((f.ln_eval(y)? - f.ln_eval(x)?).exp())
}

pub fn check_sn(phi: &RealFunc, grid: &TGrid, sched: &XSchedule, tol: f64) -> Result<VariationVerdict> {
    require_positive(phi, sched)?;
    let report = scan_profile(&grid.points(), sched, tol, |&t, x| Ok(shifted_ratio(phi, phi, t, x)? - 1.0));
    Ok(VariationVerdict {
        kind: VariationKind::Sn,
        report,
        subject: phi.label().to_string(),
        auxiliary: None,
        lower_bound: None,
    })
}

pub fn check_phi_slow(
    psi: &RealFunc,
    phi: &RealFunc,
    grid: &TGrid,
    sched: &XSchedule,
    tol: f64,
) -> Result<VariationVerdict> {
    require_positive(psi, sched)?;
    require_positive(phi, sched)?;
    let report = scan_profile(&grid.points(), sched, tol, |&t, x| Ok(shifted_ratio(psi, phi, t, x)? - 1.0));
    Ok(VariationVerdict {
        kind: VariationKind::PhiSlow,
        report,
        subject: psi.label().to_string(),
        auxiliary: Some(phi.label().to_string()),
        lower_bound: None,
    })
}

pub fn check_karamata_additive(
    phi: &RealFunc,
    shifts: &TGrid,
    sched: &XSchedule,
    tol: f64,
) -> Result<VariationVerdict> {
    let min = require_positive(phi, sched)?;
    let report = scan_profile(&shifts.points(), sched, tol, |&v, x| {
        if v == 0.0 {
            return Ok(0.0);
        }
        Ok((phi.ln_eval(x + v)? - phi.ln_eval(x)?).exp() - 1.0)
    });
    Ok(VariationVerdict {
        kind: VariationKind::KaramataAdditive,
        report: report.with_note(format!("min over schedule = {min:?}")),
        subject: phi.label().to_string(),
        auxiliary: None,
        lower_bound: Some(min),
    })
}

pub fn check_little_o(phi: &RealFunc, sched: &XSchedule, tol: f64) -> Result<VariationVerdict> {
    require_positive(phi, sched)?;
    let xs = sched.points();
    let per_x: Vec<ProfilePoint> = xs
        .iter()
        .map(|&x| match phi.eval(x) {
            Ok(v) => ProfilePoint { x, sup_deviation: v / x, n_skipped: 0 },
            Err(_) => ProfilePoint { x, sup_deviation: f64::NAN, n_skipped: 1 },
        })
        .collect();
    let report = ConvergenceReport::from_rows(per_x, xs.len(), tol);
    Ok(VariationVerdict {
        kind: VariationKind::LittleO,
        report,
        subject: phi.label().to_string(),
        auxiliary: None,
        lower_bound: None,
    })
}
