use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::{ReportBundle, Table};
use crate::asymptotics::{ConvergenceReport, ProfilePoint, TGrid, Verdict, XSchedule};
use crate::brv::{self, IndexModel, RatioField};
use crate::error::{Error, Result};
use crate::flow;
use crate::funcspace::{builtin_family, parse_expr, FamilySpec, RealFunc};
use crate::interp;
use crate::represent;
use crate::sn_check;

/// An expression string or a builtin family object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FuncSpec {
    Expr(String),
    Builtin(FamilySpec),
}

impl FuncSpec {
    pub fn resolve(&self, positive: bool) -> Result<RealFunc> {
        match self {
            FuncSpec::Expr(s) => {
                let f = parse_expr(s)?;
                Ok(if positive { f.positive() } else { f })
            }
            FuncSpec::Builtin(b) => builtin_family(*b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    CheckSn,
    CheckSlow,
    EstimateIndex,
    Uct,
    Cocycle,
    Flow,
    TimeMeasure,
    Represent,
    Decompose,
    Interpolate,
    CrosscheckProposition,
    KaramataMode,
}

impl ScenarioKind {
    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    }
}

fn default_tolerance() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub f: Option<FuncSpec>,
    #[serde(default)]
    pub phi: Option<FuncSpec>,
    #[serde(default)]
    pub psi: Option<FuncSpec>,
    #[serde(default)]
    pub d: Option<FuncSpec>,
    #[serde(default)]
    pub e: Option<FuncSpec>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub grid: Option<TGrid>,
    #[serde(default)]
    pub schedule: Option<XSchedule>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Tolerance on the recovered index in `represent`; default `2 * tolerance`.
    #[serde(default)]
    pub rho_tolerance: Option<f64>,
    /// ODE and quadrature tolerance for `flow` and `time-measure`.
    #[serde(default)]
    pub flow_tolerance: Option<f64>,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    /// First Bloom knot.
    #[serde(default)]
    pub x1: Option<f64>,
    #[serde(default)]
    pub max_knots: Option<usize>,
    /// Output directory, used when `--out` is not given.
    #[serde(default)]
    pub output: Option<String>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Scenario {
            kind,
            name: None,
            f: None,
            phi: None,
            psi: None,
            d: None,
            e: None,
            rho: None,
            grid: None,
            schedule: None,
            tolerance: default_tolerance(),
            rho_tolerance: None,
            flow_tolerance: None,
            x0: None,
            t_end: None,
            x1: None,
            max_knots: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, v) in [("tolerance", Some(self.tolerance)), ("rho_tolerance", self.rho_tolerance), ("flow_tolerance", self.flow_tolerance)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Scenario(format!("{label} must be positive, got {v}")));
                }
            }
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        if let Some(r) = self.rho {
            if !r.is_finite() {
                return Err(Error::Scenario(format!("rho must be finite, got {r}")));
            }
        }
        use ScenarioKind::*;
        let needs: &[(&str, bool)] = match self.kind {
            CheckSn | CheckSlow | Cocycle | Flow | TimeMeasure | Represent | Interpolate => &[("phi", self.phi.is_some())],
            EstimateIndex | Decompose | CrosscheckProposition => &[("f", self.f.is_some()), ("phi", self.phi.is_some())],
            Uct => &[("f", self.f.is_some()), ("phi", self.phi.is_some()), ("rho", self.rho.is_some())],
            KaramataMode => &[("f", self.f.is_some())],
        };
        if let Some((field, _)) = needs.iter().find(|n| !n.1) {
            return Err(Error::Scenario(format!("{} needs `{field}`", self.kind.name())));
        }
        // resolve every function now so that bad expressions are input errors
        for spec in [&self.f, &self.phi, &self.psi, &self.d, &self.e].into_iter().flatten() {
            spec.resolve(false)?;
        }
        Ok(())
    }

    fn func(&self, spec: &Option<FuncSpec>, field: &str) -> Result<RealFunc> {
        spec.as_ref()
            .ok_or_else(|| Error::Scenario(format!("{} needs `{field}`", self.kind.name())))?
            .resolve(field != "e")
    }

    fn grid(&self) -> TGrid {
        self.grid.unwrap_or_default()
    }

    fn schedule(&self) -> XSchedule {
        self.schedule.unwrap_or_default()
    }

    fn flow_tol(&self) -> f64 {
        self.flow_tolerance.unwrap_or(1e-10)
    }

    /// First Bloom knot: 1, or twice the domain floor when that is higher.
    fn x1(&self, phi: &RealFunc) -> f64 {
        self.x1.unwrap_or_else(|| (2.0 * phi.domain().lo).max(1.0))
    }
}

fn bundle(s: &Scenario, verdict: Verdict, profile: Option<ConvergenceReport>) -> ReportBundle {
    ReportBundle {
        scenario: s.name.clone().unwrap_or_else(|| s.kind.name()),
        kind: s.kind.name(),
        verdict,
        extrapolated_limit: profile.as_ref().map(|p| p.extrapolated_limit),
        rho: s.rho,
        decay_exponent: profile.as_ref().and_then(|p| p.decay_exponent),
        tolerance: s.tolerance,
        profile,
        tables: Vec::new(),
        details: json!({}),
        notes: Vec::new(),
    }
}

/// Profile whose verdict is a plain bound: every row within `tol`.
fn bound_report(rows: Vec<ProfilePoint>, tol: f64) -> ConvergenceReport {
    let n = rows.len();
    let mut r = ConvergenceReport::from_rows(rows, n, tol);
    let ok = r.per_x.iter().all(|p| p.sup_deviation.is_finite() && p.sup_deviation <= tol);
    r.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    r.with_note("verdict is a bound over every row, not a convergence judgement")
}

fn worst(a: Verdict, b: Verdict) -> Verdict {
    use Verdict::*;
    match (a, b) {
        (Fail, _) | (_, Fail) => Fail,
        (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
        _ => Pass,
    }
}

fn limits_table(est: &brv::IndexEstimate) -> Table {
    let mut t = Table::new("limits", &["t", "k", "g", "target"]);
    for &(tt, k) in &est.k_samples {
        let target = est.model.target(est.rho, tt);
        t.push(vec![tt, k, k.exp(), target]);
    }
    t
}

pub fn run_scenario(s: &Scenario) -> Result<ReportBundle> {
    s.validate()?;
    use ScenarioKind::*;
    let tol = s.tolerance;
    let sched = s.schedule();
    match s.kind {
        CheckSn => {
            let phi = s.func(&s.phi, "phi")?;
            let v = sn_check::check_sn(&phi, &s.grid(), &sched, tol)?;
            Ok(bundle(s, v.report.verdict, Some(v.report)))
        }
        CheckSlow => {
            let phi = s.func(&s.phi, "phi")?;
            let psi = match &s.psi {
                Some(p) => p.resolve(true)?,
                None => phi.clone(),
            };
            let v = sn_check::check_phi_slow(&psi, &phi, &s.grid(), &sched, tol)?;
            // phi-slow for phi itself plus phi = o(x) should give self-neglect
            let little_o = sn_check::check_little_o(&phi, &sched, 10.0 * tol)?;
            let sn = sn_check::check_sn(&phi, &s.grid(), &sched, tol)?;
            let premise = s.psi.is_none() && v.passed() && little_o.passed();
            let mut b = bundle(s, v.report.verdict, Some(v.report));
            b.details = json!({
                "little_o_verdict": little_o.report.verdict,
                "little_o_tolerance": 10.0 * tol,
                "sn_verdict": sn.report.verdict,
                "slow_and_little_o_imply_sn": if premise { Some(sn.passed()) } else { None },
            });
            Ok(b)
        }
        EstimateIndex => {
            let f = s.func(&s.f, "f")?;
            let phi = s.func(&s.phi, "phi")?;
            let est = brv::estimate_index(&f, &phi, &s.grid(), &sched)?;
            let uct = brv::uct_profile(&f, &phi, est.rho, &s.grid(), &sched, tol);
            let cfe = if est.cfe_max_residual <= tol { Verdict::Pass } else { Verdict::Fail };
            let mut b = bundle(s, worst(cfe, uct.verdict), Some(uct));
            b.rho = Some(est.rho);
            b.details = json!({
                "fit_residual": est.fit_residual,
                "cfe_max_residual": est.cfe_max_residual,
            });
            b.tables.push(limits_table(&est));
            Ok(b)
        }
        Uct => {
            let f = s.func(&s.f, "f")?;
            let phi = s.func(&s.phi, "phi")?;
            let rho = s.rho.expect("validated");
            let r = brv::uct_profile(&f, &phi, rho, &s.grid(), &sched, tol);
            Ok(bundle(s, r.verdict, Some(r)))
        }
        Cocycle => {
            let phi = s.func(&s.phi, "phi")?;
            let field = match &s.f {
                Some(f) => RatioField::new(f.resolve(true)?, phi),
                None => RatioField::of_phi(phi),
            };
            let r = brv::cocycle_profile(&field, &s.grid(), &sched, tol);
            Ok(bundle(s, r.verdict, Some(r)))
        }
        Flow => {
            let phi = s.func(&s.phi, "phi")?;
            let x0 = s.x0.unwrap_or(1.0);
            let t_end = s.t_end.unwrap_or(1.0);
            let ftol = s.flow_tol();
            let tr = flow::integrate_flow(&phi, x0, t_end, ftol)?;
            let half = 0.5 * t_end;
            let residual = flow::embedding_residual(&phi, x0, half, half, ftol)?;
            let verdict = if residual <= tol { Verdict::Pass } else { Verdict::Fail };
            let mut b = bundle(s, verdict, None);
            let mut t = Table::new("trajectory", &["t", "u"]);
            for &(tt, u) in &tr.samples {
                t.push(vec![tt, u]);
            }
            b.tables.push(t);
            b.details = json!({
                "x0": x0,
                "t_end": t_end,
                "u_end": tr.end().1,
                "accepted": tr.accepted,
                "rejected": tr.rejected,
                "max_local_error": tr.max_local_error,
                "embedding_residual": residual,
            });
            Ok(b)
        }
        TimeMeasure => {
            let phi = s.func(&s.phi, "phi")?;
            let ftol = s.flow_tol();
            let mut t = Table::new("time", &["x", "tau", "preaction_time", "ratio", "reach_time"]);
            let mut rows = Vec::new();
            for x in sched.points() {
                let ts = flow::time_scales(&phi, x, ftol)?;
                let reach = flow::reach_time(&phi, 1.0, x, ftol)?;
                t.push(vec![x, ts.tau, ts.preaction_time, ts.ratio, reach]);
                rows.push(ProfilePoint { x, sup_deviation: (reach - ts.tau).abs(), n_skipped: 0 });
            }
            let r = bound_report(rows, tol).with_note(
                "tau_x and x/phi(x) are reported side by side; their ratio is not asserted to tend to 1",
            );
            let mut b = bundle(s, r.verdict, Some(r));
            b.tables.push(t);
            Ok(b)
        }
        Represent => {
            let phi = s.func(&s.phi, "phi")?;
            let rho = s.rho.unwrap_or(0.0);
            let d = match &s.d {
                Some(d) => d.resolve(true)?,
                None => parse_expr("1")?.positive(),
            };
            let e = match &s.e {
                Some(e) => e.resolve(false)?,
                None => parse_expr("0")?,
            };
            let rep = represent::GammaRepresentation::new(rho, phi.clone(), d, e.clone());
            let f = represent::build_gamma(&rep)?;
            let est = brv::estimate_index(&f, &phi, &s.grid(), &sched)?;
            let red = represent::verify_reduction(&e, &phi, &s.grid(), &sched, tol);
            let rho_tol = s.rho_tolerance.unwrap_or(2.0 * tol);
            let idx = if (est.rho - rho).abs() <= rho_tol { Verdict::Pass } else { Verdict::Fail };
            let mut b = bundle(s, worst(idx, red.verdict), Some(red));
            b.rho = Some(est.rho);
            b.details = json!({
                "rho_target": rho,
                "rho_tolerance": rho_tol,
                "fit_residual": est.fit_residual,
                "cfe_max_residual": est.cfe_max_residual,
                "representation": rep.to_json().ok(),
            });
            b.tables.push(limits_table(&est));
            Ok(b)
        }
        Decompose => {
            let f = s.func(&s.f, "f")?;
            let phi = s.func(&s.phi, "phi")?;
            let rho = match s.rho {
                Some(r) => r,
                None => brv::estimate_index(&f, &phi, &s.grid(), &sched)?.rho,
            };
            let dec = represent::decompose(&f, &phi, rho)?;
            let part = interp::bloom_partition(&phi, s.x1(&phi), sched.last(), s.max_knots.unwrap_or(1_000_000))?;
            let ex = represent::extract_components(&dec, &part)?;
            let rebuilt = represent::build_gamma(&ex.representation)?;
            let xs = sched.points();
            let upper = &xs[xs.len() / 2..];
            let rows = upper
                .iter()
                .map(|&x| {
                    let dev = (rebuilt.ln_eval(x)? - f.ln_eval(x)?).exp_m1();
                    Ok(ProfilePoint { x, sup_deviation: dev.abs(), n_skipped: 0 })
                })
                .collect::<Result<Vec<_>>>()?;
            let r = bound_report(rows, tol);
            let mut b = bundle(s, r.verdict, Some(r));
            b.rho = Some(rho);
            let mut c = Table::new("components", &["x", "c", "e"]);
            for (cs, es) in ex.c_samples.iter().zip(&ex.e_samples) {
                c.push(vec![cs.0, cs.1, es.1]);
            }
            b.tables.push(c);
            b.details = json!({
                "knots": part.knots.len(),
                "partition_reached_schedule": part.diverged,
                "c_last": ex.c_samples.last().map(|p| p.1),
            });
            if !part.diverged {
                b.notes.push("partition stops short of the schedule; components are held constant beyond it".into());
            }
            Ok(b)
        }
        Interpolate => {
            let phi = s.func(&s.phi, "phi")?;
            let psi = match &s.psi {
                Some(p) => p.resolve(true)?,
                None => phi.clone(),
            };
            let grid = s.grid();
            let horizon = sched.last() + grid.hi.abs().max(grid.lo.abs()) * phi.eval(sched.last())?;
            let part = interp::bloom_partition(&phi, s.x1(&phi), horizon, s.max_knots.unwrap_or(1_000_000))?;
            let ip = interp::interpolate_c1(&psi, &part)?;
            let (ratio, slope) = interp::smooth_rep_check(&psi, &ip, &phi, &grid, &sched, tol)?;
            let hat = ip.to_real_func(format!("interp({})", psi.label()));
            let sn = sn_check::check_sn(&hat, &grid, &sched, tol)?;
            let mut b = bundle(s, worst(ratio.verdict, slope.verdict), Some(ratio));
            let mut t = Table::new("knots", &["knot", "value", "slope_bound"]);
            for (i, (&k, &v)) in ip.knots.iter().zip(&ip.values).enumerate() {
                t.push(vec![k, v, ip.slope_bounds.get(i).copied().unwrap_or(0.0)]);
            }
            b.tables.push(t);
            b.details = json!({
                "knots": part.knots.len(),
                "diverged": part.diverged,
                "stagnated": part.stagnated,
                "measured_slope_constant": ip.measured_slope_constant(9),
                "log_slope_report": slope,
                "interpolant_sn_verdict": sn.report.verdict,
            });
            Ok(b)
        }
        CrosscheckProposition => {
            let f = s.func(&s.f, "f")?;
            let phi = s.func(&s.phi, "phi")?;
            let rho = match s.rho {
                Some(r) => r,
                None => brv::estimate_index(&f, &phi, &s.grid(), &sched)?.rho,
            };
            let uct = brv::uct_profile(&f, &phi, rho, &s.grid(), &sched, tol);
            let (consistent, sn_verdict) = if uct.verdict == Verdict::Pass && rho != 0.0 {
                let sn = sn_check::check_sn(&phi, &s.grid(), &sched, tol)?;
                (sn.passed(), Some(sn.report.verdict))
            } else {
                (true, None)
            };
            let mut b = bundle(s, if consistent { Verdict::Pass } else { Verdict::Fail }, Some(uct));
            b.rho = Some(rho);
            b.details = json!({
                "consistent": consistent,
                "vacuous": sn_verdict.is_none(),
                "sn_verdict": sn_verdict,
            });
            if sn_verdict.is_none() {
                b.notes.push("uniformity did not pass or rho = 0: the implication holds vacuously".into());
            }
            Ok(b)
        }
        KaramataMode => {
            let f = s.func(&s.f, "f")?;
            let phi = builtin_family(FamilySpec::IdentityX)?;
            let grid = s.grid.unwrap_or(TGrid { lo: -0.9, hi: 2.0, step: 0.1 });
            let est = brv::estimate_index_with(&f, &phi, &grid, &sched, IndexModel::Karamata)?;
            let uct = brv::uct_profile_over(&f, &phi, est.rho, &grid.points(), &sched, tol, IndexModel::Karamata);
            let cfe = if est.cfe_max_residual <= tol { Verdict::Pass } else { Verdict::Fail };
            let mut b = bundle(s, worst(cfe, uct.verdict), Some(uct));
            b.rho = Some(est.rho);
            b.details = json!({
                "fit_residual": est.fit_residual,
                "cfe_max_residual": est.cfe_max_residual,
                "target": "(1+t)^rho",
            });
            b.tables.push(limits_table(&est));
            Ok(b)
        }
    }
}
