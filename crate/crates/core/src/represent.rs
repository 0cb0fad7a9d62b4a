//! Representations `f(x) = d(x) exp(ρτ_x + ∫_0^x e(v) dv)` with
//! `τ_x = ∫_1^x du/φ(u)`: building `f_ρ`, assembling, decomposing a given `f`
//! and extracting `(d, e)` over a Bloom partition.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{scan_profile, ConvergenceReport, TGrid, XSchedule};
use crate::error::{Error, Result};
use crate::funcspace::{parse_expr, Evaluator, RealFunc};
use crate::interp::BloomPartition;
use crate::quadrature::{adaptive_simpson_rel, RunningIntegral};

/// Relative tolerance for the running integrals behind `τ` and `∫e`.
const RUNNING_REL: f64 = 1e-13;

/// Knots per least-squares window in [`extract_components`].
pub const SLOPE_WINDOW: usize = 5;
pub const MIN_KNOTS: usize = 10;

fn time_integral(phi: &RealFunc) -> RunningIntegral {
    let phi = phi.clone();
    RunningIntegral::new(1.0, RUNNING_REL, move |u| phi.reciprocal(u))
}

/// `∫_0^x e`, exact when `e` supports it.
enum EIntegral {
    Zero,
    Exact(RealFunc),
    Running(RunningIntegral),
}

impl EIntegral {
    fn new(e: &RealFunc) -> Self {
        if is_zero(e) {
            return EIntegral::Zero;
        }
        if e.exact_integral(0.0, 0.0).is_some() {
            return EIntegral::Exact(e.clone());
        }
        let e = e.clone();
        EIntegral::Running(RunningIntegral::new(0.0, RUNNING_REL, move |v| e.eval_closed(v)))
    }

    fn eval(&self, x: f64) -> Result<f64> {
        match self {
            EIntegral::Zero => Ok(0.0),
            EIntegral::Exact(e) => e.exact_integral(0.0, x).expect("checked at construction"),
            EIntegral::Running(r) => r.eval(x),
        }
    }
}

fn is_zero(e: &RealFunc) -> bool {
    matches!(e.expr(), Some(crate::funcspace::Expr::Const(c)) if c == 0.0)
}

struct FRho {
    rho: f64,
    phi: RealFunc,
    tau: RunningIntegral,
}

impl Evaluator for FRho {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.ln_value(x)?.exp())
    }

    fn ln_value(&self, x: f64) -> Result<f64> {
        if self.rho == 0.0 {
            return Ok(0.0);
        }
        Ok(self.rho * self.tau.eval(x)?)
    }

    fn derivative(&self, x: f64) -> Option<Result<f64>> {
        Some((|| Ok(self.value(x)? * self.rho / self.phi.eval(x)?))())
    }
}

/// `f_ρ(x) = exp(ρ ∫_1^x du/φ(u))`.
pub fn make_f_rho(rho: f64, phi: &RealFunc) -> Result<RealFunc> {
    if !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("rho must be finite, got {rho}")));
    }
    let ev = FRho { rho, phi: phi.clone(), tau: time_integral(phi) };
    Ok(RealFunc::derived(ev, format!("f_rho({rho:?}, {})", phi.label())).with_domain(phi.domain()).positive())
}

#[derive(Debug, Clone)]
pub struct GammaRepresentation {
    pub rho: f64,
    pub phi: RealFunc,
    pub d_component: RealFunc,
    pub e_component: RealFunc,
}

/// Serialized form: every function as an expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationJson {
    pub rho: f64,
    pub phi: String,
    pub d: String,
    pub e: String,
}

impl GammaRepresentation {
    pub fn new(rho: f64, phi: RealFunc, d_component: RealFunc, e_component: RealFunc) -> Self {
        GammaRepresentation { rho, phi, d_component, e_component }
    }

    pub fn to_json(&self) -> Result<RepresentationJson> {
        Ok(RepresentationJson {
            rho: self.rho,
            phi: self.phi.to_expr_string()?,
            d: self.d_component.to_expr_string()?,
            e: self.e_component.to_expr_string()?,
        })
    }

    pub fn from_json(j: &RepresentationJson) -> Result<Self> {
        Ok(GammaRepresentation {
            rho: j.rho,
            phi: parse_expr(&j.phi)?.positive(),
            d_component: parse_expr(&j.d)?.positive(),
            e_component: parse_expr(&j.e)?,
        })
    }
}

struct Assembled {
    rho: f64,
    d: RealFunc,
    tau: RunningIntegral,
    e_int: EIntegral,
}

impl Evaluator for Assembled {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.ln_value(x)?.exp())
    }

    fn ln_value(&self, x: f64) -> Result<f64> {
        let tau = if self.rho == 0.0 { 0.0 } else { self.rho * self.tau.eval(x)? };
        Ok(self.d.ln_eval(x)? + tau + self.e_int.eval(x)?)
    }
}

/// `d(x) exp(ρτ_x + ∫_0^x e)`.
pub fn build_gamma(rep: &GammaRepresentation) -> Result<RealFunc> {
    if !rep.rho.is_finite() {
        return Err(Error::InvalidParameter(format!("rho must be finite, got {}", rep.rho)));
    }
    let ev = Assembled {
        rho: rep.rho,
        d: rep.d_component.clone(),
        tau: time_integral(&rep.phi),
        e_int: EIntegral::new(&rep.e_component),
    };
    let domain = rep.phi.domain();
    let label = format!("gamma({:?}, {}, {}, {})", rep.rho, rep.phi.label(), rep.d_component.label(), rep.e_component.label());
    Ok(RealFunc::derived(ev, label).with_domain(domain).positive())
}

struct HTilde {
    f: RealFunc,
    rho: f64,
    tau: RunningIntegral,
}

impl Evaluator for HTilde {
    fn value(&self, x: f64) -> Result<f64> {
        let tau = if self.rho == 0.0 { 0.0 } else { self.rho * self.tau.eval(x)? };
        Ok(self.f.ln_eval(x)? - tau)
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub rho: f64,
    pub phi: RealFunc,
    pub f: RealFunc,
    /// `h̃(x) = log f(x) - ρτ_x`.
    pub h_tilde: RealFunc,
}

impl Decomposition {
    /// `exp(h̃)`, the candidate slowly varying factor.
    pub fn slow_part(&self) -> RealFunc {
        struct Exp(RealFunc);
        impl Evaluator for Exp {
            fn value(&self, x: f64) -> Result<f64> {
                Ok(self.0.eval(x)?.exp())
            }
            fn ln_value(&self, x: f64) -> Result<f64> {
                self.0.eval(x)
            }
        }
        RealFunc::derived(Exp(self.h_tilde.clone()), format!("exp({})", self.h_tilde.label()))
            .with_domain(self.h_tilde.domain())
            .positive()
    }

    /// `|log f(x) - h̃(x) - ρτ_x|` with `τ` by adaptive Simpson.
    pub fn reassembly_residual(&self, x: f64, tol: f64) -> Result<f64> {
        let tau = crate::flow::time_measure(&self.phi, x, tol)?;
        Ok((self.f.ln_eval(x)? - self.h_tilde.eval(x)? - self.rho * tau).abs())
    }
}

pub fn decompose(f: &RealFunc, phi: &RealFunc, rho: f64) -> Result<Decomposition> {
    if !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("rho must be finite, got {rho}")));
    }
    let ev = HTilde { f: f.clone(), rho, tau: time_integral(phi) };
    let h_tilde = RealFunc::derived(ev, format!("h~({})", f.label())).with_domain(f.domain());
    Ok(Decomposition { rho, phi: phi.clone(), f: f.clone(), h_tilde })
}

/// Piecewise-linear through `(xs, ys)`, constant outside the knots.
#[derive(Debug, Clone)]
struct PiecewiseLinear {
    xs: Arc<[f64]>,
    ys: Arc<[f64]>,
    /// `∫_0^{xs[i]}`.
    prefix: Arc<[f64]>,
    exp: bool,
}

impl PiecewiseLinear {
    fn new(xs: Vec<f64>, ys: Vec<f64>, exp: bool) -> Self {
        let mut prefix = Vec::with_capacity(xs.len());
        prefix.push(xs[0].max(0.0) * ys[0]);
        for i in 1..xs.len() {
            let p = prefix[i - 1] + 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
            prefix.push(p);
        }
        PiecewiseLinear { xs: xs.into(), ys: ys.into(), prefix: prefix.into(), exp }
    }

    fn linear(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
    }

    /// `∫_0^x` of the linear interpolant.
    fn antiderivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return x * self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.prefix[n - 1] + (x - self.xs[n - 1]) * self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let y = self.linear(x);
        self.prefix[i] + 0.5 * (x - self.xs[i]) * (self.ys[i] + y)
    }
}

impl Evaluator for PiecewiseLinear {
    fn value(&self, x: f64) -> Result<f64> {
        let v = self.linear(x);
        Ok(if self.exp { v.exp() } else { v })
    }

    fn ln_value(&self, x: f64) -> Result<f64> {
        if self.exp {
            Ok(self.linear(x))
        } else {
            Ok(self.linear(x).ln())
        }
    }

    fn integral(&self, a: f64, b: f64) -> Option<Result<f64>> {
        if self.exp {
            return None;
        }
        Some(Ok(self.antiderivative(b) - self.antiderivative(a)))
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub representation: GammaRepresentation,
    /// `(x_n, c(x_n))` with `c = h̃ - ∫_0^x e`.
    pub c_samples: Vec<(f64, f64)>,
    /// `(x_n, e(x_n))`: windowed slopes of `h̃`.
    pub e_samples: Vec<(f64, f64)>,
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

/// Split `h̃ = c + ∫_0^x e` over the positive knots of `partition`.
pub fn extract_components(dec: &Decomposition, partition: &BloomPartition) -> Result<Extraction> {
    let knots: Vec<f64> = partition.knots.iter().copied().filter(|&k| k > 0.0).collect();
    if knots.len() < MIN_KNOTS {
        return Err(Error::PartitionTooShort { needed: MIN_KNOTS, got: knots.len() });
    }
    let h: Vec<(f64, f64)> = knots.iter().map(|&x| Ok((x, dec.h_tilde.eval(x)?))).collect::<Result<_>>()?;
    let half = SLOPE_WINDOW / 2;
    let n = h.len();
    let e_samples: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half).min(n - SLOPE_WINDOW);
            (h[i].0, ls_slope(&h[lo..lo + SLOPE_WINDOW]))
        })
        .collect();
    // e on [0, x_1] is free: run it linearly into e(x_1) with the integral
    // that makes c vanish at the last knot, so d -> 1 at the top
    let x1 = h[0].0;
    let xs: Vec<f64> = std::iter::once(0.0).chain(knots.iter().copied()).collect();
    let mut ys: Vec<f64> = std::iter::once(0.0).chain(e_samples.iter().map(|p| p.1)).collect();
    let tail = PiecewiseLinear::new(xs.clone(), ys.clone(), false);
    let (xn, hn) = h[n - 1];
    let beyond = tail.antiderivative(xn) - tail.antiderivative(x1);
    ys[0] = 2.0 * (hn - beyond) / x1 - e_samples[0].1;
    let e = PiecewiseLinear::new(xs, ys, false);
    let c_samples: Vec<(f64, f64)> = h.iter().map(|&(x, v)| (x, v - e.antiderivative(x))).collect();
    let d = PiecewiseLinear::new(knots, c_samples.iter().map(|p| p.1).collect(), true);
    let label = dec.f.label();
    let representation = GammaRepresentation {
        rho: dec.rho,
        phi: dec.phi.clone(),
        d_component: RealFunc::derived(d, format!("d[{label}]")).positive(),
        e_component: RealFunc::derived(e, format!("e[{label}]")),
    };
    Ok(Extraction { representation, c_samples, e_samples })
}

/// Sup over `t ∈ K` of `|∫_x^{x+tφ(x)} e|` along the schedule, target 0.
pub fn verify_reduction(e: &RealFunc, phi: &RealFunc, grid: &TGrid, sched: &XSchedule, tol: f64) -> ConvergenceReport {
    scan_profile(&grid.points(), sched, tol, |&t, x| {
        let y = x + t * phi.eval(x)?;
        match e.exact_integral(x, y) {
            Some(r) => r,
            None => adaptive_simpson_rel(|v| e.eval_closed(v), x, y, 1e-10, 1e-300),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::Verdict;
    use crate::funcspace::{builtin_family, FamilySpec};
    use crate::interp::bloom_partition;
    use std::f64::consts::E;

    fn one() -> RealFunc {
        builtin_family(FamilySpec::ConstC { c: 1.0 }).unwrap()
    }
    fn root() -> RealFunc {
        builtin_family(FamilySpec::PowerAlpha { alpha: 0.5 }).unwrap()
    }
    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn f_rho_examples() {
        let f = make_f_rho(0.0, &root()).unwrap();
        assert_eq!(f.eval(123.0).unwrap(), 1.0);
        let f = make_f_rho(1.0, &one()).unwrap();
        assert_eq!(f.eval(1.0).unwrap(), 1.0);
        assert!(rel(f.eval(2.0).unwrap(), E) < 1e-13);
        let f = make_f_rho(1.0, &root()).unwrap();
        assert!(rel(f.eval(4.0).unwrap(), E * E) < 1e-12);
        let id = builtin_family(FamilySpec::IdentityX).unwrap();
        let f = make_f_rho(0.5, &id).unwrap();
        assert!(rel(f.eval(1e6).unwrap(), 1e3) < 1e-11);
        // derivative f * rho / phi
        let f = make_f_rho(2.0, &root()).unwrap();
        assert!(rel(f.derivative(9.0).unwrap(), (8.0f64).exp() * 2.0 / 3.0) < 1e-12);
        // x / log x starts on the pole at u = 1
        let xl = builtin_family(FamilySpec::XOverLog).unwrap();
        let f = make_f_rho(1.0, &xl).unwrap();
        // tau = (log x)^2 / 2
        assert!((f.ln_eval(E * E).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn build_gamma_examples() {
        let zero = parse_expr("0").unwrap();
        let unit = parse_expr("1").unwrap().positive();
        let f = build_gamma(&GammaRepresentation::new(1.0, one(), unit.clone(), zero.clone())).unwrap();
        assert!(rel(f.eval(3.0).unwrap(), E * E) < 1e-13);
        let d = parse_expr("1+1/x").unwrap().positive();
        let f = build_gamma(&GammaRepresentation::new(0.0, root(), d, zero.clone())).unwrap();
        assert!(rel(f.eval(4.0).unwrap(), 1.25) < 1e-15);
        let e = parse_expr("1/(1+x)").unwrap();
        let f = build_gamma(&GammaRepresentation::new(1.0, root(), unit.clone(), e)).unwrap();
        assert!(rel(f.eval(4.0).unwrap(), 5.0 * E * E) < 1e-12);
        let f = build_gamma(&GammaRepresentation::new(0.0, root(), unit, zero)).unwrap();
        for x in [0.5, 1.0, 1e3, 1e9] {
            assert_eq!(f.eval(x).unwrap(), 1.0);
        }
    }

    #[test]
    fn json_round_trip() {
        let rep = GammaRepresentation::new(
            1.0,
            root(),
            parse_expr("1+1/x").unwrap().positive(),
            parse_expr("1/(1+x)").unwrap(),
        );
        let j = rep.to_json().unwrap();
        let text = serde_json::to_string(&j).unwrap();
        let back: RepresentationJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back, j);
        let a = build_gamma(&rep).unwrap();
        let b = build_gamma(&GammaRepresentation::from_json(&back).unwrap()).unwrap();
        assert_eq!(a.ln_eval(77.0).unwrap(), b.ln_eval(77.0).unwrap());
    }

    #[test]
    fn decompose_examples() {
        let f = make_f_rho(2.0, &root()).unwrap();
        let dec = decompose(&f, &root(), 2.0).unwrap();
        for x in [2.0, 100.0, 1e5] {
            assert!(dec.h_tilde.eval(x).unwrap().abs() < 1e-9);
        }
        let g = f.product(&parse_expr("1+1/x").unwrap().positive());
        let dec = decompose(&g, &root(), 2.0).unwrap();
        for x in [2.0, 100.0, 1e5] {
            assert!((dec.h_tilde.eval(x).unwrap() - (1.0 + 1.0 / x).ln()).abs() < 1e-9);
            assert!(dec.reassembly_residual(x, 1e-10).unwrap() < 1e-8);
        }
        let dec = decompose(&root(), &root(), 0.0).unwrap();
        assert_eq!(dec.h_tilde.eval(9.0).unwrap(), 9f64.sqrt().ln());
    }

    #[test]
    fn extract_examples() {
        let part = bloom_partition(&one(), 1.0, 1e3, 2000).unwrap();
        let unit = parse_expr("1").unwrap().positive();
        let dec = decompose(&unit, &one(), 0.0).unwrap();
        let ex = extract_components(&dec, &part).unwrap();
        assert!(ex.e_samples.iter().all(|p| p.1 == 0.0));
        assert!(ex.c_samples.iter().all(|p| p.1 == 0.0));
        assert_eq!(ex.representation.d_component.eval(50.5).unwrap(), 1.0);

        let slow = parse_expr("1+1/x").unwrap().positive();
        let ex = extract_components(&decompose(&slow, &one(), 0.0).unwrap(), &part).unwrap();
        assert!(ex.e_samples.iter().all(|&(x, e)| e.abs() <= 2.0 / x));
        let tail = ex.c_samples.last().unwrap();
        assert!(tail.1.abs() < 1e-12);
        assert!(ex.c_samples.iter().filter(|p| p.0 >= 100.0).all(|p| p.1.abs() < 1e-2));
        assert!((ex.representation.d_component.eval(tail.0).unwrap() - 1.0).abs() < 1e-2);

        let lg = parse_expr("exp(log(1+x))").unwrap().positive();
        let ex = extract_components(&decompose(&lg, &one(), 0.0).unwrap(), &part).unwrap();
        for &(x, e) in ex.e_samples.iter().filter(|p| p.0 >= 100.0) {
            assert!(rel(e, 1.0 / (1.0 + x)) < 1e-2, "x={x} e={e}");
        }

        let short = bloom_partition(&one(), 1.0, 5.0, 100).unwrap();
        assert!(matches!(extract_components(&dec, &short), Err(Error::PartitionTooShort { .. })));
    }

    #[test]
    fn reduction_examples() {
        let sched = XSchedule::default();
        let k = TGrid::default();
        let r = verify_reduction(&parse_expr("0").unwrap(), &root(), &k, &sched, 1e-2);
        assert!(r.per_x.iter().all(|p| p.sup_deviation == 0.0));
        assert_eq!(r.verdict, Verdict::Pass);
        let r = verify_reduction(&parse_expr("1/(1+x)").unwrap(), &root(), &k, &sched, 1e-2);
        for p in &r.per_x {
            let x = p.x;
            let oracle = ((1.0 + x - 2.0 * x.sqrt()) / (1.0 + x)).ln().abs();
            assert!(rel(p.sup_deviation, oracle) < 1e-8);
        }
        assert_eq!(r.verdict, Verdict::Pass);
        let r = verify_reduction(&parse_expr("1").unwrap(), &one(), &k, &sched, 1e-2);
        assert!(r.per_x.iter().all(|p| (p.sup_deviation - 2.0).abs() < 1e-12));
        assert_eq!(r.verdict, Verdict::Fail);
    }
}
