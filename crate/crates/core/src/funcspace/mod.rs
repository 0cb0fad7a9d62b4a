//! Evaluatable real functions on the positive half-line.
//!
//! A [`RealFunc`] is either a parsed [`Expr`] or a derived function backed by
//! an [`Evaluator`] (quadrature, interpolation, products, ...). Every function
//! exposes two evaluation paths: [`RealFunc::eval`] for the value and
//! [`RealFunc::ln_eval`] for its natural log. Regularly varying functions such
//! as `exp(2*(sqrt(x)-1))` leave the f64 range long before the asymptotic
//! regime, so everything that only needs ratios works through `ln_eval`.

mod expr;
mod family;

use std::fmt;
use std::sync::Arc;

pub use expr::{Expr, Func, ParseError};
pub use family::{builtin_family, FamilySpec};

use crate::error::{Error, Result};
use crate::quadrature;

/// Open-below interval `(lo, hi]`; `hi = +inf` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const POSITIVE: Domain = Domain { lo: 0.0, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidParameter(format!("empty domain ({lo}, {hi}]")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi && x.is_finite()
    }

    /// Closed-interval membership, used by quadrature when an endpoint sits
    /// exactly on the domain floor.
    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi && x.is_finite()
    }
}

/// Backing implementation for derived functions.
pub trait Evaluator: Send + Sync {
    fn value(&self, x: f64) -> Result<f64>;

    fn ln_value(&self, x: f64) -> Result<f64> {
        Ok(self.value(x)?.ln())
    }

    /// Exact derivative, when the construction provides one.
    fn derivative(&self, _x: f64) -> Option<Result<f64>> {
        None
    }

    /// Exact `∫_a^b`, when the construction provides one.
    fn integral(&self, _a: f64, _b: f64) -> Option<Result<f64>> {
        None
    }

    fn expr(&self) -> Option<Expr> {
        None
    }
}

#[derive(Clone)]
enum Body {
    Expr(Arc<Expr>),
    Derived(Arc<dyn Evaluator>),
}

#[derive(Clone)]
pub struct RealFunc {
    body: Body,
    domain: Domain,
    label: String,
    positive: bool,
}

impl fmt::Debug for RealFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealFunc")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("positive", &self.positive)
            .finish()
    }
}

pub fn parse_expr(text: &str) -> Result<RealFunc> {
    let e = Expr::parse(text)?;
    Ok(RealFunc::from_expr(e, text.trim()))
}

impl RealFunc {
    pub fn from_expr(expr: Expr, label: impl Into<String>) -> Self {
        RealFunc {
            body: Body::Expr(Arc::new(expr)),
            domain: Domain::POSITIVE,
            label: label.into(),
            positive: false,
        }
    }

    pub fn derived(evaluator: impl Evaluator + 'static, label: impl Into<String>) -> Self {
        RealFunc {
            body: Body::Derived(Arc::new(evaluator)),
            domain: Domain::POSITIVE,
            label: label.into(),
            positive: false,
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Flag the function as strictly positive; evaluations returning `<= 0`
    /// become errors.
    pub fn positive(mut self) -> Self {
        self.positive = true;
        self
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn expr(&self) -> Option<Expr> {
        match &self.body {
            Body::Expr(e) => Some((**e).clone()),
            Body::Derived(d) => d.expr(),
        }
    }

    /// Expression text that re-parses to an equivalent function.
    pub fn to_expr_string(&self) -> Result<String> {
        self.expr()
            .map(|e| e.to_string())
            .ok_or_else(|| Error::NotExpressible(self.label.clone()))
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(self.domain_error(x))
        }
    }

    fn domain_error(&self, x: f64) -> Error {
        Error::Domain { label: self.label.clone(), x, lo: self.domain.lo, hi: self.domain.hi }
    }

    fn finish(&self, x: f64, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::NonFinite { label: self.label.clone(), x });
        }
        if self.positive && v <= 0.0 {
            return Err(Error::NotPositive { label: self.label.clone(), x, value: v });
        }
        Ok(v)
    }

    fn raw(&self, x: f64) -> Result<f64> {
        match &self.body {
            Body::Expr(e) => Ok(e.eval(x)),
            Body::Derived(d) => d.value(x),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let v = self.raw(x)?;
        self.finish(x, v)
    }

    /// `ln f(x)`; requires `f(x) > 0`.
    pub fn ln_eval(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let v = match &self.body {
            Body::Expr(e) => e.ln_eval(x),
            Body::Derived(d) => d.ln_value(x)?,
        };
        if v.is_nan() {
            let raw = self.raw(x)?;
            return Err(Error::NotPositive { label: self.label.clone(), x, value: raw });
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { label: self.label.clone(), x });
        }
        Ok(v)
    }

    /// `1/f(u)` on the closed domain, with `f(u) = +inf` mapped to 0.
    ///
    /// This is the integrand of the time measure; `x/log(x)` at `u = 1` is
    /// the motivating case.
    pub(crate) fn reciprocal(&self, u: f64) -> Result<f64> {
        if !self.domain.contains_closed(u) {
            return Err(self.domain_error(u));
        }
        let v = self.raw(u)?;
        if v == f64::INFINITY {
            return Ok(0.0);
        }
        let v = self.finish(u, v)?;
        if v == 0.0 {
            return Err(Error::NonFinite { label: self.label.clone(), x: u });
        }
        Ok(1.0 / v)
    }

    /// Derivative at an interior point: symbolic for expressions, exact for
    /// derived functions that provide it, otherwise a central difference with
    /// step `cbrt(eps) * max(1, |x|)`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let v = match &self.body {
            Body::Expr(e) => e.diff().eval(x),
            Body::Derived(d) => match d.derivative(x) {
                Some(r) => r?,
                None => return self.numeric_derivative(x),
            },
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { label: format!("d/dx {}", self.label), x })
        }
    }

    pub fn numeric_derivative(&self, x: f64) -> Result<f64> {
        let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
        let (lo, hi) = (x - h, x + h);
        if !self.domain.contains(lo) || !self.domain.contains(hi) {
            return Err(self.domain_error(if self.domain.contains(lo) { hi } else { lo }));
        }
        let d = (self.eval(hi)? - self.eval(lo)?) / (hi - lo);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NonFinite { label: format!("d/dx {}", self.label), x })
        }
    }

    pub(crate) fn exact_integral(&self, a: f64, b: f64) -> Option<Result<f64>> {
        match &self.body {
            Body::Derived(d) => d.integral(a, b),
            Body::Expr(_) => None,
        }
    }

    /// `∫_a^b f`, exact when the construction supports it, otherwise adaptive
    /// Simpson to absolute tolerance `tol`.
    pub fn integral(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        if let Body::Derived(d) = &self.body {
            if let Some(r) = d.integral(a, b) {
                return r;
            }
        }
        if a == b {
            return Ok(0.0);
        }
        for p in [a, b] {
            if !self.domain.contains_closed(p) {
                return Err(self.domain_error(p));
            }
        }
        quadrature::adaptive_simpson(|u| self.eval_closed(u), a, b, tol)
    }

    pub(crate) fn eval_closed(&self, u: f64) -> Result<f64> {
        if !self.domain.contains_closed(u) {
            return Err(self.domain_error(u));
        }
        let v = self.raw(u)?;
        self.finish(u, v)
    }

    /// Pointwise product; the log of the result is the sum of the logs.
    pub fn product(&self, other: &RealFunc) -> RealFunc {
        let label = format!("({})*({})", self.label, other.label);
        let domain = Domain { lo: self.domain.lo.max(other.domain.lo), hi: self.domain.hi.min(other.domain.hi) };
        let expr = match (self.expr(), other.expr()) {
            (Some(a), Some(b)) => Some(Expr::Mul(Box::new(a), Box::new(b))),
            _ => None,
        };
        let mut out = RealFunc::derived(Product { a: self.clone(), b: other.clone(), expr }, label)
            .with_domain(domain);
        out.positive = self.positive && other.positive;
        out
    }

    /// `c * f` for a constant `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<RealFunc> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {c}")));
        }
        let k = RealFunc::from_expr(Expr::Const(c), format!("{c:?}")).positive();
        Ok(k.product(self).with_label(format!("{c:?}*({})", self.label)))
    }
}

struct Product {
    a: RealFunc,
    b: RealFunc,
    expr: Option<Expr>,
}

impl Evaluator for Product {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.a.eval(x)? * self.b.eval(x)?)
    }

    fn ln_value(&self, x: f64) -> Result<f64> {
        Ok(self.a.ln_eval(x)? + self.b.ln_eval(x)?)
    }

    fn derivative(&self, x: f64) -> Option<Result<f64>> {
        Some((|| Ok(self.a.derivative(x)? * self.b.eval(x)? + self.a.eval(x)? * self.b.derivative(x)?))())
    }

    fn expr(&self) -> Option<Expr> {
        self.expr.clone()
    }
}
