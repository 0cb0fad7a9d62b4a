use serde::{Deserialize, Serialize};

use super::{Domain, Expr, RealFunc};
use crate::error::{Error, Result};

/// Built-in auxiliary and regularly varying families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `c`, with `c > 0`.
    ConstC { c: f64 },
    /// `x^alpha`, with `0 <= alpha < 1`.
    PowerAlpha { alpha: f64 },
    /// `x / log x` on `x > 1`.
    XOverLog,
    /// `x`: the Karamata case.
    IdentityX,
    /// `exp(2 rho (sqrt(x) - 1))`, the closed form of `f_rho` for `phi = sqrt(x)`.
    GammaRhoBuiltin { rho: f64 },
}

impl FamilySpec {
    pub const NAMES: [(&'static str, &'static str); 5] = [
        ("const_c", "c > 0: constant c"),
        ("power_alpha", "0 <= alpha < 1: x^alpha"),
        ("x_over_log", "x/log(x) on x > 1"),
        ("identity_x", "x (Karamata case)"),
        ("gamma_rho_builtin", "rho real: exp(2*rho*(sqrt(x)-1))"),
    ];

    /// Whether the family is a self-neglecting candidate.
    pub fn is_sn_candidate(&self) -> bool {
        match *self {
            FamilySpec::ConstC { .. } | FamilySpec::XOverLog => true,
            FamilySpec::PowerAlpha { alpha } => alpha < 1.0,
            FamilySpec::IdentityX | FamilySpec::GammaRhoBuiltin { .. } => false,
        }
    }

    fn label(&self) -> String {
        match *self {
            FamilySpec::ConstC { c } => format!("const_c({c})"),
            FamilySpec::PowerAlpha { alpha } => format!("power_alpha({alpha})"),
            FamilySpec::XOverLog => "x_over_log".into(),
            FamilySpec::IdentityX => "identity_x".into(),
            FamilySpec::GammaRhoBuiltin { rho } => format!("gamma_rho_builtin({rho})"),
        }
    }
}

pub fn builtin_family(spec: FamilySpec) -> Result<RealFunc> {
    use Expr::*;
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    let x = || Box::new(X);
    let (expr, domain) = match spec {
        FamilySpec::ConstC { c } => {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("const_c needs c > 0, got {c}"));
            }
            (Const(c), Domain::POSITIVE)
        }
        FamilySpec::PowerAlpha { alpha } => {
            if !(0.0..1.0).contains(&alpha) {
                return bad(format!("power_alpha needs 0 <= alpha < 1, got {alpha}"));
            }
            (Pow(x(), Box::new(Const(alpha))), Domain::POSITIVE)
        }
        FamilySpec::XOverLog => (
            Div(x(), Box::new(Call(super::Func::Log, x()))),
            Domain { lo: 1.0, hi: f64::INFINITY },
        ),
        FamilySpec::IdentityX => (X, Domain::POSITIVE),
        FamilySpec::GammaRhoBuiltin { rho } => {
            if !rho.is_finite() {
                return bad(format!("gamma_rho_builtin needs finite rho, got {rho}"));
            }
            let inner = Sub(Box::new(Call(super::Func::Sqrt, x())), Box::new(Const(1.0)));
            let arg = Mul(Box::new(Const(2.0 * rho)), Box::new(inner));
            (Call(super::Func::Exp, Box::new(arg)), Domain::POSITIVE)
        }
    };
    Ok(RealFunc::from_expr(expr, spec.label()).with_domain(domain).positive())
}
