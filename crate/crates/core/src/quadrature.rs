//! Adaptive Simpson quadrature and a memoized running integral.

use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;
const MIN_DEPTH: u32 = 4;

/// `∫_a^b f` by adaptive Simpson with absolute tolerance `tol`.
///
/// The recursion always visits the left half before the right half, so the
/// result is bit-reproducible. `b < a` gives the signed integral.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("quadrature tolerance must be positive, got {tol}")));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = recurse(&f, a, b, fa, fm, fb, whole, tol, 0)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature { a, b, tol })
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH || m <= a || m >= b {
        return Err(Error::Quadrature { a, b, tol });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Adaptive Simpson with tolerance `rel * |coarse estimate| + abs`.
pub fn adaptive_simpson_rel<F>(f: F, a: f64, b: f64, rel: f64, abs: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let n = 8;
    let h = (b - a) / n as f64;
    let mut coarse = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        coarse += w * f(a + i as f64 * h)?.abs();
    }
    coarse *= h.abs();
    adaptive_simpson(f, a, b, rel * coarse + abs)
}

type Integrand = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// `x ↦ ∫_base^x g`, with the integral up to the anchors
/// `base + 2^k - 1` memoized. A query integrates only from the nearest anchor
/// below `x`, and nearby queries share all anchor terms, which keeps
/// differences `I(y) - I(x)` accurate far from `base`.
pub struct RunningIntegral {
    base: f64,
    integrand: Integrand,
    rel: f64,
    anchors: RwLock<Vec<f64>>,
}

impl RunningIntegral {
    pub fn new(base: f64, rel: f64, integrand: impl Fn(f64) -> Result<f64> + Send + Sync + 'static) -> Self {
        RunningIntegral { base, integrand: Arc::new(integrand), rel, anchors: RwLock::new(vec![0.0]) }
    }

    fn anchor(&self, k: usize) -> f64 {
        self.base + (2f64.powi(k as i32) - 1.0)
    }

    fn segment(&self, a: f64, b: f64) -> Result<f64> {
        let g = &self.integrand;
        adaptive_simpson_rel(|u| g(u), a, b, self.rel, 1e-300)
    }

    /// Cumulative integral at anchor `k`, extending the memo as needed.
    fn at_anchor(&self, k: usize) -> Result<f64> {
        if let Some(v) = self.anchors.read().expect("anchor memo poisoned").get(k) {
            return Ok(*v);
        }
        let mut memo = self.anchors.write().expect("anchor memo poisoned");
        while memo.len() <= k {
            let j = memo.len() - 1;
            let next = memo[j] + self.segment(self.anchor(j), self.anchor(j + 1))?;
            memo.push(next);
        }
        Ok(memo[k])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x == self.base {
            return Ok(0.0);
        }
        if x < self.base {
            return self.segment(x, self.base).map(|v| -v);
        }
        let k = (x - self.base + 1.0).log2().floor().max(0.0) as usize;
        // guard against log2 rounding at exact powers of two
        let k = if self.anchor(k) > x { k - 1 } else { k };
        let k = if self.anchor(k + 1) <= x { k + 1 } else { k };
        let start = self.anchor(k);
        Ok(self.at_anchor(k)? + self.segment(start, x)?)
    }
}
