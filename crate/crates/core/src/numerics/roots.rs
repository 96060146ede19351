//! Bracketed scalar root finding (Brent's method).

use crate::error::{CapminError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrentOptions {
    /// Relative tolerance on the abscissa.
    pub xtol_rel: f64,
    /// Absolute tolerance on the abscissa.
    pub xtol_abs: f64,
    /// Stop as soon as `|f(x)| <= ftol`.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for BrentOptions {
    fn default() -> Self {
        Self {
            xtol_rel: 4.0 * f64::EPSILON,
            xtol_abs: 0.0,
            ftol: 0.0,
            max_iter: 200,
        }
    }
}

impl BrentOptions {
    pub fn ftol(mut self, ftol: f64) -> Self {
        self.ftol = ftol;
        self
    }

    pub fn xtol_rel(mut self, xtol_rel: f64) -> Self {
        self.xtol_rel = xtol_rel;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Finds a zero of `f` in `[a, b]` given `f(a)` and `f(b)` of opposite sign
/// (or one of them zero). `f` may fail; its error is propagated.
pub fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, opts: BrentOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, iterations: 0 });
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(CapminError::RootFinding(format!(
            "[{a:e}, {b:e}] does not bracket a root (f = {fa:e}, {fb:e})"
        )));
    }

    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for iter in 1..=opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * opts.xtol_rel * b.abs() + 0.5 * opts.xtol_abs;
        let m = 0.5 * (c - b);
        if fb.abs() <= opts.ftol || m.abs() <= tol || fb == 0.0 {
            return Ok(Root { x: b, fx: fb, iterations: iter });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(CapminError::RootFinding(format!(
        "Brent iteration did not converge in {} steps (x = {b:e}, f = {fb:e})",
        opts.max_iter
    )))
}
