//! Wetting potentials `Q` and the derived weighted potential `R(s) = Q(s)/s`.
//!
//! Four closed-form families are supported together with user callbacks:
//!
//! ```text
//! model_a          Q(s) = A s^(1-m) - B s^(1-n) - S                 1 < n < m < 3
//! model_b          Q(s) = A|B| s / (|B| s^m + A s^n) - S            B < 0, m < n, m < 3
//! *_gravity        Q(s) = Q_a(s) or Q_b(s) + D s^2 / 2              D > 0
//! ```
//!
//! `model_b` is restricted to its convex range
//! `1 + 2m + m^2 + 2n - 6mn + n^2 <= 0`. For every family `Q(s) = 0` when
//! `s <= 0`, and the derived quantities are
//!
//! ```text
//! R(s)  = Q(s)/s
//! R'(s) = (Q'(s) - R(s))/s
//! G(s)  = Q(s) - s Q'(s) = -s^2 R'(s)
//! ```

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CapminError, Result};
use crate::extended::Extended;

/// Arguments outside `[MIN_ARG, MAX_ARG]` are rejected instead of overflowing.
pub const MIN_ARG: f64 = 1e-300;
pub const MAX_ARG: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ModelA,
    ModelB,
    ModelAGravity,
    ModelBGravity,
    Custom,
}

impl Family {
    pub fn has_gravity(self) -> bool {
        matches!(self, Family::ModelAGravity | Family::ModelBGravity)
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Large-height law `Q(s) ~ K s^(1-p)` used by transition profiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailLaw {
    pub p: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

/// Callbacks for a user-supplied potential on `(0, inf)`.
///
/// The short-range constants `(A, m)` and the limit `-S` of `Q` at infinity
/// are declared on the owning [`PotentialSpec`]; they are never inferred from
/// samples. The caller is responsible for `R'` having no zeros accumulating at
/// `0` or `+inf`.
#[derive(Clone)]
pub struct CustomPotential {
    pub q: ScalarFn,
    pub dq: ScalarFn,
    /// Falls back to central differences of `dq` with relative step 1e-6.
    pub d2q: Option<ScalarFn>,
    /// Needed only for transition-profile predictions.
    pub tail: Option<TailLaw>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("d2q", &self.d2q.is_some())
            .field("tail", &self.tail)
            .finish_non_exhaustive()
    }
}

/// Parameters of a potential. JSON form:
/// `{"family":"model_a","A":1.0,"B":0.0,"S":-2.5,"D":0.0,"m":2.5,"n":2.0}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub family: Family,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B", default)]
    pub b: f64,
    #[serde(rename = "S", default)]
    pub s: f64,
    #[serde(rename = "D", default)]
    pub d: f64,
    pub m: f64,
    #[serde(default)]
    pub n: f64,
    #[serde(skip)]
    pub custom: Option<CustomPotential>,
}

impl PotentialSpec {
    pub fn model_a(a: f64, b: f64, s: f64, m: f64, n: f64) -> Self {
        Self::closed_form(Family::ModelA, a, b, s, 0.0, m, n)
    }

    pub fn model_b(a: f64, b: f64, s: f64, m: f64, n: f64) -> Self {
        Self::closed_form(Family::ModelB, a, b, s, 0.0, m, n)
    }

    pub fn model_a_gravity(a: f64, b: f64, s: f64, d: f64, m: f64, n: f64) -> Self {
        Self::closed_form(Family::ModelAGravity, a, b, s, d, m, n)
    }

    pub fn model_b_gravity(a: f64, b: f64, s: f64, d: f64, m: f64, n: f64) -> Self {
        Self::closed_form(Family::ModelBGravity, a, b, s, d, m, n)
    }

    /// A custom potential with declared short-range law `A s^(1-m)` and
    /// limit `-s_coef` at infinity.
    pub fn custom(a: f64, m: f64, s_coef: f64, callbacks: CustomPotential) -> Self {
        Self {
            family: Family::Custom,
            a,
            b: 0.0,
            s: s_coef,
            d: 0.0,
            m,
            n: 0.0,
            custom: Some(callbacks),
        }
    }

    fn closed_form(family: Family, a: f64, b: f64, s: f64, d: f64, m: f64, n: f64) -> Self {
        Self {
            family,
            a,
            b,
            s,
            d,
            m,
            n,
            custom: None,
        }
    }

    pub fn validate(&self) -> Result<Potential> {
        validate(self)
    }
}

/// Left-hand side of the convexity constraint for `model_b`; admissible when `<= 0`.
pub fn model_b_convexity(m: f64, n: f64) -> f64 {
    1.0 + 2.0 * m + m * m + 2.0 * n - 6.0 * m * n + n * n
}

/// Checks the family invariants and returns an evaluator.
pub fn validate(spec: &PotentialSpec) -> Result<Potential> {
    let p = |msg: String| Err(CapminError::Param(msg));
    for (name, v) in [("A", spec.a), ("B", spec.b), ("S", spec.s), ("D", spec.d), ("m", spec.m), ("n", spec.n)] {
        if !v.is_finite() {
            return p(format!("{name} must be finite, got {v}"));
        }
    }
    if spec.m >= 3.0 {
        return Err(CapminError::NoMinimizer(format!(
            "short-range exponent m = {} >= 3 makes the energy infinite for every admissible profile",
            spec.m
        )));
    }
    if spec.m <= 1.0 {
        return p(format!("short-range exponent m must exceed 1, got {}", spec.m));
    }
    if spec.a <= 0.0 {
        return p(format!("A must be positive, got {}", spec.a));
    }
    match spec.family {
        Family::ModelA | Family::ModelAGravity => {
            if !(1.0 < spec.n && spec.n < spec.m) {
                return p(format!("model_a requires 1 < n < m, got n = {}, m = {}", spec.n, spec.m));
            }
        }
        Family::ModelB | Family::ModelBGravity => {
            if spec.b >= 0.0 {
                return p(format!("model_b requires B < 0, got {}", spec.b));
            }
            if spec.n <= spec.m {
                return p(format!("model_b requires m < n, got m = {}, n = {}", spec.m, spec.n));
            }
            let c = model_b_convexity(spec.m, spec.n);
            if c > 0.0 {
                return p(format!(
                    "model_b convexity constraint 1+2m+m^2+2n-6mn+n^2 <= 0 violated ({c})"
                ));
            }
        }
        Family::Custom => {
            if spec.custom.is_none() {
                return p("custom family requires callbacks (library use only)".into());
            }
        }
    }
    if spec.family.has_gravity() {
        if spec.d <= 0.0 {
            return p(format!("gravity families require D > 0, got {}", spec.d));
        }
    } else if spec.d != 0.0 {
        return p(format!("D must be 0 without gravity, got {}", spec.d));
    }
    Ok(Potential { spec: spec.clone() })
}

/// Pointwise values of the potential and its derived quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialValues {
    pub q: f64,
    pub qp: f64,
    pub qpp: f64,
    pub r: f64,
    pub rp: f64,
    pub g: f64,
}

/// `(base + h)^e - base^e` without cancellation for small `h`.
#[inline]
fn pow_increment(base: f64, h: f64, e: f64) -> f64 {
    base.powf(e) * (e * (h / base).ln_1p()).exp_m1()
}

/// `(1 + x)^e - 1 - e x`, by its binomial series when `|x|` is small.
fn pow_remainder(x: f64, e: f64) -> f64 {
    if x.abs() > 0.25 {
        return (e * x.ln_1p()).exp_m1() - e * x;
    }
    let mut coef = 0.5 * e * (e - 1.0);
    let mut term = coef * x * x;
    let mut sum = term;
    for k in 2..80 {
        coef *= (e - k as f64) / (k + 1) as f64;
        term = coef * x.powi(k + 1);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// A validated potential. Cheap to clone and safe to share across threads.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
}

impl Potential {
    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn m(&self) -> f64 {
        self.spec.m
    }

    pub fn a(&self) -> f64 {
        self.spec.a
    }

    /// Checked evaluation at `s > 0`.
    pub fn eval(&self, s: f64) -> Result<PotentialValues> {
        if s.is_nan() || s <= 0.0 {
            return Err(CapminError::Domain(format!("R is undefined at s = {s}")));
        }
        if !(MIN_ARG..=MAX_ARG).contains(&s) {
            return Err(CapminError::Domain(format!("s = {s:e} outside [1e-300, 1e300]")));
        }
        let v = self.values(s);
        if [v.q, v.qp, v.qpp, v.r, v.rp, v.g].iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(CapminError::Domain(format!("evaluation overflowed at s = {s:e}")))
        }
    }

    /// Unchecked evaluation at `s > 0`.
    pub fn values(&self, s: f64) -> PotentialValues {
        let sp = &self.spec;
        match sp.family {
            Family::ModelA | Family::ModelAGravity => {
                let (a, b, m, n, d) = (sp.a, sp.b, sp.m, sp.n, sp.d);
                let sm = s.powf(-m);
                let sn = s.powf(-n);
                let q = a * s * sm - b * s * sn - sp.s + 0.5 * d * s * s;
                let qp = a * (1.0 - m) * sm - b * (1.0 - n) * sn + d * s;
                let qpp = a * m * (m - 1.0) * sm / s - b * n * (n - 1.0) * sn / s + d;
                let g = a * m * s * sm - b * n * s * sn - sp.s - 0.5 * d * s * s;
                PotentialValues {
                    q,
                    qp,
                    qpp,
                    r: q / s,
                    rp: -g / (s * s),
                    g,
                }
            }
            Family::ModelB | Family::ModelBGravity => {
                let (a, bb, m, n, d) = (sp.a, sp.b.abs(), sp.m, sp.n, sp.d);
                let (tm, tn) = (bb * s.powf(m), a * s.powf(n));
                let den = tm + tn;
                // s d'(s) and s^2 d''(s)
                let sd1 = m * tm + n * tn;
                let s2d2 = m * (m - 1.0) * tm + n * (n - 1.0) * tn;
                let num = den - sd1;
                let ab = a * bb;
                let q = ab * s / den - sp.s + 0.5 * d * s * s;
                let qp = ab * num / (den * den) + d * s;
                let qpp = ab * (-s2d2 * den - 2.0 * num * sd1) / (s * den * den * den) + d;
                let g = ab * s * sd1 / (den * den) - sp.s - 0.5 * d * s * s;
                PotentialValues {
                    q,
                    qp,
                    qpp,
                    r: q / s,
                    rp: -g / (s * s),
                    g,
                }
            }
            Family::Custom => {
                let c = sp.custom.as_ref().expect("validated custom spec");
                let q = (c.q)(s);
                let qp = (c.dq)(s);
                let qpp = match &c.d2q {
                    Some(f) => f(s),
                    None => {
                        let h = 1e-6;
                        ((c.dq)(s * (1.0 + h)) - (c.dq)(s * (1.0 - h))) / (2.0 * s * h)
                    }
                };
                let r = q / s;
                PotentialValues {
                    q,
                    qp,
                    qpp,
                    r,
                    rp: (qp - r) / s,
                    g: q - s * qp,
                }
            }
        }
    }

    #[inline]
    pub fn q(&self, s: f64) -> f64 {
        match self.spec.family {
            Family::ModelA | Family::ModelAGravity => {
                let sp = &self.spec;
                sp.a * s.powf(1.0 - sp.m) - sp.b * s.powf(1.0 - sp.n) - sp.s + 0.5 * sp.d * s * s
            }
            _ => self.values(s).q,
        }
    }

    #[inline]
    pub fn r(&self, s: f64) -> f64 {
        self.q(s) / s
    }

    /// `G(s) = Q(s) - s Q'(s)`, positive exactly where `R` decreases.
    #[inline]
    pub fn g(&self, s: f64) -> f64 {
        self.values(s).g
    }

    /// `Q` on the whole real line (zero for `s <= 0`).
    pub fn q_total(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.q(s)
        }
    }

    /// `R(base + h) - R(base)`, computed term by term so that small
    /// increments keep their relative accuracy.
    pub fn r_increment(&self, base: f64, h: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        let sp = &self.spec;
        match sp.family {
            Family::ModelA | Family::ModelAGravity => {
                sp.a * pow_increment(base, h, -sp.m) - sp.b * pow_increment(base, h, -sp.n)
                    - sp.s * pow_increment(base, h, -1.0)
                    + 0.5 * sp.d * h
            }
            Family::ModelB | Family::ModelBGravity => {
                let (a, bb) = (sp.a, sp.b.abs());
                let top = base + h;
                let d0 = bb * base.powf(sp.m) + a * base.powf(sp.n);
                let d1 = bb * top.powf(sp.m) + a * top.powf(sp.n);
                let dd = bb * pow_increment(base, h, sp.m) + a * pow_increment(base, h, sp.n);
                -a * bb * dd / (d0 * d1) - sp.s * pow_increment(base, h, -1.0) + 0.5 * sp.d * h
            }
            Family::Custom => self.r(base + h) - self.r(base),
        }
    }

    /// `R(base + h) - R(base) - h R'(base)`, accurate relative to `h^2`.
    pub fn r_increment2(&self, base: f64, h: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        let sp = &self.spec;
        let x = h / base;
        match sp.family {
            Family::ModelA | Family::ModelAGravity => {
                sp.a * base.powf(-sp.m) * pow_remainder(x, -sp.m)
                    - sp.b * base.powf(-sp.n) * pow_remainder(x, -sp.n)
                    - sp.s / base * pow_remainder(x, -1.0)
            }
            Family::ModelB | Family::ModelBGravity => {
                let (a, bb, m, n) = (sp.a, sp.b.abs(), sp.m, sp.n);
                let (tm, tn) = (bb * base.powf(m), a * base.powf(n));
                let d0 = tm + tn;
                let d1 = bb * (base + h).powf(m) + a * (base + h).powf(n);
                let dp = (m * tm + n * tn) / base;
                let psi = tm * pow_remainder(x, m) + tn * pow_remainder(x, n);
                let inv = (-psi * d0 + dp * dp * h * h + dp * h * psi) / (d0 * d0 * d1);
                a * bb * inv - sp.s / base * pow_remainder(x, -1.0)
            }
            Family::Custom => self.r(base + h) - self.r(base) - h * self.values(base).rp,
        }
    }

    /// `lim Q(s)` as `s -> inf`: `-S` without gravity, infinite with it.
    pub fn spreading_limit(&self) -> Extended {
        if self.spec.family.has_gravity() {
            Extended::Infinite
        } else {
            Extended::Finite(-self.spec.s)
        }
    }

    /// `lim R(s)` as `s -> inf`.
    pub fn r_at_infinity(&self) -> Extended {
        if self.spec.family.has_gravity() {
            Extended::Infinite
        } else {
            Extended::Finite(0.0)
        }
    }

    /// Coefficient `C` of the contact-line law `u ~ C (r - x)^(2/(m+1))`.
    pub fn contact_prefactor(&self) -> f64 {
        let m = self.spec.m;
        (self.spec.a * (m + 1.0).powi(2) / 2.0).powf(1.0 / (m + 1.0))
    }

    /// Height below which `Q` exceeds `level` according to the short-range law.
    pub fn short_range_height(&self, level: f64) -> f64 {
        (self.spec.a / level).powf(1.0 / (self.spec.m - 1.0))
    }

    /// `(p, K)` with `Q(s) ~ K s^(1-p)` at infinity, when `S = 0` and `Q`
    /// decays to zero from above.
    pub fn tail_law(&self) -> Option<TailLaw> {
        let sp = &self.spec;
        if sp.s != 0.0 {
            return None;
        }
        match sp.family {
            Family::ModelA => {
                if sp.b < 0.0 {
                    Some(TailLaw { p: sp.n, k: -sp.b })
                } else if sp.b == 0.0 {
                    Some(TailLaw { p: sp.m, k: sp.a })
                } else {
                    None
                }
            }
            Family::ModelB => Some(TailLaw {
                p: sp.n,
                k: sp.b.abs(),
            }),
            Family::Custom => sp.custom.as_ref().and_then(|c| c.tail),
            Family::ModelAGravity | Family::ModelBGravity => None,
        }
    }
}
