//! Large-mass asymptotics: closed-form predictions for droplets, pancakes
//! and transition profiles, the shape function `f_p`, composite
//! micro/macro profiles and convergence diagnostics against computed
//! minimizers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CapminError, Result};
use crate::landscape::{Landscape, Regime};
use crate::minimizer::Minimizer;
use crate::numerics::fit_line;
use crate::numerics::quad::{integrate, Tolerance};
use crate::potential::{Potential, PotentialSpec};
use crate::profile::Profile;

const SHAPE_WINDOW: f64 = 0.9;
const PARABOLA_WINDOW: f64 = 0.8;
const INVERSE_TOL: f64 = 1e-13;

/// `p^{-1/2} ∫_{w^p}^1 v^{a-1} (1-v)^{-1/2} dv` with `a = (p+1+2k)/(2p)`,
/// which equals `∫_w^1 t^k f_p'(t) dt` up to sign. The range is split at
/// `v = 1/2`; each half is mapped by a square root onto a bounded integrand.
fn moment(p: f64, w: f64, k: f64) -> Result<f64> {
    let a = (p + 1.0 + 2.0 * k) / (2.0 * p);
    let wp = if w == 0.0 { 0.0 } else { (p * w.ln()).exp() };
    let tol = Tolerance::relative(1e-14).with_abs(1e-300);
    let lower = if wp < 0.5 {
        let f = |s: f64| 2.0 * s.powf(2.0 * a - 1.0) / (1.0 - s * s).sqrt();
        integrate(f, wp.sqrt(), 0.5f64.sqrt(), tol)?.value
    } else {
        0.0
    };
    let tau = if wp < 0.5 {
        0.5f64.sqrt()
    } else {
        (-(p * w.ln()).exp_m1()).sqrt()
    };
    let upper = integrate(|t: f64| 2.0 * (1.0 - t * t).powf(a - 1.0), 0.0, tau, tol)?.value;
    Ok((lower + upper) / p.sqrt())
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CapminError::Domain(format!("shape exponent p must be >= 1, got {p}")))
    }
}

/// `f_p(w) = ∫_w^1 √p t^((p-1)/2) / √(1 - t^p) dt`.
pub fn f_p(p: f64, w: f64) -> Result<f64> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&w) {
        return Err(CapminError::Domain(format!("f_p needs w in [0, 1], got {w}")));
    }
    if w == 1.0 {
        return Ok(0.0);
    }
    moment(p, w, 0.0)
}

pub fn f_p0(p: f64) -> Result<f64> {
    f_p(p, 0.0)
}

pub fn f_p_derivative(p: f64, w: f64) -> f64 {
    -p.sqrt() * w.powf(0.5 * (p - 1.0)) / (-(p * w.ln()).exp_m1()).sqrt()
}

/// The `w` in `[0, 1]` with `f_p(w) = y`, by Newton steps safeguarded with
/// bisection.
pub fn f_p_inverse(p: f64, y: f64) -> Result<f64> {
    let top = f_p0(p)?;
    if !(0.0..=top * (1.0 + 1e-14)).contains(&y) {
        return Err(CapminError::Domain(format!("f_p inverse needs y in [0, {top}], got {y}")));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    if y >= top {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut w = (1.0 - 0.25 * y * y).clamp(0.0, 1.0);
    for _ in 0..200 {
        let g = f_p(p, w)? - y;
        if g > 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        if g == 0.0 || hi - lo <= INVERSE_TOL {
            return Ok(w);
        }
        let slope = f_p_derivative(p, w);
        let newton = w - g / slope;
        let next = if slope.is_finite() && slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - w).abs() <= 0.1 * INVERSE_TOL {
            return Ok(next);
        }
        w = next;
    }
    Ok(0.5 * (lo + hi))
}

/// `c_p = ∫_0^1 f_p^{-1}(f_p(0) y) dy`, integrated in the variable
/// `w = f_p^{-1}(f_p(0) y)`.
pub fn c_p(p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(moment(p, 0.0, 1.0)? / f_p0(p)?)
}

/// Rescaled transition shape `w_p(y) = f_p^{-1}(f_p(0) |y|)`.
pub fn transition_shape(p: f64, y: f64) -> Result<f64> {
    let y = y.abs();
    if y >= 1.0 {
        return Ok(0.0);
    }
    f_p_inverse(p, f_p0(p)? * y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AsymptoticPrediction {
    pub regime: Regime,
    pub mass: f64,
    pub u0_pred: f64,
    pub r_pred: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_mac: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fp0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cp: Option<f64>,
}

impl AsymptoticPrediction {
    fn bare(regime: Regime, mass: f64, u0_pred: f64, r_pred: f64) -> Self {
        Self {
            regime,
            mass,
            u0_pred,
            r_pred,
            theta_mac: None,
            thickness: None,
            e_star: None,
            p: None,
            k: None,
            fp0: None,
            cp: None,
        }
    }

    /// `tan θ_mac = √(2|S|)`.
    pub fn tan_theta(&self) -> Option<f64> {
        self.theta_mac.map(f64::tan)
    }
}

pub fn droplet_prediction(abs_s: f64, a: f64, m: f64, mass: f64) -> AsymptoticPrediction {
    let u0 = (9.0 * abs_s * mass * mass / 32.0).powf(0.25);
    let r = (9.0 * mass * mass / (8.0 * abs_s)).powf(0.25);
    let mut out = AsymptoticPrediction::bare(Regime::Droplet, mass, u0, r);
    out.theta_mac = Some((2.0 * abs_s).sqrt().atan());
    out.thickness = Some((a * (m + 1.0).powi(2) / (4.0 * abs_s)).powf(1.0 / (m - 1.0)));
    out
}

pub fn pancake_prediction(e_star: f64, mass: f64) -> AsymptoticPrediction {
    let mut out = AsymptoticPrediction::bare(Regime::Pancake, mass, e_star, mass / (2.0 * e_star));
    out.e_star = Some(e_star);
    out
}

pub fn transition_prediction(p: f64, k: f64, mass: f64) -> Result<AsymptoticPrediction> {
    let f0 = f_p0(p)?;
    let c = c_p(p)?;
    let u0 = (p * k * mass * mass / (2.0 * c * c * f0 * f0)).powf(1.0 / (p + 3.0));
    let r = (f0 * f0 / (2f64.powf(p + 2.0) * p * k * c.powf(p + 1.0)) * mass.powf(p + 1.0)).powf(1.0 / (p + 3.0));
    let mut out = AsymptoticPrediction::bare(Regime::Transition, mass, u0, r);
    out.p = Some(p);
    out.k = Some(k);
    out.fp0 = Some(f0);
    out.cp = Some(c);
    Ok(out)
}

fn predict_with(land: &Landscape, regime: Regime, mass: f64) -> Result<AsymptoticPrediction> {
    let pot = land.potential();
    let spec = pot.spec();
    if !(mass > 0.0) {
        return Err(CapminError::Param(format!("mass must be positive, got {mass}")));
    }
    match regime {
        Regime::Droplet => Ok(droplet_prediction(spec.s.abs(), spec.a, spec.m, mass)),
        Regime::Pancake => {
            let e = land
                .e_star()
                .finite()
                .ok_or_else(|| CapminError::NotApplicable("pancake regime without finite e*".into()))?;
            Ok(pancake_prediction(e, mass))
        }
        Regime::Transition => {
            let tail = pot.tail_law().ok_or_else(|| {
                CapminError::NotApplicable("transition regime needs a declared tail law (p, K)".into())
            })?;
            transition_prediction(tail.p, tail.k, mass)
        }
        Regime::Unknown => Err(CapminError::NotApplicable("regime is unknown".into())),
    }
}

pub fn predict(spec: &PotentialSpec, mass: f64) -> Result<AsymptoticPrediction> {
    let land = Landscape::new(spec)?;
    let regime = crate::landscape::classify(spec)?.regime;
    predict_with(&land, regime, mass)
}

/// Bulk law attached to a computed minimizer: the droplet parabola through
/// the computed contact line, the pancake plateau, or the transition shape
/// scaled by the computed height and radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroLaw {
    pub regime: Regime,
    pub height: f64,
    pub r_bar: f64,
    pub p: Option<f64>,
}

impl MacroLaw {
    pub fn fitted(pred: &AsymptoticPrediction, abs_s: f64, profile: &Profile) -> Result<Self> {
        let r_bar = profile.r_bar;
        let height = match pred.regime {
            Regime::Droplet => (0.5 * abs_s).sqrt() * r_bar,
            Regime::Pancake => pred.u0_pred,
            Regime::Transition => profile.u0,
            Regime::Unknown => return Err(CapminError::NotApplicable("regime is unknown".into())),
        };
        Ok(Self {
            regime: pred.regime,
            height,
            r_bar,
            p: pred.p,
        })
    }

    /// Height and slope at `x >= 0`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let (h, r) = (self.height, self.r_bar);
        let y = x.abs() / r;
        if y >= 1.0 {
            return Ok((0.0, 0.0));
        }
        match self.regime {
            Regime::Droplet => Ok((h * (1.0 - y * y), -2.0 * h * y / r)),
            Regime::Pancake => Ok((h, 0.0)),
            _ => {
                let p = self.p.expect("transition p");
                let w = transition_shape(p, y)?;
                let slope = if w == 0.0 || w == 1.0 {
                    0.0
                } else {
                    h * f_p0(p)? / (r * f_p_derivative(p, w))
                };
                Ok((h * w, slope))
            }
        }
    }
}

/// Macroscopic profile at `d = r - |x|` from the contact line.
fn outer(pred: &AsymptoticPrediction, x: f64) -> Result<f64> {
    let (u0, r) = (pred.u0_pred, pred.r_pred);
    match pred.regime {
        Regime::Droplet => Ok(u0 * (1.0 - (x / r).powi(2))),
        Regime::Pancake => Ok(u0),
        Regime::Transition => Ok(u0 * transition_shape(pred.p.expect("transition p"), x / r)?),
        Regime::Unknown => Err(CapminError::NotApplicable("regime is unknown".into())),
    }
}

/// Where the outer and contact-line laws are matched, as a distance from
/// the contact line.
fn crossover(pred: &AsymptoticPrediction, pot: &Potential) -> Result<f64> {
    let c = pot.contact_prefactor();
    let m = pot.m();
    let alpha = 2.0 / (m + 1.0);
    let r = pred.r_pred;
    let guess = match pred.regime {
        Regime::Droplet => {
            let slope = pred.tan_theta().expect("droplet angle");
            (c / slope).powf(1.0 / (1.0 - alpha))
        }
        Regime::Pancake => return Ok((pred.u0_pred / c).powf(1.0 / alpha).min(r)),
        _ => {
            let p = pred.p.expect("transition p");
            let beta = 2.0 / (p + 1.0);
            let kk = (p + 1.0) * pred.fp0.expect("transition f_p(0)") / (2.0 * p.sqrt());
            let pre = pred.u0_pred / r.powf(beta) * kk.powf(beta);
            if (alpha - beta).abs() < 1e-12 {
                0.5 * r
            } else {
                (c / pre).powf(1.0 / (beta - alpha))
            }
        }
    }
    .min(r);
    // Root of micro - outer closest to the guess, on a log scan of (0, r].
    let gap = |d: f64| -> Result<f64> { Ok(c * d.powf(alpha) - outer(pred, r - d)?) };
    let n = 400;
    let ds: Vec<f64> = crate::numerics::logspace(1e-12 * r, r, n);
    let vals = ds.iter().map(|&d| gap(d)).collect::<Result<Vec<_>>>()?;
    let mut best: Option<f64> = None;
    for i in 0..n - 1 {
        if vals[i] * vals[i + 1] > 0.0 {
            continue;
        }
        let root = crate::numerics::roots::brent(
            gap,
            ds[i],
            ds[i + 1],
            vals[i],
            vals[i + 1],
            crate::numerics::roots::BrentOptions::default(),
        )?
        .x;
        if best.is_none_or(|b| (root.ln() - guess.ln()).abs() < (b.ln() - guess.ln()).abs()) {
            best = Some(root);
        }
    }
    Ok(best.unwrap_or(guess))
}

/// Piecewise micro/macro profile evaluated at the given abscissae.
#[derive(Clone, Debug, Serialize)]
pub struct CompositeProfile {
    pub prediction: AsymptoticPrediction,
    /// Distance from the contact line at which the two laws are joined.
    pub crossover: f64,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

impl CompositeProfile {
    pub fn new(spec: &PotentialSpec, mass: f64) -> Result<Self> {
        let pot = spec.validate()?;
        let prediction = predict(spec, mass)?;
        let crossover = crossover(&prediction, &pot)?;
        Ok(Self {
            prediction,
            crossover,
            xs: Vec::new(),
            us: Vec::new(),
        })
    }

    pub fn eval(&self, pot: &Potential, x: f64) -> Result<f64> {
        let r = self.prediction.r_pred;
        let d = r - x.abs();
        if d <= 0.0 {
            return Ok(0.0);
        }
        if d < self.crossover {
            Ok(pot.contact_prefactor() * d.powf(2.0 / (pot.m() + 1.0)))
        } else {
            outer(&self.prediction, x)
        }
    }

    pub fn sample(mut self, pot: &Potential, xs: &[f64]) -> Result<Self> {
        self.us = xs.iter().map(|&x| self.eval(pot, x)).collect::<Result<_>>()?;
        self.xs = xs.to_vec();
        Ok(self)
    }

    /// CSV with header `x,u`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "u"])?;
        for (x, u) in self.xs.iter().zip(&self.us) {
            w.write_record([x.to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn composite_profile(spec: &PotentialSpec, mass: f64, x: f64) -> Result<f64> {
    let pot = spec.validate()?;
    CompositeProfile::new(spec, mass)?.eval(&pot, x)
}

/// `tan θ` of the parabola `c0 + c2 x^2` fitted to the computed profile on
/// `|x| <= 0.8 r`, taken at its zero.
pub fn parabola_slope(profile: &Profile) -> Option<f64> {
    let r = profile.r_bar;
    let n = 200;
    let xs: Vec<f64> = (0..n).map(|i| PARABOLA_WINDOW * r * i as f64 / (n - 1) as f64).collect();
    let x2: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let us: Vec<f64> = xs.iter().map(|&x| profile.height_at(x)).collect();
    let (c0, c2) = fit_line(&x2, &us)?;
    (c0 > 0.0 && c2 < 0.0).then(|| 2.0 * (c0 * -c2).sqrt())
}

/// Exponent of `u ~ (r - x)^β` fitted on `r - x ∈ [r^(1/3), r^(2/3)]`.
pub fn intermediate_exponent(profile: &Profile) -> Option<f64> {
    let r = profile.r_bar;
    let (lo, hi) = (r.powf(1.0 / 3.0), r.powf(2.0 / 3.0));
    if !(hi > lo) {
        return None;
    }
    let ds = crate::numerics::logspace(lo, hi, 50);
    let (lx, ly): (Vec<f64>, Vec<f64>) = ds.iter().map(|&d| (d.ln(), profile.height_at(r - d).ln())).unzip();
    fit_line(&lx, &ly).map(|(_, slope)| slope)
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "M")]
    pub mass: f64,
    pub u0: f64,
    pub u0_pred: f64,
    pub rbar: f64,
    pub rbar_pred: f64,
    /// Sup over `|y| <= 0.9` of the rescaled shape error.
    pub shape_err: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tan_theta_fit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate_exponent: Option<f64>,
}

impl ConvergenceRow {
    pub fn u0_ratio(&self) -> f64 {
        self.u0 / self.u0_pred
    }

    pub fn rbar_ratio(&self) -> f64 {
        self.rbar / self.rbar_pred
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub regime: Regime,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// CSV with header `M,u0,u0_pred,rbar,rbar_pred,shape_err`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["M", "u0", "u0_pred", "rbar", "rbar_pred", "shape_err"])?;
        for r in &self.rows {
            w.write_record(
                [r.mass, r.u0, r.u0_pred, r.rbar, r.rbar_pred, r.shape_err].map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn shape_error(pred: &AsymptoticPrediction, profile: &Profile) -> Result<f64> {
    let n = 91;
    let mut err = 0.0f64;
    for i in 0..n {
        let y = SHAPE_WINDOW * i as f64 / (n - 1) as f64;
        let u = profile.height_at(y * profile.r_bar);
        let e = match pred.regime {
            Regime::Droplet => (u / profile.u0 - (1.0 - y * y)).abs(),
            Regime::Pancake => (u / pred.u0_pred - 1.0).abs(),
            Regime::Transition => (u / profile.u0 - transition_shape(pred.p.expect("p"), y)?).abs(),
            Regime::Unknown => f64::NAN,
        };
        err = err.max(e);
    }
    Ok(err)
}

/// Computed minimizers against the large-mass predictions, one row per mass.
pub fn convergence_report(spec: &PotentialSpec, masses: &[f64]) -> Result<ConvergenceReport> {
    let minimizer = Minimizer::new(spec)?;
    let land = minimizer.solver().landscape();
    let regime = crate::landscape::classify(spec)?.regime;
    let rows = masses
        .par_iter()
        .map(|&mass| {
            let pred = predict_with(land, regime, mass)?;
            let sol = minimizer.global_minimizer(mass, 1e-10 * mass, 400)?;
            let profile = &sol.profile;
            Ok(ConvergenceRow {
                mass,
                u0: profile.u0,
                u0_pred: pred.u0_pred,
                rbar: profile.r_bar,
                rbar_pred: pred.r_pred,
                shape_err: shape_error(&pred, profile)?,
                tan_theta_fit: (regime == Regime::Droplet).then(|| parabola_slope(profile)).flatten(),
                intermediate_exponent: (regime == Regime::Transition)
                    .then(|| intermediate_exponent(profile))
                    .flatten(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { regime, rows })
}
