//! Symmetric compactly supported solutions of `-u'' + Q'(u) = R(u0)` with
//! maximum `u0`, built from the first integral `u'^2/2 = u (R(u) - R(u0))`.
//!
//! Every quantity is an integral over the height variable `s in (0, u0)`:
//!
//! ```text
//! rbar = ∫ ds / sqrt(2 s D(s))
//! mass = ∫ 2 s ds / sqrt(2 s D(s))
//! E    = ∫ 2 (2 Q(s) - λ s) ds / sqrt(2 s D(s)),   D(s) = R(s) - R(u0)
//! ```
//!
//! The range is cut at the stationary points of `R`. Near `s = 0` the
//! substitution `s = s_b τ^(2/(3-m))` removes the `s^((1-m)/2)` behaviour of
//! the energy integrand, near `s = u0` the substitution `s = u0 (1 - t^2)`
//! removes the square-root singularity. Close to a local minimum `c` of `R`
//! the difference `D` is evaluated as `(R(s) - R(c)) + (R(c) - R(u0))`.
//!
//! Heights within a relative distance [`SWITCH_GAP`] of a plateau (a
//! stationary height the support can stretch along) are described by the
//! logarithm of the gap. Beyond the switch every integral grows affinely in
//! the log-gap with slopes fixed by `Q''` at the plateau.

use std::io::Write;

use serde::Serialize;

use crate::error::{CapminError, Result};
use crate::landscape::{AdmissibleInterval, Landscape, StationaryKind, StationaryPoint};
use crate::numerics::quad::{integrate, Tolerance};
use crate::numerics::{fit_line, hermite, logspace};
use crate::potential::{Potential, PotentialSpec};

/// Relative distance to a plateau below which integrals are extrapolated.
pub const SWITCH_GAP: f64 = 1e-8;
pub const MIN_GRID: usize = 16;
const QUAD_REL: f64 = 1e-12;
const TAIL_PER_DECADE: usize = 20;

/// Parametrization of the maximal height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Apex {
    Height(f64),
    /// `u0 = hi - exp(-log_gap)` in the given admissible interval, whose right
    /// end `hi` is a record minimum of `R`.
    BelowPlateau { interval: usize, log_gap: f64 },
    /// `u0 = lo + exp(-log_gap)`, where `R(lo)` equals an earlier record minimum.
    AbovePlateau { interval: usize, log_gap: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Integrals {
    pub u0: f64,
    pub lambda: f64,
    pub r_bar: f64,
    pub mass: f64,
    pub energy: f64,
}

/// A symmetric profile sampled on `[0, rbar)`; the contact point itself is
/// not stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    pub u0: f64,
    pub lambda: f64,
    pub r_bar: f64,
    pub mass: f64,
    pub energy: f64,
    pub micro_prefactor: f64,
    pub micro_exponent: f64,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub ups: Vec<f64>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Height at `x`, by Hermite interpolation; zero outside the support.
    pub fn height_at(&self, x: f64) -> f64 {
        let x = x.abs();
        if x >= self.r_bar {
            return 0.0;
        }
        match hermite(&self.xs, &self.us, &self.ups, x) {
            Some(u) => u,
            None => {
                // Between the last sample and the contact line.
                let m = (self.r_bar - x) / (self.r_bar - self.xs[self.len() - 1]);
                self.us[self.len() - 1] * m.powf(self.micro_exponent)
            }
        }
    }

    /// `max |u'^2/2 - Q(u) + λ u|` over the samples.
    pub fn first_integral_residual(&self, pot: &Potential) -> f64 {
        self.us
            .iter()
            .zip(&self.ups)
            .map(|(&u, &up)| (0.5 * up * up - pot.q(u) + self.lambda * u).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "u", "uprime"])?;
        for i in 0..self.len() {
            w.serialize((self.xs[i], self.us[i], self.ups[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Kernel {
    Radius,
    Mass,
    Energy,
}

#[derive(Clone, Copy, Debug)]
enum Pivot {
    Apex,
    Min { c: f64, dc: f64, rpc: f64 },
}

#[derive(Clone, Copy, Debug)]
enum Map {
    Bottom,
    Plain,
    Top,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    lo: f64,
    hi: f64,
    map: Map,
    pivot: Pivot,
}

/// Piecewise description of `(0, u0)` for one maximal height.
struct Geometry<'a> {
    pot: &'a Potential,
    u0: f64,
    lambda: f64,
    rp0: f64,
    s_b: f64,
    k: f64,
    pieces: Vec<Piece>,
}

impl<'a> Geometry<'a> {
    fn new(land: &'a Landscape, iv: &AdmissibleInterval, u0: f64) -> Self {
        let pot = land.potential();
        let crits: Vec<StationaryPoint> = land
            .stationary_points()
            .iter()
            .copied()
            .filter(|c| c.s < u0)
            .collect();
        let s_b = 0.5 * crits.first().map_or(u0, |c| c.s.min(u0));
        let s_t = crits.last().map_or(0.5 * u0, |c| c.s.max(0.5 * u0));

        let pivot_of = |c: &StationaryPoint| {
            if c.kind != StationaryKind::Min {
                return None;
            }
            let dc = match iv.lo_plateau {
                Some(p) if p.s == c.s => -pot.r_increment(iv.lo, u0 - iv.lo),
                _ => -pot.r_increment(c.s, u0 - c.s),
            };
            Some(Pivot::Min {
                c: c.s,
                dc,
                rpc: pot.values(c.s).rp,
            })
        };

        let mut nodes: Vec<(f64, Option<Pivot>)> = vec![(s_b, None)];
        nodes.extend(crits.iter().map(|c| (c.s, pivot_of(c))));
        if s_t > nodes.last().expect("non-empty").0 {
            nodes.push((s_t, None));
        }

        let mut pieces = vec![Piece {
            lo: 0.0,
            hi: s_b,
            map: Map::Bottom,
            pivot: Pivot::Apex,
        }];
        for w in nodes.windows(2) {
            pieces.push(Piece {
                lo: w[0].0,
                hi: w[1].0,
                map: Map::Plain,
                pivot: w[0].1.or(w[1].1).unwrap_or(Pivot::Apex),
            });
        }
        pieces.push(Piece {
            lo: s_t,
            hi: u0,
            map: Map::Top,
            pivot: Pivot::Apex,
        });

        Self {
            pot,
            u0,
            lambda: pot.r(u0),
            rp0: pot.values(u0).rp,
            s_b,
            k: 2.0 / (3.0 - pot.m()),
            pieces,
        }
    }

    fn gap_with(&self, pivot: Pivot, s: f64) -> f64 {
        match pivot {
            Pivot::Apex if s < 0.5 * self.u0 => self.pot.r(s) - self.lambda,
            Pivot::Apex => self.gap_below_top(s - self.u0),
            Pivot::Min { c, dc, rpc } => {
                let h = s - c;
                h * rpc + self.pot.r_increment2(c, h) + dc
            }
        }
    }

    fn gap_below_top(&self, h: f64) -> f64 {
        h * self.rp0 + self.pot.r_increment2(self.u0, h)
    }

    /// `D(s) = R(s) - R(u0)` for `0 < s < u0`.
    fn gap(&self, s: f64) -> f64 {
        let piece = self
            .pieces
            .iter()
            .find(|p| s <= p.hi)
            .unwrap_or_else(|| self.pieces.last().expect("non-empty"));
        match piece.map {
            Map::Top => self.gap_below_top(s - self.u0),
            _ => self.gap_with(piece.pivot, s),
        }
    }

    fn kernel(&self, kind: Kernel, s: f64, d: f64) -> f64 {
        let w = 1.0 / (2.0 * s * d).sqrt();
        match kind {
            Kernel::Radius => w,
            Kernel::Mass => 2.0 * s * w,
            Kernel::Energy => 2.0 * (s * d + self.pot.q(s)) * w,
        }
    }

    fn integrate_part(&self, piece: &Piece, a: f64, b: f64, kind: Kernel) -> Result<f64> {
        let tol = Tolerance::relative(QUAD_REL);
        let value = match piece.map {
            Map::Plain => {
                integrate(|s| self.kernel(kind, s, self.gap_with(piece.pivot, s)), a, b, tol)?
            }
            Map::Bottom => {
                let (sb, k) = (self.s_b, self.k);
                let ta = (a / sb).powf(1.0 / k);
                let tb = (b / sb).powf(1.0 / k);
                integrate(
                    |t| {
                        let s = sb * t.powf(k);
                        self.kernel(kind, s, self.gap_with(piece.pivot, s)) * sb * k * t.powf(k - 1.0)
                    },
                    ta,
                    tb,
                    tol,
                )?
            }
            Map::Top => {
                let u0 = self.u0;
                let ta = ((u0 - b) / u0).max(0.0).sqrt();
                let tb = ((u0 - a) / u0).sqrt();
                integrate(
                    |t| {
                        let h = -u0 * t * t;
                        let d = self.gap_below_top(h);
                        self.kernel(kind, u0 + h, d) * 2.0 * u0 * t
                    },
                    ta,
                    tb,
                    tol,
                )?
            }
        };
        Ok(value.value)
    }

    fn integrate_range(&self, a: f64, b: f64, kind: Kernel) -> Result<f64> {
        let mut total = 0.0;
        for piece in &self.pieces {
            let (lo, hi) = (a.max(piece.lo), b.min(piece.hi));
            if hi > lo {
                total += self.integrate_part(piece, lo, hi, kind)?;
            }
        }
        Ok(total)
    }

    fn integrals(&self) -> Result<Integrals> {
        Ok(Integrals {
            u0: self.u0,
            lambda: self.lambda,
            r_bar: self.integrate_range(0.0, self.u0, Kernel::Radius)?,
            mass: self.integrate_range(0.0, self.u0, Kernel::Mass)?,
            energy: self.integrate_range(0.0, self.u0, Kernel::Energy)?,
        })
    }

    /// Height grid from `u0` down to the tail floor, strictly decreasing.
    fn heights(&self, n_grid: usize) -> (Vec<f64>, f64) {
        let u0 = self.u0;
        let level = 1e6 * self.pot.q(u0).abs().max(1.0);
        let floor = self
            .pot
            .short_range_height(level)
            .max(1e-10 * u0)
            .min(1e-2 * u0);
        let mut us: Vec<f64> = (0..n_grid - 1)
            .map(|j| {
                let half = 0.5 * std::f64::consts::PI * j as f64 / (n_grid - 1) as f64;
                u0 - u0 * half.sin().powi(2)
            })
            .take_while(|&u| u > 1.5 * floor)
            .collect();
        let last = *us.last().expect("u0 lies above the floor");
        let decades = (last / floor).log10();
        let n_tail = ((decades * TAIL_PER_DECADE as f64).ceil() as usize).max(TAIL_PER_DECADE) + 1;
        us.extend(logspace(floor, last, n_tail).into_iter().rev().skip(1));
        us.dedup_by(|b, a| *b >= *a);
        (us, floor)
    }

    fn profile(&self, n_grid: usize, integrals: &Integrals) -> Result<(Profile, Vec<f64>)> {
        let (us, floor) = self.heights(n_grid);
        let n = us.len();
        let incs = us
            .windows(2)
            .map(|w| self.integrate_range(w[1], w[0], Kernel::Radius))
            .collect::<Result<Vec<f64>>>()?;
        let below_floor = self.integrate_range(0.0, floor, Kernel::Radius)?;

        let mid = us.iter().position(|&u| u <= 0.5 * self.u0).unwrap_or(n - 1);
        let mut z = vec![0.0; n];
        for j in 1..=mid {
            z[j] = z[j - 1] + incs[j - 1];
        }
        let mut wv = vec![0.0; n];
        wv[n - 1] = below_floor;
        for j in (mid..n - 1).rev() {
            wv[j] = wv[j + 1] + incs[j];
        }
        let r_bar = z[mid] + wv[mid];
        let xs: Vec<f64> = (0..n).map(|j| if j <= mid { z[j] } else { r_bar - wv[j] }).collect();

        let mut gaps = vec![0.0; n];
        for j in 1..n {
            gaps[j] = self.gap(us[j]);
        }
        let ups = us
            .iter()
            .zip(&gaps)
            .map(|(&u, &d)| -(2.0 * u * d).sqrt())
            .collect();

        let (micro_prefactor, micro_exponent) = micro_fit(
            self.pot.m(),
            us.iter().zip(&wv).skip(mid).filter(|(&u, _)| u <= 10.0 * floor),
        );

        let profile = Profile {
            u0: self.u0,
            lambda: self.lambda,
            r_bar,
            mass: integrals.mass,
            energy: integrals.energy,
            micro_prefactor,
            micro_exponent,
            xs,
            us,
            ups,
        };
        Ok((profile, gaps))
    }
}

/// Least-squares fit of `ln u` against `ln (rbar - x)`: returns the prefactor
/// of `(rbar - x)^(2/(m+1))` and the free exponent.
fn micro_fit<'a, I>(m: f64, points: I) -> (f64, f64)
where
    I: Iterator<Item = (&'a f64, &'a f64)>,
{
    let (lw, lu): (Vec<f64>, Vec<f64>) = points.map(|(&u, &w)| (w.ln(), u.ln())).unzip();
    let alpha = 2.0 / (m + 1.0);
    let exponent = fit_line(&lw, &lu).map_or(f64::NAN, |(_, slope)| slope);
    let prefactor = if lw.is_empty() {
        f64::NAN
    } else {
        let mean = lu.iter().zip(&lw).map(|(u, w)| u - alpha * w).sum::<f64>() / lw.len() as f64;
        mean.exp()
    };
    (prefactor, exponent)
}

/// Resolved apex: a height where direct quadrature is reliable, plus an
/// optional affine continuation in the log-gap.
#[derive(Clone, Copy, Debug)]
struct Resolved {
    interval: usize,
    base: f64,
    stretch: Option<Stretch>,
}

#[derive(Clone, Copy, Debug)]
struct Stretch {
    u0: f64,
    dl: f64,
    plateau: StationaryPoint,
    above: bool,
}

impl Stretch {
    fn root_qpp(&self) -> f64 {
        self.plateau.qpp.sqrt()
    }
}

/// Solves `(P_u0)` for the heights of one potential.
#[derive(Clone, Debug)]
pub struct ProfileSolver {
    land: Landscape,
}

impl ProfileSolver {
    pub fn new(spec: &PotentialSpec) -> Result<Self> {
        Ok(Self::from_landscape(Landscape::new(spec)?))
    }

    pub fn from_landscape(land: Landscape) -> Self {
        Self { land }
    }

    pub fn landscape(&self) -> &Landscape {
        &self.land
    }

    pub fn potential(&self) -> &Potential {
        self.land.potential()
    }

    /// Maximal height represented by `apex`, rounded into the open interval.
    pub fn height(&self, apex: Apex) -> Result<f64> {
        Ok(match self.resolve(apex)? {
            Resolved { stretch: Some(s), .. } => s.u0,
            Resolved { base, .. } => base,
        })
    }

    /// The log-gap chart equivalent to `Height(u0)`, when `u0` is close to
    /// a plateau end of its interval.
    pub fn chart(&self, u0: f64) -> Result<Apex> {
        let idx = self.land.interval_of(u0).ok_or(CapminError::NotAdmissible(u0))?;
        let iv = self.land.intervals()[idx];
        if let Some(hi) = iv.hi.finite() {
            if hi - u0 < SWITCH_GAP * hi {
                return Ok(Apex::BelowPlateau {
                    interval: idx,
                    log_gap: -(hi - u0).ln(),
                });
            }
        }
        if iv.lo_plateau.is_some() && u0 - iv.lo < SWITCH_GAP * iv.lo {
            return Ok(Apex::AbovePlateau {
                interval: idx,
                log_gap: -(u0 - iv.lo).ln(),
            });
        }
        Ok(Apex::Height(u0))
    }

    fn resolve(&self, apex: Apex) -> Result<Resolved> {
        let intervals = self.land.intervals();
        let interval_at = |idx: usize| {
            intervals.get(idx).copied().ok_or_else(|| {
                CapminError::Domain(format!("no admissible interval with index {idx}"))
            })
        };
        match apex {
            Apex::Height(u0) => {
                if !(u0 > 0.0) || !u0.is_finite() {
                    return Err(CapminError::NotAdmissible(u0));
                }
                match self.chart(u0)? {
                    Apex::Height(_) => {
                        if self.potential().g(u0) <= 0.0 {
                            return Err(CapminError::NotAdmissible(u0));
                        }
                        let interval = self.land.interval_of(u0).expect("checked by chart");
                        Ok(Resolved {
                            interval,
                            base: u0,
                            stretch: None,
                        })
                    }
                    other => self.resolve(other),
                }
            }
            Apex::BelowPlateau { interval, log_gap } => {
                let iv = interval_at(interval)?;
                let (Some(hi), Some(plateau)) = (iv.hi.finite(), iv.hi_plateau) else {
                    return Err(CapminError::Domain(format!(
                        "interval {interval} has no plateau at its right end"
                    )));
                };
                let l_sw = -(SWITCH_GAP * hi).ln();
                if log_gap <= l_sw {
                    let u0 = hi - (-log_gap).exp();
                    if !(u0 > iv.lo) {
                        return Err(CapminError::NotAdmissible(u0));
                    }
                    return Ok(Resolved {
                        interval,
                        base: u0,
                        stretch: None,
                    });
                }
                Ok(Resolved {
                    interval,
                    base: hi - SWITCH_GAP * hi,
                    stretch: Some(Stretch {
                        u0: (hi - (-log_gap).exp()).min(hi.next_down()),
                        dl: log_gap - l_sw,
                        plateau,
                        above: false,
                    }),
                })
            }
            Apex::AbovePlateau { interval, log_gap } => {
                let iv = interval_at(interval)?;
                let Some(plateau) = iv.lo_plateau else {
                    return Err(CapminError::Domain(format!(
                        "interval {interval} does not start at a plateau level"
                    )));
                };
                let lo = iv.lo;
                let l_sw = -(SWITCH_GAP * lo).ln();
                if log_gap <= l_sw {
                    let u0 = lo + (-log_gap).exp();
                    if !iv.hi.gt(u0) {
                        return Err(CapminError::NotAdmissible(u0));
                    }
                    return Ok(Resolved {
                        interval,
                        base: u0,
                        stretch: None,
                    });
                }
                Ok(Resolved {
                    interval,
                    base: lo + SWITCH_GAP * lo,
                    stretch: Some(Stretch {
                        u0: (lo + (-log_gap).exp()).max(lo.next_up()),
                        dl: log_gap - l_sw,
                        plateau,
                        above: true,
                    }),
                })
            }
        }
    }

    fn geometry(&self, r: &Resolved) -> Geometry<'_> {
        Geometry::new(&self.land, &self.land.intervals()[r.interval], r.base)
    }

    /// Index of the admissible interval the apex lies in.
    pub fn interval_of(&self, apex: Apex) -> Result<usize> {
        Ok(self.resolve(apex)?.interval)
    }

    pub fn integrals(&self, apex: Apex) -> Result<Integrals> {
        let r = self.resolve(apex)?;
        let base = self.geometry(&r).integrals()?;
        Ok(match r.stretch {
            None => base,
            Some(st) => stretch_integrals(self.potential(), &base, &st),
        })
    }

    pub fn profile(&self, apex: Apex, n_grid: usize) -> Result<Profile> {
        if n_grid < MIN_GRID {
            return Err(CapminError::Param(format!("n_grid = {n_grid} is below {MIN_GRID}")));
        }
        let r = self.resolve(apex)?;
        let geom = self.geometry(&r);
        let base = geom.integrals()?;
        let (profile, gaps) = geom.profile(n_grid, &base)?;
        Ok(match r.stretch {
            None => profile,
            Some(st) => stretch_profile(self.potential(), profile, gaps, &base, &st),
        })
    }
}

fn stretch_integrals(pot: &Potential, base: &Integrals, st: &Stretch) -> Integrals {
    let k = st.dl / st.root_qpp();
    let s = st.plateau.s;
    Integrals {
        u0: st.u0,
        lambda: pot.r(st.u0),
        r_bar: base.r_bar + k,
        mass: base.mass + 2.0 * s * k,
        energy: base.energy + 2.0 * st.plateau.level * s * k,
    }
}

fn stretch_profile(
    pot: &Potential,
    mut p: Profile,
    mut gaps: Vec<f64>,
    base: &Integrals,
    st: &Stretch,
) -> Profile {
    let full = stretch_integrals(pot, base, st);
    let shift = full.r_bar - base.r_bar;
    // R(u_base) - R(u0) adds to every D.
    let dl = pot.r_increment(st.u0, p.u0 - st.u0);
    for g in gaps.iter_mut().skip(1) {
        *g = (*g + dl).max(0.0);
    }
    if st.above {
        for (x, &u) in p.xs.iter_mut().zip(&p.us) {
            if u < st.plateau.s {
                *x += shift;
            }
        }
        p.us[0] = st.u0;
    } else {
        gaps[0] = dl;
        for x in p.xs.iter_mut() {
            *x += shift;
        }
        p.xs.insert(0, 0.0);
        p.us.insert(0, st.u0);
        gaps.insert(0, 0.0);
    }
    p.ups = p
        .us
        .iter()
        .zip(&gaps)
        .map(|(&u, &d)| -(2.0 * u * d).sqrt())
        .collect();
    p.u0 = st.u0;
    p.lambda = full.lambda;
    p.r_bar += shift;
    p.mass = full.mass;
    p.energy = full.energy;
    p
}

/// Profile with maximal height `u0` on a grid of about `n_grid` heights plus
/// a logarithmic tail toward the contact line.
pub fn solve_profile(spec: &PotentialSpec, u0: f64, n_grid: usize) -> Result<Profile> {
    ProfileSolver::new(spec)?.profile(Apex::Height(u0), n_grid)
}

pub fn mass(spec: &PotentialSpec, u0: f64) -> Result<f64> {
    Ok(ProfileSolver::new(spec)?.integrals(Apex::Height(u0))?.mass)
}

pub fn energy(spec: &PotentialSpec, u0: f64) -> Result<f64> {
    Ok(ProfileSolver::new(spec)?.integrals(Apex::Height(u0))?.energy)
}

/// Profile obtained by integrating `u'' = Q'(u) - R(u0)` directly with the
/// classical fourth-order Runge-Kutta scheme, starting from the Taylor
/// expansion at `x = step`.
///
/// Once `u < 1e-2 u0` the independent variable becomes `ln u`, which keeps
/// the steep approach to the contact line resolved; mass and energy are
/// integrated along with the solution. Integration stops at `u < 1e-9 u0`
/// and the remaining sliver of support follows from the contact-line law.
pub fn solve_profile_ode(spec: &PotentialSpec, u0: f64, step: f64) -> Result<Profile> {
    let pot = spec.validate()?;
    if !(u0 > 0.0) || !(step > 0.0) {
        return Err(CapminError::Domain(format!("need u0 > 0 and step > 0, got {u0}, {step}")));
    }
    let top = pot.eval(u0)?;
    let lambda = top.r;
    let curvature = u0 * top.rp;
    let accel = |u: f64| pot.values(u).qp - lambda;
    let density = |u: f64, v: f64| 0.5 * v * v + pot.q(u);
    let density_dx = |u: f64, v: f64| v * (2.0 * pot.values(u).qp - lambda);
    let switch = 1e-2 * u0;
    let floor = 1e-9 * u0;

    let mut xs = vec![0.0, step];
    let mut us = vec![u0, u0 + 0.5 * curvature * step * step];
    let mut vs = vec![0.0, curvature * step];
    if !(vs[1] < 0.0) || !(us[1] < u0) {
        return Err(CapminError::Step(format!(
            "u does not decrease from u0 = {u0} (u''(0) = {curvature:e})"
        )));
    }
    // Corrected trapezoid rule, exact for cubics on each step.
    let trapezoid = |h: f64, f0: f64, f1: f64, d0: f64, d1: f64| {
        0.5 * h * (f0 + f1) + h * h / 12.0 * (d0 - d1)
    };
    let mut mass = trapezoid(step, us[0], us[1], vs[0], vs[1]);
    let mut energy = trapezoid(
        step,
        density(us[0], vs[0]),
        density(us[1], vs[1]),
        density_dx(us[0], vs[0]),
        density_dx(us[1], vs[1]),
    );

    let (mut x, mut u, mut v) = (xs[1], us[1], vs[1]);
    let max_steps = 50_000_000usize;
    while u >= switch {
        if xs.len() > max_steps {
            return Err(CapminError::Step("support does not close within the step budget".into()));
        }
        let h = step.min(1e-3 * u / v.abs());
        let rk = |u: f64, v: f64| -> Option<(f64, f64)> {
            let (k1u, k1v) = (v, accel(u));
            let u2 = u + 0.5 * h * k1u;
            let v2 = v + 0.5 * h * k1v;
            if !(u2 > 0.0) {
                return None;
            }
            let (k2u, k2v) = (v2, accel(u2));
            let u3 = u + 0.5 * h * k2u;
            let v3 = v + 0.5 * h * k2v;
            if !(u3 > 0.0) {
                return None;
            }
            let (k3u, k3v) = (v3, accel(u3));
            let u4 = u + h * k3u;
            let v4 = v + h * k3v;
            if !(u4 > 0.0) {
                return None;
            }
            let (k4u, k4v) = (v4, accel(u4));
            Some((
                u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
                v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
            ))
        };
        let Some((un, vn)) = rk(u, v).filter(|(un, vn)| un.is_finite() && vn.is_finite()) else {
            return Err(CapminError::Step(format!("cannot advance past x = {x}, u = {u:e}")));
        };
        if x + h == x {
            return Err(CapminError::Step(format!("step underflow at x = {x}")));
        }
        if !(un < u) || !(vn < 0.0) {
            return Err(CapminError::Step(format!(
                "u stopped decreasing at x = {x} (u = {un:e}, u' = {vn:e})"
            )));
        }
        mass += trapezoid(h, u, un, v, vn);
        energy += trapezoid(h, density(u, v), density(un, vn), density_dx(u, v), density_dx(un, vn));
        x += h;
        u = un;
        v = vn;
        xs.push(x);
        us.push(u);
        vs.push(v);
    }

    // Contact-line approach in σ = ln u with state (x, v, mass, energy).
    let rhs = |sigma: f64, v: f64| -> [f64; 4] {
        let u = sigma.exp();
        let dx = u / v;
        [dx, u * accel(u) / v, u * dx, density(u, v) * dx]
    };
    let d_sigma = -1e-3;
    let mut sigma = u.ln();
    let mut tail_dx = Vec::new();
    let mut tail_u = Vec::new();
    let mut tail_v = Vec::new();
    while u >= floor {
        let k1 = rhs(sigma, v);
        let k2 = rhs(sigma + 0.5 * d_sigma, v + 0.5 * d_sigma * k1[1]);
        let k3 = rhs(sigma + 0.5 * d_sigma, v + 0.5 * d_sigma * k2[1]);
        let k4 = rhs(sigma + d_sigma, v + d_sigma * k3[1]);
        let inc = |i: usize| d_sigma / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        let vn = v + inc(1);
        if !(vn < 0.0) || !vn.is_finite() {
            return Err(CapminError::Step(format!(
                "slope lost its sign near the contact line (u = {u:e}, u' = {vn:e})"
            )));
        }
        mass += inc(2);
        energy += inc(3);
        sigma += d_sigma;
        u = sigma.exp();
        v = vn;
        tail_dx.push(inc(0));
        tail_u.push(u);
        tail_v.push(vn);
    }

    let m = pot.m();
    let alpha = 2.0 / (m + 1.0);
    let u_last = u;
    let w_last = (u_last / pot.contact_prefactor()).powf(1.0 / alpha);
    mass += u_last * w_last / (alpha + 1.0);
    energy += 2.0 * pot.a() * u_last.powf(1.0 - m) * w_last / (alpha * (1.0 - m) + 1.0);

    // Distances to the contact line, accumulated from the far end.
    let mut tail_w = vec![0.0; tail_u.len()];
    let mut acc = w_last;
    for i in (0..tail_u.len()).rev() {
        tail_w[i] = acc;
        acc += tail_dx[i];
    }
    let r_bar = x + acc;

    let (micro_prefactor, micro_exponent) = micro_fit(
        m,
        tail_u.iter().zip(&tail_w).filter(|(&u, _)| u <= 10.0 * u_last),
    );
    for i in 0..tail_u.len() {
        let xi = r_bar - tail_w[i];
        if xi > *xs.last().expect("non-empty") {
            xs.push(xi);
            us.push(tail_u[i]);
            vs.push(tail_v[i]);
        }
    }

    Ok(Profile {
        u0,
        lambda,
        r_bar,
        mass: 2.0 * mass,
        energy: 2.0 * energy,
        micro_prefactor,
        micro_exponent,
        xs,
        us,
        ups: vs,
    })
}
