//! Shape of the weighted potential `R = Q/s`: stationary points, the
//! admissible set of maximal heights, the pancake height `e*`, the
//! injectivity level `z0`, closed-form thresholds and the regime verdict.
//!
//! A height `s` is admissible when `R'(s) < 0` and `R(t) > R(s)` for every
//! `t < s`. Because `R(0+) = +inf`, the admissible set is a union of open
//! intervals: each one ends at a new record minimum of `R` (or at infinity)
//! and, except for the first, starts where `R` drops back below the previous
//! record level.

use serde::{Deserialize, Serialize};

use crate::error::{CapminError, Result};
use crate::extended::Extended;
use crate::numerics::logspace;
use crate::numerics::roots::{brent, BrentOptions};
use crate::potential::{Family, Potential, PotentialSpec};

pub const SCAN_MIN: f64 = 1e-8;
pub const SCAN_MAX: f64 = 1e8;
pub const SCAN_POINTS: usize = 4096;
/// Stationary points of `R` closer than this (relative) are not resolved.
const MIN_SEPARATION: f64 = 1e-10;
/// Relative level difference under which two minima of `R` count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryKind {
    Min,
    Max,
}

/// A zero of `R'` (equivalently of `G`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub s: f64,
    pub kind: StationaryKind,
    /// `R(s)`.
    pub level: f64,
    /// `Q''(s)`, which equals `s R''(s)` at a stationary point.
    pub qpp: f64,
}

/// One connected component `(lo, hi)` of the admissible set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleInterval {
    pub lo: f64,
    pub hi: Extended,
    /// When `lo > 0`: the earlier record minimum whose level `R` regains at `lo`.
    pub lo_plateau: Option<StationaryPoint>,
    /// When `hi` is finite it is a record minimum of `R`.
    pub hi_plateau: Option<StationaryPoint>,
}

impl AdmissibleInterval {
    pub fn contains(&self, s: f64) -> bool {
        s > self.lo && self.hi.gt(s)
    }
}

impl Serialize for AdmissibleInterval {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (Extended::Finite(self.lo), self.hi).serialize(serializer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Droplet,
    Pancake,
    Transition,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniqueness {
    Unique,
    NonUniqueSomewhere,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub regime: Regime,
    pub uniqueness: Uniqueness,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
}

/// Level `z0` at which `R` stops being injective, with its extreme preimages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InjectivityLevel {
    /// `R` is strictly decreasing on `(0, inf)`.
    Injective,
    Level { z0: f64, e_min: f64, e_max: f64 },
}

/// Serializable summary of a [`Landscape`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandscapeReport {
    pub e_star: Extended,
    pub e_star_tie: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0: Option<Extended>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
    pub admissible_intervals: Vec<AdmissibleInterval>,
    pub s1: Extended,
    pub stationary_points: Vec<StationaryPoint>,
    pub regime: Regime,
    pub uniqueness: Uniqueness,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
}

/// Stationary structure of `R` for one potential.
#[derive(Clone, Debug)]
pub struct Landscape {
    potential: Potential,
    stationary: Vec<StationaryPoint>,
    intervals: Vec<AdmissibleInterval>,
    e_star: Extended,
    e_star_tie: bool,
}

fn refine_opts() -> BrentOptions {
    BrentOptions::default().xtol_rel(2.0 * f64::EPSILON)
}

impl Landscape {
    pub fn new(spec: &PotentialSpec) -> Result<Self> {
        Self::from_potential(spec.validate()?)
    }

    pub fn from_potential(potential: Potential) -> Result<Self> {
        let stationary = scan_stationary(&potential)?;
        let (intervals, e_star, e_star_tie) = build_intervals(&potential, &stationary)?;
        Ok(Self {
            potential,
            stationary,
            intervals,
            e_star,
            e_star_tie,
        })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn stationary_points(&self) -> &[StationaryPoint] {
        &self.stationary
    }

    pub fn intervals(&self) -> &[AdmissibleInterval] {
        &self.intervals
    }

    pub fn e_star(&self) -> Extended {
        self.e_star
    }

    /// Several global minimizers of `R` at the same level were found; `e*`
    /// is the leftmost.
    pub fn e_star_tie(&self) -> bool {
        self.e_star_tie
    }

    /// Membership in the admissible set, using the running minimum of `R`
    /// over the stationary points left of `s`.
    pub fn admissible_contains(&self, s: f64) -> bool {
        if !(s > 0.0) || !s.is_finite() {
            return false;
        }
        if self.potential.g(s) <= 0.0 {
            return false;
        }
        let r = self.potential.r(s);
        self.stationary
            .iter()
            .take_while(|c| c.s < s)
            .filter(|c| c.kind == StationaryKind::Min)
            .all(|c| c.level > r)
    }

    /// Index of the admissible interval containing `s`.
    pub fn interval_of(&self, s: f64) -> Option<usize> {
        self.intervals.iter().position(|iv| iv.contains(s))
    }

    /// `z0`, `e_min` and `e_max`; `None` when `e*` is finite.
    pub fn injectivity(&self) -> Result<Option<InjectivityLevel>> {
        if !self.e_star.is_infinite() {
            return Ok(None);
        }
        let Some(lowest) = self
            .stationary
            .iter()
            .filter(|c| c.kind == StationaryKind::Min)
            .min_by(|a, b| a.level.total_cmp(&b.level))
        else {
            return Ok(Some(InjectivityLevel::Injective));
        };
        let z0 = lowest.level;
        let pot = &self.potential;
        // Largest preimage: beyond the last stationary point R decreases to R(inf) < z0.
        let last = self.stationary.last().expect("non-empty").s;
        let (mut lo, mut hi) = (last, last * 2.0);
        while pot.r(hi) >= z0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(CapminError::Resolution(format!(
                    "R never drops below z0 = {z0} after its last stationary point"
                )));
            }
        }
        let f = |s: f64| Ok(pot.r(s) - z0);
        let e_max = brent(f, lo, hi, pot.r(lo) - z0, pot.r(hi) - z0, refine_opts())?.x;
        Ok(Some(InjectivityLevel::Level {
            z0,
            e_min: lowest.s,
            e_max,
        }))
    }

    /// First zero of `Q` (where `Q` stops being positive).
    pub fn first_zero_of_q(&self) -> Result<Extended> {
        let pot = &self.potential;
        let grid = logspace(SCAN_MIN, SCAN_MAX, SCAN_POINTS);
        for w in grid.windows(2) {
            let (qa, qb) = (pot.q(w[0]), pot.q(w[1]));
            if qa > 0.0 && qb <= 0.0 {
                let f = |s: f64| Ok(pot.q(s));
                return Ok(Extended::Finite(brent(f, w[0], w[1], qa, qb, refine_opts())?.x));
            }
        }
        Ok(Extended::Infinite)
    }

    /// Regime and uniqueness verdict.
    pub fn classification(&self) -> Result<Classification> {
        match self.potential.family() {
            Family::Custom => Ok(self.inferred_classification()),
            _ => classify_closed_form(self.potential.spec()),
        }
    }

    /// Regime read off from `e*` and the limit of `Q`, independent of the
    /// closed-form decision tree.
    pub fn inferred_regime(&self) -> Regime {
        let pot = &self.potential;
        if self.e_star.finite().is_some() {
            return Regime::Pancake;
        }
        match pot.spreading_limit() {
            Extended::Finite(l) if l > 0.0 => Regime::Droplet,
            Extended::Finite(l) if l == 0.0 => {
                let decreasing = logspace(SCAN_MIN, SCAN_MAX, 512)
                    .into_iter()
                    .all(|s| pot.values(s).qp < 0.0);
                if decreasing {
                    Regime::Transition
                } else {
                    Regime::Unknown
                }
            }
            _ => Regime::Unknown,
        }
    }

    fn inferred_classification(&self) -> Classification {
        let pot = &self.potential;
        let upper = self.e_star.finite().unwrap_or(SCAN_MAX).min(SCAN_MAX);
        let convex = logspace(SCAN_MIN, upper, 1000)
            .into_iter()
            .all(|s| pot.values(s).qpp >= 0.0);
        let uniqueness = if convex {
            Uniqueness::Unique
        } else if matches!(self.injectivity(), Ok(Some(InjectivityLevel::Level { .. }))) {
            Uniqueness::NonUniqueSomewhere
        } else {
            Uniqueness::Unknown
        };
        Classification {
            regime: self.inferred_regime(),
            uniqueness,
        }
    }

    pub fn report(&self) -> Result<LandscapeReport> {
        let class = self.classification()?;
        let (z0, e_min, e_max) = match self.injectivity()? {
            None => (None, None, None),
            Some(InjectivityLevel::Injective) => (Some(Extended::Infinite), None, None),
            Some(InjectivityLevel::Level { z0, e_min, e_max }) => {
                (Some(Extended::Finite(z0)), Some(e_min), Some(e_max))
            }
        };
        Ok(LandscapeReport {
            e_star: self.e_star,
            e_star_tie: self.e_star_tie,
            z0,
            e_min,
            e_max,
            admissible_intervals: self.intervals.clone(),
            s1: self.first_zero_of_q()?,
            stationary_points: self.stationary.clone(),
            regime: class.regime,
            uniqueness: class.uniqueness,
            thresholds: thresholds(self.potential.spec()).ok(),
        })
    }
}

fn scan_stationary(pot: &Potential) -> Result<Vec<StationaryPoint>> {
    let grid = logspace(SCAN_MIN, SCAN_MAX, SCAN_POINTS);
    let gs: Vec<f64> = grid.iter().map(|&s| pot.g(s)).collect();
    if let Some(i) = gs.iter().position(|g| !g.is_finite()) {
        return Err(CapminError::Resolution(format!("G is not finite at s = {:e}", grid[i])));
    }
    if gs[0] <= 0.0 {
        return Err(CapminError::Resolution(format!(
            "R must decrease near 0, but G({:e}) = {:e}",
            grid[0], gs[0]
        )));
    }
    let mut out: Vec<StationaryPoint> = Vec::new();
    for i in 0..grid.len() - 1 {
        let (ga, gb) = (gs[i], gs[i + 1]);
        if (ga > 0.0) == (gb > 0.0) {
            continue;
        }
        let f = |s: f64| Ok(pot.g(s));
        let root = brent(f, grid[i], grid[i + 1], ga, gb, refine_opts())?;
        let s = root.x;
        if let Some(prev) = out.last() {
            if (s - prev.s).abs() <= MIN_SEPARATION * s {
                return Err(CapminError::Resolution(format!(
                    "stationary points of R at {:e} and {s:e} are closer than {MIN_SEPARATION:e}",
                    prev.s
                )));
            }
        }
        let v = pot.values(s);
        out.push(StationaryPoint {
            s,
            // G > 0 on the left means R decreases into s.
            kind: if ga > 0.0 {
                StationaryKind::Min
            } else {
                StationaryKind::Max
            },
            level: v.r,
            qpp: v.qpp,
        });
    }
    Ok(out)
}

/// Smallest `s > start` with `R(s) = level`, given `R(start) > level` and
/// `R` decreasing to `end_level < level` on `(start, end)`.
fn find_descent_crossing(pot: &Potential, start: f64, end: Option<f64>, level: f64) -> Result<f64> {
    let f = |s: f64| Ok(pot.r(s) - level);
    let mut lo = start;
    let mut hi = match end {
        Some(e) => e,
        None => start * 2.0,
    };
    if end.is_none() {
        while pot.r(hi) >= level {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(CapminError::Resolution(format!(
                    "no crossing of level {level} beyond {start:e}"
                )));
            }
        }
    }
    Ok(brent(f, lo, hi, pot.r(lo) - level, pot.r(hi) - level, refine_opts())?.x)
}

fn build_intervals(
    pot: &Potential,
    stationary: &[StationaryPoint],
) -> Result<(Vec<AdmissibleInterval>, Extended, bool)> {
    let r_inf = pot.r_at_infinity();
    let mut intervals = Vec::new();
    let mut lo = 0.0;
    let mut lo_plateau = None;
    let mut record: Option<StationaryPoint> = None;
    let mut open = true;
    let mut tie = false;

    for (i, c) in stationary.iter().enumerate() {
        match (open, c.kind) {
            (true, StationaryKind::Min) => {
                intervals.push(AdmissibleInterval {
                    lo,
                    hi: Extended::Finite(c.s),
                    lo_plateau,
                    hi_plateau: Some(*c),
                });
                record = Some(*c);
                open = false;
            }
            (true, StationaryKind::Max) => {
                return Err(CapminError::Resolution(format!(
                    "inconsistent stationary structure: maximum of R at {:e} while descending",
                    c.s
                )));
            }
            (false, StationaryKind::Min) => {
                let rec = record.expect("closed run has a record");
                if (c.level - rec.level).abs() <= TIE_TOLERANCE * rec.level.abs().max(1e-300) {
                    tie = true;
                }
            }
            (false, StationaryKind::Max) => {
                let rec = record.expect("closed run has a record");
                let next = stationary.get(i + 1);
                let end_below = match next {
                    Some(n) => n.level < rec.level,
                    None => !r_inf.gt(rec.level) && r_inf != Extended::Finite(rec.level),
                };
                if end_below && c.level > rec.level {
                    lo = find_descent_crossing(pot, c.s, next.map(|n| n.s), rec.level)?;
                    lo_plateau = Some(rec);
                    open = true;
                    tie = false;
                }
            }
        }
    }
    if open {
        intervals.push(AdmissibleInterval {
            lo,
            hi: Extended::Infinite,
            lo_plateau,
            hi_plateau: None,
        });
    }
    let e_star = intervals.last().expect("at least one interval").hi;
    Ok((intervals, e_star, tie && e_star.finite().is_some()))
}

/// `e*`: the smallest global minimizer of `R`, or infinite.
pub fn compute_e_star(spec: &PotentialSpec) -> Result<Extended> {
    Ok(Landscape::new(spec)?.e_star())
}

/// `z0`, `e_min`, `e_max`. Requires `e* = inf`.
pub fn compute_z0_interval(spec: &PotentialSpec) -> Result<InjectivityLevel> {
    let land = Landscape::new(spec)?;
    land.injectivity()?.ok_or_else(|| {
        CapminError::NotApplicable(format!("e* = {} is finite", land.e_star()))
    })
}

pub fn admissible_contains(spec: &PotentialSpec, s: f64) -> Result<bool> {
    Ok(Landscape::new(spec)?.admissible_contains(s))
}

/// Closed-form thresholds `c1`, `c2` (`model_a`, `-S > 0`) and `c3`
/// (`model_a_gravity`).
pub fn thresholds(spec: &PotentialSpec) -> Result<Thresholds> {
    let (a, m, n) = (spec.a, spec.m, spec.n);
    match spec.family {
        Family::ModelA => {
            let spread = -spec.s;
            if spread <= 0.0 {
                return Err(CapminError::NotApplicable(
                    "c1 and c2 require -S > 0".into(),
                ));
            }
            let tail = (spread / (m - n)).powf((m - n) / (m - 1.0));
            let c1 = (m - 1.0) * (a / (n - 1.0)).powf((n - 1.0) / (m - 1.0)) * tail;
            let c2 = (m - 1.0) / n * (a * m / (n - 1.0)).powf((n - 1.0) / (m - 1.0)) * tail;
            Ok(Thresholds {
                c1: Some(c1),
                c2: Some(c2),
                c3: None,
            })
        }
        Family::ModelAGravity => {
            if spec.d <= 0.0 {
                return Err(CapminError::NotApplicable("c3 requires D > 0".into()));
            }
            let c3 = (m + 1.0) / (n * (n - 1.0))
                * (a * m * (m - 1.0) / (n + 1.0)).powf((n + 1.0) / (m + 1.0))
                * (spec.d / (m - n)).powf((m - n) / (m + 1.0));
            Ok(Thresholds {
                c1: None,
                c2: None,
                c3: Some(c3),
            })
        }
        _ => Err(CapminError::NotApplicable(format!(
            "no closed-form thresholds for {:?}",
            spec.family
        ))),
    }
}

fn classify_closed_form(spec: &PotentialSpec) -> Result<Classification> {
    use Regime::*;
    use Uniqueness::*;
    let spread = -spec.s;
    let b = spec.b;
    let (regime, uniqueness) = match spec.family {
        Family::ModelA => {
            if spread > 0.0 {
                let t = thresholds(spec)?;
                let (c1, c2) = (t.c1.expect("c1"), t.c2.expect("c2"));
                let regime = if b < c1 { Droplet } else { Pancake };
                let uniq = if b <= 0.0 || b >= c1 {
                    Unique
                } else if b >= c2 {
                    NonUniqueSomewhere
                } else {
                    Uniqueness::Unknown
                };
                (regime, uniq)
            } else if spread < 0.0 || b > 0.0 {
                (Pancake, Unique)
            } else {
                (Transition, Unique)
            }
        }
        Family::ModelB => {
            let regime = if spread > 0.0 {
                Droplet
            } else if spread < 0.0 {
                Pancake
            } else {
                Transition
            };
            (regime, Unique)
        }
        Family::ModelAGravity => {
            let c3 = thresholds(spec)?.c3.expect("c3");
            let uniq = if spread <= 0.0 || b <= c3 {
                Unique
            } else {
                Uniqueness::Unknown
            };
            (Pancake, uniq)
        }
        Family::ModelBGravity => (Pancake, Unique),
        Family::Custom => unreachable!("custom potentials are classified from their landscape"),
    };
    Ok(Classification { regime, uniqueness })
}

/// Regime and uniqueness verdict for a potential.
pub fn classify(spec: &PotentialSpec) -> Result<Classification> {
    let pot = spec.validate()?;
    match pot.family() {
        Family::Custom => Landscape::from_potential(pot)?.classification(),
        _ => classify_closed_form(spec),
    }
}
