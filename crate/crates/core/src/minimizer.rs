//! Mass-constrained minimizers: every maximal height `u0` with `μ(u0) = M`,
//! their energies, and the mass at which two branches exchange optimality.
//!
//! Each admissible interval is sampled in increasing `u0`, switching to the
//! log-gap charts next to plateau ends, and split into runs on which `μ` is
//! monotone. A mass is located on each run by Brent iteration.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CapminError, Result};
use crate::extended::Extended;
use crate::numerics::logspace;
use crate::numerics::roots::{brent, BrentOptions};
use crate::potential::PotentialSpec;
use crate::profile::{Apex, Integrals, Profile, ProfileSolver};

pub const DEFAULT_GRID: usize = 200;
/// Relative energy window within which candidates count as co-winners.
pub const ENERGY_TIE_TOL: f64 = 1e-9;
const EXTENSIONS: usize = 2;
const HEIGHTS_PER_DECADE: f64 = 16.0;
/// Relative distance from a plateau end at which the log-gap chart takes over.
const CHART_GAP: f64 = 1e-3;

/// One sampled height.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub u0: f64,
    pub mass: f64,
    pub energy: f64,
    pub lambda: f64,
    pub interval: Option<usize>,
    pub segment: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub apex: Apex,
}

/// A maximal run of samples on which `μ` is monotone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub id: usize,
    pub interval: usize,
    /// Indices of the first and last sample of the run.
    pub first: usize,
    pub last: usize,
    pub increasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassSweep {
    pub points: Vec<SweepPoint>,
    pub segments: Vec<Segment>,
}

impl MassSweep {
    fn from_apexes(solver: &ProfileSolver, apexes: Vec<Apex>) -> Self {
        let mut points: Vec<SweepPoint> = apexes
            .into_par_iter()
            .map(|apex| sample(solver, apex))
            .collect();
        let segments = split_segments(&mut points);
        Self { points, segments }
    }

    /// CSV with header `u0,mu,energy,segment`; failed points are skipped.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u0", "mu", "energy", "segment"])?;
        for p in self.points.iter().filter(|p| p.error.is_none()) {
            let seg = p.segment.map_or(String::new(), |s| s.to_string());
            w.write_record([p.u0.to_string(), p.mass.to_string(), p.energy.to_string(), seg])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sample(solver: &ProfileSolver, apex: Apex) -> SweepPoint {
    let blank = |u0: f64, error: String| SweepPoint {
        u0,
        mass: f64::NAN,
        energy: f64::NAN,
        lambda: f64::NAN,
        interval: None,
        segment: None,
        error: Some(error),
        apex,
    };
    let interval = match solver.interval_of(apex) {
        Ok(i) => i,
        Err(e) => {
            let u0 = if let Apex::Height(u) = apex { u } else { f64::NAN };
            return blank(u0, e.to_string());
        }
    };
    match solver.integrals(apex) {
        Ok(i) => SweepPoint {
            u0: i.u0,
            mass: i.mass,
            energy: i.energy,
            lambda: i.lambda,
            interval: Some(interval),
            segment: None,
            error: None,
            apex,
        },
        Err(e) => blank(solver.height(apex).unwrap_or(f64::NAN), e.to_string()),
    }
}

/// Assigns global segment ids in sample order.
fn split_segments(points: &mut [SweepPoint]) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    let mut prev: Option<usize> = None;
    for i in 0..points.len() {
        if points[i].error.is_some() {
            continue;
        }
        let interval = points[i].interval.expect("valid point has an interval");
        let Some(j) = prev.filter(|&j| points[j].interval == Some(interval)) else {
            segments.push(Segment {
                id: segments.len(),
                interval,
                first: i,
                last: i,
                increasing: true,
            });
            points[i].segment = Some(segments.len() - 1);
            prev = Some(i);
            continue;
        };
        let up = points[i].mass >= points[j].mass;
        let seg = segments.last_mut().expect("open segment");
        if seg.first == seg.last {
            seg.increasing = up;
        }
        if seg.increasing == up || points[i].mass == points[j].mass {
            seg.last = i;
        } else {
            let id = segments.len();
            segments.push(Segment {
                id,
                interval,
                first: j,
                last: i,
                increasing: up,
            });
        }
        points[i].segment = Some(segments.len() - 1);
        prev = Some(i);
    }
    segments
}

/// Mass, energy and segment structure on a logarithmic grid of heights.
/// Heights outside the admissible set are flagged and skipped.
pub fn mass_sweep(spec: &PotentialSpec, u0_min: f64, u0_max: f64, n_points: usize) -> Result<MassSweep> {
    if !(u0_min > 0.0 && u0_max > u0_min) || n_points < 2 {
        return Err(CapminError::Param(format!(
            "need 0 < u0_min < u0_max and at least 2 points, got [{u0_min}, {u0_max}] x {n_points}"
        )));
    }
    let solver = ProfileSolver::new(spec)?;
    let apexes = logspace(u0_min, u0_max, n_points).into_iter().map(Apex::Height).collect();
    Ok(MassSweep::from_apexes(&solver, apexes))
}

/// A height with `μ(u0) = M` (within the mass tolerance).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchSolution {
    pub u0: f64,
    pub lambda: f64,
    pub mass: f64,
    pub mass_err: f64,
    /// Energy at mass `M`, to first order in the mass residual.
    pub energy: f64,
    pub interval_id: usize,
    pub branch_id: usize,
    #[serde(skip)]
    pub apex: Apex,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizerSolution {
    #[serde(rename = "M")]
    pub mass: f64,
    pub candidates: Vec<BranchSolution>,
    pub winners: Vec<usize>,
    pub profile: Profile,
}

impl MinimizerSolution {
    pub fn winner(&self) -> &BranchSolution {
        &self.candidates[self.winners[0]]
    }
}

/// Mass at which the two lowest branches have equal energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crossing {
    #[serde(rename = "M")]
    pub mass: f64,
    pub energy: f64,
    /// Signed energy difference of the two branches at `mass`.
    pub gap: f64,
    pub branches: [usize; 2],
    pub u0: [f64; 2],
}

/// Branch enumeration for one potential. Branch maps are built on first use
/// and reused by later queries.
pub struct Minimizer {
    solver: ProfileSolver,
    maps: [OnceLock<Result<MassSweep>>; EXTENSIONS + 1],
}

impl Minimizer {
    pub fn new(spec: &PotentialSpec) -> Result<Self> {
        Ok(Self::from_solver(ProfileSolver::new(spec)?))
    }

    pub fn from_solver(solver: ProfileSolver) -> Self {
        Self {
            solver,
            maps: Default::default(),
        }
    }

    pub fn solver(&self) -> &ProfileSolver {
        &self.solver
    }

    /// Samples of every admissible interval at extension level `level`.
    pub fn branch_map(&self, level: usize) -> Result<&MassSweep> {
        let level = level.min(EXTENSIONS);
        self.maps[level]
            .get_or_init(|| Ok(MassSweep::from_apexes(&self.solver, self.branch_apexes(level))))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Whether `apex` is a sample at the outer limit of the level's scan,
    /// beyond which the branch continues unexplored.
    fn at_scan_limit(level: usize, apex: Apex) -> bool {
        let (u_min, cap, l_max) = scan_limits(level);
        match apex {
            Apex::Height(u) => u == u_min || u == cap,
            Apex::BelowPlateau { log_gap, .. } | Apex::AbovePlateau { log_gap, .. } => log_gap == l_max,
        }
    }

    fn branch_apexes(&self, level: usize) -> Vec<Apex> {
        let land = self.solver.landscape();
        let (u_min, cap, l_max) = scan_limits(level);
        let mut out = Vec::new();
        for (idx, iv) in land.intervals().iter().enumerate() {
            let lo_h = if iv.lo_plateau.is_some() {
                let logs = plateau_logs(-(CHART_GAP * iv.lo).ln(), l_max);
                out.extend(logs.iter().rev().map(|&l| Apex::AbovePlateau {
                    interval: idx,
                    log_gap: l,
                }));
                iv.lo * (1.0 + CHART_GAP)
            } else {
                u_min.max(iv.lo * (1.0 + CHART_GAP))
            };
            let hi_h = match iv.hi {
                Extended::Finite(hi) => hi * (1.0 - CHART_GAP),
                Extended::Infinite => cap,
            };
            if hi_h > lo_h {
                let n = ((hi_h / lo_h).log10() * HEIGHTS_PER_DECADE).ceil().max(8.0) as usize + 1;
                out.extend(logspace(lo_h, hi_h, n).into_iter().map(Apex::Height));
            }
            if iv.hi.finite().is_some() {
                let hi = iv.hi.finite().expect("finite");
                let logs = plateau_logs(-(CHART_GAP * hi).ln(), l_max);
                out.extend(logs.into_iter().map(|l| Apex::BelowPlateau {
                    interval: idx,
                    log_gap: l,
                }));
            }
        }
        out
    }

    fn solve_on_segment(
        &self,
        map: &MassSweep,
        seg: &Segment,
        mass: f64,
        mass_tol: f64,
    ) -> Result<Option<BranchSolution>> {
        let pts = &map.points;
        let idx: Vec<usize> = (seg.first..=seg.last)
            .filter(|&i| pts[i].error.is_none() && pts[i].interval == Some(seg.interval))
            .collect();
        for w in idx.windows(2) {
            let (a, b) = (&pts[w[0]], &pts[w[1]]);
            let (fa, fb) = (a.mass - mass, b.mass - mass);
            let first = w[0] == idx[0];
            if fa == 0.0 && first {
                return Ok(Some(self.branch(a.apex, mass, seg)?));
            }
            if fa * fb < 0.0 || fb == 0.0 {
                let apex = self.bracket_root(a.apex, b.apex, fa, fb, mass, mass_tol)?;
                return Ok(Some(self.branch(apex, mass, seg)?));
            }
        }
        Ok(None)
    }

    fn branch(&self, apex: Apex, mass: f64, seg: &Segment) -> Result<BranchSolution> {
        let i: Integrals = self.solver.integrals(apex)?;
        Ok(BranchSolution {
            u0: i.u0,
            lambda: i.lambda,
            mass: i.mass,
            mass_err: i.mass - mass,
            energy: i.energy + i.lambda * (mass - i.mass),
            interval_id: seg.interval,
            branch_id: seg.id,
            apex,
        })
    }

    fn bracket_root(&self, a: Apex, b: Apex, fa: f64, fb: f64, mass: f64, tol: f64) -> Result<Apex> {
        let opts = BrentOptions::default().ftol(tol);
        let solver = &self.solver;
        let mass_at = |apex: Apex| solver.integrals(apex).map(|i| i.mass - mass);
        match (a, b) {
            (
                Apex::BelowPlateau { interval, log_gap: la },
                Apex::BelowPlateau { log_gap: lb, .. },
            ) => {
                let mk = |l: f64| Apex::BelowPlateau { interval, log_gap: l };
                let r = brent(|l| mass_at(mk(l)), la, lb, fa, fb, opts)?;
                Ok(mk(r.x))
            }
            (
                Apex::AbovePlateau { interval, log_gap: la },
                Apex::AbovePlateau { log_gap: lb, .. },
            ) => {
                let mk = |l: f64| Apex::AbovePlateau { interval, log_gap: l };
                let r = brent(|l| mass_at(mk(l)), la, lb, fa, fb, opts)?;
                Ok(mk(r.x))
            }
            _ => {
                let (ua, ub) = (solver.height(a)?, solver.height(b)?);
                let r = brent(|u| mass_at(Apex::Height(u)), ua, ub, fa, fb, opts)?;
                Ok(Apex::Height(r.x))
            }
        }
    }

    /// Solutions found at `level`, and whether some segment may still reach
    /// `mass` beyond the scanned range.
    fn solve_level(&self, level: usize, mass: f64, mass_tol: f64) -> Result<(Vec<BranchSolution>, bool)> {
        let map = self.branch_map(level)?;
        let mut out = Vec::new();
        let mut open = false;
        for seg in &map.segments {
            if let Some(b) = self.solve_on_segment(map, seg, mass, mass_tol)? {
                out.push(b);
                continue;
            }
            let (a, b) = (&map.points[seg.first], &map.points[seg.last]);
            let near = if (a.mass - mass).abs() < (b.mass - mass).abs() { a } else { b };
            open |= Self::at_scan_limit(level, near.apex);
        }
        Ok((out, open))
    }

    /// Every branch with `|μ(u0) - M| <= mass_tol`.
    pub fn solve_mass(&self, mass: f64, mass_tol: f64) -> Result<Vec<BranchSolution>> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(CapminError::Param(format!("mass must be positive, got {mass}")));
        }
        if !(mass_tol > 0.0) {
            return Err(CapminError::Param(format!("mass tolerance must be positive, got {mass_tol}")));
        }
        for level in 0..=EXTENSIONS {
            let (found, open) = self.solve_level(level, mass, mass_tol)?;
            if !found.is_empty() && (!open || level == EXTENSIONS) {
                return Ok(found);
            }
        }
        let map = self.branch_map(EXTENSIONS)?;
        let (lo, hi) = map
            .points
            .iter()
            .filter(|p| p.error.is_none())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.mass), hi.max(p.mass)));
        Err(CapminError::NoBracket {
            mass,
            reason: format!("scanned masses span [{lo:e}, {hi:e}]"),
        })
    }

    pub fn global_minimizer(&self, mass: f64, mass_tol: f64, n_grid: usize) -> Result<MinimizerSolution> {
        let mut candidates = self.solve_mass(mass, mass_tol)?;
        candidates.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        let best = candidates[0].energy;
        let window = ENERGY_TIE_TOL * best.abs();
        let winners = (0..candidates.len())
            .filter(|&i| candidates[i].energy - best <= window)
            .collect::<Vec<_>>();
        let profile = self.solver.profile(candidates[winners[0]].apex, n_grid)?;
        Ok(MinimizerSolution {
            mass,
            candidates,
            winners,
            profile,
        })
    }

    /// Branch solutions at `mass` keyed by segment id, using the map that
    /// covers `mass`.
    fn branches_at(&self, mass: f64) -> Vec<BranchSolution> {
        self.solve_mass(mass, 1e-12 * mass).unwrap_or_default()
    }

    /// First mass in `[m_lo, m_hi]` where the minimal-energy branch changes,
    /// located to a relative energy gap of `1e-9`.
    pub fn find_energy_crossing(&self, m_lo: f64, m_hi: f64) -> Result<Option<Crossing>> {
        if !(m_lo > 0.0 && m_hi > m_lo) {
            return Err(CapminError::Param(format!("invalid mass range [{m_lo}, {m_hi}]")));
        }
        let grid = logspace(m_lo, m_hi, 41);
        let tables: Vec<Vec<BranchSolution>> = grid.par_iter().map(|&m| self.branches_at(m)).collect();
        let winner = |t: &[BranchSolution]| {
            t.iter()
                .min_by(|a, b| a.energy.total_cmp(&b.energy))
                .map(|b| b.branch_id)
        };
        for j in 0..grid.len() - 1 {
            let (Some(wa), Some(wb)) = (winner(&tables[j]), winner(&tables[j + 1])) else {
                continue;
            };
            if wa == wb {
                continue;
            }
            let has = |t: &[BranchSolution], id| t.iter().any(|b| b.branch_id == id);
            if !(has(&tables[j], wb) && has(&tables[j + 1], wa)) {
                continue;
            }
            return self.refine_crossing(grid[j], grid[j + 1], wa, wb).map(Some);
        }
        Ok(None)
    }

    fn energy_on(&self, id: usize, mass: f64) -> Result<BranchSolution> {
        let map = (0..=EXTENSIONS)
            .map(|l| self.branch_map(l))
            .find(|m| m.as_ref().is_ok_and(|m| m.segments.iter().any(|s| s.id == id)))
            .unwrap_or_else(|| self.branch_map(0))?;
        let seg = map.segments[id];
        self.solve_on_segment(map, &seg, mass, 1e-13 * mass)?
            .ok_or_else(|| CapminError::NoBracket {
                mass,
                reason: format!("branch {id} does not reach this mass"),
            })
    }

    fn refine_crossing(&self, lo: f64, hi: f64, a: usize, b: usize) -> Result<Crossing> {
        let gap = |m: f64| -> Result<f64> {
            Ok(self.energy_on(a, m)?.energy - self.energy_on(b, m)?.energy)
        };
        let (ga, gb) = (gap(lo)?, gap(hi)?);
        let scale = self.energy_on(a, lo)?.energy.abs();
        let opts = BrentOptions::default().ftol(1e-10 * scale).xtol_rel(1e-15);
        let root = brent(gap, lo, hi, ga, gb, opts)?;
        let (sa, sb) = (self.energy_on(a, root.x)?, self.energy_on(b, root.x)?);
        Ok(Crossing {
            mass: root.x,
            energy: 0.5 * (sa.energy + sb.energy),
            gap: sa.energy - sb.energy,
            branches: [a, b],
            u0: [sa.u0, sb.u0],
        })
    }
}

fn scan_limits(level: usize) -> (f64, f64, f64) {
    let k = level.min(EXTENSIONS) as i32;
    (1e-6 * 1e-3f64.powi(k), 1e3 * 1e3f64.powi(k), 1e4 * 100f64.powi(k))
}

/// Log-gap samples: unit-and-a-half steps up to 45, then doubling.
fn plateau_logs(l0: f64, l_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut l = l0 + 1.5;
    while l < 45.0 {
        out.push(l);
        l += 1.5;
    }
    while l < l_max {
        out.push(l);
        l *= 2.0;
    }
    out.push(l_max);
    out
}

pub fn solve_mass(spec: &PotentialSpec, mass: f64, mass_tol: f64) -> Result<Vec<BranchSolution>> {
    Minimizer::new(spec)?.solve_mass(mass, mass_tol)
}

/// Minimal-energy solution with the default mass tolerance `1e-8 M`.
pub fn global_minimizer(spec: &PotentialSpec, mass: f64) -> Result<MinimizerSolution> {
    Minimizer::new(spec)?.global_minimizer(mass, 1e-8 * mass, DEFAULT_GRID)
}

pub fn find_energy_crossing(spec: &PotentialSpec, m_lo: f64, m_hi: f64) -> Result<Option<Crossing>> {
    Minimizer::new(spec)?.find_energy_crossing(m_lo, m_hi)
}
