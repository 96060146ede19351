use capmin::landscape::Landscape;
use capmin::profile::{Apex, ProfileSolver};
use capmin::{find_energy_crossing, global_minimizer, mass_sweep, CapminError, Minimizer, PotentialSpec};
use proptest::prelude::*;

fn non_unique() -> PotentialSpec {
    PotentialSpec::model_a(1.0, 1.8, -1.0, 2.5, 2.0)
}

fn fig3(s: f64) -> PotentialSpec {
    PotentialSpec::model_a(1.0, 0.0, s, 2.5, 2.0)
}

/// Heights with `μ = M` found by plain bisection on a dense height grid.
fn brute_force_roots(spec: &PotentialSpec, mass: f64) -> Vec<f64> {
    let solver = ProfileSolver::new(spec).unwrap();
    let mu = |u: f64| solver.integrals(Apex::Height(u)).map(|i| i.mass - mass).ok();
    let n = 3000;
    let grid: Vec<f64> = (0..n).map(|i| 1e-3 * 1e6f64.powf(i as f64 / (n - 1) as f64)).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&u| mu(u)).collect();
    let mut roots = Vec::new();
    for i in 0..n - 1 {
        let (Some(fa), Some(fb)) = (vals[i], vals[i + 1]) else {
            continue;
        };
        if fa * fb > 0.0 {
            continue;
        }
        let (mut a, mut b, mut fa) = (grid[i], grid[i + 1], fa);
        for _ in 0..80 {
            let c = 0.5 * (a + b);
            let Some(fc) = mu(c) else { break };
            if fa * fc <= 0.0 {
                b = c;
            } else {
                a = c;
                fa = fc;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

fn near_plateau(land: &Landscape, u: f64) -> bool {
    let ends = land
        .intervals()
        .iter()
        .flat_map(|iv| [Some(iv.lo), iv.hi.finite()])
        .flatten()
        .filter(|&e| e > 0.0);
    ends.into_iter().any(|e| (u - e).abs() <= 1e-4 * e)
}

#[test]
fn fig3_masses_have_a_single_branch() {
    for s in [-2.5, -1.0, 0.0, 1.0] {
        let sol = global_minimizer(&fig3(s), 20.0).unwrap();
        assert_eq!(sol.candidates.len(), 1, "S={s}");
        assert!(sol.winner().mass_err.abs() <= 1e-2);
        assert_eq!(sol.winners, vec![0]);
        let pot = fig3(s).validate().unwrap();
        let residual = sol.profile.first_integral_residual(&pot);
        assert!(residual <= 1e-8 * pot.q(sol.winner().u0).abs().max(1.0));
    }
}

#[test]
fn branches_match_brute_force_roots() {
    let spec = non_unique();
    let land = Landscape::new(&spec).unwrap();
    for mass in [0.5, 30.0, 100.0, 1000.0] {
        let found = Minimizer::new(&spec).unwrap().solve_mass(mass, 1e-10 * mass).unwrap();
        let mut ours: Vec<f64> = found.iter().map(|b| b.u0).filter(|&u| !near_plateau(&land, u)).collect();
        let mut oracle: Vec<f64> = brute_force_roots(&spec, mass)
            .into_iter()
            .filter(|&u| !near_plateau(&land, u))
            .collect();
        ours.sort_by(f64::total_cmp);
        oracle.sort_by(f64::total_cmp);
        assert_eq!(ours.len(), oracle.len(), "M={mass}: {ours:?} vs {oracle:?}");
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-7 * b, "M={mass}: {a} vs {b}");
        }
        for b in &found {
            assert!(b.mass_err.abs() <= 1e-10 * mass);
        }
    }
}

#[test]
fn non_unique_spec_has_several_monotone_segments() {
    let m = Minimizer::new(&non_unique()).unwrap();
    assert!(m.branch_map(0).unwrap().segments.len() >= 2);

    let sweep = mass_sweep(&non_unique(), 1e-2, 1e2, 400).unwrap();
    let ids: std::collections::BTreeSet<usize> = sweep.points.iter().filter_map(|p| p.segment).collect();
    assert!(ids.len() >= 2);
    // Independent count of sign changes of the finite-difference slope.
    let valid: Vec<_> = sweep.points.iter().filter(|p| p.error.is_none()).collect();
    let mut changes = 0;
    let mut last = 0.0f64;
    for w in valid.windows(2) {
        if w[0].interval != w[1].interval {
            last = 0.0;
            continue;
        }
        let d = w[1].mass - w[0].mass;
        if d != 0.0 && last != 0.0 && d.signum() != last.signum() {
            changes += 1;
        }
        if d != 0.0 {
            last = d;
        }
    }
    assert!(changes >= 1);
}

#[test]
fn non_unique_mass_admits_several_branches() {
    let branches = Minimizer::new(&non_unique()).unwrap().solve_mass(100.0, 1e-6).unwrap();
    assert!(branches.len() >= 2);
}

#[test]
fn winners_swap_across_the_energy_crossing() {
    let spec = non_unique();
    let c = find_energy_crossing(&spec, 1e-2, 1e4).unwrap().expect("crossing");
    assert!(c.gap.abs() <= 1e-8 * c.energy.abs(), "{c:?}");
    let m = Minimizer::new(&spec).unwrap();
    let at = |mass: f64| m.global_minimizer(mass, 1e-12 * mass, 32).unwrap();
    let below = at(c.mass * (1.0 - 1e-3));
    let above = at(c.mass * (1.0 + 1e-3));
    assert_ne!(below.winner().branch_id, above.winner().branch_id);
    assert!(c.branches.contains(&below.winner().branch_id));
    assert!(c.branches.contains(&above.winner().branch_id));

    let tie = at(c.mass);
    assert_eq!(tie.winners.len(), 2, "{:?}", tie.candidates);
}

#[test]
fn convex_potentials_have_no_crossing() {
    for s in [-2.5, 1.0] {
        assert!(find_energy_crossing(&fig3(s), 1e-1, 1e4).unwrap().is_none());
    }
}

#[test]
fn droplet_height_grows_with_mass() {
    let m = Minimizer::new(&fig3(-2.5)).unwrap();
    let heights: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&mass| m.global_minimizer(mass, 1e-8 * mass, 32).unwrap().winner().u0)
        .collect();
    assert!(heights.windows(2).all(|w| w[1] > w[0]), "{heights:?}");
}

#[test]
fn large_pancakes_sit_at_the_plateau() {
    let spec = fig3(1.0);
    let e_star = Landscape::new(&spec).unwrap().e_star().finite().unwrap();
    for mass in [1e4, 1e6] {
        let u0 = global_minimizer(&spec, mass).unwrap().winner().u0;
        assert!((u0 - e_star).abs() <= 1e-3 * e_star, "M={mass}: {u0}");
    }
}

#[test]
fn rejects_bad_masses() {
    let m = Minimizer::new(&fig3(-1.0)).unwrap();
    assert!(matches!(m.solve_mass(-1.0, 1e-8), Err(CapminError::Param(_))));
    assert!(matches!(m.solve_mass(1.0, 0.0), Err(CapminError::Param(_))));
    assert!(matches!(mass_sweep(&fig3(-1.0), 2.0, 1.0, 10), Err(CapminError::Param(_))));
}

#[test]
fn sweep_csv_has_expected_header() {
    let sweep = mass_sweep(&non_unique(), 1e-1, 10.0, 20).unwrap();
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("u0,mu,energy,segment"));
    assert!(text.lines().count() > 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn winner_has_least_energy_among_candidates(s in -2.5f64..1.5, log_m in -1.0f64..4.0) {
        let mass = 10f64.powf(log_m);
        let sol = global_minimizer(&fig3(s), mass).unwrap();
        let best = sol.winner().energy;
        for c in &sol.candidates {
            prop_assert!(c.energy >= best - 1e-9 * best.abs());
            prop_assert!(c.mass_err.abs() <= 1e-8 * mass);
        }
        prop_assert!((sol.profile.mass - mass).abs() <= 1e-8 * mass);
    }
}
