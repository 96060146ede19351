//! Mass-constrained minimizers of the one-dimensional thin-film energy
//! `E[u] = ∫ (u'^2/2 + Q(u)) dx` for mildly singular wetting potentials.

pub mod asymptotics;
pub mod error;
pub mod extended;
pub mod landscape;
pub mod minimizer;
pub mod numerics;
pub mod potential;
pub mod profile;

pub use asymptotics::{c_p, composite_profile, convergence_report, f_p, f_p0, f_p_inverse, predict, AsymptoticPrediction, ConvergenceReport};
pub use error::{CapminError, Result};
pub use extended::Extended;
pub use landscape::{classify, Classification, Landscape, Regime, Uniqueness};
pub use minimizer::{find_energy_crossing, global_minimizer, mass_sweep, solve_mass, BranchSolution, Crossing, MassSweep, Minimizer, MinimizerSolution};
pub use potential::{CustomPotential, Family, Potential, PotentialSpec, PotentialValues, TailLaw};
pub use profile::{solve_profile, solve_profile_ode, Apex, Integrals, Profile, ProfileSolver};
