//! PDE-versus-lattice convergence experiment.
//!
//! For each noise level the density starts as the local Gibbs state of well
//! 0, the Fokker–Planck solution provides partial masses `m_j(t)`, and the
//! limit lattice is started from the moment masses `m̃_j(0)`. The discrepancy
//! is `∫₀^T Σ_j |m̆_j − m_j| dt`.

use crate::asymptotics::AsymptoticScalars;
use crate::fpsolver::{
    build_generator, solve_with, DensityField, Generator, Grid1D, SolverConfig, TimeStepPolicy,
};
use crate::lattice::{compare_l1, trajectory, window_radius, Direction, LatticeMassState, Method};
use crate::observables::{partial_masses, substitute_tilde, WellSeries};
use crate::potential::PeriodicPotential;
use crate::weights::PsiTable;
use crate::{asymptotics::Gibbs, Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub sigma: f64,
    /// Horizon in Kramers units.
    pub t_final: f64,
    pub cells_per_well: usize,
    /// Spacing of the mass samples entering the time integral.
    pub cadence: f64,
    /// Wells kept upstream of the initial well.
    pub guard_wells: i64,
    pub policy: TimeStepPolicy,
    pub lattice_method: Method,
    /// Replace the Kramers `τ` by `ν²/(μ₀η₀)`, for which `θ = 0`.
    #[serde(default)]
    pub refined_tau: bool,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            t_final: 2.0,
            cells_per_well: 256,
            cadence: 0.01,
            guard_wells: 2,
            policy: TimeStepPolicy::default(),
            lattice_method: Method::Rk4,
            refined_tau: false,
        }
    }
}

/// Masses of one PDE run and the lattice started from its moment masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassComparison {
    pub nu: f64,
    pub tau: f64,
    pub theta: f64,
    pub times: Vec<f64>,
    pub pde: Vec<WellSeries>,
    pub lattice: Vec<WellSeries>,
    pub tilde0: WellSeries,
    pub error: f64,
    /// Largest `|Σρ − 1|` along the run.
    pub mass_drift: f64,
}

/// Initial density: the Gibbs profile restricted to `(Q₋₁, Q₀)`.
pub fn local_gibbs_start(
    grid: Grid1D,
    pot: &PeriodicPotential,
    scalars: &AsymptoticScalars,
) -> Result<DensityField> {
    let cp = &scalars.critical;
    let (a, b) = (cp.p_max(-1), cp.p_max(0));
    let nu2 = scalars.nu * scalars.nu;
    let base = pot.effective(scalars.sigma, cp.p_min0);
    let mut rho = DensityField::sampled(grid, |p| {
        if p > a && p < b {
            (-(pot.effective(scalars.sigma, p) - base) / nu2).exp()
        } else {
            0.0
        }
    })?;
    rho.normalize();
    Ok(rho)
}

/// Run one noise level.
pub fn compare_masses(
    pot: &PeriodicPotential,
    nu: f64,
    s: &StudySettings,
) -> Result<MassComparison> {
    let mut scalars = AsymptoticScalars::compute(pot, s.sigma, nu)?;
    if s.refined_tau {
        scalars = scalars.with_refined_tau();
    }
    let cp = scalars.critical;
    let reach = window_radius(s.t_final);
    let (lo, hi) = if s.sigma >= 0.0 {
        (-s.guard_wells, reach)
    } else {
        (-reach, s.guard_wells)
    };
    let grid = Grid1D::aligned(&cp, lo..=hi, s.cells_per_well)?;
    let rho0 = local_gibbs_start(grid, pot, &scalars)?;
    let gibbs = Gibbs::new(pot, s.sigma, nu);
    let table = Arc::new(PsiTable::build(&scalars, &gibbs)?);
    let tilde0 = substitute_tilde(&rho0, &table, lo..=hi);

    let generator = Generator::Line(build_generator(pot, s.sigma, nu, &grid));
    let config = SolverConfig::new(nu, s.sigma, scalars.tau).with_policy(s.policy);
    let mut times = Vec::new();
    let mut pde = Vec::new();
    let mut failure = None;
    let mut mass_drift = 0.0f64;
    solve_with(&rho0, s.t_final, &generator, &config, s.cadence, |t, r| {
        mass_drift = mass_drift.max((r.total_mass() - 1.0).abs());
        match partial_masses(r, &cp, lo..=hi) {
            Ok(m) => {
                times.push(t);
                pde.push(m);
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let clipped = WellSeries {
        first: tilde0.first,
        values: tilde0.values.iter().map(|v| v.max(0.0)).collect(),
    };
    let state0 = LatticeMassState::new(clipped, Direction::for_tilt(s.sigma, scalars.kappa))?;
    let lattice: Vec<WellSeries> = trajectory(&state0, &times, s.lattice_method)?
        .into_iter()
        .map(|st| st.masses)
        .collect();
    let error = compare_l1(&lattice, &pde, &times)?;
    Ok(MassComparison {
        nu,
        tau: scalars.tau,
        theta: scalars.theta,
        times,
        pde,
        lattice,
        tilde0,
        error,
        mass_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub nu: f64,
    pub error: f64,
    /// `ln(e_{k−1}/e_k) / ln(ν_{k−1}/ν_k)`; absent for the first row.
    pub order: Option<f64>,
    pub tau: f64,
    pub theta: f64,
    pub mass_drift: f64,
}

/// Least-squares slope of `ln error` against `ln ν`.
pub fn fitted_order(rows: &[StudyRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.nu.ln(), r.error.ln())).collect();
    crate::supercritical::ls_slope(&pts)
}

/// At least three positive, strictly decreasing noise levels.
pub fn check_noise_levels(nus: &[f64]) -> Result<()> {
    if nus.len() < 3 {
        return Err(Error::Config(format!(
            "convergence study needs at least 3 noise levels, got {}",
            nus.len()
        )));
    }
    if nus.windows(2).any(|w| !(w[1] < w[0])) || nus.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config(
            "noise levels must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Table rows, with the local order between consecutive runs.
pub fn study_rows(runs: &[MassComparison]) -> Vec<StudyRow> {
    let mut rows: Vec<StudyRow> = Vec::with_capacity(runs.len());
    for c in runs {
        let order = rows
            .last()
            .map(|prev| (prev.error / c.error).ln() / (prev.nu / c.nu).ln());
        rows.push(StudyRow {
            nu: c.nu,
            error: c.error,
            order,
            tau: c.tau,
            theta: c.theta,
            mass_drift: c.mass_drift,
        });
    }
    rows
}

/// One row per noise level; needs at least three strictly decreasing values.
pub fn run_convergence_study(
    pot: &PeriodicPotential,
    nus: &[f64],
    s: &StudySettings,
) -> Result<Vec<StudyRow>> {
    check_noise_levels(nus)?;
    let runs = nus
        .iter()
        .map(|&nu| compare_masses(pot, nu, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(study_rows(&runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_noise_lists_rejected() {
        let pot = PeriodicPotential::cosine();
        let s = StudySettings::default();
        assert!(matches!(
            run_convergence_study(&pot, &[0.5], &s),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            run_convergence_study(&pot, &[0.4, 0.5, 0.6], &s),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn start_is_normalized_local_gibbs() {
        let pot = PeriodicPotential::cosine();
        let sc = AsymptoticScalars::compute(&pot, 0.5, 0.5).unwrap();
        let grid = Grid1D::aligned(&sc.critical, -1..=2, 64).unwrap();
        let rho = local_gibbs_start(grid, &pot, &sc).unwrap();
        assert!((rho.total_mass() - 1.0).abs() < 1e-14);
        let m = partial_masses(&rho, &sc.critical, -1..=2).unwrap();
        assert!((m.get(0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn short_horizon_comparison_small() {
        let pot = PeriodicPotential::cosine();
        let s = StudySettings {
            t_final: 0.5,
            cells_per_well: 128,
            cadence: 0.05,
            ..Default::default()
        };
        let c = compare_masses(&pot, 0.5, &s).unwrap();
        assert!(c.mass_drift < 1e-11);
        assert!(c.error.is_finite() && c.error < 0.2, "{}", c.error);
        assert_eq!(c.times.len(), c.pde.len());
        assert!((c.times.last().unwrap() - 0.5).abs() < 1e-12);
    }
}
