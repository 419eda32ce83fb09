//! Finite-volume solver for the p-part of the Fokker–Planck equation
//!
//! ```text
//! τ ∂_t ρ = ∂_p (ν² ∂_p ρ + (H′ − σ) ρ)
//! ```
//!
//! with Scharfetter–Gummel (exponentially fitted) fluxes, so discrete Gibbs
//! states `ρ_i ∝ exp(-H_eff(p_i)/ν²)` are stationary to rounding. Time is
//! measured in Kramers units: the generator is applied with factor `dt/τ`.
//! The x-dependence is carried separately by the heat kernel (see
//! [`product_solution`]).

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{CriticalPoints, PeriodicPotential};
use crate::quad::gauss_panel;
use crate::tridiag::{CyclicTridiagonal, Tridiagonal};

/// Minimum number of cells per well accepted by [`Grid1D::aligned`].
pub const MIN_CELLS_PER_WELL: usize = 16;

/// Uniform cell-centred grid on `[p_lo, p_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub p_lo: f64,
    pub p_hi: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(p_lo: f64, p_hi: f64, n_cells: usize) -> Result<Self> {
        if !(p_lo < p_hi) || n_cells < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid [{p_lo}, {p_hi}] with {n_cells} cells"
            )));
        }
        Ok(Self {
            p_lo,
            p_hi,
            n_cells,
        })
    }

    /// Grid from `Q_{j_lo-1}` to `Q_{j_hi}` so every `Q_j` is a cell edge.
    pub fn aligned(
        cp: &CriticalPoints,
        wells: RangeInclusive<i64>,
        cells_per_well: usize,
    ) -> Result<Self> {
        if cells_per_well < MIN_CELLS_PER_WELL {
            return Err(Error::InvalidArgument(format!(
                "{cells_per_well} cells per well, need at least {MIN_CELLS_PER_WELL}"
            )));
        }
        let (lo, hi) = (*wells.start(), *wells.end());
        if hi < lo {
            return Err(Error::InvalidArgument("empty well window".into()));
        }
        let n_wells = (hi - lo + 1) as usize;
        Self::new(cp.p_max(lo - 1), cp.p_max(hi), n_wells * cells_per_well)
    }

    pub fn h(&self) -> f64 {
        (self.p_hi - self.p_lo) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.p_lo + (i as f64 + 0.5) * self.h()
    }

    /// Left edge of cell `i`; `edge(n_cells) == p_hi`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.p_hi
        } else {
            self.p_lo + i as f64 * self.h()
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }
}

/// Cell values of a probability density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.n_cells
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "density must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    /// Point samples of `f` at cell centres.
    pub fn sampled<F: Fn(f64) -> f64>(grid: Grid1D, f: F) -> Result<Self> {
        Self::new(grid, grid.centers().into_iter().map(f).collect())
    }

    /// Cell averages of `f` (15-point Gauss per cell).
    pub fn cell_averaged<F: Fn(f64) -> f64>(grid: Grid1D, f: F) -> Result<Self> {
        let h = grid.h();
        let values = (0..grid.n_cells)
            .map(|i| gauss_panel(&f, grid.edge(i), grid.edge(i) + h) / h)
            .collect();
        Self::new(grid, values)
    }

    /// Discrete Gibbs state for the effective potential samples `heff`,
    /// normalized to unit discrete mass.
    pub fn gibbs(grid: Grid1D, heff: &[f64], nu: f64) -> Result<Self> {
        let nu2 = nu * nu;
        let shift = heff.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut rho = Self::new(
            grid,
            heff.iter().map(|e| (-(e - shift) / nu2).exp()).collect(),
        )?;
        rho.normalize();
        Ok(rho)
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.h() * self.values.iter().sum::<f64>()
    }

    pub fn normalize(&mut self) {
        let m = self.total_mass();
        if m > 0.0 {
            for v in self.values.iter_mut() {
                *v /= m;
            }
        }
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.grid.h()
            * self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
    }
}

/// `B(u) = u/(eᵘ - 1)`.
pub fn bernoulli(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        1.0 - 0.5 * u + u * u / 12.0
    } else {
        u / u.exp_m1()
    }
}

/// Effective potential `H(p) - σp` at the cell centres.
pub fn effective_samples(pot: &PeriodicPotential, sigma: f64, grid: &Grid1D) -> Vec<f64> {
    grid.centers()
        .into_iter()
        .map(|p| pot.effective(sigma, p))
        .collect()
}

/// Generator `A` with `dρ/dt = A ρ / τ` for no-flux boundaries, built from
/// effective potential samples at cell centres. The flux from cell `i` to
/// `i + 1` is `(ν²/h)[B(u)ρ_i - B(-u)ρ_{i+1}]` with `u = (E_{i+1} - E_i)/ν²`.
pub fn build_generator_from_samples(heff: &[f64], nu: f64, h: f64) -> Tridiagonal {
    let n = heff.len();
    let nu2 = nu * nu;
    let c = nu2 / (h * h);
    let mut a = Tridiagonal::zeros(n);
    for i in 0..n - 1 {
        let u = (heff[i + 1] - heff[i]) / nu2;
        let (bp, bm) = (bernoulli(u), bernoulli(-u));
        a.diag[i] -= c * bp;
        a.upper[i] += c * bm;
        a.lower[i + 1] += c * bp;
        a.diag[i + 1] -= c * bm;
    }
    a
}

pub fn build_generator(pot: &PeriodicPotential, sigma: f64, nu: f64, grid: &Grid1D) -> Tridiagonal {
    build_generator_from_samples(&effective_samples(pot, sigma, grid), nu, grid.h())
}

/// Rightward Scharfetter–Gummel fluxes at the `n - 1` interior edges.
pub fn edge_fluxes(heff: &[f64], rho: &[f64], nu: f64, h: f64) -> Vec<f64> {
    let nu2 = nu * nu;
    (0..rho.len() - 1)
        .map(|i| {
            let u = (heff[i + 1] - heff[i]) / nu2;
            nu2 / h * (bernoulli(u) * rho[i] - bernoulli(-u) * rho[i + 1])
        })
        .collect()
}

/// Time-step policy in Kramers units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeStepPolicy {
    Fixed {
        dt: f64,
    },
    Adaptive {
        dt_initial: Option<f64>,
        growth: f64,
        dt_max: Option<f64>,
        tol: f64,
    },
}

impl Default for TimeStepPolicy {
    fn default() -> Self {
        TimeStepPolicy::Adaptive {
            dt_initial: None,
            growth: 1.2,
            dt_max: None,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub sigma: f64,
    pub tau: f64,
    pub policy: TimeStepPolicy,
    /// `1` is implicit Euler, `1/2` Crank–Nicolson.
    pub theta: f64,
}

impl SolverConfig {
    pub fn new(nu: f64, sigma: f64, tau: f64) -> Self {
        Self {
            nu,
            sigma,
            tau,
            policy: TimeStepPolicy::default(),
            theta: 1.0,
        }
    }

    pub fn with_policy(mut self, policy: TimeStepPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("nu and tau must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!(
                "scheme parameter {} not in [1/2, 1]",
                self.theta
            )));
        }
        match self.policy {
            TimeStepPolicy::Fixed { dt } if !(dt > 0.0) => Err(Error::InvalidArgument(format!(
                "time step {dt} must be positive"
            ))),
            _ => Ok(()),
        }
    }
}

/// Linear operator advanced by the solver: either a line segment with
/// no-flux ends or a periodic cell.
#[derive(Debug, Clone)]
pub enum Generator {
    Line(Tridiagonal),
    Periodic(CyclicTridiagonal),
}

impl Generator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Generator::Line(a) => a.apply(x),
            Generator::Periodic(a) => a.apply(x),
        }
    }

    /// `A x` as a difference of edge fluxes, so its entries sum to zero up
    /// to rounding of the fluxes themselves.
    pub fn divergence(&self, x: &[f64]) -> Vec<f64> {
        let (band, wrap) = match self {
            Generator::Line(a) => (a, None),
            Generator::Periodic(a) => (&a.band, Some((a.corner_lower, a.corner_upper))),
        };
        let n = x.len();
        let mut out = vec![0.0; n];
        for i in 0..n - 1 {
            let f = band.lower[i + 1] * x[i] - band.upper[i] * x[i + 1];
            out[i] -= f;
            out[i + 1] += f;
        }
        if let Some((into_first, into_last)) = wrap {
            let f = into_first * x[n - 1] - into_last * x[0];
            out[n - 1] -= f;
            out[0] += f;
        }
        out
    }

    // Increment form (I - ϑrA)δ = rAρ keeps exact equilibria fixed to
    // rounding; the identity part of the matrix is resolved only to about
    // ε·r·‖A‖, so the mass is restored explicitly.
    fn step_values(&self, rho: &[f64], r: f64, theta: f64) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = self.divergence(rho).into_iter().map(|v| r * v).collect();
        let delta = match self {
            Generator::Line(a) => a.shifted(1.0, -theta * r).solve(&rhs)?,
            Generator::Periodic(a) => a.shifted(1.0, -theta * r).solve(&rhs)?,
        };
        let mut out: Vec<f64> = rho.iter().zip(delta).map(|(x, d)| x + d).collect();
        let before: f64 = rho.iter().sum();
        let after: f64 = out.iter().sum();
        if after > 0.0 && before > 0.0 {
            let scale = before / after;
            out.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(out)
    }
}

/// One ϑ-scheme step of length `dt` (Kramers units):
/// `(I - ϑ dt/τ A) ρ⁺ = (I + (1-ϑ) dt/τ A) ρ`.
pub fn step(
    rho: &DensityField,
    dt: f64,
    generator: &Generator,
    tau: f64,
    theta: f64,
) -> Result<DensityField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} must be positive"
        )));
    }
    let mut values = generator.step_values(&rho.values, dt / tau, theta)?;
    if theta >= 1.0 {
        // M-matrix solve: negative entries can only be rounding noise.
        debug_assert!(values.iter().all(|v| *v > -1e-12));
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
    }
    Ok(DensityField {
        grid: rho.grid,
        values,
    })
}

/// Default initial step `min(1e-3, τ h²/(2ν²))` in Kramers units.
pub fn default_initial_dt(config: &SolverConfig, grid: &Grid1D) -> f64 {
    let h = grid.h();
    (1e-3f64).min(0.5 * config.tau / (config.nu * config.nu) * h * h)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

/// Advance `rho0` to time `t_final`, calling `observer(t, ρ)` at `t = 0` and
/// at every multiple of `cadence` (steps are clipped to land on them) and at
/// `t_final`. A non-positive `cadence` observes only the endpoints.
pub fn solve_with<O: FnMut(f64, &DensityField)>(
    rho0: &DensityField,
    t_final: f64,
    generator: &Generator,
    config: &SolverConfig,
    cadence: f64,
    mut observer: O,
) -> Result<(DensityField, SolveStats)> {
    config.validate()?;
    if !(t_final >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "final time {t_final} must be nonnegative"
        )));
    }
    let mut stats = SolveStats {
        min_dt: f64::INFINITY,
        ..Default::default()
    };
    let mut rho = rho0.clone();
    observer(0.0, &rho);
    if t_final == 0.0 {
        return Ok((rho, stats));
    }
    let n_obs = if cadence > 0.0 {
        ((t_final / cadence) * (1.0 + 1e-12)).floor() as usize
    } else {
        0
    };
    let mut next_obs_index = 1usize;
    let next_target = |k: usize| -> f64 {
        if k <= n_obs {
            (k as f64 * cadence).min(t_final)
        } else {
            t_final
        }
    };
    let (mut dt, growth, dt_max, tol) = match config.policy {
        TimeStepPolicy::Fixed { dt } => (dt, 1.0, dt, f64::INFINITY),
        TimeStepPolicy::Adaptive {
            dt_initial,
            growth,
            dt_max,
            tol,
        } => (
            dt_initial.unwrap_or_else(|| default_initial_dt(config, &rho.grid)),
            growth,
            dt_max.unwrap_or(1e-2 * t_final),
            tol,
        ),
    };
    let mut t = 0.0;
    loop {
        let target = next_target(next_obs_index);
        let remaining = target - t;
        let hit = dt >= remaining * (1.0 - 1e-12);
        let this_dt = if hit { remaining } else { dt };
        let candidate = if tol.is_finite() {
            let full = step(&rho, this_dt, generator, config.tau, config.theta)?;
            let half = step(&rho, 0.5 * this_dt, generator, config.tau, config.theta)?;
            let two = step(&half, 0.5 * this_dt, generator, config.tau, config.theta)?;
            let err = full.l1_distance(&two);
            if err > tol && this_dt > 1e-14 * t_final {
                stats.rejected += 1;
                dt = 0.5 * this_dt;
                continue;
            }
            two
        } else {
            step(&rho, this_dt, generator, config.tau, config.theta)?
        };
        rho = candidate;
        stats.accepted += 1;
        stats.min_dt = stats.min_dt.min(this_dt);
        stats.max_dt = stats.max_dt.max(this_dt);
        if hit {
            t = target;
            observer(t, &rho);
            if target >= t_final {
                break;
            }
            next_obs_index += 1;
            if !tol.is_finite() {
                continue;
            }
        } else {
            t += this_dt;
        }
        dt = (dt * growth).min(dt_max);
    }
    Ok((rho, stats))
}

/// Snapshots `(t, ρ)` at the observation times of [`solve_with`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityField>,
    pub stats: SolveStats,
}

pub fn solve(
    rho0: &DensityField,
    t_final: f64,
    generator: &Generator,
    config: &SolverConfig,
    cadence: f64,
) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    let (_, stats) = solve_with(rho0, t_final, generator, config, cadence, |t, r| {
        traj.times.push(t);
        traj.states.push(r.clone());
    })?;
    traj.stats = stats;
    Ok(traj)
}

/// Periodic single-cell solver state that counts the probability flux across
/// the wrap edge, so the unwrapped first moment can be recovered.
#[derive(Debug, Clone)]
pub struct PeriodicRun {
    pub grid: Grid1D,
    pub generator: Generator,
    heff: Vec<f64>,
    wrap_shift: f64,
    nu: f64,
}

impl PeriodicRun {
    /// One period `[p0, p0 + L)` of the tilted potential.
    pub fn new(
        pot: &PeriodicPotential,
        sigma: f64,
        nu: f64,
        p0: f64,
        n_cells: usize,
    ) -> Result<Self> {
        let grid = Grid1D::new(p0, p0 + pot.period(), n_cells)?;
        let heff = effective_samples(pot, sigma, &grid);
        let n = n_cells;
        let h = grid.h();
        let nu2 = nu * nu;
        let c = nu2 / (h * h);
        let mut band = build_generator_from_samples(&heff, nu, h);
        // Wrap edge between cell n-1 and cell 0 (shifted by one period).
        let wrap_shift = -sigma * pot.period();
        let u = (heff[0] + wrap_shift - heff[n - 1]) / nu2;
        let (bp, bm) = (bernoulli(u), bernoulli(-u));
        band.diag[n - 1] -= c * bp;
        band.diag[0] -= c * bm;
        let generator = Generator::Periodic(CyclicTridiagonal {
            band,
            corner_lower: c * bp,
            corner_upper: c * bm,
        });
        Ok(Self {
            grid,
            generator,
            heff,
            wrap_shift,
            nu,
        })
    }

    /// Rightward flux across the wrap edge.
    pub fn wrap_flux(&self, rho: &[f64]) -> f64 {
        let n = rho.len();
        let nu2 = self.nu * self.nu;
        let u = (self.heff[0] + self.wrap_shift - self.heff[n - 1]) / nu2;
        nu2 / self.grid.h() * (bernoulli(u) * rho[n - 1] - bernoulli(-u) * rho[0])
    }

    /// Fixed-step implicit Euler run with `τ = 1`; returns `(t, 𝒫(t), winding)`
    /// sampled every `every` steps, where winding is the net mass that
    /// crossed the wrap edge.
    pub fn run_first_moment(
        &self,
        rho0: &DensityField,
        t_final: f64,
        dt: f64,
        every: usize,
    ) -> Result<Vec<(f64, f64, f64)>> {
        let steps = (t_final / dt).round().max(1.0) as usize;
        let dt = t_final / steps as f64;
        let h = self.grid.h();
        let period = self.grid.p_hi - self.grid.p_lo;
        let moment = |rho: &[f64], w: f64| -> f64 {
            h * rho
                .iter()
                .enumerate()
                .map(|(i, r)| self.grid.center(i) * r)
                .sum::<f64>()
                + period * w
        };
        let mut rho = rho0.clone();
        let mut winding = 0.0;
        let mut out = vec![(0.0, moment(&rho.values, 0.0), 0.0)];
        for k in 1..=steps {
            rho = step(&rho, dt, &self.generator, 1.0, 1.0)?;
            winding += dt * self.wrap_flux(&rho.values);
            if k % every.max(1) == 0 || k == steps {
                out.push((k as f64 * dt, moment(&rho.values, winding), winding));
            }
        }
        Ok(out)
    }
}

/// Spatial profile of product initial data `a(x)·b(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum XProfile {
    /// Dirac mass at `center` in dimension `dim`.
    Point { center: Vec<f64> },
    /// Isotropic Gaussian with the given per-axis variance.
    Gaussian { center: Vec<f64>, variance: f64 },
    /// Samples on a uniform one-dimensional grid.
    Gridded { x: Vec<f64>, values: Vec<f64> },
}

/// Heat kernel `(4πt)^{-n/2} exp(-|x|²/(4t))`.
pub fn heat_kernel(t: f64, x: &[f64]) -> f64 {
    let n = x.len().max(1) as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (4.0 * std::f64::consts::PI * t).powf(-0.5 * n) * (-r2 / (4.0 * t)).exp()
}

impl XProfile {
    /// Solution of `∂_t a = Δa` at time `t`, as a profile of the same kind
    /// (a point mass becomes a Gaussian).
    pub fn evolve(&self, t: f64) -> Result<XProfile> {
        if t == 0.0 {
            return Ok(self.clone());
        }
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time {t} must be nonnegative"
            )));
        }
        Ok(match self {
            XProfile::Point { center } => XProfile::Gaussian {
                center: center.clone(),
                variance: 2.0 * t,
            },
            XProfile::Gaussian { center, variance } => XProfile::Gaussian {
                center: center.clone(),
                variance: variance + 2.0 * t,
            },
            XProfile::Gridded { x, values } => {
                if x.len() != values.len() || x.len() < 2 {
                    return Err(Error::GridMismatch("gridded profile".into()));
                }
                let dx = x[1] - x[0];
                let evolved = x
                    .iter()
                    .map(|xi| {
                        dx * x
                            .iter()
                            .zip(values.iter())
                            .map(|(xk, vk)| heat_kernel(t, &[xi - xk]) * vk)
                            .sum::<f64>()
                    })
                    .collect();
                XProfile::Gridded {
                    x: x.clone(),
                    values: evolved,
                }
            }
        })
    }

    /// Density at `x`; `None` for a point mass.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            XProfile::Point { .. } => None,
            XProfile::Gaussian { center, variance } => {
                let d: Vec<f64> = x.iter().zip(center.iter()).map(|(a, b)| a - b).collect();
                Some(heat_kernel(0.5 * variance, &d))
            }
            XProfile::Gridded { x: xs, values } => {
                let xv = x[0];
                let k = xs.iter().position(|v| *v >= xv)?;
                if k == 0 {
                    return (xs[0] == xv).then(|| values[0]);
                }
                let w = (xv - xs[k - 1]) / (xs[k] - xs[k - 1]);
                Some((1.0 - w) * values[k - 1] + w * values[k])
            }
        }
    }
}

/// Initial data for the full `(x, p)` problem.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Product {
        x: XProfile,
        p: DensityField,
    },
    /// Tensor samples `ρ(x_k, p_i)`; not supported.
    Joint {
        x: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// The two factors of the solution at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSolution {
    pub t: f64,
    pub x: XProfile,
    pub p: DensityField,
}

/// Factored solution at time `t`. The p-factor is taken from `trajectory`,
/// which must contain a snapshot at `t`.
pub fn product_solution(
    initial: &InitialData,
    trajectory: &Trajectory,
    t: f64,
) -> Result<ProductSolution> {
    let x = match initial {
        InitialData::Product { x, .. } => x,
        InitialData::Joint { .. } => {
            return Err(Error::Unsupported(
                "only product initial data a(x)·b(p) can be evolved".into(),
            ))
        }
    };
    let p = if t == 0.0 {
        match initial {
            InitialData::Product { p, .. } => p.clone(),
            InitialData::Joint { .. } => unreachable!(),
        }
    } else {
        let k = trajectory
            .times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * t.max(1.0))
            .ok_or_else(|| Error::GridMismatch(format!("no snapshot at t = {t}")))?;
        trajectory.states[k].clone()
    };
    Ok(ProductSolution {
        t,
        x: x.evolve(t)?,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::AsymptoticScalars;
    use crate::potential::find_critical_points;
    use proptest::prelude::*;

    fn cosine_setup(
        sigma: f64,
        wells: RangeInclusive<i64>,
        cells: usize,
    ) -> (PeriodicPotential, Grid1D) {
        let pot = PeriodicPotential::cosine();
        let cp = find_critical_points(&pot, sigma).unwrap();
        let grid = Grid1D::aligned(&cp, wells, cells).unwrap();
        (pot, grid)
    }

    #[test]
    fn bernoulli_branches_agree() {
        for &u in &[9.9e-5f64, 1.01e-4, -1.01e-4, -9.9e-5] {
            let exact = u / u.exp_m1();
            assert!((bernoulli(u) - exact).abs() < 1e-14);
        }
        assert_eq!(bernoulli(0.0), 1.0);
        assert_eq!(bernoulli(1000.0), 0.0);
        assert!((bernoulli(-1000.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn flat_potential_gives_laplacian() {
        let grid = Grid1D::new(0.0, 1.0, 10).unwrap();
        let a = build_generator_from_samples(&[0.3; 10], 0.5, grid.h());
        let c = 0.25 / (grid.h() * grid.h());
        assert!((a.diag[4] + 2.0 * c).abs() < 1e-12);
        assert!((a.upper[4] - c).abs() < 1e-12 && (a.lower[4] - c).abs() < 1e-12);
        assert!((a.diag[0] + c).abs() < 1e-12);
    }

    #[test]
    fn gibbs_is_annihilated() {
        let (pot, grid) = cosine_setup(0.5, -3..=3, 64);
        let heff = effective_samples(&pot, 0.5, &grid);
        let a = build_generator_from_samples(&heff, 0.4, grid.h());
        let g = DensityField::gibbs(grid, &heff, 0.4).unwrap();
        let out = a.apply(&g.values);
        let num: f64 = out.iter().map(|v| v.abs()).sum();
        let den: f64 = g.values.iter().sum();
        // Relative to the operator scale ν²/h².
        assert!(num / den / (0.16 / grid.h().powi(2)) < 1e-13);
        for s in a.column_sums() {
            assert!(s.abs() * grid.h().powi(2) < 1e-14);
        }
    }

    #[test]
    fn step_conserves_mass_and_gibbs() {
        let (pot, grid) = cosine_setup(0.5, -2..=2, 48);
        let heff = effective_samples(&pot, 0.5, &grid);
        let gen = Generator::Line(build_generator_from_samples(&heff, 0.5, grid.h()));
        let g = DensityField::gibbs(grid, &heff, 0.5).unwrap();
        let g1 = step(&g, 0.1, &gen, 1e-3, 1.0).unwrap();
        assert!(g.l1_distance(&g1) < 1e-12);
        let bump = DensityField::sampled(grid, |p| (-(p - 0.5).powi(2) / 0.05).exp()).unwrap();
        let m0 = bump.total_mass();
        let b1 = step(&bump, 0.05, &gen, 1e-2, 1.0).unwrap();
        assert!((b1.total_mass() - m0).abs() < 1e-13 * m0);
    }

    #[test]
    fn zero_time_returns_initial() {
        let (pot, grid) = cosine_setup(0.5, -1..=1, 32);
        let gen = Generator::Line(build_generator(&pot, 0.5, 0.5, &grid));
        let rho = DensityField::sampled(grid, |p| (-p * p).exp()).unwrap();
        let traj = solve(&rho, 0.0, &gen, &SolverConfig::new(0.5, 0.5, 1e-3), 0.1).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.states[0], rho);
    }

    #[test]
    fn adaptive_solve_conserves_mass_and_hits_observation_times() {
        let pot = PeriodicPotential::cosine();
        let s = AsymptoticScalars::compute(&pot, 0.5, 0.5).unwrap();
        let grid = Grid1D::aligned(&s.critical, -1..=4, 40).unwrap();
        let gen = Generator::Line(build_generator(&pot, 0.5, 0.5, &grid));
        let mut rho =
            DensityField::sampled(grid, |p| (-(p - s.critical.p_min0).powi(2) / 0.1).exp())
                .unwrap();
        rho.normalize();
        let traj = solve(&rho, 0.5, &gen, &SolverConfig::new(0.5, 0.5, s.tau), 0.1).unwrap();
        assert_eq!(traj.times.len(), 6);
        for (k, t) in traj.times.iter().enumerate() {
            assert!((t - 0.1 * k as f64).abs() < 1e-12);
        }
        let last = traj.states.last().unwrap();
        assert!((last.total_mass() - 1.0).abs() < 1e-11);
        assert!(last.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn periodic_generator_conserves_and_drifts() {
        let pot = PeriodicPotential::cosine();
        let run = PeriodicRun::new(&pot, 1.25, 0.3, 0.0, 200).unwrap();
        let mut rho = DensityField::sampled(run.grid, |_| 1.0).unwrap();
        rho.normalize();
        let out = run.run_first_moment(&rho, 2.0, 0.01, 10).unwrap();
        let (t, p, w) = *out.last().unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(w > 0.0 && p > out[0].1);
        match &run.generator {
            Generator::Periodic(a) => {
                // Column sums vanish.
                for k in [0usize, 57, 199] {
                    let mut e = vec![0.0; 200];
                    e[k] = 1.0;
                    let s: f64 = a.apply(&e).iter().sum();
                    assert!(s.abs() < 1e-9);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn heat_factor_normalized_and_point_mass() {
        let x0 = XProfile::Point { center: vec![0.3] };
        for &t in &[0.5, 1.0, 2.0] {
            let g = x0.evolve(t).unwrap();
            let total =
                crate::quad::integrate(|x| g.density(&[x]).unwrap(), -40.0, 40.0, 1e-12).unwrap();
            assert!((total - 1.0).abs() < 1e-10);
            let d = g.density(&[1.1]).unwrap();
            assert!((d - heat_kernel(t, &[0.8])).abs() < 1e-15);
        }
        assert_eq!(x0.evolve(0.0).unwrap(), x0);
    }

    #[test]
    fn gridded_heat_profile_matches_gaussian() {
        let xs: Vec<f64> = (0..801).map(|k| -20.0 + 0.05 * k as f64).collect();
        let g0 = XProfile::Gaussian {
            center: vec![0.0],
            variance: 0.5,
        };
        let vals: Vec<f64> = xs.iter().map(|x| g0.density(&[*x]).unwrap()).collect();
        let grid = XProfile::Gridded {
            x: xs.clone(),
            values: vals,
        };
        let e = grid.evolve(1.0).unwrap();
        let exact = g0.evolve(1.0).unwrap();
        for &x in &[0.0, 0.7, -2.0] {
            assert!((e.density(&[x]).unwrap() - exact.density(&[x]).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn joint_initial_data_is_unsupported() {
        let init = InitialData::Joint {
            x: vec![0.0],
            values: vec![vec![1.0]],
        };
        let r = product_solution(&init, &Trajectory::default(), 1.0);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    proptest! {
        #[test]
        fn implicit_step_is_positive_and_l1_contractive(
            a in proptest::collection::vec(0.0f64..1.0, 64),
            b in proptest::collection::vec(0.0f64..1.0, 64),
            dt in 1e-4f64..1.0,
        ) {
            let (pot, _) = cosine_setup(0.3, 0..=0, 16);
            let grid = Grid1D::new(-4.0, 6.0, 64).unwrap();
            let gen = Generator::Line(build_generator(&pot, 0.3, 0.45, &grid));
            let ra = DensityField::new(grid, a).unwrap();
            let rb = DensityField::new(grid, b).unwrap();
            let sa = step(&ra, dt, &gen, 0.01, 1.0).unwrap();
            let sb = step(&rb, dt, &gen, 0.01, 1.0).unwrap();
            prop_assert!(sa.values.iter().all(|v| *v >= 0.0));
            prop_assert!(sa.l1_distance(&sb) <= ra.l1_distance(&rb) * (1.0 + 1e-12) + 1e-15);
            prop_assert!((sa.total_mass() - ra.total_mass()).abs() <= 1e-12 * ra.total_mass().max(1e-300));
        }
    }
}
