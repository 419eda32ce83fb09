//! Functionals of a density snapshot: partial and substitute masses, free
//! energy, dissipation, and moments.

use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{AsymptoticScalars, Gibbs};
use crate::error::{Error, Result};
use crate::fpsolver::{edge_fluxes, DensityField, Grid1D};
use crate::potential::{CriticalPoints, PeriodicPotential};
use crate::weights::{PsiTable, WeightPhi, WeightPsi};

/// Densities below this are treated as zero in `ρ ln ρ` and quotients.
pub const DENSITY_CUTOFF: f64 = 1e-300;

/// Values indexed by consecutive well numbers starting at `first`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSeries {
    pub first: i64,
    pub values: Vec<f64>,
}

impl WellSeries {
    pub fn zeros(wells: RangeInclusive<i64>) -> Self {
        let n = (wells.end() - wells.start() + 1).max(0) as usize;
        Self {
            first: *wells.start(),
            values: vec![0.0; n],
        }
    }

    pub fn last(&self) -> i64 {
        self.first + self.values.len() as i64 - 1
    }

    pub fn indices(&self) -> RangeInclusive<i64> {
        self.first..=self.last()
    }

    /// Value at well `j`, zero outside the stored range.
    pub fn get(&self, j: i64) -> f64 {
        if j < self.first || j > self.last() {
            0.0
        } else {
            self.values[(j - self.first) as usize]
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, v)| (self.first + k as i64, *v))
    }

    /// `Σ_j |a_j - b_j|` over the union of both index ranges.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let lo = self.first.min(other.first);
        let hi = self.last().max(other.last());
        (lo..=hi).map(|j| (self.get(j) - other.get(j)).abs()).sum()
    }
}

/// `∫_a^b ρ dp` for the piecewise-constant cell density.
pub fn mass_between(rho: &DensityField, a: f64, b: f64) -> f64 {
    let g = &rho.grid;
    let h = g.h();
    let a = a.max(g.p_lo);
    let b = b.min(g.p_hi);
    if b <= a {
        return 0.0;
    }
    let i0 = (((a - g.p_lo) / h).floor() as usize).min(g.n_cells - 1);
    let i1 = (((b - g.p_lo) / h).ceil() as usize).min(g.n_cells);
    (i0..i1)
        .map(|i| {
            let lo = g.edge(i).max(a);
            let hi = (g.edge(i) + h).min(b);
            (hi - lo).max(0.0) * rho.values[i]
        })
        .sum()
}

fn check_alignment(grid: &Grid1D, cp: &CriticalPoints, wells: &RangeInclusive<i64>) -> Result<()> {
    let h = grid.h();
    for (index, q) in [
        (*wells.start() - 1, cp.p_max(*wells.start() - 1)),
        (*wells.end(), cp.p_max(*wells.end())),
    ] {
        if q < grid.p_lo - 0.5 * h || q > grid.p_hi + 0.5 * h {
            let nearest = q.clamp(grid.p_lo, grid.p_hi);
            return Err(Error::Alignment {
                index,
                offset: q - nearest,
            });
        }
    }
    Ok(())
}

/// Partial masses `m_j = ∫_{Q_{j-1}}^{Q_j} ρ dp` for the wells in `wells`;
/// cells straddling a `Q_j` are split proportionally.
pub fn partial_masses(
    rho: &DensityField,
    cp: &CriticalPoints,
    wells: RangeInclusive<i64>,
) -> Result<WellSeries> {
    check_alignment(&rho.grid, cp, &wells)?;
    let mut out = WellSeries::zeros(wells.clone());
    for (k, j) in wells.enumerate() {
        out.values[k] = mass_between(rho, cp.p_max(j - 1), cp.p_max(j));
    }
    Ok(out)
}

/// Wells fully covered by a grid aligned with the `Q_j`.
pub fn grid_wells(grid: &Grid1D, cp: &CriticalPoints) -> RangeInclusive<i64> {
    let h = grid.h();
    let lo = cp.well_of(grid.p_lo + 0.5 * h);
    let hi = cp.well_of(grid.p_hi - 0.5 * h);
    lo..=hi
}

/// `ln(ρ/γ)` at `p`, interpolated linearly between the two neighbouring
/// cell centres. `None` if both neighbours vanish.
pub fn log_relative_at<G: Fn(f64) -> f64>(rho: &DensityField, log_gamma: G, p: f64) -> Option<f64> {
    let g = &rho.grid;
    let h = g.h();
    let x = (p - g.p_lo) / h - 0.5;
    let i = (x.floor().max(0.0) as usize).min(g.n_cells - 2);
    let w = (x - i as f64).clamp(0.0, 1.0);
    let (r0, r1) = (rho.values[i], rho.values[i + 1]);
    let (p0, p1) = (g.center(i), g.center(i + 1));
    match (r0 > DENSITY_CUTOFF, r1 > DENSITY_CUTOFF) {
        (true, true) => {
            let l0 = r0.ln() - log_gamma(p0);
            let l1 = r1.ln() - log_gamma(p1);
            Some((1.0 - w) * l0 + w * l1)
        }
        (false, false) => None,
        _ => {
            let r = (1.0 - w) * r0 + w * r1;
            (r > DENSITY_CUTOFF).then(|| r.ln() - log_gamma(p))
        }
    }
}

/// `m̄_j` values together with the wells where the density vanished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarMasses {
    pub masses: WellSeries,
    pub zero_density: Vec<i64>,
}

/// `m̄_j = μ_j ρ(P_j)/γ(P_j)`, evaluated in the log domain.
pub fn substitute_bar(
    rho: &DensityField,
    scalars: &AsymptoticScalars,
    gibbs: &Gibbs,
    wells: RangeInclusive<i64>,
) -> BarMasses {
    let mut masses = WellSeries::zeros(wells.clone());
    let mut zero_density = Vec::new();
    for (k, j) in wells.enumerate() {
        let pj = scalars.critical.p_min(j);
        match log_relative_at(rho, |p| gibbs.log_gamma(p), pj) {
            Some(l) => masses.values[k] = (scalars.log_mu(j) + l).exp(),
            None => zero_density.push(j),
        }
    }
    BarMasses {
        masses,
        zero_density,
    }
}

/// `m̃_j = ∫ (ψ_{j-1} - ψ_j) ρ dp` by the midpoint rule, for `wells` widened
/// by one guard well on each side so that `Σ m̃_j` equals the mass on a grid
/// spanning `wells`.
pub fn substitute_tilde(
    rho: &DensityField,
    table: &Arc<PsiTable>,
    wells: RangeInclusive<i64>,
) -> WellSeries {
    let lo = *wells.start() - 1;
    let hi = *wells.end() + 1;
    let g = &rho.grid;
    let h = g.h();
    // ψ_j at every centre, for j in lo-1..=hi.
    let psi: Vec<Vec<f64>> = ((lo - 1)..=hi)
        .map(|j| {
            let w = WeightPsi::new(j, table.clone());
            (0..g.n_cells).map(|i| w.eval(g.center(i))).collect()
        })
        .collect();
    let mut out = WellSeries::zeros(lo..=hi);
    for k in 0..out.values.len() {
        out.values[k] = h * rho
            .values
            .iter()
            .enumerate()
            .map(|(i, r)| (psi[k][i] - psi[k + 1][i]) * r)
            .sum::<f64>();
    }
    out
}

/// `𝓔 = Σ h (ν² ρ ln ρ + E ρ)` for effective potential samples `heff`.
pub fn energy_from_samples(rho: &DensityField, heff: &[f64], nu: f64) -> f64 {
    let nu2 = nu * nu;
    rho.grid.h()
        * rho
            .values
            .iter()
            .zip(heff.iter())
            .map(|(r, e)| {
                let entropy = if *r > DENSITY_CUTOFF {
                    nu2 * r * r.ln()
                } else {
                    0.0
                };
                entropy + e * r
            })
            .sum::<f64>()
}

pub fn energy(rho: &DensityField, pot: &PeriodicPotential, sigma: f64, nu: f64) -> f64 {
    let heff: Vec<f64> = rho
        .grid
        .centers()
        .into_iter()
        .map(|p| pot.effective(sigma, p))
        .collect();
    energy_from_samples(rho, &heff, nu)
}

/// Flux-form dissipation and its per-well w-form split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    /// `𝓓 = ∫ ρ |∂_p ln(ρ/γ)|²` via the Scharfetter–Gummel edge fluxes;
    /// edges touching a cell below [`DENSITY_CUTOFF`] are skipped.
    pub total: f64,
    /// `D_j = ∫_{J_j} (∂_p w_j)² γ_j`, interior edges of each well.
    pub per_well: WellSeries,
    /// w-form contribution of the edges at well boundaries, times 4.
    pub boundary: f64,
}

/// Dissipation on a grid whose edges are assigned to wells by `edge_well`
/// (`None` marks a boundary edge).
pub fn dissipation_from_samples<W: Fn(f64) -> Option<i64>>(
    rho: &DensityField,
    heff: &[f64],
    nu: f64,
    wells: RangeInclusive<i64>,
    edge_well: W,
) -> Dissipation {
    let g = &rho.grid;
    let h = g.h();
    let nu2 = nu * nu;
    let fluxes = edge_fluxes(heff, &rho.values, nu, h);
    let mut total = 0.0;
    let mut per_well = WellSeries::zeros(wells);
    let mut boundary = 0.0;
    for (i, flux) in fluxes.iter().enumerate() {
        let (r0, r1) = (rho.values[i], rho.values[i + 1]);
        let u = (heff[i + 1] - heff[i]) / nu2;
        if r0 > DENSITY_CUTOFF && r1 > DENSITY_CUTOFF {
            // ln(ρ_i/γ_i) - ln(ρ_{i+1}/γ_{i+1})
            let dl = r0.ln() - r1.ln() - u;
            total += flux * dl / nu2;
        }
        let w = r1.sqrt() * (0.25 * u).exp() - r0.sqrt() * (-0.25 * u).exp();
        let dj = w * w / h;
        match edge_well(g.edge(i + 1)) {
            Some(j) if j >= per_well.first && j <= per_well.last() => {
                per_well.values[(j - per_well.first) as usize] += dj;
            }
            _ => boundary += 4.0 * dj,
        }
    }
    Dissipation {
        total,
        per_well,
        boundary,
    }
}

/// Edge classifier for periodic potentials: edges within `h/4` of some
/// `Q_j` are boundary edges.
pub fn periodic_edge_well(cp: CriticalPoints, h: f64) -> impl Fn(f64) -> Option<i64> {
    move |p| {
        let j = cp.well_of(p);
        let near = (p - cp.p_max(j)).abs().min((p - cp.p_max(j - 1)).abs());
        (near >= 0.25 * h).then_some(j)
    }
}

pub fn dissipation(
    rho: &DensityField,
    pot: &PeriodicPotential,
    sigma: f64,
    nu: f64,
    cp: &CriticalPoints,
) -> Dissipation {
    let heff: Vec<f64> = rho
        .grid
        .centers()
        .into_iter()
        .map(|p| pot.effective(sigma, p))
        .collect();
    let wells = grid_wells(&rho.grid, cp);
    dissipation_from_samples(rho, &heff, nu, wells, periodic_edge_well(*cp, rho.grid.h()))
}

/// Relative density `w_j² = μ_j ρ/γ` on well `j`.
#[derive(Debug, Clone)]
pub struct RelativeDensity {
    pub index: i64,
    log_mu: f64,
    gibbs: Gibbs,
}

impl RelativeDensity {
    pub fn new(index: i64, scalars: &AsymptoticScalars, gibbs: &Gibbs) -> Self {
        Self {
            index,
            log_mu: scalars.log_mu(index),
            gibbs: gibbs.clone(),
        }
    }

    /// `w_j²` at the centre of cell `i`.
    pub fn eval_cell(&self, rho: &DensityField, i: usize) -> f64 {
        let r = rho.values[i];
        if r <= DENSITY_CUTOFF {
            return 0.0;
        }
        (self.log_mu + r.ln() - self.gibbs.log_gamma(rho.grid.center(i))).exp()
    }

    /// `γ_j = γ/μ_j` at `p`.
    pub fn local_gibbs(&self, p: f64) -> f64 {
        (self.gibbs.log_gamma(p) - self.log_mu).exp()
    }
}

/// First moment `𝒫`, counting moment `𝒦` and second moment `𝒱`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub p: f64,
    pub k: f64,
    pub v: f64,
}

pub fn moments(rho: &DensityField, phi: &WeightPhi) -> Result<Moments> {
    let g = &rho.grid;
    let h = g.h();
    let mut m = Moments {
        p: 0.0,
        k: 0.0,
        v: 0.0,
    };
    for (i, r) in rho.values.iter().enumerate() {
        let p = g.center(i);
        m.p += h * p * r;
        m.k += h * phi.eval(p)? * r;
        m.v += h * p * p * r;
    }
    Ok(m)
}

/// `|∫ v ρ dp - Σ_j m_j v(P_j)|`.
pub fn moment_approximation_error<V: Fn(f64) -> f64>(
    rho: &DensityField,
    v: V,
    masses: &WellSeries,
    cp: &CriticalPoints,
) -> f64 {
    let g = &rho.grid;
    let integral: f64 = g.h()
        * rho
            .values
            .iter()
            .enumerate()
            .map(|(i, r)| v(g.center(i)) * r)
            .sum::<f64>();
    let lattice: f64 = masses.iter().map(|(j, m)| m * v(cp.p_min(j))).sum();
    (integral - lattice).abs()
}

/// All observables of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub dissipation_wells: WellSeries,
    pub dissipation_boundary: f64,
    pub first_moment: f64,
    pub counting_moment: f64,
    pub second_moment: f64,
    pub total_mass: f64,
    pub masses: WellSeries,
    pub bar: WellSeries,
    pub bar_zero_density: Vec<i64>,
    pub tilde: WellSeries,
}

/// Residual `τ(𝓔⁺ - 𝓔⁻)/Δt + ν⁴ 𝓓_mid` of the energy balance, and the same
/// relative to `ν⁴ 𝓓_mid` (zero when both vanish).
pub fn energy_balance_residual(
    prev: &DiagnosticsRecord,
    next: &DiagnosticsRecord,
    nu: f64,
    tau: f64,
) -> (f64, f64) {
    let dt = next.t - prev.t;
    let nu4 = nu.powi(4);
    let d_mid = 0.5 * (prev.dissipation + next.dissipation);
    let r = tau * (next.energy - prev.energy) / dt + nu4 * d_mid;
    let scale = nu4 * d_mid;
    let rel = if scale > 0.0 {
        r.abs() / scale
    } else if r == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (r, rel)
}

/// Snapshot analyser for a tilted periodic potential on an aligned grid.
#[derive(Debug, Clone)]
pub struct PeriodicDiagnostics {
    pub scalars: AsymptoticScalars,
    pub gibbs: Gibbs,
    pub table: Arc<PsiTable>,
    pub phi: WeightPhi,
    pub grid: Grid1D,
    pub wells: RangeInclusive<i64>,
    heff: Vec<f64>,
}

impl PeriodicDiagnostics {
    pub fn new(pot: &PeriodicPotential, scalars: AsymptoticScalars, grid: Grid1D) -> Result<Self> {
        let gibbs = Gibbs::new(pot, scalars.sigma, scalars.nu);
        let table = Arc::new(PsiTable::build(&scalars, &gibbs)?);
        let wells = grid_wells(&grid, &scalars.critical);
        let phi = crate::weights::build_phi(&scalars, &gibbs, wells.clone())?;
        let heff = grid
            .centers()
            .into_iter()
            .map(|p| pot.effective(scalars.sigma, p))
            .collect();
        Ok(Self {
            scalars,
            gibbs,
            table,
            phi,
            grid,
            wells,
            heff,
        })
    }

    pub fn heff(&self) -> &[f64] {
        &self.heff
    }

    pub fn record(&self, t: f64, rho: &DensityField) -> Result<DiagnosticsRecord> {
        let cp = &self.scalars.critical;
        let nu = self.scalars.nu;
        let masses = partial_masses(rho, cp, self.wells.clone())?;
        let bar = substitute_bar(rho, &self.scalars, &self.gibbs, self.wells.clone());
        let tilde = substitute_tilde(rho, &self.table, self.wells.clone());
        let diss = dissipation_from_samples(
            rho,
            &self.heff,
            nu,
            self.wells.clone(),
            periodic_edge_well(*cp, rho.grid.h()),
        );
        let mom = moments(rho, &self.phi)?;
        Ok(DiagnosticsRecord {
            t,
            energy: energy_from_samples(rho, &self.heff, nu),
            dissipation: diss.total,
            dissipation_wells: diss.per_well,
            dissipation_boundary: diss.boundary,
            first_moment: mom.p,
            counting_moment: mom.k,
            second_moment: mom.v,
            total_mass: rho.total_mass(),
            masses,
            bar: bar.masses,
            bar_zero_density: bar.zero_density,
            tilde,
        })
    }

    /// Relative residual of `(1+θ) dm̃_j/dt = m̄_{j-1} - (1+κ) m̄_j + κ m̄_{j+1}`
    /// at the middle record, with a central difference in time, summed over
    /// the interior wells: `Σ|lhs - rhs| / Σ|rhs|`.
    pub fn balance_residual(
        &self,
        before: &DiagnosticsRecord,
        mid: &DiagnosticsRecord,
        after: &DiagnosticsRecord,
    ) -> (f64, Vec<(i64, f64, f64)>) {
        let s = &self.scalars;
        let dt = after.t - before.t;
        let lo = *self.wells.start() + 1;
        let hi = *self.wells.end() - 1;
        let mut rows = Vec::new();
        let (mut num, mut den) = (0.0, 0.0);
        for j in lo..=hi {
            let lhs = (1.0 + s.theta) * (after.tilde.get(j) - before.tilde.get(j)) / dt;
            let rhs = mid.bar.get(j - 1) - (1.0 + s.kappa) * mid.bar.get(j)
                + s.kappa * mid.bar.get(j + 1);
            num += (lhs - rhs).abs();
            den += rhs.abs();
            rows.push((j, lhs, rhs));
        }
        (if den > 0.0 { num / den } else { num }, rows)
    }
}

/// Single-snapshot check of the substitute-mass bounds:
/// `Σ_j (|m_j - m̄_j| + |m_j - m̃_j|)`.
pub fn substitute_discrepancy(record: &DiagnosticsRecord) -> f64 {
    let lo = record.masses.first;
    let hi = record.masses.last();
    (lo..=hi)
        .map(|j| {
            (record.masses.get(j) - record.bar.get(j)).abs()
                + (record.masses.get(j) - record.tilde.get(j)).abs()
        })
        .sum()
}
