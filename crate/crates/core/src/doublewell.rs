//! Double-well potentials: scalars, equilibrium, the exchange weight `ψ`,
//! substitute masses and the two-state limit dynamics.
//!
//! The built-in family is piecewise even: on each side of the barrier
//! `H(p) = a₂p² + a₄p⁴ + a₆p⁶`, with a shared `a₂ = -πω₀²` and per-side
//! `(a₄, a₆)` chosen so that side `±` has its minimum `P_±` at depth `h_±`
//! with `H″(P_±) = 2πω_±²`. Odd derivatives vanish at `p = 0` from both
//! sides, so Laplace expansions at the barrier proceed in powers of `ν²`.
//! Growth needs `a₆ ≥ 0`, i.e. `ω_± ≥ √2 ω₀`. The symmetric quartic
//! `(p²-1)² - 1` is the member with `h = 1`, `ω₀ = √(2/π)`, `ω_± = √(4/π)`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpsolver::{DensityField, Grid1D};
use crate::observables::{log_relative_at, mass_between};
use crate::quad::{bisect, integrate, log_add_exp, log_integrate};
use crate::weights::PsiTable;

const QUAD_TOL: f64 = 1e-12;
/// Barriers closer than this are treated as equal.
pub const EQUAL_BARRIER_TOL: f64 = 1e-9;
/// Truncation depth: tails where `H ≥ h₊ + TRUNCATION·ν²` are dropped.
pub const TRUNCATION: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Side {
    a4: f64,
    a6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellPotential {
    pub h_minus: f64,
    pub h_plus: f64,
    pub omega0: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    a2: f64,
    left: Side,
    right: Side,
}

impl DoubleWellPotential {
    /// Family member with the given depths and curvature parameters. If
    /// `h_minus > h_plus` the sides are relabelled (mirrored) so the
    /// shallower well is always on the left.
    pub fn new(
        h_minus: f64,
        h_plus: f64,
        omega0: f64,
        omega_minus: f64,
        omega_plus: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("h_minus", h_minus),
            ("h_plus", h_plus),
            ("omega0", omega0),
            ("omega_minus", omega_minus),
            ("omega_plus", omega_plus),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if h_minus > h_plus {
            return Self::new(h_plus, h_minus, omega0, omega_plus, omega_minus);
        }
        let w0 = omega0 * omega0;
        if omega_minus * omega_minus < 2.0 * w0 * (1.0 - 1e-12)
            || omega_plus * omega_plus < 2.0 * w0 * (1.0 - 1e-12)
        {
            return Err(Error::InvalidArgument(format!(
                "well curvatures ({omega_minus}, {omega_plus}) must be at least √2 times the barrier curvature {omega0}"
            )));
        }
        let a2 = -PI * w0;
        let side = |h: f64, omega: f64, sign: f64| -> (f64, Side) {
            let w = omega * omega;
            let x = 12.0 * h / (PI * (w + 4.0 * w0));
            let a4 = PI * (w0 - 0.25 * w) / x;
            let a6 = (PI / 3.0 * (0.5 * w - w0) / (x * x)).max(0.0);
            (sign * x.sqrt(), Side { a4, a6 })
        };
        let (p_minus, left) = side(h_minus, omega_minus, -1.0);
        let (p_plus, right) = side(h_plus, omega_plus, 1.0);
        Ok(Self {
            h_minus,
            h_plus,
            omega0,
            omega_minus,
            omega_plus,
            p_minus,
            p_plus,
            a2,
            left,
            right,
        })
    }

    /// `(p² - 1)² - 1`.
    pub fn symmetric_quartic() -> Self {
        Self::new(
            1.0,
            1.0,
            (2.0 / PI).sqrt(),
            (4.0 / PI).sqrt(),
            (4.0 / PI).sqrt(),
        )
        .expect("valid parameters")
    }

    fn side(&self, p: f64) -> Side {
        if p < 0.0 {
            self.left
        } else {
            self.right
        }
    }

    pub fn value(&self, p: f64) -> f64 {
        let s = self.side(p);
        let x = p * p;
        x * (self.a2 + x * (s.a4 + x * s.a6))
    }

    pub fn d1(&self, p: f64) -> f64 {
        let s = self.side(p);
        let x = p * p;
        2.0 * p * (self.a2 + x * (2.0 * s.a4 + 3.0 * x * s.a6))
    }

    pub fn d2(&self, p: f64) -> f64 {
        let s = self.side(p);
        let x = p * p;
        2.0 * self.a2 + x * (12.0 * s.a4 + 30.0 * x * s.a6)
    }

    pub fn is_equal_barrier(&self) -> bool {
        (self.h_plus - self.h_minus).abs() <= EQUAL_BARRIER_TOL
    }

    /// Outer points where `H = level` (`level > 0`).
    pub fn outer_level_points(&self, level: f64) -> (f64, f64) {
        let mut r = self.p_plus.max(1.0);
        while self.value(r) < level {
            r *= 2.0;
        }
        let mut l = self.p_minus.min(-1.0);
        while self.value(l) < level {
            l *= 2.0;
        }
        let hi = bisect(|p| self.value(p) - level, self.p_plus, r, 1e-14).unwrap_or(r);
        let lo = bisect(|p| self.value(p) - level, l, self.p_minus, 1e-14).unwrap_or(l);
        (lo, hi)
    }

    /// Truncated domain `H ≥ h₊ + 60ν²` at both ends.
    pub fn domain(&self, nu: f64) -> (f64, f64) {
        self.outer_level_points(self.h_plus + TRUNCATION * nu * nu)
    }

    /// Uniform grid on the truncated domain with the barrier `p = 0` on a
    /// cell edge and spacing at most `h_max`.
    pub fn grid(&self, nu: f64, h_max: f64) -> Result<Grid1D> {
        let (lo, hi) = self.domain(nu);
        let h = h_max;
        let nl = (-lo / h).ceil();
        let nr = (hi / h).ceil();
        Grid1D::new(-nl * h, nr * h, (nl + nr) as usize)
    }

    pub fn samples(&self, grid: &Grid1D) -> Vec<f64> {
        grid.centers().into_iter().map(|p| self.value(p)).collect()
    }
}

/// Scalars of the double-well problem; logs are kept alongside values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellScalars {
    pub nu: f64,
    pub log_mu_minus: f64,
    pub log_mu_plus: f64,
    pub log_eta: f64,
    pub kappa: f64,
    pub log_tau: f64,
    pub tau: f64,
    pub theta: f64,
}

impl DoubleWellScalars {
    pub fn mu_sum_log(&self) -> f64 {
        log_add_exp(self.log_mu_minus, self.log_mu_plus)
    }
}

pub fn dw_scalars(pot: &DoubleWellPotential, nu: f64) -> Result<DoubleWellScalars> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "nu = {nu} must be positive"
        )));
    }
    let nu2 = nu * nu;
    let log_gamma = |p: f64| -pot.value(p) / nu2;
    let (lo_m, _) = pot.outer_level_points(-pot.h_minus + TRUNCATION * nu2);
    let (_, hi_p) = pot.outer_level_points(-pot.h_plus + TRUNCATION * nu2);
    // Split at the minima so the peaks sit on panel ends.
    let log_mu_minus = log_add_exp(
        log_integrate(log_gamma, lo_m, pot.p_minus, pot.h_minus / nu2, QUAD_TOL)?,
        log_integrate(log_gamma, pot.p_minus, 0.0, pot.h_minus / nu2, QUAD_TOL)?,
    );
    let log_mu_plus = log_add_exp(
        log_integrate(log_gamma, 0.0, pot.p_plus, pot.h_plus / nu2, QUAD_TOL)?,
        log_integrate(log_gamma, pot.p_plus, hi_p, pot.h_plus / nu2, QUAD_TOL)?,
    );
    let inv = |p: f64| pot.value(p) / nu2;
    let log_eta = log_add_exp(
        log_integrate(inv, pot.p_minus, 0.0, 0.0, QUAD_TOL)?,
        log_integrate(inv, 0.0, pot.p_plus, 0.0, QUAD_TOL)?,
    );
    let log_tau = (pot.omega0 * pot.omega_minus).ln() - pot.h_minus / nu2;
    let log_prod = log_tau + log_mu_minus + log_eta - 2.0 * nu.ln();
    Ok(DoubleWellScalars {
        nu,
        log_mu_minus,
        log_mu_plus,
        log_eta,
        kappa: (log_mu_minus - log_mu_plus).exp(),
        log_tau,
        tau: log_tau.exp(),
        theta: log_prod.exp_m1(),
    })
}

/// Laplace approximations `(ν/ω_±) e^{h_±/ν²}` and `ν/ω₀`, as logs
/// `(ln μ₋, ln μ₊, ln η)`.
pub fn dw_laplace(pot: &DoubleWellPotential, nu: f64) -> (f64, f64, f64) {
    let nu2 = nu * nu;
    (
        (nu / pot.omega_minus).ln() + pot.h_minus / nu2,
        (nu / pot.omega_plus).ln() + pot.h_plus / nu2,
        (nu / pot.omega0).ln(),
    )
}

/// Normalized global equilibrium `γ̄ = γ/(μ₋ + μ₊)`.
pub fn dw_equilibrium(
    pot: &DoubleWellPotential,
    scalars: &DoubleWellScalars,
) -> impl Fn(f64) -> f64 {
    let nu2 = scalars.nu * scalars.nu;
    let log_z = scalars.mu_sum_log();
    let pot = *pot;
    move |p| (-pot.value(p) / nu2 - log_z).exp()
}

/// Exchange weight: `ψ(P₋) = 0`, `ψ′ = 1/(ηγ)` on `(P₋, P₊)`, `ψ(P₊) = 1`.
pub fn dw_weight_psi(
    pot: &DoubleWellPotential,
    scalars: &DoubleWellScalars,
) -> Result<Arc<PsiTable>> {
    let nu2 = scalars.nu * scalars.nu;
    let log_eta = scalars.log_eta;
    let p = *pot;
    let table = PsiTable::from_derivative(
        pot.p_minus,
        pot.p_plus - pot.p_minus,
        Arc::new(move |x: f64| (p.value(x) / nu2 - log_eta).exp()),
    )?;
    Ok(Arc::new(table))
}

/// Masses of one double-well snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellMasses {
    pub m_minus: f64,
    pub m_plus: f64,
    pub bar_minus: f64,
    pub bar_plus: f64,
    pub tilde_minus: f64,
    pub tilde_plus: f64,
    /// Set when `ρ` vanishes next to a minimum and `m̄` fell back to 0.
    pub zero_density: bool,
}

pub fn dw_substitute_masses(
    rho: &DensityField,
    scalars: &DoubleWellScalars,
    pot: &DoubleWellPotential,
    psi: &PsiTable,
) -> DoubleWellMasses {
    let nu2 = scalars.nu * scalars.nu;
    let g = &rho.grid;
    let h = g.h();
    let log_gamma = |p: f64| -pot.value(p) / nu2;
    let bar = |p_min: f64, log_mu: f64| {
        log_relative_at(rho, log_gamma, p_min).map(|l| (log_mu + l).exp())
    };
    let bm = bar(pot.p_minus, scalars.log_mu_minus);
    let bp = bar(pot.p_plus, scalars.log_mu_plus);
    let mut tilde_plus = 0.0;
    let mut total = 0.0;
    for (i, r) in rho.values.iter().enumerate() {
        tilde_plus += h * psi.eval(g.center(i)) * r;
        total += h * r;
    }
    DoubleWellMasses {
        m_minus: mass_between(rho, g.p_lo, 0.0),
        m_plus: mass_between(rho, 0.0, g.p_hi),
        bar_minus: bm.unwrap_or(0.0),
        bar_plus: bp.unwrap_or(0.0),
        tilde_minus: total - tilde_plus,
        tilde_plus,
        zero_density: bm.is_none() || bp.is_none(),
    }
}

/// Relative residual of `(1+θ) dm̃₊/dt = m̄₋ - κ m̄₊` at the middle snapshot,
/// with a central time difference: `|lhs - rhs| / max(|lhs|, |rhs|)`.
pub fn dw_effective_rate(
    scalars: &DoubleWellScalars,
    before: (f64, &DoubleWellMasses),
    mid: &DoubleWellMasses,
    after: (f64, &DoubleWellMasses),
) -> (f64, f64, f64) {
    let lhs =
        (1.0 + scalars.theta) * (after.1.tilde_plus - before.1.tilde_plus) / (after.0 - before.0);
    let rhs = mid.bar_minus - scalars.kappa * mid.bar_plus;
    let scale = lhs.abs().max(rhs.abs());
    let rel = if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        0.0
    };
    (rel, lhs, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitMode {
    Generic,
    EqualBarriers,
}

/// Mode implied by the barrier heights.
pub fn limit_mode(pot: &DoubleWellPotential) -> LimitMode {
    if pot.is_equal_barrier() {
        LimitMode::EqualBarriers
    } else {
        LimitMode::Generic
    }
}

/// Closed-form limit dynamics, returning `(m₋(t), m₊(t))` at `times`
/// for total mass `m0_minus + m0_plus`.
/// Generic: `ṁ₊ = m₋`; equal barriers: `ṁ₊ = m₋ - κ m₊`.
pub fn dw_limit_ode(
    m0_minus: f64,
    m0_plus: f64,
    times: &[f64],
    mode: LimitMode,
    kappa: f64,
) -> Vec<(f64, f64)> {
    let total = m0_minus + m0_plus;
    times
        .iter()
        .map(|&t| match mode {
            LimitMode::Generic => {
                let m = m0_minus * (-t).exp();
                (m, total - m)
            }
            LimitMode::EqualBarriers => {
                let steady = total / (1.0 + kappa);
                let mp = steady + (m0_plus - steady) * (-(1.0 + kappa) * t).exp();
                (total - mp, mp)
            }
        })
        .collect()
}

/// [`dw_limit_ode`] after checking `mode` against the potential.
pub fn dw_limit_ode_for(
    pot: &DoubleWellPotential,
    m0_minus: f64,
    m0_plus: f64,
    times: &[f64],
    mode: LimitMode,
) -> Result<Vec<(f64, f64)>> {
    if mode != limit_mode(pot) {
        return Err(Error::Mode(format!(
            "{mode:?} requested but barriers are h₋ = {}, h₊ = {}",
            pot.h_minus, pot.h_plus
        )));
    }
    Ok(dw_limit_ode(
        m0_minus,
        m0_plus,
        times,
        mode,
        pot.omega_plus / pot.omega_minus,
    ))
}

/// Local equilibrium of the left well on the grid, normalized to unit mass.
pub fn left_well_start(pot: &DoubleWellPotential, grid: Grid1D, nu: f64) -> Result<DensityField> {
    let nu2 = nu * nu;
    let mut rho = DensityField::sampled(grid, |p| {
        if p < 0.0 {
            (-(pot.value(p) + pot.h_minus) / nu2).exp()
        } else {
            0.0
        }
    })?;
    rho.normalize();
    Ok(rho)
}

/// `∫ γ̄ dp` over the truncated domain.
pub fn equilibrium_mass(pot: &DoubleWellPotential, scalars: &DoubleWellScalars) -> Result<f64> {
    let eq = dw_equilibrium(pot, scalars);
    let (lo, hi) = pot.domain(scalars.nu);
    Ok(integrate(&eq, lo, pot.p_minus, QUAD_TOL)?
        + integrate(&eq, pot.p_minus, 0.0, QUAD_TOL)?
        + integrate(&eq, 0.0, pot.p_plus, QUAD_TOL)?
        + integrate(&eq, pot.p_plus, hi, QUAD_TOL)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpsolver::{build_generator_from_samples, step, Generator};
    use crate::observables::energy_from_samples;

    #[test]
    fn symmetric_quartic_coefficients() {
        let q = DoubleWellPotential::symmetric_quartic();
        for &p in &[-1.7, -1.0, -0.3, 0.0, 0.4, 1.0, 2.2] {
            let exact = (p * p - 1.0f64).powi(2) - 1.0;
            assert!((q.value(p) - exact).abs() < 1e-12, "{p}");
        }
        assert!((q.p_plus - 1.0).abs() < 1e-14 && (q.p_minus + 1.0).abs() < 1e-14);
        assert!((q.d2(1.0) - 8.0).abs() < 1e-12);
        assert!((q.d2(0.0) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn family_hits_targets() {
        let q = DoubleWellPotential::new(2.0, 3.0, 0.7, 1.1, 1.5).unwrap();
        assert!((q.value(q.p_minus) + 2.0).abs() < 1e-12);
        assert!((q.value(q.p_plus) + 3.0).abs() < 1e-12);
        assert!(q.d1(q.p_minus).abs() < 1e-12 && q.d1(q.p_plus).abs() < 1e-12);
        assert!((q.d2(q.p_minus) - 2.0 * PI * 1.21).abs() < 1e-12);
        assert!((q.d2(q.p_plus) - 2.0 * PI * 2.25).abs() < 1e-12);
        assert!((q.d2(0.0) + 2.0 * PI * 0.49).abs() < 1e-12);
        // Smooth through the barrier up to the fourth derivative.
        assert!((q.d2(-1e-6) - q.d2(1e-6)).abs() < 1e-10);
        assert!((q.d1(-1e-3) + q.d1(1e-3)).abs() < 1e-8);
        // Relabelling puts the shallow well left.
        let r = DoubleWellPotential::new(3.0, 2.0, 0.7, 1.5, 1.1).unwrap();
        assert!((r.h_minus - 2.0).abs() < 1e-15 && (r.omega_minus - 1.1).abs() < 1e-15);
        assert!(DoubleWellPotential::new(1.0, 1.0, 0.8, 1.0, 2.0).is_err());
    }

    #[test]
    fn quartic_tau_and_symmetry() {
        let q = DoubleWellPotential::symmetric_quartic();
        let s = dw_scalars(&q, 0.4).unwrap();
        assert!((s.kappa - 1.0).abs() < 1e-10);
        let pref = (2.0 / PI).sqrt() * (4.0 / PI).sqrt();
        assert!((pref - 0.900316316157106).abs() < 1e-12);
        assert!((s.tau - pref * (-1.0 / 0.16f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_normalized_and_stationary() {
        let q = DoubleWellPotential::new(1.0, 1.4, 0.7, 1.1, 1.3).unwrap();
        let nu = 0.45;
        let s = dw_scalars(&q, nu).unwrap();
        assert!((equilibrium_mass(&q, &s).unwrap() - 1.0).abs() < 1e-10);
        let grid = q.grid(nu, 0.01).unwrap();
        let heff = q.samples(&grid);
        let gen = Generator::Line(build_generator_from_samples(&heff, nu, grid.h()));
        let g = DensityField::gibbs(grid, &heff, nu).unwrap();
        let mut r = g.clone();
        for _ in 0..1000 {
            r = step(&r, 0.05, &gen, s.tau, 1.0).unwrap();
        }
        assert!(g.l1_distance(&r) < 1e-12, "{}", g.l1_distance(&r));
        let psi = dw_weight_psi(&q, &s).unwrap();
        let eq = DensityField::sampled(grid, dw_equilibrium(&q, &s)).unwrap();
        let m = dw_substitute_masses(&eq, &s, &q, &psi);
        assert!((m.m_minus / m.m_plus - s.kappa).abs() < 1e-9 * s.kappa);
        let z = s.mu_sum_log().exp();
        assert!((m.bar_minus - s.log_mu_minus.exp() / z).abs() < 1e-10);
        assert!((m.bar_minus - s.kappa * m.bar_plus).abs() < 1e-12);
        assert!((m.tilde_minus + m.tilde_plus - eq.total_mass()).abs() < 1e-14);
        // Energy of the Gibbs state equals the lower bound.
        let e = energy_from_samples(&g, &heff, nu);
        let bound = -nu * nu * s.mu_sum_log();
        assert!((e - bound).abs() < 1e-8, "{e} vs {bound}");
    }

    #[test]
    fn psi_endpoints_and_symmetry() {
        let q = DoubleWellPotential::symmetric_quartic();
        let s = dw_scalars(&q, 0.5).unwrap();
        let psi = dw_weight_psi(&q, &s).unwrap();
        assert_eq!(psi.eval(q.p_minus), 0.0);
        assert_eq!(psi.eval(q.p_plus), 1.0);
        assert!((psi.eval(0.0) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn limit_odes() {
        let g = dw_limit_ode(1.0, 0.0, &[1.0], LimitMode::Generic, 0.0);
        assert!((g[0].0 - (-1.0f64).exp()).abs() < 1e-15);
        let e = dw_limit_ode(1.0, 0.0, &[60.0], LimitMode::EqualBarriers, 1.0);
        assert!((e[0].1 - 0.5).abs() < 1e-12);
        let e = dw_limit_ode(1.0, 0.0, &[60.0], LimitMode::EqualBarriers, 2.0);
        assert!((e[0].0 / e[0].1 - 2.0).abs() < 1e-12);
        let generic = DoubleWellPotential::new(1.0, 2.0, 0.7, 1.0, 1.0).unwrap();
        assert!(matches!(
            dw_limit_ode_for(&generic, 1.0, 0.0, &[1.0], LimitMode::EqualBarriers),
            Err(Error::Mode(_))
        ));
    }

    #[test]
    fn laplace_agreement_improves() {
        let q = DoubleWellPotential::new(1.0, 1.3, 0.7, 1.1, 1.4).unwrap();
        let err = |nu: f64| {
            let s = dw_scalars(&q, nu).unwrap();
            let (lm, _, le) = dw_laplace(&q, nu);
            (
                (s.log_mu_minus - lm).exp_m1().abs(),
                (s.log_eta - le).exp_m1().abs(),
            )
        };
        let (a1, b1) = err(0.5);
        let (a2, b2) = err(0.25);
        // Second order: halving ν cuts the error about four-fold.
        assert!(a2 < 0.4 * a1 && b2 < 0.4 * b1, "{a1} {a2} {b1} {b2}");
    }
}
