//! Ballistic transport for tilts beyond the largest slope of `H`.
//!
//! Without wells the center of mass moves at the effective velocity
//! `λ = L / ∫₀^L dp/(σ − H′)`, the harmonic mean of the drift. The periodic
//! solution of `ν²ψ″ = (H′ − σ)ψ′ + 1` is the corrector that turns this
//! statement into an estimate; its derivative is evaluated here with every
//! Gibbs ratio kept as a non-positive exponent.

use crate::fpsolver::{DensityField, PeriodicRun};
use crate::potential::PeriodicPotential;
use crate::quad::{golden_max, integrate, integrate_with};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance of the corrector quadratures.
pub const QUAD_TOL: f64 = 1e-13;
/// Relative tolerance for `λ`; near `σ^*` the integrand's rounding floor
/// sits around `1e-12`.
pub const VELOCITY_TOL: f64 = 1e-11;

/// Which sign the velocity is reported with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignConvention {
    /// `λ > 0` for rightward drift, matching the Langevin dynamics.
    #[default]
    Drift,
    /// `1/λ = (1/L)∫ dp/(H′ − σ)`, the opposite sign.
    Formula,
}

fn check_regime(pot: &PeriodicPotential, sigma: f64) -> Result<()> {
    let margin = 1e-6 * (pot.sigma_hi() - pot.sigma_lo());
    if (sigma - pot.sigma_hi()).abs() < margin {
        return Err(Error::SingularIntegral(format!(
            "σ = {sigma} within {margin:e} of max H' = {}",
            pot.sigma_hi()
        )));
    }
    if sigma < pot.sigma_hi() {
        return Err(Error::Regime {
            sigma,
            lo: pot.sigma_hi(),
            hi: f64::INFINITY,
        });
    }
    Ok(())
}

/// Location of the largest slope of `H` in `[0, L)`.
fn steepest_point(pot: &PeriodicPotential) -> f64 {
    let l = pot.period();
    let n = 512;
    let k = (0..n)
        .max_by(|&a, &b| {
            pot.d1(a as f64 * l / n as f64)
                .total_cmp(&pot.d1(b as f64 * l / n as f64))
        })
        .unwrap();
    let h = l / n as f64;
    golden_max(
        |p| pot.d1(p),
        (k as f64 - 1.0) * h,
        (k as f64 + 1.0) * h,
        1e-14 * l,
    )
    .0
}

/// `∫₀^L dp/(σ − H′)`, integrated over one period starting at the steepest
/// point so the near-singular peak sits at the endpoints.
fn traversal_time(pot: &PeriodicPotential, sigma: f64) -> Result<f64> {
    let p0 = steepest_point(pot);
    integrate_with(
        |p| 1.0 / (sigma - pot.d1(p)),
        p0,
        p0 + pot.period(),
        VELOCITY_TOL,
        64,
    )
}

/// Effective velocity `λ = L / ∫₀^L dp/(σ − H′)`.
pub fn effective_velocity(pot: &PeriodicPotential, sigma: f64) -> Result<f64> {
    effective_velocity_with(pot, sigma, SignConvention::Drift)
}

pub fn effective_velocity_with(
    pot: &PeriodicPotential,
    sigma: f64,
    sign: SignConvention,
) -> Result<f64> {
    check_regime(pot, sigma)?;
    let lambda = pot.period() / traversal_time(pot, sigma)?;
    Ok(match sign {
        SignConvention::Drift => lambda,
        SignConvention::Formula => -lambda,
    })
}

/// Periodic `ψ′` solving `ν²ψ″ = (H′ − σ)ψ′ + 1`.
///
/// `ψ′(p) = c·γ(0)/γ(p) + ∫₀^p γ(q)/γ(p) dq/ν²` with `γ = e^{−H_eff/ν²}`;
/// since `H_eff` decreases, `γ(q)/γ(p) ≤ 1` for `q ≤ p`.
#[derive(Debug, Clone)]
pub struct BallisticWeight {
    pot: PeriodicPotential,
    sigma: f64,
    nu: f64,
    /// `ψ′(0)`, the unique value making `ψ′` periodic.
    pub c: f64,
}

impl BallisticWeight {
    fn heff(&self, p: f64) -> f64 {
        self.pot.effective(self.sigma, p)
    }

    fn on_period(&self, p: f64) -> Result<f64> {
        let nu2 = self.nu * self.nu;
        let hp = self.heff(p);
        let tail = integrate(|q| ((hp - self.heff(q)) / nu2).exp(), 0.0, p, QUAD_TOL)?;
        Ok(self.c * ((hp - self.heff(0.0)) / nu2).exp() + tail / nu2)
    }

    /// `ψ′(p)`, extended periodically.
    pub fn derivative(&self, p: f64) -> Result<f64> {
        self.on_period(p.rem_euclid(self.pot.period()))
    }

    /// `|ψ′(L) − ψ′(0)| / ψ′(0)` with `ψ′(L)` evaluated from the integral
    /// formula rather than by periodic reduction.
    pub fn periodicity_residual(&self) -> Result<f64> {
        Ok((self.on_period(self.pot.period())? - self.c).abs() / self.c)
    }

    /// Leading term `u₀ = 1/(σ − H′)` of the small-`ν` expansion.
    pub fn u0(&self, p: f64) -> f64 {
        1.0 / (self.sigma - self.pot.d1(p))
    }

    /// Correction `u₁ = −H″/(σ − H′)³`, so `ψ′ ≈ u₀ + ν²u₁`.
    pub fn u1(&self, p: f64) -> f64 {
        -self.pot.d2(p) * self.u0(p).powi(3)
    }

    /// `(1/L)∫₀^L ψ′`.
    pub fn mean_derivative(&self) -> Result<f64> {
        let l = self.pot.period();
        let total = integrate_with(|p| self.on_period(p).unwrap_or(f64::NAN), 0.0, l, 1e-11, 32)?;
        if !total.is_finite() {
            return Err(Error::Quadrature {
                a: 0.0,
                b: l,
                tol: 1e-11,
                estimate: total,
            });
        }
        Ok(total / l)
    }

    /// `ψ(p) = ∫₀^p ψ′` given the precomputed period mean.
    pub fn psi(&self, p: f64, mean: f64) -> Result<f64> {
        let l = self.pot.period();
        let k = (p / l).floor();
        let r = p - k * l;
        let part = integrate_with(|q| self.on_period(q).unwrap_or(f64::NAN), 0.0, r, 1e-11, 16)?;
        Ok(k * l * mean + part)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Velocity, slope constant and the corrector it came from.
#[derive(Debug, Clone)]
pub struct BallisticResult {
    pub lambda: f64,
    pub c: f64,
    pub weight: BallisticWeight,
}

/// Build the periodic corrector; `c = ∫₀^L γ / (ν²(γ(L) − γ(0)))`.
pub fn ballistic_weight(pot: &PeriodicPotential, sigma: f64, nu: f64) -> Result<BallisticResult> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ν must be positive, got {nu}"
        )));
    }
    let lambda = effective_velocity(pot, sigma)?;
    let l = pot.period();
    let nu2 = nu * nu;
    let hl = pot.effective(sigma, l);
    let num = integrate(
        |q| ((hl - pot.effective(sigma, q)) / nu2).exp(),
        0.0,
        l,
        QUAD_TOL,
    )?;
    let den = nu2 * -(-(sigma * l) / nu2).exp_m1();
    let c = num / den;
    let weight = BallisticWeight {
        pot: pot.clone(),
        sigma,
        nu,
        c,
    };
    Ok(BallisticResult { lambda, c, weight })
}

/// Outcome of a periodic Fokker–Planck run measured against `λ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallisticCheck {
    pub lambda: f64,
    pub slope: f64,
    pub rel_err: f64,
    /// `(t, 𝒫(t), winding)`.
    pub series: Vec<(f64, f64, f64)>,
}

/// Least-squares slope of `y` against `t`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (st, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    num / den
}

/// Run the periodic solver from the uniform density with `τ = 1` and fit the
/// drift of `𝒫` over the second half of `[0, T]`.
pub fn ballistic_check(
    pot: &PeriodicPotential,
    sigma: f64,
    nu: f64,
    t_final: f64,
    n_cells: usize,
    dt: f64,
) -> Result<BallisticCheck> {
    let lambda = effective_velocity(pot, sigma)?;
    let run = PeriodicRun::new(pot, sigma, nu, 0.0, n_cells)?;
    let mut rho = DensityField::sampled(run.grid, |_| 1.0)?;
    rho.normalize();
    let every = ((t_final / dt) / 200.0).ceil().max(1.0) as usize;
    let series = run.run_first_moment(&rho, t_final, dt, every)?;
    let tail: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _, _)| *t >= 0.5 * t_final)
        .map(|&(t, p, _)| (t, p))
        .collect();
    let slope = ls_slope(&tail);
    Ok(BallisticCheck {
        lambda,
        slope,
        rel_err: (slope - lambda).abs() / lambda,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cosine() -> PeriodicPotential {
        PeriodicPotential::cosine()
    }

    #[test]
    fn velocity_closed_form() {
        for sigma in [1.25f64, 5.0] {
            let l = effective_velocity(&cosine(), sigma).unwrap();
            assert!(
                (l - (sigma * sigma - 1.0).sqrt()).abs() < 1e-9,
                "{sigma}: {l}"
            );
        }
        assert!((effective_velocity(&cosine(), 1.25).unwrap() - 0.75).abs() < 1e-12);
        let f = effective_velocity_with(&cosine(), 1.25, SignConvention::Formula).unwrap();
        assert!((f + 0.75).abs() < 1e-12);
    }

    #[test]
    fn velocity_large_tilt() {
        let l = effective_velocity(&cosine(), 100.0).unwrap();
        assert!((l / 100.0 - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn velocity_regime_errors() {
        let pot = cosine();
        assert!(matches!(
            effective_velocity(&pot, 1.0),
            Err(Error::SingularIntegral(_))
        ));
        assert!(matches!(
            effective_velocity(&pot, 0.5),
            Err(Error::Regime { .. })
        ));
        assert!(effective_velocity(&pot, 1.0 + 1e-5).is_ok());
    }

    #[test]
    fn velocity_matches_deterministic_traversal() {
        // Integrate ṗ = σ − H′ with RK4 until one period is crossed.
        let pot = PeriodicPotential::g_of_sin(vec![0.0, 1.0, 0.0, 0.1]).unwrap();
        let sigma = 1.6;
        let f = |p: f64| sigma - pot.d1(p);
        let (mut p, mut t, dt) = (0.0f64, 0.0f64, 1e-4);
        let l = pot.period();
        loop {
            let k1 = f(p);
            let k2 = f(p + 0.5 * dt * k1);
            let k3 = f(p + 0.5 * dt * k2);
            let k4 = f(p + dt * k3);
            let next = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if next >= l {
                t += (l - p) / (next - p) * dt;
                break;
            }
            p = next;
            t += dt;
        }
        let lambda = effective_velocity(&pot, sigma).unwrap();
        assert!((t - l / lambda).abs() / t < 1e-6, "{t} vs {}", l / lambda);
    }

    #[test]
    fn weight_periodic_and_positive() {
        for nu in [0.5, 0.2, 0.05] {
            let r = ballistic_weight(&cosine(), 1.25, nu).unwrap();
            assert!(r.c > 0.0);
            assert!(r.weight.periodicity_residual().unwrap() <= 1e-9);
            for k in 0..50 {
                let p = k as f64 * 0.13;
                assert!(r.weight.derivative(p).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn weight_solves_the_ode() {
        let r = ballistic_weight(&cosine(), 1.25, 0.3).unwrap();
        let w = &r.weight;
        let nu2 = 0.09;
        let h = 1e-4;
        for &p in &[0.3, 1.7, 4.0] {
            let d = w.derivative(p).unwrap();
            let dd = (w.derivative(p + h).unwrap() - w.derivative(p - h).unwrap()) / (2.0 * h);
            let res = nu2 * dd - ((p.sin() - 1.25) * d + 1.0);
            assert!(res.abs() < 1e-6, "{p}: {res}");
        }
    }

    #[test]
    fn weight_expansion_order() {
        // sup|ψ′ − u₀ − ν²u₁| shrinks like ν⁴.
        let sup = |nu: f64| {
            let r = ballistic_weight(&cosine(), 1.25, nu).unwrap();
            let w = &r.weight;
            (0..200)
                .map(|k| {
                    let p = k as f64 * 2.0 * std::f64::consts::PI / 200.0;
                    (w.derivative(p).unwrap() - w.u0(p) - nu * nu * w.u1(p)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (sup(0.1), sup(0.05));
        let order = (e1 / e2).ln() / 2f64.ln();
        assert!(
            (order - 4.0).abs() < 0.3,
            "order {order}, errors {e1:e} {e2:e}"
        );
        // The fitted constant stays moderate.
        assert!(e2 / 0.05f64.powi(4) < 1e3);
    }

    #[test]
    fn mean_derivative_approaches_inverse_velocity() {
        let target = 1.0 / 0.75;
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&nu| {
                let r = ballistic_weight(&cosine(), 1.25, nu).unwrap();
                (r.weight.mean_derivative().unwrap() - target).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn psi_minus_linear_part_bounded() {
        let r = ballistic_weight(&cosine(), 1.25, 0.2).unwrap();
        let mean = r.weight.mean_derivative().unwrap();
        let l = 2.0 * std::f64::consts::PI;
        let mut sup = 0.0f64;
        for k in 0..=40 {
            let p = k as f64 * 10.0 * l / 40.0 + 0.37;
            sup = sup.max((r.weight.psi(p, mean).unwrap() - p * mean).abs());
        }
        assert!(sup < 2.0 * l * mean, "{sup}");
    }

    #[test]
    fn pde_drift_matches_velocity() {
        let c = ballistic_check(&cosine(), 1.25, 0.1, 20.0, 1000, 0.01).unwrap();
        assert!(c.rel_err <= 0.02, "slope {} vs {}", c.slope, c.lambda);
        let c = ballistic_check(&cosine(), 5.0, 0.1, 20.0, 1000, 0.01).unwrap();
        assert!(
            (c.slope - 24f64.sqrt()).abs() / 24f64.sqrt() <= 0.02,
            "slope {}",
            c.slope
        );
    }

    #[test]
    fn slope_of_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 3.0 * k as f64 - 1.0)).collect();
        assert!((ls_slope(&pts) - 3.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn velocity_invariant_under_shift(shift in -3.0f64..3.0, offset in -5.0f64..5.0, sigma in 1.1f64..4.0) {
            let base = effective_velocity(&cosine(), sigma).unwrap();
            let moved = cosine().translated(shift, offset).unwrap();
            let v = effective_velocity(&moved, sigma).unwrap();
            prop_assert!((v - base).abs() < 1e-10 * base);
        }
    }
}
