//! Gibbs function, the well integrals `μ_j`, `η_j` and the scalars
//! `κ`, `θ`, `τ` derived from them.
//!
//! Every exponentially large or small quantity is kept as a natural
//! logarithm; only dimensionless ratios are exponentiated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::potential::{
    barriers, find_critical_points, CriticalPoints, KramersData, PeriodicPotential,
};
use crate::quad::log_integrate;

/// Relative tolerance used for all well integrals.
pub const QUAD_TOL: f64 = 1e-12;

/// `γ(p) = exp((-H(p) + σp)/ν²)` in log form.
#[derive(Debug, Clone)]
pub struct Gibbs {
    pot: PeriodicPotential,
    sigma: f64,
    nu: f64,
}

impl Gibbs {
    pub fn new(pot: &PeriodicPotential, sigma: f64, nu: f64) -> Self {
        Self {
            pot: pot.clone(),
            sigma,
            nu,
        }
    }

    pub fn potential(&self) -> &PeriodicPotential {
        &self.pot
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn log_gamma(&self, p: f64) -> f64 {
        -self.pot.effective(self.sigma, p) / (self.nu * self.nu)
    }

    /// `γ(p) e^{-shift}`: mantissa relative to a caller-chosen exponent.
    pub fn gamma_scaled(&self, p: f64, shift: f64) -> f64 {
        (self.log_gamma(p) - shift).exp()
    }

    /// `γ(p)^{-1} e^{-shift}`.
    pub fn inv_gamma_scaled(&self, p: f64, shift: f64) -> f64 {
        (-self.log_gamma(p) - shift).exp()
    }
}

/// `ln μ₀ = ln ∫_{Q₋₁}^{Q₀} γ(p) dp`.
pub fn mu0(pot: &PeriodicPotential, sigma: f64, nu: f64, cp: &CriticalPoints) -> Result<f64> {
    let g = Gibbs::new(pot, sigma, nu);
    let shift = g.log_gamma(cp.p_min0);
    // split at the peak so each half is monotone
    let left = log_integrate(|p| g.log_gamma(p), cp.p_max(-1), cp.p_min0, shift, QUAD_TOL)?;
    let right = log_integrate(|p| g.log_gamma(p), cp.p_min0, cp.p_max0, shift, QUAD_TOL)?;
    Ok(crate::quad::log_add_exp(left, right))
}

/// `ln η₀ = ln ∫_{P₀}^{P₁} γ(p)^{-1} dp`.
pub fn eta0(pot: &PeriodicPotential, sigma: f64, nu: f64, cp: &CriticalPoints) -> Result<f64> {
    let g = Gibbs::new(pot, sigma, nu);
    let shift = -g.log_gamma(cp.p_max0);
    let left = log_integrate(|p| -g.log_gamma(p), cp.p_min0, cp.p_max0, shift, QUAD_TOL)?;
    let right = log_integrate(|p| -g.log_gamma(p), cp.p_max0, cp.p_min(1), shift, QUAD_TOL)?;
    Ok(crate::quad::log_add_exp(left, right))
}

/// Laplace approximation `ln[ν√(2π)/√|H″(P₀)| · exp((-H(P₀)+σP₀)/ν²)]`.
pub fn laplace_mu0(pot: &PeriodicPotential, sigma: f64, nu: f64, cp: &CriticalPoints) -> f64 {
    let p = cp.p_min0;
    (nu * (2.0 * PI).sqrt() / pot.d2(p).abs().sqrt()).ln() - pot.effective(sigma, p) / (nu * nu)
}

/// Laplace approximation `ln[ν√(2π)/√|H″(Q₀)| · exp((H(Q₀)-σQ₀)/ν²)]`.
pub fn laplace_eta0(pot: &PeriodicPotential, sigma: f64, nu: f64, cp: &CriticalPoints) -> f64 {
    let q = cp.p_max0;
    (nu * (2.0 * PI).sqrt() / pot.d2(q).abs().sqrt()).ln() + pot.effective(sigma, q) / (nu * nu)
}

/// The asymptotic bundle for one `(H, σ, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticScalars {
    pub sigma: f64,
    pub nu: f64,
    pub period: f64,
    pub critical: CriticalPoints,
    pub kramers: KramersData,
    pub log_mu0: f64,
    pub log_eta0: f64,
    /// `ln κ = -σL/ν²`
    pub log_kappa: f64,
    pub kappa: f64,
    pub log_tau: f64,
    pub tau: f64,
    pub theta: f64,
}

impl AsymptoticScalars {
    pub fn compute(pot: &PeriodicPotential, sigma: f64, nu: f64) -> Result<Self> {
        let cp = find_critical_points(pot, sigma)?;
        Self::with_critical_points(pot, sigma, nu, &cp)
    }

    pub fn with_critical_points(
        pot: &PeriodicPotential,
        sigma: f64,
        nu: f64,
        cp: &CriticalPoints,
    ) -> Result<Self> {
        let kd = barriers(pot, sigma, cp);
        let tau = kd.tau_of(nu)?;
        let log_tau = kd.log_tau(nu)?;
        let log_mu0 = mu0(pot, sigma, nu, cp)?;
        let log_eta0 = eta0(pot, sigma, nu, cp)?;
        let log_kappa = -sigma * pot.period() / (nu * nu);
        let mut s = Self {
            sigma,
            nu,
            period: pot.period(),
            critical: *cp,
            kramers: kd,
            log_mu0,
            log_eta0,
            log_kappa,
            kappa: log_kappa.exp(),
            log_tau,
            tau,
            theta: 0.0,
        };
        s.theta = theta(&s);
        Ok(s)
    }

    /// `ln μ_j = ln μ₀ - j ln κ`.
    pub fn log_mu(&self, j: i64) -> f64 {
        self.log_mu0 - j as f64 * self.log_kappa
    }

    /// `ln η_j = ln η₀ + j ln κ`.
    pub fn log_eta(&self, j: i64) -> f64 {
        self.log_eta0 + j as f64 * self.log_kappa
    }

    /// `ν²/(μ₀η₀)`, the time scale for which `θ` vanishes.
    pub fn refined_tau(&self) -> f64 {
        (2.0 * self.nu.ln() - self.log_mu0 - self.log_eta0).exp()
    }

    /// Same bundle with `τ` replaced by [`Self::refined_tau`].
    pub fn with_refined_tau(&self) -> Self {
        let mut s = *self;
        s.log_tau = 2.0 * self.nu.ln() - self.log_mu0 - self.log_eta0;
        s.tau = s.log_tau.exp();
        s.theta = theta(&s);
        s
    }
}

/// `θ = τ μ₀ η₀ / ν² - 1`, evaluated in the log domain.
pub fn theta(s: &AsymptoticScalars) -> f64 {
    (s.log_tau + s.log_mu0 + s.log_eta0 - 2.0 * s.nu.ln()).exp_m1()
}

/// The normalized local equilibrium `γ_j = μ_j^{-1} χ_{J_j} γ`.
#[derive(Debug, Clone)]
pub struct LocalEquilibrium {
    pub index: i64,
    pub lo: f64,
    pub hi: f64,
    log_mu: f64,
    gibbs: Gibbs,
}

impl LocalEquilibrium {
    pub fn eval(&self, p: f64) -> f64 {
        if p <= self.lo || p >= self.hi {
            return 0.0;
        }
        (self.gibbs.log_gamma(p) - self.log_mu).exp()
    }

    pub fn log_eval(&self, p: f64) -> f64 {
        if p <= self.lo || p >= self.hi {
            return f64::NEG_INFINITY;
        }
        self.gibbs.log_gamma(p) - self.log_mu
    }
}

pub fn local_equilibrium(j: i64, scalars: &AsymptoticScalars, gibbs: &Gibbs) -> LocalEquilibrium {
    let cp = &scalars.critical;
    LocalEquilibrium {
        index: j,
        lo: cp.p_max(j - 1),
        hi: cp.p_max(j),
        log_mu: scalars.log_mu(j),
        gibbs: gibbs.clone(),
    }
}
