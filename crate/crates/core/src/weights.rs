//! Moment weights `ψ_j`, the counting weight `φ` and the inner intervals
//! `I_j` around each minimum.
//!
//! Index convention: `ψ_j` rises from 0 to 1 across `K_j = (P_j, P_{j+1})`
//! with `ψ_j′ = 1/(η_j γ)` there, `ψ_j = 0` for `p ≤ P_j` and `ψ_j = 1` for
//! `p ≥ P_{j+1}`. The bump `ψ_{j-1} - ψ_j` is then close to the indicator
//! of the well `J_j = (Q_{j-1}, Q_j)`.
//!
//! Since `η_j γ(p + jL) = η₀ γ(p)`, every `ψ_j` is a translate of `ψ₀` and a
//! single cumulative table serves the whole lattice.

use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{AsymptoticScalars, Gibbs};
use crate::error::{Error, Result};
use crate::potential::{CriticalPoints, PeriodicPotential};
use crate::quad::{bisect, gauss_panel, integrate};

/// Mesh intervals of the cumulative table on `K₀`.
pub const PSI_TABLE_SIZE: usize = 4096;

type Derivative = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cumulative table of a weight rising from 0 to 1 across `[start, start + length]`;
/// for the lattice weights this is `ψ₀` on `[P₀, P₁]`.
#[derive(Clone)]
pub struct PsiTable {
    start: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    deriv: Derivative,
}

impl std::fmt::Debug for PsiTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PsiTable")
            .field("start", &self.start)
            .field("length", &self.period())
            .finish()
    }
}

impl PsiTable {
    pub fn build(scalars: &AsymptoticScalars, gibbs: &Gibbs) -> Result<Self> {
        let cp = &scalars.critical;
        let log_eta0 = scalars.log_eta0;
        let g = gibbs.clone();
        Self::from_derivative(
            cp.p_min0,
            cp.period,
            Arc::new(move |p: f64| (-g.log_gamma(p) - log_eta0).exp()),
        )
    }

    /// Table for the weight with the given derivative, which must integrate
    /// to one over `[start, start + length]`.
    pub fn from_derivative(start: f64, length: f64, deriv: Derivative) -> Result<Self> {
        let step = length / PSI_TABLE_SIZE as f64;
        let mut values = Vec::with_capacity(PSI_TABLE_SIZE + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for k in 0..PSI_TABLE_SIZE {
            let a = start + k as f64 * step;
            acc += gauss_panel(&*deriv, a, a + step);
            values.push(acc);
        }
        let total = acc;
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Quadrature {
                a: start,
                b: start + length,
                tol: 1e-8,
                estimate: total,
            });
        }
        for v in values.iter_mut() {
            *v /= total;
        }
        values[PSI_TABLE_SIZE] = 1.0;
        let slopes: Vec<f64> = (0..=PSI_TABLE_SIZE)
            .map(|k| deriv(start + k as f64 * step) / total)
            .collect();
        let mut table = Self {
            start,
            step,
            values,
            slopes,
            deriv,
        };
        table.limit_slopes();
        Ok(table)
    }

    // Fritsch–Carlson limiter so the Hermite interpolant stays monotone.
    fn limit_slopes(&mut self) {
        for k in 0..PSI_TABLE_SIZE {
            let delta = (self.values[k + 1] - self.values[k]) / self.step;
            if delta <= 0.0 {
                self.slopes[k] = 0.0;
                self.slopes[k + 1] = 0.0;
                continue;
            }
            let a = self.slopes[k] / delta;
            let b = self.slopes[k + 1] / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                self.slopes[k] = t * a * delta;
                self.slopes[k + 1] = t * b * delta;
            }
        }
    }

    /// `ψ₀(p)`.
    pub fn eval(&self, p: f64) -> f64 {
        let x = (p - self.start) / self.step;
        if x <= 0.0 {
            return 0.0;
        }
        if x >= PSI_TABLE_SIZE as f64 {
            return 1.0;
        }
        let k = (x.floor() as usize).min(PSI_TABLE_SIZE - 1);
        let t = x - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        v.clamp(y0, y1)
    }

    /// `ψ₀′(p) = 1/(η₀ γ(p))` inside the transition interval, zero elsewhere.
    pub fn derivative(&self, p: f64) -> f64 {
        let x = p - self.start;
        if x <= 0.0 || x >= self.step * PSI_TABLE_SIZE as f64 {
            return 0.0;
        }
        (self.deriv)(p)
    }

    pub fn period(&self) -> f64 {
        self.step * PSI_TABLE_SIZE as f64
    }
}

/// The weight `ψ_j`.
#[derive(Debug, Clone)]
pub struct WeightPsi {
    pub index: i64,
    table: Arc<PsiTable>,
}

impl WeightPsi {
    pub fn new(index: i64, table: Arc<PsiTable>) -> Self {
        Self { index, table }
    }

    pub fn eval(&self, p: f64) -> f64 {
        self.table.eval(p - self.index as f64 * self.table.period())
    }

    pub fn derivative(&self, p: f64) -> f64 {
        self.table
            .derivative(p - self.index as f64 * self.table.period())
    }
}

pub fn build_psi(j: i64, scalars: &AsymptoticScalars, gibbs: &Gibbs) -> Result<WeightPsi> {
    Ok(WeightPsi::new(
        j,
        Arc::new(PsiTable::build(scalars, gibbs)?),
    ))
}

/// The counting weight `φ` with `φ′ = Σ_j ψ_j′`, `φ(P₀) = 0`, assembled from
/// the finitely many `ψ_j` of a well window.
#[derive(Debug, Clone)]
pub struct WeightPhi {
    table: Arc<PsiTable>,
    critical: CriticalPoints,
    window: RangeInclusive<i64>,
}

impl WeightPhi {
    /// Window of `ψ_j` indices the weight was built from.
    pub fn window(&self) -> &RangeInclusive<i64> {
        &self.window
    }

    /// Valid domain `[P_{j_lo}, P_{j_hi + 1}]`.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.critical.p_min(*self.window.start()),
            self.critical.p_min(*self.window.end() + 1),
        )
    }

    /// `φ(p) = Σ_{j≥0} ψ_j(p) - Σ_{j≤-1} (1 - ψ_j(p))`, truncated to the
    /// window; terms outside it are saturated at 0 on the valid domain.
    pub fn eval(&self, p: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if p < lo - 1e-12 * lo.abs().max(1.0) || p > hi + 1e-12 * hi.abs().max(1.0) {
            return Err(Error::Window { p, lo, hi });
        }
        let l = self.table.period();
        let mut s = 0.0;
        for j in self.window.clone() {
            let psi = self.table.eval(p - j as f64 * l);
            if j >= 0 {
                s += psi;
            } else {
                s -= 1.0 - psi;
            }
        }
        Ok(s)
    }

    pub fn derivative(&self, p: f64) -> f64 {
        let l = self.table.period();
        self.window
            .clone()
            .map(|j| self.table.derivative(p - j as f64 * l))
            .sum()
    }
}

/// `window` lists the wells the weight must cover; one guard well is added
/// on each side.
pub fn build_phi(
    scalars: &AsymptoticScalars,
    gibbs: &Gibbs,
    window: RangeInclusive<i64>,
) -> Result<WeightPhi> {
    let table = Arc::new(PsiTable::build(scalars, gibbs)?);
    Ok(WeightPhi {
        table,
        critical: scalars.critical,
        window: (*window.start() - 1)..=(*window.end() + 1),
    })
}

/// `I_j = (R̲_j, R̄_j)` at half-barrier energy levels around `P_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerInterval {
    pub index: i64,
    pub lo: f64,
    pub hi: f64,
}

impl InnerInterval {
    pub fn contains(&self, p: f64) -> bool {
        p > self.lo && p < self.hi
    }
}

pub fn inner_intervals(
    cp: &CriticalPoints,
    pot: &PeriodicPotential,
    sigma: f64,
    wells: RangeInclusive<i64>,
) -> Result<Vec<InnerInterval>> {
    let e = |p: f64| pot.effective(sigma, p);
    let tol = 1e-14 * cp.period.max(1.0);
    wells
        .map(|j| {
            let (q_left, p_j, q_right) = (cp.p_max(j - 1), cp.p_min(j), cp.p_max(j));
            let left_level = 0.5 * (e(q_left) + e(p_j));
            let right_level = 0.5 * (e(q_right) + e(p_j));
            let lo = bisect(|p| e(p) - left_level, q_left, p_j, tol);
            let hi = bisect(|p| e(p) - right_level, p_j, q_right, tol);
            match (lo, hi) {
                (Some(lo), Some(hi)) => Ok(InnerInterval { index: j, lo, hi }),
                _ => Err(Error::Degenerate(format!(
                    "no half-barrier level in well {j}"
                ))),
            }
        })
        .collect()
}

/// `∫_{J_j \ I_j} γ_j dp`, the local equilibrium mass outside `I_j`.
pub fn outer_equilibrium_mass(
    scalars: &AsymptoticScalars,
    gibbs: &Gibbs,
    interval: &InnerInterval,
) -> Result<f64> {
    let j = interval.index;
    let cp = &scalars.critical;
    let log_mu = scalars.log_mu(j);
    let f = |p: f64| (gibbs.log_gamma(p) - log_mu).exp();
    let left = integrate(f, cp.p_max(j - 1), interval.lo, 1e-10)?;
    let right = integrate(f, interval.hi, cp.p_max(j), 1e-10)?;
    Ok(left + right)
}

/// `sup_{p ∈ I_j} |ψ_j(p)| + |1 - ψ_{j-1}(p)|`, sampled.
pub fn transition_leakage(table: &Arc<PsiTable>, interval: &InnerInterval, samples: usize) -> f64 {
    let j = interval.index;
    let psi_j = WeightPsi::new(j, table.clone());
    let psi_prev = WeightPsi::new(j - 1, table.clone());
    (0..=samples)
        .map(|k| interval.lo + (interval.hi - interval.lo) * k as f64 / samples as f64)
        .map(|p| psi_j.eval(p).abs() + (1.0 - psi_prev.eval(p)).abs())
        .fold(0.0, f64::max)
}
