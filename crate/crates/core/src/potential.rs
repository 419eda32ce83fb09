//! Periodic potentials, critical points of the tilted landscape, barriers
//! and the Kramers constant.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{bisect, golden_max};

/// Sample count per period for bracketing scans.
pub const SCAN_POINTS: usize = 256;
/// Smallest admissible exponent of the Kramers time scale.
pub const MIN_EXPONENT: f64 = -700.0;

/// A smooth scalar landscape with derivatives up to third order.
pub trait Landscape: Send + Sync + fmt::Debug {
    fn value(&self, p: f64) -> f64;
    fn d1(&self, p: f64) -> f64;
    fn d2(&self, p: f64) -> f64;
    fn d3(&self, p: f64) -> f64;
}

/// `H(p) = -A cos(k p)`, period `2π/k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cosine {
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl Default for Cosine {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            wavenumber: 1.0,
        }
    }
}

impl Landscape for Cosine {
    fn value(&self, p: f64) -> f64 {
        -self.amplitude * (self.wavenumber * p).cos()
    }
    fn d1(&self, p: f64) -> f64 {
        self.amplitude * self.wavenumber * (self.wavenumber * p).sin()
    }
    fn d2(&self, p: f64) -> f64 {
        self.amplitude * self.wavenumber.powi(2) * (self.wavenumber * p).cos()
    }
    fn d3(&self, p: f64) -> f64 {
        -self.amplitude * self.wavenumber.powi(3) * (self.wavenumber * p).sin()
    }
}

/// `H(p) = G(sin p)` with a polynomial `G(s) = Σ_k c_k s^k`.
///
/// `coeffs[k]` multiplies `s^k`. `G` must be strictly increasing on
/// `[-1, 1]`; this is checked when the potential is assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GOfSin {
    pub coeffs: Vec<f64>,
}

impl GOfSin {
    fn g(&self, s: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, &c) in self.coeffs.iter().enumerate() {
            let kf = k as f64;
            out[0] += c * s.powi(k as i32);
            if k >= 1 {
                out[1] += c * kf * s.powi(k as i32 - 1);
            }
            if k >= 2 {
                out[2] += c * kf * (kf - 1.0) * s.powi(k as i32 - 2);
            }
            if k >= 3 {
                out[3] += c * kf * (kf - 1.0) * (kf - 2.0) * s.powi(k as i32 - 3);
            }
        }
        out
    }
}

impl Landscape for GOfSin {
    fn value(&self, p: f64) -> f64 {
        self.g(p.sin())[0]
    }
    fn d1(&self, p: f64) -> f64 {
        let (s, c) = p.sin_cos();
        self.g(s)[1] * c
    }
    fn d2(&self, p: f64) -> f64 {
        let (s, c) = p.sin_cos();
        let g = self.g(s);
        g[2] * c * c - g[1] * s
    }
    fn d3(&self, p: f64) -> f64 {
        let (s, c) = p.sin_cos();
        let g = self.g(s);
        g[3] * c * c * c - 3.0 * g[2] * s * c - g[1] * c
    }
}

/// Truncated Fourier series `a0 + Σ_k (a_k cos(k ω p) + b_k sin(k ω p))`
/// with `ω = 2π/period`. Used for tabulated potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub period: f64,
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigSeries {
    /// Least-squares fit of `degree` harmonics to samples `(p, H)`.
    pub fn fit(samples: &[(f64, f64)], period: f64, degree: usize) -> Result<Self> {
        let n = samples.len();
        let cols = 1 + 2 * degree;
        if n < cols {
            return Err(Error::InvalidArgument(format!(
                "{n} samples cannot determine {degree} harmonics"
            )));
        }
        let omega = 2.0 * PI / period;
        let a = DMatrix::from_fn(n, cols, |i, c| {
            let p = samples[i].0;
            match c {
                0 => 1.0,
                c if c % 2 == 1 => ((c / 2 + 1) as f64 * omega * p).cos(),
                c => ((c / 2) as f64 * omega * p).sin(),
            }
        });
        let b = DVector::from_iterator(n, samples.iter().map(|s| s.1));
        let coef = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let cos = (0..degree).map(|k| coef[1 + 2 * k]).collect();
        let sin = (0..degree).map(|k| coef[2 + 2 * k]).collect();
        Ok(Self {
            period,
            mean: coef[0],
            cos,
            sin,
        })
    }

    fn eval(&self, p: f64, order: u32) -> f64 {
        let omega = 2.0 * PI / self.period;
        let mut s = if order == 0 { self.mean } else { 0.0 };
        for (k, (a, b)) in self.cos.iter().zip(self.sin.iter()).enumerate() {
            let w = (k + 1) as f64 * omega;
            let (sn, cs) = (w * p).sin_cos();
            let wp = w.powi(order as i32);
            s += wp
                * match order % 4 {
                    0 => a * cs + b * sn,
                    1 => -a * sn + b * cs,
                    2 => -a * cs - b * sn,
                    _ => a * sn - b * cs,
                };
        }
        s
    }
}

impl Landscape for TrigSeries {
    fn value(&self, p: f64) -> f64 {
        self.eval(p, 0)
    }
    fn d1(&self, p: f64) -> f64 {
        self.eval(p, 1)
    }
    fn d2(&self, p: f64) -> f64 {
        self.eval(p, 2)
    }
    fn d3(&self, p: f64) -> f64 {
        self.eval(p, 3)
    }
}

/// `H(p) = inner(p - shift) + offset`.
#[derive(Debug, Clone)]
pub struct Translated {
    pub inner: Arc<dyn Landscape>,
    pub shift: f64,
    pub offset: f64,
}

impl Landscape for Translated {
    fn value(&self, p: f64) -> f64 {
        self.inner.value(p - self.shift) + self.offset
    }
    fn d1(&self, p: f64) -> f64 {
        self.inner.d1(p - self.shift)
    }
    fn d2(&self, p: f64) -> f64 {
        self.inner.d2(p - self.shift)
    }
    fn d3(&self, p: f64) -> f64 {
        self.inner.d3(p - self.shift)
    }
}

/// An `L`-periodic potential with unimodal, non-degenerate `H′`.
#[derive(Debug, Clone)]
pub struct PeriodicPotential {
    shape: Arc<dyn Landscape>,
    period: f64,
    sigma_lo: f64,
    sigma_hi: f64,
    zeta: f64,
}

impl PeriodicPotential {
    /// Validates periodicity and unimodality of `H′` and computes
    /// `σ_* = min H′`, `σ^* = max H′` and `ζ = sup |H‴|`.
    pub fn new(shape: Arc<dyn Landscape>, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period}"
            )));
        }
        let h = period / SCAN_POINTS as f64;
        let grid: Vec<f64> = (0..SCAN_POINTS).map(|k| k as f64 * h).collect();

        for &p in &grid {
            for (a, b) in [
                (shape.value(p), shape.value(p + period)),
                (shape.d1(p), shape.d1(p + period)),
                (shape.d2(p), shape.d2(p + period)),
                (shape.d3(p), shape.d3(p + period)),
            ] {
                if (a - b).abs() > 1e-10 * a.abs().max(1.0) {
                    return Err(Error::Degenerate(format!(
                        "not {period}-periodic at p = {p}"
                    )));
                }
            }
        }

        let d1: Vec<f64> = grid.iter().map(|&p| shape.d1(p)).collect();
        let argmax = (0..SCAN_POINTS)
            .max_by(|&a, &b| d1[a].total_cmp(&d1[b]))
            .unwrap();
        let argmin = (0..SCAN_POINTS)
            .min_by(|&a, &b| d1[a].total_cmp(&d1[b]))
            .unwrap();
        let tol = 1e-13 * period;
        let around = |k: usize| (grid[k] - h, grid[k] + h);
        let (a, b) = around(argmax);
        let (_, sigma_hi) = golden_max(|p| shape.d1(p), a, b, tol);
        let (a, b) = around(argmin);
        let (_, neg_lo) = golden_max(|p| -shape.d1(p), a, b, tol);
        let sigma_lo = -neg_lo;
        if sigma_hi - sigma_lo <= 0.0 {
            return Err(Error::Degenerate("H' is constant".into()));
        }

        // Unimodality: H'' changes sign exactly twice per period.
        let d2: Vec<f64> = grid.iter().map(|&p| shape.d2(p)).collect();
        let scale = d2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let signs: Vec<i8> = d2
            .iter()
            .map(|&v| {
                if v > 1e-12 * scale {
                    1
                } else if v < -1e-12 * scale {
                    -1
                } else {
                    0
                }
            })
            .filter(|&s| s != 0)
            .collect();
        let changes = (0..signs.len())
            .filter(|&i| signs[i] != signs[(i + 1) % signs.len()])
            .count();
        if changes != 2 {
            return Err(Error::Degenerate(format!(
                "H' is not unimodal ({changes} sign changes of H'' per period)"
            )));
        }

        let d3: Vec<f64> = grid.iter().map(|&p| shape.d3(p).abs()).collect();
        let k3 = (0..SCAN_POINTS)
            .max_by(|&a, &b| d3[a].total_cmp(&d3[b]))
            .unwrap();
        let (a, b) = around(k3);
        let (_, zeta) = golden_max(|p| shape.d3(p).abs(), a, b, tol);

        Ok(Self {
            shape,
            period,
            sigma_lo,
            sigma_hi,
            zeta: zeta.max(d3[k3]),
        })
    }

    /// `H(p) = -cos p`, period `2π`.
    pub fn cosine() -> Self {
        Self::new(Arc::new(Cosine::default()), 2.0 * PI).expect("cosine washboard is admissible")
    }

    /// `H(p) = G(sin p)` for a polynomial `G`.
    pub fn g_of_sin(coeffs: Vec<f64>) -> Result<Self> {
        let g = GOfSin { coeffs };
        // strictly increasing on [-1, 1]
        for k in 0..=200 {
            let s = -1.0 + k as f64 / 100.0;
            if g.g(s)[1] <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "G is not strictly increasing at s = {s}"
                )));
            }
        }
        Self::new(Arc::new(g), 2.0 * PI)
    }

    /// Tabulated `(p, H)` samples covering at least one period, fitted by
    /// a truncated Fourier series.
    pub fn from_table(samples: &[(f64, f64)], period: f64) -> Result<Self> {
        let p0 = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let one_period: Vec<(f64, f64)> = samples
            .iter()
            .copied()
            .filter(|&(p, _)| p < p0 + period * (1.0 - 1e-12))
            .collect();
        if one_period.len() < 8 {
            return Err(Error::InvalidArgument(
                "table must contain at least 8 samples per period".into(),
            ));
        }
        let degree = ((one_period.len() - 1) / 3).min(32);
        let series = TrigSeries::fit(&one_period, period, degree)?;
        Self::new(Arc::new(series), period)
    }

    pub fn shape(&self) -> &Arc<dyn Landscape> {
        &self.shape
    }

    pub fn translated(&self, shift: f64, offset: f64) -> Result<Self> {
        Self::new(
            Arc::new(Translated {
                inner: self.shape.clone(),
                shift,
                offset,
            }),
            self.period,
        )
    }

    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn sigma_lo(&self) -> f64 {
        self.sigma_lo
    }
    pub fn sigma_hi(&self) -> f64 {
        self.sigma_hi
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn value(&self, p: f64) -> f64 {
        self.shape.value(p)
    }
    pub fn d1(&self, p: f64) -> f64 {
        self.shape.d1(p)
    }
    pub fn d2(&self, p: f64) -> f64 {
        self.shape.d2(p)
    }
    pub fn d3(&self, p: f64) -> f64 {
        self.shape.d3(p)
    }

    /// `H_eff(p) = H(p) - σ p`.
    pub fn effective(&self, sigma: f64, p: f64) -> f64 {
        self.shape.value(p) - sigma * p
    }

    pub fn is_subcritical(&self, sigma: f64) -> bool {
        let margin = 1e-9 * (self.sigma_hi - self.sigma_lo);
        sigma > self.sigma_lo + margin && sigma < self.sigma_hi - margin
    }

    fn regime_error(&self, sigma: f64) -> Error {
        Error::Regime {
            sigma,
            lo: self.sigma_lo,
            hi: self.sigma_hi,
        }
    }
}

/// Positions of the minimum `P₀` and maximum `Q₀` of `H_eff` in one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub sigma: f64,
    pub p_min0: f64,
    pub p_max0: f64,
    pub period: f64,
}

impl CriticalPoints {
    /// `P_j = P₀ + jL`.
    pub fn p_min(&self, j: i64) -> f64 {
        self.p_min0 + j as f64 * self.period
    }
    /// `Q_j = Q₀ + jL`.
    pub fn p_max(&self, j: i64) -> f64 {
        self.p_max0 + j as f64 * self.period
    }
    /// Index of the well `J_j = (Q_{j-1}, Q_j)` containing `p`.
    pub fn well_of(&self, p: f64) -> i64 {
        ((p - self.p_max0) / self.period).floor() as i64 + 1
    }
}

fn polish(pot: &PeriodicPotential, sigma: f64, mut x: f64) -> f64 {
    for _ in 0..2 {
        let f = pot.d1(x) - sigma;
        let df = pot.d2(x);
        if df == 0.0 {
            break;
        }
        let y = x - f / df;
        if (pot.d1(y) - sigma).abs() <= f.abs() {
            x = y;
        }
    }
    x
}

/// Locates `P₀ < Q₀ < P₀ + L`, the minimum and maximum of `H(p) - σp`.
///
/// `P₀` is the minimum lying in `[-L/512, L - L/512)`.
pub fn find_critical_points(pot: &PeriodicPotential, sigma: f64) -> Result<CriticalPoints> {
    if !pot.is_subcritical(sigma) {
        return Err(pot.regime_error(sigma));
    }
    let l = pot.period();
    let h = l / SCAN_POINTS as f64;
    let start = -0.5 * h;
    let f = |p: f64| pot.d1(p) - sigma;
    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    let mut prev = f(start);
    for k in 1..=SCAN_POINTS {
        let b = start + k as f64 * h;
        let fb = f(b);
        let a = b - h;
        if prev < 0.0 && fb >= 0.0 {
            minima.push((a, b));
        } else if prev > 0.0 && fb <= 0.0 {
            maxima.push((a, b));
        }
        prev = fb;
    }
    if minima.len() != 1 || maxima.len() != 1 {
        return Err(Error::Degenerate(format!(
            "expected one minimum and one maximum per period, found {} and {}",
            minima.len(),
            maxima.len()
        )));
    }
    let tol = 1e-14 * l.max(1.0);
    let root = |(a, b): (f64, f64)| {
        bisect(f, a, b, tol).ok_or_else(|| Error::Degenerate("bracketing failed".into()))
    };
    let p0 = polish(pot, sigma, root(minima[0])?);
    let mut q0 = polish(pot, sigma, root(maxima[0])?);
    while q0 <= p0 {
        q0 += l;
    }
    while q0 > p0 + l {
        q0 -= l;
    }
    let gap = (q0 - p0).min(p0 + l - q0);
    if gap < 1e-8 * l {
        return Err(Error::Degenerate(format!(
            "minimum and maximum coalesce (gap {gap:e})"
        )));
    }
    if !(pot.d2(p0) > 0.0 && pot.d2(q0) < 0.0) {
        return Err(Error::Degenerate(
            "critical points are not strict extrema".into(),
        ));
    }
    Ok(CriticalPoints {
        sigma,
        p_min0: p0,
        p_max0: q0,
        period: l,
    })
}

/// Barrier heights and the Kramers constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KramersData {
    pub h_left: f64,
    pub h_right: f64,
    pub c_k: f64,
}

impl KramersData {
    pub fn min_barrier(&self) -> f64 {
        self.h_left.min(self.h_right)
    }

    /// `ln τ = ln c_K - min(h_L, h_R)/ν²`.
    pub fn log_tau(&self, nu: f64) -> Result<f64> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nu must be positive, got {nu}"
            )));
        }
        Ok(self.c_k.ln() - self.min_barrier() / (nu * nu))
    }

    /// `τ = c_K exp(-min(h_L, h_R)/ν²)`.
    pub fn tau_of(&self, nu: f64) -> Result<f64> {
        let exponent = -self.min_barrier() / (nu * nu);
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nu must be positive, got {nu}"
            )));
        }
        if exponent < MIN_EXPONENT {
            return Err(Error::Scale { exponent });
        }
        Ok(self.c_k * exponent.exp())
    }
}

/// `h_L = H_eff(Q₋₁) - H_eff(P₀)`, `h_R = H_eff(Q₀) - H_eff(P₀)` and
/// `c_K = √|H″(P₀) H″(Q₀)| / 2π`.
pub fn barriers(pot: &PeriodicPotential, sigma: f64, cp: &CriticalPoints) -> KramersData {
    let e = |p| pot.effective(sigma, p);
    let base = e(cp.p_min0);
    KramersData {
        h_left: e(cp.p_max(-1)) - base,
        h_right: e(cp.p_max0) - base,
        c_k: (pot.d2(cp.p_min0) * pot.d2(cp.p_max0)).abs().sqrt() / (2.0 * PI),
    }
}

/// Convenience: [`KramersData::tau_of`].
pub fn tau(kd: &KramersData, nu: f64) -> Result<f64> {
    kd.tau_of(nu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_constants() {
        let pot = PeriodicPotential::cosine();
        assert!((pot.sigma_hi() - 1.0).abs() < 1e-12);
        assert!((pot.sigma_lo() + 1.0).abs() < 1e-12);
        assert!((pot.zeta() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_tilt() {
        let pot = PeriodicPotential::cosine();
        let cp = find_critical_points(&pot, 0.0).unwrap();
        assert!(cp.p_min0.abs() < 1e-12);
        assert!((cp.p_max0 - PI).abs() < 1e-12);
        let kd = barriers(&pot, 0.0, &cp);
        assert!((kd.h_left - 2.0).abs() < 1e-12);
        assert!((kd.h_right - 2.0).abs() < 1e-12);
        assert!((kd.c_k - 1.0 / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn cosine_half_tilt() {
        let pot = PeriodicPotential::cosine();
        let cp = find_critical_points(&pot, 0.5).unwrap();
        assert!((cp.p_min0 - 0.5f64.asin()).abs() < 1e-12);
        assert!((cp.p_max0 - (PI - 0.5f64.asin())).abs() < 1e-12);
        let kd = barriers(&pot, 0.5, &cp);
        // closed form: h_R = √3 - π/3
        assert!((kd.h_right - (3f64.sqrt() - PI / 3.0)).abs() < 1e-12);
        assert!((kd.h_left - kd.h_right - PI).abs() < 1e-10);
        assert!((kd.c_k - (PI / 6.0).cos() / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn regime_boundaries() {
        let pot = PeriodicPotential::cosine();
        assert!(matches!(
            find_critical_points(&pot, 1.0),
            Err(Error::Regime { .. })
        ));
        assert!(matches!(
            find_critical_points(&pot, -1.2),
            Err(Error::Regime { .. })
        ));
    }

    #[test]
    fn tau_values() {
        let pot = PeriodicPotential::cosine();
        let cp = find_critical_points(&pot, 0.0).unwrap();
        let kd = barriers(&pot, 0.0, &cp);
        let t = kd.tau_of(0.5).unwrap();
        assert!((t - (-8.0f64).exp() / (2.0 * PI)).abs() < 1e-18);
        assert!((t - 5.33905e-5).abs() < 1e-9);
        let cp = find_critical_points(&pot, 0.5).unwrap();
        let kd = barriers(&pot, 0.5, &cp);
        let t = kd.tau_of(0.5).unwrap();
        let expected = (PI / 6.0).cos() / (2.0 * PI) * (-(3f64.sqrt() - PI / 3.0) / 0.25).exp();
        assert!((t - expected).abs() < 1e-15);
        assert!((t - 8.906e-3).abs() < 1e-5);
        assert!(kd.tau_of(0.4).unwrap() < t);
        assert!(matches!(kd.tau_of(0.01), Err(Error::Scale { .. })));
        assert!(kd.tau_of(-1.0).is_err());
    }

    #[test]
    fn vanishing_barrier_limit() {
        let kd = KramersData {
            h_left: 1e-12,
            h_right: 1e-12,
            c_k: 0.3,
        };
        assert!((kd.tau_of(0.5).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn g_of_sin_family() {
        let pot = PeriodicPotential::g_of_sin(vec![0.0, 1.0, 0.0, 0.1]).unwrap();
        let cp = find_critical_points(&pot, 0.3).unwrap();
        assert!((pot.d1(cp.p_min0) - 0.3).abs() < 1e-12);
        assert!((pot.d1(cp.p_max0) - 0.3).abs() < 1e-12);
        assert!(PeriodicPotential::g_of_sin(vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn table_import_reproduces_cosine() {
        let n = 64;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let p = 2.0 * PI * k as f64 / n as f64;
                (p, -p.cos())
            })
            .collect();
        let pot = PeriodicPotential::from_table(&samples, 2.0 * PI).unwrap();
        for k in 0..50 {
            let p = 0.123 * k as f64;
            assert!((pot.value(p) + p.cos()).abs() < 1e-10);
            assert!((pot.d3(p) + p.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn multimodal_derivative_is_rejected() {
        let err = PeriodicPotential::new(
            Arc::new(Cosine {
                amplitude: 1.0,
                wavenumber: 2.0,
            }),
            2.0 * PI,
        )
        .and_then(|pot| find_critical_points(&pot, 0.1));
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }
}
