//! Adaptive composite Gauss–Legendre quadrature.
//!
//! Integrands here are smooth but sharply peaked (widths of order ν around
//! the wells), so panels are refined where the local error estimate is
//! largest until the global estimate meets the requested relative
//! tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Points per Gauss–Legendre panel.
pub const GAUSS_POINTS: usize = 15;
/// Maximum bisection depth of a single panel.
pub const MAX_DEPTH: u32 = 40;
const MAX_PANELS: usize = 200_000;

struct Rule {
    nodes: [f64; GAUSS_POINTS],
    weights: [f64; GAUSS_POINTS],
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut nodes = [0.0; GAUSS_POINTS];
        let mut weights = [0.0; GAUSS_POINTS];
        for i in 0..n {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Rule { nodes, weights }
    })
}

/// Fixed 15-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_panel<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> f64 {
    let r = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in r.nodes.iter().zip(r.weights.iter()) {
        s += w * f(mid + half * x);
    }
    s * half
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn make_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, depth: u32) -> Panel {
    let m = 0.5 * (a + b);
    let whole = gauss_panel(f, a, b);
    let halves = gauss_panel(f, a, m) + gauss_panel(f, m, b);
    Panel {
        a,
        b,
        value: halves,
        error: (whole - halves).abs(),
        depth,
    }
}

/// Integrate `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// The interval is first cut at `initial_panels` equal pieces; panels with
/// the largest error estimate are bisected until the summed estimate falls
/// below `rel_tol * |I|` (plus a tiny absolute floor for vanishing integrals).
pub fn integrate_with<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    initial_panels: usize,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate_with(f, b, a, rel_tol, initial_panels).map(|v| -v);
    }
    let n0 = initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut heap = BinaryHeap::with_capacity(4 * n0);
    for k in 0..n0 {
        let lo = a + width * k as f64;
        let hi = if k + 1 == n0 { b } else { lo + width };
        heap.push(make_panel(&f, lo, hi, 0));
    }
    let mut accepted_value = 0.0;
    let mut accepted_error = 0.0;
    // Running totals; re-summed exactly before any decision to stop.
    let mut total_value: f64 = heap.iter().map(|p: &Panel| p.value).sum();
    let mut total_error: f64 = heap.iter().map(|p: &Panel| p.error).sum();
    let mut saturated = false;
    loop {
        if total_error <= rel_tol * total_value.abs() + 1e-300 {
            total_value = accepted_value + heap.iter().map(|p| p.value).sum::<f64>();
            total_error = accepted_error + heap.iter().map(|p| p.error).sum::<f64>();
            if total_error <= rel_tol * total_value.abs() + 1e-300 {
                return Ok(total_value);
            }
        }
        let target = rel_tol * total_value.abs() + 1e-300;
        let worst = match heap.pop() {
            Some(p) => p,
            None => return Ok(total_value),
        };
        saturated |= heap.len() > MAX_PANELS;
        if worst.depth >= MAX_DEPTH || saturated {
            // Cannot refine further; keep it if its own contribution is already
            // negligible, otherwise report failure.
            if worst.error <= 0.5 * target {
                accepted_value += worst.value;
                accepted_error += worst.error;
                continue;
            }
            return Err(Error::Quadrature {
                a,
                b,
                tol: rel_tol,
                estimate: total_value,
            });
        }
        let m = 0.5 * (worst.a + worst.b);
        let left = make_panel(&f, worst.a, m, worst.depth + 1);
        let right = make_panel(&f, m, worst.b, worst.depth + 1);
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}

/// [`integrate_with`] with 16 initial panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate_with(f, a, b, rel_tol, 16)
}

/// Natural logarithm of `∫ exp(log_f(p)) dp` over `[a, b]`.
///
/// The integrand is rescaled by `shift`, an upper estimate of `max log_f`
/// supplied by the caller, so only the dimensionless ratio is exponentiated.
pub fn log_integrate<F: Fn(f64) -> f64>(
    log_f: F,
    a: f64,
    b: f64,
    shift: f64,
    rel_tol: f64,
) -> Result<f64> {
    let v = integrate(|p| (log_f(p) - shift).exp(), a, b, rel_tol)?;
    Ok(v.ln() + shift)
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Bisection for a sign change of `f` on `[a, b]`, to absolute width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
