//! Limit lattice dynamics for the well masses.
//!
//! Tilt to the right (`σ > 0`): `ṁ_j = m_{j-1} - m_j`; to the left:
//! `ṁ_j = m_{j+1} - m_j`; untilted: `ṁ_j = m_{j-1} + κ m_{j+1} - (1+κ) m_j`.
//! The pure transport cases are solved exactly by convolution with the
//! Poisson kernel `t^j e^{-t}/j!`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::observables::WellSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
    Symmetric { kappa: f64 },
}

impl Direction {
    /// Direction implied by the sign of the tilt.
    pub fn for_tilt(sigma: f64, kappa: f64) -> Self {
        if sigma > 0.0 {
            Direction::Right
        } else if sigma < 0.0 {
            Direction::Left
        } else {
            Direction::Symmetric { kappa }
        }
    }

    /// Jump rates `(right, left)`.
    fn rates(&self) -> (f64, f64) {
        match *self {
            Direction::Right => (1.0, 0.0),
            Direction::Left => (0.0, 1.0),
            Direction::Symmetric { kappa } => (1.0, kappa),
        }
    }
}

/// Masses on the window `first..first + len`, with the mass that has left
/// through either end collected in two sinks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeMassState {
    pub masses: WellSeries,
    pub sink_left: f64,
    pub sink_right: f64,
    pub direction: Direction,
}

impl LatticeMassState {
    pub fn new(masses: WellSeries, direction: Direction) -> Result<Self> {
        if masses.values.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidArgument(
                "lattice masses must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            masses,
            sink_left: 0.0,
            sink_right: 0.0,
            direction,
        })
    }

    /// Unit mass at `j0` on the window `j0 - radius ..= j0 + radius`.
    pub fn point_mass(j0: i64, radius: i64, direction: Direction) -> Self {
        let mut masses = WellSeries::zeros((j0 - radius)..=(j0 + radius));
        masses.values[radius as usize] = 1.0;
        Self {
            masses,
            sink_left: 0.0,
            sink_right: 0.0,
            direction,
        }
    }

    pub fn window_mass(&self) -> f64 {
        self.masses.sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.window_mass() + self.sink_left + self.sink_right
    }
}

/// Window radius for which the Poisson mass beyond it at time `t` is
/// negligible: `t + 10√(t+1)`.
pub fn window_radius(t: f64) -> i64 {
    (t + 10.0 * (t + 1.0).sqrt()).ceil() as i64
}

/// Rates of change of the window masses and of the two sinks.
pub fn rhs(state: &LatticeMassState) -> (Vec<f64>, f64, f64) {
    let (r, l) = state.direction.rates();
    let m = &state.masses.values;
    let n = m.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        let from_left = if i > 0 { m[i - 1] } else { 0.0 };
        let from_right = if i + 1 < n { m[i + 1] } else { 0.0 };
        d[i] = r * from_left + l * from_right - (r + l) * m[i];
    }
    let (to_left, to_right) = if n > 0 {
        (l * m[0], r * m[n - 1])
    } else {
        (0.0, 0.0)
    };
    (d, to_left, to_right)
}

/// `K_pois(t, j) = t^j e^{-t}/j!` for `j ≥ 0`, else 0.
pub fn poisson_kernel(t: f64, j: i64) -> f64 {
    if j < 0 {
        return 0.0;
    }
    if j == 0 {
        return (-t).exp();
    }
    if t == 0.0 {
        return 0.0;
    }
    let jf = j as f64;
    (jf * t.ln() - t - ln_gamma(jf + 1.0)).exp()
}

/// `K_pois(t, j)` times the heat kernel at `x` when `x` is given.
pub fn fundamental_solution(t: f64, j: i64, x: Option<&[f64]>) -> f64 {
    let k = poisson_kernel(t, j);
    match x {
        Some(x) => k * crate::fpsolver::heat_kernel(t, x),
        None => k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ExactPoisson,
    Rk4,
}

/// Evolve `state` over time `t`.
pub fn integrate(state: &LatticeMassState, t: f64, method: Method) -> Result<LatticeMassState> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time {t} must be nonnegative"
        )));
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    match method {
        Method::ExactPoisson => exact(state, t),
        Method::Rk4 => Ok(rk4(state, t, (0.01f64).min(t / 100.0))),
    }
}

fn exact(state: &LatticeMassState, t: f64) -> Result<LatticeMassState> {
    let sign = match state.direction {
        Direction::Right => 1,
        Direction::Left => -1,
        Direction::Symmetric { .. } => {
            return Err(Error::Method(
                "exact Poisson evolution needs a nonzero tilt".into(),
            ))
        }
    };
    let n = state.masses.values.len();
    let kernel: Vec<f64> = (0..n as i64).map(|k| poisson_kernel(t, k)).collect();
    let mut out = state.clone();
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..n {
            let shift = sign * (i as i64 - k as i64);
            if shift >= 0 {
                s += kernel[shift as usize] * state.masses.values[k];
            }
        }
        out.masses.values[i] = s;
    }
    // Whatever left the window went downstream.
    let lost = state.window_mass() - out.window_mass();
    if sign > 0 {
        out.sink_right += lost;
    } else {
        out.sink_left += lost;
    }
    Ok(out)
}

fn rk4(state: &LatticeMassState, t: f64, dt_max: f64) -> LatticeMassState {
    let steps = (t / dt_max).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut s = state.clone();
    let axpy = |base: &LatticeMassState, k: &(Vec<f64>, f64, f64), a: f64| -> LatticeMassState {
        let mut o = base.clone();
        for (v, d) in o.masses.values.iter_mut().zip(k.0.iter()) {
            *v += a * d;
        }
        o.sink_left += a * k.1;
        o.sink_right += a * k.2;
        o
    };
    for _ in 0..steps {
        let k1 = rhs(&s);
        let k2 = rhs(&axpy(&s, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&s, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&s, &k3, dt));
        for i in 0..s.masses.values.len() {
            s.masses.values[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
        }
        s.sink_left += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        s.sink_right += dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
    }
    s
}

/// States at each of the (increasing) `times`, starting from `state0` at 0.
pub fn trajectory(
    state0: &LatticeMassState,
    times: &[f64],
    method: Method,
) -> Result<Vec<LatticeMassState>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        // Each time from the initial state: exact needs no stepping history and
        // rk4 then uses the same step rule as a single call.
        out.push(integrate(state0, t, method)?);
    }
    Ok(out)
}

/// `∫_0^T Σ_j |a_j(t) - b_j(t)| dt` by the trapezoidal rule on `times`.
pub fn compare_l1(a: &[WellSeries], b: &[WellSeries], times: &[f64]) -> Result<f64> {
    if a.len() != times.len() || b.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "{} and {} snapshots for {} times",
            a.len(),
            b.len(),
            times.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("time grid must be increasing".into()));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| x.l1_distance(y))
        .collect();
    Ok(times
        .windows(2)
        .zip(d.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum())
}
