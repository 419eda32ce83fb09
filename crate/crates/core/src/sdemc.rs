//! Euler–Maruyama ensembles of the Langevin dynamics
//! `τ dp = (σ − H′(p)) dt + √(2ν²) dW`.
//!
//! Each particle draws from its own ChaCha stream (seed, particle id), so an
//! ensemble is bitwise reproducible however it is split across threads.
//! Hops are counted minimum to minimum: a particle that last touched `P_j`
//! registers a hop only on reaching `P_{j±1}`, so barrier recrossings do not
//! count.

use crate::lattice::poisson_kernel;
use crate::observables::WellSeries;
use crate::potential::{find_critical_points, CriticalPoints, KramersData, PeriodicPotential};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One recorded transition between neighbouring minima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub particle: usize,
    pub time: f64,
    pub from: i64,
    pub to: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub sigma: f64,
    pub nu: f64,
    /// Time unit: a step `dt` advances the raw dynamics by `dt/τ`.
    pub tau: f64,
    pub n_particles: usize,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    /// Times at which all positions are stored.
    pub snapshot_times: Vec<f64>,
    /// Stop a particle after this many hops.
    pub max_hops: Option<usize>,
}

impl SimulationConfig {
    pub fn new(
        sigma: f64,
        nu: f64,
        tau: f64,
        n_particles: usize,
        t_final: f64,
        dt: f64,
        seed: u64,
    ) -> Self {
        Self {
            sigma,
            nu,
            tau,
            n_particles,
            t_final,
            dt,
            seed,
            snapshot_times: Vec::new(),
            max_hops: None,
        }
    }
}

/// `H′` tabulated on one period with cubic Hermite interpolation from `H′`
/// and `H″` at the nodes; interpolation error is `O(h⁴)`, below `1e-13`
/// for the default resolution on smooth potentials.
#[derive(Debug, Clone)]
pub struct DriftTable {
    inv_h: f64,
    mask: i64,
    /// Per-panel cubic coefficients in the local coordinate `s ∈ [0, 1)`.
    coeffs: Vec<[f64; 4]>,
}

impl DriftTable {
    pub const DEFAULT_NODES: usize = 8192;

    /// `nodes` is rounded up to a power of two.
    pub fn new(pot: &PeriodicPotential, nodes: usize) -> Self {
        let nodes = nodes.max(2).next_power_of_two();
        let h = pot.period() / nodes as f64;
        let coeffs = (0..nodes)
            .map(|k| {
                let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
                let (y0, y1) = (pot.d1(a), pot.d1(b));
                let (m0, m1) = (pot.d2(a) * h, pot.d2(b) * h);
                let dy = y1 - y0;
                [y0, m0, 3.0 * dy - 2.0 * m0 - m1, m0 + m1 - 2.0 * dy]
            })
            .collect();
        Self {
            inv_h: 1.0 / h,
            mask: nodes as i64 - 1,
            coeffs,
        }
    }

    #[inline]
    pub fn eval(&self, p: f64) -> f64 {
        let x = p * self.inv_h;
        // Truncate-and-correct instead of `floor`, which is a libcall on
        // baseline x86-64.
        let mut i = x as i64;
        if (i as f64) > x {
            i -= 1;
        }
        let s = x - i as f64;
        // Node count is a power of two, so masking is the periodic reduction.
        let [c0, c1, c2, c3] = self.coeffs[(i & self.mask) as usize];
        c0 + s * (c1 + s * (c2 + s * c3))
    }
}

/// Largest admissible step, `0.01·τ·min(1, ν²/ζ)`.
pub fn max_stable_dt(pot: &PeriodicPotential, nu: f64, tau: f64) -> f64 {
    let zeta = pot.zeta();
    let ratio = if zeta > 0.0 {
        (nu * nu / zeta).min(1.0)
    } else {
        1.0
    };
    0.01 * tau * ratio
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub seed: u64,
    pub dt: f64,
    /// Reference point of hop index 0 (`P₀`, or `0` without wells).
    pub base: f64,
    pub period: f64,
    /// Positions at the end of the run.
    pub positions: Vec<f64>,
    /// `(t, positions)` at the requested snapshot times.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Sorted by `(time, particle)`.
    pub hops: Vec<Hop>,
    /// Time each particle stopped (the horizon unless `max_hops` triggered).
    pub stop_times: Vec<f64>,
}

/// Particles advanced together by one worker.
const LANES: usize = 8;

struct Track {
    hops: Vec<Hop>,
    snaps: Vec<f64>,
    last: f64,
    stop: f64,
}

/// Simulate `n_particles` started at `P₀` (or `0` in the ballistic regime).
pub fn simulate(pot: &PeriodicPotential, cfg: &SimulationConfig) -> Result<Ensemble> {
    if cfg.n_particles == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    if !(cfg.nu > 0.0 && cfg.tau > 0.0 && cfg.dt > 0.0 && cfg.t_final >= 0.0) {
        return Err(Error::InvalidArgument(
            "ν, τ and dt must be positive, T non-negative".into(),
        ));
    }
    let bound = max_stable_dt(pot, cfg.nu, cfg.tau);
    if cfg.dt > bound * (1.0 + 1e-12) {
        return Err(Error::Stability { dt: cfg.dt, bound });
    }
    let period = pot.period();
    let base = if pot.is_subcritical(cfg.sigma) {
        find_critical_points(pot, cfg.sigma)?.p_min0
    } else {
        0.0
    };
    let n_steps = (cfg.t_final / cfg.dt).ceil() as u64;
    let dt = if n_steps == 0 {
        cfg.dt
    } else {
        cfg.t_final / n_steps as f64
    };
    let snap_steps: Vec<u64> = cfg
        .snapshot_times
        .iter()
        .map(|t| ((t / dt).round() as u64).min(n_steps))
        .collect();

    let raw = dt / cfg.tau;
    let noise = (2.0 * cfg.nu * cfg.nu * raw).sqrt();
    let sigma = cfg.sigma;
    let drift = DriftTable::new(pot, DriftTable::DEFAULT_NODES);
    let mut order: Vec<usize> = (0..snap_steps.len()).collect();
    order.sort_by_key(|&k| snap_steps[k]);

    // Particles advance in small lockstep blocks so that their independent
    // update chains overlap; each keeps its own stream, so the result does
    // not depend on the blocking.
    let run_block = |first: usize| -> Vec<Track> {
        let lanes = LANES.min(cfg.n_particles - first);
        let mut rngs: Vec<ChaCha8Rng> = (0..lanes)
            .map(|l| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
                r.set_stream((first + l) as u64);
                r
            })
            .collect();
        let mut p = [base; LANES];
        let mut well = [0i64; LANES];
        let mut left = [base - period; LANES];
        let mut right = [base + period; LANES];
        let mut active = [false; LANES];
        active[..lanes].iter_mut().for_each(|a| *a = true);
        let mut tracks: Vec<Track> = (0..lanes)
            .map(|_| Track {
                hops: Vec::new(),
                snaps: vec![f64::NAN; snap_steps.len()],
                last: base,
                stop: n_steps as f64 * dt,
            })
            .collect();
        let mut pending = order.iter().peekable();
        let mut next_snap = pending.peek().map_or(u64::MAX, |&&k| snap_steps[k]);
        let mut running = lanes;
        let mut step = 0u64;
        loop {
            while step == next_snap {
                if let Some(&k) = pending.next() {
                    for l in 0..lanes {
                        if active[l] {
                            tracks[l].snaps[k] = p[l];
                        }
                    }
                }
                next_snap = pending.peek().map_or(u64::MAX, |&&k| snap_steps[k]);
            }
            if step == n_steps || running == 0 {
                break;
            }
            step += 1;
            for l in 0..lanes {
                if !active[l] {
                    continue;
                }
                let xi: f64 = StandardNormal.sample(&mut rngs[l]);
                p[l] += (sigma - drift.eval(p[l])) * raw + noise * xi;
            }
            for l in 0..lanes {
                if !active[l] || (p[l] < right[l] && p[l] > left[l]) {
                    continue;
                }
                let to = if p[l] >= right[l] {
                    well[l] + 1
                } else {
                    well[l] - 1
                };
                let t = &mut tracks[l];
                t.hops.push(Hop {
                    particle: first + l,
                    time: step as f64 * dt,
                    from: well[l],
                    to,
                });
                well[l] = to;
                left[l] = base + (to - 1) as f64 * period;
                right[l] = base + (to + 1) as f64 * period;
                if cfg.max_hops.is_some_and(|m| t.hops.len() >= m) {
                    t.stop = step as f64 * dt;
                    t.last = p[l];
                    active[l] = false;
                    running -= 1;
                }
            }
        }
        for l in 0..lanes {
            if active[l] {
                tracks[l].last = p[l];
            }
        }
        tracks
    };

    let tracks: Vec<Track> = (0..cfg.n_particles)
        .step_by(LANES)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(run_block)
        .flatten()
        .collect();

    let mut hops: Vec<Hop> = tracks.iter().flat_map(|t| t.hops.iter().copied()).collect();
    hops.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.particle.cmp(&b.particle)));
    let snapshots = cfg
        .snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, tracks.iter().map(|tr| tr.snaps[k]).collect()))
        .collect();
    Ok(Ensemble {
        seed: cfg.seed,
        dt,
        base,
        period,
        positions: tracks.iter().map(|t| t.last).collect(),
        snapshots,
        hops,
        stop_times: tracks.iter().map(|t| t.stop).collect(),
    })
}

/// Well occupation at each requested time, from the nearest stored
/// snapshot, normalized to empirical masses. Particles that stopped early
/// (see `max_hops`) are excluded from later snapshots.
pub fn occupation_histogram(
    ens: &Ensemble,
    cp: &CriticalPoints,
    times: &[f64],
) -> Vec<(f64, WellSeries)> {
    times
        .iter()
        .filter_map(|&t| {
            let (ts, pos) = ens
                .snapshots
                .iter()
                .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))?;
            let wells: Vec<i64> = pos
                .iter()
                .filter(|p| p.is_finite())
                .map(|&p| cp.well_of(p))
                .collect();
            let lo = *wells.iter().min()?;
            let hi = *wells.iter().max()?;
            let mut counts = vec![0usize; (hi - lo + 1) as usize];
            for &j in &wells {
                counts[(j - lo) as usize] += 1;
            }
            let n = wells.len() as f64;
            let hist = WellSeries {
                first: lo,
                values: counts.into_iter().map(|c| c as f64 / n).collect(),
            };
            Some((*ts, hist))
        })
        .collect()
}

/// Total-variation distance `½Σ|a_j − K(t, j)|` to the Poisson kernel.
pub fn tv_to_poisson(hist: &WellSeries, t: f64) -> f64 {
    let hi = hist.last().max(crate::lattice::window_radius(t));
    let lo = hist.first.min(0);
    0.5 * (lo..=hi)
        .map(|j| (hist.get(j) - poisson_kernel(t, j)).abs())
        .sum::<f64>()
}

/// Dwell statistics between consecutive minimum-to-minimum hops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    pub escapes: usize,
    pub right: usize,
    pub left: usize,
    pub mean_dwell: f64,
    /// Standard error of `mean_dwell`.
    pub std_error: f64,
}

impl EscapeStats {
    /// Mean waiting time for a hop in one direction, `Σ dwell / #hops` in
    /// that direction (competing exits thin each other).
    pub fn directional_time(&self, rightward: bool) -> f64 {
        let n = if rightward { self.right } else { self.left };
        self.mean_dwell * self.escapes as f64 / n as f64
    }

    /// Per-direction waiting time pooled over both directions, the
    /// symmetric-tilt estimator `2·mean dwell`.
    pub fn pooled_directional_time(&self) -> f64 {
        2.0 * self.mean_dwell
    }
}

/// Dwell times `t_k − t_{k−1}` of each particle (starting from `t = 0` at a
/// minimum); trailing incomplete dwells are discarded.
pub fn escape_stats(ens: &Ensemble) -> Result<EscapeStats> {
    let mut last = vec![0.0; ens.positions.len()];
    let mut dwell = Vec::with_capacity(ens.hops.len());
    let (mut right, mut left) = (0, 0);
    for h in &ens.hops {
        dwell.push(h.time - last[h.particle]);
        last[h.particle] = h.time;
        if h.to > h.from {
            right += 1;
        } else {
            left += 1;
        }
    }
    if dwell.len() < 2 {
        return Err(Error::InvalidArgument(
            "fewer than two escapes recorded".into(),
        ));
    }
    let n = dwell.len() as f64;
    let mean = dwell.iter().sum::<f64>() / n;
    let var = dwell.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(EscapeStats {
        escapes: dwell.len(),
        right,
        left,
        mean_dwell: mean,
        std_error: (var / n).sqrt(),
    })
}

/// Kramers' expected time for a hop in one direction,
/// `τ c_K^{-1} exp(h/ν²)`.
pub fn kramers_hop_time(kd: &KramersData, nu: f64, tau: f64, rightward: bool) -> f64 {
    let h = if rightward { kd.h_right } else { kd.h_left };
    tau / kd.c_k * (h / (nu * nu)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::barriers;
    use crate::supercritical::effective_velocity;

    #[test]
    fn drift_table_accurate() {
        for pot in [
            PeriodicPotential::cosine(),
            PeriodicPotential::g_of_sin(vec![0.0, 1.0, 0.0, 0.1]).unwrap(),
        ] {
            let t = DriftTable::new(&pot, DriftTable::DEFAULT_NODES);
            for k in 0..1000 {
                let p = -20.0 + 0.0413 * k as f64;
                assert!((t.eval(p) - pot.d1(p)).abs() < 1e-13, "{p}");
            }
        }
    }

    #[test]
    fn unstable_step_rejected() {
        let pot = PeriodicPotential::cosine();
        let cfg = SimulationConfig::new(0.0, 0.5, 1.0, 4, 1.0, 0.1, 1);
        assert!(matches!(simulate(&pot, &cfg), Err(Error::Stability { .. })));
        let cfg = SimulationConfig::new(0.0, 0.5, 1.0, 0, 1.0, 1e-3, 1);
        assert!(simulate(&pot, &cfg).is_err());
    }

    #[test]
    fn seed_reproducible_and_streams_independent() {
        let pot = PeriodicPotential::cosine();
        let cfg = SimulationConfig::new(0.3, 0.8, 1.0, 8, 20.0, 1e-3, 42);
        let a = simulate(&pot, &cfg).unwrap();
        let b = simulate(&pot, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.hops.is_empty());
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        assert_ne!(simulate(&pot, &cfg2).unwrap().positions, a.positions);
        // A particle's path does not depend on how many others run.
        let mut cfg3 = cfg.clone();
        cfg3.n_particles = 3;
        let c = simulate(&pot, &cfg3).unwrap();
        assert_eq!(&a.positions[..3], &c.positions[..]);
        for w in a.hops.windows(2) {
            assert!(w[0].time <= w[1].time);
        }
    }

    #[test]
    fn initial_histogram_is_point_mass() {
        let pot = PeriodicPotential::cosine();
        let mut cfg = SimulationConfig::new(0.5, 0.5, 1.0, 50, 0.1, 1e-3, 7);
        cfg.snapshot_times = vec![0.0, 0.1];
        let ens = simulate(&pot, &cfg).unwrap();
        let cp = find_critical_points(&pot, 0.5).unwrap();
        let h = occupation_histogram(&ens, &cp, &[0.0]);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].1.first, 0);
        assert_eq!(h[0].1.values, vec![1.0]);
    }

    #[test]
    fn deterministic_traversal_matches_velocity() {
        let pot = PeriodicPotential::cosine();
        let sigma = 1.25;
        let nu = 0.05;
        let dt = max_stable_dt(&pot, nu, 1.0);
        let mut cfg = SimulationConfig::new(sigma, nu, 1.0, 256, 60.0, dt, 3);
        cfg.max_hops = Some(4);
        let ens = simulate(&pot, &cfg).unwrap();
        let stats = escape_stats(&ens).unwrap();
        let target = pot.period() / effective_velocity(&pot, sigma).unwrap();
        assert_eq!(stats.left, 0);
        assert!(
            (stats.mean_dwell / target - 1.0).abs() < 0.01,
            "{} vs {target}",
            stats.mean_dwell
        );
    }

    #[test]
    fn symmetric_hops_balanced() {
        let pot = PeriodicPotential::cosine();
        let nu = 0.8;
        let dt = max_stable_dt(&pot, nu, 1.0);
        let mut cfg = SimulationConfig::new(0.0, nu, 1.0, 100, 1e4, dt, 11);
        cfg.max_hops = Some(20);
        let ens = simulate(&pot, &cfg).unwrap();
        let s = escape_stats(&ens).unwrap();
        let n = s.escapes as f64;
        let frac = s.right as f64 / n;
        assert!(
            (frac - 0.5).abs() <= 3.0 * (0.25 / n).sqrt(),
            "{frac} over {n}"
        );
    }

    #[test]
    fn escape_time_order_of_kramers() {
        // Moderate barrier so the test stays fast; only the order is checked.
        let pot = PeriodicPotential::cosine();
        let nu = 0.8;
        let cp = find_critical_points(&pot, 0.0).unwrap();
        let kd = barriers(&pot, 0.0, &cp);
        let dt = max_stable_dt(&pot, nu, 1.0);
        let mut cfg = SimulationConfig::new(0.0, nu, 1.0, 100, 1e4, dt, 5);
        cfg.max_hops = Some(10);
        let s = escape_stats(&simulate(&pot, &cfg).unwrap()).unwrap();
        let ratio = s.pooled_directional_time() / kramers_hop_time(&kd, nu, 1.0, true);
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
    }

    #[test]
    fn tv_of_exact_kernel_is_zero() {
        let t = 1.3;
        let r = crate::lattice::window_radius(t);
        let hist = WellSeries {
            first: 0,
            values: (0..=r).map(|j| poisson_kernel(t, j)).collect(),
        };
        assert!(tv_to_poisson(&hist, t) < 1e-15);
        let point = WellSeries {
            first: 0,
            values: vec![1.0],
        };
        assert!((tv_to_poisson(&point, t) - (1.0 - (-t).exp())).abs() < 1e-12);
    }
}
