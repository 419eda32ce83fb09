//! Subcommand drivers. Each reads the resolved [`RunConfig`], writes its
//! tables into the output directory and finishes with `run.json`.

use crate::config::RunConfig;
use crate::emit::{header, OutDir, RunRecord};
use crate::error::{CliError, CliResult};
use fpwell::asymptotics::{local_equilibrium, AsymptoticScalars, Gibbs};
use fpwell::doublewell::{
    dw_limit_ode_for, dw_scalars, dw_substitute_masses, dw_weight_psi, left_well_start, limit_mode,
    DoubleWellPotential,
};
use fpwell::fpsolver::{
    build_generator, build_generator_from_samples, solve_with, DensityField, Generator, Grid1D,
    SolveStats, SolverConfig,
};
use fpwell::lattice::{fundamental_solution, trajectory, window_radius, LatticeMassState};
use fpwell::observables::{
    dissipation_from_samples, energy_from_samples, PeriodicDiagnostics, WellSeries,
};
use fpwell::potential::{barriers, find_critical_points, tau};
use fpwell::sdemc::{
    escape_stats, kramers_hop_time, max_stable_dt, occupation_histogram, simulate, SimulationConfig,
};
use fpwell::study::{
    check_noise_levels, compare_masses, fitted_order, study_rows, MassComparison, StudySettings,
};
use fpwell::supercritical::ballistic_check;
use fpwell::weights::{build_phi, PsiTable, WeightPsi};
use rayon::prelude::*;
use serde::Serialize;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn out_dir(cfg: &RunConfig, command: &str) -> CliResult<OutDir> {
    let root = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(command));
    OutDir::create(&root)
}

/// Evenly spaced times `0, c, 2c, …` ending exactly at `t_final`.
fn time_grid(t_final: f64, cadence: f64) -> Vec<f64> {
    if !(cadence > 0.0) || t_final == 0.0 {
        return vec![0.0, t_final];
    }
    let n = (t_final / cadence).round().max(1.0) as usize;
    (0..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

fn well_columns(prefix: &str, wells: RangeInclusive<i64>) -> Vec<String> {
    wells.map(|j| format!("{prefix}_{j}")).collect()
}

#[derive(Debug, Serialize)]
pub struct AsymptoticsRecord {
    pub sigma: f64,
    pub nu: f64,
    #[serde(rename = "P0")]
    pub p0: f64,
    #[serde(rename = "Q0")]
    pub q0: f64,
    #[serde(rename = "hL")]
    pub h_left: f64,
    #[serde(rename = "hR")]
    pub h_right: f64,
    #[serde(rename = "cK")]
    pub c_k: f64,
    pub tau: f64,
    pub log_mu0: f64,
    pub log_eta0: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl From<&AsymptoticScalars> for AsymptoticsRecord {
    fn from(s: &AsymptoticScalars) -> Self {
        Self {
            sigma: s.sigma,
            nu: s.nu,
            p0: s.critical.p_min0,
            q0: s.critical.p_max0,
            h_left: s.kramers.h_left,
            h_right: s.kramers.h_right,
            c_k: s.kramers.c_k,
            tau: s.tau,
            log_mu0: s.log_mu0,
            log_eta0: s.log_eta0,
            kappa: s.kappa,
            theta: s.theta,
        }
    }
}

pub fn asymptotics(cfg: &RunConfig) -> CliResult<()> {
    let pot = cfg.potential.build()?;
    let s = AsymptoticScalars::compute(&pot, cfg.sigma, cfg.nu)?;
    let rec = AsymptoticsRecord::from(&s);
    println!(
        "{}",
        serde_json::to_string_pretty(&rec).expect("record serializes")
    );
    if cfg.out.is_some() {
        let out = out_dir(cfg, "asymptotics")?;
        out.json("asymptotics.json", &rec)?;
        out.json("run.json", &RunRecord::new("asymptotics", cfg, vec![], &s))?;
    }
    Ok(())
}

fn weight_window(cfg: &RunConfig) -> RangeInclusive<i64> {
    match cfg.solver.wells {
        Some([lo, hi]) => lo..=hi,
        None => -2..=2,
    }
}

/// `(p, ψ_j…, φ)` on a fine grid over the window.
pub fn weights(cfg: &RunConfig, dump: bool) -> CliResult<()> {
    let pot = cfg.potential.build()?;
    let s = AsymptoticScalars::compute(&pot, cfg.sigma, cfg.nu)?;
    let gibbs = Gibbs::new(&pot, cfg.sigma, cfg.nu);
    let table = Arc::new(PsiTable::build(&s, &gibbs)?);
    let wells = weight_window(cfg);
    let phi = build_phi(&s, &gibbs, wells.clone())?;
    let cp = s.critical;
    let (lo, hi) = (cp.p_min(*wells.start()), cp.p_min(*wells.end()));
    let n = cfg.solver.cells_per_well * (wells.end() - wells.start()).max(1) as usize;
    let mut cols = vec!["p".to_string()];
    cols.extend(well_columns("psi", wells.clone()));
    cols.push("phi".into());
    let rows = (0..=n).map(|k| -> CliResult<Vec<f64>> {
        let p = lo + (hi - lo) * k as f64 / n as f64;
        let mut row = vec![p];
        row.extend(
            wells
                .clone()
                .map(|j| WeightPsi::new(j, table.clone()).eval(p)),
        );
        row.push(phi.eval(p)?);
        Ok(row)
    });
    if dump {
        let mut w = csv::Writer::from_writer(std::io::stdout().lock());
        w.write_record(&cols)?;
        for row in rows {
            w.write_record(row?.iter().map(|v| crate::emit::num(*v)))?;
        }
        w.flush().map_err(|e| CliError::io("stdout", e))?;
        return Ok(());
    }
    let out = out_dir(cfg, "weights")?;
    let mut t = out.csv("weights.csv", &cols)?;
    for row in rows {
        t.row(&row?)?;
    }
    t.finish()?;
    out.json("run.json", &RunRecord::new("weights", cfg, vec![], &s))
}

/// Parsed `--init` for the periodic solver.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    GibbsWell(i64),
    Gaussian { center: f64, width: f64 },
    Table(PathBuf),
}

impl InitSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = || CliError::Config(format!("cannot parse init `{text}`"));
        let (kind, arg) = text.split_once(':').ok_or_else(bad)?;
        match kind {
            "gibbs-well" => Ok(InitSpec::GibbsWell(arg.trim().parse().map_err(|_| bad())?)),
            "gaussian" => {
                let (c, w) = arg.split_once(',').ok_or_else(bad)?;
                let center: f64 = c.trim().parse().map_err(|_| bad())?;
                let width: f64 = w.trim().parse().map_err(|_| bad())?;
                if !(width > 0.0) {
                    return Err(CliError::Config(format!(
                        "gaussian width {width} must be positive"
                    )));
                }
                Ok(InitSpec::Gaussian { center, width })
            }
            "table" => Ok(InitSpec::Table(PathBuf::from(arg))),
            _ => Err(bad()),
        }
    }

    pub fn density(
        &self,
        grid: Grid1D,
        s: &AsymptoticScalars,
        gibbs: &Gibbs,
    ) -> CliResult<DensityField> {
        let mut rho = match self {
            InitSpec::GibbsWell(j) => {
                let le = local_equilibrium(*j, s, gibbs);
                DensityField::sampled(grid, |p| le.eval(p))?
            }
            InitSpec::Gaussian { center, width } => {
                DensityField::sampled(grid, |p| (-0.5 * ((p - center) / width).powi(2)).exp())?
            }
            InitSpec::Table(path) => {
                let pts = crate::config::read_pairs(path)?;
                DensityField::sampled(grid, |p| interpolate(&pts, p))?
            }
        };
        let m = rho.total_mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(CliError::Config(
                "initial density has no mass on the grid".into(),
            ));
        }
        rho.normalize();
        Ok(rho)
    }
}

/// Linear interpolation of sorted samples, zero outside their range.
fn interpolate(pts: &[(f64, f64)], p: f64) -> f64 {
    match pts.iter().position(|q| q.0 >= p) {
        Some(0) => {
            if pts[0].0 == p {
                pts[0].1
            } else {
                0.0
            }
        }
        Some(k) => {
            let ((a, fa), (b, fb)) = (pts[k - 1], pts[k]);
            fa + (fb - fa) * (p - a) / (b - a)
        }
        None => 0.0,
    }
}

/// Well window of a subcritical run: the configured one, or guard wells
/// upstream and the Poisson reach downstream.
fn solve_window(cfg: &RunConfig) -> RangeInclusive<i64> {
    if let Some([lo, hi]) = cfg.solver.wells {
        return lo..=hi;
    }
    let reach = window_radius(cfg.solver.t_final);
    let guard = cfg.solver.guard_wells;
    if cfg.sigma >= 0.0 {
        -guard..=reach
    } else {
        -reach..=guard
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    scalars: &'a AsymptoticScalars,
    stats: SolveStats,
    records: usize,
    snapshots: usize,
    max_mass_drift: f64,
}

pub fn solve(cfg: &RunConfig) -> CliResult<()> {
    let pot = cfg.potential.build()?;
    let s = AsymptoticScalars::compute(&pot, cfg.sigma, cfg.nu)?;
    let wells = solve_window(cfg);
    let grid = Grid1D::aligned(&s.critical, wells.clone(), cfg.solver.cells_per_well)?;
    let gibbs = Gibbs::new(&pot, cfg.sigma, cfg.nu);
    let init = InitSpec::parse(cfg.init.as_deref().unwrap_or("gibbs-well:0"))?;
    let rho0 = init.density(grid, &s, &gibbs)?;
    let diag = PeriodicDiagnostics::new(&pot, s, grid)?;
    let generator = Generator::Line(build_generator(&pot, cfg.sigma, cfg.nu, &grid));
    let config = SolverConfig::new(cfg.nu, cfg.sigma, s.tau).with_policy(cfg.solver.policy()?);

    let out = out_dir(cfg, "solve")?;
    let dw = diag.wells.clone();
    let mut cols = header(&["t", "E", "D", "P", "K", "V"]);
    cols.extend(well_columns("m", dw.clone()));
    cols.extend(well_columns("mbar", dw.clone()));
    cols.extend(well_columns("mtilde", dw.clone()));
    let mut table = out.csv("diagnostics.csv", &cols)?;
    let mut failure: Option<CliError> = None;
    let (mut records, mut snapshots, mut drift) = (0usize, 0usize, 0.0f64);
    let every = cfg.solver.snapshot_every;
    let (_, stats) = solve_with(
        &rho0,
        cfg.solver.t_final,
        &generator,
        &config,
        cfg.solver.cadence,
        |t, rho| {
            if failure.is_some() {
                return;
            }
            let result = (|| -> CliResult<()> {
                let rec = diag.record(t, rho)?;
                drift = drift.max((rec.total_mass - 1.0).abs());
                let mut row = vec![
                    t,
                    rec.energy,
                    rec.dissipation,
                    rec.first_moment,
                    rec.counting_moment,
                    rec.second_moment,
                ];
                for series in [&rec.masses, &rec.bar, &rec.tilde] {
                    row.extend(dw.clone().map(|j| series.get(j)));
                }
                table.row(&row)?;
                if every > 0 && records % every == 0 {
                    let mut d = out.csv(
                        &format!("density_{snapshots:04}.csv"),
                        &header(&["p", "rho"]),
                    )?;
                    for (i, v) in rho.values.iter().enumerate() {
                        d.row(&[rho.grid.center(i), *v])?;
                    }
                    d.finish()?;
                    snapshots += 1;
                }
                records += 1;
                Ok(())
            })();
            if let Err(e) = result {
                failure = Some(e);
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    table.finish()?;
    let summary = SolveSummary {
        scalars: &diag.scalars,
        stats,
        records,
        snapshots,
        max_mass_drift: drift,
    };
    out.json("run.json", &RunRecord::new("solve", cfg, vec![], summary))
}

/// `point:j` or `table:file` with rows `(j, m_j)`.
fn lattice_start(cfg: &RunConfig, radius: i64) -> CliResult<(LatticeMassState, Option<i64>)> {
    let text = cfg.init.as_deref().unwrap_or("point:0");
    let bad = || CliError::Config(format!("cannot parse lattice init `{text}`"));
    let (kind, arg) = text.split_once(':').ok_or_else(bad)?;
    let dir = cfg.lattice.direction();
    match kind {
        "point" => {
            let j0: i64 = arg.trim().parse().map_err(|_| bad())?;
            Ok((LatticeMassState::point_mass(j0, radius, dir), Some(j0)))
        }
        "table" => {
            let pts = crate::config::read_pairs(Path::new(arg))?;
            if pts.is_empty() {
                return Err(bad());
            }
            let idx: Vec<i64> = pts.iter().map(|p| p.0.round() as i64).collect();
            let lo = idx.iter().min().unwrap() - radius;
            let hi = idx.iter().max().unwrap() + radius;
            let mut m = WellSeries::zeros(lo..=hi);
            for (j, (_, v)) in idx.iter().zip(&pts) {
                m.values[(j - lo) as usize] += v;
            }
            Ok((LatticeMassState::new(m, dir)?, None))
        }
        _ => Err(bad()),
    }
}

pub fn lattice(cfg: &RunConfig) -> CliResult<()> {
    let t_final = cfg.solver.t_final;
    let radius = cfg.lattice.radius.unwrap_or_else(|| window_radius(t_final));
    let (state0, point) = lattice_start(cfg, radius)?;
    let times = time_grid(t_final, cfg.solver.cadence);
    let states = trajectory(&state0, &times, cfg.lattice.method.into())?;

    let out = out_dir(cfg, "lattice")?;
    let wells = state0.masses.indices();
    let mut cols = header(&["t"]);
    cols.extend(well_columns("m", wells.clone()));
    cols.extend(header(&["sink_left", "sink_right"]));
    let mut table = out.csv("masses.csv", &cols)?;
    for (t, st) in times.iter().zip(&states) {
        let mut row = vec![*t];
        row.extend(st.masses.values.iter().copied());
        row.extend([st.sink_left, st.sink_right]);
        table.row(&row)?;
    }
    table.finish()?;

    if !cfg.lattice.x_samples.is_empty() {
        let j0 = point.ok_or_else(|| {
            CliError::Config("heat-kernel product needs a point initial mass".into())
        })?;
        let sign = match state0.direction {
            fpwell::lattice::Direction::Right => 1,
            fpwell::lattice::Direction::Left => -1,
            fpwell::lattice::Direction::Symmetric { .. } => {
                return Err(CliError::Config(
                    "heat-kernel product needs a one-sided direction".into(),
                ))
            }
        };
        let mut prod = out.csv("product.csv", &header(&["j", "t", "x", "value"]))?;
        for &t in times.iter().filter(|t| **t > 0.0) {
            for j in wells.clone() {
                for &x in &cfg.lattice.x_samples {
                    prod.row_mixed(
                        &[j],
                        &[t, x, fundamental_solution(t, sign * (j - j0), Some(&[x]))],
                    )?;
                }
            }
        }
        prod.finish()?;
    }
    out.json(
        "run.json",
        &RunRecord::new(
            "lattice",
            cfg,
            vec![],
            serde_json::json!({ "times": times.len() }),
        ),
    )
}

fn study_settings(cfg: &RunConfig) -> CliResult<StudySettings> {
    Ok(StudySettings {
        sigma: cfg.sigma,
        t_final: cfg.solver.t_final,
        cells_per_well: cfg.solver.cells_per_well,
        cadence: cfg.solver.cadence,
        guard_wells: cfg.solver.guard_wells,
        policy: cfg.solver.policy()?,
        lattice_method: cfg.lattice.method.into(),
        refined_tau: false,
    })
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    nu: f64,
    tau: f64,
    theta: f64,
    error: f64,
    mass_drift: f64,
}

pub fn compare(cfg: &RunConfig) -> CliResult<()> {
    let pot = cfg.potential.build()?;
    let c = compare_masses(&pot, cfg.nu, &study_settings(cfg)?)?;
    let out = out_dir(cfg, "compare")?;
    let wells = c.tilde0.indices();
    let mut cols = header(&["t"]);
    cols.extend(well_columns("pde", wells.clone()));
    cols.extend(well_columns("lattice", wells.clone()));
    let mut table = out.csv("masses.csv", &cols)?;
    for ((t, pde), lat) in c.times.iter().zip(&c.pde).zip(&c.lattice) {
        let mut row = vec![*t];
        row.extend(wells.clone().map(|j| pde.get(j)));
        row.extend(wells.clone().map(|j| lat.get(j)));
        table.row(&row)?;
    }
    table.finish()?;
    let summary = CompareSummary {
        nu: c.nu,
        tau: c.tau,
        theta: c.theta,
        error: c.error,
        mass_drift: c.mass_drift,
    };
    println!("nu = {}  error = {}", c.nu, crate::emit::num(c.error));
    out.json("run.json", &RunRecord::new("compare", cfg, vec![], summary))
}

/// Convergence study over `nus`, one worker per noise level; rows keep the
/// order of the list.
pub fn sweep(cfg: &RunConfig) -> CliResult<()> {
    check_noise_levels(&cfg.nus)?;
    let pot = cfg.potential.build()?;
    let settings = study_settings(cfg)?;
    let runs: Vec<MassComparison> = cfg
        .nus
        .par_iter()
        .map(|&nu| compare_masses(&pot, nu, &settings))
        .collect::<fpwell::Result<_>>()?;
    let rows = study_rows(&runs);
    let order = fitted_order(&rows);
    let out = out_dir(cfg, "sweep")?;
    let mut table = out.csv(
        "convergence.csv",
        &header(&["nu", "error", "order", "tau", "theta", "mass_drift"]),
    )?;
    for r in &rows {
        table.row(&[
            r.nu,
            r.error,
            r.order.unwrap_or(f64::NAN),
            r.tau,
            r.theta,
            r.mass_drift,
        ])?;
    }
    table.finish()?;
    for r in &rows {
        println!(
            "nu = {:<6} error = {}  order = {}",
            r.nu,
            crate::emit::num(r.error),
            r.order.map_or("-".into(), crate::emit::num)
        );
    }
    println!("fitted order = {}", crate::emit::num(order));
    let results = serde_json::json!({ "rows": rows, "fitted_order": order });
    out.json("run.json", &RunRecord::new("sweep", cfg, vec![], results))
}

fn dw_start(
    q: &DoubleWellPotential,
    grid: Grid1D,
    nu: f64,
    init: &str,
    heff: &[f64],
) -> CliResult<DensityField> {
    let nu2 = nu * nu;
    match init {
        "left" => Ok(left_well_start(q, grid, nu)?),
        "right" => {
            let mut rho = DensityField::sampled(grid, |p| {
                if p > 0.0 {
                    (-(q.value(p) + q.h_plus) / nu2).exp()
                } else {
                    0.0
                }
            })?;
            rho.normalize();
            Ok(rho)
        }
        "gibbs" => {
            let mut rho = DensityField::gibbs(grid, heff, nu)?;
            rho.normalize();
            Ok(rho)
        }
        other => Err(CliError::Config(format!(
            "double-well init `{other}` (expected left, right or gibbs)"
        ))),
    }
}

pub fn doublewell(cfg: &RunConfig) -> CliResult<()> {
    let q = cfg.doublewell.build()?;
    let nu = cfg.nu;
    let ds = dw_scalars(&q, nu)?;
    let grid = q.grid(
        nu,
        (q.p_plus - q.p_minus) / cfg.solver.cells_per_well as f64,
    )?;
    let heff = q.samples(&grid);
    let rho0 = dw_start(&q, grid, nu, cfg.init.as_deref().unwrap_or("left"), &heff)?;
    let psi = dw_weight_psi(&q, &ds)?;
    let generator = Generator::Line(build_generator_from_samples(&heff, nu, grid.h()));
    let config = SolverConfig::new(nu, 0.0, ds.tau).with_policy(cfg.solver.policy()?);

    let out = out_dir(cfg, "doublewell")?;
    let mut table = out.csv(
        "diagnostics.csv",
        &header(&[
            "t",
            "m_minus",
            "m_plus",
            "mbar_minus",
            "mbar_plus",
            "mtilde_minus",
            "mtilde_plus",
            "E",
            "D",
        ]),
    )?;
    let mut times = Vec::new();
    let mut first = None;
    let mut failure = None;
    let side = |p: f64| Some(if p < 0.0 { 0 } else { 1 });
    let (_, stats) = solve_with(
        &rho0,
        cfg.solver.t_final,
        &generator,
        &config,
        cfg.solver.cadence,
        |t, rho| {
            let m = dw_substitute_masses(rho, &ds, &q, &psi);
            first.get_or_insert((m.m_minus, m.m_plus));
            let e = energy_from_samples(rho, &heff, nu);
            let d = dissipation_from_samples(rho, &heff, nu, 0..=1, side).total;
            let row = [
                t,
                m.m_minus,
                m.m_plus,
                m.bar_minus,
                m.bar_plus,
                m.tilde_minus,
                m.tilde_plus,
                e,
                d,
            ];
            if let Err(err) = table.row(&row) {
                failure.get_or_insert(err);
            }
            times.push(t);
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    table.finish()?;

    let (m0_minus, m0_plus) = first.unwrap_or((1.0, 0.0));
    let reference = dw_limit_ode_for(&q, m0_minus, m0_plus, &times, limit_mode(&q))?;
    let mut ode = out.csv("ode_reference.csv", &header(&["t", "m_minus", "m_plus"]))?;
    for (t, (a, b)) in times.iter().zip(&reference) {
        ode.row(&[*t, *a, *b])?;
    }
    ode.finish()?;
    let results = serde_json::json!({ "scalars": ds, "mode": limit_mode(&q), "stats": stats });
    out.json(
        "run.json",
        &RunRecord::new("doublewell", cfg, vec![], results),
    )
}

pub fn supercritical(cfg: &RunConfig) -> CliResult<()> {
    let pot = cfg.potential.build()?;
    let dt = cfg.solver.dt.unwrap_or(0.01);
    let check = ballistic_check(
        &pot,
        cfg.sigma,
        cfg.nu,
        cfg.solver.t_final,
        cfg.solver.periodic_cells,
        dt,
    )?;
    let out = out_dir(cfg, "supercritical")?;
    let mut table = out.csv("first_moment.csv", &header(&["t", "P", "winding"]))?;
    for &(t, p, w) in &check.series {
        table.row(&[t, p, w])?;
    }
    table.finish()?;
    let summary = serde_json::json!({
        "lambda_quadrature": check.lambda,
        "lambda_measured": check.slope,
        "rel_err": check.rel_err,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    out.json("summary.json", &summary)?;
    out.json(
        "run.json",
        &RunRecord::new("supercritical", cfg, vec![], &summary),
    )
}

pub fn mc(cfg: &RunConfig) -> CliResult<()> {
    let pot = cfg.potential.build()?;
    let t_final = cfg.solver.t_final;
    let sub = pot.is_subcritical(cfg.sigma);
    let (time_unit, kramers) = if sub {
        let cp = find_critical_points(&pot, cfg.sigma)?;
        let kd = barriers(&pot, cfg.sigma, &cp);
        (tau(&kd, cfg.nu)?, Some((cp, kd)))
    } else {
        (1.0, None)
    };
    let dt = cfg
        .mc
        .dt
        .unwrap_or_else(|| max_stable_dt(&pot, cfg.nu, time_unit));
    let snapshots = if cfg.mc.snapshots.is_empty() {
        time_grid(t_final, t_final / 10.0)
    } else {
        cfg.mc.snapshots.clone()
    };
    let mut sim = SimulationConfig::new(
        cfg.sigma,
        cfg.nu,
        time_unit,
        cfg.mc.particles,
        t_final,
        dt,
        cfg.seed,
    );
    sim.snapshot_times = snapshots.clone();
    sim.max_hops = cfg.mc.max_hops;
    let ens = simulate(&pot, &sim)?;

    let out = out_dir(cfg, "mc")?;
    let mut hops = out.csv("hops.csv", &header(&["particle", "from", "to", "time"]))?;
    for h in &ens.hops {
        hops.row_mixed(&[h.particle as i64, h.from, h.to], &[h.time])?;
    }
    hops.finish()?;
    let mut occ = out.csv("occupation.csv", &header(&["j", "t", "fraction"]))?;
    if let Some((cp, _)) = &kramers {
        for (t, hist) in occupation_histogram(&ens, cp, &snapshots) {
            for (j, v) in hist.iter() {
                occ.row_mixed(&[j], &[t, v])?;
            }
        }
    }
    occ.finish()?;

    let mut results = serde_json::json!({
        "time_unit": time_unit,
        "dt": ens.dt,
        "hops": ens.hops.len(),
    });
    if let Some((_, kd)) = &kramers {
        results["kramers_hop_time_right"] = kramers_hop_time(kd, cfg.nu, time_unit, true).into();
        results["kramers_hop_time_left"] = kramers_hop_time(kd, cfg.nu, time_unit, false).into();
        if let Ok(st) = escape_stats(&ens) {
            results["escapes"] = serde_json::to_value(st).expect("stats serialize");
        }
    }
    out.json(
        "run.json",
        &RunRecord::new("mc", cfg, vec![cfg.seed], results),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_specs_parse() {
        assert_eq!(
            InitSpec::parse("gibbs-well:-1").unwrap(),
            InitSpec::GibbsWell(-1)
        );
        assert_eq!(
            InitSpec::parse("gaussian:0.5, 0.2").unwrap(),
            InitSpec::Gaussian {
                center: 0.5,
                width: 0.2
            }
        );
        assert_eq!(
            InitSpec::parse("table:a.csv").unwrap(),
            InitSpec::Table("a.csv".into())
        );
        for bad in [
            "gibbs",
            "gaussian:1",
            "gaussian:1,-2",
            "blob:3",
            "gibbs-well:x",
        ] {
            assert!(
                matches!(InitSpec::parse(bad), Err(CliError::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn interpolation_and_time_grid() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)];
        assert_eq!(interpolate(&pts, 0.5), 1.0);
        assert_eq!(interpolate(&pts, 1.5), 1.0);
        assert_eq!(interpolate(&pts, -1.0), 0.0);
        assert_eq!(interpolate(&pts, 3.0), 0.0);
        let g = time_grid(1.0, 0.3);
        assert_eq!(g.first(), Some(&0.0));
        assert_eq!(g.last(), Some(&1.0));
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn solve_window_follows_tilt() {
        let mut c = RunConfig::default();
        c.solver.t_final = 1.0;
        assert_eq!(solve_window(&c), -2..=window_radius(1.0));
        c.sigma = -0.5;
        assert_eq!(solve_window(&c), -window_radius(1.0)..=2);
        c.solver.wells = Some([0, 3]);
        assert_eq!(solve_window(&c), 0..=3);
    }
}
