//! `fpwell`: experiments for Fokker–Planck dynamics in tilted periodic and
//! double-well potentials.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod emit;
mod error;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{DirectionKind, FamilyKind, MethodKind, PotentialKind, RunConfig, StepPolicyKind};
use error::{CliError, CliResult};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "fpwell",
    version,
    about = "Fokker-Planck dynamics in tilted periodic and double-well potentials"
)]
struct Cli {
    /// TOML configuration, or a run.json to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Barriers, Kramers time and the μ₀, η₀, κ, θ bundle as JSON.
    Asymptotics(Common),
    /// Transition-layer weights ψ_j and the counting weight φ.
    Weights {
        #[command(flatten)]
        common: Common,
        /// Print the CSV to stdout instead of writing it.
        #[arg(long)]
        dump: bool,
    },
    /// Fokker–Planck run with per-well diagnostics.
    Solve(Common),
    /// Limit lattice masses.
    Lattice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lattice: LatticeArgs,
    },
    /// One PDE run against the lattice started from its moment masses.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lattice: LatticeArgs,
    },
    /// Double-well run with the limit-ODE reference.
    Doublewell {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        family: Option<Family>,
        /// h₋,h₊,ω₀,ω₋,ω₊ for the sextic family.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
    },
    /// Drift of the first moment against the effective velocity.
    Supercritical {
        #[command(flatten)]
        common: Common,
        /// Cells per period.
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Euler–Maruyama ensemble with hop log and occupation histograms.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        particles: Option<usize>,
        /// Stop each particle after this many hops.
        #[arg(long)]
        max_hops: Option<usize>,
        /// Occupation times.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Convergence study over a list of noise levels.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Strictly decreasing noise levels.
        #[arg(long, value_delimiter = ',')]
        nus: Option<Vec<f64>>,
    },
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Args)]
struct Common {
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// `cosine`, `g_of_sin:c0,c1,…` or `table:FILE:PERIOD`.
    #[arg(long)]
    potential: Option<String>,
    /// Horizon (Kramers units when subcritical).
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// `LO:HI`, or `J` for `-J:J`.
    #[arg(long, allow_hyphen_values = true)]
    wells: Option<String>,
    #[arg(long)]
    cells_per_well: Option<usize>,
    #[arg(long)]
    cadence: Option<f64>,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct LatticeArgs {
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    radius: Option<i64>,
    /// Points x for the product with the heat kernel.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x_samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Right,
    Left,
    Symmetric,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Rk4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Sextic,
    Quartic,
}

fn parse_potential(text: &str, cfg: &mut RunConfig) -> CliResult<()> {
    let bad = || CliError::Config(format!("cannot parse potential `{text}`"));
    let mut parts = text.splitn(2, ':');
    let kind = parts.next().unwrap_or_default();
    let rest = parts.next();
    let p = &mut cfg.potential;
    match kind {
        "cosine" => p.kind = PotentialKind::Cosine,
        "g_of_sin" => {
            p.kind = PotentialKind::GOfSin;
            p.coeffs = rest
                .ok_or_else(bad)?
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<CliResult<_>>()?;
        }
        "table" => {
            let (file, period) = rest.and_then(|r| r.rsplit_once(':')).ok_or_else(bad)?;
            p.kind = PotentialKind::Table;
            p.table = Some(PathBuf::from(file));
            p.period = Some(period.trim().parse().map_err(|_| bad())?);
        }
        _ => return Err(bad()),
    }
    Ok(())
}

fn parse_wells(text: &str) -> CliResult<[i64; 2]> {
    let bad = || CliError::Config(format!("cannot parse wells `{text}`"));
    let int = |s: &str| s.trim().parse::<i64>().map_err(|_| bad());
    match text.split_once(':') {
        Some((a, b)) => Ok([int(a)?, int(b)?]),
        None => {
            let j = int(text)?;
            Ok([-j.abs(), j.abs()])
        }
    }
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.nu {
            cfg.nu = v;
        }
        if let Some(p) = &self.potential {
            parse_potential(p, cfg)?;
        }
        if let Some(v) = self.t_final {
            cfg.solver.t_final = v;
        }
        if let Some(w) = &self.wells {
            cfg.solver.wells = Some(parse_wells(w)?);
        }
        if let Some(v) = self.cells_per_well {
            cfg.solver.cells_per_well = v;
        }
        if let Some(v) = self.cadence {
            cfg.solver.cadence = v;
        }
        if let Some(p) = self.policy {
            cfg.solver.policy = match p {
                Policy::Adaptive => StepPolicyKind::Adaptive,
                Policy::Fixed => StepPolicyKind::Fixed,
            };
        }
        if let Some(v) = self.dt {
            cfg.solver.dt = Some(v);
            cfg.mc.dt = Some(v);
        }
        if let Some(v) = &self.init {
            cfg.init = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(())
    }
}

impl LatticeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let l = &mut cfg.lattice;
        if let Some(d) = self.direction {
            l.direction = match d {
                DirectionArg::Right => DirectionKind::Right,
                DirectionArg::Left => DirectionKind::Left,
                DirectionArg::Symmetric => DirectionKind::Symmetric,
            };
        }
        if let Some(k) = self.kappa {
            l.kappa = k;
        }
        if let Some(m) = self.method {
            l.method = match m {
                MethodArg::Exact => MethodKind::Exact,
                MethodArg::Rk4 => MethodKind::Rk4,
            };
        }
        if let Some(r) = self.radius {
            l.radius = Some(r);
        }
        if let Some(x) = &self.x_samples {
            l.x_samples = x.clone();
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Asymptotics(c) | Command::Solve(c) => c.apply(&mut cfg)?,
        Command::Weights { common, .. } => common.apply(&mut cfg)?,
        Command::Lattice { common, lattice } | Command::Compare { common, lattice } => {
            common.apply(&mut cfg)?;
            lattice.apply(&mut cfg);
        }
        Command::Doublewell {
            common,
            family,
            params,
        } => {
            common.apply(&mut cfg)?;
            if let Some(f) = family {
                cfg.doublewell.family = match f {
                    Family::Sextic => FamilyKind::Sextic,
                    Family::Quartic => FamilyKind::Quartic,
                };
            }
            if let Some(p) = params {
                cfg.doublewell.params = p.clone();
            }
        }
        Command::Supercritical { common, cells } => {
            common.apply(&mut cfg)?;
            if let Some(n) = cells {
                cfg.solver.periodic_cells = *n;
            }
        }
        Command::Mc {
            common,
            particles,
            max_hops,
            snapshots,
        } => {
            common.apply(&mut cfg)?;
            if let Some(n) = particles {
                cfg.mc.particles = *n;
            }
            if max_hops.is_some() {
                cfg.mc.max_hops = *max_hops;
            }
            if let Some(s) = snapshots {
                cfg.mc.snapshots = s.clone();
            }
        }
        Command::Sweep {
            common,
            lattice,
            nus,
        } => {
            common.apply(&mut cfg)?;
            lattice.apply(&mut cfg);
            if let Some(n) = nus {
                cfg.nus = n.clone();
            }
        }
    }
    cfg.validate()?;
    match cli.command {
        Command::Asymptotics(_) => commands::asymptotics(&cfg),
        Command::Weights { dump, .. } => commands::weights(&cfg, dump),
        Command::Solve(_) => commands::solve(&cfg),
        Command::Lattice { .. } => commands::lattice(&cfg),
        Command::Compare { .. } => commands::compare(&cfg),
        Command::Doublewell { .. } => commands::doublewell(&cfg),
        Command::Supercritical { .. } => commands::supercritical(&cfg),
        Command::Mc { .. } => commands::mc(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("fpwell: {e}");
        std::process::exit(e.exit_code());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wells_syntax() {
        assert_eq!(parse_wells("-1:3").unwrap(), [-1, 3]);
        assert_eq!(parse_wells("2").unwrap(), [-2, 2]);
        assert!(parse_wells("a:b").is_err());
    }

    #[test]
    fn potential_syntax() {
        let mut c = RunConfig::default();
        parse_potential("g_of_sin:0,1,0,0.1", &mut c).unwrap();
        assert_eq!(c.potential.coeffs, vec![0.0, 1.0, 0.0, 0.1]);
        parse_potential("table:/tmp/h.csv:6.5", &mut c).unwrap();
        assert_eq!(c.potential.period, Some(6.5));
        assert_eq!(c.potential.table, Some(PathBuf::from("/tmp/h.csv")));
        assert!(parse_potential("square", &mut c).is_err());
        assert!(parse_potential("g_of_sin:x", &mut c).is_err());
    }

    #[test]
    fn flags_override_file() {
        let cli = Cli::try_parse_from([
            "fpwell", "solve", "--nu", "0.3", "--T", "1.5", "--wells", "0:4",
        ])
        .unwrap();
        let mut cfg = RunConfig::default();
        if let Command::Solve(c) = &cli.command {
            c.apply(&mut cfg).unwrap();
        }
        assert_eq!(cfg.nu, 0.3);
        assert_eq!(cfg.solver.t_final, 1.5);
        assert_eq!(cfg.solver.wells, Some([0, 4]));
        assert_eq!(cfg.sigma, 0.5);
    }
}
