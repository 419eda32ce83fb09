//! Run configuration: a TOML file with nested sections, overridden by flags.
//!
//! ```toml
//! sigma = 0.5
//! nu = 0.45
//! out = "runs/a"
//!
//! [potential]
//! kind = "g_of_sin"
//! coeffs = [0.0, 1.0, 0.0, 0.1]
//!
//! [solver]
//! cells_per_well = 256
//! t_final = 2.0
//! ```
//!
//! A `run.json` written by an earlier run is accepted in place of the TOML
//! file; its embedded configuration is replayed.

use crate::error::{CliError, CliResult};
use fpwell::doublewell::DoubleWellPotential;
use fpwell::fpsolver::TimeStepPolicy;
use fpwell::lattice::{Direction, Method};
use fpwell::potential::PeriodicPotential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Cosine,
    GOfSin,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Polynomial coefficients of `g` in `H = g(sin p)`.
    pub coeffs: Vec<f64>,
    /// Two-column CSV `(p, H)` sampling one period.
    pub table: Option<PathBuf>,
    pub period: Option<f64>,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Cosine,
            coeffs: Vec::new(),
            table: None,
            period: None,
        }
    }
}

impl PotentialSpec {
    pub fn build(&self) -> CliResult<PeriodicPotential> {
        match self.kind {
            PotentialKind::Cosine => Ok(PeriodicPotential::cosine()),
            PotentialKind::GOfSin => {
                if self.coeffs.is_empty() {
                    return Err(CliError::Config("g_of_sin potential needs `coeffs`".into()));
                }
                Ok(PeriodicPotential::g_of_sin(self.coeffs.clone())?)
            }
            PotentialKind::Table => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| CliError::Config("table potential needs `table`".into()))?;
                let period = self
                    .period
                    .ok_or_else(|| CliError::Config("table potential needs `period`".into()))?;
                let samples = read_pairs(path)?;
                Ok(PeriodicPotential::from_table(&samples, period)?)
            }
        }
    }
}

/// Numeric two-column CSV, header optional.
pub fn read_pairs(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed: Option<(f64, f64)> = match (rec.get(0), rec.get(1)) {
            (Some(a), Some(b)) => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            None if k == 0 => continue,
            None => {
                return Err(CliError::Config(format!(
                    "{}: bad row {}",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicyKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    /// Inclusive well window; derived from the horizon when absent.
    pub wells: Option<[i64; 2]>,
    pub cells_per_well: usize,
    /// Horizon: Kramers units when subcritical, raw units otherwise.
    pub t_final: f64,
    /// Spacing of diagnostics records.
    pub cadence: f64,
    /// Write a density snapshot every this many records (0: none).
    pub snapshot_every: usize,
    pub guard_wells: i64,
    pub policy: StepPolicyKind,
    /// Fixed step, or the first adaptive step.
    pub dt: Option<f64>,
    pub tol: f64,
    /// Cells per period for the supercritical run.
    pub periodic_cells: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            wells: None,
            cells_per_well: 256,
            t_final: 2.0,
            cadence: 0.01,
            snapshot_every: 10,
            guard_wells: 2,
            policy: StepPolicyKind::Adaptive,
            dt: None,
            tol: 1e-6,
            periodic_cells: 1000,
        }
    }
}

impl SolverSpec {
    pub fn policy(&self) -> CliResult<TimeStepPolicy> {
        match self.policy {
            StepPolicyKind::Fixed => {
                let dt = self
                    .dt
                    .ok_or_else(|| CliError::Config("fixed step policy needs `dt`".into()))?;
                Ok(TimeStepPolicy::Fixed { dt })
            }
            StepPolicyKind::Adaptive => Ok(TimeStepPolicy::Adaptive {
                dt_initial: self.dt,
                growth: 1.2,
                dt_max: None,
                tol: self.tol,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    Right,
    Left,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Exact,
    Rk4,
}

impl From<MethodKind> for Method {
    fn from(m: MethodKind) -> Self {
        match m {
            MethodKind::Exact => Method::ExactPoisson,
            MethodKind::Rk4 => Method::Rk4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSpec {
    pub direction: DirectionKind,
    pub kappa: f64,
    pub method: MethodKind,
    /// Window radius; derived from the horizon when absent.
    pub radius: Option<i64>,
    /// Points `x` at which the product with the heat kernel is tabulated.
    pub x_samples: Vec<f64>,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            direction: DirectionKind::Right,
            kappa: 1.0,
            method: MethodKind::Rk4,
            radius: None,
            x_samples: Vec::new(),
        }
    }
}

impl LatticeSpec {
    pub fn direction(&self) -> Direction {
        match self.direction {
            DirectionKind::Right => Direction::Right,
            DirectionKind::Left => Direction::Left,
            DirectionKind::Symmetric => Direction::Symmetric { kappa: self.kappa },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Even-sextic family fixed by `(h₋, h₊, ω₀, ω₋, ω₊)`.
    Sextic,
    /// `(p² − 1)² − 1`.
    Quartic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleWellSpec {
    pub family: FamilyKind,
    pub params: Vec<f64>,
}

impl Default for DoubleWellSpec {
    fn default() -> Self {
        Self {
            family: FamilyKind::Sextic,
            params: vec![2.0, 3.0, 0.7, 1.1, 1.5],
        }
    }
}

impl DoubleWellSpec {
    pub fn build(&self) -> CliResult<DoubleWellPotential> {
        match self.family {
            FamilyKind::Quartic => Ok(DoubleWellPotential::symmetric_quartic()),
            FamilyKind::Sextic => match self.params[..] {
                [hm, hp, w0, wm, wp] => Ok(DoubleWellPotential::new(hm, hp, w0, wm, wp)?),
                _ => Err(CliError::Config(format!(
                    "sextic family needs 5 params (h-, h+, omega0, omega-, omega+), got {}",
                    self.params.len()
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSpec {
    pub particles: usize,
    /// Kramers-unit step; the stability bound when absent.
    pub dt: Option<f64>,
    /// Occupation histogram times; ten evenly spaced when empty.
    pub snapshots: Vec<f64>,
    pub max_hops: Option<usize>,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            particles: 1000,
            dt: None,
            snapshots: Vec::new(),
            max_hops: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: f64,
    pub nu: f64,
    /// Noise levels for `sweep`, strictly decreasing.
    pub nus: Vec<f64>,
    /// `gibbs-well:j`, `gaussian:p0,width`, `table:file`; for the lattice
    /// `point:j`; for the double well `left`, `right` or `gibbs`.
    pub init: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub potential: PotentialSpec,
    pub solver: SolverSpec,
    pub lattice: LatticeSpec,
    pub doublewell: DoubleWellSpec,
    pub mc: McSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            nu: 0.5,
            nus: vec![0.6, 0.5, 0.4],
            init: None,
            out: None,
            seed: 1,
            potential: PotentialSpec::default(),
            solver: SolverSpec::default(),
            lattice: LatticeSpec::default(),
            doublewell: DoubleWellSpec::default(),
            mc: McSpec::default(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML file, or replay the configuration stored in a `run.json`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Stored {
                config: RunConfig,
            }
            let stored: Stored = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(stored.config)
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !self.sigma.is_finite() {
            return bad(format!("sigma = {} is not finite", self.sigma));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu = {} must be positive", self.nu));
        }
        let s = &self.solver;
        if !(s.t_final >= 0.0 && s.t_final.is_finite()) {
            return bad(format!("t_final = {} must be nonnegative", s.t_final));
        }
        if s.cells_per_well < 4 {
            return bad(format!("cells_per_well = {} is below 4", s.cells_per_well));
        }
        if s.dt.is_some_and(|d| !(d > 0.0)) {
            return bad("dt must be positive".into());
        }
        if let Some([lo, hi]) = s.wells {
            if lo > hi {
                return bad(format!("well window [{lo}, {hi}] is empty"));
            }
        }
        if self.mc.particles == 0 {
            return bad("mc.particles must be at least 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configuration serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_parse() {
        let text = r#"
            sigma = 0.3
            nu = 0.4
            [potential]
            kind = "g_of_sin"
            coeffs = [0.0, 1.0, 0.0, 0.1]
            [solver]
            cells_per_well = 64
            policy = "fixed"
            dt = 0.01
        "#;
        let c: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(c.potential.kind, PotentialKind::GOfSin);
        assert_eq!(c.solver.cells_per_well, 64);
        assert_eq!(
            c.solver.policy().unwrap(),
            TimeStepPolicy::Fixed { dt: 0.01 }
        );
        assert_eq!(c.solver.t_final, 2.0);
        c.potential.build().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sigmaa = 1.0").is_err());
        assert!(toml::from_str::<RunConfig>("[solver]\ncels = 3").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.nu = 0.45;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.validate().unwrap();
        c.nu = 0.0;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = RunConfig::default();
        c.solver.wells = Some([3, 1]);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.solver.policy = StepPolicyKind::Fixed;
        assert!(c.solver.policy().is_err());
    }

    #[test]
    fn sextic_needs_five_params() {
        let spec = DoubleWellSpec {
            family: FamilyKind::Sextic,
            params: vec![1.0, 2.0],
        };
        assert!(matches!(spec.build(), Err(CliError::Config(_))));
    }
}
