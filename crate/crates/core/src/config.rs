//! TOML run configuration.
//!
//! ```toml
//! [system]
//! period = 6.283185307179586
//! n = 2
//! m_w = 1          # columns of B1
//! m_u = 1          # columns of B2 (control channel)
//! p_y = 1          # rows of C1 (measurement)
//! p_z = 2          # rows of C2 (regulated output)
//!
//! [matrices.A]
//! "1,2" = { const = 1.0 }
//! "2,1" = { const = -4.0, sin = [[1, 0.5]] }
//!
//! [solver]
//! grid = 2048
//! substeps = 4
//! tol = 1e-7
//! max_iter = 200
//!
//! [run]
//! mode = "analyze"
//! alpha0 = 1.0     # or { const = 1.0, cos = [[1, 0.1]] }
//! ```
//!
//! Matrix entries are keyed `"row,col"`, one-based; absent entries are zero.
//! `B` and `C` are accepted as aliases of `B1` and `C2`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ellipsoid::Relaxation;
use crate::error::{Error, Result};
use crate::signal::{AlphaProfile, FourierEntry, PeriodicMatrixSignal};
use crate::simulate::DisturbancePolicy;
use crate::synthesis::{DesignMode, LtvPlant};

/// Smallest accepted grid.
pub const MIN_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analyze,
    SynthSf,
    SynthObs,
    SynthOf,
    Baseline,
    Simulate,
    Example,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Analyze => "analyze",
            Mode::SynthSf => "synth-sf",
            Mode::SynthObs => "synth-obs",
            Mode::SynthOf => "synth-of",
            Mode::Baseline => "baseline",
            Mode::Simulate => "simulate",
            Mode::Example => "example",
        }
    }

    pub fn design(&self) -> Option<DesignMode> {
        match self {
            Mode::SynthSf => Some(DesignMode::StateFeedback),
            Mode::SynthObs => Some(DesignMode::Observer),
            Mode::SynthOf => Some(DesignMode::OutputFeedback),
            _ => None,
        }
    }
}

/// Which closed loop `simulate` drives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopKind {
    /// `(A, B1, C2)` with no controller.
    #[default]
    Open,
    StateFeedback,
    Observer,
    OutputFeedback,
    Baseline,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    WorstCase,
    RandomExtreme,
    Harmonic,
    Zero,
}

impl PolicyKind {
    pub fn policy(&self, seed: u64) -> DisturbancePolicy {
        match self {
            PolicyKind::WorstCase => DisturbancePolicy::WorstCase,
            PolicyKind::RandomExtreme => DisturbancePolicy::RandomExtreme { seed },
            PolicyKind::Harmonic => DisturbancePolicy::Harmonic,
            PolicyKind::Zero => DisturbancePolicy::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Constant(f64),
    Fourier(FourierEntry),
}

impl AlphaSpec {
    pub fn profile(&self, period: f64, nodes: usize) -> Result<AlphaProfile> {
        match self {
            AlphaSpec::Constant(v) => AlphaProfile::constant(*v, period, nodes),
            AlphaSpec::Fourier(e) => AlphaProfile::from_entry(e, period, nodes),
        }
    }

    /// Parses a number, or else reads a TOML file holding one Fourier entry.
    pub fn parse(arg: &str) -> Result<Self> {
        if let Ok(v) = arg.trim().parse::<f64>() {
            return Ok(AlphaSpec::Constant(v));
        }
        let text = std::fs::read_to_string(arg)
            .map_err(|e| Error::Config(format!("alpha0 file {arg}: {e}")))?;
        let entry: FourierEntry =
            toml::from_str(&text).map_err(|e| Error::Config(format!("alpha0 file {arg}: {e}")))?;
        Ok(AlphaSpec::Fourier(entry))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub period: f64,
    pub n: usize,
    pub m_w: usize,
    pub m_u: Option<usize>,
    pub p_y: Option<usize>,
    pub p_z: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub grid: usize,
    pub substeps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: RelaxationKind,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            grid: crate::signal::DEFAULT_NODES,
            substeps: 4,
            tol: 1e-7,
            max_iter: 200,
            relaxation: RelaxationKind::Aitken,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxationKind {
    Plain,
    #[default]
    Aitken,
}

impl From<RelaxationKind> for Relaxation {
    fn from(r: RelaxationKind) -> Self {
        match r {
            RelaxationKind::Plain => Relaxation::Plain,
            RelaxationKind::Aitken => Relaxation::Aitken,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<Mode>,
    pub alpha0: AlphaSpec,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Simulation horizon in periods.
    pub periods: f64,
    pub runs: usize,
    pub policy: PolicyKind,
    #[serde(rename = "loop")]
    pub loop_kind: LoopKind,
    /// Initial state; sampled on the `t = 0` ellipsoid boundary when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: None,
            alpha0: AlphaSpec::Constant(1.0),
            seed: 0,
            out: None,
            periods: 3.0,
            runs: 1,
            policy: PolicyKind::default(),
            loop_kind: LoopKind::default(),
            x0: None,
        }
    }
}

type MatrixTable = BTreeMap<String, FourierEntry>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<SystemSection>,
    #[serde(default)]
    matrices: BTreeMap<String, MatrixTable>,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    run: RunSection,
}

/// A validated configuration. `plant` is `None` only for the built-in
/// example, which supplies its own.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub plant: Option<LtvPlant>,
    /// Observer error weight `C_w` (`[matrices.Cw]`).
    pub error_weight: Option<PeriodicMatrixSignal>,
    pub solver: SolverSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Configuration of the built-in example with default knobs.
    pub fn example() -> Self {
        Self {
            mode: Mode::Example,
            plant: None,
            error_weight: None,
            solver: SolverSection::default(),
            run: RunSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        if s.grid < MIN_NODES {
            return Err(Error::Config(format!(
                "grid must be at least {MIN_NODES}, got {}",
                s.grid
            )));
        }
        if s.substeps == 0 {
            return Err(Error::Config("substeps must be positive".into()));
        }
        if !(s.tol > 0.0 && s.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                s.tol
            )));
        }
        if s.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if !(self.run.periods > 0.0 && self.run.periods.is_finite()) {
            return Err(Error::Config(format!(
                "run.periods must be positive, got {}",
                self.run.periods
            )));
        }
        let Some(plant) = &self.plant else {
            return if self.mode == Mode::Example {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "mode {} needs a [system] section",
                    self.mode.as_str()
                )))
            };
        };
        let nodes = s.grid;
        let missing = |e: Error| match e {
            Error::InvalidInput(m) => Error::Config(m),
            e => e,
        };
        match self.mode {
            Mode::Analyze => {
                if plant.c2.is_none() {
                    return Err(Error::Config("missing matrix C2 (or C)".into()));
                }
            }
            Mode::Baseline => {
                plant
                    .validate_for(DesignMode::OutputFeedback, nodes)
                    .map_err(missing)?;
            }
            Mode::Simulate => {
                let mode = match self.run.loop_kind {
                    LoopKind::Open => None,
                    LoopKind::StateFeedback => Some(DesignMode::StateFeedback),
                    LoopKind::Observer => Some(DesignMode::Observer),
                    LoopKind::OutputFeedback | LoopKind::Baseline => {
                        Some(DesignMode::OutputFeedback)
                    }
                };
                match mode {
                    Some(m) => plant.validate_for(m, nodes).map_err(missing)?,
                    None if plant.c2.is_none() => {
                        return Err(Error::Config("missing matrix C2 (or C)".into()))
                    }
                    None => {}
                }
                if let Some(x0) = &self.run.x0 {
                    let n = if matches!(
                        self.run.loop_kind,
                        LoopKind::OutputFeedback | LoopKind::Baseline
                    ) {
                        2 * plant.n()
                    } else {
                        plant.n()
                    };
                    if x0.len() != n {
                        return Err(Error::Config(format!(
                            "run.x0 has length {}, the closed loop has {n} states",
                            x0.len()
                        )));
                    }
                }
            }
            Mode::Example => {}
            m => {
                plant
                    .validate_for(m.design().unwrap(), nodes)
                    .map_err(missing)?;
            }
        }
        Ok(())
    }
}

fn parse_index(key: &str, name: &str) -> Result<(usize, usize)> {
    let bad = || {
        Error::Config(format!(
            "matrix {name}: entry key {key:?} is not \"row,col\""
        ))
    };
    let (r, c) = key.split_once(',').ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let c: usize = c.trim().parse().map_err(|_| bad())?;
    if r == 0 || c == 0 {
        return Err(Error::Config(format!(
            "matrix {name}: entry {key:?} is not one-based"
        )));
    }
    Ok((r - 1, c - 1))
}

fn build_matrix(
    name: &str,
    table: &MatrixTable,
    rows: usize,
    cols: usize,
    period: f64,
) -> Result<PeriodicMatrixSignal> {
    let mut m = PeriodicMatrixSignal::zeros(rows, cols, period);
    for (key, entry) in table {
        let (r, c) = parse_index(key, name)?;
        if r >= rows || c >= cols {
            return Err(Error::Config(format!(
                "matrix {name} is {rows}x{cols}, entry {key:?} is out of range"
            )));
        }
        m.set_entry(r, c, entry.clone())
            .map_err(|e| Error::Config(format!("matrix {name}, entry {key:?}: {e}")))?;
    }
    Ok(m)
}

fn plant_from(
    system: &SystemSection,
    mut matrices: BTreeMap<String, MatrixTable>,
) -> Result<(LtvPlant, Option<PeriodicMatrixSignal>)> {
    for (alias, name) in [("B", "B1"), ("C", "C2")] {
        if let Some(t) = matrices.remove(alias) {
            if matrices.insert(name.into(), t).is_some() {
                return Err(Error::Config(format!("both {alias} and {name} given")));
            }
        }
    }
    let SystemSection {
        period,
        n,
        m_w,
        m_u,
        p_y,
        p_z,
    } = *system;
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Config(format!(
            "period must be positive, got {period}"
        )));
    }
    if n == 0 || m_w == 0 {
        return Err(Error::Config("n and m_w must be positive".into()));
    }
    let mut take = |name: &str, rows: usize, cols: usize| -> Result<Option<PeriodicMatrixSignal>> {
        matrices
            .remove(name)
            .map(|t| build_matrix(name, &t, rows, cols, period))
            .transpose()
    };
    let a = take("A", n, n)?.ok_or_else(|| Error::Config("missing matrix A".into()))?;
    let b1 = take("B1", n, m_w)?.ok_or_else(|| Error::Config("missing matrix B1 (or B)".into()))?;
    let c2 = p_z.map(|p| take("C2", p, n)).transpose()?.flatten();
    let b2 = m_u.map(|m| take("B2", n, m)).transpose()?.flatten();
    let d2 = match (p_z, m_u) {
        (Some(p), Some(m)) => take("D2", p, m)?,
        _ => None,
    };
    let c1 = p_y.map(|p| take("C1", p, n)).transpose()?.flatten();
    let d1 = p_y.map(|p| take("D1", p, m_w)).transpose()?.flatten();
    let cw = matrices
        .remove("Cw")
        .map(|t| {
            let rows = t
                .keys()
                .map(|k| parse_index(k, "Cw").map(|(r, _)| r + 1))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(1);
            build_matrix("Cw", &t, rows, n, period)
        })
        .transpose()?;
    if let Some(name) = matrices.keys().next() {
        return Err(Error::Config(format!(
            "matrix {name} is unknown or its dimension is not declared in [system]"
        )));
    }

    let mut plant = LtvPlant::new(a, b1)?;
    plant.c2 = c2;
    if let Some(b2) = b2 {
        let c2 = plant
            .c2
            .take()
            .ok_or_else(|| Error::Config("missing matrix C2 (or C)".into()))?;
        let d2 = d2.unwrap_or_else(|| PeriodicMatrixSignal::zeros(c2.rows(), b2.cols(), period));
        plant = plant.with_control(b2, c2, d2)?;
    }
    if let Some(c1) = c1 {
        let d1 = d1.unwrap_or_else(|| PeriodicMatrixSignal::zeros(c1.rows(), m_w, period));
        plant = plant.with_measurement(c1, d1)?;
    }
    Ok((plant, cw))
}

/// Parses and validates a configuration string.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mode = raw.run.mode.unwrap_or(Mode::Analyze);
    let (plant, error_weight) = match &raw.system {
        Some(system) => {
            let (p, cw) = plant_from(system, raw.matrices)?;
            (Some(p), cw)
        }
        None if !raw.matrices.is_empty() => {
            return Err(Error::Config("[matrices] given without [system]".into()))
        }
        None => (None, None),
    };
    let config = RunConfig {
        mode,
        plant,
        error_weight,
        solver: raw.solver,
        run: raw.run,
    };
    config.validate()?;
    Ok(config)
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })
}
