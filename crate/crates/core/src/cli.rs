//! Command pipelines and result files.
//!
//! [`run`] computes everything in memory and returns a [`ResultBundle`];
//! [`emit`] writes the bundle. Nothing touches the output directory before
//! the computation has finished.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{LoopKind, Mode, PolicyKind, RunConfig};
use crate::ellipsoid::{optimize_alpha_analysis, size_primal, AlphaIterationHistory, AlphaOptions};
use crate::error::{Error, Result};
use crate::lyapunov::PeriodicLyapunovSolution;
use crate::ode::OdeSettings;
use crate::riccati::RiccatiOptions;
use crate::scenario::{gear_alpha_high, gear_alpha_low, gear_pair_plant, GEAR_PERIOD};
use crate::signal::{AlphaProfile, GridTrajectory, MatrixFunction, PeriodicMatrixSignal};
use crate::simulate::{boundary_state, ellipsoid_boundary_2d, simulate_closed_loop, SimulationRun};
use crate::synthesis::{
    evaluate_fixed_controller, lqr_kalman_baseline, optimize_controller, DesignMode, DesignOptions,
    GainSchedule, LtvPlant, SynthesisReport,
};

/// Boundary points per ellipsoid section.
pub const SECTION_POINTS: usize = 200;

/// Starting constant `α` for the baseline evaluation in the example.
const EXAMPLE_BASELINE_ALPHA0: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub converged: bool,
    pub size: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub wall_time_s: f64,
    pub nodes: usize,
    pub substeps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_size: Option<f64>,
    /// Spectral radius of the unshifted closed-loop monodromy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monodromy_radius: Option<f64>,
    /// Largest `xᵀP⁻¹x` over all simulated samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_level: Option<f64>,
    /// Example only: results of the second starting profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_start: Option<SecondStart>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SecondStart {
    pub converged: bool,
    pub size: f64,
    pub iterations: usize,
    pub stationarity: f64,
    /// `sup_t |α₁(t) − α₂(t)|` between the two final profiles.
    pub alpha_sup_difference: f64,
}

/// A CSV table; every cell is a number, empty cells are `NaN`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(file: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            file: file.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// The ellipsoid behind `summary.size`, kept so the size can be recomputed.
pub struct SizeSource {
    pub p: PeriodicLyapunovSolution,
    pub c: Box<dyn MatrixFunction + Send>,
}

pub struct ResultBundle {
    pub summary: Summary,
    pub tables: Vec<Table>,
    pub size_source: Option<SizeSource>,
}

impl ResultBundle {
    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }

    /// Size recomputed from the stored `P` trajectory.
    pub fn recompute_size(&self) -> Option<Result<f64>> {
        self.size_source
            .as_ref()
            .map(|s| size_primal(s.c.as_ref(), &s.p))
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            String::new()
        } else {
            format!("{x}")
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

fn format_cell(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn entry_names(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{prefix}_{}_{}", i + 1, j + 1)))
        .collect()
}

fn alpha_history_table(histories: &[(&str, &AlphaIterationHistory)]) -> Table {
    let mut columns = vec!["t".to_string()];
    for (label, h) in histories {
        columns.extend((0..h.iterates.len()).map(|k| format!("{label}{k}")));
    }
    let mut table = Table::new("alpha_history.csv", columns);
    let first = &histories[0].1.iterates[0];
    for i in 0..first.nodes() {
        let mut row = vec![first.node_time(i)];
        for (_, h) in histories {
            row.extend(h.iterates.iter().map(|a| a.value(i)));
        }
        table.rows.push(row);
    }
    table
}

fn size_history_table(
    histories: &[(&str, &AlphaIterationHistory)],
    baseline: Option<f64>,
) -> Table {
    let mut columns = vec!["iteration".to_string()];
    columns.extend(histories.iter().map(|(label, _)| {
        if histories.len() == 1 {
            "size".to_string()
        } else {
            label.trim_end_matches('_').to_string()
        }
    }));
    if baseline.is_some() {
        columns.push("baseline".into());
    }
    let mut table = Table::new("size_history.csv", columns);
    let len = histories
        .iter()
        .map(|(_, h)| h.sizes.len())
        .max()
        .unwrap_or(0);
    for k in 0..len {
        let mut row = vec![k as f64];
        row.extend(
            histories
                .iter()
                .map(|(_, h)| h.sizes.get(k).copied().unwrap_or(f64::NAN)),
        );
        row.extend(baseline);
        table.rows.push(row);
    }
    table
}

fn solution_table(alpha: &AlphaProfile, p: &GridTrajectory, q: Option<&GridTrajectory>) -> Table {
    let (n, _) = p.shape();
    let mut columns = vec!["t".to_string(), "alpha".to_string()];
    columns.extend(entry_names("P", n, n));
    if q.is_some() {
        columns.extend(entry_names("Q", n, n));
    }
    let mut table = Table::new("solution.csv", columns);
    for i in 0..p.nodes() {
        let mut row = vec![p.node_time(i), alpha.value(i)];
        row.extend(p.value(i).transpose().iter());
        if let Some(q) = q {
            row.extend(q.value(i).transpose().iter());
        }
        table.rows.push(row);
    }
    table
}

fn gains_table(gains: &GainSchedule, alpha: &AlphaProfile) -> Table {
    let mut columns = vec!["t".to_string()];
    if let Some(k) = &gains.k {
        columns.extend(entry_names("K", k.shape().0, k.shape().1));
    }
    if let Some(l) = &gains.l {
        columns.extend(entry_names("L", l.shape().0, l.shape().1));
    }
    columns.push("alpha".into());
    let mut table = Table::new("gains.csv", columns);
    for i in 0..alpha.nodes() {
        let mut row = vec![alpha.node_time(i)];
        for g in [&gains.k, &gains.l].into_iter().flatten() {
            row.extend(g.value(i).transpose().iter());
        }
        row.push(alpha.value(i));
        table.rows.push(row);
    }
    table
}

/// Sections at `T/3`, `2T/3`, `T` when the regulated output is planar.
fn section_tables(p: &GridTrajectory, c: &dyn MatrixFunction) -> Result<Vec<Table>> {
    if c.shape().0 != 2 {
        return Ok(Vec::new());
    }
    let period = p.period();
    (1..=3)
        .map(|k| {
            let t = k as f64 * period / 3.0;
            let s = ellipsoid_boundary_2d(p, c, t, SECTION_POINTS)?;
            let mut table = Table::new(
                format!("ellipsoid_t{k}.csv"),
                vec!["t".into(), "z_1".into(), "z_2".into()],
            );
            table.rows = s.boundary.iter().map(|z| vec![t, z[0], z[1]]).collect();
            Ok(table)
        })
        .collect()
}

fn trajectory_table(name: &str, run: &SimulationRun) -> Table {
    let n = run.states.first().map_or(0, |x| x.len());
    let k = run.outputs.first().map_or(0, |z| z.len());
    let m = run.disturbances.first().map_or(0, |w| w.len());
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=n).map(|i| format!("x_{i}")));
    columns.extend((1..=k).map(|i| format!("z_{i}")));
    columns.extend((1..=m).map(|i| format!("w_{i}")));
    let with_levels = !run.levels.is_empty();
    if with_levels {
        columns.push("V".into());
    }
    let mut table = Table::new(format!("trajectory_{name}.csv"), columns);
    for i in 0..run.len() {
        let mut row = vec![run.times[i]];
        row.extend(run.states[i].iter());
        row.extend(run.outputs[i].iter());
        row.extend(run.disturbances[i].iter());
        if with_levels {
            row.push(run.levels[i]);
        }
        table.rows.push(row);
    }
    table
}

fn settings(config: &RunConfig) -> Result<OdeSettings> {
    OdeSettings::new(config.solver.grid, config.solver.substeps)
        .map_err(|e| Error::Config(e.to_string()))
}

fn alpha_options(config: &RunConfig, ode: OdeSettings) -> AlphaOptions {
    AlphaOptions {
        tol: config.solver.tol,
        max_iter: config.solver.max_iter,
        ode,
        relaxation: config.solver.relaxation.into(),
    }
}

fn design_options(config: &RunConfig, ode: OdeSettings) -> DesignOptions {
    DesignOptions {
        tol: config.solver.tol,
        max_iter: config.solver.max_iter,
        riccati: RiccatiOptions::with_ode(ode),
        relaxation: config.solver.relaxation.into(),
    }
}

fn base_summary(config: &RunConfig, mode: Mode) -> Summary {
    Summary {
        mode: mode.as_str().into(),
        nodes: config.solver.grid,
        substeps: config.solver.substeps,
        seed: config.run.seed,
        ..Summary::default()
    }
}

fn fill_history(summary: &mut Summary, history: &AlphaIterationHistory, size: f64, stat: f64) {
    summary.converged = history.converged;
    summary.size = size;
    summary.iterations = history.sizes.len() - 1;
    summary.stationarity = stat;
}

/// `C_w` for observer design: `[matrices.Cw]`, else `C2`, else the identity.
fn observer_weight(config: &RunConfig, plant: &LtvPlant) -> PeriodicMatrixSignal {
    config
        .error_weight
        .clone()
        .or_else(|| plant.c2.clone())
        .unwrap_or_else(|| PeriodicMatrixSignal::identity(plant.n(), plant.period()))
}

/// A closed loop with its optimal ellipsoid, for simulation.
struct Loop {
    a: Box<dyn MatrixFunction + Send>,
    b: Box<dyn MatrixFunction + Send>,
    c: Box<dyn MatrixFunction + Send>,
    p: PeriodicLyapunovSolution,
}

fn design_bundle(
    config: &RunConfig,
    plant: &LtvPlant,
    mode: DesignMode,
) -> Result<(SynthesisReport, Vec<Table>)> {
    let ode = settings(config)?;
    let alpha0 = config.run.alpha0.profile(plant.period(), ode.nodes)?;
    let weight = (mode == DesignMode::Observer).then(|| observer_weight(config, plant));
    let report = optimize_controller(
        plant,
        mode,
        &alpha0,
        weight.as_ref(),
        &design_options(config, ode),
    )?;
    let hist = [("iter_", &report.history)];
    let mut tables = vec![
        alpha_history_table(&hist),
        size_history_table(&hist, None),
        gains_table(&report.gains, &report.alpha),
        solution_table(
            &report.alpha,
            &report.p_cl.trajectory,
            Some(&report.q_cl.trajectory),
        ),
    ];
    tables.extend(section_tables(
        &report.p_cl.trajectory,
        &report.closed_loop.c,
    )?);
    Ok((report, tables))
}

fn run_analyze(config: &RunConfig, plant: &LtvPlant) -> Result<ResultBundle> {
    let ode = settings(config)?;
    let alpha0 = config.run.alpha0.profile(plant.period(), ode.nodes)?;
    let c = plant.c2.as_ref().unwrap();
    let opt =
        optimize_alpha_analysis(&plant.a, &plant.b1, c, &alpha0, &alpha_options(config, ode))?;
    let mut summary = base_summary(config, Mode::Analyze);
    fill_history(&mut summary, &opt.history, opt.size, opt.stationarity);
    let hist = [("iter_", &opt.history)];
    let mut tables = vec![
        alpha_history_table(&hist),
        size_history_table(&hist, None),
        solution_table(&opt.alpha, &opt.p.trajectory, Some(&opt.q.trajectory)),
    ];
    tables.extend(section_tables(&opt.p.trajectory, c)?);
    Ok(ResultBundle {
        summary,
        tables,
        size_source: Some(SizeSource {
            p: opt.p,
            c: Box::new(c.clone()),
        }),
    })
}

fn run_design(config: &RunConfig, plant: &LtvPlant, mode: Mode) -> Result<ResultBundle> {
    let (report, tables) = design_bundle(config, plant, mode.design().unwrap())?;
    let mut summary = base_summary(config, mode);
    fill_history(
        &mut summary,
        &report.history,
        report.size,
        report.stationarity,
    );
    summary.monodromy_radius = Some(report.closed_loop.monodromy_radius(&settings(config)?)?);
    Ok(ResultBundle {
        summary,
        tables,
        size_source: Some(SizeSource {
            p: report.p_cl,
            c: Box::new(report.closed_loop.c),
        }),
    })
}

fn run_baseline(config: &RunConfig, plant: &LtvPlant) -> Result<ResultBundle> {
    let ode = settings(config)?;
    let gains = lqr_kalman_baseline(plant, &RiccatiOptions::with_ode(ode))?;
    let alpha0 = config.run.alpha0.profile(plant.period(), ode.nodes)?;
    let ev = evaluate_fixed_controller(plant, &gains, &alpha0, &alpha_options(config, ode))?;
    let opt = &ev.analysis;
    let mut summary = base_summary(config, Mode::Baseline);
    fill_history(&mut summary, &opt.history, opt.size, opt.stationarity);
    summary.monodromy_radius = Some(ev.monodromy_radius);
    summary.baseline_size = Some(ev.size);
    let hist = [("iter_", &opt.history)];
    let mut tables = vec![
        alpha_history_table(&hist),
        size_history_table(&hist, None),
        gains_table(&gains, &opt.alpha),
        solution_table(&opt.alpha, &opt.p.trajectory, Some(&opt.q.trajectory)),
    ];
    tables.extend(section_tables(&opt.p.trajectory, &ev.closed_loop.c)?);
    Ok(ResultBundle {
        summary,
        tables,
        size_source: Some(SizeSource {
            p: ev.analysis.p,
            c: Box::new(ev.closed_loop.c),
        }),
    })
}

fn simulate_runs(
    config: &RunConfig,
    lp: &Loop,
    policy: PolicyKind,
    runs: usize,
    label: &str,
) -> Result<(Vec<Table>, f64)> {
    let ode = settings(config)?;
    let horizon = config.run.periods * lp.p.trajectory.period();
    let mut tables = Vec::new();
    let mut max_level = 0.0_f64;
    for i in 0..runs {
        let seed = config.run.seed.wrapping_add(i as u64);
        let x0 = match &config.run.x0 {
            Some(x0) => DVector::from_column_slice(x0),
            None => boundary_state(
                lp.p.trajectory.value(0),
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?,
        };
        let run = simulate_closed_loop(
            lp.a.as_ref(),
            lp.b.as_ref(),
            lp.c.as_ref(),
            &policy.policy(seed),
            &x0,
            horizon,
            &ode,
            Some(&lp.p.trajectory),
        )?;
        max_level = max_level.max(run.max_level().unwrap_or(0.0));
        let name = if runs == 1 {
            label.to_string()
        } else {
            format!("{label}_{i}")
        };
        tables.push(trajectory_table(&name, &run));
    }
    Ok((tables, max_level))
}

fn run_simulate(config: &RunConfig, plant: &LtvPlant) -> Result<ResultBundle> {
    let ode = settings(config)?;
    let mut summary = base_summary(config, Mode::Simulate);
    let mut tables;
    let lp = match config.run.loop_kind {
        LoopKind::Open => {
            let alpha0 = config.run.alpha0.profile(plant.period(), ode.nodes)?;
            let c = plant.c2.as_ref().unwrap();
            let opt = optimize_alpha_analysis(
                &plant.a,
                &plant.b1,
                c,
                &alpha0,
                &alpha_options(config, ode),
            )?;
            fill_history(&mut summary, &opt.history, opt.size, opt.stationarity);
            tables = section_tables(&opt.p.trajectory, c)?;
            Loop {
                a: Box::new(plant.a.clone()),
                b: Box::new(plant.b1.clone()),
                c: Box::new(c.clone()),
                p: opt.p,
            }
        }
        LoopKind::Baseline => {
            let gains = lqr_kalman_baseline(plant, &RiccatiOptions::with_ode(ode))?;
            let alpha0 = config.run.alpha0.profile(plant.period(), ode.nodes)?;
            let ev =
                evaluate_fixed_controller(plant, &gains, &alpha0, &alpha_options(config, ode))?;
            let opt = ev.analysis;
            fill_history(&mut summary, &opt.history, opt.size, opt.stationarity);
            summary.monodromy_radius = Some(ev.monodromy_radius);
            tables = section_tables(&opt.p.trajectory, &ev.closed_loop.c)?;
            let cl = ev.closed_loop;
            Loop {
                a: Box::new(cl.a),
                b: Box::new(cl.b),
                c: Box::new(cl.c),
                p: opt.p,
            }
        }
        kind => {
            let mode = match kind {
                LoopKind::StateFeedback => DesignMode::StateFeedback,
                LoopKind::Observer => DesignMode::Observer,
                _ => DesignMode::OutputFeedback,
            };
            let (report, t) = design_bundle(config, plant, mode)?;
            fill_history(
                &mut summary,
                &report.history,
                report.size,
                report.stationarity,
            );
            tables = t
                .into_iter()
                .filter(|t| t.file.starts_with("ellipsoid_t"))
                .collect();
            let cl = report.closed_loop;
            Loop {
                a: Box::new(cl.a),
                b: Box::new(cl.b),
                c: Box::new(cl.c),
                p: report.p_cl,
            }
        }
    };
    let label = match config.run.policy {
        PolicyKind::WorstCase => "worst_case",
        PolicyKind::RandomExtreme => "random_extreme",
        PolicyKind::Harmonic => "harmonic",
        PolicyKind::Zero => "zero",
    };
    let (runs, max_level) = simulate_runs(config, &lp, config.run.policy, config.run.runs, label)?;
    tables.extend(runs);
    summary.max_level = Some(max_level);
    Ok(ResultBundle {
        summary,
        tables,
        size_source: Some(SizeSource { p: lp.p, c: lp.c }),
    })
}

/// The gear-pair scenario: output-feedback design from both starting
/// profiles, the LQR–Kalman baseline, three ellipsoid sections of the
/// optimal loop and two simulated trajectories.
fn run_example(config: &RunConfig) -> Result<ResultBundle> {
    let ode = settings(config)?;
    let nodes = ode.nodes;
    let plant = gear_pair_plant()?;
    let options = design_options(config, ode);
    let (low, high) = rayon::join(
        || {
            optimize_controller(
                &plant,
                DesignMode::OutputFeedback,
                &gear_alpha_low(nodes)?,
                None,
                &options,
            )
        },
        || {
            optimize_controller(
                &plant,
                DesignMode::OutputFeedback,
                &gear_alpha_high(nodes)?,
                None,
                &options,
            )
        },
    );
    let (low, high) = (low?, high?);
    let gains = lqr_kalman_baseline(&plant, &options.riccati)?;
    let baseline = evaluate_fixed_controller(
        &plant,
        &gains,
        &AlphaProfile::constant(EXAMPLE_BASELINE_ALPHA0, GEAR_PERIOD, nodes)?,
        &alpha_options(config, ode),
    )?;

    let mut summary = base_summary(config, Mode::Example);
    fill_history(&mut summary, &low.history, low.size, low.stationarity);
    summary.baseline_size = Some(baseline.size);
    summary.monodromy_radius = Some(low.closed_loop.monodromy_radius(&ode)?);
    summary.second_start = Some(SecondStart {
        converged: high.converged,
        size: high.size,
        iterations: high.history.sizes.len() - 1,
        stationarity: high.stationarity,
        alpha_sup_difference: low.alpha.sup_distance(&high.alpha),
    });

    let hist = [("low_", &low.history), ("high_", &high.history)];
    let mut tables = vec![
        alpha_history_table(&hist),
        size_history_table(&hist, Some(baseline.size)),
        gains_table(&low.gains, &low.alpha),
        solution_table(&low.alpha, &low.p_cl.trajectory, Some(&low.q_cl.trajectory)),
    ];
    tables.extend(section_tables(&low.p_cl.trajectory, &low.closed_loop.c)?);
    let cl = low.closed_loop;
    let lp = Loop {
        a: Box::new(cl.a),
        b: Box::new(cl.b),
        c: Box::new(cl.c),
        p: low.p_cl,
    };
    let mut max_level = 0.0_f64;
    for policy in [PolicyKind::WorstCase, PolicyKind::RandomExtreme] {
        let label = match policy {
            PolicyKind::WorstCase => "worst_case",
            _ => "random_extreme",
        };
        let (t, level) = simulate_runs(config, &lp, policy, 1, label)?;
        tables.extend(t);
        max_level = max_level.max(level);
    }
    summary.max_level = Some(max_level);
    Ok(ResultBundle {
        summary,
        tables,
        size_source: Some(SizeSource { p: lp.p, c: lp.c }),
    })
}

/// Runs the configured pipeline.
pub fn run(config: &RunConfig) -> Result<ResultBundle> {
    config.validate()?;
    let start = Instant::now();
    let plant = config.plant.as_ref();
    let need_plant = || {
        plant.ok_or_else(|| {
            Error::Config(format!(
                "mode {} needs a [system] section",
                config.mode.as_str()
            ))
        })
    };
    let mut bundle = match config.mode {
        Mode::Analyze => run_analyze(config, need_plant()?),
        Mode::SynthSf | Mode::SynthObs | Mode::SynthOf => {
            run_design(config, need_plant()?, config.mode)
        }
        Mode::Baseline => run_baseline(config, need_plant()?),
        Mode::Simulate => run_simulate(config, need_plant()?),
        Mode::Example => run_example(config),
    }?;
    bundle.summary.wall_time_s = start.elapsed().as_secs_f64();
    Ok(bundle)
}

fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(&table.columns).map_err(csv_error)?;
    let time_first = table.columns.first().is_some_and(|c| c == "t");
    for row in &table.rows {
        let cells = row.iter().enumerate().map(|(j, &x)| {
            if j == 0 && time_first {
                format_sig(x, 9)
            } else {
                format_cell(x)
            }
        });
        w.write_record(cells).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        kind => Error::Io(std::io::Error::other(format!("{kind:?}"))),
    }
}

/// Writes `summary.json` and every table into `dir`.
///
/// Files are staged in a sibling directory and moved into place one by one
/// once all of them have been written.
pub fn emit(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let parent = dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let result = (|| -> Result<Vec<PathBuf>> {
        let json = serde_json::to_string_pretty(&bundle.summary)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        fs::write(staging.join("summary.json"), json + "\n")?;
        let mut files = vec!["summary.json".to_string()];
        for table in &bundle.tables {
            write_table(table, &staging.join(&table.file))?;
            files.push(table.file.clone());
        }
        fs::create_dir_all(dir)?;
        files
            .iter()
            .map(|f| {
                let target = dir.join(f);
                fs::rename(staging.join(f), &target)?;
                Ok(target)
            })
            .collect()
    })();
    let _ = fs::remove_dir_all(&staging);
    result
}

/// Reads a `summary.json` back.
pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
