//! Batch front-end: subcommands, result bundles and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::decomposition::{
    decompose, decompose_plate, decompose_rod, read_field_file, scaling_row, split_centerline, write_field_file, DecompositionReport,
    FieldKind, SampleGrid, SampledField3D, ScalingRow,
};
use crate::error::{Error, Result};
use crate::fem::{EnergyParts, LimitState, Model};
use crate::forces::{check_admissibility, AdmissibilityReport};
use crate::geometry::thin_quadrature_with;
use crate::limit_model::{constraint_residual, recover_w3, LimitFields, LimitQuadrature};
use crate::recovery3d::{build_recovery, delta_sweep, smooth_state, SweepRow};
use crate::solver::{minimize, multi_start, solve, SolveReport};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NONPHYSICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "platerod", version, about = "Plate-rod junction limit model solver")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryFlag {
    Plate,
    Rod,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the limit energy.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the random multi-start initial states.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve (or load a state), smooth it and evaluate the rescaled 3D energies.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decompose a sampled 3D field.
    Decompose {
        /// Field file in the columnar text format.
        #[arg(long)]
        field: PathBuf,
        /// Expected geometry of the field.
        #[arg(long, value_enum)]
        geometry: Option<GeometryFlag>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the small-data admissibility of the configured loads.
    CheckForces {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// |d𝒲₃/dx₃ + ½|𝒲′|²| at the rod quadrature points and 𝒲₃(0) − 𝒰₃(0,0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub ode_residual: f64,
    pub junction_defect: f64,
}

pub fn constraint_check(model: &Model, state: &LimitState) -> ConstraintCheck {
    let f = model.fields(state);
    let q = LimitQuadrature::from_model(model);
    let ode_residual =
        q.rod.iter().map(|(x3, _)| constraint_residual(&f, &q.rod_breaks, q.rod_order, *x3).abs()).fold(0.0, f64::max);
    ConstraintCheck { ode_residual, junction_defect: recover_w3(&f, &q.rod_breaks, q.rod_order, 0.0) - f.u3_origin() }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiStartSummary {
    pub seed: u64,
    pub starts: usize,
    pub energies: Vec<f64>,
    pub converged: Vec<bool>,
    /// Index of the retained start, or `None` when the configured initial state won.
    pub chosen: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    #[serde(flatten)]
    pub row: SweepRow,
    pub nonphysical: bool,
}

/// Everything one command produced. Wall-clock timings go to a separate
/// file so that this bundle is reproducible byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<AdmissibilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyParts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_start: Option<MultiStartSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Vec<ScalingRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionReport>,
}

impl ResultBundle {
    fn new(command: &'static str, cfg: Option<&RunConfig>) -> Self {
        Self {
            tool: "platerod",
            version: VERSION,
            command,
            config: cfg.map(|c| serde_json::to_value(c).expect("config serializes")),
            admissibility: None,
            solve: None,
            energy: None,
            constraint: None,
            multi_start: None,
            sweep: None,
            scaling: None,
            decomposition: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// Exit code implied by the contents.
    pub fn exit_code(&self) -> i32 {
        if self.sweep.as_ref().is_some_and(|rows| rows.iter().any(|r| r.nonphysical)) {
            EXIT_NONPHYSICAL
        } else if self.solve.as_ref().is_some_and(|r| !r.converged()) {
            EXIT_NOT_CONVERGED
        } else {
            EXIT_OK
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub phases: Vec<(String, f64)>,
    pub total: f64,
}

impl Timings {
    fn record<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        let s = t.elapsed().as_secs_f64();
        self.phases.push((name.to_string(), s));
        self.total += s;
        out
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Nonphysical { .. } => EXIT_NONPHYSICAL,
        _ => EXIT_CONFIG,
    }
}

/// Solves the configured problem: the configured initial state, plus random
/// starts when requested, keeping the lowest converged energy.
fn solve_config(model: &Model, cfg: &RunConfig, seed: Option<u64>, bundle: &mut ResultBundle) -> Result<SolveReport> {
    let base = solve(model, &cfg.solver)?;
    let starts = match (cfg.multi_start.starts, seed) {
        (0, Some(_)) => 4,
        (k, _) => k,
    };
    if starts == 0 {
        return Ok(base);
    }
    let seed = seed.unwrap_or(0);
    let ms = multi_start(model, &cfg.solver, starts, cfg.multi_start.amplitude, seed)?;
    let better = ms.best.filter(|&i| !base.converged() || ms.reports[i].energy < base.energy);
    bundle.multi_start = Some(MultiStartSummary {
        seed,
        starts,
        energies: ms.reports.iter().map(|r| r.energy).collect(),
        converged: ms.reports.iter().map(SolveReport::converged).collect(),
        chosen: better,
    });
    Ok(match better {
        Some(i) => ms.reports[i].clone(),
        None => base,
    })
}

fn admissibility(model: &Model, cfg: &RunConfig) -> Result<AdmissibilityReport> {
    let r = check_admissibility(&model.forces, &model.plate.domain, model.rod.length, cfg.thresholds()?)?;
    if r.verdict != crate::forces::Verdict::Admissible {
        log::warn!("loads are {:?}: |f_p| = {:.3e}, |f_r3| = {:.3e}", r.verdict, r.fp_norm, r.fr3_norm);
    }
    Ok(r)
}

pub fn cmd_solve(cfg: &RunConfig, seed: Option<u64>, timings: &mut Timings) -> Result<ResultBundle> {
    let mut b = ResultBundle::new("solve", Some(cfg));
    let model = timings.record("build", || cfg.build_model())?;
    b.admissibility = Some(admissibility(&model, cfg)?);
    let report = timings.record("solve", || solve_config(&model, cfg, seed, &mut b))?;
    log::info!("solve: {:?} after {} iterations, energy {:.12e}", report.status, report.iterations, report.energy);
    b.energy = Some(model.energy_parts(&report.state));
    b.constraint = Some(constraint_check(&model, &report.state));
    b.solve = Some(report);
    Ok(b)
}

/// Reads the state of a saved result bundle.
pub fn load_state(path: &Path, model: &Model) -> Result<LimitState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let state = v
        .pointer("/solve/state")
        .ok_or_else(|| Error::Config(format!("{}: no solve.state entry", path.display())))?;
    let s: LimitState =
        serde_json::from_value(state.clone()).map_err(|e| Error::Config(format!("{}: solve.state: {e}", path.display())))?;
    if s.values.len() != model.dofs.n_total() {
        return Err(Error::Config(format!(
            "{}: state has {} values, the configured mesh needs {}",
            path.display(),
            s.values.len(),
            model.dofs.n_total()
        )));
    }
    Ok(s)
}

pub fn cmd_sweep(cfg: &RunConfig, seed: Option<u64>, timings: &mut Timings) -> Result<ResultBundle> {
    let mut b = ResultBundle::new("sweep", Some(cfg));
    let model = timings.record("build", || cfg.build_model())?;
    b.admissibility = Some(admissibility(&model, cfg)?);
    let report = match &cfg.sweep.state {
        Some(p) => {
            let s = load_state(&cfg.resolve(p), &model)?;
            minimize(&model, &s, &crate::solver::SolveOptions { max_iterations: 0, ..cfg.solver.clone() })?
        }
        None => timings.record("solve", || solve_config(&model, cfg, seed, &mut b))?,
    };
    let s = &cfg.sweep;
    let rows = timings.record("sweep", || delta_sweep(&model, &report.state, s.n, &s.deltas, &s.quadrature))?;
    b.scaling = Some(timings.record("scaling", || scaling_study(&model, &report.state, cfg))?);
    b.sweep = Some(rows.into_iter().map(|row| SweepRecord { nonphysical: !row.total.is_finite(), row }).collect());
    b.energy = Some(model.energy_parts(&report.state));
    b.constraint = Some(constraint_check(&model, &report.state));
    b.solve = Some(report);
    Ok(b)
}

/// 𝐆_s/δ^{5/2} on the plate and 𝐝/δ^{5/2} on the rod for each δ of the sweep.
pub fn scaling_study(model: &Model, state: &LimitState, cfg: &RunConfig) -> Result<Vec<ScalingRow>> {
    let s = &cfg.sweep;
    let fields = model.fields(state);
    let ss = smooth_state(&fields, s.n)?;
    let mut rows = Vec::new();
    for &d in &s.deltas {
        let rf = build_recovery(&ss, &model.plate.domain, model.rod.length, d, &model.material, &model.rod.nodes, s.quadrature.rotation_substeps)?;
        let q = thin_quadrature_with(&model.plate, &model.rod, d, &s.quadrature.thin_options(s.n))?;
        let axial: Vec<(f64, f64)> = q.axial.iter().filter(|a| a.active && a.x3 >= d).map(|a| (a.x3, a.weight)).collect();
        let plate: Vec<([f64; 2], f64)> = q.plate.clone();
        rows.push(scaling_row(&rf, &plate, s.quadrature.thickness_order, &axial, (s.quadrature.disc_radial, s.quadrature.disc_angular))?);
    }
    Ok(rows)
}

pub fn cmd_check_forces(cfg: &RunConfig) -> Result<ResultBundle> {
    let mut b = ResultBundle::new("check-forces", Some(cfg));
    let model = cfg.build_model()?;
    b.admissibility = Some(admissibility(&model, cfg)?);
    Ok(b)
}

/// Decomposes a field file; returns the bundle and the decomposed components.
pub fn cmd_decompose(field: &Path, geometry: Option<GeometryFlag>) -> Result<(ResultBundle, SampledField3D, Components)> {
    let f = read_field_file(field)?;
    let actual = match f.grid {
        SampleGrid::Plate { .. } => GeometryFlag::Plate,
        SampleGrid::Rod { .. } => GeometryFlag::Rod,
    };
    if let Some(g) = geometry {
        if g != actual {
            return Err(Error::FieldFormat { row: 1, msg: format!("field is a {actual:?} field, {g:?} was requested") });
        }
    }
    let mut b = ResultBundle::new("decompose", None);
    b.decomposition = Some(decompose(&f)?);
    let comps = components(&f)?;
    Ok((b, f, comps))
}

/// Component fields of a decomposition, as CSV text and the warping field.
pub struct Components {
    pub csv: String,
    pub warping: SampledField3D,
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn components(f: &SampledField3D) -> Result<Components> {
    match &f.grid {
        SampleGrid::Plate { columns, .. } => {
            let d = decompose_plate(f)?;
            let csv = csv_text(
                &["x1", "x2", "U1", "U2", "U3", "R1", "R2"],
                columns.iter().enumerate().map(|(k, c)| {
                    [c[0], c[1], d.mean[k][0], d.mean[k][1], d.mean[k][2], d.rotation[k][0], d.rotation[k][1]].map(num).to_vec()
                }),
            )?;
            Ok(Components { csv, warping: SampledField3D::new(FieldKind::Displacement, f.grid.clone(), d.warping)? })
        }
        SampleGrid::Rod { .. } => {
            let d = decompose_rod(f)?;
            let s = split_centerline(&d);
            let header = [
                "x3", "W1", "W2", "W3", "Q11", "Q12", "Q13", "Q21", "Q22", "Q23", "Q31", "Q32", "Q33", "Wm1", "Wm2", "Wm3", "Ws1", "Ws2", "Ws3",
            ];
            let csv = csv_text(
                &header,
                (0..d.sections.len()).map(|k| {
                    let mut r = vec![d.sections[k]];
                    r.extend(d.center[k].iter());
                    r.extend((0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| d.rotation[k][(i, j)]));
                    r.extend(s.main[k].iter());
                    r.extend(s.stretch[k].iter());
                    r.into_iter().map(num).collect()
                }),
            )?;
            Ok(Components { csv, warping: SampledField3D::new(FieldKind::Deformation, f.grid.clone(), d.warping)? })
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The δ-sweep table as CSV with shortest round-trip decimals.
pub fn sweep_csv(rows: &[SweepRecord]) -> Result<String> {
    csv_text(
        &["delta", "n", "elastic", "load", "total", "limit_energy", "gap", "min_det", "nonphysical"],
        rows.iter().map(|r| {
            let w = &r.row;
            let mut v = vec![num(w.delta), w.n.to_string()];
            v.extend([w.elastic, w.load, w.total, w.limit_energy, w.gap, w.min_det].map(num));
            v.push(r.nonphysical.to_string());
            v
        }),
    )
}

fn out_dir(out: &Option<PathBuf>, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.directory.as_ref().map(|d| c.resolve(d))))
        .unwrap_or_else(|| PathBuf::from("platerod-out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_bundle(dir: &Path, b: &ResultBundle, cfg: Option<&RunConfig>, timings: &Timings) -> Result<()> {
    let json = cfg.map_or(true, |c| c.wants(OutputFormat::Json));
    let csv = cfg.map_or(true, |c| c.wants(OutputFormat::Csv));
    if json {
        write_file(&dir.join("result.json"), &b.to_json())?;
    }
    if csv {
        if let Some(rows) = &b.sweep {
            write_file(&dir.join("sweep.csv"), &sweep_csv(rows)?)?;
        }
    }
    let t = serde_json::to_string_pretty(timings).expect("timings serialize");
    write_file(&dir.join("timings.json"), &t)
}

/// Runs one command, writes its outputs and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    let mut timings = Timings::default();
    match cmd {
        Command::Solve { config, out, seed } | Command::Sweep { config, out, seed } => {
            let cfg = RunConfig::from_file(config)?;
            let b = match cmd {
                Command::Solve { .. } => cmd_solve(&cfg, *seed, &mut timings)?,
                _ => cmd_sweep(&cfg, *seed, &mut timings)?,
            };
            let dir = out_dir(out, Some(&cfg))?;
            write_bundle(&dir, &b, Some(&cfg), &timings)?;
            if let Some(rows) = &b.sweep {
                for r in rows {
                    println!("delta {:?}  total {:.10e}  limit {:.10e}  gap {:.3e}", r.row.delta, r.row.total, r.row.limit_energy, r.row.gap);
                }
            }
            if let Some(r) = &b.solve {
                println!("status {:?}  energy {:.12e}  iterations {}", r.status, r.energy, r.iterations);
            }
            Ok(b.exit_code())
        }
        Command::CheckForces { config, out } => {
            let cfg = RunConfig::from_file(config)?;
            let b = cmd_check_forces(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&b.admissibility).expect("report serializes"));
            if out.is_some() {
                write_bundle(&out_dir(out, Some(&cfg))?, &b, Some(&cfg), &timings)?;
            }
            Ok(EXIT_OK)
        }
        Command::Decompose { field, geometry, out } => {
            let (b, _, comps) = timings.record("decompose", || cmd_decompose(field, *geometry))?;
            let dir = out_dir(out, None)?;
            write_bundle(&dir, &b, None, &timings)?;
            write_file(&dir.join("components.csv"), &comps.csv)?;
            write_field_file(&comps.warping, dir.join("warping.txt"))?;
            println!("{}", serde_json::to_string_pretty(&b.decomposition).expect("report serializes"));
            Ok(EXIT_OK)
        }
    }
}
