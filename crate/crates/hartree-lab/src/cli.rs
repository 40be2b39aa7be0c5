//! Command-line front end: configuration, experiment orchestration, and
//! report emission.
//!
//! A run is described by a TOML [`RunConfig`] (every table optional, unknown
//! keys rejected), overridden first by the `HARTREE_LAB_OUT` environment
//! variable (output directory only) and then by command-line flags. Each
//! subcommand maps onto one module pipeline, writes its artifacts into the
//! output directory, and finishes with a `manifest.json` listing every file
//! produced. Exit codes: 0 success, 2 validation/configuration failure,
//! 3 solver failure, 4 inconclusive or ambiguous results.
//!
//! Result artifacts are byte-deterministic for a fixed configuration: JSON
//! maps are emitted in sorted key order, floating-point reductions run in a
//! fixed order regardless of `--jobs`, and numbers are printed
//! shortest-roundtrip. (The manifest is excluded: it records wall time.)

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coulomb::newton_potential;
use crate::grid::{
    dirichlet_form, inner_w, make_grid, mass, radial_derivative, Dst1, RadialGrid, RadialProfile,
};
use crate::limits::{
    check_sweep_preconditions, critical_mass_estimate, fill_uniform_flags, h1_uniform_check,
    mu_bounds_check, richardson_gap, sweep_csv, sweep_point, BoundFlags, SweepPoint, SweepRecord,
};
use crate::linops::{
    assemble_lminus, assemble_sector_nr, assemble_sector_rel, kernel_count,
    nullspace_diagnostics, SpectralReport,
};
use crate::solve::{
    hartree_term, log_slope, nr_ground_at_mass, shoot_threshold, solve_nr_normalized, solve_rel,
    GroundState, Model, ShootClass, ShootParams,
};
use crate::specfun::{bessel_i_half, heat_kernel_sector};
use crate::testsupport::xorshift_vec;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Grid table: node count and box radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub r_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 1000, r_max: 30.0 }
    }
}

/// Model table: mass parameter, optional light speed, and the target — an L²
/// mass `N` or a nonrelativistic multiplier, but not both.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            m: 1.0,
            c: None,
            mass: None,
            multiplier: None,
        }
    }
}

/// Solver table. `max_iter` is recorded with the run for reproducibility;
/// the iteration caps of the solvers themselves are fixed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

/// Spectrum table: sector range, eigenpairs per sector, kernel-counting
/// radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub l_max: usize,
    pub k_eigs: usize,
    pub kernel_radius: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            l_max: 4,
            k_eigs: 8,
            kernel_radius: 1e-2,
        }
    }
}

/// Sweep table: the list of light speeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub c_list: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            c_list: vec![5.0, 10.0, 20.0, 40.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Output table: directory and formats.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "hartree-lab-out".into(),
            formats: vec![OutputFormat::Json, OutputFormat::Csv],
        }
    }
}

/// Complete run description. Defaults are chosen so that every subcommand
/// works with an empty configuration.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub spectrum: SpectrumConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

/// Validate every numeric field against the preconditions of the module it
/// feeds, before any dispatch.
pub fn validate_config(cfg: &RunConfig) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(msg));
    if cfg.grid.n < 16 {
        return bad(format!("grid.n must be at least 16, got {}", cfg.grid.n));
    }
    if !(cfg.grid.r_max > 0.0 && cfg.grid.r_max.is_finite()) {
        return bad(format!("grid.r_max must be positive, got {}", cfg.grid.r_max));
    }
    if !(1e-14..=1e-4).contains(&cfg.solver.tol) {
        return bad(format!(
            "solver.tol must lie in [1e-14, 1e-4], got {}",
            cfg.solver.tol
        ));
    }
    if cfg.solver.max_iter == 0 {
        return bad("solver.max_iter must be positive".into());
    }
    if !(cfg.model.m > 0.0) {
        return bad(format!("model.m must be positive, got {}", cfg.model.m));
    }
    if let Some(c) = cfg.model.c {
        if !(c > 0.0) {
            return bad(format!("model.c must be positive, got {c}"));
        }
    }
    if let Some(n) = cfg.model.mass {
        if !(n > 0.0) {
            return bad(format!("model.N must be positive, got {n}"));
        }
    }
    if let Some(lam) = cfg.model.multiplier {
        if !(lam > 0.0) {
            return bad(format!("model.multiplier must be positive, got {lam}"));
        }
    }
    if cfg.model.mass.is_some() && cfg.model.multiplier.is_some() {
        return bad("model.N and model.multiplier are mutually exclusive".into());
    }
    if !(2..=64).contains(&cfg.spectrum.l_max) {
        return bad(format!(
            "spectrum.l_max must lie in [2, 64], got {}",
            cfg.spectrum.l_max
        ));
    }
    if cfg.spectrum.k_eigs == 0 {
        return bad("spectrum.k_eigs must be positive".into());
    }
    if !(cfg.spectrum.kernel_radius > 0.0) {
        return bad(format!(
            "spectrum.kernel_radius must be positive, got {}",
            cfg.spectrum.kernel_radius
        ));
    }
    if cfg.sweep.c_list.is_empty() {
        return bad("sweep.c_list must not be empty".into());
    }
    for &c in &cfg.sweep.c_list {
        if !(c > 0.0) {
            return bad(format!("sweep.c_list entries must be positive, got {c}"));
        }
    }
    if cfg.output.formats.is_empty() {
        return bad("output.formats must not be empty".into());
    }
    if cfg.output.dir.is_empty() {
        return bad("output.dir must not be empty".into());
    }
    Ok(())
}

fn parse_formats(raw: &[String]) -> Result<Vec<OutputFormat>> {
    raw.iter()
        .map(|s| match s.as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown output format {other:?} (expected json or csv)"
            ))),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "hartree-lab",
    version,
    about = "Ground states of the Choquard and pseudo-relativistic Hartree equations"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (overrides config and HARTREE_LAB_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Parallel jobs for independent work items (sweep points, sectors).
    #[arg(long, global = true, value_name = "J")]
    jobs: Option<usize>,
    /// Output formats, comma separated (json,csv).
    #[arg(long, global = true, value_delimiter = ',', value_name = "FMT")]
    format: Option<Vec<String>>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand, mirroring the configuration tables.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Grid size (number of interior nodes).
    #[arg(long)]
    n: Option<usize>,
    /// Box radius.
    #[arg(long = "r-max")]
    r_max: Option<f64>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Recorded iteration budget.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Mass parameter m.
    #[arg(long)]
    m: Option<f64>,
    /// Light speed c.
    #[arg(long)]
    c: Option<f64>,
    /// Target L² mass N.
    #[arg(long = "N")]
    mass: Option<f64>,
    /// Target nonrelativistic multiplier λ.
    #[arg(long)]
    multiplier: Option<f64>,
}

#[derive(Args, Debug)]
struct ShootArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// RK4 step (default: the grid spacing).
    #[arg(long)]
    step: Option<f64>,
    /// Integration horizon (default: the box radius).
    #[arg(long = "r-end")]
    r_end: Option<f64>,
    /// Lower end of the initial-value bracket.
    #[arg(long, default_value_t = 0.1)]
    lo: f64,
    /// Upper end of the initial-value bracket.
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Largest angular-momentum sector.
    #[arg(long = "l-max")]
    l_max: Option<usize>,
    /// Eigenpairs per sector.
    #[arg(long = "k")]
    k_eigs: Option<usize>,
    /// Near-zero counting radius.
    #[arg(long = "kernel-radius")]
    kernel_radius: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Light speeds, comma separated.
    #[arg(long = "c-list", value_delimiter = ',')]
    c_list: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct HeatArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Angular-momentum sector.
    #[arg(long, default_value_t = 0)]
    ell: usize,
    /// Diffusion time.
    #[arg(long, default_value_t = 0.5)]
    t: f64,
}

#[derive(Args, Debug)]
struct CriticalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target bracket width.
    #[arg(long = "bracket-tol", default_value_t = 0.2)]
    bracket_tol: f64,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the (normalized or mass-/multiplier-targeted) Choquard equation.
    SolveNr(CommonArgs),
    /// Solve the pseudo-relativistic equation at fixed mass.
    SolveRel(CommonArgs),
    /// Threshold shooting for the normalized equation.
    Shoot(ShootArgs),
    /// Assemble and diagonalize the linearized sector operators.
    Spectrum(SpectrumArgs),
    /// Sweep the light speed toward the nonrelativistic limit.
    SweepC(SweepArgs),
    /// Tabulate a sector heat kernel.
    HeatKernel(HeatArgs),
    /// Bracket the critical mass by bisection on collapse.
    CriticalMass(CriticalArgs),
    /// Run the cross-module invariant suite and emit a pass/fail table.
    Validate(CommonArgs),
}

fn merge_common(cfg: &mut RunConfig, a: &CommonArgs) {
    if let Some(n) = a.n {
        cfg.grid.n = n;
    }
    if let Some(r) = a.r_max {
        cfg.grid.r_max = r;
    }
    if let Some(t) = a.tol {
        cfg.solver.tol = t;
    }
    if let Some(it) = a.max_iter {
        cfg.solver.max_iter = it;
    }
    if let Some(m) = a.m {
        cfg.model.m = m;
    }
    if let Some(c) = a.c {
        cfg.model.c = Some(c);
    }
    if let Some(nn) = a.mass {
        cfg.model.mass = Some(nn);
    }
    if let Some(lam) = a.multiplier {
        cfg.model.multiplier = Some(lam);
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn apply_output_dir_env(cfg: &mut RunConfig, value: Option<String>) {
    if let Some(dir) = value {
        if !dir.is_empty() {
            cfg.output.dir = dir;
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact writing
// ---------------------------------------------------------------------------

struct Outputs {
    dir: PathBuf,
    formats: Vec<OutputFormat>,
    files: Vec<String>,
}

impl Outputs {
    fn has(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    fn write_raw(&mut self, name: &str, content: &str) -> Result<()> {
        fs::write(self.dir.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        if self.has(OutputFormat::Json) {
            let text = serde_json::to_string_pretty(v).expect("finite JSON tree");
            self.write_raw(name, &(text + "\n"))?;
        }
        Ok(())
    }

    fn csv(&mut self, name: &str, content: &str) -> Result<()> {
        if self.has(OutputFormat::Csv) {
            self.write_raw(name, content)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parse `std::env::args`, execute, and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    let mut cfg = load_config(cli.config.as_ref())?;
    apply_output_dir_env(&mut cfg, std::env::var("HARTREE_LAB_OUT").ok());
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(fmt) = &cli.format {
        cfg.output.formats = parse_formats(fmt)?;
    }
    match &cli.cmd {
        Cmd::SolveNr(a) | Cmd::SolveRel(a) | Cmd::Validate(a) => merge_common(&mut cfg, a),
        Cmd::Shoot(a) => merge_common(&mut cfg, &a.common),
        Cmd::Spectrum(a) => {
            merge_common(&mut cfg, &a.common);
            if let Some(l) = a.l_max {
                cfg.spectrum.l_max = l;
            }
            if let Some(k) = a.k_eigs {
                cfg.spectrum.k_eigs = k;
            }
            if let Some(r0) = a.kernel_radius {
                cfg.spectrum.kernel_radius = r0;
            }
        }
        Cmd::SweepC(a) => {
            merge_common(&mut cfg, &a.common);
            if let Some(cs) = &a.c_list {
                cfg.sweep.c_list = cs.clone();
            }
        }
        Cmd::HeatKernel(a) => merge_common(&mut cfg, &a.common),
        Cmd::CriticalMass(a) => merge_common(&mut cfg, &a.common),
    }
    validate_config(&cfg)?;
    let jobs = cli.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(Error::Config("--jobs must be positive".into()));
    }

    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    let mut outs = Outputs {
        dir: dir.clone(),
        formats: cfg.output.formats.clone(),
        files: Vec::new(),
    };

    let (name, code) = match &cli.cmd {
        Cmd::SolveNr(_) => {
            cmd_solve_nr(&cfg, &mut outs)?;
            ("solve-nr", 0)
        }
        Cmd::SolveRel(_) => {
            cmd_solve_rel(&cfg, &mut outs)?;
            ("solve-rel", 0)
        }
        Cmd::Shoot(a) => {
            cmd_shoot(&cfg, a, &mut outs)?;
            ("shoot", 0)
        }
        Cmd::Spectrum(_) => {
            cmd_spectrum(&cfg, jobs, &mut outs)?;
            ("spectrum", 0)
        }
        Cmd::SweepC(_) => {
            cmd_sweep(&cfg, jobs, &mut outs)?;
            ("sweep-c", 0)
        }
        Cmd::HeatKernel(a) => {
            cmd_heat_kernel(&cfg, a, &mut outs)?;
            ("heat-kernel", 0)
        }
        Cmd::CriticalMass(a) => {
            cmd_critical_mass(&cfg, a, &mut outs)?;
            ("critical-mass", 0)
        }
        Cmd::Validate(_) => {
            let code = cmd_validate(&cfg, &mut outs)?;
            ("validate", code)
        }
    };

    let manifest = json!({
        "subcommand": name,
        "config": serde_json::to_value(&cfg).expect("config serializes"),
        "versions": { "hartree-lab": env!("CARGO_PKG_VERSION") },
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": outs.files,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("finite JSON tree");
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(code)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// The nonrelativistic state selected by the model table: normalized when no
/// target is set, rescaled to mass `N` or to multiplier `λ` otherwise.
fn nr_state_from_config(cfg: &RunConfig, grid: &RadialGrid) -> Result<GroundState> {
    let normalized = solve_nr_normalized(grid, cfg.solver.tol)?;
    match (cfg.model.mass, cfg.model.multiplier) {
        (None, None) => Ok(normalized),
        (Some(nn), None) => nr_ground_at_mass(&normalized, cfg.model.m, nn),
        (None, Some(lam)) => {
            // λ = b²/(2m) fixes the rescaling, hence the mass b·N̂/(2m).
            let m = cfg.model.m;
            let b = (2.0 * m * lam).sqrt();
            nr_ground_at_mass(&normalized, m, b * normalized.mass / (2.0 * m))
        }
        (Some(_), Some(_)) => unreachable!("configuration validation rejects both targets"),
    }
}

fn cmd_solve_nr(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let state = nr_state_from_config(cfg, &grid)?;
    outs.json("ground_state_nr.json", &state.to_json())?;
    outs.csv("profile_nr.csv", &state.profile_csv())?;
    Ok(())
}

fn cmd_solve_rel(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let Some(c) = cfg.model.c else {
        return Err(Error::Config("solve-rel needs model.c (or --c)".into()));
    };
    if cfg.model.multiplier.is_some() {
        return Err(Error::Config(
            "the relativistic solver targets a mass N; a multiplier target is not supported"
                .into(),
        ));
    }
    let n_target = cfg.model.mass.unwrap_or(1.0);
    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let state = solve_rel(&grid, cfg.model.m, c, n_target, cfg.solver.tol)?;
    outs.json("ground_state_rel.json", &state.to_json())?;
    outs.csv("profile_rel.csv", &state.profile_csv())?;
    Ok(())
}

fn class_name(class: ShootClass) -> &'static str {
    match class {
        ShootClass::CrossedZero => "crossed-zero",
        ShootClass::BlewUp => "blew-up",
        ShootClass::Undecided => "undecided",
    }
}

fn cmd_shoot(cfg: &RunConfig, args: &ShootArgs, outs: &mut Outputs) -> Result<()> {
    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let mut params = ShootParams::for_grid(&grid);
    if let Some(s) = args.step {
        params.step = s;
    }
    if let Some(r) = args.r_end {
        params.r_end = r;
    }
    let result = shoot_threshold(params, (args.lo, args.hi))?;
    let trace: Vec<Value> = result
        .trace
        .iter()
        .map(|p| json!({ "v0": p.v0, "class": class_name(p.class) }))
        .collect();
    outs.json(
        "shooting.json",
        &json!({
            "v0_lo": result.v0_lo,
            "v0_hi": result.v0_hi,
            "v0_star": result.v0_star,
            "lambda_star": result.lambda_star,
            "sigma_star": result.sigma_star,
            "mass_star": result.mass_star,
            "trust_radius": result.trust_radius(),
            "tail": {
                "c": result.tail.c,
                "kappa": result.tail.kappa,
                "nu": result.tail.nu,
                "r_start": result.tail.r_start,
            },
            "trace": trace,
        }),
    )?;
    let profile = result.normalized_profile(&grid)?;
    outs.csv("shoot_profile.csv", &profile.to_csv_string())?;
    Ok(())
}

fn cmd_spectrum(cfg: &RunConfig, jobs: usize, outs: &mut Outputs) -> Result<()> {
    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let state = match cfg.model.c {
        Some(c) => solve_rel(
            &grid,
            cfg.model.m,
            c,
            cfg.model.mass.unwrap_or(1.0),
            cfg.solver.tol,
        )?,
        None => nr_state_from_config(cfg, &grid)?,
    };
    let relativistic = state.params.model == Model::Relativistic;
    let l_max = cfg.spectrum.l_max;
    let k = cfg.spectrum.k_eigs;

    let sectors: Vec<usize> = (0..=l_max).collect();
    let assemble = |ell: usize| -> Result<SpectralReport> {
        let op = if relativistic {
            assemble_sector_rel(ell, &state)?
        } else {
            assemble_sector_nr(ell, &state)?
        };
        op.eigs(k)
    };
    let reports: Vec<SpectralReport> = if jobs > 1 {
        use rayon::prelude::*;
        thread_pool(jobs)?
            .install(|| sectors.par_iter().map(|&ell| assemble(ell)).collect::<Result<Vec<_>>>())?
    } else {
        sectors
            .iter()
            .map(|&ell| assemble(ell))
            .collect::<Result<Vec<_>>>()?
    };

    for rep in &reports {
        outs.json(&format!("spectrum_l{}.json", rep.ell), &rep.to_json())?;
        outs.csv(
            &format!("eigenfunctions_l{}.csv", rep.ell),
            &rep.eigenfunctions_csv(),
        )?;
    }

    let lminus = if relativistic {
        None
    } else {
        let rep = assemble_lminus(&state)?.eigs(k)?;
        outs.json("spectrum_lminus.json", &rep.to_json())?;
        outs.csv("eigenfunctions_lminus.csv", &rep.eigenfunctions_csv())?;
        Some(rep)
    };

    let count = kernel_count(&state, l_max, cfg.spectrum.kernel_radius)?;
    let nullspace = if relativistic {
        Value::Null
    } else {
        let d = nullspace_diagnostics(&state);
        json!({
            "resid_r": d.resid_r,
            "resid_translation": d.resid_translation,
            "tau": d.tau,
            "tau_separated": d.tau_separated,
        })
    };
    let summary = json!({
        "model": state.params.model.to_string(),
        "multiplier": state.multiplier,
        "N": state.mass,
        "l_max": l_max,
        "k_eigs": k,
        "kernel_radius": cfg.spectrum.kernel_radius,
        "kernel_count": count,
        "sectors": reports.iter().map(|r| json!({
            "l": r.ell,
            "e0": r.eigenvalues.first(),
            "sign_definite": r.sign_definite,
            "gap_bound": r.gap_bound,
            "count_in_unit_interval": r.count_in_unit_interval,
        })).collect::<Vec<_>>(),
        "lminus_e0": lminus.as_ref().map(|r| r.eigenvalues[0]),
        "nullspace": nullspace,
    });
    outs.json("spectrum_summary.json", &summary)?;
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, jobs: usize, outs: &mut Outputs) -> Result<()> {
    let m = cfg.model.m;
    let n_target = cfg.model.mass.unwrap_or(1.0);
    let tol = cfg.solver.tol;
    let mut order = cfg.sweep.c_list.clone();
    check_sweep_preconditions(&order, m, n_target)?;
    order.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));

    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let normalized = solve_nr_normalized(&grid, (tol * 10.0).clamp(1e-13, 1e-4))?;
    let reference = nr_ground_at_mass(&normalized, m, n_target)?;
    let e_nr_n = reference.energy;

    let solve_one =
        |&c: &f64| -> Result<SweepRecord> { sweep_point(&grid, m, c, n_target, tol, &reference, e_nr_n) };
    let results: Vec<Result<SweepRecord>> = if jobs > 1 {
        use rayon::prelude::*;
        thread_pool(jobs)?.install(|| order.par_iter().map(solve_one).collect())
    } else {
        order.iter().map(solve_one).collect()
    };
    let mut points: Vec<SweepPoint> = order
        .iter()
        .zip(results)
        .map(|(&c, result)| SweepPoint { c, result })
        .collect();
    fill_uniform_flags(&mut points);
    for p in &points {
        if let Err(e) = &p.result {
            eprintln!("warning: sweep point c = {} failed: {e}", p.c);
        }
    }

    outs.csv("sweep.csv", &sweep_csv(&points))?;
    let arr: Vec<Value> = points
        .iter()
        .map(|p| match &p.result {
            Ok(r) => r.to_json(),
            Err(e) => json!({ "c": p.c, "error": e.to_string() }),
        })
        .collect();
    outs.json("sweep.json", &Value::Array(arr))?;

    let ok: Vec<SweepRecord> = points
        .iter()
        .filter_map(|p| p.result.as_ref().ok().cloned())
        .collect();
    let uniform = h1_uniform_check(&ok)
        .ok()
        .map(|(stable, m)| json!({ "stable": stable, "M": m }))
        .unwrap_or(Value::Null);
    let summary = json!({
        "m": m,
        "N": n_target,
        "lambda_ref": reference.multiplier,
        "richardson_gap": richardson_gap(&ok).ok(),
        "h1_uniform": uniform,
        "n_requested": points.len(),
        "n_converged": ok.len(),
    });
    outs.json("sweep_summary.json", &summary)?;
    Ok(())
}

fn cmd_heat_kernel(cfg: &RunConfig, args: &HeatArgs, outs: &mut Outputs) -> Result<()> {
    if !(args.t > 0.0) {
        return Err(Error::Config(format!(
            "heat-kernel time must be positive, got {}",
            args.t
        )));
    }
    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let h = heat_kernel_sector(args.ell, args.t, &grid)?;
    let n = grid.n();
    let mut min_entry = f64::INFINITY;
    let mut max_entry = f64::NEG_INFINITY;
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = h.entry(i, j);
            min_entry = min_entry.min(v);
            max_entry = max_entry.max(v);
        }
        trace += h.entry(i, i);
    }
    outs.json(
        "heat_kernel.json",
        &json!({
            "ell": args.ell,
            "t": args.t,
            "n": n,
            "r_max": grid.r_max(),
            "min_entry": min_entry,
            "max_entry": max_entry,
            "trace": trace,
        }),
    )?;
    // Three kernel slices K(·, r_q) at the quartile source points: a
    // plot-ready long-format table instead of the full n×n matrix.
    let sources = [n / 4, n / 2, (3 * n) / 4];
    let mut csv = String::from("r,source_r,kernel\n");
    for &j in &sources {
        for i in 0..n {
            csv.push_str(&format!(
                "{},{},{}\n",
                grid.nodes()[i],
                grid.nodes()[j],
                h.kernel(i, j)
            ));
        }
    }
    outs.csv("heat_kernel_slices.csv", &csv)?;
    Ok(())
}

fn cmd_critical_mass(cfg: &RunConfig, args: &CriticalArgs, outs: &mut Outputs) -> Result<()> {
    let c = cfg.model.c.unwrap_or(1.0);
    let grid = make_grid(cfg.grid.n, cfg.grid.r_max)?;
    let est = critical_mass_estimate(c, cfg.model.m, &grid, args.bracket_tol, cfg.solver.tol)?;
    outs.json("critical_mass.json", &est.to_json())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Invariant suite
// ---------------------------------------------------------------------------

struct Row {
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Row {
    fn check(name: &'static str, pass: bool, detail: String) -> Self {
        Row { name, pass, detail }
    }
}

fn wnorm(f: &RadialProfile) -> f64 {
    mass(f).sqrt()
}

fn cmd_validate(cfg: &RunConfig, outs: &mut Outputs) -> Result<i32> {
    let n = cfg.grid.n;
    let r_max = cfg.grid.r_max;
    let tol = cfg.solver.tol;
    let grid = make_grid(n, r_max)?;
    let mut rows: Vec<Row> = Vec::new();

    // Quadrature weights integrate the ball volume.
    {
        let vol = (4.0 / 3.0) * PI * r_max.powi(3);
        let sum: f64 = grid.weights().iter().sum();
        let rel = (sum - vol).abs() / vol;
        rows.push(Row::check(
            "grid-quadrature-volume",
            rel < 1e-2,
            format!("relative defect {rel:.3e} (< 1e-2)"),
        ));
    }
    // The DST-I is an involution.
    {
        let x = xorshift_vec(7, n);
        let dst = Dst1::new(n);
        let y = dst.apply(&dst.apply(&x));
        let worst = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.push(Row::check(
            "dst-involution",
            worst < 1e-12,
            format!("round-trip defect {worst:.3e} (< 1e-12)"),
        ));
    }
    // Newton potential of e^{-r} against the elementary closed form.
    {
        let rho = RadialProfile::from_fn(&grid, |r| (-r).exp());
        let phi = newton_potential(&rho);
        let mut worst = 0.0_f64;
        for (i, &r) in grid.nodes().iter().enumerate() {
            let enclosed = 4.0 * PI * (2.0 - (-r).exp() * (r * r + 2.0 * r + 2.0));
            let exact = enclosed / r + 4.0 * PI * (-r).exp() * (r + 1.0);
            worst = worst.max((phi.values()[i] - exact).abs() / exact);
        }
        rows.push(Row::check(
            "newton-closed-form",
            worst < 1e-4,
            format!("max relative error {worst:.3e} (< 1e-4)"),
        ));
    }

    // Ground state of the normalized equation and its identities.
    let state = solve_nr_normalized(&grid, tol)?;
    rows.push(Row::check(
        "ground-state-residual",
        state.residual <= tol,
        format!("residual {:.3e} (≤ {tol:.1e})", state.residual),
    ));
    {
        let peak = state.q.values().iter().fold(0.0_f64, |a, &v| a.max(v));
        let nonneg = state.q.values().iter().all(|&v| v >= -1e-12 * peak);
        let monotone = state
            .q
            .values()
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-10 * peak);
        rows.push(Row::check(
            "profile-positive-monotone",
            nonneg && monotone,
            format!("nonnegative: {nonneg}, nonincreasing: {monotone}"),
        ));
        let slope = log_slope(&state.q, 0.4 * r_max, 0.7 * r_max);
        rows.push(Row::check(
            "log-slope-window",
            (-1.15..=-0.85).contains(&slope),
            format!("semilog slope {slope:.4} (in [-1.15, -0.85])"),
        ));
    }
    {
        let t_kin = dirichlet_form(&state.q, 0);
        let d = hartree_term(&state.q);
        let rm = (state.mass / t_kin - 3.0).abs();
        let rd = (d / t_kin - 4.0).abs();
        rows.push(Row::check(
            "virial-mass-kinetic",
            rm < 1e-3,
            format!("|N/T - 3| = {rm:.3e} (< 1e-3)"),
        ));
        rows.push(Row::check(
            "virial-hartree-kinetic",
            rd < 1e-3,
            format!("|D/T - 4| = {rd:.3e} (< 1e-3)"),
        ));
        let ident = (t_kin + state.mass - d).abs() / d;
        rows.push(Row::check(
            "multiplier-identity",
            ident <= 10.0 * tol,
            format!("|T + λN - D|/D = {ident:.3e} (≤ {:.1e})", 10.0 * tol),
        ));
    }

    // Linearized operators.
    let l0 = assemble_sector_nr(0, &state)?;
    {
        let (vals, _) = crate::solve::dense::sym_eigen(l0.mat_u())?;
        let min_abs = vals.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
        rows.push(Row::check(
            "radial-sector-no-zero-mode",
            min_abs >= 0.01,
            format!("min |eig(L₊,(0))| = {min_abs:.4} (≥ 0.01)"),
        ));
    }
    {
        // 50 random directions w-orthogonal to Q: the quadratic form of
        // L₊,(0) must be nonnegative on that subspace.
        let qn = mass(&state.q);
        let mut worst = f64::INFINITY;
        for seed in 0..50u64 {
            let raw = xorshift_vec(1000 + seed, n);
            let mut xi = RadialProfile::new(&grid, raw)?;
            let proj = inner_w(&xi, &state.q) / qn;
            for (v, q) in xi.values_mut().iter_mut().zip(state.q.values()) {
                *v -= proj * q;
            }
            let norm2 = mass(&xi);
            let val = inner_w(&xi, &l0.apply(&xi)) / norm2;
            worst = worst.min(val);
        }
        rows.push(Row::check(
            "ritz-orthogonal-positivity",
            worst >= -1e-6,
            format!("min Rayleigh quotient ⊥ Q: {worst:.3e} (≥ -1e-6)"),
        ));
    }
    {
        let rep = assemble_lminus(&state)?.eigs(2)?;
        rows.push(Row::check(
            "lminus-annihilates-q",
            rep.eigenvalues[0].abs() < 1e-3,
            format!("e₀(L₋) = {:.3e} (|·| < 1e-3)", rep.eigenvalues[0]),
        ));
        rows.push(Row::check(
            "lminus-second-eigenvalue",
            rep.eigenvalues[1] > 0.01,
            format!("e₁(L₋) = {:.4} (> 0.01)", rep.eigenvalues[1]),
        ));
    }
    {
        let rep = assemble_sector_nr(1, &state)?.eigs(1)?;
        let qp = radial_derivative(&state.q);
        let cos = inner_w(&rep.eigenfunctions[0], &qp).abs() / wnorm(&qp);
        rows.push(Row::check(
            "translation-near-zero-mode",
            rep.eigenvalues[0].abs() <= 0.05 && cos >= 0.999,
            format!(
                "e₀,(1) = {:.3e} (|·| ≤ 0.05), |cos(φ₀, Q′)| = {cos:.5} (≥ 0.999)",
                rep.eigenvalues[0]
            ),
        ));
    }
    {
        let rep = assemble_sector_nr(2, &state)?.eigs(1)?;
        rows.push(Row::check(
            "sector-two-positive-gap",
            rep.eigenvalues[0] > 0.0
                && rep.gap_bound > 0.0
                && rep.eigenvalues[0] >= rep.gap_bound - 1e-6,
            format!(
                "e₀,(2) = {:.4}, K₍₂₎ = {:.4} (0 < K₍₂₎ ≤ e₀ + 1e-6)",
                rep.eigenvalues[0], rep.gap_bound
            ),
        ));
    }
    {
        let count = kernel_count(&state, cfg.spectrum.l_max.max(2), cfg.spectrum.kernel_radius)?;
        rows.push(Row::check(
            "kernel-count-three",
            count == 3,
            format!("kernel_count = {count} (= 3: the three translation modes)"),
        ));
    }
    {
        let d = nullspace_diagnostics(&state);
        rows.push(Row::check(
            "nullspace-identities",
            d.resid_r < 0.05 && d.resid_translation < 0.05,
            format!(
                "‖L₊R + 2Q‖/‖Q‖ = {:.3e}, ‖L₊,(1)Q′‖/‖Q′‖ = {:.3e} (both < 0.05)",
                d.resid_r, d.resid_translation
            ),
        ));
        rows.push(Row::check(
            "nondegeneracy-tau",
            d.tau_separated,
            format!("τ = {:.4} (|τ - 1| > 0.05)", d.tau),
        ));
    }

    // Relativistic window at a quick desk point.
    {
        let rel = solve_rel(&grid, 1.0, 6.0, 1.0, tol)?;
        let gap = -rel.multiplier - 36.0;
        rows.push(Row::check(
            "rel-gap-negative",
            gap < 0.0,
            format!("-μ - mc² = {gap:.4} (< 0)"),
        ));
        let rec = SweepRecord {
            c: 6.0,
            m: 1.0,
            mu: rel.multiplier,
            gap,
            h1_dist: 0.0,
            h1_norm: 0.0,
            energy: rel.energy,
            mass: rel.mass,
            residual: rel.residual,
            bound_flags: BoundFlags::default(),
        };
        // E_nr(N) only enters the upper window edge; pass 0 and read the
        // lower-edge flags.
        let flags = mu_bounds_check(&rec, 0.0);
        rows.push(Row::check(
            "rel-multiplier-window",
            flags.herbst_ok && flags.delta1_ok,
            format!(
                "-μ = {:.4}: herbst_ok = {}, delta1_ok = {}",
                -rel.multiplier, flags.herbst_ok, flags.delta1_ok
            ),
        ));
    }

    // Heat kernel on a small auxiliary grid (wall effects excluded).
    {
        let hg = make_grid(96, 12.0)?;
        let interior: Vec<usize> = (0..hg.n()).filter(|&i| hg.nodes()[i] <= 6.0).collect();
        let h_half = heat_kernel_sector(0, 0.25, &hg)?;
        let h_full = heat_kernel_sector(0, 0.5, &hg)?;
        let mut min_entry = f64::INFINITY;
        for &i in &interior {
            for &j in &interior {
                min_entry = min_entry.min(h_half.entry(i, j));
            }
        }
        rows.push(Row::check(
            "heat-kernel-positive",
            min_entry > 0.0,
            format!("min interior entry {min_entry:.3e} (> 0)"),
        ));
        let f = RadialProfile::from_fn(&hg, |r| (-0.5 * r * r).exp());
        let twice = h_half.apply(&h_half.apply(&f));
        let once = h_full.apply(&f);
        let scale = interior
            .iter()
            .map(|&i| once.values()[i].abs())
            .fold(0.0, f64::max);
        let defect = interior
            .iter()
            .map(|&i| (twice.values()[i] - once.values()[i]).abs())
            .fold(0.0, f64::max)
            / scale;
        rows.push(Row::check(
            "heat-semigroup",
            defect <= 1e-4,
            format!("interior semigroup defect {defect:.3e} (≤ 1e-4)"),
        ));
    }
    // Half-integer Bessel function against the elementary formula.
    {
        let mut worst = 0.0_f64;
        for &z in &[0.1, 1.0, 10.0] {
            let exact = (2.0 / (PI * z)).sqrt() * z.sinh();
            let got = bessel_i_half(0, z)?;
            worst = worst.max((got - exact).abs() / exact);
        }
        rows.push(Row::check(
            "bessel-half-order",
            worst < 1e-12,
            format!("max relative error {worst:.3e} (< 1e-12)"),
        ));
    }

    // Emit the table.
    let mut table = format!("{:<32} {:<6} detail\n", "check", "result");
    table.push_str(&"-".repeat(72));
    table.push('\n');
    for row in &rows {
        table.push_str(&format!(
            "{:<32} {:<6} {}\n",
            row.name,
            if row.pass { "PASS" } else { "FAIL" },
            row.detail
        ));
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    table.push_str(&format!(
        "\n{} checks, {} passed, {} failed\n",
        rows.len(),
        rows.len() - failed,
        failed
    ));
    print!("{table}");
    outs.write_raw("validate.txt", &table)?;
    let report: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "name": r.name, "pass": r.pass, "detail": r.detail }))
        .collect();
    outs.json("validate.json", &Value::Array(report))?;
    Ok(if failed == 0 { 0 } else { 3 })
}

// ---------------------------------------------------------------------------
