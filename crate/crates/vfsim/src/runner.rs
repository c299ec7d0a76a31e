//! Scenario dispatch and structured outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use vfsim_core::filament::{
    self, EnergyReport, FilamentError, FilamentRun, FilamentSolver, FilamentState, RunStatus,
};
use vfsim_core::io as vio;
use vfsim_core::point_vortex::{self, VortexConfig, VortexError};
use vfsim_core::reduced::{self, BmSolver, NonlinearSubstep, PhiState, ReducedError};
use vfsim_core::spectral::{linear_propagate, make_grid, ComplexField, Grid1D};
use vfsim_core::traveling_wave::{self as tw, WaveError, WaveParams, WaveProfile};

use crate::config::{
    ConfigError, DilationProfile, GeometryKind, NonlinearChoice, PerturbationConfig, ScenarioConfig,
    ScenarioKind,
};

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COLLISION: i32 = 3;
pub const EXIT_ENERGY_CAP: i32 = 4;
pub const EXIT_BOUNDARY: i32 = 5;
pub const EXIT_NUMERICAL_GUARD: i32 = 6;

/// Exit code for a status label.
pub fn exit_code(status: &str) -> i32 {
    match status {
        "Completed" => EXIT_COMPLETED,
        "ConfigError" => EXIT_CONFIG,
        "CollisionDetected" => EXIT_COLLISION,
        "EnergyCapExceeded" => EXIT_ENERGY_CAP,
        "BoundaryContaminated" => EXIT_BOUNDARY,
        "NumericalGuard" => EXIT_NUMERICAL_GUARD,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("cannot start thread pool: {0}")]
    Threads(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
    pub dump_fields: bool,
    /// Also write binary dumps next to the CSV ones.
    pub raw: bool,
    /// Overrides the config seed.
    pub seed: Option<u64>,
    /// File name of the primary CSV (e.g. `profile.csv` for a single wave).
    pub primary_name: Option<String>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            threads: 1,
            dump_fields: false,
            raw: false,
            seed: None,
            primary_name: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
}

/// Contents of `status.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Acceptance criteria this scenario exercises.
    pub acceptance: Vec<u32>,
    pub hitting_times: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, Value>,
    pub files: Vec<FileEntry>,
    pub config: ScenarioConfig,
    pub versions: BTreeMap<String, String>,
}

impl RunReport {
    fn new(kind: ScenarioKind, config: ScenarioConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("vfsim".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("output_format".into(), "1".into());
        Self {
            scenario: kind.name().into(),
            status: "Completed".into(),
            exit_code: EXIT_COMPLETED,
            message: None,
            acceptance: acceptance_refs(kind),
            hitting_times: BTreeMap::new(),
            metrics: BTreeMap::new(),
            files: Vec::new(),
            config,
            versions,
        }
    }

    fn set_status(&mut self, status: &str, message: Option<String>) {
        self.status = status.into();
        self.exit_code = exit_code(status);
        self.message = message;
    }

    fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    fn number(&mut self, key: &str, value: f64) {
        // JSON has no NaN or infinity
        let v = if value.is_finite() {
            json!(value)
        } else if value.is_nan() {
            Value::Null
        } else {
            json!(if value > 0.0 { "inf" } else { "-inf" })
        };
        self.metrics.insert(key.into(), v);
    }

    pub fn metric_f64(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn acceptance_refs(kind: ScenarioKind) -> Vec<u32> {
    match kind {
        ScenarioKind::PointVortex => vec![1],
        ScenarioKind::Stability => vec![2],
        ScenarioKind::Reduced => vec![5, 10, 11],
        ScenarioKind::Square => vec![7, 8, 9],
        ScenarioKind::Collision => vec![3, 4],
        ScenarioKind::TravelingWave => vec![6],
        ScenarioKind::Helix => vec![6],
    }
}

/// Output directory that records every file it writes.
struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn new(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, body: F) -> io::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        let bytes = std::fs::metadata(&path)?.len();
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.into(),
            bytes,
        });
        Ok(())
    }

    fn dump_fields(&mut self, stem: &str, fields: &[ComplexField], raw: bool) -> io::Result<()> {
        self.write(&format!("{stem}.csv"), |w| vio::write_fields_csv(w, fields))?;
        if raw {
            self.write(&format!("{stem}.bin"), |w| vio::write_fields_raw(w, fields))?;
        }
        Ok(())
    }
}

fn time_stem(prefix: &str, t: f64) -> String {
    format!("{prefix}_t{t:.4}")
}

/// Runs a validated scenario, writing CSV outputs and `status.json` into
/// `opts.out_dir`. Failure statuses are reported, not returned as errors.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport, RunError> {
    config.validate()?;
    let kind = config
        .scenario
        .ok_or_else(|| ConfigError::new("scenario", "missing scenario tag"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| RunError::Threads(e.to_string()))?;
    let mut out = Outputs::new(&opts.out_dir)?;
    let mut report = RunReport::new(kind, config.clone());
    if let Some(seed) = opts.seed {
        report.config.seed = seed;
    }
    let cfg = report.config.clone();
    pool.install(|| -> Result<(), RunError> {
        match kind {
            ScenarioKind::PointVortex => run_point_vortex(&cfg, opts, &mut out, &mut report),
            ScenarioKind::Stability => run_stability(&cfg, opts, &mut out, &mut report),
            ScenarioKind::Reduced => run_reduced(&cfg, opts, &mut out, &mut report),
            ScenarioKind::Square | ScenarioKind::Collision => {
                run_filaments(kind, &cfg, opts, &mut out, &mut report)
            }
            ScenarioKind::TravelingWave => run_wave(&cfg, opts, &mut out, &mut report),
            ScenarioKind::Helix => run_helix(&cfg, opts, &mut out, &mut report),
        }
    })?;
    report.files = out.files;
    std::fs::write(opts.out_dir.join("status.json"), report.to_json())?;
    Ok(report)
}

/// Writes a `status.json` describing a rejected configuration.
pub fn write_config_error(out_dir: &Path, kind: Option<ScenarioKind>, err: &ConfigError) -> io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let body = json!({
        "scenario": kind.map(|k| k.name()),
        "status": "ConfigError",
        "exit_code": EXIT_CONFIG,
        "message": err.to_string(),
        "path": err.path,
        "reason": err.reason,
    });
    std::fs::write(out_dir.join("status.json"), serde_json::to_string_pretty(&body).expect("json"))
}

fn primary(opts: &RunOptions, default: &str) -> String {
    opts.primary_name.clone().unwrap_or_else(|| default.to_string())
}

pub fn vortex_config(cfg: &ScenarioConfig) -> Result<VortexConfig, ConfigError> {
    let g = &cfg.config;
    let fixed = |n: usize| -> Result<usize, ConfigError> {
        match g.n {
            Some(m) if m != n => Err(ConfigError::new(
                "config.N",
                format!("{:?} configurations have N = {n}, got {m}", g.kind),
            )),
            _ => Ok(n),
        }
    };
    let (n, center) = match g.kind {
        GeometryKind::Square => (fixed(4)?, None),
        GeometryKind::Hexagon => (fixed(6)?, None),
        GeometryKind::Segment => {
            // two vertices plus the center
            fixed(3)?;
            (2, Some(g.gamma0.unwrap_or(g.gamma)))
        }
        GeometryKind::Polygon => (g.n.expect("validated"), None),
        GeometryKind::PolygonCenter => (g.n.expect("validated"), g.gamma0),
    };
    point_vortex::polygon_config(n, g.r, g.gamma, center).map_err(|e| ConfigError::new("config", e.to_string()))
}

fn make_grid_cfg(cfg: &ScenarioConfig) -> Result<Arc<Grid1D>, ConfigError> {
    make_grid(cfg.grid.l, cfg.grid.m).map_err(|e| ConfigError::new("grid", e.to_string()))
}

fn run_point_vortex(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let vc = vortex_config(cfg)?;
    let traj = match point_vortex::integrate(&vc, cfg.time.t, cfg.time.dt) {
        Ok(t) => t,
        Err(VortexError::StepTooLarge { dt, limit }) => {
            return Err(ConfigError::new("time.dt", format!("{dt} exceeds the stability guard {limit:.3e}")).into())
        }
        Err(e @ VortexError::NearCollision { .. }) => {
            report.set_status("CollisionDetected", Some(e.to_string()));
            return Ok(());
        }
        Err(e) => return Err(ConfigError::new("config", e.to_string()).into()),
    };
    let every = cfg.time.sample_every;
    let last = traj.times.len() - 1;
    let keep: Vec<usize> = (0..=last).filter(|&k| k % every == 0 || k == last).collect();
    let sub = point_vortex::VortexTrajectory {
        times: keep.iter().map(|&k| traj.times[k]).collect(),
        states: keep.iter().map(|&k| traj.states[k].clone()).collect(),
        invariant_series: keep.iter().map(|&k| traj.invariant_series[k]).collect(),
    };
    out.write(&primary(opts, "trajectory.csv"), |w| vio::write_trajectory(w, &sub))?;
    let [c, a, l, q] = traj.max_relative_drift();
    report.number("drift_center_of_inertia", c);
    report.number("drift_angular_momentum", a);
    report.number("drift_log_sum", l);
    report.number("drift_quad_sum", q);
    if let Some(omega) = vc.omega {
        report.number("rotation_rate", omega);
        let fin = traj.states.last().expect("nonempty");
        let rigid = vc.rotated(*traj.times.last().expect("nonempty"));
        let dev = fin
            .positions
            .iter()
            .zip(&rigid)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        report.number("rigid_rotation_error", dev);
    }
    Ok(())
}

fn run_stability(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let [lo, hi] = cfg
        .stability
        .n_range
        .unwrap_or_else(|| {
            let n = cfg.config.n.unwrap_or(4);
            [n, n]
        });
    let center = match cfg.config.kind {
        GeometryKind::PolygonCenter => cfg.config.gamma0,
        _ => None,
    };
    let mut rows = Vec::new();
    for n in lo..=hi {
        let r = point_vortex::linear_stability(n, cfg.config.gamma, center)
            .map_err(|e| ConfigError::new("stability.n_range", e.to_string()))?;
        rows.push((n, r));
    }
    out.write(&primary(opts, "stability.csv"), |w| {
        writeln!(w, "N,verdict,max_real_part,dense_max_real_part")?;
        for (n, r) in &rows {
            let verdict = match r.verdict {
                point_vortex::Verdict::Stable => "stable",
                point_vortex::Verdict::Unstable => "unstable",
            };
            writeln!(
                w,
                "{n},{verdict},{},{}",
                vio::fmt17(r.max_real_part),
                vio::fmt17(r.dense_max_real_part)
            )?;
        }
        Ok(())
    })?;
    let verdicts: BTreeMap<String, Value> = rows
        .iter()
        .map(|(n, r)| {
            let v = if r.verdict == point_vortex::Verdict::Stable {
                "stable"
            } else {
                "unstable"
            };
            (n.to_string(), json!({"verdict": v, "max_real_part": r.max_real_part}))
        })
        .collect();
    report.metric("verdicts", json!(verdicts));
    if let Some((_, r)) = rows.first().filter(|_| lo == hi) {
        report.metric(
            "verdict",
            if r.verdict == point_vortex::Verdict::Stable {
                "stable"
            } else {
                "unstable"
            },
        );
        report.number("max_real_part", r.max_real_part);
    }
    Ok(())
}

fn dilation_phi(grid: &Arc<Grid1D>, profile: DilationProfile, amplitude: f64, width: f64) -> ComplexField {
    match profile {
        DilationProfile::Bump => ComplexField::from_fn(grid, Complex64::new(1.0, 0.0), |s| {
            Complex64::new(1.0 + amplitude * (-(s / width).powi(2)).exp(), 0.0)
        }),
        DilationProfile::Collision => reduced::collision_field(grid, 0.0),
    }
}

fn read_file_fields(path: &Path, grid: &Arc<Grid1D>, background: Complex64) -> Result<Vec<ComplexField>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("perturbation.path", format!("cannot read {}: {e}", path.display())))?;
    vio::read_fields_csv(&text, grid, background)
        .map_err(|e| ConfigError::new("perturbation.path", e.to_string()))
}

fn run_reduced(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let grid = make_grid_cfg(cfg)?;
    let one = Complex64::new(1.0, 0.0);
    let phi0 = match &cfg.perturbation {
        PerturbationConfig::Dilation { profile, amplitude, width } => dilation_phi(&grid, *profile, *amplitude, *width),
        PerturbationConfig::File { path } => {
            let mut f = read_file_fields(path, &grid, one)?;
            if f.len() != 1 {
                return Err(ConfigError::new("perturbation.path", format!("expected one field, found {}", f.len())).into());
            }
            f.remove(0)
        }
        _ => {
            return Err(ConfigError::new(
                "perturbation.kind",
                "the reduced scenario takes dilation or file data",
            )
            .into())
        }
    };
    let omega = cfg.reduced.omega;
    let solver = BmSolver {
        delta_mod: cfg.guards.delta_mod,
        boundary_tol: Some(cfg.guards.boundary_tol),
        nonlinear: match cfg.reduced.nonlinear {
            NonlinearChoice::Rk4 => NonlinearSubstep::Rk4,
            NonlinearChoice::ExactPhase => NonlinearSubstep::ExactPhase,
        },
    };
    let state = PhiState::new(phi0.clone(), omega);
    if let Ok(cmp) = reduced::compare_energies(&phi0, omega) {
        report.number("initial_energy", cmp.energy);
        report.number("initial_energy_gp", cmp.energy_gp);
        if let Some(r) = cmp.ratio {
            report.number("initial_energy_ratio", r);
        }
    }
    if let Ok(g) = reduced::check_ginzburg(&phi0, omega, cfg.reduced.eta1) {
        report.metric("ginzburg_asserted", g.asserted);
    }
    let run = match solver.evolve(&state, cfg.time.t, cfg.time.dt, cfg.time.sample_every) {
        Ok(r) => r,
        Err(e) => {
            let (status, time) = match &e {
                ReducedError::ZeroModulus { time, .. } => ("NumericalGuard", Some(*time)),
                ReducedError::Boundary { time, .. } => ("BoundaryContaminated", Some(*time)),
                _ => ("Failed", None),
            };
            if let Some(t) = time {
                report.hitting_times.insert(status.to_string(), t);
            }
            report.set_status(status, Some(e.to_string()));
            return Ok(());
        }
    };
    out.write(&primary(opts, "energies.csv"), |w| vio::write_bm_energies(w, &run.samples))?;
    if opts.dump_fields {
        for st in &run.states {
            out.dump_fields(&time_stem("fields", st.time), std::slice::from_ref(&st.phi), opts.raw)?;
        }
    }
    report.number("relative_energy_drift", run.relative_energy_drift());
    let sup_dev = run.samples.iter().map(|s| s.sup_dev).fold(0.0, f64::max);
    let min_mod = run.samples.iter().map(|s| s.min_mod).fold(f64::INFINITY, f64::min);
    report.number("max_sup_dev", sup_dev);
    report.number("min_modulus", min_mod);
    Ok(())
}

/// Random unit complex number.
fn unit(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

fn gaussian_field(grid: &Arc<Grid1D>, coeff: Complex64, center: f64, width: f64) -> ComplexField {
    ComplexField::from_fn(grid, Complex64::new(0.0, 0.0), |s| coeff * (-((s - center) / width).powi(2)).exp())
}

/// Initial filament state for the square/collision scenarios.
pub fn initial_filaments(cfg: &ScenarioConfig, grid: &Arc<Grid1D>) -> Result<FilamentState, ConfigError> {
    let vc = vortex_config(cfg)?;
    let n = vc.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zero = Complex64::new(0.0, 0.0);
    let build = |u: Vec<ComplexField>| {
        FilamentState::new(vc.clone(), u).map_err(|e| ConfigError::new("perturbation", e.to_string()))
    };
    match &cfg.perturbation {
        PerturbationConfig::None => build((0..n).map(|_| ComplexField::zeros(grid)).collect()),
        PerturbationConfig::Gaussian {
            amplitude,
            width,
            spread,
            coefficients,
            target_tilde_e0,
        } => {
            let coeffs: Vec<Complex64> = match coefficients {
                Some(c) if c.len() != n => {
                    return Err(ConfigError::new(
                        "perturbation.coefficients",
                        format!("expected {n} entries, got {}", c.len()),
                    ))
                }
                Some(c) => c.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
                None => (0..n).map(|_| unit(&mut rng)).collect(),
            };
            let centers: Vec<f64> = (0..n)
                .map(|_| if *spread > 0.0 { rng.random_range(-spread..=*spread) } else { 0.0 })
                .collect();
            let make = |a: f64| {
                build(
                    coeffs
                        .iter()
                        .zip(&centers)
                        .map(|(&c, &s)| gaussian_field(grid, a * c, s, *width))
                        .collect(),
                )
            };
            let mut state = make(*amplitude)?;
            if let Some(target) = target_tilde_e0 {
                if n != 4 || vc.has_center {
                    return Err(ConfigError::new(
                        "perturbation.target_tilde_e0",
                        "only available for the square",
                    ));
                }
                // Ẽ₀ is close to quadratic in the amplitude for small data
                let mut a = *amplitude;
                for _ in 0..20 {
                    let cur = filament::tilde_e0(&state).map_err(|e| ConfigError::new("perturbation", e.to_string()))?;
                    if cur <= 0.0 {
                        return Err(ConfigError::new("perturbation.amplitude", "zero data has no energy to rescale"));
                    }
                    if (cur / target - 1.0).abs() < 1e-10 {
                        break;
                    }
                    a *= (target / cur).sqrt();
                    state = make(a)?;
                }
            }
            Ok(state)
        }
        PerturbationConfig::Parallelogram { amplitude, width, spread } => {
            if n != 4 || vc.has_center {
                return Err(ConfigError::new("perturbation.kind", "parallelogram data needs the square"));
            }
            let mut u = Vec::with_capacity(4);
            for _ in 0..2 {
                let c = unit(&mut rng);
                let s = if *spread > 0.0 { rng.random_range(-spread..=*spread) } else { 0.0 };
                u.push(gaussian_field(grid, *amplitude * c, s, *width));
            }
            let neg: Vec<ComplexField> = u.iter().map(|f| f.map(|z| -z)).collect();
            u.extend(neg);
            build(u)
        }
        PerturbationConfig::Dilation { profile, amplitude, width } => {
            let phi = dilation_phi(grid, *profile, *amplitude, *width);
            FilamentState::dilation(vc, &phi).map_err(|e| ConfigError::new("perturbation", e.to_string()))
        }
        PerturbationConfig::File { path } => build(read_file_fields(path, grid, zero)?),
    }
}

fn record_identities(state: &FilamentState, kind: GeometryKind, report: &mut RunReport) {
    let check = match kind {
        GeometryKind::Square => filament::square_energy_identity(state),
        GeometryKind::Segment => filament::segment_energy_identity(state),
        GeometryKind::Hexagon => filament::hexagon_energy_identity(state),
        _ => return,
    };
    if let Ok(c) = check {
        report.number("identity_residual", c.residual);
        report.number("identity_printed_residual", c.printed_residual);
    }
    if kind == GeometryKind::Square {
        if let Ok((lv, lw)) = filament::check_lv_vanishes(state) {
            report.number("linear_part_v", lv);
            report.number("linear_part_w", lw);
        }
    }
}

fn max_vw(reports: &[EnergyReport]) -> Option<f64> {
    reports
        .iter()
        .filter_map(|r| r.vw_norms.map(|(v, w)| v.max(w)))
        .reduce(f64::max)
}

fn run_filaments(
    kind: ScenarioKind,
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let grid = make_grid_cfg(cfg)?;
    let state = initial_filaments(cfg, &grid)?;
    let defect = state.u.iter().map(|f| f.boundary_defect()).fold(0.0, f64::max);
    if defect > cfg.guards.boundary_tol {
        return Err(ConfigError::new(
            "grid.L",
            format!("initial data not negligible at the box edge (defect {defect:.3e})"),
        )
        .into());
    }
    record_identities(&state, cfg.config.kind, report);
    let report0 = filament::energies(&state).map_err(|e| ConfigError::new("perturbation", e.to_string()))?;
    let is_square = state.len() == 4 && !state.cfg.has_center;
    if is_square {
        if let Ok(te) = filament::tilde_e0(&state) {
            let pt = filament::predicted_t(te, report0.max_pair_norm(), cfg.guards.predicted_t_constant);
            report.number("tilde_e0", te);
            report.number("predicted_T", pt);
        }
    }
    let solver = FilamentSolver {
        delta_min: cfg.guards.delta_min,
        energy_cap: None,
        energy_cap_factor: cfg.guards.energy_cap_factor,
        boundary_tol: cfg.guards.boundary_tol,
        sample_every: cfg.time.sample_every,
        keep_every: usize::from(opts.dump_fields || kind == ScenarioKind::Collision),
    };
    let stationary = state.cfg.omega.is_some_and(|w| w.abs() < 1e-12);
    let exact_path = match (&cfg.perturbation, kind) {
        (PerturbationConfig::Dilation { profile, amplitude, width }, ScenarioKind::Collision) if stationary => {
            Some(dilation_phi(&grid, *profile, *amplitude, *width))
        }
        _ => None,
    };
    if let Some(phi0) = exact_path {
        let t_check = cfg.time.t.min(CROSS_CHECK_TIME);
        let check = solver.evolve(&state, t_check, cfg.time.dt);
        let run = linear_collision_run(&state, &phi0, cfg, &solver);
        if let Ok(full) = check {
            let fin = full.final_state();
            let phi = linear_propagate(&phi0, cfg.config.gamma, fin.time);
            if let Ok(exact) = FilamentState::dilation(fin.cfg.clone(), &phi) {
                let diff = exact
                    .u
                    .iter()
                    .zip(&fin.u)
                    .map(|(x, y)| x.sup_distance(y))
                    .fold(0.0, f64::max);
                report.number("solver_cross_check_time", fin.time);
                report.number("solver_cross_check_error", diff);
            }
        }
        write_filament_outputs(&run, opts, out)?;
        summarize_filament_run(&run, report);
        collision_metrics(&run, &grid, report);
        return Ok(());
    }
    let run = match solver.evolve(&state, cfg.time.t, cfg.time.dt) {
        Ok(r) => r,
        Err(e @ FilamentError::CollisionDetected { .. }) => {
            report.set_status("CollisionDetected", Some(e.to_string()));
            return Ok(());
        }
        Err(e) => {
            report.set_status("Failed", Some(e.to_string()));
            return Ok(());
        }
    };
    write_filament_outputs(&run, opts, out)?;
    summarize_filament_run(&run, report);
    if kind == ScenarioKind::Collision {
        collision_metrics(&run, &grid, report);
    }
    Ok(())
}

/// Time up to which the full filament solver is compared against the
/// exact collision path; closer to the collision, rounding-level symmetry
/// breaking is amplified without bound.
const CROSS_CHECK_TIME: f64 = 0.9;

/// Collision path for dilation data on a stationary polygon: the profile
/// equation is linear, so `Φ(t)` comes straight from the propagator and the
/// filaments are `X_j Φ(t)`. Guards match the filament solver.
fn linear_collision_run(
    state: &FilamentState,
    phi0: &ComplexField,
    cfg: &ScenarioConfig,
    solver: &FilamentSolver,
) -> FilamentRun {
    let gamma = cfg.config.gamma;
    let threshold = solver.delta_min * state.backbone_distance();
    let report0 = filament::energies(state).expect("initial state was checked");
    let cap = solver.energy_cap_factor * report0.e.abs() + 1e-14;
    let mut run = FilamentRun {
        status: RunStatus::Completed,
        states: vec![state.clone()],
        reports: vec![report0],
        energy_cap: cap,
    };
    let (t_end, dt) = (cfg.time.t, cfg.time.dt);
    let steps = if t_end > 0.0 { (t_end / dt - 1e-9).ceil().max(1.0) as usize } else { 0 };
    let every = solver.sample_every.max(1);
    for n in 1..=steps {
        let t = (n as f64 * dt).min(t_end);
        let phi = linear_propagate(phi0, gamma, t);
        let mut cur = FilamentState::dilation(state.cfg.clone(), &phi).expect("same configuration");
        cur.time = t;
        let sep = cur.min_separation();
        if !(sep.value >= threshold) {
            run.status = RunStatus::CollisionDetected {
                time: t,
                sigma: sep.sigma,
                pair: sep.pair,
                separation: sep.value,
            };
            run.states.push(cur);
            break;
        }
        let defect = cur.u.iter().map(|f| f.boundary_defect()).fold(0.0, f64::max);
        if !(defect <= solver.boundary_tol) {
            run.status = RunStatus::BoundaryContaminated { time: t, defect };
            run.states.push(cur);
            break;
        }
        if n % every == 0 || n == steps {
            let rep = filament::energies(&cur).expect("separation checked");
            let energy = rep.e;
            run.reports.push(rep);
            run.states.push(cur);
            if energy > cap {
                run.status = RunStatus::EnergyCapExceeded { time: t, energy, cap };
                break;
            }
        }
    }
    run
}

fn write_filament_outputs(run: &FilamentRun, opts: &RunOptions, out: &mut Outputs) -> io::Result<()> {
    out.write(&primary(opts, "energies.csv"), |w| vio::write_filament_energies(w, &run.reports))?;
    if opts.dump_fields {
        for st in &run.states {
            out.dump_fields(&time_stem("fields", st.time), &st.u, opts.raw)?;
        }
    }
    Ok(())
}

fn summarize_filament_run(run: &FilamentRun, report: &mut RunReport) {
    report.number("energy_cap", run.energy_cap);
    report.number("relative_energy_drift", run.relative_energy_drift());
    report.number("final_time", run.final_state().time);
    if let Some(m) = max_vw(&run.reports) {
        report.number("max_vw_norm", m);
    }
    let min_sep = run.reports.iter().map(|r| r.min_sep).fold(f64::INFINITY, f64::min);
    report.number("min_separation", min_sep);
    let growth = filament::growth_monitors(&run.reports);
    report.number("pair_growth_constant", growth.pair_growth);
    if let Some(c) = growth.vw_growth {
        report.number("vw_growth_constant", c);
    }
    let (label, time) = match run.status {
        RunStatus::Completed => ("Completed", None),
        RunStatus::CollisionDetected { time, sigma, pair, separation } => {
            report.number("collision_sigma", sigma);
            report.number("collision_separation", separation);
            report.metric("collision_pair", json!([pair.0, pair.1]));
            ("CollisionDetected", Some(("collision", time)))
        }
        RunStatus::EnergyCapExceeded { time, energy, .. } => {
            report.number("cap_energy", energy);
            ("EnergyCapExceeded", Some(("energy_cap", time)))
        }
        RunStatus::BoundaryContaminated { time, defect } => {
            report.number("boundary_defect", defect);
            ("BoundaryContaminated", Some(("boundary", time)))
        }
    };
    if let Some((name, t)) = time {
        report.hitting_times.insert(name.into(), t);
    }
    report.set_status(label, None);
    debug_assert_eq!(label, run.status.label());
}

/// Comparison of the kept snapshots with the exact collision profile.
fn collision_metrics(run: &FilamentRun, grid: &Arc<Grid1D>, report: &mut RunReport) {
    let j = usize::from(run.final_state().cfg.has_center);
    let mut max_err: f64 = 0.0;
    let mut quarter_ok = true;
    let mut sqrt_ok = true;
    let mut snaps = Vec::new();
    for st in run.states.iter().filter(|s| s.time < 1.0 - 1e-9) {
        let phi = st.profile(j);
        let err = phi.sup_distance(&reduced::collision_field(grid, st.time));
        let m = phi.min_modulus();
        let q = reduced::collision_modulus_bound(st.time);
        let s = reduced::collision_modulus_bound_sqrt(st.time);
        max_err = max_err.max(err);
        quarter_ok &= m > q;
        sqrt_ok &= m > s;
        snaps.push(json!({"t": st.time, "profile_error": err, "min_modulus": m, "bound": q, "bound_sqrt": s}));
    }
    report.number("profile_error", max_err);
    report.metric("modulus_bound_holds", quarter_ok);
    report.metric("modulus_bound_sqrt_holds", sqrt_ok);
    report.metric("snapshots", Value::Array(snaps));
    report.number("grid_spacing", grid.spacing());
}

fn wave_params(cfg: &ScenarioConfig, c2: f64) -> Result<WaveParams, ConfigError> {
    let w = &cfg.wave;
    let res = match w.eta3 {
        Some(e) => WaveParams::with_eta3(w.omega, c2.sqrt(), e),
        None => WaveParams::from_c2(w.omega, c2),
    };
    res.map_err(|e| ConfigError::new("wave.c2", e.to_string()))
}

fn wave_status(err: &WaveError) -> &'static str {
    match err {
        WaveError::EtaEscaped { .. } | WaveError::ZeroModulus(_) => "NumericalGuard",
        _ => "Failed",
    }
}

fn record_wave(w: &WaveProfile, report: &mut RunReport) {
    let p = &w.params;
    let l = w.grid().half_length();
    report.number("sigma1", w.sigma1);
    report.number("energy", w.energy);
    report.number("phase_jump", w.phase_jump);
    report.number("first_integral_residual", w.first_integral);
    report.number("ode_first_integral_residual", w.ode_first_integral);
    report.number("max_depletion_ratio", w.eta.iter().cloned().fold(0.0, f64::max) / p.sigma0());
    report.number("decay_rate", w.decay_rate(0.25 * l, 0.5 * l));
    report.number("kappa", p.kappa());
    let k = w.constants();
    report.number("fitted_energy_constant", k.energy);
    report.number("fitted_phase_jump_constant", k.phase_jump);
    report.number("fitted_decay_constant", k.decay);
    report.number("gp_soliton_energy", tw::gp_soliton_energy(p));
}

fn run_wave(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let grid = make_grid_cfg(cfg)?;
    if let Some(s) = cfg.wave.sweep {
        let values = s.values();
        let rows = match tw::sweep(cfg.wave.omega, &values, &grid) {
            Ok(r) => r,
            Err(e) => {
                report.set_status(wave_status(&e), Some(e.to_string()));
                return Ok(());
            }
        };
        out.write(&primary(opts, "sweep.csv"), |w| vio::write_sweep(w, &rows))?;
        let omega = cfg.wave.omega;
        report.number("energy_exponent", tw::energy_exponent(omega, &rows));
        let ce = rows.iter().map(|r| r.energy / (2.0 * omega - r.c2).powf(1.5)).fold(0.0, f64::max);
        let cj = rows
            .iter()
            .map(|r| r.phase_jump.abs() / (2.0 * omega - r.c2).sqrt())
            .fold(0.0, f64::max);
        let res = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        report.number("fitted_energy_constant", ce);
        report.number("fitted_phase_jump_constant", cj);
        report.number("max_residual", res);
        return Ok(());
    }
    let p = wave_params(cfg, cfg.wave.c2)?;
    let w = match tw::build_wave(&p, &grid) {
        Ok(w) => w,
        Err(e) => {
            report.set_status(wave_status(&e), Some(e.to_string()));
            return Ok(());
        }
    };
    out.write(&primary(opts, "profile.csv"), |f| vio::write_wave_profile(f, &w))?;
    record_wave(&w, report);
    match tw::residual_tw(&w.v, &p, Some(&w.twist)) {
        Ok(r) => report.number("residual_tw", r),
        Err(e) => {
            report.set_status(wave_status(&e), Some(e.to_string()));
            return Ok(());
        }
    }
    // Φ(t) = v(σ + ct) under the reduced flow, checked at t = 1
    let state = PhiState::new(w.v.clone(), p.omega).with_twist(w.twist);
    let solver = BmSolver {
        delta_mod: cfg.guards.delta_mod,
        boundary_tol: None,
        nonlinear: NonlinearSubstep::Rk4,
    };
    match solver.evolve(&state, 1.0, cfg.time.dt, usize::MAX) {
        Ok(run) => {
            let fin = &run.states.last().expect("final state").phi;
            report.number("propagation_error", fin.sup_distance(&w.twist.shift(&w.v, -p.c)));
            report.number("propagation_energy_drift", run.relative_energy_drift());
        }
        Err(e) => report.set_status("NumericalGuard", Some(e.to_string())),
    }
    Ok(())
}

fn run_helix(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let grid = make_grid_cfg(cfg)?;
    let p = wave_params(cfg, cfg.wave.c2)?;
    let nu = cfg.helix.nu.unwrap_or(0.5 * p.c);
    if !grid.is_grid_wavenumber(nu) {
        return Err(ConfigError::new(
            "helix.nu",
            format!("ν = {nu} is not a wavenumber of the box with L = {}", grid.half_length()),
        )
        .into());
    }
    let w = match tw::build_wave(&p, &grid) {
        Ok(w) => w,
        Err(e) => {
            report.set_status(wave_status(&e), Some(e.to_string()));
            return Ok(());
        }
    };
    record_wave(&w, report);
    report.number("nu", nu);
    let moduli = |f: &[ComplexField]| -> Vec<Vec<f64>> {
        f.iter().map(|g| g.values().iter().map(|z| z.norm()).collect()).collect()
    };
    let mut base: Option<Vec<Vec<f64>>> = None;
    let mut drift: f64 = 0.0;
    for &t in &cfg.helix.times {
        let fields = match tw::helix_filaments(&w, cfg.helix.n, nu, t) {
            Ok(f) => f,
            Err(e) => {
                report.set_status(wave_status(&e), Some(e.to_string()));
                return Ok(());
            }
        };
        out.dump_fields(&time_stem("helix", t), &fields, opts.raw)?;
        let m = moduli(&fields);
        match &base {
            None => base = Some(m),
            Some(b) => {
                for (x, y) in b.iter().flatten().zip(m.iter().flatten()) {
                    drift = drift.max((x - y).abs());
                }
            }
        }
    }
    report.number("modulus_drift", drift);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let labels = [
            "Completed",
            "ConfigError",
            "CollisionDetected",
            "EnergyCapExceeded",
            "BoundaryContaminated",
            "NumericalGuard",
        ];
        let codes: Vec<i32> = labels.iter().map(|l| exit_code(l)).collect();
        assert_eq!(codes, vec![0, 2, 3, 4, 5, 6]);
        assert_eq!(exit_code("Failed"), 1);
    }

    #[test]
    fn parallelogram_data_has_vanishing_diagonals() {
        let mut cfg = ScenarioConfig::preset(ScenarioKind::Square);
        cfg.grid.m = 512;
        let grid = make_grid_cfg(&cfg).unwrap();
        let s = initial_filaments(&cfg, &grid).unwrap();
        let (v, w) = filament::vw_decompose(&s).unwrap();
        assert_eq!(v.values().iter().map(|z| z.norm()).fold(0.0, f64::max), 0.0);
        assert_eq!(w.values().iter().map(|z| z.norm()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn tilde_e0_target_is_hit() {
        let mut cfg = ScenarioConfig::preset(ScenarioKind::Square);
        cfg.grid.m = 512;
        cfg.perturbation = PerturbationConfig::Gaussian {
            amplitude: 0.01,
            width: 2.0,
            spread: 1.0,
            coefficients: None,
            target_tilde_e0: Some(1e-3),
        };
        let grid = make_grid_cfg(&cfg).unwrap();
        let s = initial_filaments(&cfg, &grid).unwrap();
        let te = filament::tilde_e0(&s).unwrap();
        assert!((te / 1e-3 - 1.0).abs() < 1e-8, "{te}");
    }

    #[test]
    fn seeds_change_random_data() {
        let mut cfg = ScenarioConfig::preset(ScenarioKind::Square);
        cfg.grid.m = 256;
        let grid = make_grid_cfg(&cfg).unwrap();
        let a = initial_filaments(&cfg, &grid).unwrap();
        let b = initial_filaments(&cfg, &grid).unwrap();
        cfg.seed = 7;
        let c = initial_filaments(&cfg, &grid).unwrap();
        assert_eq!(a.u[0].values(), b.u[0].values());
        assert_ne!(a.u[0].values(), c.u[0].values());
    }

    #[test]
    fn geometry_kinds() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(vortex_config(&cfg).unwrap().len(), 4);
        cfg.config.kind = GeometryKind::Segment;
        let seg = vortex_config(&cfg).unwrap();
        assert!(seg.has_center && seg.len() == 3);
        cfg.config.kind = GeometryKind::Hexagon;
        assert_eq!(vortex_config(&cfg).unwrap().len(), 6);
        cfg.config.n = Some(5);
        assert_eq!(vortex_config(&cfg).unwrap_err().path, "config.N");
    }
}
