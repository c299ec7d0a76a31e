use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vfsim::config::SweepConfig;
use vfsim::runner::{self, write_config_error};
use vfsim::{ConfigError, RunOptions, ScenarioConfig, ScenarioKind};

/// Nearly parallel vortex filament simulator.
#[derive(Parser, Debug)]
#[command(name = "vfsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON; defaults to the built-in preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, or a `.csv` path for the primary output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel sections.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write field snapshots (`fields_t*.csv`).
    #[arg(long)]
    dump_fields: bool,
    /// Also write binary field dumps.
    #[arg(long)]
    raw: bool,
    /// Seed for random perturbations.
    #[arg(long)]
    seed: Option<u64>,
    /// Half-length of the periodic box.
    #[arg(long = "L")]
    l: Option<f64>,
    /// Number of grid points.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Final time.
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Point-vortex backbone integration.
    PointVortex {
        #[command(flatten)]
        common: Common,
        /// Polygon size (switches to a polygon configuration).
        #[arg(long = "N")]
        n: Option<usize>,
    },
    /// Linear stability verdicts of rotating polygons.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long = "N")]
        n: Option<usize>,
        /// Upper end of a range starting at `--N`.
        #[arg(long = "N-max")]
        n_max: Option<usize>,
    },
    /// Reduced single-profile equation.
    Reduced {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Perturbed rotating square.
    Square {
        #[command(flatten)]
        common: Common,
    },
    /// Exact collision of a centered square.
    Collision {
        #[command(flatten)]
        common: Common,
    },
    /// Travelling-wave construction or a speed sweep.
    TravelingWave {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        c2: Option<f64>,
        /// `c2=FROM:TO:COUNT`
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Helical filaments built from a travelling wave.
    Helix {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long = "N")]
        n: Option<usize>,
    },
}

impl Command {
    fn kind(&self) -> ScenarioKind {
        match self {
            Command::PointVortex { .. } => ScenarioKind::PointVortex,
            Command::Stability { .. } => ScenarioKind::Stability,
            Command::Reduced { .. } => ScenarioKind::Reduced,
            Command::Square { .. } => ScenarioKind::Square,
            Command::Collision { .. } => ScenarioKind::Collision,
            Command::TravelingWave { .. } => ScenarioKind::TravelingWave,
            Command::Helix { .. } => ScenarioKind::Helix,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::PointVortex { common, .. }
            | Command::Stability { common, .. }
            | Command::Reduced { common, .. }
            | Command::Square { common }
            | Command::Collision { common }
            | Command::TravelingWave { common, .. }
            | Command::Helix { common, .. } => common,
        }
    }
}

fn build_config(cmd: &Command) -> Result<ScenarioConfig, ConfigError> {
    let kind = cmd.kind();
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(path) => {
            let c = ScenarioConfig::from_path(path)?;
            match c.scenario {
                Some(k) if k != kind => {
                    return Err(ConfigError::new(
                        "scenario",
                        format!("file describes `{k}` but the subcommand is `{kind}`"),
                    ))
                }
                _ => ScenarioConfig {
                    scenario: Some(kind),
                    ..c
                },
            }
        }
        None => ScenarioConfig::preset(kind),
    };
    if let Some(l) = common.l {
        cfg.grid.l = l;
    }
    if let Some(m) = common.m {
        cfg.grid.m = m;
    }
    if let Some(t) = common.t {
        cfg.time.t = t;
    }
    if let Some(dt) = common.dt {
        cfg.time.dt = dt;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    match cmd {
        Command::PointVortex { n: Some(n), .. } => {
            cfg.config.kind = vfsim::config::GeometryKind::Polygon;
            cfg.config.n = Some(*n);
        }
        Command::Stability { n, n_max, .. } => {
            if let Some(n) = n {
                cfg.config.n = Some(*n);
                cfg.stability.n_range = Some([*n, n_max.unwrap_or(*n)]);
            } else if let Some(hi) = n_max {
                cfg.stability.n_range = Some([3, *hi]);
            }
        }
        Command::Reduced { omega: Some(w), .. } => cfg.reduced.omega = *w,
        Command::TravelingWave { omega, c2, sweep, .. } => {
            if let Some(w) = omega {
                cfg.wave.omega = *w;
            }
            if let Some(c) = c2 {
                cfg.wave.c2 = *c;
            }
            if let Some(s) = sweep {
                cfg.wave.sweep = Some(SweepConfig::parse(s)?);
            }
        }
        Command::Helix { c2, nu, n, .. } => {
            if let Some(c) = c2 {
                cfg.wave.c2 = *c;
            }
            if nu.is_some() {
                cfg.helix.nu = *nu;
            }
            if let Some(n) = n {
                cfg.helix.n = *n;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Splits `--out` into a directory and an optional primary file name.
fn split_out(out: Option<&Path>, kind: ScenarioKind) -> (PathBuf, Option<String>) {
    match out {
        None => (PathBuf::from("out").join(kind.name()), None),
        Some(p) if p.extension().is_some_and(|e| e == "csv") => {
            let dir = p
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
            (dir, name)
        }
        Some(p) => (p.to_path_buf(), None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.command.kind();
    let common = cli.command.common().clone();
    let (out_dir, primary_name) = split_out(common.out.as_deref(), kind);
    let cfg = match build_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vfsim: {e}");
            if let Err(io) = write_config_error(&out_dir, Some(kind), &e) {
                eprintln!("vfsim: cannot write status.json: {io}");
            }
            return ExitCode::from(runner::EXIT_CONFIG as u8);
        }
    };
    let opts = RunOptions {
        out_dir: out_dir.clone(),
        threads: common.threads,
        dump_fields: common.dump_fields,
        raw: common.raw,
        seed: common.seed,
        primary_name,
    };
    match vfsim::run(&cfg, &opts) {
        Ok(report) => {
            let note = report.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default();
            println!(
                "{}: {}{note}; outputs in {}",
                report.scenario,
                report.status,
                out_dir.display()
            );
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("vfsim: {e}");
            if let vfsim::RunError::Config(c) = &e {
                let _ = write_config_error(&out_dir, Some(kind), c);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
