use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use vafem::meshio::{mesh_svg, MeshText};
use vafem::models::ModelKind;
use vafem::report::write_reports;
use vafem::run::{ailfem_run_with, LevelRecord, RunConfig};

#[derive(Parser)]
#[command(name = "vafem", version, about = "Energy-driven adaptive finite elements for nonlinear elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop and write reports.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print or export the initial mesh of a configuration.
    Mesh {
        config: PathBuf,
        /// Write the mesh in text format to this path.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Write an SVG drawing of the mesh to this path.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_dof: Option<usize>,
    #[arg(long)]
    max_levels: Option<usize>,
    #[arg(long)]
    initial_n: Option<usize>,
    #[arg(long)]
    local_only: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads for the indicator sweep.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Overrides {
    fn apply(self, c: &mut RunConfig) {
        if let Some(v) = self.model {
            c.model = v;
        }
        if let Some(v) = self.nu {
            c.nu = v;
        }
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if self.alpha.is_some() {
            c.alpha = self.alpha;
        }
        if let Some(v) = self.theta {
            c.theta = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.max_dof {
            c.max_dof = v;
        }
        if let Some(v) = self.max_levels {
            c.max_levels = v;
        }
        if let Some(v) = self.initial_n {
            c.initial_n = v;
        }
        if self.local_only {
            c.local_only = true;
        }
        if let Some(v) = self.max_iter {
            c.max_iter = v;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
    }
}

fn load(path: &Path, overrides: Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = RunConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn fmt_opt(x: Option<f64>, prec: usize) -> String {
    x.map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into())
}

fn print_row(r: &LevelRecord) {
    println!(
        "{:>8} {:>11.3e} {:>7} {:>11.3e} {:>7} {:>4}{} {:>11}",
        r.dof,
        r.residual,
        fmt_opt(r.rate_r, 3),
        r.delta_e,
        fmt_opt(r.ratio_e, 3),
        r.n_star,
        if r.converged { " " } else { "!" },
        r.h1_error.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into()),
    );
}

fn run(config: RunConfig) -> Result<ExitCode> {
    println!("{:>8} {:>11} {:>7} {:>11} {:>7} {:>5} {:>11}", "dof", "residual", "rate_r", "delta_e", "ratio_e", "n*", "h1_error");
    let outcome = ailfem_run_with(&config, print_row)?;
    if let Some(dir) = &config.out {
        for path in write_reports(&outcome, Path::new(dir))? {
            eprintln!("wrote {}", path.display());
        }
    }
    if outcome.has_unconverged_level() {
        eprintln!("warning: some levels reached the iteration limit (marked '!')");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn mesh(config: RunConfig, export: Option<PathBuf>, svg: Option<PathBuf>) -> Result<ExitCode> {
    let m = config.initial_mesh()?;
    println!(
        "{} vertices, {} elements, {} unknowns, area {:.6}, max shape ratio {:.3}",
        m.num_vertices(),
        m.num_elements(),
        m.num_interior_vertices(),
        m.total_area(),
        m.max_shape_ratio()
    );
    if let Some(path) = export {
        std::fs::write(&path, MeshText::from_mesh(&m, None).render()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = svg {
        std::fs::write(&path, mesh_svg(&m, None)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, overrides } => load(&config, overrides).and_then(run),
        Command::Mesh { config, export, svg, overrides } => load(&config, overrides).and_then(|c| mesh(c, export, svg)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
