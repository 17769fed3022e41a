//! Command-line driver: simulation runs, resolution studies, blowup-rate fits
//! and mesh dumps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use axisym::fitting::{fit_model1, fit_model2, FitResult, TimeSeries, Window};
use axisym::io::{self, Artifacts, Manifest, RunWriter, SummaryEcho};
use axisym::stepper::{initial_state, run_from, RunConfig};
use axisym::study::{run_study, StudySpec};

#[derive(Parser)]
#[command(name = "axisym", version, about = "Axisymmetric Navier-Stokes blowup solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write a run directory.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        /// Continue from a checkpoint instead of the initial data.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Resolution study over meshes (n0 p) x (m0 p).
    Study {
        /// Study specification (TOML with `p`, `times` and a `[run]` table).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "study")]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Fit inverse power laws to columns of a diagnostics CSV.
    Fit {
        csv: PathBuf,
        /// Column to fit; repeatable.
        #[arg(long = "column", default_value = "u1_max")]
        columns: Vec<String>,
        #[arg(long, default_value_t = Window::default().t1)]
        t1: f64,
        #[arg(long, default_value_t = Window::default().t2)]
        t2: f64,
        /// Also write the results as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the initial adapted mesh of a configuration, or the mesh of a checkpoint.
    MeshDump {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long, conflicts_with = "config")]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Run configuration (TOML key-value file).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[command(flatten)]
    over: Overrides,
}

/// Command-line values replacing those of the configuration file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    case: Option<u8>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "rlpf-k")]
    rlpf_k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.case {
            c.case = v;
        }
        if let Some(v) = self.mu {
            c.mu = v;
        }
        if let Some(v) = self.rlpf_k {
            c.rlpf_k = v;
        }
        if let Some(v) = self.n {
            c.n = v;
        }
        if let Some(v) = self.m {
            c.m = v;
        }
        if let Some(v) = self.t_end {
            c.t_end = v;
        }
        if let Some(v) = self.cfl {
            c.cfl = v;
        }
    }
}

fn resolve_config(opts: &RunOpts) -> Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(p) => io::load_config(p)?,
        None => RunConfig::new(opts.over.case.unwrap_or(1), 512, 256, 0.0),
    };
    opts.over.apply(&mut cfg);
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

/// Caps the global worker pool at `SIM_THREADS` when set.
fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("SIM_THREADS={v} is not a count"))?;
    if n == 0 {
        bail!("SIM_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn cmd_run(opts: &RunOpts, resume: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(opts)?;
    let state = match resume {
        Some(p) => {
            let s = io::load_checkpoint(p)?;
            if (s.mesh.n(), s.mesh.m()) != (cfg.n, cfg.m) {
                bail!("checkpoint mesh {}x{} does not match n = {}, m = {}", s.mesh.n(), s.mesh.m(), cfg.n, cfg.m);
            }
            s
        }
        None => initial_state(&cfg)?,
    };
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    let mut writer = RunWriter::create(&opts.out)?;
    let summary = run_from(&cfg, state, &mut writer)?;
    let mut files = writer.finish()?;

    let solver = cfg.solver()?;
    let nu_zero = solver.nu_fields(&summary.state.w1, &summary.state.mesh)?.is_zero();
    files.insert(0, "manifest.txt".into());
    let manifest =
        Manifest { config: cfg, summary: SummaryEcho::new(&summary, nu_zero), artifacts: Artifacts { files } };
    manifest.write(&opts.out)?;
    println!(
        "{}: t = {:.6e}, {} steps, {} mesh updates, {} records -> {}",
        summary.halt,
        summary.state.t,
        summary.steps,
        summary.mesh_updates,
        summary.records,
        opts.out.display()
    );
    Ok(())
}

fn cmd_study(config: &Path, out: &Path, over: &Overrides) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut spec: StudySpec = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    over.apply(&mut spec.run);
    fs::create_dir_all(out)?;
    let tables = run_study(&spec, Some(&out.join("levels")))?;
    let (mut txt, mut csv) = (String::new(), String::new());
    for (k, t) in tables.iter().enumerate() {
        txt.push_str(&t.to_text());
        txt.push('\n');
        let c = t.to_csv();
        csv.push_str(if k == 0 { &c } else { c.split_once('\n').map_or("", |x| x.1) });
    }
    fs::write(out.join("study.txt"), &txt)?;
    fs::write(out.join("study.csv"), &csv)?;
    print!("{txt}");
    Ok(())
}

fn report_line(column: &str, f: &FitResult) -> String {
    format!(
        "{column:<18} model {}  c = {:.4}  T = {:.4e}  R^2 = {:.8}  window [{:.4e}, {:.4e}]",
        f.model, f.c, f.t_blowup, f.r2, f.window.t1, f.window.t2
    )
}

fn cmd_fit(csv: &Path, columns: &[String], window: Window, out: Option<&Path>) -> Result<()> {
    if !(window.t2 > window.t1) {
        bail!("empty fitting window [{}, {}]", window.t1, window.t2);
    }
    let mut rows = String::from("column,model,c,t_blowup,r2,t1,t2\n");
    for col in columns {
        let (t, v) = io::read_series(csv, col)?;
        let series = TimeSeries::new(t, v).with_context(|| format!("column `{col}`"))?;
        let m1 = fit_model1(&series, window).with_context(|| format!("model 1 on `{col}`"))?;
        let m2 = fit_model2(&series, window, m1.c).with_context(|| format!("model 2 on `{col}`"))?;
        for f in [&m1, &m2] {
            println!("{}", report_line(col, f));
            rows.push_str(&format!(
                "{col},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                f.model, f.c, f.t_blowup, f.r2, f.window.t1, f.window.t2
            ));
        }
    }
    if let Some(p) = out {
        fs::write(p, rows).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_mesh_dump(opts: &RunOpts, checkpoint: Option<&Path>) -> Result<()> {
    let mesh = match checkpoint {
        Some(p) => io::load_checkpoint(p)?.mesh,
        None => initial_state(&resolve_config(opts)?)?.mesh,
    };
    let text = io::dump_mesh(&mesh);
    if opts.out.as_os_str() == "-" {
        print!("{text}");
    } else {
        fs::write(&opts.out, text).with_context(|| format!("writing {}", opts.out.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    init_threads()?;
    match &cli.cmd {
        Command::Run { opts, resume } => cmd_run(opts, resume.as_deref()),
        Command::Study { config, out, over } => cmd_study(config, out, over),
        Command::Fit { csv, columns, t1, t2, out } => {
            cmd_fit(csv, columns, Window { t1: *t1, t2: *t2 }, out.as_deref())
        }
        Command::MeshDump { opts, checkpoint } => cmd_mesh_dump(opts, checkpoint.as_deref()),
    }
}
