//! Experiment driver for the degenerate convection-diffusion MLMC solver.
//!
//! Subcommands: `solve` (one deterministic run), `mc` / `mlmc` (estimator
//! runs with field dumps and diagnostics), `table` (convergence study) and
//! `validate` (invariant battery). Every config key can be given in an
//! INI-like file and overridden by the CLI flag of the same name.

mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::RawConfig;
use degen_mlmc::harness::{
    convergence_study, estimator_provenance, validation_suite, ExperimentConfig,
};
use degen_mlmc::mc::mc_estimate;
use degen_mlmc::mlmc::mlmc_estimate;
use degen_mlmc::output::write_field;
use degen_mlmc::sampling::stream_for;
use degen_mlmc::solver::{run_field, run_observed, StepRecord};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "degen-mlmc", version, about)]
struct Cli {
    /// Configuration file (INI-like sections with key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    // Per-key overrides; names match the config keys.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    initial: Option<String>,
    #[arg(long, global = true)]
    q: Option<String>,
    #[arg(long, global = true)]
    k_bar: Option<String>,
    #[arg(long, global = true)]
    nu: Option<String>,
    #[arg(long, global = true)]
    eps_reg: Option<String>,
    #[arg(long, global = true)]
    p_min: Option<String>,
    #[arg(long, global = true)]
    p_max: Option<String>,
    #[arg(long, global = true)]
    sw_min: Option<String>,
    #[arg(long, global = true)]
    sw_max: Option<String>,
    #[arg(long, global = true)]
    so_min: Option<String>,
    #[arg(long, global = true)]
    so_max: Option<String>,
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    cfl: Option<String>,
    #[arg(long, global = true)]
    theta: Option<String>,
    #[arg(long, global = true)]
    newton_tol_factor: Option<String>,
    #[arg(long, global = true)]
    newton_max_iter: Option<String>,
    #[arg(long, global = true)]
    strict_rate_cfl: Option<String>,
    #[arg(long, global = true)]
    dx0: Option<String>,
    #[arg(long, global = true)]
    k_refine: Option<String>,
    #[arg(long, global = true)]
    level_max: Option<String>,
    #[arg(long, global = true)]
    m_base: Option<String>,
    #[arg(long, global = true)]
    final_time: Option<String>,
    #[arg(long, global = true)]
    replicates: Option<String>,
    #[arg(long, global = true)]
    m_samples: Option<String>,
    #[arg(long, global = true)]
    master_seed: Option<String>,
    #[arg(long, global = true)]
    reference: Option<String>,
    #[arg(long, global = true)]
    ref_nodes: Option<String>,
    #[arg(long, global = true)]
    ref_level: Option<String>,
    #[arg(long, global = true)]
    ref_seed: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    #[arg(long, global = true)]
    workers: Option<String>,
    /// on/off: when off, wall-clock columns are zeroed so outputs are
    /// byte-identical across runs and worker counts.
    #[arg(long, global = true)]
    timing: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One deterministic run of the configured scheme on the finest grid;
    /// dumps the solution field.
    Solve {
        /// Write a per-step trace file ("step time dt residual newton_iters").
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Single-level Monte Carlo estimate (mean and std fields).
    Mc,
    /// Multilevel Monte Carlo estimate (mean/std fields plus per-level
    /// diagnostics CSV).
    Mlmc,
    /// Convergence study over target levels; emits the rate table CSV.
    Table,
    /// Run the invariant battery against the configured model.
    Validate,
}

fn raw_config(cli: &Cli) -> Result<RawConfig> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    let overrides: [(&str, &Option<String>); 32] = [
        ("model", &cli.model),
        ("initial", &cli.initial),
        ("q", &cli.q),
        ("k_bar", &cli.k_bar),
        ("nu", &cli.nu),
        ("eps_reg", &cli.eps_reg),
        ("p_min", &cli.p_min),
        ("p_max", &cli.p_max),
        ("sw_min", &cli.sw_min),
        ("sw_max", &cli.sw_max),
        ("so_min", &cli.so_min),
        ("so_max", &cli.so_max),
        ("scheme", &cli.scheme),
        ("cfl", &cli.cfl),
        ("theta", &cli.theta),
        ("newton_tol_factor", &cli.newton_tol_factor),
        ("newton_max_iter", &cli.newton_max_iter),
        ("strict_rate_cfl", &cli.strict_rate_cfl),
        ("dx0", &cli.dx0),
        ("k_refine", &cli.k_refine),
        ("level_max", &cli.level_max),
        ("m_base", &cli.m_base),
        ("final_time", &cli.final_time),
        ("replicates", &cli.replicates),
        ("m_samples", &cli.m_samples),
        ("master_seed", &cli.master_seed),
        ("reference", &cli.reference),
        ("ref_nodes", &cli.ref_nodes),
        ("ref_level", &cli.ref_level),
        ("ref_seed", &cli.ref_seed),
        ("output_dir", &cli.output_dir),
        ("workers", &cli.workers),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            raw.set(key, v.clone());
        }
    }
    if let Some(v) = &cli.timing {
        raw.set("timing", v.clone());
    }
    Ok(raw)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let raw = raw_config(&cli)?;
    let cfg = raw.experiment()?;
    cfg.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("cannot build worker pool")?;
    pool.install(|| dispatch(&cli.command, &cfg, &raw))
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir.join(name))
}

fn dispatch(command: &Command, cfg: &ExperimentConfig, raw: &RawConfig) -> Result<()> {
    match command {
        Command::Solve { trace } => solve(cfg, trace.as_deref()),
        Command::Mc => mc(cfg, raw.m_samples()?),
        Command::Mlmc => mlmc(cfg),
        Command::Table => table(cfg),
        Command::Validate => validate(cfg),
    }
}

fn solve(cfg: &ExperimentConfig, trace: Option<&std::path::Path>) -> Result<()> {
    let grid = cfg.hierarchy(cfg.level_max)?.finest_grid();
    let mut stream = stream_for(cfg.master_seed, 0, 0);
    let sample = cfg.model.draw(&mut stream)?;
    let u0 = sample.initial.averages(grid)?;

    let mut trace_writer = match trace {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path)
                    .with_context(|| format!("cannot create trace file {}", path.display()))?,
            );
            writeln!(w, "# step time dt residual newton_iters")?;
            Some(w)
        }
        None => None,
    };
    let mut observer = |rec: &StepRecord, _: &degen_mlmc::grid::SolutionField| {
        if let Some(w) = trace_writer.as_mut() {
            let _ = writeln!(
                w,
                "{} {} {} {} {}",
                rec.step, rec.time, rec.dt, rec.residual, rec.newton_iters
            );
        }
    };
    let (u, work) = match trace {
        Some(_) => run_observed(u0, &sample.flux, &cfg.scheme, cfg.t_final, &mut observer)?,
        None => run_field(u0, &sample.flux, &cfg.scheme, cfg.t_final)?,
    };

    let mut lines = vec![
        sample.descriptor.clone(),
        format!("master_seed={}", cfg.master_seed),
        format!("scheme={}", cfg.scheme.kind.name()),
        format!("cell_updates={}", work.cell_updates),
    ];
    if cfg.include_timing {
        lines.push(format!("wall_seconds={}", work.wall_seconds));
    }
    let path = out_path(cfg, "solution.dat")?;
    let mut w = BufWriter::new(File::create(&path)?);
    write_field(&mut w, &u, None, &lines)?;
    println!(
        "solve: {} cells to t = {}, {} cell updates -> {}",
        u.grid.n_cells(),
        u.time,
        work.cell_updates,
        path.display()
    );
    Ok(())
}

fn mc(cfg: &ExperimentConfig, m_samples: usize) -> Result<()> {
    let grid = cfg.hierarchy(cfg.level_max)?.finest_grid();
    let est = mc_estimate(
        &cfg.model,
        grid,
        &cfg.scheme,
        cfg.t_final,
        m_samples,
        cfg.master_seed,
    )?;
    let path = out_path(cfg, "mc_field.dat")?;
    let mut w = BufWriter::new(File::create(&path)?);
    write_field(
        &mut w,
        &est.mean,
        Some(&est.std),
        &estimator_provenance(&est, cfg.include_timing),
    )?;
    println!(
        "mc: M = {m_samples} samples on {} cells (seed {}) -> {}",
        grid.n_cells(),
        cfg.master_seed,
        path.display()
    );
    Ok(())
}

fn mlmc(cfg: &ExperimentConfig) -> Result<()> {
    let h = cfg.hierarchy(cfg.level_max)?;
    let (est, diag) = mlmc_estimate(&cfg.model, &h, &cfg.scheme, cfg.t_final, cfg.master_seed)?;
    let field_path = out_path(cfg, "mlmc_field.dat")?;
    let mut w = BufWriter::new(File::create(&field_path)?);
    write_field(
        &mut w,
        &est.mean,
        Some(&est.std),
        &estimator_provenance(&est, cfg.include_timing),
    )?;
    let diag_path = out_path(cfg, "mlmc_levels.csv")?;
    std::fs::write(&diag_path, diag.to_csv(cfg.include_timing))?;
    println!(
        "mlmc: L = {} with M = {:?} (seed {}) -> {}, {}",
        cfg.level_max,
        est.m_samples,
        cfg.master_seed,
        field_path.display(),
        diag_path.display()
    );
    Ok(())
}

fn table(cfg: &ExperimentConfig) -> Result<()> {
    let report = convergence_study(cfg)?;
    for row in &report.rows {
        println!(
            "L={} RE={:.4} dx={} bv={:.4} linf={:.4}",
            row.level, row.re_percent, row.dx, row.bv, row.linf
        );
    }
    if cfg.include_timing {
        println!(
            "rates: vs dx {:.4}, vs run time {:.4}, vs cell updates {:.4}",
            report.rate_vs_dx, report.rate_vs_work_wall, report.rate_vs_work_updates
        );
    } else {
        println!(
            "rates: vs dx {:.4}, vs cell updates {:.4}",
            report.rate_vs_dx, report.rate_vs_work_updates
        );
    }
    if let Some(dir) = &cfg.output_dir {
        println!(
            "table (seed {}) -> {}",
            cfg.master_seed,
            dir.join("table.csv").display()
        );
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let checks = validation_suite(cfg)?;
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("check {:<20} {status}  ({})", c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
