//! Experiment driver: reference solutions, the relative-error estimator,
//! convergence tables with least-squares rate fits, and a programmatic
//! validation battery.

use crate::grid::{prolong, GridError, GridSpec, SolutionField};
use crate::mc::{run_sample_on, EstimatorError, EstimatorResult};
use crate::mlmc::{mlmc_estimate, sample_allocation, LevelHierarchy};
use crate::models::{initial_data, RandomDataModel};
use crate::numeric::{gauss_legendre, log_log_slope, pairwise_row_sum, pairwise_sum};
use crate::sampling::derive_seed;
use crate::solver::SchemeConfig;
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("reference solution has zero l1 norm; relative error is undefined")]
    ZeroReference,
    #[error("relative_error needs at least one run")]
    NoRuns,
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("model kind {0} has no deterministic quadrature reference")]
    UnsupportedQuadrature(&'static str),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// How the reference solution for error estimation is produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceSpec {
    /// Deterministic Gauss-Legendre quadrature over the random-parameter
    /// box, on a grid two refinement levels finer than the finest level of
    /// the study.
    Quadrature { nodes: usize },
    /// One MLMC run at the given level and seed (an estimator-based
    /// reference, subject to its own sampling error).
    Mlmc { level: usize, seed: u64 },
}

/// Full description of a convergence experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: RandomDataModel,
    pub scheme: SchemeConfig,
    /// Coarsest cell size; the base grid spans the initial-data domain.
    pub dx0: f64,
    pub k_refine: u32,
    /// The study runs target levels L = 0..=level_max.
    pub level_max: usize,
    pub m_base: usize,
    pub t_final: f64,
    /// Repetition count N of the relative-error estimator.
    pub replicates: usize,
    pub master_seed: u64,
    pub reference: ReferenceSpec,
    /// Directory for table/field outputs; no files are written when absent.
    pub output_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores); applied by the caller when building
    /// the thread pool.
    pub workers: usize,
    /// When false, wall-clock columns are written as zero so that output
    /// files are byte-identical across runs and worker counts.
    pub include_timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.scheme
            .validate()
            .map_err(HarnessError::InvalidConfig)?;
        if !(self.t_final > 0.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "final time must be positive, got {}",
                self.t_final
            )));
        }
        if self.replicates == 0 {
            return Err(HarnessError::InvalidConfig(
                "replicate count N must be at least 1".into(),
            ));
        }
        self.base_grid()?;
        Ok(())
    }

    /// The coarsest grid: the initial-data domain divided into cells of
    /// size dx0.
    pub fn base_grid(&self) -> Result<GridSpec, HarnessError> {
        let (lo, hi) = initial_data(self.model.initial).domain();
        let len = hi - lo;
        let n = (len / self.dx0).round();
        if !(n >= 2.0) || ((n * self.dx0 - len).abs() > 1e-9 * len) {
            return Err(HarnessError::InvalidConfig(format!(
                "dx0 = {} does not evenly divide the domain length {}",
                self.dx0, len
            )));
        }
        Ok(GridSpec::new(lo, hi, n as usize)?)
    }

    pub fn hierarchy(&self, target_level: usize) -> Result<LevelHierarchy, HarnessError> {
        Ok(LevelHierarchy::new(
            self.base_grid()?,
            self.k_refine,
            target_level,
            self.m_base,
        )?)
    }
}

/// One row of the convergence table.
#[derive(Clone, Copy, Debug)]
pub struct ReportRow {
    pub level: usize,
    pub re_percent: f64,
    pub dx: f64,
    pub runtime_s: f64,
    pub bv: f64,
    pub linf: f64,
    pub cell_updates: f64,
}

/// Relative errors and rate fits over the target levels.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
    /// Least-squares slope of log RE against log dx_L (positive for a
    /// converging method).
    pub rate_vs_dx: f64,
    /// Slope of log RE against log wall-seconds (negative).
    pub rate_vs_work_wall: f64,
    /// Slope of log RE against log cell-updates (negative); the
    /// machine-independent variant.
    pub rate_vs_work_updates: f64,
}

impl ErrorReport {
    /// CSV with the fixed layout "L,RE,dx_L,runtime_s,bv,linf" and a
    /// trailing rate row carrying the dx-rate and the work-rate.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut s = String::from("L,RE,dx_L,runtime_s,bv,linf\n");
        for r in &self.rows {
            s.push_str(&row_csv(r, include_timing));
        }
        s.push_str(&self.rate_row_csv(include_timing));
        s
    }

    fn rate_row_csv(&self, include_timing: bool) -> String {
        let work_rate = if include_timing {
            self.rate_vs_work_wall
        } else {
            self.rate_vs_work_updates
        };
        format!("rate,,{},{},,\n", self.rate_vs_dx, work_rate)
    }
}

fn row_csv(r: &ReportRow, include_timing: bool) -> String {
    let runtime = if include_timing { r.runtime_s } else { 0.0 };
    format!(
        "{},{},{},{},{},{}\n",
        r.level, r.re_percent, r.dx, runtime, r.bv, r.linf
    )
}

/// The relative-error estimator: each run is prolonged to the reference
/// grid, RE_k = 100 ||U_ref - U_k||_l1 / ||U_ref||_l1 with the plain cell
/// sums, and RE is the root mean square of the RE_k over the runs.
pub fn relative_error(
    reference: &SolutionField,
    runs: &[SolutionField],
) -> Result<f64, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::NoRuns);
    }
    let abs_ref: Vec<f64> = reference.values.iter().map(|v| v.abs()).collect();
    let ref_norm = pairwise_sum(&abs_ref);
    if ref_norm == 0.0 {
        return Err(HarnessError::ZeroReference);
    }
    let mut sq = Vec::with_capacity(runs.len());
    for run in runs {
        let up = prolong(run, reference.grid)?;
        let diffs: Vec<f64> = reference
            .values
            .iter()
            .zip(&up.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let re_k = 100.0 * pairwise_sum(&diffs) / ref_norm;
        sq.push(re_k * re_k);
    }
    Ok((pairwise_sum(&sq) / runs.len() as f64).sqrt())
}

/// Variance-free reference for models whose random parameters live in a box
/// of dimension <= 2: tensor-product Gauss-Legendre quadrature over the
/// uniform parameter law, one deterministic solve per node.
pub fn quadrature_reference(
    model: &RandomDataModel,
    grid: GridSpec,
    cfg: &SchemeConfig,
    t_final: f64,
    n_nodes: usize,
) -> Result<SolutionField, HarnessError> {
    let dim = model.parameter_dim();
    let weighted_nodes: Vec<(Vec<f64>, f64)> = match dim {
        0 => vec![(vec![], 1.0)],
        1 | 2 => {
            let (xs, ws) = gauss_legendre(n_nodes);
            let box_ = model.parameter_box();
            // Map [-1,1] nodes into each parameter range; normalizing by the
            // range lengths makes the weights sum to one (a mean over the
            // uniform law).
            let axis: Vec<Vec<(f64, f64)>> = box_
                .iter()
                .map(|&(lo, hi)| {
                    xs.iter()
                        .zip(&ws)
                        .map(|(x, w)| (0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * w))
                        .collect()
                })
                .collect();
            if dim == 1 {
                axis[0].iter().map(|&(x, w)| (vec![x], w)).collect()
            } else {
                let mut nodes = Vec::with_capacity(n_nodes * n_nodes);
                for &(x0, w0) in &axis[0] {
                    for &(x1, w1) in &axis[1] {
                        nodes.push((vec![x0, x1], w0 * w1));
                    }
                }
                nodes
            }
        }
        _ => return Err(HarnessError::UnsupportedQuadrature(model.kind.name())),
    };

    let outcomes: Vec<Result<Vec<f64>, HarnessError>> = weighted_nodes
        .par_iter()
        .enumerate()
        .map(|(i, (coords, weight))| {
            let sample = model
                .realize(coords)
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
            let (u, _) = run_sample_on(&sample, grid, cfg, t_final, 0, i)?;
            Ok(u.values.iter().map(|v| v * weight).collect())
        })
        .collect();
    let mut rows = Vec::with_capacity(weighted_nodes.len());
    for o in outcomes {
        rows.push(o?);
    }
    Ok(SolutionField::new(grid, pairwise_row_sum(&rows), t_final))
}

/// Runs the full convergence study: for each target level L = 0..=level_max
/// the MLMC estimator is repeated N times with per-replicate seeds derived
/// from (master_seed, L, replicate), the relative error against the
/// reference is recorded together with run time, total variation and max
/// norm of the estimate, and the rates are fitted by least squares in
/// log-log coordinates. Partial tables are flushed to `table.csv` in the
/// output directory as rows complete.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ErrorReport, HarnessError> {
    cfg.validate()?;
    let reference = build_reference(cfg)?;

    let mut csv: Option<BufWriter<File>> = match &cfg.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("table.csv"))?);
            w.write_all(b"L,RE,dx_L,runtime_s,bv,linf\n")?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(cfg.level_max + 1);
    for level in 0..=cfg.level_max {
        let h = cfg.hierarchy(level)?;
        // Replicates run concurrently (each is itself a parallel MLMC run);
        // the reduction below stays in replicate order.
        let replicas: Vec<Result<EstimatorResult, EstimatorError>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.master_seed, level as u64, rep as u64);
                mlmc_estimate(&cfg.model, &h, &cfg.scheme, cfg.t_final, seed).map(|(est, _)| est)
            })
            .collect();
        let mut means = Vec::with_capacity(cfg.replicates);
        let mut wall = 0.0;
        let mut updates = 0.0;
        let mut bv = 0.0;
        let mut linf = 0.0;
        for replica in replicas {
            let est = replica?;
            wall += est.work.wall_seconds;
            updates += est.work.cell_updates as f64;
            bv += est.mean.bv_seminorm();
            linf += est.mean.linf_norm();
            means.push(est.mean);
        }
        let n = cfg.replicates as f64;
        let row = ReportRow {
            level,
            re_percent: relative_error(&reference, &means)?,
            dx: h.levels()[level].dx,
            runtime_s: wall / n,
            bv: bv / n,
            linf: linf / n,
            cell_updates: updates / n,
        };
        if let Some(w) = csv.as_mut() {
            w.write_all(row_csv(&row, cfg.include_timing).as_bytes())?;
            w.flush()?;
        }
        rows.push(row);
    }

    let fit_rows: Vec<&ReportRow> = rows.iter().filter(|r| r.re_percent > 0.0).collect();
    let (rate_vs_dx, rate_vs_work_wall, rate_vs_work_updates) = if fit_rows.len() >= 2 {
        let re: Vec<f64> = fit_rows.iter().map(|r| r.re_percent).collect();
        let dx: Vec<f64> = fit_rows.iter().map(|r| r.dx).collect();
        let up: Vec<f64> = fit_rows.iter().map(|r| r.cell_updates).collect();
        let wall_rate = if fit_rows.iter().all(|r| r.runtime_s > 0.0) {
            let t: Vec<f64> = fit_rows.iter().map(|r| r.runtime_s).collect();
            log_log_slope(&t, &re)
        } else {
            f64::NAN
        };
        (log_log_slope(&dx, &re), wall_rate, log_log_slope(&up, &re))
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    let report = ErrorReport {
        rows,
        rate_vs_dx,
        rate_vs_work_wall,
        rate_vs_work_updates,
    };
    if let Some(w) = csv.as_mut() {
        w.write_all(report.rate_row_csv(cfg.include_timing).as_bytes())?;
        w.flush()?;
    }
    Ok(report)
}

fn build_reference(cfg: &ExperimentConfig) -> Result<SolutionField, HarnessError> {
    match cfg.reference {
        ReferenceSpec::Quadrature { nodes } => {
            // Two levels finer than the finest grid of the study.
            let h = cfg.hierarchy(cfg.level_max)?;
            let factor = 1usize << (2 * cfg.k_refine as usize);
            let ref_grid = h.finest_grid().refined(factor);
            quadrature_reference(&cfg.model, ref_grid, &cfg.scheme, cfg.t_final, nodes)
        }
        ReferenceSpec::Mlmc { level, seed } => {
            if level <= cfg.level_max {
                return Err(HarnessError::InvalidConfig(format!(
                    "MLMC reference level {level} must exceed the study's finest level {}",
                    cfg.level_max
                )));
            }
            let h = cfg.hierarchy(level)?;
            let (est, _) = mlmc_estimate(&cfg.model, &h, &cfg.scheme, cfg.t_final, seed)?;
            Ok(est.mean)
        }
    }
}

/// A named pass/fail outcome of the validation battery.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Cheap invariant checks over the configured model: flux-splitting
/// consistency/monotonicity, scheme stability bounds on the base grid,
/// the sample-allocation identity, and seed reproducibility.
pub fn validation_suite(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>, HarnessError> {
    cfg.validate()?;
    let mut checks = Vec::new();
    let grid = cfg.base_grid()?;

    // Flux splitting invariants (the constructor re-validates them).
    let mut stream = crate::sampling::stream_for(cfg.master_seed, 0, 0);
    let sample = cfg
        .model
        .draw(&mut stream)
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let split = crate::flux::engquist_osher(&sample.flux);
    checks.push(CheckResult {
        name: "flux_splitting",
        passed: split.is_ok(),
        detail: match &split {
            Ok(_) => "consistent and monotone on the state probe".into(),
            Err(e) => e.to_string(),
        },
    });

    // Scheme stability bounds after one run on the base grid.
    let u0 = sample.initial.averages(grid).map_err(HarnessError::Grid)?;
    let before = (
        u0.l1_norm(),
        u0.bv_seminorm(),
        u0.min_value(),
        u0.max_value(),
    );
    match crate::solver::run_field(u0, &sample.flux, &cfg.scheme, cfg.t_final) {
        Ok((u, _)) => {
            let ok = u.l1_norm() <= before.0 + 1e-8
                && u.bv_seminorm() <= before.1 + 1e-8
                && u.min_value() >= before.2 - 1e-8
                && u.max_value() <= before.3 + 1e-8;
            checks.push(CheckResult {
                name: "scheme_stability",
                passed: ok,
                detail: format!(
                    "l1 {:.6} -> {:.6}, bv {:.6} -> {:.6}",
                    before.0,
                    u.l1_norm(),
                    before.1,
                    u.bv_seminorm()
                ),
            });
        }
        Err(e) => checks.push(CheckResult {
            name: "scheme_stability",
            passed: false,
            detail: e.to_string(),
        }),
    }

    // Allocation identity M_l = ceil(m_base 2^(2K(L-l)/3)).
    let h = cfg.hierarchy(cfg.level_max)?;
    let alloc = sample_allocation(&h);
    let ok = alloc.iter().enumerate().all(|(l, &m)| {
        let expect = (cfg.m_base as f64
            * 2f64.powf(2.0 * cfg.k_refine as f64 * (cfg.level_max - l) as f64 / 3.0))
        .ceil() as usize;
        m == expect
    });
    checks.push(CheckResult {
        name: "sample_allocation",
        passed: ok,
        detail: format!("{alloc:?}"),
    });

    // Bit-reproducibility of a small estimate.
    let h0 = cfg.hierarchy(cfg.level_max.min(1))?;
    let (a, _) = mlmc_estimate(&cfg.model, &h0, &cfg.scheme, cfg.t_final, cfg.master_seed)?;
    let (b, _) = mlmc_estimate(&cfg.model, &h0, &cfg.scheme, cfg.t_final, cfg.master_seed)?;
    checks.push(CheckResult {
        name: "reproducibility",
        passed: a.mean.values == b.mean.values && a.std.values == b.std.values,
        detail: "two estimates with one seed are bit-identical".into(),
    });

    Ok(checks)
}

/// Convenience re-export of the seed derivation used for replicate runs.
pub fn replicate_seed(master: u64, level: usize, replicate: usize) -> u64 {
    derive_seed(master, level as u64, replicate as u64)
}

/// Helper carrying an [`EstimatorResult`] into the field dump format.
pub fn estimator_provenance(est: &EstimatorResult, include_timing: bool) -> Vec<String> {
    let mut lines = vec![
        est.provenance.descriptor.clone(),
        format!("master_seed={}", est.provenance.master_seed),
        format!("scheme={}", est.provenance.scheme.kind.name()),
        format!("cfl={}", est.provenance.scheme.cfl),
        format!("theta={}", est.provenance.scheme.theta),
        format!("m_samples={:?}", est.m_samples),
        format!("cell_updates={}", est.work.cell_updates),
    ];
    if include_timing {
        lines.push(format!("wall_seconds={}", est.work.wall_seconds));
    }
    lines
}


#[cfg(test)]
mod reference_mode_tests {
    use super::*;
    use crate::models::{InitialKind, ModelKind, TwoPhaseParams};

    #[test]
    fn mlmc_reference_mode_drives_a_study() {
        let model = RandomDataModel::new(
            ModelKind::Deterministic,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        let cfg = ExperimentConfig {
            model,
            scheme: SchemeConfig::explicit(),
            dx0: 0.25,
            k_refine: 1,
            level_max: 1,
            m_base: 2,
            t_final: 0.1,
            replicates: 2,
            master_seed: 3,
            reference: ReferenceSpec::Mlmc { level: 3, seed: 55 },
            output_dir: None,
            workers: 0,
            include_timing: false,
        };
        let report = convergence_study(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        // Deterministic data: every replicate is the same discretization
        // error, decreasing with the level.
        assert!(report.rows[1].re_percent < report.rows[0].re_percent);
        assert!(report.rows.iter().all(|r| r.re_percent > 0.0));
    }
}
