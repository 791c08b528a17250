//! Multilevel Monte Carlo estimation on nested grids: many cheap coarse
//! samples, few expensive fine samples, with the level-dependent sample
//! counts M_l = ceil(m_base * 2^(2K(L-l)/3)) that equilibrate the sampling
//! error across levels against the finest-level discretization error.
//!
//! The estimator telescopes over coupled "details": sample i on level l is
//! ONE random draw solved at both resolutions l and l-1, with the convention
//! that the level -1 solution is zero. The same (seed, level, index) stream
//! discipline as in [`crate::mc`] makes the estimate bit-reproducible across
//! worker counts.

use crate::grid::{prolong, GridSpec, SolutionField};
use crate::mc::{run_sample_on, sample_err, EstimatorResult, Provenance};
use crate::models::RandomDataModel;
use crate::numeric::{pairwise_sum, row_mean_and_variance};
use crate::sampling::stream_for;
use crate::solver::{SchemeConfig, WorkCounter};
use rayon::prelude::*;

pub use crate::mc::EstimatorError;

/// Nested grids with per-level cell sizes dx_l = 2^(-K l) dx_0 and sample
/// counts M_l.
#[derive(Clone, Debug)]
pub struct LevelHierarchy {
    base: GridSpec,
    k_refine: u32,
    finest_level: usize,
    m_base: usize,
    levels: Vec<LevelSpec>,
}

#[derive(Clone, Copy, Debug)]
pub struct LevelSpec {
    pub level: usize,
    pub grid: GridSpec,
    pub dx: f64,
    pub m_samples: usize,
}

impl LevelHierarchy {
    /// Builds the hierarchy over levels 0..=finest_level on refinements of
    /// `base`. `m_base` is the sample count at the FINEST level.
    pub fn new(
        base: GridSpec,
        k_refine: u32,
        finest_level: usize,
        m_base: usize,
    ) -> Result<Self, EstimatorError> {
        if k_refine == 0 {
            return Err(EstimatorError::InvalidConfig(
                "refinement exponent K must be at least 1 (2^K >= 2)".into(),
            ));
        }
        if m_base == 0 {
            return Err(EstimatorError::InvalidConfig(
                "m_base must be at least 1".into(),
            ));
        }
        let mut levels = Vec::with_capacity(finest_level + 1);
        for level in 0..=finest_level {
            let shift = k_refine as usize * level;
            let factor = 1usize
                .checked_shl(shift as u32)
                .filter(|f| base.n_cells().checked_mul(*f).is_some())
                .ok_or_else(|| {
                    EstimatorError::InvalidConfig(format!(
                        "hierarchy overflows at level {level} (K = {k_refine})"
                    ))
                })?;
            let grid = base.refined(factor);
            levels.push(LevelSpec {
                level,
                grid,
                dx: grid.dx(),
                m_samples: allocation(m_base, k_refine, finest_level, level).ok_or_else(|| {
                    EstimatorError::InvalidConfig(format!(
                        "sample allocation overflows at level {level}"
                    ))
                })?,
            });
        }
        Ok(LevelHierarchy {
            base,
            k_refine,
            finest_level,
            m_base,
            levels,
        })
    }

    pub fn base_grid(&self) -> GridSpec {
        self.base
    }

    pub fn k_refine(&self) -> u32 {
        self.k_refine
    }

    pub fn finest_level(&self) -> usize {
        self.finest_level
    }

    pub fn m_base(&self) -> usize {
        self.m_base
    }

    pub fn levels(&self) -> &[LevelSpec] {
        &self.levels
    }

    pub fn finest_grid(&self) -> GridSpec {
        self.levels[self.finest_level].grid
    }
}

/// M_l = ceil(m_base * 2^(2K(L-l)/3)); exact integer arithmetic whenever the
/// exponent is a whole number.
fn allocation(m_base: usize, k: u32, finest: usize, level: usize) -> Option<usize> {
    let e = 2 * k as usize * (finest - level);
    if e.is_multiple_of(3) {
        m_base.checked_shl((e / 3) as u32)
    } else {
        let v = m_base as f64 * 2f64.powf(e as f64 / 3.0);
        if v > usize::MAX as f64 / 2.0 {
            None
        } else {
            Some(v.ceil() as usize)
        }
    }
}

/// The per-level sample counts of the hierarchy, coarsest first.
pub fn sample_allocation(h: &LevelHierarchy) -> Vec<usize> {
    h.levels.iter().map(|l| l.m_samples).collect()
}

/// Per-level statistics of the coupled details u_l - u_{l-1}.
#[derive(Clone, Debug)]
pub struct LevelDiagnostics {
    pub rows: Vec<LevelRow>,
}

#[derive(Clone, Copy, Debug)]
pub struct LevelRow {
    pub level: usize,
    pub dx: f64,
    pub m_samples: usize,
    /// Sample mean of ||u_l - u_{l-1}||_L1.
    pub detail_l1_mean: f64,
    /// Unbiased sample variance of ||u_l - u_{l-1}||_L1.
    pub detail_l1_var: f64,
    pub cell_updates: u64,
    pub wall_seconds: f64,
}

impl LevelDiagnostics {
    /// CSV with the fixed column layout
    /// `level,dx,M,detail_l1_mean,detail_l1_var,work_cell_updates,wall_seconds`.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut s = String::from(
            "level,dx,M,detail_l1_mean,detail_l1_var,work_cell_updates,wall_seconds\n",
        );
        for r in &self.rows {
            let wall = if include_timing { r.wall_seconds } else { 0.0 };
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.level, r.dx, r.m_samples, r.detail_l1_mean, r.detail_l1_var, r.cell_updates, wall
            ));
        }
        s
    }
}

struct TaskOut {
    detail: Vec<f64>,
    detail_l1: f64,
    work: WorkCounter,
}

fn mlmc_moment(
    model: &RandomDataModel,
    h: &LevelHierarchy,
    cfg: &SchemeConfig,
    t_final: f64,
    seed: u64,
    power: i32,
) -> Result<(EstimatorResult, LevelDiagnostics), EstimatorError> {
    model
        .validate()
        .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))?;
    cfg.validate().map_err(EstimatorError::InvalidConfig)?;

    let tasks: Vec<(usize, usize)> = h
        .levels
        .iter()
        .flat_map(|l| (0..l.m_samples).map(move |i| (l.level, i)))
        .collect();

    let outcomes: Vec<Result<TaskOut, EstimatorError>> = tasks
        .par_iter()
        .map(|&(level, index)| {
            // One draw per (level, index); the same realization is solved on
            // both resolutions of the detail.
            let mut stream = stream_for(seed, level, index);
            let sample = model
                .draw(&mut stream)
                .map_err(|e| sample_err(level, index, e))?;
            let grid = h.levels[level].grid;
            let (fine, mut work) = run_sample_on(&sample, grid, cfg, t_final, level, index)?;
            let fine_vals: Vec<f64> = if power == 1 {
                fine.values
            } else {
                fine.values.iter().map(|v| v.powi(power)).collect()
            };
            let detail = if level == 0 {
                // u_{-1} := 0, so the level-0 detail is the solution itself.
                fine_vals
            } else {
                let coarse_grid = h.levels[level - 1].grid;
                let (coarse, cw) = run_sample_on(&sample, coarse_grid, cfg, t_final, level, index)?;
                work.merge(&cw);
                let coarse_pow = if power == 1 {
                    coarse
                } else {
                    coarse.map(|v| v.powi(power))
                };
                let coarse_up =
                    prolong(&coarse_pow, grid).map_err(|e| sample_err(level, index, e))?;
                fine_vals
                    .iter()
                    .zip(&coarse_up.values)
                    .map(|(f, c)| f - c)
                    .collect()
            };
            let abs: Vec<f64> = detail.iter().map(|v| v.abs()).collect();
            let detail_l1 = pairwise_sum(&abs) * grid.dx();
            Ok(TaskOut {
                detail,
                detail_l1,
                work,
            })
        })
        .collect();

    let mut per_level: Vec<Vec<TaskOut>> = h.levels.iter().map(|_| Vec::new()).collect();
    for (outcome, &(level, _)) in outcomes.into_iter().zip(&tasks) {
        per_level[level].push(outcome?);
    }

    let finest = h.finest_grid();
    let mut mean_acc = vec![0.0; finest.n_cells()];
    let mut var_acc = vec![0.0; finest.n_cells()];
    let mut work = WorkCounter::default();
    let mut rows = Vec::with_capacity(h.levels.len());
    for (spec, outs) in h.levels.iter().zip(&per_level) {
        let details: Vec<Vec<f64>> = outs.iter().map(|o| o.detail.clone()).collect();
        let (mean_l, var_l) = row_mean_and_variance(&details);
        let mean_field = SolutionField::new(spec.grid, mean_l, t_final);
        let var_field = SolutionField::new(spec.grid, var_l, t_final);
        let mean_up = prolong(&mean_field, finest)?;
        let var_up = prolong(&var_field, finest)?;
        for j in 0..mean_acc.len() {
            mean_acc[j] += mean_up.values[j];
            var_acc[j] += var_up.values[j];
        }

        let norms: Vec<f64> = outs.iter().map(|o| o.detail_l1).collect();
        let (nm, nv) = scalar_mean_and_variance(&norms);
        let mut level_work = WorkCounter::default();
        for o in outs {
            level_work.merge(&o.work);
        }
        rows.push(LevelRow {
            level: spec.level,
            dx: spec.dx,
            m_samples: spec.m_samples,
            detail_l1_mean: nm,
            detail_l1_var: nv,
            cell_updates: level_work.cell_updates,
            wall_seconds: level_work.wall_seconds,
        });
        work.merge(&level_work);
    }

    let result = EstimatorResult {
        mean: SolutionField::new(finest, mean_acc, t_final),
        std: SolutionField::new(finest, var_acc.iter().map(|v| v.sqrt()).collect(), t_final),
        m_samples: sample_allocation(h),
        work,
        provenance: Provenance {
            descriptor: model.descriptor(),
            master_seed: seed,
            scheme: *cfg,
        },
    };
    Ok((result, LevelDiagnostics { rows }))
}

fn scalar_mean_and_variance(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    let mean = pairwise_sum(values) / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let devs: Vec<f64> = values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .collect();
    (mean, pairwise_sum(&devs) / (m - 1) as f64)
}

/// The multilevel Monte Carlo estimate of the mean field:
/// E^L = sum_l E_{M_l}[u_l - u_{l-1}], with all level means prolonged to the
/// finest grid. The `std` field is the square root of the summed per-level
/// sample variances of the details (levels are sampled independently).
pub fn mlmc_estimate(
    model: &RandomDataModel,
    h: &LevelHierarchy,
    cfg: &SchemeConfig,
    t_final: f64,
    seed: u64,
) -> Result<(EstimatorResult, LevelDiagnostics), EstimatorError> {
    mlmc_moment(model, h, cfg, t_final, seed, 1)
}

/// The multilevel telescope of pointwise squared fields:
/// E^{L,(2)} = sum_l E_{M_l}[(u_l)^2 - (u_{l-1})^2], same coupling and
/// prolongation rules as [`mlmc_estimate`].
pub fn mlmc_second_moment(
    model: &RandomDataModel,
    h: &LevelHierarchy,
    cfg: &SchemeConfig,
    t_final: f64,
    seed: u64,
) -> Result<(EstimatorResult, LevelDiagnostics), EstimatorError> {
    mlmc_moment(model, h, cfg, t_final, seed, 2)
}

/// Assembles the pointwise variance estimate E^{L,(2)} - (E^L)^2, clamped at
/// zero. Cells more negative than 10 * machine epsilon * scale are counted
/// as flagged; multilevel moment differences can dip slightly negative.
pub fn assemble_variance(
    mean: &SolutionField,
    second_moment: &SolutionField,
) -> (SolutionField, usize) {
    assert_eq!(mean.values.len(), second_moment.values.len());
    let scale = second_moment
        .linf_norm()
        .max(mean.linf_norm() * mean.linf_norm())
        .max(f64::MIN_POSITIVE);
    let eps = 10.0 * f64::EPSILON * scale;
    let mut flagged = 0usize;
    let values = mean
        .values
        .iter()
        .zip(&second_moment.values)
        .map(|(m, s)| {
            let v = s - m * m;
            if v < -eps {
                flagged += 1;
            }
            v.max(0.0)
        })
        .collect();
    (SolutionField::new(mean.grid, values, mean.time), flagged)
}
