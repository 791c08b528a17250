//! Single-level Monte Carlo estimation of mean and second-moment fields of
//! the random entropy solution: draw M i.i.d. data samples, solve each with
//! the deterministic scheme, and average.
//!
//! Samples are evaluated concurrently on the current rayon pool; the
//! reduction runs in a fixed pairwise tree over sample indices, so results
//! are bit-identical for any worker count.

use crate::grid::{GridError, GridSpec, SolutionField};
use crate::models::{RandomDataModel, Sample};
use crate::numeric::row_mean_and_variance;
use crate::sampling::stream_for;
use crate::solver::{run_field, SchemeConfig, WorkCounter};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("sample (level {level}, index {index}) failed: {source}")]
    Sample {
        level: usize,
        index: usize,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("estimator needs at least one sample")]
    NoSamples,
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub(crate) fn sample_err(
    level: usize,
    index: usize,
    source: impl std::error::Error + Send + Sync + 'static,
) -> EstimatorError {
    EstimatorError::Sample {
        level,
        index,
        source: Box::new(source),
    }
}

/// What produced an estimate, for output headers.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub descriptor: String,
    pub master_seed: u64,
    pub scheme: SchemeConfig,
}

/// Mean and pointwise sample standard deviation of an ensemble of solution
/// fields, with aggregated work and provenance.
#[derive(Clone, Debug)]
pub struct EstimatorResult {
    pub mean: SolutionField,
    pub std: SolutionField,
    /// Sample count; one entry per level for multilevel estimates.
    pub m_samples: Vec<usize>,
    pub work: WorkCounter,
    pub provenance: Provenance,
}

/// Runs one data sample on `grid` up to `t_final`.
pub(crate) fn run_sample_on(
    sample: &Sample,
    grid: GridSpec,
    cfg: &SchemeConfig,
    t_final: f64,
    level: usize,
    index: usize,
) -> Result<(SolutionField, WorkCounter), EstimatorError> {
    let (dom_lo, dom_hi) = sample.initial.domain();
    if grid.x_min() != dom_lo || grid.x_max() != dom_hi {
        return Err(EstimatorError::InvalidConfig(format!(
            "grid domain [{}, {}] does not match the initial-data domain [{}, {}]",
            grid.x_min(),
            grid.x_max(),
            dom_lo,
            dom_hi
        )));
    }
    let u0 = sample
        .initial
        .averages(grid)
        .map_err(|e| sample_err(level, index, e))?;
    run_field(u0, &sample.flux, cfg, t_final).map_err(|e| sample_err(level, index, e))
}

fn mc_moment(
    model: &RandomDataModel,
    grid: GridSpec,
    cfg: &SchemeConfig,
    t_final: f64,
    m: usize,
    seed: u64,
    power: i32,
) -> Result<EstimatorResult, EstimatorError> {
    if m == 0 {
        return Err(EstimatorError::NoSamples);
    }
    model
        .validate()
        .map_err(|e| EstimatorError::InvalidConfig(e.to_string()))?;
    cfg.validate().map_err(EstimatorError::InvalidConfig)?;

    let outcomes: Vec<Result<(Vec<f64>, WorkCounter), EstimatorError>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut stream = stream_for(seed, 0, i);
            let sample = model.draw(&mut stream).map_err(|e| sample_err(0, i, e))?;
            let (u, work) = run_sample_on(&sample, grid, cfg, t_final, 0, i)?;
            let values = if power == 1 {
                u.values
            } else {
                u.values.iter().map(|v| v.powi(power)).collect()
            };
            Ok((values, work))
        })
        .collect();

    // Report the failure with the smallest sample index, deterministically.
    let mut rows = Vec::with_capacity(m);
    let mut work = WorkCounter::default();
    for outcome in outcomes {
        let (values, w) = outcome?;
        work.merge(&w);
        rows.push(values);
    }

    let (mean_vals, var_vals) = row_mean_and_variance(&rows);
    let mean = SolutionField::new(grid, mean_vals, t_final);
    let std = SolutionField::new(grid, var_vals.iter().map(|v| v.sqrt()).collect(), t_final);
    Ok(EstimatorResult {
        mean,
        std,
        m_samples: vec![m],
        work,
        provenance: Provenance {
            descriptor: model.descriptor(),
            master_seed: seed,
            scheme: *cfg,
        },
    })
}

/// The Monte Carlo estimate of the mean field from M i.i.d. samples drawn
/// from streams (seed, 0, i), each solved deterministically on `grid`. The
/// `std` field is the pointwise square root of the unbiased sample variance
/// (zero when M = 1).
pub fn mc_estimate(
    model: &RandomDataModel,
    grid: GridSpec,
    cfg: &SchemeConfig,
    t_final: f64,
    m: usize,
    seed: u64,
) -> Result<EstimatorResult, EstimatorError> {
    mc_moment(model, grid, cfg, t_final, m, seed, 1)
}

/// As [`mc_estimate`], but for the pointwise second moment: the mean field
/// holds (1/M) sum (u^i)^2 and `std` its sampling standard deviation.
pub fn mc_second_moment(
    model: &RandomDataModel,
    grid: GridSpec,
    cfg: &SchemeConfig,
    t_final: f64,
    m: usize,
    seed: u64,
) -> Result<EstimatorResult, EstimatorError> {
    mc_moment(model, grid, cfg, t_final, m, seed, 2)
}
