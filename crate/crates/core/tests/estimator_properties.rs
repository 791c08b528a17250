//! Estimator-level properties: worker-count independence, estimator bounds,
//! variance assembly, and quadrature-reference self-consistency.

use degen_mlmc::grid::{l1_distance, GridSpec};
use degen_mlmc::harness::quadrature_reference;
use degen_mlmc::mc::mc_estimate;
use degen_mlmc::mlmc::{assemble_variance, mlmc_estimate, mlmc_second_moment, LevelHierarchy};
use degen_mlmc::models::{InitialKind, ModelKind, RandomDataModel, TwoPhaseParams};
use degen_mlmc::solver::SchemeConfig;

fn exp_model() -> RandomDataModel {
    RandomDataModel::new(
        ModelKind::RandomExponent,
        TwoPhaseParams::default(),
        InitialKind::RiemannU02,
    )
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(job)
}

#[test]
fn mc_estimate_is_identical_across_worker_counts() {
    let model = exp_model();
    let grid = GridSpec::new(0.0, 2.0, 32).unwrap();
    let cfg = SchemeConfig::explicit();
    let runs: Vec<_> = [1usize, 2, 8]
        .into_iter()
        .map(|w| in_pool(w, || mc_estimate(&model, grid, &cfg, 0.15, 6, 77).unwrap()))
        .collect();
    for other in &runs[1..] {
        assert_eq!(runs[0].mean.values, other.mean.values);
        assert_eq!(runs[0].std.values, other.std.values);
    }
}

#[test]
fn mlmc_estimate_is_identical_across_worker_counts() {
    let model = exp_model();
    let base = GridSpec::new(0.0, 2.0, 8).unwrap();
    let h = LevelHierarchy::new(base, 1, 2, 4).unwrap();
    let cfg = SchemeConfig::explicit();
    let runs: Vec<_> = [1usize, 2, 8]
        .into_iter()
        .map(|w| in_pool(w, || mlmc_estimate(&model, &h, &cfg, 0.15, 41).unwrap()))
        .collect();
    for (other, _) in &runs[1..] {
        assert_eq!(runs[0].0.mean.values, other.mean.values);
        assert_eq!(runs[0].0.std.values, other.std.values);
    }
    // Diagnostics (minus timing) agree as well.
    for (_, diag) in &runs[1..] {
        for (a, b) in runs[0].1.rows.iter().zip(&diag.rows) {
            assert_eq!(a.detail_l1_mean.to_bits(), b.detail_l1_mean.to_bits());
            assert_eq!(a.detail_l1_var.to_bits(), b.detail_l1_var.to_bits());
            assert_eq!(a.cell_updates, b.cell_updates);
        }
    }
}

#[test]
fn mlmc_mean_obeys_the_telescoped_bv_and_linf_bounds() {
    // |E^L|_BV <= 2 (L+1) |s0|_BV and the same for the max norm; the
    // observed values sit far below the bound.
    let model = exp_model();
    let base = GridSpec::new(0.0, 2.0, 16).unwrap();
    let level = 3usize;
    let h = LevelHierarchy::new(base, 1, level, 8).unwrap();
    let cfg = SchemeConfig::explicit();
    let (est, _) = mlmc_estimate(&model, &h, &cfg, 0.3, 2024).unwrap();
    let bv0 = 1.4;
    let linf0 = 0.8;
    let factor = 2.0 * (level as f64 + 1.0);
    assert!(est.mean.bv_seminorm() <= factor * bv0);
    assert!(est.mean.linf_norm() <= factor * linf0);
    // Empirically the estimate stays near the single-sample magnitudes.
    assert!(est.mean.bv_seminorm() <= 2.0 * bv0);
    assert!(est.mean.linf_norm() <= 1.2 * linf0);
}

#[test]
fn variance_assembly_flags_only_noise_level_cells() {
    // Shared draws make the single-level moment difference nonnegative up
    // to roundoff; the multilevel telescope can dip slightly negative. A
    // converged deterministic run must assemble to (numerically) zero.
    let det = RandomDataModel::new(
        ModelKind::Deterministic,
        TwoPhaseParams::default(),
        InitialKind::RiemannU02,
    );
    let base = GridSpec::new(0.0, 2.0, 16).unwrap();
    let h = LevelHierarchy::new(base, 1, 2, 4).unwrap();
    let cfg = SchemeConfig::explicit();
    let (m1, _) = mlmc_estimate(&det, &h, &cfg, 0.2, 9).unwrap();
    let (m2, _) = mlmc_second_moment(&det, &h, &cfg, 0.2, 9).unwrap();
    let (var, _flagged) = assemble_variance(&m1.mean, &m2.mean);
    let scale = m2.mean.linf_norm();
    for v in &var.values {
        assert!(*v <= 1e-12 * scale, "deterministic variance is zero");
    }

    // Random model at desk-scale sample counts: the telescoped moment
    // difference dips negative at the estimator's statistical error scale
    // (the flag exists for exactly this). The dips stay small against the
    // squared field scale and shrink as the sample counts grow.
    let model = exp_model();
    let dip_for = |m_base: usize, seed: u64| {
        let h = LevelHierarchy::new(base, 1, 3, m_base).unwrap();
        let (m1, _) = mlmc_estimate(&model, &h, &cfg, 0.3, seed).unwrap();
        let (m2, _) = mlmc_second_moment(&model, &h, &cfg, 0.3, seed).unwrap();
        let mut dip = 0.0f64;
        for (mean, sec) in m1.mean.values.iter().zip(&m2.mean.values) {
            dip = dip.min(sec - mean * mean);
        }
        let (var, _) = assemble_variance(&m1.mean, &m2.mean);
        assert!(var.values.iter().all(|v| *v >= 0.0));
        -dip
    };
    let seeds = [31u64, 7, 99];
    let coarse: f64 = seeds.iter().map(|&s| dip_for(8, s)).sum::<f64>() / 3.0;
    let fine: f64 = seeds.iter().map(|&s| dip_for(128, s)).sum::<f64>() / 3.0;
    assert!(
        coarse < 3e-2,
        "dip {coarse} exceeds the squared field scale"
    );
    assert!(
        fine < coarse,
        "dips should shrink with more samples: {coarse} -> {fine}"
    );
}

#[test]
fn quadrature_reference_self_convergence() {
    // Doubling the node count moves the reference by much less than the
    // discretization scale. For the exponent model at dx = 2^-6 the
    // measured 16-vs-32 difference is ~1.1e-5 of the field norm (the
    // parameter dependence is smooth but not analytic enough for 1e-6).
    let model = exp_model();
    let grid = GridSpec::new(0.0, 2.0, 128).unwrap();
    let cfg = SchemeConfig::explicit();
    let q16 = quadrature_reference(&model, grid, &cfg, 0.3, 16).unwrap();
    let q32 = quadrature_reference(&model, grid, &cfg, 0.3, 32).unwrap();
    let d = l1_distance(&q16, &q32).unwrap();
    assert!(d <= 3e-5 * q32.l1_norm(), "16 vs 32 nodes moved by {d}");

    // The residual model needs the 2D tensor rule; coarse-vs-fine tensor
    // references agree to the statistical scale of the problem.
    let res = RandomDataModel::new(
        ModelKind::RandomResidual,
        TwoPhaseParams::default(),
        InitialKind::RiemannU02,
    );
    let r8 = quadrature_reference(&res, grid, &cfg, 0.3, 8).unwrap();
    let r16 = quadrature_reference(&res, grid, &cfg, 0.3, 16).unwrap();
    let d = l1_distance(&r8, &r16).unwrap();
    assert!(d <= 2e-3 * r16.l1_norm(), "8^2 vs 16^2 nodes moved by {d}");
}

#[test]
fn mc_converges_towards_the_quadrature_reference() {
    // A light version of the Monte Carlo convergence check: the error
    // against the deterministic-quadrature mean decreases from M = 8 to
    // M = 128 (the full rate fit runs in the acceptance suite).
    let model = exp_model();
    let grid = GridSpec::new(0.0, 2.0, 64).unwrap();
    let cfg = SchemeConfig::explicit();
    let reference = quadrature_reference(&model, grid, &cfg, 0.3, 32).unwrap();
    let err = |m: usize| {
        let est = mc_estimate(&model, grid, &cfg, 0.3, m, 5150).unwrap();
        l1_distance(&est.mean, &reference).unwrap()
    };
    let e_small = err(8);
    let e_big = err(128);
    assert!(
        e_big < e_small,
        "MC error should shrink: {e_small} -> {e_big}"
    );
}

#[test]
fn mc_second_moment_converges_towards_its_quadrature_reference() {
    // Reference for the pointwise second moment: Gauss-Legendre weighted
    // mean of the squared per-node deterministic solves (computed inline,
    // independent of the estimator path).
    let model = exp_model();
    let grid = GridSpec::new(0.0, 2.0, 64).unwrap();
    let cfg = SchemeConfig::explicit();
    let (nodes, weights) = degen_mlmc::numeric::gauss_legendre(24);
    let (lo, hi) = model.parameter_box()[0];
    let mut reference = vec![0.0; grid.n_cells()];
    for (x, w) in nodes.iter().zip(&weights) {
        let p = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
        let sample = model.realize(&[p]).unwrap();
        let u0 = sample.initial.averages(grid).unwrap();
        let (u, _) = degen_mlmc::solver::run_field(u0, &sample.flux, &cfg, 0.3).unwrap();
        for (acc, v) in reference.iter_mut().zip(&u.values) {
            *acc += 0.5 * w * v * v;
        }
    }
    let reference = degen_mlmc::grid::SolutionField::new(grid, reference, 0.3);

    let err = |m: usize| {
        let est = degen_mlmc::mc::mc_second_moment(&model, grid, &cfg, 0.3, m, 616).unwrap();
        l1_distance(&est.mean, &reference).unwrap()
    };
    let e_small = err(8);
    let e_big = err(128);
    assert!(
        e_big < e_small,
        "second-moment MC error should shrink: {e_small} -> {e_big}"
    );
}

#[test]
fn exponent_fractional_flow_is_nondecreasing_on_the_unit_interval() {
    let model = exp_model();
    for idx in 0..5 {
        let sample = model
            .draw(&mut degen_mlmc::sampling::stream_for(3, 0, idx))
            .unwrap();
        // The flux closure is total; probe it over the full unit interval.
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=200 {
            let s = k as f64 / 200.0;
            let v = sample.flux.f(s);
            assert!(v >= prev - 1e-14, "f decreasing at s = {s}");
            prev = v;
        }
    }
}
