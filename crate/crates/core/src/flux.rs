//! Flux-function realizations and monotone numerical fluxes.
//!
//! A [`FluxModel`] bundles one realization of the convective flux f, its
//! derivative, the diffusive flux primitive A and the diffusion coefficient
//! a = A' together with the admissible state interval [M-, M+] and Lipschitz
//! bounds on that interval.
//!
//! A [`NumericalFlux`] is an additive splitting F(u, v) = F1(u) + F2(v) with
//! F1 nondecreasing and F2 nonincreasing, the form required for the schemes'
//! stability and convergence-rate theory.

use crate::numeric::{adaptive_simpson, probe_points, MonotoneCubic};
use std::sync::Arc;
use thiserror::Error;

/// Shared scalar function handle; models are immutable after construction
/// and evaluated concurrently from many threads.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of intervals in the memoization table for split fluxes and
/// diffusion primitives (4097 nodes).
pub const TABLE_INTERVALS: usize = 4096;

/// Points in the validation probe of the state interval (101 points).
pub const CHECK_PROBE: usize = 100;

/// Points in the probe used for suprema and Lipschitz bounds (1001 points,
/// a superset of the validation probe).
pub const SUP_PROBE: usize = 1000;

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("state interval is empty: [{0}, {1}]")]
    EmptyStateInterval(f64, f64),
    #[error("diffusion coefficient is negative at z = {z}: a(z) = {value}")]
    NegativeDiffusion { z: f64, value: f64 },
    #[error("diffusive flux primitive is decreasing near z = {z}")]
    DecreasingPrimitive { z: f64 },
    #[error("quadrature for the flux splitting failed on [{0}, {1}]")]
    Quadrature(f64, f64),
    #[error("split flux is inconsistent at u = {u}: F1+F2 = {split}, f = {f}")]
    Inconsistent { u: f64, split: f64, f: f64 },
    #[error("split part {part} loses monotonicity at u = {u}")]
    NotMonotone { part: &'static str, u: f64 },
    #[error(
        "Lax-Friedrichs with theta = {theta} is not monotone for Lipschitz bound {lip_f} \
         (need theta * lip_f <= 1)"
    )]
    LaxFriedrichsNotMonotone { theta: f64, lip_f: f64 },
}

/// One realization (f, f', A, A' = a) of convective and diffusive flux on an
/// admissible state interval.
#[derive(Clone)]
pub struct FluxModel {
    f: RealFn,
    df: RealFn,
    a_prim: RealFn,
    a: RealFn,
    m_minus: f64,
    m_plus: f64,
    lip_f: f64,
    lip_a: f64,
}

impl FluxModel {
    /// Builds a model from its four scalar functions, computing the
    /// Lipschitz bounds from a dense probe of [m_minus, m_plus] and
    /// validating the structural assumptions (a >= 0, A nondecreasing) on
    /// the 101-point probe.
    pub fn new(
        f: RealFn,
        df: RealFn,
        a_prim: RealFn,
        a: RealFn,
        m_minus: f64,
        m_plus: f64,
    ) -> Result<Self, FluxError> {
        if !(m_minus < m_plus) || !m_minus.is_finite() || !m_plus.is_finite() {
            return Err(FluxError::EmptyStateInterval(m_minus, m_plus));
        }
        let mut lip_f = 0.0f64;
        let mut lip_a = 0.0f64;
        for z in probe_points(m_minus, m_plus, SUP_PROBE) {
            lip_f = lip_f.max(df(z).abs());
            lip_a = lip_a.max(a(z));
        }
        let check = probe_points(m_minus, m_plus, CHECK_PROBE);
        let tol = 1e-12 * lip_a.max(1.0);
        for &z in &check {
            let az = a(z);
            if az < -tol {
                return Err(FluxError::NegativeDiffusion { z, value: az });
            }
        }
        for pair in check.windows(2) {
            if a_prim(pair[1]) < a_prim(pair[0]) - tol * (pair[1] - pair[0]) {
                return Err(FluxError::DecreasingPrimitive { z: pair[0] });
            }
        }
        Ok(FluxModel {
            f,
            df,
            a_prim,
            a,
            m_minus,
            m_plus,
            lip_f,
            lip_a,
        })
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn df(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    /// The diffusive flux primitive A(u); the schemes difference this value.
    pub fn a_prim(&self, u: f64) -> f64 {
        (self.a_prim)(u)
    }

    /// The diffusion coefficient a(u) = A'(u) >= 0.
    pub fn a(&self, u: f64) -> f64 {
        (self.a)(u)
    }

    pub fn m_minus(&self) -> f64 {
        self.m_minus
    }

    pub fn m_plus(&self) -> f64 {
        self.m_plus
    }

    pub fn lip_f(&self) -> f64 {
        self.lip_f
    }

    pub fn lip_a(&self) -> f64 {
        self.lip_a
    }

    /// The 1001-point probe of the state interval.
    pub fn sup_probe(&self) -> Vec<f64> {
        probe_points(self.m_minus, self.m_plus, SUP_PROBE)
    }
}

enum SplitParts {
    /// Memoized monotone tables (construction-time quadrature); derivatives
    /// are served by the exact closures, not the interpolant.
    Table {
        f1: MonotoneCubic,
        f2: MonotoneCubic,
        df1: RealFn,
        df2: RealFn,
    },
    /// Closure-backed parts with exact derivatives.
    Analytic {
        f1: RealFn,
        f2: RealFn,
        df1: RealFn,
        df2: RealFn,
    },
}

/// A monotone numerical flux F(u, v) = F1(u) + F2(v).
pub struct NumericalFlux {
    parts: SplitParts,
    label: String,
}

impl NumericalFlux {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn f1(&self, u: f64) -> f64 {
        match &self.parts {
            SplitParts::Table { f1, .. } => f1.eval(u),
            SplitParts::Analytic { f1, .. } => f1(u),
        }
    }

    pub fn f2(&self, v: f64) -> f64 {
        match &self.parts {
            SplitParts::Table { f2, .. } => f2.eval(v),
            SplitParts::Analytic { f2, .. } => f2(v),
        }
    }

    /// F(u, v) = F1(u) + F2(v).
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.f1(u) + self.f2(v)
    }

    pub fn df1(&self, u: f64) -> f64 {
        match &self.parts {
            SplitParts::Table { df1, .. } | SplitParts::Analytic { df1, .. } => df1(u),
        }
    }

    pub fn df2(&self, v: f64) -> f64 {
        match &self.parts {
            SplitParts::Table { df2, .. } | SplitParts::Analytic { df2, .. } => df2(v),
        }
    }
}

/// The Engquist-Osher splitting of `model`,
///
///   F1(u) = f(M-) + int_{M-}^{u} max(f'(s), 0) ds,
///   F2(v) =         int_{M-}^{v} min(f'(s), 0) ds,
///
/// memoized on a 4097-point table over [M-, M+] with monotone
/// piecewise-cubic interpolation. Table segments on which f' does not change
/// sign are integrated exactly from f itself; segments straddling a sign
/// change use adaptive quadrature.
pub fn engquist_osher(model: &FluxModel) -> Result<NumericalFlux, FluxError> {
    let (lo, hi) = (model.m_minus(), model.m_plus());
    let nodes = probe_points(lo, hi, TABLE_INTERVALS);
    let f_nodes: Vec<f64> = nodes.iter().map(|&u| model.f(u)).collect();
    let df_nodes: Vec<f64> = nodes.iter().map(|&u| model.df(u)).collect();

    // Accumulate the nonincreasing part F2 segment by segment and recover
    // F1 from consistency, F1 = f - F2; this keeps F1(u) + F2(u) = f(u)
    // exact at all table nodes. On sign-definite segments the increment is
    // the exact flux difference; only sign-straddling segments need
    // quadrature.
    let mut f2_nodes = Vec::with_capacity(nodes.len());
    let mut f2_acc = 0.0;
    f2_nodes.push(f2_acc);
    for k in 0..TABLE_INTERVALS {
        let (ua, ub) = (nodes[k], nodes[k + 1]);
        let df_mid = model.df(0.5 * (ua + ub));
        let lo3 = df_nodes[k].min(df_nodes[k + 1]).min(df_mid);
        let hi3 = df_nodes[k].max(df_nodes[k + 1]).max(df_mid);
        let delta_f = f_nodes[k + 1] - f_nodes[k];
        let q = if lo3 >= 0.0 {
            0.0
        } else if hi3 <= 0.0 {
            delta_f
        } else {
            let p = adaptive_simpson(&|s| model.df(s).max(0.0), ua, ub, 1e-12)
                .ok_or(FluxError::Quadrature(ua, ub))?
                .max(0.0);
            (delta_f - p).min(0.0)
        };
        f2_acc += q;
        f2_nodes.push(f2_acc);
    }
    let f1_nodes: Vec<f64> = f_nodes.iter().zip(&f2_nodes).map(|(f, q)| f - q).collect();

    // Consistency F1 + F2 = f is exact at the nodes by construction; check
    // the split's monotonicity there (the interpolant preserves it between
    // nodes). Between nodes F(u, u) - f(u) carries the interpolation error
    // of the table, which the validation-mode flux is free of.
    let slack = 1e-11 * model.lip_f().max(1.0) * (hi - lo);
    for k in 0..TABLE_INTERVALS {
        if f1_nodes[k + 1] < f1_nodes[k] - slack {
            return Err(FluxError::NotMonotone {
                part: "F1",
                u: nodes[k],
            });
        }
        if f2_nodes[k + 1] > f2_nodes[k] + slack {
            return Err(FluxError::NotMonotone {
                part: "F2",
                u: nodes[k],
            });
        }
    }

    let df1: RealFn = {
        let m = model.clone();
        Arc::new(move |u: f64| m.df(u).max(0.0))
    };
    let df2: RealFn = {
        let m = model.clone();
        Arc::new(move |v: f64| m.df(v).min(0.0))
    };
    Ok(NumericalFlux {
        parts: SplitParts::Table {
            f1: MonotoneCubic::new(lo, hi, f1_nodes),
            f2: MonotoneCubic::new(lo, hi, f2_nodes),
            df1,
            df2,
        },
        label: "engquist_osher".into(),
    })
}

/// The Engquist-Osher splitting evaluated by adaptive quadrature on every
/// call (absolute tolerance 1e-10). Retained as a validation reference for
/// the tabulated flux; far too slow for time stepping.
pub fn engquist_osher_direct(model: &FluxModel) -> Result<NumericalFlux, FluxError> {
    let lo = model.m_minus();
    let f_lo = model.f(lo);
    let pos = {
        let m = model.clone();
        Arc::new(move |u: f64| {
            let u = u.clamp(m.m_minus(), m.m_plus());
            f_lo + integrate_split(&m, lo, u, true)
        }) as RealFn
    };
    let neg = {
        let m = model.clone();
        Arc::new(move |v: f64| {
            let v = v.clamp(m.m_minus(), m.m_plus());
            integrate_split(&m, lo, v, false)
        }) as RealFn
    };
    let dpos = {
        let m = model.clone();
        Arc::new(move |u: f64| m.df(u).max(0.0)) as RealFn
    };
    let dneg = {
        let m = model.clone();
        Arc::new(move |v: f64| m.df(v).min(0.0)) as RealFn
    };
    let flux = NumericalFlux {
        parts: SplitParts::Analytic {
            f1: pos,
            f2: neg,
            df1: dpos,
            df2: dneg,
        },
        label: "engquist_osher_direct".into(),
    };
    validate_split(&flux, model)?;
    Ok(flux)
}

fn integrate_split(model: &FluxModel, from: f64, to: f64, positive: bool) -> f64 {
    if to <= from {
        return 0.0;
    }
    let part = |s: f64| {
        let d = model.df(s);
        if positive {
            d.max(0.0)
        } else {
            d.min(0.0)
        }
    };
    adaptive_simpson(&part, from, to, 1e-11)
        .or_else(|| adaptive_simpson(&part, from, to, 1e-8))
        .unwrap_or_else(|| {
            let n = 4096;
            let h = (to - from) / n as f64;
            let mut s = part(from) + part(to);
            for i in 1..n {
                let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += c * part(from + i as f64 * h);
            }
            s * h / 3.0
        })
}

/// The Lax-Friedrichs splitting
///
///   F1(u) = f(u)/2 + u/(2 theta),  F2(v) = f(v)/2 - v/(2 theta),
///
/// where `theta` is the mesh ratio dt/dx at which the flux will be used.
/// Monotone exactly when theta * lip_f <= 1.
pub fn lax_friedrichs(model: &FluxModel, theta: f64) -> Result<NumericalFlux, FluxError> {
    if theta * model.lip_f() > 1.0 {
        return Err(FluxError::LaxFriedrichsNotMonotone {
            theta,
            lip_f: model.lip_f(),
        });
    }
    let half_inv_theta = 0.5 / theta;
    let m1 = model.clone();
    let m2 = model.clone();
    let d1 = model.clone();
    let d2 = model.clone();
    let flux = NumericalFlux {
        parts: SplitParts::Analytic {
            f1: Arc::new(move |u| 0.5 * m1.f(u) + half_inv_theta * u),
            f2: Arc::new(move |v| 0.5 * m2.f(v) - half_inv_theta * v),
            df1: Arc::new(move |u| 0.5 * d1.df(u) + half_inv_theta),
            df2: Arc::new(move |v| 0.5 * d2.df(v) - half_inv_theta),
        },
        label: "lax_friedrichs".into(),
    };
    validate_split(&flux, model)?;
    Ok(flux)
}

/// Checks the splitting invariants on the 101-point probe: consistency
/// F1(u) + F2(u) = f(u) to 1e-10 (relative to max(1, |f|)) and monotonicity
/// of the parts.
fn validate_split(flux: &NumericalFlux, model: &FluxModel) -> Result<(), FluxError> {
    let probe = probe_points(model.m_minus(), model.m_plus(), CHECK_PROBE);
    let mut prev1 = f64::NEG_INFINITY;
    let mut prev2 = f64::INFINITY;
    for &u in &probe {
        let s1 = flux.f1(u);
        let s2 = flux.f2(u);
        let fu = model.f(u);
        let split = s1 + s2;
        if (split - fu).abs() > 1e-10 * fu.abs().max(1.0) {
            return Err(FluxError::Inconsistent { u, split, f: fu });
        }
        let slack = 1e-11 * (s1.abs() + s2.abs()).max(1.0);
        if s1 < prev1 - slack {
            return Err(FluxError::NotMonotone { part: "F1", u });
        }
        if s2 > prev2 + slack {
            return Err(FluxError::NotMonotone { part: "F2", u });
        }
        prev1 = s1;
        prev2 = s2;
    }
    Ok(())
}
