//! Two-phase porous-media flux realizations, their random-data
//! distributions, and the experiment initial data.
//!
//! The water saturation s obeys s_t + f(s)_x = (a(s) s_x)_x with
//!
//!   f(s) = q lam_w / (lam_w + lam_o),
//!   a(s) = nu K lam_w lam_o / (lam_w + lam_o) p_c'(s),
//!
//! where the relative permeabilities (lam_w, lam_o) are either a random
//! exponent pair or a random residual-saturation pair. The diffusion
//! degenerates at the residual saturations: a vanishes outside (0, 1).

use crate::flux::{FluxError, FluxModel, RealFn, TABLE_INTERVALS};
use crate::grid::{cell_average_piecewise, GridError, GridSpec, SolutionField};
use crate::numeric::{adaptive_simpson, probe_points, MonotoneCubic};
use crate::sampling::{SamplingError, SeedStream};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("capillary pressure is undefined at s = {0} (need s in (0, 1])")]
    CapillaryDomain(f64),
    #[error("invalid two-phase parameters: {0}")]
    InvalidParams(String),
    #[error("relative permeability pair violates its endpoint/monotonicity contract: {0}")]
    InvalidPermeability(String),
    #[error("invalid random-data distribution: {0}")]
    InvalidDistribution(String),
    #[error("quadrature for the diffusion primitive failed on [{0}, {1}]")]
    Quadrature(f64, f64),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Physical constants of the two-phase problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPhaseParams {
    /// Total flow rate q.
    pub q: f64,
    /// Rock permeability.
    pub k_bar: f64,
    /// Capillary scaling; the experiments use a small positive value.
    pub nu: f64,
    /// Clamp half-width for the argument of p_c' near the endpoints of
    /// (0, 1), where p_c' diverges while a itself vanishes.
    pub eps_reg: f64,
}

impl Default for TwoPhaseParams {
    fn default() -> Self {
        TwoPhaseParams {
            q: 1.0,
            k_bar: 1.0,
            nu: 0.01,
            eps_reg: 1e-9,
        }
    }
}

impl TwoPhaseParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.nu > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if !(self.eps_reg > 0.0 && self.eps_reg < 1e-3) {
            return Err(ModelError::InvalidParams(format!(
                "eps_reg must lie in (0, 1e-3), got {}",
                self.eps_reg
            )));
        }
        Ok(())
    }
}

/// A relative-permeability pair (lam_w, lam_o) with analytic derivatives.
#[derive(Clone)]
pub struct PermeabilityPair {
    lambda_w: RealFn,
    dlambda_w: RealFn,
    lambda_o: RealFn,
    dlambda_o: RealFn,
    label: String,
}

impl PermeabilityPair {
    /// lam_w(s) = |s|^p, lam_o(s) = |1-s|^p.
    pub fn exponent(p: f64) -> Result<Self, ModelError> {
        if !(p > 1.0) {
            return Err(ModelError::InvalidPermeability(format!(
                "exponent must exceed 1, got {p}"
            )));
        }
        let pair = PermeabilityPair {
            lambda_w: Arc::new(move |s: f64| s.abs().powf(p)),
            dlambda_w: Arc::new(move |s: f64| {
                if s == 0.0 {
                    0.0
                } else {
                    p * s.abs().powf(p - 1.0) * s.signum()
                }
            }),
            lambda_o: Arc::new(move |s: f64| (1.0 - s).abs().powf(p)),
            dlambda_o: Arc::new(move |s: f64| {
                if s == 1.0 {
                    0.0
                } else {
                    -p * (1.0 - s).abs().powf(p - 1.0) * (1.0 - s).signum()
                }
            }),
            label: format!("exponent(p={p})"),
        };
        pair.validate()?;
        Ok(pair)
    }

    /// The residual-saturation model: the water phase is immobile below
    /// s_w_star and the oil phase above s_o_star.
    pub fn residual(s_w_star: f64, s_o_star: f64) -> Result<Self, ModelError> {
        if !(s_w_star > 0.0 && s_w_star < 1.0 && s_o_star > 0.0 && s_o_star < 1.0) {
            return Err(ModelError::InvalidPermeability(format!(
                "residual saturations must lie in (0, 1), got ({s_w_star}, {s_o_star})"
            )));
        }
        let wn = (1.0 - s_w_star) * (1.0 - s_w_star);
        let pair = PermeabilityPair {
            lambda_w: Arc::new(move |s: f64| {
                if s > s_w_star {
                    (s - s_w_star) * (s - s_w_star) / wn
                } else {
                    0.0
                }
            }),
            dlambda_w: Arc::new(move |s: f64| {
                if s > s_w_star {
                    2.0 * (s - s_w_star) / wn
                } else {
                    0.0
                }
            }),
            lambda_o: Arc::new(move |s: f64| {
                if s <= s_o_star {
                    let r = 1.0 - s / s_o_star;
                    r * r
                } else {
                    0.0
                }
            }),
            dlambda_o: Arc::new(move |s: f64| {
                if s <= s_o_star {
                    -2.0 * (1.0 - s / s_o_star) / s_o_star
                } else {
                    0.0
                }
            }),
            label: format!("residual(s_w*={s_w_star}, s_o*={s_o_star})"),
        };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let probe = probe_points(0.0, 1.0, 100);
        let tol = 1e-12;
        if self.lambda_w(0.0).abs() > tol || (self.lambda_w(1.0) - 1.0).abs() > tol {
            return Err(ModelError::InvalidPermeability(format!(
                "{}: lam_w endpoints",
                self.label
            )));
        }
        if (self.lambda_o(0.0) - 1.0).abs() > tol || self.lambda_o(1.0).abs() > tol {
            return Err(ModelError::InvalidPermeability(format!(
                "{}: lam_o endpoints",
                self.label
            )));
        }
        for w in probe.windows(2) {
            if self.lambda_w(w[1]) < self.lambda_w(w[0]) - tol {
                return Err(ModelError::InvalidPermeability(format!(
                    "{}: lam_w decreasing at {}",
                    self.label, w[0]
                )));
            }
            if self.lambda_o(w[1]) > self.lambda_o(w[0]) + tol {
                return Err(ModelError::InvalidPermeability(format!(
                    "{}: lam_o increasing at {}",
                    self.label, w[0]
                )));
            }
        }
        Ok(())
    }

    pub fn lambda_w(&self, s: f64) -> f64 {
        (self.lambda_w)(s)
    }

    pub fn lambda_o(&self, s: f64) -> f64 {
        (self.lambda_o)(s)
    }

    pub fn dlambda_w(&self, s: f64) -> f64 {
        (self.dlambda_w)(s)
    }

    pub fn dlambda_o(&self, s: f64) -> f64 {
        (self.dlambda_o)(s)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Capillary pressure p_c(s) = -(s^(-4/3) - 1)^(1/4) on (0, 1].
pub fn capillary_pressure(s: f64) -> Result<f64, ModelError> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(ModelError::CapillaryDomain(s));
    }
    Ok(-(s.powf(-4.0 / 3.0) - 1.0).powf(0.25))
}

/// p_c'(s) = (1/3) s^(-7/3) (s^(-4/3) - 1)^(-3/4), finite only inside (0, 1).
pub fn capillary_pressure_deriv(s: f64) -> f64 {
    (1.0 / 3.0) * s.powf(-7.0 / 3.0) * (s.powf(-4.0 / 3.0) - 1.0).powf(-0.75)
}

/// Capillary diffusion coefficient
/// a(s) = nu K lam_w lam_o / (lam_w + lam_o) p_c'(s), extended by zero
/// outside (0, 1). Inside the clamp bands next to 0 and 1 the divergent
/// factor p_c' is evaluated at the clamped point, which keeps a continuous
/// and nonnegative while the vanishing mobility drives a to zero.
pub fn diffusion_coefficient(s: f64, perm: &PermeabilityPair, params: &TwoPhaseParams) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let lw = perm.lambda_w(s);
    let lo = perm.lambda_o(s);
    let denom = lw + lo;
    if denom <= 0.0 {
        return 0.0;
    }
    let clamped = s.clamp(params.eps_reg, 1.0 - params.eps_reg);
    let a = params.nu * params.k_bar * (lw * lo / denom) * capillary_pressure_deriv(clamped);
    a.max(0.0)
}

/// Fractional flow f(s) = q lam_w / (lam_w + lam_o), with the endpoint
/// limits f(0) = 0 and f(1) = q. If both mobilities vanish at an interior
/// point (impossible for the admissible parameter ranges, where
/// s_w* < s_o*), the left limit 0 is returned.
pub fn fractional_flow(s: f64, perm: &PermeabilityPair, params: &TwoPhaseParams) -> f64 {
    let lw = perm.lambda_w(s);
    let lo = perm.lambda_o(s);
    let denom = lw + lo;
    if denom <= 0.0 {
        return if s >= 1.0 { params.q } else { 0.0 };
    }
    params.q * lw / denom
}

/// Analytic derivative of [`fractional_flow`].
pub fn fractional_flow_deriv(s: f64, perm: &PermeabilityPair, params: &TwoPhaseParams) -> f64 {
    let lw = perm.lambda_w(s);
    let lo = perm.lambda_o(s);
    let denom = lw + lo;
    if denom <= 0.0 {
        return 0.0;
    }
    let dlw = perm.dlambda_w(s);
    let dlo = perm.dlambda_o(s);
    params.q * (dlw * lo - lw * dlo) / (denom * denom)
}

/// Assembles the [`FluxModel`] for a permeability pair on the given state
/// interval: f and f' analytically, a = A' pointwise, and the primitive
/// A(s) = int_0^s a precomputed by per-segment adaptive quadrature on a
/// 4097-point table with monotone interpolation.
pub fn build_flux_model(
    perm: &PermeabilityPair,
    params: &TwoPhaseParams,
    state_interval: (f64, f64),
) -> Result<FluxModel, ModelError> {
    params.validate()?;
    let (m_minus, m_plus) = state_interval;
    if !(m_minus < m_plus) {
        return Err(ModelError::InvalidParams(format!(
            "state interval [{m_minus}, {m_plus}] is empty"
        )));
    }
    let a_fn: RealFn = {
        let perm = perm.clone();
        let params = *params;
        Arc::new(move |s| diffusion_coefficient(s, &perm, &params))
    };

    let nodes = probe_points(m_minus, m_plus, TABLE_INTERVALS);
    let seg_tol = 1e-13;
    let mut acc = if nodes[0] > 0.0 {
        adaptive_simpson(&|s| a_fn(s), 0.0, nodes[0], 1e-12)
            .ok_or(ModelError::Quadrature(0.0, nodes[0]))?
    } else {
        // a vanishes on (-inf, 0], so the primitive is zero there.
        0.0
    };
    let mut a_nodes = Vec::with_capacity(nodes.len());
    a_nodes.push(acc);
    for w in nodes.windows(2) {
        let inc = adaptive_simpson(&|s| a_fn(s), w[0], w[1], seg_tol)
            .ok_or(ModelError::Quadrature(w[0], w[1]))?
            .max(0.0);
        acc += inc;
        a_nodes.push(acc);
    }
    let a_table = MonotoneCubic::new(m_minus, m_plus, a_nodes);
    let a_prim: RealFn = Arc::new(move |s| a_table.eval(s));

    let f: RealFn = {
        let perm = perm.clone();
        let params = *params;
        Arc::new(move |s| fractional_flow(s, &perm, &params))
    };
    let df: RealFn = {
        let perm = perm.clone();
        let params = *params;
        Arc::new(move |s| fractional_flow_deriv(s, &perm, &params))
    };
    Ok(FluxModel::new(f, df, a_prim, a_fn, m_minus, m_plus)?)
}

/// The experiment initial data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    /// 0.1/0.8 Riemann steps on [0, 2], periodically extended.
    RiemannU02,
    /// sin(4 pi x) on [0, 0.5].
    Sine,
}

impl InitialKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::RiemannU02 => "riemann_u02",
            InitialKind::Sine => "sine",
        }
    }
}

/// An initial-data function together with its domain and the breakpoints
/// where it is non-smooth (used for exact cell averaging).
#[derive(Clone)]
pub struct InitialData {
    kind: InitialKind,
    domain: (f64, f64),
    breakpoints: Vec<f64>,
    eval: RealFn,
}

impl InitialData {
    pub fn kind(&self) -> InitialKind {
        self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Cell averages on `grid`, splitting quadrature panels at the known
    /// breakpoints (exact for the piecewise-constant data).
    pub fn averages(&self, grid: GridSpec) -> Result<SolutionField, GridError> {
        let f = self.eval.clone();
        cell_average_piecewise(move |x| f(x), &self.breakpoints, grid)
    }

    /// A grid over this data's domain with the given cell count.
    pub fn grid(&self, n_cells: usize) -> Result<GridSpec, GridError> {
        GridSpec::new(self.domain.0, self.domain.1, n_cells)
    }
}

/// The two initial-data functions used by the experiments.
pub fn initial_data(kind: InitialKind) -> InitialData {
    match kind {
        InitialKind::RiemannU02 => InitialData {
            kind,
            domain: (0.0, 2.0),
            breakpoints: vec![0.1, 1.0],
            eval: Arc::new(|x: f64| if (0.1..1.0).contains(&x) { 0.8 } else { 0.1 }),
        },
        InitialKind::Sine => InitialData {
            kind,
            domain: (0.0, 0.5),
            breakpoints: Vec::new(),
            eval: Arc::new(|x: f64| (4.0 * std::f64::consts::PI * x).sin()),
        },
    }
}

/// Which distribution the permeability pair is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    RandomExponent,
    RandomResidual,
    Deterministic,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::RandomExponent => "random_exponent",
            ModelKind::RandomResidual => "random_residual",
            ModelKind::Deterministic => "deterministic",
        }
    }
}

/// A distribution over (u0, f, A) data samples: deterministic initial data
/// plus a randomly drawn permeability pair.
#[derive(Clone, Debug)]
pub struct RandomDataModel {
    pub kind: ModelKind,
    pub params: TwoPhaseParams,
    pub initial: InitialKind,
    pub exponent_range: (f64, f64),
    pub sw_range: (f64, f64),
    pub so_range: (f64, f64),
}

impl RandomDataModel {
    pub fn new(kind: ModelKind, params: TwoPhaseParams, initial: InitialKind) -> Self {
        RandomDataModel {
            kind,
            params,
            initial,
            exponent_range: (1.5, 2.5),
            sw_range: (0.05, 0.35),
            so_range: (0.6, 0.95),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.params.validate()?;
        let nonempty = |r: (f64, f64)| r.0 < r.1;
        if !nonempty(self.exponent_range) || self.exponent_range.0 <= 1.0 {
            return Err(ModelError::InvalidDistribution(format!(
                "exponent range {:?} must be nonempty with lower bound > 1",
                self.exponent_range
            )));
        }
        let inside = |r: (f64, f64)| r.0 > 0.0 && r.1 < 1.0 && nonempty(r);
        if !inside(self.sw_range) || !inside(self.so_range) {
            return Err(ModelError::InvalidDistribution(
                "residual-saturation ranges must lie inside (0, 1)".into(),
            ));
        }
        if self.sw_range.1 >= self.so_range.0 {
            return Err(ModelError::InvalidDistribution(
                "water and oil residual ranges must be disjoint (s_w* < s_o*)".into(),
            ));
        }
        Ok(())
    }

    /// The admissible state interval [M-, M+], set from the initial-data
    /// range: [0.1, 0.8] for the Riemann steps, [-1, 1] for the sine wave.
    pub fn state_interval(&self) -> (f64, f64) {
        match self.initial {
            InitialKind::RiemannU02 => (0.1, 0.8),
            InitialKind::Sine => (-1.0, 1.0),
        }
    }

    /// Dimension of the random-parameter space (0, 1 or 2).
    pub fn parameter_dim(&self) -> usize {
        match self.kind {
            ModelKind::Deterministic => 0,
            ModelKind::RandomExponent => 1,
            ModelKind::RandomResidual => 2,
        }
    }

    /// The uniform-law parameter box, one (lo, hi) pair per dimension.
    pub fn parameter_box(&self) -> Vec<(f64, f64)> {
        match self.kind {
            ModelKind::Deterministic => vec![],
            ModelKind::RandomExponent => vec![self.exponent_range],
            ModelKind::RandomResidual => vec![self.sw_range, self.so_range],
        }
    }

    /// Builds the sample for explicit parameter coordinates (used both by
    /// [`Self::draw`] and by deterministic quadrature references).
    pub fn realize(&self, coords: &[f64]) -> Result<Sample, ModelError> {
        self.validate()?;
        assert_eq!(coords.len(), self.parameter_dim(), "parameter count");
        let perm = match self.kind {
            ModelKind::Deterministic => PermeabilityPair::exponent(2.0)?,
            ModelKind::RandomExponent => PermeabilityPair::exponent(coords[0])?,
            ModelKind::RandomResidual => PermeabilityPair::residual(coords[0], coords[1])?,
        };
        let flux = build_flux_model(&perm, &self.params, self.state_interval())?;
        let initial = initial_data(self.initial);
        let mut descriptor = self.descriptor();
        match self.kind {
            ModelKind::Deterministic => descriptor.push_str("p=2\n"),
            ModelKind::RandomExponent => descriptor.push_str(&format!("p={}\n", coords[0])),
            ModelKind::RandomResidual => {
                descriptor.push_str(&format!("s_w_star={}\ns_o_star={}\n", coords[0], coords[1]))
            }
        }
        Ok(Sample {
            flux,
            initial,
            drawn: coords.to_vec(),
            descriptor,
        })
    }

    /// Draws the random parameter coordinates only (in a fixed order, one
    /// uniform per dimension); the deterministic kind consumes no draws.
    pub fn draw_coords(&self, stream: &mut SeedStream) -> Result<Vec<f64>, ModelError> {
        Ok(match self.kind {
            ModelKind::Deterministic => vec![],
            ModelKind::RandomExponent => {
                vec![stream.uniform(self.exponent_range.0, self.exponent_range.1)?]
            }
            ModelKind::RandomResidual => {
                let sw = stream.uniform(self.sw_range.0, self.sw_range.1)?;
                let so = stream.uniform(self.so_range.0, self.so_range.1)?;
                vec![sw, so]
            }
        })
    }

    /// Draws one (u0, f, A) sample. The same stream state always yields the
    /// bit-identical sample.
    pub fn draw(&self, stream: &mut SeedStream) -> Result<Sample, ModelError> {
        let coords = self.draw_coords(stream)?;
        self.realize(&coords)
    }

    /// Key=value description of the distribution (without drawn values).
    pub fn descriptor(&self) -> String {
        let mut s = format!(
            "kind={}\ninitial={}\nq={}\nk_bar={}\nnu={}\neps_reg={}\n",
            self.kind.name(),
            self.initial.name(),
            self.params.q,
            self.params.k_bar,
            self.params.nu,
            self.params.eps_reg,
        );
        match self.kind {
            ModelKind::RandomExponent => s.push_str(&format!(
                "p_range=[{},{}]\n",
                self.exponent_range.0, self.exponent_range.1
            )),
            ModelKind::RandomResidual => s.push_str(&format!(
                "sw_range=[{},{}]\nso_range=[{},{}]\n",
                self.sw_range.0, self.sw_range.1, self.so_range.0, self.so_range.1
            )),
            ModelKind::Deterministic => {}
        }
        s
    }
}

/// One realization of the random data: flux model plus initial data.
#[derive(Clone)]
pub struct Sample {
    pub flux: FluxModel,
    pub initial: InitialData,
    /// The drawn parameter coordinates (empty for the deterministic kind).
    pub drawn: Vec<f64>,
    /// Key=value provenance block for output headers.
    pub descriptor: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::engquist_osher;
    use crate::numeric::probe_points;
    use crate::sampling::stream_for;

    #[test]
    fn capillary_pressure_examples() {
        assert_eq!(capillary_pressure(1.0).unwrap(), 0.0);
        // s = 2^(-3/4) solves s^(-4/3) = 2, so p_c = -1.
        let s = 2f64.powf(-0.75);
        assert!((capillary_pressure(s).unwrap() + 1.0).abs() < 1e-14);
        assert!(capillary_pressure(0.0).is_err());
        assert!(capillary_pressure(-0.3).is_err());
        assert!(capillary_pressure(1.5).is_err());
        // Strictly increasing on a probe of (0, 1].
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=100 {
            let v = capillary_pressure(k as f64 / 100.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn diffusion_coefficient_reference_value() {
        // High-precision value of a(0.5) for p = 2, nu = K = 1:
        // mobility 1/8 times p_c'(0.5) = (1/3) 2^(7/3) (2^(4/3)-1)^(-3/4).
        let perm = PermeabilityPair::exponent(2.0).unwrap();
        let params = TwoPhaseParams {
            nu: 1.0,
            ..TwoPhaseParams::default()
        };
        let a = diffusion_coefficient(0.5, &perm, &params);
        assert!((a - 0.15340631180336817).abs() < 1e-15);
        assert!((capillary_pressure_deriv(0.5) - 1.2272504944269453).abs() < 1e-14);
    }

    #[test]
    fn diffusion_vanishes_outside_unit_interval() {
        let perm = PermeabilityPair::exponent(2.0).unwrap();
        let params = TwoPhaseParams::default();
        for s in [-0.2, 0.0, 1.0, 1.3] {
            assert_eq!(diffusion_coefficient(s, &perm, &params), 0.0);
        }
        for s in [1e-9, 0.3, 1.0 - 1e-9] {
            assert!(diffusion_coefficient(s, &perm, &params) >= 0.0);
        }
    }

    #[test]
    fn diffusion_degenerates_towards_the_endpoints() {
        // a ~ s^(p - 4/3) near 0 (p = 2: s^(2/3)), so the decay towards the
        // endpoints is algebraic but slower than the naive s itself:
        // a(1e-4)/a(0.5) ~ 4.7e-3 and a(1e-8)/a(0.5) ~ 1e-5.
        let perm = PermeabilityPair::exponent(2.0).unwrap();
        let params = TwoPhaseParams::default();
        let mid = diffusion_coefficient(0.5, &perm, &params);
        let near0 = diffusion_coefficient(1e-4, &perm, &params);
        let nearer0 = diffusion_coefficient(1e-8, &perm, &params);
        let near1 = diffusion_coefficient(1.0 - 1e-4, &perm, &params);
        assert!(near0 < 1e-2 * mid, "a(1e-4) = {near0}, a(0.5) = {mid}");
        assert!(
            (near0 / mid - 4.681e-3).abs() < 1e-5,
            "measured decay ratio"
        );
        assert!(nearer0 < 1e-4 * mid);
        assert!(near1 < 1e-2 * mid);
    }

    #[test]
    fn fractional_flow_examples() {
        let perm = PermeabilityPair::exponent(2.0).unwrap();
        let params = TwoPhaseParams::default();
        assert!((fractional_flow(0.5, &perm, &params) - 0.5).abs() < 1e-15);
        assert_eq!(fractional_flow(0.0, &perm, &params), 0.0);
        assert_eq!(fractional_flow(1.0, &perm, &params), 1.0);

        let res = PermeabilityPair::residual(0.2, 0.8).unwrap();
        assert_eq!(fractional_flow(0.1, &res, &params), 0.0);
        assert_eq!(fractional_flow(1.0, &res, &params), 1.0);
    }

    #[test]
    fn fractional_flow_deriv_matches_finite_differences() {
        let params = TwoPhaseParams::default();
        for perm in [
            PermeabilityPair::exponent(1.7).unwrap(),
            PermeabilityPair::residual(0.25, 0.7).unwrap(),
        ] {
            let h = 1e-7;
            for s in probe_points(0.01, 0.99, 49) {
                let fd = (fractional_flow(s + h, &perm, &params)
                    - fractional_flow(s - h, &perm, &params))
                    / (2.0 * h);
                let an = fractional_flow_deriv(s, &perm, &params);
                assert!(
                    (fd - an).abs() < 1e-5 * an.abs().max(1.0),
                    "{} at s={s}: {fd} vs {an}",
                    perm.label()
                );
            }
        }
    }

    #[test]
    fn flux_model_primitive_matches_trapezoid_oracle() {
        // A(1) for p = 2, nu = 0.01 against a 10^6-point trapezoid rule.
        let perm = PermeabilityPair::exponent(2.0).unwrap();
        let params = TwoPhaseParams::default();
        let model = build_flux_model(&perm, &params, (0.0, 1.0)).unwrap();
        assert_eq!(model.a_prim(0.0), 0.0);

        let n = 1_000_000usize;
        let h = 1.0 / n as f64;
        let mut trap = 0.0;
        for k in 0..=n {
            let s = k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            trap += w * diffusion_coefficient(s, &perm, &params);
        }
        trap *= h;
        assert!(
            (model.a_prim(1.0) - trap).abs() < 1e-8,
            "A(1) = {} vs oracle {trap}",
            model.a_prim(1.0)
        );
        // Cross-check against an independently computed high-precision value.
        assert!((trap - 9.411787088430365e-4).abs() < 1e-9);

        // A nondecreasing along the probe.
        let mut prev = -1.0;
        for s in probe_points(0.0, 1.0, 200) {
            let v = model.a_prim(s);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn tabulated_primitive_derivative_matches_coefficient() {
        let perm = PermeabilityPair::exponent(2.0).unwrap();
        let params = TwoPhaseParams::default();
        let model = build_flux_model(&perm, &params, (0.1, 0.8)).unwrap();
        let mut stream = stream_for(17, 0, 0);
        let h = 1e-6;
        for _ in 0..100 {
            let s = stream.uniform(0.1 + h, 0.8 - h).unwrap();
            let fd = (model.a_prim(s + h) - model.a_prim(s - h)) / (2.0 * h);
            assert!(
                (fd - model.a(s)).abs() < 1e-6,
                "dA({s}) = {fd} vs a = {}",
                model.a(s)
            );
        }
    }

    #[test]
    fn exponent_model_flux_is_nondecreasing_and_eo_reduces_to_upwind() {
        let model = RandomDataModel::new(
            ModelKind::RandomExponent,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        let sample = model.draw(&mut stream_for(3, 0, 0)).unwrap();
        let probe = probe_points(0.1, 0.8, 100);
        for w in probe.windows(2) {
            assert!(sample.flux.f(w[1]) >= sample.flux.f(w[0]));
        }
        let flux = engquist_osher(&sample.flux).unwrap();
        let mut stream = stream_for(4, 0, 0);
        for _ in 0..25 {
            let u = stream.uniform(0.1, 0.8).unwrap();
            let v = stream.uniform(0.1, 0.8).unwrap();
            assert!(
                (flux.eval(u, v) - sample.flux.f(u)).abs() < 1e-7,
                "upwind reduction at ({u}, {v})"
            );
        }
        // Consistency at a named point.
        assert!((flux.eval(0.37, 0.37) - sample.flux.f(0.37)).abs() < 1e-8);
    }

    #[test]
    fn draw_is_deterministic_in_the_stream_state() {
        let model = RandomDataModel::new(
            ModelKind::RandomResidual,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        let a = model.draw(&mut stream_for(5, 2, 9)).unwrap();
        let b = model.draw(&mut stream_for(5, 2, 9)).unwrap();
        assert_eq!(a.drawn, b.drawn);
        for s in probe_points(0.1, 0.8, 37) {
            assert_eq!(a.flux.f(s).to_bits(), b.flux.f(s).to_bits());
            assert_eq!(a.flux.a_prim(s).to_bits(), b.flux.a_prim(s).to_bits());
        }

        let det = RandomDataModel::new(
            ModelKind::Deterministic,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        let d1 = det.draw(&mut stream_for(1, 0, 0)).unwrap();
        let d2 = det.draw(&mut stream_for(999, 7, 3)).unwrap();
        assert!(d1.drawn.is_empty() && d2.drawn.is_empty());
        assert_eq!(d1.flux.f(0.3), d2.flux.f(0.3));
    }

    #[test]
    fn drawn_parameters_follow_their_laws() {
        let exp_model = RandomDataModel::new(
            ModelKind::RandomExponent,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        let res_model = RandomDataModel::new(
            ModelKind::RandomResidual,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        // Support over 1e4 draws.
        for i in 0..10_000 {
            let p = exp_model.draw_coords(&mut stream_for(42, 0, i)).unwrap()[0];
            assert!((1.5..2.5).contains(&p));
            let c = res_model.draw_coords(&mut stream_for(42, 0, i)).unwrap();
            assert!((0.05..0.35).contains(&c[0]));
            assert!((0.6..0.95).contains(&c[1]));
            assert!(c[0] < c[1], "both-mobilities-zero cannot occur");
        }
        // Mean of p over 1e5 draws: 2.0 +- 0.01 (11 sigma).
        let n = 100_000;
        let mut sum = 0.0;
        let mut sw = Vec::with_capacity(n);
        let mut so = Vec::with_capacity(n);
        for i in 0..n {
            sum += exp_model.draw_coords(&mut stream_for(7, 1, i)).unwrap()[0];
            let c = res_model.draw_coords(&mut stream_for(7, 2, i)).unwrap();
            sw.push(c[0]);
            so.push(c[1]);
        }
        assert!((sum / n as f64 - 2.0).abs() < 0.01);
        // Empirical correlation of the independent residual draws: 0 +- 0.01.
        let msw = sw.iter().sum::<f64>() / n as f64;
        let mso = so.iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut vw = 0.0;
        let mut vo = 0.0;
        for k in 0..n {
            cov += (sw[k] - msw) * (so[k] - mso);
            vw += (sw[k] - msw) * (sw[k] - msw);
            vo += (so[k] - mso) * (so[k] - mso);
        }
        let corr = cov / (vw * vo).sqrt();
        assert!(corr.abs() < 0.01, "corr = {corr}");
    }

    #[test]
    fn initial_data_examples() {
        let riemann = initial_data(InitialKind::RiemannU02);
        assert_eq!(riemann.eval(0.05), 0.1);
        assert_eq!(riemann.eval(0.5), 0.8);
        assert_eq!(riemann.eval(1.5), 0.1);
        assert_eq!(riemann.domain(), (0.0, 2.0));
        for k in 0..=200 {
            let v = riemann.eval(2.0 * k as f64 / 200.0);
            assert!((0.1..=0.8).contains(&v));
        }

        let sine = initial_data(InitialKind::Sine);
        assert!((sine.eval(0.125) - 1.0).abs() < 1e-15);
        assert_eq!(sine.domain(), (0.0, 0.5));

        // The admissible interval is set from the initial-data range.
        let m = RandomDataModel::new(
            ModelKind::Deterministic,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        assert_eq!(m.state_interval(), (0.1, 0.8));
        let msine = RandomDataModel::new(
            ModelKind::Deterministic,
            TwoPhaseParams::default(),
            InitialKind::Sine,
        );
        assert_eq!(msine.state_interval(), (-1.0, 1.0));
    }

    #[test]
    fn sine_state_interval_builds_a_valid_model() {
        // The diffusion is extended by zero over negative saturations; the
        // model constructor must accept the full [-1, 1] interval.
        let model = RandomDataModel::new(
            ModelKind::RandomExponent,
            TwoPhaseParams::default(),
            InitialKind::Sine,
        );
        let sample = model.draw(&mut stream_for(11, 0, 0)).unwrap();
        assert_eq!(sample.flux.m_minus(), -1.0);
        assert_eq!(sample.flux.m_plus(), 1.0);
        assert_eq!(sample.flux.a(-0.5), 0.0);
        assert_eq!(sample.flux.a_prim(-0.3), 0.0);
        assert!(sample.flux.a_prim(0.9) > 0.0);
    }

    #[test]
    fn distribution_validation_rejects_bad_ranges() {
        let mut m = RandomDataModel::new(
            ModelKind::RandomResidual,
            TwoPhaseParams::default(),
            InitialKind::RiemannU02,
        );
        assert!(m.validate().is_ok());
        m.sw_range = (0.5, 0.7);
        assert!(m.validate().is_err(), "overlapping residual ranges");
        m.sw_range = (0.0, 0.35);
        assert!(m.validate().is_err(), "range outside (0,1)");
    }
}
