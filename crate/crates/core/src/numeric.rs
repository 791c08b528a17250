//! Small numerical building blocks: Gauss-Legendre rules, adaptive
//! quadrature, monotone cubic interpolation, deterministic summation and
//! log-log rate fits.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Nodes are found by Newton iteration on the Legendre recurrence; this is
/// accurate to machine precision for the moderate n used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root of P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_and_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` by adaptive Simpson subdivision down to the
/// absolute tolerance `tol`. Returns `None` when the recursion depth limit is
/// reached before the tolerance, or when a non-finite value appears.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    if !whole.is_finite() {
        return None;
    }
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || b - a < 1e-14 {
        return Some(left + right + err / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let lv = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let rv = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(lv + rv)
}

/// Monotonicity-preserving piecewise-cubic interpolant on uniformly spaced
/// nodes (Fritsch-Carlson slopes with Butland's harmonic mean). Evaluation
/// clamps the argument to the table range.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    lo: f64,
    h: f64,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(lo: f64, hi: f64, ys: Vec<f64>) -> Self {
        let n = ys.len();
        assert!(n >= 2 && hi > lo);
        let h = (hi - lo) / (n - 1) as f64;
        let d: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut slopes = vec![0.0; n];
        for k in 1..n - 1 {
            // Harmonic mean of the adjacent secants; zero at local extrema.
            if d[k - 1] * d[k] > 0.0 {
                slopes[k] = 2.0 * d[k - 1] * d[k] / (d[k - 1] + d[k]);
            }
        }
        slopes[0] = endpoint_slope(d[0], d.get(1).copied().unwrap_or(d[0]));
        slopes[n - 1] = endpoint_slope(d[n - 2], if n >= 3 { d[n - 3] } else { d[n - 2] });
        MonotoneCubic { lo, h, ys, slopes }
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.ys.len();
        let t = ((x - self.lo) / self.h).clamp(0.0, (n - 1) as f64);
        let k = (t.floor() as usize).min(n - 2);
        (k, t - k as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (k, t) = self.locate(x);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.h, self.slopes[k + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (k, t) = self.locate(x);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.h, self.slopes[k + 1] * self.h);
        let t2 = t * t;
        (y0 * (6.0 * t2 - 6.0 * t)
            + m0 * (3.0 * t2 - 4.0 * t + 1.0)
            + y1 * (-6.0 * t2 + 6.0 * t)
            + m1 * (3.0 * t2 - 2.0 * t))
            / self.h
    }

    pub fn node_values(&self) -> &[f64] {
        &self.ys
    }
}

fn endpoint_slope(d_near: f64, d_far: f64) -> f64 {
    // Standard pchip one-sided rule, clamped to keep monotonicity.
    let m = 1.5 * d_near - 0.5 * d_far;
    if m * d_near <= 0.0 {
        0.0
    } else if m.abs() > 3.0 * d_near.abs() {
        3.0 * d_near
    } else {
        m
    }
}

/// Sum in a fixed pairwise tree over the index range, independent of any
/// execution order used to produce the values.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Component-wise pairwise-tree sum over a collection of equally long rows.
pub fn pairwise_row_sum(rows: &[Vec<f64>]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].clone(),
        2 => rows[0].iter().zip(&rows[1]).map(|(a, b)| a + b).collect(),
        n => {
            let left = pairwise_row_sum(&rows[..n / 2]);
            let right = pairwise_row_sum(&rows[n / 2..]);
            left.iter().zip(&right).map(|(a, b)| a + b).collect()
        }
    }
}

/// Component-wise sample mean and unbiased sample variance of the rows,
/// reduced in fixed pairwise order. A single row has variance zero.
pub fn row_mean_and_variance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len();
    assert!(m >= 1);
    let inv = 1.0 / m as f64;
    let mean: Vec<f64> = pairwise_row_sum(rows).iter().map(|s| s * inv).collect();
    if m == 1 {
        return (mean.clone(), vec![0.0; mean.len()]);
    }
    let devs: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .map(|(v, mu)| {
                    let d = v - mu;
                    d * d
                })
                .collect()
        })
        .collect();
    let inv_m1 = 1.0 / (m - 1) as f64;
    let var = pairwise_row_sum(&devs).iter().map(|s| s * inv_m1).collect();
    (mean, var)
}

/// Least-squares slope of ln(y) against ln(x).
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Uniform probe of [lo, hi] with n+1 points computed from exact fractions,
/// so coarser probes are subsets of finer ones with the same endpoints.
pub fn probe_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * (i as f64 / n as f64))
        .collect()
}
