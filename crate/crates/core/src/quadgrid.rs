//! Numeric foundation: grid-sampled functions with monotone cubic
//! interpolation, adaptive Gauss-Kronrod quadrature for finite intervals
//! with an endpoint singularity, and semi-infinite integrals via the
//! mapping u = lo/x onto (0, 1].
//!
//! Everything here is deterministic: identical inputs produce bit-identical
//! outputs across runs.

use crate::error::{Error, Result};

/// 15-point Kronrod abscissae on [-1, 1] (positive half, descending).
const XGK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

/// 7-point Gauss weights matching the even-index Kronrod abscissae.
const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15-point Kronrod weights.
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Evaluation budget for a single adaptive integral.
const MAX_EVALS: usize = 2_000_000;

/// Result of one adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// One Gauss-Kronrod 15 pass over [lo, hi]; returns (kronrod, |K - G|).
pub(crate) fn gk15_pass<F: Fn(f64) -> Result<f64>>(g: &F, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let half = 0.5 * (hi - lo);
    let center = 0.5 * (lo + hi);
    let eval = |x: f64| -> Result<f64> {
        let v = g(x)?;
        if !v.is_finite() {
            return Err(Error::BadIntegrand { x });
        }
        Ok(v)
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK15[7];
    let mut gauss = fc * WG7[3];
    for (j, &xi) in XGK15.iter().enumerate().take(7) {
        let dx = half * xi;
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        kronrod += WGK15[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG7[j / 2] * (f1 + f2);
        }
    }
    kronrod *= half;
    gauss *= half;
    if !kronrod.is_finite() {
        return Err(Error::BadIntegrand { x: center });
    }
    Ok((kronrod, (kronrod - gauss).abs()))
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

/// Adaptive quadrature of `g` over the finite interval [lo, hi].
///
/// The integrand may carry an integrable algebraic singularity at `lo`
/// (behaviour s^{p-1} with p > 0); repeated bisection concentrates panels
/// there. Divergent integrands exhaust the evaluation budget and are
/// reported as [`Error::QuadratureNonConvergence`] together with the best
/// estimate so far.
///
/// The target is `|value - true| <= max(tol, tol * |value|)`.
pub fn integrate_finite<F>(g: F, lo: f64, hi: f64, tol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo < hi) {
        if lo == hi {
            return Ok(QuadResult {
                value: 0.0,
                abs_error_estimate: 0.0,
                evaluations: 0,
            });
        }
        return Err(Error::Invalid(format!(
            "integration bounds must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("quadrature tol must be positive, got {tol}")));
    }

    let mut evals = 0usize;
    let (v0, e0) = gk15_pass(&g, lo, hi)?;
    evals += 15;
    let mut panels = vec![Panel {
        lo,
        hi,
        value: v0,
        error: e0,
    }];

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let target = tol.max(tol * total.abs());
        if err <= target {
            return Ok(QuadResult {
                value: total,
                abs_error_estimate: err,
                evaluations: evals,
            });
        }
        if evals + 30 > MAX_EVALS {
            return Err(Error::QuadratureNonConvergence {
                lo,
                hi,
                estimate: total,
                error_estimate: err,
            });
        }
        // Split the worst panel; first index wins ties so refinement order
        // is deterministic.
        let mut worst = 0usize;
        for (i, p) in panels.iter().enumerate() {
            if p.error > panels[worst].error {
                worst = i;
            }
        }
        let p = panels[worst];
        let mid = 0.5 * (p.lo + p.hi);
        if !(p.lo < mid && mid < p.hi) {
            // Panel at rounding width; its error cannot be reduced further.
            // If the remaining error is dominated by such panels, give up.
            return Err(Error::QuadratureNonConvergence {
                lo,
                hi,
                estimate: total,
                error_estimate: err,
            });
        }
        let (vl, el) = gk15_pass(&g, p.lo, mid)?;
        let (vr, er) = gk15_pass(&g, mid, p.hi)?;
        evals += 30;
        panels[worst] = Panel {
            lo: p.lo,
            hi: mid,
            value: vl,
            error: el,
        };
        panels.push(Panel {
            lo: mid,
            hi: p.hi,
            value: vr,
            error: er,
        });
    }
}

/// Adaptive quadrature of `g` over the half line [lo, inf), lo > 0.
///
/// Uses the substitution u = lo/s onto (0, 1], so a tail decaying like
/// s^{-(1+d)} with d > 0 becomes an integrable endpoint behaviour at u = 0.
/// A divergent tail shows up as endpoint non-convergence and is reported.
pub fn integrate_halfline<F>(g: F, lo: f64, tol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo > 0.0) {
        return Err(Error::Invalid(format!(
            "half-line integration requires lo > 0, got {lo}"
        )));
    }
    let mapped = |u: f64| -> Result<f64> {
        let s = lo / u;
        Ok(g(s)? * lo / (u * u))
    };
    integrate_finite(mapped, 0.0, 1.0, tol)
}

/// Running integral of `g` sampled at `nodes`, each panel integrated to
/// `tol`. The first node is the lower limit, so the first value is 0.
pub fn cumulative<F>(g: F, nodes: &[f64], tol: f64) -> Result<GridFunction>
where
    F: Fn(f64) -> Result<f64>,
{
    if nodes.len() < 2 {
        return Err(Error::Invalid("cumulative needs at least 2 nodes".into()));
    }
    let mut values = Vec::with_capacity(nodes.len());
    values.push(0.0);
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        acc += integrate_finite(&g, w[0], w[1], tol)?.value;
        values.push(acc);
    }
    GridFunction::from_samples(
        Domain::Finite {
            lo: nodes[0],
            hi: nodes[nodes.len() - 1],
        },
        nodes.to_vec(),
        values,
    )
}

/// Where a grid function lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// A finite interval [lo, hi]; nodes are stored in the native variable.
    Finite { lo: f64, hi: f64 },
    /// The half line [lo, inf); nodes are stored in u = lo/x, with the
    /// x -> inf limit held explicitly at u = 0.
    HalfLine { lo: f64 },
}

/// A sampled real function with monotone-safe piecewise-cubic interpolation
/// (Fritsch-Carlson slopes). Immutable after construction; evaluation is
/// exact at nodes and reproducible bit-for-bit.
#[derive(Debug, Clone)]
pub struct GridFunction {
    domain: Domain,
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl GridFunction {
    /// Build from samples. For `Finite`, `nodes` are native coordinates and
    /// must start at `lo` and end at `hi`. For `HalfLine`, `nodes` are the
    /// mapped u coordinates in [0, 1] with u = 0 holding the limit value.
    pub fn from_samples(domain: Domain, nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Invalid("grid function needs at least 2 nodes".into()));
        }
        if nodes.len() != values.len() {
            return Err(Error::Invalid(format!(
                "node/value length mismatch: {} vs {}",
                nodes.len(),
                values.len()
            )));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Invalid("nodes must be strictly increasing".into()));
        }
        if nodes.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("nodes and values must be finite".into()));
        }
        match domain {
            Domain::Finite { lo, hi } => {
                if nodes[0] != lo || nodes[nodes.len() - 1] != hi {
                    return Err(Error::Invalid(
                        "finite-domain nodes must span exactly [lo, hi]".into(),
                    ));
                }
            }
            Domain::HalfLine { lo } => {
                if !(lo > 0.0) {
                    return Err(Error::Invalid("half-line lo must be positive".into()));
                }
                if nodes[0] != 0.0 || nodes[nodes.len() - 1] != 1.0 {
                    return Err(Error::Invalid(
                        "half-line u-nodes must span exactly [0, 1]".into(),
                    ));
                }
            }
        }
        let slopes = fritsch_carlson_slopes(&nodes, &values);
        Ok(GridFunction {
            domain,
            nodes,
            values,
            slopes,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Node coordinates in the stored variable (native for `Finite`,
    /// u for `HalfLine`).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Native coordinates of the nodes. For a half-line function these are
    /// x = lo/u in decreasing node order, with infinity for u = 0.
    pub fn native_node(&self, i: usize) -> f64 {
        match self.domain {
            Domain::Finite { .. } => self.nodes[i],
            Domain::HalfLine { lo } => {
                if self.nodes[i] == 0.0 {
                    f64::INFINITY
                } else {
                    lo / self.nodes[i]
                }
            }
        }
    }

    /// Evaluate at a native coordinate. For half-line functions `x` may be
    /// `f64::INFINITY`, which returns the stored limit value.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let u = self.to_stored(x)?;
        Ok(self.eval_stored(u))
    }

    /// Evaluate with the coordinate clamped into the sampled range. Used
    /// when composing coefficients just outside the first node.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        match self.domain {
            Domain::Finite { lo, hi } => self.eval_stored(x.clamp(lo, hi)),
            Domain::HalfLine { lo } => {
                let u = if x.is_infinite() { 0.0 } else { lo / x };
                self.eval_stored(u.clamp(0.0, 1.0))
            }
        }
    }

    fn to_stored(&self, x: f64) -> Result<f64> {
        match self.domain {
            Domain::Finite { lo, hi } => {
                if x < lo || x > hi || x.is_nan() {
                    Err(Error::Domain(format!(
                        "evaluation at {x} outside [{lo}, {hi}]"
                    )))
                } else {
                    Ok(x)
                }
            }
            Domain::HalfLine { lo } => {
                if x.is_nan() || x < lo {
                    Err(Error::Domain(format!(
                        "evaluation at {x} outside [{lo}, inf)"
                    )))
                } else if x.is_infinite() {
                    Ok(0.0)
                } else {
                    Ok(lo / x)
                }
            }
        }
    }

    /// Hermite evaluation in the stored coordinate; exact at nodes.
    fn eval_stored(&self, u: f64) -> f64 {
        // partition_point returns the first index with node > u.
        let k = self.nodes.partition_point(|&n| n <= u);
        if k == 0 {
            return self.values[0];
        }
        let i = k - 1;
        if self.nodes[i] == u {
            return self.values[i];
        }
        let i = i.min(self.nodes.len() - 2);
        let h = self.nodes[i + 1] - self.nodes[i];
        let t = (u - self.nodes[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }

    /// Maximum absolute difference of node values against another grid
    /// function on the same nodes.
    pub fn max_node_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Fritsch-Carlson monotone cubic slopes (PCHIP).
fn fritsch_carlson_slopes(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut d = vec![0.0; n];
    if n == 2 {
        let s = (values[1] - values[0]) / (nodes[1] - nodes[0]);
        d[0] = s;
        d[1] = s;
        return d;
    }
    let h: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = values
        .windows(2)
        .zip(h.iter())
        .map(|(w, &hi)| (w[1] - w[0]) / hi)
        .collect();
    for i in 1..n - 1 {
        let (dl, dr) = (delta[i - 1], delta[i]);
        if dl == 0.0 || dr == 0.0 || (dl > 0.0) != (dr > 0.0) {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// One-sided three-point slope with the standard PCHIP monotonicity clamp.
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

/// Geometric node ladder from `lo` to `hi` (coordinates in geometric
/// progression, clustering toward `lo`). Endpoints are stored exactly.
pub fn log_graded_nodes(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Invalid(format!(
            "graded nodes need 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::Invalid("graded nodes need n >= 2".into()));
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n)
        .map(|k| lo * (ratio * k as f64).exp())
        .collect();
    nodes[0] = lo;
    nodes[n - 1] = hi;
    if !nodes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Invalid(
            "graded nodes collapsed at rounding resolution; reduce node count".into(),
        ));
    }
    Ok(nodes)
}

/// u-nodes for a half-line grid: {0} followed by a geometric ladder from
/// `u_min` to 1. In the native variable this clusters nodes toward x = lo
/// and puts the far-field limit at u = 0.
pub fn halfline_u_nodes(u_min: f64, n: usize) -> Result<Vec<f64>> {
    if !(u_min > 0.0 && u_min < 1.0) {
        return Err(Error::Invalid(format!(
            "u_min must lie in (0, 1), got {u_min}"
        )));
    }
    if n < 3 {
        return Err(Error::Invalid("half-line grid needs n >= 3".into()));
    }
    let mut nodes = Vec::with_capacity(n);
    nodes.push(0.0);
    nodes.extend(log_graded_nodes(u_min, 1.0, n - 1)?);
    Ok(nodes)
}
