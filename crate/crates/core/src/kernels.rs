//! The integral kernels of the reduced problem and the analytic slopes of
//! the profile representations.
//!
//! For an iterate f on the liquid side the kernels are
//!
//! ```text
//! E(eta) = exp(-alpha0 a INT_0^eta N*(f)/L*(f) ds)        (integrating factor)
//! F(eta) = INT_0^eta E(s) / (s L*(f(s))) ds               (flux integral)
//! ```
//!
//! mirrored on the solid side over [alpha0, inf) in the mapped coordinate
//! u = alpha0/xi. Inner ratio integrals are accumulated once per iterate at
//! the grid nodes and reused by every kernel evaluation of that iterate;
//! off-node coordinates add a short remainder integral from the nearest
//! node, so cached and fresh evaluations agree to quadrature tolerance.

use crate::error::{Error, Result};
use crate::props::{CoeffField, EnvelopeParams, Phase};
use crate::quadgrid::{gk15_pass, integrate_finite, GridFunction};

/// Shared inputs for kernel evaluation at a fixed front coefficient.
#[derive(Debug, Clone, Copy)]
pub struct KernelContext<'a> {
    /// Front coefficient of the similarity reduction.
    pub alpha0: f64,
    /// Reference diffusivity.
    pub a: f64,
    /// Dimensionless source strength Q0 / (4 pi lambda0 theta_m).
    pub source_strength: f64,
    /// Quadrature tolerance (absolute-or-relative).
    pub tol: f64,
    pub coeffs: &'a CoeffField,
}

impl<'a> KernelContext<'a> {
    pub fn new(
        alpha0: f64,
        a: f64,
        source_strength: f64,
        tol: f64,
        coeffs: &'a CoeffField,
    ) -> Result<Self> {
        if !(alpha0 > 0.0) {
            return Err(Error::Invalid(format!("alpha0 must be positive, got {alpha0}")));
        }
        if !(a >= 0.0) || !(tol > 0.0) {
            return Err(Error::Invalid("kernel context needs a >= 0 and tol > 0".into()));
        }
        Ok(KernelContext {
            alpha0,
            a,
            source_strength,
            tol,
            coeffs,
        })
    }

    /// Build the per-iterate liquid kernel cache.
    pub fn liquid(&self, f: &GridFunction) -> Result<LiquidKernels<'a>> {
        LiquidKernels::build(*self, f)
    }

    /// Build the per-iterate solid kernel cache.
    pub fn solid(&self, f: &GridFunction) -> Result<SolidKernels<'a>> {
        SolidKernels::build(*self, f)
    }
}

/// Integral over one short interval whose integrand is smooth there: a
/// single Kronrod pass, escalated to the adaptive driver only when the
/// embedded error estimate is not clearly below tolerance.
fn short_integral<F: Fn(f64) -> Result<f64>>(g: &F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if lo >= hi {
        return Ok(0.0);
    }
    let (k, err) = gk15_pass(g, lo, hi)?;
    if err <= 0.1 * tol.max(tol * k.abs()) {
        Ok(k)
    } else {
        Ok(integrate_finite(g, lo, hi, tol)?.value)
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::QuadratureNonConvergence { .. } | Error::BadIntegrand { .. }
    )
}

/// Per-iterate kernel cache on the liquid domain [0, alpha0].
pub struct LiquidKernels<'a> {
    ctx: KernelContext<'a>,
    f: GridFunction,
    nodes: Vec<f64>,
    /// Cumulative ratio integral INT_0^{s_i} N*/L* ds.
    ratio_cum: Vec<f64>,
    /// Tail flux integral INT_{s_i}^{alpha0} E/(s L*) ds.
    tail_cum: Vec<f64>,
}

impl<'a> LiquidKernels<'a> {
    fn build(ctx: KernelContext<'a>, f: &GridFunction) -> Result<Self> {
        let nodes = f.nodes().to_vec();
        let last = *nodes.last().unwrap();
        if (last - ctx.alpha0).abs() > 1e-12 * ctx.alpha0.max(1.0) {
            return Err(Error::Invalid(format!(
                "liquid iterate must end at alpha0 = {}, got {last}",
                ctx.alpha0
            )));
        }
        let ratio = |s: f64| -> Result<f64> {
            Ok(ctx.coeffs.capacity_at(Phase::Liquid, s, f)?
                / ctx.coeffs.conductivity_at(Phase::Liquid, s, f)?)
        };

        let mut ratio_cum = Vec::with_capacity(nodes.len());
        // the origin panel may carry the envelope-induced power behaviour
        let mut acc = integrate_finite(&ratio, 0.0, nodes[0], ctx.tol)?.value;
        ratio_cum.push(acc);
        for w in nodes.windows(2) {
            acc += short_integral(&ratio, w[0], w[1], ctx.tol)?;
            ratio_cum.push(acc);
        }

        let mut cache = LiquidKernels {
            ctx,
            f: f.clone(),
            nodes,
            ratio_cum,
            tail_cum: Vec::new(),
        };

        let n = cache.nodes.len();
        let mut tail = vec![0.0; n];
        {
            let flux_integrand = |s: f64| -> Result<f64> {
                let e = cache.integrating_factor(s)?;
                if e == 0.0 {
                    return Ok(0.0);
                }
                let l = cache.ctx.coeffs.conductivity_at(Phase::Liquid, s, &cache.f)?;
                Ok(e / (s * l))
            };
            for i in (0..n - 1).rev() {
                let panel = short_integral(&flux_integrand, cache.nodes[i], cache.nodes[i + 1], ctx.tol)?;
                tail[i] = tail[i + 1] + panel;
            }
        }
        cache.tail_cum = tail;
        Ok(cache)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn iterate(&self) -> &GridFunction {
        &self.f
    }

    /// Index of the largest node <= eta; usize::MAX when below the grid.
    fn locate(&self, eta: f64) -> usize {
        self.nodes.partition_point(|&n| n <= eta).wrapping_sub(1)
    }

    fn ratio_integrand(&self) -> impl Fn(f64) -> Result<f64> + '_ {
        move |s: f64| {
            Ok(self.ctx.coeffs.capacity_at(Phase::Liquid, s, &self.f)?
                / self.ctx.coeffs.conductivity_at(Phase::Liquid, s, &self.f)?)
        }
    }

    fn flux_integrand(&self) -> impl Fn(f64) -> Result<f64> + '_ {
        move |s: f64| {
            let e = self.integrating_factor(s)?;
            if e == 0.0 {
                return Ok(0.0);
            }
            let l = self.ctx.coeffs.conductivity_at(Phase::Liquid, s, &self.f)?;
            Ok(e / (s * l))
        }
    }

    /// Cumulative ratio integral INT_0^eta N*/L* ds.
    fn ratio_integral(&self, eta: f64) -> Result<f64> {
        if eta == 0.0 {
            return Ok(0.0);
        }
        let i = self.locate(eta);
        if i == usize::MAX {
            return Ok(integrate_finite(self.ratio_integrand(), 0.0, eta, self.ctx.tol)?.value);
        }
        if self.nodes[i] == eta {
            return Ok(self.ratio_cum[i]);
        }
        Ok(self.ratio_cum[i] + short_integral(&self.ratio_integrand(), self.nodes[i], eta, self.ctx.tol)?)
    }

    /// Integrating factor E(eta) in (0, 1]; exactly 1 at eta = 0.
    pub fn integrating_factor(&self, eta: f64) -> Result<f64> {
        if eta.is_nan() || eta < 0.0 || eta > self.ctx.alpha0 * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "integrating factor at eta = {eta} outside [0, {}]",
                self.ctx.alpha0
            )));
        }
        if eta == 0.0 {
            return Ok(1.0);
        }
        Ok((-self.ctx.alpha0 * self.ctx.a * self.ratio_integral(eta)?).exp())
    }

    /// Flux integral F(eta) = INT_0^eta E/(s L*) ds, from the origin.
    /// Divergence at the origin (constant-coefficient regime) is reported.
    pub fn flux_integral(&self, eta: f64) -> Result<f64> {
        if eta == 0.0 {
            return Ok(0.0);
        }
        let first = self.nodes[0].min(eta);
        let mut total = integrate_finite(self.flux_integrand(), 0.0, first, self.ctx.tol)?.value;
        if eta > first {
            total += self.tail_cum[0] - self.tail_integral(eta)?;
        }
        Ok(total)
    }

    /// Tail flux integral INT_eta^alpha0 E/(s L*) ds; finite for eta > 0
    /// even when the flux integral from the origin diverges.
    pub fn tail_integral(&self, eta: f64) -> Result<f64> {
        if !(eta > 0.0) {
            return Err(Error::Domain("tail flux integral needs eta > 0".into()));
        }
        if eta >= self.ctx.alpha0 {
            return Ok(0.0);
        }
        let i = self.locate(eta);
        if i == usize::MAX {
            let below = integrate_finite(self.flux_integrand(), eta, self.nodes[0], self.ctx.tol)?.value;
            return Ok(self.tail_cum[0] + below);
        }
        if self.nodes[i] == eta {
            return Ok(self.tail_cum[i]);
        }
        let rem = short_integral(&self.flux_integrand(), self.nodes[i], eta, self.ctx.tol)?;
        Ok(self.tail_cum[i] - rem)
    }

    /// Analytic profile slope from the integral representation:
    /// f'(eta) = -D* E(eta) / (eta L*(f(eta))); strictly negative.
    /// The origin is rejected: only eta L* f' has a finite limit there.
    pub fn profile_slope(&self, eta: f64) -> Result<f64> {
        if !(eta > 0.0) {
            return Err(Error::Domain(
                "profile slope is singular at eta = 0; only the flux limit is finite".into(),
            ));
        }
        let e = self.integrating_factor(eta)?;
        let l = self.ctx.coeffs.conductivity_at(Phase::Liquid, eta, &self.f)?;
        Ok(-self.ctx.source_strength * e / (eta * l))
    }

    /// Values of the liquid fixed-point operator at the grid nodes:
    /// D* times the tail flux integral. The value at alpha0 is exactly 0.
    pub fn operator_values(&self) -> Vec<f64> {
        self.tail_cum
            .iter()
            .map(|&t| self.ctx.source_strength * t)
            .collect()
    }
}

/// Per-iterate kernel cache on the solid domain [alpha0, inf), working in
/// the mapped coordinate u = alpha0/xi.
pub struct SolidKernels<'a> {
    ctx: KernelContext<'a>,
    f: GridFunction,
    u_nodes: Vec<f64>,
    /// Ratio integral INT_{alpha0}^{xi_j} N*/L* ds keyed by u-node; the
    /// far-field entry is None when that integral diverges (the
    /// integrating factor then decays to 0 toward infinity).
    ratio_from_interface: Vec<Option<f64>>,
    /// Flux integral F(alpha0, xi_j) keyed by u-node; entry 0 is the full
    /// integral to infinity.
    flux_from_interface: Vec<f64>,
}

impl<'a> SolidKernels<'a> {
    fn build(ctx: KernelContext<'a>, f: &GridFunction) -> Result<Self> {
        let u_nodes = f.nodes().to_vec();
        let n = u_nodes.len();
        if u_nodes[0] != 0.0 || u_nodes[n - 1] != 1.0 {
            return Err(Error::Invalid(
                "solid iterate must be sampled on u-nodes spanning [0, 1]".into(),
            ));
        }
        let alpha0 = ctx.alpha0;
        let ratio_v = |v: f64| -> Result<f64> {
            let s = alpha0 / v;
            let q = ctx.coeffs.capacity_at(Phase::Solid, s, f)?
                / ctx.coeffs.conductivity_at(Phase::Solid, s, f)?;
            Ok(q * alpha0 / (v * v))
        };
        let mut ratio = vec![None; n];
        ratio[n - 1] = Some(0.0);
        let mut acc = 0.0;
        for j in (1..n - 1).rev() {
            acc += short_integral(&ratio_v, u_nodes[j], u_nodes[j + 1], ctx.tol)?;
            ratio[j] = Some(acc);
        }
        ratio[0] = match integrate_finite(&ratio_v, 0.0, u_nodes[1], ctx.tol) {
            Ok(r) => Some(acc + r.value),
            Err(ref e) if is_divergence(e) => None,
            Err(e) => return Err(e),
        };

        let mut cache = SolidKernels {
            ctx,
            f: f.clone(),
            u_nodes,
            ratio_from_interface: ratio,
            flux_from_interface: Vec::new(),
        };

        let n_nodes = cache.u_nodes.len();
        let mut flux = vec![0.0; n_nodes];
        {
            let flux_v = |v: f64| -> Result<f64> {
                let s = alpha0 / v;
                let e = cache.integrating_factor(s)?;
                if e == 0.0 {
                    return Ok(0.0);
                }
                let l = cache.ctx.coeffs.conductivity_at(Phase::Solid, s, &cache.f)?;
                Ok(e / (v * l))
            };
            for j in (1..n_nodes - 1).rev() {
                let panel = short_integral(&flux_v, cache.u_nodes[j], cache.u_nodes[j + 1], ctx.tol)?;
                flux[j] = flux[j + 1] + panel;
            }
            // far-field panel: integrand tends to 0 at v = 0 under either
            // the envelope decay or an exponentially vanishing factor
            let tail = integrate_finite(&flux_v, 0.0, cache.u_nodes[1], ctx.tol)?.value;
            flux[0] = flux[1] + tail;
        }
        cache.flux_from_interface = flux;
        Ok(cache)
    }

    pub fn u_nodes(&self) -> &[f64] {
        &self.u_nodes
    }

    pub fn iterate(&self) -> &GridFunction {
        &self.f
    }

    fn to_u(&self, xi: f64) -> Result<f64> {
        if xi.is_nan() || xi < self.ctx.alpha0 * (1.0 - 1e-12) {
            return Err(Error::Domain(format!(
                "solid kernel coordinate {xi} below alpha0 = {}",
                self.ctx.alpha0
            )));
        }
        if xi.is_infinite() {
            Ok(0.0)
        } else {
            Ok((self.ctx.alpha0 / xi).min(1.0))
        }
    }

    fn ratio_integrand_v(&self) -> impl Fn(f64) -> Result<f64> + '_ {
        let alpha0 = self.ctx.alpha0;
        move |v: f64| {
            let s = alpha0 / v;
            let q = self.ctx.coeffs.capacity_at(Phase::Solid, s, &self.f)?
                / self.ctx.coeffs.conductivity_at(Phase::Solid, s, &self.f)?;
            Ok(q * alpha0 / (v * v))
        }
    }

    fn flux_integrand_v(&self) -> impl Fn(f64) -> Result<f64> + '_ {
        let alpha0 = self.ctx.alpha0;
        move |v: f64| {
            let s = alpha0 / v;
            let e = self.integrating_factor(s)?;
            if e == 0.0 {
                return Ok(0.0);
            }
            let l = self.ctx.coeffs.conductivity_at(Phase::Solid, s, &self.f)?;
            Ok(e / (v * l))
        }
    }

    /// Ratio integral from the interface out to mapped coordinate u,
    /// or None if it diverges (only possible at u = 0).
    fn ratio_integral_u(&self, u: f64) -> Result<Option<f64>> {
        if u == 1.0 {
            return Ok(Some(0.0));
        }
        if u == 0.0 {
            return Ok(self.ratio_from_interface[0]);
        }
        let k = self.u_nodes.partition_point(|&n| n <= u);
        let j = k - 1; // u > 0 ensures k >= 1
        if self.u_nodes[j] == u {
            return Ok(self.ratio_from_interface[j]);
        }
        let above = j + 1;
        let base = self.ratio_from_interface[above].expect("interior ratio integral is finite");
        let rem = if j == 0 {
            // below the first positive node the integrand may be steep
            integrate_finite(self.ratio_integrand_v(), u, self.u_nodes[above], self.ctx.tol)?.value
        } else {
            short_integral(&self.ratio_integrand_v(), u, self.u_nodes[above], self.ctx.tol)?
        };
        Ok(Some(base + rem))
    }

    /// Integrating factor E(xi) in (0, 1]; exactly 1 at xi = alpha0. When
    /// the ratio integral diverges toward infinity, the far-field limit 0
    /// is returned for xi = inf.
    pub fn integrating_factor(&self, xi: f64) -> Result<f64> {
        let u = self.to_u(xi)?;
        if u == 1.0 {
            return Ok(1.0);
        }
        match self.ratio_integral_u(u)? {
            Some(r) => Ok((-self.ctx.alpha0 * self.ctx.a * r).exp()),
            None => Ok(0.0),
        }
    }

    /// Flux integral F(alpha0, xi) = INT_alpha0^xi E/(s L*) ds; xi may be
    /// infinite. Zero at xi = alpha0; finite and positive at infinity when
    /// the solid envelope decay holds.
    pub fn flux_integral(&self, xi: f64) -> Result<f64> {
        let u = self.to_u(xi)?;
        if u == 1.0 {
            return Ok(0.0);
        }
        if u == 0.0 {
            return Ok(self.flux_from_interface[0]);
        }
        let k = self.u_nodes.partition_point(|&n| n <= u);
        let j = k - 1;
        if self.u_nodes[j] == u {
            return Ok(self.flux_from_interface[j]);
        }
        let above = j + 1;
        let rem = if j == 0 {
            integrate_finite(self.flux_integrand_v(), u, self.u_nodes[above], self.ctx.tol)?.value
        } else {
            short_integral(&self.flux_integrand_v(), u, self.u_nodes[above], self.ctx.tol)?
        };
        Ok(self.flux_from_interface[above] + rem)
    }

    /// Full flux integral to infinity.
    pub fn flux_to_infinity(&self) -> f64 {
        self.flux_from_interface[0]
    }

    /// Analytic profile slope from the integral representation:
    /// f'(xi) = -E(xi) / (xi L*(f(xi)) F(alpha0, inf)); strictly negative.
    pub fn profile_slope(&self, xi: f64) -> Result<f64> {
        if xi.is_infinite() {
            return Err(Error::Domain(
                "profile slope vanishes in the far-field limit; evaluate at finite xi".into(),
            ));
        }
        let total = self.flux_to_infinity();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Invalid(format!(
                "flux integral to infinity must be positive, got {total}"
            )));
        }
        let e = self.integrating_factor(xi)?;
        let l = self.ctx.coeffs.conductivity_at(Phase::Solid, xi, &self.f)?;
        Ok(-e / (xi * l * total))
    }

    /// Values of the solid fixed-point operator at the u-nodes:
    /// -F(alpha0, xi_j) / F(alpha0, inf). Exactly 0 at the interface and
    /// exactly -1 at the far-field limit node.
    pub fn operator_values(&self) -> Result<Vec<f64>> {
        let total = self.flux_to_infinity();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Invalid(format!(
                "flux integral to infinity must be positive, got {total}"
            )));
        }
        let n = self.u_nodes.len();
        let mut values = Vec::with_capacity(n);
        for j in 0..n {
            if j == 0 {
                values.push(-1.0);
            } else if j == n - 1 {
                values.push(0.0);
            } else {
                values.push(-self.flux_from_interface[j] / total);
            }
        }
        Ok(values)
    }
}

// Free functions matching the per-operation contracts; each builds a fresh
// cache, suiting one-off evaluations and tests.

pub fn integrating_factor_liquid(ctx: &KernelContext, eta: f64, f: &GridFunction) -> Result<f64> {
    ctx.liquid(f)?.integrating_factor(eta)
}

pub fn integrating_factor_solid(ctx: &KernelContext, xi: f64, f: &GridFunction) -> Result<f64> {
    ctx.solid(f)?.integrating_factor(xi)
}

pub fn flux_integral_liquid(ctx: &KernelContext, eta: f64, f: &GridFunction) -> Result<f64> {
    ctx.liquid(f)?.flux_integral(eta)
}

pub fn flux_integral_solid(ctx: &KernelContext, xi: f64, f: &GridFunction) -> Result<f64> {
    ctx.solid(f)?.flux_integral(xi)
}

/// The difference form F(alpha0) - F(eta) written as one integral from eta
/// to alpha0; finite for eta > 0 even in the constant-coefficient regime.
pub fn tail_integral_liquid(ctx: &KernelContext, eta: f64, f: &GridFunction) -> Result<f64> {
    ctx.liquid(f)?.tail_integral(eta)
}

pub fn profile_slope_liquid(ctx: &KernelContext, eta: f64, f: &GridFunction) -> Result<f64> {
    ctx.liquid(f)?.profile_slope(eta)
}

pub fn profile_slope_solid(ctx: &KernelContext, xi: f64, f: &GridFunction) -> Result<f64> {
    ctx.solid(f)?.profile_slope(xi)
}

/// One node of the analytic sandwich check.
#[derive(Debug, Clone, Copy)]
pub struct SandwichRow {
    pub coord: f64,
    pub damping: f64,
    pub damping_lo: f64,
    pub damping_hi: f64,
    pub flux: f64,
    pub flux_lo: f64,
    pub flux_hi: f64,
}

impl SandwichRow {
    pub fn holds(&self, tol: f64) -> bool {
        self.damping >= self.damping_lo - tol
            && self.damping <= self.damping_hi + tol
            && self.flux >= self.flux_lo - tol
            && self.flux <= self.flux_hi + tol
    }
}

/// Envelope-implied bounds for the integrating factor and flux integral at
/// every grid node of a liquid iterate.
pub fn liquid_sandwich(
    ctx: &KernelContext,
    env: &EnvelopeParams,
    f: &GridFunction,
) -> Result<Vec<SandwichRow>> {
    let cache = ctx.liquid(f)?;
    let p = env.mu - env.nu + 1.0;
    let mut rows = Vec::new();
    for &eta in cache.nodes() {
        let e = cache.integrating_factor(eta)?;
        let fl = cache.flux_integral(eta)?;
        let grow = eta.powf(p) / p;
        let e_lo = (-ctx.alpha0 * ctx.a * env.n1_hi / env.l1_lo * grow).exp();
        let e_hi = (-ctx.alpha0 * ctx.a * env.n1_lo / env.l1_hi * grow).exp();
        let f_hi = eta.powf(env.mu) / (env.l1_lo * env.mu);
        let f_lo = e_lo * eta.powf(env.mu) / (env.l1_hi * env.mu);
        rows.push(SandwichRow {
            coord: eta,
            damping: e,
            damping_lo: e_lo,
            damping_hi: e_hi,
            flux: fl,
            flux_lo: f_lo,
            flux_hi: f_hi,
        });
    }
    Ok(rows)
}

/// Same check on the solid side, including the far-field limit node.
pub fn solid_sandwich(
    ctx: &KernelContext,
    env: &EnvelopeParams,
    f: &GridFunction,
) -> Result<Vec<SandwichRow>> {
    let cache = ctx.solid(f)?;
    let q = env.beta - env.sigma - 1.0;
    let alpha0 = ctx.alpha0;
    let mut rows = Vec::new();
    for &u in cache.u_nodes() {
        let xi = if u == 0.0 { f64::INFINITY } else { alpha0 / u };
        let e = cache.integrating_factor(xi)?;
        let fl = cache.flux_integral(xi)?;
        let span = alpha0.powf(-q) - xi.powf(-q);
        let e_lo = (-ctx.a * alpha0 / q * env.n2_hi / env.l2_lo * span).exp();
        let e_hi = (-ctx.a * alpha0 / q * env.n2_lo / env.l2_hi * span).exp();
        let fspan = alpha0.powf(-env.beta) - xi.powf(-env.beta);
        let f_hi = fspan / (env.beta * env.l2_lo);
        let f_lo = (-ctx.a / q * env.n2_hi / env.l2_lo * alpha0.powf(-(q - 1.0))).exp()
            / (env.l2_hi * env.beta)
            * fspan;
        rows.push(SandwichRow {
            coord: xi,
            damping: e,
            damping_lo: e_lo,
            damping_hi: e_hi,
            flux: fl,
            flux_lo: f_lo,
            flux_hi: f_hi,
        });
    }
    Ok(rows)
}
