//! Double-exponential quadrature for integrands with endpoint singularities.
//!
//! An interval is cut at its breakpoints and at the midpoint of every
//! segment, so each piece has exactly one distinguished end (a true endpoint
//! or a breakpoint) where the integrand may be singular. On a piece of
//! length `h`, the distance to that end is written `r = h·e^{−y}` and the
//! half-line `y ∈ (0, ∞)` is covered by the exp-sinh rule
//! `y = exp(π/2·sinh τ)`. Algebraic behaviour `r^σ` turns into exponential
//! decay `e^{−(1+σ)y}`. For the borderline `σ = −1` with a logarithmic factor
//! `|ln r|^{−κ}`, `κ > 1`, a second substitution `y = e^v − 1` restores
//! exponential decay `e^{−(κ−1)v}`.
//!
//! The distance `r` underflows long before such integrands have released
//! their mass when `κ − 1` or `1 + σ` is small, so integrands may report
//! themselves in factored log form ([`LogDensity`]): the engine then merges
//! the singular power with the Jacobian symbolically and never forms `r`.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::surface_constant;

/// Half-width of the τ window; `exp(π/2·sinh 6) ≈ 1e137` stays finite.
const TAU_MAX: f64 = 6.0;
const BASE_STEP: f64 = 1.0;
const MIN_LEVEL: usize = 3;
const LEVEL_CAP: usize = 16;
const UNIT_POWER_TOL: f64 = 1e-9;

/// Behaviour `r^power · |ln r|^{−log_power}` of an integrand at distance `r`
/// from an endpoint or breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointBehavior {
    pub power: f64,
    pub log_power: f64,
}

impl EndpointBehavior {
    pub const REGULAR: EndpointBehavior = EndpointBehavior {
        power: 0.0,
        log_power: 0.0,
    };

    pub fn algebraic(power: f64) -> Self {
        EndpointBehavior {
            power,
            log_power: 0.0,
        }
    }

    pub fn logarithmic(power: f64, log_power: f64) -> Self {
        EndpointBehavior { power, log_power }
    }

    fn at_unit_threshold(&self) -> bool {
        (self.power + 1.0).abs() <= UNIT_POWER_TOL
    }

    pub fn is_integrable(&self) -> bool {
        if !self.power.is_finite() || !self.log_power.is_finite() {
            return false;
        }
        if self.at_unit_threshold() {
            self.log_power > 1.0
        } else {
            self.power > -1.0
        }
    }

    fn check(&self, location: &str) -> Result<()> {
        if self.is_integrable() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "non-integrable behaviour at {location}: power {} with log power {} \
                 (needs power > -1, or power = -1 with log power > 1)",
                self.power, self.log_power
            )))
        }
    }
}

impl Default for EndpointBehavior {
    fn default() -> Self {
        Self::REGULAR
    }
}

impl From<f64> for EndpointBehavior {
    fn from(power: f64) -> Self {
        Self::algebraic(power)
    }
}

/// Interior split point, with the integrand behaving like `|x − at|^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakpoint {
    pub at: f64,
    pub behavior: EndpointBehavior,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_level: usize,
    /// Behaviour at (lo, hi).
    pub endpoint_exponents: Option<(EndpointBehavior, EndpointBehavior)>,
    pub breakpoints: Vec<Breakpoint>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_level: 12,
            endpoint_exponents: None,
            breakpoints: Vec::new(),
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        QuadratureSpec {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn with_endpoints(
        mut self,
        lo: impl Into<EndpointBehavior>,
        hi: impl Into<EndpointBehavior>,
    ) -> Self {
        self.endpoint_exponents = Some((lo.into(), hi.into()));
        self
    }

    pub fn with_breakpoint(mut self, at: f64, behavior: impl Into<EndpointBehavior>) -> Self {
        self.breakpoints.push(Breakpoint {
            at,
            behavior: behavior.into(),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be positive (rel {}, abs {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_level < MIN_LEVEL || self.max_level > LEVEL_CAP {
            return Err(Error::InvalidInput(format!(
                "max_level must lie in {MIN_LEVEL}..={LEVEL_CAP}, got {}",
                self.max_level
            )));
        }
        if let Some((lo, hi)) = &self.endpoint_exponents {
            lo.check("lower endpoint")?;
            hi.check("upper endpoint")?;
        }
        for b in &self.breakpoints {
            b.behavior.check(&format!("breakpoint {}", b.at))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub levels_used: usize,
    pub converged: bool,
}

impl QuadratureResult {
    /// The value, or [`Error::NonConvergent`] when the levels ran out.
    pub fn converged_value(&self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NonConvergent {
                value: self.value,
                error: self.error_estimate,
                levels: self.levels_used,
            })
        }
    }
}

/// A quadrature abscissa together with accurate distances to both ends of
/// the integration interval.
///
/// Near the end a piece is anchored at, `from_*` is exact and `ln_from_*` is
/// exact even once `from_*` has underflowed (it may be `−∞` on
/// logarithmically mapped pieces). `lnln_from_*` is `ln(−ln(from_*))`,
/// finite whenever the distance is below one. `ln_abs_x` is `ln|x|`, exact
/// near the origin when the origin is a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub ln_abs_x: f64,
    pub from_lo: f64,
    pub from_hi: f64,
    pub ln_from_lo: f64,
    pub ln_from_hi: f64,
    pub lnln_from_lo: f64,
    pub lnln_from_hi: f64,
}

/// `exp(ln_rest) · from_lo^pow_lo · from_hi^pow_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub ln_rest: f64,
    pub pow_lo: f64,
    pub pow_hi: f64,
}

impl LogDensity {
    pub const ZERO: LogDensity = LogDensity {
        ln_rest: f64::NEG_INFINITY,
        pow_lo: 0.0,
        pow_hi: 0.0,
    };
}

pub enum Density {
    Linear(f64),
    Log(LogDensity),
}

pub trait Integrand {
    fn evaluate(&self, node: &Node) -> Density;
}

impl<F: Fn(f64) -> f64> Integrand for F {
    fn evaluate(&self, node: &Node) -> Density {
        Density::Linear(self(node.x))
    }
}

/// Adapter for closures that need the endpoint distances.
pub struct WithNode<F>(pub F);

impl<F: Fn(&Node) -> f64> Integrand for WithNode<F> {
    fn evaluate(&self, node: &Node) -> Density {
        Density::Linear((self.0)(node))
    }
}

/// Adapter for closures returning a factored log density.
pub struct LogForm<F>(pub F);

impl<F: Fn(&Node) -> LogDensity> Integrand for LogForm<F> {
    fn evaluate(&self, node: &Node) -> Density {
        Density::Log((self.0)(node))
    }
}

struct TableNode {
    /// exp-sinh abscissa on the half-line.
    v: f64,
    /// ln(dv/dτ).
    ln_dv: f64,
}

/// Nodes first introduced at each level; level 0 holds the coarse grid.
fn node_table() -> &'static [Vec<TableNode>] {
    static TABLE: OnceLock<Vec<Vec<TableNode>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let make = |tau: f64| {
            let s = FRAC_PI_2 * tau.sinh();
            TableNode {
                v: s.exp(),
                ln_dv: s + (FRAC_PI_2 * tau.cosh()).ln(),
            }
        };
        let mut levels = Vec::with_capacity(LEVEL_CAP + 1);
        let n0 = (TAU_MAX / BASE_STEP) as i64;
        levels.push((-n0..=n0).map(|j| make(j as f64 * BASE_STEP)).collect());
        for k in 1..=LEVEL_CAP {
            let h = BASE_STEP / (1u64 << k) as f64;
            let count = (TAU_MAX / h) as i64;
            levels.push(
                (-count..=count)
                    .filter(|j| j.rem_euclid(2) == 1)
                    .map(|j| make(j as f64 * h))
                    .collect(),
            );
        }
        levels
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Anchor {
    Lo,
    Hi,
    Interior(f64),
}

struct Piece {
    anchor: Anchor,
    /// +1 when the piece extends upward from its anchor.
    direction: f64,
    length: f64,
    ln_length: f64,
    log_map: bool,
}

struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn node(&self, piece: &Piece, r: f64, ln_r: f64, lnln_r: f64) -> Node {
        let width = self.hi - self.lo;
        let far = |d: f64| (d, d.ln(), neg_ln_ln(d));
        match piece.anchor {
            Anchor::Lo => {
                let (from_hi, ln_from_hi, lnln_from_hi) = far(width - r);
                let x = self.lo + r;
                Node {
                    x,
                    ln_abs_x: x.abs().ln(),
                    from_lo: r,
                    from_hi,
                    ln_from_lo: ln_r,
                    ln_from_hi,
                    lnln_from_lo: lnln_r,
                    lnln_from_hi,
                }
            }
            Anchor::Hi => {
                let (from_lo, ln_from_lo, lnln_from_lo) = far(width - r);
                let x = self.hi - r;
                Node {
                    x,
                    ln_abs_x: x.abs().ln(),
                    from_lo,
                    from_hi: r,
                    ln_from_lo,
                    ln_from_hi: ln_r,
                    lnln_from_lo,
                    lnln_from_hi: lnln_r,
                }
            }
            Anchor::Interior(b) => {
                let offset = piece.direction * r;
                let (from_lo, ln_from_lo, lnln_from_lo) = far((b - self.lo) + offset);
                let (from_hi, ln_from_hi, lnln_from_hi) = far((self.hi - b) - offset);
                let x = b + offset;
                let ln_abs_x = if b == 0.0 { ln_r } else { x.abs().ln() };
                Node {
                    x,
                    ln_abs_x,
                    from_lo,
                    from_hi,
                    ln_from_lo,
                    ln_from_hi,
                    lnln_from_lo,
                    lnln_from_hi,
                }
            }
        }
    }
}

fn neg_ln_ln(d: f64) -> f64 {
    if d < 1.0 {
        (-d.ln()).ln()
    } else {
        f64::NAN
    }
}

fn scaled(coef: f64, ln: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * ln
    }
}

/// One weighted term (without the level step) at a table node, or `None`
/// when the node lies beyond floating-point reach of the anchored end.
fn term<F: Integrand>(
    f: &F,
    interval: &Interval,
    piece: &Piece,
    tn: &TableNode,
) -> Result<Option<f64>> {
    let (y, ln_dy) = if piece.log_map {
        (tn.v.exp_m1(), tn.v)
    } else {
        (tn.v, 0.0)
    };
    let ln_r = piece.ln_length - y;
    let lnln_r = if y.is_finite() {
        (y - piece.ln_length).ln()
    } else {
        tn.v + (-(1.0 + piece.ln_length) * (-tn.v).exp()).ln_1p()
    };
    let r = ln_r.exp();
    let node = interval.node(piece, r, ln_r, lnln_r);
    let ln_jac = ln_dy + tn.ln_dv;

    match f.evaluate(&node) {
        Density::Linear(value) => {
            let at_end = r == 0.0 || node.x <= interval.lo || node.x >= interval.hi;
            if !value.is_finite() {
                if at_end {
                    return Ok(None);
                }
                return Err(Error::NumericalFailure(format!(
                    "integrand is not finite at interior point x = {:e}",
                    node.x
                )));
            }
            Ok(Some(value * (ln_r + ln_jac).exp()))
        }
        Density::Log(d) => {
            if d.ln_rest == f64::NEG_INFINITY {
                return Ok(Some(0.0));
            }
            let (pow_anchor, ln_other, pow_other) = match piece.anchor {
                Anchor::Lo => (d.pow_lo, node.ln_from_hi, d.pow_hi),
                Anchor::Hi => (d.pow_hi, node.ln_from_lo, d.pow_lo),
                Anchor::Interior(_) => {
                    // both distances are ordinary numbers here
                    let ln_total = d.ln_rest
                        + scaled(d.pow_lo, node.ln_from_lo)
                        + scaled(d.pow_hi, node.ln_from_hi)
                        + ln_r
                        + ln_jac;
                    return finish(ln_total, node.x);
                }
            };
            let mut merged = pow_anchor + 1.0;
            if merged.abs() <= 1e-12 {
                merged = 0.0;
            }
            let ln_total = d.ln_rest + scaled(merged, ln_r) + scaled(pow_other, ln_other) + ln_jac;
            finish(ln_total, node.x)
        }
    }
}

fn finish(ln_total: f64, x: f64) -> Result<Option<f64>> {
    if ln_total.is_nan() || ln_total == f64::INFINITY {
        return Err(Error::NumericalFailure(format!(
            "integrand is not finite near x = {x:e} (log weight {ln_total})"
        )));
    }
    Ok(Some(ln_total.exp()))
}

fn pieces(lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Vec<Piece>> {
    let (lo_b, hi_b) = spec.endpoint_exponents.unwrap_or_default();
    let mut cuts: Vec<(Anchor, EndpointBehavior)> = vec![(Anchor::Lo, lo_b)];
    let mut breaks = spec.breakpoints.clone();
    breaks.sort_by(|a, b| a.at.total_cmp(&b.at));
    for b in &breaks {
        if !(b.at > lo && b.at < hi) {
            return Err(Error::InvalidInput(format!(
                "breakpoint {} outside the open interval ({lo}, {hi})",
                b.at
            )));
        }
        if let Some((Anchor::Interior(prev), _)) = cuts.last() {
            if *prev == b.at {
                continue;
            }
        }
        cuts.push((Anchor::Interior(b.at), b.behavior));
    }
    cuts.push((Anchor::Hi, hi_b));

    let position = |a: Anchor| match a {
        Anchor::Lo => lo,
        Anchor::Hi => hi,
        Anchor::Interior(b) => b,
    };
    let mut out = Vec::with_capacity(2 * (cuts.len() - 1));
    for w in cuts.windows(2) {
        let (a, a_beh) = w[0];
        let (b, b_beh) = w[1];
        let half = (position(b) - position(a)) / 2.0;
        if !(half > 0.0) {
            return Err(Error::InvalidInput(format!(
                "empty segment between {} and {}",
                position(a),
                position(b)
            )));
        }
        out.push(Piece {
            anchor: a,
            direction: 1.0,
            length: half,
            ln_length: half.ln(),
            log_map: a_beh.at_unit_threshold(),
        });
        out.push(Piece {
            anchor: b,
            direction: -1.0,
            length: half,
            ln_length: half.ln(),
            log_map: b_beh.at_unit_threshold(),
        });
    }
    Ok(out)
}

/// Integrates `f` over `(lo, hi)`.
///
/// Returns the best estimate with `converged = false` when `max_level` is
/// exhausted; callers that cannot use such a value go through
/// [`QuadratureResult::converged_value`].
pub fn integrate_line<F: Integrand>(
    f: F,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput(format!(
            "need finite lo < hi, got ({lo}, {hi})"
        )));
    }
    spec.validate()?;
    let pieces = pieces(lo, hi, spec)?;
    debug_assert!(pieces.iter().all(|p| p.length > 0.0));
    let interval = Interval { lo, hi };
    let table = node_table();

    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut previous: Option<f64> = None;
    let mut last = QuadratureResult {
        value: 0.0,
        error_estimate: f64::INFINITY,
        levels_used: 0,
        converged: false,
    };

    for (level, nodes) in table.iter().enumerate().take(spec.max_level + 1) {
        for piece in &pieces {
            for tn in nodes {
                if let Some(t) = term(&f, &interval, piece, tn)? {
                    sum += t;
                    abs_sum += t.abs();
                }
            }
        }
        let step = BASE_STEP / (1u64 << level) as f64;
        let value = sum * step;
        if !value.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "quadrature sum is not finite at level {level}"
            )));
        }
        let roundoff = 16.0 * f64::EPSILON * abs_sum * step;
        let diff = previous.map_or(f64::INFINITY, |p| (value - p).abs());
        let error_estimate = diff.max(roundoff);
        let tolerance = (spec.rel_tol * value.abs()).max(spec.abs_tol);
        let converged = level >= MIN_LEVEL && error_estimate <= tolerance;
        last = QuadratureResult {
            value,
            error_estimate,
            levels_used: level,
            converged,
        };
        if converged {
            break;
        }
        previous = Some(value);
    }
    Ok(last)
}

/// `C_N ∫_{−1}^{1} g(t) (1 − t²)^{(N−3)/2} dt`, the integral over `S^{N−1}`
/// of the zonal function `g(cos d)`.
///
/// The interval is always split at `t = 0`. Endpoint hints in `spec`
/// describe the full integrand, weight included; without hints the weight
/// exponent alone is used.
pub fn integrate_zonal<F: Integrand>(
    g: F,
    ambient_dim: usize,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    let c = surface_constant(ambient_dim)?.value;
    let weight = (ambient_dim as f64 - 3.0) / 2.0;
    let mut spec = spec.clone();
    if spec.endpoint_exponents.is_none() {
        spec.endpoint_exponents = Some((weight.into(), weight.into()));
    }
    if !spec.breakpoints.iter().any(|b| b.at == 0.0) {
        spec.breakpoints.push(Breakpoint {
            at: 0.0,
            behavior: EndpointBehavior::REGULAR,
        });
    }
    let weighted = Weighted { inner: g, weight };
    let raw = integrate_line(weighted, -1.0, 1.0, &spec)?;
    Ok(QuadratureResult {
        value: c * raw.value,
        error_estimate: c * raw.error_estimate,
        ..raw
    })
}

struct Weighted<F> {
    inner: F,
    weight: f64,
}

impl<F: Integrand> Integrand for Weighted<F> {
    fn evaluate(&self, node: &Node) -> Density {
        match self.inner.evaluate(node) {
            Density::Linear(v) => {
                if self.weight == 0.0 {
                    Density::Linear(v)
                } else {
                    Density::Linear(v * (node.from_lo * node.from_hi).powf(self.weight))
                }
            }
            Density::Log(d) => Density::Log(LogDensity {
                ln_rest: d.ln_rest,
                pow_lo: d.pow_lo + self.weight,
                pow_hi: d.pow_hi + self.weight,
            }),
        }
    }
}
