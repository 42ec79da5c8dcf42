//! Hardy-type functionals of zonal functions, inequality margins and
//! sharpness ratios.
//!
//! A zonal function `u = g∘d` has `|∇u| = |g′(d)|`, so every functional
//! reduces to a one-dimensional integral in `t = cos d`. Integrands are
//! assembled in factored log form, powers of `1 ± t`, `|t|` and
//! `L = log(e / sin d)` kept symbolic, so the quadrature engine can place
//! its nodes arbitrarily close to the poles without underflow.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{
    integrate_zonal, Breakpoint, EndpointBehavior, LogDensity, LogForm, Node, QuadratureSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `S^{N−1}` with `1 < p < N − 1`.
    Sub,
    /// `S^q`, `q = N − 1`, with `p = q`.
    Crit,
}

/// Ambient dimension, exponent and regime, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentConfig {
    ambient_dim: usize,
    p: f64,
    regime: Regime,
}

impl ExponentConfig {
    pub fn subcritical(ambient_dim: usize, p: f64) -> Result<Self> {
        let n = ambient_dim as f64;
        if ambient_dim < 4 || !(p > 1.0 && p < n - 1.0) {
            return Err(Error::InvalidInput(format!(
                "subcritical regime requires N >= 4 and 1 < p < N-1, got N = {ambient_dim}, p = {p}"
            )));
        }
        Ok(ExponentConfig {
            ambient_dim,
            p,
            regime: Regime::Sub,
        })
    }

    /// Critical regime on `S^q ⊂ R^{q+1}` with `p = q`.
    pub fn critical(ambient_dim: usize) -> Result<Self> {
        if ambient_dim < 3 {
            return Err(Error::InvalidInput(format!(
                "critical regime requires sphere dimension q = N-1 >= 2, got N = {ambient_dim}"
            )));
        }
        Ok(ExponentConfig {
            ambient_dim,
            p: (ambient_dim - 1) as f64,
            regime: Regime::Crit,
        })
    }

    pub fn new(ambient_dim: usize, p: f64, regime: Regime) -> Result<Self> {
        match regime {
            Regime::Sub => Self::subcritical(ambient_dim, p),
            Regime::Crit => {
                let cfg = Self::critical(ambient_dim)?;
                if p != cfg.p {
                    return Err(Error::InvalidInput(format!(
                        "critical regime requires p = N-1 = {}, got p = {p}",
                        cfg.p
                    )));
                }
                Ok(cfg)
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn n(&self) -> f64 {
        self.ambient_dim as f64
    }

    /// `α = (N − 1 − p) / p`.
    pub fn alpha(&self) -> f64 {
        (self.n() - 1.0 - self.p) / self.p
    }

    /// `γ = (q − 1) / q` with `q = N − 1`.
    pub fn gamma(&self) -> f64 {
        let q = self.n() - 1.0;
        (q - 1.0) / q
    }

    fn require(&self, regime: Regime, what: &str) -> Result<()> {
        if self.regime == regime {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} needs the {regime:?} regime, config is {:?}",
                self.regime
            )))
        }
    }

    fn require_tan_exponent(&self, what: &str) -> Result<()> {
        if self.p >= 2.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} requires p ≥ 2, got p = {}",
                self.p
            )))
        }
    }
}

/// Quantities at a zonal quadrature node, `t = cos d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonalNode {
    pub t: f64,
    pub ln_abs_t: f64,
    pub ln_one_minus_t: f64,
    pub ln_one_plus_t: f64,
    pub ln_sin: f64,
    /// `ln L`, `L = 1 − ln sin d`.
    pub ln_log_factor: f64,
}

impl ZonalNode {
    pub fn from_node(n: &Node) -> Self {
        let ln_sin = 0.5 * (n.ln_from_lo + n.ln_from_hi);
        let ln_log_factor = if ln_sin.is_finite() {
            (-ln_sin).ln_1p()
        } else if n.ln_from_hi == f64::NEG_INFINITY {
            n.lnln_from_hi - std::f64::consts::LN_2
        } else {
            n.lnln_from_lo - std::f64::consts::LN_2
        };
        ZonalNode {
            t: n.x,
            ln_abs_t: n.ln_abs_x,
            ln_one_minus_t: n.ln_from_hi,
            ln_one_plus_t: n.ln_from_lo,
            ln_sin,
            ln_log_factor,
        }
    }

    fn sin_squared(&self) -> f64 {
        (self.ln_one_minus_t + self.ln_one_plus_t).exp()
    }
}

fn scaled(coef: f64, ln: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * ln
    }
}

/// `e^{ln_coef} (1+t)^{pow_lo} (1−t)^{pow_hi} |t|^{pow_t} L^{pow_l}`.
///
/// The powers are fixed per profile; only `ln_coef` varies with the node and
/// it stays bounded on the closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub ln_coef: f64,
    pub pow_lo: f64,
    pub pow_hi: f64,
    pub pow_t: f64,
    pub pow_l: f64,
}

impl Factor {
    const ONE: Factor = Factor {
        ln_coef: 0.0,
        pow_lo: 0.0,
        pow_hi: 0.0,
        pow_t: 0.0,
        pow_l: 0.0,
    };
    const ZERO: Factor = Factor {
        ln_coef: f64::NEG_INFINITY,
        ..Factor::ONE
    };

    fn sin_power(k: f64) -> Factor {
        Factor {
            pow_lo: k / 2.0,
            pow_hi: k / 2.0,
            ..Factor::ONE
        }
    }

    fn abs_t_power(k: f64) -> Factor {
        Factor {
            pow_t: k,
            ..Factor::ONE
        }
    }

    fn log_power(k: f64) -> Factor {
        Factor {
            pow_l: k,
            ..Factor::ONE
        }
    }

    fn coef(ln: f64) -> Factor {
        Factor {
            ln_coef: ln,
            ..Factor::ONE
        }
    }

    fn times(self, o: Factor) -> Factor {
        Factor {
            ln_coef: self.ln_coef + o.ln_coef,
            pow_lo: self.pow_lo + o.pow_lo,
            pow_hi: self.pow_hi + o.pow_hi,
            pow_t: self.pow_t + o.pow_t,
            pow_l: self.pow_l + o.pow_l,
        }
    }

    fn powf(self, p: f64) -> Factor {
        Factor {
            ln_coef: scaled(p, self.ln_coef),
            pow_lo: p * self.pow_lo,
            pow_hi: p * self.pow_hi,
            pow_t: p * self.pow_t,
            pow_l: p * self.pow_l,
        }
    }

    fn is_zero(&self) -> bool {
        self.ln_coef == f64::NEG_INFINITY
    }

    fn density(&self, z: &ZonalNode) -> LogDensity {
        if self.is_zero() {
            return LogDensity::ZERO;
        }
        LogDensity {
            ln_rest: self.ln_coef
                + scaled(self.pow_t, z.ln_abs_t)
                + scaled(self.pow_l, z.ln_log_factor),
            pow_lo: self.pow_lo,
            pow_hi: self.pow_hi,
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Constant(f64),
    /// Coefficients of `P(t) = Σ c_k t^k`.
    CosPolynomial(Vec<f64>),
    CotPowerCos(f64),
    CotPower(f64),
    InverseSinPower(f64),
    HalfAngleCotPower(f64),
    LogPower(f64),
    Custom {
        value: RealFn,
        derivative: RealFn,
    },
}

/// A radial profile `g(d)` defining the zonal function `u = g∘d`.
#[derive(Clone)]
pub struct ZonalProfile {
    pub label: String,
    shape: Shape,
}

impl fmt::Debug for ZonalProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZonalProfile")
            .field("label", &self.label)
            .finish()
    }
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &ck)| k as f64 * ck)
        .collect()
}

/// Sign changes of `P` on a fine grid of `(−1, 1)`, refined by bisection.
fn poly_roots(c: &[f64]) -> Vec<f64> {
    const GRID: usize = 400;
    let mut roots = Vec::new();
    let at = |i: usize| -1.0 + 2.0 * i as f64 / GRID as f64;
    for i in 1..GRID - 1 {
        let (mut a, mut b) = (at(i), at(i + 1));
        let (fa, fb) = (poly_eval(c, a), poly_eval(c, b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb >= 0.0 {
            continue;
        }
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if poly_eval(c, a) * poly_eval(c, m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

impl ZonalProfile {
    pub fn constant(c: f64) -> Self {
        ZonalProfile {
            label: format!("const({c})"),
            shape: Shape::Constant(c),
        }
    }

    /// `g(d) = Σ c_k cos^k d`.
    pub fn cos_polynomial(coeffs: Vec<f64>) -> Self {
        ZonalProfile {
            label: format!("cospoly({coeffs:?})"),
            shape: Shape::CosPolynomial(coeffs),
        }
    }

    /// `g(d) = |cot d|^a cos d`.
    pub fn cot_power_cos(a: f64) -> Self {
        ZonalProfile {
            label: format!("|cot d|^{a} cos d"),
            shape: Shape::CotPowerCos(a),
        }
    }

    /// `g(d) = |cot d|^a`.
    pub fn cot_power(a: f64) -> Self {
        ZonalProfile {
            label: format!("|cot d|^{a}"),
            shape: Shape::CotPower(a),
        }
    }

    /// `g(d) = sin^{−a} d`.
    pub fn inverse_sin_power(a: f64) -> Self {
        ZonalProfile {
            label: format!("sin(d)^-{a}"),
            shape: Shape::InverseSinPower(a),
        }
    }

    /// `g(d) = ((1 + cos d) / sin d)^a`.
    pub fn half_angle_cot_power(a: f64) -> Self {
        ZonalProfile {
            label: format!("((1+cos d)/sin d)^{a}"),
            shape: Shape::HalfAngleCotPower(a),
        }
    }

    /// `g(d) = log(e / sin d)^b`.
    pub fn log_power(b: f64) -> Self {
        ZonalProfile {
            label: format!("log(e/sin d)^{b}"),
            shape: Shape::LogPower(b),
        }
    }

    /// A profile given by closures for `g` and `g′`, assumed smooth and
    /// bounded on `[0, π]`.
    pub fn custom(
        label: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ZonalProfile {
            label: label.into(),
            shape: Shape::Custom {
                value: Arc::new(value),
                derivative: Arc::new(derivative),
            },
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn value(&self, d: f64) -> f64 {
        let (s, c) = d.sin_cos();
        match &self.shape {
            Shape::Constant(k) => *k,
            Shape::CosPolynomial(cs) => poly_eval(cs, c),
            Shape::CotPowerCos(a) => (c / s).abs().powf(*a) * c,
            Shape::CotPower(a) => (c / s).abs().powf(*a),
            Shape::InverseSinPower(a) => s.powf(-a),
            Shape::HalfAngleCotPower(a) => ((1.0 + c) / s).powf(*a),
            Shape::LogPower(b) => (1.0 - s.ln()).powf(*b),
            Shape::Custom { value, .. } => value(d),
        }
    }

    pub fn derivative(&self, d: f64) -> f64 {
        let (s, c) = d.sin_cos();
        match &self.shape {
            Shape::Constant(_) => 0.0,
            Shape::CosPolynomial(cs) => -s * poly_eval(&poly_derivative(cs), c),
            Shape::CotPowerCos(a) => -(c / s).abs().powf(*a) * (a + s * s) / s,
            Shape::CotPower(a) => -c.signum() * a * c.abs().powf(a - 1.0) / s.powf(a + 1.0),
            Shape::InverseSinPower(a) => -a * c / s.powf(a + 1.0),
            Shape::HalfAngleCotPower(a) => -a * ((1.0 + c) / s).powf(*a) / s,
            Shape::LogPower(b) => -b * (1.0 - s.ln()).powf(b - 1.0) * c / s,
            Shape::Custom { derivative, .. } => derivative(d),
        }
    }

    /// Factored forms of `|g|` and `|g′|` at a node.
    pub fn factors(&self, z: &ZonalNode) -> (Factor, Factor) {
        let sin = Factor::sin_power;
        let abs_t = Factor::abs_t_power;
        match &self.shape {
            Shape::Constant(k) => (Factor::coef(k.abs().ln()), Factor::ZERO),
            Shape::CosPolynomial(cs) => {
                let dp = poly_derivative(cs);
                (
                    Factor::coef(poly_eval(cs, z.t).abs().ln()),
                    Factor::coef(poly_eval(&dp, z.t).abs().ln()).times(sin(1.0)),
                )
            }
            Shape::CotPowerCos(a) => (
                abs_t(a + 1.0).times(sin(-a)),
                Factor::coef((a + z.sin_squared()).ln())
                    .times(abs_t(*a))
                    .times(sin(-a - 1.0)),
            ),
            Shape::CotPower(a) => (
                abs_t(*a).times(sin(-a)),
                Factor::coef(a.ln())
                    .times(abs_t(a - 1.0))
                    .times(sin(-a - 1.0)),
            ),
            Shape::InverseSinPower(a) => (
                sin(-a),
                Factor::coef(a.ln()).times(abs_t(1.0)).times(sin(-a - 1.0)),
            ),
            Shape::HalfAngleCotPower(a) => (
                Factor {
                    pow_lo: a / 2.0,
                    pow_hi: -a / 2.0,
                    ..Factor::ONE
                },
                Factor {
                    ln_coef: a.ln(),
                    pow_lo: (a - 1.0) / 2.0,
                    pow_hi: -(a + 1.0) / 2.0,
                    ..Factor::ONE
                },
            ),
            Shape::LogPower(b) => (
                Factor::log_power(*b),
                Factor::coef(b.ln())
                    .times(Factor::log_power(b - 1.0))
                    .times(abs_t(1.0))
                    .times(sin(-1.0)),
            ),
            Shape::Custom { value, derivative } => {
                let d = z.t.clamp(-1.0, 1.0).acos();
                (
                    Factor::coef(value(d).abs().ln()),
                    Factor::coef(derivative(d).abs().ln()),
                )
            }
        }
    }

    /// Interior points where `g` or `g′` may vanish with a kink in `|·|^p`.
    fn kinks(&self) -> Vec<f64> {
        match &self.shape {
            Shape::CosPolynomial(cs) => {
                let mut k = poly_roots(cs);
                k.extend(poly_roots(&poly_derivative(cs)));
                k.retain(|&x| x != 0.0);
                k.sort_by(f64::total_cmp);
                k.dedup();
                k
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FunctionalKind {
    /// `∫ |u|^p / sin^p d`.
    S,
    /// `∫ |u|^p / sin^{p−2} d`.
    STilde,
    /// `∫ |u|^p / |tan d|^p`.
    T,
    /// `∫ |u|^p / |tan d|^{p−2}`.
    TTilde,
    /// `∫ |∇u|^p`.
    F,
    /// `∫ |∇u|^p |cos d|^p`.
    G,
    /// `∫ |u|^q / (sin^q d · L^q)`.
    U,
    /// `∫ |u|^q / (sin^{q−2} d · L^{q−1})`.
    UTilde,
    /// `∫ |u|^q / (|tan d|^q · L^q)`.
    V,
    /// `∫ |u|^q / (|tan d|^{q−2} · L^{q−1})`.
    VTilde,
    /// `∫ |∇u|^q`.
    H,
    /// `∫ |∇u|^q |cos d|^q`.
    Q,
}

impl FunctionalKind {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionalKind::S => "S_p",
            FunctionalKind::STilde => "S~_p",
            FunctionalKind::T => "T_p",
            FunctionalKind::TTilde => "T~_p",
            FunctionalKind::F => "F_p",
            FunctionalKind::G => "G_p",
            FunctionalKind::U => "U_n",
            FunctionalKind::UTilde => "U~_n",
            FunctionalKind::V => "V_n",
            FunctionalKind::VTilde => "V~_n",
            FunctionalKind::H => "H_n",
            FunctionalKind::Q => "Q_n",
        }
    }

    pub fn regime(&self) -> Regime {
        use FunctionalKind::*;
        match self {
            S | STilde | T | TTilde | F | G => Regime::Sub,
            U | UTilde | V | VTilde | H | Q => Regime::Crit,
        }
    }

    fn uses_gradient(&self) -> bool {
        use FunctionalKind::*;
        matches!(self, F | G | H | Q)
    }

    /// The weight multiplying `|u|^p` or `|∇u|^p`.
    fn weight(&self, p: f64) -> Factor {
        use FunctionalKind::*;
        let sin = Factor::sin_power;
        let abs_t = Factor::abs_t_power;
        let log = Factor::log_power;
        match self {
            S => sin(-p),
            STilde => sin(2.0 - p),
            T => abs_t(p).times(sin(-p)),
            TTilde => abs_t(p - 2.0).times(sin(2.0 - p)),
            F | H => Factor::ONE,
            G | Q => abs_t(p),
            U => sin(-p).times(log(-p)),
            UTilde => sin(2.0 - p).times(log(1.0 - p)),
            V => abs_t(p).times(sin(-p)).times(log(-p)),
            VTilde => abs_t(p - 2.0).times(sin(2.0 - p)).times(log(1.0 - p)),
        }
    }
}

impl fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn integrand_factor(kind: FunctionalKind, u: &ZonalProfile, p: f64, z: &ZonalNode) -> Factor {
    let (g, dg) = u.factors(z);
    let base = if kind.uses_gradient() { dg } else { g };
    base.powf(p).times(kind.weight(p))
}

fn describe(power: f64, log_power: f64, base: &str) -> String {
    if log_power == 0.0 {
        format!("{base}^{power}")
    } else {
        format!("{base}^{power} |log {base}|^{}", -log_power)
    }
}

/// Evaluates `kind` on the zonal function `u` via the reduction to `t = cos d`.
///
/// Endpoint hints in `spec` are replaced by the exponents read off the
/// integrand; non-integrable combinations are rejected before any node is
/// evaluated.
pub fn eval_functional(
    kind: FunctionalKind,
    u: &ZonalProfile,
    cfg: &ExponentConfig,
    spec: &QuadratureSpec,
) -> Result<f64> {
    cfg.require(kind.regime(), kind.name())?;
    let p = cfg.p();
    let weight = (cfg.n() - 3.0) / 2.0;

    // the powers do not depend on the node, so any interior node exposes them
    let probe = ZonalNode {
        t: 0.5,
        ln_abs_t: 0.5f64.ln(),
        ln_one_minus_t: 0.5f64.ln(),
        ln_one_plus_t: 1.5f64.ln(),
        ln_sin: 0.75f64.sqrt().ln(),
        ln_log_factor: (1.0 - 0.75f64.sqrt().ln()).ln(),
    };
    let shape = integrand_factor(kind, u, p, &probe);
    if shape.is_zero() && kind.uses_gradient() && matches!(u.shape, Shape::Constant(_)) {
        return Ok(0.0);
    }

    let at_zero = EndpointBehavior::logarithmic(shape.pow_hi + weight, -shape.pow_l);
    let at_pi = EndpointBehavior::logarithmic(shape.pow_lo + weight, -shape.pow_l);
    let at_equator = EndpointBehavior::algebraic(shape.pow_t);
    for (beh, place, base) in [
        (at_zero, "d = 0", "d"),
        (at_pi, "d = π", "(π - d)"),
        (at_equator, "d = π/2", "|cos d|"),
    ] {
        if !beh.is_integrable() {
            return Err(Error::Domain(format!(
                "{} of {} is not integrable: integrand behaves like {} near {place}",
                kind.name(),
                u.label,
                describe(beh.power, beh.log_power, base)
            )));
        }
    }

    let mut spec = spec.clone();
    spec.endpoint_exponents = Some((at_pi, at_zero));
    spec.breakpoints.retain(|b| b.at != 0.0);
    spec.breakpoints.push(Breakpoint {
        at: 0.0,
        behavior: at_equator,
    });
    for k in u.kinks() {
        if !spec.breakpoints.iter().any(|b| b.at == k) {
            spec.breakpoints.push(Breakpoint {
                at: k,
                behavior: EndpointBehavior::REGULAR,
            });
        }
    }

    let integrand = LogForm(|n: &Node| {
        let z = ZonalNode::from_node(n);
        integrand_factor(kind, u, p, &z).density(&z)
    });
    integrate_zonal(integrand, cfg.ambient_dim(), &spec)?.converged_value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InequalityId {
    F1,
    F3,
    Fc1,
    Fc2,
    /// The strengthened inequality `α^p S ≤ F + α^{p−1} S̃`, which fails.
    Inqfls,
}

impl InequalityId {
    pub fn name(&self) -> &'static str {
        match self {
            InequalityId::F1 => "f1",
            InequalityId::F3 => "f3",
            InequalityId::Fc1 => "fc1",
            InequalityId::Fc2 => "fc2",
            InequalityId::Inqfls => "inqfls",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "f1" => InequalityId::F1,
            "f3" => InequalityId::F3,
            "fc1" => InequalityId::Fc1,
            "fc2" => InequalityId::Fc2,
            "inqfls" => InequalityId::Inqfls,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown inequality '{s}' (f1, f3, fc1, fc2, inqfls)"
                )))
            }
        })
    }

    pub fn regime(&self) -> Regime {
        match self {
            InequalityId::Fc1 | InequalityId::Fc2 => Regime::Crit,
            _ => Regime::Sub,
        }
    }

    /// True for the inequalities that are theorems.
    pub fn is_proven(&self) -> bool {
        *self != InequalityId::Inqfls
    }

    pub fn check_config(&self, cfg: &ExponentConfig) -> Result<()> {
        cfg.require(self.regime(), self.name())?;
        if *self == InequalityId::F3 {
            cfg.require_tan_exponent("f3")?;
        }
        Ok(())
    }
}

/// Both sides of an inequality `lhs ≤ rhs` evaluated on one profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub inequality: InequalityId,
    pub profile: String,
    pub config: ExponentConfig,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
}

impl Margin {
    /// Negative beyond `max(rel·|rhs|, 1e−12)`.
    pub fn is_violation(&self, rel: f64) -> bool {
        self.margin < -(rel * self.rhs.abs()).max(1e-12)
    }
}

pub fn inequality_margin(
    id: InequalityId,
    u: &ZonalProfile,
    cfg: &ExponentConfig,
    spec: &QuadratureSpec,
) -> Result<Margin> {
    id.check_config(cfg)?;
    let p = cfg.p();
    let f = |k| eval_functional(k, u, cfg, spec);
    use FunctionalKind as K;
    let (lhs, rhs) = match id {
        InequalityId::F1 => {
            let a = cfg.alpha();
            (
                a.powf(p) * f(K::S)?,
                f(K::G)? + (cfg.n() - p) * a.powf(p - 1.0) * f(K::STilde)?,
            )
        }
        InequalityId::F3 => {
            let a = cfg.alpha();
            (
                a.powf(p) * f(K::T)?,
                f(K::F)? + (p - 1.0) * a.powf(p - 1.0) * f(K::TTilde)?,
            )
        }
        InequalityId::Fc1 => {
            let g = cfg.gamma();
            (
                g.powf(p) * f(K::U)?,
                f(K::Q)? + p * g.powf(p - 1.0) * f(K::UTilde)?,
            )
        }
        InequalityId::Fc2 => {
            let g = cfg.gamma();
            (
                g.powf(p) * f(K::V)?,
                f(K::H)? + (p - 1.0) * g.powf(p - 1.0) * f(K::VTilde)?,
            )
        }
        InequalityId::Inqfls => {
            let a = cfg.alpha();
            (
                a.powf(p) * f(K::S)?,
                f(K::F)? + a.powf(p - 1.0) * f(K::STilde)?,
            )
        }
    };
    Ok(Margin {
        inequality: id,
        profile: u.label.clone(),
        config: *cfg,
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SharpnessForm {
    F1shrp1,
    F1shrp2,
    F1shrp3,
    F3shrp1,
    F3shrp2,
    F3shrp3,
    Fc1shrp1,
    Fc1shrp2,
    Fc2shrp1,
    Fc2shrp2,
    Fc2shrp3,
}

impl SharpnessForm {
    pub const ALL: [SharpnessForm; 11] = [
        SharpnessForm::F1shrp1,
        SharpnessForm::F1shrp2,
        SharpnessForm::F1shrp3,
        SharpnessForm::F3shrp1,
        SharpnessForm::F3shrp2,
        SharpnessForm::F3shrp3,
        SharpnessForm::Fc1shrp1,
        SharpnessForm::Fc1shrp2,
        SharpnessForm::Fc2shrp1,
        SharpnessForm::Fc2shrp2,
        SharpnessForm::Fc2shrp3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SharpnessForm::F1shrp1 => "f1shrp1",
            SharpnessForm::F1shrp2 => "f1shrp2",
            SharpnessForm::F1shrp3 => "f1shrp3",
            SharpnessForm::F3shrp1 => "f3shrp1",
            SharpnessForm::F3shrp2 => "f3shrp2",
            SharpnessForm::F3shrp3 => "f3shrp3",
            SharpnessForm::Fc1shrp1 => "fc1shrp1",
            SharpnessForm::Fc1shrp2 => "fc1shrp2",
            SharpnessForm::Fc2shrp1 => "fc2shrp1",
            SharpnessForm::Fc2shrp2 => "fc2shrp2",
            SharpnessForm::Fc2shrp3 => "fc2shrp3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown sharpness form '{s}'")))
    }

    pub fn inequality(&self) -> InequalityId {
        use SharpnessForm::*;
        match self {
            F1shrp1 | F1shrp2 | F1shrp3 => InequalityId::F1,
            F3shrp1 | F3shrp2 | F3shrp3 => InequalityId::F3,
            Fc1shrp1 | Fc1shrp2 => InequalityId::Fc1,
            Fc2shrp1 | Fc2shrp2 | Fc2shrp3 => InequalityId::Fc2,
        }
    }

    pub fn required(&self) -> [FunctionalKind; 3] {
        use FunctionalKind as K;
        match self.inequality() {
            InequalityId::F1 => [K::S, K::STilde, K::G],
            InequalityId::F3 => [K::T, K::TTilde, K::F],
            InequalityId::Fc1 => [K::U, K::UTilde, K::Q],
            _ => [K::V, K::VTilde, K::H],
        }
    }

    /// The supremum the ratio approaches along the extremal family.
    pub fn target(&self, cfg: &ExponentConfig) -> f64 {
        use SharpnessForm::*;
        let p = cfg.p();
        let a = cfg.alpha();
        let g = cfg.gamma();
        match self {
            F1shrp1 | F3shrp1 | Fc1shrp1 | Fc2shrp1 => 1.0,
            F1shrp2 | F3shrp2 => a.powf(1.0 - p),
            F1shrp3 => (cfg.n() - p) * a.powf(p - 1.0),
            F3shrp3 => (p - 1.0) * a.powf(p - 1.0),
            Fc1shrp2 | Fc2shrp2 => g.powf(1.0 - p),
            Fc2shrp3 => (p - 1.0) * g.powf(p - 1.0),
        }
    }

    /// The ratio from the three functional values `(main, tilde, gradient)`
    /// listed by [`SharpnessForm::required`].
    pub fn ratio_from(
        &self,
        cfg: &ExponentConfig,
        main: f64,
        tilde: f64,
        grad: f64,
    ) -> Result<f64> {
        use SharpnessForm::*;
        let p = cfg.p();
        let c = match self.inequality() {
            InequalityId::F1 | InequalityId::F3 => cfg.alpha(),
            _ => cfg.gamma(),
        };
        // coefficient of the tilde functional in the inequality
        let k = match self.inequality() {
            InequalityId::F1 => cfg.n() - p,
            InequalityId::Fc1 => p,
            _ => p - 1.0,
        };
        let (num, den) = match self {
            F1shrp1 | F3shrp1 | Fc1shrp1 | Fc2shrp1 => {
                (c.powf(p) * main, grad + k * c.powf(p - 1.0) * tilde)
            }
            F1shrp2 | F3shrp2 | Fc1shrp2 | Fc2shrp2 => (c * main - k * tilde, grad),
            F1shrp3 | F3shrp3 | Fc2shrp3 => (c.powf(p) * main - grad, tilde),
        };
        if den == 0.0 && num < 0.0 {
            // a vanishing gradient term with a negative numerator: the ratio is −∞
            return Ok(f64::NEG_INFINITY);
        }
        if den == 0.0 || !den.is_finite() {
            return Err(Error::Degenerate(format!(
                "{} has denominator {den}",
                self.name()
            )));
        }
        Ok(num / den)
    }

    pub fn check_config(&self, cfg: &ExponentConfig) -> Result<()> {
        let ineq = self.inequality();
        cfg.require(ineq.regime(), self.name())?;
        if ineq == InequalityId::F3 {
            cfg.require_tan_exponent(self.name())?;
        }
        Ok(())
    }

    /// Forms outside the range of their theorem that are still evaluated,
    /// with the reason.
    pub fn caveat(&self, cfg: &ExponentConfig) -> Option<String> {
        if *self == SharpnessForm::F1shrp3 && cfg.p() >= cfg.n() / 2.0 {
            Some(format!(
                "p = {} >= N/2: supremum taken over functions with gradient in L^p(|cos d|^p), G_p in the denominator",
                cfg.p()
            ))
        } else {
            None
        }
    }
}

pub fn sharpness_ratio(
    form: SharpnessForm,
    u: &ZonalProfile,
    cfg: &ExponentConfig,
    spec: &QuadratureSpec,
) -> Result<f64> {
    form.check_config(cfg)?;
    let [m, t, g] = form.required();
    let main = eval_functional(m, u, cfg, spec)?;
    let tilde = eval_functional(t, u, cfg, spec)?;
    let grad = eval_functional(g, u, cfg, spec)?;
    form.ratio_from(cfg, main, tilde, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{half_moment_closed, surface_constant};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn sub(n: usize, p: f64) -> ExponentConfig {
        ExponentConfig::subcritical(n, p).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ExponentConfig::subcritical(3, 1.5).is_err());
        assert!(ExponentConfig::subcritical(5, 4.0).is_err());
        assert!(ExponentConfig::subcritical(5, 1.0).is_err());
        assert!(ExponentConfig::critical(2).is_err());
        assert!(ExponentConfig::new(4, 2.0, Regime::Crit).is_err());
        let c = ExponentConfig::new(4, 3.0, Regime::Crit).unwrap();
        assert_eq!(c.gamma(), 2.0 / 3.0);
        assert_eq!(sub(7, 2.0).alpha(), 2.0);
        let err = inequality_margin(
            InequalityId::F3,
            &ZonalProfile::constant(1.0),
            &sub(4, 1.5),
            &spec(),
        );
        assert!(matches!(err, Err(Error::InvalidInput(m)) if m.contains("f3 requires p ≥ 2")));
    }

    #[test]
    fn profile_derivatives_match_finite_differences() {
        let profiles = [
            ZonalProfile::cot_power_cos(0.9),
            ZonalProfile::cot_power(0.7),
            ZonalProfile::inverse_sin_power(0.9),
            ZonalProfile::half_angle_cot_power(1.3),
            ZonalProfile::log_power(0.45),
            ZonalProfile::cos_polynomial(vec![0.3, -1.0, 0.5, 2.0]),
        ];
        let h = 1e-6;
        for u in &profiles {
            for d in [0.3, 1.0, 1.4, 2.0, 2.9] {
                let fd = (u.value(d + h) - u.value(d - h)) / (2.0 * h);
                assert_relative_eq!(u.derivative(d), fd, max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn factored_forms_match_values() {
        let profiles = [
            ZonalProfile::cot_power_cos(0.9),
            ZonalProfile::cot_power(0.7),
            ZonalProfile::inverse_sin_power(0.9),
            ZonalProfile::half_angle_cot_power(1.3),
            ZonalProfile::log_power(0.45),
            ZonalProfile::cos_polynomial(vec![0.3, -1.0, 0.5, 2.0]),
            ZonalProfile::constant(-2.0),
        ];
        for u in &profiles {
            for d in [0.3f64, 1.0, 1.4, 2.0, 2.9] {
                let t = d.cos();
                let n = Node {
                    x: t,
                    ln_abs_x: t.abs().ln(),
                    from_lo: 1.0 + t,
                    from_hi: 1.0 - t,
                    ln_from_lo: (1.0 + t).ln(),
                    ln_from_hi: (1.0 - t).ln(),
                    lnln_from_lo: f64::NAN,
                    lnln_from_hi: f64::NAN,
                };
                let z = ZonalNode::from_node(&n);
                let (g, dg) = u.factors(&z);
                let eval = |f: Factor| {
                    let ld = f.density(&z);
                    ld.ln_rest.exp() * (1.0 + t).powf(ld.pow_lo) * (1.0 - t).powf(ld.pow_hi)
                };
                assert_relative_eq!(
                    eval(g),
                    u.value(d).abs(),
                    max_relative = 1e-12,
                    epsilon = 1e-300
                );
                assert_relative_eq!(
                    eval(dg),
                    u.derivative(d).abs(),
                    max_relative = 1e-12,
                    epsilon = 1e-300
                );
            }
        }
    }

    #[test]
    fn constant_profile_values() {
        let cfg = sub(5, 2.0);
        let one = ZonalProfile::constant(1.0);
        let s = eval_functional(FunctionalKind::S, &one, &cfg, &spec()).unwrap();
        assert_relative_eq!(s, 4.0 * PI * PI, max_relative = 1e-10);
        let c5 = surface_constant(5).unwrap().value;
        assert_relative_eq!(
            s,
            2.0 * c5 * half_moment_closed(0.0, 0.0).unwrap(),
            max_relative = 1e-10
        );
        assert_eq!(
            eval_functional(FunctionalKind::F, &one, &cfg, &spec()).unwrap(),
            0.0
        );
        assert_eq!(
            eval_functional(FunctionalKind::G, &one, &cfg, &spec()).unwrap(),
            0.0
        );
    }

    #[test]
    fn tan_functional_on_inverse_sine() {
        // J_{5,2}(1/2) = C_5 Γ(1/2) Γ(3/2) / Γ(2) = π³
        let cfg = sub(5, 2.0);
        let v = ZonalProfile::inverse_sin_power(0.5);
        let t = eval_functional(FunctionalKind::T, &v, &cfg, &spec()).unwrap();
        assert_relative_eq!(t, PI.powi(3), max_relative = 1e-10);
    }

    #[test]
    fn regime_mismatch_and_divergence_are_rejected() {
        let cfg = sub(5, 2.0);
        let one = ZonalProfile::constant(1.0);
        assert!(matches!(
            eval_functional(FunctionalKind::U, &one, &cfg, &spec()),
            Err(Error::InvalidInput(_))
        ));
        // S_3 of a constant on S^3 behaves like sin^{-3} d · sin^2 d
        let r = eval_functional(FunctionalKind::S, &one, &sub(4, 2.9), &spec());
        assert!(r.is_ok());
        // |∇ũ|^p has |cos d|^{p(a-1)} at the equator, not integrable for N = 4, p = 2
        let cfg4 = sub(4, 2.0);
        let r = eval_functional(
            FunctionalKind::F,
            &ZonalProfile::cot_power(0.4),
            &cfg4,
            &spec(),
        );
        assert!(matches!(r, Err(Error::Domain(m)) if m.contains("d = π/2")));
        // the critical weight with a constant needs L^{-q}, q ≥ 2: fine; v with too large a power is not
        let r = eval_functional(
            FunctionalKind::S,
            &ZonalProfile::inverse_sin_power(1.0),
            &cfg,
            &spec(),
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn margins_on_simple_profiles() {
        let cfg = sub(5, 2.0);
        let m = inequality_margin(
            InequalityId::F1,
            &ZonalProfile::constant(1.0),
            &cfg,
            &spec(),
        )
        .unwrap();
        assert!(m.margin > 0.0);
        let m = inequality_margin(
            InequalityId::F1,
            &ZonalProfile::cot_power_cos(0.9),
            &cfg,
            &spec(),
        )
        .unwrap();
        assert!(!m.is_violation(1e-9), "{m:?}");
        let m = inequality_margin(
            InequalityId::Inqfls,
            &ZonalProfile::constant(1.0),
            &sub(7, 2.0),
            &spec(),
        )
        .unwrap();
        assert!(m.margin < 0.0);
    }

    #[test]
    fn critical_margins() {
        for n in [3, 4] {
            let cfg = ExponentConfig::critical(n).unwrap();
            for u in [
                ZonalProfile::constant(1.0),
                ZonalProfile::log_power(0.3),
                ZonalProfile::cos_polynomial(vec![1.0, 0.5]),
            ] {
                for id in [InequalityId::Fc1, InequalityId::Fc2] {
                    let m = inequality_margin(id, &u, &cfg, &spec()).unwrap();
                    assert!(!m.is_violation(1e-9), "{m:?}");
                }
            }
        }
    }

    #[test]
    fn f3shrp3_pointwise_value() {
        let cfg = sub(5, 2.0);
        let r = sharpness_ratio(
            SharpnessForm::F3shrp3,
            &ZonalProfile::inverse_sin_power(0.9),
            &cfg,
            &spec(),
        )
        .unwrap();
        assert_relative_eq!(r, 0.95, max_relative = 1e-10);
    }

    #[test]
    fn ratio_is_dominated_by_target() {
        let cfg = sub(5, 2.0);
        let u = ZonalProfile::cot_power_cos(0.9);
        for form in [SharpnessForm::F1shrp1, SharpnessForm::F1shrp2] {
            let r = sharpness_ratio(form, &u, &cfg, &spec()).unwrap();
            assert!(r <= form.target(&cfg) + 1e-8);
        }
        let cfg = ExponentConfig::critical(3).unwrap();
        let r = sharpness_ratio(
            SharpnessForm::Fc2shrp2,
            &ZonalProfile::constant(1.0),
            &cfg,
            &spec(),
        )
        .unwrap();
        assert!(r <= SharpnessForm::Fc2shrp2.target(&cfg));
        let r = SharpnessForm::Fc2shrp2.ratio_from(&cfg, 1.0, 0.0, 0.0);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn caveat_for_large_p() {
        assert!(SharpnessForm::F1shrp3.caveat(&sub(5, 3.0)).is_some());
        assert!(SharpnessForm::F1shrp3.caveat(&sub(7, 2.0)).is_none());
        assert_eq!(
            SharpnessForm::parse("fc2shrp3").unwrap(),
            SharpnessForm::Fc2shrp3
        );
        assert!(SharpnessForm::parse("f9").is_err());
    }
}
