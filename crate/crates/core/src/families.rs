//! Extremal families, their closed-form moments, ε-sweeps of the sharpness
//! ratios and the counterexample scan for the strengthened inequality.
//!
//! Subcritical families on `S^{N−1}` use the exponent
//! `a = (N − p − 1 − 2ε)/p = α − 2ε/p`:
//! `u_ε = |cot d|^a cos d`, `ũ_ε = |cot d|^a`, `v_ε = sin^{−a} d`,
//! `w_ε = ((1 + cos d)/sin d)^a`. The critical family on `S^q` is
//! `f_ε = log(e/sin d)^b`, `b = (q − 1 − ε)/q = γ − ε/q`.
//!
//! Subcritical moments are gamma ratios. Critical ones are reduced to
//! integrals over `s ∈ (0, 1)` of the form `∫ ds / (s log(e/s)^{1+ε})`,
//! whose leading part is exactly `1/ε`; the bounded remainders are
//! integrated separately along that route, independently of the zonal
//! integrands used by [`crate::functionals`].

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    eval_functional, ExponentConfig, FunctionalKind, Regime, SharpnessForm, ZonalProfile,
};
use crate::quadrature::{
    integrate_line, EndpointBehavior, LogDensity, LogForm, Node, QuadratureSpec, WithNode,
};
use crate::special::{binomial, log_gamma, surface_constant};

/// Relative agreement required between the quadrature and closed-form ratios.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    /// `u_ε = |cot d|^a cos d`.
    UFam,
    /// `ũ_ε = |cot d|^a`.
    UTilde,
    /// `v_ε = sin^{−a} d`.
    VFam,
    /// `w_ε = ((1 + cos d)/sin d)^a`.
    WFam,
    /// `f_ε = log(e/sin d)^b`.
    FCrit,
}

impl FamilyId {
    pub const ALL: [FamilyId; 5] = [
        FamilyId::UFam,
        FamilyId::UTilde,
        FamilyId::VFam,
        FamilyId::WFam,
        FamilyId::FCrit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FamilyId::UFam => "u",
            FamilyId::UTilde => "u_tilde",
            FamilyId::VFam => "v",
            FamilyId::WFam => "w",
            FamilyId::FCrit => "f",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!("unknown family '{s}' (u, u_tilde, v, w, f)"))
            })
    }

    pub fn regime(&self) -> Regime {
        if *self == FamilyId::FCrit {
            Regime::Crit
        } else {
            Regime::Sub
        }
    }

    /// The family paired with a sharpness form.
    pub fn for_form(form: SharpnessForm) -> FamilyId {
        use SharpnessForm::*;
        match form {
            F1shrp1 | F1shrp2 => FamilyId::UFam,
            F1shrp3 => FamilyId::UTilde,
            F3shrp1 | F3shrp2 | F3shrp3 => FamilyId::VFam,
            _ => FamilyId::FCrit,
        }
    }
}

/// Largest admissible ε (exclusive).
pub fn eps_upper(family: FamilyId, cfg: &ExponentConfig) -> f64 {
    match family {
        FamilyId::FCrit => cfg.p() - 1.0,
        _ => (cfg.n() - 1.0 - cfg.p()) / 2.0,
    }
}

fn check_family(family: FamilyId, cfg: &ExponentConfig, eps: f64) -> Result<()> {
    if cfg.regime() != family.regime() {
        return Err(Error::InvalidInput(format!(
            "family {} needs the {:?} regime",
            family.name(),
            family.regime()
        )));
    }
    let hi = eps_upper(family, cfg);
    if !(eps > 0.0 && eps < hi) {
        return Err(Error::Domain(format!(
            "family {} needs 0 < ε < {hi}, got ε = {eps}",
            family.name()
        )));
    }
    Ok(())
}

/// `a = (N − p − 1 − 2ε)/p`.
pub fn family_exponent(cfg: &ExponentConfig, eps: f64) -> f64 {
    (cfg.n() - cfg.p() - 1.0 - 2.0 * eps) / cfg.p()
}

pub fn make_profile(family: FamilyId, cfg: &ExponentConfig, eps: f64) -> Result<ZonalProfile> {
    check_family(family, cfg, eps)?;
    let a = family_exponent(cfg, eps);
    let label = format!("{}(eps={eps})", family.name());
    Ok(match family {
        FamilyId::UFam => ZonalProfile::cot_power_cos(a),
        FamilyId::UTilde => ZonalProfile::cot_power(a),
        FamilyId::VFam => ZonalProfile::inverse_sin_power(a),
        FamilyId::WFam => ZonalProfile::half_angle_cot_power(a),
        FamilyId::FCrit => {
            let q = cfg.p();
            ZonalProfile::log_power((q - 1.0 - eps) / q)
        }
    }
    .with_label(label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClosedFormQuantity {
    /// `S_p(u_ε) = C_N Γ(ε) Γ(N/2 − ε) / Γ(N/2)`.
    INp,
    /// `S̃_p(u_ε) = I_{N,p}(ε) · 2ε/N`.
    STildeU,
    /// `C_N Γ(N/2 − ε) Γ(p + ε) / Γ(N/2 + p)`, the `|cos d|^{2p}` moment
    /// entering the gradient bound.
    GradcosMoment,
    /// `Λ = (Γ(p+ε) Γ(N/2) / (Γ(N/2+p) a^p Γ(ε)))^{1/p}`.
    LambdaNp,
    /// `G_p(u_ε) ≤ a^p I_{N,p}(ε) (1 + Λ)^p`.
    GradcosBound,
    /// `G_p(u_ε)` for integer `p`, by binomial expansion of `(a + sin² d)^p`.
    GradcosExact,
    /// `S_p(ũ_ε) = C_N Γ(ε) Γ((N−p)/2 − ε) / Γ((N−p)/2)`.
    N21,
    /// `S̃_p(ũ_ε) = N21 · 2ε/(N − p)`.
    N22,
    /// `G_p(ũ_ε) = a^p N21`.
    N23,
    /// `T_p(v_ε) = C_N Γ(ε) Γ((p+1)/2) / Γ((p+1)/2 + ε)`.
    JNp,
    /// `F_p(v_ε) = a^p J_{N,p}(ε)`.
    FV,
    /// `T̃_p(v_ε) = C_N ε Γ(ε) Γ((p−1)/2) / Γ((p+1)/2 + ε)`.
    TTildeV,
    /// `S_p(w_ε) = 2^{N−p−2} C_N Γ(ε) Γ(N−p−1−ε) / Γ(N−p−1)`.
    KNp,
    /// `S̃_p(w_ε) = 2^{N−p} C_N Γ(1+ε) Γ(N−p−ε) / ((N−p) Γ(N−p))`.
    WSinMoment,
    /// `α^p S_p(w_ε) − F_p(w_ε) = (α^p − a^p) K_{N,p}(ε)`.
    LNp,
    /// `lim L_{N,p}(ε) = 2^{N−p−1} C_N α^{p−1}`.
    LLimit,
    /// `lim α^{p−1} S̃_p(w_ε) = 2^{N−p} C_N α^{p−1} / (N − p)`.
    RLimit,
    /// `I(ε) = ∫₀¹ ds / (s log(e/s)^{1+ε}) = 1/ε`.
    IEps,
    /// `Ĩ(ε)`, reduced route.
    ITilde,
    /// `Ĩ(ε) ≤ 1`.
    ITildeBound,
    /// `Ī(ε)`, reduced route.
    IBar,
    /// `Ī(ε) ≤ Σ_{r=1}^{2q−1} C(2q−1, r) (−1)^{r+1}/(2r+1)`.
    IBarBound,
    /// `J̃_q(ε)`, reduced route.
    JTilde,
    /// `|J̃_q(ε)| ≤ ½ Σ_{r=1}^{q−1} C(q−1, r) (−1)^{r+1}/r`.
    JTildeBound,
    /// `U(f_ε) = 2 C_N (1/ε + Ĩ(ε))`.
    UCrit,
    /// `Ũ(f_ε) = 2 C_N ∫₀¹ log(e/√(1−s²))^{−ε} ds`.
    UTildeCrit,
    /// `Q(f_ε) = (γ − ε/q)^q · 2 C_N (1/ε − Ī(ε))`.
    QCrit,
    /// `V(f_ε) = J_q(ε) = 2 C_N (1/ε + J̃_q(ε))`.
    JNCrit,
    /// `H(f_ε) = (γ − ε/q)^q J_q(ε)`.
    HCrit,
    /// `Ṽ(f_ε) = 2 C_N ∫₀¹ s^{q−2} log(e/√(1−s²))^{−ε} ds`.
    VTildeCrit,
    /// `lim Ṽ(f_ε) = 2 C_N / (q − 1)`.
    VTildeLimit,
}

fn lg(x: f64) -> Result<f64> {
    log_gamma(x)
}

fn is_integer(p: f64) -> bool {
    (p - p.round()).abs() < 1e-12
}

/// `C(n, r)` as a float.
fn binom(n: f64, r: u32) -> f64 {
    binomial(n.round() as u32, r)
}

/// One-dimensional integrals over `s ∈ (0, 1)` from the critical reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReducedIntegral {
    /// `∫ ds / (s L_s^{1+ε})`, `L_s = log(e/s)`.
    I,
    ITilde,
    IBar,
    JTilde,
    /// `∫ ds / log(e/√(1−s²))^{ε}`.
    UTilde,
    /// `∫ s^{q−2} ds / log(e/√(1−s²))^{ε}`.
    VTilde,
}

/// `ln(1 − s²)` without cancellation at either end.
fn ln_one_minus_s2(n: &Node) -> f64 {
    if n.x < 0.5 {
        (-n.x * n.x).ln_1p()
    } else {
        n.ln_from_hi + n.x.ln_1p()
    }
}

/// `ln log(e/s)`, exact even where `s` underflows.
fn ln_log_e_over_s(n: &Node) -> f64 {
    if n.ln_from_lo.is_finite() {
        (-n.ln_from_lo).ln_1p()
    } else {
        n.lnln_from_lo
    }
}

pub fn reduced_integral(
    which: ReducedIntegral,
    q: f64,
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!(
            "reduced integrals need ε > 0, got {eps}"
        )));
    }
    let spec = spec.clone();
    let r = match which {
        ReducedIntegral::I => {
            let f = LogForm(move |n: &Node| LogDensity {
                ln_rest: -(1.0 + eps) * ln_log_e_over_s(n),
                pow_lo: -1.0,
                pow_hi: 0.0,
            });
            integrate_line(
                f,
                0.0,
                1.0,
                &spec.with_endpoints(EndpointBehavior::logarithmic(-1.0, 1.0 + eps), 0.0),
            )?
        }
        ReducedIntegral::ITilde => {
            // s / (√(1−s²) (1 + √(1−s²)) L_s^{1+ε})
            let f = WithNode(move |n: &Node| {
                let root = (0.5 * ln_one_minus_s2(n)).exp();
                n.x / (root * (1.0 + root)) * (-(1.0 + eps) * ln_log_e_over_s(n)).exp()
            });
            integrate_line(f, 0.0, 1.0, &spec.with_endpoints(0.0, -0.5))?
        }
        ReducedIntegral::IBar => {
            let k = (2.0 * q - 1.0) / 2.0;
            let f = WithNode(move |n: &Node| {
                -(k * ln_one_minus_s2(n)).exp_m1() / n.x * (-(1.0 + eps) * ln_log_e_over_s(n)).exp()
            });
            integrate_line(f, 0.0, 1.0, &spec)?
        }
        ReducedIntegral::JTilde => {
            let k = (q - 1.0) / 2.0;
            let f = WithNode(move |n: &Node| {
                (k * ln_one_minus_s2(n)).exp_m1() / n.x * (-(1.0 + eps) * ln_log_e_over_s(n)).exp()
            });
            integrate_line(f, 0.0, 1.0, &spec)?
        }
        ReducedIntegral::UTilde | ReducedIntegral::VTilde => {
            let power = if which == ReducedIntegral::UTilde {
                0.0
            } else {
                q - 2.0
            };
            let f = WithNode(move |n: &Node| {
                let ln_l = (-0.5 * ln_one_minus_s2(n)).ln_1p();
                let ln_s = if power == 0.0 { 0.0 } else { power * n.x.ln() };
                (ln_s - eps * ln_l).exp()
            });
            integrate_line(f, 0.0, 1.0, &spec.with_endpoints(power, 0.0))?
        }
    };
    r.converged_value()
}

pub fn closed_form(
    q: ClosedFormQuantity,
    cfg: &ExponentConfig,
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    use ClosedFormQuantity as Q;
    let n = cfg.n();
    let p = cfg.p();
    let c = surface_constant(cfg.ambient_dim())?.value;
    let ln_c = c.ln();
    let crit = matches!(
        q,
        Q::IBar
            | Q::IBarBound
            | Q::JTilde
            | Q::JTildeBound
            | Q::UCrit
            | Q::UTildeCrit
            | Q::QCrit
            | Q::JNCrit
            | Q::HCrit
            | Q::VTildeCrit
            | Q::VTildeLimit
    );
    let regime_free = matches!(q, Q::IEps | Q::ITilde | Q::ITildeBound);
    if !regime_free {
        let want = if crit { Regime::Crit } else { Regime::Sub };
        if cfg.regime() != want {
            return Err(Error::InvalidInput(format!(
                "{q:?} needs the {want:?} regime"
            )));
        }
    }
    let limit_only = matches!(
        q,
        Q::LLimit | Q::RLimit | Q::ITildeBound | Q::IBarBound | Q::JTildeBound | Q::VTildeLimit
    );
    if !limit_only {
        let hi = match q {
            Q::INp | Q::STildeU | Q::GradcosMoment => n / 2.0,
            _ if crit => {
                if matches!(q, Q::QCrit | Q::HCrit) {
                    p - 1.0
                } else {
                    f64::INFINITY
                }
            }
            Q::IEps | Q::ITilde => f64::INFINITY,
            _ => (n - 1.0 - p) / 2.0,
        };
        if !(eps > 0.0 && eps < hi) {
            return Err(Error::Domain(format!(
                "{q:?} needs 0 < ε < {hi}, got ε = {eps}"
            )));
        }
    }

    let alpha = cfg.alpha();
    let a = alpha - 2.0 * eps / p;
    let i_np =
        || -> Result<f64> { Ok((ln_c + lg(eps)? + lg(n / 2.0 - eps)? - lg(n / 2.0)?).exp()) };
    let n21 = || -> Result<f64> {
        let h = (n - p) / 2.0;
        Ok((ln_c + lg(eps)? + lg(h - eps)? - lg(h)?).exp())
    };
    let j_np = || -> Result<f64> {
        let h = (p + 1.0) / 2.0;
        Ok((ln_c + lg(eps)? + lg(h)? - lg(h + eps)?).exp())
    };
    let k_np = || -> Result<f64> {
        let m = n - p - 1.0;
        Ok(((m - 1.0) * std::f64::consts::LN_2 + ln_c + lg(eps)? + lg(m - eps)? - lg(m)?).exp())
    };
    let w_sin = || -> Result<f64> {
        let m = n - p;
        Ok(
            (m * std::f64::consts::LN_2 + ln_c + lg(1.0 + eps)? + lg(m - eps)? - m.ln() - lg(m)?)
                .exp(),
        )
    };
    let moment = |k: f64| -> Result<f64> {
        Ok((ln_c + lg(n / 2.0 - eps)? + lg(k + eps)? - lg(n / 2.0 + k)?).exp())
    };
    let lambda = || -> Result<f64> {
        let ln = lg(p + eps)? + lg(n / 2.0)? - lg(n / 2.0 + p)? - p * a.ln() - lg(eps)?;
        Ok((ln / p).exp())
    };
    let gq = || cfg.gamma() - eps / p;
    let red = |w: ReducedIntegral| reduced_integral(w, p, eps, spec);

    Ok(match q {
        Q::INp => i_np()?,
        Q::STildeU => i_np()? * 2.0 * eps / n,
        Q::GradcosMoment => moment(p)?,
        Q::LambdaNp => lambda()?,
        Q::GradcosBound => a.powf(p) * i_np()? * (1.0 + lambda()?).powf(p),
        Q::GradcosExact => {
            if !is_integer(p) {
                return Err(Error::Domain(format!(
                    "exact G_p(u_ε) needs an integer p, got {p}"
                )));
            }
            let pi = p.round() as u32;
            let mut total = 0.0;
            for k in 0..=pi {
                total += binom(p, k) * a.powi((pi - k) as i32) * moment(k as f64)?;
            }
            total
        }
        Q::N21 => n21()?,
        Q::N22 => n21()? * eps / ((n - p) / 2.0),
        Q::N23 => a.powf(p) * n21()?,
        Q::JNp => j_np()?,
        Q::FV => a.powf(p) * j_np()?,
        Q::TTildeV => {
            let h = (p + 1.0) / 2.0;
            (ln_c + eps.ln() + lg(eps)? + lg(h - 1.0)? - lg(h + eps)?).exp()
        }
        Q::KNp => k_np()?,
        Q::WSinMoment => w_sin()?,
        Q::LNp => (alpha.powf(p) - a.powf(p)) * k_np()?,
        Q::LLimit => 2f64.powf(n - p - 1.0) * c * alpha.powf(p - 1.0),
        Q::RLimit => 2f64.powf(n - p) * c * alpha.powf(p - 1.0) / (n - p),
        Q::IEps => 1.0 / eps,
        Q::ITilde => reduced_integral(ReducedIntegral::ITilde, p, eps, spec)?,
        Q::ITildeBound => 1.0,
        Q::IBar => red(ReducedIntegral::IBar)?,
        Q::IBarBound => {
            let m = 2.0 * p - 1.0;
            (1..=m.round() as u32)
                .map(|r| binom(m, r) * if r % 2 == 1 { 1.0 } else { -1.0 } / (2.0 * r as f64 + 1.0))
                .sum()
        }
        Q::JTilde => red(ReducedIntegral::JTilde)?,
        Q::JTildeBound => {
            let m = p - 1.0;
            0.5 * (1..=m.round() as u32)
                .map(|r| binom(m, r) * if r % 2 == 1 { 1.0 } else { -1.0 } / r as f64)
                .sum::<f64>()
        }
        Q::UCrit => 2.0 * c * (1.0 / eps + red(ReducedIntegral::ITilde)?),
        Q::UTildeCrit => 2.0 * c * red(ReducedIntegral::UTilde)?,
        Q::QCrit => gq().powf(p) * 2.0 * c * (1.0 / eps - red(ReducedIntegral::IBar)?),
        Q::JNCrit => 2.0 * c * (1.0 / eps + red(ReducedIntegral::JTilde)?),
        Q::HCrit => gq().powf(p) * 2.0 * c * (1.0 / eps + red(ReducedIntegral::JTilde)?),
        Q::VTildeCrit => 2.0 * c * red(ReducedIntegral::VTilde)?,
        Q::VTildeLimit => 2.0 * c / (p - 1.0),
    })
}

/// Closed-form values of the three functionals a sharpness form needs, in
/// the order of [`SharpnessForm::required`], or `None` when the family has
/// no closed form for one of them.
pub fn closed_form_functionals(
    form: SharpnessForm,
    cfg: &ExponentConfig,
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<Option<[f64; 3]>> {
    use ClosedFormQuantity as Q;
    let cf = |q| closed_form(q, cfg, eps, spec);
    Ok(Some(match FamilyId::for_form(form) {
        FamilyId::UFam => {
            if !is_integer(cfg.p()) {
                return Ok(None);
            }
            [cf(Q::INp)?, cf(Q::STildeU)?, cf(Q::GradcosExact)?]
        }
        FamilyId::UTilde => [cf(Q::N21)?, cf(Q::N22)?, cf(Q::N23)?],
        FamilyId::VFam => [cf(Q::JNp)?, cf(Q::TTildeV)?, cf(Q::FV)?],
        FamilyId::FCrit => match form.inequality() {
            crate::functionals::InequalityId::Fc1 => {
                [cf(Q::UCrit)?, cf(Q::UTildeCrit)?, cf(Q::QCrit)?]
            }
            _ => [cf(Q::JNCrit)?, cf(Q::VTildeCrit)?, cf(Q::HCrit)?],
        },
        FamilyId::WFam => return Ok(None),
    }))
}

/// `0.2 · 2^{−k}`, `k = 0..7`.
pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(0.2, 0.5, 8)
}

pub fn geometric_schedule(start: f64, factor: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|k| start * factor.powi(k as i32)).collect()
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty ε schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || !(schedule[schedule.len() - 1] > 0.0) {
        return Err(Error::InvalidInput(
            "ε schedule must be strictly decreasing and positive".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessRow {
    pub eps: f64,
    pub ratio_quadrature: f64,
    pub ratio_closed_form: Option<f64>,
    pub rel_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessReport {
    pub form: SharpnessForm,
    pub family: FamilyId,
    pub config: ExponentConfig,
    pub schedule: Vec<f64>,
    pub rows: Vec<SharpnessRow>,
    /// Two-point Richardson value from the last two ratios.
    pub extrapolated_limit: f64,
    /// Difference to the Richardson value of the preceding pair.
    pub consistency_residual: f64,
    pub target: f64,
    pub relative_gap: f64,
    pub threshold: f64,
    /// No ratio exceeds the target by more than `1e−8 · max(1, |target|)`.
    pub dominated: bool,
    pub verdict: bool,
    pub notes: Vec<String>,
}

/// `(R₂ − r R₁)/(1 − r)` for ratios at `ε₁` and `ε₂ = r ε₁`, exact when the
/// ratio is affine in ε.
pub fn richardson(eps1: f64, r1: f64, eps2: f64, r2: f64) -> f64 {
    let r = eps2 / eps1;
    (r2 - r * r1) / (1.0 - r)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Evaluates the ratio of `form` along its extremal family at every ε of the
/// schedule (in parallel), cross-checks against the closed forms, and
/// extrapolates to ε → 0.
pub fn sharpness_sweep(
    form: SharpnessForm,
    family: FamilyId,
    cfg: &ExponentConfig,
    schedule: &[f64],
    spec: &QuadratureSpec,
    threshold: f64,
) -> Result<SharpnessReport> {
    form.check_config(cfg)?;
    if FamilyId::for_form(form) != family {
        return Err(Error::InvalidInput(format!(
            "{} is paired with family {}, not {}",
            form.name(),
            FamilyId::for_form(form).name(),
            family.name()
        )));
    }
    check_schedule(schedule)?;
    for &eps in schedule {
        check_family(family, cfg, eps)?;
    }
    let mut notes = Vec::new();
    if let Some(c) = form.caveat(cfg) {
        notes.push(c);
    }

    let rows = schedule
        .par_iter()
        .map(|&eps| sweep_row(form, family, cfg, eps, spec))
        .collect::<Result<Vec<_>>>()?;

    let target = form.target(cfg);
    let (extrapolated_limit, consistency_residual) = match rows.len() {
        1 => (rows[0].ratio_quadrature, f64::NAN),
        k => {
            let last = richardson(
                rows[k - 2].eps,
                rows[k - 2].ratio_quadrature,
                rows[k - 1].eps,
                rows[k - 1].ratio_quadrature,
            );
            let residual = if k >= 3 {
                let prev = richardson(
                    rows[k - 3].eps,
                    rows[k - 3].ratio_quadrature,
                    rows[k - 2].eps,
                    rows[k - 2].ratio_quadrature,
                );
                (last - prev).abs()
            } else {
                f64::NAN
            };
            (last, residual)
        }
    };
    let relative_gap = (extrapolated_limit - target).abs() / target.abs().max(f64::MIN_POSITIVE);
    let slack = 1e-8 * target.abs().max(1.0);
    let dominated = rows.iter().all(|r| r.ratio_quadrature <= target + slack);
    if !dominated {
        notes.push("a ratio exceeds its supremum".into());
    }
    Ok(SharpnessReport {
        form,
        family,
        config: *cfg,
        schedule: schedule.to_vec(),
        rows,
        extrapolated_limit,
        consistency_residual,
        target,
        relative_gap,
        threshold,
        dominated,
        verdict: dominated && relative_gap <= threshold,
        notes,
    })
}

fn sweep_row(
    form: SharpnessForm,
    family: FamilyId,
    cfg: &ExponentConfig,
    eps: f64,
    spec: &QuadratureSpec,
) -> Result<SharpnessRow> {
    let u = make_profile(family, cfg, eps)?;
    let [m, t, g] = form.required();
    let main = eval_functional(m, &u, cfg, spec)?;
    let tilde = eval_functional(t, &u, cfg, spec)?;
    let grad = eval_functional(g, &u, cfg, spec)?;
    let ratio_quadrature = form.ratio_from(cfg, main, tilde, grad)?;

    if family == FamilyId::UFam {
        let bound = closed_form(ClosedFormQuantity::GradcosBound, cfg, eps, spec)?;
        if grad > bound * (1.0 + 1e-9) {
            return Err(Error::NumericalFailure(format!(
                "G_p(u_ε) = {grad:e} exceeds its bound {bound:e} at ε = {eps}"
            )));
        }
    }

    let closed = closed_form_functionals(form, cfg, eps, spec)?;
    let (ratio_closed_form, rel_gap) = match closed {
        Some([cm, ct, cg]) => {
            let r = form.ratio_from(cfg, cm, ct, cg)?;
            let gap = relative_gap(ratio_quadrature, r);
            if gap > CROSS_CHECK_TOL {
                return Err(Error::NumericalFailure(format!(
                    "{} at ε = {eps}: quadrature ratio {ratio_quadrature:e} and closed form {r:e} differ by {gap:e}",
                    form.name()
                )));
            }
            (Some(r), Some(gap))
        }
        None => (None, None),
    };
    Ok(SharpnessRow {
        eps,
        ratio_quadrature,
        ratio_closed_form,
        rel_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub eps: f64,
    /// `α^p S_p(w_ε) − F_p(w_ε) − α^{p−1} S̃_p(w_ε)`; positive is a violation.
    pub excess_quadrature: f64,
    pub excess_closed_form: f64,
    pub rel_gap: f64,
    pub violates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CounterexampleOutcome {
    Found {
        eps: f64,
        excess: f64,
    },
    Undetermined {
        note: String,
    },
    NotFound {
        note: String,
    },
    /// `N − p > 2` forces a violation for small ε but the schedule found none.
    Missed {
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub config: ExponentConfig,
    pub l_limit: f64,
    pub r_limit: f64,
    /// `L_LIMIT > R_LIMIT`, i.e. `N − p > 2`.
    pub decisive: bool,
    pub rows: Vec<CounterexampleRow>,
    pub outcome: CounterexampleOutcome,
}

/// A positive excess counts as a violation only beyond this fraction of the
/// larger side.
pub const VIOLATION_REL_TOL: f64 = 1e-8;

/// Scans `w_ε` down the schedule for a violation of
/// `α^p S_p ≤ F_p + α^{p−1} S̃_p`.
pub fn find_counterexample(
    cfg: &ExponentConfig,
    schedule: &[f64],
    spec: &QuadratureSpec,
) -> Result<CounterexampleReport> {
    if cfg.regime() != Regime::Sub {
        return Err(Error::InvalidInput(
            "counterexample search needs the subcritical regime".into(),
        ));
    }
    check_schedule(schedule)?;
    for &eps in schedule {
        check_family(FamilyId::WFam, cfg, eps)?;
    }
    let p = cfg.p();
    let alpha = cfg.alpha();
    let l_limit = closed_form(ClosedFormQuantity::LLimit, cfg, 0.0, spec)?;
    let r_limit = closed_form(ClosedFormQuantity::RLimit, cfg, 0.0, spec)?;
    let decisive = l_limit > r_limit * (1.0 + 1e-12);
    let tie = relative_gap(l_limit, r_limit) <= 1e-12;

    let rows = schedule
        .par_iter()
        .map(|&eps| -> Result<CounterexampleRow> {
            let w = make_profile(FamilyId::WFam, cfg, eps)?;
            let s = eval_functional(FunctionalKind::S, &w, cfg, spec)?;
            let f = eval_functional(FunctionalKind::F, &w, cfg, spec)?;
            let st = eval_functional(FunctionalKind::STilde, &w, cfg, spec)?;
            let lhs = alpha.powf(p) * s;
            let rhs = f + alpha.powf(p - 1.0) * st;
            let excess_quadrature = lhs - rhs;
            let l_np = closed_form(ClosedFormQuantity::LNp, cfg, eps, spec)?;
            let r_np = alpha.powf(p - 1.0) * closed_form(ClosedFormQuantity::WSinMoment, cfg, eps, spec)?;
            let excess_closed_form = l_np - r_np;
            let scale = lhs.abs().max(rhs.abs());
            let floor = VIOLATION_REL_TOL * scale;
            let violates = excess_quadrature > floor && excess_closed_form > floor;
            let rel_gap = relative_gap(excess_quadrature, excess_closed_form);
            if violates && rel_gap > CROSS_CHECK_TOL {
                return Err(Error::NumericalFailure(format!(
                    "excess at ε = {eps}: quadrature {excess_quadrature:e} vs closed form {excess_closed_form:e}"
                )));
            }
            Ok(CounterexampleRow { eps, excess_quadrature, excess_closed_form, rel_gap, violates })
        })
        .collect::<Result<Vec<_>>>()?;

    let outcome = match rows.iter().find(|r| r.violates) {
        Some(r) => CounterexampleOutcome::Found { eps: r.eps, excess: r.excess_quadrature },
        None if tie => CounterexampleOutcome::Undetermined {
            note: format!(
                "limits coincide (L = R = {l_limit:.6e}); the excess stays within {VIOLATION_REL_TOL:e} of the larger side"
            ),
        },
        None if decisive => CounterexampleOutcome::Missed {
            note: format!(
                "N - p > 2 forces a violation for small ε, but none was found down to ε = {}",
                schedule[schedule.len() - 1]
            ),
        },
        None => CounterexampleOutcome::NotFound {
            note: format!("L_LIMIT = {l_limit:.6e} < R_LIMIT = {r_limit:.6e}; the w_ε family is not decisive for N - p < 2"),
        },
    };
    Ok(CounterexampleReport {
        config: *cfg,
        l_limit,
        r_limit,
        decisive,
        rows,
        outcome,
    })
}

/// `∫_{S^q} dσ / (|tan d|^q |log(c |tan d|)|^m)`, reduced to
/// `2 C ∫₀¹ s^q ds / ((1 − s²) |log(c √(1−s²)/s)|^m)`.
///
/// Divergent for every `m` and `c > 0`: the endpoint `s = 1` behaves like
/// `r^{−1} |ln r|^{−m}` and the zero of the logarithm at `s₀ = c/√(1+c²)`
/// like `|s − s₀|^{−m}`, so one of the two always fails. The hints say so
/// and the request is rejected before any node is evaluated.
pub fn tan_log_integral(q: usize, m: f64, c: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(c > 0.0) || !m.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need c > 0 and finite m, got c = {c}, m = {m}"
        )));
    }
    let s0 = c / (1.0 + c * c).sqrt();
    let spec = spec
        .clone()
        .with_endpoints(q as f64, EndpointBehavior::logarithmic(-1.0, m))
        .with_breakpoint(s0, EndpointBehavior::algebraic(-m));
    let qf = q as f64;
    let f = WithNode(move |n: &Node| {
        let ln_arg = c.ln() + 0.5 * ln_one_minus_s2(n) - n.x.ln();
        n.x.powf(qf) / (n.from_hi * (1.0 + n.x)) * ln_arg.abs().powf(-m)
    });
    let c_q = surface_constant(q + 1)?.value;
    Ok(2.0 * c_q * integrate_line(f, 0.0, 1.0, &spec)?.converged_value()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn sub(n: usize, p: f64) -> ExponentConfig {
        ExponentConfig::subcritical(n, p).unwrap()
    }

    fn crit(n: usize) -> ExponentConfig {
        ExponentConfig::critical(n).unwrap()
    }

    #[test]
    fn profile_exponents() {
        let u = make_profile(FamilyId::UFam, &sub(5, 2.0), 0.1).unwrap();
        let d = 0.7f64;
        assert_relative_eq!(
            u.value(d),
            (d.cos() / d.sin()).powf(0.9) * d.cos(),
            max_relative = 1e-14
        );
        let f = make_profile(FamilyId::FCrit, &crit(3), 0.1).unwrap();
        assert_relative_eq!(
            f.value(d),
            (1.0 - d.sin().ln()).powf(0.45),
            max_relative = 1e-14
        );
        let v = make_profile(FamilyId::VFam, &sub(5, 2.0), 0.5).unwrap();
        assert_relative_eq!(v.value(d), d.sin().powf(-0.5), max_relative = 1e-14);
        assert!(make_profile(FamilyId::UFam, &sub(5, 2.0), 1.0).is_err());
        assert!(make_profile(FamilyId::UFam, &sub(5, 2.0), 0.0).is_err());
        assert!(make_profile(FamilyId::FCrit, &sub(5, 2.0), 0.1).is_err());
    }

    #[test]
    fn spot_values() {
        let c = closed_form(ClosedFormQuantity::INp, &sub(4, 2.0), 0.5, &spec()).unwrap();
        assert_relative_eq!(c, 2.0 * PI * PI, max_relative = 1e-13);
        let c = closed_form(ClosedFormQuantity::INp, &sub(4, 1.5), 0.5, &spec()).unwrap();
        assert_relative_eq!(c, 2.0 * PI * PI, max_relative = 1e-13);
        let k = closed_form(ClosedFormQuantity::KNp, &sub(5, 2.0), 0.5, &spec()).unwrap();
        assert_relative_eq!(k, 2.0 * PI.powi(3), max_relative = 1e-13);
        let i = closed_form(ClosedFormQuantity::IEps, &sub(5, 2.0), 0.1, &spec()).unwrap();
        assert_relative_eq!(i, 10.0, max_relative = 1e-15);
        let l = closed_form(ClosedFormQuantity::LLimit, &sub(4, 2.0), 0.0, &spec()).unwrap();
        let r = closed_form(ClosedFormQuantity::RLimit, &sub(4, 2.0), 0.0, &spec()).unwrap();
        assert_relative_eq!(l, r, max_relative = 1e-15);
        assert_relative_eq!(l, 2.0 * 4.0 * PI * 0.5, max_relative = 1e-13);
    }

    #[test]
    fn eps_gamma_tends_to_one() {
        for eps in [0.1, 0.05, 0.01, 1e-3, 1e-4] {
            let v = eps * log_gamma(eps).unwrap().exp();
            assert!((v - 1.0).abs() <= 3.0 * eps, "ε = {eps}: {v}");
        }
    }

    #[test]
    fn lambda_vanishes() {
        let l = closed_form(ClosedFormQuantity::LambdaNp, &sub(5, 2.0), 1e-3, &spec()).unwrap();
        assert!(l < 0.2, "{l}");
        let l2 = closed_form(ClosedFormQuantity::LambdaNp, &sub(5, 2.0), 1e-1, &spec()).unwrap();
        assert!(l < l2);
    }

    // Reference values from mpmath at 30 digits.
    #[test]
    fn reduced_integrals_match_reference() {
        let s = spec();
        let cases = [
            (ReducedIntegral::ITilde, 2.0, 0.1, 0.580494502252432158),
            (ReducedIntegral::ITilde, 2.0, 0.01, 0.587864011228494651),
            (ReducedIntegral::IBar, 2.0, 0.1, 0.436468165946685033),
            (ReducedIntegral::IBar, 2.0, 0.01, 0.448950773803855679),
            (ReducedIntegral::IBar, 3.0, 0.1, 0.548472494684405725),
            (ReducedIntegral::IBar, 3.0, 0.01, 0.566022127381140131),
            (ReducedIntegral::JTilde, 2.0, 0.1, -0.223814211217497947),
            (ReducedIntegral::JTilde, 2.0, 0.01, -0.229032952338698356),
            (ReducedIntegral::JTilde, 3.0, 0.1, -0.351044517931124395),
            (ReducedIntegral::JTilde, 3.0, 0.01, -0.360277193236788448),
        ];
        for (w, q, eps, want) in cases {
            let got = reduced_integral(w, q, eps, &s).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
        for eps in [0.1, 0.01, 1e-3] {
            assert_relative_eq!(
                reduced_integral(ReducedIntegral::I, 2.0, eps, &s).unwrap(),
                1.0 / eps,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn bounds() {
        let s = spec();
        let b2 = closed_form(ClosedFormQuantity::IBarBound, &crit(3), 0.1, &s).unwrap();
        assert_relative_eq!(b2, 0.542857142857142857, max_relative = 1e-14);
        let b3 = closed_form(ClosedFormQuantity::IBarBound, &crit(4), 0.1, &s).unwrap();
        assert_relative_eq!(b3, 0.630591630591630592, max_relative = 1e-14);
        assert_relative_eq!(
            closed_form(ClosedFormQuantity::JTildeBound, &crit(3), 0.1, &s).unwrap(),
            0.5
        );
        assert_relative_eq!(
            closed_form(ClosedFormQuantity::JTildeBound, &crit(4), 0.1, &s).unwrap(),
            0.75
        );
        for eps in [0.5, 0.1, 0.01] {
            let it = closed_form(ClosedFormQuantity::ITilde, &crit(3), eps, &s).unwrap();
            assert!(it > 0.0 && it <= 1.0);
            for n in [3, 4] {
                let ib = closed_form(ClosedFormQuantity::IBar, &crit(n), eps, &s).unwrap();
                assert!(
                    ib <= closed_form(ClosedFormQuantity::IBarBound, &crit(n), eps, &s).unwrap()
                );
                let jt = closed_form(ClosedFormQuantity::JTilde, &crit(n), eps, &s).unwrap();
                assert!(
                    jt.abs()
                        <= closed_form(ClosedFormQuantity::JTildeBound, &crit(n), eps, &s).unwrap()
                );
            }
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        use ClosedFormQuantity as Q;
        use FunctionalKind as K;
        let s = spec();
        let cfg = sub(6, 2.0);
        for eps in [0.5, 0.1] {
            let check = |fam, kind, q| {
                let u = make_profile(fam, &cfg, eps).unwrap();
                let a = eval_functional(kind, &u, &cfg, &s).unwrap();
                let b = closed_form(q, &cfg, eps, &s).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-9);
            };
            check(FamilyId::UFam, K::S, Q::INp);
            check(FamilyId::UFam, K::STilde, Q::STildeU);
            check(FamilyId::UFam, K::G, Q::GradcosExact);
            check(FamilyId::UTilde, K::S, Q::N21);
            check(FamilyId::UTilde, K::STilde, Q::N22);
            check(FamilyId::UTilde, K::G, Q::N23);
            check(FamilyId::VFam, K::T, Q::JNp);
            check(FamilyId::VFam, K::TTilde, Q::TTildeV);
            check(FamilyId::VFam, K::F, Q::FV);
            check(FamilyId::WFam, K::S, Q::KNp);
            check(FamilyId::WFam, K::STilde, Q::WSinMoment);
        }
        let cfg = crit(3);
        for eps in [0.5, 0.1, 0.01] {
            let f = make_profile(FamilyId::FCrit, &cfg, eps).unwrap();
            for (kind, q) in [
                (K::U, Q::UCrit),
                (K::UTilde, Q::UTildeCrit),
                (K::Q, Q::QCrit),
                (K::V, Q::JNCrit),
                (K::H, Q::HCrit),
                (K::VTilde, Q::VTildeCrit),
            ] {
                let a = eval_functional(kind, &f, &cfg, &s).unwrap();
                let b = closed_form(q, &cfg, eps, &s).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn richardson_is_exact_on_affine_data() {
        assert_relative_eq!(
            richardson(0.2, 3.0 + 0.2 * 5.0, 0.1, 3.0 + 0.1 * 5.0),
            3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn f1shrp1_sweep() {
        let r = sharpness_sweep(
            SharpnessForm::F1shrp1,
            FamilyId::UFam,
            &sub(5, 2.0),
            &default_schedule(),
            &spec(),
            0.01,
        )
        .unwrap();
        assert!(r.verdict, "{r:?}");
        assert!((r.extrapolated_limit - 1.0).abs() < 1e-3);
        for w in r.rows.windows(2) {
            assert!(w[1].ratio_quadrature >= w[0].ratio_quadrature - 1e-9);
        }
        assert!(r.rows.iter().all(|row| row.rel_gap.unwrap() < 1e-6));
    }

    #[test]
    fn sweep_rejects_wrong_pairing() {
        let r = sharpness_sweep(
            SharpnessForm::F1shrp1,
            FamilyId::VFam,
            &sub(5, 2.0),
            &default_schedule(),
            &spec(),
            0.01,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        let r = sharpness_sweep(
            SharpnessForm::F1shrp1,
            FamilyId::UFam,
            &sub(5, 2.0),
            &[0.1, 0.2],
            &spec(),
            0.01,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn tan_log_integral_is_rejected_for_every_m() {
        for m in [-2.0, -1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 4.0] {
            for c in [0.25, 1.0, 3.0] {
                for q in [2, 3] {
                    let r = tan_log_integral(q, m, c, &spec());
                    assert!(
                        matches!(r, Err(Error::Domain(_))),
                        "m = {m}, c = {c}: {r:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn counterexamples() {
        let s = spec();
        let r = find_counterexample(&sub(7, 2.0), &default_schedule(), &s).unwrap();
        assert!(
            matches!(r.outcome, CounterexampleOutcome::Found { eps, .. } if eps == 0.2),
            "{r:?}"
        );
        let r = find_counterexample(&sub(5, 2.0), &default_schedule(), &s).unwrap();
        assert!(
            matches!(r.outcome, CounterexampleOutcome::Found { .. }),
            "{r:?}"
        );
        let r = find_counterexample(&sub(4, 2.0), &geometric_schedule(0.2, 0.5, 8), &s).unwrap();
        assert!(
            matches!(r.outcome, CounterexampleOutcome::Undetermined { .. }),
            "{r:?}"
        );
        assert!(r.rows.iter().all(|row| !row.violates));
    }
}
