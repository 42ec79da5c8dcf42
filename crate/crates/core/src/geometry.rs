//! Spherical-coordinate calculus on `S^{N−1} ⊂ R^N`.
//!
//! Points are angle vectors `Θ = (θ_1, …, θ_{N−1})` with
//! `x_1 = cos θ_1`, `x_m = sin θ_1 ⋯ sin θ_{m−1} cos θ_m` and
//! `x_N = sin θ_1 ⋯ sin θ_{N−1}`. Tangent vectors are expressed in the
//! orthonormal frame `θ̂_j`, where the gradient has components
//! `(sin θ_1 ⋯ sin θ_{j−1})^{−1} ∂_j f`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphericalPoint {
    angles: Vec<f64>,
    ambient_dim: usize,
}

impl SphericalPoint {
    /// Validates the angle count and ranges: the first `N − 2` angles lie in
    /// `[0, π]`, the last in `[0, 2π]`.
    pub fn new(ambient_dim: usize, angles: Vec<f64>) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::InvalidInput(format!(
                "ambient dimension must be >= 2, got {ambient_dim}"
            )));
        }
        if angles.len() != ambient_dim - 1 {
            return Err(Error::InvalidInput(format!(
                "S^{} needs {} angles, got {}",
                ambient_dim - 1,
                ambient_dim - 1,
                angles.len()
            )));
        }
        let last = angles.len() - 1;
        for (j, &a) in angles.iter().enumerate() {
            let upper = if j == last { 2.0 * PI } else { PI };
            if !(a >= -RANGE_SLACK && a <= upper + RANGE_SLACK) {
                return Err(Error::InvalidInput(format!(
                    "angle θ_{} = {a} outside [0, {upper}]",
                    j + 1
                )));
            }
        }
        Ok(SphericalPoint {
            angles,
            ambient_dim,
        })
    }

    /// Unchecked constructor for finite-difference stencils, which may step
    /// slightly outside the canonical ranges.
    fn raw(ambient_dim: usize, angles: Vec<f64>) -> Self {
        SphericalPoint {
            angles,
            ambient_dim,
        }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// `sin θ_1 ⋯ sin θ_{j−1}` for 1-based `j`.
    fn frame_scale(&self, j: usize) -> f64 {
        self.angles[..j - 1].iter().map(|a| a.sin()).product()
    }

    fn with_angle(&self, j: usize, value: f64) -> Self {
        let mut angles = self.angles.clone();
        angles[j] = value;
        SphericalPoint::raw(self.ambient_dim, angles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbientVector {
    pub components: Vec<f64>,
}

impl AmbientVector {
    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &AmbientVector) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentVector {
    pub frame_components: Vec<f64>,
}

impl TangentVector {
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.frame_components.iter().map(|c| c * c).sum()
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        self.frame_components
            .iter()
            .zip(&other.frame_components)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn embed(point: &SphericalPoint) -> AmbientVector {
    let n = point.ambient_dim;
    let mut components = Vec::with_capacity(n);
    let mut prefix = 1.0;
    for &a in &point.angles {
        components.push(prefix * a.cos());
        prefix *= a.sin();
    }
    components.push(prefix);
    AmbientVector { components }
}

fn same_dim(a: &SphericalPoint, b: &SphericalPoint) -> Result<()> {
    if a.ambient_dim == b.ambient_dim {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "points live in different dimensions ({} vs {})",
            a.ambient_dim, b.ambient_dim
        )))
    }
}

/// `λ(Θ, Φ) = Σ x_m(Θ) x_m(Φ)`, clamped to `[−1, 1]`.
pub fn lambda_inner(a: &SphericalPoint, b: &SphericalPoint) -> Result<f64> {
    same_dim(a, b)?;
    Ok(embed(a).dot(&embed(b)).clamp(-1.0, 1.0))
}

pub fn geodesic_distance(a: &SphericalPoint, b: &SphericalPoint) -> Result<f64> {
    Ok(lambda_inner(a, b)?.acos())
}

/// Frame components of `∇x_m` (1-based `m`), zero-padded in the frame slots
/// the coordinate does not depend on.
pub fn grad_coordinate_analytic(m: usize, point: &SphericalPoint) -> Result<TangentVector> {
    let n = point.ambient_dim;
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "coordinate index {m} outside 1..={n}"
        )));
    }
    let th = &point.angles;
    let mut v = vec![0.0; n - 1];
    if m < n {
        for j in 1..m {
            let middle: f64 = th[j..m - 1].iter().map(|a| a.sin()).product();
            v[j - 1] = th[j - 1].cos() * middle * th[m - 1].cos();
        }
        v[m - 1] = -th[m - 1].sin();
    } else {
        for j in 1..n {
            let tail: f64 = th[j..].iter().map(|a| a.sin()).product();
            v[j - 1] = th[j - 1].cos() * tail;
        }
    }
    Ok(TangentVector {
        frame_components: v,
    })
}

/// Step sizes and pole guard for the finite-difference operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdOptions {
    pub gradient_step: f64,
    pub laplacian_step: f64,
    /// Lower bound on `sin θ_j`, `j ≤ N − 2`.
    pub pole_guard: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            gradient_step: f64::EPSILON.cbrt(),
            laplacian_step: f64::EPSILON.powf(0.25),
            pole_guard: 1e-3,
        }
    }
}

fn check_stencil(point: &SphericalPoint, step: f64, guard: f64) -> Result<()> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let polar = point.angles.len().saturating_sub(1);
    for (j, a) in point.angles[..polar].iter().enumerate() {
        if a.sin() < guard {
            return Err(Error::Degenerate(format!(
                "sin θ_{} = {:e} below the pole guard {guard:e}",
                j + 1,
                a.sin()
            )));
        }
    }
    Ok(())
}

fn eval<F: Fn(&SphericalPoint) -> f64>(f: &F, p: &SphericalPoint) -> Result<f64> {
    let v = f(p);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericalFailure(format!(
            "field is not finite at angles {:?}",
            p.angles
        )))
    }
}

/// Central-difference surface gradient in the orthonormal frame.
pub fn surface_gradient_fd<F: Fn(&SphericalPoint) -> f64>(
    f: F,
    point: &SphericalPoint,
    step: f64,
    pole_guard: f64,
) -> Result<TangentVector> {
    check_stencil(point, step, pole_guard)?;
    let mut v = Vec::with_capacity(point.angles.len());
    for (j, &a) in point.angles.iter().enumerate() {
        let plus = eval(&f, &point.with_angle(j, a + step))?;
        let minus = eval(&f, &point.with_angle(j, a - step))?;
        v.push((plus - minus) / (2.0 * step) / point.frame_scale(j + 1));
    }
    Ok(TangentVector {
        frame_components: v,
    })
}

/// Second-order finite-difference Laplace–Beltrami operator in nested
/// divergence form
/// `Σ_ℓ (sin²θ_1 ⋯ sin²θ_{ℓ−1})^{−1} sin^{−k}θ_ℓ ∂_ℓ(sin^k θ_ℓ ∂_ℓ f)`,
/// `k = N − ℓ − 1`, with the inner flux sampled at half steps.
pub fn laplace_beltrami_fd<F: Fn(&SphericalPoint) -> f64>(
    f: F,
    point: &SphericalPoint,
    step: f64,
    pole_guard: f64,
) -> Result<f64> {
    check_stencil(point, step, pole_guard)?;
    let n = point.ambient_dim;
    let center = eval(&f, point)?;
    let mut total = 0.0;
    for (l, &a) in point.angles.iter().enumerate() {
        let k = (n - (l + 1) - 1) as i32;
        let plus = eval(&f, &point.with_angle(l, a + step))?;
        let minus = eval(&f, &point.with_angle(l, a - step))?;
        let w = |x: f64| x.sin().powi(k);
        let flux = w(a + step / 2.0) * (plus - center) - w(a - step / 2.0) * (center - minus);
        let scale = point.frame_scale(l + 1);
        total += flux / (step * step) / w(a) / (scale * scale);
    }
    Ok(total)
}

/// Richardson combination `(4 L(h/2) − L(h)) / 3` of [`laplace_beltrami_fd`],
/// fourth order in `h`. Tolerates a much larger step, which keeps the
/// rounding error small near the coordinate poles.
pub fn laplace_beltrami_fd_extrapolated<F: Fn(&SphericalPoint) -> f64>(
    f: F,
    point: &SphericalPoint,
    step: f64,
    pole_guard: f64,
) -> Result<f64> {
    let coarse = laplace_beltrami_fd(&f, point, step, pole_guard)?;
    let fine = laplace_beltrami_fd(&f, point, step / 2.0, pole_guard)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum IdentityId {
    /// `x_m² + |∇x_m|² = 1`.
    Nabla1,
    /// `x_ℓ x_m + ∇x_ℓ·∇x_m = 0` for `ℓ ≠ m`.
    Nabla2,
    /// `Δx_m = −(N − 1) x_m`.
    Eigen,
    /// `|∇λ|² = 1 − λ²`.
    LambdaGradient,
    /// `Δλ = −(N − 1) λ`.
    LambdaLaplacian,
    /// `|∇d| = 1`.
    DistanceGradient,
    /// `Δd = (N − 2) cot d`, deviation measured relative to `1 + |cot d|`.
    DistanceLaplacian,
}

impl IdentityId {
    pub const ALL: [IdentityId; 7] = [
        IdentityId::Nabla1,
        IdentityId::Nabla2,
        IdentityId::Eigen,
        IdentityId::LambdaGradient,
        IdentityId::LambdaLaplacian,
        IdentityId::DistanceGradient,
        IdentityId::DistanceLaplacian,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            IdentityId::Nabla1 => "x_m^2 + |grad x_m|^2 = 1",
            IdentityId::Nabla2 => "x_l x_m + grad x_l . grad x_m = 0 (l != m)",
            IdentityId::Eigen => "lap x_m = -(N-1) x_m",
            IdentityId::LambdaGradient => "|grad lambda|^2 = 1 - lambda^2",
            IdentityId::LambdaLaplacian => "lap lambda = -(N-1) lambda",
            IdentityId::DistanceGradient => "|grad d| = 1",
            IdentityId::DistanceLaplacian => "lap d = (N-2) cot d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: IdentityId,
    pub sample_count: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub excluded: usize,
    pub note: Option<String>,
}

/// Per-identity tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityTolerances {
    pub gradient: f64,
    pub eigen: f64,
    pub lambda: f64,
    pub distance_gradient: f64,
    pub distance_laplacian: f64,
}

impl Default for IdentityTolerances {
    /// Gradient and λ identities `1e−6`, `Δx_m` `1e−5`, `|∇d|` `1e−6`, and
    /// `Δd` `1e−4` after normalising by `1 + |cot d|`.
    fn default() -> Self {
        IdentityTolerances {
            gradient: 1e-6,
            eigen: 1e-5,
            lambda: 1e-6,
            distance_gradient: 1e-6,
            distance_laplacian: 1e-4,
        }
    }
}

impl IdentityTolerances {
    pub fn uniform(tol: f64) -> Self {
        IdentityTolerances {
            gradient: tol,
            eigen: tol,
            lambda: tol,
            distance_gradient: tol,
            distance_laplacian: tol,
        }
    }

    fn for_id(&self, id: IdentityId) -> f64 {
        match id {
            IdentityId::Nabla1 | IdentityId::Nabla2 => self.gradient,
            IdentityId::Eigen => self.eigen,
            IdentityId::LambdaGradient | IdentityId::LambdaLaplacian => self.lambda,
            IdentityId::DistanceGradient => self.distance_gradient,
            IdentityId::DistanceLaplacian => self.distance_laplacian,
        }
    }
}

/// Sampling controls for [`verify_identities_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingOptions {
    pub fd: FdOptions,
    /// Minimum `sin d` between a sample and its pole for the distance checks.
    pub distance_guard: f64,
    /// Coarse step of the extrapolated Laplacian used by the identity checks.
    pub extrapolation_step: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            fd: FdOptions::default(),
            distance_guard: 1e-2,
            extrapolation_step: 4e-3,
        }
    }
}

/// Draws a surface-uniform point: `θ_j` has density `∝ sin^{N−1−j} θ_j`,
/// the azimuth is uniform.
pub fn random_point(ambient_dim: usize, rng: &mut impl Rng) -> SphericalPoint {
    let mut angles = Vec::with_capacity(ambient_dim - 1);
    for j in 1..ambient_dim - 1 {
        let k = (ambient_dim - 1 - j) as i32;
        loop {
            let th = rng.gen::<f64>() * PI;
            if rng.gen::<f64>() <= th.sin().powi(k) {
                angles.push(th);
                break;
            }
        }
    }
    angles.push(rng.gen::<f64>() * 2.0 * PI);
    SphericalPoint::raw(ambient_dim, angles)
}

fn is_polar(point: &SphericalPoint, guard: f64) -> bool {
    let polar = point.angles.len().saturating_sub(1);
    point.angles[..polar].iter().any(|a| a.sin() < guard)
}

struct Sample {
    point: SphericalPoint,
    pole: SphericalPoint,
}

#[derive(Default)]
struct SampleDeviations {
    values: [Option<f64>; 7],
}

fn index_of(id: IdentityId) -> usize {
    IdentityId::ALL.iter().position(|&x| x == id).unwrap()
}

fn coordinate_field(m: usize) -> impl Fn(&SphericalPoint) -> f64 {
    move |p: &SphericalPoint| embed(p).components[m]
}

fn sample_deviations(s: &Sample, opts: &SamplingOptions) -> Result<SampleDeviations> {
    let n = s.point.ambient_dim;
    let nf = n as f64;
    let fd = &opts.fd;
    let x = embed(&s.point).components;
    let mut out = SampleDeviations::default();
    let mut set = |id: IdentityId, dev: f64| {
        let slot = &mut out.values[index_of(id)];
        *slot = Some(slot.map_or(dev, |v: f64| v.max(dev)));
    };

    let grads = (0..n)
        .map(|m| {
            surface_gradient_fd(
                coordinate_field(m),
                &s.point,
                fd.gradient_step,
                fd.pole_guard,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for l in 0..n {
        for m in l..n {
            let value = x[l] * x[m] + grads[l].dot(&grads[m]);
            if l == m {
                set(IdentityId::Nabla1, (value - 1.0).abs());
            } else {
                set(IdentityId::Nabla2, value.abs());
            }
        }
        let lap = laplace_beltrami_fd_extrapolated(
            coordinate_field(l),
            &s.point,
            opts.extrapolation_step,
            fd.pole_guard,
        )?;
        set(IdentityId::Eigen, (lap + (nf - 1.0) * x[l]).abs());
    }

    let pole = &s.pole;
    let lambda = |p: &SphericalPoint| embed(p).dot(&embed(pole));
    let lam = lambda(&s.point);
    let g = surface_gradient_fd(lambda, &s.point, fd.gradient_step, fd.pole_guard)?;
    set(
        IdentityId::LambdaGradient,
        (g.norm_squared() - (1.0 - lam * lam)).abs(),
    );
    let lap =
        laplace_beltrami_fd_extrapolated(lambda, &s.point, opts.extrapolation_step, fd.pole_guard)?;
    set(IdentityId::LambdaLaplacian, (lap + (nf - 1.0) * lam).abs());

    let d = lam.clamp(-1.0, 1.0).acos();
    if d.sin() >= opts.distance_guard {
        let dist = |p: &SphericalPoint| geodesic_distance(p, pole).unwrap_or(f64::NAN);
        let g = surface_gradient_fd(dist, &s.point, fd.gradient_step, fd.pole_guard)?;
        set(IdentityId::DistanceGradient, (g.norm() - 1.0).abs());
        if n > 2 {
            let cot = d.cos() / d.sin();
            let lap = laplace_beltrami_fd_extrapolated(
                dist,
                &s.point,
                opts.extrapolation_step,
                fd.pole_guard,
            )?;
            set(
                IdentityId::DistanceLaplacian,
                (lap - (nf - 2.0) * cot).abs() / (1.0 + cot.abs()),
            );
        }
    }
    Ok(out)
}

/// Checks every identity at `samples` surface-uniform points with a single
/// tolerance.
pub fn verify_identities(
    ambient_dim: usize,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<Vec<IdentityReport>> {
    verify_identities_with(
        ambient_dim,
        samples,
        &IdentityTolerances::uniform(tol),
        &SamplingOptions::default(),
        seed,
    )
}

/// Samples are drawn sequentially from a seeded ChaCha stream (points near a
/// coordinate pole are redrawn and counted as excluded), evaluated in
/// parallel, and aggregated in sample order.
pub fn verify_identities_with(
    ambient_dim: usize,
    samples: usize,
    tolerances: &IdentityTolerances,
    opts: &SamplingOptions,
    seed: u64,
) -> Result<Vec<IdentityReport>> {
    if ambient_dim < 2 {
        return Err(Error::InvalidInput(format!(
            "ambient dimension must be >= 2, got {ambient_dim}"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut excluded_polar = 0;
    let mut drawn = Vec::with_capacity(samples);
    while drawn.len() < samples {
        let point = random_point(ambient_dim, &mut rng);
        let pole = random_point(ambient_dim, &mut rng);
        if is_polar(&point, opts.fd.pole_guard) {
            excluded_polar += 1;
            continue;
        }
        drawn.push(Sample { point, pole });
    }

    let results = drawn
        .par_iter()
        .map(|s| sample_deviations(s, opts))
        .collect::<Vec<_>>();

    let mut reports = Vec::new();
    for id in IdentityId::ALL {
        let tolerance = tolerances.for_id(id);
        if id == IdentityId::DistanceLaplacian && ambient_dim == 2 {
            reports.push(IdentityReport {
                identity: id,
                sample_count: 0,
                max_deviation: 0.0,
                tolerance,
                passed: true,
                excluded: 0,
                note: Some("Δd = 0 on S^1 (coefficient N − 2 vanishes)".into()),
            });
            continue;
        }
        let mut count = 0;
        let mut excluded = excluded_polar;
        let mut max_dev: f64 = 0.0;
        for r in &results {
            let dev = match r {
                Ok(d) => d.values[index_of(id)],
                Err(e) if e.is_numerical() => return Err(e.clone()),
                Err(_) => None,
            };
            match dev {
                Some(v) => {
                    count += 1;
                    max_dev = if v.is_nan() { f64::NAN } else { max_dev.max(v) };
                }
                None => excluded += 1,
            }
        }
        reports.push(IdentityReport {
            identity: id,
            sample_count: count,
            max_deviation: max_dev,
            tolerance,
            passed: count > 0 && max_dev <= tolerance,
            excluded,
            note: None,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pt(angles: &[f64]) -> SphericalPoint {
        SphericalPoint::new(angles.len() + 1, angles.to_vec()).unwrap()
    }

    #[test]
    fn embeds_axis_points() {
        let e = embed(&pt(&[PI])).components;
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], 0.0, epsilon = 1e-15);
        let e = embed(&pt(&[FRAC_PI_2, 0.0])).components;
        assert_abs_diff_eq!(e[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e[2], 0.0, epsilon = 1e-15);
        let e = embed(&pt(&[FRAC_PI_2, FRAC_PI_2, FRAC_PI_2])).components;
        for (i, want) in [0.0, 0.0, 0.0, 1.0].iter().enumerate() {
            assert_abs_diff_eq!(e[i], want, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_points() {
        assert!(SphericalPoint::new(3, vec![0.1]).is_err());
        assert!(SphericalPoint::new(3, vec![4.0, 0.0]).is_err());
        assert!(SphericalPoint::new(1, vec![]).is_err());
        assert!(lambda_inner(&pt(&[0.1]), &pt(&[0.1, 0.2])).is_err());
        assert!(grad_coordinate_analytic(0, &pt(&[0.1])).is_err());
        assert!(grad_coordinate_analytic(3, &pt(&[0.1])).is_err());
    }

    #[test]
    fn inner_products_and_distances() {
        let a = pt(&[FRAC_PI_2, 0.0]);
        let b = pt(&[FRAC_PI_2, PI]);
        let c = pt(&[0.0, 0.0]);
        assert_eq!(lambda_inner(&a, &a).unwrap(), 1.0);
        assert_abs_diff_eq!(lambda_inner(&a, &b).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda_inner(&a, &c).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(geodesic_distance(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(geodesic_distance(&a, &b).unwrap(), PI, epsilon = 1e-7);
        assert_abs_diff_eq!(
            geodesic_distance(&a, &c).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn analytic_gradient_examples() {
        let v = grad_coordinate_analytic(1, &pt(&[FRAC_PI_2, 0.0]))
            .unwrap()
            .frame_components;
        assert_abs_diff_eq!(v[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(4, 2), (5, 5)] {
            let p = random_point(n, &mut rng);
            let x = embed(&p).components[m - 1];
            let g = grad_coordinate_analytic(m, &p).unwrap();
            assert_abs_diff_eq!(x * x + g.norm_squared(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn analytic_and_fd_gradients_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fd = FdOptions::default();
        for n in 2..=6 {
            for _ in 0..10 {
                let p = random_point(n, &mut rng);
                if is_polar(&p, 0.05) {
                    continue;
                }
                for m in 1..=n {
                    let a = grad_coordinate_analytic(m, &p).unwrap();
                    let f = surface_gradient_fd(
                        coordinate_field(m - 1),
                        &p,
                        fd.gradient_step,
                        fd.pole_guard,
                    )
                    .unwrap();
                    for (x, y) in a.frame_components.iter().zip(&f.frame_components) {
                        assert_abs_diff_eq!(x, y, epsilon = 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn fd_examples() {
        let fd = FdOptions::default();
        let p = pt(&[0.7, 1.1, 2.0, 0.3]);
        let g = surface_gradient_fd(
            |_p: &SphericalPoint| 3.0,
            &p,
            fd.gradient_step,
            fd.pole_guard,
        )
        .unwrap();
        assert!(g.norm() < 1e-10);
        let l = laplace_beltrami_fd(
            |_p: &SphericalPoint| 3.0,
            &p,
            fd.laplacian_step,
            fd.pole_guard,
        )
        .unwrap();
        assert!(l.abs() < 1e-8);
        let g = surface_gradient_fd(
            coordinate_field(0),
            &pt(&[FRAC_PI_2, 0.0]),
            fd.gradient_step,
            fd.pole_guard,
        )
        .unwrap();
        assert_abs_diff_eq!(g.frame_components[0], -1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g.frame_components[1], 0.0, epsilon = 1e-7);
        for m in 0..5 {
            let l = laplace_beltrami_fd(coordinate_field(m), &p, fd.laplacian_step, fd.pole_guard)
                .unwrap();
            assert_abs_diff_eq!(l, -4.0 * embed(&p).components[m], epsilon = 1e-5);
        }
        let pole = pt(&[0.4, 2.5, 1.0]);
        let q = pt(&[1.2, 0.9, 4.0]);
        let d = geodesic_distance(&q, &pole).unwrap();
        let lap = laplace_beltrami_fd(
            |x: &SphericalPoint| geodesic_distance(x, &pole).unwrap(),
            &q,
            fd.laplacian_step,
            fd.pole_guard,
        )
        .unwrap();
        assert_abs_diff_eq!(lap, 2.0 * d.cos() / d.sin(), epsilon = 1e-4);
    }

    #[test]
    fn fd_guards() {
        let p = pt(&[1e-4, 0.5]);
        let r = surface_gradient_fd(coordinate_field(0), &p, 1e-5, 1e-3);
        assert!(matches!(r, Err(Error::Degenerate(_))));
        let r = surface_gradient_fd(|_p: &SphericalPoint| f64::NAN, &pt(&[1.0, 0.5]), 1e-5, 1e-3);
        assert!(matches!(r, Err(Error::NumericalFailure(_))));
        assert!(laplace_beltrami_fd(coordinate_field(0), &pt(&[1.0, 0.5]), 0.0, 1e-3).is_err());
    }

    #[test]
    fn circle_reports_trivial_distance_laplacian() {
        let reports = verify_identities(2, 20, 1e-5, 42).unwrap();
        let r = reports
            .iter()
            .find(|r| r.identity == IdentityId::DistanceLaplacian)
            .unwrap();
        assert!(r.passed);
        assert_eq!(
            r.note.as_deref(),
            Some("Δd = 0 on S^1 (coefficient N − 2 vanishes)")
        );
        assert!(reports.iter().all(|r| r.passed), "{reports:?}");
    }

    #[test]
    fn all_identities_hold_on_s4() {
        let reports = verify_identities(5, 200, 1e-5, 42).unwrap();
        assert_eq!(reports.len(), 7);
        for r in &reports {
            assert!(r.passed, "{r:?}");
            assert!(r.sample_count > 150);
        }
    }

    #[test]
    fn verification_is_deterministic() {
        let a = verify_identities(4, 30, 1e-5, 7).unwrap();
        let b = verify_identities(4, 30, 1e-5, 7).unwrap();
        assert_eq!(a, b);
    }

    fn angles_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        let mut parts: Vec<BoxedStrategy<f64>> = (0..n - 2).map(|_| (0.0..=PI).boxed()).collect();
        parts.push((0.0..2.0 * PI).boxed());
        parts
    }

    fn point_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..=8).prop_flat_map(|n| {
            (
                Just(n),
                angles_strategy(n),
                angles_strategy(n),
                angles_strategy(n),
            )
        })
    }

    proptest! {
        #[test]
        fn embedding_has_unit_norm((n, a, _, _) in point_strategy()) {
            let p = SphericalPoint::new(n, a).unwrap();
            prop_assert!((embed(&p).norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn distance_is_a_metric((n, a, b, c) in point_strategy()) {
            let (a, b, c) = (
                SphericalPoint::new(n, a).unwrap(),
                SphericalPoint::new(n, b).unwrap(),
                SphericalPoint::new(n, c).unwrap(),
            );
            let ab = geodesic_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, geodesic_distance(&b, &a).unwrap());
            prop_assert!((0.0..=PI).contains(&ab));
            let ac = geodesic_distance(&a, &c).unwrap();
            let cb = geodesic_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn fd_gradient_is_second_order(seed in 0u64..1000, n in 3usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_point(n, &mut rng);
            prop_assume!(!is_polar(&p, 0.2));
            let m = 1 + (seed as usize) % n;
            let exact = grad_coordinate_analytic(m, &p).unwrap();
            let residual = |h: f64| {
                let g = surface_gradient_fd(coordinate_field(m - 1), &p, h, 1e-3).unwrap();
                g.frame_components.iter().zip(&exact.frame_components)
                    .map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            };
            let (coarse, fine) = (residual(0.04), residual(0.02));
            prop_assert!(coarse < 1e-9 || coarse / fine >= 3.0, "{coarse} vs {fine}");
        }

        #[test]
        fn fd_laplacian_is_second_order(seed in 0u64..1000, n in 3usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_point(n, &mut rng);
            prop_assume!(!is_polar(&p, 0.2));
            let m = (seed as usize) % n;
            let exact = -((n - 1) as f64) * embed(&p).components[m];
            let residual = |h: f64| {
                (laplace_beltrami_fd(coordinate_field(m), &p, h, 1e-3).unwrap() - exact).abs()
            };
            let (coarse, fine) = (residual(0.04), residual(0.02));
            prop_assert!(coarse < 1e-9 || coarse / fine >= 3.0, "{coarse} vs {fine}");
        }
    }
}
