//! Calculus on densities along pushforward curves `ν ∘ (Id + τφ)⁻¹`:
//! test profiles, cylinder functions, the energy differential as a
//! finite-difference oracle, the determinant lemma, and projection onto
//! weighted gradient fields `b(v)∇ζ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::energy::EnergyFunctional;
use crate::error::{Error, Result};
use crate::grid::{partial, same_grid, DensityField, Grid, Point, VectorFieldSample};

type Mat2 = [[f64; 2]; 2];

/// Smooth compactly supported scalar on `ℝᵈ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestProfile {
    /// `A exp(1 − 1/(1 − |x−c|²/R²))` inside the ball.
    Bump { center: Point, radius: f64, amplitude: f64 },
    /// `Heₙ(y₁) e^{−|y|²/2}` with `y = (x−c)/s`, cut off by a unit bump of
    /// radius `radius`.
    HermiteDamped {
        order: usize,
        center: Point,
        scale: f64,
        radius: f64,
    },
}

fn bump_parts(p: Point, c: Point, r: f64, dim: usize) -> Option<(f64, [f64; 2], f64, f64)> {
    let mut d = [0.0; 2];
    for k in 0..dim {
        d[k] = p[k] - c[k];
    }
    let q = (d[0] * d[0] + d[1] * d[1]) / (r * r);
    if q >= 1.0 {
        return None;
    }
    let w = 1.0 / (1.0 - q);
    let h = (1.0 - w).exp();
    Some((h, d, q, w))
}

/// Value, gradient and Hessian of the unit-amplitude bump.
fn bump_jet(p: Point, c: Point, r: f64, dim: usize) -> (f64, [f64; 2], Mat2) {
    let Some((h, d, _, w)) = bump_parts(p, c, r, dim) else {
        return (0.0, [0.0; 2], [[0.0; 2]; 2]);
    };
    let r2 = r * r;
    let dh_dq = -h * w * w;
    let d2h_dq2 = h * w * w * w * (w - 2.0);
    let dq = [2.0 * d[0] / r2, 2.0 * d[1] / r2];
    let mut hess = [[0.0; 2]; 2];
    for i in 0..dim {
        for j in 0..dim {
            let delta = if i == j { 2.0 / r2 } else { 0.0 };
            hess[i][j] = d2h_dq2 * dq[i] * dq[j] + dh_dq * delta;
        }
    }
    (h, [dh_dq * dq[0], dh_dq * dq[1]], hess)
}

/// Probabilists' Hermite polynomial and its first two derivatives.
fn hermite(n: usize, y: f64) -> (f64, f64, f64) {
    let mut he = vec![1.0, y];
    for k in 1..n.max(1) {
        let next = y * he[k] - k as f64 * he[k - 1];
        he.push(next);
    }
    let at = |k: isize| if k < 0 { 0.0 } else { he[k as usize] };
    let n_i = n as isize;
    (
        at(n_i),
        n as f64 * at(n_i - 1),
        (n * n.saturating_sub(1)) as f64 * at(n_i - 2),
    )
}

impl TestProfile {
    pub fn bump(center: Point, radius: f64) -> Self {
        TestProfile::Bump {
            center,
            radius,
            amplitude: 1.0,
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            TestProfile::Bump { center, .. } | TestProfile::HermiteDamped { center, .. } => center,
        }
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            TestProfile::Bump { radius, .. } | TestProfile::HermiteDamped { radius, .. } => radius,
        }
    }

    /// Value, gradient and Hessian at `p`; entries beyond `dim` are zero.
    pub fn jet(&self, p: Point, dim: usize) -> (f64, [f64; 2], Mat2) {
        match *self {
            TestProfile::Bump {
                center,
                radius,
                amplitude,
            } => {
                let (h, g, hs) = bump_jet(p, center, radius, dim);
                let a = amplitude;
                (
                    a * h,
                    [a * g[0], a * g[1]],
                    [[a * hs[0][0], a * hs[0][1]], [a * hs[1][0], a * hs[1][1]]],
                )
            }
            TestProfile::HermiteDamped {
                order,
                center,
                scale,
                radius,
            } => {
                let (c, gc, hc) = bump_jet(p, center, radius, dim);
                if c == 0.0 {
                    return (0.0, [0.0; 2], [[0.0; 2]; 2]);
                }
                let mut y = [0.0; 2];
                for k in 0..dim {
                    y[k] = (p[k] - center[k]) / scale;
                }
                let gauss = (-0.5 * (y[0] * y[0] + y[1] * y[1])).exp();
                let (he, dhe, d2he) = hermite(order, y[0]);
                let f = he * gauss;
                let mut gf = [0.0; 2];
                let mut hf = [[0.0; 2]; 2];
                for k in 0..dim {
                    let e_k = if k == 0 { 1.0 } else { 0.0 };
                    gf[k] = (dhe * e_k * gauss - he * y[k] * gauss) / scale;
                    for l in 0..dim {
                        let e_l = if l == 0 { 1.0 } else { 0.0 };
                        let dkl = if k == l { 1.0 } else { 0.0 };
                        hf[k][l] = (d2he * e_k * e_l * gauss - dhe * (e_k * y[l] + e_l * y[k]) * gauss
                            + he * (y[k] * y[l] - dkl) * gauss)
                            / (scale * scale);
                    }
                }
                let mut g = [0.0; 2];
                let mut hs = [[0.0; 2]; 2];
                for k in 0..dim {
                    g[k] = f * gc[k] + c * gf[k];
                    for l in 0..dim {
                        hs[k][l] = f * hc[k][l] + gf[k] * gc[l] + gc[k] * gf[l] + c * hf[k][l];
                    }
                }
                (f * c, g, hs)
            }
        }
    }

    pub fn value(&self, p: Point, dim: usize) -> f64 {
        self.jet(p, dim).0
    }

    pub fn gradient(&self, p: Point, dim: usize) -> [f64; 2] {
        self.jet(p, dim).1
    }

    pub fn laplacian(&self, p: Point, dim: usize) -> f64 {
        let h = self.jet(p, dim).2;
        (0..dim).map(|k| h[k][k]).sum()
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let dim = grid.dim();
        grid.sample(|p| self.value(p, dim))
    }

    pub fn sample_gradient(&self, grid: &Grid) -> VectorFieldSample {
        let dim = grid.dim();
        VectorFieldSample::from_fn(*grid, |p| self.gradient(p, dim))
    }

    /// Whether the support keeps `layers` cells away from the boundary.
    pub fn fits_inside(&self, grid: &Grid, layers: usize) -> bool {
        let c = self.center();
        let r = self.support_radius();
        (0..grid.dim()).all(|k| {
            let margin = layers as f64 * grid.spacing(k);
            let lo = grid.origin()[k] + margin;
            let hi = grid.origin()[k] + grid.extent()[k] - margin;
            c[k] - r >= lo && c[k] + r <= hi
        })
    }
}

/// Outer function `f ∈ C¹_b(ℝᵏ)` of a cylinder function, as a weighted sum
/// of one-dimensional profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outer {
    SinSum,
    TanhSum,
    /// `y − y³/3`, frozen at `±2/3` beyond `|y| = 1`.
    PolyClipped,
}

impl Outer {
    fn eval(&self, y: f64) -> (f64, f64) {
        match self {
            Outer::SinSum => (y.sin(), y.cos()),
            Outer::TanhSum => {
                let t = y.tanh();
                (t, 1.0 - t * t)
            }
            Outer::PolyClipped => {
                if y.abs() >= 1.0 {
                    (y.signum() * 2.0 / 3.0, 0.0)
                } else {
                    (y - y * y * y / 3.0, 1.0 - y * y)
                }
            }
        }
    }
}

/// `F(ν) = f(ν(h₁), …, ν(h_k))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunction {
    outer: Outer,
    coefficients: Vec<f64>,
    inner: Vec<TestProfile>,
}

impl CylinderFunction {
    pub fn new(outer: Outer, coefficients: Vec<f64>, inner: Vec<TestProfile>) -> Result<Self> {
        if inner.is_empty() {
            return Err(Error::Shape("a cylinder function needs at least one profile".into()));
        }
        if coefficients.len() != inner.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} profiles",
                coefficients.len(),
                inner.len()
            )));
        }
        Ok(Self {
            outer,
            coefficients,
            inner,
        })
    }

    pub fn inner(&self) -> &[TestProfile] {
        &self.inner
    }

    /// Every profile keeps three cells of clearance from the boundary.
    pub fn check_support(&self, grid: &Grid) -> Result<()> {
        match self.inner.iter().position(|h| !h.fits_inside(grid, 3)) {
            Some(i) => Err(Error::DomainTooSmall(format!(
                "profile {i} reaches within three cells of the boundary"
            ))),
            None => Ok(()),
        }
    }

    fn moments(&self, field: &DensityField) -> Result<Vec<f64>> {
        self.inner
            .iter()
            .map(|h| crate::grid::integrate(field, &h.sample(field.grid())))
            .collect()
    }

    pub fn value(&self, field: &DensityField) -> Result<f64> {
        let z = self.moments(field)?;
        Ok(z.iter()
            .zip(&self.coefficients)
            .map(|(z, a)| a * self.outer.eval(*z).0)
            .sum())
    }

    /// `∇ᴾF_ν = Σ ∂ᵢf(ν(h₁), …) ∇hᵢ`.
    pub fn gradient(&self, field: &DensityField) -> Result<VectorFieldSample> {
        let z = self.moments(field)?;
        let grid = *field.grid();
        let mut out = VectorFieldSample::zeros(grid);
        for ((h, z), a) in self.inner.iter().zip(&z).zip(&self.coefficients) {
            let df = a * self.outer.eval(*z).1;
            out = out.axpy(df, &h.sample_gradient(&grid))?;
        }
        Ok(out)
    }
}

pub fn cylinder_value(f: &CylinderFunction, field: &DensityField) -> Result<f64> {
    f.value(field)
}

pub fn cylinder_gradient(f: &CylinderFunction, field: &DensityField) -> Result<VectorFieldSample> {
    f.gradient(field)
}

/// A vector field `φ` with its Jacobian `Dφ`, evaluable anywhere.
pub trait Direction {
    fn dim(&self) -> usize;
    fn value(&self, p: Point) -> [f64; 2];
    /// `J[i][j] = ∂ⱼ φᵢ`.
    fn jacobian(&self, p: Point) -> Mat2;

    fn divergence(&self, p: Point) -> f64 {
        let j = self.jacobian(p);
        (0..self.dim()).map(|k| j[k][k]).sum()
    }
}

/// A grid sample extended by piecewise quadratic interpolation; the Jacobian is
/// the interpolated central-difference Jacobian. Zero outside the grid.
#[derive(Clone, Debug)]
pub struct SampledDirection {
    field: VectorFieldSample,
    jac: Vec<Vec<f64>>,
}

impl SampledDirection {
    pub fn new(field: VectorFieldSample) -> Self {
        let grid = *field.grid();
        let d = grid.dim();
        let mut jac = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                jac.push(partial(field.component(i), &grid, j));
            }
        }
        Self { field, jac }
    }

    pub fn field(&self) -> &VectorFieldSample {
        &self.field
    }
}

impl Direction for SampledDirection {
    fn dim(&self) -> usize {
        self.field.grid().dim()
    }

    fn value(&self, p: Point) -> [f64; 2] {
        let g = self.field.grid();
        let mut v = [0.0; 2];
        for k in 0..g.dim() {
            v[k] = g.interpolate_quadratic(self.field.component(k), p, 0.0);
        }
        v
    }

    fn jacobian(&self, p: Point) -> Mat2 {
        let g = self.field.grid();
        let d = g.dim();
        let mut m = [[0.0; 2]; 2];
        for i in 0..d {
            for j in 0..d {
                m[i][j] = g.interpolate_quadratic(&self.jac[i * d + j], p, 0.0);
            }
        }
        m
    }
}

/// Closed-form directions built from a test profile `ψ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileDirection {
    /// `φ = ψ e` for a fixed vector `e`.
    Scaled {
        profile: TestProfile,
        vector: [f64; 2],
        dim: usize,
    },
    /// `φ = ∇ψ`.
    Gradient { profile: TestProfile, dim: usize },
}

impl Direction for ProfileDirection {
    fn dim(&self) -> usize {
        match *self {
            ProfileDirection::Scaled { dim, .. } | ProfileDirection::Gradient { dim, .. } => dim,
        }
    }

    fn value(&self, p: Point) -> [f64; 2] {
        match *self {
            ProfileDirection::Scaled { profile, vector, dim } => {
                let s = profile.value(p, dim);
                [s * vector[0], if dim == 2 { s * vector[1] } else { 0.0 }]
            }
            ProfileDirection::Gradient { profile, dim } => profile.gradient(p, dim),
        }
    }

    fn jacobian(&self, p: Point) -> Mat2 {
        match *self {
            ProfileDirection::Scaled { profile, vector, dim } => {
                let g = profile.gradient(p, dim);
                let mut m = [[0.0; 2]; 2];
                for i in 0..dim {
                    for j in 0..dim {
                        m[i][j] = vector[i] * g[j];
                    }
                }
                m
            }
            ProfileDirection::Gradient { profile, dim } => profile.jet(p, dim).2,
        }
    }
}

/// Closure-backed direction, for ad hoc probe fields.
pub struct FnDirection<V, J> {
    pub dim: usize,
    pub value: V,
    pub jacobian: J,
}

impl<V, J> Direction for FnDirection<V, J>
where
    V: Fn(Point) -> [f64; 2],
    J: Fn(Point) -> Mat2,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, p: Point) -> [f64; 2] {
        (self.value)(p)
    }

    fn jacobian(&self, p: Point) -> Mat2 {
        (self.jacobian)(p)
    }
}

impl<T: Direction + ?Sized> Direction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, p: Point) -> [f64; 2] {
        (**self).value(p)
    }

    fn jacobian(&self, p: Point) -> Mat2 {
        (**self).jacobian(p)
    }
}

/// Linear combination `Σ aᵢ φᵢ` of directions.
pub struct Combination<'a> {
    pub terms: Vec<(f64, &'a dyn Direction)>,
}

impl Direction for Combination<'_> {
    fn dim(&self) -> usize {
        self.terms.first().map(|(_, d)| d.dim()).unwrap_or(1)
    }

    fn value(&self, p: Point) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (a, d) in &self.terms {
            let w = d.value(p);
            v[0] += a * w[0];
            v[1] += a * w[1];
        }
        v
    }

    fn jacobian(&self, p: Point) -> Mat2 {
        let mut m = [[0.0; 2]; 2];
        for (a, d) in &self.terms {
            let j = d.jacobian(p);
            for i in 0..2 {
                for k in 0..2 {
                    m[i][k] += a * j[i][k];
                }
            }
        }
        m
    }
}

fn det(m: &Mat2, dim: usize) -> f64 {
    if dim == 1 {
        m[0][0]
    } else {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// `det(I + τ J)`.
fn det_shifted(j: &Mat2, tau: f64, dim: usize) -> f64 {
    let m = [
        [1.0 + tau * j[0][0], tau * j[0][1]],
        [tau * j[1][0], 1.0 + tau * j[1][1]],
    ];
    det(&m, dim)
}

fn op_norm_bound(j: &Mat2, dim: usize) -> f64 {
    let mut s = 0.0;
    for row in j.iter().take(dim) {
        for x in row.iter().take(dim) {
            s += x * x;
        }
    }
    s.sqrt()
}

/// Frobenius bound on `sup |Dφ|` over the cell centres of `grid`.
pub fn jacobian_sup(phi: &dyn Direction, grid: &Grid) -> f64 {
    grid.centers()
        .iter()
        .map(|&p| op_norm_bound(&phi.jacobian(p), grid.dim()))
        .fold(0.0, f64::max)
}

pub fn direction_sup(phi: &dyn Direction, grid: &Grid) -> f64 {
    grid.centers()
        .iter()
        .map(|&p| {
            let v = phi.value(p);
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        })
        .fold(0.0, f64::max)
}

/// The curve `τ ↦ ν ∘ (Id + τφ)⁻¹` for `|τ| ≤ tau_max`.
pub struct PushforwardCurve<'a> {
    base: DensityField,
    direction: &'a dyn Direction,
    tau_max: f64,
    lipschitz: f64,
}

impl<'a> PushforwardCurve<'a> {
    pub fn new(base: DensityField, direction: &'a dyn Direction, tau_max: f64) -> Result<Self> {
        if direction.dim() != base.grid().dim() {
            return Err(Error::Shape("direction and density differ in dimension".into()));
        }
        let lipschitz = jacobian_sup(direction, base.grid());
        if tau_max * lipschitz >= 1.0 {
            return Err(Error::CurveDomain {
                tau: tau_max,
                tau_max: 1.0 / lipschitz,
            });
        }
        Ok(Self {
            base,
            direction,
            tau_max,
            lipschitz,
        })
    }

    /// Curve with `tau_max = 1 / (2 sup|Dφ|)`.
    pub fn with_default_range(base: DensityField, direction: &'a dyn Direction) -> Result<Self> {
        let l = jacobian_sup(direction, base.grid());
        let tau_max = if l > 0.0 { 0.5 / l } else { 1.0 };
        Self::new(base, direction, tau_max)
    }

    pub fn base(&self) -> &DensityField {
        &self.base
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn direction(&self) -> &dyn Direction {
        self.direction
    }

    /// Solves `y + τφ(y) = x` by (damped) fixed-point iteration.
    pub fn invert(&self, x: Point, tau: f64) -> std::result::Result<Point, f64> {
        let dim = self.base.grid().dim();
        let omega = if tau.abs() * self.lipschitz > 0.5 { 0.5 } else { 1.0 };
        let tol = 4.0 * f64::EPSILON * (1.0 + x[0].abs().max(x[1].abs()));
        let mut y = x;
        let mut best = (f64::INFINITY, x);
        for _ in 0..200 {
            let f = self.direction.value(y);
            let mut res: f64 = 0.0;
            let mut next = y;
            for k in 0..dim {
                let r = y[k] + tau * f[k] - x[k];
                res = res.max(r.abs());
                next[k] = y[k] - omega * r;
            }
            if res <= tol {
                return Ok(y);
            }
            if res >= best.0 && best.0 <= 1e-12 {
                // stagnated at rounding level
                return Ok(best.1);
            }
            if res < best.0 {
                best = (res, y);
            }
            y = next;
        }
        if best.0 <= 1e-12 {
            Ok(best.1)
        } else {
            Err(best.0)
        }
    }
}

/// Density of the pushforward at `tau`, `v(y)/|det(I + τDφ(y))|` with
/// `y = (Id + τφ)⁻¹(x)`, renormalized to unit mass. Returns the field and
/// the renormalization factor.
pub fn pushforward_density(curve: &PushforwardCurve, tau: f64) -> Result<(DensityField, f64)> {
    if tau.abs() > curve.tau_max {
        return Err(Error::CurveDomain {
            tau: tau.abs(),
            tau_max: curve.tau_max,
        });
    }
    if tau == 0.0 {
        return Ok((curve.base.clone(), 1.0));
    }
    let grid = *curve.base.grid();
    let dim = grid.dim();
    let v = curve.base.values();
    let mut out = Vec::with_capacity(grid.len());
    for (cell, x) in grid.centers().into_iter().enumerate() {
        let y = curve
            .invert(x, tau)
            .map_err(|residual| Error::Inversion { cell, residual })?;
        let j = curve.direction.jacobian(y);
        let d = det_shifted(&j, tau, dim).abs();
        out.push(grid.interpolate_quadratic(v, y, 0.0).max(0.0) / d);
    }
    let field = DensityField::new(grid, out)?;
    let (field, factor) = field.normalized()?;
    Ok((field, factor))
}

/// Deviations from the determinant lemma at `τ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetDerivativeReport {
    pub h_tau: f64,
    /// `max |∂τ det(I + τDφ(x)) − div φ(x)|`.
    pub max_dev_det: f64,
    /// `max |∂τ det(I + τDφ(x+τφ(x)))⁻¹ + div φ(x)|`.
    pub max_dev_inverse: f64,
    /// Both deviations after one Richardson step from `h_tau_richardson`.
    pub h_tau_richardson: f64,
    pub max_dev_det_richardson: f64,
    pub max_dev_inverse_richardson: f64,
}

/// Central differences in `τ` of the two determinant maps, compared with
/// `±div φ` at every cell centre.
pub fn det_derivative_check(phi: &dyn Direction, grid: &Grid, h_tau: f64) -> DetDerivativeReport {
    let dim = grid.dim();
    let fwd = |x: Point, t: f64| det_shifted(&phi.jacobian(x), t, dim);
    let inv = |x: Point, t: f64| {
        let f = phi.value(x);
        let xs = [x[0] + t * f[0], x[1] + t * f[1]];
        1.0 / det_shifted(&phi.jacobian(xs), t, dim)
    };
    let central = |f: &dyn Fn(f64) -> f64, h: f64| (f(h) - f(-h)) / (2.0 * h);
    let richardson = |f: &dyn Fn(f64) -> f64, h: f64| (4.0 * central(f, 0.5 * h) - central(f, h)) / 3.0;
    let h_r = 1e-3;
    let mut rep = DetDerivativeReport {
        h_tau,
        max_dev_det: 0.0,
        max_dev_inverse: 0.0,
        h_tau_richardson: h_r,
        max_dev_det_richardson: 0.0,
        max_dev_inverse_richardson: 0.0,
    };
    for x in grid.centers() {
        let div = phi.divergence(x);
        let a = |t: f64| fwd(x, t);
        let b = |t: f64| inv(x, t);
        rep.max_dev_det = rep.max_dev_det.max((central(&a, h_tau) - div).abs());
        rep.max_dev_inverse = rep.max_dev_inverse.max((central(&b, h_tau) + div).abs());
        rep.max_dev_det_richardson = rep.max_dev_det_richardson.max((richardson(&a, h_r) - div).abs());
        rep.max_dev_inverse_richardson = rep.max_dev_inverse_richardson.max((richardson(&b, h_r) + div).abs());
    }
    rep
}

/// Default finite-difference step `10⁻⁴ / (1 + ‖φ‖∞)`.
pub fn default_tau(phi: &dyn Direction, grid: &Grid) -> f64 {
    1e-4 / (1.0 + direction_sup(phi, grid))
}

/// Central difference of `τ ↦ G(μ_τ)` at `0`, optionally Richardson
/// extrapolated from steps `τ` and `τ/2`.
pub fn diff_along_curve<G>(curve: &PushforwardCurve, tau: f64, richardson: bool, functional: G) -> Result<f64>
where
    G: Fn(&DensityField) -> Result<f64>,
{
    let central = |t: f64| -> Result<f64> {
        let (p, _) = pushforward_density(curve, t)?;
        let (m, _) = pushforward_density(curve, -t)?;
        Ok((functional(&p)? - functional(&m)?) / (2.0 * t))
    };
    let d = central(tau)?;
    if richardson {
        Ok((4.0 * central(0.5 * tau)? - d) / 3.0)
    } else {
        Ok(d)
    }
}

/// The generalized differential `diff E_ν(φ)` as a pushforward finite
/// difference.
pub fn diff_energy_fd(
    fnl: &EnergyFunctional,
    field: &DensityField,
    phi: &dyn Direction,
    tau: f64,
    richardson: bool,
) -> Result<f64> {
    if direction_sup(phi, field.grid()) == 0.0 {
        return Ok(0.0);
    }
    let curve = PushforwardCurve::new(field.clone(), phi, tau.abs() * 1.000_001)?;
    diff_along_curve(&curve, tau.abs(), richardson, |f| Ok(fnl.energy_value(f)))
}

/// `⟨a, φ⟩_ν` with `φ` sampled at cell centres.
pub fn pairing(field: &DensityField, a: &VectorFieldSample, phi: &dyn Direction) -> Result<f64> {
    same_grid(field.grid(), a.grid())?;
    let grid = field.grid();
    let v = field.values();
    let mut s = 0.0;
    for c in 0..grid.len() {
        let p = phi.value(grid.center(c));
        let w = a.at(c);
        s += (w[0] * p[0] + w[1] * p[1]) * v[c];
    }
    Ok(s * grid.cell_volume())
}

pub fn sample_direction(phi: &dyn Direction, grid: &Grid) -> VectorFieldSample {
    VectorFieldSample::from_fn(*grid, |p| phi.value(p))
}

/// `(∂τ ∫ g(x + τφ(x)) dν, ∫ ∇g·φ dν)` at `τ = 0`.
pub fn transport_derivative_check(
    field: &DensityField,
    g: &TestProfile,
    phi: &dyn Direction,
    tau: f64,
) -> Result<(f64, f64)> {
    let grid = field.grid();
    let dim = grid.dim();
    let shifted = |t: f64| -> Result<f64> {
        let vals: Vec<f64> = grid
            .centers()
            .iter()
            .map(|&x| {
                let f = phi.value(x);
                g.value([x[0] + t * f[0], x[1] + t * f[1]], dim)
            })
            .collect();
        crate::grid::integrate(field, &vals)
    };
    let fd = (shifted(tau)? - shifted(-tau)?) / (2.0 * tau);
    let exact = pairing(field, &g.sample_gradient(grid), phi)?;
    Ok((fd, exact))
}

/// Lower corner and upper corner of the cells with `v ≥ rel · max v`.
pub fn support_box(field: &DensityField, rel: f64) -> ([f64; 2], [f64; 2]) {
    let grid = field.grid();
    let thr = rel * field.max();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (c, v) in field.values().iter().enumerate() {
        if *v >= thr && *v > 0.0 {
            let p = grid.center(c);
            for k in 0..grid.dim() {
                lo[k] = lo[k].min(p[k] - 0.5 * grid.spacing(k));
                hi[k] = hi[k].max(p[k] + 0.5 * grid.spacing(k));
            }
        }
    }
    for k in grid.dim()..2 {
        lo[k] = 0.0;
        hi[k] = 0.0;
    }
    (lo, hi)
}

fn lattice(count: usize, dim: usize) -> [usize; 2] {
    if dim == 1 {
        return [count, 1];
    }
    let mut ny = (count as f64).sqrt().floor() as usize;
    while !count.is_multiple_of(ny) {
        ny -= 1;
    }
    [count / ny, ny]
}

fn bump_tiling(lo: [f64; 2], hi: [f64; 2], count: usize, dim: usize) -> Vec<TestProfile> {
    let n = lattice(count, dim);
    let step: Vec<f64> = (0..dim).map(|k| (hi[k] - lo[k]) / n[k] as f64).collect();
    let radius = 1.5 * step.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(count);
    for j in 0..n[1] {
        for i in 0..n[0] {
            let mut c = [0.0; 2];
            c[0] = lo[0] + (i as f64 + 0.5) * step[0];
            if dim == 2 {
                c[1] = lo[1] + (j as f64 + 0.5) * step[1];
            }
            out.push(TestProfile::bump(c, radius));
        }
    }
    out
}

/// Keeps every profile three cells clear of the boundary by shrinking its
/// radius.
fn clip_to_grid(p: TestProfile, grid: &Grid) -> TestProfile {
    let c = p.center();
    let mut room = f64::INFINITY;
    for k in 0..grid.dim() {
        let margin = 3.0 * grid.spacing(k);
        let lo = grid.origin()[k] + margin;
        let hi = grid.origin()[k] + grid.extent()[k] - margin;
        room = room.min(c[k] - lo).min(hi - c[k]);
    }
    let r = p.support_radius().min(room).max(2.0 * grid.h());
    match p {
        TestProfile::Bump { center, amplitude, .. } => TestProfile::Bump {
            center,
            radius: r,
            amplitude,
        },
        TestProfile::HermiteDamped {
            order, center, scale, ..
        } => TestProfile::HermiteDamped {
            order,
            center,
            scale,
            radius: r,
        },
    }
}

/// The fixed test battery: four bumps tiling the support of `v`, then
/// damped Hermite profiles of orders 1 to 4.
pub fn default_battery(field: &DensityField) -> Vec<TestProfile> {
    nested_generators(field, 8)
}

/// The first `n` members of a fixed nested sequence: 4 bumps, 4 damped
/// Hermite profiles, then successively finer bump tilings of 8, 16, 32, …
/// over the support of `v`.
pub fn nested_generators(field: &DensityField, n: usize) -> Vec<TestProfile> {
    let grid = field.grid();
    let dim = grid.dim();
    let (lo, hi) = support_box(field, 1e-6);
    let mut center = [0.0; 2];
    for k in 0..dim {
        center[k] = 0.5 * (lo[k] + hi[k]);
    }
    let width = (0..dim).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    let mut seq = bump_tiling(lo, hi, 4, dim);
    for order in 1..=4 {
        seq.push(TestProfile::HermiteDamped {
            order,
            center,
            scale: width / 6.0,
            radius: 0.5 * width + 2.0 * grid.h(),
        });
    }
    let mut count = 8;
    while seq.len() < n {
        seq.extend(bump_tiling(lo, hi, count, dim));
        count *= 2;
    }
    seq.truncate(n);
    seq.into_iter().map(|p| clip_to_grid(p, grid)).collect()
}

/// Generators `b(v)∇ζⱼ` of the weighted gradient subspace and their Gram
/// matrix in `⟨·,·⟩_{b,ν}`.
#[derive(Clone, Debug)]
pub struct GradientSubspaceBasis {
    field: DensityField,
    mobility: Vec<f64>,
    generators: Vec<TestProfile>,
    grads: Vec<VectorFieldSample>,
    gram: DMatrix<f64>,
}

impl GradientSubspaceBasis {
    pub fn new(field: DensityField, mobility: Vec<f64>, generators: Vec<TestProfile>) -> Result<Self> {
        let grid = *field.grid();
        if mobility.len() != grid.len() {
            return Err(Error::Shape("mobility must have one entry per cell".into()));
        }
        if let Some(b) = mobility.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::Domain(format!("mobility {b} is not positive")));
        }
        let grads: Vec<VectorFieldSample> = generators.iter().map(|z| z.sample_gradient(&grid)).collect();
        let n = grads.len();
        let v = field.values();
        let vol = grid.cell_volume();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let dot = grads[i].dot(&grads[j])?;
                let s: f64 = (0..grid.len()).map(|c| mobility[c] * dot[c] * v[c]).sum::<f64>() * vol;
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        Ok(Self {
            field,
            mobility,
            generators,
            grads,
            gram,
        })
    }

    /// Generators weighted by the mobility of an energy functional.
    pub fn for_energy(fnl: &EnergyFunctional, field: DensityField, generators: Vec<TestProfile>) -> Result<Self> {
        let mob = field.values().iter().map(|&v| fnl.mobility(v.max(0.0))).collect();
        Self::new(field, mob, generators)
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn generators(&self) -> &[TestProfile] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.gram.is_empty() {
            return 0.0;
        }
        SymmetricEigen::new(self.gram.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// The generator `b(v)∇ζⱼ` as a sampled field.
    pub fn weighted_generator(&self, j: usize) -> VectorFieldSample {
        self.grads[j].scaled(&self.mobility)
    }

    /// `‖w‖_{b,ν}`, with weight `1/b`.
    pub fn norm(&self, w: &VectorFieldSample) -> Result<f64> {
        let ww = w.dot(w)?;
        let v = self.field.values();
        let s: f64 = (0..ww.len()).map(|c| ww[c] / self.mobility[c] * v[c]).sum();
        Ok((s * self.field.grid().cell_volume()).max(0.0).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub target_norm: f64,
}

/// Least-squares projection of `target` onto `span{b(v)∇ζⱼ}` in
/// `⟨·,·⟩_{b,ν}`, with a Tikhonov shift of `10⁻¹² trace(Gram)`.
pub fn project_onto_g(basis: &GradientSubspaceBasis, target: &VectorFieldSample) -> Result<Projection> {
    same_grid(basis.field.grid(), target.grid())?;
    let n = basis.len();
    let target_norm = basis.norm(target)?;
    if n == 0 {
        return Ok(Projection {
            coefficients: vec![],
            residual_norm: target_norm,
            target_norm,
        });
    }
    let grid = basis.field.grid();
    let v = basis.field.values();
    let vol = grid.cell_volume();
    // ⟨target, b∇ζ⟩_{b,ν} = ∫ target·∇ζ dν
    let rhs = DVector::from_iterator(
        n,
        basis.grads.iter().map(|g| {
            let d = target.dot(g).expect("same grid");
            (0..d.len()).map(|c| d[c] * v[c]).sum::<f64>() * vol
        }),
    );
    let shift = 1e-12 * basis.gram.trace();
    let a = &basis.gram + DMatrix::identity(n, n) * shift;
    let coef = match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain("singular Gram matrix".into()))?,
    };
    let mut residual = target.clone();
    for j in 0..n {
        residual = residual.axpy(-coef[j], &basis.weighted_generator(j))?;
    }
    Ok(Projection {
        coefficients: coef.iter().copied().collect(),
        residual_norm: basis.norm(&residual)?,
        target_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{Potential, ScalarLaw};

    fn gaussian(n: usize, lo: f64, hi: f64) -> DensityField {
        let g = Grid::line(lo, hi, n).unwrap();
        DensityField::from_fn(g, |p| (-0.5 * p[0] * p[0]).exp())
            .unwrap()
            .normalized()
            .unwrap()
            .0
    }

    fn fd_check(p: &TestProfile, x: Point, dim: usize) {
        let h = 1e-5;
        let (_, g, hs) = p.jet(x, dim);
        for k in 0..dim {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.value(xp, dim) - p.value(xm, dim)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "grad {k}: {fd} vs {}", g[k]);
            let gp = p.gradient(xp, dim);
            let gm = p.gradient(xm, dim);
            for l in 0..dim {
                let fd = (gp[l] - gm[l]) / (2.0 * h);
                assert!((fd - hs[l][k]).abs() < 1e-6, "hess {l}{k}: {fd} vs {}", hs[l][k]);
            }
        }
    }

    #[test]
    fn profile_derivatives_match_finite_differences() {
        let b = TestProfile::Bump {
            center: [0.2, -0.1],
            radius: 1.3,
            amplitude: 2.0,
        };
        for order in 0..5 {
            let h = TestProfile::HermiteDamped {
                order,
                center: [0.1, 0.3],
                scale: 0.7,
                radius: 2.5,
            };
            for x in [[0.4, 0.2], [-0.9, 0.5], [1.1, -0.6]] {
                fd_check(&h, x, 2);
                fd_check(&h, [x[0], 0.0], 1);
            }
        }
        for x in [[0.4, 0.2], [-0.5, 0.5], [1.0, -0.6]] {
            fd_check(&b, x, 2);
        }
        assert_eq!(b.value([5.0, 0.0], 1), 0.0);
        assert_eq!(b.value([0.2, -0.1], 2), 2.0);
    }

    #[test]
    fn hermite_recurrence() {
        assert_eq!(hermite(0, 0.7), (1.0, 0.0, 0.0));
        assert_eq!(hermite(1, 0.7).0, 0.7);
        let y: f64 = 1.3;
        let (h3, d3, dd3) = hermite(3, y);
        assert!((h3 - (y.powi(3) - 3.0 * y)).abs() < 1e-14);
        assert!((d3 - (3.0 * y * y - 3.0)).abs() < 1e-14);
        assert!((dd3 - 6.0 * y).abs() < 1e-14);
    }

    #[test]
    fn pushforward_identity_cases() {
        let u = gaussian(128, -8.0, 8.0);
        let psi = TestProfile::bump([0.5, 0.0], 2.0);
        let phi = ProfileDirection::Scaled {
            profile: psi,
            vector: [1.0, 0.0],
            dim: 1,
        };
        let curve = PushforwardCurve::with_default_range(u.clone(), &phi).unwrap();
        let (p0, f0) = pushforward_density(&curve, 0.0).unwrap();
        assert_eq!(p0.values(), u.values());
        assert_eq!(f0, 1.0);

        let zero = SampledDirection::new(VectorFieldSample::zeros(*u.grid()));
        let curve = PushforwardCurve::new(u.clone(), &zero, 10.0).unwrap();
        let (p, _) = pushforward_density(&curve, 3.0).unwrap();
        assert!(p.l1_distance(&u).unwrap() < 1e-15);
    }

    #[test]
    fn pushforward_rejects_out_of_range_tau() {
        let u = gaussian(64, -8.0, 8.0);
        let phi = ProfileDirection::Gradient {
            profile: TestProfile::bump([0.0, 0.0], 2.0),
            dim: 1,
        };
        let curve = PushforwardCurve::with_default_range(u, &phi).unwrap();
        let t = curve.tau_max() * 1.5;
        assert!(matches!(pushforward_density(&curve, t), Err(Error::CurveDomain { .. })));
        assert!(PushforwardCurve::new(gaussian(64, -8.0, 8.0), &phi, 1e6).is_err());
    }

    #[test]
    fn pushforward_mass_factor_is_second_order() {
        let phi = ProfileDirection::Scaled {
            profile: TestProfile::bump([0.3, 0.0], 2.5),
            vector: [1.0, 0.0],
            dim: 1,
        };
        for n in [128, 256, 512] {
            let u = gaussian(n, -8.0, 8.0);
            let h = u.grid().h();
            let curve = PushforwardCurve::with_default_range(u, &phi).unwrap();
            for t in [-0.3, -0.05, 0.1, 0.4] {
                let (_, f) = pushforward_density(&curve, t * curve.tau_max() / 0.4).unwrap();
                assert!((f - 1.0).abs() <= 10.0 * h * h, "n={n}: {f}");
            }
        }
    }

    #[test]
    fn det_lemma_zero_field() {
        let grid = Grid::rect([-1.0, -1.0], [1.0, 1.0], [8, 8]).unwrap();
        let zero = SampledDirection::new(VectorFieldSample::zeros(grid));
        let rep = det_derivative_check(&zero, &grid, 1e-5);
        assert_eq!(rep.max_dev_det, 0.0);
        assert_eq!(rep.max_dev_inverse, 0.0);
    }

    #[test]
    fn det_lemma_bump_1d() {
        let grid = Grid::line(-3.0, 3.0, 200).unwrap();
        let phi = ProfileDirection::Scaled {
            profile: TestProfile::bump([0.0, 0.0], 2.0),
            vector: [1.0, 0.0],
            dim: 1,
        };
        let rep = det_derivative_check(&phi, &grid, 1e-5);
        assert!(rep.max_dev_det < 1e-10);
        assert!(rep.max_dev_det_richardson < 1e-12, "{rep:?}");
        assert!(rep.max_dev_inverse < 1e-6);
    }

    #[test]
    fn cylinder_chain_rule_and_disjoint_support() {
        let u = gaussian(256, -8.0, 8.0);
        let h = TestProfile::bump([0.5, 0.0], 1.5);
        let f = CylinderFunction::new(Outer::SinSum, vec![1.0], vec![h]).unwrap();
        let z = crate::grid::integrate(&u, &h.sample(u.grid())).unwrap();
        assert!((f.value(&u).unwrap() - z.sin()).abs() < 1e-15);
        let grad = f.gradient(&u).unwrap();
        let expected = h.sample_gradient(u.grid()).scale(z.cos());
        assert!(grad.axpy(-1.0, &expected).unwrap().sup_norm() < 1e-15);

        let g = Grid::line(-4.0, 4.0, 128).unwrap();
        let v = DensityField::from_fn(g, |p| if p[0] < 0.0 { 0.25 } else { 0.0 }).unwrap();
        let far = TestProfile::bump([2.0, 0.0], 1.0);
        let f = CylinderFunction::new(Outer::TanhSum, vec![1.0], vec![far]).unwrap();
        assert_eq!(f.value(&v).unwrap(), 0.0);
        let grad = f.gradient(&v).unwrap();
        assert!(grad.sup_norm() > 0.1);
        let w = vec![1.0; g.len()];
        assert_eq!(crate::grid::weighted_inner(&v, &w, &grad, &grad).unwrap(), 0.0);
    }

    #[test]
    fn cylinder_validation() {
        assert!(CylinderFunction::new(Outer::SinSum, vec![], vec![]).is_err());
        let h = TestProfile::bump([3.9, 0.0], 1.0);
        let f = CylinderFunction::new(Outer::SinSum, vec![1.0], vec![h]).unwrap();
        assert!(f.check_support(&Grid::line(-4.0, 4.0, 64).unwrap()).is_err());
        assert_eq!(Outer::PolyClipped.eval(3.0), (2.0 / 3.0, 0.0));
        assert_eq!(Outer::PolyClipped.eval(-1.0).0, -2.0 / 3.0);
    }

    #[test]
    fn diff_energy_zero_direction_and_classical_identity() {
        let f = EnergyFunctional::classical(2.0).unwrap();
        let u = gaussian(256, -8.0, 8.0);
        let zero = SampledDirection::new(VectorFieldSample::zeros(*u.grid()));
        assert_eq!(diff_energy_fd(&f, &u, &zero, 1e-4, false).unwrap(), 0.0);

        // ⟨∇(v²)/v, φ⟩_ν = −∫ v² div φ dx
        let phi = ProfileDirection::Scaled {
            profile: TestProfile::bump([0.4, 0.0], 2.5),
            vector: [1.0, 0.0],
            dim: 1,
        };
        let mut errs = vec![];
        for n in [128, 256, 512] {
            let u = gaussian(n, -8.0, 8.0);
            let g = u.grid();
            let fd = diff_energy_fd(&f, &u, &phi, 1e-4, false).unwrap();
            let exact: f64 = (0..g.len())
                .map(|c| -u.values()[c].powi(2) * phi.divergence(g.center(c)))
                .sum::<f64>()
                * g.cell_volume();
            errs.push((fd - exact).abs());
        }
        assert!(errs[2] < errs[0] / 10.0, "{errs:?}");
        assert!(errs[1] < 1e-4, "{errs:?}");
    }

    #[test]
    fn diff_energy_vanishes_at_stationary_state() {
        let f = EnergyFunctional::general(
            ScalarLaw::Linear { sigma: 1.0 },
            ScalarLaw::Constant { c: 1.0 },
            Potential::Quadratic { a: 0.5, offset: 1.0 },
        )
        .unwrap();
        let grid = Grid::line(-8.0, 8.0, 256).unwrap();
        let st = f.stationary_state(&grid).unwrap();
        let phi = ProfileDirection::Scaled {
            profile: TestProfile::bump([0.7, 0.0], 2.0),
            vector: [1.0, 0.0],
            dim: 1,
        };
        let d = diff_energy_fd(&f, &st.density, &phi, 1e-4, false).unwrap();
        assert!(d.abs() < 1e-3, "{d}");
    }

    #[test]
    fn transport_derivative_matches_pairing() {
        let u = gaussian(256, -8.0, 8.0);
        let g = TestProfile::HermiteDamped {
            order: 2,
            center: [0.0, 0.0],
            scale: 1.0,
            radius: 4.0,
        };
        let phi = ProfileDirection::Gradient {
            profile: TestProfile::bump([0.5, 0.0], 3.0),
            dim: 1,
        };
        let (fd, exact) = transport_derivative_check(&u, &g, &phi, 1e-4).unwrap();
        assert!((fd - exact).abs() < 1e-8 * (1.0 + exact.abs()), "{fd} {exact}");
    }

    #[test]
    fn projection_in_span_and_orthogonal() {
        let u = gaussian(256, -8.0, 8.0);
        let gens = nested_generators(&u, 8);
        let mob = vec![1.0; u.grid().len()];
        let basis = GradientSubspaceBasis::new(u.clone(), mob.clone(), gens.clone()).unwrap();
        let gram = basis.gram();
        assert!((gram - gram.transpose()).abs().max() < 1e-12);
        assert!(basis.min_eigenvalue() >= -1e-10 * gram.trace());

        let target = basis.weighted_generator(3);
        let p = project_onto_g(&basis, &target).unwrap();
        assert!(p.residual_norm <= 1e-8 * p.target_norm, "{p:?}");

        // complement of the span
        let mut w = gens[0].sample_gradient(u.grid()).scale(0.0);
        let grid = u.grid();
        let raw = VectorFieldSample::from_fn(*grid, |x| [(3.0 * x[0]).sin() * (-x[0] * x[0] / 8.0).exp(), 0.0]);
        let proj = project_onto_g(&basis, &raw).unwrap();
        w = w.axpy(1.0, &raw).unwrap();
        for (j, c) in proj.coefficients.iter().enumerate() {
            w = w.axpy(-c, &basis.weighted_generator(j)).unwrap();
        }
        let q = project_onto_g(&basis, &w).unwrap();
        let scale = q.target_norm;
        assert!(q.coefficients.iter().all(|c| c.abs() < 1e-6 * (1.0 + scale)), "{q:?}");
    }

    #[test]
    fn nested_generators_are_nested() {
        let u = gaussian(128, -8.0, 8.0);
        let a = nested_generators(&u, 8);
        let b = nested_generators(&u, 32);
        assert_eq!(&b[..8], &a[..]);
        assert_eq!(b.len(), 32);
        for p in &b {
            assert!(p.fits_inside(u.grid(), 3));
        }
    }
}
