//! Entropy-type energies `E(v) = ∫ η(v) + ∫ Φ v`, their weighted
//! gradients, and stationary states.
//!
//! All three modes share the kernel `k(r) = r g'(r)`:
//! `m r^{m-1}` (classical PME), `β'(r)/b(r)` (general) and `Ψ(r)`
//! (diagonal matrix case). With `B(r) = ∫₀ʳ k` one has
//! `η(r) = r g(r) − B(r)`, which avoids the logarithmic singularity of
//! `g` at the origin.

use crate::error::{Error, Result};
use crate::grid::{gradient_of, DensityField, Grid, VectorFieldSample};
use crate::laws::{Potential, ScalarLaw};
use crate::quad::{integrate, MonotoneTable};

/// Quotient forms are used only where `v ≥ FLOOR_REL · max v`.
pub const FLOOR_REL: f64 = 1e-12;
/// Surrogate integrals above this are reported as infinite.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

const TABLE_R_MIN: f64 = 1e-10;
const TABLE_R_MAX: f64 = 1e4;
const TABLE_DS: f64 = 0.005;
const TABLE_TOL: f64 = 1e-12;
/// Coarser spacing below `TABLE_R_MIN`, where `k` is nearly constant.
const TAIL_DS: f64 = 0.05;
/// `ln` of the smallest positive normal double, roughly.
const S_FLOOR: f64 = -745.0;
const S_CEIL: f64 = 709.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyMode {
    ClassicalPme {
        m: f64,
    },
    General {
        beta: ScalarLaw,
        b: ScalarLaw,
        phi: Potential,
    },
    MatrixDiagonal {
        psi: ScalarLaw,
        b_diag: ScalarLaw,
        phi: Potential,
    },
}

/// Which algebraic form of the weighted gradient to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientForm {
    /// `b(v) ∇(g(v) + Φ)`
    #[default]
    Product,
    /// `∇β̃(v)/v − b(v) D`, falling back to the product form below the floor.
    Quotient,
}

/// A main table on `[TABLE_R_MIN, TABLE_R_MAX]` in `s = ln r` and a
/// coarse continuation down to the smallest normal doubles.
#[derive(Clone, Debug)]
struct LogTable {
    main: MonotoneTable,
    tail: MonotoneTable,
}

impl LogTable {
    fn build<F: Fn(f64) -> f64>(dv: F, anchor: f64, anchor_value: f64) -> Self {
        let main = MonotoneTable::cumulative(
            &dv,
            anchor,
            anchor_value,
            TABLE_R_MIN.ln(),
            TABLE_R_MAX.ln(),
            TABLE_DS,
            TABLE_TOL,
        );
        let tail = MonotoneTable::cumulative(
            &dv,
            main.s_min(),
            main.v_min(),
            S_FLOOR,
            main.s_min(),
            TAIL_DS,
            TABLE_TOL,
        );
        Self { main, tail }
    }

    fn eval(&self, s: f64) -> Option<f64> {
        if s >= self.main.s_min() && s <= self.main.s_max() {
            Some(self.main.eval(s).0)
        } else if s < self.main.s_min() && s >= self.tail.s_min() {
            Some(self.tail.eval(s).0)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug)]
struct Tables {
    /// `g` against `s = ln r`, anchored at `g(1) = 0`.
    g: LogTable,
    /// `B(r) = ∫₀ʳ k`.
    b_int: LogTable,
    /// `Ã(r) = ∫₀ʳ Ψ b`, the effective diffusivity of the matrix case.
    a_tilde: Option<LogTable>,
}

/// `E` together with precomputed tables for `g`, `η` and, in the matrix
/// case, the effective diffusivity.
#[derive(Clone, Debug)]
pub struct EnergyFunctional {
    mode: EnergyMode,
    tables: Option<Tables>,
}

#[derive(Clone, Debug)]
pub struct StationaryState {
    pub c: f64,
    pub density: DensityField,
}

/// Discrete surrogates for the domain of `E` and of its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipReport {
    pub sup_v: f64,
    /// `∫|∇(vᵐ)/v|² v` (classical) or `∫|∇v/v|² v` (otherwise).
    pub gradient_surrogate: f64,
    /// `∫ |v log v|`.
    pub entropy_surrogate: f64,
    pub energy: f64,
    pub sup_finite: bool,
    pub gradient_finite: bool,
    pub entropy_finite: bool,
    pub member: bool,
}

fn cumulative_from_zero<F: Fn(f64) -> f64>(f: F) -> LogTable {
    let s_lo = TABLE_R_MIN.ln();
    let (head, _) = integrate(&f, 0.0, TABLE_R_MIN, 1e-30, 1e-14);
    LogTable::build(|s: f64| s.exp() * f(s.exp()), s_lo, head)
}

fn table_value<F: Fn(f64) -> f64>(lt: &LogTable, f: F, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let s = r.ln();
    let t = &lt.main;
    if let Some(v) = lt.eval(s) {
        v.max(0.0)
    } else if s < t.s_min() {
        integrate(&f, 0.0, r, 1e-300, 1e-14).0
    } else {
        let tail = integrate(|u: f64| u.exp() * f(u.exp()), t.s_max(), s, 1e-14, 1e-14).0;
        t.v_max() + tail
    }
}

impl EnergyFunctional {
    pub fn new(mode: EnergyMode) -> Result<Self> {
        let mut fnl = Self { mode, tables: None };
        match mode {
            EnergyMode::ClassicalPme { m } => {
                if !(m > 1.0) || !m.is_finite() {
                    return Err(Error::Domain(format!("classical exponent m = {m} must exceed 1")));
                }
            }
            EnergyMode::General { b, .. } | EnergyMode::MatrixDiagonal { b_diag: b, .. } => {
                for r in crate::laws::probe_points(None) {
                    let bv = b.evaluate(r);
                    if !(bv > 0.0) || !bv.is_finite() {
                        return Err(Error::Domain(format!("mobility b({r:e}) = {bv} is not positive")));
                    }
                }
                fnl.tables = Some(fnl.build_tables()?);
            }
        }
        Ok(fnl)
    }

    pub fn classical(m: f64) -> Result<Self> {
        Self::new(EnergyMode::ClassicalPme { m })
    }

    pub fn general(beta: ScalarLaw, b: ScalarLaw, phi: Potential) -> Result<Self> {
        Self::new(EnergyMode::General { beta, b, phi })
    }

    pub fn matrix_diagonal(psi: ScalarLaw, b_diag: ScalarLaw, phi: Potential) -> Result<Self> {
        Self::new(EnergyMode::MatrixDiagonal { psi, b_diag, phi })
    }

    fn build_tables(&self) -> Result<Tables> {
        let k = |r: f64| self.kernel(r);
        let g = LogTable::build(|s: f64| k(s.exp()), 0.0, 0.0);
        let mut prev = f64::NEG_INFINITY;
        for (s, v) in g.main.nodes() {
            let slope = k(s.exp());
            if !(slope > 0.0) || !slope.is_finite() || v < prev {
                return Err(Error::Domain(format!(
                    "g is not increasing at r = {:e} (g' r = {slope})",
                    s.exp()
                )));
            }
            prev = v;
        }
        let b_int = cumulative_from_zero(k);
        let a_tilde = match self.mode {
            EnergyMode::MatrixDiagonal { psi, b_diag, .. } => {
                Some(cumulative_from_zero(|r: f64| psi.evaluate(r) * b_diag.evaluate(r)))
            }
            _ => None,
        };
        Ok(Tables { g, b_int, a_tilde })
    }

    pub fn mode(&self) -> &EnergyMode {
        &self.mode
    }

    pub fn is_classical(&self) -> bool {
        matches!(self.mode, EnergyMode::ClassicalPme { .. })
    }

    pub fn potential(&self) -> Potential {
        match self.mode {
            EnergyMode::ClassicalPme { .. } => Potential::None,
            EnergyMode::General { phi, .. } | EnergyMode::MatrixDiagonal { phi, .. } => phi,
        }
    }

    /// Same functional with `Φ` replaced.
    pub fn with_potential(&self, phi: Potential) -> Self {
        let mode = match self.mode {
            EnergyMode::ClassicalPme { m } => EnergyMode::ClassicalPme { m },
            EnergyMode::General { beta, b, .. } => EnergyMode::General { beta, b, phi },
            EnergyMode::MatrixDiagonal { psi, b_diag, .. } => EnergyMode::MatrixDiagonal { psi, b_diag, phi },
        };
        Self {
            mode,
            tables: self.tables.clone(),
        }
    }

    /// `k(r) = r g'(r)`.
    pub fn kernel(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { m } => m * r.abs().powf(m - 1.0),
            EnergyMode::General { beta, b, .. } => beta.derivative(r) / b.evaluate(r),
            EnergyMode::MatrixDiagonal { psi, .. } => psi.evaluate(r),
        }
    }

    /// The mobility `b` multiplying the drift.
    pub fn mobility(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { .. } => 1.0,
            EnergyMode::General { b, .. } => b.evaluate(r),
            EnergyMode::MatrixDiagonal { b_diag, .. } => b_diag.evaluate(r),
        }
    }

    pub fn mobility_prime(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { .. } => 0.0,
            EnergyMode::General { b, .. } => b.derivative(r),
            EnergyMode::MatrixDiagonal { b_diag, .. } => b_diag.derivative(r),
        }
    }

    /// Effective diffusivity `β̃` with `∂ₜu = Δβ̃(u) − div(D b(u) u)`.
    pub fn diffusivity(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { m } => r.abs().powf(m - 1.0) * r,
            EnergyMode::General { beta, .. } => beta.evaluate(r),
            EnergyMode::MatrixDiagonal { psi, b_diag, .. } => {
                let t = self.tables.as_ref().and_then(|t| t.a_tilde.as_ref());
                table_value(t.expect("matrix tables"), |w| psi.evaluate(w) * b_diag.evaluate(w), r)
            }
        }
    }

    pub fn diffusivity_prime(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { m } => m * r.abs().powf(m - 1.0),
            EnergyMode::General { beta, .. } => beta.derivative(r),
            EnergyMode::MatrixDiagonal { psi, b_diag, .. } => psi.evaluate(r) * b_diag.evaluate(r),
        }
    }

    fn tables(&self) -> &Tables {
        self.tables.as_ref().expect("non-classical modes carry tables")
    }

    /// `g` at `s = ln r` for any finite `s`.
    fn g_at_log(&self, s: f64) -> f64 {
        let lt = &self.tables().g;
        if let Some(v) = lt.eval(s) {
            return v;
        }
        let t = &lt.main;
        let k = |u: f64| self.kernel(u.exp());
        if s < t.s_min() {
            lt.tail.v_min() - integrate(k, s, lt.tail.s_min(), 1e-14, 1e-15).0
        } else if s > t.s_max() {
            t.v_max() + integrate(k, t.s_max(), s, 1e-14, 1e-15).0
        } else {
            t.eval(s).0
        }
    }

    fn g_unchecked(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { m } => m / (m - 1.0) * (r.powf(m - 1.0) - 1.0),
            _ => {
                if r <= 0.0 {
                    return self.g_at_zero();
                }
                self.g_at_log(r.ln())
            }
        }
    }

    /// `g` cell-wise, with `g(0+)` (possibly `-∞`) on empty cells.
    pub fn g_values(&self, v: &[f64]) -> Vec<f64> {
        let g0 = self.g_at_zero();
        v.iter()
            .map(|&x| if x > 0.0 { self.g_unchecked(x) } else { g0 })
            .collect()
    }

    /// `lim_{r→0} g(r)`, possibly `-∞`.
    pub fn g_at_zero(&self) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { m } => -m / (m - 1.0),
            _ => {
                if self.kernel(0.0) > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    self.g_at_log(S_FLOOR)
                }
            }
        }
    }

    pub fn g_of(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("g is defined for r > 0, got {r}")));
        }
        Ok(self.g_unchecked(r))
    }

    /// `g⁻¹(y)`, with `0` below the range of `g`.
    pub fn g_inverse(&self, y: f64) -> f64 {
        if let EnergyMode::ClassicalPme { m } = self.mode {
            let base = 1.0 + (m - 1.0) * y / m;
            return if base <= 0.0 { 0.0 } else { base.powf(1.0 / (m - 1.0)) };
        }
        if y.is_nan() {
            return f64::NAN;
        }
        let lt = &self.tables().g;
        let t = &lt.main;
        if y >= t.v_min() && y <= t.v_max() {
            return t.solve(y).exp();
        }
        if y >= lt.tail.v_min() && y < t.v_min() && lt.tail.v_max() > lt.tail.v_min() {
            return lt.tail.solve(y).exp();
        }
        let (mut lo, mut hi) = if y < t.v_min() {
            if self.g_at_log(S_FLOOR) >= y {
                return 0.0;
            }
            (S_FLOOR, t.s_min())
        } else {
            let mut hi = t.s_max();
            loop {
                let next = (hi + (hi - t.s_max()).max(1.0) * 2.0).min(S_CEIL);
                if self.g_at_log(next) >= y {
                    break (hi, next);
                }
                if next >= S_CEIL {
                    return f64::INFINITY;
                }
                hi = next;
            }
        };
        // Newton in s with bisection safeguard; dg/ds = k(e^s).
        let k_lo = self.kernel(lo.exp());
        let mut s = if k_lo > 0.0 && y < t.v_min() {
            (t.s_min() + (y - t.v_min()) / self.kernel(TABLE_R_MIN)).clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..200 {
            let r = self.g_at_log(s) - y;
            if r.abs() <= 1e-14 * y.abs().max(1.0) {
                break;
            }
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = self.kernel(s.exp());
            let next = s - r / d;
            s = if d > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * s.abs().max(1.0) {
                break;
            }
        }
        s.exp()
    }

    fn eta_unchecked(&self, r: f64) -> f64 {
        match self.mode {
            EnergyMode::ClassicalPme { m } => (r.powf(m) - m * r) / (m - 1.0),
            _ => {
                if r <= 0.0 {
                    return 0.0;
                }
                let b_int = table_value(&self.tables().b_int, |w| self.kernel(w), r);
                r * self.g_unchecked(r) - b_int
            }
        }
    }

    /// `η(r) = ∫₀ʳ g`.
    pub fn eta(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("eta needs r >= 0, got {r}")));
        }
        Ok(self.eta_unchecked(r))
    }

    /// Independent oracle: `η(r)` as the iterated integral
    /// `∫₀ʳ ∫₁ˢ k(w)/w dw ds`, evaluated without the tables.
    pub fn eta_by_double_quadrature(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let g = |x: f64| integrate(|t: f64| self.kernel(t.exp()), 0.0, x.ln(), 1e-15, 1e-15).0;
        // s = r e^{-u} tames the logarithmic endpoint singularity.
        let u_max = 60.0 + r.ln().abs();
        integrate(|u: f64| r * (-u).exp() * g(r * (-u).exp()), 0.0, u_max, 1e-15, 1e-14).0
    }

    /// Node-wise monotonicity of `g` and convexity of `η` on the tables.
    pub fn check_tables(&self) -> bool {
        let Some(t) = &self.tables else {
            return true;
        };
        let mut prev = f64::NEG_INFINITY;
        t.g.main.nodes().all(|(s, v)| {
            let ok = v >= prev && self.kernel(s.exp()) > 0.0;
            prev = v;
            ok
        })
    }

    /// Largest accumulated quadrature bound of the `g` table, relative to
    /// `max(1, |g|)` at each node.
    pub fn g_table_error_bound(&self) -> f64 {
        self.tables
            .as_ref()
            .map(|t| {
                t.g.main
                    .nodes()
                    .zip(t.g.main.error_bounds())
                    .map(|((_, v), e)| e / v.abs().max(1.0))
                    .fold(0.0, f64::max)
            })
            .unwrap_or(0.0)
    }

    /// `[g(r_min), g(r_max)]` over the tabulated range.
    pub fn g_table_range(&self) -> (f64, f64) {
        match &self.tables {
            Some(t) => (t.g.main.v_min(), t.g.main.v_max()),
            None => (self.g_unchecked(TABLE_R_MIN), self.g_unchecked(TABLE_R_MAX)),
        }
    }

    pub fn potential_values(&self, grid: &Grid) -> Vec<f64> {
        let phi = self.potential();
        let dim = grid.dim();
        grid.sample(|p| phi.value(p, dim))
    }

    pub fn energy_value(&self, field: &DensityField) -> f64 {
        let vol = field.grid().cell_volume();
        if let EnergyMode::ClassicalPme { m } = self.mode {
            let s: f64 = field.values().iter().map(|v| v.max(0.0).powf(m)).sum();
            return (s * vol - m) / (m - 1.0);
        }
        let phi = self.potential_values(field.grid());
        field
            .values()
            .iter()
            .zip(&phi)
            .map(|(&v, &p)| {
                let v = v.max(0.0);
                self.eta_unchecked(v) + p * v
            })
            .sum::<f64>()
            * vol
    }

    /// Absolute floor below which a cell is treated as outside the support.
    pub fn floor(field: &DensityField) -> f64 {
        FLOOR_REL * field.max()
    }

    /// `ξ = g(v) + Φ`, the potential whose gradient drives the flow.
    ///
    /// Empty cells take `g(0+)` when finite and `g(floor)` otherwise.
    pub fn chemical_potential(&self, field: &DensityField) -> Vec<f64> {
        let g0 = self.g_at_zero();
        let g_empty = if g0.is_finite() {
            g0
        } else {
            self.g_unchecked(Self::floor(field).max(f64::MIN_POSITIVE))
        };
        let phi = self.potential_values(field.grid());
        field
            .values()
            .iter()
            .zip(&phi)
            .map(|(&v, &p)| if v > 0.0 { self.g_unchecked(v) } else { g_empty } + p)
            .collect()
    }

    pub fn membership(&self, field: &DensityField) -> MembershipReport {
        let grid = field.grid();
        let v = field.values();
        let vol = grid.cell_volume();
        let floor = Self::floor(field).max(f64::MIN_POSITIVE);
        let sup_v = field.max();
        let gradient_surrogate = match self.mode {
            EnergyMode::ClassicalPme { m } => {
                let vm: Vec<f64> = v.iter().map(|x| x.max(0.0).powf(m)).collect();
                let mut s = 0.0;
                for axis in 0..grid.dim() {
                    let d = crate::grid::partial(&vm, grid, axis);
                    for (c, dv) in d.iter().enumerate() {
                        if v[c] >= floor {
                            s += dv * dv / v[c];
                        }
                    }
                }
                s * vol
            }
            _ => {
                let mut s = 0.0;
                for axis in 0..grid.dim() {
                    let h = grid.spacing(axis);
                    for c in 0..grid.len() {
                        if let Some(n) = grid.upper_neighbor(c, axis) {
                            let lo = v[c].min(v[n]);
                            if v[c].max(v[n]) < floor {
                                continue;
                            }
                            let dv = v[n] - v[c];
                            s += dv * dv / (h * h * lo.max(floor));
                        }
                    }
                }
                s * vol
            }
        };
        let entropy_surrogate = v.iter().filter(|x| **x > 0.0).map(|x| (x * x.ln()).abs()).sum::<f64>() * vol;
        let energy = self.energy_value(field);
        let sup_finite = sup_v.is_finite() && sup_v < BLOWUP_THRESHOLD;
        let gradient_finite = gradient_surrogate.is_finite() && gradient_surrogate < BLOWUP_THRESHOLD;
        let entropy_finite =
            entropy_surrogate.is_finite() && entropy_surrogate < BLOWUP_THRESHOLD && energy.is_finite();
        MembershipReport {
            sup_v,
            gradient_surrogate,
            entropy_surrogate,
            energy,
            sup_finite,
            gradient_finite,
            entropy_finite,
            member: sup_finite && gradient_finite && entropy_finite,
        }
    }

    /// The weighted gradient in product form, `b(v) ∇(g(v) + Φ)`.
    pub fn gradient_field(&self, field: &DensityField) -> Result<VectorFieldSample> {
        self.gradient_field_with(field, GradientForm::Product)
    }

    pub fn gradient_field_with(&self, field: &DensityField, form: GradientForm) -> Result<VectorFieldSample> {
        let report = self.membership(field);
        if !report.member {
            return Err(Error::Domain(format!(
                "density outside the energy domain (sup v = {:e}, gradient surrogate = {:e})",
                report.sup_v, report.gradient_surrogate
            )));
        }
        let grid = *field.grid();
        let v = field.values();
        let mob: Vec<f64> = v.iter().map(|&x| self.mobility(x.max(0.0))).collect();
        let product = gradient_of(&self.chemical_potential(field), &grid)?.scaled(&mob);
        if form == GradientForm::Product {
            return Ok(product);
        }
        let floor = Self::floor(field);
        let diff: Vec<f64> = v.iter().map(|&x| self.diffusivity(x.max(0.0))).collect();
        let grad_diff = gradient_of(&diff, &grid)?;
        let phi = self.potential();
        let dim = grid.dim();
        let mut comps = product.components().to_vec();
        for c in 0..grid.len() {
            if v[c] < floor || v[c] <= 0.0 {
                continue;
            }
            let gp = phi.gradient(grid.center(c), dim);
            for (k, comp) in comps.iter_mut().enumerate() {
                comp[c] = grad_diff.component(k)[c] / v[c] + mob[c] * gp[k];
            }
        }
        VectorFieldSample::new(grid, comps)
    }

    /// `u∞ = g⁻¹(c − Φ)` with `c` fixed by unit mass.
    pub fn stationary_state(&self, grid: &Grid) -> Result<StationaryState> {
        let phi = self.potential();
        if self.is_classical() || !phi.is_confining() {
            return Err(Error::NoConfinement(format!(
                "stationary states need a confining potential, got {phi}"
            )));
        }
        let phis = self.potential_values(grid);
        let vol = grid.cell_volume();
        let mass = |c: f64| -> (f64, f64) {
            let mut m = 0.0;
            let mut dm = 0.0;
            for p in &phis {
                let u = self.g_inverse(c - p);
                m += u;
                if u > 0.0 {
                    dm += u / self.kernel(u);
                }
            }
            (m * vol, dm * vol)
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while mass(lo).0 > 1.0 {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::NoConfinement("mass bracket not found below c = -1e6".into()));
            }
        }
        while mass(hi).0 < 1.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NoConfinement("mass bracket not found above c = 1e6".into()));
            }
        }
        let mut c = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (m, dm) = mass(c);
            let r = m - 1.0;
            if r.abs() <= 1e-13 {
                break;
            }
            if r > 0.0 {
                hi = c;
            } else {
                lo = c;
            }
            let next = c - r / dm;
            c = if dm > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * c.abs().max(1.0) {
                break;
            }
        }
        let values: Vec<f64> = phis.iter().map(|p| self.g_inverse(c - p)).collect();
        let density = DensityField::new(*grid, values)?;
        if (density.mass() - 1.0).abs() > 1e-10 {
            return Err(Error::NoConfinement(format!(
                "mass equation unresolved: |M(c) - 1| = {:e}",
                (density.mass() - 1.0).abs()
            )));
        }
        Ok(StationaryState { c, density })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(sigma: f64, phi: Potential) -> EnergyFunctional {
        EnergyFunctional::general(ScalarLaw::Linear { sigma }, ScalarLaw::Constant { c: 1.0 }, phi).unwrap()
    }

    fn gpme() -> EnergyFunctional {
        EnergyFunctional::general(
            ScalarLaw::LinearPlusPower { gamma: 0.5, m: 3.0 },
            ScalarLaw::BoundedRational { b0: 1.0, c: 1.0 },
            Potential::Quartic { a: 0.1, offset: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn eta_closed_forms() {
        let cl = EnergyFunctional::classical(2.0).unwrap();
        assert_eq!(cl.eta(1.0).unwrap(), -1.0);
        let h = heat(1.0, Potential::None);
        assert!((h.eta(1.0).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(h.eta(0.0).unwrap(), 0.0);
        for r in [1e-8f64, 1e-3, 0.5, 2.0, 10.0, 3e3, 5e4] {
            let exact = r * (r.ln() - 1.0);
            assert!((h.eta(r).unwrap() - exact).abs() <= 1e-10 * (1.0 + r), "{r}");
        }
        assert!(matches!(h.eta(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn g_and_inverse_closed_forms() {
        let h = heat(1.0, Potential::None);
        assert_eq!(h.g_of(1.0).unwrap(), 0.0);
        assert!((h.g_of(7.0).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert!((h.g_inverse(1.3) - 1.3f64.exp()).abs() < 1e-12 * 1.3f64.exp());
        let h2 = heat(2.0, Potential::None);
        assert!((h2.g_inverse(1.0) - 0.5f64.exp()).abs() < 1e-12);
        assert!(matches!(h.g_of(0.0), Err(Error::Domain(_))));
        assert_eq!(EnergyFunctional::classical(3.0).unwrap().g_of(1.0).unwrap(), 0.0);
        assert_eq!(gpme().g_of(1.0).unwrap(), 0.0);
    }

    #[test]
    fn g_inverse_outside_table() {
        let h = heat(1.0, Potential::None);
        for y in [-40.0, -300.0, 12.0, 50.0] {
            let r = h.g_inverse(y);
            assert!((r.ln() - y).abs() < 1e-12 * y.abs(), "{y}: {r}");
            assert!((h.g_of(r).unwrap() - y).abs() < 1e-9);
        }
        assert_eq!(h.g_inverse(-1e4), 0.0);
        // power-law β gives g(0+) finite, so g⁻¹ vanishes below it
        let p = EnergyFunctional::general(
            ScalarLaw::Power { m: 2.0 },
            ScalarLaw::Constant { c: 1.0 },
            Potential::None,
        )
        .unwrap();
        assert!((p.g_at_zero() + 2.0).abs() < 1e-9);
        assert_eq!(p.g_inverse(-2.5), 0.0);
        assert!((p.g_inverse(0.4) - 1.2).abs() < 1e-10);
    }

    #[test]
    fn general_eta_matches_double_integral() {
        let f = gpme();
        for r in [1e-4, 0.3, 1.0, 2.5, 40.0] {
            let a = f.eta(r).unwrap();
            let b = f.eta_by_double_quadrature(r);
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{r}: {a} vs {b}");
        }
        let cl = EnergyFunctional::classical(2.5).unwrap();
        for r in [0.0, 0.2, 1.0, 3.0] {
            assert!((cl.eta(r).unwrap() - cl.eta_by_double_quadrature(r)).abs() < 1e-10);
        }
    }

    #[test]
    fn tables_are_monotone_with_small_error() {
        assert!(gpme().check_tables());
        assert!(gpme().g_table_error_bound() < 1e-8);
    }

    #[test]
    fn rejects_nonmonotone_g() {
        let bad = EnergyFunctional::general(
            ScalarLaw::BoundedRational { b0: 1.0, c: 1.0 },
            ScalarLaw::Constant { c: 1.0 },
            Potential::None,
        );
        assert!(matches!(bad, Err(Error::Domain(_))));
        assert!(EnergyFunctional::classical(1.0).is_err());
    }

    #[test]
    fn energy_values_on_uniform_density() {
        let grid = Grid::line(0.0, 1.0, 50).unwrap();
        let u = DensityField::from_fn(grid, |_| 1.0).unwrap();
        let cl = EnergyFunctional::classical(2.0).unwrap();
        assert!((cl.energy_value(&u) + 1.0).abs() < 1e-12);
        let h = heat(1.0, Potential::None);
        assert!((h.energy_value(&u) + 1.0).abs() < 1e-12);
        let k = 3.0;
        let hk = heat(1.0, Potential::Quadratic { a: 0.0, offset: k });
        assert!((hk.energy_value(&u) - h.energy_value(&u) - k).abs() < 1e-12);
    }

    #[test]
    fn heat_stationary_state_is_gaussian() {
        let grid = Grid::line(-10.0, 10.0, 400).unwrap();
        let f = heat(1.0, Potential::Quadratic { a: 0.5, offset: 1.0 });
        let st = f.stationary_state(&grid).unwrap();
        assert!((st.density.mass() - 1.0).abs() < 1e-10);
        // discrete normalization of e^{-x²/2} on this grid equals √(2π) to ~1e-16
        let c_exact = 1.0 - (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((st.c - c_exact).abs() < 1e-9, "{}", st.c);
        for (c, v) in st.density.values().iter().enumerate() {
            let x = grid.center(c)[0];
            let g = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((v - g).abs() < 1e-9);
        }
        let grad = f.gradient_field(&st.density).unwrap();
        let floor = EnergyFunctional::floor(&st.density);
        for c in 0..grid.len() {
            if st.density.values()[c] >= floor {
                assert!(grad.at(c)[0].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stationary_state_offset_shift_and_sigma() {
        let grid = Grid::line(-8.0, 8.0, 128).unwrap();
        let a = heat(1.0, Potential::Quadratic { a: 0.5, offset: 1.0 })
            .stationary_state(&grid)
            .unwrap();
        let b = heat(1.0, Potential::Quadratic { a: 0.5, offset: 2.0 })
            .stationary_state(&grid)
            .unwrap();
        assert!((b.c - a.c - 1.0).abs() < 1e-9);
        assert!(a.density.l1_distance(&b.density).unwrap() < 1e-10);

        let s2 = heat(2.0, Potential::Quadratic { a: 0.5, offset: 1.0 })
            .stationary_state(&grid)
            .unwrap();
        let raw = grid.sample(|p| (-(1.0 + 0.5 * p[0] * p[0]) / 2.0).exp());
        let (expected, _) = DensityField::new(grid, raw).unwrap().normalized().unwrap();
        assert!(s2.density.l1_distance(&expected).unwrap() < 1e-9);
    }

    #[test]
    fn stationary_state_needs_confinement() {
        let grid = Grid::line(-2.0, 2.0, 16).unwrap();
        assert!(matches!(
            heat(1.0, Potential::None).stationary_state(&grid),
            Err(Error::NoConfinement(_))
        ));
    }

    #[test]
    fn gpme_stationary_state_has_vanishing_gradient() {
        let grid = Grid::line(-3.5, 3.5, 256).unwrap();
        let f = gpme();
        let st = f.stationary_state(&grid).unwrap();
        let grad = f.gradient_field(&st.density).unwrap();
        assert!(grad.sup_norm() < 1e-6, "{}", grad.sup_norm());
    }

    #[test]
    fn classical_gradient_forms_agree() {
        let grid = Grid::line(-3.0, 3.0, 200).unwrap();
        let u = DensityField::from_fn(grid, |p| 1.0 + 0.5 * p[0].sin()).unwrap();
        let (u, _) = u.normalized().unwrap();
        let f = EnergyFunctional::classical(2.0).unwrap();
        let a = f.gradient_field_with(&u, GradientForm::Quotient).unwrap();
        let b = f.gradient_field_with(&u, GradientForm::Product).unwrap();
        let diff = a.axpy(-1.0, &b).unwrap();
        let h = grid.h();
        let interior: f64 = (2..grid.len() - 2).map(|c| diff.at(c)[0].abs()).fold(0.0, f64::max);
        assert!(interior < 10.0 * h * h, "{interior}");
    }

    #[test]
    fn heat_gibbs_gradient_vanishes_in_quotient_form() {
        let grid = Grid::line(-8.0, 8.0, 512).unwrap();
        let f = heat(1.0, Potential::Quadratic { a: 0.5, offset: 1.0 });
        let st = f.stationary_state(&grid).unwrap();
        let q = f.gradient_field_with(&st.density, GradientForm::Quotient).unwrap();
        let h = grid.h();
        let mut worst: f64 = 0.0;
        for c in 2..grid.len() - 2 {
            if grid.center(c)[0].abs() < 4.0 {
                worst = worst.max(q.at(c)[0].abs());
            }
        }
        assert!(worst < 20.0 * h * h, "{worst}");
    }

    #[test]
    fn membership_gaussian_and_spike() {
        let f = heat(1.0, Potential::None);
        let grid = Grid::line(-8.0, 8.0, 256).unwrap();
        let gauss = DensityField::from_fn(grid, |p| (-0.5 * p[0] * p[0]).exp())
            .unwrap()
            .normalized()
            .unwrap()
            .0;
        assert!(f.membership(&gauss).member);

        let mut prev = 0.0;
        for n in [64, 256, 1024] {
            let g = Grid::line(-1.0, 1.0, n).unwrap();
            let mut v = vec![0.0; n];
            v[n / 2] = 1.0 / g.h();
            let spike = DensityField::new(g, v).unwrap();
            let rep = f.membership(&spike);
            assert!(!rep.member);
            assert!(rep.gradient_surrogate > prev);
            prev = rep.gradient_surrogate;
        }
        assert!(f
            .gradient_field(
                &DensityField::new(Grid::line(-1.0, 1.0, 8).unwrap(), {
                    let mut v = vec![0.0; 8];
                    v[4] = 4.0;
                    v
                })
                .unwrap()
            )
            .is_err());
    }

    #[test]
    fn matrix_mode_with_constant_psi_equals_heat() {
        let phi = Potential::Quadratic { a: 0.5, offset: 1.0 };
        let m = EnergyFunctional::matrix_diagonal(ScalarLaw::Constant { c: 1.0 }, ScalarLaw::Constant { c: 2.0 }, phi)
            .unwrap();
        let h =
            EnergyFunctional::general(ScalarLaw::Linear { sigma: 2.0 }, ScalarLaw::Constant { c: 2.0 }, phi).unwrap();
        for r in [1e-6, 0.1, 1.0, 7.5] {
            assert!((m.eta(r).unwrap() - h.eta(r).unwrap()).abs() < 1e-11);
            assert!((m.diffusivity(r) - 2.0 * r).abs() < 1e-11 * (1.0 + r));
        }
    }
}
