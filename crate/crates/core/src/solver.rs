//! Conservative finite-volume integration of
//! `∂ₜu = Δβ̃(u) − div(D b(u) u)` with `D = −∇Φ` and zero-flux walls.
//!
//! The face flux is written as `−M Δ(g(u) + Φ)/h` with the secant mobility
//! `M = Δβ̃/Δg`. Its diffusive part is exactly `−Δβ̃/h`, the scheme has
//! `u∞ = g⁻¹(c − Φ)` as an exact discrete steady state, and the discrete
//! energy dissipates at the rate `Σ M (Δξ)²/h²`.

use crate::energy::{EnergyFunctional, EnergyMode};
use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid, POSITIVITY_TOL};
use crate::laws::{validate_hypothesis1, Variant};

/// Below this relative jump the secant mobility is replaced by `b(ū)ū`.
const SECANT_SWITCH: f64 = 1e-6;
const MAX_RETRIES: usize = 30;
/// Layers and level of the domain-margin assertion.
pub const MARGIN_LAYERS: usize = 2;
pub const MARGIN_LEVEL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    ExplicitEuler,
    /// Diffusion linearized about `uⁿ`, drift explicit.
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StoreRule {
    /// Every `n`-th step.
    Every(usize),
    /// At `t0 + k Δ`; steps are shortened to land on these times.
    Interval(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub cfl_safety: f64,
    pub t0: f64,
    pub t1: f64,
    pub max_dt: f64,
    /// Clip values in `[-POSITIVITY_TOL, 0)` to zero and count them.
    pub positivity_clip_log: bool,
    pub store: StoreRule,
    /// Fail once mass reaches the outer layers.
    pub margin_check: bool,
    pub max_steps: usize,
}

impl SolverConfig {
    pub fn new(t0: f64, t1: f64, max_dt: f64) -> Self {
        Self {
            scheme: Scheme::ExplicitEuler,
            cfl_safety: 0.45,
            t0,
            t1,
            max_dt,
            positivity_clip_log: false,
            store: StoreRule::Every(1),
            margin_check: true,
            max_steps: 50_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 >= 0.0 && self.t1 >= self.t0 && self.t1.is_finite()) {
            return Err(Error::Domain(format!(
                "need t1 >= t0 >= 0, got t0 = {}, t1 = {}",
                self.t0, self.t1
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Domain(format!(
                "cfl_safety = {} outside (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.max_dt > 0.0) {
            return Err(Error::Domain(format!("max_dt = {} must be positive", self.max_dt)));
        }
        match self.store {
            StoreRule::Every(0) => Err(Error::Domain("store stride must be positive".into())),
            StoreRule::Interval(d) if !(d > 0.0) => Err(Error::Domain(format!("store interval {d} must be positive"))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    /// `|mass after − mass before|`.
    pub mass_drift: f64,
    pub min_value: f64,
    pub max_value: f64,
    /// Halvings of `dt` needed to keep the step nonnegative.
    pub retries: usize,
    pub clipped: usize,
}

/// The discrete solution path `t ↦ u(t)`.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityField>,
    /// Number of steps taken before each stored state.
    pub step_index: Vec<usize>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Failed structural checks; recorded, never fatal.
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn last(&self) -> Option<&DensityField> {
        self.states.last()
    }

    /// `max_k |mass(u_k) − mass(u_0)|` over stored states.
    pub fn total_mass_drift(&self) -> f64 {
        let Some(first) = self.states.first() else {
            return 0.0;
        };
        let m0 = first.mass();
        self.states.iter().map(|s| (s.mass() - m0).abs()).fold(0.0, f64::max)
    }

    pub fn max_step_mass_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.mass_drift).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        let stored = self.states.iter().map(|s| s.min()).fold(f64::INFINITY, f64::min);
        self.diagnostics.iter().map(|d| d.min_value).fold(stored, f64::min)
    }

    /// Largest step taken between stored states `a` and `b`.
    pub fn max_dt_between(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = (self.step_index[a.min(b)], self.step_index[a.max(b)]);
        self.diagnostics[lo..hi].iter().map(|d| d.dt).fold(0.0, f64::max)
    }
}

/// Receives every stored state.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &DensityField) -> Result<()>;
}

impl<F: FnMut(f64, &DensityField) -> Result<()>> Observer for F {
    fn observe(&mut self, t: f64, state: &DensityField) -> Result<()> {
        self(t, state)
    }
}

/// Potential at cell centres and the sup of the drift, fixed per grid.
#[derive(Clone, Debug)]
struct Operator<'a> {
    fnl: &'a EnergyFunctional,
    grid: Grid,
    phi: Vec<f64>,
    drift_sup: f64,
}

struct Rates {
    rate: Vec<f64>,
    dissipation: f64,
}

impl<'a> Operator<'a> {
    fn new(fnl: &'a EnergyFunctional, grid: &Grid) -> Self {
        let phi = fnl.potential_values(grid);
        let pot = fnl.potential();
        let dim = grid.dim();
        let drift_sup = grid
            .centers()
            .iter()
            .map(|&p| {
                let d = pot.drift(p, dim);
                (d[0] * d[0] + d[1] * d[1]).sqrt()
            })
            .fold(0.0, f64::max);
        Self {
            fnl,
            grid: *grid,
            phi,
            drift_sup,
        }
    }

    /// Flux from `l` to `r` across a face of width `h`, and the mobility used.
    #[allow(clippy::too_many_arguments)]
    fn face(&self, ul: f64, ur: f64, gl: f64, gr: f64, bl: f64, br: f64, dphi: f64, h: f64) -> (f64, f64) {
        let scale = ul.abs().max(ur.abs());
        if scale == 0.0 {
            return (0.0, 0.0);
        }
        if (ur - ul).abs() <= SECANT_SWITCH * scale {
            let um = 0.5 * (ul + ur);
            let m = self.fnl.mobility(um) * um;
            return (-m * ((gr - gl) + dphi) / h, m);
        }
        let dg = gr - gl;
        if dg.is_finite() && dg != 0.0 {
            let m = ((br - bl) / dg).max(0.0);
            (-m * (dg + dphi) / h, m)
        } else {
            (-(br - bl) / h, 0.0)
        }
    }

    fn rates(&self, v: &[f64]) -> Rates {
        let grid = &self.grid;
        let g = self.fnl.g_values(v);
        let beta: Vec<f64> = v.iter().map(|&x| self.fnl.diffusivity(x.max(0.0))).collect();
        let mut rate = vec![0.0; v.len()];
        let mut dissipation = 0.0;
        for axis in 0..grid.dim() {
            let h = grid.spacing(axis);
            for c in 0..grid.len() {
                let Some(n) = grid.upper_neighbor(c, axis) else {
                    continue;
                };
                let dphi = self.phi[n] - self.phi[c];
                let (f, m) = self.face(v[c], v[n], g[c], g[n], beta[c], beta[n], dphi, h);
                rate[c] -= f / h;
                rate[n] += f / h;
                if m > 0.0 {
                    let dxi = (g[n] - g[c]) + dphi;
                    dissipation += m * dxi * dxi / (h * h);
                }
            }
        }
        Rates {
            rate,
            dissipation: dissipation * grid.cell_volume(),
        }
    }

    /// `(max β̃', max |(b u)'|)` over realized values and an even sweep of `[0, max u]`.
    fn derivative_bounds(&self, v: &[f64]) -> (f64, f64) {
        let top = v.iter().copied().fold(0.0, f64::max);
        let sweep = (0..64).map(|k| top * k as f64 / 63.0);
        let mut db: f64 = 0.0;
        let mut dm: f64 = 0.0;
        for r in v.iter().map(|x| x.max(0.0)).chain(sweep) {
            db = db.max(self.fnl.diffusivity_prime(r).abs());
            dm = dm.max((self.fnl.mobility_prime(r) * r + self.fnl.mobility(r)).abs());
        }
        (db, dm)
    }

    fn stable_dt(&self, v: &[f64], safety: f64, max_dt: f64, scheme: Scheme) -> f64 {
        let h = (0..self.grid.dim())
            .map(|k| self.grid.spacing(k))
            .fold(f64::INFINITY, f64::min);
        let dim = self.grid.dim() as f64;
        let (db, dm) = self.derivative_bounds(v);
        let diffusive = match scheme {
            Scheme::ExplicitEuler => h * h / (2.0 * dim * db),
            Scheme::SemiImplicit => h / (2.0 * dim * db),
        };
        let drift = h / (self.drift_sup * dm);
        let bound = diffusive.min(drift);
        if bound.is_finite() && bound > 0.0 {
            (safety * bound).min(max_dt)
        } else {
            max_dt
        }
    }

    fn explicit(&self, v: &[f64], dt: f64) -> Vec<f64> {
        let r = self.rates(v).rate;
        v.iter().zip(&r).map(|(x, d)| x + dt * d).collect()
    }

    /// `L w` with zero-flux walls.
    fn laplacian(&self, w: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let mut out = vec![0.0; w.len()];
        for axis in 0..grid.dim() {
            let h2 = grid.spacing(axis).powi(2);
            for c in 0..grid.len() {
                if let Some(n) = grid.upper_neighbor(c, axis) {
                    let f = (w[n] - w[c]) / h2;
                    out[c] += f;
                    out[n] -= f;
                }
            }
        }
        out
    }

    /// Solves `δ − dt L(a δ) = dt R` through `w = a δ`.
    ///
    /// On `{a > 0}` the system `w/a − dt L w = dt R` is symmetric positive
    /// definite; elsewhere `w = 0`. The increment is then rebuilt as
    /// `dt R + dt L w`, which conserves mass whatever the solver accuracy.
    fn semi_implicit(&self, v: &[f64], dt: f64) -> Vec<f64> {
        let r = self.rates(v).rate;
        let a: Vec<f64> = v.iter().map(|&x| self.fnl.diffusivity_prime(x.max(0.0))).collect();
        let rhs: Vec<f64> = r
            .iter()
            .zip(&a)
            .map(|(ri, ai)| if *ai > 0.0 { dt * ri } else { 0.0 })
            .collect();
        let w = if self.grid.dim() == 1 {
            self.solve_tridiagonal(&a, &rhs, dt)
        } else {
            self.solve_pcg(&a, &rhs, dt)
        };
        let lw = self.laplacian(&w);
        v.iter()
            .zip(r.iter().zip(&lw))
            .map(|(x, (ri, li))| x + dt * ri + dt * li)
            .collect()
    }

    fn apply_system(&self, a: &[f64], w: &[f64], dt: f64) -> Vec<f64> {
        let lw = self.laplacian(w);
        (0..w.len())
            .map(|i| if a[i] > 0.0 { w[i] / a[i] - dt * lw[i] } else { w[i] })
            .collect()
    }

    fn system_diagonal(&self, a: &[f64], dt: f64) -> Vec<f64> {
        let grid = &self.grid;
        let mut d = vec![0.0; a.len()];
        for axis in 0..grid.dim() {
            let h2 = grid.spacing(axis).powi(2);
            for c in 0..grid.len() {
                if let Some(n) = grid.upper_neighbor(c, axis) {
                    d[c] += dt / h2;
                    d[n] += dt / h2;
                }
            }
        }
        (0..a.len())
            .map(|i| if a[i] > 0.0 { 1.0 / a[i] + d[i] } else { 1.0 })
            .collect()
    }

    fn solve_tridiagonal(&self, a: &[f64], rhs: &[f64], dt: f64) -> Vec<f64> {
        let n = a.len();
        let diag = self.system_diagonal(a, dt);
        let off = dt / self.grid.spacing(0).powi(2);
        // coupling between i and i+1
        let lower: Vec<f64> = (0..n.saturating_sub(1))
            .map(|i| if a[i] > 0.0 && a[i + 1] > 0.0 { -off } else { 0.0 })
            .collect();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = diag[0];
        if n > 1 {
            c[0] = lower[0] / denom;
        }
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = diag[i] - lower[i - 1] * c[i - 1];
            if i < n - 1 {
                c[i] = lower[i] / denom;
            }
            d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d
    }

    fn solve_pcg(&self, a: &[f64], rhs: &[f64], dt: f64) -> Vec<f64> {
        let n = a.len();
        let diag = self.system_diagonal(a, dt);
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let mut w = vec![0.0; n];
        let mut res = rhs.to_vec();
        let mut z: Vec<f64> = res.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&res, &z);
        let target = 1e-15 * dot(rhs, rhs).sqrt();
        for _ in 0..10 * n {
            if dot(&res, &res).sqrt() <= target {
                break;
            }
            let ap = self.apply_system(a, &p, dt);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                w[i] += alpha * p[i];
                res[i] -= alpha * ap[i];
            }
            z = res.iter().zip(&diag).map(|(r, d)| r / d).collect();
            let rz_new = dot(&res, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        w
    }
}

/// Time derivative of `u` under the semi-discrete scheme.
pub fn rate_of_change(u: &DensityField, fnl: &EnergyFunctional) -> Vec<f64> {
    Operator::new(fnl, u.grid()).rates(u.values()).rate
}

/// `Σ_faces M (Δξ)²/h² vol`, the semi-discrete energy dissipation rate;
/// the face quadrature of `∫ b(u) u |∇(g(u) + Φ)|²`.
pub fn dissipation_rate(u: &DensityField, fnl: &EnergyFunctional) -> f64 {
    Operator::new(fnl, u.grid()).rates(u.values()).dissipation
}

/// Stable explicit step size scaled by `safety`, clamped to `max_dt`.
pub fn cfl_dt(u: &DensityField, fnl: &EnergyFunctional, safety: f64, max_dt: f64) -> f64 {
    Operator::new(fnl, u.grid()).stable_dt(u.values(), safety, max_dt, Scheme::ExplicitEuler)
}

fn finish(grid: Grid, values: Vec<f64>) -> Result<DensityField> {
    if let Some((cell, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < -POSITIVITY_TOL)
    {
        return Err(Error::Positivity { cell, value });
    }
    DensityField::new(grid, values)
}

/// One explicit Euler step.
pub fn step(u: &DensityField, fnl: &EnergyFunctional, dt: f64) -> Result<DensityField> {
    let op = Operator::new(fnl, u.grid());
    let bound = op.stable_dt(u.values(), 1.0, f64::INFINITY, Scheme::ExplicitEuler);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt, bound });
    }
    finish(*u.grid(), op.explicit(u.values(), dt))
}

/// One linearly implicit step; diffusion is linearized about `u`.
pub fn step_semi_implicit(u: &DensityField, fnl: &EnergyFunctional, dt: f64) -> Result<DensityField> {
    let op = Operator::new(fnl, u.grid());
    let bound = op.stable_dt(u.values(), 1.0, f64::INFINITY, Scheme::SemiImplicit);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt, bound });
    }
    finish(*u.grid(), op.semi_implicit(u.values(), dt))
}

fn structural_warnings(u0: &DensityField, fnl: &EnergyFunctional) -> Vec<String> {
    let EnergyMode::General { beta, b, phi } = *fnl.mode() else {
        return Vec::new();
    };
    let report = validate_hypothesis1(&beta, &b, &phi, Variant::IPrime, u0.grid(), Some((u0.min(), u0.max())));
    report
        .clauses
        .iter()
        .filter(|c| c.required && !c.pass)
        .map(|c| format!("clause ({}) fails: {}", c.clause, c.note))
        .collect()
}

/// Integrates from `cfg.t0` to `cfg.t1` with adaptive steps.
pub fn integrate_path(
    u0: &DensityField,
    fnl: &EnergyFunctional,
    cfg: &SolverConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.margin_check {
        u0.check_margin(MARGIN_LAYERS, MARGIN_LEVEL)?;
    }
    let grid = *u0.grid();
    let op = Operator::new(fnl, &grid);
    let mut traj = Trajectory {
        warnings: structural_warnings(u0, fnl),
        ..Default::default()
    };
    let mut store = |traj: &mut Trajectory, t: f64, u: &DensityField, steps: usize| -> Result<()> {
        for o in observers.iter_mut() {
            o.observe(t, u)?;
        }
        traj.times.push(t);
        traj.states.push(u.clone());
        traj.step_index.push(steps);
        Ok(())
    };
    store(&mut traj, cfg.t0, u0, 0)?;

    let mut t = cfg.t0;
    let mut u = u0.values().to_vec();
    let mut mass = u0.mass();
    let mut next_store = 1usize;
    let vol = grid.cell_volume();
    while t < cfg.t1 {
        if traj.diagnostics.len() >= cfg.max_steps {
            return Err(Error::StepSize {
                dt: cfg.t1 - t,
                bound: 0.0,
            });
        }
        let target = match cfg.store {
            StoreRule::Interval(d) => (cfg.t0 + next_store as f64 * d).min(cfg.t1),
            StoreRule::Every(_) => cfg.t1,
        };
        let mut dt = op.stable_dt(&u, cfg.cfl_safety, cfg.max_dt, cfg.scheme);
        let mut retries = 0;
        let (next, dt_used, hit) = loop {
            let hit = t + dt * (1.0 + 1e-9) >= target;
            let dt_try = if hit { target - t } else { dt };
            let next = match cfg.scheme {
                Scheme::ExplicitEuler => op.explicit(&u, dt_try),
                Scheme::SemiImplicit => op.semi_implicit(&u, dt_try),
            };
            let bad = next
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < -POSITIVITY_TOL);
            match bad {
                None => break (next, dt_try, hit),
                Some((cell, &value)) => {
                    retries += 1;
                    if retries > MAX_RETRIES {
                        return Err(Error::Positivity { cell, value });
                    }
                    dt = 0.5 * dt_try;
                }
            }
        };
        u = next;
        let mut clipped = 0;
        if cfg.positivity_clip_log {
            for x in u.iter_mut().filter(|x| **x < 0.0) {
                *x = 0.0;
                clipped += 1;
            }
        }
        t = if hit { target } else { t + dt_used };
        let new_mass = u.iter().sum::<f64>() * vol;
        let (lo, hi) = u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        traj.diagnostics.push(StepDiagnostics {
            t,
            dt: dt_used,
            mass_drift: (new_mass - mass).abs(),
            min_value: lo,
            max_value: hi,
            retries,
            clipped,
        });
        mass = new_mass;
        let field = DensityField::new(grid, u.clone())?;
        if cfg.margin_check {
            field.check_margin(MARGIN_LAYERS, MARGIN_LEVEL)?;
        }
        let steps = traj.diagnostics.len();
        let due = match cfg.store {
            StoreRule::Every(n) => steps.is_multiple_of(n) || t >= cfg.t1,
            StoreRule::Interval(_) => hit,
        };
        if due {
            store(&mut traj, t, &field, steps)?;
            if matches!(cfg.store, StoreRule::Interval(_)) {
                next_store += 1;
            }
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{gaussian, BarenblattProfile};
    use crate::laws::{Potential, ScalarLaw};

    fn heat(sigma: f64, phi: Potential) -> EnergyFunctional {
        EnergyFunctional::general(ScalarLaw::Linear { sigma }, ScalarLaw::Constant { c: 1.0 }, phi).unwrap()
    }

    #[test]
    fn heat_step_is_three_point_stencil() {
        let grid = Grid::line(-1.0, 1.0, 21).unwrap();
        let h = grid.h();
        let mut v = vec![0.0; 21];
        v[10] = 1.0 / h;
        let u = DensityField::new(grid, v).unwrap();
        let fnl = heat(1.0, Potential::None);
        let dt = 0.4 * h * h;
        let next = step(&u, &fnl, dt).unwrap();
        let lam = dt / (h * h);
        assert!((next.values()[10] - (1.0 - 2.0 * lam) / h).abs() < 1e-12 / h);
        assert!((next.values()[9] - lam / h).abs() < 1e-12 / h);
        assert!((next.values()[11] - lam / h).abs() < 1e-12 / h);
        assert!(next.values()[8].abs() < 1e-300);
    }

    #[test]
    fn heat_step_is_five_point_stencil_in_2d() {
        let grid = Grid::rect([-1.0, -1.0], [1.0, 1.0], [11, 11]).unwrap();
        let h = grid.h();
        let mut v = vec![0.0; grid.len()];
        let c = grid.index(5, 5);
        v[c] = 1.0 / (h * h);
        let u = DensityField::new(grid, v).unwrap();
        let fnl = heat(1.0, Potential::None);
        let dt = 0.2 * h * h;
        let next = step(&u, &fnl, dt).unwrap();
        let lam = dt / (h * h);
        let s = 1.0 / (h * h);
        assert!((next.values()[c] - (1.0 - 4.0 * lam) * s).abs() < 1e-12 * s);
        for n in [grid.index(4, 5), grid.index(6, 5), grid.index(5, 4), grid.index(5, 6)] {
            assert!((next.values()[n] - lam * s).abs() < 1e-12 * s);
        }
    }

    #[test]
    fn cfl_formula_example() {
        let grid = Grid::line(0.0, 1.0, 10).unwrap();
        let u = DensityField::new(grid, vec![1.0; 10]).unwrap();
        let fnl = heat(1.0, Potential::None);
        assert!((cfl_dt(&u, &fnl, 0.5, 1.0) - 0.0025).abs() < 1e-15);
        // doubling h quadruples the bound
        let coarse = DensityField::new(Grid::line(0.0, 1.0, 5).unwrap(), vec![1.0; 5]).unwrap();
        assert!((cfl_dt(&coarse, &fnl, 0.5, 1.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn cfl_degenerate_returns_max_dt() {
        let grid = Grid::line(0.0, 1.0, 10).unwrap();
        let u = DensityField::new(grid, vec![0.0; 10]).unwrap();
        let fnl = EnergyFunctional::classical(2.0).unwrap();
        assert_eq!(cfl_dt(&u, &fnl, 0.45, 0.125), 0.125);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let grid = Grid::line(0.0, 1.0, 10).unwrap();
        let u = DensityField::new(grid, vec![1.0; 10]).unwrap();
        let fnl = heat(1.0, Potential::None);
        assert!(matches!(step(&u, &fnl, 0.01), Err(Error::StepSize { .. })));
    }

    #[test]
    fn stationary_state_is_a_discrete_fixed_point() {
        let grid = Grid::line(-8.0, 8.0, 128).unwrap();
        let fnl = heat(1.0, Potential::Quadratic { a: 0.5, offset: 0.0 });
        let st = fnl.stationary_state(&grid).unwrap();
        let r = rate_of_change(&st.density, &fnl);
        let sup = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(sup < 1e-9, "{sup}");
        let dt = cfl_dt(&st.density, &fnl, 0.45, 1.0);
        let next = step(&st.density, &fnl, dt).unwrap();
        assert!(next.l1_distance(&st.density).unwrap() < 1e-10 * dt.max(1e-3));
    }

    #[test]
    fn secant_mobility_matches_b_u_for_nearby_values() {
        let fnl = EnergyFunctional::general(
            ScalarLaw::LinearPlusPower { gamma: 0.5, m: 2.0 },
            ScalarLaw::BoundedRational { b0: 1.0, c: 0.5 },
            Potential::None,
        )
        .unwrap();
        let grid = Grid::line(0.0, 1.0, 2).unwrap();
        let op = Operator::new(&fnl, &grid);
        let (ul, ur) = (0.7, 0.7 * (1.0 + 2e-6));
        let g = fnl.g_values(&[ul, ur]);
        let (_, m) = op.face(ul, ur, g[0], g[1], fnl.diffusivity(ul), fnl.diffusivity(ur), 0.0, 1.0);
        let um = 0.5 * (ul + ur);
        assert!((m / (fnl.mobility(um) * um) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn explicit_steps_conserve_mass_and_positivity() {
        let grid = Grid::line(-6.0, 6.0, 96).unwrap();
        let fnl = EnergyFunctional::general(
            ScalarLaw::LinearPlusPower { gamma: 0.5, m: 2.0 },
            ScalarLaw::BoundedRational { b0: 1.0, c: 0.5 },
            Potential::Quartic { a: 0.05, offset: 1.0 },
        )
        .unwrap();
        let u0 = gaussian(&grid, [1.0, 0.0], 0.7).unwrap();
        let mut cfg = SolverConfig::new(0.0, 0.5, 1.0);
        cfg.store = StoreRule::Every(1000);
        let traj = integrate_path(&u0, &fnl, &cfg, &mut []).unwrap();
        assert!(traj.max_step_mass_drift() <= 1e-13);
        assert!(traj.total_mass_drift() <= 1e-10);
        assert!(traj.min_value() >= -POSITIVITY_TOL);
        assert_eq!(*traj.times.last().unwrap(), 0.5);
    }

    #[test]
    fn zero_duration_returns_initial_state() {
        let grid = Grid::line(-10.0, 10.0, 64).unwrap();
        let u0 = gaussian(&grid, [0.0, 0.0], 1.0).unwrap();
        let traj = integrate_path(
            &u0,
            &heat(1.0, Potential::None),
            &SolverConfig::new(0.5, 0.5, 0.1),
            &mut [],
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], u0);
    }

    #[test]
    fn interval_storage_hits_requested_times() {
        let grid = Grid::line(-10.0, 10.0, 80).unwrap();
        let u0 = gaussian(&grid, [0.0, 0.0], 1.0).unwrap();
        let mut cfg = SolverConfig::new(0.0, 0.3, 1.0);
        cfg.store = StoreRule::Interval(0.1);
        let mut seen = Vec::new();
        let mut obs = |t: f64, _: &DensityField| -> Result<()> {
            seen.push(t);
            Ok(())
        };
        let traj = integrate_path(&u0, &heat(1.0, Potential::None), &cfg, &mut [&mut obs]).unwrap();
        assert_eq!(traj.times.len(), 4);
        for (k, t) in traj.times.iter().enumerate() {
            assert!((t - 0.1 * k as f64).abs() < 1e-12);
        }
        assert_eq!(seen, traj.times);
    }

    #[test]
    fn heat_variance_grows_linearly() {
        let grid = Grid::line(-12.0, 12.0, 256).unwrap();
        let sigma = 1.0;
        let u0 = gaussian(&grid, [0.0, 0.0], 1.0).unwrap();
        let mut cfg = SolverConfig::new(0.0, 1.0, 1.0);
        cfg.store = StoreRule::Interval(0.5);
        let traj = integrate_path(&u0, &heat(sigma, Potential::None), &cfg, &mut []).unwrap();
        let var = |u: &DensityField| {
            let x: Vec<f64> = grid.centers().iter().map(|p| p[0] * p[0]).collect();
            crate::grid::integrate(u, &x).unwrap()
        };
        let v0 = var(&traj.states[0]);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let expect = v0 + 2.0 * sigma * t;
            assert!((var(s) / expect - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn explicit_scheme_preserves_order() {
        let grid = Grid::line(-5.0, 5.0, 80).unwrap();
        let fnl = EnergyFunctional::classical(2.0).unwrap();
        let lo = BarenblattProfile::new(2.0, 1).unwrap().sample(1.0, &grid).unwrap().0;
        let hi_vals: Vec<f64> = lo
            .values()
            .iter()
            .zip(grid.centers())
            .map(|(v, p)| v + 0.05 * (-(p[0] * p[0])).exp())
            .collect();
        let hi = DensityField::new(grid, hi_vals).unwrap();
        let dt = cfl_dt(&hi, &fnl, 0.45, 1.0).min(cfl_dt(&lo, &fnl, 0.45, 1.0));
        let (mut a, mut b) = (lo, hi);
        for _ in 0..50 {
            a = step(&a, &fnl, dt).unwrap();
            b = step(&b, &fnl, dt).unwrap();
        }
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
    }

    #[test]
    fn semi_implicit_conserves_mass_with_large_steps() {
        for grid in [
            Grid::line(-5.0, 5.0, 100).unwrap(),
            Grid::rect([-5.0, -5.0], [5.0, 5.0], [32, 32]).unwrap(),
        ] {
            let fnl = EnergyFunctional::classical(2.0).unwrap();
            let u0 = BarenblattProfile::new(2.0, grid.dim())
                .unwrap()
                .sample(1.0, &grid)
                .unwrap()
                .0;
            let explicit = cfl_dt(&u0, &fnl, 1.0, 1.0);
            let dt = 2.0 * explicit;
            let next = step_semi_implicit(&u0, &fnl, dt).unwrap();
            assert!((next.mass() - u0.mass()).abs() < 1e-13);
            assert!(next.min() >= -POSITIVITY_TOL);
        }
    }

    #[test]
    fn semi_implicit_tracks_explicit_on_heat() {
        let grid = Grid::line(-12.0, 12.0, 120).unwrap();
        let u0 = gaussian(&grid, [0.0, 0.0], 1.0).unwrap();
        let fnl = heat(1.0, Potential::None);
        let mut cfg = SolverConfig::new(0.0, 0.5, 0.01);
        cfg.scheme = Scheme::SemiImplicit;
        let semi = integrate_path(&u0, &fnl, &cfg, &mut []).unwrap();
        cfg.scheme = Scheme::ExplicitEuler;
        let expl = integrate_path(&u0, &fnl, &cfg, &mut []).unwrap();
        let d = semi.last().unwrap().l1_distance(expl.last().unwrap()).unwrap();
        assert!(d < 5e-3, "{d}");
        assert!(semi.steps() < expl.steps());
    }

    #[test]
    fn margin_assertion_trips_when_mass_reaches_the_walls() {
        let grid = Grid::line(-3.0, 3.0, 60).unwrap();
        let u0 = gaussian(&grid, [0.0, 0.0], 0.5).unwrap();
        let cfg = SolverConfig::new(0.0, 1.0, 1.0);
        let err = integrate_path(&u0, &heat(1.0, Potential::None), &cfg, &mut []).unwrap_err();
        assert!(matches!(err, Error::DomainTooSmall(_)));
    }

    #[test]
    fn dissipation_matches_energy_rate() {
        let grid = Grid::line(-8.0, 8.0, 128).unwrap();
        let fnl = heat(1.0, Potential::Quadratic { a: 0.5, offset: 0.0 });
        let u = gaussian(&grid, [1.0, 0.0], 0.8).unwrap();
        let r = rate_of_change(&u, &fnl);
        let xi = fnl.g_values(u.values());
        let phi = fnl.potential_values(&grid);
        let de: f64 = (0..grid.len()).map(|c| (xi[c] + phi[c]) * r[c]).sum::<f64>() * grid.cell_volume();
        let d = dissipation_rate(&u, &fnl);
        assert!((de + d).abs() < 1e-9 * d, "{de} {d}");
    }
}
