//! Closed-form reference solutions used as oracles.

use statrs::function::gamma::gamma;

use crate::energy::EnergyFunctional;
use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid, Point};

/// Self-similar source solution of `∂ₜu = Δ(uᵐ)`:
/// `U(t,x) = t^{-α} (C − κ|x|² t^{-2β})₊^{1/(m−1)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarenblattProfile {
    pub m: f64,
    pub dim: usize,
    pub alpha: f64,
    pub beta_exp: f64,
    pub kappa: f64,
    /// Fixed so that the total mass is one.
    pub c_mass: f64,
}

impl BarenblattProfile {
    pub fn new(m: f64, dim: usize) -> Result<Self> {
        if !(m > 1.0) || !(dim == 1 || dim == 2) {
            return Err(Error::Domain(format!(
                "Barenblatt needs m > 1 and d in {{1,2}}, got m = {m}, d = {dim}"
            )));
        }
        let d = dim as f64;
        let alpha = d / (d * (m - 1.0) + 2.0);
        let beta_exp = alpha / d;
        let kappa = alpha * (m - 1.0) / (2.0 * m * d);
        let p = 1.0 / (m - 1.0);
        // ∫ (C − κ|y|²)₊^p dy = C^{p+d/2} κ^{-d/2} π^{d/2} Γ(p+1)/Γ(p+1+d/2)
        let unit =
            kappa.powf(-0.5 * d) * std::f64::consts::PI.powf(0.5 * d) * gamma(p + 1.0) / gamma(p + 1.0 + 0.5 * d);
        let c_mass = unit.powf(-1.0 / (p + 0.5 * d));
        Ok(Self {
            m,
            dim,
            alpha,
            beta_exp,
            kappa,
            c_mass,
        })
    }

    pub fn value(&self, t: f64, p: Point) -> f64 {
        let r2: f64 = p[..self.dim].iter().map(|x| x * x).sum();
        let base = self.c_mass - self.kappa * r2 * t.powf(-2.0 * self.beta_exp);
        if base <= 0.0 {
            0.0
        } else {
            t.powf(-self.alpha) * base.powf(1.0 / (self.m - 1.0))
        }
    }

    pub fn support_radius(&self, t: f64) -> f64 {
        t.powf(self.beta_exp) * (self.c_mass / self.kappa).sqrt()
    }

    /// `∂ₜU` where `U` is smooth.
    pub fn time_derivative(&self, t: f64, p: Point) -> f64 {
        let r2: f64 = p[..self.dim].iter().map(|x| x * x).sum();
        let s = t.powf(-2.0 * self.beta_exp);
        let base = self.c_mass - self.kappa * r2 * s;
        if base <= 0.0 {
            return 0.0;
        }
        let q = 1.0 / (self.m - 1.0);
        let u = t.powf(-self.alpha) * base.powf(q);
        let dbase = 2.0 * self.beta_exp * self.kappa * r2 * s / t;
        -self.alpha / t * u + t.powf(-self.alpha) * q * base.powf(q - 1.0) * dbase
    }

    /// Point samples of `U(t)` renormalized to unit mass; returns the field
    /// and the renormalization factor.
    pub fn sample(&self, t: f64, grid: &Grid) -> Result<(DensityField, f64)> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("Barenblatt time must be positive, got {t}")));
        }
        if grid.dim() != self.dim {
            return Err(Error::Shape("grid dimension differs from profile dimension".into()));
        }
        let r = self.support_radius(t);
        for k in 0..self.dim {
            let margin = 2.0 * grid.spacing(k);
            let lo = grid.origin()[k] + margin;
            let hi = grid.origin()[k] + grid.extent()[k] - margin;
            if -r < lo || r > hi {
                return Err(Error::DomainTooSmall(format!(
                    "support radius {r:.6} at t = {t} leaves fewer than two clear cells on axis {k}"
                )));
            }
        }
        DensityField::from_fn(*grid, |p| self.value(t, p))?.normalized()
    }

    /// Max over cells with `|x| < 0.8 R(t)` of
    /// `|(U(t+δ) − U(t−δ))/2δ − Δ_h(U(t)ᵐ)|`.
    pub fn pde_residual(&self, t: f64, grid: &Grid, dt: f64) -> f64 {
        let r = 0.8 * self.support_radius(t);
        let dim = grid.dim();
        let um: Vec<f64> = grid.sample(|p| self.value(t, p).powf(self.m));
        let mut worst: f64 = 0.0;
        for c in 0..grid.len() {
            let x = grid.center(c);
            let rx: f64 = x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            if rx >= r || grid.boundary_depth(c) < 1 {
                continue;
            }
            let (i, j) = grid.coords(c);
            let mut lap = 0.0;
            for k in 0..dim {
                let h = grid.spacing(k);
                let (lo, hi) = if k == 0 {
                    (grid.index(i - 1, j), grid.index(i + 1, j))
                } else {
                    (grid.index(i, j - 1), grid.index(i, j + 1))
                };
                lap += (um[lo] - 2.0 * um[c] + um[hi]) / (h * h);
            }
            let dudt = (self.value(t + dt, x) - self.value(t - dt, x)) / (2.0 * dt);
            worst = worst.max((dudt - lap).abs());
        }
        worst
    }
}

pub fn barenblatt(profile: &BarenblattProfile, t: f64, grid: &Grid) -> Result<DensityField> {
    let (field, factor) = profile.sample(t, grid)?;
    if (factor - 1.0).abs() > 1e-4 {
        return Err(Error::DomainTooSmall(format!(
            "Barenblatt renormalization factor {factor} deviates from 1 by more than 1e-4; refine the grid"
        )));
    }
    Ok(field)
}

/// Isotropic Gaussian with per-axis standard deviation `std`, renormalized.
pub fn gaussian(grid: &Grid, mean: Point, std: f64) -> Result<DensityField> {
    let dim = grid.dim();
    let var = std * std;
    let norm = (2.0 * std::f64::consts::PI * var).powf(-0.5 * dim as f64);
    let field = DensityField::from_fn(*grid, |p| {
        let r2: f64 = (0..dim).map(|k| (p[k] - mean[k]).powi(2)).sum();
        norm * (-0.5 * r2 / var).exp()
    })?;
    Ok(field.normalized()?.0)
}

/// Heat kernel of `∂ₜu = σΔu` started from a Gaussian of variance `var0`.
pub fn heat_kernel_from(sigma: f64, t: f64, var0: f64, grid: &Grid) -> Result<DensityField> {
    let var = var0 + 2.0 * sigma * t;
    if !(var > 0.0) {
        return Err(Error::Domain(format!("heat kernel variance {var} is not positive")));
    }
    gaussian(grid, [0.0, 0.0], var.sqrt())
}

/// Fundamental solution of `∂ₜu = σΔu` at time `t`.
pub fn heat_kernel(sigma: f64, t: f64, grid: &Grid) -> Result<DensityField> {
    heat_kernel_from(sigma, t, 0.0, grid)
}

/// Narrow Gaussian of standard deviation `3h`, standing in for a point mass.
pub fn mollified_spike(grid: &Grid, center: Point) -> Result<DensityField> {
    gaussian(grid, center, 3.0 * grid.h())
}

pub fn gibbs_state(fnl: &EnergyFunctional, grid: &Grid) -> Result<DensityField> {
    Ok(fnl.stationary_state(grid)?.density)
}
