//! Uniform cell-centred grids, densities sampled on them, and the discrete
//! calculus (midpoint quadrature, central differences) shared by every
//! other module.
//!
//! Cells are stored x-fastest: the flat index of cell `(i, j)` is
//! `i + nx * j`. One-dimensional grids carry a dummy second axis with a
//! single cell so that points are always `[f64; 2]`.

use crate::error::{Error, Result};

/// A point in the (at most two-dimensional) physical domain.
pub type Point = [f64; 2];

/// Densities may dip this far below zero from rounding and still count
/// as nonnegative.
pub const POSITIVITY_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    origin: [f64; 2],
    extent: [f64; 2],
    cells: [usize; 2],
}

impl Grid {
    pub fn new(origin: &[f64], extent: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = cells.len();
        if !(1..=2).contains(&dim) || origin.len() != dim || extent.len() != dim {
            return Err(Error::Shape(format!(
                "grid needs matching origin/extent/cells of length 1 or 2, got {}/{}/{}",
                origin.len(),
                extent.len(),
                cells.len()
            )));
        }
        let mut g = Grid {
            dim,
            origin: [0.0; 2],
            extent: [1.0; 2],
            cells: [1; 2],
        };
        for k in 0..dim {
            if cells[k] == 0 {
                return Err(Error::Shape("cells_per_axis must be positive".into()));
            }
            if !(extent[k] > 0.0 && extent[k].is_finite() && origin[k].is_finite()) {
                return Err(Error::Shape(format!("invalid extent {} on axis {k}", extent[k])));
            }
            g.origin[k] = origin[k];
            g.extent[k] = extent[k];
            g.cells[k] = cells[k];
        }
        Ok(g)
    }

    /// Grid on `[lo, hi]` with `n` cells.
    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(&[lo], &[hi - lo], &[n])
    }

    /// Grid on `[lo[0], hi[0]] x [lo[1], hi[1]]`.
    pub fn rect(lo: [f64; 2], hi: [f64; 2], n: [usize; 2]) -> Result<Self> {
        Self::new(&lo, &[hi[0] - lo[0], hi[1] - lo[1]], &n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells[axis] as f64
    }

    /// Largest spacing over the active axes.
    pub fn h(&self) -> f64 {
        (0..self.dim).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|k| self.spacing(k)).product()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        let x = self.origin[0] + (i as f64 + 0.5) * self.spacing(0);
        let y = if self.dim == 2 {
            self.origin[1] + (j as f64 + 0.5) * self.spacing(1)
        } else {
            0.0
        };
        [x, y]
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|c| self.center(c)).collect()
    }

    pub fn sample<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|c| f(self.center(c))).collect()
    }

    /// Same domain, every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut g = *self;
        for k in 0..self.dim {
            g.cells[k] *= factor;
        }
        g
    }

    /// Distance (in cells) from cell `idx` to the nearest boundary face.
    pub fn boundary_depth(&self, idx: usize) -> usize {
        let (i, j) = self.coords(idx);
        let mut d = i.min(self.cells[0] - 1 - i);
        if self.dim == 2 {
            d = d.min(j.min(self.cells[1] - 1 - j));
        }
        d
    }

    /// Neighbour of `idx` one step along `axis` in direction `+1`, if any.
    pub fn upper_neighbor(&self, idx: usize, axis: usize) -> Option<usize> {
        let (i, j) = self.coords(idx);
        match axis {
            0 if i + 1 < self.cells[0] => Some(idx + 1),
            1 if self.dim == 2 && j + 1 < self.cells[1] => Some(idx + self.cells[0]),
            _ => None,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..self.dim).all(|k| p[k] >= self.origin[k] && p[k] <= self.origin[k] + self.extent[k])
    }

    /// Tensor-product three-point Lagrange interpolation on the stencil
    /// around the nearest cell centre (shifted inward at the walls), so
    /// the interpolant is a polynomial in `p` near every centre. `outside`
    /// beyond the domain.
    pub fn interpolate_quadratic(&self, values: &[f64], p: Point, outside: f64) -> f64 {
        if !self.contains(p) {
            return outside;
        }
        let mut idx = [[0usize; 3]; 2];
        let mut w = [[1.0, 0.0, 0.0]; 2];
        let mut len = [1usize; 2];
        for k in 0..self.dim {
            let n = self.cells[k];
            let s = (p[k] - self.origin[k]) / self.spacing(k) - 0.5;
            if n == 2 {
                idx[k] = [0, 1, 0];
                w[k] = [1.0 - s, s, 0.0];
                len[k] = 2;
            } else if n > 2 {
                let c = (s.round().max(1.0) as usize).min(n - 2);
                let t = s - c as f64;
                idx[k] = [c - 1, c, c + 1];
                w[k] = [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)];
                len[k] = 3;
            }
        }
        let mut acc = 0.0;
        for b in 0..len[1] {
            for a in 0..len[0] {
                acc += w[0][a] * w[1][b] * values[self.index(idx[0][a], idx[1][b])];
            }
        }
        acc
    }

    /// Multilinear interpolation of cell-centred `values` at `p`; constant
    /// extension between the outermost centres and the boundary, `outside`
    /// beyond the domain.
    pub fn interpolate(&self, values: &[f64], p: Point, outside: f64) -> f64 {
        if !self.contains(p) {
            return outside;
        }
        let mut lo = [0usize; 2];
        let mut w = [0.0f64; 2];
        for k in 0..2 {
            if k >= self.dim {
                break;
            }
            let n = self.cells[k];
            let s = (p[k] - self.origin[k]) / self.spacing(k) - 0.5;
            if n == 1 || s <= 0.0 {
                lo[k] = 0;
                w[k] = 0.0;
            } else if s >= (n - 1) as f64 {
                lo[k] = n - 2;
                w[k] = 1.0;
            } else {
                let f = s.floor();
                lo[k] = f as usize;
                w[k] = s - f;
            }
        }
        if self.dim == 1 {
            let i = lo[0];
            if self.cells[0] == 1 {
                return values[0];
            }
            values[i] * (1.0 - w[0]) + values[i + 1] * w[0]
        } else {
            let (i, j) = (lo[0], lo[1]);
            let i1 = (i + 1).min(self.cells[0] - 1);
            let j1 = (j + 1).min(self.cells[1] - 1);
            let v00 = values[self.index(i, j)];
            let v10 = values[self.index(i1, j)];
            let v01 = values[self.index(i, j1)];
            let v11 = values[self.index(i1, j1)];
            (v00 * (1.0 - w[0]) + v10 * w[0]) * (1.0 - w[1]) + (v01 * (1.0 - w[0]) + v11 * w[0]) * w[1]
        }
    }
}

/// Cell-averaged density of an absolutely continuous measure.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "density has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some((c, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -POSITIVITY_TOL)
        {
            return Err(Error::Domain(format!("density value {v} at cell {c}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(Point) -> f64>(grid: Grid, f: F) -> Result<Self> {
        Self::new(grid, grid.sample(f))
    }

    /// Rescales to unit mass; returns the applied factor alongside.
    pub fn normalized(mut self) -> Result<(Self, f64)> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("cannot normalize density of mass {m}")));
        }
        let factor = 1.0 / m;
        self.values.iter_mut().for_each(|v| *v *= factor);
        Ok((self, factor))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest value in the `layers` outermost cell layers.
    pub fn boundary_max(&self, layers: usize) -> f64 {
        (0..self.grid.len())
            .filter(|&c| self.grid.boundary_depth(c) < layers)
            .map(|c| self.values[c])
            .fold(0.0, f64::max)
    }

    /// Fails if the density reaches `threshold` within `layers` of the boundary.
    pub fn check_margin(&self, layers: usize, threshold: f64) -> Result<()> {
        let m = self.boundary_max(layers);
        if m >= threshold {
            Err(Error::DomainTooSmall(format!(
                "density {m:e} in the {layers} outermost layers (limit {threshold:e})"
            )))
        } else {
            Ok(())
        }
    }

    /// L¹ distance to another density on the same grid.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume())
    }
}

/// A vector field sampled at cell centres, one array per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldSample {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorFieldSample {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Shape("vector field components do not match grid".into()));
        }
        if components.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("vector field has non-finite entries".into()));
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn from_fn<F: Fn(Point) -> [f64; 2]>(grid: Grid, f: F) -> Self {
        let mut out = Self::zeros(grid);
        for c in 0..grid.len() {
            let v = f(grid.center(c));
            for k in 0..grid.dim() {
                out.components[k][c] = v[k];
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn at(&self, cell: usize) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (k, comp) in self.components.iter().enumerate() {
            v[k] = comp[cell];
        }
        v
    }

    /// Pointwise product with a cell-wise scalar.
    pub fn scaled(&self, factor: &[f64]) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| c.iter().zip(factor).map(|(a, f)| a * f).collect())
            .collect();
        Self {
            grid: self.grid,
            components,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| c.iter().map(|a| a * s).collect())
            .collect();
        Self {
            grid: self.grid,
            components,
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &VectorFieldSample) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        Ok(Self {
            grid: self.grid,
            components,
        })
    }

    /// Cell-wise dot product.
    pub fn dot(&self, other: &VectorFieldSample) -> Result<Vec<f64>> {
        same_grid(&self.grid, &other.grid)?;
        let mut out = vec![0.0; self.grid.len()];
        for (a, b) in self.components.iter().zip(&other.components) {
            for c in 0..out.len() {
                out[c] += a[c] * b[c];
            }
        }
        Ok(out)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|c| self.at(c).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape("fields live on different grids".into()))
    }
}

fn check_len(grid: &Grid, arr: &[f64], what: &str) -> Result<()> {
    if arr.len() == grid.len() {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what} has {} entries for {} cells",
            arr.len(),
            grid.len()
        )))
    }
}

/// Midpoint quadrature of `integrand` against the measure `field`.
pub fn integrate(field: &DensityField, integrand: &[f64]) -> Result<f64> {
    check_len(&field.grid, integrand, "integrand")?;
    Ok(field.values.iter().zip(integrand).map(|(v, f)| v * f).sum::<f64>() * field.grid.cell_volume())
}

/// Midpoint quadrature of a plain array against Lebesgue measure.
pub fn integrate_dx(grid: &Grid, integrand: &[f64]) -> Result<f64> {
    check_len(grid, integrand, "integrand")?;
    Ok(integrand.iter().sum::<f64>() * grid.cell_volume())
}

/// `⟨a, b⟩` in `L²(ν)` with pointwise weight: `Σ weight (a·b) v vol`.
pub fn weighted_inner(
    field: &DensityField,
    weight: &[f64],
    a: &VectorFieldSample,
    b: &VectorFieldSample,
) -> Result<f64> {
    check_len(&field.grid, weight, "weight")?;
    same_grid(&field.grid, &a.grid)?;
    same_grid(&field.grid, &b.grid)?;
    if let Some((c, w)) = weight.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::Domain(format!("nonpositive weight {w} at cell {c}")));
    }
    let ab = a.dot(b)?;
    Ok((0..field.grid.len())
        .map(|c| weight[c] * ab[c] * field.values[c])
        .sum::<f64>()
        * field.grid.cell_volume())
}

/// Derivative along one axis: central in the interior, second-order
/// one-sided at the two boundary cells.
pub fn partial(values: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.cells_per_axis()[axis];
    let h = grid.spacing(axis);
    let stride = if axis == 0 { 1 } else { grid.cells_per_axis()[0] };
    let mut out = vec![0.0; values.len()];
    if n == 1 {
        return out;
    }
    for c in 0..values.len() {
        let (i, j) = grid.coords(c);
        let pos = if axis == 0 { i } else { j };
        out[c] = if n == 2 {
            let base = c - pos * stride;
            (values[base + stride] - values[base]) / h
        } else if pos == 0 {
            (-3.0 * values[c] + 4.0 * values[c + stride] - values[c + 2 * stride]) / (2.0 * h)
        } else if pos == n - 1 {
            (3.0 * values[c] - 4.0 * values[c - stride] + values[c - 2 * stride]) / (2.0 * h)
        } else {
            (values[c + stride] - values[c - stride]) / (2.0 * h)
        };
    }
    out
}

pub fn gradient_of(scalar: &[f64], grid: &Grid) -> Result<VectorFieldSample> {
    check_len(grid, scalar, "scalar")?;
    if scalar.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("gradient of non-finite array".into()));
    }
    let components = (0..grid.dim()).map(|k| partial(scalar, grid, k)).collect();
    Ok(VectorFieldSample {
        grid: *grid,
        components,
    })
}

pub fn divergence_of(field: &VectorFieldSample) -> Vec<f64> {
    let mut out = vec![0.0; field.grid.len()];
    for (k, comp) in field.components.iter().enumerate() {
        for (o, d) in out.iter_mut().zip(partial(comp, &field.grid, k)) {
            *o += d;
        }
    }
    out
}
