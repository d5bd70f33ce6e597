//! Adaptive Gauss–Kronrod quadrature and monotone cubic tables on a
//! uniform grid in a log variable.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = hw * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * hw, ((k - g) * hw).abs())
}

/// Adaptive G7K15 on `[a, b]`; returns the estimate and an error bound.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
        let (v, e) = gk15(f, a, b);
        if e <= tol || depth == 0 {
            return (v, e);
        }
        let m = 0.5 * (a + b);
        let (v1, e1) = rec(f, a, m, 0.5 * tol, depth - 1);
        let (v2, e2) = rec(f, m, b, 0.5 * tol, depth - 1);
        (v1 + v2, e1 + e2)
    }
    let (v0, _) = gk15(&f, a, b);
    let tol = abs_tol.max(rel_tol * v0.abs());
    rec(&f, a, b, tol, 40)
}

/// Cubic Hermite table of a nondecreasing function `V(s)` on uniform nodes,
/// with exact nodal derivatives limited à la Fritsch–Carlson so the
/// interpolant is monotone.
#[derive(Clone, Debug)]
pub struct MonotoneTable {
    s0: f64,
    ds: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    errors: Vec<f64>,
}

impl MonotoneTable {
    /// Tabulates `V(s) = anchor_value + ∫_{anchor}^{s} dv(u) du` on nodes
    /// `anchor + k ds` covering `[s_lo, s_hi]`.
    pub fn cumulative<F: Fn(f64) -> f64>(
        dv: F,
        anchor: f64,
        anchor_value: f64,
        s_lo: f64,
        s_hi: f64,
        ds: f64,
        tol: f64,
    ) -> Self {
        let k_lo = ((s_lo - anchor) / ds).floor() as i64;
        let k_hi = ((s_hi - anchor) / ds).ceil() as i64;
        let n = (k_hi - k_lo + 1) as usize;
        let s0 = anchor + k_lo as f64 * ds;
        let node = |i: usize| anchor + (k_lo + i as i64) as f64 * ds;
        let ia = (-k_lo) as usize;
        let mut values = vec![0.0; n];
        let mut errors = vec![0.0; n];
        values[ia.min(n - 1)] = anchor_value;
        for i in ia + 1..n {
            let (v, e) = integrate(&dv, node(i - 1), node(i), tol, tol);
            values[i] = values[i - 1] + v;
            errors[i] = errors[i - 1] + e;
        }
        for i in (0..ia.min(n)).rev() {
            let (v, e) = integrate(&dv, node(i), node(i + 1), tol, tol);
            values[i] = values[i + 1] - v;
            errors[i] = errors[i + 1] + e;
        }
        let mut slopes: Vec<f64> = (0..n).map(|i| dv(node(i))).collect();
        for i in 0..n - 1 {
            let delta = (values[i + 1] - values[i]) / ds;
            if delta <= 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / delta;
            let b = slopes[i + 1] / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                slopes[i] = t * a * delta;
                slopes[i + 1] = t * b * delta;
            }
        }
        Self {
            s0,
            ds,
            values,
            slopes,
            errors,
        }
    }

    pub fn s_min(&self) -> f64 {
        self.s0
    }

    pub fn s_max(&self) -> f64 {
        self.s0 + (self.values.len() - 1) as f64 * self.ds
    }

    pub fn v_min(&self) -> f64 {
        self.values[0]
    }

    pub fn v_max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.s0 + i as f64 * self.ds, *v))
    }

    /// Accumulated quadrature error bound at each node.
    pub fn error_bounds(&self) -> &[f64] {
        &self.errors
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let x = (s - self.s0) / self.ds;
        let last = self.values.len() - 2;
        let i = (x.floor().max(0.0) as usize).min(last);
        (i, x - i as f64)
    }

    fn hermite(&self, i: usize, t: f64) -> (f64, f64) {
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * self.ds, self.slopes[i + 1] * self.ds);
        let t2 = t * t;
        let t3 = t2 * t;
        let v =
            (2.0 * t3 - 3.0 * t2 + 1.0) * v0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * v1 + (t3 - t2) * d1;
        let dv = (6.0 * t2 - 6.0 * t) * v0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * v1
            + (3.0 * t2 - 2.0 * t) * d1;
        (v, dv / self.ds)
    }

    /// Value and derivative at `s`; callers keep `s` inside the table.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let (i, t) = self.locate(s);
        self.hermite(i, t)
    }

    /// Solves `V(s) = y` for `y` in `[v_min, v_max]`.
    pub fn solve(&self, y: f64) -> f64 {
        let (mut lo, mut hi) = (0usize, self.values.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.values[mid] <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let i = lo.min(self.values.len() - 2);
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut t = if self.values[i + 1] > self.values[i] {
            ((y - self.values[i]) / (self.values[i + 1] - self.values[i])).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for _ in 0..100 {
            let (v, dv) = self.hermite(i, t);
            let r = v - y;
            if r > 0.0 {
                b = t;
            } else {
                a = t;
            }
            if r.abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0) || b - a < 1e-15 {
                break;
            }
            let dt = r / (dv * self.ds);
            let next = t - dt;
            t = if dv > 0.0 && next > a && next < b {
                next
            } else {
                0.5 * (a + b)
            };
        }
        self.s0 + (i as f64 + t) * self.ds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomial_and_exp() {
        let (v, _) = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-14, 0.0);
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
        let (v, e) = integrate(f64::exp, -3.0, 1.0, 1e-13, 0.0);
        assert!((v - (1f64.exp() - (-3f64).exp())).abs() < 1e-12);
        assert!(e < 1e-12);
    }

    #[test]
    fn integrable_log_singularity_via_substitution() {
        // ∫₀¹ log x dx = -1, computed on x = e^{-u}
        let (v, _) = integrate(|u: f64| -u * (-u).exp(), 0.0, 60.0, 1e-13, 0.0);
        assert!((v + 1.0).abs() < 1e-10);
    }

    #[test]
    fn table_reproduces_linear_and_solves() {
        let t = MonotoneTable::cumulative(|_| 2.0, 0.0, 0.0, -5.0, 5.0, 0.1, 1e-14);
        for s in [-4.93, -1.0, 0.0, 0.37, 4.99] {
            let (v, d) = t.eval(s);
            assert!((v - 2.0 * s).abs() < 1e-12, "{s}");
            assert!((d - 2.0).abs() < 1e-10);
            assert!((t.solve(2.0 * s) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn table_interpolates_smooth_function_to_high_order() {
        let t = MonotoneTable::cumulative(f64::exp, 0.0, 1.0, -3.0, 3.0, 0.01, 1e-15);
        let err = (0..600)
            .map(|k| -2.99 + 0.00997 * k as f64)
            .map(|s| (t.eval(s).0 - s.exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}
