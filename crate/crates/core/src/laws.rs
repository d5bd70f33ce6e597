//! Closed-form model ingredients: the diffusivity `β`, the drift
//! nonlinearity `b`, the matrix-case ratio `Ψ`, and the confining
//! potential `Φ`, together with sampled checks of the standing
//! structural assumptions.

use std::fmt;

use crate::grid::{Grid, Point};

/// Position-tagged failure from the preset mini-syntax.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntaxError {
    /// Byte offset into the parsed string.
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.pos)
    }
}

/// `(key, value, byte offset of the key=value part)`.
type Params = Vec<(String, f64, usize)>;

/// Splits `name:k1=v1,k2=v2` into the name and its numeric parameters.
pub(crate) fn parse_preset(s: &str) -> Result<(String, Params), SyntaxError> {
    let lead = s.len() - s.trim_start().len();
    let s_trim = s.trim();
    let (name, rest, rest_pos) = match s_trim.find(':') {
        Some(i) => (&s_trim[..i], &s_trim[i + 1..], lead + i + 1),
        None => (s_trim, "", lead + s_trim.len()),
    };
    if name.is_empty() {
        return Err(SyntaxError {
            pos: lead,
            message: "missing preset name".into(),
        });
    }
    let mut params = Vec::new();
    let mut pos = rest_pos;
    for part in rest.split(',') {
        if part.trim().is_empty() {
            if !rest.trim().is_empty() {
                return Err(SyntaxError {
                    pos,
                    message: "empty parameter".into(),
                });
            }
            pos += part.len() + 1;
            continue;
        }
        let eq = part.find('=').ok_or_else(|| SyntaxError {
            pos,
            message: format!("expected key=value, got '{}'", part.trim()),
        })?;
        let key = part[..eq].trim().to_string();
        let raw = part[eq + 1..].trim();
        let value: f64 = raw.parse().map_err(|_| SyntaxError {
            pos: pos + eq + 1,
            message: format!("'{raw}' is not a number"),
        })?;
        params.push((key, value, pos));
        pos += part.len() + 1;
    }
    Ok((name.trim().to_string(), params))
}

fn take(params: &[(String, f64, usize)], key: &str, end: usize) -> Result<f64, SyntaxError> {
    params
        .iter()
        .find(|(k, _, _)| k == key)
        .map(|(_, v, _)| *v)
        .ok_or_else(|| SyntaxError {
            pos: end,
            message: format!("missing parameter '{key}'"),
        })
}

fn reject_unknown(params: &[(String, f64, usize)], allowed: &[&str]) -> Result<(), SyntaxError> {
    match params.iter().find(|(k, _, _)| !allowed.contains(&k.as_str())) {
        Some((k, _, pos)) => Err(SyntaxError {
            pos: *pos,
            message: format!("unknown parameter '{k}'"),
        }),
        None => Ok(()),
    }
}

/// An evaluable scalar nonlinearity with closed-form derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarLaw {
    /// `r ↦ |r|^{m-1} r`
    Power { m: f64 },
    /// `r ↦ σ r`
    Linear { sigma: f64 },
    /// `r ↦ γ r + |r|^{m-1} r`
    LinearPlusPower { gamma: f64, m: f64 },
    /// `r ↦ c`
    Constant { c: f64 },
    /// `r ↦ b₀ + c / (1 + r²)`
    BoundedRational { b0: f64, c: f64 },
}

impl ScalarLaw {
    pub fn evaluate(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::Power { m } => r.abs().powf(m - 1.0) * r,
            ScalarLaw::Linear { sigma } => sigma * r,
            ScalarLaw::LinearPlusPower { gamma, m } => gamma * r + r.abs().powf(m - 1.0) * r,
            ScalarLaw::Constant { c } => c,
            ScalarLaw::BoundedRational { b0, c } => b0 + c / (1.0 + r * r),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::Power { m } => m * r.abs().powf(m - 1.0),
            ScalarLaw::Linear { sigma } => sigma,
            ScalarLaw::LinearPlusPower { gamma, m } => gamma + m * r.abs().powf(m - 1.0),
            ScalarLaw::Constant { .. } => 0.0,
            ScalarLaw::BoundedRational { c, .. } => {
                let q = 1.0 + r * r;
                -2.0 * c * r / (q * q)
            }
        }
    }

    /// `∫₀ʳ law(s) ds`.
    pub fn antiderivative(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::Power { m } => r.abs().powf(m + 1.0) / (m + 1.0),
            ScalarLaw::Linear { sigma } => 0.5 * sigma * r * r,
            ScalarLaw::LinearPlusPower { gamma, m } => 0.5 * gamma * r * r + r.abs().powf(m + 1.0) / (m + 1.0),
            ScalarLaw::Constant { c } => c * r,
            ScalarLaw::BoundedRational { b0, c } => b0 * r + c * r.atan(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarLaw::Constant { .. })
    }

    pub fn parse(s: &str) -> Result<Self, SyntaxError> {
        let (name, params) = parse_preset(s)?;
        let end = s.len();
        let law = match name.as_str() {
            "power" => {
                reject_unknown(&params, &["m"])?;
                ScalarLaw::Power {
                    m: take(&params, "m", end)?,
                }
            }
            "linear" => {
                reject_unknown(&params, &["sigma"])?;
                ScalarLaw::Linear {
                    sigma: take(&params, "sigma", end)?,
                }
            }
            "linear_plus_power" => {
                reject_unknown(&params, &["gamma", "m"])?;
                ScalarLaw::LinearPlusPower {
                    gamma: take(&params, "gamma", end)?,
                    m: take(&params, "m", end)?,
                }
            }
            "const" | "constant" => {
                reject_unknown(&params, &["c"])?;
                ScalarLaw::Constant {
                    c: take(&params, "c", end)?,
                }
            }
            "bounded_rational" => {
                reject_unknown(&params, &["b0", "c"])?;
                ScalarLaw::BoundedRational {
                    b0: take(&params, "b0", end)?,
                    c: take(&params, "c", end)?,
                }
            }
            other => {
                return Err(SyntaxError {
                    pos: s.len() - s.trim_start().len(),
                    message: format!("unknown law '{other}'"),
                })
            }
        };
        Ok(law)
    }
}

impl fmt::Display for ScalarLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScalarLaw::Power { m } => write!(f, "power:m={m:?}"),
            ScalarLaw::Linear { sigma } => write!(f, "linear:sigma={sigma:?}"),
            ScalarLaw::LinearPlusPower { gamma, m } => {
                write!(f, "linear_plus_power:gamma={gamma:?},m={m:?}")
            }
            ScalarLaw::Constant { c } => write!(f, "const:c={c:?}"),
            ScalarLaw::BoundedRational { b0, c } => write!(f, "bounded_rational:b0={b0:?},c={c:?}"),
        }
    }
}

/// Confining potential `Φ`; the drift is `D = -∇Φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential {
    None,
    /// `offset + a |x|²`
    Quadratic {
        a: f64,
        offset: f64,
    },
    /// `offset + a |x|⁴`
    Quartic {
        a: f64,
        offset: f64,
    },
}

fn norm2(p: Point, dim: usize) -> f64 {
    p[..dim].iter().map(|x| x * x).sum()
}

impl Potential {
    pub fn value(&self, p: Point, dim: usize) -> f64 {
        match *self {
            Potential::None => 0.0,
            Potential::Quadratic { a, offset } => offset + a * norm2(p, dim),
            Potential::Quartic { a, offset } => {
                let r2 = norm2(p, dim);
                offset + a * r2 * r2
            }
        }
    }

    pub fn gradient(&self, p: Point, dim: usize) -> [f64; 2] {
        let scale = match *self {
            Potential::None => 0.0,
            Potential::Quadratic { a, .. } => 2.0 * a,
            Potential::Quartic { a, .. } => 4.0 * a * norm2(p, dim),
        };
        let mut g = [0.0; 2];
        for k in 0..dim {
            g[k] = scale * p[k];
        }
        g
    }

    /// `D = -∇Φ`.
    pub fn drift(&self, p: Point, dim: usize) -> [f64; 2] {
        let g = self.gradient(p, dim);
        [-g[0], -g[1]]
    }

    pub fn laplacian(&self, p: Point, dim: usize) -> f64 {
        let d = dim as f64;
        match *self {
            Potential::None => 0.0,
            Potential::Quadratic { a, .. } => 2.0 * a * d,
            Potential::Quartic { a, .. } => 4.0 * a * (d + 2.0) * norm2(p, dim),
        }
    }

    /// Whether `Φ → ∞` at infinity.
    pub fn is_confining(&self) -> bool {
        match *self {
            Potential::None => false,
            Potential::Quadratic { a, .. } | Potential::Quartic { a, .. } => a > 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Potential::None)
    }

    /// Same potential with the additive offset moved by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        match *self {
            Potential::None => Potential::None,
            Potential::Quadratic { a, offset } => Potential::Quadratic {
                a,
                offset: offset + shift,
            },
            Potential::Quartic { a, offset } => Potential::Quartic {
                a,
                offset: offset + shift,
            },
        }
    }

    pub fn parse(s: &str) -> Result<Self, SyntaxError> {
        let (name, params) = parse_preset(s)?;
        let end = s.len();
        match name.as_str() {
            "none" => {
                reject_unknown(&params, &[])?;
                Ok(Potential::None)
            }
            "quadratic" => {
                reject_unknown(&params, &["a", "offset"])?;
                Ok(Potential::Quadratic {
                    a: take(&params, "a", end)?,
                    offset: take(&params, "offset", end)?,
                })
            }
            "quartic" | "quartic_well" => {
                reject_unknown(&params, &["a", "offset"])?;
                Ok(Potential::Quartic {
                    a: take(&params, "a", end)?,
                    offset: take(&params, "offset", end)?,
                })
            }
            other => Err(SyntaxError {
                pos: s.len() - s.trim_start().len(),
                message: format!("unknown potential '{other}'"),
            }),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Potential::None => write!(f, "none"),
            Potential::Quadratic { a, offset } => write!(f, "quadratic:a={a:?},offset={offset:?}"),
            Potential::Quartic { a, offset } => write!(f, "quartic:a={a:?},offset={offset:?}"),
        }
    }
}

/// Which lower/upper bound on `β'` is demanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// `β' ≥ γ > 0`
    I,
    /// `γ ≤ β' ≤ γ₁`
    IPrime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClauseResult {
    pub clause: &'static str,
    pub pass: bool,
    pub required: bool,
    pub note: String,
}

/// Sampled certificate of the structural assumptions on `(β, b, Φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub variant: Variant,
    pub gamma: f64,
    pub gamma1: f64,
    pub b0: f64,
    pub b_sup: f64,
    pub grad_phi_sup: f64,
    /// `sup (div D)⁻` over cell centres.
    pub div_d_negative_sup: f64,
    pub div_d_abs_sup: f64,
    pub phi_min: f64,
    /// `∫ Φ^{-2} dx` over the truncated domain.
    pub phi_neg_power_integral: f64,
    pub clauses: Vec<ClauseResult>,
}

impl HypothesisReport {
    /// True iff every clause required by the variant holds.
    pub fn pass(&self) -> bool {
        self.clauses.iter().filter(|c| c.required).all(|c| c.pass)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

/// `{0} ∪ logspace(1e-6, 1e6)` plus an even sweep of `[lo, hi]`.
pub fn probe_points(density_range: Option<(f64, f64)>) -> Vec<f64> {
    let mut r = vec![0.0];
    r.extend((0..=120).map(|k| 10f64.powf(-6.0 + 0.1 * k as f64)));
    if let Some((lo, hi)) = density_range {
        let lo = lo.max(0.0);
        r.extend((0..=64).map(|k| lo + (hi - lo) * k as f64 / 64.0));
    }
    r
}

/// Sampled test for boundedness: the top decade of the probe range must
/// not raise the running maximum.
fn bounded_above<F: Fn(f64) -> f64>(f: F) -> bool {
    let body = (0..=110)
        .map(|k| f(10f64.powf(-6.0 + 0.1 * k as f64)))
        .fold(f64::NEG_INFINITY, f64::max);
    let tail = (0..=10)
        .map(|k| f(10f64.powf(5.0 + 0.1 * k as f64)))
        .fold(f64::NEG_INFINITY, f64::max);
    tail <= body * (1.0 + 1e-6) + 1e-12
}

/// Sampled check of the structural assumptions on `β`, `b` and `Φ`.
///
/// Bounds are taken over [`probe_points`] together with the realised
/// density range of a run. The `Φ`-clauses can only be checked on the
/// truncated domain and say so in their notes.
pub fn validate_hypothesis1(
    beta: &ScalarLaw,
    b: &ScalarLaw,
    phi: &Potential,
    variant: Variant,
    grid: &Grid,
    density_range: Option<(f64, f64)>,
) -> HypothesisReport {
    let probes = probe_points(density_range);
    let dbeta: Vec<f64> = probes.iter().map(|&r| beta.derivative(r)).collect();
    let gamma = dbeta.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma1 = dbeta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bvals: Vec<f64> = probes.iter().map(|&r| b.evaluate(r)).collect();
    let b0 = bvals.iter().copied().fold(f64::INFINITY, f64::min);
    let b_sup = bvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let beta_zero = beta.evaluate(0.0).abs() <= 1e-15;
    let beta_bounded = bounded_above(|r| beta.derivative(r));
    let b_bounded = bounded_above(|r| b.evaluate(r).abs());

    let dim = grid.dim();
    let centers = grid.centers();
    let grad_phi_sup = centers
        .iter()
        .map(|&p| phi.gradient(p, dim).iter().map(|g| g * g).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let div_d: Vec<f64> = centers.iter().map(|&p| -phi.laplacian(p, dim)).collect();
    let div_d_negative_sup = div_d.iter().map(|d| (-d).max(0.0)).fold(0.0, f64::max);
    let div_d_abs_sup = div_d.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let phis: Vec<f64> = centers.iter().map(|&p| phi.value(p, dim)).collect();
    let phi_min = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let phi_neg_power_integral = if phi_min > 0.0 {
        phis.iter().map(|v| v.powi(-2)).sum::<f64>() * grid.cell_volume()
    } else {
        f64::INFINITY
    };

    let c_i = beta_zero && gamma > 0.0;
    let c_iprime = c_i && beta_bounded && gamma1.is_finite();
    let clauses = vec![
        ClauseResult {
            clause: "i",
            pass: c_i,
            required: variant == Variant::I,
            note: if c_i {
                format!("gamma = {gamma:e}")
            } else if !beta_zero {
                "beta(0) != 0".into()
            } else {
                format!("min beta' = {gamma:e} is not positive (attained as r -> 0)")
            },
        },
        ClauseResult {
            clause: "i'",
            pass: c_iprime,
            required: variant == Variant::IPrime,
            note: if beta_bounded {
                format!("gamma = {gamma:e}, gamma1 = {gamma1:e}")
            } else {
                "beta' unbounded above on the probe range".into()
            },
        },
        ClauseResult {
            clause: "ii",
            pass: b0 > 0.0 && b_bounded,
            required: true,
            note: format!("b0 = {b0:e}, sup b = {b_sup:e}"),
        },
        ClauseResult {
            clause: "iii",
            pass: grad_phi_sup.is_finite(),
            required: true,
            note: format!("sup |grad Phi| = {grad_phi_sup:e}; verified on domain only"),
        },
        ClauseResult {
            clause: "iv",
            pass: div_d_negative_sup.is_finite() && div_d_abs_sup.is_finite(),
            required: variant == Variant::I,
            note: format!(
                "sup (div D)^- = {div_d_negative_sup:e}, sup |div D| = {div_d_abs_sup:e}; verified on domain only"
            ),
        },
        ClauseResult {
            clause: "v",
            pass: phi_min >= 1.0 && phi.is_confining() && phi_neg_power_integral.is_finite(),
            required: variant == Variant::I,
            note: format!(
                "min Phi = {phi_min:e}, int Phi^-2 = {phi_neg_power_integral:e}, confining = {}",
                phi.is_confining()
            ),
        },
    ];
    HypothesisReport {
        variant,
        gamma,
        gamma1,
        b0,
        b_sup,
        grad_phi_sup,
        div_d_negative_sup,
        div_d_abs_sup,
        phi_min,
        phi_neg_power_integral,
        clauses,
    }
}

/// Cell-wise `γ₁ ΔΦ − b₀ |∇Φ|²`.
pub fn balance_map(gamma1: f64, b0: f64, phi: &Potential, grid: &Grid) -> Vec<f64> {
    let dim = grid.dim();
    grid.sample(|p| {
        let g = phi.gradient(p, dim);
        gamma1 * phi.laplacian(p, dim) - b0 * (g[0] * g[0] + g[1] * g[1])
    })
}

pub fn validate_balance_condition(beta_bounds: (f64, f64), b0: f64, phi: &Potential, grid: &Grid) -> bool {
    balance_map(beta_bounds.1, b0, phi, grid).iter().all(|v| *v <= 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [ScalarLaw; 6] = [
        ScalarLaw::Power { m: 2.0 },
        ScalarLaw::Power { m: 3.5 },
        ScalarLaw::Linear { sigma: 1.5 },
        ScalarLaw::LinearPlusPower { gamma: 0.5, m: 3.0 },
        ScalarLaw::Constant { c: 2.0 },
        ScalarLaw::BoundedRational { b0: 1.0, c: 1.0 },
    ];

    #[test]
    fn evaluate_examples() {
        assert_eq!(ScalarLaw::Power { m: 2.0 }.evaluate(3.0), 9.0);
        assert_eq!(ScalarLaw::Linear { sigma: 1.0 }.evaluate(5.0), 5.0);
        assert_eq!(ScalarLaw::BoundedRational { b0: 1.0, c: 1.0 }.evaluate(0.0), 2.0);
        assert_eq!(ScalarLaw::Power { m: 2.0 }.evaluate(-3.0), -9.0);
    }

    #[test]
    fn derivative_examples() {
        let r: f64 = 1.7;
        assert!((ScalarLaw::Power { m: 3.0 }.derivative(r) - 3.0 * r * r).abs() < 1e-14);
        assert_eq!(ScalarLaw::Linear { sigma: 0.3 }.derivative(-4.0), 0.3);
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        for law in ALL {
            let (q, _) = crate::quad::integrate(|s| law.evaluate(s), 0.0, 2.3, 1e-13, 0.0);
            assert!((law.antiderivative(2.3) - q).abs() < 1e-10, "{law}");
        }
    }

    #[test]
    fn parse_display_round_trip() {
        for law in ALL {
            assert_eq!(ScalarLaw::parse(&law.to_string()).unwrap(), law);
        }
        assert_eq!(ScalarLaw::parse("const:c=1.0").unwrap(), ScalarLaw::Constant { c: 1.0 });
        for p in [
            Potential::None,
            Potential::Quadratic { a: 0.5, offset: 1.0 },
            Potential::Quartic { a: 0.1, offset: 1.0 },
        ] {
            assert_eq!(Potential::parse(&p.to_string()).unwrap(), p);
        }
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = ScalarLaw::parse("power:m=abc").unwrap_err();
        assert_eq!(e.pos, 8);
        let e = ScalarLaw::parse("cubic:m=2").unwrap_err();
        assert!(e.message.contains("unknown law"));
        let e = ScalarLaw::parse("power").unwrap_err();
        assert!(e.message.contains("missing parameter 'm'"));
        assert!(Potential::parse("quadratic:a=1").is_err());
        assert!(ScalarLaw::parse("linear:sigma=1,tau=2").is_err());
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let h = 1e-5;
        for phi in [
            Potential::Quadratic { a: 0.7, offset: 1.0 },
            Potential::Quartic { a: 0.1, offset: 1.0 },
        ] {
            for dim in [1, 2] {
                let p = [0.8, if dim == 2 { -0.4 } else { 0.0 }];
                let g = phi.gradient(p, dim);
                let mut lap = 0.0;
                for k in 0..dim {
                    let mut pp = p;
                    let mut pm = p;
                    pp[k] += h;
                    pm[k] -= h;
                    let fd = (phi.value(pp, dim) - phi.value(pm, dim)) / (2.0 * h);
                    assert!((fd - g[k]).abs() < 1e-8);
                    let (gp, gm) = (phi.gradient(pp, dim)[k], phi.gradient(pm, dim)[k]);
                    lap += (gp - gm) / (2.0 * h);
                }
                assert!((lap - phi.laplacian(p, dim)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn hypothesis_heat_with_quadratic_passes() {
        let grid = Grid::line(-8.0, 8.0, 64).unwrap();
        let rep = validate_hypothesis1(
            &ScalarLaw::Linear { sigma: 1.0 },
            &ScalarLaw::Constant { c: 1.0 },
            &Potential::Quadratic { a: 0.5, offset: 1.0 },
            Variant::I,
            &grid,
            None,
        );
        assert!(rep.clauses.iter().all(|c| c.pass), "{:?}", rep.clauses);
        assert_eq!(rep.gamma, 1.0);
        assert_eq!(rep.gamma1, 1.0);
        assert!(rep.pass());
    }

    #[test]
    fn hypothesis_power_fails_upper_and_lower_bounds() {
        let grid = Grid::line(-4.0, 4.0, 32).unwrap();
        let rep = validate_hypothesis1(
            &ScalarLaw::Power { m: 2.0 },
            &ScalarLaw::Constant { c: 1.0 },
            &Potential::Quadratic { a: 0.5, offset: 1.0 },
            Variant::IPrime,
            &grid,
            Some((0.0, 0.5)),
        );
        assert!(!rep.clause("i'").unwrap().pass);
        assert!(!rep.clause("i").unwrap().pass);
        assert!(!rep.pass());
    }

    #[test]
    fn hypothesis_reports_gamma_for_linear_plus_power() {
        let grid = Grid::line(-4.0, 4.0, 32).unwrap();
        let rep = validate_hypothesis1(
            &ScalarLaw::LinearPlusPower { gamma: 0.5, m: 3.0 },
            &ScalarLaw::BoundedRational { b0: 1.0, c: 1.0 },
            &Potential::Quartic { a: 0.1, offset: 1.0 },
            Variant::I,
            &grid,
            None,
        );
        assert!((rep.gamma - 0.5).abs() < 1e-12);
        assert!((rep.b0 - 1.0).abs() < 1e-9);
        assert!(rep.clause("i").unwrap().pass);
        assert!(!rep.clause("i'").unwrap().pass);
        assert!(rep.pass());
    }

    #[test]
    fn hypothesis_is_deterministic() {
        let grid = Grid::line(-4.0, 4.0, 32).unwrap();
        let run = || {
            validate_hypothesis1(
                &ScalarLaw::LinearPlusPower { gamma: 0.5, m: 3.0 },
                &ScalarLaw::BoundedRational { b0: 1.0, c: 1.0 },
                &Potential::Quartic { a: 0.1, offset: 1.0 },
                Variant::I,
                &grid,
                Some((0.0, 1.3)),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn balance_condition_examples() {
        let grid = Grid::line(-3.0, 3.0, 60).unwrap();
        assert!(validate_balance_condition((1.0, 1.0), 1.0, &Potential::None, &grid));
        // 2aγ₁ > 0 = 4a²b₀x² at x = 0
        let quad = Potential::Quadratic { a: 0.5, offset: 1.0 };
        assert!(!validate_balance_condition((1.0, 1.0), 1.0, &quad, &grid));

        let (a, g1, b0) = (0.1, 2.0, 1.0);
        let quartic = Potential::Quartic { a, offset: 1.0 };
        let map = balance_map(g1, b0, &quartic, &grid);
        for (c, v) in map.iter().enumerate() {
            let x = grid.center(c)[0];
            let expected = 12.0 * a * g1 * x * x - 16.0 * a * a * b0 * x.powi(6);
            assert!((v - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }
    }
}
