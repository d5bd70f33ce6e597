//! Runtime checks along a trajectory: the gradient-flow identity tested
//! against functions `ζ`, monotonicity of `E`, the energy-dissipation
//! balance, the dissipation integral, and projections onto the weighted
//! gradient subspace.

use crate::energy::{EnergyFunctional, EnergyMode};
use crate::error::{Error, Result};
use crate::geometry::{
    default_tau, diff_energy_fd, nested_generators, pairing, project_onto_g, sample_direction, CylinderFunction,
    GradientSubspaceBasis, ProfileDirection, SampledDirection, TestProfile,
};
use crate::grid::{gradient_of, integrate, integrate_dx, weighted_inner, DensityField, VectorFieldSample};
use crate::solver::{dissipation_rate, rate_of_change, Trajectory};

/// Constant in `tol_E = LYAPUNOV_C · dt (dt + h²) · max(1, |E|)` per step.
pub const LYAPUNOV_C: f64 = 10.0;
/// `‖∇ᴾ_b E‖_b` below which a state counts as stationary.
pub const EQUILIBRIUM_GRADIENT: f64 = 1e-8;
/// Share of time indices allowed above tolerance before a check fails.
pub const PERSISTENCE: f64 = 0.1;

/// One evaluation of `d/dt ∫ζu = −diff E(b(u)∇ζ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GfResidual {
    pub t: f64,
    /// Centred time difference of `∫ζu`.
    pub lhs: f64,
    /// `−⟨∇ᴾ_b E, b(u)∇ζ⟩_b` on cell faces.
    pub rhs_closed: f64,
    /// `−diff E(b(u)∇ζ)` by pushforward finite differences.
    pub rhs_fd: f64,
    /// `max_k |lhs − rhs_k| / max(1, |lhs|)`.
    pub residual: f64,
    /// `|rhs_closed − rhs_fd| / max(1, |rhs_closed|)`.
    pub rhs_gap: f64,
}

/// `b(u)∇ζ` at cell centres.
pub fn weighted_test_gradient(fnl: &EnergyFunctional, field: &DensityField, zeta: &TestProfile) -> VectorFieldSample {
    let mob: Vec<f64> = field.values().iter().map(|&v| fnl.mobility(v.max(0.0))).collect();
    zeta.sample_gradient(field.grid()).scaled(&mob)
}

/// `−⟨∇ᴾ_b E, b(u)∇ζ⟩_b = −∫ b(u) u ∇(g(u) + Φ)·∇ζ`, assembled on cell
/// faces with the solver's mobility; by summation by parts this is
/// `Σ ζ ∂ₜu`, i.e. `−∫∇β̃(u)·∇ζ + ∫ D b(u) u·∇ζ` in discrete form.
pub fn closed_form_rate(fnl: &EnergyFunctional, field: &DensityField, zeta: &TestProfile) -> Result<f64> {
    let grid = field.grid();
    let rate = rate_of_change(field, fnl);
    let z = zeta.sample(grid);
    let prod: Vec<f64> = rate.iter().zip(&z).map(|(r, z)| r * z).collect();
    integrate_dx(grid, &prod)
}

/// `−diff E(b(u)∇ζ)` along the pushforward curve, Richardson extrapolated.
pub fn fd_rate(fnl: &EnergyFunctional, field: &DensityField, zeta: &TestProfile) -> Result<f64> {
    let dir = SampledDirection::new(weighted_test_gradient(fnl, field, zeta));
    let tau = default_tau(&dir, field.grid());
    Ok(-diff_energy_fd(fnl, field, &dir, tau, true)?)
}

/// The gradient-flow identity for one `ζ` at stored index `t_index`.
pub fn gradient_flow_residual(
    traj: &Trajectory,
    fnl: &EnergyFunctional,
    zeta: &TestProfile,
    t_index: usize,
) -> Result<GfResidual> {
    if t_index == 0 || t_index + 1 >= traj.len() {
        return Err(Error::Index(format!(
            "gradient-flow residual needs an interior index, got {t_index} of {}",
            traj.len()
        )));
    }
    let (a, b) = (&traj.states[t_index - 1], &traj.states[t_index + 1]);
    let z = zeta.sample(a.grid());
    let lhs = (integrate(b, &z)? - integrate(a, &z)?) / (traj.times[t_index + 1] - traj.times[t_index - 1]);
    let field = &traj.states[t_index];
    let rhs_closed = closed_form_rate(fnl, field, zeta)?;
    let rhs_fd = fd_rate(fnl, field, zeta)?;
    let norm = lhs.abs().max(1.0);
    Ok(GfResidual {
        t: traj.times[t_index],
        lhs,
        rhs_closed,
        rhs_fd,
        residual: (lhs - rhs_closed).abs().max((lhs - rhs_fd).abs()) / norm,
        rhs_gap: (rhs_closed - rhs_fd).abs() / rhs_closed.abs().max(1.0),
    })
}

/// `ζ` index alongside its residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryResidual {
    pub t_index: usize,
    pub zeta_id: usize,
    pub value: GfResidual,
}

/// Residuals for every `ζ` of a fixed battery at the given interior indices.
pub fn battery_residuals(
    traj: &Trajectory,
    fnl: &EnergyFunctional,
    battery: &[TestProfile],
    indices: &[usize],
) -> Result<Vec<BatteryResidual>> {
    let mut out = Vec::with_capacity(battery.len() * indices.len());
    for &k in indices {
        for (j, zeta) in battery.iter().enumerate() {
            out.push(BatteryResidual {
                t_index: k,
                zeta_id: j,
                value: gradient_flow_residual(traj, fnl, zeta, k)?,
            });
        }
    }
    Ok(out)
}

/// Up to `count` interior indices spread evenly over the trajectory.
pub fn interior_indices(traj: &Trajectory, count: usize) -> Vec<usize> {
    let n = traj.len();
    if n < 3 || count == 0 {
        return Vec::new();
    }
    let inner = n - 2;
    if count >= inner {
        return (1..n - 1).collect();
    }
    let mut idx: Vec<usize> = (0..count)
        .map(|k| 1 + ((k as f64 + 0.5) * inner as f64 / count as f64) as usize)
        .collect();
    idx.dedup();
    idx
}

/// Nearest-rank percentile, `q ∈ [0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// True when more than `PERSISTENCE` of the values exceed `tol`.
pub fn persistent_violation(values: &[f64], tol: f64) -> bool {
    let bad = values.iter().filter(|v| !(**v <= tol)).count();
    bad as f64 > PERSISTENCE * values.len() as f64
}

/// Least-squares slope of `log err` against `log h`.
pub fn refinement_slope(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len().min(err.len()) as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovRecord {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// Allowed increase between consecutive stored states.
    pub tolerances: Vec<f64>,
    /// `(index, increase)` wherever `E` rose by more than its tolerance.
    pub violations: Vec<(usize, f64)>,
    /// `max_k |E_k − E_0|`.
    pub max_deviation: f64,
}

impl LyapunovRecord {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.energies.windows(2).all(|w| w[1] < w[0])
    }
}

/// Records `E` at each stored time and flags increases beyond the
/// accumulated per-step tolerance.
pub fn lyapunov_check(traj: &Trajectory, fnl: &EnergyFunctional) -> LyapunovRecord {
    let energies: Vec<f64> = traj.states.iter().map(|s| fnl.energy_value(s)).collect();
    let mut tolerances = Vec::new();
    let mut violations = Vec::new();
    for k in 1..energies.len() {
        let h = traj.states[k].grid().h();
        let (lo, hi) = (traj.step_index[k - 1], traj.step_index[k]);
        let scale = energies[k - 1].abs().max(1.0);
        let tol: f64 = traj.diagnostics[lo..hi]
            .iter()
            .map(|d| LYAPUNOV_C * d.dt * (d.dt + h * h) * scale)
            .sum::<f64>()
            + 4.0 * f64::EPSILON * scale * traj.states[k].grid().len() as f64;
        let rise = energies[k] - energies[k - 1];
        if rise > tol {
            violations.push((k, rise));
        }
        tolerances.push(tol);
    }
    let e0 = energies.first().copied().unwrap_or(0.0);
    let max_deviation = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
    LyapunovRecord {
        times: traj.times.clone(),
        energies,
        tolerances,
        violations,
        max_deviation,
    }
}

/// `D(u) = ∫ b(u) u |∇(g(u) + Φ)|²` at each stored state.
pub fn dissipation_series(traj: &Trajectory, fnl: &EnergyFunctional) -> Vec<f64> {
    traj.states.iter().map(|s| dissipation_rate(s, fnl)).collect()
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationBalance {
    /// `E(u(t)) − E(u(s))`.
    pub lhs: f64,
    /// `−∫ₛᵗ D(r) dr`.
    pub rhs: f64,
    /// `|lhs − rhs| / |lhs|`, zero when both vanish.
    pub gap: f64,
}

pub fn dissipation_identity(
    traj: &Trajectory,
    fnl: &EnergyFunctional,
    s_index: usize,
    t_index: usize,
) -> Result<DissipationBalance> {
    if s_index > t_index || t_index >= traj.len() {
        return Err(Error::Index(format!(
            "need s <= t < {}, got s = {s_index}, t = {t_index}",
            traj.len()
        )));
    }
    let lhs = fnl.energy_value(&traj.states[t_index]) - fnl.energy_value(&traj.states[s_index]);
    let d: Vec<f64> = traj.states[s_index..=t_index]
        .iter()
        .map(|s| dissipation_rate(s, fnl))
        .collect();
    let rhs = -trapezoid(&traj.times[s_index..=t_index], &d);
    let diff = (lhs - rhs).abs();
    let gap = if diff == 0.0 { 0.0 } else { diff / lhs.abs() };
    Ok(DissipationBalance { lhs, rhs, gap })
}

/// `∫ |∇ᴾE|² dt` over the stored path.
pub fn dissipation_integral(traj: &Trajectory, fnl: &EnergyFunctional) -> f64 {
    trapezoid(&traj.times, &dissipation_series(traj, fnl))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderRecord {
    pub t_index: usize,
    pub t: f64,
    pub counts: Vec<usize>,
    /// Residual norm relative to `‖∇ᴾ_b E‖`.
    pub residuals: Vec<f64>,
    pub gradient_norm: f64,
}

impl LadderRecord {
    /// Nonincreasing up to rounding.
    pub fn monotone(&self) -> bool {
        self.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14)
    }
}

/// Projects `∇ᴾ_b E(u)` onto nested generator spans of growing size.
pub fn g_membership_ladder(
    traj: &Trajectory,
    fnl: &EnergyFunctional,
    counts: &[usize],
    indices: &[usize],
) -> Result<Vec<LadderRecord>> {
    if matches!(fnl.mode(), EnergyMode::ClassicalPme { .. }) {
        return Err(Error::Domain(
            "the projection ladder needs a positive lower bound on beta'; classical PME is excluded".into(),
        ));
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    for &k in indices {
        let field = traj
            .states
            .get(k)
            .ok_or_else(|| Error::Index(format!("no stored state {k}")))?;
        let target = fnl.gradient_field(field)?;
        let all = nested_generators(field, top);
        let mut residuals = Vec::with_capacity(counts.len());
        let mut gradient_norm = 0.0;
        for &n in counts {
            let basis = GradientSubspaceBasis::for_energy(fnl, field.clone(), all[..n].to_vec())?;
            let p = project_onto_g(&basis, &target)?;
            gradient_norm = p.target_norm;
            residuals.push(if p.target_norm > 0.0 {
                p.residual_norm / p.target_norm
            } else {
                0.0
            });
        }
        out.push(LadderRecord {
            t_index: k,
            t: traj.times[k],
            counts: counts.to_vec(),
            residuals,
            gradient_norm,
        });
    }
    Ok(out)
}

/// `(⟨∇ᴾ_b E, b∇ᴾF⟩_b, diff E(b∇ᴾF))` for a cylinder function `F`.
pub fn cylinder_pairing_check(
    fnl: &EnergyFunctional,
    field: &DensityField,
    f: &CylinderFunction,
) -> Result<(f64, f64)> {
    let mob: Vec<f64> = field.values().iter().map(|&v| fnl.mobility(v.max(0.0))).collect();
    let grad_f = f.gradient(field)?.scaled(&mob);
    let dir = SampledDirection::new(grad_f.clone());
    // ⟨b∇ξ, b∇F⟩ with weight 1/b is ∫ ∇ξ·(b∇F) dν
    let xi = fnl.chemical_potential(field);
    let closed = pairing(field, &gradient_of(&xi, field.grid())?, &dir)?;
    let fd = diff_energy_fd(fnl, field, &dir, default_tau(&dir, field.grid()), true)?;
    Ok((closed, fd))
}

/// Closed pairing against the pushforward difference for one probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairingCheck {
    /// `⟨∇ᴾ_b E, φ⟩_b`.
    pub closed: f64,
    pub fd: f64,
    /// `|closed − fd| / (‖∇ᴾ_b E‖_b ‖φ‖_b)`.
    pub error: f64,
}

/// The differential identity `diff E(φ) = ⟨b∇(g+Φ), φ⟩_b` for `φ = ∇ζ`.
///
/// Errors are scaled by the Cauchy–Schwarz bound rather than by the
/// pairing itself, which can vanish for probes nearly orthogonal to the
/// gradient. Below `EQUILIBRIUM_GRADIENT` the gradient norm is replaced by one.
pub fn differential_identity(
    fnl: &EnergyFunctional,
    field: &DensityField,
    probes: &[TestProfile],
) -> Result<Vec<PairingCheck>> {
    let grid = field.grid();
    let a = fnl.gradient_field(field)?;
    let w: Vec<f64> = field.values().iter().map(|&v| 1.0 / fnl.mobility(v.max(0.0))).collect();
    let a_norm = weighted_inner(field, &w, &a, &a)?.sqrt();
    probes
        .iter()
        .map(|z| {
            let phi = ProfileDirection::Gradient {
                profile: *z,
                dim: grid.dim(),
            };
            let s = sample_direction(&phi, grid);
            let closed = weighted_inner(field, &w, &a, &s)?;
            let fd = diff_energy_fd(fnl, field, &phi, default_tau(&phi, grid), true)?;
            // at equilibrium the gradient vanishes and the error is absolute in ‖φ‖_b
            let scale =
                if a_norm < EQUILIBRIUM_GRADIENT { 1.0 } else { a_norm } * weighted_inner(field, &w, &s, &s)?.sqrt();
            let diff = (closed - fd).abs();
            let error = if diff == 0.0 { 0.0 } else { diff / scale };
            Ok(PairingCheck { closed, fd, error })
        })
        .collect()
}

/// One pass/fail row of a report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    /// The identity or property the check exercises.
    pub anchor: &'static str,
    pub pass: bool,
    pub tolerance: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerificationReport {
    /// `(t, E, D)` at each stored state.
    pub energy: Vec<(f64, f64, f64)>,
    pub residuals: Vec<BatteryResidual>,
    pub lyapunov: Option<LyapunovRecord>,
    pub dissipation_integral: Option<f64>,
    pub ladder: Vec<LadderRecord>,
    pub checks: Vec<CheckRow>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push(&mut self, name: &str, anchor: &'static str, value: f64, tolerance: f64, pass: bool) {
        self.checks.push(CheckRow {
            name: name.into(),
            anchor,
            pass: pass && value.is_finite(),
            tolerance,
            value,
        });
    }
}
