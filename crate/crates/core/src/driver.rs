//! Scenario driver: runs a configured experiment, assembles the
//! verification report, and writes the CSV artifacts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{gaussian, BarenblattProfile};
use crate::config::{InitSpec, RunConfig};
use crate::energy::{EnergyFunctional, EnergyMode};
use crate::error::{Error, Result};
use crate::geometry::{nested_generators, support_box, TestProfile};
use crate::grid::{weighted_inner, DensityField, POSITIVITY_TOL};
use crate::laws::{probe_points, validate_balance_condition, validate_hypothesis1, Potential, ScalarLaw, Variant};
use crate::solver::{dissipation_rate, integrate_path, StoreRule, Trajectory};
use crate::verify::{
    battery_residuals, differential_identity, dissipation_identity, dissipation_integral, g_membership_ladder,
    interior_indices, lyapunov_check, percentile, refinement_slope, VerificationReport,
};

/// Allowed `|mass(u(t)) − mass(u(t₀))|`.
pub const MASS_TOL: f64 = 1e-10;
/// Allowed drift of `E` along a run started at equilibrium.
pub const STATIONARY_ENERGY_TOL: f64 = 1e-10;
pub const STATIONARY_GRADIENT_TOL: f64 = 1e-6;
pub const STATIONARY_PROFILE_TOL: f64 = 1e-6;

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub trajectory: Trajectory,
    pub report: VerificationReport,
    /// Per-level scalars consumed by the refinement study.
    pub metrics: RunMetrics,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub h: f64,
    pub gf_percentile: Option<f64>,
    pub rhs_gap_percentile: Option<f64>,
    pub diff_identity_max: Option<f64>,
    pub reference_l1: Option<f64>,
    pub dissipation_gap: Option<f64>,
    pub dissipation_integral: Option<f64>,
}

fn mode_label(mode: &EnergyMode) -> &'static str {
    match mode {
        EnergyMode::ClassicalPme { .. } => "classical",
        EnergyMode::General { .. } => "general",
        EnergyMode::MatrixDiagonal { .. } => "matrix_diagonal",
    }
}

/// `exp(−c Φ/σ) / Z` for linear `β = σr`, constant `b = c` and quadratic `Φ`.
fn gaussian_equilibrium(mode: &EnergyMode) -> Option<(f64, f64)> {
    match *mode {
        EnergyMode::General {
            beta: ScalarLaw::Linear { sigma },
            b: ScalarLaw::Constant { c },
            phi: Potential::Quadratic { a, .. },
        } => Some((sigma, c * a)),
        _ => None,
    }
}

/// The exact solution at `t1`, when one is known in closed form.
fn reference_state(cfg: &RunConfig) -> Result<Option<(&'static str, DensityField)>> {
    let grid = &cfg.grid;
    let span = cfg.solver.t1 - cfg.solver.t0;
    match (&cfg.mode, &cfg.init) {
        (EnergyMode::ClassicalPme { m }, InitSpec::Barenblatt { m: mi, t0 }) if (m - mi).abs() < 1e-15 => {
            let profile = BarenblattProfile::new(*m, grid.dim())?;
            Ok(Some(("barenblatt", profile.sample(t0 + span, grid)?.0)))
        }
        (
            EnergyMode::General {
                beta: ScalarLaw::Linear { sigma },
                phi: Potential::None,
                ..
            },
            InitSpec::Gaussian { mean, sigma: s0 },
        ) => {
            let std = (s0 * s0 + 2.0 * sigma * span).sqrt();
            Ok(Some(("heat_kernel", gaussian(grid, *mean, std)?)))
        }
        _ => Ok(None),
    }
}

/// Test functions: the nested sequence over the support of `u`, then
/// `extra` bumps placed by a seeded generator.
pub fn probe_battery(field: &DensityField, count: usize, extra: usize, seed: u64) -> Vec<TestProfile> {
    let mut out = nested_generators(field, count);
    if extra == 0 {
        return out;
    }
    let grid = field.grid();
    let (lo, hi) = support_box(field, 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let mut c = [0.0; 2];
        let mut width: f64 = f64::INFINITY;
        for k in 0..grid.dim() {
            let w = hi[k] - lo[k];
            c[k] = lo[k] + w * rng.random_range(0.25..0.75);
            width = width.min(w);
        }
        out.push(TestProfile::bump(c, width * rng.random_range(0.15..0.35)));
    }
    out
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// Runs one configured experiment with every enabled check.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    let fnl = cfg.functional()?;
    let u0 = cfg.initial_state(&fnl)?;
    let traj = integrate_path(&u0, &fnl, &cfg.solver, &mut [])?;
    let v = &cfg.verify;
    let mut report = VerificationReport::default();
    let mut metrics = RunMetrics {
        h: cfg.grid.h(),
        ..Default::default()
    };
    report.notes.extend(traj.warnings.iter().cloned());

    let energies: Vec<f64> = traj.states.iter().map(|s| fnl.energy_value(s)).collect();
    report.energy = traj
        .times
        .iter()
        .zip(&traj.states)
        .zip(&energies)
        .map(|((t, s), e)| (*t, *e, dissipation_rate(s, &fnl)))
        .collect();

    let drift = traj.total_mass_drift().max(traj.max_step_mass_drift());
    report.push("mass_drift", "probability-solution", drift, MASS_TOL, drift <= MASS_TOL);
    let min_u = traj.min_value();
    report.push(
        "min_density",
        "probability-solution",
        min_u,
        -POSITIVITY_TOL,
        min_u >= -POSITIVITY_TOL,
    );

    if v.lyapunov {
        let rec = lyapunov_check(&traj, &fnl);
        let worst = rec.violations.iter().map(|(_, r)| *r).fold(0.0, f64::max);
        report.push(
            "lyapunov_violations",
            "energy-lyapunov",
            rec.violations.len() as f64,
            0.0,
            rec.pass(),
        );
        if rec.pass() && worst > 0.0 {
            report.notes.push(format!("largest tolerated energy rise {worst:e}"));
        }
        if matches!(cfg.init, InitSpec::Gibbs) {
            report.push(
                "stationary_energy_drift",
                "stationary-state",
                rec.max_deviation,
                STATIONARY_ENERGY_TOL,
                rec.max_deviation <= STATIONARY_ENERGY_TOL,
            );
        }
        report.lyapunov = Some(rec);
    }

    if v.gf_residual {
        let battery = probe_battery(&u0, v.battery, v.random_probes, v.seed);
        let indices = interior_indices(&traj, v.samples);
        if indices.is_empty() {
            report
                .notes
                .push("gradient-flow residual skipped: fewer than three stored states".into());
        } else {
            report.residuals = battery_residuals(&traj, &fnl, &battery, &indices)?;
            let res: Vec<f64> = report.residuals.iter().map(|r| r.value.residual).collect();
            let gaps: Vec<f64> = report.residuals.iter().map(|r| r.value.rhs_gap).collect();
            let p = percentile(&res, v.gf_percentile);
            let g = percentile(&gaps, v.gf_percentile);
            report.push(
                "gf_residual_percentile",
                "gradflow-P-single-h",
                p,
                v.gf_tol,
                p <= v.gf_tol,
            );
            report.push(
                "rhs_gap_percentile",
                "weighted-gradient-identity",
                g,
                f64::INFINITY,
                true,
            );
            metrics.gf_percentile = Some(p);
            metrics.rhs_gap_percentile = Some(g);
        }
    }

    if v.diff_identity {
        let mid = nearest_index(&traj.times, 0.5 * (cfg.solver.t0 + cfg.solver.t1));
        let field = &traj.states[mid];
        let probes = probe_battery(field, v.battery, v.random_probes, v.seed);
        let checks = differential_identity(&fnl, field, &probes)?;
        let worst = checks.iter().map(|c| c.error).fold(0.0, f64::max);
        report.push(
            "differential_identity",
            "diffG-general",
            worst,
            v.diff_tol,
            worst <= v.diff_tol,
        );
        metrics.diff_identity_max = Some(worst);
    }

    if v.dissipation && traj.len() >= 2 {
        let bal = dissipation_identity(&traj, &fnl, 0, traj.len() - 1)?;
        // a run at equilibrium has nothing to balance
        let gap = if (bal.lhs - bal.rhs).abs() <= 1e-12 {
            0.0
        } else {
            bal.gap
        };
        report.push(
            "dissipation_identity_gap",
            "energy-dissipation-identity",
            gap,
            v.dissipation_tol,
            gap <= v.dissipation_tol,
        );
        metrics.dissipation_gap = Some(gap);
    }

    if v.dissipation_integral {
        let total = dissipation_integral(&traj, &fnl);
        report.dissipation_integral = Some(total);
        report.push(
            "dissipation_integral",
            "dissipation-integral",
            total,
            f64::INFINITY,
            total.is_finite(),
        );
        metrics.dissipation_integral = Some(total);
        if let EnergyMode::ClassicalPme { m } = cfg.mode {
            if m < 3.0 || cfg.grid.dim() < 3 {
                report.notes.push(format!(
                    "dissipation integral: finiteness is established for m >= 3, d >= 3; this run has m = {m}, d = {}, so only finiteness and refinement stability are checked",
                    cfg.grid.dim()
                ));
            }
        }
    }

    if v.stationary {
        stationary_checks(cfg, &fnl, &traj, &mut report)?;
    }

    if let Some((kind, exact)) = reference_state(cfg)? {
        let err = traj
            .last()
            .expect("trajectory holds the initial state")
            .l1_distance(&exact)?;
        let tol = v.reference_tol.unwrap_or(f64::INFINITY);
        let name = format!("{kind}_l1_error");
        report.push(&name, "analytic-reference", err, tol, err <= tol);
        metrics.reference_l1 = Some(err);
    }

    if v.projection_ladder {
        if fnl.is_classical() {
            report.notes.push("projection ladder skipped: classical mode".into());
        } else {
            let indices = interior_indices(&traj, v.ladder_times);
            let records = g_membership_ladder(&traj, &fnl, &v.ladder_counts, &indices)?;
            let rise = records
                .iter()
                .flat_map(|r| r.residuals.windows(2).map(|w| (w[1] - w[0]) / w[0].max(1e-300)))
                .fold(f64::NEG_INFINITY, f64::max);
            let monotone = records.iter().all(|r| r.monotone());
            report.push("projection_ladder_max_rise", "G-nu-closure", rise, 1e-9, monotone);
            let top = records
                .iter()
                .map(|r| *r.residuals.last().unwrap_or(&0.0))
                .fold(0.0, f64::max);
            report.push("projection_residual_top", "G-nu-closure", top, f64::INFINITY, true);
            report.ladder = records;
        }
    }

    Ok(RunArtifacts {
        config: cfg.clone(),
        trajectory: traj,
        report,
        metrics,
    })
}

fn stationary_checks(
    cfg: &RunConfig,
    fnl: &EnergyFunctional,
    traj: &Trajectory,
    report: &mut VerificationReport,
) -> Result<()> {
    let grid = &cfg.grid;
    let inf = fnl.stationary_state(grid)?.density;
    let a = fnl.gradient_field(&inf)?;
    let w: Vec<f64> = inf.values().iter().map(|&v| 1.0 / fnl.mobility(v.max(0.0))).collect();
    let norm = weighted_inner(&inf, &w, &a, &a)?.sqrt();
    report.push(
        "stationary_gradient_norm",
        "stationary-state",
        norm,
        STATIONARY_GRADIENT_TOL,
        norm <= STATIONARY_GRADIENT_TOL,
    );
    let l1 = traj
        .last()
        .expect("trajectory holds the initial state")
        .l1_distance(&inf)?;
    let tol = cfg.verify.stationary_l1_tol.unwrap_or(f64::INFINITY);
    report.push("stationary_l1_distance", "stationary-state", l1, tol, l1 <= tol);
    if let Some((sigma, ca)) = gaussian_equilibrium(&cfg.mode) {
        let d = grid.dim() as f64;
        let z = (std::f64::consts::PI * sigma / ca).powf(0.5 * d);
        let worst = grid
            .centers()
            .iter()
            .zip(inf.values())
            .map(|(p, u)| {
                let r2: f64 = p[..grid.dim()].iter().map(|x| x * x).sum();
                ((-ca * r2 / sigma).exp() / z - u).abs()
            })
            .fold(0.0, f64::max);
        report.push(
            "stationary_gaussian_match",
            "stationary-state",
            worst,
            STATIONARY_PROFILE_TOL,
            worst <= STATIONARY_PROFILE_TOL,
        );
    }
    Ok(())
}

/// One level of a refinement study.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementLevel {
    pub cells: usize,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefinementStudy {
    pub levels: Vec<RefinementLevel>,
    pub report: VerificationReport,
}

/// The configured run on each of `cells`, with stored times spaced in
/// proportion to `h`.
pub fn refinement_study(cfg: &RunConfig) -> Result<RefinementStudy> {
    let base = cfg.grid.cells_per_axis()[0];
    let cells = if cfg.verify.refinement_cells.is_empty() {
        vec![base, 2 * base, 4 * base]
    } else {
        cfg.verify.refinement_cells.clone()
    };
    let mut study = RefinementStudy::default();
    for &n in &cells {
        let mut level = cfg.with_cells(n)?;
        let ratio = n as f64 / base as f64;
        level.solver.store = match cfg.solver.store {
            StoreRule::Interval(d) => StoreRule::Interval(d / ratio),
            StoreRule::Every(k) => StoreRule::Every(((k as f64) * ratio).round().max(1.0) as usize),
        };
        level.verify.projection_ladder = false;
        let art = run(&level)?;
        study
            .report
            .notes
            .extend(art.report.notes.iter().map(|s| format!("cells = {n}: {s}")));
        study.levels.push(RefinementLevel {
            cells: n,
            metrics: art.metrics,
        });
    }
    let v = &cfg.verify;
    let h: Vec<f64> = study.levels.iter().map(|l| l.metrics.h).collect();
    let series = |f: fn(&RunMetrics) -> Option<f64>| -> Option<Vec<f64>> {
        study.levels.iter().map(|l| f(&l.metrics)).collect()
    };
    let mut slope_row = |name: &str, anchor: &'static str, values: Option<Vec<f64>>, min: Option<f64>| {
        if let Some(vals) = values {
            let s = refinement_slope(&h, &vals);
            let tol = min.unwrap_or(f64::NEG_INFINITY);
            study.report.push(name, anchor, s, tol, s >= tol);
        }
    };
    slope_row(
        "gf_residual_order",
        "gradflow-P-single-h",
        series(|m| m.gf_percentile),
        v.gf_order,
    );
    slope_row(
        "differential_identity_order",
        "diffG-general",
        series(|m| m.diff_identity_max),
        v.diff_order,
    );
    slope_row(
        "reference_l1_order",
        "analytic-reference",
        series(|m| m.reference_l1),
        v.reference_order,
    );
    if let Some(gaps) = series(|m| m.dissipation_gap) {
        let rises = gaps.windows(2).filter(|w| w[1] > w[0]).count();
        study.report.push(
            "dissipation_gap_rises",
            "energy-dissipation-identity",
            rises as f64,
            0.0,
            rises == 0,
        );
    }
    if let (Some(ints), Some(tol)) = (series(|m| m.dissipation_integral), v.dissipation_stability) {
        let n = ints.len();
        let change = (ints[n - 1] - ints[n - 2]).abs() / ints[n - 1].abs();
        study.report.push(
            "dissipation_integral_change",
            "dissipation-integral",
            change,
            tol,
            change <= tol,
        );
    }
    Ok(study)
}

/// Clause-by-clause structural report for the configured model.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub lines: Vec<String>,
    pub pass: bool,
}

pub fn validate(cfg: &RunConfig) -> Result<ValidationReport> {
    let grid = &cfg.grid;
    let mut lines = vec![format!("mode: {}", mode_label(&cfg.mode))];
    let (beta, b, phi) = match cfg.mode {
        EnergyMode::ClassicalPme { m } => {
            lines.push(format!(
                "skipped: classical porous-medium pathway (beta = r^{m}, b = 1, no potential) needs no structural hypothesis"
            ));
            return Ok(ValidationReport { lines, pass: true });
        }
        EnergyMode::General { beta, b, phi } => (beta, b, phi),
        EnergyMode::MatrixDiagonal { psi, b_diag, phi } => {
            let probes = probe_points(None);
            let psi_min = probes.iter().map(|&r| psi.evaluate(r)).fold(f64::INFINITY, f64::min);
            let ok = psi_min > 0.0 && psi_min.is_finite();
            lines.push(format!(
                "clause psi: {} (required) inf psi = {psi_min:e}",
                if ok { "pass" } else { "FAIL" }
            ));
            if !ok {
                lines.push("the ratio B^-1 A = psi Id must be bounded below by a positive constant".into());
            }
            // with psi standing in for beta'/b the remaining clauses concern b and Phi only
            let report = validate_hypothesis1(
                &ScalarLaw::Linear { sigma: 1.0 },
                &b_diag,
                &phi,
                Variant::IPrime,
                grid,
                None,
            );
            let mut pass = ok;
            for c in report.clauses.iter().filter(|c| c.clause != "i" && c.clause != "i'") {
                let required = c.clause == "ii" || c.clause == "iii";
                pass &= !required || c.pass;
                lines.push(format!(
                    "clause {}: {}{} {}",
                    c.clause,
                    if c.pass { "pass" } else { "FAIL" },
                    if required { " (required)" } else { "" },
                    c.note
                ));
            }
            return Ok(ValidationReport { lines, pass });
        }
    };
    let report = validate_hypothesis1(&beta, &b, &phi, Variant::IPrime, grid, None);
    let strict = validate_hypothesis1(&beta, &b, &phi, Variant::I, grid, None);
    for c in &report.clauses {
        let strict_req = strict.clause(c.clause).map(|s| s.required).unwrap_or(false);
        let tag = match (c.required, strict_req) {
            (true, _) => " (required)",
            (false, true) => " (strict variant only)",
            _ => "",
        };
        lines.push(format!(
            "clause {}: {}{tag} {}",
            c.clause,
            if c.pass { "pass" } else { "FAIL" },
            c.note
        ));
    }
    if phi.is_confining() && report.gamma1.is_finite() {
        let ok = validate_balance_condition((report.gamma, report.gamma1), report.b0, &phi, grid);
        lines.push(format!(
            "balance condition gamma1 Laplacian(Phi) <= b0 |grad Phi|^2: {}",
            if ok { "holds" } else { "fails somewhere on the grid" }
        ));
    }
    Ok(ValidationReport {
        lines,
        pass: report.pass(),
    })
}

/// Floats with 17 significant digits, shortest exact integers for counts.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(dir.join(name))?)
}

/// Writes `trajectory.csv`, `residuals.csv`, `summary.csv`, `notes.txt`
/// and, when the projection ladder ran, `ladder.csv`.
pub fn write_run(dir: &Path, art: &RunArtifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stride = art.config.output.stride.max(1);
    let mut w = writer(dir, "trajectory.csv")?;
    w.write_record(["t", "mass", "min_u", "max_u", "energy", "dissipation_rate"])?;
    let last = art.trajectory.len().saturating_sub(1);
    for (k, ((t, e, d), s)) in art.report.energy.iter().zip(&art.trajectory.states).enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        w.write_record([
            fmt_f64(*t),
            fmt_f64(s.mass()),
            fmt_f64(s.min()),
            fmt_f64(s.max()),
            fmt_f64(*e),
            fmt_f64(*d),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "residuals.csv")?;
    w.write_record(["t", "zeta_id", "gf_residual", "rhs_gap"])?;
    for r in &art.report.residuals {
        w.write_record([
            fmt_f64(r.value.t),
            r.zeta_id.to_string(),
            fmt_f64(r.value.residual),
            fmt_f64(r.value.rhs_gap),
        ])?;
    }
    w.flush()?;

    write_summary(dir, &art.report)?;

    if !art.report.ladder.is_empty() {
        let mut w = writer(dir, "ladder.csv")?;
        w.write_record(["t", "count", "residual", "gradient_norm"])?;
        for rec in &art.report.ladder {
            for (n, r) in rec.counts.iter().zip(&rec.residuals) {
                w.write_record([fmt_f64(rec.t), n.to_string(), fmt_f64(*r), fmt_f64(rec.gradient_norm)])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_summary(dir: &Path, report: &VerificationReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = writer(dir, "summary.csv")?;
    w.write_record(["check", "anchor", "status", "tolerance", "value"])?;
    for c in &report.checks {
        w.write_record([
            c.name.as_str(),
            c.anchor,
            if c.pass { "pass" } else { "fail" },
            &fmt_f64(c.tolerance),
            &fmt_f64(c.value),
        ])?;
    }
    w.flush()?;
    let mut notes = String::new();
    for n in &report.notes {
        notes.push_str(n);
        notes.push('\n');
    }
    std::fs::write(dir.join("notes.txt"), notes)?;
    Ok(())
}

/// Writes `refinement.csv` and the study's `summary.csv`.
pub fn write_refinement(dir: &Path, study: &RefinementStudy) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = writer(dir, "refinement.csv")?;
    w.write_record([
        "cells",
        "h",
        "gf_residual_percentile",
        "rhs_gap_percentile",
        "differential_identity",
        "reference_l1",
        "dissipation_gap",
        "dissipation_integral",
    ])?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for l in &study.levels {
        let m = &l.metrics;
        w.write_record([
            l.cells.to_string(),
            fmt_f64(m.h),
            opt(m.gf_percentile),
            opt(m.rhs_gap_percentile),
            opt(m.diff_identity_max),
            opt(m.reference_l1),
            opt(m.dissipation_gap),
            opt(m.dissipation_integral),
        ])?;
    }
    w.flush()?;
    write_summary(dir, &study.report)
}

/// Maps an error to the process exit status: 2 for input problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Io(_) => 2,
        _ => 1,
    }
}
