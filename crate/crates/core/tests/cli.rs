use std::path::Path;
use std::process::{Command, Output};

fn gradflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

const HEAT_WITH_WELL: &str = "[model]
mode = general
beta = linear:sigma=1.0
b = const:c=1.0
potential = quadratic:a=0.5,offset=1.0
[grid]
dim = 1
bounds = -8,8
cells = 64
[time]
t0 = 0
t1 = 0.5
store_interval = 0.05
[init]
profile = gaussian:mean=1.0,sigma=0.8
";

/// Tolerances for the 64-cell grid above.
const COARSE: &str = "gf_tol = 0.1\ndiff_tol = 0.5\n";

#[test]
fn stationary_smoke_passes_with_constant_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gradflow(&["run", "stationary_smoke", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let energy = column(&read(&tmp.path().join("o"), "trajectory.csv"), "energy");
    assert!(energy.len() > 50);
    let spread = energy.iter().map(|e| (e - energy[0]).abs()).fold(0.0, f64::max);
    assert!(spread <= 1e-10, "{spread}");
}

#[test]
fn barenblatt_run_records_error_and_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gradflow(&["run", "barenblatt_m2_1d", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let dir = tmp.path().join("o");
    let summary = read(&dir, "summary.csv");
    assert!(summary.starts_with("check,anchor,status,tolerance,value"));
    assert!(summary.contains("barenblatt_l1_error,analytic-reference,pass"));
    let residuals = read(&dir, "residuals.csv");
    assert!(residuals.lines().count() > 8);
    assert!(residuals.starts_with("t,zeta_id,gf_residual,rhs_gap"));
    let header = read(&dir, "trajectory.csv").lines().next().unwrap().to_string();
    assert_eq!(header, "t,mass,min_u,max_u,energy,dissipation_rate");
}

#[test]
fn missing_model_section_is_a_parse_error_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bad.ini"),
        "[grid]\ndim = 1\nbounds = -1,1\ncells = 8\n[time]\nt0 = 0\nt1 = 1\n[init]\nprofile = gibbs\n",
    )
    .unwrap();
    let o = gradflow(&["run", "bad.ini", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing [model]"), "{}", stderr(&o));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn bad_value_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bad.ini"),
        "scenario = heat_gaussian\n[time]\nt1 = soon\n",
    )
    .unwrap();
    let o = gradflow(&["run", "bad.ini"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3, column 6"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&gradflow(&["simulate", "x"], tmp.path())), 2);
    assert_eq!(code(&gradflow(&["run"], tmp.path())), 2);
    assert_eq!(code(&gradflow(&["run", "no_such_file.ini"], tmp.path())), 2);
    assert_eq!(
        code(&gradflow(&["run", "heat_gaussian", "--store-every", "0"], tmp.path())),
        2
    );
}

#[test]
fn failed_check_exits_with_one_and_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{HEAT_WITH_WELL}[verify]\ngf_tol = 1e-12\n");
    std::fs::write(tmp.path().join("strict.ini"), cfg).unwrap();
    let o = gradflow(&["run", "strict.ini", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 1);
    let summary = read(&tmp.path().join("o"), "summary.csv");
    assert!(summary.contains("gf_residual_percentile,gradflow-P-single-h,fail"));
}

#[test]
fn validate_heat_with_well_passes_its_clauses() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("heat.ini"), HEAT_WITH_WELL).unwrap();
    let o = gradflow(&["validate", "heat.ini"], tmp.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    for clause in ["i'", "ii", "iii", "v"] {
        assert!(out.contains(&format!("clause {clause}: pass")), "{clause}\n{out}");
    }
}

#[test]
fn validate_classical_is_skipped_with_a_note() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gradflow(&["validate", "barenblatt_m2_1d"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("skipped: classical porous-medium pathway"));
}

#[test]
fn validate_power_beta_in_general_mode_fails_at_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = HEAT_WITH_WELL.replace("linear:sigma=1.0", "power:m=2.0");
    std::fs::write(tmp.path().join("pme.ini"), cfg).unwrap();
    let o = gradflow(&["validate", "pme.ini"], tmp.path());
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("clause i:")).unwrap();
    assert!(line.contains("FAIL") && line.contains("r -> 0"), "{line}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{HEAT_WITH_WELL}[verify]\nrandom_probes = 2\nprojection_ladder = on\n{COARSE}");
    std::fs::write(tmp.path().join("c.ini"), cfg).unwrap();
    for dir in ["a", "b"] {
        assert_eq!(
            code(&gradflow(&["run", "c.ini", "--out", dir, "--seed", "3"], tmp.path())),
            0
        );
    }
    assert_eq!(
        code(&gradflow(&["run", "c.ini", "--out", "c", "--seed", "4"], tmp.path())),
        0
    );
    for name in ["trajectory.csv", "residuals.csv", "summary.csv", "ladder.csv"] {
        let a = read(&tmp.path().join("a"), name);
        assert_eq!(a, read(&tmp.path().join("b"), name), "{name}");
    }
    // the seed moves the random probes and nothing else
    assert_ne!(
        read(&tmp.path().join("a"), "residuals.csv"),
        read(&tmp.path().join("c"), "residuals.csv")
    );
    assert_eq!(
        read(&tmp.path().join("a"), "trajectory.csv"),
        read(&tmp.path().join("c"), "trajectory.csv")
    );
}

#[test]
fn store_every_controls_the_stored_states() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.ini"),
        format!("{HEAT_WITH_WELL}[output]\nstride = 1\n[verify]\n{COARSE}"),
    )
    .unwrap();
    let o = gradflow(&["run", "c.ini", "--out", "o", "--store-every", "7"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = column(&read(&tmp.path().join("o"), "trajectory.csv"), "t");
    let steps = t.len();
    assert!(steps > 3);
    // the step size is fixed by constant coefficients, so only the last interval differs
    let d0 = t[1] - t[0];
    assert!(t
        .windows(2)
        .take(steps - 2)
        .all(|w| ((w[1] - w[0]) - d0).abs() < 1e-9 * d0.max(1.0)));
}

#[test]
fn ladder_writes_refinement_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{HEAT_WITH_WELL}[verify]\nrefinement_cells = 32,64,128\ngf_order = 1.5\n");
    std::fs::write(tmp.path().join("c.ini"), cfg).unwrap();
    let o = gradflow(&["ladder", "c.ini", "--out", "o"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let table = read(&tmp.path().join("o"), "refinement.csv");
    assert_eq!(table.lines().count(), 4);
    assert!(read(&tmp.path().join("o"), "summary.csv").contains("gf_residual_order,gradflow-P-single-h,pass"));
}
