use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[model]
statistics = "fermion"
epsilon = [[0.3]]

[[model.reservoirs]]
modes = [
  { energy = -1.25, coupling = [0.15] },
  { energy = -0.75, coupling = [0.15] },
  { energy = -0.25, coupling = [0.15] },
  { energy = 0.25, coupling = [0.15] },
  { energy = 0.75, coupling = [0.15] },
  { energy = 1.25, coupling = [0.15] },
]

[initial_state]
kind = "partition_free"
beta = 2.0

[grid]
t_final = 5.0
steps = 250

[[outputs]]
quantity = "trace"

[[outputs]]
quantity = "occupations"

[[outputs]]
quantity = "coefficients"
path = "sub/coefficients.csv"
"#;

fn run(dir: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_fano-master"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (String, Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap().to_string();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect()).collect();
    (comment, header, rows)
}

#[test]
fn simulate_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    assert_eq!(run(dir.path(), &["simulate", &cfg]), 0);

    let (comment, header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert!(comment.starts_with("# config_hash="), "{comment}");
    assert!(comment.contains("steps=250"), "{comment}");
    assert_eq!(header, ["t", "trace"]);
    assert_eq!(rows.len(), 251);
    assert!(rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-8));

    let (_, header, rows) = read_csv(&dir.path().join("occupations.csv"));
    assert_eq!(header, ["t", "n_0"]);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[1])));

    let (_, header, _) = read_csv(&dir.path().join("sub/coefficients.csv"));
    assert_eq!(header.len(), 1 + 4 * 2);
    assert!(header.contains(&"gamma_bar_0_0_im".to_string()));
}

#[test]
fn runs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let cfg = write_config(dir.path(), CONFIG);
        assert_eq!(run(dir.path(), &["simulate", &cfg, "--grid-steps", "100"]), 0);
    }
    for name in ["trace.csv", "occupations.csv", "sub/coefficients.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn compare_reports_and_flags_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    assert_eq!(run(dir.path(), &["compare", &cfg]), 0);
    let (_, header, rows) = read_csv(&dir.path().join("comparison.csv"));
    assert_eq!(header, ["t", "u_err", "Gless_err", "moment_err", "trace_dist", "gamma_bar"]);
    assert!(rows.iter().all(|r| r[1] < 1e-3 && r[4] < 1e-3));

    let strict = format!("{CONFIG}\n[tolerances]\nu_err = 1e-14\n");
    let cfg = write_config(dir.path(), &strict);
    assert_eq!(run(dir.path(), &["compare", &cfg]), 3);
}

#[test]
fn compare_halved_step_writes_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("kind = \"partition_free\"\nbeta = 2.0", "kind = \"decoupled\"\nreservoirs = [{ beta = 2.0 }]\nsystem_occupation = [[1.0]]");
    let cfg = write_config(dir.path(), &text);
    assert_eq!(run(dir.path(), &["compare", &cfg, "--halve-step"]), 0);
    let (_, header, rows) = read_csv(&dir.path().join("convergence.csv"));
    assert_eq!(header, ["quantity", "err_h", "err_h2", "ratio"]);
    assert!(!rows.is_empty());
    let (_, _, rows) = read_csv(&dir.path().join("comparison.csv"));
    assert!(rows.iter().all(|r| r[5] == 0.0));
    assert!(dir.path().join("comparison_half_step.csv").exists());
}

#[test]
fn sweep_rows_and_empty_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    assert_eq!(run(dir.path(), &["sweep", &cfg, "--axis", "initial_state.beta", "--values", "1.0,2.0"]), 0);
    let (_, header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(header, ["value", "occupation", "target", "rel_deviation"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], 2.0);

    assert_eq!(run(dir.path(), &["sweep", &cfg, "--axis", "initial_state.beta", "--values"]), 0);
    let (_, _, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert!(rows.is_empty());

    assert_eq!(run(dir.path(), &["sweep", &cfg, "--axis", "model.nothing", "--values", "1.0"]), 1);
}

#[test]
fn bad_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("t_final", "t_finale"));
    assert_eq!(run(dir.path(), &["simulate", &cfg]), 1);
    assert_eq!(run(dir.path(), &["simulate", "/nonexistent/run.toml"]), 1);
}
