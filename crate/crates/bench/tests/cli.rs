use std::path::Path;
use std::process::Command;

fn heatinv(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_heatinv")).args(args).arg("--output_dir").arg(dir).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn converge_writes_table_plot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = heatinv(dir.path(), &["converge", "--N_list", "8,16", "--method_list", "shooting,hybrid"]);
    assert_eq!(code, 0, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,d,N,M,k,E_u,E_p,order_u,order_p,iters,wall_time_s,flags");
    assert_eq!(lines.count(), 4);
    assert!(std::fs::read_to_string(dir.path().join("converge.svg")).unwrap().starts_with("<svg"));
    let manifest = std::fs::read_to_string(dir.path().join("run_manifest.toml")).unwrap();
    assert!(manifest.contains("N_list = [8, 16]") && manifest.contains("# study: converge"), "{manifest}");
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(&cfg, "dimension = 2\nN_list = [8]\nmethod_list = [\"pure\"]\nk_rule = \"2N\"\n").unwrap();
    let (code, text) = heatinv(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--dimension", "1"]);
    assert_eq!(code, 0, "{text}");
    let rows = std::fs::read_to_string(dir.path().join("solve.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().starts_with("pure,1,8,16,7,"), "{rows}");
    assert!(dir.path().join("solution.csv").exists() && dir.path().join("solve.svg").exists());
}

#[test]
fn decay_and_cost_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = heatinv(dir.path(), &["decay", "--N_list", "12", "--k_list", "4,8,121"]);
    assert_eq!(code, 0, "{text}");
    let decay = std::fs::read_to_string(dir.path().join("decay.csv")).unwrap();
    assert_eq!(decay.lines().count(), 4);
    let (code, text) = heatinv(dir.path(), &["cost", "--N_list", "8,16", "--tolerances", "1e-1"]);
    assert_eq!(code, 0, "{text}");
    let summary = std::fs::read_to_string(dir.path().join("cost_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4, "{summary}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(heatinv(dir.path(), &["converge", "--dimension", "5"]).0, 2);
    assert_eq!(heatinv(dir.path(), &["converge", "--M_rule", "fast"]).0, 2);
    assert_eq!(heatinv(dir.path(), &["bogus"]).0, 2);
    // direct elimination is one-dimensional only
    let (code, text) =
        heatinv(dir.path(), &["converge", "--dimension", "2", "--N_list", "4", "--method_list", "direct"]);
    assert_eq!(code, 1, "{text}");
    assert!(std::fs::read_to_string(dir.path().join("converge.csv")).unwrap().contains("error"));
}
