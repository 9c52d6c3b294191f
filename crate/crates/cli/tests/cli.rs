use std::path::Path;
use std::process::Command;

fn qsid(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qsid")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_system_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let out = qsid(&["gen", "--seed", "3", "--out", s(&spec)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let traces_dir = dir.path().join("traces");
    let out = qsid(&["simulate", "--spec", s(&spec), "--strategy", "inf", "--n-samples", "200", "--out", s(&traces_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traces = traces_dir.join("traces.csv");
    let header = std::fs::read_to_string(&traces).unwrap();
    assert!(header.starts_with("k,ell,n,t,d,Ne"));

    let est = dir.path().join("estimate.json");
    let out = qsid(&["estimate", "--traces", s(&traces), "--restarts", "2", "--out", s(&est)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rec = dir.path().join("reconstruction.json");
    let out = qsid(&["reconstruct", "--estimate", s(&est), "--traces", s(&traces), "--truth", s(&spec), "--out", s(&rec)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: String = std::fs::read_to_string(&rec).unwrap();
    for key in ["\"H_hat\"", "\"lambda_hat\"", "\"S_error\"", "\"eps_H\""] {
        assert!(json.contains(key), "{key} missing");
    }

    let spectrum = dir.path().join("spectrum.csv");
    assert!(qsid(&["spectrum", "--traces", s(&traces), "--out", s(&spectrum)]).status.success());
    assert!(std::fs::read_to_string(&spectrum).unwrap().starts_with("omega,power"));

    let fig = dir.path().join("fig.csv");
    let out = qsid(&["tracefig", "--spec", s(&spec), "--strategy", "1000", "--k", "0", "--l", "2", "--out", s(&fig)]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&fig).unwrap().starts_with("t,ideal,sampled,Ne"));
}

#[test]
fn bench_writes_table_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"time_grid": {"n_samples": 150}, "fit": {"n_restarts": 2}}"#).unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = qsid(&[
            "bench", "--config", s(&config), "--seed", "11", "--arms", "inf_H", "--n-systems", "2", "--jobs", "1",
            "--out", s(&out_dir),
        ]);
        let code = out.status.code().unwrap();
        assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&out.stderr));
        let table = String::from_utf8(out.stdout).unwrap();
        assert!(table.contains("N_∞^H") && table.contains("ε̄_H"));
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"q_range": [80, 12]}"#).unwrap();
    assert_eq!(qsid(&["bench", "--config", s(&config)]).status.code(), Some(1));
    assert_eq!(qsid(&["bench", "--arms", "sometimes"]).status.code(), Some(1));
    assert_eq!(qsid(&["bench", "--n-systems", "0"]).status.code(), Some(1));
    assert_eq!(qsid(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qsid(&["bench", "--config", s(&dir.path().join("missing.json"))]).status.code(), Some(1));
}
