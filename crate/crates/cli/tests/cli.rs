use std::path::Path;
use std::process::{Command, Output};

fn fwi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fwi"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, method: &str) -> String {
    let p = dir.join(name);
    std::fs::write(
        &p,
        format!("# small inclusion run\ngrid = 41 41 50 50\nfrequencies_hz = 2\niterations = 2\nmethod = {method}\npml_width = 6\ndata_dir = data\n"),
    )
    .unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn synth_invert_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let psd = write_config(tmp.path(), "psd.cfg", "psd");
    let seq = write_config(tmp.path(), "seq.cfg", "agn-seq");

    let out = fwi(&["synth", "--config", &psd]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("data/data_2hz.txt").exists());

    let run_dir = tmp.path().join("run");
    let out = fwi(&["invert", "--config", &psd, "--method", "gn", "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "iter,freq_hz,misfit,model_rms");
    assert_eq!(lines.len(), 4);
    // 17 significant digits
    let misfit = lines[1].split(',').nth(2).unwrap();
    assert_eq!(misfit.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    for f in ["final_model.txt", "diagnostics.jsonl", "summary.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(run_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"gn\""));

    let csv = tmp.path().join("cmp.csv");
    let out = fwi(&["compare", "--configs", &psd, &seq, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("iter,psd,agn-seq\n"));
    assert_eq!(table.lines().count(), 4);
    assert!(tmp.path().join("cmp.py").exists());
}

#[test]
fn config_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    std::fs::write(&bad, "colour = blue\n").unwrap();
    let out = fwi(&["synth", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let good = write_config(tmp.path(), "good.cfg", "gn");
    let out = fwi(&["invert", "--config", &good, "--method", "newton", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    // data not synthesized yet
    let out = fwi(&["invert", "--config", &good, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let out = fwi(&["verify", "--check", "speed"]);
    assert_eq!(out.status.code(), Some(3));
    let out = fwi(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compare_rejects_mismatched_experiments() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.cfg", "gn");
    let b = tmp.path().join("b.cfg");
    std::fs::write(&b, "experiment = concrete\nmethod = gn\n").unwrap();
    let out = fwi(&["compare", "--configs", &format!("{a},{}", b.display()), "--out", tmp.path().join("c.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_gradient_reports_json() {
    let out = fwi(&["verify", "--check", "gradient"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["check"], "gradient");
    assert_eq!(v["passed"], true);
    for m in v["measurements"].as_array().unwrap() {
        assert!(m["value"].as_f64().unwrap() < m["tolerance"].as_f64().unwrap());
    }
}
