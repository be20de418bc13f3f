use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sideband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sideband"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_preset(name: &str, dir: &Path) -> String {
    let o = sideband(&["preset", "show", name]);
    assert!(o.status.success());
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, &o.stdout).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn preset_list_names_all_ten() {
    let o = sideband(&["preset", "list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().any(|l| l.starts_with("supp-fig8")));
}

#[test]
fn run_report_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4a");
    let out_s = out.to_string_lossy();
    let o = sideband(&["preset", "run", "fig4a", "--out", &out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n_b = "));

    let o = sideband(&["report", &out_s]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 modified or missing"));

    fs::write(out.join("occupancy.csv"), "edited\n").unwrap();
    let o = sideband(&["report", "--out", &out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("mismatch: occupancy.csv"));
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_preset("fig4a", dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = sideband(&[
            "simulate",
            "--config",
            &config,
            "--seed",
            seed,
            "--out",
            &out.to_string_lossy(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("counts.csv")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a", "5"), run("c", "6"));
}

#[test]
fn configuration_errors_exit_nonzero_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_preset("fig4a", dir.path());
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("power_w = 8.5e-9", "power_w = \"low\"");
    fs::write(&config, text).unwrap();
    let o = sideband(&[
        "simulate",
        "--config",
        &config,
        "--out",
        &dir.path().join("x").to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line "), "{err}");
    assert!(!dir.path().join("x").exists());

    let o = sideband(&["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn failed_analysis_exits_two_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_preset("supp-fig8", dir.path());
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("analyses = [\"occupancy\"]", "analyses = [\"g0\", \"occupancy\"]");
    fs::write(&config, text).unwrap();
    let out = dir.path().join("out");
    let o = sideband(&["simulate", "--config", &config, "--out", &out.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analysis g0 failed"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["analyses"][0]["ok"], false);
    assert_eq!(manifest["analyses"][1]["ok"], true);
    assert!(out.join("occupancy.csv").exists());
}

#[test]
fn estimate_from_a_written_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_preset("fig4a", dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_string_lossy().into_owned();
    assert!(
        sideband(&["simulate", "--config", &config, "--out", &out_s, "--format", "json"])
            .status
            .success()
    );
    let counts = out.join("counts.json");
    let counts_s = counts.to_string_lossy();

    let o = sideband(&["estimate", "--counts", &counts_s, "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("n_b,ci_low,ci_high,confidence\n"));

    let o = sideband(&[
        "estimate",
        "--counts",
        &counts_s,
        "--dark-rate",
        "11",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Same point estimate as the campaign's own table.
    let table = fs::read_to_string(out.join("occupancy.csv")).unwrap();
    let n_b: f64 = table
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    assert!((v["n_b"].as_f64().unwrap() - n_b).abs() < 1e-12);

    for method in ["bootstrap", "subtraction"] {
        let o = sideband(&[
            "estimate",
            "--counts",
            &counts_s,
            "--dark-rate",
            "11",
            "--method",
            method,
            "--seed",
            "3",
        ]);
        assert!(o.status.success(), "{method}: {}", stderr(&o));
    }
    let o = sideband(&["estimate", "--counts", &counts_s]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_a_written_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1e");
    assert!(sideband(&["preset", "run", "fig1e", "--out", &out.to_string_lossy()])
        .status
        .success());
    let spectrum = out.join("spectrum.txt");
    let o = sideband(&[
        "fit",
        "--spectrum",
        &spectrum.to_string_lossy(),
        "--model",
        "mechanical",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let q: f64 = stdout(&o)
        .lines()
        .find(|l| l.starts_with("mechanical_quality_factor,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((q - 180.8).abs() < 0.5, "{q}");

    let fit_out = dir.path().join("fit");
    let o = sideband(&[
        "fit",
        "--spectrum",
        &spectrum.to_string_lossy(),
        "--model",
        "mechanical",
        "--out",
        &fit_out.to_string_lossy(),
    ]);
    assert!(o.status.success());
    assert!(fit_out.join("fit.json").exists() && fit_out.join("residuals.csv").exists());

    fs::write(dir.path().join("bad.txt"), "1 2\n3 x\n").unwrap();
    let o = sideband(&[
        "fit",
        "--spectrum",
        &dir.path().join("bad.txt").to_string_lossy(),
        "--model",
        "doublet",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn sweep_table_peaks_at_the_mechanical_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_preset("fig3a", dir.path());
    let o = sideband(&[
        "sweep", "--config", &config, "--start", "1.045e9", "--stop", "1.125e9", "--points", "81",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<(f64, f64)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 81);
    let best = rows.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert!(
        (best.0 - 1.085e9).abs() < 1.0 && (best.1 - 1.0).abs() < 1e-9,
        "{best:?}"
    );
}
