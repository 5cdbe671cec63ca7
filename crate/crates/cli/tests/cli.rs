use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn dlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `summary.csv` rows keyed by policy, then by column.
fn summary(dir: &Path) -> BTreeMap<String, BTreeMap<String, String>> {
    let text = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            let row: BTreeMap<String, String> = header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect();
            (row["policy"].clone(), row)
        })
        .collect()
}

fn edited_scenario(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value =
        serde_json::from_str(&std::fs::read_to_string(data("ieee10.scenario")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("edited.scenario");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn report_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && !p.ends_with("timing.csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn generate_reproduces_the_shipped_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.scenario");
    let b = tmp.path().join("b.scenario");
    let spec = data("ieee10.spec");
    for out in [&a, &b] {
        let o = dlc(&[
            "generate",
            "--seed",
            "42",
            "--spec",
            arg(&spec),
            "-o",
            arg(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert_eq!(a, std::fs::read(data("ieee10.scenario")).unwrap());
}

#[test]
fn missing_spec_exits_with_input_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-such.spec");
    let o = dlc(&[
        "generate",
        "--spec",
        arg(&missing),
        "-o",
        arg(&tmp.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such.spec"));
}

#[test]
fn malformed_scenario_exits_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.scenario");
    std::fs::write(&bad, "{\"rng_seed\": 1}").unwrap();
    let o = dlc(&[
        "run",
        arg(&bad),
        "--policy",
        "wo-dlc",
        "-o",
        arg(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wo_dlc_run_reports_peak_undervoltage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("wo");
    let o = dlc(&[
        "run",
        arg(&data("ieee10.scenario")),
        "--policy",
        "wo-dlc",
        "-o",
        arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = &summary(&out)["wo-dlc"];
    assert_eq!(s["voltage_violation"], "true");
    for f in [
        "pcc.csv",
        "vmin.csv",
        "timing.csv",
        "household_0.csv",
        "household_134.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let vmin = std::fs::read_to_string(out.join("vmin.csv")).unwrap();
    assert_eq!(vmin.lines().count(), 25);
    assert!(vmin.starts_with("t,vmin_a_kv,vmin_b_kv,vmin_c_kv\n"));
}

#[test]
fn conventional_run_violates_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = dlc(&[
            "run",
            arg(&data("ieee10.scenario")),
            "--policy",
            "conventional",
            "-o",
            arg(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let s = &summary(&a)["conventional"];
    assert!(
        s["cap_violation"] == "true" || s["voltage_violation"] == "true",
        "{s:?}"
    );
    let files = report_files(&a);
    assert_eq!(files.len(), 3 + 135);
    assert_eq!(files, report_files(&b));
}

#[test]
fn proposed_run_is_clean_and_cheaper_in_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let o = dlc(&["compare", arg(&data("ieee10.scenario")), "-o", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary(&out);
    let keys: Vec<&String> = rows.keys().collect();
    assert_eq!(keys, ["conventional", "proposed", "wo-dlc"]);
    let p = &rows["proposed"];
    assert_eq!(
        (p["cap_violation"].as_str(), p["voltage_violation"].as_str()),
        ("false", "false")
    );
    let cost = |k: &str| rows[k]["lse_cost"].parse::<f64>().unwrap();
    assert!(cost("proposed") < cost("wo-dlc"));

    let pcc = std::fs::read_to_string(out.join("pcc.csv")).unwrap();
    let mut lines = pcc.lines();
    assert_eq!(
        lines.next(),
        Some("t,wo_dlc_mva,conventional_mva,proposed_mva")
    );
    for (k, l) in lines.enumerate() {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0], (k + 1).to_string());
    }
    let md = std::fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(md.contains("| proposed |"));
    for p in ["wo-dlc", "conventional", "proposed"] {
        assert!(out.join(p).join("summary.csv").exists());
    }
}

#[test]
fn infeasible_cap_exits_with_code_three_and_names_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let path = edited_scenario(tmp.path(), |v| v["dlc_event"]["s_cap_mva"] = 0.05.into());
    let o = dlc(&[
        "run",
        arg(&path),
        "--policy",
        "conventional",
        "-o",
        arg(&tmp.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pcc_cap[t="));
}

#[test]
fn diverging_power_flow_exits_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    let path = edited_scenario(tmp.path(), |v| {
        for line in v["network"]["lines"].as_array_mut().unwrap() {
            for key in ["r_ohm", "x_ohm"] {
                for row in line[key].as_array_mut().unwrap() {
                    for x in row.as_array_mut().unwrap() {
                        *x = (x.as_f64().unwrap() * 60.0).into();
                    }
                }
            }
        }
    });
    let o = dlc(&[
        "run",
        arg(&path),
        "--policy",
        "wo-dlc",
        "-o",
        arg(&tmp.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn solver_flags_are_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dlc(&[
        "run",
        arg(&data("ieee10.scenario")),
        "--policy",
        "proposed",
        "--tol",
        "-1",
        "-o",
        arg(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
