use std::process::Command;

use serde_json::Value;

fn run(args: &[&str]) -> (Option<i32>, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pathhjb"))
        .args(args)
        .env_remove("PATHHJB_SEED")
        .output()
        .expect("binary runs");
    (out.status.code(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn json(args: &[&str]) -> Value {
    let (code, out, err) = run(args);
    assert_eq!(code, Some(0), "{err}");
    serde_json::from_str(&out).unwrap()
}

#[test]
fn tree_value_of_p2() {
    let v = json(&["value", "--problem", "P2", "--solver", "tree", "--steps", "8"]);
    assert_eq!(v["value"].as_f64(), Some(1.0));
    assert_eq!(v["std_error"].as_f64(), Some(0.0));
    assert_eq!(v["version"].as_u64(), Some(1));
    assert_eq!(v["command"].as_str(), Some("value"));
}

#[test]
fn tree_dpp_of_p2() {
    let v = json(&["dpp-check", "--problem", "P2", "--solver", "tree", "--delta", "0.25"]);
    assert!(v["report"]["residual"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["pass"].as_bool(), Some(true));
}

#[test]
fn bench_row_for_p1() {
    let (code, out, _) = run(&["bench", "--problem", "P1", "--paths", "500"]);
    assert_eq!(code, Some(0));
    let mut rows = out.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let value: f64 = cells[col("value")].parse().unwrap();
        let analytic: f64 = cells[col("analytic")].parse().unwrap();
        assert_eq!(value, analytic);
        assert_eq!(cells[col("error")].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cells[col("version")], "1");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = std::env::temp_dir().join(format!("pathhjb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, r#"{"version": 1, "problem": "P2", "solver": "tree", "steps": 4, "path": [0, 0.5]}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json(&["value", "--config", cfg]);
    assert!((v["value"].as_f64().unwrap() - (0.5 + 0.75)).abs() < 1e-12);
    assert_eq!(v["steps"].as_u64(), Some(4));
    let v = json(&["value", "--config", cfg, "--steps", "8"]);
    assert!((v["value"].as_f64().unwrap() - (0.5 + 0.875)).abs() < 1e-12);

    let out = dir.join("value.json");
    let (code, stdout, _) = run(&["value", "--config", cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, Some(0));
    assert!(stdout.is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written["steps"].as_u64(), Some(4));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn errors_name_the_field() {
    let dir = std::env::temp_dir().join(format!("pathhjb-cli-err-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{"problem": "P2", "pathz": 10}"#).unwrap();
    let (code, _, err) = run(&["value", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, Some(1));
    assert!(err.contains("pathz"), "{err}");
    std::fs::write(&cfg, r#"{"version": 7, "problem": "P2"}"#).unwrap();
    let (code, _, err) = run(&["value", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, Some(1));
    assert!(err.contains("version"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();

    let (code, _, err) = run(&["value", "--problem", r#"{"terminal": "x +"}"#]);
    assert_eq!(code, Some(1));
    assert!(err.contains("terminal"), "{err}");
}

#[test]
fn export_feeds_back_as_inline_problem() {
    let exported = json(&["export", "--problem", "P3"]);
    let inline = serde_json::to_string(&exported["problem"]).unwrap();
    let a = json(&["value", "--problem", &inline, "--solver", "tree", "--steps", "6"]);
    let b = json(&["value", "--problem", "P3", "--solver", "tree", "--steps", "6"]);
    assert_eq!(a["value"], b["value"]);
}

#[test]
fn visc_check_reports_per_side_and_radius() {
    let v = json(&["visc-check", "--problem", "P2", "--mu", "2,4", "--samples", "100"]);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r["pass"].as_bool() == Some(true)));
    let (code, _, _) = run(&["visc-check", "--problem", "P2", "--shift", "-0.1", "--side", "super", "--samples", "100"]);
    assert_eq!(code, Some(2));
}

#[test]
fn simulate_csv_shape() {
    let (code, out, _) = run(&["simulate", "--problem", "P2", "--paths", "3", "--steps", "4"]);
    assert_eq!(code, Some(0));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "version,path,step,time,x0,dw0,control");
    assert_eq!(lines.len(), 1 + 3 * 5);
    let (code, out, _) = run(&["simulate", "--problem", "P2", "--paths", "3", "--steps", "4", "--format", "jsonl"]);
    assert_eq!(code, Some(0));
    assert!(out.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}
