use g2soliton::cli::{run, ExitStatus, COLUMNS};
use g2soliton::oracles::{explicit_shrinker, explicit_steady};
use serde_json::Value;

struct Output {
    status: ExitStatus,
    stdout: String,
    stderr: String,
}

fn g2(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["g2soliton"];
    argv.extend_from_slice(args);
    let status = run(argv, &mut out, &mut err);
    Output { status, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

/// Parses CSV trajectory output into header and numeric rows (quality column dropped).
fn rows(csv_text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let data = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            rec.iter().take(COLUMNS.len() - 1).map(|x| x.parse().unwrap()).collect()
        })
        .collect();
    (header, data)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn critical_steady_matches_closed_form_to_t20() {
    let o = g2(&[
        "integrate",
        "--lambda",
        "0",
        "--b",
        "1.4142135623730951",
        "--c",
        "3",
        "--tmax",
        "20",
        "--dt",
        "1",
        "--precision",
        "extended",
    ]);
    assert_eq!(o.status, ExitStatus::Clean, "{}", o.stderr);
    let (header, data) = rows(&o.stdout);
    assert_eq!(header, COLUMNS);
    assert_eq!(data.last().unwrap()[0], 20.0);
    for row in &data {
        let exact = explicit_steady(row[0]).unwrap();
        for i in 0..3 {
            assert!(rel(row[1 + i], exact.f[i]) < 1e-6, "t = {}: f{} = {}", row[0], i + 1, row[1 + i]);
        }
    }
}

#[test]
fn truncated_critical_b_blows_up() {
    let o = g2(&["integrate", "--lambda", "0", "--b", "1.4142135", "--c", "3", "--tmax", "20"]);
    assert_eq!(o.status, ExitStatus::BlowUp, "{}", o.stderr);
    let (_, data) = rows(&o.stdout);
    let last = data.last().unwrap();
    assert!(last[0] > 17.0 && last[0] < 17.5, "{}", last[0]);
    assert!(last[3] <= 1e-6 * 1.4142135 * (1.0 + 1e-12));
}

#[test]
fn shrinker_matches_closed_form_to_t20() {
    let o = g2(&["integrate", "--lambda", "-2.25", "--b", "1", "--c", "0", "--tmax", "20", "--dt", "1"]);
    assert_eq!(o.status, ExitStatus::Clean, "{}", o.stderr);
    let (_, data) = rows(&o.stdout);
    assert_eq!(data.last().unwrap()[0], 20.0);
    for row in &data {
        let (q, u, _) = explicit_shrinker(1.0, row[0]).unwrap();
        assert!(rel(row[1], q.f1()) < 1e-6 && rel(row[2], q.f2()) < 1e-6 && rel(row[3], q.f2()) < 1e-6, "{row:?}");
        assert!(rel(row[7], u) < 1e-6, "t = {}: u = {}", row[0], row[7]);
    }
}

#[test]
fn double_precision_shrinker_stops_early() {
    let o = g2(&["integrate", "--lambda", "-2.25", "--b", "1", "--tmax", "20", "--precision", "double"]);
    assert_eq!(o.status, ExitStatus::Usage);
    assert!(o.stderr.contains("step-size collapse"), "{}", o.stderr);
}

#[test]
fn incomplete_steady_exits_with_blow_up_status() {
    let o = g2(&["integrate", "--lambda", "0", "--b", "1", "--c", "3"]);
    assert_eq!(o.status, ExitStatus::BlowUp);
    assert!(o.stderr.contains("blow-up"));
    let (_, data) = rows(&o.stdout);
    let last = data.last().unwrap();
    assert!(last[0].is_finite() && last[0] < 20.0);
    assert!(last[3] <= 1e-6 * (1.0 + 1e-12));
}

#[test]
fn rows_carry_quality_flags() {
    let o = g2(&["integrate", "--lambda", "0", "--b", "1", "--c", "3"]);
    let mut r = csv::Reader::from_reader(o.stdout.as_bytes());
    for rec in r.records() {
        let rec = rec.unwrap();
        let cr: f64 = rec[17].parse().unwrap();
        let flag = &rec[18];
        assert_eq!(flag == "ok", cr.abs() <= 1e-6, "{cr} {flag}");
    }
}

#[test]
fn output_is_deterministic() {
    let args = ["integrate", "--lambda", "0.3", "--b", "1.2", "--c", "0.8", "--tmax", "8", "--dt", "0.25"];
    let a = g2(&args);
    let b = g2(&args);
    assert_eq!(a.status, ExitStatus::Clean);
    assert_eq!(a.stdout, b.stdout);
    let grid = ["classify", "--b-values", "1,2", "--c-values", "0,3"];
    assert_eq!(g2(&grid).stdout, g2(&grid).stdout);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = std::env::temp_dir().join(format!("g2soliton-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.json");
    std::fs::write(&path, r#"{"lambda": 0.0, "b": 2.0, "c": 3.0, "tmax": 5.0, "dt": 0.5}"#).unwrap();
    let p = path.to_str().unwrap();
    let (_, from_file) = rows(&g2(&["--config", p, "integrate"]).stdout);
    assert_eq!(from_file.last().unwrap()[0], 5.0);
    let (_, overridden) = rows(&g2(&["--config", p, "integrate", "--tmax", "3"]).stdout);
    assert_eq!(overridden.last().unwrap()[0], 3.0);
    assert_eq!(overridden[1][0], 0.5 + overridden[0][0]);

    std::fs::write(&path, r#"{"lambda": 0.0, "bogus": 1}"#).unwrap();
    assert_eq!(g2(&["--config", p, "integrate", "--b", "1"]).status, ExitStatus::Usage);
    let out = dir.join("traj.csv");
    let o = g2(&["integrate", "--b", "1", "--c", "1", "--tmax", "2", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status, ExitStatus::Clean);
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("t,f1,f2,f3"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn json_trajectory_mirrors_columns() {
    let o = g2(&["integrate", "--b", "1", "--c", "1", "--tmax", "2", "--dt", "0.5", "--format", "json"]);
    assert_eq!(o.status, ExitStatus::Clean);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    let cols = doc["columns"].as_object().unwrap();
    for name in COLUMNS {
        assert!(cols.contains_key(name), "{name}");
    }
    assert_eq!(cols["t"].as_array().unwrap().len(), cols["quality"].as_array().unwrap().len());
    assert_eq!(doc["termination"], Value::String("ReachedTmax".into()));
}

#[test]
fn invalid_parameters_are_usage_errors() {
    assert_eq!(g2(&["integrate", "--b", "-1"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["integrate", "--b", "1", "--c", "1", "--group", "sp2"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["integrate"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["integrate", "--b", "1", "--precision", "quad"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["no-such-command"]).status, ExitStatus::Usage);
}

#[test]
fn classification_grid_reproduces_the_phase_diagram() {
    let o = g2(&["classify", "--b-values", "1,1.2,1.4142135623730951,1.6,2", "--c", "3", "--format", "json"]);
    assert_eq!(o.status, ExitStatus::Clean, "{}", o.stderr);
    let rows: Vec<Value> = serde_json::from_str(&o.stdout).unwrap();
    let tags: Vec<&str> = rows.iter().map(|r| r["numerical"].as_str().unwrap()).collect();
    assert_eq!(tags, ["Inc", "Inc", "Exp", "AC", "AC"]);
    assert!(rows.iter().all(|r| r["agree"] == Value::Bool(true)));

    let o = g2(&["classify", "--b-values", "0.5,1,2", "--c", "0", "--format", "json"]);
    let rows: Vec<Value> = serde_json::from_str(&o.stdout).unwrap();
    for r in rows {
        assert_eq!(r["numerical"], "AC");
        let rate = r["rate"].as_f64().unwrap();
        assert!((rate + 4.0).abs() < 0.4, "{rate}");
    }
}

#[test]
fn empty_grid_is_an_error() {
    let o = g2(&["classify", "--c", "3"]);
    assert_eq!(o.status, ExitStatus::Usage);
    assert!(o.stderr.contains("empty"), "{}", o.stderr);
}

#[test]
fn oracle_check_passes_and_detects_faults() {
    let o = g2(&["oracle-check"]);
    assert_eq!(o.status, ExitStatus::Clean, "{}", o.stdout);
    assert!(o.stdout.lines().all(|l| l.starts_with("PASS ")));

    let o = g2(&["oracle-check", "--json"]);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(doc["passed"], Value::Bool(true));
    assert!(doc["items"].as_array().unwrap().len() >= 10);

    let o = g2(&["oracle-check", "--inject-fault"]);
    assert_eq!(o.status, ExitStatus::OracleFailure);
    assert!(o.stderr.contains("series/general-table"), "{}", o.stderr);
    assert!(o.stdout.lines().any(|l| l.starts_with("FAIL series/general-table")));
}

#[test]
fn boundary_in_c_at_unit_b() {
    let o = g2(&["boundary", "--b", "1", "--clo", "1.9", "--chi", "2.4", "--json"]);
    assert_eq!(o.status, ExitStatus::Clean, "{}", o.stderr);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    let est = doc["estimate"].as_f64().unwrap();
    assert!((est - 3.0 / 2f64.sqrt()).abs() < 1e-3, "{est}");
}

#[test]
fn boundary_in_b_at_c3() {
    let o = g2(&["boundary", "--c", "3", "--blo", "1.2", "--bhi", "1.6", "--tol", "1e-3"]);
    assert_eq!(o.status, ExitStatus::Clean, "{}", o.stderr);
    let est: f64 = o.stdout.split_whitespace().next().unwrap().trim_start_matches("estimate=").parse().unwrap();
    assert!((est - 2f64.sqrt()).abs() < 1e-3, "{est}");
}

#[test]
fn boundary_rejects_bad_brackets() {
    assert_eq!(g2(&["boundary", "--c", "3", "--blo", "1.6", "--bhi", "1.2"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["boundary", "--c", "3", "--blo", "1.6", "--bhi", "2.0"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["boundary", "--c", "3"]).status, ExitStatus::Usage);
    assert_eq!(g2(&["boundary", "--c", "3", "--b", "1"]).status, ExitStatus::Usage);
}

#[test]
fn series_dump_lists_coefficients() {
    let o = g2(&["series", "--b", "1.4142135623730951", "--c", "3", "--order", "7"]);
    assert_eq!(o.status, ExitStatus::Clean);
    let doc: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(doc["order"], 7);
    let f1 = doc["coefficients"]["f1"].as_array().unwrap();
    assert_eq!(f1[0], serde_json::json!([1, 1.0]));
    let cubic = f1[1].as_array().unwrap();
    assert_eq!(cubic[0], 3);
    assert!((cubic[1].as_f64().unwrap() - 1.0 / 24.0).abs() < 1e-15);
    assert_eq!(g2(&["series", "--b", "1", "--order", "2"]).status, ExitStatus::Usage);
}
