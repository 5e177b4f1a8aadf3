use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn karlin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_karlin")).args(args).arg("--out").arg(out).output().expect("run karlin")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("karlin-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn constants_csv_has_c_j_alpha() {
    let out = scratch("constants");
    let o = karlin(&["constants", "--family", "zipf:alpha=0.5", "--j", "1..5"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("constants.csv"));
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "c_j_alpha").unwrap();
    let first: f64 = lines.next().unwrap().split(',').nth(col).unwrap().parse().unwrap();
    assert!((first - 0.729_564).abs() < 2e-6);
    assert_eq!(csv.lines().count(), 6);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["subcommand"], "constants");
    assert_eq!(manifest["config"]["family"], "zipf:alpha=0.5");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn moments_json_has_value_and_bound() {
    let out = scratch("moments");
    let o = karlin(&["moments", "--family", "zipf:alpha=0.5", "--j", "1", "--t", "1e6"], &out);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&read(&out.join("moments.json"))).unwrap();
    let mean = &doc["result"]["mean"];
    assert!(mean["value"].as_f64().unwrap() > 0.0);
    assert!(mean["error_bound"].as_f64().unwrap() <= 1e-8);
    let var = doc["result"]["var"]["value"].as_f64().unwrap();
    let rhs = doc["result"]["identity_rhs"]["value"].as_f64().unwrap();
    assert!((var - rhs).abs() < 1e-8 * var);
}

#[test]
fn usage_errors_exit_2() {
    let out = scratch("usage");
    assert_eq!(karlin(&["bogus"], &out).status.code(), Some(2));
    assert_eq!(karlin(&["moments", "--family", "zipf", "--t", "1", "--frobnicate"], &out).status.code(), Some(2));
    assert_eq!(karlin(&["moments", "--family", "nope", "--t", "1"], &out).status.code(), Some(2));
    assert_eq!(karlin(&["ratio", "--family", "zipf", "--grid", "geometric:1:2"], &out).status.code(), Some(2));
    assert_eq!(karlin(&["constants", "--family", "finite:0.5,0.5"], &out).status.code(), Some(2));
}

#[test]
fn truncation_failure_exits_3() {
    let out = scratch("numeric");
    let o = karlin(&["moments", "--family", "alpha1logsq", "--t", "1e15", "--tol", "1e-300"], &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verdict_fail_exits_1_and_pass_exits_0() {
    let out = scratch("verdicts");
    // Zipf(0.5) keeps less than 90% of the variance in the window at 1e8
    let o = karlin(&["window", "--family", "zipf:alpha=0.5", "--grid", "list:1e6,1e8"], &out);
    assert_eq!(o.status.code(), Some(1));
    let o = karlin(&["window", "--family", "pipolylog:beta=2", "--grid", "list:1e6,1e8"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("report.json").exists() && out.join("window.csv").exists());
}

fn run_lil(out: &Path, threads: &str) {
    let o = karlin(
        &[
            "lil", "--family", "pipolylog:beta=2", "--j", "1", "--grid", "geometric:1e2:1e10:30", "-M", "100", "--seed", "7",
            "--threads", threads,
        ],
        out,
    );
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json") && !p.ends_with("manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn lil_is_byte_identical_across_runs_and_threads() {
    let (a, b) = (scratch("lil-a"), scratch("lil-b"));
    run_lil(&a, "1");
    run_lil(&b, "3");
    let (oa, ob) = (outputs(&a), outputs(&b));
    assert!(oa.len() >= 5);
    assert_eq!(oa, ob);
}

#[test]
fn replay_reproduces_outputs() {
    let (a, b) = (scratch("replay-a"), scratch("replay-b"));
    let o = karlin(&["ratio", "--family", "pistretch", "--grid", "geometric:1e3:1e9:7", "--j", "2"], &a);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let report = a.join("report.json");
    let o = karlin(&["ratio", "--replay", report.to_str().unwrap()], &b);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    assert_eq!(outputs(&a), outputs(&b));
    // a report replayed under the wrong subcommand is a usage error
    assert_eq!(karlin(&["window", "--replay", report.to_str().unwrap()], &b).status.code(), Some(2));
}

#[test]
fn config_file_and_flag_override() {
    let out = scratch("config");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"depoisson","family":"zipf","params":{"alpha":0.5},"j":1,
            "grid":{"kind":"explicit","values":[100,1000]}}"#,
    )
    .unwrap();
    let o = karlin(&["depoisson", "--config", cfg.to_str().unwrap(), "--j", "2"], &out);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("report.json"))).unwrap();
    assert_eq!(report["config"]["j"], 2);
    assert_eq!(report["config"]["params"]["alpha"], 0.5);
    assert!(read(&out.join("two_box_reference.csv")).contains("0.4650"));
}

#[test]
fn simulate_writes_paths_and_svg_uses_csv_data() {
    let out = scratch("simulate");
    let o = karlin(&["simulate", "--family", "zipf", "--j", "2", "--grid", "list:10,100,1000", "-M", "3", "--scheme", "coupled"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("paths.csv"));
    assert!(csv.starts_with("replicate,scheme,grid_value,balls,overflow_count,k_1,k_2,k_3,k_star_1,k_star_2\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3);

    let out = scratch("svg");
    let o = karlin(&["ratio", "--family", "zipf:alpha=0.5", "--grid", "geometric:1e4:1e8:5", "--format", "svg"], &out);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let svg = read(&out.join("ratios.svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(out.join("ratios.csv").exists());
}
