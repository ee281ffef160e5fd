use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_czweights"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("czweights-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["build", "--n", "0"]).status.code(), Some(2));
    assert_eq!(run(&["build", "--n", "2", "--epsilon", "1"]).status.code(), Some(2));
    assert_eq!(run(&["build", "--n", "2", "--gamma", "3"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--p", "3/2"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["ar", "--n", "2", "--r", "1"]).status.code(), Some(2));
}

#[test]
fn bundle_round_trip_and_tampering() {
    let dir = scratch("bundle");
    let o = run(&["build", "--n", "8", "--delta", "2^-10", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.join("build.json");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["config"]["n"], 8);
    // beta_8 as an integer pair
    let beta = &doc["construction"]["table"]["beta"];
    let t = czweights::sequences::build_table(8).unwrap();
    assert_eq!(beta.to_string(), format!("[{},{}]", t.beta().numer(), t.beta().denom()));

    let o = run(&["ar", "--bundle", path.to_str().unwrap(), "--r", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# schema_version=1 config="));
    assert!(text.lines().nth(2).unwrap().starts_with("8,3,"));

    let mut bad = doc.clone();
    bad["construction"]["w"]["values"][0] = serde_json::json!([3, 1]);
    let bad_path = dir.join("tampered.json");
    std::fs::write(&bad_path, bad.to_string()).unwrap();
    assert_eq!(run(&["certify", "--bundle", bad_path.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(run(&["certify", "--bundle", path.to_str().unwrap(), "--n", "3"]).status.code(), Some(2));
}

#[test]
fn certify_depth_two() {
    let o = run(&["certify", "--n", "2", "--p", "3", "--s", "1"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c = &doc["certificate"];
    // 108/121 + 2 = 350/121
    assert_eq!(c["lhs"]["exact"].to_string(), "[350,121]");
    assert_eq!(c["rhs_f"]["exact"].to_string(), "[12167,1936]");
    assert_eq!(c["residual"]["passed"], true);
}

#[test]
fn solve_from_files() {
    let dir = scratch("solve");
    let w = dir.join("w.json");
    let f = dir.join("f.json");
    std::fs::write(&w, r#"{"schema_version":1,"breaks":[[0,1],[1,2],[1,1]],"values":[[1,1],[1,2]],"exterior":[1,1]}"#).unwrap();
    std::fs::write(&f, r#"{"schema_version":1,"breaks":[[0,1],[1,2],[1,1]],"values":[[1,1],[0,1]],"exterior":[0,1]}"#).unwrap();
    let o = run(&["solve", "--w", w.to_str().unwrap(), "--f", f.to_str().unwrap()]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["solve"]["flux"].to_string(), "[-1,3]");
    assert_eq!(doc["solve"]["boundary_exact"], true);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"schema_version":1,"breaks":[[0,1],[1,1]],"values":[[0,1]],"exterior":[1,1]}"#).unwrap();
    assert_eq!(run(&["solve", "--w", bad.to_str().unwrap(), "--f", f.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = scratch("config");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "p = 3\ns = 1\ngamma = 10\nn_max = 3\nseed = 7\nn = 4\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "sweep", "--n-max", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("\"n_max\":2"));
    assert!(text.contains("\"seed\":7"));
    let rows = text.lines().filter(|l| l.starts_with("sweep,")).count();
    assert_eq!(rows, 2);
}

#[test]
fn small_sweep_is_byte_identical() {
    let args = ["sweep", "--p", "3", "--s", "1", "--gamma", "1", "--n-max", "7", "--seed", "7", "--ar", "3"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("# first_N=6"));
}
