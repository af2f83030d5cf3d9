use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn noisy_ce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisy-ce")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn welfare_and_prices_on_a_tiny_market() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(
        dir.path(),
        "m.json",
        r#"{"goods":2,"buyers":2,"values":[
            {"buyer":0,"bundle":1,"value":4},{"buyer":0,"bundle":2,"value":1},{"buyer":0,"bundle":3,"value":4},
            {"buyer":1,"bundle":1,"value":3},{"buyer":1,"bundle":2,"value":2},{"buyer":1,"bundle":3,"value":3}]}"#,
    );
    let w = json(&noisy_ce(&["solve-welfare", "--market", &market]));
    assert_eq!(w["welfare"], 6.0);
    assert_eq!(w["allocation"], serde_json::json!([1, 2]));

    let lo = json(&noisy_ce(&["solve-prices", "--market", &market, "--allocation", "1,2", "--objective", "min-rev"]));
    let hi = json(&noisy_ce(&["solve-prices", "--market", &market, "--allocation", "1,2", "--objective", "max-rev"]));
    assert_eq!(lo["total_slack"], 0.0);
    assert!(lo["revenue"].as_f64().unwrap() <= hi["revenue"].as_f64().unwrap() + 1e-9);
    assert_eq!(hi["verified"], true);

    let bad = noisy_ce(&["solve-prices", "--market", &market, "--allocation", "2,1"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn um_loss_of_an_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let market = write(dir.path(), "m.json", r#"{"goods":1,"buyers":1,"values":[{"buyer":0,"bundle":1,"value":5}]}"#);
    let outcome = write(dir.path(), "o.json", r#"{"allocation":[0],"prices":{"linear":[0]}}"#);
    let r = json(&noisy_ce(&["um-loss", "--truth", &market, "--outcome", &outcome]));
    assert_eq!(r["um_loss_market"], 5.0);
}

#[test]
fn generate_then_learn() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let gen = noisy_ce(&["--seed", "4", "--out-dir", out, "generate", "--distribution", "preferred-good-distinct", "--buyers", "3", "--goods", "4"]);
    assert!(gen.status.success());
    let csv = dir.path().join("market.csv");
    let eap_dir = dir.path().join("eap");
    let run = noisy_ce(&[
        "--out-dir", eap_dir.to_str().unwrap(), "run-eap", "--unit-demand", csv.to_str().unwrap(),
        "--schedule", "500,1000,2000", "--deltas", "0.03,0.03,0.03", "--bound-mode", "two-pass",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(eap_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["iterations_run"], 3);
    let estimates = fs::read_to_string(eap_dir.join("estimates.csv")).unwrap();
    assert!(estimates.starts_with("buyer,bundle,mean,radius,status,samples\n"));
    assert_eq!(estimates.lines().count(), 1 + 12);

    let ea_dir = dir.path().join("ea");
    let run = noisy_ce(&[
        "--out-dir", ea_dir.to_str().unwrap(), "run-ea", "--unit-demand", csv.to_str().unwrap(),
        "--eps", "0.5", "--delta", "0.1", "--c", "11",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(ea_dir.join("result.json")).unwrap()).unwrap();
    assert!(result["eps_hat"].as_f64().unwrap() <= 0.5);
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "cfg.json",
        r#"{"distributions":["uniform"],"buyers":[2,3],"goods":[3],"eps":[0.2],"draws":2}"#,
    );
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("run{threads}"));
        let run = noisy_ce(&[
            "--seed", "5", "--threads", threads, "--out-dir", out.to_str().unwrap(),
            "experiment", "table1", "--config", &config,
        ]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        outputs.push(fs::read(out.join("table1.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"goods":1,"buyers":1,"values":[{"buyer":0,"bundle":0,"value":1}]}"#);
    assert_eq!(noisy_ce(&["solve-welfare", "--market", &bad]).status.code(), Some(1));
    assert_eq!(noisy_ce(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(noisy_ce(&["--help"]).status.code(), Some(0));

    let values: Vec<String> = (0..15).map(|j| format!(r#"{{"buyer":0,"bundle":{},"value":1}}"#, 1u32 << j)).collect();
    let wide = write(dir.path(), "wide.json", &format!(r#"{{"goods":15,"buyers":1,"values":[{}]}}"#, values.join(",")));
    assert_eq!(noisy_ce(&["solve-welfare", "--market", &wide]).status.code(), Some(2));

    let schedule = noisy_ce(&["run-eap", "--market", &bad, "--schedule", "2,1", "--deltas", "0.1,0.1"]);
    assert_eq!(schedule.status.code(), Some(1));
}
