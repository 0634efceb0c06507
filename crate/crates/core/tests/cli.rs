use std::fs;
use std::path::Path;
use std::process::Command;

use san::cli::run;

fn run_capture(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["san"];
    full.extend_from_slice(args);
    let code = run(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

const QUICK: &[&str] = &[
    "--synth",
    "preset=tiny",
    "--hidden",
    "16",
    "--shared-dim",
    "8",
    "--specific-dim",
    "4",
    "--init-epochs",
    "1",
    "--main-epochs",
    "1",
];

fn header(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    first["header"].clone()
}

#[test]
fn binary_smoke_and_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_san");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = Command::new(bin)
        .args(["train", "--seed", "0", "--out", out.to_str().unwrap()])
        .args(QUICK)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.starts_with("domain\tn\taccuracy\n"), "{stdout}");
    assert!(stdout.contains("\nAVG\t"));
    assert!(out.join("results.csv").exists());

    let bad = Command::new(bin).args(["train", "--lambda", "-1"]).args(QUICK).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let unknown = Command::new(bin).args(["frobnicate"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn config_file_flag_override_and_header_echo() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("out");
    fs::write(
        &conf,
        format!(
            "# quick run\nlambda = 0.25\ngamma = 0.8\nlr = 0.002\nout = {}\nsynth = preset=tiny\nhidden = 16\n",
            out.display()
        ),
    )
    .unwrap();
    let mut args = vec!["train", "--config", conf.to_str().unwrap(), "--gamma", "0.7"];
    args.extend_from_slice(&QUICK[4..]);
    let (code, _) = run_capture(&args);
    assert_eq!(code, 0);
    let h = header(&out);
    assert_eq!(h["run"]["lambda"], "0.25");
    assert_eq!(h["run"]["gamma"], "0.7");
    assert_eq!(h["run"]["lr"], "0.002");
    assert_eq!(h["run"]["shared_dim"], "8");
    assert_eq!(h["config"]["gamma"], 0.7);
    // every key is echoed
    for (k, _) in san::config::RunConfig::keys() {
        assert!(h["run"].get(k).is_some(), "{k}");
    }
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "lambda = 1\nlamda = 2\n").unwrap();
    let (code, _) = run_capture(&["train", "--config", conf.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn eval_table_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(QUICK);
    assert_eq!(run_capture(&args).0, 0);
    let ck = out.to_str().unwrap();
    let (code, first) = run_capture(&["eval", "--checkpoint", ck, "--synth", "preset=tiny"]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = first.lines().collect();
    assert_eq!(rows[0], "variant\tdomain0\tdomain1\tdomain2\tAVG");
    assert!(rows[1].starts_with("none\t") && rows[2].starts_with("zero\t") && rows[3].starts_with("shuffle\t"));
    let (_, second) = run_capture(&["eval", "--checkpoint", ck, "--synth", "preset=tiny"]);
    assert_eq!(first, second);
    // input width mismatch
    let (code, _) = run_capture(&["eval", "--checkpoint", ck, "--synth", "preset=tiny,dim=60"]);
    assert_eq!(code, 2);
}

#[test]
fn shuffle_with_one_domain_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--out", out.to_str().unwrap(), "--lambda", "0"];
    args.extend_from_slice(QUICK);
    args[6] = "preset=tiny,num_domains=1";
    assert_eq!(run_capture(&args).0, 0);
    let (code, _) = run_capture(&[
        "eval",
        "--checkpoint",
        out.to_str().unwrap(),
        "--synth",
        "preset=tiny,num_domains=1",
        "--ablate",
        "shuffle",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn em_fit_recovers_generated_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let (code, _) = run_capture(&[
        "synth",
        "--mixture",
        "pi=0.7,sd=0.1,delta=1,n=10000,seed=4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, json) = run_capture(&["em-fit", csv.to_str().unwrap(), "--mode", "moment", "--iters", "200"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["num_classes"], 1);
    let phi = &v["phi"][0];
    let rel = |got: &serde_json::Value, want: f64| (got.as_f64().unwrap() - want).abs() / want;
    assert!(rel(&phi["pi"], 0.7) < 0.1, "{phi}");
    assert!(rel(&phi["sd"], 0.1) < 0.1, "{phi}");
    assert!(rel(&phi["delta"], 1.0) < 0.1, "{phi}");
    assert!(v["iterations"].as_u64().unwrap() >= 1);
    assert!(v["max_delta"].is_number());
}

#[test]
fn em_fit_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(run_capture(&["em-fit", empty.to_str().unwrap()]).0, 2);
    let neg = dir.path().join("neg.csv");
    fs::write(&neg, "0,0.1\n0,0.3\n1,-0.2\n").unwrap();
    assert_eq!(run_capture(&["em-fit", neg.to_str().unwrap()]).0, 2);
    let err = san::cli::read_distance_csv(&neg).unwrap_err().to_string();
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn synth_export_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus");
    let (code, _) = run_capture(&["synth", "--synth", "preset=tiny,seed=2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let raw = san::data::load_corpus(&out).unwrap();
    assert_eq!(raw.len(), 3);
    assert_eq!(raw[0].labeled.len(), 60);
    assert!(raw[0].unlabeled.iter().all(|e| e.label.is_none() && e.gold.is_some()));
    // a corpus directory trains through the same command
    let run_dir = dir.path().join("run");
    let mut args = vec!["train", "--corpus", out.to_str().unwrap(), "--out", run_dir.to_str().unwrap()];
    args.extend_from_slice(&QUICK[2..]);
    assert_eq!(run_capture(&args).0, 0);
}

#[test]
fn param_count_table() {
    let (code, t) = run_capture(&["param-count", "--num-domains", "4"]);
    assert_eq!(code, 0);
    let row = |name: &str| -> Vec<usize> {
        let line = t.lines().find(|l| l.starts_with(&format!("{name}\t"))).unwrap();
        line.split('\t').skip(1).map(|v| v.parse().unwrap()).collect()
    };
    assert_eq!(row("specific")[1], 4 * row("specific_single")[1]);
    assert_eq!(row("shared")[0], 5_565_628);
    let (_, t8) = run_capture(&["param-count", "--num-domains", "8"]);
    let specific8: usize = t8
        .lines()
        .find(|l| l.starts_with("specific\t"))
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(specific8, row("specific")[0]);
}

#[test]
fn selfcheck_passes_and_catches_mutation() {
    let (code, table) = run_capture(&["selfcheck", "--seeds", "3"]);
    assert_eq!(code, 0, "{table}");
    let (code, table) = run_capture(&["selfcheck", "--seeds", "2", "--mutate"]);
    assert_eq!(code, 1);
    assert!(table.contains("grad/stochastic layer\tFAIL"), "{table}");
}
