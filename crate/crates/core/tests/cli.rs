use std::path::Path;
use std::process::{Command, Output};

fn deepcity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepcity")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path) {
    let out = deepcity(&[
        "synth", "--out", dir.to_str().unwrap(), "--set", "n_users=150", "--set", "n_locations=30",
        "--set", "checkins_min=20", "--set", "checkins_max=25",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&deepcity(&["nonsense"])), 1);
    assert_eq!(code(&deepcity(&["pipeline", "--set", "bogus_key=1"])), 1);
    assert_eq!(code(&deepcity(&["pipeline", "--set", "s=0"])), 1);
    assert_eq!(code(&deepcity(&["--help"])), 0);
}

#[test]
fn missing_data_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = format!("data_dir={}", tmp.path().join("nowhere").display());
    assert_eq!(code(&deepcity(&["ingest", "--set", &missing])), 2);
}

#[test]
fn stages_run_independently() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let set_data = format!("data_dir={}", data.display());
    let config = tmp.path().join("run.conf");
    std::fs::write(&config, format!("# small run\n{set_data}\ns = 10\nr = 2\nd = 8\nepochs = 1\nrepetitions = 2\n")).unwrap();
    let conf = config.to_str().unwrap();
    let path = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();

    let ingest = deepcity(&["ingest", "--config", conf]);
    assert_eq!(code(&ingest), 0);
    let summary: serde_json::Value = serde_json::from_slice(&ingest.stdout).unwrap();
    assert!(summary.is_object());

    for stage in ["graph", "bias", "walk"] {
        let out = deepcity(&[stage, "--config", conf, "--out", &path(stage)]);
        assert_eq!(code(&out), 0, "{stage}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!std::fs::read_to_string(path(stage)).unwrap().is_empty());
    }
    let embed = deepcity(&["embed", "--config", conf, "--walks", &path("walk"), "--out", &path("vectors")]);
    assert_eq!(code(&embed), 0);
    let classify = deepcity(&["classify", "--config", conf, "--embeddings", &path("vectors"), "--out", &path("report.json")]);
    assert_eq!(code(&classify), 0, "{}", String::from_utf8_lossy(&classify.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path("report.json")).unwrap()).unwrap();
    assert_eq!(report["per_repetition"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let set_data = format!("data_dir={}", data.display());
    let set_out = format!("output_dir={}", tmp.path().join("out").display());
    let table = tmp.path().join("sweep.tsv");
    let out = deepcity(&[
        "sweep", "--param", "s", "--values", "4,8", "--table", table.to_str().unwrap(), "--set", &set_data,
        "--set", &set_out, "--set", "r=2", "--set", "d=8", "--set", "epochs=1", "--set", "repetitions=2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("s\tauc"));
    assert!(lines[1].starts_with("4\t") && lines[2].starts_with("8\t"));
}
