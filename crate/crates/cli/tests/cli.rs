use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bap_cli::{parse_args, Command as Cmd};

const BAP: &str = env!("CARGO_BIN_EXE_bap");

fn bap(args: &[&str]) -> Output {
    Command::new(BAP).args(args).output().expect("spawn bap")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn worker_defaults() {
    match parse_args(["bap", "worker", "--connect", "h:1"]).unwrap() {
        Cmd::Worker(a) => {
            assert_eq!(a.threads, 1);
            assert_eq!(a.queue.queue, 7);
            assert_eq!(a.queue.send_interval, 2.0);
            assert_eq!(a.connect.as_deref(), Some("h:1"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bench_worker_list() {
    match parse_args(["bap", "bench", "--input", "d", "--workers", "1,2,4"]).unwrap() {
        Cmd::Bench(a) => assert_eq!(a.workers, vec![1, 2, 4]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_connect_is_a_usage_error() {
    let o = bap(&["worker"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = bap(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("worker"));
}

#[test]
fn bad_set_key_is_a_usage_error() {
    let o = bap(&["run", "--print-config", "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn print_config_reflects_flags() {
    let o = bap(&[
        "run",
        "--print-config",
        "--target-rate",
        "16000",
        "--set",
        "hpf_cutoff_hz=800",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("target_rate_hz = 16000"), "{text}");
    assert!(text.contains("hpf_cutoff_hz = 800"), "{text}");
}

#[test]
fn master_print_config_includes_cluster_settings() {
    let o = bap(&[
        "master",
        "--print-config",
        "--queue",
        "3",
        "--min-workers",
        "2",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("queue_size = 3"), "{text}");
    assert!(text.contains("min_workers = 2"), "{text}");
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bap(&[
        "run",
        "--input",
        s(&dir.path().join("nope")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_run_features_train() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = dir.path().join("out");
    let table = dir.path().join("rain.csv");
    let rules = dir.path().join("rain.rules");

    let o = bap(&[
        "gen",
        "--out",
        s(&corpus),
        "--minutes",
        "2",
        "--seed",
        "5",
        "--file-minutes",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_dir(&corpus)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "wav")
            })
            .count(),
        2
    );

    let o = bap(&["run", "--input", s(&corpus), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("8 chunks"));
    assert!(out.join("manifest.csv").exists());

    let o = bap(&[
        "features",
        "--input",
        s(&corpus),
        "--label",
        "rain",
        "--out",
        s(&table),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&table).unwrap();
    assert!(csv.lines().count() > 8);

    let o = bap(&[
        "train",
        "--features",
        s(&table),
        "--out",
        s(&rules),
        "--folds",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bap(&[
        "run",
        "--input",
        s(&corpus),
        "--out",
        s(&dir.path().join("again")),
        "--rain-rules",
        s(&rules),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
