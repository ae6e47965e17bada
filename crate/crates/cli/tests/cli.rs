use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn entrogate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entrogate"))
        .args(args)
        .current_dir(dir)
        .env_remove("ENTROGATE_LOG")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const SMALL: [&str; 8] = ["--width", "48", "--height", "32", "--virtual-clock", "33ms", "--seed", "1"];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL).collect()
}

#[test]
fn run_writes_metrics_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let out = entrogate(
        dir.path(),
        &["run", "--scene", "composite", "--redundancy", "0.5", "--frames", "100", "--virtual-clock", "33ms"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let m = json(dir.path().join("out/metrics.json"));
    assert_eq!(m["frames_ingested"], 100);
    let ledger = fs::read_to_string(dir.path().join("out/ledger.csv")).unwrap();
    assert_eq!(
        ledger.lines().next().unwrap(),
        "frame_id,capture_time_ns,entropy_bits,delta_h_bits,priority,decision,buffer_enter_ns,infer_start_ns,infer_end_ns"
    );
    assert_eq!(ledger.lines().count(), 101);
    let names: Vec<_> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 2, "leftover files: {names:?}");
}

#[test]
fn exit_code_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("typo.toml"), "[gate]\nalpah = 0.5\n").unwrap();
    fs::write(d.join("not-a-dir"), "x").unwrap();
    let cases: &[(&[&str], i32, &str)] = &[
        (&["run", "--alpha", "-1"], 2, "alpha"),
        (&["run", "--beta", "nan"], 2, "beta"),
        (&["run", "--buffer-capacity", "0"], 2, "buffer_capacity"),
        (&["run", "--redundancy", "1.5"], 2, "redundancy"),
        (&["run", "--scene", "fog"], 2, "fog"),
        (&["run", "--virtual-clock", "0ms"], 2, "virtual_clock"),
        (&["run", "--config", "typo.toml"], 2, "line 2, column 1"),
        (&["run", "--config", "absent.toml"], 2, "absent.toml"),
        (&["run", "--input", "missing.y4m"], 1, "missing.y4m"),
        (&["synth", "--frames", "0", "-o", "z.raw"], 2, "frames"),
        (&["synth", "--frames", "2", "-o", "not-a-dir/z.raw"], 1, "not-a-dir"),
        (&["stats", "absent.csv"], 1, "absent.csv"),
        (&["bogus"], 2, "bogus"),
        (&["run", "--frames"], 2, "--frames"),
    ];
    for (args, code, needle) in cases {
        let out = entrogate(d, args);
        assert_eq!(out.status.code(), Some(*code), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "{args:?}: {}", stderr(&out));
    }
    assert_eq!(entrogate(d, &["--help"]).status.code(), Some(0));
}

/// Replays an exported ledger: inferred count and inferred / wall seconds.
fn ledger_fps(path: &Path) -> (u64, f64) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let (mut inferred, mut wall) = (0u64, 0u64);
    for row in reader.records() {
        let row = row.unwrap();
        if &row[5] == "inferred" {
            inferred += 1;
        }
        for i in [1, 6, 7, 8] {
            if !row[i].is_empty() {
                wall = wall.max(row[i].parse().unwrap());
            }
        }
    }
    (inferred, inferred as f64 / (wall as f64 / 1e9))
}

#[test]
fn ablate_delta_matches_ledger_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = entrogate(
        dir.path(),
        &["ablate", "--scene", "composite", "--redundancy", "0.5", "--frames", "100", "--virtual-clock", "33ms"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(dir.path().join("out/ablation.json"));
    let (gi, gf) = ledger_fps(&dir.path().join("out/gated/ledger.csv"));
    let (ui, uf) = ledger_fps(&dir.path().join("out/ungated/ledger.csv"));
    assert_eq!(report["throughput_delta_pct"].as_f64().unwrap(), (gf - uf) / uf * 100.0);
    // Independent sequential replay of the same stream.
    assert_eq!(report["throughput_delta_pct"].as_f64().unwrap(), -18.256198347107432);
    assert_eq!(report["inference_calls_saved"].as_i64().unwrap(), (ui - gi) as i64);
    assert_eq!(report["segments"].as_array().unwrap().len(), 10);
    assert!(report["latency_test"].is_object());
    for side in ["gated", "ungated"] {
        assert!(dir.path().join(format!("out/{side}/metrics.json")).exists());
    }
}

#[test]
fn zero_threshold_ablation_is_neutral() {
    for scene in ["static", "noise"] {
        let dir = tempfile::tempdir().unwrap();
        let args = with_small(&["ablate", "--scene", scene, "--frames", "30", "--threshold", "0"]);
        let out = entrogate(dir.path(), &args);
        assert!(out.status.success(), "{}", stderr(&out));
        let r = json(dir.path().join("out/ablation.json"));
        assert_eq!(r["gated"]["frames_inferred"], r["ungated"]["frames_inferred"], "{scene}");
        assert_eq!(r["throughput_delta_pct"].as_f64(), Some(0.0), "{scene}");
    }
}

#[test]
fn synth_sizes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.raw", "b.raw"] {
        let out = entrogate(d, &["synth", "--scene", "static", "--frames", "10", "-o", name]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::metadata(d.join("a.raw")).unwrap().len(), 768_000);
    assert_eq!(fs::read(d.join("a.raw")).unwrap(), fs::read(d.join("b.raw")).unwrap());

    let out = entrogate(d, &with_small(&["synth", "--scene", "moving", "--frames", "4", "-o", "m.y4m", "--inspect"]));
    assert!(out.status.success());
    assert!(fs::read(d.join("m.y4m")).unwrap().starts_with(b"YUV4MPEG2 W48 H32 "));
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("frame_id\tentropy_bits"));
    assert!(lines[1].starts_with("0\t"));
}

#[test]
fn synth_output_feeds_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(entrogate(d, &with_small(&["synth", "--frames", "12", "-o", "c.y4m"])).status.success());
    assert!(entrogate(d, &with_small(&["synth", "--frames", "12", "-o", "c.raw"])).status.success());
    let scene = entrogate(d, &with_small(&["run", "--frames", "12", "--out", "s"]));
    let y4m = entrogate(d, &with_small(&["run", "--input", "c.y4m", "--out", "y"]));
    let raw = entrogate(d, &with_small(&["run", "--input", "c.raw", "--out", "r"]));
    assert!(scene.status.success() && y4m.status.success() && raw.status.success());
    let reference = fs::read(d.join("s/ledger.csv")).unwrap();
    assert_eq!(fs::read(d.join("y/ledger.csv")).unwrap(), reference);
    assert_eq!(fs::read(d.join("r/ledger.csv")).unwrap(), reference);
}

#[test]
fn stats_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(entrogate(d, &with_small(&["ablate", "--frames", "40", "--out", "ab"])).status.success());
    assert!(entrogate(d, &with_small(&["run", "--frames", "25", "--out", "short"])).status.success());

    let out = entrogate(d, &["stats", "ab/gated/ledger.csv", "ab/ungated/ledger.csv", "--out", "two"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json(d.join("two/stats.json"));
    assert_eq!(r["ledgers"].as_array().unwrap().len(), 2);
    assert!(r["paired"]["latency_test"]["p_value_two_tailed"].is_number());
    assert_eq!(r["paired"]["segments"], 10);

    let out = entrogate(d, &["stats", "ab/gated/ledger.csv", "--out", "one"]);
    assert!(out.status.success());
    let r = json(d.join("one/stats.json"));
    assert!(r["paired"].is_null());
    assert_eq!(r["ledgers"][0]["frames_ingested"], 40);
    assert_eq!(r["ledgers"][0]["reference_latency_sd_ms"], 1.2);

    let out = entrogate(d, &["stats", "ab/gated/ledger.csv", "short/ledger.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot pair"), "{}", stderr(&out));

    let text = fs::read_to_string(d.join("ab/gated/ledger.csv")).unwrap();
    fs::write(d.join("bad.csv"), text.replacen("priority", "prio", 1)).unwrap();
    let out = entrogate(d, &["stats", "bad.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("priority"), "{}", stderr(&out));
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.toml"),
        r#"
# three-layer fixture
seed = 4
out = "from-file"

[gate]
threshold = 8.0   # drops everything unless overridden

[clock]
mode = "virtual"
tick = "33ms"

[scene]
kind = "noise"
frames = 7
width = 16
height = 16
"#,
    )
    .unwrap();
    let out = entrogate(d, &["run", "--config", "run.toml"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = json(d.join("from-file/metrics.json"));
    assert_eq!(m["frames_ingested"], 7);
    assert_eq!(m["frames_dropped_at_gate"], 7);
    assert_eq!(m["clock"]["mode"], "virtual");

    let out = entrogate(d, &["run", "--config", "run.toml", "--threshold", "0", "--out", "flags"]);
    assert!(out.status.success());
    let m = json(d.join("flags/metrics.json"));
    assert_eq!(m["frames_dropped_at_gate"], 0);
    assert_eq!(m["frames_ingested"], 7);
}

#[test]
fn log_level_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_entrogate"))
        .args(with_small(&["run", "--frames", "3"]))
        .current_dir(dir.path())
        .env("ENTROGATE_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stderr(&out).contains("frames ingested"), "{}", stderr(&out));
    let quiet = entrogate(dir.path(), &with_small(&["run", "--frames", "3"]));
    assert!(stderr(&quiet).is_empty());
}
