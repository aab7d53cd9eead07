use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn garmentfold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_garmentfold"))
        .args(args)
        .env_remove("GARMENTFOLD_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&garmentfold(&["--help"])), 0);
    assert_eq!(code(&garmentfold(&["--version"])), 0);
    assert_eq!(code(&garmentfold(&["fold", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&garmentfold(&["fold", "--category", "pants", "--instruction", "fold it", "--bogus"])), 1);
    assert_eq!(code(&garmentfold(&["fold", "--instruction", "fold the pants"])), 1);
    assert_eq!(code(&garmentfold(&["fold", "--category", "skirt", "--instruction", "fold"])), 1);
    assert_eq!(code(&garmentfold(&["ablate", "--suite", "random-3"])), 1);
    assert_eq!(code(&garmentfold(&["frobnicate"])), 1);
    assert_eq!(code(&garmentfold(&[])), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = garmentfold(&["fold", "--category", "short-sleeve", "--instruction", "preheat the oven"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unrecognized instruction"));

    let config = dir.path().join("bad.cfg");
    fs::write(&config, "sim.gravitas=3\n").unwrap();
    let out = garmentfold(&["fold", "--category", "pants", "--instruction", "fold the pants", "--config", path(&config)]);
    assert_eq!(code(&out), 2);

    let missing = dir.path().join("missing.lex");
    let out = garmentfold(&["--lexicon", path(&missing), "fold", "--category", "pants", "--instruction", "fold the pants"]);
    assert_eq!(code(&out), 2);

    let out = garmentfold(&["render", "--record", path(&missing), "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fold_writes_log_report_and_frames_that_evaluate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = garmentfold(&[
        "fold",
        "--category",
        "short-sleeve",
        "--instruction",
        "fold the left sleeve first, then the right sleeve, then fold the bottom up",
        "--out",
        path(dir.path()),
        "--frames",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("stage LeftSleeve") && text.contains("stage RightSleeve") && text.contains("stage BottomUp"));
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("rectangularity="));
    for name in ["episode.log", "initial.obj", "final.obj", "goal.obj"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }

    let log = dir.path().join("episode.log");
    let csv = dir.path().join("scores.csv");
    let out = garmentfold(&[
        "evaluate",
        "--log",
        path(&log),
        "--initial",
        path(&dir.path().join("initial.obj")),
        "--final",
        path(&dir.path().join("final.obj")),
        "--goal",
        path(&dir.path().join("goal.obj")),
        "--out",
        path(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Vec<String>> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "source");
    // The mesh round trip goes through 6-decimal OBJ text.
    for col in 1..=2 {
        let a: f64 = rows[1][col].parse().unwrap();
        let b: f64 = rows[2][col].parse().unwrap();
        assert!((a - b).abs() < 1e-3, "column {col}: {a} vs {b}");
    }
}

#[test]
fn generate_render_and_output_dir_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = Command::new(env!("CARGO_BIN_EXE_garmentfold"))
        .args(["generate-dataset", "--per-category", "0", "--count", "no-sleeve=1", "--points", "64", "--frames", "6"])
        .env("GARMENTFOLD_OUT", &data)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(data.join("manifest.txt")).unwrap();
    assert!(manifest.contains("total=1"), "{manifest}");
    let record = data.join("records").join("no-sleeve-000.gftr");
    assert!(record.is_file());

    let frames = dir.path().join("frames");
    let out = garmentfold(&["render", "--record", path(&record), "--out", path(&frames)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let count = fs::read_dir(&frames).unwrap().count();
    assert_eq!(count, 6);
    let ply = fs::read(frames.join("frame_0000.ply")).unwrap();
    let header = b"ply\nformat binary_little_endian 1.0\nelement vertex 64\n";
    assert!(ply.starts_with(header));
    let body = ply.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    assert_eq!(ply.len() - body, 64 * 12);

    let obj = dir.path().join("obj");
    let out = garmentfold(&["render", "--record", path(&record), "--out", path(&obj), "--format", "obj", "--frame", "5"]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(obj.join("frame_0005.obj")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 64);
    assert_eq!(code(&garmentfold(&["render", "--record", path(&record), "--out", path(&obj), "--frame", "6"])), 2);
}

#[test]
fn ablate_emits_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ablation.csv");
    let out = garmentfold(&["ablate", "--suite", "template-1", "--category", "no-sleeve", "--out", path(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("metric,method,no-sleeve\n"));
    for row in ["Ours", "5f", "15f", "NextStep", "w-o-CL"] {
        assert!(text.contains(&format!("success_rate,{row},")), "{row} missing:\n{text}");
    }
    assert_eq!(text.lines().count(), 1 + 3 * 5);
}
