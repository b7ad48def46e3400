use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcc_cli::Bundle;
use tempfile::TempDir;

const TINY: &str = "\
seed = 3
train_duration_s = 1
p1_duration_s = 1
p2_duration_s = 1
train.epochs = 1
train.steps_per_epoch = 2
train.batch = 4
train.stride = 4
window_s = 0.5
anchors = 5
";

fn pcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pcc(args);
    assert!(
        out.status.success(),
        "pcc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(ws.path("tiny.cfg"), TINY).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn simulate(&self, name: &str) -> PathBuf {
        let out = self.path(name);
        ok(&[
            "simulate",
            "--config",
            s(&self.path("tiny.cfg")),
            "--out",
            s(&out),
        ]);
        out
    }

    fn train(&self, data: &Path, mode: &str, name: &str) -> PathBuf {
        let out = self.path(name);
        ok(&[
            "train",
            "--config",
            s(&self.path("tiny.cfg")),
            "--data",
            s(&data.join("train")),
            "--mode",
            mode,
            "--out",
            s(&out),
        ]);
        out
    }
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    let a = ws.simulate("a");
    let b = ws.simulate("b");
    for session in ["train", "p1", "p2"] {
        let bundle = Bundle::read(&a.join(session)).unwrap();
        assert_eq!(bundle.frames.len(), 40, "{session}");
        for entry in fs::read_dir(a.join(session)).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(session).join(&name)).unwrap(),
                fs::read(b.join(session).join(&name)).unwrap(),
                "{session}/{name:?}"
            );
        }
    }
    assert!(a.join("train/vel.csv").exists());
    assert!(!a.join("p1/vel.csv").exists());
}

#[test]
fn train_evaluate_and_plot() {
    let ws = Workspace::new();
    let data = ws.simulate("data");
    for mode in ["pcc", "fp"] {
        let model = ws.train(&data, mode, mode);
        let metrics_path = ws.path(&format!("{mode}.json"));
        let printed = ok(&[
            "evaluate",
            "--checkpoint",
            s(&model.join("model.pccm")),
            "--transform",
            s(&model.join("transform.json")),
            "--data",
            s(&data.join("p1")),
            "--out",
            s(&metrics_path),
        ]);
        let json: serde_json::Value = serde_json::from_str(&printed).unwrap();
        assert_eq!(json["n"], 40);
        assert!(json["mae_m"].as_f64().unwrap().is_finite());
        assert!(json["ce90_m"].as_f64().unwrap() >= 0.0);
        assert!(json["config"].as_str().unwrap().contains(&format!("mode={mode}")));
        assert_eq!(fs::read_to_string(&metrics_path).unwrap(), printed.trim_end());
    }

    let model = ws.path("pcc");
    let plot = |name: &str| {
        let out = ws.path(name);
        ok(&[
            "plot",
            "--checkpoint",
            s(&model.join("model.pccm")),
            "--transform",
            s(&model.join("transform.json")),
            "--data",
            s(&data.join("p2")),
            "--out",
            s(&out),
            "--every",
            "4",
            "--aligned",
        ]);
        fs::read_to_string(out).unwrap()
    };
    let first = plot("a.svg");
    assert_eq!(first, plot("b.svg"));
    assert_eq!(first.matches("<circle").count(), 10);
}

#[test]
fn empty_bundles_are_rejected() {
    let ws = Workspace::new();
    let data = ws.simulate("data");
    let model = ws.train(&data, "fp", "fp");
    let mut bundle = Bundle::read(&data.join("train")).unwrap();
    bundle.frames.clear();
    bundle.truth.clear();
    bundle.velocity = None;
    bundle.manifest.num_frames = 0;
    let empty = ws.path("empty");
    bundle.write(&empty).unwrap();

    let out = pcc(&[
        "evaluate",
        "--checkpoint",
        s(&model.join("model.pccm")),
        "--transform",
        s(&model.join("transform.json")),
        "--data",
        s(&empty),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no frames"));

    let out = pcc(&[
        "train",
        "--data",
        s(&empty),
        "--mode",
        "fp",
        "--out",
        s(&ws.path("never")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!ws.path("never").exists());
}

#[test]
fn configuration_errors_write_nothing() {
    let ws = Workspace::new();
    let cases = [
        ("unknown.cfg", "colour = blue\n"),
        ("duplicate.cfg", "seed = 1\nseed = 2\n"),
        ("negative.cfg", "rate_hz = -40\n"),
        ("links.cfg", "links = ac_9\n"),
    ];
    for (name, text) in cases {
        fs::write(ws.path(name), text).unwrap();
        let out_dir = ws.path(&format!("{name}.out"));
        let out = pcc(&["simulate", "--config", s(&ws.path(name)), "--out", s(&out_dir)]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out_dir.exists(), "{name}");
    }

    let data = ws.simulate("data");
    let out = pcc(&[
        "train",
        "--config",
        s(&ws.path("tiny.cfg")),
        "--data",
        s(&data.join("train")),
        "--window",
        "0",
        "--out",
        s(&ws.path("model")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!ws.path("model").exists());

    let out = pcc(&[
        "evaluate",
        "--checkpoint",
        "missing.pccm",
        "--transform",
        "missing.json",
        "--data",
        s(&data),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweeps_write_one_row_per_run_and_target() {
    let ws = Workspace::new();
    let data = ws.simulate("data");
    let cfg = ws.path("tiny.cfg");

    let out = ws.path("window.csv");
    ok(&[
        "sweep-window",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--windows",
        "0.2,0.5",
        "--out",
        s(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "window_s,target,mae_m,ce90_m");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("0.2,p1,") && lines[4].starts_with("0.5,p2,"));

    let out = ws.path("mesh.csv");
    ok(&[
        "sweep-mesh",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--selections",
        "full,ac_2_s",
        "--both",
        "--out",
        s(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "selection,mode,target,mae_m,ce90_m");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), 5);
    }
    assert!(lines[1].starts_with("full,pcc,p1,"));
    assert!(lines[8].starts_with("ac_2_s,fp,p2,"));

    let out = pcc(&[
        "sweep-mesh",
        "--data",
        s(&data),
        "--selections",
        "nope",
        "--out",
        s(&ws.path("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
