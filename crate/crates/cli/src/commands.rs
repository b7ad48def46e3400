//! File-level commands. Each one reads and validates all of its inputs
//! before writing anything.

use std::fs;
use std::path::Path;

use pcc_core::chartnet::{read_checkpoint, write_checkpoint};
use pcc_core::{AffineTransform, Link, Metrics};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::Bundle;
use crate::error::{CliError, Result};
use crate::pipeline::{self, Mode, Sessions, TrainedModel};
use crate::plot::render_svg;

pub const CHECKPOINT_FILE: &str = "model.pccm";
pub const TRANSFORM_FILE: &str = "transform.json";

/// Sidecar of a checkpoint: how to feed the network and map its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFile {
    pub mode: String,
    pub window_s: f64,
    pub links: Vec<[usize; 2]>,
    pub transform: AffineTransform,
}

pub fn save_model(model: &TrainedModel, dir: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_checkpoint(&model.params, &mut bytes)?;
    let sidecar = TransformFile {
        mode: model.mode.to_string(),
        window_s: model.window_s,
        links: model.links.iter().map(|l| [l.tx, l.rx]).collect(),
        transform: model.transform,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("transform serializes");
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    fs::write(&ckpt, bytes).map_err(CliError::io(format!("writing {}", ckpt.display())))?;
    let tf = dir.join(TRANSFORM_FILE);
    fs::write(&tf, json).map_err(CliError::io(format!("writing {}", tf.display())))?;
    Ok(())
}

pub fn load_model(checkpoint: &Path, transform: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(checkpoint)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", checkpoint.display())))?;
    let params = read_checkpoint(bytes.as_slice())?;
    let text = fs::read_to_string(transform)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", transform.display())))?;
    let sidecar: TransformFile =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", transform.display())))?;
    if !sidecar.transform.is_finite() {
        return Err(CliError::data(format!(
            "{}: transform is not finite",
            transform.display()
        )));
    }
    if sidecar.links.len() != params.arch.link_count {
        return Err(CliError::data(format!(
            "{} lists {} links, checkpoint expects {}",
            transform.display(),
            sidecar.links.len(),
            params.arch.link_count
        )));
    }
    Ok(TrainedModel {
        mode: sidecar.mode.parse()?,
        params,
        transform: sidecar.transform,
        links: sidecar.links.iter().map(|&[tx, rx]| Link { tx, rx }).collect(),
        window_s: sidecar.window_s,
        loss_history: Vec::new(),
    })
}

pub fn load_sessions(dir: &Path) -> Result<Sessions> {
    Ok(Sessions {
        train: Bundle::read(&dir.join("train"))?,
        p1: Bundle::read(&dir.join("p1"))?,
        p2: Bundle::read(&dir.join("p2"))?,
    })
}

/// Writes `train/`, `p1/` and `p2/` bundles under `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Sessions> {
    let sessions = pipeline::simulate(cfg)?;
    for b in [&sessions.train, &sessions.p1, &sessions.p2] {
        b.write(&out.join(&b.manifest.label))?;
    }
    Ok(sessions)
}

pub fn train(cfg: &RunConfig, bundle_dir: &Path, mode: Mode, out: &Path) -> Result<TrainedModel> {
    let bundle = Bundle::read(bundle_dir)?;
    let model = pipeline::train(cfg, &bundle, mode)?;
    save_model(&model, out)?;
    Ok(model)
}

pub fn metrics_json(metrics: &Metrics, config: &str) -> String {
    let value = serde_json::json!({
        "mae_m": metrics.mae,
        "ce90_m": metrics.ce90,
        "n": metrics.n(),
        "config": config,
    });
    serde_json::to_string_pretty(&value).expect("metrics serialize")
}

/// Scores a saved model on a bundle; returns the metrics JSON text.
pub fn evaluate(
    checkpoint: &Path,
    transform: &Path,
    bundle_dir: &Path,
    out: Option<&Path>,
) -> Result<String> {
    let model = load_model(checkpoint, transform)?;
    let bundle = Bundle::read(bundle_dir)?;
    let metrics = pipeline::evaluate(&model, &bundle)?;
    let links: Vec<String> = model.links.iter().map(|l| format!("{}-{}", l.tx, l.rx)).collect();
    let config = format!(
        "mode={} window_s={} links={} target={}",
        model.mode,
        model.window_s,
        links.join(","),
        bundle.manifest.label
    );
    let json = metrics_json(&metrics, &config);
    if let Some(path) = out {
        fs::write(path, &json).map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    Ok(json)
}

pub fn sweep_window(cfg: &RunConfig, data: &Path, windows: &[f64], out: &Path) -> Result<String> {
    if windows.is_empty() {
        return Err(CliError::usage("no windows given"));
    }
    for &w in windows {
        cfg.clone().with_window(w)?;
    }
    let sessions = load_sessions(data)?;
    let rows = pipeline::sweep_window(cfg, &sessions, windows)?;
    let mut csv = String::from("window_s,target,mae_m,ce90_m\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            r.window_s, r.target, r.mae_m, r.ce90_m
        ));
    }
    fs::write(out, &csv).map_err(CliError::io(format!("writing {}", out.display())))?;
    Ok(csv)
}

pub fn sweep_mesh(
    cfg: &RunConfig,
    data: &Path,
    selections: &[String],
    both: bool,
    out: &Path,
) -> Result<String> {
    if selections.is_empty() {
        return Err(CliError::usage("no selections given"));
    }
    for s in selections {
        cfg.clone().with_links(s)?;
    }
    let sessions = load_sessions(data)?;
    let rows = pipeline::sweep_mesh(cfg, &sessions, selections, both)?;
    let mut csv = String::from("selection,mode,target,mae_m,ce90_m\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            r.selection, r.mode, r.target, r.mae_m, r.ce90_m
        ));
    }
    fs::write(out, &csv).map_err(CliError::io(format!("writing {}", out.display())))?;
    Ok(csv)
}

/// Chart scatter of a bundle. Raw network outputs unless `aligned`.
pub fn plot(
    checkpoint: &Path,
    transform: &Path,
    bundle_dir: &Path,
    out: &Path,
    aligned: bool,
    every: usize,
) -> Result<()> {
    if every == 0 {
        return Err(CliError::usage("--every must be at least 1"));
    }
    let mut model = load_model(checkpoint, transform)?;
    let bundle = Bundle::read(bundle_dir)?;
    if bundle.frames.is_empty() {
        return Err(CliError::data(format!(
            "bundle '{}' has no frames",
            bundle.manifest.label
        )));
    }
    if !aligned {
        model.transform = AffineTransform::identity();
    }
    let points = model.locate(&bundle)?;
    let svg = render_svg(&points, &bundle.truth, &bundle.manifest.zone, every);
    fs::write(out, svg).map_err(CliError::io(format!("writing {}", out.display())))
}
