//! In-memory simulate → train → align → evaluate pipeline.

use std::fmt;
use std::str::FromStr;

use pcc_core::align::{evaluate_pipeline, fit_affine, predict, select_anchors};
use pcc_core::chartnet::{normalize_cir, train_chart, train_fp};
use pcc_core::distgraph::build_sparse_matrix;
use pcc_core::geom::mix_seed;
use pcc_core::mesh::{interpolate_position, link_indices, sample_session};
use pcc_core::motion::{gen_trajectory, simulate_pdr};
use pcc_core::{AffineTransform, CirFrame, Link, Metrics, ModelParams, Vec2};

use crate::config::{selection_layout, RunConfig};
use crate::dataset::{Bundle, Manifest};
use crate::error::{CliError, Result};

/// Training session plus the two held-out targets.
#[derive(Debug, Clone)]
pub struct Sessions {
    pub train: Bundle,
    pub p1: Bundle,
    pub p2: Bundle,
}

impl Sessions {
    pub fn targets(&self) -> [&Bundle; 2] {
        [&self.p1, &self.p2]
    }
}

fn record(
    cfg: &RunConfig,
    label: &str,
    duration: f64,
    stream: u64,
) -> Result<(Bundle, Vec<pcc_core::TrajectorySample>)> {
    let layout = &cfg.layout;
    let trajectory = gen_trajectory(
        &layout.zone,
        duration,
        cfg.speed_mps,
        cfg.rate_hz,
        mix_seed(cfg.seed, 10 * stream),
    )?;
    let frames = sample_session(
        layout,
        &cfg.channel,
        &trajectory,
        cfg.rate_hz,
        mix_seed(cfg.seed, 10 * stream + 1),
    )?;
    let truth = frames
        .iter()
        .map(|f| interpolate_position(&trajectory, f.timestamp))
        .collect();
    let manifest = Manifest {
        label: label.into(),
        rate_hz: cfg.rate_hz,
        num_frames: frames.len(),
        links: layout.links.iter().map(|l| [l.tx, l.rx]).collect(),
        nodes: layout.nodes.clone(),
        room: layout.room,
        zone: layout.zone,
        tap_count: cfg.channel.tap_count,
        train_max: None,
        drift: None,
    };
    let bundle = Bundle {
        manifest,
        frames,
        truth,
        velocity: None,
    };
    Ok((bundle, trajectory))
}

/// Scales by the training maximum and rounds to the stored f32 precision, so
/// in-memory sessions equal what a bundle round trip yields.
fn normalize(bundle: &mut Bundle, train_max: Option<f64>) -> Result<f64> {
    let (frames, max) = normalize_cir(&bundle.frames, train_max)?;
    bundle.frames = frames
        .into_iter()
        .map(|mut f| {
            f.taps.iter_mut().for_each(|v| *v = *v as f32 as f64);
            f
        })
        .collect();
    bundle.manifest.train_max = Some(max);
    Ok(max)
}

/// Simulates the training walk (with velocity estimates) and two test walks
/// from independent seeds. All frames are normalized by the training maximum.
pub fn simulate(cfg: &RunConfig) -> Result<Sessions> {
    cfg.validate()?;
    let (mut train, trajectory) = record(cfg, "train", cfg.train_duration_s, 1)?;
    let track = simulate_pdr(&trajectory, &cfg.drift, mix_seed(cfg.seed, 2))?;
    if track.len() != train.frames.len() {
        return Err(CliError::data("velocity track and frames have different lengths"));
    }
    train.manifest.drift = Some(cfg.drift);
    train.velocity = Some(track);
    let (mut p1, _) = record(cfg, "p1", cfg.p1_duration_s, 3)?;
    let (mut p2, _) = record(cfg, "p2", cfg.p2_duration_s, 4)?;
    let max = normalize(&mut train, None)?;
    normalize(&mut p1, Some(max))?;
    normalize(&mut p2, Some(max))?;
    Ok(Sessions { train, p1, p2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Channel chart from velocity-derived distances, aligned with anchors.
    Pcc,
    /// Supervised fingerprinting on reference positions.
    Fp,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pcc => "pcc",
            Mode::Fp => "fp",
        })
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcc" => Ok(Mode::Pcc),
            "fp" => Ok(Mode::Fp),
            other => Err(CliError::usage(format!("mode '{other}' is not pcc or fp"))),
        }
    }
}

/// Trained network with everything needed to evaluate it on a bundle.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub mode: Mode,
    pub params: ModelParams,
    /// Chart → world map; identity for fingerprinting.
    pub transform: AffineTransform,
    /// Links the network reads, in antenna-axis order.
    pub links: Vec<Link>,
    pub window_s: f64,
    pub loss_history: Vec<f64>,
}

impl TrainedModel {
    /// Frames of `bundle` restricted to the model's links.
    pub fn inputs(&self, bundle: &Bundle) -> Result<Vec<CirFrame>> {
        let idx = link_indices(&bundle.manifest.link_list(), &self.links)?;
        Ok(bundle.frames.iter().map(|f| f.select_links(&idx)).collect())
    }

    /// Aligned position estimates for every frame of `bundle`.
    pub fn locate(&self, bundle: &Bundle) -> Result<Vec<Vec2>> {
        let frames = self.inputs(bundle)?;
        Ok(predict(&self.params, &frames)?
            .into_iter()
            .map(|c| self.transform.apply_point(c))
            .collect())
    }
}

pub fn train(cfg: &RunConfig, bundle: &Bundle, mode: Mode) -> Result<TrainedModel> {
    cfg.validate()?;
    bundle.check()?;
    if bundle.frames.is_empty() {
        return Err(CliError::data(format!(
            "bundle '{}' has no frames",
            bundle.manifest.label
        )));
    }
    let layout = selection_layout(&bundle.manifest.layout(), &cfg.links)?;
    let idx = link_indices(&bundle.manifest.link_list(), &layout.links)?;
    let frames: Vec<CirFrame> = bundle.frames.iter().map(|f| f.select_links(&idx)).collect();
    let arch = cfg.profile.arch(bundle.manifest.tap_count, idx.len());
    let window_s = cfg.hyper.window;

    let (params, transform, loss_history) = match mode {
        Mode::Pcc => {
            let track = bundle.velocity.as_ref().ok_or_else(|| {
                CliError::data(format!(
                    "bundle '{}' has no velocity estimates; pcc training needs vel.csv",
                    bundle.manifest.label
                ))
            })?;
            let matrix = build_sparse_matrix(track, window_s, cfg.stride)?;
            if matrix.is_empty() {
                return Err(CliError::data(format!(
                    "no frame pairs within {window_s} s at stride {}",
                    cfg.stride
                )));
            }
            log::info!(
                "pcc: {} frames, {} links, {} distance entries, {} params",
                frames.len(),
                idx.len(),
                matrix.len(),
                arch.param_count()
            );
            let outcome = train_chart(&arch, &frames, &matrix, &cfg.hyper)?;
            let chart = predict(&outcome.params, &frames)?;
            let anchors = select_anchors(&bundle.truth, layout.zone.center(), cfg.anchors)?;
            let c: Vec<Vec2> = anchors.iter().map(|&i| chart[i]).collect();
            let w: Vec<Vec2> = anchors.iter().map(|&i| bundle.truth[i]).collect();
            let transform = fit_affine(&c, &w)?;
            (outcome.params, transform, outcome.loss_history)
        }
        Mode::Fp => {
            log::info!(
                "fp: {} frames, {} links, {} params",
                frames.len(),
                idx.len(),
                arch.param_count()
            );
            let outcome = train_fp(&arch, &frames, &bundle.truth, &cfg.hyper)?;
            (outcome.params, AffineTransform::identity(), outcome.loss_history)
        }
    };
    Ok(TrainedModel {
        mode,
        params,
        transform,
        links: layout.links,
        window_s,
        loss_history,
    })
}

pub fn evaluate(model: &TrainedModel, bundle: &Bundle) -> Result<Metrics> {
    bundle.check()?;
    if bundle.frames.is_empty() {
        return Err(CliError::data(format!(
            "bundle '{}' has no frames",
            bundle.manifest.label
        )));
    }
    let frames = model.inputs(bundle)?;
    Ok(evaluate_pipeline(
        &model.params,
        &frames,
        &model.transform,
        &bundle.truth,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub window_s: f64,
    pub target: String,
    pub mae_m: f64,
    pub ce90_m: f64,
}

/// Trains one chart per window and scores it on both targets.
pub fn sweep_window(cfg: &RunConfig, sessions: &Sessions, windows: &[f64]) -> Result<Vec<WindowRow>> {
    let configs = windows
        .iter()
        .map(|&w| cfg.clone().with_window(w))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for c in &configs {
        let model = train(c, &sessions.train, Mode::Pcc)?;
        for target in sessions.targets() {
            let m = evaluate(&model, target)?;
            rows.push(WindowRow {
                window_s: c.hyper.window,
                target: target.manifest.label.clone(),
                mae_m: m.mae,
                ce90_m: m.ce90,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshRow {
    pub selection: String,
    pub mode: Mode,
    pub target: String,
    pub mae_m: f64,
    pub ce90_m: f64,
}

/// Trains per link selection (PCC, and FP too when `both`) and scores it on
/// both targets.
pub fn sweep_mesh(
    cfg: &RunConfig,
    sessions: &Sessions,
    selections: &[String],
    both: bool,
) -> Result<Vec<MeshRow>> {
    let configs = selections
        .iter()
        .map(|s| cfg.clone().with_links(s))
        .collect::<Result<Vec<_>>>()?;
    let modes: &[Mode] = if both {
        &[Mode::Pcc, Mode::Fp]
    } else {
        &[Mode::Pcc]
    };
    let mut rows = Vec::new();
    for &mode in modes {
        for c in &configs {
            let model = train(c, &sessions.train, mode)?;
            for target in sessions.targets() {
                let m = evaluate(&model, target)?;
                rows.push(MeshRow {
                    selection: c.links.clone(),
                    mode,
                    target: target.manifest.label.clone(),
                    mae_m: m.mae,
                    ce90_m: m.ce90,
                });
            }
        }
    }
    Ok(rows)
}
