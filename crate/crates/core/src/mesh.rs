//! Multistatic UWB mesh and channel impulse response synthesis.
//!
//! A mesh is a set of static nodes at mount height. Every transceiver pair and
//! every transceiver→receiver pair forms a link. For each link the channel is
//! the sum of a direct path, first-order wall reflections (image method) and a
//! single scatter path off the target, band-limited by a sinc pulse and sampled
//! on the tap grid. Only tap magnitudes are kept.

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geom::{mix_seed, point_segment_distance, Rect, Vec2, Vec3};
use crate::motion::TrajectorySample;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Height of the point scatterer representing the target, meters.
pub const TARGET_HEIGHT: f64 = 1.0;
/// Default node mount height, meters.
pub const MOUNT_HEIGHT: f64 = 1.5;
/// Lower bound on distances in amplitude denominators, meters.
pub const MIN_PATH_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Transceiver,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub position: [f64; 3],
    pub role: Role,
}

impl Node {
    pub fn pos(&self) -> Vec3 {
        Vec3::from(self.position)
    }
}

/// Placement and role of a node before ids are assigned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub position: Vec3,
    pub role: Role,
}

impl NodeSpec {
    pub fn new(x: f64, y: f64, role: Role) -> Self {
        NodeSpec {
            position: Vec3::new(x, y, MOUNT_HEIGHT),
            role,
        }
    }
}

/// Ordered (tx, rx) node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshLayout {
    pub nodes: Vec<Node>,
    /// Canonical antenna-axis order: lexicographic by `(tx, rx)`.
    pub links: Vec<Link>,
    pub room: Rect,
    /// Walking area.
    pub zone: Rect,
}

/// Which links of a full mesh to keep.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkSelection {
    Full,
    /// Every link that involves the given transceiver.
    SingleTx(usize),
    /// Links whose both endpoints are in the subset.
    NodeSubset(Vec<usize>),
    /// Explicit node pairs; either orientation of a pair is accepted.
    Explicit(Vec<(usize, usize)>),
}

/// Enumerates the role-constrained links of a set of nodes.
fn enumerate_links(nodes: &[Node]) -> Vec<Link> {
    let mut links = Vec::new();
    for a in nodes {
        if a.role != Role::Transceiver {
            continue;
        }
        for b in nodes {
            if a.id == b.id {
                continue;
            }
            match b.role {
                Role::Transceiver if a.id < b.id => links.push(Link { tx: a.id, rx: b.id }),
                Role::Receiver => links.push(Link { tx: a.id, rx: b.id }),
                _ => {}
            }
        }
    }
    links.sort();
    links
}

/// Builds a mesh where every transceiver pair and every transceiver→receiver
/// pair forms a link.
pub fn build_mesh(node_specs: &[NodeSpec], room: Rect, zone: Rect) -> Result<MeshLayout> {
    if node_specs.len() < 2 {
        return Err(Error::config("a mesh needs at least two nodes"));
    }
    if !node_specs.iter().any(|n| n.role == Role::Transceiver) {
        return Err(Error::config("a mesh needs at least one transceiver"));
    }
    if room.is_degenerate() || zone.is_degenerate() {
        return Err(Error::config("room and zone must have positive extent"));
    }
    if !room.contains_rect(&zone) {
        return Err(Error::config("walking zone is not contained in the room"));
    }
    let nodes: Vec<Node> = node_specs
        .iter()
        .enumerate()
        .map(|(id, s)| Node {
            id,
            position: [s.position.x, s.position.y, s.position.z],
            role: s.role,
        })
        .collect();
    for n in &nodes {
        if !n.position.iter().all(|v| v.is_finite()) {
            return Err(Error::config(format!("node {} has a non-finite position", n.id)));
        }
    }
    let links = enumerate_links(&nodes);
    Ok(MeshLayout {
        nodes,
        links,
        room,
        zone,
    })
}

impl MeshLayout {
    /// Six-node office mesh: transceivers 0–3 at the corners of the walking
    /// zone, receivers 4 and 5 on the long sides. Room 11 m × 8 m, zone 5 m × 4 m.
    pub fn office() -> MeshLayout {
        let specs = [
            NodeSpec::new(2.5, 1.5, Role::Transceiver),
            NodeSpec::new(8.5, 1.5, Role::Transceiver),
            NodeSpec::new(8.5, 6.5, Role::Transceiver),
            NodeSpec::new(2.5, 6.5, Role::Transceiver),
            NodeSpec::new(5.5, 1.0, Role::Receiver),
            NodeSpec::new(5.5, 7.0, Role::Receiver),
        ];
        build_mesh(
            &specs,
            Rect::new(0.0, 0.0, 11.0, 8.0),
            Rect::new(3.0, 2.0, 8.0, 6.0),
        )
        .expect("built-in layout is valid")
    }

    pub fn node_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                position: n.pos(),
                role: n.role,
            })
            .collect()
    }

    fn node(&self, id: usize) -> Result<&Node> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::config(format!("node {id} does not exist")))
    }

    fn link_endpoints(&self, link: &Link) -> (Vec3, Vec3) {
        (self.nodes[link.tx].pos(), self.nodes[link.rx].pos())
    }
}

/// Restricts a layout to a subset of its full link enumeration.
pub fn filter_links(layout: &MeshLayout, selection: &LinkSelection) -> Result<MeshLayout> {
    let full = enumerate_links(&layout.nodes);
    let links: Vec<Link> = match selection {
        LinkSelection::Full => full,
        LinkSelection::SingleTx(rho) => {
            let node = layout.node(*rho)?;
            if node.role != Role::Transceiver {
                return Err(Error::config(format!("node {rho} is not a transceiver")));
            }
            full.into_iter()
                .filter(|l| l.tx == *rho || l.rx == *rho)
                .collect()
        }
        LinkSelection::NodeSubset(ids) => {
            for id in ids {
                layout.node(*id)?;
            }
            full.into_iter()
                .filter(|l| ids.contains(&l.tx) && ids.contains(&l.rx))
                .collect()
        }
        LinkSelection::Explicit(pairs) => {
            let mut keep = Vec::with_capacity(pairs.len());
            for &(a, b) in pairs {
                layout.node(a)?;
                layout.node(b)?;
                let link = full
                    .iter()
                    .find(|l| (l.tx == a && l.rx == b) || (l.tx == b && l.rx == a))
                    .ok_or_else(|| Error::config(format!("({a}, {b}) is not a link of this mesh")))?;
                keep.push(*link);
            }
            full.into_iter().filter(|l| keep.contains(l)).collect()
        }
    };
    if links.is_empty() {
        return Err(Error::config("link selection is empty"));
    }
    Ok(MeshLayout {
        links,
        ..layout.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    /// Hz.
    pub bandwidth: f64,
    pub tap_count: usize,
    /// Seconds.
    pub tap_spacing: f64,
    /// Hz.
    pub carrier: f64,
    pub scatter_gain: f64,
    /// Meters.
    pub blockage_radius: f64,
    /// Linear factor in (0, 1].
    pub blockage_atten: f64,
    pub wall_reflect_coeff: f64,
    /// Standard deviation of the complex noise per tap, `E|n|^2 = noise_std^2`.
    pub noise_std: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            bandwidth: 499.99e6,
            tap_count: 90,
            tap_spacing: 1e-9,
            carrier: 4.5e9,
            scatter_gain: 0.5,
            // Targets are 0.5 m below the mounts; a body blocks the line of
            // sight when it passes within about 0.33 m of it in the plane.
            blockage_radius: 0.6,
            blockage_atten: 0.3,
            wall_reflect_coeff: 0.5,
            // 25 dB peak SNR for the direct path of a 5 m link.
            noise_std: (1.0 / 5.0) * 10f64.powf(-25.0 / 20.0),
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.tap_spacing > 0.0 && self.carrier >= 0.0) {
            return Err(Error::config("bandwidth and tap spacing must be positive"));
        }
        if self.tap_count == 0 {
            return Err(Error::config("tap_count must be at least 1"));
        }
        if !(self.blockage_atten > 0.0 && self.blockage_atten <= 1.0) {
            return Err(Error::config("blockage_atten must lie in (0, 1]"));
        }
        if !(self.scatter_gain >= 0.0) || !(self.blockage_radius >= 0.0) {
            return Err(Error::config("scatter_gain and blockage_radius must be >= 0"));
        }
        if !(self.noise_std >= 0.0) || !self.wall_reflect_coeff.is_finite() {
            return Err(Error::config(
                "noise_std must be >= 0 and wall_reflect_coeff finite",
            ));
        }
        Ok(())
    }

    pub fn window_duration(&self) -> f64 {
        self.tap_count as f64 * self.tap_spacing
    }

    /// Validates the model and checks that the tap window covers the longest
    /// static path and the longest possible target path in the room.
    pub fn validate_for(&self, layout: &MeshLayout) -> Result<()> {
        self.validate()?;
        let mut max_delay: f64 = 0.0;
        for paths in static_paths(layout, self) {
            for p in paths {
                max_delay = max_delay.max(p.delay);
            }
        }
        let room = layout.room;
        let corners = [
            Vec2::new(room.min[0], room.min[1]),
            Vec2::new(room.max[0], room.min[1]),
            Vec2::new(room.max[0], room.max[1]),
            Vec2::new(room.min[0], room.max[1]),
        ];
        for link in &layout.links {
            let (tx, rx) = layout.link_endpoints(link);
            for c in &corners {
                let q = Vec3::new(c.x, c.y, TARGET_HEIGHT);
                max_delay = max_delay.max(((tx - q).norm() + (q - rx).norm()) / SPEED_OF_LIGHT);
            }
        }
        if max_delay > self.window_duration() {
            return Err(Error::config(format!(
                "tap window of {:.1} ns does not cover the longest path delay {:.1} ns",
                self.window_duration() * 1e9,
                max_delay * 1e9
            )));
        }
        Ok(())
    }
}

/// One propagation path: delay in seconds and linear amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub delay: f64,
    pub amplitude: f64,
}

/// Per-link static paths. The first entry of each list is the direct path,
/// followed by one image reflection per wall when the wall coefficient is
/// non-zero.
pub fn static_paths(layout: &MeshLayout, model: &ChannelModel) -> Vec<Vec<Path>> {
    let room = layout.room;
    layout
        .links
        .iter()
        .map(|link| {
            let (tx, rx) = layout.link_endpoints(link);
            let direct = (tx - rx).norm();
            let mut paths = vec![Path {
                delay: direct / SPEED_OF_LIGHT,
                amplitude: 1.0 / direct.max(MIN_PATH_DISTANCE),
            }];
            if model.wall_reflect_coeff != 0.0 {
                let images = [
                    Vec3::new(2.0 * room.min[0] - tx.x, tx.y, tx.z),
                    Vec3::new(2.0 * room.max[0] - tx.x, tx.y, tx.z),
                    Vec3::new(tx.x, 2.0 * room.min[1] - tx.y, tx.z),
                    Vec3::new(tx.x, 2.0 * room.max[1] - tx.y, tx.z),
                ];
                for image in images {
                    let len = (image - rx).norm();
                    paths.push(Path {
                        delay: len / SPEED_OF_LIGHT,
                        amplitude: model.wall_reflect_coeff / len.max(MIN_PATH_DISTANCE),
                    });
                }
            }
            paths
        })
        .collect()
}

/// Target-induced propagation effects.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPaths {
    /// One scatter path per link.
    pub scatter: Vec<Path>,
    /// Multiplier on the direct path per link: `blockage_atten` or 1.
    pub blockage: Vec<f64>,
}

pub fn target_paths(layout: &MeshLayout, model: &ChannelModel, target: Vec2) -> Result<TargetPaths> {
    if !layout.room.contains(&target) || !target.iter().all(|v| v.is_finite()) {
        return Err(Error::domain(format!(
            "target ({:.3}, {:.3}) is outside the room",
            target.x, target.y
        )));
    }
    let q = Vec3::new(target.x, target.y, TARGET_HEIGHT);
    let mut scatter = Vec::with_capacity(layout.links.len());
    let mut blockage = Vec::with_capacity(layout.links.len());
    for link in &layout.links {
        let (tx, rx) = layout.link_endpoints(link);
        let d1 = (tx - q).norm();
        let d2 = (q - rx).norm();
        scatter.push(Path {
            delay: (d1 + d2) / SPEED_OF_LIGHT,
            amplitude: model.scatter_gain / (d1.max(MIN_PATH_DISTANCE) * d2.max(MIN_PATH_DISTANCE)),
        });
        let blocked = point_segment_distance(&q, &tx, &rx) < model.blockage_radius;
        blockage.push(if blocked { model.blockage_atten } else { 1.0 });
    }
    Ok(TargetPaths { scatter, blockage })
}

/// One snapshot of per-link tap magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct CirFrame {
    pub timestamp: f64,
    pub num_links: usize,
    pub tap_count: usize,
    /// Row-major `[link][tap]`, all entries finite and >= 0.
    pub taps: Vec<f64>,
}

impl CirFrame {
    pub fn link(&self, index: usize) -> &[f64] {
        &self.taps[index * self.tap_count..(index + 1) * self.tap_count]
    }

    pub fn max_tap(&self) -> f64 {
        self.taps.iter().copied().fold(0.0, f64::max)
    }

    /// Keeps the rows of `links`, in that order.
    pub fn select_links(&self, links: &[usize]) -> CirFrame {
        let mut taps = Vec::with_capacity(links.len() * self.tap_count);
        for &l in links {
            taps.extend_from_slice(self.link(l));
        }
        CirFrame {
            timestamp: self.timestamp,
            num_links: links.len(),
            tap_count: self.tap_count,
            taps,
        }
    }
}

/// Position of every link of `subset` within `full.links`.
pub fn link_indices(full: &[Link], subset: &[Link]) -> Result<Vec<usize>> {
    subset
        .iter()
        .map(|l| {
            full.iter()
                .position(|f| f == l)
                .ok_or_else(|| Error::config(format!("link ({}, {}) is not recorded", l.tx, l.rx)))
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Precomputed static channel for repeated synthesis on one layout.
#[derive(Debug, Clone)]
pub struct CirSynth {
    layout: MeshLayout,
    model: ChannelModel,
    /// `[link][tap]` complex taps of the direct path only.
    direct: Vec<Complex<f64>>,
    /// `[link][tap]` complex taps of all wall reflections.
    reflections: Vec<Complex<f64>>,
}

impl CirSynth {
    pub fn new(layout: &MeshLayout, model: &ChannelModel) -> Result<Self> {
        model.validate()?;
        let taps = model.tap_count;
        let n = layout.links.len() * taps;
        let mut direct = vec![Complex::new(0.0, 0.0); n];
        let mut reflections = vec![Complex::new(0.0, 0.0); n];
        for (l, paths) in static_paths(layout, model).iter().enumerate() {
            let row = l * taps..(l + 1) * taps;
            add_path(&mut direct[row.clone()], model, &paths[0], 1.0);
            for p in &paths[1..] {
                add_path(&mut reflections[row.clone()], model, p, 1.0);
            }
        }
        Ok(CirSynth {
            layout: layout.clone(),
            model: model.clone(),
            direct,
            reflections,
        })
    }

    pub fn layout(&self) -> &MeshLayout {
        &self.layout
    }

    /// Synthesizes one frame. With `target == None` only the static channel
    /// and noise are present.
    pub fn frame(&self, target: Option<Vec2>, timestamp: f64, seed: u64) -> Result<CirFrame> {
        let taps = self.model.tap_count;
        let links = self.layout.links.len();
        let mut h: Vec<Complex<f64>> = Vec::with_capacity(links * taps);
        let effects = target
            .map(|q| target_paths(&self.layout, &self.model, q))
            .transpose()?;
        for l in 0..links {
            let g = effects.as_ref().map_or(1.0, |e| e.blockage[l]);
            let row = l * taps..(l + 1) * taps;
            h.extend(
                self.direct[row.clone()]
                    .iter()
                    .zip(&self.reflections[row.clone()])
                    .map(|(d, r)| d * g + r),
            );
            if let Some(e) = &effects {
                add_path(&mut h[row], &self.model, &e.scatter[l], 1.0);
            }
        }
        if self.model.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, self.model.noise_std / 2f64.sqrt())
                .map_err(|e| Error::config(e.to_string()))?;
            for v in h.iter_mut() {
                let re = normal.sample(&mut rng);
                let im = normal.sample(&mut rng);
                *v += Complex::new(re, im);
            }
        }
        Ok(CirFrame {
            timestamp,
            num_links: links,
            tap_count: taps,
            taps: h.iter().map(|v| v.norm()).collect(),
        })
    }
}

fn add_path(row: &mut [Complex<f64>], model: &ChannelModel, path: &Path, gain: f64) {
    let phase = Complex::from_polar(1.0, -2.0 * PI * model.carrier * path.delay);
    let a = path.amplitude * gain;
    for (m, v) in row.iter_mut().enumerate() {
        let x = model.bandwidth * (m as f64 * model.tap_spacing - path.delay);
        *v += phase * (a * sinc(x));
    }
}

/// Synthesizes a single CIR frame for a target at `target` (or no target).
pub fn synth_cir(
    layout: &MeshLayout,
    model: &ChannelModel,
    target: Option<Vec2>,
    seed: u64,
) -> Result<CirFrame> {
    CirSynth::new(layout, model)?.frame(target, 0.0, seed)
}

/// Number of ticks at `rate` inside the closed interval covered by a trajectory.
pub fn session_frame_count(trajectory: &[TrajectorySample], rate: f64) -> usize {
    match (trajectory.first(), trajectory.last()) {
        (Some(a), Some(b)) => ((b.t - a.t) * rate + 1e-9).floor() as usize + 1,
        _ => 0,
    }
}

/// Linear interpolation of the trajectory position at time `t`.
pub fn interpolate_position(trajectory: &[TrajectorySample], t: f64) -> Vec2 {
    let idx = trajectory.partition_point(|s| s.t <= t);
    if idx == 0 {
        return trajectory[0].pos();
    }
    if idx >= trajectory.len() {
        return trajectory[trajectory.len() - 1].pos();
    }
    let (a, b) = (&trajectory[idx - 1], &trajectory[idx]);
    let w = (t - a.t) / (b.t - a.t);
    a.pos() * (1.0 - w) + b.pos() * w
}

/// Samples one frame per tick `t_i = t_0 + i / rate` with the target at the
/// interpolated trajectory position. Frame `i` draws its noise from a seed
/// derived from `(seed, i)`, so output is independent of evaluation order.
pub fn sample_session(
    layout: &MeshLayout,
    model: &ChannelModel,
    trajectory: &[TrajectorySample],
    rate: f64,
    seed: u64,
) -> Result<Vec<CirFrame>> {
    if trajectory.is_empty() {
        return Err(Error::domain("trajectory is empty"));
    }
    if !(rate > 0.0) {
        return Err(Error::domain("sampling rate must be positive"));
    }
    let synth = CirSynth::new(layout, model)?;
    let t0 = trajectory[0].t;
    let count = session_frame_count(trajectory, rate);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let t = t0 + i as f64 / rate;
            let pos = interpolate_position(trajectory, t);
            synth.frame(Some(pos), t, mix_seed(seed, i as u64))
        })
        .collect()
}
