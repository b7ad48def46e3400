//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Every key is optional; the
//! `profile` key selects the defaults that the other keys override, whatever
//! their order in the file. See the README for the full key list.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use pcc_core::chartnet::ArchSpec;
use pcc_core::mesh::{build_mesh, filter_links, NodeSpec};
use pcc_core::{
    ChannelModel, DriftParams, HyperParams, LinkSelection, MeshLayout, Rect, Role, DEFAULT_RATE_HZ,
};

use crate::error::{CliError, Result};

/// Named link selections of the mesh ablation.
pub const SELECTION_NAMES: [&str; 10] = [
    "full", "st_0", "st_1", "st_2", "st_3", "ac_5", "ac_4", "ac_3", "ac_2_s", "ac_2_l",
];

/// Resolves a selection name, or `pairs:a-b,c-d` for explicit node pairs.
pub fn parse_selection(name: &str) -> Result<LinkSelection> {
    let subset = |ids: &[usize]| Ok(LinkSelection::NodeSubset(ids.to_vec()));
    match name {
        "full" => Ok(LinkSelection::Full),
        "st_0" => Ok(LinkSelection::SingleTx(0)),
        "st_1" => Ok(LinkSelection::SingleTx(1)),
        "st_2" => Ok(LinkSelection::SingleTx(2)),
        "st_3" => Ok(LinkSelection::SingleTx(3)),
        "ac_5" => subset(&[0, 1, 3, 4, 5]),
        "ac_4" => subset(&[4, 3, 1, 0]),
        "ac_3" => subset(&[3, 1, 0]),
        "ac_2_s" => subset(&[3, 0]),
        "ac_2_l" => subset(&[2, 5]),
        _ => {
            if let Some(list) = name.strip_prefix("pairs:") {
                let pairs = list
                    .split(',')
                    .map(|p| {
                        let (a, b) = p.trim().split_once('-')?;
                        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
                    })
                    .collect::<Option<Vec<(usize, usize)>>>()
                    .ok_or_else(|| CliError::usage(format!("bad pair list '{list}', expected a-b,c-d")))?;
                return Ok(LinkSelection::Explicit(pairs));
            }
            Err(CliError::usage(format!(
                "unknown link selection '{name}'; valid names: {}, or pairs:a-b,...",
                SELECTION_NAMES.join(", ")
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Small network and short schedule for a single CPU.
    Desk,
    /// Full-size network and the published training schedule.
    Full,
}

impl Profile {
    pub fn arch(self, tap_count: usize, link_count: usize) -> ArchSpec {
        let mut arch = match self {
            Profile::Desk => ArchSpec::desk(link_count),
            Profile::Full => ArchSpec::full(link_count),
        };
        arch.tap_count = tap_count;
        arch
    }

    fn hyper(self) -> HyperParams {
        match self {
            Profile::Desk => HyperParams::desk(),
            Profile::Full => HyperParams::default(),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub rate_hz: f64,
    pub speed_mps: f64,
    pub train_duration_s: f64,
    pub p1_duration_s: f64,
    pub p2_duration_s: f64,
    pub layout: MeshLayout,
    pub channel: ChannelModel,
    pub drift: DriftParams,
    /// Training schedule; `hyper.window` is the distance window in seconds.
    pub hyper: HyperParams,
    /// Pair grid subsampling of the distance matrix.
    pub stride: usize,
    /// Name of the link selection, see [`parse_selection`].
    pub links: String,
    pub anchors: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let profile = Profile::Desk;
        RunConfig {
            profile,
            seed: 0,
            rate_hz: DEFAULT_RATE_HZ,
            speed_mps: 1.0,
            train_duration_s: 2400.0,
            p1_duration_s: 1200.0,
            p2_duration_s: 600.0,
            layout: MeshLayout::office(),
            channel: ChannelModel::default(),
            drift: DriftParams::default(),
            hyper: profile.hyper(),
            stride: 8,
            links: "full".into(),
            anchors: 20,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: cannot parse '{value}'")))
}

fn parse_rect(key: &str, value: &str) -> Result<Rect> {
    let v: Vec<f64> = value
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [x0, y0, x1, y1] => Ok(Rect::new(*x0, *y0, *x1, *y1)),
        _ => Err(CliError::usage(format!("{key}: expected x0,y0,x1,y1"))),
    }
}

/// `T:x:y, R:x:y, ...`; mount height is fixed.
fn parse_nodes(value: &str) -> Result<Vec<NodeSpec>> {
    value
        .split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            let [role, x, y] = parts.as_slice() else {
                return Err(CliError::usage(format!(
                    "nodes: bad entry '{item}', expected T:x:y or R:x:y"
                )));
            };
            let role = match *role {
                "T" => Role::Transceiver,
                "R" => Role::Receiver,
                other => return Err(CliError::usage(format!("nodes: unknown role '{other}'"))),
            };
            Ok(NodeSpec::new(
                parse_num("nodes", x)?,
                parse_num("nodes", y)?,
                role,
            ))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates a configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::usage(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        let mut cfg = RunConfig::default();
        if let Some(p) = entries.remove("profile") {
            cfg.profile = match p.as_str() {
                "desk" => Profile::Desk,
                "full" => Profile::Full,
                other => {
                    return Err(CliError::usage(format!(
                        "profile: '{other}' is not desk or full"
                    )))
                }
            };
            cfg.hyper = cfg.profile.hyper();
        }
        let mut room = cfg.layout.room;
        let mut zone = cfg.layout.zone;
        let mut nodes = cfg.layout.node_specs();
        for (key, value) in &entries {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "seed" => cfg.seed = parse_num(k, v)?,
                "rate_hz" => cfg.rate_hz = parse_num(k, v)?,
                "speed_mps" => cfg.speed_mps = parse_num(k, v)?,
                "train_duration_s" => cfg.train_duration_s = parse_num(k, v)?,
                "p1_duration_s" => cfg.p1_duration_s = parse_num(k, v)?,
                "p2_duration_s" => cfg.p2_duration_s = parse_num(k, v)?,
                "room" => room = parse_rect(k, v)?,
                "zone" => zone = parse_rect(k, v)?,
                "nodes" => nodes = parse_nodes(v)?,
                "channel.bandwidth_hz" => cfg.channel.bandwidth = parse_num(k, v)?,
                "channel.tap_count" => cfg.channel.tap_count = parse_num(k, v)?,
                "channel.tap_spacing_s" => cfg.channel.tap_spacing = parse_num(k, v)?,
                "channel.carrier_hz" => cfg.channel.carrier = parse_num(k, v)?,
                "channel.scatter_gain" => cfg.channel.scatter_gain = parse_num(k, v)?,
                "channel.blockage_radius_m" => cfg.channel.blockage_radius = parse_num(k, v)?,
                "channel.blockage_atten" => cfg.channel.blockage_atten = parse_num(k, v)?,
                "channel.wall_reflect" => cfg.channel.wall_reflect_coeff = parse_num(k, v)?,
                "channel.noise_std" => cfg.channel.noise_std = parse_num(k, v)?,
                "drift.heading_rate_std" => cfg.drift.heading_rate_std = parse_num(k, v)?,
                "drift.scale_bias_std" => cfg.drift.scale_bias_std = parse_num(k, v)?,
                "drift.vel_noise_std" => cfg.drift.vel_noise_std = parse_num(k, v)?,
                "train.lr" => cfg.hyper.lr = parse_num(k, v)?,
                "train.batch" => cfg.hyper.batch = parse_num(k, v)?,
                "train.epochs" => cfg.hyper.epochs = parse_num(k, v)?,
                "train.plateau_patience" => cfg.hyper.plateau_patience = parse_num(k, v)?,
                "train.lr_decay" => cfg.hyper.lr_decay = parse_num(k, v)?,
                "train.weight_decay" => cfg.hyper.weight_decay = parse_num(k, v)?,
                "train.beta_floor" => cfg.hyper.beta_floor = parse_num(k, v)?,
                "train.steps_per_epoch" => {
                    cfg.hyper.steps_per_epoch = match v {
                        "auto" => None,
                        _ => Some(parse_num(k, v)?),
                    }
                }
                "train.stride" => cfg.stride = parse_num(k, v)?,
                "window_s" => cfg.hyper.window = parse_num(k, v)?,
                "links" => cfg.links = v.to_string(),
                "anchors" => cfg.anchors = parse_num(k, v)?,
                _ => return Err(CliError::usage(format!("unknown key '{k}'"))),
            }
        }
        cfg.hyper.seed = cfg.seed;
        cfg.layout = build_mesh(&nodes, room, zone)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field against the preconditions of the stages that use it.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rate_hz", self.rate_hz),
            ("speed_mps", self.speed_mps),
            ("train_duration_s", self.train_duration_s),
            ("p1_duration_s", self.p1_duration_s),
            ("p2_duration_s", self.p2_duration_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::usage(format!("{name} must be positive, got {v}")));
            }
        }
        self.channel.validate()?;
        self.channel.validate_for(&self.layout)?;
        self.drift.validate()?;
        self.hyper.validate()?;
        if self.stride == 0 {
            return Err(CliError::usage("train.stride must be at least 1"));
        }
        if self.anchors < 3 {
            return Err(CliError::usage("anchors must be at least 3"));
        }
        self.selection()?;
        Ok(())
    }

    pub fn selection(&self) -> Result<MeshLayout> {
        selection_layout(&self.layout, &self.links)
    }

    pub fn with_window(mut self, window: f64) -> Result<Self> {
        self.hyper.window = window;
        self.validate()?;
        Ok(self)
    }

    pub fn with_links(mut self, links: &str) -> Result<Self> {
        self.links = links.to_string();
        self.validate()?;
        Ok(self)
    }
}

/// Layout restricted to the named selection.
pub fn selection_layout(layout: &MeshLayout, name: &str) -> Result<MeshLayout> {
    let selection = parse_selection(name)?;
    Ok(filter_links(layout, &selection)?)
}
