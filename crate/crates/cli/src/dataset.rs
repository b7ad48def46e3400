//! On-disk dataset bundles.
//!
//! A bundle is a directory holding `manifest.json`, `cir.f32le`, `truth.csv`
//! and, for training sessions, `vel.csv`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use pcc_core::{CirFrame, DriftParams, Link, MeshLayout, Node, Rect, Vec2, VelocityTrack};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const CIR_MAGIC: &[u8; 4] = b"PCCD";
const CIR_VERSION: u32 = 1;
const CIR_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// `train`, `p1` or `p2` for simulated sessions.
    pub label: String,
    pub rate_hz: f64,
    pub num_frames: usize,
    /// Antenna-axis order of `cir.f32le` as `[tx, rx]`.
    pub links: Vec<[usize; 2]>,
    pub nodes: Vec<Node>,
    pub room: Rect,
    pub zone: Rect,
    pub tap_count: usize,
    /// Scale the stored taps were divided by, if normalized.
    pub train_max: Option<f64>,
    /// Error model of `vel.csv`, when present.
    pub drift: Option<DriftParams>,
}

impl Manifest {
    pub fn layout(&self) -> MeshLayout {
        MeshLayout {
            nodes: self.nodes.clone(),
            links: self.link_list(),
            room: self.room,
            zone: self.zone,
        }
    }

    pub fn link_list(&self) -> Vec<Link> {
        self.links.iter().map(|&[tx, rx]| Link { tx, rx }).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub frames: Vec<CirFrame>,
    /// Reference positions, one per frame.
    pub truth: Vec<Vec2>,
    pub velocity: Option<VelocityTrack>,
}

impl Bundle {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }

    /// Checks that every part agrees with the manifest.
    pub fn check(&self) -> Result<()> {
        let m = &self.manifest;
        if self.frames.len() != m.num_frames || self.truth.len() != m.num_frames {
            return Err(CliError::data(format!(
                "bundle '{}': manifest lists {} frames, found {} frames and {} positions",
                m.label,
                m.num_frames,
                self.frames.len(),
                self.truth.len()
            )));
        }
        if let Some(f) = self
            .frames
            .iter()
            .find(|f| f.num_links != m.links.len() || f.tap_count != m.tap_count)
        {
            return Err(CliError::data(format!(
                "bundle '{}': frame is {}×{}, manifest says {}×{}",
                m.label,
                f.num_links,
                f.tap_count,
                m.links.len(),
                m.tap_count
            )));
        }
        if let Some(v) = &self.velocity {
            if v.len() != m.num_frames {
                return Err(CliError::data(format!(
                    "bundle '{}': {} velocity rows for {} frames",
                    m.label,
                    v.len(),
                    m.num_frames
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.check()?;
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), json.as_bytes())?;
        write_file(&dir.join("cir.f32le"), &encode_cir(&self.manifest, &self.frames))?;

        let mut truth = String::from("t_s,x_m,y_m\n");
        for (f, p) in self.frames.iter().zip(&self.truth) {
            truth.push_str(&format!("{},{},{}\n", f.timestamp, p.x, p.y));
        }
        write_file(&dir.join("truth.csv"), truth.as_bytes())?;

        let vel_path = dir.join("vel.csv");
        match &self.velocity {
            Some(track) => {
                let mut vel = String::from("t_s,vx_mps,vy_mps\n");
                for (t, v) in track.t.iter().zip(&track.vel_est) {
                    vel.push_str(&format!("{},{},{}\n", t, v.x, v.y));
                }
                write_file(&vel_path, vel.as_bytes())?;
            }
            None if vel_path.exists() => {
                fs::remove_file(&vel_path)
                    .map_err(CliError::io(format!("removing {}", vel_path.display())))?;
            }
            None => {}
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Bundle> {
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", manifest_path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", manifest_path.display())))?;

        let cir_path = dir.join("cir.f32le");
        let bytes = fs::read(&cir_path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", cir_path.display())))?;
        let taps = decode_cir(&manifest, &bytes)?;

        let rows = read_csv(&dir.join("truth.csv"), "t_s,x_m,y_m")?;
        let truth: Vec<Vec2> = rows.iter().map(|r| Vec2::new(r[1], r[2])).collect();
        let per_frame = manifest.links.len() * manifest.tap_count;
        let frames: Vec<CirFrame> = rows
            .iter()
            .zip(taps.chunks_exact(per_frame.max(1)))
            .map(|(r, chunk)| CirFrame {
                timestamp: r[0],
                num_links: manifest.links.len(),
                tap_count: manifest.tap_count,
                taps: chunk.to_vec(),
            })
            .collect();
        if rows.len() != manifest.num_frames {
            return Err(CliError::data(format!(
                "{}: {} rows, manifest lists {} frames",
                dir.join("truth.csv").display(),
                rows.len(),
                manifest.num_frames
            )));
        }

        let vel_path = dir.join("vel.csv");
        let velocity = if vel_path.exists() {
            let rows = read_csv(&vel_path, "t_s,vx_mps,vy_mps")?;
            Some(VelocityTrack {
                t: rows.iter().map(|r| r[0]).collect(),
                vel_est: rows.iter().map(|r| Vec2::new(r[1], r[2])).collect(),
                drift_params: manifest.drift.unwrap_or_else(DriftParams::zero),
            })
        } else {
            None
        };
        let bundle = Bundle {
            manifest,
            frames,
            truth,
            velocity,
        };
        bundle.check()?;
        Ok(bundle)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(CliError::io(format!("creating {}", path.display())))?;
    let mut out = BufWriter::new(file);
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(CliError::io(format!("writing {}", path.display())))
}

fn encode_cir(manifest: &Manifest, frames: &[CirFrame]) -> Vec<u8> {
    let per_frame = manifest.links.len() * manifest.tap_count;
    let mut out = Vec::with_capacity(CIR_HEADER_LEN + 4 * per_frame * frames.len());
    out.extend_from_slice(CIR_MAGIC);
    for v in [
        CIR_VERSION,
        frames.len() as u32,
        manifest.links.len() as u32,
        manifest.tap_count as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in frames {
        for v in &f.taps {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn decode_cir(manifest: &Manifest, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < CIR_HEADER_LEN || &bytes[..4] != CIR_MAGIC {
        return Err(CliError::data("cir.f32le: missing PCCD header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != CIR_VERSION as usize {
        return Err(CliError::data(format!(
            "cir.f32le: unsupported version {}",
            word(0)
        )));
    }
    let dims = [word(1), word(2), word(3)];
    let expected = [manifest.num_frames, manifest.links.len(), manifest.tap_count];
    if dims != expected {
        return Err(CliError::data(format!(
            "cir.f32le: dims {dims:?} disagree with manifest {expected:?}"
        )));
    }
    let count = dims.iter().product::<usize>();
    if bytes.len() != CIR_HEADER_LEN + 4 * count {
        return Err(CliError::data(format!(
            "cir.f32le: {} bytes, expected {}",
            bytes.len(),
            CIR_HEADER_LEN + 4 * count
        )));
    }
    Ok(bytes[CIR_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

fn read_csv(path: &Path, header: &str) -> Result<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(header) {
        return Err(CliError::data(format!(
            "{}: expected header '{header}'",
            path.display()
        )));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), n + 2)))?;
            <[f64; 3]>::try_from(vals)
                .map_err(|_| CliError::data(format!("{} line {}: expected 3 columns", path.display(), n + 2)))
        })
        .collect()
}
