//! Velocity-integrated pairwise distances.
//!
//! The distance between samples `i < j` is the norm of the displacement
//! obtained by integrating the estimated velocity from `t_i` to `t_j` with the
//! trapezoidal rule. Only pairs within a bounded time window are kept, which
//! gives a banded sparse matrix.

use rand::Rng;
use std::io::Write;

use crate::geom::Vec2;
use crate::motion::VelocityTrack;
use crate::{Error, Result};

const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEntry {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

/// Upper triangle of a banded symmetric distance matrix. Indices refer to
/// samples of the velocity track (and therefore to CIR frames).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDistanceMatrix {
    pub n: usize,
    /// Seconds.
    pub window: f64,
    pub stride: usize,
    pub entries: Vec<DistanceEntry>,
}

impl SparseDistanceMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted, deduplicated sample indices that appear in at least one entry.
    pub fn node_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.entries.iter().flat_map(|e| [e.i, e.j]).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    /// Distance between samples `i` and `j` in either order; `Some(0.0)` on
    /// the diagonal and `None` outside the band.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return (i < self.n).then_some(0.0);
        }
        let key = (i.min(j), i.max(j));
        self.entries
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .ok()
            .map(|k| self.entries[k].d)
    }

    /// Writes `i,j,d_ij` rows with six decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{},{},{:.6}", e.i, e.j, e.d)?;
        }
        Ok(())
    }
}

fn trapezoid(track: &VelocityTrack, k: usize) -> Vec2 {
    (track.vel_est[k] + track.vel_est[k + 1]) * (0.5 * (track.t[k + 1] - track.t[k]))
}

/// Displacement magnitude between samples `i < j`, integrated directly.
pub fn integrate_displacement(track: &VelocityTrack, i: usize, j: usize) -> Result<f64> {
    if i >= j {
        return Err(Error::domain(format!("need i < j, got i={i}, j={j}")));
    }
    if j >= track.len() {
        return Err(Error::domain(format!(
            "index {j} out of range for {} samples",
            track.len()
        )));
    }
    let disp = (i..j).fold(Vec2::zeros(), |acc, k| acc + trapezoid(track, k));
    Ok(disp.norm())
}

/// Cumulative trapezoidal displacement `P[k] = ∫_{t_0}^{t_k} v dt`.
pub fn cumulative_displacement(track: &VelocityTrack) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(track.len());
    let mut acc = Vec2::zeros();
    out.push(acc);
    for k in 0..track.len().saturating_sub(1) {
        acc += trapezoid(track, k);
        out.push(acc);
    }
    out
}

/// All pairs on the `stride`-subsampled grid with `t_j - t_i <= window`.
pub fn build_sparse_matrix(
    track: &VelocityTrack,
    window: f64,
    stride: usize,
) -> Result<SparseDistanceMatrix> {
    if !(window > 0.0) {
        return Err(Error::domain("window must be positive"));
    }
    if stride == 0 {
        return Err(Error::domain("stride must be at least 1"));
    }
    let cum = cumulative_displacement(track);
    let grid: Vec<usize> = (0..track.len()).step_by(stride).collect();
    let mut entries = Vec::new();
    for (a, &i) in grid.iter().enumerate() {
        for &j in &grid[a + 1..] {
            if track.t[j] - track.t[i] > window + WINDOW_SLACK {
                break;
            }
            entries.push(DistanceEntry {
                i,
                j,
                d: (cum[j] - cum[i]).norm(),
            });
        }
    }
    if entries.is_empty() {
        log::warn!("distance window {window} s is shorter than one grid step; matrix is empty");
    }
    Ok(SparseDistanceMatrix {
        n: track.len(),
        window,
        stride,
        entries,
    })
}

/// Uniform sampling with replacement over the stored entries.
pub fn sample_pairs<R: Rng + ?Sized>(
    matrix: &SparseDistanceMatrix,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<DistanceEntry>> {
    if matrix.is_empty() {
        return Err(Error::domain("cannot sample from an empty distance matrix"));
    }
    Ok((0..batch_size)
        .map(|_| matrix.entries[rng.random_range(0..matrix.len())])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::DriftParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn track(n: usize, vel: impl Fn(f64) -> Vec2) -> VelocityTrack {
        let t: Vec<f64> = (0..n).map(|k| k as f64 / 40.0).collect();
        VelocityTrack {
            vel_est: t.iter().map(|&t| vel(t)).collect(),
            t,
            drift_params: DriftParams::zero(),
        }
    }

    #[test]
    fn constant_and_zero_velocity() {
        let still = track(100, |_| Vec2::zeros());
        assert_eq!(integrate_displacement(&still, 3, 60).unwrap(), 0.0);
        let walk = track(100, |_| Vec2::new(1.0, 0.0));
        assert!((integrate_displacement(&walk, 10, 90).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_circle_returns_home() {
        let circle = track(100, |t| {
            let w = 2.0 * std::f64::consts::PI * t;
            Vec2::new(w.cos(), w.sin())
        });
        assert!(integrate_displacement(&circle, 20, 60).unwrap() < 5e-3);
    }

    #[test]
    fn index_errors() {
        let walk = track(10, |_| Vec2::new(1.0, 0.0));
        assert!(integrate_displacement(&walk, 3, 3).is_err());
        assert!(integrate_displacement(&walk, 5, 2).is_err());
        assert!(integrate_displacement(&walk, 2, 10).is_err());
    }

    #[test]
    fn small_matrix_is_complete() {
        let walk = track(5, |_| Vec2::new(1.0, 0.0));
        let m = build_sparse_matrix(&walk, 1.0, 1).unwrap();
        assert_eq!(m.len(), 10);
    }

    #[test]
    fn band_limit() {
        let walk = track(96_000, |_| Vec2::new(1.0, 0.0));
        let m = build_sparse_matrix(&walk, 40.0, 8).unwrap();
        let max_gap = m.entries.iter().map(|e| (e.j - e.i) / 8).max().unwrap();
        assert_eq!(max_gap, 200);
        assert!(m
            .entries
            .iter()
            .all(|e| e.i % 8 == 0 && e.j % 8 == 0 && e.i < e.j));
    }

    #[test]
    fn tiny_window_gives_empty_matrix() {
        let walk = track(50, |_| Vec2::new(1.0, 0.0));
        let m = build_sparse_matrix(&walk, 0.01, 1).unwrap();
        assert!(m.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pairs(&m, 4, &mut rng).is_err());
    }

    #[test]
    fn sampling_membership() {
        let walk = track(200, |t| Vec2::new(t.sin(), 1.0));
        let m = build_sparse_matrix(&walk, 2.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_pairs(&m, 128, &mut rng).unwrap();
        assert_eq!(batch.len(), 128);
        assert!(batch.iter().all(|p| m.entries.contains(p)));

        let single = SparseDistanceMatrix {
            entries: vec![m.entries[3]],
            ..m.clone()
        };
        let batch = sample_pairs(&single, 16, &mut rng).unwrap();
        assert!(batch.iter().all(|p| *p == m.entries[3]));
    }

    #[test]
    fn csv_dump() {
        let walk = track(3, |_| Vec2::new(1.0, 0.0));
        let m = build_sparse_matrix(&walk, 1.0, 1).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "0,1,0.025000\n0,2,0.050000\n1,2,0.025000\n"
        );
    }
}
