//! Chart-to-world alignment and localization metrics.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::chartnet::{forward, ModelParams};
use crate::geom::Vec2;
use crate::mesh::CirFrame;
use crate::{Error, Result};

/// Relative determinant below which the anchor covariance counts as singular.
const RANK_TOLERANCE: f64 = 1e-12;

/// `p = A c + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    /// Row-major 2×2 matrix.
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            a: [[1.0, 0.0], [0.0, 1.0]],
            b: [0.0, 0.0],
        }
    }

    pub fn from_parts(a: Matrix2<f64>, b: Vec2) -> Self {
        AffineTransform {
            a: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]],
            b: [b.x, b.y],
        }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1])
    }

    pub fn offset(&self) -> Vec2 {
        Vec2::new(self.b[0], self.b[1])
    }

    pub fn apply_point(&self, c: Vec2) -> Vec2 {
        self.matrix() * c + self.offset()
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        let a = self.matrix();
        AffineTransform::from_parts(a * inner.matrix(), a * inner.offset() + self.offset())
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::domain("transform is not invertible"))?;
        Ok(AffineTransform::from_parts(inv, -(inv * self.offset())))
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().chain(&self.b).all(|v| v.is_finite())
    }
}

pub fn apply_transform(t: &AffineTransform, points: &[Vec2]) -> Vec<Vec2> {
    points.iter().map(|p| t.apply_point(*p)).collect()
}

fn centroid(points: &[Vec2]) -> Vec2 {
    points.iter().sum::<Vec2>() / points.len() as f64
}

/// Least-squares affine map from chart coordinates to world positions.
///
/// Solved in closed form on centered coordinates: the normal equations for
/// `A` use the 2×2 scatter matrix of the chart anchors, and `b` follows from
/// the centroids.
pub fn fit_affine(chart: &[Vec2], world: &[Vec2]) -> Result<AffineTransform> {
    if chart.len() != world.len() {
        return Err(Error::domain(format!(
            "{} chart points but {} anchor positions",
            chart.len(),
            world.len()
        )));
    }
    if chart.len() < 3 {
        return Err(Error::domain("an affine fit needs at least 3 anchors"));
    }
    let (cc, cw) = (centroid(chart), centroid(world));
    let mut scatter = Matrix2::zeros();
    let mut cross = Matrix2::zeros();
    for (c, w) in chart.iter().zip(world) {
        let (dc, dw) = (c - cc, w - cw);
        scatter += dc * dc.transpose();
        cross += dw * dc.transpose();
    }
    let scale = scatter.trace();
    if !(scale > 0.0) || scatter.determinant() <= RANK_TOLERANCE * scale * scale {
        return Err(Error::domain(
            "chart anchors are collinear; affine fit is rank deficient",
        ));
    }
    let inv = scatter
        .try_inverse()
        .ok_or_else(|| Error::domain("chart anchors are collinear; affine fit is rank deficient"))?;
    let a = cross * inv;
    Ok(AffineTransform::from_parts(a, cw - a * cc))
}

/// Farthest-point sampling over `positions`, seeded by the sample nearest to
/// `center`. The seed only initializes the distances; it is returned only if
/// every other sample has been taken. Ties go to the lowest index.
pub fn select_anchors(positions: &[Vec2], center: Vec2, count: usize) -> Result<Vec<usize>> {
    if count < 3 {
        return Err(Error::domain("at least 3 anchors are needed for an affine fit"));
    }
    if count > positions.len() {
        return Err(Error::domain(format!(
            "requested {count} anchors from {} samples",
            positions.len()
        )));
    }
    let seed = (0..positions.len())
        .min_by(|&a, &b| {
            (positions[a] - center)
                .norm()
                .total_cmp(&(positions[b] - center).norm())
        })
        .unwrap();
    let mut nearest: Vec<f64> = positions.iter().map(|p| (p - positions[seed]).norm()).collect();
    let mut taken = vec![false; positions.len()];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut best: Option<usize> = None;
        for k in 0..positions.len() {
            if !taken[k] && best.is_none_or(|b| nearest[k] > nearest[b]) {
                best = Some(k);
            }
        }
        let pick = best.unwrap();
        taken[pick] = true;
        out.push(pick);
        for (k, d) in nearest.iter_mut().enumerate() {
            *d = d.min((positions[k] - positions[pick]).norm());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub ce90: f64,
    pub per_sample_errors: Vec<f64>,
}

/// Linearly interpolated percentile at rank `q * (n - 1)` of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let r = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = r.floor() as usize;
    let hi = r.ceil() as usize;
    sorted[lo] + (r - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Metrics {
    pub fn percentile(&self, q: f64) -> f64 {
        let mut sorted = self.per_sample_errors.clone();
        sorted.sort_by(f64::total_cmp);
        percentile(&sorted, q)
    }

    pub fn n(&self) -> usize {
        self.per_sample_errors.len()
    }
}

pub fn compute_metrics(predicted: &[Vec2], truth: &[Vec2]) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} predictions but {} reference positions",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::domain("no samples to evaluate"));
    }
    let errors: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| (p - t).norm()).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(Metrics {
        mae: errors.iter().sum::<f64>() / errors.len() as f64,
        ce90: percentile(&sorted, 0.9),
        per_sample_errors: errors,
    })
}

/// Network outputs for normalized frames.
pub fn predict(model: &ModelParams, frames: &[CirFrame]) -> Result<Vec<Vec2>> {
    frames.iter().map(|f| forward(model, f)).collect()
}

/// Forward every frame, map through `transform` and score against `truth`.
pub fn evaluate_pipeline(
    model: &ModelParams,
    frames: &[CirFrame],
    transform: &AffineTransform,
    truth: &[Vec2],
) -> Result<Metrics> {
    if frames.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} frames but {} reference positions",
            frames.len(),
            truth.len()
        )));
    }
    let chart = predict(model, frames)?;
    compute_metrics(&apply_transform(transform, &chart), truth)
}
