use crate::geom::Vec2;
use crate::mesh::CirFrame;
use crate::{Error, Result};

use super::net::ModelParams;

/// Divides every tap by `train_max`, or by the global maximum of `frames` when
/// `train_max` is `None`. Values above 1 (test data) are left unclamped.
pub fn normalize_cir(frames: &[CirFrame], train_max: Option<f64>) -> Result<(Vec<CirFrame>, f64)> {
    if frames.is_empty() {
        return Err(Error::domain("no frames to normalize"));
    }
    let scale = match train_max {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => return Err(Error::domain(format!("train_max must be positive, got {m}"))),
        None => {
            let m = frames.iter().map(CirFrame::max_tap).fold(0.0, f64::max);
            if !(m > 0.0) {
                return Err(Error::domain("training frames are all zero"));
            }
            m
        }
    };
    let inv = 1.0 / scale;
    let out = frames
        .iter()
        .map(|f| CirFrame {
            taps: f.taps.iter().map(|v| v * inv).collect(),
            ..f.clone()
        })
        .collect();
    Ok((out, scale))
}

/// Pair weight `1 / max(d, floor)`: short distances weigh more.
pub fn pair_weight(d: f64, floor: f64) -> f64 {
    1.0 / d.max(floor)
}

/// Weighted squared mismatch between a target distance and the embedding
/// distance, with its gradient with respect to both embeddings.
///
/// At coincident embeddings the direction of the distance is undefined; the
/// gradient is taken as zero there.
pub fn siamese_terms(a: Vec2, b: Vec2, d: f64, floor: f64) -> (f64, Vec2, Vec2) {
    let beta = pair_weight(d, floor);
    let diff = a - b;
    let dist = diff.norm();
    let residual = d - dist;
    let loss = beta * residual * residual;
    if dist == 0.0 {
        return (loss, Vec2::zeros(), Vec2::zeros());
    }
    let ga = diff * (-2.0 * beta * residual / dist);
    (loss, ga, -ga)
}

/// Squared Euclidean error with its gradient.
pub fn fp_terms(out: Vec2, target: Vec2) -> (f64, Vec2) {
    let diff = out - target;
    (diff.norm_squared(), diff * 2.0)
}

/// Distance loss for one pair of network inputs.
pub fn siamese_loss(params: &ModelParams, x_n: &[f64], x_k: &[f64], d: f64, floor: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::domain(format!("target distance must be >= 0, got {d}")));
    }
    let a = params.forward(x_n)?;
    let b = params.forward(x_k)?;
    Ok(siamese_terms(a, b, d, floor).0)
}

pub fn fp_loss(params: &ModelParams, x: &[f64], reference: Vec2) -> Result<f64> {
    Ok(fp_terms(params.forward(x)?, reference).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let f = |taps: Vec<f64>| CirFrame {
            timestamp: 0.0,
            num_links: 1,
            tap_count: taps.len(),
            taps,
        };
        let (train, max) = normalize_cir(&[f(vec![1.0, 4.0]), f(vec![2.0, 0.5])], None).unwrap();
        assert_eq!(max, 4.0);
        assert_eq!(train[0].taps, vec![0.25, 1.0]);
        let (test, _) = normalize_cir(&[f(vec![5.0])], Some(max)).unwrap();
        assert_eq!(test[0].taps, vec![1.25]);
        let (twice, _) = normalize_cir(&train, Some(max)).unwrap();
        assert_eq!(twice[0].taps, vec![0.0625, 0.25]);
        assert!(normalize_cir(&[f(vec![0.0, 0.0])], None).is_err());
        assert!(normalize_cir(&[f(vec![1.0])], Some(0.0)).is_err());
        assert!(normalize_cir(&[], None).is_err());
    }

    #[test]
    fn siamese_values() {
        let z = Vec2::zeros();
        assert_eq!(siamese_terms(z, Vec2::new(3.0, 4.0), 5.0, 0.25).0, 0.0);
        assert_eq!(siamese_terms(z, z, 1.0, 0.25).0, 1.0);
        let (loss, ..) = siamese_terms(z, Vec2::new(0.2, 0.0), 0.1, 0.25);
        assert!((loss - 0.04).abs() < 1e-15);
        let (_, ga, gb) = siamese_terms(z, z, 1.0, 0.25);
        assert_eq!((ga, gb), (z, z));
    }

    #[test]
    fn fp_values() {
        assert_eq!(fp_terms(Vec2::new(3.0, 4.0), Vec2::new(3.0, 4.0)).0, 0.0);
        assert_eq!(fp_terms(Vec2::zeros(), Vec2::new(3.0, 4.0)).0, 25.0);
    }

    #[test]
    fn siamese_gradient_matches_difference_quotient() {
        let (a, b, d) = (Vec2::new(0.3, -0.2), Vec2::new(1.1, 0.4), 0.7);
        let (_, ga, _) = siamese_terms(a, b, d, 0.25);
        let h = 1e-6;
        for k in 0..2 {
            let mut ap = a;
            let mut am = a;
            ap[k] += h;
            am[k] -= h;
            let fd = (siamese_terms(ap, b, d, 0.25).0 - siamese_terms(am, b, d, 0.25).0) / (2.0 * h);
            assert!((fd - ga[k]).abs() < 1e-8);
        }
    }
}
