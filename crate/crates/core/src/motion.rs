//! Ground-truth walks and drift-corrupted velocity estimates.
//!
//! The velocity estimate replaces a foot-mounted inertial pipeline by a
//! parametric error model: a Brownian heading error, a per-session scale bias
//! and white velocity noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geom::{rotate, Rect, Vec2};
use crate::{Error, Result};

/// Walking speeds are clamped to this range, m/s.
pub const SPEED_RANGE: (f64, f64) = (0.5, 1.5);
const SPEED_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pos: [f64; 2],
    pub vel_true: [f64; 2],
}

impl TrajectorySample {
    pub fn pos(&self) -> Vec2 {
        Vec2::from(self.pos)
    }

    pub fn vel(&self) -> Vec2 {
        Vec2::from(self.vel_true)
    }
}

/// Random-waypoint walk inside `zone` sampled every `1/rate` seconds.
///
/// Each leg heads to a uniform waypoint at a speed drawn from
/// `N(mean_speed, 0.1^2)` clamped to [`SPEED_RANGE`]. Distance left over when a
/// waypoint is reached mid-tick carries into the next leg, so positions stay
/// continuous.
pub fn gen_trajectory(
    zone: &Rect,
    duration: f64,
    mean_speed: f64,
    rate: f64,
    seed: u64,
) -> Result<Vec<TrajectorySample>> {
    if !(duration > 0.0) || !(rate > 0.0) {
        return Err(Error::domain("duration and rate must be positive"));
    }
    if zone.is_degenerate() {
        return Err(Error::domain("walking zone is degenerate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speed_dist = Normal::new(mean_speed, SPEED_STD).map_err(|e| Error::domain(e.to_string()))?;
    let waypoint = |rng: &mut ChaCha8Rng| {
        Vec2::new(
            rng.random_range(zone.min[0]..=zone.max[0]),
            rng.random_range(zone.min[1]..=zone.max[1]),
        )
    };
    let draw_speed = |rng: &mut ChaCha8Rng| speed_dist.sample(rng).clamp(SPEED_RANGE.0, SPEED_RANGE.1);

    let n = (duration * rate + 1e-9).floor() as usize;
    let dt = 1.0 / rate;
    let mut pos = waypoint(&mut rng);
    let mut goal = waypoint(&mut rng);
    let mut speed = draw_speed(&mut rng);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let to_goal = goal - pos;
        let heading = if to_goal.norm() > 0.0 {
            to_goal / to_goal.norm()
        } else {
            Vec2::zeros()
        };
        out.push(TrajectorySample {
            t: i as f64 * dt,
            pos: [pos.x, pos.y],
            vel_true: [heading.x * speed, heading.y * speed],
        });
        // Advance one tick, possibly through several waypoints.
        let mut budget = speed * dt;
        loop {
            let to_goal = goal - pos;
            let dist = to_goal.norm();
            if dist > budget {
                pos += to_goal * (budget / dist);
                break;
            }
            pos = goal;
            let spent = dist / speed;
            goal = waypoint(&mut rng);
            let remaining_time = budget / speed - spent;
            speed = draw_speed(&mut rng);
            budget = remaining_time * speed;
            if budget <= 0.0 {
                break;
            }
        }
        pos.x = pos.x.clamp(zone.min[0], zone.max[0]);
        pos.y = pos.y.clamp(zone.min[1], zone.max[1]);
    }
    Ok(out)
}

/// Error model parameters of the velocity estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    /// rad/√s.
    pub heading_rate_std: f64,
    pub scale_bias_std: f64,
    /// m/s, per component and sample.
    pub vel_noise_std: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams {
            heading_rate_std: 0.005,
            scale_bias_std: 0.02,
            vel_noise_std: 0.02,
        }
    }
}

impl DriftParams {
    pub fn zero() -> Self {
        DriftParams {
            heading_rate_std: 0.0,
            scale_bias_std: 0.0,
            vel_noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.heading_rate_std, self.scale_bias_std, self.vel_noise_std]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::config("drift parameters must be finite and >= 0"))
        }
    }
}

/// One realization of the velocity error processes.
#[derive(Debug, Clone, PartialEq)]
pub struct PdrRealization {
    /// Heading error per sample, radians.
    pub heading: Vec<f64>,
    pub scale_bias: f64,
    /// Additive velocity noise per sample.
    pub noise: Vec<Vec2>,
}

impl PdrRealization {
    /// Draws the error processes for `times`. The heading error starts at zero
    /// and accumulates Gaussian increments of variance `heading_rate_std^2 * dt`.
    pub fn draw(times: &[f64], params: &DriftParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale_bias = params.scale_bias_std * rng.sample::<f64, _>(StandardNormal);
        let mut heading = Vec::with_capacity(times.len());
        let mut noise = Vec::with_capacity(times.len());
        let mut theta = 0.0;
        for (i, t) in times.iter().enumerate() {
            if i > 0 {
                let dt = (t - times[i - 1]).max(0.0);
                theta += params.heading_rate_std * dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            heading.push(theta);
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            noise.push(Vec2::new(nx, ny) * params.vel_noise_std);
        }
        PdrRealization {
            heading,
            scale_bias,
            noise,
        }
    }

    /// `R(theta) * v * (1 + s) + eta` per sample.
    pub fn apply(&self, trajectory: &[TrajectorySample]) -> Vec<Vec2> {
        trajectory
            .iter()
            .enumerate()
            .map(|(i, s)| rotate(&s.vel(), self.heading[i]) * (1.0 + self.scale_bias) + self.noise[i])
            .collect()
    }
}

/// Estimated velocities on the trajectory's tick grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrack {
    pub t: Vec<f64>,
    pub vel_est: Vec<Vec2>,
    pub drift_params: DriftParams,
}

impl VelocityTrack {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

pub fn simulate_pdr(
    trajectory: &[TrajectorySample],
    drift_params: &DriftParams,
    seed: u64,
) -> Result<VelocityTrack> {
    if trajectory.is_empty() {
        return Err(Error::domain("trajectory is empty"));
    }
    drift_params.validate()?;
    let t: Vec<f64> = trajectory.iter().map(|s| s.t).collect();
    let realization = PdrRealization::draw(&t, drift_params, seed);
    Ok(VelocityTrack {
        vel_est: realization.apply(trajectory),
        t,
        drift_params: *drift_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zone() -> Rect {
        Rect::new(3.0, 2.0, 8.0, 6.0)
    }

    #[test]
    fn trajectory_shape_and_containment() {
        let traj = gen_trajectory(&zone(), 60.0, 1.0, 40.0, 1).unwrap();
        assert_eq!(traj.len(), 2400);
        assert!(traj.iter().all(|s| zone().contains(&s.pos())));
        assert!(traj.windows(2).all(|w| w[1].t > w[0].t));
        assert!(traj.iter().all(|s| s.vel().norm() <= SPEED_RANGE.1 + 1e-12));
        // Continuity: no jump longer than the fastest step.
        assert!(traj
            .windows(2)
            .all(|w| (w[1].pos() - w[0].pos()).norm() <= SPEED_RANGE.1 / 40.0 + 1e-9));
    }

    #[test]
    fn trajectory_is_seeded() {
        let a = gen_trajectory(&zone(), 10.0, 1.0, 40.0, 5).unwrap();
        let b = gen_trajectory(&zone(), 10.0, 1.0, 40.0, 5).unwrap();
        let c = gen_trajectory(&zone(), 10.0, 1.0, 40.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_speed_over_seeds() {
        for seed in 0..10 {
            let traj = gen_trajectory(&zone(), 120.0, 1.0, 40.0, seed).unwrap();
            let mean = traj.iter().map(|s| s.vel().norm()).sum::<f64>() / traj.len() as f64;
            assert!((0.85..=1.15).contains(&mean), "seed {seed}: {mean}");
        }
    }

    #[test]
    fn zero_drift_is_identity() {
        let traj = gen_trajectory(&zone(), 20.0, 1.0, 40.0, 2).unwrap();
        let track = simulate_pdr(&traj, &DriftParams::zero(), 9).unwrap();
        for (s, v) in traj.iter().zip(&track.vel_est) {
            assert_eq!(s.vel(), *v);
        }
    }

    #[test]
    fn pure_scale_bias() {
        let traj = gen_trajectory(&zone(), 20.0, 1.0, 40.0, 2).unwrap();
        let times: Vec<f64> = traj.iter().map(|s| s.t).collect();
        let mut r = PdrRealization::draw(&times, &DriftParams::zero(), 0);
        r.scale_bias = 0.1;
        for (s, v) in traj.iter().zip(r.apply(&traj)) {
            assert!((v.norm() - 1.1 * s.vel().norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn heading_error_preserves_speed() {
        let traj = gen_trajectory(&zone(), 30.0, 1.0, 40.0, 3).unwrap();
        let params = DriftParams {
            heading_rate_std: 0.2,
            scale_bias_std: 0.0,
            vel_noise_std: 0.0,
        };
        let track = simulate_pdr(&traj, &params, 4).unwrap();
        for (s, v) in traj.iter().zip(&track.vel_est) {
            assert!((v.norm() - s.vel().norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_trajectory_rejected() {
        assert!(simulate_pdr(&[], &DriftParams::default(), 0).is_err());
        assert!(gen_trajectory(&zone(), 0.0, 1.0, 40.0, 0).is_err());
    }
}
