//! Kinematic vehicle model and the scripted pure-pursuit expert.

use super::track::Track;
use super::{heading_dir, heading_right, Vec2};

/// Fixed forward speed, m/s (throttle is not controlled).
pub const SPEED: f32 = 2.0;
/// Simulation step, seconds per frame.
pub const DT: f32 = 0.1;
/// Yaw rate at full steering lock, rad/s. Full lock covers a quarter turn in
/// 40 frames: (pi/2) / (40 * DT).
pub const OMEGA_MAX: f32 = std::f32::consts::FRAC_PI_2 / 4.0;
/// Pure-pursuit lookahead distance, meters.
pub const LOOKAHEAD: f32 = 2.6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub pos: Vec2,
    /// Clockwise from +x; positive steering increases it.
    pub heading: f32,
    pub speed: f32,
}

impl VehicleState {
    pub fn new(pos: Vec2, heading: f32) -> Self {
        VehicleState {
            pos,
            heading,
            speed: SPEED,
        }
    }
}

/// Advance one frame: `heading += steering * OMEGA_MAX * DT`, then move
/// `speed * DT` along the new heading.
pub fn step_vehicle(state: &VehicleState, steering: f32, dt: f32) -> VehicleState {
    let steering = steering.clamp(-1.0, 1.0);
    let heading = state.heading + steering * OMEGA_MAX * dt;
    let dir = heading_dir(heading);
    VehicleState {
        pos: state.pos.add(dir.scale(state.speed * dt)),
        heading,
        speed: state.speed,
    }
}

/// Pure-pursuit steering toward a lookahead point on the centerline,
/// clamped to [-1, 1]. Left turns are negative.
pub fn expert_steering(state: &VehicleState, track: &Track) -> f32 {
    let Some(proj) = track.project(state.pos) else {
        return 0.0;
    };
    let target = track.station_at(proj.s + LOOKAHEAD);
    let to_target = target.pos.sub(state.pos);
    let dist = to_target.norm().max(0.3);
    let fwd = to_target.dot(heading_dir(state.heading));
    let right = to_target.dot(heading_right(state.heading));
    let alpha = right.atan2(fwd);
    let curvature = 2.0 * alpha.sin() / dist;
    let yaw_rate = state.speed * curvature;
    (yaw_rate / OMEGA_MAX).clamp(-1.0, 1.0)
}
