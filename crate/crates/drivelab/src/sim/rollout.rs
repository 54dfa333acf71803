//! Closed-loop turn episodes: render, transform weather, query the policy,
//! step the vehicle, and detect crashes against the drivable region.

use super::render::render_frame;
use super::track::{Scenario, Track};
use super::vehicle::{expert_steering, step_vehicle, VehicleState, DT};
use super::weather::{apply_weather, WeatherSpec};
use crate::error::Result;

/// Fixed episode length covering the full turning maneuver.
pub const EPISODE_FRAMES: usize = 120;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CrashAtFrame(u32),
}

#[derive(Clone, Debug)]
pub struct EpisodeLog {
    pub scenario: u16,
    pub weather: u8,
    pub steps: Vec<(VehicleState, f32)>,
    pub outcome: Outcome,
}

impl EpisodeLog {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Steering policy under closed-loop evaluation. Network policies read the
/// 8-bit RGB observation; the scripted expert reads the state directly.
pub trait RolloutPolicy {
    fn steer(&mut self, rgb: &[u8], state: &VehicleState, track: &Track) -> f32;
}

/// The scripted supervisor as a policy (upper bound; ignores pixels).
pub struct ExpertPolicy;

impl RolloutPolicy for ExpertPolicy {
    fn steer(&mut self, _rgb: &[u8], state: &VehicleState, track: &Track) -> f32 {
        expert_steering(state, track)
    }
}

/// A constant steering command (crash baseline).
pub struct ConstantPolicy(pub f32);

impl RolloutPolicy for ConstantPolicy {
    fn steer(&mut self, _rgb: &[u8], _state: &VehicleState, _track: &Track) -> f32 {
        self.0
    }
}

/// Run one 120-frame turn episode. The episode is a pure function of
/// (policy, scenario, weather): rendering, the weather transform, and vehicle
/// kinematics are all deterministic.
pub fn rollout_turn(
    policy: &mut dyn RolloutPolicy,
    track: &Track,
    scenario: &Scenario,
    weather: &WeatherSpec,
    resolution: usize,
) -> Result<EpisodeLog> {
    let start = track.station_at(scenario.start_s);
    let mut state = VehicleState::new(start.pos, start.heading);
    let mut steps = Vec::with_capacity(EPISODE_FRAMES);
    let mut outcome = Outcome::Success;

    for frame in 0..EPISODE_FRAMES {
        let rendered = render_frame(&state, track, resolution)?;
        let rgb = apply_weather(&rendered.rgb, weather, resolution);
        let rgb_u8: Vec<u8> = rgb.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        let steering = policy.steer(&rgb_u8, &state, track).clamp(-1.0, 1.0);
        steps.push((state, steering));
        state = step_vehicle(&state, steering, DT);
        if !track.is_drivable(state.pos) {
            outcome = Outcome::CrashAtFrame(frame as u32);
            break;
        }
    }

    Ok(EpisodeLog {
        scenario: scenario.id,
        weather: weather.id,
        steps,
        outcome,
    })
}
