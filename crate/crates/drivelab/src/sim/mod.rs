//! Deterministic 2D driving world: track geometry, a pseudo-perspective
//! front-camera renderer with exact per-pixel labels, 15 parametric weather
//! transforms, a scripted pure-pursuit expert, and closed-loop episodes.

pub mod dataset;
pub mod render;
pub mod rollout;
pub mod track;
pub mod vehicle;
pub mod weather;

pub use dataset::{generate_dataset, Dataset, Frame, GenOptions};
pub use render::{render_frame, RenderedFrame, CLASS_NAMES, K_MAX};
pub use rollout::{rollout_turn, EpisodeLog, Outcome, RolloutPolicy, EPISODE_FRAMES};
pub use track::{build_track, Scenario, Track, TrackDifficulty, TurnDir};
pub use vehicle::{expert_steering, step_vehicle, VehicleState, DT, OMEGA_MAX, SPEED};
pub use weather::{apply_weather, weather_presets, WeatherSpec, NUM_WEATHERS};

/// 2D point/vector in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2 {
    pub x: f32,
    pub y: f32,
}

impl Vec2 {
    pub fn new(x: f32, y: f32) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f32 {
        self.x * o.x + self.y * o.y
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f32) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f32 {
        self.dot(self).sqrt()
    }
}

/// Headings are measured clockwise from +x, so a positive steering command
/// (right turn) increases the heading angle.
pub fn heading_dir(heading: f32) -> Vec2 {
    Vec2::new(heading.cos(), -heading.sin())
}

/// Unit vector 90 degrees clockwise of the heading (driver's right side).
pub fn heading_right(heading: f32) -> Vec2 {
    Vec2::new(-heading.sin(), -heading.cos())
}

/// splitmix64; the deterministic hash behind texture noise and jitter seeds.
pub fn hash64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn hash_combine(a: u64, b: u64) -> u64 {
    hash64(a ^ b.wrapping_mul(0x9e3779b97f4a7c15))
}

/// Uniform in [0, 1) from a hash key.
pub fn hash_unit(key: u64) -> f32 {
    ((hash64(key) >> 40) as f32) / ((1u64 << 24) as f32)
}
