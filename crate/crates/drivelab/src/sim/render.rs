//! Pseudo-perspective front camera: each image row below the horizon maps to
//! a ground distance ahead, each column to a lateral offset at that distance.
//! Every pixel gets exactly one semantic class; RGB is a class palette plus
//! deterministic world-anchored texture noise and distance shading.

use super::track::{Track, BUILDING_DEPTH, HALF_WIDTH, SIDEWALK_WIDTH};
use super::vehicle::VehicleState;
use super::{hash64, hash_unit, heading_dir, heading_right, Vec2};
use crate::error::{Error, Result};

/// Full class set: sky, road, lane-marking, sidewalk, terrain, building,
/// obstacle. Configurations with fewer classes merge from the tail.
pub const K_MAX: usize = 7;
pub const CLASS_NAMES: [&str; K_MAX] = [
    "sky",
    "road",
    "lane-marking",
    "sidewalk",
    "terrain",
    "building",
    "obstacle",
];

pub const CLASS_SKY: u8 = 0;
pub const CLASS_ROAD: u8 = 1;
pub const CLASS_MARKING: u8 = 2;
pub const CLASS_SIDEWALK: u8 = 3;
pub const CLASS_TERRAIN: u8 = 4;
pub const CLASS_BUILDING: u8 = 5;
pub const CLASS_OBSTACLE: u8 = 6;

const CAMERA_HEIGHT: f32 = 1.5;
const FOCAL_PER_PIXEL: f32 = 0.577; // focal length = 0.577 * image height
const CENTER_MARK_HALF: f32 = 0.10;
const EDGE_MARK_WIDTH: f32 = 0.18;
const DASH_PERIOD: f32 = 3.0;
const DASH_ON: f32 = 1.6;
const TEXTURE_SEED: u64 = 0x74657874;

/// One rendered observation at the default weather: planar `[3, h, w]` RGB in
/// [0, 1] plus a `[h * w]` class-id map.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub rgb: Vec<f32>,
    pub labels: Vec<u8>,
    pub resolution: usize,
}

fn base_color(class: u8) -> [f32; 3] {
    match class {
        CLASS_ROAD => [0.32, 0.32, 0.34],
        CLASS_MARKING => [0.92, 0.92, 0.88],
        CLASS_SIDEWALK => [0.62, 0.58, 0.55],
        CLASS_TERRAIN => [0.33, 0.52, 0.27],
        CLASS_BUILDING => [0.55, 0.36, 0.30],
        CLASS_OBSTACLE => [0.95, 0.45, 0.10],
        _ => [0.0, 0.0, 0.0],
    }
}

fn texture_amp(class: u8) -> f32 {
    match class {
        CLASS_ROAD => 0.015,
        CLASS_MARKING => 0.02,
        CLASS_SIDEWALK => 0.025,
        CLASS_TERRAIN => 0.045,
        CLASS_BUILDING => 0.05,
        CLASS_OBSTACLE => 0.03,
        _ => 0.0,
    }
}

/// Merge high class ids down when a configuration uses fewer than
/// [`K_MAX`] classes: obstacle -> terrain, building -> terrain,
/// lane-marking -> road.
pub fn remap_class(class: u8, k: usize) -> u8 {
    let mut c = class;
    if k <= 6 && c == CLASS_OBSTACLE {
        c = CLASS_TERRAIN;
    }
    if k <= 5 && c == CLASS_BUILDING {
        c = CLASS_TERRAIN;
    }
    if k <= 4 && c == CLASS_MARKING {
        c = CLASS_ROAD;
    }
    debug_assert!((c as usize) < k.max(4));
    c
}

fn classify_ground(track: &Track, p: Vec2) -> u8 {
    for ob in track.obstacles() {
        let d = p.sub(ob.pos).norm();
        if d <= ob.radius {
            return CLASS_OBSTACLE;
        }
    }
    let Some(proj) = track.project(p) else {
        return CLASS_TERRAIN;
    };
    let d = proj.lateral.abs();
    if d <= HALF_WIDTH {
        // Center dashed line.
        if d <= CENTER_MARK_HALF {
            let phase = proj.s.rem_euclid(DASH_PERIOD);
            if phase < DASH_ON {
                return CLASS_MARKING;
            }
        }
        // Solid edge lines, inside the drivable band.
        if d >= HALF_WIDTH - EDGE_MARK_WIDTH {
            return CLASS_MARKING;
        }
        return CLASS_ROAD;
    }
    if d <= HALF_WIDTH + SIDEWALK_WIDTH {
        return CLASS_SIDEWALK;
    }
    if d <= HALF_WIDTH + SIDEWALK_WIDTH + BUILDING_DEPTH {
        if let Some(band) = track.band_at(proj.s) {
            let on_right = proj.lateral > 0.0;
            if (on_right && band.building_right) || (!on_right && band.building_left) {
                return CLASS_BUILDING;
            }
        }
    }
    CLASS_TERRAIN
}

fn world_cell_noise(p: Vec2, class: u8) -> f32 {
    let cx = (p.x * 2.0).floor() as i64 as u64;
    let cy = (p.y * 2.0).floor() as i64 as u64;
    let key = hash64(cx ^ cy.rotate_left(27) ^ ((class as u64) << 53) ^ TEXTURE_SEED);
    (hash_unit(key) * 2.0 - 1.0) * texture_amp(class)
}

/// Render the front-camera view at the default weather (id 0). Only power-of-
/// two resolutions with enough rows for the horizon split are supported.
pub fn render_frame(state: &VehicleState, track: &Track, resolution: usize) -> Result<RenderedFrame> {
    if !matches!(resolution, 32 | 64 | 128) {
        return Err(Error::Invalid(format!(
            "resolution {} is not a supported power of two (32, 64, 128)",
            resolution
        )));
    }
    let h = resolution;
    let w = resolution;
    let horizon = (3 * h) / 8;
    let focal = FOCAL_PER_PIXEL * h as f32;
    let hw = h * w;
    let mut rgb = vec![0.0f32; 3 * hw];
    let mut labels = vec![CLASS_SKY; hw];

    let fwd = heading_dir(state.heading);
    let right = heading_right(state.heading);

    for r in 0..h {
        if r < horizon {
            // Sky gradient, light near the horizon.
            let t = r as f32 / horizon.max(1) as f32;
            let top = [0.36, 0.57, 0.85];
            let bot = [0.66, 0.80, 0.92];
            for c in 0..w {
                let idx = r * w + c;
                let n = (hash_unit(hash64((r as u64) << 24 ^ c as u64 ^ TEXTURE_SEED)) * 2.0 - 1.0) * 0.012;
                for ch in 0..3 {
                    let v = top[ch] + (bot[ch] - top[ch]) * t + n;
                    rgb[ch * hw + idx] = v.clamp(0.0, 1.0);
                }
            }
            continue;
        }
        let i = (r - horizon) as f32 + 0.5;
        let z = focal * CAMERA_HEIGHT / i;
        let shade = 1.0 - 0.28 * (z / 55.0).min(1.0);
        for c in 0..w {
            let lateral = (c as f32 - w as f32 / 2.0 + 0.5) * z / focal;
            let p = state.pos.add(fwd.scale(z)).add(right.scale(lateral));
            let class = classify_ground(track, p);
            let idx = r * w + c;
            labels[idx] = class;
            let base = base_color(class);
            let n = world_cell_noise(p, class);
            for ch in 0..3 {
                let v = (base[ch] + n) * shade;
                rgb[ch * hw + idx] = v.clamp(0.0, 1.0);
            }
        }
    }

    Ok(RenderedFrame {
        rgb,
        labels,
        resolution,
    })
}

impl RenderedFrame {
    /// Apply the class merge for a `k`-class configuration in place.
    pub fn remap_labels(&mut self, k: usize) {
        if k < K_MAX {
            for l in &mut self.labels {
                *l = remap_class(*l, k);
            }
        }
    }

    /// Quantize RGB to 8-bit (the on-disk and model-input representation).
    pub fn rgb_u8(&self) -> Vec<u8> {
        self.rgb.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }
}
