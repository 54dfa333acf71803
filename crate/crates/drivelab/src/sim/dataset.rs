//! Dataset generation and the fixed-width binary on-disk format.
//!
//! A dataset holds frames for one or more weather conditions rendered from
//! shared underlying vehicle states, so label maps are identical across the
//! weather renderings of a state. Directory layout: `manifest.toml` plus
//! `frames.bin` (little-endian fixed-width records).

use super::render::{render_frame, remap_class};
use super::track::{Scenario, Track};
use super::vehicle::{expert_steering, step_vehicle, VehicleState, DT};
use super::weather::{apply_weather, weather_presets, WeatherSpec};
use super::{hash_combine, heading_dir, heading_right, hash_unit};
use crate::error::{Error, Result};
use crate::util::atomic_write;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// One observation: 8-bit planar RGB, per-pixel class ids, expert steering.
#[derive(Clone, Debug)]
pub struct Frame {
    pub rgb: Vec<u8>,
    /// Empty when the dataset was generated without labels.
    pub labels: Vec<u8>,
    pub steering: f32,
    pub weather: u8,
    pub scenario: u16,
    /// Index of the underlying vehicle state.
    pub state_index: u32,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub resolution: usize,
    pub k_classes: usize,
    pub weathers: Vec<u8>,
    pub n_states: usize,
    pub seed: u64,
    pub has_labels: bool,
    pub config_hash: String,
    pub frames: Vec<Frame>,
}

#[derive(Clone, Debug)]
pub struct GenOptions {
    pub weathers: Vec<u8>,
    /// Number of underlying states; total frames = n_states * weathers.len().
    pub n_states: usize,
    pub resolution: usize,
    pub k_classes: usize,
    pub seed: u64,
    /// Lateral jitter bound (meters) injected per recorded state.
    pub lateral_jitter: f32,
    /// Heading jitter bound (radians).
    pub heading_jitter: f32,
    pub keep_labels: bool,
    pub config_hash: String,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            weathers: vec![0],
            n_states: 100,
            resolution: 64,
            k_classes: 7,
            seed: 1,
            lateral_jitter: 0.55,
            heading_jitter: 0.16,
            keep_labels: true,
            config_hash: String::new(),
        }
    }
}

/// Roll the expert through the track's turn scenarios, recording jittered
/// states, and render every requested weather from each state.
pub fn generate_dataset(track: &Track, opts: &GenOptions) -> Result<Dataset> {
    for &w in &opts.weathers {
        if w as usize >= weather_presets().len() {
            return Err(Error::Invalid(format!("unknown weather id {w}")));
        }
    }
    if opts.weathers.is_empty() {
        return Err(Error::Invalid("weather set is empty".into()));
    }
    let scenarios = track.scenarios(usize::MAX, 8.0);
    if scenarios.is_empty() {
        return Err(Error::Invalid("track has no turn scenarios".into()));
    }

    // Phase 1: cheap state collection along expert rollouts, cycling scenarios.
    let frames_per_visit = 30usize;
    let mut nominal: Vec<(VehicleState, u16)> = Vec::with_capacity(opts.n_states);
    let mut scenario_cursor = 0usize;
    'outer: loop {
        let sc: &Scenario = &scenarios[scenario_cursor % scenarios.len()];
        let start = track.station_at(sc.start_s);
        let mut state = VehicleState::new(start.pos, start.heading);
        for _ in 0..frames_per_visit {
            if nominal.len() >= opts.n_states {
                break 'outer;
            }
            nominal.push((state, sc.id));
            let steer = expert_steering(&state, track);
            state = step_vehicle(&state, steer, DT);
        }
        scenario_cursor += 1;
    }

    // Phase 2: render per state (parallel, per-state seeded jitter).
    let presets = weather_presets();
    let frames: Vec<Vec<Frame>> = nominal
        .par_iter()
        .enumerate()
        .map(|(i, (state, scenario))| -> Result<Vec<Frame>> {
            let key = hash_combine(opts.seed, i as u64);
            // Quadratic jitter profile: most samples near the nominal state,
            // tails reaching the bounds for recovery coverage.
            let draw = |salt: u64, bound: f32| {
                let u = hash_unit(key ^ salt) * 2.0 - 1.0;
                u * u.abs() * bound
            };
            let jl = draw(1, opts.lateral_jitter);
            let jh = draw(2, opts.heading_jitter);
            let pos = state
                .pos
                .add(heading_right(state.heading).scale(jl))
                .add(heading_dir(state.heading).scale((hash_unit(key ^ 3) * 2.0 - 1.0) * 0.3));
            let jittered = VehicleState::new(pos, state.heading + jh);
            let steering = expert_steering(&jittered, track);
            let mut rendered = render_frame(&jittered, track, opts.resolution)?;
            rendered.remap_labels(opts.k_classes);
            let labels = if opts.keep_labels {
                rendered.labels.clone()
            } else {
                Vec::new()
            };
            let mut out = Vec::with_capacity(opts.weathers.len());
            for &w in &opts.weathers {
                let spec: &WeatherSpec = &presets[w as usize];
                let rgb = apply_weather(&rendered.rgb, spec, opts.resolution);
                let rgb_u8: Vec<u8> = rgb.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
                out.push(Frame {
                    rgb: rgb_u8,
                    labels: labels.clone(),
                    steering,
                    weather: w,
                    scenario: *scenario,
                    state_index: i as u32,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        resolution: opts.resolution,
        k_classes: opts.k_classes,
        weathers: opts.weathers.clone(),
        n_states: opts.n_states,
        seed: opts.seed,
        has_labels: opts.keep_labels,
        config_hash: opts.config_hash.clone(),
        frames: frames.into_iter().flatten().collect(),
    })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    resolution: usize,
    k_classes: usize,
    weathers: Vec<u8>,
    n_states: usize,
    seed: u64,
    has_labels: bool,
    frame_count: usize,
    config_hash: String,
}

impl Dataset {
    /// Frames of one weather id, in state order.
    pub fn frames_of_weather(&self, weather: u8) -> Vec<&Frame> {
        self.frames.iter().filter(|f| f.weather == weather).collect()
    }

    pub fn record_len(&self) -> usize {
        let hw = self.resolution * self.resolution;
        1 + 2 + 4 + 4 + 3 * hw + if self.has_labels { hw } else { 0 }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            schema_version: DATASET_SCHEMA_VERSION,
            resolution: self.resolution,
            k_classes: self.k_classes,
            weathers: self.weathers.clone(),
            n_states: self.n_states,
            seed: self.seed,
            has_labels: self.has_labels,
            frame_count: self.frames.len(),
            config_hash: self.config_hash.clone(),
        };
        let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Dataset(e.to_string()))?;
        atomic_write(&dir.join("manifest.toml"), text.as_bytes())?;

        let hw = self.resolution * self.resolution;
        let mut bytes = Vec::with_capacity(self.frames.len() * self.record_len());
        for f in &self.frames {
            if f.rgb.len() != 3 * hw {
                return Err(Error::Dataset(format!("frame rgb length {} != {}", f.rgb.len(), 3 * hw)));
            }
            bytes.push(f.weather);
            bytes.extend_from_slice(&f.scenario.to_le_bytes());
            bytes.extend_from_slice(&f.state_index.to_le_bytes());
            bytes.extend_from_slice(&f.steering.to_le_bytes());
            bytes.extend_from_slice(&f.rgb);
            if self.has_labels {
                if f.labels.len() != hw {
                    return Err(Error::Dataset(format!("frame labels length {} != {}", f.labels.len(), hw)));
                }
                bytes.extend_from_slice(&f.labels);
            }
        }
        atomic_write(&dir.join("frames.bin"), &bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(dir.join("manifest.toml"))
            .map_err(|e| Error::Dataset(format!("manifest: {e}")))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Dataset(format!("manifest: {e}")))?;
        if manifest.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Dataset(format!(
                "unsupported dataset schema version {}",
                manifest.schema_version
            )));
        }
        let bytes = std::fs::read(dir.join("frames.bin"))?;
        let hw = manifest.resolution * manifest.resolution;
        let rec = 1 + 2 + 4 + 4 + 3 * hw + if manifest.has_labels { hw } else { 0 };
        if bytes.len() != manifest.frame_count * rec {
            return Err(Error::Dataset(format!(
                "frames.bin has {} bytes, expected {} ({} records of {})",
                bytes.len(),
                manifest.frame_count * rec,
                manifest.frame_count,
                rec
            )));
        }
        let mut frames = Vec::with_capacity(manifest.frame_count);
        for chunk in bytes.chunks_exact(rec) {
            let weather = chunk[0];
            let scenario = u16::from_le_bytes([chunk[1], chunk[2]]);
            let state_index = u32::from_le_bytes([chunk[3], chunk[4], chunk[5], chunk[6]]);
            let steering = f32::from_le_bytes([chunk[7], chunk[8], chunk[9], chunk[10]]);
            let rgb = chunk[11..11 + 3 * hw].to_vec();
            let labels = if manifest.has_labels {
                chunk[11 + 3 * hw..].to_vec()
            } else {
                Vec::new()
            };
            frames.push(Frame {
                rgb,
                labels,
                steering,
                weather,
                scenario,
                state_index,
            });
        }
        Ok(Dataset {
            resolution: manifest.resolution,
            k_classes: manifest.k_classes,
            weathers: manifest.weathers,
            n_states: manifest.n_states,
            seed: manifest.seed,
            has_labels: manifest.has_labels,
            config_hash: manifest.config_hash,
            frames,
        })
    }

    /// Strip label maps (mimics conditions where only imagery and steering
    /// exist).
    pub fn without_labels(mut self) -> Dataset {
        for f in &mut self.frames {
            f.labels.clear();
        }
        self.has_labels = false;
        self
    }
}

#[allow(unused)]
fn remap_dataset(ds: &mut Dataset, k: usize) {
    for f in &mut ds.frames {
        for l in &mut f.labels {
            *l = remap_class(*l, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::track::{build_track, TrackDifficulty};

    fn small_opts() -> GenOptions {
        GenOptions {
            n_states: 24,
            resolution: 32,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn single_weather_count() {
        let track = build_track(7, TrackDifficulty::Turns);
        let ds = generate_dataset(&track, &small_opts()).unwrap();
        assert_eq!(ds.frames.len(), 24);
        assert!(ds.frames.iter().all(|f| f.weather == 0));
    }

    #[test]
    fn shared_states_share_labels_across_weathers() {
        let track = build_track(7, TrackDifficulty::Turns);
        let mut opts = small_opts();
        opts.weathers = vec![0, 5];
        let ds = generate_dataset(&track, &opts).unwrap();
        assert_eq!(ds.frames.len(), 48);
        let w0 = ds.frames_of_weather(0);
        let w5 = ds.frames_of_weather(5);
        for (a, b) in w0.iter().zip(&w5) {
            assert_eq!(a.state_index, b.state_index);
            assert_eq!(a.labels, b.labels);
            assert_ne!(a.rgb, b.rgb);
        }
    }

    #[test]
    fn steering_spans_both_signs_with_mass_near_zero() {
        let track = build_track(7, TrackDifficulty::Turns);
        let mut opts = small_opts();
        opts.n_states = 300;
        let ds = generate_dataset(&track, &opts).unwrap();
        let left = ds.frames.iter().filter(|f| f.steering < -0.05).count();
        let right = ds.frames.iter().filter(|f| f.steering > 0.05).count();
        let near_zero = ds.frames.iter().filter(|f| f.steering.abs() < 0.3).count();
        assert!(left > 10, "left {left}");
        assert!(right > 10, "right {right}");
        assert!(near_zero * 2 > ds.frames.len(), "near zero {near_zero}");
        assert!(ds.frames.iter().all(|f| f.steering.abs() <= 1.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let track = build_track(7, TrackDifficulty::Turns);
        let a = generate_dataset(&track, &small_opts()).unwrap();
        let b = generate_dataset(&track, &small_opts()).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.rgb, y.rgb);
            assert_eq!(x.steering, y.steering);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let track = build_track(7, TrackDifficulty::Turns);
        let mut opts = small_opts();
        opts.weathers = vec![0, 3];
        let ds = generate_dataset(&track, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let loaded = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.frames.len(), loaded.frames.len());
        for (a, b) in ds.frames.iter().zip(&loaded.frames) {
            assert_eq!(a.rgb, b.rgb);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.steering, b.steering);
            assert_eq!(a.weather, b.weather);
        }
    }

    #[test]
    fn truncated_frames_bin_is_structured_error() {
        let track = build_track(7, TrackDifficulty::Turns);
        let ds = generate_dataset(&track, &small_opts()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let path = dir.path().join("frames.bin");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));
    }
}
