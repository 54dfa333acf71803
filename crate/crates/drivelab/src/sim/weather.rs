//! Parametric weather transforms over rendered RGB. A transform is a pure
//! function of (image, spec); it never touches label maps, so scene semantics
//! are weather-invariant by construction.

use super::{hash64, hash_unit};

pub const NUM_WEATHERS: usize = 15;

/// One weather condition: a deterministic RGB-space transform.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherSpec {
    pub id: u8,
    pub name: &'static str,
    /// Contrast factor applied around mid-gray.
    pub contrast: f32,
    /// Brightness gain.
    pub brightness: f32,
    /// Per-channel gain.
    pub tint_mul: [f32; 3],
    /// Per-channel offset.
    pub tint_add: [f32; 3],
    /// Fog opacity at the top image row (linear ramp to zero at the bottom).
    pub fog_density: f32,
    pub fog_color: [f32; 3],
    /// Rain streak overlay density in [0, 1].
    pub rain_density: f32,
    /// Additive pseudo-noise sigma.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl WeatherSpec {
    pub fn is_identity(&self) -> bool {
        self.contrast == 1.0
            && self.brightness == 1.0
            && self.tint_mul == [1.0, 1.0, 1.0]
            && self.tint_add == [0.0, 0.0, 0.0]
            && self.fog_density == 0.0
            && self.rain_density == 0.0
            && self.noise_sigma == 0.0
    }
}

/// The fixed table of 15 conditions, id 0 being the identity. Ids 12-14 are
/// the low-visibility presets; 13 is the hardest (dark, foggy, heavy rain).
pub fn weather_presets() -> Vec<WeatherSpec> {
    let w = |id: u8,
             name: &'static str,
             contrast: f32,
             brightness: f32,
             tint_mul: [f32; 3],
             tint_add: [f32; 3],
             fog_density: f32,
             fog_color: [f32; 3],
             rain_density: f32,
             noise_sigma: f32| WeatherSpec {
        id,
        name,
        contrast,
        brightness,
        tint_mul,
        tint_add,
        fog_density,
        fog_color,
        rain_density,
        noise_sigma,
        seed: 0xabcd_0000 + id as u64,
    };
    vec![
        w(0, "clear-noon", 1.0, 1.0, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], 0.0, [1.0, 1.0, 1.0], 0.0, 0.0),
        w(1, "thin-clouds", 0.92, 0.97, [0.98, 0.99, 1.02], [0.01, 0.01, 0.02], 0.06, [0.85, 0.86, 0.88], 0.0, 0.005),
        w(2, "sunset", 0.85, 0.92, [1.18, 0.92, 0.72], [0.06, 0.01, -0.02], 0.10, [0.90, 0.65, 0.45], 0.0, 0.008),
        w(3, "dusk", 0.75, 0.62, [0.85, 0.78, 1.05], [0.02, 0.00, 0.06], 0.12, [0.40, 0.35, 0.55], 0.0, 0.010),
        w(4, "overcast", 0.70, 1.08, [0.97, 0.98, 1.00], [0.04, 0.04, 0.05], 0.15, [0.85, 0.86, 0.88], 0.0, 0.008),
        w(5, "light-rain", 0.72, 0.85, [0.88, 0.92, 1.00], [0.00, 0.01, 0.03], 0.18, [0.70, 0.73, 0.78], 0.35, 0.015),
        w(6, "rain", 0.65, 0.78, [0.84, 0.89, 1.00], [0.00, 0.01, 0.04], 0.22, [0.65, 0.69, 0.75], 0.60, 0.020),
        w(7, "wet-sunset", 0.68, 0.80, [1.12, 0.88, 0.75], [0.04, 0.00, 0.00], 0.20, [0.80, 0.60, 0.45], 0.50, 0.018),
        w(8, "hard-rain", 0.55, 0.70, [0.80, 0.86, 0.98], [0.00, 0.01, 0.05], 0.30, [0.60, 0.64, 0.72], 1.00, 0.030),
        w(9, "morning-fog", 0.60, 0.95, [0.96, 0.97, 1.00], [0.03, 0.03, 0.04], 0.50, [0.86, 0.87, 0.90], 0.0, 0.012),
        w(10, "harsh-light", 1.25, 1.18, [1.08, 1.05, 0.95], [0.05, 0.04, 0.00], 0.05, [1.00, 0.98, 0.90], 0.0, 0.010),
        w(11, "deep-dusk", 0.60, 0.45, [0.75, 0.78, 1.00], [0.00, 0.00, 0.04], 0.15, [0.25, 0.28, 0.40], 0.0, 0.020),
        w(12, "dense-fog", 0.45, 0.90, [0.95, 0.96, 1.00], [0.02, 0.02, 0.03], 0.72, [0.82, 0.84, 0.87], 0.0, 0.015),
        w(13, "hard-rain-sunset", 0.32, 0.55, [1.10, 0.80, 0.65], [0.03, 0.00, 0.00], 0.62, [0.55, 0.45, 0.40], 1.00, 0.045),
        w(14, "misty-evening", 0.50, 0.70, [0.85, 0.88, 1.00], [0.00, 0.01, 0.04], 0.55, [0.50, 0.55, 0.65], 0.0, 0.020),
    ]
}

fn noise_sample(seed: u64, idx: usize, quant: u32) -> f32 {
    // Sum of four hashed uniforms, scaled to unit variance.
    let mut acc = 0.0f32;
    for t in 0..4u64 {
        let key = hash64(seed ^ (idx as u64).rotate_left(17) ^ (quant as u64) << 34 ^ (t << 60));
        acc += hash_unit(key);
    }
    (acc - 2.0) / 0.5774
}

/// Apply a weather transform to a planar `[3, h, w]` RGB image in [0, 1].
/// Identity specs (id 0) return the input bitwise.
pub fn apply_weather(rgb: &[f32], spec: &WeatherSpec, resolution: usize) -> Vec<f32> {
    let hw = resolution * resolution;
    assert_eq!(rgb.len(), 3 * hw, "expected planar [3, {resolution}, {resolution}]");
    if spec.is_identity() {
        return rgb.to_vec();
    }
    let mut out = vec![0.0f32; 3 * hw];
    for ch in 0..3 {
        for r in 0..resolution {
            // Fog is strongest at the top of the image (far distance).
            let ramp = 1.0 - r as f32 / (resolution - 1) as f32;
            let alpha = (spec.fog_density * ramp).clamp(0.0, 1.0);
            for c in 0..resolution {
                let idx = ch * hw + r * resolution + c;
                let mut v = rgb[idx];
                v = 0.5 + (v - 0.5) * spec.contrast;
                v *= spec.brightness;
                v = v * spec.tint_mul[ch] + spec.tint_add[ch];
                v = v * (1.0 - alpha) + spec.fog_color[ch] * alpha;
                out[idx] = v;
            }
        }
    }

    if spec.rain_density > 0.0 {
        let n_streaks = (spec.rain_density * 42.0).round() as u64;
        let streak_color = [0.72f32, 0.75, 0.80];
        for k in 0..n_streaks {
            let sx = (hash_unit(hash64(spec.seed ^ (k << 3))) * resolution as f32) as usize;
            let sy = (hash_unit(hash64(spec.seed ^ (k << 3) ^ 1)) * resolution as f32) as usize;
            let len = 3 + (hash_unit(hash64(spec.seed ^ (k << 3) ^ 2)) * 6.0) as usize;
            let slant = if hash_unit(hash64(spec.seed ^ (k << 3) ^ 3)) < 0.5 { 0i32 } else { 1 };
            for t in 0..len {
                let r = sy + t;
                let c = sx as i32 + (t as i32 / 3) * slant;
                if r >= resolution || c < 0 || c >= resolution as i32 {
                    break;
                }
                let idx = r * resolution + c as usize;
                for ch in 0..3 {
                    let v = &mut out[ch * hw + idx];
                    *v = *v * 0.55 + streak_color[ch] * 0.45;
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        for idx in 0..3 * hw {
            let quant = (out[idx].clamp(0.0, 1.0) * 255.0) as u32;
            out[idx] += noise_sample(spec.seed, idx, quant) * spec.noise_sigma;
        }
    }

    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Contrast statistic used in tests and reports: standard deviation of the
/// gray intensity.
pub fn mean_contrast(rgb: &[f32]) -> f32 {
    let hw = rgb.len() / 3;
    let mut gray = vec![0.0f32; hw];
    for (i, g) in gray.iter_mut().enumerate() {
        *g = (rgb[i] + rgb[hw + i] + rgb[2 * hw + i]) / 3.0;
    }
    let mean: f32 = gray.iter().sum::<f32>() / hw as f32;
    let var: f32 = gray.iter().map(|g| (g - mean) * (g - mean)).sum::<f32>() / hw as f32;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::render::render_frame;
    use crate::sim::track::{build_track, TrackDifficulty};
    use crate::sim::vehicle::VehicleState;

    fn sample_frame() -> Vec<f32> {
        let track = build_track(7, TrackDifficulty::Turns);
        let st = track.station_at(30.0);
        let state = VehicleState::new(st.pos, st.heading);
        render_frame(&state, &track, 64).unwrap().rgb
    }

    #[test]
    fn fifteen_presets_with_identity_zero() {
        let presets = weather_presets();
        assert_eq!(presets.len(), NUM_WEATHERS);
        for (i, p) in presets.iter().enumerate() {
            assert_eq!(p.id as usize, i);
        }
        assert!(presets[0].is_identity());
        assert!(presets.iter().skip(1).all(|p| !p.is_identity()));
        // Low-visibility presets.
        for id in 12..15 {
            assert!(presets[id].fog_density >= 0.5, "weather {id}");
        }
    }

    #[test]
    fn weather_zero_is_bitwise_identity() {
        let rgb = sample_frame();
        let out = apply_weather(&rgb, &weather_presets()[0], 64);
        assert_eq!(rgb, out);
    }

    #[test]
    fn full_fog_saturates_top_rows() {
        let rgb = sample_frame();
        let mut spec = weather_presets()[9].clone();
        spec.fog_density = 1.0;
        spec.rain_density = 0.0;
        spec.noise_sigma = 0.0;
        let out = apply_weather(&rgb, &spec, 64);
        let hw = 64 * 64;
        // Top row equals the fog color; bottom row is unfogged.
        for c in 0..64 {
            for ch in 0..3 {
                assert!((out[ch * hw + c] - spec.fog_color[ch]).abs() < 1e-5);
            }
        }
        let r = 63;
        let pre_contrast: Vec<f32> = (0..3)
            .map(|ch| {
                let idx = ch * hw + r * 64 + 30;
                let v = rgb[idx];
                let v = 0.5 + (v - 0.5) * spec.contrast;
                let v = v * spec.brightness;
                v * spec.tint_mul[ch] + spec.tint_add[ch]
            })
            .collect();
        for ch in 0..3 {
            let idx = ch * hw + r * 64 + 30;
            assert!((out[idx] - pre_contrast[ch].clamp(0.0, 1.0)).abs() < 1e-5);
        }
    }

    #[test]
    fn weather_13_halves_contrast() {
        let presets = weather_presets();
        let track = build_track(7, TrackDifficulty::Turns);
        let mut base = 0.0f32;
        let mut hard = 0.0f32;
        let mut s = 10.0;
        for _ in 0..10 {
            let st = track.station_at(s);
            let state = VehicleState::new(st.pos, st.heading);
            let f = render_frame(&state, &track, 64).unwrap();
            base += mean_contrast(&f.rgb);
            hard += mean_contrast(&apply_weather(&f.rgb, &presets[13], 64));
            s += 15.0;
        }
        assert!(
            hard <= 0.5 * base,
            "contrast reduction too small: base {base} hard {hard}"
        );
    }

    #[test]
    fn transform_is_pure() {
        let rgb = sample_frame();
        let spec = &weather_presets()[8];
        let a = apply_weather(&rgb, spec, 64);
        let b = apply_weather(&rgb, spec, 64);
        assert_eq!(a, b);
    }
}
