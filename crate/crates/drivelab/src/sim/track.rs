//! Procedural track: an arc-length sampled centerline with turn annotations,
//! side-feature bands, and a spatial index for nearest-centerline queries.

use super::{hash_combine, heading_dir, heading_right, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Spacing between centerline stations, meters.
pub const STATION_SPACING: f32 = 0.25;
/// Drivable half-width (lane markings included), meters.
pub const HALF_WIDTH: f32 = 2.0;
/// Sidewalk band width outside the road, meters.
pub const SIDEWALK_WIDTH: f32 = 1.4;
/// Building strip depth beyond the sidewalk on annotated segments, meters.
pub const BUILDING_DEPTH: f32 = 4.0;

const GRID_CELL: f32 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TurnDir {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackDifficulty {
    /// Zero curvature everywhere (sanity baseline).
    Straight,
    /// Alternating straights and annotated 90-degree-ish turns.
    Turns,
}

#[derive(Clone, Copy, Debug)]
pub struct Station {
    pub pos: Vec2,
    pub heading: f32,
    pub curvature: f32,
}

#[derive(Clone, Copy, Debug)]
pub struct TurnAnnotation {
    pub start_s: f32,
    pub end_s: f32,
    pub dir: TurnDir,
    pub radius: f32,
}

/// Side features of one longitudinal span: what lies beyond the sidewalk.
#[derive(Clone, Copy, Debug)]
pub struct SegmentBand {
    pub start_s: f32,
    pub end_s: f32,
    pub building_left: bool,
    pub building_right: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct Obstacle {
    pub pos: Vec2,
    pub radius: f32,
}

/// One evaluation episode: the vehicle starts just before a turn.
#[derive(Clone, Copy, Debug)]
pub struct Scenario {
    pub id: u16,
    pub start_s: f32,
}

/// Projection of a world point onto the centerline.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f32,
    /// Signed lateral offset, positive to the driver's right.
    pub lateral: f32,
    pub station_index: usize,
}

pub struct Track {
    stations: Vec<Station>,
    turns: Vec<TurnAnnotation>,
    bands: Vec<SegmentBand>,
    obstacles: Vec<Obstacle>,
    grid: HashMap<(i32, i32), Vec<u32>>,
    half_width: f32,
    total_len: f32,
}

impl Track {
    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn turns(&self) -> &[TurnAnnotation] {
        &self.turns
    }

    pub fn bands(&self) -> &[SegmentBand] {
        &self.bands
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn half_width(&self) -> f32 {
        self.half_width
    }

    pub fn total_len(&self) -> f32 {
        self.total_len
    }

    pub fn station_at(&self, s: f32) -> Station {
        let idx = (s / STATION_SPACING).round() as isize;
        let idx = idx.clamp(0, self.stations.len() as isize - 1) as usize;
        self.stations[idx]
    }

    pub fn band_at(&self, s: f32) -> Option<&SegmentBand> {
        self.bands.iter().find(|b| s >= b.start_s && s < b.end_s)
    }

    /// First `n` turns as episode scenarios, each starting `lead` meters
    /// before the curve.
    pub fn scenarios(&self, n: usize, lead: f32) -> Vec<Scenario> {
        self.turns
            .iter()
            .take(n)
            .enumerate()
            .map(|(i, t)| Scenario {
                id: i as u16,
                start_s: (t.start_s - lead).max(0.0),
            })
            .collect()
    }

    fn cell_of(p: Vec2) -> (i32, i32) {
        ((p.x / GRID_CELL).floor() as i32, (p.y / GRID_CELL).floor() as i32)
    }

    /// Nearest centerline station within a few grid cells, with the signed
    /// lateral offset. `None` when the point is far off-track.
    pub fn project(&self, p: Vec2) -> Option<Projection> {
        let (cx, cy) = Self::cell_of(p);
        let mut best: Option<(f32, usize)> = None;
        for ring in 0i32..=3 {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    if let Some(list) = self.grid.get(&(cx + dx, cy + dy)) {
                        for &i in list {
                            let st = &self.stations[i as usize];
                            let d2 = p.sub(st.pos).dot(p.sub(st.pos));
                            if best.map_or(true, |(b, bi)| d2 < b || (d2 == b && (i as usize) < bi)) {
                                best = Some((d2, i as usize));
                            }
                        }
                    }
                }
            }
            // One extra ring after the first hit tightens the result near
            // cell borders.
            if best.is_some() && ring >= 1 {
                break;
            }
        }
        let (_, idx) = best?;
        let st = &self.stations[idx];
        let rel = p.sub(st.pos);
        let along = rel.dot(heading_dir(st.heading));
        let lateral = rel.dot(heading_right(st.heading));
        Some(Projection {
            s: idx as f32 * STATION_SPACING + along,
            lateral,
            station_index: idx,
        })
    }

    /// Signed lateral offset if the point projects onto the track.
    pub fn lateral_offset(&self, p: Vec2) -> Option<f32> {
        self.project(p).map(|pr| pr.lateral)
    }

    /// True when a vehicle centered at `p` is inside the drivable region
    /// (road plus lane-marking footprint).
    pub fn is_drivable(&self, p: Vec2) -> bool {
        match self.project(p) {
            Some(pr) => pr.lateral.abs() <= self.half_width,
            None => false,
        }
    }
}

enum Piece {
    Straight { len: f32 },
    Arc { radius: f32, angle: f32, dir: TurnDir },
}

/// Deterministic track generation. `Turns` difficulty lays out 10 annotated
/// turns with varied radii and directions, separated by straights.
pub fn build_track(seed: u64, difficulty: TrackDifficulty) -> Track {
    let mut rng = ChaCha8Rng::seed_from_u64(hash_combine(seed, 0x7261_636b));
    let mut pieces = Vec::new();
    pieces.push(Piece::Straight { len: 30.0 });
    let mut turns_meta = Vec::new();
    if difficulty == TrackDifficulty::Turns {
        let n_turns = 10;
        for i in 0..n_turns {
            // Alternate directions with occasional repeats so both signs show up.
            let dir = if rng.gen::<f32>() < 0.5 {
                if i % 2 == 0 {
                    TurnDir::Left
                } else {
                    TurnDir::Right
                }
            } else if i % 2 == 0 {
                TurnDir::Right
            } else {
                TurnDir::Left
            };
            let radius = 6.5 + rng.gen::<f32>() * 6.0;
            let angle = (75.0 + rng.gen::<f32>() * 30.0) * std::f32::consts::PI / 180.0;
            turns_meta.push((dir, radius));
            pieces.push(Piece::Arc { radius, angle, dir });
            pieces.push(Piece::Straight {
                len: 15.0 + rng.gen::<f32>() * 8.0,
            });
        }
    }
    pieces.push(Piece::Straight { len: 30.0 });

    // Integrate the centerline.
    let mut stations = Vec::new();
    let mut turns = Vec::new();
    let mut bands = Vec::new();
    let mut pos = Vec2::new(0.0, 0.0);
    let mut heading = 0.0f32;
    let mut s = 0.0f32;
    for piece in &pieces {
        let band_start = s;
        let (len, curvature) = match piece {
            Piece::Straight { len } => (*len, 0.0),
            Piece::Arc { radius, angle, dir } => {
                let sign = match dir {
                    TurnDir::Left => -1.0,
                    TurnDir::Right => 1.0,
                };
                (radius * angle, sign / radius)
            }
        };
        if let Piece::Arc { radius, dir, .. } = piece {
            turns.push(TurnAnnotation {
                start_s: s,
                end_s: s + len,
                dir: *dir,
                radius: *radius,
            });
        }
        let steps = (len / STATION_SPACING).round() as usize;
        for _ in 0..steps {
            stations.push(Station {
                pos,
                heading,
                curvature,
            });
            heading += curvature * STATION_SPACING;
            let dir = heading_dir(heading);
            pos = pos.add(dir.scale(STATION_SPACING));
            s += STATION_SPACING;
        }
        bands.push(SegmentBand {
            start_s: band_start,
            end_s: s,
            building_left: rng.gen::<f32>() < 0.45,
            building_right: rng.gen::<f32>() < 0.45,
        });
    }
    stations.push(Station {
        pos,
        heading,
        curvature: 0.0,
    });
    let total_len = s;

    // Cones sit on the sidewalk edge; they never narrow the drivable band.
    let mut obstacles = Vec::new();
    for band in &bands {
        if band.end_s - band.start_s < 10.0 || rng.gen::<f32>() > 0.5 {
            continue;
        }
        let n = 1 + (rng.gen::<f32>() * 2.0) as usize;
        for _ in 0..n {
            let at_s = band.start_s + rng.gen::<f32>() * (band.end_s - band.start_s - 2.0);
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let idx = ((at_s / STATION_SPACING) as usize).min(stations.len() - 1);
            let st = &stations[idx];
            let lateral = side * (HALF_WIDTH + 0.55);
            let p = st.pos.add(heading_right(st.heading).scale(lateral));
            obstacles.push(Obstacle { pos: p, radius: 0.3 });
        }
    }

    let mut grid: HashMap<(i32, i32), Vec<u32>> = HashMap::new();
    for (i, st) in stations.iter().enumerate() {
        grid.entry(Track::cell_of(st.pos)).or_default().push(i as u32);
    }

    Track {
        stations,
        turns,
        bands,
        obstacles,
        grid,
        half_width: HALF_WIDTH,
        total_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_track() {
        let a = build_track(11, TrackDifficulty::Turns);
        let b = build_track(11, TrackDifficulty::Turns);
        assert_eq!(a.stations.len(), b.stations.len());
        for (x, y) in a.stations.iter().zip(&b.stations) {
            assert_eq!(x.pos, y.pos);
            assert_eq!(x.heading, y.heading);
        }
        assert_eq!(a.obstacles.len(), b.obstacles.len());
    }

    #[test]
    fn straight_difficulty_has_zero_curvature() {
        let t = build_track(5, TrackDifficulty::Straight);
        assert!(t.stations.iter().all(|s| s.curvature == 0.0));
        assert!(t.turns().is_empty());
    }

    #[test]
    fn seed_7_has_at_least_8_turns() {
        let t = build_track(7, TrackDifficulty::Turns);
        assert!(t.turns().len() >= 8, "{} turns", t.turns().len());
        let lefts = t.turns().iter().filter(|t| t.dir == TurnDir::Left).count();
        let rights = t.turns().len() - lefts;
        assert!(lefts >= 1 && rights >= 1);
    }

    #[test]
    fn projection_recovers_lateral_offset() {
        let t = build_track(7, TrackDifficulty::Turns);
        let st = t.station_at(40.0);
        let p = st.pos.add(heading_right(st.heading).scale(0.8));
        let proj = t.project(p).unwrap();
        assert!((proj.lateral - 0.8).abs() < 0.05, "lateral {}", proj.lateral);
        assert!((proj.s - 40.0).abs() < 0.3, "s {}", proj.s);
    }

    #[test]
    fn drivable_region_bounded_by_half_width() {
        let t = build_track(7, TrackDifficulty::Turns);
        let st = t.station_at(25.0);
        let on_road = st.pos.add(heading_right(st.heading).scale(1.5));
        let off_road = st.pos.add(heading_right(st.heading).scale(2.6));
        assert!(t.is_drivable(on_road));
        assert!(!t.is_drivable(off_road));
    }
}
