use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub const ROOM_DIMS: Point = [4.0, 4.0, 2.5];
pub const ARRAY_CENTER: Point = [2.0, 2.0, 1.25];
pub const ARRAY_RADIUS: f64 = 1.0;
pub const MIC_ANGLES_DEG: [f64; 4] = [0.0, 90.0, 180.0, 270.0];
pub const SOURCE_RADIUS: f64 = 1.5;
pub const SOUND_SPEED: f64 = 343.0;
pub const T60_CHOICES: [f64; 3] = [0.3, 0.6, 0.9];
/// DOA grid resolution and size.
pub const GRID_STEP_DEG: f64 = 5.0;
pub const GRID_SIZE: usize = 72;
/// Interferer angles for the separation task: 30°, 60°, …, 330°.
pub const INTERFERER_STEP_DEG: f64 = 30.0;
pub const INTERFERER_COUNT: usize = 11;

/// Which of the two experiment setups a scene belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Task {
    /// Single speaker, joint dereverberation and DOA estimation.
    Doa,
    /// Target at 0° plus one interferer, joint dereverberation and separation.
    Separation,
}

impl TryFrom<u8> for Task {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Task::Doa),
            2 => Ok(Task::Separation),
            other => Err(Error::InvalidConfig(format!("task must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Task> for u8 {
    fn from(t: Task) -> u8 {
        match t {
            Task::Doa => 1,
            Task::Separation => 2,
        }
    }
}

impl Task {
    pub fn num_sources(self) -> usize {
        match self {
            Task::Doa => 1,
            Task::Separation => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceRole {
    Target,
    Interferer,
}

/// Room geometry, array layout, source placement and reverberation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScene {
    pub task: Task,
    pub room_dims: Point,
    pub array_center: Point,
    pub mic_positions: Vec<Point>,
    /// Target azimuth in degrees.
    pub source_angle: f64,
    /// Interferer azimuth in degrees (separation task only).
    pub interferer_angle: Option<f64>,
    pub source_radius: f64,
    pub t60: f64,
    pub sound_speed: f64,
    /// Forces the wall reflection coefficient to zero.
    #[serde(default)]
    pub anechoic: bool,
}

/// Point on the horizontal circle of `radius` around `center` at `deg` azimuth.
pub fn on_circle(center: Point, radius: f64, deg: f64) -> Point {
    let a = deg.to_radians();
    [
        center[0] + radius * a.cos(),
        center[1] + radius * a.sin(),
        center[2],
    ]
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn default_mics() -> Vec<Point> {
    MIC_ANGLES_DEG
        .iter()
        .map(|&d| on_circle(ARRAY_CENTER, ARRAY_RADIUS, d))
        .collect()
}

impl RoomScene {
    /// The standard room with a given target angle and T60.
    pub fn standard(task: Task, source_angle: f64, interferer_angle: Option<f64>, t60: f64) -> Self {
        Self {
            task,
            room_dims: ROOM_DIMS,
            array_center: ARRAY_CENTER,
            mic_positions: default_mics(),
            source_angle,
            interferer_angle,
            source_radius: SOURCE_RADIUS,
            t60,
            sound_speed: SOUND_SPEED,
            anechoic: false,
        }
    }

    pub fn source_position(&self, role: SourceRole) -> Result<Point> {
        let angle = match role {
            SourceRole::Target => self.source_angle,
            SourceRole::Interferer => self.interferer_angle.ok_or_else(|| {
                Error::Scene("scene has no interferer".into())
            })?,
        };
        Ok(on_circle(self.array_center, self.source_radius, angle))
    }

    /// Target DOA class on the 5° grid.
    pub fn doa_class(&self) -> usize {
        ((self.source_angle / GRID_STEP_DEG).round() as i64).rem_euclid(GRID_SIZE as i64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t60 > 0.0) {
            return Err(Error::Scene(format!("t60 must be positive, got {}", self.t60)));
        }
        if self.room_dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Scene("room dimensions must be positive".into()));
        }
        let inside = |p: Point| (0..3).all(|i| p[i] > 0.0 && p[i] < self.room_dims[i]);
        for (i, m) in self.mic_positions.iter().enumerate() {
            if !inside(*m) {
                return Err(Error::Scene(format!("microphone {i} outside room")));
            }
            for other in &self.mic_positions[..i] {
                if distance(*m, *other) == 0.0 {
                    return Err(Error::Scene(format!("microphone {i} duplicates another")));
                }
            }
        }
        let mut roles = vec![SourceRole::Target];
        if self.interferer_angle.is_some() {
            roles.push(SourceRole::Interferer);
        }
        for role in roles {
            if !inside(self.source_position(role)?) {
                return Err(Error::Scene(format!("{role:?} source outside room")));
            }
        }
        Ok(())
    }
}

/// Draw a scene on the task's sampling grid. The same seed always gives the
/// same scene.
pub fn sample_scene(task: Task, seed: u64) -> RoomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_scene_with(task, &mut rng)
}

pub fn sample_scene_with<R: Rng>(task: Task, rng: &mut R) -> RoomScene {
    let t60 = T60_CHOICES[rng.random_range(0..T60_CHOICES.len())];
    match task {
        Task::Doa => {
            let angle = GRID_STEP_DEG * rng.random_range(0..GRID_SIZE) as f64;
            RoomScene::standard(task, angle, None, t60)
        }
        Task::Separation => {
            let interferer = INTERFERER_STEP_DEG * rng.random_range(1..=INTERFERER_COUNT) as f64;
            RoomScene::standard(task, 0.0, Some(interferer), t60)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn key(s: &RoomScene) -> (i64, i64, i64) {
        (
            s.source_angle as i64,
            s.interferer_angle.unwrap_or(-1.0) as i64,
            (s.t60 * 10.0).round() as i64,
        )
    }

    #[test]
    fn task_one_covers_216_scenes() {
        let set: BTreeSet<_> = (0..20_000).map(|s| key(&sample_scene(Task::Doa, s))).collect();
        assert_eq!(set.len(), 72 * 3);
        assert!(set.iter().all(|(a, i, _)| a % 5 == 0 && (0..360).contains(a) && *i == -1));
    }

    #[test]
    fn task_two_covers_33_scenes() {
        let set: BTreeSet<_> = (0..5_000)
            .map(|s| key(&sample_scene(Task::Separation, s)))
            .collect();
        assert_eq!(set.len(), 11 * 3);
        assert!(set.iter().all(|(a, i, _)| *a == 0 && i % 30 == 0 && (30..=330).contains(i)));
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_scene(Task::Doa, 42), sample_scene(Task::Doa, 42));
    }

    #[test]
    fn geometry_is_valid_for_every_grid_angle() {
        for k in 0..GRID_SIZE {
            let s = RoomScene::standard(Task::Doa, k as f64 * 5.0, None, 0.6);
            s.validate().unwrap();
            assert_eq!(s.doa_class(), k);
        }
        let mut bad = RoomScene::standard(Task::Doa, 0.0, None, 0.6);
        bad.source_radius = 2.5;
        assert!(bad.validate().is_err());
        bad.source_radius = 1.5;
        bad.t60 = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn task_serializes_as_number() {
        assert_eq!(serde_json::to_string(&Task::Separation).unwrap(), "2");
        assert!(serde_json::from_str::<Task>("3").is_err());
    }
}
