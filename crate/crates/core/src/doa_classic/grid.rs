use crate::roomsim::{distance, on_circle, Point, RoomScene, GRID_SIZE, GRID_STEP_DEG};

/// Candidate source positions on the source circle with exact (near-field)
/// propagation delays to every microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringGrid {
    /// Candidate azimuths in degrees, ascending.
    pub angles: Vec<f64>,
    pub points: Vec<Point>,
    pub mics: Vec<Point>,
    /// `[candidate][mic]`, seconds.
    pub delays: Vec<Vec<f64>>,
    /// `[candidate][mic]`, meters.
    pub distances: Vec<Vec<f64>>,
}

impl SteeringGrid {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn from_points(angles: Vec<f64>, points: Vec<Point>, mics: Vec<Point>, sound_speed: f64) -> Self {
        let distances: Vec<Vec<f64>> = points
            .iter()
            .map(|p| mics.iter().map(|m| distance(*p, *m)).collect())
            .collect();
        let delays = distances
            .iter()
            .map(|row| row.iter().map(|d| d / sound_speed).collect())
            .collect();
        Self {
            angles,
            points,
            mics,
            delays,
            distances,
        }
    }
}

/// The 72-point, 5° grid on the scene's source circle.
pub fn steering_delays(scene: &RoomScene) -> SteeringGrid {
    let angles: Vec<f64> = (0..GRID_SIZE).map(|i| i as f64 * GRID_STEP_DEG).collect();
    let points = angles
        .iter()
        .map(|&a| on_circle(scene.array_center, scene.source_radius, a))
        .collect();
    SteeringGrid::from_points(angles, points, scene.mic_positions.clone(), scene.sound_speed)
}
