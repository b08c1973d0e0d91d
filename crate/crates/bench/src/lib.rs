//! Shared fixtures for the benchmarks.

use reverbnet::roomsim::{render_scene, RoomScene, Task};
use reverbnet::signals::{speechlike, MultiWave};
use reverbnet::SAMPLE_RATE;

/// Four-channel reverberant recording of `seconds` of speech-like signal.
pub fn reverberant(seconds: f64, t60: f64) -> MultiWave {
    let scene = RoomScene::standard(Task::Doa, 60.0, None, t60);
    let x = speechlike(7, seconds, SAMPLE_RATE);
    render_scene(&[x], &scene, SAMPLE_RATE).expect("standard scene renders").mixture
}
