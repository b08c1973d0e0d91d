//! Shoebox-room simulation with the image-source method and multichannel
//! scene rendering.

mod render;
mod rir;
mod scene;

pub use render::{apply_rir, convolve, render_scene, Rendered, IMAGE_PEAK};
pub use rir::{
    default_rir_len, highpass_100hz, estimate_t60, image_method, image_rir, sabine_reflection,
    Rir, KERNEL_HALF,
};
pub use scene::{
    default_mics, distance, on_circle, sample_scene, sample_scene_with, Point, RoomScene,
    SourceRole, Task, ARRAY_CENTER, ARRAY_RADIUS, GRID_SIZE, GRID_STEP_DEG, INTERFERER_COUNT,
    INTERFERER_STEP_DEG, MIC_ANGLES_DEG, ROOM_DIMS, SOUND_SPEED, SOURCE_RADIUS, T60_CHOICES,
};
