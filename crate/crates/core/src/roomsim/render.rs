use num_complex::Complex64;
use rustfft::FftPlanner;

use super::rir::{default_rir_len, image_rir, Rir};
use super::scene::{RoomScene, SourceRole, Task};
use crate::error::{Error, Result};
use crate::signals::MultiWave;

/// Peak level both reverberant images are scaled to in the separation task.
pub const IMAGE_PEAK: f64 = 0.5;

/// Linear convolution `x * h`, truncated to `x.len()` samples.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(x.len()).map(|v| v.re / n as f64).collect()
}

/// Convolve a mono signal with every channel of `rir`.
pub fn apply_rir(x: &[f64], rir: &Rir) -> Result<MultiWave> {
    MultiWave::new(
        rir.taps.iter().map(|h| convolve(x, h)).collect(),
        rir.sample_rate,
    )
}

/// Output of [`render_scene`].
#[derive(Debug, Clone)]
pub struct Rendered {
    pub mixture: MultiWave,
    /// Reverberant image of each source at every mic, after level scaling.
    pub images: Vec<MultiWave>,
    /// Anechoic (direct-path only) image of each source at every mic, with the
    /// same scaling as the matching reverberant image.
    pub clean: Vec<MultiWave>,
    pub rirs: Vec<Rir>,
}

fn pad_to(x: &[f64], n: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(n, 0.0);
    v
}

/// Render the sources of `scene` at the microphones. The separation task
/// scales each reverberant image to a common peak before mixing.
pub fn render_scene(sources: &[Vec<f64>], scene: &RoomScene, sample_rate: u32) -> Result<Rendered> {
    if sources.len() > 2 {
        return Err(Error::Scene(format!("at most 2 sources, got {}", sources.len())));
    }
    if sources.len() != scene.task.num_sources() {
        return Err(Error::Scene(format!(
            "task {:?} needs {} source(s), got {}",
            scene.task,
            scene.task.num_sources(),
            sources.len()
        )));
    }
    let n = sources.iter().map(Vec::len).max().unwrap_or(0);
    if n == 0 {
        return Err(Error::Empty("sources are empty".into()));
    }
    let roles = [SourceRole::Target, SourceRole::Interferer];
    let len = default_rir_len(scene.t60, sample_rate);
    let mut anechoic_scene = scene.clone();
    anechoic_scene.anechoic = true;
    let mut images = Vec::new();
    let mut clean = Vec::new();
    let mut rirs = Vec::new();
    for (src, role) in sources.iter().zip(roles) {
        let x = pad_to(src, n);
        let rir = image_rir(scene, role, len, sample_rate)?;
        let direct = image_rir(&anechoic_scene, role, len, sample_rate)?;
        let mut image = apply_rir(&x, &rir)?;
        let mut dry = apply_rir(&x, &direct)?;
        if scene.task == Task::Separation {
            let peak = image.peak();
            if peak > 0.0 {
                let g = IMAGE_PEAK / peak;
                image = image.scaled(g);
                dry = dry.scaled(g);
            }
        }
        images.push(image);
        clean.push(dry);
        rirs.push(rir);
    }
    let channels = scene.mic_positions.len();
    let mix: Vec<Vec<f64>> = (0..channels)
        .map(|c| {
            (0..n)
                .map(|i| images.iter().map(|im| im.channel(c)[i]).sum())
                .collect()
        })
        .collect();
    Ok(Rendered {
        mixture: MultiWave::new(mix, sample_rate)?,
        images,
        clean,
        rirs,
    })
}
