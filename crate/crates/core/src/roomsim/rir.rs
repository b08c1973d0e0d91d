use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::scene::{distance, Point, RoomScene, SourceRole};
use crate::error::{Error, Result};

/// Half-width of the windowed-sinc fractional delay kernel (81 taps).
pub const KERNEL_HALF: i64 = 40;
const MAX_REFLECTION: f64 = 0.9999;

/// Per-microphone room impulse responses for one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rir {
    /// `[mic][tap]`
    pub taps: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub scene: RoomScene,
    pub source_role: SourceRole,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Direct-path delay in (fractional) samples for each microphone.
    pub fn direct_delays(&self) -> Result<Vec<f64>> {
        let src = self.scene.source_position(self.source_role)?;
        Ok(self
            .scene
            .mic_positions
            .iter()
            .map(|m| distance(src, *m) / self.scene.sound_speed * self.sample_rate as f64)
            .collect())
    }

    /// Keep only the direct path and the first `early_ms` after it, per mic.
    pub fn early_part(&self, early_ms: f64) -> Result<Rir> {
        let delays = self.direct_delays()?;
        let keep = early_ms * 1e-3 * self.sample_rate as f64;
        let mut out = self.clone();
        for (taps, d) in out.taps.iter_mut().zip(delays) {
            let cut = (d + keep).ceil() as usize + KERNEL_HALF as usize;
            for v in taps.iter_mut().skip(cut) {
                *v = 0.0;
            }
        }
        Ok(out)
    }
}

/// Second-order high-pass at 100 Hz (Allen & Berkley) that removes the DC
/// build-up of summed positive image pulses. Applied in place.
pub fn highpass_100hz(taps: &mut [f64], sample_rate: u32) {
    let w = 2.0 * PI * 100.0 / sample_rate as f64;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0; 3];
    for v in taps.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Uniform wall reflection coefficient reproducing `t60` by Sabine's formula.
pub fn sabine_reflection(room: Point, t60: f64) -> Result<f64> {
    let [lx, ly, lz] = room;
    let volume = lx * ly * lz;
    let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    let absorption = 0.161 * volume / (surface * t60);
    if absorption > 1.0 {
        return Err(Error::Scene(format!(
            "t60 {t60} s too short for this room (absorption {absorption:.3} > 1)"
        )));
    }
    Ok((1.0 - absorption).sqrt().clamp(0.0, MAX_REFLECTION))
}

/// Default RIR length: `ceil(1.25 · t60 · fs)`.
pub fn default_rir_len(t60: f64, sample_rate: u32) -> usize {
    (1.25 * t60 * sample_rate as f64).ceil() as usize
}

const KERNEL_LEN: usize = 2 * KERNEL_HALF as usize + 1;

/// Per-tap constants of the Hann-windowed sinc kernel.
struct Kernel {
    offset: [f64; KERNEL_LEN],
    sign: [f64; KERNEL_LEN],
    cos: [f64; KERNEL_LEN],
    sin: [f64; KERNEL_LEN],
}

impl Kernel {
    fn new() -> Self {
        let w = PI / (KERNEL_HALF + 1) as f64;
        let mut k = Self {
            offset: [0.0; KERNEL_LEN],
            sign: [0.0; KERNEL_LEN],
            cos: [0.0; KERNEL_LEN],
            sin: [0.0; KERNEL_LEN],
        };
        for (i, j) in (-KERNEL_HALF..=KERNEL_HALF).enumerate() {
            k.offset[i] = j as f64;
            // sin(π(j − f)) = −(−1)^j sin(πf)
            k.sign[i] = if j & 1 == 0 { -1.0 } else { 1.0 };
            k.cos[i] = (w * j as f64).cos();
            k.sin[i] = (w * j as f64).sin();
        }
        k
    }

    /// Add a band-limited impulse of `amp` at fractional sample `delay`.
    fn add_impulse(&self, out: &mut [f64], delay: f64, amp: f64) {
        let n0 = delay.floor() as i64;
        let frac = delay - n0 as f64;
        let len = out.len() as i64;
        if frac == 0.0 {
            if (0..len).contains(&n0) {
                out[n0 as usize] += amp;
            }
            return;
        }
        let lo = (-KERNEL_HALF).max(-n0);
        let hi = KERNEL_HALF.min(len - 1 - n0);
        if lo > hi {
            return;
        }
        let w = PI / (KERNEL_HALF + 1) as f64;
        let (sf, cf) = (w * frac).sin_cos();
        let scale = 0.5 * amp * (PI * frac).sin() / PI;
        let mut taps = [0.0; KERNEL_LEN];
        for i in 0..KERNEL_LEN {
            let window = 1.0 + self.cos[i] * cf + self.sin[i] * sf;
            taps[i] = scale * self.sign[i] * window / (self.offset[i] - frac);
        }
        let first = (lo + KERNEL_HALF) as usize;
        let last = (hi + KERNEL_HALF) as usize;
        let start = (n0 + lo) as usize;
        for (o, t) in out[start..start + last + 1 - first].iter_mut().zip(&taps[first..=last]) {
            *o += t;
        }
    }
}

/// Visit every image source of `source` within `max_dist` of `mic`, passing
/// its distance and total reflection order.
fn for_each_image(
    room: Point,
    source: Point,
    mic: Point,
    max_dist: f64,
    mut visit: impl FnMut(f64, i64),
) {
    let bound = |l: f64| (max_dist / (2.0 * l)).ceil() as i64 + 1;
    let (nx, ny, nz) = (bound(room[0]), bound(room[1]), bound(room[2]));
    for px in 0..2i64 {
        for py in 0..2i64 {
            for pz in 0..2i64 {
                let base = [
                    (1 - 2 * px) as f64 * source[0] - mic[0],
                    (1 - 2 * py) as f64 * source[1] - mic[1],
                    (1 - 2 * pz) as f64 * source[2] - mic[2],
                ];
                for mx in -nx..=nx {
                    let dx = base[0] + 2.0 * mx as f64 * room[0];
                    if dx.abs() > max_dist {
                        continue;
                    }
                    let rx = (mx - px).abs() + mx.abs();
                    for my in -ny..=ny {
                        let dy = base[1] + 2.0 * my as f64 * room[1];
                        let dxy2 = dx * dx + dy * dy;
                        if dxy2 > max_dist * max_dist {
                            continue;
                        }
                        let ry = (my - py).abs() + my.abs();
                        for mz in -nz..=nz {
                            let dz = base[2] + 2.0 * mz as f64 * room[2];
                            let dist = (dxy2 + dz * dz).sqrt();
                            if dist <= max_dist {
                                visit(dist, rx + ry + (mz - pz).abs() + mz.abs());
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Image-source RIR from `source` to each microphone in a shoebox room with
/// uniform reflection coefficient `beta`. Images are summed while their delay
/// stays within `model_secs`; taps beyond `length` are discarded.
#[allow(clippy::too_many_arguments)]
pub fn image_method(
    room: Point,
    source: Point,
    mics: &[Point],
    beta: f64,
    sound_speed: f64,
    sample_rate: u32,
    length: usize,
    model_secs: f64,
) -> Vec<Vec<f64>> {
    let fs = sample_rate as f64;
    let kernel = Kernel::new();
    let mut out = vec![vec![0.0; length]; mics.len()];
    for (mic, taps) in mics.iter().zip(out.iter_mut()) {
        if beta == 0.0 {
            let dist = distance(source, *mic);
            let delay = dist / sound_speed * fs;
            kernel.add_impulse(taps, delay, 1.0 / (4.0 * PI * dist));
            continue;
        }
        for_each_image(room, source, *mic, model_secs * sound_speed, |dist, order| {
            let amp = beta.powi(order as i32) / (4.0 * PI * dist);
            let delay = dist / sound_speed * fs;
            kernel.add_impulse(taps, delay, amp);
        });
    }
    out
}

/// RIRs of one scene source at every microphone. Reflections are modeled for
/// at least `t60` seconds (plus the direct path) and the result is high-passed
/// at 100 Hz.
pub fn image_rir(scene: &RoomScene, role: SourceRole, length: usize, sample_rate: u32) -> Result<Rir> {
    scene.validate()?;
    let source = scene.source_position(role)?;
    let beta = if scene.anechoic {
        0.0
    } else {
        sabine_reflection(scene.room_dims, scene.t60)?
    };
    let max_direct = scene
        .mic_positions
        .iter()
        .map(|m| distance(source, *m))
        .fold(0.0, f64::max)
        / scene.sound_speed;
    let needed = (max_direct * sample_rate as f64).ceil() as usize + 1;
    if length < needed {
        return Err(Error::Scene(format!(
            "RIR length {length} shorter than direct-path delay ({needed} samples)"
        )));
    }
    let model_secs = scene.t60 + max_direct;
    let mut taps = image_method(
        scene.room_dims,
        source,
        &scene.mic_positions,
        beta,
        scene.sound_speed,
        sample_rate,
        length,
        model_secs,
    );
    for h in taps.iter_mut() {
        highpass_100hz(h, sample_rate);
    }
    Ok(Rir {
        taps,
        sample_rate,
        scene: scene.clone(),
        source_role: role,
    })
}

/// Reverberation time from Schroeder backward integration: a least-squares
/// line through the −5 dB … −35 dB part of the energy decay curve,
/// extrapolated to −60 dB.
pub fn estimate_t60(taps: &[f64], sample_rate: u32) -> Result<f64> {
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for i in (0..taps.len()).rev() {
        acc += taps[i] * taps[i];
        edc[i] = acc;
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::NoDecay("impulse response has no energy".into()));
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, e) in edc.iter().enumerate() {
        if *e <= 0.0 {
            break;
        }
        let db = 10.0 * (e / total).log10();
        if db > -5.0 {
            continue;
        }
        if db < -35.0 {
            break;
        }
        let t = i as f64 / sample_rate as f64;
        n += 1.0;
        sx += t;
        sy += db;
        sxx += t * t;
        sxy += t * db;
    }
    if n < 2.0 {
        return Err(Error::NoDecay(
            "fewer than two decay-curve points between -5 and -35 dB".into(),
        ));
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(Error::NoDecay(format!("decay slope {slope} dB/s")));
    }
    Ok(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roomsim::scene::Task;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn parabolic_peak(x: &[f64]) -> f64 {
        let i = (0..x.len()).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
        let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
        i as f64 + 0.5 * (a - c) / (a - 2.0 * b + c)
    }

    #[test]
    fn anechoic_single_path_geometry() {
        let taps = image_method(
            [4.0, 4.0, 2.5],
            [3.5, 2.0, 1.25],
            &[[3.0, 2.0, 1.25]],
            0.0,
            343.0,
            16000,
            200,
            1.0,
        );
        let expected = 0.5 / 343.0 * 16000.0;
        let peak = parabolic_peak(&taps[0]);
        assert!((peak - expected).abs() < 1.0, "{peak} vs {expected}");
        // energy of a band-limited impulse of amplitude A is ≈ A²
        let amp = 1.0 / (4.0 * PI * 0.5);
        let energy: f64 = taps[0].iter().map(|v| v * v).sum();
        assert!((energy.sqrt() / amp - 1.0).abs() < 0.05, "{}", energy.sqrt() / amp);
        // only one arrival: nothing beyond the kernel support
        let end = expected.floor() as usize + KERNEL_HALF as usize + 1;
        assert!(taps[0][end..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn direct_paths_follow_distances() {
        let mut scene = RoomScene::standard(Task::Doa, 0.0, None, 0.3);
        scene.anechoic = true;
        let rir = image_rir(&scene, SourceRole::Target, 400, 16000).unwrap();
        let delays = rir.direct_delays().unwrap();
        let src = [3.5, 2.0, 1.25];
        for (m, taps) in rir.taps.iter().enumerate() {
            let d = distance(src, scene.mic_positions[m]) / 343.0 * 16000.0;
            assert!((delays[m] - d).abs() < 1e-12);
            assert!((parabolic_peak(taps) - d).abs() < 1.0);
        }
    }

    #[test]
    fn reflection_coefficient_from_sabine() {
        let beta = sabine_reflection([4.0, 4.0, 2.5], 0.6).unwrap();
        let a: f64 = 0.161 * 40.0 / (72.0 * 0.6);
        assert!((beta - (1.0 - a).sqrt()).abs() < 1e-15);
        assert!(sabine_reflection([4.0, 4.0, 2.5], 0.05).is_err());
    }

    #[test]
    fn source_outside_room_is_rejected() {
        let mut scene = RoomScene::standard(Task::Doa, 0.0, None, 0.3);
        scene.source_radius = 3.0;
        assert!(image_rir(&scene, SourceRole::Target, 4000, 16000).is_err());
    }

    #[test]
    fn t60_of_exponential_noise() {
        let fs = 16000;
        let t60 = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let taps: Vec<f64> = (0..(1.2 * fs as f64) as usize)
            .map(|i| {
                let t = i as f64 / fs as f64;
                // amplitude decays 60 dB (factor 1000) over t60
                let n: f64 = rng.sample(StandardNormal);
                n * 10f64.powf(-3.0 * t / t60)
            })
            .collect();
        let est = estimate_t60(&taps, fs).unwrap();
        assert!((est - t60).abs() / t60 < 0.1, "{est}");
        let scaled: Vec<f64> = taps.iter().map(|v| v * 37.5).collect();
        let est2 = estimate_t60(&scaled, fs).unwrap();
        assert!((est - est2).abs() < 1e-9 * est);
    }

    #[test]
    fn t60_of_single_impulse_is_an_error() {
        let mut taps = vec![0.0; 1000];
        taps[10] = 1.0;
        assert!(matches!(estimate_t60(&taps, 16000), Err(Error::NoDecay(_))));
        assert!(estimate_t60(&[0.0; 100], 16000).is_err());
    }

    #[test]
    fn energy_decreases_with_absorption() {
        let mut last = f64::INFINITY;
        for t60 in [0.9, 0.6, 0.3] {
            let scene = RoomScene::standard(Task::Doa, 45.0, None, t60);
            let rir = image_rir(&scene, SourceRole::Target, 6000, 16000).unwrap();
            let e: f64 = rir.taps[0].iter().map(|v| v * v).sum();
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn deterministic() {
        let scene = RoomScene::standard(Task::Doa, 125.0, None, 0.3);
        let a = image_rir(&scene, SourceRole::Target, 3000, 16000).unwrap();
        let b = image_rir(&scene, SourceRole::Target, 3000, 16000).unwrap();
        assert_eq!(a.taps, b.taps);
    }
}
