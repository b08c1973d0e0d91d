use std::f64::consts::PI;

use num_complex::Complex64;

use super::{Band, SteeringGrid};
use crate::error::{Error, Result};
use crate::signals::ComplexSpec;

fn check_geometry(spec: &ComplexSpec, grid: &SteeringGrid) -> Result<()> {
    if spec.channels != grid.num_mics() {
        return Err(Error::Shape(format!(
            "spectrogram has {} channels, grid {} mics",
            spec.channels,
            grid.num_mics()
        )));
    }
    Ok(())
}

/// Steered response power with phase transform over the grid: PHAT-weighted
/// cross-spectra of all mic pairs, summed over frames and the bins of `band`,
/// aligned with each candidate's pairwise delay difference.
pub fn srp_phat(spec: &ComplexSpec, grid: &SteeringGrid, band: Band) -> Result<Vec<f64>> {
    if spec.channels < 2 {
        return Err(Error::InvalidConfig("SRP-PHAT needs at least two channels".into()));
    }
    check_geometry(spec, grid)?;
    let bins = band.bins(&spec.config, spec.sample_rate);
    let pairs: Vec<(usize, usize)> = (0..spec.channels)
        .flat_map(|i| (i + 1..spec.channels).map(move |j| (i, j)))
        .collect();
    // Frame-summed PHAT cross-spectra per pair and bin.
    let mut cross = vec![Complex64::new(0.0, 0.0); pairs.len() * bins.len()];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        for (b, &k) in bins.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..spec.frames {
                let g = spec.at(i, t, k) * spec.at(j, t, k).conj();
                let n = g.norm();
                if n > 0.0 {
                    acc += g / n;
                }
            }
            cross[p * bins.len() + b] = acc;
        }
    }
    let hz: Vec<f64> = bins
        .iter()
        .map(|&k| spec.config.bin_hz(k, spec.sample_rate))
        .collect();
    let power = (0..grid.len())
        .map(|c| {
            let tau = &grid.delays[c];
            let mut p = 0.0;
            for (pi, &(i, j)) in pairs.iter().enumerate() {
                let dt = tau[i] - tau[j];
                for (b, f) in hz.iter().enumerate() {
                    let steer = Complex64::from_polar(1.0, 2.0 * PI * f * dt);
                    p += (cross[pi * hz.len() + b] * steer).re;
                }
            }
            p
        })
        .collect();
    Ok(power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doa_classic::{steering_delays, top_k_peaks};
    use crate::roomsim::{render_scene, RoomScene, Task};
    use crate::signals::{speechlike, Stft, StftConfig};

    fn anechoic_spec(angle: f64) -> (ComplexSpec, SteeringGrid) {
        let mut scene = RoomScene::standard(Task::Doa, angle, None, 0.3);
        scene.anechoic = true;
        let out = render_scene(&[speechlike(5, 1.0, 16000)], &scene, 16000).unwrap();
        let spec = Stft::new(StftConfig::default())
            .unwrap()
            .stft_multi(&out.mixture)
            .unwrap();
        (spec, steering_delays(&scene))
    }

    #[test]
    fn finds_anechoic_source() {
        let (spec, grid) = anechoic_spec(45.0);
        let p = srp_phat(&spec, &grid, Band::default()).unwrap();
        assert_eq!(p.len(), 72);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(top_k_peaks(&p, 1)[0].0, 45.0);
    }

    #[test]
    fn invariant_to_channel_gains() {
        let (spec, grid) = anechoic_spec(200.0);
        let mut scaled = spec.clone();
        for (c, g) in [0.3, 2.0, 7.5, 0.01].iter().enumerate() {
            for v in scaled.channel_mut(c) {
                *v *= *g;
            }
        }
        let a = srp_phat(&spec, &grid, Band::default()).unwrap();
        let b = srp_phat(&scaled, &grid, Band::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn identical_channels_carry_no_direction() {
        // Same signal on every mic: the response only reflects the array's
        // own symmetry, so it repeats every quarter turn and has no unique
        // maximum.
        let (spec, grid) = anechoic_spec(0.0);
        let mono = spec.select_channel(0);
        let same = ComplexSpec::stack(&[mono.clone(), mono.clone(), mono.clone(), mono]).unwrap();
        let p = srp_phat(&same, &grid, Band::default()).unwrap();
        for i in 0..72 {
            assert!((p[i] - p[(i + 18) % 72]).abs() <= 1e-9 * p[i].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_single_channel() {
        let (spec, grid) = anechoic_spec(0.0);
        assert!(srp_phat(&spec.select_channel(0), &grid, Band::default()).is_err());
    }
}
