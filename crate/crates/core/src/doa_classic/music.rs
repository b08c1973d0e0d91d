use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{Band, SteeringGrid};
use crate::error::{Error, Result};
use crate::signals::ComplexSpec;

/// Upper bound on narrowband pseudo-spectrum values.
pub const MUSIC_CAP: f64 = 1e12;
const LOADING: f64 = 1e-9;

/// Frame-averaged spatial covariance of bin `k`.
pub fn spatial_covariance(spec: &ComplexSpec, k: usize) -> DMatrix<Complex64> {
    let c = spec.channels;
    let mut r = DMatrix::<Complex64>::zeros(c, c);
    for t in 0..spec.frames {
        let x = DVector::from_iterator(c, (0..c).map(|m| spec.at(m, t, k)));
        r += &x * x.adjoint();
    }
    if spec.frames > 0 {
        r /= Complex64::new(spec.frames as f64, 0.0);
    }
    r
}

/// Orthonormal basis of the `dim − n_sources` weakest eigen-directions of a
/// Hermitian matrix, as columns. Diagonal loading of `1e-9 · trace / dim`
/// is applied first.
pub fn noise_subspace(cov: &DMatrix<Complex64>, n_sources: usize) -> DMatrix<Complex64> {
    let dim = cov.nrows();
    let trace: f64 = (0..dim).map(|i| cov[(i, i)].re).sum();
    let mut loaded = cov.clone();
    for i in 0..dim {
        loaded[(i, i)] += Complex64::new(LOADING * trace / dim as f64, 0.0);
    }
    let eig = loaded.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let cols: Vec<_> = order[..dim - n_sources]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Unit-norm near-field steering vector `exp(−j2πfτ)/dist`.
pub fn steering_vector(grid: &SteeringGrid, candidate: usize, hz: f64) -> DVector<Complex64> {
    let v = DVector::from_iterator(
        grid.num_mics(),
        grid.delays[candidate]
            .iter()
            .zip(&grid.distances[candidate])
            .map(|(tau, d)| Complex64::from_polar(1.0 / d, -2.0 * PI * hz * tau)),
    );
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// Narrowband MUSIC pseudo-spectrum `1/‖E_nᴴ a(θ)‖²`, capped at [`MUSIC_CAP`].
pub fn narrowband_music(noise: &DMatrix<Complex64>, grid: &SteeringGrid, hz: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|c| {
            let a = steering_vector(grid, c, hz);
            let proj = noise.adjoint() * a;
            let d = proj.norm_squared();
            if d * MUSIC_CAP <= 1.0 {
                MUSIC_CAP
            } else {
                1.0 / d
            }
        })
        .collect()
}

/// Broadband MUSIC: the mean over the bins of `band` of narrowband spectra,
/// each normalized to a unit maximum.
pub fn music_spectrum(
    spec: &ComplexSpec,
    grid: &SteeringGrid,
    n_sources: usize,
    band: Band,
) -> Result<Vec<f64>> {
    if spec.channels <= n_sources {
        return Err(Error::InvalidConfig(format!(
            "MUSIC needs more channels ({}) than sources ({n_sources})",
            spec.channels
        )));
    }
    if spec.channels != grid.num_mics() {
        return Err(Error::Shape(format!(
            "spectrogram has {} channels, grid {} mics",
            spec.channels,
            grid.num_mics()
        )));
    }
    let mut acc = vec![0.0; grid.len()];
    let mut used = 0usize;
    for k in band.bins(&spec.config, spec.sample_rate) {
        let cov = spatial_covariance(spec, k);
        let trace: f64 = (0..cov.nrows()).map(|i| cov[(i, i)].re).sum();
        if !(trace > 0.0) {
            continue;
        }
        let noise = noise_subspace(&cov, n_sources);
        let p = narrowband_music(&noise, grid, spec.config.bin_hz(k, spec.sample_rate));
        let max = p.iter().cloned().fold(0.0, f64::max);
        for (a, v) in acc.iter_mut().zip(&p) {
            *a += v / max;
        }
        used += 1;
    }
    if used > 0 {
        for a in acc.iter_mut() {
            *a /= used as f64;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doa_classic::{steering_delays, top_k_peaks};
    use crate::roomsim::{render_scene, RoomScene, Task};
    use crate::signals::{speechlike, Stft, StftConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene() -> RoomScene {
        let mut s = RoomScene::standard(Task::Doa, 120.0, None, 0.3);
        s.anechoic = true;
        s
    }

    #[test]
    fn finds_anechoic_source() {
        let s = scene();
        let out = render_scene(&[speechlike(9, 1.0, 16000)], &s, 16000).unwrap();
        let spec = Stft::new(StftConfig::default())
            .unwrap()
            .stft_multi(&out.mixture)
            .unwrap();
        let grid = steering_delays(&s);
        let p = music_spectrum(&spec, &grid, 1, Band::default()).unwrap();
        assert_eq!(top_k_peaks(&p, 1)[0].0, 120.0);
        // global scale invariance
        let mut scaled = spec.clone();
        scaled.scale(Complex64::new(0.0, 123.0));
        let q = music_spectrum(&scaled, &grid, 1, Band::default()).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn white_noise_is_nearly_flat() {
        let s = scene();
        let grid = steering_delays(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let wave = crate::MultiWave::new(
            (0..4)
                .map(|_| (0..32000).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            16000,
        )
        .unwrap();
        let spec = Stft::new(StftConfig::default())
            .unwrap()
            .stft_multi(&wave)
            .unwrap();
        let p = music_spectrum(&spec, &grid, 1, Band::default()).unwrap();
        let max = p.iter().cloned().fold(f64::MIN, f64::max);
        let min = p.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "{}", max / min);
    }

    #[test]
    fn rank_one_covariance_hits_the_cap() {
        let grid = steering_delays(&scene());
        let a = steering_vector(&grid, 30, 1000.0);
        let cov = &a * a.adjoint();
        let noise = noise_subspace(&cov, 1);
        let p = narrowband_music(&noise, &grid, 1000.0);
        assert_eq!(p[30], MUSIC_CAP);
        assert!(p.iter().enumerate().all(|(i, v)| i == 30 || *v < MUSIC_CAP));
    }

    #[test]
    fn needs_more_channels_than_sources() {
        let spec = ComplexSpec::zeros(1, 3, StftConfig::default(), 16000);
        let grid = steering_delays(&scene());
        assert!(music_spectrum(&spec, &grid, 1, Band::default()).is_err());
    }
}
