//! Self-attention on absolute scores with a trainable Gaussian distance
//! decay per head.

use super::linalg::{affine, affine_backward, gemm_into, View};
use super::Real;

pub const SIGMA_MIN: f64 = 0.1;

/// Decay weight `exp(-dist² / 2σ²)` between frames `dist` apart.
pub fn gaussian_weight(dist: f64, sigma: f64) -> f64 {
    (-(dist * dist) / (2.0 * sigma * sigma)).exp()
}

/// Weights of one attention block. Projections are `d_model × d_model`
/// matrices applied as `x W + b`.
#[derive(Clone, Copy)]
pub struct AttentionParams<'a, T> {
    pub wq: &'a [T],
    pub bq: &'a [T],
    pub wk: &'a [T],
    pub bk: &'a [T],
    pub wv: &'a [T],
    pub bv: &'a [T],
    pub wo: &'a [T],
    pub bo: &'a [T],
    pub sigma: &'a [T],
}

/// Intermediates of [`tgsa_attention`]; `scores`, `decay` and `probs` are
/// `heads × frames × frames`.
#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    pub scores: Vec<T>,
    pub decay: Vec<T>,
    pub probs: Vec<T>,
    pub concat: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads<T> {
    pub wq: Vec<T>,
    pub bq: Vec<T>,
    pub wk: Vec<T>,
    pub bk: Vec<T>,
    pub wv: Vec<T>,
    pub bv: Vec<T>,
    pub wo: Vec<T>,
    pub bo: Vec<T>,
    pub sigma: Vec<T>,
}

fn effective_sigma<T: Real>(s: T) -> T {
    s.max(T::cast(SIGMA_MIN))
}

/// Attention over `x: frames × d_model`. With `decay == false` the Gaussian
/// mask is replaced by ones (plain absolute-score attention).
pub fn tgsa_attention<T: Real>(
    x: &[T],
    frames: usize,
    n_heads: usize,
    p: &AttentionParams<T>,
    decay: bool,
) -> (Vec<T>, AttentionCache<T>) {
    let d = p.bq.len();
    let dh = d / n_heads;
    let tt = frames * frames;
    let q = affine(x, frames, p.wq, p.bq);
    let k = affine(x, frames, p.wk, p.bk);
    let v = affine(x, frames, p.wv, p.bv);
    let scale = T::cast(1.0 / (dh as f64).sqrt());
    let mut scores = vec![T::zero(); n_heads * tt];
    let mut decay_w = vec![T::one(); n_heads * tt];
    let mut probs = vec![T::zero(); n_heads * tt];
    let mut concat = vec![T::zero(); frames * d];
    for h in 0..n_heads {
        let qh = View::cols_of(&q, frames, d, h * dh, dh);
        let kh = View::cols_of(&k, frames, d, h * dh, dh);
        let s = &mut scores[h * tt..(h + 1) * tt];
        gemm_into(scale, qh, kh.t(), T::zero(), s, 0, frames);
        let g = &mut decay_w[h * tt..(h + 1) * tt];
        if decay {
            let sigma = effective_sigma(p.sigma[h]).as_f64();
            for i in 0..frames {
                for j in 0..frames {
                    g[i * frames + j] = T::cast(gaussian_weight(i as f64 - j as f64, sigma));
                }
            }
        }
        let a = &mut probs[h * tt..(h + 1) * tt];
        for i in 0..frames {
            let row = i * frames..(i + 1) * frames;
            let mut max = T::neg_infinity();
            for j in row.clone() {
                a[j] = g[j] * s[j].abs();
                max = max.max(a[j]);
            }
            let mut sum = T::zero();
            for j in row.clone() {
                a[j] = (a[j] - max).exp();
                sum += a[j];
            }
            for j in row {
                a[j] /= sum;
            }
        }
        let vh = View::cols_of(&v, frames, d, h * dh, dh);
        gemm_into(
            T::one(),
            View::new(a, frames, frames),
            vh,
            T::zero(),
            &mut concat,
            h * dh,
            d,
        );
    }
    let out = affine(&concat, frames, p.wo, p.bo);
    (
        out,
        AttentionCache {
            q,
            k,
            v,
            scores,
            decay: decay_w,
            probs,
            concat,
        },
    )
}

/// Reverse pass of [`tgsa_attention`]; returns `dx` and parameter gradients.
pub fn tgsa_attention_backward<T: Real>(
    dy: &[T],
    x: &[T],
    frames: usize,
    n_heads: usize,
    p: &AttentionParams<T>,
    cache: &AttentionCache<T>,
    decay: bool,
) -> (Vec<T>, AttentionGrads<T>) {
    let d = p.bq.len();
    let dh = d / n_heads;
    let tt = frames * frames;
    let scale = T::cast(1.0 / (dh as f64).sqrt());
    let mut g = AttentionGrads {
        wq: vec![T::zero(); d * d],
        bq: vec![T::zero(); d],
        wk: vec![T::zero(); d * d],
        bk: vec![T::zero(); d],
        wv: vec![T::zero(); d * d],
        bv: vec![T::zero(); d],
        wo: vec![T::zero(); d * d],
        bo: vec![T::zero(); d],
        sigma: vec![T::zero(); n_heads],
    };
    let dconcat = affine_backward(dy, &cache.concat, frames, p.wo, &mut g.wo, &mut g.bo);
    let mut dq = vec![T::zero(); frames * d];
    let mut dk = vec![T::zero(); frames * d];
    let mut dv = vec![T::zero(); frames * d];
    let mut dp = vec![T::zero(); tt];
    let mut ds = vec![T::zero(); tt];
    for h in 0..n_heads {
        let a = &cache.probs[h * tt..(h + 1) * tt];
        let s = &cache.scores[h * tt..(h + 1) * tt];
        let gw = &cache.decay[h * tt..(h + 1) * tt];
        let doh = View::cols_of(&dconcat, frames, d, h * dh, dh);
        let vh = View::cols_of(&cache.v, frames, d, h * dh, dh);
        gemm_into(T::one(), doh, vh.t(), T::zero(), &mut dp, 0, frames);
        gemm_into(
            T::one(),
            View::new(a, frames, frames).t(),
            doh,
            T::zero(),
            &mut dv,
            h * dh,
            d,
        );
        let sigma = p.sigma[h];
        let sigma_free = decay && sigma >= T::cast(SIGMA_MIN);
        let sigma3 = sigma * sigma * sigma;
        let mut dsigma = T::zero();
        for i in 0..frames {
            let row = i * frames..(i + 1) * frames;
            let dot: T = row.clone().map(|j| a[j] * dp[j]).sum();
            for j in row {
                let dw = a[j] * (dp[j] - dot);
                let sign = if s[j] > T::zero() {
                    T::one()
                } else if s[j] < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                ds[j] = dw * gw[j] * sign;
                if sigma_free {
                    let dist = T::cast((i as f64) - ((j - i * frames) as f64));
                    dsigma += dw * s[j].abs() * gw[j] * dist * dist / sigma3;
                }
            }
        }
        g.sigma[h] = dsigma;
        let qh = View::cols_of(&cache.q, frames, d, h * dh, dh);
        let kh = View::cols_of(&cache.k, frames, d, h * dh, dh);
        gemm_into(scale, View::new(&ds, frames, frames), kh, T::zero(), &mut dq, h * dh, d);
        gemm_into(scale, View::new(&ds, frames, frames).t(), qh, T::zero(), &mut dk, h * dh, d);
    }
    let mut dx = affine_backward(&dq, x, frames, p.wq, &mut g.wq, &mut g.bq);
    let dxk = affine_backward(&dk, x, frames, p.wk, &mut g.wk, &mut g.bk);
    let dxv = affine_backward(&dv, x, frames, p.wv, &mut g.wv, &mut g.bv);
    for ((o, a), b) in dx.iter_mut().zip(&dxk).zip(&dxv) {
        *o += *a + *b;
    }
    (dx, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Owned {
        w: Vec<Vec<f64>>,
        sigma: Vec<f64>,
    }

    impl Owned {
        fn random(d: usize, heads: usize, seed: u64, sigma: f64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mat = |n: usize| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<f64>>();
            let w = vec![mat(d * d), mat(d), mat(d * d), mat(d), mat(d * d), mat(d), mat(d * d), mat(d)];
            Self {
                w,
                sigma: vec![sigma; heads],
            }
        }

        fn params(&self) -> AttentionParams<'_, f64> {
            AttentionParams {
                wq: &self.w[0],
                bq: &self.w[1],
                wk: &self.w[2],
                bk: &self.w[3],
                wv: &self.w[4],
                bv: &self.w[5],
                wo: &self.w[6],
                bo: &self.w[7],
                sigma: &self.sigma,
            }
        }
    }

    fn input(frames: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..frames * d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_weight(0.0, 10.0), 1.0);
        assert!((gaussian_weight(10.0, 10.0) - (-0.5f64).exp()).abs() < 1e-12);
        for (i, j) in [(0, 3), (5, 2), (7, 7)] {
            assert_eq!(
                gaussian_weight(i as f64 - j as f64, 3.0),
                gaussian_weight(j as f64 - i as f64, 3.0)
            );
        }
    }

    #[test]
    fn rows_are_stochastic_and_diagonal_weight_is_one() {
        let w = Owned::random(16, 4, 1, 2.5);
        let x = input(9, 16, 2);
        let (_, cache) = tgsa_attention(&x, 9, 4, &w.params(), true);
        for row in cache.probs.chunks(9) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        for h in 0..4 {
            for i in 0..9 {
                assert_eq!(cache.decay[h * 81 + i * 9 + i], 1.0);
            }
        }
    }

    #[test]
    fn huge_sigma_matches_undecayed() {
        let w = Owned::random(16, 2, 3, 1e6);
        let x = input(12, 16, 4);
        let (a, _) = tgsa_attention(&x, 12, 2, &w.params(), true);
        let (b, _) = tgsa_attention(&x, 12, 2, &w.params(), false);
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn single_frame_returns_value_projection() {
        let w = Owned::random(8, 2, 5, 10.0);
        let x = input(1, 8, 6);
        let (y, _) = tgsa_attention(&x, 1, 2, &w.params(), true);
        let v = affine(&x, 1, &w.w[4], &w.w[5]);
        let expect = affine(&v, 1, &w.w[6], &w.w[7]);
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (frames, d, heads) = (6, 8, 2);
        let mut w = Owned::random(d, heads, 7, 1.7);
        w.sigma[1] = 3.1;
        let x = input(frames, d, 8);
        let dy = input(frames, d, 9);
        let loss = |w: &Owned, x: &[f64]| -> f64 {
            let (y, _) = tgsa_attention(x, frames, heads, &w.params(), true);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = tgsa_attention(&x, frames, heads, &w.params(), true);
        let (dx, g) = tgsa_attention_backward(&dy, &x, frames, heads, &w.params(), &cache, true);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&w, &xp) - loss(&w, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6 * (1.0 + fd.abs()), "dx[{i}] {fd} {}", dx[i]);
        }
        let grads = [&g.wq, &g.bq, &g.wk, &g.bk, &g.wv, &g.bv, &g.wo, &g.bo];
        for (t, grad) in grads.iter().enumerate() {
            for i in 0..grad.len() {
                let mut wp = Owned { w: w.w.clone(), sigma: w.sigma.clone() };
                wp.w[t][i] += h;
                let mut wm = Owned { w: w.w.clone(), sigma: w.sigma.clone() };
                wm.w[t][i] -= h;
                let fd = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "tensor {t}[{i}]");
            }
        }
        for hh in 0..heads {
            let mut wp = Owned { w: w.w.clone(), sigma: w.sigma.clone() };
            wp.sigma[hh] += h;
            let mut wm = Owned { w: w.w.clone(), sigma: w.sigma.clone() };
            wm.sigma[hh] -= h;
            let fd = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * h);
            assert!((fd - g.sigma[hh]).abs() < 1e-6 * (1.0 + fd.abs()), "sigma {fd} {}", g.sigma[hh]);
            assert!(g.sigma[hh] != 0.0);
        }
    }

    #[test]
    fn clamped_sigma_gets_no_gradient() {
        let w = Owned::random(8, 2, 10, 0.05);
        let x = input(5, 8, 11);
        let dy = input(5, 8, 12);
        let (_, cache) = tgsa_attention(&x, 5, 2, &w.params(), true);
        let (_, g) = tgsa_attention_backward(&dy, &x, 5, 2, &w.params(), &cache, true);
        assert_eq!(g.sigma, vec![0.0, 0.0]);
    }
}
