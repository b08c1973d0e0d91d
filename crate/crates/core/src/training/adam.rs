use crate::nnet::{ParamStore, Real, SIGMA_MIN};

/// First/second moment estimates with the step counter and a count of
/// updates skipped because of non-finite gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub skipped: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            skipped: 0,
        }
    }

    /// One bias-corrected Adam update. Parameters listed in `clamp` are held
    /// at or above the minimum σ afterwards. Returns false, leaving
    /// everything but the skip counter untouched, when any gradient is not
    /// finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Vec<T>], lr: f64, clamp: &[usize]) -> bool {
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            self.skipped += 1;
            log::warn!("non-finite gradient at step {}, update skipped", self.step + 1);
            return false;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::cast(self.beta1), T::cast(self.beta2));
        let (one_b1, one_b2) = (T::cast(1.0 - self.beta1), T::cast(1.0 - self.beta2));
        for (pid, g) in grads.iter().enumerate() {
            let p = &mut params.at_mut(pid).data;
            let m = &mut self.m[pid];
            let v = &mut self.v[pid];
            for i in 0..g.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let mhat = m[i].as_f64() / bc1;
                let vhat = v[i].as_f64() / bc2;
                p[i] -= T::cast(lr * mhat / (vhat.sqrt() + self.eps));
            }
        }
        for &pid in clamp {
            for s in params.at_mut(pid).data.iter_mut() {
                *s = s.max(T::cast(SIGMA_MIN));
            }
        }
        true
    }
}
