use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HeadGrads, Model, ModelConfig};
use crate::error::Result;
use crate::roomsim::Task;
use crate::training::{task1_loss, task2_loss};

pub const FD_STEP: f64 = 1e-5;
/// Weight scale of the checked model; larger than the training init so that
/// attention scores sit well away from the kink of |S|.
pub const CHECK_INIT_STD: f64 = 0.2;
/// Denominator floor of the relative error, above the rounding noise of the
/// central difference (about 1e-9 absolute on this loss).
pub const REL_FLOOR: f64 = 1e-4;
/// Spread of the magnitude targets around the initial outputs; keeps the
/// loss, and with it the difference rounding noise, small.
const TARGET_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

struct Problem {
    input: Vec<f64>,
    frames: usize,
    mag_a: Vec<f64>,
    mag_b: Vec<f64>,
    class: usize,
}

impl Problem {
    fn loss(&self, model: &Model<f64>) -> Result<f64> {
        let p1 = model.forward(&self.input, self.frames, Task::Doa, false)?;
        let p2 = model.forward(&self.input, self.frames, Task::Separation, false)?;
        Ok(task1_loss(&p1.outputs, &self.mag_a, self.class)?.0.total
            + task2_loss(&p2.outputs, &self.mag_a, &self.mag_b)?.0.total)
    }

    fn grads(&self, model: &Model<f64>) -> Result<Vec<Vec<f64>>> {
        let p1 = model.forward(&self.input, self.frames, Task::Doa, true)?;
        let (_, g1) = task1_loss(&p1.outputs, &self.mag_a, self.class)?;
        let mut total = model.backward(&p1, &g1)?;
        let p2 = model.forward(&self.input, self.frames, Task::Separation, true)?;
        let (_, g2): (_, HeadGrads<f64>) = task2_loss(&p2.outputs, &self.mag_a, &self.mag_b)?;
        total.add_scaled(&model.backward(&p2, &g2)?, 1.0);
        Ok(total.tensors)
    }
}

/// Central-difference check of every parameter of a double-precision model
/// on the sum of the task-1 and task-2 losses over `frames` random frames.
pub fn grad_check(cfg: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    grad_check_with(cfg, seed, 8, |_, _| {})
}

/// As [`grad_check`], with `tamper(name, grad)` applied to each analytic
/// gradient tensor before comparison.
pub fn grad_check_with(
    cfg: &ModelConfig,
    seed: u64,
    frames: usize,
    tamper: impl Fn(&str, &mut [f64]),
) -> Result<GradCheckReport> {
    let mut model = Model::<f64>::with_init_std(cfg.clone(), seed, CHECK_INIT_STD)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let input = draw(frames * cfg.in_dim);
    let base0 = model.forward(&input, frames, Task::Separation, false)?.outputs;
    let jitter_a = draw(frames * cfg.out_mag_dim);
    let jitter_b = draw(frames * cfg.out_mag_dim);
    let near = |base: &[f64], jitter: &[f64]| -> Vec<f64> {
        base.iter().zip(jitter).map(|(b, j)| b + TARGET_SPREAD * j).collect()
    };
    let problem = Problem {
        mag_a: near(&base0.mag0, &jitter_a),
        mag_b: near(base0.mag1.as_deref().unwrap_or_default(), &jitter_b),
        input,
        frames,
        class: (seed as usize) % cfg.n_doa_classes,
    };
    let mut analytic = problem.grads(&model)?;
    for (i, g) in analytic.iter_mut().enumerate() {
        tamper(&model.params.at(i).name, g);
    }
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for pid in 0..model.params.len() {
        for idx in 0..model.params.at(pid).data.len() {
            let orig = model.params.at(pid).data[idx];
            model.params.at_mut(pid).data[idx] = orig + FD_STEP;
            let up = problem.loss(&model)?;
            model.params.at_mut(pid).data[idx] = orig - FD_STEP;
            let down = problem.loss(&model)?;
            model.params.at_mut(pid).data[idx] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[pid][idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst_param.is_empty() {
                report.max_rel_err = rel;
                report.worst_param = model.params.at(pid).name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
