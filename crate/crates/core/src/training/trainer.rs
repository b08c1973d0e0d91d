use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::{argmax, doa_vote, softmax, task1_loss, task2_loss, LossParts};
use super::schedule::{lr_at, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{doa_report, DoaReport};
use crate::nnet::{Gradients, HeadOutputs, Model, Real};
use crate::roomsim::{Task, GRID_STEP_DEG};

/// One training or evaluation utterance in model layout: `input` is
/// `frames × in_dim`, the magnitude targets `frames × out_mag_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub id: String,
    pub frames: usize,
    pub input: Vec<T>,
    pub mag0: Vec<T>,
    pub mag1: Option<Vec<T>>,
    pub class: Option<usize>,
}

impl<T: Real> Example<T> {
    pub fn validate(&self, model: &Model<T>, task: Task) -> Result<()> {
        let c = &model.config;
        let bad = |what: &str| Err(Error::Shape(format!("example {}: {what}", self.id)));
        if self.frames == 0 {
            return bad("no frames");
        }
        if self.input.len() != self.frames * c.in_dim {
            return bad("input size does not match frames × in_dim");
        }
        if self.mag0.len() != self.frames * c.out_mag_dim {
            return bad("target size does not match frames × out_mag_dim");
        }
        match task {
            Task::Doa => match self.class {
                None => return bad("task 1 needs a DOA class"),
                Some(k) if k >= c.n_doa_classes => {
                    return Err(Error::ClassOutOfRange {
                        label: k,
                        classes: c.n_doa_classes,
                    })
                }
                _ => {}
            },
            Task::Separation => match &self.mag1 {
                Some(m) if m.len() == self.mag0.len() => {}
                _ => return bad("task 2 needs an interferer target shaped like the first"),
            },
        }
        Ok(())
    }
}

/// Loss and gradients of one utterance.
pub fn example_loss<T: Real>(model: &Model<T>, ex: &Example<T>, task: Task) -> Result<(LossParts, Gradients<T>)> {
    let pass = model.forward(&ex.input, ex.frames, task, true)?;
    let (parts, upstream) = head_loss(&pass.outputs, ex, task)?;
    let grads = model.backward(&pass, &upstream)?;
    Ok((parts, grads))
}

fn head_loss<T: Real>(out: &HeadOutputs<T>, ex: &Example<T>, task: Task) -> Result<(LossParts, crate::nnet::HeadGrads<T>)> {
    match task {
        Task::Doa => {
            let class = ex
                .class
                .ok_or_else(|| Error::Shape(format!("example {}: task 1 needs a DOA class", ex.id)))?;
            task1_loss(out, &ex.mag0, class)
        }
        Task::Separation => {
            let m1 = ex
                .mag1
                .as_ref()
                .ok_or_else(|| Error::Shape(format!("example {}: task 2 needs two targets", ex.id)))?;
            task2_loss(out, &ex.mag0, m1)
        }
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub loss: LossParts,
    pub skipped: bool,
}

pub const LOSS_CSV_HEADER: &str = "step,loss,lr,mag0,mag1,ce";

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.loss.total, self.lr, self.loss.mag0, self.loss.mag1, self.loss.ce
        )
    }
}

/// Model, optimizer and schedule. Batches are drawn from a fresh seeded
/// permutation of the dataset each epoch, so the batch for a given step is a
/// pure function of `(seed, step)` and a resumed run matches an unbroken one.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub model: Model<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.params, config.beta1, config.beta2, config.eps);
        Ok(Self { config, model, adam })
    }

    /// Rebuild from saved optimizer state.
    pub fn resume(model: Model<T>, config: TrainConfig, adam: AdamState<T>) -> Result<Self> {
        config.validate()?;
        let shapes_ok = adam.m.len() == model.params.len()
            && adam.v.len() == model.params.len()
            && model
                .params
                .iter()
                .zip(adam.m.iter().zip(&adam.v))
                .all(|(p, (m, v))| m.len() == p.data.len() && v.len() == p.data.len());
        if !shapes_ok {
            return Err(Error::Checkpoint {
                name: "adam".into(),
                detail: "optimizer moments do not match the model parameters".into(),
            });
        }
        Ok(Self { config, model, adam })
    }

    /// Steps taken so far, including skipped ones.
    pub fn step(&self) -> u64 {
        self.adam.step + self.adam.skipped
    }

    pub fn batch_indices(&self, step: u64, n: usize) -> Vec<usize> {
        batch_indices(self.config.seed, self.config.batch_size, step, n)
    }

    /// Run one optimizer step on the batch scheduled for the current step.
    pub fn train_step(&mut self, data: &[Example<T>]) -> Result<StepLog> {
        if data.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        let task = self.config.task;
        let step = self.step();
        let idx = self.batch_indices(step, data.len());
        let scale = 1.0 / idx.len() as f64;
        let mut total = LossParts::default();
        let mut acc: Option<Gradients<T>> = None;
        for &i in &idx {
            let (parts, g) = example_loss(&self.model, &data[i], task)?;
            total.add_scaled(&parts, scale);
            match acc.as_mut() {
                None => {
                    let mut g = g;
                    for t in g.tensors.iter_mut().flatten() {
                        *t *= T::cast(scale);
                    }
                    acc = Some(g);
                }
                Some(a) => a.add_scaled(&g, T::cast(scale)),
            }
        }
        let grads = acc.expect("non-empty batch");
        let lr = lr_at(step as usize + 1, &self.config);
        let clamp = self.model.sigma_ids();
        let applied = self.adam.step(&mut self.model.params, &grads.tensors, lr, &clamp);
        Ok(StepLog {
            step: step + 1,
            lr,
            loss: total,
            skipped: !applied,
        })
    }

    /// Train until `total_steps`, calling `on_step` after every step (for
    /// logging and checkpointing).
    pub fn run<F>(&mut self, data: &[Example<T>], mut on_step: F) -> Result<Vec<StepLog>>
    where
        F: FnMut(&Self, &StepLog) -> Result<()>,
    {
        if data.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        for ex in data {
            ex.validate(&self.model, self.config.task)?;
        }
        let mut logs = Vec::new();
        while (self.step() as usize) < self.config.total_steps {
            let log = self.train_step(data)?;
            on_step(self, &log)?;
            logs.push(log);
        }
        Ok(logs)
    }
}

/// Dataset indices of the batch taken at `step` (0-based).
pub fn batch_indices(seed: u64, batch_size: usize, step: u64, n: usize) -> Vec<usize> {
    let bs = batch_size.min(n).max(1);
    let per_epoch = (n / bs).max(1) as u64;
    let epoch = step / per_epoch;
    let b = (step % per_epoch) as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    perm.shuffle(&mut rng);
    perm[b * bs..(b + 1) * bs].to_vec()
}

/// Per-utterance evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UttEval {
    pub id: String,
    pub loss: LossParts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voted_class: Option<usize>,
    /// Classes ranked by frame votes, then by mean posterior.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ranked_classes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_correct: Option<usize>,
    pub frames: usize,
    /// Head-0 squared error to the target and to the interferer (task 2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head0_to_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head0_to_interferer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub count: usize,
    pub mean_loss: LossParts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vote_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doa: Option<DoaReport>,
    /// Utterances whose head-0 output is closer to the 0° speaker's target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head0_closer: Option<usize>,
    pub utterances: Vec<UttEval>,
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum()
}

/// Classes ordered by frame-vote count, then mean softmax probability, then
/// index. The first entry equals [`doa_vote`].
pub fn rank_classes<T: Real>(logits: &[T], classes: usize) -> Vec<usize> {
    let mut votes = vec![0usize; classes];
    let mut mean_p = vec![0.0; classes];
    for row in logits.chunks(classes) {
        let row64: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        votes[argmax(&row64)] += 1;
        for (m, p) in mean_p.iter_mut().zip(softmax(&row64)) {
            *m += p;
        }
    }
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        votes[b]
            .cmp(&votes[a])
            .then(mean_p[b].total_cmp(&mean_p[a]))
            .then(a.cmp(&b))
    });
    order
}

pub fn evaluate_example<T: Real>(model: &Model<T>, ex: &Example<T>, task: Task) -> Result<UttEval> {
    let pass = model.forward(&ex.input, ex.frames, task, false)?;
    let out = &pass.outputs;
    let (loss, _) = head_loss(out, ex, task)?;
    let mut e = UttEval {
        id: ex.id.clone(),
        loss,
        true_class: ex.class,
        voted_class: None,
        ranked_classes: Vec::new(),
        frame_correct: None,
        frames: ex.frames,
        head0_to_target: None,
        head0_to_interferer: None,
    };
    match task {
        Task::Doa => {
            let classes = model.config.n_doa_classes;
            let logits = out.doa_logits.as_ref().expect("task 1 produces logits");
            let truth = ex.class.expect("validated");
            e.voted_class = Some(doa_vote(logits, classes)?);
            e.ranked_classes = rank_classes(logits, classes);
            e.frame_correct = Some(
                logits
                    .chunks(classes)
                    .filter(|r| argmax(&r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()) == truth)
                    .count(),
            );
        }
        Task::Separation => {
            let m1 = ex.mag1.as_ref().expect("validated");
            e.head0_to_target = Some(sq_dist(&out.mag0, &ex.mag0));
            e.head0_to_interferer = Some(sq_dist(&out.mag0, m1));
        }
    }
    Ok(e)
}

/// Evaluate every utterance; DOA metrics use the vote-ranked class list.
pub fn evaluate<T: Real>(model: &Model<T>, data: &[Example<T>], task: Task) -> Result<EvalReport> {
    evaluate_parallel(model, data, task, 1)
}

/// [`evaluate`] with utterances spread over `jobs` threads. The report does
/// not depend on `jobs`.
pub fn evaluate_parallel<T: Real>(model: &Model<T>, data: &[Example<T>], task: Task, jobs: usize) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    for ex in data {
        ex.validate(model, task)?;
    }
    let jobs = jobs.clamp(1, data.len());
    let mut slots: Vec<Option<Result<UttEval>>> = (0..data.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                s.spawn(move || {
                    (w..data.len())
                        .step_by(jobs)
                        .map(|i| (i, evaluate_example(model, &data[i], task)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("evaluation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let utts = slots
        .into_iter()
        .map(|r| r.expect("every utterance evaluated"))
        .collect::<Result<Vec<_>>>()?;
    summarize(utts, task)
}

/// Aggregate per-utterance results into a report.
pub fn summarize(utts: Vec<UttEval>, task: Task) -> Result<EvalReport> {
    if utts.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let n = utts.len() as f64;
    let mut mean_loss = LossParts::default();
    for u in &utts {
        mean_loss.add_scaled(&u.loss, 1.0 / n);
    }
    let mut report = EvalReport {
        task,
        count: utts.len(),
        mean_loss,
        frame_accuracy: None,
        vote_accuracy: None,
        doa: None,
        head0_closer: None,
        utterances: Vec::new(),
    };
    match task {
        Task::Doa => {
            let frames: usize = utts.iter().map(|u| u.frames).sum();
            let correct: usize = utts.iter().filter_map(|u| u.frame_correct).sum();
            report.frame_accuracy = Some(correct as f64 / frames as f64);
            let hits = utts.iter().filter(|u| u.voted_class == u.true_class).count();
            report.vote_accuracy = Some(hits as f64 / n);
            let preds: Vec<Vec<f64>> = utts
                .iter()
                .map(|u| u.ranked_classes.iter().take(5).map(|&k| k as f64 * GRID_STEP_DEG).collect())
                .collect();
            let truths = utts
                .iter()
                .map(|u| {
                    u.true_class
                        .map(|k| k as f64 * GRID_STEP_DEG)
                        .ok_or_else(|| Error::Shape(format!("{}: no true DOA class", u.id)))
                })
                .collect::<Result<Vec<f64>>>()?;
            report.doa = Some(doa_report(&preds, &truths, 5)?);
        }
        Task::Separation => {
            report.head0_closer = Some(
                utts.iter()
                    .filter(|u| u.head0_to_target < u.head0_to_interferer)
                    .count(),
            );
        }
    }
    report.utterances = utts;
    Ok(report)
}
