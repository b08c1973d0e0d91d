use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use reverbnet::datasetio::{
    self, build_examples, generate_corpus, load_checkpoint, load_utterance, read_checkpoint_manifest, read_manifest,
    save_checkpoint, write_tensor, Featurizer, ManifestEntry, Split, SplitCounts, SynthOptions, Tensor, TensorData,
};
use reverbnet::doa_classic::{steering_delays, Band, DoaMethod};
use reverbnet::metrics::{doa_report, DoaReport};
use reverbnet::roomsim::{default_rir_len, estimate_t60, image_rir, SourceRole, GRID_STEP_DEG};
use reverbnet::signals::{
    compute_stats, exp_logmel, griffin_lim, mel_to_linear, FeatKind, FeatStats, FeatTensor, MultiWave, WavEncoding,
    MEL_BANDS,
};
use reverbnet::training::{evaluate_parallel, Example, TrainConfig, Trainer, LOSS_CSV_HEADER};
use reverbnet::wpe::{wpe_wave, WpeConfig};
use reverbnet::{Model, ModelConfig, Real, RoomScene, Task, SAMPLE_RATE};

use crate::args::*;
use crate::merge::{apply_config, read_config};
use crate::Failure;

const STATS_FILE: &str = "stats.json";
const LOSS_FILE: &str = "loss.csv";

pub fn merged<T>(parsed: T, matches: &ArgMatches, config: impl Fn(&T) -> &Option<PathBuf>) -> Result<T, Failure>
where
    T: Serialize + DeserializeOwned,
{
    let cfg = read_config(config(&parsed).as_deref())?;
    apply_config(parsed, matches, cfg.as_ref())
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, Failure> {
    v.as_ref().ok_or_else(|| Failure::Usage(format!("missing required --{flag}")))
}

fn task_of(code: u8) -> Result<Task, Failure> {
    Task::try_from(code).map_err(|e| Failure::Usage(e.to_string()))
}

/// Write JSON to `out`, or pretty-print it to stdout.
fn emit(value: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => write_text(p, &(text + "\n")),
        None => print_stdout(&(text + "\n")),
    }
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Map `f` over `items` on `jobs` threads, keeping order.
fn par_map<I: Sync, O: Send>(items: &[I], jobs: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let jobs = jobs.clamp(1, items.len().max(1));
    let mut out: Vec<Option<O>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..jobs)
            .map(|w| s.spawn(move || (w..items.len()).step_by(jobs).map(|i| (i, f(&items[i]))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                out[i] = Some(v);
            }
        }
    });
    out.into_iter().map(|v| v.expect("all items mapped")).collect()
}

fn manifest_base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn select(entries: Vec<ManifestEntry>, split: SplitArg) -> Vec<ManifestEntry> {
    let want = match split {
        SplitArg::Tr => Some(Split::Tr),
        SplitArg::Dt => Some(Split::Dt),
        SplitArg::Et => Some(Split::Et),
        SplitArg::All => None,
    };
    entries.into_iter().filter(|e| want.is_none_or(|s| e.split == s)).collect()
}

fn load_entries(manifest: &Path, split: SplitArg) -> Result<Vec<ManifestEntry>, Failure> {
    let entries = select(read_manifest(manifest)?, split);
    if entries.is_empty() {
        return Err(Failure::Data(format!("{}: no utterances in split {split:?}", manifest.display())));
    }
    Ok(entries)
}

fn training_stats(base: &Path, entries: &[ManifestEntry], jobs: usize) -> Result<FeatStats, Failure> {
    let tr: Vec<&ManifestEntry> = entries.iter().filter(|e| e.split == Split::Tr).collect();
    if tr.is_empty() {
        return Err(Failure::Data("manifest has no training utterances".into()));
    }
    let feats = par_map(&tr, jobs, |e| load_utterance(base, e).map(|u| u.input))
        .into_iter()
        .collect::<reverbnet::Result<Vec<FeatTensor>>>()?;
    Ok(compute_stats(&feats, MEL_BANDS)?)
}

pub fn simulate_rir(a: SimulateRirArgs) -> Result<(), Failure> {
    let out = required(&a.out, "out")?;
    let task = task_of(a.task)?;
    match (task, a.interferer_angle) {
        (Task::Separation, None) => return Err(Failure::Usage("task 2 needs --interferer-angle".into())),
        (Task::Doa, Some(_)) => return Err(Failure::Usage("--interferer-angle only applies to task 2".into())),
        _ => {}
    }
    let mut scene = RoomScene::standard(task, a.angle, a.interferer_angle, a.t60);
    scene.anechoic = a.anechoic;
    scene.validate()?;
    let len = default_rir_len(a.t60, SAMPLE_RATE);
    let mut roles = vec![SourceRole::Target];
    if task == Task::Separation {
        roles.push(SourceRole::Interferer);
    }
    let mut summary = Vec::new();
    for role in roles {
        let rir = image_rir(&scene, role, len, SAMPLE_RATE)?;
        let name = match role {
            SourceRole::Target => "rir_target",
            SourceRole::Interferer => "rir_interferer",
        };
        let flat: Vec<f64> = rir.taps.iter().flatten().copied().collect();
        let tensor = Tensor::new(vec![rir.taps.len(), rir.len()], TensorData::F64(flat))?;
        write_tensor(out.join(format!("{name}.ntsr")), &tensor)?;
        let t60: Vec<Option<f64>> = rir.taps.iter().map(|h| estimate_t60(h, SAMPLE_RATE).ok()).collect();
        let sidecar = json!({
            "tensor": format!("{name}.ntsr"),
            "sample_rate": SAMPLE_RATE,
            "source_role": role,
            "scene": scene,
        });
        write_text(&out.join(format!("{name}.json")), &serde_json::to_string_pretty(&sidecar)?)?;
        summary.push(json!({
            "role": role,
            "taps": rir.len(),
            "direct_delay_samples": rir.direct_delays()?,
            "estimated_t60": t60,
        }));
    }
    emit(&json!({ "scene": scene, "rirs": summary }), None)
}

pub fn synth_dataset(a: SynthArgs) -> Result<(), Failure> {
    let corpus = required(&a.corpus, "corpus")?.clone();
    let out = required(&a.out, "out")?.clone();
    if let Some(n) = a.generate_corpus {
        generate_corpus(&corpus, n, a.seed)?;
    }
    let opts = SynthOptions {
        corpus,
        out_dir: out,
        task: task_of(a.task)?,
        counts: SplitCounts {
            tr: a.tr,
            dt: a.dt,
            et: a.et,
        },
        seed: a.seed,
        jobs: a.jobs,
    };
    let summary = datasetio::synth_dataset(&opts)?;
    emit(&serde_json::to_value(summary)?, None)
}

pub fn featurize(a: FeaturizeArgs) -> Result<(), Failure> {
    match (&a.manifest, &a.wav) {
        (Some(manifest), None) => {
            let entries = read_manifest(manifest)?;
            let base = manifest_base(manifest);
            let stats = training_stats(&base, &entries, a.jobs)?;
            let out = a.out.clone().unwrap_or_else(|| base.join(STATS_FILE));
            write_text(&out, &serde_json::to_string_pretty(&stats)?)?;
            emit(
                &json!({ "stats": out, "dims": stats.mean.len(), "mag_dims": stats.mag_dims }),
                None,
            )
        }
        (None, Some(wav)) => {
            let out = required(&a.out, "out")?;
            let wave = MultiWave::read_wav(wav)?;
            let feat = Featurizer::standard()?.inputs(&wave)?;
            write_tensor(out, &Tensor::from_feat(&feat))?;
            emit(&json!({ "features": out, "shape": feat.shape() }), None)
        }
        _ => Err(Failure::Usage("featurize needs exactly one of --manifest or --wav".into())),
    }
}

fn preset(p: ModelPreset) -> ModelConfig {
    match p {
        ModelPreset::Tiny => ModelConfig::tiny(),
        ModelPreset::Small => ModelConfig::small(),
        ModelPreset::Full => ModelConfig::full(),
        ModelPreset::FullDense => ModelConfig::full_dense(),
    }
}

fn examples_for<T: Real>(
    manifest: &Path,
    split: SplitArg,
    task: Task,
    stats: &FeatStats,
    dr: usize,
    jobs: usize,
) -> Result<(Vec<ManifestEntry>, Vec<Example<T>>), Failure> {
    let base = manifest_base(manifest);
    let entries: Vec<ManifestEntry> = load_entries(manifest, split)?
        .into_iter()
        .filter(|e| e.task == task)
        .collect();
    if entries.is_empty() {
        return Err(Failure::Data(format!("no task-{} utterances in {}", u8::from(task), manifest.display())));
    }
    let utts = par_map(&entries, jobs, |e| load_utterance(&base, e))
        .into_iter()
        .collect::<reverbnet::Result<Vec<_>>>()?;
    let examples = build_examples(&utts, stats, dr)?;
    Ok((entries, examples))
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    match a.precision {
        Precision::F32 => train_as::<f32>(a),
        Precision::F64 => train_as::<f64>(a),
    }
}

fn train_as<T: Real>(a: TrainArgs) -> Result<(), Failure> {
    let manifest = required(&a.manifest, "manifest")?;
    let out = required(&a.out, "out")?;
    let task = task_of(a.task)?;
    let base = manifest_base(manifest);
    let started = Instant::now();

    let resumed = match &a.resume {
        Some(dir) => Some(load_checkpoint::<T>(dir, None)?),
        None => None,
    };
    let stats = match resumed.as_ref().and_then(|c| c.manifest.stats.clone()) {
        Some(s) => s,
        None if base.join(STATS_FILE).exists() => serde_json::from_str(&fs::read_to_string(base.join(STATS_FILE))?)?,
        None => training_stats(&base, &read_manifest(manifest)?, 1)?,
    };
    let dr = resumed.as_ref().map_or(preset(a.model).d_rate, |c| c.manifest.model.d_rate);
    let (_, data) = examples_for::<T>(manifest, SplitArg::Tr, task, &stats, dr, 1)?;

    let mut trainer = match resumed {
        Some(ck) => {
            let mut cfg = ck
                .manifest
                .train
                .clone()
                .ok_or_else(|| Failure::Data("checkpoint has no training config".into()))?;
            if cfg.task != task {
                return Err(Failure::Usage(format!("checkpoint was trained on task {}", u8::from(cfg.task))));
            }
            cfg.total_steps = a.steps;
            let adam = ck
                .adam
                .ok_or_else(|| Failure::Data("checkpoint has no optimizer state".into()))?;
            Trainer::resume(ck.model, cfg, adam)?
        }
        None => {
            let ex = &data[0];
            let model_cfg = ModelConfig {
                in_dim: ex.input.len() / ex.frames,
                out_mag_dim: ex.mag0.len() / ex.frames,
                sigma_init: a.sigma_init,
                ..preset(a.model)
            };
            let cfg = TrainConfig {
                total_steps: a.steps,
                peak_lr: a.lr,
                warmup_frac: a.warmup_frac,
                batch_size: a.batch_size,
                seed: a.seed,
                task,
                checkpoint_every: a.checkpoint_every,
                ..TrainConfig::default()
            };
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            Trainer::new(Model::<T>::new(model_cfg, a.seed)?, cfg)?
        }
    };

    fs::create_dir_all(out)?;
    let loss_path = out.join(LOSS_FILE);
    let append = a.resume.is_some() && loss_path.exists();
    let mut csv = fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&loss_path)
        .map_err(|e| Failure::Data(format!("{}: {e}", loss_path.display())))?;
    if !append {
        writeln!(csv, "{LOSS_CSV_HEADER}")?;
    }
    let every = a.checkpoint_every;
    let logs = trainer.run(&data, |t, log| {
        writeln!(csv, "{}", log.csv_row()).map_err(|e| reverbnet::Error::Empty(e.to_string()))?;
        if every > 0 && log.step % every as u64 == 0 {
            save_checkpoint(
                out.join(format!("step_{:06}", log.step)),
                &t.model,
                Some(&t.adam),
                Some(&t.config),
                Some(&stats),
            )?;
        }
        Ok(())
    })?;
    let final_dir = out.join("final");
    save_checkpoint(&final_dir, &trainer.model, Some(&trainer.adam), Some(&trainer.config), Some(&stats))?;
    emit(
        &json!({
            "checkpoint": final_dir,
            "steps": trainer.step(),
            "parameters": trainer.model.num_parameters(),
            "first_loss": logs.first().map(|l| l.loss.total),
            "final_loss": logs.last().map(|l| l.loss.total),
            "skipped_updates": trainer.adam.skipped,
            "seconds": started.elapsed().as_secs_f64(),
        }),
        None,
    )
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let ck = required(&a.checkpoint, "checkpoint")?;
    match read_checkpoint_manifest(ck)?.dtype.as_str() {
        "f32" => eval_as::<f32>(a),
        _ => eval_as::<f64>(a),
    }
}

fn neural_report<T: Real>(
    manifest: &Path,
    ck_dir: &Path,
    split: SplitArg,
    jobs: usize,
) -> Result<reverbnet::training::EvalReport, Failure> {
    let ck = load_checkpoint::<T>(ck_dir, None)?;
    let stats = ck
        .manifest
        .stats
        .clone()
        .ok_or_else(|| Failure::Data("checkpoint carries no normalization statistics".into()))?;
    let task = ck.manifest.train.as_ref().map_or(Task::Doa, |t| t.task);
    let (_, data) = examples_for::<T>(manifest, split, task, &stats, ck.model.config.d_rate, jobs)?;
    Ok(evaluate_parallel(&ck.model, &data, task, jobs)?)
}

fn eval_as<T: Real>(a: EvalArgs) -> Result<(), Failure> {
    let manifest = required(&a.manifest, "manifest")?;
    let ck = required(&a.checkpoint, "checkpoint")?;
    let report = neural_report::<T>(manifest, ck, a.split, a.jobs)?;
    emit(&serde_json::to_value(report)?, a.out.as_deref())
}

fn with_t60_breakdown(
    method: &str,
    split: SplitArg,
    preds: Vec<Vec<f64>>,
    entries: &[ManifestEntry],
) -> Result<Value, Failure> {
    let truths: Vec<f64> = entries.iter().map(|e| e.doa_class as f64 * GRID_STEP_DEG).collect();
    let overall: DoaReport = doa_report(&preds, &truths, 5)?;
    let mut by_t60 = BTreeMap::new();
    for t60 in entries.iter().map(|e| format!("{:.1}", e.t60)).collect::<std::collections::BTreeSet<_>>() {
        let idx: Vec<usize> = (0..entries.len()).filter(|&i| format!("{:.1}", entries[i].t60) == t60).collect();
        let p: Vec<Vec<f64>> = idx.iter().map(|&i| preds[i].clone()).collect();
        let t: Vec<f64> = idx.iter().map(|&i| truths[i]).collect();
        by_t60.insert(t60, doa_report(&p, &t, 5)?);
    }
    let mut value = serde_json::to_value(overall)?;
    let obj = value.as_object_mut().expect("report is an object");
    obj.insert("method".into(), json!(method));
    obj.insert("split".into(), serde_json::to_value(split)?);
    obj.insert("by_t60".into(), serde_json::to_value(by_t60)?);
    obj.insert(
        "utterances".into(),
        Value::Array(
            entries
                .iter()
                .zip(&preds)
                .map(|(e, p)| json!({ "utt_id": e.utt_id, "truth": e.doa_class as f64 * GRID_STEP_DEG, "t60": e.t60, "candidates": p }))
                .collect(),
        ),
    );
    Ok(value)
}

pub fn doa(a: DoaArgs) -> Result<(), Failure> {
    let manifest = required(&a.manifest, "manifest")?;
    if a.k == 0 {
        return Err(Failure::Usage("--k must be positive".into()));
    }
    let value = match a.method {
        MethodArg::Neural => {
            let ck = required(&a.checkpoint, "checkpoint")?;
            let report = match read_checkpoint_manifest(ck)?.dtype.as_str() {
                "f32" => neural_report::<f32>(manifest, ck, a.split, a.jobs)?,
                _ => neural_report::<f64>(manifest, ck, a.split, a.jobs)?,
            };
            if report.task != Task::Doa {
                return Err(Failure::Usage("neural DOA needs a task-1 checkpoint".into()));
            }
            let entries: Vec<ManifestEntry> = load_entries(manifest, a.split)?
                .into_iter()
                .filter(|e| e.task == Task::Doa)
                .collect();
            let preds = report
                .utterances
                .iter()
                .map(|u| u.ranked_classes.iter().take(a.k).map(|&c| c as f64 * GRID_STEP_DEG).collect())
                .collect();
            with_t60_breakdown("neural", a.split, preds, &entries)?
        }
        m => {
            let method = if m == MethodArg::Music { DoaMethod::Music } else { DoaMethod::SrpPhat };
            let band = Band {
                lo_hz: a.band_lo,
                hi_hz: a.band_hi,
            };
            let base = manifest_base(manifest);
            let entries: Vec<ManifestEntry> = load_entries(manifest, a.split)?
                .into_iter()
                .filter(|e| e.task == Task::Doa)
                .collect();
            if entries.is_empty() {
                return Err(Failure::Data("no task-1 utterances to localize".into()));
            }
            let preds = par_map(&entries, a.jobs, |e| -> reverbnet::Result<Vec<f64>> {
                let feat = Featurizer::standard()?;
                let wave = MultiWave::read_wav(base.join(&e.mixture))?;
                let spec = feat.stft.stft_multi(&wave)?;
                method.top_k(&spec, &steering_delays(&e.scene), band, a.k)
            })
            .into_iter()
            .collect::<reverbnet::Result<Vec<_>>>()?;
            let name = if method == DoaMethod::Music { "music" } else { "srp-phat" };
            with_t60_breakdown(name, a.split, preds, &entries)?
        }
    };
    emit(&value, a.out.as_deref())
}

pub fn wpe(a: WpeArgs) -> Result<(), Failure> {
    let input = required(&a.input, "input")?;
    let output = required(&a.output, "output")?;
    let wave = MultiWave::read_wav(input)?;
    let keep = a.channels.unwrap_or(wave.num_channels());
    if keep == 0 || keep > wave.num_channels() {
        return Err(Failure::Usage(format!(
            "--channels {keep} but {} has {} channel(s)",
            input.display(),
            wave.num_channels()
        )));
    }
    let wave = MultiWave::new(wave.channels()[..keep].to_vec(), wave.sample_rate())?;
    let cfg = WpeConfig {
        taps: a.taps,
        delay: a.delay,
        iterations: a.iters,
        per_channel: a.per_channel,
        ..WpeConfig::default()
    };
    let feat = Featurizer::new(Default::default(), wave.sample_rate())?;
    let out = wpe_wave(&wave, &cfg, &feat.stft)?;
    out.write_wav(output, WavEncoding::Float32)?;
    emit(
        &json!({ "output": output, "channels": keep, "samples": out.len(), "config": cfg }),
        None,
    )
}

pub fn reconstruct(a: ReconstructArgs) -> Result<(), Failure> {
    let out = required(&a.out, "out")?;
    let feat = Featurizer::standard()?;
    let logmel = match (&a.features, &a.wav) {
        (Some(p), None) => {
            let t = datasetio::read_tensor(p)?.to_feat(FeatKind::Mag)?;
            if t.dims == MEL_BANDS {
                t
            } else if t.dims > MEL_BANDS {
                let data = t.data.chunks_exact(t.dims).flat_map(|r| r[..MEL_BANDS].to_vec()).collect();
                FeatTensor::new(data, t.channels, t.frames, MEL_BANDS, FeatKind::Mag)?
            } else {
                return Err(Failure::Data(format!("{}: {} dims, need at least {MEL_BANDS}", p.display(), t.dims)));
            }
        }
        (None, Some(w)) => feat.target(&MultiWave::read_wav(w)?)?,
        _ => return Err(Failure::Usage("reconstruct needs exactly one of --features or --wav".into())),
    };
    if a.channel >= logmel.channels {
        return Err(Failure::Usage(format!("--channel {} but features have {}", a.channel, logmel.channels)));
    }
    let mag = mel_to_linear(&exp_logmel(&logmel), &feat.fb)?;
    let gl = griffin_lim(&mag, a.channel, &feat.stft, SAMPLE_RATE, a.iters)?;
    MultiWave::mono(gl.samples, SAMPLE_RATE)?.write_wav(out, WavEncoding::Float32)?;
    emit(
        &json!({ "output": out, "iterations": a.iters, "final_convergence": gl.convergence.last() }),
        None,
    )
}

pub fn plot_data(a: PlotDataArgs) -> Result<(), Failure> {
    let input = required(&a.input, "input")?;
    let csv = match a.kind {
        PlotKind::Spectrogram => {
            let feat = Featurizer::standard()?;
            let wave = MultiWave::read_wav(input)?;
            let lm = feat.target(&wave)?;
            if a.channel >= lm.channels {
                return Err(Failure::Usage(format!("--channel {} but {} has {}", a.channel, input.display(), lm.channels)));
            }
            let hop = feat.stft.config().hop as f64 / wave.sample_rate() as f64;
            let mut s = String::from("frame,time_s");
            for m in 0..lm.dims {
                s.push_str(&format!(",mel_{m}"));
            }
            s.push('\n');
            for t in 0..lm.frames {
                s.push_str(&format!("{t},{:.4}", t as f64 * hop));
                for v in lm.frame(a.channel, t) {
                    s.push_str(&format!(",{v:.6}"));
                }
                s.push('\n');
            }
            s
        }
        PlotKind::LossCurve => {
            let path = if input.is_dir() { input.join(LOSS_FILE) } else { input.clone() };
            let text = fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            if text.lines().next() != Some(LOSS_CSV_HEADER) {
                return Err(Failure::Data(format!("{}: not a loss curve", path.display())));
            }
            text
        }
    };
    match &a.out {
        Some(p) => write_text(p, &csv),
        None => print_stdout(&csv),
    }
}
