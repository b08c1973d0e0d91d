use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{append_manifest, read_manifest, ManifestEntry, Split};
use super::pipeline::{build_example, render_utterance, Featurizer, UttFeatures};
use super::tensor::{read_tensor, write_tensor, Tensor};
use crate::error::{Error, Result};
use crate::nnet::Real;
use crate::roomsim::{sample_scene_with, Task};
use crate::signals::{compute_stats, speechlike, FeatKind, FeatStats, MultiWave, WavEncoding, MEL_BANDS};
use crate::training::Example;
use crate::SAMPLE_RATE;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub tr: usize,
    pub dt: usize,
    pub et: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.tr + self.dt + self.et
    }

    pub fn split_of(&self, i: usize) -> Split {
        if i < self.tr {
            Split::Tr
        } else if i < self.tr + self.dt {
            Split::Dt
        } else {
            Split::Et
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub task: Task,
    pub counts: SplitCounts,
    pub seed: u64,
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub written: usize,
    pub existing: usize,
    pub corpus_files: usize,
    pub skipped_files: usize,
}

struct CorpusFile {
    rel: String,
    samples: Vec<f64>,
}

/// Mono 16 kHz wavs of `dir`, sorted by name. Unreadable or mismatched
/// files are skipped with a warning.
fn load_corpus(dir: &Path) -> Result<(Vec<CorpusFile>, usize)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    let mut files = Vec::new();
    let mut skipped = 0;
    for p in paths {
        match MultiWave::read_wav(&p) {
            Ok(w) if w.sample_rate() == SAMPLE_RATE && !w.is_empty() => files.push(CorpusFile {
                rel: p.file_name().expect("listed file").to_string_lossy().into_owned(),
                samples: w.channel(0).to_vec(),
            }),
            Ok(w) => {
                log::warn!("skipping {}: {} Hz, {} samples", p.display(), w.sample_rate(), w.len());
                skipped += 1;
            }
            Err(e) => {
                log::warn!("skipping unreadable {}: {e}", p.display());
                skipped += 1;
            }
        }
    }
    if files.is_empty() {
        return Err(Error::Empty(format!("no usable 16 kHz wav files in {}", dir.display())));
    }
    Ok((files, skipped))
}

/// Write `n` synthetic speech-like mono wavs (2-4 s) as a stand-in corpus.
pub fn generate_corpus(dir: impl AsRef<Path>, n: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let secs = rng.random_range(2.0..4.0);
            let x = speechlike(seed.wrapping_mul(1000).wrapping_add(i as u64), secs, SAMPLE_RATE);
            let p = dir.join(format!("spk{i:04}.wav"));
            MultiWave::mono(x, SAMPLE_RATE)?.write_wav(&p, WavEncoding::Float32)?;
            Ok(p)
        })
        .collect()
}

fn synth_one(i: usize, opts: &SynthOptions, corpus: &[CorpusFile], feat: &Featurizer) -> Result<ManifestEntry> {
    let split = opts.counts.split_of(i);
    let id = format!("{}_{i:06}", split.as_str());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(i as u64);
    let scene = sample_scene_with(opts.task, &mut rng);
    let first = rng.random_range(0..corpus.len());
    let mut picks = vec![first];
    if opts.task == Task::Separation {
        let second = if corpus.len() > 1 {
            (first + rng.random_range(1..corpus.len())) % corpus.len()
        } else {
            first
        };
        picks.push(second);
    }
    let sources: Vec<Vec<f64>> = picks.iter().map(|&k| corpus[k].samples.clone()).collect();
    let (rendered, utt) = render_utterance(id.clone(), &sources, &scene, feat)?;

    let rel = |sub: &str, name: String| format!("{sub}/{name}");
    let mixture = rel("wav", format!("{id}_mix.wav"));
    rendered
        .mixture
        .write_wav(opts.out_dir.join(&mixture), WavEncoding::Float32)?;
    let mut clean = Vec::new();
    for (k, c) in rendered.clean.iter().enumerate() {
        let p = rel("wav", format!("{id}_clean{k}.wav"));
        c.write_wav(opts.out_dir.join(&p), WavEncoding::Float32)?;
        clean.push(p);
    }
    let features = rel("feat", format!("{id}_in.ntsr"));
    write_tensor(opts.out_dir.join(&features), &Tensor::from_feat(&utt.input))?;
    let mut targets = Vec::new();
    for (k, t) in utt.targets.iter().enumerate() {
        let p = rel("feat", format!("{id}_tgt{k}.ntsr"));
        write_tensor(opts.out_dir.join(&p), &Tensor::from_feat(t))?;
        targets.push(p);
    }
    Ok(ManifestEntry {
        utt_id: id,
        split,
        task: opts.task,
        sources: picks.iter().map(|&k| corpus[k].rel.clone()).collect(),
        doa_class: scene.doa_class(),
        t60: scene.t60,
        scene,
        samples: rendered.mixture.len(),
        frames: utt.input.frames,
        mixture,
        clean,
        features,
        targets,
    })
}

/// Render `counts` utterances from the wavs in `corpus` into `out_dir`, with
/// one sampled room per utterance, and append them to
/// `out_dir/manifest.jsonl`. Utterance `i` depends only on `(seed, i)`, and
/// utterances already in the manifest are not re-rendered.
pub fn synth_dataset(opts: &SynthOptions) -> Result<SynthSummary> {
    let (corpus, skipped_files) = load_corpus(&opts.corpus)?;
    fs::create_dir_all(opts.out_dir.join("wav")).map_err(|e| Error::io(&opts.out_dir, e))?;
    fs::create_dir_all(opts.out_dir.join("feat")).map_err(|e| Error::io(&opts.out_dir, e))?;
    let manifest = opts.out_dir.join(MANIFEST_FILE);
    let done: std::collections::HashSet<String> = if manifest.exists() {
        read_manifest(&manifest)?.into_iter().map(|e| e.utt_id).collect()
    } else {
        Default::default()
    };
    let todo: Vec<usize> = (0..opts.counts.total())
        .filter(|&i| !done.contains(&format!("{}_{i:06}", opts.counts.split_of(i).as_str())))
        .collect();
    let jobs = opts.jobs.max(1).min(todo.len().max(1));
    let mut results: Vec<Option<Result<ManifestEntry>>> = (0..todo.len()).map(|_| None).collect();
    std::thread::scope(|s| -> Result<()> {
        let mut handles = Vec::new();
        for w in 0..jobs {
            let todo = &todo;
            let corpus = &corpus;
            handles.push(s.spawn(move || -> Result<Vec<(usize, Result<ManifestEntry>)>> {
                let feat = Featurizer::standard()?;
                Ok((w..todo.len())
                    .step_by(jobs)
                    .map(|k| (k, synth_one(todo[k], opts, corpus, &feat)))
                    .collect())
            }));
        }
        for h in handles {
            for (k, r) in h.join().expect("synthesis worker panicked")? {
                results[k] = Some(r);
            }
        }
        Ok(())
    })?;
    let entries = results
        .into_iter()
        .map(|r| r.expect("every index assigned"))
        .collect::<Result<Vec<_>>>()?;
    let written = append_manifest(&manifest, &entries)?;
    Ok(SynthSummary {
        written,
        existing: done.len(),
        corpus_files: corpus.len(),
        skipped_files,
    })
}

/// Read the persisted features of one manifest entry.
pub fn load_utterance(base: &Path, entry: &ManifestEntry) -> Result<UttFeatures> {
    let input = read_tensor(base.join(&entry.features))?.to_feat(FeatKind::Combined)?;
    let targets = entry
        .targets
        .iter()
        .map(|p| read_tensor(base.join(p))?.to_feat(FeatKind::Target))
        .collect::<Result<Vec<_>>>()?;
    Ok(UttFeatures {
        id: entry.utt_id.clone(),
        task: entry.task,
        input,
        targets,
        class: (entry.task == Task::Doa).then_some(entry.doa_class),
    })
}

/// Normalization statistics over the training split of a manifest.
pub fn dataset_stats(base: &Path, entries: &[ManifestEntry]) -> Result<FeatStats> {
    let train: Vec<_> = entries
        .iter()
        .filter(|e| e.split == Split::Tr)
        .map(|e| load_utterance(base, e).map(|u| u.input))
        .collect::<Result<_>>()?;
    if train.is_empty() {
        return Err(Error::Empty("manifest has no training utterances".into()));
    }
    compute_stats(&train, MEL_BANDS)
}

/// Model examples for the entries of `split` (all entries when `None`).
pub fn load_examples<T: Real>(
    base: &Path,
    entries: &[ManifestEntry],
    split: Option<Split>,
    stats: &FeatStats,
    dr: usize,
) -> Result<Vec<Example<T>>> {
    entries
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| build_example(&load_utterance(base, e)?, stats, dr))
        .collect()
}
