use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor};
use crate::error::{Error, Result};
use crate::nnet::{Model, ModelConfig, ParamStore, Real};
use crate::signals::FeatStats;
use crate::training::{AdamState, TrainConfig};

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_FORMAT: u32 = 1;

/// `manifest.json` of a checkpoint directory. Tensors live next to it in
/// `params/`, `adam_m/` and `adam_v/`, one `<name>.ntsr` per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    pub dtype: String,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub step: u64,
    pub seed: u64,
    #[serde(default)]
    pub adam_step: u64,
    #[serde(default)]
    pub adam_skipped: u64,
    pub has_optimizer: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<FeatStats>,
    /// Parameter names in store order.
    pub params: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub manifest: CheckpointManifest,
    pub model: Model<T>,
    pub adam: Option<AdamState<T>>,
}

fn tensor_path(dir: &Path, group: &str, name: &str) -> PathBuf {
    dir.join(group).join(format!("{name}.ntsr"))
}

/// Write a checkpoint directory, replacing any tensors already there.
pub fn save_checkpoint<T: Real>(
    dir: impl AsRef<Path>,
    model: &Model<T>,
    adam: Option<&AdamState<T>>,
    train: Option<&TrainConfig>,
    stats: Option<&FeatStats>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in model.params.iter().enumerate() {
        write_tensor(tensor_path(dir, "params", &p.name), &Tensor::from_real(p.shape.clone(), &p.data)?)?;
        if let Some(a) = adam {
            write_tensor(tensor_path(dir, "adam_m", &p.name), &Tensor::from_real(p.shape.clone(), &a.m[i])?)?;
            write_tensor(tensor_path(dir, "adam_v", &p.name), &Tensor::from_real(p.shape.clone(), &a.v[i])?)?;
        }
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT,
        dtype: T::NAME.to_string(),
        model: model.config.clone(),
        train: train.cloned(),
        step: adam.map_or(0, |a| a.step + a.skipped),
        seed: train.map_or(0, |t| t.seed),
        adam_step: adam.map_or(0, |a| a.step),
        adam_skipped: adam.map_or(0, |a| a.skipped),
        has_optimizer: adam.is_some(),
        stats: stats.cloned(),
        params: model.params.iter().map(|p| p.name.clone()).collect(),
    };
    let path = dir.join(CHECKPOINT_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_checkpoint_manifest(dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let path = dir.as_ref().join(CHECKPOINT_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: CheckpointManifest = serde_json::from_str(&text)?;
    if m.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint {
            name: CHECKPOINT_MANIFEST.into(),
            detail: format!("format {} is not {CHECKPOINT_FORMAT}", m.format),
        });
    }
    Ok(m)
}

fn load_group<T: Real>(dir: &Path, group: &str, cfg: &ModelConfig) -> Result<ParamStore<T>> {
    let template = Model::<T>::new(cfg.clone(), 0)?;
    let mut store = ParamStore::new();
    for p in template.params.iter() {
        let path = tensor_path(dir, group, &p.name);
        if !path.exists() {
            return Err(Error::Checkpoint {
                name: p.name.clone(),
                detail: format!("{group} tensor missing at {}", path.display()),
            });
        }
        let t = read_tensor(&path)?;
        if t.dims != p.shape {
            return Err(Error::Checkpoint {
                name: p.name.clone(),
                detail: format!("{group} tensor has shape {:?}, config expects {:?}", t.dims, p.shape),
            });
        }
        store.push(p.name.clone(), t.dims.clone(), t.to_real())?;
    }
    Ok(store)
}

/// Load a checkpoint, validating every parameter against the stored model
/// config (or `expect`, when given).
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>, expect: Option<&ModelConfig>) -> Result<Checkpoint<T>> {
    let dir = dir.as_ref();
    let manifest = read_checkpoint_manifest(dir)?;
    let cfg = expect.unwrap_or(&manifest.model).clone();
    let params = load_group::<T>(dir, "params", &cfg)?;
    let model = Model::from_params(cfg.clone(), params)?;
    let adam = if manifest.has_optimizer {
        let m = load_group::<T>(dir, "adam_m", &cfg)?;
        let v = load_group::<T>(dir, "adam_v", &cfg)?;
        let train = manifest.train.clone().unwrap_or_default();
        let mut state = AdamState::new(&model.params, train.beta1, train.beta2, train.eps);
        state.m = m.iter().map(|p| p.data.clone()).collect();
        state.v = v.iter().map(|p| p.data.clone()).collect();
        state.step = manifest.adam_step;
        state.skipped = manifest.adam_skipped;
        Some(state)
    } else {
        None
    };
    Ok(Checkpoint { manifest, model, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roomsim::Task;

    fn trained_state() -> (Model<f32>, AdamState<f32>, TrainConfig) {
        let cfg = TrainConfig {
            total_steps: 10,
            task: Task::Doa,
            seed: 5,
            ..Default::default()
        };
        let model = Model::<f32>::new(ModelConfig::tiny(), 3).unwrap();
        let mut adam = AdamState::new(&model.params, 0.9, 0.999, 1e-8);
        let mut m = model.clone();
        let grads: Vec<Vec<f32>> = m
            .params
            .iter()
            .map(|p| p.data.iter().enumerate().map(|(i, _)| (i as f32 * 0.1).sin()).collect())
            .collect();
        adam.step(&mut m.params, &grads, 1e-3, &[]);
        (m, adam, cfg)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (model, adam, cfg) = trained_state();
        save_checkpoint(dir.path(), &model, Some(&adam), Some(&cfg), None).unwrap();
        let ck = load_checkpoint::<f32>(dir.path(), None).unwrap();
        assert_eq!(ck.model.params, model.params);
        assert_eq!(ck.adam.as_ref().unwrap(), &adam);
        assert_eq!(ck.manifest.step, 1);
        assert_eq!(ck.manifest.train.as_ref(), Some(&cfg));
        assert!(dir.path().join("params/preseq.w.ntsr").exists());
    }

    #[test]
    fn mismatched_config_names_the_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let (model, adam, cfg) = trained_state();
        save_checkpoint(dir.path(), &model, Some(&adam), Some(&cfg), None).unwrap();
        let wider = ModelConfig {
            ffn_dim: 96,
            ..ModelConfig::tiny()
        };
        match load_checkpoint::<f32>(dir.path(), Some(&wider)) {
            Err(Error::Checkpoint { name, detail }) => {
                assert_eq!(name, "layer0.ffn.1.w");
                assert!(detail.contains("[32, 96]"), "{detail}");
            }
            other => panic!("expected a checkpoint error, got {other:?}"),
        }
        fs::remove_file(dir.path().join("params/head.doa.2.b.ntsr")).unwrap();
        match load_checkpoint::<f32>(dir.path(), None) {
            Err(Error::Checkpoint { name, .. }) => assert_eq!(name, "head.doa.2.b"),
            other => panic!("expected a checkpoint error, got {other:?}"),
        }
    }

    #[test]
    fn weights_only_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::<f64>::new(ModelConfig::tiny(), 1).unwrap();
        save_checkpoint(dir.path(), &model, None, None, None).unwrap();
        let ck = load_checkpoint::<f64>(dir.path(), None).unwrap();
        assert!(ck.adam.is_none());
        assert_eq!(ck.model.params, model.params);
    }
}
