use super::attention::{tgsa_attention, tgsa_attention_backward, AttentionCache, AttentionParams};
use super::linalg::{affine, affine_backward, gelu, gelu_grad, layernorm, layernorm_backward, LnCache};
use super::params::{init_store, INIT_STD};
use super::{ModelConfig, ParamStore, Real};
use crate::error::{Error, Result};
use crate::roomsim::Task;

pub const LN_EPS: f64 = 1e-5;

/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(...)`, row-major
/// `frames × d_model`.
pub fn sinusoidal_pe(frames: usize, d_model: usize) -> Vec<f64> {
    let mut pe = vec![0.0; frames * d_model];
    for t in 0..frames {
        for i in 0..d_model {
            let pair = (i / 2) * 2;
            let angle = t as f64 / 10000f64.powf(pair as f64 / d_model as f64);
            pe[t * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    inproj: Option<Linear>,
    ln1_g: usize,
    ln1_b: usize,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    sigma: usize,
    ln2_g: usize,
    ln2_b: usize,
    ffn1: Linear,
    ffn2: Linear,
}

#[derive(Debug, Clone, Copy)]
struct HeadIds {
    l1: Linear,
    l2: Linear,
}

#[derive(Debug, Clone)]
struct Layout {
    preseq: Linear,
    layers: Vec<LayerIds>,
    heads: [HeadIds; 3],
}

/// The three output heads; which ones run depends on the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Mag0,
    Mag1,
    Doa,
}

impl HeadKind {
    fn index(self) -> usize {
        match self {
            HeadKind::Mag0 => 0,
            HeadKind::Mag1 => 1,
            HeadKind::Doa => 2,
        }
    }

    pub fn for_task(task: Task) -> [HeadKind; 2] {
        match task {
            Task::Doa => [HeadKind::Mag0, HeadKind::Doa],
            Task::Separation => [HeadKind::Mag0, HeadKind::Mag1],
        }
    }
}

/// Head outputs, each row-major `frames × dim`. Task 1 fills `mag0` and
/// `doa_logits`; task 2 fills `mag0` and `mag1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs<T> {
    pub frames: usize,
    pub mag0: Vec<T>,
    pub mag1: Option<Vec<T>>,
    pub doa_logits: Option<Vec<T>>,
}

/// Upstream gradients for [`HeadOutputs`]; `None` means zero.
#[derive(Debug, Clone, Default)]
pub struct HeadGrads<T> {
    pub mag0: Option<Vec<T>>,
    pub mag1: Option<Vec<T>>,
    pub doa_logits: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    ln1: LnCache<T>,
    xn1: Vec<T>,
    attn: AttentionCache<T>,
    ln2: LnCache<T>,
    xn2: Vec<T>,
    ffn_pre: Vec<T>,
    ffn_act: Vec<T>,
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    pre: Vec<T>,
    act: Vec<T>,
}

/// Intermediates of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    input: Vec<T>,
    pre: Vec<T>,
    /// Stack outputs `H_0 .. H_L`.
    hs: Vec<Vec<T>>,
    /// Concatenated `[H_0 .. H_l]` fed to each dense input projection.
    concats: Vec<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    heads: [Option<HeadCache<T>>; 3],
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub task: Task,
    pub outputs: HeadOutputs<T>,
    tape: Option<GradTape<T>>,
}

impl<T> ForwardPass<T> {
    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    /// Drop the recorded intermediates.
    pub fn without_tape(mut self) -> Self {
        self.tape = None;
        self
    }
}

/// Parameter gradients in [`ParamStore`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y * scale;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    layout: Layout,
}

fn lin<T: Real>(store: &ParamStore<T>, prefix: &str) -> Result<Linear> {
    let id = |suffix: &str| {
        let name = format!("{prefix}.{suffix}");
        store
            .id(&name)
            .ok_or_else(|| Error::Checkpoint { name, detail: "missing parameter".into() })
    };
    Ok(Linear {
        w: id("w")?,
        b: id("b")?,
    })
}

fn named<T: Real>(store: &ParamStore<T>, name: String) -> Result<usize> {
    store.id(&name).ok_or(Error::Checkpoint {
        name,
        detail: "missing parameter".into(),
    })
}

impl<T: Real> Model<T> {
    /// Fresh model: weights ~ N(0, 0.02²), zero biases, unit layer-norm gains,
    /// every σ at `sigma_init`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init_std(config, seed, INIT_STD)
    }

    pub fn with_init_std(config: ModelConfig, seed: u64, std: f64) -> Result<Self> {
        config.validate()?;
        let params = init_store(&config, seed, std);
        Self::from_params(config, params)
    }

    /// Wrap existing parameters, checking every declared name and shape.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        for (name, shape, _) in super::params::declare(&config) {
            match params.get(&name) {
                None => {
                    return Err(Error::Checkpoint {
                        name,
                        detail: "missing parameter".into(),
                    })
                }
                Some(p) if p.shape != shape => {
                    return Err(Error::Checkpoint {
                        detail: format!("shape {:?}, config expects {shape:?}", p.shape),
                        name,
                    })
                }
                Some(_) => {}
            }
        }
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerIds {
                inproj: if config.dense_variant {
                    Some(lin(&params, &p("inproj"))?)
                } else {
                    None
                },
                ln1_g: named(&params, p("ln1.g"))?,
                ln1_b: named(&params, p("ln1.b"))?,
                q: lin(&params, &p("attn.q"))?,
                k: lin(&params, &p("attn.k"))?,
                v: lin(&params, &p("attn.v"))?,
                o: lin(&params, &p("attn.o"))?,
                sigma: named(&params, p("attn.sigma"))?,
                ln2_g: named(&params, p("ln2.g"))?,
                ln2_b: named(&params, p("ln2.b"))?,
                ffn1: lin(&params, &p("ffn.1"))?,
                ffn2: lin(&params, &p("ffn.2"))?,
            });
        }
        let head = |h: &str| -> Result<HeadIds> {
            Ok(HeadIds {
                l1: lin(&params, &format!("head.{h}.1"))?,
                l2: lin(&params, &format!("head.{h}.2"))?,
            })
        };
        let layout = Layout {
            preseq: lin(&params, "preseq")?,
            layers,
            heads: [head("mag0")?, head("mag1")?, head("doa")?],
        };
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn p(&self, id: usize) -> &[T] {
        &self.params.at(id).data
    }

    fn attn_params(&self, ids: &LayerIds) -> AttentionParams<'_, T> {
        AttentionParams {
            wq: self.p(ids.q.w),
            bq: self.p(ids.q.b),
            wk: self.p(ids.k.w),
            bk: self.p(ids.k.b),
            wv: self.p(ids.v.w),
            bv: self.p(ids.v.b),
            wo: self.p(ids.o.w),
            bo: self.p(ids.o.b),
            sigma: self.p(ids.sigma),
        }
    }

    /// Affine projection, GELU, then the positional encoding. Returns the
    /// pre-activation and `H_0`.
    pub fn preseq(&self, input: &[T], frames: usize) -> Result<(Vec<T>, Vec<T>)> {
        if input.len() != frames * self.config.in_dim {
            return Err(Error::Shape(format!(
                "model input has {} values, expected {frames} × {}",
                input.len(),
                self.config.in_dim
            )));
        }
        let pre = affine(input, frames, self.p(self.layout.preseq.w), self.p(self.layout.preseq.b));
        let pe = sinusoidal_pe(frames, self.config.d_model);
        let h0 = pre.iter().zip(&pe).map(|(v, e)| gelu(*v) + T::cast(*e)).collect();
        Ok((pre, h0))
    }

    fn layer_forward(&self, ids: &LayerIds, x: &[T], frames: usize) -> (Vec<T>, LayerCache<T>) {
        let d = self.config.d_model;
        let (xn1, ln1) = layernorm(x, d, self.p(ids.ln1_g), self.p(ids.ln1_b), LN_EPS);
        let (att, attn) = tgsa_attention(&xn1, frames, self.config.n_heads, &self.attn_params(ids), true);
        let x1: Vec<T> = x.iter().zip(&att).map(|(a, b)| *a + *b).collect();
        let (xn2, ln2) = layernorm(&x1, d, self.p(ids.ln2_g), self.p(ids.ln2_b), LN_EPS);
        let ffn_pre = affine(&xn2, frames, self.p(ids.ffn1.w), self.p(ids.ffn1.b));
        let ffn_act: Vec<T> = ffn_pre.iter().map(|v| gelu(*v)).collect();
        let ffn_out = affine(&ffn_act, frames, self.p(ids.ffn2.w), self.p(ids.ffn2.b));
        let out = x1.iter().zip(&ffn_out).map(|(a, b)| *a + *b).collect();
        (
            out,
            LayerCache {
                ln1,
                xn1,
                attn,
                ln2,
                xn2,
                ffn_pre,
                ffn_act,
            },
        )
    }

    /// One pre-norm transformer layer applied to `x: frames × d_model`.
    pub fn transformer_layer(&self, layer: usize, x: &[T], frames: usize) -> Vec<T> {
        self.layer_forward(&self.layout.layers[layer], x, frames).0
    }

    fn head_forward(&self, kind: HeadKind, h: &[T], frames: usize) -> (Vec<T>, HeadCache<T>) {
        let ids = self.layout.heads[kind.index()];
        let pre = affine(h, frames, self.p(ids.l1.w), self.p(ids.l1.b));
        let act: Vec<T> = pre.iter().map(|v| gelu(*v)).collect();
        let out = affine(&act, frames, self.p(ids.l2.w), self.p(ids.l2.b));
        (out, HeadCache { pre, act })
    }

    /// Full pipeline on `input: frames × in_dim`. With `record` the pass keeps
    /// a tape for [`Model::backward`].
    pub fn forward(&self, input: &[T], frames: usize, task: Task, record: bool) -> Result<ForwardPass<T>> {
        if frames == 0 {
            return Err(Error::Empty("model input has no frames".into()));
        }
        let (pre, h0) = self.preseq(input, frames)?;
        let mut hs = vec![h0];
        let mut concats = Vec::new();
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for ids in &self.layout.layers {
            let x = match ids.inproj {
                Some(proj) => {
                    let concat = concat_rows(&hs, frames);
                    let x = affine(&concat, frames, self.p(proj.w), self.p(proj.b));
                    if record {
                        concats.push(concat);
                    }
                    x
                }
                None => hs.last().expect("h0 present").clone(),
            };
            let (out, cache) = self.layer_forward(ids, &x, frames);
            if record {
                layers.push(cache);
            }
            hs.push(out);
        }
        let h = hs.last().expect("stack output");
        let mut heads: [Option<HeadCache<T>>; 3] = [None, None, None];
        let mut outs: [Option<Vec<T>>; 3] = [None, None, None];
        for kind in HeadKind::for_task(task) {
            let (out, cache) = self.head_forward(kind, h, frames);
            outs[kind.index()] = Some(out);
            heads[kind.index()] = Some(cache);
        }
        let [mag0, mag1, doa_logits] = outs;
        let outputs = HeadOutputs {
            frames,
            mag0: mag0.expect("mag0 runs for every task"),
            mag1,
            doa_logits,
        };
        let tape = record.then(|| GradTape {
            input: input.to_vec(),
            pre,
            hs,
            concats,
            layers,
            heads,
        });
        Ok(ForwardPass {
            task,
            outputs,
            tape,
        })
    }

    fn layer_backward(&self, ids: &LayerIds, cache: &LayerCache<T>, dout: &[T], frames: usize, g: &mut [Vec<T>]) -> Vec<T> {
        let mut dffn_act = {
            let (dw, db) = two_mut(g, ids.ffn2.w, ids.ffn2.b);
            affine_backward(dout, &cache.ffn_act, frames, self.p(ids.ffn2.w), dw, db)
        };
        for (d, x) in dffn_act.iter_mut().zip(&cache.ffn_pre) {
            *d *= gelu_grad(*x);
        }
        let dxn2 = {
            let (dw, db) = two_mut(g, ids.ffn1.w, ids.ffn1.b);
            affine_backward(&dffn_act, &cache.xn2, frames, self.p(ids.ffn1.w), dw, db)
        };
        let dx1_ln = {
            let (dg, db) = two_mut(g, ids.ln2_g, ids.ln2_b);
            layernorm_backward(&dxn2, &cache.ln2, self.p(ids.ln2_g), dg, db)
        };
        let dx1: Vec<T> = dout.iter().zip(&dx1_ln).map(|(a, b)| *a + *b).collect();
        let (dxn1, ag) = tgsa_attention_backward(
            &dx1,
            &cache.xn1,
            frames,
            self.config.n_heads,
            &self.attn_params(ids),
            &cache.attn,
            true,
        );
        for (id, part) in [
            (ids.q.w, ag.wq),
            (ids.q.b, ag.bq),
            (ids.k.w, ag.wk),
            (ids.k.b, ag.bk),
            (ids.v.w, ag.wv),
            (ids.v.b, ag.bv),
            (ids.o.w, ag.wo),
            (ids.o.b, ag.bo),
            (ids.sigma, ag.sigma),
        ] {
            add_into(&mut g[id], &part);
        }
        let dx_ln = {
            let (dg, db) = two_mut(g, ids.ln1_g, ids.ln1_b);
            layernorm_backward(&dxn1, &cache.ln1, self.p(ids.ln1_g), dg, db)
        };
        dx1.iter().zip(&dx_ln).map(|(a, b)| *a + *b).collect()
    }

    /// Exact reverse-mode gradients of `Σ upstream · outputs` with respect to
    /// every parameter.
    pub fn backward(&self, pass: &ForwardPass<T>, upstream: &HeadGrads<T>) -> Result<Gradients<T>> {
        let tape = pass.tape.as_ref().ok_or(Error::MissingTape)?;
        let frames = pass.outputs.frames;
        let d = self.config.d_model;
        let mut g = self.params.zeros_like();
        let h = tape.hs.last().expect("stack output");
        let mut dh = vec![T::zero(); frames * d];
        for (kind, grad, dim) in [
            (HeadKind::Mag0, &upstream.mag0, self.config.out_mag_dim),
            (HeadKind::Mag1, &upstream.mag1, self.config.out_mag_dim),
            (HeadKind::Doa, &upstream.doa_logits, self.config.n_doa_classes),
        ] {
            let Some(grad) = grad else { continue };
            let Some(cache) = &tape.heads[kind.index()] else {
                return Err(Error::Shape(format!("{kind:?} gradient given but the head did not run")));
            };
            if grad.len() != frames * dim {
                return Err(Error::Shape(format!(
                    "{kind:?} gradient has {} values, expected {frames} × {dim}",
                    grad.len()
                )));
            }
            let ids = self.layout.heads[kind.index()];
            let mut dact = {
                let (dw, db) = two_mut(&mut g, ids.l2.w, ids.l2.b);
                affine_backward(grad, &cache.act, frames, self.p(ids.l2.w), dw, db)
            };
            for (dv, x) in dact.iter_mut().zip(&cache.pre) {
                *dv *= gelu_grad(*x);
            }
            let dpart = {
                let (dw, db) = two_mut(&mut g, ids.l1.w, ids.l1.b);
                affine_backward(&dact, h, frames, self.p(ids.l1.w), dw, db)
            };
            add_into(&mut dh, &dpart);
        }
        let n_layers = self.config.n_layers;
        let mut dhs: Vec<Vec<T>> = vec![vec![T::zero(); frames * d]; n_layers + 1];
        dhs[n_layers] = dh;
        for l in (0..n_layers).rev() {
            let ids = self.layout.layers[l];
            let dout = std::mem::take(&mut dhs[l + 1]);
            let dx = self.layer_backward(&ids, &tape.layers[l], &dout, frames, &mut g);
            match ids.inproj {
                Some(proj) => {
                    let dconcat = {
                        let (dw, db) = two_mut(&mut g, proj.w, proj.b);
                        affine_backward(&dx, &tape.concats[l], frames, self.p(proj.w), dw, db)
                    };
                    let width = (l + 1) * d;
                    for t in 0..frames {
                        for (i, dst) in dhs.iter_mut().take(l + 1).enumerate() {
                            let src = &dconcat[t * width + i * d..t * width + (i + 1) * d];
                            for (a, b) in dst[t * d..(t + 1) * d].iter_mut().zip(src) {
                                *a += *b;
                            }
                        }
                    }
                }
                None => add_into(&mut dhs[l], &dx),
            }
        }
        let mut dpre = std::mem::take(&mut dhs[0]);
        for (dv, x) in dpre.iter_mut().zip(&tape.pre) {
            *dv *= gelu_grad(*x);
        }
        {
            let ids = self.layout.preseq;
            let (dw, db) = two_mut(&mut g, ids.w, ids.b);
            affine_backward(&dpre, &tape.input, frames, self.p(ids.w), dw, db);
        }
        Ok(Gradients { tensors: g })
    }

    /// Cast parameters to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Indices of the per-head σ tensors.
    pub(crate) fn sigma_ids(&self) -> Vec<usize> {
        self.layout.layers.iter().map(|l| l.sigma).collect()
    }
}

fn concat_rows<T: Real>(hs: &[Vec<T>], frames: usize) -> Vec<T> {
    let d = hs[0].len() / frames;
    let mut out = Vec::with_capacity(frames * d * hs.len());
    for t in 0..frames {
        for h in hs {
            out.extend_from_slice(&h[t * d..(t + 1) * d]);
        }
    }
    out
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += *b;
    }
}

/// Two distinct mutable entries of a gradient list.
fn two_mut<T>(g: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = g.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = g.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{grad_check, grad_check_with, parameter_count};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::time::Instant;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn tiny_model(seed: u64) -> Model<f64> {
        Model::with_init_std(ModelConfig::tiny(), seed, 0.2).unwrap()
    }

    #[test]
    fn positional_encoding_values() {
        let pe = sinusoidal_pe(4, 16);
        for i in 0..16 {
            assert_eq!(pe[i], if i % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe[16] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[16] - 0.8415).abs() < 1e-4);
        assert!(sinusoidal_pe(60, 32).iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn preseq_of_zero_input_is_the_encoding() {
        let mut m = tiny_model(1);
        let x = vec![0.0; 5 * 24];
        let (_, h0) = m.preseq(&x, 5).unwrap();
        assert_eq!(h0, sinusoidal_pe(5, 32));
        let x = random(5 * 24, 2);
        let (pre1, h1) = m.preseq(&x, 5).unwrap();
        m.params.get_mut("preseq.w").unwrap().data.iter_mut().for_each(|v| *v *= 2.0);
        let (pre2, h2) = m.preseq(&x, 5).unwrap();
        assert_ne!(pre1, pre2);
        let pe = sinusoidal_pe(5, 32);
        for ((p1, p2), ((a, b), e)) in pre1.iter().zip(&pre2).zip(h1.iter().zip(&h2).zip(&pe)) {
            assert!((a - gelu(*p1) - e).abs() < 1e-12);
            assert!((b - gelu(*p2) - e).abs() < 1e-12);
        }
        assert!(m.preseq(&x[1..], 5).is_err());
    }

    #[test]
    fn zeroed_output_projections_make_layer_identity() {
        let mut m = tiny_model(3);
        for name in ["layer0.attn.o.w", "layer0.attn.o.b", "layer0.ffn.2.w", "layer0.ffn.2.b"] {
            m.params.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random(7 * 32, 4);
        let y = m.transformer_layer(0, &x, 7);
        assert_eq!(x, y);
    }

    #[test]
    fn head_permutation_leaves_layer_unchanged() {
        let m = tiny_model(5);
        let x = random(6 * 32, 6);
        let y = m.transformer_layer(0, &x, 6);
        let mut p = m.clone();
        p.params.get_mut("layer0.attn.sigma").unwrap().data = vec![7.0, 2.0];
        let mut base = m.clone();
        base.params.get_mut("layer0.attn.sigma").unwrap().data = vec![2.0, 7.0];
        let y_base = base.transformer_layer(0, &x, 6);
        assert_ne!(y, y_base);
        let (d, dh) = (32, 16);
        let swap_cols = |data: &mut Vec<f64>, rows: usize| {
            for r in 0..rows {
                for c in 0..dh {
                    data.swap(r * d + c, r * d + dh + c);
                }
            }
        };
        for w in ["q", "k", "v"] {
            swap_cols(&mut p.params.get_mut(&format!("layer0.attn.{w}.w")).unwrap().data, d);
            swap_cols(&mut p.params.get_mut(&format!("layer0.attn.{w}.b")).unwrap().data, 1);
        }
        let wo = &mut p.params.get_mut("layer0.attn.o.w").unwrap().data;
        for r in 0..dh {
            for c in 0..d {
                wo.swap(r * d + c, (dh + r) * d + c);
            }
        }
        let y_perm = p.transformer_layer(0, &x, 6);
        let diff = y_base.iter().zip(&y_perm).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn single_layer_dense_equals_plain_with_identity_projection() {
        let plain_cfg = ModelConfig {
            n_layers: 1,
            ..ModelConfig::tiny()
        };
        let dense_cfg = ModelConfig {
            dense_variant: true,
            ..plain_cfg.clone()
        };
        let plain = Model::<f64>::with_init_std(plain_cfg, 8, 0.2).unwrap();
        let mut dense = Model::<f64>::with_init_std(dense_cfg, 8, 0.2).unwrap();
        for p in plain.params.iter() {
            dense.params.get_mut(&p.name).unwrap().data = p.data.clone();
        }
        let w = &mut dense.params.get_mut("layer0.inproj.w").unwrap().data;
        w.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..32 {
            w[i * 32 + i] = 1.0;
        }
        let x = random(6 * 24, 9);
        let a = plain.forward(&x, 6, Task::Doa, false).unwrap();
        let b = dense.forward(&x, 6, Task::Doa, false).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn dense_config_has_fewer_parameters() {
        let full = parameter_count(&ModelConfig::full());
        let dense = parameter_count(&ModelConfig::full_dense());
        assert!(dense < full, "{dense} vs {full}");
    }

    #[test]
    fn full_size_shapes() {
        let m = Model::<f32>::new(ModelConfig::full(), 0).unwrap();
        assert_eq!(m.num_parameters(), parameter_count(&m.config));
        let x = vec![0.1f32; 52 * 1920];
        let t1 = m.forward(&x, 52, Task::Doa, false).unwrap();
        assert_eq!(t1.outputs.mag0.len(), 52 * 960);
        assert_eq!(t1.outputs.doa_logits.as_ref().unwrap().len(), 52 * 72);
        assert!(t1.outputs.mag1.is_none());
        let (_, h0) = m.preseq(&x, 52).unwrap();
        assert_eq!(h0.len(), 52 * 768);
        let t2 = m.forward(&x, 52, Task::Separation, false).unwrap();
        assert_eq!(t2.outputs.mag1.as_ref().unwrap().len(), 52 * 960);
        assert!(t2.outputs.doa_logits.is_none());
        assert!(m.forward(&x[..100], 52, Task::Doa, false).is_err());
    }

    #[test]
    fn heads_are_independent_and_zero_preserving() {
        let mut m = tiny_model(10);
        let x = random(5 * 24, 11);
        let before = m.forward(&x, 5, Task::Separation, false).unwrap().outputs;
        m.params.get_mut("head.mag0.2.w").unwrap().data[3] += 0.5;
        let after = m.forward(&x, 5, Task::Separation, false).unwrap().outputs;
        assert_ne!(before.mag0, after.mag0);
        assert_eq!(before.mag1, after.mag1);
        let h = vec![0.0; 5 * 32];
        for kind in [HeadKind::Mag0, HeadKind::Mag1, HeadKind::Doa] {
            let (out, _) = m.head_forward(kind, &h, 5);
            assert!(out.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn forward_is_deterministic_and_fast() {
        let m = Model::<f64>::new(ModelConfig::tiny(), 12).unwrap();
        let x = random(8 * 24, 13);
        let a = m.forward(&x, 8, Task::Doa, false).unwrap();
        let b = m.forward(&x, 8, Task::Doa, false).unwrap();
        assert_eq!(a.outputs, b.outputs);
        let start = Instant::now();
        m.forward(&x, 8, Task::Doa, false).unwrap();
        assert!(start.elapsed().as_millis() < 10);
    }

    #[test]
    fn backward_edge_cases() {
        let m = tiny_model(14);
        let x = random(4 * 24, 15);
        let pass = m.forward(&x, 4, Task::Doa, false).unwrap();
        assert!(matches!(m.backward(&pass, &HeadGrads::default()), Err(Error::MissingTape)));
        let pass = m.forward(&x, 4, Task::Doa, true).unwrap();
        let zero = HeadGrads {
            mag0: Some(vec![0.0; 4 * 12]),
            mag1: None,
            doa_logits: Some(vec![0.0; 4 * 72]),
        };
        let g = m.backward(&pass, &zero).unwrap();
        assert!(g.tensors.iter().flatten().all(|v| *v == 0.0));
        let up = HeadGrads {
            mag0: Some(random(4 * 12, 16)),
            mag1: None,
            doa_logits: Some(random(4 * 72, 17)),
        };
        let g = m.backward(&pass, &up).unwrap();
        for p in ["head.mag1.1.w", "head.mag1.1.b", "head.mag1.2.w", "head.mag1.2.b"] {
            let id = m.params.id(p).unwrap();
            assert!(g.tensors[id].iter().all(|v| *v == 0.0));
        }
        let sigma = m.params.id("layer1.attn.sigma").unwrap();
        assert!(g.tensors[sigma].iter().all(|v| *v != 0.0));
        let bad = HeadGrads {
            mag1: Some(vec![0.0; 4 * 12]),
            ..Default::default()
        };
        assert!(m.backward(&pass, &bad).is_err());
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let report = grad_check(&ModelConfig::tiny(), 21).unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
        assert_eq!(report.checked, parameter_count(&ModelConfig::tiny()));
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let cfg = ModelConfig {
            dense_variant: true,
            ..ModelConfig::tiny()
        };
        let report = grad_check_with(&cfg, 22, 5, |_, _| {}).unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn corrupted_sigma_gradient_is_flagged() {
        let cfg = ModelConfig {
            n_layers: 1,
            ..ModelConfig::tiny()
        };
        let tamper = |name: &str, g: &mut [f64]| {
            if name.ends_with("attn.sigma") {
                g.iter_mut().for_each(|v| *v = -*v);
            }
        };
        let a = grad_check_with(&cfg, 23, 4, tamper).unwrap();
        assert_eq!(a.worst_param, "layer0.attn.sigma");
        let b = grad_check_with(&cfg, 23, 4, tamper).unwrap();
        assert_eq!(a, b);
    }
}
