use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, softmax_rows, LoraParams, ProjectorParams};
use super::store::{ParamGroup, ParamStore};
use super::{LoraConfig, MllmError, ModelConfig, Result, BOS, EOS};
use crate::audio::TokenGrid;

const ADAPTED: [&str; 4] = ["wq", "wk", "wv", "wo"];

#[derive(Debug, Clone, Copy, PartialEq)]
struct LoraIds {
    a: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockIds {
    ln1_g: usize,
    ln1_b: usize,
    /// wq, wk, wv, wo
    attn: [usize; 4],
    lora: Option<[LoraIds; 4]>,
    ln2_g: usize,
    ln2_b: usize,
    w_up: usize,
    b_up: usize,
    w_down: usize,
    b_down: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Ids {
    tok_emb: usize,
    pos_emb: usize,
    enc_w: usize,
    enc_b: usize,
    proj: [usize; 4],
    blocks: Vec<BlockIds>,
    lnf_g: usize,
    lnf_b: usize,
    head: usize,
}

impl Ids {
    fn resolve(p: &ParamStore, n_layers: usize, with_lora: bool) -> Result<Self> {
        let blocks = (0..n_layers)
            .map(|i| {
                let id = |n: &str| p.id(&format!("blocks.{i}.{n}"));
                let lora = if with_lora {
                    let mut ids = [LoraIds { a: 0, b: 0 }; 4];
                    for (slot, w) in ids.iter_mut().zip(ADAPTED) {
                        *slot = LoraIds { a: id(&format!("lora.{w}.a"))?, b: id(&format!("lora.{w}.b"))? };
                    }
                    Some(ids)
                } else {
                    None
                };
                Ok(BlockIds {
                    ln1_g: id("ln1_g")?,
                    ln1_b: id("ln1_b")?,
                    attn: [id("wq")?, id("wk")?, id("wv")?, id("wo")?],
                    lora,
                    ln2_g: id("ln2_g")?,
                    ln2_b: id("ln2_b")?,
                    w_up: id("w_up")?,
                    b_up: id("b_up")?,
                    w_down: id("w_down")?,
                    b_down: id("b_down")?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            tok_emb: p.id("tok_emb")?,
            pos_emb: p.id("pos_emb")?,
            enc_w: p.id("enc_w")?,
            enc_b: p.id("enc_b")?,
            proj: [p.id("projector.w1")?, p.id("projector.b1")?, p.id("projector.w2")?, p.id("projector.b2")?],
            blocks,
            lnf_g: p.id("lnf_g")?,
            lnf_b: p.id("lnf_b")?,
            head: p.id("head")?,
        })
    }
}

/// Decoder-only byte LM that reads a projected music prefix before the text.
///
/// Music tokens are raw (optionally pooled) mel patches; a frozen linear
/// encoder stub maps them to `encoder_dim`, the projector maps those to
/// `d_model`, and the result is prepended to the text embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyModel {
    config: ModelConfig,
    params: ParamStore,
    ids: Ids,
    lora: Option<LoraConfig>,
}

/// One training sequence: the text fed to the model and, for each position,
/// the supervised next token if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub tokens: Vec<u32>,
    pub labels: Vec<Option<u32>>,
}

impl Sequence {
    /// `[BOS] prompt target` as input; the target bytes and the closing EOS
    /// are supervised, prompt predictions are masked.
    pub fn from_prompt_target(prompt: &[u32], target: &[u32]) -> Self {
        Self::with_context(&[], prompt, target)
    }

    /// `context [BOS] prompt target`, supervised like
    /// [`Sequence::from_prompt_target`]. Text-only pretraining puts
    /// descriptor text where the music prefix sits during stage training.
    pub fn with_context(context: &[u32], prompt: &[u32], target: &[u32]) -> Self {
        let mut tokens = Vec::with_capacity(context.len() + 1 + prompt.len() + target.len());
        tokens.extend_from_slice(context);
        tokens.push(BOS);
        tokens.extend_from_slice(prompt);
        tokens.extend_from_slice(target);
        let labels = (0..tokens.len())
            .map(|t| {
                if t < context.len() + prompt.len() {
                    None
                } else if t + 1 < tokens.len() {
                    Some(tokens[t + 1])
                } else {
                    Some(EOS)
                }
            })
            .collect();
        Self { tokens, labels }
    }

    pub fn n_supervised(&self) -> usize {
        self.labels.iter().flatten().count()
    }
}

struct AdapterView<'a> {
    a: ArrayView2<'a, f64>,
    b: ArrayView2<'a, f64>,
    scale: f64,
}

/// `x W^T (+ scale (x A^T) B^T)`; also returns `x A^T` for the backward pass.
fn linear(x: &Array2<f64>, w: ArrayView2<f64>, lora: Option<&AdapterView>) -> (Array2<f64>, Option<Array2<f64>>) {
    let mut y = x.dot(&w.t());
    let ax = lora.map(|l| {
        let ax = x.dot(&l.a.t());
        y.scaled_add(l.scale, &ax.dot(&l.b.t()));
        ax
    });
    (y, ax)
}

struct BlockCache {
    ln1_xhat: Array2<f64>,
    ln1_inv: Array1<f64>,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// `x A^T` for q, k, v, o when adapters are attached
    ax: [Option<Array2<f64>>; 4],
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    ln2_xhat: Array2<f64>,
    ln2_inv: Array1<f64>,
    up_pre: Array2<f64>,
}

struct ForwardCache {
    n_music: usize,
    music: Array2<f64>,
    text: Vec<u32>,
    enc: Array2<f64>,
    proj_pre: Array2<f64>,
    blocks: Vec<BlockCache>,
    lnf_xhat: Array2<f64>,
    lnf_inv: Array1<f64>,
}

impl TinyModel {
    /// Randomly initialized model without adapters.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut p = ParamStore::default();
        let d = c.d_model;
        let mut uni = |p: &mut ParamStore, name: &str, group, shape: &[usize], std: f64| {
            let a = 3f64.sqrt() * std;
            p.add(name, group, shape, || rng.random_range(-a..a));
        };
        let base = ParamGroup::Base;
        uni(&mut p, "tok_emb", base, &[c.vocab_size, d], 1.0);
        uni(&mut p, "pos_emb", base, &[c.max_context, d], 0.1);
        uni(&mut p, "enc_w", base, &[c.patch_dim, c.encoder_dim], 1.0 / (c.patch_dim as f64).sqrt());
        p.add("enc_b", base, &[c.encoder_dim], || 0.0);
        let proj = ParamGroup::Projector;
        uni(&mut p, "projector.w1", proj, &[c.encoder_dim, c.proj_hidden], 1.0 / (c.encoder_dim as f64).sqrt());
        p.add("projector.b1", proj, &[c.proj_hidden], || 0.0);
        uni(&mut p, "projector.w2", proj, &[c.proj_hidden, d], 1.0 / (c.proj_hidden as f64).sqrt());
        p.add("projector.b2", proj, &[d], || 0.0);
        let resid = 1.0 / (2.0 * c.n_layers as f64).sqrt();
        for i in 0..c.n_layers {
            let n = |s: &str| format!("blocks.{i}.{s}");
            p.add(&n("ln1_g"), base, &[d], || 1.0);
            p.add(&n("ln1_b"), base, &[d], || 0.0);
            for w in ADAPTED {
                let std = if w == "wo" { resid } else { 1.0 } / (d as f64).sqrt();
                uni(&mut p, &n(w), base, &[d, d], std);
            }
            p.add(&n("ln2_g"), base, &[d], || 1.0);
            p.add(&n("ln2_b"), base, &[d], || 0.0);
            uni(&mut p, &n("w_up"), base, &[4 * d, d], 1.0 / (d as f64).sqrt());
            p.add(&n("b_up"), base, &[4 * d], || 0.0);
            uni(&mut p, &n("w_down"), base, &[d, 4 * d], resid / (4.0 * d as f64).sqrt());
            p.add(&n("b_down"), base, &[d], || 0.0);
        }
        p.add("lnf_g", base, &[d], || 1.0);
        p.add("lnf_b", base, &[d], || 0.0);
        uni(&mut p, "head", base, &[c.vocab_size, d], 1.0 / (d as f64).sqrt());
        let ids = Ids::resolve(&p, c.n_layers, false)?;
        Ok(Self { config, params: p, ids, lora: None })
    }

    /// Reassembles a model from a parameter store, e.g. a loaded checkpoint.
    pub fn from_store(config: ModelConfig, params: ParamStore, lora: Option<LoraConfig>) -> Result<Self> {
        config.validate()?;
        if config.param_count(lora) != Some(params.len()) {
            return Err(MllmError::Checkpoint(format!(
                "{} parameters do not match the configured model size",
                params.len()
            )));
        }
        let ids = Ids::resolve(&params, config.n_layers, lora.is_some())?;
        let reference = {
            let mut m = Self::new(config.clone())?;
            if let Some(l) = lora {
                m.attach_lora(l, 0)?;
            }
            m
        };
        for m in reference.params.metas() {
            let got = params.meta(params.id(&m.name)?);
            if got.shape != m.shape || got.group != m.group {
                return Err(MllmError::Checkpoint(format!("tensor `{}` has the wrong shape or group", m.name)));
            }
        }
        if params.metas().len() != reference.params.metas().len() {
            return Err(MllmError::Checkpoint("unexpected extra tensors".into()));
        }
        if params.data.iter().any(|v| !v.is_finite()) {
            return Err(MllmError::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self { config, params, ids, lora })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn lora_config(&self) -> Option<LoraConfig> {
        self.lora
    }

    pub fn group_hash(&self, group: ParamGroup) -> String {
        self.params.group_hash(group)
    }

    /// Adds zero-initialized-B adapters to every attention projection.
    pub fn attach_lora(&mut self, cfg: LoraConfig, seed: u64) -> Result<()> {
        cfg.validate()?;
        if self.lora.is_some() {
            return Err(MllmError::StageMismatch("LoRA adapters are already attached".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4c4f_5241);
        let d = self.config.d_model;
        let bound = 0.01 / (d as f64).sqrt();
        for i in 0..self.config.n_layers {
            for w in ADAPTED {
                self.params.add(&format!("blocks.{i}.lora.{w}.a"), ParamGroup::Lora, &[cfg.r, d], || {
                    rng.random_range(-bound..bound)
                });
                self.params.add(&format!("blocks.{i}.lora.{w}.b"), ParamGroup::Lora, &[d, cfg.r], || 0.0);
            }
        }
        self.ids = Ids::resolve(&self.params, self.config.n_layers, true)?;
        self.lora = Some(cfg);
        Ok(())
    }

    /// Copy with every adapter folded into its base matrix and removed.
    pub fn merged(&self) -> Result<Self> {
        let Some(cfg) = self.lora else {
            return Ok(self.clone());
        };
        let mut base = self.params.filtered(|m| m.group != ParamGroup::Lora);
        for (i, b) in self.ids.blocks.iter().enumerate() {
            let ids = b.lora.expect("adapters attached");
            for (k, w) in ADAPTED.iter().enumerate() {
                let merged = super::merge_lora(&self.params.view2(b.attn[k]).to_owned(), &self.lora_params_at(ids[k], cfg))?;
                let id = base.id(&format!("blocks.{i}.{w}"))?;
                base.slice_mut(id).copy_from_slice(merged.as_slice().expect("standard layout"));
            }
        }
        Self::from_store(self.config.clone(), base, None)
    }

    fn lora_params_at(&self, ids: LoraIds, cfg: LoraConfig) -> LoraParams {
        LoraParams { a: self.params.view2(ids.a).to_owned(), b: self.params.view2(ids.b).to_owned(), alpha: cfg.alpha }
    }

    /// Adapter on `wq`/`wk`/`wv`/`wo` (index 0..4) of a block.
    pub fn lora_params(&self, block: usize, which: usize) -> Option<LoraParams> {
        let cfg = self.lora?;
        let ids = self.ids.blocks.get(block)?.lora?;
        Some(self.lora_params_at(*ids.get(which)?, cfg))
    }

    pub fn projector_params(&self) -> ProjectorParams {
        let [w1, b1, w2, b2] = self.ids.proj;
        ProjectorParams {
            w1: self.params.view2(w1).to_owned(),
            b1: self.params.view1(b1).to_owned(),
            w2: self.params.view2(w2).to_owned(),
            b2: self.params.view1(b2).to_owned(),
        }
    }

    fn adapter(&self, block: &BlockIds, k: usize) -> Option<AdapterView<'_>> {
        let ids = block.lora?[k];
        let cfg = self.lora?;
        Some(AdapterView { a: self.params.view2(ids.a), b: self.params.view2(ids.b), scale: cfg.scale() })
    }

    fn check_inputs(&self, music: &TokenGrid, text: &[u32]) -> Result<()> {
        if music.dim() != self.config.patch_dim {
            return Err(MllmError::Shape(format!(
                "music token dim: expected {}, got {}",
                self.config.patch_dim,
                music.dim()
            )));
        }
        let total = music.n_tokens() + text.len();
        if total > self.config.max_context {
            return Err(MllmError::ContextOverflow { needed: total, max: self.config.max_context });
        }
        if let Some(&t) = text.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(MllmError::Shape(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    fn forward_cached(&self, music: &TokenGrid, text: &[u32]) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_inputs(music, text)?;
        let p = &self.params;
        let c = &self.config;
        let n_m = music.n_tokens();
        let len = n_m + text.len();
        let d = c.d_model;

        let m = ArrayView2::from_shape((n_m, music.dim()), music.data()).map_err(|e| MllmError::Shape(e.to_string()))?;
        let enc = m.dot(&p.view2(self.ids.enc_w)) + &p.view1(self.ids.enc_b);
        let [w1, b1, w2, b2] = self.ids.proj;
        let proj_pre = enc.dot(&p.view2(w1)) + &p.view1(b1);
        let prefix = proj_pre.mapv(gelu).dot(&p.view2(w2)) + &p.view1(b2);

        let mut x = Array2::zeros((len, d));
        x.slice_mut(s![..n_m, ..]).assign(&prefix);
        let emb = p.view2(self.ids.tok_emb);
        for (t, &tok) in text.iter().enumerate() {
            x.row_mut(n_m + t).assign(&emb.row(tok as usize));
        }
        x += &p.view2(self.ids.pos_emb).slice(s![..len, ..]);

        let mut blocks = Vec::with_capacity(self.ids.blocks.len());
        for b in &self.ids.blocks {
            let (out, cache) = self.block_forward(b, x);
            x = out;
            blocks.push(cache);
        }
        let (y, lnf_xhat, lnf_inv) = layer_norm(&x, &p.view1(self.ids.lnf_g).to_owned(), &p.view1(self.ids.lnf_b).to_owned());
        let text_out = y.slice(s![n_m.., ..]).to_owned();
        let logits = text_out.dot(&p.view2(self.ids.head).t());
        Ok((logits, ForwardCache { n_music: n_m, music: m.to_owned(), text: text.to_vec(), enc, proj_pre, blocks, lnf_xhat, lnf_inv }))
    }

    fn block_forward(&self, b: &BlockIds, x: Array2<f64>) -> (Array2<f64>, BlockCache) {
        let p = &self.params;
        let (len, d) = x.dim();
        let nh = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let (h1, ln1_xhat, ln1_inv) = layer_norm(&x, &p.view1(b.ln1_g).to_owned(), &p.view1(b.ln1_b).to_owned());
        let (q, aq) = linear(&h1, p.view2(b.attn[0]), self.adapter(b, 0).as_ref());
        let (k, ak) = linear(&h1, p.view2(b.attn[1]), self.adapter(b, 1).as_ref());
        let (v, av) = linear(&h1, p.view2(b.attn[2]), self.adapter(b, 2).as_ref());

        let mut attn = Array2::zeros((len, d));
        let mut probs = Vec::with_capacity(nh);
        for h in 0..nh {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for i in 0..len {
                for j in i + 1..len {
                    sc[[i, j]] = f64::NEG_INFINITY;
                }
            }
            softmax_rows(&mut sc);
            attn.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
            probs.push(sc);
        }
        let (o, ao) = linear(&attn, p.view2(b.attn[3]), self.adapter(b, 3).as_ref());
        let x_mid = x + &o;

        let (h2, ln2_xhat, ln2_inv) = layer_norm(&x_mid, &p.view1(b.ln2_g).to_owned(), &p.view1(b.ln2_b).to_owned());
        let up_pre = h2.dot(&p.view2(b.w_up).t()) + &p.view1(b.b_up);
        let down = up_pre.mapv(gelu).dot(&p.view2(b.w_down).t()) + &p.view1(b.b_down);
        let out = x_mid + &down;
        let cache = BlockCache {
            ln1_xhat,
            ln1_inv,
            h1,
            q,
            k,
            v,
            ax: [aq, ak, av, ao],
            probs,
            attn,
            ln2_xhat,
            ln2_inv,
            up_pre,
        };
        (out, cache)
    }

    /// Logits over the text positions, `(text_len, vocab_size)`.
    pub fn forward(&self, music: &TokenGrid, text: &[u32]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(music, text)?.0)
    }

    /// Summed masked cross-entropy and the number of supervised tokens.
    pub fn sequence_loss(&self, music: &TokenGrid, seq: &Sequence) -> Result<(f64, usize)> {
        let logits = self.forward(music, &seq.tokens)?;
        Ok(masked_ce(&logits, &seq.labels, None))
    }

    /// Adds `weight * d(loss_sum)/d(theta)` for the projector and adapters
    /// into `grads` (same layout as the parameter store) and returns the
    /// summed loss and supervised-token count. Base entries stay untouched.
    pub fn accumulate_gradients(&self, music: &TokenGrid, seq: &Sequence, weight: f64, grads: &mut [f64]) -> Result<(f64, usize)> {
        self.accumulate(music, seq, weight, grads, false)
    }

    /// Like [`TinyModel::accumulate_gradients`] but for every parameter.
    pub fn accumulate_full_gradients(&self, music: &TokenGrid, seq: &Sequence, weight: f64, grads: &mut [f64]) -> Result<(f64, usize)> {
        self.accumulate(music, seq, weight, grads, true)
    }

    fn accumulate(&self, music: &TokenGrid, seq: &Sequence, weight: f64, grads: &mut [f64], full: bool) -> Result<(f64, usize)> {
        if grads.len() != self.params.len() {
            return Err(MllmError::Shape("gradient buffer does not match parameters".into()));
        }
        let (logits, cache) = self.forward_cached(music, &seq.tokens)?;
        let mut dlogits = Array2::zeros(logits.dim());
        let (loss, n) = masked_ce(&logits, &seq.labels, Some(&mut dlogits));
        dlogits *= weight;
        self.backward(&cache, dlogits, grads, full);
        Ok((loss, n))
    }

    fn add_grad(&self, grads: &mut [f64], id: usize, g: &Array2<f64>) {
        let range = self.params.meta(id).range();
        for (dst, v) in grads[range].iter_mut().zip(g.iter()) {
            *dst += v;
        }
    }

    fn add_grad1(&self, grads: &mut [f64], id: usize, g: &Array1<f64>) {
        let range = self.params.meta(id).range();
        for (dst, v) in grads[range].iter_mut().zip(g.iter()) {
            *dst += v;
        }
    }

    fn add_ln_grads(&self, grads: &mut [f64], (g, b): (usize, usize), dy: &Array2<f64>, xhat: &Array2<f64>) {
        self.add_grad1(grads, g, &(dy * xhat).sum_axis(Axis(0)));
        self.add_grad1(grads, b, &dy.sum_axis(Axis(0)));
    }

    fn backward(&self, cache: &ForwardCache, dlogits: Array2<f64>, grads: &mut [f64], full: bool) {
        let p = &self.params;
        let n_m = cache.n_music;
        let d = self.config.d_model;
        let len = n_m + dlogits.nrows();

        let dtext = dlogits.dot(&p.view2(self.ids.head));
        let mut dy = Array2::zeros((len, d));
        dy.slice_mut(s![n_m.., ..]).assign(&dtext);
        let lnf_g = p.view1(self.ids.lnf_g).to_owned();
        if full {
            let y_text = &cache.lnf_xhat.slice(s![n_m.., ..]) * &lnf_g + &p.view1(self.ids.lnf_b);
            self.add_grad(grads, self.ids.head, &dlogits.t().dot(&y_text));
            self.add_ln_grads(grads, (self.ids.lnf_g, self.ids.lnf_b), &dy, &cache.lnf_xhat);
        }
        let mut dx = layer_norm_backward(&dy, &cache.lnf_xhat, &cache.lnf_inv, &lnf_g);

        for (b, bc) in self.ids.blocks.iter().zip(&cache.blocks).rev() {
            dx = self.block_backward(b, bc, dx, grads, full);
        }
        if full {
            let mut dpos = Array2::zeros((self.config.max_context, d));
            dpos.slice_mut(s![..len, ..]).assign(&dx);
            self.add_grad(grads, self.ids.pos_emb, &dpos);
            let range = p.meta(self.ids.tok_emb).range();
            let emb_grads = &mut grads[range];
            for (t, &tok) in cache.text.iter().enumerate() {
                let row = &mut emb_grads[tok as usize * d..(tok as usize + 1) * d];
                for (dst, v) in row.iter_mut().zip(dx.row(n_m + t)) {
                    *dst += v;
                }
            }
        }

        let dprefix = dx.slice(s![..n_m, ..]).to_owned();
        let [w1, b1, w2, b2] = self.ids.proj;
        let act = cache.proj_pre.mapv(gelu);
        self.add_grad(grads, w2, &act.t().dot(&dprefix));
        self.add_grad1(grads, b2, &dprefix.sum_axis(Axis(0)));
        let dact = dprefix.dot(&p.view2(w2).t());
        let dpre = dact * &cache.proj_pre.mapv(gelu_grad);
        self.add_grad(grads, w1, &cache.enc.t().dot(&dpre));
        self.add_grad1(grads, b1, &dpre.sum_axis(Axis(0)));
        if full {
            let denc = dpre.dot(&p.view2(w1).t());
            self.add_grad(grads, self.ids.enc_w, &cache.music.t().dot(&denc));
            self.add_grad1(grads, self.ids.enc_b, &denc.sum_axis(Axis(0)));
        }
    }

    /// Backward through a (possibly adapted) linear map; records adapter
    /// gradients and returns the input gradient.
    #[allow(clippy::too_many_arguments)]
    fn linear_backward(&self, b: &BlockIds, k: usize, dy: &Array2<f64>, x: &Array2<f64>, ax: Option<&Array2<f64>>, grads: &mut [f64], full: bool) -> Array2<f64> {
        let mut dx = dy.dot(&self.params.view2(b.attn[k]));
        if full {
            self.add_grad(grads, b.attn[k], &dy.t().dot(x));
        }
        if let (Some(ad), Some(ax), Some(ids)) = (self.adapter(b, k), ax, b.lora.map(|l| l[k])) {
            let dyb = dy.dot(&ad.b);
            dx.scaled_add(ad.scale, &dyb.dot(&ad.a));
            self.add_grad(grads, ids.b, &(dy.t().dot(ax) * ad.scale));
            self.add_grad(grads, ids.a, &(dyb.t().dot(x) * ad.scale));
        }
        dx
    }

    fn block_backward(&self, b: &BlockIds, c: &BlockCache, dout: Array2<f64>, grads: &mut [f64], full: bool) -> Array2<f64> {
        let p = &self.params;
        let (len, d) = dout.dim();
        let nh = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let dact = dout.dot(&p.view2(b.w_down));
        let dup = dact * &c.up_pre.mapv(gelu_grad);
        let dh2 = dup.dot(&p.view2(b.w_up));
        let ln2_g = p.view1(b.ln2_g).to_owned();
        if full {
            self.add_grad(grads, b.w_down, &dout.t().dot(&c.up_pre.mapv(gelu)));
            self.add_grad1(grads, b.b_down, &dout.sum_axis(Axis(0)));
            let h2 = &c.ln2_xhat * &ln2_g + &p.view1(b.ln2_b);
            self.add_grad(grads, b.w_up, &dup.t().dot(&h2));
            self.add_grad1(grads, b.b_up, &dup.sum_axis(Axis(0)));
            self.add_ln_grads(grads, (b.ln2_g, b.ln2_b), &dh2, &c.ln2_xhat);
        }
        let dx_mid = &dout + &layer_norm_backward(&dh2, &c.ln2_xhat, &c.ln2_inv, &ln2_g);

        let dattn = self.linear_backward(b, 3, &dx_mid, &c.attn, c.ax[3].as_ref(), grads, full);
        let mut dq = Array2::zeros((len, d));
        let mut dk = Array2::zeros((len, d));
        let mut dv = Array2::zeros((len, d));
        for h in 0..nh {
            let cols = s![.., h * dh..(h + 1) * dh];
            let pr = &c.probs[h];
            let do_h = dattn.slice(cols);
            let dp = do_h.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&pr.t().dot(&do_h));
            let mut ds = dp;
            for i in 0..len {
                let row_dot: f64 = (0..len).map(|j| ds[[i, j]] * pr[[i, j]]).sum();
                for j in 0..len {
                    ds[[i, j]] = pr[[i, j]] * (ds[[i, j]] - row_dot);
                }
            }
            dq.slice_mut(cols).assign(&(ds.dot(&c.k.slice(cols)) * scale));
            dk.slice_mut(cols).assign(&(ds.t().dot(&c.q.slice(cols)) * scale));
        }
        let mut dh1 = self.linear_backward(b, 0, &dq, &c.h1, c.ax[0].as_ref(), grads, full);
        dh1 += &self.linear_backward(b, 1, &dk, &c.h1, c.ax[1].as_ref(), grads, full);
        dh1 += &self.linear_backward(b, 2, &dv, &c.h1, c.ax[2].as_ref(), grads, full);
        if full {
            self.add_ln_grads(grads, (b.ln1_g, b.ln1_b), &dh1, &c.ln1_xhat);
        }
        dx_mid + layer_norm_backward(&dh1, &c.ln1_xhat, &c.ln1_inv, &p.view1(b.ln1_g).to_owned())
    }
}

/// Summed cross-entropy over labelled rows. When `dlogits` is given it
/// receives `softmax - onehot` on those rows.
pub(crate) fn masked_ce(logits: &Array2<f64>, labels: &[Option<u32>], mut dlogits: Option<&mut Array2<f64>>) -> (f64, usize) {
    let mut loss = 0.0;
    let mut n = 0;
    for (t, label) in labels.iter().enumerate() {
        let Some(y) = label else { continue };
        let row = logits.row(t);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += z.ln() + m - row[*y as usize];
        n += 1;
        if let Some(dl) = dlogits.as_deref_mut() {
            let mut drow = dl.row_mut(t);
            for (dv, v) in drow.iter_mut().zip(row.iter()) {
                *dv = (v - m).exp() / z;
            }
            drow[*y as usize] -= 1.0;
        }
    }
    (loss, n)
}
