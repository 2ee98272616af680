//! The classifier network.
//!
//! ```text
//! embeddings ─ RNN ──────────────┐
//! characters ─ RNN ──────────────┼─ concat ─ Block-2 ─ Block-3 ─ Block-4 ─ linear ─ softmax
//! hate multi-hot ─ Block-1 ──────┘
//! ```
//!
//! Every block is linear → batch-norm → ReLU. Disabled feature branches are
//! dropped from the concatenation, which shrinks Block-2's input.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    EmbeddingProvider, FeatureBundle, FeatureError, FeatureExtractor, FeatureSet, CHAR_ALPHABET,
    DEFAULT_CHAR_CAP, DEFAULT_TOKEN_CAP,
};
use crate::label::Label;
use crate::lexicon::Lexicon;
use crate::nn::{
    join, relu, relu_backward, softmax, softmax_cross_entropy, BatchNorm, BatchNormCache, Linear, Mode,
    Module, NnError, Real, Rnn, RnnCache, RnnKind, Slot, Tensor,
};
use crate::preprocess::preprocess;

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input does not match the model: {0}")]
    Dimension(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub lexicon_dim: usize,
    pub rnn_kind: RnnKind,
    pub rnn_size: usize,
    /// Widths of Block-1 (hate words) and Blocks 2–4 (post-concatenation).
    pub block_sizes: [usize; 4],
    pub token_cap: usize,
    pub char_cap: usize,
    pub seed: u64,
    pub features: FeatureSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 768,
            lexicon_dim: 1493,
            rnn_kind: RnnKind::Gru,
            rnn_size: 100,
            block_sizes: [512, 512, 256, 128],
            token_cap: DEFAULT_TOKEN_CAP,
            char_cap: DEFAULT_CHAR_CAP,
            seed: 0,
            features: FeatureSet::ALL,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.features.is_empty() {
            return bad("feature set is empty");
        }
        if self.rnn_size == 0 && (self.features.embeddings || self.features.chars) {
            return bad("rnn_size must be positive");
        }
        if self.block_sizes.contains(&0) {
            return bad("block sizes must be positive");
        }
        if self.features.embeddings && self.embed_dim == 0 {
            return bad("embed_dim must be positive");
        }
        if self.features.hate_words && self.lexicon_dim == 0 {
            return bad("lexicon_dim must be positive");
        }
        if self.token_cap == 0 || self.char_cap == 0 {
            return bad("token_cap and char_cap must be positive");
        }
        Ok(())
    }

    /// Width of one recurrent summary vector.
    pub fn rnn_output_size(&self) -> usize {
        match self.rnn_kind {
            RnnKind::Bigru => 2 * self.rnn_size,
            _ => self.rnn_size,
        }
    }

    /// Input width of Block-2.
    pub fn concat_width(&self) -> usize {
        let f = self.features;
        let r = self.rnn_output_size();
        (if f.embeddings { r } else { 0 }) + (if f.chars { r } else { 0 }) + (if f.hate_words { self.block_sizes[0] } else { 0 })
    }

    pub fn extractor(&self, provider: Option<Arc<dyn EmbeddingProvider>>, lexicon: Option<Arc<Lexicon>>) -> FeatureExtractor {
        FeatureExtractor {
            features: self.features,
            token_cap: self.token_cap,
            char_cap: self.char_cap,
            provider,
            lexicon,
        }
    }
}

/// Linear → batch-norm → ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<S = f32> {
    pub linear: Linear<S>,
    pub norm: BatchNorm<S>,
}

#[derive(Debug, Clone)]
pub struct BlockCache<S> {
    input: Tensor<S>,
    norm: BatchNormCache,
    output: Tensor<S>,
}

impl<S: Real> Block<S> {
    fn new<R: rand::Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        Block {
            linear: Linear::new(rng, input, output),
            norm: BatchNorm::new(output),
        }
    }

    /// A single-row batch falls back to running statistics in train mode.
    pub fn forward(&self, x: Tensor<S>, mode: Mode) -> Result<(Tensor<S>, BlockCache<S>), NnError> {
        let z = self.linear.forward(&x)?;
        let norm_mode = if mode == Mode::Train && x.rows() < 2 { Mode::Infer } else { mode };
        let (n, norm) = self.norm.forward(&z, norm_mode)?;
        let y = relu(&n);
        Ok((y.clone(), BlockCache { input: x, norm, output: y }))
    }

    pub fn backward(&self, cache: &BlockCache<S>, dy: &Tensor<S>, grad: &mut Block<S>) -> Result<Tensor<S>, NnError> {
        let dn = relu_backward(&cache.output, dy);
        let dz = self.norm.backward(&cache.norm, &dn, &mut grad.norm)?;
        self.linear.backward(&cache.input, &dz, &mut grad.linear)
    }
}

impl<S: Real> Module<S> for Block<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        self.linear.collect(&join(prefix, "linear"), out);
        self.norm.collect(&join(prefix, "norm"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        self.linear.collect_mut(&join(prefix, "linear"), out);
        self.norm.collect_mut(&join(prefix, "norm"), out);
    }
}

/// All tensors of the network. The same type doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S = f32> {
    pub embed_rnn: Option<Rnn<S>>,
    pub char_rnn: Option<Rnn<S>>,
    /// Block-1, over the hate-word multi-hot vector.
    pub hate_block: Option<Block<S>>,
    /// Blocks 2–4.
    pub blocks: Vec<Block<S>>,
    pub output: Linear<S>,
}

impl<S: Real> Module<S> for ModelParams<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        if let Some(r) = &self.embed_rnn {
            r.collect(&join(prefix, "embed_rnn"), out);
        }
        if let Some(r) = &self.char_rnn {
            r.collect(&join(prefix, "char_rnn"), out);
        }
        if let Some(b) = &self.hate_block {
            b.collect(&join(prefix, "block1"), out);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect(&join(prefix, &format!("block{}", i + 2)), out);
        }
        self.output.collect(&join(prefix, "output"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        if let Some(r) = &mut self.embed_rnn {
            r.collect_mut(&join(prefix, "embed_rnn"), out);
        }
        if let Some(r) = &mut self.char_rnn {
            r.collect_mut(&join(prefix, "char_rnn"), out);
        }
        if let Some(b) = &mut self.hate_block {
            b.collect_mut(&join(prefix, "block1"), out);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.collect_mut(&join(prefix, &format!("block{}", i + 2)), out);
        }
        self.output.collect_mut(&join(prefix, "output"), out);
    }
}

/// Initializes parameters from `config.seed`.
pub fn build_model(config: &ModelConfig) -> Result<ModelParams<f32>, ModelError> {
    ModelParams::new(config)
}

/// Values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass<S> {
    emb_inputs: Vec<Tensor<S>>,
    emb_caches: Vec<RnnCache>,
    char_inputs: Vec<Tensor<S>>,
    char_caches: Vec<RnnCache>,
    hate: Option<BlockCache<S>>,
    stack: Vec<BlockCache<S>>,
    head_input: Tensor<S>,
    pub logits: Tensor<S>,
}

impl<S: Real> ForwardPass<S> {
    pub fn probs(&self) -> Tensor<S> {
        softmax(&self.logits)
    }
}

/// Loss, gradients and probabilities for one training batch.
#[derive(Debug, Clone)]
pub struct StepOutput<S> {
    pub loss: f64,
    pub grads: ModelParams<S>,
    pub probs: Tensor<S>,
}

impl<S: Real> ModelParams<S> {
    pub fn new(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let f = config.features;
        let embed_rnn = f
            .embeddings
            .then(|| Rnn::new(config.rnn_kind, &mut rng, config.embed_dim, config.rnn_size));
        let char_rnn = f
            .chars
            .then(|| Rnn::new(config.rnn_kind, &mut rng, CHAR_ALPHABET, config.rnn_size));
        let hate_block = f
            .hate_words
            .then(|| Block::new(&mut rng, config.lexicon_dim, config.block_sizes[0]));
        let [_, b2, b3, b4] = config.block_sizes;
        let blocks = vec![
            Block::new(&mut rng, config.concat_width(), b2),
            Block::new(&mut rng, b2, b3),
            Block::new(&mut rng, b3, b4),
        ];
        let output = Linear::new(&mut rng, b4, NUM_CLASSES);
        Ok(ModelParams {
            embed_rnn,
            char_rnn,
            hate_block,
            blocks,
            output,
        })
    }

    /// Same layout with every tensor zeroed.
    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for (_, _, t) in z.tensors_mut() {
            t.data_mut().fill(S::zero());
        }
        z
    }

    pub fn cast<T: Real>(&self) -> ModelParams<T> {
        let cast_rnn = |r: &Rnn<S>| -> Rnn<T> {
            let out: Rnn<T> = match r {
                Rnn::Gru(g) => Rnn::Gru(crate::nn::Gru {
                    update: cast_gate(&g.update),
                    reset: cast_gate(&g.reset),
                    candidate: cast_gate(&g.candidate),
                }),
                Rnn::Lstm(l) => Rnn::Lstm(crate::nn::Lstm {
                    input: cast_gate(&l.input),
                    forget: cast_gate(&l.forget),
                    cell: cast_gate(&l.cell),
                    output: cast_gate(&l.output),
                }),
                Rnn::BiGru { forward, backward } => Rnn::BiGru {
                    forward: crate::nn::Gru {
                        update: cast_gate(&forward.update),
                        reset: cast_gate(&forward.reset),
                        candidate: cast_gate(&forward.candidate),
                    },
                    backward: crate::nn::Gru {
                        update: cast_gate(&backward.update),
                        reset: cast_gate(&backward.reset),
                        candidate: cast_gate(&backward.candidate),
                    },
                },
            };
            out
        };
        ModelParams {
            embed_rnn: self.embed_rnn.as_ref().map(cast_rnn),
            char_rnn: self.char_rnn.as_ref().map(cast_rnn),
            hate_block: self.hate_block.as_ref().map(cast_block),
            blocks: self.blocks.iter().map(cast_block).collect(),
            output: cast_linear(&self.output),
        }
    }

    fn check_bundle(&self, config: &ModelConfig, i: usize, b: &FeatureBundle) -> Result<(), ModelError> {
        let dim_err = |m: String| Err(ModelError::Dimension(format!("sample {i}: {m}")));
        let f = config.features;
        if f.embeddings != b.embeddings.is_some() || f.chars != b.chars.is_some() || f.hate_words != b.hate.is_some() {
            return dim_err(format!("bundle branches do not match feature set {f}"));
        }
        if let Some(e) = &b.embeddings {
            if e.dim() != config.embed_dim {
                return dim_err(format!("embedding dim {} != {}", e.dim(), config.embed_dim));
            }
            if e.rows() == 0 {
                return dim_err("embedding matrix has no rows".into());
            }
        }
        if let Some(c) = &b.chars {
            if c.is_empty() {
                return dim_err("character sequence is empty".into());
            }
        }
        if let Some(h) = &b.hate {
            if h.len() != config.lexicon_dim {
                return dim_err(format!("multi-hot length {} != {}", h.len(), config.lexicon_dim));
            }
        }
        Ok(())
    }

    pub fn forward(&self, config: &ModelConfig, batch: &[FeatureBundle], mode: Mode) -> Result<ForwardPass<S>, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for (i, b) in batch.iter().enumerate() {
            self.check_bundle(config, i, b)?;
        }
        let n = batch.len();
        let width = config.concat_width();
        let mut concat = vec![S::zero(); n * width];
        let mut col = 0;

        let mut emb_inputs = Vec::new();
        let mut emb_caches = Vec::new();
        if let Some(rnn) = &self.embed_rnn {
            let out = rnn.output_size();
            for (i, b) in batch.iter().enumerate() {
                let m = b.embeddings.as_ref().expect("checked above");
                let seq = Tensor::from_vec(&[m.rows(), m.dim()], m.values().iter().map(|&v| S::lit(v as f64)).collect())?;
                let (h, cache) = rnn.forward(&seq, seq.rows())?;
                concat[i * width + col..i * width + col + out].copy_from_slice(&h);
                emb_inputs.push(seq);
                emb_caches.push(cache);
            }
            col += out;
        }

        let mut char_inputs = Vec::new();
        let mut char_caches = Vec::new();
        if let Some(rnn) = &self.char_rnn {
            let out = rnn.output_size();
            for (i, b) in batch.iter().enumerate() {
                let c = b.chars.as_ref().expect("checked above");
                let seq = Tensor::from_vec(&[c.len(), CHAR_ALPHABET], c.to_dense().into_iter().map(|v| S::lit(v as f64)).collect())?;
                let (h, cache) = rnn.forward(&seq, seq.rows())?;
                concat[i * width + col..i * width + col + out].copy_from_slice(&h);
                char_inputs.push(seq);
                char_caches.push(cache);
            }
            col += out;
        }

        let hate = match &self.hate_block {
            Some(block) => {
                let dim = config.lexicon_dim;
                let mut x = Vec::with_capacity(n * dim);
                for b in batch {
                    let h = b.hate.as_ref().expect("checked above");
                    x.extend(h.bits().iter().map(|&v| S::lit(v as f64)));
                }
                let (y, cache) = block.forward(Tensor::from_vec(&[n, dim], x)?, mode)?;
                let out = y.cols();
                for i in 0..n {
                    concat[i * width + col..i * width + col + out].copy_from_slice(y.row(i));
                }
                col += out;
                Some(cache)
            }
            None => None,
        };
        debug_assert_eq!(col, width);

        let mut h = Tensor::from_vec(&[n, width], concat)?;
        let mut stack = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(h, mode)?;
            stack.push(cache);
            h = y;
        }
        let logits = self.output.forward(&h)?;
        Ok(ForwardPass {
            emb_inputs,
            emb_caches,
            char_inputs,
            char_caches,
            hate,
            stack,
            head_input: h,
            logits,
        })
    }

    /// Class probabilities, `[B, 2]`.
    pub fn probabilities(&self, config: &ModelConfig, batch: &[FeatureBundle], mode: Mode) -> Result<Tensor<S>, ModelError> {
        Ok(self.forward(config, batch, mode)?.probs())
    }

    /// Gradients of `dL/dlogits` with respect to every parameter.
    pub fn backward(&self, pass: &ForwardPass<S>, d_logits: &Tensor<S>) -> Result<ModelParams<S>, ModelError> {
        let mut grads = self.zeroed();
        let mut dh = self.output.backward(&pass.head_input, d_logits, &mut grads.output)?;
        for ((block, cache), grad) in self.blocks.iter().zip(&pass.stack).zip(grads.blocks.iter_mut()).rev() {
            dh = block.backward(cache, &dh, grad)?;
        }
        let mut col = 0;
        if let (Some(rnn), Some(grad)) = (&self.embed_rnn, grads.embed_rnn.as_mut()) {
            let out = rnn.output_size();
            for (i, (seq, cache)) in pass.emb_inputs.iter().zip(&pass.emb_caches).enumerate() {
                let d: Vec<f64> = dh.row(i)[col..col + out].iter().map(|v| v.f64()).collect();
                rnn.backward(seq, cache, &d, grad);
            }
            col += out;
        }
        if let (Some(rnn), Some(grad)) = (&self.char_rnn, grads.char_rnn.as_mut()) {
            let out = rnn.output_size();
            for (i, (seq, cache)) in pass.char_inputs.iter().zip(&pass.char_caches).enumerate() {
                let d: Vec<f64> = dh.row(i)[col..col + out].iter().map(|v| v.f64()).collect();
                rnn.backward(seq, cache, &d, grad);
            }
            col += out;
        }
        if let (Some(block), Some(cache), Some(grad)) = (&self.hate_block, &pass.hate, grads.hate_block.as_mut()) {
            let out = block.linear.output_size();
            let n = dh.rows();
            let d: Vec<S> = (0..n).flat_map(|i| dh.row(i)[col..col + out].to_vec()).collect();
            block.backward(cache, &Tensor::from_vec(&[n, out], d)?, grad)?;
        }
        Ok(grads)
    }

    /// Train-mode loss and gradients without touching running statistics.
    pub fn gradients(&self, config: &ModelConfig, batch: &[FeatureBundle], labels: &[Label]) -> Result<(StepOutput<S>, ForwardPass<S>), ModelError> {
        if labels.len() != batch.len() {
            return Err(ModelError::Dimension(format!("{} labels for {} samples", labels.len(), batch.len())));
        }
        let pass = self.forward(config, batch, Mode::Train)?;
        let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        let ce = softmax_cross_entropy(&pass.logits, &targets)?;
        let grads = self.backward(&pass, &ce.grad)?;
        Ok((
            StepOutput {
                loss: ce.loss,
                grads,
                probs: ce.probs,
            },
            pass,
        ))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, config: &ModelConfig, batch: &[FeatureBundle], labels: &[Label], mode: Mode) -> Result<f64, ModelError> {
        if labels.len() != batch.len() {
            return Err(ModelError::Dimension(format!("{} labels for {} samples", labels.len(), batch.len())));
        }
        let pass = self.forward(config, batch, mode)?;
        let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        Ok(softmax_cross_entropy(&pass.logits, &targets)?.loss)
    }

    /// Moves batch-norm running statistics using the batch statistics of `pass`.
    pub fn apply_running_stats(&mut self, pass: &ForwardPass<S>) {
        if let (Some(block), Some(cache)) = (self.hate_block.as_mut(), pass.hate.as_ref()) {
            block.norm.update_running(&cache.norm);
        }
        for (block, cache) in self.blocks.iter_mut().zip(&pass.stack) {
            block.norm.update_running(&cache.norm);
        }
    }

    /// Loss and gradients for a training batch; running statistics are
    /// updated exactly once.
    pub fn loss_and_grads(&mut self, config: &ModelConfig, batch: &[FeatureBundle], labels: &[Label]) -> Result<StepOutput<S>, ModelError> {
        let (out, pass) = self.gradients(config, batch, labels)?;
        self.apply_running_stats(&pass);
        Ok(out)
    }
}

fn cast_tensor<S: Real, T: Real>(t: &Tensor<S>) -> Tensor<T> {
    t.cast()
}

fn cast_gate<S: Real, T: Real>(g: &crate::nn::Gate<S>) -> crate::nn::Gate<T> {
    crate::nn::Gate {
        w: cast_tensor(&g.w),
        u: cast_tensor(&g.u),
        b: cast_tensor(&g.b),
    }
}

fn cast_linear<S: Real, T: Real>(l: &Linear<S>) -> Linear<T> {
    Linear {
        weight: cast_tensor(&l.weight),
        bias: cast_tensor(&l.bias),
    }
}

fn cast_block<S: Real, T: Real>(b: &Block<S>) -> Block<T> {
    Block {
        linear: cast_linear(&b.linear),
        norm: BatchNorm {
            gamma: cast_tensor(&b.norm.gamma),
            beta: cast_tensor(&b.norm.beta),
            running_mean: cast_tensor(&b.norm.running_mean),
            running_var: cast_tensor(&b.norm.running_var),
            momentum: b.norm.momentum,
            epsilon: b.norm.epsilon,
        },
    }
}

/// Why a prediction fell back to the tie rule without running the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFlag {
    /// The text normalized to nothing.
    EmptyInput,
    /// Character features are enabled but the text has no a-z letters.
    NoLetters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub prob_hof: f64,
    pub flag: Option<InputFlag>,
}

impl Prediction {
    /// `HOF` only when its probability is strictly above one half.
    pub fn from_prob_hof(prob_hof: f64) -> Self {
        Prediction {
            label: if prob_hof > 0.5 { Label::Hof } else { Label::Not },
            prob_hof,
            flag: None,
        }
    }

    fn fallback(flag: InputFlag) -> Self {
        Prediction {
            label: Label::Not,
            prob_hof: 0.5,
            flag: Some(flag),
        }
    }

    /// Probability of the predicted label.
    pub fn probability(&self) -> f64 {
        match self.label {
            Label::Hof => self.prob_hof,
            Label::Not => 1.0 - self.prob_hof,
        }
    }
}

/// A trained network together with the configuration that shapes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
}

impl Classifier {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let params = build_model(&config)?;
        Ok(Classifier { config, params })
    }

    /// Predicts a batch of `(id, raw text)` pairs in inference mode.
    pub fn predict_batch(&self, extractor: &FeatureExtractor, items: &[(&str, &str)]) -> Result<Vec<Prediction>, ModelError> {
        let mut out: Vec<Option<Prediction>> = vec![None; items.len()];
        let mut bundles = Vec::new();
        let mut slots = Vec::new();
        for (k, (id, text)) in items.iter().enumerate() {
            let tokens = preprocess(text);
            if tokens.is_empty() {
                out[k] = Some(Prediction::fallback(InputFlag::EmptyInput));
                continue;
            }
            match extractor.build(id, &tokens) {
                Ok(b) => {
                    bundles.push(b);
                    slots.push(k);
                }
                Err(FeatureError::NoLetters) => out[k] = Some(Prediction::fallback(InputFlag::NoLetters)),
                Err(e) => return Err(e.into()),
            }
        }
        for (chunk, idx) in bundles.chunks(64).zip(slots.chunks(64)) {
            let probs = self.params.probabilities(&self.config, chunk, Mode::Infer)?;
            for (r, &k) in idx.iter().enumerate() {
                out[k] = Some(Prediction::from_prob_hof(probs.at(r, Label::Hof.index()) as f64));
            }
        }
        Ok(out.into_iter().map(|p| p.expect("every slot filled")).collect())
    }

    pub fn predict(&self, extractor: &FeatureExtractor, id: &str, text: &str) -> Result<Prediction, ModelError> {
        Ok(self.predict_batch(extractor, &[(id, text)])?.remove(0))
    }
}

/// Runs preprocessing, feature extraction and an inference-mode forward pass.
pub fn predict(text: &str, classifier: &Classifier, lexicon: Option<Arc<Lexicon>>, provider: Option<Arc<dyn EmbeddingProvider>>) -> Result<Prediction, ModelError> {
    let extractor = classifier.config.extractor(provider, lexicon);
    classifier.predict(&extractor, "", text)
}
