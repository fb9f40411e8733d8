//! Multi-head factorised attentive pooling.
//!
//! Two softmax-normalised layer-weight vectors mix the encoder's layer stack
//! into a key stream and a value stream. Both are compressed linearly, each
//! head attends over time with its own query vector, and the pooled value
//! vectors are concatenated and projected to an utterance embedding followed
//! by a linear classifier.

use rand_chacha::ChaCha8Rng;

use super::config::MHFAConfig;
use super::encoder::{uniform_tensor, LayerStack};
use crate::autodiff::{Bindings, ParamGroup, ParameterSet, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct PoolOutput {
    /// `1 x embedding_dim`
    pub embedding: Var,
    /// `1 x n_classes`
    pub logits: Var,
    /// `frames x n_heads`, each column sums to one.
    pub attention: Var,
}

/// Parameter names of one head, under `prefix`.
pub struct HeadParams;

impl HeadParams {
    pub const LAYER_WEIGHTS_K: &'static str = "layer_weights_k";
    pub const LAYER_WEIGHTS_V: &'static str = "layer_weights_v";
    pub const KEY_PROJ: &'static str = "key_proj";
    pub const VALUE_PROJ: &'static str = "value_proj";
    pub const QUERIES: &'static str = "queries";
    pub const EMBEDDING: &'static str = "embedding.weight";
    pub const CLASSIFIER_W: &'static str = "classifier.weight";
    pub const CLASSIFIER_B: &'static str = "classifier.bias";

    pub fn name(prefix: &str, what: &str) -> String {
        format!("{prefix}.{what}")
    }
}

pub fn init_head_params(
    prefix: &str,
    cfg: &MHFAConfig,
    model_dim: usize,
    n_layers: usize,
    group: ParamGroup,
    params: &mut ParameterSet,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n = |what| HeadParams::name(prefix, what);
    let pooled = cfg.n_heads * cfg.value_dim;
    params.insert(n(HeadParams::LAYER_WEIGHTS_K), group, Tensor::zeros(&[n_layers]))?;
    params.insert(n(HeadParams::LAYER_WEIGHTS_V), group, Tensor::zeros(&[n_layers]))?;
    params.insert(n(HeadParams::KEY_PROJ), group, uniform_tensor(rng, &[model_dim, cfg.key_dim], model_dim))?;
    params.insert(n(HeadParams::VALUE_PROJ), group, uniform_tensor(rng, &[model_dim, cfg.value_dim], model_dim))?;
    params.insert(n(HeadParams::QUERIES), group, uniform_tensor(rng, &[cfg.key_dim, cfg.n_heads], cfg.key_dim))?;
    params.insert(n(HeadParams::EMBEDDING), group, uniform_tensor(rng, &[pooled, cfg.embedding_dim], pooled))?;
    params.insert(
        n(HeadParams::CLASSIFIER_W),
        group,
        uniform_tensor(rng, &[cfg.embedding_dim, cfg.n_classes], cfg.embedding_dim),
    )?;
    params.insert(n(HeadParams::CLASSIFIER_B), group, Tensor::zeros(&[cfg.n_classes]))?;
    Ok(())
}

/// Softmax-weighted sum of the stacked layers; `flat` is `(L+1) x (T*D)`.
fn mix_layers(tape: &mut Tape, weights: Var, flat: Var, frames: usize, dim: usize) -> Result<Var> {
    let n = tape.shape(weights)[0];
    let w = tape.softmax(weights, 0)?;
    let w = tape.reshape(w, &[1, n])?;
    let mixed = tape.matmul(w, flat)?;
    tape.reshape(mixed, &[frames, dim])
}

pub fn mhfa_pool(
    tape: &mut Tape,
    b: &Bindings,
    prefix: &str,
    cfg: &MHFAConfig,
    stack: &LayerStack,
) -> Result<PoolOutput> {
    let p = |what| b.var(&HeadParams::name(prefix, what));
    let wk = p(HeadParams::LAYER_WEIGHTS_K)?;
    let expected = tape.shape(wk)[0];
    if stack.len() != expected {
        return Err(Error::Config(format!(
            "{prefix}: layer stack has {} layers but the head was built for {expected}",
            stack.len()
        )));
    }
    let (frames, dim) = (stack.frames, stack.dim);
    let rows = stack
        .layers
        .iter()
        .map(|&l| tape.reshape(l, &[1, frames * dim]))
        .collect::<Result<Vec<_>>>()?;
    let flat = tape.concat(&rows, 0)?;
    let keys = mix_layers(tape, wk, flat, frames, dim)?;
    let values = mix_layers(tape, p(HeadParams::LAYER_WEIGHTS_V)?, flat, frames, dim)?;

    let keys = tape.matmul(keys, p(HeadParams::KEY_PROJ)?)?;
    let values = tape.matmul(values, p(HeadParams::VALUE_PROJ)?)?;
    let scores = tape.matmul(keys, p(HeadParams::QUERIES)?)?;
    let attention = tape.softmax(scores, 0)?;
    let attention_t = tape.transpose(attention)?;
    let pooled = tape.matmul(attention_t, values)?;
    let pooled = tape.reshape(pooled, &[1, cfg.n_heads * cfg.value_dim])?;
    let embedding = tape.matmul(pooled, p(HeadParams::EMBEDDING)?)?;
    let logits = tape.matmul(embedding, p(HeadParams::CLASSIFIER_W)?)?;
    let logits = tape.add_row_bias(logits, p(HeadParams::CLASSIFIER_B)?)?;
    Ok(PoolOutput {
        embedding,
        logits,
        attention,
    })
}
