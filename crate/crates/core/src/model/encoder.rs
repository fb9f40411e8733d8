//! Strided convolutional front end followed by pre-norm Transformer layers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use crate::autodiff::{Bindings, ParamGroup, ParameterSet, Tape, Tensor, Var};
use crate::{Error, Result};

/// Per-layer frame sequences: entry 0 is the convolutional output, entries
/// `1..=L` are the Transformer layer outputs. Every entry is `frames x dim`.
#[derive(Clone, Debug)]
pub struct LayerStack {
    pub layers: Vec<Var>,
    pub frames: usize,
    pub dim: usize,
}

impl LayerStack {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

pub(crate) fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

fn conv_name(i: usize, what: &str) -> String {
    format!("encoder.conv{i}.{what}")
}

fn layer_name(l: usize, what: &str) -> String {
    format!("encoder.layer{l}.{what}")
}

/// Registers encoder parameters under the extractor group.
pub fn init_encoder_params(cfg: &EncoderConfig, params: &mut ParameterSet, rng: &mut ChaCha8Rng) -> Result<()> {
    let g = ParamGroup::Extractor;
    let mut c_in = 1;
    for (i, c) in cfg.conv_layers.iter().enumerate() {
        let fan_in = c.kernel * c_in;
        params.insert(conv_name(i, "weight"), g, uniform_tensor(rng, &[c.kernel, c_in, c.channels], fan_in))?;
        params.insert(conv_name(i, "bias"), g, Tensor::zeros(&[c.channels]))?;
        c_in = c.channels;
    }
    let d = cfg.model_dim;
    if cfg.feature_norm {
        params.insert("encoder.feature_norm.gamma", g, Tensor::full(&[d], 1.0))?;
        params.insert("encoder.feature_norm.beta", g, Tensor::zeros(&[d]))?;
    }
    let f = cfg.ffn_dim;
    for l in 0..cfg.n_transformer_layers {
        params.insert(layer_name(l, "ln1.gamma"), g, Tensor::full(&[d], 1.0))?;
        params.insert(layer_name(l, "ln1.beta"), g, Tensor::zeros(&[d]))?;
        for proj in ["wq", "wk", "wv", "wo"] {
            params.insert(layer_name(l, &format!("attn.{proj}")), g, uniform_tensor(rng, &[d, d], d))?;
            let bias = format!("attn.b{}", &proj[1..]);
            params.insert(layer_name(l, &bias), g, Tensor::zeros(&[d]))?;
        }
        params.insert(layer_name(l, "ln2.gamma"), g, Tensor::full(&[d], 1.0))?;
        params.insert(layer_name(l, "ln2.beta"), g, Tensor::zeros(&[d]))?;
        params.insert(layer_name(l, "ffn.w1"), g, uniform_tensor(rng, &[d, f], d))?;
        params.insert(layer_name(l, "ffn.b1"), g, Tensor::zeros(&[f]))?;
        params.insert(layer_name(l, "ffn.w2"), g, uniform_tensor(rng, &[f, d], f))?;
        params.insert(layer_name(l, "ffn.b2"), g, Tensor::zeros(&[d]))?;
    }
    Ok(())
}

/// Sinusoidal position table, `frames x dim`.
pub fn positional_encoding(frames: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; frames * dim];
    for t in 0..frames {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let rate = 1.0 / 10_000f64.powf(2.0 * pair / dim as f64);
            let angle = t as f64 * rate;
            data[t * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![frames, dim], data).expect("shape")
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row_bias(y, b)
}

fn self_attention(
    tape: &mut Tape,
    b: &Bindings,
    cfg: &EncoderConfig,
    l: usize,
    x: Var,
) -> Result<Var> {
    let p = |what: &str| b.var(&layer_name(l, &format!("attn.{what}")));
    let q = linear(tape, x, p("wq")?, p("bq")?)?;
    let k = linear(tape, x, p("wk")?, p("bk")?)?;
    let v = linear(tape, x, p("wv")?, p("bv")?)?;
    let head_dim = cfg.model_dim / cfg.n_attention_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.n_attention_heads);
    for h in 0..cfg.n_attention_heads {
        let qh = tape.narrow(q, 1, h * head_dim, head_dim)?;
        let kh = tape.narrow(k, 1, h * head_dim, head_dim)?;
        let vh = tape.narrow(v, 1, h * head_dim, head_dim)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.softmax(scores, 1)?;
        heads.push(tape.matmul(weights, vh)?);
    }
    let merged = tape.concat(&heads, 1)?;
    linear(tape, merged, p("wo")?, p("bo")?)
}

fn transformer_layer(tape: &mut Tape, b: &Bindings, cfg: &EncoderConfig, l: usize, x: Var) -> Result<Var> {
    let p = |what: &str| b.var(&layer_name(l, what));
    let normed = tape.layer_norm(x, p("ln1.gamma")?, p("ln1.beta")?)?;
    let attn = self_attention(tape, b, cfg, l, normed)?;
    let x = tape.add(x, attn)?;
    let normed = tape.layer_norm(x, p("ln2.gamma")?, p("ln2.beta")?)?;
    let hidden = linear(tape, normed, p("ffn.w1")?, p("ffn.b1")?)?;
    let hidden = tape.gelu(hidden);
    let out = linear(tape, hidden, p("ffn.w2")?, p("ffn.b2")?)?;
    tape.add(x, out)
}

/// `y[n] = x[n] - a x[n-1]`, with `y[0] = x[0]`.
pub fn pre_emphasize(waveform: &[f64], a: f64) -> Vec<f64> {
    if a == 0.0 {
        return waveform.to_vec();
    }
    let mut prev = 0.0;
    waveform
        .iter()
        .map(|&v| {
            let y = v - a * prev;
            prev = v;
            y
        })
        .collect()
}

/// Zero mean, unit variance; a constant input maps to zeros.
pub fn standardize(waveform: &[f64]) -> Vec<f64> {
    let n = waveform.len() as f64;
    let mean = waveform.iter().sum::<f64>() / n;
    let var = waveform.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = if var > 1e-20 { 1.0 / var.sqrt() } else { 0.0 };
    waveform.iter().map(|v| (v - mean) * inv).collect()
}

/// Runs one waveform through the encoder.
pub fn encode(tape: &mut Tape, b: &Bindings, cfg: &EncoderConfig, waveform: &[f64]) -> Result<LayerStack> {
    let min = cfg.min_samples();
    if waveform.len() < min {
        return Err(Error::InputTooShort {
            got: waveform.len(),
            min,
        });
    }
    let frames = cfg.frames(waveform.len());
    if frames > cfg.max_frames {
        return Err(Error::Config(format!(
            "{} samples give {frames} frames, above max_frames {}",
            waveform.len(),
            cfg.max_frames
        )));
    }
    let mut input = pre_emphasize(waveform, cfg.pre_emphasis);
    if cfg.normalize_input {
        input = standardize(&input);
    }
    let mut x = tape.constant(Tensor::matrix(waveform.len(), 1, input)?);
    for (i, c) in cfg.conv_layers.iter().enumerate() {
        let y = tape.conv1d(
            x,
            b.var(&conv_name(i, "weight"))?,
            b.var(&conv_name(i, "bias"))?,
            c.stride,
            c.kernel - c.stride,
        )?;
        x = tape.gelu(y);
    }
    debug_assert_eq!(tape.shape(x), &[frames, cfg.model_dim]);
    if cfg.feature_norm {
        x = tape.layer_norm(x, b.var("encoder.feature_norm.gamma")?, b.var("encoder.feature_norm.beta")?)?;
    }
    let mut layers = Vec::with_capacity(cfg.n_stack_layers());
    layers.push(x);
    let pos = tape.constant(positional_encoding(frames, cfg.model_dim));
    let mut h = tape.add(x, pos)?;
    for l in 0..cfg.n_transformer_layers {
        h = transformer_layer(tape, b, cfg, l, h)?;
        layers.push(h);
    }
    Ok(LayerStack {
        layers,
        frames,
        dim: cfg.model_dim,
    })
}
