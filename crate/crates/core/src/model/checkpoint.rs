//! Checkpoint format: a version line, a `manifest_bytes N` line, an N-byte
//! JSON manifest and a newline, then every parameter as little-endian f64 in
//! manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::network::{ModelConfig, SInMTNetwork};
use crate::autodiff::{ParamGroup, ParameterSet, Tensor};
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "sinmt-ckpt-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    group: ParamGroup,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
    /// Byte length.
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    mode: Mode,
    lambda: f64,
    alpha: f64,
    n_speakers: usize,
    model: ModelConfig,
    params: Vec<ParamEntry>,
}

pub fn checkpoint_bytes(net: &SInMTNetwork) -> Result<Vec<u8>> {
    if let Some((name, _)) = net.params.iter().find(|(_, p)| !p.value.is_finite()) {
        return Err(Error::Checkpoint(format!("parameter `{name}` is not finite")));
    }
    let mut entries = Vec::with_capacity(net.params.len());
    let mut blob = Vec::with_capacity(net.params.num_scalars() * 8);
    for (name, p) in net.params.iter() {
        let offset = blob.len();
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ParamEntry {
            name: name.to_string(),
            group: p.group,
            shape: p.value.shape().to_vec(),
            offset,
            len: blob.len() - offset,
        });
    }
    let manifest = Manifest {
        format: FORMAT_VERSION.to_string(),
        mode: net.mode,
        lambda: net.lambda,
        alpha: net.alpha,
        n_speakers: net.n_speakers,
        model: net.model.clone(),
        params: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = format!("{FORMAT_VERSION}\nmanifest_bytes {}\n", json.len()).into_bytes();
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&blob);
    Ok(out)
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<SInMTNetwork> {
    let mut pos = 0;
    let version = take_line(bytes, &mut pos)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format `{version}`, expected `{FORMAT_VERSION}`"
        )));
    }
    let size_line = take_line(bytes, &mut pos)?;
    let size: usize = size_line
        .strip_prefix("manifest_bytes ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("bad manifest size line `{size_line}`")))?;
    if bytes.len() < pos + size + 1 {
        return Err(Error::Checkpoint("truncated manifest".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[pos..pos + size])
        .map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    pos += size;
    if bytes[pos] != b'\n' {
        return Err(Error::Checkpoint("missing separator after manifest".into()));
    }
    let blob = &bytes[pos + 1..];

    let mut params = ParameterSet::new();
    let mut expected_offset = 0;
    for e in &manifest.params {
        let numel: usize = e.shape.iter().product();
        if e.len != numel * 8 || e.offset != expected_offset {
            return Err(Error::Checkpoint(format!("inconsistent layout for `{}`", e.name)));
        }
        let chunk = blob.get(e.offset..e.offset + e.len).ok_or_else(|| {
            Error::Checkpoint(format!("truncated blob: `{}` needs bytes {}..{}", e.name, e.offset, e.offset + e.len))
        })?;
        let data = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(e.name.clone(), e.group, Tensor::new(e.shape.clone(), data)?)?;
        expected_offset += e.len;
    }
    if blob.len() != expected_offset {
        return Err(Error::Checkpoint(format!(
            "blob has {} bytes, manifest describes {expected_offset}",
            blob.len()
        )));
    }
    Ok(SInMTNetwork {
        model: manifest.model,
        mode: manifest.mode,
        lambda: manifest.lambda,
        alpha: manifest.alpha,
        n_speakers: manifest.n_speakers,
        params,
    })
}

pub fn save_checkpoint(net: &SInMTNetwork, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(net)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint. With `expected = Some(SpeakerInvariant)` a
/// speaker-aware checkpoint is accepted and switched to lambda = 1; any other
/// mode difference is an error.
pub fn load_checkpoint(path: &Path, expected: Option<Mode>) -> Result<SInMTNetwork> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let net = network_from_bytes(&bytes)?;
    match expected {
        None => Ok(net),
        Some(m) if m == net.mode => Ok(net),
        Some(Mode::SpeakerInvariant) if net.mode == Mode::SpeakerAware => {
            net.into_speaker_invariant(Mode::SpeakerInvariant.default_lambda())
        }
        Some(m) => Err(Error::Checkpoint(format!(
            "checkpoint was trained in mode {}, cannot load as {m}",
            net.mode
        ))),
    }
}

/// Copies every parameter of `source` into `target`. Names, groups and shapes
/// must match exactly.
pub fn copy_parameters(target: &mut ParameterSet, source: &ParameterSet) -> Result<()> {
    for (name, p) in target.iter() {
        let src = source
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks parameter `{name}`")))?;
        if src.value.shape() != p.value.shape() {
            return Err(Error::CheckpointShape {
                name: name.to_string(),
                expected: p.value.shape().to_vec(),
                found: src.value.shape().to_vec(),
            });
        }
        if src.group != p.group {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` is in group {} in the checkpoint, {} in the network",
                src.group, p.group
            )));
        }
    }
    if let Some(extra) = source.names().find(|n| target.get(n).is_none()) {
        return Err(Error::Checkpoint(format!("checkpoint has unexpected parameter `{extra}`")));
    }
    for (name, p) in target.iter_mut() {
        p.value = source.tensor(name)?.clone();
    }
    Ok(())
}
