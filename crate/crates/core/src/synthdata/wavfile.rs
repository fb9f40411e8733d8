//! Raw waveform files: `SINMTWAV`, u32 sample count, u32 sample rate (all
//! little endian), then the samples as f64.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SINMTWAV";
pub const HEADER_LEN: usize = 16;

pub fn encode_waveform(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn decode_waveform(bytes: &[u8]) -> Result<(Vec<f64>, u32)> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Corpus("not a SINMTWAV file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let len = word(8) as usize;
    let rate = word(12);
    let body = &bytes[HEADER_LEN..];
    if body.len() != len * 8 {
        return Err(Error::Corpus(format!(
            "waveform header says {len} samples but body has {} bytes",
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((samples, rate))
}

pub fn write_waveform(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    fs::write(path, encode_waveform(samples, sample_rate)).map_err(|e| Error::io(path, e))
}

pub fn read_waveform(path: &Path) -> Result<(Vec<f64>, u32)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_waveform(&bytes).map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))
}
