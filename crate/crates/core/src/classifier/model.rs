use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ClassifierConfig;
use super::encoder::CharEncoder;
use super::network::{Network, Params};
use super::train::argmax;
use crate::corpus::Timeline;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const FORMAT_TAG: &str = "leaning-classifier/1";
const WEIGHTS_MAGIC: &[u8; 4] = b"LNWT";

/// Per-party scores of one tweet, ordered like the classifier's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
}

impl ScoreVector {
    /// Index of the highest score; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }
}

/// A trained party tweet classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    labels: Vec<String>,
    encoder: CharEncoder,
    config: ClassifierConfig,
    network: Network<f32>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    labels: Vec<String>,
    vocab_size: usize,
    max_len: usize,
    n_parameters: usize,
}

impl Classifier {
    pub(crate) fn new(
        labels: Vec<String>,
        encoder: CharEncoder,
        config: ClassifierConfig,
        network: Network<f32>,
    ) -> Self {
        Classifier {
            labels,
            encoder,
            config,
            network,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn encoder(&self) -> &CharEncoder {
        &self.encoder
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn classify_text(&self, text: &str) -> ScoreVector {
        let (tokens, len) = self.encoder.encode_with_len(text);
        let probs = self.network.predict(&tokens, len);
        ScoreVector {
            scores: probs.iter().map(|p| *p as f64).collect(),
        }
    }

    pub fn predict_label(&self, text: &str) -> &str {
        let (tokens, len) = self.encoder.encode_with_len(text);
        let probs = self.network.predict(&tokens, len);
        &self.labels[argmax(probs.as_slice().unwrap())]
    }

    /// Scores of every tweet of a timeline, in timeline order.
    pub fn score_timeline(&self, timeline: &Timeline) -> Vec<ScoreVector> {
        timeline.texts().map(|t| self.classify_text(t)).collect()
    }

    /// Writes the model directory: `manifest.json`, `config.json`,
    /// `vocab.json` and `weights.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = Manifest {
            format: FORMAT_TAG.into(),
            labels: self.labels.clone(),
            vocab_size: self.encoder.size(),
            max_len: self.encoder.max_len(),
            n_parameters: self.network.params.n_params(),
        };
        write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
        write_atomic(&dir.join("config.json"), &serde_json::to_vec_pretty(&self.config)?)?;
        write_atomic(&dir.join("vocab.json"), &serde_json::to_vec(&self.encoder)?)?;
        write_atomic(&dir.join("weights.bin"), &encode_weights(&self.network.params))
    }

    pub fn load(dir: &Path) -> Result<Classifier> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| Error::io(p, e))
        };
        let manifest: Manifest = serde_json::from_slice(&read("manifest.json")?)?;
        if manifest.format != FORMAT_TAG {
            return Err(Error::Validation(format!(
                "unsupported model format {:?}, expected {FORMAT_TAG:?}",
                manifest.format
            )));
        }
        let config: ClassifierConfig = serde_json::from_slice(&read("config.json")?)?;
        config.validate()?;
        let encoder: CharEncoder = serde_json::from_slice(&read("vocab.json")?)?;
        let dims = config.dims(encoder.size(), manifest.labels.len(), encoder.max_len());
        let mut network = Network::<f32>::init(dims, 0);
        decode_weights(&read("weights.bin")?, &mut network.params)?;
        Ok(Classifier::new(manifest.labels, encoder, config, network))
    }
}

fn encode_weights(params: &Params<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * params.n_params());
    out.extend_from_slice(WEIGHTS_MAGIC);
    let names = params.names();
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for (name, data) in names.iter().zip(params.slices()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn decode_weights(bytes: &[u8], params: &mut Params<f32>) -> Result<()> {
    let bad = |msg: &str| Error::Validation(format!("weights.bin: {msg}"));
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != WEIGHTS_MAGIC {
        return Err(bad("bad magic"));
    }
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let names = params.names();
    if n != names.len() {
        return Err(bad(&format!("{n} tensors, expected {}", names.len())));
    }
    for (expected, slot) in names.iter().zip(params.slices_mut()) {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(len)?).map_err(|_| bad("tensor name"))?;
        if name != expected {
            return Err(bad(&format!("tensor {name}, expected {expected}")));
        }
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if count != slot.len() {
            return Err(bad(&format!("tensor {name} has {count} values, expected {}", slot.len())));
        }
        for (x, chunk) in slot.iter_mut().zip(take(4 * count)?.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(())
}
