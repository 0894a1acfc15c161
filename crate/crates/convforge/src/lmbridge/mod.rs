//! Pluggable language-model backends.
//!
//! Two model families are exposed behind small traits: a decoder-only
//! causal LM for conversation generation and an encoder-decoder model for
//! summarization. The `tiny` backend trains randomly initialized
//! few-thousand-parameter models in seconds and is what CI runs; the
//! `pretrained` backend loads previously saved checkpoints from disk.

mod nn;
mod tiny;
mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use tiny::{PpoGradInput, TinyCausalLm, TinyLmConfig, TinySeq2Seq};
pub use vocab::{Vocab, PAD, UNK};

use crate::seqformat::SequenceEncoding;
use crate::{Error, Result};

/// Hard cap on causal sequence length.
pub const MAX_SEQ_LEN: usize = 512;
/// Summarizer source-side cap.
pub const MAX_SOURCE_LEN: usize = 512;
/// Summarizer target-side cap.
pub const MAX_TARGET_LEN: usize = 80;

/// Nucleus-sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub top_p: f64,
    pub top_k: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            top_p: 0.95,
            top_k: 0,
            min_length: 20,
            max_length: MAX_SEQ_LEN,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Validation(format!(
                "top_p out of (0,1]: {}",
                self.top_p
            )));
        }
        if self.min_length > self.max_length {
            return Err(Error::Validation(format!(
                "min_length {} > max_length {}",
                self.min_length, self.max_length
            )));
        }
        Ok(())
    }
}

/// Supervised fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gradient_accumulation: usize,
    pub warmup_steps: usize,
    pub max_grad_norm: f64,
    pub adam_epsilon: f64,
}

impl TrainConfig {
    /// Conversation-generator defaults.
    pub fn causal_default() -> Self {
        TrainConfig {
            learning_rate: 6.25e-5,
            epochs: 10,
            batch_size: 4,
            gradient_accumulation: 4,
            warmup_steps: 500,
            max_grad_norm: 1.0,
            adam_epsilon: 1e-8,
        }
    }

    /// Summarizer defaults.
    pub fn seq2seq_default() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            epochs: 10,
            batch_size: 4,
            gradient_accumulation: 1,
            warmup_steps: 0,
            max_grad_norm: 1.0,
            adam_epsilon: 1e-8,
        }
    }

    /// Settings sized for the tiny backend: higher learning rate, no
    /// warmup, so smoke corpora converge in a handful of epochs.
    pub fn tiny(epochs: usize) -> Self {
        TrainConfig {
            learning_rate: 5e-2,
            epochs,
            batch_size: 8,
            gradient_accumulation: 1,
            warmup_steps: 0,
            max_grad_norm: 5.0,
            adam_epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || self.gradient_accumulation == 0
            || self.max_grad_norm <= 0.0
            || self.adam_epsilon <= 0.0
        {
            return Err(Error::Validation(
                "train config fields must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch losses and skip accounting from a fine-tune run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub skipped_sequences: usize,
}

/// One sampled continuation with per-token log-probabilities under the
/// full softmax (one entry per generated token).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub text: String,
    pub token_ids: Vec<usize>,
    pub logprobs: Vec<f64>,
}

/// Decoder-only causal LM surface.
pub trait CausalLm {
    fn vocab(&self) -> &Vocab;
    fn finetune(
        &mut self,
        sequences: &[SequenceEncoding],
        cfg: &TrainConfig,
    ) -> Result<TrainReport>;
    fn sample(
        &self,
        prompt: &SequenceEncoding,
        params: &SamplingParams,
        stop_tokens: &[&str],
    ) -> Result<SampleOutput>;
    fn save(&self, dir: &Path) -> Result<()>;
}

/// Encoder-decoder summarization surface. Decoding is deterministic so a
/// reward computed from the output is reproducible.
pub trait Seq2SeqLm {
    fn finetune(&mut self, pairs: &[(String, String)], cfg: &TrainConfig) -> Result<TrainReport>;
    fn summarize(&self, conversation_text: &str) -> Result<String>;
    fn save(&self, dir: &Path) -> Result<()>;
}

pub fn finetune_causal(
    model: &mut dyn CausalLm,
    sequences: &[SequenceEncoding],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    model.finetune(sequences, cfg)
}

pub fn sample_causal(
    model: &dyn CausalLm,
    prompt: &SequenceEncoding,
    params: &SamplingParams,
    stop_tokens: &[&str],
) -> Result<SampleOutput> {
    model.sample(prompt, params, stop_tokens)
}

pub fn finetune_seq2seq(
    model: &mut dyn Seq2SeqLm,
    pairs: &[(String, String)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    model.finetune(pairs, cfg)
}

pub fn summarize(model: &dyn Seq2SeqLm, conversation_text: &str) -> Result<String> {
    model.summarize(conversation_text)
}

/// JSON sidecar written next to the weights; records everything needed to
/// reload the model without guessing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub kind: String,
    pub special_tokens: Vec<String>,
    pub max_seq_len: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub config: TinyLmConfig,
}

pub(crate) fn write_model_dir<M: Serialize>(
    dir: &Path,
    kind: &str,
    model: &M,
    vocab: &Vocab,
    config: &TinyLmConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let sidecar = ModelSidecar {
        kind: kind.to_string(),
        special_tokens: vocab
            .tokens()
            .iter()
            .filter(|t| crate::seqformat::is_special_token(t))
            .cloned()
            .collect(),
        max_seq_len: MAX_SEQ_LEN,
        max_source_len: MAX_SOURCE_LEN,
        max_target_len: MAX_TARGET_LEN,
        config: config.clone(),
    };
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    std::fs::write(dir.join("vocab.json"), serde_json::to_string(vocab)?)?;
    std::fs::write(dir.join("weights.json"), serde_json::to_string(model)?)?;
    Ok(())
}

fn read_sidecar(dir: &Path) -> Result<ModelSidecar> {
    let raw = std::fs::read_to_string(dir.join("config.json"))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Loads a causal model directory written by [`CausalLm::save`].
pub fn load_causal(dir: &Path) -> Result<TinyCausalLm> {
    let sidecar = read_sidecar(dir)?;
    if sidecar.kind != TinyCausalLm::KIND {
        return Err(Error::Validation(format!(
            "expected a {} checkpoint in {}, found {}",
            TinyCausalLm::KIND,
            dir.display(),
            sidecar.kind
        )));
    }
    TinyCausalLm::from_weights_file(&dir.join("weights.json"))
}

/// Loads a seq2seq model directory written by [`Seq2SeqLm::save`].
pub fn load_seq2seq(dir: &Path) -> Result<TinySeq2Seq> {
    let sidecar = read_sidecar(dir)?;
    if sidecar.kind != TinySeq2Seq::KIND {
        return Err(Error::Validation(format!(
            "expected a {} checkpoint in {}, found {}",
            TinySeq2Seq::KIND,
            dir.display(),
            sidecar.kind
        )));
    }
    TinySeq2Seq::from_weights_file(&dir.join("weights.json"))
}
