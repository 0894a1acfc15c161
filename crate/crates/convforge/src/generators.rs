//! Conversation generation strategies: whole-conversation decoding from a
//! summary prompt, and controlled turn-by-turn generation driven by
//! sampled control states. The RL-trained policy reuses the
//! whole-conversation path; it differs only in which checkpoint is loaded.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SpeakerId, Turn};
use crate::lmbridge::{CausalLm, SamplingParams};
use crate::seqformat::{self, encode_cn, encode_sl, ControlState, LengthBucket, EOS};
use crate::{Error, Result};

/// Placeholder utterance used when a sampled turn comes back empty.
pub const FALLBACK_UTTERANCE: &str = "...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum GenerationMode {
    Sl,
    RlPolicy,
    Cn,
}

impl std::fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GenerationMode::Sl => "sl",
            GenerationMode::RlPolicy => "rl_policy",
            GenerationMode::Cn => "cn",
        };
        f.write_str(s)
    }
}

/// A generation task; `cn_controls` must be present exactly when the mode
/// is controlled generation.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub summary: String,
    pub mode: GenerationMode,
    pub params: SamplingParams,
    pub cn_controls: Option<Vec<ControlState>>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.cn_controls) {
            (GenerationMode::Cn, Some(_)) => Ok(()),
            (GenerationMode::Cn, None) => {
                Err(Error::Validation("CN mode requires cn_controls".into()))
            }
            (_, Some(_)) => Err(Error::Validation(
                "cn_controls only valid in CN mode".into(),
            )),
            (_, None) => Ok(()),
        }
    }
}

/// A generated conversation plus everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedConversation {
    pub id: String,
    pub mode: GenerationMode,
    pub summary: String,
    pub turns: Vec<Turn>,
    pub well_formed: bool,
    pub raw_text: String,
    pub controls: Option<Vec<ControlState>>,
    /// Turns whose sampled utterance was empty and got the fallback token.
    #[serde(default)]
    pub fallback_turns: usize,
}

impl GeneratedConversation {
    /// Conversation text used for evaluation and rewards: the structured
    /// turns when well formed, the raw model output otherwise.
    pub fn linearized(&self) -> String {
        if self.well_formed {
            seqformat::linearize(&self.turns)
        } else {
            self.raw_text.clone()
        }
    }
}

/// Whole-conversation generation: prompt with the summary, sample until
/// `<eos>`, parse whatever came back. Never fails on malformed output.
pub fn generate_sl(
    model: &dyn CausalLm,
    id: &str,
    summary: &str,
    params: &SamplingParams,
) -> Result<GeneratedConversation> {
    generate_flat(model, id, summary, params, GenerationMode::Sl)
}

/// Same decoding path as [`generate_sl`] but labeled as the RL policy.
pub fn generate_rl(
    model: &dyn CausalLm,
    id: &str,
    summary: &str,
    params: &SamplingParams,
) -> Result<GeneratedConversation> {
    generate_flat(model, id, summary, params, GenerationMode::RlPolicy)
}

fn generate_flat(
    model: &dyn CausalLm,
    id: &str,
    summary: &str,
    params: &SamplingParams,
    mode: GenerationMode,
) -> Result<GeneratedConversation> {
    let prompt = encode_sl(summary, None)?;
    let out = model.sample(&prompt, params, &[EOS])?;
    let (turns, well_formed) = seqformat::decode_conversation(&out.text);
    Ok(GeneratedConversation {
        id: id.to_string(),
        mode,
        summary: summary.to_string(),
        turns,
        well_formed,
        raw_text: out.text,
        controls: None,
        fallback_turns: 0,
    })
}

/// Draws a full control list for one conversation: `n` uniform in
/// `n_range`, countdown `n..1`, speakers and length buckets uniform.
pub fn sample_inference_controls(
    n_range: (usize, usize),
    speakers: &[SpeakerId],
    seed: u64,
) -> Result<Vec<ControlState>> {
    let (lo, hi) = n_range;
    if lo == 0 || lo > hi {
        return Err(Error::Validation(format!("bad turn range: [{lo}, {hi}]")));
    }
    if speakers.is_empty() {
        return Err(Error::Validation("empty speaker list".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(lo..=hi);
    let controls = (0..n)
        .map(|i| ControlState {
            turns_to_go: n - i,
            next_speaker: speakers[rng.gen_range(0..speakers.len())].clone(),
            next_length: LengthBucket::ALL[rng.gen_range(0..LengthBucket::ALL.len())],
        })
        .collect();
    Ok(controls)
}

/// Default inference range for the number of turns.
pub const DEFAULT_TURN_RANGE: (usize, usize) = (4, 15);

/// Per-utterance generation cap for controlled generation.
pub const CN_MAX_TURN_TOKENS: usize = 64;

fn validate_countdown(controls: &[ControlState]) -> Result<()> {
    if controls.is_empty() {
        return Err(Error::Validation("empty control list".into()));
    }
    let first = controls[0].turns_to_go;
    for (i, c) in controls.iter().enumerate() {
        if c.turns_to_go != first - i {
            return Err(Error::Validation(format!(
                "broken countdown at control {i}: expected {}, got {}",
                first - i,
                c.turns_to_go
            )));
        }
    }
    if controls.last().expect("non-empty").turns_to_go != 1 {
        return Err(Error::Validation("countdown must end at 1".into()));
    }
    Ok(())
}

/// Turn-by-turn controlled generation: one utterance per control state,
/// each sampled from a prompt carrying the accumulated context and the
/// control fields. Always yields exactly `controls.len()` turns.
pub fn generate_cn(
    model: &dyn CausalLm,
    id: &str,
    summary: &str,
    controls: &[ControlState],
    params: &SamplingParams,
) -> Result<GeneratedConversation> {
    validate_countdown(controls)?;
    let stop: Vec<String> = model
        .vocab()
        .tokens()
        .iter()
        .filter(|t| seqformat::is_special_token(t))
        .cloned()
        .collect();
    let stop_refs: Vec<&str> = stop.iter().map(|s| s.as_str()).collect();

    let mut context: Vec<Turn> = Vec::new();
    let mut fallback_turns = 0;
    for (i, control) in controls.iter().enumerate() {
        let prompt = encode_cn(summary, &context, control, None)?;
        let prompt_len = model.vocab().encode(&prompt.text).len();
        let turn_params = SamplingParams {
            min_length: 0,
            max_length: (prompt_len + CN_MAX_TURN_TOKENS).min(crate::lmbridge::MAX_SEQ_LEN),
            seed: params.seed.wrapping_add(i as u64),
            ..params.clone()
        };
        let out = model.sample(&prompt, &turn_params, &stop_refs)?;
        let utterance = out.text.trim().to_string();
        let utterance = if utterance.is_empty() {
            fallback_turns += 1;
            FALLBACK_UTTERANCE.to_string()
        } else {
            utterance
        };
        context.push(Turn {
            speaker: control.next_speaker.clone(),
            text: utterance,
        });
    }
    let raw_text = seqformat::linearize(&context);
    Ok(GeneratedConversation {
        id: id.to_string(),
        mode: GenerationMode::Cn,
        summary: summary.to_string(),
        turns: context,
        well_formed: true,
        raw_text,
        controls: Some(controls.to_vec()),
        fallback_turns,
    })
}

/// Dispatches on the request mode.
pub fn generate(
    model: &dyn CausalLm,
    id: &str,
    request: &GenerationRequest,
) -> Result<GeneratedConversation> {
    request.validate()?;
    match request.mode {
        GenerationMode::Sl => generate_sl(model, id, &request.summary, &request.params),
        GenerationMode::RlPolicy => generate_rl(model, id, &request.summary, &request.params),
        GenerationMode::Cn => generate_cn(
            model,
            id,
            &request.summary,
            request.cn_controls.as_ref().expect("validated"),
            &request.params,
        ),
    }
}

/// JSONL serialization with the stable record shape
/// `{id, mode, summary, turns, well_formed, controls}`.
pub fn write_generated_jsonl(path: &Path, records: &[GeneratedConversation]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let obj = serde_json::json!({
            "id": r.id,
            "mode": r.mode,
            "summary": r.summary,
            "turns": r.turns,
            "well_formed": r.well_formed,
            "controls": r.controls,
        });
        out.push_str(&serde_json::to_string(&obj)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads records written by [`write_generated_jsonl`].
pub fn read_generated_jsonl(path: &Path) -> Result<Vec<GeneratedConversation>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        mode: GenerationMode,
        summary: String,
        turns: Vec<Turn>,
        well_formed: bool,
        controls: Option<Vec<ControlState>>,
    }
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("bad generated record at line {}: {e}", i + 1)))?;
        let raw_text = seqformat::linearize(&row.turns);
        out.push(GeneratedConversation {
            id: row.id,
            mode: row.mode,
            summary: row.summary,
            turns: row.turns,
            well_formed: row.well_formed,
            raw_text,
            controls: row.controls,
            fallback_turns: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmbridge::{SampleOutput, TrainConfig, TrainReport, Vocab};
    use crate::seqformat::SequenceEncoding;

    /// Backend that returns a fixed string regardless of the prompt.
    struct FixedOutput {
        vocab: Vocab,
        text: String,
    }

    impl CausalLm for FixedOutput {
        fn vocab(&self) -> &Vocab {
            &self.vocab
        }
        fn finetune(
            &mut self,
            _: &[SequenceEncoding],
            _: &TrainConfig,
        ) -> crate::Result<TrainReport> {
            unimplemented!()
        }
        fn sample(
            &self,
            _: &SequenceEncoding,
            _: &SamplingParams,
            _: &[&str],
        ) -> crate::Result<SampleOutput> {
            Ok(SampleOutput {
                text: self.text.clone(),
                token_ids: vec![],
                logprobs: vec![],
            })
        }
        fn save(&self, _: &Path) -> crate::Result<()> {
            unimplemented!()
        }
    }

    fn fixed(text: &str) -> FixedOutput {
        FixedOutput {
            vocab: Vocab::build(["hi hello yo"], 2),
            text: text.to_string(),
        }
    }

    #[test]
    fn sl_parses_model_output() {
        let model = fixed("<person_0> hi <person_1> hello");
        let out = generate_sl(&model, "g0", "s", &SamplingParams::default()).unwrap();
        assert!(out.well_formed);
        assert_eq!(out.turns.len(), 2);
    }

    #[test]
    fn sl_handles_taglless_output() {
        let model = fixed("no tags at all");
        let out = generate_sl(&model, "g0", "s", &SamplingParams::default()).unwrap();
        assert!(!out.well_formed);
        assert!(out.turns.is_empty());
    }

    #[test]
    fn sl_rejects_empty_summary() {
        let model = fixed("x");
        assert!(generate_sl(&model, "g0", " ", &SamplingParams::default()).is_err());
    }

    #[test]
    fn controls_have_countdown_and_range() {
        for seed in 0..50 {
            let speakers = vec![SpeakerId::new(0), SpeakerId::new(1)];
            let cs = sample_inference_controls(DEFAULT_TURN_RANGE, &speakers, seed).unwrap();
            assert!(cs.len() >= 4 && cs.len() <= 15);
            assert_eq!(cs[0].turns_to_go, cs.len());
            assert_eq!(cs.last().unwrap().turns_to_go, 1);
        }
    }

    #[test]
    fn controls_fixed_range() {
        let speakers = vec![SpeakerId::new(0), SpeakerId::new(1)];
        let cs = sample_inference_controls((2, 2), &speakers, 3).unwrap();
        assert_eq!(cs.len(), 2);
    }

    #[test]
    fn controls_reject_empty_speakers() {
        assert!(sample_inference_controls((4, 15), &[], 0).is_err());
    }

    #[test]
    fn cn_produces_exactly_one_turn_per_control() {
        let model = fixed("sure thing");
        let speakers = vec![SpeakerId::new(0), SpeakerId::new(1)];
        for n in [2usize, 5, 9] {
            let controls = sample_inference_controls((n, n), &speakers, 1).unwrap();
            let out = generate_cn(&model, "g", "s", &controls, &SamplingParams::default()).unwrap();
            assert_eq!(out.turns.len(), n);
            for (t, c) in out.turns.iter().zip(&controls) {
                assert_eq!(t.speaker, c.next_speaker);
            }
        }
    }

    #[test]
    fn cn_empty_utterance_gets_fallback() {
        let model = fixed("   ");
        let controls = sample_inference_controls((2, 2), &[SpeakerId::new(0)], 1).unwrap();
        let out = generate_cn(&model, "g", "s", &controls, &SamplingParams::default()).unwrap();
        assert_eq!(out.fallback_turns, 2);
        assert!(out.turns.iter().all(|t| t.text == FALLBACK_UTTERANCE));
    }

    #[test]
    fn cn_rejects_broken_countdown() {
        let model = fixed("x");
        let controls = vec![
            ControlState {
                turns_to_go: 3,
                next_speaker: SpeakerId::new(0),
                next_length: LengthBucket::Short,
            },
            ControlState {
                turns_to_go: 1,
                next_speaker: SpeakerId::new(1),
                next_length: LengthBucket::Short,
            },
        ];
        assert!(generate_cn(&model, "g", "s", &controls, &SamplingParams::default()).is_err());
    }

    #[test]
    fn request_validation() {
        let base = GenerationRequest {
            summary: "s".into(),
            mode: GenerationMode::Sl,
            params: SamplingParams::default(),
            cn_controls: None,
        };
        assert!(base.validate().is_ok());
        let bad = GenerationRequest {
            mode: GenerationMode::Cn,
            ..base.clone()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.jsonl");
        let model = fixed("<person_0> hi");
        let recs = vec![generate_sl(&model, "g0", "s", &SamplingParams::default()).unwrap()];
        write_generated_jsonl(&path, &recs).unwrap();
        let back = read_generated_jsonl(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].id, "g0");
        assert_eq!(back[0].turns, recs[0].turns);
    }
}
