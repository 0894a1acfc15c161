//! Experiment orchestration: the augmentation protocol (split, train
//! generator, generate for the holdout, retrain the summarizer, evaluate)
//! and the size-matched oversampling baseline. Every run writes a fixed
//! set of artifacts (`report.json`, `generated.jsonl`, `trace.csv`) to an
//! output directory and embeds enough seeds/configs in the report to
//! reproduce it bit-for-bit on the tiny backend.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_for_augmentation, SpeakerId, SummaryRecord};
use crate::generators::{
    generate_cn, generate_rl, generate_sl, sample_inference_controls, write_generated_jsonl,
    GeneratedConversation, DEFAULT_TURN_RANGE,
};
use crate::lmbridge::{
    load_causal, load_seq2seq, CausalLm, SamplingParams, Seq2SeqLm, TinyCausalLm, TinyLmConfig,
    TinySeq2Seq, TrainConfig, Vocab,
};
use crate::metrics::{evaluate_summaries, MetricReport};
use crate::rlloop::{train_rl, PpoConfig, PpoTrace};
use crate::seqformat::{encode_sl, linearize, training_sequences_cn, MAX_TURNS_TO_GO};
use crate::{Error, Result};

/// Model backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum Backend {
    /// Train randomly initialized tiny models from scratch.
    Tiny,
    /// Load previously saved checkpoints from the cache directory.
    Pretrained,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Tiny => "tiny",
            Backend::Pretrained => "pretrained",
        })
    }
}

/// Checkpoint cache directory; `CONVFORGE_CACHE` overrides the default
/// `.convforge-cache` under the current directory.
pub fn cache_dir() -> PathBuf {
    std::env::var_os("CONVFORGE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".convforge-cache"))
}

/// Generation strategy used for augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum AugMethod {
    Sl,
    Rl,
    Cn,
    Oversample,
}

impl std::fmt::Display for AugMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AugMethod::Sl => "sl",
            AugMethod::Rl => "rl",
            AugMethod::Cn => "cn",
            AugMethod::Oversample => "oversample",
        })
    }
}

/// Full recipe for one augmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub x_percent: f64,
    pub method: AugMethod,
    pub seed: u64,
    pub generator_params: SamplingParams,
    pub generator_cfg: TrainConfig,
    pub summarizer_cfg: TrainConfig,
    /// PPO settings; only read when `method` is RL.
    pub rl_cfg: PpoConfig,
    /// Replace holdout originals with generated conversations instead of
    /// appending; off by default (the augmented set then contains each
    /// holdout summary twice).
    pub replace_mode: bool,
    pub model_cfg: TinyLmConfig,
}

impl AugmentationPlan {
    /// Plan sized for the tiny backend: short training runs and a small
    /// PPO budget so a full experiment finishes in seconds to minutes.
    pub fn tiny(x_percent: f64, method: AugMethod, seed: u64) -> Self {
        AugmentationPlan {
            x_percent,
            method,
            seed,
            generator_params: SamplingParams {
                min_length: 4,
                max_length: 96,
                ..SamplingParams::default()
            },
            generator_cfg: TrainConfig::tiny(6),
            summarizer_cfg: TrainConfig::tiny(4),
            rl_cfg: PpoConfig {
                steps: 3,
                batch_size: 4,
                learning_rate: 1e-3,
                ..PpoConfig::default()
            },
            replace_mode: false,
            model_cfg: TinyLmConfig::default(),
        }
    }

    /// Plan with the full-scale reference hyperparameters.
    pub fn reference(x_percent: f64, method: AugMethod, seed: u64) -> Self {
        AugmentationPlan {
            x_percent,
            method,
            seed,
            generator_params: SamplingParams::default(),
            generator_cfg: TrainConfig::causal_default(),
            summarizer_cfg: TrainConfig::seq2seq_default(),
            rl_cfg: PpoConfig::default(),
            replace_mode: false,
            model_cfg: TinyLmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.x_percent && self.x_percent < 100.0) {
            return Err(Error::Validation(format!(
                "x_percent must be in (0, 100), got {}",
                self.x_percent
            )));
        }
        if self.method == AugMethod::Oversample {
            return Err(Error::Validation(
                "oversample is a baseline; use run_oversampling_baseline".into(),
            ));
        }
        self.generator_params.validate()?;
        self.generator_cfg.validate()?;
        self.summarizer_cfg.validate()?;
        self.rl_cfg.validate()?;
        Ok(())
    }
}

/// Split-hygiene check embedded in every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdAudit {
    /// Generated ids that are not holdout ids (must be empty).
    pub generated_outside_holdout: Vec<String>,
    /// Test ids that also appear in the training split (must be empty).
    pub test_overlap: Vec<String>,
    /// Ids appearing on both sides of the x-split (must be empty).
    pub split_overlap: Vec<String>,
}

impl IdAudit {
    pub fn passed(&self) -> bool {
        self.generated_outside_holdout.is_empty()
            && self.test_overlap.is_empty()
            && self.split_overlap.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub original_train: usize,
    pub generator_train: usize,
    pub holdout: usize,
    pub augmented: usize,
    pub test: usize,
}

/// Everything produced by one experiment run; serialized as
/// `report.json`. Contains no timestamps so identical runs produce
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: AugmentationPlan,
    pub backend: Backend,
    pub dataset_sizes: DatasetSizes,
    pub well_formed: usize,
    pub fallback_turns: usize,
    pub summary_metrics: MetricReport,
    pub baseline_metrics: Option<MetricReport>,
    pub id_audit: IdAudit,
    /// Artifact name -> path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
}

impl ExperimentReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;
        Ok(())
    }
}

fn require_conversation(r: &SummaryRecord) -> Result<&crate::corpus::Conversation> {
    r.conversation
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("record {} has no conversation", r.id)))
}

fn summarization_pairs(records: &[SummaryRecord]) -> Result<Vec<(String, String)>> {
    records
        .iter()
        .map(|r| {
            let conv = require_conversation(r)?;
            Ok((linearize(&conv.turns), r.summary.clone()))
        })
        .collect()
}

fn max_speaker_count(records: &[SummaryRecord]) -> usize {
    records
        .iter()
        .filter_map(|r| r.conversation.as_ref())
        .map(|c| c.speakers().len())
        .max()
        .unwrap_or(2)
        .max(2)
}

/// Vocabulary over every text the models will see: SL and CN training
/// sequences plus bare summaries and linearized conversations.
fn build_vocab(records: &[SummaryRecord]) -> Result<Vocab> {
    let mut texts: Vec<String> = Vec::new();
    for r in records {
        let conv = require_conversation(r)?;
        texts.push(encode_sl(&r.summary, Some(conv))?.text);
        for enc in training_sequences_cn(r)? {
            texts.push(enc.text);
        }
    }
    Ok(Vocab::build(
        texts.iter().map(|s| s.as_str()),
        max_speaker_count(records),
    ))
}

fn train_generator(
    records: &[SummaryRecord],
    vocab: &Vocab,
    plan: &AugmentationPlan,
) -> Result<(TinyCausalLm, PpoTrace)> {
    let model_cfg = TinyLmConfig {
        seed: plan.seed,
        ..plan.model_cfg.clone()
    };
    let mut model = TinyCausalLm::new(vocab.clone(), model_cfg);
    let mut trace = PpoTrace::default();
    match plan.method {
        AugMethod::Sl | AugMethod::Rl => {
            let seqs: Vec<_> = records
                .iter()
                .map(|r| encode_sl(&r.summary, Some(require_conversation(r)?)))
                .collect::<Result<_>>()?;
            model.finetune(&seqs, &plan.generator_cfg)?;
            if plan.method == AugMethod::Rl {
                // reward summarizer trained on the same x% side the
                // policy saw, so the holdout stays untouched
                let mut reward_summarizer = TinySeq2Seq::new(
                    vocab.clone(),
                    TinyLmConfig {
                        seed: plan.seed.wrapping_add(1),
                        ..plan.model_cfg.clone()
                    },
                );
                reward_summarizer.finetune(&summarization_pairs(records)?, &plan.summarizer_cfg)?;
                let reference = model.clone();
                let summaries: Vec<String> = records.iter().map(|r| r.summary.clone()).collect();
                let rl_params = SamplingParams {
                    seed: plan.seed,
                    ..plan.generator_params.clone()
                };
                trace = train_rl(
                    &mut model,
                    &reference,
                    &reward_summarizer,
                    &summaries,
                    &plan.rl_cfg,
                    &rl_params,
                )?;
            }
        }
        AugMethod::Cn => {
            let mut seqs = Vec::new();
            for r in records {
                seqs.extend(training_sequences_cn(r)?);
            }
            model.finetune(&seqs, &plan.generator_cfg)?;
        }
        AugMethod::Oversample => unreachable!("rejected by validate"),
    }
    Ok((model, trace))
}

fn generate_for_holdout(
    model: &dyn CausalLm,
    holdout: &[SummaryRecord],
    plan: &AugmentationPlan,
) -> Result<Vec<GeneratedConversation>> {
    let mut out = Vec::with_capacity(holdout.len());
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(0x67656e));
    for record in holdout {
        let params = SamplingParams {
            seed: rng.gen(),
            ..plan.generator_params.clone()
        };
        let generated = match plan.method {
            AugMethod::Sl => generate_sl(model, &record.id, &record.summary, &params)?,
            AugMethod::Rl => generate_rl(model, &record.id, &record.summary, &params)?,
            AugMethod::Cn => {
                // condition on the speaker roster of the original
                // conversation when present; otherwise assume a dialogue
                let speakers = record
                    .conversation
                    .as_ref()
                    .map(|c| c.speakers())
                    .filter(|s| !s.is_empty())
                    .unwrap_or_else(|| vec![SpeakerId::new(0), SpeakerId::new(1)]);
                let range = (
                    DEFAULT_TURN_RANGE.0.min(MAX_TURNS_TO_GO),
                    DEFAULT_TURN_RANGE.1.min(MAX_TURNS_TO_GO),
                );
                let controls = sample_inference_controls(range, &speakers, rng.gen())?;
                generate_cn(model, &record.id, &record.summary, &controls, &params)?
            }
            AugMethod::Oversample => unreachable!("rejected by validate"),
        };
        out.push(generated);
    }
    Ok(out)
}

fn audit_ids(
    gen_side: &[SummaryRecord],
    holdout: &[SummaryRecord],
    test: &[SummaryRecord],
    generated: &[GeneratedConversation],
) -> IdAudit {
    let gen_ids: BTreeSet<&str> = gen_side.iter().map(|r| r.id.as_str()).collect();
    let holdout_ids: BTreeSet<&str> = holdout.iter().map(|r| r.id.as_str()).collect();
    IdAudit {
        generated_outside_holdout: generated
            .iter()
            .filter(|g| !holdout_ids.contains(g.id.as_str()))
            .map(|g| g.id.clone())
            .collect(),
        test_overlap: test
            .iter()
            .filter(|r| gen_ids.contains(r.id.as_str()) || holdout_ids.contains(r.id.as_str()))
            .map(|r| r.id.clone())
            .collect(),
        split_overlap: gen_ids
            .intersection(&holdout_ids)
            .map(|s| s.to_string())
            .collect(),
    }
}

fn train_and_evaluate_summarizer(
    pairs: &[(String, String)],
    test: &[SummaryRecord],
    cfg: &TrainConfig,
    model_cfg: &TinyLmConfig,
    seed: u64,
) -> Result<(TinySeq2Seq, MetricReport)> {
    let mut texts: Vec<&str> = Vec::new();
    for (src, tgt) in pairs {
        texts.push(src);
        texts.push(tgt);
    }
    let vocab = Vocab::build(texts, 2);
    let mut summarizer = TinySeq2Seq::new(
        vocab,
        TinyLmConfig {
            seed,
            ..model_cfg.clone()
        },
    );
    summarizer.finetune(pairs, cfg)?;

    let mut machine = Vec::with_capacity(test.len());
    let mut refs = Vec::with_capacity(test.len());
    for r in test {
        let conv = require_conversation(r)?;
        machine.push(summarizer.summarize(&linearize(&conv.turns))?);
        refs.push(r.summary.clone());
    }
    let report = evaluate_summaries(&machine, &refs)?;
    Ok((summarizer, report))
}

/// Runs the full augmentation protocol and writes `report.json`,
/// `generated.jsonl` and `trace.csv` into `out_dir`.
///
/// Steps: split the training set by `x_percent`, train the chosen
/// generator on the x% side, generate one conversation per holdout
/// summary, append those (summary, generated conversation) pairs to the
/// full original training set, train a fresh summarizer on the augmented
/// set, and evaluate it on the untouched test split.
pub fn run_augmentation(
    train: &[SummaryRecord],
    test: &[SummaryRecord],
    plan: &AugmentationPlan,
    backend: Backend,
    out_dir: &Path,
) -> Result<ExperimentReport> {
    plan.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation(
            "train and test splits must be non-empty".into(),
        ));
    }
    let train_ids: BTreeSet<&str> = train.iter().map(|r| r.id.as_str()).collect();
    if train_ids.len() != train.len() {
        return Err(Error::Validation("duplicate ids in training split".into()));
    }
    if let Some(r) = test.iter().find(|r| train_ids.contains(r.id.as_str())) {
        return Err(Error::Validation(format!(
            "test split shares id {} with the training split",
            r.id
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    // (1) split
    let (gen_side, holdout) = split_for_augmentation(train, plan.x_percent, plan.seed)?;

    // (2) train or load the generator
    let vocab = build_vocab(train)?;
    let (generator, trace) = match backend {
        Backend::Tiny => train_generator(&gen_side, &vocab, plan)?,
        Backend::Pretrained => {
            let dir = cache_dir().join(format!("generator-{}", plan.method));
            (load_causal(&dir)?, PpoTrace::default())
        }
    };
    generator.save(&out_dir.join("generator"))?;
    trace.write_csv(&out_dir.join("trace.csv"))?;

    // (3) generate for the holdout and build the augmented set
    let generated = generate_for_holdout(&generator, &holdout, plan)?;
    let well_formed = generated.iter().filter(|g| g.well_formed).count();
    if well_formed == 0 {
        return Err(Error::Validation(format!(
            "generator produced 0 well-formed conversations out of {}; refusing to augment",
            generated.len()
        )));
    }
    let fallback_turns = generated.iter().map(|g| g.fallback_turns).sum();
    write_generated_jsonl(&out_dir.join("generated.jsonl"), &generated)?;

    let mut pairs = if plan.replace_mode {
        summarization_pairs(&gen_side)?
    } else {
        summarization_pairs(train)?
    };
    let by_id: BTreeMap<&str, &SummaryRecord> =
        holdout.iter().map(|r| (r.id.as_str(), r)).collect();
    for g in &generated {
        let record = by_id
            .get(g.id.as_str())
            .ok_or_else(|| Error::Validation(format!("generated id {} not in holdout", g.id)))?;
        pairs.push((g.linearized(), record.summary.clone()));
    }
    let augmented_size = pairs.len();

    // (4) fresh summarizer on the augmented set, evaluated on test
    let (summarizer, summary_metrics) = train_and_evaluate_summarizer(
        &pairs,
        test,
        &plan.summarizer_cfg,
        &plan.model_cfg,
        plan.seed.wrapping_add(2),
    )?;
    summarizer.save(&out_dir.join("summarizer"))?;

    let report = ExperimentReport {
        plan: plan.clone(),
        backend,
        dataset_sizes: DatasetSizes {
            original_train: train.len(),
            generator_train: gen_side.len(),
            holdout: holdout.len(),
            augmented: augmented_size,
            test: test.len(),
        },
        well_formed,
        fallback_turns,
        summary_metrics,
        baseline_metrics: None,
        id_audit: audit_ids(&gen_side, &holdout, test, &generated),
        artifacts: BTreeMap::from([
            ("report".to_string(), "report.json".to_string()),
            ("generated".to_string(), "generated.jsonl".to_string()),
            ("trace".to_string(), "trace.csv".to_string()),
            ("generator".to_string(), "generator".to_string()),
            ("summarizer".to_string(), "summarizer".to_string()),
        ]),
    };
    report.write(out_dir)?;
    Ok(report)
}

/// Size-matched control: duplicate `round(pct/100 · |train|)` uniformly
/// chosen original pairs instead of adding generated content, then train
/// and evaluate the summarizer the same way.
pub fn run_oversampling_baseline(
    train: &[SummaryRecord],
    test: &[SummaryRecord],
    pct: f64,
    seed: u64,
    summarizer_cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<ExperimentReport> {
    if pct <= 0.0 {
        return Err(Error::Validation(format!("pct must be > 0, got {pct}")));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation(
            "train and test splits must be non-empty".into(),
        ));
    }
    summarizer_cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let k = (pct / 100.0 * train.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = summarization_pairs(train)?;
    for _ in 0..k {
        let r = &train[rng.gen_range(0..train.len())];
        let conv = require_conversation(r)?;
        pairs.push((linearize(&conv.turns), r.summary.clone()));
    }
    let augmented_size = pairs.len();

    let model_cfg = TinyLmConfig::default();
    let (summarizer, summary_metrics) =
        train_and_evaluate_summarizer(&pairs, test, summarizer_cfg, &model_cfg, seed)?;
    summarizer.save(&out_dir.join("summarizer"))?;
    std::fs::write(out_dir.join("generated.jsonl"), "")?;
    PpoTrace::default().write_csv(&out_dir.join("trace.csv"))?;

    let mut plan = AugmentationPlan::tiny(pct.clamp(1.0, 99.0), AugMethod::Sl, seed);
    plan.method = AugMethod::Oversample;
    plan.x_percent = pct;
    plan.summarizer_cfg = summarizer_cfg.clone();
    let report = ExperimentReport {
        plan,
        backend: Backend::Tiny,
        dataset_sizes: DatasetSizes {
            original_train: train.len(),
            generator_train: 0,
            holdout: 0,
            augmented: augmented_size,
            test: test.len(),
        },
        well_formed: 0,
        fallback_turns: 0,
        summary_metrics,
        baseline_metrics: None,
        id_audit: IdAudit::default(),
        artifacts: BTreeMap::from([
            ("report".to_string(), "report.json".to_string()),
            ("summarizer".to_string(), "summarizer".to_string()),
        ]),
    };
    report.write(out_dir)?;
    Ok(report)
}

/// Loads the checkpointed summarizer used by `--backend pretrained`
/// standalone evaluation.
pub fn load_pretrained_summarizer() -> Result<TinySeq2Seq> {
    load_seq2seq(&cache_dir().join("summarizer"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Conversation, Split, Turn};

    fn record(i: usize, split: Split) -> SummaryRecord {
        let turns = vec![
            Turn::new(SpeakerId::new(0), &format!("hello there {i}")).unwrap(),
            Turn::new(SpeakerId::new(1), &format!("hi friend {i} see you soon")).unwrap(),
        ];
        SummaryRecord {
            id: format!("{split}-{i}"),
            summary: format!("person_0 greets person_1 number {i}"),
            conversation: Some(Conversation::new(format!("{split}-{i}"), turns).unwrap()),
            split,
        }
    }

    fn corpus(n: usize, split: Split) -> Vec<SummaryRecord> {
        (0..n).map(|i| record(i, split)).collect()
    }

    fn fast_plan(method: AugMethod) -> AugmentationPlan {
        let mut plan = AugmentationPlan::tiny(30.0, method, 7);
        plan.generator_cfg = TrainConfig::tiny(1);
        plan.summarizer_cfg = TrainConfig::tiny(1);
        plan.rl_cfg.steps = 1;
        plan.rl_cfg.batch_size = 2;
        plan.generator_params.max_length = 48;
        plan
    }

    #[test]
    fn augmentation_size_accounting_and_audit() {
        let train = corpus(20, Split::Train);
        let test = corpus(4, Split::Test);
        let dir = tempfile::tempdir().unwrap();
        let report = run_augmentation(
            &train,
            &test,
            &fast_plan(AugMethod::Sl),
            Backend::Tiny,
            dir.path(),
        )
        .unwrap();
        assert_eq!(report.dataset_sizes.original_train, 20);
        assert_eq!(report.dataset_sizes.generator_train, 6); // round(0.3 * 20)
        assert_eq!(report.dataset_sizes.holdout, 14);
        assert_eq!(report.dataset_sizes.augmented, 34);
        assert!(report.id_audit.passed());
        for f in ["report.json", "generated.jsonl", "trace.csv"] {
            assert!(dir.path().join(f).exists(), "missing {f}");
        }
        assert!(dir.path().join("generator/weights.json").exists());
        assert!(dir.path().join("summarizer/weights.json").exists());
    }

    #[test]
    fn cn_augmentation_generates_exact_turn_counts() {
        let train = corpus(12, Split::Train);
        let test = corpus(3, Split::Test);
        let dir = tempfile::tempdir().unwrap();
        let report = run_augmentation(
            &train,
            &test,
            &fast_plan(AugMethod::Cn),
            Backend::Tiny,
            dir.path(),
        )
        .unwrap();
        assert_eq!(report.well_formed, report.dataset_sizes.holdout);
        let generated =
            crate::generators::read_generated_jsonl(&dir.path().join("generated.jsonl")).unwrap();
        for g in &generated {
            let controls = g.controls.as_ref().expect("cn records carry controls");
            assert_eq!(g.turns.len(), controls.len());
        }
    }

    #[test]
    fn rl_augmentation_writes_nonempty_trace() {
        let train = corpus(10, Split::Train);
        let test = corpus(2, Split::Test);
        let dir = tempfile::tempdir().unwrap();
        run_augmentation(
            &train,
            &test,
            &fast_plan(AugMethod::Rl),
            Backend::Tiny,
            dir.path(),
        )
        .unwrap();
        let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert!(
            trace.lines().count() >= 2,
            "trace should have at least one step row"
        );
    }

    #[test]
    fn augmentation_is_deterministic() {
        let train = corpus(10, Split::Train);
        let test = corpus(2, Split::Test);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let plan = fast_plan(AugMethod::Sl);
        run_augmentation(&train, &test, &plan, Backend::Tiny, d1.path()).unwrap();
        run_augmentation(&train, &test, &plan, Backend::Tiny, d2.path()).unwrap();
        for f in ["report.json", "generated.jsonl", "trace.csv"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs between identical runs");
        }
    }

    #[test]
    fn overlapping_test_split_is_rejected() {
        let train = corpus(10, Split::Train);
        let err = run_augmentation(
            &train,
            &train[..2],
            &fast_plan(AugMethod::Sl),
            Backend::Tiny,
            tempfile::tempdir().unwrap().path(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("shares id"));
    }

    #[test]
    fn oversampling_size_parity() {
        let train = corpus(10, Split::Train);
        let test = corpus(2, Split::Test);
        let dir = tempfile::tempdir().unwrap();
        let report =
            run_oversampling_baseline(&train, &test, 30.0, 7, &TrainConfig::tiny(1), dir.path())
                .unwrap();
        assert_eq!(report.dataset_sizes.augmented, 13); // 10 + round(3)
        assert_eq!(report.plan.method, AugMethod::Oversample);
    }

    #[test]
    fn pretrained_backend_reloads_saved_generator() {
        let train = corpus(10, Split::Train);
        let test = corpus(2, Split::Test);
        let tiny_out = tempfile::tempdir().unwrap();
        let plan = fast_plan(AugMethod::Sl);
        let first = run_augmentation(&train, &test, &plan, Backend::Tiny, tiny_out.path()).unwrap();

        let cache = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(cache.path()).unwrap();
        // stage the checkpoint where the pretrained backend looks
        let src = tiny_out.path().join("generator");
        let dst = cache.path().join("generator-sl");
        std::fs::create_dir_all(&dst).unwrap();
        for f in ["config.json", "vocab.json", "weights.json"] {
            std::fs::copy(src.join(f), dst.join(f)).unwrap();
        }
        std::env::set_var("CONVFORGE_CACHE", cache.path());
        let out2 = tempfile::tempdir().unwrap();
        let second =
            run_augmentation(&train, &test, &plan, Backend::Pretrained, out2.path()).unwrap();
        std::env::remove_var("CONVFORGE_CACHE");
        assert_eq!(
            first.dataset_sizes.augmented,
            second.dataset_sizes.augmented
        );
    }
}
