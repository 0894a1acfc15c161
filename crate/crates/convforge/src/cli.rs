//! Command-line surface over the library. Every subcommand is a thin
//! wrapper: parse flags, layer configuration (built-in defaults < config
//! file < flags), call into the library, map errors to exit codes.
//!
//! Exit codes: 0 success, 2 validation/usage error, 1 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::corpus::{anonymize, compute_stats, load_dataset, write_dataset, Split, SummaryRecord};
use crate::generators::{
    read_generated_jsonl, write_generated_jsonl, GeneratedConversation, GenerationMode,
    GenerationRequest,
};
use crate::harness::{
    cache_dir, run_augmentation, run_oversampling_baseline, AugMethod, AugmentationPlan, Backend,
};
use crate::lmbridge::{
    load_causal, load_seq2seq, CausalLm, SamplingParams, Seq2SeqLm, TinyCausalLm, TinyLmConfig,
    TinySeq2Seq, TrainConfig, Vocab,
};
use crate::metrics::{evaluate_conversations, evaluate_summaries};
use crate::rlloop::{train_rl, PpoConfig};
use crate::seqformat::{encode_sl, linearize, training_sequences_cn};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "convforge",
    about = "Summary-grounded conversation generation and summarization-data augmentation",
    version
)]
pub struct Cli {
    /// Master seed for model init, splitting and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Model backend: train tiny models from scratch or load checkpoints.
    #[arg(long, global = true, value_enum, default_value_t = Backend::Tiny)]
    pub backend: Backend,

    /// JSON config file; sections override built-in defaults and are in
    /// turn overridden by explicit flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a JSONL dataset, anonymize speakers, write it back out.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the whole-conversation generator on (summary, conversation) pairs.
    TrainSl {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint to continue from (required with --backend pretrained).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Train the seq2seq summarizer on (conversation, summary) pairs.
    TrainSummarizer {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// PPO-finetune a trained generator against a trained summarizer.
    TrainRl {
        #[arg(long)]
        train: PathBuf,
        /// Generator checkpoint directory (the SL-trained policy).
        #[arg(long)]
        generator: PathBuf,
        /// Summarizer checkpoint directory (the reward model).
        #[arg(long)]
        summarizer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the control-token turn-by-turn generator.
    TrainCn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Generate one conversation per input summary.
    Generate {
        /// Generator checkpoint directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: GenerationMode,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score generated conversations or machine summaries against references.
    Evaluate {
        #[arg(long, value_enum)]
        kind: EvalKind,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        references: PathBuf,
    },
    /// Run the full augmentation experiment (or the oversampling baseline).
    Augment {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum)]
        method: AugMethod,
        /// Percentage of the training set used to train the generator.
        #[arg(long)]
        x: f64,
        #[arg(long)]
        out: PathBuf,
        /// Replace holdout originals instead of appending generated pairs.
        #[arg(long)]
        replace: bool,
    },
    /// Print corpus statistics (turn and token counts).
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalKind {
    Conversations,
    Summaries,
}

/// Optional config-file sections; a present section replaces the
/// corresponding built-in defaults wholesale.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub generator_train: Option<TrainConfig>,
    pub summarizer_train: Option<TrainConfig>,
    pub sampling: Option<SamplingParams>,
    pub ppo: Option<PpoConfig>,
    pub model: Option<TinyLmConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let raw = std::fs::read_to_string(p)?;
                serde_json::from_str(&raw)
                    .map_err(|e| Error::Validation(format!("bad config file {}: {e}", p.display())))
            }
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successes, not usage errors
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ (Error::Validation(_) | Error::Parse(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed;
    let backend = cli.backend;
    match cli.command {
        Command::Preprocess {
            input,
            split,
            output,
        } => {
            let records = load_dataset(&input, split)?;
            let cleaned: Vec<SummaryRecord> = records.iter().map(|r| anonymize(r).0).collect();
            write_dataset(&output, &cleaned)?;
            println!(
                "preprocessed {} records -> {}",
                cleaned.len(),
                output.display()
            );
            Ok(())
        }
        Command::TrainSl {
            train,
            out,
            epochs,
            init,
        } => {
            let records = load_dataset(&train, Split::Train)?;
            let seqs = records
                .iter()
                .map(|r| {
                    let conv = r.conversation.as_ref().ok_or_else(|| {
                        Error::Validation(format!("record {} has no conversation", r.id))
                    })?;
                    encode_sl(&r.summary, Some(conv))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut model = init_causal(&records, backend, init.as_deref(), seed, &cfg)?;
            let tc = train_config(cfg.generator_train.clone(), backend, epochs);
            let report = model.finetune(&seqs, &tc)?;
            model.save(&out)?;
            print_train_report(&report, &out);
            Ok(())
        }
        Command::TrainCn {
            train,
            out,
            epochs,
            init,
        } => {
            let records = load_dataset(&train, Split::Train)?;
            let mut seqs = Vec::new();
            for r in &records {
                seqs.extend(training_sequences_cn(r)?);
            }
            let mut model = init_causal(&records, backend, init.as_deref(), seed, &cfg)?;
            let tc = train_config(cfg.generator_train.clone(), backend, epochs);
            let report = model.finetune(&seqs, &tc)?;
            model.save(&out)?;
            print_train_report(&report, &out);
            Ok(())
        }
        Command::TrainSummarizer {
            train,
            out,
            epochs,
            init,
        } => {
            let records = load_dataset(&train, Split::Train)?;
            let pairs = records
                .iter()
                .map(|r| {
                    let conv = r.conversation.as_ref().ok_or_else(|| {
                        Error::Validation(format!("record {} has no conversation", r.id))
                    })?;
                    Ok((linearize(&conv.turns), r.summary.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut model = match (backend, init.as_deref()) {
                (Backend::Pretrained, None) => {
                    return Err(Error::Validation(
                        "--backend pretrained requires --init <checkpoint dir>".into(),
                    ))
                }
                (_, Some(dir)) => load_seq2seq(dir)?,
                (Backend::Tiny, None) => {
                    let mut texts: Vec<&str> = Vec::new();
                    for (src, tgt) in &pairs {
                        texts.push(src);
                        texts.push(tgt);
                    }
                    let vocab = Vocab::build(texts, 2);
                    TinySeq2Seq::new(vocab, model_cfg(&cfg, seed))
                }
            };
            let base = cfg
                .summarizer_train
                .clone()
                .unwrap_or_else(default_summarizer_train);
            let tc = TrainConfig {
                epochs: epochs.unwrap_or(base.epochs),
                ..base
            };
            let report = model.finetune(&pairs, &tc)?;
            model.save(&out)?;
            print_train_report(&report, &out);
            Ok(())
        }
        Command::TrainRl {
            train,
            generator,
            summarizer,
            out,
            steps,
        } => {
            let records = load_dataset(&train, Split::Train)?;
            let summaries: Vec<String> = records.iter().map(|r| r.summary.clone()).collect();
            let mut policy = load_causal(&generator)?;
            let reference = policy.clone();
            let reward_model = load_seq2seq(&summarizer)?;
            let base = cfg.ppo.clone().unwrap_or_else(|| default_ppo(backend));
            let ppo = PpoConfig {
                steps: steps.unwrap_or(base.steps),
                ..base
            };
            let params = SamplingParams {
                seed,
                ..cfg.sampling.clone().unwrap_or_default()
            };
            let trace = train_rl(
                &mut policy,
                &reference,
                &reward_model,
                &summaries,
                &ppo,
                &params,
            )?;
            policy.save(&out)?;
            trace.write_csv(&out.join("trace.csv"))?;
            let last = trace.steps.last();
            println!(
                "ran {} PPO steps ({} skipped); final mean reward {:.4} -> {}",
                trace.steps.len(),
                trace.skipped_steps,
                last.map(|s| s.mean_reward).unwrap_or(0.0),
                out.display()
            );
            Ok(())
        }
        Command::Generate {
            model,
            input,
            mode,
            output,
        } => {
            let model = load_causal(&model)?;
            let records = load_dataset(&input, Split::Train)?;
            let params = SamplingParams {
                seed,
                ..cfg.sampling.clone().unwrap_or_default()
            };
            let generated = generate_records(&model, &records, mode, &params)?;
            write_generated_jsonl(&output, &generated)?;
            let well_formed = generated.iter().filter(|g| g.well_formed).count();
            println!(
                "generated {} conversations ({} well-formed) -> {}",
                generated.len(),
                well_formed,
                output.display()
            );
            Ok(())
        }
        Command::Evaluate {
            kind,
            generated,
            references,
        } => {
            let report = match kind {
                EvalKind::Conversations => {
                    let gen = read_generated_jsonl(&generated)?;
                    let refs = load_dataset(&references, Split::Test)?;
                    let ref_convs = align_references(&gen, &refs)?;
                    evaluate_conversations(&gen, &ref_convs)?
                }
                EvalKind::Summaries => {
                    let gen = load_dataset(&generated, Split::Test)?;
                    let refs = load_dataset(&references, Split::Test)?;
                    let (g, r) = align_summaries(&gen, &refs)?;
                    evaluate_summaries(&g, &r)?
                }
            };
            println!("{}", report.render_table());
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Augment {
            train,
            test,
            method,
            x,
            out,
            replace,
        } => {
            let train_records = load_dataset(&train, Split::Train)?;
            let test_records = load_dataset(&test, Split::Test)?;
            let report = if method == AugMethod::Oversample {
                let sc = cfg
                    .summarizer_train
                    .clone()
                    .unwrap_or_else(default_summarizer_train);
                run_oversampling_baseline(&train_records, &test_records, x, seed, &sc, &out)?
            } else {
                let mut plan = AugmentationPlan::tiny(x, method, seed);
                if let Some(tc) = cfg.generator_train.clone() {
                    plan.generator_cfg = tc;
                }
                if let Some(tc) = cfg.summarizer_train.clone() {
                    plan.summarizer_cfg = tc;
                }
                if let Some(sp) = cfg.sampling.clone() {
                    plan.generator_params = sp;
                }
                if let Some(ppo) = cfg.ppo.clone() {
                    plan.rl_cfg = ppo;
                }
                if let Some(mc) = cfg.model.clone() {
                    plan.model_cfg = mc;
                }
                plan.replace_mode = replace;
                run_augmentation(&train_records, &test_records, &plan, backend, &out)?
            };
            println!(
                "augmented {} -> {} instances; ROUGE-1/2/L on test: {:.2}/{:.2}/{:.2}; report -> {}",
                report.dataset_sizes.original_train,
                report.dataset_sizes.augmented,
                report.summary_metrics.rouge1_f1 * 100.0,
                report.summary_metrics.rouge2_f1 * 100.0,
                report.summary_metrics.rougel_f1 * 100.0,
                out.join("report.json").display()
            );
            Ok(())
        }
        Command::Stats { input } => {
            let records = load_dataset(&input, Split::Train)?;
            let convs: Vec<_> = records
                .iter()
                .filter_map(|r| r.conversation.clone())
                .collect();
            let stats = compute_stats(&convs)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(())
        }
    }
}

fn model_cfg(cfg: &FileConfig, seed: u64) -> TinyLmConfig {
    TinyLmConfig {
        seed,
        ..cfg.model.clone().unwrap_or_default()
    }
}

fn init_causal(
    records: &[SummaryRecord],
    backend: Backend,
    init: Option<&Path>,
    seed: u64,
    cfg: &FileConfig,
) -> Result<TinyCausalLm> {
    match (backend, init) {
        (_, Some(dir)) => load_causal(dir),
        (Backend::Pretrained, None) => {
            let fallback = cache_dir().join("generator");
            if fallback.join("weights.json").exists() {
                load_causal(&fallback)
            } else {
                Err(Error::Validation(
                    "--backend pretrained requires --init <checkpoint dir> (or a cached checkpoint)"
                        .into(),
                ))
            }
        }
        (Backend::Tiny, None) => {
            let mut texts: Vec<String> = Vec::new();
            let mut max_speakers = 2;
            for r in records {
                if let Some(conv) = &r.conversation {
                    texts.push(encode_sl(&r.summary, Some(conv))?.text);
                    for enc in training_sequences_cn(r)? {
                        texts.push(enc.text);
                    }
                    max_speakers = max_speakers.max(conv.speakers().len());
                }
            }
            let vocab = Vocab::build(texts.iter().map(|s| s.as_str()), max_speakers);
            Ok(TinyCausalLm::new(vocab, model_cfg(cfg, seed)))
        }
    }
}

fn default_summarizer_train() -> TrainConfig {
    TrainConfig::tiny(4)
}

fn default_ppo(backend: Backend) -> PpoConfig {
    match backend {
        Backend::Tiny => PpoConfig {
            steps: 5,
            batch_size: 4,
            learning_rate: 1e-3,
            ..PpoConfig::default()
        },
        Backend::Pretrained => PpoConfig::default(),
    }
}

fn train_config(file: Option<TrainConfig>, backend: Backend, epochs: Option<usize>) -> TrainConfig {
    let base = file.unwrap_or_else(|| match backend {
        Backend::Tiny => TrainConfig::tiny(6),
        Backend::Pretrained => TrainConfig::causal_default(),
    });
    TrainConfig {
        epochs: epochs.unwrap_or(base.epochs),
        ..base
    }
}

fn print_train_report(report: &crate::lmbridge::TrainReport, out: &Path) {
    let first = report.epoch_losses.first().copied().unwrap_or(0.0);
    let last = report.epoch_losses.last().copied().unwrap_or(0.0);
    println!(
        "trained {} epochs, loss {first:.4} -> {last:.4} ({} sequences skipped) -> {}",
        report.epoch_losses.len(),
        report.skipped_sequences,
        out.display()
    );
}

fn generate_records(
    model: &dyn CausalLm,
    records: &[SummaryRecord],
    mode: GenerationMode,
    params: &SamplingParams,
) -> Result<Vec<GeneratedConversation>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let per_record = SamplingParams {
            seed: rng.gen(),
            ..params.clone()
        };
        let cn_controls = if mode == GenerationMode::Cn {
            let speakers = record
                .conversation
                .as_ref()
                .map(|c| c.speakers())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| {
                    vec![
                        crate::corpus::SpeakerId::new(0),
                        crate::corpus::SpeakerId::new(1),
                    ]
                });
            Some(crate::generators::sample_inference_controls(
                crate::generators::DEFAULT_TURN_RANGE,
                &speakers,
                rng.gen(),
            )?)
        } else {
            None
        };
        let request = GenerationRequest {
            summary: record.summary.clone(),
            mode,
            params: per_record,
            cn_controls,
        };
        out.push(crate::generators::generate(model, &record.id, &request)?);
    }
    Ok(out)
}

fn align_references(
    generated: &[GeneratedConversation],
    refs: &[SummaryRecord],
) -> Result<Vec<crate::corpus::Conversation>> {
    let by_id: std::collections::BTreeMap<&str, &SummaryRecord> =
        refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let missing: Vec<&str> = generated
        .iter()
        .filter(|g| !by_id.contains_key(g.id.as_str()))
        .map(|g| g.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "reference file missing ids: {}",
            missing.join(", ")
        )));
    }
    generated
        .iter()
        .map(|g| {
            let r = by_id[g.id.as_str()];
            r.conversation
                .clone()
                .ok_or_else(|| Error::Validation(format!("reference {} has no conversation", r.id)))
        })
        .collect()
}

fn align_summaries(
    generated: &[SummaryRecord],
    refs: &[SummaryRecord],
) -> Result<(Vec<String>, Vec<String>)> {
    let by_id: std::collections::BTreeMap<&str, &SummaryRecord> =
        refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let missing: Vec<&str> = generated
        .iter()
        .filter(|g| !by_id.contains_key(g.id.as_str()))
        .map(|g| g.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "reference file missing ids: {}",
            missing.join(", ")
        )));
    }
    Ok((
        generated.iter().map(|g| g.summary.clone()).collect(),
        generated
            .iter()
            .map(|g| by_id[g.id.as_str()].summary.clone())
            .collect(),
    ))
}
