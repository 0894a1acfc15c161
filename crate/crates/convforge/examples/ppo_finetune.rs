//! PPO fine-tuning of the generator with a KL anchor to the supervised
//! policy. To keep the example fast the reward is a simple summary-word
//! coverage score rather than a trained summarizer; the full
//! summarize-then-ROUGE-2 reward is exercised by `augment_experiment`.
//!
//! Run with: cargo run --release --example ppo_finetune

use convforge::lmbridge::{
    CausalLm, SamplingParams, TinyCausalLm, TinyLmConfig, TrainConfig, Vocab,
};
use convforge::rlloop::{train_rl_with_reward, PpoConfig};
use convforge::seqformat::encode_sl;

fn main() -> anyhow::Result<()> {
    let summaries: Vec<String> = (0..12)
        .map(|i| format!("person_0 tells person_1 about plan {i}"))
        .collect();
    let sequences: Vec<_> = summaries
        .iter()
        .map(|s| encode_sl(s, None))
        .collect::<convforge::Result<_>>()?;

    let texts: Vec<&str> = sequences.iter().map(|s| s.text.as_str()).collect();
    let vocab = Vocab::build(texts, 2);
    let mut policy = TinyCausalLm::new(vocab, TinyLmConfig::default());
    // brief supervised warmup so rollouts are not pure noise
    policy.finetune(&sequences, &TrainConfig::tiny(2))?;
    let reference = policy.clone();

    let cfg = PpoConfig {
        steps: 20,
        batch_size: 8,
        learning_rate: 5e-3,
        ..PpoConfig::default()
    };
    let params = SamplingParams {
        min_length: 4,
        max_length: 48,
        seed: 0,
        ..SamplingParams::default()
    };

    // reward: fraction of summary words the generated text mentions
    let trace = train_rl_with_reward(
        &mut policy,
        &reference,
        &summaries,
        &cfg,
        &params,
        |generated, summary| {
            let words: Vec<&str> = summary.split_whitespace().collect();
            let hit = words.iter().filter(|w| generated.contains(**w)).count();
            hit as f64 / words.len() as f64
        },
    )?;

    println!("step  mean_reward  mean_kl  kl_coef");
    for s in &trace.steps {
        println!(
            "{:>4}  {:>11.4}  {:>7.4}  {:>7.4}",
            s.step, s.mean_reward, s.mean_kl, s.kl_coef
        );
    }
    let first = trace.steps.first().map(|s| s.mean_reward).unwrap_or(0.0);
    let last = trace.steps.last().map(|s| s.mean_reward).unwrap_or(0.0);
    println!("\nmean reward {first:.4} -> {last:.4}");
    Ok(())
}
