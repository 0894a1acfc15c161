//! Turn-by-turn generation under control tokens: the number of turns,
//! the speaker of each turn, and its length bucket are all fixed up
//! front, and the generator fills in the utterances.
//!
//! Run with: cargo run --release --example controlled_generation

use convforge::corpus::{Conversation, SpeakerId, SummaryRecord, Turn};
use convforge::generators::{generate_cn, sample_inference_controls};
use convforge::lmbridge::{
    CausalLm, SamplingParams, TinyCausalLm, TinyLmConfig, TrainConfig, Vocab,
};
use convforge::seqformat::training_sequences_cn;

fn main() -> anyhow::Result<()> {
    let mut records = Vec::new();
    for i in 0..40 {
        let turns = vec![
            Turn::new(SpeakerId::new(0), "hey are you free tonight")?,
            Turn::new(SpeakerId::new(1), "yes")?,
            Turn::new(SpeakerId::new(0), "let us watch the new film at eight")?,
            Turn::new(SpeakerId::new(1), "perfect see you there")?,
        ];
        records.push(SummaryRecord {
            id: format!("cn-{i}"),
            summary: "person_0 and person_1 will watch a film at eight".into(),
            conversation: Some(Conversation::new(format!("cn-{i}"), turns)?),
            split: convforge::corpus::Split::Train,
        });
    }

    let mut sequences = Vec::new();
    for r in &records {
        sequences.extend(training_sequences_cn(r)?);
    }
    println!("control-token training sequence:\n{}\n", sequences[0].text);

    let texts: Vec<&str> = sequences.iter().map(|s| s.text.as_str()).collect();
    let vocab = Vocab::build(texts, 2);
    let mut model = TinyCausalLm::new(vocab, TinyLmConfig::default());
    model.finetune(&sequences, &TrainConfig::tiny(6))?;

    let speakers = vec![SpeakerId::new(0), SpeakerId::new(1)];
    let controls = sample_inference_controls((3, 6), &speakers, 7)?;
    println!("sampled controls:");
    for c in &controls {
        println!(
            "  turns_to_go={} speaker={} length={}",
            c.turns_to_go,
            c.next_speaker,
            c.next_length.as_str()
        );
    }

    let params = SamplingParams {
        min_length: 0,
        seed: 11,
        ..SamplingParams::default()
    };
    let generated = generate_cn(
        &model,
        "demo",
        "person_0 and person_1 will watch a film at eight",
        &controls,
        &params,
    )?;
    println!(
        "\ngenerated exactly {} turns ({} fallbacks):",
        generated.turns.len(),
        generated.fallback_turns
    );
    for turn in &generated.turns {
        println!("  {}: {}", turn.speaker, turn.text);
    }
    Ok(())
}
