//! Train the tiny flat generator on a toy corpus and sample
//! conversations from held-out summaries.
//!
//! Run with: cargo run --release --example train_and_generate

use convforge::corpus::{Conversation, SpeakerId, SummaryRecord, Turn};
use convforge::generators::generate_sl;
use convforge::lmbridge::{
    CausalLm, SamplingParams, TinyCausalLm, TinyLmConfig, TrainConfig, Vocab,
};
use convforge::seqformat::encode_sl;

fn toy_corpus(n: usize) -> Vec<SummaryRecord> {
    let topics = ["lunch", "a movie", "the gym", "a walk", "coffee"];
    (0..n)
        .map(|i| {
            let topic = topics[i % topics.len()];
            let turns = vec![
                Turn::new(SpeakerId::new(0), &format!("want to go for {topic} later?")).unwrap(),
                Turn::new(SpeakerId::new(1), "sure, sounds good").unwrap(),
                Turn::new(SpeakerId::new(0), "great, see you then").unwrap(),
            ];
            SummaryRecord {
                id: format!("toy-{i}"),
                summary: format!("person_0 and person_1 agree to go for {topic}"),
                conversation: Some(Conversation::new(format!("toy-{i}"), turns).unwrap()),
                split: convforge::corpus::Split::Train,
            }
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let records = toy_corpus(50);
    let sequences: Vec<_> = records
        .iter()
        .map(|r| encode_sl(&r.summary, r.conversation.as_ref()))
        .collect::<convforge::Result<_>>()?;

    let texts: Vec<&str> = sequences.iter().map(|s| s.text.as_str()).collect();
    let vocab = Vocab::build(texts, 2);
    let mut model = TinyCausalLm::new(vocab, TinyLmConfig::default());

    let report = model.finetune(&sequences, &TrainConfig::tiny(8))?;
    println!(
        "loss per epoch: {}",
        report
            .epoch_losses
            .iter()
            .map(|l| format!("{l:.3}"))
            .collect::<Vec<_>>()
            .join(" -> ")
    );

    let params = SamplingParams {
        min_length: 4,
        max_length: 80,
        seed: 42,
        ..SamplingParams::default()
    };
    for summary in [
        "person_0 and person_1 agree to go for coffee",
        "person_0 and person_1 agree to go for a movie",
    ] {
        let generated = generate_sl(&model, "demo", summary, &params)?;
        println!("\nsummary:  {summary}");
        println!("well-formed: {}", generated.well_formed);
        for turn in &generated.turns {
            println!("  {}: {}", turn.speaker, turn.text);
        }
    }
    Ok(())
}
