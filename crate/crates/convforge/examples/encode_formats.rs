//! Show the linear sequence formats: the flat summary-to-conversation
//! encoding and the control-token encoding used for turn-by-turn
//! generation, plus the parse that recovers a conversation from raw text.
//!
//! Run with: cargo run --example encode_formats

use convforge::corpus::{Conversation, SpeakerId, SummaryRecord, Turn};
use convforge::seqformat::{decode_conversation, encode_sl, training_sequences_cn};

fn main() -> anyhow::Result<()> {
    let conversation = Conversation::new(
        "demo",
        vec![
            Turn::new(SpeakerId::new(0), "do you want to grab lunch?")?,
            Turn::new(SpeakerId::new(1), "sure")?,
            Turn::new(
                SpeakerId::new(0),
                "great, see you at noon by the park entrance then",
            )?,
        ],
    )?;
    let summary = "person_0 and person_1 will have lunch at noon";

    let sl = encode_sl(summary, Some(&conversation))?;
    println!("flat training sequence:\n{}\n", sl.text);

    let prompt = encode_sl(summary, None)?;
    println!("flat generation prompt:\n{}\n", prompt.text);

    let record = SummaryRecord {
        id: "demo".into(),
        summary: summary.into(),
        conversation: Some(conversation.clone()),
        split: convforge::corpus::Split::Train,
    };
    println!("control-token training sequences:");
    for seq in training_sequences_cn(&record)? {
        println!("{}", seq.text);
    }

    // parsing is total: any sampled text yields (turns, well_formed)
    let (turns, well_formed) = decode_conversation("<person_0> lunch? \n<person_1> sure<eos>");
    println!(
        "\nparsed back {} turns (well_formed={well_formed}):",
        turns.len()
    );
    for t in &turns {
        println!("  {}: {}", t.speaker, t.text);
    }
    Ok(())
}
