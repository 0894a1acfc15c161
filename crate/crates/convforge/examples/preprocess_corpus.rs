//! Load a raw JSONL corpus, anonymize speaker names, and print stats.
//!
//! Run with: cargo run --example preprocess_corpus

use convforge::corpus::{anonymize, compute_stats, parse_dataset, Split};

fn main() -> anyhow::Result<()> {
    let raw = r#"
{"id": "s1", "summary": "Amanda baked cookies and will bring Jerry some tomorrow.", "dialogue": "Amanda: I baked cookies. Do you want some?\nJerry: Sure!\nAmanda: I'll bring you tomorrow :-)"}
{"id": "s2", "summary": "Hannah needs Betty's number but Larry does not have it.", "turns": [{"speaker": "Hannah", "text": "Hey, do you have Betty's number?"}, {"speaker": "Larry", "text": "Sorry, I don't."}]}
"#;
    let records = parse_dataset(raw, Split::Train)?;
    println!("loaded {} records\n", records.len());

    let mut anonymized = Vec::new();
    for record in &records {
        let (clean, names) = anonymize(record);
        println!("--- {} ---", clean.id);
        println!("summary: {}", clean.summary);
        for turn in &clean.conversation.as_ref().unwrap().turns {
            println!("  {}: {}", turn.speaker, turn.text);
        }
        let mapping: Vec<String> = names
            .iter()
            .map(|(name, tag)| format!("{name} -> {tag}"))
            .collect();
        println!("name map: {}\n", mapping.join(", "));
        anonymized.push(clean);
    }

    let conversations: Vec<_> = anonymized
        .iter()
        .filter_map(|r| r.conversation.clone())
        .collect();
    let stats = compute_stats(&conversations)?;
    println!(
        "{} conversations, {:.2} +/- {:.2} turns, {:.2} +/- {:.2} tokens/turn",
        stats.n_conversations,
        stats.avg_turns,
        stats.std_turns,
        stats.avg_tokens_per_turn,
        stats.std_tokens_per_turn
    );
    Ok(())
}
