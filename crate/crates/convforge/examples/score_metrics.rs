//! The from-scratch overlap metrics: ROUGE-1/2/L, BLEU-4 and the METEOR
//! variant, on individual pairs and as an aggregated report.
//!
//! Run with: cargo run --example score_metrics

use convforge::metrics::{bleu4, meteor, metric_tokens, rouge_l_f1, rouge_n_f1, score_pairs};

fn main() -> anyhow::Result<()> {
    let candidate = "person_0 will be late today";
    let reference = "person_0 will be late";

    println!("candidate tokens: {:?}", metric_tokens(candidate));
    println!("ROUGE-1 F1: {:.4}", rouge_n_f1(candidate, reference, 1));
    println!("ROUGE-2 F1: {:.4}", rouge_n_f1(candidate, reference, 2));
    println!("ROUGE-L F1: {:.4}", rouge_l_f1(candidate, reference));
    println!("BLEU-4:     {:.4}", bleu4(candidate, &[reference])?);
    println!("METEOR:     {:.4}", meteor(candidate, reference));

    // stemming lets METEOR pair inflected variants
    println!(
        "\nMETEOR with stem match (\"parties\" vs \"party\"): {:.4}",
        meteor("the parties were loud", "the party was loud")
    );

    let pairs = vec![
        ("person_0 will be late today", "person_0 will be late"),
        ("they agreed to meet at noon", "they will meet at noon"),
        ("nothing in common here", "a completely different sentence"),
    ];
    let report = score_pairs(&pairs)?;
    println!("\n{}", report.render_table());
    Ok(())
}
