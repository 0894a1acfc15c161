//! End-to-end augmentation experiment on a synthetic corpus: split the
//! training set, train a controlled generator on one side, generate
//! conversations for the holdout summaries, retrain the summarizer on
//! the enlarged set and evaluate on a held-out test split — then the
//! size-matched oversampling baseline for comparison.
//!
//! Run with: cargo run --release --example augment_experiment

use convforge::corpus::{Conversation, SpeakerId, Split, SummaryRecord, Turn};
use convforge::harness::{
    run_augmentation, run_oversampling_baseline, AugMethod, AugmentationPlan, Backend,
};
use convforge::lmbridge::TrainConfig;

fn synthetic(n: usize, split: Split) -> Vec<SummaryRecord> {
    let topics = ["lunch", "tickets", "homework", "the trip", "a gift"];
    (0..n)
        .map(|i| {
            let topic = topics[i % topics.len()];
            let turns = vec![
                Turn::new(SpeakerId::new(0), &format!("did you sort out {topic} yet")).unwrap(),
                Turn::new(SpeakerId::new(1), "almost done").unwrap(),
                Turn::new(SpeakerId::new(0), "ok tell me when you finish").unwrap(),
            ];
            SummaryRecord {
                id: format!("{split}-{i}"),
                summary: format!("person_1 is almost done with {topic}"),
                conversation: Some(Conversation::new(format!("{split}-{i}"), turns).unwrap()),
                split,
            }
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let train = synthetic(60, Split::Train);
    let test = synthetic(10, Split::Test);

    let mut plan = AugmentationPlan::tiny(30.0, AugMethod::Cn, 7);
    plan.generator_cfg = TrainConfig::tiny(4);
    plan.summarizer_cfg = TrainConfig::tiny(3);

    let out = std::env::temp_dir().join("convforge-augment-example");
    let report = run_augmentation(&train, &test, &plan, Backend::Tiny, &out)?;
    println!(
        "augmented: {} train + {} generated = {} instances",
        report.dataset_sizes.original_train,
        report.dataset_sizes.holdout,
        report.dataset_sizes.augmented
    );
    println!(
        "well-formed {}/{}, id audit passed: {}",
        report.well_formed,
        report.dataset_sizes.holdout,
        report.id_audit.passed()
    );
    println!(
        "test-set metrics:\n{}",
        report.summary_metrics.render_table()
    );

    let baseline = run_oversampling_baseline(
        &train,
        &test,
        70.0, // matches the augmentation run's instance count
        7,
        &TrainConfig::tiny(3),
        &out.join("baseline"),
    )?;
    println!(
        "oversampling baseline ({} instances):\n{}",
        baseline.dataset_sizes.augmented,
        baseline.summary_metrics.render_table()
    );
    println!("artifacts in {}", out.display());
    Ok(())
}
