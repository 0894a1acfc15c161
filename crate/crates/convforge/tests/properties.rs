//! Randomized property tests over the corpus, format, and metric layers.

use proptest::collection::vec;
use proptest::prelude::*;

use convforge::corpus::{
    anonymize, split_for_augmentation, Conversation, SpeakerId, Split, SummaryRecord, Turn,
};
use convforge::metrics::{bleu4, meteor, metric_tokens, rouge_l_f1, rouge_n_f1};
use convforge::seqformat::{
    bucket_length, decode_conversation, encode_cn, encode_sl, linearize, parse_cn, ControlState,
    LengthBucket,
};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn sentence() -> impl Strategy<Value = String> {
    vec(word(), 1..12).prop_map(|ws| ws.join(" "))
}

fn turns(max_turns: usize, max_speakers: usize) -> impl Strategy<Value = Vec<Turn>> {
    vec((0..max_speakers, sentence()), 1..=max_turns).prop_map(|raw| {
        raw.into_iter()
            .map(|(s, text)| Turn::new(SpeakerId::new(s), &text).unwrap())
            .collect()
    })
}

fn name() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{2,7}"
}

proptest! {
    #[test]
    fn anonymization_is_idempotent(
        names in vec(name(), 2..4),
        texts in vec(sentence(), 2..5),
    ) {
        // build a record whose speakers are raw names that also appear in
        // the summary and utterances
        let turns: Vec<Turn> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let speaker = SpeakerId::raw(&names[i % names.len()]).unwrap();
                Turn::new(speaker, &format!("{t} {}", names[(i + 1) % names.len()])).unwrap()
            })
            .collect();
        let record = SummaryRecord {
            id: "p".into(),
            summary: format!("{} talks to {}", names[0], names[1 % names.len()]),
            conversation: Some(Conversation::new("p", turns).unwrap()),
            split: Split::Train,
        };
        let (once, map1) = anonymize(&record);
        let (twice, map2) = anonymize(&once);
        prop_assert_eq!(&once, &twice);
        prop_assert!(!map1.is_empty());
        prop_assert!(map2.is_empty(), "second pass should find nothing to rename");
    }

    #[test]
    fn split_is_a_partition(n in 4usize..60, x in 5.0f64..95.0, seed in any::<u64>()) {
        let records: Vec<SummaryRecord> = (0..n)
            .map(|i| SummaryRecord {
                id: format!("r{i}"),
                summary: format!("summary {i}"),
                conversation: None,
                split: Split::Train,
            })
            .collect();
        let k = (x / 100.0 * n as f64).round() as usize;
        prop_assume!(k > 0 && k < n);
        let (left, right) = split_for_augmentation(&records, x, seed).unwrap();
        prop_assert_eq!(left.len(), k);
        prop_assert_eq!(left.len() + right.len(), n);
        let mut ids: Vec<&str> = left.iter().chain(&right).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), n, "sides overlap or lost records");
        // determinism
        let (left2, _) = split_for_augmentation(&records, x, seed).unwrap();
        prop_assert_eq!(left, left2);
    }

    #[test]
    fn conversation_round_trips_through_text(t in turns(12, 4)) {
        let (parsed, well_formed) = decode_conversation(&linearize(&t));
        prop_assert!(well_formed);
        prop_assert_eq!(parsed, t);
    }

    #[test]
    fn sl_prompt_is_a_prefix_of_the_training_sequence(
        summary in sentence(),
        t in turns(6, 2),
    ) {
        let conv = Conversation::new("x", t).unwrap();
        let prompt = encode_sl(&summary, None).unwrap();
        let full = encode_sl(&summary, Some(&conv)).unwrap();
        prop_assert!(full.text.starts_with(&prompt.text));
    }

    #[test]
    fn bucket_is_total_and_monotone(k in 1usize..40) {
        let text = vec!["w"; k].join(" ");
        let bucket = bucket_length(&text);
        let expected = if k <= 3 {
            LengthBucket::Short
        } else if k <= 10 {
            LengthBucket::Medium
        } else {
            LengthBucket::Long
        };
        prop_assert_eq!(bucket, expected);
    }

    #[test]
    fn cn_encoding_parses_back(
        summary in sentence(),
        context in turns(4, 3),
        ttg in 1usize..=30,
        speaker in 0usize..3,
        bucket_idx in 0usize..3,
        utterance in sentence(),
    ) {
        let control = ControlState {
            turns_to_go: ttg,
            next_speaker: SpeakerId::new(speaker),
            next_length: LengthBucket::ALL[bucket_idx],
        };
        let enc = encode_cn(&summary, &context, &control, Some(&utterance)).unwrap();
        let parsed = parse_cn(&enc.text).unwrap();
        prop_assert_eq!(parsed.summary, summary);
        prop_assert_eq!(parsed.context, context);
        prop_assert_eq!(parsed.control, control);
        prop_assert_eq!(parsed.utterance.as_deref(), Some(utterance.as_str()));
    }

    #[test]
    fn metrics_stay_in_unit_range(a in sentence(), b in sentence()) {
        for v in [
            rouge_n_f1(&a, &b, 1),
            rouge_n_f1(&a, &b, 2),
            rouge_l_f1(&a, &b),
            bleu4(&a, &[&b]).unwrap(),
            meteor(&a, &b),
        ] {
            prop_assert!((0.0..=1.0).contains(&v), "metric out of range: {v}");
        }
    }

    #[test]
    fn identical_texts_score_perfectly(a in sentence()) {
        prop_assert!((rouge_n_f1(&a, &a, 1) - 1.0).abs() < 1e-12);
        prop_assert!((rouge_l_f1(&a, &a) - 1.0).abs() < 1e-12);
        prop_assert!((bleu4(&a, &[&a]).unwrap() - 1.0).abs() < 1e-12);
        // identical texts align in one chunk, so the fragmentation
        // penalty leaves exactly 1 - 0.5/m^3 for m matched tokens
        let m = metric_tokens(&a).len() as f64;
        prop_assert!((meteor(&a, &a) - (1.0 - 0.5 / m.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn rouge_is_symmetric_in_f1(a in sentence(), b in sentence()) {
        prop_assert!((rouge_n_f1(&a, &b, 1) - rouge_n_f1(&b, &a, 1)).abs() < 1e-12);
        prop_assert!((rouge_l_f1(&a, &b) - rouge_l_f1(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn tokenization_is_stable_under_rejoin(a in sentence()) {
        let toks = metric_tokens(&a);
        let rejoined = toks.join(" ");
        prop_assert_eq!(metric_tokens(&rejoined), toks);
    }

    #[test]
    fn disjoint_vocabularies_score_zero(ws in vec("[a-m]{2,6}", 1..8), vs in vec("[n-z]{2,6}", 1..8)) {
        let a = ws.join(" ");
        let b = vs.join(" ");
        prop_assert_eq!(rouge_n_f1(&a, &b, 1), 0.0);
        prop_assert_eq!(rouge_l_f1(&a, &b), 0.0);
    }
}
