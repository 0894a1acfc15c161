//! Dataset loading, speaker anonymization, split handling and corpus statistics.
//!
//! The canonical on-disk format is JSONL, one record per line:
//! `{"id": str, "summary": str, "turns": [{"speaker": str, "text": str}]}`.
//! Ingestion also accepts the raw `dialogue` string field with
//! `Name: utterance` lines.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Canonical speaker tag, `person_<k>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerId(String);

impl SpeakerId {
    pub fn new(k: usize) -> Self {
        SpeakerId(format!("person_{k}"))
    }

    /// Parses a canonical tag; anything else is rejected.
    pub fn parse(s: &str) -> Result<Self> {
        if Self::is_canonical(s) {
            Ok(SpeakerId(s.to_string()))
        } else {
            Err(Error::Validation(format!("invalid speaker id: {s:?}")))
        }
    }

    /// Accepts any non-empty label, canonical or not (raw datasets carry
    /// personal names until `anonymize` runs).
    pub fn raw(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Validation("empty speaker label".into()));
        }
        Ok(SpeakerId(s.to_string()))
    }

    pub fn is_canonical(s: &str) -> bool {
        s.strip_prefix("person_")
            .map(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            .unwrap_or(false)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Surface form of the matching special token, e.g. `<person_0>`.
    pub fn tag(&self) -> String {
        format!("<{}>", self.0)
    }
}

impl fmt::Display for SpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One speaker-attributed utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: SpeakerId,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: SpeakerId, text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Validation("empty utterance".into()));
        }
        Ok(Turn {
            speaker,
            text: text.to_string(),
        })
    }
}

/// Ordered speaker-attributed utterances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Conversation {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        if turns.is_empty() {
            return Err(Error::Validation("conversation has no turns".into()));
        }
        Ok(Conversation {
            id: id.into(),
            turns,
        })
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<SpeakerId> {
        let mut out: Vec<SpeakerId> = Vec::new();
        for t in &self.turns {
            if !out.contains(&t.speaker) {
                out.push(t.speaker.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split: {other:?}"))),
        }
    }
}

/// A summary paired (optionally) with its reference conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub id: String,
    pub summary: String,
    pub conversation: Option<Conversation>,
    pub split: Split,
}

/// Ordered, injective mapping from original personal name to canonical tag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMap {
    entries: Vec<(String, SpeakerId)>,
}

impl NameMap {
    pub fn get(&self, name: &str) -> Option<&SpeakerId> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn insert(&mut self, name: String) -> SpeakerId {
        if let Some(tag) = self.get(&name) {
            return tag.clone();
        }
        let tag = SpeakerId::new(self.entries.len());
        self.entries.push((name, tag.clone()));
        tag
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SpeakerId)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }
}

/// Mean/std description of a conversation corpus (turns and tokens per turn).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub avg_turns: f64,
    pub std_turns: f64,
    pub avg_tokens_per_turn: f64,
    pub std_tokens_per_turn: f64,
    pub n_conversations: usize,
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    speaker: String,
    text: String,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    summary: Option<String>,
    turns: Option<Vec<RawTurn>>,
    dialogue: Option<String>,
}

/// Loads a JSONL dataset, assigning every record to `split`.
///
/// Each line must carry `id`, `summary` and either a structured `turns`
/// array or a raw `dialogue` string with `Name: utterance` lines.
pub fn load_dataset(path: &Path, split: Split) -> Result<Vec<SummaryRecord>> {
    let content = std::fs::read_to_string(path)?;
    parse_dataset(&content, split)
}

/// Parses JSONL content; line numbers in errors are 1-based.
pub fn parse_dataset(content: &str, split: Split) -> Result<Vec<SummaryRecord>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("malformed JSON at line {lineno}: {e}")))?;
        let id = raw
            .id
            .ok_or_else(|| Error::Parse(format!("missing field: id at line {lineno}")))?;
        let summary = raw
            .summary
            .ok_or_else(|| Error::Parse(format!("missing field: summary at line {lineno}")))?;
        if summary.trim().is_empty() {
            return Err(Error::Parse(format!("empty summary at line {lineno}")));
        }
        let conversation = match (raw.turns, raw.dialogue) {
            (Some(turns), _) => {
                let turns = turns
                    .iter()
                    .map(|t| Turn::new(SpeakerId::raw(&t.speaker)?, &t.text))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Parse(format!("bad turn at line {lineno}: {e}")))?;
                Some(
                    Conversation::new(id.clone(), turns)
                        .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?,
                )
            }
            (None, Some(dialogue)) => Some(
                parse_dialogue(&id, &dialogue)
                    .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?,
            ),
            (None, None) => None,
        };
        out.push(SummaryRecord {
            id,
            summary,
            conversation,
            split,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for r in &out {
        if !seen.insert(r.id.clone()) {
            return Err(Error::Validation(format!("duplicate record id: {}", r.id)));
        }
    }
    Ok(out)
}

/// Splits a raw Samsum-style `dialogue` string on newlines and the first
/// colon of each line.
fn parse_dialogue(id: &str, dialogue: &str) -> Result<Conversation> {
    let mut turns = Vec::new();
    for line in dialogue.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, utterance) = line
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("dialogue line without colon: {line:?}")))?;
        turns.push(Turn::new(SpeakerId::raw(name)?, utterance)?);
    }
    Conversation::new(id, turns)
}

/// Replaces personal names with canonical `person_<k>` tags in the summary
/// and every turn. The name inventory is the conversation's speaker labels;
/// assignment order is first appearance as a speaker. Idempotent.
pub fn anonymize(record: &SummaryRecord) -> (SummaryRecord, NameMap) {
    let mut map = NameMap::default();
    let conv = match &record.conversation {
        Some(c) => c,
        None => return (record.clone(), map),
    };

    for turn in &conv.turns {
        let label = turn.speaker.as_str();
        if !SpeakerId::is_canonical(label) {
            map.insert(label.to_string());
        }
    }
    if map.is_empty() {
        return (record.clone(), map);
    }

    let replace = |text: &str| -> String {
        let mut out = text.to_string();
        for (name, tag) in map.iter() {
            // whole-word, case-sensitive
            let pat = Regex::new(&format!(r"\b{}\b", regex::escape(name)))
                .expect("escaped name is a valid pattern");
            out = pat.replace_all(&out, tag.as_str()).into_owned();
        }
        out
    };

    let turns = conv
        .turns
        .iter()
        .map(|t| {
            let speaker = map
                .get(t.speaker.as_str())
                .cloned()
                .unwrap_or_else(|| t.speaker.clone());
            Turn {
                speaker,
                text: replace(&t.text),
            }
        })
        .collect();
    let anonymized = SummaryRecord {
        id: record.id.clone(),
        summary: replace(&record.summary),
        conversation: Some(Conversation {
            id: conv.id.clone(),
            turns,
        }),
        split: record.split,
    };
    (anonymized, map)
}

/// Randomly partitions records into a generator-training side of
/// `round(x_percent/100 * n)` records and a holdout side. Deterministic for
/// a fixed seed; the union is always the full input.
pub fn split_for_augmentation(
    records: &[SummaryRecord],
    x_percent: f64,
    seed: u64,
) -> Result<(Vec<SummaryRecord>, Vec<SummaryRecord>)> {
    if records.is_empty() {
        return Err(Error::Validation("no records to split".into()));
    }
    if !(0.0..=100.0).contains(&x_percent) {
        return Err(Error::Validation(format!(
            "x_percent out of range: {x_percent}"
        )));
    }
    let n = records.len();
    let k = (x_percent / 100.0 * n as f64).round() as usize;
    if k == 0 || k == n {
        return Err(Error::Validation(format!(
            "x_percent={x_percent} leaves an empty side for {n} records"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut left: Vec<usize> = idx[..k].to_vec();
    let mut right: Vec<usize> = idx[k..].to_vec();
    left.sort_unstable();
    right.sort_unstable();
    let pick = |ids: &[usize]| ids.iter().map(|&i| records[i].clone()).collect();
    Ok((pick(&left), pick(&right)))
}

/// Mean/std over turn counts and whitespace tokens per turn.
/// Standard deviations are population deviations.
pub fn compute_stats(conversations: &[Conversation]) -> Result<CorpusStats> {
    if conversations.is_empty() {
        return Err(Error::Validation("no conversations".into()));
    }
    let turn_counts: Vec<f64> = conversations.iter().map(|c| c.turns.len() as f64).collect();
    let token_counts: Vec<f64> = conversations
        .iter()
        .flat_map(|c| c.turns.iter())
        .map(|t| t.text.split_whitespace().count() as f64)
        .collect();
    let (avg_turns, std_turns) = mean_std(&turn_counts);
    let (avg_tokens, std_tokens) = mean_std(&token_counts);
    Ok(CorpusStats {
        avg_turns,
        std_turns,
        avg_tokens_per_turn: avg_tokens,
        std_tokens_per_turn: std_tokens,
        n_conversations: conversations.len(),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Writes records as canonical JSONL.
pub fn write_dataset(path: &Path, records: &[SummaryRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let turns: Vec<BTreeMap<&str, &str>> = r
            .conversation
            .iter()
            .flat_map(|c| c.turns.iter())
            .map(|t| BTreeMap::from([("speaker", t.speaker.as_str()), ("text", t.text.as_str())]))
            .collect();
        let obj = serde_json::json!({
            "id": r.id,
            "summary": r.summary,
            "turns": turns,
        });
        out.push_str(&serde_json::to_string(&obj)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(summary: &str, speakers_texts: &[(&str, &str)]) -> SummaryRecord {
        let turns = speakers_texts
            .iter()
            .map(|(s, t)| Turn::new(SpeakerId::raw(s).unwrap(), t).unwrap())
            .collect();
        SummaryRecord {
            id: "r0".into(),
            summary: summary.into(),
            conversation: Some(Conversation::new("r0", turns).unwrap()),
            split: Split::Train,
        }
    }

    #[test]
    fn parse_two_valid_lines() {
        let content = concat!(
            r#"{"id":"a","summary":"s1","turns":[{"speaker":"person_0","text":"hi"}]}"#,
            "\n",
            r#"{"id":"b","summary":"s2","turns":[{"speaker":"person_0","text":"yo"}]}"#,
            "\n",
        );
        let recs = parse_dataset(content, Split::Train).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "a");
        assert_eq!(recs[1].conversation.as_ref().unwrap().turns[0].text, "yo");
    }

    #[test]
    fn parse_empty_file() {
        assert!(parse_dataset("", Split::Test).unwrap().is_empty());
    }

    #[test]
    fn parse_missing_summary_names_line() {
        let content = r#"{"id":"a","turns":[{"speaker":"x","text":"hi"}]}"#;
        let err = parse_dataset(content, Split::Train).unwrap_err();
        assert!(err.to_string().contains("missing field: summary at line 1"));
    }

    #[test]
    fn parse_raw_dialogue_field() {
        let content = r#"{"id":"a","summary":"s","dialogue":"John: hi there\nAmanda: hello"}"#;
        let recs = parse_dataset(content, Split::Train).unwrap();
        let conv = recs[0].conversation.as_ref().unwrap();
        assert_eq!(conv.turns.len(), 2);
        assert_eq!(conv.turns[0].speaker.as_str(), "John");
        assert_eq!(conv.turns[0].text, "hi there");
    }

    #[test]
    fn anonymize_pasta_example() {
        let r = record(
            "John will be late. Amanda orders pasta.",
            &[("John", "I'll be late"), ("Amanda", "ok John")],
        );
        let (a, map) = anonymize(&r);
        assert_eq!(a.summary, "person_0 will be late. person_1 orders pasta.");
        let conv = a.conversation.unwrap();
        assert_eq!(conv.turns[0].speaker.as_str(), "person_0");
        assert_eq!(conv.turns[1].text, "ok person_0");
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn anonymize_idempotent() {
        let r = record("John is here.", &[("John", "hello"), ("Amanda", "hi John")]);
        let (once, _) = anonymize(&r);
        let (twice, delta) = anonymize(&once);
        assert_eq!(once, twice);
        assert!(delta.is_empty());
    }

    #[test]
    fn anonymize_all_occurrences_share_one_tag() {
        let r = record(
            "John said John would call.",
            &[
                ("John", "John here"),
                ("Amanda", "John?"),
                ("John", "yes John speaking"),
            ],
        );
        let before = count_occurrences(&r, "John");
        let (a, _) = anonymize(&r);
        assert_eq!(count_occurrences(&a, "John"), 0);
        assert_eq!(count_occurrences(&a, "person_0"), before);
    }

    fn count_occurrences(r: &SummaryRecord, needle: &str) -> usize {
        let pat = Regex::new(&format!(r"\b{}\b", regex::escape(needle))).unwrap();
        let mut n = pat.find_iter(&r.summary).count();
        if let Some(c) = &r.conversation {
            for t in &c.turns {
                n += pat.find_iter(&t.text).count();
                if t.speaker.as_str() == needle {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn split_sizes_and_determinism() {
        let records: Vec<SummaryRecord> = (0..100)
            .map(|i| SummaryRecord {
                id: format!("r{i}"),
                summary: format!("s{i}"),
                conversation: None,
                split: Split::Train,
            })
            .collect();
        let (a1, b1) = split_for_augmentation(&records, 30.0, 7).unwrap();
        assert_eq!(a1.len(), 30);
        assert_eq!(b1.len(), 70);
        let (a2, b2) = split_for_augmentation(&records, 30.0, 7).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn split_union_equals_input() {
        let records: Vec<SummaryRecord> = (0..10)
            .map(|i| SummaryRecord {
                id: format!("r{i}"),
                summary: format!("s{i}"),
                conversation: None,
                split: Split::Train,
            })
            .collect();
        let (a, b) = split_for_augmentation(&records, 50.0, 1).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 5);
        let mut ids: Vec<&str> = a.iter().chain(b.iter()).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        let mut expected: Vec<String> = (0..10).map(|i| format!("r{i}")).collect();
        expected.sort();
        assert_eq!(ids, expected.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_empty_side() {
        let records = vec![SummaryRecord {
            id: "a".into(),
            summary: "s".into(),
            conversation: None,
            split: Split::Train,
        }];
        assert!(split_for_augmentation(&records, 30.0, 0).is_err());
    }

    #[test]
    fn stats_uniform_corpus() {
        let turns: Vec<Turn> = (0..4)
            .map(|_| Turn::new(SpeakerId::new(0), "a b c d e").unwrap())
            .collect();
        let conv = Conversation::new("c", turns).unwrap();
        let s = compute_stats(&[conv]).unwrap();
        assert_eq!(s.avg_turns, 4.0);
        assert_eq!(s.std_turns, 0.0);
        assert_eq!(s.avg_tokens_per_turn, 5.0);
        assert_eq!(s.std_tokens_per_turn, 0.0);
    }

    #[test]
    fn stats_two_and_four_turns() {
        let mk = |n: usize| {
            let turns = (0..n)
                .map(|_| Turn::new(SpeakerId::new(0), "x").unwrap())
                .collect();
            Conversation::new("c", turns).unwrap()
        };
        let s = compute_stats(&[mk(2), mk(4)]).unwrap();
        assert_eq!(s.avg_turns, 3.0);
        assert_eq!(s.std_turns, 1.0);
    }

    #[test]
    fn stats_empty_is_error() {
        assert!(compute_stats(&[]).is_err());
    }
}
