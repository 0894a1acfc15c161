//! Linear sequence formats for LM training and generation.
//!
//! Two formats are supported: the whole-conversation format
//! `<bos>summary <dialog>conversation<eos>` and the turn-by-turn controlled
//! format `<bos>summary <context>ctx <turns_to_go>N <speaker><person_k>
//! <turn_length>Bucket <turn>utterance<eos>`. Both are parsed back into
//! structure; generated text is untrusted so parsing never fails.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, SpeakerId, SummaryRecord, Turn};
use crate::{Error, Result};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const DIALOG: &str = "<dialog>";
pub const CONTEXT: &str = "<context>";
pub const TURNS_TO_GO: &str = "<turns_to_go>";
pub const SPEAKER: &str = "<speaker>";
pub const TURN_LENGTH: &str = "<turn_length>";
pub const TURN: &str = "<turn>";

/// Values of `turns_to_go` above this are clamped at encode time to bound
/// the control vocabulary.
pub const MAX_TURNS_TO_GO: usize = 30;

/// Structural special tokens (speaker tags `<person_k>` come on top).
pub const STRUCTURAL_TOKENS: [&str; 8] = [
    BOS,
    EOS,
    DIALOG,
    CONTEXT,
    TURNS_TO_GO,
    SPEAKER,
    TURN_LENGTH,
    TURN,
];

fn speaker_tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<person_(\d+)>").expect("valid pattern"))
}

/// Utterance length class: Short (<= 3 tokens), Medium (4-10), Long (> 10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    Short,
    Medium,
    Long,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [
        LengthBucket::Short,
        LengthBucket::Medium,
        LengthBucket::Long,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LengthBucket::Short => "Short",
            LengthBucket::Medium => "Medium",
            LengthBucket::Long => "Long",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Short" => Ok(LengthBucket::Short),
            "Medium" => Ok(LengthBucket::Medium),
            "Long" => Ok(LengthBucket::Long),
            other => Err(Error::Parse(format!("unknown length bucket: {other:?}"))),
        }
    }
}

/// Classifies an utterance by whitespace-token count.
pub fn bucket_length(utterance: &str) -> LengthBucket {
    let n = utterance.split_whitespace().count();
    if n <= 3 {
        LengthBucket::Short
    } else if n > 10 {
        LengthBucket::Long
    } else {
        LengthBucket::Medium
    }
}

/// Per-turn generation constraints for controlled generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlState {
    pub turns_to_go: usize,
    pub next_speaker: SpeakerId,
    pub next_length: LengthBucket,
}

/// Which span of the linearized sequence a token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Summary,
    Conversation,
    Control,
}

/// A linearized token sequence with per-token segment labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEncoding {
    pub text: String,
    pub tokens: Vec<String>,
    pub segment_labels: Vec<Segment>,
    /// Indices of special tokens within `tokens`.
    pub boundaries: Vec<usize>,
}

impl SequenceEncoding {
    fn from_spans(spans: &[(&str, Segment)]) -> Self {
        let mut text = String::new();
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        for (span, seg) in spans {
            text.push_str(span);
            for tok in tokenize(span) {
                tokens.push(tok);
                labels.push(*seg);
            }
        }
        let boundaries = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| is_special_token(t))
            .map(|(i, _)| i)
            .collect();
        SequenceEncoding {
            text,
            tokens,
            segment_labels: labels,
            boundaries,
        }
    }
}

/// True for the eight structural tokens and any `<person_k>` tag.
pub fn is_special_token(tok: &str) -> bool {
    STRUCTURAL_TOKENS.contains(&tok) || speaker_tag_re().is_match(tok)
}

/// Splits text into word tokens, keeping registered special tokens atomic
/// even when they abut other text without whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let re = SPLIT.get_or_init(|| {
        let mut alts: Vec<String> = STRUCTURAL_TOKENS.iter().map(|t| regex::escape(t)).collect();
        alts.push(r"<person_\d+>".to_string());
        Regex::new(&alts.join("|")).expect("valid pattern")
    });
    let mut out = Vec::new();
    let mut pos = 0;
    for m in re.find_iter(text) {
        out.extend(text[pos..m.start()].split_whitespace().map(String::from));
        out.push(m.as_str().to_string());
        pos = m.end();
    }
    out.extend(text[pos..].split_whitespace().map(String::from));
    out
}

/// Linearizes turns as `<person_k> utterance` joined by single newlines.
pub fn linearize(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{} {}", t.speaker.tag(), t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_speakers(conversation: &Conversation) -> Result<()> {
    for t in &conversation.turns {
        if !SpeakerId::is_canonical(t.speaker.as_str()) {
            return Err(Error::Validation(format!(
                "non-canonical speaker in conversation: {:?}",
                t.speaker.as_str()
            )));
        }
    }
    Ok(())
}

/// Whole-conversation encoding. With a conversation this is a full training
/// sequence ending `<eos>`; without, a generation prompt ending at `<dialog>`.
pub fn encode_sl(summary: &str, conversation: Option<&Conversation>) -> Result<SequenceEncoding> {
    if summary.trim().is_empty() {
        return Err(Error::Validation("empty summary".into()));
    }
    match conversation {
        Some(conv) => {
            check_speakers(conv)?;
            let body = linearize(&conv.turns);
            Ok(SequenceEncoding::from_spans(&[
                (BOS, Segment::Control),
                (summary, Segment::Summary),
                (" ", Segment::Summary),
                (DIALOG, Segment::Control),
                (&body, Segment::Conversation),
                (EOS, Segment::Control),
            ]))
        }
        None => Ok(SequenceEncoding::from_spans(&[
            (BOS, Segment::Control),
            (summary, Segment::Summary),
            (" ", Segment::Summary),
            (DIALOG, Segment::Control),
        ])),
    }
}

/// Parses flat (usually generated) text back into a conversation.
///
/// Malformed input is data, not an error: text before the first speaker tag
/// is dropped, empty utterances are dropped, and the well-formedness flag
/// reports whether at least one turn was recovered.
pub fn decode_conversation(text: &str) -> (Vec<Turn>, bool) {
    let re = speaker_tag_re();
    let mut turns = Vec::new();
    let matches: Vec<_> = re.find_iter(text).collect();
    for (i, m) in matches.iter().enumerate() {
        let end = matches.get(i + 1).map(|n| n.start()).unwrap_or(text.len());
        let utterance = text[m.end()..end].trim();
        // cut at any trailing structural token the model may have emitted
        let utterance = STRUCTURAL_TOKENS
            .iter()
            .filter_map(|t| utterance.find(t))
            .min()
            .map(|cut| utterance[..cut].trim())
            .unwrap_or(utterance);
        if utterance.is_empty() {
            continue;
        }
        let k: usize = re
            .captures(m.as_str())
            .and_then(|c| c.get(1))
            .and_then(|g| g.as_str().parse().ok())
            .unwrap_or(0);
        turns.push(Turn {
            speaker: SpeakerId::new(k),
            text: utterance.to_string(),
        });
    }
    let well_formed = !turns.is_empty();
    (turns, well_formed)
}

fn render_context(context: &[Turn]) -> String {
    linearize(context)
}

/// Controlled turn encoding with the exact field order
/// `<bos>summary <context>ctx <turns_to_go>N <speaker><person_k>
/// <turn_length>Bucket <turn>[utterance<eos>]`.
pub fn encode_cn(
    summary: &str,
    context: &[Turn],
    control: &ControlState,
    utterance: Option<&str>,
) -> Result<SequenceEncoding> {
    if summary.trim().is_empty() {
        return Err(Error::Validation("empty summary".into()));
    }
    if control.turns_to_go == 0 {
        return Err(Error::Validation("turns_to_go must be >= 1".into()));
    }
    let ttg = control.turns_to_go.min(MAX_TURNS_TO_GO).to_string();
    let ctx = render_context(context);
    let tag = control.next_speaker.tag();
    let mut spans: Vec<(&str, Segment)> = vec![
        (BOS, Segment::Control),
        (summary, Segment::Summary),
        (" ", Segment::Summary),
        (CONTEXT, Segment::Control),
        (&ctx, Segment::Conversation),
        (" ", Segment::Conversation),
        (TURNS_TO_GO, Segment::Control),
        (&ttg, Segment::Control),
        (" ", Segment::Control),
        (SPEAKER, Segment::Control),
        (&tag, Segment::Control),
        (" ", Segment::Control),
        (TURN_LENGTH, Segment::Control),
        (control.next_length.as_str(), Segment::Control),
        (" ", Segment::Control),
        (TURN, Segment::Control),
    ];
    if let Some(u) = utterance {
        spans.push((u, Segment::Conversation));
        spans.push((EOS, Segment::Control));
    }
    Ok(SequenceEncoding::from_spans(&spans))
}

/// Control fields recovered from an encoded CN sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCn {
    pub summary: String,
    pub context: Vec<Turn>,
    pub control: ControlState,
    pub utterance: Option<String>,
}

/// Inverse of `encode_cn`, used to audit encoded sequences.
pub fn parse_cn(text: &str) -> Result<ParsedCn> {
    let take = |text: &str, from: &str, to: Option<&str>| -> Result<String> {
        let start = text
            .find(from)
            .ok_or_else(|| Error::Parse(format!("missing {from} marker")))?
            + from.len();
        let rest = &text[start..];
        let end = match to {
            Some(t) => rest
                .find(t)
                .ok_or_else(|| Error::Parse(format!("missing {t} marker")))?,
            None => rest.len(),
        };
        Ok(rest[..end].trim().to_string())
    };
    let summary = take(text, BOS, Some(CONTEXT))?;
    let ctx_text = take(text, CONTEXT, Some(TURNS_TO_GO))?;
    let (context, _) = decode_conversation(&ctx_text);
    let ttg: usize = take(text, TURNS_TO_GO, Some(SPEAKER))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad turns_to_go: {e}")))?;
    let speaker_text = take(text, SPEAKER, Some(TURN_LENGTH))?;
    let speaker = speaker_tag_re()
        .captures(&speaker_text)
        .and_then(|c| c.get(1))
        .ok_or_else(|| Error::Parse(format!("bad speaker field: {speaker_text:?}")))?
        .as_str()
        .parse::<usize>()
        .map(SpeakerId::new)
        .map_err(|e| Error::Parse(format!("bad speaker index: {e}")))?;
    let bucket = LengthBucket::parse(&take(text, TURN_LENGTH, Some(TURN))?)?;
    let tail = take(text, TURN, None)?;
    let utterance = match tail.strip_suffix(EOS) {
        Some(u) if !u.trim().is_empty() => Some(u.trim().to_string()),
        _ => None,
    };
    Ok(ParsedCn {
        summary,
        context,
        control: ControlState {
            turns_to_go: ttg,
            next_speaker: speaker,
            next_length: bucket,
        },
        utterance,
    })
}

/// One training sequence per ground-truth turn, with control values read
/// off the conversation: countdown n..1, the turn's speaker, and its
/// length bucket.
pub fn training_sequences_cn(record: &SummaryRecord) -> Result<Vec<SequenceEncoding>> {
    let conv = record
        .conversation
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("record {} has no conversation", record.id)))?;
    check_speakers(conv)?;
    let n = conv.turns.len();
    (0..n)
        .map(|i| {
            let control = ControlState {
                turns_to_go: n - i,
                next_speaker: conv.turns[i].speaker.clone(),
                next_length: bucket_length(&conv.turns[i].text),
            };
            encode_cn(
                &record.summary,
                &conv.turns[..i],
                &control,
                Some(&conv.turns[i].text),
            )
        })
        .collect()
}
