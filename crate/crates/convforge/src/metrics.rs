//! Self-contained text-overlap metrics: ROUGE-N / ROUGE-L F1, BLEU-4 and a
//! lightweight METEOR variant (exact + stem unigram matching, no synonym
//! tables). All metrics share one tokenization — lowercase, whitespace
//! split, leading/trailing punctuation detached — so numbers are
//! reproducible within this artifact. Values are kept in [0, 1]; table
//! rendering multiplies by 100.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Conversation, CorpusStats};
use crate::generators::GeneratedConversation;
use crate::seqformat::linearize;
use crate::{Error, Result};

/// Shared metric tokenizer.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.to_lowercase().split_whitespace() {
        let mut lead = Vec::new();
        let mut chars: Vec<char> = raw.chars().collect();
        while let Some(&c) = chars.first() {
            if c.is_ascii_punctuation() && c != '_' {
                lead.push(c.to_string());
                chars.remove(0);
            } else {
                break;
            }
        }
        let mut trail = Vec::new();
        while let Some(&c) = chars.last() {
            if c.is_ascii_punctuation() && c != '_' {
                trail.push(c.to_string());
                chars.pop();
            } else {
                break;
            }
        }
        out.extend(lead);
        if !chars.is_empty() {
            out.push(chars.into_iter().collect());
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map = HashMap::new();
    if n == 0 || tokens.len() < n {
        return map;
    }
    for w in tokens.windows(n) {
        *map.entry(w).or_insert(0) += 1;
    }
    map
}

/// F1 of clipped n-gram overlap; 0 when either side has fewer than n tokens.
pub fn rouge_n_f1(candidate: &str, reference: &str, n: usize) -> f64 {
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    if cand.len() < n || refr.len() < n {
        return 0.0;
    }
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let overlap: usize = cand_counts
        .iter()
        .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    let cand_total = cand.len() + 1 - n;
    let ref_total = refr.len() + 1 - n;
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// F1 over the longest common subsequence of token sequences.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    let p = lcs / cand.len() as f64;
    let r = lcs / refr.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

const BLEU_EPS: f64 = 1e-9;

struct BleuCounts {
    clipped: [usize; 4],
    total: [usize; 4],
    cand_len: usize,
    ref_len: usize,
    ref_has: [bool; 4],
}

fn bleu_counts(cand: &[String], references: &[Vec<String>]) -> BleuCounts {
    let mut c = BleuCounts {
        clipped: [0; 4],
        total: [0; 4],
        cand_len: cand.len(),
        ref_len: 0,
        ref_has: [false; 4],
    };
    // closest reference length, ties to the shorter
    c.ref_len = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(cand.len()), l))
        .unwrap_or(0);
    for n in 1..=4 {
        let cand_counts = ngram_counts(cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, cnt) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(cnt);
            }
            if r.len() >= n {
                c.ref_has[n - 1] = true;
            }
        }
        c.total[n - 1] = cand.len().saturating_sub(n - 1).min(cand.len());
        if cand.len() < n {
            c.total[n - 1] = 0;
        }
        c.clipped[n - 1] = cand_counts
            .iter()
            .map(|(g, cnt)| (*cnt).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    c
}

fn bleu_from_counts(c: &BleuCounts) -> f64 {
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if c.total[n] == 0 {
            // no candidate n-grams: neutral when the reference has none
            // either, else treat as a miss
            if c.ref_has[n] {
                BLEU_EPS
            } else {
                1.0
            }
        } else if c.clipped[n] == 0 {
            BLEU_EPS
        } else {
            c.clipped[n] as f64 / c.total[n] as f64
        };
        log_sum += p.ln();
    }
    let precision = (log_sum / 4.0).exp();
    let bp = if c.cand_len == 0 {
        0.0
    } else if c.cand_len < c.ref_len {
        (1.0 - c.ref_len as f64 / c.cand_len as f64).exp()
    } else {
        1.0
    };
    (bp * precision).clamp(0.0, 1.0)
}

/// Sentence-level BLEU-4: geometric mean of clipped 1-4-gram precisions
/// with brevity penalty; zero precisions are epsilon-smoothed.
pub fn bleu4(candidate: &str, references: &[&str]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Validation(
            "bleu4 needs at least one reference".into(),
        ));
    }
    let cand = metric_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| metric_tokens(r)).collect();
    Ok(bleu_from_counts(&bleu_counts(&cand, &refs)))
}

/// Corpus-level BLEU-4: counts aggregated over all pairs before combining.
pub fn corpus_bleu4(pairs: &[(&str, &str)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Validation("no pairs".into()));
    }
    let mut agg = BleuCounts {
        clipped: [0; 4],
        total: [0; 4],
        cand_len: 0,
        ref_len: 0,
        ref_has: [false; 4],
    };
    for (cand, refr) in pairs {
        let c = bleu_counts(&metric_tokens(cand), &[metric_tokens(refr)]);
        for n in 0..4 {
            agg.clipped[n] += c.clipped[n];
            agg.total[n] += c.total[n];
            agg.ref_has[n] |= c.ref_has[n];
        }
        agg.cand_len += c.cand_len;
        agg.ref_len += c.ref_len;
    }
    Ok(bleu_from_counts(&agg))
}

/// Light suffix-stripping stemmer used for METEOR stem matches. Both sides
/// of a comparison pass through the same rules, so consistent truncation
/// is what matters, not linguistic fidelity.
pub fn stem(word: &str) -> String {
    let mut w = word.to_string();
    let has_vowel = |s: &str| s.chars().any(|c| "aeiouy".contains(c));
    if let Some(b) = w.strip_suffix("sses") {
        w = format!("{b}ss");
    } else if let Some(b) = w.strip_suffix("ies") {
        w = format!("{b}i");
    } else if w.ends_with('s') && !w.ends_with("ss") && w.len() > 3 {
        w.pop();
    }
    for suf in ["ing", "ed"] {
        if let Some(b) = w.strip_suffix(suf) {
            if b.len() >= 2 && has_vowel(b) {
                w = b.to_string();
                // undouble a trailing double consonant: running -> run
                let bytes = w.as_bytes();
                if bytes.len() >= 2
                    && bytes[bytes.len() - 1] == bytes[bytes.len() - 2]
                    && !"aeiou".contains(bytes[bytes.len() - 1] as char)
                    && !"ls".contains(bytes[bytes.len() - 1] as char)
                {
                    w.pop();
                }
                break;
            }
        }
    }
    if let Some(b) = w.strip_suffix("ly") {
        if b.len() >= 3 {
            w = b.to_string();
        }
    }
    // party -> parti, matching the ies -> i rule
    if w.len() > 3 && w.ends_with('y') {
        let prev = w.as_bytes()[w.len() - 2] as char;
        if !"aeiou".contains(prev) {
            w.pop();
            w.push('i');
        }
    }
    if w.len() > 3 && w.ends_with('e') {
        w.pop();
    }
    w
}

/// Harmonic-mean unigram score with recall weighted 9:1 and the
/// fragmentation penalty `0.5 * (chunks / matches)^3`. Matching runs an
/// exact pass then a stem pass; synonym and paraphrase tables are
/// deliberately absent.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    // alignment[i] = matched reference index for candidate token i
    let mut alignment: Vec<Option<usize>> = vec![None; cand.len()];
    let mut ref_used = vec![false; refr.len()];
    // pass 1: exact
    for (i, c) in cand.iter().enumerate() {
        if let Some(j) = refr
            .iter()
            .enumerate()
            .position(|(j, r)| !ref_used[j] && r == c)
        {
            alignment[i] = Some(j);
            ref_used[j] = true;
        }
    }
    // pass 2: stem
    let cand_stems: Vec<String> = cand.iter().map(|c| stem(c)).collect();
    let ref_stems: Vec<String> = refr.iter().map(|r| stem(r)).collect();
    for i in 0..cand.len() {
        if alignment[i].is_some() {
            continue;
        }
        if let Some(j) = ref_stems
            .iter()
            .enumerate()
            .position(|(j, r)| !ref_used[j] && *r == cand_stems[i])
        {
            alignment[i] = Some(j);
            ref_used[j] = true;
        }
    }
    let matches: Vec<(usize, usize)> = alignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let m = matches.len() as f64;
    if matches.is_empty() {
        return 0.0;
    }
    let p = m / cand.len() as f64;
    let r = m / refr.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let mut chunks = 1usize;
    for w in matches.windows(2) {
        let ((ci, ri), (cj, rj)) = (w[0], w[1]);
        if cj != ci + 1 || rj != ri + 1 {
            chunks += 1;
        }
    }
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    (fmean * (1.0 - penalty)).clamp(0.0, 1.0)
}

/// Macro-averaged metric values over aligned pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rougel_f1: f64,
    pub n_pairs: usize,
    /// Corpus-level BLEU-4, reported alongside the sentence-level mean.
    pub corpus_bleu4: Option<f64>,
    pub corpus_stats: Option<CorpusStats>,
    pub notes: Vec<String>,
}

const METEOR_NOTE: &str = "meteor variant: exact+stem unigram matching, no synonym tables";

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pairwise metrics over aligned candidate/reference strings.
pub fn score_pairs(pairs: &[(&str, &str)]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Validation("no pairs to score".into()));
    }
    let mut b = Vec::new();
    let mut me = Vec::new();
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    let mut rl = Vec::new();
    for (cand, refr) in pairs {
        b.push(bleu4(cand, &[refr])?);
        me.push(meteor(cand, refr));
        r1.push(rouge_n_f1(cand, refr, 1));
        r2.push(rouge_n_f1(cand, refr, 2));
        rl.push(rouge_l_f1(cand, refr));
    }
    Ok(MetricReport {
        bleu4: mean(&b),
        meteor: mean(&me),
        rouge1_f1: mean(&r1),
        rouge2_f1: mean(&r2),
        rougel_f1: mean(&rl),
        n_pairs: pairs.len(),
        corpus_bleu4: Some(corpus_bleu4(pairs)?),
        corpus_stats: None,
        notes: vec![METEOR_NOTE.to_string()],
    })
}

/// Compares generated conversations with aligned references (by id),
/// linearizing both sides with speaker tags. Attaches corpus stats of the
/// generated side.
pub fn evaluate_conversations(
    generated: &[GeneratedConversation],
    refs: &[Conversation],
) -> Result<MetricReport> {
    if generated.len() != refs.len() {
        return Err(Error::Validation(format!(
            "length mismatch: {} generated vs {} references",
            generated.len(),
            refs.len()
        )));
    }
    let mismatched: Vec<String> = generated
        .iter()
        .zip(refs)
        .filter(|(g, r)| g.id != r.id)
        .map(|(g, r)| format!("{} != {}", g.id, r.id))
        .collect();
    if !mismatched.is_empty() {
        return Err(Error::Validation(format!(
            "id mismatch between generated and reference lists: {}",
            mismatched.join(", ")
        )));
    }
    let gen_texts: Vec<String> = generated.iter().map(|g| g.linearized()).collect();
    let ref_texts: Vec<String> = refs.iter().map(|r| linearize(&r.turns)).collect();
    let pairs: Vec<(&str, &str)> = gen_texts
        .iter()
        .map(|g| g.as_str())
        .zip(ref_texts.iter().map(|r| r.as_str()))
        .collect();
    let mut report = score_pairs(&pairs)?;
    let gen_convs: Vec<Conversation> = generated
        .iter()
        .filter(|g| !g.turns.is_empty())
        .map(|g| Conversation {
            id: g.id.clone(),
            turns: g.turns.clone(),
        })
        .collect();
    if !gen_convs.is_empty() {
        report.corpus_stats = Some(corpus::compute_stats(&gen_convs)?);
    }
    Ok(report)
}

/// Mean ROUGE-1/2/L F1 across aligned summary pairs.
pub fn evaluate_summaries(generated: &[String], refs: &[String]) -> Result<MetricReport> {
    if generated.len() != refs.len() {
        return Err(Error::Validation(format!(
            "length mismatch: {} generated vs {} references",
            generated.len(),
            refs.len()
        )));
    }
    let pairs: Vec<(&str, &str)> = generated
        .iter()
        .map(|g| g.as_str())
        .zip(refs.iter().map(|r| r.as_str()))
        .collect();
    score_pairs(&pairs)
}

impl MetricReport {
    /// Compact table rendering (values x100).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "BLEU-4  METEOR  ROUGE-1  ROUGE-2  ROUGE-L   (n={})\n",
            self.n_pairs
        ));
        out.push_str(&format!(
            "{:6.2}  {:6.2}  {:7.2}  {:7.2}  {:7.2}\n",
            self.bleu4 * 100.0,
            self.meteor * 100.0,
            self.rouge1_f1 * 100.0,
            self.rouge2_f1 * 100.0,
            self.rougel_f1 * 100.0,
        ));
        if let Some(cb) = self.corpus_bleu4 {
            out.push_str(&format!("corpus BLEU-4: {:.2}\n", cb * 100.0));
        }
        if let Some(stats) = &self.corpus_stats {
            out.push_str(&format!(
                "generated: {:.2} +/- {:.2} turns, {:.2} +/- {:.2} tokens/turn\n",
                stats.avg_turns,
                stats.std_turns,
                stats.avg_tokens_per_turn,
                stats.std_tokens_per_turn
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rouge_identical_and_disjoint() {
        assert!((rouge_n_f1("a b c", "a b c", 2) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_n_f1("a b c", "x y z", 2), 0.0);
        assert!((rouge_l_f1("a b c", "a b c") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rouge2_worked_example() {
        let v = rouge_n_f1("person_0 will be late today", "person_0 will be late", 2);
        assert!((v - 6.0 / 7.0).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn rouge_short_sides_are_zero() {
        assert_eq!(rouge_n_f1("a", "a b", 2), 0.0);
        assert_eq!(rouge_n_f1("", "a b", 1), 0.0);
    }

    #[test]
    fn rouge_l_worked_example() {
        let v = rouge_l_f1("a b c d", "a x c y");
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(rouge_l_f1("", "a"), 0.0);
    }

    #[test]
    fn bleu_identical_is_one() {
        assert!((bleu4("a b c d e", &["a b c d e"]).unwrap() - 1.0).abs() < 1e-12);
        // shorter than 4 tokens still scores 1.0 against itself
        assert!((bleu4("a b", &["a b"]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty_applies() {
        // perfect precision but shorter than the reference
        let v = bleu4("a b c d", &["a b c d e f g h"]).unwrap();
        assert!(v < 1.0 && v > 0.0);
    }

    #[test]
    fn bleu_needs_references() {
        assert!(bleu4("a", &[]).is_err());
    }

    #[test]
    fn meteor_bounds_and_examples() {
        assert_eq!(meteor("a b c", "x y z"), 0.0);
        // identical: fmean 1, one chunk, penalty 0.5*(1/3)^3
        let v = meteor("a b c", "a b c");
        let expected = 1.0 - 0.5 * (1.0f64 / 3.0).powi(3);
        assert!((v - expected).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn meteor_stem_match_counts() {
        assert_eq!(stem("running"), stem("run"));
        assert!(meteor("running", "run") > 0.0);
    }

    #[test]
    fn stemmer_fixed_word_list() {
        for (a, b) in [
            ("running", "run"),
            ("orders", "order"),
            ("ordered", "order"),
            ("makes", "making"),
            ("parties", "party"),
        ] {
            assert_eq!(stem(a), stem(b), "{a} vs {b}");
        }
    }

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(metric_tokens("Late."), vec!["late", "."]);
        assert_eq!(metric_tokens("a  b"), vec!["a", "b"]);
        assert_eq!(
            metric_tokens("<person_0> Hi!"),
            vec!["<", "person_0", ">", "hi", "!"]
        );
    }

    #[test]
    fn evaluate_summaries_identical_lists() {
        let xs = vec!["a b c".to_string(), "d e f".to_string()];
        let rep = evaluate_summaries(&xs, &xs).unwrap();
        assert!((rep.rouge1_f1 - 1.0).abs() < 1e-12);
        assert!((rep.rouge2_f1 - 1.0).abs() < 1e-12);
        assert!((rep.rougel_f1 - 1.0).abs() < 1e-12);
        assert_eq!(rep.n_pairs, 2);
    }

    #[test]
    fn evaluate_summaries_length_mismatch() {
        let a = vec!["x".to_string()];
        assert!(evaluate_summaries(&a, &[]).is_err());
    }

    #[test]
    fn evaluate_conversations_id_mismatch_lists_offenders() {
        use crate::corpus::{SpeakerId, Turn};
        use crate::generators::{GeneratedConversation, GenerationMode};
        let turns = vec![Turn::new(SpeakerId::new(0), "hi").unwrap()];
        let gen = vec![GeneratedConversation {
            id: "a".into(),
            mode: GenerationMode::Sl,
            summary: "s".into(),
            turns: turns.clone(),
            well_formed: true,
            raw_text: String::new(),
            controls: None,
            fallback_turns: 0,
        }];
        let refs = vec![Conversation::new("b", turns).unwrap()];
        let err = evaluate_conversations(&gen, &refs).unwrap_err();
        assert!(err.to_string().contains("a != b"));
    }
}
