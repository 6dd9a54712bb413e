//! Submission-history corpus: ingestion, triplet derivation, and dataset hygiene.
//!
//! A corpus is a set of [`EditTrace`]s (one author's ordered submissions for a
//! problem, ending in an accepted solution) plus the [`Problem`] records they
//! refer to. Everything here is a pure transformation over owned data.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::{TestCase, TestSuite};

pub const MIN_DIFFICULTY: u8 = 1;
pub const MAX_DIFFICULTY: u8 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {kind}")]
    Invalid { line: usize, kind: TraceViolation },
    #[error("line {line}: duplicate problem_id {problem_id:?}")]
    DuplicateProblem { line: usize, problem_id: String },
    #[error("io error: {0}")]
    Io(String),
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Malformed { line, .. }
            | CorpusError::Invalid { line, .. }
            | CorpusError::DuplicateProblem { line, .. } => Some(*line),
            CorpusError::Io(_) => None,
        }
    }
}

/// Ways a well-formed record can still violate the trace invariants.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceViolation {
    #[error("no submissions")]
    Empty,
    #[error("no terminal correct solution")]
    NoTerminalCorrect,
    #[error("correct submission at position {0} before the end of the trace")]
    EarlyCorrect(usize),
    #[error("submission {0} has empty code")]
    EmptyCode(usize),
    #[error("wrong submission {0} is byte-identical to the correct solution")]
    WrongEqualsCorrect(usize),
    #[error("empty problem_id")]
    EmptyProblemId,
    #[error("difficulty {0} outside 1..=5")]
    Difficulty(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Wrong,
    Correct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub code: String,
    pub verdict: Verdict,
    /// Position within the trace, assigned at ingest from record order.
    #[serde(default)]
    pub order_index: usize,
    #[serde(default)]
    pub author_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTrace {
    pub problem_id: String,
    pub author_id: String,
    pub submissions: Vec<Submission>,
}

impl EditTrace {
    /// Builds a trace from `(code, verdict)` pairs, assigning order indices.
    pub fn new(
        problem_id: impl Into<String>,
        author_id: impl Into<String>,
        submissions: impl IntoIterator<Item = (String, Verdict)>,
    ) -> Result<Self, TraceViolation> {
        let author_id = author_id.into();
        let submissions = submissions
            .into_iter()
            .enumerate()
            .map(|(order_index, (code, verdict))| Submission {
                code,
                verdict,
                order_index,
                author_id: author_id.clone(),
            })
            .collect();
        let trace = EditTrace {
            problem_id: problem_id.into(),
            author_id,
            submissions,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<(), TraceViolation> {
        if self.problem_id.is_empty() {
            return Err(TraceViolation::EmptyProblemId);
        }
        let Some(last) = self.submissions.last() else {
            return Err(TraceViolation::Empty);
        };
        if last.verdict != Verdict::Correct {
            return Err(TraceViolation::NoTerminalCorrect);
        }
        let n = self.submissions.len();
        for (i, s) in self.submissions.iter().enumerate() {
            if s.code.is_empty() {
                return Err(TraceViolation::EmptyCode(i));
            }
            if i + 1 < n {
                if s.verdict == Verdict::Correct {
                    return Err(TraceViolation::EarlyCorrect(i));
                }
                if s.code == last.code {
                    return Err(TraceViolation::WrongEqualsCorrect(i));
                }
            }
        }
        Ok(())
    }

    pub fn correct_code(&self) -> &str {
        &self.submissions[self.submissions.len() - 1].code
    }

    pub fn wrong_submissions(&self) -> &[Submission] {
        &self.submissions[..self.submissions.len() - 1]
    }
}

/// `(q, wrong, correct)`: one incorrect submission paired with the trace's
/// terminal correct solution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditTriplet {
    pub problem_id: String,
    pub wrong_code: String,
    pub correct_code: String,
    /// 1-based position of the wrong submission in its trace.
    pub wrong_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrongPair {
    pub problem_id: String,
    pub earlier: String,
    pub later: String,
    /// 1-based index of `earlier` within the trace.
    pub earlier_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub problem_id: String,
    pub description: String,
    pub input_format: String,
    pub output_format: String,
    pub difficulty: u8,
    #[serde(default)]
    pub test_cases: Vec<ProblemTestCase>,
}

/// On-disk test case shape of problem records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemTestCase {
    pub input: String,
    pub output: String,
}

impl Problem {
    pub fn validate(&self) -> Result<(), TraceViolation> {
        if self.problem_id.is_empty() {
            return Err(TraceViolation::EmptyProblemId);
        }
        if !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&self.difficulty) {
            return Err(TraceViolation::Difficulty(self.difficulty));
        }
        Ok(())
    }

    pub fn suite(&self) -> TestSuite {
        TestSuite {
            suite_id: self.problem_id.clone(),
            cases: self
                .test_cases
                .iter()
                .map(|c| TestCase {
                    input: c.input.clone(),
                    expected_output: c.output.clone(),
                })
                .collect(),
        }
    }

    pub fn set_suite(&mut self, suite: &TestSuite) {
        self.test_cases = suite
            .cases
            .iter()
            .map(|c| ProblemTestCase {
                input: c.input.clone(),
                output: c.expected_output.clone(),
            })
            .collect();
    }
}

#[derive(Deserialize)]
struct RawSubmission {
    code: String,
    verdict: Verdict,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    problem_id: String,
    author_id: String,
    submissions: Vec<RawSubmission>,
}

#[derive(Serialize)]
struct TraceRecordOut<'a> {
    problem_id: &'a str,
    author_id: &'a str,
    submissions: Vec<SubmissionOut<'a>>,
}

#[derive(Serialize)]
struct SubmissionOut<'a> {
    code: &'a str,
    verdict: Verdict,
}

/// Outcome of ingesting a trace stream: the valid traces and every rejected
/// record with its (1-based) line number.
#[derive(Debug, Default, Clone)]
pub struct ParsedCorpus {
    pub traces: Vec<EditTrace>,
    pub errors: Vec<CorpusError>,
}

/// Parses line-delimited JSON trace records. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> ParsedCorpus {
    let mut out = ParsedCorpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                out.errors.push(CorpusError::Io(e.to_string()));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse_trace_line(&line, line_no) {
            Ok(t) => out.traces.push(t),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

pub fn parse_corpus_str(text: &str) -> ParsedCorpus {
    parse_corpus(text.as_bytes())
}

fn parse_trace_line(line: &str, line_no: usize) -> Result<EditTrace, CorpusError> {
    let raw: RawTrace = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    EditTrace::new(
        raw.problem_id,
        raw.author_id,
        raw.submissions.into_iter().map(|s| (s.code, s.verdict)),
    )
    .map_err(|kind| CorpusError::Invalid { line: line_no, kind })
}

pub fn trace_to_record(trace: &EditTrace) -> String {
    let rec = TraceRecordOut {
        problem_id: &trace.problem_id,
        author_id: &trace.author_id,
        submissions: trace
            .submissions
            .iter()
            .map(|s| SubmissionOut {
                code: &s.code,
                verdict: s.verdict,
            })
            .collect(),
    };
    serde_json::to_string(&rec).expect("trace serializes")
}

/// Parses line-delimited problem records, rejecting duplicate ids.
pub fn parse_problems<R: BufRead>(reader: R) -> Result<Vec<Problem>, CorpusError> {
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Problem = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        p.validate()
            .map_err(|kind| CorpusError::Invalid { line: line_no, kind })?;
        if !seen.insert(p.problem_id.clone()) {
            return Err(CorpusError::DuplicateProblem {
                line: line_no,
                problem_id: p.problem_id,
            });
        }
        problems.push(p);
    }
    Ok(problems)
}

/// Pairs every wrong submission with the terminal correct one, in order.
pub fn build_triplets(trace: &EditTrace) -> Vec<EditTriplet> {
    let correct = trace.correct_code();
    trace
        .wrong_submissions()
        .iter()
        .enumerate()
        .map(|(k, s)| EditTriplet {
            problem_id: trace.problem_id.clone(),
            wrong_code: s.code.clone(),
            correct_code: correct.to_string(),
            wrong_index: k + 1,
        })
        .collect()
}

/// Sliding window over the wrong submissions only.
pub fn consecutive_wrong_pairs(trace: &EditTrace) -> Vec<WrongPair> {
    trace
        .wrong_submissions()
        .windows(2)
        .enumerate()
        .map(|(k, w)| WrongPair {
            problem_id: trace.problem_id.clone(),
            earlier: w[0].code.clone(),
            later: w[1].code.clone(),
            earlier_index: k + 1,
        })
        .collect()
}

/// How source lines are normalized before comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormalizationPolicy {
    /// Lines compared byte-for-byte; nothing is dropped.
    Exact,
    /// Trim each line, drop blank lines and lines starting with the comment
    /// prefix (when set).
    Whitespace { comment_prefix: Option<String> },
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy::Whitespace {
            comment_prefix: Some("#".to_string()),
        }
    }
}

impl NormalizationPolicy {
    pub fn identifier(&self) -> String {
        match self {
            NormalizationPolicy::Exact => "exact".to_string(),
            NormalizationPolicy::Whitespace {
                comment_prefix: None,
            } => "whitespace".to_string(),
            NormalizationPolicy::Whitespace {
                comment_prefix: Some(p),
            } => format!("whitespace+comments({p})"),
        }
    }

    pub fn lines<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            NormalizationPolicy::Exact => {
                if text.is_empty() {
                    Vec::new()
                } else {
                    text.strip_suffix('\n').unwrap_or(text).split('\n').collect()
                }
            }
            NormalizationPolicy::Whitespace { comment_prefix } => text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .filter(|l| match comment_prefix {
                    Some(p) if !p.is_empty() => !l.starts_with(p.as_str()),
                    _ => true,
                })
                .collect(),
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        match self {
            NormalizationPolicy::Exact => text.to_string(),
            NormalizationPolicy::Whitespace { .. } => self.lines(text).join("\n"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub traces: Vec<EditTrace>,
    pub dropped: usize,
}

/// Drops traces whose correct solution duplicates (after normalization) an
/// earlier-seen trace by a different author on the same problem.
pub fn dedup_identical_correct(traces: Vec<EditTrace>, policy: &NormalizationPolicy) -> DedupOutcome {
    // (problem, normalized correct) -> author of first kept trace
    let mut first_author: HashMap<(String, String), String> = HashMap::new();
    let mut kept = Vec::with_capacity(traces.len());
    let mut dropped = 0;
    for trace in traces {
        let key = (trace.problem_id.clone(), policy.normalize(trace.correct_code()));
        match first_author.get(&key) {
            Some(author) if *author != trace.author_id => dropped += 1,
            Some(_) => kept.push(trace),
            None => {
                first_author.insert(key, trace.author_id.clone());
                kept.push(trace);
            }
        }
    }
    DedupOutcome {
        traces: kept,
        dropped,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Shortfall {
    pub difficulty: u8,
    pub available: usize,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSample {
    pub problems: Vec<Problem>,
    pub shortfalls: Vec<Shortfall>,
}

/// Seeded per-level sample of `per_level` problems from each difficulty level
/// present. Output is grouped by ascending level, input order within a level.
pub fn balance_by_difficulty(problems: &[Problem], per_level: usize, seed: u64) -> BalancedSample {
    assert!(per_level >= 1, "per_level must be at least 1");
    let mut by_level: BTreeMap<u8, Vec<&Problem>> = BTreeMap::new();
    for p in problems {
        by_level.entry(p.difficulty).or_default().push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::new();
    let mut shortfalls = Vec::new();
    for (level, group) in by_level {
        if group.len() <= per_level {
            if group.len() < per_level {
                shortfalls.push(Shortfall {
                    difficulty: level,
                    available: group.len(),
                    requested: per_level,
                });
            }
            selected.extend(group.into_iter().cloned());
            continue;
        }
        let mut picks = index::sample(&mut rng, group.len(), per_level).into_vec();
        picks.sort_unstable();
        selected.extend(picks.into_iter().map(|i| group[i].clone()));
    }
    BalancedSample {
        problems: selected,
        shortfalls,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub name: String,
    pub text: String,
}

impl Document {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            name: name.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentOverlap {
    pub name: String,
    pub total_lines: usize,
    pub absolute_overlap: usize,
    pub fraction_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub normalization_policy: String,
    pub documents: Vec<DocumentOverlap>,
    /// Candidates with zero normalized lines; not present in `documents`.
    pub excluded_empty: Vec<String>,
    /// Σ overlapping lines / Σ lines over non-excluded documents; `None` when
    /// every document was excluded.
    pub aggregate_fraction: Option<f64>,
    pub aggregate_absolute: usize,
    /// Document counts per fraction bucket of width 0.05; the last bucket is
    /// closed so a fraction of exactly 1.0 lands in it.
    pub fraction_histogram: Vec<usize>,
    /// Document counts keyed by absolute overlapping-line count.
    pub absolute_histogram: BTreeMap<usize, usize>,
}

pub const OVERLAP_BUCKET_WIDTH: f64 = 0.05;
pub const OVERLAP_BUCKETS: usize = 20;

pub fn fraction_bucket(fraction: f64) -> usize {
    ((fraction / OVERLAP_BUCKET_WIDTH).floor() as usize).min(OVERLAP_BUCKETS - 1)
}

/// Counts, per candidate document, the normalized lines that also occur
/// anywhere in the normalized reference corpus.
pub fn line_overlap(
    candidates: &[Document],
    reference: &[Document],
    policy: &NormalizationPolicy,
) -> OverlapReport {
    let reference_lines: HashSet<&str> = reference
        .iter()
        .flat_map(|d| policy.lines(&d.text))
        .collect();
    let mut documents = Vec::new();
    let mut excluded_empty = Vec::new();
    let mut fraction_histogram = vec![0; OVERLAP_BUCKETS];
    let mut absolute_histogram = BTreeMap::new();
    let (mut total, mut overlapping) = (0usize, 0usize);
    for doc in candidates {
        let lines = policy.lines(&doc.text);
        if lines.is_empty() {
            excluded_empty.push(doc.name.clone());
            continue;
        }
        let hits = lines.iter().filter(|l| reference_lines.contains(*l)).count();
        let fraction = hits as f64 / lines.len() as f64;
        fraction_histogram[fraction_bucket(fraction)] += 1;
        *absolute_histogram.entry(hits).or_insert(0) += 1;
        total += lines.len();
        overlapping += hits;
        documents.push(DocumentOverlap {
            name: doc.name.clone(),
            total_lines: lines.len(),
            absolute_overlap: hits,
            fraction_overlap: fraction,
        });
    }
    OverlapReport {
        normalization_policy: policy.identifier(),
        documents,
        excluded_empty,
        aggregate_fraction: (total > 0).then(|| overlapping as f64 / total as f64),
        aggregate_absolute: overlapping,
        fraction_histogram,
        absolute_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(codes: &[(&str, Verdict)]) -> EditTrace {
        EditTrace::new(
            "p1",
            "a1",
            codes.iter().map(|(c, v)| (c.to_string(), *v)),
        )
        .unwrap()
    }

    use Verdict::{Correct as C, Wrong as W};

    #[test]
    fn three_line_trace_parses() {
        let text = r#"{"problem_id":"p1","author_id":"u","submissions":[{"code":"w1","verdict":"wrong"},{"code":"w2","verdict":"wrong"},{"code":"c","verdict":"correct"}]}"#;
        let parsed = parse_corpus_str(text);
        assert!(parsed.errors.is_empty());
        assert_eq!(parsed.traces.len(), 1);
        assert_eq!(parsed.traces[0].submissions.len(), 3);
        assert_eq!(parsed.traces[0].submissions[2].order_index, 2);
    }

    #[test]
    fn missing_verdict_names_the_line() {
        let text = "\n{\"problem_id\":\"p1\",\"author_id\":\"u\",\"submissions\":[{\"code\":\"c\"}]}\n";
        let parsed = parse_corpus_str(text);
        assert!(parsed.traces.is_empty());
        assert_eq!(parsed.errors.len(), 1);
        assert_eq!(parsed.errors[0].line(), Some(2));
        assert!(parsed.errors[0].to_string().contains("verdict"));
    }

    #[test]
    fn trailing_wrong_is_rejected() {
        let text = r#"{"problem_id":"p1","author_id":"u","submissions":[{"code":"a","verdict":"correct"},{"code":"b","verdict":"wrong"}]}"#;
        let parsed = parse_corpus_str(text);
        assert_eq!(
            parsed.errors,
            vec![CorpusError::Invalid {
                line: 1,
                kind: TraceViolation::NoTerminalCorrect
            }]
        );
        assert_eq!(
            parsed.errors[0].to_string(),
            "line 1: no terminal correct solution"
        );
    }

    #[test]
    fn empty_stream_is_empty_list() {
        let parsed = parse_corpus_str("");
        assert!(parsed.traces.is_empty() && parsed.errors.is_empty());
    }

    #[test]
    fn early_correct_is_rejected() {
        let err = EditTrace::new(
            "p",
            "a",
            vec![("x".into(), C), ("y".into(), W), ("z".into(), C)],
        )
        .unwrap_err();
        assert_eq!(err, TraceViolation::EarlyCorrect(0));
    }

    #[test]
    fn triplets_pair_with_terminal_correct() {
        let t = trace(&[("w1", W), ("w2", W), ("c", C)]);
        let got: Vec<_> = build_triplets(&t)
            .into_iter()
            .map(|t| (t.wrong_code, t.correct_code, t.wrong_index))
            .collect();
        assert_eq!(
            got,
            vec![
                ("w1".into(), "c".into(), 1),
                ("w2".into(), "c".into(), 2)
            ]
        );
        assert!(build_triplets(&trace(&[("c", C)])).is_empty());
    }

    #[test]
    fn five_wrong_yield_five_triplets() {
        let t = trace(&[("a", W), ("b", W), ("c", W), ("d", W), ("e", W), ("ok", C)]);
        let idx: Vec<_> = build_triplets(&t).iter().map(|t| t.wrong_index).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn wrong_pairs_slide_over_wrongs_only() {
        let t = trace(&[("w1", W), ("w2", W), ("w3", W), ("c", C)]);
        let got: Vec<_> = consecutive_wrong_pairs(&t)
            .into_iter()
            .map(|p| (p.earlier, p.later))
            .collect();
        assert_eq!(
            got,
            vec![("w1".into(), "w2".into()), ("w2".into(), "w3".into())]
        );
        assert!(consecutive_wrong_pairs(&trace(&[("w1", W), ("c", C)])).is_empty());
        assert_eq!(
            consecutive_wrong_pairs(&trace(&[("w1", W), ("w2", W), ("c", C)])).len(),
            1
        );
    }

    fn author_trace(problem: &str, author: &str, correct: &str) -> EditTrace {
        EditTrace::new(
            problem,
            author,
            vec![("bad".to_string(), W), (correct.to_string(), C)],
        )
        .unwrap()
    }

    #[test]
    fn dedup_is_per_problem_and_keeps_first() {
        let ws = NormalizationPolicy::default();
        let out = dedup_identical_correct(
            vec![
                author_trace("p1", "a", "print(1)"),
                author_trace("p1", "b", "print(1)"),
                author_trace("p2", "c", "print(1)"),
            ],
            &ws,
        );
        assert_eq!(out.dropped, 1);
        let authors: Vec<_> = out.traces.iter().map(|t| t.author_id.as_str()).collect();
        assert_eq!(authors, vec!["a", "c"]);
    }

    #[test]
    fn dedup_trailing_whitespace_depends_on_policy() {
        let traces = vec![
            author_trace("p1", "a", "x = 1\nprint(x)\n"),
            author_trace("p1", "b", "x = 1   \nprint(x)\n\n"),
        ];
        let ws = dedup_identical_correct(traces.clone(), &NormalizationPolicy::default());
        assert_eq!(ws.dropped, 1);
        let exact = dedup_identical_correct(traces, &NormalizationPolicy::Exact);
        assert_eq!(exact.dropped, 0);
    }

    fn problem(id: &str, difficulty: u8) -> Problem {
        Problem {
            problem_id: id.into(),
            description: String::new(),
            input_format: String::new(),
            output_format: String::new(),
            difficulty,
            test_cases: vec![],
        }
    }

    #[test]
    fn balance_counts_and_shortfall() {
        let mut ps = Vec::new();
        for level in 1..=5 {
            for i in 0..10 {
                ps.push(problem(&format!("p{level}-{i}"), level));
            }
        }
        let out = balance_by_difficulty(&ps, 2, 7);
        assert_eq!(out.problems.len(), 10);
        assert!(out.shortfalls.is_empty());
        for level in 1..=5 {
            assert_eq!(out.problems.iter().filter(|p| p.difficulty == level).count(), 2);
        }

        let ps = vec![problem("a", 1), problem("b", 1), problem("c", 1), problem("d", 1), problem("z", 5)];
        let out = balance_by_difficulty(&ps, 3, 1);
        assert_eq!(out.problems.len(), 4);
        assert!(out.problems.iter().any(|p| p.problem_id == "z"));
        assert_eq!(
            out.shortfalls,
            vec![Shortfall {
                difficulty: 5,
                available: 1,
                requested: 3
            }]
        );
    }

    #[test]
    fn overlap_hand_counted() {
        let cand = [Document::new("c", "a = 1\nb = 2\nc = 3\nd = 4\n")];
        let reference = [Document::new("r", "b = 2\nzzz\nd = 4\n")];
        let rep = line_overlap(&cand, &reference, &NormalizationPolicy::default());
        assert_eq!(rep.documents[0].absolute_overlap, 2);
        assert_eq!(rep.documents[0].fraction_overlap, 0.5);
        assert_eq!(rep.fraction_histogram[10], 1);
        assert_eq!(rep.absolute_histogram.get(&2), Some(&1));
    }

    #[test]
    fn overlap_identity_disjoint_and_empty() {
        let docs = [Document::new("x", "import sys\nprint(1)\n")];
        let ident = line_overlap(&docs, &docs, &NormalizationPolicy::Exact);
        assert_eq!(ident.aggregate_fraction, Some(1.0));
        assert_eq!(ident.fraction_histogram[OVERLAP_BUCKETS - 1], 1);
        let none = line_overlap(&docs, &[], &NormalizationPolicy::Exact);
        assert_eq!(none.aggregate_fraction, Some(0.0));
        let other = [Document::new("y", "foo\nbar\n")];
        assert_eq!(
            line_overlap(&docs, &other, &NormalizationPolicy::Exact).aggregate_fraction,
            Some(0.0)
        );
        let blank = [Document::new("b", "\n  \n# only a comment\n")];
        let rep = line_overlap(&blank, &docs, &NormalizationPolicy::default());
        assert_eq!(rep.excluded_empty, vec!["b".to_string()]);
        assert_eq!(rep.aggregate_fraction, None);
    }
}
