//! Training-set construction: annotated feedback, preference pairs,
//! rejection-sampling targets and the keyword-prefixed editor corpus.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::templates::{
    render_correct_feedback_prompt, render_editor_prompt, render_feedback_prompt, render_wrong_feedback_prompt,
};
use crate::clients::{Bindings, GenerationParams, TextGenerator};
use crate::corpus::{EditTriplet, Problem, WrongPair};
use crate::reward::{score_feedback, RewardError};
use crate::sandbox::{Sandbox, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Correct,
    Wrong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSource {
    Annotated,
    Sampled,
}

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
}

/// Feedback on one wrong submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub problem_id: String,
    pub wrong_code: String,
    pub text: String,
    pub polarity: Polarity,
    pub source: FeedbackSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    /// Explains how to get from the wrong code to the accepted solution.
    CorrectFeedback,
    /// Explains the change between two consecutive wrong submissions.
    WrongFeedback,
}

impl AnnotationKind {
    pub fn polarity(self) -> Polarity {
        match self {
            AnnotationKind::CorrectFeedback => Polarity::Correct,
            AnnotationKind::WrongFeedback => Polarity::Wrong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationJob {
    pub kind: AnnotationKind,
    pub problem_id: String,
    pub wrong_code: String,
    /// Accepted solution for correct-feedback jobs, the next wrong
    /// submission for wrong-feedback jobs.
    pub target_code: String,
    pub prompt: String,
    pub params: GenerationParams,
}

/// Few-shot demonstrations for the two annotation prompts.
#[derive(Debug, Clone, Default)]
pub struct AnnotationDemos {
    pub correct: Vec<Bindings>,
    pub wrong: Vec<Bindings>,
}

/// One correct-feedback job per triplet, then one wrong-feedback job per
/// consecutive wrong pair.
pub fn build_feedback_annotation_jobs(
    triplets: &[EditTriplet],
    wrong_pairs: &[WrongPair],
    problems: &HashMap<String, Problem>,
    demos: &AnnotationDemos,
) -> Result<Vec<AnnotationJob>, PairingError> {
    let lookup = |id: &str| problems.get(id).ok_or_else(|| PairingError::UnknownProblem(id.to_string()));
    let params = GenerationParams::default();
    let mut jobs = Vec::with_capacity(triplets.len() + wrong_pairs.len());
    for t in triplets {
        let p = lookup(&t.problem_id)?;
        jobs.push(AnnotationJob {
            kind: AnnotationKind::CorrectFeedback,
            problem_id: t.problem_id.clone(),
            wrong_code: t.wrong_code.clone(),
            target_code: t.correct_code.clone(),
            prompt: render_correct_feedback_prompt(p, &t.wrong_code, &t.correct_code, &demos.correct),
            params: params.clone(),
        });
    }
    for w in wrong_pairs {
        let p = lookup(&w.problem_id)?;
        jobs.push(AnnotationJob {
            kind: AnnotationKind::WrongFeedback,
            problem_id: w.problem_id.clone(),
            wrong_code: w.earlier.clone(),
            target_code: w.later.clone(),
            prompt: render_wrong_feedback_prompt(p, &w.earlier, &w.later, &demos.wrong),
            params: params.clone(),
        });
    }
    Ok(jobs)
}

/// Annotator reply meaning it could not find anything to criticize.
pub const NO_ERRORS_SENTINEL: &str = "no errors found";

pub fn is_no_errors_reply(reply: &str) -> bool {
    reply.to_lowercase().contains(NO_ERRORS_SENTINEL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedAnnotation {
    pub job_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    pub records: Vec<FeedbackRecord>,
    pub discarded: Vec<DiscardedAnnotation>,
}

/// Runs each job once; empty replies and "no errors found" replies are
/// dropped, client failures are recorded and skipped.
pub fn run_annotation_jobs(jobs: &[AnnotationJob], annotator: &dyn TextGenerator) -> AnnotationOutcome {
    let mut out = AnnotationOutcome::default();
    for (job_index, job) in jobs.iter().enumerate() {
        let params = GenerationParams {
            n_samples: 1,
            ..job.params.clone()
        };
        let reason = match annotator.complete(&job.prompt, &params) {
            Err(e) => format!("annotator error: {e}"),
            Ok(mut replies) => {
                let text = replies.remove(0).trim().to_string();
                if text.is_empty() {
                    "empty reply".to_string()
                } else if is_no_errors_reply(&text) {
                    "annotator found no errors".to_string()
                } else {
                    out.records.push(FeedbackRecord {
                        problem_id: job.problem_id.clone(),
                        wrong_code: job.wrong_code.clone(),
                        text,
                        polarity: job.kind.polarity(),
                        source: FeedbackSource::Annotated,
                        score: None,
                    });
                    continue;
                }
            }
        };
        tracing::info!(job_index, %reason, "annotation discarded");
        out.discarded.push(DiscardedAnnotation { job_index, reason });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairContext {
    pub problem_id: String,
    pub description: String,
    pub wrong_code: String,
}

impl PairContext {
    pub fn new(problem: &Problem, wrong_code: &str) -> Self {
        PairContext {
            problem_id: problem.problem_id.clone(),
            description: problem.description.clone(),
            wrong_code: wrong_code.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Teacher feedback preferred over student feedback.
    #[serde(rename = "ts")]
    TeacherStudent,
    /// Correct-polarity feedback preferred over wrong-polarity feedback.
    #[serde(rename = "cw")]
    CorrectWrong,
    /// Best sampled feedback preferred over the worst by reward.
    #[serde(rename = "reward_ranked")]
    RewardRanked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub context: PairContext,
    pub chosen: String,
    pub rejected: String,
    pub strategy: Strategy,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    Identical,
    EmptyFeedback,
    MissingPolarity { polarity: Polarity },
    TeacherNotBetter { teacher_score: f64, student_score: f64 },
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::Identical => write!(f, "identical"),
            SkipReason::EmptyFeedback => write!(f, "empty feedback"),
            SkipReason::MissingPolarity { polarity } => write!(f, "no {polarity:?} feedback"),
            SkipReason::TeacherNotBetter {
                teacher_score,
                student_score,
            } => write!(f, "teacher scored {teacher_score} vs student {student_score}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedContext {
    pub context: PairContext,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairBatch {
    pub pairs: Vec<PreferencePair>,
    pub skipped: Vec<SkippedContext>,
}

pub fn build_dpo_ts(context: &PairContext, teacher: &str, student: &str) -> Result<PreferencePair, SkipReason> {
    if teacher.trim().is_empty() || student.trim().is_empty() {
        return Err(SkipReason::EmptyFeedback);
    }
    if teacher == student {
        return Err(SkipReason::Identical);
    }
    Ok(PreferencePair {
        context: context.clone(),
        chosen: teacher.to_string(),
        rejected: student.to_string(),
        strategy: Strategy::TeacherStudent,
        margin: None,
    })
}

/// Teacher/student pair kept only when the teacher's feedback scores
/// strictly higher. Off by default; see [`build_dpo_ts`].
pub fn build_dpo_ts_validated(
    context: &PairContext,
    teacher: &str,
    student: &str,
    teacher_score: f64,
    student_score: f64,
) -> Result<PreferencePair, SkipReason> {
    let mut pair = build_dpo_ts(context, teacher, student)?;
    if teacher_score <= student_score {
        return Err(SkipReason::TeacherNotBetter {
            teacher_score,
            student_score,
        });
    }
    pair.margin = Some(teacher_score - student_score);
    Ok(pair)
}

/// `(context, teacher, student)` triples to pairs, preserving order.
pub fn build_dpo_ts_batch(items: &[(PairContext, String, String)]) -> PairBatch {
    let mut batch = PairBatch::default();
    for (ctx, teacher, student) in items {
        match build_dpo_ts(ctx, teacher, student) {
            Ok(p) => batch.pairs.push(p),
            Err(reason) => batch.skipped.push(SkippedContext {
                context: ctx.clone(),
                reason,
            }),
        }
    }
    batch
}

/// Pairs correct-polarity against wrong-polarity feedback for one context.
/// Combinations are enumerated correct-major in record order and at most
/// `cap` are kept, so the default cap of 1 takes the earliest of each.
pub fn build_dpo_cw(
    context: &PairContext,
    records: &[FeedbackRecord],
    cap: usize,
) -> Result<Vec<PreferencePair>, SkipReason> {
    let of = |pol| records.iter().filter(move |r| r.polarity == pol).map(|r| r.text.as_str());
    if of(Polarity::Correct).next().is_none() {
        return Err(SkipReason::MissingPolarity {
            polarity: Polarity::Correct,
        });
    }
    if of(Polarity::Wrong).next().is_none() {
        return Err(SkipReason::MissingPolarity {
            polarity: Polarity::Wrong,
        });
    }
    let pairs: Vec<_> = of(Polarity::Correct)
        .flat_map(|c| of(Polarity::Wrong).map(move |w| (c, w)))
        .filter(|(c, w)| c != w)
        .take(cap)
        .map(|(c, w)| PreferencePair {
            context: context.clone(),
            chosen: c.to_string(),
            rejected: w.to_string(),
            strategy: Strategy::CorrectWrong,
            margin: None,
        })
        .collect();
    if pairs.is_empty() {
        return Err(SkipReason::Identical);
    }
    Ok(pairs)
}

/// Groups feedback records by `(problem_id, wrong_code)`, in key order.
pub fn group_by_context(records: &[FeedbackRecord]) -> BTreeMap<(String, String), Vec<FeedbackRecord>> {
    let mut groups: BTreeMap<(String, String), Vec<FeedbackRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.problem_id.clone(), r.wrong_code.clone()))
            .or_default()
            .push(r.clone());
    }
    groups
}

/// [`build_dpo_cw`] over every context present in `records`.
pub fn build_dpo_cw_all(
    records: &[FeedbackRecord],
    problems: &HashMap<String, Problem>,
    cap: usize,
) -> Result<PairBatch, PairingError> {
    let mut batch = PairBatch::default();
    for ((pid, wrong), group) in group_by_context(records) {
        let problem = problems.get(&pid).ok_or_else(|| PairingError::UnknownProblem(pid.clone()))?;
        let ctx = PairContext::new(problem, &wrong);
        match build_dpo_cw(&ctx, &group, cap) {
            Ok(pairs) => batch.pairs.extend(pairs),
            Err(reason) => batch.skipped.push(SkippedContext { context: ctx, reason }),
        }
    }
    Ok(batch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeedback {
    /// Position in the sampled batch.
    pub sample_index: usize,
    pub feedback: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub context: PairContext,
    /// Descending by score; equal scores keep sample order.
    pub items: Vec<RankedFeedback>,
    pub all_tied: bool,
}

impl RankedList {
    /// Sorts `items` descending by score. The sort is stable over sample
    /// order, so among equal scores the first drawn sample comes first.
    pub fn new(context: PairContext, mut items: Vec<RankedFeedback>) -> Self {
        items.sort_by_key(|i| i.sample_index);
        items.sort_by(|a, b| b.score.total_cmp(&a.score));
        let all_tied = items.windows(2).all(|w| w[0].score == w[1].score);
        RankedList {
            context,
            items,
            all_tied,
        }
    }

    pub fn top(&self) -> Option<&RankedFeedback> {
        self.items.first()
    }

    pub fn bottom(&self) -> Option<&RankedFeedback> {
        self.items.last()
    }
}

#[derive(Debug, Error)]
#[error("ranking aborted after {} scored sample(s): {source}", partial.len())]
pub struct RankError {
    #[source]
    pub source: RewardError,
    pub partial: Vec<RankedFeedback>,
}

/// Sampling parameters for feedback candidates.
pub fn default_sampling_params(n: u32) -> GenerationParams {
    GenerationParams::default().with_samples(n)
}

/// Draws `params.n_samples` feedback candidates for `wrong_code` and scores
/// each with the editor. Scoring runs concurrently; the sandbox bounds the
/// number of live guest processes.
#[allow(clippy::too_many_arguments)]
pub fn sample_and_rank(
    problem: &Problem,
    suite: &TestSuite,
    wrong_code: &str,
    feedback_model: &dyn TextGenerator,
    params: &GenerationParams,
    editor: &dyn TextGenerator,
    editor_params: &GenerationParams,
    sandbox: &Sandbox,
) -> Result<RankedList, RankError> {
    let context = PairContext::new(problem, wrong_code);
    let samples = feedback_model
        .complete(&render_feedback_prompt(problem, wrong_code), params)
        .map_err(|e| RankError {
            source: e.into(),
            partial: vec![],
        })?;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = samples
            .iter()
            .map(|fb| s.spawn(move || score_feedback(problem, suite, wrong_code, fb, editor, editor_params, sandbox)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut items = Vec::with_capacity(samples.len());
    let mut first_error = None;
    for (i, (fb, r)) in samples.into_iter().zip(results).enumerate() {
        match r {
            Ok(resp) => items.push(RankedFeedback {
                sample_index: i,
                feedback: fb,
                score: resp.score,
            }),
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if let Some(source) = first_error {
        tracing::warn!(problem = %problem.problem_id, scored = items.len(), error = %source, "ranking aborted");
        return Err(RankError { source, partial: items });
    }
    Ok(RankedList::new(context, items))
}

/// Top-1 against bottom-1, emitted only with a positive margin.
pub fn build_dpo_reward_ranked(list: &RankedList) -> Option<PreferencePair> {
    let (top, bottom) = (list.top()?, list.bottom()?);
    let margin = top.score - bottom.score;
    if margin <= 0.0 || top.feedback == bottom.feedback {
        return None;
    }
    Some(PreferencePair {
        context: list.context.clone(),
        chosen: top.feedback.clone(),
        rejected: bottom.feedback.clone(),
        strategy: Strategy::RewardRanked,
        margin: Some(margin),
    })
}

/// Supervised target: feedback text for a context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub context: PairContext,
    pub feedback: String,
    pub score: f64,
}

/// Default rejection-sampling gate: the top score must exceed this.
pub const DEFAULT_MIN_SCORE: f64 = 0.0;

/// The top-ranked feedback, if its score is strictly above `min_score`.
pub fn build_rejection_sampling(list: &RankedList, min_score: f64) -> Option<SftRecord> {
    let top = list.top()?;
    (top.score > min_score).then(|| SftRecord {
        context: list.context.clone(),
        feedback: top.feedback.clone(),
        score: top.score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Keyword {
    #[serde(rename = "[Correct]")]
    Correct,
    #[serde(rename = "[Wrong]")]
    Wrong,
}

impl Keyword {
    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Correct => "[Correct]",
            Keyword::Wrong => "[Wrong]",
        }
    }

    pub fn for_polarity(p: Polarity) -> Self {
        match p {
            Polarity::Correct => Keyword::Correct,
            Polarity::Wrong => Keyword::Wrong,
        }
    }
}

/// Editor training phase: 1 trains on keyword-prefixed targets from both
/// correct and wrong feedback, 2 on bare code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Phase {
    One,
    Two,
}

impl TryFrom<u8> for Phase {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Phase::One),
            2 => Ok(Phase::Two),
            _ => Err(format!("phase must be 1 or 2, got {v}")),
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        match p {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorTrainRecord {
    pub prompt: String,
    pub target: String,
    pub phase: Phase,
    pub keyword: Option<Keyword>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordInvariant {
    #[error("phase 1 record has no keyword")]
    MissingKeyword,
    #[error("keyword is not a prefix of the target")]
    KeywordNotPrefix,
    #[error("phase 2 record carries a keyword")]
    UnexpectedKeyword,
}

impl EditorTrainRecord {
    pub fn validate(&self) -> Result<(), RecordInvariant> {
        match (self.phase, self.keyword) {
            (Phase::One, None) => Err(RecordInvariant::MissingKeyword),
            (Phase::One, Some(k)) if !self.target.starts_with(k.as_str()) => Err(RecordInvariant::KeywordNotPrefix),
            (Phase::Two, Some(_)) => Err(RecordInvariant::UnexpectedKeyword),
            (Phase::Two, None) if [Keyword::Correct, Keyword::Wrong].iter().any(|k| self.target.starts_with(k.as_str())) => {
                Err(RecordInvariant::UnexpectedKeyword)
            }
            _ => Ok(()),
        }
    }
}

/// An editor training example: wrong code, feedback, and the code that
/// feedback leads to.
#[derive(Debug, Clone)]
pub struct EditorEntry<'a> {
    pub problem: &'a Problem,
    pub wrong_code: String,
    pub feedback: String,
    pub target_code: String,
}

fn editor_record(entry: &EditorEntry<'_>, polarity: Polarity, phase: Phase) -> EditorTrainRecord {
    let prompt = render_editor_prompt(entry.problem, &entry.wrong_code, &entry.feedback);
    let (target, keyword) = match phase {
        Phase::One => {
            let k = Keyword::for_polarity(polarity);
            (format!("{}\n{}", k.as_str(), entry.target_code), Some(k))
        }
        Phase::Two => (entry.target_code.clone(), None),
    };
    let record = EditorTrainRecord {
        prompt,
        target,
        phase,
        keyword,
    };
    if let Err(e) = record.validate() {
        panic!("editor record for {} violates invariant: {e}", entry.problem.problem_id);
    }
    record
}

/// Correct-feedback entries (targets are accepted solutions) followed by
/// wrong-feedback entries (targets are the next wrong submission).
pub fn emit_editor_corpus(correct: &[EditorEntry<'_>], wrong: &[EditorEntry<'_>], phase: Phase) -> Vec<EditorTrainRecord> {
    correct
        .iter()
        .map(|e| editor_record(e, Polarity::Correct, phase))
        .chain(wrong.iter().map(|e| editor_record(e, Polarity::Wrong, phase)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{CannedClient, FnClient, SamplingClient};
    use crate::clients::ClientError;
    use crate::corpus::ProblemTestCase;
    use crate::sandbox::SandboxConfig;

    fn problem() -> Problem {
        Problem {
            problem_id: "double".into(),
            description: "Print twice the input.".into(),
            input_format: "One integer.".into(),
            output_format: "One integer.".into(),
            difficulty: 1,
            test_cases: (0..4)
                .map(|i| ProblemTestCase {
                    input: format!("{i}\n"),
                    output: format!("{}\n", 2 * i),
                })
                .collect(),
        }
    }

    fn problems() -> HashMap<String, Problem> {
        HashMap::from([("double".to_string(), problem())])
    }

    fn ctx() -> PairContext {
        PairContext::new(&problem(), "print(0)")
    }

    fn triplet(wrong: &str) -> EditTriplet {
        EditTriplet {
            problem_id: "double".into(),
            wrong_code: wrong.into(),
            correct_code: "print(2*int(input()))".into(),
            wrong_index: 1,
        }
    }

    #[test]
    fn annotation_job_counts() {
        let pair = WrongPair {
            problem_id: "double".into(),
            earlier: "print(0)".into(),
            later: "print(1)".into(),
            earlier_index: 1,
        };
        let jobs = build_feedback_annotation_jobs(
            &[triplet("print(0)"), triplet("print(1)")],
            &[pair],
            &problems(),
            &AnnotationDemos::default(),
        )
        .unwrap();
        let kinds: Vec<_> = jobs.iter().map(|j| j.kind).collect();
        assert_eq!(
            kinds,
            [AnnotationKind::CorrectFeedback, AnnotationKind::CorrectFeedback, AnnotationKind::WrongFeedback]
        );
        assert_eq!(jobs[0].params, GenerationParams::default());
        assert_eq!((jobs[0].params.temperature, jobs[0].params.top_p, jobs[0].params.max_tokens), (0.7, 0.95, 500));
        assert!(jobs[2].prompt.contains("print(1)"));

        let only = build_feedback_annotation_jobs(&[triplet("print(0)")], &[], &problems(), &AnnotationDemos::default()).unwrap();
        assert_eq!(only.len(), 1);
    }

    #[test]
    fn sentinel_replies_are_dropped() {
        let jobs =
            build_feedback_annotation_jobs(&[triplet("print(0)"), triplet("print(1)")], &[], &problems(), &AnnotationDemos::default())
                .unwrap();
        let annotator = FnClient::new("a", |prompt, _| {
            Ok(if prompt.contains("print(1)") {
                "No errors found.".to_string()
            } else {
                "Multiply the input by two.".to_string()
            })
        });
        let out = run_annotation_jobs(&jobs, &annotator);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].polarity, Polarity::Correct);
        assert_eq!(out.discarded[0].job_index, 1);
    }

    #[test]
    fn ts_pairs() {
        let p = build_dpo_ts(&ctx(), "t", "s").unwrap();
        assert_eq!((p.chosen.as_str(), p.rejected.as_str(), p.strategy), ("t", "s", Strategy::TeacherStudent));
        assert_eq!(build_dpo_ts(&ctx(), "same", "same"), Err(SkipReason::Identical));
        assert_eq!(SkipReason::Identical.to_string(), "identical");

        let items: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|s| (PairContext::new(&problem(), s), format!("t{s}"), format!("s{s}")))
            .collect();
        let batch = build_dpo_ts_batch(&items);
        assert_eq!(batch.pairs.len(), 3);
        assert_eq!(batch.pairs[2].context.wrong_code, "c");

        assert!(matches!(
            build_dpo_ts_validated(&ctx(), "t", "s", 0.25, 0.5),
            Err(SkipReason::TeacherNotBetter { .. })
        ));
        assert_eq!(build_dpo_ts_validated(&ctx(), "t", "s", 1.0, 0.5).unwrap().margin, Some(0.5));
    }

    fn record(text: &str, polarity: Polarity) -> FeedbackRecord {
        FeedbackRecord {
            problem_id: "double".into(),
            wrong_code: "print(0)".into(),
            text: text.into(),
            polarity,
            source: FeedbackSource::Annotated,
            score: None,
        }
    }

    #[test]
    fn cw_pairs() {
        let recs = [record("c", Polarity::Correct), record("w1", Polarity::Wrong), record("w2", Polarity::Wrong)];
        let one = build_dpo_cw(&ctx(), &recs, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].chosen.as_str(), one[0].rejected.as_str()), ("c", "w1"));
        let all = build_dpo_cw(&ctx(), &recs, usize::MAX).unwrap();
        assert_eq!(all.iter().map(|p| p.rejected.as_str()).collect::<Vec<_>>(), ["w1", "w2"]);
        assert_eq!(
            build_dpo_cw(&ctx(), &recs[..1], 1),
            Err(SkipReason::MissingPolarity { polarity: Polarity::Wrong })
        );
        let batch = build_dpo_cw_all(&recs, &problems(), 1).unwrap();
        assert_eq!(batch.pairs.len(), 1);
    }

    fn ranked(scores: &[f64]) -> RankedList {
        RankedList::new(
            ctx(),
            scores
                .iter()
                .enumerate()
                .map(|(i, &score)| RankedFeedback {
                    sample_index: i,
                    feedback: format!("fb{i}"),
                    score,
                })
                .collect(),
        )
    }

    #[test]
    fn ranking_and_selection() {
        let l = ranked(&[0.2, 1.0, 0.5]);
        assert_eq!(l.items.iter().map(|i| i.score).collect::<Vec<_>>(), [1.0, 0.5, 0.2]);
        assert!(!l.all_tied);
        assert!(ranked(&[0.0, 0.0, 0.0]).all_tied);

        let p = build_dpo_reward_ranked(&ranked(&[0.9, 0.5, 0.1])).unwrap();
        assert_eq!((p.chosen.as_str(), p.rejected.as_str()), ("fb0", "fb2"));
        assert!((p.margin.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(build_dpo_reward_ranked(&ranked(&[0.5, 0.5])), None);
        assert_eq!(build_dpo_reward_ranked(&ranked(&[1.0, 0.0])).unwrap().margin, Some(1.0));

        let rs = build_rejection_sampling(&ranked(&[0.8, 0.1]), DEFAULT_MIN_SCORE).unwrap();
        assert_eq!((rs.feedback.as_str(), rs.score), ("fb0", 0.8));
        assert_eq!(build_rejection_sampling(&ranked(&[0.0, 0.0]), DEFAULT_MIN_SCORE), None);
        // Ties at the top: earliest sample wins.
        let tie = build_rejection_sampling(&ranked(&[0.5, 0.75, 0.75, 0.75]), DEFAULT_MIN_SCORE).unwrap();
        assert_eq!(tie.feedback, "fb1");
    }

    /// Editor that applies code carried in the feedback after `USE:`.
    fn pipe_editor() -> FnClient {
        FnClient::new("pipe", |prompt, _| {
            let parts = crate::clients::templates::parse_editor_prompt(prompt).unwrap();
            let code = parts.feedback.split_once("USE:").map(|(_, c)| c.to_string()).unwrap_or(parts.wrong_code);
            Ok(format!("```python\n{code}\n```"))
        })
    }

    #[test]
    fn sample_and_rank_scores_and_sorts() {
        let sandbox = Sandbox::new(SandboxConfig::default()).unwrap();
        let p = problem();
        // scores 0.25 (only input 0 right), 1.0, 0.5 (inputs 0 and 1 right)
        let cands = [
            "USE:print(0)".to_string(),
            "USE:print(2*int(input()))".to_string(),
            "USE:x=int(input())\nprint(2*x if x < 2 else 0)".to_string(),
        ];
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let feedback = FnClient::new("fb", move |_, _| {
            let i = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(cands[i % 3].clone())
        });
        let list = sample_and_rank(
            &p,
            &p.suite(),
            "print(0)",
            &feedback,
            &default_sampling_params(3),
            &pipe_editor(),
            &crate::reward::default_editor_params(),
            &sandbox,
        )
        .unwrap();
        let got: Vec<_> = list.items.iter().map(|i| (i.sample_index, i.score)).collect();
        assert_eq!(got, [(1, 1.0), (2, 0.5), (0, 0.25)]);
    }

    #[test]
    fn seeded_ranking_is_reproducible() {
        let sandbox = Sandbox::new(SandboxConfig::default()).unwrap();
        let p = problem();
        let fb = SamplingClient::new(
            "s",
            vec!["USE:print(0)".into(), "USE:print(2*int(input()))".into(), "try again".into()],
        );
        let params = default_sampling_params(10).with_seed(Some(7));
        let run = || {
            sample_and_rank(&p, &p.suite(), "print(0)", &fb, &params, &pipe_editor(), &crate::reward::default_editor_params(), &sandbox)
                .unwrap()
        };
        let a = run();
        assert_eq!(a.items.len(), 10);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&run()).unwrap());
    }

    #[test]
    fn ranking_failure_keeps_partial() {
        let sandbox = Sandbox::new(SandboxConfig::default()).unwrap();
        let p = problem();
        let fb = CannedClient::new("fb", "anything");
        let editor = FnClient::new("bad", |prompt, _| {
            if prompt.is_empty() {
                Ok(String::new())
            } else {
                Err(ClientError::MalformedResponse("nope".into()))
            }
        });
        let err = sample_and_rank(&p, &p.suite(), "print(0)", &fb, &default_sampling_params(2), &editor, &crate::reward::default_editor_params(), &sandbox)
            .unwrap_err();
        assert!(err.partial.is_empty());
        assert!(matches!(err.source, RewardError::Editor(_)));
    }

    #[test]
    fn editor_corpus_phases() {
        let p = problem();
        let entry = |target: &str| EditorEntry {
            problem: &p,
            wrong_code: "print(0)".into(),
            feedback: "fb".into(),
            target_code: target.into(),
        };
        let correct = [entry("print(2*int(input()))"), entry("x=int(input())\nprint(x+x)")];
        let wrong = [entry("print(1)"), entry("print(2)")];
        let one = emit_editor_corpus(&correct, &wrong, Phase::One);
        assert_eq!(one.len(), 4);
        assert!(one[0].target.starts_with("[Correct]\nprint(2*"));
        assert_eq!(one[3].target, "[Wrong]\nprint(2)");
        assert_eq!(one.iter().map(|r| r.keyword).collect::<Vec<_>>(), [
            Some(Keyword::Correct),
            Some(Keyword::Correct),
            Some(Keyword::Wrong),
            Some(Keyword::Wrong)
        ]);
        let two = emit_editor_corpus(&[], &wrong[..1], Phase::Two);
        assert_eq!(two[0].target, "print(1)");
        assert_eq!(two[0].keyword, None);
        assert_eq!(serde_json::to_value(&one[0]).unwrap()["phase"], 1);
        assert_eq!(serde_json::to_value(&one[0]).unwrap()["keyword"], "[Correct]");
    }

    #[test]
    #[should_panic(expected = "violates invariant")]
    fn phase_two_target_with_keyword_panics() {
        let p = problem();
        let e = EditorEntry {
            problem: &p,
            wrong_code: "print(0)".into(),
            feedback: "fb".into(),
            target_code: "[Wrong]\nprint(1)".into(),
        };
        emit_editor_corpus(&[], &[e], Phase::Two);
    }
}
