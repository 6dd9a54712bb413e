//! Multi-step workflows built from the other modules: corpus ingestion,
//! reward-model evaluation, Pass@1 evaluation and dataset assembly.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, GenerationParams, TextGenerator};
use crate::clients::templates::render_feedback_prompt;
use crate::corpus::{
    build_triplets, consecutive_wrong_pairs, dedup_identical_correct, EditTrace, EditTriplet, NormalizationPolicy,
    ParsedCorpus, Problem, WrongPair,
};
use crate::pairing::{
    build_dpo_reward_ranked, build_rejection_sampling, sample_and_rank, EditorEntry, FeedbackRecord, Polarity,
    PreferencePair, RankError, RankedList, SftRecord,
};
use crate::reward::{
    metrics_report, pass_at_1_counts, sha256_hex, LabeledScore, MetricsError, MetricsReport, RewardEnv, RewardError,
    RewardRequest,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("feedback model failed: {0}")]
    Client(#[from] ClientError),
}

/// Maps `f` over `items` on up to `workers` threads; output keeps input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every item mapped"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub traces_kept: usize,
    pub rejected: Vec<String>,
    pub dedup_dropped: usize,
    pub triplets: Vec<EditTriplet>,
    pub wrong_pairs: Vec<WrongPair>,
}

/// Validated traces to triplets and consecutive wrong pairs, after dropping
/// duplicate correct solutions across authors.
pub fn ingest(parsed: ParsedCorpus, policy: &NormalizationPolicy) -> (Vec<EditTrace>, IngestReport) {
    let rejected = parsed.errors.iter().map(|e| e.to_string()).collect();
    let dedup = dedup_identical_correct(parsed.traces, policy);
    let triplets = dedup.traces.iter().flat_map(build_triplets).collect();
    let wrong_pairs = dedup.traces.iter().flat_map(consecutive_wrong_pairs).collect();
    let report = IngestReport {
        traces_kept: dedup.traces.len(),
        rejected,
        dedup_dropped: dedup.dropped,
        triplets,
        wrong_pairs,
    };
    (dedup.traces, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFeedback {
    pub problem_id: String,
    pub polarity: Polarity,
    pub score: f64,
    pub per_case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvaluation {
    pub editor: String,
    pub items: Vec<ScoredFeedback>,
    pub metrics: MetricsReport,
}

impl LabeledEvaluation {
    pub fn labeled_scores(&self) -> Vec<LabeledScore> {
        self.items
            .iter()
            .map(|i| LabeledScore::new(i.score, i.polarity == Polarity::Correct))
            .collect()
    }
}

/// Scores every labeled feedback record with `editor` and compares the
/// rewards with the labels (correct polarity = helpful).
pub fn evaluate_labeled(
    env: &RewardEnv,
    records: &[FeedbackRecord],
    editor: &str,
    workers: usize,
) -> Result<LabeledEvaluation, PipelineError> {
    let results = par_map(records, workers, |r| {
        env.score(&RewardRequest {
            problem_id: r.problem_id.clone(),
            wrong_code: r.wrong_code.clone(),
            feedback: r.text.clone(),
            editor: editor.to_string(),
            suite_ref: None,
        })
    });
    let mut items = Vec::with_capacity(records.len());
    for (r, res) in records.iter().zip(results) {
        let resp = res?;
        items.push(ScoredFeedback {
            problem_id: r.problem_id.clone(),
            polarity: r.polarity,
            score: resp.score,
            per_case: resp.eval.bitmap(),
        });
    }
    let scored: Vec<_> = items
        .iter()
        .map(|i| LabeledScore::new(i.score, i.polarity == Polarity::Correct))
        .collect();
    Ok(LabeledEvaluation {
        editor: editor.to_string(),
        metrics: metrics_report(&scored)?,
        items,
    })
}

/// Feedback samples for one wrong program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackContext {
    pub problem_id: String,
    pub wrong_code: String,
    pub samples: Vec<String>,
}

/// Groups records by `(problem_id, wrong_code)` in first-appearance order
/// and takes `n` samples per context, cycling through its records.
pub fn contexts_from_records(records: &[FeedbackRecord], n: usize) -> Vec<FeedbackContext> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut texts: HashMap<(String, String), Vec<String>> = HashMap::new();
    for r in records {
        let key = (r.problem_id.clone(), r.wrong_code.clone());
        if !texts.contains_key(&key) {
            order.push(key.clone());
        }
        texts.entry(key).or_default().push(r.text.clone());
    }
    order
        .into_iter()
        .map(|key| {
            let t = &texts[&key];
            FeedbackContext {
                samples: t.iter().cycle().take(n).cloned().collect(),
                problem_id: key.0,
                wrong_code: key.1,
            }
        })
        .collect()
}

/// Draws `params.n_samples` feedback texts per `(problem, wrong_code)`.
pub fn contexts_from_model(
    problems: &HashMap<String, Problem>,
    targets: &[(String, String)],
    model: &dyn TextGenerator,
    params: &GenerationParams,
) -> Result<Vec<FeedbackContext>, PipelineError> {
    targets
        .iter()
        .map(|(pid, wrong)| {
            let problem = problems
                .get(pid)
                .ok_or_else(|| RewardError::UnknownProblem(pid.clone()))?;
            let samples = model.complete(&render_feedback_prompt(problem, wrong), params)?;
            Ok(FeedbackContext {
                problem_id: pid.clone(),
                wrong_code: wrong.clone(),
                samples,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextResult {
    pub problem_id: String,
    pub wrong_code_sha256: String,
    pub correct: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAt1Report {
    pub editor: String,
    pub pass_at_1: f64,
    pub contexts: Vec<ContextResult>,
}

/// Edits each wrong program once per feedback sample; a sample counts as
/// correct when the edit passes every test.
pub fn evaluate_pass_at_1(
    env: &RewardEnv,
    contexts: &[FeedbackContext],
    editor: &str,
    workers: usize,
) -> Result<PassAt1Report, PipelineError> {
    let jobs: Vec<(usize, RewardRequest)> = contexts
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            c.samples.iter().map(move |fb| {
                (
                    ci,
                    RewardRequest {
                        problem_id: c.problem_id.clone(),
                        wrong_code: c.wrong_code.clone(),
                        feedback: fb.clone(),
                        editor: editor.to_string(),
                        suite_ref: None,
                    },
                )
            })
        })
        .collect();
    let results = par_map(&jobs, workers, |(_, req)| env.score(req));
    let mut correct = vec![0usize; contexts.len()];
    for ((ci, _), r) in jobs.iter().zip(results) {
        if r?.pass_all {
            correct[*ci] += 1;
        }
    }
    let counts: Vec<_> = contexts.iter().zip(&correct).map(|(c, &k)| (k, c.samples.len())).collect();
    Ok(PassAt1Report {
        editor: editor.to_string(),
        pass_at_1: pass_at_1_counts(&counts)?,
        contexts: contexts
            .iter()
            .zip(&correct)
            .map(|(c, &k)| ContextResult {
                problem_id: c.problem_id.clone(),
                wrong_code_sha256: sha256_hex(c.wrong_code.as_bytes()),
                correct: k,
                n: c.samples.len(),
            })
            .collect(),
    })
}

/// Output of the reward-ranked pairing pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedDatasets {
    pub ranked: Vec<RankedList>,
    pub pairs: Vec<PreferencePair>,
    pub rejection_sampling: Vec<SftRecord>,
}

/// Samples and ranks feedback for every target (concurrently across
/// targets), then derives reward-ranked pairs and rejection-sampling labels
/// in target order.
#[allow(clippy::too_many_arguments)]
pub fn ranked_datasets(
    env: &RewardEnv,
    targets: &[(String, String)],
    feedback_model: &dyn TextGenerator,
    params: &GenerationParams,
    editor: &str,
    min_score: f64,
    workers: usize,
) -> Result<RankedDatasets, PipelineError> {
    let editor = env
        .editors
        .get(editor)
        .ok_or_else(|| RewardError::UnknownEditor(editor.to_string()))?
        .clone();
    let lists = par_map(targets, workers, |(pid, wrong)| -> Result<RankedList, PipelineError> {
        let request = RewardRequest {
            problem_id: pid.clone(),
            wrong_code: wrong.clone(),
            feedback: String::new(),
            editor: String::new(),
            suite_ref: None,
        };
        let (problem, suite) = env.resolve(&request)?;
        Ok(sample_and_rank(
            problem,
            suite,
            wrong,
            feedback_model,
            params,
            editor.as_ref(),
            &env.editor_params,
            &env.sandbox,
        )?)
    });
    let mut out = RankedDatasets::default();
    for list in lists {
        let list = list?;
        out.pairs.extend(build_dpo_reward_ranked(&list));
        out.rejection_sampling.extend(build_rejection_sampling(&list, min_score));
        out.ranked.push(list);
    }
    Ok(out)
}

/// Joins labeled feedback with the code it leads to: accepted solutions for
/// correct feedback, the next wrong submission for wrong feedback. Records
/// with no matching triplet or pair are counted in the second return value.
pub fn editor_entries<'a>(
    records: &[FeedbackRecord],
    triplets: &[EditTriplet],
    wrong_pairs: &[WrongPair],
    problems: &'a HashMap<String, Problem>,
) -> (Vec<EditorEntry<'a>>, Vec<EditorEntry<'a>>, usize) {
    let (mut correct, mut wrong, mut unmatched) = (Vec::new(), Vec::new(), 0);
    for r in records {
        let Some(problem) = problems.get(&r.problem_id) else {
            unmatched += 1;
            continue;
        };
        let target = match r.polarity {
            Polarity::Correct => triplets
                .iter()
                .find(|t| t.problem_id == r.problem_id && t.wrong_code == r.wrong_code)
                .map(|t| t.correct_code.clone()),
            Polarity::Wrong => wrong_pairs
                .iter()
                .find(|w| w.problem_id == r.problem_id && w.earlier == r.wrong_code)
                .map(|w| w.later.clone()),
        };
        let Some(target_code) = target else {
            unmatched += 1;
            continue;
        };
        let entry = EditorEntry {
            problem,
            wrong_code: r.wrong_code.clone(),
            feedback: r.text.clone(),
            target_code,
        };
        match r.polarity {
            Polarity::Correct => correct.push(entry),
            Polarity::Wrong => wrong.push(entry),
        }
    }
    (correct, wrong, unmatched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CorpusDir;

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<u32> = (0..100).collect();
        assert_eq!(par_map(&v, 7, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(par_map(&Vec::<u32>::new(), 3, |x| *x).is_empty());
    }

    #[test]
    fn fixture_ingest() {
        let (traces, report) = ingest(CorpusDir::fixtures().traces().unwrap(), &NormalizationPolicy::default());
        assert_eq!(report.traces_kept, traces.len());
        assert!(report.rejected.is_empty());
        let wrong_total: usize = traces.iter().map(|t| t.wrong_submissions().len()).sum();
        assert_eq!(report.triplets.len(), wrong_total);
    }

    #[test]
    fn records_to_contexts() {
        let rec = |w: &str, t: &str| FeedbackRecord {
            problem_id: "p".into(),
            wrong_code: w.into(),
            text: t.into(),
            polarity: Polarity::Correct,
            source: crate::pairing::FeedbackSource::Annotated,
            score: None,
        };
        let ctx = contexts_from_records(&[rec("b", "1"), rec("a", "2"), rec("b", "3")], 3);
        assert_eq!(ctx.len(), 2);
        assert_eq!(ctx[0].wrong_code, "b");
        assert_eq!(ctx[0].samples, ["1", "3", "1"]);
        assert_eq!(ctx[1].samples, ["2", "2", "2"]);
    }
}
