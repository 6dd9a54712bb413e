//! Unit-test-driven feedback reward and the metrics used to validate it.
//!
//! The reward for feedback `c` on wrong code `y` is the fraction of hidden
//! test cases passed by the editor's output `φ(q, y, c)`:
//!
//! ```text
//! score = (1/k) Σ_i 1[ φ(q, y, c)(x_i) = z_i ]
//! ```
//!
//! so it always lies on the lattice {0, 1/k, …, 1}.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clients::templates::{render_editor_prompt, render_feedback_prompt, render_geval_prompt};
use crate::clients::{ClientError, GenerationParams, Registry, TextGenerator};
use crate::corpus::Problem;
use crate::sandbox::{EvalResult, Sandbox, SandboxError, TestSuite};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("unknown editor binding {0:?}")]
    UnknownEditor(String),
    #[error("suite {0:?} is empty")]
    EmptySuite(String),
    #[error("editor failed: {0}")]
    Editor(#[from] ClientError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RewardRequest {
    pub problem_id: String,
    pub wrong_code: String,
    /// Scored as-is, including when empty.
    pub feedback: String,
    /// Binding name of the editor to use.
    pub editor: String,
    /// Suite to score against; defaults to the problem's own suite.
    #[serde(default)]
    pub suite_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardDiagnostics {
    /// False when the completion had no fenced block and was run whole.
    pub code_block_found: bool,
    pub keyword_stripped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResponse {
    pub score: f64,
    pub pass_all: bool,
    pub edited_code: String,
    pub eval: EvalResult,
    pub latency_secs: f64,
    pub diagnostics: RewardDiagnostics,
}

impl RewardResponse {
    /// Copy with wall-clock fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.latency_secs = 0.0;
        for c in &mut r.eval.per_case {
            c.outcome.duration_secs = 0.0;
        }
        r
    }
}

pub const KEYWORDS: [&str; 2] = ["[Correct]", "[Wrong]"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCode {
    pub code: String,
    pub block_found: bool,
    pub keyword: Option<String>,
}

fn strip_keyword(text: &str) -> (Option<String>, &str) {
    let trimmed = text.trim_start();
    for kw in KEYWORDS {
        if let Some(rest) = trimmed.strip_prefix(kw) {
            let rest = rest.strip_prefix("\r\n").or_else(|| rest.strip_prefix('\n')).unwrap_or(rest);
            return (Some(kw.to_string()), rest);
        }
    }
    (None, text)
}

fn last_fenced_block(text: &str) -> Option<&str> {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    let re = FENCE.get_or_init(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)```").expect("valid regex"));
    re.captures_iter(text).last().map(|c| c.get(1).expect("group").as_str())
}

/// Takes the last fenced code block of an editor completion, or the whole
/// completion when there is none. A leading `[Correct]`/`[Wrong]` keyword is
/// removed either way.
pub fn extract_code(completion: &str) -> ExtractedCode {
    let (kw_outer, body) = strip_keyword(completion);
    let (block_found, code) = match last_fenced_block(body) {
        Some(block) => (true, block),
        None => (false, body),
    };
    let (kw_inner, code) = strip_keyword(code);
    ExtractedCode {
        code: code.to_string(),
        block_found,
        keyword: kw_outer.or(kw_inner),
    }
}

/// Scores one piece of feedback: edit with `editor`, run the edit on `suite`.
pub fn score_feedback(
    problem: &Problem,
    suite: &TestSuite,
    wrong_code: &str,
    feedback: &str,
    editor: &dyn TextGenerator,
    params: &GenerationParams,
    sandbox: &Sandbox,
) -> Result<RewardResponse, RewardError> {
    if suite.is_empty() {
        return Err(RewardError::EmptySuite(suite.suite_id.clone()));
    }
    let start = Instant::now();
    let prompt = render_editor_prompt(problem, wrong_code, feedback);
    let params = GenerationParams {
        n_samples: 1,
        ..params.clone()
    };
    let completion = editor.complete(&prompt, &params)?.remove(0);
    let extracted = extract_code(&completion);
    let eval = sandbox.run_suite(&extracted.code, suite)?;
    Ok(RewardResponse {
        score: eval.score,
        pass_all: eval.pass_all(),
        edited_code: extracted.code,
        eval,
        latency_secs: start.elapsed().as_secs_f64(),
        diagnostics: RewardDiagnostics {
            code_block_found: extracted.block_found,
            keyword_stripped: extracted.keyword,
        },
    })
}

/// Problems plus any extra suites addressable by `suite_ref`.
#[derive(Debug, Clone, Default)]
pub struct ProblemSet {
    problems: HashMap<String, Problem>,
    suites: HashMap<String, TestSuite>,
}

impl ProblemSet {
    pub fn new(problems: impl IntoIterator<Item = Problem>) -> Self {
        let mut set = ProblemSet::default();
        for p in problems {
            set.suites.insert(p.problem_id.clone(), p.suite());
            set.problems.insert(p.problem_id.clone(), p);
        }
        set
    }

    pub fn add_suite(&mut self, suite: TestSuite) {
        self.suites.insert(suite.suite_id.clone(), suite);
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.get(id)
    }

    pub fn suite(&self, id: &str) -> Option<&TestSuite> {
        self.suites.get(id)
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn problems(&self) -> impl Iterator<Item = &Problem> {
        self.problems.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardAuditRecord {
    pub request_digest: String,
    pub edited_code_digest: String,
    pub score: f64,
    pub per_case: String,
    pub latency_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RewardAuditRecord {
    pub fn new(request: &RewardRequest, response: &RewardResponse) -> Self {
        let canonical = serde_json::to_vec(request).expect("request serializes");
        RewardAuditRecord {
            request_digest: sha256_hex(&canonical),
            edited_code_digest: sha256_hex(response.edited_code.as_bytes()),
            score: response.score,
            per_case: response.eval.bitmap(),
            latency_secs: response.latency_secs,
        }
    }
}

/// Append-only JSONL log of scored requests.
#[derive(Debug)]
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { file: Mutex::new(file) })
    }

    pub fn append(&self, record: &RewardAuditRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        self.file.lock().unwrap().write_all(line.as_bytes())
    }
}

/// Everything needed to answer [`RewardRequest`]s.
#[derive(Clone)]
pub struct RewardEnv {
    pub problems: Arc<ProblemSet>,
    pub editors: Registry,
    pub sandbox: Arc<Sandbox>,
    pub editor_params: GenerationParams,
    pub audit: Option<Arc<AuditLog>>,
}

pub fn default_editor_params() -> GenerationParams {
    GenerationParams {
        temperature: 0.0,
        top_p: 1.0,
        max_tokens: 1024,
        n_samples: 1,
        seed: None,
    }
}

impl RewardEnv {
    pub fn new(problems: ProblemSet, editors: Registry, sandbox: Arc<Sandbox>) -> Self {
        RewardEnv {
            problems: Arc::new(problems),
            editors,
            sandbox,
            editor_params: default_editor_params(),
            audit: None,
        }
    }

    pub fn resolve(&self, request: &RewardRequest) -> Result<(&Problem, &TestSuite), RewardError> {
        let problem = self
            .problems
            .problem(&request.problem_id)
            .ok_or_else(|| RewardError::UnknownProblem(request.problem_id.clone()))?;
        let suite_id = request.suite_ref.as_deref().unwrap_or(&request.problem_id);
        let suite = self
            .problems
            .suite(suite_id)
            .ok_or_else(|| RewardError::UnknownSuite(suite_id.to_string()))?;
        Ok((problem, suite))
    }

    pub fn score(&self, request: &RewardRequest) -> Result<RewardResponse, RewardError> {
        let editor = self
            .editors
            .get(&request.editor)
            .ok_or_else(|| RewardError::UnknownEditor(request.editor.clone()))?;
        self.score_with(request, editor.as_ref())
    }

    pub fn score_with(&self, request: &RewardRequest, editor: &dyn TextGenerator) -> Result<RewardResponse, RewardError> {
        let (problem, suite) = self.resolve(request)?;
        let response = score_feedback(
            problem,
            suite,
            &request.wrong_code,
            &request.feedback,
            editor,
            &self.editor_params,
            &self.sandbox,
        )?;
        if let Some(log) = &self.audit {
            if let Err(e) = log.append(&RewardAuditRecord::new(request, &response)) {
                tracing::warn!(error = %e, "failed to append reward audit record");
            }
        }
        Ok(response)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no problems to aggregate")]
    NoProblems,
    #[error("problem {0} has no samples")]
    NoSamples(usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// Mean per-problem solve rate times 100. Rates are summed in sorted order
/// so the result does not depend on problem order.
pub fn pass_at_1(results: &[Vec<bool>]) -> Result<f64, MetricsError> {
    let counts = results
        .iter()
        .map(|samples| (samples.iter().filter(|&&p| p).count(), samples.len()))
        .collect::<Vec<_>>();
    pass_at_1_counts(&counts)
}

/// Same as [`pass_at_1`] from `(correct, samples)` counts.
pub fn pass_at_1_counts(counts: &[(usize, usize)]) -> Result<f64, MetricsError> {
    if counts.is_empty() {
        return Err(MetricsError::NoProblems);
    }
    let mut rates = Vec::with_capacity(counts.len());
    for (i, &(c, n)) in counts.iter().enumerate() {
        if n == 0 {
            return Err(MetricsError::NoSamples(i));
        }
        rates.push(c as f64 / n as f64);
    }
    rates.sort_by(f64::total_cmp);
    Ok(rates.iter().sum::<f64>() / rates.len() as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub predicted: f64,
    /// 1 when the feedback is known to be helpful.
    pub label: u8,
}

impl LabeledScore {
    pub fn new(predicted: f64, label: bool) -> Self {
        LabeledScore {
            predicted,
            label: u8::from(label),
        }
    }

    /// Positive prediction: the edit passed every test.
    pub fn predicted_positive(&self) -> bool {
        self.predicted == 1.0
    }
}

/// Confusion-matrix metrics. `None` marks an undefined ratio (zero
/// denominator); it is never coerced to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(scored: &[LabeledScore]) -> ClassificationReport {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for s in scored {
        match (s.predicted_positive(), s.label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassificationReport {
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        f1,
        false_positive_rate: ratio(fp, fp + tn),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `None` when either series has zero variance.
    pub pearson: Option<f64>,
    pub mse: f64,
}

/// Pearson correlation (point-biserial for binary labels) and mean squared
/// error between predicted scores and labels.
pub fn correlation_metrics(scored: &[LabeledScore]) -> Result<CorrelationReport, MetricsError> {
    if scored.len() < 2 {
        return Err(MetricsError::TooFewSamples(scored.len()));
    }
    let n = scored.len() as f64;
    let mean_x = scored.iter().map(|s| s.predicted).sum::<f64>() / n;
    let mean_y = scored.iter().map(|s| f64::from(s.label)).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for s in scored {
        let dx = s.predicted - mean_x;
        let dy = f64::from(s.label) - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let pearson = (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0));
    let mse = scored
        .iter()
        .map(|s| (s.predicted - f64::from(s.label)).powi(2))
        .sum::<f64>()
        / n;
    Ok(CorrelationReport { pearson, mse })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classification: ClassificationReport,
    pub correlation: CorrelationReport,
}

pub fn metrics_report(scored: &[LabeledScore]) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        classification: classification_metrics(scored),
        correlation: correlation_metrics(scored)?,
    })
}

#[derive(Debug, Error)]
pub enum GevalError {
    #[error("no score in 1..=5 found in judge output {raw:?}")]
    Parse { raw: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// First integer in the judge's reply, which must lie in 1..=5.
pub fn parse_likert(raw: &str) -> Result<u8, GevalError> {
    let digits: String = raw
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    match digits.parse::<u64>() {
        Ok(v @ 1..=5) => Ok(v as u8),
        _ => Err(GevalError::Parse { raw: raw.to_string() }),
    }
}

pub fn geval_likert(
    judge: &dyn TextGenerator,
    params: &GenerationParams,
    problem: &Problem,
    wrong_code: &str,
    feedback: &str,
) -> Result<u8, GevalError> {
    let prompt = render_geval_prompt(problem, wrong_code, feedback);
    let params = GenerationParams {
        n_samples: 1,
        ..params.clone()
    };
    let reply = judge.complete(&prompt, &params)?.remove(0);
    parse_likert(&reply)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRound {
    pub feedback: String,
    pub edited_code: String,
    pub eval: EvalResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rounds: Vec<EditRound>,
}

impl Trajectory {
    pub fn solved(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.eval.pass_all())
    }

    pub fn final_code(&self) -> Option<&str> {
        self.rounds.last().map(|r| r.edited_code.as_str())
    }
}

#[derive(Debug, Error)]
#[error("iterative editing stopped after {} round(s): {source}", partial.rounds.len())]
pub struct IterateError {
    #[source]
    pub source: RewardError,
    pub partial: Trajectory,
}

/// Critique, edit, evaluate; repeat until the code passes or `max_iters`
/// rounds have run.
#[allow(clippy::too_many_arguments)]
pub fn iterate_edit(
    problem: &Problem,
    suite: &TestSuite,
    initial_code: &str,
    feedback_model: &dyn TextGenerator,
    editor: &dyn TextGenerator,
    params: &GenerationParams,
    max_iters: usize,
    sandbox: &Sandbox,
) -> Result<Trajectory, IterateError> {
    assert!(max_iters >= 1, "max_iters must be at least 1");
    let mut trajectory = Trajectory::default();
    let mut current = initial_code.to_string();
    let single = GenerationParams {
        n_samples: 1,
        ..params.clone()
    };
    for _ in 0..max_iters {
        let feedback = match feedback_model.complete(&render_feedback_prompt(problem, &current), &single) {
            Ok(mut v) => v.remove(0),
            Err(e) => {
                return Err(IterateError {
                    source: e.into(),
                    partial: trajectory,
                })
            }
        };
        let response = match score_feedback(problem, suite, &current, &feedback, editor, &single, sandbox) {
            Ok(r) => r,
            Err(source) => {
                return Err(IterateError {
                    source,
                    partial: trajectory,
                })
            }
        };
        current = response.edited_code.clone();
        let done = response.pass_all;
        trajectory.rounds.push(EditRound {
            feedback,
            edited_code: response.edited_code,
            eval: response.eval,
        });
        if done {
            break;
        }
    }
    Ok(trajectory)
}
