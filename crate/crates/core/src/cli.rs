//! Command-line front end.
//!
//! Every subcommand reads the environment config (`--config`, else
//! defaults), honors `--seed`, and writes its primary output to `--out` or
//! stdout. Failures exit nonzero and print `error[<category>]: ...`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::clients::{GenerationParams, SharedGenerator};
use crate::config::{ConfigError, EnvConfig};
use crate::corpus::{balance_by_difficulty, line_overlap, Document, NormalizationPolicy, Problem};
use crate::data::{fixture_corpus_dir, read_jsonl, write_jsonl, CorpusDir, DataError, WrongSolution};
use crate::pairing::{
    build_dpo_cw_all, build_dpo_ts, build_dpo_ts_validated, build_feedback_annotation_jobs, emit_editor_corpus,
    run_annotation_jobs, AnnotationDemos, FeedbackRecord, PairContext, Phase,
};
use crate::pipeline::{
    contexts_from_model, contexts_from_records, editor_entries, evaluate_labeled, evaluate_pass_at_1, ingest,
    ranked_datasets, PipelineError,
};
use crate::reward::{sha256_hex, ProblemSet, RewardDiagnostics, RewardEnv, RewardError, RewardRequest};
use crate::sandbox::Sandbox;
use crate::service::{serve, ServiceError};
use crate::testgen::{audit_suite, synthesize_suite, PassRatioStats, SuiteRecord, TestgenError};

#[derive(Debug, Parser)]
#[command(name = "feedback-gym", version, about = "Unit-test-driven reward environment for code feedback")]
pub struct Cli {
    /// TOML environment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Primary output file (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Corpus directory; the bare word `fixtures` selects the shipped
    /// fixtures (write `./fixtures` for a local directory of that name).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate edit traces and derive triplets and wrong pairs.
    Ingest(IngestArgs),
    /// Synthesize hidden test suites with an annotator model.
    Testgen(TestgenArgs),
    /// Pass-ratio statistics of known-wrong solutions per suite.
    Audit(AuditArgs),
    /// Build feedback, preference and editor training sets.
    Pairs(PairsArgs),
    /// Score feedback with an editor and the hidden tests.
    Score(ScoreArgs),
    /// Pass@1 of an editor, or reward-model metrics on labeled feedback.
    Evaluate(EvaluateArgs),
    /// Line overlap between candidate and reference code.
    Overlap(OverlapArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Trace file (defaults to the corpus `traces.jsonl`).
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Compare correct solutions byte-for-byte when deduplicating.
    #[arg(long)]
    pub exact: bool,
    /// Also draw this many problems per difficulty level.
    #[arg(long)]
    pub balance: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TestgenArgs {
    /// Annotator binding name.
    #[arg(long)]
    pub annotator: String,
    /// Restrict to these problems (repeatable).
    #[arg(long = "problem")]
    pub problems: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Suite records (defaults to the corpus `problems.jsonl`).
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Known-wrong solutions (defaults to the corpus `wrong_solutions.jsonl`).
    #[arg(long)]
    pub wrong: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairStrategy {
    /// Annotate correct and wrong feedback from traces.
    Annotate,
    /// Teacher over student feedback.
    Ts,
    /// Correct over wrong annotated feedback.
    Cw,
    /// Best over worst sampled feedback by reward.
    RewardRanked,
    /// Best sampled feedback as a supervised label.
    Rs,
    /// Keyword-prefixed editor training records.
    Editor,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[arg(long, value_enum)]
    pub strategy: PairStrategy,
    /// Labeled feedback records (defaults to the corpus `feedback.jsonl`).
    #[arg(long)]
    pub feedback: Option<PathBuf>,
    #[arg(long)]
    pub annotator: Option<String>,
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long)]
    pub student: Option<PathBuf>,
    #[arg(long)]
    pub feedback_model: Option<String>,
    #[arg(long, default_value = "mock-faithful")]
    pub editor: String,
    #[arg(long, default_value_t = 1)]
    pub phase: u8,
    /// Samples per context (defaults to the config value).
    #[arg(long)]
    pub n: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Line-delimited reward requests.
    #[arg(long, conflicts_with_all = ["problem", "wrong_code", "feedback"])]
    pub requests: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    /// File holding the wrong program.
    #[arg(long)]
    pub wrong_code: Option<PathBuf>,
    #[arg(long)]
    pub feedback: Option<String>,
    #[arg(long, default_value = "mock-faithful")]
    pub editor: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub editor: String,
    /// Samples per context.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Labeled feedback records (defaults to the corpus `feedback.jsonl`).
    #[arg(long)]
    pub feedback: Option<PathBuf>,
    /// Sample feedback from this binding instead of using the records.
    #[arg(long)]
    pub feedback_model: Option<String>,
    /// Report classification and correlation metrics against the labels.
    #[arg(long)]
    pub labeled: bool,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// File or directory of candidate programs.
    #[arg(long)]
    pub candidate: PathBuf,
    /// File or directory of reference programs.
    #[arg(long)]
    pub reference: PathBuf,
    /// Compare raw lines instead of trimmed, comment-free lines.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Upstream(String),
    #[error("{0}")]
    Sandbox(String),
    #[error("{0}")]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Upstream(_) => "upstream",
            CliError::Sandbox(_) => "sandbox",
            CliError::Service(_) => "service",
            CliError::Failed(_) => "failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 3,
            CliError::Input(_) => 4,
            CliError::Upstream(_) => 5,
            CliError::Sandbox(_) => 6,
            CliError::Service(_) => 7,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::Editor(_) => CliError::Upstream(e.to_string()),
            RewardError::Sandbox(_) => CliError::Sandbox(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Reward(r) => r.into(),
            PipelineError::Rank(r) => r.source.into(),
            PipelineError::Client(_) => CliError::Upstream(e.to_string()),
            PipelineError::Metrics(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<TestgenError> for CliError {
    fn from(e: TestgenError) -> Self {
        match e {
            TestgenError::Client(_) => CliError::Upstream(e.to_string()),
            TestgenError::Sandbox(_) => CliError::Sandbox(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<crate::sandbox::SandboxError> for CliError {
    fn from(e: crate::sandbox::SandboxError) -> Self {
        CliError::Sandbox(e.to_string())
    }
}

/// Parses `argv` and runs the command; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

struct Ctx {
    config: EnvConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn corpus(&self) -> CorpusDir {
        self.config.corpus_dir()
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
                }
                std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            }
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Failed(e.to_string())),
        }
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.emit(&text)
    }

    fn emit_jsonl<T: Serialize>(&self, items: &[T]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, items).expect("in-memory write");
        self.emit(&String::from_utf8(buf).expect("json is utf-8"))
    }

    fn problems(&self) -> Result<Vec<Problem>, CliError> {
        Ok(self.corpus().problems()?)
    }

    fn problem_map(&self) -> Result<HashMap<String, Problem>, CliError> {
        Ok(self.problems()?.into_iter().map(|p| (p.problem_id.clone(), p)).collect())
    }

    fn env(&self) -> Result<RewardEnv, CliError> {
        let problems = self.problems()?;
        let editors = self.config.build_registry(&problems)?;
        let sandbox = Arc::new(Sandbox::new(self.config.sandbox.clone())?);
        let mut env = RewardEnv::new(ProblemSet::new(problems), editors, sandbox);
        env.editor_params = self.config.editor_params.clone();
        Ok(env)
    }

    fn generator(&self, env: &RewardEnv, name: &str) -> Result<SharedGenerator, CliError> {
        env.editors
            .get(name)
            .cloned()
            .ok_or_else(|| CliError::Input(format!("no binding named {name:?}")))
    }

    fn sampling(&self, n: u32) -> GenerationParams {
        GenerationParams {
            n_samples: n,
            seed: Some(self.config.seed),
            ..self.config.sampling.clone()
        }
    }

    fn parallelism(&self) -> usize {
        self.config.sandbox.max_processes
    }
}

fn resolve_corpus(arg: &Path) -> PathBuf {
    if arg == Path::new("fixtures") {
        fixture_corpus_dir()
    } else {
        arg.to_path_buf()
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.clone(),
                source,
            })?;
            EnvConfig::from_toml(&text, p)?
        }
        None => EnvConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(c) = &cli.corpus {
        config.paths.corpus = Some(resolve_corpus(c));
    }
    if let Command::Serve(ServeArgs { bind: Some(b) }) = &cli.command {
        config.service.bind = b.clone();
    }
    config.validate()?;
    let ctx = Ctx {
        config,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Testgen(a) => cmd_testgen(&ctx, a),
        Command::Audit(a) => cmd_audit(&ctx, a),
        Command::Pairs(a) => cmd_pairs(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Overlap(a) => cmd_overlap(&ctx, a),
        Command::Serve(_) => Ok(serve(&ctx.config)?),
    }
}

#[derive(Serialize)]
struct IngestOutput {
    #[serde(flatten)]
    report: crate::pipeline::IngestReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    balanced: Option<BalancedOutput>,
}

#[derive(Serialize)]
struct BalancedOutput {
    problem_ids: Vec<String>,
    shortfalls: Vec<crate::corpus::Shortfall>,
}

fn cmd_ingest(ctx: &Ctx, a: &IngestArgs) -> Result<(), CliError> {
    let path = a.traces.clone().unwrap_or_else(|| ctx.corpus().path("traces.jsonl"));
    let file = std::fs::File::open(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parsed = crate::corpus::parse_corpus(std::io::BufReader::new(file));
    let policy = if a.exact {
        NormalizationPolicy::Exact
    } else {
        NormalizationPolicy::default()
    };
    let (_, report) = ingest(parsed, &policy);
    for r in &report.rejected {
        eprintln!("rejected: {r}");
    }
    let balanced = match a.balance {
        Some(0) => return Err(CliError::Input("--balance must be at least 1".into())),
        Some(k) => {
            let sample = balance_by_difficulty(&ctx.problems()?, k, ctx.config.seed);
            Some(BalancedOutput {
                problem_ids: sample.problems.into_iter().map(|p| p.problem_id).collect(),
                shortfalls: sample.shortfalls,
            })
        }
        None => None,
    };
    ctx.emit_json(&IngestOutput { report, balanced })
}

fn cmd_testgen(ctx: &Ctx, a: &TestgenArgs) -> Result<(), CliError> {
    let env = ctx.env()?;
    let annotator = ctx.generator(&env, &a.annotator)?;
    let (traces, _) = ingest(ctx.corpus().traces()?, &NormalizationPolicy::default());
    let mut problems: Vec<_> = env.problems.problems().cloned().collect();
    problems.sort_by(|x, y| x.problem_id.cmp(&y.problem_id));
    if !a.problems.is_empty() {
        for id in &a.problems {
            if env.problems.problem(id).is_none() {
                return Err(CliError::Input(format!("unknown problem {id:?}")));
            }
        }
        problems.retain(|p| a.problems.contains(&p.problem_id));
    }
    let params = ctx.sampling(1);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for p in &problems {
        let Some(trace) = traces.iter().find(|t| t.problem_id == p.problem_id) else {
            eprintln!("{}: no accepted solution in the traces; skipped", p.problem_id);
            continue;
        };
        match synthesize_suite(p, trace.correct_code(), annotator.as_ref(), &params, &ctx.config.testgen, &env.sandbox) {
            Ok(s) => records.push(SuiteRecord::from_suite(&s.suite, Some(s.provenance))),
            Err(e) => {
                eprintln!("{}: {e}", p.problem_id);
                failures.push(p.problem_id.clone());
            }
        }
    }
    ctx.emit_jsonl(&records)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("no suite for {}", failures.join(", "))))
    }
}

fn cmd_audit(ctx: &Ctx, a: &AuditArgs) -> Result<(), CliError> {
    let suites: Vec<SuiteRecord> = read_jsonl(&a.suite.clone().unwrap_or_else(|| ctx.corpus().path("problems.jsonl")))?;
    let wrong: Vec<WrongSolution> =
        read_jsonl(&a.wrong.clone().unwrap_or_else(|| ctx.corpus().path("wrong_solutions.jsonl")))?;
    let sandbox = Sandbox::new(ctx.config.sandbox.clone())?;
    let mut reports = Vec::new();
    for s in &suites {
        let codes: Vec<String> = wrong
            .iter()
            .filter(|w| w.problem_id == s.problem_id)
            .map(|w| w.code.clone())
            .collect();
        if codes.is_empty() {
            eprintln!("{}: no wrong solutions; skipped", s.problem_id);
            continue;
        }
        reports.push(audit_suite(&s.suite(), &codes, &sandbox)?);
    }
    let mut table = format!("suite\tn\t{}\tvalid\n", PassRatioStats::table_header());
    for r in &reports {
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.suite_id,
            r.stats.sample_count,
            r.stats.table_row(),
            r.valid
        ));
    }
    match &ctx.out {
        Some(_) => {
            print!("{table}");
            ctx.emit_jsonl(&reports)
        }
        None => ctx.emit(&table),
    }
}

fn feedback_records(ctx: &Ctx, path: &Option<PathBuf>) -> Result<Vec<FeedbackRecord>, CliError> {
    Ok(match path {
        Some(p) => read_jsonl(p)?,
        None => ctx.corpus().feedback()?,
    })
}

fn distinct_contexts(records: &[FeedbackRecord]) -> Vec<(String, String)> {
    let mut seen = std::collections::HashSet::new();
    records
        .iter()
        .map(|r| (r.problem_id.clone(), r.wrong_code.clone()))
        .filter(|k| seen.insert(k.clone()))
        .collect()
}

fn cmd_pairs(ctx: &Ctx, a: &PairsArgs) -> Result<(), CliError> {
    let need = |v: &Option<String>, flag: &str| {
        v.clone()
            .ok_or_else(|| CliError::Input(format!("--strategy {:?} needs {flag}", a.strategy)))
    };
    match a.strategy {
        PairStrategy::Annotate => {
            let env = ctx.env()?;
            let annotator = ctx.generator(&env, &need(&a.annotator, "--annotator")?)?;
            let (_, report) = ingest(ctx.corpus().traces()?, &NormalizationPolicy::default());
            let jobs = build_feedback_annotation_jobs(
                &report.triplets,
                &report.wrong_pairs,
                &ctx.problem_map()?,
                &AnnotationDemos::default(),
            )
            .map_err(|e| CliError::Input(e.to_string()))?;
            let outcome = run_annotation_jobs(&jobs, annotator.as_ref());
            for d in &outcome.discarded {
                eprintln!("job {}: {}", d.job_index, d.reason);
            }
            ctx.emit_jsonl(&outcome.records)
        }
        PairStrategy::Cw => {
            let records = feedback_records(ctx, &a.feedback)?;
            let batch = build_dpo_cw_all(&records, &ctx.problem_map()?, ctx.config.pairing.cw_cap)
                .map_err(|e| CliError::Input(e.to_string()))?;
            for s in &batch.skipped {
                eprintln!("skipped {}: {}", s.context.problem_id, s.reason);
            }
            ctx.emit_jsonl(&batch.pairs)
        }
        PairStrategy::Ts => {
            let (Some(tp), Some(sp)) = (&a.teacher, &a.student) else {
                return Err(CliError::Input("--strategy ts needs --teacher and --student".into()));
            };
            let teacher: Vec<FeedbackRecord> = read_jsonl(tp)?;
            let student: Vec<FeedbackRecord> = read_jsonl(sp)?;
            let problems = ctx.problem_map()?;
            let mut pairs = Vec::new();
            for t in &teacher {
                let Some(s) = student
                    .iter()
                    .find(|s| s.problem_id == t.problem_id && s.wrong_code == t.wrong_code)
                else {
                    eprintln!("{}: no student feedback; skipped", t.problem_id);
                    continue;
                };
                let problem = problems
                    .get(&t.problem_id)
                    .ok_or_else(|| CliError::Input(format!("unknown problem {:?}", t.problem_id)))?;
                let ctx_ = PairContext::new(problem, &t.wrong_code);
                let pair = if ctx.config.pairing.validated_ts {
                    match (t.score, s.score) {
                        (Some(ts), Some(ss)) => build_dpo_ts_validated(&ctx_, &t.text, &s.text, ts, ss),
                        _ => {
                            return Err(CliError::Input(
                                "validated teacher/student pairs need scored records".into(),
                            ))
                        }
                    }
                } else {
                    build_dpo_ts(&ctx_, &t.text, &s.text)
                };
                match pair {
                    Ok(p) => pairs.push(p),
                    Err(reason) => eprintln!("skipped {}: {reason}", t.problem_id),
                }
            }
            ctx.emit_jsonl(&pairs)
        }
        PairStrategy::RewardRanked | PairStrategy::Rs => {
            let env = ctx.env()?;
            let model = ctx.generator(&env, &need(&a.feedback_model, "--feedback-model")?)?;
            let records = feedback_records(ctx, &a.feedback)?;
            let targets = distinct_contexts(&records);
            let params = ctx.sampling(a.n.unwrap_or(ctx.config.pairing.n_samples));
            let data = ranked_datasets(
                &env,
                &targets,
                model.as_ref(),
                &params,
                &a.editor,
                ctx.config.pairing.rs_min_score,
                ctx.parallelism(),
            )?;
            if a.strategy == PairStrategy::Rs {
                ctx.emit_jsonl(&data.rejection_sampling)
            } else {
                ctx.emit_jsonl(&data.pairs)
            }
        }
        PairStrategy::Editor => {
            let phase = Phase::try_from(a.phase).map_err(CliError::Input)?;
            let records = feedback_records(ctx, &a.feedback)?;
            let (_, report) = ingest(ctx.corpus().traces()?, &NormalizationPolicy::default());
            let problems = ctx.problem_map()?;
            let (correct, wrong, unmatched) = editor_entries(&records, &report.triplets, &report.wrong_pairs, &problems);
            if unmatched > 0 {
                eprintln!("{unmatched} feedback record(s) had no matching target code");
            }
            ctx.emit_jsonl(&emit_editor_corpus(&correct, &wrong, phase))
        }
    }
}

#[derive(Serialize)]
struct ScoreLine {
    index: usize,
    problem_id: String,
    score: f64,
    pass_all: bool,
    per_case: String,
    edited_code_sha256: String,
    diagnostics: RewardDiagnostics,
}

fn cmd_score(ctx: &Ctx, a: &ScoreArgs) -> Result<(), CliError> {
    let requests: Vec<RewardRequest> = match &a.requests {
        Some(p) => read_jsonl(p)?,
        None => {
            let (Some(problem), Some(code), Some(feedback)) = (&a.problem, &a.wrong_code, &a.feedback) else {
                return Err(CliError::Input(
                    "give --requests, or all of --problem, --wrong-code and --feedback".into(),
                ));
            };
            let wrong_code =
                std::fs::read_to_string(code).map_err(|e| CliError::Input(format!("{}: {e}", code.display())))?;
            vec![RewardRequest {
                problem_id: problem.clone(),
                wrong_code,
                feedback: feedback.clone(),
                editor: a.editor.clone(),
                suite_ref: None,
            }]
        }
    };
    let env = ctx.env()?;
    let results = crate::pipeline::par_map(&requests, ctx.parallelism(), |r| env.score(r));
    let mut lines = Vec::with_capacity(requests.len());
    for (index, (req, res)) in requests.iter().zip(results).enumerate() {
        let resp = res?;
        lines.push(ScoreLine {
            index,
            problem_id: req.problem_id.clone(),
            score: resp.score,
            pass_all: resp.pass_all,
            per_case: resp.eval.bitmap(),
            edited_code_sha256: sha256_hex(resp.edited_code.as_bytes()),
            diagnostics: resp.diagnostics,
        });
    }
    ctx.emit_jsonl(&lines)
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::Input("--n must be at least 1".into()));
    }
    let env = ctx.env()?;
    let records = feedback_records(ctx, &a.feedback)?;
    if a.labeled {
        let report = evaluate_labeled(&env, &records, &a.editor, ctx.parallelism())?;
        return ctx.emit_json(&report);
    }
    let contexts = match &a.feedback_model {
        Some(name) => {
            let model = ctx.generator(&env, name)?;
            let problems = ctx.problem_map()?;
            contexts_from_model(&problems, &distinct_contexts(&records), model.as_ref(), &ctx.sampling(a.n as u32))?
        }
        None => contexts_from_records(&records, a.n),
    };
    let report = evaluate_pass_at_1(&env, &contexts, &a.editor, ctx.parallelism())?;
    ctx.emit_json(&report)
}

fn read_documents(path: &Path) -> Result<Vec<Document>, CliError> {
    let err = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        entries
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                let name = p.file_name().expect("file has a name").to_string_lossy().into_owned();
                Ok(Document::new(name, text))
            })
            .collect()
    } else {
        let text = std::fs::read_to_string(path).map_err(err)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![Document::new(name, text)])
    }
}

fn cmd_overlap(ctx: &Ctx, a: &OverlapArgs) -> Result<(), CliError> {
    let policy = if a.exact {
        NormalizationPolicy::Exact
    } else {
        NormalizationPolicy::default()
    };
    let report = line_overlap(&read_documents(&a.candidate)?, &read_documents(&a.reference)?, &policy);
    ctx.emit_json(&report)
}
