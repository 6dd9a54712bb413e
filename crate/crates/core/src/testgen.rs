//! Hidden test-suite synthesis and validity auditing.
//!
//! Inputs come from an annotator model, delimited with `<start>`/`<end>`.
//! Expected outputs are whatever the reference solution prints for them;
//! inputs the reference cannot handle cleanly are dropped. Expected outputs
//! are stored verbatim and only normalized at comparison time.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::templates::render_testcase_prompt;
use crate::clients::{ClientError, GenerationParams, TextGenerator};
use crate::corpus::Problem;
use crate::sandbox::{CancelToken, ComparePolicy, ExecStatus, Sandbox, SandboxError, TestCase, TestSuite};

pub const START_TAG: &str = "<start>";
pub const END_TAG: &str = "<end>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DelimiterError {
    #[error("unterminated {START_TAG} at byte offset {offset}")]
    Unterminated { offset: usize },
    #[error("nested {START_TAG} at byte offset {offset}")]
    Nested { offset: usize },
}

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("request budget exhausted with {got} valid case(s); at least {min} required")]
    BudgetExhausted { got: usize, min: usize },
    #[error("audit needs a nonempty suite and at least one wrong solution")]
    EmptyAudit,
}

/// Extracts the text between each `<start>`…`<end>` pair, in order.
pub fn parse_delimited_inputs(raw: &str) -> Result<Vec<String>, DelimiterError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(rel) = raw[pos..].find(START_TAG) {
        let start = pos + rel;
        let body = start + START_TAG.len();
        let end = raw[body..].find(END_TAG).map(|e| body + e);
        let nested = raw[body..].find(START_TAG).map(|s| body + s);
        match (end, nested) {
            (None, _) => return Err(DelimiterError::Unterminated { offset: start }),
            (Some(e), Some(n)) if n < e => return Err(DelimiterError::Nested { offset: n }),
            (Some(e), _) => {
                out.push(raw[body..e].to_string());
                pos = e + END_TAG.len();
            }
        }
    }
    Ok(out)
}

/// Input text as fed to stdin: surrounding newlines trimmed, exactly one
/// trailing newline.
pub fn prepare_input(raw: &str) -> String {
    let mut s = raw.trim_matches(['\n', '\r']).to_string();
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub input: String,
    pub status: ExecStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSuite {
    pub suite: TestSuite,
    pub rejected: Vec<Rejection>,
}

/// Runs the reference solution on each input; clean runs become test cases
/// with the captured stdout as expected output.
pub fn label_outputs(
    suite_id: &str,
    correct_code: &str,
    inputs: &[String],
    sandbox: &Sandbox,
) -> Result<LabeledSuite, SandboxError> {
    let outcomes = sandbox.run_many(correct_code, inputs)?;
    let mut cases = Vec::new();
    let mut rejected = Vec::new();
    for (input, outcome) in inputs.iter().zip(outcomes) {
        if outcome.status == ExecStatus::Ok {
            cases.push(TestCase {
                input: input.clone(),
                expected_output: outcome.stdout,
            });
        } else {
            rejected.push(Rejection {
                input: input.clone(),
                status: outcome.status,
            });
        }
    }
    Ok(LabeledSuite {
        suite: TestSuite {
            suite_id: suite_id.to_string(),
            cases,
        },
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub target_count: usize,
    pub request_budget: usize,
    pub min_suite_size: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            target_count: 35,
            request_budget: 5,
            min_suite_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator_model: String,
    pub params: GenerationParams,
    pub requests: usize,
    pub parse_failures: usize,
    pub duplicates_dropped: usize,
    pub rejected: Vec<Rejection>,
}

/// On-disk suite record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub problem_id: String,
    pub test_cases: Vec<crate::corpus::ProblemTestCase>,
    pub provenance: Option<Provenance>,
}

impl SuiteRecord {
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

    pub fn from_suite(suite: &TestSuite, provenance: Option<Provenance>) -> Self {
        SuiteRecord {
            problem_id: suite.suite_id.clone(),
            test_cases: suite
                .cases
                .iter()
                .map(|c| crate::corpus::ProblemTestCase {
                    input: c.input.clone(),
                    output: c.expected_output.clone(),
                })
                .collect(),
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedSuite {
    pub suite: TestSuite,
    pub provenance: Provenance,
}

/// Requests inputs until `target_count` valid cases exist or the request
/// budget runs out. Request `i` uses seed `params.seed + i` so retries can
/// differ under seeded sampling.
pub fn synthesize_suite(
    problem: &Problem,
    reference_code: &str,
    annotator: &dyn TextGenerator,
    params: &GenerationParams,
    config: &SynthesisConfig,
    sandbox: &Sandbox,
) -> Result<SynthesizedSuite, TestgenError> {
    let prompt = render_testcase_prompt(problem, reference_code);
    let mut seen = HashSet::new();
    let mut cases = Vec::new();
    let mut provenance = Provenance {
        generator_model: annotator.name().to_string(),
        params: params.clone(),
        requests: 0,
        parse_failures: 0,
        duplicates_dropped: 0,
        rejected: Vec::new(),
    };
    for i in 0..config.request_budget {
        if cases.len() >= config.target_count {
            break;
        }
        let request_params = GenerationParams {
            n_samples: 1,
            seed: params.seed.map(|s| s.wrapping_add(i as u64)),
            ..params.clone()
        };
        provenance.requests += 1;
        let completion = annotator.complete(&prompt, &request_params)?.remove(0);
        let raw = match parse_delimited_inputs(&completion) {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!(problem = %problem.problem_id, error = %e, "unparseable annotator reply");
                provenance.parse_failures += 1;
                continue;
            }
        };
        let mut fresh = Vec::new();
        for input in raw.iter().map(|r| prepare_input(r)) {
            if seen.insert(input.clone()) {
                fresh.push(input);
            } else {
                provenance.duplicates_dropped += 1;
            }
        }
        let labeled = label_outputs(&problem.problem_id, reference_code, &fresh, sandbox)?;
        provenance.rejected.extend(labeled.rejected);
        cases.extend(labeled.suite.cases);
    }
    cases.truncate(config.target_count);
    if cases.len() < config.min_suite_size.max(1) {
        return Err(TestgenError::BudgetExhausted {
            got: cases.len(),
            min: config.min_suite_size.max(1),
        });
    }
    Ok(SynthesizedSuite {
        suite: TestSuite {
            suite_id: problem.problem_id.clone(),
            cases,
        },
        provenance,
    })
}

/// Indices of cases whose expected output the reference no longer
/// reproduces byte-for-byte.
pub fn verify_reproduction(suite: &TestSuite, reference_code: &str, sandbox: &Sandbox) -> Result<Vec<usize>, SandboxError> {
    let result = sandbox.run_suite_with(
        reference_code,
        suite,
        ComparePolicy::Exact,
        sandbox.config().workers,
        &CancelToken::new(),
    )?;
    Ok(result.per_case.iter().filter(|c| !c.passed).map(|c| c.index).collect())
}

/// Summary of a pass-ratio distribution. Quantiles use linear interpolation
/// between order statistics; `std` is the sample standard deviation (n−1),
/// reported as 0 for a single sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRatioStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub sample_count: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl PassRatioStats {
    pub fn from_ratios(ratios: &[f64]) -> Option<Self> {
        if ratios.is_empty() {
            return None;
        }
        let mut sorted = ratios.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let std = if sorted.len() > 1 {
            (sorted.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(PassRatioStats {
            mean,
            std,
            min: sorted[0],
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            sample_count: sorted.len(),
        })
    }

    /// A suite is valid when no known-wrong solution passes every case.
    pub fn is_valid(&self) -> bool {
        self.max < 1.0
    }

    pub fn table_header() -> &'static str {
        "mean\tstd\tmin\t25%\t50%\t75%\tmax"
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
            self.mean, self.std, self.min, self.q25, self.median, self.q75, self.max
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub suite_id: String,
    pub stats: PassRatioStats,
    pub valid: bool,
    /// Pass ratio per wrong solution, in input order.
    pub ratios: Vec<f64>,
}

pub fn audit_suite(suite: &TestSuite, wrong_codes: &[String], sandbox: &Sandbox) -> Result<AuditReport, TestgenError> {
    if suite.is_empty() || wrong_codes.is_empty() {
        return Err(TestgenError::EmptyAudit);
    }
    let ratios = wrong_codes
        .iter()
        .map(|code| sandbox.run_suite(code, suite).map(|r| r.score))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = PassRatioStats::from_ratios(&ratios).expect("nonempty ratios");
    Ok(AuditReport {
        suite_id: suite.suite_id.clone(),
        valid: stats.is_valid(),
        stats,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{CannedClient, FnClient};
    use crate::sandbox::SandboxConfig;

    #[test]
    fn delimited_inputs() {
        assert_eq!(parse_delimited_inputs("<start>1 2<end><start>3<end>").unwrap(), vec!["1 2", "3"]);
        assert!(parse_delimited_inputs("no markers").unwrap().is_empty());
        assert_eq!(
            parse_delimited_inputs("<start>1"),
            Err(DelimiterError::Unterminated { offset: 0 })
        );
        assert_eq!(
            parse_delimited_inputs("ok <start>1<start>2<end>"),
            Err(DelimiterError::Nested { offset: 11 })
        );
        assert_eq!(
            parse_delimited_inputs("Sample 1: <start>\n5\n<end> and then\n<start>7<end> <end>").unwrap(),
            vec!["\n5\n", "7"]
        );
    }

    #[test]
    fn input_preparation() {
        assert_eq!(prepare_input("\n5 6\n"), "5 6\n");
        assert_eq!(prepare_input("3\n4"), "3\n4\n");
        assert_eq!(prepare_input(""), "\n");
    }

    fn sandbox() -> Sandbox {
        Sandbox::new(SandboxConfig {
            limits: crate::sandbox::ResourceLimits {
                wall_time: std::time::Duration::from_secs(1),
                cpu_time: std::time::Duration::from_secs(1),
                ..Default::default()
            },
            ..SandboxConfig::default()
        })
        .unwrap()
    }

    const RECIPROCAL: &str = "x = int(input())\nprint(100 // x)\n";

    #[test]
    fn labeling_drops_failing_inputs() {
        let inputs: Vec<String> = ["4\n", "0\n", "5\n"].map(String::from).to_vec();
        let out = label_outputs("r", RECIPROCAL, &inputs, &sandbox()).unwrap();
        assert_eq!(out.suite.cases.len(), 2);
        assert_eq!(out.suite.cases[0].expected_output, "25\n");
        assert_eq!(
            out.rejected,
            vec![Rejection {
                input: "0\n".into(),
                status: ExecStatus::RuntimeError
            }]
        );
    }

    #[test]
    fn labeling_drops_timeouts() {
        let code = "x = int(input())\nwhile x < 0:\n    pass\nprint(x)\n";
        let inputs: Vec<String> = ["1\n", "-1\n", "2\n"].map(String::from).to_vec();
        let out = label_outputs("loop", code, &inputs, &sandbox()).unwrap();
        assert_eq!(out.suite.cases.len(), 2);
        assert_eq!(out.rejected[0].status, ExecStatus::Timeout);
    }

    fn problem() -> Problem {
        Problem {
            problem_id: "recip".into(),
            description: "Print 100 // x.".into(),
            input_format: "One integer x.".into(),
            output_format: "100 // x".into(),
            difficulty: 1,
            test_cases: vec![],
        }
    }

    #[test]
    fn synthesis_counts_valid_and_dedups() {
        // 40 inputs: -20..20, x = 0 errors, and "7" appears twice.
        let mut body: String = (-20..20).map(|x| format!("<start>{x}<end>\n")).collect();
        body.push_str("<start>7<end>");
        let annotator = CannedClient::new("canned", body);
        let cfg = SynthesisConfig {
            target_count: 100,
            request_budget: 1,
            min_suite_size: 1,
        };
        let out = synthesize_suite(&problem(), RECIPROCAL, &annotator, &GenerationParams::default(), &cfg, &sandbox()).unwrap();
        assert_eq!(out.suite.cases.len(), 39);
        assert_eq!(out.provenance.duplicates_dropped, 1);
        assert_eq!(out.provenance.rejected.len(), 1);

        let capped = SynthesisConfig {
            target_count: 35,
            ..cfg
        };
        let out = synthesize_suite(&problem(), RECIPROCAL, &annotator, &GenerationParams::default(), &capped, &sandbox()).unwrap();
        assert_eq!(out.suite.cases.len(), 35);
    }

    #[test]
    fn synthesis_without_inputs_exhausts_budget() {
        let annotator = FnClient::new("none", |_, _| Ok("I cannot think of any inputs.".into()));
        let err = synthesize_suite(
            &problem(),
            RECIPROCAL,
            &annotator,
            &GenerationParams::default(),
            &SynthesisConfig::default(),
            &sandbox(),
        )
        .unwrap_err();
        assert!(matches!(err, TestgenError::BudgetExhausted { got: 0, .. }));
    }

    fn identity_suite() -> TestSuite {
        TestSuite {
            suite_id: "id".into(),
            cases: (0..10)
                .map(|x| TestCase {
                    input: format!("{x}\n"),
                    expected_output: format!("{x}\n"),
                })
                .collect(),
        }
    }

    #[test]
    fn audit_known_ratios() {
        let wrongs = vec![
            "input()\nprint(-1)\n".to_string(),
            "x = int(input())\nprint(x if x < 2 else -1)\n".to_string(),
            "x = int(input())\nprint(x if x != 9 else 0)\n".to_string(),
        ];
        let report = audit_suite(&identity_suite(), &wrongs, &sandbox()).unwrap();
        assert_eq!(report.ratios, vec![0.0, 0.2, 0.9]);
        assert_eq!(report.stats.max, 0.9);
        assert!(report.valid);

        let disguised = vec!["print(input())\n".to_string()];
        let report = audit_suite(&identity_suite(), &disguised, &sandbox()).unwrap();
        assert_eq!(report.stats.max, 1.0);
        assert!(!report.valid);

        let zero = vec!["print('nope')\n".to_string()];
        let s = audit_suite(&identity_suite(), &zero, &sandbox()).unwrap().stats;
        assert_eq!((s.mean, s.min, s.max), (0.0, 0.0, 0.0));
    }

    #[test]
    fn stats_match_hand_computation() {
        let s = PassRatioStats::from_ratios(&[0.9, 0.0, 0.2]).unwrap();
        // mean 1.1/3; deviations -0.3667, -0.1667, 0.5333
        let mean = 1.1 / 3.0;
        let var = [(0.0 - mean), (0.2 - mean), (0.9 - mean)]
            .iter()
            .map(|d: &f64| d * d)
            .sum::<f64>()
            / 2.0;
        assert!((s.mean - mean).abs() < 1e-12);
        assert!((s.std - var.sqrt()).abs() < 1e-12);
        // positions 0.5 and 1.5 between sorted [0.0, 0.2, 0.9]
        assert!((s.q25 - 0.1).abs() < 1e-12);
        assert_eq!(s.median, 0.2);
        assert!((s.q75 - 0.55).abs() < 1e-12);
        assert!(s.min <= s.q25 && s.q25 <= s.median && s.median <= s.q75 && s.q75 <= s.max);
    }
}
