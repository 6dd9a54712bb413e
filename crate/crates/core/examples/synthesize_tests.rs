//! Synthesizes a hidden test suite from annotator-proposed inputs, checks
//! that the reference reproduces it, then audits it against known-wrong
//! solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feedback_gym::clients::mock::FnClient;
use feedback_gym::clients::GenerationParams;
use feedback_gym::data::CorpusDir;
use feedback_gym::sandbox::{Sandbox, SandboxConfig};
use feedback_gym::testgen::{audit_suite, synthesize_suite, verify_reproduction, SynthesisConfig, END_TAG, START_TAG};

fn main() -> anyhow::Result<()> {
    let corpus = CorpusDir::fixtures();
    let problem = corpus
        .problems()?
        .into_iter()
        .find(|p| p.problem_id == "list-max")
        .expect("fixture problem");
    let reference = "n = int(input())\nprint(max(map(int, input().split())))\n";

    // Stands in for an LLM: emits a handful of delimited inputs, one of them
    // malformed (the reference crashes on it and it gets rejected).
    let annotator = FnClient::new("random-lists", |_prompt, params| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
        let mut out = String::new();
        for _ in 0..8 {
            let n = rng.random_range(1..=6);
            let xs: Vec<String> = (0..n).map(|_| rng.random_range(-50..=50).to_string()).collect();
            out.push_str(&format!("{START_TAG}\n{n}\n{}\n{END_TAG}\n", xs.join(" ")));
        }
        out.push_str(&format!("{START_TAG}not a number{END_TAG}"));
        Ok(out)
    });

    let sandbox = Sandbox::new(SandboxConfig::default())?;
    let params = GenerationParams::default().with_seed(Some(11));
    let config = SynthesisConfig {
        target_count: 20,
        ..SynthesisConfig::default()
    };
    let synthesized = synthesize_suite(&problem, reference, &annotator, &params, &config, &sandbox)?;
    let p = &synthesized.provenance;
    println!(
        "{} cases after {} request(s); {} duplicates, {} rejected",
        synthesized.suite.len(),
        p.requests,
        p.duplicates_dropped,
        p.rejected.len()
    );

    let drift = verify_reproduction(&synthesized.suite, reference, &sandbox)?;
    println!("reference reproduces every case: {}", drift.is_empty());

    let wrong: Vec<String> = corpus
        .wrong_solutions()?
        .into_iter()
        .filter(|w| w.problem_id == problem.problem_id)
        .map(|w| w.code)
        .collect();
    let report = audit_suite(&synthesized.suite, &wrong, &sandbox)?;
    println!("audit ratios {:?} valid={}", report.ratios, report.valid);
    Ok(())
}
