//! Builds every training set from the fixture corpus: correct-over-wrong
//! pairs, reward-ranked pairs and rejection-sampling labels from sampled
//! feedback, and the keyword-tagged editor corpus.

use std::collections::HashMap;
use std::sync::Arc;

use feedback_gym::clients::mock::SamplingClient;
use feedback_gym::config::EnvConfig;
use feedback_gym::corpus::NormalizationPolicy;
use feedback_gym::pairing::{build_dpo_cw_all, default_sampling_params, emit_editor_corpus, Phase};
use feedback_gym::pipeline::{editor_entries, ingest, ranked_datasets};
use feedback_gym::reward::{ProblemSet, RewardEnv};
use feedback_gym::sandbox::Sandbox;

fn main() -> anyhow::Result<()> {
    let config = EnvConfig::default();
    let corpus = config.corpus_dir();
    let problems = corpus.problems()?;
    let by_id: HashMap<_, _> = problems.iter().map(|p| (p.problem_id.clone(), p.clone())).collect();
    let records = corpus.feedback()?;

    let cw = build_dpo_cw_all(&records, &by_id, 1)?;
    println!("correct-over-wrong: {} pairs, {} skipped", cw.pairs.len(), cw.skipped.len());

    let env = RewardEnv::new(
        ProblemSet::new(problems.clone()),
        config.build_registry(&problems)?,
        Arc::new(Sandbox::new(config.sandbox.clone())?),
    );
    let sampler = SamplingClient::new(
        "sampler",
        vec![
            "Recheck the arithmetic in the output line. [polarity:correct]".into(),
            "The loop bounds are off. [polarity:correct]".into(),
            "Nothing to fix here. [polarity:wrong]".into(),
            "Use a faster input reader. [polarity:wrong]".into(),
        ],
    );
    let mut targets: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.problem_id.clone(), r.wrong_code.clone()))
        .collect();
    targets.dedup();
    let params = default_sampling_params(6).with_seed(Some(3));
    let data = ranked_datasets(&env, &targets, &sampler, &params, "mock-faithful", 0.0, 4)?;
    let tied = data.ranked.iter().filter(|l| l.all_tied).count();
    println!(
        "reward-ranked: {} pairs from {} contexts ({} all tied); {} rejection-sampling labels",
        data.pairs.len(),
        data.ranked.len(),
        tied,
        data.rejection_sampling.len()
    );
    if let Some(p) = data.pairs.first() {
        println!("  e.g. {} | chosen: {:?} | margin {:?}", p.context.problem_id, p.chosen, p.margin);
    }

    let (_, report) = ingest(corpus.traces()?, &NormalizationPolicy::default());
    let (correct, wrong, unmatched) = editor_entries(&records, &report.triplets, &report.wrong_pairs, &by_id);
    for phase in [Phase::One, Phase::Two] {
        let out = emit_editor_corpus(&correct, &wrong, phase);
        let tagged = out.iter().filter(|r| r.keyword.is_some_and(|k| r.target.starts_with(k.as_str()))).count();
        println!("editor corpus {phase:?}: {} records, {tagged} keyword-prefixed ({unmatched} unmatched)", out.len());
    }
    Ok(())
}
