//! Treats each editor as a reward model over the labeled feedback corpus and
//! reports how well its scores agree with the labels, plus Pass@1.

use std::sync::Arc;

use feedback_gym::config::EnvConfig;
use feedback_gym::pipeline::{contexts_from_records, evaluate_labeled, evaluate_pass_at_1};
use feedback_gym::reward::{ProblemSet, RewardEnv};
use feedback_gym::sandbox::Sandbox;

fn main() -> anyhow::Result<()> {
    let config = EnvConfig::default();
    let corpus = config.corpus_dir();
    let problems = corpus.problems()?;
    let records = corpus.feedback()?;
    let editors = config.build_registry(&problems)?;
    let env = RewardEnv::new(
        ProblemSet::new(problems),
        editors,
        Arc::new(Sandbox::new(config.sandbox.clone())?),
    );

    println!("{:<14} {:>5} {:>5} {:>6} {:>8} {:>6} {:>7}", "editor", "prec", "rec", "f1", "fpr", "mse", "pearson");
    for editor in ["mock-faithful", "mock-skewed"] {
        let eval = evaluate_labeled(&env, &records, editor, 4)?;
        let c = &eval.metrics.classification;
        let r = &eval.metrics.correlation;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        println!(
            "{editor:<14} {:>5} {:>5} {:>6} {:>8} {:>6.3} {:>7}",
            opt(c.precision),
            opt(c.recall),
            opt(c.f1),
            opt(c.false_positive_rate),
            r.mse,
            opt(r.pearson)
        );
    }

    // Pass@1 with the annotated feedback as the samples, one per context.
    let contexts = contexts_from_records(&records, 1);
    for editor in ["mock-faithful", "mock-skewed"] {
        let report = evaluate_pass_at_1(&env, &contexts, editor, 4)?;
        println!("{editor}: pass@1 = {:.1} over {} contexts", report.pass_at_1, report.contexts.len());
    }
    Ok(())
}
