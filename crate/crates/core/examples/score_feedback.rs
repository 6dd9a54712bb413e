//! Scores feedback for one wrong program with a faithful and a skewed
//! editor. The faithful editor only fixes the code when the feedback is
//! right, so its reward separates good from bad feedback.

use std::sync::Arc;

use feedback_gym::config::EnvConfig;
use feedback_gym::reward::{ProblemSet, RewardEnv, RewardRequest};
use feedback_gym::sandbox::Sandbox;

fn main() -> anyhow::Result<()> {
    let config = EnvConfig::default();
    let problems = config.corpus_dir().problems()?;
    let editors = config.build_registry(&problems)?;
    let sandbox = Arc::new(Sandbox::new(config.sandbox.clone())?);
    let env = RewardEnv::new(ProblemSet::new(problems), editors, sandbox);

    let wrong_code = "a, b = map(int, input().split())\nprint(a - b)\n";
    let feedback = [
        "The program subtracts; it should add the two numbers. [polarity:correct]",
        "The input must be read as floats. [polarity:wrong]",
    ];
    for editor in ["mock-faithful", "mock-skewed"] {
        for fb in feedback {
            let response = env.score(&RewardRequest {
                problem_id: "sum-two".into(),
                wrong_code: wrong_code.into(),
                feedback: fb.into(),
                editor: editor.into(),
                suite_ref: None,
            })?;
            println!(
                "{editor:<14} score={:.3} pass_all={:<5} cases={}  <- {fb}",
                response.score,
                response.pass_all,
                response.eval.bitmap()
            );
        }
    }
    Ok(())
}
