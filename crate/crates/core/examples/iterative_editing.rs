//! Critique-edit-evaluate loop: the feedback model gives useless advice the
//! first time and the right diagnosis afterwards, so the editor solves the
//! problem in round two.

use std::sync::atomic::{AtomicUsize, Ordering};

use feedback_gym::clients::mock::{marker_polarity, FnClient};
use feedback_gym::config::EnvConfig;
use feedback_gym::pairing::Polarity;
use feedback_gym::reward::{default_editor_params, iterate_edit};
use feedback_gym::sandbox::Sandbox;

fn main() -> anyhow::Result<()> {
    let config = EnvConfig::default();
    let problems = config.corpus_dir().problems()?;
    let problem = problems.iter().find(|p| p.problem_id == "sum-two").expect("fixture problem");

    let calls = AtomicUsize::new(0);
    let critic = FnClient::new("critic", move |_prompt, _params| {
        Ok(match calls.fetch_add(1, Ordering::SeqCst) {
            0 => "Add comments. [polarity:wrong]".to_string(),
            _ => "It subtracts instead of adding. [polarity:correct]".to_string(),
        })
    });
    // Follows the feedback: fixes the code only when the advice is right.
    let editor = FnClient::new("editor", |prompt, _params| {
        let code = match marker_polarity(prompt) {
            Some(Polarity::Correct) => "a, b = map(int, input().split())\nprint(a + b)",
            _ => "# read two numbers\na, b = map(int, input().split())\nprint(a - b)",
        };
        Ok(format!("[Correct]\n```python\n{code}\n```"))
    });

    let sandbox = Sandbox::new(config.sandbox.clone())?;
    let wrong = "a, b = map(int, input().split())\nprint(a - b)\n";
    let trajectory = iterate_edit(
        problem,
        &problem.suite(),
        wrong,
        &critic,
        &editor,
        &default_editor_params(),
        3,
        &sandbox,
    )?;
    for (i, round) in trajectory.rounds.iter().enumerate() {
        println!("round {}: {} -> {}", i + 1, round.feedback, round.eval.bitmap());
    }
    println!("solved: {}", trajectory.solved());
    Ok(())
}
