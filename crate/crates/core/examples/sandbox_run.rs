//! Runs guest programs under resource limits and scores a small suite.

use std::time::Duration;

use feedback_gym::sandbox::{ResourceLimits, Sandbox, SandboxConfig, TestCase, TestSuite};

fn main() -> anyhow::Result<()> {
    let sandbox = Sandbox::new(SandboxConfig {
        limits: ResourceLimits {
            wall_time: Duration::from_secs(1),
            cpu_time: Duration::from_secs(1),
            ..ResourceLimits::default()
        },
        ..SandboxConfig::default()
    })?;
    sandbox.canary()?;

    let echo = sandbox.run_program("print(input()[::-1])", "stressed\n");
    println!("reverse: {:?} {:?}", echo.status, echo.stdout);

    let spin = sandbox.run_program("while True: pass", "");
    println!("spin: {:?} after {:.2}s", spin.status, spin.duration_secs);

    let crash = sandbox.run_program("raise SystemExit(3)", "");
    println!("crash: {:?} exit={:?}", crash.status, crash.exit_code);

    let suite = TestSuite {
        suite_id: "double".into(),
        cases: (0..6)
            .map(|i| TestCase {
                input: format!("{i}\n"),
                expected_output: format!("{}\n", 2 * i),
            })
            .collect(),
    };
    // Wrong for inputs above 3.
    let eval = sandbox.run_suite("x = int(input())\nprint(2 * x if x <= 3 else x)", &suite)?;
    println!("suite: score={:.3} bitmap={}", eval.score, eval.bitmap());
    println!("stats: {:?}", sandbox.stats());
    Ok(())
}
