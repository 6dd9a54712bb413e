//! Starts the HTTP service on an ephemeral port and calls it like a training
//! loop would: one synchronous score, one batch job, then the stats.

use std::time::Duration;

use serde_json::{json, Value};

use feedback_gym::config::EnvConfig;
use feedback_gym::service::{build_state, ServiceHandle};

fn main() -> anyhow::Result<()> {
    let state = build_state(&EnvConfig::default())?;
    let service = ServiceHandle::start(state, true)?;
    let http = reqwest::blocking::Client::new();
    println!("listening on {}", service.addr);
    // The sandbox canary runs in the background; /health is 503 until it passes.
    while !http.get(service.url("/health")).send()?.status().is_success() {
        std::thread::sleep(Duration::from_millis(20));
    }
    println!("healthy");

    let request = |feedback: &str| {
        json!({
            "problem_id": "fizzbuzz",
            "wrong_code": "n = int(input())\nfor i in range(1, n + 1):\n    if i % 3 == 0:\n        print('Fizz')\n    elif i % 5 == 0:\n        print('Buzz')\n    elif i % 15 == 0:\n        print('FizzBuzz')\n    else:\n        print(i)\n",
            "feedback": feedback,
            "editor": "mock-faithful",
        })
    };
    let one: Value = http
        .post(service.url("/v1/score"))
        .json(&request("Check the multiple-of-15 case first. [polarity:correct]"))
        .send()?
        .json()?;
    println!("score: {} pass_all: {}", one["score"], one["pass_all"]);

    let batch = json!({ "requests": [request("Off by one. [polarity:wrong]"), request("Test 15 before 3 and 5. [polarity:correct]")] });
    let handle: Value = http.post(service.url("/v1/batch")).json(&batch).send()?.json()?;
    let job_id = handle["job_id"].as_str().unwrap_or_default().to_string();
    let job = loop {
        let job: Value = http.get(service.url(&format!("/v1/jobs/{job_id}"))).send()?.json()?;
        if job["status"] == "done" || job["status"] == "failed" {
            break job;
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    for item in job["result"].as_array().into_iter().flatten() {
        println!("batch[{}]: score {}", item["index"], item["response"]["score"]);
    }

    let stats: Value = http.get(service.url("/v1/stats")).send()?.json()?;
    println!("stats: {stats}");
    service.stop()?;
    Ok(())
}
