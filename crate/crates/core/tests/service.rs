//! Service behavior under a tight in-flight cap, with audit and job logs on.

use std::time::Duration;

use feedback_gym::config::EnvConfig;
use feedback_gym::data::CorpusDir;
use feedback_gym::reward::RewardRequest;
use feedback_gym::service::{build_state, ServiceHandle};

#[test]
fn queues_past_the_cap_and_logs_every_score() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = EnvConfig::default();
    config.service.max_in_flight = 2;
    config.paths.audit_log = Some(dir.path().join("audit.jsonl"));
    config.paths.job_log = Some(dir.path().join("jobs.jsonl"));
    let service = ServiceHandle::start(build_state(&config).unwrap(), true).unwrap();

    let records = CorpusDir::fixtures().feedback().unwrap();
    let requests: Vec<RewardRequest> = records[..12]
        .iter()
        .map(|r| RewardRequest {
            problem_id: r.problem_id.clone(),
            wrong_code: r.wrong_code.clone(),
            feedback: r.text.clone(),
            editor: "mock-faithful".into(),
            suite_ref: None,
        })
        .collect();

    let url = service.url("/v1/score");
    let statuses: Vec<u16> = std::thread::scope(|s| {
        let handles: Vec<_> = requests
            .iter()
            .map(|req| {
                let url = url.clone();
                s.spawn(move || {
                    reqwest::blocking::Client::new()
                        .post(url)
                        .json(req)
                        .timeout(Duration::from_secs(60))
                        .send()
                        .unwrap()
                        .status()
                        .as_u16()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(statuses.iter().all(|s| *s == 200), "{statuses:?}");

    let batch = serde_json::json!({ "requests": &requests[..3] });
    let http = reqwest::blocking::Client::new();
    let handle: serde_json::Value = http.post(service.url("/v1/batch")).json(&batch).send().unwrap().json().unwrap();
    assert_eq!(handle["status"], "queued");
    service.stop().unwrap();

    let audit = std::fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 15, "shutdown drains the batch before exiting");
    let first: serde_json::Value = serde_json::from_str(audit.lines().next().unwrap()).unwrap();
    assert_eq!(first["request_digest"].as_str().unwrap().len(), 64);

    let jobs = std::fs::read_to_string(dir.path().join("jobs.jsonl")).unwrap();
    assert!(jobs.lines().last().unwrap().contains("\"done\""));
}
