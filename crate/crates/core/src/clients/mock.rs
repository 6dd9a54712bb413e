//! Deterministic stand-ins for model endpoints.
//!
//! The two editor mocks model the extremes of editor behavior: the faithful
//! editor produces the ground-truth fix only when the feedback is marked
//! correct, the skewed editor fixes the code no matter what the feedback
//! says. Feedback polarity is read from an inline marker such as
//! `[polarity:correct]`.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::templates::parse_editor_prompt;
use super::{ClientError, GenerationParams, TextGenerator};
use crate::corpus::Problem;
use crate::pairing::Polarity;

pub const CORRECT_MARKER: &str = "[polarity:correct]";
pub const WRONG_MARKER: &str = "[polarity:wrong]";

pub fn marker_polarity(feedback: &str) -> Option<Polarity> {
    if feedback.contains(CORRECT_MARKER) {
        Some(Polarity::Correct)
    } else if feedback.contains(WRONG_MARKER) {
        Some(Polarity::Wrong)
    } else {
        None
    }
}

pub fn with_marker(text: &str, polarity: Polarity) -> String {
    let marker = match polarity {
        Polarity::Correct => CORRECT_MARKER,
        Polarity::Wrong => WRONG_MARKER,
    };
    format!("{text} {marker}")
}

/// Ground truth for one wrong submission: its correct fix and a known-wrong
/// edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorFixture {
    pub problem_id: String,
    pub wrong_code: String,
    pub correct_code: String,
    pub wrong_edit: String,
}

fn key_code(code: &str) -> String {
    code.trim_end().to_string()
}

#[derive(Debug, Clone, Default)]
pub struct EditorFixtures {
    by_problem: HashMap<(String, String), EditorFixture>,
    problem_by_description: HashMap<String, String>,
}

impl EditorFixtures {
    pub fn new(records: Vec<EditorFixture>, problems: &[Problem]) -> Result<Self, ClientError> {
        let mut fx = EditorFixtures::default();
        for p in problems {
            fx.problem_by_description
                .insert(p.description.clone(), p.problem_id.clone());
        }
        for r in records {
            if !problems.iter().any(|p| p.problem_id == r.problem_id) {
                return Err(ClientError::UnknownFixture(format!("problem {}", r.problem_id)));
            }
            fx.by_problem
                .insert((r.problem_id.clone(), key_code(&r.wrong_code)), r);
        }
        Ok(fx)
    }

    pub fn len(&self) -> usize {
        self.by_problem.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_problem.is_empty()
    }

    pub fn get(&self, problem_id: &str, wrong_code: &str) -> Result<&EditorFixture, ClientError> {
        self.by_problem
            .get(&(problem_id.to_string(), key_code(wrong_code)))
            .ok_or_else(|| ClientError::UnknownFixture(format!("{problem_id}: no fixture for this wrong code")))
    }

    fn get_by_description(&self, description: &str, wrong_code: &str) -> Result<&EditorFixture, ClientError> {
        let pid = self
            .problem_by_description
            .get(description)
            .ok_or_else(|| ClientError::UnknownFixture("problem description not in fixtures".into()))?;
        self.get(pid, wrong_code)
    }
}

pub fn mock_faithful_editor(
    fixtures: &EditorFixtures,
    problem: &Problem,
    wrong_code: &str,
    feedback: &str,
) -> Result<String, ClientError> {
    let fx = fixtures.get(&problem.problem_id, wrong_code)?;
    Ok(match marker_polarity(feedback) {
        Some(Polarity::Correct) => fx.correct_code.clone(),
        _ => fx.wrong_edit.clone(),
    })
}

pub fn mock_skewed_editor(
    fixtures: &EditorFixtures,
    problem: &Problem,
    wrong_code: &str,
    _feedback: &str,
) -> Result<String, ClientError> {
    Ok(fixtures.get(&problem.problem_id, wrong_code)?.correct_code.clone())
}

fn fenced(code: &str) -> String {
    format!("```python\n{}\n```", code.trim_end())
}

fn repeat(text: String, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
    params.validate()?;
    Ok(vec![text; params.n_samples as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EditorMode {
    Faithful,
    Skewed,
}

/// Editor mock reachable through the ordinary prompt interface: it parses the
/// rendered editor prompt and answers with a fenced code block.
#[derive(Debug, Clone)]
pub struct MockEditor {
    name: String,
    mode: EditorMode,
    fixtures: Arc<EditorFixtures>,
}

impl MockEditor {
    pub fn faithful(fixtures: Arc<EditorFixtures>) -> Self {
        MockEditor {
            name: "mock-faithful".into(),
            mode: EditorMode::Faithful,
            fixtures,
        }
    }

    pub fn skewed(fixtures: Arc<EditorFixtures>) -> Self {
        MockEditor {
            name: "mock-skewed".into(),
            mode: EditorMode::Skewed,
            fixtures,
        }
    }
}

impl TextGenerator for MockEditor {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        let parts = parse_editor_prompt(prompt)
            .ok_or_else(|| ClientError::MalformedResponse("prompt is not an editor prompt".into()))?;
        let fx = self.fixtures.get_by_description(&parts.description, &parts.wrong_code)?;
        let code = match (self.mode, marker_polarity(&parts.feedback)) {
            (EditorMode::Skewed, _) | (EditorMode::Faithful, Some(Polarity::Correct)) => &fx.correct_code,
            (EditorMode::Faithful, _) => &fx.wrong_edit,
        };
        repeat(fenced(code), params)
    }
}

/// Returns the same canned text for every sample.
#[derive(Debug, Clone)]
pub struct CannedClient {
    name: String,
    text: String,
}

impl CannedClient {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        CannedClient {
            name: name.into(),
            text: text.into(),
        }
    }
}

impl TextGenerator for CannedClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, _prompt: &str, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        repeat(self.text.clone(), params)
    }
}

/// Draws samples from a fixed candidate list. The draw is seeded by the
/// request seed and a hash of the prompt, so it is a pure function of
/// `(prompt, params)`.
#[derive(Debug, Clone)]
pub struct SamplingClient {
    name: String,
    candidates: Vec<String>,
}

impl SamplingClient {
    pub fn new(name: impl Into<String>, candidates: Vec<String>) -> Self {
        assert!(!candidates.is_empty(), "sampling mock needs candidates");
        SamplingClient {
            name: name.into(),
            candidates,
        }
    }
}

fn stable_hash(s: &str) -> u64 {
    // FNV-1a; std's SipHash keys are not stable across releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl TextGenerator for SamplingClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        params.validate()?;
        let seed = params.seed.unwrap_or(0) ^ stable_hash(prompt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..params.n_samples)
            .map(|_| self.candidates[rng.random_range(0..self.candidates.len())].clone())
            .collect())
    }
}

type Responder = dyn Fn(&str, &GenerationParams) -> Result<String, ClientError> + Send + Sync;

/// Mock driven by a closure producing one completion per sample.
pub struct FnClient {
    name: String,
    respond: Box<Responder>,
}

impl FnClient {
    pub fn new(
        name: impl Into<String>,
        respond: impl Fn(&str, &GenerationParams) -> Result<String, ClientError> + Send + Sync + 'static,
    ) -> Self {
        FnClient {
            name: name.into(),
            respond: Box::new(respond),
        }
    }
}

impl TextGenerator for FnClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        params.validate()?;
        (0..params.n_samples).map(|_| (self.respond)(prompt, params)).collect()
    }
}

impl std::fmt::Debug for FnClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnClient").field("name", &self.name).finish()
    }
}

/// Always fails with the given error.
#[derive(Debug, Clone)]
pub struct FailingClient {
    name: String,
    error: ClientError,
}

impl FailingClient {
    pub fn new(name: impl Into<String>, error: ClientError) -> Self {
        FailingClient {
            name: name.into(),
            error,
        }
    }
}

impl TextGenerator for FailingClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        Err(self.error.clone())
    }
}

/// Hashes a value with the FNV hasher above; handy for deterministic seeds.
pub fn seed_for<T: Hash>(value: &T) -> u64 {
    struct Fnv(u64);
    impl Hasher for Fnv {
        fn finish(&self) -> u64 {
            self.0
        }
        fn write(&mut self, bytes: &[u8]) {
            for b in bytes {
                self.0 ^= u64::from(*b);
                self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    value.hash(&mut h);
    h.finish()
}
