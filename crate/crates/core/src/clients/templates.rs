//! Prompt templates with `{name}` placeholders.
//!
//! The shipped bodies live in `assets/prompts/`. Rendering is a single pass
//! over the template body, so braces inside bound values (source code, for
//! instance) are never reinterpreted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Problem;

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("{0} unbound")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    CorrectFeedback,
    WrongFeedback,
    TestcaseGen,
    Editor,
    GEval,
}

const CORRECT_FEEDBACK: &str = include_str!("../../assets/prompts/correct_feedback.txt");
const CORRECT_FEEDBACK_DEMO: &str = include_str!("../../assets/prompts/correct_feedback_demo.txt");
const WRONG_FEEDBACK: &str = include_str!("../../assets/prompts/wrong_feedback.txt");
const WRONG_FEEDBACK_DEMO: &str = include_str!("../../assets/prompts/wrong_feedback_demo.txt");
const TESTCASE_GEN: &str = include_str!("../../assets/prompts/testcase_gen.txt");
const EDITOR: &str = include_str!("../../assets/prompts/editor.txt");
const G_EVAL: &str = include_str!("../../assets/prompts/g_eval.txt");

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

#[derive(Debug, PartialEq, Eq)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                if open > 0 {
                    out.push(Piece::Text(&rest[..open]));
                }
                out.push(Piece::Slot(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Self {
        PromptTemplate { id, body: body.into() }
    }

    pub fn builtin(id: TemplateId) -> Self {
        let body = match id {
            TemplateId::CorrectFeedback => CORRECT_FEEDBACK,
            TemplateId::WrongFeedback => WRONG_FEEDBACK,
            TemplateId::TestcaseGen => TESTCASE_GEN,
            TemplateId::Editor => EDITOR,
            TemplateId::GEval => G_EVAL,
        };
        PromptTemplate::new(id, strip_final_newline(body))
    }

    /// Per-example block used for few-shot demonstrations, for the two
    /// annotation templates.
    pub fn demonstration_block(id: TemplateId) -> Option<PromptTemplate> {
        match id {
            TemplateId::CorrectFeedback => Some(PromptTemplate::new(id, CORRECT_FEEDBACK_DEMO)),
            TemplateId::WrongFeedback => Some(PromptTemplate::new(id, WRONG_FEEDBACK_DEMO)),
            _ => None,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for p in pieces(&self.body) {
            if let Piece::Slot(name) = p {
                if !seen.contains(&name) {
                    seen.push(name);
                }
            }
        }
        seen
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for p in pieces(&self.body) {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(
                    bindings
                        .get(name)
                        .ok_or_else(|| TemplateError::Unbound(name.to_string()))?,
                ),
            }
        }
        Ok(out)
    }

    /// Renders an annotation template with `demos` as numbered few-shot
    /// examples followed by the target example.
    pub fn render_with_demonstrations(
        &self,
        demos: &[Bindings],
        target: &Bindings,
    ) -> Result<String, TemplateError> {
        let mut demo_text = String::new();
        if let Some(block) = PromptTemplate::demonstration_block(self.id) {
            for (i, demo) in demos.iter().enumerate() {
                let mut b = demo.clone();
                b.insert("example_number".into(), (i + 1).to_string());
                demo_text.push_str(&block.render(&b)?);
            }
        }
        let mut b = target.clone();
        b.insert("demonstrations".into(), demo_text);
        b.insert("example_number".into(), (demos.len() + 1).to_string());
        self.render(&b)
    }
}

pub fn bind<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn code(s: &str) -> &str {
    s.trim_end_matches(['\n', '\r'])
}

/// Bindings shared by the editor and judge prompts.
pub fn editor_bindings(problem: &Problem, wrong_code: &str, feedback: &str) -> Bindings {
    bind([
        ("description", problem.description.as_str()),
        ("output_format", problem.output_format.as_str()),
        ("input_format", problem.input_format.as_str()),
        ("wrong_code", code(wrong_code)),
        ("feedback", feedback),
    ])
}

pub fn render_editor_prompt(problem: &Problem, wrong_code: &str, feedback: &str) -> String {
    PromptTemplate::builtin(TemplateId::Editor)
        .render(&editor_bindings(problem, wrong_code, feedback))
        .expect("editor bindings are complete")
}

pub fn render_geval_prompt(problem: &Problem, wrong_code: &str, feedback: &str) -> String {
    PromptTemplate::builtin(TemplateId::GEval)
        .render(&editor_bindings(problem, wrong_code, feedback))
        .expect("judge bindings are complete")
}

/// Prompt for a feedback model: the editor prompt cut right after
/// `Feedback:`, so the critic continues where the editor's input would hold
/// feedback.
pub fn render_feedback_prompt(problem: &Problem, code_under_review: &str) -> String {
    let full = render_editor_prompt(problem, code_under_review, FEEDBACK_CUT);
    let cut = full.find(FEEDBACK_CUT).expect("cut marker present");
    full[..cut].to_string()
}

const FEEDBACK_CUT: &str = "\u{0}FEEDBACK\u{0}";

pub fn render_testcase_prompt(problem: &Problem, correct_code: &str) -> String {
    PromptTemplate::builtin(TemplateId::TestcaseGen)
        .render(&bind([
            ("input_format", problem.input_format.as_str()),
            ("correct_code", code(correct_code)),
        ]))
        .expect("testcase bindings are complete")
}

/// Problem statement plus the before/after code, as shown to the correct
/// feedback annotator.
pub fn correct_feedback_instance(problem: &Problem, wrong_code: &str, correct_code: &str) -> String {
    format!(
        "Problem Description:\n{}\n\nIncorrect code:\n{}\n\nCorrect code:\n{}",
        problem.description,
        code(wrong_code),
        code(correct_code)
    )
}

pub fn render_correct_feedback_prompt(
    problem: &Problem,
    wrong_code: &str,
    correct_code: &str,
    demos: &[Bindings],
) -> String {
    let target = bind([
        ("example_instances", &correct_feedback_instance(problem, wrong_code, correct_code)),
        ("output_format", problem.output_format.as_str()),
    ]);
    PromptTemplate::builtin(TemplateId::CorrectFeedback)
        .render_with_demonstrations(demos, &target)
        .expect("correct feedback bindings are complete")
}

pub fn render_wrong_feedback_prompt(
    problem: &Problem,
    wrong_code: &str,
    next_wrong_code: &str,
    demos: &[Bindings],
) -> String {
    let target = bind([
        ("description", problem.description.as_str()),
        ("wrong_code", code(wrong_code)),
        ("next_wrong_code", code(next_wrong_code)),
    ]);
    PromptTemplate::builtin(TemplateId::WrongFeedback)
        .render_with_demonstrations(demos, &target)
        .expect("wrong feedback bindings are complete")
}

/// Fields recovered from a rendered editor (or judge) prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditorPromptParts {
    pub description: String,
    pub wrong_code: String,
    pub feedback: String,
}

/// Inverse of [`render_editor_prompt`] / [`render_geval_prompt`] for prompts
/// whose bound values do not themselves contain the section markers.
pub fn parse_editor_prompt(prompt: &str) -> Option<EditorPromptParts> {
    const DESC: &str = "Description:\n";
    const FORMATS: &str = "\n  - output format: ";
    const CODE: &str = "Incorrect code:\n```python\n";
    const FEEDBACK: &str = "\n```\nFeedback:";
    let d0 = prompt.find(DESC)? + DESC.len();
    let d1 = d0 + prompt[d0..].find(FORMATS)?;
    let c0 = d1 + prompt[d1..].find(CODE)? + CODE.len();
    let c1 = c0 + prompt[c0..].find(FEEDBACK)?;
    let f0 = c1 + FEEDBACK.len();
    let tail = ["\n\nCorrect code:", "\n\nScore:"]
        .iter()
        .filter_map(|t| prompt.rfind(t))
        .find(|&i| i >= f0)?;
    Some(EditorPromptParts {
        description: prompt[d0..d1].to_string(),
        wrong_code: prompt[c0..c1].to_string(),
        feedback: prompt[f0..tail].to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn problem() -> Problem {
        Problem {
            problem_id: "p".into(),
            description: "Add two numbers.".into(),
            input_format: "Two integers.".into(),
            output_format: "Their sum.".into(),
            difficulty: 1,
            test_cases: vec![],
        }
    }

    #[test]
    fn editor_prompt_layout() {
        let got = render_editor_prompt(&problem(), "a,b=map(int,input().split())\nprint(a-b)\n", " Use +.");
        let expected = "Provide feedback on the errors in the given code and suggest the correct code to address the described problem.\n\
Description:\nAdd two numbers.\n  - output format: Their sum.\n  - input format: Two integers.\n\
Incorrect code:\n```python\na,b=map(int,input().split())\nprint(a-b)\n```\nFeedback: Use +.\n\nCorrect code:";
        assert_eq!(got, expected);
    }

    #[test]
    fn missing_feedback_is_named() {
        let mut b = editor_bindings(&problem(), "x", "y");
        b.remove("feedback");
        let err = PromptTemplate::builtin(TemplateId::Editor).render(&b).unwrap_err();
        assert_eq!(err.to_string(), "feedback unbound");
    }

    #[test]
    fn rendering_is_byte_stable() {
        let b = editor_bindings(&problem(), "print({1: 2})", "fix it");
        let t = PromptTemplate::builtin(TemplateId::Editor);
        let h1 = Sha256::digest(t.render(&b).unwrap().as_bytes());
        let h2 = Sha256::digest(t.render(&b).unwrap().as_bytes());
        assert_eq!(h1, h2);
        assert!(t.render(&b).unwrap().contains("print({1: 2})"));
    }

    #[test]
    fn builtin_placeholders() {
        let ph = |id| PromptTemplate::builtin(id).placeholders().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(
            ph(TemplateId::Editor),
            vec!["description", "output_format", "input_format", "wrong_code", "feedback"]
        );
        assert_eq!(ph(TemplateId::GEval), ph(TemplateId::Editor));
        assert_eq!(ph(TemplateId::TestcaseGen), vec!["input_format", "correct_code"]);
        assert_eq!(
            ph(TemplateId::WrongFeedback),
            vec!["demonstrations", "example_number", "description", "wrong_code", "next_wrong_code"]
        );
        assert_eq!(
            ph(TemplateId::CorrectFeedback),
            vec!["demonstrations", "example_number", "example_instances", "output_format"]
        );
    }

    #[test]
    fn testcase_prompt_mentions_delimiters() {
        let p = render_testcase_prompt(&problem(), "print(1)\n");
        assert!(p.contains("<start> token"));
        assert!(p.ends_with("python code:\nprint(1)\n\nSample:"));
    }

    #[test]
    fn demonstrations_are_numbered() {
        let demo = bind([
            ("description", "d"),
            ("wrong_code", "w"),
            ("next_wrong_code", "n"),
            ("feedback", "f"),
        ]);
        let p = render_wrong_feedback_prompt(&problem(), "x", "y", &[demo.clone(), demo]);
        assert!(p.contains("[Example 1]\nProblem Description:\nd"));
        assert!(p.contains("Feedback for Refining the Code:\nf\n\n[Example 2]"));
        assert!(p.contains("[Example 3]\nProblem Description:\nAdd two numbers."));
        assert!(p.ends_with("Code after editing:\ny\n\nFeedback for Refining the Code:"));
    }

    #[test]
    fn feedback_prompt_stops_at_feedback_label() {
        let p = render_feedback_prompt(&problem(), "print(0)");
        assert!(p.ends_with("```\nFeedback:"));
    }

    #[test]
    fn editor_prompt_round_trips() {
        let p = render_editor_prompt(&problem(), "print(1)\n", "line one\n\nline two");
        let parts = parse_editor_prompt(&p).unwrap();
        assert_eq!(parts.description, "Add two numbers.");
        assert_eq!(parts.wrong_code, "print(1)");
        assert_eq!(parts.feedback, "line one\n\nline two");
        let g = parse_editor_prompt(&render_geval_prompt(&problem(), "x", "fb")).unwrap();
        assert_eq!(g.feedback, "fb");
    }
}
