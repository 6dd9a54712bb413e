//! Line-delimited record files and the on-disk corpus layout.
//!
//! A corpus directory holds `problems.jsonl`, `traces.jsonl` and, for offline
//! runs, `editor_fixtures.jsonl`, `feedback.jsonl` and `wrong_solutions.jsonl`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::mock::EditorFixture;
use crate::corpus::{parse_corpus, parse_problems, CorpusError, ParsedCorpus, Problem};
use crate::pairing::FeedbackRecord;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads one JSON document per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes one JSON document per line, in order.
pub fn write_jsonl<T: Serialize>(mut out: impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let file = File::create(path).map_err(io_err)?;
    write_jsonl(BufWriter::new(file), items).map_err(io_err)
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err)
}

/// A wrong program used for suite audits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrongSolution {
    pub problem_id: String,
    pub code: String,
}

/// The small corpus shipped with the crate.
pub fn fixture_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("corpus")
}

#[derive(Debug, Clone)]
pub struct CorpusDir {
    pub root: PathBuf,
}

impl CorpusDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CorpusDir { root: root.into() }
    }

    pub fn fixtures() -> Self {
        CorpusDir::new(fixture_corpus_dir())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn problems(&self) -> Result<Vec<Problem>, DataError> {
        let path = self.path("problems.jsonl");
        parse_problems(open(&path)?).map_err(|source| DataError::Corpus { path, source })
    }

    pub fn traces(&self) -> Result<ParsedCorpus, DataError> {
        Ok(parse_corpus(open(&self.path("traces.jsonl"))?))
    }

    pub fn editor_fixtures(&self) -> Result<Vec<EditorFixture>, DataError> {
        read_jsonl(&self.path("editor_fixtures.jsonl"))
    }

    pub fn feedback(&self) -> Result<Vec<FeedbackRecord>, DataError> {
        read_jsonl(&self.path("feedback.jsonl"))
    }

    pub fn wrong_solutions(&self) -> Result<Vec<WrongSolution>, DataError> {
        read_jsonl(&self.path("wrong_solutions.jsonl"))
    }

    /// Programs that pass every test but are filed as wrong; used to check
    /// that audits catch mislabeled data.
    pub fn disguised_correct(&self) -> Result<Vec<WrongSolution>, DataError> {
        read_jsonl(&self.path("disguised_correct.jsonl"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixtures_load() {
        let dir = CorpusDir::fixtures();
        let problems = dir.problems().unwrap();
        assert!(problems.len() >= 5);
        assert!(problems.iter().all(|p| !p.test_cases.is_empty()));
        let traces = dir.traces().unwrap();
        assert!(traces.errors.is_empty());
        assert_eq!(dir.feedback().unwrap().len(), 40);
        assert!(!dir.editor_fixtures().unwrap().is_empty());
        assert!(!dir.wrong_solutions().unwrap().is_empty());
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.jsonl");
        let items = vec![WrongSolution {
            problem_id: "p".into(),
            code: "print(1)\n".into(),
        }];
        write_jsonl_file(&path, &items).unwrap();
        assert_eq!(read_jsonl::<WrongSolution>(&path).unwrap(), items);
        std::fs::write(&path, "\n{\"problem_id\": 1}\n").unwrap();
        let err = read_jsonl::<WrongSolution>(&path).unwrap_err();
        assert!(matches!(err, DataError::Record { line: 2, .. }));
    }
}
