//! Trace validation, deduplication, difficulty balancing and line overlap on
//! the shipped fixture corpus.

use feedback_gym::corpus::{balance_by_difficulty, line_overlap, parse_corpus_str, Document, NormalizationPolicy};
use feedback_gym::data::CorpusDir;
use feedback_gym::pipeline::ingest;

fn main() -> anyhow::Result<()> {
    let corpus = CorpusDir::fixtures();
    let text = std::fs::read_to_string(corpus.path("traces.jsonl"))?;

    // One bad line: an accepted submission that is not last.
    let tampered = format!(
        "{text}{}\n",
        r#"{"problem_id":"sum-two","author_id":"u99","submissions":[{"code":"print(1)","verdict":"correct"},{"code":"print(2)","verdict":"wrong"}]}"#
    );
    let (traces, report) = ingest(parse_corpus_str(&tampered), &NormalizationPolicy::default());
    println!(
        "kept {} traces, {} triplets, {} wrong pairs, {} dropped as duplicates",
        traces.len(),
        report.triplets.len(),
        report.wrong_pairs.len(),
        report.dedup_dropped
    );
    for r in &report.rejected {
        println!("rejected: {r}");
    }

    let problems = corpus.problems()?;
    let sample = balance_by_difficulty(&problems, 1, 42);
    let ids: Vec<_> = sample.problems.iter().map(|p| p.problem_id.as_str()).collect();
    println!("balanced sample: {ids:?}");

    let reference: Vec<Document> = traces
        .iter()
        .map(|t| Document::new(t.problem_id.clone(), t.correct_code()))
        .collect();
    let candidates = vec![
        Document::new("copied", "a, b = map(int, input().split())\n    # add them\nprint(a + b)\n"),
        Document::new("fresh", "import sys\nprint(sum(map(int, sys.stdin.read().split())))\n"),
    ];
    for policy in [NormalizationPolicy::default(), NormalizationPolicy::Exact] {
        let rep = line_overlap(&candidates, &reference, &policy);
        for d in &rep.documents {
            println!("{:<28} {:<7} {}/{}", rep.normalization_policy, d.name, d.absolute_overlap, d.total_lines);
        }
    }
    Ok(())
}
