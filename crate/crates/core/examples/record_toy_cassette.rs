//! Regenerates `fixtures/toy/cassette.jsonl`.
//!
//! A stand-in model answers every prompt from the toy corpus's own
//! annotations, with a few deliberate slips so the evaluation numbers are not
//! all perfect. The extract and classify-utility stages are driven through the
//! CLI with `--record`, so the cassette holds exactly the prompts a scripted
//! replay of `fixtures/toy/run.toml` will send.
//!
//! ```text
//! cargo run --example record_toy_cassette
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use atars::corpus::{load_corpus, Corpus, Layer, Provenance, UtilityLabel};
use atars::gateway::prompt::{step2_answer, utility_answer};
use atars::gateway::{FnBackend, PromptSet, TextGenBackend};
use atars::DomainCategory;
use sha2::{Digest, Sha256};

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

fn one_in(n: u8, seed: &str) -> bool {
    Sha256::digest(seed.as_bytes())[0] % n == 0
}

// The toy reviews already read as one aspect per sentence.
fn step1(corpus: &Corpus, review_text: &str) -> Option<String> {
    corpus
        .reviews()
        .iter()
        .find(|r| r.text == review_text)
        .map(|r| r.text.clone())
}

fn step2(corpus: &Corpus, sentence: &str) -> Option<String> {
    let s = sentence.to_lowercase();
    let review = corpus
        .reviews()
        .iter()
        .find(|r| r.text.contains(sentence))?;
    let mut found = Vec::new();
    for a in corpus.aspects() {
        if a.review_id != review.id || a.provenance != Provenance::Gold || a.layer != Layer::Primary
        {
            continue;
        }
        if !s.contains(&a.surface.to_lowercase()) {
            continue;
        }
        // Long phrases sometimes lose their first word, as a real model might.
        let words: Vec<&str> = a.surface.split_whitespace().collect();
        if words.len() >= 3 && one_in(2, &a.surface) {
            found.push(words[1..].join(" "));
        } else {
            found.push(a.surface.clone());
        }
    }
    Some(step2_answer(!found.is_empty(), &found))
}

fn utility(corpus: &Corpus, query: &str) -> Option<String> {
    let bio = query.lines().find_map(|l| l.strip_prefix("U: "))?;
    let tagged = query.lines().find_map(|l| l.strip_prefix("R: "))?;
    let (before, rest) = tagged.split_once("<ata>")?;
    let (aspect, after) = rest.split_once("</ata>")?;
    let plain = format!("{before}{aspect}{after}");
    let user = corpus.profiles().iter().find(|p| p.biography == bio)?;
    let review = corpus
        .reviews()
        .iter()
        .find(|r| r.text.contains(plain.trim()));
    let key = aspect.to_lowercase();
    let hit = corpus.hits().iter().find(|h| {
        h.user_id == user.id
            && review.is_some_and(|r| r.id == h.review_id)
            && h.aspect_surface.to_lowercase() == key
    });
    let mut label = match hit {
        Some(h) => h.consensus.unwrap_or(h.worker_labels[0]),
        None => UtilityLabel::Low,
    };
    if one_in(7, &format!("{}|{key}", user.id)) {
        label = match label {
            UtilityLabel::None => UtilityLabel::Low,
            UtilityLabel::Low => UtilityLabel::Medium,
            UtilityLabel::Medium => UtilityLabel::High,
            UtilityLabel::High => UtilityLabel::Medium,
        };
    }
    Some(format!(
        "{}\nExplanation: judged against the profile.",
        utility_answer(aspect, label)
    ))
}

fn oracle(corpus: Corpus, prompts: PromptSet) -> impl Fn(&str) -> Option<String> + Send + Sync {
    move |prompt: &str| {
        let last = prompt.rsplit("\n\n").next()?;
        if let Some(rest) = last.strip_prefix(&prompts.step1.query_text) {
            step1(&corpus, rest.trim())
        } else if let Some(rest) = last.strip_prefix(&prompts.step2.query_text) {
            step2(&corpus, rest.trim())
        } else if last.starts_with(&prompts.utility.query_text) {
            utility(&corpus, last)
        } else {
            None
        }
    }
}

fn cli(args: &[&str], text: Arc<dyn TextGenBackend>) {
    let mut argv = vec!["atars"];
    argv.extend_from_slice(args);
    let code = atars::cli::run_with(argv, Some(text));
    assert_eq!(code, 0, "atars {} failed", args.join(" "));
}

fn main() {
    let toy = toy_dir();
    let corpus = load_corpus(&toy, DomainCategory::Restaurants).expect("toy corpus");
    let prompts = PromptSet::bundled(DomainCategory::Restaurants).expect("bundled prompts");
    let text: Arc<dyn TextGenBackend> =
        Arc::new(FnBackend::new("toy-oracle", oracle(corpus, prompts)));

    let cassette = toy.join("cassette.jsonl");
    let _ = std::fs::remove_file(&cassette);
    let tmp = tempfile::tempdir().expect("temp dir");
    let work = tmp.path();
    let canon = work.join("corpus");
    let ext = work.join("extract");
    let util = work.join("utility");
    let config = toy.join("run.toml");
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let common = [
        "--config",
        &s(&config),
        "--backend",
        "hash",
        "--record",
        &s(&cassette),
    ];

    cli(
        &[
            &["ingest", "--input", &s(&toy), "--out", &s(&canon)][..],
            &common[..],
        ]
        .concat(),
        text.clone(),
    );
    cli(
        &[
            &["extract", "--corpus", &s(&canon), "--out", &s(&ext)][..],
            &common[..],
        ]
        .concat(),
        text.clone(),
    );
    cli(
        &[
            &[
                "classify-utility",
                "--corpus",
                &s(&canon),
                "--extractions",
                &s(&ext),
                "--out",
                &s(&util),
            ][..],
            &common[..],
        ]
        .concat(),
        text,
    );
    println!("cassette written to {}", cassette.display());
}
