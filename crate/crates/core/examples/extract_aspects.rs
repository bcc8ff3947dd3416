//! Two-step atypical-aspect extraction over the toy restaurant reviews,
//! replayed from the recorded cassette with dynamically retrieved examples.
//!
//! ```text
//! cargo run --example extract_aspects
//! ```

use std::path::Path;
use std::sync::Arc;

use atars::corpus::{load_corpus, Layer, Provenance};
use atars::extraction::{
    extract_reviews, label_sentences, ExampleBank, ExtractionConfig, ExtractionMode,
};
use atars::gateway::{HashBackend, PromptSet, ScriptedBackend};
use atars::{DomainCategory, Gateway};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let corpus = load_corpus(&toy, DomainCategory::Restaurants)?;
    let text = Arc::new(ScriptedBackend::from_cassette(&toy.join("cassette.jsonl"))?);
    let gw = Gateway::new(text, Arc::new(HashBackend::new(7)), 4)?;
    let prompts = PromptSet::bundled(DomainCategory::Restaurants)?;

    let cfg = ExtractionConfig::new(ExtractionMode::Dynamic8);
    let bank = ExampleBank::build(label_sentences(&corpus, &cfg.layers), &gw)?;
    println!("bank: {} labelled sentences", bank.len());

    let mut reviews = corpus.reviews().to_vec();
    reviews.sort_by(|a, b| a.id.cmp(&b.id));
    reviews.truncate(4);
    for r in extract_reviews(&reviews, &cfg, &gw, &prompts, Some(&bank))? {
        let gold: Vec<String> = corpus
            .aspects()
            .iter()
            .filter(|a| {
                a.review_id == r.review_id
                    && a.provenance == Provenance::Gold
                    && a.layer == Layer::Primary
            })
            .map(|a| a.surface.clone())
            .collect();
        let got: Vec<&str> = r.aspects.iter().map(|a| a.surface.as_str()).collect();
        println!("{}", r.review_id);
        for s in &r.sentences {
            let mark = if s.positive { "+" } else { "-" };
            println!("  {mark} {}", s.sentence.text);
        }
        println!("  extracted: {got:?}");
        println!("  gold:      {gold:?}");
    }
    Ok(())
}
