//! Judges how useful an atypical aspect is to a user profile, retrieving the
//! four most relevant labelled judgements as in-context examples. Answers come
//! from the toy cassette and are compared with the annotators' consensus.
//!
//! ```text
//! cargo run --example utility_classification
//! ```

use std::path::Path;
use std::sync::Arc;

use atars::corpus::load_corpus;
use atars::evaluation::{utility_report, CostMatrix};
use atars::gateway::{HashBackend, PromptSet, ScriptedBackend};
use atars::personalization::{
    classify_utility, triplets_from_hits, UtilityExampleBank, UtilityMode, UtilityQuery,
};
use atars::{DomainCategory, Gateway, UtilityLabel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let corpus = load_corpus(&toy, DomainCategory::Restaurants)?;
    let text = Arc::new(ScriptedBackend::from_cassette(&toy.join("cassette.jsonl"))?);
    let gw = Gateway::new(text, Arc::new(HashBackend::new(7)), 4)?;
    let tpl = PromptSet::bundled(DomainCategory::Restaurants)?.utility;
    let bank = UtilityExampleBank::build(triplets_from_hits(&corpus), &gw)?;
    println!("bank: {} labelled triplets", bank.len());

    let mut pairs = Vec::new();
    for (n, h) in corpus.hits().iter().filter(|h| h.accepted).enumerate() {
        let (Some(profile), Some(review), Some(gold)) = (
            corpus.profile(&h.user_id),
            corpus.review(&h.review_id),
            h.consensus,
        ) else {
            continue;
        };
        let q = UtilityQuery::for_review(profile.clone(), review, &h.aspect_surface)?;
        let out = classify_utility(&q, UtilityMode::Dynamic4, &gw, &tpl, Some(&bank))?;
        if n < 6 {
            println!(
                "{} / {:<28} predicted {:<6} gold {}",
                h.user_id,
                h.aspect_surface,
                out.label.name(),
                gold.name()
            );
        }
        pairs.push((gold, out.label));
    }

    let report = utility_report(&pairs, 0)?;
    println!("{} judgements", pairs.len());
    println!("4-way accuracy {:.3}", report.accuracy_4way);
    println!("2-way accuracy {:.3}", report.accuracy_2way);
    println!("useful-vs-not F1 {:.3}", report.binary.f1);
    let m = CostMatrix::four_way();
    println!(
        "credit for Medium when gold is High: {}",
        1.0 - m.cost(UtilityLabel::High, UtilityLabel::Medium)
    );
    Ok(())
}
