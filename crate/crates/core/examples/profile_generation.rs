//! Synthesizes user profiles from sampled seed topics. A stand-in model writes
//! a one-line biography from the topics in the prompt, so the example runs
//! offline; swap in the live backend for real biographies.
//!
//! ```text
//! cargo run --example profile_generation
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use atars::gateway::{FnBackend, HashBackend, PromptSet};
use atars::personalization::{
    generate_profiles, sample_aspect_count, split_profiles, ProfileGenSpec,
};
use atars::{DomainCategory, Gateway};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn biography(prompt: &str) -> Option<String> {
    let topics = prompt.rsplit_once("topics <")?.1.split_once('>')?.0;
    Some(format!(
        "A good biography would be: Weekends are for {topics}, and any excuse to talk about them."
    ))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool: Vec<String> = [
        "live jazz trio",
        "board game shelf",
        "dog treats",
        "vinyl record wall",
        "trivia night",
        "rooftop garden",
        "pinball machines",
        "poetry readings",
    ]
    .map(String::from)
    .to_vec();
    let spec = ProfileGenSpec::new(pool);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = BTreeMap::new();
    for _ in 0..10_000 {
        *counts.entry(sample_aspect_count(&mut rng)).or_insert(0) += 1;
    }
    println!("topic counts over 10000 draws: {counts:?}");

    let text = Arc::new(FnBackend::new("topic-echo", biography));
    let gw = Gateway::new(text, Arc::new(HashBackend::new(7)), 4)?;
    let tpl = PromptSet::bundled(DomainCategory::Restaurants)?.profile;
    let profiles = generate_profiles(&spec, DomainCategory::Restaurants, 6, "g", 7, &gw, &tpl)?;
    let (train, dev) = split_profiles(profiles, 2);
    for p in train.iter().chain(&dev) {
        println!("{} {:?}\n    {}", p.id, p.seed_topics, p.biography);
    }
    println!("{} train+test profiles, {} dev", train.len(), dev.len());
    Ok(())
}
