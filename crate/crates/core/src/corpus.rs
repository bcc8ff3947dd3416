//! Corpus data model and JSONL persistence.
//!
//! A corpus holds one domain's items, reviews, annotated or extracted aspects,
//! user profiles, crowd-labelled utility HITs and search queries. Loading checks
//! referential integrity; the loaded corpus is immutable apart from
//! [`Corpus::with_system_aspects`], which returns a new corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::fold_key;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("ParseError {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("IntegrityError {file}:{line}: {msg}")]
    Integrity {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("malformed HIT for ({user_id}, {review_id}): expected 3 labels, got {count}")]
    MalformedHit {
        user_id: String,
        review_id: String,
        count: usize,
    },
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainCategory {
    #[serde(alias = "Restaurants", alias = "restaurant")]
    Restaurants,
    #[serde(alias = "Hotels", alias = "hotel")]
    Hotels,
    #[serde(alias = "HairSalons", alias = "hair_salon", alias = "Hair Salons")]
    HairSalons,
}

impl DomainCategory {
    pub const ALL: [DomainCategory; 3] = [
        DomainCategory::Restaurants,
        DomainCategory::Hotels,
        DomainCategory::HairSalons,
    ];

    /// Directory and serialization name.
    pub fn as_str(self) -> &'static str {
        match self {
            DomainCategory::Restaurants => "restaurants",
            DomainCategory::Hotels => "hotels",
            DomainCategory::HairSalons => "hair_salons",
        }
    }

    /// Singular noun used in prompts ("a restaurant review").
    pub fn noun(self) -> &'static str {
        match self {
            DomainCategory::Restaurants => "restaurant",
            DomainCategory::Hotels => "hotel",
            DomainCategory::HairSalons => "hair salon",
        }
    }
}

impl fmt::Display for DomainCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainCategory {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match k.as_str() {
            "restaurants" | "restaurant" => Ok(DomainCategory::Restaurants),
            "hotels" | "hotel" => Ok(DomainCategory::Hotels),
            "hairsalons" | "hairsalon" => Ok(DomainCategory::HairSalons),
            _ => Err(CorpusError::UnknownDomain(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub domain: DomainCategory,
    pub name: String,
    pub star: f64,
    pub categories: Vec<String>,
    /// Derived from the reviews on load, sorted by review id.
    #[serde(skip)]
    pub review_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub item_id: String,
    pub domain: DomainCategory,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectForm {
    Extractive,
    Abstractive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Primary,
    Secondary,
}

impl Layer {
    /// Parses the CLI spelling: `primary` or `primary+secondary`.
    pub fn parse_set(s: &str) -> Option<Vec<Layer>> {
        match s.trim().to_lowercase().as_str() {
            "primary" => Some(vec![Layer::Primary]),
            "primary+secondary" | "all" => Some(vec![Layer::Primary, Layer::Secondary]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gold,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtypicalAspect {
    pub review_id: String,
    pub surface: String,
    pub form: AspectForm,
    pub layer: Layer,
    pub provenance: Provenance,
}

impl AtypicalAspect {
    /// A system-extracted primary aspect.
    pub fn system(review_id: &str, surface: &str) -> Self {
        AtypicalAspect {
            review_id: review_id.to_string(),
            surface: surface.to_string(),
            form: AspectForm::Extractive,
            layer: Layer::Primary,
            provenance: Provenance::System,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub domain: DomainCategory,
    pub biography: String,
    #[serde(default)]
    pub seed_topics: Vec<String>,
}

/// Ordinal utility of an aspect for a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UtilityLabel {
    None,
    Low,
    Medium,
    High,
}

impl UtilityLabel {
    pub const ALL: [UtilityLabel; 4] = [
        UtilityLabel::None,
        UtilityLabel::Low,
        UtilityLabel::Medium,
        UtilityLabel::High,
    ];

    pub fn numeric(self) -> f64 {
        match self {
            UtilityLabel::None => 0.0,
            UtilityLabel::Low => 0.5,
            UtilityLabel::Medium => 0.75,
            UtilityLabel::High => 1.0,
        }
    }

    /// Position in the ordinal scale, 0 for None through 3 for High.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            UtilityLabel::None => "None",
            UtilityLabel::Low => "Low",
            UtilityLabel::Medium => "Medium",
            UtilityLabel::High => "High",
        }
    }

    /// Case-insensitive match on the four level names.
    pub fn from_name(s: &str) -> Option<Self> {
        let t = s.trim();
        UtilityLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(t))
    }
}

impl fmt::Display for UtilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One crowdsourced judgement of ⟨user, review, aspect⟩ by three workers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitRecord {
    pub user_id: String,
    pub review_id: String,
    pub aspect_surface: String,
    pub worker_labels: Vec<UtilityLabel>,
    #[serde(default)]
    pub accepted: bool,
    #[serde(default)]
    pub consensus: Option<UtilityLabel>,
}

impl HitRecord {
    pub fn new(
        user_id: &str,
        review_id: &str,
        aspect_surface: &str,
        labels: [UtilityLabel; 3],
    ) -> Self {
        let consensus = majority(&labels);
        HitRecord {
            user_id: user_id.to_string(),
            review_id: review_id.to_string(),
            aspect_surface: aspect_surface.to_string(),
            worker_labels: labels.to_vec(),
            accepted: consensus.is_some(),
            consensus,
        }
    }

    pub(crate) fn check(&self) -> Result<(), CorpusError> {
        if self.worker_labels.len() != 3 {
            return Err(CorpusError::MalformedHit {
                user_id: self.user_id.clone(),
                review_id: self.review_id.clone(),
                count: self.worker_labels.len(),
            });
        }
        Ok(())
    }
}

fn majority(labels: &[UtilityLabel]) -> Option<UtilityLabel> {
    UtilityLabel::ALL
        .into_iter()
        .find(|l| labels.iter().filter(|x| *x == l).count() >= 2)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCounts {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
}

/// Keeps the HITs on which at least two of three workers agree, with the
/// consensus label filled in.
pub fn accept_hits(hits: &[HitRecord]) -> Result<(Vec<HitRecord>, HitCounts), CorpusError> {
    let mut accepted = Vec::new();
    for h in hits {
        h.check()?;
        if let Some(c) = majority(&h.worker_labels) {
            let mut h = h.clone();
            h.accepted = true;
            h.consensus = Some(c);
            accepted.push(h);
        }
    }
    let counts = HitCounts {
        total: hits.len(),
        accepted: accepted.len(),
        rejected: hits.len() - accepted.len(),
    };
    Ok((accepted, counts))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub category: String,
    pub domain: DomainCategory,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub domain: Option<DomainCategory>,
    items: Vec<Item>,
    reviews: Vec<Review>,
    aspects: Vec<AtypicalAspect>,
    profiles: Vec<UserProfile>,
    hits: Vec<HitRecord>,
    queries: Vec<Query>,
    item_idx: HashMap<String, usize>,
    review_idx: HashMap<String, usize>,
    profile_idx: HashMap<String, usize>,
}

pub const ITEMS_FILE: &str = "items.jsonl";
pub const REVIEWS_FILE: &str = "reviews.jsonl";
pub const ASPECTS_FILE: &str = "aspects.jsonl";
pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const HITS_FILE: &str = "hits.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";

/// Reads a JSONL file into records with their 1-based line numbers. Blank lines
/// are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let f = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let name = file_label(path);
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            file: name.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Writes records as one compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    f.write_all(&buf).map_err(|e| CorpusError::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn integrity(file: &str, line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Integrity {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_optional<T: DeserializeOwned>(
    dir: &Path,
    name: &str,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let p = dir.join(name);
    if p.exists() {
        read_jsonl(&p)
    } else {
        Ok(Vec::new())
    }
}

/// Loads a corpus directory. `items.jsonl` and `reviews.jsonl` are required;
/// the remaining files are optional. Records belonging to other domains are
/// skipped, as are aspects and HITs attached to their reviews.
pub fn load_corpus(dir: &Path, domain: DomainCategory) -> Result<Corpus, CorpusError> {
    let items: Vec<(usize, Item)> = read_jsonl(&dir.join(ITEMS_FILE))?;
    let reviews: Vec<(usize, Review)> = read_jsonl(&dir.join(REVIEWS_FILE))?;
    let aspects: Vec<(usize, AtypicalAspect)> = read_optional(dir, ASPECTS_FILE)?;
    let profiles: Vec<(usize, UserProfile)> = read_optional(dir, PROFILES_FILE)?;
    let hits: Vec<(usize, HitRecord)> = read_optional(dir, HITS_FILE)?;
    let queries: Vec<(usize, Query)> = read_optional(dir, QUERIES_FILE)?;

    let foreign_reviews: HashSet<String> = reviews
        .iter()
        .filter(|(_, r)| r.domain != domain)
        .map(|(_, r)| r.id.clone())
        .collect();

    let mut c = Corpus {
        domain: Some(domain),
        ..Default::default()
    };
    for (line, item) in items.into_iter().filter(|(_, i)| i.domain == domain) {
        if !(0.0..=5.0).contains(&item.star) {
            return Err(integrity(
                ITEMS_FILE,
                line,
                format!("item {} star {} outside [0,5]", item.id, item.star),
            ));
        }
        if c.item_idx.insert(item.id.clone(), c.items.len()).is_some() {
            return Err(integrity(
                ITEMS_FILE,
                line,
                format!("duplicate item id {}", item.id),
            ));
        }
        c.items.push(Item {
            review_ids: Vec::new(),
            ..item
        });
    }
    for (line, r) in reviews.into_iter().filter(|(_, r)| r.domain == domain) {
        if r.text.trim().is_empty() {
            return Err(integrity(
                REVIEWS_FILE,
                line,
                format!("review {} has empty text", r.id),
            ));
        }
        if !c.item_idx.contains_key(&r.item_id) {
            return Err(integrity(
                REVIEWS_FILE,
                line,
                format!("review {} references missing item {}", r.id, r.item_id),
            ));
        }
        if c.review_idx.insert(r.id.clone(), c.reviews.len()).is_some() {
            return Err(integrity(
                REVIEWS_FILE,
                line,
                format!("duplicate review id {}", r.id),
            ));
        }
        c.reviews.push(r);
    }
    for (line, a) in aspects {
        if foreign_reviews.contains(&a.review_id) {
            continue;
        }
        c.check_aspect(&a)
            .map_err(|m| integrity(ASPECTS_FILE, line, m))?;
        c.aspects.push(a);
    }
    for (line, p) in profiles.into_iter().filter(|(_, p)| p.domain == domain) {
        if p.biography.trim().is_empty() {
            return Err(integrity(
                PROFILES_FILE,
                line,
                format!("profile {} has empty biography", p.id),
            ));
        }
        if c.profile_idx
            .insert(p.id.clone(), c.profiles.len())
            .is_some()
        {
            return Err(integrity(
                PROFILES_FILE,
                line,
                format!("duplicate profile id {}", p.id),
            ));
        }
        c.profiles.push(p);
    }
    for (line, h) in hits {
        if foreign_reviews.contains(&h.review_id) {
            continue;
        }
        h.check()?;
        if !c.review_idx.contains_key(&h.review_id) {
            return Err(integrity(
                HITS_FILE,
                line,
                format!("HIT references missing review {}", h.review_id),
            ));
        }
        if !c.profiles.is_empty() && !c.profile_idx.contains_key(&h.user_id) {
            return Err(integrity(
                HITS_FILE,
                line,
                format!("HIT references missing profile {}", h.user_id),
            ));
        }
        let labels = [h.worker_labels[0], h.worker_labels[1], h.worker_labels[2]];
        c.hits.push(HitRecord::new(
            &h.user_id,
            &h.review_id,
            &h.aspect_surface,
            labels,
        ));
    }
    for (line, q) in queries.into_iter().filter(|(_, q)| q.domain == domain) {
        if q.category.trim().is_empty() {
            return Err(integrity(QUERIES_FILE, line, "query has empty category"));
        }
        c.queries.push(q);
    }
    c.link_reviews();
    Ok(c)
}

impl Corpus {
    fn check_aspect(&self, a: &AtypicalAspect) -> Result<(), String> {
        if a.surface.trim().is_empty() {
            return Err(format!("empty aspect surface on review {}", a.review_id));
        }
        if !self.review_idx.contains_key(&a.review_id) {
            return Err(format!("aspect references missing review {}", a.review_id));
        }
        Ok(())
    }

    fn link_reviews(&mut self) {
        for it in &mut self.items {
            it.review_ids.clear();
        }
        for r in &self.reviews {
            let i = self.item_idx[&r.item_id];
            self.items[i].review_ids.push(r.id.clone());
        }
        for it in &mut self.items {
            it.review_ids.sort();
        }
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }
    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }
    pub fn aspects(&self) -> &[AtypicalAspect] {
        &self.aspects
    }
    pub fn profiles(&self) -> &[UserProfile] {
        &self.profiles
    }
    pub fn hits(&self) -> &[HitRecord] {
        &self.hits
    }
    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.item_idx.get(id).map(|&i| &self.items[i])
    }
    pub fn review(&self, id: &str) -> Option<&Review> {
        self.review_idx.get(id).map(|&i| &self.reviews[i])
    }
    pub fn profile(&self, id: &str) -> Option<&UserProfile> {
        self.profile_idx.get(id).map(|&i| &self.profiles[i])
    }

    /// Items whose categories contain the query category, compared
    /// case-insensitively as whole tokens. Sorted by item id.
    pub fn items_matching(&self, q: &Query) -> Vec<&Item> {
        let want = q.category.trim().to_lowercase();
        let mut out: Vec<&Item> = self
            .items
            .iter()
            .filter(|it| {
                it.categories
                    .iter()
                    .any(|c| c.trim().to_lowercase() == want)
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Union of the aspects over an item's reviews, filtered by provenance and
    /// layer, de-duplicated on the case-folded surface. Order follows review id
    /// and then position within the review.
    pub fn aspects_of_item(
        &self,
        item_id: &str,
        provenance: Provenance,
        layers: &[Layer],
    ) -> Result<Vec<AtypicalAspect>, CorpusError> {
        let item = self
            .item(item_id)
            .ok_or_else(|| CorpusError::UnknownItem(item_id.to_string()))?;
        let mut by_review: BTreeMap<&str, Vec<&AtypicalAspect>> = BTreeMap::new();
        for a in &self.aspects {
            if a.provenance == provenance && layers.contains(&a.layer) {
                by_review.entry(a.review_id.as_str()).or_default().push(a);
            }
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for rid in &item.review_ids {
            for a in by_review.get(rid.as_str()).into_iter().flatten() {
                if seen.insert(fold_key(&a.surface)) {
                    out.push((*a).clone());
                }
            }
        }
        Ok(out)
    }

    /// Returns a copy with the given system aspects replacing any existing
    /// system aspects. Gold aspects are left untouched.
    pub fn with_system_aspects(&self, system: Vec<AtypicalAspect>) -> Result<Corpus, CorpusError> {
        let mut c = self.clone();
        c.aspects.retain(|a| a.provenance == Provenance::Gold);
        for (i, mut a) in system.into_iter().enumerate() {
            a.provenance = Provenance::System;
            c.check_aspect(&a)
                .map_err(|m| integrity(ASPECTS_FILE, i + 1, m))?;
            c.aspects.push(a);
        }
        Ok(c)
    }

    /// Returns a copy with profiles replaced.
    pub fn with_profiles(&self, profiles: Vec<UserProfile>) -> Corpus {
        let mut c = self.clone();
        c.profile_idx = profiles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        c.profiles = profiles;
        c
    }

    /// Writes the canonical form: items, reviews and profiles sorted by id,
    /// aspects grouped by review id in their original order, HITs and queries in
    /// load order. Files for empty collections are omitted.
    pub fn write_canonical(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let mut items = self.items.clone();
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let mut reviews = self.reviews.clone();
        reviews.sort_by(|a, b| a.id.cmp(&b.id));
        let mut aspects = self.aspects.clone();
        aspects.sort_by(|a, b| a.review_id.cmp(&b.review_id));
        let mut profiles = self.profiles.clone();
        profiles.sort_by(|a, b| a.id.cmp(&b.id));
        write_jsonl(&dir.join(ITEMS_FILE), &items)?;
        write_jsonl(&dir.join(REVIEWS_FILE), &reviews)?;
        if !aspects.is_empty() {
            write_jsonl(&dir.join(ASPECTS_FILE), &aspects)?;
        }
        if !profiles.is_empty() {
            write_jsonl(&dir.join(PROFILES_FILE), &profiles)?;
        }
        if !self.hits.is_empty() {
            write_jsonl(&dir.join(HITS_FILE), &self.hits)?;
        }
        if !self.queries.is_empty() {
            write_jsonl(&dir.join(QUERIES_FILE), &self.queries)?;
        }
        Ok(())
    }

    /// Review and aspect counts for the gold extractive annotations.
    pub fn annotation_counts(&self) -> AnnotationCounts {
        let mut primary_reviews = HashSet::new();
        let mut any_reviews = HashSet::new();
        let mut counts = AnnotationCounts {
            reviews: self.reviews.len(),
            ..Default::default()
        };
        for a in &self.aspects {
            if a.provenance != Provenance::Gold || a.form != AspectForm::Extractive {
                continue;
            }
            counts.all_aspects += 1;
            any_reviews.insert(a.review_id.as_str());
            if a.layer == Layer::Primary {
                counts.primary_aspects += 1;
                primary_reviews.insert(a.review_id.as_str());
            }
        }
        counts.primary_reviews = primary_reviews.len();
        counts.all_reviews = any_reviews.len();
        counts
    }
}

/// How many reviews carry atypical aspects, and how many aspects there are, for
/// the primary layer alone and for both layers together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCounts {
    pub reviews: usize,
    pub primary_reviews: usize,
    pub primary_aspects: usize,
    pub all_reviews: usize,
    pub all_aspects: usize,
}

/// Word frequencies across texts, ascending by count and then alphabetically,
/// so the rarest words come first. Words are lowercased alphabetic runs.
pub fn term_frequencies<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for w in t.split(|c: char| !c.is_alphabetic() && c != '\'') {
            let w = w.trim_matches('\'').to_lowercase();
            if !w.is_empty() {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Published dataset sizes, loaded from a descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptors {
    pub domains: BTreeMap<DomainCategory, DomainDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub splits: BTreeMap<String, AnnotationCounts>,
    pub profiles: BTreeMap<String, usize>,
    pub hits: HitDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitDescriptor {
    pub total: usize,
    pub accepted: usize,
    pub all_sigma: SigmaDescriptor,
    pub accepted_sigma: SigmaDescriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaDescriptor {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl DatasetDescriptors {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let s = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| CorpusError::Parse {
            file: file_label(path),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// The descriptor file bundled with the crate.
    pub fn bundled() -> Self {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/datasets/descriptors.json");
        Self::load(&p).expect("bundled descriptors parse")
    }
}
