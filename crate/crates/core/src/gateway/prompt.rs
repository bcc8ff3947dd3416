//! Prompt templates loaded from fixture files and rendered byte-exactly.
//!
//! Layout on disk: `<root>/<family>/<domain>/instructions.txt`, `query.txt` and
//! `examples/NN.txt`. Example files are made of `[section]` headers, each
//! followed by its text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::GatewayError;
use crate::corpus::{DomainCategory, UtilityLabel};

/// Strings the hash backend uses to recognise which family a prompt belongs
/// to. They must match the bundled `query.txt` files.
pub(crate) mod markers {
    pub const STEP1_QUERY: &str = "Now, read and process the following review:";
    pub const STEP2_QUERY: &str = "Now, read and process the following review sentence:";
    pub const UTILITY_QUERY_TAIL: &str = "and assign its relevance value, as explained earlier.";
    pub const PROFILE_QUERY: &str = "generate a user profile for the topics";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptFamily {
    Step1Reformulate,
    Step2Extract,
    UtilityClassify,
    ProfileGenerate,
}

impl PromptFamily {
    pub const ALL: [PromptFamily; 4] = [
        PromptFamily::Step1Reformulate,
        PromptFamily::Step2Extract,
        PromptFamily::UtilityClassify,
        PromptFamily::ProfileGenerate,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            PromptFamily::Step1Reformulate => "step1_reformulate",
            PromptFamily::Step2Extract => "step2_extract",
            PromptFamily::UtilityClassify => "utility_classify",
            PromptFamily::ProfileGenerate => "profile_generate",
        }
    }

    /// Number of in-context examples a few-shot prompt carries.
    pub fn slot_count(self) -> usize {
        match self {
            PromptFamily::Step1Reformulate => 3,
            PromptFamily::Step2Extract => 8,
            PromptFamily::UtilityClassify => 4,
            PromptFamily::ProfileGenerate => 9,
        }
    }

    /// Whether the family may also be rendered without examples.
    pub fn allows_zero_shot(self) -> bool {
        matches!(
            self,
            PromptFamily::Step2Extract | PromptFamily::UtilityClassify
        )
    }
}

/// One in-context example.
#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    Step1 {
        review: String,
        output: String,
    },
    Step2 {
        sentence: String,
        positive: bool,
        aspects: Vec<String>,
    },
    Utility {
        profile: String,
        sentence: String,
        aspect: String,
        label: UtilityLabel,
        explanation: Option<String>,
    },
    Profile {
        topics: Vec<String>,
        rationale: String,
        biography: String,
    },
}

impl Example {
    pub fn family(&self) -> PromptFamily {
        match self {
            Example::Step1 { .. } => PromptFamily::Step1Reformulate,
            Example::Step2 { .. } => PromptFamily::Step2Extract,
            Example::Utility { .. } => PromptFamily::UtilityClassify,
            Example::Profile { .. } => PromptFamily::ProfileGenerate,
        }
    }
}

/// The item being asked about, appended after the examples.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptInput {
    Review(String),
    Sentence(String),
    Utility { profile: String, sentence: String },
    Topics(Vec<String>),
}

impl PromptInput {
    fn family(&self) -> PromptFamily {
        match self {
            PromptInput::Review(_) => PromptFamily::Step1Reformulate,
            PromptInput::Sentence(_) => PromptFamily::Step2Extract,
            PromptInput::Utility { .. } => PromptFamily::UtilityClassify,
            PromptInput::Topics(_) => PromptFamily::ProfileGenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub family: PromptFamily,
    pub domain: DomainCategory,
    pub instruction_text: String,
    pub query_text: String,
    /// The fixed example set shipped with the template.
    pub example_slots: Vec<Example>,
}

fn fixture_err(path: &Path, msg: impl Into<String>) -> GatewayError {
    GatewayError::Fixture {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String, GatewayError> {
    fs::read_to_string(path)
        .map(|s| s.trim_end().to_string())
        .map_err(|e| fixture_err(path, e.to_string()))
}

fn sections(path: &Path, text: &str) -> Result<BTreeMap<String, String>, GatewayError> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    let mut cur: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with('[')
            && t.ends_with(']')
            && t.len() > 2
            && t[1..t.len() - 1]
                .chars()
                .all(|c| c.is_ascii_lowercase() || c == '_')
        {
            if let Some((k, v)) = cur.take() {
                out.insert(k, v.join("\n").trim().to_string());
            }
            cur = Some((t[1..t.len() - 1].to_string(), Vec::new()));
        } else if let Some((_, v)) = cur.as_mut() {
            v.push(line);
        } else if !t.is_empty() {
            return Err(fixture_err(path, "text before first section header"));
        }
    }
    if let Some((k, v)) = cur {
        out.insert(k, v.join("\n").trim().to_string());
    }
    Ok(out)
}

fn field(path: &Path, s: &BTreeMap<String, String>, k: &str) -> Result<String, GatewayError> {
    s.get(k)
        .cloned()
        .ok_or_else(|| fixture_err(path, format!("missing [{k}] section")))
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

fn parse_example(family: PromptFamily, path: &Path) -> Result<Example, GatewayError> {
    let s = sections(path, &read_text(path)?)?;
    let f = |k: &str| field(path, &s, k);
    Ok(match family {
        PromptFamily::Step1Reformulate => Example::Step1 {
            review: f("review")?,
            output: f("output")?,
        },
        PromptFamily::Step2Extract => {
            let positive = match f("classification")?.as_str() {
                "pos" => true,
                "neg" => false,
                other => return Err(fixture_err(path, format!("classification {other:?}"))),
            };
            let raw = f("aspects")?;
            let aspects = if raw == "<None>" {
                Vec::new()
            } else {
                split_list(&raw)
            };
            if positive == aspects.is_empty() {
                return Err(fixture_err(path, "classification disagrees with aspects"));
            }
            Example::Step2 {
                sentence: f("sentence")?,
                positive,
                aspects,
            }
        }
        PromptFamily::UtilityClassify => {
            let l = f("label")?;
            Example::Utility {
                profile: f("profile")?,
                sentence: f("sentence")?,
                aspect: f("aspect")?,
                label: UtilityLabel::from_name(&l)
                    .ok_or_else(|| fixture_err(path, format!("label {l:?}")))?,
                explanation: s.get("explanation").cloned(),
            }
        }
        PromptFamily::ProfileGenerate => Example::Profile {
            topics: split_list(&f("topics")?),
            rationale: f("rationale")?,
            biography: f("biography")?,
        },
    })
}

fn example_files(dir: &Path) -> Result<Vec<PathBuf>, GatewayError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| fixture_err(dir, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

impl PromptTemplate {
    pub fn load(
        root: &Path,
        family: PromptFamily,
        domain: DomainCategory,
    ) -> Result<Self, GatewayError> {
        let dir = root.join(family.dir_name()).join(domain.as_str());
        let instruction_text = read_text(&dir.join("instructions.txt"))?;
        let query_text = read_text(&dir.join("query.txt"))?;
        let example_slots = example_files(&dir.join("examples"))?
            .iter()
            .map(|p| parse_example(family, p))
            .collect::<Result<Vec<_>, _>>()?;
        if example_slots.len() != family.slot_count() {
            return Err(fixture_err(
                &dir,
                format!(
                    "expected {} examples, found {}",
                    family.slot_count(),
                    example_slots.len()
                ),
            ));
        }
        Ok(PromptTemplate {
            family,
            domain,
            instruction_text,
            query_text,
            example_slots,
        })
    }

    /// Renders with the template's own fixed examples.
    pub fn render(&self, input: &PromptInput) -> Result<String, GatewayError> {
        render_prompt(self, &self.example_slots, input)
    }

    /// Renders with no examples.
    pub fn render_zero_shot(&self, input: &PromptInput) -> Result<String, GatewayError> {
        render_prompt(self, &[], input)
    }
}

fn tag(positive: bool) -> &'static str {
    if positive {
        "<pos>"
    } else {
        "<neg>"
    }
}

/// The answer line a Step 2 example shows, and the grammar the parser reads.
pub fn step2_answer(positive: bool, aspects: &[String]) -> String {
    let list = if aspects.is_empty() {
        "<None>".to_string()
    } else {
        aspects.join(", ")
    };
    format!("Classification: {} Atypical Aspects: {list}", tag(positive))
}

/// The answer line a utility example shows.
pub fn utility_answer(aspect: &str, label: UtilityLabel) -> String {
    format!("A' = [(\"{aspect}\", \"{}\")]", label.name())
}

fn render_example(n: usize, ex: &Example) -> String {
    match ex {
        Example::Step1 { review, output } => format!("Example {n}: {review}\nOutput {n}: {output}"),
        Example::Step2 { sentence, positive, aspects } => {
            format!("Example {n}: {sentence}\n{}", step2_answer(*positive, aspects))
        }
        Example::Utility { profile, sentence, aspect, label, explanation } => {
            let mut s = format!("Example {n}:\nU: {profile}\nR: {sentence}\nOutput: {}", utility_answer(aspect, *label));
            if let Some(e) = explanation {
                let _ = write!(s, "\nExplanation: {e}");
            }
            s
        }
        Example::Profile { topics, rationale, biography } => format!(
            "Example {n}: The given topics are <{}>\nLet's think step by step. {rationale}\nSo, a good biography would be: {biography}",
            topics.join(", ")
        ),
    }
}

fn render_query(tpl: &PromptTemplate, input: &PromptInput) -> String {
    let q = &tpl.query_text;
    match input {
        PromptInput::Review(r) => format!("{q} {r}"),
        PromptInput::Sentence(s) => format!("{q} {s}"),
        PromptInput::Utility { profile, sentence } => format!("{q}\nU: {profile}\nR: {sentence}"),
        PromptInput::Topics(t) => format!("{q} <{}>.", t.join(", ")),
    }
}

/// Renders instructions, the given examples in order, then the query.
///
/// The example count must be the family's full slot count, or zero for the
/// families that allow zero-shot prompting.
pub fn render_prompt(
    tpl: &PromptTemplate,
    examples: &[Example],
    input: &PromptInput,
) -> Result<String, GatewayError> {
    let fam = tpl.family;
    let n = examples.len();
    if !(n == fam.slot_count() || (n == 0 && fam.allows_zero_shot())) {
        return Err(GatewayError::SlotMismatch(format!(
            "{} takes {} examples{}, got {n}",
            fam.dir_name(),
            fam.slot_count(),
            if fam.allows_zero_shot() {
                " or none"
            } else {
                ""
            }
        )));
    }
    if let Some(e) = examples.iter().find(|e| e.family() != fam) {
        return Err(GatewayError::SlotMismatch(format!(
            "{:?} example in {} prompt",
            e.family(),
            fam.dir_name()
        )));
    }
    if input.family() != fam {
        return Err(GatewayError::SlotMismatch(format!(
            "{:?} input in {} prompt",
            input.family(),
            fam.dir_name()
        )));
    }
    let mut out = format!("Instructions: {}\n\n", tpl.instruction_text);
    for (i, ex) in examples.iter().enumerate() {
        out.push_str(&render_example(i + 1, ex));
        out.push_str("\n\n");
    }
    out.push_str(&render_query(tpl, input));
    Ok(out)
}

/// The four templates for one domain.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub domain: DomainCategory,
    pub step1: PromptTemplate,
    pub step2: PromptTemplate,
    pub utility: PromptTemplate,
    pub profile: PromptTemplate,
    /// SHA-256 over every fixture file of this domain, for run manifests.
    pub fixture_sha256: String,
}

impl PromptSet {
    /// Fixture root shipped with the crate.
    pub fn default_root() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/prompts")
    }

    pub fn bundled(domain: DomainCategory) -> Result<Self, GatewayError> {
        Self::load(&Self::default_root(), domain)
    }

    pub fn load(root: &Path, domain: DomainCategory) -> Result<Self, GatewayError> {
        let mut h = Sha256::new();
        for fam in PromptFamily::ALL {
            let dir = root.join(fam.dir_name()).join(domain.as_str());
            let mut files = vec![dir.join("instructions.txt"), dir.join("query.txt")];
            files.extend(example_files(&dir.join("examples"))?);
            for f in files {
                let rel = f.strip_prefix(root).unwrap_or(&f);
                h.update(rel.to_string_lossy().as_bytes());
                h.update([0]);
                h.update(fs::read(&f).map_err(|e| fixture_err(&f, e.to_string()))?);
                h.update([0]);
            }
        }
        Ok(PromptSet {
            domain,
            step1: PromptTemplate::load(root, PromptFamily::Step1Reformulate, domain)?,
            step2: PromptTemplate::load(root, PromptFamily::Step2Extract, domain)?,
            utility: PromptTemplate::load(root, PromptFamily::UtilityClassify, domain)?,
            profile: PromptTemplate::load(root, PromptFamily::ProfileGenerate, domain)?,
            fixture_sha256: hex::encode(h.finalize()),
        })
    }

    pub fn get(&self, fam: PromptFamily) -> &PromptTemplate {
        match fam {
            PromptFamily::Step1Reformulate => &self.step1,
            PromptFamily::Step2Extract => &self.step2,
            PromptFamily::UtilityClassify => &self.utility,
            PromptFamily::ProfileGenerate => &self.profile,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> PromptSet {
        PromptSet::bundled(DomainCategory::Restaurants).unwrap()
    }

    #[test]
    fn every_domain_loads_with_expected_slot_counts() {
        for d in DomainCategory::ALL {
            let s = PromptSet::bundled(d).unwrap();
            for f in PromptFamily::ALL {
                assert_eq!(s.get(f).example_slots.len(), f.slot_count());
            }
        }
    }

    #[test]
    fn markers_match_query_fixtures() {
        for d in DomainCategory::ALL {
            let s = PromptSet::bundled(d).unwrap();
            assert_eq!(s.step1.query_text, markers::STEP1_QUERY);
            assert_eq!(s.step2.query_text, markers::STEP2_QUERY);
            assert!(s.utility.query_text.ends_with(markers::UTILITY_QUERY_TAIL));
            assert!(s.profile.query_text.ends_with(markers::PROFILE_QUERY));
        }
    }

    #[test]
    fn step2_examples_in_order_and_sentence_last() {
        let s = set();
        let p = s
            .step2
            .render(&PromptInput::Sentence("The bar has a pool table.".into()))
            .unwrap();
        let mut last = 0;
        for i in 1..=8 {
            let at = p.find(&format!("Example {i}: ")).unwrap();
            assert!(at > last);
            last = at;
        }
        assert!(p.ends_with(
            "Now, read and process the following review sentence: The bar has a pool table."
        ));
        assert!(p.contains("polaroids, geometric shapes, synthetic materials"));
    }

    #[test]
    fn step1_contains_sushi_review() {
        let p = set()
            .step1
            .render(&PromptInput::Review("r".into()))
            .unwrap();
        assert!(p.contains("Really good sushi - in a strip mall in Bristol. Go figure."));
    }

    #[test]
    fn slot_mismatch() {
        let s = set();
        let three = &s.step2.example_slots[..3];
        assert!(matches!(
            render_prompt(&s.step2, three, &PromptInput::Sentence("x".into())),
            Err(GatewayError::SlotMismatch(_))
        ));
        assert!(matches!(
            s.step1.render_zero_shot(&PromptInput::Review("x".into())),
            Err(GatewayError::SlotMismatch(_))
        ));
        assert!(matches!(
            s.step2.render(&PromptInput::Review("x".into())),
            Err(GatewayError::SlotMismatch(_))
        ));
        assert!(matches!(
            render_prompt(
                &s.step2,
                &s.utility.example_slots,
                &PromptInput::Sentence("x".into())
            ),
            Err(GatewayError::SlotMismatch(_))
        ));
    }

    #[test]
    fn rendering_is_stable() {
        let s = set();
        let i = PromptInput::Topics(vec!["pool table".into()]);
        assert_eq!(s.profile.render(&i).unwrap(), s.profile.render(&i).unwrap());
        assert!(s
            .profile
            .render(&i)
            .unwrap()
            .ends_with("generate a user profile for the topics <pool table>."));
    }

    #[test]
    fn zero_shot_is_shorter_by_example_blocks() {
        let s = set();
        let i = PromptInput::Sentence("x".into());
        let full = s.step2.render(&i).unwrap();
        let zero = s.step2.render_zero_shot(&i).unwrap();
        let blocks: usize = s
            .step2
            .example_slots
            .iter()
            .enumerate()
            .map(|(k, e)| render_example(k + 1, e).len() + 2)
            .sum();
        assert_eq!(full.len(), zero.len() + blocks);
    }
}
