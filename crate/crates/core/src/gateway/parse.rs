//! Parsers for model completions. They tolerate surrounding prose but insist
//! on the tags each prompt asks for.

use std::sync::LazyLock;

use regex::Regex;

use super::GatewayError;
use crate::corpus::UtilityLabel;
use crate::text::split_sentences;

static LINE_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:(?i:output)\s*\d*\s*:\s*|[-*•]\s+|\d+[.)]\s+)").expect("valid regex")
});
static STEP2_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<\s*(pos|neg)\s*>").expect("valid regex"));
static ASPECTS_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)atypical\s+aspects?\s*:").expect("valid regex"));
static UTILITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"A'\s*=\s*\[?\s*\(\s*["“]([^"”]*)["”]\s*,\s*["“]([^"”]*)["”]\s*\)\s*\]?"#)
        .expect("valid regex")
});
static EXPLANATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)explanation\s*[:=]\s*").expect("valid regex"));

/// Splits a reformulation completion into sentences, dropping list bullets and
/// `Output N:` prefixes.
pub fn parse_step1(response: &str) -> Result<Vec<String>, GatewayError> {
    let mut out = Vec::new();
    for line in response.lines() {
        let line = LINE_PREFIX.replace(line, "");
        out.extend(split_sentences(&line));
    }
    if out.is_empty() {
        return Err(GatewayError::EmptyOutput);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step2Parse {
    pub positive: bool,
    pub aspects: Vec<String>,
}

fn is_none_marker(s: &str) -> bool {
    let t = s
        .trim()
        .trim_matches(|c: char| c == '.' || c == '"' || c == '\'');
    ["<none>", "none", "n/a", "[]"].contains(&t.to_lowercase().as_str())
}

fn clean_aspect(s: &str) -> String {
    s.trim()
        .trim_start_matches(['-', '*', '•'])
        .trim()
        .trim_end_matches('.')
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '“' | '”' | '[' | ']' | '<' | '>'))
        .trim_end_matches('.')
        .trim()
        .to_string()
}

/// Reads the first `<pos>`/`<neg>` tag and the aspect list that follows it.
pub fn parse_step2(response: &str) -> Result<Step2Parse, GatewayError> {
    let m = STEP2_TAG
        .captures(response)
        .ok_or_else(|| GatewayError::UnparseableResponse("no <pos> or <neg> tag".into()))?;
    let positive = m[1].eq_ignore_ascii_case("pos");
    let rest = &response[m.get(0).expect("whole match").end()..];
    let listed = ASPECTS_LABEL.find(rest).map(|l| &rest[l.end()..]);
    let list_text = match (listed, positive) {
        (Some(t), _) => t,
        (None, true) => rest,
        (None, false) => "",
    };
    let line = list_text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let aspects: Vec<String> = if is_none_marker(line) {
        Vec::new()
    } else {
        line.split(',')
            .map(clean_aspect)
            .filter(|a| !a.is_empty() && !is_none_marker(a))
            .collect()
    };
    match (positive, aspects.is_empty()) {
        (true, true) => Err(GatewayError::InconsistentResponse(
            "<pos> without aspects".into(),
        )),
        (false, false) => Err(GatewayError::InconsistentResponse(format!(
            "<neg> with aspects {aspects:?}"
        ))),
        _ => Ok(Step2Parse { positive, aspects }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtilityParse {
    pub aspect: String,
    pub label: UtilityLabel,
    /// Free-text rationale, kept for audit and never interpreted.
    pub explanation: Option<String>,
}

/// Reads the `A' = [("aspect", "Label")]` pair and the explanation after it.
pub fn parse_utility(response: &str) -> Result<UtilityParse, GatewayError> {
    let c = UTILITY.captures(response).ok_or_else(|| {
        GatewayError::UnparseableResponse("no A' = [(\"aspect\", \"label\")] pair".into())
    })?;
    let aspect = c[1].trim().to_string();
    let raw = c[2].trim();
    let label =
        UtilityLabel::from_name(raw).ok_or_else(|| GatewayError::UnknownLabel(raw.to_string()))?;
    let tail = &response[c.get(0).expect("whole match").end()..];
    let explanation = match EXPLANATION.find(tail) {
        Some(m) => Some(tail[m.end()..].trim().to_string()),
        None => Some(tail.trim().to_string()),
    }
    .filter(|s| !s.is_empty());
    Ok(UtilityParse {
        aspect,
        label,
        explanation,
    })
}

/// Extracts the biography from a profile-generation completion.
pub fn parse_profile(response: &str) -> Result<String, GatewayError> {
    const LEAD: &str = "a good biography would be:";
    let lower = response.to_lowercase();
    let body = match lower.rfind(LEAD) {
        Some(i) => &response[i + LEAD.len()..],
        None => response,
    };
    let bio = body.trim().trim_matches('"').trim().to_string();
    if bio.is_empty() {
        return Err(GatewayError::EmptyOutput);
    }
    Ok(bio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step1_two_sentences() {
        let s = parse_step1("The restaurant has a pool table. They sell hats.").unwrap();
        assert_eq!(
            s,
            vec!["The restaurant has a pool table.", "They sell hats."]
        );
    }

    #[test]
    fn step1_empty() {
        assert!(matches!(parse_step1(""), Err(GatewayError::EmptyOutput)));
        assert!(matches!(
            parse_step1("  \n "),
            Err(GatewayError::EmptyOutput)
        ));
    }

    #[test]
    fn step1_sushi_output() {
        let out = "The restaurant has really good sushi. The restaurant is in a strip mall in Bristol. The restaurant has hibachi. This is a mom-and-pop type restaurant with a friendly atmosphere. If you're there for a special occasion, they'll take a polaroid and add it to their wall.";
        assert_eq!(parse_step1(out).unwrap().len(), 5);
        assert_eq!(
            parse_step1(&format!("Output 1: {out}")).unwrap()[0],
            "The restaurant has really good sushi."
        );
    }

    #[test]
    fn step1_bullets() {
        let s = parse_step1("- The bar has darts.\n2. It has a rooftop\n* Output").unwrap();
        assert_eq!(s, vec!["The bar has darts.", "It has a rooftop", "Output"]);
    }

    #[test]
    fn step2_forms() {
        let p = parse_step2("Classification: <pos> Atypical Aspects: garden, art").unwrap();
        assert_eq!(
            p,
            Step2Parse {
                positive: true,
                aspects: vec!["garden".into(), "art".into()]
            }
        );
        let n = parse_step2("Classification: <neg> Atypical Aspects: <None>").unwrap();
        assert_eq!(
            n,
            Step2Parse {
                positive: false,
                aspects: vec![]
            }
        );
        let bare = parse_step2("<pos> life size beer pong, pool table").unwrap();
        assert_eq!(bare.aspects, vec!["life size beer pong", "pool table"]);
        let multi = parse_step2(
            "Sure!\nClassification: <POS>\nAtypical Aspects:\n\"gift shop\", \"shawls\".",
        )
        .unwrap();
        assert_eq!(multi.aspects, vec!["gift shop", "shawls"]);
        assert!(
            !parse_step2("<neg> This sentence only describes food.")
                .unwrap()
                .positive
        );
    }

    #[test]
    fn step2_errors() {
        assert!(matches!(
            parse_step2("no tags here"),
            Err(GatewayError::UnparseableResponse(_))
        ));
        assert!(matches!(
            parse_step2("Classification: <pos> Atypical Aspects: <None>"),
            Err(GatewayError::InconsistentResponse(_))
        ));
        assert!(matches!(
            parse_step2("Classification: <neg> Atypical Aspects: garden"),
            Err(GatewayError::InconsistentResponse(_))
        ));
    }

    #[test]
    fn utility_forms() {
        let r = parse_utility("A' = [(\"yoga & meditation\", \"High\")]\nExplanation: matches.")
            .unwrap();
        assert_eq!(r.aspect, "yoga & meditation");
        assert_eq!(r.label, UtilityLabel::High);
        assert_eq!(r.explanation.as_deref(), Some("matches."));
        let n = parse_utility("Output: A' = [(\"piano room\", \"None\")]").unwrap();
        assert_eq!(
            (n.aspect.as_str(), n.label),
            ("piano room", UtilityLabel::None)
        );
        assert!(n.explanation.is_none());
        let loose = parse_utility("A' = (\"lime green counter\", \"low\")").unwrap();
        assert_eq!(loose.label, UtilityLabel::Low);
    }

    #[test]
    fn utility_errors() {
        assert!(
            matches!(parse_utility("A' = [(\"x\", \"Highest\")]"), Err(GatewayError::UnknownLabel(l)) if l == "Highest")
        );
        assert!(matches!(
            parse_utility("High"),
            Err(GatewayError::UnparseableResponse(_))
        ));
    }

    #[test]
    fn profile_biography() {
        let b = parse_profile(
            "Let's think step by step.\nSo, a good biography would be: Sam likes darts.",
        )
        .unwrap();
        assert_eq!(b, "Sam likes darts.");
        assert_eq!(parse_profile("Just a bio.").unwrap(), "Just a bio.");
        assert!(parse_profile("So, a good biography would be:  ").is_err());
    }
}
