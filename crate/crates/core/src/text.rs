//! Small string helpers shared across modules.

/// Case-folded, whitespace-normalized form used as an identity key for aspects.
pub(crate) fn fold_key(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits text into sentences at `.`, `?` or `!` followed by whitespace or end of
/// input. The terminator stays with its sentence.
pub(crate) fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(c);
        if matches!(c, '.' | '?' | '!') {
            // keep runs like "?!" or "..." together
            while let Some(&n) = chars.peek() {
                if matches!(n, '.' | '?' | '!') {
                    cur.push(n);
                    chars.next();
                } else {
                    break;
                }
            }
            if chars.peek().is_none_or(|n| n.is_whitespace()) {
                let s = cur.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                cur.clear();
            }
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_key_normalizes_case_and_space() {
        assert_eq!(fold_key("  Pool   Table "), "pool table");
    }

    #[test]
    fn splits_on_terminators_followed_by_space() {
        let s = split_sentences("It costs $3.50 here. Really?! Yes");
        assert_eq!(s, vec!["It costs $3.50 here.", "Really?!", "Yes"]);
    }

    #[test]
    fn ellipsis_stays_inside_sentence() {
        let s = split_sentences("We tried the cheesecake...it was okay. Fine.");
        assert_eq!(s, vec!["We tried the cheesecake...it was okay.", "Fine."]);
    }
}
