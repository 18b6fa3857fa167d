/// Longest run of one character that survives normalization.
pub const MAX_REPEAT: usize = 2;

/// Collapses every run of more than two identical characters down to two.
///
/// `"heyyyy"` becomes `"heyy"`; everything else is left untouched. Idempotent.
pub fn normalize_repeats(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in text.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= MAX_REPEAT {
            out.push(c);
        }
    }
    out
}

/// Normalizes text typed into the compose box so it can be matched against
/// stored phrases: leading whitespace trimmed, lowercased, repeats collapsed
/// and inner whitespace runs folded to one space. Trailing spaces are kept,
/// since "good " and "good" select different phrase sets.
pub fn normalize_typed(typed: &str) -> String {
    let lowered = normalize_repeats(&typed.trim_start().to_lowercase());
    let mut out = String::with_capacity(lowered.len());
    let mut in_space = false;
    for c in lowered.chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent reference: split into maximal runs first, then clamp each.
    fn runs_reference(text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::new();
        let mut i = 0;
        while i < chars.len() {
            let mut j = i;
            while j < chars.len() && chars[j] == chars[i] {
                j += 1;
            }
            for _ in 0..(j - i).min(2) {
                out.push(chars[i]);
            }
            i = j;
        }
        out
    }

    #[test]
    fn collapses_long_runs() {
        assert_eq!(normalize_repeats("heyyyy"), "heyy");
        assert_eq!(normalize_repeats("ok"), "ok");
        assert_eq!(normalize_repeats(""), "");
        assert_eq!(normalize_repeats("goooood mrngggg :)))"), "good mrngg :))");
        assert_eq!(runs_reference("goooood mrngggg :)))"), "good mrngg :))");
    }

    #[test]
    fn typed_text_normalization() {
        assert_eq!(normalize_typed("  Good  Morninggg"), "good morningg");
        assert_eq!(normalize_typed("good "), "good ");
        assert_eq!(normalize_typed(""), "");
    }

    proptest! {
        #[test]
        fn idempotent(s in "[a-c :)]{0,40}") {
            let once = normalize_repeats(&s);
            prop_assert_eq!(normalize_repeats(&once), once.clone());
            prop_assert_eq!(once, runs_reference(&s));
        }

        #[test]
        fn idempotent_unicode(s in "\\PC{0,30}") {
            let once = normalize_repeats(&s);
            prop_assert_eq!(normalize_repeats(&once), once);
        }
    }
}
