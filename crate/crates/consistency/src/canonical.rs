//! Textual answer canonicalization.
//!
//! [`canonicalize_answer`] maps an answer string to a canonical form so that
//! trivially different spellings of the same answer ("2", " two.", "\"2\"")
//! compare equal before any LLM judge gets involved. The full transform is
//! iterated to a fixpoint, so the function is idempotent:
//! `canonicalize_answer(canonicalize_answer(x)) == canonicalize_answer(x)`.

use unicode_normalization::UnicodeNormalization;

/// English number words mapped to digit strings. Only standalone words are
/// replaced; compounds like "twenty-one" are left alone.
const NUMBER_WORDS: [(&str, &str); 21] = [
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
    ("eleven", "11"),
    ("twelve", "12"),
    ("thirteen", "13"),
    ("fourteen", "14"),
    ("fifteen", "15"),
    ("sixteen", "16"),
    ("seventeen", "17"),
    ("eighteen", "18"),
    ("nineteen", "19"),
    ("twenty", "20"),
];

const QUOTE_CHARS: [char; 6] = ['"', '\'', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
const TERMINAL_PUNCT: [char; 6] = ['.', ',', ';', ':', '!', '?'];

/// Reduces an answer to its canonical comparison form.
///
/// The transform applies, in order: Unicode NFKC normalization, lowercasing,
/// whitespace collapsing, stripping of surrounding quotes and terminal
/// punctuation, removal of thousands separators between digits, and mapping
/// of standalone English number words zero through twenty to digits. Empty
/// input canonicalizes to the empty string.
pub fn canonicalize_answer(raw: &str) -> String {
    let mut current = raw.to_string();
    // A handful of rounds always reaches the fixpoint; the cap guards
    // against pathological interactions ever looping.
    for _ in 0..8 {
        let next = transform_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn transform_once(input: &str) -> String {
    let normalized: String = input.nfkc().collect();
    let lowered = normalized.to_lowercase();
    let collapsed = collapse_whitespace(&lowered);
    let stripped = strip_wrapping(&collapsed);
    let unseparated = remove_digit_group_commas(&stripped);
    replace_number_words(&unseparated)
}

/// Trims the ends and collapses every interior whitespace run to one space.
fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_gap = false;
    for ch in s.trim().chars() {
        if ch.is_whitespace() {
            in_gap = true;
        } else {
            if in_gap && !out.is_empty() {
                out.push(' ');
            }
            in_gap = false;
            out.push(ch);
        }
    }
    out
}

/// Repeatedly strips a quote pair wrapping the whole string and any
/// terminal punctuation, until neither applies.
fn strip_wrapping(s: &str) -> String {
    let mut current = s.trim().to_string();
    loop {
        let before = current.len();

        let chars: Vec<char> = current.chars().collect();
        if chars.len() >= 2
            && QUOTE_CHARS.contains(&chars[0])
            && QUOTE_CHARS.contains(chars.last().unwrap())
        {
            current = chars[1..chars.len() - 1].iter().collect();
            current = current.trim().to_string();
        }

        while let Some(last) = current.chars().last() {
            if TERMINAL_PUNCT.contains(&last) {
                current.pop();
                current = current.trim_end().to_string();
            } else {
                break;
            }
        }

        if current.len() == before {
            break;
        }
    }
    current
}

/// Drops commas that sit directly between two ASCII digits, so "1,234"
/// and "1234" compare equal.
fn remove_digit_group_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &ch) in chars.iter().enumerate() {
        if ch == ','
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit()
        {
            continue;
        }
        out.push(ch);
    }
    out
}

/// Replaces standalone number-word tokens with digits. A token is a maximal
/// run of alphabetic characters and hyphens, so "twenty-one" is a single
/// token and stays untouched.
fn replace_number_words(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut token = String::new();
    for ch in s.chars() {
        if ch.is_alphabetic() || ch == '-' {
            token.push(ch);
        } else {
            if !token.is_empty() {
                out.push_str(map_token(&token));
                token.clear();
            }
            out.push(ch);
        }
    }
    if !token.is_empty() {
        out.push_str(map_token(&token));
    }
    out
}

fn map_token(token: &str) -> &str {
    for (word, digits) in NUMBER_WORDS {
        if token == word {
            return digits;
        }
    }
    token
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_noise_around_short_answers() {
        assert_eq!(
            canonicalize_answer("  The answer is: 2. "),
            "the answer is: 2"
        );
        assert_eq!(canonicalize_answer("\"42\""), "42");
        assert_eq!(canonicalize_answer("4!"), "4");
        assert_eq!(canonicalize_answer("x = 7;"), "x = 7");
    }

    #[test]
    fn maps_standalone_number_words() {
        assert_eq!(canonicalize_answer("Two"), "2");
        assert_eq!(canonicalize_answer("the answer is two"), "the answer is 2");
        assert_eq!(canonicalize_answer("twenty"), "20");
    }

    #[test]
    fn leaves_compound_number_words_alone() {
        assert_eq!(canonicalize_answer("twenty-one"), "twenty-one");
        assert_eq!(canonicalize_answer("someone"), "someone");
        assert_eq!(canonicalize_answer("onerous"), "onerous");
    }

    #[test]
    fn removes_thousands_separators_only_between_digits() {
        assert_eq!(canonicalize_answer("1,234 apples"), "1234 apples");
        assert_eq!(canonicalize_answer("1,234,567"), "1234567");
        assert_eq!(canonicalize_answer("apples, oranges"), "apples, oranges");
    }

    #[test]
    fn collapses_whitespace_runs() {
        assert_eq!(canonicalize_answer("a \t b\n\nc"), "a b c");
        assert_eq!(canonicalize_answer("   "), "");
        assert_eq!(canonicalize_answer(""), "");
    }

    #[test]
    fn applies_unicode_compatibility_normalization() {
        // Fullwidth digits and letters fold to ASCII under NFKC.
        assert_eq!(canonicalize_answer("４２"), "42");
        assert_eq!(canonicalize_answer("ＡＢＣ"), "abc");
        // The telephone sign expands to "tel".
        assert_eq!(canonicalize_answer("\u{2121}"), "tel");
    }

    #[test]
    fn equates_known_aliases() {
        let pairs = [
            ("2", " Two. "),
            ("1,000", "1000"),
            ("\u{201c}Paris\u{201d}", "paris"),
            ("YES!", "yes"),
        ];
        for (a, b) in pairs {
            assert_eq!(
                canonicalize_answer(a),
                canonicalize_answer(b),
                "expected {a:?} and {b:?} to share a canonical form"
            );
        }
    }

    #[test]
    fn quote_stripping_needs_both_ends() {
        assert_eq!(canonicalize_answer("\"partial"), "\"partial");
        assert_eq!(canonicalize_answer("partial\""), "partial\"");
    }

    #[test]
    fn nested_wrapping_unwinds_to_fixpoint() {
        assert_eq!(canonicalize_answer("\"'42.'\""), "42");
        assert_eq!(canonicalize_answer("'answer...'"), "answer");
    }

    proptest! {
        #[test]
        fn canonicalization_is_idempotent(s in "\\PC{0,64}") {
            let once = canonicalize_answer(&s);
            let twice = canonicalize_answer(&once);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn canonicalization_never_panics(s in ".{0,128}") {
            let _ = canonicalize_answer(&s);
        }
    }
}
