use super::{CommandError, Intent};

pub const ENABLE_VERBS: [&str; 4] = ["avoid", "add", "enable", "watch"];
pub const DISABLE_VERBS: [&str; 4] = ["remove", "disable", "ignore", "clear"];

/// Filler words dropped from object phrases.
const STOPWORDS: [&str; 14] = [
    "the", "a", "an", "for", "collision", "collisions", "avoidance", "please", "to", "with", "of", "on", "my", "that",
];

/// Largest normalized edit distance accepted as a transcription slip.
pub const FUZZY_THRESHOLD: f64 = 0.34;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Enable,
    Disable,
}

/// Rule grammar: a verb opens a list of object phrases separated by "and" or
/// commas; a later verb switches the list. Phrases are fuzzy-corrected
/// against `vocabulary`.
pub fn parse_transcript(text: &str, vocabulary: &[String]) -> Result<Intent, CommandError> {
    let normalized = text.to_lowercase().replace(',', " , ");
    let mut mode = None;
    let mut current: Vec<&str> = Vec::new();
    let mut intent = Intent { enable: Vec::new(), disable: Vec::new(), raw_text: text.to_string() };

    let flush = |mode: Option<Mode>, words: &mut Vec<&str>, intent: &mut Intent| {
        if let (Some(m), false) = (mode, words.is_empty()) {
            let phrase = correct_phrase(&words.join(" "), vocabulary);
            let list = if m == Mode::Enable { &mut intent.enable } else { &mut intent.disable };
            if !list.contains(&phrase) {
                list.push(phrase);
            }
        }
        words.clear();
    };

    for raw in normalized.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric() && c != ',');
        if word.is_empty() {
            continue;
        }
        if ENABLE_VERBS.contains(&word) || DISABLE_VERBS.contains(&word) {
            flush(mode, &mut current, &mut intent);
            mode = Some(if ENABLE_VERBS.contains(&word) { Mode::Enable } else { Mode::Disable });
        } else if word == "and" || word == "," {
            flush(mode, &mut current, &mut intent);
        } else if !STOPWORDS.contains(&word) {
            current.push(word);
        }
    }
    flush(mode, &mut current, &mut intent);

    if mode.is_none() {
        return Err(CommandError::Unparseable(text.to_string()));
    }
    if intent.enable.is_empty() && intent.disable.is_empty() {
        return Err(CommandError::Unparseable(text.to_string()));
    }
    Ok(intent)
}

/// Exact vocabulary hits pass through; otherwise the nearest entry within
/// [`FUZZY_THRESHOLD`] wins, then a unique phonetic-key match; otherwise the
/// phrase is kept as heard.
pub fn correct_phrase(phrase: &str, vocabulary: &[String]) -> String {
    if vocabulary.iter().any(|v| v == phrase) {
        return phrase.to_string();
    }
    if let Some(v) = fuzzy_match(phrase, vocabulary) {
        return v.to_string();
    }
    if let Some(v) = phonetic_match(phrase, vocabulary) {
        return v.to_string();
    }
    phrase.to_string()
}

/// Vocabulary entry with the smallest normalized edit distance, if within
/// the threshold. Ties go to the earlier entry.
pub fn fuzzy_match<'a>(phrase: &str, vocabulary: &'a [String]) -> Option<&'a str> {
    vocabulary
        .iter()
        .map(|v| (normalized_edit_distance(phrase, v), v))
        .filter(|(d, _)| *d <= FUZZY_THRESHOLD)
        .fold(None, |best: Option<(f64, &String)>, (d, v)| match best {
            Some((bd, _)) if bd <= d => best,
            _ => Some((d, v)),
        })
        .map(|(_, v)| v.as_str())
}

/// The only vocabulary entry with the same word count sharing the phrase's
/// phonetic key. Keys are truncated, so longer entries would collide with
/// their own head word.
pub fn phonetic_match<'a>(phrase: &str, vocabulary: &'a [String]) -> Option<&'a str> {
    let key = phonetic_key(phrase);
    if key.is_empty() {
        return None;
    }
    let words = phrase.split_whitespace().count();
    let mut hits = vocabulary.iter().filter(|v| v.split_whitespace().count() == words && phonetic_key(v) == key);
    match (hits.next(), hits.next()) {
        (Some(v), None) => Some(v.as_str()),
        _ => None,
    }
}

/// Levenshtein distance over chars divided by the longer length.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let next = (row[j + 1] + 1).min(row[j] + 1).min(diag + usize::from(ca != cb));
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()] as f64 / longest as f64
}

/// Four-letter consonant skeleton: first letter kept, then vowels, `h`, `w`
/// and `y` dropped, a nasal directly before another consonant dropped, and
/// repeats collapsed. "monster" and "mustard" both give `MSTR`.
pub fn phonetic_key(phrase: &str) -> String {
    let letters: Vec<char> = phrase.chars().filter(|c| c.is_ascii_alphabetic()).map(|c| c.to_ascii_uppercase()).collect();
    let Some((&first, rest)) = letters.split_first() else { return String::new() };
    let consonants: Vec<char> = rest.iter().copied().filter(|c| !"AEIOUHWY".contains(*c)).collect();
    let mut key = vec![first];
    for (i, &c) in consonants.iter().enumerate() {
        let nasal_cluster = (c == 'M' || c == 'N') && i + 1 < consonants.len();
        if nasal_cluster || key.last() == Some(&c) {
            continue;
        }
        key.push(c);
    }
    key.into_iter().take(4).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn kitchen() -> Vec<String> {
        vocab(&["box", "crate", "ketchup", "ketchup bottle", "mustard", "mustard bottle", "red sauce", "yellow sauce"])
    }

    #[test]
    fn spoken_commands() {
        let v = kitchen();
        let i = parse_transcript("add collision for the red sauce", &v).unwrap();
        assert_eq!((i.enable, i.disable), (vec!["red sauce".to_string()], vec![]));
        let i = parse_transcript("remove ketchup", &v).unwrap();
        assert_eq!((i.enable, i.disable), (vec![], vec!["ketchup".to_string()]));
        let i = parse_transcript("avoid the yellow sauce and the red box", &v).unwrap();
        assert_eq!(i.enable, vec!["yellow sauce", "red box"]);
        let i = parse_transcript("avoid the monster", &v).unwrap();
        assert_eq!(i.enable, vec!["mustard"]);
    }

    #[test]
    fn verbs_switch_mid_utterance() {
        let i = parse_transcript("Avoid the box, the crate and remove ketchup, please", &kitchen()).unwrap();
        assert_eq!(i.enable, vec!["box", "crate"]);
        assert_eq!(i.disable, vec!["ketchup"]);
        assert_eq!(i.raw_text, "Avoid the box, the crate and remove ketchup, please");
    }

    #[test]
    fn no_verb_is_unparseable() {
        assert!(matches!(parse_transcript("the red box", &kitchen()), Err(CommandError::Unparseable(t)) if t == "the red box"));
        assert!(matches!(parse_transcript("avoid the", &kitchen()), Err(CommandError::Unparseable(_))));
    }

    #[test]
    fn edit_distance_oracle_on_monster() {
        // The nearest entry by edit distance is mustard, but too far to accept.
        let v = kitchen();
        let nearest = v.iter().min_by(|a, b| normalized_edit_distance("monster", a).total_cmp(&normalized_edit_distance("monster", b))).unwrap();
        assert_eq!(nearest, "mustard");
        assert_eq!(levenshtein("monster", "mustard"), 4);
        assert!((normalized_edit_distance("monster", "mustard") - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(fuzzy_match("monster", &v), None);
        assert_eq!(phonetic_key("monster"), "MSTR");
        assert_eq!(phonetic_key("mustard"), "MSTR");
        assert_eq!(phonetic_match("monster", &v), Some("mustard"));
    }

    #[test]
    fn small_slips_are_fuzzy_corrected() {
        assert_eq!(fuzzy_match("catchup", &kitchen()), Some("ketchup"));
        assert_eq!(correct_phrase("ketchap", &kitchen()), "ketchup");
        assert_eq!(correct_phrase("spaceship", &kitchen()), "spaceship");
    }

    #[test]
    fn ambiguous_phonetic_key_is_not_used() {
        assert_eq!(phonetic_match("monster", &vocab(&["mustard", "minster"])), None);
    }

    /// Classic full-matrix Levenshtein, as an independent oracle.
    fn levenshtein(a: &str, b: &str) -> usize {
        let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            m[i][0] = i;
        }
        for j in 0..=b.len() {
            m[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = m[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                m[i][j] = sub.min(m[i - 1][j] + 1).min(m[i][j - 1] + 1);
            }
        }
        m[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn edit_distance_matches_matrix(a in "[a-z ]{0,12}", b in "[a-z ]{0,12}") {
            let n = a.chars().count().max(b.chars().count());
            let expected = if n == 0 { 0.0 } else { levenshtein(&a, &b) as f64 / n as f64 };
            prop_assert!((normalized_edit_distance(&a, &b) - expected).abs() < 1e-12);
        }

        #[test]
        fn idempotent_on_output_phrases(words in prop::collection::vec("[a-z]{3,8}", 1..4)) {
            let v = kitchen();
            if let Ok(first) = parse_transcript(&format!("avoid {}", words.join(" and ")), &v) {
                let again = parse_transcript(&format!("avoid {}", first.enable.join(" and ")), &v).unwrap();
                prop_assert_eq!(again.enable, first.enable);
            }
        }
    }
}
