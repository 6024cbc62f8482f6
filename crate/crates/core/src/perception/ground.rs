use super::SceneObject;

pub const LABEL_SCORE: u32 = 3;
pub const SYNONYM_SCORE: u32 = 2;
pub const ATTRIBUTE_SCORE: u32 = 1;

fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Score of `phrase` against one object: label as a contiguous token run
/// scores 3, any synonym run scores 2 (once), each attribute word present
/// scores 1.
pub fn grounding_score(object: &SceneObject, phrase: &str) -> u32 {
    let words = tokens(phrase);
    let mut score = 0;
    if contains_run(&words, &tokens(&object.label)) {
        score += LABEL_SCORE;
    }
    if object.synonyms.iter().any(|s| contains_run(&words, &tokens(s))) {
        score += SYNONYM_SCORE;
    }
    for attr in &object.attributes {
        if contains_run(&words, &tokens(attr)) {
            score += ATTRIBUTE_SCORE;
        }
    }
    score
}

/// Ids of every object attaining the maximal positive score, in scene order.
pub fn ground_phrase(scene: &[SceneObject], phrase: &str) -> Vec<String> {
    let scores: Vec<u32> = scene.iter().map(|o| grounding_score(o, phrase)).collect();
    let best = scores.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Vec::new();
    }
    scene.iter().zip(&scores).filter(|(_, s)| **s == best).map(|(o, _)| o.id.clone()).collect()
}
