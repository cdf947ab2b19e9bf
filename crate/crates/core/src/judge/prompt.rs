//! Prediction prompt rendering and answer parsing.

use crate::corpus::{MultipleChoiceQuestion, TemplateId};

/// Render the future-activity prediction prompt for one question.
///
/// The wording (including the "Base on this information" phrasing) is
/// fixed; golden-file tests pin every byte. Choices are rendered as
/// four lines "A. name" through "D. name".
pub fn build_prediction_prompt(
    summary_text: &str,
    mcq: &MultipleChoiceQuestion,
    template: TemplateId,
) -> String {
    let (noun_phrase, question) = match template {
        TemplateId::Movies => ("movie watch", "which movie will I watch next"),
        TemplateId::Products => ("product purchase", "which product will I purchase next"),
        TemplateId::Places => ("place visit", "which place will I visit next"),
    };
    let choices = mcq
        .choices
        .iter()
        .zip(["A", "B", "C", "D"])
        .map(|(name, letter)| format!("{letter}. {name}"))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "Here is a summary of my {noun_phrase} preference (between <summary> and </summary>).\n\
         <summary>{summary_text}</summary>.\n\
         Base on this information, {question}? Choose one from the following options:\n\
         {choices}\n\
         Structure the answer with '[Index of your choice(A/B/C/D)]'.\n\
         Answer:"
    )
}

/// Extract an option index from a predictor response.
///
/// Grammar, in priority order:
/// 1. the first bracketed single letter `[a]`..`[d]` (any case, inner
///    whitespace allowed);
/// 2. the first standalone letter token a/b/c/d, where standalone
///    means delimited by non-alphanumeric characters.
///
/// Returns `None` when neither form appears.
pub fn parse_choice(response_text: &str) -> Option<usize> {
    fn letter_index(s: &str) -> Option<usize> {
        let mut chars = s.chars();
        let c = chars.next()?;
        if chars.next().is_some() {
            return None;
        }
        match c.to_ascii_lowercase() {
            'a' => Some(0),
            'b' => Some(1),
            'c' => Some(2),
            'd' => Some(3),
            _ => None,
        }
    }

    let mut rest = response_text;
    while let Some(open) = rest.find('[') {
        let tail = &rest[open + 1..];
        match tail.find(']') {
            Some(close) => {
                if let Some(idx) = letter_index(tail[..close].trim()) {
                    return Some(idx);
                }
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }

    response_text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .find_map(letter_index)
}
