use super::{InputText, ProviderKind, SentimentError, SentimentProvider, SentimentVector};
use crate::data::NewsArticle;

pub const POSITIVE_WORDS: [&str; 10] = [
    "profit", "rises", "beats", "strong", "growth", "gains", "upgrade", "record", "surge", "outperform",
];
pub const NEGATIVE_WORDS: [&str; 10] = [
    "loss", "falls", "misses", "weak", "decline", "downgrade", "lawsuit", "plunge", "cut", "underperform",
];
pub const NEUTRAL_WORDS: [&str; 10] = [
    "announces", "schedules", "reports", "maintains", "holds", "meeting", "conference", "update", "steady", "unchanged",
];

/// Word-count scorer with add-one smoothing.
///
/// Text with no lexicon hits has no evidence at all and scores exactly
/// (0, 0, 1) rather than the smoothed uniform vector.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexiconProvider {
    input: InputText,
}

impl LexiconProvider {
    pub fn new(input: InputText) -> Self {
        Self { input }
    }

    pub fn counts(text: &str) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let token = token.to_lowercase();
            for (k, words) in [&POSITIVE_WORDS, &NEGATIVE_WORDS, &NEUTRAL_WORDS].iter().enumerate() {
                if words.contains(&token.as_str()) {
                    counts[k] += 1;
                }
            }
        }
        counts
    }

    pub fn score_text(text: &str) -> SentimentVector {
        let c = Self::counts(text);
        let total: usize = c.iter().sum();
        if total == 0 {
            return SentimentVector::NEUTRAL;
        }
        let denom = (total + 3) as f64;
        let p = c.map(|n| (n + 1) as f64 / denom);
        // Renormalise the last coordinate so the sum is exact.
        SentimentVector {
            p_positive: p[0],
            p_negative: p[1],
            p_neutral: 1.0 - p[0] - p[1],
        }
    }
}

impl SentimentProvider for LexiconProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Lexicon
    }

    fn score(&self, article: &NewsArticle) -> Result<SentimentVector, SentimentError> {
        Ok(Self::score_text(&self.input.text(article)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_ignore_case_and_punctuation() {
        assert_eq!(LexiconProvider::counts("Profit RISES, loss; meeting."), [2, 1, 1]);
    }

    #[test]
    fn no_hits_is_neutral() {
        assert_eq!(LexiconProvider::score_text(""), SentimentVector::NEUTRAL);
        assert_eq!(LexiconProvider::score_text("the quarter"), SentimentVector::NEUTRAL);
    }

    #[test]
    fn smoothing() {
        let v = LexiconProvider::score_text("loss");
        assert_eq!(v.p_negative, 0.5);
        assert_eq!(v.p_positive, 0.25);
        assert_eq!(v.p_neutral, 0.25);
    }
}
