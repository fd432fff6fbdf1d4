//! Extraction of the reported delay, in minutes, from a congestion event's
//! free-text description.
//!
//! The reported phrasing is "delay(s) of N minute(s)" where N is either a
//! digit form (possibly fractional) or a number word from one to
//! ninety-nine, hyphenated or space-separated. The first parseable mention
//! wins. Matching is case-insensitive and tolerant of extra whitespace.

use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DelayError {
    #[error("no delay mention found in description")]
    NoDelayMention,
}

fn delay_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bdelays?\s+of\s+([0-9]+(?:\.[0-9]+)?|[a-z]+(?:[\s-][a-z]+)?)\s+minutes?\b")
            .expect("static delay pattern compiles")
    })
}

const UNITS: [(&str, u32); 9] = [
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
];

const TEENS: [(&str, u32); 10] = [
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
    ("thirteen", 13),
    ("fourteen", 14),
    ("fifteen", 15),
    ("sixteen", 16),
    ("seventeen", 17),
    ("eighteen", 18),
    ("nineteen", 19),
];

const TENS: [(&str, u32); 8] = [
    ("twenty", 20),
    ("thirty", 30),
    ("forty", 40),
    ("fifty", 50),
    ("sixty", 60),
    ("seventy", 70),
    ("eighty", 80),
    ("ninety", 90),
];

/// Parses a number word in one..=ninety-nine ("nine", "twenty-two",
/// "thirty five").
pub fn number_word(word: &str) -> Option<u32> {
    let w = word.trim().to_ascii_lowercase();
    let lookup = |s: &str| {
        UNITS
            .iter()
            .chain(TEENS.iter())
            .chain(TENS.iter())
            .find(|(name, _)| *name == s)
            .map(|(_, v)| *v)
    };
    if let Some(v) = lookup(&w) {
        return Some(v);
    }
    let parts: Vec<&str> = w.split(['-', ' ']).filter(|p| !p.is_empty()).collect();
    if parts.len() == 2 {
        let tens = TENS.iter().find(|(name, _)| *name == parts[0])?.1;
        let unit = UNITS.iter().find(|(name, _)| *name == parts[1])?.1;
        return Some(tens + unit);
    }
    None
}

/// Returns the first delay mentioned in the description, in minutes.
pub fn extract_delay(description: &str) -> Result<f64, DelayError> {
    for caps in delay_regex().captures_iter(description) {
        let token = caps.get(1).expect("capture group 1").as_str();
        if let Ok(v) = token.parse::<f64>() {
            if v >= 0.0 && v.is_finite() {
                return Ok(v);
            }
            continue;
        }
        if let Some(v) = number_word(token) {
            return Ok(v as f64);
        }
        // a two-word capture like "about five" may hide a plain number word
        if let Some(last) = token.split([' ', '-']).next_back() {
            if let Some(v) = number_word(last) {
                return Ok(v as f64);
            }
        }
    }
    Err(DelayError::NoDelayMention)
}
