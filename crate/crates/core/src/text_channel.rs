//! Text-level channel error injection.
//!
//! A caption crosses the acoustic link as printable ASCII. The channel
//! corrupts it with exactly one of three impairments, each affecting an
//! exact number of units (`affected_count`) picked by a seeded partial
//! Fisher–Yates shuffle:
//!
//! 1. random character substitution,
//! 2. character deletion,
//! 3. whole-word deletion.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{sample_indices, SplitMix64};

const PRINTABLE_LO: u8 = 0x20;
const PRINTABLE_HI: u8 = 0x7E;
const PRINTABLE_SPAN: u64 = (PRINTABLE_HI - PRINTABLE_LO + 1) as u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("error ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),
    #[error("cannot select {k} positions out of {n}")]
    TooManyPositions { n: usize, k: usize },
    #[error("unknown error type {0} (expected 1, 2 or 3)")]
    UnknownErrorType(u8),
}

/// A sanitized caption payload. Content is printable ASCII only, so one
/// character is one byte on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct TextMessage {
    content: String,
}

impl TextMessage {
    pub fn as_str(&self) -> &str {
        &self.content
    }

    pub fn char_count(&self) -> usize {
        self.content.len()
    }

    pub fn byte_count(&self) -> usize {
        self.content.len()
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }

    pub fn into_string(self) -> String {
        self.content
    }

    /// Wraps content already known to be printable ASCII.
    fn from_sanitized(content: String) -> Self {
        debug_assert!(content.bytes().all(is_printable));
        Self { content }
    }
}

impl From<String> for TextMessage {
    fn from(raw: String) -> Self {
        sanitize(&raw)
    }
}

impl From<&str> for TextMessage {
    fn from(raw: &str) -> Self {
        sanitize(raw)
    }
}

impl From<TextMessage> for String {
    fn from(msg: TextMessage) -> Self {
        msg.content
    }
}

impl fmt::Display for TextMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.content)
    }
}

fn is_printable(b: u8) -> bool {
    (PRINTABLE_LO..=PRINTABLE_HI).contains(&b)
}

/// Replaces every run of characters outside 0x20..=0x7E with one space.
pub fn sanitize(raw: &str) -> TextMessage {
    let mut out = String::with_capacity(raw.len());
    let mut in_run = false;
    for c in raw.chars() {
        if c.is_ascii() && is_printable(c as u8) {
            out.push(c);
            in_run = false;
        } else if !in_run {
            out.push(' ');
            in_run = true;
        }
    }
    TextMessage::from_sanitized(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ErrorType {
    CharSubstitution = 1,
    CharDeletion = 2,
    WordDeletion = 3,
}

impl ErrorType {
    pub const ALL: [ErrorType; 3] = [
        ErrorType::CharSubstitution,
        ErrorType::CharDeletion,
        ErrorType::WordDeletion,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorType::CharSubstitution => "random character substitution",
            ErrorType::CharDeletion => "character deletion",
            ErrorType::WordDeletion => "words deleted",
        }
    }
}

impl TryFrom<u8> for ErrorType {
    type Error = ChannelError;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        match code {
            1 => Ok(ErrorType::CharSubstitution),
            2 => Ok(ErrorType::CharDeletion),
            3 => Ok(ErrorType::WordDeletion),
            other => Err(ChannelError::UnknownErrorType(other)),
        }
    }
}

impl From<ErrorType> for u8 {
    fn from(t: ErrorType) -> u8 {
        t.code()
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Channel configuration for one corruption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub error_type: ErrorType,
    pub ratio: f64,
    pub seed: u64,
}

impl ErrorSpec {
    pub fn new(error_type: ErrorType, ratio: f64, seed: u64) -> Result<Self, ChannelError> {
        check_ratio(ratio)?;
        Ok(Self {
            error_type,
            ratio,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionOutcome {
    pub corrupted: TextMessage,
    pub affected_units: usize,
    pub total_units: usize,
    pub realized_ratio: f64,
}

impl CorruptionOutcome {
    fn new(corrupted: String, affected_units: usize, total_units: usize) -> Self {
        let realized_ratio = if total_units > 0 {
            affected_units as f64 / total_units as f64
        } else {
            0.0
        };
        Self {
            corrupted: TextMessage::from_sanitized(corrupted),
            affected_units,
            total_units,
            realized_ratio,
        }
    }
}

fn check_ratio(ratio: f64) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(ChannelError::RatioOutOfRange(ratio))
    }
}

/// Number of units hit at `ratio`: `floor(ratio * total + 0.5)` clamped to
/// `[0, total]`.
pub fn affected_count(total_units: usize, ratio: f64) -> Result<usize, ChannelError> {
    check_ratio(ratio)?;
    let k = (ratio * total_units as f64 + 0.5).floor();
    Ok((k.max(0.0) as usize).min(total_units))
}

/// `k` distinct indices of `0..n`, ascending, reproducible for `seed`.
pub fn select_positions(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, ChannelError> {
    if k > n {
        return Err(ChannelError::TooManyPositions { n, k });
    }
    Ok(sample_indices(n, k, &mut SplitMix64::new(seed)))
}

/// Type 1. Replacement characters continue the same splitmix64 stream that
/// chose the positions, visiting positions in ascending order.
pub fn substitute_chars(
    msg: &TextMessage,
    ratio: f64,
    seed: u64,
) -> Result<CorruptionOutcome, ChannelError> {
    let total = msg.char_count();
    let k = affected_count(total, ratio)?;
    let mut rng = SplitMix64::new(seed);
    let positions = sample_indices(total, k, &mut rng);

    let mut bytes = msg.as_str().as_bytes().to_vec();
    for p in positions {
        let original = bytes[p];
        bytes[p] = loop {
            let candidate = PRINTABLE_LO + rng.below(PRINTABLE_SPAN) as u8;
            if candidate != original {
                break candidate;
            }
        };
    }
    let corrupted = String::from_utf8(bytes).expect("printable ASCII stays valid UTF-8");
    Ok(CorruptionOutcome::new(corrupted, k, total))
}

/// Type 2.
pub fn delete_chars(
    msg: &TextMessage,
    ratio: f64,
    seed: u64,
) -> Result<CorruptionOutcome, ChannelError> {
    let total = msg.char_count();
    let k = affected_count(total, ratio)?;
    let positions = select_positions(total, k, seed)?;

    let mut doomed = positions.into_iter().peekable();
    let corrupted: String = msg
        .as_str()
        .chars()
        .enumerate()
        .filter(|(i, _)| {
            if doomed.peek() == Some(i) {
                doomed.next();
                false
            } else {
                true
            }
        })
        .map(|(_, c)| c)
        .collect();
    Ok(CorruptionOutcome::new(corrupted, k, total))
}

/// Words are maximal runs of non-space characters.
pub fn words(msg: &TextMessage) -> Vec<&str> {
    msg.as_str().split(' ').filter(|w| !w.is_empty()).collect()
}

/// Type 3. Survivors are re-joined with single spaces.
pub fn delete_words(
    msg: &TextMessage,
    ratio: f64,
    seed: u64,
) -> Result<CorruptionOutcome, ChannelError> {
    let all = words(msg);
    let total = all.len();
    let k = affected_count(total, ratio)?;
    let positions = select_positions(total, k, seed)?;

    let mut doomed = positions.into_iter().peekable();
    let mut survivors = Vec::with_capacity(total - k);
    for (i, w) in all.into_iter().enumerate() {
        if doomed.peek() == Some(&i) {
            doomed.next();
        } else {
            survivors.push(w);
        }
    }
    Ok(CorruptionOutcome::new(survivors.join(" "), k, total))
}

/// Applies the single impairment named by `spec.error_type`.
pub fn corrupt(msg: &TextMessage, spec: &ErrorSpec) -> Result<CorruptionOutcome, ChannelError> {
    match spec.error_type {
        ErrorType::CharSubstitution => substitute_chars(msg, spec.ratio, spec.seed),
        ErrorType::CharDeletion => delete_chars(msg, spec.ratio, spec.seed),
        ErrorType::WordDeletion => delete_words(msg, spec.ratio, spec.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sanitize_examples() {
        assert_eq!(sanitize("a fish\n").as_str(), "a fish ");
        assert_eq!(sanitize("abc").as_str(), "abc");
        assert_eq!(sanitize("").as_str(), "");
        assert_eq!(sanitize("a\r\n\tb").as_str(), "a b");
        assert_eq!(sanitize("caf\u{e9} noir").as_str(), "caf  noir");
    }

    #[test]
    fn affected_count_examples() {
        assert_eq!(affected_count(11, 0.0), Ok(0));
        assert_eq!(affected_count(11, 1.0), Ok(11));
        assert_eq!(affected_count(11, 0.14), Ok(2));
        assert_eq!(affected_count(0, 0.7), Ok(0));
        assert!(matches!(
            affected_count(3, 1.5),
            Err(ChannelError::RatioOutOfRange(_))
        ));
        assert!(affected_count(3, -0.1).is_err());
        assert!(affected_count(3, f64::NAN).is_err());
    }

    #[test]
    fn select_positions_examples() {
        assert_eq!(select_positions(5, 0, 77).unwrap(), Vec::<usize>::new());
        assert_eq!(select_positions(5, 5, 77).unwrap(), vec![0, 1, 2, 3, 4]);
        // Frozen from an independent implementation of the sampling contract.
        assert_eq!(select_positions(10, 3, 42).unwrap(), vec![2, 3, 4]);
        assert_eq!(
            select_positions(2, 3, 0),
            Err(ChannelError::TooManyPositions { n: 2, k: 3 })
        );
    }

    #[test]
    fn substitution_examples() {
        let msg = sanitize("hello world");
        let out = substitute_chars(&msg, 0.0, 5).unwrap();
        assert_eq!(out.corrupted, msg);
        assert_eq!((out.affected_units, out.total_units), (0, 11));

        let out = substitute_chars(&sanitize("a"), 1.0, 0).unwrap();
        assert_ne!(out.corrupted.as_str(), "a");
        assert_eq!(out.corrupted.as_str(), "C");
        assert_eq!((out.affected_units, out.total_units), (1, 1));

        let out = substitute_chars(&sanitize("abcdefghij"), 0.3, 7).unwrap();
        assert_eq!(out.corrupted.as_str(), "dbcdLfg ij");
        let hamming = "abcdefghij"
            .bytes()
            .zip(out.corrupted.as_str().bytes())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(hamming, 3);
    }

    #[test]
    fn deletion_examples() {
        let abc = sanitize("abc");
        assert_eq!(delete_chars(&abc, 0.0, 1).unwrap().corrupted.as_str(), "abc");
        assert_eq!(delete_chars(&abc, 1.0, 1).unwrap().corrupted.as_str(), "");

        let out = delete_chars(&sanitize("abcdefghij"), 0.2, 7).unwrap();
        assert_eq!(out.corrupted.as_str(), "bcdefgij");
        assert_eq!(out.affected_units, 2);
        assert!((out.realized_ratio - 0.2).abs() < 1e-12);
    }

    #[test]
    fn word_deletion_examples() {
        let msg = sanitize("a fish swims");
        let out = delete_words(&msg, 0.0, 4).unwrap();
        assert_eq!(out.corrupted.as_str(), "a fish swims");
        assert_eq!((out.affected_units, out.total_units), (0, 3));
        let out = delete_words(&msg, 1.0, 4).unwrap();
        assert_eq!(out.corrupted.as_str(), "");
        assert_eq!((out.affected_units, out.total_units), (3, 3));

        let out = delete_words(&sanitize("a large fish swims deep"), 0.4, 3).unwrap();
        assert_eq!(out.corrupted.as_str(), "a large deep");
        assert_eq!(out.affected_units, 2);

        let out = delete_words(&sanitize("  spaced   out  words "), 0.0, 0).unwrap();
        assert_eq!(out.corrupted.as_str(), "spaced out words");
    }

    #[test]
    fn dispatch() {
        let msg = sanitize("a school of fish near the rocky reef");
        let id = corrupt(&msg, &ErrorSpec::new(ErrorType::CharSubstitution, 0.0, 3).unwrap()).unwrap();
        assert_eq!(id.corrupted, msg);
        let gone = corrupt(&msg, &ErrorSpec::new(ErrorType::CharDeletion, 1.0, 3).unwrap()).unwrap();
        assert!(gone.corrupted.is_empty());
        let spec = ErrorSpec::new(ErrorType::WordDeletion, 0.5, 9).unwrap();
        assert_eq!(corrupt(&msg, &spec).unwrap(), delete_words(&msg, 0.5, 9).unwrap());
        assert_eq!(ErrorType::try_from(4), Err(ChannelError::UnknownErrorType(4)));
        assert!(ErrorSpec::new(ErrorType::CharDeletion, 1.01, 0).is_err());
    }

    #[test]
    fn error_spec_serde_uses_codes() {
        let spec = ErrorSpec::new(ErrorType::WordDeletion, 0.25, 11).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"error_type":3,"ratio":0.25,"seed":11}"#);
        assert!(serde_json::from_str::<ErrorSpec>(r#"{"error_type":5,"ratio":0.1,"seed":1}"#).is_err());
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![Just(' '), proptest::char::range('!', '~'), Just('\n')],
            0..80,
        )
        .prop_map(|cs| cs.into_iter().collect())
    }

    proptest! {
        #[test]
        fn sanitize_is_idempotent(raw in ".*") {
            let once = sanitize(&raw);
            prop_assert_eq!(sanitize(once.as_str()), once.clone());
            prop_assert!(once.as_str().bytes().all(is_printable));
            prop_assert_eq!(once.byte_count(), once.char_count());
        }

        #[test]
        fn damage_is_monotone_in_ratio(raw in text_strategy(), t in 1u8..=3, seed: u64,
                                       a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let msg = sanitize(&raw);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let et = ErrorType::try_from(t).unwrap();
            let x = corrupt(&msg, &ErrorSpec::new(et, lo, seed).unwrap()).unwrap();
            let y = corrupt(&msg, &ErrorSpec::new(et, hi, seed).unwrap()).unwrap();
            prop_assert!(x.affected_units <= y.affected_units);
        }

        #[test]
        fn ratio_extremes(raw in text_strategy(), t in 1u8..=3, seed: u64) {
            let msg = sanitize(&raw);
            let et = ErrorType::try_from(t).unwrap();
            let zero = corrupt(&msg, &ErrorSpec::new(et, 0.0, seed).unwrap()).unwrap();
            let full = corrupt(&msg, &ErrorSpec::new(et, 1.0, seed).unwrap()).unwrap();
            prop_assert_eq!(zero.affected_units, 0);
            prop_assert_eq!(full.affected_units, full.total_units);
            match et {
                ErrorType::WordDeletion => {
                    prop_assert_eq!(zero.corrupted.as_str(), words(&msg).join(" "));
                    prop_assert!(full.corrupted.is_empty());
                }
                ErrorType::CharDeletion => {
                    prop_assert_eq!(&zero.corrupted, &msg);
                    prop_assert!(full.corrupted.is_empty());
                }
                ErrorType::CharSubstitution => {
                    prop_assert_eq!(&zero.corrupted, &msg);
                    prop_assert_eq!(full.corrupted.char_count(), msg.char_count());
                }
            }
        }
    }
}
