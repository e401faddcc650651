//! Hand-crafted numeric features per comment.
//!
//! Thirty values in a fixed order: ten structural/count features, seventeen
//! spelling-mistake rates and three sentiment scores. Spelling counts and
//! sentiment scores come from sidecar CSV files produced by external tools.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::{csv_error, ID_COLUMN};
use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 30;
pub const NUM_SPELLING: usize = 17;
pub const NUM_SENTIMENT: usize = 3;

pub const NUM_CHARACTERS: usize = 0;
pub const NUM_TOKENS: usize = 1;
pub const AVERAGE_TOKEN_LENGTH: usize = 2;
pub const TOKEN_LENGTH_STD: usize = 3;
pub const STOPWORD_RATIO: usize = 4;
pub const EXCLAMATION_MARK_RATIO: usize = 5;
pub const NUM_REFERENCES: usize = 6;
pub const NUM_MEDIUM_ADDRESSED: usize = 7;
pub const NUM_USER_ADDRESSED: usize = 8;
pub const AVERAGE_EMOJI_REPETITION: usize = 9;
pub const SPELLING_OFFSET: usize = 10;
pub const SENTIMENT_OFFSET: usize = SPELLING_OFFSET + NUM_SPELLING;

/// Entries replaced by their natural logarithm in [`log_transform`].
pub const LOG_TRANSFORMED: [usize; 3] = [NUM_CHARACTERS, NUM_TOKENS, AVERAGE_TOKEN_LENGTH];

const BASE_NAMES: [&str; 10] = [
    "NumCharacters",
    "NumTokens",
    "AverageTokenLength",
    "TokenLengthStd",
    "StopwordRatio",
    "ExclamationMarkRatio",
    "NumReferences",
    "NumMediumAdressed",
    "NumUserAdressed",
    "AverageEmojiRepetition",
];

/// Grammar-checker categories; also the column order of the spelling sidecar.
pub const SPELLING_CATEGORIES: [&str; NUM_SPELLING] = [
    "typography",
    "punctuation",
    "grammar",
    "casing",
    "punctuation_support",
    "colloquialism",
    "compounding",
    "confused_words",
    "redundancy",
    "typos",
    "style",
    "proper_nouns",
    "idioms",
    "recommended_spelling",
    "misc",
    "double_punctuation",
    "double_exclamation_mark",
];

pub const SENTIMENT_COLUMNS: [&str; NUM_SENTIMENT] = ["pos", "neu", "neg"];

pub const DEFAULT_SENTIMENT: [f64; NUM_SENTIMENT] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_de.txt");

/// Column names of the 30 features, in vector order.
pub fn feature_names() -> Vec<String> {
    BASE_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain(SPELLING_CATEGORIES.iter().map(|c| format!("SpellingMistakes_{c}")))
        .chain(SENTIMENT_COLUMNS.iter().map(|c| format!("SentimentBERT_{c}")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericFeatureVector(pub [f64; NUM_FEATURES]);

impl NumericFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Lowercase stopword lookup.
#[derive(Debug, Clone)]
pub struct StopwordSet(HashSet<String>);

impl StopwordSet {
    pub fn parse(contents: &str) -> Self {
        Self(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&contents))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for StopwordSet {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

/// Splits on runs of Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn is_emoji(c: char) -> bool {
    matches!(u32::from(c), 0x1F300..=0x1FAFF | 0x2600..=0x27BF | 0x1F000..=0x1F2FF)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Counts `http://`, `https://` and `www.`; a `www.` directly after a scheme
/// belongs to the same link and is not counted again.
fn count_references(text: &str) -> usize {
    let schemes = text.matches("http://").count() + text.matches("https://").count();
    let bare_www = text
        .match_indices("www.")
        .filter(|(i, _)| !text[..*i].ends_with("://"))
        .count();
    schemes + bare_www
}

pub fn extract_numeric(
    text: &str,
    stopwords: &StopwordSet,
    spelling: Option<&[f64; NUM_SPELLING]>,
    sentiment: Option<&[f64; NUM_SENTIMENT]>,
) -> NumericFeatureVector {
    let mut v = [0.0; NUM_FEATURES];
    let tokens = tokenize(text);
    let num_chars = text.chars().count() as f64;
    let num_tokens = tokens.len() as f64;

    let lengths: Vec<f64> = tokens.iter().map(|t| t.chars().count() as f64).collect();
    let mean_len = ratio(lengths.iter().sum(), num_tokens);
    let var_len = ratio(
        lengths.iter().map(|l| (l - mean_len).powi(2)).sum(),
        num_tokens,
    );

    let mut emoji_counts: BTreeMap<char, usize> = BTreeMap::new();
    for c in text.chars().filter(|&c| is_emoji(c)) {
        *emoji_counts.entry(c).or_default() += 1;
    }
    let emoji_repetition = ratio(
        emoji_counts.values().sum::<usize>() as f64,
        emoji_counts.len() as f64,
    );

    v[NUM_CHARACTERS] = num_chars;
    v[NUM_TOKENS] = num_tokens;
    v[AVERAGE_TOKEN_LENGTH] = mean_len;
    v[TOKEN_LENGTH_STD] = var_len.sqrt();
    v[STOPWORD_RATIO] = ratio(
        tokens.iter().filter(|t| stopwords.contains(t)).count() as f64,
        num_tokens,
    );
    v[EXCLAMATION_MARK_RATIO] = ratio(text.matches('!').count() as f64, num_chars);
    v[NUM_REFERENCES] = count_references(text) as f64;
    v[NUM_MEDIUM_ADDRESSED] = text.matches("@MEDIUM").count() as f64;
    v[NUM_USER_ADDRESSED] = text.matches("@USER").count() as f64;
    v[AVERAGE_EMOJI_REPETITION] = emoji_repetition;
    if let Some(counts) = spelling {
        for (slot, &c) in v[SPELLING_OFFSET..SENTIMENT_OFFSET].iter_mut().zip(counts) {
            *slot = ratio(c, num_tokens);
        }
    }
    v[SENTIMENT_OFFSET..].copy_from_slice(sentiment.unwrap_or(&DEFAULT_SENTIMENT));
    NumericFeatureVector(v)
}

/// Natural log of the always-positive structural features; zeros stay zero.
pub fn log_transform(v: &NumericFeatureVector) -> NumericFeatureVector {
    let mut out = *v;
    for &i in &LOG_TRANSFORMED {
        if out.0[i] > 0.0 {
            out.0[i] = out.0[i].ln();
        }
    }
    out
}

/// Per-id rows of `N` non-negative reals read from a sidecar CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SidecarTable<const N: usize> {
    rows: HashMap<String, [f64; N]>,
}

pub type SpellingTable = SidecarTable<NUM_SPELLING>;
pub type SentimentTable = SidecarTable<NUM_SENTIMENT>;

impl<const N: usize> SidecarTable<N> {
    pub fn get(&self, id: &str) -> Option<&[f64; N]> {
        self.rows.get(id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn read(reader: impl Read, origin: &Path, columns: &[&str; N]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(origin, 0, e))?.clone();
        let expected: Vec<&str> = std::iter::once(ID_COLUMN).chain(columns.iter().copied()).collect();
        let found: Vec<&str> = headers.iter().collect();
        if found != expected {
            return Err(Error::Csv {
                path: origin.to_path_buf(),
                row: 0,
                message: format!("header must be `{}`", expected.join(",")),
            });
        }
        let mut rows = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i as u64 + 1;
            let rec = rec.map_err(|e| csv_error(origin, row, e))?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let mut vals = [0.0; N];
            for (k, slot) in vals.iter_mut().enumerate() {
                let raw = rec.get(k + 1).unwrap_or_default().trim();
                let x: f64 = raw.parse().map_err(|_| Error::Csv {
                    path: origin.to_path_buf(),
                    row,
                    message: format!("column `{}`: `{raw}` is not a number", columns[k]),
                })?;
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        id,
                        column: columns[k].to_string(),
                    });
                }
                if x < 0.0 {
                    return Err(Error::Csv {
                        path: origin.to_path_buf(),
                        row,
                        message: format!("column `{}`: negative value {x}", columns[k]),
                    });
                }
                *slot = x;
            }
            if rows.insert(id.clone(), vals).is_some() {
                return Err(Error::DuplicateId { id, row });
            }
        }
        Ok(Self { rows })
    }
}

pub fn read_spelling_table(reader: impl Read, origin: &Path) -> Result<SpellingTable> {
    SidecarTable::read(reader, origin, &SPELLING_CATEGORIES)
}

pub fn read_sentiment_table(reader: impl Read, origin: &Path) -> Result<SentimentTable> {
    let table = SidecarTable::read(reader, origin, &SENTIMENT_COLUMNS)?;
    let mut ids: Vec<&String> = table.rows.keys().collect();
    ids.sort();
    for id in ids {
        let sum: f64 = table.rows[id].iter().sum();
        if (sum - 1.0).abs() > 1e-3 {
            return Err(Error::invalid(format!(
                "{}: sentiment scores for `{id}` sum to {sum}, expected 1",
                origin.display()
            )));
        }
    }
    Ok(table)
}

pub fn load_spelling_table(path: impl AsRef<Path>) -> Result<SpellingTable> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_spelling_table(f, path)
}

pub fn load_sentiment_table(path: impl AsRef<Path>) -> Result<SentimentTable> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sentiment_table(f, path)
}

/// Writes `comment_id` plus the 30 named feature columns.
pub fn write_feature_table<'a>(
    writer: impl Write,
    rows: impl IntoIterator<Item = (&'a str, &'a NumericFeatureVector)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::invalid(e.to_string());
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(feature_names());
    w.write_record(&header).map_err(wrap)?;
    for (id, v) in rows {
        let mut rec = Vec::with_capacity(NUM_FEATURES + 1);
        rec.push(id.to_string());
        rec.extend(v.0.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

/// Reads a table written by [`write_feature_table`], preserving row order.
pub fn read_feature_table(
    reader: impl Read,
    origin: &Path,
) -> Result<Vec<(String, NumericFeatureVector)>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, 0, e))?.clone();
    let mut expected = vec![ID_COLUMN.to_string()];
    expected.extend(feature_names());
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Csv {
            path: origin.to_path_buf(),
            row: 0,
            message: "unexpected numeric feature header".into(),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| csv_error(origin, row, e))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let mut v = [0.0f64; NUM_FEATURES];
        for (k, slot) in v.iter_mut().enumerate() {
            let raw = rec.get(k + 1).unwrap_or_default();
            *slot = raw.parse().map_err(|_| Error::Csv {
                path: origin.to_path_buf(),
                row,
                message: format!("`{raw}` is not a number"),
            })?;
            if !slot.is_finite() {
                return Err(Error::NonFinite {
                    id: id.clone(),
                    column: expected[k + 1].clone(),
                });
            }
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id, row });
        }
        out.push((id, NumericFeatureVector(v)));
    }
    Ok(out)
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<Vec<(String, NumericFeatureVector)>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(f, path)
}
