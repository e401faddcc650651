//! Labeled comment datasets: CSV loading/writing and a synthetic generator.
//!
//! The CSV schema is `comment_id,comment_text` followed optionally by the three
//! label columns `Sub1_Toxic,Sub2_Engaging,Sub3_FactClaiming`. Text is kept
//! exactly as read.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::Subtask;

pub const ID_COLUMN: &str = "comment_id";
pub const TEXT_COLUMN: &str = "comment_text";

/// Positive rates used by the synthetic generator when none are given.
pub const DEFAULT_POSITIVE_RATES: [f64; 3] = [0.35, 0.25, 0.35];

/// Binary labels in subtask order (toxic, engaging, fact-claiming).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Labels(pub [u8; 3]);

impl Labels {
    pub fn get(self, task: Subtask) -> u8 {
        self.0[task.index()]
    }

    /// Joint 3-bit combination index in `0..8`.
    pub fn combination(self) -> usize {
        usize::from(self.0[0]) | usize::from(self.0[1]) << 1 | usize::from(self.0[2]) << 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub id: String,
    pub text: String,
    pub labels: Option<Labels>,
}

/// Ordered comments; either all carry labels or none do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    comments: Vec<Comment>,
    labeled: bool,
}

impl Dataset {
    pub fn new(comments: Vec<Comment>) -> Result<Self> {
        let labeled = comments.first().is_some_and(|c| c.labels.is_some());
        let mut seen = HashSet::with_capacity(comments.len());
        for (i, c) in comments.iter().enumerate() {
            let row = i as u64 + 1;
            if c.id.is_empty() {
                return Err(Error::invalid(format!("row {row}: empty comment id")));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: c.id.clone(),
                    row,
                });
            }
            if c.labels.is_some() != labeled {
                return Err(Error::invalid(format!(
                    "row {row}: labels must be present on every comment or on none"
                )));
            }
            if let Some(l) = c.labels {
                if l.0.iter().any(|&v| v > 1) {
                    return Err(Error::invalid(format!("row {row}: labels must be 0 or 1")));
                }
            }
        }
        Ok(Self { comments, labeled })
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labeled
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.comments.iter().map(|c| c.id.as_str())
    }

    /// Labels of every comment, or `None` for an unlabeled dataset.
    pub fn labels(&self) -> Option<Vec<Labels>> {
        self.comments.iter().map(|c| c.labels).collect()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, path)
}

/// Parses a dataset from any reader; `origin` only labels error messages.
pub fn read_dataset(reader: impl Read, origin: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(origin, 0, e))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| Error::MissingColumn {
        path: origin.to_path_buf(),
        column: name.to_string(),
    };
    let id_col = find(ID_COLUMN).ok_or_else(|| missing(ID_COLUMN))?;
    let text_col = find(TEXT_COLUMN).ok_or_else(|| missing(TEXT_COLUMN))?;
    let label_cols: Vec<Option<usize>> = Subtask::ALL.iter().map(|t| find(t.column())).collect();
    let label_cols: Option<Vec<usize>> = match label_cols.iter().filter(|c| c.is_some()).count() {
        0 => None,
        3 => Some(label_cols.into_iter().flatten().collect()),
        _ => {
            let absent = Subtask::ALL
                .iter()
                .zip(&label_cols)
                .find(|(_, c)| c.is_none())
                .map(|(t, _)| t.column())
                .unwrap_or_default();
            return Err(missing(absent));
        }
    };

    let mut comments = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let record = record.map_err(|e| csv_error(origin, row, e))?;
        let field = |c: usize| record.get(c).unwrap_or_default();
        let labels = match &label_cols {
            None => None,
            Some(cols) => {
                let mut out = [0u8; 3];
                for (k, &c) in cols.iter().enumerate() {
                    let raw = field(c);
                    out[k] = match raw.trim() {
                        "0" => 0,
                        "1" => 1,
                        _ => {
                            return Err(Error::InvalidLabel {
                                row,
                                column: Subtask::ALL[k].column().to_string(),
                                value: raw.to_string(),
                            })
                        }
                    };
                }
                Some(Labels(out))
            }
        };
        comments.push(Comment {
            id: field(id_col).to_string(),
            text: field(text_col).to_string(),
            labels,
        });
    }
    Dataset::new(comments)
}

pub(crate) fn csv_error(path: &Path, row: u64, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        message: e.to_string(),
    }
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(dataset, file).map_err(|e| match e {
        Error::InvalidInput(m) => Error::Csv {
            path: path.to_path_buf(),
            row: 0,
            message: m,
        },
        other => other,
    })
}

pub fn write_dataset_to(dataset: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::invalid(e.to_string());
    let mut header = vec![ID_COLUMN, TEXT_COLUMN];
    if dataset.is_labeled() {
        header.extend(Subtask::ALL.iter().map(|t| t.column()));
    }
    w.write_record(&header).map_err(wrap)?;
    for c in dataset.comments() {
        let mut rec = vec![c.id.clone(), c.text.clone()];
        if let Some(l) = c.labels {
            rec.extend(l.0.iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(())
}

const WORDS: &[&str] = &[
    "die", "der", "und", "nicht", "das", "ist", "ich", "es", "mal", "wir", "auf", "mit", "sich",
    "ein", "eine", "zu", "auch", "man", "noch", "aber", "Regierung", "Diesel", "Golf", "Preis",
    "Kosten", "Makler", "Mieter", "Politik", "Wahrheit", "Studie", "Prozent", "Klima", "Sendung",
    "Beitrag", "Meinung", "Frage", "wieder", "endlich", "schon", "genau", "sieh", "an", "schöner",
    "teuer", "dumm", "richtig", "falsch", "gut", "Quatsch", "Danke", "warum", "weil", "Europa",
    "Deutschland", "CO2", "Fußabdruck", "Afrikaner", "Kostenteilung", "Vermietungen", "Tätigkeit",
];

const EXTRAS: &[&str] = &[
    "@USER",
    "@MEDIUM",
    "https://www.example.de/artikel",
    "http://example.org",
    "www.example.com",
    "😂",
    "😂😂",
    "👍",
    "😡",
    "❤",
    "!!!",
    "!",
    "?",
    "..",
];

/// Deterministic synthetic dataset whose labels are drawn independently per
/// subtask with the given positive rates.
pub fn synth_dataset(seed: u64, n: usize, positive_rates: [f64; 3]) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("synthetic dataset size must be at least 1"));
    }
    if positive_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid("positive rates must lie in [0, 1]"));
    }
    let mut rng = rng::stream(seed, "synth-corpus");
    let mut comments = Vec::with_capacity(n);
    for i in 0..n {
        let mut labels = [0u8; 3];
        for (slot, &rate) in labels.iter_mut().zip(&positive_rates) {
            *slot = u8::from(rng.random::<f64>() < rate);
        }
        let len = rng.random_range(1..=24usize);
        let mut tokens: Vec<&str> = Vec::with_capacity(len + 2);
        if rng.random_bool(0.3) {
            tokens.push("@USER");
        }
        for _ in 0..len {
            let pool = if rng.random_bool(0.15) { EXTRAS } else { WORDS };
            tokens.push(pool.choose(&mut rng).copied().unwrap_or("und"));
        }
        comments.push(Comment {
            id: format!("s{seed}_{i:05}"),
            text: tokens.join(" "),
            labels: Some(Labels(labels)),
        });
    }
    Dataset::new(comments)
}
