//! Precomputed embedding tables and their id-aligned assembly with the numeric
//! features.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{csv_error, Dataset, Labels, ID_COLUMN};
use crate::error::{Error, Result};
use crate::features::{NumericFeatureVector, NUM_FEATURES};
use crate::rng;
use crate::Subtask;

pub const SEMANTIC_DIM: usize = 768;
pub const STYLE_DIM: usize = 100;
pub const JOINT_DIM: usize = SEMANTIC_DIM + STYLE_DIM;

/// Id-keyed rows of equal width, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f64]) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        if let Some(k) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                id,
                column: format!("e{k}"),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId {
                id,
                row: self.ids.len() as u64 + 1,
            });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(f, path, expected_dim)
}

pub fn read_embeddings(
    reader: impl Read,
    origin: &Path,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(origin, 0, e))?.clone();
    if headers.get(0) != Some(ID_COLUMN) {
        return Err(Error::MissingColumn {
            path: origin.to_path_buf(),
            column: ID_COLUMN.into(),
        });
    }
    let dim = headers.len() - 1;
    for (k, h) in headers.iter().skip(1).enumerate() {
        if h != format!("e{k}") {
            return Err(Error::Csv {
                path: origin.to_path_buf(),
                row: 0,
                message: format!("column {} should be `e{k}`, found `{h}`", k + 1),
            });
        }
    }
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(Error::DimensionMismatch {
                expected,
                found: dim,
            });
        }
    }
    if dim == 0 {
        return Err(Error::invalid(format!("{}: no embedding columns", origin.display())));
    }
    let mut table = EmbeddingTable::new(dim);
    let mut buf = vec![0.0; dim];
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| csv_error(origin, row, e))?;
        let id = rec.get(0).unwrap_or_default();
        for (k, slot) in buf.iter_mut().enumerate() {
            let raw = rec.get(k + 1).unwrap_or_default().trim();
            *slot = raw.parse().map_err(|_| Error::Csv {
                path: origin.to_path_buf(),
                row,
                message: format!("id `{id}` column e{k}: `{raw}` is not a number"),
            })?;
        }
        table.push(id, &buf).map_err(|e| match e {
            Error::DuplicateId { id, .. } => Error::DuplicateId { id, row },
            other => other,
        })?;
    }
    Ok(table)
}

pub fn write_embeddings(table: &EmbeddingTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::invalid(e.to_string());
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend((0..table.dim).map(|k| format!("e{k}")));
    w.write_record(&header).map_err(wrap)?;
    let mut rec = Vec::with_capacity(table.dim + 1);
    for (i, id) in table.ids.iter().enumerate() {
        rec.clear();
        rec.push(id.clone());
        rec.extend(
            table.data[i * table.dim..(i + 1) * table.dim]
                .iter()
                .map(|x| x.to_string()),
        );
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

/// Row-aligned feature blocks for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAssembly {
    pub ids: Vec<String>,
    pub semantic: DMatrix<f64>,
    pub style: DMatrix<f64>,
    pub numeric: DMatrix<f64>,
    pub labels: Option<Vec<Labels>>,
}

impl FeatureAssembly {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Semantic and style blocks side by side.
    pub fn joint_embedding(&self) -> DMatrix<f64> {
        hstack(&self.semantic, &self.style)
    }

    pub fn joint_dim(&self) -> usize {
        self.semantic.ncols() + self.style.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> FeatureAssembly {
        FeatureAssembly {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            semantic: self.semantic.select_rows(rows),
            style: self.style.select_rows(rows),
            numeric: self.numeric.select_rows(rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Binary labels of one subtask; errors on an unlabeled assembly.
    pub fn task_labels(&self, task: Subtask) -> Result<Vec<u8>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().map(|x| x.get(task)).collect())
            .ok_or_else(|| Error::invalid("assembly carries no labels"))
    }
}

pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Aligns all sources to the dataset order; requires 768-d semantic and
/// 100-d style tables.
pub fn assemble(
    dataset: &Dataset,
    semantic: &EmbeddingTable,
    style: &EmbeddingTable,
    numeric: &HashMap<String, NumericFeatureVector>,
) -> Result<FeatureAssembly> {
    for (table, want) in [(semantic, SEMANTIC_DIM), (style, STYLE_DIM)] {
        if table.dim() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                found: table.dim(),
            });
        }
    }
    assemble_any_width(dataset, semantic, style, numeric)
}

/// As [`assemble`] but accepts embedding tables of any width.
pub fn assemble_any_width(
    dataset: &Dataset,
    semantic: &EmbeddingTable,
    style: &EmbeddingTable,
    numeric: &HashMap<String, NumericFeatureVector>,
) -> Result<FeatureAssembly> {
    check_ids(dataset, "semantic embeddings", |id| semantic.get(id).is_some())?;
    check_ids(dataset, "style embeddings", |id| style.get(id).is_some())?;
    check_ids(dataset, "numeric features", |id| numeric.contains_key(id))?;

    let ids: Vec<String> = dataset.ids().map(str::to_string).collect();
    let semantic_block = fill_block(&ids, semantic.dim(), |id| semantic.get(id).unwrap_or_default());
    let style_block = fill_block(&ids, style.dim(), |id| style.get(id).unwrap_or_default());
    let numeric_block = fill_block(&ids, NUM_FEATURES, |id| {
        numeric.get(id).map(|v| v.as_slice()).unwrap_or_default()
    });
    Ok(FeatureAssembly {
        ids,
        semantic: semantic_block,
        style: style_block,
        numeric: numeric_block,
        labels: dataset.labels(),
    })
}

fn fill_block<'a>(ids: &[String], dim: usize, row: impl Fn(&str) -> &'a [f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(ids.len(), dim);
    for (i, id) in ids.iter().enumerate() {
        for (j, &x) in row(id).iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

fn check_ids(dataset: &Dataset, source_name: &str, present: impl Fn(&str) -> bool) -> Result<()> {
    let missing: Vec<&str> = dataset.ids().filter(|id| !present(id)).collect();
    if missing.is_empty() {
        return Ok(());
    }
    Err(Error::MissingIds {
        source_name: source_name.to_string(),
        count: missing.len(),
        first: missing.iter().take(10).map(|s| s.to_string()).collect(),
    })
}

/// Unit directions along which the synthetic classes are shifted, one per
/// subtask. They depend only on `dim`, so tables drawn with different seeds
/// share the same class geometry.
pub fn synth_directions(dim: usize) -> [Vec<f64>; 3] {
    let mut rng = rng::stream(0x5EED, &format!("synth-directions-{dim}"));
    let mut dirs: [Vec<f64>; 3] = Default::default();
    for t in 0..3 {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if dim >= 3 {
            for prev in &dirs[..t] {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        dirs[t] = v;
    }
    dirs
}

/// Gaussian rows shifted by `class_separation` along a fixed per-subtask
/// direction for every positive label.
pub fn synth_embeddings(
    seed: u64,
    dataset: &Dataset,
    dim: usize,
    class_separation: f64,
) -> Result<EmbeddingTable> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("synthetic embeddings need a labeled dataset"))?;
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    if !(class_separation >= 0.0 && class_separation.is_finite()) {
        return Err(Error::invalid("class separation must be finite and non-negative"));
    }
    let dirs = synth_directions(dim);
    let mut rng = rng::stream(seed, "synth-embeddings");
    let mut table = EmbeddingTable::new(dim);
    let mut row = vec![0.0; dim];
    for (c, l) in dataset.comments().iter().zip(&labels) {
        for x in row.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        for (t, dir) in dirs.iter().enumerate() {
            if l.0[t] == 1 {
                row.iter_mut()
                    .zip(dir)
                    .for_each(|(x, d)| *x += class_separation * d);
            }
        }
        table.push(c.id.clone(), &row)?;
    }
    Ok(table)
}

/// Ids of `dataset` not covered by `table`; used to report gaps.
pub fn missing_ids<'a>(dataset: &'a Dataset, table: &EmbeddingTable) -> Vec<&'a str> {
    let present: HashSet<&str> = table.ids().iter().map(String::as_str).collect();
    dataset.ids().filter(|id| !present.contains(id)).collect()
}
