//! Pre-trained word embedding tables in the GloVe text format.
//!
//! One entry per line: a token followed by its components, separated by
//! spaces. A leading word2vec-style `<count> <dim>` header line is accepted
//! and skipped. Tokens are lowercased at load time; lookups lowercase the
//! query as well, so the table behaves case-insensitively.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Deref;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// A vector read from an [`EmbeddingTable`]. Always finite, always of the
/// owning table's dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T>(Vec<T>);

impl<T: Scalar> EmbeddingVector<T> {
    /// Wraps raw components, rejecting empty or non-finite input.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("embedding vector is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "embedding component {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn norm(&self) -> T {
        dot(&self.0, &self.0).sqrt()
    }
}

impl<T> Deref for EmbeddingVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Immutable token → vector map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    name: String,
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
    warnings: Vec<String>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Reads a table from a text file. The table name defaults to the file
    /// stem.
    pub fn load(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "embedding".to_string());
        Self::from_reader(name, BufReader::new(file), expected_dim)
    }

    pub fn from_reader<R: BufRead>(
        name: impl Into<String>,
        reader: R,
        expected_dim: Option<usize>,
    ) -> Result<Self> {
        if expected_dim == Some(0) {
            return Err(Error::Argument(
                "expected dimension must be positive".into(),
            ));
        }
        let mut builder = TableBuilder::new(name.into());
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            builder.push_line(line_no, &line)?;
        }
        let table = builder.finish()?;
        if let Some(expected) = expected_dim {
            if table.dim != expected {
                return Err(Error::Dimension {
                    expected,
                    found: table.dim,
                });
            }
        }
        Ok(table)
    }

    /// Builds a table from in-memory rows. Same lowercasing and
    /// duplicate rules as [`EmbeddingTable::load`].
    pub fn from_entries<S, I>(name: impl Into<String>, entries: I) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = (S, Vec<T>)>,
    {
        let mut builder = TableBuilder::new(name.into());
        for (i, (word, values)) in entries.into_iter().enumerate() {
            builder.push(i + 1, word.as_ref(), values)?;
        }
        builder.finish()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Tokens in file order (first occurrence of each).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Duplicate-token notices collected while loading.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Writes the table in the whitespace-separated text format that
    /// [`EmbeddingTable::load`] reads, one token per line.
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let to_io = |e| Error::Format(format!("writing embedding table: {e}"));
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}").map_err(to_io)?;
            for v in self.row(i) {
                write!(w, " {v}").map_err(to_io)?;
            }
            writeln!(w).map_err(to_io)?;
        }
        Ok(())
    }

    fn row(&self, idx: usize) -> &[T] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Case-insensitive exact-token lookup. Out-of-vocabulary words yield
    /// `None`, never a zero vector.
    pub fn lookup(&self, word: &str) -> Option<EmbeddingVector<T>> {
        self.lookup_slice(word)
            .map(|row| EmbeddingVector(row.to_vec()))
    }

    fn lookup_slice(&self, word: &str) -> Option<&[T]> {
        let key = word.trim().to_lowercase();
        self.index.get(&key).map(|&i| self.row(i))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup_slice(word).is_some()
    }

    /// Embeds a free-text descriptor. The whole lowercased descriptor is
    /// tried first; failing that, hyphen- or space-separated parts are looked
    /// up and the found vectors averaged.
    pub fn embed_descriptor(&self, descriptor: &str) -> Result<Option<EmbeddingVector<T>>> {
        let trimmed = descriptor.trim();
        if trimmed.is_empty() {
            return Err(Error::Argument("descriptor is empty".into()));
        }
        if let Some(row) = self.lookup_slice(trimmed) {
            return Ok(Some(EmbeddingVector(row.to_vec())));
        }
        let parts: Vec<&str> = trimmed
            .split(|c: char| c == '-' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() < 2 {
            return Ok(None);
        }
        let mut sum = vec![T::zero(); self.dim];
        let mut found = 0usize;
        for part in parts {
            if let Some(row) = self.lookup_slice(part) {
                sum.iter_mut().zip(row).for_each(|(s, &v)| *s += v);
                found += 1;
            }
        }
        if found == 0 {
            return Ok(None);
        }
        let n = T::from_usize(found).expect("count fits scalar");
        sum.iter_mut().for_each(|s| *s /= n);
        Ok(Some(EmbeddingVector(sum)))
    }

    /// Words closest to `query` by cosine similarity, best first.
    pub fn nearest(&self, query: &EmbeddingVector<T>, k: usize) -> Vec<(String, T)> {
        let mut scored: Vec<(usize, T)> = (0..self.len())
            .filter_map(|i| cosine_similarity(query, self.row(i)).ok().map(|s| (i, s)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.words[i].clone(), s))
            .collect()
    }
}

struct TableBuilder<T> {
    name: String,
    dim: Option<usize>,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
    warnings: Vec<String>,
    seen_content: bool,
}

impl<T: Scalar> TableBuilder<T> {
    fn new(name: String) -> Self {
        Self {
            name,
            dim: None,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            warnings: Vec::new(),
            seen_content: false,
        }
    }

    fn push_line(&mut self, line_no: usize, line: &str) -> Result<()> {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            return Ok(());
        }
        let mut fields = line.split_ascii_whitespace();
        let token = fields.next().expect("non-empty line has a field");
        let rest: Vec<&str> = fields.collect();

        if !self.seen_content {
            self.seen_content = true;
            // word2vec text header: "<count> <dim>"
            if rest.len() == 1 && token.parse::<usize>().is_ok() {
                if let Ok(dim) = rest[0].parse::<usize>() {
                    if dim == 0 {
                        return Err(Error::Format("header declares dimension 0".into()));
                    }
                    self.dim = Some(dim);
                    return Ok(());
                }
            }
        }

        if rest.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token {token:?} has no vector components"),
            });
        }
        let mut values = Vec::with_capacity(rest.len());
        for (col, field) in rest.iter().enumerate() {
            let v: T = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("component {} ({field:?}) is not a number", col + 1),
            })?;
            values.push(v);
        }
        self.push(line_no, token, values)
    }

    fn push(&mut self, line_no: usize, token: &str, values: Vec<T>) -> Result<()> {
        let dim = *self.dim.get_or_insert(values.len());
        if values.len() != dim {
            return Err(Error::Format(format!(
                "line {line_no}: token {token:?} has {} components, expected {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token {token:?} has a non-finite component"),
            });
        }
        let key = token.trim().to_lowercase();
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty token".into(),
            });
        }
        if self.index.contains_key(&key) {
            self.warnings.push(format!(
                "line {line_no}: duplicate token {key:?} ignored, keeping first occurrence"
            ));
            return Ok(());
        }
        self.index.insert(key.clone(), self.words.len());
        self.words.push(key);
        self.data.extend(values);
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingTable<T>> {
        let dim = match self.dim {
            Some(d) if !self.words.is_empty() => d,
            _ => return Err(Error::Format("embedding file contains no entries".into())),
        };
        Ok(EmbeddingTable {
            name: self.name,
            dim,
            words: self.words,
            index: self.index,
            data: self.data,
            warnings: self.warnings,
        })
    }
}

/// Cosine of the angle between two vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}
