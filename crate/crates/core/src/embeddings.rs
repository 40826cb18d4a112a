//! Embedding ingestion: validated record sets with precomputed norms and
//! unit vectors, plus the two on-disk formats.
//!
//! Raw vectors are kept in single precision as loaded; norms and unit
//! vectors are derived with double-precision accumulation so that a
//! serialize/reload round trip reproduces them bit for bit.

use std::collections::HashSet;
use std::io::{BufReader, Read, Write};

use crate::error::{Error, Result};

/// Magic bytes opening the binary embedding format.
pub const BINARY_MAGIC: &[u8; 5] = b"DDIV1";

/// Whether a set holds corpus items or test queries. Pass-through metadata;
/// the numerics never branch on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRole {
    Corpus,
    Query,
}

/// One embedded item: an id (which doubles as the demonstration text for
/// prompt assembly), an optional task label, and the raw vector with its
/// derived norm and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: Option<String>,
    pub vector: Vec<f32>,
    /// L2 norm of `vector`, accumulated in f64. Always > 0 for stored records.
    pub norm: f64,
    /// `vector / norm` in f64; unit length to ~1e-15.
    pub unit: Vec<f64>,
}

/// An ordered, dimension-consistent collection of embedding records with
/// unique ids. Immutable once built.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    records: Vec<EmbeddingRecord>,
    dimension: Option<usize>,
    role: SetRole,
}

impl EmbeddingSet {
    /// An empty set; the dimension stays undefined until records exist.
    pub fn empty(role: SetRole) -> Self {
        EmbeddingSet {
            records: Vec::new(),
            dimension: None,
            role,
        }
    }

    /// Build a set from `(id, label, vector)` rows, validating dimensions,
    /// id uniqueness, and that every vector has a cosine direction.
    pub fn from_raw(role: SetRole, rows: Vec<(String, Option<String>, Vec<f32>)>) -> Result<Self> {
        let mut set = EmbeddingSet::empty(role);
        let mut seen: HashSet<String> = HashSet::with_capacity(rows.len());
        for (id, label, vector) in rows {
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId { id });
            }
            match set.dimension {
                None => set.dimension = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(Error::DimensionMismatch {
                        id,
                        expected: d,
                        got: vector.len(),
                    })
                }
                Some(_) => {}
            }
            let norm_sq: f64 = vector.iter().map(|&v| {
                let v = v as f64;
                v * v
            }).sum();
            let norm = norm_sq.sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm { id });
            }
            let unit = vector.iter().map(|&v| v as f64 / norm).collect();
            // labels normalize: empty means absent in both formats
            let label = label.filter(|l| !l.is_empty());
            set.records.push(EmbeddingRecord {
                id,
                label,
                vector,
                norm,
                unit,
            });
        }
        Ok(set)
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &EmbeddingRecord {
        &self.records[i]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `None` until the first record fixes the dimension.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn role(&self) -> SetRole {
        self.role
    }
}

/// On-disk embedding encodings.
///
/// * `Text`: one record per line, `id <TAB> label <TAB> comma-separated
///   floats`, UTF-8 with `\n` line endings; an empty label field means no
///   label.
/// * `Binary`: `"DDIV1"` magic, `u32` count, `u32` dimension, then the ids
///   and labels as u32-length-prefixed UTF-8, then row-major little-endian
///   f32 values. All integers little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

impl std::str::FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(EmbeddingFormat::Text),
            "binary" => Ok(EmbeddingFormat::Binary),
            other => Err(Error::Config(format!(
                "unknown embedding format `{other}` (expected `text` or `binary`)"
            ))),
        }
    }
}

/// Parse an embedding set from `source` under the declared format.
pub fn load_embeddings<R: Read>(
    source: R,
    format: EmbeddingFormat,
    role: SetRole,
) -> Result<EmbeddingSet> {
    match format {
        EmbeddingFormat::Text => load_text(source, role),
        EmbeddingFormat::Binary => load_binary(source, role),
    }
}

/// Write an embedding set in the given format.
pub fn save_embeddings<W: Write>(
    sink: &mut W,
    set: &EmbeddingSet,
    format: EmbeddingFormat,
) -> Result<()> {
    match format {
        EmbeddingFormat::Text => save_text(sink, set),
        EmbeddingFormat::Binary => save_binary(sink, set),
    }
}

fn load_text<R: Read>(source: R, role: SetRole) -> Result<EmbeddingSet> {
    let mut text = String::new();
    BufReader::new(source)
        .read_to_string(&mut text)
        .map_err(Error::Io)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.split('\n').enumerate() {
        if line.is_empty() {
            continue; // the terminating newline produces one empty segment
        }
        let line_no = lineno + 1;
        let mut fields = line.split('\t');
        let (id, label, values) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(id), Some(label), Some(values), None) => (id, label, values),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected exactly three tab-separated fields".into(),
                })
            }
        };
        let mut vector = Vec::new();
        for piece in values.split(',') {
            let v: f32 = piece.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid float `{piece}`"),
            })?;
            vector.push(v);
        }
        let label = if label.is_empty() {
            None
        } else {
            Some(label.to_string())
        };
        rows.push((id.to_string(), label, vector));
    }
    EmbeddingSet::from_raw(role, rows)
}

fn save_text<W: Write>(sink: &mut W, set: &EmbeddingSet) -> Result<()> {
    for rec in set.records() {
        let label = rec.label.as_deref().unwrap_or("");
        if has_text_breakers(&rec.id) || has_text_breakers(label) {
            return Err(Error::TextUnrepresentable {
                id: rec.id.clone(),
            });
        }
        write!(sink, "{}\t{}\t", rec.id, label)?;
        for (i, v) in rec.vector.iter().enumerate() {
            if i > 0 {
                write!(sink, ",")?;
            }
            write!(sink, "{v}")?;
        }
        writeln!(sink)?;
    }
    Ok(())
}

fn has_text_breakers(s: &str) -> bool {
    s.contains('\t') || s.contains('\n')
}

fn load_binary<R: Read>(source: R, role: SetRole) -> Result<EmbeddingSet> {
    let mut r = BufReader::new(source);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Binary("bad magic".into()));
    }
    let n = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(read_string(&mut r)?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = read_string(&mut r)?;
        labels.push(if label.is_empty() { None } else { Some(label) });
    }
    let mut rows = Vec::with_capacity(n);
    for (id, label) in ids.into_iter().zip(labels) {
        let mut vector = Vec::with_capacity(d);
        for _ in 0..d {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)?;
            vector.push(f32::from_le_bytes(buf));
        }
        rows.push((id, label, vector));
    }
    EmbeddingSet::from_raw(role, rows)
}

fn save_binary<W: Write>(sink: &mut W, set: &EmbeddingSet) -> Result<()> {
    sink.write_all(BINARY_MAGIC)?;
    write_u32(sink, set.len() as u32)?;
    write_u32(sink, set.dimension().unwrap_or(0) as u32)?;
    for rec in set.records() {
        write_string(sink, &rec.id)?;
    }
    for rec in set.records() {
        write_string(sink, rec.label.as_deref().unwrap_or(""))?;
    }
    for rec in set.records() {
        for v in &rec.vector {
            sink.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Binary("invalid UTF-8 in string field".into()))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}
