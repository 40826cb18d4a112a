//! Dense cosine-similarity kernels over embedding sets.

use std::io::Write;

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::objective::{self, ObjectiveConfig};

/// Symmetric matrix of pairwise cosine similarities over an index universe.
///
/// Entries are clamped to `[-1, 1]` after computation so floating-point
/// drift cannot push them outside the valid cosine range, the diagonal is
/// exactly 1, and entry `(i, j)` is stored once and mirrored, so the matrix
/// is exactly symmetric. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SimilarityKernel {
    size: usize,
    entries: Vec<f64>,
    index_map: Vec<String>,
}

impl SimilarityKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Similarity between positions `i` and `j`.
    #[inline]
    pub fn sim(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    /// Row `i` as a slice of length `size`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    /// Record id behind position `i`.
    pub fn id(&self, i: usize) -> &str {
        &self.index_map[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.index_map
    }

    pub(crate) fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.size {
            Err(Error::IndexOutOfBounds {
                index,
                size: self.size,
            })
        } else {
            Ok(())
        }
    }
}

/// Build the cosine kernel over `set_a`, or over the concatenated universe
/// `set_a ++ set_b` when a second set is given (positions of `set_b` follow
/// those of `set_a`). Dot products of the f64 unit vectors, clamped.
pub fn cosine_kernel(
    set_a: &EmbeddingSet,
    set_b: Option<&EmbeddingSet>,
) -> Result<SimilarityKernel> {
    if let Some(b) = set_b {
        if let (Some(da), Some(db)) = (set_a.dimension(), b.dimension()) {
            if da != db {
                return Err(Error::SetDimensionMismatch {
                    left: da,
                    right: db,
                });
            }
        }
    }
    let units: Vec<&[f64]> = set_a
        .records()
        .iter()
        .chain(set_b.into_iter().flat_map(|b| b.records().iter()))
        .map(|r| r.unit.as_slice())
        .collect();
    let index_map: Vec<String> = set_a
        .records()
        .iter()
        .chain(set_b.into_iter().flat_map(|b| b.records().iter()))
        .map(|r| r.id.clone())
        .collect();

    let n = units.len();
    let mut entries = vec![0.0f64; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let dot: f64 = units[i]
                .iter()
                .zip(units[j])
                .map(|(a, b)| a * b)
                .sum();
            let w = dot.clamp(-1.0, 1.0);
            entries[i * n + j] = w;
            entries[j * n + i] = w;
        }
    }
    Ok(SimilarityKernel {
        size: n,
        entries,
        index_map,
    })
}

/// Spread statistics of a selected subset; the numeric stand-in for eyeballing
/// a 2-D projection of the selected vectors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DispersionStats {
    pub mean_pairwise_sim: f64,
    pub min_pairwise_sim: f64,
    pub logdet: f64,
}

/// Mean and minimum off-diagonal similarity over `subset`, plus
/// `log det(W_subset)` under the same residual floor the objective uses.
pub fn dispersion_stats(
    kernel: &SimilarityKernel,
    subset: &[usize],
    config: &ObjectiveConfig,
) -> Result<DispersionStats> {
    if subset.len() < 2 {
        return Err(Error::SubsetTooSmall {
            min: 2,
            got: subset.len(),
        });
    }
    for &i in subset {
        kernel.check_index(i)?;
    }
    let mut mean = 0.0;
    let mut min = f64::INFINITY;
    let mut pairs = 0usize;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            if i == j {
                return Err(Error::DuplicateIndex { index: i });
            }
            let w = kernel.sim(i, j);
            mean += w;
            min = min.min(w);
            pairs += 1;
        }
    }
    Ok(DispersionStats {
        mean_pairwise_sim: mean / pairs as f64,
        min_pairwise_sim: min,
        logdet: objective::log_det_diversity(kernel, subset, config)?,
    })
}

/// Debug export: little-endian `u32` size header followed by the row-major
/// f64 entries.
pub fn export_kernel<W: Write>(sink: &mut W, kernel: &SimilarityKernel) -> Result<()> {
    sink.write_all(&(kernel.size as u32).to_le_bytes())?;
    for v in &kernel.entries {
        sink.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
