//! Incrementally extended Cholesky factor with a residual floor.
//!
//! The factor grows one row per committed element. Each extension solves
//! `L z = w` (w = similarities between the candidate and the committed
//! elements) and the squared projection residual `1 - |z|^2` becomes the
//! new squared diagonal. Residuals below the floor mark the row as
//! degenerate: it contributes `ln(floor)` to the log-determinant, is stored
//! with diagonal `sqrt(floor)`, and is excluded from the projection basis.
//! Without that exclusion, solve noise passing through a floored pivot is
//! amplified by `1/sqrt(floor)` at every later degenerate row and the
//! factor overflows once the selection exceeds the embedding rank.

#[derive(Debug, Clone)]
pub(crate) struct CholFactor {
    /// Row `i` holds `i` sub-diagonal entries followed by the diagonal.
    rows: Vec<Vec<f64>>,
    degenerate: Vec<bool>,
    floor: f64,
}

impl CholFactor {
    pub fn new(floor: f64) -> Self {
        CholFactor {
            rows: Vec::new(),
            degenerate: Vec::new(),
            floor,
        }
    }

    /// Forward-substitute `w` (similarities to the committed elements, in
    /// commit order) and return the projection coefficients together with
    /// the raw squared residual `1 - |z|^2`. Degenerate coordinates are
    /// pinned to zero; they are not part of the spanned basis.
    pub fn solve(&self, w: &[f64]) -> (Vec<f64>, f64) {
        debug_assert_eq!(w.len(), self.rows.len());
        let mut z = vec![0.0f64; w.len()];
        let mut norm_sq = 0.0;
        for j in 0..w.len() {
            if self.degenerate[j] {
                continue;
            }
            let row = &self.rows[j];
            let mut acc = w[j];
            for (l, &zl) in z[..j].iter().enumerate() {
                if zl != 0.0 {
                    acc -= row[l] * zl;
                }
            }
            let zj = acc / row[j];
            z[j] = zj;
            norm_sq += zj * zj;
        }
        (z, 1.0 - norm_sq)
    }

    /// Append the row for a committed element and return its contribution
    /// to the log-determinant, `ln(max(residual_sq, floor))`.
    pub fn push(&mut self, mut z: Vec<f64>, residual_sq: f64) -> f64 {
        debug_assert_eq!(z.len(), self.rows.len());
        let degenerate = !(residual_sq >= self.floor) || residual_sq <= 0.0;
        let (diag_sq, contribution) = if degenerate {
            (self.floor, self.floor.ln())
        } else {
            (residual_sq, residual_sq.ln())
        };
        z.push(diag_sq.sqrt());
        self.rows.push(z);
        self.degenerate.push(degenerate);
        contribution
    }

    /// Diagonal of the factor, in commit order.
    pub fn diagonal(&self) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row[i])
            .collect()
    }
}
