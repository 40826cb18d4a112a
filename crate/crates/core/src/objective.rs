//! Coverage, log-determinant diversity, and their weighted combination,
//! with incremental marginal-gain evaluation.
//!
//! For a selection `S` over a universe `V`:
//!
//! * coverage:  `C(S) = sum_{i in V} max_{j in S} w_ij`
//! * diversity: `D(S) = log det(W_S)`, each Cholesky step floored
//! * objective: `f(S) = C(S) + lambda * D(S)`
//!
//! Empty-set conventions: `C({}) = D({}) = f({}) = 0`, so the first greedy
//! gain equals `f({x})`.

use serde::{Deserialize, Serialize};

use crate::chol::CholFactor;
use crate::error::{Error, Result};
use crate::kernel::SimilarityKernel;

/// How exactly-equal gains are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestIndex,
}

/// Knobs shared by every objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Trade-off weight on the diversity term.
    pub lambda: f64,
    /// Floor for each squared Cholesky residual; keeps duplicate directions
    /// at a large finite penalty of `ln(residual_floor)` instead of -inf.
    pub residual_floor: f64,
    /// Stage 1 budget.
    pub k1: usize,
    /// Stage 2 budget.
    pub k: usize,
    pub tie_break: TieBreak,
    /// Keep selecting past the point where the best marginal gain turns
    /// negative. Off by default: a negative best gain stops stage 1 early.
    pub allow_negative_gain: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: 0.1,
            residual_floor: 1e-12,
            k1: 100,
            k: 3,
            tie_break: TieBreak::LowestIndex,
            allow_negative_gain: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.residual_floor > 0.0 && self.residual_floor < 1.0) {
            return Err(Error::Config(format!(
                "residual_floor must lie in (0, 1), got {}",
                self.residual_floor
            )));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.k > self.k1 {
            return Err(Error::Config(format!(
                "k ({}) must not exceed k1 ({})",
                self.k, self.k1
            )));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

fn check_selection(kernel: &SimilarityKernel, s: &[usize], require_distinct: bool) -> Result<()> {
    let mut seen = vec![false; kernel.size()];
    for &i in s {
        kernel.check_index(i)?;
        if require_distinct {
            if seen[i] {
                return Err(Error::DuplicateIndex { index: i });
            }
            seen[i] = true;
        }
    }
    Ok(())
}

/// Facility-location coverage of `s` over `universe`. Errors on empty `s`;
/// callers wanting `C({}) = 0` go through [`objective_value`].
pub fn coverage(kernel: &SimilarityKernel, universe: &[usize], s: &[usize]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySelection);
    }
    check_selection(kernel, s, false)?;
    check_selection(kernel, universe, false)?;
    let mut total = 0.0;
    for &i in universe {
        let mut best = f64::NEG_INFINITY;
        for &j in s {
            best = best.max(kernel.sim(i, j));
        }
        total += best;
    }
    Ok(total)
}

/// `log det(W_s)` via the floored incremental Cholesky, processing `s` in
/// the given order. `D({}) = 0` (the empty determinant is 1).
pub fn log_det_diversity(
    kernel: &SimilarityKernel,
    s: &[usize],
    config: &ObjectiveConfig,
) -> Result<f64> {
    check_selection(kernel, s, true)?;
    let mut factor = CholFactor::new(config.residual_floor);
    let mut logdet = 0.0;
    for (step, &idx) in s.iter().enumerate() {
        let w: Vec<f64> = s[..step].iter().map(|&j| kernel.sim(j, idx)).collect();
        let (z, res) = factor.solve(&w);
        logdet += factor.push(z, res);
    }
    Ok(logdet)
}

/// Decomposed objective value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveValue {
    pub f: f64,
    pub coverage: f64,
    pub diversity: f64,
}

/// `f(S) = C(S) + lambda * D(S)` with the empty-set conventions.
pub fn objective_value(
    kernel: &SimilarityKernel,
    universe: &[usize],
    s: &[usize],
    config: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    if s.is_empty() {
        return Ok(ObjectiveValue {
            f: 0.0,
            coverage: 0.0,
            diversity: 0.0,
        });
    }
    let c = coverage(kernel, universe, s)?;
    let d = log_det_diversity(kernel, s, config)?;
    Ok(ObjectiveValue {
        f: c + config.lambda * d,
        coverage: c,
        diversity: d,
    })
}

/// Marginal quantities of one candidate against a frozen state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gain {
    /// `f(S + x) - f(S)` under the floored diversity term.
    pub gain: f64,
    pub coverage_delta: f64,
    /// `ln(max(residual_sq, floor))`, before the lambda weight.
    pub diversity_delta: f64,
    /// Raw squared projection residual of the candidate's unit vector
    /// against the span of the selected set; may undershoot the floor.
    pub residual_sq: f64,
}

/// Incremental evaluation state: the chosen indices, a per-universe-element
/// best-similarity cache for coverage, and the growing Cholesky factor for
/// the log-determinant. Single writer; `marginal_gain` is read-only and may
/// run concurrently against a frozen state.
#[derive(Debug, Clone)]
pub struct SelectionState<'a> {
    kernel: &'a SimilarityKernel,
    universe: &'a [usize],
    config: ObjectiveConfig,
    selected: Vec<usize>,
    selected_mask: Vec<bool>,
    coverage_cache: Vec<f64>,
    chol: CholFactor,
    coverage: f64,
    logdet: f64,
}

impl<'a> SelectionState<'a> {
    pub fn new(
        kernel: &'a SimilarityKernel,
        universe: &'a [usize],
        config: &ObjectiveConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_selection(kernel, universe, false)?;
        Ok(SelectionState {
            kernel,
            universe,
            config: *config,
            selected: Vec::new(),
            selected_mask: vec![false; kernel.size()],
            coverage_cache: vec![f64::NEG_INFINITY; universe.len()],
            chol: CholFactor::new(config.residual_floor),
            coverage: 0.0,
            logdet: 0.0,
        })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn is_selected(&self, index: usize) -> bool {
        self.selected_mask.get(index).copied().unwrap_or(false)
    }

    /// Running `C(S)`; 0 while empty.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    /// Running `D(S)`; 0 while empty.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Running `f(S)`.
    pub fn objective(&self) -> f64 {
        self.coverage + self.config.lambda * self.logdet
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn universe(&self) -> &[usize] {
        self.universe
    }

    /// Diagonal of the Cholesky factor, one entry per commit.
    pub fn chol_diagonal(&self) -> Vec<f64> {
        self.chol.diagonal()
    }

    fn evaluate(&self, candidate: usize) -> Result<(Gain, Vec<f64>)> {
        self.kernel.check_index(candidate)?;
        if self.selected_mask[candidate] {
            return Err(Error::AlreadySelected { index: candidate });
        }
        let coverage_delta = if self.selected.is_empty() {
            self.universe
                .iter()
                .map(|&i| self.kernel.sim(i, candidate))
                .sum()
        } else {
            self.universe
                .iter()
                .zip(&self.coverage_cache)
                .map(|(&i, &cached)| (self.kernel.sim(i, candidate) - cached).max(0.0))
                .sum()
        };
        let w: Vec<f64> = self
            .selected
            .iter()
            .map(|&j| self.kernel.sim(j, candidate))
            .collect();
        let (z, residual_sq) = self.chol.solve(&w);
        let diversity_delta = residual_sq.max(self.config.residual_floor).ln();
        Ok((
            Gain {
                gain: coverage_delta + self.config.lambda * diversity_delta,
                coverage_delta,
                diversity_delta,
                residual_sq,
            },
            z,
        ))
    }

    /// `f(S + candidate) - f(S)` without mutating the state.
    pub fn marginal_gain(&self, candidate: usize) -> Result<Gain> {
        self.evaluate(candidate).map(|(gain, _)| gain)
    }

    /// Append `candidate`, updating the coverage cache, the Cholesky factor,
    /// and the running totals consistently with [`Self::marginal_gain`].
    pub fn commit(&mut self, candidate: usize) -> Result<Gain> {
        let (gain, z) = self.evaluate(candidate)?;
        if self.selected.is_empty() {
            for (slot, &i) in self.coverage_cache.iter_mut().zip(self.universe) {
                *slot = self.kernel.sim(i, candidate);
            }
        } else {
            for (slot, &i) in self.coverage_cache.iter_mut().zip(self.universe) {
                *slot = slot.max(self.kernel.sim(i, candidate));
            }
        }
        self.chol.push(z, gain.residual_sq);
        self.coverage += gain.coverage_delta;
        self.logdet += gain.diversity_delta;
        self.selected.push(candidate);
        self.selected_mask[candidate] = true;
        Ok(gain)
    }
}

/// Conditional marginal gain `f({x} + Q) - f(Q)` over a kernel spanning the
/// corpus/query union, evaluated with the same coverage universe, lambda,
/// and floors as everything else.
pub fn conditional_gain(
    kernel_union: &SimilarityKernel,
    q: &[usize],
    x: usize,
    universe: &[usize],
    config: &ObjectiveConfig,
) -> Result<f64> {
    if q.contains(&x) {
        return Err(Error::InConditioningSet { index: x });
    }
    let mut state = SelectionState::new(kernel_union, universe, config)?;
    for &qi in q {
        state.commit(qi)?;
    }
    Ok(state.marginal_gain(x)?.gain)
}
