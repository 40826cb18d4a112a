//! The two selection phases: lazy-greedy retrieval of a candidate pool and
//! conditional ranking of that pool against a query set, plus the seeded
//! random/similarity baseline and a diagnostic for the trade-off weight.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SimilarityKernel;
use crate::objective::{self, ObjectiveConfig, SelectionState};

/// One committed stage-1 element with its marginal breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Step {
    pub index: usize,
    pub id: String,
    pub gain: f64,
    pub coverage_delta: f64,
    pub diversity_delta: f64,
}

/// One ranked stage-2 element. For the greedy methods `gain` is the
/// conditional marginal gain against the query set; for the similarity
/// baseline it is the mean cosine similarity to the queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Step {
    pub index: usize,
    pub id: String,
    pub gain: f64,
}

/// Everything stage 1 produces: the ordered selection, per-step records,
/// the objective value after each step, and any warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Outcome {
    pub selected: Vec<usize>,
    pub steps: Vec<Stage1Step>,
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Max-heap entry: a possibly stale gain plus the state version it was
/// computed against. Ordered by gain, ties to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    stale_gain: f64,
    candidate: usize,
    epoch: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.stale_gain
            .total_cmp(&other.stale_gain)
            .then_with(|| other.candidate.cmp(&self.candidate))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn validate_candidates(kernel: &SimilarityKernel, universe: &[usize]) -> Result<()> {
    if universe.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let mut seen = vec![false; kernel.size()];
    for &i in universe {
        kernel.check_index(i)?;
        if seen[i] {
            return Err(Error::DuplicateIndex { index: i });
        }
        seen[i] = true;
    }
    Ok(())
}

/// Phase 1: lazy greedy selection of at most `k1` elements.
///
/// The heap is seeded with the first-element gains `f({x})`. Popping an
/// entry whose gain was computed against the current state commits it
/// outright; otherwise the gain is refreshed and the element is committed
/// only if it still strictly beats the next (stale, hence upper-bounding)
/// heap head, else reinserted with the updated gain. Requiring a strict
/// win on refresh makes exact ties resolve to the lowest index, matching
/// [`naive_greedy`] on every instance.
///
/// One wrinkle: the first-element gains are plain similarity row sums
/// (the `C({}) = 0` convention), and with negative similarities those can
/// sit *below* a candidate's later gains, so they are not upper bounds.
/// All remaining gains are therefore recomputed once right after the
/// first commit; from any nonempty state on, marginal gains only shrink
/// and the stale-bound rule is exact.
///
/// Stops early when the best available gain is negative, unless
/// `allow_negative_gain` is set (then the first negative commit is only
/// warned about).
pub fn retrieve_stage1(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
) -> Result<Stage1Outcome> {
    config.validate()?;
    validate_candidates(kernel, universe)?;
    let mut state = SelectionState::new(kernel, universe, config)?;
    let mut heap = BinaryHeap::with_capacity(universe.len());
    for &c in universe {
        let g = state.marginal_gain(c)?;
        heap.push(HeapEntry {
            stale_gain: g.gain,
            candidate: c,
            epoch: 0,
        });
    }

    let mut steps = Vec::new();
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut warned_negative = false;

    while state.len() < config.k1 {
        let Some(top) = heap.pop() else {
            if state.len() < config.k1 {
                warnings.push(format!(
                    "stage1 exhausted the universe after {} of {} selections",
                    state.len(),
                    config.k1
                ));
            }
            break;
        };
        let epoch_now = state.len() as u32;
        let fresh_gain = if top.epoch == epoch_now {
            top.stale_gain
        } else {
            let g = state.marginal_gain(top.candidate)?;
            if let Some(next) = heap.peek() {
                if g.gain <= next.stale_gain {
                    heap.push(HeapEntry {
                        stale_gain: g.gain,
                        candidate: top.candidate,
                        epoch: epoch_now,
                    });
                    continue;
                }
            }
            g.gain
        };
        if fresh_gain < 0.0 {
            if !config.allow_negative_gain {
                warnings.push(format!(
                    "stage1 stopped early after {} of {} selections: best available gain {} is negative",
                    state.len(),
                    config.k1,
                    fresh_gain
                ));
                break;
            }
            if !warned_negative {
                warnings.push(format!(
                    "negative gain {} committed at step {}; lambda may exceed the monotone regime",
                    fresh_gain,
                    state.len() + 1
                ));
                warned_negative = true;
            }
        }
        let g = state.commit(top.candidate)?;
        steps.push(Stage1Step {
            index: top.candidate,
            id: kernel.id(top.candidate).to_string(),
            gain: g.gain,
            coverage_delta: g.coverage_delta,
            diversity_delta: g.diversity_delta,
        });
        trace.push(state.objective());
        if state.len() == 1 {
            // row-sum gains from the empty state are not upper bounds once
            // similarities can be negative; recompute everything once
            let remaining: Vec<HeapEntry> = heap.drain().collect();
            for entry in remaining {
                let g = state.marginal_gain(entry.candidate)?;
                heap.push(HeapEntry {
                    stale_gain: g.gain,
                    candidate: entry.candidate,
                    epoch: 1,
                });
            }
        }
    }

    Ok(Stage1Outcome {
        selected: state.selected().to_vec(),
        steps,
        objective_trace: trace,
        warnings,
    })
}

/// Plain greedy: every candidate gain recomputed each round. Reference
/// implementation used as the oracle for lazy-greedy equivalence.
pub fn naive_greedy(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
) -> Result<Vec<usize>> {
    config.validate()?;
    validate_candidates(kernel, universe)?;
    let mut state = SelectionState::new(kernel, universe, config)?;
    while state.len() < config.k1 {
        let mut best: Option<(f64, usize)> = None;
        for &c in universe {
            if state.is_selected(c) {
                continue;
            }
            let g = state.marginal_gain(c)?;
            let better = match best {
                None => true,
                Some((bg, bi)) => g.gain > bg || (g.gain == bg && c < bi),
            };
            if better {
                best = Some((g.gain, c));
            }
        }
        let Some((gain, index)) = best else { break };
        if gain < 0.0 && !config.allow_negative_gain {
            break;
        }
        state.commit(index)?;
    }
    Ok(state.selected().to_vec())
}

/// Phase 2: rank the stage-1 pool by singleton conditional gains against
/// the query set, computed exactly once each, and keep the top `k`
/// (ties to the lowest index), in descending-gain order.
pub fn rank_stage2(
    kernel_union: &SimilarityKernel,
    s_star: &[usize],
    q: &[usize],
    universe: &[usize],
    config: &ObjectiveConfig,
) -> Result<Vec<Stage2Step>> {
    config.validate()?;
    if s_star.is_empty() {
        return Err(Error::EmptySelection);
    }
    if q.is_empty() {
        return Err(Error::Config("stage 2 requires a nonempty query set".into()));
    }
    for &x in s_star {
        if q.contains(&x) {
            return Err(Error::InConditioningSet { index: x });
        }
    }
    let mut state = SelectionState::new(kernel_union, universe, config)?;
    for &qi in q {
        state.commit(qi)?;
    }
    let mut scored = Vec::with_capacity(s_star.len());
    for &x in s_star {
        let g = state.marginal_gain(x)?;
        scored.push(Stage2Step {
            index: x,
            id: kernel_union.id(x).to_string(),
            gain: g.gain,
        });
    }
    scored.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.index.cmp(&b.index)));
    scored.truncate(config.k.min(s_star.len()));
    Ok(scored)
}

/// A witness pair where the configured lambda makes the combined gain
/// negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaViolation {
    pub s: Vec<usize>,
    pub x: usize,
    pub coverage_delta: f64,
    pub diversity_drop: f64,
    pub combined_gain: f64,
}

/// Outcome of [`lambda_bound_probe`]. The estimate is the smallest observed
/// ratio `delta C / (D(S) - D(S+x))`; `None` means no sampled pair shrank
/// the diversity term, i.e. the bound is unconstrained (+inf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaProbe {
    pub max_valid_lambda_estimate: Option<f64>,
    pub violations: Vec<LambdaViolation>,
    pub trials: usize,
    pub skipped_trials: usize,
}

/// Empirical probe for how large the trade-off weight may get before the
/// combined objective loses monotonicity: samples random nonempty `(S, x)`
/// pairs and tracks the worst coverage-gain-to-diversity-drop ratio.
pub fn lambda_bound_probe(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
    trials: usize,
    seed: u64,
) -> Result<LambdaProbe> {
    config.validate()?;
    validate_candidates(kernel, universe)?;
    let n = universe.len();
    if n < 2 {
        // no (S, x) pair with nonempty S exists
        return Ok(LambdaProbe {
            max_valid_lambda_estimate: None,
            violations: Vec::new(),
            trials,
            skipped_trials: trials,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimate: Option<f64> = None;
    let mut violations = Vec::new();
    let mut skipped = 0usize;
    for _ in 0..trials {
        let size = rand::Rng::random_range(&mut rng, 1..=(n - 1).min(8));
        let picks = rand::seq::index::sample(&mut rng, n, size + 1);
        let mut s: Vec<usize> = picks.iter().take(size).map(|p| universe[p]).collect();
        let x = universe[picks.index(size)];
        s.sort_unstable();

        let c_s = objective::coverage(kernel, universe, &s)?;
        let mut sx = s.clone();
        sx.push(x);
        let coverage_delta = objective::coverage(kernel, universe, &sx)? - c_s;
        let d_s = objective::log_det_diversity(kernel, &s, config)?;
        let d_sx = objective::log_det_diversity(kernel, &sx, config)?;
        let diversity_drop = d_s - d_sx;

        if diversity_drop > 0.0 {
            let ratio = coverage_delta / diversity_drop;
            estimate = Some(match estimate {
                None => ratio,
                Some(e) => e.min(ratio),
            });
        } else {
            skipped += 1;
        }
        let combined_gain = coverage_delta - config.lambda * diversity_drop;
        if combined_gain < 0.0 {
            violations.push(LambdaViolation {
                s,
                x,
                coverage_delta,
                diversity_drop,
                combined_gain,
            });
        }
    }
    Ok(LambdaProbe {
        max_valid_lambda_estimate: estimate,
        violations,
        trials,
        skipped_trials: skipped,
    })
}

/// Seeded uniform stage-1 sample (without replacement, in draw order) for
/// the random/similarity baseline.
pub fn random_stage1(universe: &[usize], k1: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = k1.min(universe.len());
    rand::seq::index::sample(&mut rng, universe.len(), take)
        .iter()
        .map(|p| universe[p])
        .collect()
}

/// Baseline stage 2: rank the pool by mean cosine similarity to the query
/// set, descending, ties to the lowest index.
pub fn similarity_rank_stage2(
    kernel_union: &SimilarityKernel,
    s_star: &[usize],
    q: &[usize],
    k: usize,
) -> Result<Vec<Stage2Step>> {
    if s_star.is_empty() {
        return Err(Error::EmptySelection);
    }
    if q.is_empty() {
        return Err(Error::Config("stage 2 requires a nonempty query set".into()));
    }
    for &x in s_star {
        kernel_union.check_index(x)?;
    }
    for &qi in q {
        kernel_union.check_index(qi)?;
    }
    let mut scored: Vec<Stage2Step> = s_star
        .iter()
        .map(|&x| {
            let mean = q.iter().map(|&qi| kernel_union.sim(x, qi)).sum::<f64>() / q.len() as f64;
            Stage2Step {
                index: x,
                id: kernel_union.id(x).to_string(),
                gain: mean,
            }
        })
        .collect();
    scored.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.index.cmp(&b.index)));
    scored.truncate(k.min(s_star.len()));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{EmbeddingSet, SetRole};
    use crate::kernel::cosine_kernel;
    use crate::synth;

    fn kernel_of(vectors: &[Vec<f32>]) -> SimilarityKernel {
        let rows = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("v{i}"), None, v.clone()))
            .collect();
        cosine_kernel(&EmbeddingSet::from_raw(SetRole::Corpus, rows).unwrap(), None).unwrap()
    }

    fn cfg(lambda: f64, k1: usize) -> ObjectiveConfig {
        let mut c = ObjectiveConfig::default().with_lambda(lambda);
        c.k1 = k1;
        c.k = 1.min(k1).max(1);
        c
    }

    #[test]
    fn single_candidate_universe() {
        let k = kernel_of(&[vec![1.0, 0.0]]);
        let out = retrieve_stage1(&k, &[0], &cfg(0.1, 3)).unwrap();
        assert_eq!(out.selected, vec![0]);
        assert_eq!(out.steps.len(), 1);
        assert!((out.steps[0].gain - 1.0).abs() < 1e-12);
        assert_eq!(out.warnings.len(), 1); // universe exhausted below k1
        assert_eq!(naive_greedy(&k, &[0], &cfg(0.1, 3)).unwrap(), vec![0]);
    }

    #[test]
    fn orthogonal_ties_resolve_to_lowest_index() {
        let k = kernel_of(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let out = retrieve_stage1(&k, &[0, 1, 2], &cfg(0.1, 2)).unwrap();
        assert_eq!(out.selected, vec![0, 1]);
        for step in &out.steps {
            assert_eq!(step.diversity_delta, 0.0);
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn empty_universe_rejected() {
        let k = kernel_of(&[vec![1.0, 0.0]]);
        assert!(matches!(
            retrieve_stage1(&k, &[], &cfg(0.1, 2)),
            Err(Error::EmptyUniverse)
        ));
    }

    #[test]
    fn lazy_equals_naive_on_random_instances() {
        for seed in 0..60u64 {
            let n = 3 + (seed as usize % 10);
            let set = synth::gaussian_instance(seed, n, 4, SetRole::Corpus);
            let k = cosine_kernel(&set, None).unwrap();
            let u: Vec<usize> = (0..n).collect();
            let c = cfg([0.0, 0.1, 0.5][seed as usize % 3], 1 + seed as usize % 5);
            let lazy = retrieve_stage1(&k, &u, &c).unwrap().selected;
            let naive = naive_greedy(&k, &u, &c).unwrap();
            assert_eq!(lazy, naive, "seed {seed}");
        }
    }

    #[test]
    fn lazy_equals_naive_on_duplicate_ties() {
        // duplicated directions make exact gain ties at every step
        let base = synth::gaussian_instance(5, 4, 6, SetRole::Corpus);
        let mut vectors: Vec<Vec<f32>> = Vec::new();
        for rec in base.records() {
            vectors.push(rec.vector.clone());
            vectors.push(rec.vector.clone());
        }
        let k = kernel_of(&vectors);
        let u: Vec<usize> = (0..vectors.len()).collect();
        for lambda in [0.0, 0.1] {
            let c = cfg(lambda, 5);
            let lazy = retrieve_stage1(&k, &u, &c).unwrap().selected;
            let naive = naive_greedy(&k, &u, &c).unwrap();
            assert_eq!(lazy, naive, "lambda {lambda}");
        }
    }

    #[test]
    fn budget_is_respected() {
        let set = synth::gaussian_instance(11, 9, 5, SetRole::Corpus);
        let k = cosine_kernel(&set, None).unwrap();
        let u: Vec<usize> = (0..9).collect();
        let out = retrieve_stage1(&k, &u, &cfg(0.1, 4)).unwrap();
        assert_eq!(out.selected.len(), 4);
        assert_eq!(out.objective_trace.len(), 4);
    }

    #[test]
    fn negative_gain_stops_unless_allowed() {
        // two opposite directions plus their duplicates: after the first
        // two picks every remaining candidate has a floored diversity
        // delta, so a large lambda drives the best gain negative
        let k = kernel_of(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
        ]);
        let u = vec![0, 1, 2, 3];
        let mut c = cfg(10.0, 4);
        let out = retrieve_stage1(&k, &u, &c).unwrap();
        assert!(out.selected.len() < 4);
        assert!(out.warnings.iter().any(|w| w.contains("stopped early")));
        assert_eq!(out.selected, naive_greedy(&k, &u, &c).unwrap());

        c.allow_negative_gain = true;
        let out = retrieve_stage1(&k, &u, &c).unwrap();
        assert_eq!(out.selected.len(), 4);
        assert!(out.warnings.iter().any(|w| w.contains("negative gain")));
        assert_eq!(out.selected, naive_greedy(&k, &u, &c).unwrap());
    }

    #[test]
    fn stage2_full_budget_sorts_everything() {
        let set = synth::gaussian_instance(3, 6, 4, SetRole::Corpus);
        let k = cosine_kernel(&set, None).unwrap();
        let u: Vec<usize> = (0..6).collect();
        let mut c = ObjectiveConfig::default();
        c.k1 = 4;
        c.k = 4;
        let steps = rank_stage2(&k, &[0, 1, 2, 3], &[4, 5], &u, &c).unwrap();
        assert_eq!(steps.len(), 4);
        for pair in steps.windows(2) {
            assert!(pair[0].gain >= pair[1].gain);
        }
    }

    #[test]
    fn stage2_floors_query_duplicates_last() {
        // candidates 0..3 orthogonal; query 4 duplicates candidate 2
        let k = kernel_of(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]);
        let u: Vec<usize> = (0..5).collect();
        let mut c = ObjectiveConfig::default();
        c.k1 = 4;
        c.k = 4;
        let steps = rank_stage2(&k, &[0, 1, 2, 3], &[4], &u, &c).unwrap();
        assert_eq!(steps.last().unwrap().index, 2);
        let floored = steps.last().unwrap();
        // its diversity term contributes ln(floor), strictly separating it
        let runner_up = &steps[steps.len() - 2];
        assert!(floored.gain < runner_up.gain);
    }

    #[test]
    fn stage2_rejects_empty_inputs() {
        let k = kernel_of(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = ObjectiveConfig::default();
        assert!(rank_stage2(&k, &[], &[1], &[0, 1], &c).is_err());
        assert!(rank_stage2(&k, &[0], &[], &[0, 1], &c).is_err());
        assert!(matches!(
            rank_stage2(&k, &[1], &[1], &[0, 1], &c),
            Err(Error::InConditioningSet { index: 1 })
        ));
    }

    #[test]
    fn probe_lambda_zero_never_violates() {
        let set = synth::clustered_instance(9, 12, 4, 3, 0.1).unwrap();
        let k = cosine_kernel(&set, None).unwrap();
        let u: Vec<usize> = (0..12).collect();
        let probe =
            lambda_bound_probe(&k, &u, &ObjectiveConfig::default().with_lambda(0.0), 200, 1)
                .unwrap();
        assert!(probe.violations.is_empty());
    }

    #[test]
    fn probe_orthogonal_universe_is_unbounded() {
        let k = kernel_of(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let probe =
            lambda_bound_probe(&k, &[0, 1, 2], &ObjectiveConfig::default(), 100, 7).unwrap();
        assert_eq!(probe.max_valid_lambda_estimate, None);
        assert_eq!(probe.skipped_trials, 100);
    }

    #[test]
    fn probe_detects_oversized_lambda() {
        let set = synth::clustered_instance(21, 14, 4, 3, 0.05).unwrap();
        let k = cosine_kernel(&set, None).unwrap();
        let u: Vec<usize> = (0..14).collect();
        let first = lambda_bound_probe(&k, &u, &ObjectiveConfig::default(), 300, 3).unwrap();
        let estimate = first.max_valid_lambda_estimate.expect("clusters shrink D");
        let cfg = ObjectiveConfig::default().with_lambda(estimate * 2.0);
        let second = lambda_bound_probe(&k, &u, &cfg, 300, 3).unwrap();
        assert!(!second.violations.is_empty());
    }

    #[test]
    fn random_stage1_is_seeded_and_bounded() {
        let u: Vec<usize> = (0..20).collect();
        let a = random_stage1(&u, 5, 99);
        let b = random_stage1(&u, 5, 99);
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        let all = random_stage1(&u, 50, 99);
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn similarity_baseline_ranks_by_mean_similarity() {
        let k = kernel_of(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.9, 0.1],
        ]);
        let steps = similarity_rank_stage2(&k, &[0, 1], &[2], 2).unwrap();
        assert_eq!(steps[0].index, 0);
        assert!(steps[0].gain > steps[1].gain);
    }
}
