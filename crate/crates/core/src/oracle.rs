//! Independent reference implementations used to validate the optimized
//! paths: determinants by direct elimination, coverage by a plain double
//! loop, exhaustive subset enumeration, and the property harnesses built
//! on top of them. Nothing here shares code with the incremental paths
//! beyond the kernel container itself.

use serde::{Deserialize, Serialize};

use crate::chol::CholFactor;
use crate::error::{Error, Result};
use crate::kernel::SimilarityKernel;
use crate::objective::ObjectiveConfig;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Enumeration guard for the exhaustive-subset oracles.
pub const ENUMERATION_GUARD: usize = 20;
/// Guard for the 3^n subset-pair property checks.
pub const PROPERTY_GUARD: usize = 12;
/// Guard for the projection-identity sampler.
pub const PROJECTION_GUARD: usize = 10;

/// Which objective term a property check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Coverage,
    Diversity,
    Combined,
}

impl std::str::FromStr for CheckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coverage" => Ok(CheckMode::Coverage),
            "diversity" => Ok(CheckMode::Diversity),
            "combined" => Ok(CheckMode::Combined),
            other => Err(Error::Config(format!("unknown check mode `{other}`"))),
        }
    }
}

/// An exact counterexample found by a property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Generator seed of the instance the witness came from.
    pub seed: u64,
    pub s: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_prime: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a property check; the property passes iff `failures` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property_name: String,
    pub instances_checked: usize,
    pub failures: Vec<Witness>,
    pub tolerance: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Fold another instance's report into this one (same property).
    pub fn absorb(&mut self, other: PropertyReport) {
        debug_assert_eq!(self.property_name, other.property_name);
        self.instances_checked += other.instances_checked;
        self.failures.extend(other.failures);
    }

    /// Line-oriented summary, one header block plus one line per witness
    /// (capped at 20).
    pub fn text_summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "property: {}\ninstances_checked: {}\ntolerance: {:e}\nfailures: {}\n",
            self.property_name,
            self.instances_checked,
            self.tolerance,
            self.failures.len()
        ));
        for w in self.failures.iter().take(20) {
            out.push_str(&format!(
                "  seed={} s={:?} s_prime={:?} x={:?} lhs={} rhs={}\n",
                w.seed, w.s, w.s_prime, w.x, w.lhs, w.rhs
            ));
        }
        if self.failures.len() > 20 {
            out.push_str(&format!("  ... {} more\n", self.failures.len() - 20));
        }
        out
    }
}

const TOLERANCE: f64 = 1e-9;

/// Determinant by Gaussian elimination with partial pivoting.
fn det_lu(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0f64;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            if factor != 0.0 {
                for k in col..n {
                    m[row][k] -= factor * m[col][k];
                }
            }
        }
    }
    det
}

fn submatrix(kernel: &SimilarityKernel, s: &[usize]) -> Vec<Vec<f64>> {
    s.iter()
        .map(|&i| s.iter().map(|&j| kernel.sim(i, j)).collect())
        .collect()
}

/// `det(W_s)` by direct elimination.
pub fn determinant(kernel: &SimilarityKernel, s: &[usize]) -> f64 {
    det_lu(submatrix(kernel, s))
}

/// Coverage by the defining double loop.
pub fn coverage_brute(kernel: &SimilarityKernel, universe: &[usize], s: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in universe {
        let mut best = f64::NEG_INFINITY;
        for &j in s {
            let w = kernel.sim(i, j);
            if w > best {
                best = w;
            }
        }
        total += best;
    }
    total
}

/// From-scratch objective: brute coverage plus `lambda * ln det`, with
/// `ln det <= 0` collapsing to -inf on numerically nonpositive determinants.
/// The diversity term is skipped entirely at `lambda = 0`.
pub fn objective_oracle(
    kernel: &SimilarityKernel,
    universe: &[usize],
    s: &[usize],
    lambda: f64,
) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let c = coverage_brute(kernel, universe, s);
    if lambda == 0.0 {
        return c;
    }
    let det = determinant(kernel, s);
    let d = if det > 0.0 {
        det.ln()
    } else {
        f64::NEG_INFINITY
    };
    c + lambda * d
}

/// Exhaustive maximizer of `f` over subsets of size `1..=budget`, lowest
/// lexicographic on ties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceOptimum {
    pub s_opt: Vec<usize>,
    pub f_opt: f64,
}

pub fn brute_force_optimum(
    kernel: &SimilarityKernel,
    universe: &[usize],
    budget: usize,
    config: &ObjectiveConfig,
) -> Result<BruteForceOptimum> {
    let n = universe.len();
    if n > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard {
            n,
            guard: ENUMERATION_GUARD,
        });
    }
    if n == 0 {
        return Err(Error::EmptyUniverse);
    }
    if budget == 0 || budget > n {
        return Err(Error::Config(format!(
            "budget must lie in 1..={n}, got {budget}"
        )));
    }
    let mut sorted = universe.to_vec();
    sorted.sort_unstable();
    let mut best: Option<BruteForceOptimum> = None;
    for size in 1..=budget {
        for combo in itertools::Itertools::combinations(sorted.iter().copied(), size) {
            let f = objective_oracle(kernel, universe, &combo, config.lambda);
            let better = match &best {
                None => true,
                Some(b) => f > b.f_opt,
            };
            if better {
                best = Some(BruteForceOptimum {
                    s_opt: combo,
                    f_opt: f,
                });
            }
        }
    }
    Ok(best.expect("budget >= 1 over a nonempty universe"))
}

fn mask_to_subset(mask: u32, universe: &[usize]) -> Vec<usize> {
    universe
        .iter()
        .enumerate()
        .filter(|(pos, _)| mask & (1 << pos) != 0)
        .map(|(_, &idx)| idx)
        .collect()
}

/// Per-mask objective tables over universe positions.
fn value_table(
    kernel: &SimilarityKernel,
    universe: &[usize],
    mode: CheckMode,
    lambda: f64,
) -> Vec<f64> {
    let m = universe.len();
    let mut values = vec![0.0f64; 1 << m];
    for mask in 1u32..(1 << m) as u32 {
        let subset = mask_to_subset(mask, universe);
        values[mask as usize] = match mode {
            CheckMode::Coverage => coverage_brute(kernel, universe, &subset),
            CheckMode::Diversity => {
                let det = determinant(kernel, &subset);
                if det > 0.0 {
                    det.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            CheckMode::Combined => objective_oracle(kernel, universe, &subset, lambda),
        };
    }
    values
}

fn guard_property(universe: &[usize]) -> Result<()> {
    if universe.len() > PROPERTY_GUARD {
        return Err(Error::EnumerationGuard {
            n: universe.len(),
            guard: PROPERTY_GUARD,
        });
    }
    Ok(())
}

/// Exhaustive directional check: coverage and the combined objective must
/// not decrease when an element is added; diversity must not increase.
///
/// Coverage and diversity modes quantify over nonempty selections, which
/// is the domain the claims are about; the empty values are a greedy
/// bootstrapping convention, and with negative similarities a row-sum
/// first step can legitimately sit below zero. Combined mode includes the
/// empty set: it guards the regime the greedy approximation ratio needs,
/// where the first step participates.
pub fn check_monotonicity(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
    mode: CheckMode,
    instance_seed: u64,
) -> Result<PropertyReport> {
    guard_property(universe)?;
    let m = universe.len();
    let values = value_table(kernel, universe, mode, config.lambda);
    let first_mask = if mode == CheckMode::Combined { 0 } else { 1 };
    let mut failures = Vec::new();
    for mask in first_mask..(1 << m) as u32 {
        for pos in 0..m {
            if mask & (1 << pos) != 0 {
                continue;
            }
            let with = mask | (1 << pos);
            let (lhs, rhs) = (values[with as usize], values[mask as usize]);
            let ok = match mode {
                CheckMode::Diversity => lhs <= rhs + TOLERANCE,
                _ => lhs >= rhs - TOLERANCE,
            };
            if !ok {
                failures.push(Witness {
                    seed: instance_seed,
                    s: mask_to_subset(mask, universe),
                    s_prime: None,
                    x: Some(universe[pos]),
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(PropertyReport {
        property_name: format!("monotonicity/{mode:?}").to_lowercase(),
        instances_checked: 1,
        failures,
        tolerance: TOLERANCE,
    })
}

/// Exhaustive diminishing-returns check over every `S subset of S'` and
/// `x` outside `S'`. The quantification domain follows
/// [`check_monotonicity`]: the inner set must be nonempty except in
/// combined mode, where the empty set participates.
pub fn check_submodularity(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
    mode: CheckMode,
    instance_seed: u64,
) -> Result<PropertyReport> {
    guard_property(universe)?;
    let m = universe.len();
    let values = value_table(kernel, universe, mode, config.lambda);
    let include_empty = mode == CheckMode::Combined;
    let mut failures = Vec::new();
    for sp in 0u32..(1 << m) as u32 {
        let mut s = sp;
        loop {
            if s == 0 && !include_empty {
                break;
            }
            for pos in 0..m {
                if sp & (1 << pos) != 0 {
                    continue;
                }
                let bit = 1u32 << pos;
                let small = values[(s | bit) as usize] - values[s as usize];
                let large = values[(sp | bit) as usize] - values[sp as usize];
                if !(small >= large - TOLERANCE) {
                    failures.push(Witness {
                        seed: instance_seed,
                        s: mask_to_subset(s, universe),
                        s_prime: Some(mask_to_subset(sp, universe)),
                        x: Some(universe[pos]),
                        lhs: small,
                        rhs: large,
                    });
                }
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & sp;
        }
    }
    Ok(PropertyReport {
        property_name: format!("submodularity/{mode:?}").to_lowercase(),
        instances_checked: 1,
        failures,
        tolerance: TOLERANCE,
    })
}

/// Exhaustive check that summed singleton conditional gains bound the joint
/// conditional gain from above: `f(T|Q) <= sum_{x in T} f({x}|Q)` for every
/// nonempty conditioning set `Q` (the conditional objective is only ever
/// applied against an actual query set) and nonempty `T` disjoint from it.
pub fn check_modular_upper_bound(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
    max_q: usize,
    max_t: usize,
    instance_seed: u64,
) -> Result<PropertyReport> {
    guard_property(universe)?;
    let m = universe.len();
    let values = value_table(kernel, universe, CheckMode::Combined, config.lambda);
    let mut failures = Vec::new();
    for q in 1u32..(1 << m) as u32 {
        if (q.count_ones() as usize) > max_q {
            continue;
        }
        let complement = !q & ((1u32 << m) - 1);
        let mut t = complement;
        loop {
            let size = t.count_ones() as usize;
            if size >= 1 && size <= max_t {
                let lhs = values[(q | t) as usize] - values[q as usize];
                let mut rhs = 0.0;
                for pos in 0..m {
                    if t & (1 << pos) != 0 {
                        rhs += values[(q | (1 << pos)) as usize] - values[q as usize];
                    }
                }
                if !(lhs <= rhs + TOLERANCE) {
                    failures.push(Witness {
                        seed: instance_seed,
                        s: mask_to_subset(t, universe),
                        s_prime: Some(mask_to_subset(q, universe)),
                        x: None,
                        lhs,
                        rhs,
                    });
                }
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & complement;
        }
    }
    Ok(PropertyReport {
        property_name: "modular_upper_bound".into(),
        instances_checked: 1,
        failures,
        tolerance: TOLERANCE,
    })
}

/// Sampled check of the determinant extension identity
/// `det(W_{S+x}) = det(W_S) * residual_sq(x | S)`, with the floor disabled
/// on the incremental side since the identity is about the raw residual.
pub fn check_projection_identity(
    kernel: &SimilarityKernel,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let n = kernel.size();
    if n > PROJECTION_GUARD {
        return Err(Error::EnumerationGuard {
            n,
            guard: PROJECTION_GUARD,
        });
    }
    if n == 0 {
        return Err(Error::EmptyUniverse);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    const RTOL: f64 = 1e-7;
    const ATOL: f64 = 1e-12;
    for _ in 0..trials {
        let size = rand::Rng::random_range(&mut rng, 0..n);
        let picks = rand::seq::index::sample(&mut rng, n, size + 1);
        let mut s: Vec<usize> = picks.iter().take(size).collect();
        s.sort_unstable();
        let x = picks.index(size);

        let mut factor = CholFactor::new(0.0);
        for (step, &idx) in s.iter().enumerate() {
            let w: Vec<f64> = s[..step].iter().map(|&j| kernel.sim(j, idx)).collect();
            let (z, res) = factor.solve(&w);
            factor.push(z, res);
        }
        let w_x: Vec<f64> = s.iter().map(|&j| kernel.sim(j, x)).collect();
        let (_, residual_sq) = factor.solve(&w_x);

        let det_s = determinant(kernel, &s); // empty -> det of 0x0 = 1
        let mut sx = s.clone();
        sx.push(x);
        let lhs = determinant(kernel, &sx);
        let rhs = det_s * residual_sq;
        if !((lhs - rhs).abs() <= RTOL * lhs.abs().max(rhs.abs()) + ATOL) {
            failures.push(Witness {
                seed,
                s,
                s_prime: None,
                x: Some(x),
                lhs,
                rhs,
            });
        }
    }
    Ok(PropertyReport {
        property_name: "projection_identity".into(),
        instances_checked: 1,
        failures,
        tolerance: RTOL,
    })
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

    #[test]
    fn determinant_matches_closed_forms() {
        // f32 storage of the inputs caps agreement around 1e-7
        let k = kernel_of(&[vec![1.0, 0.0], vec![0.5, 0.75f32.sqrt()]]);
        assert!((determinant(&k, &[0, 1]) - 0.75).abs() < 1e-7);
        assert_eq!(determinant(&k, &[]), 1.0);
        assert_eq!(determinant(&k, &[0]), 1.0);
    }

    #[test]
    fn orthogonal_budget_two_optimum() {
        let k = kernel_of(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let u = vec![0, 1, 2];
        let cfg = ObjectiveConfig::default().with_lambda(0.0);
        let opt = brute_force_optimum(&k, &u, 2, &cfg).unwrap();
        assert_eq!(opt.f_opt, 2.0);
        assert_eq!(opt.s_opt, vec![0, 1]); // lowest-lexicographic tie
    }

    #[test]
    fn monotone_instance_takes_full_universe() {
        let k = kernel_of(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let u = vec![0, 1, 2];
        let opt = brute_force_optimum(&k, &u, 3, &ObjectiveConfig::default()).unwrap();
        assert_eq!(opt.s_opt, vec![0, 1, 2]);
    }

    #[test]
    fn enumeration_guard_refuses_large_universes() {
        let set = synth::gaussian_instance(0, 21, 4, SetRole::Corpus);
        let k = cosine_kernel(&set, None).unwrap();
        let u: Vec<usize> = (0..21).collect();
        assert!(matches!(
            brute_force_optimum(&k, &u, 2, &ObjectiveConfig::default()),
            Err(Error::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn coverage_checks_pass_on_any_instance() {
        for seed in 0..10u64 {
            let set = synth::gaussian_instance(seed, 6, 3, SetRole::Corpus);
            let k = cosine_kernel(&set, None).unwrap();
            let u: Vec<usize> = (0..6).collect();
            let cfg = ObjectiveConfig::default();
            assert!(check_monotonicity(&k, &u, &cfg, CheckMode::Coverage, seed)
                .unwrap()
                .passed());
            assert!(check_submodularity(&k, &u, &cfg, CheckMode::Coverage, seed)
                .unwrap()
                .passed());
        }
    }

    #[test]
    fn diversity_checks_pass_in_general_position() {
        for seed in 0..10u64 {
            let set = synth::gaussian_instance(seed, 6, 8, SetRole::Corpus);
            let k = cosine_kernel(&set, None).unwrap();
            let u: Vec<usize> = (0..6).collect();
            let cfg = ObjectiveConfig::default();
            let mono = check_monotonicity(&k, &u, &cfg, CheckMode::Diversity, seed).unwrap();
            assert!(mono.passed(), "{}", mono.text_summary());
            let sub = check_submodularity(&k, &u, &cfg, CheckMode::Diversity, seed).unwrap();
            assert!(sub.passed(), "{}", sub.text_summary());
        }
    }

    #[test]
    fn oversized_lambda_breaks_combined_monotonicity() {
        // tight clusters: duplicate-ish picks crash the diversity term
        let set = synth::clustered_instance(3, 8, 4, 2, 0.02).unwrap();
        let k = cosine_kernel(&set, None).unwrap();
        let u: Vec<usize> = (0..8).collect();
        let cfg = ObjectiveConfig::default().with_lambda(10.0);
        let report = check_monotonicity(&k, &u, &cfg, CheckMode::Combined, 3).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn projection_identity_on_random_instances() {
        for seed in 0..20u64 {
            let n = 4 + (seed as usize % 6);
            let set = synth::gaussian_instance(seed, n, n + 2, SetRole::Corpus);
            let k = cosine_kernel(&set, None).unwrap();
            let report = check_projection_identity(&k, 20, seed).unwrap();
            assert!(report.passed(), "{}", report.text_summary());
        }
    }

    #[test]
    fn projection_identity_handles_rank_deficiency() {
        // duplicate directions: both sides of the identity collapse to ~0
        let k = kernel_of(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]);
        let report = check_projection_identity(&k, 50, 11).unwrap();
        assert!(report.passed(), "{}", report.text_summary());
    }

    #[test]
    fn modular_upper_bound_holds() {
        for seed in 0..5u64 {
            let set = synth::gaussian_instance(seed, 7, 9, SetRole::Corpus);
            let k = cosine_kernel(&set, None).unwrap();
            let u: Vec<usize> = (0..7).collect();
            let cfg = ObjectiveConfig::default();
            let report = check_modular_upper_bound(&k, &u, &cfg, 3, 3, seed).unwrap();
            assert!(report.passed(), "{}", report.text_summary());
        }
    }

    #[test]
    fn text_summary_shape() {
        let report = PropertyReport {
            property_name: "demo".into(),
            instances_checked: 2,
            failures: vec![],
            tolerance: 1e-9,
        };
        let text = report.text_summary();
        assert!(text.contains("property: demo"));
        assert!(text.contains("failures: 0"));
    }
}
