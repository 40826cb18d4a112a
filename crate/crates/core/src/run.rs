//! End-to-end selection runs: configuration merging, the method roster,
//! orchestration of both stages, and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embeddings::{load_embeddings, EmbeddingFormat, EmbeddingSet, SetRole};
use crate::error::{Error, Result};
use crate::kernel::{cosine_kernel, dispersion_stats, export_kernel, SimilarityKernel};
use crate::objective::{ObjectiveConfig, SelectionState, TieBreak};
use crate::prompt::{assemble_prompt, DEFAULT_TEMPLATE};
use crate::report::{ConfigEcho, SelectionReport};
use crate::selector::{
    random_stage1, rank_stage2, retrieve_stage1, similarity_rank_stage2, Stage1Outcome,
    Stage1Step, Stage2Step,
};

/// The method roster. All greedy variants share one code path and differ
/// only in how the per-stage lambdas resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Diversity-weighted retrieval and ranking.
    DualDiv,
    /// Coverage-only in both stages.
    DivS3,
    /// Diversity in stage 1 only.
    DivStarS3,
    /// Diversity in stage 2 only.
    DivS3Star,
    /// Seeded uniform stage-1 sample, mean-similarity stage-2 ranking.
    RandomSimilar,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual_div" => Ok(Method::DualDiv),
            "div_s3" => Ok(Method::DivS3),
            "div_star_s3" => Ok(Method::DivStarS3),
            "div_s3_star" => Ok(Method::DivS3Star),
            "random_similar" => Ok(Method::RandomSimilar),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Order of demonstrations inside an assembled prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoOrder {
    /// Stage-2 rank order (descending conditional gain). Default.
    GainDesc,
    /// Reversed, lowest gain first.
    GainAsc,
}

impl std::str::FromStr for DemoOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gain_desc" => Ok(DemoOrder::GainDesc),
            "gain_asc" => Ok(DemoOrder::GainAsc),
            other => Err(Error::Config(format!("unknown demo order `{other}`"))),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub query_path: PathBuf,
    pub format: EmbeddingFormat,
    pub lambda: f64,
    pub lambda_stage1: Option<f64>,
    pub lambda_stage2: Option<f64>,
    pub k1: usize,
    pub k: usize,
    pub method: Method,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub emit_prompt: bool,
    pub template_path: Option<PathBuf>,
    pub task_description: String,
    pub per_query: bool,
    pub residual_floor: f64,
    pub allow_negative_gain: bool,
    pub demo_order: DemoOrder,
    /// Also dump the corpus kernel as `kernel.bin` (u32 size header plus
    /// row-major little-endian f64 entries). Debug aid.
    pub export_kernel: bool,
}

impl RunConfig {
    /// Per-stage lambdas after applying the method wiring.
    pub fn resolved_lambdas(&self) -> (f64, f64) {
        let l1 = self.lambda_stage1.unwrap_or(self.lambda);
        let l2 = self.lambda_stage2.unwrap_or(self.lambda);
        match self.method {
            Method::DualDiv | Method::RandomSimilar => (l1, l2),
            Method::DivS3 => (0.0, 0.0),
            Method::DivStarS3 => (l1, 0.0),
            Method::DivS3Star => (0.0, l2),
        }
    }

    fn objective_config(&self, lambda: f64) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda,
            residual_floor: self.residual_floor,
            k1: self.k1,
            k: self.k,
            tie_break: TieBreak::LowestIndex,
            allow_negative_gain: self.allow_negative_gain,
        }
    }
}

/// Partial configuration from a config file or a flag set; later layers
/// override earlier ones field by field.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub corpus_path: Option<PathBuf>,
    pub query_path: Option<PathBuf>,
    pub format: Option<EmbeddingFormat>,
    pub lambda: Option<f64>,
    pub lambda_stage1: Option<f64>,
    pub lambda_stage2: Option<f64>,
    pub k1: Option<usize>,
    pub k: Option<usize>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub emit_prompt: Option<bool>,
    pub template_path: Option<PathBuf>,
    pub task_description: Option<String>,
    pub per_query: Option<bool>,
    pub residual_floor: Option<f64>,
    pub allow_negative_gain: Option<bool>,
    pub demo_order: Option<DemoOrder>,
    pub export_kernel: Option<bool>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value `{value}` for key `{key}`"),
    })
}

impl RunOverrides {
    /// Parse the line-oriented `key = value` config format. Blank lines and
    /// `#` comments are skipped; keys match the CLI flag names.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut o = RunOverrides::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "corpus" => o.corpus_path = Some(PathBuf::from(value)),
                "queries" => o.query_path = Some(PathBuf::from(value)),
                "format" => o.format = Some(parse_value(key, value, line)?),
                "lambda" => o.lambda = Some(parse_value(key, value, line)?),
                "lambda_stage1" => o.lambda_stage1 = Some(parse_value(key, value, line)?),
                "lambda_stage2" => o.lambda_stage2 = Some(parse_value(key, value, line)?),
                "k1" => o.k1 = Some(parse_value(key, value, line)?),
                "k" => o.k = Some(parse_value(key, value, line)?),
                "method" => o.method = Some(parse_value(key, value, line)?),
                "seed" => o.seed = Some(parse_value(key, value, line)?),
                "output_dir" => o.output_dir = Some(PathBuf::from(value)),
                "emit_prompt" => o.emit_prompt = Some(parse_value(key, value, line)?),
                "template" => o.template_path = Some(PathBuf::from(value)),
                "task_description" => o.task_description = Some(value.to_string()),
                "per_query" => o.per_query = Some(parse_value(key, value, line)?),
                "residual_floor" => o.residual_floor = Some(parse_value(key, value, line)?),
                "allow_negative_gain" => {
                    o.allow_negative_gain = Some(parse_value(key, value, line)?)
                }
                "demo_order" => o.demo_order = Some(parse_value(key, value, line)?),
                "export_kernel" => o.export_kernel = Some(parse_value(key, value, line)?),
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown config key `{other}`"),
                    })
                }
            }
        }
        Ok(o)
    }

    /// Overlay `self` (the louder layer) on top of `base`.
    pub fn over(self, base: RunOverrides) -> RunOverrides {
        RunOverrides {
            corpus_path: self.corpus_path.or(base.corpus_path),
            query_path: self.query_path.or(base.query_path),
            format: self.format.or(base.format),
            lambda: self.lambda.or(base.lambda),
            lambda_stage1: self.lambda_stage1.or(base.lambda_stage1),
            lambda_stage2: self.lambda_stage2.or(base.lambda_stage2),
            k1: self.k1.or(base.k1),
            k: self.k.or(base.k),
            method: self.method.or(base.method),
            seed: self.seed.or(base.seed),
            output_dir: self.output_dir.or(base.output_dir),
            emit_prompt: self.emit_prompt.or(base.emit_prompt),
            template_path: self.template_path.or(base.template_path),
            task_description: self.task_description.or(base.task_description),
            per_query: self.per_query.or(base.per_query),
            residual_floor: self.residual_floor.or(base.residual_floor),
            allow_negative_gain: self.allow_negative_gain.or(base.allow_negative_gain),
            demo_order: self.demo_order.or(base.demo_order),
            export_kernel: self.export_kernel.or(base.export_kernel),
        }
    }

    /// Fill defaults and demand the required paths.
    pub fn finalize(self) -> Result<RunConfig> {
        let corpus_path = self
            .corpus_path
            .ok_or_else(|| Error::Config("missing corpus path".into()))?;
        let query_path = self
            .query_path
            .ok_or_else(|| Error::Config("missing query path".into()))?;
        let output_dir = self
            .output_dir
            .ok_or_else(|| Error::Config("missing output directory".into()))?;
        let config = RunConfig {
            corpus_path,
            query_path,
            format: self.format.unwrap_or(EmbeddingFormat::Text),
            lambda: self.lambda.unwrap_or(0.1),
            lambda_stage1: self.lambda_stage1,
            lambda_stage2: self.lambda_stage2,
            k1: self.k1.unwrap_or(100),
            k: self.k.unwrap_or(3),
            method: self.method.unwrap_or(Method::DualDiv),
            seed: self.seed.unwrap_or(0),
            output_dir,
            emit_prompt: self.emit_prompt.unwrap_or(false),
            template_path: self.template_path,
            task_description: self.task_description.unwrap_or_default(),
            per_query: self.per_query.unwrap_or(false),
            residual_floor: self.residual_floor.unwrap_or(1e-12),
            allow_negative_gain: self.allow_negative_gain.unwrap_or(false),
            demo_order: self.demo_order.unwrap_or(DemoOrder::GainDesc),
            export_kernel: self.export_kernel.unwrap_or(false),
        };
        // reject contradictions before any compute
        config.objective_config(config.lambda).validate()?;
        for l in [config.lambda_stage1, config.lambda_stage2].into_iter().flatten() {
            config.objective_config(l).validate()?;
        }
        Ok(config)
    }
}

fn load_set(path: &Path, format: EmbeddingFormat, role: SetRole) -> Result<EmbeddingSet> {
    let file = fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    load_embeddings(file, format, role).map_err(|e| e.in_file(path))
}

/// Stage 1 for the random baseline: a seeded uniform sample, annotated with
/// the marginal breakdown of each sampled element in draw order so the
/// report stays comparable with the greedy methods.
fn random_stage1_outcome(
    kernel: &SimilarityKernel,
    universe: &[usize],
    config: &ObjectiveConfig,
    seed: u64,
) -> Result<Stage1Outcome> {
    if universe.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let picks = random_stage1(universe, config.k1, seed);
    let mut state = SelectionState::new(kernel, universe, config)?;
    let mut steps = Vec::with_capacity(picks.len());
    let mut trace = Vec::with_capacity(picks.len());
    let mut warnings = Vec::new();
    for &c in &picks {
        let g = state.commit(c)?;
        steps.push(Stage1Step {
            index: c,
            id: kernel.id(c).to_string(),
            gain: g.gain,
            coverage_delta: g.coverage_delta,
            diversity_delta: g.diversity_delta,
        });
        trace.push(state.objective());
    }
    if picks.len() < config.k1 {
        warnings.push(format!(
            "stage1 exhausted the universe after {} of {} selections",
            picks.len(),
            config.k1
        ));
    }
    Ok(Stage1Outcome {
        selected: picks,
        steps,
        objective_trace: trace,
        warnings,
    })
}

/// Execute a full two-stage run and write its artifacts under
/// `config.output_dir`:
///
/// * `report.json`, `report.txt` — the [`SelectionReport`]
/// * `stage1_ids.txt`, `stage2_ids.txt` — one id per line, in order
/// * `prompts/query_NNNN.txt` — when `emit_prompt` is set
///
/// Identical inputs and configuration produce byte-identical artifacts.
pub fn run_select(config: &RunConfig) -> Result<SelectionReport> {
    let (l1, l2) = config.resolved_lambdas();
    let cfg1 = config.objective_config(l1);
    let cfg2 = config.objective_config(l2);
    cfg1.validate()?;
    cfg2.validate()?;

    let corpus = load_set(&config.corpus_path, config.format, SetRole::Corpus)?;
    let queries = load_set(&config.query_path, config.format, SetRole::Query)?;
    if corpus.is_empty() {
        return Err(Error::EmptySet {
            path: config.corpus_path.display().to_string(),
        });
    }
    if queries.is_empty() {
        return Err(Error::EmptySet {
            path: config.query_path.display().to_string(),
        });
    }

    let corpus_kernel = cosine_kernel(&corpus, None)?;
    let universe: Vec<usize> = (0..corpus.len()).collect();
    let stage1 = match config.method {
        Method::RandomSimilar => {
            random_stage1_outcome(&corpus_kernel, &universe, &cfg1, config.seed)?
        }
        _ => retrieve_stage1(&corpus_kernel, &universe, &cfg1)?,
    };

    let union_kernel = cosine_kernel(&corpus, Some(&queries))?;
    let union_universe: Vec<usize> = (0..corpus.len() + queries.len()).collect();
    let q_indices: Vec<usize> =
        (corpus.len()..corpus.len() + queries.len()).collect();

    let rank = |q: &[usize]| -> Result<Vec<Stage2Step>> {
        match config.method {
            Method::RandomSimilar => {
                similarity_rank_stage2(&union_kernel, &stage1.selected, q, config.k)
            }
            _ => rank_stage2(&union_kernel, &stage1.selected, q, &union_universe, &cfg2),
        }
    };
    let stage2 = rank(&q_indices)?;
    let per_query_stage2 = if config.per_query {
        let mut all = Vec::with_capacity(q_indices.len());
        for &qi in &q_indices {
            all.push(rank(&[qi])?);
        }
        Some(all)
    } else {
        None
    };

    let dispersion_selected = if stage1.selected.len() >= 2 {
        Some(dispersion_stats(&corpus_kernel, &stage1.selected, &cfg1)?)
    } else {
        None
    };
    let coverage_only = retrieve_stage1(&corpus_kernel, &universe, &cfg1.with_lambda(0.0))?;
    let dispersion_coverage_only = if coverage_only.selected.len() >= 2 {
        Some(dispersion_stats(&corpus_kernel, &coverage_only.selected, &cfg1)?)
    } else {
        None
    };

    let report = SelectionReport {
        config_echo: ConfigEcho {
            lambda_stage1: l1,
            lambda_stage2: l2,
            residual_floor: config.residual_floor,
            k1: config.k1,
            k: config.k,
            tie_break: TieBreak::LowestIndex,
            allow_negative_gain: config.allow_negative_gain,
            seed: config.seed,
        },
        stage1: stage1.steps.clone(),
        objective_trace: stage1.objective_trace.clone(),
        stage2: stage2.clone(),
        per_query_stage2: per_query_stage2.clone(),
        dispersion_selected,
        dispersion_coverage_only,
        warnings: stage1.warnings.clone(),
    };

    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join("report.json"), report.to_json())?;
    fs::write(config.output_dir.join("report.txt"), report.to_text())?;
    let mut stage1_ids = String::new();
    for step in &stage1.steps {
        stage1_ids.push_str(&step.id);
        stage1_ids.push('\n');
    }
    fs::write(config.output_dir.join("stage1_ids.txt"), stage1_ids)?;
    let mut stage2_ids = String::new();
    for step in &stage2 {
        stage2_ids.push_str(&step.id);
        stage2_ids.push('\n');
    }
    fs::write(config.output_dir.join("stage2_ids.txt"), stage2_ids)?;
    if config.export_kernel {
        let mut buf = Vec::new();
        export_kernel(&mut buf, &corpus_kernel)?;
        fs::write(config.output_dir.join("kernel.bin"), buf)?;
    }

    if config.emit_prompt {
        let template = match &config.template_path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::from(e).in_file(p))?,
            None => DEFAULT_TEMPLATE.to_string(),
        };
        let demos_for = |steps: &[Stage2Step]| -> Vec<(String, String)> {
            let mut demos: Vec<(String, String)> = steps
                .iter()
                .map(|s| {
                    let rec = corpus.record(s.index);
                    (rec.id.clone(), rec.label.clone().unwrap_or_default())
                })
                .collect();
            if config.demo_order == DemoOrder::GainAsc {
                demos.reverse();
            }
            demos
        };
        let prompt_dir = config.output_dir.join("prompts");
        fs::create_dir_all(&prompt_dir)?;
        for (i, q) in queries.records().iter().enumerate() {
            let demos = match &per_query_stage2 {
                Some(per_query) => demos_for(&per_query[i]),
                None => demos_for(&stage2),
            };
            let text = assemble_prompt(&template, &config.task_description, &demos, &q.id)?;
            fs::write(prompt_dir.join(format!("query_{i:04}.txt")), text)?;
        }
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::save_embeddings;

    fn write_corpus(dir: &Path, name: &str, vectors: &[Vec<f32>]) -> PathBuf {
        let rows = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("v{i}"), None, v.clone()))
            .collect();
        let set = EmbeddingSet::from_raw(SetRole::Corpus, rows).unwrap();
        let path = dir.join(name);
        let mut buf = Vec::new();
        save_embeddings(&mut buf, &set, EmbeddingFormat::Text).unwrap();
        fs::write(&path, buf).unwrap();
        path
    }

    fn base_config(dir: &Path) -> RunConfig {
        let corpus = write_corpus(
            dir,
            "corpus.tsv",
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        );
        let queries = write_corpus(dir, "queries.tsv", &[vec![1.0, 0.0, 0.0]]);
        RunConfig {
            corpus_path: corpus,
            query_path: queries,
            format: EmbeddingFormat::Text,
            lambda: 0.0,
            lambda_stage1: None,
            lambda_stage2: None,
            k1: 2,
            k: 1,
            method: Method::DualDiv,
            seed: 0,
            output_dir: dir.join("out"),
            emit_prompt: false,
            template_path: None,
            task_description: String::new(),
            per_query: false,
            residual_floor: 1e-12,
            allow_negative_gain: false,
            demo_order: DemoOrder::GainDesc,
            export_kernel: false,
        }
    }

    #[test]
    fn query_duplicate_is_fully_redundant_in_stage2() {
        // the query equals v0, so v0 adds nothing on top of Q and the
        // conditional ranking prefers the non-redundant candidate
        let dir = tempfile::tempdir().unwrap();
        let config = base_config(dir.path());
        let report = run_select(&config).unwrap();
        assert_eq!(report.stage2.len(), 1);
        assert_eq!(report.stage2[0].id, "v1");
        assert!(report.stage2[0].gain > 0.0);
        assert_eq!(report.stage1.len(), 2);
        assert_eq!(report.stage1[0].id, "v0");
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(dir.path());
        config.emit_prompt = true;
        run_select(&config).unwrap();
        let first = fs::read(config.output_dir.join("report.json")).unwrap();
        let first_prompt = fs::read(config.output_dir.join("prompts/query_0000.txt")).unwrap();
        run_select(&config).unwrap();
        let second = fs::read(config.output_dir.join("report.json")).unwrap();
        let second_prompt = fs::read(config.output_dir.join("prompts/query_0000.txt")).unwrap();
        assert_eq!(first, second);
        assert_eq!(first_prompt, second_prompt);
    }

    #[test]
    fn contradictory_budgets_rejected_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(dir.path());
        config.k = 5;
        config.k1 = 2;
        config.corpus_path = dir.path().join("does_not_exist.tsv");
        // must fail on the config, not on the missing file
        assert!(matches!(run_select(&config), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_contextual() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(dir.path());
        config.corpus_path = dir.path().join("nope.tsv");
        let err = run_select(&config).unwrap_err();
        assert!(matches!(err, Error::InFile { .. }));
        assert!(err.to_string().contains("nope.tsv"));
    }

    #[test]
    fn config_file_round_trip_with_overrides() {
        let text = "# comment\ncorpus = a.tsv\nqueries = b.tsv\noutput_dir = out\nlambda = 0.25\nk1 = 7\nmethod = div_s3\ntask_description = classify = carefully\n";
        let file = RunOverrides::from_config_text(text).unwrap();
        let flags = RunOverrides {
            lambda: Some(0.5),
            ..Default::default()
        };
        let merged = flags.over(file).finalize().unwrap();
        assert_eq!(merged.lambda, 0.5); // flag wins
        assert_eq!(merged.k1, 7);
        assert_eq!(merged.method, Method::DivS3);
        assert_eq!(merged.task_description, "classify = carefully");
        assert_eq!(merged.k, 3); // default
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let err = RunOverrides::from_config_text("nonsense = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn random_similar_is_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(dir.path());
        config.method = Method::RandomSimilar;
        config.seed = 7;
        let a = run_select(&config).unwrap();
        config.output_dir = dir.path().join("out2");
        let b = run_select(&config).unwrap();
        assert_eq!(a, b);
    }
}
