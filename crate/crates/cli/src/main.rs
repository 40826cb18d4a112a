//! `divsel`: two-stage demonstration selection over embedded corpora.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
//! invariant violation.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use divsel_core as core;
use divsel_core::{
    brute_force_optimum, check_modular_upper_bound, check_monotonicity,
    check_projection_identity, check_submodularity, cosine_kernel, enumerate_permutations,
    lambda_bound_probe, load_embeddings, naive_greedy, retrieve_stage1, run_select,
    save_embeddings, synth, CheckMode, EmbeddingFormat, Error, ObjectiveConfig, PropertyReport,
    RunOverrides, SetRole,
};

#[derive(Parser)]
#[command(name = "divsel", version, about = "Two-stage demonstration selection: coverage+diversity retrieval, then conditional ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-stage selection and write its artifacts
    Select(SelectArgs),
    /// Run the brute-force property suites on seeded synthetic instances
    Oracle(OracleArgs),
    /// Estimate how large the diversity weight can get on a corpus
    ProbeLambda(ProbeLambdaArgs),
    /// Generate a clustered synthetic corpus
    GenSynth(GenSynthArgs),
    /// Enumerate demonstration orderings
    Permute(PermuteArgs),
    /// Run select over a lambda/method grid, one output directory per cell
    Grid(GridArgs),
}

#[derive(Args, Clone)]
struct SelectArgs {
    /// `key = value` config file; explicit flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Embedding file format: text | binary
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_stage1: Option<f64>,
    #[arg(long)]
    lambda_stage2: Option<f64>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// dual_div | div_s3 | div_star_s3 | div_s3_star | random_similar
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    emit_prompt: Option<bool>,
    /// Prompt template file (defaults to the built-in template)
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    task_description: Option<String>,
    /// Rank and prompt each query separately instead of sharing one ranking
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    per_query: Option<bool>,
    #[arg(long)]
    residual_floor: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    allow_negative_gain: Option<bool>,
    /// Demonstration order in prompts: gain_desc | gain_asc
    #[arg(long)]
    demo_order: Option<String>,
    /// Also dump the corpus kernel as kernel.bin
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    export_kernel: Option<bool>,
}

#[derive(Args)]
struct OracleArgs {
    /// Comma-separated: monotonicity, submodularity, projection, modular, approx (or `all`)
    #[arg(long, default_value = "all")]
    checks: String,
    /// Number of seeded instances per check
    #[arg(long, default_value_t = 100)]
    instances: u64,
    /// Universe size per instance (d = n + 2 keeps general position)
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Where property summaries are written
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeLambdaArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lambda to test for negative combined gains
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PermuteArgs {
    /// Comma-separated demonstration ids
    #[arg(long)]
    items: Option<String>,
    /// File with one id per line (e.g. a stage2_ids.txt artifact)
    #[arg(long)]
    ids_file: Option<PathBuf>,
    #[arg(long, default_value_t = 720)]
    limit: u64,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    select: SelectArgs,
    /// Comma-separated lambda values for the grid
    #[arg(long)]
    lambdas: String,
    /// Comma-separated methods for the grid
    #[arg(long, default_value = "dual_div,div_s3,div_star_s3,div_s3_star")]
    methods: String,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
        Err(_) => {
            eprintln!("error: internal invariant violation");
            std::process::exit(3);
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::PermutationLimit { .. } | Error::EnumerationGuard { .. } => 1,
        Error::InFile { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> core::Result<()> {
    match cli.command {
        Command::Select(args) => cmd_select(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::ProbeLambda(args) => cmd_probe_lambda(args),
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Permute(args) => cmd_permute(args),
        Command::Grid(args) => cmd_grid(args),
    }
}

fn overrides_from(args: &SelectArgs) -> core::Result<RunOverrides> {
    let mut o = RunOverrides {
        corpus_path: args.corpus.clone(),
        query_path: args.queries.clone(),
        lambda: args.lambda,
        lambda_stage1: args.lambda_stage1,
        lambda_stage2: args.lambda_stage2,
        k1: args.k1,
        k: args.k,
        seed: args.seed,
        output_dir: args.output_dir.clone(),
        emit_prompt: args.emit_prompt,
        template_path: args.template.clone(),
        task_description: args.task_description.clone(),
        per_query: args.per_query,
        residual_floor: args.residual_floor,
        allow_negative_gain: args.allow_negative_gain,
        export_kernel: args.export_kernel,
        ..Default::default()
    };
    if let Some(f) = &args.format {
        o.format = Some(f.parse()?);
    }
    if let Some(m) = &args.method {
        o.method = Some(m.parse()?);
    }
    if let Some(d) = &args.demo_order {
        o.demo_order = Some(d.parse()?);
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let file_layer = RunOverrides::from_config_text(&text).map_err(|e| {
            Error::Config(format!("config file {}: {e}", path.display()))
        })?;
        o = o.over(file_layer);
    }
    Ok(o)
}

fn cmd_select(args: SelectArgs) -> core::Result<()> {
    let config = overrides_from(&args)?.finalize()?;
    let report = run_select(&config)?;
    println!(
        "stage1 selected {} of k1={}, stage2 selected {} of k={}",
        report.stage1.len(),
        config.k1,
        report.stage2.len(),
        config.k
    );
    for w in &report.warnings {
        println!("warning: {w}");
    }
    println!("artifacts written to {}", config.output_dir.display());
    Ok(())
}

fn parse_format(s: &str) -> core::Result<EmbeddingFormat> {
    s.parse()
}

fn cmd_oracle(args: OracleArgs) -> core::Result<()> {
    if args.n > 12 {
        return Err(Error::Config(format!(
            "oracle instances cap at n = 12, got {}",
            args.n
        )));
    }
    let wanted: Vec<&str> = if args.checks == "all" {
        vec!["monotonicity", "submodularity", "projection", "modular", "approx"]
    } else {
        args.checks.split(',').map(str::trim).collect()
    };
    for name in &wanted {
        if !["monotonicity", "submodularity", "projection", "modular", "approx"].contains(name) {
            return Err(Error::Config(format!("unknown check `{name}`")));
        }
    }
    let cfg = ObjectiveConfig::default().with_lambda(args.lambda);
    let mut reports: Vec<PropertyReport> = Vec::new();
    let mut approx_line = None;

    for name in wanted {
        match name {
            "monotonicity" | "submodularity" => {
                for mode in [CheckMode::Coverage, CheckMode::Diversity, CheckMode::Combined] {
                    let mut merged: Option<PropertyReport> = None;
                    for seed in 0..args.instances {
                        let set =
                            synth::gaussian_instance(seed, args.n, args.n + 2, SetRole::Corpus);
                        let kernel = cosine_kernel(&set, None)?;
                        let u: Vec<usize> = (0..args.n).collect();
                        let r = if name == "monotonicity" {
                            check_monotonicity(&kernel, &u, &cfg, mode, seed)?
                        } else {
                            check_submodularity(&kernel, &u, &cfg, mode, seed)?
                        };
                        match &mut merged {
                            None => merged = Some(r),
                            Some(m) => m.absorb(r),
                        }
                    }
                    reports.push(merged.expect("at least one instance"));
                }
            }
            "projection" => {
                let mut merged: Option<PropertyReport> = None;
                for seed in 0..args.instances {
                    let n = args.n.min(10);
                    let set = synth::gaussian_instance(seed, n, n + 2, SetRole::Corpus);
                    let kernel = cosine_kernel(&set, None)?;
                    let r = check_projection_identity(&kernel, 8, seed)?;
                    match &mut merged {
                        None => merged = Some(r),
                        Some(m) => m.absorb(r),
                    }
                }
                reports.push(merged.expect("at least one instance"));
            }
            "modular" => {
                let mut merged: Option<PropertyReport> = None;
                for seed in 0..args.instances {
                    let n = args.n.min(8);
                    let set = synth::gaussian_instance(seed, n, n + 2, SetRole::Corpus);
                    let kernel = cosine_kernel(&set, None)?;
                    let u: Vec<usize> = (0..n).collect();
                    let r = check_modular_upper_bound(&kernel, &u, &cfg, 3, 3, seed)?;
                    match &mut merged {
                        None => merged = Some(r),
                        Some(m) => m.absorb(r),
                    }
                }
                reports.push(merged.expect("at least one instance"));
            }
            "approx" => {
                // greedy vs exhaustive optimum on monotone-submodular instances
                let ratio = 1.0 - 1.0 / std::f64::consts::E;
                let mut kept = 0usize;
                let mut worst = f64::INFINITY;
                for seed in 0..args.instances {
                    let n = args.n.min(12);
                    let set = synth::clustered_instance(seed, n, n, 2 + seed as usize % 3, 0.2)?;
                    let kernel = cosine_kernel(&set, None)?;
                    let u: Vec<usize> = (0..n).collect();
                    let mono = check_monotonicity(&kernel, &u, &cfg, CheckMode::Combined, seed)?;
                    let sub = check_submodularity(&kernel, &u, &cfg, CheckMode::Combined, seed)?;
                    if !mono.passed() || !sub.passed() {
                        continue;
                    }
                    kept += 1;
                    let mut c = cfg;
                    c.k1 = 1 + (seed as usize % 4);
                    let selected = retrieve_stage1(&kernel, &u, &c)?.selected;
                    debug_assert_eq!(selected, naive_greedy(&kernel, &u, &c)?);
                    let f_star = core::oracle::objective_oracle(&kernel, &u, &selected, c.lambda);
                    let opt = brute_force_optimum(&kernel, &u, c.k1, &c)?;
                    worst = worst.min(f_star - ratio * opt.f_opt);
                }
                approx_line = Some(format!(
                    "approx-ratio: {} ({kept}/{} instances in regime, min slack {worst:.3e})",
                    if worst >= -1e-9 { "PASS" } else { "FAIL" },
                    args.instances
                ));
            }
            _ => unreachable!(),
        }
    }

    for r in &reports {
        println!(
            "{}: {} ({} instances, {} failures)",
            r.property_name,
            if r.passed() { "PASS" } else { "FAIL" },
            r.instances_checked,
            r.failures.len()
        );
    }
    if let Some(line) = &approx_line {
        println!("{line}");
    }
    if let Some(dir) = &args.output_dir {
        fs::create_dir_all(dir)?;
        let mut text = String::new();
        for r in &reports {
            text.push_str(&r.text_summary());
            text.push('\n');
        }
        if let Some(line) = &approx_line {
            text.push_str(line);
            text.push('\n');
        }
        fs::write(dir.join("properties.txt"), text)?;
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        fs::write(dir.join("properties.json"), json + "\n")?;
        println!("reports written to {}", dir.display());
    }
    Ok(())
}

fn cmd_probe_lambda(args: ProbeLambdaArgs) -> core::Result<()> {
    let format = parse_format(&args.format)?;
    let file = fs::File::open(&args.corpus).map_err(|e| Error::from(e).in_file(&args.corpus))?;
    let set = load_embeddings(file, format, SetRole::Corpus).map_err(|e| e.in_file(&args.corpus))?;
    if set.is_empty() {
        return Err(Error::EmptySet {
            path: args.corpus.display().to_string(),
        });
    }
    let kernel = cosine_kernel(&set, None)?;
    let universe: Vec<usize> = (0..set.len()).collect();
    let cfg = ObjectiveConfig::default().with_lambda(args.lambda);
    let probe = lambda_bound_probe(&kernel, &universe, &cfg, args.trials, args.seed)?;

    let estimate = match probe.max_valid_lambda_estimate {
        Some(e) => format!("{e}"),
        None => "inf".into(),
    };
    println!("max_valid_lambda_estimate: {estimate}");
    println!(
        "violations at lambda={}: {} (of {} trials, {} skipped)",
        args.lambda,
        probe.violations.len(),
        probe.trials,
        probe.skipped_trials
    );
    if let Some(dir) = &args.output_dir {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&probe).expect("probe serializes");
        fs::write(dir.join("probe.json"), json + "\n")?;
        let mut text = format!(
            "max_valid_lambda_estimate: {estimate}\ntrials: {}\nskipped_trials: {}\nviolations: {}\n",
            probe.trials,
            probe.skipped_trials,
            probe.violations.len()
        );
        for v in probe.violations.iter().take(20) {
            text.push_str(&format!(
                "  s={:?} x={} coverage_delta={} diversity_drop={} combined_gain={}\n",
                v.s, v.x, v.coverage_delta, v.diversity_drop, v.combined_gain
            ));
        }
        fs::write(dir.join("probe.txt"), text)?;
        println!("probe written to {}", dir.display());
    }
    Ok(())
}

fn cmd_gen_synth(args: GenSynthArgs) -> core::Result<()> {
    let format = parse_format(&args.format)?;
    let set = synth::clustered_instance(args.seed, args.n, args.d, args.clusters, args.noise)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut buf = Vec::new();
    save_embeddings(&mut buf, &set, format)?;
    fs::write(&args.out, buf)?;
    println!("wrote {} records to {}", set.len(), args.out.display());
    Ok(())
}

fn cmd_permute(args: PermuteArgs) -> core::Result<()> {
    let items: Vec<String> = match (&args.items, &args.ids_file) {
        (Some(items), None) => items.split(',').map(|s| s.to_string()).collect(),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
            text.lines().map(|s| s.to_string()).collect()
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --items or --ids-file".into(),
            ))
        }
    };
    for ordering in enumerate_permutations(&items, args.limit)? {
        println!("{}", ordering.join(","));
    }
    Ok(())
}

fn cmd_grid(args: GridArgs) -> core::Result<()> {
    let base = overrides_from(&args.select)?;
    let root = base
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("missing output directory".into()))?;
    let mut lambdas = Vec::new();
    for piece in args.lambdas.split(',') {
        let v: f64 = piece.trim().parse().map_err(|_| {
            Error::Config(format!("invalid lambda `{piece}` in --lambdas"))
        })?;
        lambdas.push(v);
    }
    let mut methods = Vec::new();
    for piece in args.methods.split(',') {
        methods.push(piece.trim().parse::<core::Method>()?);
    }
    if lambdas.is_empty() || methods.is_empty() {
        return Err(Error::Config("grid needs at least one lambda and one method".into()));
    }

    let mut summary = String::from("method\tlambda\tstage1_f\tmean_pairwise_sim\n");
    for method in &methods {
        for &lambda in &lambdas {
            let cell = format!(
                "{}_lambda_{}",
                serde_json::to_value(method).unwrap().as_str().unwrap(),
                lambda
            );
            let mut o = base.clone();
            o.method = Some(*method);
            o.lambda = Some(lambda);
            o.output_dir = Some(root.join(&cell));
            let config = o.finalize()?;
            let report = run_select(&config)?;
            let f_final = report.objective_trace.last().copied().unwrap_or(0.0);
            let mean_sim = report
                .dispersion_selected
                .map(|d| format!("{}", d.mean_pairwise_sim))
                .unwrap_or_else(|| "n/a".into());
            summary.push_str(&format!("{cell}\t{lambda}\t{f_final}\t{mean_sim}\n"));
            println!("{cell}: stage1 f={f_final} mean_sim={mean_sim}");
        }
    }
    fs::create_dir_all(&root)?;
    fs::write(root.join("grid_summary.txt"), summary)?;
    println!("grid summary written to {}", root.display());
    Ok(())
}
