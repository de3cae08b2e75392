use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gdvae::corpus::{generate_synthetic_corpus, load_admissions, split, SyntheticSpec};
use gdvae::eval::{
    evaluate, export_embeddings, predict_type, recommend, reports_jsonl, topic_top_words, EmbeddingKind, EvalOptions,
};
use gdvae::graph::{export_graph, training_graph, GraphVariant, Task};
use gdvae::trainer::{ablation_matrix, ablation_table, preprocess, train, TaskSet, TrainConfig};
use gdvae::{Error, Result};

mod run;

#[derive(Parser)]
#[command(name = "gdvae", version, about = "Graph-driven multi-task VAE over admission records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted topics.
    Synth(SynthArgs),
    /// Build the training graph of a corpus and export it.
    BuildGraph(TrainArgs),
    /// Train one model into a run directory.
    Train(TrainArgs),
    /// Train all seven task subsets and print the comparison table.
    Ablate(TrainArgs),
    /// Compute test-split metrics of a run.
    Eval(EvalArgs),
    /// Print the top codes of every learned topic.
    Topics(TopicsArgs),
    /// Rank procedures for one admission.
    Recommend(QueryArgs),
    /// Predict the admission type of one admission.
    Predict(QueryArgs),
    /// Write code or admission embeddings as TSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic spec file (line-delimited JSON); a planted default otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for admissions.jsonl, spec.jsonl and truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` config file; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Admission records (line-delimited JSON).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Active tasks, e.g. `T,R,P`.
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    graph_variant: Option<GraphVariant>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    /// Top-M cut-offs for recommendation metrics.
    #[arg(long, value_delimiter = ',')]
    top: Option<Vec<usize>>,
}

#[derive(Args)]
struct TopicsArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    admission_id: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    run: PathBuf,
    /// `codes` or `admissions`.
    #[arg(long, default_value = "admissions")]
    which: EmbeddingKind,
    /// Task whose view (and latent, for admissions) is exported.
    #[arg(long, default_value = "P")]
    task: Task,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn load_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::parse(&read_text(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(tasks) = &args.tasks {
        cfg.tasks = TaskSet::parse(tasks)?;
    }
    if let Some(v) = args.graph_variant {
        cfg.graph_variant = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn refuse_existing_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::InvalidArgument(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = match &args.config {
        Some(path) => SyntheticSpec::parse(&read_text(path)?)?,
        None => SyntheticSpec::planted(5, 8, 3, 5, 2000, 0.1, 0.1),
    };
    let (corpus, truth) = generate_synthetic_corpus(&spec, args.seed)?;
    run::prepare_dir(&args.out, args.force)?;
    corpus.save(&args.out.join("admissions.jsonl"))?;
    fs::write(args.out.join("spec.jsonl"), spec.to_jsonl())?;
    fs::write(args.out.join("truth.json"), serde_json::to_string(&truth)? + "\n")?;
    println!(
        "wrote {} admissions ({} diseases, {} procedures) to {}",
        corpus.len(),
        corpus.disease_vocab().len(),
        corpus.procedure_vocab().len(),
        args.out.display()
    );
    Ok(())
}

fn build_graph(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let corpus = preprocess(&cfg, &load_admissions(&args.data)?)?;
    let parts = split(&corpus, cfg.split, cfg.seed)?;
    let graph = training_graph(&corpus, &parts, cfg.graph_variant)?;
    run::prepare_dir(&args.out, args.force)?;
    let mut file = io::BufWriter::new(fs::File::create(args.out.join("graph.txt"))?);
    export_graph(&graph, &corpus, &mut file)?;
    file.flush()?;
    fs::write(args.out.join(run::SPLIT), serde_json::to_string_pretty(&parts.ids(&corpus))? + "\n")?;
    fs::write(args.out.join(run::CONFIG), cfg.to_text())?;
    println!(
        "variant {} nodes {} edges {} split {}",
        graph.variant,
        graph.layout.total(),
        graph.adjacency.nnz(),
        parts.digest(&corpus)
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let corpus = preprocess(&cfg, &load_admissions(&args.data)?)?;
    let parts = split(&corpus, cfg.split, cfg.seed)?;
    let graph = training_graph(&corpus, &parts, cfg.graph_variant)?;
    run::prepare_dir(&args.out, args.force)?;
    let outcome = train(&cfg, &corpus, &parts, &graph)?;
    let manifest = run::write_run(&args.out, &cfg, &corpus, &parts, &outcome)?;
    println!(
        "run {} best epoch {} of {} val {:.6}",
        args.out.display(),
        manifest.best_epoch,
        outcome.log.len(),
        outcome.log[outcome.best_epoch - 1].val_loss
    );
    Ok(())
}

fn ablate(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let corpus = preprocess(&cfg, &load_admissions(&args.data)?)?;
    let parts = split(&corpus, cfg.split, cfg.seed)?;
    let graph = training_graph(&corpus, &parts, cfg.graph_variant)?;
    run::prepare_dir(&args.out, args.force)?;
    let rows = ablation_matrix(&cfg, &corpus, &parts, &graph, &EvalOptions::default())?;
    let mut summary = String::new();
    for row in &rows {
        let row_cfg = cfg.with_tasks(row.tasks.clone());
        let dir = args.out.join(run::run_name(&row_cfg));
        fs::create_dir_all(&dir)?;
        run::write_run(&dir, &row_cfg, &corpus, &parts, &row.outcome)?;
        let metrics = reports_jsonl(&row.metrics);
        fs::write(dir.join(run::METRICS), &metrics)?;
        for line in metrics.lines() {
            summary.push_str(&format!(
                "{{\"tasks\":\"{}\",\"split_digest\":\"{}\",\"report\":{line}}}\n",
                row.tasks.label(),
                row.split_digest
            ));
        }
    }
    let table = ablation_table(&rows);
    fs::write(args.out.join("ablation.txt"), &table)?;
    fs::write(args.out.join("ablation.jsonl"), summary)?;
    print!("{table}");
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let r = run::load_run(&args.run)?;
    let mut options = EvalOptions::default();
    if let Some(top) = args.top {
        options.top_ms = top;
    }
    let reports = evaluate(&r.model, &r.views, &r.corpus, &r.split, &r.config.tasks, &options)?;
    let text = reports_jsonl(&reports);
    fs::write(r.dir.join(run::METRICS), &text)?;
    print!("{text}");
    Ok(())
}

fn topics(args: TopicsArgs) -> Result<()> {
    let r = run::load_run(&args.run)?;
    if !r.config.tasks.contains(Task::Topic) {
        return Err(Error::InvalidArgument("run was trained without task T".into()));
    }
    let summary = topic_top_words(&r.model.topic_matrix(), args.top.min(r.corpus.code_count()))?;
    for (l, words) in summary.topics.iter().enumerate() {
        let items: Vec<String> = words
            .iter()
            .map(|&(c, p)| format!("{}:{p:.4}", r.corpus.code_name(c)))
            .collect();
        println!("topic {l}\t{}", items.join(" "));
    }
    Ok(())
}

fn recommend_cmd(args: QueryArgs) -> Result<()> {
    let r = run::load_run(&args.run)?;
    if !r.config.tasks.contains(Task::Recommend) {
        return Err(Error::InvalidArgument("run was trained without task R".into()));
    }
    let a = r.admission(&args.admission_id)?;
    for (rank, (p, prob)) in recommend(&r.model, &r.views, a, args.top)?.into_iter().enumerate() {
        println!("{}\t{}\t{prob:.6}", rank + 1, r.corpus.procedure_vocab().code(p));
    }
    Ok(())
}

fn predict_cmd(args: QueryArgs) -> Result<()> {
    let r = run::load_run(&args.run)?;
    if !r.config.tasks.contains(Task::Predict) {
        return Err(Error::InvalidArgument("run was trained without task P".into()));
    }
    let a = r.admission(&args.admission_id)?;
    let (label, probs) = predict_type(&r.model, &r.views, a)?;
    println!("{}", r.corpus.labels()[label]);
    for (l, p) in r.corpus.labels().iter().zip(probs) {
        println!("{l}\t{p:.6}");
    }
    Ok(())
}

fn export_cmd(args: ExportArgs) -> Result<()> {
    let r = run::load_run(&args.run)?;
    refuse_existing_file(&args.out, args.force)?;
    let mut file = io::BufWriter::new(fs::File::create(&args.out)?);
    export_embeddings(&r.model, &r.views, &r.corpus, args.which, args.task, &mut file)?;
    file.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Train(a) => train_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Topics(a) => topics(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::ExportEmbeddings(a) => export_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            return fail("usage", text.trim_start_matches("error: "));
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}

/// One JSON line on stderr.
fn fail(kind: &str, message: &str) -> ExitCode {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}
