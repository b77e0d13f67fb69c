mod args;
mod manifest;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::Parser;

use pelp::corpus::{RawCorpus, Vocabulary};
use pelp::eval::{
    bli_eval, divergence_series, group_divergence, nearest_neighbors, spearman_eval, write_series_csv, BliLexicon,
    NeighborFilter, SimilarityBenchmark,
};
use pelp::export::{export_embeddings, import_embeddings, Which};
use pelp::graph::{
    build_chain_graph, build_dict_graph, build_dynamic_group_graph, build_group_complete_graph, build_translation_graph,
    group_time_label, parse_definitions, read_edge_list, write_edge_list, Edge, EmbeddingState, NodeKey, PriorGraph,
    Role,
};
use pelp::model::LogitContext;
use pelp::par::Parallelism;
use pelp::train::{load_checkpoint, TrainConfig, Trainer};
use pelp::verify::{all_pass, run_check, write_report, Check};

use args::*;
use manifest::{EpochRecord, FileDigest, RunManifest};

/// Failures that carry their own exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

/// 1 usage, 2 data, 3 numeric.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => 1,
                Failure::Numeric(_) => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<pelp::Error>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    seed: Option<u64>,
    par: Parallelism,
    threads: usize,
}

fn run(cli: Cli) -> Result<()> {
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => match std::env::var("PELP_SEED") {
            Ok(v) => Some(v.trim().parse().map_err(|_| usage(format!("PELP_SEED is not an integer: `{v}`")))?),
            Err(_) => None,
        },
    };
    let ctx = Ctx {
        seed,
        par: Parallelism::new(cli.threads),
        threads: cli.threads,
    };
    match cli.command {
        Command::Vocab(a) => vocab(a),
        Command::Graph(g) => graph(g),
        Command::Train(a) => train(a, &ctx),
        Command::EvalSim(a) => eval_sim(a),
        Command::EvalBli(a) => eval_bli(a, &ctx),
        Command::DiffGroups(a) => diff_groups(a),
        Command::Neighbors(a) => neighbors(a),
        Command::Verify(a) => verify(a, &ctx),
        Command::Export(a) => export(a),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_corpus(a: &CorpusArgs) -> Result<RawCorpus> {
    Ok(RawCorpus::read(&a.corpus, a.partitioned, a.lowercase)?)
}

/// First field of every non-empty, non-comment line.
fn read_words(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().next().map(str::to_owned))
        .collect())
}

fn load_state(src: &StateSource) -> Result<EmbeddingState> {
    match (&src.checkpoint, &src.embeddings) {
        (Some(p), _) => Ok(load_checkpoint(p)?.state),
        (None, Some(p)) => Ok(import_embeddings(p)?),
        (None, None) => Err(usage("pass --checkpoint or --embeddings")),
    }
}

fn vocab(a: VocabArgs) -> Result<()> {
    let raw = read_corpus(&a.corpus)?;
    let v = Vocabulary::build(raw.tokens(), a.min_count, a.max_vocab)?;
    let mut out = sink(a.out.as_deref())?;
    v.write_tsv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_edges(edges: &[Edge], out: Option<&Path>) -> Result<()> {
    // Same checks the trainer applies, so bad graphs fail here.
    PriorGraph::new(edges.to_vec(), 1.0, 1.0)?;
    let mut w = sink(out)?;
    write_edge_list(edges, &mut w)?;
    w.flush()?;
    eprintln!("{} edges", edges.len());
    Ok(())
}

fn graph(cmd: GraphCommand) -> Result<()> {
    match cmd {
        GraphCommand::Dict {
            definitions,
            vocab,
            lowercase,
            out,
        } => {
            let text = fs::read_to_string(&definitions).with_context(|| format!("reading {}", definitions.display()))?;
            let defs = parse_definitions(&text, lowercase);
            let v = Vocabulary::read_tsv(&vocab)?;
            write_edges(&build_dict_graph(&defs, &v), out.as_deref())
        }
        GraphCommand::Chain { words, timesteps, out } => {
            write_edges(&build_chain_graph(&read_words(&words)?, &timesteps), out.as_deref())
        }
        GraphCommand::Groups { words, groups, out } => {
            if groups.len() < 2 {
                return Err(usage("--groups needs at least two labels"));
            }
            write_edges(&build_group_complete_graph(&read_words(&words)?, &groups), out.as_deref())
        }
        GraphCommand::DynamicGroups {
            words,
            groups,
            timesteps,
            out,
        } => write_edges(&build_dynamic_group_graph(&read_words(&words)?, &groups, &timesteps), out.as_deref()),
        GraphCommand::Translations {
            lexicon,
            vocab,
            vocab_b,
            lang_a,
            lang_b,
            out,
        } => {
            let lex = BliLexicon::read(&lexicon, &format!("{lang_a}-{lang_b}"))?;
            let va = Vocabulary::read_tsv(&vocab)?;
            let vb = match &vocab_b {
                Some(p) => Vocabulary::read_tsv(p)?,
                None => va.clone(),
            };
            let t = build_translation_graph(&lex.pairs, &va, &vb, &lang_a, &lang_b);
            eprintln!("skipped {} out-of-vocabulary and {} duplicate pairs", t.skipped_oov, t.skipped_duplicate);
            write_edges(&t.edges, out.as_deref())
        }
        GraphCommand::FromEdges { edges, out } => write_edges(&read_edge_list(&edges)?, out.as_deref()),
    }
}

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated checkpoint behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn train(a: TrainArgs, ctx: &Ctx) -> Result<()> {
    let started = Instant::now();
    let started_unix_secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut config = TrainConfig::read(&a.config)?;
    if let Some(s) = ctx.seed {
        config.seed = s;
    }
    config.validate()?;

    let raw = read_corpus(&a.corpus)?;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::read_tsv(p)?,
        None => Vocabulary::build(raw.tokens(), a.min_count.unwrap_or(1), a.max_vocab)?,
    };
    let corpus = raw.encode(&vocab);
    let mut graph = match &a.graph {
        Some(p) => PriorGraph::new(read_edge_list(p)?, config.lambda0, config.lambda1)?,
        None => PriorGraph::ridge(config.lambda0)?,
    };
    let layout = LogitContext::from_corpus(&corpus, &vocab, config.context_sharing);
    let known: HashSet<&NodeKey> = layout.keys().iter().collect();
    let dropped = if a.drop_missing_edges {
        graph.retain_known(&known)
    } else {
        if let Some(e) = graph.edges().iter().find(|e| !known.contains(&e.a) || !known.contains(&e.b)) {
            let missing = if known.contains(&e.a) { &e.b } else { &e.a };
            return Err(anyhow::Error::new(pelp::Error::UnknownNode(missing.to_string()))
                .context("graph references a node the corpus does not produce (see --drop-missing-edges)"));
        }
        0
    };
    if dropped > 0 {
        eprintln!("dropped {dropped} edges with nodes outside the corpus");
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut trainer = match &a.resume {
        Some(p) => Trainer::resume(&corpus, &vocab, &graph, &config, load_checkpoint(p)?)?,
        None => Trainer::new(&corpus, &vocab, &graph, &config)?,
    }
    .with_parallelism(ctx.par.clone());
    let monitor = trainer.default_monitor(&corpus, 4096);
    trainer.set_monitor(monitor)?;

    let ck_path = a.out.join("checkpoint.bin");
    let mut epochs = Vec::new();
    while (trainer.epochs_completed() as usize) < config.epochs {
        let s = trainer.run_epoch(&corpus)?;
        match s.monitor_log_posterior {
            Some(lp) => eprintln!("epoch {}: {} steps, monitor log posterior {lp:.6e}", s.epoch, s.steps),
            None => eprintln!("epoch {}: {} steps", s.epoch, s.steps),
        }
        write_atomic(&ck_path, &trainer.checkpoint().to_bytes())?;
        epochs.push(EpochRecord {
            epoch: s.epoch,
            steps: s.steps,
            monitor_log_posterior: s.monitor_log_posterior,
        });
    }
    if epochs.is_empty() {
        write_atomic(&ck_path, &trainer.checkpoint().to_bytes())?;
    }
    let vocab_path = a.out.join("vocab.tsv");
    let mut vf = BufWriter::new(File::create(&vocab_path)?);
    vocab.write_tsv(&mut vf)?;
    vf.flush()?;

    let mut inputs = BTreeMap::new();
    let mut add = |name: &str, p: &Option<PathBuf>| -> Result<()> {
        if let Some(p) = p {
            inputs.insert(name.to_owned(), FileDigest::of(p)?);
        }
        Ok(())
    };
    add("config", &Some(a.config.clone()))?;
    add("corpus", &Some(a.corpus.corpus.clone()))?;
    add("vocab", &a.vocab)?;
    add("graph", &a.graph)?;
    add("resume", &a.resume)?;
    let outputs = BTreeMap::from([
        ("checkpoint".to_owned(), FileDigest::of(&ck_path)?),
        ("vocab".to_owned(), FileDigest::of(&vocab_path)?),
    ]);
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: std::env::args().collect(),
        config: serde_json::from_str(&config.to_json())?,
        config_hash: format!("{:016x}", config.hash()),
        seed: config.seed,
        threads: ctx.threads,
        inputs,
        outputs,
        dropped_edges: dropped,
        epochs,
        started_unix_secs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
    .write(&a.out.join("manifest.json"))?;
    Ok(())
}

fn eval_sim(a: EvalSimArgs) -> Result<()> {
    let state = load_state(&a.state)?;
    let bench = SimilarityBenchmark::read(&a.benchmark, a.lowercase)?;
    let r = spearman_eval(&bench, &state, &a.partition)?;
    if !r.rho.is_finite() {
        return Err(Failure::Numeric("Spearman correlation is undefined for these vectors".into()).into());
    }
    let json = serde_json::json!({
        "spearman": r.rho,
        "coverage": r.coverage,
        "evaluated": r.evaluated,
        "skipped": r.skipped,
    });
    println!("{json}");
    Ok(())
}

fn eval_bli(a: EvalBliArgs, ctx: &Ctx) -> Result<()> {
    let state = load_state(&a.state)?;
    let lex = BliLexicon::read(&a.lexicon, &format!("{}-{}", a.source, a.target))?;
    if a.k.contains(&0) {
        return Err(usage("--k levels must be positive"));
    }
    let r = bli_eval(&lex, &state, &a.source, &a.target, &a.k, &ctx.par)?;
    let precision: serde_json::Map<String, serde_json::Value> =
        r.precision.iter().map(|(k, p)| (format!("p@{k}"), serde_json::json!(p))).collect();
    let json = serde_json::json!({
        "precision": precision,
        "evaluated": r.evaluated,
        "skipped": r.skipped,
    });
    println!("{json}");
    Ok(())
}

/// Words with a word vector in `partition`.
fn words_in(state: &EmbeddingState, partition: &str) -> Vec<String> {
    state
        .keys()
        .iter()
        .filter(|k| k.role == Role::Rho && k.partition == partition)
        .map(|k| k.word.clone())
        .collect()
}

fn diff_groups(a: DiffGroupsArgs) -> Result<()> {
    let state = load_state(&a.state)?;
    let mut out = sink(None)?;
    if a.timesteps.is_empty() {
        let words = match &a.words {
            Some(p) => read_words(p)?,
            None => words_in(&state, &a.a),
        };
        let r = group_divergence(&state, &words, &a.a, &a.b);
        if !r.missing.is_empty() {
            eprintln!("{} words lack a vector in one of the groups", r.missing.len());
        }
        writeln!(out, "rank\tword\tdistance")?;
        for (i, (w, d)) in r.top(a.top).iter().enumerate() {
            writeln!(out, "{}\t{w}\t{d}", i + 1)?;
        }
    } else {
        let words = match &a.words {
            Some(p) => read_words(p)?,
            None => {
                let mut all: Vec<String> = a
                    .timesteps
                    .iter()
                    .flat_map(|t| words_in(&state, &group_time_label(&a.a, t)))
                    .collect();
                all.sort();
                all.dedup();
                all
            }
        };
        writeln!(out, "timestep\trank\tword\tdistance")?;
        for t in &a.timesteps {
            let r = group_divergence(&state, &words, &group_time_label(&a.a, t), &group_time_label(&a.b, t));
            for (i, (w, d)) in r.top(a.top).iter().enumerate() {
                writeln!(out, "{t}\t{}\t{w}\t{d}", i + 1)?;
            }
        }
        if let Some(p) = &a.series {
            let rows = divergence_series(&state, &words, &a.a, &a.b, &a.timesteps, a.top);
            let mut w = sink(Some(p))?;
            write_series_csv(&rows, &mut w)?;
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn neighbors(a: NeighborsArgs) -> Result<()> {
    let state = load_state(&a.state)?;
    let role: Role = a.role.parse().map_err(|_| usage(format!("--role must be rho or alpha, got `{}`", a.role)))?;
    let query = NodeKey::new(role, a.partition.as_str(), a.word.as_str());
    let filter = if a.all {
        NeighborFilter::any()
    } else {
        NeighborFilter::same_role_partition(&query)
    };
    let mut out = sink(None)?;
    for (k, s) in nearest_neighbors(&query, &state, a.k, filter)? {
        writeln!(out, "{k}\t{s:.6}")?;
    }
    out.flush()?;
    Ok(())
}

fn verify(a: VerifyArgs, ctx: &Ctx) -> Result<()> {
    let check: Check = a.check.parse().map_err(|e: pelp::Error| usage(e.to_string()))?;
    let rows = run_check(check, ctx.seed.unwrap_or(0), &ctx.par)?;
    let mut out = sink(a.report.as_deref())?;
    write_report(&rows, &mut out)?;
    out.flush()?;
    if all_pass(&rows) {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("{} did not pass", a.check)).into())
    }
}

fn export(a: ExportArgs) -> Result<()> {
    let which: Which = a.which.parse().map_err(|e: pelp::Error| usage(e.to_string()))?;
    let state = load_state(&a.state)?;
    let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    let n = export_embeddings(&state, which, a.partition.as_deref(), &mut out)
        .and_then(|n| out.flush().map(|_| n))
        .with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{n} rows");
    Ok(())
}
