use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pelp", version, about = "Word embeddings with graph-Laplacian priors")]
pub struct Cli {
    /// Seed for every random choice. Falls back to PELP_SEED, then to the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count words and write `word<TAB>count` lines.
    Vocab(VocabArgs),
    /// Build a prior graph as an edge list.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Train embeddings; writes a checkpoint, vocabulary and run manifest.
    Train(TrainArgs),
    /// Spearman correlation against a word-similarity benchmark.
    EvalSim(EvalSimArgs),
    /// Precision@k for bilingual lexicon induction.
    EvalBli(EvalBliArgs),
    /// Rank words by the distance between their vectors in two groups.
    DiffGroups(DiffGroupsArgs),
    /// Nearest neighbours of one node by cosine similarity.
    Neighbors(NeighborsArgs),
    /// Run a numerical check and write a TSV report.
    Verify(VerifyArgs),
    /// Write embeddings as text.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus file: one segment per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Lines are `partition<TAB>text`.
    #[arg(long)]
    pub partitioned: bool,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Strong pairs from reciprocal dictionary definitions.
    Dict {
        /// `word<TAB>definition` lines.
        #[arg(long)]
        definitions: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        lowercase: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chains each word across consecutive timesteps.
    Chain {
        /// Word list; the first field of each line is used, so a vocabulary file works.
        #[arg(long)]
        words: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        timesteps: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete graph across groups for each word.
    Groups {
        #[arg(long)]
        words: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        groups: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group edges per timestep plus temporal chains per group.
    DynamicGroups {
        #[arg(long)]
        words: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        groups: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        timesteps: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Links word and context vectors of translation pairs.
    Translations {
        /// `source<TAB>target` lines.
        #[arg(long)]
        lexicon: PathBuf,
        /// Vocabulary of the source language (and of the target unless --vocab-b is given).
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vocab_b: Option<PathBuf>,
        #[arg(long)]
        lang_a: String,
        #[arg(long)]
        lang_b: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an existing edge list and write it back normalised.
    FromEdges {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config as JSON; unknown keys are rejected.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Fixed vocabulary; built from the corpus when omitted.
    #[arg(long, conflicts_with_all = ["min_count", "max_vocab"])]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    /// Prior edge list; a plain ridge prior when omitted.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Drop edges whose nodes do not occur in the corpus instead of failing.
    #[arg(long)]
    pub drop_missing_edges: bool,
    /// Continue an interrupted run from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct StateSource {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Embeddings in the export text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalSimArgs {
    #[command(flatten)]
    pub state: StateSource,
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long, default_value = "_")]
    pub partition: String,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Debug, Args)]
pub struct EvalBliArgs {
    #[command(flatten)]
    pub state: StateSource,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 15])]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct DiffGroupsArgs {
    #[command(flatten)]
    pub state: StateSource,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    /// Words to rank; every word with vectors in both groups when omitted.
    #[arg(long)]
    pub words: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Also write a `word,timestep,distance` CSV over `group@timestep` partitions.
    #[arg(long, requires = "timesteps")]
    pub series: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub timesteps: Vec<String>,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    pub state: StateSource,
    #[arg(long)]
    pub word: String,
    #[arg(long, default_value = "_")]
    pub partition: String,
    #[arg(long, default_value = "rho")]
    pub role: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Search every role and partition instead of the query's own.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// One of grad, prop1, prop2, prop3, prop4, prop5.
    pub check: String,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub state: StateSource,
    #[arg(long, default_value = "rho")]
    pub which: String,
    #[arg(long)]
    pub partition: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}
