use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "mder",
    version,
    about = "Tag method and dataset mentions in scientific text and mine method co-occurrence networks"
)]
pub struct Cli {
    /// Seed for every random choice (shuffling, initialization, augmentation).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads for document-parallel inference; training ignores it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// TOML file with default values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Double a labeled corpus by entity substitution.
    Augment(AugmentArgs),
    /// Shuffle a labeled corpus and split it into train, test and CV files.
    Split(SplitArgs),
    /// Train a tagger and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on labeled data (precision, recall, F1).
    Eval(EvalArgs),
    /// Tag a document corpus and write one JSON mention record per line.
    Label(LabelArgs),
    /// Build per-year method graphs and rankings from mention records.
    Mine(MineArgs),
    /// Tag a document corpus and build per-year method graphs in one step.
    Graph(GraphArgs),
    /// Compare checkpoints on one test set in a single table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Labeled input in two-column CoNLL format.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Method names to substitute, one per line.
    #[arg(long, value_name = "FILE")]
    pub method_pool: PathBuf,
    /// Dataset names to substitute, one per line.
    #[arg(long, value_name = "FILE")]
    pub dataset_pool: PathBuf,
    /// Output CoNLL file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Truncate input sentences to this many characters [default: 600].
    #[arg(long, value_name = "N")]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Labeled input in two-column CoNLL format.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Directory receiving train.conll, test.conll and cv.conll.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Relative train:test:cv weights [default: 7.5:1:1.5].
    #[arg(long, value_name = "T:E:C")]
    pub ratio: Option<String>,
    /// Truncate sentences to this many characters [default: 600].
    #[arg(long, value_name = "N")]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data in CoNLL format.
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    /// Cross-validation data used for early stopping.
    #[arg(long, value_name = "FILE")]
    pub cv: PathBuf,
    /// Directory with methods.txt, datasets.txt and blacklist.txt.
    #[arg(long, value_name = "DIR")]
    pub lexicon_dir: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch history CSV to write.
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Longest sentence in characters; longer ones are truncated [default: 600].
    #[arg(long, value_name = "N")]
    pub max_len: Option<usize>,
    /// Sentences per mini-batch [default: 16].
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Upper bound on training epochs [default: 100].
    #[arg(long, value_name = "N")]
    pub max_epochs: Option<usize>,
    /// Epochs without CV F1 improvement before stopping [default: 3].
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    /// Optimizer step size [default: 0.01].
    #[arg(long, value_name = "RATE")]
    pub learning_rate: Option<f64>,
    /// Drop the rule embedding (baseline ablation).
    #[arg(long)]
    pub no_rule: bool,
    /// Drop the CNN branch (baseline ablation).
    #[arg(long)]
    pub no_cnn: bool,
    /// Use every layer width divided by 8, for quick runs.
    #[arg(long)]
    pub debug_small: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Labeled data in CoNLL format.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Document corpus, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Mention records to write as JSON lines.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Two-column from,to CSV of canonical-name rewrites.
    #[arg(long, value_name = "FILE")]
    pub alias_table: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct GraphOptions {
    /// Directory receiving per-year graph files and rankings.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Keep only edges with weight strictly greater than this [default: 0].
    #[arg(long, value_name = "W")]
    pub min_weight: Option<u32>,
    /// Methods per year in the ranking [default: 10].
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Keep nodes whose edges were all filtered out.
    #[arg(long)]
    pub keep_isolated: bool,
    /// Per-year graph format: dot, graphml or edge-csv; repeat for several [default: all three].
    #[arg(long, value_name = "FORMAT")]
    pub format: Vec<String>,
    /// Rank on shortest paths where an edge of weight w has length 1/w.
    #[arg(long)]
    pub weighted: bool,
    /// Divide betweenness by the number of node pairs not involving the node.
    #[arg(long)]
    pub normalized: bool,
    /// Rank on the filtered graphs instead of the full ones.
    #[arg(long)]
    pub rank_filtered: bool,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Mention records written by `label`.
    #[arg(long, value_name = "FILE")]
    pub mentions: PathBuf,
    #[command(flatten)]
    pub graph: GraphOptions,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Document corpus, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Two-column from,to CSV of canonical-name rewrites.
    #[arg(long, value_name = "FILE")]
    pub alias_table: Option<PathBuf>,
    /// Also write the mention records to this file.
    #[arg(long, value_name = "FILE")]
    pub mentions_out: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphOptions,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Checkpoint to include as NAME=FILE; repeat for every row.
    #[arg(long = "model", value_name = "NAME=FILE", required = true)]
    pub models: Vec<String>,
    /// Labeled test data in CoNLL format.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Also write the table as CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn undocumented(cmd: &clap::Command, path: &str, out: &mut Vec<String>) {
        for arg in cmd.get_arguments() {
            let builtin = matches!(arg.get_id().as_str(), "help" | "version");
            if !builtin && arg.get_help().is_none() {
                out.push(format!("{path} --{}", arg.get_id()));
            }
        }
        for sub in cmd.get_subcommands() {
            if sub.get_about().is_none() {
                out.push(format!("{path} {}", sub.get_name()));
            }
            undocumented(sub, &format!("{path} {}", sub.get_name()), out);
        }
    }

    #[test]
    fn every_flag_and_subcommand_has_help() {
        let mut missing = Vec::new();
        undocumented(&Cli::command(), "mder", &mut missing);
        assert!(missing.is_empty(), "{missing:?}");
    }

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
