use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde_json::json;

use mder::corpus::{self, read_documents, SplitSpec, DEFAULT_MAX_LEN};
use mder::miner::{
    build_graphs, export_graph, export_rankings, filter_edges, predict_corpus,
    yearly_rankings, AliasTable, BetweennessOptions, ExportFormat, MentionRecord, MethodGraph,
};
use mder::model::{read_checkpoint, write_checkpoint};
use mder::training::{evaluate, train_with, Metrics, TrainConfig};
use mder::{Lexicon, MderConfig, Tagger};

use crate::args::{
    AugmentArgs, Cli, Command, EvalArgs, GraphArgs, GraphOptions, LabelArgs, MineArgs, ReportArgs,
    SplitArgs, TrainArgs,
};
use crate::config::{flag, FileConfig};

/// Settings shared by every subcommand after merging flags, file and defaults.
struct Common {
    seed: u64,
    threads: Option<usize>,
    file: FileConfig,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    ensure!(threads != Some(0), "--threads must be at least 1");
    let common = Common {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        threads,
        file,
    };
    match cli.command {
        Command::Augment(a) => augment(&common, a),
        Command::Split(a) => split(&common, a),
        Command::Train(a) => train(&common, a),
        Command::Eval(a) => eval(&common, a),
        Command::Label(a) => label(&common, a),
        Command::Mine(a) => mine(&common, a),
        Command::Graph(a) => graph(&common, a),
        Command::Report(a) => report(&common, a),
    }
}

fn print_config(command: &str, value: serde_json::Value) {
    eprintln!("config {command} {value}");
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn max_len(cli: Option<usize>, file: Option<usize>) -> Result<usize> {
    let n = cli.or(file).unwrap_or(DEFAULT_MAX_LEN);
    ensure!(n >= 1, "--max-len must be at least 1");
    Ok(n)
}

fn augment(c: &Common, a: AugmentArgs) -> Result<()> {
    let max_len = max_len(a.max_len, c.file.max_len)?;
    print_config(
        "augment",
        json!({
            "input": path_str(&a.input), "method_pool": path_str(&a.method_pool),
            "dataset_pool": path_str(&a.dataset_pool), "out": path_str(&a.out),
            "max_len": max_len, "seed": c.seed,
        }),
    );
    let sentences = corpus::read_conll_with(&a.input, max_len)?;
    let methods = corpus::read_pool(&a.method_pool)?;
    let datasets = corpus::read_pool(&a.dataset_pool)?;
    let out = corpus::augment(&sentences, &methods, &datasets, c.seed)?;
    corpus::write_conll(&out, &a.out)?;
    println!("{} -> {} sentences", sentences.len(), out.len());
    Ok(())
}

fn parse_ratio(s: &str) -> Result<SplitSpec> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("--ratio expects three numbers like 7.5:1:1.5, got {s:?}"))?;
    let [train, test, cv] = parts[..] else {
        bail!("--ratio expects three numbers like 7.5:1:1.5, got {s:?}");
    };
    Ok(SplitSpec::new(train, test, cv)?)
}

fn split(c: &Common, a: SplitArgs) -> Result<()> {
    let max_len = max_len(a.max_len, c.file.max_len)?;
    let ratio = a.ratio.or(c.file.ratio.clone()).unwrap_or_else(|| "7.5:1:1.5".into());
    let spec = parse_ratio(&ratio)?;
    print_config(
        "split",
        json!({
            "input": path_str(&a.input), "out_dir": path_str(&a.out_dir),
            "ratio": ratio, "max_len": max_len, "seed": c.seed,
        }),
    );
    let sentences = corpus::read_conll_with(&a.input, max_len)?;
    let (train, test, cv) = corpus::split(&sentences, &spec, c.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, part) in [("train", &train), ("test", &test), ("cv", &cv)] {
        corpus::write_conll(part, a.out_dir.join(format!("{name}.conll")))?;
    }
    println!("train {} test {} cv {}", train.len(), test.len(), cv.len());
    Ok(())
}

fn train(c: &Common, a: TrainArgs) -> Result<()> {
    let f = &c.file;
    let max_len = max_len(a.max_len, f.max_len)?;
    let debug_small = flag(a.debug_small, f.debug_small);
    let no_rule = flag(a.no_rule, f.no_rule);
    let no_cnn = flag(a.no_cnn, f.no_cnn);
    let base = if debug_small {
        MderConfig::debug_small()
    } else {
        MderConfig::full()
    };
    let model = MderConfig { max_len, ..base.with_ablation(!no_rule, !no_cnn) };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        batch_size: a.batch_size.or(f.batch_size).unwrap_or(defaults.batch_size),
        max_epochs: a.max_epochs.or(f.max_epochs).unwrap_or(defaults.max_epochs),
        patience: a.patience.or(f.patience).unwrap_or(defaults.patience),
        learning_rate: a.learning_rate.or(f.learning_rate).unwrap_or(defaults.learning_rate),
        seed: c.seed,
        ..defaults
    };
    tc.validate()?;
    model.validate()?;
    let lexicon_dir = a.lexicon_dir.or(f.lexicon_dir.clone());
    print_config(
        "train",
        json!({
            "train": path_str(&a.train), "cv": path_str(&a.cv), "out": path_str(&a.out),
            "history": a.history.as_deref().map(path_str),
            "lexicon_dir": lexicon_dir.as_deref().map(path_str),
            "model": model,
            "batch_size": tc.batch_size, "max_epochs": tc.max_epochs, "patience": tc.patience,
            "learning_rate": tc.learning_rate, "beta1": tc.beta1, "beta2": tc.beta2,
            "adam_eps": tc.adam_eps, "clip_norm": tc.clip_norm, "seed": tc.seed,
        }),
    );
    let lexicon = match &lexicon_dir {
        Some(dir) => Lexicon::load_dir(dir)?,
        None => Lexicon::default(),
    };
    let train_set = corpus::read_conll_with(&a.train, max_len)?;
    let cv_set = corpus::read_conll_with(&a.cv, max_len)?;
    let (tagger, history) = train_with(&model, &tc, &train_set, &cv_set, &lexicon, |r| {
        eprintln!(
            "epoch {} loss {:.4} cv precision {:.4} recall {:.4} f1 {:.4}",
            r.epoch, r.train_loss, r.cv.precision, r.cv.recall, r.cv.f1
        )
    })?;
    write_checkpoint(&tagger, &a.out)?;
    if let Some(h) = &a.history {
        history.write_csv(h)?;
    }
    if let Some(best) = history.best() {
        println!(
            "best epoch {} precision {:.4} recall {:.4} f1 {:.4}",
            best.epoch, best.cv.precision, best.cv.recall, best.cv.f1
        );
    }
    Ok(())
}

fn metrics_rows(m: &Metrics) -> Vec<(&'static str, f64, f64, f64)> {
    vec![
        ("all", m.precision, m.recall, m.f1),
        ("M", m.method.precision(), m.method.recall(), m.method.f1()),
        ("D", m.dataset.precision(), m.dataset.recall(), m.dataset.f1()),
        ("chars", m.chars.precision(), m.chars.recall(), m.chars.f1()),
    ]
}

fn eval(c: &Common, a: EvalArgs) -> Result<()> {
    print_config(
        "eval",
        json!({ "model": path_str(&a.model), "data": path_str(&a.data), "seed": c.seed }),
    );
    let tagger = read_checkpoint(&a.model)?;
    let data = corpus::read_conll_with(&a.data, tagger.config.max_len)?;
    let m = evaluate(&tagger, &data)?;
    println!("scope\tprecision\trecall\tf1");
    for (scope, p, r, f1) in metrics_rows(&m) {
        println!("{scope}\t{p:.4}\t{r:.4}\t{f1:.4}");
    }
    Ok(())
}

fn install_threads(c: &Common) -> Result<()> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn load_aliases(path: Option<&Path>) -> Result<Option<AliasTable>> {
    Ok(match path {
        Some(p) => Some(AliasTable::load(p)?),
        None => None,
    })
}

fn tag_corpus(
    c: &Common,
    model: &Path,
    corpus_path: &Path,
    aliases: Option<&Path>,
) -> Result<Vec<MentionRecord>> {
    install_threads(c)?;
    let tagger: Tagger = read_checkpoint(model)?;
    let aliases = load_aliases(aliases)?;
    let docs = read_documents(corpus_path)?;
    Ok(predict_corpus(&tagger, &docs, aliases.as_ref())?)
}

fn write_mentions(mentions: &[MentionRecord], path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for m in mentions {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_mentions(path: &Path) -> Result<Vec<MentionRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: MentionRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow!("{} line {}: {e}", path.display(), n + 1))?;
        out.push(m);
    }
    Ok(out)
}

fn label(c: &Common, a: LabelArgs) -> Result<()> {
    let alias_table = a.alias_table.or(c.file.alias_table.clone());
    print_config(
        "label",
        json!({
            "model": path_str(&a.model), "corpus": path_str(&a.corpus), "out": path_str(&a.out),
            "alias_table": alias_table.as_deref().map(path_str), "threads": c.threads,
            "seed": c.seed,
        }),
    );
    let mentions = tag_corpus(c, &a.model, &a.corpus, alias_table.as_deref())?;
    write_mentions(&mentions, &a.out)?;
    println!("{} mentions", mentions.len());
    Ok(())
}

struct GraphPlan {
    out: PathBuf,
    min_weight: u32,
    top_k: usize,
    keep_isolated: bool,
    formats: Vec<ExportFormat>,
    options: BetweennessOptions,
    rank_filtered: bool,
}

impl GraphPlan {
    fn resolve(o: GraphOptions, f: &FileConfig) -> Result<Self> {
        let names = if !o.format.is_empty() {
            o.format
        } else {
            f.format.clone().unwrap_or_else(|| {
                vec!["dot".into(), "graphml".into(), "edge-csv".into()]
            })
        };
        let mut formats = Vec::new();
        for n in &names {
            let fmt: ExportFormat = n.parse()?;
            ensure!(
                fmt != ExportFormat::RankCsv,
                "--format rank-csv is not a per-year graph format; rankings.csv is always written"
            );
            if !formats.contains(&fmt) {
                formats.push(fmt);
            }
        }
        let top_k = o.top_k.or(f.top_k).unwrap_or(10);
        ensure!(top_k >= 1, "--top-k must be at least 1");
        Ok(Self {
            out: o.out,
            min_weight: o.min_weight.or(f.min_weight).unwrap_or(0),
            top_k,
            keep_isolated: flag(o.keep_isolated, f.keep_isolated),
            formats,
            options: BetweennessOptions {
                weighted: flag(o.weighted, f.weighted),
                normalized: flag(o.normalized, f.normalized),
            },
            rank_filtered: flag(o.rank_filtered, f.rank_filtered),
        })
    }

    fn describe(&self) -> serde_json::Value {
        json!({
            "out": path_str(&self.out), "min_weight": self.min_weight, "top_k": self.top_k,
            "keep_isolated": self.keep_isolated,
            "format": self.formats.iter().map(|f| f.as_str()).collect::<Vec<_>>(),
            "weighted": self.options.weighted, "normalized": self.options.normalized,
            "rank_filtered": self.rank_filtered,
        })
    }

    fn file_name(year: i32, format: ExportFormat) -> String {
        match format {
            ExportFormat::EdgeCsv => format!("{year}.edges.csv"),
            f => format!("{year}.{}", f.extension()),
        }
    }

    fn write(&self, mentions: &[MentionRecord]) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let graphs = build_graphs(mentions);
        let filtered: BTreeMap<i32, MethodGraph> = graphs
            .iter()
            .map(|(&y, g)| (y, filter_edges(g, self.min_weight, self.keep_isolated)))
            .collect();
        for (&year, g) in &filtered {
            for &fmt in &self.formats {
                export_graph(g, fmt, self.out.join(Self::file_name(year, fmt)))?;
            }
        }
        let ranked_on = if self.rank_filtered { &filtered } else { &graphs };
        let rankings = yearly_rankings(ranked_on, self.top_k, self.options);
        export_rankings(&rankings, self.out.join("rankings.csv"))?;
        for (year, g) in &filtered {
            println!("{year}: {} methods, {} edges", g.node_count(), g.edge_count());
        }
        Ok(())
    }
}

fn mine(c: &Common, a: MineArgs) -> Result<()> {
    let plan = GraphPlan::resolve(a.graph, &c.file)?;
    print_config(
        "mine",
        json!({ "mentions": path_str(&a.mentions), "graph": plan.describe(), "seed": c.seed }),
    );
    let mentions = read_mentions(&a.mentions)?;
    plan.write(&mentions)
}

fn graph(c: &Common, a: GraphArgs) -> Result<()> {
    let plan = GraphPlan::resolve(a.graph, &c.file)?;
    let alias_table = a.alias_table.or(c.file.alias_table.clone());
    print_config(
        "graph",
        json!({
            "corpus": path_str(&a.corpus), "model": path_str(&a.model),
            "alias_table": alias_table.as_deref().map(path_str),
            "mentions_out": a.mentions_out.as_deref().map(path_str),
            "graph": plan.describe(), "threads": c.threads, "seed": c.seed,
        }),
    );
    let mentions = tag_corpus(c, &a.model, &a.corpus, alias_table.as_deref())?;
    if let Some(p) = &a.mentions_out {
        write_mentions(&mentions, p)?;
    }
    plan.write(&mentions)
}

fn report(c: &Common, a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for spec in &a.models {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--model expects NAME=FILE, got {spec:?}"))?;
        ensure!(!name.is_empty() && !path.is_empty(), "--model expects NAME=FILE, got {spec:?}");
        rows.push((name.to_string(), PathBuf::from(path)));
    }
    print_config(
        "report",
        json!({
            "models": rows.iter().map(|(n, p)| json!({"name": n, "path": path_str(p)})).collect::<Vec<_>>(),
            "data": path_str(&a.data), "out": a.out.as_deref().map(path_str), "seed": c.seed,
        }),
    );
    let mut table = String::from("model,precision,recall,f1\n");
    println!("model\tprecision\trecall\tf1");
    for (name, path) in &rows {
        let tagger = read_checkpoint(path)?;
        let data = corpus::read_conll_with(&a.data, tagger.config.max_len)?;
        let m = evaluate(&tagger, &data)?;
        println!("{name}\t{:.4}\t{:.4}\t{:.4}", m.precision, m.recall, m.f1);
        table.push_str(&format!("{name},{},{},{}\n", m.precision, m.recall, m.f1));
    }
    if let Some(out) = &a.out {
        fs::write(out, table).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
