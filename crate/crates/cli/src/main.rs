//! `hub`: command line front end. Table-style commands print a single
//! machine-readable summary line first, then details.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use hub_core::corpus::{read_records, CitationRecord, CorpusStore, IngestMode};
use hub_core::entities::{annotate_record, read_mentions, write_mentions, EntityMention, Lexicon, MentionKey};
use hub_core::eval::{compare_collections, iaa_exact, macro_average, micro_average, prf, split, Prf};
use hub_core::hub::{Hub, HubConfig};
use hub_core::insights::Granularity;
use hub_core::longcovid::Label;
use hub_core::pipeline::{run_daily, RunOptions, RunStatus};
use hub_core::search::{parse_query, Sort};
use hub_core::topics::{
    annotate_topics, output_rows, read_label_file, train_topics, MultiLabelModel, TopicHyper, TopicSet, DEFAULT_TOPICS,
};
use hub_core::triage::{read_labeled, train_triage, triage, KeywordRules, LinearModel, TriageHyper, DEFAULT_KEYWORDS};

#[derive(Parser)]
#[command(name = "hub", version, about = "Literature hub: ingest, annotate, review, search and serve")]
struct Cli {
    /// Hub config file. Missing default file means built-in defaults.
    #[arg(long, global = true, env = "HUB_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add records to the store.
    Ingest {
        path: PathBuf,
        /// Validate and report without writing.
        #[arg(long)]
        dry_run: bool,
        /// Reject changed content for known pmids instead of replacing it.
        #[arg(long)]
        create_only: bool,
    },
    #[command(subcommand)]
    /// Train triage or topic models.
    Train(Train),
    /// Classify a corpus file into decisions.tsv.
    Triage {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    /// Topic or entity annotations for a corpus file.
    Annotate(Annotate),
    #[command(subcommand, name = "loop")]
    /// Long COVID review loop: queue, decisions, iterations.
    Loop(LoopCmd),
    #[command(subcommand)]
    /// Offline metrics: prf, agreement, splits, coverage.
    Eval(Eval),
    /// Query the published snapshot.
    Search {
        query: String,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long, default_value_t = 20)]
        size: usize,
        #[arg(long, default_value = "date")]
        sort: String,
        /// Print the raw result object instead of a table.
        #[arg(long)]
        json: bool,
    },
    #[command(subcommand)]
    /// Statistics over the published snapshot.
    Stats(Stats),
    /// One pipeline run over a delta file. Exit 0 only when it succeeded.
    Run {
        #[arg(long)]
        /// JSON lines of new or revised records.
        delta: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Train models from the bundled fixtures and write `<dir>/hub.toml`.
    Prepare {
        #[arg(long)]
        fixtures: Option<PathBuf>,
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum Train {
    /// Train the relevance model from labeled JSON lines (`relevant` key).
    Triage {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the multi-label topic model.
    Topics {
        /// Corpus file.
        #[arg(long)]
        data: PathBuf,
        /// pmid<TAB>comma-separated topics.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Topic names; defaults to the built-in eight.
        #[arg(long, value_delimiter = ',')]
        topics: Option<Vec<String>>,
    },
}

#[derive(Subcommand)]
enum Annotate {
    /// Score every topic per record; writes pmid<TAB>topic<TAB>score rows.
    Topics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        /// Write every topic score, not only assigned topics.
        all_scores: bool,
    },
    /// Recognize and normalize strain, vaccine and funder mentions.
    Entities {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Verdict {
    Accept,
    Reject,
}

#[derive(Subcommand)]
enum LoopCmd {
    /// Signal vectors and scores for every pool item.
    Signals,
    /// Next pending items by priority.
    Queue {
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Accept or reject one pending item.
    Decide {
        pmid: u64,
        verdict: Verdict,
        #[arg(long)]
        curator: String,
    },
    /// Retrain on every decision so far.
    Iterate,
}

#[derive(Subcommand)]
enum Eval {
    /// Score predicted mentions against gold mentions.
    Prf {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        by_type: bool,
    },
    /// Exact-match agreement between two annotators.
    Iaa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Deterministic train/test split of ids 1..=n, or of the ids in --ids.
    Split {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Overlap of two id lists.
    Coverage {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Subcommand)]
enum Stats {
    /// Publication, journal and topic totals.
    Overview,
    /// New and cumulative articles per day, month or quarter.
    Growth {
        #[arg(long, default_value = "month")]
        granularity: String,
        #[arg(long)]
        csv: bool,
    },
    /// Topic co-occurrence matrix.
    Cooccurrence {
        #[arg(long)]
        csv: bool,
    },
    /// Externally trending articles that are in the collection.
    Trending {
        #[arg(short, default_value_t = hub_core::insights::DEFAULT_TRENDING)]
        n: usize,
    },
    /// Collection share of the configured baseline, per quarter.
    Share,
    /// Articles per number of assigned topics.
    Topics,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<HubConfig> {
    match path {
        Some(p) => Ok(HubConfig::load(p)?),
        None if Path::new("hub.toml").exists() => Ok(HubConfig::load("hub.toml")?),
        None => Ok(HubConfig::default()),
    }
}

fn open_hub(config: &Option<PathBuf>) -> Result<Hub> {
    Ok(Hub::from_config(&load_config(config)?)?)
}

fn reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("open {}", path.display()))?))
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("create {}", path.display()))?))
}

fn records(path: &Path) -> Result<Vec<CitationRecord>> {
    Ok(read_records(reader(path)?)?)
}

fn lines(path: &Path) -> Result<Vec<String>> {
    Ok(reader(path)?.lines().collect::<io::Result<_>>()?)
}

/// One id per line; blank lines and `#` comments are skipped. A header
/// line that is not a number is skipped too.
fn read_ids(path: &Path) -> Result<BTreeSet<u64>> {
    let mut out = BTreeSet::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let t = line.split('\t').next().unwrap_or("").trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse() {
            Ok(id) => {
                out.insert(id);
            }
            Err(_) if i == 0 => {}
            Err(_) => bail!("{}:{}: not an id: {t:?}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn mention_keys(path: &Path) -> Result<Vec<EntityMention>> {
    Ok(read_mentions(reader(path)?)?)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let config = cli.config;
    match cli.command {
        Command::Ingest { path, dry_run, create_only } => {
            let cfg = load_config(&config)?;
            let store = CorpusStore::open(cfg.data_dir().join("corpus"))?;
            let mode = if create_only { IngestMode::CreateOnly } else { IngestMode::CreateOrUpdate };
            let input = lines(&path)?;
            let report = if dry_run {
                store.stage_batch(&input, mode, Utc::now()).report.clone()
            } else {
                store.ingest_batch(&input, mode)?
            };
            println!("{}{}", report.summary_line(), if dry_run { " dry_run=true" } else { "" });
            for (line, reason) in &report.rejects {
                println!("reject\tline {line}\t{reason}");
            }
            for (line, reason) in &report.warnings {
                println!("warning\tline {line}\t{reason}");
            }
        }
        Command::Train(Train::Triage { data, out, epochs }) => {
            let labeled = read_labeled(reader(&data)?)?;
            let mut hyper = TriageHyper::default();
            if let Some(e) = epochs {
                hyper.gd.epochs = e;
            }
            let trained = train_triage(&labeled, &hyper)?;
            trained.model.write(writer(&out)?)?;
            println!(
                "trained=triage records={} final_loss={:.6} out={}",
                labeled.len(),
                trained.loss_history.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Train(Train::Topics { data, labels, out, topics }) => {
            let labels = read_label_file(reader(&labels)?)?;
            let mut pairs: Vec<_> =
                records(&data)?.into_iter().filter_map(|r| labels.get(&r.pmid).cloned().map(|l| (r, l))).collect();
            pairs.sort_by_key(|(r, _)| r.pmid);
            let set = match topics {
                Some(t) => TopicSet::new(t)?,
                None => TopicSet::new(DEFAULT_TOPICS)?,
            };
            let trained = train_topics(&pairs, &set, &TopicHyper::default())?;
            trained.model.write(writer(&out)?)?;
            println!(
                "trained=topics records={} topics={} final_loss={:.6} out={}",
                pairs.len(),
                set.len(),
                trained.loss_history.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Triage { model, input, out } => {
            let model = LinearModel::read(reader(&model)?)?;
            let cfg = load_config(&config)?;
            let rules = match &cfg.keywords {
                Some(k) => KeywordRules::new(k)?,
                None => KeywordRules::new(DEFAULT_KEYWORDS)?,
            };
            let mut w = writer(&out)?;
            writeln!(w, "pmid\trelevant\tscore\tcategory")?;
            let (mut n, mut relevant) = (0, 0);
            for r in records(&input)? {
                let d = triage(&r, Some(&model), &rules)?;
                n += 1;
                relevant += d.relevant as usize;
                writeln!(w, "{}", d.tsv_row())?;
            }
            w.flush()?;
            println!("records={n} relevant={relevant} excluded={}", n - relevant);
        }
        Command::Annotate(Annotate::Topics { model, input, out, all_scores }) => {
            let model = MultiLabelModel::read(reader(&model)?)?;
            let mut w = writer(&out)?;
            writeln!(w, "pmid\ttopic\tscore")?;
            let (mut n, mut rows) = (0, 0);
            for r in records(&input)? {
                let ann = annotate_topics(&r, Some(&model))?;
                n += 1;
                for row in output_rows(&ann, all_scores) {
                    rows += 1;
                    writeln!(w, "{row}")?;
                }
            }
            w.flush()?;
            println!("records={n} rows={rows}");
        }
        Command::Annotate(Annotate::Entities { lexicon, input, out }) => {
            let lexicon = Lexicon::load(&lexicon)?;
            let recs = records(&input)?;
            let mentions: Vec<EntityMention> = recs.iter().flat_map(|r| annotate_record(r, &lexicon)).collect();
            write_mentions(writer(&out)?, &mentions)?;
            println!("records={} mentions={}", recs.len(), mentions.len());
        }
        Command::Loop(cmd) => return loop_cmd(&config, cmd),
        Command::Eval(cmd) => eval_cmd(cmd)?,
        Command::Search { query, page, size, sort, json } => {
            let hub = open_hub(&config)?;
            let mut q = parse_query(&query)?;
            q.page = page;
            q.page_size = size;
            q.sort = sort.parse::<Sort>()?;
            let res = hub.snapshot()?.search(&q)?;
            if json {
                println!("{}", serde_json::to_string(&res)?);
            } else {
                println!("total={} page={} size={} shown={}", res.total, res.page, res.page_size, res.hits.len());
                for h in &res.hits {
                    println!("{}\t{}\t{:.4}\t{}\t{}", h.pmid, h.pub_date, h.score, h.journal, h.title);
                }
            }
        }
        Command::Stats(cmd) => stats_cmd(&config, cmd)?,
        Command::Run { delta } => {
            let hub = open_hub(&config)?;
            let run = run_daily(&hub, &lines(&delta)?, &RunOptions { now: Utc::now(), inject_failure: None })?;
            println!("{}", run.summary_line());
            for s in &run.stages {
                println!("{}\tin={}\tout={}\terrors={}\t{}ms", s.stage, s.input, s.output, s.errors, s.duration_ms);
            }
            return Ok(match run.status {
                RunStatus::Succeeded => ExitCode::SUCCESS,
                RunStatus::Partial => ExitCode::from(2),
                RunStatus::Failed(_) => ExitCode::FAILURE,
            });
        }
        Command::Serve { port, host } => {
            let hub = Arc::new(open_hub(&config)?);
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad host/port")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(hub_service::serve(hub, addr))?;
        }
        Command::Prepare { fixtures, dir } => {
            let fixtures = fixtures.unwrap_or_else(hub_core::demo::fixture_dir);
            let path = hub_core::demo::prepare(&fixtures, &dir)?;
            println!("config={}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn loop_cmd(config: &Option<PathBuf>, cmd: LoopCmd) -> Result<ExitCode> {
    let hub = open_hub(config)?;
    match cmd {
        LoopCmd::Signals => {
            let state = hub.longcovid().snapshot();
            println!("items={} iteration={}", state.items().count(), state.iteration());
            println!("pmid\ts1\ts2\ts3\ts4\ts5\ts6\ts7\ts8\tp\tstatus");
            for i in state.items() {
                let s: Vec<String> = i.signals.to_array().iter().map(|v| format!("{v:.6}")).collect();
                let status = serde_json::to_value(i.status)?;
                println!("{}\t{}\t{:.6}\t{}", i.pmid, s.join("\t"), i.p, status.as_str().unwrap_or(""));
            }
        }
        LoopCmd::Queue { k } => {
            let queue = hub.review_queue(k);
            println!("queued={} iteration={}", queue.len(), hub.longcovid().snapshot().iteration());
            for q in &queue {
                println!("{}\t{:.6}\t{:.6}\t{}", q.pmid, q.p, q.priority, q.title);
            }
        }
        LoopCmd::Decide { pmid, verdict, curator } => {
            let label = match verdict {
                Verdict::Accept => Label::Accept,
                Verdict::Reject => Label::Reject,
            };
            let item = hub.decide(pmid, label, &curator, Utc::now())?;
            println!("{}", serde_json::to_string(&item)?);
        }
        LoopCmd::Iterate => {
            let it = hub.longcovid().iterate()?;
            let state = hub.longcovid().snapshot();
            let pending = state.items().filter(|i| i.decided_by.is_none()).count();
            println!("iteration={it} pending={pending}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn key_set(ms: &[EntityMention]) -> BTreeSet<MentionKey> {
    ms.iter().map(EntityMention::key).collect()
}

fn eval_cmd(cmd: Eval) -> Result<()> {
    match cmd {
        Eval::Prf { gold, pred, by_type } => {
            let (gold, pred) = (mention_keys(&gold)?, mention_keys(&pred)?);
            let all = prf(&key_set(&gold), &key_set(&pred));
            println!("{}", all.summary_line());
            if by_type {
                let types: BTreeSet<&str> = gold.iter().chain(&pred).map(|m| m.entity_type.as_str()).collect();
                let mut parts: Vec<Prf> = Vec::new();
                println!("type\ttp\tfp\tfn\tprecision\trecall\tf1");
                for t in types {
                    let of = |ms: &[EntityMention]| {
                        ms.iter().filter(|m| m.entity_type == t).map(EntityMention::key).collect::<BTreeSet<_>>()
                    };
                    let p = prf(&of(&gold), &of(&pred));
                    println!("{t}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}", p.tp, p.fp, p.fn_, p.precision, p.recall, p.f1);
                    parts.push(p);
                }
                for (name, p) in [("micro", micro_average(&parts)), ("macro", macro_average(&parts))] {
                    println!("{name}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}", p.tp, p.fp, p.fn_, p.precision, p.recall, p.f1);
                }
            }
        }
        Eval::Iaa { a, b } => {
            let r = iaa_exact(&key_set(&mention_keys(&a)?), &key_set(&mention_keys(&b)?));
            println!("{}", r.summary_line());
            println!("denominator\tvalue\tratio");
            println!("union\t{}\t{:.6}", r.n_union, r.union_ratio);
            println!("per_annotator\t{:.1}\t{:.6}", (r.n_a + r.n_b) as f64 / 2.0, r.per_annotator_ratio);
            println!("gold_a\t{}\t{:.6}", r.n_a, r.gold_ratio);
        }
        Eval::Split { n, ids, train, seed } => {
            let ids: Vec<u64> = match (n, ids) {
                (_, Some(path)) => read_ids(&path)?.into_iter().collect(),
                (Some(n), None) => (1..=n as u64).collect(),
                (None, None) => bail!("give --n or --ids"),
            };
            if train > ids.len() {
                bail!("--train {train} exceeds {} ids", ids.len());
            }
            let (tr, te) = split(&ids, train, ids.len() - train, seed)?;
            println!("n={} train={} test={} seed={seed}", ids.len(), tr.len(), te.len());
            for id in &tr {
                println!("train\t{id}");
            }
            for id in &te {
                println!("test\t{id}");
            }
        }
        Eval::Coverage { a, b } => {
            let r = compare_collections(&read_ids(&a)?, &read_ids(&b)?);
            println!("{}", r.summary_line());
        }
    }
    Ok(())
}

fn stats_cmd(config: &Option<PathBuf>, cmd: Stats) -> Result<()> {
    let hub = open_hub(config)?;
    let snap = hub.snapshot()?;
    let out = io::stdout();
    let mut out = out.lock();
    match cmd {
        Stats::Overview => {
            let o = snap.overview();
            writeln!(out, "publications={} journals={} topics={}", o.publications, o.journals, o.topics)?;
        }
        Stats::Growth { granularity, csv } => {
            let g: Granularity = granularity.parse().map_err(anyhow::Error::msg)?;
            let series = snap.growth(g);
            if csv {
                series.write_csv(&mut out)?;
            } else {
                writeln!(out, "granularity={g} periods={} total={}", series.rows.len(), series.total())?;
                for r in &series.rows {
                    writeln!(out, "{}\t{}\t{}", r.period, r.new, r.cumulative)?;
                }
            }
        }
        Stats::Cooccurrence { csv } => {
            let m = snap.cooccurrence();
            let sep = if csv { "," } else { "\t" };
            writeln!(out, "topic{sep}{}", m.topics.join(sep))?;
            for (t, row) in m.topics.iter().zip(&m.counts) {
                let cells: Vec<String> = row.iter().map(usize::to_string).collect();
                writeln!(out, "{t}{sep}{}", cells.join(sep))?;
            }
        }
        Stats::Trending { n } => {
            let items = hub.trending(n)?;
            writeln!(out, "trending={}", items.len())?;
            for i in items {
                let title = snap.store.get(i.pmid).map(|r| r.title.as_str()).unwrap_or("");
                writeln!(out, "{}\t{:.4}\t{title}", i.pmid, i.score)?;
            }
        }
        Stats::Share => {
            let rows = hub.share_ratio()?;
            writeln!(out, "period,collection,baseline,ratio")?;
            for r in rows {
                let ratio = r.ratio.map(|x| format!("{x:.6}")).unwrap_or_default();
                writeln!(out, "{},{},{},{ratio}", r.period, r.collection, r.baseline)?;
            }
        }
        Stats::Topics => {
            let bins = &snap.stats.topics_per_article;
            let counts: BTreeMap<usize, usize> = bins.iter().copied().enumerate().collect();
            writeln!(out, "articles={}", bins.iter().sum::<usize>())?;
            for (k, n) in counts {
                writeln!(out, "{k}\t{n}")?;
            }
        }
    }
    Ok(())
}
