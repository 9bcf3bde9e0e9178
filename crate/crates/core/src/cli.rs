//! Command-line front end. Every subcommand reads and writes under one output
//! directory and refreshes `manifest.json` when it finishes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bm25::Bm25Index;
use crate::config::{hex, ConfigBuilder, RunConfig};
use crate::corpus::{LoadReport, PairedDataset, UnpairedDataset};
use crate::distiller::{self, DistillIndexes};
use crate::error::{Error, ErrorClass, Result};
use crate::matcher::{ExternalScorer, MatchScorer, PairScorer};
use crate::metrics::{self, MetricsReport};
use crate::model::{self, EpochLog, StudentMode, WindowLm};
use crate::synth;

#[derive(Parser, Debug)]
#[command(
    name = "dialdistill",
    version,
    about = "Augment dialogue pairs from unpaired sentences and train distilled students"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter and dedup the input corpora into the output directory.
    Ingest(RunArgs),
    /// Build BM25 snapshots over paired posts, paired responses and unpaired sentences.
    Index(RunArgs),
    /// Train the matching teacher on the paired data.
    TrainMatcher(RunArgs),
    /// Build augmented pairs from the unpaired sentences.
    Augment(RunArgs),
    /// Train both teachers and the student picked by --mode.
    Train(RunArgs),
    /// Evaluate every trained model on the test pairs.
    Eval(RunArgs),
    /// Run every step, training a student for each mode.
    Pipeline(RunArgs),
    /// Write the bundled synthetic corpus to the output directory.
    Synth(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Reverse,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    paired: Option<PathBuf>,
    #[arg(long)]
    unpaired: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Use the bundled synthetic corpus when no input files are given.
    #[arg(long)]
    synthetic: bool,
    /// Number of augmented pairs to build.
    #[arg(long)]
    k: Option<usize>,
    /// Acceptance threshold on the matching score.
    #[arg(long)]
    eta: Option<f64>,
    /// Paired hits per unpaired sentence.
    #[arg(long)]
    n: Option<usize>,
    /// Unpaired hits per paired hit.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    /// Keep every sentence's best candidate regardless of --eta.
    #[arg(long)]
    no_ranking: bool,
    #[arg(long)]
    alpha_m: Option<f64>,
    #[arg(long)]
    alpha_g: Option<f64>,
    /// Sets both --alpha-m and --alpha-g.
    #[arg(long)]
    alpha: Option<f64>,
    /// full, wo_ml, wo_dl or wo_pd.
    #[arg(long)]
    mode: Option<String>,
    /// Shell command speaking the JSON-lines scoring protocol.
    #[arg(long)]
    external_scorer: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Any config key, repeatable: --set lm_epochs=5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut b = ConfigBuilder::new();
        if let Some(path) = &self.config {
            b.load_file(path)?;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("seed", self.seed.map(|v| v.to_string()));
        put("out_dir", path(&self.out_dir));
        put("paired", path(&self.paired));
        put("unpaired", path(&self.unpaired));
        put("test", path(&self.test));
        put("synthetic", self.synthetic.then(|| "true".into()));
        put("k", self.k.map(|v| v.to_string()));
        put("eta", self.eta.map(|v| v.to_string()));
        put("n", self.n.map(|v| v.to_string()));
        put("m", self.m.map(|v| v.to_string()));
        put("max_attempts", self.max_attempts.map(|v| v.to_string()));
        put(
            "direction",
            self.direction.map(|d| match d {
                DirectionArg::Forward => "forward".into(),
                DirectionArg::Reverse => "reverse".into(),
            }),
        );
        put("ranking", self.no_ranking.then(|| "false".into()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("alpha_m", self.alpha_m.map(|v| v.to_string()));
        put("alpha_g", self.alpha_g.map(|v| v.to_string()));
        put("mode", self.mode.clone());
        put("external_scorer", self.external_scorer.clone());
        put("threads", self.threads.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        for (k, v) in &pairs {
            b.set(k, v)?;
        }
        b.build()
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 ok, 1 usage, 2 data, 3 numeric.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    let (name, args) = match &command {
        Command::Ingest(a) => ("ingest", a),
        Command::Index(a) => ("index", a),
        Command::TrainMatcher(a) => ("train-matcher", a),
        Command::Augment(a) => ("augment", a),
        Command::Train(a) => ("train", a),
        Command::Eval(a) => ("eval", a),
        Command::Pipeline(a) => ("pipeline", a),
        Command::Synth(a) => ("synth", a),
    };
    let cfg = args.config()?;
    let job = Job::new(cfg)?;
    let steps = || -> Result<()> {
        match command {
            Command::Ingest(_) => job.ingest(),
            Command::Index(_) => job.index(),
            Command::TrainMatcher(_) => job.train_matcher(),
            Command::Augment(_) => job.augment(),
            Command::Train(_) => job.train(&[job.cfg.mode]),
            Command::Eval(_) => job.eval(),
            Command::Pipeline(_) => {
                job.ingest()?;
                job.index()?;
                job.train_matcher()?;
                job.augment()?;
                job.train(&StudentMode::ALL)?;
                job.eval()
            }
            Command::Synth(_) => job.synth(),
        }
    };
    match job.cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(steps)?,
        None => steps()?,
    }
    job.write_manifest(name)
}

struct Job {
    cfg: RunConfig,
    root: PathBuf,
}

const PAIRED: &str = "data/paired.jsonl";
const UNPAIRED: &str = "data/unpaired.jsonl";
const TEST: &str = "data/test.jsonl";
const AUGMENTED: &str = "augmented.jsonl";
const MATCH_TEACHER: &str = "models/match_teacher.json";
const GEN_TEACHER: &str = "models/gen_teacher.json";
const INDEXES: [&str; 3] = ["index/dp_posts.bm25", "index/dp_responses.bm25", "index/du.bm25"];

fn match_student(mode: StudentMode) -> String {
    format!("models/match_student_{}.json", mode.name())
}

fn gen_student(mode: StudentMode) -> String {
    format!("models/gen_student_{}.json", mode.name())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_pairs(path: &Path, ds: &PairedDataset) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        post: &'a str,
        response: &'a str,
    }
    let mut text = String::new();
    for ex in &ds.items {
        text += &serde_json::to_string(&Line {
            post: &ex.post.raw,
            response: &ex.response.raw,
        })?;
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_texts(path: &Path, ds: &UnpairedDataset) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        text: &'a str,
    }
    let mut text = String::new();
    for s in &ds.items {
        text += &serde_json::to_string(&Line { text: &s.raw })?;
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_logs(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut text = String::new();
    for l in logs {
        text += &serde_json::to_string(l)?;
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        // a missing upstream artifact means the steps ran out of order
        Err(Error::InvalidConfig(format!("{} not found; {hint}", path.display())))
    }
}

#[derive(Serialize)]
struct IngestReport {
    paired: LoadReport,
    unpaired: LoadReport,
    test: Option<LoadReport>,
}

#[derive(Serialize)]
struct AugmentSummary {
    report: distiller::RunReport,
    shortfall: Option<distiller::Shortfall>,
    scorer: String,
}

/// One table row: a corpus or model name with its metrics.
#[derive(Debug, Clone, Serialize)]
struct Row {
    name: String,
    metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
struct EvalReport {
    data: Vec<Row>,
    matching: Vec<Row>,
    generation: Vec<Row>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    artifacts: BTreeMap<String, String>,
}

impl Job {
    fn new(cfg: RunConfig) -> Result<Self> {
        for p in [&cfg.paired, &cfg.unpaired, &cfg.test].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("{} does not exist", p.display())));
            }
        }
        let root = cfg.out_dir.clone();
        for dir in ["data", "index", "models", "logs"] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(Self { cfg, root })
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn synth(&self) -> Result<()> {
        let corpus = synth::generate(&self.cfg.synth_config())?;
        let paths = corpus.write(&self.root)?;
        log::info!("wrote synthetic corpus to {}", paths.paired.parent().unwrap_or(&self.root).display());
        Ok(())
    }

    fn ingest(&self) -> Result<()> {
        let (paired, unpaired, mut test) = match (&self.cfg.paired, &self.cfg.unpaired) {
            (Some(p), Some(u)) => (p.clone(), u.clone(), self.cfg.test.clone()),
            (None, None) if self.cfg.synthetic => {
                let dir = self.at("synthetic");
                let paths = synth::generate(&self.cfg.synth_config())?.write(&dir)?;
                (paths.paired, paths.unpaired, Some(paths.test))
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "ingest needs --paired and --unpaired, or --synthetic".into(),
                ))
            }
        };
        if self.cfg.test.is_some() {
            test = self.cfg.test.clone();
        }
        let f = &self.cfg.filter;
        let (dp, paired_report) = PairedDataset::load(&paired, f)?;
        let (du, unpaired_report) = UnpairedDataset::load(&unpaired, f)?;
        write_pairs(&self.at(PAIRED), &dp)?;
        write_texts(&self.at(UNPAIRED), &du)?;
        let test_report = match &test {
            Some(t) => {
                let (ds, report) = PairedDataset::load(t, f)?;
                write_pairs(&self.at(TEST), &ds)?;
                Some(report)
            }
            None => None,
        };
        log::info!(
            "ingested {} paired ({} rejected, {} duplicates) and {} unpaired ({} rejected, {} duplicates)",
            dp.len(),
            paired_report.rejected_total(),
            paired_report.deduped,
            du.len(),
            unpaired_report.rejected_total(),
            unpaired_report.deduped
        );
        write_json(
            &self.at("ingest_report.json"),
            &IngestReport {
                paired: paired_report,
                unpaired: unpaired_report,
                test: test_report,
            },
        )
    }

    fn paired(&self) -> Result<PairedDataset> {
        let p = self.at(PAIRED);
        require(&p, "run ingest first")?;
        Ok(PairedDataset::load(&p, &self.cfg.filter)?.0)
    }

    fn unpaired(&self) -> Result<UnpairedDataset> {
        let p = self.at(UNPAIRED);
        require(&p, "run ingest first")?;
        Ok(UnpairedDataset::load(&p, &self.cfg.filter)?.0)
    }

    fn augmented(&self) -> Result<PairedDataset> {
        let p = self.at(AUGMENTED);
        if p.exists() && std::fs::metadata(&p).map_err(|e| Error::io(&p, e))?.len() > 0 {
            distiller::read_augmented(&p)
        } else {
            Ok(PairedDataset::default())
        }
    }

    fn index(&self) -> Result<()> {
        let idx = DistillIndexes::build(&self.paired()?, &self.unpaired()?, self.cfg.bm25)?;
        for (rel, index) in INDEXES.iter().zip([&idx.dp_posts, &idx.dp_responses, &idx.du]) {
            let path = self.at(rel);
            let mut buf = Vec::new();
            index.write_snapshot(&mut buf).map_err(|e| Error::io(&path, e))?;
            std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads the snapshots when they match the data and parameters, otherwise
    /// rebuilds.
    fn indexes(&self, dp: &PairedDataset, du: &UnpairedDataset) -> Result<DistillIndexes> {
        let read = |rel: &str| -> Result<Option<Bm25Index>> {
            let path = self.at(rel);
            if !path.exists() {
                return Ok(None);
            }
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            Bm25Index::read_snapshot(bytes.as_slice()).map(Some)
        };
        if let (Some(dp_posts), Some(dp_responses), Some(du_index)) =
            (read(INDEXES[0])?, read(INDEXES[1])?, read(INDEXES[2])?)
        {
            let fits = dp_posts.doc_count() == dp.len()
                && dp_responses.doc_count() == dp.len()
                && du_index.doc_count() == du.len()
                && dp_posts.params() == self.cfg.bm25;
            if fits {
                return Ok(DistillIndexes {
                    dp_posts,
                    dp_responses,
                    du: du_index,
                });
            }
            log::warn!("index snapshots do not match the data; rebuilding");
        }
        DistillIndexes::build(dp, du, self.cfg.bm25)
    }

    fn train_matcher(&self) -> Result<()> {
        let (teacher, logs) =
            model::train_match_teacher(&self.paired()?, self.cfg.neg_per_pos, self.cfg.match_hyper(), self.cfg.feature_dim)?;
        teacher.scorer.save(&self.at(MATCH_TEACHER), "teacher")?;
        write_logs(&self.at("logs/match_teacher.jsonl"), &logs)
    }

    fn match_teacher(&self) -> Result<MatchScorer> {
        let p = self.at(MATCH_TEACHER);
        require(&p, "run train-matcher first")?;
        Ok(MatchScorer::load(&p)?.0)
    }

    fn augment(&self) -> Result<()> {
        let dp = self.paired()?;
        let du = self.unpaired()?;
        let idx = self.indexes(&dp, &du)?;
        let teacher;
        let external;
        let (scorer, name): (&dyn PairScorer, String) = match &self.cfg.external_scorer {
            Some(cmd) => {
                external = ExternalScorer::new(cmd.clone());
                (&external, format!("external: {cmd}"))
            }
            None => {
                teacher = self.match_teacher()?;
                (&teacher, "match_teacher".into())
            }
        };
        let out = distiller::distill(&dp, &du, &idx, scorer, &self.cfg.distill_config())?;
        if let Some(s) = &out.shortfall {
            log::warn!("only {} of {} augmented pairs found; continuing with what exists", s.obtained, s.requested);
        }
        log::info!("accepted {} of {} attempted", out.report.accepted, out.report.attempted);
        distiller::write_augmented(&self.at(AUGMENTED), &out.pairs)?;
        write_json(
            &self.at("augment_report.json"),
            &AugmentSummary {
                report: out.report,
                shortfall: out.shortfall,
                scorer: name,
            },
        )
    }

    fn train(&self, modes: &[StudentMode]) -> Result<()> {
        let dp = self.paired()?;
        let da = self.augmented()?;
        let match_teacher = match self.match_teacher() {
            Ok(t) => model::MatchModel {
                scorer: t,
                role: model::Role::Teacher,
            },
            Err(_) => {
                self.train_matcher()?;
                model::MatchModel {
                    scorer: self.match_teacher()?,
                    role: model::Role::Teacher,
                }
            }
        };
        let hyper = self.cfg.lm_hyper();
        let (gen_teacher, mut logs) = model::train_gen_teacher(&dp, model::build_vocab(&dp, &da), &hyper)?;
        gen_teacher.save(&self.at(GEN_TEACHER))?;
        for &mode in modes {
            log::info!("training {} students", mode.name());
            let (ms, mlog) = model::train_match_student(
                &dp,
                &da,
                &match_teacher,
                self.cfg.weights.alpha_m,
                self.cfg.neg_per_pos,
                self.cfg.match_hyper(),
                mode,
            )?;
            ms.scorer.save(&self.at(&match_student(mode)), "student")?;
            let (gs, glog) = model::train_gen_student(&dp, &da, &gen_teacher, self.cfg.weights.alpha_g, &hyper, mode)?;
            gs.save(&self.at(&gen_student(mode)))?;
            logs.extend(mlog);
            logs.extend(glog);
        }
        let name = if modes.len() == 1 {
            format!("logs/train_{}.jsonl", modes[0].name())
        } else {
            "logs/train.jsonl".into()
        };
        write_logs(&self.at(&name), &logs)
    }

    fn eval(&self) -> Result<()> {
        let dp = self.paired()?;
        let da = self.augmented()?;
        let test_path = self.at(TEST);
        require(&test_path, "pass --test (or --synthetic) to ingest")?;
        let test = PairedDataset::load(&test_path, &self.cfg.filter)?.0;

        let mut data = vec![Row {
            name: "paired".into(),
            metrics: metrics::corpus_distinct_report(&dp),
        }];
        if !da.is_empty() {
            data.push(Row {
                name: "augmented".into(),
                metrics: metrics::augmented_report(&da, &dp)?,
            });
        }

        let tasks = metrics::build_ranking_tasks(&test, self.cfg.seed)?;
        let mut matching = Vec::new();
        let mut generation = Vec::new();
        let mut models: Vec<(String, String, String)> = vec![("teacher".into(), MATCH_TEACHER.into(), GEN_TEACHER.into())];
        for mode in StudentMode::ALL {
            models.push((mode.name().into(), match_student(mode), gen_student(mode)));
        }
        for (name, m_rel, g_rel) in models {
            let m_path = self.at(&m_rel);
            if m_path.exists() {
                let (scorer, _) = MatchScorer::load(&m_path)?;
                matching.push(Row {
                    name: name.clone(),
                    metrics: metrics::map_and_recall(&tasks, &scorer)?.report(),
                });
            }
            let g_path = self.at(&g_rel);
            if g_path.exists() {
                let lm = WindowLm::load(&g_path)?;
                generation.push(Row {
                    name,
                    metrics: metrics::generation_report(&lm, &test, self.cfg.max_len)?,
                });
            }
        }
        let report = EvalReport {
            data,
            matching,
            generation,
        };
        write_json(&self.at("metrics.json"), &report)?;
        let table = render_tables(&report);
        std::fs::write(self.at("metrics.txt"), &table).map_err(|e| Error::io(self.at("metrics.txt"), e))?;
        print!("{table}");
        Ok(())
    }

    /// Hashes every file under the output directory except the manifest.
    fn write_manifest(&self, command: &str) -> Result<()> {
        let mut files = Vec::new();
        collect_files(&self.root, &mut files)?;
        let mut artifacts = BTreeMap::new();
        for path in files {
            let rel = path
                .strip_prefix(&self.root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            if rel == "manifest.json" {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            artifacts.insert(rel, hex(&Sha256::digest(&bytes)));
        }
        std::fs::write(self.at("config.txt"), self.cfg.render()).map_err(|e| Error::io(self.at("config.txt"), e))?;
        artifacts.insert("config.txt".into(), hex(&Sha256::digest(self.cfg.render().as_bytes())));
        write_json(
            &self.at("manifest.json"),
            &Manifest {
                command,
                seed: self.cfg.seed,
                config_hash: self.cfg.hash(),
                artifacts,
            },
        )
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

const DATA_COLUMNS: [&str; 8] = [
    "Distinct-1", "Distinct-2", "Distinct-3", "Distinct-4", "Novelty-1", "Novelty-2", "Novelty-3", "Novelty-4",
];
const MATCHING_COLUMNS: [&str; 4] = ["MAP", "R10@1", "R10@2", "R10@5"];
const GENERATION_COLUMNS: [&str; 5] = ["PPL", "BLEU-1", "BLEU-2", "Dist-1", "Dist-2"];

/// Every column name the metrics tables carry.
pub fn table_columns() -> Vec<&'static str> {
    DATA_COLUMNS
        .iter()
        .chain(&MATCHING_COLUMNS)
        .chain(&GENERATION_COLUMNS)
        .copied()
        .collect()
}

fn render_table(out: &mut String, title: &str, first: &str, columns: &[&str], rows: &[Row]) {
    let width = rows.iter().map(|r| r.name.len()).chain([first.len()]).max().unwrap_or(0);
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{first:<width$}");
    for c in columns {
        let _ = write!(out, "  {c:>10}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<width$}", r.name);
        for c in columns {
            match r.metrics.get(c) {
                Some(v) => {
                    let _ = write!(out, "  {v:>10.4}");
                }
                None => {
                    let _ = write!(out, "  {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out.push('\n');
}

fn render_tables(report: &EvalReport) -> String {
    let mut out = String::new();
    render_table(&mut out, "augmented data", "corpus", &DATA_COLUMNS, &report.data);
    render_table(&mut out, "matching", "model", &MATCHING_COLUMNS, &report.matching);
    render_table(&mut out, "generation", "model", &GENERATION_COLUMNS, &report.generation);
    out
}
