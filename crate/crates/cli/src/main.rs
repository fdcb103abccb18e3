use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ctxlm::corpus::{build_vocabulary, read_corpus, write_corpus, CorpusSplit};
use ctxlm::dialog::{Channel, Speaker, TextInput, TranscriptLine};
use ctxlm::eval::{self, group_rows, Resources};
use ctxlm::wordclass::cluster_words;
use ctxlm::{Config, GroupRow, LMRegistry, LmClassId, Timetable, Utterance, WordClassMap};

#[derive(Parser)]
#[command(
    name = "ctxlm",
    version,
    about = "Context-dependent class language models for a timetable dialogue system"
)]
struct Cli {
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic corpus and its train/test split.
    GenCorpus,
    /// Cluster the training vocabulary into word classes.
    ClusterWords {
        /// Training corpus; generated from the seed when absent.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Number of classes; the configured value when absent.
        #[arg(long)]
        classes: Option<u32>,
    },
    /// Train the fallback and the ten specific model pairs.
    Train {
        #[arg(long)]
        train: Option<PathBuf>,
        /// Class map written by `cluster-words`; clusters afresh when absent.
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Perplexity of both conditions per group.
    EvalPp(EvalArgs),
    /// Word accuracy of both conditions on the simulated channel.
    EvalRec(EvalArgs),
    /// Sentence understanding of both conditions.
    EvalSu(EvalArgs),
    /// Full comparison over all configured seeds.
    Compare,
    /// Interactive dialogue; one user utterance per line.
    Repl {
        #[arg(long)]
        models: Option<PathBuf>,
        /// Read user lines from a file instead of stdin.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Pass typed lines through the simulated recognizer.
        #[arg(long)]
        noisy: bool,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Model manifest written by `train`; trains in memory when absent.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Test corpus; the seed's held-out split when absent.
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum Metric {
    Pp,
    Wa,
    Su,
}

/// Files written by one subcommand, recorded in `<cmd>.manifest`.
struct Produced {
    out: PathBuf,
    name: &'static str,
    files: Vec<PathBuf>,
}

impl Produced {
    fn new(out: &Path, name: &'static str) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(Produced {
            out: out.to_path_buf(),
            name,
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(rel);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn record(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    fn finish(self) -> Result<()> {
        let mut list = String::new();
        for f in &self.files {
            list.push_str(&f.display().to_string());
            list.push('\n');
        }
        let path = self.out.join(format!("{}.manifest", self.name));
        fs::write(&path, list).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("cannot load config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_corpus_file(path: &Path) -> Result<Vec<Utterance>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_corpus(BufReader::new(f))?)
}

fn corpus_bytes(corpus: &[Utterance]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus)?;
    Ok(buf)
}

fn split(cfg: &Config, res: &Resources) -> Result<CorpusSplit> {
    Ok(eval::prepare_split(cfg, res, cfg.seed)?)
}

fn training_set(cfg: &Config, res: &Resources, path: Option<&Path>) -> Result<Vec<Utterance>> {
    match path {
        Some(p) => read_corpus_file(p),
        None => Ok(split(cfg, res)?.train),
    }
}

fn registry(cfg: &Config, res: &Resources, manifest: Option<&Path>) -> Result<LMRegistry> {
    match manifest {
        Some(m) => Ok(LMRegistry::load_all(m, cfg.policy())?),
        None => {
            let train = split(cfg, res)?.train;
            let (vocab, map) = eval::build_classes(cfg, &train, cfg.seed)?;
            Ok(eval::train_models(cfg, &train, &vocab, &map)?.registry(cfg)?)
        }
    }
}

fn gen_corpus(cfg: &Config, out: &Path) -> Result<()> {
    let res = Resources::load(cfg)?;
    let corpus = eval::generate_corpus(cfg, &res, cfg.seed)?;
    let split = ctxlm::corpus::split_corpus(&corpus, cfg.corpus.test_ratio, cfg.seed)?;
    let mut p = Produced::new(out, "gen-corpus")?;
    p.write("corpus.tsv", corpus_bytes(&corpus)?)?;
    p.write("train.tsv", corpus_bytes(&split.train)?)?;
    p.write("test.tsv", corpus_bytes(&split.test)?)?;
    let mut counts: BTreeMap<LmClassId, (usize, usize)> = BTreeMap::new();
    for u in &split.train {
        counts.entry(u.lm_class()).or_default().0 += 1;
    }
    for u in &split.test {
        counts.entry(u.lm_class()).or_default().1 += 1;
    }
    println!("class\ttrain\ttest");
    for (c, (tr, te)) in counts {
        println!("{}\t{tr}\t{te}", c.label());
    }
    p.finish()
}

fn cluster(cfg: &Config, out: &Path, train: Option<&Path>, classes: Option<u32>) -> Result<()> {
    let res = Resources::load(cfg)?;
    let train = training_set(cfg, &res, train)?;
    let vocab = build_vocabulary(&train, cfg.corpus.min_count)?;
    let k = classes.unwrap_or(cfg.clustering.classes);
    let outcome = cluster_words(&train, &vocab, k, &cfg.exchange_options(cfg.seed))?;
    let mut buf = Vec::new();
    outcome.map.write(&vocab, &mut buf)?;
    let mut p = Produced::new(out, "cluster-words")?;
    p.write("classes.txt", buf)?;
    println!(
        "words={}\tK={}\tlog_likelihood={:.4}\tsweeps={}\tmoves={}",
        vocab.len() - 2,
        outcome.map.num_classes(),
        outcome.log_likelihood,
        outcome.sweeps,
        outcome.moves.len()
    );
    p.finish()
}

fn train(cfg: &Config, out: &Path, train: Option<&Path>, class_map: Option<&Path>) -> Result<()> {
    let res = Resources::load(cfg)?;
    let train = training_set(cfg, &res, train)?;
    let (vocab, map) = match class_map {
        Some(path) => {
            let vocab = build_vocabulary(&train, cfg.corpus.min_count)?;
            let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let map = WordClassMap::read(&vocab, BufReader::new(f))?;
            (vocab, map)
        }
        None => eval::build_classes(cfg, &train, cfg.seed)?,
    };
    let models = eval::train_models(cfg, &train, &vocab, &map)?;
    let mut p = Produced::new(out, "train")?;
    let dir = out.join("models");
    let manifest = LMRegistry::write_all(&dir, &models.fallback, &models.specific)?;
    for line in fs::read_to_string(&manifest)?.lines() {
        for f in line.split('\t').skip(1) {
            let path = dir.join(f);
            if !p.files.contains(&path) {
                p.record(path);
            }
        }
    }
    p.record(manifest.clone());
    let reg = models.registry(cfg)?;
    println!("class\tutterances\tmultiword\troute");
    for (class, s) in reg.pool().stats() {
        println!(
            "{}\t{}\t{}\t{}",
            class.label(),
            s.utterances,
            s.multiword,
            reg.route(class).label()
        );
    }
    println!("manifest\t{}", manifest.display());
    p.finish()
}

fn evaluate(cfg: &Config, out: &Path, args: &EvalArgs, metric: Metric) -> Result<()> {
    let res = Resources::load(cfg)?;
    let reg = registry(cfg, &res, args.models.as_deref())?;
    let test = match &args.test {
        Some(p) => read_corpus_file(p)?,
        None => split(cfg, &res)?.test,
    };
    if test.is_empty() {
        bail!(ctxlm::Error::EmptyCorpus);
    }
    let outcomes = eval::evaluate(cfg, &res, &reg, &test, cfg.seed)?;
    let rows = group_rows(&outcomes);
    let (name, table) = metric_table(&rows, metric);
    let mut p = Produced::new(out, name)?;
    print!("{table}");
    p.write(&format!("{name}.tsv"), table)?;
    p.finish()
}

fn metric_table(rows: &[GroupRow], metric: Metric) -> (&'static str, String) {
    let (name, head) = match metric {
        Metric::Pp => ("eval-pp", "group\tutterances\ttokens\tpp_ci\tpp_cd\tpp_red"),
        Metric::Wa => ("eval-rec", "group\tutterances\ttokens\twa_ci\twa_cd\twa_err_red"),
        Metric::Su => ("eval-su", "group\tutterances\ttokens\tsu_ci\tsu_cd\tsu_err_red"),
    };
    let mut s = format!("{head}\n");
    for r in rows {
        let (a, b) = (&r.context_independent, &r.context_dependent);
        let (ci, cd, red) = match metric {
            Metric::Pp => (a.pp, b.pp, r.pp_reduction),
            Metric::Wa => (a.wa, b.wa, r.wa_error_reduction),
            Metric::Su => (a.su, b.su, r.su_error_reduction),
        };
        s.push_str(&format!(
            "{}\t{}\t{}\t{ci:.1}\t{cd:.1}\t{red:.1}\n",
            r.group.as_str(),
            r.utterances,
            r.tokens
        ));
    }
    (name, s)
}

fn compare(cfg: &Config, out: &Path) -> Result<()> {
    let report = eval::run_compare(cfg)?;
    let mut p = Produced::new(out, "compare")?;
    let tsv = report.to_tsv();
    p.write("compare.tsv", &tsv)?;
    p.write("compare.json", report.to_json())?;
    for (i, line) in tsv.lines().enumerate() {
        if i == 0 || line.starts_with("all\t") {
            println!("{line}");
        }
    }
    p.finish()
}

fn repl(cfg: &Config, models: Option<&Path>, input: Option<&Path>, noisy: bool) -> Result<()> {
    let res = Resources::load(cfg)?;
    let mut reg = registry(cfg, &res, models)?;
    let lines: Box<dyn Iterator<Item = String>> = match input {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            Box::new(BufReader::new(f).lines().map_while(io::Result::ok))
        }
        None => Box::new(io::stdin().lock().lines().map_while(io::Result::ok)),
    };
    let channel = noisy.then(|| Channel {
        table: res.confusions.clone(),
        nbest: cfg.recognizer.nbest,
        noise: cfg.recognizer.noise,
        lambda: cfg.recognizer.lambda,
        seed: cfg.seed,
    });
    let mut source = TextInput::new(lines, res.lexicon.clone(), channel);
    let show = |l: &TranscriptLine| {
        let mut stdout = io::stdout().lock();
        let _ = match l.speaker {
            Speaker::System => writeln!(
                stdout,
                "S[{}] {}\t({}; active LM: {})",
                l.turn,
                l.prompt.as_deref().unwrap_or(""),
                l.content,
                l.active
            ),
            Speaker::User => writeln!(
                stdout,
                "U[{}] {}\t({}; active LM: {})",
                l.turn,
                l.tokens.as_deref().unwrap_or(""),
                l.content,
                l.active
            ),
        };
        let _ = stdout.flush();
    };
    let (_, state) = ctxlm::run_session(&cfg.dialog, &mut reg, &Timetable::builtin(), &mut source, show)?;
    println!("END\t{:?}", state.phase);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::GenCorpus => gen_corpus(&cfg, out),
        Cmd::ClusterWords { train, classes } => cluster(&cfg, out, train.as_deref(), *classes),
        Cmd::Train { train: t, class_map } => train(&cfg, out, t.as_deref(), class_map.as_deref()),
        Cmd::EvalPp(a) => evaluate(&cfg, out, a, Metric::Pp),
        Cmd::EvalRec(a) => evaluate(&cfg, out, a, Metric::Wa),
        Cmd::EvalSu(a) => evaluate(&cfg, out, a, Metric::Su),
        Cmd::Compare => compare(&cfg, out),
        Cmd::Repl { models, input, noisy } => repl(&cfg, models.as_deref(), input.as_deref(), *noisy),
    }
}

/// `ERROR<TAB>kind<TAB>message` on a single line.
fn error_line(kind: &str, msg: &str) -> String {
    let msg: String = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("ERROR\t{kind}\t{msg}")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<ctxlm::Error>())
                .map_or("io", ctxlm::Error::kind);
            eprintln!("{}", error_line(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
