//! Command-line front end. Exit codes: 0 success, 1 usage, 2 input,
//! 3 numeric failure, 4 incompatible checkpoint/config.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use triage_core::corpus::{split_dev, synth_corpus};
use triage_core::params::{init_params, DEFAULT_VOCAB_SIZE};
use triage_core::text::{tokenize, TokenizedText};
use triage_core::train::{train_with, LossReport};
use triage_core::triage::{answer_document_with, Route};
use triage_core::QASample;

use crate::cache::{counts, load_corpus, save_corpus};
use crate::checkpoint::{self, Checkpoint};
use crate::error::CliError;
use crate::eval;
use crate::runconfig::RunConfig;
use crate::squad::load_squad;

#[derive(Debug, Parser)]
#[command(name = "itriage", version, about = "Cascaded extractive question answering with early exit and context pruning")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a corpus cache from SQuAD JSON or the synthetic generator.
    Prep(PrepArgs),
    /// Train on golden paragraphs and write a checkpoint.
    Train(Common),
    /// Accuracy, pruning and latency report as JSON.
    Eval(Common),
    /// Latency only: mean, std, p90, p99 over five passes.
    Bench(Common),
    /// Train one model per triage depth and report triage F1.
    Sweep(Common),
    /// Triage F1 over the most confident N% of questions, as CSV.
    Profile(Common),
    /// Answer one question against a plain-text document.
    Ask(AskArgs),
}

/// Flags shared by every command; each mirrors a config-file key.
#[derive(Debug, Args, Default)]
struct Common {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Feature width.
    #[arg(long)]
    d: Option<String>,
    /// Encoder depth.
    #[arg(long = "L")]
    layers: Option<String>,
    /// Triage depth; `sweep` takes a comma-separated list.
    #[arg(long = "T")]
    triage: Option<String>,
    /// Pruning candidates.
    #[arg(long = "K")]
    k: Option<String>,
    /// Early-exit threshold (`inf` disables exits).
    #[arg(long = "t")]
    t: Option<String>,
    #[arg(long)]
    lmax: Option<String>,
    /// independent | conditional
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    weight_sharing: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    shared_norm: Option<String>,
    /// Paragraphs kept by TF-IDF selection.
    #[arg(long)]
    paras: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    step: Option<String>,
    /// Gradient-norm cap per training sample (`inf` to disable).
    #[arg(long)]
    clip: Option<String>,
    /// Worker threads for accuracy evaluation.
    #[arg(long)]
    jobs: Option<String>,
    /// Run the full-depth pipeline without the triage stage.
    #[arg(long)]
    no_triage: bool,
    #[arg(long)]
    corpus: Option<String>,
    /// Held-out corpus for `sweep`.
    #[arg(long)]
    eval_corpus: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    /// Output file (reports go to stdout when absent).
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated top-N% buckets for `profile`.
    #[arg(long)]
    buckets: Option<String>,
}

#[derive(Debug, Args)]
struct PrepArgs {
    /// Synthetic corpus spec, e.g. `seed=1 docs=4 paras=10`.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    synth: Option<Vec<String>>,
    /// SQuAD v1.1 JSON file.
    #[arg(long)]
    squad: Option<PathBuf>,
    /// Put the first N articles in dev-val and the rest in dev-test;
    /// `--out` then names a directory.
    #[arg(long)]
    split: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct AskArgs {
    #[arg(long)]
    question: String,
    /// Plain text; blank lines separate paragraphs.
    #[arg(long)]
    document: PathBuf,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut flags = RunConfig::default();
        let pairs = [
            ("seed", &self.seed),
            ("d", &self.d),
            ("L", &self.layers),
            ("T", &self.triage),
            ("K", &self.k),
            ("t", &self.t),
            ("lmax", &self.lmax),
            ("variant", &self.variant),
            ("weight-sharing", &self.weight_sharing),
            ("shared-norm", &self.shared_norm),
            ("paras", &self.paras),
            ("epochs", &self.epochs),
            ("step", &self.step),
            ("clip", &self.clip),
            ("jobs", &self.jobs),
            ("corpus", &self.corpus),
            ("eval-corpus", &self.eval_corpus),
            ("checkpoint", &self.checkpoint),
            ("out", &self.out),
            ("buckets", &self.buckets),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set(key, v)?;
            }
        }
        if self.no_triage {
            flags.set("no-triage", "true")?;
        }
        match &self.config {
            Some(path) => Ok(RunConfig::from_file(path)?.overridden_by(flags)),
            None => Ok(flags),
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prep(a) => cmd_prep(&a),
        Command::Train(c) => cmd_train(&c.run_config()?),
        Command::Eval(c) => cmd_eval(&c.run_config()?),
        Command::Bench(c) => cmd_bench(&c.run_config()?),
        Command::Sweep(c) => cmd_sweep(&c.run_config()?),
        Command::Profile(c) => cmd_profile(&c.run_config()?),
        Command::Ask(a) => cmd_ask(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

fn print_counts(label: &str, samples: &[QASample]) {
    let c = counts(samples);
    println!(
        "{label}: {} documents, {} samples, {} paragraphs, {} sentences",
        c.documents, c.samples, c.paragraphs, c.sentences
    );
}

fn parse_synth_spec(spec: &[String], run: &RunConfig) -> Result<(u64, usize, usize), CliError> {
    let (mut seed, mut docs, mut paras) = (run.seed.unwrap_or(0), None, run.paras());
    for item in spec.iter().flat_map(|s| s.split_whitespace()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("synthetic spec item {item:?} is not key=value")))?;
        let bad = || CliError::Usage(format!("invalid synthetic spec value {item:?}"));
        match key {
            "seed" => seed = value.parse().map_err(|_| bad())?,
            "docs" => docs = Some(value.parse().map_err(|_| bad())?),
            "paras" => paras = value.parse().map_err(|_| bad())?,
            _ => return Err(CliError::Usage(format!("unknown synthetic spec key {key:?}"))),
        }
    }
    let docs = docs.ok_or_else(|| CliError::Usage("synthetic spec needs docs=N".into()))?;
    if docs == 0 || paras == 0 {
        return Err(CliError::Usage("synthetic docs and paras must be at least 1".into()));
    }
    Ok((seed, docs, paras))
}

fn cmd_prep(args: &PrepArgs) -> Result<(), CliError> {
    let run = args.common.run_config()?;
    let out = RunConfig::require(&run.out, "out")?;
    match (&args.synth, &args.squad) {
        (Some(spec), None) => {
            if args.split.is_some() {
                return Err(CliError::Usage("--split applies to --squad only".into()));
            }
            let (seed, docs, paras) = parse_synth_spec(spec, &run)?;
            let samples = synth_corpus(seed, docs, paras);
            save_corpus(&samples, out)?;
            print_counts(&out.display().to_string(), &samples);
        }
        (None, Some(path)) => {
            let loaded = load_squad(path)?;
            println!(
                "{}: {} articles, {} samples, {} excluded (unmappable gold span)",
                path.display(),
                loaded.articles,
                loaded.samples.len(),
                loaded.excluded.len()
            );
            match args.split {
                Some(n) => {
                    let (val, test) = split_dev(&loaded.samples, n)?;
                    std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
                    for (name, part) in [("dev-val.itrc", &val), ("dev-test.itrc", &test)] {
                        let path = out.join(name);
                        save_corpus(part, &path)?;
                        print_counts(&path.display().to_string(), part);
                    }
                }
                None => {
                    save_corpus(&loaded.samples, out)?;
                    print_counts(&out.display().to_string(), &loaded.samples);
                }
            }
        }
        _ => return Err(CliError::Usage("prep needs exactly one of --synth or --squad".into())),
    }
    Ok(())
}

pub fn loss_csv(trace: &[LossReport]) -> String {
    let mut csv = String::from("epoch,nll_tri,nll_model,total\n");
    for (i, r) in trace.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{},{}", i + 1, r.nll_tri, r.nll_model, r.total);
    }
    csv
}

fn cmd_train(run: &RunConfig) -> Result<(), CliError> {
    let config = run.model_config()?;
    let corpus = load_corpus(RunConfig::require(&run.corpus, "corpus")?)?;
    let ckpt_path = RunConfig::require(&run.checkpoint, "checkpoint")?;
    if corpus.iter().all(|s| s.training_target().is_none()) {
        return Err(CliError::Input("corpus has no samples with a golden paragraph".into()));
    }
    let init = init_params(&config, DEFAULT_VOCAB_SIZE)?;
    let (params, trace) = train_with(&init, &config, &corpus, run.epochs(), run.sgd(), |epoch, r| {
        eprintln!("epoch {}: nll_tri {:.4} nll_model {:.4} total {:.4}", epoch + 1, r.nll_tri, r.nll_model, r.total);
    })?;
    checkpoint::save(ckpt_path, &config, &params)?;
    emit(run.out.as_deref(), &loss_csv(&trace))
}

fn load_model(run: &RunConfig) -> Result<Checkpoint, CliError> {
    let stored = checkpoint::load(RunConfig::require(&run.checkpoint, "checkpoint")?)?;
    let config = run.runtime_config(&stored.config)?;
    Ok(Checkpoint { config, params: stored.params })
}

fn route(run: &RunConfig) -> Route {
    if run.no_triage == Some(true) {
        Route::Untriaged
    } else {
        Route::Triaged
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_eval(run: &RunConfig) -> Result<(), CliError> {
    let model = load_model(run)?;
    let data = load_corpus(RunConfig::require(&run.corpus, "corpus")?)?;
    let report = eval::evaluate(&model.params, &model.config, &data, run.paras(), route(run), run.jobs())?;
    emit(run.out.as_deref(), &to_json(&report))
}

fn cmd_bench(run: &RunConfig) -> Result<(), CliError> {
    let model = load_model(run)?;
    let data = load_corpus(RunConfig::require(&run.corpus, "corpus")?)?;
    let report = eval::bench(&model.params, &model.config, &data, run.paras(), route(run))?
        .ok_or_else(|| CliError::Input("cannot benchmark an empty corpus".into()))?;
    emit(run.out.as_deref(), &to_json(&report))
}

pub fn profile_csv(rows: &[(f64, f64)]) -> String {
    let mut csv = String::from("top_pct,f1\n");
    for (pct, f1) in rows {
        let _ = writeln!(csv, "{pct},{f1}");
    }
    csv
}

fn cmd_profile(run: &RunConfig) -> Result<(), CliError> {
    let model = load_model(run)?;
    let data = load_corpus(RunConfig::require(&run.corpus, "corpus")?)?;
    let outs = eval::outcomes(&model.params, &model.config, &data, run.paras(), Route::Triaged, run.jobs())?;
    emit(run.out.as_deref(), &profile_csv(&eval::profile(&outs, &run.buckets())?))
}

pub fn sweep_csv(rows: &[(usize, f64)]) -> String {
    let mut csv = String::from("T,triage_f1\n");
    for (t, f1) in rows {
        let _ = writeln!(csv, "{t},{f1}");
    }
    csv
}

fn cmd_sweep(run: &RunConfig) -> Result<(), CliError> {
    let base = RunConfig { triage_layers: None, ..run.clone() }.model_config()?;
    let depths = run.triage_layers.clone().unwrap_or_else(|| vec![base.triage_layer]);
    let train_set = load_corpus(RunConfig::require(&run.corpus, "corpus")?)?;
    let held_out = load_corpus(RunConfig::require(&run.eval_corpus, "eval-corpus")?)?;
    let rows = eval::t_sweep(&train_set, &held_out, &base, &depths, run.epochs(), run.sgd(), run.paras(), run.jobs())?;
    emit(run.out.as_deref(), &sweep_csv(&rows))
}

/// Splits plain text into paragraphs at blank lines.
pub fn read_document(text: &str) -> Vec<TokenizedText> {
    let mut paragraphs = Vec::new();
    let mut current = String::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                paragraphs.push(tokenize(current.trim()).with_paragraph_id(paragraphs.len()));
            }
            current.clear();
        } else {
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
    }
    paragraphs
}

fn cmd_ask(args: &AskArgs) -> Result<(), CliError> {
    let run = args.common.run_config()?;
    let model = load_model(&run)?;
    let text = std::fs::read_to_string(&args.document)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.document.display())))?;
    let document = read_document(&text);
    if document.is_empty() {
        return Err(CliError::Input(format!("{}: document is empty", args.document.display())));
    }
    let question = tokenize(&args.question);
    let answer = answer_document_with(&model.params, &model.config, &question, &document, run.paras(), route(&run))?;
    let stats = answer.answer.stats;
    println!("answer: {}", answer.text);
    println!("origin: {}", answer.answer.origin.as_str());
    println!("confidence: {:.6}", stats.triage_confidence);
    println!(
        "kept: {:.1}% ({} of {} tokens)",
        stats.kept_fraction() * 100.0,
        stats.kept_tokens,
        stats.total_tokens
    );
    Ok(())
}
