use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use itriage::cache::load_corpus;
use itriage::checkpoint;
use itriage::eval::EvalReport;
use tempfile::TempDir;
use triage_core::config::ModelConfig;
use triage_core::params::{init_params, DEFAULT_VOCAB_SIZE};

fn itriage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itriage")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: [&str; 6] = ["--d", "8", "--L", "3", "--T", "1"];

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    /// A small synthetic corpus plus a briefly trained checkpoint.
    fn trained(&self) -> (String, String) {
        let corpus = self.s("corpus.itrc");
        let ckpt = self.s("model.itrc1");
        assert_eq!(code(&itriage(&["prep", "--synth", "seed=5", "docs=3", "paras=3", "--out", &corpus])), 0);
        let mut args = vec!["train", "--corpus", &corpus, "--checkpoint", &ckpt, "--epochs", "2", "--seed", "3"];
        args.extend(SMALL);
        let out = itriage(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (corpus, ckpt)
    }
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&itriage(&["--help"])), 0);
    assert_eq!(code(&itriage(&["train", "--help"])), 0);
    assert_eq!(code(&itriage(&["train", "--bogus"])), 1);
    assert_eq!(code(&itriage(&[])), 1);
    assert_eq!(code(&itriage(&["eval", "--K", "many"])), 1);
}

#[test]
fn prep_synth_writes_cache_and_counts() {
    let ws = Workspace::new();
    let out = itriage(&["prep", "--synth", "seed=1", "docs=4", "--out", &ws.s("c.itrc")]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("4 documents"), "{}", stdout(&out));
    let samples = load_corpus(&ws.path("c.itrc")).unwrap();
    assert_eq!(itriage::cache::counts(&samples).documents, 4);
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=1", "--out", &ws.s("d.itrc")])), 1);
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=1", "docs=1", "colour=2", "--out", &ws.s("d.itrc")])), 1);
}

#[test]
fn prep_squad_split_and_errors() {
    let ws = Workspace::new();
    assert_eq!(code(&itriage(&["prep", "--squad", &ws.s("missing.json"), "--out", &ws.s("x")])), 2);
    let article = |t: &str| {
        serde_json::json!({"title": t, "paragraphs": [
            {"context": "Alpha beta gamma.", "qas": [
                {"id": format!("{t}-q"), "question": "What follows alpha?", "answers": [{"answer_start": 6, "text": "beta"}]}
            ]}
        ]})
    };
    let json = serde_json::json!({"data": [article("a"), article("b"), article("c")]});
    std::fs::write(ws.path("dev.json"), json.to_string()).unwrap();
    let out = itriage(&["prep", "--squad", &ws.s("dev.json"), "--split", "1", "--out", &ws.s("split")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let val = load_corpus(&ws.path("split").join("dev-val.itrc")).unwrap();
    let test = load_corpus(&ws.path("split").join("dev-test.itrc")).unwrap();
    assert_eq!((val.len(), test.len()), (1, 2));
    assert_eq!(code(&itriage(&["prep", "--squad", &ws.s("dev.json"), "--split", "9", "--out", &ws.s("s2")])), 2);
    std::fs::write(ws.path("bad.json"), r#"{"data": [{"paragraphs": [{"qas": []}]}]}"#).unwrap();
    let out = itriage(&["prep", "--squad", &ws.s("bad.json"), "--out", &ws.s("y")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("data[0].paragraphs[0]"));
}

#[test]
fn train_zero_epochs_is_initialization_and_deterministic() {
    let ws = Workspace::new();
    let corpus = ws.s("c.itrc");
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=2", "docs=2", "paras=2", "--out", &corpus])), 0);
    let mut args = vec!["train", "--corpus", &corpus, "--epochs", "0", "--seed", "11"];
    args.extend(SMALL);
    let a = ws.s("a.itrc1");
    let mut run = args.clone();
    run.extend(["--checkpoint", a.as_str()]);
    assert_eq!(code(&itriage(&run)), 0);
    let loaded = checkpoint::load(Path::new(&a)).unwrap();
    let expected = init_params(&loaded.config, DEFAULT_VOCAB_SIZE).unwrap();
    assert_eq!(loaded.params, expected);
    assert_eq!(loaded.config.seed, 11);

    let mut args = vec!["train", "--corpus", &corpus, "--epochs", "2"];
    args.extend(SMALL);
    let (b, c) = (ws.s("b.itrc1"), ws.s("c.itrc1"));
    let mut first = args.clone();
    first.extend(["--checkpoint", b.as_str()]);
    let mut second = args.clone();
    second.extend(["--checkpoint", c.as_str()]);
    let (o1, o2) = (itriage(&first), itriage(&second));
    assert_eq!(std::fs::read(&b).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(o1.stdout, o2.stdout);
    assert!(stdout(&o1).starts_with("epoch,nll_tri,nll_model,total\n1,"));
}

#[test]
fn train_reports_non_finite_loss() {
    let ws = Workspace::new();
    let corpus = ws.s("c.itrc");
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=2", "docs=2", "paras=2", "--out", &corpus])), 0);
    let mut args = vec!["train", "--corpus", &corpus, "--epochs", "3", "--step", "1e12", "--clip", "inf"];
    let ckpt = ws.s("m.itrc1");
    args.extend(["--checkpoint", ckpt.as_str()]);
    args.extend(SMALL);
    let out = itriage(&args);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth-2-"));
}

#[test]
fn eval_disabled_triage_matches_untriaged_run() {
    let ws = Workspace::new();
    let (corpus, ckpt) = ws.trained();
    let run = |extra: &[&str]| {
        let mut args = vec!["eval", "--corpus", corpus.as_str(), "--checkpoint", ckpt.as_str(), "--jobs", "2"];
        args.extend(extra);
        let out = itriage(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<EvalReport>(&out.stdout).unwrap()
    };
    let open = run(&["--t", "inf", "--K", "1000000"]);
    let plain = run(&["--no-triage"]);
    assert_eq!(open.em.to_bits(), plain.em.to_bits());
    assert_eq!(open.f1.to_bits(), plain.f1.to_bits());
    assert_eq!((open.exit_rate, open.pruned_portion), (0.0, 0.0));
    let all_exit = run(&["--t", "0"]);
    assert_eq!(all_exit.exit_rate, 100.0);
    assert!(all_exit.latency_p90.unwrap() <= all_exit.latency_p99.unwrap());
}

#[test]
fn architecture_mismatch_exits_4() {
    let ws = Workspace::new();
    let (corpus, ckpt) = ws.trained();
    let out = itriage(&["eval", "--corpus", &corpus, "--checkpoint", &ckpt, "--d", "16"]);
    assert_eq!(code(&out), 4);
    let out = itriage(&["eval", "--corpus", &corpus, "--checkpoint", &ckpt, "--variant", "conditional"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bench_schema_and_profile_csv() {
    let ws = Workspace::new();
    let (corpus, ckpt) = ws.trained();
    let out = itriage(&["bench", "--corpus", &corpus, "--checkpoint", &ckpt]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["mean", "p90", "p99", "std"]);

    let out = itriage(&["profile", "--corpus", &corpus, "--checkpoint", &ckpt, "--buckets", "50,100"]);
    assert_eq!(code(&out), 0);
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "top_pct,f1");
    assert!(lines[1].starts_with("50,") && lines[2].starts_with("100,"));
    let out = itriage(&["profile", "--corpus", &corpus, "--checkpoint", &ckpt, "--buckets", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_emits_one_row_per_depth() {
    let ws = Workspace::new();
    let corpus = ws.s("c.itrc");
    let held = ws.s("h.itrc");
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=2", "docs=1", "paras=3", "--out", &corpus])), 0);
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=3", "docs=1", "paras=3", "--out", &held])), 0);
    let base = ["sweep", "--corpus", &corpus, "--eval-corpus", &held, "--d", "6", "--L", "4", "--epochs", "1"];
    let mut args = base.to_vec();
    args.extend(["--T", "3,1,2"]);
    let out = itriage(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    let depths: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(csv.lines().next(), Some("T,triage_f1"));
    assert_eq!(depths, ["1", "2", "3"]);
    let mut args = base.to_vec();
    args.extend(["--T", "4"]);
    assert_eq!(code(&itriage(&args)), 1);
}

#[test]
fn ask_reports_origin_and_kept_fraction() {
    let ws = Workspace::new();
    let (_, ckpt) = ws.trained();
    std::fs::write(ws.path("doc.txt"), "Bakoe tumik rasak mitun said nothing.\n\nSaven kolok dupan stayed home.\n").unwrap();
    std::fs::write(ws.path("one.txt"), "Bakoe tumik rasak mitun said nothing.\n").unwrap();
    std::fs::write(ws.path("empty.txt"), "\n  \n").unwrap();
    let ask = |doc: &str, extra: &[&str]| {
        let path = ws.s(doc);
        let mut args = vec!["ask", "--checkpoint", ckpt.as_str(), "--question", "What comes after tumik rasak?", "--document", path.as_str()];
        args.extend(extra);
        itriage(&args)
    };
    let out = ask("doc.txt", &["--t", "0"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("origin: triage"), "{}", stdout(&out));
    let out = ask("one.txt", &["--t", "inf"]);
    assert!(stdout(&out).contains("origin: model"));
    assert!(stdout(&out).contains("kept: 100.0%"), "{}", stdout(&out));
    assert_eq!(ask("doc.txt", &[]).stdout, ask("doc.txt", &[]).stdout);
    assert_eq!(code(&ask("empty.txt", &[])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let ws = Workspace::new();
    let corpus = ws.s("c.itrc");
    assert_eq!(code(&itriage(&["prep", "--synth", "seed=2", "docs=1", "paras=2", "--out", &corpus])), 0);
    std::fs::write(ws.path("run.cfg"), format!("# small\nd = 8\nL = 3\nT = 1\nseed = 4\ncorpus = {corpus}\nepochs = 0\n")).unwrap();
    let ckpt = ws.s("m.itrc1");
    let out = itriage(&["train", "--config", &ws.s("run.cfg"), "--seed", "6", "--checkpoint", &ckpt]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let loaded = checkpoint::load(Path::new(&ckpt)).unwrap();
    let expected = ModelConfig { d: 8, layers: 3, triage_layer: 1, seed: 6, ..ModelConfig::default() };
    assert_eq!(loaded.config, expected);
    std::fs::write(ws.path("bad.cfg"), "depth = 2\n").unwrap();
    assert_eq!(code(&itriage(&["train", "--config", &ws.s("bad.cfg")])), 1);
}
