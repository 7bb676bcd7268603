use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const CORPUS: &str = "\
# review_id = r1
# app_id = A
# category = PR
1\tTo\tto\tPART\t_\t_\t_\t_\t_\t_
2\tdo\tdo\tVERB\t_\t_\t_\t_\t_\t_
3\tlist\tlist\tNOUN\t_\t_\t_\t_\t_\t_
4\tfunction\tfunction\tNOUN\t_\t_\t_\t_\t_\t_
5\tis\tbe\tAUX\t_\t_\t_\t_\t_\t_
6\tnot\tnot\tPART\t_\t_\t_\t_\t_\t_
7\tworking\twork\tVERB\t_\t_\t_\t_\t_\t_

# review_id = r2
# app_id = A
# category = PR
1\tmy\tmy\tPRON\t_\t_\t_\t_\t_\t_
2\tto\tto\tPART\t_\t_\t_\t_\t_\t_
3\tdo\tdo\tVERB\t_\t_\t_\t_\t_\t_
4\tlists\tlist\tNOUN\t_\t_\t_\t_\t_\t_
5\tsync\tsync\tVERB\t_\t_\t_\t_\t_\t_

# review_id = r3
# app_id = B
# category = CO
1\tvideo\tvideo\tNOUN\t_\t_\t_\t_\t_\t_
2\tcalls\tcall\tNOUN\t_\t_\t_\t_\t_\t_
3\tdrop\tdrop\tVERB\t_\t_\t_\t_\t_\t_

# review_id = r4
# app_id = B
# category = CO
1\tgreat\tgreat\tADJ\t_\t_\t_\t_\t_\t_
2\tvideo\tvideo\tNOUN\t_\t_\t_\t_\t_\t_
3\tcall\tcall\tNOUN\t_\t_\t_\t_\t_\t_
4\tquality\tquality\tNOUN\t_\t_\t_\t_\t_\t_

";

const FEATURES: &str = "app_id\tfeature_phrase\nA\tto do list\nB\tvideo call\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_revfeat"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("corpus.conllu"), CORPUS).unwrap();
        fs::write(dir.path().join("features.tsv"), FEATURES).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn labeled(&self) -> String {
        ok(&[
            "transfer",
            "--corpus",
            &self.p("corpus.conllu"),
            "--features",
            &self.p("features.tsv"),
            "--out",
            &self.p("gold.conllu"),
        ]);
        self.p("gold.conllu")
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn beta_prints_rounded_ratio() {
    let out = ok(&["beta", "--a-t", "28.29", "--a-small-t", "11.86"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "2.385");
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(run(&["score", "--gold", "x", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn transfer_labels_and_writes_manifest() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    let text = fs::read_to_string(&gold).unwrap();
    assert!(text.contains("1\tTo\tto\tPART\t_\t_\t_\t_\t_\tner=B-feature\n"));
    assert!(text.contains("3\tlist\tlist\tNOUN\t_\t_\t_\t_\t_\tner=I-feature\n"));
    assert!(text.contains("4\tlists\tlist\tNOUN\t_\t_\t_\t_\t_\tner=I-feature\n"));
    assert!(text.contains("2\tvideo\tvideo\tNOUN\t_\t_\t_\t_\t_\tner=B-feature\n"));

    let manifest = read_json(&fx.path("gold.conllu.manifest.json"));
    assert_eq!(manifest["command"], "transfer");
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    assert_eq!(manifest["outputs"][0]["sha256"], digest);
    let input = hex::encode(Sha256::digest(CORPUS.as_bytes()));
    assert_eq!(manifest["inputs"][0]["sha256"], input);
    assert_eq!(manifest["config"]["transfer"]["occurrence"], "first");
}

#[test]
fn transfer_refuses_labeled_input_unless_cleared() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    let args = ["transfer", "--corpus", &gold, "--features", &fx.p("features.tsv"), "--out", &fx.p("again.conllu")];
    assert_eq!(run(&args).status.code(), Some(1));
    let mut cleared = args.to_vec();
    cleared.push("--clear");
    ok(&cleared);
    assert_eq!(fs::read(&gold).unwrap(), fs::read(fx.path("again.conllu")).unwrap());
}

#[test]
fn score_identical_corpora_is_perfect() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    let out = ok(&["score", "--gold", &gold, "--pred", &gold, "--level", "token", "--beta", "2.385"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["counts"]["tp"], 10);
    assert_eq!(report["f_beta"], 1.0);

    ok(&[
        "score", "--gold", &gold, "--pred", &fx.p("corpus.conllu"), "--level", "span", "--out", &fx.p("s.json"),
        "--text", &fx.p("s.txt"),
    ]);
    let report = read_json(&fx.path("s.json"));
    assert_eq!(report["counts"]["fn"], 4);
    assert_eq!(report["recall"], 0.0);
    assert!(fx.path("s.json.manifest.json").exists());
    assert!(fx.path("s.txt").exists());
}

#[test]
fn select_names_missing_embedding() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    ok(&["mock-embed", "--corpus", &gold, "--dim", "16", "--out", &fx.p("emb.jsonl")]);
    let full = fs::read_to_string(fx.path("emb.jsonl")).unwrap();
    let partial: String = full.lines().filter(|l| !l.contains("\"r3\"")).map(|l| format!("{l}\n")).collect();
    fs::write(fx.path("partial.jsonl"), partial).unwrap();

    let out = run(&[
        "select", "--corpus", &gold, "--features", &fx.p("features.tsv"), "--embeddings", &fx.p("partial.jsonl"),
        "--out", &fx.p("plan.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r3"));
    assert!(!fx.path("plan.json").exists());

    ok(&[
        "select", "--corpus", &gold, "--features", &fx.p("features.tsv"), "--embeddings", &fx.p("emb.jsonl"),
        "--out", &fx.p("plan.json"), "--audit", &fx.p("audit.tsv"),
    ]);
    let plan = read_json(&fx.path("plan.json"));
    assert!(plan.is_object());
    let audit = fs::read_to_string(fx.path("audit.tsv")).unwrap();
    assert_eq!(audit.lines().count(), 5);
}

#[test]
fn split_is_seeded() {
    let fx = Fixture::new();
    let corpus = fx.p("corpus.conllu");
    ok(&["split", "--corpus", &corpus, "--k", "2", "--out", &fx.p("a.json")]);
    ok(&["split", "--corpus", &corpus, "--k", "2", "--seed", "42", "--out", &fx.p("b.json")]);
    assert_eq!(fs::read(fx.path("a.json")).unwrap(), fs::read(fx.path("b.json")).unwrap());
    let plan = read_json(&fx.path("a.json"));
    assert_eq!(plan["seed"], 42);
    assert_eq!(plan["folds"].as_array().unwrap().len(), 2);

    ok(&["split", "--corpus", &corpus, "--mode", "out-of-domain", "--out", &fx.p("ood.json")]);
    let names: Vec<String> = read_json(&fx.path("ood.json"))["folds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["CO", "PR"]);
}

#[test]
fn fold_pipeline_select_and_score() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    ok(&["split", "--corpus", &gold, "--mode", "out-of-domain", "--out", &fx.p("folds.json")]);
    ok(&["mock-embed", "--corpus", &gold, "--out", &fx.p("emb.jsonl")]);
    ok(&[
        "select", "--corpus", &gold, "--features", &fx.p("features.tsv"), "--embeddings", &fx.p("emb.jsonl"),
        "--folds", &fx.p("folds.json"), "--fold", "CO", "--out", &fx.p("plan.json"),
    ]);
    let plan = fs::read_to_string(fx.path("plan.json")).unwrap();
    assert!(plan.contains("r1") && !plan.contains("r3"));

    ok(&[
        "score", "--gold", &gold, "--pred", &gold, "--folds", &fx.p("folds.json"), "--level", "span", "--out",
        &fx.p("cv.json"),
    ]);
    let cv = read_json(&fx.path("cv.json"));
    assert_eq!(cv["summary"]["folds"], 2);
    assert_eq!(cv["summary"]["macro"]["f1"], 1.0);
}

#[test]
fn validate_rejects_orphan_inside() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    let out = ok(&["validate", "--corpus", &gold, "--features", &fx.p("features.tsv")]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));

    let broken = CORPUS.replacen("1\tmy\tmy\tPRON\t_\t_\t_\t_\t_\t_", "1\tmy\tmy\tPRON\t_\t_\t_\t_\t_\tner=I-feature", 1);
    fs::write(fx.path("broken.conllu"), broken).unwrap();
    let out = run(&["validate", "--corpus", &fx.p("broken.conllu")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r2"));

    fs::write(fx.path("nometa.conllu"), CORPUS.replacen("# category = PR\n", "", 1)).unwrap();
    assert_eq!(run(&["validate", "--corpus", &fx.p("nometa.conllu")]).status.code(), Some(1));
}

#[test]
fn stats_table() {
    let fx = Fixture::new();
    let gold = fx.labeled();
    ok(&["stats", "--corpus", &gold, "--features", &fx.p("features.tsv"), "--out", &fx.p("t.tsv"), "--json", &fx.p("t.json")]);
    let tsv = fs::read_to_string(fx.path("t.tsv")).unwrap();
    assert!(tsv.starts_with("metric\tCO\tPR\tTotal\n"));
    assert!(tsv.contains("reviews\t2\t2\t4\n"));
    assert!(tsv.contains("tokens\t7\t12\t19\n"));
    assert!(tsv.contains("B-feature\t2\t2\t4\n"));
    assert_eq!(read_json(&fx.path("t.json"))["total"]["i_feature"], 6);
}

#[test]
fn humaneval_filters_and_votes() {
    let fx = Fixture::new();
    let mut tsv = String::from("task_id\tannotator_id\treview_id\tfeature_phrase\tanswer\tis_control\tcontrol_correct\n");
    // five reliable annotators, one who fails the controls
    for a in 0..6 {
        let reliable = a < 5;
        for c in 0..5 {
            let correct = reliable || c < 2;
            tsv.push_str(&format!("t1\tu{a}\tctl{c}\tx\tyes\ttrue\t{correct}\n"));
        }
        let answer = if reliable && a < 3 { "yes" } else { "no" };
        tsv.push_str(&format!("t1\tu{a}\tr1\tto do list\t{answer}\tfalse\tfalse\n"));
        tsv.push_str(&format!("t1\tu{a}\tr3\tvideo call\tyes\tfalse\tfalse\n"));
    }
    fs::write(fx.path("records.tsv"), tsv).unwrap();
    ok(&[
        "humaneval", "--records", &fx.p("records.tsv"), "--corpus", &fx.p("corpus.conllu"), "--out", &fx.p("he.json"),
        "--text", &fx.p("he.txt"),
    ]);
    let he = read_json(&fx.path("he.json"));
    assert_eq!(he["rejected"].as_array().unwrap().len(), 1);
    assert_eq!(he["summary"]["total_reviews"], 2);
    assert_eq!(he["summary"]["weighted_total"]["yes"], 100.0);

    let out = run(&[
        "humaneval", "--records", &fx.p("records.tsv"), "--corpus", &fx.p("corpus.conllu"), "--min-annotators", "7",
        "--out", &fx.p("none.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
