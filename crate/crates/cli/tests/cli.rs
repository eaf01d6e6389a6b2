use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--d-model=8",
    "--n-layers=1",
    "--n-heads=2",
    "--d-ff=16",
    "--d-gcn=6",
    "--n-gcn-layers=2",
    "--d-label=4",
];

fn rabsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rabsa"))
        .args(args)
        .env_remove("RABSA_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rabsa(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn augment(out: &Path, extra: &[&str]) {
    let o = path(out);
    let mut args = vec!["augment", "--toy", "--out", &o];
    args.extend_from_slice(extra);
    ok(&args);
}

fn train(out: &Path, synthetic: &Path, regime: &str) {
    let (o, s) = (path(out), path(synthetic));
    let mut args = vec![
        "train",
        "--toy",
        "--out",
        &o,
        "--synthetic",
        &s,
        "--regime",
        regime,
        "--max-epochs",
        "2",
        "--seed",
        "3",
    ];
    args.extend_from_slice(SMALL);
    ok(&args);
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn assert_same_tree(a: &Path, b: &Path) {
    let fa = files(a);
    let fb = files(b);
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a).unwrap(), y.strip_prefix(b).unwrap());
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{} differs",
            x.display()
        );
    }
}

#[test]
fn augment_writes_every_artifact() {
    let t = TempDir::new().unwrap();
    augment(t.path(), &[]);
    for name in [
        "sentiment_mod.jsonl",
        "sentiment_mod.conllu",
        "background.jsonl",
        "background.conllu",
        "aspect_addition.jsonl",
        "aspect_addition.conllu",
        "needs_reparse.tsv",
        "augment_summary.json",
        "run.txt",
    ] {
        assert!(t.path().join(name).is_file(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("augment_summary.json")).unwrap())
            .unwrap();
    assert!(summary["sentiment_mod"]["emitted"].as_u64().unwrap() > 0);
}

#[test]
fn unreachable_threshold_empties_sentiment_modification() {
    let t = TempDir::new().unwrap();
    augment(t.path(), &["--theta-a", "1e9"]);
    assert_eq!(
        fs::read_to_string(t.path().join("sentiment_mod.jsonl")).unwrap(),
        ""
    );
    assert!(!fs::read_to_string(t.path().join("aspect_addition.jsonl"))
        .unwrap()
        .is_empty());
}

#[test]
fn augment_and_train_are_byte_identical_across_runs() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    augment(&a, &[]);
    augment(&b, &[]);
    assert_same_tree(&a, &b);
    let (ta, tb) = (t.path().join("ta"), t.path().join("tb"));
    train(&ta, &a, "a+c");
    train(&tb, &a, "a+c");
    assert_same_tree(&ta, &tb);
    assert!(ta.join("model").join("config.txt").is_file());
    assert!(
        fs::read_to_string(ta.join("train_log.jsonl"))
            .unwrap()
            .lines()
            .count()
            > 0
    );
}

#[test]
fn user_errors_exit_with_two() {
    let t = TempDir::new().unwrap();
    let o = path(t.path());
    assert_eq!(
        rabsa(&["train", "--toy", "--out", &o, "--regime", "a"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        rabsa(&[
            "augment",
            "--toy",
            "--out",
            &o,
            "--lexicons",
            "/nonexistent"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        rabsa(&["augment", "--no-such-flag", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        rabsa(&["eval", "--toy", "--out", &o]).status.code(),
        Some(2)
    );
    assert_eq!(
        rabsa(&["train", "--toy", "--out", &o, "--regime", "z"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_sits_below_flags() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("settings.txt");
    fs::write(&cfg, "toy = true\ntheta-a = 1e9\ntheta-m = 1e9\n").unwrap();
    let out = t.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_rabsa"))
        .args(["augment", "--out", &path(&out), "--theta-m", "0.5"])
        .env("RABSA_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let run = fs::read_to_string(out.join("run.txt")).unwrap();
    assert!(run.contains("theta-a = 1000000000"), "{run}");
    assert!(run.contains("theta-m = 0.5"), "{run}");
    assert_eq!(
        fs::read_to_string(out.join("sentiment_mod.jsonl")).unwrap(),
        ""
    );
    assert!(!fs::read_to_string(out.join("aspect_addition.jsonl"))
        .unwrap()
        .is_empty());

    let explicit = t.path().join("explicit.txt");
    fs::write(&explicit, "toy = true\n").unwrap();
    let out2 = t.path().join("o2");
    let status = Command::new(env!("CARGO_BIN_EXE_rabsa"))
        .args([
            "augment",
            "--config",
            &path(&explicit),
            "--out",
            &path(&out2),
        ])
        .env("RABSA_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(!fs::read_to_string(out2.join("sentiment_mod.jsonl"))
        .unwrap()
        .is_empty());
}

/// The provisional trees of every sample awaiting a parse, in export order,
/// each under `# sent_id = <sample id>`.
fn pending_trees(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for kind in ["sentiment_mod", "background", "aspect_addition"] {
        let text = fs::read_to_string(dir.join(format!("{kind}.conllu"))).unwrap();
        let blocks: Vec<&str> = text
            .split("\n\n")
            .filter(|b| !b.trim().is_empty())
            .collect();
        for line in fs::read_to_string(dir.join(format!("{kind}.jsonl")))
            .unwrap()
            .lines()
        {
            let rec: serde_json::Value = serde_json::from_str(line).unwrap();
            if rec["needs_reparse"] != true {
                continue;
            }
            let body: String = blocks[rec["sentence"].as_u64().unwrap() as usize]
                .lines()
                .filter(|l| !l.starts_with('#'))
                .map(|l| format!("{l}\n"))
                .collect();
            out.push(format!(
                "# sent_id = {}\n{body}\n",
                rec["id"].as_str().unwrap()
            ));
        }
    }
    out
}

fn without_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn import(syn: &Path, parses: &Path, out: &Path) -> Output {
    rabsa(&[
        "import-parses",
        "--synthetic",
        &path(syn),
        "--reparsed",
        &path(parses),
        "--out",
        &path(out),
    ])
}

#[test]
fn exported_sentences_take_imported_parses() {
    let t = TempDir::new().unwrap();
    let syn = t.path().join("syn");
    augment(&syn, &[]);
    let exp = t.path().join("exp");
    ok(&[
        "export-sentences",
        "--synthetic",
        &path(&syn),
        "--out",
        &path(&exp),
    ]);
    let listed = fs::read_to_string(exp.join("sentences.tsv")).unwrap();
    assert_eq!(
        listed,
        fs::read_to_string(syn.join("needs_reparse.tsv")).unwrap()
    );
    let trees = pending_trees(&syn);
    assert_eq!(trees.len(), listed.lines().count());
    assert!(!trees.is_empty());

    // Matched by position once the ids are stripped.
    let parses = t.path().join("positional.conllu");
    fs::write(&parses, without_comments(&trees.concat())).unwrap();
    let imp = t.path().join("imp");
    let o = import(&syn, &parses, &imp);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(imp.join("needs_reparse.tsv")).unwrap(),
        ""
    );
    for kind in ["sentiment_mod", "background", "aspect_addition"] {
        let a = fs::read_to_string(syn.join(format!("{kind}.conllu"))).unwrap();
        let b = fs::read_to_string(imp.join(format!("{kind}.conllu"))).unwrap();
        assert_eq!(without_comments(&a), without_comments(&b));
    }

    // Matched by id in any order.
    let reversed: String = trees.iter().rev().cloned().collect();
    let parses = t.path().join("by_id.conllu");
    fs::write(&parses, reversed).unwrap();
    let imp = t.path().join("imp_id");
    assert!(import(&syn, &parses, &imp).status.success());
    assert_eq!(
        fs::read_to_string(imp.join("needs_reparse.tsv")).unwrap(),
        ""
    );

    // Tokens that disagree are refused.
    let bad = t.path().join("bad.conllu");
    fs::write(&bad, trees.concat().replacen("1\t", "1\tXX", 1)).unwrap();
    assert_eq!(
        import(&syn, &bad, &t.path().join("imp_bad")).status.code(),
        Some(2)
    );
}

#[test]
fn eval_and_dump_after_training() {
    let t = TempDir::new().unwrap();
    let syn = t.path().join("syn");
    augment(&syn, &[]);
    let tr = t.path().join("tr");
    train(&tr, &syn, "e+c");
    let model = path(&tr.join("model"));
    let ev = t.path().join("ev");
    let text = ok(&["eval", "--toy", "--model", &model, "--out", &path(&ev)]);
    assert!(text.contains("overall"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("eval.json")).unwrap()).unwrap();
    let tags = report["per_tag"].as_object().unwrap();
    assert!(!tags.is_empty());
    let table = fs::read_to_string(ev.join("eval.txt")).unwrap();
    for tag in tags.keys() {
        assert!(table.contains(tag.as_str()));
    }

    let d = t.path().join("d");
    ok(&[
        "dump-reprs",
        "--toy",
        "--model",
        &model,
        "--representation",
        "r_s",
        "--out",
        &path(&d),
    ]);
    let tsv = fs::read_to_string(d.join("r_s.tsv")).unwrap();
    let mut lines = tsv.lines();
    let width = lines.next().unwrap().split('\t').count();
    assert!(width > 3);
    assert!(lines.all(|l| l.split('\t').count() == width));
}
