//! Drives the `hotflip` binary through every subcommand on a tiny
//! synthetic data set.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn hotflip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotflip")).args(args).env_remove("HOTFLIP_DATA_DIR").output().unwrap()
}

pub fn ok(args: &[&str]) -> Output {
    let out = hotflip(args);
    assert!(out.status.success(), "hotflip {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

pub const CHAR_MODEL: &[&str] = &[
    "--max-words", "12", "--max-chars", "10", "--char-dim", "8", "--kernel-width", "3", "--kernels", "16", "--hidden", "16",
];

/// One subcommand run: its arguments, the files it writes (the run config
/// last) and its stdout.
pub struct Step {
    pub name: &'static str,
    pub args: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn with_run(out: PathBuf, extra: &[&str]) -> Vec<PathBuf> {
    let mut files = vec![out.clone()];
    for suffix in extra.iter().chain(&[".run.json"]) {
        let mut name = out.as_os_str().to_owned();
        name.push(suffix);
        files.push(PathBuf::from(name));
    }
    files
}

/// Every subcommand, in dependency order.
pub fn steps(dir: &Path) -> Vec<Step> {
    let d = |f: &str| dir.join(f);
    let args = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>();
    let char_model: Vec<String> = args(CHAR_MODEL);
    let train_char = |out: &Path, epochs: &str, extra: &[&str]| {
        let mut a = args(&["--data", &s(&d("news_train.csv")), "--epochs", epochs, "--batch-size", "16", "--lr", "0.5", "--seed", "5"]);
        a.extend(char_model.iter().cloned());
        a.extend(args(extra));
        a.extend(args(&["--out", &s(out)]));
        a
    };
    let mut train = vec!["train".to_string()];
    train.extend(train_char(&d("char.ckpt"), "2", &[]));
    let mut advtrain = vec!["advtrain".to_string()];
    advtrain.extend(train_char(&d("adv.ckpt"), "1", &["--method", "hotflip-white", "--init", &s(&d("char.ckpt"))]));
    let test = s(&d("news_test.csv"));
    vec![
        Step {
            name: "synth",
            args: args(&[
                "synth", "--out-dir", &s(dir), "--news-train", "300", "--news-test", "60", "--sst-train", "300", "--sst-test", "60",
                "--dim", "16", "--seed", "3",
            ]),
            outputs: ["news_train.csv", "news_test.csv", "sst_train.tsv", "sst_test.tsv", "embeddings.txt", "pos.tsv", "synth.run.json"]
                .iter()
                .map(|f| d(f))
                .collect(),
        },
        Step { name: "train", args: train, outputs: with_run(d("char.ckpt"), &[".metrics.csv"]) },
        Step {
            name: "train-word",
            args: args(&[
                "train", "--arch", "word", "--data", &s(&d("sst_train.tsv")), "--embeddings", &s(&d("embeddings.txt")), "--word-dim", "16",
                "--widths", "2,3", "--word-kernels", "8", "--epochs", "2", "--batch-size", "16", "--seed", "5", "--out",
                &s(&d("word.ckpt")),
            ]),
            outputs: with_run(d("word.ckpt"), &[".metrics.csv"]),
        },
        Step { name: "advtrain", args: advtrain, outputs: with_run(d("adv.ckpt"), &[".metrics.csv"]) },
        Step {
            name: "attack",
            args: args(&["attack", "--model", &s(&d("char.ckpt")), "--data", &test, "--beam", "3", "--limit", "20", "--out", &s(&d("attack.csv"))]),
            outputs: with_run(d("attack.csv"), &[".summary.json"]),
        },
        Step {
            name: "attack-keystar",
            args: args(&[
                "attack", "--model", &s(&d("char.ckpt")), "--data", &test, "--method", "keystar", "--seed", "7", "--limit", "20", "--out",
                &s(&d("keystar.csv")),
            ]),
            outputs: with_run(d("keystar.csv"), &[".summary.json"]),
        },
        Step {
            name: "report",
            args: args(&[
                "report", "--model", &format!("base={}", s(&d("char.ckpt"))), "--model", &format!("adv={}", s(&d("adv.ckpt"))), "--data",
                &test, "--beam", "2", "--limit", "15", "--out", &s(&d("report.csv")),
            ]),
            outputs: with_run(d("report.csv"), &[]),
        },
        Step {
            name: "curve",
            args: args(&[
                "curve", "--model", &s(&d("char.ckpt")), "--data", &test, "--taus", "0.5,0.7,0.9", "--mode", "rethreshold", "--beam", "2",
                "--limit", "15", "--out", &s(&d("curve.csv")),
            ]),
            outputs: with_run(d("curve.csv"), &[]),
        },
        Step {
            name: "wordattack",
            args: args(&[
                "wordattack", "--model", &s(&d("word.ckpt")), "--data", &s(&d("sst_test.tsv")), "--embeddings", &s(&d("embeddings.txt")),
                "--lexicon", &s(&d("pos.tsv")), "--limit", "40", "--out", &s(&d("words.csv")),
            ]),
            outputs: with_run(d("words.csv"), &[".summary.json"]),
        },
        Step {
            name: "neighbors",
            args: args(&["neighbors", "--model", &s(&d("char.ckpt")), "--word", "the,of,thw", "--k", "4", "--out", &s(&d("neighbors.csv"))]),
            outputs: with_run(d("neighbors.csv"), &[]),
        },
    ]
}

/// Runs every step, then for each one deletes its outputs, replays its
/// saved run config and compares the regenerated bytes. Returns each
/// step's name with the files that differed.
pub fn replay_all(dir: &Path) -> Vec<(&'static str, Vec<PathBuf>)> {
    let steps = steps(dir);
    let mut first = Vec::new();
    for step in &steps {
        let args: Vec<&str> = step.args.iter().map(String::as_str).collect();
        let out = ok(&args);
        let files: Vec<Vec<u8>> = step.outputs.iter().map(|p| std::fs::read(p).unwrap()).collect();
        first.push((out.stdout, files));
    }
    let mut result = Vec::new();
    for (step, (stdout, files)) in steps.iter().zip(first) {
        let run = step.outputs.last().unwrap().clone();
        let saved = std::fs::read(&run).unwrap();
        for p in &step.outputs {
            std::fs::remove_file(p).unwrap();
        }
        let replay = dir.join("replay.run.json");
        std::fs::write(&replay, &saved).unwrap();
        let out = ok(&["--config", replay.to_str().unwrap()]);
        let mut differs = Vec::new();
        for (p, before) in step.outputs.iter().zip(&files) {
            if std::fs::read(p).ok().as_ref() != Some(before) {
                differs.push(p.clone());
            }
        }
        if out.stdout != stdout {
            differs.push(PathBuf::from("<stdout>"));
        }
        result.push((step.name, differs));
    }
    result
}
