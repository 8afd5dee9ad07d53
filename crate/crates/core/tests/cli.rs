use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use narrative_core::fixture;
use narrative_core::gsdmm;
use tempfile::TempDir;

fn narrate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narrate"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty(), "stdout should stay clean");
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture_dir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fixture::write_fixture(dir.path()).unwrap();
    dir
}

fn read(path: PathBuf) -> String {
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_prices(path: &Path, start: &str, levels: &[f64]) {
    let start = chrono::NaiveDate::parse_from_str(start, "%Y-%m-%d").unwrap();
    let mut text = String::from("date,close\n");
    for (i, l) in levels.iter().enumerate() {
        text.push_str(&format!(
            "{},{}\n",
            start + chrono::Duration::days(i as i64),
            l.exp()
        ));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn bundled_fixture_matches_generator() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    assert_eq!(read(dir.join("posts.csv")), fixture::posts_csv());
    assert_eq!(read(dir.join("prices.csv")), fixture::price_csv());
    assert_eq!(read(dir.join("pipeline.conf")), fixture::pipeline_conf());
}

#[test]
fn full_run_finds_planted_structure_and_is_repeatable() {
    let dir = fixture_dir();
    let out = narrate(
        dir.path(),
        &["run", "--config", "pipeline.conf", "--out-dir", "a"],
    );
    ok(&out);
    let out = narrate(
        dir.path(),
        &["run", "--config", "pipeline.conf", "--out-dir", "b"],
    );
    ok(&out);

    for name in [
        "breaks.csv",
        "windows.csv",
        "stopwords.txt",
        "corpus.jsonl",
        "model.json",
        "labels.csv",
        "sentiment.csv",
        "joined.csv",
        "summary.json",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name} differs between runs"
        );
    }

    let breaks = read(dir.path().join("a/breaks.csv"));
    let dates: Vec<&str> = breaks.lines().skip(1).map(|l| &l[..10]).collect();
    assert_eq!(dates, ["2021-03-12", "2021-05-21"]);

    let model: gsdmm::ModelExport =
        serde_json::from_str(&read(dir.path().join("a/model.json"))).unwrap();
    assert_eq!(model.clusters.len(), 4);
    assert_eq!(model.num_docs, 490);
}

#[test]
fn stages_can_run_one_at_a_time() {
    let dir = fixture_dir();
    for stage in ["stopwords", "preprocess", "cluster", "sentiment", "series"] {
        ok(&narrate(
            dir.path(),
            &[stage, "--config", "pipeline.conf", "--out-dir", "out"],
        ));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("out/summary.json"))).unwrap();
    let narratives = summary["narratives"].as_array().unwrap();
    let posts: u64 = narratives
        .iter()
        .map(|n| n["posts"].as_u64().unwrap())
        .sum();
    assert_eq!(posts, 490);
}

#[test]
fn preprocess_needs_stopwords_first() {
    let dir = fixture_dir();
    let out = narrate(dir.path(), &["preprocess", "--config", "pipeline.conf"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("stopwords"));
}

#[test]
fn breaks_on_constant_and_step_prices() {
    let dir = tempfile::tempdir().unwrap();
    write_prices(&dir.path().join("flat.csv"), "2020-01-01", &[3.0; 120]);
    let levels: Vec<f64> = (0..120).map(|i| if i < 60 { 3.0 } else { 3.5 }).collect();
    write_prices(&dir.path().join("step.csv"), "2020-01-01", &levels);

    ok(&narrate(
        dir.path(),
        &["breaks", "--set", "prices=flat.csv", "--out-dir", "flat"],
    ));
    assert_eq!(
        read(dir.path().join("flat/breaks.csv")),
        "break_date,left_mean,right_mean,criterion\n"
    );

    ok(&narrate(
        dir.path(),
        &["breaks", "--set", "prices=step.csv", "--out-dir", "step"],
    ));
    let text = read(dir.path().join("step/breaks.csv"));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("2020-03-01,"), "{}", rows[0]);
    let windows = read(dir.path().join("step/windows.csv"));
    assert_eq!(
        windows.lines().nth(1),
        Some("2020-03-01,2020-02-15,2020-03-16")
    );
}

#[test]
fn missing_price_file_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = narrate(dir.path(), &["breaks", "--set", "prices=nowhere.csv"]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));
}

#[test]
fn stopwords_flag_ubiquitous_term_and_rerun_is_identical() {
    let dir = fixture_dir();
    ok(&narrate(
        dir.path(),
        &["stopwords", "--config", "pipeline.conf", "--out-dir", "a"],
    ));
    ok(&narrate(
        dir.path(),
        &["stopwords", "--config", "pipeline.conf", "--out-dir", "b"],
    ));
    let a = read(dir.path().join("a/stopwords.txt"));
    assert_eq!(a, read(dir.path().join("b/stopwords.txt")));

    let tfidf_section = a.split("# provenance: tfidf").nth(1).unwrap();
    assert!(tfidf_section.lines().any(|l| l == "bitcoin"));
    assert!(a.lines().any(|l| l == "the"));
    assert!(a.lines().any(|l| l == "hodl"));
}

#[test]
fn empty_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("posts.csv"), "id,created_at,text\n").unwrap();
    let out = narrate(dir.path(), &["stopwords", "--set", "posts=posts.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}

/// Posts whose words come from four private vocabularies.
fn disjoint_posts(dir: &Path) -> BTreeMap<String, usize> {
    let synth = fixture::disjoint_vocab_corpus(4, 20, 400, 8, 11);
    let word = |id: u32| {
        let group = ["alpha", "bravo", "charlie", "delta"][id as usize / 20];
        let letter = (b'a' + (id % 20) as u8) as char;
        format!("{group}{letter}{letter}x")
    };
    let mut text = String::from("id,created_at,text\n");
    let mut groups = BTreeMap::new();
    for (i, (doc, &g)) in synth.docs.iter().zip(&synth.groups).enumerate() {
        let words: Vec<String> = doc.iter().map(|&w| word(w)).collect();
        let id = format!("d{i:04}");
        text.push_str(&format!(
            "{id},2021-02-{:02}T12:00:00Z,{}\n",
            1 + i % 28,
            words.join(" ")
        ));
        groups.insert(id, g);
    }
    fs::write(dir.join("posts.csv"), text).unwrap();
    groups
}

fn read_labels(path: PathBuf) -> BTreeMap<String, usize> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| {
            let (id, k) = l.split_once(',').unwrap();
            (id.to_string(), k.parse().unwrap())
        })
        .collect()
}

#[test]
fn cluster_recovers_disjoint_vocabularies() {
    let dir = tempfile::tempdir().unwrap();
    let groups = disjoint_posts(dir.path());
    let args = [
        "--set",
        "posts=posts.csv",
        "--seed",
        "5",
        "--set",
        "k_max=20",
    ];
    for stage in ["stopwords", "preprocess", "cluster"] {
        let mut a = vec![stage];
        a.extend(args);
        ok(&narrate(dir.path(), &a));
    }
    let labels = read_labels(dir.path().join("out/labels.csv"));
    let ids: Vec<&String> = labels.keys().collect();
    let found: Vec<usize> = ids.iter().map(|id| labels[*id]).collect();
    let truth: Vec<usize> = ids.iter().map(|id| groups[*id]).collect();
    let purity = gsdmm::purity(&found, &truth);
    assert!(purity >= 0.9, "purity {purity}");

    let first = read(dir.path().join("out/labels.csv"));
    let mut a = vec!["cluster"];
    a.extend(args);
    ok(&narrate(dir.path(), &a));
    assert_eq!(first, read(dir.path().join("out/labels.csv")));
}

#[test]
fn cli_override_beats_config_file() {
    let dir = fixture_dir();
    for stage in ["stopwords", "preprocess", "cluster"] {
        ok(&narrate(
            dir.path(),
            &[stage, "--config", "pipeline.conf", "--set", "k_max=1"],
        ));
    }
    let labels = read_labels(dir.path().join("out/labels.csv"));
    assert_eq!(labels.len(), 490);
    assert!(labels.values().all(|&k| k == 0));
}

#[test]
fn precomputed_scores_are_validated() {
    let dir = fixture_dir();
    for stage in ["stopwords", "preprocess"] {
        ok(&narrate(dir.path(), &[stage, "--config", "pipeline.conf"]));
    }
    let corpus = read(dir.path().join("out/corpus.jsonl"));
    let ids: Vec<String> = corpus
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["doc_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();

    let mut good = String::from("doc_id,pos,neg,neu\n");
    for id in &ids {
        good.push_str(&format!("{id},0.944,0.01,0.05\n"));
    }
    fs::write(dir.path().join("scores.csv"), &good).unwrap();
    ok(&narrate(
        dir.path(),
        &[
            "sentiment",
            "--config",
            "pipeline.conf",
            "--set",
            "scores=scores.csv",
        ],
    ));
    let scored = read(dir.path().join("out/sentiment.csv"));
    assert_eq!(scored.lines().count(), ids.len() + 1);
    assert!(scored.lines().nth(1).unwrap().ends_with(",1.0,POS"));

    let bad = good.replacen("0.944,0.01,0.05", "0.5,0.5,0.5", 3);
    fs::write(dir.path().join("bad.csv"), bad).unwrap();
    let out = narrate(
        dir.path(),
        &[
            "sentiment",
            "--config",
            "pipeline.conf",
            "--set",
            "scores=bad.csv",
        ],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bad.csv:2:"), "{}", stderr(&out));
}

#[test]
fn series_without_price_overlap_omits_correlation() {
    let dir = fixture_dir();
    write_prices(&dir.path().join("later.csv"), "2030-01-01", &[1.0; 60]);
    for stage in ["stopwords", "preprocess", "cluster", "sentiment"] {
        ok(&narrate(dir.path(), &[stage, "--config", "pipeline.conf"]));
    }
    let out = narrate(
        dir.path(),
        &[
            "series",
            "--config",
            "pipeline.conf",
            "--set",
            "prices=later.csv",
        ],
    );
    ok(&out);
    assert!(stderr(&out).contains("correlation omitted"));
    let summary = read(dir.path().join("out/summary.json"));
    assert!(!summary.contains("\"correlation\":"));
}

#[test]
fn bad_config_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.conf"), "seed = 3\nalpha = -1\n").unwrap();
    let out = narrate(dir.path(), &["breaks", "--config", "p.conf"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));
}
