//! End-to-end command coverage beyond the train/eval path: rank,
//! correlate, analyze, the TOML config file, and error reporting.

use std::fs;
use std::path::Path;

use relrank::cli::run;

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn gen_corpus(dir: &Path) {
    run([
        "relrank", "gen", "--out", &s(dir), "--seed", "7", "--captions", "30", "--audio", "50",
        "--dim", "6", "--list-size", "4", "--noise", "0.3",
    ])
    .unwrap();
}

fn train_one(dir: &Path) -> String {
    let models = dir.join("models");
    run([
        "relrank", "train",
        "--audio-features", &s(&dir.join("audio_features.csv")),
        "--caption-features", &s(&dir.join("caption_features.csv")),
        "--ratings", &s(&dir.join("ratings.csv")),
        "--pairs", &s(&dir.join("pairs.csv")),
        "--splits", &s(&dir.join("splits.csv")),
        "--out", &s(&models),
        "--loss", "listnet", "--epochs", "3", "--repeat", "1", "--seed", "5",
        "--embed-dim", "4", "--batch-size", "8",
    ])
    .unwrap();
    s(&models.join("checkpoint_0.json"))
}

#[test]
fn rank_writes_full_rankings_for_evaluation_captions() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path());
    let ckpt = train_one(dir.path());
    let out = dir.path().join("rankings.csv");
    run([
        "relrank", "rank",
        "--audio-features", &s(&dir.path().join("audio_features.csv")),
        "--caption-features", &s(&dir.path().join("caption_features.csv")),
        "--pairs", &s(&dir.path().join("pairs.csv")),
        "--splits", &s(&dir.path().join("splits.csv")),
        "--checkpoint", &ckpt,
        "--out", &s(&out),
    ])
    .unwrap();

    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("caption_id,rank,audio_id"));
    let body: Vec<&str> = lines.collect();
    // Each evaluation caption ranks the whole 50-item audio pool.
    assert_eq!(body.len() % 50, 0);
    assert!(!body.is_empty());
    let first: Vec<&str> = body[0].split(',').collect();
    assert_eq!(first[1], "1");
}

#[test]
fn correlate_reports_spearman_on_the_evaluation_split() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path());
    let ckpt = train_one(dir.path());
    let out = dir.path().join("correlation.txt");
    run([
        "relrank", "correlate",
        "--audio-features", &s(&dir.path().join("audio_features.csv")),
        "--caption-features", &s(&dir.path().join("caption_features.csv")),
        "--ratings", &s(&dir.path().join("ratings.csv")),
        "--splits", &s(&dir.path().join("splits.csv")),
        "--checkpoint", &ckpt,
        "--out", &s(&out),
    ])
    .unwrap();

    let text = fs::read_to_string(&out).unwrap();
    let rho: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("spearman_rho="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((-1.0..=1.0).contains(&rho));
    assert!(text.lines().any(|l| l.starts_with("spearman_p=")));
    assert!(text.lines().any(|l| l.starts_with("n=")));
}

#[test]
fn train_reads_defaults_from_a_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path());
    let config = dir.path().join("relrank.toml");
    fs::write(
        &config,
        "[paths]\n\
         audio_features = \"audio_features.csv\"\n\
         caption_features = \"caption_features.csv\"\n\
         ratings = \"ratings.csv\"\n\
         pairs = \"pairs.csv\"\n\
         splits = \"splits.csv\"\n\
         output_dir = \"from_config\"\n\
         \n\
         [train]\n\
         loss = \"listnet\"\n\
         max_epochs = 2\n\
         batch_size = 8\n\
         embed_dim = 4\n",
    )
    .unwrap();
    run([
        "relrank", "train", "--config", &s(&config), "--repeat", "1", "--seed", "9",
    ])
    .unwrap();
    assert!(dir.path().join("from_config/checkpoint_0.json").exists());
    assert!(dir.path().join("from_config/report_0.json").exists());
}

#[test]
fn analyze_builds_derived_columns_and_marked_cells() {
    let dir = tempfile::tempdir().unwrap();

    // Base table: human ratings, machine ratings, audio-pattern tags.
    let n = 10;
    let mut table = String::from("pair_id,HR,MR,APT\n");
    for i in 0..n {
        let hr = 40.0 + 6.0 * i as f64;
        let mr = 35.0 + 5.5 * i as f64 + if i % 2 == 0 { 3.0 } else { -3.0 };
        let apt = (i % 3) as f64;
        table.push_str(&format!("p{i:02},{hr},{mr},{apt}\n"));
    }
    let table_path = dir.path().join("table.csv");
    fs::write(&table_path, table).unwrap();

    // One probability matrix per clip, increasingly peaked.
    let prob_dir = dir.path().join("probs");
    fs::create_dir(&prob_dir).unwrap();
    let mut captions = String::from("pair_id,audio_id,caption\n");
    for i in 0..n {
        let peak = 0.2 + 0.07 * i as f64;
        let rest = (1.0 - peak) / 3.0;
        let mut rows = String::new();
        for t in 0..4 {
            // Frame weight grows over time at a clip-dependent rate so the
            // temporal entropy also differs between clips.
            let w = 0.9 * ((t + 1) as f64 / 4.0).powf(0.3 * i as f64);
            rows.push_str(&format!("{},{},{},{}\n", peak * w, rest * w, rest * w, rest * w));
        }
        fs::write(prob_dir.join(format!("clip{i:02}.csv")), rows).unwrap();
        let text = match i % 3 {
            0 => "a dog barks near the quiet river",
            1 => "rain rain falls",
            _ => "the quiet dog sleeps near the river on a rainy day",
        };
        captions.push_str(&format!("p{i:02},clip{i:02},{text}\n"));
    }
    let captions_path = dir.path().join("captions.csv");
    fs::write(&captions_path, captions).unwrap();

    let freq_path = dir.path().join("frequent.txt");
    fs::write(&freq_path, "the\na\non\nnear\ndog\nrain\n").unwrap();
    let content_path = dir.path().join("content.txt");
    fs::write(&content_path, "dog\nbarks\nriver\nrain\nfalls\nquiet\nsleeps\nrainy\nday\n").unwrap();

    let out = dir.path().join("correlations.csv");
    run([
        "relrank", "analyze",
        "--table", &s(&table_path),
        "--prob-dir", &s(&prob_dir),
        "--captions", &s(&captions_path),
        "--freq-words", &s(&freq_path),
        "--content-words", &s(&content_path),
        "--freq-cutoff", "6",
        "--out", &s(&out),
    ])
    .unwrap();

    let text = fs::read_to_string(&out).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "feature,HR,MR,D(H,M),APT");
    // Derived feature rows are present, with "r;marker" cells.
    let eclass_row = text.lines().find(|l| l.starts_with("e-class,")).unwrap();
    let cell = eclass_row.split(',').nth(1).unwrap();
    let (r, marker) = cell.split_once(';').unwrap();
    let r: f64 = r.parse().unwrap();
    assert!((-1.0..=1.0).contains(&r));
    assert!(["**", "*", "n.s."].contains(&marker));
    // e-class rises with the flatter early distributions, HR rises with i,
    // so the correlation is strongly negative here.
    assert!(r < -0.9, "e-class vs HR r = {r}");
    for feature in ["e-time", "# words", "# C-words", "# fr-words", "# fr-C-words"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{feature},"))), "{feature} row missing");
    }
}

#[test]
fn missing_inputs_produce_errors_naming_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    gen_corpus(dir.path());
    // ListNet training without a ratings file must fail, and the error
    // should tell the user which flag was missing.
    let err = run([
        "relrank", "train",
        "--audio-features", &s(&dir.path().join("audio_features.csv")),
        "--caption-features", &s(&dir.path().join("caption_features.csv")),
        "--pairs", &s(&dir.path().join("pairs.csv")),
        "--splits", &s(&dir.path().join("splits.csv")),
        "--out", &s(&dir.path().join("models")),
        "--loss", "listnet", "--epochs", "1",
    ])
    .unwrap_err();
    assert!(err.to_string().contains("ratings"), "error was: {err}");

    let err = run([
        "relrank", "train",
        "--audio-features", &s(&dir.path().join("audio_features.csv")),
        "--caption-features", &s(&dir.path().join("caption_features.csv")),
        "--ratings", &s(&dir.path().join("ratings.csv")),
        "--pairs", &s(&dir.path().join("pairs.csv")),
        "--splits", &s(&dir.path().join("splits.csv")),
        "--out", &s(&dir.path().join("models")),
        "--loss", "joint", "--alpha", "1.5", "--epochs", "1",
    ])
    .unwrap_err();
    assert!(err.to_string().contains("alpha"), "error was: {err}");
}
