//! Builds an analysis table relating clip and caption properties to
//! human and machine relevance ratings, then prints the correlation
//! table with significance markers.
//!
//!     cargo run --example analyze_ratings

use std::collections::HashSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relrank::analysis::{
    correlation_table, disagreement, e_class, e_time, text_counts, tokenize, AnalysisTable,
    FrequencyList, ProbabilityMatrix,
};

fn main() -> relrank::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 40;
    let pair_ids: Vec<String> = (0..n).map(|i| format!("p{i:03}")).collect();

    // Human ratings, and machine ratings that track them imperfectly.
    let hr: Vec<f64> = (0..n).map(|_| rng.gen_range(20.0..95.0)).collect();
    let mr: Vec<f64> = hr.iter().map(|h| 0.8 * h + rng.gen_range(-12.0..12.0)).collect();

    // Per-clip sound-event probability matrices: noisier clips (more
    // active classes) tend to get lower human ratings here.
    let mut e_class_col = Vec::with_capacity(n);
    let mut e_time_col = Vec::with_capacity(n);
    for &h in &hr {
        let spread = (100.0 - h) / 100.0; // low rating -> flatter classes
        let values = Array2::from_shape_fn((6, 5), |(_, c)| {
            let base = if c == 0 { 0.9 } else { 0.9 * spread };
            (base + rng.gen_range(-0.05..0.05)).clamp(0.01, 1.0)
        });
        let m = ProbabilityMatrix::new("clip".to_string(), values)?;
        e_class_col.push(e_class(&m)?);
        e_time_col.push(e_time(&m)?);
    }

    // Caption word counts against a frequent-word list and a content
    // lexicon; longer captions loosely follow higher ratings.
    let freq = FrequencyList::new(
        ["the", "a", "of", "and", "dog", "rain", "car"].map(String::from).to_vec(),
        Some(500),
    )?;
    let content: HashSet<String> =
        ["dog", "barks", "rain", "falls", "car", "engine", "river", "wind"].map(String::from).into();
    let mut words = Vec::with_capacity(n);
    let mut c_words = Vec::with_capacity(n);
    for (i, &h) in hr.iter().enumerate() {
        let caption = match (i + (h as usize / 30)) % 3 {
            0 => "a dog barks",
            1 => "rain falls and wind moves the river",
            _ => "the car engine hums while rain falls on the road",
        };
        let counts = text_counts(&tokenize(caption), &freq, &content);
        words.push(counts.words as f64);
        c_words.push(counts.c_words as f64);
    }

    let mut table = AnalysisTable::new(pair_ids)?;
    table.add_column("HR", hr.clone())?;
    table.add_column("MR", mr.clone())?;
    table.add_column("D(H,M)", disagreement(&hr, &mr)?)?;
    table.add_column("e-class", e_class_col)?;
    table.add_column("e-time", e_time_col)?;
    table.add_column("# words", words)?;
    table.add_column("# C-words", c_words)?;

    let result = correlation_table(
        &table,
        &["HR", "MR", "D(H,M)"],
        &["e-class", "e-time", "# words", "# C-words"],
    )?;

    println!("{:<12} {:>12} {:>12} {:>12}", "feature", "HR", "MR", "D(H,M)");
    for feature in &result.features {
        print!("{feature:<12}");
        for target in &result.targets {
            let cell = result.cell(feature, target).unwrap();
            print!(" {:>12}", format!("{:.3};{}", cell.r, cell.significance.marker()));
        }
        println!();
    }
    println!("\n(** p < 0.01, * p < 0.05)");
    Ok(())
}
