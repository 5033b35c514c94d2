//! Generates a synthetic audio-text relevance corpus and writes it to disk
//! in the toolkit's CSV formats.
//!
//!     cargo run --example generate_data -- /tmp/relrank-demo

use relrank::dataset::{
    generate_synthetic, split_captions, write_features, write_pairs, write_ratings, write_splits,
    Subset,
};

fn main() -> relrank::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "/tmp/relrank-demo".to_string());
    let out = std::path::PathBuf::from(out);
    std::fs::create_dir_all(&out).expect("create output directory");

    // 120 captions, each paired with one of 200 audio clips and rated
    // against a list of 9 clips (its positive plus 8 distractors).
    let data = generate_synthetic(42, 120, 200, 16, 9, 0.6)?;
    let splits = split_captions(data.captions.ids(), 42, 0.6, 0.2)?;

    write_features(&out.join("audio_features.csv"), &data.audio)?;
    write_features(&out.join("caption_features.csv"), &data.captions)?;
    write_ratings(&out.join("ratings.csv"), &data.lists)?;
    write_pairs(&out.join("pairs.csv"), &data.pairs)?;
    write_splits(&out.join("splits.csv"), &splits)?;

    let rated: usize = data.lists.iter().map(|l| l.items.len()).sum();
    println!("wrote {} audio / {} caption feature rows, {rated} ratings", data.audio.len(), data.captions.len());

    // A peek at one list: the positive is rated 100 minus noise effects,
    // similar distractors score high, random ones low.
    let list = &data.lists[0];
    let positive = data.pairs.positive_of(&list.caption_id).unwrap();
    println!("\nlist for {} (positive {positive}):", list.caption_id);
    let mut items = list.items.clone();
    items.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (audio_id, rating) in &items {
        let tag = if audio_id == positive { "  <- positive" } else { "" };
        println!("  {audio_id}  rating {rating:6.2}{tag}");
    }

    let n_eval = data
        .captions
        .ids()
        .filter(|id| splits.subset_of(id) == Some(Subset::Evaluation))
        .count();
    println!("\nsplits: {n_eval} evaluation captions of {}", data.captions.len());
    println!("files in {}", out.display());
    Ok(())
}
