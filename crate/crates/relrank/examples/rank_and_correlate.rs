//! Trains one model, saves and reloads its checkpoint, ranks the audio
//! pool for an unseen caption, and correlates learned similarities with
//! the ground-truth ratings.
//!
//!     cargo run --release --example rank_and_correlate

use relrank::dataset::{generate_synthetic, split_captions, PairSet, Subset};
use relrank::metrics::{rank_all_queries, spearman};
use relrank::model::{load_checkpoint, save_checkpoint, train, LossMode, TrainConfig, TrainData};

fn main() -> relrank::Result<()> {
    let data = generate_synthetic(11, 200, 350, 20, 11, 0.8)?;
    let splits = split_captions(data.captions.ids(), 3, 0.6, 0.2)?;

    let config = TrainConfig {
        loss_mode: LossMode::Joint,
        alpha: 0.85,
        lr0: 0.001,
        batch_size: 32,
        max_epochs: 40,
        plateau_patience: 3,
        stop_patience: 6,
        embed_dim: 12,
        seed: 4,
        ..TrainConfig::default()
    };
    let td = TrainData {
        audio: &data.audio,
        captions: &data.captions,
        pairs: Some(&data.pairs),
        lists: Some(&data.lists),
        split: &splits,
    };
    let (enc, report) = train(&td, &config)?;
    println!("trained {} epochs, best {}, final lr {:.0e}", report.val_loss.len(), report.best_epoch, report.final_lr);

    // Checkpoints round-trip exactly.
    let file = tempfile::NamedTempFile::new().expect("temp file");
    save_checkpoint(file.path(), &enc, &config)?;
    let (enc, _) = load_checkpoint(file.path())?;

    // Rank the whole pool for the first evaluation caption.
    let mut eval_pairs = PairSet::new();
    for (c, a) in data.pairs.iter() {
        if splits.subset_of(c) == Some(Subset::Evaluation) {
            eval_pairs.insert(c.to_string(), a.to_string())?;
        }
    }
    let lists = rank_all_queries(&enc, &data.audio, &data.captions, &eval_pairs)?;
    let list = &lists[0];
    let positive = eval_pairs.positive_of(&list.query_id).unwrap();
    println!("\ntop 10 of {} clips for {}:", list.items.len(), list.query_id);
    for (rank, audio_id) in list.items.iter().take(10).enumerate() {
        let tag = if audio_id == positive { "  <- positive" } else { "" };
        println!("  {:>2}. {audio_id}{tag}", rank + 1);
    }
    let found = list.items.iter().position(|a| a == positive).unwrap() + 1;
    println!("positive ranked {found} of {}", list.items.len());

    // How well do learned similarities track the ground-truth ratings?
    let mut ratings = Vec::new();
    let mut sims = Vec::new();
    for list in &data.lists {
        if splits.subset_of(&list.caption_id) != Some(Subset::Evaluation) {
            continue;
        }
        let cf = data.captions.get(&list.caption_id).unwrap();
        for (audio_id, rating) in &list.items {
            ratings.push(*rating);
            sims.push(enc.score_pair(data.audio.get(audio_id).unwrap(), cf)?);
        }
    }
    let rho = spearman(&sims, &ratings)?;
    println!(
        "\nSpearman rho between similarities and ratings: {:.3} (p = {:.2e}, n = {})",
        rho.coefficient, rho.p_value, rho.n
    );
    Ok(())
}
