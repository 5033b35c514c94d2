//! Walks through the three training objectives on a tiny hand-made
//! example: the listwise loss over graded ratings, the symmetric
//! contrastive loss over a batch, and their convex combination.
//!
//!     cargo run --example loss_landscape

use ndarray::{arr1, arr2};
use relrank::losses::{
    infonce_loss, joint_loss, listnet_loss, top_one_p, top_one_q, SimilarityMatrix,
    SimilarityVector,
};

fn main() -> relrank::Result<()> {
    // One caption rated against four audio clips.
    let ratings = [100.0, 70.0, 30.0, 0.0];
    let p = top_one_p(&ratings)?;
    println!("ratings      {ratings:?}");
    println!("top-one P    {p:?}");

    // Model similarities for the same four clips, and the temperature-
    // sharpened distribution the loss compares against P.
    let sims = SimilarityVector::new(arr1(&[0.65, 0.40, 0.10, -0.20]))?;
    let omega = 0.05;
    let q = top_one_q(&sims, omega)?;
    println!("top-one Q    {q:?}");

    let listnet = listnet_loss(&ratings, &sims, omega)?;
    println!("listwise loss {:.6}", listnet.value);
    println!("  d/d sims    {:?}", listnet.grad.to_vec());

    // A 3-pair batch: diagonal entries are the matching pairs.
    let batch = SimilarityMatrix::new(arr2(&[
        [0.70, 0.10, -0.05],
        [0.20, 0.60, 0.15],
        [-0.10, 0.05, 0.55],
    ]))?;
    let tau = 0.07;
    let infonce = infonce_loss(&batch, tau)?;
    println!("\ncontrastive loss {:.6}", infonce.value);

    // The joint objective interpolates between the two.
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let joint = joint_loss(&infonce, &listnet, alpha)?;
        println!("joint(alpha={alpha:.2}) = {:.6}", joint.value);
    }

    // The listwise loss is minimized when Q matches P: scores that
    // reproduce the target ordering with the right spacing drive the loss
    // toward the entropy of P.
    let matched: Vec<f64> = p.iter().map(|&pi| if pi > 0.0 { omega * pi.ln() } else { -1.0 }).collect();
    let ideal = listnet_loss(&ratings, &SimilarityVector::new(arr1(&matched))?, omega)?;
    let entropy: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    println!("\nloss at matching scores {:.6} (entropy of P = {:.6})", ideal.value, entropy);
    Ok(())
}
