//! Evaluates the TOIM loss on a hand-built triplet and prints the gradient
//! with respect to the anchor.

use toim::losses::{toim_loss, TripletRecord};
use toim::{Embedding, SlotKey};

fn main() -> toim::Result<()> {
    let record = TripletRecord {
        anchor: Embedding::new(vec![0.0, 0.0])?,
        positive: Embedding::new(vec![3.0, 4.0])?,
        negative: Embedding::new(vec![1.0, 0.0])?,
        anchor_key: SlotKey::new(0, 0),
        positive_key: SlotKey::new(0, 1),
        negative_key: SlotKey::new(1, 0),
    };
    let out = toim_loss(&[record])?;
    // d(a,p) = 5, d(a,n) = 1, so the loss is softplus(4).
    println!("loss     = {:.6}", out.value);
    println!("expected = {:.6}", toim::stable_softplus(4.0));
    println!("d loss / d anchor = {:?}", out.gradients[0]);
    Ok(())
}
