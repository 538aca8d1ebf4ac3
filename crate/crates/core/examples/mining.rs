//! Mines a hard positive and hard negatives for one anchor from a small
//! Pooled Table, with and without the Update Table restriction.

use toim::mining::{select_negative_pt, select_negative_ut, select_positive};
use toim::{PooledTable, SlotKey, UpdateTable};

fn main() -> toim::Result<()> {
    let mut pt = PooledTable::new(3, 2, 2)?;
    let slots = [
        (SlotKey::new(0, 0), [0.1, 0.0]),
        (SlotKey::new(0, 1), [2.0, 1.0]),
        (SlotKey::new(1, 0), [0.5, 0.5]),
        (SlotKey::new(1, 1), [3.0, 0.0]),
        (SlotKey::new(2, 0), [-1.0, -1.0]),
    ];
    for (key, f) in &slots {
        pt.set(*key, f)?;
    }
    let mut ut = UpdateTable::new(2)?;
    ut.push(SlotKey::new(1, 1));
    ut.push(SlotKey::new(2, 0));

    let anchor = [0.0, 0.0];
    let pos = select_positive(&anchor, 0, &pt)?;
    println!("hardest positive: {:?} at {:.3}", pos.key, pos.distance);
    let neg_pt = select_negative_pt(&anchor, 0, &pt)?;
    println!(
        "nearest negative over the pooled table: {:?} at {:.3}",
        neg_pt.key, neg_pt.distance
    );
    let neg_ut = select_negative_ut(&anchor, 0, &ut, &pt)?;
    println!(
        "nearest negative among recent slots: {:?} at {:.3} (fallback: {})",
        neg_ut.pick.key, neg_ut.pick.distance, neg_ut.fell_back
    );
    Ok(())
}
