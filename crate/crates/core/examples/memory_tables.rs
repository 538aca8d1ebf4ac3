//! Pooled Table writes (first write verbatim, then moving average) and the
//! Update Table's recency order.

use toim::{PooledTable, SlotKey, UpdateTable};

fn main() -> toim::Result<()> {
    let mut pt = PooledTable::new(3, 2, 2)?;
    let slot = SlotKey::new(1, 0);
    pt.update(slot, &[2.0, 2.0], 0.4)?;
    println!("after first write: {:?}", pt.lookup(slot)?.0);
    pt.update(slot, &[0.0, 4.0], 0.4)?;
    println!("after second write (gamma 0.4): {:?}", pt.lookup(slot)?.0);
    println!(
        "{} of {} slots initialized",
        pt.initialized_count(),
        pt.slot_count()
    );

    let mut ut = UpdateTable::new(3)?;
    for key in [
        SlotKey::new(0, 0),
        SlotKey::new(1, 1),
        SlotKey::new(0, 0),
        SlotKey::new(2, 0),
        SlotKey::new(2, 1),
    ] {
        ut.push(key);
        let order: Vec<String> = ut
            .iter()
            .map(|k| format!("({},{})", k.identity, k.camera))
            .collect();
        println!(
            "push ({},{}) -> oldest..newest {}",
            key.identity,
            key.camera,
            order.join(" ")
        );
    }
    Ok(())
}
