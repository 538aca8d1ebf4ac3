//! Hard-sample mining against exhaustive scans, ties included.

mod common;

use common::{random_table, rng, scan_negative_pt, scan_negative_ut, scan_positive};
use rand::Rng;
use toim::mining::{
    build_batch, select_negative_pt, select_negative_ut, select_positive, MiningConfig,
    NegativeStrategy,
};
use toim::{Embedding, Error, PooledTable, SlotKey, UpdateTable};

fn as_pair(k: SlotKey) -> (usize, usize) {
    (k.identity, k.camera)
}

#[test]
fn selections_match_exhaustive_scans() {
    let mut rng = rng(31);
    let mut fallbacks = 0;
    for _ in 0..500 {
        let (pt, slots, ut, recent) = random_table(&mut rng);
        assert_eq!(
            ut.to_vec().iter().map(|k| as_pair(*k)).collect::<Vec<_>>(),
            recent
        );
        let dim = pt.dim();
        let anchor: Vec<f64> = (0..dim)
            .map(|_| f64::from(rng.random_range(-2i32..=2)))
            .collect();
        let identity = rng.random_range(0..pt.identities());

        match (
            select_positive(&anchor, identity, &pt),
            scan_positive(&anchor, identity, &slots),
        ) {
            (Ok(p), Some((k, d))) => assert_eq!((as_pair(p.key), p.distance), (k, d)),
            (Err(Error::NoPositive(_)), None) => {}
            (got, want) => panic!("positive: {got:?} vs {want:?}"),
        }
        let pt_scan = scan_negative_pt(&anchor, identity, &slots);
        match (select_negative_pt(&anchor, identity, &pt), pt_scan) {
            (Ok(p), Some((k, d))) => assert_eq!((as_pair(p.key), p.distance), (k, d)),
            (Err(Error::NoNegative(_)), None) => {}
            (got, want) => panic!("pt negative: {got:?} vs {want:?}"),
        }
        let ut_scan = scan_negative_ut(&anchor, identity, &recent, &slots);
        match (
            select_negative_ut(&anchor, identity, &ut, &pt),
            ut_scan,
            pt_scan,
        ) {
            (Ok(p), Some((k, d)), _) => {
                assert!(!p.fell_back);
                assert_eq!((as_pair(p.pick.key), p.pick.distance), (k, d));
            }
            (Ok(p), None, Some((k, d))) => {
                assert!(p.fell_back);
                fallbacks += 1;
                assert_eq!((as_pair(p.pick.key), p.pick.distance), (k, d));
            }
            (Err(Error::NoNegative(_)), None, None) => {}
            (got, want, fallback) => panic!("ut negative: {got:?} vs {want:?} / {fallback:?}"),
        }
    }
    assert!(fallbacks > 0, "fallback path never exercised");
}

#[test]
fn batch_of_singletons_is_mined() {
    // One sample per identity: every anchor finds its positive in the table.
    let mut pt = PooledTable::new(15, 2, 2).unwrap();
    let mut ut = UpdateTable::new(20).unwrap();
    let samples: Vec<(Embedding, SlotKey)> = (0..15)
        .map(|i| {
            let f = vec![i as f64, 0.0];
            pt.set(SlotKey::new(i, 1), &[i as f64, 1.0]).unwrap();
            ut.push(SlotKey::new(i, 1));
            (Embedding::new(f).unwrap(), SlotKey::new(i, 0))
        })
        .collect();
    for strategy in [NegativeStrategy::UpdateTable, NegativeStrategy::PooledTable] {
        let cfg = MiningConfig {
            negative_strategy: strategy,
            ..MiningConfig::default()
        };
        let batch = build_batch(&samples, &pt, &ut, &cfg).unwrap();
        assert_eq!(batch.records.len(), 15);
        for r in &batch.records {
            assert_eq!(r.positive_key.identity, r.anchor_key.identity);
            assert_ne!(r.negative_key.identity, r.anchor_key.identity);
        }
    }
}
