use std::collections::BTreeMap;

use log::{debug, warn};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distance::{l2_normalize, Embedding};
use crate::error::{invalid, Error, Result};
use crate::eval::LabeledSet;
use crate::losses::{
    center_loss, combined_loss, oim_loss_batch, softmax_ce_loss, toim_loss, triplet_loss_batchhard,
    LossOutput,
};
use crate::memory::{PooledTable, SlotKey, UpdateTable};
use crate::mining::{build_triplets, select_anchors, MinedBatch};

use super::{AdaDelta, Checkpoint, ForwardCache, Linear, LossKind, Mlp, TrainConfig};

/// Picks a `p x k` batch: `p` identities without replacement, then `k`
/// distinct samples of each.
pub fn select_pk_batch(keys: &[SlotKey], p: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        by_identity.entry(key.identity).or_default().push(i);
    }
    let eligible: Vec<&Vec<usize>> = by_identity.values().filter(|g| g.len() >= k).collect();
    if eligible.len() < p {
        return Err(Error::BatchConstruction {
            p,
            k,
            reason: format!(
                "only {} of {} identities have at least {k} samples",
                eligible.len(),
                by_identity.len()
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(p * k);
    for g in index::sample(&mut rng, eligible.len(), p) {
        let group = eligible[g];
        out.extend(
            index::sample(&mut rng, group.len(), k)
                .iter()
                .map(|i| group[i]),
        );
    }
    Ok(out)
}

/// Owns every piece of mutable training state: network, optimizers, and the
/// feature tables used by the selected loss.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    loss: LossKind,
    net: Mlp,
    net_opt: AdaDelta,
    head: Option<(Linear, AdaDelta)>,
    pooled: PooledTable,
    update: UpdateTable,
    lut: Option<PooledTable>,
    centers: Option<PooledTable>,
    rng: ChaCha8Rng,
    epochs_completed: usize,
}

struct Forwarded {
    embeddings: Vec<Embedding>,
    caches: Vec<ForwardCache>,
}

impl Trainer {
    /// Fresh model for inputs of `input_dim` and labels in
    /// `0..identities x 0..cameras`.
    pub fn new(
        cfg: TrainConfig,
        loss: LossKind,
        input_dim: usize,
        identities: usize,
        cameras: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normalize = cfg.normalize_embeddings || loss == LossKind::Oim;
        let net = Mlp::init(input_dim, cfg.hidden_dim, cfg.dim, &mut rng)?
            .with_normalized_output(normalize);
        let net_opt = AdaDelta::new(net.param_count(), cfg.lr)?;
        let head = if loss.uses_head() {
            let layer = Linear::init(cfg.dim, identities, &mut rng)?;
            let opt = AdaDelta::new(layer.params().len(), cfg.lr)?;
            Some((layer, opt))
        } else {
            None
        };
        Ok(Self {
            pooled: PooledTable::new(identities, cameras, cfg.dim)?,
            update: UpdateTable::new(cfg.update_table_len)?,
            lut: (loss == LossKind::Oim)
                .then(|| PooledTable::new(identities, 1, cfg.dim))
                .transpose()?,
            centers: (loss == LossKind::Combined)
                .then(|| PooledTable::new(identities, 1, cfg.dim))
                .transpose()?,
            cfg,
            loss,
            net,
            net_opt,
            head,
            rng,
            epochs_completed: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        ckpt.pooled_table.validate()?;
        let head = match (ckpt.head, ckpt.head_optimizer) {
            (Some(h), Some(o)) => Some((h, o)),
            (None, None) => None,
            _ => {
                return Err(Error::Parse(
                    "checkpoint has a head without its optimizer state".into(),
                ))
            }
        };
        Ok(Self {
            cfg: ckpt.config,
            loss: ckpt.loss,
            net: ckpt.net,
            net_opt: ckpt.net_optimizer,
            head,
            pooled: ckpt.pooled_table,
            update: ckpt.update_table,
            lut: ckpt.lut,
            centers: ckpt.centers,
            rng: ckpt.rng,
            epochs_completed: ckpt.epochs_completed,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            loss: self.loss,
            epochs_completed: self.epochs_completed,
            net: self.net.clone(),
            net_optimizer: self.net_opt.clone(),
            head: self.head.as_ref().map(|(h, _)| h.clone()),
            head_optimizer: self.head.as_ref().map(|(_, o)| o.clone()),
            pooled_table: self.pooled.clone(),
            update_table: self.update.clone(),
            lut: self.lut.clone(),
            centers: self.centers.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn pooled_table(&self) -> &PooledTable {
        &self.pooled
    }

    pub fn update_table(&self) -> &UpdateTable {
        &self.update
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    /// Embeds every feature of `set`, keeping its labels.
    pub fn embed_set(&self, set: &LabeledSet) -> Result<LabeledSet> {
        let features = set
            .features
            .iter()
            .map(|x| self.net.embed(x).map(Embedding::into_inner))
            .collect::<Result<Vec<_>>>()?;
        set.with_features(features)
    }

    /// Runs `epochs` epochs and returns the mean batch loss of each.
    pub fn train(&mut self, data: &LabeledSet, epochs: usize) -> Result<Vec<f64>> {
        (0..epochs).map(|_| self.train_epoch(data)).collect()
    }

    /// One pass of `ceil(len / anchors_per_batch)` batches.
    pub fn train_epoch(&mut self, data: &LabeledSet) -> Result<f64> {
        self.check_data(data)?;
        let keys: Vec<SlotKey> = data
            .identities
            .iter()
            .zip(&data.cameras)
            .map(|(&i, &c)| SlotKey::new(i, c))
            .collect();
        let n = self.cfg.anchors_per_batch;
        let batches = data.len().div_ceil(n);
        let mut losses = Vec::with_capacity(batches);
        match self.loss {
            LossKind::Toim | LossKind::Combined => {
                for _ in 0..batches {
                    let seed = self.rng.random::<u64>();
                    let anchors = select_anchors(&keys, n, seed)?;
                    if let Some(l) = self.step_toim(data, &keys, &anchors)? {
                        losses.push(l);
                    }
                }
            }
            LossKind::Triplet => {
                for _ in 0..batches {
                    let seed = self.rng.random::<u64>();
                    let batch =
                        select_pk_batch(&keys, self.cfg.triplet_p, self.cfg.triplet_k, seed)?;
                    losses.push(self.step_triplet(data, &batch)?);
                }
            }
            LossKind::Softmax | LossKind::Oim => {
                let mut order: Vec<usize> = (0..data.len()).collect();
                order.shuffle(&mut self.rng);
                for batch in order.chunks(n) {
                    let l = if self.loss == LossKind::Oim {
                        self.step_oim(data, batch)?
                    } else {
                        self.step_softmax(data, batch)?
                    };
                    losses.push(l);
                }
            }
        }
        self.epochs_completed += 1;
        if losses.is_empty() {
            warn!(
                "epoch {} produced no trainable batch",
                self.epochs_completed
            );
            return Ok(0.0);
        }
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    fn check_data(&self, data: &LabeledSet) -> Result<()> {
        data.validate()?;
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if data.dim() != self.net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.net.input_dim(),
                found: data.dim(),
            });
        }
        if let Some(&id) = data
            .identities
            .iter()
            .find(|&&i| i >= self.pooled.identities())
        {
            return Err(invalid(
                "training set",
                format!(
                    "identity {id} exceeds table size {}",
                    self.pooled.identities()
                ),
            ));
        }
        if let Some(&cam) = data.cameras.iter().find(|&&c| c >= self.pooled.cameras()) {
            return Err(invalid(
                "training set",
                format!("camera {cam} exceeds table size {}", self.pooled.cameras()),
            ));
        }
        Ok(())
    }

    fn forward_batch(&self, data: &LabeledSet, batch: &[usize]) -> Result<Forwarded> {
        let mut embeddings = Vec::with_capacity(batch.len());
        let mut caches = Vec::with_capacity(batch.len());
        for &i in batch {
            let (e, c) = self.net.forward(&data.features[i])?;
            embeddings.push(e);
            caches.push(c);
        }
        Ok(Forwarded { embeddings, caches })
    }

    fn apply_net_gradients(&mut self, fwd: &Forwarded, per_sample: &[Vec<f64>]) -> Result<()> {
        let mut grads = vec![0.0; self.net.param_count()];
        for (cache, g) in fwd.caches.iter().zip(per_sample) {
            self.net.backward_into(cache, g, &mut grads)?;
        }
        self.net_opt.step(self.net.params_mut(), &grads)
    }

    /// Logits for every embedding; returns the CE output expressed as
    /// gradients on the embeddings and applies the head update.
    fn identity_loss(&mut self, embeddings: &[Embedding], labels: &[usize]) -> Result<LossOutput> {
        let (head, opt) = self
            .head
            .as_mut()
            .ok_or_else(|| invalid("loss", "no classifier head"))?;
        let logits = embeddings
            .iter()
            .map(|e| head.forward(e))
            .collect::<Result<Vec<_>>>()?;
        let ce = softmax_ce_loss(&logits, labels)?;
        let mut head_grads = vec![0.0; head.params().len()];
        let emb_grads = embeddings
            .iter()
            .zip(&ce.gradients)
            .map(|(e, g)| head.backward_into(e, g, &mut head_grads))
            .collect::<Result<Vec<_>>>()?;
        opt.step(head.params_mut(), &head_grads)?;
        Ok(LossOutput {
            value: ce.value,
            gradients: emb_grads,
        })
    }

    fn step_toim(
        &mut self,
        data: &LabeledSet,
        keys: &[SlotKey],
        anchors: &[usize],
    ) -> Result<Option<f64>> {
        let fwd = self.forward_batch(data, anchors)?;
        let anchor_keys: Vec<SlotKey> = anchors.iter().map(|&i| keys[i]).collect();
        let pairs: Vec<(Embedding, SlotKey)> = fwd
            .embeddings
            .iter()
            .cloned()
            .zip(anchor_keys.iter().copied())
            .collect();
        let mined = match build_triplets(
            &pairs,
            &self.pooled,
            &self.update,
            self.cfg.negative_strategy,
        ) {
            Ok(m) => Some(m),
            Err(Error::NoTriplets) => None,
            Err(e) => return Err(e),
        };
        if let Some(m) = &mined {
            if m.fallbacks > 0 {
                debug!("{} anchors used pooled-table negatives", m.fallbacks);
            }
        }

        let reported = match self.loss {
            LossKind::Toim => match &mined {
                Some(m) => {
                    let out = toim_loss(&m.records)?;
                    let per_sample = scatter(m, &out, anchors.len(), self.cfg.dim);
                    self.apply_net_gradients(&fwd, &per_sample)?;
                    Some(out.value / m.records.len() as f64)
                }
                None => None,
            },
            LossKind::Combined => {
                let labels: Vec<usize> = anchor_keys.iter().map(|k| k.identity).collect();
                let toim = match &mined {
                    Some(m) => {
                        let out = toim_loss(&m.records)?;
                        LossOutput {
                            value: out.value,
                            gradients: scatter(m, &out, anchors.len(), self.cfg.dim),
                        }
                    }
                    None => LossOutput::zero(anchors.len(), self.cfg.dim),
                };
                let ce = self.identity_loss(&fwd.embeddings, &labels)?;
                let centers = self.centers.as_mut().expect("combined loss keeps centers");
                for (e, k) in fwd.embeddings.iter().zip(&anchor_keys) {
                    if !centers.is_initialized(SlotKey::new(k.identity, 0))? {
                        centers.set(SlotKey::new(k.identity, 0), e)?;
                    }
                }
                let center_vecs = (0..centers.identities())
                    .map(|id| Embedding::new(centers.lookup(SlotKey::new(id, 0))?.0.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                let center = center_loss(&fwd.embeddings, &labels, &center_vecs)?;
                let total = combined_loss(&ce, &toim, &center, self.cfg.beta)?;
                self.apply_net_gradients(&fwd, &total.gradients)?;
                let centers = self.centers.as_mut().expect("combined loss keeps centers");
                for (e, k) in fwd.embeddings.iter().zip(&anchor_keys) {
                    centers.update(SlotKey::new(k.identity, 0), e, self.cfg.gamma)?;
                }
                Some(total.value)
            }
            _ => unreachable!("step_toim only serves table-based losses"),
        };

        for (e, &k) in fwd.embeddings.iter().zip(&anchor_keys) {
            self.pooled.update(k, e, self.cfg.gamma)?;
            self.update.push(k);
        }
        Ok(reported)
    }

    fn step_triplet(&mut self, data: &LabeledSet, batch: &[usize]) -> Result<f64> {
        let fwd = self.forward_batch(data, batch)?;
        let labels: Vec<usize> = batch.iter().map(|&i| data.identities[i]).collect();
        let out = triplet_loss_batchhard(&fwd.embeddings, &labels, self.cfg.margin)?;
        self.apply_net_gradients(&fwd, &out.gradients)?;
        Ok(out.value / batch.len() as f64)
    }

    fn step_softmax(&mut self, data: &LabeledSet, batch: &[usize]) -> Result<f64> {
        let fwd = self.forward_batch(data, batch)?;
        let labels: Vec<usize> = batch.iter().map(|&i| data.identities[i]).collect();
        let ce = self.identity_loss(&fwd.embeddings, &labels)?;
        self.apply_net_gradients(&fwd, &ce.gradients)?;
        Ok(ce.value)
    }

    fn step_oim(&mut self, data: &LabeledSet, batch: &[usize]) -> Result<f64> {
        let fwd = self.forward_batch(data, batch)?;
        let labels: Vec<usize> = batch.iter().map(|&i| data.identities[i]).collect();
        let features: Vec<Vec<f64>> = fwd.embeddings.iter().map(|e| e.to_vec()).collect();
        let lut = self.lut.as_mut().expect("oim keeps a lookup table");
        let out = oim_loss_batch(&features, &labels, lut, None, self.cfg.temperature)?;
        for (f, &id) in features.iter().zip(&labels) {
            let key = SlotKey::new(id, 0);
            lut.update(key, f, self.cfg.gamma)?;
            let mut row = lut.lookup(key)?.0.to_vec();
            l2_normalize(&mut row);
            lut.set(key, &row)?;
        }
        self.apply_net_gradients(&fwd, &out.gradients)?;
        Ok(out.value)
    }
}

/// Per-anchor gradients, zero for anchors that produced no triplet.
fn scatter(mined: &MinedBatch, out: &LossOutput, anchors: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut full = vec![vec![0.0; dim]; anchors];
    for (&a, g) in mined.anchors.iter().zip(&out.gradients) {
        full[a].clone_from(g);
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{gen_dataset, SynthConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            dim: 8,
            hidden_dim: 8,
            anchors_per_batch: 2,
            triplet_p: 2,
            triplet_k: 2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn two_identity_data() -> LabeledSet {
        let cfg = SynthConfig {
            num_identities: 2,
            num_eval_identities: 1,
            num_cameras: 3,
            samples_per_id_per_cam: 2,
            latent_dim: 4,
            observation_dim: 6,
            ..SynthConfig::default()
        };
        gen_dataset(&cfg).unwrap().train
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let data = two_identity_data();
        let mut t = Trainer::new(tiny_cfg(), LossKind::Toim, 6, 2, 3).unwrap();
        let before = t.net().params().to_vec();
        assert!(t.train(&data, 0).unwrap().is_empty());
        assert_eq!(t.net().params(), &before[..]);
    }

    #[test]
    fn one_epoch_initializes_observed_slots() {
        let data = two_identity_data();
        let mut t = Trainer::new(tiny_cfg(), LossKind::Toim, 6, 2, 3).unwrap();
        t.train(&data, 1).unwrap();
        for (&id, &cam) in data.identities.iter().zip(&data.cameras) {
            assert!(t
                .pooled_table()
                .is_initialized(SlotKey::new(id, cam))
                .unwrap());
        }
    }

    #[test]
    fn every_loss_trains_finitely() {
        let data = two_identity_data();
        for kind in LossKind::ALL {
            let mut t = Trainer::new(tiny_cfg(), kind, 6, 2, 3).unwrap();
            let curve = t.train(&data, 2).unwrap();
            assert_eq!(curve.len(), 2);
            assert!(curve.iter().all(|l| l.is_finite()), "{kind}: {curve:?}");
        }
    }

    #[test]
    fn pk_batch_shape() {
        let keys: Vec<SlotKey> = (0..12).map(|i| SlotKey::new(i % 4, i % 3)).collect();
        let batch = select_pk_batch(&keys, 2, 3, 1).unwrap();
        assert_eq!(batch.len(), 6);
        assert_eq!(keys[batch[0]].identity, keys[batch[2]].identity);
        assert_ne!(keys[batch[0]].identity, keys[batch[3]].identity);
    }

    #[test]
    fn pk_batch_rejects_singletons() {
        let keys: Vec<SlotKey> = (0..15).map(|i| SlotKey::new(i, 0)).collect();
        assert!(matches!(
            select_pk_batch(&keys, 5, 3, 0),
            Err(Error::BatchConstruction { .. })
        ));
    }

    #[test]
    fn rejects_mismatched_input() {
        let data = two_identity_data();
        let mut t = Trainer::new(tiny_cfg(), LossKind::Toim, 5, 2, 3).unwrap();
        assert!(t.train_epoch(&data).is_err());
    }
}
