//! Joint training of embedder and extractor through the attack layers,
//! with checkpointing and fixed-intensity evaluation.

mod adam;
mod checkpoint;
mod eval;
mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackInstance, AttackKind};
use crate::diff::Real;
use crate::graph::MeshGraph;
use crate::mesh::Mesh;
use crate::metrics::bit_accuracy;
use crate::model::{forward_batch, Model, ModelConfig};
use crate::nn::{Mode, Session};
use crate::watermark::{decode_bits, Watermark};
use crate::{Error, Result};

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, RngState, MAGIC};
pub use checkpoint::write_atomic;
pub use eval::{default_grid, evaluate, evaluation_watermark, sweep_csv, EvalRow, Watermarker, SWEEP_HEADER};
pub use loss::{loss_cur, loss_m, loss_w, LossWeights};

pub const LOG_HEADER: &str = "epoch,total,l_w,l_m,l_cur,bit_acc";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Switches for the ablation studies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// Train with the identity attack only.
    pub no_attack_layers: bool,
    /// Sum instead of average neighbor features.
    pub no_degree_norm: bool,
    pub no_batch_norm: bool,
    /// Force the curvature weight to zero.
    pub no_curvature_loss: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub model: ModelConfig,
    pub attacks: AttackConfig,
    /// Seeds initialization, shuffling, watermarks and attack draws.
    pub seed: u64,
    pub ablations: Ablations,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 10,
            epochs: 10,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
            attacks: AttackConfig::default(),
            seed: 0,
            ablations: Ablations::default(),
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        self.weights.validate()?;
        self.model.validate()?;
        self.attacks.validate()
    }

    /// Model configuration with ablations and the run seed applied.
    pub fn effective_model(&self) -> ModelConfig {
        ModelConfig {
            degree_norm: self.model.degree_norm && !self.ablations.no_degree_norm,
            batch_norm: self.model.batch_norm && !self.ablations.no_batch_norm,
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            cur: if self.ablations.no_curvature_loss { 0.0 } else { self.weights.cur },
            ..self.weights
        }
    }

    /// Attack sampling with ablations applied.
    pub fn effective_attacks(&self) -> AttackConfig {
        if self.ablations.no_attack_layers {
            AttackConfig {
                enabled: vec![AttackKind::Identity],
                ..self.attacks.clone()
            }
        } else {
            self.attacks.clone()
        }
    }
}

/// Per-epoch means over the minibatches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub total: f64,
    pub l_w: f64,
    pub l_m: f64,
    pub l_cur: f64,
    pub bit_acc: f64,
}

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.total, self.l_w, self.l_m, self.l_cur, self.bit_acc
        )
    }
}

/// Log as CSV text with header.
pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub config: TrainConfig,
    pub model: Model<T>,
    pub optimizer: Adam<T>,
    pub log: Vec<LogRow>,
    pub rng: ChaCha8Rng,
}

/// Trains from scratch; see [`train_with`].
pub fn train<T: Real>(config: &TrainConfig, dataset: &[Mesh]) -> Result<Trained<T>> {
    train_with(config, dataset, |_| {})
}

/// Trains from scratch, calling `observe` after every epoch.
pub fn train_with<T: Real>(config: &TrainConfig, dataset: &[Mesh], observe: impl FnMut(&LogRow)) -> Result<Trained<T>> {
    config.validate()?;
    let model = Model::new(config.effective_model())?;
    let optimizer = Adam::new(&model.store, config.learning_rate);
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    resume(config, dataset, model, optimizer, rng, 0, observe)
}

/// Continues training from an existing state for `config.epochs` more epochs,
/// numbering them after `first_epoch`.
pub fn resume<T: Real>(
    config: &TrainConfig,
    dataset: &[Mesh],
    mut model: Model<T>,
    mut optimizer: Adam<T>,
    mut rng: ChaCha8Rng,
    first_epoch: usize,
    mut observe: impl FnMut(&LogRow),
) -> Result<Trained<T>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if config.batch_size > dataset.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds dataset size {}",
            config.batch_size,
            dataset.len()
        )));
    }
    if let Some(i) = dataset.iter().position(|m| !m.is_normalized()) {
        return Err(Error::Config(format!("training mesh {i} is not unit-cube normalized")));
    }
    let graphs: Vec<MeshGraph> = dataset.iter().map(MeshGraph::new).collect();
    let weights = config.effective_weights();
    let attacks = config.effective_attacks();
    let bits = model.bits();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in first_epoch + 1..=first_epoch + config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let meshes: Vec<&Mesh> = chunk.iter().map(|&i| &dataset[i]).collect();
            let gs: Vec<&MeshGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let marks: Vec<Watermark> = chunk.iter().map(|_| Watermark::random(bits, &mut rng)).collect();
            let kind = attacks.sample_kind(&mut rng)?;
            let insts: Vec<AttackInstance> = chunk.iter().map(|_| attacks.sample_intensity(kind, &mut rng)).collect();
            let mark_refs: Vec<&Watermark> = marks.iter().collect();

            let mut s = Session::new(&model.store, Mode::Train);
            let pass = forward_batch(&model, &mut s, &meshes, &gs, &mark_refs, &insts, &mut rng)?;
            let terms = [("l_w", pass.l_w), ("l_m", pass.l_m), ("l_cur", pass.l_cur)];
            let mut values = [0.0; 3];
            for (k, (name, v)) in terms.iter().enumerate() {
                values[k] = s.tape.value(*v).item().f64();
                if !values[k].is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss term {name} at epoch {epoch}, batch {}",
                        batch_no + 1
                    )));
                }
            }
            let total = weights.total_tape(&mut s.tape, pass.l_w, pass.l_cur, pass.l_m)?;
            let total_value = s.tape.value(total).item().f64();
            if !total_value.is_finite() {
                return Err(Error::NonFinite(format!("total loss at epoch {epoch}, batch {}", batch_no + 1)));
            }
            let w_ext = s.tape.value(pass.w_ext).clone();
            let grads = s.tape.backward(total)?;
            let grads = s.gradients(&grads);
            let running = s.into_running_updates();
            optimizer.update(&mut model.store, &grads)?;
            for (id, value) in running {
                model.store.set(id, value)?;
            }

            let mut acc = 0.0;
            for (b, w) in marks.iter().enumerate() {
                let raw: Vec<f64> = w_ext.row(b).iter().map(|x| x.f64()).collect();
                acc += bit_accuracy(w, &decode_bits(&raw)?)?;
            }
            for (slot, v) in sums.iter_mut().zip([total_value, values[0], values[1], values[2], acc / marks.len() as f64]) {
                *slot += v;
            }
            batches += 1;
        }
        let n = batches as f64;
        let row = LogRow {
            epoch,
            total: sums[0] / n,
            l_w: sums[1] / n,
            l_m: sums[2] / n,
            l_cur: sums[3] / n,
            bit_acc: sums[4] / n,
        };
        observe(&row);
        log.push(row);
    }
    Ok(Trained {
        config: config.clone(),
        model,
        optimizer,
        log,
        rng,
    })
}
