//! Synthetic pair generation and the unsupervised training loop.

mod augment;

pub use augment::{make_pair, AugmentationConfig, GroundTruth, Occlusion, TrainingPair};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::loss::{chamfer_on_tape, ChamferConfig};
use crate::net::{FptArch, FptModel};
use crate::numeric::{Adam, AdamConfig, Gradients, Scalar, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub seed: u64,
    pub chamfer: ChamferConfig,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub augmentation: AugmentationConfig,
    /// Points sampled per base shape.
    pub num_points: usize,
    pub arch: FptArch,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainingConfig {
            batch_size: 32,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            steps: 2000,
            seed: 0,
            chamfer: ChamferConfig::default(),
            checkpoint_every: 0,
            augmentation: AugmentationConfig::default(),
            num_points: 2048,
            arch: FptArch::default(),
        }
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

/// Chamfer loss and parameter gradients for one augmented pair.
pub fn pair_loss_and_grad<T: Scalar>(
    model: &FptModel<T>,
    pair: &TrainingPair,
    chamfer: &ChamferConfig,
    seed_grad: T,
) -> Result<(f64, Gradients<T>)> {
    let mut tape = Tape::new(&model.params);
    let nodes = model.forward_on_tape(&mut tape, &pair.source, &pair.target)?;
    let loss = chamfer_on_tape(&mut tape, nodes.moved, &pair.target, chamfer)?;
    let value = tape.value(loss).data()[0].as_f64();
    let grads = tape.backward(loss, seed_grad)?;
    Ok((value, grads))
}

/// Trains `model` in place on pairs generated on the fly from `dataset`.
///
/// Each step draws `batch_size` (shape, pair seed) jobs from a generator
/// seeded with `cfg.seed`, averages the Chamfer loss over the batch and
/// takes one Adam step. Per-pair work runs on the current rayon pool;
/// gradients are summed in batch order so results do not depend on the
/// thread count.
pub fn train<T, F>(
    model: &mut FptModel<T>,
    dataset: &[PointSet],
    cfg: &TrainingConfig,
    mut on_checkpoint: F,
) -> Result<Vec<LossRecord>>
where
    T: Scalar,
    F: FnMut(usize, &FptModel<T>) -> Result<()>,
{
    if dataset.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let mut adam = Adam::new(&model.params, cfg.adam())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed_grad = T::from_f64(1.0 / cfg.batch_size as f64);
    let chunk = rayon::current_num_threads().max(1);
    let mut log = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let started = Instant::now();
        let jobs: Vec<(usize, u64)> = (0..cfg.batch_size)
            .map(|_| (rng.random_range(0..dataset.len()), rng.random::<u64>()))
            .collect();

        let mut total = Gradients::zeros_like(&model.params);
        let mut loss_sum = 0.0;
        for group in jobs.chunks(chunk) {
            let model_ref = &*model;
            let results: Vec<Result<(f64, Gradients<T>)>> = group
                .par_iter()
                .map(|&(shape, pair_seed)| {
                    let pair = make_pair(&dataset[shape], &cfg.augmentation, pair_seed)?;
                    pair_loss_and_grad(model_ref, &pair, &cfg.chamfer, seed_grad)
                })
                .collect();
            for (&(_, pair_seed), r) in group.iter().zip(results) {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { step, pair_seed, loss });
                }
                loss_sum += loss;
                total.accumulate(&g)?;
            }
        }
        model.params.set_grads(total);
        adam.step(&mut model.params)?;

        let loss = loss_sum / cfg.batch_size as f64;
        log.push(LossRecord {
            step,
            loss,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            on_checkpoint(step + 1, model)?;
        }
    }
    Ok(log)
}

pub fn write_loss_log(path: impl AsRef<Path>, log: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,loss,wall_ms\n");
    for r in log {
        out.push_str(&format!("{},{},{:.3}\n", r.step, r.loss, r.wall_ms));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
