use std::path::{Path, PathBuf};

use advaug_core::dataset::Dataset;
use advaug_core::imaging::{load_rgb, resize_bilinear, to_chw};
use advaug_core::nn::{Adam, Network, Tensor};
use advaug_core::{exec, seeding};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointRef};
use crate::config::GanConfig;
use crate::losses::{adversarial_loss_grad, l1_loss, l1_loss_grad};
use crate::model::CycleModels;
use crate::GanError;

/// Loss components of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub cycle_a: f64,
    pub cycle_b: f64,
    pub identity_a: f64,
    pub identity_b: f64,
    pub total_g: f64,
}

impl LossRecord {
    fn is_finite(&self) -> bool {
        [self.adv_g, self.adv_d, self.cycle_a, self.cycle_b, self.identity_a, self.identity_b, self.total_g]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// History of generated images shown to the discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePool {
    pub capacity: usize,
    pub images: Vec<Vec<f64>>,
}

impl ImagePool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, images: Vec::new() }
    }

    /// Returns a batch mixing fresh images with stored ones; each fresh
    /// image replaces a stored one with probability 1/2 once the pool is full.
    pub fn query<R: Rng + ?Sized>(&mut self, batch: &Tensor, rng: &mut R) -> Tensor {
        if self.capacity == 0 {
            return batch.clone();
        }
        let mut out = Vec::with_capacity(batch.n);
        for i in 0..batch.n {
            let img = batch.sample(i).to_vec();
            if self.images.len() < self.capacity {
                self.images.push(img.clone());
                out.push(img);
            } else if rng.random_bool(0.5) {
                let k = rng.random_range(0..self.capacity);
                out.push(std::mem::replace(&mut self.images[k], img));
            } else {
                out.push(img);
            }
        }
        let refs: Vec<&[f64]> = out.iter().map(|v| v.as_slice()).collect();
        Tensor::stack(&refs, batch.c, batch.h, batch.w)
    }
}

/// Generator-side loss terms and parameter gradients for one batch pair.
#[derive(Debug, Clone)]
pub struct GeneratorObjective {
    pub adv_g: f64,
    pub cycle_a: f64,
    pub cycle_b: f64,
    pub identity_a: f64,
    pub identity_b: f64,
    pub total_g: f64,
    pub grad_g_ab: Vec<f64>,
    pub grad_g_ba: Vec<f64>,
    pub fake_a: Tensor,
    pub fake_b: Tensor,
}

fn grad_tensor(like: &Tensor, data: Vec<f64>, scale: f64) -> Tensor {
    let mut t = Tensor::from_vec(like.n, like.c, like.h, like.w, data);
    if scale != 1.0 {
        t.scale(scale);
    }
    t
}

/// Adversarial gradient of `D(fake)` scored as real, propagated back to `fake`.
fn adversarial_input_grad(d: &Network, fake: &Tensor) -> Result<(f64, Tensor), GanError> {
    let (scores, tape) = d.forward_train(fake);
    let (loss, g) = adversarial_loss_grad(&scores.data, true)?;
    let mut scratch = vec![0.0; d.param_count()];
    let dx = d.backward(&tape, grad_tensor(&scores, g, 1.0), &mut scratch);
    Ok((loss, dx))
}

/// `total_g = adv_g + lambda_cycle*(cycle_a+cycle_b) + lambda_identity*(identity_a+identity_b)`
/// together with its gradients with respect to both generators.
pub fn generator_objective(
    models: &CycleModels,
    cfg: &GanConfig,
    a: &Tensor,
    b: &Tensor,
) -> Result<GeneratorObjective, GanError> {
    let (lc, li) = (cfg.lambda_cycle, cfg.lambda_identity);
    let mut grad_ab = vec![0.0; models.g_ab.param_count()];
    let mut grad_ba = vec![0.0; models.g_ba.param_count()];

    let (fake_b, tape_fb) = models.g_ab.forward_train(a);
    let (rec_a, tape_ra) = models.g_ba.forward_train(&fake_b);
    let (fake_a, tape_fa) = models.g_ba.forward_train(b);
    let (rec_b, tape_rb) = models.g_ab.forward_train(&fake_a);

    let (adv_ab, mut d_fake_b) = adversarial_input_grad(&models.d_b, &fake_b)?;
    let (adv_ba, mut d_fake_a) = adversarial_input_grad(&models.d_a, &fake_a)?;

    let (cycle_a, g) = l1_loss_grad(&rec_a.data, &a.data)?;
    let through = models.g_ba.backward(&tape_ra, grad_tensor(&rec_a, g, lc), &mut grad_ba);
    d_fake_b.add_assign(&through);
    let (cycle_b, g) = l1_loss_grad(&rec_b.data, &b.data)?;
    let through = models.g_ab.backward(&tape_rb, grad_tensor(&rec_b, g, lc), &mut grad_ab);
    d_fake_a.add_assign(&through);

    models.g_ab.backward(&tape_fb, d_fake_b, &mut grad_ab);
    models.g_ba.backward(&tape_fa, d_fake_a, &mut grad_ba);

    let (identity_a, identity_b) = if li > 0.0 {
        let (id_b, tape) = models.g_ab.forward_train(b);
        let (identity_b, g) = l1_loss_grad(&id_b.data, &b.data)?;
        models.g_ab.backward(&tape, grad_tensor(&id_b, g, li), &mut grad_ab);
        let (id_a, tape) = models.g_ba.forward_train(a);
        let (identity_a, g) = l1_loss_grad(&id_a.data, &a.data)?;
        models.g_ba.backward(&tape, grad_tensor(&id_a, g, li), &mut grad_ba);
        (identity_a, identity_b)
    } else {
        let identity_a = l1_loss(&models.g_ba.forward(a).data, &a.data)?;
        let identity_b = l1_loss(&models.g_ab.forward(b).data, &b.data)?;
        (identity_a, identity_b)
    };

    let adv_g = adv_ab + adv_ba;
    let total_g = adv_g + lc * (cycle_a + cycle_b) + li * (identity_a + identity_b);
    Ok(GeneratorObjective {
        adv_g,
        cycle_a,
        cycle_b,
        identity_a,
        identity_b,
        total_g,
        grad_g_ab: grad_ab,
        grad_g_ba: grad_ba,
        fake_a,
        fake_b,
    })
}

/// Least-squares discriminator loss `0.5*(mse(D(real),1) + mse(D(fake),0))` and its gradient.
fn discriminator_objective(d: &Network, real: &Tensor, fake: &Tensor) -> Result<(f64, Vec<f64>), GanError> {
    let mut grads = vec![0.0; d.param_count()];
    let mut total = 0.0;
    for (x, is_real) in [(real, true), (fake, false)] {
        let (scores, tape) = d.forward_train(x);
        let (loss, g) = adversarial_loss_grad(&scores.data, is_real)?;
        d.backward(&tape, grad_tensor(&scores, g, 0.5), &mut grads);
        total += 0.5 * loss;
    }
    Ok((total, grads))
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct GanTrainState {
    pub config: GanConfig,
    pub models: CycleModels,
    pub opt_g_ab: Adam,
    pub opt_g_ba: Adam,
    pub opt_d_a: Adam,
    pub opt_d_b: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimization steps.
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub pool_a: ImagePool,
    pub pool_b: ImagePool,
    pub history: Vec<LossRecord>,
}

impl GanTrainState {
    pub fn new(config: GanConfig) -> Result<Self, GanError> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seeding::mix(config.seed, 1));
        let models = CycleModels::new(&config, &mut init_rng);
        let adam = |n: &Network, lr: f64| Adam::new(n.param_count(), lr, config.beta1, config.beta2);
        Ok(Self {
            opt_g_ab: adam(&models.g_ab, config.lr_generator),
            opt_g_ba: adam(&models.g_ba, config.lr_generator),
            opt_d_a: adam(&models.d_a, config.lr_discriminator),
            opt_d_b: adam(&models.d_b, config.lr_discriminator),
            rng: ChaCha8Rng::seed_from_u64(seeding::mix(config.seed, 2)),
            pool_a: ImagePool::new(config.replay_pool),
            pool_b: ImagePool::new(config.replay_pool),
            epoch: 0,
            step: 0,
            history: Vec::new(),
            models,
            config,
        })
    }

    fn check_batch(&self, t: &Tensor, which: &str) -> Result<(), GanError> {
        let r = self.config.resolution as usize;
        if t.n == 0 || t.c != 3 || t.h != r || t.w != r {
            return Err(GanError::Argument(format!(
                "batch {which} has shape {:?}, expected [n>0, 3, {r}, {r}]",
                t.shape()
            )));
        }
        Ok(())
    }

    /// One generator update followed by one update of each discriminator.
    /// Nothing is modified when the generator objective is non-finite.
    pub fn train_step(&mut self, batch_a: &Tensor, batch_b: &Tensor) -> Result<LossRecord, GanError> {
        self.check_batch(batch_a, "a")?;
        self.check_batch(batch_b, "b")?;
        let obj = generator_objective(&self.models, &self.config, batch_a, batch_b)?;
        let finite = |g: &[f64]| g.iter().all(|v| v.is_finite());
        if !obj.total_g.is_finite() || !finite(&obj.grad_g_ab) || !finite(&obj.grad_g_ba) {
            return Err(GanError::Numeric(format!("generator objective is {}", obj.total_g)));
        }
        self.opt_g_ab.step(&mut self.models.g_ab.params, &obj.grad_g_ab);
        self.opt_g_ba.step(&mut self.models.g_ba.params, &obj.grad_g_ba);

        let pooled_a = self.pool_a.query(&obj.fake_a, &mut self.rng);
        let pooled_b = self.pool_b.query(&obj.fake_b, &mut self.rng);
        let (loss_a, grad_a) = discriminator_objective(&self.models.d_a, batch_a, &pooled_a)?;
        let (loss_b, grad_b) = discriminator_objective(&self.models.d_b, batch_b, &pooled_b)?;
        if !(loss_a + loss_b).is_finite() || !finite(&grad_a) || !finite(&grad_b) {
            return Err(GanError::Numeric(format!("discriminator loss is {}", loss_a + loss_b)));
        }
        self.opt_d_a.step(&mut self.models.d_a.params, &grad_a);
        self.opt_d_b.step(&mut self.models.d_b.params, &grad_b);

        let record = LossRecord {
            epoch: self.epoch,
            step: self.step,
            adv_g: obj.adv_g,
            adv_d: loss_a + loss_b,
            cycle_a: obj.cycle_a,
            cycle_b: obj.cycle_b,
            identity_a: obj.identity_a,
            identity_b: obj.identity_b,
            total_g: obj.total_g,
        };
        debug_assert!(record.is_finite());
        self.step += 1;
        self.history.push(record);
        Ok(record)
    }
}

/// Images of one domain resized to the model resolution and scaled to [-1, 1].
pub fn load_domain(ds: &Dataset, resolution: u32) -> Result<Vec<Vec<f64>>, GanError> {
    exec::try_map(ds.records(), |r| {
        let img = load_rgb(&r.image_path)?;
        Ok(to_chw(&resize_bilinear(&img, resolution, resolution)))
    })
}

fn batches(state: &GanTrainState, na: usize, nb: usize, epoch: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(state.config.seed, 1000 + epoch as u64));
    let mut pa: Vec<usize> = (0..na).collect();
    let mut pb: Vec<usize> = (0..nb).collect();
    pa.shuffle(&mut rng);
    pb.shuffle(&mut rng);
    let bs = state.config.batch_size;
    let steps = na.max(nb).div_ceil(bs);
    (0..steps)
        .map(|s| {
            let ia = (0..bs).map(|j| pa[(s * bs + j) % na]).collect();
            let ib = (0..bs).map(|j| pb[(s * bs + j) % nb]).collect();
            (ia, ib)
        })
        .collect()
}

fn stack(data: &[Vec<f64>], idx: &[usize], res: usize) -> Tensor {
    let refs: Vec<&[f64]> = idx.iter().map(|&i| data[i].as_slice()).collect();
    Tensor::stack(&refs, 3, res, res)
}

fn checkpoint_dir(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join(format!("epoch_{epoch:04}"))
}

/// Trains from scratch and returns the final checkpoint.
pub fn train(config: &GanConfig, domain_a: &Dataset, domain_b: &Dataset, out_dir: &Path) -> Result<CheckpointRef, GanError> {
    if domain_a.is_empty() || domain_b.is_empty() {
        return Err(GanError::Argument("both training domains must be non-empty".into()));
    }
    let state = GanTrainState::new(config.clone())?;
    run(state, domain_a, domain_b, out_dir)
}

/// Continues a saved run until `epochs` total epochs are complete.
pub fn resume(
    checkpoint: &Path,
    epochs: usize,
    domain_a: &Dataset,
    domain_b: &Dataset,
    out_dir: &Path,
) -> Result<CheckpointRef, GanError> {
    let mut state = crate::checkpoint::load_checkpoint(checkpoint)?;
    state.config.epochs = epochs;
    run(state, domain_a, domain_b, out_dir)
}

fn run(mut state: GanTrainState, domain_a: &Dataset, domain_b: &Dataset, out_dir: &Path) -> Result<CheckpointRef, GanError> {
    std::fs::create_dir_all(out_dir).map_err(|source| GanError::Io { path: out_dir.to_path_buf(), source })?;
    if state.epoch >= state.config.epochs {
        return save_checkpoint(&state, &checkpoint_dir(out_dir, state.epoch));
    }
    let res = state.config.resolution;
    let data_a = load_domain(domain_a, res)?;
    let data_b = load_domain(domain_b, res)?;
    let mut last = None;
    while state.epoch < state.config.epochs {
        let epoch = state.epoch;
        let start = state.history.len();
        for (ia, ib) in batches(&state, data_a.len(), data_b.len(), epoch) {
            let a = stack(&data_a, &ia, res as usize);
            let b = stack(&data_b, &ib, res as usize);
            if let Err(e) = state.train_step(&a, &b) {
                let snapshot = out_dir.join(format!("diagnostic_step_{}", state.step));
                save_checkpoint(&state, &snapshot)?;
                return Err(GanError::Diverged { step: state.step, message: e.to_string(), snapshot });
            }
        }
        state.epoch += 1;
        let recs = &state.history[start..];
        let mean_cycle = recs.iter().map(|r| r.cycle_a + r.cycle_b).sum::<f64>() / recs.len().max(1) as f64;
        log::info!("epoch {}/{}: mean cycle loss {mean_cycle:.4}", state.epoch, state.config.epochs);
        if state.epoch.is_multiple_of(state.config.checkpoint_every) || state.epoch == state.config.epochs {
            last = Some(save_checkpoint(&state, &checkpoint_dir(out_dir, state.epoch))?);
        }
    }
    Ok(last.expect("final epoch always checkpoints"))
}

/// Per-epoch mean of `cycle_a + cycle_b`.
pub fn epoch_cycle_means(history: &[LossRecord]) -> Vec<f64> {
    let epochs = history.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let v: Vec<f64> = history.iter().filter(|r| r.epoch == e).map(|r| r.cycle_a + r.cycle_b).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DiscriminatorKind, GeneratorKind};

    fn tiny_cfg() -> GanConfig {
        GanConfig {
            resolution: 8,
            batch_size: 2,
            base_channels: 2,
            residual_blocks: 1,
            replay_pool: 3,
            discriminator: DiscriminatorKind::Compact,
            ..GanConfig::desk()
        }
    }

    fn batch(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(2, 3, 8, 8, (0..384).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn step_is_deterministic_and_finite() {
        let mut s1 = GanTrainState::new(tiny_cfg()).unwrap();
        let mut s2 = GanTrainState::new(tiny_cfg()).unwrap();
        for k in 0..4 {
            let r1 = s1.train_step(&batch(k), &batch(k + 10)).unwrap();
            let r2 = s2.train_step(&batch(k), &batch(k + 10)).unwrap();
            assert_eq!(r1, r2);
            assert!(r1.is_finite());
            for v in [r1.adv_g, r1.adv_d, r1.cycle_a, r1.cycle_b, r1.identity_a, r1.identity_b, r1.total_g] {
                assert!(v >= 0.0);
            }
        }
        assert_eq!(s1.models, s2.models);
    }

    #[test]
    fn zero_weights_leave_only_adversarial_term() {
        let cfg = GanConfig { lambda_cycle: 0.0, lambda_identity: 0.0, ..tiny_cfg() };
        let mut s = GanTrainState::new(cfg).unwrap();
        let r = s.train_step(&batch(1), &batch(2)).unwrap();
        assert_eq!(r.total_g, r.adv_g);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let mut s = GanTrainState::new(tiny_cfg()).unwrap();
        let bad = Tensor::zeros(2, 3, 4, 4);
        assert!(matches!(s.train_step(&bad, &batch(0)), Err(GanError::Argument(_))));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn pool_fills_then_swaps() {
        let mut pool = ImagePool::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Tensor::from_vec(3, 1, 1, 1, vec![1.0, 2.0, 3.0]);
        let out = pool.query(&t, &mut rng);
        assert_eq!(pool.images.len(), 2);
        assert_eq!(out.n, 3);
        let mut off = ImagePool::new(0);
        assert_eq!(off.query(&t, &mut rng), t);
    }

    #[test]
    fn micro_objective_matches_finite_differences() {
        let cfg = GanConfig { generator: GeneratorKind::Micro, ..tiny_cfg() };
        let state = GanTrainState::new(cfg.clone()).unwrap();
        let (a, b) = (batch(3), batch(4));
        let obj = generator_objective(&state.models, &cfg, &a, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let i = rng.random_range(0..state.models.g_ab.param_count());
            let eval = |delta: f64| {
                let mut m = state.models.clone();
                m.g_ab.params[i] += delta;
                generator_objective(&m, &cfg, &a, &b).unwrap().total_g
            };
            let h = 1e-6;
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let ana = obj.grad_g_ab[i];
            assert!((num - ana).abs() <= 1e-3 * num.abs().max(ana.abs()).max(1e-8), "{num} vs {ana}");
        }
    }
}
