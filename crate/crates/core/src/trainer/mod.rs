//! Training and evaluation harness for [`TinyNet`].
//!
//! Three training modes share one batch loop:
//!
//! * [`train_supervised`] uses only the labeled items.
//! * [`train_semisupervised`] adds `lambda * G` at the network output of
//!   every unlabeled item, where `G` is the topological gradient for the
//!   configured prior (one loop, components unconstrained, by default).
//! * [`train_pseudolabel_ssl`] retrains on thresholded predictions of the
//!   unlabeled items.
//!
//! Batches hold a fixed labeled:unlabeled ratio. Labeled and unlabeled
//! orders are shuffled by two independent ChaCha8 streams, so the labeled
//! trajectory does not depend on how many unlabeled items exist. Per-item
//! work can run on a rayon pool; gradients are always summed in item order,
//! which keeps results identical for every `jobs` setting.

mod eval;
mod morphology;
mod refine;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{dice_score, evaluate, evaluate_with, EvalRecord, EvalReport, Postprocess};
pub use morphology::binary_closure;
pub use refine::{refine_mask, RefineConfig, Refinement};

use crate::complex::{binarize, ProbabilityGrid};
use crate::data::{Dataset, Split};
use crate::model::{adam_step, AdamState, Gradients, LossKind, TinyNet};
use crate::oracle::BinaryMask;
use crate::topograd::{topo_grad_general, TopoGradConfig, TopologyPrior};
use crate::{Error, Result};

/// How per-image topological gradients are combined within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopoNormalization {
    /// Sum of `lambda * G` over the batch.
    Sum,
    /// Mean of `lambda * G` over the unlabeled items in the batch.
    BatchMean,
    /// Sum of `lambda * G / pixels`, as if `G` were the gradient of a
    /// pixel-averaged per-image loss.
    #[default]
    PixelSum,
    /// [`TopoNormalization::PixelSum`] divided by the unlabeled batch size.
    PixelMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    /// Weight of the topological gradient.
    pub lambda: f64,
    pub k: usize,
    pub epsilon: f64,
    pub epochs: usize,
    /// Leading epochs trained without the topological term.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
    /// Desired number of components; `None` leaves it unconstrained.
    pub prior_beta0: Option<usize>,
    pub prior_beta1: usize,
    /// Also shorten bars beyond the desired counts.
    pub penalize_extra: bool,
    /// Also apply `lambda * G` to labeled items.
    pub topo_on_labeled: bool,
    pub topo_normalization: TopoNormalization,
    pub pseudo_rounds: usize,
    pub pseudo_epochs: usize,
    /// Worker threads for per-item work; 1 runs everything on the caller.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_labeled: 5,
            n_unlabeled: 50,
            lambda: 1.0,
            k: 5,
            epsilon: 0.01,
            epochs: 30,
            warmup_epochs: 0,
            batch_size: 11,
            learning_rate: 1e-4,
            loss: LossKind::Bce,
            seed: 0,
            prior_beta0: None,
            prior_beta1: 1,
            penalize_extra: false,
            topo_on_labeled: false,
            topo_normalization: TopoNormalization::PixelSum,
            pseudo_rounds: 3,
            pseudo_epochs: 10,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_labeled == 0 {
            return bad("n_labeled must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        self.topo_config()?;
        self.prior().map(|_| ())
    }

    /// The topology prior used for the training gradient.
    pub fn prior(&self) -> Result<TopologyPrior> {
        let mut desired = std::collections::BTreeMap::from([(1, self.prior_beta1)]);
        if let Some(b0) = self.prior_beta0 {
            desired.insert(0, b0);
        }
        TopologyPrior::new(desired, self.penalize_extra)
    }

    pub fn topo_config(&self) -> Result<TopoGradConfig> {
        TopoGradConfig::new(self.k, self.epsilon)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Items per step: `(labeled, unlabeled, steps per epoch)`.
///
/// Labeled items per batch follow the dataset ratio (at least one); the
/// number of steps covers every labeled item once, and unlabeled items are
/// spread evenly over those steps.
pub fn batch_plan(batch_size: usize, n_labeled: usize, n_unlabeled: usize) -> (usize, usize, usize) {
    let share = batch_size as f64 * n_labeled as f64 / (n_labeled + n_unlabeled) as f64;
    let per_labeled = (share.round() as usize).clamp(1, n_labeled.max(1));
    let steps = n_labeled.div_ceil(per_labeled);
    let per_unlabeled = n_unlabeled.div_ceil(steps.max(1));
    (per_labeled, per_unlabeled, steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Counts across pseudo-label rounds.
    pub epoch: usize,
    /// Mean supervised loss over the labeled items seen this epoch.
    pub supervised_loss: f64,
    /// Mean number of nonzero topological gradient entries per item.
    pub topo_active: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,supervised_loss,topo_active,steps\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch, r.supervised_loss, r.topo_active, r.steps
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: TinyNet,
    pub history: History,
}

struct Item {
    image: ProbabilityGrid,
    label: Option<BinaryMask>,
}

fn take_split(dataset: &Dataset, split: Split, n: usize, with_labels: bool) -> Result<Vec<Item>> {
    let items: Vec<Item> = dataset
        .split(split)
        .take(n)
        .map(|s| Item {
            image: s.image.clone(),
            label: with_labels.then(|| s.label.clone()),
        })
        .collect();
    if items.len() < n {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} {split:?} items, {n} requested",
            items.len()
        )));
    }
    Ok(items)
}

/// Per-item output of one batch.
struct ItemGrad {
    grads: Option<Gradients>,
    loss: Option<f64>,
    active: usize,
}

struct Loop<'a> {
    cfg: &'a TrainConfig,
    topo: TopoGradConfig,
    prior: TopologyPrior,
    pool: Option<rayon::ThreadPool>,
    use_topo: bool,
}

impl Loop<'_> {
    fn new(cfg: &TrainConfig, use_topo: bool) -> Result<Loop<'_>> {
        cfg.validate()?;
        let pool = if cfg.jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Some(pool)
        } else {
            None
        };
        Ok(Loop {
            cfg,
            topo: cfg.topo_config()?,
            prior: cfg.prior()?,
            pool,
            // lambda = 0 makes every topological term vanish, so skip them
            use_topo: use_topo && cfg.lambda > 0.0,
        })
    }

    fn map<T: Send, F>(&self, n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    fn item_grad(&self, net: &TinyNet, item: &Item, supervised_scale: f64) -> Result<ItemGrad> {
        let (s, tape) = net.forward(&item.image)?;
        let mut d_out = vec![0.0; s.values().len()];
        let mut loss = None;
        if let Some(label) = &item.label {
            let (l, g) = self.cfg.loss.evaluate(&s, label)?;
            loss = Some(l);
            for (d, v) in d_out.iter_mut().zip(g) {
                *d = v * supervised_scale;
            }
        }
        let mut active = 0;
        let wants_topo = item.label.is_none() || self.cfg.topo_on_labeled;
        if self.use_topo && wants_topo {
            let g = topo_grad_general(&s, &self.prior, &self.topo)?;
            for (i, j, v) in g.nonzero() {
                d_out[i * s.width() + j] += self.cfg.lambda * v;
                active += 1;
            }
        }
        let grads = if d_out.iter().all(|&d| d == 0.0) {
            None
        } else {
            Some(net.backward(&tape, &d_out)?)
        };
        Ok(ItemGrad { grads, loss, active })
    }

    /// Runs `epochs` epochs over `labeled` and `unlabeled`, appending to
    /// `history`. The batch plan is computed for `plan_unlabeled` unlabeled
    /// items whether or not they are used.
    fn run(
        &self,
        state: &mut State,
        labeled: &[Item],
        unlabeled: &[Item],
        plan_unlabeled: usize,
        epochs: usize,
    ) -> Result<()> {
        if labeled.is_empty() {
            return Err(Error::InvalidConfig("no labeled items to train on".into()));
        }
        let unlabeled: &[Item] = if self.use_topo { unlabeled } else { &[] };
        let (per_l, per_u, steps) = batch_plan(self.cfg.batch_size, labeled.len(), plan_unlabeled);
        let State {
            net,
            adam,
            rngs,
            history,
        } = state;
        let first_epoch = history.epochs.len();
        for epoch in 0..epochs {
            let mut l_order: Vec<usize> = (0..labeled.len()).collect();
            l_order.shuffle(&mut rngs.0);
            let mut u_order: Vec<usize> = (0..unlabeled.len()).collect();
            if !unlabeled.is_empty() {
                u_order.shuffle(&mut rngs.1);
            }
            let (mut loss_sum, mut loss_n, mut active_sum, mut topo_n) = (0.0, 0usize, 0usize, 0usize);
            for step in 0..steps {
                let l_batch = chunk(&l_order, step, per_l);
                let u_batch = chunk(&u_order, step, per_u);
                let batch: Vec<&Item> = l_batch
                    .iter()
                    .map(|&i| &labeled[i])
                    .chain(u_batch.iter().map(|&i| &unlabeled[i]))
                    .collect();
                let sup_scale = 1.0 / l_batch.len() as f64;
                let net_ref = &*net;
                let results = self.map(batch.len(), |b| self.item_grad(net_ref, batch[b], sup_scale));
                let pixels = batch[0].image.values().len() as f64;
                let per_item = 1.0 / u_batch.len().max(1) as f64;
                let topo_scale = match self.cfg.topo_normalization {
                    TopoNormalization::Sum => 1.0,
                    TopoNormalization::BatchMean => per_item,
                    TopoNormalization::PixelSum => 1.0 / pixels,
                    TopoNormalization::PixelMean => per_item / pixels,
                };
                let mut total = Gradients::zeros_like(net);
                for (b, r) in results.into_iter().enumerate() {
                    let r = r?;
                    if let Some(l) = r.loss {
                        loss_sum += l;
                        loss_n += 1;
                    }
                    if self.use_topo && (b >= l_batch.len() || self.cfg.topo_on_labeled) {
                        active_sum += r.active;
                        topo_n += 1;
                    }
                    if let Some(mut g) = r.grads {
                        if b >= l_batch.len() && topo_scale != 1.0 {
                            g.scale(topo_scale);
                        }
                        total.add_assign(&g);
                    }
                }
                adam_step(net, &total, adam)?;
            }
            history.epochs.push(EpochRecord {
                epoch: first_epoch + epoch,
                supervised_loss: loss_sum / loss_n.max(1) as f64,
                topo_active: active_sum as f64 / topo_n.max(1) as f64,
                steps,
            });
        }
        Ok(())
    }
}

fn chunk(order: &[usize], step: usize, size: usize) -> &[usize] {
    let lo = (step * size).min(order.len());
    let hi = (lo + size).min(order.len());
    &order[lo..hi]
}

fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let labeled = ChaCha8Rng::seed_from_u64(seed);
    let mut unlabeled = ChaCha8Rng::seed_from_u64(seed);
    unlabeled.set_stream(1);
    (labeled, unlabeled)
}

/// Mutable training state carried across phases.
struct State {
    net: TinyNet,
    adam: AdamState,
    rngs: (ChaCha8Rng, ChaCha8Rng),
    history: History,
}

fn train(cfg: &TrainConfig, dataset: &Dataset, use_topo: bool) -> Result<State> {
    let plain = Loop::new(cfg, false)?;
    let runner = Loop::new(cfg, use_topo)?;
    let labeled = take_split(dataset, Split::Labeled, cfg.n_labeled, true)?;
    let unlabeled = if runner.use_topo {
        take_split(dataset, Split::Unlabeled, cfg.n_unlabeled, false)?
    } else {
        Vec::new()
    };
    let net = TinyNet::new(cfg.seed);
    let mut state = State {
        adam: AdamState::new(&net, cfg.learning_rate),
        net,
        rngs: streams(cfg.seed),
        history: History::default(),
    };
    let warmup = cfg.warmup_epochs.min(cfg.epochs);
    plain.run(&mut state, &labeled, &unlabeled, cfg.n_unlabeled, warmup)?;
    runner.run(&mut state, &labeled, &unlabeled, cfg.n_unlabeled, cfg.epochs - warmup)?;
    Ok(state)
}

impl From<State> for Trained {
    fn from(state: State) -> Self {
        Trained {
            net: state.net,
            history: state.history,
        }
    }
}

/// Supervised training on the first `n_labeled` labeled items.
///
/// Batches follow [`batch_plan`] with the configured `n_unlabeled`, so the
/// schedule matches [`train_semisupervised`] step for step.
pub fn train_supervised(cfg: &TrainConfig, dataset: &Dataset) -> Result<Trained> {
    train(cfg, dataset, false).map(Trained::from)
}

/// Supervised loss on labeled items plus `lambda * G` on unlabeled ones.
///
/// With `lambda = 0` the result is bit-identical to [`train_supervised`].
pub fn train_semisupervised(cfg: &TrainConfig, dataset: &Dataset) -> Result<Trained> {
    train(cfg, dataset, true).map(Trained::from)
}

/// Supervised phase, then `pseudo_rounds` rounds that label the unlabeled
/// items with the thresholded prediction and continue training on both.
pub fn train_pseudolabel_ssl(cfg: &TrainConfig, dataset: &Dataset) -> Result<Trained> {
    let mut state = train(cfg, dataset, false)?;
    if cfg.pseudo_rounds == 0 {
        return Ok(state.into());
    }
    let runner = Loop::new(cfg, false)?;
    let labeled = take_split(dataset, Split::Labeled, cfg.n_labeled, true)?;
    let unlabeled = take_split(dataset, Split::Unlabeled, cfg.n_unlabeled, false)?;
    for _ in 0..cfg.pseudo_rounds {
        let mut items: Vec<Item> = labeled
            .iter()
            .map(|it| Item {
                image: it.image.clone(),
                label: it.label.clone(),
            })
            .collect();
        let net_ref = &state.net;
        let pseudo = runner.map(unlabeled.len(), |i| {
            net_ref
                .forward(&unlabeled[i].image)
                .map(|(s, _)| binarize(&s, 0.5))
        });
        for (it, mask) in unlabeled.iter().zip(pseudo) {
            items.push(Item {
                image: it.image.clone(),
                label: Some(mask?),
            });
        }
        runner.run(&mut state, &items, &[], 0, cfg.pseudo_epochs)?;
    }
    Ok(state.into())
}

/// Predicted probability maps for a set of images.
pub fn predict(net: &TinyNet, images: &[&ProbabilityGrid], jobs: usize) -> Result<Vec<ProbabilityGrid>> {
    let run = |i: usize| net.forward(images[i]).map(|(s, _)| s);
    if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..images.len()).into_par_iter().map(run).collect())
    } else {
        (0..images.len()).map(run).collect()
    }
}
