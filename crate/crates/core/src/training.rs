//! Supervised pre-training, the semi-supervised network/level-set loop, and
//! inference.
//!
//! In the joint loop labeled samples enter a FIFO replay buffer with their
//! ground truth and unlabeled samples with a level-set-refined pseudo-label.
//! Whenever the buffer is full the network takes one optimizer step on the
//! mean loss over all buffered pairs; the oldest pair leaves the buffer on
//! the next push.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{self, Dataset, PadMode};
use crate::error::{Error, Result};
use crate::fcn::{self, adadelta_update, AdadeltaConfig, FcnModel, Gradients};
use crate::grid::{edge_weight, EdgeWeightMode, ScalarField2D};
use crate::levelset::{self, EnergyParams, EnergyTrace, RegionProbabilities};
use crate::metrics;
use crate::shape::{AffineParams, ShapeContext, ShapeModel};

/// An image with an optional ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ScalarField2D,
    pub label: Option<ScalarField2D>,
}

impl Sample {
    pub fn labeled(id: impl Into<String>, image: ScalarField2D, label: ScalarField2D) -> Result<Self> {
        image.ensure_same_dims(&label)?;
        Ok(Self {
            id: id.into(),
            image,
            label: Some(label),
        })
    }

    pub fn unlabeled(id: impl Into<String>, image: ScalarField2D) -> Self {
        Self {
            id: id.into(),
            image,
            label: None,
        }
    }

    pub fn require_label(&self) -> Result<&ScalarField2D> {
        self.label
            .as_ref()
            .ok_or_else(|| Error::config("samples", format!("sample {} has no label", self.id)))
    }
}

/// One cached training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEntry {
    pub id: String,
    pub image: ScalarField2D,
    pub target: ScalarField2D,
}

/// Bounded FIFO of training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<ReplayEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    /// Appends `entry`, first evicting and returning the oldest entry if the
    /// buffer is already full.
    pub fn push(&mut self, entry: ReplayEntry) -> Option<ReplayEntry> {
        let evicted = if self.is_full() { self.entries.pop_front() } else { None };
        self.entries.push_back(entry);
        evicted
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    #[default]
    Dice,
    Iou,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Passes over the labeled data during pre-training.
    pub max_epochs: usize,
    /// Passes over the interleaved stream during joint training.
    pub joint_epochs: usize,
    pub buffer_capacity: usize,
    /// Fraction of stream positions taken by labeled samples.
    pub labeled_unlabeled_mix: f64,
    pub levelset_iters_per_refine: usize,
    pub energy: EnergyParams,
    pub edge_weight: EdgeWeightMode,
    /// Attach a shape prior built from the first labeled mask.
    pub shape_prior: bool,
    pub adadelta: AdadeltaConfig,
    pub seed: u64,
    pub validation_metric: ValidationMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 12,
            max_epochs: 500,
            joint_epochs: 50,
            buffer_capacity: 12,
            labeled_unlabeled_mix: 0.5,
            levelset_iters_per_refine: 50,
            energy: refinement_energy(),
            edge_weight: EdgeWeightMode::default(),
            shape_prior: true,
            adadelta: AdadeltaConfig::default(),
            seed: 0,
            validation_metric: ValidationMetric::Dice,
        }
    }
}

/// Level-set weights used inside the pipeline: a larger step and stronger
/// smoothing than the bare [`EnergyParams`] defaults so that a 50-iteration
/// budget visibly moves the contour, and a weak prior because a single
/// reference mask only roughly matches other instances.
pub fn refinement_energy() -> EnergyParams {
    EnergyParams {
        mu: 1.0,
        beta: 0.1,
        dt: 1.0,
        ..EnergyParams::default()
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("levelset_iters_per_refine", self.levelset_iters_per_refine),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.labeled_unlabeled_mix) {
            return Err(Error::config("labeled_unlabeled_mix", "must lie in [0, 1]"));
        }
        if !(self.adadelta.rho > 0.0 && self.adadelta.rho < 1.0) {
            return Err(Error::config("adadelta.rho", "must lie in (0, 1)"));
        }
        if !(self.adadelta.epsilon > 0.0) {
            return Err(Error::config("adadelta.epsilon", "must be positive"));
        }
        self.energy.validate()
    }

    /// Level-set settings used for pseudo-labels and post-processing.
    pub fn refine_params(&self) -> RefineParams {
        RefineParams {
            energy: EnergyParams {
                max_iters: self.levelset_iters_per_refine,
                ..self.energy
            },
            edge_weight: self.edge_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    pub energy: EnergyParams,
    pub edge_weight: EdgeWeightMode,
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    /// `train` or `val`.
    pub split: String,
    pub loss: f64,
    pub dice: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub rows: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_metric: f64,
    /// Optimizer steps taken.
    pub updates: usize,
    /// Replay-buffer evictions (joint training only).
    pub evictions: usize,
}

impl History {
    pub fn validation(&self) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(|r| r.split == "val")
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.split == "train").map(|r| r.loss).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,split,loss,dice,iou")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.split, r.loss, opt(r.dice), opt(r.iou))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Mean loss and overlap of the network's thresholded output on `samples`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub dice: f64,
    pub iou: f64,
}

impl Evaluation {
    fn metric(&self, m: ValidationMetric) -> f64 {
        match m {
            ValidationMetric::Dice => self.dice,
            ValidationMetric::Iou => self.iou,
        }
    }
}

pub fn evaluate(model: &FcnModel, samples: &[Sample]) -> Result<Evaluation> {
    let per: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let label = s.require_label()?;
            let p = predict(model, &s.image)?;
            let counts = metrics::overlap(&levelset::threshold(&p, 0.5), label)?;
            Ok((fcn::cross_entropy(&p, label)?, counts.dice(), counts.iou()))
        })
        .collect::<Result<_>>()?;
    let n = per.len().max(1) as f64;
    Ok(Evaluation {
        loss: per.iter().map(|v| v.0).sum::<f64>() / n,
        dice: per.iter().map(|v| v.1).sum::<f64>() / n,
        iou: per.iter().map(|v| v.2).sum::<f64>() / n,
    })
}

/// Network probability map, padding the image to the subsampling factor
/// and cropping the result back.
pub fn predict(model: &FcnModel, image: &ScalarField2D) -> Result<ScalarField2D> {
    let (padded, pad) = data_io::pad_to_multiple(image, model.subsampling(), PadMode::Edge);
    Ok(data_io::crop(&model.forward(&padded)?, pad))
}

fn padded_pair(model: &FcnModel, image: &ScalarField2D, target: &ScalarField2D) -> (ScalarField2D, ScalarField2D) {
    let s = model.subsampling();
    (
        data_io::pad_to_multiple(image, s, PadMode::Edge).0,
        data_io::pad_to_multiple(target, s, PadMode::Zero).0,
    )
}

/// Mean loss and gradient over `pairs`, computed in parallel and reduced in
/// slice order.
fn batch_gradient<'a>(model: &FcnModel, pairs: &[(&'a ScalarField2D, &'a ScalarField2D)]) -> Result<(f64, Gradients)> {
    let per: Vec<(f64, Gradients)> = pairs
        .par_iter()
        .map(|(img, target)| {
            let (img, target) = padded_pair(model, img, target);
            model.backward_field(&img, &target)
        })
        .collect::<Result<_>>()?;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / per.len() as f64;
    let grads: Vec<Gradients> = per.into_iter().map(|p| p.1).collect();
    Ok((loss, Gradients::mean(&grads).expect("non-empty batch")))
}

fn check_update(model: &FcnModel, step: usize) -> Result<()> {
    if model.params().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalInstability {
            term: "network update",
            iteration: step,
        })
    }
}

/// Seeded permutation of `0..n`; `stream` separates independent orderings.
pub fn epoch_order(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

struct Selector {
    metric: ValidationMetric,
    best: Option<(f64, FcnModel)>,
}

impl Selector {
    fn observe(&mut self, epoch: usize, model: &FcnModel, val: &[Sample], history: &mut History) -> Result<()> {
        let e = evaluate(model, val)?;
        history.rows.push(HistoryRow {
            epoch,
            split: "val".into(),
            loss: e.loss,
            dice: Some(e.dice),
            iou: Some(e.iou),
        });
        let m = e.metric(self.metric);
        if self.best.as_ref().is_none_or(|(b, _)| m > *b) {
            history.best_epoch = epoch;
            history.best_metric = m;
            self.best = Some((m, model.clone()));
        }
        Ok(())
    }

    fn finish(self) -> FcnModel {
        self.best.expect("observed at least once").1
    }
}

/// Supervised training on `labeled`, returning the checkpoint with the best
/// validation score. Epoch 0 is the untouched input model.
pub fn pretrain(model: &FcnModel, labeled: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(FcnModel, History)> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::config("labeled", "pre-training needs at least one labeled sample"));
    }
    if val.is_empty() {
        return Err(Error::config("val", "model selection needs at least one validation sample"));
    }
    let targets: Vec<&ScalarField2D> = labeled.iter().map(Sample::require_label).collect::<Result<_>>()?;
    let mut model = model.clone();
    let mut history = History::default();
    let mut sel = Selector {
        metric: cfg.validation_metric,
        best: None,
    };
    sel.observe(0, &model, val, &mut history)?;
    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(labeled.len(), cfg.seed, 2 * epoch as u64);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let pairs: Vec<_> = chunk.iter().map(|&i| (&labeled[i].image, targets[i])).collect();
            let (loss, g) = batch_gradient(&model, &pairs)?;
            adadelta_update(&mut model, &g, &cfg.adadelta);
            history.updates += 1;
            check_update(&model, history.updates)?;
            losses.push(loss);
        }
        history.rows.push(HistoryRow {
            epoch,
            split: "train".into(),
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            dice: None,
            iou: None,
        });
        sel.observe(epoch, &model, val, &mut history)?;
    }
    Ok((sel.finish(), history))
}

/// Prior built from a mask, aligned to the image centre.
pub fn shape_context_from_mask(mask: &ScalarField2D) -> Result<ShapeContext> {
    let model = ShapeModel::from_mask(mask)?;
    Ok(ShapeContext::new(model, AffineParams::centered(mask.width(), mask.height())))
}

/// Level-set refinement of a probability map. A prior, when given, is
/// first aligned to the map by moments.
pub fn refine_map(
    image: &ScalarField2D,
    map: &ScalarField2D,
    shape_ctx: Option<&ShapeContext>,
    params: &RefineParams,
) -> Result<(ScalarField2D, EnergyTrace)> {
    let probs = RegionProbabilities::from_object_map(map, params.energy.p_floor);
    let state = levelset::init_from_probability(map);
    let weight = edge_weight(image, params.edge_weight)?;
    let mut ctx = match shape_ctx {
        Some(c) if params.energy.beta > 0.0 => {
            let mut c = c.clone();
            c.affine = AffineParams::from_moments(&state.phi, &c.model.phi_m, c.affine.pivot);
            Some(c)
        }
        _ => None,
    };
    let energy = EnergyParams {
        beta: if ctx.is_some() { params.energy.beta } else { 0.0 },
        ..params.energy
    };
    let (state, trace) = levelset::evolve(&state, &weight, &probs, ctx.as_mut(), &energy)?;
    Ok((levelset::extract_mask(&state), trace))
}

/// Pseudo-label of one image: network map refined by the level set.
pub fn refine_pseudolabel(
    model: &FcnModel,
    image: &ScalarField2D,
    shape_ctx: Option<&ShapeContext>,
    params: &RefineParams,
) -> Result<(ScalarField2D, EnergyTrace)> {
    let map = predict(model, image)?;
    refine_map(image, &map, shape_ctx, params)
}

/// Positions of labeled samples in a stream of `len` slots with labeled
/// share `mix`, spread evenly.
fn stream_pattern(len: usize, mix: f64) -> Vec<bool> {
    (0..len)
        .map(|j| ((j + 1) as f64 * mix + 1e-12).floor() > (j as f64 * mix + 1e-12).floor())
        .collect()
}

fn stream_len(labeled: usize, unlabeled: usize, mix: f64) -> usize {
    if mix >= 1.0 || unlabeled == 0 {
        labeled
    } else if mix <= 0.0 {
        unlabeled
    } else {
        let a = (labeled as f64 / mix - 1e-9).ceil() as usize;
        let b = (unlabeled as f64 / (1.0 - mix) - 1e-9).ceil() as usize;
        a.max(b)
    }
}

/// Semi-supervised training with the replay buffer. Pseudo-labels are
/// recomputed at the start of every epoch from the model at that point.
pub fn joint_train(
    model: &FcnModel,
    labeled: &[Sample],
    unlabeled: &[Sample],
    val: &[Sample],
    shape_ctx: Option<&ShapeContext>,
    cfg: &TrainConfig,
) -> Result<(FcnModel, History)> {
    cfg.validate()?;
    if val.is_empty() {
        return Err(Error::config("val", "model selection needs at least one validation sample"));
    }
    let mut mix = cfg.labeled_unlabeled_mix;
    if unlabeled.is_empty() {
        log::warn!("no unlabeled samples; joint training falls back to supervised updates");
        mix = 1.0;
    }
    if labeled.is_empty() && mix > 0.0 {
        return Err(Error::config("labeled", "a positive labeled mix needs labeled samples"));
    }
    let targets: Vec<&ScalarField2D> = labeled.iter().map(Sample::require_label).collect::<Result<_>>()?;
    let refine = cfg.refine_params();

    let mut model = model.clone();
    let mut history = History::default();
    let mut sel = Selector {
        metric: cfg.validation_metric,
        best: None,
    };
    sel.observe(0, &model, val, &mut history)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let len = stream_len(labeled.len(), unlabeled.len(), mix);
    let pattern = stream_pattern(len, mix);

    for epoch in 1..=cfg.joint_epochs {
        let lab_order = epoch_order(labeled.len(), cfg.seed, 2 * epoch as u64);
        let unl_order = epoch_order(unlabeled.len(), cfg.seed, 2 * epoch as u64 + 1);
        let pseudo: Vec<ScalarField2D> = if pattern.iter().any(|l| !l) {
            let snapshot = &model;
            unlabeled
                .par_iter()
                .map(|s| refine_pseudolabel(snapshot, &s.image, shape_ctx, &refine).map(|r| r.0))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let (mut li, mut ui) = (0, 0);
        let mut losses = Vec::new();
        for &is_labeled in &pattern {
            let entry = if is_labeled {
                let i = lab_order[li % labeled.len()];
                li += 1;
                ReplayEntry {
                    id: labeled[i].id.clone(),
                    image: labeled[i].image.clone(),
                    target: targets[i].clone(),
                }
            } else {
                let i = unl_order[ui % unlabeled.len()];
                ui += 1;
                ReplayEntry {
                    id: unlabeled[i].id.clone(),
                    image: unlabeled[i].image.clone(),
                    target: pseudo[i].clone(),
                }
            };
            if buffer.push(entry).is_some() {
                history.evictions += 1;
            }
            if buffer.is_full() {
                let pairs: Vec<_> = buffer.iter().map(|e| (&e.image, &e.target)).collect();
                let (loss, g) = batch_gradient(&model, &pairs)?;
                adadelta_update(&mut model, &g, &cfg.adadelta);
                history.updates += 1;
                check_update(&model, history.updates)?;
                losses.push(loss);
            }
        }
        history.rows.push(HistoryRow {
            epoch,
            split: "train".into(),
            loss: if losses.is_empty() { f64::NAN } else { losses.iter().sum::<f64>() / losses.len() as f64 },
            dice: None,
            iou: None,
        });
        sel.observe(epoch, &model, val, &mut history)?;
    }
    Ok((sel.finish(), history))
}

/// Probability map and final mask of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probability: ScalarField2D,
    pub mask: ScalarField2D,
}

/// Forward pass, optionally followed by level-set refinement of the map.
pub fn infer(
    model: &FcnModel,
    image: &ScalarField2D,
    use_levelset: bool,
    shape_ctx: Option<&ShapeContext>,
    params: &RefineParams,
) -> Result<Inference> {
    let probability = predict(model, image)?;
    let mask = if use_levelset {
        refine_map(image, &probability, shape_ctx, params)?.0
    } else {
        levelset::threshold(&probability, 0.5)
    };
    Ok(Inference { probability, mask })
}

/// Per-image scores of one model on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    /// `(sample id, dice, iou)`.
    pub per_sample: Vec<(String, f64, f64)>,
}

impl ModelScores {
    pub fn mean_dice(&self) -> f64 {
        self.per_sample.iter().map(|s| s.1).sum::<f64>() / self.per_sample.len().max(1) as f64
    }

    pub fn mean_iou(&self) -> f64 {
        self.per_sample.iter().map(|s| s.2).sum::<f64>() / self.per_sample.len().max(1) as f64
    }
}

/// Scores predicted masks against each sample's label.
pub fn score_masks(name: &str, samples: &[Sample], masks: &[ScalarField2D]) -> Result<ModelScores> {
    let per_sample = samples
        .iter()
        .zip(masks)
        .map(|(s, m)| {
            let c = metrics::overlap(m, s.require_label()?)?;
            Ok((s.id.clone(), c.dice(), c.iou()))
        })
        .collect::<Result<_>>()?;
    Ok(ModelScores {
        model: name.to_string(),
        per_sample,
    })
}

/// Scores `model` on `samples`, with or without level-set refinement.
pub fn score_model(
    name: &str,
    model: &FcnModel,
    samples: &[Sample],
    use_levelset: bool,
    shape_ctx: Option<&ShapeContext>,
    params: &RefineParams,
) -> Result<ModelScores> {
    let masks: Vec<ScalarField2D> = samples
        .par_iter()
        .map(|s| infer(model, &s.image, use_levelset, shape_ctx, params).map(|r| r.mask))
        .collect::<Result<_>>()?;
    score_masks(name, samples, &masks)
}

pub const PRETRAINED_FCN: &str = "pretrained_fcn";
pub const POSTPROCESSED_LEVELSET: &str = "postprocessing_levelset";
pub const JOINT_FCN: &str = "joint_fcn";
pub const FCN_LEVELSET: &str = "fcn_levelset";
pub const BASELINE_FCN: &str = "baseline_fcn";

/// Trained networks of the five-model comparison.
#[derive(Debug, Clone)]
pub struct ProtocolModels {
    pub pretrained: FcnModel,
    pub joint: FcnModel,
    pub baseline: FcnModel,
    pub pretrain_history: History,
    pub joint_history: History,
    pub baseline_history: History,
}

/// Trains the pre-trained, jointly trained and fully supervised networks.
/// `semi` carries the partial labels; `full` is the same partition with
/// every training sample labeled.
pub fn train_protocol_models(
    init: &FcnModel,
    semi: &Dataset,
    full: &Dataset,
    shape_ctx: Option<&ShapeContext>,
    cfg: &TrainConfig,
) -> Result<ProtocolModels> {
    let (pretrained, pretrain_history) = pretrain(init, &semi.train_labeled, &semi.val, cfg)?;
    let (joint, joint_history) = joint_train(&pretrained, &semi.train_labeled, &semi.train_unlabeled, &semi.val, shape_ctx, cfg)?;
    let (baseline, baseline_history) = pretrain(init, &full.train_labeled, &full.val, cfg)?;
    Ok(ProtocolModels {
        pretrained,
        joint,
        baseline,
        pretrain_history,
        joint_history,
        baseline_history,
    })
}

/// Test scores of the five compared models, in reporting order.
pub fn evaluate_protocol(
    models: &ProtocolModels,
    test: &[Sample],
    shape_ctx: Option<&ShapeContext>,
    params: &RefineParams,
) -> Result<Vec<ModelScores>> {
    Ok(vec![
        score_model(PRETRAINED_FCN, &models.pretrained, test, false, shape_ctx, params)?,
        score_model(POSTPROCESSED_LEVELSET, &models.pretrained, test, true, shape_ctx, params)?,
        score_model(JOINT_FCN, &models.joint, test, false, shape_ctx, params)?,
        score_model(FCN_LEVELSET, &models.joint, test, true, shape_ctx, params)?,
        score_model(BASELINE_FCN, &models.baseline, test, false, shape_ctx, params)?,
    ])
}

/// `model,sample_id,dice,iou` rows per image, then one `mean` row per model.
pub fn write_results_csv<W: Write>(scores: &[ModelScores], mut out: W) -> std::io::Result<()> {
    writeln!(out, "model,sample_id,dice,iou")?;
    for s in scores {
        for (id, d, i) in &s.per_sample {
            writeln!(out, "{},{},{},{}", s.model, id, d, i)?;
        }
    }
    for s in scores {
        writeln!(out, "{},mean,{},{}", s.model, s.mean_dice(), s.mean_iou())?;
    }
    Ok(())
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest<C> {
    pub config: C,
    pub seed: u64,
    pub splits: data_io::SplitIds,
    pub best_epoch: usize,
}
