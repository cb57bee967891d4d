use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auroc, metrics, DEFAULT_THRESHOLD};
use super::{load_manifest_graphs, split, Manifest, Model, PipelineError, Result};
use crate::analytics::{build_vocab, encode, GraphSample, OpVocabulary};
use crate::depgraph::{DepGraph, Label};
use crate::sage::{backward, forward_sampled, init_params, Adam, AdamHyper, ArchConfig, ModelParams};
use crate::seed::mix;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_SAMPLING: u64 = 3;

/// Which graphs contribute opcodes to the vocabulary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabScope {
    /// Training split only, so evaluation never sees test-only opcodes.
    #[default]
    Train,
    /// Every graph in the manifest.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// `vocab_size` is replaced by the size of the built vocabulary.
    pub arch: ArchConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub split_fraction: f64,
    pub vocab_scope: VocabScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::new(1),
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed: 42,
            split_fraction: 0.8,
            vocab_scope: VocabScope::Train,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split fraction must lie strictly between 0 and 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub test_acc: f64,
    /// Absent when the test split holds a single class.
    pub test_auroc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub train: Manifest,
    pub test: Manifest,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,test_acc,test_auroc";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in history {
        let auroc = r.test_auroc.map(|a| format!("{a:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.6},{:.6},{}", r.epoch, r.train_loss, r.test_acc, auroc);
    }
    out
}

pub fn train(manifest: &Manifest, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(manifest, cfg, |_| {})
}

/// Trains and calls `on_epoch` after each epoch's evaluation.
pub fn train_with(
    manifest: &Manifest,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, test_set) = split(manifest, cfg.split_fraction, cfg.seed)?;
    if test_set.is_empty() {
        return Err(PipelineError::TooFewSamples("the test split is empty".into()));
    }
    let train_graphs = load_manifest_graphs(&train_set)?;
    let test_graphs = load_manifest_graphs(&test_set)?;

    let vocab = match cfg.vocab_scope {
        VocabScope::Train => build_vocab(&train_graphs)?,
        VocabScope::All => build_vocab(train_graphs.iter().chain(&test_graphs))?,
    };
    let train_samples = encode_all(&train_graphs, &vocab)?;
    let test_samples = encode_all(&test_graphs, &vocab)?;
    drop((train_graphs, test_graphs));

    let arch = ArchConfig {
        vocab_size: vocab.len(),
        ..cfg.arch.clone()
    };
    let mut model = Model {
        params: init_params(&arch, mix(cfg.seed, STREAM_INIT))?,
        vocab,
    };
    let mut opt = Adam::new(
        &model.params,
        AdamHyper {
            lr: cfg.lr,
            ..AdamHyper::default()
        },
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, STREAM_SHUFFLE));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, STREAM_SAMPLING));
    let test_labels: Vec<Label> = test_samples.iter().map(label_of).collect();

    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<GraphSample> = idx.iter().map(|&i| train_samples[i].clone()).collect();
            let labels: Vec<Label> = batch.iter().map(label_of).collect();
            loss_sum += step(&mut model.params, &mut opt, &batch, &labels, &mut sample_rng)?
                * batch.len() as f64;
        }
        let scores = model.score_samples(&test_samples)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_samples.len() as f64,
            test_acc: metrics(&scores, &test_labels, DEFAULT_THRESHOLD).acc,
            test_auroc: auroc(&scores, &test_labels).ok(),
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        model,
        history,
        train: train_set,
        test: test_set,
    })
}

fn label_of(s: &GraphSample) -> Label {
    s.label.expect("manifest graphs carry labels")
}

fn encode_all(graphs: &[DepGraph], vocab: &OpVocabulary) -> Result<Vec<GraphSample>> {
    graphs
        .par_iter()
        .map(|g| {
            encode(g, vocab).map_err(|source| PipelineError::Encode {
                path: g.origin.clone(),
                source,
            })
        })
        .collect()
}

/// One forward/backward/update; returns the batch loss.
fn step(
    params: &mut ModelParams,
    opt: &mut Adam,
    batch: &[GraphSample],
    labels: &[Label],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let cache = forward_sampled(params, batch, rng)?;
    let (loss, grads) = backward(params, &cache, labels)?;
    drop(cache);
    opt.step(params, &grads)?;
    Ok(loss)
}
