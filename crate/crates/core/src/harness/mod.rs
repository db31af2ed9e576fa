//! Training loop, the evaluation-mode training-loss probe, and experiment
//! runners.

mod experiment;
mod report;

pub use experiment::{expand_grid, run_experiment, trial_seed, ExperimentKind, ExperimentSpec, Grid, GridPoint, SweepPoint};
pub use report::{catalog_hash, ExperimentReport, RankingRow, ReportMetadata};

use crate::data::{make_synthetic_dataset, Dataset, DatasetSpec, Split};
use crate::error::{Error, Result};
use crate::model::{Mode, ToyBatch, ToyTransformer, ToyTransformerConfig};
use crate::optim::{lr_at, AdamW, AdamWConfig, LrSchedule};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// Loss multiple over the step-10 loss that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 50.0;
/// 1-based step whose loss anchors the divergence cap.
pub const DIVERGENCE_ANCHOR_STEP: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Generate(DatasetSpec),
    Files { train: PathBuf, val: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Generate(DatasetSpec::default())
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSource::Generate(spec) => Ok((
                make_synthetic_dataset(spec, Split::Train)?,
                make_synthetic_dataset(spec, Split::Val)?,
            )),
            DatasetSource::Files { train, val } => Ok((Dataset::load(train)?, Dataset::load(val)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub model: ToyTransformerConfig,
    pub optimizer: AdamWConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub lr_schedule: LrSchedule,
    pub dataset: DatasetSource,
    pub master_seed: u64,
    /// Cap on the number of batches used by the evaluation-mode training
    /// loss; `None` covers the whole training split.
    pub eval_batches: Option<usize>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            model: ToyTransformerConfig::default(),
            optimizer: AdamWConfig::default(),
            steps: 1000,
            batch_size: 64,
            warmup_steps: 50,
            lr_schedule: LrSchedule::Cosine,
            dataset: DatasetSource::default(),
            master_seed: 0,
            eval_batches: None,
        }
    }
}

impl TrainSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self.model.violations().into_iter().map(|e| format!("model: {e}")).collect();
        v.extend(self.optimizer.violations());
        if self.steps == 0 {
            v.push("steps must be >= 1".into());
        }
        if self.batch_size == 0 {
            v.push("batch_size must be >= 1".into());
        }
        if self.eval_batches == Some(0) {
            v.push("eval_batches must be >= 1 when set".into());
        }
        if let DatasetSource::Generate(d) = &self.dataset {
            v.extend(d.violations());
            if d.n_train < 2 * self.batch_size {
                v.push(format!(
                    "dataset.n_train ({}) must be at least 2 * batch_size ({})",
                    d.n_train,
                    2 * self.batch_size
                ));
            }
            if d.seq_len != self.model.seq_len || d.input_dim != self.model.input_dim {
                v.push(format!(
                    "dataset tokens [{}, {}] do not match model seq_len/input_dim [{}, {}]",
                    d.seq_len, d.input_dim, self.model.seq_len, self.model.input_dim
                ));
            }
            if d.n_classes != self.model.n_classes {
                v.push(format!(
                    "dataset.n_classes ({}) != model.n_classes ({})",
                    d.n_classes, self.model.n_classes
                ));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Serializes non-finite floats as `null` and reads `null` back as NaN.
pub(crate) mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&x.is_finite().then_some(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let v = Vec::<Option<f64>>::deserialize(d)?;
            Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: usize,
    /// Function or slot label of the grid point.
    pub label: String,
    pub sweep: Option<SweepPoint>,
    pub repeat: usize,
    pub seed: u64,
    /// Evaluation-mode training loss before the first update.
    #[serde(with = "nullable")]
    pub initial_loss: f64,
    /// Training-mode loss of the last completed step.
    #[serde(with = "nullable")]
    pub final_train_loss: f64,
    /// `None` for diverged trials.
    pub eval_mode_train_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub diverged: bool,
    pub steps_completed: usize,
    #[serde(with = "nullable::vec")]
    pub loss_history: Vec<f64>,
    /// Seconds; kept out of the serialized result so reports stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Index of the first loss that is non-finite or above the cap anchored at the
/// step-10 loss.
pub fn divergence_point(history: &[f64]) -> Option<usize> {
    let anchor = history.get(DIVERGENCE_ANCHOR_STEP - 1).copied();
    history.iter().enumerate().find_map(|(i, &l)| {
        let over = match anchor {
            Some(a) if i >= DIVERGENCE_ANCHOR_STEP => l > DIVERGENCE_FACTOR * a,
            _ => false,
        };
        (!l.is_finite() || over).then_some(i)
    })
}

pub struct TrainOutcome {
    pub result: TrialResult,
    pub model: ToyTransformer,
}

/// Trains the model described by `spec` on the dataset it names.
pub fn train(spec: &TrainSpec) -> Result<TrainOutcome> {
    spec.validate()?;
    let (train_set, val_set) = spec.dataset.load()?;
    train_on(spec, &train_set, &val_set, &spec.model.norm_slot.label(), None, 0, 0)
}

/// Training with explicit datasets; the trial bookkeeping fields are copied
/// into the result.
pub fn train_on(
    spec: &TrainSpec,
    train_set: &Dataset,
    val_set: &Dataset,
    label: &str,
    sweep: Option<SweepPoint>,
    trial_id: usize,
    repeat: usize,
) -> Result<TrainOutcome> {
    spec.validate()?;
    let started = Instant::now();
    check_dataset(&spec.model, train_set)?;
    check_dataset(&spec.model, val_set)?;
    if train_set.len() < spec.batch_size {
        return Err(Error::Contract(format!(
            "training split has {} examples, fewer than batch_size {}",
            train_set.len(),
            spec.batch_size
        )));
    }
    let mut model = ToyTransformer::build(spec.model.clone())?;
    let initial_loss = eval_mode_train_loss(&model, train_set, spec.batch_size, spec.eval_batches)?;

    let shapes: Vec<Vec<usize>> = model.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let decay = shapes.iter().map(|s| s.len() == 2).collect();
    let mut opt = AdamW::new(spec.optimizer, &shape_refs, decay)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::with_capacity(spec.steps);
    let mut diverged = false;
    for step in 0..spec.steps {
        if cursor + spec.batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch = train_set.batch(&order[cursor..cursor + spec.batch_size]);
        cursor += spec.batch_size;
        let (loss, grads) = model.loss_and_grads(&batch, Mode::Train(&mut rng))?;
        history.push(loss);
        if divergence_point(&history).is_some() {
            diverged = true;
            break;
        }
        let lr = lr_at(spec.lr_schedule, spec.optimizer.lr, step, spec.steps, spec.warmup_steps);
        opt.step(&mut model.params_mut(), &grads, lr)?;
    }

    let (eval_loss, val_acc) = if diverged {
        (None, None)
    } else {
        let l = eval_mode_train_loss(&model, train_set, spec.batch_size, spec.eval_batches)?;
        (Some(l).filter(|v| v.is_finite()), Some(accuracy(&model, val_set, spec.batch_size)?))
    };
    let result = TrialResult {
        trial_id,
        label: label.to_string(),
        sweep,
        repeat,
        seed: spec.master_seed,
        initial_loss,
        final_train_loss: history.last().copied().unwrap_or(f64::NAN),
        eval_mode_train_loss: eval_loss,
        val_accuracy: val_acc,
        diverged,
        steps_completed: history.len(),
        loss_history: history,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { result, model })
}

fn check_dataset(cfg: &ToyTransformerConfig, d: &Dataset) -> Result<()> {
    if d.seq_len() != cfg.seq_len || d.input_dim() != cfg.input_dim {
        return Err(Error::Contract(format!(
            "{} split has tokens [{}, {}], model expects [{}, {}]",
            d.split,
            d.seq_len(),
            d.input_dim(),
            cfg.seq_len,
            cfg.input_dim
        )));
    }
    if d.n_classes > cfg.n_classes {
        return Err(Error::Contract(format!(
            "{} split has {} classes, model has {}",
            d.split, d.n_classes, cfg.n_classes
        )));
    }
    if d.is_empty() {
        return Err(Error::Contract(format!("{} split is empty", d.split)));
    }
    Ok(())
}

fn mean_loss(
    model: &ToyTransformer,
    data: &Dataset,
    batch_size: usize,
    max_batches: Option<usize>,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    check_dataset(model.config(), data)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in data.sequential_batches(batch_size).take(max_batches.unwrap_or(usize::MAX)) {
        let mode = match rng.as_deref_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        total += model.loss(&batch, mode)? * batch.len() as f64;
        count += batch.len();
    }
    Ok(total / count as f64)
}

/// Mean cross-entropy over the training split in evaluation mode: stochastic
/// depth off, batches in storage order, optionally only the first
/// `max_batches` batches.
pub fn eval_mode_train_loss(
    model: &ToyTransformer,
    train_set: &Dataset,
    batch_size: usize,
    max_batches: Option<usize>,
) -> Result<f64> {
    mean_loss(model, train_set, batch_size, max_batches, None)
}

/// The same pass in training mode, with stochastic depth drawn from `rng`.
pub fn train_mode_loss(
    model: &ToyTransformer,
    train_set: &Dataset,
    batch_size: usize,
    max_batches: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    mean_loss(model, train_set, batch_size, max_batches, Some(rng))
}

/// Loads a checkpoint and measures its evaluation-mode training loss.
pub fn eval_mode_train_loss_from_checkpoint(
    path: &std::path::Path,
    train_set: &Dataset,
    batch_size: usize,
    max_batches: Option<usize>,
) -> Result<f64> {
    let model = crate::checkpoint::load(path)?;
    eval_mode_train_loss(&model, train_set, batch_size, max_batches)
}

/// Fraction of correctly classified examples in evaluation mode.
pub fn accuracy(model: &ToyTransformer, data: &Dataset, batch_size: usize) -> Result<f64> {
    check_dataset(model.config(), data)?;
    let mut correct = 0usize;
    for ToyBatch { inputs, labels } in data.sequential_batches(batch_size) {
        let logits = model.logits(&inputs)?;
        let k = logits.shape()[1];
        for (row, &y) in logits.data().chunks(k).zip(&labels) {
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            correct += usize::from(pred == y);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
