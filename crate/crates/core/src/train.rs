//! Training loop: per-step gradient averaging over a batch of sampled seed
//! windows, Adam with warm-up and stepwise decay, periodic checkpoints and
//! a CSV loss log.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::KvConfig;
use crate::data::{sample_seed_window, CityDataset, SeedWindow, TrafficMovie, CHANNELS, HORIZON_OFFSETS};
use crate::error::{Error, Result};
use crate::graph::RoadGraph;
use crate::model::{CityGraphs, Model, OUTPUT_DIM};
use crate::tensor::{AdamConfig, AdamState, LrSchedule, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    /// Samples whose gradients are averaged per optimizer step.
    pub batch: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub checkpoint_every: u64,
    pub keep_checkpoints: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 16,
            seed: 0,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            checkpoint_every: 500,
            keep_checkpoints: 3,
        }
    }
}

impl TrainConfig {
    pub fn from_kv(kv: &mut KvConfig) -> Result<Self> {
        let d = TrainConfig::default();
        let s = d.schedule;
        let c = TrainConfig {
            steps: kv.get("steps", d.steps)?,
            batch: kv.get("batch", d.batch)?,
            seed: kv.get("seed", d.seed)?,
            schedule: LrSchedule {
                warmup_steps: kv.get("warmup_steps", s.warmup_steps)?,
                base_lr: kv.get("base_lr", s.base_lr)?,
                decay_rate: kv.get("decay_rate", s.decay_rate)?,
                decay_interval: kv.get("decay_interval", s.decay_interval)?,
                min_lr: kv.get("min_lr", s.min_lr)?,
            },
            adam: AdamConfig {
                beta1: kv.get("beta1", d.adam.beta1)?,
                beta2: kv.get("beta2", d.adam.beta2)?,
                eps: kv.get("eps", d.adam.eps)?,
            },
            checkpoint_every: kv.get("checkpoint_every", d.checkpoint_every)?,
            keep_checkpoints: kv.get("keep_checkpoints", d.keep_checkpoints)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    /// Batch mean of the normalized-scale node MSE, before the update.
    pub train_mse: f64,
}

/// Mean of `(255 * pred - target)^2` over every element.
pub fn mse_metric(pred: &[f64], target: &[u8]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Invalid(format!(
            "prediction has {} elements, target {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Invalid("empty prediction".into()));
    }
    let sse: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = 255.0 * p - f64::from(t);
            d * d
        })
        .sum();
    Ok(sse / pred.len() as f64)
}

/// `[6, H, W, 8]` frames, each the element-wise mean of the seed frames.
pub fn naive_average_predict(movie: &TrafficMovie, start: usize, in_frames: usize) -> Result<Vec<f64>> {
    if in_frames == 0 || start + in_frames > movie.frames() {
        return Err(Error::Invalid(format!(
            "seed window {start}..{} exceeds movie length {}",
            start + in_frames,
            movie.frames()
        )));
    }
    let n = movie.frame(0).len();
    let mut mean = vec![0.0; n];
    for t in start..start + in_frames {
        for (m, &v) in mean.iter_mut().zip(movie.frame(t)) {
            *m += f64::from(v);
        }
    }
    let scale = 1.0 / (255.0 * in_frames as f64);
    mean.iter_mut().for_each(|m| *m *= scale);
    let mut out = Vec::with_capacity(n * HORIZON_OFFSETS.len());
    for _ in HORIZON_OFFSETS {
        out.extend_from_slice(&mean);
    }
    Ok(out)
}

/// `[N, 48]` normalized targets at the node pixels.
pub fn node_targets(movie: &TrafficMovie, start: usize, in_frames: usize, graph: &RoadGraph) -> Result<Tensor> {
    let last_seed = start + in_frames - 1;
    let mut data = Vec::with_capacity(graph.node_count() * OUTPUT_DIM);
    for &(r, c) in graph.positions() {
        for off in HORIZON_OFFSETS {
            let t = last_seed + off;
            if t >= movie.frames() {
                return Err(Error::Invalid(format!("target frame {t} beyond movie length {}", movie.frames())));
            }
            data.extend(movie.pixel(t, r, c).iter().map(|&v| f64::from(v) / 255.0));
        }
    }
    debug_assert_eq!(data.len(), graph.node_count() * HORIZON_OFFSETS.len() * CHANNELS);
    Ok(Tensor::new(vec![graph.node_count(), OUTPUT_DIM], data)?)
}

/// A city prepared for training: its data plus the graph hierarchy.
pub struct TrainCity<'a> {
    pub data: &'a CityDataset,
    pub graphs: CityGraphs,
}

/// Loss and parameter gradients of one seed window.
pub fn sample_gradient(model: &Model, city: &TrainCity<'_>, window: &SeedWindow) -> Result<(f64, Vec<Tensor>)> {
    let movie = &city.data.days[window.day].movie;
    let in_frames = model.config().in_frames;
    let v0 = model.node_inputs(&city.graphs, movie, window.start)?;
    let target = node_targets(movie, window.start, in_frames, city.graphs.graph())?;
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let pred = model.forward(&mut tape, &bound, &city.graphs, &v0, window.timestamp)?;
    let target = tape.constant(target);
    let loss = tape.squared_error(pred, target)?;
    let grads = tape.backward(loss)?;
    let mut acc = model.params().zeros_like();
    bound.accumulate_grads(&grads, &mut acc);
    Ok((tape.value(loss).item().expect("scalar loss"), acc))
}

/// Averaged loss and gradient over a batch. Per-sample work may run in
/// parallel; the reduction runs in batch order so results do not depend on
/// the thread count.
pub fn batch_gradient(model: &Model, cities: &[TrainCity<'_>], batch: &[(usize, SeedWindow)]) -> Result<(f64, Vec<Tensor>)> {
    let per_sample: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|(c, w)| sample_gradient(model, &cities[*c], w))
        .collect::<Result<_>>()?;
    let mut grads = model.params().zeros_like();
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        for (a, b) in grads.iter_mut().zip(g) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|x| *x *= inv);
    }
    Ok((loss * inv, grads))
}

fn grad_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(|g| g.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

fn numeric_failure(model: &Model, step: u64, lr: f64, loss: f64, grads: &[Tensor]) -> Error {
    let mut detail = format!("loss {loss}; per-tensor grad norms:");
    for ((name, _), g) in model.params().iter().zip(grads) {
        detail.push_str(&format!(" {name}={:.3e}", g.l2_norm()));
    }
    Error::Numeric {
        step,
        lr,
        grad_norm: grad_norm(grads),
        msg: detail,
    }
}

/// Where training writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    /// Final checkpoint; periodic ones go next to it as `<name>.step<N>`.
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

impl TrainOutputs {
    pub fn beside(checkpoint: &Path) -> Self {
        TrainOutputs {
            checkpoint: checkpoint.to_path_buf(),
            loss_log: sibling(checkpoint, "loss.csv"),
        }
    }

    fn periodic(&self, step: u64) -> PathBuf {
        sibling(&self.checkpoint, &format!("step{step}"))
    }
}

/// `dir/name.suffix` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    path.with_file_name(name)
}

/// Trains `model` in place and returns the loss log.
pub fn train(
    model: &mut Model,
    datasets: &[CityDataset],
    cfg: &TrainConfig,
    outputs: Option<&TrainOutputs>,
    mut progress: impl FnMut(&LossRecord),
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if datasets.is_empty() || datasets.iter().any(|d| d.days.is_empty()) {
        return Err(Error::Invalid("training needs at least one city with at least one day".into()));
    }
    let cities = datasets
        .iter()
        .map(|d| {
            Ok(TrainCity {
                data: d,
                graphs: model.city_graphs(&d.street_map)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let in_frames = model.config().in_frames;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params(), cfg.adam);
    let mut log = Vec::with_capacity(cfg.steps as usize);
    let mut csv = match outputs {
        Some(o) => {
            let mut f = fs::File::create(&o.loss_log).map_err(|e| Error::io(&o.loss_log, e))?;
            writeln!(f, "step,lr,train_mse").map_err(|e| Error::io(&o.loss_log, e))?;
            Some(f)
        }
        None => None,
    };
    let mut kept: Vec<PathBuf> = Vec::new();

    for step in 0..cfg.steps {
        let lr = cfg.schedule.lr_at(step);
        let mut batch = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let c = rng.random_range(0..cities.len());
            batch.push((c, sample_seed_window(cities[c].data, &mut rng, in_frames)?));
        }
        let (loss, grads) = batch_gradient(model, &cities, &batch)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            return Err(numeric_failure(model, step, lr, loss, &grads));
        }
        let grads: Vec<Option<Tensor>> = grads.into_iter().map(Some).collect();
        adam.update(model.params_mut(), &grads, lr)?;

        let rec = LossRecord {
            step,
            lr,
            train_mse: loss,
        };
        if let (Some(f), Some(o)) = (csv.as_mut(), outputs) {
            writeln!(f, "{},{:e},{:e}", rec.step, rec.lr, rec.train_mse).map_err(|e| Error::io(&o.loss_log, e))?;
        }
        progress(&rec);
        log.push(rec);

        let done = step + 1;
        if let Some(o) = outputs {
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps {
                let path = o.periodic(done);
                model.save(&path)?;
                kept.push(path);
                while kept.len() > cfg.keep_checkpoints {
                    let old = kept.remove(0);
                    fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
                }
            }
        }
    }
    if let Some(o) = outputs {
        if let Some(f) = csv.as_mut() {
            f.flush().map_err(|e| Error::io(&o.loss_log, e))?;
        }
        model.save(&o.checkpoint)?;
    }
    Ok(log)
}
