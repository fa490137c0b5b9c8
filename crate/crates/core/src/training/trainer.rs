use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{tuple_loss_and_grad, LocalPair, TupleClouds};
use super::optim::{adam_step, OptimizerState};
use super::sample::{eligible_anchors, sample_tuple_from, Sample, TrainingTuple};
use super::TrainConfig;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::geometry::{find_correspondences, sample_correspondences};
use crate::pointcloud::{
    augment_jitter, cap_points, random_rotate_z, remove_ground_ransac, voxel_downsample, write_text_file, PointCloud,
};
use crate::rng;

/// Training-path preprocessing: ground removal, voxel filter, point cap.
pub fn preprocess_train(cloud: &PointCloud, cfg: &TrainConfig, seed: u64) -> PointCloud {
    let mut c = match &cfg.ground {
        Some(g) => remove_ground_ransac(cloud, g, rng::derive(seed, 0)),
        None => cloud.clone(),
    };
    if cfg.voxel_size > 0.0 {
        c = voxel_downsample(&c, cfg.voxel_size);
    }
    cap_points(&c, cfg.max_points, rng::derive(seed, 1))
}

/// Clouds and correspondence sets ready for the objective. `None` when the
/// local loss is active and the anchor and positive share no correspondences.
pub struct PreparedTuple {
    pub clouds: TupleClouds,
    pub local_pairs: Vec<LocalPair>,
}

/// Loads, preprocesses and augments every member of a tuple. Correspondences
/// are found on the preprocessed clouds before augmentation, using the
/// recorded poses refined by ICP; augmentation keeps point order, so the
/// index pairs stay valid.
pub fn prepare_tuple(dataset: &[Sample], tuple: &TrainingTuple, cfg: &TrainConfig, seed: u64) -> Result<Option<PreparedTuple>> {
    let members = tuple.members();
    let pre: Vec<PointCloud> = members
        .par_iter()
        .enumerate()
        .map(|(slot, &idx)| {
            let cloud = dataset[idx].cloud.load()?;
            Ok(preprocess_train(&cloud, cfg, rng::derive2(seed, 1, slot as u64)))
        })
        .collect::<Result<_>>()?;

    let mut local_pairs = Vec::new();
    if cfg.losses.joint.omega > 0.0 {
        let seconds: &[usize] = if cfg.local_on_both_positives { &[1, 2] } else { &[1] };
        for &s in seconds.iter().filter(|&&s| s <= tuple.positives.len()) {
            let c = find_correspondences(
                &pre[0],
                &pre[s],
                &dataset[members[0]].pose,
                &dataset[members[s]].pose,
                cfg.correspondence_radius,
                cfg.icp.as_ref(),
            )?;
            if c.is_empty() {
                log::warn!("tuple with anchor {} has no correspondences; skipped", tuple.anchor);
                return Ok(None);
            }
            local_pairs.push(LocalPair {
                first: 0,
                second: s,
                correspondences: sample_correspondences(&c, cfg.correspondence_samples, rng::derive2(seed, 2, s as u64)),
            });
        }
    }

    let max_angle = cfg.rotation_max_deg.to_radians();
    let augmented: Vec<PointCloud> = pre
        .par_iter()
        .enumerate()
        .map(|(slot, c)| {
            let s = rng::derive2(seed, 3, slot as u64);
            let j = augment_jitter(c, cfg.jitter_sigma, cfg.jitter_clip, rng::derive(s, 0));
            random_rotate_z(&j, max_angle, rng::derive(s, 1))
        })
        .collect();
    let np = tuple.positives.len();
    let nn = tuple.negatives.len();
    let mut it = augmented.into_iter();
    let anchor = it.next().expect("anchor");
    let positives: Vec<PointCloud> = it.by_ref().take(np).collect();
    let negatives: Vec<PointCloud> = it.by_ref().take(nn).collect();
    let other = it.next().expect("other negative");
    Ok(Some(PreparedTuple {
        clouds: TupleClouds::new(anchor, positives, negatives, other),
        local_pairs,
    }))
}

/// Mean losses over the tuples of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub lg: f64,
    pub llc: f64,
    pub joint: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Averages the joint gradient over the usable tuples and applies one Adam
/// update. When every tuple is skipped the parameters are left untouched.
pub fn train_step(
    dataset: &[Sample],
    tuples: &[TrainingTuple],
    params: &mut EncoderParams,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
    lr: f64,
    seed: u64,
) -> Result<StepLosses> {
    let mut out = StepLosses::default();
    let mut grad = vec![0.0; params.data.len()];
    for (t, tuple) in tuples.iter().enumerate() {
        let tseed = rng::derive(seed, t as u64);
        let Some(prepared) = prepare_tuple(dataset, tuple, cfg, tseed)? else {
            out.skipped += 1;
            continue;
        };
        let obj = tuple_loss_and_grad(&prepared.clouds, &prepared.local_pairs, params, &cfg.losses, rng::derive(tseed, 99))?;
        out.lg += obj.lg;
        out.llc += obj.llc;
        out.joint += obj.joint.value;
        for (g, v) in grad.iter_mut().zip(&obj.joint.grad) {
            *g += v;
        }
        out.used += 1;
    }
    if out.used == 0 {
        return Ok(out);
    }
    let n = out.used as f64;
    out.lg /= n;
    out.llc /= n;
    out.joint /= n;
    for g in &mut grad {
        *g /= n;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    adam_step(&mut params.data, &grad, opt, lr)?;
    Ok(out)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken after this epoch.
    pub step: u64,
    pub lg: f64,
    pub llc: f64,
    pub joint: f64,
    pub lr: f64,
    pub skipped: usize,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: EncoderParams,
    pub opt: OptimizerState,
    /// Next epoch to run.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Self {
        let mut params = EncoderParams::init(cfg.feature_dim, cfg.k, rng::derive(cfg.seed, 0));
        params.normalize_intensity = cfg.normalize_intensity;
        let opt = OptimizerState::new(params.data.len());
        Self { params, opt, epoch: 0 }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    epoch: usize,
    encoder: serde_json::Value,
    optimizer: OptimizerState,
}

const CHECKPOINT_FORMAT: &str = "placerec-train-state";

/// Training-state checkpoint as JSON. The encoder part uses the encoder
/// checkpoint format.
pub struct Checkpoint;

impl Checkpoint {
    pub fn to_json(state: &TrainState) -> String {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            epoch: state.epoch,
            encoder: serde_json::from_str(&state.params.to_json()).expect("encoder json"),
            optimizer: state.opt.clone(),
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<TrainState> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad training checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT || file.version != 1 {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        let params = EncoderParams::from_json(&file.encoder.to_string())?;
        if file.optimizer.m.len() != params.data.len() || file.optimizer.v.len() != params.data.len() {
            return Err(Error::Config("optimizer state does not match encoder size".into()));
        }
        Ok(TrainState {
            params,
            opt: file.optimizer,
            epoch: file.epoch,
        })
    }

    pub fn save(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
        write_text_file(path.as_ref(), &Self::to_json(state))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainState> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<EpochRecord>,
}

pub fn train_loop(dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_loop_with(dataset, cfg, TrainState::new(cfg), |_, _| Ok(()))
}

/// Runs epochs `state.epoch..cfg.epochs`, calling `on_epoch` after each
/// one (for logging and checkpoints). Tuple seeds depend only on the
/// configured seed, epoch and position, so a resumed run continues exactly
/// as an uninterrupted one.
pub fn train_loop_with(
    dataset: &[Sample],
    cfg: &TrainConfig,
    mut state: TrainState,
    mut on_epoch: impl FnMut(&TrainState, &EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if state.params.feature_dim() != cfg.feature_dim {
        return Err(Error::Config("checkpoint feature_dim differs from config".into()));
    }
    let mut log = Vec::new();
    if state.epoch >= cfg.epochs {
        return Ok(TrainOutcome { state, log });
    }
    let anchors = eligible_anchors(dataset, cfg);
    let per_epoch = cfg.tuples_in_epoch(dataset.len());
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let lr = cfg.learning_rate_at(epoch);
        let mut sums = StepLosses::default();
        let mut t = 0;
        while t < per_epoch {
            let batch: Vec<TrainingTuple> = (t..(t + cfg.batch_tuples).min(per_epoch))
                .map(|i| sample_tuple_from(dataset, &anchors, cfg, rng::derive2(cfg.seed, 1 + epoch as u64, i as u64)))
                .collect::<Result<_>>()?;
            let step_seed = rng::derive2(rng::derive(cfg.seed, 7), epoch as u64, t as u64);
            let s = train_step(dataset, &batch, &mut state.params, &mut state.opt, cfg, lr, step_seed)?;
            let used = s.used as f64;
            sums.lg += s.lg * used;
            sums.llc += s.llc * used;
            sums.joint += s.joint * used;
            sums.used += s.used;
            sums.skipped += s.skipped;
            t += batch.len();
        }
        let n = sums.used.max(1) as f64;
        let record = EpochRecord {
            epoch,
            step: state.opt.step,
            lg: sums.lg / n,
            llc: sums.llc / n,
            joint: sums.joint / n,
            lr,
            skipped: sums.skipped,
        };
        log::info!("{}", record.to_json_line());
        state.epoch += 1;
        on_epoch(&state, &record)?;
        log.push(record);
    }
    Ok(TrainOutcome { state, log })
}
