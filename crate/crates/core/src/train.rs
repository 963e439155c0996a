//! Weakly supervised training: alternate pseudo-label inference and gradient steps.

use log::{debug, info, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::LinearSoftmaxModel;
use crate::dataset::Dataset;
use crate::decode::{decode_scores, online_decode_scores, Decoded, OnlineConfig};
use crate::duration::{estimate_duration_model, DurationModel};
use crate::energy::{loss_total, InvalidPathSet, LossConfig};
use crate::error::{Result, SegError};
use crate::grammar::Grammar;
use crate::multiview::{
    fuse_pi, fuse_sv, fuse_wpi, loss_view_confidence, ConfidenceConfig, ConfidenceNet, MultiViewPair,
    SvDurationCounting,
};
use crate::scores::frame_log_likelihoods;
use crate::types::{ProbabilityStream, SegmentPath};

/// How pseudo-labels are produced during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiviewMode {
    /// Single-view constrained offline inference.
    #[default]
    None,
    Sv,
    Pi,
    Wpi,
}

impl MultiviewMode {
    pub fn is_multiview(self) -> bool {
        self != MultiviewMode::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Gradient step per video is `learning_rate / T`.
    pub learning_rate: f64,
    pub seed: u64,
    pub use_oodl: bool,
    pub multiview_mode: MultiviewMode,
    /// Update the confidence network with the view-confidence loss (WPI only).
    pub train_wpi: bool,
    pub confidence_learning_rate: f64,
    pub confidence: ConfidenceConfig,
    pub invalid_set: InvalidPathSet,
    pub sv_counting: SvDurationCounting,
    /// Standard deviation of the initial classifier weights.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.5,
            seed: 0,
            use_oodl: true,
            multiview_mode: MultiviewMode::None,
            train_wpi: true,
            confidence_learning_rate: 0.05,
            confidence: ConfidenceConfig::default(),
            invalid_set: InvalidPathSet::default(),
            sv_counting: SvDurationCounting::default(),
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SegError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.confidence_learning_rate >= 0.0 && self.confidence_learning_rate.is_finite()) {
            return Err(SegError::Config("confidence learning rate must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(SegError::Config("at least one epoch is required".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record. Losses are means over the videos trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub videos: usize,
    pub skipped: usize,
    pub l_b: f64,
    pub l_oodl: f64,
    pub l_total: f64,
    /// Present when the confidence network was trained.
    pub l_vc: Option<f64>,
    /// Mean fraction of frames where the online labels differ from the pseudo-labels.
    pub online_offline_disagreement: Option<f64>,
    /// Mean fraction of frames whose pseudo-label changed since the previous epoch.
    pub pseudo_label_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: LinearSoftmaxModel,
    pub confidence: Option<ConfidenceNet>,
    pub durations: DurationModel,
    pub log: Vec<EpochLog>,
    /// Pseudo-label path of every video in the final epoch (`None` when skipped).
    pub pseudo_labels: Vec<Option<SegmentPath>>,
}

struct Pseudo {
    decoded: Decoded,
    auxiliary: Option<(usize, ProbabilityStream)>,
}

#[allow(clippy::too_many_arguments)]
fn pseudo_label(
    data: &Dataset,
    i: usize,
    stream: &ProbabilityStream,
    model: &LinearSoftmaxModel,
    net: Option<&ConfidenceNet>,
    dm: &DurationModel,
    neighbours: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Pseudo> {
    let video = &data.videos[i];
    let g = Grammar::single(video.transcript.clone());
    if !config.multiview_mode.is_multiview() || neighbours.is_empty() {
        let scores = frame_log_likelihoods(stream, dm)?;
        return Ok(Pseudo {
            decoded: decode_scores(&scores, dm, &g, 1.0)?,
            auxiliary: None,
        });
    }
    let j = neighbours[rng.random_range(0..neighbours.len())];
    let aux = model.forward(data.videos[j].features.view())?;
    let decoded = match config.multiview_mode {
        MultiviewMode::Sv => fuse_sv(stream, &aux, dm, &g, config.sv_counting)?,
        MultiviewMode::Pi => fuse_pi(stream, &aux, dm, &g)?,
        MultiviewMode::Wpi => {
            let pair = MultiViewPair::new(stream, &aux, video.features.view(), data.videos[j].features.view())?;
            fuse_wpi(&pair, net.expect("WPI keeps a confidence network"), dm, &g)?.0
        }
        MultiviewMode::None => unreachable!("handled above"),
    };
    Ok(Pseudo {
        decoded,
        auxiliary: Some((j, aux)),
    })
}

fn disagreement(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len().max(1) as f64
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Trains the frame classifier (and the confidence network under WPI) on
/// every video of `data`. Ground truth is never consulted.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if data.videos.is_empty() {
        return Err(SegError::Precondition("training set is empty".into()));
    }
    let adjacency = data.adjacency()?;
    if config.multiview_mode.is_multiview() && !adjacency.has_any_edge() {
        return Err(SegError::Config(
            "multi-view training needs at least two synchronized views of one recording".into(),
        ));
    }
    let n_act = data.actions.len();
    let f_dim = data.feature_dim();
    let grammar = data.grammar()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LinearSoftmaxModel::random(n_act, f_dim, config.init_scale, &mut rng)?;
    let mut net = match config.multiview_mode {
        MultiviewMode::Wpi => Some(ConfidenceNet::new(f_dim, &config.confidence, &mut rng)?),
        _ => None,
    };
    let lengths: Vec<usize> = data.videos.iter().map(|v| v.num_frames()).collect();
    let tr_lengths: Vec<usize> = data.videos.iter().map(|v| v.transcript.len()).collect();
    let mut dm = DurationModel::initial(n_act, &lengths, &tr_lengths)?;
    let loss_cfg = LossConfig {
        use_oodl: config.use_oodl,
        invalid_set: config.invalid_set,
    };

    let feasible: Vec<bool> = data
        .videos
        .iter()
        .map(|v| v.num_frames() >= v.transcript.len())
        .collect();
    for (v, ok) in data.videos.iter().zip(&feasible) {
        if !ok {
            warn!(
                "skipping video {}: {} frames cannot hold {} transcript segments",
                v.id,
                v.num_frames(),
                v.transcript.len()
            );
        }
    }
    if !feasible.iter().any(|&f| f) {
        return Err(SegError::Infeasible("no training video can hold its transcript".into()));
    }

    let mut pseudo: Vec<Option<SegmentPath>> = vec![None; data.videos.len()];
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.videos.len()).filter(|&i| feasible[i]).collect();
        order.shuffle(&mut rng);
        let (mut lb, mut lo, mut lt, mut lvc, mut dis, mut changed) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for &i in &order {
            let video = &data.videos[i];
            let t_len = video.num_frames();
            let stream = model.forward(video.features.view())?;
            let p = pseudo_label(
                data,
                i,
                &stream,
                &model,
                net.as_ref(),
                &dm,
                adjacency.neighbours(i),
                config,
                &mut rng,
            )?;
            let path = p.decoded.path;
            let online = if config.use_oodl {
                let scores = frame_log_likelihoods(&stream, &dm)?;
                let out = online_decode_scores(&scores, &dm, &grammar, &OnlineConfig::default())?;
                dis.push(disagreement(&out.labels, &path.expand()));
                Some(out.paths)
            } else {
                None
            };
            let log_post: Array2<f64> = stream.log_posteriors();
            let report = loss_total(&log_post, &path, online.as_deref(), &loss_cfg)?;
            let grad = model.backward(video.features.view(), &report.grad_log_posterior)?;
            if let (Some(net), Some((j, aux)), true) = (net.as_mut(), &p.auxiliary, config.train_wpi) {
                // classifier frozen: posteriors enter as constants
                let vc = loss_view_confidence(
                    &stream,
                    aux,
                    video.features.view(),
                    data.videos[*j].features.view(),
                    net,
                    &path,
                )?;
                net.scaled_add(-config.confidence_learning_rate / t_len as f64, &vc.grad);
                lvc.push(vc.value / t_len as f64);
            }
            model.apply(&grad, config.learning_rate / t_len as f64);
            lb.push(report.l_b);
            lo.push(report.l_oodl);
            lt.push(report.l_total);
            if let Some(prev) = &pseudo[i] {
                changed.push(disagreement(&prev.expand(), &path.expand()));
            }
            pseudo[i] = Some(path);
        }
        let paths: Vec<SegmentPath> = pseudo.iter().flatten().cloned().collect();
        dm = estimate_duration_model(&paths, n_act)?;
        let entry = EpochLog {
            epoch,
            videos: order.len(),
            skipped: data.videos.len() - order.len(),
            l_b: mean(&lb),
            l_oodl: mean(&lo),
            l_total: mean(&lt),
            l_vc: (!lvc.is_empty()).then(|| mean(&lvc)),
            online_offline_disagreement: (!dis.is_empty()).then(|| mean(&dis)),
            pseudo_label_change: (!changed.is_empty()).then(|| mean(&changed)),
        };
        info!(
            "epoch {epoch}: L_b {:.4} L_oodl {:.4} L_total {:.4}",
            entry.l_b, entry.l_oodl, entry.l_total
        );
        debug!("epoch {epoch} durations {:?}", dm.lambdas());
        log.push(entry);
    }
    Ok(TrainOutput {
        model,
        confidence: net,
        durations: dm,
        log,
        pseudo_labels: pseudo,
    })
}
