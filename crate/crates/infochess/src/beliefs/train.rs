//! Joint training of the king and visibility heads with a shared trunk, and
//! held-out evaluation against the uniform-over-fog baseline.

use infochess_core::infotheory::LOG_FLOOR;
use infochess_core::rng::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, TrainingSequence};
use super::{king_support, masked_log_softmax, BeliefModel, ModelError};
use crate::nn::transformer::{Forward, Head, ModelDims};
use crate::nn::Adam;
use infochess_core::encode::{encode_observation, EncodedObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefTrainingConfig {
    pub epochs: usize,
    pub lr: f32,
    /// Sequences (whole player-games) per optimizer step.
    pub batch_sequences: usize,
    /// Fraction of games held out for validation.
    pub validation_fraction: f64,
    /// Dropout rate inside the trunk during training.
    pub dropout: f32,
    pub seed: u64,
    pub dims: ModelDims,
}

impl Default for BeliefTrainingConfig {
    fn default() -> Self {
        BeliefTrainingConfig {
            epochs: 15,
            lr: 1e-3,
            batch_sequences: 16,
            validation_fraction: 0.1,
            dropout: 0.1,
            seed: 0,
            dims: ModelDims::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mean per-example training losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub king_ce: f64,
    pub visibility_bce: f64,
    /// Held-out oracle CE gain over the uniform baseline after this epoch.
    pub validation_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedBeliefModel {
    pub model: BeliefModel,
    pub epochs: Vec<EpochStats>,
    pub validation: Option<ValidationReport>,
}

/// Mean king surprisal at one side-turn of held-out play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnCe {
    pub turn: u32,
    pub examples: usize,
    pub model_ce: f64,
    pub uniform_ce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub examples: usize,
    /// Oracle cross entropy per turn, with a seen king scored as certain for both beliefs.
    pub per_turn: Vec<TurnCe>,
    /// Per-turn model CE averaged over turns.
    pub model_ce: f64,
    /// Per-turn uniform-over-fog CE averaged over turns.
    pub uniform_ce: f64,
    /// Mean raw king-head cross entropy over all examples.
    pub king_head_ce: f64,
    /// Natural log of the mean number of fogged squares.
    pub ln_mean_fog: f64,
    pub visibility_bce: f64,
    /// Mean predicted visibility on own-frame squares adjacent to a seen opponent piece.
    pub visibility_near_seen: f64,
    /// Mean predicted visibility over all squares.
    pub visibility_mean: f64,
}

impl ValidationReport {
    /// Improvement of the model over the uniform baseline, in nats.
    pub fn gain(&self) -> f64 {
        self.uniform_ce - self.model_ce
    }
}

struct Encoded<'a> {
    seq: &'a TrainingSequence,
    tokens: Vec<EncodedObservation>,
}

impl<'a> Encoded<'a> {
    fn new(seq: &'a TrainingSequence) -> Encoded<'a> {
        Encoded { seq, tokens: seq.observations.iter().map(encode_observation).collect() }
    }

    fn refs(&self) -> Vec<&[f32]> {
        self.tokens.iter().map(|t| t.as_slice()).collect()
    }

    fn forward(&self, model: &BeliefModel) -> Result<Forward, ModelError> {
        Ok(model.params().forward(&self.refs())?)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct LossSums {
    king: f64,
    vis: f64,
    examples: usize,
}

impl LossSums {
    fn add(self, o: LossSums) -> LossSums {
        LossSums { king: self.king + o.king, vis: self.vis + o.vis, examples: self.examples + o.examples }
    }
}

/// Binary cross entropy from a logit, stable for large magnitudes.
fn bce_from_logit(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Losses of one sequence and, when `scale > 0`, the logit gradients of
/// `scale * (sum king CE + sum mean-BCE)`. Position 0 carries no label.
fn sequence_loss(enc: &Encoded, fwd: &Forward, scale: f32) -> (LossSums, Vec<f32>, Vec<f32>) {
    let t = fwd.len();
    let king = fwd.logits(Head::King);
    let vis = fwd.logits(Head::Visibility);
    let mut dk = vec![0.0f32; t * 64];
    let mut dv = vec![0.0f32; t * 64];
    let mut sums = LossSums::default();
    for (i, ex) in enc.seq.examples().enumerate() {
        let pos = i + 1;
        let row = &king[pos * 64..(pos + 1) * 64];
        // Non-finite logits poison the loss, which the caller reports.
        let Ok(lp) = masked_log_softmax(row, &king_support(ex.current())) else {
            sums.king = f64::NAN;
            continue;
        };
        let label = ex.king_label();
        sums.king -= lp[label];
        let y = ex.visibility_labels();
        let vrow = &vis[pos * 64..(pos + 1) * 64];
        sums.vis += vrow.iter().zip(&y).map(|(&l, &y)| bce_from_logit(l as f64, y as f64)).sum::<f64>() / 64.0;
        sums.examples += 1;
        for c in 0..64 {
            let ind = if c == label { 1.0 } else { 0.0 };
            dk[pos * 64 + c] = scale * (lp[c].exp() - ind) as f32;
            let s = 1.0 / (1.0 + (-(vrow[c] as f64)).exp());
            dv[pos * 64 + c] = scale * ((s - y[c] as f64) / 64.0) as f32;
        }
    }
    (sums, dk, dv)
}

/// Trains a fresh model on the training games of `dataset` and evaluates it
/// on the held-out games.
pub fn train_belief_models(dataset: &Dataset, config: &BeliefTrainingConfig) -> Result<TrainedBeliefModel, TrainError> {
    let (train, val) = dataset.split(config.validation_fraction);
    let model = BeliefModel::init(config.dims, derive_seed(config.seed, 0xBE11EF));
    let (model, epochs) = train_on(model, &train, &val, config)?;
    let validation = if val.is_empty() { None } else { Some(evaluate_belief_model(&model, &val)?) };
    Ok(TrainedBeliefModel { model, epochs, validation })
}

/// Adam on the summed king CE and mean visibility BCE, averaged over the
/// examples of each batch.
pub fn train_on(
    mut model: BeliefModel,
    train: &[&TrainingSequence],
    validation: &[&TrainingSequence],
    config: &BeliefTrainingConfig,
) -> Result<(BeliefModel, Vec<EpochStats>), TrainError> {
    let encoded: Vec<Encoded> = train.iter().filter(|s| !s.is_empty()).map(|s| Encoded::new(s)).collect();
    if encoded.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let total = model.params().layout.total;
    let mut adam = Adam::new(total, config.lr);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng_from_seed(derive_seed(config.seed, epoch as u64)));
        let mut epoch_sums = LossSums::default();
        let epoch_seed = derive_seed(config.seed, (epoch as u64) << 32);
        for (batch, chunk) in order.chunks(config.batch_sequences.max(1)).enumerate() {
            let n: usize = chunk.iter().map(|&i| encoded[i].seq.len()).sum();
            let scale = 1.0 / n as f32;
            let m = &model;
            let (grad, sums) = chunk
                .par_iter()
                .map(|&i| -> Result<(Vec<f32>, LossSums), TrainError> {
                    let fwd = if config.dropout > 0.0 {
                        let mut rng = rng_from_seed(derive_seed(epoch_seed, i as u64));
                        m.params().forward_train(&encoded[i].refs(), config.dropout, &mut rng).map_err(ModelError::from)?
                    } else {
                        encoded[i].forward(m)?
                    };
                    let (sums, dk, dv) = sequence_loss(&encoded[i], &fwd, scale);
                    let mut g = vec![0.0f32; total];
                    m.params().backward(&fwd, &dk, &dv, &mut g, true);
                    Ok((g, sums))
                })
                .try_reduce(
                    || (vec![0.0f32; total], LossSums::default()),
                    |(mut ga, sa), (gb, sb)| {
                        for (a, b) in ga.iter_mut().zip(&gb) {
                            *a += b;
                        }
                        Ok((ga, sa.add(sb)))
                    },
                )?;
            let loss = (sums.king + sums.vis) / sums.examples.max(1) as f64;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite { epoch, batch, loss });
            }
            adam.step(&mut model.params_mut().data, &grad);
            epoch_sums = epoch_sums.add(sums);
        }
        let n = epoch_sums.examples.max(1) as f64;
        stats.push(EpochStats {
            epoch,
            loss: (epoch_sums.king + epoch_sums.vis) / n,
            king_ce: epoch_sums.king / n,
            visibility_bce: epoch_sums.vis / n,
            validation_gain: if validation.is_empty() { None } else { Some(evaluate_belief_model(&model, validation)?.gain()) },
        });
    }
    Ok((model, stats))
}

/// Held-out metrics. Oracle CE follows the submitted-belief rule: a seen
/// king costs nothing, otherwise the model pays `-ln q(king)` and the
/// uniform baseline pays `ln |fog|`.
pub fn evaluate_belief_model(model: &BeliefModel, sequences: &[&TrainingSequence]) -> Result<ValidationReport, ModelError> {
    #[derive(Default, Clone)]
    struct Acc {
        per_turn: Vec<(usize, f64, f64)>,
        king_head: f64,
        fog: f64,
        vis_bce: f64,
        near_sum: f64,
        near_n: usize,
        vis_sum: f64,
        examples: usize,
    }
    let per_seq: Vec<Acc> = sequences
        .par_iter()
        .map(|seq| -> Result<Acc, ModelError> {
            let enc = Encoded::new(seq);
            let fwd = enc.forward(model)?;
            let king = fwd.logits(Head::King);
            let vis = fwd.logits(Head::Visibility);
            let mut acc = Acc { per_turn: vec![(0, 0.0, 0.0); seq.len()], ..Acc::default() };
            for (i, ex) in seq.examples().enumerate() {
                let pos = i + 1;
                let row = &king[pos * 64..(pos + 1) * 64];
                let lp = masked_log_softmax(row, &king_support(ex.current()))?;
                let raw = -lp[ex.king_label()].max(LOG_FLOOR.ln());
                let obs = ex.current();
                let fog = obs.fog().len() as f64;
                let (m, u) = if obs.opponent_king().is_some() { (0.0, 0.0) } else { (raw, fog.ln()) };
                acc.per_turn[i] = (1, m, u);
                acc.king_head += raw;
                acc.fog += fog;
                let y = ex.visibility_labels();
                let vrow = &vis[pos * 64..(pos + 1) * 64];
                acc.vis_bce += vrow.iter().zip(&y).map(|(&l, &y)| bce_from_logit(l as f64, y as f64)).sum::<f64>() / 64.0;
                let mut near = infochess_core::SquareSet::EMPTY;
                for p in obs.opponent_pieces() {
                    near = near.union(p.square.vicinity(obs.board_size));
                }
                for s in infochess_core::Square::all() {
                    let c = infochess_core::encode::canonical_square(s, obs.viewer, obs.board_size).index();
                    let pv = 1.0 / (1.0 + (-(vrow[c] as f64)).exp());
                    acc.vis_sum += pv;
                    if near.contains(s) {
                        acc.near_sum += pv;
                        acc.near_n += 1;
                    }
                }
                acc.examples += 1;
            }
            Ok(acc)
        })
        .collect::<Result<_, _>>()?;

    let horizon = per_seq.iter().map(|a| a.per_turn.len()).max().unwrap_or(0);
    let mut per_turn: Vec<TurnCe> =
        (0..horizon).map(|i| TurnCe { turn: i as u32 + 1, examples: 0, model_ce: 0.0, uniform_ce: 0.0 }).collect();
    let mut total = Acc::default();
    for a in &per_seq {
        for (t, &(n, m, u)) in a.per_turn.iter().enumerate() {
            per_turn[t].examples += n;
            per_turn[t].model_ce += m;
            per_turn[t].uniform_ce += u;
        }
        total.king_head += a.king_head;
        total.fog += a.fog;
        total.vis_bce += a.vis_bce;
        total.near_sum += a.near_sum;
        total.near_n += a.near_n;
        total.vis_sum += a.vis_sum;
        total.examples += a.examples;
    }
    for t in per_turn.iter_mut() {
        let n = t.examples.max(1) as f64;
        t.model_ce /= n;
        t.uniform_ce /= n;
    }
    let turns = per_turn.len().max(1) as f64;
    let n = total.examples.max(1) as f64;
    Ok(ValidationReport {
        examples: total.examples,
        model_ce: per_turn.iter().map(|t| t.model_ce).sum::<f64>() / turns,
        uniform_ce: per_turn.iter().map(|t| t.uniform_ce).sum::<f64>() / turns,
        per_turn,
        king_head_ce: total.king_head / n,
        ln_mean_fog: (total.fog / n).ln(),
        visibility_bce: total.vis_bce / n,
        visibility_near_seen: total.near_sum / total.near_n.max(1) as f64,
        visibility_mean: total.vis_sum / (64.0 * n),
    })
}
