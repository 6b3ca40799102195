use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NodeProfile, TrainError};
use crate::data::{sub_seed, SiloDataset, Split};
use crate::nn::{ModelWeights, NnError, OptimizerState, ResidualNet, Tensor};
use crate::wire::ClientMetrics;

/// What one client produces in one round.
#[derive(Clone, Debug)]
pub struct LocalRoundResult {
    pub weights: ModelWeights,
    /// Size of the train split.
    pub n_k: usize,
    pub metrics: ClientMetrics,
}

/// Seed of the shuffle stream for one local epoch.
pub fn shuffle_seed(seed: u64, client_id: &str, round: u32, epoch: usize) -> u64 {
    sub_seed(
        seed,
        &format!("{client_id}/shuffle"),
        ((round as u64) << 32) | epoch as u64,
    )
}

/// Runs `E_k` epochs of mini-batch SGD over the silo's train split.
///
/// Each epoch visits the split in a fresh permutation seeded by
/// `(seed, client, round, epoch)`. The scheduler's comparisons restart at the
/// beginning of the round and it is fed each epoch's mean loss; the learning
/// rate and momentum buffers carry over in `opt`.
pub fn local_train(
    net: &ResidualNet,
    weights_in: ModelWeights,
    silo: &SiloDataset,
    profile: &NodeProfile,
    opt: &mut OptimizerState,
    seed: u64,
    round: u32,
) -> Result<LocalRoundResult, TrainError> {
    profile.validate()?;
    if weights_in.manifest_hash() != net.manifest_hash() {
        return Err(TrainError::Nn(NnError::Shape(
            "incoming weights do not match the architecture".into(),
        )));
    }
    let train = silo.splits.get(Split::Train);
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSplit(silo.silo_id.clone()));
    }

    let start = Instant::now();
    let mut weights = weights_in;
    let mut order = train.to_vec();
    let mut epoch_losses = Vec::with_capacity(profile.epochs_per_round);
    let mut steps = 0u64;
    opt.scheduler.reset_comparisons();

    for epoch in 0..profile.epochs_per_round {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(seed, &profile.client_id, round, epoch));
        order.copy_from_slice(train);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for (batch_no, chunk) in order.chunks(profile.batch_size).enumerate() {
            let images: Vec<&Tensor> = chunk.iter().map(|&i| &silo.samples[i].image).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| silo.samples[i].label.index()).collect();
            let batch = Tensor::stack(&images)?;
            let loss = match net.train_step(&mut weights, &batch, &labels, opt) {
                Ok(l) => l,
                Err(NnError::Divergence { loss, .. }) => {
                    return Err(TrainError::Divergence {
                        client_id: profile.client_id.clone(),
                        round,
                        epoch,
                        batch: batch_no,
                        loss,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            loss_sum += loss * chunk.len() as f64;
            steps += 1;
        }
        let mean = loss_sum / train.len() as f64;
        epoch_losses.push(mean);
        opt.report_metric(mean);
    }

    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(LocalRoundResult {
        weights,
        n_k: train.len(),
        metrics: ClientMetrics {
            iterations_per_second: if wall_time_s > 0.0 {
                steps as f64 / wall_time_s
            } else {
                0.0
            },
            epoch_losses,
            wall_time_s,
            steps,
        },
    })
}
