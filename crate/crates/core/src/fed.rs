//! Federated orchestration: FedAvg over the SBS clients, delta-based
//! stopping, server-side evaluation on a pooled sample set, per-client
//! personalisation, and the new-deployment knowledge-transfer flow.
//!
//! The server only ever sees parameter updates and sample counts during
//! rounds; raw samples cross the client boundary exclusively through the
//! audited eval-subset export used to build the server pool beforehand.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    evaluate, train, EpochStats, ModelParams, OptimizerState, Sample, Scaler, TrainConfig,
};
use crate::rng::SeedStream;

/// One SBS participating in (or receiving) federated training.
#[derive(Debug)]
pub struct Client {
    pub id: String,
    train_set: Vec<Sample>,
    eval_set: Vec<Sample>,
    tune_set: Vec<Sample>,
    pub scaler: Scaler,
    pub params: ModelParams,
    opt: OptimizerState,
    shuffle_rng: ChaCha8Rng,
    raw_exports: AtomicU64,
}

/// Split sizes; the nominal values follow the evaluation protocol (2000
/// eval, 500 personalisation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub eval: usize,
    pub personalise: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { eval: 2000, personalise: 500 }
    }
}

impl Client {
    /// Builds a client from physical samples: the scaler is applied once,
    /// then the personalisation, eval, and training splits are carved out
    /// disjointly (personalisation first, eval capped by what remains).
    pub fn new(
        id: &str,
        samples: &[Sample],
        split: SplitConfig,
        scaler: Scaler,
        seeds: &SeedStream,
        lr: f64,
    ) -> Result<Self> {
        if samples.len() < split.personalise + 1 {
            return Err(Error::Argument(format!(
                "{id}: {} samples cannot host a {}-sample personalisation split",
                samples.len(),
                split.personalise
            )));
        }
        let normalized = scaler.apply(samples);
        let tune_end = split.personalise;
        let eval_end = tune_end + split.eval.min(normalized.len() - tune_end);
        let params = ModelParams::zeros(); // replaced by the pushed global
        let opt = OptimizerState::new(&params, lr);
        Ok(Client {
            id: id.to_string(),
            tune_set: normalized[..tune_end].to_vec(),
            eval_set: normalized[tune_end..eval_end].to_vec(),
            train_set: normalized[eval_end..].to_vec(),
            scaler,
            params,
            opt,
            shuffle_rng: seeds.stream(&format!("shuffle/{id}")),
            raw_exports: AtomicU64::new(0),
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_set.len()
    }

    pub fn eval_set(&self) -> &[Sample] {
        &self.eval_set
    }

    /// Exports a seeded subset of the eval split (for the server pool).
    /// Every raw-sample export is counted.
    pub fn export_eval_subset(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        self.raw_exports.fetch_add(1, Ordering::Relaxed);
        let mut idx: Vec<usize> = (0..self.eval_set.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n.min(self.eval_set.len()));
        idx.into_iter().map(|i| self.eval_set[i]).collect()
    }

    pub fn raw_export_count(&self) -> u64 {
        self.raw_exports.load(Ordering::Relaxed)
    }

    /// One round of local training from the pushed global model. Optimizer
    /// moments and the shuffle stream persist across rounds, exactly as a
    /// centralized run persists them across epochs.
    fn local_round(&mut self, global: &ModelParams, cfg: &TrainConfig) -> Result<ClientUpdate> {
        self.params = global.clone();
        let history = train(
            &mut self.params,
            &mut self.opt,
            &self.train_set,
            cfg,
            &mut self.shuffle_rng,
        )?;
        let last = history.last().copied().unwrap_or(EpochStats {
            ce: 0.0,
            mae: 0.0,
            accuracy: 0.0,
        });
        Ok(ClientUpdate {
            client_id: self.id.clone(),
            params: self.params.clone(),
            n_samples: self.train_set.len(),
            train_loss: last.total_loss(cfg.lambda),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: String,
    pub params: ModelParams,
    pub n_samples: usize,
    pub train_loss: f64,
}

/// Sample-count-weighted average of parameter updates.
pub fn fedavg(updates: &[(ModelParams, usize)]) -> Result<ModelParams> {
    let Some(((first, _), rest)) = updates.split_first() else {
        return Err(Error::Argument("fedavg over zero updates".into()));
    };
    if rest.is_empty() {
        // identity: no arithmetic, so a single client reproduces its update
        return Ok(first.clone());
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::Argument("all update weights are zero".into()));
    }
    for (p, _) in rest {
        if !same_shape(first, p) {
            return Err(Error::Aggregation("update shapes differ".into()));
        }
    }
    let mut out = first.clone();
    for v in out.iter_params_mut() {
        *v = 0.0;
    }
    for (p, n) in updates {
        let w = *n as f64 / total as f64;
        for (acc, v) in out.iter_params_mut().zip(p.iter_params()) {
            *acc += w * v;
        }
    }
    Ok(out)
}

fn same_shape(a: &ModelParams, b: &ModelParams) -> bool {
    a.layers.len() == b.layers.len()
        && a.layers
            .iter()
            .zip(b.layers.iter())
            .all(|(x, y)| x.n_in == y.n_in && x.n_out == y.n_out)
}

/// Delta-based stopping: end when the server eval total loss improves by
/// less than `delta` for `patience` consecutive rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub delta: f64,
    pub patience: usize,
    pub max_rounds: usize,
    pub enabled: bool,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig { delta: 1e-3, patience: 3, max_rounds: 30, enabled: true }
    }
}

impl StoppingConfig {
    pub fn disabled(max_rounds: usize) -> Self {
        StoppingConfig { enabled: false, max_rounds, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && (self.delta <= 0.0 || self.patience == 0) {
            return Err(Error::Config("stopping needs delta > 0 and patience >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    /// (client id, n_samples used as the aggregation weight, train loss).
    pub clients: Vec<(String, usize, f64)>,
    pub server_eval: EpochStats,
    pub stopped: bool,
}

/// Runs FedAvg rounds: every client trains `cfg.epochs` local epochs from
/// the pushed global model, the server aggregates by sample count and
/// evaluates on its pooled set. Updates are aggregated in client-id order
/// so the result is independent of completion order.
pub fn run_rounds(
    clients: &mut [Client],
    server_pool: &[Sample],
    initial: ModelParams,
    cfg: &TrainConfig,
    stopping: &StoppingConfig,
) -> Result<(ModelParams, Vec<RoundReport>)> {
    if clients.is_empty() {
        return Err(Error::Argument("run_rounds without clients".into()));
    }
    stopping.validate()?;
    let mut global = initial;
    let mut history = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stall = 0usize;

    for round in 0..stopping.max_rounds {
        let mut updates: Vec<ClientUpdate> = clients
            .par_iter_mut()
            .map(|c| c.local_round(&global, cfg))
            .collect::<Result<_>>()?;
        updates.sort_by(|a, b| a.client_id.cmp(&b.client_id));

        let weighted: Vec<(ModelParams, usize)> =
            updates.iter().map(|u| (u.params.clone(), u.n_samples)).collect();
        global = fedavg(&weighted)?;

        let server_eval = evaluate(&global, server_pool, cfg.lambda);
        let loss = server_eval.total_loss(cfg.lambda);

        let mut stopped = false;
        if stopping.enabled {
            if best_loss - loss < stopping.delta {
                stall += 1;
            } else {
                stall = 0;
            }
            best_loss = best_loss.min(loss);
            if stall >= stopping.patience {
                stopped = true;
            }
        }
        history.push(RoundReport {
            round,
            clients: updates
                .iter()
                .map(|u| (u.client_id.clone(), u.n_samples, u.train_loss))
                .collect(),
            server_eval,
            stopped,
        });
        if stopped {
            break;
        }
    }
    Ok((global, history))
}

/// Personalisation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonaliseReport {
    pub client_id: String,
    pub before: EpochStats,
    pub after: EpochStats,
}

/// Fine-tunes the pushed global model on the client's personalisation
/// split. Epoch snapshots are scored on the tune split itself (never the
/// eval split) and the best one — possibly the untouched global — is kept.
pub fn personalise(
    client: &mut Client,
    global: &ModelParams,
    tune_epochs: usize,
    cfg: &TrainConfig,
) -> Result<PersonaliseReport> {
    let before = evaluate(global, &client.eval_set, cfg.lambda);
    let mut params = global.clone();
    let mut opt = OptimizerState::new(&params, client.opt.lr);
    let mut rng = SeedStream::new(client.shuffle_rng.get_seed()[0] as u64)
        .stream(&format!("personalise/{}", client.id));
    let tune_loss =
        |p: &ModelParams| evaluate(p, &client.tune_set, cfg.lambda).total_loss(cfg.lambda);
    let mut best = params.clone();
    let mut best_loss = tune_loss(&params);
    let one_epoch = TrainConfig { epochs: 1, ..*cfg };
    for _ in 0..tune_epochs {
        train(&mut params, &mut opt, &client.tune_set, &one_epoch, &mut rng)?;
        let l = tune_loss(&params);
        if l < best_loss {
            best_loss = l;
            best = params.clone();
        }
    }
    client.params = best;
    let after = evaluate(&client.params, &client.eval_set, cfg.lambda);
    Ok(PersonaliseReport { client_id: client.id.clone(), before, after })
}

/// Knowledge transfer to a new deployment that never joined training: push
/// the global model, evaluate, personalise, and report the regression
/// improvement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferReport {
    pub client_id: String,
    pub pushed: EpochStats,
    pub tuned: EpochStats,
    /// (mae_before − mae_after) / mae_before.
    pub mae_improvement: f64,
}

pub fn transfer_to_new_client(
    client: &mut Client,
    global: &ModelParams,
    tune_epochs: usize,
    cfg: &TrainConfig,
) -> Result<TransferReport> {
    let report = personalise(client, global, tune_epochs, cfg)?;
    let mae_improvement = if report.before.mae > 0.0 {
        (report.before.mae - report.after.mae) / report.before.mae
    } else {
        0.0
    };
    Ok(TransferReport {
        client_id: report.client_id,
        pushed: report.before,
        tuned: report.after,
        mae_improvement,
    })
}

/// History export: one JSON round report per line.
pub fn write_history_jsonl(path: &std::path::Path, history: &[RoundReport]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    for r in history {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}
