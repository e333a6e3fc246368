//! REINFORCE training over the multi-round environment.
//!
//! Every epoch draws one training problem, rolls out a batch of episodes on
//! it, credits each round's decisions with that round's discounted future
//! return minus a baseline, and takes one Adam step.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use teamsched_autodiff::{Adam, AdamConfig, Checkpoint, Gradients, Graph, Var};
use teamsched_core::{EnvConfig, MultiRoundEnv, Observation, ProblemInstance};

use crate::error::{PolicyError, TrainError};
use crate::hetgraph::build_het_graph;
use crate::net::{Encoded, HybridNet, PolicyConfig};
use crate::rollout::{decode, generate_schedule, DecodeMode, Decisions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// Per-round mean return of the batch.
    Step,
    /// Return of a frozen greedy copy of the policy, refreshed from the
    /// learner every `refresh_every` epochs.
    Greedy {
        #[serde(default = "default_refresh")]
        refresh_every: u64,
    },
}

fn default_refresh() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch: usize,
    pub gamma: f64,
    pub env: EnvConfig,
    pub optimizer: AdamConfig,
    pub baseline: Baseline,
    pub seed: u64,
    pub grad_norm_ceiling: f64,
    /// Gradients with a larger global norm are rescaled to this norm
    /// before the optimizer step.
    pub grad_clip: Option<f64>,
    /// Consecutive epochs above the ceiling before training aborts.
    pub divergence_patience: u32,
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch: 8,
            gamma: 0.99,
            env: EnvConfig::deterministic(),
            optimizer: AdamConfig::default(),
            baseline: Baseline::Step,
            seed: 0,
            grad_norm_ceiling: 1e6,
            grad_clip: Some(1.0),
            divergence_patience: 100,
            policy: PolicyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    /// Mean undiscounted episode return over the batch.
    pub mean_return: f64,
    /// Fraction of round schedules that were fully feasible.
    pub feasibility: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// `G_t = Σ_{t' ≥ t} γ^{t'-t} R_{t'}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

fn check_rectangular<T>(rows: &[Vec<T>], what: &str) -> Result<usize, TrainError> {
    let width = rows.first().map_or(0, Vec::len);
    if let Some((b, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(TrainError::BatchShape(format!(
            "{what}: episode {b} has {} rounds, episode 0 has {width}",
            r.len()
        )));
    }
    Ok(width)
}

/// Per-round mean of `returns[episode][round]`.
pub fn step_baseline(returns: &[Vec<f64>]) -> Result<Vec<f64>, TrainError> {
    if returns.len() < 2 {
        return Err(TrainError::BatchShape(format!(
            "step baseline needs at least 2 episodes, got {}",
            returns.len()
        )));
    }
    let rounds = check_rectangular(returns, "returns")?;
    let b = returns.len() as f64;
    Ok((0..rounds).map(|r| returns.iter().map(|e| e[r]).sum::<f64>() / b).collect())
}

/// `returns[b][r] - baselines[b][r]`.
pub fn advantages(returns: &[Vec<f64>], baselines: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TrainError> {
    let rounds = check_rectangular(returns, "returns")?;
    if baselines.len() != returns.len() || check_rectangular(baselines, "baselines")? != rounds {
        return Err(TrainError::BatchShape("returns and baselines differ in shape".into()));
    }
    Ok(returns
        .iter()
        .zip(baselines)
        .map(|(g, b)| g.iter().zip(b).map(|(g, b)| g - b).collect())
        .collect())
}

/// Advantages against the step-based baseline; mean-zero per round.
pub fn step_advantages(returns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TrainError> {
    let base = step_baseline(returns)?;
    advantages(returns, &vec![base; returns.len()])
}

/// Surrogate loss `-(1/B) Σ_b Σ_r A[b][r] · log π[b][r]`, whose gradient is
/// the negated policy-gradient estimate.
pub fn policy_gradient_loss(
    g: &mut Graph<'_>,
    log_probs: &[Vec<Var>],
    advantages: &[Vec<f64>],
) -> Result<Var, TrainError> {
    let rounds = check_rectangular(log_probs, "log-probs")?;
    if advantages.len() != log_probs.len() || check_rectangular(advantages, "advantages")? != rounds {
        return Err(TrainError::BatchShape(format!(
            "{} episodes of log-probs but {} of advantages",
            log_probs.len(),
            advantages.len()
        )));
    }
    let scale = -1.0 / log_probs.len().max(1) as f64;
    let mut terms = Vec::new();
    for (lp, adv) in log_probs.iter().zip(advantages) {
        for (&l, &a) in lp.iter().zip(adv) {
            terms.push(g.scale(l, scale * a));
        }
    }
    if terms.is_empty() {
        return Ok(g.scalar(0.0));
    }
    Ok(g.add_all(&terms).map_err(PolicyError::from)?)
}

/// Accumulates the gradient of [`policy_gradient_loss`] into `grads`.
pub fn compute_policy_gradient(
    g: &mut Graph<'_>,
    log_probs: &[Vec<Var>],
    advantages: &[Vec<f64>],
    grads: &mut Gradients,
) -> Result<(), TrainError> {
    let loss = policy_gradient_loss(g, log_probs, advantages)?;
    g.backward(loss, 1.0, grads);
    Ok(())
}

/// Discounted per-round returns of greedy decoding under `net`.
pub fn greedy_returns(
    net: &HybridNet,
    instance: &ProblemInstance,
    env: EnvConfig,
    env_seed: u64,
    gamma: f64,
) -> Result<Vec<f64>, TrainError> {
    let mut env = MultiRoundEnv::new(env);
    let mut obs = env.reset(instance, env_seed).map_err(PolicyError::from)?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut rewards = Vec::new();
    while !env.is_done() {
        let r = generate_schedule(net, &obs, DecodeMode::Greedy, &mut unused)?;
        let out = env.step(&r.schedule).map_err(PolicyError::from)?;
        rewards.push(out.reward);
        obs = out.observation;
    }
    Ok(discounted_returns(&rewards, gamma))
}

fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    rng
}

fn greedy_path(path: &Path) -> PathBuf {
    path.with_extension("greedy.json")
}

#[derive(Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub net: HybridNet,
    adam: Adam,
    greedy: Option<HybridNet>,
    epoch: u64,
    over_ceiling: u32,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        let net = HybridNet::new(config.policy);
        Self::with_net(config, net)
    }

    /// Starts training from existing weights.
    pub fn with_net(mut config: TrainConfig, net: HybridNet) -> Self {
        config.policy = net.config;
        let adam = Adam::new(config.optimizer, &net.params);
        let greedy = matches!(config.baseline, Baseline::Greedy { .. }).then(|| net.clone());
        Self {
            config,
            net,
            adam,
            greedy,
            epoch: 0,
            over_ceiling: 0,
        }
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn greedy_net(&self) -> Option<&HybridNet> {
        self.greedy.as_ref()
    }

    /// Rolls out the next epoch's batch and returns its gradient without
    /// updating anything.
    pub fn epoch_gradients(&self, train: &[ProblemInstance]) -> Result<(Gradients, EpochStats), TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let cfg = &self.config;
        let batch = cfg.batch.max(1);
        let mut rng = epoch_rng(cfg.seed, self.epoch);
        let instance = &train[rng.random_range(0..train.len())];
        let env_seeds: Vec<u64> = (0..batch).map(|_| rng.random()).collect();
        let mut rollout_rngs: Vec<ChaCha8Rng> = (0..batch).map(|_| ChaCha8Rng::from_rng(&mut rng)).collect();

        let mut envs: Vec<MultiRoundEnv> = (0..batch).map(|_| MultiRoundEnv::new(cfg.env)).collect();
        let mut obs: Vec<Observation> = envs
            .iter_mut()
            .zip(&env_seeds)
            .map(|(e, &s)| e.reset(instance, s))
            .collect::<Result<_, _>>()
            .map_err(PolicyError::from)?;

        let mut g = Graph::with_params(&self.net.params);
        let mut log_probs = vec![Vec::new(); batch];
        let mut rewards = vec![Vec::new(); batch];
        let mut feasible = 0usize;
        for _ in 0..cfg.env.rounds {
            // episodes that see the same observation share one encode
            let mut encoded: Vec<(usize, Encoded)> = Vec::new();
            for b in 0..batch {
                let shared = encoded.iter().position(|(src, _)| obs[*src] == obs[b]);
                let idx = match shared {
                    Some(i) => i,
                    None => {
                        let enc = self.net.encode(&mut g, &build_het_graph(&obs[b])).map_err(PolicyError::from)?;
                        encoded.push((b, enc));
                        encoded.len() - 1
                    }
                };
                let enc = &encoded[idx].1;
                let r = decode(
                    &self.net,
                    &mut g,
                    enc,
                    &obs[b],
                    Decisions::Policy(DecodeMode::Sample),
                    &mut rollout_rngs[b],
                )?;
                let out = envs[b].step(&r.schedule).map_err(PolicyError::from)?;
                feasible += usize::from(out.info.is_feasible());
                rewards[b].push(out.reward);
                log_probs[b].push(r.log_prob);
                obs[b] = out.observation;
            }
        }

        let returns: Vec<Vec<f64>> = rewards.iter().map(|r| discounted_returns(r, cfg.gamma)).collect();
        let adv = match (cfg.baseline, &self.greedy) {
            (Baseline::Greedy { .. }, Some(greedy)) => {
                let base = env_seeds
                    .iter()
                    .map(|&s| greedy_returns(greedy, instance, cfg.env, s, cfg.gamma))
                    .collect::<Result<Vec<_>, _>>()?;
                advantages(&returns, &base)?
            }
            _ if batch >= 2 => step_advantages(&returns)?,
            _ => returns.clone(),
        };
        let mut grads = Gradients::for_store(&self.net.params);
        compute_policy_gradient(&mut g, &log_probs, &adv, &mut grads)?;

        let stats = EpochStats {
            epoch: self.epoch,
            mean_return: rewards.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / batch as f64,
            feasibility: feasible as f64 / (batch * cfg.env.rounds).max(1) as f64,
            lr: cfg.optimizer.lr_at(self.epoch),
            grad_norm: grads.norm(),
        };
        Ok((grads, stats))
    }

    /// One full epoch: gradients, divergence guard, Adam step, greedy refresh.
    pub fn step(&mut self, train: &[ProblemInstance]) -> Result<EpochStats, TrainError> {
        let (mut grads, stats) = self.epoch_gradients(train)?;
        if stats.grad_norm <= self.config.grad_norm_ceiling {
            self.over_ceiling = 0;
        } else {
            self.over_ceiling += 1;
            if self.over_ceiling >= self.config.divergence_patience {
                return Err(TrainError::Diverged {
                    ceiling: self.config.grad_norm_ceiling,
                    epochs: self.over_ceiling,
                    epoch: self.epoch,
                });
            }
        }
        if let Some(clip) = self.config.grad_clip {
            if stats.grad_norm > clip {
                grads.scale(clip / stats.grad_norm);
            }
        }
        self.adam.step(&mut self.net.params, &grads, self.epoch);
        self.epoch += 1;
        if let Baseline::Greedy { refresh_every } = self.config.baseline {
            if refresh_every > 0 && self.epoch.is_multiple_of(refresh_every) {
                self.greedy = Some(self.net.clone());
            }
        }
        Ok(stats)
    }

    /// Runs `epochs` more epochs, appending rows to `log` when given.
    pub fn run(
        &mut self,
        train: &[ProblemInstance],
        epochs: u64,
        mut log: Option<&mut csv::Writer<File>>,
    ) -> Result<Vec<EpochStats>, TrainError> {
        let mut out = Vec::with_capacity(epochs as usize);
        for _ in 0..epochs {
            let s = self.step(train)?;
            if let Some(w) = log.as_deref_mut() {
                w.serialize(s)?;
                w.flush().map_err(|source| TrainError::Io {
                    path: "training log".into(),
                    source,
                })?;
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Writes learner weights, optimizer state and progress; the greedy
    /// baseline copy goes to a sibling `.greedy.json` file.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let meta = json!({
            "train": self.config,
            "epoch": self.epoch,
            "over_ceiling": self.over_ceiling,
        });
        let mut ckpt = self.net.to_checkpoint(meta);
        ckpt.optimizer = Some(self.adam.clone());
        ckpt.save(path).map_err(PolicyError::from)?;
        if let Some(greedy) = &self.greedy {
            greedy.save(&greedy_path(path))?;
        }
        Ok(())
    }

    pub fn resume(path: &Path) -> Result<Self, TrainError> {
        let ckpt = Checkpoint::load(path).map_err(PolicyError::from)?;
        let net = HybridNet::from_checkpoint(&ckpt)?;
        let extra = &ckpt.meta["extra"];
        let config: TrainConfig = serde_json::from_value(extra["train"].clone())?;
        let missing = |what: &str| PolicyError::Metadata(format!("training checkpoint lacks {what}"));
        let epoch = extra["epoch"].as_u64().ok_or_else(|| missing("epoch"))?;
        let over_ceiling = extra["over_ceiling"].as_u64().ok_or_else(|| missing("over_ceiling"))? as u32;
        let adam = ckpt.optimizer.ok_or_else(|| missing("optimizer state"))?;
        let greedy = match config.baseline {
            Baseline::Greedy { .. } => Some(HybridNet::load(&greedy_path(path))?),
            Baseline::Step => None,
        };
        Ok(Self {
            config,
            net,
            adam,
            greedy,
            epoch,
            over_ceiling,
        })
    }
}

/// Trains a fresh policy for `config.epochs` epochs.
pub fn train(
    dataset: &[ProblemInstance],
    config: &TrainConfig,
    log_path: Option<&Path>,
) -> Result<Trainer, TrainError> {
    let mut trainer = Trainer::new(config.clone());
    let mut writer = match log_path {
        Some(p) => Some(csv::Writer::from_path(p)?),
        None => None,
    };
    trainer.run(dataset, config.epochs, writer.as_mut())?;
    Ok(trainer)
}
