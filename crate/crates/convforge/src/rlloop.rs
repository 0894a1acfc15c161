//! RL training of the conversation generator: rollouts are scored by
//! summarizing the generated conversation and comparing the machine
//! summary to the ground-truth summary with ROUGE-2 F1; the policy is
//! updated with PPO (clipped surrogate, GAE advantages, clipped value
//! loss) under a per-token KL penalty anchoring it to a frozen reference
//! copy of the pretrained policy.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generators::GeneratedConversation;
use crate::lmbridge::{CausalLm, SamplingParams, Seq2SeqLm, TinyCausalLm};
use crate::metrics::rouge_n_f1;
use crate::seqformat::{encode_sl, EOS};
use crate::{Error, Result};

/// One scored rollout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardRecord {
    pub summary_gt: String,
    pub generated_summary: String,
    pub reward: f64,
}

/// PPO hyperparameters. Defaults follow the reference settings used for
/// the full-scale runs; tests shrink `steps` and raise the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub forward_batch_size: usize,
    pub learning_rate: f64,
    pub init_kl_coef: f64,
    pub kl_target: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub lam: f64,
    pub cliprange: f64,
    pub cliprange_value: f64,
    pub vf_coef: f64,
    /// Whiten advantages jointly across the batch before the update;
    /// off by default. With an untrained value head all raw advantages
    /// share the sign of the reward, so whitening is what lets
    /// above-average rollouts be reinforced and below-average ones
    /// suppressed.
    pub whiten_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            steps: 10_000,
            batch_size: 16,
            forward_batch_size: 4,
            learning_rate: 1.41e-5,
            init_kl_coef: 0.2,
            kl_target: 6.0,
            horizon: 10_000.0,
            gamma: 1.0,
            lam: 0.95,
            cliprange: 0.2,
            cliprange_value: 0.2,
            vf_coef: 0.1,
            whiten_advantages: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Validation(format!(
                "gamma out of (0,1]: {}",
                self.gamma
            )));
        }
        if !(self.lam > 0.0 && self.lam <= 1.0) {
            return Err(Error::Validation(format!("lam out of (0,1]: {}", self.lam)));
        }
        if self.cliprange <= 0.0 {
            return Err(Error::Validation("cliprange must be > 0".into()));
        }
        if self.batch_size == 0 || self.forward_batch_size == 0 {
            return Err(Error::Validation("batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step observability record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoStepStats {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl_coef: f64,
}

/// Full training trace; one entry per executed step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoTrace {
    pub steps: Vec<PpoStepStats>,
    pub skipped_steps: usize,
}

impl PpoTrace {
    /// CSV with columns step, mean_reward, mean_kl, policy_loss,
    /// value_loss, kl_coef.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("step,mean_reward,mean_kl,policy_loss,value_loss,kl_coef\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.step, s.mean_reward, s.mean_kl, s.policy_loss, s.value_loss, s.kl_coef
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// GAE advantages and returns from per-token rewards and value estimates.
///
/// `delta_t = r_t + gamma * V_{t+1} - V_t` with `V_n = 0`, then
/// `A_t = delta_t + gamma * lam * A_{t+1}`.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(n, values.len());
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lam * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Clipped surrogate objective for one (ratio, advantage) pair:
/// `max(-A * r, -A * clip(r, 1 - eps, 1 + eps))` (a loss, lower is better).
pub fn clipped_surrogate(ratio: f64, advantage: f64, cliprange: f64) -> f64 {
    let unclipped = -advantage * ratio;
    let clipped = -advantage * ratio.clamp(1.0 - cliprange, 1.0 + cliprange);
    unclipped.max(clipped)
}

/// Clipped value loss term for one position.
pub fn clipped_value_loss(value: f64, old_value: f64, ret: f64, cliprange_value: f64) -> f64 {
    let clipped = old_value + (value - old_value).clamp(-cliprange_value, cliprange_value);
    0.5 * ((value - ret).powi(2)).max((clipped - ret).powi(2))
}

/// Proportional controller driving the KL coefficient toward `target`
/// with timescale `horizon`.
#[derive(Debug, Clone)]
pub struct AdaptiveKlController {
    pub coef: f64,
    target: f64,
    horizon: f64,
}

impl AdaptiveKlController {
    pub fn new(init_coef: f64, target: f64, horizon: f64) -> Self {
        AdaptiveKlController {
            coef: init_coef,
            target,
            horizon,
        }
    }

    pub fn update(&mut self, observed_kl: f64, n_samples: usize) {
        let err = (observed_kl / self.target - 1.0).clamp(-0.2, 0.2);
        self.coef *= 1.0 + err * n_samples as f64 / self.horizon;
    }
}

/// Summarize-then-overlap reward: run the summarizer on the linearized
/// conversation and take ROUGE-2 F1 against the ground-truth summary.
/// Malformed conversations are scored on their raw text; the result is
/// always in [0, 1] and never an error.
pub fn compute_reward(
    conv: &GeneratedConversation,
    summary_gt: &str,
    summarizer: &dyn Seq2SeqLm,
) -> Result<RewardRecord> {
    if summary_gt.trim().is_empty() {
        return Err(Error::Validation("empty ground-truth summary".into()));
    }
    let text = conv.linearized();
    let generated_summary = summarizer.summarize(&text)?;
    let reward = rouge_n_f1(&generated_summary, summary_gt, 2).clamp(0.0, 1.0);
    Ok(RewardRecord {
        summary_gt: summary_gt.to_string(),
        generated_summary,
        reward,
    })
}

struct Rollout {
    ids: Vec<usize>,
    gen_start: usize,
    reward: f64,
    old_logps: Vec<f64>,
    ref_logps: Vec<f64>,
    old_values: Vec<f64>,
}

const PPO_EPOCHS: usize = 4;

/// PPO training loop over summary prompts, with a pluggable scalar reward
/// on the generated text. [`train_rl`] wires in the summarizer reward.
pub fn train_rl_with_reward<R>(
    policy: &mut TinyCausalLm,
    reference: &TinyCausalLm,
    summaries: &[String],
    cfg: &PpoConfig,
    params: &SamplingParams,
    mut reward_fn: R,
) -> Result<PpoTrace>
where
    R: FnMut(&str, &str) -> f64, // (generated text, ground-truth summary) -> reward
{
    cfg.validate()?;
    if summaries.is_empty() {
        return Err(Error::Validation("no training summaries".into()));
    }
    let mut trace = PpoTrace::default();
    let mut kl_ctl = AdaptiveKlController::new(cfg.init_kl_coef, cfg.kl_target, cfg.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for step in 0..cfg.steps {
        // rollout phase
        let mut rollouts: Vec<Rollout> = Vec::with_capacity(cfg.batch_size);
        let mut rewards_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut kl_tokens = 0usize;
        for _ in 0..cfg.batch_size {
            let summary = &summaries[rng.gen_range(0..summaries.len())];
            let prompt = encode_sl(summary, None)?;
            let sample_params = SamplingParams {
                seed: rng.gen(),
                ..params.clone()
            };
            let out = policy.sample(&prompt, &sample_params, &[EOS])?;
            if out.token_ids.is_empty() {
                continue;
            }
            let prompt_ids = policy.vocab.encode(&prompt.text);
            let gen_start = prompt_ids.len();
            let mut ids = prompt_ids;
            ids.extend(&out.token_ids);

            let (old_logps_all, old_values_all) = policy.logprobs_values(&ids);
            let (ref_logps_all, _) = reference.logprobs_values(&ids);
            // prediction row i covers token ids[i + 1]; generated tokens
            // start at row gen_start - 1
            let lo = gen_start - 1;
            let old_logps = old_logps_all[lo..].to_vec();
            let ref_logps = ref_logps_all[lo..].to_vec();
            let old_values = old_values_all[lo..].to_vec();

            let reward = reward_fn(&out.text, summary).clamp(0.0, 1.0);
            rewards_sum += reward;
            for (a, b) in old_logps.iter().zip(&ref_logps) {
                kl_sum += a - b;
            }
            kl_tokens += old_logps.len();
            rollouts.push(Rollout {
                ids,
                gen_start,
                reward,
                old_logps,
                ref_logps,
                old_values,
            });
        }
        if rollouts.is_empty() {
            trace.skipped_steps += 1;
            continue;
        }
        let mean_reward = rewards_sum / rollouts.len() as f64;
        let mean_kl = if kl_tokens > 0 {
            kl_sum / kl_tokens as f64
        } else {
            0.0
        };

        // shaped per-token rewards: KL penalty everywhere, task reward at
        // the final generated token
        struct Prepared {
            advantages: Vec<f64>,
            returns: Vec<f64>,
        }
        let mut prepared = Vec::with_capacity(rollouts.len());
        for r in &rollouts {
            let n = r.old_logps.len();
            let mut tok_rewards: Vec<f64> = (0..n)
                .map(|i| -kl_ctl.coef * (r.old_logps[i] - r.ref_logps[i]))
                .collect();
            tok_rewards[n - 1] += r.reward;
            let (advantages, returns) =
                gae_advantages(&tok_rewards, &r.old_values, cfg.gamma, cfg.lam);
            prepared.push(Prepared {
                advantages,
                returns,
            });
        }
        if cfg.whiten_advantages {
            let mut all: Vec<f64> = prepared
                .iter()
                .flat_map(|p| p.advantages.iter().copied())
                .collect();
            whiten(&mut all);
            let mut offset = 0;
            for p in &mut prepared {
                let n = p.advantages.len();
                p.advantages.copy_from_slice(&all[offset..offset + n]);
                offset += n;
            }
        }

        // optimization phase
        let mut last_policy_loss = 0.0;
        let mut last_value_loss = 0.0;
        for _ in 0..PPO_EPOCHS {
            let mut policy_loss = 0.0;
            let mut value_loss = 0.0;
            let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(rollouts.len());
            for (r, p) in rollouts.iter().zip(&prepared) {
                let (new_logps_all, new_values_all) = policy.logprobs_values(&r.ids);
                let lo = r.gen_start - 1;
                let t_total = r.ids.len() - 1;
                let n = r.old_logps.len();
                let mut dlogp = vec![0.0; t_total];
                let mut dvalue = vec![0.0; t_total];
                let scale = 1.0 / (rollouts.len() * n) as f64;
                for i in 0..n {
                    let new_lp = new_logps_all[lo + i];
                    let ratio = (new_lp - r.old_logps[i]).exp();
                    let adv = p.advantages[i];
                    policy_loss += clipped_surrogate(ratio, adv, cfg.cliprange) * scale;
                    // gradient of the active branch w.r.t. new_lp
                    let unclipped = -adv * ratio;
                    let clipped_ratio = ratio.clamp(1.0 - cfg.cliprange, 1.0 + cfg.cliprange);
                    let clipped = -adv * clipped_ratio;
                    // gradient flows only through the active max branch;
                    // when the clip is not binding both branches coincide
                    let active =
                        unclipped >= clipped || (clipped_ratio - ratio).abs() < f64::EPSILON;
                    let d = if active { -adv * ratio } else { 0.0 };
                    dlogp[lo + i] = d * scale;

                    let v = new_values_all[lo + i];
                    let vl =
                        clipped_value_loss(v, r.old_values[i], p.returns[i], cfg.cliprange_value);
                    value_loss += vl * scale;
                    let v_clipped = r.old_values[i]
                        + (v - r.old_values[i]).clamp(-cfg.cliprange_value, cfg.cliprange_value);
                    let dv = if (v - p.returns[i]).powi(2) >= (v_clipped - p.returns[i]).powi(2) {
                        v - p.returns[i]
                    } else if (v_clipped - v).abs() < f64::EPSILON {
                        v_clipped - p.returns[i]
                    } else {
                        0.0
                    };
                    dvalue[lo + i] = cfg.vf_coef * dv * scale;
                }
                grads.push((dlogp, dvalue));
            }
            let batch: Vec<crate::lmbridge::PpoGradInput<'_>> = rollouts
                .iter()
                .zip(&grads)
                .map(|(r, (dlogp, dvalue))| crate::lmbridge::PpoGradInput {
                    ids: &r.ids,
                    dlogp,
                    dvalue,
                })
                .collect();
            policy.apply_ppo_grads(&batch, cfg.learning_rate, 1e-8, 1.0);
            last_policy_loss = policy_loss;
            last_value_loss = value_loss;
        }

        kl_ctl.update(mean_kl, cfg.batch_size);
        trace.steps.push(PpoStepStats {
            step,
            mean_reward,
            mean_kl,
            policy_loss: last_policy_loss,
            value_loss: last_value_loss,
            kl_coef: kl_ctl.coef,
        });
    }
    Ok(trace)
}

/// PPO with the standard summarize-then-ROUGE-2 reward.
pub fn train_rl(
    policy: &mut TinyCausalLm,
    reference: &TinyCausalLm,
    summarizer: &dyn Seq2SeqLm,
    summaries: &[String],
    cfg: &PpoConfig,
    params: &SamplingParams,
) -> Result<PpoTrace> {
    train_rl_with_reward(policy, reference, summaries, cfg, params, |text, gt| {
        let (turns, well_formed) = crate::seqformat::decode_conversation(text);
        let conv_text = if well_formed {
            crate::seqformat::linearize(&turns)
        } else {
            text.to_string()
        };
        summarizer
            .summarize(&conv_text)
            .map(|s| rouge_n_f1(&s, gt, 2).clamp(0.0, 1.0))
            .unwrap_or(0.0)
    })
}

fn whiten(xs: &mut [f64]) {
    let n = xs.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for x in xs.iter_mut() {
        *x = (*x - mean) / std;
    }
}
