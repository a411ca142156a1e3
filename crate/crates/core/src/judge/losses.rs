use crate::diffcore::{Tape, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::policy::{
    log_prob, log_prob_from_gap, malformed_log_prob, reward, score_gap_on, select_pair,
    PreferencePair, Prompt, Selection,
};
use super::scorer::JudgeParams;
use super::JudgeError;

pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_GROUP_SIZE: usize = 16;
pub const DEFAULT_EPS_MALFORMED: f64 = 0.02;
pub const ADVANTAGE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Dpo,
    Kto,
    Orpo,
    Grpo,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Dpo,
        Objective::Kto,
        Objective::Orpo,
        Objective::Grpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Dpo => "dpo",
            Objective::Kto => "kto",
            Objective::Orpo => "orpo",
            Objective::Grpo => "grpo",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = JudgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| JudgeError::UnknownObjective(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub group_size: usize,
    pub eps_malformed: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            group_size: DEFAULT_GROUP_SIZE,
            eps_malformed: DEFAULT_EPS_MALFORMED,
        }
    }
}

/// −log σ(β[(logπ(c) − logπ_ref(c)) − (logπ(r) − logπ_ref(r))]).
/// The reference policy enters as constants.
pub fn loss_dpo(
    tape: &mut Tape,
    judge: &JudgeParams,
    params: &[Var],
    reference: &JudgeParams,
    prompt: &Prompt,
    pair: &PreferencePair,
    cfg: &LossConfig,
) -> Var {
    let gap = score_gap_on(tape, judge, params, prompt);
    let lc = log_prob_from_gap(tape, gap, pair.chosen, cfg.eps_malformed);
    let lr = log_prob_from_gap(tape, gap, pair.rejected, cfg.eps_malformed);
    let ref_c = log_prob(reference, prompt, pair.chosen, cfg.eps_malformed);
    let ref_r = log_prob(reference, prompt, pair.rejected, cfg.eps_malformed);
    let d = tape.sub(lc, lr);
    let margin = tape.add_const(d, ref_r - ref_c);
    let inner = tape.scale(margin, cfg.beta);
    let ls = tape.log_sigmoid(inner);
    tape.neg(ls)
}

/// A single response tagged desirable (reward 1) or undesirable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KtoSample {
    pub prompt: usize,
    pub selection: Selection,
    pub desirable: bool,
}

/// Splits preference pairs into balanced desirable/undesirable samples.
pub fn kto_samples(pairs: &[PreferencePair]) -> Vec<KtoSample> {
    pairs
        .iter()
        .flat_map(|p| {
            [
                KtoSample {
                    prompt: p.prompt,
                    selection: p.chosen,
                    desirable: true,
                },
                KtoSample {
                    prompt: p.prompt,
                    selection: p.rejected,
                    desirable: false,
                },
            ]
        })
        .collect()
}

/// KTO value loss with reference point 0 and unit weights:
/// 1 − σ(β·r) for desirable and 1 − σ(−β·r) for undesirable samples,
/// where r = logπ(y) − logπ_ref(y).
pub fn loss_kto(
    tape: &mut Tape,
    judge: &JudgeParams,
    params: &[Var],
    reference: &JudgeParams,
    prompt: &Prompt,
    sample: &KtoSample,
    cfg: &LossConfig,
) -> Var {
    let gap = score_gap_on(tape, judge, params, prompt);
    let lp = log_prob_from_gap(tape, gap, sample.selection, cfg.eps_malformed);
    let ref_lp = log_prob(reference, prompt, sample.selection, cfg.eps_malformed);
    let r = tape.add_const(lp, -ref_lp);
    let signed = tape.scale(
        r,
        if sample.desirable {
            cfg.beta
        } else {
            -cfg.beta
        },
    );
    let s = tape.sigmoid(signed);
    let ns = tape.neg(s);
    tape.add_const(ns, 1.0)
}

fn log_odds(tape: &mut Tape, gap: Var, selection: Selection, eps_malformed: f64) -> Var {
    match selection {
        Selection::A => gap,
        Selection::B => tape.neg(gap),
        Selection::Malformed => {
            let lp = malformed_log_prob(eps_malformed);
            tape.constant(lp - (-lp.exp()).ln_1p())
        }
    }
}

/// NLL(chosen) + β·(−log σ(log odds(chosen) − log odds(rejected))).
pub fn loss_orpo(
    tape: &mut Tape,
    judge: &JudgeParams,
    params: &[Var],
    prompt: &Prompt,
    pair: &PreferencePair,
    cfg: &LossConfig,
) -> Var {
    let gap = score_gap_on(tape, judge, params, prompt);
    let lc = log_prob_from_gap(tape, gap, pair.chosen, cfg.eps_malformed);
    let nll = tape.neg(lc);
    let oc = log_odds(tape, gap, pair.chosen, cfg.eps_malformed);
    let or = log_odds(tape, gap, pair.rejected, cfg.eps_malformed);
    let d = tape.sub(oc, or);
    let ls = tape.log_sigmoid(d);
    let odds_term = tape.scale(ls, -cfg.beta);
    tape.add(nll, odds_term)
}

/// Â_j = (r_j − mean r)/(std r + ε), population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + ADVANTAGE_EPS;
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// A sampled group of responses to one prompt with their fixed advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoGroup {
    pub selections: Vec<Selection>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Draws `cfg.group_size` responses from the current policy, with malformed
/// responses injected at rate `cfg.eps_malformed`.
pub fn sample_group<R: Rng>(
    judge: &JudgeParams,
    prompt: &Prompt,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<GrpoGroup, JudgeError> {
    if cfg.group_size < 2 {
        return Err(JudgeError::GroupTooSmall(cfg.group_size));
    }
    let mut selections = Vec::with_capacity(cfg.group_size);
    let mut rewards = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let malformed = rng.gen::<f64>() < cfg.eps_malformed;
        let sel = if malformed {
            Selection::Malformed
        } else {
            select_pair(judge, &prompt.features_a.0, &prompt.features_b.0, rng)?
                .0
                .into()
        };
        selections.push(sel);
        rewards.push(reward(sel, prompt.a_correct, prompt.b_correct, !malformed));
    }
    let advantages = group_advantages(&rewards);
    Ok(GrpoGroup {
        selections,
        rewards,
        advantages,
    })
}

/// −(1/G)·Σ Â_j·logπ(y_j) with the advantages held constant.
pub fn grpo_surrogate(
    tape: &mut Tape,
    judge: &JudgeParams,
    params: &[Var],
    prompt: &Prompt,
    group: &GrpoGroup,
    cfg: &LossConfig,
) -> Var {
    let g = group.selections.len() as f64;
    if group.advantages.iter().all(|&a| a == 0.0) {
        return tape.constant(0.0);
    }
    let gap = score_gap_on(tape, judge, params, prompt);
    let terms: Vec<Var> = group
        .selections
        .iter()
        .zip(&group.advantages)
        .map(|(&sel, &adv)| {
            let lp = log_prob_from_gap(tape, gap, sel, cfg.eps_malformed);
            tape.scale(lp, adv)
        })
        .collect();
    let total = tape.sum(&terms);
    tape.scale(total, -1.0 / g)
}

/// Samples a group and records its surrogate loss.
pub fn loss_grpo<R: Rng>(
    tape: &mut Tape,
    judge: &JudgeParams,
    params: &[Var],
    prompt: &Prompt,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(Var, GrpoGroup), JudgeError> {
    let group = sample_group(judge, prompt, cfg, rng)?;
    let loss = grpo_surrogate(tape, judge, params, prompt, &group, cfg);
    Ok((loss, group))
}
