use crate::diffcore::{log_sigmoid, sigmoid, Tape, Var};
use crate::minilang::{Candidate, Domain, Pool};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::features::{featurize, FeatureVector};
use super::scorer::JudgeParams;
use super::JudgeError;

/// Floor used when turning a malformed-emission probability into a log-prob.
const MIN_MALFORMED_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// A judge response to a pairwise prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    A,
    B,
    Malformed,
}

impl Selection {
    pub fn side(self) -> Option<Side> {
        match self {
            Selection::A => Some(Side::A),
            Selection::B => Some(Side::B),
            Selection::Malformed => None,
        }
    }
}

impl From<Side> for Selection {
    fn from(s: Side) -> Self {
        match s {
            Side::A => Selection::A,
            Side::B => Selection::B,
        }
    }
}

/// Verifiable reward of a selection. Malformed output earns 0; selecting a
/// correct candidate earns 1 (so does any selection when both are correct);
/// everything else earns 0.5, including pairs where neither is correct.
pub fn reward(selection: Selection, a_correct: bool, b_correct: bool, well_formed: bool) -> f64 {
    let picked = match (well_formed, selection) {
        (false, _) | (_, Selection::Malformed) => return 0.0,
        (true, Selection::A) => a_correct,
        (true, Selection::B) => b_correct,
    };
    if picked || (a_correct && b_correct) {
        1.0
    } else {
        0.5
    }
}

/// Pairwise prompt X: one problem and two of its candidates, already
/// featurized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub problem_id: String,
    pub domain: Domain,
    pub candidate_a: String,
    pub candidate_b: String,
    pub features_a: FeatureVector,
    pub features_b: FeatureVector,
    pub a_correct: bool,
    pub b_correct: bool,
}

impl Prompt {
    pub fn new(
        problem_id: &str,
        domain: Domain,
        a: (&Candidate, FeatureVector),
        b: (&Candidate, FeatureVector),
    ) -> Self {
        Self {
            problem_id: problem_id.to_string(),
            domain,
            candidate_a: a.0.id.clone(),
            candidate_b: b.0.id.clone(),
            features_a: a.1,
            features_b: b.1,
            a_correct: a.0.is_correct,
            b_correct: b.0.is_correct,
        }
    }

    pub fn reward(&self, selection: Selection) -> f64 {
        reward(selection, self.a_correct, self.b_correct, true)
    }

    /// The side holding the only correct candidate, if exactly one is.
    pub fn correct_side(&self) -> Option<Side> {
        match (self.a_correct, self.b_correct) {
            (true, false) => Some(Side::A),
            (false, true) => Some(Side::B),
            _ => None,
        }
    }
}

/// One prompt per unordered (correct, incorrect) candidate pair of every
/// problem, with the presentation order drawn at random.
pub fn build_prompts<R: Rng>(pool: &Pool, rng: &mut R) -> Vec<Prompt> {
    let mut prompts = Vec::new();
    for pp in &pool.problems {
        let feats: Vec<FeatureVector> = pp
            .candidates
            .iter()
            .map(|c| featurize(&pp.problem, c))
            .collect();
        for i in 0..pp.candidates.len() {
            for j in (i + 1)..pp.candidates.len() {
                let (ci, cj) = (&pp.candidates[i], &pp.candidates[j]);
                if ci.is_correct == cj.is_correct {
                    continue;
                }
                let (a, b) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
                prompts.push(Prompt::new(
                    &pp.problem.id,
                    pp.problem.domain,
                    (&pp.candidates[a], feats[a].clone()),
                    (&pp.candidates[b], feats[b].clone()),
                ));
            }
        }
    }
    prompts
}

/// Score gap Δ = (s_a − s_b)/τ in plain arithmetic.
pub fn score_gap(judge: &JudgeParams, fa: &[f64], fb: &[f64]) -> Result<f64, JudgeError> {
    judge.check_features(fa)?;
    judge.check_features(fb)?;
    Ok((judge.score(fa) - judge.score(fb)) / judge.tau)
}

/// P(a) under the two-way softmax.
pub fn prob_a(judge: &JudgeParams, fa: &[f64], fb: &[f64]) -> Result<f64, JudgeError> {
    score_gap(judge, fa, fb).map(sigmoid)
}

/// Samples a selection from the two-way softmax and returns it with its
/// log-probability.
pub fn select_pair<R: Rng>(
    judge: &JudgeParams,
    fa: &[f64],
    fb: &[f64],
    rng: &mut R,
) -> Result<(Side, f64), JudgeError> {
    let gap = score_gap(judge, fa, fb)?;
    let u: f64 = rng.gen();
    Ok(if u < sigmoid(gap) {
        (Side::A, log_sigmoid(gap))
    } else {
        (Side::B, log_sigmoid(-gap))
    })
}

/// Argmax selection; ties go to a.
pub fn select_deterministic(
    judge: &JudgeParams,
    fa: &[f64],
    fb: &[f64],
) -> Result<Side, JudgeError> {
    judge.check_features(fa)?;
    judge.check_features(fb)?;
    Ok(if judge.score(fa) >= judge.score(fb) {
        Side::A
    } else {
        Side::B
    })
}

pub fn malformed_log_prob(eps_malformed: f64) -> f64 {
    eps_malformed.max(MIN_MALFORMED_PROB).ln()
}

/// Log-probability of `selection` in plain arithmetic. Well-formed
/// selections use the conditional two-way softmax; a malformed response
/// has the constant log-probability of the injection rate.
pub fn log_prob(
    judge: &JudgeParams,
    prompt: &Prompt,
    selection: Selection,
    eps_malformed: f64,
) -> f64 {
    let gap = (judge.score(&prompt.features_a.0) - judge.score(&prompt.features_b.0)) / judge.tau;
    match selection {
        Selection::A => log_sigmoid(gap),
        Selection::B => log_sigmoid(-gap),
        Selection::Malformed => malformed_log_prob(eps_malformed),
    }
}

/// Gap Δ recorded on the tape.
pub fn score_gap_on(tape: &mut Tape, judge: &JudgeParams, params: &[Var], prompt: &Prompt) -> Var {
    let sa = judge.score_on(tape, params, &prompt.features_a.0);
    let sb = judge.score_on(tape, params, &prompt.features_b.0);
    let d = tape.sub(sa, sb);
    tape.scale(d, 1.0 / judge.tau)
}

/// Log-probability of `selection` given a recorded gap.
pub fn log_prob_from_gap(
    tape: &mut Tape,
    gap: Var,
    selection: Selection,
    eps_malformed: f64,
) -> Var {
    match selection {
        Selection::A => tape.log_sigmoid(gap),
        Selection::B => {
            let n = tape.neg(gap);
            tape.log_sigmoid(n)
        }
        Selection::Malformed => tape.constant(malformed_log_prob(eps_malformed)),
    }
}

/// One training-time response (X, Y) with its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSample {
    pub prompt: usize,
    pub selection: Selection,
    pub behavior_log_prob: f64,
    pub reward: f64,
}

/// Training-time rollout: with probability `eps_malformed` the response is
/// malformed, otherwise it is drawn from the softmax.
pub fn rollout<R: Rng>(
    judge: &JudgeParams,
    prompts: &[Prompt],
    index: usize,
    eps_malformed: f64,
    rng: &mut R,
) -> Result<JudgeSample, JudgeError> {
    let prompt = &prompts[index];
    let malformed = rng.gen::<f64>() < eps_malformed;
    let (selection, lp) = if malformed {
        (Selection::Malformed, malformed_log_prob(eps_malformed))
    } else {
        let (side, lp) = select_pair(judge, &prompt.features_a.0, &prompt.features_b.0, rng)?;
        (Selection::from(side), lp)
    };
    Ok(JudgeSample {
        prompt: index,
        selection,
        behavior_log_prob: lp,
        reward: reward(selection, prompt.a_correct, prompt.b_correct, !malformed),
    })
}

/// Binary preference derived from two responses to one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: usize,
    pub chosen: Selection,
    pub rejected: Selection,
    /// Side of the chosen response.
    pub label: Side,
}

/// Every (reward-1, reward-below-1) response combination of a prompt becomes
/// one pair. Identical (chosen, rejected) combinations are kept once.
pub fn make_pairs(samples: &[JudgeSample]) -> Vec<PreferencePair> {
    let mut by_prompt: BTreeMap<usize, Vec<&JudgeSample>> = BTreeMap::new();
    for s in samples {
        by_prompt.entry(s.prompt).or_default().push(s);
    }
    let mut pairs = Vec::new();
    for (prompt, group) in by_prompt {
        let mut seen = Vec::new();
        for good in group.iter().filter(|s| s.reward == 1.0) {
            for bad in group.iter().filter(|s| s.reward < 1.0) {
                let key = (good.selection, bad.selection);
                if good.selection == bad.selection || seen.contains(&key) {
                    continue;
                }
                seen.push(key);
                let label = good.selection.side().expect("reward 1 implies well-formed");
                pairs.push(PreferencePair {
                    prompt,
                    chosen: good.selection,
                    rejected: bad.selection,
                    label,
                });
            }
        }
    }
    pairs
}

/// Draws `responses` rollouts per prompt from `judge` and collapses them into
/// preference pairs, grouped by prompt index.
pub fn sample_preferences<R: Rng>(
    judge: &JudgeParams,
    prompts: &[Prompt],
    responses: usize,
    eps_malformed: f64,
    rng: &mut R,
) -> Result<Vec<Vec<PreferencePair>>, JudgeError> {
    let mut out = Vec::with_capacity(prompts.len());
    for i in 0..prompts.len() {
        let samples = (0..responses)
            .map(|_| rollout(judge, prompts, i, eps_malformed, rng))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(make_pairs(&samples));
    }
    Ok(out)
}
