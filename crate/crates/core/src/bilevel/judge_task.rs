use super::{run, BilevelError, Split, Task, TrainConfig, TrainState};
use crate::diffcore::{ParamVector, Tape, Var};
use crate::judge::{
    build_prompts, grpo_surrogate, kto_samples, loss_dpo, loss_kto, loss_orpo, sample_group,
    sample_preferences, select_deterministic, GrpoGroup, JudgeCheckpoint, JudgeParams, KtoSample,
    LossConfig, Objective, PreferencePair, Prompt, ScorerShape, FEATURE_DIM,
};
use crate::manifest::RunManifest;
use crate::minilang::{Corpus, Domain, NUM_DOMAINS};
use crate::reweight::Strategy;
use crate::rng::{derive_seed, seeded, Stream};
use serde::{Deserialize, Serialize};

/// Rollouts per prompt when building offline preference data.
pub const RESPONSES_PER_PROMPT: usize = 4;

/// A prompt with the preference data its objective trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSample {
    pub prompt: Prompt,
    pub pairs: Vec<PreferencePair>,
    pub kto: Vec<KtoSample>,
}

impl TaskSample {
    fn new(prompt: Prompt, pairs: Vec<PreferencePair>) -> Self {
        let kto = kto_samples(&pairs);
        Self { prompt, pairs, kto }
    }

    /// Ground-truth preference: the correct side over the other one.
    fn truth(prompt: Prompt) -> Option<Self> {
        let side = prompt.correct_side()?;
        let pair = PreferencePair {
            prompt: 0,
            chosen: side.into(),
            rejected: side.other().into(),
            label: side,
        };
        Some(Self::new(prompt, vec![pair]))
    }
}

/// A realized sample: GRPO carries the group drawn for this iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeItem {
    pub split: Split,
    pub index: usize,
    pub group: Option<GrpoGroup>,
}

/// The judge objective as a lower/upper task. Training preference data is
/// sampled once from the reference policy; meta preference data is the
/// ground-truth pair of each meta prompt.
#[derive(Debug, Clone)]
pub struct JudgeTask {
    pub objective: Objective,
    pub loss: LossConfig,
    pub reference: JudgeParams,
    pub train: Vec<TaskSample>,
    pub meta: Vec<TaskSample>,
}

impl JudgeTask {
    pub fn new(
        objective: Objective,
        loss: LossConfig,
        reference: JudgeParams,
        train_prompts: Vec<Prompt>,
        meta_prompts: Vec<Prompt>,
        rng: &mut Stream,
    ) -> Result<Self, BilevelError> {
        let train = if objective == Objective::Grpo {
            train_prompts
                .into_iter()
                .map(|p| TaskSample::new(p, Vec::new()))
                .collect()
        } else {
            let prefs = sample_preferences(
                &reference,
                &train_prompts,
                RESPONSES_PER_PROMPT,
                loss.eps_malformed,
                rng,
            )?;
            train_prompts
                .into_iter()
                .zip(prefs)
                .filter(|(_, pairs)| !pairs.is_empty())
                .map(|(p, pairs)| TaskSample::new(p, pairs))
                .collect()
        };
        let meta = meta_prompts
            .into_iter()
            .filter_map(TaskSample::truth)
            .collect();
        Ok(Self {
            objective,
            loss,
            reference,
            train,
            meta,
        })
    }

    fn sample(&self, split: Split, index: usize) -> &TaskSample {
        match split {
            Split::Train => &self.train[index],
            Split::Meta => &self.meta[index],
        }
    }

    fn judge_at(&self, phi: &[f64]) -> JudgeParams {
        JudgeParams {
            shape: self.reference.shape,
            params: ParamVector::new(phi.to_vec()),
            tau: self.reference.tau,
        }
    }

    fn mean(tape: &mut Tape, terms: &[Var]) -> Var {
        let total = tape.sum(terms);
        tape.scale(total, 1.0 / terms.len() as f64)
    }
}

impl Task for JudgeTask {
    type Item = JudgeItem;

    fn num_params(&self) -> usize {
        self.reference.num_params()
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn meta_len(&self) -> usize {
        self.meta.len()
    }

    fn num_domains(&self) -> usize {
        NUM_DOMAINS
    }

    fn domain_of(&self, train_index: usize) -> usize {
        self.train[train_index].prompt.domain.index()
    }

    fn item(
        &self,
        split: Split,
        index: usize,
        phi: &[f64],
        rng: &mut Stream,
    ) -> Result<JudgeItem, BilevelError> {
        let group = if self.objective == Objective::Grpo {
            let judge = self.judge_at(phi);
            Some(sample_group(
                &judge,
                &self.sample(split, index).prompt,
                &self.loss,
                rng,
            )?)
        } else {
            None
        };
        Ok(JudgeItem {
            split,
            index,
            group,
        })
    }

    fn loss(&self, tape: &mut Tape, params: &[Var], item: &JudgeItem) -> Var {
        let s = self.sample(item.split, item.index);
        let j = &self.reference;
        let cfg = &self.loss;
        match self.objective {
            Objective::Dpo => {
                let terms: Vec<Var> = s
                    .pairs
                    .iter()
                    .map(|p| loss_dpo(tape, j, params, &self.reference, &s.prompt, p, cfg))
                    .collect();
                Self::mean(tape, &terms)
            }
            Objective::Orpo => {
                let terms: Vec<Var> = s
                    .pairs
                    .iter()
                    .map(|p| loss_orpo(tape, j, params, &s.prompt, p, cfg))
                    .collect();
                Self::mean(tape, &terms)
            }
            Objective::Kto => {
                let terms: Vec<Var> = s
                    .kto
                    .iter()
                    .map(|k| loss_kto(tape, j, params, &self.reference, &s.prompt, k, cfg))
                    .collect();
                Self::mean(tape, &terms)
            }
            Objective::Grpo => {
                let group = item.group.as_ref().expect("grpo items carry a group");
                grpo_surrogate(tape, j, params, &s.prompt, group, cfg)
            }
        }
    }
}

/// Fraction of prompts with exactly one correct candidate on which the
/// deterministic judge picks it.
pub fn pairwise_accuracy(judge: &JudgeParams, prompts: &[Prompt]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for p in prompts {
        let Some(side) = p.correct_side() else {
            continue;
        };
        total += 1;
        let pick = select_deterministic(judge, &p.features_a.0, &p.features_b.0)
            .expect("features match the judge");
        if pick == side {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Judge checkpoint plus the raw weight parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelCheckpoint {
    pub judge: JudgeCheckpoint,
    pub weights: Strategy,
}

impl BilevelCheckpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub judge: JudgeParams,
    pub state: TrainState,
    pub manifest: RunManifest,
    pub train_prompts: Vec<Prompt>,
    pub meta_prompts: Vec<Prompt>,
    pub train_samples: usize,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> BilevelCheckpoint {
        BilevelCheckpoint {
            judge: JudgeCheckpoint::new(&self.judge, self.manifest.id()),
            weights: self.state.strategy.clone(),
        }
    }
}

const SEED_LABELS: [&str; 7] = [
    "train-prompts",
    "meta-prompts",
    "judge-init",
    "preferences",
    "net-init",
    "lower-sampling",
    "upper-sampling",
];

/// The manifest [`train_judge`] records for `config` on `corpus`.
pub fn train_manifest(config: &TrainConfig, loss: &LossConfig, corpus: &Corpus) -> RunManifest {
    let mut manifest = RunManifest::new(
        "train",
        config.seed,
        serde_json::json!({ "train": config, "loss": loss }),
    );
    for label in SEED_LABELS {
        manifest
            .seeds
            .insert(label.to_string(), derive_seed(config.seed, label));
    }
    for pool in corpus.pools() {
        manifest
            .corpus_hashes
            .insert(pool.name.clone(), pool.content_hash());
    }
    manifest
}

/// Trains a judge on the lower pool of `corpus` with weights driven by its
/// meta pool.
pub fn train_judge(
    config: &TrainConfig,
    loss: LossConfig,
    corpus: &Corpus,
) -> Result<TrainOutcome, BilevelError> {
    config.validate()?;
    let s = |label: &str| seeded(derive_seed(config.seed, label));
    let train_prompts = build_prompts(&corpus.lower, &mut s("train-prompts"));
    let meta_prompts = build_prompts(&corpus.meta, &mut s("meta-prompts"));
    let reference = JudgeParams::init(
        ScorerShape::new(FEATURE_DIM, config.hidden),
        &mut s("judge-init"),
    );
    let task = JudgeTask::new(
        config.objective,
        loss,
        reference.clone(),
        train_prompts.clone(),
        meta_prompts.clone(),
        &mut s("preferences"),
    )?;
    if task.meta_len() == 0 && config.strategy != crate::reweight::StrategyKind::None {
        return Err(BilevelError::EmptyMetaBatch);
    }
    let strategy = Strategy::new(
        config.strategy,
        NUM_DOMAINS,
        task.train_len(),
        &mut s("net-init"),
    );
    let manifest = train_manifest(config, &loss, corpus);

    let mut state = TrainState::new(&task, config, reference.params.values.clone(), strategy)?;
    run(&task, config, &mut state, &Domain::all())?;
    let judge = task.judge_at(&state.phi);
    Ok(TrainOutcome {
        judge,
        train_samples: task.train_len(),
        state,
        manifest,
        train_prompts,
        meta_prompts,
    })
}
