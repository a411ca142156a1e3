//! Random instances and the measurements taken on them. The core tests
//! assert on these numbers; the acceptance run prints them.

use super::*;
use judgelab_core::bilevel::{JudgeItem, JudgeTask, TrainConfig, TrainState};
use judgelab_core::diffcore::softplus_inv;
use judgelab_core::judge::{
    group_advantages, loss_dpo, loss_grpo, loss_kto, loss_orpo, prob_a, reward, score_gap_on,
    Objective, Side, FEATURE_DIM,
};
use judgelab_core::minilang::{gen_problem, mutate, GeneratorTag, Problem, NUM_DOMAINS};
use judgelab_core::reweight::{Strategy, StrategyKind, NET_HIDDEN};
use judgelab_core::rng::seeded;
use judgelab_core::selector::{Preference, SelectorError};
use rand::seq::SliceRandom;
use std::collections::HashSet;

pub fn tape_grad(phi: &[f64], f: impl FnOnce(&mut Tape, &[Var]) -> Var) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let params = tape.params(phi);
    let l = f(&mut tape, &params);
    let g = tape.backward(l).unwrap();
    (tape.value(l), g)
}

pub struct LossCase {
    pub judge: JudgeParams,
    pub reference: Vec<f64>,
    pub phi: Vec<f64>,
    pub prompt: Prompt,
    pub pair: PreferencePair,
    pub kto: KtoSample,
    pub cfg: LossConfig,
}

impl LossCase {
    pub fn reference_judge(&self) -> JudgeParams {
        JudgeParams {
            params: ParamVector::new(self.reference.clone()),
            ..self.judge.clone()
        }
    }

    /// Tape values of DPO, KTO and ORPO at φ.
    pub fn tape_values(&self) -> [f64; 3] {
        let r = self.reference_judge();
        let (d, _) = tape_grad(&self.phi, |t, p| {
            loss_dpo(t, &self.judge, p, &r, &self.prompt, &self.pair, &self.cfg)
        });
        let (k, _) = tape_grad(&self.phi, |t, p| {
            loss_kto(t, &self.judge, p, &r, &self.prompt, &self.kto, &self.cfg)
        });
        let (o, _) = tape_grad(&self.phi, |t, p| {
            loss_orpo(t, &self.judge, p, &self.prompt, &self.pair, &self.cfg)
        });
        [d, k, o]
    }

    pub fn oracle_values(&self) -> [f64; 3] {
        [
            dpo(
                &self.judge,
                &self.phi,
                &self.reference,
                &self.prompt,
                &self.pair,
                &self.cfg,
            ),
            kto(
                &self.judge,
                &self.phi,
                &self.reference,
                &self.prompt,
                &self.kto,
                &self.cfg,
            ),
            orpo(&self.judge, &self.phi, &self.prompt, &self.pair, &self.cfg),
        ]
    }

    /// Relative error of the tape gradient against finite differences of
    /// the oracle, for DPO, KTO, ORPO and the GRPO surrogate (on a group
    /// drawn from `group_rng`).
    pub fn gradient_errors(&self, group_rng: &mut Stream) -> [f64; 4] {
        let r = self.reference_judge();
        let fd = |analytic: &[f64], f: &dyn Fn(&[f64]) -> f64| {
            rel_err(analytic, &fd_grad(f, &self.phi, 1e-3))
        };
        let (_, gd) = tape_grad(&self.phi, |t, p| {
            loss_dpo(t, &self.judge, p, &r, &self.prompt, &self.pair, &self.cfg)
        });
        let (_, gk) = tape_grad(&self.phi, |t, p| {
            loss_kto(t, &self.judge, p, &r, &self.prompt, &self.kto, &self.cfg)
        });
        let (_, go) = tape_grad(&self.phi, |t, p| {
            loss_orpo(t, &self.judge, p, &self.prompt, &self.pair, &self.cfg)
        });
        let policy = JudgeParams {
            params: ParamVector::new(self.phi.clone()),
            ..self.judge.clone()
        };
        let mut group = None;
        let (_, gg) = tape_grad(&self.phi, |t, p| {
            let (l, grp) = loss_grpo(t, &policy, p, &self.prompt, &self.cfg, group_rng).unwrap();
            group = Some(grp);
            l
        });
        let group = group.unwrap();
        [
            fd(&gd, &|x| {
                dpo(
                    &self.judge,
                    x,
                    &self.reference,
                    &self.prompt,
                    &self.pair,
                    &self.cfg,
                )
            }),
            fd(&gk, &|x| {
                kto(
                    &self.judge,
                    x,
                    &self.reference,
                    &self.prompt,
                    &self.kto,
                    &self.cfg,
                )
            }),
            fd(&go, &|x| {
                orpo(&self.judge, x, &self.prompt, &self.pair, &self.cfg)
            }),
            fd(&gg, &|x| {
                grpo(&self.judge, x, &self.prompt, &group, &self.cfg)
            }),
        ]
    }
}

pub fn loss_case(rng: &mut Stream, hidden: usize) -> LossCase {
    let judge = random_judge(rng, FEATURE_DIM, hidden);
    let reference = judge.params.values.clone();
    let phi = perturbed(rng, &reference, 0.3);
    let pair = random_pair(rng);
    let kto = KtoSample {
        prompt: 0,
        selection: if rng.gen_bool(0.5) {
            pair.chosen
        } else {
            pair.rejected
        },
        desirable: rng.gen_bool(0.5),
    };
    let cfg = LossConfig {
        beta: rng.gen_range(0.05..1.0),
        group_size: 16,
        eps_malformed: rng.gen_range(0.001..0.2),
    };
    LossCase {
        prompt: random_prompt(rng, FEATURE_DIM),
        judge,
        reference,
        phi,
        pair,
        kto,
        cfg,
    }
}

/// Worst |tape − oracle| over DPO, KTO and ORPO on `n` random cases.
pub fn loss_value_deviation(seed: u64, n: usize) -> f64 {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let c = loss_case(&mut rng, 16);
        for (a, b) in c.tape_values().iter().zip(c.oracle_values()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Worst |DPO(φ_ref) − ln 2| on `n` random cases.
pub fn dpo_at_reference_deviation(seed: u64, n: usize) -> f64 {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let c = loss_case(&mut rng, 16);
            let (d, _) = tape_grad(&c.reference, |t, p| {
                loss_dpo(t, &c.judge, p, &c.judge, &c.prompt, &c.pair, &c.cfg)
            });
            (d - std::f64::consts::LN_2).abs()
        })
        .fold(0.0, f64::max)
}

/// Worst gradient error per loss (DPO, KTO, ORPO, GRPO) over `n` cases.
pub fn loss_gradient_errors(seed: u64, n: usize) -> [f64; 4] {
    let mut rng = seeded(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..n {
        let c = loss_case(&mut rng, 16);
        let mut group_rng = seeded(rng.gen());
        for (w, e) in worst.iter_mut().zip(c.gradient_errors(&mut group_rng)) {
            *w = w.max(e);
        }
    }
    worst
}

/// Worst |mean advantage| over `n` random reward groups.
pub fn advantage_centring(seed: u64, n: usize) -> f64 {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let g = rng.gen_range(2..32);
            let rewards: Vec<f64> = (0..g)
                .map(|_| [0.0, 0.5, 1.0][rng.gen_range(0..3)])
                .collect();
            group_advantages(&rewards).iter().sum::<f64>().abs() / g as f64
        })
        .fold(0.0, f64::max)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// d(surrogate)/dΔ for a group holding `na` a's, `nb` b's and `nm`
/// malformed responses.
fn surrogate_slope(na: usize, nb: usize, nm: usize, rewards: [f64; 3], p: f64) -> f64 {
    let mut rs = vec![rewards[0]; na];
    rs.extend(vec![rewards[1]; nb]);
    rs.extend(vec![rewards[2]; nm]);
    let adv = group_advantages(&rs);
    if adv.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let g = rs.len() as f64;
    let (aa, ab) = (
        if na > 0 { adv[0] } else { 0.0 },
        if nb > 0 { adv[na] } else { 0.0 },
    );
    -(na as f64 * aa * (1.0 - p) - nb as f64 * ab * p) / g
}

pub struct GrpoCheck {
    pub exact: f64,
    pub mean: f64,
    pub se: f64,
}

impl GrpoCheck {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.mean - self.exact).abs() <= sigmas * self.se
    }
}

/// Expected surrogate slope along the score gap, by enumerating every
/// group composition, against the mean over `trials` sampled groups. The
/// policy picks a (correct) or b, and with `eps` emits a malformed answer.
pub fn grpo_enumeration(seed: u64, eps: f64, trials: usize) -> GrpoCheck {
    let mut rng = seeded(seed);
    let judge = random_judge(&mut rng, FEATURE_DIM, 16);
    let mut prompt = random_prompt(&mut rng, FEATURE_DIM);
    prompt.a_correct = true;
    prompt.b_correct = false;
    let cfg = LossConfig {
        eps_malformed: eps,
        ..LossConfig::default()
    };
    let g = cfg.group_size;
    let p = prob_a(&judge, &prompt.features_a.0, &prompt.features_b.0).unwrap();
    let rewards = [
        reward(Selection::A, true, false, true),
        reward(Selection::B, true, false, true),
        reward(Selection::Malformed, true, false, false),
    ];
    let (qa, qb, qm) = ((1.0 - eps) * p, (1.0 - eps) * (1.0 - p), eps);
    let mut exact = 0.0;
    for na in 0..=g {
        for nb in 0..=g - na {
            let nm = g - na - nb;
            let prob = binomial(g, na)
                * binomial(g - na, nb)
                * qa.powi(na as i32)
                * qb.powi(nb as i32)
                * qm.powi(nm as i32);
            if prob > 0.0 {
                exact += prob * surrogate_slope(na, nb, nm, rewards, p);
            }
        }
    }

    // Each sampled gradient is projected onto ∇Δ.
    let phi = judge.params.values.clone();
    let (_, dgap) = tape_grad(&phi, |t, v| score_gap_on(t, &judge, v, &prompt));
    let norm2: f64 = dgap.iter().map(|x| x * x).sum();
    let mut stream = seeded(rng.gen());
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..trials {
        let (_, grad) = tape_grad(&phi, |t, v| {
            loss_grpo(t, &judge, v, &prompt, &cfg, &mut stream)
                .unwrap()
                .0
        });
        let slope = grad.iter().zip(&dgap).map(|(a, b)| a * b).sum::<f64>() / norm2;
        s1 += slope;
        s2 += slope * slope;
    }
    let mean = s1 / trials as f64;
    let sd = (s2 / trials as f64 - mean * mean).max(0.0).sqrt();
    GrpoCheck {
        exact,
        mean,
        se: sd / (trials as f64).sqrt(),
    }
}

/// Distinct rewards over every (selection, a correct, b correct,
/// well-formed) combination, ascending.
pub fn reward_image() -> Vec<f64> {
    let mut image = Vec::new();
    for sel in [Selection::A, Selection::B, Selection::Malformed] {
        for a in [false, true] {
            for b in [false, true] {
                for wf in [false, true] {
                    let r = reward(sel, a, b, wf);
                    if !image.contains(&r) {
                        image.push(r);
                    }
                }
            }
        }
    }
    image.sort_by(f64::total_cmp);
    image
}

pub const HYPER_INPUT: usize = 3;
pub const HYPER_HIDDEN: usize = 2;

pub struct Instance {
    pub task: JudgeTask,
    pub judge: JudgeParams,
    pub strategy: Strategy,
    pub phi: Vec<f64>,
    pub beta1: f64,
    pub train: Vec<usize>,
    pub meta: Vec<usize>,
}

/// A judge task on a 17-parameter scorer with random prompts, perturbed
/// weight parameters and a random training batch.
pub fn instance(rng: &mut Stream, objective: Objective, kind: StrategyKind) -> Instance {
    loop {
        let judge = random_judge(rng, HYPER_INPUT, HYPER_HIDDEN);
        let n_train = rng.gen_range(6..14);
        let train_prompts: Vec<Prompt> = (0..n_train)
            .map(|_| random_prompt(rng, HYPER_INPUT))
            .collect();
        let meta_prompts: Vec<Prompt> = (0..rng.gen_range(2..9))
            .map(|_| {
                let mut p = random_prompt(rng, HYPER_INPUT);
                p.b_correct = !p.a_correct;
                p
            })
            .collect();
        let cfg = LossConfig {
            beta: rng.gen_range(0.1..1.0),
            group_size: 8,
            eps_malformed: 0.05,
        };
        let mut prefs = seeded(rng.gen());
        let task = JudgeTask::new(
            objective,
            cfg,
            judge.clone(),
            train_prompts,
            meta_prompts,
            &mut prefs,
        )
        .unwrap();
        if task.train_len() == 0 {
            continue;
        }
        let mut strategy = Strategy::new(kind, NUM_DOMAINS, task.train_len(), rng);
        let spread = if kind == StrategyKind::Net { 0.3 } else { 1.0 };
        for u in strategy.raw_mut() {
            *u += rng.gen_range(-spread..spread);
        }
        let phi = perturbed(rng, &judge.params.values, 0.2);
        let mut train: Vec<usize> = (0..task.train_len()).collect();
        train.shuffle(rng);
        train.truncate(rng.gen_range(1..=8));
        let meta: Vec<usize> = (0..task.meta_len()).take(8).collect();
        return Instance {
            task,
            judge,
            strategy,
            phi,
            beta1: rng.gen_range(0.01..0.5),
            train,
            meta,
        };
    }
}

/// The task's per-sample loss in plain arithmetic.
pub fn sample_loss(task: &JudgeTask, judge: &JudgeParams, phi: &[f64], item: &JudgeItem) -> f64 {
    let samples = match item.split {
        Split::Train => &task.train,
        Split::Meta => &task.meta,
    };
    let s = &samples[item.index];
    let r = &task.reference.params.values;
    let cfg = &task.loss;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    match task.objective {
        Objective::Dpo => mean(
            s.pairs
                .iter()
                .map(|p| dpo(judge, phi, r, &s.prompt, p, cfg))
                .collect(),
        ),
        Objective::Kto => mean(
            s.kto
                .iter()
                .map(|k| kto(judge, phi, r, &s.prompt, k, cfg))
                .collect(),
        ),
        Objective::Orpo => mean(
            s.pairs
                .iter()
                .map(|p| orpo(judge, phi, &s.prompt, p, cfg))
                .collect(),
        ),
        Objective::Grpo => {
            let g = item.group.as_ref().unwrap();
            if g.advantages.iter().all(|&a| a == 0.0) {
                0.0
            } else {
                grpo(judge, phi, &s.prompt, g, cfg)
            }
        }
    }
}

/// Effective weight in plain arithmetic.
pub fn alpha(kind: StrategyKind, u: &[f64], domain: usize, index: usize, loss: f64) -> f64 {
    match kind {
        StrategyKind::None => 1.0,
        StrategyKind::Domain => softplus(u[domain]),
        StrategyKind::Table => softplus(u[index]),
        StrategyKind::Net => softplus(mlp(1, NET_HIDDEN, u, &[loss])),
    }
}

pub fn hyper_config(beta1: f64) -> TrainConfig {
    TrainConfig {
        beta1,
        seed: 5,
        ..TrainConfig::default()
    }
}

/// Engine gradient of the weighted lower objective Σ α_i ℓ_i(φ) against
/// finite differences of the plain losses.
pub fn weighted_lower_error(inst: &Instance) -> f64 {
    let state = TrainState::new(
        &inst.task,
        &hyper_config(inst.beta1),
        inst.phi.clone(),
        inst.strategy.clone(),
    )
    .unwrap();
    let pass = state
        .lower_pass(&inst.task, &inst.phi, &inst.train, 0)
        .unwrap();
    let analytic = pass.weighted_grad(inst.phi.len());
    let kind = inst.strategy.kind();
    let u = inst.strategy.raw();
    // α is evaluated at the current losses and held fixed, as in the step.
    let weights: Vec<f64> = pass
        .indices
        .iter()
        .zip(&pass.items)
        .map(|(&i, it)| {
            alpha(
                kind,
                u,
                inst.task.domain_of(i),
                i,
                sample_loss(&inst.task, &inst.judge, &inst.phi, it),
            )
        })
        .collect();
    let objective = |x: &[f64]| {
        pass.items
            .iter()
            .zip(&weights)
            .map(|(it, a)| a * sample_loss(&inst.task, &inst.judge, x, it))
            .sum::<f64>()
    };
    rel_err(&analytic, &fd_grad(objective, &inst.phi, 1e-3))
}

/// Engine hypergradient against finite differences of
/// u ↦ Σ_j ℓ_j(φ − β1·Σ_i α_i(u)·∇ℓ_i(φ)) with every gradient taken by
/// finite differences of the plain losses.
pub fn hypergradient_error(inst: &Instance) -> f64 {
    let Instance {
        task,
        judge,
        strategy,
        phi,
        beta1,
        train,
        meta,
    } = inst;
    let state =
        TrainState::new(task, &hyper_config(*beta1), phi.clone(), strategy.clone()).unwrap();
    let pass = state.lower_pass(task, phi, train, 0).unwrap();
    let step = pass.weighted_grad(phi.len());
    let phi_prime: Vec<f64> = phi.iter().zip(&step).map(|(p, g)| p - beta1 * g).collect();
    let items = state
        .realize(task, Split::Meta, &phi_prime, meta, 0)
        .unwrap();
    let (_, meta_grad) = state.meta_grad(task, &phi_prime, meta, &items).unwrap();
    let hyper = state
        .hypergradient(
            task,
            std::slice::from_ref(phi),
            std::slice::from_ref(&pass),
            &meta_grad,
            *beta1,
            None,
        )
        .unwrap();

    let kind = strategy.kind();
    let losses: Vec<f64> = pass
        .items
        .iter()
        .map(|it| sample_loss(task, judge, phi, it))
        .collect();
    let grads: Vec<Vec<f64>> = pass
        .items
        .iter()
        .map(|it| fd_grad(|x| sample_loss(task, judge, x, it), phi, 1e-3))
        .collect();
    let objective = |u: &[f64]| {
        let mut next = phi.clone();
        for (k, (&i, g)) in pass.indices.iter().zip(&grads).enumerate() {
            let a = alpha(kind, u, task.domain_of(i), i, losses[k]);
            for (p, gi) in next.iter_mut().zip(g) {
                *p -= beta1 * a * gi;
            }
        }
        items
            .iter()
            .map(|it| sample_loss(task, judge, &next, it))
            .sum::<f64>()
    };
    let numeric = ridders_grad(objective, strategy.raw(), 0.1);
    rel_err(&hyper, &numeric)
}

/// Errors of `measure` on `n` instances of `kind`, objectives cycling.
pub fn sweep(
    kind: StrategyKind,
    seed: u64,
    n: usize,
    measure: fn(&Instance) -> f64,
) -> Vec<(Objective, f64)> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|k| {
            let objective = Objective::ALL[k % 4];
            (objective, measure(&instance(&mut rng, objective, kind)))
        })
        .collect()
}

pub fn worst(errors: &[(Objective, f64)]) -> f64 {
    errors.iter().map(|e| e.1).fold(0.0, f64::max)
}

/// `p[i][j]`: probability that `i` wins when shown first against `j`.
pub struct Matrix(pub Vec<Vec<f64>>);

impl Preference for Matrix {
    fn compare<R: Rng>(
        &self,
        first: usize,
        second: usize,
        rng: &mut R,
    ) -> Result<Side, SelectorError> {
        Ok(if rng.gen::<f64>() < self.0[first][second] {
            Side::A
        } else {
            Side::B
        })
    }
}

/// A fixed asymmetric three-candidate preference.
pub fn three_way() -> Matrix {
    Matrix(vec![
        vec![0.0, 0.7, 0.4],
        vec![0.5, 0.0, 0.9],
        vec![0.8, 0.35, 0.0],
    ])
}

/// Exact winner distribution for three candidates by enumerating all 3^R
/// per-round winner sequences.
pub fn enumerate_votes(p: &Matrix, rounds: usize) -> [f64; 3] {
    let n = 3;
    let mut q = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[i] += p.0[i][j] / 6.0;
                q[j] += (1.0 - p.0[i][j]) / 6.0;
            }
        }
    }
    let mut out = [0.0; 3];
    for code in 0..3usize.pow(rounds as u32) {
        let mut votes = [0usize; 3];
        let mut prob = 1.0;
        let mut c = code;
        for _ in 0..rounds {
            votes[c % 3] += 1;
            prob *= q[c % 3];
            c /= 3;
        }
        let top = *votes.iter().max().unwrap();
        let leaders: Vec<usize> = (0..3).filter(|&i| votes[i] == top).collect();
        for &l in &leaders {
            out[l] += prob / leaders.len() as f64;
        }
    }
    out
}

/// Folds nested `depth` deep, each wrapping the next in its initial value,
/// alongside arithmetic towers of the same depth.
pub fn adversarial_corpus() -> Vec<String> {
    let mut out = Vec::new();
    for depth in [1usize, 8, 32, 64, 128, 200] {
        for op in ["+", "*", "min", "max"] {
            let mut s = "x0".to_string();
            for _ in 0..depth {
                s = format!("(fold {op} {s} xs)");
            }
            out.push(s);
            let mut s = "(fold + 0 xs)".to_string();
            for _ in 0..depth {
                s = format!("(let v {s} (+ v (fold {op} v xs)))");
            }
            out.push(s);
        }
    }
    out
}

/// `n` problems cycling through the domains.
pub fn problems(n: usize, seed: u64) -> Vec<Problem> {
    let mut rng = seeded(seed);
    let mut taken = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let domain = Domain::all()[out.len() % 6];
        if let Some(p) = gen_problem(&mut rng, format!("p{}", out.len()), domain, &mut taken) {
            out.push(p);
        }
    }
    out
}

/// Fraction of correct mutants at 0, 1, 2 and 3 edits, `samples` each.
pub fn mutation_rates(samples: usize, seed: u64) -> [f64; 4] {
    let pool = problems(200, seed);
    let mut rng = seeded(seed + 1);
    let mut rate = |intensity: u32| {
        let hits = (0..samples)
            .filter(|&i| {
                mutate(
                    &pool[i % pool.len()],
                    intensity,
                    GeneratorTag::Weak,
                    "c",
                    &mut rng,
                )
                .is_correct
            })
            .count();
        hits as f64 / samples as f64
    };
    [rate(0), rate(1), rate(2), rate(3)]
}

/// Two-proportion z statistic for `hi` > `lo` with `n` samples each.
pub fn z_two_prop(hi: f64, lo: f64, n: usize) -> f64 {
    let p = (hi + lo) / 2.0;
    (hi - lo) / (2.0 * p * (1.0 - p) / n as f64).sqrt()
}

pub fn scalar_toy() -> Quadratic {
    Quadratic {
        train: vec![0.0],
        meta: vec![0.0],
        domains: vec![0],
    }
}

/// dL_meta/dα at φ = 1, α = 1, β1 = 0.1 on ℓ = φ²/2, recovered from the
/// engine's gradient in the softplus parameter.
pub fn scalar_closed_form() -> f64 {
    let task = scalar_toy();
    let mut strategy = Strategy::new(StrategyKind::Domain, 1, 1, &mut seeded(0));
    strategy.raw_mut()[0] = softplus_inv(1.0);
    let state = TrainState::new(&task, &hyper_config(0.1), vec![1.0], strategy).unwrap();
    let pass = state.lower_pass(&task, &[1.0], &[0], 0).unwrap();
    assert_eq!(pass.weights, vec![1.0]);
    let phi_prime = [1.0 - 0.1 * pass.weighted_grad(1)[0]];
    let items = state
        .realize(&task, Split::Meta, &phi_prime, &[0], 0)
        .unwrap();
    let (_, mg) = state.meta_grad(&task, &phi_prime, &[0], &items).unwrap();
    let hyper = state
        .hypergradient(&task, &[vec![1.0]], &[pass], &mg, 0.1, None)
        .unwrap();
    hyper[0] / logistic(softplus_inv(1.0))
}
