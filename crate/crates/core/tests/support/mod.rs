//! Plain-arithmetic oracles shared by the integration tests and the
//! acceptance run. The loss oracles never touch the tape.
#![allow(dead_code)]

pub mod cases;

use judgelab_core::bilevel::{BilevelError, Split, Task};
use judgelab_core::diffcore::ParamVector;
use judgelab_core::diffcore::{Tape, Var};
use judgelab_core::judge::{
    FeatureVector, GrpoGroup, JudgeParams, KtoSample, LossConfig, PreferencePair, Prompt,
    ScorerShape, Selection,
};
use judgelab_core::minilang::{Difficulty, Domain, Family};
use judgelab_core::rng::Stream;
use rand::Rng;

pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Two-hidden-layer tanh MLP, written with iterator sums.
pub fn mlp(input: usize, hidden: usize, p: &[f64], x: &[f64]) -> f64 {
    let mut at = 0;
    let mut take = |n: usize| {
        let s = &p[at..at + n];
        at += n;
        s
    };
    let w1 = take(hidden * input);
    let b1 = take(hidden);
    let w2 = take(hidden * hidden);
    let b2 = take(hidden);
    let w3 = take(hidden);
    let b3 = take(1)[0];
    let h1: Vec<f64> = (0..hidden)
        .map(|r| {
            (w1[r * input..][..input]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + b1[r])
                .tanh()
        })
        .collect();
    let h2: Vec<f64> = (0..hidden)
        .map(|r| {
            (w2[r * hidden..][..hidden]
                .iter()
                .zip(&h1)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + b2[r])
                .tanh()
        })
        .collect();
    w3.iter().zip(&h2).map(|(w, v)| w * v).sum::<f64>() + b3
}

pub fn gap(judge: &JudgeParams, phi: &[f64], prompt: &Prompt) -> f64 {
    let s = judge.shape;
    (mlp(s.input, s.hidden, phi, &prompt.features_a.0)
        - mlp(s.input, s.hidden, phi, &prompt.features_b.0))
        / judge.tau
}

pub fn logp(judge: &JudgeParams, phi: &[f64], prompt: &Prompt, sel: Selection, eps: f64) -> f64 {
    let d = gap(judge, phi, prompt);
    match sel {
        Selection::A => ln_sigmoid(d),
        Selection::B => ln_sigmoid(-d),
        Selection::Malformed => eps.max(1e-12).ln(),
    }
}

pub fn dpo(
    judge: &JudgeParams,
    phi: &[f64],
    reference: &[f64],
    prompt: &Prompt,
    pair: &PreferencePair,
    cfg: &LossConfig,
) -> f64 {
    let lp = |p: &[f64], s| logp(judge, p, prompt, s, cfg.eps_malformed);
    let margin = (lp(phi, pair.chosen) - lp(reference, pair.chosen))
        - (lp(phi, pair.rejected) - lp(reference, pair.rejected));
    -ln_sigmoid(cfg.beta * margin)
}

pub fn kto(
    judge: &JudgeParams,
    phi: &[f64],
    reference: &[f64],
    prompt: &Prompt,
    s: &KtoSample,
    cfg: &LossConfig,
) -> f64 {
    let r = logp(judge, phi, prompt, s.selection, cfg.eps_malformed)
        - logp(judge, reference, prompt, s.selection, cfg.eps_malformed);
    if s.desirable {
        1.0 - logistic(cfg.beta * r)
    } else {
        1.0 - logistic(-cfg.beta * r)
    }
}

fn odds(judge: &JudgeParams, phi: &[f64], prompt: &Prompt, sel: Selection, eps: f64) -> f64 {
    let p = logp(judge, phi, prompt, sel, eps).exp();
    (p / (1.0 - p)).ln()
}

pub fn orpo(
    judge: &JudgeParams,
    phi: &[f64],
    prompt: &Prompt,
    pair: &PreferencePair,
    cfg: &LossConfig,
) -> f64 {
    let nll = -logp(judge, phi, prompt, pair.chosen, cfg.eps_malformed);
    let d = odds(judge, phi, prompt, pair.chosen, cfg.eps_malformed)
        - odds(judge, phi, prompt, pair.rejected, cfg.eps_malformed);
    nll - cfg.beta * ln_sigmoid(d)
}

pub fn grpo(
    judge: &JudgeParams,
    phi: &[f64],
    prompt: &Prompt,
    group: &GrpoGroup,
    cfg: &LossConfig,
) -> f64 {
    let g = group.selections.len() as f64;
    -group
        .selections
        .iter()
        .zip(&group.advantages)
        .map(|(&s, &a)| a * logp(judge, phi, prompt, s, cfg.eps_malformed))
        .sum::<f64>()
        / g
}

/// Five-point central difference.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut at = |d: f64| {
                p[i] = x[i] + d;
                let v = f(&p);
                p[i] = x[i];
                v
            };
            let (f1, f_1, f2, f_2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * h)
        })
        .collect()
}

/// ‖a − b‖∞ / max(‖a‖∞, ‖b‖∞), zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = inf(a).max(inf(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences refined by Ridders' extrapolation: the step starts at
/// `h` and shrinks by 1.4 per round, and each coordinate keeps the tableau
/// entry with the smallest error estimate. Suits objectives whose value is
/// large next to their slope, where a fixed small step drowns in rounding.
pub fn ridders_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    const CON: f64 = 1.4;
    const ROUNDS: usize = 10;
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut central = |d: f64| {
                p[i] = x[i] + d;
                let up = f(&p);
                p[i] = x[i] - d;
                let down = f(&p);
                p[i] = x[i];
                (up - down) / (2.0 * d)
            };
            let mut step = h;
            let mut prev = vec![central(step)];
            let (mut best, mut best_err) = (prev[0], f64::INFINITY);
            for _ in 1..ROUNDS {
                step /= CON;
                let mut row = vec![central(step)];
                let mut fac = CON * CON;
                for j in 1..=prev.len() {
                    let next = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
                    fac *= CON * CON;
                    let err = (next - row[j - 1]).abs().max((next - prev[j - 1]).abs());
                    if err <= best_err {
                        best_err = err;
                        best = next;
                    }
                    row.push(next);
                }
                if (row[prev.len()] - prev[prev.len() - 1]).abs() >= 2.0 * best_err {
                    break;
                }
                prev = row;
            }
            best
        })
        .collect()
}

/// `rel_err` with the scale floored at `floor`, for comparisons whose
/// exact value may vanish and the estimate then only carries noise.
pub fn close(a: &[f64], b: &[f64], tol: f64, floor: f64) -> bool {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff <= tol * inf(a).max(inf(b)).max(floor)
}

pub fn random_judge(rng: &mut Stream, input: usize, hidden: usize) -> JudgeParams {
    let shape = ScorerShape::new(input, hidden);
    JudgeParams {
        shape,
        params: ParamVector::new(
            (0..shape.num_params())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        ),
        tau: rng.gen_range(0.5..2.0),
    }
}

pub fn perturbed(rng: &mut Stream, phi: &[f64], scale: f64) -> Vec<f64> {
    phi.iter()
        .map(|x| x + rng.gen_range(-scale..scale))
        .collect()
}

pub fn random_prompt(rng: &mut Stream, dim: usize) -> Prompt {
    let domain = Domain::new(
        Family::ALL[rng.gen_range(0..2)],
        Difficulty::ALL[rng.gen_range(0..3)],
    );
    let a_correct = rng.gen_bool(0.5);
    let b_correct = if rng.gen_bool(0.8) {
        !a_correct
    } else {
        a_correct
    };
    let feats =
        |rng: &mut Stream| FeatureVector((0..dim).map(|_| rng.gen_range(0.0..1.0)).collect());
    Prompt {
        problem_id: format!("p{}", rng.gen::<u32>()),
        domain,
        candidate_a: "a".into(),
        candidate_b: "b".into(),
        features_a: feats(rng),
        features_b: feats(rng),
        a_correct,
        b_correct,
    }
}

pub fn random_pair(rng: &mut Stream) -> PreferencePair {
    const ALL: [Selection; 3] = [Selection::A, Selection::B, Selection::Malformed];
    let chosen = ALL[rng.gen_range(0..2)];
    let rejected = loop {
        let r = ALL[rng.gen_range(0..3)];
        if r != chosen {
            break r;
        }
    };
    PreferencePair {
        prompt: 0,
        chosen,
        rejected,
        label: chosen.side().expect("chosen is well-formed"),
    }
}

/// ℓ_tr = α·φ²/2 per training sample and ℓ_meta = φ²/2 on scalar φ, with
/// per-sample offsets so the samples differ: ℓ_i = (φ − c_i)²/2.
pub struct Quadratic {
    pub train: Vec<f64>,
    pub meta: Vec<f64>,
    pub domains: Vec<usize>,
}

impl Task for Quadratic {
    type Item = (Split, usize);

    fn num_params(&self) -> usize {
        1
    }
    fn train_len(&self) -> usize {
        self.train.len()
    }
    fn meta_len(&self) -> usize {
        self.meta.len()
    }
    fn num_domains(&self) -> usize {
        self.domains.iter().max().map_or(1, |m| m + 1)
    }
    fn domain_of(&self, i: usize) -> usize {
        self.domains[i]
    }
    fn item(
        &self,
        split: Split,
        index: usize,
        _phi: &[f64],
        _rng: &mut Stream,
    ) -> Result<Self::Item, BilevelError> {
        Ok((split, index))
    }
    fn loss(&self, tape: &mut Tape, params: &[Var], item: &Self::Item) -> Var {
        let c = match item.0 {
            Split::Train => self.train[item.1],
            Split::Meta => self.meta[item.1],
        };
        let d = tape.add_const(params[0], -c);
        let sq = tape.mul(d, d);
        tape.scale(sq, 0.5)
    }
}
