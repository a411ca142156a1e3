use crate::diffcore::{ParamVector, Tape, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::JudgeError;

pub const DEFAULT_HIDDEN: usize = 16;

/// Layer sizes of the two-hidden-layer tanh scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerShape {
    pub input: usize,
    pub hidden: usize,
}

impl ScorerShape {
    pub fn new(input: usize, hidden: usize) -> Self {
        Self { input, hidden }
    }

    /// W1 (hidden×input), b1, W2 (hidden×hidden), b2, w3 (hidden), b3.
    pub fn num_params(&self) -> usize {
        let (i, h) = (self.input, self.hidden);
        h * i + h + h * h + h + h + 1
    }
}

/// Judge parameters φ plus the pairwise softmax temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeParams {
    pub shape: ScorerShape,
    pub params: ParamVector,
    pub tau: f64,
}

impl JudgeParams {
    /// Uniform fan-in scaled initialization, τ = 1.
    pub fn init<R: Rng>(shape: ScorerShape, rng: &mut R) -> Self {
        let (i, h) = (shape.input, shape.hidden);
        let mut values = Vec::with_capacity(shape.num_params());
        let mut layer = |fan_in: usize, weights: usize, biases: usize, values: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..weights).map(|_| rng.gen_range(-bound..bound)));
            values.extend(std::iter::repeat_n(0.0, biases));
        };
        layer(i, h * i, h, &mut values);
        layer(h, h * h, h, &mut values);
        layer(h, h, 1, &mut values);
        Self {
            shape,
            params: ParamVector::new(values),
            tau: 1.0,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn check_features(&self, x: &[f64]) -> Result<(), JudgeError> {
        if x.len() != self.shape.input {
            return Err(JudgeError::Dimension {
                expected: self.shape.input,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Score in plain arithmetic. Summation order matches [`Self::score_on`]
    /// so the two agree bit for bit.
    pub fn score(&self, x: &[f64]) -> f64 {
        score_values(self.shape, &self.params.values, x)
    }

    /// Score recorded on `tape`, differentiable with respect to `params`
    /// (which must be bound in [`ParamVector`] order).
    pub fn score_on(&self, tape: &mut Tape, params: &[Var], x: &[f64]) -> Var {
        score_graph(self.shape, tape, params, x)
    }
}

fn affine_plain(w: &[f64], x: &[f64], b: f64) -> f64 {
    let mut acc = w[0] * x[0];
    for k in 1..x.len() {
        acc += w[k] * x[k];
    }
    acc + b
}

pub(crate) fn score_values(shape: ScorerShape, p: &[f64], x: &[f64]) -> f64 {
    let (i, h) = (shape.input, shape.hidden);
    let (w1, rest) = p.split_at(h * i);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h * h);
    let (b2, rest) = rest.split_at(h);
    let (w3, b3) = rest.split_at(h);
    let h1: Vec<f64> = (0..h)
        .map(|r| affine_plain(&w1[r * i..(r + 1) * i], x, b1[r]).tanh())
        .collect();
    let h2: Vec<f64> = (0..h)
        .map(|r| affine_plain(&w2[r * h..(r + 1) * h], &h1, b2[r]).tanh())
        .collect();
    affine_plain(w3, &h2, b3[0])
}

fn affine_graph(tape: &mut Tape, w: &[Var], x: &[Var], b: Var) -> Var {
    let mut acc = tape.mul(w[0], x[0]);
    for k in 1..x.len() {
        let t = tape.mul(w[k], x[k]);
        acc = tape.add(acc, t);
    }
    tape.add(acc, b)
}

pub(crate) fn score_graph(shape: ScorerShape, tape: &mut Tape, p: &[Var], x: &[f64]) -> Var {
    let (i, h) = (shape.input, shape.hidden);
    let (w1, rest) = p.split_at(h * i);
    let (b1, rest) = rest.split_at(h);
    let (w2, rest) = rest.split_at(h * h);
    let (b2, rest) = rest.split_at(h);
    let (w3, b3) = rest.split_at(h);
    let xs: Vec<Var> = x.iter().map(|&v| tape.constant(v)).collect();
    let h1: Vec<Var> = (0..h)
        .map(|r| {
            let z = affine_graph(tape, &w1[r * i..(r + 1) * i], &xs, b1[r]);
            tape.tanh(z)
        })
        .collect();
    let h2: Vec<Var> = (0..h)
        .map(|r| {
            let z = affine_graph(tape, &w2[r * h..(r + 1) * h], &h1, b2[r]);
            tape.tanh(z)
        })
        .collect();
    affine_graph(tape, w3, &h2, b3[0])
}
