//! Data weights α for the lower-level objective: one per domain, one per
//! training sample, or a small network of the sample's current loss. Every
//! parameterization passes raw parameters through softplus, so weights stay
//! strictly positive.

use crate::diffcore::{dot, sigmoid, softplus, softplus_inv, ParamVector, Tape, Var};
use crate::minilang::Domain;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const NET_HIDDEN: usize = 10;
const NET_OUTPUT_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReweightError {
    #[error("unknown domain {domain} (strategy has {k} domains)")]
    UnknownDomain { domain: usize, k: usize },
    #[error("sample index {index} out of range for a table of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("instance net input must be finite, got {0}")]
    NonFiniteLoss(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("dispersion needs at least 2 weights, got {0}")]
    TooFewWeights(usize),
    #[error("unknown strategy {0:?} (expected none, domain, table or net)")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    None,
    Domain,
    Table,
    Net,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::None,
        StrategyKind::Domain,
        StrategyKind::Table,
        StrategyKind::Net,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::Domain => "domain",
            StrategyKind::Table => "table",
            StrategyKind::Net => "net",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = ReweightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| ReweightError::UnknownStrategy(s.to_string()))
    }
}

/// What a strategy may key a weight on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleKey {
    pub index: usize,
    pub domain: usize,
}

/// α_k = softplus(u_k), initialized to 1/K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainWeights {
    pub raw: Vec<f64>,
}

impl DomainWeights {
    pub fn new(k: usize) -> Self {
        Self {
            raw: vec![softplus_inv(1.0 / k as f64); k],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.raw.iter().map(|&u| softplus(u)).collect()
    }
}

/// α_i = softplus(u_i), initialized to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTable {
    pub raw: Vec<f64>,
}

impl InstanceTable {
    pub fn new(n: usize) -> Self {
        Self {
            raw: vec![softplus_inv(1.0); n],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.raw.iter().map(|&u| softplus(u)).collect()
    }
}

/// α = softplus(net_θ(ℓ)) with two tanh hidden layers of 10 units.
/// Layout: W1 (10×1), b1, W2 (10×10), b2, w3 (10), b3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceNet {
    pub theta: ParamVector,
}

impl InstanceNet {
    pub fn num_params() -> usize {
        let h = NET_HIDDEN;
        h + h + h * h + h + h + 1
    }

    /// Hidden weights uniform in ±1/√fan_in, near-zero output weights and a
    /// final bias of softplus⁻¹(1), so every initial weight is close to 1.
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        let h = NET_HIDDEN;
        let mut v = Vec::with_capacity(Self::num_params());
        v.extend((0..h).map(|_| rng.gen_range(-1.0..1.0)));
        v.extend(std::iter::repeat_n(0.0, h));
        let bound = 1.0 / (h as f64).sqrt();
        v.extend((0..h * h).map(|_| rng.gen_range(-bound..bound)));
        v.extend(std::iter::repeat_n(0.0, h));
        v.extend((0..h).map(|_| rng.gen_range(-NET_OUTPUT_INIT_SCALE..NET_OUTPUT_INIT_SCALE)));
        v.push(softplus_inv(1.0));
        Self {
            theta: ParamVector::new(v),
        }
    }

    pub fn zeros() -> Self {
        Self {
            theta: ParamVector::zeros(Self::num_params()),
        }
    }

    /// Pre-softplus output in plain arithmetic.
    fn logit(theta: &[f64], loss: f64) -> f64 {
        let h = NET_HIDDEN;
        let (w1, rest) = theta.split_at(h);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h * h);
        let (b2, rest) = rest.split_at(h);
        let (w3, b3) = rest.split_at(h);
        let h1: Vec<f64> = (0..h).map(|r| (w1[r] * loss + b1[r]).tanh()).collect();
        let h2: Vec<f64> = (0..h)
            .map(|r| {
                let row = &w2[r * h..(r + 1) * h];
                let mut acc = row[0] * h1[0];
                for k in 1..h {
                    acc += row[k] * h1[k];
                }
                (acc + b2[r]).tanh()
            })
            .collect();
        let mut out = w3[0] * h2[0];
        for k in 1..h {
            out += w3[k] * h2[k];
        }
        out + b3[0]
    }

    pub fn weight(&self, loss: f64) -> f64 {
        softplus(Self::logit(&self.theta.values, loss))
    }

    /// Weight recorded on `tape` as a function of bound θ; the loss enters
    /// as a constant.
    pub fn weight_on(tape: &mut Tape, theta: &[Var], loss: f64) -> Var {
        let h = NET_HIDDEN;
        let (w1, rest) = theta.split_at(h);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h * h);
        let (b2, rest) = rest.split_at(h);
        let (w3, b3) = rest.split_at(h);
        let x = tape.constant(loss);
        let h1: Vec<Var> = (0..h)
            .map(|r| {
                let m = tape.mul(w1[r], x);
                let z = tape.add(m, b1[r]);
                tape.tanh(z)
            })
            .collect();
        let h2: Vec<Var> = (0..h)
            .map(|r| {
                let row = &w2[r * h..(r + 1) * h];
                let mut acc = tape.mul(row[0], h1[0]);
                for k in 1..h {
                    let t = tape.mul(row[k], h1[k]);
                    acc = tape.add(acc, t);
                }
                let z = tape.add(acc, b2[r]);
                tape.tanh(z)
            })
            .collect();
        let mut out = tape.mul(w3[0], h2[0]);
        for k in 1..h {
            let t = tape.mul(w3[k], h2[k]);
            out = tape.add(out, t);
        }
        let z = tape.add(out, b3[0]);
        tape.softplus(z)
    }
}

/// The active weighting scheme and its raw parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum Strategy {
    None,
    Domain(DomainWeights),
    Table(InstanceTable),
    Net(InstanceNet),
}

impl Strategy {
    /// Fresh state: `domains` groups for the domain strategy, `samples`
    /// rows for the table.
    pub fn new<R: Rng>(kind: StrategyKind, domains: usize, samples: usize, rng: &mut R) -> Self {
        match kind {
            StrategyKind::None => Strategy::None,
            StrategyKind::Domain => Strategy::Domain(DomainWeights::new(domains)),
            StrategyKind::Table => Strategy::Table(InstanceTable::new(samples)),
            StrategyKind::Net => Strategy::Net(InstanceNet::init(rng)),
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::None => StrategyKind::None,
            Strategy::Domain(_) => StrategyKind::Domain,
            Strategy::Table(_) => StrategyKind::Table,
            Strategy::Net(_) => StrategyKind::Net,
        }
    }

    pub fn raw(&self) -> &[f64] {
        match self {
            Strategy::None => &[],
            Strategy::Domain(d) => &d.raw,
            Strategy::Table(t) => &t.raw,
            Strategy::Net(n) => &n.theta.values,
        }
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        match self {
            Strategy::None => &mut [],
            Strategy::Domain(d) => &mut d.raw,
            Strategy::Table(t) => &mut t.raw,
            Strategy::Net(n) => &mut n.theta.values,
        }
    }

    pub fn num_raw(&self) -> usize {
        self.raw().len()
    }

    /// α for one sample. `loss` is only read by the net.
    pub fn weight_of(&self, key: SampleKey, loss: f64) -> Result<f64, ReweightError> {
        match self {
            Strategy::None => Ok(1.0),
            Strategy::Domain(d) => {
                d.raw
                    .get(key.domain)
                    .map(|&u| softplus(u))
                    .ok_or(ReweightError::UnknownDomain {
                        domain: key.domain,
                        k: d.raw.len(),
                    })
            }
            Strategy::Table(t) => {
                t.raw
                    .get(key.index)
                    .map(|&u| softplus(u))
                    .ok_or(ReweightError::IndexOutOfRange {
                        index: key.index,
                        len: t.raw.len(),
                    })
            }
            Strategy::Net(n) => {
                if !loss.is_finite() {
                    return Err(ReweightError::NonFiniteLoss(loss));
                }
                Ok(n.weight(loss))
            }
        }
    }

    /// ∂/∂u Σ_i c_i·α_i over the raw parameters u.
    pub fn weighted_sum_grad(
        &self,
        keys: &[SampleKey],
        losses: &[f64],
        coeffs: &[f64],
    ) -> Result<Vec<f64>, ReweightError> {
        if keys.len() != coeffs.len() || keys.len() != losses.len() {
            return Err(ReweightError::Dimension {
                expected: keys.len(),
                got: coeffs.len().min(losses.len()),
            });
        }
        for (&k, &l) in keys.iter().zip(losses) {
            self.weight_of(k, l)?;
        }
        let mut grad = vec![0.0; self.num_raw()];
        match self {
            Strategy::None => {}
            Strategy::Domain(d) => {
                for (k, c) in keys.iter().zip(coeffs) {
                    grad[k.domain] += c * sigmoid(d.raw[k.domain]);
                }
            }
            Strategy::Table(t) => {
                for (k, c) in keys.iter().zip(coeffs) {
                    grad[k.index] += c * sigmoid(t.raw[k.index]);
                }
            }
            Strategy::Net(n) => {
                let mut tape = Tape::new();
                let theta = n.theta.bind(&mut tape);
                let terms: Vec<Var> = losses
                    .iter()
                    .zip(coeffs)
                    .map(|(&l, &c)| {
                        let w = InstanceNet::weight_on(&mut tape, &theta, l);
                        tape.scale(w, c)
                    })
                    .collect();
                if !terms.is_empty() {
                    let total = tape.sum(&terms);
                    grad = tape.backward(total).expect("weights are finite");
                }
            }
        }
        Ok(grad)
    }

    /// Hypergradient of the one-step-unrolled meta loss over the raw
    /// parameters: −β1·Σ_i (∂α_i/∂u)·⟨∇ℓ_i(φ), ∇L_meta(φ′)⟩.
    pub fn strategy_grad(
        &self,
        keys: &[SampleKey],
        losses: &[f64],
        sample_grads: &[Vec<f64>],
        meta_grad: &[f64],
        beta1: f64,
    ) -> Result<Vec<f64>, ReweightError> {
        let coeffs = sample_grads
            .iter()
            .map(|g| {
                if g.len() != meta_grad.len() {
                    return Err(ReweightError::Dimension {
                        expected: meta_grad.len(),
                        got: g.len(),
                    });
                }
                Ok(-beta1 * dot(g, meta_grad))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.weighted_sum_grad(keys, losses, &coeffs)
    }

    /// Trajectory rows: per-domain for the domain strategy, per-sample for
    /// table and net (the net at each sample's supplied loss), and a single
    /// constant row for none.
    pub fn snapshot(&self, domains: &[Domain], losses: &[f64]) -> Vec<(String, f64)> {
        match self {
            Strategy::None => vec![("all".to_string(), 1.0)],
            Strategy::Domain(d) => d
                .weights()
                .into_iter()
                .enumerate()
                .map(|(k, w)| {
                    let name = domains
                        .get(k)
                        .map(|d| d.name())
                        .unwrap_or_else(|| format!("domain-{k}"));
                    (name, w)
                })
                .collect(),
            Strategy::Table(t) => t
                .weights()
                .into_iter()
                .enumerate()
                .map(|(i, w)| (i.to_string(), w))
                .collect(),
            Strategy::Net(n) => losses
                .iter()
                .enumerate()
                .map(|(i, &l)| (i.to_string(), n.weight(l)))
                .collect(),
        }
    }
}

/// Population variance of the weights.
pub fn dispersion(weights: &[f64]) -> Result<f64, ReweightError> {
    if weights.len() < 2 {
        return Err(ReweightError::TooFewWeights(weights.len()));
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    Ok(weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n)
}

/// One row of the weight-trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub strategy: StrategyKind,
    pub key: String,
    pub effective_weight: f64,
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
