//! Best-of-N selection by multi-round pairwise voting, with random and
//! oracle baselines and pass@1 reporting.

use crate::judge::{
    featurize, select_deterministic, select_pair, FeatureVector, JudgeError, JudgeParams, Side,
};
use crate::minilang::{Difficulty, Pool, PoolProblem};
use crate::rng::{derive_seed, seeded};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_ROUNDS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectorError {
    #[error("no candidates to select from")]
    Empty,
    #[error("rounds must be at least 1")]
    NoRounds,
    #[error("the judge method needs a judge checkpoint")]
    MissingJudge,
    #[error("unknown selection method {0:?} (expected judge, random or oracle)")]
    UnknownMethod(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

/// A pairwise comparator over candidate indices.
pub trait Preference {
    fn compare<R: Rng>(
        &self,
        first: usize,
        second: usize,
        rng: &mut R,
    ) -> Result<Side, SelectorError>;
}

/// The learned judge over precomputed candidate features.
pub struct JudgePreference<'a> {
    pub judge: &'a JudgeParams,
    pub features: &'a [FeatureVector],
    /// Sample from the softmax instead of taking the argmax.
    pub sampled: bool,
}

impl Preference for JudgePreference<'_> {
    fn compare<R: Rng>(
        &self,
        first: usize,
        second: usize,
        rng: &mut R,
    ) -> Result<Side, SelectorError> {
        let (a, b) = (&self.features[first].0, &self.features[second].0);
        Ok(if self.sampled {
            select_pair(self.judge, a, b, rng)?.0
        } else {
            select_deterministic(self.judge, a, b)?
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub votes: Vec<usize>,
    pub rounds: usize,
    pub seed: u64,
}

impl VoteTally {
    pub fn total(&self) -> usize {
        self.votes.iter().sum()
    }
}

/// R rounds of voting over `n` candidates. Each round draws two distinct
/// candidates uniformly (an unordered pair, shown in random order); the
/// preferred one gains a vote. The most-voted candidate wins, ties broken
/// uniformly at random.
pub fn best_of_n<P: Preference>(
    pref: &P,
    n: usize,
    rounds: usize,
    seed: u64,
) -> Result<(usize, VoteTally), SelectorError> {
    if n == 0 {
        return Err(SelectorError::Empty);
    }
    if rounds == 0 {
        return Err(SelectorError::NoRounds);
    }
    if n == 1 {
        return Ok((
            0,
            VoteTally {
                votes: vec![0],
                rounds: 0,
                seed,
            },
        ));
    }
    let mut rng = seeded(seed);
    let mut votes = vec![0usize; n];
    for _ in 0..rounds {
        let first = rng.gen_range(0..n);
        let mut second = rng.gen_range(0..n - 1);
        if second >= first {
            second += 1;
        }
        let winner = match pref.compare(first, second, &mut rng)? {
            Side::A => first,
            Side::B => second,
        };
        votes[winner] += 1;
    }
    let top = *votes.iter().max().expect("n >= 2");
    let leaders: Vec<usize> = (0..n).filter(|&i| votes[i] == top).collect();
    let chosen = leaders[rng.gen_range(0..leaders.len())];
    Ok((
        chosen,
        VoteTally {
            votes,
            rounds,
            seed,
        },
    ))
}

pub fn random_select<R: Rng>(n: usize, rng: &mut R) -> Result<usize, SelectorError> {
    if n == 0 {
        return Err(SelectorError::Empty);
    }
    Ok(rng.gen_range(0..n))
}

/// First correct candidate, else the first one.
pub fn oracle_select(labels: &[bool]) -> Result<usize, SelectorError> {
    if labels.is_empty() {
        return Err(SelectorError::Empty);
    }
    Ok(labels.iter().position(|&c| c).unwrap_or(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Judge,
    Random,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Judge, Method::Random, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Judge => "judge",
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| SelectorError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub rounds: usize,
    pub sampled: bool,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            sampled: false,
        }
    }
}

/// One problem's outcome under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemResult {
    pub problem_id: String,
    pub domain: String,
    pub difficulty: Difficulty,
    pub method: Method,
    pub chosen: String,
    pub is_correct: bool,
    /// Votes per candidate, separated by `;` (empty for baselines).
    pub votes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub problems: usize,
    pub pass_at_1: f64,
    pub easy: Option<f64>,
    pub medium: Option<f64>,
    pub hard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub pool: String,
    pub seed: u64,
    pub rounds: usize,
    pub rows: Vec<ProblemResult>,
    pub summaries: Vec<MethodSummary>,
}

impl SelectionReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Per-problem rows; columns: problem_id, domain, difficulty, method,
    /// chosen, is_correct, votes.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Aggregate pass@1 per method and difficulty.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "pool": self.pool,
            "seed": self.seed,
            "rounds": self.rounds,
            "methods": self.summaries,
        }))
        .expect("summary serializes")
    }
}

fn problem_seed(master: u64, method: Method, problem_id: &str) -> u64 {
    derive_seed(master, &format!("select/{method}/{problem_id}"))
}

fn select_one(
    method: Method,
    pp: &PoolProblem,
    judge: Option<&JudgeParams>,
    config: &SelectConfig,
    master: u64,
) -> Result<ProblemResult, SelectorError> {
    let seed = problem_seed(master, method, &pp.problem.id);
    let labels: Vec<bool> = pp.candidates.iter().map(|c| c.is_correct).collect();
    let (chosen, votes) = match method {
        Method::Oracle => (oracle_select(&labels)?, String::new()),
        Method::Random => (
            random_select(labels.len(), &mut seeded(seed))?,
            String::new(),
        ),
        Method::Judge => {
            let judge = judge.ok_or(SelectorError::MissingJudge)?;
            let features: Vec<FeatureVector> = pp
                .candidates
                .iter()
                .map(|c| featurize(&pp.problem, c))
                .collect();
            let pref = JudgePreference {
                judge,
                features: &features,
                sampled: config.sampled,
            };
            let (chosen, tally) = best_of_n(&pref, labels.len(), config.rounds, seed)?;
            let votes = tally
                .votes
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            (chosen, votes)
        }
    };
    Ok(ProblemResult {
        problem_id: pp.problem.id.clone(),
        domain: pp.problem.domain.name(),
        difficulty: pp.problem.domain.difficulty,
        method,
        chosen: pp.candidates[chosen].id.clone(),
        is_correct: labels[chosen],
        votes,
    })
}

fn pass_rate<'a>(rows: impl Iterator<Item = &'a ProblemResult>) -> Option<f64> {
    let (mut hits, mut n) = (0usize, 0usize);
    for r in rows {
        n += 1;
        hits += r.is_correct as usize;
    }
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Runs every method on every problem of `pool`. Problems are processed in
/// parallel with per-problem streams derived from (`seed`, method,
/// problem id), so the report does not depend on the thread count.
pub fn evaluate(
    methods: &[Method],
    pool: &Pool,
    judge: Option<&JudgeParams>,
    config: &SelectConfig,
    seed: u64,
) -> Result<SelectionReport, SelectorError> {
    if methods.contains(&Method::Judge) && judge.is_none() {
        return Err(SelectorError::MissingJudge);
    }
    let mut rows = Vec::with_capacity(methods.len() * pool.problems.len());
    let mut summaries = Vec::with_capacity(methods.len());
    for &method in methods {
        let results = pool
            .problems
            .par_iter()
            .map(|pp| select_one(method, pp, judge, config, seed))
            .collect::<Result<Vec<_>, _>>()?;
        let slice = |d: Difficulty| pass_rate(results.iter().filter(|r| r.difficulty == d));
        summaries.push(MethodSummary {
            method,
            problems: results.len(),
            pass_at_1: pass_rate(results.iter()).unwrap_or(0.0),
            easy: slice(Difficulty::Easy),
            medium: slice(Difficulty::Medium),
            hard: slice(Difficulty::Hard),
        });
        rows.extend(results);
    }
    Ok(SelectionReport {
        pool: pool.name.clone(),
        seed,
        rounds: config.rounds,
        rows,
        summaries,
    })
}

/// Expected pass@1 of uniform random selection: the mean per-problem
/// fraction of correct candidates.
pub fn random_expectation(pool: &Pool) -> f64 {
    if pool.problems.is_empty() {
        return 0.0;
    }
    pool.problems
        .iter()
        .map(|pp| {
            pp.candidates.iter().filter(|c| c.is_correct).count() as f64
                / pp.candidates.len() as f64
        })
        .sum::<f64>()
        / pool.problems.len() as f64
}

/// Deterministic preference from a fixed ranking (lower rank wins).
#[derive(Debug, Clone)]
pub struct RankPreference {
    pub rank: Vec<usize>,
}

impl Preference for RankPreference {
    fn compare<R: Rng>(
        &self,
        first: usize,
        second: usize,
        _rng: &mut R,
    ) -> Result<Side, SelectorError> {
        Ok(if self.rank[first] <= self.rank[second] {
            Side::A
        } else {
            Side::B
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_uses_no_rounds() {
        let (c, t) = best_of_n(&RankPreference { rank: vec![0] }, 1, 8, 1).unwrap();
        assert_eq!(c, 0);
        assert_eq!(t.rounds, 0);
        assert_eq!(t.total(), 0);
    }

    #[test]
    fn two_candidates_all_votes_to_preferred() {
        let (c, t) = best_of_n(&RankPreference { rank: vec![1, 0] }, 2, 8, 5).unwrap();
        assert_eq!(c, 1);
        assert_eq!(t.votes, vec![0, 8]);
    }

    #[test]
    fn errors() {
        let p = RankPreference { rank: vec![] };
        assert_eq!(best_of_n(&p, 0, 8, 0), Err(SelectorError::Empty));
        assert_eq!(
            best_of_n(&RankPreference { rank: vec![0, 1] }, 2, 0, 0),
            Err(SelectorError::NoRounds)
        );
        assert_eq!(oracle_select(&[]), Err(SelectorError::Empty));
        assert_eq!(random_select(0, &mut seeded(0)), Err(SelectorError::Empty));
    }

    #[test]
    fn oracle_cases() {
        assert_eq!(oracle_select(&[false, true, false]).unwrap(), 1);
        assert_eq!(oracle_select(&[false, false]).unwrap(), 0);
        assert_eq!(oracle_select(&[true, true]).unwrap(), 0);
    }

    #[test]
    fn random_is_seeded() {
        let a = random_select(4, &mut seeded(9)).unwrap();
        let b = random_select(4, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(random_select(1, &mut seeded(3)).unwrap(), 0);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
