//! Synthetic corpora: an easy-skewed weak-generator lower pool, a
//! hard-skewed strong-generator meta pool, and a disjoint test pool.

use super::gen::gen_problem;
use super::mutate::mutate;
use super::problem::{Candidate, Difficulty, Domain, Family, GeneratorTag, Problem};
use crate::rng::{content_hash, stream, Stream};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("infeasible corpus config: {0}")]
    Infeasible(String),
    #[error("could not generate a problem for domain {0}")]
    Generation(Domain),
    #[error("pool schema version {found} is not supported (expected {CORPUS_SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub problems: usize,
    /// Relative weight of easy, medium and hard problems.
    pub difficulty_mix: [f64; 3],
    pub candidates_per_problem: usize,
    pub generator: GeneratorTag,
    /// Weight of each mutation intensity; index = number of edits.
    pub intensity_weights: Vec<f64>,
    /// Probability that a candidate's source is syntactically corrupted.
    pub malformed_rate: f64,
}

impl PoolSpec {
    pub fn weak(problems: usize, difficulty_mix: [f64; 3]) -> Self {
        Self {
            problems,
            difficulty_mix,
            candidates_per_problem: 8,
            generator: GeneratorTag::Weak,
            intensity_weights: vec![0.3, 0.3, 0.2, 0.2],
            malformed_rate: 0.05,
        }
    }

    pub fn strong(problems: usize, difficulty_mix: [f64; 3]) -> Self {
        Self {
            problems,
            difficulty_mix,
            candidates_per_problem: 4,
            generator: GeneratorTag::Strong,
            intensity_weights: vec![0.5, 0.5],
            malformed_rate: 0.0,
        }
    }

    /// Problem counts per domain (indexed by [`Domain::index`]). Difficulty
    /// totals use largest-remainder rounding; each difficulty is split across
    /// the two families with arith taking the odd one.
    pub fn domain_counts(&self) -> Result<[usize; 6], CorpusError> {
        let total: f64 = self.difficulty_mix.iter().sum();
        if self
            .difficulty_mix
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
            || total <= 0.0
        {
            return Err(CorpusError::Infeasible(format!(
                "difficulty mix {:?} must be non-negative with a positive sum",
                self.difficulty_mix
            )));
        }
        let exact: Vec<f64> = self
            .difficulty_mix
            .iter()
            .map(|w| w / total * self.problems as f64)
            .collect();
        let mut per_diff: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut remaining = self.problems - per_diff.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            per_diff[i] += 1;
            remaining -= 1;
        }
        let mut out = [0usize; 6];
        for d in Difficulty::ALL {
            let n = per_diff[d.index()];
            let arith = n.div_ceil(2);
            out[Domain::new(Family::Arith, d).index()] = arith;
            out[Domain::new(Family::List, d).index()] = n - arith;
            if self.difficulty_mix[d.index()] > 0.0 && (arith == 0 || n - arith == 0) {
                return Err(CorpusError::Infeasible(format!(
                    "{} problems requested at difficulty {} leave a domain empty",
                    n,
                    d.name()
                )));
            }
        }
        Ok(out)
    }

    fn validate(&self, name: &str) -> Result<(), CorpusError> {
        if self.problems == 0 {
            return Err(CorpusError::Infeasible(format!(
                "{name} pool has no problems"
            )));
        }
        if self.candidates_per_problem == 0 {
            return Err(CorpusError::Infeasible(format!(
                "{name} pool needs at least one candidate per problem"
            )));
        }
        if self.intensity_weights.is_empty()
            || self
                .intensity_weights
                .iter()
                .any(|w| !(w.is_finite() && *w >= 0.0))
            || self.intensity_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(CorpusError::Infeasible(format!(
                "{name} pool has invalid intensity weights {:?}",
                self.intensity_weights
            )));
        }
        if !(0.0..=1.0).contains(&self.malformed_rate) {
            return Err(CorpusError::Infeasible(format!(
                "{name} pool malformed rate {} outside [0, 1]",
                self.malformed_rate
            )));
        }
        self.domain_counts().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub lower: PoolSpec,
    pub meta: PoolSpec,
    pub test: PoolSpec,
    /// Candidate-set resamples per problem when it lacks a correct or an
    /// incorrect candidate.
    pub max_retries: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            lower: PoolSpec::weak(60, [0.6, 0.3, 0.1]),
            meta: PoolSpec::strong(20, [0.0, 0.3, 0.7]),
            test: PoolSpec::strong(30, [1.0, 1.0, 1.0]),
            max_retries: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolProblem {
    pub problem: Problem,
    pub candidates: Vec<Candidate>,
}

impl PoolProblem {
    pub fn has_correct(&self) -> bool {
        self.candidates.iter().any(|c| c.is_correct)
    }

    pub fn has_incorrect(&self) -> bool {
        self.candidates.iter().any(|c| !c.is_correct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub problems: Vec<PoolProblem>,
}

impl Pool {
    pub fn num_candidates(&self) -> usize {
        self.problems.iter().map(|p| p.candidates.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pool serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        let pool: Pool = serde_json::from_str(s)?;
        if pool.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(CorpusError::Schema {
                found: pool.schema_version,
            });
        }
        Ok(pool)
    }

    pub fn content_hash(&self) -> String {
        content_hash(self.to_json().as_bytes())
    }

    pub fn fraction_in(&self, difficulty: Difficulty) -> f64 {
        if self.problems.is_empty() {
            return 0.0;
        }
        let n = self
            .problems
            .iter()
            .filter(|p| p.problem.domain.difficulty == difficulty)
            .count();
        n as f64 / self.problems.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub lower: Pool,
    pub meta: Pool,
    pub test: Pool,
}

impl Corpus {
    pub fn pools(&self) -> [&Pool; 3] {
        [&self.lower, &self.meta, &self.test]
    }
}

fn corrupt(source: &str) -> String {
    match source.strip_suffix(')') {
        Some(s) => s.to_string(),
        None => format!("{source})"),
    }
}

fn candidate_set(
    problem: &Problem,
    spec: &PoolSpec,
    intensities: &WeightedIndex<f64>,
    rng: &mut Stream,
) -> Vec<Candidate> {
    (0..spec.candidates_per_problem)
        .map(|k| {
            let intensity = intensities.sample(rng) as u32;
            let id = format!("{}#{k}", problem.id);
            let c = mutate(problem, intensity, spec.generator, id.clone(), rng);
            if rng.gen_bool(spec.malformed_rate) {
                Candidate::labelled(id, corrupt(&c.source), problem, spec.generator, intensity)
            } else {
                c
            }
        })
        .collect()
}

fn gen_pool(
    name: &str,
    spec: &PoolSpec,
    seed: u64,
    max_retries: usize,
    taken: &mut HashSet<String>,
) -> Result<Pool, CorpusError> {
    let counts = spec.domain_counts()?;
    let intensities = WeightedIndex::new(&spec.intensity_weights)
        .map_err(|e| CorpusError::Infeasible(format!("{name}: {e}")))?;
    let mut rng = stream(seed, name);
    let mut problems = Vec::with_capacity(spec.problems);
    for domain in Domain::all() {
        for k in 0..counts[domain.index()] {
            let id = format!("{name}-{domain}-{k:03}");
            let problem =
                gen_problem(&mut rng, id, domain, taken).ok_or(CorpusError::Generation(domain))?;
            let mut candidates = candidate_set(&problem, spec, &intensities, &mut rng);
            let mut attempts = 0;
            let mixed = |cs: &[Candidate]| {
                spec.candidates_per_problem < 2
                    || (cs.iter().any(|c| c.is_correct) && cs.iter().any(|c| !c.is_correct))
            };
            while !mixed(&candidates) && attempts < max_retries {
                candidates = candidate_set(&problem, spec, &intensities, &mut rng);
                attempts += 1;
            }
            problems.push(PoolProblem {
                problem,
                candidates,
            });
        }
    }
    Ok(Pool {
        schema_version: CORPUS_SCHEMA_VERSION,
        name: name.to_string(),
        seed,
        problems,
    })
}

/// Generates the three pools from one seed. Reference programs are unique
/// across the whole corpus, so the pools share no problems.
pub fn gen_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.lower.validate("lower")?;
    config.meta.validate("meta")?;
    config.test.validate("test")?;
    let mut taken = HashSet::new();
    Ok(Corpus {
        lower: gen_pool("lower", &config.lower, seed, config.max_retries, &mut taken)?,
        meta: gen_pool("meta", &config.meta, seed, config.max_retries, &mut taken)?,
        test: gen_pool("test", &config.test, seed, config.max_retries, &mut taken)?,
    })
}
