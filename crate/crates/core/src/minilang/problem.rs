use super::ast::Expr;
use super::eval::{check, TestCase, DEFAULT_FUEL};
use super::parse::parse;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Arith,
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Arith, Family::List];

    pub fn name(self) -> &'static str {
        match self {
            Family::Arith => "arith",
            Family::List => "list",
        }
    }
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }

    /// Reference-program size band: easy ≤ 7 nodes, medium 8–15, hard ≥ 16.
    pub fn of_size(nodes: usize) -> Self {
        match nodes {
            0..=7 => Difficulty::Easy,
            8..=15 => Difficulty::Medium,
            _ => Difficulty::Hard,
        }
    }

    pub fn hidden_tests(self) -> usize {
        match self {
            Difficulty::Easy => 8,
            Difficulty::Medium => 10,
            Difficulty::Hard => 12,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One of the K = 6 (family, difficulty) domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Domain {
    pub family: Family,
    pub difficulty: Difficulty,
}

pub const NUM_DOMAINS: usize = 6;

impl Domain {
    pub fn new(family: Family, difficulty: Difficulty) -> Self {
        Self { family, difficulty }
    }

    pub fn all() -> [Domain; NUM_DOMAINS] {
        let mut out = [Domain::new(Family::Arith, Difficulty::Easy); NUM_DOMAINS];
        for (i, d) in Family::ALL
            .iter()
            .flat_map(|&f| Difficulty::ALL.iter().map(move |&d| Domain::new(f, d)))
            .enumerate()
        {
            out[i] = d;
        }
        out
    }

    pub fn index(self) -> usize {
        self.family as usize * 3 + self.difficulty as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::all().get(i).copied()
    }

    pub fn name(self) -> String {
        format!("{}-{}", self.family.name(), self.difficulty.name())
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.family.name(), self.difficulty.name())
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        parse(&src).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub domain: Domain,
    pub description: String,
    pub public_tests: Vec<TestCase>,
    pub hidden_tests: Vec<TestCase>,
    pub reference: Expr,
}

impl Problem {
    /// Input arity every public test supports.
    pub fn arity(&self) -> usize {
        self.public_tests
            .iter()
            .map(|t| t.input.len())
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorTag {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CandidateRecord {
    id: String,
    source: String,
    parse_error: Option<String>,
    correctness: f64,
    is_correct: bool,
    generator: GeneratorTag,
    intensity: u32,
}

/// A candidate program with its ground-truth label (fraction of hidden
/// tests passed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CandidateRecord", into = "CandidateRecord")]
pub struct Candidate {
    pub id: String,
    pub source: String,
    pub parsed: Result<Expr, String>,
    pub correctness: f64,
    pub is_correct: bool,
    pub generator: GeneratorTag,
    pub intensity: u32,
}

impl From<CandidateRecord> for Candidate {
    fn from(r: CandidateRecord) -> Self {
        let parsed = match &r.parse_error {
            Some(msg) => Err(msg.clone()),
            None => parse(&r.source).map_err(|e| e.to_string()),
        };
        Candidate {
            id: r.id,
            source: r.source,
            parsed,
            correctness: r.correctness,
            is_correct: r.is_correct,
            generator: r.generator,
            intensity: r.intensity,
        }
    }
}

impl From<Candidate> for CandidateRecord {
    fn from(c: Candidate) -> Self {
        CandidateRecord {
            id: c.id,
            source: c.source,
            parse_error: c.parsed.err(),
            correctness: c.correctness,
            is_correct: c.is_correct,
            generator: c.generator,
            intensity: c.intensity,
        }
    }
}

impl Candidate {
    /// Parses `source` and labels it against the problem's hidden tests.
    pub fn labelled(
        id: impl Into<String>,
        source: impl Into<String>,
        problem: &Problem,
        generator: GeneratorTag,
        intensity: u32,
    ) -> Self {
        let source = source.into();
        let parsed = parse(&source).map_err(|e| e.to_string());
        let (passed, total) = check(parsed.as_ref().ok(), &problem.hidden_tests, DEFAULT_FUEL);
        let correctness = if total == 0 {
            0.0
        } else {
            passed as f64 / total as f64
        };
        Candidate {
            id: id.into(),
            source,
            parsed,
            correctness,
            is_correct: total > 0 && passed == total,
            generator,
            intensity,
        }
    }

    pub fn ast(&self) -> Option<&Expr> {
        self.parsed.as_ref().ok()
    }

    pub fn parses(&self) -> bool {
        self.parsed.is_ok()
    }
}
