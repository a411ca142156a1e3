//! A small total expression language. Candidate programs are executed
//! against hidden tests, which makes every correctness label exact.

mod ast;
mod corpus;
mod eval;
mod gen;
mod mutate;
mod parse;
mod problem;

pub use ast::{BinOp, Expr, FoldOp, UnOp};
pub use corpus::{
    gen_corpus, Corpus, CorpusConfig, CorpusError, Pool, PoolProblem, PoolSpec,
    CORPUS_SCHEMA_VERSION,
};
pub use eval::{check, eval, RuntimeError, TestCase, DEFAULT_FUEL};
pub use gen::{gen_problem, random_program};
pub use mutate::{apply_edit, edit_sites, mutate, mutate_expr, random_edit, EditKind};
pub use parse::{parse, ParseError, MAX_DEPTH};
pub use problem::{Candidate, Difficulty, Domain, Family, GeneratorTag, Problem, NUM_DOMAINS};
