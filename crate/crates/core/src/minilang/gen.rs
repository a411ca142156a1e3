//! Random reference programs and the problems built around them.

use super::ast::{BinOp, Expr, FoldOp, UnOp};
use super::eval::{eval, TestCase, DEFAULT_FUEL};
use super::problem::{Difficulty, Domain, Family, Problem};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;

pub const PUBLIC_TESTS: usize = 2;
const MAX_ATTEMPTS: usize = 5_000;

const VALUE_OPS: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Min, BinOp::Max];
const CMP_OPS: [BinOp; 3] = [BinOp::Lt, BinOp::Le, BinOp::Eq];
const VAR_NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

struct ProgramGen<'r, R: Rng> {
    rng: &'r mut R,
    family: Family,
    arity: usize,
    scope: Vec<&'static str>,
}

impl<R: Rng> ProgramGen<'_, R> {
    fn leaf(&mut self) -> Expr {
        let roll: f64 = self.rng.gen();
        if !self.scope.is_empty() && roll < 0.3 {
            let name = *self.scope.choose(self.rng).expect("non-empty scope");
            Expr::Var(name.to_string())
        } else if roll < 0.7 {
            Expr::Input(self.rng.gen_range(0..self.arity))
        } else {
            Expr::Lit(self.rng.gen_range(-3..=5))
        }
    }

    /// A random expression with exactly `size` nodes.
    fn expr(&mut self, size: usize) -> Expr {
        match size {
            0 | 1 => self.leaf(),
            2 => {
                if self.family == Family::List && self.rng.gen_bool(0.5) {
                    let op = *FoldOp::ALL.choose(self.rng).expect("ops");
                    Expr::fold(op, self.leaf())
                } else {
                    let op = *UnOp::ALL.choose(self.rng).expect("ops");
                    Expr::unary(op, self.leaf())
                }
            }
            _ => {
                let mut choices: Vec<(u8, f64)> = vec![(0, 0.55), (1, 0.08)];
                if size >= 6 {
                    choices.push((2, 0.15));
                }
                if size >= 3 && self.scope.len() < VAR_NAMES.len() {
                    choices.push((3, 0.1));
                }
                if self.family == Family::List {
                    choices.push((4, 0.2));
                }
                let kind = choices
                    .choose_weighted(self.rng, |c| c.1)
                    .expect("weights")
                    .0;
                match kind {
                    0 => self.binary(size),
                    1 => {
                        let op = *UnOp::ALL.choose(self.rng).expect("ops");
                        Expr::unary(op, self.expr(size - 1))
                    }
                    2 => {
                        // (if (cmp l r) t e): 1 + (1 + l + r) + t + e
                        let rest = size - 2;
                        let cl = self.rng.gen_range(1..=(rest - 3).clamp(1, 3));
                        let cr = 1;
                        let branches = rest - cl - cr;
                        let t = self.rng.gen_range(1..branches);
                        let op = *CMP_OPS.choose(self.rng).expect("ops");
                        let cond = Expr::binary(op, self.expr(cl), self.expr(cr));
                        Expr::if_(cond, self.expr(t), self.expr(branches - t))
                    }
                    3 => {
                        let name = VAR_NAMES[self.scope.len()];
                        let bound = self.rng.gen_range(1..=((size - 1) / 2).max(1));
                        let b = self.expr(bound);
                        self.scope.push(name);
                        let body = self.expr(size - 1 - bound);
                        self.scope.pop();
                        Expr::let_(name, b, body)
                    }
                    _ => {
                        let op = *FoldOp::ALL.choose(self.rng).expect("ops");
                        Expr::fold(op, self.expr(size - 1))
                    }
                }
            }
        }
    }

    fn binary(&mut self, size: usize) -> Expr {
        if size >= 4 && self.rng.gen_bool(0.15) {
            let op = if self.rng.gen_bool(0.5) {
                BinOp::Div
            } else {
                BinOp::Mod
            };
            let divisor = Expr::Lit(self.rng.gen_range(2..=5));
            return Expr::binary(op, self.expr(size - 2), divisor);
        }
        let op = *VALUE_OPS.choose(self.rng).expect("ops");
        let left = self.rng.gen_range(1..size - 1);
        Expr::binary(op, self.expr(left), self.expr(size - 1 - left))
    }
}

fn size_band(d: Difficulty) -> (usize, usize) {
    match d {
        Difficulty::Easy => (3, 7),
        Difficulty::Medium => (8, 15),
        Difficulty::Hard => (16, 24),
    }
}

/// Draws a random program in `domain`'s size band over `arity` inputs.
pub fn random_program<R: Rng>(rng: &mut R, domain: Domain, arity: usize) -> Expr {
    let (lo, hi) = size_band(domain.difficulty);
    let size = rng.gen_range(lo..=hi);
    ProgramGen {
        rng,
        family: domain.family,
        arity,
        scope: Vec::new(),
    }
    .expr(size)
}

fn random_input<R: Rng>(rng: &mut R, family: Family, arity: usize) -> Vec<i64> {
    match family {
        Family::Arith => (0..arity).map(|_| rng.gen_range(-10..=10)).collect(),
        Family::List => {
            let n = rng.gen_range(1..=6);
            (0..n).map(|_| rng.gen_range(-9..=9)).collect()
        }
    }
}

fn is_acceptable(e: &Expr, domain: Domain) -> bool {
    Difficulty::of_size(e.node_count()) == domain.difficulty
        && e.max_input_ref().is_some()
        && (domain.family == Family::Arith || e.uses_fold())
}

/// Generates a problem whose reference program passes all of its tests,
/// with at least three distinct hidden outputs. `taken` holds reference
/// sources already in use and is extended with the new one.
pub fn gen_problem<R: Rng>(
    rng: &mut R,
    id: String,
    domain: Domain,
    taken: &mut HashSet<String>,
) -> Option<Problem> {
    let hidden_n = domain.difficulty.hidden_tests();
    for _ in 0..MAX_ATTEMPTS {
        let arity = match domain.family {
            Family::Arith => rng.gen_range(1..=3),
            Family::List => 1,
        };
        let program = random_program(rng, domain, arity);
        if !is_acceptable(&program, domain) {
            continue;
        }
        let source = program.to_string();
        if taken.contains(&source) {
            continue;
        }
        let mut tests = Vec::with_capacity(PUBLIC_TESTS + hidden_n);
        let mut ok = true;
        for _ in 0..PUBLIC_TESTS + hidden_n {
            let input = random_input(rng, domain.family, arity);
            match eval(&program, &input, DEFAULT_FUEL) {
                Ok(expected) => tests.push(TestCase { input, expected }),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let hidden = tests.split_off(PUBLIC_TESTS);
        let distinct: HashSet<i64> = hidden.iter().map(|t| t.expected).collect();
        if distinct.len() < 3 {
            continue;
        }
        taken.insert(source);
        return Some(Problem {
            description: format!(
                "{} task over {}",
                domain,
                match domain.family {
                    Family::Arith => format!("{arity} integer input(s)"),
                    Family::List => "an integer list".to_string(),
                }
            ),
            id,
            domain,
            public_tests: tests,
            hidden_tests: hidden,
            reference: program,
        });
    }
    None
}
