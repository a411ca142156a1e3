use super::ast::{BinOp, Expr, FoldOp, UnOp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FUEL: u64 = 10_000;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("division by zero")]
    DivZero,
    #[error("fuel exhausted")]
    Fuel,
    #[error("input index out of range")]
    Arity,
}

/// One input/expected-output example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: Vec<i64>,
    pub expected: i64,
}

struct Machine<'a> {
    inputs: &'a [i64],
    fuel: u64,
    env: Vec<(&'a str, i64)>,
}

impl<'a> Machine<'a> {
    fn tick(&mut self) -> Result<(), RuntimeError> {
        if self.fuel == 0 {
            return Err(RuntimeError::Fuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn run(&mut self, e: &'a Expr) -> Result<i64, RuntimeError> {
        self.tick()?;
        match e {
            Expr::Lit(n) => Ok(*n),
            Expr::Input(i) => self.inputs.get(*i).copied().ok_or(RuntimeError::Arity),
            Expr::Var(name) => Ok(self
                .env
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .expect("parser guarantees bound variables")),
            Expr::Unary(op, a) => {
                let x = self.run(a)?;
                Ok(match op {
                    UnOp::Neg => x.wrapping_neg(),
                    UnOp::Abs => x.wrapping_abs(),
                })
            }
            Expr::Binary(op, a, b) => {
                let x = self.run(a)?;
                let y = self.run(b)?;
                binary(*op, x, y)
            }
            Expr::If(c, t, f) => {
                if self.run(c)? != 0 {
                    self.run(t)
                } else {
                    self.run(f)
                }
            }
            Expr::Let(name, bound, body) => {
                let v = self.run(bound)?;
                self.env.push((name.as_str(), v));
                let out = self.run(body);
                self.env.pop();
                out
            }
            Expr::Fold(op, init) => {
                let mut acc = self.run(init)?;
                for &x in self.inputs {
                    self.tick()?;
                    acc = match op {
                        FoldOp::Add => acc.wrapping_add(x),
                        FoldOp::Mul => acc.wrapping_mul(x),
                        FoldOp::Min => acc.min(x),
                        FoldOp::Max => acc.max(x),
                    };
                }
                Ok(acc)
            }
        }
    }
}

fn binary(op: BinOp, x: i64, y: i64) -> Result<i64, RuntimeError> {
    Ok(match op {
        BinOp::Add => x.wrapping_add(y),
        BinOp::Sub => x.wrapping_sub(y),
        BinOp::Mul => x.wrapping_mul(y),
        BinOp::Div => {
            if y == 0 {
                return Err(RuntimeError::DivZero);
            }
            x.wrapping_div(y)
        }
        BinOp::Mod => {
            if y == 0 {
                return Err(RuntimeError::DivZero);
            }
            x.wrapping_rem(y)
        }
        BinOp::Min => x.min(y),
        BinOp::Max => x.max(y),
        BinOp::Lt => (x < y) as i64,
        BinOp::Le => (x <= y) as i64,
        BinOp::Eq => (x == y) as i64,
    })
}

/// Evaluates `expr` on `inputs`. Every node visit and every fold step
/// costs one unit of fuel. Integer arithmetic wraps at 64 bits; division
/// truncates toward zero.
pub fn eval(expr: &Expr, inputs: &[i64], fuel: u64) -> Result<i64, RuntimeError> {
    Machine {
        inputs,
        fuel,
        env: Vec::new(),
    }
    .run(expr)
}

/// Number of tests whose evaluation succeeds with the expected value.
/// `None` (an unparseable candidate) passes nothing.
pub fn check(program: Option<&Expr>, tests: &[TestCase], fuel: u64) -> (usize, usize) {
    let passed = match program {
        None => 0,
        Some(p) => tests
            .iter()
            .filter(|t| eval(p, &t.input, fuel) == Ok(t.expected))
            .count(),
    };
    (passed, tests.len())
}
