//! Mutation-based candidate generation. A mutated reference stands in for a
//! sampled solution; more edits make a weaker generator.

use super::ast::{Expr, FoldOp, UnOp};
use super::problem::{Candidate, GeneratorTag, Problem};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    OperatorSwap,
    ConstantShift,
    OperandTransposition,
    IfBranchSwap,
    SubtreeToLiteral,
}

impl EditKind {
    pub const ALL: [EditKind; 5] = [
        EditKind::OperatorSwap,
        EditKind::ConstantShift,
        EditKind::OperandTransposition,
        EditKind::IfBranchSwap,
        EditKind::SubtreeToLiteral,
    ];

    fn applies_to(self, e: &Expr) -> bool {
        match self {
            EditKind::OperatorSwap => {
                matches!(e, Expr::Binary(..) | Expr::Unary(..) | Expr::Fold(..))
            }
            EditKind::ConstantShift => matches!(e, Expr::Lit(_)),
            EditKind::OperandTransposition => matches!(e, Expr::Binary(_, a, b) if a != b),
            EditKind::IfBranchSwap => matches!(e, Expr::If(_, t, f) if t != f),
            EditKind::SubtreeToLiteral => true,
        }
    }
}

/// Pre-order indices of nodes `kind` can edit.
pub fn edit_sites(expr: &Expr, kind: EditKind) -> Vec<usize> {
    expr.nodes()
        .into_iter()
        .enumerate()
        .filter(|(_, e)| kind.applies_to(e))
        .map(|(i, _)| i)
        .collect()
}

fn other<T: Copy + PartialEq, R: Rng>(rng: &mut R, current: T, pool: &[T]) -> T {
    let alternatives: Vec<T> = pool.iter().copied().filter(|&o| o != current).collect();
    *alternatives.choose(rng).unwrap_or(&current)
}

/// Applies `kind` at pre-order node `site`. Returns false if the edit does
/// not apply there.
pub fn apply_edit<R: Rng>(expr: &mut Expr, kind: EditKind, site: usize, rng: &mut R) -> bool {
    let Some(node) = expr.node_mut(site) else {
        return false;
    };
    if !kind.applies_to(node) {
        return false;
    }
    match kind {
        EditKind::OperatorSwap => match node {
            Expr::Binary(op, ..) => *op = other(rng, *op, op.siblings()),
            Expr::Unary(op, _) => *op = other(rng, *op, &UnOp::ALL),
            Expr::Fold(op, _) => *op = other(rng, *op, &FoldOp::ALL),
            _ => unreachable!(),
        },
        EditKind::ConstantShift => {
            if let Expr::Lit(n) = node {
                *n = if rng.gen_bool(0.5) {
                    n.wrapping_add(1)
                } else {
                    n.wrapping_sub(1)
                };
            }
        }
        EditKind::OperandTransposition => {
            if let Expr::Binary(_, a, b) = node {
                std::mem::swap(a, b);
            }
        }
        EditKind::IfBranchSwap => {
            if let Expr::If(_, t, f) = node {
                std::mem::swap(t, f);
            }
        }
        EditKind::SubtreeToLiteral => {
            *node = Expr::Lit(rng.gen_range(-2..=5));
        }
    }
    true
}

/// One random edit: a kind drawn uniformly among those with at least one
/// site, then a site drawn uniformly.
pub fn random_edit<R: Rng>(expr: &mut Expr, rng: &mut R) -> EditKind {
    let options: Vec<(EditKind, Vec<usize>)> = EditKind::ALL
        .iter()
        .map(|&k| (k, edit_sites(expr, k)))
        .filter(|(_, s)| !s.is_empty())
        .collect();
    let (kind, sites) = options
        .choose(rng)
        .expect("subtree replacement always applies");
    let site = *sites.choose(rng).expect("non-empty");
    apply_edit(expr, *kind, site, rng);
    *kind
}

/// Applies `intensity` independent edits to the problem's reference program
/// and labels the result against the hidden tests.
pub fn mutate<R: Rng>(
    problem: &Problem,
    intensity: u32,
    generator: GeneratorTag,
    id: impl Into<String>,
    rng: &mut R,
) -> Candidate {
    let mut program = problem.reference.clone();
    for _ in 0..intensity {
        random_edit(&mut program, rng);
    }
    Candidate::labelled(id, program.to_string(), problem, generator, intensity)
}

/// Applies `intensity` random edits to a bare program.
pub fn mutate_expr<R: Rng>(reference: &Expr, intensity: u32, rng: &mut R) -> Expr {
    let mut program = reference.clone();
    for _ in 0..intensity {
        random_edit(&mut program, rng);
    }
    program
}
