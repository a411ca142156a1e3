use crate::minilang::{check, BinOp, Candidate, Expr, Problem, DEFAULT_FUEL};
use crate::rng::content_hash;
use serde::{Deserialize, Serialize};

pub const FEATURE_NAMES: [&str; 17] = [
    "public_pass_fraction",
    "parse_ok",
    "node_count",
    "depth",
    "ops_add",
    "ops_sub",
    "ops_mul",
    "ops_divmod",
    "ops_minmax",
    "ops_compare",
    "ops_unary",
    "ops_if",
    "ops_let",
    "ops_fold",
    "arity_match",
    "constant_count",
    "has_division",
];

pub const FEATURE_DIM: usize = FEATURE_NAMES.len();

const NODE_SCALE: f64 = 32.0;
const DEPTH_SCALE: f64 = 12.0;
const CONST_SCALE: f64 = 8.0;

/// Hash of the feature layout; checkpoints record it so a scorer is never
/// applied to features it was not trained on.
pub fn feature_schema_hash() -> String {
    content_hash(FEATURE_NAMES.join(",").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn op_slot(e: &Expr) -> Option<usize> {
    Some(match e {
        Expr::Binary(BinOp::Add, ..) => 4,
        Expr::Binary(BinOp::Sub, ..) => 5,
        Expr::Binary(BinOp::Mul, ..) => 6,
        Expr::Binary(BinOp::Div | BinOp::Mod, ..) => 7,
        Expr::Binary(BinOp::Min | BinOp::Max, ..) => 8,
        Expr::Binary(BinOp::Lt | BinOp::Le | BinOp::Eq, ..) => 9,
        Expr::Unary(..) => 10,
        Expr::If(..) => 11,
        Expr::Let(..) => 12,
        Expr::Fold(..) => 13,
        _ => return None,
    })
}

/// Static features of a candidate. Only the public tests are executed;
/// hidden tests are never read.
pub fn featurize(problem: &Problem, candidate: &Candidate) -> FeatureVector {
    let mut f = vec![0.0; FEATURE_DIM];
    let Some(ast) = candidate.ast() else {
        return FeatureVector(f);
    };
    let (passed, total) = check(Some(ast), &problem.public_tests, DEFAULT_FUEL);
    f[0] = if total == 0 {
        0.0
    } else {
        passed as f64 / total as f64
    };
    f[1] = 1.0;
    let nodes = ast.nodes();
    let n = nodes.len() as f64;
    f[2] = (n / NODE_SCALE).min(1.0);
    f[3] = (ast.depth() as f64 / DEPTH_SCALE).min(1.0);
    let mut constants = 0usize;
    for e in &nodes {
        if let Some(slot) = op_slot(e) {
            f[slot] += 1.0;
        }
        if matches!(e, Expr::Lit(_)) {
            constants += 1;
        }
    }
    for slot in f.iter_mut().take(14).skip(4) {
        *slot /= n;
    }
    f[14] = match ast.max_input_ref() {
        Some(m) if m < problem.arity() => 1.0,
        _ => 0.0,
    };
    f[15] = (constants as f64 / CONST_SCALE).min(1.0);
    f[16] = if f[7] > 0.0 { 1.0 } else { 0.0 };
    FeatureVector(f)
}
