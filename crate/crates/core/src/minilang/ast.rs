use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Min,
    Max,
    Lt,
    Le,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FoldOp {
    Add,
    Mul,
    Min,
    Max,
}

impl UnOp {
    pub const ALL: [UnOp; 2] = [UnOp::Neg, UnOp::Abs];

    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Abs => "abs",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

impl BinOp {
    pub const ALL: [BinOp; 10] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
        BinOp::Min,
        BinOp::Max,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Eq,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "div",
            BinOp::Mod => "mod",
            BinOp::Min => "min",
            BinOp::Max => "max",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.symbol() == s)
    }

    /// Operators a plausible typo could turn this one into.
    pub fn siblings(self) -> &'static [BinOp] {
        use BinOp::*;
        match self {
            Add | Sub | Mul => &[Add, Sub, Mul],
            Div | Mod => &[Div, Mod],
            Min | Max => &[Min, Max],
            Lt | Le | Eq => &[Lt, Le, Eq],
        }
    }
}

impl FoldOp {
    pub const ALL: [FoldOp; 4] = [FoldOp::Add, FoldOp::Mul, FoldOp::Min, FoldOp::Max];

    pub fn symbol(self) -> &'static str {
        match self {
            FoldOp::Add => "+",
            FoldOp::Mul => "*",
            FoldOp::Min => "min",
            FoldOp::Max => "max",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

/// Program tree. `Fold` always ranges over the whole input list (`xs`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Input(usize),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    Var(String),
    Fold(FoldOp, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn unary(op: UnOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn if_(c: Expr, t: Expr, e: Expr) -> Self {
        Expr::If(Box::new(c), Box::new(t), Box::new(e))
    }

    pub fn let_(name: impl Into<String>, bound: Expr, body: Expr) -> Self {
        Expr::Let(name.into(), Box::new(bound), Box::new(body))
    }

    pub fn fold(op: FoldOp, init: Expr) -> Self {
        Expr::Fold(op, Box::new(init))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Lit(_) | Expr::Input(_) | Expr::Var(_) => vec![],
            Expr::Unary(_, a) | Expr::Fold(_, a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Let(_, a, b) => vec![a, b],
            Expr::If(c, t, e) => vec![c, t, e],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Lit(_) | Expr::Input(_) | Expr::Var(_) => vec![],
            Expr::Unary(_, a) | Expr::Fold(_, a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Let(_, a, b) => vec![a, b],
            Expr::If(c, t, e) => vec![c, t, e],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(|c| c.node_count())
            .sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&Expr> {
        let mut out = Vec::with_capacity(16);
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            out.push(e);
            for c in e.children().into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Mutable reference to the `index`-th node in pre-order.
    pub fn node_mut(&mut self, index: usize) -> Option<&mut Expr> {
        fn go<'a>(e: &'a mut Expr, index: &mut usize) -> Option<&'a mut Expr> {
            if *index == 0 {
                return Some(e);
            }
            *index -= 1;
            for c in e.children_mut() {
                if let Some(found) = go(c, index) {
                    return Some(found);
                }
            }
            None
        }
        let mut i = index;
        go(self, &mut i)
    }

    /// Largest input index referenced, if any.
    pub fn max_input_ref(&self) -> Option<usize> {
        self.nodes()
            .into_iter()
            .filter_map(|e| match e {
                Expr::Input(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    pub fn uses_fold(&self) -> bool {
        self.nodes().iter().any(|e| matches!(e, Expr::Fold(..)))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(n) => write!(f, "{n}"),
            Expr::Input(i) => write!(f, "x{i}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Unary(op, a) => write!(f, "({} {a})", op.symbol()),
            Expr::Binary(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            Expr::If(c, t, e) => write!(f, "(if {c} {t} {e})"),
            Expr::Let(name, bound, body) => write!(f, "(let {name} {bound} {body})"),
            Expr::Fold(op, init) => write!(f, "(fold {} {init} xs)", op.symbol()),
        }
    }
}
