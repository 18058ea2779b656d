//! Syntax tree for the supported RDDL subset.

use std::fmt;

/// 1-based source position.
///
/// Spans never participate in equality so that structurally identical trees
/// parsed from differently formatted text compare equal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PvarKind {
    StateFluent,
    NonFluent,
    ActionFluent,
}

impl PvarKind {
    pub fn keyword(self) -> &'static str {
        match self {
            PvarKind::StateFluent => "state-fluent",
            PvarKind::NonFluent => "non-fluent",
            PvarKind::ActionFluent => "action-fluent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueRange {
    Bool,
    Real,
}

impl ValueRange {
    pub fn keyword(self) -> &'static str {
        match self {
            ValueRange::Bool => "bool",
            ValueRange::Real => "real",
        }
    }
}

/// A literal value as written in a declaration or assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Bool(bool),
    Real(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Bool(b) => f64::from(u8::from(b)),
            Value::Real(r) => r,
        }
    }

    pub fn fits(self, range: ValueRange) -> bool {
        match (self, range) {
            (Value::Bool(_), ValueRange::Bool) => true,
            (Value::Real(_), ValueRange::Real) => true,
            // bool literals coerce to 0/1 in real context
            (Value::Bool(_), ValueRange::Real) => true,
            (Value::Real(_), ValueRange::Bool) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDecl {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvarDecl {
    pub name: String,
    pub kind: PvarKind,
    pub params: Vec<String>,
    pub range: ValueRange,
    pub default: Value,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cpf {
    pub name: String,
    /// Parameter variables including the leading `?`.
    pub params: Vec<String>,
    pub expr: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainAst {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: Vec<TypeDecl>,
    pub pvariables: Vec<PvarDecl>,
    pub cpfs: Vec<Cpf>,
    pub reward: Expr,
    pub span: Span,
}

impl DomainAst {
    pub fn pvariable(&self, name: &str) -> Option<&PvarDecl> {
        self.pvariables.iter().find(|p| p.name == name)
    }

    pub fn pvariables_of(&self, kind: PvarKind) -> impl Iterator<Item = &PvarDecl> {
        self.pvariables.iter().filter(move |p| p.kind == kind)
    }

    pub fn cpf(&self, name: &str) -> Option<&Cpf> {
        self.cpfs.iter().find(|c| c.name == name)
    }
}

/// Argument of a pvariable application.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// `?x`, stored with the leading `?`.
    Var(String),
    /// `@x1`, stored without the `@`.
    Object(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Object(o) => write!(f, "@{o}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    And,
    Or,
    Implies,
    Equiv,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::And => "^",
            BinaryOp::Or => "|",
            BinaryOp::Implies => "=>",
            BinaryOp::Equiv => "<=>",
            BinaryOp::Eq => "==",
            BinaryOp::Neq => "~=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Neq | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregateOp {
    Forall,
    Exists,
    Sum,
    Prod,
}

impl AggregateOp {
    pub fn keyword(self) -> &'static str {
        match self {
            AggregateOp::Forall => "forall_",
            AggregateOp::Exists => "exists_",
            AggregateOp::Sum => "sum_",
            AggregateOp::Prod => "prod_",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Bool(bool),
    Real(f64),
    /// A bare object term; only meaningful as an operand of `==` / `~=`.
    Term(Term, Span),
    Apply {
        name: String,
        args: Vec<Term>,
        span: Span,
    },
    Unary {
        op: UnaryOp,
        arg: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    If {
        cond: Box<Expr>,
        then_branch: Box<Expr>,
        else_branch: Box<Expr>,
    },
    /// Quantifier or aggregation over a single typed variable. Multi-variable
    /// headers such as `sum_{?x : a, ?y : b}` nest one node per variable.
    Aggregate {
        op: AggregateOp,
        var: String,
        ty: String,
        body: Box<Expr>,
        span: Span,
    },
    Bernoulli(Box<Expr>),
    KronDelta(Box<Expr>),
}

impl Expr {
    pub fn is_distribution(&self) -> bool {
        matches!(self, Expr::Bernoulli(_) | Expr::KronDelta(_))
    }

    /// True when any node of the tree is a distribution.
    pub fn contains_distribution(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= e.is_distribution());
        found
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Bool(_) | Expr::Real(_) | Expr::Term(..) | Expr::Apply { .. } => {}
            Expr::Unary { arg, .. } => arg.visit(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::If {
                cond,
                then_branch,
                else_branch,
            } => {
                cond.visit(f);
                then_branch.visit(f);
                else_branch.visit(f);
            }
            Expr::Aggregate { body, .. } => body.visit(f),
            Expr::Bernoulli(e) | Expr::KronDelta(e) => e.visit(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDecl {
    pub class: String,
    pub objects: Vec<String>,
    pub span: Span,
}

/// `name(args) = value;` inside a `non-fluents` or `init-state` block.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub name: String,
    pub args: Vec<String>,
    pub value: Value,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonDefActions {
    Count(u32),
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAst {
    pub name: String,
    pub domain: String,
    /// Name of the `non-fluents` block the instance refers to, if any.
    pub non_fluents_name: Option<String>,
    pub objects: Vec<ObjectDecl>,
    pub non_fluents: Vec<Assignment>,
    pub init_state: Vec<Assignment>,
    pub max_nondef_actions: Option<NonDefActions>,
    pub horizon: u32,
    pub discount: f64,
    pub span: Span,
}

impl InstanceAst {
    /// Objects of a class in declaration order.
    pub fn objects_of(&self, class: &str) -> Vec<&str> {
        self.objects
            .iter()
            .filter(|d| d.class == class)
            .flat_map(|d| d.objects.iter().map(String::as_str))
            .collect()
    }

    pub fn object_count(&self) -> usize {
        self.objects.iter().map(|d| d.objects.len()).sum()
    }
}
