//! Syntax tree produced by the parser. Spans are inclusive token-index ranges
//! into the token stream of the translation unit.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub first: usize,
    pub last: usize,
}

impl Span {
    pub fn new(first: usize, last: usize) -> Self {
        Span { first, last }
    }

    pub fn join(self, other: Span) -> Span {
        Span {
            first: self.first.min(other.first),
            last: self.last.max(other.last),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Ident(String),
    Literal,
    Call {
        /// Callee text (`kvzalloc`, `cq->comp`).
        callee: String,
        /// Present when the callee is not a plain identifier.
        callee_expr: Option<Box<Expr>>,
        args: Vec<Expr>,
    },
    Member {
        base: Box<Expr>,
        field: String,
        arrow: bool,
    },
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Unary {
        op: String,
        operand: Box<Expr>,
    },
    Postfix {
        op: String,
        operand: Box<Expr>,
    },
    Binary {
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Assign {
        op: String,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then: Option<Box<Expr>>,
        els: Box<Expr>,
    },
    Cast {
        operand: Box<Expr>,
    },
    SizeofType,
    Sizeof(Box<Expr>),
    InitList(Vec<Expr>),
    Comma(Vec<Expr>),
}

#[derive(Debug, Clone)]
pub struct Declarator {
    pub name: String,
    pub name_tok: usize,
    pub dims: Vec<Expr>,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Expr(Expr),
    Decl(Vec<Declarator>),
    Return(Option<Expr>),
    If {
        cond: Expr,
        then: Box<Stmt>,
        els: Option<Box<Stmt>>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    DoWhile {
        body: Box<Stmt>,
        cond: Expr,
    },
    For {
        init: Option<Box<Stmt>>,
        cond: Option<Expr>,
        step: Option<Box<Stmt>>,
        body: Box<Stmt>,
    },
    Switch {
        cond: Expr,
        body: Box<Stmt>,
    },
    Block(Vec<Stmt>),
    /// `case X:` / `default:` marker inside a switch body.
    Case(Option<Expr>),
    Labeled {
        label: String,
        stmt: Box<Stmt>,
    },
    Break,
    Continue,
    Goto(String),
    Empty,
    /// A statement the parser could not understand; identifiers are kept as
    /// conservative uses.
    Opaque(Vec<(String, usize)>),
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub span: Span,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}
