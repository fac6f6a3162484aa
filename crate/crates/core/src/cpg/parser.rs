//! Recursive-descent parser for the supported C subset.
//!
//! Only function definitions are materialized. Other top-level items
//! (prototypes, globals, type definitions, macro invocations) are skipped.
//! Statements that cannot be parsed inside a function body degrade to
//! [`StmtKind::Opaque`] and leave a [`Diagnostic`] behind.

use super::ast::*;
use super::lexer::{Token, TokenKind};
use super::{CpgError, Diagnostic};

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool",
    "bool", "struct", "union", "enum", "const", "volatile", "static", "extern", "register",
    "inline", "__inline", "__inline__", "auto", "restrict", "__restrict", "typeof", "__typeof__",
];

const STATEMENT_KEYWORDS: &[&str] = &[
    "if", "else", "while", "do", "for", "switch", "case", "default", "return", "break",
    "continue", "goto", "sizeof",
];

fn is_typedef_like(name: &str) -> bool {
    const NAMES: &[&str] = &[
        "u8", "u16", "u32", "u64", "s8", "s16", "s32", "s64", "__u8", "__u16", "__u32", "__u64",
        "__s8", "__s16", "__s32", "__s64", "__be16", "__be32", "__be64", "__le16", "__le32",
        "__le64", "size_t", "ssize_t", "bool", "gfp_t", "dma_addr_t", "phys_addr_t", "loff_t",
        "off_t", "uintptr_t", "intptr_t", "ptrdiff_t", "wchar_t", "FILE",
    ];
    NAMES.contains(&name) || (name.ends_with("_t") && name.len() > 2)
}

fn is_type_keyword(name: &str) -> bool {
    TYPE_KEYWORDS.contains(&name)
}

type PResult<T> = Result<T, Failure>;

enum Failure {
    Syntax(String, usize),
    Fatal(CpgError),
}

pub struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
    depth: usize,
    max_depth: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str, toks: &'a [Token], max_depth: usize) -> Self {
        Parser {
            src,
            toks,
            pos: 0,
            depth: 0,
            max_depth,
            diagnostics: Vec::new(),
        }
    }

    fn text(&self, i: usize) -> &'a str {
        self.toks.get(i).map(|t| t.text(self.src)).unwrap_or("")
    }

    fn kind(&self, i: usize) -> Option<TokenKind> {
        self.toks.get(i).map(|t| t.kind)
    }

    fn peek(&self) -> &'a str {
        self.text(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> &'a str {
        self.text(self.pos + ahead)
    }

    fn is_ident_at(&self, i: usize) -> bool {
        self.kind(i) == Some(TokenKind::Ident)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn eat(&mut self, text: &str) -> bool {
        if !self.at_end() && self.peek() == text && self.kind(self.pos) != Some(TokenKind::Str) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<usize> {
        if self.eat(text) {
            Ok(self.pos - 1)
        } else {
            Err(Failure::Syntax(
                format!("expected `{text}`, found `{}`", self.peek()),
                self.pos,
            ))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > self.max_depth {
            let line = self.toks.get(self.pos).map(|t| t.line).unwrap_or(0);
            return Err(Failure::Fatal(CpgError::NestingOverflow {
                line,
                max_depth: self.max_depth,
            }));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn line_of(&self, i: usize) -> u32 {
        self.toks
            .get(i)
            .or_else(|| self.toks.last())
            .map(|t| t.line)
            .unwrap_or(1)
    }

    /// Index of the token matching the opener at `open`.
    fn matching(&self, open: usize) -> Option<usize> {
        let (o, c) = match self.text(open) {
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            "{" => ("{", "}"),
            _ => return None,
        };
        let mut depth = 0usize;
        for i in open..self.toks.len() {
            if self.kind(i) != Some(TokenKind::Punct) {
                continue;
            }
            let t = self.text(i);
            if t == o {
                depth += 1;
            } else if t == c {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
        }
        None
    }

    // ----------------------------------------------------------------------
    // top level

    pub fn parse_translation_unit(&mut self) -> Result<Vec<Function>, CpgError> {
        let mut functions = Vec::new();
        while !self.at_end() {
            let item_start = self.pos;
            let mut i = self.pos;
            let mut depth = 0i32;
            let mut saw_assign = false;
            let mut handled = false;
            while i < self.toks.len() {
                let t = self.text(i);
                let punct = self.kind(i) == Some(TokenKind::Punct);
                if punct && (t == "(" || t == "[") {
                    depth += 1;
                } else if punct && (t == ")" || t == "]") {
                    depth -= 1;
                } else if punct && depth == 0 && t == "=" {
                    saw_assign = true;
                } else if punct && depth == 0 && t == ";" {
                    self.pos = i + 1;
                    handled = true;
                    break;
                } else if punct && depth == 0 && t == "{" {
                    if !saw_assign && i > item_start && self.text(i - 1) == ")" {
                        if let Some(f) = self.try_function(item_start, i)? {
                            functions.push(f);
                            handled = true;
                            break;
                        }
                    }
                    // aggregate definition or initializer: skip the braces
                    match self.matching(i) {
                        Some(close) => {
                            i = close + 1;
                            continue;
                        }
                        None => {
                            self.pos = self.toks.len();
                            handled = true;
                            break;
                        }
                    }
                } else if punct && depth == 0 && t == "}" {
                    // stray closer
                    self.pos = i + 1;
                    handled = true;
                    break;
                }
                i += 1;
            }
            if !handled {
                self.pos = self.toks.len();
            }
        }
        Ok(functions)
    }

    fn try_function(&mut self, start: usize, brace: usize) -> Result<Option<Function>, CpgError> {
        let rparen = brace - 1;
        // locate the matching `(` of the parameter list
        let mut depth = 0i32;
        let mut lparen = None;
        for j in (start..=rparen).rev() {
            match self.text(j) {
                ")" => depth += 1,
                "(" => {
                    depth -= 1;
                    if depth == 0 {
                        lparen = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(lparen) = lparen else {
            return Ok(None);
        };
        if lparen == start || !self.is_ident_at(lparen - 1) {
            return Ok(None);
        }
        let name = self.text(lparen - 1);
        if STATEMENT_KEYWORDS.contains(&name) || is_type_keyword(name) {
            return Ok(None);
        }
        let params = self.parse_params(lparen, rparen);
        self.pos = brace;
        let body_stmt = match self.parse_block() {
            Ok(b) => b,
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Syntax(msg, at)) => {
                self.diagnostics.push(Diagnostic {
                    line: self.line_of(at),
                    message: format!("function `{name}` skipped: {msg}"),
                });
                self.pos = self.matching(brace).map(|c| c + 1).unwrap_or(self.toks.len());
                return Ok(None);
            }
        };
        let end = body_stmt.span.last;
        let body = match body_stmt.kind {
            StmtKind::Block(stmts) => stmts,
            _ => unreachable!("parse_block returns a block"),
        };
        Ok(Some(Function {
            name: name.to_string(),
            span: Span::new(start, end),
            params,
            body,
        }))
    }

    fn parse_params(&self, lparen: usize, rparen: usize) -> Vec<Param> {
        let mut params = Vec::new();
        let mut seg_start = lparen + 1;
        let mut depth = 0i32;
        let mut i = lparen + 1;
        while i <= rparen {
            let t = self.text(i);
            if i == rparen || (depth == 0 && t == ",") {
                if seg_start < i {
                    params.push(self.param_from(seg_start, i - 1));
                }
                seg_start = i + 1;
            } else if t == "(" || t == "[" {
                depth += 1;
            } else if t == ")" || t == "]" {
                depth -= 1;
            }
            i += 1;
        }
        params.retain(|p| {
            let only = p.span.first == p.span.last;
            !(only && matches!(self.text(p.span.first), "void" | "..."))
        });
        params
    }

    fn param_from(&self, first: usize, last: usize) -> Param {
        // function pointer parameter: `void (*cb)(int)`
        let mut name_tok = None;
        for j in first..=last {
            if self.text(j) == "(" && self.text(j + 1) == "*" && self.is_ident_at(j + 2) {
                name_tok = Some(j + 2);
                break;
            }
        }
        if name_tok.is_none() {
            // last identifier that is not part of an array bound
            let mut depth = 0i32;
            for j in (first..=last).rev() {
                match self.text(j) {
                    "]" | ")" => depth += 1,
                    "[" | "(" => depth -= 1,
                    _ => {}
                }
                if depth == 0 && self.is_ident_at(j) {
                    let t = self.text(j);
                    let typeish = is_type_keyword(t) || (j == first && is_typedef_like(t));
                    if !typeish && j > first {
                        name_tok = Some(j);
                    }
                    break;
                }
            }
        }
        Param {
            name: name_tok.map(|j| self.text(j).to_string()),
            span: Span::new(first, last),
        }
    }

    // ----------------------------------------------------------------------
    // statements

    fn parse_block(&mut self) -> PResult<Stmt> {
        let open = self.expect("{")?;
        self.enter()?;
        let mut stmts = Vec::new();
        loop {
            if self.at_end() {
                self.leave();
                return Err(Failure::Syntax("unterminated block".into(), open));
            }
            if self.peek() == "}" && self.kind(self.pos) == Some(TokenKind::Punct) {
                self.pos += 1;
                break;
            }
            stmts.push(self.parse_statement_recovering()?);
        }
        self.leave();
        Ok(Stmt {
            kind: StmtKind::Block(stmts),
            span: Span::new(open, self.pos - 1),
        })
    }

    fn parse_statement_recovering(&mut self) -> PResult<Stmt> {
        let start = self.pos;
        match self.parse_statement() {
            Ok(s) => Ok(s),
            Err(Failure::Fatal(e)) => Err(Failure::Fatal(e)),
            Err(Failure::Syntax(msg, _)) => {
                self.pos = start;
                let end = self.skip_to_statement_end(start);
                let idents = (start..=end)
                    .filter(|&i| self.is_ident_at(i))
                    .map(|i| (self.text(i).to_string(), i))
                    .collect();
                self.diagnostics.push(Diagnostic {
                    line: self.line_of(start),
                    message: format!("unsupported construct kept opaque: {msg}"),
                });
                self.pos = end + 1;
                Ok(Stmt {
                    kind: StmtKind::Opaque(idents),
                    span: Span::new(start, end),
                })
            }
        }
    }

    /// Last token of the statement beginning at `start` for error recovery:
    /// the next `;` at brace/paren depth zero, a balanced `{...}` group, or
    /// the token before an unmatched `}`.
    fn skip_to_statement_end(&self, start: usize) -> usize {
        let mut depth = 0i32;
        let mut i = start;
        while i < self.toks.len() {
            let t = self.text(i);
            if self.kind(i) == Some(TokenKind::Punct) {
                match t {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" => depth -= 1,
                    "}" => {
                        if depth == 0 {
                            return i.saturating_sub(1).max(start);
                        }
                        depth -= 1;
                        if depth == 0 && self.text(i + 1) != ";" {
                            return i;
                        }
                    }
                    ";" if depth <= 0 => return i,
                    _ => {}
                }
            }
            i += 1;
        }
        self.toks.len() - 1
    }

    fn parse_statement(&mut self) -> PResult<Stmt> {
        self.enter()?;
        let r = self.parse_statement_inner();
        self.leave();
        r
    }

    fn parse_statement_inner(&mut self) -> PResult<Stmt> {
        let start = self.pos;
        let t = self.peek();
        let is_ident = self.is_ident_at(self.pos);
        if t == "{" && !is_ident {
            return self.parse_block();
        }
        if t == ";" && !is_ident {
            self.pos += 1;
            return Ok(self.stmt(StmtKind::Empty, start));
        }
        if is_ident {
            match t {
                "if" => {
                    self.pos += 1;
                    let cond = self.paren_expr()?;
                    let then = Box::new(self.parse_statement()?);
                    let els = if self.peek() == "else" {
                        self.pos += 1;
                        Some(Box::new(self.parse_statement()?))
                    } else {
                        None
                    };
                    return Ok(self.stmt(StmtKind::If { cond, then, els }, start));
                }
                "while" => {
                    self.pos += 1;
                    let cond = self.paren_expr()?;
                    let body = Box::new(self.parse_statement()?);
                    return Ok(self.stmt(StmtKind::While { cond, body }, start));
                }
                "do" => {
                    self.pos += 1;
                    let body = Box::new(self.parse_statement()?);
                    if self.peek() != "while" {
                        return Err(Failure::Syntax("expected `while`".into(), self.pos));
                    }
                    self.pos += 1;
                    let cond = self.paren_expr()?;
                    self.expect(";")?;
                    return Ok(self.stmt(StmtKind::DoWhile { body, cond }, start));
                }
                "for" => return self.parse_for(start),
                "switch" => {
                    self.pos += 1;
                    let cond = self.paren_expr()?;
                    let body = Box::new(self.parse_statement()?);
                    return Ok(self.stmt(StmtKind::Switch { cond, body }, start));
                }
                "case" => {
                    self.pos += 1;
                    let e = self.parse_ternary()?;
                    if self.eat("...") {
                        self.parse_ternary()?;
                    }
                    self.expect(":")?;
                    return Ok(self.stmt(StmtKind::Case(Some(e)), start));
                }
                "default" if self.peek_at(1) == ":" => {
                    self.pos += 2;
                    return Ok(self.stmt(StmtKind::Case(None), start));
                }
                "return" => {
                    self.pos += 1;
                    let value = if self.peek() == ";" {
                        None
                    } else {
                        Some(self.parse_expr()?)
                    };
                    self.expect(";")?;
                    return Ok(self.stmt(StmtKind::Return(value), start));
                }
                "break" => {
                    self.pos += 1;
                    self.expect(";")?;
                    return Ok(self.stmt(StmtKind::Break, start));
                }
                "continue" => {
                    self.pos += 1;
                    self.expect(";")?;
                    return Ok(self.stmt(StmtKind::Continue, start));
                }
                "goto" => {
                    self.pos += 1;
                    if !self.is_ident_at(self.pos) {
                        return Err(Failure::Syntax("expected label".into(), self.pos));
                    }
                    let label = self.peek().to_string();
                    self.pos += 1;
                    self.expect(";")?;
                    return Ok(self.stmt(StmtKind::Goto(label), start));
                }
                _ => {}
            }
            if self.peek_at(1) == ":" && !STATEMENT_KEYWORDS.contains(&t) {
                let label = t.to_string();
                self.pos += 2;
                let stmt = if self.peek() == "}" {
                    Stmt {
                        kind: StmtKind::Empty,
                        span: Span::new(self.pos - 1, self.pos - 1),
                    }
                } else {
                    self.parse_statement()?
                };
                return Ok(self.stmt(
                    StmtKind::Labeled {
                        label,
                        stmt: Box::new(stmt),
                    },
                    start,
                ));
            }
        }
        if self.looks_like_declaration(self.pos) {
            let decls = self.parse_declaration()?;
            self.expect(";")?;
            return Ok(self.stmt(StmtKind::Decl(decls), start));
        }
        let e = self.parse_expr()?;
        self.expect(";")?;
        Ok(self.stmt(StmtKind::Expr(e), start))
    }

    fn stmt(&self, kind: StmtKind, start: usize) -> Stmt {
        Stmt {
            kind,
            span: Span::new(start, self.pos - 1),
        }
    }

    fn paren_expr(&mut self) -> PResult<Expr> {
        self.expect("(")?;
        let e = self.parse_expr()?;
        self.expect(")")?;
        Ok(e)
    }

    fn parse_for(&mut self, start: usize) -> PResult<Stmt> {
        self.pos += 1;
        self.expect("(")?;
        let init = if self.peek() == ";" {
            self.pos += 1;
            None
        } else {
            let s = self.pos;
            let kind = if self.looks_like_declaration(self.pos) {
                StmtKind::Decl(self.parse_declaration()?)
            } else {
                StmtKind::Expr(self.parse_expr()?)
            };
            let init = Stmt {
                kind,
                span: Span::new(s, self.pos - 1),
            };
            self.expect(";")?;
            Some(Box::new(init))
        };
        let cond = if self.peek() == ";" {
            None
        } else {
            Some(self.parse_expr()?)
        };
        self.expect(";")?;
        let step = if self.peek() == ")" {
            None
        } else {
            let s = self.pos;
            let e = self.parse_expr()?;
            Some(Box::new(Stmt {
                kind: StmtKind::Expr(e),
                span: Span::new(s, self.pos - 1),
            }))
        };
        self.expect(")")?;
        let body = Box::new(self.parse_statement()?);
        Ok(self.stmt(
            StmtKind::For {
                init,
                cond,
                step,
                body,
            },
            start,
        ))
    }

    fn looks_like_declaration(&self, at: usize) -> bool {
        if !self.is_ident_at(at) {
            return false;
        }
        let first = self.text(at);
        if STATEMENT_KEYWORDS.contains(&first) {
            return false;
        }
        if is_type_keyword(first) || is_typedef_like(first) {
            // `size_t(x)` style calls are not C
            return true;
        }
        // `T name`, `T *name =`, `T **name;`
        let mut i = at + 1;
        if self.is_ident_at(i) {
            return !STATEMENT_KEYWORDS.contains(&self.text(i));
        }
        let mut stars = 0;
        while self.text(i) == "*" {
            stars += 1;
            i += 1;
        }
        if stars == 0 || !self.is_ident_at(i) {
            return false;
        }
        matches!(self.text(i + 1), "=" | ";" | "," | "[")
    }

    fn parse_declaration(&mut self) -> PResult<Vec<Declarator>> {
        // specifiers
        let mut saw_base = false;
        loop {
            if !self.is_ident_at(self.pos) {
                break;
            }
            let t = self.peek();
            if matches!(t, "struct" | "union" | "enum") {
                self.pos += 1;
                if self.is_ident_at(self.pos) {
                    self.pos += 1;
                }
                if self.peek() == "{" {
                    let close = self
                        .matching(self.pos)
                        .ok_or_else(|| Failure::Syntax("unbalanced braces".into(), self.pos))?;
                    self.pos = close + 1;
                }
                saw_base = true;
                continue;
            }
            if t == "__attribute__" {
                self.pos += 1;
                self.skip_parens()?;
                continue;
            }
            if is_type_keyword(t) {
                if !matches!(t, "const" | "volatile" | "static" | "extern" | "register" | "inline")
                {
                    saw_base = true;
                }
                self.pos += 1;
                continue;
            }
            if !saw_base {
                // typedef name
                saw_base = true;
                self.pos += 1;
                continue;
            }
            // remaining identifier starts the declarator
            break;
        }
        let mut decls = Vec::new();
        loop {
            decls.push(self.parse_declarator()?);
            if !self.eat(",") {
                break;
            }
        }
        Ok(decls)
    }

    fn skip_parens(&mut self) -> PResult<()> {
        if self.peek() != "(" {
            return Ok(());
        }
        let close = self
            .matching(self.pos)
            .ok_or_else(|| Failure::Syntax("unbalanced parentheses".into(), self.pos))?;
        self.pos = close + 1;
        Ok(())
    }

    fn parse_declarator(&mut self) -> PResult<Declarator> {
        let name_tok;
        loop {
            let t = self.peek();
            if t == "*" {
                self.pos += 1;
            } else if t == "(" && self.peek_at(1) == "*" {
                // function pointer: ( * name ) ( params )
                self.pos += 2;
                while self.is_ident_at(self.pos) && self.peek_at(1) != ")" {
                    self.pos += 1;
                }
                if !self.is_ident_at(self.pos) {
                    return Err(Failure::Syntax("expected declarator name".into(), self.pos));
                }
                name_tok = self.pos;
                self.pos += 1;
                self.expect(")")?;
                self.skip_parens()?;
                break;
            } else if self.is_ident_at(self.pos) {
                if t == "__attribute__" {
                    self.pos += 1;
                    self.skip_parens()?;
                    continue;
                }
                // qualifiers such as `const` or `__iomem` precede the name
                let next = self.peek_at(1);
                if self.is_ident_at(self.pos + 1) || next == "*" {
                    self.pos += 1;
                    continue;
                }
                name_tok = self.pos;
                self.pos += 1;
                break;
            } else {
                return Err(Failure::Syntax(
                    format!("expected declarator, found `{t}`"),
                    self.pos,
                ));
            }
        }
        let mut dims = Vec::new();
        while self.eat("[") {
            if self.peek() != "]" {
                dims.push(self.parse_expr()?);
            }
            self.expect("]")?;
        }
        if self.peek() == "__attribute__" {
            self.pos += 1;
            self.skip_parens()?;
        }
        let init = if self.eat("=") {
            Some(self.parse_assign()?)
        } else {
            None
        };
        Ok(Declarator {
            name: self.text(name_tok).to_string(),
            name_tok,
            dims,
            init,
        })
    }

    // ----------------------------------------------------------------------
    // expressions

    fn parse_expr(&mut self) -> PResult<Expr> {
        let first = self.parse_assign()?;
        if self.peek() != "," {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(",") {
            items.push(self.parse_assign()?);
        }
        let span = items[0].span.join(items[items.len() - 1].span);
        Ok(Expr {
            kind: ExprKind::Comma(items),
            span,
        })
    }

    fn parse_assign(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.parse_assign_inner();
        self.leave();
        r
    }

    fn parse_assign_inner(&mut self) -> PResult<Expr> {
        if self.peek() == "{" && self.kind(self.pos) == Some(TokenKind::Punct) {
            return self.parse_init_list();
        }
        let lhs = self.parse_ternary()?;
        let op = self.peek();
        if self.kind(self.pos) == Some(TokenKind::Punct)
            && matches!(
                op,
                "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "&=" | "|=" | "^=" | "<<=" | ">>="
            )
        {
            let op = op.to_string();
            self.pos += 1;
            let rhs = self.parse_assign()?;
            let span = lhs.span.join(rhs.span);
            return Ok(Expr {
                kind: ExprKind::Assign {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            });
        }
        Ok(lhs)
    }

    fn parse_init_list(&mut self) -> PResult<Expr> {
        let open = self.expect("{")?;
        let mut items = Vec::new();
        while self.peek() != "}" {
            if self.at_end() {
                return Err(Failure::Syntax("unterminated initializer".into(), open));
            }
            // designators: `.field =` / `[idx] =`
            if self.peek() == "." && self.is_ident_at(self.pos + 1) && self.peek_at(2) == "=" {
                self.pos += 3;
            } else if self.peek() == "[" {
                if let Some(close) = self.matching(self.pos) {
                    if self.text(close + 1) == "=" {
                        self.pos = close + 2;
                    }
                }
            }
            items.push(self.parse_assign()?);
            if !self.eat(",") {
                break;
            }
        }
        let close = self.expect("}")?;
        Ok(Expr {
            kind: ExprKind::InitList(items),
            span: Span::new(open, close),
        })
    }

    fn parse_ternary(&mut self) -> PResult<Expr> {
        let cond = self.parse_binary(1)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        let then = if self.peek() == ":" {
            None
        } else {
            Some(Box::new(self.parse_expr()?))
        };
        self.expect(":")?;
        let els = self.parse_assign()?;
        let span = cond.span.join(els.span);
        Ok(Expr {
            kind: ExprKind::Ternary {
                cond: Box::new(cond),
                then,
                els: Box::new(els),
            },
            span,
        })
    }

    fn binary_prec(&self) -> Option<u8> {
        if self.kind(self.pos) != Some(TokenKind::Punct) {
            return None;
        }
        Some(match self.peek() {
            "||" => 1,
            "&&" => 2,
            "|" => 3,
            "^" => 4,
            "&" => 5,
            "==" | "!=" => 6,
            "<" | ">" | "<=" | ">=" => 7,
            "<<" | ">>" => 8,
            "+" | "-" => 9,
            "*" | "/" | "%" => 10,
            _ => return None,
        })
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        while let Some(prec) = self.binary_prec() {
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            self.enter()?;
            let rhs = self.parse_binary(prec + 1);
            self.leave();
            let rhs = rhs?;
            let span = lhs.span.join(rhs.span);
            lhs = Expr {
                kind: ExprKind::Binary {
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            };
        }
        Ok(lhs)
    }

    /// Whether the tokens between `open` (a `(`) and its match name a type.
    fn is_type_name_at(&self, open: usize) -> Option<usize> {
        let close = self.matching(open)?;
        if close == open + 1 {
            return None;
        }
        let first = self.text(open + 1);
        if !self.is_ident_at(open + 1) {
            return None;
        }
        if is_type_keyword(first) || is_typedef_like(first) {
            return Some(close);
        }
        // `(name *)`, `(name **)`
        let mut i = open + 2;
        let mut stars = 0;
        while i < close && self.text(i) == "*" {
            stars += 1;
            i += 1;
        }
        if stars > 0 && i == close {
            return Some(close);
        }
        None
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.parse_unary_inner();
        self.leave();
        r
    }

    fn parse_unary_inner(&mut self) -> PResult<Expr> {
        let start = self.pos;
        let t = self.peek();
        let punct = self.kind(self.pos) == Some(TokenKind::Punct);
        if punct && matches!(t, "++" | "--" | "+" | "-" | "!" | "~" | "*" | "&" | "&&") {
            let op = t.to_string();
            self.pos += 1;
            let operand = self.parse_unary()?;
            let span = Span::new(start, operand.span.last);
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op,
                    operand: Box::new(operand),
                },
                span,
            });
        }
        if !punct && (t == "sizeof" || t == "_Alignof" || t == "__alignof__") {
            self.pos += 1;
            if self.peek() == "(" {
                if let Some(close) = self.is_type_name_at(self.pos) {
                    self.pos = close + 1;
                    return Ok(Expr {
                        kind: ExprKind::SizeofType,
                        span: Span::new(start, close),
                    });
                }
            }
            let operand = self.parse_unary()?;
            let span = Span::new(start, operand.span.last);
            return Ok(Expr {
                kind: ExprKind::Sizeof(Box::new(operand)),
                span,
            });
        }
        if punct && t == "(" {
            if let Some(close) = self.is_type_name_at(self.pos) {
                self.pos = close + 1;
                let operand = if self.peek() == "{" {
                    self.parse_init_list()?
                } else {
                    self.parse_unary()?
                };
                let span = Span::new(start, operand.span.last);
                return Ok(Expr {
                    kind: ExprKind::Cast {
                        operand: Box::new(operand),
                    },
                    span,
                });
            }
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        loop {
            let punct = self.kind(self.pos) == Some(TokenKind::Punct);
            if !punct {
                break;
            }
            match self.peek() {
                "(" => {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != ")" {
                        loop {
                            args.push(self.parse_assign()?);
                            if !self.eat(",") {
                                break;
                            }
                        }
                    }
                    let close = self.expect(")")?;
                    let span = Span::new(e.span.first, close);
                    let (callee, callee_expr) = match &e.kind {
                        ExprKind::Ident(name) => (name.clone(), None),
                        _ => (self.span_text(e.span), Some(Box::new(e))),
                    };
                    e = Expr {
                        kind: ExprKind::Call {
                            callee,
                            callee_expr,
                            args,
                        },
                        span,
                    };
                }
                "[" => {
                    self.pos += 1;
                    let index = self.parse_expr()?;
                    let close = self.expect("]")?;
                    let span = Span::new(e.span.first, close);
                    e = Expr {
                        kind: ExprKind::Index {
                            base: Box::new(e),
                            index: Box::new(index),
                        },
                        span,
                    };
                }
                "." | "->" => {
                    let arrow = self.peek() == "->";
                    self.pos += 1;
                    if !self.is_ident_at(self.pos) {
                        return Err(Failure::Syntax("expected member name".into(), self.pos));
                    }
                    let field = self.peek().to_string();
                    self.pos += 1;
                    let span = Span::new(e.span.first, self.pos - 1);
                    e = Expr {
                        kind: ExprKind::Member {
                            base: Box::new(e),
                            field,
                            arrow,
                        },
                        span,
                    };
                }
                "++" | "--" => {
                    let op = self.peek().to_string();
                    self.pos += 1;
                    let span = Span::new(e.span.first, self.pos - 1);
                    e = Expr {
                        kind: ExprKind::Postfix {
                            op,
                            operand: Box::new(e),
                        },
                        span,
                    };
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn span_text(&self, span: Span) -> String {
        let a = self.toks[span.first].start;
        let b = self.toks[span.last].end;
        self.src[a..b].to_string()
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let start = self.pos;
        let Some(kind) = self.kind(self.pos) else {
            return Err(Failure::Syntax("unexpected end of input".into(), self.pos));
        };
        match kind {
            TokenKind::Ident => {
                let t = self.peek();
                if STATEMENT_KEYWORDS.contains(&t) || matches!(t, "struct" | "union" | "enum") {
                    return Err(Failure::Syntax(format!("unexpected `{t}`"), self.pos));
                }
                self.pos += 1;
                Ok(Expr {
                    kind: ExprKind::Ident(t.to_string()),
                    span: Span::new(start, start),
                })
            }
            TokenKind::Number | TokenKind::Char => {
                self.pos += 1;
                Ok(Expr {
                    kind: ExprKind::Literal,
                    span: Span::new(start, start),
                })
            }
            TokenKind::Str => {
                self.pos += 1;
                // adjacent literals and interleaved format macros (`"%" PRIu64`)
                while self.kind(self.pos) == Some(TokenKind::Str)
                    || (self.is_ident_at(self.pos)
                        && self.kind(self.pos + 1) == Some(TokenKind::Str)
                        && self.kind(self.pos - 1) == Some(TokenKind::Str))
                {
                    self.pos += 1;
                }
                Ok(Expr {
                    kind: ExprKind::Literal,
                    span: Span::new(start, self.pos - 1),
                })
            }
            TokenKind::Punct => match self.peek() {
                "(" => {
                    self.pos += 1;
                    if self.peek() == "{" {
                        return Err(Failure::Syntax(
                            "statement expressions are not supported".into(),
                            self.pos,
                        ));
                    }
                    let inner = self.parse_expr()?;
                    self.expect(")")?;
                    Ok(inner)
                }
                "{" => self.parse_init_list(),
                t => Err(Failure::Syntax(format!("unexpected `{t}`"), self.pos)),
            },
        }
    }
}
