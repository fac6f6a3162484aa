//! Tokenizer for the supported C subset.
//!
//! Comments are dropped, preprocessor directive lines are skipped (including
//! backslash continuations) and the bodies of `#if 0` blocks are discarded.
//! Everything else becomes a [`Token`] carrying its byte range and 1-based
//! line/column.

use super::CpgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

const PUNCTS: &[&str] = &[
    ">>=", "<<=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "^=", "|=", "##", "+", "-", "*", "/", "%", "<", ">", "=", "!",
    "~", "&", "|", "^", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}", "#",
];

struct Cursor<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    line_start: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn column(&self) -> u32 {
        (self.pos - self.line_start) as u32 + 1
    }

    fn bump(&mut self) {
        if self.bytes[self.pos] == b'\n' {
            self.line += 1;
            self.line_start = self.pos + 1;
        }
        self.pos += 1;
    }

    fn at_line_start(&self) -> bool {
        self.src[self.line_start..self.pos]
            .bytes()
            .all(|b| b == b' ' || b == b'\t' || b == b'\r' || b == 0x0c)
    }

    /// Consumes the rest of a directive line, honouring `\` continuations, and
    /// returns the directive text.
    fn skip_directive(&mut self) -> String {
        let start = self.pos;
        while let Some(b) = self.peek(0) {
            if b == b'\\' && self.peek(1) == Some(b'\n') {
                self.bump();
                self.bump();
                continue;
            }
            if b == b'\\' && self.peek(1) == Some(b'\r') && self.peek(2) == Some(b'\n') {
                self.bump();
                self.bump();
                self.bump();
                continue;
            }
            if b == b'/' && self.peek(1) == Some(b'*') {
                // block comments may straddle directive lines
                if self.skip_block_comment().is_err() {
                    break;
                }
                continue;
            }
            if b == b'\n' {
                break;
            }
            self.bump();
        }
        self.src[start..self.pos].to_string()
    }

    fn skip_block_comment(&mut self) -> Result<(), (u32, u32)> {
        let (line, col) = (self.line, self.column());
        self.bump();
        self.bump();
        loop {
            match self.peek(0) {
                None => return Err((line, col)),
                Some(b'*') if self.peek(1) == Some(b'/') => {
                    self.bump();
                    self.bump();
                    return Ok(());
                }
                Some(_) => self.bump(),
            }
        }
    }
}

fn directive_name(directive: &str) -> &str {
    let rest = directive.trim_start().trim_start_matches('#').trim_start();
    let end = rest
        .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .unwrap_or(rest.len());
    &rest[..end]
}

fn is_if_zero(directive: &str) -> bool {
    let rest = directive.trim_start().trim_start_matches('#').trim_start();
    rest.strip_prefix("if")
        .map(|r| r.trim() == "0")
        .unwrap_or(false)
}

/// Tokenizes `src`. Errors carry the offending position.
pub fn tokenize(src: &str) -> Result<Vec<Token>, CpgError> {
    let mut cur = Cursor {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        line: 1,
        line_start: 0,
    };
    let mut tokens = Vec::new();
    // depth of nested conditionals inside an `#if 0` region; 0 = not skipping
    let mut dead_depth = 0usize;

    while let Some(b) = cur.peek(0) {
        if b == b'#' && cur.at_line_start() {
            let directive = cur.skip_directive();
            let name = directive_name(&directive);
            if dead_depth > 0 {
                match name {
                    "if" | "ifdef" | "ifndef" => dead_depth += 1,
                    "endif" => dead_depth -= 1,
                    "else" | "elif" if dead_depth == 1 => dead_depth = 0,
                    _ => {}
                }
            } else if is_if_zero(&directive) {
                dead_depth = 1;
            }
            continue;
        }
        if dead_depth > 0 {
            cur.bump();
            continue;
        }
        match b {
            b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => cur.bump(),
            b'\\' if matches!(cur.peek(1), Some(b'\n') | Some(b'\r')) => {
                cur.bump();
            }
            b'/' if cur.peek(1) == Some(b'/') => {
                while let Some(c) = cur.peek(0) {
                    if c == b'\n' {
                        break;
                    }
                    cur.bump();
                }
            }
            b'/' if cur.peek(1) == Some(b'*') => {
                cur.skip_block_comment()
                    .map_err(|(line, column)| CpgError::Lex {
                        line,
                        column,
                        message: "unterminated block comment".into(),
                    })?;
            }
            b'"' | b'\'' => tokens.push(lex_quoted(&mut cur, b)?),
            b'0'..=b'9' => tokens.push(lex_number(&mut cur)),
            b'.' if matches!(cur.peek(1), Some(b'0'..=b'9')) => tokens.push(lex_number(&mut cur)),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let (start, line, column) = (cur.pos, cur.line, cur.column());
                while matches!(cur.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    cur.bump();
                }
                let text = &src[start..cur.pos];
                // wide / unicode literal prefixes
                if matches!(text, "L" | "u" | "U" | "u8")
                    && matches!(cur.peek(0), Some(b'"') | Some(b'\''))
                {
                    let quote = cur.peek(0).unwrap_or(b'"');
                    let mut tok = lex_quoted(&mut cur, quote)?;
                    tok.start = start;
                    tok.line = line;
                    tok.column = column;
                    tokens.push(tok);
                } else {
                    tokens.push(Token {
                        kind: TokenKind::Ident,
                        start,
                        end: cur.pos,
                        line,
                        column,
                    });
                }
            }
            _ => {
                let rest = &src[cur.pos..];
                let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(CpgError::Lex {
                        line: cur.line,
                        column: cur.column(),
                        message: format!("illegal character {ch:?}"),
                    });
                };
                let (start, line, column) = (cur.pos, cur.line, cur.column());
                for _ in 0..p.len() {
                    cur.bump();
                }
                tokens.push(Token {
                    kind: TokenKind::Punct,
                    start,
                    end: cur.pos,
                    line,
                    column,
                });
            }
        }
    }
    Ok(tokens)
}

fn lex_quoted(cur: &mut Cursor<'_>, quote: u8) -> Result<Token, CpgError> {
    let (start, line, column) = (cur.pos, cur.line, cur.column());
    cur.bump();
    loop {
        match cur.peek(0) {
            None | Some(b'\n') => {
                return Err(CpgError::Lex {
                    line,
                    column,
                    message: "unterminated literal".into(),
                })
            }
            Some(b'\\') => {
                cur.bump();
                if cur.peek(0).is_some() {
                    cur.bump();
                }
            }
            Some(c) if c == quote => {
                cur.bump();
                break;
            }
            Some(_) => cur.bump(),
        }
    }
    Ok(Token {
        kind: if quote == b'"' {
            TokenKind::Str
        } else {
            TokenKind::Char
        },
        start,
        end: cur.pos,
        line,
        column,
    })
}

fn lex_number(cur: &mut Cursor<'_>) -> Token {
    let (start, line, column) = (cur.pos, cur.line, cur.column());
    while let Some(c) = cur.peek(0) {
        if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
            let exp = matches!(c, b'e' | b'E' | b'p' | b'P');
            cur.bump();
            if exp && matches!(cur.peek(0), Some(b'+') | Some(b'-')) {
                cur.bump();
            }
        } else {
            break;
        }
    }
    Token {
        kind: TokenKind::Number,
        start,
        end: cur.pos,
        line,
        column,
    }
}
