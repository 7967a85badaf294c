//! Recursive-descent parser for the space language.
//!
//! ```text
//! space := stmt+                         statements separated by newline or ";"
//! stmt  := IDENT "=" expr
//! expr  := "normal(" NUM "," NUM ")" | "lognormal(" NUM "," NUM ")"
//!        | "uniform(" NUM "," NUM ")" | "randint(" INT "," INT ")"
//!        | "choice(" expr ("," expr)* ")"
//!        | ("log"|"exp"|"neg") "(" expr ")" | NUM | IDENT
//! ```
//!
//! `#` starts a comment running to end of line. References must point to
//! earlier statements, which keeps the graph acyclic by construction.

use std::collections::BTreeMap;

use super::{ExprGraph, ExprNode, FuncOp, NodeId, NodeKind, SpaceError};

/// Line/column of a token, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsePosition {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Equals,
    LParen,
    RParen,
    Comma,
    Separator, // newline or ';'
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn tokenize(mut self) -> Result<Vec<(Token, ParsePosition)>, SpaceError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let at = ParsePosition { line: self.line, column: self.col };
            match c {
                b' ' | b'\t' | b'\r' => {
                    self.bump();
                }
                b'#' => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                b'\n' | b';' => {
                    self.bump();
                    out.push((Token::Separator, at));
                }
                b'=' => {
                    self.bump();
                    out.push((Token::Equals, at));
                }
                b'(' => {
                    self.bump();
                    out.push((Token::LParen, at));
                }
                b')' => {
                    self.bump();
                    out.push((Token::RParen, at));
                }
                b',' => {
                    self.bump();
                    out.push((Token::Comma, at));
                }
                b'-' | b'+' | b'0'..=b'9' | b'.' => {
                    let mut text = String::new();
                    text.push(self.bump() as char);
                    while let Some(c) = self.peek() {
                        let exponent_sign = (c == b'+' || c == b'-')
                            && matches!(text.as_bytes().last(), Some(b'e' | b'E'));
                        if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exponent_sign
                        {
                            text.push(self.bump() as char);
                        } else {
                            break;
                        }
                    }
                    out.push((Token::Number(text), at));
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let mut text = String::new();
                    text.push(self.bump() as char);
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            text.push(self.bump() as char);
                        } else {
                            break;
                        }
                    }
                    out.push((Token::Ident(text), at));
                }
                other => {
                    return Err(SpaceError::Syntax {
                        line: at.line,
                        column: at.column,
                        message: format!("unexpected character `{}`", other as char),
                    })
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<(Token, ParsePosition)>,
    pos: usize,
    nodes: Vec<ExprNode>,
    roots: Vec<(String, NodeId)>,
    by_name: BTreeMap<String, NodeId>,
}

impl Parser {
    fn err_at(&self, message: String) -> SpaceError {
        let at = self
            .tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map(|(_, p)| *p)
            .unwrap_or(ParsePosition { line: 1, column: 1 });
        SpaceError::Syntax { line: at.line, column: at.column, message }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), SpaceError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(self.err_at(format!("expected {what}, found {t:?}"))),
            None => Err(self.err_at(format!("expected {what}, found end of input"))),
        }
    }

    fn push(&mut self, kind: NodeKind) -> NodeId {
        self.nodes.push(ExprNode { kind, label: None });
        self.nodes.len() - 1
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Some(Token::Separator)) {
            self.pos += 1;
        }
    }

    fn parse(mut self) -> Result<ExprGraph, SpaceError> {
        loop {
            self.skip_separators();
            if self.peek().is_none() {
                break;
            }
            let name = match self.next() {
                Some(Token::Ident(name)) => name,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.err_at("expected assignment name".into()));
                }
            };
            if self.by_name.contains_key(&name) {
                return Err(SpaceError::DuplicateRoot(name));
            }
            self.expect(Token::Equals, "`=`")?;
            let id = self.parse_expr(&name)?;
            self.by_name.insert(name.clone(), id);
            self.roots.push((name, id));
            match self.peek() {
                None | Some(Token::Separator) => {}
                _ => return Err(self.err_at("expected end of statement".into())),
            }
        }
        if self.roots.is_empty() {
            return Err(self.err_at("empty space: at least one assignment required".into()));
        }
        let mut graph = ExprGraph { nodes: self.nodes, roots: self.roots };
        graph.assign_labels();
        Ok(graph)
    }

    fn parse_number(&mut self, what: &str) -> Result<f64, SpaceError> {
        match self.next() {
            Some(Token::Number(text)) => text
                .parse::<f64>()
                .map_err(|_| self.err_at(format!("malformed number `{text}`"))),
            other => Err(self.err_at(format!("expected {what}, found {other:?}"))),
        }
    }

    fn parse_integer(&mut self, what: &str) -> Result<i64, SpaceError> {
        match self.next() {
            Some(Token::Number(text)) => text
                .parse::<i64>()
                .map_err(|_| self.err_at(format!("expected {what} to be an integer, got `{text}`"))),
            other => Err(self.err_at(format!("expected {what}, found {other:?}"))),
        }
    }

    fn parse_two_args<T>(
        &mut self,
        mut arg: impl FnMut(&mut Self) -> Result<T, SpaceError>,
    ) -> Result<(T, T), SpaceError> {
        self.expect(Token::LParen, "`(`")?;
        let a = arg(self)?;
        self.expect(Token::Comma, "`,`")?;
        let b = arg(self)?;
        self.expect(Token::RParen, "`)`")?;
        Ok((a, b))
    }

    fn parse_expr(&mut self, root: &str) -> Result<NodeId, SpaceError> {
        match self.next() {
            Some(Token::Number(text)) => {
                let v = text
                    .parse::<f64>()
                    .map_err(|_| self.err_at(format!("malformed number `{text}`")))?;
                Ok(self.push(NodeKind::Constant(v)))
            }
            Some(Token::Ident(word)) => match word.as_str() {
                "normal" => {
                    let (mean, stddev) = self.parse_two_args(|p| p.parse_number("a number"))?;
                    if !(stddev > 0.0) {
                        return Err(SpaceError::BoundViolation {
                            context: root.to_string(),
                            message: format!("normal stddev must be > 0, got {stddev}"),
                        });
                    }
                    Ok(self.push(NodeKind::Normal { mean, stddev }))
                }
                "lognormal" => {
                    let (log_mean, log_stddev) = self.parse_two_args(|p| p.parse_number("a number"))?;
                    if !(log_stddev > 0.0) {
                        return Err(SpaceError::BoundViolation {
                            context: root.to_string(),
                            message: format!("lognormal stddev must be > 0, got {log_stddev}"),
                        });
                    }
                    Ok(self.push(NodeKind::Lognormal { log_mean, log_stddev }))
                }
                "uniform" => {
                    let (lo, hi) = self.parse_two_args(|p| p.parse_number("a number"))?;
                    if !(lo < hi) {
                        return Err(SpaceError::BoundViolation {
                            context: root.to_string(),
                            message: format!("uniform requires lo < hi, got [{lo}, {hi}]"),
                        });
                    }
                    Ok(self.push(NodeKind::Uniform { lo, hi }))
                }
                "randint" => {
                    let (lo, hi) = self.parse_two_args(|p| p.parse_integer("an integer"))?;
                    if lo > hi {
                        return Err(SpaceError::BoundViolation {
                            context: root.to_string(),
                            message: format!("randint requires lo <= hi, got [{lo}, {hi}]"),
                        });
                    }
                    Ok(self.push(NodeKind::Randint { lo, hi }))
                }
                "choice" => {
                    self.expect(Token::LParen, "`(`")?;
                    let mut options = vec![self.parse_expr(root)?];
                    loop {
                        match self.next() {
                            Some(Token::Comma) => options.push(self.parse_expr(root)?),
                            Some(Token::RParen) => break,
                            other => {
                                return Err(self.err_at(format!(
                                    "expected `,` or `)` in choice, found {other:?}"
                                )))
                            }
                        }
                    }
                    Ok(self.push(NodeKind::Choice(options)))
                }
                "log" | "exp" | "neg" => {
                    let op = match word.as_str() {
                        "log" => FuncOp::Log,
                        "exp" => FuncOp::Exp,
                        _ => FuncOp::Neg,
                    };
                    self.expect(Token::LParen, "`(`")?;
                    let arg = self.parse_expr(root)?;
                    self.expect(Token::RParen, "`)`")?;
                    Ok(self.push(NodeKind::Func { op, arg }))
                }
                name => {
                    let target = *self
                        .by_name
                        .get(name)
                        .ok_or_else(|| SpaceError::UndefinedReference(name.to_string()))?;
                    Ok(self.push(NodeKind::Ref(target)))
                }
            },
            other => Err(self.err_at(format!("expected an expression, found {other:?}"))),
        }
    }
}

/// Parse and validate a space description. Labels are assigned
/// deterministically, so the same text always yields the same graph.
pub fn parse_space(text: &str) -> Result<ExprGraph, SpaceError> {
    let tokens = Lexer::new(text).tokenize()?;
    let parser = Parser {
        tokens,
        pos: 0,
        nodes: Vec::new(),
        roots: Vec::new(),
        by_name: BTreeMap::new(),
    };
    parser.parse()
}
