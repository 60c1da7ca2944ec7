use std::collections::BTreeSet;
use std::fmt;

use super::{Constant, Expression, Func, Node};

/// Token classes used in syntax-error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Number,
    Ident,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Token::Number => "number",
            Token::Ident => "identifier",
            Token::LParen => "'('",
            Token::RParen => "')'",
            Token::Plus => "'+'",
            Token::Minus => "'-'",
            Token::Star => "'*'",
            Token::Slash => "'/'",
            Token::Caret => "'^'",
            Token::End => "end of input",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SyntaxError {
    /// Byte offset into the source.
    pub offset: usize,
    pub expected: BTreeSet<Token>,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at offset {}: {}", self.offset, self.message)?;
        if !self.expected.is_empty() {
            let list: Vec<String> = self.expected.iter().map(|t| t.to_string()).collect();
            write!(f, " (expected {})", list.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme<'a> {
    Number(f64),
    Ident(&'a str),
    Sym(Token),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next lexeme and its starting offset.
    fn next(&mut self) -> Result<(Lexeme<'a>, usize), SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Lexeme::End, start));
        };
        let sym = match c {
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            b'+' => Some(Token::Plus),
            b'-' => Some(Token::Minus),
            b'*' => Some(Token::Star),
            b'/' => Some(Token::Slash),
            b'^' => Some(Token::Caret),
            _ => None,
        };
        if let Some(tok) = sym {
            self.pos += 1;
            return Ok((Lexeme::Sym(tok), start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start).map(|v| (Lexeme::Number(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Ok((Lexeme::Ident(&self.src[start..self.pos]), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(SyntaxError {
            offset: start,
            expected: BTreeSet::new(),
            message: format!("unexpected character {ch:?}"),
        })
    }

    fn number(&mut self, start: usize) -> Result<f64, SyntaxError> {
        let bytes = self.src.as_bytes();
        let mut digits = 0;
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
            digits += 1;
        }
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            return Err(SyntaxError {
                offset: start,
                expected: [Token::Number].into_iter().collect(),
                message: "malformed number".into(),
            });
        }
        // Exponent only when a digit follows, so `2e` is not swallowed.
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut look = self.pos + 1;
            if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                look += 1;
            }
            if look < bytes.len() && bytes[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        self.src[start..self.pos].parse::<f64>().map_err(|_| SyntaxError {
            offset: start,
            expected: [Token::Number].into_iter().collect(),
            message: "malformed number".into(),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Lexeme<'a>,
    offset: usize,
    var: &'a str,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, var: &'a str) -> Result<Self, SyntaxError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (current, offset) = lexer.next()?;
        Ok(Parser {
            lexer,
            current,
            offset,
            var,
        })
    }

    fn bump(&mut self) -> Result<(), SyntaxError> {
        let (lex, off) = self.lexer.next()?;
        self.current = lex;
        self.offset = off;
        Ok(())
    }

    fn is_sym(&self, tok: Token) -> bool {
        self.current == Lexeme::Sym(tok)
    }

    fn error(&self, expected: &[Token], message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            offset: self.offset,
            expected: expected.iter().copied().collect(),
            message: message.into(),
        }
    }

    fn describe(&self) -> String {
        match &self.current {
            Lexeme::Number(v) => format!("unexpected number {v}"),
            Lexeme::Ident(s) => format!("unexpected identifier `{s}`"),
            Lexeme::Sym(t) => format!("unexpected {t}"),
            Lexeme::End => "unexpected end of input".into(),
        }
    }

    // expr := term (("+"|"-") term)*
    fn expr(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            if self.is_sym(Token::Plus) {
                self.bump()?;
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.is_sym(Token::Minus) {
                self.bump()?;
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    // term := factor (("*"|"/") factor)*
    fn term(&mut self) -> Result<Node, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            if self.is_sym(Token::Star) {
                self.bump()?;
                lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.is_sym(Token::Slash) {
                self.bump()?;
                lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    // factor := "-" factor | power
    fn factor(&mut self) -> Result<Node, SyntaxError> {
        if self.is_sym(Token::Minus) {
            self.bump()?;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    // power := atom ("^" factor)?
    fn power(&mut self) -> Result<Node, SyntaxError> {
        let base = self.atom()?;
        if self.is_sym(Token::Caret) {
            self.bump()?;
            let exp = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    // atom := NUMBER | "pi" | "e" | IDENT "(" expr ")" | IDENT | "(" expr ")"
    fn atom(&mut self) -> Result<Node, SyntaxError> {
        const ATOM_START: [Token; 4] = [Token::Number, Token::Ident, Token::LParen, Token::Minus];
        match self.current.clone() {
            Lexeme::Number(v) => {
                self.bump()?;
                Ok(Node::Num(v))
            }
            Lexeme::Ident(name) => {
                let name_offset = self.offset;
                self.bump()?;
                if self.is_sym(Token::LParen) {
                    let Some(func) = Func::from_name(name) else {
                        return Err(SyntaxError {
                            offset: name_offset,
                            expected: BTreeSet::new(),
                            message: format!("unknown function `{name}`"),
                        });
                    };
                    self.bump()?;
                    let arg = self.expr()?;
                    if !self.is_sym(Token::RParen) {
                        return Err(self.error(&[Token::RParen], self.describe()));
                    }
                    self.bump()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == self.var {
                    Ok(Node::Var)
                } else if name == "pi" {
                    Ok(Node::Const(Constant::Pi))
                } else if name == "e" {
                    Ok(Node::Const(Constant::E))
                } else {
                    Err(SyntaxError {
                        offset: name_offset,
                        expected: BTreeSet::new(),
                        message: format!("unknown identifier `{name}` (variable is `{}`)", self.var),
                    })
                }
            }
            Lexeme::Sym(Token::LParen) => {
                self.bump()?;
                let inner = self.expr()?;
                if !self.is_sym(Token::RParen) {
                    return Err(self.error(&[Token::RParen], self.describe()));
                }
                self.bump()?;
                Ok(inner)
            }
            _ => Err(self.error(&ATOM_START, self.describe())),
        }
    }
}

/// Parses `source` with the default variable name `t`.
pub fn parse(source: &str) -> Result<Expression, SyntaxError> {
    parse_with_var(source, "t")
}

pub fn parse_with_var(source: &str, var: &str) -> Result<Expression, SyntaxError> {
    if var == "pi" || var == "e" || Func::from_name(var).is_some() {
        return Err(SyntaxError {
            offset: 0,
            expected: BTreeSet::new(),
            message: format!("`{var}` is reserved and cannot name the variable"),
        });
    }
    let mut p = Parser::new(source, var)?;
    let node = p.expr()?;
    if p.current != Lexeme::End {
        let msg = p.describe();
        return Err(p.error(
            &[
                Token::Plus,
                Token::Minus,
                Token::Star,
                Token::Slash,
                Token::Caret,
                Token::End,
            ],
            msg,
        ));
    }
    Ok(Expression::from_node(node, var))
}
