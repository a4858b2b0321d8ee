//! Demonstration-language parser.
//!
//! A deliberately small grammar so the whole pipeline runs without an
//! external front-end:
//!
//! ```text
//! source  := methoddef | stmts
//! methoddef := "def" IDENT "(" [ IDENT { "," IDENT } ] ")" "{" stmts "}"
//! stmts   := stmt { (";" | NEWLINE) stmt }
//! stmt    := IDENT "=" expr | expr
//! expr    := IDENT "(" [ expr { "," expr } ] ")" | IDENT | NUMBER
//! ```
//!
//! Node types: `MethodDecl` (token = method name, children = parameter
//! `SimpleName`s then a `Block`), `Assign`, `Call` (first child is the
//! callee), `SimpleName`, `NumberLiteral`, `Block`.

use super::AstNode;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Def,
    Assign,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    /// `;` or newline — both separate statements.
    Sep,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(source: &str) -> Result<Vec<Spanned>> {
    let mut out: Vec<Spanned> = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = source.chars().peekable();
    while let Some(&ch) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match ch {
            ' ' | '\t' | '\r' => {
                chars.next();
                bump(ch, &mut line, &mut col);
            }
            '\n' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                // collapse separator runs
                if !matches!(out.last().map(|s| &s.tok), Some(Tok::Sep) | None) {
                    out.push(Spanned { tok: Tok::Sep, line: tline, col: tcol });
                }
            }
            ';' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                if !matches!(out.last().map(|s| &s.tok), Some(Tok::Sep) | None) {
                    out.push(Spanned { tok: Tok::Sep, line: tline, col: tcol });
                }
            }
            '=' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Assign, line: tline, col: tcol });
            }
            '(' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Spanned { tok: Tok::LParen, line: tline, col: tcol });
            }
            ')' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Spanned { tok: Tok::RParen, line: tline, col: tcol });
            }
            '{' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Spanned { tok: Tok::LBrace, line: tline, col: tcol });
            }
            '}' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Spanned { tok: Tok::RBrace, line: tline, col: tcol });
            }
            ',' => {
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Spanned { tok: Tok::Comma, line: tline, col: tcol });
            }
            c if c.is_ascii_digit() => {
                let mut text = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        text.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                out.push(Spanned { tok: Tok::Number(text), line: tline, col: tcol });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        text.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                let tok = if text == "def" { Tok::Def } else { Tok::Ident(text) };
                out.push(Spanned { tok, line: tline, col: tcol });
            }
            other => {
                return Err(CoreError::Syntax {
                    line,
                    col,
                    message: format!("unexpected character {other:?}"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        if let Some(s) = self.toks.get(self.pos) {
            (s.line, s.col)
        } else if let Some(s) = self.toks.last() {
            // input exhausted: point just past the final token
            (s.line, s.col + 1)
        } else {
            (1, 1)
        }
    }

    fn err(&self, message: impl Into<String>) -> CoreError {
        let (line, col) = self.here();
        CoreError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn eat(&mut self, want: &Tok, what: &str) -> Result<()> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn eat_ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn skip_seps(&mut self) {
        while self.peek() == Some(&Tok::Sep) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<AstNode> {
        match self.peek().cloned() {
            Some(Tok::Number(text)) => {
                self.pos += 1;
                Ok(AstNode::with_token("NumberLiteral", &text))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut children = vec![AstNode::with_token("SimpleName", &name)];
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            children.push(self.expr()?);
                            if self.peek() == Some(&Tok::Comma) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.eat(&Tok::RParen, "')'")?;
                    Ok(AstNode {
                        node_type: "Call".to_string(),
                        token: None,
                        children,
                    })
                } else {
                    Ok(AstNode::with_token("SimpleName", &name))
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn stmt(&mut self) -> Result<AstNode> {
        // lookahead for IDENT '='
        if let (Some(Tok::Ident(name)), Some(Tok::Assign)) = (
            self.peek().cloned().as_ref(),
            self.toks.get(self.pos + 1).map(|s| &s.tok),
        ) {
            let name = name.clone();
            self.pos += 2;
            let value = self.expr()?;
            return Ok(AstNode {
                node_type: "Assign".to_string(),
                token: None,
                children: vec![AstNode::with_token("SimpleName", &name), value],
            });
        }
        self.expr()
    }

    fn stmts_until(&mut self, terminator: Option<&Tok>) -> Result<Vec<AstNode>> {
        let mut out = Vec::new();
        self.skip_seps();
        loop {
            match (self.peek(), terminator) {
                (None, None) => break,
                (Some(t), Some(term)) if t == term => break,
                (None, Some(_)) => return Err(self.err("unexpected end of input")),
                _ => {}
            }
            out.push(self.stmt()?);
            self.skip_seps();
        }
        Ok(out)
    }

    fn method_def(&mut self) -> Result<AstNode> {
        self.eat(&Tok::Def, "'def'")?;
        let name = self.eat_ident("method name")?;
        self.eat(&Tok::LParen, "'('")?;
        let mut children = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                let param = self.eat_ident("parameter name")?;
                children.push(AstNode::with_token("SimpleName", &param));
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.eat(&Tok::RParen, "')'")?;
        self.skip_seps();
        self.eat(&Tok::LBrace, "'{'")?;
        let body = self.stmts_until(Some(&Tok::RBrace))?;
        self.eat(&Tok::RBrace, "'}'")?;
        children.push(AstNode::with_children("Block", body));
        Ok(AstNode {
            node_type: "MethodDecl".to_string(),
            token: Some(name),
            children,
        })
    }
}

/// Parses mini-language source into a tree. A single bare statement
/// parses to its own node; multiple statements wrap in a `Block`.
pub fn parse_toy(source: &str) -> Result<AstNode> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0 };
    p.skip_seps();
    let node = if p.peek() == Some(&Tok::Def) {
        p.method_def()?
    } else {
        let mut stmts = p.stmts_until(None)?;
        match stmts.len() {
            0 => return Err(p.err("empty input")),
            1 => stmts.pop().unwrap(),
            _ => AstNode::with_children("Block", stmts),
        }
    };
    p.skip_seps();
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(node)
}
