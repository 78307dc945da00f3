//! Line-oriented parser for the action language.
//!
//! ```text
//! script := stmt+            (one per line, blank lines and `#` comments ignored)
//! stmt   := IDENT "=" expr
//! expr   := call | literal | IDENT | IDENT "[" INT "]"
//! call   := [IDENT "."] IDENT "(" [expr ("," expr)*] ")"
//! ```

use std::fmt;

use thiserror::Error;

use super::ast::{ActionScript, Expr, Literal, Statement, FINAL_ANSWER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at line {}, column {}: expected ", self.line, self.column)?;
        match self.expected.as_slice() {
            [one] => write!(f, "{one}")?,
            many => write!(f, "one of {}", many.join(", "))?,
        }
        write!(f, ", found {}", self.found)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Bool(bool),
    Dot,
    Comma,
    Eq,
    LParen,
    RParen,
    LBracket,
    RBracket,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Bool(b) => format!("`{b}`"),
            Tok::Dot => "`.`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::End => "end of line".into(),
        }
    }
}

struct Lexed {
    toks: Vec<(Tok, usize)>,
}

fn err(line: usize, column: usize, expected: &[&str], found: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found: found.into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex_line(text: &str, line: usize) -> Result<Lexed, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '#' => break,
            '.' => {
                toks.push((Tok::Dot, col));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, col));
                i += 1;
            }
            '=' => {
                toks.push((Tok::Eq, col));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, col));
                i += 1;
            }
            '[' => {
                toks.push((Tok::LBracket, col));
                i += 1;
            }
            ']' => {
                toks.push((Tok::RBracket, col));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(line, col, &["closing `\"`"], "end of line")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = match chars.get(i + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some(other) => {
                                    return Err(err(line, i + 2, &["escape sequence"], format!("`{other}`")));
                                }
                                None => return Err(err(line, i + 2, &["escape sequence"], "end of line")),
                            };
                            s.push(esc);
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push((Tok::Str(s), col));
            }
            c if c.is_ascii_digit() || c == '-' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                let valid = {
                    let body = lit.strip_prefix('-').unwrap_or(&lit);
                    let mut parts = body.split('.');
                    let int = parts.next().unwrap_or("");
                    let frac = parts.next();
                    !int.is_empty()
                        && int.bytes().all(|b| b.is_ascii_digit())
                        && parts.next().is_none()
                        && frac.map_or(true, |f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
                };
                if !valid {
                    return Err(err(line, col, &["number"], format!("`{lit}`")));
                }
                let n: f64 = lit.parse().map_err(|_| err(line, col, &["number"], format!("`{lit}`")))?;
                toks.push((Tok::Num(n), col));
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "true" => Tok::Bool(true),
                    "false" => Tok::Bool(false),
                    _ => Tok::Ident(word),
                };
                toks.push((tok, col));
            }
            other => return Err(err(line, col, &["token"], format!("`{other}`"))),
        }
    }
    toks.push((Tok::End, chars.len() + 1));
    Ok(Lexed { toks })
}

struct LineParser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
}

impl LineParser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail(&self, expected: &[&str]) -> ParseError {
        err(self.line, self.col(), expected, self.peek().describe())
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.fail(&[name]))
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let target = match self.peek() {
            Tok::Ident(name) => name.clone(),
            _ => return Err(self.fail(&["identifier"])),
        };
        self.bump();
        self.expect(Tok::Eq, "`=`")?;
        let expr = self.expr()?;
        if *self.peek() != Tok::End {
            return Err(self.fail(&["end of line"]));
        }
        Ok(Statement { target, expr })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Literal(Literal::Num(n)))
            }
            Tok::Bool(b) => {
                self.bump();
                Ok(Expr::Literal(Literal::Bool(b)))
            }
            Tok::Ident(first) => {
                self.bump();
                match self.peek() {
                    Tok::Dot => {
                        self.bump();
                        let name = match self.peek() {
                            Tok::Ident(n) => n.clone(),
                            _ => return Err(self.fail(&["skill name"])),
                        };
                        self.bump();
                        if *self.peek() != Tok::LParen {
                            return Err(self.fail(&["`(`"]));
                        }
                        self.call(Some(first), name)
                    }
                    Tok::LParen => self.call(None, first),
                    Tok::LBracket => {
                        self.bump();
                        let col = self.col();
                        let idx = match self.peek() {
                            Tok::Num(n) if *n >= 0.0 && n.fract() == 0.0 && *n <= u32::MAX as f64 => *n as usize,
                            _ => return Err(err(self.line, col, &["non-negative integer"], self.peek().describe())),
                        };
                        self.bump();
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(Expr::Index(first, idx))
                    }
                    _ => Ok(Expr::Var(first)),
                }
            }
            _ => Err(self.fail(&["identifier", "string literal", "number", "`true`", "`false`"])),
        }
    }

    fn call(&mut self, receiver: Option<String>, name: String) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(Expr::Call { receiver, name, args });
        }
        loop {
            args.push(self.expr()?);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(Expr::Call { receiver, name, args });
                }
                _ => return Err(self.fail(&["`,`", "`)`"])),
            }
        }
    }
}

/// Parses an action script. Blank lines and comments are skipped; an empty
/// source yields an empty script.
pub fn parse_script(source: &str) -> Result<ActionScript, ParseError> {
    let mut statements = Vec::new();
    let mut lines = Vec::new();
    let mut final_line = None;
    for (idx, text) in source.lines().enumerate() {
        let line = idx + 1;
        let lexed = lex_line(text, line)?;
        if lexed.toks.len() == 1 {
            continue;
        }
        let mut p = LineParser { toks: lexed.toks, pos: 0, line };
        let stmt = p.statement()?;
        if stmt.target == FINAL_ANSWER {
            if final_line.is_some() {
                return Err(err(line, 1, &["at most one `final_answer` assignment"], "a second one"));
            }
            final_line = Some(line);
        }
        statements.push(stmt);
        lines.push(line);
    }
    Ok(ActionScript { source: source.to_string(), statements, lines })
}
