use std::fmt;

pub const FINAL_ANSWER: &str = "final_answer";

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Call { receiver: Option<String>, name: String, args: Vec<Expr> },
    Literal(Literal),
    Var(String),
    Index(String, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub target: String,
    pub expr: Expr,
}

/// A parsed action script. `source` is kept verbatim; `lines` maps each
/// statement to its 1-based source line.
#[derive(Debug, Clone)]
pub struct ActionScript {
    pub(crate) source: String,
    pub(crate) statements: Vec<Statement>,
    pub(crate) lines: Vec<usize>,
}

impl ActionScript {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn line_of(&self, statement: usize) -> usize {
        self.lines.get(statement).copied().unwrap_or(0)
    }

    pub fn assigns_final_answer(&self) -> bool {
        self.statements.iter().any(|s| s.target == FINAL_ANSWER)
    }
}

/// Structural equality: statements only, source text and line numbers ignored.
impl PartialEq for ActionScript {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Literal::Num(n) => write!(f, "{n}"),
            Literal::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Call { receiver, name, args } => {
                if let Some(r) = receiver {
                    write!(f, "{r}.")?;
                }
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Index(v, i) => write!(f, "{v}[{i}]"),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.target, self.expr)
    }
}

/// Canonical rendering: one statement per line, single spaces around `=`
/// and after commas, no comments.
pub fn pretty_print(script: &ActionScript) -> String {
    script.statements.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("\n")
}
