//! Recursive-descent parser for the query language.
//!
//! ```text
//! query  = ["CREATE" "VIEW" ident "AS"]
//!          "SELECT" sel ("," sel)* "FROM" frm ("," frm)* ["WHERE" atom ("AND" atom)*] ;
//! sel    = ident "." ident "AS" ident ;
//! frm    = ident "AS" ident ;
//! atom   = operand "=" operand ;            -- at least one side is ident "." ident
//! ```
//!
//! Keywords are case-insensitive, identifiers are not. `--` starts a line
//! comment.

use std::collections::HashSet;

use thiserror::Error;

use super::{Atom, FromItem, Query, SelectItem, VarCol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: lexical error: {message}")]
    Lexical { line: usize, col: usize, message: String },
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: duplicate FROM alias `{alias}`")]
    DuplicateFrom { line: usize, col: usize, alias: String },
    #[error("{line}:{col}: SELECT alias `{alias}` repeated")]
    RepeatedAlias { line: usize, col: usize, alias: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Keyword {
    Select,
    From,
    Where,
    And,
    As,
    Create,
    View,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        Some(match word.to_ascii_uppercase().as_str() {
            "SELECT" => Keyword::Select,
            "FROM" => Keyword::From,
            "WHERE" => Keyword::Where,
            "AND" => Keyword::And,
            "AS" => Keyword::As,
            "CREATE" => Keyword::Create,
            "VIEW" => Keyword::View,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Kw(Keyword),
    Ident(String),
    Str(String),
    Dot,
    Comma,
    Eq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Kw(k) => format!("keyword {}", format!("{k:?}").to_ascii_uppercase()),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Dot => "`.`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let (l, cl) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: l, col: cl });
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(ParseError::Lexical {
                        line: l,
                        col: cl,
                        message: "unexpected `-`".into(),
                    });
                }
            }
            '.' => {
                bump!();
                push(&mut out, Tok::Dot);
            }
            ',' => {
                bump!();
                push(&mut out, Tok::Comma);
            }
            '=' => {
                bump!();
                push(&mut out, Tok::Eq);
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some(c) => s.push(c),
                        None => {
                            return Err(ParseError::Lexical {
                                line: l,
                                col: cl,
                                message: "unterminated string literal".into(),
                            })
                        }
                    }
                }
                push(&mut out, Tok::Str(s));
            }
            c if c.is_alphabetic() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == ':' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let tok = match Keyword::lookup(&s) {
                    Some(k) => Tok::Kw(k),
                    None => Tok::Ident(s),
                };
                push(&mut out, tok);
            }
            other => {
                return Err(ParseError::Lexical {
                    line: l,
                    col: cl,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

enum Operand {
    Cell(VarCol),
    Const(String),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, at: &Token, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            line: at.line,
            col: at.col,
            message: message.into(),
        })
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        if self.peek().tok == Tok::Kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> Result<(), ParseError> {
        let t = self.next();
        if t.tok == Tok::Kw(kw) {
            Ok(())
        } else {
            let want = format!("{kw:?}").to_ascii_uppercase();
            self.error(&t, format!("expected {want}, found {}", t.tok.describe()))
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == tok {
            Ok(t)
        } else {
            self.error(&t, format!("expected {}, found {}", tok.describe(), t.tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<(String, Token), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => self.error(&t, format!("expected identifier, found {}", other.describe())),
        }
    }

    fn var_col(&mut self) -> Result<VarCol, ParseError> {
        let (var, _) = self.ident()?;
        self.expect(Tok::Dot)?;
        let (col, _) = self.ident()?;
        Ok(VarCol { var, col })
    }

    fn select_item(&mut self) -> Result<(SelectItem, Token), ParseError> {
        let (var, _) = self.ident()?;
        if self.peek().tok == Tok::Kw(Keyword::As) {
            let at = self.peek().clone();
            return self.error(
                &at,
                format!("expected `var.col AS alias`; the reversed form `{var} AS var.col` is not accepted"),
            );
        }
        self.expect(Tok::Dot)?;
        let (col, _) = self.ident()?;
        self.expect_kw(Keyword::As)?;
        let (alias, alias_tok) = self.ident()?;
        Ok((
            SelectItem {
                expr: VarCol { var, col },
                alias,
            },
            alias_tok,
        ))
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(Operand::Const(s))
            }
            _ => self.var_col().map(Operand::Cell),
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let start = self.peek().clone();
        let lhs = self.operand()?;
        self.expect(Tok::Eq)?;
        let rhs = self.operand()?;
        match (lhs, rhs) {
            (Operand::Cell(a), Operand::Cell(b)) => Ok(Atom::VarVar(a, b)),
            (Operand::Cell(a), Operand::Const(c)) | (Operand::Const(c), Operand::Cell(a)) => Ok(Atom::VarConst(a, c)),
            (Operand::Const(_), Operand::Const(_)) => {
                self.error(&start, "an equation between two constants is not allowed")
            }
        }
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        let mut target = String::new();
        if self.eat_kw(Keyword::Create) {
            self.expect_kw(Keyword::View)?;
            target = self.ident()?.0;
            self.expect_kw(Keyword::As)?;
        }
        self.expect_kw(Keyword::Select)?;
        let mut selects = Vec::new();
        let mut aliases = HashSet::new();
        loop {
            let (item, at) = self.select_item()?;
            if !aliases.insert(item.alias.clone()) {
                return Err(ParseError::RepeatedAlias {
                    line: at.line,
                    col: at.col,
                    alias: item.alias,
                });
            }
            selects.push(item);
            if self.peek().tok != Tok::Comma {
                break;
            }
            self.next();
        }
        self.expect_kw(Keyword::From)?;
        let mut froms = Vec::new();
        let mut vars = HashSet::new();
        loop {
            let (table, _) = self.ident()?;
            self.expect_kw(Keyword::As)?;
            let (var, at) = self.ident()?;
            if !vars.insert(var.clone()) {
                return Err(ParseError::DuplicateFrom {
                    line: at.line,
                    col: at.col,
                    alias: var,
                });
            }
            froms.push(FromItem { var, table });
            if self.peek().tok != Tok::Comma {
                break;
            }
            self.next();
        }
        let mut wheres = Vec::new();
        if self.eat_kw(Keyword::Where) {
            wheres.push(self.atom()?);
            while self.eat_kw(Keyword::And) {
                wheres.push(self.atom()?);
            }
        }
        let end = self.next();
        if end.tok != Tok::Eof {
            return self.error(&end, format!("unexpected {}", end.tok.describe()));
        }
        Ok(Query {
            name: target.clone(),
            target_table: target,
            selects,
            froms,
            wheres,
        })
    }
}

/// Parses one query. Without a `CREATE VIEW` header the name and target
/// table are left empty; see [`Query::for_table`].
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.query()
}
