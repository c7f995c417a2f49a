//! A jq subset evaluator.
//!
//! Supported: identity, field and index access, slices, iteration `.[]`,
//! optional `?`, pipe, comma, `//`, `and`/`or`, comparisons, arithmetic,
//! array and object construction, `if`/`then`/`elif`/`else`/`end`, and the
//! builtins listed in [`BUILTINS`]. Anything else is rejected with
//! [`JqError::Unsupported`] so callers can tell a subset limit from a typo.

use std::cmp::Ordering;

use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JqError {
    #[error("jq syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("jq runtime error: {0}")]
    Runtime(String),
    #[error("jq construct not supported by this runtime: {0}")]
    Unsupported(String),
}

/// Builtin functions as `(name, arity)`.
pub const BUILTINS: &[(&str, usize)] = &[
    ("map", 1),
    ("select", 1),
    ("del", 1),
    ("length", 0),
    ("keys", 0),
    ("keys_unsorted", 0),
    ("values", 0),
    ("has", 1),
    ("not", 0),
    ("type", 0),
    ("add", 0),
    ("first", 0),
    ("last", 0),
    ("first", 1),
    ("empty", 0),
    ("tostring", 0),
    ("tonumber", 0),
    ("ascii_downcase", 0),
    ("ascii_upcase", 0),
    ("to_entries", 0),
    ("from_entries", 0),
    ("with_entries", 1),
    ("map_values", 1),
    ("sort", 0),
    ("sort_by", 1),
    ("unique", 0),
    ("reverse", 0),
    ("min", 0),
    ("max", 0),
    ("join", 1),
    ("split", 1),
    ("startswith", 1),
    ("endswith", 1),
    ("contains", 1),
    ("any", 0),
    ("all", 0),
    ("floor", 0),
    ("limit", 2),
];

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "def", "as", "reduce", "foreach", "try", "catch", "label", "import", "include", "__loc__",
];

type Res<T> = Result<T, JqError>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Dot,
    Field(String),
    Ident(String),
    Str(String),
    Num(f64),
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Pipe,
    Comma,
    Colon,
    Semi,
    Question,
    Op(&'static str),
    Eof,
}

fn lex(src: &str) -> Res<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |offset: usize, message: &str| JqError::Syntax {
        offset,
        message: message.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '.' => {
                if chars.get(i + 1) == Some(&'.') {
                    return Err(JqError::Unsupported("recursive descent `..`".into()));
                }
                i += 1;
                if chars.get(i).is_some_and(|c| c.is_alphabetic() || *c == '_') {
                    let mut name = String::new();
                    while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                        name.push(chars[i]);
                        i += 1;
                    }
                    out.push((Tok::Field(name), start));
                } else {
                    out.push((Tok::Dot, start));
                }
                continue;
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(&c) = chars.get(i) else {
                        return Err(syntax(start, "unterminated string"));
                    };
                    i += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(&e) = chars.get(i) else {
                                return Err(syntax(i, "unterminated escape"));
                            };
                            i += 1;
                            match e {
                                'n' => s.push('\n'),
                                't' => s.push('\t'),
                                'r' => s.push('\r'),
                                'b' => s.push('\u{8}'),
                                'f' => s.push('\u{c}'),
                                '/' => s.push('/'),
                                '\\' => s.push('\\'),
                                '"' => s.push('"'),
                                'u' => {
                                    let hex: String = chars.iter().skip(i).take(4).collect();
                                    let code = u32::from_str_radix(&hex, 16)
                                        .map_err(|_| syntax(i, "bad \\u escape"))?;
                                    s.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                                    i += 4;
                                }
                                '(' => {
                                    return Err(JqError::Unsupported("string interpolation".into()))
                                }
                                _ => return Err(syntax(i - 1, "unknown escape")),
                            }
                        }
                        c => s.push(c),
                    }
                }
                out.push((Tok::Str(s), start));
                continue;
            }
            '$' => return Err(JqError::Unsupported("variables (`$name`)".into())),
            '@' => return Err(JqError::Unsupported("format strings (`@name`)".into())),
            c if c.is_ascii_digit() => {
                let mut text = String::new();
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(text.chars().last(), Some('e' | 'E'))))
                {
                    text.push(chars[i]);
                    i += 1;
                }
                let n = text.parse::<f64>().map_err(|_| syntax(start, "bad number"))?;
                out.push((Tok::Num(n), start));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut name = String::new();
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == ':')
                {
                    if chars[i] == ':' {
                        if chars.get(i + 1) == Some(&':') {
                            return Err(JqError::Unsupported("module-qualified names".into()));
                        }
                        break;
                    }
                    name.push(chars[i]);
                    i += 1;
                }
                out.push((Tok::Ident(name), start));
                continue;
            }
            _ => {}
        }
        let two: String = chars.iter().skip(i).take(2).collect();
        let tok = match two.as_str() {
            "==" => Some(Tok::Op("==")),
            "!=" => Some(Tok::Op("!=")),
            "<=" => Some(Tok::Op("<=")),
            ">=" => Some(Tok::Op(">=")),
            "//" => {
                if chars.get(i + 2) == Some(&'=') {
                    return Err(JqError::Unsupported("update-assignment operators".into()));
                }
                Some(Tok::Op("//"))
            }
            "|=" | "+=" | "-=" | "*=" | "/=" | "%=" => {
                return Err(JqError::Unsupported("update-assignment operators".into()))
            }
            "?/" => return Err(JqError::Unsupported("destructuring alternative `?//`".into())),
            _ => None,
        };
        if let Some(tok) = tok {
            out.push((tok, start));
            i += 2;
            continue;
        }
        let tok = match c {
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '|' => Tok::Pipe,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            '?' => Tok::Question,
            '<' => Tok::Op("<"),
            '>' => Tok::Op(">"),
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '%' => Tok::Op("%"),
            '=' => return Err(JqError::Unsupported("assignment `=`".into())),
            _ => return Err(syntax(i, &format!("unexpected character `{c}`"))),
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::Eof, chars.len()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
enum ObjKey {
    Literal(String),
    Computed(Ast),
}

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Identity,
    Literal(Value),
    Index(Box<Ast>, Box<Ast>),
    Slice(Box<Ast>, Option<Box<Ast>>, Option<Box<Ast>>),
    Iterate(Box<Ast>),
    Try(Box<Ast>),
    Pipe(Box<Ast>, Box<Ast>),
    Comma(Box<Ast>, Box<Ast>),
    Alt(Box<Ast>, Box<Ast>),
    And(Box<Ast>, Box<Ast>),
    Or(Box<Ast>, Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    Neg(Box<Ast>),
    Array(Option<Box<Ast>>),
    Object(Vec<(ObjKey, Option<Ast>)>),
    If(Vec<(Ast, Ast)>, Option<Box<Ast>>),
    Call(String, Vec<Ast>),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Res<T> {
        Err(JqError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Res<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn pipe(&mut self) -> Res<Ast> {
        let lhs = self.comma()?;
        if *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.pipe()?;
            return Ok(Ast::Pipe(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn comma(&mut self) -> Res<Ast> {
        let mut lhs = self.alt()?;
        while *self.peek() == Tok::Comma {
            self.bump();
            let rhs = self.alt()?;
            lhs = Ast::Comma(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn alt(&mut self) -> Res<Ast> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Op("//") {
            self.bump();
            let rhs = self.alt()?;
            return Ok(Ast::Alt(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Res<Ast> {
        let mut lhs = self.and()?;
        while self.is_keyword("or") {
            self.bump();
            let rhs = self.and()?;
            lhs = Ast::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Res<Ast> {
        let mut lhs = self.compare()?;
        while self.is_keyword("and") {
            self.bump();
            let rhs = self.compare()?;
            lhs = Ast::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn compare(&mut self) -> Res<Ast> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Op("==") => BinOp::Eq,
            Tok::Op("!=") => BinOp::Ne,
            Tok::Op("<") => BinOp::Lt,
            Tok::Op("<=") => BinOp::Le,
            Tok::Op(">") => BinOp::Gt,
            Tok::Op(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Ast::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Res<Ast> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Res<Ast> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("%") => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Res<Ast> {
        if *self.peek() == Tok::Op("-") {
            self.bump();
            let inner = self.postfix()?;
            return Ok(Ast::Neg(Box::new(inner)));
        }
        self.postfix()
    }

    /// Suffixes after a term: `.name`, `[..]`, `?`, `."str"`.
    fn postfix(&mut self) -> Res<Ast> {
        let mut term = self.term()?;
        loop {
            match self.peek().clone() {
                Tok::Field(name) => {
                    self.bump();
                    term = Ast::Index(Box::new(term), Box::new(Ast::Literal(Value::String(name))));
                }
                Tok::Dot => {
                    // `.[...]` or `."str"` after a term
                    match self.toks.get(self.pos + 1).map(|t| &t.0) {
                        Some(Tok::LBracket) => {
                            self.bump();
                        }
                        Some(Tok::Str(s)) => {
                            let s = s.clone();
                            self.bump();
                            self.bump();
                            term = Ast::Index(Box::new(term), Box::new(Ast::Literal(Value::String(s))));
                        }
                        _ => return self.err("unexpected `.`"),
                    }
                }
                Tok::LBracket => {
                    self.bump();
                    term = self.bracket_suffix(term)?;
                }
                Tok::Question => {
                    self.bump();
                    term = Ast::Try(Box::new(term));
                }
                _ => return Ok(term),
            }
        }
    }

    fn bracket_suffix(&mut self, target: Ast) -> Res<Ast> {
        if *self.peek() == Tok::RBracket {
            self.bump();
            return Ok(Ast::Iterate(Box::new(target)));
        }
        if *self.peek() == Tok::Colon {
            self.bump();
            let to = self.pipe()?;
            self.expect(Tok::RBracket, "`]`")?;
            return Ok(Ast::Slice(Box::new(target), None, Some(Box::new(to))));
        }
        let key = self.pipe()?;
        if *self.peek() == Tok::Colon {
            self.bump();
            let to = if *self.peek() == Tok::RBracket {
                None
            } else {
                Some(Box::new(self.pipe()?))
            };
            self.expect(Tok::RBracket, "`]`")?;
            return Ok(Ast::Slice(Box::new(target), Some(Box::new(key)), to));
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(Ast::Index(Box::new(target), Box::new(key)))
    }

    fn term(&mut self) -> Res<Ast> {
        match self.bump() {
            Tok::Dot => match self.peek().clone() {
                Tok::LBracket => {
                    self.bump();
                    self.bracket_suffix(Ast::Identity)
                }
                Tok::Str(s) => {
                    self.bump();
                    Ok(Ast::Index(Box::new(Ast::Identity), Box::new(Ast::Literal(Value::String(s)))))
                }
                _ => Ok(Ast::Identity),
            },
            Tok::Field(name) => Ok(Ast::Index(
                Box::new(Ast::Identity),
                Box::new(Ast::Literal(Value::String(name))),
            )),
            Tok::Str(s) => Ok(Ast::Literal(Value::String(s))),
            Tok::Num(n) => Ok(Ast::Literal(number(n))),
            Tok::LParen => {
                let inner = self.pipe()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::LBracket => {
                if *self.peek() == Tok::RBracket {
                    self.bump();
                    return Ok(Ast::Array(None));
                }
                let inner = self.pipe()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Ast::Array(Some(Box::new(inner))))
            }
            Tok::LBrace => self.object(),
            Tok::Ident(name) => self.ident(name),
            Tok::Eof => self.err("unexpected end of filter"),
            other => {
                self.pos -= 1;
                self.err(format!("unexpected token {other:?}"))
            }
        }
    }

    fn ident(&mut self, name: String) -> Res<Ast> {
        match name.as_str() {
            "true" => return Ok(Ast::Literal(Value::Bool(true))),
            "false" => return Ok(Ast::Literal(Value::Bool(false))),
            "null" => return Ok(Ast::Literal(Value::Null)),
            "if" => return self.if_expr(),
            n if UNSUPPORTED_KEYWORDS.contains(&n) => {
                return Err(JqError::Unsupported(format!("`{n}`")))
            }
            _ => {}
        }
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            loop {
                args.push(self.pipe()?);
                match self.bump() {
                    Tok::Semi => continue,
                    Tok::RParen => break,
                    _ => {
                        self.pos -= 1;
                        return self.err("expected `;` or `)` in argument list");
                    }
                }
            }
        }
        if !BUILTINS.iter().any(|(n, a)| *n == name && *a == args.len()) {
            return Err(JqError::Unsupported(format!("function `{name}/{}`", args.len())));
        }
        Ok(Ast::Call(name, args))
    }

    fn if_expr(&mut self) -> Res<Ast> {
        let mut branches = Vec::new();
        let cond = self.pipe()?;
        if !self.is_keyword("then") {
            return self.err("expected `then`");
        }
        self.bump();
        let body = self.pipe()?;
        branches.push((cond, body));
        loop {
            if self.is_keyword("elif") {
                self.bump();
                let cond = self.pipe()?;
                if !self.is_keyword("then") {
                    return self.err("expected `then`");
                }
                self.bump();
                let body = self.pipe()?;
                branches.push((cond, body));
            } else if self.is_keyword("else") {
                self.bump();
                let other = self.pipe()?;
                if !self.is_keyword("end") {
                    return self.err("expected `end`");
                }
                self.bump();
                return Ok(Ast::If(branches, Some(Box::new(other))));
            } else if self.is_keyword("end") {
                self.bump();
                return Ok(Ast::If(branches, None));
            } else {
                return self.err("expected `elif`, `else` or `end`");
            }
        }
    }

    fn object(&mut self) -> Res<Ast> {
        let mut entries = Vec::new();
        if *self.peek() == Tok::RBrace {
            self.bump();
            return Ok(Ast::Object(entries));
        }
        loop {
            let key = match self.bump() {
                Tok::Ident(name) => ObjKey::Literal(name),
                Tok::Str(s) => ObjKey::Literal(s),
                Tok::LParen => {
                    let k = self.pipe()?;
                    self.expect(Tok::RParen, "`)`")?;
                    ObjKey::Computed(k)
                }
                _ => {
                    self.pos -= 1;
                    return self.err("expected an object key");
                }
            };
            let value = if *self.peek() == Tok::Colon {
                self.bump();
                Some(self.object_value()?)
            } else {
                if matches!(key, ObjKey::Computed(_)) {
                    return self.err("computed keys need a value");
                }
                None
            };
            entries.push((key, value));
            match self.bump() {
                Tok::Comma => {
                    if *self.peek() == Tok::RBrace {
                        self.bump();
                        break;
                    }
                }
                Tok::RBrace => break,
                _ => {
                    self.pos -= 1;
                    return self.err("expected `,` or `}` in object");
                }
            }
        }
        Ok(Ast::Object(entries))
    }

    /// Object values bind tighter than `,`; a `|` is allowed and extends to
    /// the next `,` or `}`.
    fn object_value(&mut self) -> Res<Ast> {
        let lhs = self.alt()?;
        if *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.object_value()?;
            return Ok(Ast::Pipe(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }
}

fn number(n: f64) -> Value {
    if n.fract() == 0.0 && n.abs() < 9.0e15 {
        Value::Number(Number::from(n as i64))
    } else {
        Number::from_f64(n).map(Value::Number).unwrap_or(Value::Null)
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn truthy(v: &Value) -> bool {
    !matches!(v, Value::Null | Value::Bool(false))
}

fn type_rank(v: &Value) -> u8 {
    match v {
        Value::Null => 0,
        Value::Bool(false) => 1,
        Value::Bool(true) => 2,
        Value::Number(_) => 3,
        Value::String(_) => 4,
        Value::Array(_) => 5,
        Value::Object(_) => 6,
    }
}

/// jq's total order over JSON values.
pub fn compare(a: &Value, b: &Value) -> Ordering {
    let (ra, rb) = (type_rank(a), type_rank(b));
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(0.0), y.as_f64().unwrap_or(0.0));
            x.partial_cmp(&y).unwrap_or(Ordering::Equal)
        }
        (Value::String(x), Value::String(y)) => x.cmp(y),
        (Value::Array(x), Value::Array(y)) => {
            for (p, q) in x.iter().zip(y) {
                match compare(p, q) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            x.len().cmp(&y.len())
        }
        (Value::Object(x), Value::Object(y)) => {
            let mut kx: Vec<_> = x.keys().collect();
            let mut ky: Vec<_> = y.keys().collect();
            kx.sort();
            ky.sort();
            match kx.cmp(&ky) {
                Ordering::Equal => {}
                o => return o,
            }
            for k in kx {
                match compare(&x[k], &y[k]) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        }
        _ => Ordering::Equal,
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_f64()
}

fn runtime<T>(msg: impl Into<String>) -> Res<T> {
    Err(JqError::Runtime(msg.into()))
}

fn index_value(target: &Value, key: &Value) -> Res<Value> {
    match (target, key) {
        (Value::Null, Value::String(_) | Value::Number(_)) => Ok(Value::Null),
        (Value::Object(map), Value::String(k)) => Ok(map.get(k).cloned().unwrap_or(Value::Null)),
        (Value::Array(items), Value::Number(n)) => {
            let i = n.as_f64().unwrap_or(0.0).floor() as i64;
            let idx = if i < 0 { items.len() as i64 + i } else { i };
            Ok(if idx < 0 {
                Value::Null
            } else {
                items.get(idx as usize).cloned().unwrap_or(Value::Null)
            })
        }
        (t, k) => runtime(format!(
            "cannot index {} with {}",
            type_name(t),
            match k {
                Value::String(s) => format!("\"{s}\""),
                other => type_name(other).to_string(),
            }
        )),
    }
}

fn slice_bounds(len: usize, from: Option<&Value>, to: Option<&Value>) -> Res<(usize, usize)> {
    let norm = |v: Option<&Value>, default: i64| -> Res<usize> {
        let i = match v {
            None | Some(Value::Null) => default,
            Some(Value::Number(n)) => n.as_f64().unwrap_or(0.0).floor() as i64,
            Some(other) => return runtime(format!("slice bound must be a number, got {}", type_name(other))),
        };
        let i = if i < 0 { len as i64 + i } else { i };
        Ok(i.clamp(0, len as i64) as usize)
    };
    let f = norm(from, 0)?;
    let t = norm(to, len as i64)?;
    Ok((f, t.max(f)))
}

fn binary(op: BinOp, a: &Value, b: &Value) -> Res<Value> {
    use BinOp::*;
    match op {
        Eq => return Ok(Value::Bool(compare(a, b) == Ordering::Equal)),
        Ne => return Ok(Value::Bool(compare(a, b) != Ordering::Equal)),
        Lt => return Ok(Value::Bool(compare(a, b) == Ordering::Less)),
        Le => return Ok(Value::Bool(compare(a, b) != Ordering::Greater)),
        Gt => return Ok(Value::Bool(compare(a, b) == Ordering::Greater)),
        Ge => return Ok(Value::Bool(compare(a, b) != Ordering::Less)),
        _ => {}
    }
    match (op, a, b) {
        (Add, Value::Null, x) | (Add, x, Value::Null) => Ok(x.clone()),
        (Add, Value::Number(x), Value::Number(y)) => {
            Ok(number(x.as_f64().unwrap_or(0.0) + y.as_f64().unwrap_or(0.0)))
        }
        (Add, Value::String(x), Value::String(y)) => Ok(Value::String(format!("{x}{y}"))),
        (Add, Value::Array(x), Value::Array(y)) => {
            Ok(Value::Array(x.iter().chain(y).cloned().collect()))
        }
        (Add, Value::Object(x), Value::Object(y)) => {
            let mut out = x.clone();
            for (k, v) in y {
                out.insert(k.clone(), v.clone());
            }
            Ok(Value::Object(out))
        }
        (Sub, Value::Number(x), Value::Number(y)) => {
            Ok(number(x.as_f64().unwrap_or(0.0) - y.as_f64().unwrap_or(0.0)))
        }
        (Sub, Value::Array(x), Value::Array(y)) => Ok(Value::Array(
            x.iter()
                .filter(|v| !y.iter().any(|w| compare(v, w) == Ordering::Equal))
                .cloned()
                .collect(),
        )),
        (Mul, Value::Number(x), Value::Number(y)) => {
            Ok(number(x.as_f64().unwrap_or(0.0) * y.as_f64().unwrap_or(0.0)))
        }
        (Div, Value::Number(x), Value::Number(y)) => {
            let d = y.as_f64().unwrap_or(0.0);
            if d == 0.0 {
                return runtime("division by zero");
            }
            Ok(number(x.as_f64().unwrap_or(0.0) / d))
        }
        (Div, Value::String(x), Value::String(y)) => Ok(Value::Array(
            x.split(y.as_str()).map(|s| Value::String(s.into())).collect(),
        )),
        (Rem, Value::Number(x), Value::Number(y)) => {
            let d = y.as_f64().unwrap_or(0.0) as i64;
            if d == 0 {
                return runtime("modulo by zero");
            }
            Ok(number((x.as_f64().unwrap_or(0.0) as i64 % d) as f64))
        }
        (op, a, b) => runtime(format!(
            "{} and {} cannot be combined with {op:?}",
            type_name(a),
            type_name(b)
        )),
    }
}

/// A parsed filter, reusable across inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    source: String,
    ast: Ast,
}

impl Filter {
    pub fn parse(text: &str) -> Result<Filter, JqError> {
        let toks = lex(text)?;
        let mut parser = Parser { toks, pos: 0 };
        let ast = parser.pipe()?;
        if *parser.peek() != Tok::Eof {
            return parser.err("unexpected trailing input");
        }
        Ok(Filter {
            source: text.to_string(),
            ast,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// All outputs of the filter for one input.
    pub fn run(&self, input: &Value) -> Result<Vec<Value>, JqError> {
        eval(&self.ast, input)
    }

    /// Outputs collected: none → null, one → itself, several → array.
    pub fn apply(&self, input: &Value) -> Result<Value, JqError> {
        let mut out = self.run(input)?;
        Ok(match out.len() {
            0 => Value::Null,
            1 => out.pop().unwrap(),
            _ => Value::Array(out),
        })
    }
}

fn eval(ast: &Ast, input: &Value) -> Res<Vec<Value>> {
    match ast {
        Ast::Identity => Ok(vec![input.clone()]),
        Ast::Literal(v) => Ok(vec![v.clone()]),
        Ast::Index(target, key) => {
            let mut out = Vec::new();
            for t in eval(target, input)? {
                for k in eval(key, input)? {
                    out.push(index_value(&t, &k)?);
                }
            }
            Ok(out)
        }
        Ast::Slice(target, from, to) => {
            let mut out = Vec::new();
            let froms = match from {
                Some(f) => eval(f, input)?.into_iter().map(Some).collect(),
                None => vec![None],
            };
            let tos = match to {
                Some(t) => eval(t, input)?.into_iter().map(Some).collect(),
                None => vec![None],
            };
            for t in eval(target, input)? {
                for f in &froms {
                    for e in &tos {
                        out.push(match &t {
                            Value::Null => Value::Null,
                            Value::Array(items) => {
                                let (a, b) = slice_bounds(items.len(), f.as_ref(), e.as_ref())?;
                                Value::Array(items[a..b].to_vec())
                            }
                            Value::String(s) => {
                                let chars: Vec<char> = s.chars().collect();
                                let (a, b) = slice_bounds(chars.len(), f.as_ref(), e.as_ref())?;
                                Value::String(chars[a..b].iter().collect())
                            }
                            other => return runtime(format!("cannot slice {}", type_name(other))),
                        });
                    }
                }
            }
            Ok(out)
        }
        Ast::Iterate(target) => {
            let mut out = Vec::new();
            for t in eval(target, input)? {
                match t {
                    Value::Array(items) => out.extend(items),
                    Value::Object(map) => out.extend(map.into_iter().map(|(_, v)| v)),
                    other => return runtime(format!("cannot iterate over {}", type_name(&other))),
                }
            }
            Ok(out)
        }
        Ast::Try(inner) => Ok(eval(inner, input).unwrap_or_default()),
        Ast::Pipe(a, b) => {
            let mut out = Vec::new();
            for v in eval(a, input)? {
                out.extend(eval(b, &v)?);
            }
            Ok(out)
        }
        Ast::Comma(a, b) => {
            let mut out = eval(a, input)?;
            out.extend(eval(b, input)?);
            Ok(out)
        }
        Ast::Alt(a, b) => {
            let left: Vec<Value> = eval(a, input)
                .unwrap_or_default()
                .into_iter()
                .filter(truthy)
                .collect();
            if left.is_empty() {
                eval(b, input)
            } else {
                Ok(left)
            }
        }
        Ast::And(a, b) => {
            let mut out = Vec::new();
            for l in eval(a, input)? {
                if !truthy(&l) {
                    out.push(Value::Bool(false));
                    continue;
                }
                for r in eval(b, input)? {
                    out.push(Value::Bool(truthy(&r)));
                }
            }
            Ok(out)
        }
        Ast::Or(a, b) => {
            let mut out = Vec::new();
            for l in eval(a, input)? {
                if truthy(&l) {
                    out.push(Value::Bool(true));
                    continue;
                }
                for r in eval(b, input)? {
                    out.push(Value::Bool(truthy(&r)));
                }
            }
            Ok(out)
        }
        Ast::Binary(op, a, b) => {
            let mut out = Vec::new();
            let rs = eval(b, input)?;
            for l in eval(a, input)? {
                for r in &rs {
                    out.push(binary(*op, &l, r)?);
                }
            }
            Ok(out)
        }
        Ast::Neg(inner) => eval(inner, input)?
            .into_iter()
            .map(|v| match as_f64(&v) {
                Some(n) => Ok(number(-n)),
                None => runtime(format!("cannot negate {}", type_name(&v))),
            })
            .collect(),
        Ast::Array(None) => Ok(vec![Value::Array(Vec::new())]),
        Ast::Array(Some(inner)) => Ok(vec![Value::Array(eval(inner, input)?)]),
        Ast::Object(entries) => {
            let mut partials = vec![Map::new()];
            for (key, value) in entries {
                let keys: Vec<String> = match key {
                    ObjKey::Literal(k) => vec![k.clone()],
                    ObjKey::Computed(k) => eval(k, input)?
                        .into_iter()
                        .map(|v| match v {
                            Value::String(s) => Ok(s),
                            other => runtime(format!("object keys must be strings, got {}", type_name(&other))),
                        })
                        .collect::<Res<_>>()?,
                };
                let mut next = Vec::new();
                for k in &keys {
                    let values = match value {
                        Some(v) => eval(v, input)?,
                        None => vec![index_value(input, &Value::String(k.clone()))?],
                    };
                    for p in &partials {
                        for v in &values {
                            let mut m = p.clone();
                            m.insert(k.clone(), v.clone());
                            next.push(m);
                        }
                    }
                }
                partials = next;
            }
            Ok(partials.into_iter().map(Value::Object).collect())
        }
        Ast::If(branches, otherwise) => eval_if(branches, otherwise.as_deref(), input),
        Ast::Call(name, args) => call(name, args, input),
    }
}

fn eval_if(branches: &[(Ast, Ast)], otherwise: Option<&Ast>, input: &Value) -> Res<Vec<Value>> {
    let Some(((cond, body), rest)) = branches.split_first() else {
        return match otherwise {
            Some(o) => eval(o, input),
            None => Ok(vec![input.clone()]),
        };
    };
    let mut out = Vec::new();
    for c in eval(cond, input)? {
        if truthy(&c) {
            out.extend(eval(body, input)?);
        } else {
            out.extend(eval_if(rest, otherwise, input)?);
        }
    }
    Ok(out)
}

fn one(args: &[Ast], input: &Value) -> Res<Vec<Value>> {
    eval(&args[0], input)
}

fn call(name: &str, args: &[Ast], input: &Value) -> Res<Vec<Value>> {
    let single = |v: Value| Ok(vec![v]);
    match (name, args.len()) {
        ("empty", 0) => Ok(Vec::new()),
        ("map", 1) => {
            let items: Vec<Value> = match input {
                Value::Array(items) => items.clone(),
                Value::Object(map) => map.values().cloned().collect(),
                other => return runtime(format!("cannot map over {}", type_name(other))),
            };
            let mut out = Vec::new();
            for item in &items {
                out.extend(eval(&args[0], item)?);
            }
            single(Value::Array(out))
        }
        ("map_values", 1) => match input {
            Value::Array(items) => {
                let mut out = Vec::new();
                for item in items {
                    if let Some(v) = eval(&args[0], item)?.into_iter().next() {
                        out.push(v);
                    }
                }
                single(Value::Array(out))
            }
            Value::Object(map) => {
                let mut out = Map::new();
                for (k, item) in map {
                    if let Some(v) = eval(&args[0], item)?.into_iter().next() {
                        out.insert(k.clone(), v);
                    }
                }
                single(Value::Object(out))
            }
            other => runtime(format!("cannot map_values over {}", type_name(other))),
        },
        ("select", 1) => Ok(one(args, input)?
            .iter()
            .filter(|c| truthy(c))
            .map(|_| input.clone())
            .collect()),
        ("del", 1) => {
            let mut targets = paths(&args[0], input)?;
            targets.sort_by(|a, b| compare(&Value::Array(b.clone()), &Value::Array(a.clone())));
            targets.dedup();
            let mut out = input.clone();
            for p in targets {
                delete_path(&mut out, &p)?;
            }
            single(out)
        }
        ("length", 0) => single(match input {
            Value::Null => number(0.0),
            Value::Bool(_) => return runtime("boolean has no length"),
            Value::Number(n) => number(n.as_f64().unwrap_or(0.0).abs()),
            Value::String(s) => number(s.chars().count() as f64),
            Value::Array(a) => number(a.len() as f64),
            Value::Object(m) => number(m.len() as f64),
        }),
        ("keys", 0) | ("keys_unsorted", 0) => match input {
            Value::Object(m) => {
                let mut keys: Vec<String> = m.keys().cloned().collect();
                if name == "keys" {
                    keys.sort();
                }
                single(Value::Array(keys.into_iter().map(Value::String).collect()))
            }
            Value::Array(a) => single(Value::Array((0..a.len()).map(|i| number(i as f64)).collect())),
            other => runtime(format!("{} has no keys", type_name(other))),
        },
        ("values", 0) => Ok(if matches!(input, Value::Null) {
            Vec::new()
        } else {
            vec![input.clone()]
        }),
        ("has", 1) => one(args, input)?
            .into_iter()
            .map(|k| match (input, &k) {
                (Value::Object(m), Value::String(s)) => Ok(Value::Bool(m.contains_key(s))),
                (Value::Array(a), Value::Number(n)) => {
                    let i = n.as_f64().unwrap_or(-1.0);
                    Ok(Value::Bool(i >= 0.0 && (i as usize) < a.len()))
                }
                (t, k) => runtime(format!("cannot check whether {} has a {} key", type_name(t), type_name(k))),
            })
            .collect(),
        ("not", 0) => single(Value::Bool(!truthy(input))),
        ("type", 0) => single(Value::String(type_name(input).into())),
        ("add", 0) => match input {
            Value::Array(items) => {
                let mut acc = Value::Null;
                for item in items {
                    acc = binary(BinOp::Add, &acc, item)?;
                }
                single(acc)
            }
            Value::Null => single(Value::Null),
            other => runtime(format!("cannot add elements of {}", type_name(other))),
        },
        ("first", 0) => single(index_value(input, &number(0.0))?),
        ("last", 0) => single(index_value(input, &number(-1.0))?),
        ("first", 1) => Ok(one(args, input)?.into_iter().take(1).collect()),
        ("limit", 2) => {
            let mut out = Vec::new();
            for n in eval(&args[0], input)? {
                let n = as_f64(&n).unwrap_or(0.0).max(0.0) as usize;
                out.extend(eval(&args[1], input)?.into_iter().take(n));
            }
            Ok(out)
        }
        ("tostring", 0) => single(match input {
            Value::String(_) => input.clone(),
            other => Value::String(other.to_string()),
        }),
        ("tonumber", 0) => match input {
            Value::Number(_) => single(input.clone()),
            Value::String(s) => match s.trim().parse::<f64>() {
                Ok(n) => single(number(n)),
                Err(_) => runtime(format!("cannot parse {s:?} as a number")),
            },
            other => runtime(format!("{} cannot be parsed as a number", type_name(other))),
        },
        ("ascii_downcase", 0) | ("ascii_upcase", 0) => match input {
            Value::String(s) => single(Value::String(if name == "ascii_downcase" {
                s.to_ascii_lowercase()
            } else {
                s.to_ascii_uppercase()
            })),
            other => runtime(format!("{name} input must be a string, got {}", type_name(other))),
        },
        ("to_entries", 0) => match input {
            Value::Object(m) => single(Value::Array(
                m.iter()
                    .map(|(k, v)| {
                        let mut e = Map::new();
                        e.insert("key".into(), Value::String(k.clone()));
                        e.insert("value".into(), v.clone());
                        Value::Object(e)
                    })
                    .collect(),
            )),
            other => runtime(format!("to_entries input must be an object, got {}", type_name(other))),
        },
        ("from_entries", 0) => from_entries(input).map(|v| vec![v]),
        ("with_entries", 1) => {
            let entries = call("to_entries", &[], input)?;
            let mapped = call("map", args, &entries[0])?;
            from_entries(&mapped[0]).map(|v| vec![v])
        }
        ("sort", 0) | ("sort_by", 1) | ("unique", 0) | ("reverse", 0) | ("min", 0) | ("max", 0) => {
            let Value::Array(items) = input else {
                if name == "reverse" && matches!(input, Value::Null) {
                    return single(Value::Array(Vec::new()));
                }
                return runtime(format!("{name} input must be an array, got {}", type_name(input)));
            };
            let mut items = items.clone();
            match name {
                "sort" | "unique" => {
                    items.sort_by(compare);
                    if name == "unique" {
                        items.dedup_by(|a, b| compare(a, b) == Ordering::Equal);
                    }
                }
                "sort_by" => {
                    let mut keyed = items
                        .into_iter()
                        .map(|v| Ok((Value::Array(eval(&args[0], &v)?), v)))
                        .collect::<Res<Vec<_>>>()?;
                    keyed.sort_by(|a, b| compare(&a.0, &b.0));
                    items = keyed.into_iter().map(|(_, v)| v).collect();
                }
                "reverse" => items.reverse(),
                "min" => return single(items.into_iter().min_by(compare).unwrap_or(Value::Null)),
                "max" => return single(items.into_iter().max_by(compare).unwrap_or(Value::Null)),
                _ => unreachable!(),
            }
            single(Value::Array(items))
        }
        ("join", 1) => {
            let Value::Array(items) = input else {
                return runtime(format!("join input must be an array, got {}", type_name(input)));
            };
            one(args, input)?
                .into_iter()
                .map(|sep| {
                    let Value::String(sep) = sep else {
                        return runtime("join separator must be a string");
                    };
                    let parts = items
                        .iter()
                        .map(|v| match v {
                            Value::Null => Ok(String::new()),
                            Value::String(s) => Ok(s.clone()),
                            Value::Number(_) | Value::Bool(_) => Ok(v.to_string()),
                            other => runtime(format!("cannot join {}", type_name(other))),
                        })
                        .collect::<Res<Vec<_>>>()?;
                    Ok(Value::String(parts.join(&sep)))
                })
                .collect()
        }
        ("split", 1) | ("startswith", 1) | ("endswith", 1) => {
            let Value::String(s) = input else {
                return runtime(format!("{name} input must be a string, got {}", type_name(input)));
            };
            one(args, input)?
                .into_iter()
                .map(|arg| {
                    let Value::String(a) = arg else {
                        return runtime(format!("{name} argument must be a string"));
                    };
                    Ok(match name {
                        "split" => Value::Array(s.split(a.as_str()).map(|p| Value::String(p.into())).collect()),
                        "startswith" => Value::Bool(s.starts_with(a.as_str())),
                        _ => Value::Bool(s.ends_with(a.as_str())),
                    })
                })
                .collect()
        }
        ("contains", 1) => one(args, input)?
            .into_iter()
            .map(|b| Ok(Value::Bool(contains(input, &b))))
            .collect(),
        ("any", 0) | ("all", 0) => {
            let Value::Array(items) = input else {
                return runtime(format!("{name} input must be an array"));
            };
            single(Value::Bool(if name == "any" {
                items.iter().any(truthy)
            } else {
                items.iter().all(truthy)
            }))
        }
        ("floor", 0) => match as_f64(input) {
            Some(n) => single(number(n.floor())),
            None => runtime(format!("floor input must be a number, got {}", type_name(input))),
        },
        _ => Err(JqError::Unsupported(format!("function `{name}/{}`", args.len()))),
    }
}

fn contains(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::String(x), Value::String(y)) => x.contains(y.as_str()),
        (Value::Array(x), Value::Array(y)) => y.iter().all(|bv| x.iter().any(|av| contains(av, bv))),
        (Value::Object(x), Value::Object(y)) => y
            .iter()
            .all(|(k, bv)| x.get(k).is_some_and(|av| contains(av, bv))),
        _ => compare(a, b) == Ordering::Equal,
    }
}

fn from_entries(input: &Value) -> Res<Value> {
    let Value::Array(items) = input else {
        return runtime(format!("from_entries input must be an array, got {}", type_name(input)));
    };
    let mut out = Map::new();
    for e in items {
        let key = ["key", "k", "name", "Name", "Key", "K"]
            .iter()
            .find_map(|k| e.get(k).filter(|v| !v.is_null()));
        let key = match key {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(Value::Bool(b)) => b.to_string(),
            _ => return runtime("from_entries: entry has no usable key"),
        };
        let value = ["value", "v", "Value", "V"]
            .iter()
            .find_map(|k| e.get(k))
            .cloned()
            .unwrap_or(Value::Null);
        out.insert(key, value);
    }
    Ok(Value::Object(out))
}

fn get_path<'a>(v: &'a Value, path: &[Value]) -> Option<&'a Value> {
    let mut cur = v;
    for seg in path {
        cur = match (cur, seg) {
            (Value::Object(m), Value::String(k)) => m.get(k)?,
            (Value::Array(a), Value::Number(n)) => {
                let i = n.as_i64()?;
                let i = if i < 0 { a.len() as i64 + i } else { i };
                a.get(usize::try_from(i).ok()?)?
            }
            _ => return None,
        };
    }
    Some(cur)
}

/// Paths denoted by a path expression, for `del`.
fn paths(ast: &Ast, input: &Value) -> Res<Vec<Vec<Value>>> {
    match ast {
        Ast::Identity => Ok(vec![Vec::new()]),
        Ast::Index(target, key) => {
            let mut out = Vec::new();
            for p in paths(target, input)? {
                let at = get_path(input, &p).cloned().unwrap_or(Value::Null);
                for k in eval(key, input)? {
                    // Type-check like a read would.
                    index_value(&at, &k)?;
                    let mut q = p.clone();
                    let k = match (&at, k) {
                        (Value::Array(items), Value::Number(n)) => {
                            let i = n.as_f64().unwrap_or(0.0) as i64;
                            number(if i < 0 { (items.len() as i64 + i) as f64 } else { i as f64 })
                        }
                        (_, k) => k,
                    };
                    q.push(k);
                    out.push(q);
                }
            }
            Ok(out)
        }
        Ast::Iterate(target) => {
            let mut out = Vec::new();
            for p in paths(target, input)? {
                match get_path(input, &p) {
                    Some(Value::Array(items)) => {
                        for i in 0..items.len() {
                            let mut q = p.clone();
                            q.push(number(i as f64));
                            out.push(q);
                        }
                    }
                    Some(Value::Object(m)) => {
                        for k in m.keys() {
                            let mut q = p.clone();
                            q.push(Value::String(k.clone()));
                            out.push(q);
                        }
                    }
                    Some(Value::Null) | None => {}
                    Some(other) => return runtime(format!("cannot iterate over {}", type_name(other))),
                }
            }
            Ok(out)
        }
        Ast::Pipe(a, b) => {
            let mut out = Vec::new();
            for p in paths(a, input)? {
                let at = get_path(input, &p).cloned().unwrap_or(Value::Null);
                for q in paths(b, &at)? {
                    let mut full = p.clone();
                    full.extend(q);
                    out.push(full);
                }
            }
            Ok(out)
        }
        Ast::Comma(a, b) => {
            let mut out = paths(a, input)?;
            out.extend(paths(b, input)?);
            Ok(out)
        }
        Ast::Try(inner) => Ok(paths(inner, input).unwrap_or_default()),
        Ast::If(..) => Err(JqError::Unsupported("`if` inside a path expression".into())),
        Ast::Call(name, args) if name == "select" => {
            let keep = eval(&args[0], input)?.iter().any(truthy);
            Ok(if keep { vec![Vec::new()] } else { Vec::new() })
        }
        Ast::Call(name, _) if name == "empty" => Ok(Vec::new()),
        Ast::Call(name, _) if name == "first" => Ok(vec![vec![number(0.0)]]),
        Ast::Call(name, _) if name == "last" => Ok(vec![vec![number(-1.0)]]),
        _ => Err(JqError::Unsupported("this expression as a del() path".into())),
    }
}

fn delete_path(v: &mut Value, path: &[Value]) -> Res<()> {
    let Some((last, parent_path)) = path.split_last() else {
        *v = Value::Null;
        return Ok(());
    };
    let mut cur = v;
    for seg in parent_path {
        cur = match (cur, seg) {
            (Value::Object(m), Value::String(k)) => match m.get_mut(k) {
                Some(next) => next,
                None => return Ok(()),
            },
            (Value::Array(a), Value::Number(n)) => {
                match n.as_i64().and_then(|i| usize::try_from(i).ok()).and_then(|i| a.get_mut(i)) {
                    Some(next) => next,
                    None => return Ok(()),
                }
            }
            _ => return Ok(()),
        };
    }
    match (cur, last) {
        (Value::Object(m), Value::String(k)) => {
            m.shift_remove(k);
        }
        (Value::Array(a), Value::Number(n)) => {
            let i = n.as_i64().unwrap_or(-1);
            let i = if i < 0 { a.len() as i64 + i } else { i };
            if i >= 0 && (i as usize) < a.len() {
                a.remove(i as usize);
            }
        }
        (Value::Null, _) => {}
        (other, _) => return runtime(format!("cannot delete a field of {}", type_name(other))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn jq(filter: &str, input: Value) -> Value {
        Filter::parse(filter).unwrap().apply(&input).unwrap()
    }

    #[test]
    fn index_first_id() {
        assert_eq!(jq(".[0].id", json!([{"id": 1, "x": 9}])), json!(1));
    }

    #[test]
    fn projection_with_shorthand_keys() {
        let input = json!([
            {"number": 1, "title": "a", "body": "long"},
            {"number": 2, "title": "b", "user": {"login": "x"}},
            {"number": 3, "title": "c", "labels": []}
        ]);
        assert_eq!(
            jq("map({number, title})", input),
            json!([{"number": 1, "title": "a"}, {"number": 2, "title": "b"}, {"number": 3, "title": "c"}])
        );
    }

    #[test]
    fn object_values_with_paths_and_renames() {
        let input = json!({"user": {"login": "octo"}, "html_url": "u"});
        assert_eq!(jq("{who: .user.login, url: .html_url}", input), json!({"who": "octo", "url": "u"}));
    }

    #[test]
    fn del_multiple_fields() {
        let input = json!([{"a": 1, "_x": 2, "_y": 3}, {"a": 4, "_x": 5}]);
        assert_eq!(jq("map(del(._x, ._y))", input), json!([{"a": 1}, {"a": 4}]));
    }

    #[test]
    fn del_array_elements_by_select() {
        let input = json!([1, 5, 2, 8]);
        assert_eq!(jq("del(.[] | select(. > 3))", input), json!([1, 2]));
    }

    #[test]
    fn select_with_comparisons_and_logic() {
        let input = json!([{"s": "open", "n": 1}, {"s": "closed", "n": 2}, {"s": "open", "n": 3}]);
        assert_eq!(
            jq("map(select(.s == \"open\" and .n > 1)) | length", input.clone()),
            json!(1)
        );
        assert_eq!(jq("[.[] | select(.n != 2) | .n]", input), json!([1, 3]));
    }

    #[test]
    fn multiple_outputs_collect_and_zero_is_null() {
        assert_eq!(jq(".[]", json!([1, 2])), json!([1, 2]));
        assert_eq!(jq("empty", json!(1)), Value::Null);
    }

    #[test]
    fn optional_suppresses_errors() {
        assert_eq!(jq(".a?", json!(5)), Value::Null);
        assert_eq!(jq("[.[] | .id?]", json!([1, {"id": 2}])), json!([2]));
    }

    #[test]
    fn keys_length_alternative_if() {
        assert_eq!(jq("keys", json!({"b": 1, "a": 2})), json!(["a", "b"]));
        assert_eq!(jq("length", json!("héllo")), json!(5));
        assert_eq!(jq(".x // \"d\"", json!({})), json!("d"));
        assert_eq!(jq("if . > 2 then \"big\" else \"small\" end", json!(3)), json!("big"));
        assert_eq!(jq(".[1:3]", json!([0, 1, 2, 3])), json!([1, 2]));
        assert_eq!(jq("[.[] * 2 + 1]", json!([1, 2])), json!([3, 5]));
    }

    #[test]
    fn runtime_errors() {
        let e = Filter::parse(".a").unwrap().apply(&json!(3)).unwrap_err();
        assert!(matches!(e, JqError::Runtime(_)));
        assert!(matches!(Filter::parse(".[]").unwrap().apply(&json!(1)), Err(JqError::Runtime(_))));
    }

    #[test]
    fn syntax_vs_unsupported() {
        for bad in ["map(", "{a:", ".[", "| .", ")"] {
            assert!(matches!(Filter::parse(bad), Err(JqError::Syntax { .. })), "{bad}");
        }
        for unsupported in [
            "..",
            ".a as $x | $x",
            "reduce .[] as $x (0; . + $x)",
            "def f: .; f",
            "@base64",
            ".a |= 1",
            "\"\\(.a)\"",
            "input",
            "try .a catch 1",
            "ltrimstr(\"x\")",
        ] {
            assert!(matches!(Filter::parse(unsupported), Err(JqError::Unsupported(_))), "{unsupported}");
        }
    }

    #[test]
    fn jq_value_order() {
        let mut v = vec![json!({"a": 1}), json!([1]), json!("s"), json!(2), json!(true), json!(false), Value::Null];
        v.sort_by(compare);
        assert_eq!(v, vec![Value::Null, json!(false), json!(true), json!(2), json!("s"), json!([1]), json!({"a": 1})]);
    }
}
