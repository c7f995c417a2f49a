use std::rc::Rc;

use super::lexer::{tokenize, Tok, Token};
use super::SandboxError;

const MAX_NESTING: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Const,
    Let,
    Var,
}

#[derive(Debug, Clone)]
pub enum PropKey {
    Name(Rc<str>),
    Computed(Expr),
}

#[derive(Debug, Clone)]
pub enum Pattern {
    Ident(Rc<str>),
    Object(Vec<(PropKey, Pattern)>, Option<Rc<str>>),
    Array(Vec<Option<Pattern>>, Option<Box<Pattern>>),
    Default(Box<Pattern>, Box<Expr>),
    /// Assignment target inside destructuring assignment (`[a.x] = ...`).
    Member(Box<Expr>),
}

#[derive(Debug)]
pub enum Body {
    Expr(Expr),
    Block(Vec<Stmt>),
}

#[derive(Debug)]
pub struct FuncDef {
    pub name: Option<Rc<str>>,
    pub params: Vec<Pattern>,
    pub rest: Option<Pattern>,
    pub body: Body,
    pub is_async: bool,
}

#[derive(Debug, Clone)]
pub enum Elem {
    Item(Expr),
    Spread(Expr),
    Hole,
}

#[derive(Debug, Clone)]
pub enum ObjProp {
    KeyValue(PropKey, Expr),
    Spread(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
    Plus,
    BitNot,
    TypeOf,
    Void,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Pow,
    Eq,
    Ne,
    StrictEq,
    StrictNe,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    UShr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogOp {
    And,
    Or,
    Nullish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Assign,
    Op(BinOp),
    Logical(LogOp),
}

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Str(Rc<str>),
    Template(Vec<Rc<str>>, Vec<Expr>),
    Bool(bool),
    Null,
    Ident(Rc<str>),
    Array(Vec<Elem>),
    Object(Vec<ObjProp>),
    Function(Rc<FuncDef>),
    Member {
        object: Box<Expr>,
        prop: Box<PropKey>,
        optional: bool,
    },
    Call {
        callee: Box<Expr>,
        args: Vec<Elem>,
        optional: bool,
    },
    /// Root of a chain containing `?.`; a nullish optional link yields undefined.
    OptionalChain(Box<Expr>),
    New(Box<Expr>, Vec<Elem>),
    Unary(UnOp, Box<Expr>),
    Update {
        increment: bool,
        prefix: bool,
        target: Box<Expr>,
    },
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Logical(LogOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Assign(AssignOp, Box<Pattern>, Box<Expr>),
    Seq(Vec<Expr>),
    Await(Box<Expr>),
}

#[derive(Debug)]
pub enum Stmt {
    Decl(DeclKind, Vec<(Pattern, Option<Expr>)>),
    Expr(Expr, usize),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    Block(Vec<Stmt>),
    Return(Option<Expr>),
    While(Expr, Box<Stmt>),
    DoWhile(Box<Stmt>, Expr),
    For {
        init: Option<Box<Stmt>>,
        test: Option<Expr>,
        update: Option<Expr>,
        body: Box<Stmt>,
    },
    ForOf {
        decl: Option<DeclKind>,
        pattern: Pattern,
        iterable: Expr,
        body: Box<Stmt>,
        keys: bool,
    },
    Break,
    Continue,
    Throw(Expr, usize),
    Try {
        block: Vec<Stmt>,
        param: Option<Pattern>,
        handler: Option<Vec<Stmt>>,
        finalizer: Option<Vec<Stmt>>,
    },
    Function(Rc<FuncDef>),
    Empty,
}

#[derive(Debug)]
pub struct Script {
    pub body: Vec<Stmt>,
}

const UNSUPPORTED_WORDS: &[(&str, &str)] = &[
    ("class", "classes"),
    ("switch", "switch statements"),
    ("with", "with statements"),
    ("yield", "generators"),
    ("import", "modules"),
    ("export", "modules"),
    ("debugger", "debugger statements"),
    ("this", "`this`"),
    ("super", "`super`"),
    ("instanceof", "instanceof"),
];

pub fn parse(src: &str) -> Result<Script, SandboxError> {
    let toks = tokenize(src, 1)?;
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let mut body = Vec::new();
    while !p.at_eof() {
        body.push(p.statement()?);
    }
    Ok(Script { body })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

fn is_reserved(name: &str) -> bool {
    matches!(
        name,
        "const" | "let" | "var" | "if" | "else" | "for" | "while" | "do" | "return" | "break"
            | "continue" | "function" | "async" | "await" | "new" | "typeof" | "void" | "delete"
            | "throw" | "try" | "catch" | "finally" | "true" | "false" | "null" | "in" | "of"
    ) || UNSUPPORTED_WORDS.iter().any(|(w, _)| *w == name)
}

impl Parser {
    fn tok(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn at_eof(&self) -> bool {
        matches!(self.tok(), Tok::Eof)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.tok(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.tok(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SandboxError> {
        let t = &self.toks[self.pos];
        Err(SandboxError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn unsupported<T>(&self, construct: impl Into<String>) -> Result<T, SandboxError> {
        Err(SandboxError::Unsupported {
            construct: construct.into(),
            line: self.line(),
        })
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SandboxError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", describe(self.tok())))
        }
    }

    fn enter(&mut self) -> Result<(), SandboxError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.unsupported("nesting deeper than 200 levels");
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn check_unsupported_word(&self) -> Result<(), SandboxError> {
        if let Tok::Ident(w) = self.tok() {
            if let Some((_, what)) = UNSUPPORTED_WORDS.iter().find(|(u, _)| u == w) {
                return self.unsupported(*what);
            }
        }
        Ok(())
    }

    fn semicolon(&mut self) -> Result<(), SandboxError> {
        if self.eat_punct(";") {
            return Ok(());
        }
        if self.is_punct("}") || self.at_eof() || self.toks[self.pos].nl_before {
            return Ok(());
        }
        self.error(format!("expected `;`, found {}", describe(self.tok())))
    }

    fn ident_name(&mut self) -> Result<Rc<str>, SandboxError> {
        match self.tok().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name.into())
            }
            other => self.error(format!("expected an identifier, found {}", describe(&other))),
        }
    }

    fn binding_ident(&mut self) -> Result<Rc<str>, SandboxError> {
        self.check_unsupported_word()?;
        if let Tok::Ident(n) = self.tok() {
            if is_reserved(n) && n != "of" && n != "async" {
                return self.error(format!("`{n}` cannot be used as a name"));
            }
        }
        self.ident_name()
    }

    fn statement(&mut self) -> Result<Stmt, SandboxError> {
        self.enter()?;
        let r = self.statement_inner();
        self.leave();
        r
    }

    fn statement_inner(&mut self) -> Result<Stmt, SandboxError> {
        self.check_unsupported_word()?;
        let line = self.line();
        if self.is_punct("{") {
            return Ok(Stmt::Block(self.block()?));
        }
        if self.eat_punct(";") {
            return Ok(Stmt::Empty);
        }
        let word = match self.tok() {
            Tok::Ident(w) => w.clone(),
            _ => String::new(),
        };
        if matches!(self.peek_at(1), Tok::Punct(":")) && !word.is_empty() && !is_reserved(&word) {
            return self.unsupported("labeled statements");
        }
        match word.as_str() {
            "const" | "let" | "var" => {
                let decl = self.declaration()?;
                self.semicolon()?;
                Ok(decl)
            }
            "if" => {
                self.advance();
                self.expect_punct("(")?;
                let test = self.expression()?;
                self.expect_punct(")")?;
                let then = self.statement()?;
                let otherwise = if self.eat_word("else") {
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                Ok(Stmt::If(test, Box::new(then), otherwise))
            }
            "while" => {
                self.advance();
                self.expect_punct("(")?;
                let test = self.expression()?;
                self.expect_punct(")")?;
                Ok(Stmt::While(test, Box::new(self.statement()?)))
            }
            "do" => {
                self.advance();
                let body = self.statement()?;
                if !self.eat_word("while") {
                    return self.error("expected `while` after do body");
                }
                self.expect_punct("(")?;
                let test = self.expression()?;
                self.expect_punct(")")?;
                self.eat_punct(";");
                Ok(Stmt::DoWhile(Box::new(body), test))
            }
            "for" => self.for_statement(),
            "return" => {
                self.advance();
                let value = if self.is_punct(";") || self.is_punct("}") || self.at_eof() || self.toks[self.pos].nl_before {
                    None
                } else {
                    Some(self.expression()?)
                };
                self.semicolon()?;
                Ok(Stmt::Return(value))
            }
            "break" | "continue" => {
                self.advance();
                if matches!(self.tok(), Tok::Ident(_)) && !self.toks[self.pos].nl_before {
                    return self.unsupported("labeled break/continue");
                }
                self.semicolon()?;
                Ok(if word == "break" { Stmt::Break } else { Stmt::Continue })
            }
            "throw" => {
                self.advance();
                if self.toks[self.pos].nl_before {
                    return self.error("line break after `throw`");
                }
                let e = self.expression()?;
                self.semicolon()?;
                Ok(Stmt::Throw(e, line))
            }
            "try" => {
                self.advance();
                let block = self.block()?;
                let mut param = None;
                let mut handler = None;
                let mut finalizer = None;
                if self.eat_word("catch") {
                    if self.eat_punct("(") {
                        param = Some(self.pattern()?);
                        self.expect_punct(")")?;
                    }
                    handler = Some(self.block()?);
                }
                if self.eat_word("finally") {
                    finalizer = Some(self.block()?);
                }
                if handler.is_none() && finalizer.is_none() {
                    return self.error("try needs catch or finally");
                }
                Ok(Stmt::Try { block, param, handler, finalizer })
            }
            "function" => Ok(Stmt::Function(self.function(false, true)?)),
            "async" if matches!(self.peek_at(1), Tok::Ident(f) if f == "function") => {
                self.advance();
                Ok(Stmt::Function(self.function(true, true)?))
            }
            _ => {
                let e = self.expression()?;
                self.semicolon()?;
                Ok(Stmt::Expr(e, line))
            }
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SandboxError> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error("unexpected end of script, expected `}`");
            }
            body.push(self.statement()?);
        }
        self.advance();
        Ok(body)
    }

    fn decl_kind(&mut self) -> Option<DeclKind> {
        let kind = match self.tok() {
            Tok::Ident(w) if w == "const" => DeclKind::Const,
            Tok::Ident(w) if w == "let" => DeclKind::Let,
            Tok::Ident(w) if w == "var" => DeclKind::Var,
            _ => return None,
        };
        self.advance();
        Some(kind)
    }

    fn declaration(&mut self) -> Result<Stmt, SandboxError> {
        let kind = self.decl_kind().expect("caller checked");
        let mut decls = Vec::new();
        loop {
            let target = self.binding_target()?;
            let init = if self.eat_punct("=") {
                Some(self.assignment()?)
            } else {
                if kind == DeclKind::Const {
                    return self.error("missing initializer in const declaration");
                }
                if !matches!(target, Pattern::Ident(_)) {
                    return self.error("destructuring declaration needs an initializer");
                }
                None
            };
            decls.push((target, init));
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(Stmt::Decl(kind, decls))
    }

    fn for_statement(&mut self) -> Result<Stmt, SandboxError> {
        self.advance();
        if self.is_word("await") {
            return self.unsupported("for await");
        }
        self.expect_punct("(")?;
        let save = self.pos;
        if let Some(kind) = self.decl_kind() {
            let target = self.binding_target()?;
            if self.is_word("of") || self.is_word("in") {
                let keys = self.is_word("in");
                self.advance();
                let iterable = if keys { self.expression()? } else { self.assignment()? };
                self.expect_punct(")")?;
                let body = self.statement()?;
                return Ok(Stmt::ForOf { decl: Some(kind), pattern: target, iterable, body: Box::new(body), keys });
            }
            self.pos = save;
            let init = self.declaration()?;
            return self.for_rest(Some(Box::new(init)));
        }
        if self.eat_punct(";") {
            return self.for_tail(None);
        }
        if let Tok::Ident(name) = self.tok().clone() {
            if matches!(self.peek_at(1), Tok::Ident(w) if w == "of" || w == "in") {
                self.advance();
                let keys = self.is_word("in");
                self.advance();
                let iterable = if keys { self.expression()? } else { self.assignment()? };
                self.expect_punct(")")?;
                let body = self.statement()?;
                return Ok(Stmt::ForOf {
                    decl: None,
                    pattern: Pattern::Ident(name.into()),
                    iterable,
                    body: Box::new(body),
                    keys,
                });
            }
        }
        let line = self.line();
        let init = self.expression()?;
        self.for_rest(Some(Box::new(Stmt::Expr(init, line))))
    }

    fn for_rest(&mut self, init: Option<Box<Stmt>>) -> Result<Stmt, SandboxError> {
        self.expect_punct(";")?;
        self.for_tail(init)
    }

    fn for_tail(&mut self, init: Option<Box<Stmt>>) -> Result<Stmt, SandboxError> {
        let test = if self.is_punct(";") { None } else { Some(self.expression()?) };
        self.expect_punct(";")?;
        let update = if self.is_punct(")") { None } else { Some(self.expression()?) };
        self.expect_punct(")")?;
        let body = self.statement()?;
        Ok(Stmt::For { init, test, update, body: Box::new(body) })
    }

    fn binding_target(&mut self) -> Result<Pattern, SandboxError> {
        if self.is_punct("{") || self.is_punct("[") {
            self.pattern_no_default()
        } else {
            Ok(Pattern::Ident(self.binding_ident()?))
        }
    }

    /// A binding pattern with an optional `= default`.
    fn pattern(&mut self) -> Result<Pattern, SandboxError> {
        let p = self.pattern_no_default()?;
        if self.eat_punct("=") {
            let d = self.assignment()?;
            return Ok(Pattern::Default(Box::new(p), Box::new(d)));
        }
        Ok(p)
    }

    fn pattern_no_default(&mut self) -> Result<Pattern, SandboxError> {
        self.enter()?;
        let r = self.pattern_inner();
        self.leave();
        r
    }

    fn pattern_inner(&mut self) -> Result<Pattern, SandboxError> {
        if self.eat_punct("{") {
            let mut props = Vec::new();
            let mut rest = None;
            while !self.eat_punct("}") {
                if self.eat_punct("...") {
                    rest = Some(self.binding_ident()?);
                    self.eat_punct(",");
                    self.expect_punct("}")?;
                    break;
                }
                let (key, shorthand) = self.prop_key()?;
                let value = if self.eat_punct(":") {
                    self.pattern()?
                } else {
                    let Some(name) = shorthand else {
                        return self.error("expected `:` in object pattern");
                    };
                    if is_reserved(&name) {
                        return self.error(format!("`{name}` cannot be used as a name"));
                    }
                    let base = Pattern::Ident(name);
                    if self.eat_punct("=") {
                        Pattern::Default(Box::new(base), Box::new(self.assignment()?))
                    } else {
                        base
                    }
                };
                props.push((key, value));
                if !self.eat_punct(",") {
                    self.expect_punct("}")?;
                    break;
                }
            }
            return Ok(Pattern::Object(props, rest));
        }
        if self.eat_punct("[") {
            let mut items = Vec::new();
            let mut rest = None;
            loop {
                if self.eat_punct("]") {
                    break;
                }
                if self.eat_punct(",") {
                    items.push(None);
                    continue;
                }
                if self.eat_punct("...") {
                    rest = Some(Box::new(self.pattern_no_default()?));
                    self.expect_punct("]")?;
                    break;
                }
                items.push(Some(self.pattern()?));
                if !self.eat_punct(",") {
                    self.expect_punct("]")?;
                    break;
                }
            }
            return Ok(Pattern::Array(items, rest));
        }
        Ok(Pattern::Ident(self.binding_ident()?))
    }

    /// Object key; the second element is the bare name when shorthand is possible.
    fn prop_key(&mut self) -> Result<(PropKey, Option<Rc<str>>), SandboxError> {
        match self.tok().clone() {
            Tok::Ident(name) => {
                self.advance();
                let name: Rc<str> = name.into();
                Ok((PropKey::Name(name.clone()), Some(name)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok((PropKey::Name(s.into()), None))
            }
            Tok::Num(n) => {
                self.advance();
                Ok((PropKey::Name(super::value::number_to_string(n).into()), None))
            }
            Tok::Punct("[") => {
                self.advance();
                let e = self.assignment()?;
                self.expect_punct("]")?;
                Ok((PropKey::Computed(e), None))
            }
            Tok::Punct("#") => self.unsupported("private names"),
            other => self.error(format!("expected a property name, found {}", describe(&other))),
        }
    }

    fn function(&mut self, is_async: bool, named: bool) -> Result<Rc<FuncDef>, SandboxError> {
        self.advance();
        if self.is_punct("*") {
            return self.unsupported("generators");
        }
        let name = if named || matches!(self.tok(), Tok::Ident(_)) {
            Some(self.binding_ident()?)
        } else {
            None
        };
        self.function_rest(name, is_async)
    }

    fn function_rest(&mut self, name: Option<Rc<str>>, is_async: bool) -> Result<Rc<FuncDef>, SandboxError> {
        self.expect_punct("(")?;
        let (params, rest) = self.param_list()?;
        let body = self.block()?;
        Ok(Rc::new(FuncDef { name, params, rest, body: Body::Block(body), is_async }))
    }

    /// Parameters after the opening `(`, consuming the closing `)`.
    fn param_list(&mut self) -> Result<(Vec<Pattern>, Option<Pattern>), SandboxError> {
        let mut params = Vec::new();
        let mut rest = None;
        loop {
            if self.eat_punct(")") {
                break;
            }
            if self.eat_punct("...") {
                rest = Some(self.pattern_no_default()?);
                self.expect_punct(")")?;
                break;
            }
            params.push(self.pattern()?);
            if !self.eat_punct(",") {
                self.expect_punct(")")?;
                break;
            }
        }
        Ok((params, rest))
    }

    fn arrow_body(&mut self, params: Vec<Pattern>, rest: Option<Pattern>, is_async: bool) -> Result<Expr, SandboxError> {
        if self.toks[self.pos].nl_before {
            return self.error("line break before `=>`");
        }
        self.expect_punct("=>")?;
        let body = if self.is_punct("{") {
            Body::Block(self.block()?)
        } else {
            Body::Expr(self.assignment()?)
        };
        Ok(Expr::Function(Rc::new(FuncDef { name: None, params, rest, body, is_async })))
    }

    /// Whether the `(` at the current position opens an arrow parameter list.
    fn paren_is_arrow(&self) -> bool {
        let mut depth = 0usize;
        let mut i = self.pos;
        while i < self.toks.len() {
            match &self.toks[i].tok {
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return matches!(self.toks.get(i + 1).map(|t| &t.tok), Some(Tok::Punct("=>")));
                    }
                }
                Tok::Eof => return false,
                _ => {}
            }
            i += 1;
        }
        false
    }

    pub fn expression(&mut self) -> Result<Expr, SandboxError> {
        let first = self.assignment()?;
        if !self.is_punct(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_punct(",") {
            items.push(self.assignment()?);
        }
        Ok(Expr::Seq(items))
    }

    fn assignment(&mut self) -> Result<Expr, SandboxError> {
        self.enter()?;
        let r = self.assignment_inner();
        self.leave();
        r
    }

    fn assignment_inner(&mut self) -> Result<Expr, SandboxError> {
        // Arrow functions.
        if let Tok::Ident(name) = self.tok().clone() {
            if name == "async" {
                match self.peek_at(1).clone() {
                    Tok::Ident(p) if matches!(self.peek_at(2), Tok::Punct("=>")) && !self.toks[self.pos + 1].nl_before => {
                        self.advance();
                        self.advance();
                        return self.arrow_body(vec![Pattern::Ident(p.into())], None, true);
                    }
                    Tok::Punct("(") => {
                        self.advance();
                        if self.paren_is_arrow() {
                            self.advance();
                            let (params, rest) = self.param_list()?;
                            return self.arrow_body(params, rest, true);
                        }
                        self.pos -= 1;
                    }
                    _ => {}
                }
            } else if matches!(self.peek_at(1), Tok::Punct("=>")) && !is_reserved(&name) {
                self.advance();
                return self.arrow_body(vec![Pattern::Ident(name.into())], None, false);
            }
        }
        if self.is_punct("(") && self.paren_is_arrow() {
            self.advance();
            let (params, rest) = self.param_list()?;
            return self.arrow_body(params, rest, false);
        }

        let lhs = self.conditional()?;
        let op = match self.tok() {
            Tok::Punct("=") => AssignOp::Assign,
            Tok::Punct("+=") => AssignOp::Op(BinOp::Add),
            Tok::Punct("-=") => AssignOp::Op(BinOp::Sub),
            Tok::Punct("*=") => AssignOp::Op(BinOp::Mul),
            Tok::Punct("/=") => AssignOp::Op(BinOp::Div),
            Tok::Punct("%=") => AssignOp::Op(BinOp::Rem),
            Tok::Punct("**=") => AssignOp::Op(BinOp::Pow),
            Tok::Punct("<<=") => AssignOp::Op(BinOp::Shl),
            Tok::Punct(">>=") => AssignOp::Op(BinOp::Shr),
            Tok::Punct(">>>=") => AssignOp::Op(BinOp::UShr),
            Tok::Punct("&=") => AssignOp::Op(BinOp::BitAnd),
            Tok::Punct("|=") => AssignOp::Op(BinOp::BitOr),
            Tok::Punct("^=") => AssignOp::Op(BinOp::BitXor),
            Tok::Punct("&&=") => AssignOp::Logical(LogOp::And),
            Tok::Punct("||=") => AssignOp::Logical(LogOp::Or),
            Tok::Punct("??=") => AssignOp::Logical(LogOp::Nullish),
            _ => return Ok(lhs),
        };
        let target = if op == AssignOp::Assign {
            self.expr_to_pattern(lhs)?
        } else {
            match lhs {
                Expr::Ident(n) => Pattern::Ident(n),
                m @ Expr::Member { .. } => Pattern::Member(Box::new(m)),
                _ => return self.error("invalid assignment target"),
            }
        };
        self.advance();
        let value = self.assignment()?;
        Ok(Expr::Assign(op, Box::new(target), Box::new(value)))
    }

    fn expr_to_pattern(&self, e: Expr) -> Result<Pattern, SandboxError> {
        Ok(match e {
            Expr::Ident(n) => Pattern::Ident(n),
            m @ Expr::Member { .. } => Pattern::Member(Box::new(m)),
            Expr::Array(elems) => {
                let mut items = Vec::new();
                let mut rest = None;
                let count = elems.len();
                for (i, el) in elems.into_iter().enumerate() {
                    match el {
                        Elem::Hole => items.push(None),
                        Elem::Item(e) => items.push(Some(self.expr_to_pattern(e)?)),
                        Elem::Spread(e) if i + 1 == count => rest = Some(Box::new(self.expr_to_pattern(e)?)),
                        Elem::Spread(_) => return self.error("rest element must be last"),
                    }
                }
                Pattern::Array(items, rest)
            }
            Expr::Object(props) => {
                let mut out = Vec::new();
                let mut rest = None;
                for p in props {
                    match p {
                        ObjProp::KeyValue(k, v) => out.push((k, self.expr_to_pattern(v)?)),
                        ObjProp::Spread(Expr::Ident(n)) => rest = Some(n),
                        ObjProp::Spread(_) => return self.error("invalid rest element"),
                    }
                }
                Pattern::Object(out, rest)
            }
            Expr::Assign(AssignOp::Assign, target, default) => Pattern::Default(target, default),
            _ => return self.error("invalid assignment target"),
        })
    }

    fn conditional(&mut self) -> Result<Expr, SandboxError> {
        let test = self.binary(0)?;
        if !self.eat_punct("?") {
            return Ok(test);
        }
        let then = self.assignment()?;
        self.expect_punct(":")?;
        let otherwise = self.assignment()?;
        Ok(Expr::Cond(Box::new(test), Box::new(then), Box::new(otherwise)))
    }

    fn binary_op(&self) -> Option<(u8, Result<BinOp, LogOp>)> {
        let op = match self.tok() {
            Tok::Punct(p) => *p,
            Tok::Ident(w) if w == "in" => "in",
            Tok::Ident(w) if w == "instanceof" => "instanceof",
            _ => return None,
        };
        Some(match op {
            "??" => (1, Err(LogOp::Nullish)),
            "||" => (2, Err(LogOp::Or)),
            "&&" => (3, Err(LogOp::And)),
            "|" => (4, Ok(BinOp::BitOr)),
            "^" => (5, Ok(BinOp::BitXor)),
            "&" => (6, Ok(BinOp::BitAnd)),
            "==" => (7, Ok(BinOp::Eq)),
            "!=" => (7, Ok(BinOp::Ne)),
            "===" => (7, Ok(BinOp::StrictEq)),
            "!==" => (7, Ok(BinOp::StrictNe)),
            "<" => (8, Ok(BinOp::Lt)),
            "<=" => (8, Ok(BinOp::Le)),
            ">" => (8, Ok(BinOp::Gt)),
            ">=" => (8, Ok(BinOp::Ge)),
            "in" => (8, Ok(BinOp::In)),
            "instanceof" => (8, Ok(BinOp::In)),
            "<<" => (9, Ok(BinOp::Shl)),
            ">>" => (9, Ok(BinOp::Shr)),
            ">>>" => (9, Ok(BinOp::UShr)),
            "+" => (10, Ok(BinOp::Add)),
            "-" => (10, Ok(BinOp::Sub)),
            "*" => (11, Ok(BinOp::Mul)),
            "/" => (11, Ok(BinOp::Div)),
            "%" => (11, Ok(BinOp::Rem)),
            "**" => (12, Ok(BinOp::Pow)),
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, SandboxError> {
        let mut lhs = self.unary()?;
        while let Some((prec, op)) = self.binary_op() {
            if prec <= min_prec && !(prec == 12 && min_prec == 12) {
                break;
            }
            if self.is_word("instanceof") {
                return self.unsupported("instanceof");
            }
            self.advance();
            // `**` is right-associative.
            let rhs = if prec == 12 { self.binary(prec - 1)? } else { self.binary(prec)? };
            lhs = match op {
                Ok(b) => Expr::Binary(b, Box::new(lhs), Box::new(rhs)),
                Err(l) => Expr::Logical(l, Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SandboxError> {
        self.enter()?;
        let r = self.unary_inner();
        self.leave();
        r
    }

    fn unary_inner(&mut self) -> Result<Expr, SandboxError> {
        let op = match self.tok() {
            Tok::Punct("!") => Some(UnOp::Not),
            Tok::Punct("-") => Some(UnOp::Neg),
            Tok::Punct("+") => Some(UnOp::Plus),
            Tok::Punct("~") => Some(UnOp::BitNot),
            Tok::Ident(w) if w == "typeof" => Some(UnOp::TypeOf),
            Tok::Ident(w) if w == "void" => Some(UnOp::Void),
            Tok::Ident(w) if w == "delete" => Some(UnOp::Delete),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let operand = self.unary()?;
            return Ok(Expr::Unary(op, Box::new(operand)));
        }
        if self.is_punct("++") || self.is_punct("--") {
            let increment = self.is_punct("++");
            self.advance();
            let target = self.unary()?;
            check_update_target(&target).or_else(|m| self.error(m))?;
            return Ok(Expr::Update { increment, prefix: true, target: Box::new(target) });
        }
        if self.is_word("await") {
            self.advance();
            let operand = self.unary()?;
            return Ok(Expr::Await(Box::new(operand)));
        }
        let e = self.postfix()?;
        if (self.is_punct("++") || self.is_punct("--")) && !self.toks[self.pos].nl_before {
            let increment = self.is_punct("++");
            check_update_target(&e).or_else(|m| self.error(m))?;
            self.advance();
            return Ok(Expr::Update { increment, prefix: false, target: Box::new(e) });
        }
        Ok(e)
    }

    fn args(&mut self) -> Result<Vec<Elem>, SandboxError> {
        let mut args = Vec::new();
        loop {
            if self.eat_punct(")") {
                break;
            }
            if self.eat_punct("...") {
                args.push(Elem::Spread(self.assignment()?));
            } else {
                args.push(Elem::Item(self.assignment()?));
            }
            if !self.eat_punct(",") {
                self.expect_punct(")")?;
                break;
            }
        }
        Ok(args)
    }

    fn postfix(&mut self) -> Result<Expr, SandboxError> {
        let mut e = if self.is_word("new") {
            self.advance();
            if self.is_punct(".") {
                return self.unsupported("new.target");
            }
            let callee = self.primary()?;
            let mut callee = callee;
            while self.eat_punct(".") {
                let name = self.ident_name()?;
                callee = Expr::Member { object: Box::new(callee), prop: Box::new(PropKey::Name(name)), optional: false };
            }
            let args = if self.eat_punct("(") { self.args()? } else { Vec::new() };
            Expr::New(Box::new(callee), args)
        } else {
            self.primary()?
        };
        let mut chained = false;
        loop {
            if self.eat_punct(".") {
                if self.is_punct("#") {
                    return self.unsupported("private names");
                }
                let name = self.ident_name()?;
                e = Expr::Member { object: Box::new(e), prop: Box::new(PropKey::Name(name)), optional: false };
            } else if self.eat_punct("?.") {
                chained = true;
                if self.eat_punct("(") {
                    let args = self.args()?;
                    e = Expr::Call { callee: Box::new(e), args, optional: true };
                } else if self.eat_punct("[") {
                    let key = self.expression()?;
                    self.expect_punct("]")?;
                    e = Expr::Member { object: Box::new(e), prop: Box::new(PropKey::Computed(key)), optional: true };
                } else {
                    let name = self.ident_name()?;
                    e = Expr::Member { object: Box::new(e), prop: Box::new(PropKey::Name(name)), optional: true };
                }
            } else if self.is_punct("[") {
                self.advance();
                let key = self.expression()?;
                self.expect_punct("]")?;
                e = Expr::Member { object: Box::new(e), prop: Box::new(PropKey::Computed(key)), optional: false };
            } else if self.is_punct("(") {
                self.advance();
                let args = self.args()?;
                e = Expr::Call { callee: Box::new(e), args, optional: false };
            } else if matches!(self.tok(), Tok::Template(..)) && !chained {
                return self.unsupported("tagged templates");
            } else {
                break;
            }
        }
        Ok(if chained { Expr::OptionalChain(Box::new(e)) } else { e })
    }

    fn primary(&mut self) -> Result<Expr, SandboxError> {
        self.check_unsupported_word()?;
        let tok = self.tok().clone();
        match tok {
            Tok::Num(n) => {
                self.advance();
                Ok(Expr::Num(n))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Str(s.into()))
            }
            Tok::Template(quasis, sources) => {
                let line = self.line();
                self.advance();
                let mut exprs = Vec::new();
                for (src, l) in sources {
                    let toks = tokenize(&src, l)?;
                    let mut sub = Parser { toks, pos: 0, depth: self.depth };
                    let e = sub.expression()?;
                    if !sub.at_eof() {
                        return Err(SandboxError::Syntax { line, col: 1, message: "malformed template expression".into() });
                    }
                    exprs.push(e);
                }
                Ok(Expr::Template(quasis.into_iter().map(Into::into).collect(), exprs))
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expression()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                self.advance();
                let mut elems = Vec::new();
                loop {
                    if self.eat_punct("]") {
                        break;
                    }
                    if self.eat_punct(",") {
                        elems.push(Elem::Hole);
                        continue;
                    }
                    if self.eat_punct("...") {
                        elems.push(Elem::Spread(self.assignment()?));
                    } else {
                        elems.push(Elem::Item(self.assignment()?));
                    }
                    if !self.eat_punct(",") {
                        self.expect_punct("]")?;
                        break;
                    }
                }
                Ok(Expr::Array(elems))
            }
            Tok::Punct("{") => self.object_literal(),
            Tok::Ident(w) => match w.as_str() {
                "true" => {
                    self.advance();
                    Ok(Expr::Bool(true))
                }
                "false" => {
                    self.advance();
                    Ok(Expr::Bool(false))
                }
                "null" => {
                    self.advance();
                    Ok(Expr::Null)
                }
                "function" => Ok(Expr::Function(self.function(false, false)?)),
                "async" if matches!(self.peek_at(1), Tok::Ident(f) if f == "function") => {
                    self.advance();
                    Ok(Expr::Function(self.function(true, false)?))
                }
                _ if is_reserved(&w) && w != "async" && w != "of" => {
                    self.error(format!("unexpected keyword `{w}`"))
                }
                _ => {
                    self.advance();
                    Ok(Expr::Ident(w.into()))
                }
            },
            Tok::Punct("#") | Tok::Punct("@") => self.unsupported("decorators and private names"),
            other => self.error(format!("unexpected {}", describe(&other))),
        }
    }

    fn object_literal(&mut self) -> Result<Expr, SandboxError> {
        self.advance();
        let mut props = Vec::new();
        loop {
            if self.eat_punct("}") {
                break;
            }
            if self.eat_punct("...") {
                props.push(ObjProp::Spread(self.assignment()?));
            } else {
                if let Tok::Ident(w) = self.tok() {
                    if (w == "get" || w == "set") && !matches!(self.peek_at(1), Tok::Punct("," | ":" | "(" | "}")) {
                        return self.unsupported("getters and setters");
                    }
                }
                let is_async = self.is_word("async") && !matches!(self.peek_at(1), Tok::Punct("," | ":" | "(" | "}"));
                if is_async {
                    self.advance();
                }
                if self.is_punct("*") {
                    return self.unsupported("generators");
                }
                let (key, shorthand) = self.prop_key()?;
                if self.eat_punct(":") {
                    props.push(ObjProp::KeyValue(key, self.assignment()?));
                } else if self.is_punct("(") {
                    let name = shorthand.clone();
                    let f = self.function_rest(name, is_async)?;
                    props.push(ObjProp::KeyValue(key, Expr::Function(f)));
                } else {
                    let Some(name) = shorthand else {
                        return self.error("expected `:` after property name");
                    };
                    if is_reserved(&name) {
                        return self.error(format!("unexpected keyword `{name}`"));
                    }
                    if self.is_punct("=") {
                        // Only valid as a destructuring target: `({a = 1} = obj)`.
                        self.advance();
                        let d = self.assignment()?;
                        props.push(ObjProp::KeyValue(
                            key,
                            Expr::Assign(AssignOp::Assign, Box::new(Pattern::Ident(name)), Box::new(d)),
                        ));
                    } else {
                        props.push(ObjProp::KeyValue(key, Expr::Ident(name)));
                    }
                }
            }
            if !self.eat_punct(",") {
                self.expect_punct("}")?;
                break;
            }
        }
        Ok(Expr::Object(props))
    }
}

fn check_update_target(e: &Expr) -> Result<(), &'static str> {
    match e {
        Expr::Ident(_) | Expr::Member { .. } => Ok(()),
        _ => Err("invalid increment/decrement target"),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(n) => format!("number {n}"),
        Tok::Str(_) => "string".into(),
        Tok::Template(..) => "template literal".into(),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of script".into(),
    }
}
