use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;
use tokio::runtime::Handle;
use tokio::task::AbortHandle;

use super::parser::{
    parse, AssignOp, BinOp, Body, DeclKind, Elem, Expr, LogOp, ObjProp, Pattern, PropKey, Stmt, UnOp,
};
use super::scope::{AssignResult, Lookup, Scope, ScopeRegistry};
use super::value::*;
use super::{ApiBinding, ApiError, ApiName, SandboxError, SandboxLimits, ScriptOutcome};

const MAX_CALL_DEPTH: usize = 200;
pub(super) const MAX_STRING_LEN: usize = 16 << 20;
pub(super) const MAX_ARRAY_LEN: usize = 1 << 20;
const ALLOC_BUDGET: usize = 256 << 20;
const MAX_LOG_LINES: usize = 200;
const MAX_LOG_LINE: usize = 2000;

pub(super) enum Exc {
    Throw(JsValue),
    Abort(SandboxError),
    /// A nullish `?.` link; caught by the enclosing optional chain.
    Short,
}

pub(super) type R<T> = Result<T, Exc>;

enum Flow {
    Normal,
    Return(JsValue),
    Break,
    Continue,
}

#[derive(Clone, Copy)]
enum BindMode {
    Declare { mutable: bool },
    Assign,
}

pub(super) struct Interp {
    binding: Arc<dyn ApiBinding>,
    handle: Handle,
    deadline: Instant,
    timeout: Duration,
    cancel: Arc<AtomicBool>,
    max_calls: u32,
    pub(super) calls: u32,
    steps: u64,
    depth: usize,
    allocated: usize,
    line: usize,
    registry: ScopeRegistry,
    inflight: Vec<AbortHandle>,
    pub(super) logs: Vec<String>,
}

pub(super) fn type_error<T>(message: impl Into<String>) -> R<T> {
    Err(Exc::Throw(JsValue::error("TypeError", &message.into())))
}

pub(super) fn range_error<T>(message: impl Into<String>) -> R<T> {
    Err(Exc::Throw(JsValue::error("RangeError", &message.into())))
}

fn reference_error<T>(message: impl Into<String>) -> R<T> {
    Err(Exc::Throw(JsValue::error("ReferenceError", &message.into())))
}

/// Run a script to completion on the current (dedicated) thread.
pub(super) fn execute(
    code: &str,
    binding: Arc<dyn ApiBinding>,
    params: &Value,
    limits: &SandboxLimits,
    handle: Handle,
    cancel: Arc<AtomicBool>,
    started: Instant,
) -> Result<ScriptOutcome, SandboxError> {
    let script = parse(code)?;
    let mut it = Interp {
        binding,
        handle,
        deadline: started + limits.timeout,
        timeout: limits.timeout,
        cancel,
        max_calls: limits.max_api_calls,
        calls: 0,
        steps: 0,
        depth: 0,
        allocated: 0,
        line: 1,
        registry: ScopeRegistry::default(),
        inflight: Vec::new(),
        logs: Vec::new(),
    };
    let global = it.new_scope(None);
    for name in super::builtins::GLOBALS {
        global.declare((*name).into(), JsValue::Native(name), false);
    }
    global.declare("undefined".into(), JsValue::Undefined, false);
    global.declare("NaN".into(), JsValue::Num(f64::NAN), false);
    global.declare("Infinity".into(), JsValue::Num(f64::INFINITY), false);
    global.declare("api".into(), JsValue::Api(ApiRef::Root), false);
    global.declare("params".into(), from_json(params), false);
    let top = it.new_scope(Some(global));

    let result = it.exec_block_in(&script.body, &top).and_then(|flow| {
        let v = match flow {
            Flow::Return(v) => v,
            _ => JsValue::Undefined,
        };
        it.await_value(v)
    });
    let out = match result {
        Ok(v) => match to_json(&v, 0) {
            Ok(j) => {
                let value = j.unwrap_or(Value::Null);
                let bytes = serde_json::to_vec(&value).map(|b| b.len()).unwrap_or(0);
                if bytes > limits.max_output_bytes {
                    Err(SandboxError::OutputTooLarge { bytes, limit: limits.max_output_bytes })
                } else {
                    Ok(ScriptOutcome {
                        value,
                        api_calls: it.calls,
                        logs: std::mem::take(&mut it.logs),
                        elapsed: started.elapsed(),
                    })
                }
            }
            Err(e) => Err(SandboxError::ScriptError(format!("TypeError: cannot serialize result: {e}"))),
        },
        Err(Exc::Throw(v)) => Err(SandboxError::ScriptError(thrown_message(&v))),
        Err(Exc::Abort(e)) => Err(e),
        Err(Exc::Short) => Err(SandboxError::ScriptError("internal: stray optional chain".into())),
    };
    for h in it.inflight.drain(..) {
        h.abort();
    }
    it.registry.clear_all();
    out
}

impl Interp {
    fn new_scope(&mut self, parent: Option<Rc<Scope>>) -> Rc<Scope> {
        let s = Scope::new(parent);
        self.registry.track(&s);
        s
    }

    pub(super) fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps % 64 == 0 && (Instant::now() >= self.deadline || self.cancel.load(Ordering::Relaxed)) {
            return Err(Exc::Abort(SandboxError::Timeout(self.timeout)));
        }
        Ok(())
    }

    pub(super) fn charge(&mut self, bytes: usize) -> R<()> {
        self.allocated = self.allocated.saturating_add(bytes);
        if self.allocated > ALLOC_BUDGET {
            return Err(Exc::Abort(SandboxError::ScriptError(
                "RangeError: script exceeded its memory budget".into(),
            )));
        }
        Ok(())
    }

    pub(super) fn make_string(&mut self, s: String) -> R<JsValue> {
        if s.len() > MAX_STRING_LEN {
            return range_error("Invalid string length");
        }
        self.charge(s.len())?;
        Ok(JsValue::Str(s.into()))
    }

    pub(super) fn make_array(&mut self, items: Vec<JsValue>) -> R<JsValue> {
        if items.len() > MAX_ARRAY_LEN {
            return range_error("Invalid array length");
        }
        self.charge(items.len() * 16)?;
        Ok(JsValue::array(items))
    }

    pub(super) fn log(&mut self, line: String) {
        if self.logs.len() < MAX_LOG_LINES {
            let mut line = line;
            if line.len() > MAX_LOG_LINE {
                let mut cut = MAX_LOG_LINE;
                while !line.is_char_boundary(cut) {
                    cut -= 1;
                }
                line.truncate(cut);
            }
            self.logs.push(line);
        }
    }

    // ---- statements ----

    fn hoist(&mut self, body: &[Stmt], scope: &Rc<Scope>) {
        for s in body {
            if let Stmt::Decl(DeclKind::Let | DeclKind::Const, decls) = s {
                let mut names = Vec::new();
                for (p, _) in decls {
                    pattern_names(p, &mut names);
                }
                for n in names {
                    scope.declare_uninitialized(n);
                }
            }
            if let Stmt::Function(def) = s {
                if let Some(name) = &def.name {
                    let c = Closure { def: def.clone(), scope: scope.clone() };
                    scope.declare(name.clone(), JsValue::Closure(Rc::new(c)), true);
                }
            }
        }
    }

    fn exec_block_in(&mut self, body: &[Stmt], scope: &Rc<Scope>) -> R<Flow> {
        self.hoist(body, scope);
        for s in body {
            match self.exec(s, scope)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_block(&mut self, body: &[Stmt], parent: &Rc<Scope>) -> R<Flow> {
        let scope = self.new_scope(Some(parent.clone()));
        self.exec_block_in(body, &scope)
    }

    fn exec(&mut self, stmt: &Stmt, scope: &Rc<Scope>) -> R<Flow> {
        self.tick()?;
        match stmt {
            Stmt::Empty | Stmt::Function(_) => Ok(Flow::Normal),
            Stmt::Expr(e, line) => {
                self.line = *line;
                self.eval(e, scope)?;
                Ok(Flow::Normal)
            }
            Stmt::Decl(kind, decls) => {
                for (pat, init) in decls {
                    let v = match init {
                        Some(e) => self.eval(e, scope)?,
                        None => JsValue::Undefined,
                    };
                    self.bind(pat, v, scope, BindMode::Declare { mutable: *kind != DeclKind::Const })?;
                }
                Ok(Flow::Normal)
            }
            Stmt::If(test, then, otherwise) => {
                if self.eval(test, scope)?.truthy() {
                    self.exec_scoped(then, scope)
                } else if let Some(o) = otherwise {
                    self.exec_scoped(o, scope)
                } else {
                    Ok(Flow::Normal)
                }
            }
            Stmt::Block(body) => self.exec_block(body, scope),
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, scope)?,
                    None => JsValue::Undefined,
                };
                Ok(Flow::Return(v))
            }
            Stmt::While(test, body) => {
                while self.eval(test, scope)?.truthy() {
                    self.tick()?;
                    match self.exec_scoped(body, scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::DoWhile(body, test) => {
                loop {
                    self.tick()?;
                    match self.exec_scoped(body, scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                    if !self.eval(test, scope)?.truthy() {
                        break;
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::For { init, test, update, body } => self.exec_for(init.as_deref(), test.as_ref(), update.as_ref(), body, scope),
            Stmt::ForOf { decl, pattern, iterable, body, keys } => {
                let source = self.eval(iterable, scope)?;
                let items = if *keys { self.for_in_keys(&source) } else { self.iterate(&source)? };
                for item in items {
                    self.tick()?;
                    let iter_scope = self.new_scope(Some(scope.clone()));
                    match decl {
                        Some(k) => self.bind(pattern, item, &iter_scope, BindMode::Declare { mutable: *k != DeclKind::Const })?,
                        None => self.bind(pattern, item, &iter_scope, BindMode::Assign)?,
                    }
                    match self.exec_scoped(body, &iter_scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::Break => Ok(Flow::Break),
            Stmt::Continue => Ok(Flow::Continue),
            Stmt::Throw(e, line) => {
                self.line = *line;
                let v = self.eval(e, scope)?;
                Err(Exc::Throw(v))
            }
            Stmt::Try { block, param, handler, finalizer } => {
                let mut result = self.exec_block(block, scope);
                if let (Err(Exc::Throw(v)), Some(h)) = (&result, handler) {
                    let v = v.clone();
                    let catch_scope = self.new_scope(Some(scope.clone()));
                    result = match param {
                        Some(p) => self
                            .bind(p, v, &catch_scope, BindMode::Declare { mutable: true })
                            .and_then(|_| self.exec_block_in(h, &catch_scope)),
                        None => self.exec_block_in(h, &catch_scope),
                    };
                }
                if let Some(f) = finalizer {
                    if matches!(result, Err(Exc::Abort(_))) {
                        return result;
                    }
                    match self.exec_block(f, scope)? {
                        Flow::Normal => {}
                        other => return Ok(other),
                    }
                }
                result
            }
        }
    }

    /// Statement bodies that are not blocks still get their own scope.
    fn exec_scoped(&mut self, stmt: &Stmt, scope: &Rc<Scope>) -> R<Flow> {
        match stmt {
            Stmt::Block(body) => self.exec_block(body, scope),
            other => {
                let s = self.new_scope(Some(scope.clone()));
                self.exec(other, &s)
            }
        }
    }

    fn exec_for(
        &mut self,
        init: Option<&Stmt>,
        test: Option<&Expr>,
        update: Option<&Expr>,
        body: &Stmt,
        scope: &Rc<Scope>,
    ) -> R<Flow> {
        let mut names = Vec::new();
        let mut cur = self.new_scope(Some(scope.clone()));
        if let Some(init) = init {
            if let Stmt::Decl(DeclKind::Let | DeclKind::Const, decls) = init {
                for (p, _) in decls {
                    pattern_names(p, &mut names);
                }
            }
            self.exec(init, &cur)?;
        }
        loop {
            self.tick()?;
            if let Some(t) = test {
                if !self.eval(t, &cur)?.truthy() {
                    break;
                }
            }
            match self.exec_scoped(body, &cur)? {
                Flow::Break => break,
                Flow::Return(v) => return Ok(Flow::Return(v)),
                _ => {}
            }
            if !names.is_empty() {
                let next = self.new_scope(Some(scope.clone()));
                for n in &names {
                    if let Lookup::Found(v) = cur.lookup(n) {
                        next.declare(n.clone(), v, true);
                    }
                }
                cur = next;
            }
            if let Some(u) = update {
                self.eval(u, &cur)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn for_in_keys(&self, v: &JsValue) -> Vec<JsValue> {
        match v {
            JsValue::Object(m) => m.borrow().keys().map(|k| JsValue::Str(k.clone())).collect(),
            JsValue::Array(a) => (0..a.borrow().len()).map(|i| JsValue::str(&i.to_string())).collect(),
            JsValue::Str(s) => (0..s.chars().count()).map(|i| JsValue::str(&i.to_string())).collect(),
            _ => Vec::new(),
        }
    }

    pub(super) fn iterate(&self, v: &JsValue) -> R<Vec<JsValue>> {
        match v {
            JsValue::Array(a) => Ok(a.borrow().clone()),
            JsValue::Str(s) => Ok(s.chars().map(|c| JsValue::str(c.encode_utf8(&mut [0; 4]))).collect()),
            other => type_error(format!("{} is not iterable", display(other))),
        }
    }

    // ---- binding ----

    fn bind(&mut self, pat: &Pattern, value: JsValue, scope: &Rc<Scope>, mode: BindMode) -> R<()> {
        match pat {
            Pattern::Ident(name) => match mode {
                BindMode::Declare { mutable } => {
                    scope.declare(name.clone(), value, mutable);
                    Ok(())
                }
                BindMode::Assign => self.assign_name(name, value, scope),
            },
            Pattern::Default(inner, default) => {
                let v = if matches!(value, JsValue::Undefined) {
                    self.eval(default, scope)?
                } else {
                    value
                };
                self.bind(inner, v, scope, mode)
            }
            Pattern::Object(props, rest) => {
                if value.is_nullish() {
                    return type_error(format!("Cannot destructure {}", to_js_string(&value)));
                }
                let mut used = Vec::new();
                for (key, p) in props {
                    let k = self.prop_key(key, scope)?;
                    let v = self.get_prop(&value, &k)?;
                    used.push(k);
                    self.bind(p, v, scope, mode)?;
                }
                if let Some(r) = rest {
                    let mut out = ObjMap::new();
                    if let JsValue::Object(m) = &value {
                        for (k, v) in m.borrow().iter() {
                            if !used.iter().any(|u| u.as_str() == &**k) {
                                out.insert(k.clone(), v.clone());
                            }
                        }
                    }
                    self.bind(&Pattern::Ident(r.clone()), JsValue::object(out), scope, mode)?;
                }
                Ok(())
            }
            Pattern::Array(items, rest) => {
                let values = self.iterate(&value)?;
                for (i, p) in items.iter().enumerate() {
                    if let Some(p) = p {
                        let v = values.get(i).cloned().unwrap_or(JsValue::Undefined);
                        self.bind(p, v, scope, mode)?;
                    }
                }
                if let Some(r) = rest {
                    let tail = values.get(items.len()..).map(<[JsValue]>::to_vec).unwrap_or_default();
                    let arr = self.make_array(tail)?;
                    self.bind(r, arr, scope, mode)?;
                }
                Ok(())
            }
            Pattern::Member(target) => match &**target {
                Expr::Member { object, prop, .. } => {
                    let obj = self.eval(object, scope)?;
                    let key = self.prop_key(prop, scope)?;
                    self.set_prop(&obj, &key, value)
                }
                _ => type_error("invalid assignment target"),
            },
        }
    }

    fn assign_name(&mut self, name: &str, value: JsValue, scope: &Rc<Scope>) -> R<()> {
        match scope.assign(name, value) {
            AssignResult::Ok => Ok(()),
            AssignResult::Const => type_error("Assignment to constant variable."),
            AssignResult::Uninitialized => reference_error(format!("Cannot access '{name}' before initialization")),
            AssignResult::Missing => reference_error(format!("{name} is not defined")),
        }
    }

    fn lookup(&self, name: &str, scope: &Rc<Scope>) -> R<JsValue> {
        match scope.lookup(name) {
            Lookup::Found(v) => Ok(v),
            Lookup::Uninitialized => reference_error(format!("Cannot access '{name}' before initialization")),
            Lookup::Missing => reference_error(format!("{name} is not defined")),
        }
    }

    fn prop_key(&mut self, key: &PropKey, scope: &Rc<Scope>) -> R<String> {
        match key {
            PropKey::Name(n) => Ok(n.to_string()),
            PropKey::Computed(e) => {
                let v = self.eval(e, scope)?;
                Ok(to_js_string(&v))
            }
        }
    }

    // ---- properties ----

    pub(super) fn get_prop(&mut self, obj: &JsValue, key: &str) -> R<JsValue> {
        match obj {
            JsValue::Undefined | JsValue::Null => {
                type_error(format!("Cannot read properties of {} (reading '{key}')", to_js_string(obj)))
            }
            JsValue::Str(s) => {
                if key == "length" {
                    return Ok(JsValue::Num(s.chars().count() as f64));
                }
                if let Some(i) = array_index(key) {
                    return Ok(s.chars().nth(i).map(|c| JsValue::str(c.encode_utf8(&mut [0; 4]))).unwrap_or(JsValue::Undefined));
                }
                Ok(method_value(obj, super::builtins::string_method(key)))
            }
            JsValue::Num(_) => Ok(method_value(obj, super::builtins::number_method(key))),
            JsValue::Bool(_) => Ok(method_value(obj, if key == "toString" { Some("toString") } else { None })),
            JsValue::Array(a) => {
                if key == "length" {
                    return Ok(JsValue::Num(a.borrow().len() as f64));
                }
                if let Some(i) = array_index(key) {
                    return Ok(a.borrow().get(i).cloned().unwrap_or(JsValue::Undefined));
                }
                Ok(method_value(obj, super::builtins::array_method(key)))
            }
            JsValue::Object(m) => {
                if let Some(v) = m.borrow().get(key) {
                    return Ok(v.clone());
                }
                Ok(method_value(obj, super::builtins::object_method(key)))
            }
            JsValue::Promise(_) => Ok(method_value(obj, super::builtins::promise_method(key))),
            JsValue::Native(n) => Ok(super::builtins::native_member(n, key)),
            JsValue::Api(ApiRef::Root) => Ok(self.api_member(key)),
            JsValue::Api(ApiRef::Namespace(ns)) => Ok(self.api_member(&format!("{ns}.{key}"))),
            JsValue::Closure(c) => Ok(match key {
                "name" => JsValue::str(c.def.name.as_deref().unwrap_or("")),
                "length" => JsValue::Num(c.def.params.len() as f64),
                _ => JsValue::Undefined,
            }),
            JsValue::Api(ApiRef::Tool(_)) | JsValue::Method(_) => Ok(JsValue::Undefined),
        }
    }

    fn api_member(&self, name: &str) -> JsValue {
        match self.binding.resolve(name) {
            ApiName::Tool(qualified) => JsValue::Api(ApiRef::Tool(qualified.into())),
            ApiName::Namespace => JsValue::Api(ApiRef::Namespace(name.into())),
            ApiName::Unknown => JsValue::Undefined,
        }
    }

    pub(super) fn set_prop(&mut self, obj: &JsValue, key: &str, value: JsValue) -> R<()> {
        match obj {
            JsValue::Object(m) => {
                m.borrow_mut().insert(key.into(), value);
                self.charge(32 + key.len())
            }
            JsValue::Array(a) => {
                if key == "length" {
                    let n = value.to_number();
                    if n < 0.0 || n.fract() != 0.0 || n as usize > MAX_ARRAY_LEN {
                        return range_error("Invalid array length");
                    }
                    let n = n as usize;
                    let grow = n.saturating_sub(a.borrow().len());
                    self.charge(grow * 16)?;
                    a.borrow_mut().resize(n, JsValue::Undefined);
                    return Ok(());
                }
                match array_index(key) {
                    Some(i) if i < MAX_ARRAY_LEN => {
                        let grow = (i + 1).saturating_sub(a.borrow().len());
                        self.charge(grow * 16 + 16)?;
                        let mut items = a.borrow_mut();
                        if i >= items.len() {
                            items.resize(i + 1, JsValue::Undefined);
                        }
                        items[i] = value;
                        Ok(())
                    }
                    Some(_) => range_error("Invalid array length"),
                    None => type_error(format!("Cannot set property '{key}' on an array")),
                }
            }
            JsValue::Undefined | JsValue::Null => {
                type_error(format!("Cannot set properties of {} (setting '{key}')", to_js_string(obj)))
            }
            JsValue::Bool(_) | JsValue::Num(_) | JsValue::Str(_) => Ok(()),
            _ => type_error(format!("Cannot set property '{key}': builtins are read-only")),
        }
    }

    // ---- expressions ----

    pub(super) fn eval(&mut self, e: &Expr, scope: &Rc<Scope>) -> R<JsValue> {
        match e {
            Expr::Num(n) => Ok(JsValue::Num(*n)),
            Expr::Str(s) => Ok(JsValue::Str(s.clone())),
            Expr::Bool(b) => Ok(JsValue::Bool(*b)),
            Expr::Null => Ok(JsValue::Null),
            Expr::Ident(name) => self.lookup(name, scope),
            Expr::Template(quasis, exprs) => {
                let mut out = String::new();
                for (i, q) in quasis.iter().enumerate() {
                    out.push_str(q);
                    if let Some(e) = exprs.get(i) {
                        let v = self.eval(e, scope)?;
                        out.push_str(&to_js_string(&v));
                        if out.len() > MAX_STRING_LEN {
                            return range_error("Invalid string length");
                        }
                    }
                }
                self.make_string(out)
            }
            Expr::Array(elems) => {
                let items = self.eval_elems(elems, scope)?;
                self.make_array(items)
            }
            Expr::Object(props) => {
                let mut map = ObjMap::new();
                for p in props {
                    match p {
                        ObjProp::KeyValue(k, v) => {
                            let key = self.prop_key(k, scope)?;
                            let value = self.eval(v, scope)?;
                            map.insert(key.into(), value);
                        }
                        ObjProp::Spread(src) => {
                            let v = self.eval(src, scope)?;
                            match &v {
                                JsValue::Object(m) => {
                                    for (k, x) in m.borrow().iter() {
                                        map.insert(k.clone(), x.clone());
                                    }
                                }
                                JsValue::Array(a) => {
                                    for (i, x) in a.borrow().iter().enumerate() {
                                        map.insert(i.to_string().into(), x.clone());
                                    }
                                }
                                JsValue::Str(s) => {
                                    for (i, c) in s.chars().enumerate() {
                                        map.insert(i.to_string().into(), JsValue::str(c.encode_utf8(&mut [0; 4])));
                                    }
                                }
                                _ => {}
                            }
                        }
                    }
                }
                self.charge(map.len() * 48)?;
                Ok(JsValue::object(map))
            }
            Expr::Function(def) => {
                let c = Closure { def: def.clone(), scope: scope.clone() };
                Ok(JsValue::Closure(Rc::new(c)))
            }
            Expr::Member { object, prop, optional } => {
                let obj = self.eval(object, scope)?;
                if *optional && obj.is_nullish() {
                    return Err(Exc::Short);
                }
                let key = self.prop_key(prop, scope)?;
                self.get_prop(&obj, &key)
            }
            Expr::OptionalChain(inner) => match self.eval(inner, scope) {
                Err(Exc::Short) => Ok(JsValue::Undefined),
                other => other,
            },
            Expr::Call { callee, args, optional } => {
                let f = match &**callee {
                    Expr::Member { object, prop, optional: opt_member } => {
                        let obj = self.eval(object, scope)?;
                        if *opt_member && obj.is_nullish() {
                            return Err(Exc::Short);
                        }
                        let key = self.prop_key(prop, scope)?;
                        self.get_prop(&obj, &key)?
                    }
                    other => self.eval(other, scope)?,
                };
                if *optional && f.is_nullish() {
                    return Err(Exc::Short);
                }
                let args = self.eval_elems(args, scope)?;
                if !f.is_callable() {
                    return type_error(format!("{} is not a function", label(callee)));
                }
                self.call_value(&f, args)
            }
            Expr::New(callee, args) => {
                let f = match &**callee {
                    Expr::Ident(name) if matches!(scope.lookup(name), Lookup::Missing) => JsValue::Undefined,
                    other => self.eval(other, scope)?,
                };
                let args = self.eval_elems(args, scope)?;
                match f {
                    JsValue::Native(n @ ("Error" | "TypeError" | "RangeError" | "SyntaxError")) => {
                        self.call_value(&JsValue::Native(n), args)
                    }
                    _ => Err(Exc::Abort(SandboxError::Unsupported {
                        construct: format!("`new {}`", label(callee)),
                        line: self.line,
                    })),
                }
            }
            Expr::Unary(op, operand) => self.eval_unary(*op, operand, scope),
            Expr::Update { increment, prefix, target } => {
                let old = self.eval(target, scope)?.to_number();
                let new = if *increment { old + 1.0 } else { old - 1.0 };
                self.store(target, JsValue::Num(new), scope)?;
                Ok(JsValue::Num(if *prefix { new } else { old }))
            }
            Expr::Binary(op, l, r) => {
                let a = self.eval(l, scope)?;
                let b = self.eval(r, scope)?;
                self.binary(*op, &a, &b)
            }
            Expr::Logical(op, l, r) => {
                let a = self.eval(l, scope)?;
                let take_left = match op {
                    LogOp::And => !a.truthy(),
                    LogOp::Or => a.truthy(),
                    LogOp::Nullish => !a.is_nullish(),
                };
                if take_left {
                    Ok(a)
                } else {
                    self.eval(r, scope)
                }
            }
            Expr::Cond(t, a, b) => {
                if self.eval(t, scope)?.truthy() {
                    self.eval(a, scope)
                } else {
                    self.eval(b, scope)
                }
            }
            Expr::Assign(op, target, value) => self.eval_assign(*op, target, value, scope),
            Expr::Seq(items) => {
                let mut last = JsValue::Undefined;
                for i in items {
                    last = self.eval(i, scope)?;
                }
                Ok(last)
            }
            Expr::Await(inner) => {
                let v = self.eval(inner, scope)?;
                self.await_value(v)
            }
        }
    }

    fn eval_elems(&mut self, elems: &[Elem], scope: &Rc<Scope>) -> R<Vec<JsValue>> {
        let mut out = Vec::with_capacity(elems.len());
        for el in elems {
            match el {
                Elem::Item(e) => out.push(self.eval(e, scope)?),
                Elem::Hole => out.push(JsValue::Undefined),
                Elem::Spread(e) => {
                    let v = self.eval(e, scope)?;
                    let items = self.iterate(&v)?;
                    if out.len() + items.len() > MAX_ARRAY_LEN {
                        return range_error("Invalid array length");
                    }
                    out.extend(items);
                }
            }
        }
        Ok(out)
    }

    fn eval_unary(&mut self, op: UnOp, operand: &Expr, scope: &Rc<Scope>) -> R<JsValue> {
        match op {
            UnOp::TypeOf => {
                if let Expr::Ident(name) = operand {
                    if let Lookup::Missing = scope.lookup(name) {
                        return Ok(JsValue::str("undefined"));
                    }
                }
                let v = self.eval(operand, scope)?;
                Ok(JsValue::str(v.type_of()))
            }
            UnOp::Delete => {
                if let Expr::Member { object, prop, .. } = operand {
                    let obj = self.eval(object, scope)?;
                    let key = self.prop_key(prop, scope)?;
                    match &obj {
                        JsValue::Object(m) => {
                            m.borrow_mut().shift_remove(key.as_str());
                        }
                        JsValue::Array(a) => {
                            if let Some(i) = array_index(&key) {
                                if let Some(slot) = a.borrow_mut().get_mut(i) {
                                    *slot = JsValue::Undefined;
                                }
                            }
                        }
                        JsValue::Undefined | JsValue::Null => {
                            return type_error(format!("Cannot convert {} to object", to_js_string(&obj)))
                        }
                        JsValue::Native(_) | JsValue::Api(_) => {
                            return type_error("builtins are read-only")
                        }
                        _ => {}
                    }
                }
                Ok(JsValue::Bool(true))
            }
            _ => {
                let v = self.eval(operand, scope)?;
                Ok(match op {
                    UnOp::Not => JsValue::Bool(!v.truthy()),
                    UnOp::Neg => JsValue::Num(-v.to_number()),
                    UnOp::Plus => JsValue::Num(v.to_number()),
                    UnOp::BitNot => JsValue::Num(f64::from(!to_int32(v.to_number()))),
                    UnOp::Void => JsValue::Undefined,
                    UnOp::TypeOf | UnOp::Delete => unreachable!(),
                })
            }
        }
    }

    fn store(&mut self, target: &Expr, value: JsValue, scope: &Rc<Scope>) -> R<()> {
        match target {
            Expr::Ident(name) => self.assign_name(name, value, scope),
            Expr::Member { object, prop, .. } => {
                let obj = self.eval(object, scope)?;
                let key = self.prop_key(prop, scope)?;
                self.set_prop(&obj, &key, value)
            }
            _ => type_error("invalid assignment target"),
        }
    }

    fn eval_assign(&mut self, op: AssignOp, target: &Pattern, value: &Expr, scope: &Rc<Scope>) -> R<JsValue> {
        if op == AssignOp::Assign {
            let v = self.eval(value, scope)?;
            self.bind(target, v.clone(), scope, BindMode::Assign)?;
            return Ok(v);
        }
        // Compound: resolve the target once.
        let (obj, key) = match target {
            Pattern::Ident(_) => (None, String::new()),
            Pattern::Member(m) => match &**m {
                Expr::Member { object, prop, .. } => {
                    let o = self.eval(object, scope)?;
                    let k = self.prop_key(prop, scope)?;
                    (Some(o), k)
                }
                _ => return type_error("invalid assignment target"),
            },
            _ => return type_error("invalid assignment target"),
        };
        let current = match (&obj, target) {
            (Some(o), _) => self.get_prop(o, &key)?,
            (None, Pattern::Ident(name)) => self.lookup(name, scope)?,
            _ => unreachable!(),
        };
        let new = match op {
            AssignOp::Op(b) => {
                let rhs = self.eval(value, scope)?;
                self.binary(b, &current, &rhs)?
            }
            AssignOp::Logical(l) => {
                let assign = match l {
                    LogOp::And => current.truthy(),
                    LogOp::Or => !current.truthy(),
                    LogOp::Nullish => current.is_nullish(),
                };
                if !assign {
                    return Ok(current);
                }
                self.eval(value, scope)?
            }
            AssignOp::Assign => unreachable!(),
        };
        match (&obj, target) {
            (Some(o), _) => self.set_prop(o, &key, new.clone())?,
            (None, Pattern::Ident(name)) => self.assign_name(name, new.clone(), scope)?,
            _ => unreachable!(),
        }
        Ok(new)
    }

    pub(super) fn binary(&mut self, op: BinOp, a: &JsValue, b: &JsValue) -> R<JsValue> {
        use BinOp::*;
        Ok(match op {
            Add => {
                let pa = to_primitive(a);
                let pb = to_primitive(b);
                if matches!(pa, JsValue::Str(_)) || matches!(pb, JsValue::Str(_)) {
                    let (x, y) = (to_js_string(&pa), to_js_string(&pb));
                    if x.len() + y.len() > MAX_STRING_LEN {
                        return range_error("Invalid string length");
                    }
                    return self.make_string(x + &y);
                }
                JsValue::Num(pa.to_number() + pb.to_number())
            }
            Sub => JsValue::Num(a.to_number() - b.to_number()),
            Mul => JsValue::Num(a.to_number() * b.to_number()),
            Div => JsValue::Num(a.to_number() / b.to_number()),
            Rem => JsValue::Num(a.to_number() % b.to_number()),
            Pow => JsValue::Num(a.to_number().powf(b.to_number())),
            Eq => JsValue::Bool(a.loose_equals(b)),
            Ne => JsValue::Bool(!a.loose_equals(b)),
            StrictEq => JsValue::Bool(a.strict_equals(b)),
            StrictNe => JsValue::Bool(!a.strict_equals(b)),
            Lt | Le | Gt | Ge => {
                let (pa, pb) = (to_primitive(a), to_primitive(b));
                let ord = match (&pa, &pb) {
                    (JsValue::Str(x), JsValue::Str(y)) => Some(x.cmp(y)),
                    _ => pa.to_number().partial_cmp(&pb.to_number()),
                };
                JsValue::Bool(match ord {
                    None => false,
                    Some(o) => match op {
                        Lt => o.is_lt(),
                        Le => o.is_le(),
                        Gt => o.is_gt(),
                        _ => o.is_ge(),
                    },
                })
            }
            In => {
                let key = to_js_string(a);
                JsValue::Bool(match b {
                    JsValue::Object(m) => m.borrow().contains_key(key.as_str()),
                    JsValue::Array(arr) => key == "length" || array_index(&key).is_some_and(|i| i < arr.borrow().len()),
                    other => return type_error(format!("Cannot use 'in' operator to search for '{key}' in {}", display(other))),
                })
            }
            BitAnd => JsValue::Num(f64::from(to_int32(a.to_number()) & to_int32(b.to_number()))),
            BitOr => JsValue::Num(f64::from(to_int32(a.to_number()) | to_int32(b.to_number()))),
            BitXor => JsValue::Num(f64::from(to_int32(a.to_number()) ^ to_int32(b.to_number()))),
            Shl => JsValue::Num(f64::from(to_int32(a.to_number()).wrapping_shl(to_uint32(b.to_number()) & 31))),
            Shr => JsValue::Num(f64::from(to_int32(a.to_number()).wrapping_shr(to_uint32(b.to_number()) & 31))),
            UShr => JsValue::Num(f64::from(to_uint32(a.to_number()).wrapping_shr(to_uint32(b.to_number()) & 31))),
        })
    }

    // ---- calls ----

    pub(super) fn call_value(&mut self, f: &JsValue, args: Vec<JsValue>) -> R<JsValue> {
        match f {
            JsValue::Closure(c) => self.call_closure(c.clone(), args),
            JsValue::Native(n) => self.call_native(n, args),
            JsValue::Method(m) => {
                let (this, name) = (m.0.clone(), m.1);
                self.call_method(&this, name, args)
            }
            JsValue::Api(ApiRef::Tool(t)) => self.api_call(t.clone(), args),
            other => type_error(format!("{} is not a function", display(other))),
        }
    }

    fn call_closure(&mut self, c: Rc<Closure>, args: Vec<JsValue>) -> R<JsValue> {
        self.tick()?;
        if self.depth >= MAX_CALL_DEPTH {
            return range_error("Maximum call stack size exceeded");
        }
        self.depth += 1;
        let result = self.invoke(&c, args);
        self.depth -= 1;
        if c.def.is_async {
            return match result {
                Ok(v @ JsValue::Promise(_)) => Ok(v),
                Ok(v) => Ok(JsValue::Promise(Rc::new(RefCell::new(PromiseState::Fulfilled(v))))),
                Err(Exc::Throw(e)) => Ok(JsValue::Promise(Rc::new(RefCell::new(PromiseState::Rejected(e))))),
                Err(other) => Err(other),
            };
        }
        result
    }

    fn invoke(&mut self, c: &Closure, args: Vec<JsValue>) -> R<JsValue> {
        let scope = self.new_scope(Some(c.scope.clone()));
        let mut args = args.into_iter();
        for p in &c.def.params {
            let v = args.next().unwrap_or(JsValue::Undefined);
            self.bind(p, v, &scope, BindMode::Declare { mutable: true })?;
        }
        if let Some(rest) = &c.def.rest {
            let remaining = self.make_array(args.collect())?;
            self.bind(rest, remaining, &scope, BindMode::Declare { mutable: true })?;
        }
        match &c.def.body {
            Body::Expr(e) => self.eval(e, &scope),
            Body::Block(stmts) => match self.exec_block_in(stmts, &scope)? {
                Flow::Return(v) => Ok(v),
                _ => Ok(JsValue::Undefined),
            },
        }
    }

    fn api_call(&mut self, tool: Rc<str>, args: Vec<JsValue>) -> R<JsValue> {
        self.calls += 1;
        if self.calls > self.max_calls {
            return Err(Exc::Abort(SandboxError::CallCapExceeded { limit: self.max_calls }));
        }
        let params = match args.into_iter().next() {
            None | Some(JsValue::Undefined) => Value::Object(Default::default()),
            Some(v @ JsValue::Object(_)) => match to_json(&v, 0) {
                Ok(Some(j)) => j,
                Ok(None) => Value::Object(Default::default()),
                Err(e) => return type_error(format!("api.{tool}: {e}")),
            },
            Some(other) => {
                return Ok(rejected(JsValue::error(
                    "TypeError",
                    &format!("api.{tool} takes a single object argument, got {}", other.type_of()),
                )))
            }
        };
        let fut = self.binding.call(&tool, params);
        let (tx, rx) = mpsc::channel();
        let task = self.handle.spawn(async move {
            let _ = tx.send(fut.await);
        });
        self.inflight.push(task.abort_handle());
        Ok(JsValue::Promise(Rc::new(RefCell::new(PromiseState::Pending(rx)))))
    }

    pub(super) fn await_value(&mut self, v: JsValue) -> R<JsValue> {
        let JsValue::Promise(p) = v else { return Ok(v) };
        let resolved = {
            let state = p.borrow();
            match &*state {
                PromiseState::Fulfilled(v) => return Ok(v.clone()),
                PromiseState::Rejected(e) => return Err(Exc::Throw(e.clone())),
                PromiseState::Pending(rx) => self.wait(rx)?,
            }
        };
        let new_state = match resolved {
            Ok(json) => PromiseState::Fulfilled(from_json(&json)),
            Err(e) => PromiseState::Rejected(api_error_value(&e)),
        };
        *p.borrow_mut() = new_state;
        self.await_value(JsValue::Promise(p))
    }

    fn wait(&self, rx: &mpsc::Receiver<Result<Value, ApiError>>) -> R<Result<Value, ApiError>> {
        loop {
            let now = Instant::now();
            if now >= self.deadline || self.cancel.load(Ordering::Relaxed) {
                return Err(Exc::Abort(SandboxError::Timeout(self.timeout)));
            }
            let slice = (self.deadline - now).min(Duration::from_millis(25));
            match rx.recv_timeout(slice) {
                Ok(r) => return Ok(r),
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    return Ok(Err(ApiError::internal("api call was cancelled")))
                }
            }
        }
    }
}

pub(super) fn rejected(e: JsValue) -> JsValue {
    JsValue::Promise(Rc::new(RefCell::new(PromiseState::Rejected(e))))
}

pub(super) fn fulfilled(v: JsValue) -> JsValue {
    match v {
        p @ JsValue::Promise(_) => p,
        v => JsValue::Promise(Rc::new(RefCell::new(PromiseState::Fulfilled(v)))),
    }
}

fn api_error_value(e: &ApiError) -> JsValue {
    let v = JsValue::error("ApiError", &e.message);
    if let JsValue::Object(m) = &v {
        m.borrow_mut().insert("code".into(), JsValue::str(e.kind.as_str()));
        if let Some(s) = e.status {
            m.borrow_mut().insert("status".into(), JsValue::Num(f64::from(s)));
        }
    }
    v
}

fn method_value(this: &JsValue, name: Option<&'static str>) -> JsValue {
    match name {
        Some(n) => JsValue::Method(Rc::new((this.clone(), n))),
        None => JsValue::Undefined,
    }
}

pub(super) fn array_index(key: &str) -> Option<usize> {
    if key.is_empty() || (key.len() > 1 && key.starts_with('0')) || !key.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    key.parse().ok()
}

pub(super) fn to_primitive(v: &JsValue) -> JsValue {
    match v {
        JsValue::Array(_) | JsValue::Object(_) | JsValue::Closure(_) | JsValue::Native(_) | JsValue::Method(_) | JsValue::Api(_) | JsValue::Promise(_) => {
            JsValue::str(&to_js_string(v))
        }
        other => other.clone(),
    }
}

pub(super) fn to_int32(n: f64) -> i32 {
    if !n.is_finite() {
        return 0;
    }
    (n.trunc() as i64 as u64 & 0xffff_ffff) as u32 as i32
}

fn to_uint32(n: f64) -> u32 {
    to_int32(n) as u32
}

fn pattern_names(p: &Pattern, out: &mut Vec<Rc<str>>) {
    match p {
        Pattern::Ident(n) => out.push(n.clone()),
        Pattern::Default(inner, _) => pattern_names(inner, out),
        Pattern::Object(props, rest) => {
            for (_, p) in props {
                pattern_names(p, out);
            }
            if let Some(r) = rest {
                out.push(r.clone());
            }
        }
        Pattern::Array(items, rest) => {
            for p in items.iter().flatten() {
                pattern_names(p, out);
            }
            if let Some(r) = rest {
                pattern_names(r, out);
            }
        }
        Pattern::Member(_) => {}
    }
}

fn label(e: &Expr) -> String {
    match e {
        Expr::Ident(n) => n.to_string(),
        Expr::Member { object, prop, .. } => match &**prop {
            PropKey::Name(n) => format!("{}.{n}", label(object)),
            PropKey::Computed(_) => format!("{}[...]", label(object)),
        },
        Expr::OptionalChain(inner) => label(inner),
        Expr::Call { callee, .. } => format!("{}(...)", label(callee)),
        _ => "expression".into(),
    }
}
