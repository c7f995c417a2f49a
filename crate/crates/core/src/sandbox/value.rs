use std::cell::RefCell;
use std::fmt::Write as _;
use std::rc::Rc;
use std::sync::mpsc::Receiver;

use indexmap::IndexMap;
use serde_json::{Map, Number, Value};

use super::parser::FuncDef;
use super::scope::Scope;
use super::ApiError;

pub type ObjMap = IndexMap<Rc<str>, JsValue>;

const RENDER_LIMIT: usize = 16 << 20;
const JSON_NODE_BUDGET: usize = 4_000_000;

pub struct Closure {
    pub def: Rc<FuncDef>,
    pub scope: Rc<Scope>,
}

pub enum PromiseState {
    Pending(Receiver<Result<Value, ApiError>>),
    Fulfilled(JsValue),
    Rejected(JsValue),
}

#[derive(Clone)]
pub enum JsValue {
    Undefined,
    Null,
    Bool(bool),
    Num(f64),
    Str(Rc<str>),
    Array(Rc<RefCell<Vec<JsValue>>>),
    Object(Rc<RefCell<ObjMap>>),
    Closure(Rc<Closure>),
    /// Global builtin function or namespace, e.g. `Object.keys` or `Math`.
    Native(&'static str),
    /// Builtin method bound to its receiver, e.g. `[1, 2].map`.
    Method(Rc<(JsValue, &'static str)>),
    /// `api`, a backend namespace under it, or a callable tool.
    Api(ApiRef),
    Promise(Rc<RefCell<PromiseState>>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApiRef {
    Root,
    Namespace(Rc<str>),
    Tool(Rc<str>),
}

impl std::fmt::Debug for JsValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&display(self))
    }
}

impl JsValue {
    pub fn str(s: &str) -> JsValue {
        JsValue::Str(s.into())
    }

    pub fn array(items: Vec<JsValue>) -> JsValue {
        JsValue::Array(Rc::new(RefCell::new(items)))
    }

    pub fn object(map: ObjMap) -> JsValue {
        JsValue::Object(Rc::new(RefCell::new(map)))
    }

    pub fn error(name: &str, message: &str) -> JsValue {
        let mut m = ObjMap::new();
        m.insert("name".into(), JsValue::str(name));
        m.insert("message".into(), JsValue::str(message));
        JsValue::object(m)
    }

    pub fn is_nullish(&self) -> bool {
        matches!(self, JsValue::Undefined | JsValue::Null)
    }

    pub fn truthy(&self) -> bool {
        match self {
            JsValue::Undefined | JsValue::Null => false,
            JsValue::Bool(b) => *b,
            JsValue::Num(n) => *n != 0.0 && !n.is_nan(),
            JsValue::Str(s) => !s.is_empty(),
            _ => true,
        }
    }

    pub fn is_callable(&self) -> bool {
        match self {
            JsValue::Closure(_) | JsValue::Method(_) => true,
            JsValue::Api(ApiRef::Tool(_)) => true,
            JsValue::Native(n) => super::builtins::native_is_callable(n),
            _ => false,
        }
    }

    pub fn type_of(&self) -> &'static str {
        match self {
            JsValue::Undefined => "undefined",
            JsValue::Null => "object",
            JsValue::Bool(_) => "boolean",
            JsValue::Num(_) => "number",
            JsValue::Str(_) => "string",
            v if v.is_callable() => "function",
            _ => "object",
        }
    }

    pub fn to_number(&self) -> f64 {
        match self {
            JsValue::Undefined => f64::NAN,
            JsValue::Null => 0.0,
            JsValue::Bool(b) => f64::from(u8::from(*b)),
            JsValue::Num(n) => *n,
            JsValue::Str(s) => string_to_number(s),
            JsValue::Array(a) => {
                let a = a.borrow();
                match a.len() {
                    0 => 0.0,
                    1 => a[0].to_number(),
                    _ => f64::NAN,
                }
            }
            _ => f64::NAN,
        }
    }

    pub fn strict_equals(&self, other: &JsValue) -> bool {
        match (self, other) {
            (JsValue::Undefined, JsValue::Undefined) | (JsValue::Null, JsValue::Null) => true,
            (JsValue::Bool(a), JsValue::Bool(b)) => a == b,
            (JsValue::Num(a), JsValue::Num(b)) => a == b,
            (JsValue::Str(a), JsValue::Str(b)) => a == b,
            (JsValue::Array(a), JsValue::Array(b)) => Rc::ptr_eq(a, b),
            (JsValue::Object(a), JsValue::Object(b)) => Rc::ptr_eq(a, b),
            (JsValue::Closure(a), JsValue::Closure(b)) => Rc::ptr_eq(a, b),
            (JsValue::Promise(a), JsValue::Promise(b)) => Rc::ptr_eq(a, b),
            (JsValue::Method(a), JsValue::Method(b)) => Rc::ptr_eq(a, b),
            (JsValue::Native(a), JsValue::Native(b)) => a == b,
            (JsValue::Api(a), JsValue::Api(b)) => a == b,
            _ => false,
        }
    }

    pub fn loose_equals(&self, other: &JsValue) -> bool {
        match (self, other) {
            (a, b) if a.is_nullish() && b.is_nullish() => true,
            (a, b) if a.is_nullish() || b.is_nullish() => false,
            (JsValue::Num(_), JsValue::Str(_)) | (JsValue::Str(_), JsValue::Num(_)) => {
                self.to_number() == other.to_number()
            }
            (JsValue::Bool(_), _) => JsValue::Num(self.to_number()).loose_equals(other),
            (_, JsValue::Bool(_)) => self.loose_equals(&JsValue::Num(other.to_number())),
            (JsValue::Array(_) | JsValue::Object(_), JsValue::Num(_) | JsValue::Str(_)) => {
                JsValue::str(&to_js_string(self)).loose_equals(other)
            }
            (JsValue::Num(_) | JsValue::Str(_), JsValue::Array(_) | JsValue::Object(_)) => {
                self.loose_equals(&JsValue::str(&to_js_string(other)))
            }
            _ => self.strict_equals(other),
        }
    }
}

/// `SameValueZero`, used by `includes`.
pub fn same_value_zero(a: &JsValue, b: &JsValue) -> bool {
    match (a, b) {
        (JsValue::Num(x), JsValue::Num(y)) if x.is_nan() && y.is_nan() => true,
        _ => a.strict_equals(b),
    }
}

pub fn string_to_number(s: &str) -> f64 {
    let t = s.trim();
    if t.is_empty() {
        return 0.0;
    }
    let lower = t.to_ascii_lowercase();
    for (prefix, radix) in [("0x", 16), ("0b", 2), ("0o", 8)] {
        if let Some(rest) = lower.strip_prefix(prefix) {
            return u64::from_str_radix(rest, radix).map(|n| n as f64).unwrap_or(f64::NAN);
        }
    }
    match t {
        "Infinity" | "+Infinity" => f64::INFINITY,
        "-Infinity" => f64::NEG_INFINITY,
        _ if t.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')) => {
            t.parse().unwrap_or(f64::NAN)
        }
        _ => f64::NAN,
    }
}

pub fn number_to_string(n: f64) -> String {
    if n.is_nan() {
        "NaN".into()
    } else if n.is_infinite() {
        if n > 0.0 { "Infinity".into() } else { "-Infinity".into() }
    } else if n == 0.0 {
        "0".into()
    } else if n.fract() == 0.0 && n.abs() < 1e21 {
        format!("{n:.0}")
    } else {
        let s = format!("{n}");
        if n.abs() >= 1e21 || (n.abs() < 1e-6) {
            let e = format!("{n:e}");
            match e.split_once('e') {
                Some((m, exp)) if !exp.starts_with('-') => format!("{m}e+{exp}"),
                _ => e,
            }
        } else {
            s
        }
    }
}

/// `String(value)`.
pub fn to_js_string(v: &JsValue) -> String {
    let mut out = String::new();
    write_js_string(v, &mut Vec::new(), &mut out);
    out
}

fn write_js_string(v: &JsValue, stack: &mut Vec<*const ()>, out: &mut String) {
    match v {
        JsValue::Undefined => out.push_str("undefined"),
        JsValue::Null => out.push_str("null"),
        JsValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        JsValue::Num(n) => out.push_str(&number_to_string(*n)),
        JsValue::Str(s) => out.push_str(s),
        JsValue::Array(a) => {
            let ptr = Rc::as_ptr(a) as *const ();
            // Cycles render as empty; output past the string limit is cut short.
            if stack.contains(&ptr) || out.len() > RENDER_LIMIT {
                return;
            }
            stack.push(ptr);
            for (i, item) in a.borrow().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if !item.is_nullish() {
                    write_js_string(item, stack, out);
                }
                if out.len() > RENDER_LIMIT {
                    break;
                }
            }
            stack.pop();
        }
        JsValue::Object(m) => {
            let m = m.borrow();
            match (m.get("name"), m.get("message")) {
                (Some(JsValue::Str(n)), Some(JsValue::Str(msg))) if n.ends_with("Error") => {
                    out.push_str(n);
                    if !msg.is_empty() {
                        out.push_str(": ");
                        out.push_str(msg);
                    }
                }
                _ => out.push_str("[object Object]"),
            }
        }
        JsValue::Promise(_) => out.push_str("[object Promise]"),
        JsValue::Closure(_) | JsValue::Method(_) | JsValue::Native(_) | JsValue::Api(_) => {
            out.push_str("function () { [native code] }")
        }
    }
}

/// Short rendering for error messages.
pub fn display(v: &JsValue) -> String {
    match v {
        JsValue::Str(s) => format!("{s:?}"),
        JsValue::Array(_) => "array".into(),
        JsValue::Object(_) => "object".into(),
        other => to_js_string(other),
    }
}

pub fn from_json(v: &Value) -> JsValue {
    match v {
        Value::Null => JsValue::Null,
        Value::Bool(b) => JsValue::Bool(*b),
        Value::Number(n) => JsValue::Num(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => JsValue::str(s),
        Value::Array(items) => JsValue::array(items.iter().map(from_json).collect()),
        Value::Object(m) => JsValue::object(m.iter().map(|(k, v)| (Rc::from(k.as_str()), from_json(v))).collect()),
    }
}

pub fn number_json(n: f64) -> Value {
    if n.fract() == 0.0 && n.abs() < 9.007_199_254_740_992e15 {
        Value::Number(Number::from(n as i64))
    } else {
        Number::from_f64(n).map(Value::Number).unwrap_or(Value::Null)
    }
}

/// `JSON.stringify` semantics; `None` where the value is omitted (undefined, functions).
pub fn to_json(v: &JsValue, depth: usize) -> Result<Option<Value>, String> {
    let mut budget = JSON_NODE_BUDGET;
    to_json_at(v, depth, &mut budget)
}

fn to_json_at(v: &JsValue, depth: usize, budget: &mut usize) -> Result<Option<Value>, String> {
    if depth > 200 {
        return Err("value is too deeply nested or cyclic".into());
    }
    if *budget == 0 {
        return Err("value is too large to serialize".into());
    }
    *budget -= 1;
    Ok(Some(match v {
        JsValue::Undefined | JsValue::Closure(_) | JsValue::Native(_) | JsValue::Method(_) | JsValue::Api(_) => {
            return Ok(None)
        }
        JsValue::Null => Value::Null,
        JsValue::Bool(b) => Value::Bool(*b),
        JsValue::Num(n) => number_json(*n),
        JsValue::Str(s) => Value::String(s.to_string()),
        JsValue::Array(a) => {
            let mut out = Vec::new();
            for x in a.borrow().iter() {
                out.push(to_json_at(x, depth + 1, budget)?.unwrap_or(Value::Null));
            }
            Value::Array(out)
        }
        JsValue::Object(m) => {
            let mut out = Map::new();
            for (k, x) in m.borrow().iter() {
                if let Some(j) = to_json_at(x, depth + 1, budget)? {
                    out.insert(k.to_string(), j);
                }
            }
            Value::Object(out)
        }
        JsValue::Promise(_) => Value::Object(Map::new()),
    }))
}

/// Compact `JSON.stringify` with optional indentation.
pub fn stringify(v: &JsValue, indent: usize) -> Result<Option<String>, String> {
    let Some(j) = to_json(v, 0)? else { return Ok(None) };
    if indent == 0 {
        return Ok(Some(j.to_string()));
    }
    let mut buf = Vec::new();
    let pad = " ".repeat(indent.min(10));
    let fmt = serde_json::ser::PrettyFormatter::with_indent(pad.as_bytes());
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    serde::Serialize::serialize(&j, &mut ser).map_err(|e| e.to_string())?;
    Ok(Some(String::from_utf8(buf).unwrap_or_default()))
}

/// Message of a thrown value, as reported to callers.
pub fn thrown_message(v: &JsValue) -> String {
    let mut out = String::new();
    match v {
        JsValue::Object(m) => {
            let m = m.borrow();
            let name = m.get("name").map(to_js_string).unwrap_or_else(|| "Error".into());
            let message = m.get("message").map(to_js_string);
            match message {
                Some(msg) => {
                    let _ = write!(out, "{name}: {msg}");
                }
                None => out.push_str("Uncaught [object Object]"),
            }
        }
        other => {
            let _ = write!(out, "Uncaught {}", to_js_string(other));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn number_rendering() {
        assert_eq!(number_to_string(3.0), "3");
        assert_eq!(number_to_string(-0.0), "0");
        assert_eq!(number_to_string(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(number_to_string(1e21), "1e+21");
        assert_eq!(number_to_string(f64::NAN), "NaN");
    }

    #[test]
    fn json_round_trip_keeps_order_and_integers() {
        let j = json!({"b": 1, "a": [1.5, null, "x", {"z": true}]});
        assert_eq!(to_json(&from_json(&j), 0).unwrap().unwrap(), j);
    }

    #[test]
    fn equality_rules() {
        assert!(JsValue::Null.loose_equals(&JsValue::Undefined));
        assert!(!JsValue::Null.strict_equals(&JsValue::Undefined));
        assert!(JsValue::Num(1.0).loose_equals(&JsValue::str("1")));
        assert!(!JsValue::Num(f64::NAN).strict_equals(&JsValue::Num(f64::NAN)));
        assert!(same_value_zero(&JsValue::Num(f64::NAN), &JsValue::Num(f64::NAN)));
    }

    #[test]
    fn string_conversion() {
        let arr = JsValue::array(vec![JsValue::Num(1.0), JsValue::Null, JsValue::str("a")]);
        assert_eq!(to_js_string(&arr), "1,,a");
        assert_eq!(string_to_number(" 42 "), 42.0);
        assert!(string_to_number("4x").is_nan());
        assert_eq!(string_to_number(""), 0.0);
    }
}
