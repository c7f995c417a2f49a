use std::cmp::Ordering;
use std::rc::Rc;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

use super::interp::{fulfilled, range_error, rejected, type_error, Exc, Interp, MAX_ARRAY_LEN, MAX_STRING_LEN, R};
use super::value::*;

pub const GLOBALS: &[&str] = &[
    "Object", "Array", "JSON", "Math", "Promise", "Number", "String", "Boolean", "parseInt", "parseFloat",
    "isNaN", "isFinite", "Error", "TypeError", "RangeError", "SyntaxError", "console", "encodeURIComponent",
    "decodeURIComponent",
];

const NAMESPACES: &[&str] = &["Object", "Array", "JSON", "Math", "Promise", "console"];

const MEMBERS: &[&str] = &[
    "Object.keys", "Object.values", "Object.entries", "Object.fromEntries", "Object.assign", "Object.freeze",
    "Array.isArray", "Array.from", "Array.of",
    "JSON.stringify", "JSON.parse",
    "Math.floor", "Math.ceil", "Math.round", "Math.trunc", "Math.abs", "Math.min", "Math.max", "Math.pow",
    "Math.sqrt", "Math.sign", "Math.log", "Math.log2", "Math.log10", "Math.exp",
    "Promise.all", "Promise.allSettled", "Promise.resolve", "Promise.reject",
    "Number.isInteger", "Number.isFinite", "Number.isNaN", "Number.parseInt", "Number.parseFloat",
    "console.log", "console.info", "console.warn", "console.error", "console.debug",
];

const ARRAY_METHODS: &[&str] = &[
    "map", "filter", "find", "findIndex", "findLast", "findLastIndex", "some", "every", "forEach", "reduce",
    "reduceRight", "slice", "concat", "includes", "indexOf", "lastIndexOf", "join", "push", "pop", "shift",
    "unshift", "sort", "reverse", "flat", "flatMap", "at", "fill", "splice", "entries", "keys", "values",
    "toString",
];

const STRING_METHODS: &[&str] = &[
    "toLowerCase", "toUpperCase", "trim", "trimStart", "trimEnd", "split", "includes", "startsWith",
    "endsWith", "indexOf", "lastIndexOf", "slice", "substring", "substr", "replace", "replaceAll", "padStart",
    "padEnd", "repeat", "charAt", "charCodeAt", "at", "concat", "toString", "localeCompare", "normalize",
];

fn find(table: &[&'static str], key: &str) -> Option<&'static str> {
    table.iter().copied().find(|m| *m == key)
}

pub fn native_is_callable(name: &str) -> bool {
    !NAMESPACES.contains(&name)
}

pub fn array_method(key: &str) -> Option<&'static str> {
    find(ARRAY_METHODS, key)
}

pub fn string_method(key: &str) -> Option<&'static str> {
    find(STRING_METHODS, key)
}

pub fn number_method(key: &str) -> Option<&'static str> {
    find(&["toFixed", "toString"], key)
}

pub fn object_method(key: &str) -> Option<&'static str> {
    find(&["hasOwnProperty"], key)
}

pub fn promise_method(key: &str) -> Option<&'static str> {
    find(&["then", "catch", "finally"], key)
}

/// Static members of global builtins: functions and constants.
pub fn native_member(ns: &str, key: &str) -> JsValue {
    let constant = match (ns, key) {
        ("Math", "PI") => Some(std::f64::consts::PI),
        ("Math", "E") => Some(std::f64::consts::E),
        ("Number", "MAX_SAFE_INTEGER") => Some(9_007_199_254_740_991.0),
        ("Number", "MIN_SAFE_INTEGER") => Some(-9_007_199_254_740_991.0),
        ("Number", "EPSILON") => Some(f64::EPSILON),
        ("Number", "POSITIVE_INFINITY") => Some(f64::INFINITY),
        ("Number", "NEGATIVE_INFINITY") => Some(f64::NEG_INFINITY),
        ("Number", "NaN") => Some(f64::NAN),
        _ => None,
    };
    if let Some(n) = constant {
        return JsValue::Num(n);
    }
    let full = format!("{ns}.{key}");
    match MEMBERS.iter().find(|m| **m == full) {
        Some(m) => JsValue::Native(m),
        None => JsValue::Undefined,
    }
}

const URI_COMPONENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'!')
    .remove(b'~')
    .remove(b'*')
    .remove(b'\'')
    .remove(b'(')
    .remove(b')');

fn arg(args: &[JsValue], i: usize) -> JsValue {
    args.get(i).cloned().unwrap_or(JsValue::Undefined)
}

/// Relative index argument as used by `slice`: negative counts from the end.
fn rel_index(v: &JsValue, len: usize, default: usize) -> usize {
    if matches!(v, JsValue::Undefined) {
        return default;
    }
    let n = v.to_number();
    let n = if n.is_nan() { 0.0 } else { n.trunc() };
    if n < 0.0 {
        (len as f64 + n).max(0.0) as usize
    } else {
        (n as usize).min(len)
    }
}

fn parse_int(s: &str, radix: &JsValue) -> f64 {
    let t = s.trim_start();
    let (neg, t) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let mut radix = match radix {
        JsValue::Undefined => 0,
        r => r.to_number() as u32,
    };
    let mut t = t;
    if radix == 0 || radix == 16 {
        if let Some(r) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            t = r;
            radix = 16;
        }
    }
    if radix == 0 {
        radix = 10;
    }
    if !(2..=36).contains(&radix) {
        return f64::NAN;
    }
    let digits: String = t.chars().take_while(|c| c.is_digit(radix)).collect();
    if digits.is_empty() {
        return f64::NAN;
    }
    let mut n = 0f64;
    for c in digits.chars() {
        n = n * f64::from(radix) + f64::from(c.to_digit(radix).unwrap_or(0));
    }
    if neg { -n } else { n }
}

fn parse_float(s: &str) -> f64 {
    let t = s.trim_start();
    for inf in ["Infinity", "+Infinity"] {
        if t.starts_with(inf) {
            return f64::INFINITY;
        }
    }
    if t.starts_with("-Infinity") {
        return f64::NEG_INFINITY;
    }
    let bytes = t.as_bytes();
    let mut end = 0;
    let mut best = None;
    let mut seen_dot = false;
    let mut seen_e = false;
    while end < bytes.len() {
        let c = bytes[end];
        let ok = c.is_ascii_digit()
            || ((c == b'+' || c == b'-') && (end == 0 || matches!(bytes[end - 1], b'e' | b'E')))
            || (c == b'.' && !seen_dot && !seen_e)
            || ((c == b'e' || c == b'E') && !seen_e && end > 0);
        if !ok {
            break;
        }
        seen_dot |= c == b'.';
        seen_e |= c == b'e' || c == b'E';
        end += 1;
        if let Ok(v) = t[..end].parse::<f64>() {
            best = Some(v);
        }
    }
    best.unwrap_or(f64::NAN)
}

fn chars_of(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn char_str(c: char) -> JsValue {
    JsValue::str(c.encode_utf8(&mut [0; 4]))
}

fn js_round(n: f64) -> f64 {
    if !n.is_finite() {
        return n;
    }
    (n + 0.5).floor()
}

fn default_compare(a: &JsValue, b: &JsValue) -> Ordering {
    match (a, b) {
        (JsValue::Undefined, JsValue::Undefined) => Ordering::Equal,
        (JsValue::Undefined, _) => Ordering::Greater,
        (_, JsValue::Undefined) => Ordering::Less,
        _ => to_js_string(a).cmp(&to_js_string(b)),
    }
}

fn flatten_into(out: &mut Vec<JsValue>, items: &[JsValue], depth: f64) -> Result<(), ()> {
    for item in items {
        match item {
            JsValue::Array(inner) if depth >= 1.0 => {
                let inner = inner.borrow().clone();
                flatten_into(out, &inner, depth - 1.0)?;
            }
            other => out.push(other.clone()),
        }
        if out.len() > MAX_ARRAY_LEN {
            return Err(());
        }
    }
    Ok(())
}

impl Interp {
    pub(super) fn call_native(&mut self, name: &'static str, args: Vec<JsValue>) -> R<JsValue> {
        let a0 = arg(&args, 0);
        match name {
            "Object.keys" | "Object.values" | "Object.entries" => {
                let entries = self.entries_of(&a0);
                let out: Vec<JsValue> = entries
                    .into_iter()
                    .map(|(k, v)| match name {
                        "Object.keys" => JsValue::Str(k),
                        "Object.values" => v,
                        _ => JsValue::array(vec![JsValue::Str(k), v]),
                    })
                    .collect();
                self.make_array(out)
            }
            "Object.fromEntries" => {
                let mut map = ObjMap::new();
                for pair in self.iterate(&a0)? {
                    let k = self.get_prop(&pair, "0")?;
                    let v = self.get_prop(&pair, "1")?;
                    map.insert(to_js_string(&k).into(), v);
                }
                self.charge(map.len() * 48)?;
                Ok(JsValue::object(map))
            }
            "Object.assign" => {
                let JsValue::Object(target) = &a0 else {
                    return type_error("Object.assign target must be an object");
                };
                for src in args.iter().skip(1) {
                    for (k, v) in self.entries_of(src) {
                        target.borrow_mut().insert(k, v);
                    }
                }
                Ok(a0)
            }
            "Object.freeze" => Ok(a0),
            "Array.isArray" => Ok(JsValue::Bool(matches!(a0, JsValue::Array(_)))),
            "Array.from" => {
                let items = match &a0 {
                    JsValue::Array(_) | JsValue::Str(_) => self.iterate(&a0)?,
                    JsValue::Object(_) => {
                        let len = self.get_prop(&a0, "length")?.to_number();
                        let len = if len.is_nan() || len < 0.0 { 0.0 } else { len.trunc() };
                        if len > MAX_ARRAY_LEN as f64 {
                            return range_error("Invalid array length");
                        }
                        let mut v = Vec::with_capacity(len as usize);
                        for i in 0..len as usize {
                            v.push(self.get_prop(&a0, &i.to_string())?);
                        }
                        v
                    }
                    _ => Vec::new(),
                };
                let f = arg(&args, 1);
                let items = if f.is_callable() {
                    let mut out = Vec::with_capacity(items.len());
                    for (i, x) in items.into_iter().enumerate() {
                        out.push(self.call_value(&f, vec![x, JsValue::Num(i as f64)])?);
                    }
                    out
                } else {
                    items
                };
                self.make_array(items)
            }
            "Array.of" => self.make_array(args),
            "JSON.stringify" => {
                let replacer = arg(&args, 1);
                if !replacer.is_nullish() {
                    return type_error("JSON.stringify replacer is not supported");
                }
                let indent = match arg(&args, 2) {
                    JsValue::Num(n) if n > 0.0 => n as usize,
                    JsValue::Str(s) => s.len(),
                    _ => 0,
                };
                match stringify(&a0, indent) {
                    Ok(Some(s)) => self.make_string(s),
                    Ok(None) => Ok(JsValue::Undefined),
                    Err(e) => type_error(e),
                }
            }
            "JSON.parse" => {
                let text = to_js_string(&a0);
                match serde_json::from_str::<serde_json::Value>(&text) {
                    Ok(v) => {
                        self.charge(text.len() * 2)?;
                        Ok(from_json(&v))
                    }
                    Err(e) => Err(Exc::Throw(JsValue::error("SyntaxError", &format!("JSON.parse: {e}")))),
                }
            }
            "Math.floor" => Ok(JsValue::Num(a0.to_number().floor())),
            "Math.ceil" => Ok(JsValue::Num(a0.to_number().ceil())),
            "Math.round" => Ok(JsValue::Num(js_round(a0.to_number()))),
            "Math.trunc" => Ok(JsValue::Num(a0.to_number().trunc())),
            "Math.abs" => Ok(JsValue::Num(a0.to_number().abs())),
            "Math.sqrt" => Ok(JsValue::Num(a0.to_number().sqrt())),
            "Math.log" => Ok(JsValue::Num(a0.to_number().ln())),
            "Math.log2" => Ok(JsValue::Num(a0.to_number().log2())),
            "Math.log10" => Ok(JsValue::Num(a0.to_number().log10())),
            "Math.exp" => Ok(JsValue::Num(a0.to_number().exp())),
            "Math.pow" => Ok(JsValue::Num(a0.to_number().powf(arg(&args, 1).to_number()))),
            "Math.sign" => {
                let n = a0.to_number();
                Ok(JsValue::Num(if n.is_nan() || n == 0.0 { n } else { n.signum() }))
            }
            "Math.min" | "Math.max" => {
                let is_min = name == "Math.min";
                let mut acc = if is_min { f64::INFINITY } else { f64::NEG_INFINITY };
                for v in &args {
                    let n = v.to_number();
                    if n.is_nan() {
                        return Ok(JsValue::Num(f64::NAN));
                    }
                    acc = if is_min { acc.min(n) } else { acc.max(n) };
                }
                Ok(JsValue::Num(acc))
            }
            "Promise.all" | "Promise.allSettled" => {
                let items = self.iterate(&a0)?;
                let mut out = Vec::with_capacity(items.len());
                for p in items {
                    let r = self.await_value(p);
                    if name == "Promise.all" {
                        match r {
                            Ok(v) => out.push(v),
                            Err(Exc::Throw(e)) => return Ok(rejected(e)),
                            Err(other) => return Err(other),
                        }
                    } else {
                        let mut m = ObjMap::new();
                        match r {
                            Ok(v) => {
                                m.insert("status".into(), JsValue::str("fulfilled"));
                                m.insert("value".into(), v);
                            }
                            Err(Exc::Throw(e)) => {
                                m.insert("status".into(), JsValue::str("rejected"));
                                m.insert("reason".into(), e);
                            }
                            Err(other) => return Err(other),
                        }
                        out.push(JsValue::object(m));
                    }
                }
                let arr = self.make_array(out)?;
                Ok(fulfilled(arr))
            }
            "Promise.resolve" => Ok(fulfilled(a0)),
            "Promise.reject" => Ok(rejected(a0)),
            "Number" => Ok(JsValue::Num(if args.is_empty() { 0.0 } else { a0.to_number() })),
            "String" => {
                if args.is_empty() {
                    return Ok(JsValue::str(""));
                }
                self.make_string(to_js_string(&a0))
            }
            "Boolean" => Ok(JsValue::Bool(a0.truthy())),
            "parseInt" | "Number.parseInt" => Ok(JsValue::Num(parse_int(&to_js_string(&a0), &arg(&args, 1)))),
            "parseFloat" | "Number.parseFloat" => Ok(JsValue::Num(parse_float(&to_js_string(&a0)))),
            "isNaN" => Ok(JsValue::Bool(a0.to_number().is_nan())),
            "isFinite" => Ok(JsValue::Bool(a0.to_number().is_finite())),
            "Number.isNaN" => Ok(JsValue::Bool(matches!(a0, JsValue::Num(n) if n.is_nan()))),
            "Number.isFinite" => Ok(JsValue::Bool(matches!(a0, JsValue::Num(n) if n.is_finite()))),
            "Number.isInteger" => Ok(JsValue::Bool(matches!(a0, JsValue::Num(n) if n.is_finite() && n.fract() == 0.0))),
            "Error" | "TypeError" | "RangeError" | "SyntaxError" => {
                let msg = if a0.is_nullish() { String::new() } else { to_js_string(&a0) };
                Ok(JsValue::error(name, &msg))
            }
            "console.log" | "console.info" | "console.warn" | "console.error" | "console.debug" => {
                let line = args
                    .iter()
                    .map(|v| match v {
                        JsValue::Str(s) => s.to_string(),
                        JsValue::Array(_) | JsValue::Object(_) => {
                            stringify(v, 0).ok().flatten().unwrap_or_else(|| to_js_string(v))
                        }
                        other => to_js_string(other),
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                self.log(line);
                Ok(JsValue::Undefined)
            }
            "encodeURIComponent" => {
                let s = utf8_percent_encode(&to_js_string(&a0), URI_COMPONENT).to_string();
                self.make_string(s)
            }
            "decodeURIComponent" => match percent_decode_str(&to_js_string(&a0)).decode_utf8() {
                Ok(s) => self.make_string(s.into_owned()),
                Err(_) => Err(Exc::Throw(JsValue::error("URIError", "URI malformed"))),
            },
            other => type_error(format!("{other} is not a function")),
        }
    }

    /// Own enumerable entries in insertion order.
    fn entries_of(&self, v: &JsValue) -> Vec<(Rc<str>, JsValue)> {
        match v {
            JsValue::Object(m) => m.borrow().iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            JsValue::Array(a) => a.borrow().iter().enumerate().map(|(i, v)| (i.to_string().into(), v.clone())).collect(),
            JsValue::Str(s) => s.chars().enumerate().map(|(i, c)| (i.to_string().into(), char_str(c))).collect(),
            _ => Vec::new(),
        }
    }

    pub(super) fn call_method(&mut self, this: &JsValue, name: &'static str, args: Vec<JsValue>) -> R<JsValue> {
        match this {
            JsValue::Array(a) => self.array_method(a, this, name, args),
            JsValue::Str(s) => self.string_method(s, name, args),
            JsValue::Num(n) => self.number_method(*n, name, args),
            JsValue::Bool(b) => Ok(JsValue::str(if *b { "true" } else { "false" })),
            JsValue::Object(m) => match name {
                "hasOwnProperty" => Ok(JsValue::Bool(m.borrow().contains_key(to_js_string(&arg(&args, 0)).as_str()))),
                _ => type_error(format!("{name} is not a function")),
            },
            JsValue::Promise(_) => self.promise_method(this, name, args),
            _ => type_error(format!("{name} is not a function")),
        }
    }

    fn callback(&self, args: &[JsValue], method: &str) -> R<JsValue> {
        let f = arg(args, 0);
        if !f.is_callable() {
            return type_error(format!("{} is not a function (argument to {method})", display(&f)));
        }
        Ok(f)
    }

    fn array_method(&mut self, a: &Rc<std::cell::RefCell<Vec<JsValue>>>, this: &JsValue, name: &'static str, args: Vec<JsValue>) -> R<JsValue> {
        let a0 = arg(&args, 0);
        match name {
            "map" | "filter" | "forEach" | "some" | "every" | "find" | "findIndex" | "flatMap" => {
                let f = self.callback(&args, name)?;
                let items = a.borrow().clone();
                let mut out = Vec::new();
                for (i, x) in items.into_iter().enumerate() {
                    self.tick()?;
                    let r = self.call_value(&f, vec![x.clone(), JsValue::Num(i as f64), this.clone()])?;
                    match name {
                        "map" => out.push(r),
                        "flatMap" => match r {
                            JsValue::Array(inner) => out.extend(inner.borrow().iter().cloned()),
                            other => out.push(other),
                        },
                        "filter" => {
                            if r.truthy() {
                                out.push(x)
                            }
                        }
                        "some" if r.truthy() => return Ok(JsValue::Bool(true)),
                        "every" if !r.truthy() => return Ok(JsValue::Bool(false)),
                        "find" if r.truthy() => return Ok(x),
                        "findIndex" if r.truthy() => return Ok(JsValue::Num(i as f64)),
                        _ => {}
                    }
                    if out.len() > MAX_ARRAY_LEN {
                        return range_error("Invalid array length");
                    }
                }
                match name {
                    "map" | "filter" | "flatMap" => self.make_array(out),
                    "some" => Ok(JsValue::Bool(false)),
                    "every" => Ok(JsValue::Bool(true)),
                    "findIndex" => Ok(JsValue::Num(-1.0)),
                    _ => Ok(JsValue::Undefined),
                }
            }
            "findLast" | "findLastIndex" => {
                let f = self.callback(&args, name)?;
                let items = a.borrow().clone();
                for (i, x) in items.into_iter().enumerate().rev() {
                    self.tick()?;
                    if self.call_value(&f, vec![x.clone(), JsValue::Num(i as f64), this.clone()])?.truthy() {
                        return Ok(if name == "findLast" { x } else { JsValue::Num(i as f64) });
                    }
                }
                Ok(if name == "findLast" { JsValue::Undefined } else { JsValue::Num(-1.0) })
            }
            "reduce" | "reduceRight" => {
                let f = self.callback(&args, name)?;
                let mut items: Vec<(usize, JsValue)> = a.borrow().iter().cloned().enumerate().collect();
                if name == "reduceRight" {
                    items.reverse();
                }
                let mut iter = items.into_iter();
                let mut acc = if args.len() >= 2 {
                    args[1].clone()
                } else {
                    match iter.next() {
                        Some((_, v)) => v,
                        None => return type_error("Reduce of empty array with no initial value"),
                    }
                };
                for (i, x) in iter {
                    self.tick()?;
                    acc = self.call_value(&f, vec![acc, x, JsValue::Num(i as f64), this.clone()])?;
                }
                Ok(acc)
            }
            "slice" => {
                let items = a.borrow();
                let len = items.len();
                let start = rel_index(&a0, len, 0);
                let end = rel_index(&arg(&args, 1), len, len);
                let out = if start < end { items[start..end].to_vec() } else { Vec::new() };
                drop(items);
                self.make_array(out)
            }
            "concat" => {
                let mut out = a.borrow().clone();
                for x in &args {
                    match x {
                        JsValue::Array(other) => out.extend(other.borrow().iter().cloned()),
                        other => out.push(other.clone()),
                    }
                    if out.len() > MAX_ARRAY_LEN {
                        return range_error("Invalid array length");
                    }
                }
                self.make_array(out)
            }
            "includes" => Ok(JsValue::Bool(a.borrow().iter().any(|x| same_value_zero(x, &a0)))),
            "indexOf" => Ok(JsValue::Num(
                a.borrow().iter().position(|x| x.strict_equals(&a0)).map_or(-1.0, |i| i as f64),
            )),
            "lastIndexOf" => Ok(JsValue::Num(
                a.borrow().iter().rposition(|x| x.strict_equals(&a0)).map_or(-1.0, |i| i as f64),
            )),
            "join" | "toString" => {
                let sep = match (&a0, name) {
                    (JsValue::Undefined, _) | (_, "toString") => ",".to_string(),
                    (v, _) => to_js_string(v),
                };
                let mut out = String::new();
                for (i, x) in a.borrow().iter().enumerate() {
                    if i > 0 {
                        out.push_str(&sep);
                    }
                    if !x.is_nullish() {
                        out.push_str(&to_js_string(x));
                    }
                    if out.len() > MAX_STRING_LEN {
                        return range_error("Invalid string length");
                    }
                }
                self.make_string(out)
            }
            "push" | "unshift" => {
                let len = a.borrow().len() + args.len();
                if len > MAX_ARRAY_LEN {
                    return range_error("Invalid array length");
                }
                self.charge(args.len() * 16)?;
                let mut items = a.borrow_mut();
                if name == "push" {
                    items.extend(args);
                } else {
                    items.splice(0..0, args);
                }
                Ok(JsValue::Num(len as f64))
            }
            "pop" => Ok(a.borrow_mut().pop().unwrap_or(JsValue::Undefined)),
            "shift" => {
                let mut items = a.borrow_mut();
                Ok(if items.is_empty() { JsValue::Undefined } else { items.remove(0) })
            }
            "reverse" => {
                a.borrow_mut().reverse();
                Ok(this.clone())
            }
            "sort" => {
                let items = a.borrow().clone();
                let sorted = if a0.is_callable() {
                    self.merge_sort(items, &a0)?
                } else {
                    let mut items = items;
                    items.sort_by(default_compare);
                    items
                };
                *a.borrow_mut() = sorted;
                Ok(this.clone())
            }
            "flat" => {
                let depth = match a0 {
                    JsValue::Undefined => 1.0,
                    v => v.to_number(),
                };
                let items = a.borrow().clone();
                let mut out = Vec::new();
                if flatten_into(&mut out, &items, depth.min(64.0)).is_err() {
                    return range_error("Invalid array length");
                }
                self.make_array(out)
            }
            "at" => {
                let items = a.borrow();
                let i = a0.to_number();
                let i = if i.is_nan() { 0.0 } else { i.trunc() };
                let idx = if i < 0.0 { items.len() as f64 + i } else { i };
                Ok(if idx < 0.0 { JsValue::Undefined } else { items.get(idx as usize).cloned().unwrap_or(JsValue::Undefined) })
            }
            "fill" => {
                let len = a.borrow().len();
                let start = rel_index(&arg(&args, 1), len, 0);
                let end = rel_index(&arg(&args, 2), len, len);
                for slot in a.borrow_mut().iter_mut().take(end).skip(start) {
                    *slot = a0.clone();
                }
                Ok(this.clone())
            }
            "splice" => {
                let len = a.borrow().len();
                let start = rel_index(&a0, len, 0);
                let count = match args.get(1) {
                    None => len - start,
                    Some(v) => {
                        let n = v.to_number();
                        if n.is_nan() || n < 0.0 { 0 } else { (n as usize).min(len - start) }
                    }
                };
                let insert: Vec<JsValue> = args.into_iter().skip(2).collect();
                if len - count + insert.len() > MAX_ARRAY_LEN {
                    return range_error("Invalid array length");
                }
                self.charge(insert.len() * 16)?;
                let removed: Vec<JsValue> = a.borrow_mut().splice(start..start + count, insert).collect();
                self.make_array(removed)
            }
            "entries" | "keys" | "values" => {
                let items = a.borrow().clone();
                let out = items
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| match name {
                        "keys" => JsValue::Num(i as f64),
                        "values" => v,
                        _ => JsValue::array(vec![JsValue::Num(i as f64), v]),
                    })
                    .collect();
                self.make_array(out)
            }
            _ => type_error(format!("{name} is not a function")),
        }
    }

    /// Stable merge sort with a user comparator; never panics on inconsistent comparators.
    fn merge_sort(&mut self, items: Vec<JsValue>, cmp: &JsValue) -> R<Vec<JsValue>> {
        if items.len() <= 1 {
            return Ok(items);
        }
        let mut items = items;
        let right = items.split_off(items.len() / 2);
        let left = self.merge_sort(items, cmp)?;
        let right = self.merge_sort(right, cmp)?;
        let mut out = Vec::with_capacity(left.len() + right.len());
        let (mut l, mut r) = (left.into_iter().peekable(), right.into_iter().peekable());
        while let (Some(x), Some(y)) = (l.peek(), r.peek()) {
            let (x, y) = (x.clone(), y.clone());
            let ord = if matches!(x, JsValue::Undefined) {
                1.0
            } else if matches!(y, JsValue::Undefined) {
                -1.0
            } else {
                self.tick()?;
                self.call_value(cmp, vec![x, y])?.to_number()
            };
            if ord > 0.0 {
                out.push(r.next().unwrap_or(JsValue::Undefined));
            } else {
                out.push(l.next().unwrap_or(JsValue::Undefined));
            }
        }
        out.extend(l);
        out.extend(r);
        Ok(out)
    }

    fn string_method(&mut self, s: &Rc<str>, name: &'static str, args: Vec<JsValue>) -> R<JsValue> {
        let a0 = arg(&args, 0);
        let a1 = arg(&args, 1);
        match name {
            "toLowerCase" => self.make_string(s.to_lowercase()),
            "toUpperCase" => self.make_string(s.to_uppercase()),
            "trim" => Ok(JsValue::str(s.trim())),
            "trimStart" => Ok(JsValue::str(s.trim_start())),
            "trimEnd" => Ok(JsValue::str(s.trim_end())),
            "toString" | "normalize" => Ok(JsValue::Str(s.clone())),
            "includes" => Ok(JsValue::Bool(s.contains(to_js_string(&a0).as_str()))),
            "startsWith" => Ok(JsValue::Bool(s.starts_with(to_js_string(&a0).as_str()))),
            "endsWith" => Ok(JsValue::Bool(s.ends_with(to_js_string(&a0).as_str()))),
            "indexOf" | "lastIndexOf" => {
                let needle = to_js_string(&a0);
                let found = if name == "indexOf" {
                    let chars = chars_of(s);
                    let from = rel_index(&a1, chars.len(), 0).min(chars.len());
                    let skip: usize = chars[..from].iter().map(|c| c.len_utf8()).sum();
                    s[skip..].find(needle.as_str()).map(|b| b + skip)
                } else {
                    s.rfind(needle.as_str())
                };
                Ok(JsValue::Num(found.map_or(-1.0, |b| s[..b].chars().count() as f64)))
            }
            "slice" | "substring" | "substr" => {
                let chars = chars_of(s);
                let len = chars.len();
                let (start, end) = match name {
                    "slice" => (rel_index(&a0, len, 0), rel_index(&a1, len, len)),
                    "substring" => {
                        let clamp = |v: &JsValue, d: usize| match v {
                            JsValue::Undefined => d,
                            v => {
                                let n = v.to_number();
                                if n.is_nan() || n < 0.0 { 0 } else { (n as usize).min(len) }
                            }
                        };
                        let (x, y) = (clamp(&a0, 0), clamp(&a1, len));
                        (x.min(y), x.max(y))
                    }
                    _ => {
                        let start = rel_index(&a0, len, 0);
                        let count = match a1 {
                            JsValue::Undefined => len - start,
                            v => {
                                let n = v.to_number();
                                if n.is_nan() || n < 0.0 { 0 } else { (n as usize).min(len - start) }
                            }
                        };
                        (start, start + count)
                    }
                };
                let out: String = if start < end { chars[start..end].iter().collect() } else { String::new() };
                Ok(JsValue::str(&out))
            }
            "charAt" | "at" | "charCodeAt" => {
                let chars = chars_of(s);
                let i = a0.to_number();
                let i = if i.is_nan() { 0.0 } else { i.trunc() };
                let idx = if name == "at" && i < 0.0 { chars.len() as f64 + i } else { i };
                let c = if idx < 0.0 { None } else { chars.get(idx as usize).copied() };
                Ok(match (name, c) {
                    ("charCodeAt", Some(c)) => JsValue::Num(f64::from(u32::from(c))),
                    ("charCodeAt", None) => JsValue::Num(f64::NAN),
                    ("at", None) => JsValue::Undefined,
                    (_, Some(c)) => char_str(c),
                    (_, None) => JsValue::str(""),
                })
            }
            "split" => {
                let limit = match a1 {
                    JsValue::Undefined => usize::MAX,
                    v => v.to_number().max(0.0) as usize,
                };
                let parts: Vec<JsValue> = match a0 {
                    JsValue::Undefined => vec![JsValue::Str(s.clone())],
                    sep => {
                        let sep = to_js_string(&sep);
                        if sep.is_empty() {
                            s.chars().map(char_str).take(limit).collect()
                        } else {
                            s.split(sep.as_str()).map(JsValue::str).take(limit).collect()
                        }
                    }
                };
                self.make_array(parts)
            }
            "replace" | "replaceAll" => {
                let pat = to_js_string(&a0);
                let mut out = String::new();
                let mut rest: &str = s;
                let mut offset = 0;
                loop {
                    let Some(pos) = rest.find(pat.as_str()) else { break };
                    out.push_str(&rest[..pos]);
                    let replacement = if a1.is_callable() {
                        let at = s[..offset + pos].chars().count();
                        let r = self.call_value(&a1, vec![JsValue::str(&pat), JsValue::Num(at as f64), JsValue::Str(s.clone())])?;
                        to_js_string(&r)
                    } else {
                        to_js_string(&a1).replace("$&", &pat).replace("$$", "$")
                    };
                    out.push_str(&replacement);
                    if out.len() > MAX_STRING_LEN {
                        return range_error("Invalid string length");
                    }
                    let advance = pos + pat.len();
                    if pat.is_empty() {
                        // Empty pattern matches before every character.
                        match rest.chars().next() {
                            Some(c) if name == "replaceAll" => {
                                out.push(c);
                                rest = &rest[c.len_utf8()..];
                                offset += c.len_utf8();
                                continue;
                            }
                            _ => {
                                out.push_str(rest);
                                rest = "";
                                break;
                            }
                        }
                    }
                    rest = &rest[advance..];
                    offset += advance;
                    if name == "replace" {
                        break;
                    }
                }
                out.push_str(rest);
                self.make_string(out)
            }
            "padStart" | "padEnd" => {
                let target = a0.to_number();
                let target = if target.is_nan() { 0 } else { target.max(0.0) as usize };
                if target > MAX_STRING_LEN {
                    return range_error("Invalid string length");
                }
                let fill = match a1 {
                    JsValue::Undefined => " ".to_string(),
                    v => to_js_string(&v),
                };
                let len = s.chars().count();
                if target <= len || fill.is_empty() {
                    return Ok(JsValue::Str(s.clone()));
                }
                let pad: String = fill.chars().cycle().take(target - len).collect();
                self.make_string(if name == "padStart" { pad + s } else { s.to_string() + &pad })
            }
            "repeat" => {
                let n = a0.to_number();
                if n.is_nan() || n < 0.0 || n.is_infinite() {
                    return range_error("Invalid count value");
                }
                let n = n as usize;
                if s.len().saturating_mul(n) > MAX_STRING_LEN {
                    return range_error("Invalid string length");
                }
                self.make_string(s.repeat(n))
            }
            "concat" => {
                let mut out = s.to_string();
                for x in &args {
                    out.push_str(&to_js_string(x));
                    if out.len() > MAX_STRING_LEN {
                        return range_error("Invalid string length");
                    }
                }
                self.make_string(out)
            }
            "localeCompare" => {
                let other = to_js_string(&a0);
                Ok(JsValue::Num(match (**s).cmp(other.as_str()) {
                    Ordering::Less => -1.0,
                    Ordering::Equal => 0.0,
                    Ordering::Greater => 1.0,
                }))
            }
            _ => type_error(format!("{name} is not a function")),
        }
    }

    fn number_method(&mut self, n: f64, name: &'static str, args: Vec<JsValue>) -> R<JsValue> {
        let a0 = arg(&args, 0);
        match name {
            "toFixed" => {
                let digits = if a0.is_nullish() { 0.0 } else { a0.to_number() };
                if !(0.0..=100.0).contains(&digits) {
                    return range_error("toFixed() digits argument must be between 0 and 100");
                }
                if !n.is_finite() || n.abs() >= 1e21 {
                    return Ok(JsValue::str(&number_to_string(n)));
                }
                Ok(JsValue::str(&format!("{:.*}", digits as usize, n)))
            }
            "toString" => {
                let radix = if a0.is_nullish() { 10 } else { a0.to_number() as u32 };
                if !(2..=36).contains(&radix) {
                    return range_error("toString() radix must be between 2 and 36");
                }
                if radix == 10 || !n.is_finite() || n.fract() != 0.0 {
                    return Ok(JsValue::str(&number_to_string(n)));
                }
                let neg = n < 0.0;
                let mut v = n.abs() as u128;
                let mut digits = Vec::new();
                loop {
                    digits.push(std::char::from_digit((v % u128::from(radix)) as u32, radix).unwrap_or('0'));
                    v /= u128::from(radix);
                    if v == 0 {
                        break;
                    }
                }
                if neg {
                    digits.push('-');
                }
                Ok(JsValue::str(&digits.iter().rev().collect::<String>()))
            }
            _ => type_error(format!("{name} is not a function")),
        }
    }

    fn promise_method(&mut self, this: &JsValue, name: &'static str, args: Vec<JsValue>) -> R<JsValue> {
        let settled = match self.await_value(this.clone()) {
            Ok(v) => Ok(v),
            Err(Exc::Throw(e)) => Err(e),
            Err(other) => return Err(other),
        };
        let on_ok = arg(&args, 0);
        let on_err = if name == "then" { arg(&args, 1) } else { arg(&args, 0) };
        let outcome = match (name, settled) {
            ("then", Ok(v)) if on_ok.is_callable() => self.call_value(&on_ok, vec![v]),
            ("then" | "catch", Err(e)) if on_err.is_callable() => self.call_value(&on_err, vec![e]),
            ("finally", s) => {
                if on_ok.is_callable() {
                    self.call_value(&on_ok, vec![])?;
                }
                s.map_err(Exc::Throw)
            }
            (_, s) => s.map_err(Exc::Throw),
        };
        match outcome {
            Ok(v) => match self.await_value(v) {
                Ok(v) => Ok(fulfilled(v)),
                Err(Exc::Throw(e)) => Ok(rejected(e)),
                Err(other) => Err(other),
            },
            Err(Exc::Throw(e)) => Ok(rejected(e)),
            Err(other) => Err(other),
        }
    }
}
